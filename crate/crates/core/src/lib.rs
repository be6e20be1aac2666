//! Tensor-operator generation and auto-tuning.
//!
//! A run proceeds in three steps. First a [`hw::HardwareDescriptor`] is
//! loaded. Second, a blocked [`ir::ScheduleSketch`] and a register-tiled
//! [`ir::KernelIR`] micro-kernel are generated and checked against the
//! reference oracle. Third, the sketch parameters and instruction order are
//! tuned by Monte Carlo tree search.

pub mod bench;
pub mod codegen;
pub mod cost;
pub mod error;
pub mod hw;
pub mod interp;
pub mod ir;
pub mod pipeline;
pub mod tensor;
pub mod tuner;
