use crate::error::IrError;
use crate::hw::{Family, HardwareDescriptor};
use crate::ir::{register_budget, tile_fits, DType, KernelMode};

/// Mode used when the register tile is chosen without a problem size.
pub fn native_mode(hw: &HardwareDescriptor, dtype: DType) -> KernelMode {
    if hw.registers.has_vector_unit() {
        KernelMode::Vector {
            lanes: hw.lanes(dtype.bits()),
        }
    } else {
        KernelMode::Scalar
    }
}

/// Every feasible `(mr, nr)` in `mode`, largest `mr·nr` first, ties by
/// larger `mr`.
pub fn feasible_tiles(hw: &HardwareDescriptor, mode: KernelMode) -> Vec<(usize, usize)> {
    let lanes = mode.lanes();
    let budget = register_budget(hw, mode);
    let mut out = Vec::new();
    for v in 1..=budget {
        for mr in 1..=budget {
            if tile_fits(mr, v * lanes, lanes, budget) {
                out.push((mr, v * lanes));
            }
        }
    }
    out.sort_by_key(|t| std::cmp::Reverse((t.0 * t.1, t.0)));
    out
}

/// The feasible register tile maximizing `mr·nr`, tie-broken by larger `mr`.
pub fn choose_register_tile(
    hw: &HardwareDescriptor,
    dtype: DType,
) -> Result<(usize, usize), IrError> {
    if hw.family != Family::Cpu {
        return Err(IrError::UnsupportedFamily("gpu".into()));
    }
    let mode = native_mode(hw, dtype);
    feasible_tiles(hw, mode).first().copied().ok_or_else(|| {
        IrError::NoFeasibleTile(format!(
            "{} registers cannot hold one accumulator, one B row and one A broadcast",
            register_budget(hw, mode)
        ))
    })
}

/// The next feasible tile strictly below `(mr, nr)` in the maximizer order.
pub fn next_smaller_tile(
    hw: &HardwareDescriptor,
    mode: KernelMode,
    mr: usize,
    nr: usize,
) -> Option<(usize, usize)> {
    let key = |t: (usize, usize)| (t.0 * t.1, t.0);
    feasible_tiles(hw, mode)
        .into_iter()
        .find(|&t| key(t) < key((mr, nr)) && t.0 <= mr && t.1 <= nr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::parse_descriptor;

    fn c910() -> HardwareDescriptor {
        parse_descriptor(include_str!("../../../../descriptors/c910-like.toml")).unwrap()
    }

    #[test]
    fn budget_examples() {
        assert!(tile_fits(6, 16, 4, 32));
        assert!(!tile_fits(8, 16, 4, 32));
        assert!(tile_fits(1, 4, 4, 4));
    }

    #[test]
    fn c910_maximizer() {
        assert_eq!(choose_register_tile(&c910(), DType::F32).unwrap(), (30, 4));
        assert_eq!(choose_register_tile(&c910(), DType::F64).unwrap(), (30, 2));
    }

    #[test]
    fn four_vector_registers() {
        let mut hw = c910();
        hw.registers.vector_count = 4;
        assert_eq!(choose_register_tile(&hw, DType::F32).unwrap(), (2, 4));
    }

    #[test]
    fn scalar_budget_uses_scalar_count() {
        let mut hw = c910();
        hw.registers.vector_width_bits = 0;
        hw.registers.scalar_count = 20;
        assert_eq!(choose_register_tile(&hw, DType::F32).unwrap(), (14, 1));
    }

    #[test]
    fn too_few_registers_is_an_error() {
        let mut hw = c910();
        hw.registers.vector_width_bits = 0;
        hw.registers.scalar_count = 6;
        assert!(matches!(
            choose_register_tile(&hw, DType::F32),
            Err(IrError::NoFeasibleTile(_))
        ));
    }

    #[test]
    fn shrinking_walks_down() {
        let mode = KernelMode::Vector { lanes: 4 };
        let (mr, nr) = next_smaller_tile(&c910(), mode, 30, 4).unwrap();
        assert!(mr * nr < 120 && mr <= 30 && nr <= 4);
        assert_eq!(next_smaller_tile(&c910(), mode, 1, 4), None);
    }
}
