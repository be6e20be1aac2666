use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Advisor, HeuristicAdvisor, ProposalContext, TuningAction};

pub const LLM_ENDPOINT_ENV: &str = "FORGE_LLM_ENDPOINT";
pub const LLM_KEY_ENV: &str = "FORGE_LLM_KEY";

/// Advisor backed by a JSON-over-HTTP language-model service.
///
/// Each call POSTs `{task, config, path, global, width_cap[, candidates]}`
/// where `task` is `propose_action_space` (answer `{"actions": [...]}`) or
/// `select_action` (answer `{"index": n}`). Answers are checked against the
/// legality gate; any transport or validation failure falls back to
/// [`HeuristicAdvisor`] for that call.
#[derive(Debug)]
pub struct LlmAdvisor {
    endpoint: String,
    key: Option<String>,
    agent: ureq::Agent,
    fallback: HeuristicAdvisor,
    /// Calls answered by the fallback.
    pub fallbacks: usize,
}

#[derive(Deserialize)]
struct ActionsReply {
    actions: Vec<TuningAction>,
}

#[derive(Deserialize)]
struct IndexReply {
    index: usize,
}

impl LlmAdvisor {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        LlmAdvisor {
            endpoint: endpoint.into(),
            key,
            agent,
            fallback: HeuristicAdvisor,
            fallbacks: 0,
        }
    }

    /// Endpoint and key from `FORGE_LLM_ENDPOINT` / `FORGE_LLM_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(LLM_ENDPOINT_ENV)
            .ok()
            .filter(|e| !e.is_empty())?;
        Some(LlmAdvisor::new(endpoint, std::env::var(LLM_KEY_ENV).ok()))
    }

    fn request<T: for<'de> Deserialize<'de>>(&self, body: &impl Serialize) -> Option<T> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        req.send_json(body).ok()?.body_mut().read_json::<T>().ok()
    }

    fn context(task: &str, ctx: &ProposalContext<'_>) -> serde_json::Value {
        json!({
            "task": task,
            "config": ctx.config.sketch,
            "path": ctx.path,
            "global": ctx.global,
            "width_cap": ctx.space.width_cap,
        })
    }
}

impl Advisor for LlmAdvisor {
    fn name(&self) -> &'static str {
        "llm"
    }

    fn propose_action_space(
        &mut self,
        ctx: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Vec<TuningAction> {
        let body = Self::context("propose_action_space", ctx);
        let reply: Option<ActionsReply> = self.request(&body);
        let mut actions: Vec<TuningAction> = reply
            .map(|r| {
                r.actions
                    .into_iter()
                    .filter(|a| ctx.admissible(a))
                    .collect()
            })
            .unwrap_or_default();
        if actions.is_empty() {
            self.fallbacks += 1;
            return self.fallback.propose_action_space(ctx, rng);
        }
        actions.truncate(ctx.space.width_cap);
        actions
    }

    fn select_action(
        &mut self,
        candidates: &[TuningAction],
        ctx: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> usize {
        let mut body = Self::context("select_action", ctx);
        body["candidates"] = json!(candidates);
        match self.request::<IndexReply>(&body) {
            Some(r) if r.index < candidates.len() => r.index,
            _ => {
                self.fallbacks += 1;
                self.fallback.select_action(candidates, ctx, rng)
            }
        }
    }
}
