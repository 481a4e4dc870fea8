//! Deterministic scripted planner.
//!
//! Stands in for the orchestration model: consumes the synced action
//! surface, emits tool calls per scenario script, reacts to structured
//! errors, and injects the observed degraded behaviors (wrong-entity
//! guesses, blind retries, hallucinated success) as data rather than
//! chance. A script is an ordered list of turns keyed by trigger; the next
//! unconsumed turn whose trigger matches the current stimulus fires.
//!
//! Scripts may carry a degraded branch. Which flag flips a scenario onto
//! it is part of the script: behavior that only degrades when every
//! guardrail is gone keys on the full flag set, while behavior tied to one
//! layer keys on that layer's flag. This is what keeps single-flag
//! ablations confined to their target family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::flags::FeatureFlags;
use crate::pipeline::ErrorCode;

/// Per-stage simulated costs, loadable as a config document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Model turn: intent interpretation and action selection.
    pub plan_ms: u64,
    /// The mediation path (permission re-check, validation, gate plumbing).
    /// Charged while any portable safety layer is active; dropping every
    /// layer is what buys the unconstrained configuration its speedup.
    pub mediation_ms: u64,
    /// Consumer-side execution.
    pub execute_ms: u64,
    /// Response synthesis.
    pub respond_ms: u64,
    /// Simulated human review time at the confirmation gate.
    pub approval_hold_ms: u64,
    /// Auto-confirm hold; stays under 10ms of simulated time.
    pub auto_confirm_hold_ms: u64,
    /// Multi-call turns dispatch in parallel (duration takes the max);
    /// sequential mode sums instead.
    pub parallel_dispatch: bool,
    /// Manual per-action baseline, in seconds.
    pub manual_action_seconds: BTreeMap<String, u64>,
}

impl Default for TimingConfig {
    fn default() -> Self {
        let manual_action_seconds = [
            ("create_client", 120),
            ("update_client", 82),
            ("delete_client", 60),
            ("create_task", 60),
            ("create_invoice", 150),
            ("create_note", 37),
            ("archive_client", 82),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            plan_ms: 3600,
            mediation_ms: 1500,
            execute_ms: 600,
            respond_ms: 300,
            approval_hold_ms: 12_000,
            auto_confirm_hold_ms: 2,
            parallel_dispatch: true,
            manual_action_seconds,
        }
    }
}

impl TimingConfig {
    pub fn mediation_charge(&self, flags: &FeatureFlags) -> u64 {
        if flags.any_bal_layer_active() {
            self.mediation_ms
        } else {
            0
        }
    }

    /// Full plan-to-response cycle for one action under the given flags.
    pub fn action_cycle_ms(&self, flags: &FeatureFlags) -> u64 {
        self.plan_ms + self.mediation_charge(flags) + self.execute_ms + self.respond_ms
    }

    pub fn manual_ms(&self, action: &str) -> u64 {
        self.manual_action_seconds
            .get(action)
            .copied()
            .unwrap_or(60)
            * 1000
    }
}

/// Simulated duration of one planner turn dispatching `call_count` actions.
/// Parallel turns take the max of the per-call costs; sequential mode sums
/// them.
pub fn simulate_latency(call_count: usize, flags: &FeatureFlags, cfg: &TimingConfig) -> u64 {
    let per_call = cfg.mediation_charge(flags) + cfg.execute_ms;
    let dispatch = if call_count == 0 {
        0
    } else if cfg.parallel_dispatch {
        per_call
    } else {
        per_call * call_count as u64
    };
    cfg.plan_ms + dispatch + cfg.respond_ms
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    BypassPermissionFiltering,
    SkipValidation,
    AutoConfirm,
}

impl FlagKind {
    pub fn is_set(self, flags: &FeatureFlags) -> bool {
        match self {
            FlagKind::BypassPermissionFiltering => flags.bypass_permission_filtering,
            FlagKind::SkipValidation => flags.skip_validation,
            FlagKind::AutoConfirm => flags.auto_confirm,
        }
    }
}

/// When a script's degraded branch takes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTrigger {
    /// Single-branch script; behavior differences emerge from the flags
    /// alone.
    Never,
    /// Degrades only when every safety layer is disabled.
    AllFlags,
    /// Degrades when one specific layer is disabled.
    Flag(FlagKind),
}

impl BranchTrigger {
    pub fn fires(self, flags: &FeatureFlags) -> bool {
        match self {
            BranchTrigger::Never => false,
            BranchTrigger::AllFlags => !flags.any_bal_layer_active(),
            BranchTrigger::Flag(kind) => kind.is_set(flags),
        }
    }
}

/// Runtime lookup resolved at call materialization: models the planner
/// supplying a concrete entity id it believes it knows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadLookup {
    pub field: String,
    pub client_name: String,
}

/// One scripted tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSpec {
    pub action: String,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace_override: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub payload_lookups: Vec<PayloadLookup>,
}

impl CallSpec {
    pub fn new(action: &str, payload: Value) -> Self {
        Self {
            action: action.to_string(),
            payload,
            workspace_override: None,
            inject_failure: None,
            payload_lookups: Vec::new(),
        }
    }

    pub fn with_workspace_override(mut self, workspace: &str) -> Self {
        self.workspace_override = Some(workspace.to_string());
        self
    }

    pub fn with_injected_failure(mut self, message: &str) -> Self {
        self.inject_failure = Some(message.to_string());
        self
    }

    pub fn with_lookup(mut self, field: &str, client_name: &str) -> Self {
        self.payload_lookups.push(PayloadLookup {
            field: field.to_string(),
            client_name: client_name.to_string(),
        });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnTrigger {
    Initial,
    OnUserMessage,
    OnUserReply,
    OnError(ErrorCode),
    OnAmbiguity,
    OnCancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Success,
    Refusal,
    GiveUp,
    HallucinatedSuccess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnEmit {
    Propose(Vec<CallSpec>),
    AskUser { question: String },
    SelectCandidate { display_name: String },
    Respond { text: String, kind: ResponseKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptTurn {
    pub trigger: TurnTrigger,
    pub emit: TurnEmit,
}

impl ScriptTurn {
    pub fn new(trigger: TurnTrigger, emit: TurnEmit) -> Self {
        Self { trigger, emit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerScript {
    pub turns: Vec<ScriptTurn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degraded_turns: Vec<ScriptTurn>,
    pub degraded_trigger: BranchTrigger,
}

impl PlannerScript {
    pub fn single_branch(turns: Vec<ScriptTurn>) -> Self {
        Self {
            turns,
            degraded_turns: Vec::new(),
            degraded_trigger: BranchTrigger::Never,
        }
    }

    pub fn with_degraded(
        turns: Vec<ScriptTurn>,
        trigger: BranchTrigger,
        degraded: Vec<ScriptTurn>,
    ) -> Self {
        Self {
            turns,
            degraded_turns: degraded,
            degraded_trigger: trigger,
        }
    }

    pub fn active_turns(&self, flags: &FeatureFlags) -> &[ScriptTurn] {
        if self.degraded_trigger.fires(flags) && !self.degraded_turns.is_empty() {
            &self.degraded_turns
        } else {
            &self.turns
        }
    }
}

/// What just happened, from the planner's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stimulus {
    Start,
    UserMessage,
    UserReply,
    Error(ErrorCode),
    Ambiguity,
    Cancelled,
}

/// Walks a script: consumes the first unconsumed turn whose trigger
/// matches the stimulus.
#[derive(Debug, Clone)]
pub struct PlannerState {
    turns: Vec<ScriptTurn>,
    consumed: Vec<bool>,
}

impl PlannerState {
    pub fn new(turns: &[ScriptTurn]) -> Self {
        Self {
            turns: turns.to_vec(),
            consumed: vec![false; turns.len()],
        }
    }

    pub fn plan_turn(&mut self, stimulus: Stimulus) -> Option<ScriptTurn> {
        let idx = (0..self.turns.len())
            .find(|&i| !self.consumed[i] && trigger_matches(self.turns[i].trigger, stimulus))?;
        self.consumed[idx] = true;
        Some(self.turns[idx].clone())
    }
}

fn trigger_matches(trigger: TurnTrigger, stimulus: Stimulus) -> bool {
    match (trigger, stimulus) {
        (TurnTrigger::Initial, Stimulus::Start) => true,
        (TurnTrigger::OnUserMessage, Stimulus::UserMessage) => true,
        (TurnTrigger::OnUserReply, Stimulus::UserReply) => true,
        (TurnTrigger::OnError(expected), Stimulus::Error(actual)) => expected == actual,
        (TurnTrigger::OnAmbiguity, Stimulus::Ambiguity) => true,
        (TurnTrigger::OnCancelled, Stimulus::Cancelled) => true,
        _ => false,
    }
}
