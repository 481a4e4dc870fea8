//! Chat-session orchestration: the one execution path from planner turns
//! through the gate and pipeline to consumer services.
//!
//! Both the evaluation harness and the interactive REPL drive this same
//! loop; they differ only in where approvals and clarification replies
//! come from. Every lifecycle outcome lands in the session's event log, so
//! a REPL transcript replaying a scripted conversation produces the same
//! log as the harness trial.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::confirmation::{
    cancel_actions, classify_proposals, confirm_actions, gate, remove_action, GateDecision,
    PendingAction, PendingWorkflow, WorkflowState,
};
use crate::contracts::{ActionRegistry, CallMeta, EntityCandidate};
use crate::events::{layer, EventBody};
use crate::flags::FeatureFlags;
use crate::host::TrialHost;
use crate::manifest::{Manifest, PermissionSync};
use crate::pipeline::{run_action_with_validation, ErrorCode};
use crate::planner::{
    CallSpec, PlannerScript, PlannerState, ResponseKind, Stimulus, TimingConfig, TurnEmit,
};
use crate::scope::ExecutionContext;

pub const CAPABILITY_REFUSAL: &str = "I don't have that capability yet.";

/// Approval controls available while a workflow is pending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApprovalDecision {
    Confirm,
    Cancel,
    /// Exclude one action (by action name) from the pending workflow.
    Remove(String),
}

/// Supplies approvals and clarification replies to a running conversation.
/// Harness trials feed scripted values; the REPL asks a human.
pub trait Interaction {
    fn next_approval(&mut self, workflow: &PendingWorkflow) -> Option<ApprovalDecision>;
    fn next_reply(&mut self, question: &str) -> Option<String>;
}

/// Scripted approval/reply feed used by harness trials.
#[derive(Debug, Clone, Default)]
pub struct ScriptedInteraction {
    pub approvals: VecDeque<ApprovalDecision>,
    pub replies: VecDeque<String>,
}

impl Interaction for ScriptedInteraction {
    fn next_approval(&mut self, _workflow: &PendingWorkflow) -> Option<ApprovalDecision> {
        self.approvals.pop_front()
    }

    fn next_reply(&mut self, _question: &str) -> Option<String> {
        self.replies.pop_front()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub speaker: Speaker,
    pub text: String,
}

fn assistant(text: String) -> TranscriptLine {
    TranscriptLine {
        speaker: Speaker::Assistant,
        text,
    }
}

fn user(text: String) -> TranscriptLine {
    TranscriptLine {
        speaker: Speaker::User,
        text,
    }
}

/// How the conversation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndState {
    Success,
    Refused,
    GaveUp,
    HallucinatedSuccess,
    Unresolved,
    Cancelled,
    ScriptExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationOutcome {
    pub end_state: EndState,
    pub final_message: String,
    pub turns: u32,
    pub human_interventions: u32,
    /// Plan-to-response cycle of each successfully executed action.
    pub action_cycles_ms: Vec<u64>,
    pub transcript: Vec<TranscriptLine>,
}

struct MaterializedCall {
    source: CallSpec,
    call_id: String,
    action: String,
    payload: Value,
    meta: CallMeta,
}

enum TurnResult {
    Refused(String),
    Succeeded,
    Failed(ErrorCode, String),
    AmbiguityRaised,
    CancelledByUser,
    MissingApproval,
}

/// One mediated chat session.
pub struct ChatSession<'a> {
    registry: &'a ActionRegistry,
    manifest: &'a Manifest,
    surface: PermissionSync,
    ctx: ExecutionContext,
    flags: FeatureFlags,
    timing: TimingConfig,
    chat_id: String,
    scenario_id: String,
    condition: String,
    pub host: TrialHost,
    next_call_id: u64,
    pending_ambiguity: Option<(CallSpec, Vec<EntityCandidate>)>,
    last_success_message: String,
}

impl<'a> ChatSession<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        registry: &'a ActionRegistry,
        manifest: &'a Manifest,
        surface: PermissionSync,
        ctx: ExecutionContext,
        flags: FeatureFlags,
        timing: TimingConfig,
        chat_id: &str,
        scenario_id: &str,
        condition: &str,
        host: TrialHost,
    ) -> Self {
        Self {
            registry,
            manifest,
            surface,
            ctx,
            flags,
            timing,
            chat_id: chat_id.to_string(),
            scenario_id: scenario_id.to_string(),
            condition: condition.to_string(),
            host,
            next_call_id: 0,
            pending_ambiguity: None,
            last_success_message: String::new(),
        }
    }

    pub fn surface(&self) -> &PermissionSync {
        &self.surface
    }

    /// Runs one scripted conversation to completion.
    pub fn run_script(
        &mut self,
        script: &PlannerScript,
        follow_ups: &[String],
        interaction: &mut dyn Interaction,
    ) -> ConversationOutcome {
        let mut state = PlannerState::new(script.active_turns(&self.flags));
        let mut stimulus = Stimulus::Start;
        let mut turns = 0u32;
        let mut interventions = 0u32;
        let mut cycles = Vec::new();
        let mut transcript = Vec::new();
        let mut follow_ups: VecDeque<String> = follow_ups.to_vec().into();
        let mut last_error_message = String::new();

        let (end_state, final_message) = loop {
            let Some(turn) = state.plan_turn(stimulus) else {
                break (EndState::ScriptExhausted, last_error_message);
            };
            let result = match turn.emit {
                TurnEmit::AskUser { question } => {
                    turns += 1;
                    self.host
                        .clock
                        .advance(self.timing.plan_ms + self.timing.respond_ms);
                    transcript.push(assistant(question.clone()));
                    match interaction.next_reply(&question) {
                        Some(reply) => {
                            interventions += 1;
                            transcript.push(user(reply));
                            stimulus = Stimulus::UserReply;
                            continue;
                        }
                        None => break (EndState::Unresolved, question),
                    }
                }
                TurnEmit::Respond { text, kind } => {
                    turns += 1;
                    self.host
                        .clock
                        .advance(self.timing.plan_ms + self.timing.respond_ms);
                    transcript.push(assistant(text.clone()));
                    let end = match kind {
                        ResponseKind::Success => EndState::Success,
                        ResponseKind::Refusal => EndState::Refused,
                        ResponseKind::GiveUp => EndState::GaveUp,
                        ResponseKind::HallucinatedSuccess => EndState::HallucinatedSuccess,
                    };
                    break (end, text);
                }
                TurnEmit::SelectCandidate { display_name } => {
                    let Some((source, candidates)) = self.pending_ambiguity.take() else {
                        break (EndState::ScriptExhausted, last_error_message);
                    };
                    let Some(candidate) =
                        candidates.iter().find(|c| c.display_name == display_name)
                    else {
                        break (EndState::ScriptExhausted, last_error_message);
                    };
                    interventions += 1;
                    transcript.push(user(display_name.clone()));
                    let mut rebuilt = source;
                    if let Some(map) = rebuilt.payload.as_object_mut() {
                        map.remove("clientSearch");
                        map.insert(
                            "clientId".to_string(),
                            Value::String(candidate.entity_id.clone()),
                        );
                    }
                    turns += 1;
                    self.proposal_turn(
                        &[rebuilt],
                        interaction,
                        &mut cycles,
                        &mut interventions,
                        &mut transcript,
                    )
                }
                TurnEmit::Propose(specs) => {
                    turns += 1;
                    self.proposal_turn(
                        &specs,
                        interaction,
                        &mut cycles,
                        &mut interventions,
                        &mut transcript,
                    )
                }
            };

            match result {
                TurnResult::Refused(message) => break (EndState::Refused, message),
                TurnResult::Succeeded => {
                    if let Some(message) = follow_ups.pop_front() {
                        transcript.push(user(message));
                        stimulus = Stimulus::UserMessage;
                    } else {
                        break (EndState::Success, self.last_success_message.clone());
                    }
                }
                TurnResult::Failed(code, message) => {
                    last_error_message = message;
                    stimulus = Stimulus::Error(code);
                }
                TurnResult::AmbiguityRaised => stimulus = Stimulus::Ambiguity,
                TurnResult::CancelledByUser => stimulus = Stimulus::Cancelled,
                TurnResult::MissingApproval => {
                    break (EndState::Unresolved, "awaiting approval".to_string())
                }
            }
        };

        ConversationOutcome {
            end_state,
            final_message,
            turns,
            human_interventions: interventions,
            action_cycles_ms: cycles,
            transcript,
        }
    }

    fn fresh_call_id(&mut self) -> String {
        self.next_call_id += 1;
        format!("call-{:04}", self.next_call_id)
    }

    /// Resolves scripted lookups against the store, modeling a planner
    /// filling in entity ids it believes it knows.
    fn materialize(&mut self, spec: &CallSpec) -> MaterializedCall {
        let mut payload = spec.payload.clone();
        for lookup in &spec.payload_lookups {
            let id = self
                .host
                .store
                .clients
                .values()
                .find(|c| c.name == lookup.client_name)
                .map(|c| c.id.clone())
                .unwrap_or_else(|| "client-9999".to_string());
            if let Some(map) = payload.as_object_mut() {
                map.insert(lookup.field.clone(), Value::String(id));
            }
        }
        MaterializedCall {
            source: spec.clone(),
            call_id: self.fresh_call_id(),
            action: spec.action.clone(),
            payload,
            meta: CallMeta {
                workspace_override: spec.workspace_override.clone(),
                inject_failure: spec.inject_failure.clone(),
                execution_duration_ms: self.timing.execute_ms,
            },
        }
    }

    fn emit_proposed(&mut self, action: &str) {
        let now = self.host.clock.now_ms();
        self.host
            .log
            .emit(
                now,
                EventBody::Proposed {
                    action_name: action.to_string(),
                    user_role: self.ctx.ability.role.as_str().to_string(),
                    workspace_id: self.ctx.workspace_id.clone(),
                    scenario_id: self.scenario_id.clone(),
                    condition: self.condition.clone(),
                },
            )
            .expect("envelope complete");
    }

    /// Surface check, proposal events, gate, dispatch. One planner turn.
    fn proposal_turn(
        &mut self,
        specs: &[CallSpec],
        interaction: &mut dyn Interaction,
        cycles: &mut Vec<u64>,
        interventions: &mut u32,
        transcript: &mut Vec<TranscriptLine>,
    ) -> TurnResult {
        // A scripted call naming an off-surface action becomes a refusal.
        for spec in specs {
            if !self.surface.contains(&spec.action) {
                self.host.clock.advance(self.timing.plan_ms);
                if self.manifest.contains(&spec.action) {
                    // Published but not granted: a capability-surface
                    // exclusion probed by this scenario.
                    let requirement = self
                        .registry
                        .get(&spec.action)
                        .map(|s| s.permission.requirement())
                        .unwrap_or_else(|| "unknown".to_string());
                    let now = self.host.clock.now_ms();
                    self.host
                        .log
                        .emit(
                            now,
                            EventBody::PermissionDenied {
                                action_name: spec.action.clone(),
                                required_permission: requirement,
                                user_role: self.ctx.ability.role.as_str().to_string(),
                                layer: layer::CAPABILITY_SURFACE.to_string(),
                            },
                        )
                        .expect("envelope complete");
                }
                self.host.clock.advance(self.timing.respond_ms);
                transcript.push(assistant(CAPABILITY_REFUSAL.to_string()));
                return TurnResult::Refused(CAPABILITY_REFUSAL.to_string());
            }
        }

        self.host.clock.advance(self.timing.plan_ms);
        let calls: Vec<MaterializedCall> = specs.iter().map(|s| self.materialize(s)).collect();
        for call in &calls {
            self.emit_proposed(&call.action);
        }

        let proposals: Vec<PendingAction> = calls
            .iter()
            .enumerate()
            .map(|(i, call)| PendingAction {
                action_id: call.call_id.clone(),
                action_name: call.action.clone(),
                call_ref: i,
            })
            .collect();
        let classification = classify_proposals(calls.len());
        let chat_id = self.chat_id.clone();
        let decision = gate(
            proposals,
            &chat_id,
            classification,
            &self.flags,
            self.timing.auto_confirm_hold_ms,
            &mut self.host,
        );

        let signal = match decision {
            GateDecision::Dispatch(refs) | GateDecision::AutoConfirmed { dispatch: refs, .. } => {
                self.dispatch_refs(&calls, &refs, cycles)
            }
            GateDecision::Held(mut workflow) => {
                transcript.push(assistant(render_pending(&workflow)));
                loop {
                    let Some(decision) = interaction.next_approval(&workflow) else {
                        return TurnResult::MissingApproval;
                    };
                    *interventions += 1;
                    match decision {
                        ApprovalDecision::Confirm => {
                            self.host.clock.advance(self.timing.approval_hold_ms);
                            transcript.push(user("confirm".to_string()));
                            let refs = confirm_actions(&mut workflow, &chat_id, &mut self.host)
                                .expect("workflow pending with bound chat");
                            break self.dispatch_refs(&calls, &refs, cycles);
                        }
                        ApprovalDecision::Cancel => {
                            self.host.clock.advance(self.timing.approval_hold_ms);
                            transcript.push(user("cancel".to_string()));
                            cancel_actions(&mut workflow, &mut self.host)
                                .expect("workflow pending");
                            self.host.clock.advance(self.timing.respond_ms);
                            return TurnResult::CancelledByUser;
                        }
                        ApprovalDecision::Remove(action_name) => {
                            transcript.push(user(format!("remove {action_name}")));
                            let action_id = workflow
                                .pending_confirm_actions
                                .iter()
                                .find(|a| a.action_name == action_name)
                                .map(|a| a.action_id.clone());
                            if let Some(action_id) = action_id {
                                remove_action(&mut workflow, &action_id, &mut self.host)
                                    .expect("workflow pending");
                            }
                            if workflow.state == WorkflowState::Cancelled {
                                self.host.clock.advance(self.timing.respond_ms);
                                return TurnResult::CancelledByUser;
                            }
                        }
                    }
                }
            }
        };

        self.host.clock.advance(self.timing.respond_ms);
        match signal {
            DispatchSignal::AllSucceeded => TurnResult::Succeeded,
            DispatchSignal::Failed(code, message) => TurnResult::Failed(code, message),
            DispatchSignal::Ambiguous => TurnResult::AmbiguityRaised,
        }
    }

    /// Dispatches the selected calls in order, aborting at the first
    /// failure. Parallel dispatch windows advance the clock by the max of
    /// the per-call costs rather than the sum.
    fn dispatch_refs(
        &mut self,
        calls: &[MaterializedCall],
        refs: &[usize],
        cycles: &mut Vec<u64>,
    ) -> DispatchSignal {
        let per_call = self.timing.mediation_charge(&self.flags) + self.timing.execute_ms;
        let window_start = self.host.clock.now_ms();
        let mut outcome = DispatchSignal::AllSucceeded;

        for &call_ref in refs {
            let call = &calls[call_ref];
            if self.timing.parallel_dispatch {
                self.host.clock.advance(1);
            } else {
                self.host.clock.advance(per_call);
            }
            let spec = self
                .registry
                .get(&call.action)
                .expect("dispatched call is registered");
            debug_assert!(
                self.surface.contains(&call.action),
                "surface closure violated by {}",
                call.action
            );
            let ability = self.ctx.ability.clone();
            let result = run_action_with_validation(
                spec,
                &call.payload,
                &ability,
                &self.ctx,
                &self.flags,
                &call.meta,
                &mut self.host,
            );
            match result.result {
                Ok(action_result) => {
                    cycles.push(self.timing.action_cycle_ms(&self.flags));
                    self.last_success_message = action_result.user_facing_message;
                }
                Err(error) => {
                    outcome = if error.code == ErrorCode::AmbiguousEntity {
                        self.pending_ambiguity = Some((
                            call.source.clone(),
                            error.ambiguous_candidates.unwrap_or_default(),
                        ));
                        DispatchSignal::Ambiguous
                    } else {
                        let message = error.api_message.unwrap_or(error.message);
                        DispatchSignal::Failed(error.code, message)
                    };
                    break;
                }
            }
        }

        if self.timing.parallel_dispatch {
            self.host.clock.jump_to(window_start + per_call);
        }
        outcome
    }
}

enum DispatchSignal {
    AllSucceeded,
    Failed(ErrorCode, String),
    Ambiguous,
}

/// Concrete visualization of a pending workflow.
pub fn render_pending(workflow: &PendingWorkflow) -> String {
    let mut lines = vec!["Planned actions awaiting your approval:".to_string()];
    for (i, action) in workflow.pending_confirm_actions.iter().enumerate() {
        lines.push(format!("  {}. {}", i + 1, action.action_name));
    }
    lines.push("Reply with confirm, cancel, or remove <action>.".to_string());
    lines.join("\n")
}
