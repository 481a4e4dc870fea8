//! Confirmation-gate state machine for supervised workflows.
//!
//! A supervised proposal set enters a pending state bound to its chat
//! context instead of executing. Nothing dispatches until the holder of
//! that exact chat context confirms; cancel clears the state with zero
//! side effects; remove excludes a single action. Terminal states are
//! immutable. Under the auto-confirm flag the gate never populates a
//! pending state: it immediately emits the confirmation with a hold below
//! 10ms of simulated time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimMillis;
use crate::events::EventBody;
use crate::flags::FeatureFlags;
use crate::host::TrialHost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkflowState {
    Pending,
    Confirmed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAction {
    pub action_id: String,
    pub action_name: String,
    /// Index of the materialized call this entry dispatches.
    pub call_ref: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingWorkflow {
    pub pending_confirm_actions: Vec<PendingAction>,
    pub pending_confirm_chat_id: String,
    pub created_at: SimMillis,
    pub state: WorkflowState,
    pub hold_duration_ms: Option<u64>,
}

impl PendingWorkflow {
    pub fn action_names(&self) -> Vec<String> {
        self.pending_confirm_actions
            .iter()
            .map(|a| a.action_name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Immediate,
    Supervised,
}

/// Supervised exactly when the proposal set carries more than one action;
/// single low-risk operations bypass the gate.
pub fn classify_proposals(action_count: usize) -> Classification {
    if action_count > 1 {
        Classification::Supervised
    } else {
        Classification::Immediate
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateDecision {
    /// Immediate classification: dispatch now, no pending state.
    Dispatch(Vec<usize>),
    /// Supervised: held for explicit approval.
    Held(PendingWorkflow),
    /// Supervised under auto-confirm: confirmed without review.
    AutoConfirmed {
        workflow: PendingWorkflow,
        dispatch: Vec<usize>,
        hold_duration_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfirmationError {
    #[error("confirmation from a different chat context")]
    ChatMismatch,
    #[error("workflow is already in a terminal state")]
    AlreadyTerminal,
    #[error("no pending action with id {0}")]
    UnknownAction(String),
}

/// Routes a non-empty proposal set through the gate.
pub fn gate(
    proposals: Vec<PendingAction>,
    chat_id: &str,
    classification: Classification,
    flags: &FeatureFlags,
    auto_hold_ms: u64,
    host: &mut TrialHost,
) -> GateDecision {
    assert!(!proposals.is_empty(), "gate requires proposals");
    match classification {
        Classification::Immediate => {
            GateDecision::Dispatch(proposals.iter().map(|p| p.call_ref).collect())
        }
        Classification::Supervised => {
            let created_at = host.clock.now_ms();
            let mut workflow = PendingWorkflow {
                pending_confirm_actions: proposals,
                pending_confirm_chat_id: chat_id.to_string(),
                created_at,
                state: WorkflowState::Pending,
                hold_duration_ms: None,
            };
            if flags.auto_confirm {
                host.clock.advance(auto_hold_ms);
                let now = host.clock.now_ms();
                host.log
                    .emit(
                        now,
                        EventBody::Confirmed {
                            action_names: workflow.action_names(),
                            chat_id: chat_id.to_string(),
                            hold_duration_ms: auto_hold_ms,
                        },
                    )
                    .expect("envelope complete");
                workflow.state = WorkflowState::Confirmed;
                workflow.hold_duration_ms = Some(auto_hold_ms);
                let dispatch = workflow
                    .pending_confirm_actions
                    .iter()
                    .map(|p| p.call_ref)
                    .collect();
                GateDecision::AutoConfirmed {
                    workflow,
                    dispatch,
                    hold_duration_ms: auto_hold_ms,
                }
            } else {
                let now = host.clock.now_ms();
                host.log
                    .emit(
                        now,
                        EventBody::ConfirmationRequested {
                            action_names: workflow.action_names(),
                            chat_id: chat_id.to_string(),
                        },
                    )
                    .expect("envelope complete");
                GateDecision::Held(workflow)
            }
        }
    }
}

/// Approves a pending workflow from its bound chat context and returns the
/// call refs to dispatch, in order.
pub fn confirm_actions(
    workflow: &mut PendingWorkflow,
    chat_id: &str,
    host: &mut TrialHost,
) -> Result<Vec<usize>, ConfirmationError> {
    if workflow.state != WorkflowState::Pending {
        return Err(ConfirmationError::AlreadyTerminal);
    }
    if workflow.pending_confirm_chat_id != chat_id {
        return Err(ConfirmationError::ChatMismatch);
    }
    let hold = host.clock.now_ms().saturating_sub(workflow.created_at);
    workflow.state = WorkflowState::Confirmed;
    workflow.hold_duration_ms = Some(hold);
    let now = host.clock.now_ms();
    host.log
        .emit(
            now,
            EventBody::Confirmed {
                action_names: workflow.action_names(),
                chat_id: chat_id.to_string(),
                hold_duration_ms: hold,
            },
        )
        .expect("envelope complete");
    Ok(workflow
        .pending_confirm_actions
        .iter()
        .map(|p| p.call_ref)
        .collect())
}

/// Excludes one action from a pending workflow; removing the last action
/// cancels the workflow.
pub fn remove_action(
    workflow: &mut PendingWorkflow,
    action_id: &str,
    host: &mut TrialHost,
) -> Result<(), ConfirmationError> {
    if workflow.state != WorkflowState::Pending {
        return Err(ConfirmationError::AlreadyTerminal);
    }
    let before = workflow.pending_confirm_actions.len();
    workflow
        .pending_confirm_actions
        .retain(|a| a.action_id != action_id);
    if workflow.pending_confirm_actions.len() == before {
        return Err(ConfirmationError::UnknownAction(action_id.to_string()));
    }
    if workflow.pending_confirm_actions.is_empty() {
        return cancel_actions(workflow, host);
    }
    Ok(())
}

/// Clears the pending state without any side effect.
pub fn cancel_actions(
    workflow: &mut PendingWorkflow,
    host: &mut TrialHost,
) -> Result<(), ConfirmationError> {
    if workflow.state != WorkflowState::Pending {
        return Err(ConfirmationError::AlreadyTerminal);
    }
    let hold = host.clock.now_ms().saturating_sub(workflow.created_at);
    workflow.state = WorkflowState::Cancelled;
    workflow.hold_duration_ms = Some(hold);
    let now = host.clock.now_ms();
    host.log
        .emit(
            now,
            EventBody::Cancelled {
                action_names: workflow.action_names(),
                chat_id: workflow.pending_confirm_chat_id.clone(),
            },
        )
        .expect("envelope complete");
    Ok(())
}
