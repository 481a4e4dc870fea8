//! Structured research-event instrumentation.
//!
//! Every lifecycle outcome (proposal, denial, validation failure, ambiguity,
//! gate transition, execution, scope rejection) emits exactly one typed
//! event. Events carry a common envelope and are strictly ordered per trial
//! by sequence number. The serialized log is the classifier's sole input:
//! one canonical JSON object per line, keys in sorted order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimMillis;

/// Layer tags used on `action.permission_denied`.
pub mod layer {
    /// Excluded from the granted-action surface (never proposed).
    pub const CAPABILITY_SURFACE: &str = "capability-surface";
    /// Denied by the execution pipeline's permission re-check.
    pub const EXECUTION_PIPELINE: &str = "execution-pipeline";
    /// Denied by the consumer's route-level authorization.
    pub const ROUTE_LEVEL: &str = "route-level";
}

/// `failureLayer` values on `action.failed`, named after the
/// interception-depth ladder, plus `planner-dispatch` for failures no
/// architectural layer caused.
pub mod failure_layer {
    pub const VALIDATION_BARRIER: &str = "d2-validation-barrier";
    pub const DOMAIN_SERVICE: &str = "d6-domain-service";
    pub const PLANNER_DISPATCH: &str = "planner-dispatch";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "eventType", content = "payload")]
pub enum EventBody {
    #[serde(rename = "action.proposed")]
    Proposed {
        #[serde(rename = "actionName")]
        action_name: String,
        #[serde(rename = "userRole")]
        user_role: String,
        #[serde(rename = "workspaceId")]
        workspace_id: String,
        #[serde(rename = "scenarioId")]
        scenario_id: String,
        condition: String,
    },
    #[serde(rename = "action.permission_denied")]
    PermissionDenied {
        #[serde(rename = "actionName")]
        action_name: String,
        #[serde(rename = "requiredPermission")]
        required_permission: String,
        #[serde(rename = "userRole")]
        user_role: String,
        layer: String,
    },
    #[serde(rename = "action.validation_failed")]
    ValidationFailed {
        #[serde(rename = "actionName")]
        action_name: String,
        #[serde(rename = "errorType")]
        error_type: String,
        #[serde(rename = "missingFields")]
        missing_fields: Vec<String>,
        #[serde(rename = "validationMessage")]
        validation_message: String,
    },
    #[serde(rename = "action.ambiguity_detected")]
    AmbiguityDetected {
        #[serde(rename = "actionName")]
        action_name: String,
        #[serde(rename = "entityType")]
        entity_type: String,
        #[serde(rename = "candidateCount")]
        candidate_count: usize,
        #[serde(rename = "searchTerm")]
        search_term: String,
    },
    #[serde(rename = "action.confirmation_requested")]
    ConfirmationRequested {
        #[serde(rename = "actionNames")]
        action_names: Vec<String>,
        #[serde(rename = "chatId")]
        chat_id: String,
    },
    #[serde(rename = "action.confirmed")]
    Confirmed {
        #[serde(rename = "actionNames")]
        action_names: Vec<String>,
        #[serde(rename = "chatId")]
        chat_id: String,
        #[serde(rename = "holdDurationMs")]
        hold_duration_ms: u64,
    },
    #[serde(rename = "action.cancelled")]
    Cancelled {
        #[serde(rename = "actionNames")]
        action_names: Vec<String>,
        #[serde(rename = "chatId")]
        chat_id: String,
    },
    #[serde(rename = "action.executed")]
    Executed {
        #[serde(rename = "actionName")]
        action_name: String,
        #[serde(rename = "executionDurationMs")]
        execution_duration_ms: u64,
        #[serde(rename = "resultType")]
        result_type: String,
    },
    #[serde(rename = "action.failed")]
    Failed {
        #[serde(rename = "actionName")]
        action_name: String,
        #[serde(rename = "errorCategory")]
        error_category: String,
        #[serde(rename = "errorMessage")]
        error_message: String,
        #[serde(rename = "failureLayer")]
        failure_layer: String,
    },
    #[serde(rename = "action.scope_rejected")]
    ScopeRejected {
        #[serde(rename = "actionName")]
        action_name: String,
        #[serde(rename = "requestedWorkspaceId")]
        requested_workspace_id: String,
        #[serde(rename = "authenticatedWorkspaces")]
        authenticated_workspaces: Vec<String>,
    },
}

impl EventBody {
    pub fn event_type(&self) -> &'static str {
        match self {
            EventBody::Proposed { .. } => "action.proposed",
            EventBody::PermissionDenied { .. } => "action.permission_denied",
            EventBody::ValidationFailed { .. } => "action.validation_failed",
            EventBody::AmbiguityDetected { .. } => "action.ambiguity_detected",
            EventBody::ConfirmationRequested { .. } => "action.confirmation_requested",
            EventBody::Confirmed { .. } => "action.confirmed",
            EventBody::Cancelled { .. } => "action.cancelled",
            EventBody::Executed { .. } => "action.executed",
            EventBody::Failed { .. } => "action.failed",
            EventBody::ScopeRejected { .. } => "action.scope_rejected",
        }
    }
}

/// One research event: common envelope plus a typed payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResearchEvent {
    pub timestamp: SimMillis,
    pub trace_id: String,
    pub condition: String,
    pub scenario_id: String,
    pub trial_number: u32,
    pub sequence: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("malformed event: missing {0}")]
    MalformedEvent(&'static str),
    #[error("unparseable event line {line}: {message}")]
    Unparseable { line: usize, message: String },
}

/// Append-only per-trial event stream. Single writer; sequence numbers are
/// assigned on append.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    trace_id: String,
    condition: String,
    scenario_id: String,
    trial_number: u32,
    next_sequence: u64,
    events: Vec<ResearchEvent>,
}

impl EventLog {
    pub fn new(trace_id: &str, condition: &str, scenario_id: &str, trial_number: u32) -> Self {
        Self {
            trace_id: trace_id.to_string(),
            condition: condition.to_string(),
            scenario_id: scenario_id.to_string(),
            trial_number,
            next_sequence: 0,
            events: Vec::new(),
        }
    }

    pub fn emit(&mut self, timestamp: SimMillis, body: EventBody) -> Result<(), EventError> {
        if self.trace_id.is_empty() {
            return Err(EventError::MalformedEvent("traceId"));
        }
        if self.condition.is_empty() {
            return Err(EventError::MalformedEvent("condition"));
        }
        if self.scenario_id.is_empty() {
            return Err(EventError::MalformedEvent("scenarioId"));
        }
        let event = ResearchEvent {
            timestamp,
            trace_id: self.trace_id.clone(),
            condition: self.condition.clone(),
            scenario_id: self.scenario_id.clone(),
            trial_number: self.trial_number,
            sequence: self.next_sequence,
            body,
        };
        self.next_sequence += 1;
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[ResearchEvent] {
        &self.events
    }

    /// One canonical JSON object per line, keys sorted.
    pub fn serialize_lines(&self) -> String {
        serialize_events(&self.events)
    }
}

pub fn serialize_events(events: &[ResearchEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_events(lines: &str) -> Result<Vec<ResearchEvent>, EventError> {
    let mut out = Vec::new();
    for (idx, line) in lines.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: ResearchEvent =
            serde_json::from_str(line).map_err(|e| EventError::Unparseable {
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push(event);
    }
    Ok(out)
}

/// Order-preserving filter.
pub fn query<F>(events: &[ResearchEvent], predicate: F) -> Vec<&ResearchEvent>
where
    F: Fn(&ResearchEvent) -> bool,
{
    events.iter().filter(|e| predicate(e)).collect()
}
