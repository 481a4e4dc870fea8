//! Typed action contracts and the action registry.
//!
//! A contract is the whole capability surface for one enterprise operation:
//! name, description, input schema, permission predicate, validator,
//! execute callback, interaction rules, and user-facing result templates.
//! The registry is ordered and name-unique; registration order defines
//! manifest order and every tie-break downstream.
//!
//! The input schema is held behind an `Arc` and shared, unmodified, with
//! the manifest entry built from it — the published schema and the enforced
//! schema are the same value, not copies that can drift.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::authz::PermissionPredicate;
use crate::clock::SimClock;
use crate::host::TrialHost;
use crate::schema::FieldSchema;
use crate::scope::ExecutionContext;

/// Dispatch metadata attached to one action call by the orchestration side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallMeta {
    /// Models a request whose workspace value came from model inference
    /// instead of the application's navigation context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace_override: Option<String>,
    /// Scenario-injected dispatch failure (the call fails before reaching
    /// consumer services), with the failure message to surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_failure: Option<String>,
    /// Simulated execute-stage duration reported on the executed event.
    #[serde(default)]
    pub execution_duration_ms: u64,
}

/// Candidate entity returned by disambiguation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub entity_id: String,
    pub display_name: String,
    pub distinguishing_attributes: BTreeMap<String, String>,
}

/// Failure surfaced by a consumer-side execute callback.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecuteFailure {
    /// Route-level authorization rejected the call (already logged at the
    /// route).
    #[error("Forbidden")]
    RouteForbidden,
    /// Server-side workspace validation rejected the call (already logged
    /// at the route).
    #[error("requested workspace {requested} is not available")]
    ScopeRejected {
        requested: String,
        allowed: Vec<String>,
    },
    /// Domain service rejected the mutation with a deliberately generic
    /// message.
    #[error("{message}")]
    DomainRejected { message: String },
    /// Entity resolution found nothing.
    #[error("no {entity_kind} matches {reference}")]
    NotFound {
        entity_kind: String,
        reference: String,
    },
    /// Entity resolution matched more than one candidate; no mutation until
    /// uniquely resolved.
    #[error("{} candidates match {search_term}", candidates.len())]
    Ambiguous {
        entity_kind: String,
        search_term: String,
        candidates: Vec<EntityCandidate>,
    },
}

/// Compact structured result of a successful execution: only the keys the
/// contract declares, never raw persistence rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    pub result_type: String,
    pub values: BTreeMap<String, String>,
    pub user_facing_message: String,
}

impl ActionResult {
    pub fn new(result_type: &str, values: BTreeMap<String, String>) -> Self {
        Self {
            result_type: result_type.to_string(),
            values,
            user_facing_message: String::new(),
        }
    }
}

/// Fills `{key}` placeholders from the result values.
pub fn render_template(template: &str, values: &BTreeMap<String, String>) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

pub struct ExecuteInput<'a> {
    pub payload: &'a Value,
    pub ctx: &'a ExecutionContext,
    pub meta: &'a CallMeta,
    pub host: &'a mut TrialHost,
}

pub type ExecuteFn = fn(&mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure>;
pub type ValidateFn = fn(&Value, &SimClock) -> Result<(), String>;
pub type NormalizeFn = fn(&mut Value, &SimClock);
pub type BeforeHookFn = fn(&Value, &ExecutionContext) -> Result<(), String>;
pub type AfterHookFn = fn(&Value, &ExecutionContext);

/// One typed action contract.
pub struct ActionSpec {
    pub name: String,
    pub description: String,
    pub input_schema: Arc<Vec<FieldSchema>>,
    pub permission: PermissionPredicate,
    /// Contract-side normalization (defaults the schema cannot express,
    /// synonym mapping) applied before validation.
    pub normalize: Option<NormalizeFn>,
    /// Domain validation, the same rules the consumer enforces for non-AI
    /// workflows.
    pub validate: Option<ValidateFn>,
    pub execute: ExecuteFn,
    pub request_rule: String,
    pub response_rule: String,
    pub final_user_facing_success: String,
    pub final_user_facing_error: String,
    pub before_execution: Option<BeforeHookFn>,
    pub after_execution: Option<AfterHookFn>,
}

impl fmt::Debug for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionSpec")
            .field("name", &self.name)
            .field("permission", &self.permission)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("action {0} is already registered")]
    DuplicateName(String),
}

/// Ordered, name-unique list of contracts. Immutable after startup.
#[derive(Debug, Default)]
pub struct ActionRegistry {
    specs: Vec<ActionSpec>,
}

impl ActionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ActionSpec) -> Result<(), RegistryError> {
        if self.specs.iter().any(|s| s.name == spec.name) {
            return Err(RegistryError::DuplicateName(spec.name));
        }
        self.specs.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ActionSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionSpec> {
        self.specs.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}
