//! Staged validation-and-execution pipeline.
//!
//! Stages run in a fixed order: permission re-check, required-field
//! presence from the published schema, domain validation, pre-execution
//! hook, execution through consumer services, post-execution hook. The
//! first failing stage aborts with a typed structured error; no consumer
//! state mutates before the execute stage. The `skip_validation` flag
//! removes stages 1-3, which is exactly how unvalidated payloads reach the
//! execution callback under the unconstrained configuration.

use serde::{Deserialize, Serialize};

use crate::authz::{evaluate_permission, Ability};
use crate::contracts::{
    render_template, ActionResult, ActionSpec, CallMeta, EntityCandidate, ExecuteFailure,
    ExecuteInput,
};
use crate::events::{failure_layer, layer, EventBody};
use crate::flags::FeatureFlags;
use crate::host::TrialHost;
use crate::schema::{apply_defaults, check_types, missing_required};
use crate::scope::{ExecutionContext, ScopedStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    PermissionDenied,
    ArgumentMissing,
    ValidationFailed,
    ExternalApiError,
    AmbiguousEntity,
    NotFound,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::PermissionDenied => "PERMISSION_DENIED",
            ErrorCode::ArgumentMissing => "ARGUMENT_MISSING",
            ErrorCode::ValidationFailed => "VALIDATION_FAILED",
            ErrorCode::ExternalApiError => "EXTERNAL_API_ERROR",
            ErrorCode::AmbiguousEntity => "AMBIGUOUS_ENTITY",
            ErrorCode::NotFound => "NOT_FOUND",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorCode> {
        match s {
            "PERMISSION_DENIED" => Some(ErrorCode::PermissionDenied),
            "ARGUMENT_MISSING" => Some(ErrorCode::ArgumentMissing),
            "VALIDATION_FAILED" => Some(ErrorCode::ValidationFailed),
            "EXTERNAL_API_ERROR" => Some(ErrorCode::ExternalApiError),
            "AMBIGUOUS_ENTITY" => Some(ErrorCode::AmbiguousEntity),
            "NOT_FOUND" => Some(ErrorCode::NotFound),
            _ => None,
        }
    }
}

/// Typed structured failure with machine-readable metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_fields: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguous_candidates: Option<Vec<EntityCandidate>>,
}

impl ActionError {
    pub fn permission_denied(action: &str) -> Self {
        Self {
            code: ErrorCode::PermissionDenied,
            message: format!("not permitted to run {action}"),
            missing_fields: None,
            api_message: None,
            ambiguous_candidates: None,
        }
    }

    /// `missing_fields` is present exactly on this constructor.
    pub fn argument_missing(fields: Vec<String>) -> Self {
        Self {
            code: ErrorCode::ArgumentMissing,
            message: format!("missing fields: {}", fields.join(", ")),
            missing_fields: Some(fields),
            api_message: None,
            ambiguous_candidates: None,
        }
    }

    pub fn validation_failed(message: String) -> Self {
        Self {
            code: ErrorCode::ValidationFailed,
            message,
            missing_fields: None,
            api_message: None,
            ambiguous_candidates: None,
        }
    }

    pub fn external_api(api_message: String) -> Self {
        Self {
            code: ErrorCode::ExternalApiError,
            message: format!("consumer rejected the request: {api_message}"),
            missing_fields: None,
            api_message: Some(api_message),
            ambiguous_candidates: None,
        }
    }

    /// `ambiguous_candidates` is present exactly on this constructor and
    /// always holds at least two entries.
    pub fn ambiguous(search_term: &str, candidates: Vec<EntityCandidate>) -> Self {
        debug_assert!(candidates.len() >= 2);
        Self {
            code: ErrorCode::AmbiguousEntity,
            message: format!(
                "{} candidates match {search_term:?}; disambiguation required",
                candidates.len()
            ),
            missing_fields: None,
            api_message: None,
            ambiguous_candidates: Some(candidates),
        }
    }

    pub fn not_found(entity_kind: &str, reference: &str) -> Self {
        Self {
            code: ErrorCode::NotFound,
            message: format!("no {entity_kind} matches {reference:?}"),
            missing_fields: None,
            api_message: None,
            ambiguous_candidates: None,
        }
    }
}

/// Pipeline stage vocabulary; `stages_passed` is always a prefix of this
/// order. A stage disabled by flags counts as passed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Permission,
    RequiredFields,
    Validate,
    BeforeExecution,
    Execute,
    AfterExecution,
}

pub const STAGE_ORDER: [Stage; 6] = [
    Stage::Permission,
    Stage::RequiredFields,
    Stage::Validate,
    Stage::BeforeExecution,
    Stage::Execute,
    Stage::AfterExecution,
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub result: Result<ActionResult, ActionError>,
    pub stages_passed: Vec<Stage>,
    pub side_effect_performed: bool,
}

impl PipelineOutcome {
    fn failure(error: ActionError, stages_passed: Vec<Stage>) -> Self {
        Self {
            result: Err(error),
            stages_passed,
            side_effect_performed: false,
        }
    }
}

/// Entity lookup request: exactly one of an id or a search term.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySearch {
    pub entity_id: Option<String>,
    pub search_term: Option<String>,
}

impl EntitySearch {
    pub fn from_payload(payload: &serde_json::Value) -> Self {
        Self {
            entity_id: payload
                .get("clientId")
                .and_then(|v| v.as_str())
                .map(String::from),
            search_term: payload
                .get("clientSearch")
                .and_then(|v| v.as_str())
                .map(String::from),
        }
    }

    pub fn reference(&self) -> String {
        self.entity_id
            .clone()
            .or_else(|| self.search_term.clone())
            .unwrap_or_else(|| "(none)".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Unique(String),
    Ambiguous(Vec<EntityCandidate>),
    NotFound,
}

/// Resolves an entity reference inside the bound workspace. An exact id
/// short-circuits; otherwise a case-insensitive substring match runs over
/// display names. More than one match escalates instead of guessing.
pub fn resolve_entity(
    search: &EntitySearch,
    entity_kind: &str,
    store: &ScopedStore<'_>,
) -> Resolution {
    debug_assert_eq!(entity_kind, "client", "client is the only resolvable kind");
    if let Some(id) = &search.entity_id {
        return match store.get_client(id) {
            Some(c) => Resolution::Unique(c.id.clone()),
            None => Resolution::NotFound,
        };
    }
    let Some(term) = &search.search_term else {
        return Resolution::NotFound;
    };
    let matches = store.find_clients_by_name(term);
    match matches.len() {
        0 => Resolution::NotFound,
        1 => Resolution::Unique(matches[0].id.clone()),
        _ => Resolution::Ambiguous(
            matches
                .iter()
                .map(|c| EntityCandidate {
                    entity_id: c.id.clone(),
                    display_name: c.name.clone(),
                    distinguishing_attributes: [
                        ("email".to_string(), c.email.clone()),
                        ("phone".to_string(), c.phone.clone()),
                    ]
                    .into_iter()
                    .collect(),
                })
                .collect(),
        ),
    }
}

/// Runs one action call through the staged pipeline, emitting exactly one
/// research event per outcome.
pub fn run_action_with_validation(
    spec: &ActionSpec,
    payload: &serde_json::Value,
    ability: &Ability,
    ctx: &ExecutionContext,
    flags: &FeatureFlags,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> PipelineOutcome {
    let mut stages = Vec::new();

    // Stage 1: permission re-check at execution time.
    if !flags.skip_validation && !evaluate_permission(&spec.permission, ability) {
        let now = host.clock.now_ms();
        host.log
            .emit(
                now,
                EventBody::PermissionDenied {
                    action_name: spec.name.clone(),
                    required_permission: spec.permission.requirement(),
                    user_role: ability.role.as_str().to_string(),
                    layer: layer::EXECUTION_PIPELINE.to_string(),
                },
            )
            .expect("envelope complete");
        return PipelineOutcome::failure(ActionError::permission_denied(&spec.name), stages);
    }
    stages.push(Stage::Permission);

    // Stage 2: required-field presence from the published schema.
    if !flags.skip_validation {
        let missing = missing_required(&spec.input_schema, payload);
        if !missing.is_empty() {
            let error = ActionError::argument_missing(missing.clone());
            let now = host.clock.now_ms();
            host.log
                .emit(
                    now,
                    EventBody::ValidationFailed {
                        action_name: spec.name.clone(),
                        error_type: ErrorCode::ArgumentMissing.as_str().to_string(),
                        missing_fields: missing,
                        validation_message: error.message.clone(),
                    },
                )
                .expect("envelope complete");
            return PipelineOutcome::failure(error, stages);
        }
    }
    stages.push(Stage::RequiredFields);

    // Stage 3: defaults, contract normalization, and domain validation.
    let working = if flags.skip_validation {
        payload.clone()
    } else {
        let mut working = apply_defaults(&spec.input_schema, payload);
        if let Some(normalize) = spec.normalize {
            normalize(&mut working, &host.clock);
        }
        let type_error = check_types(&spec.input_schema, &working)
            .err()
            .map(|(path, msg)| format!("{path}: {msg}"));
        let domain_error = if type_error.is_none() {
            spec.validate
                .and_then(|validate| validate(&working, &host.clock).err())
        } else {
            None
        };
        if let Some(message) = type_error.or(domain_error) {
            let error = ActionError::validation_failed(message.clone());
            let now = host.clock.now_ms();
            host.log
                .emit(
                    now,
                    EventBody::ValidationFailed {
                        action_name: spec.name.clone(),
                        error_type: ErrorCode::ValidationFailed.as_str().to_string(),
                        missing_fields: Vec::new(),
                        validation_message: message,
                    },
                )
                .expect("envelope complete");
            return PipelineOutcome::failure(error, stages);
        }
        working
    };
    stages.push(Stage::Validate);

    // Stage 4: pre-execution hook; failures map to VALIDATION_FAILED.
    if let Some(before) = spec.before_execution {
        if let Err(message) = before(&working, ctx) {
            let error = ActionError::validation_failed(message.clone());
            let now = host.clock.now_ms();
            host.log
                .emit(
                    now,
                    EventBody::ValidationFailed {
                        action_name: spec.name.clone(),
                        error_type: ErrorCode::ValidationFailed.as_str().to_string(),
                        missing_fields: Vec::new(),
                        validation_message: message,
                    },
                )
                .expect("envelope complete");
            return PipelineOutcome::failure(error, stages);
        }
    }
    stages.push(Stage::BeforeExecution);

    // Stage 5: execution through consumer services.
    if let Some(message) = &meta.inject_failure {
        let now = host.clock.now_ms();
        host.log
            .emit(
                now,
                EventBody::Failed {
                    action_name: spec.name.clone(),
                    error_category: ErrorCode::ExternalApiError.as_str().to_string(),
                    error_message: message.clone(),
                    failure_layer: failure_layer::PLANNER_DISPATCH.to_string(),
                },
            )
            .expect("envelope complete");
        return PipelineOutcome::failure(ActionError::external_api(message.clone()), stages);
    }

    let mut input = ExecuteInput {
        payload: &working,
        ctx,
        meta,
        host,
    };
    let executed = (spec.execute)(&mut input);

    match executed {
        Ok(mut result) => {
            result.user_facing_message =
                render_template(&spec.final_user_facing_success, &result.values);
            stages.push(Stage::Execute);
            let now = host.clock.now_ms();
            host.log
                .emit(
                    now,
                    EventBody::Executed {
                        action_name: spec.name.clone(),
                        execution_duration_ms: meta.execution_duration_ms,
                        result_type: result.result_type.clone(),
                    },
                )
                .expect("envelope complete");
            if let Some(after) = spec.after_execution {
                after(&working, ctx);
            }
            stages.push(Stage::AfterExecution);
            PipelineOutcome {
                result: Ok(result),
                stages_passed: stages,
                side_effect_performed: true,
            }
        }
        Err(failure) => {
            let error = match failure {
                // Route and scope rejections were already logged at their
                // layer; the pipeline only wraps them.
                ExecuteFailure::RouteForbidden => {
                    ActionError::external_api("Forbidden".to_string())
                }
                ExecuteFailure::ScopeRejected { requested, .. } => ActionError::external_api(
                    format!("Requested workspace {requested} is not available"),
                ),
                ExecuteFailure::DomainRejected { message } => {
                    let now = host.clock.now_ms();
                    host.log
                        .emit(
                            now,
                            EventBody::Failed {
                                action_name: spec.name.clone(),
                                error_category: ErrorCode::ExternalApiError.as_str().to_string(),
                                error_message: message.clone(),
                                failure_layer: failure_layer::DOMAIN_SERVICE.to_string(),
                            },
                        )
                        .expect("envelope complete");
                    ActionError::external_api(message)
                }
                ExecuteFailure::NotFound {
                    entity_kind,
                    reference,
                } => {
                    let error = ActionError::not_found(&entity_kind, &reference);
                    let now = host.clock.now_ms();
                    host.log
                        .emit(
                            now,
                            EventBody::Failed {
                                action_name: spec.name.clone(),
                                error_category: ErrorCode::NotFound.as_str().to_string(),
                                error_message: error.message.clone(),
                                failure_layer: failure_layer::VALIDATION_BARRIER.to_string(),
                            },
                        )
                        .expect("envelope complete");
                    error
                }
                ExecuteFailure::Ambiguous {
                    entity_kind,
                    search_term,
                    candidates,
                } => {
                    let now = host.clock.now_ms();
                    host.log
                        .emit(
                            now,
                            EventBody::AmbiguityDetected {
                                action_name: spec.name.clone(),
                                entity_type: entity_kind,
                                candidate_count: candidates.len(),
                                search_term: search_term.clone(),
                            },
                        )
                        .expect("envelope complete");
                    ActionError::ambiguous(&search_term, candidates)
                }
            };
            PipelineOutcome::failure(error, stages)
        }
    }
}
