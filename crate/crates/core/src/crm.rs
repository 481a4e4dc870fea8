//! Reference consumer application: CRM domain entities, domain services,
//! and the route-level controls they sit behind.
//!
//! Execution always enters through `controlled_ctx`: route authorization,
//! then server-side workspace validation, then the scoped store. Domain
//! failures are deliberately generic strings ("Failed to create client") —
//! the consumer contributes containment but not structured feedback; that
//! contrast is the point of keeping them unstructured.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::authz::{Grant, PermissionPredicate};
use crate::clock::SimClock;
use crate::contracts::{
    ActionRegistry, ActionResult, ActionSpec, CallMeta, ExecuteFailure, ExecuteInput,
};
use crate::events::{layer, EventBody};
use crate::host::TrialHost;
use crate::pipeline::{resolve_entity, EntitySearch, Resolution};
use crate::schema::FieldSchema;
use crate::scope::{
    inject_workspace_header, prepare_controlled_request, raw_workspace_request, scoped_store,
    ExecutionContext, ScopeError, ScopedStore,
};

// ---------------------------------------------------------------------------
// Entities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phone {
    pub number: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub is_primary: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Client {
    pub id: String,
    pub name: String,
    pub email: String,
    pub phone: String,
    pub phones: Vec<Phone>,
    pub archived: bool,
    pub tenant_id: String,
    pub workspace_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    Low,
    Medium,
    High,
}

impl Priority {
    pub fn as_str(self) -> &'static str {
        match self {
            Priority::Low => "low",
            Priority::Medium => "medium",
            Priority::High => "high",
        }
    }

    /// Accepts canonical names plus the common synonyms the contracts
    /// normalize (urgent → high, normal → medium).
    pub fn normalize(value: &str) -> Option<Priority> {
        match value.to_lowercase().as_str() {
            "low" => Some(Priority::Low),
            "medium" | "normal" => Some(Priority::Medium),
            "high" | "urgent" => Some(Priority::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub title: String,
    pub due_date: String,
    pub priority: Priority,
    pub assignee: Option<String>,
    pub tenant_id: String,
    pub workspace_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub id: String,
    pub client_id: String,
    pub amount_cents: i64,
    pub tenant_id: String,
    pub workspace_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub client_id: String,
    pub body: String,
    pub tenant_id: String,
    pub workspace_id: String,
}

// ---------------------------------------------------------------------------
// Route boundary
// ---------------------------------------------------------------------------

/// Runs route authorization and workspace validation for one service call
/// and returns the validated execution context. Scope comes from the
/// application context unless the call carries a workspace override, which
/// models a request that circumvented header injection.
fn controlled_ctx(
    action_name: &str,
    requirement: &Grant,
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<ExecutionContext, ExecuteFailure> {
    let user = host
        .user(&ctx.user_id)
        .cloned()
        .ok_or_else(|| ExecuteFailure::DomainRejected {
            message: "Failed to authenticate request".to_string(),
        })?;
    let request = match &meta.workspace_override {
        Some(ws) => raw_workspace_request(ws, &user, action_name, payload),
        None => inject_workspace_header(ctx, &user, action_name, payload),
    };
    match prepare_controlled_request(&request, &ctx.ability, requirement, &host.directory) {
        Ok(validated) => Ok(validated),
        Err(ScopeError::AuthRejected) => {
            let now = host.clock.now_ms();
            host.log
                .emit(
                    now,
                    EventBody::PermissionDenied {
                        action_name: action_name.to_string(),
                        required_permission: requirement.key(),
                        user_role: user.role.as_str().to_string(),
                        layer: layer::ROUTE_LEVEL.to_string(),
                    },
                )
                .expect("envelope complete");
            Err(ExecuteFailure::RouteForbidden)
        }
        Err(ScopeError::ScopeRejected { requested, allowed }) => {
            let now = host.clock.now_ms();
            host.log
                .emit(
                    now,
                    EventBody::ScopeRejected {
                        action_name: action_name.to_string(),
                        requested_workspace_id: requested.clone(),
                        authenticated_workspaces: allowed.clone(),
                    },
                )
                .expect("envelope complete");
            Err(ExecuteFailure::ScopeRejected { requested, allowed })
        }
        Err(_) => Err(ExecuteFailure::DomainRejected {
            message: "Failed to process request".to_string(),
        }),
    }
}

fn resolve_client(
    payload: &Value,
    store: &ScopedStore<'_>,
) -> Result<Client, ExecuteFailure> {
    let search = EntitySearch::from_payload(payload);
    match resolve_entity(&search, "client", store) {
        Resolution::Unique(id) => Ok(store.get_client(&id).cloned().expect("resolved in scope")),
        Resolution::NotFound => Err(ExecuteFailure::NotFound {
            entity_kind: "client".to_string(),
            reference: search.reference(),
        }),
        Resolution::Ambiguous(candidates) => Err(ExecuteFailure::Ambiguous {
            entity_kind: "client".to_string(),
            search_term: search.reference(),
            candidates,
        }),
    }
}

// ---------------------------------------------------------------------------
// Domain services (generic failures by design)
// ---------------------------------------------------------------------------

fn str_field(payload: &Value, key: &str) -> Option<String> {
    payload.get(key).and_then(|v| v.as_str()).map(String::from)
}

/// Normalizes a phones array: type defaults to work, isPrimary to false,
/// and at most one entry keeps the primary flag.
fn normalize_phones(raw: Option<&Value>) -> Option<Vec<Phone>> {
    let items = raw?.as_array()?;
    let mut phones = Vec::new();
    let mut saw_primary = false;
    for item in items {
        let number = item.get("number").and_then(|v| v.as_str())?.to_string();
        let kind = item
            .get("type")
            .and_then(|v| v.as_str())
            .unwrap_or("work")
            .to_string();
        let mut is_primary = item
            .get("isPrimary")
            .and_then(|v| v.as_bool())
            .unwrap_or(false);
        if is_primary && saw_primary {
            is_primary = false;
        }
        saw_primary |= is_primary;
        phones.push(Phone {
            number,
            kind,
            is_primary,
        });
    }
    Some(phones)
}

fn domain_create_client(
    payload: &Value,
    store: &mut ScopedStore<'_>,
) -> Result<Client, ExecuteFailure> {
    let reject = || ExecuteFailure::DomainRejected {
        message: "Failed to create client".to_string(),
    };
    let name = str_field(payload, "name").filter(|s| !s.is_empty()).ok_or_else(reject)?;
    let email = str_field(payload, "email")
        .filter(|s| s.contains('@'))
        .ok_or_else(reject)?;
    let phone = str_field(payload, "phone").filter(|s| !s.is_empty()).ok_or_else(reject)?;
    let phones = normalize_phones(payload.get("phones")).unwrap_or_else(|| {
        vec![Phone {
            number: phone.clone(),
            kind: "work".to_string(),
            is_primary: true,
        }]
    });
    let id = store.next_id("client");
    let client = Client {
        id,
        name,
        email,
        phone,
        phones,
        archived: false,
        tenant_id: String::new(),
        workspace_id: String::new(),
    };
    Ok(store.insert_client(client))
}

fn domain_update_client(
    target: Client,
    changes: &Value,
    store: &mut ScopedStore<'_>,
) -> Result<Client, ExecuteFailure> {
    let reject = || ExecuteFailure::DomainRejected {
        message: "Failed to update client".to_string(),
    };
    let mut updated = target;
    if let Some(name) = str_field(changes, "name") {
        if name.is_empty() {
            return Err(reject());
        }
        updated.name = name;
    }
    if let Some(email) = str_field(changes, "email") {
        if !email.contains('@') {
            return Err(reject());
        }
        updated.email = email;
    }
    if let Some(phone) = str_field(changes, "phone") {
        if phone.is_empty() {
            return Err(reject());
        }
        updated.phone = phone;
    }
    if let Some(phones) = normalize_phones(changes.get("phones")) {
        updated.phones = phones;
    }
    store.update_client(updated).ok_or_else(|| ExecuteFailure::NotFound {
        entity_kind: "client".to_string(),
        reference: "client record".to_string(),
    })
}

fn domain_create_task(
    payload: &Value,
    clock: &SimClock,
    store: &mut ScopedStore<'_>,
) -> Result<Task, ExecuteFailure> {
    let reject = || ExecuteFailure::DomainRejected {
        message: "Failed to create task".to_string(),
    };
    let title = str_field(payload, "title").filter(|s| !s.is_empty()).ok_or_else(reject)?;
    let due_date = match str_field(payload, "dueDate") {
        Some(d) => {
            let parsed =
                chrono::NaiveDate::parse_from_str(&d, "%Y-%m-%d").map_err(|_| reject())?;
            if parsed < clock.today() {
                return Err(reject());
            }
            d
        }
        None => clock.date_in_days(7),
    };
    let priority = match str_field(payload, "priority") {
        Some(p) => Priority::normalize(&p).ok_or_else(reject)?,
        None => Priority::Medium,
    };
    let id = store.next_id("task");
    let task = Task {
        id,
        title,
        due_date,
        priority,
        assignee: str_field(payload, "assignee"),
        tenant_id: String::new(),
        workspace_id: String::new(),
    };
    Ok(store.insert_task(task))
}

fn domain_create_invoice(
    client: &Client,
    payload: &Value,
    store: &mut ScopedStore<'_>,
) -> Result<Invoice, ExecuteFailure> {
    let reject = || ExecuteFailure::DomainRejected {
        message: "Failed to create invoice".to_string(),
    };
    let amount_cents = payload
        .get("amountCents")
        .and_then(|v| v.as_i64())
        .ok_or_else(reject)?;
    if amount_cents <= 0 {
        return Err(reject());
    }
    let id = store.next_id("invoice");
    let invoice = Invoice {
        id,
        client_id: client.id.clone(),
        amount_cents,
        tenant_id: String::new(),
        workspace_id: String::new(),
    };
    Ok(store.insert_invoice(invoice))
}

fn domain_create_note(
    client: &Client,
    payload: &Value,
    store: &mut ScopedStore<'_>,
) -> Result<Note, ExecuteFailure> {
    let reject = || ExecuteFailure::DomainRejected {
        message: "Failed to create note".to_string(),
    };
    let body = str_field(payload, "body").filter(|s| !s.is_empty()).ok_or_else(reject)?;
    let id = store.next_id("note");
    let note = Note {
        id,
        client_id: client.id.clone(),
        body,
        tenant_id: String::new(),
        workspace_id: String::new(),
    };
    Ok(store.insert_note(note))
}

// ---------------------------------------------------------------------------
// Consumer services (the functions execute callbacks invoke)
// ---------------------------------------------------------------------------

pub fn service_create_client(
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<Client, ExecuteFailure> {
    let vctx = controlled_ctx(
        "create_client",
        &Grant::new("create", "Client"),
        payload,
        ctx,
        meta,
        host,
    )?;
    let mut store = scoped_store(&vctx, &mut host.store);
    domain_create_client(payload, &mut store)
}

pub fn service_update_client(
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<Client, ExecuteFailure> {
    let vctx = controlled_ctx(
        "update_client",
        &Grant::new("update", "Client"),
        payload,
        ctx,
        meta,
        host,
    )?;
    let mut store = scoped_store(&vctx, &mut host.store);
    let target = resolve_client(payload, &store)?;
    domain_update_client(target, payload, &mut store)
}

pub fn service_delete_client(
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<Client, ExecuteFailure> {
    let vctx = controlled_ctx(
        "delete_client",
        &Grant::new("delete", "Client"),
        payload,
        ctx,
        meta,
        host,
    )?;
    let mut store = scoped_store(&vctx, &mut host.store);
    let target = resolve_client(payload, &store)?;
    store
        .remove_client(&target.id)
        .ok_or(ExecuteFailure::NotFound {
            entity_kind: "client".to_string(),
            reference: target.id.clone(),
        })
}

pub fn service_create_task(
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<Task, ExecuteFailure> {
    let vctx = controlled_ctx(
        "create_task",
        &Grant::new("create", "Task"),
        payload,
        ctx,
        meta,
        host,
    )?;
    let clock = host.clock;
    let mut store = scoped_store(&vctx, &mut host.store);
    domain_create_task(payload, &clock, &mut store)
}

pub fn service_create_invoice(
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<(Invoice, Client), ExecuteFailure> {
    let vctx = controlled_ctx(
        "create_invoice",
        &Grant::new("create", "Invoice"),
        payload,
        ctx,
        meta,
        host,
    )?;
    let mut store = scoped_store(&vctx, &mut host.store);
    let client = resolve_client(payload, &store)?;
    let invoice = domain_create_invoice(&client, payload, &mut store)?;
    Ok((invoice, client))
}

pub fn service_create_note(
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<(Note, Client), ExecuteFailure> {
    let vctx = controlled_ctx(
        "create_note",
        &Grant::new("create", "Note"),
        payload,
        ctx,
        meta,
        host,
    )?;
    let mut store = scoped_store(&vctx, &mut host.store);
    let client = resolve_client(payload, &store)?;
    let note = domain_create_note(&client, payload, &mut store)?;
    Ok((note, client))
}

pub fn service_archive_client(
    payload: &Value,
    ctx: &ExecutionContext,
    meta: &CallMeta,
    host: &mut TrialHost,
) -> Result<Client, ExecuteFailure> {
    let vctx = controlled_ctx(
        "archive_client",
        &Grant::new("delete", "Client"),
        payload,
        ctx,
        meta,
        host,
    )?;
    let mut store = scoped_store(&vctx, &mut host.store);
    let mut target = resolve_client(payload, &store)?;
    target.archived = true;
    store
        .update_client(target)
        .ok_or(ExecuteFailure::NotFound {
            entity_kind: "client".to_string(),
            reference: "client record".to_string(),
        })
}

// ---------------------------------------------------------------------------
// Action contracts
// ---------------------------------------------------------------------------

fn phones_children() -> Vec<FieldSchema> {
    vec![
        FieldSchema::string("number", true),
        FieldSchema::enum_of("type", &["work", "home", "mobile"], false)
            .with_default(serde_json::json!("work")),
        FieldSchema::boolean("isPrimary", false).with_default(serde_json::json!(false)),
    ]
}

fn client_reference_fields() -> Vec<FieldSchema> {
    vec![
        FieldSchema::string("clientId", false),
        FieldSchema::string("clientSearch", false),
    ]
}

fn validate_client_reference(payload: &Value) -> Result<(), String> {
    let has_id = payload.get("clientId").and_then(|v| v.as_str()).is_some();
    let has_search = payload.get("clientSearch").and_then(|v| v.as_str()).is_some();
    match (has_id, has_search) {
        (true, false) | (false, true) => Ok(()),
        (true, true) => Err("provide either clientId or clientSearch, not both".to_string()),
        (false, false) => Err("provide either clientId or clientSearch".to_string()),
    }
}

fn validate_email_if_present(payload: &Value) -> Result<(), String> {
    if let Some(email) = payload.get("email").and_then(|v| v.as_str()) {
        if !email.contains('@') {
            return Err(format!("email {email:?} is not a valid address"));
        }
    }
    Ok(())
}

fn validate_create_client(payload: &Value, _clock: &SimClock) -> Result<(), String> {
    validate_email_if_present(payload)
}

fn validate_update_client(payload: &Value, _clock: &SimClock) -> Result<(), String> {
    validate_client_reference(payload)?;
    validate_email_if_present(payload)
}

fn validate_reference_only(payload: &Value, _clock: &SimClock) -> Result<(), String> {
    validate_client_reference(payload)
}

fn validate_create_task(payload: &Value, clock: &SimClock) -> Result<(), String> {
    if let Some(due) = payload.get("dueDate").and_then(|v| v.as_str()) {
        let parsed = chrono::NaiveDate::parse_from_str(due, "%Y-%m-%d")
            .map_err(|_| format!("dueDate {due:?} is not a date"))?;
        if parsed < clock.today() {
            return Err(format!("dueDate {due} is in the past"));
        }
    }
    Ok(())
}

fn validate_create_invoice(payload: &Value, _clock: &SimClock) -> Result<(), String> {
    validate_client_reference(payload)?;
    if let Some(cents) = payload.get("amountCents").and_then(|v| v.as_i64()) {
        if cents <= 0 {
            return Err("amountCents must be positive".to_string());
        }
    }
    Ok(())
}

fn normalize_task(payload: &mut Value, clock: &SimClock) {
    let Some(map) = payload.as_object_mut() else {
        return;
    };
    if let Some(p) = map.get("priority").and_then(|v| v.as_str()) {
        if let Some(normalized) = Priority::normalize(p) {
            map.insert(
                "priority".to_string(),
                Value::String(normalized.as_str().to_string()),
            );
        }
    }
    let has_due = matches!(map.get("dueDate"), Some(v) if !v.is_null());
    if !has_due {
        map.insert("dueDate".to_string(), Value::String(clock.date_in_days(7)));
    }
}

fn result_values(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn format_amount(cents: i64) -> String {
    format!("${}.{:02}", cents / 100, (cents % 100).abs())
}

fn exec_create_client(input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    let client = service_create_client(input.payload, input.ctx, input.meta, input.host)?;
    Ok(ActionResult::new(
        "client",
        result_values(&[
            ("clientId", client.id.clone()),
            ("clientName", client.name.clone()),
            ("clientLink", format!("/clients/{}", client.id)),
        ]),
    ))
}

fn exec_update_client(input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    let client = service_update_client(input.payload, input.ctx, input.meta, input.host)?;
    Ok(ActionResult::new(
        "client",
        result_values(&[
            ("clientId", client.id.clone()),
            ("clientName", client.name.clone()),
            ("clientLink", format!("/clients/{}", client.id)),
        ]),
    ))
}

fn exec_delete_client(input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    let client = service_delete_client(input.payload, input.ctx, input.meta, input.host)?;
    Ok(ActionResult::new(
        "client",
        result_values(&[
            ("clientId", client.id.clone()),
            ("clientName", client.name.clone()),
        ]),
    ))
}

fn exec_create_task(input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    let task = service_create_task(input.payload, input.ctx, input.meta, input.host)?;
    Ok(ActionResult::new(
        "task",
        result_values(&[
            ("taskId", task.id.clone()),
            ("taskTitle", task.title.clone()),
            ("taskLink", format!("/tasks/{}", task.id)),
        ]),
    ))
}

fn exec_create_invoice(input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    let (invoice, client) =
        service_create_invoice(input.payload, input.ctx, input.meta, input.host)?;
    Ok(ActionResult::new(
        "invoice",
        result_values(&[
            ("invoiceId", invoice.id.clone()),
            ("clientName", client.name.clone()),
            ("amount", format_amount(invoice.amount_cents)),
            ("invoiceLink", format!("/invoices/{}", invoice.id)),
        ]),
    ))
}

fn exec_create_note(input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    let (note, client) = service_create_note(input.payload, input.ctx, input.meta, input.host)?;
    Ok(ActionResult::new(
        "note",
        result_values(&[
            ("noteId", note.id.clone()),
            ("clientName", client.name.clone()),
            ("noteLink", format!("/notes/{}", note.id)),
        ]),
    ))
}

fn exec_archive_client(input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    let client = service_archive_client(input.payload, input.ctx, input.meta, input.host)?;
    Ok(ActionResult::new(
        "client",
        result_values(&[
            ("clientId", client.id.clone()),
            ("clientName", client.name.clone()),
        ]),
    ))
}

fn create_client_spec() -> ActionSpec {
    ActionSpec {
        name: "create_client".to_string(),
        description: "Create a new client record with contact details".to_string(),
        input_schema: std::sync::Arc::new(vec![
            FieldSchema::string("name", true),
            FieldSchema::string("email", true),
            FieldSchema::string("phone", true),
            FieldSchema::array_of("phones", phones_children(), false),
        ]),
        permission: PermissionPredicate::grant("create", "Client"),
        normalize: None,
        validate: Some(validate_create_client),
        execute: exec_create_client,
        request_rule: "Collect name, email, and phone before calling.".to_string(),
        response_rule: "Report the created client with its link.".to_string(),
        final_user_facing_success: "Created client {clientName}.".to_string(),
        final_user_facing_error: "Could not create the client.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}

fn update_client_spec() -> ActionSpec {
    ActionSpec {
        name: "update_client".to_string(),
        description: "Update fields on an existing client; supports partial updates".to_string(),
        input_schema: std::sync::Arc::new({
            let mut fields = client_reference_fields();
            fields.push(FieldSchema::string("name", false));
            fields.push(FieldSchema::string("email", false));
            fields.push(FieldSchema::string("phone", false));
            fields.push(FieldSchema::array_of("phones", phones_children(), false));
            fields
        }),
        permission: PermissionPredicate::grant("update", "Client"),
        normalize: None,
        validate: Some(validate_update_client),
        execute: exec_update_client,
        request_rule: "Identify the client by clientId or an exact clientSearch term; never guess."
            .to_string(),
        response_rule: "Confirm which client was updated.".to_string(),
        final_user_facing_success: "Updated client {clientName}.".to_string(),
        final_user_facing_error: "Could not update the client.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}

fn delete_client_spec() -> ActionSpec {
    ActionSpec {
        name: "delete_client".to_string(),
        description: "Delete a client record permanently".to_string(),
        input_schema: std::sync::Arc::new(client_reference_fields()),
        permission: PermissionPredicate::grant("delete", "Client"),
        normalize: None,
        validate: Some(validate_reference_only),
        execute: exec_delete_client,
        request_rule: "Identify the client by clientId or clientSearch.".to_string(),
        response_rule: "Confirm the deletion.".to_string(),
        final_user_facing_success: "Deleted client {clientName}.".to_string(),
        final_user_facing_error: "Could not delete the client.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}

fn create_task_spec() -> ActionSpec {
    ActionSpec {
        name: "create_task".to_string(),
        description: "Create a task with due date and priority".to_string(),
        input_schema: std::sync::Arc::new(vec![
            FieldSchema::string("title", true),
            FieldSchema::date("dueDate", false),
            FieldSchema::enum_of("priority", &["low", "medium", "high"], false)
                .with_default(serde_json::json!("medium")),
            FieldSchema::string("assignee", false),
        ]),
        permission: PermissionPredicate::grant("create", "Task"),
        normalize: Some(normalize_task),
        validate: Some(validate_create_task),
        execute: exec_create_task,
        request_rule: "A title is enough; due date defaults a week out.".to_string(),
        response_rule: "Report the created task with its due date.".to_string(),
        final_user_facing_success: "Created task {taskTitle}.".to_string(),
        final_user_facing_error: "Could not create the task.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}

fn create_invoice_spec() -> ActionSpec {
    ActionSpec {
        name: "create_invoice".to_string(),
        description: "Create an invoice for an existing client".to_string(),
        input_schema: std::sync::Arc::new({
            let mut fields = client_reference_fields();
            fields.push(FieldSchema::number("amountCents", true));
            fields
        }),
        permission: PermissionPredicate::grant("create", "Invoice"),
        normalize: None,
        validate: Some(validate_create_invoice),
        execute: exec_create_invoice,
        request_rule: "Identify the client and collect the amount before calling.".to_string(),
        response_rule: "Report the invoice amount and client.".to_string(),
        final_user_facing_success: "Created a {amount} invoice for {clientName}.".to_string(),
        final_user_facing_error: "Could not create the invoice.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}

fn create_note_spec() -> ActionSpec {
    ActionSpec {
        name: "create_note".to_string(),
        description: "Attach a note to an existing client".to_string(),
        input_schema: std::sync::Arc::new({
            let mut fields = client_reference_fields();
            fields.push(FieldSchema::string("body", true));
            fields
        }),
        permission: PermissionPredicate::grant("create", "Note"),
        normalize: None,
        validate: Some(validate_reference_only),
        execute: exec_create_note,
        request_rule: "Identify the client by clientId or clientSearch.".to_string(),
        response_rule: "Confirm the note was added.".to_string(),
        final_user_facing_success: "Added a note for {clientName}.".to_string(),
        final_user_facing_error: "Could not add the note.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}

/// The 7th contract: registered in some configurations but absent from the
/// published manifest, which is what keeps it unselectable.
pub fn archive_client_spec() -> ActionSpec {
    ActionSpec {
        name: "archive_client".to_string(),
        description: "Archive a client record without deleting it".to_string(),
        input_schema: std::sync::Arc::new(client_reference_fields()),
        permission: PermissionPredicate::grant("delete", "Client"),
        normalize: None,
        validate: Some(validate_reference_only),
        execute: exec_archive_client,
        request_rule: "Identify the client by clientId or clientSearch.".to_string(),
        response_rule: "Confirm the archive.".to_string(),
        final_user_facing_success: "Archived client {clientName}.".to_string(),
        final_user_facing_error: "Could not archive the client.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}

/// The six reference contracts, registration order fixed.
pub fn reference_registry() -> ActionRegistry {
    let mut registry = ActionRegistry::new();
    for spec in [
        create_client_spec(),
        update_client_spec(),
        delete_client_spec(),
        create_task_spec(),
        create_invoice_spec(),
        create_note_spec(),
    ] {
        registry.register(spec).expect("unique reference names");
    }
    registry
}

fn exec_noop(_input: &mut ExecuteInput<'_>) -> Result<ActionResult, ExecuteFailure> {
    Ok(ActionResult::new("noop", BTreeMap::new()))
}

/// Minimal spec for registry/manifest tests.
pub fn spec_for_tests(name: &str, verb: &str, subject: &str) -> ActionSpec {
    ActionSpec {
        name: name.to_string(),
        description: format!("test action {name}"),
        input_schema: std::sync::Arc::new(vec![FieldSchema::string("label", false)]),
        permission: PermissionPredicate::grant(verb, subject),
        normalize: None,
        validate: None,
        execute: exec_noop,
        request_rule: String::new(),
        response_rule: String::new(),
        final_user_facing_success: "Done.".to_string(),
        final_user_facing_error: "Failed.".to_string(),
        before_execution: None,
        after_execution: None,
    }
}
