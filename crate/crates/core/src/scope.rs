//! Tenant/workspace context as an execution boundary.
//!
//! Three mechanisms, layered: workspace header injection from the active
//! consumer context (planner-supplied workspace values are ignored),
//! server-side request control (`prepare_controlled_request` validates the
//! requested workspace against the authenticated user's allowed set and
//! derives the tenant), and the scoped persistence handle through which a
//! row outside the bound scope is simply unreachable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::authz::{Ability, Grant, Role};
use crate::crm::{Client, Invoice, Note, Task};

/// First-class scope for one request: tenant, workspace, user, plus the
/// user's authorization state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionContext {
    pub tenant_id: String,
    pub workspace_id: String,
    pub user_id: String,
    pub ability: Ability,
}

impl ExecutionContext {
    pub fn new(tenant_id: &str, workspace_id: &str, user_id: &str, ability: Ability) -> Self {
        Self {
            tenant_id: tenant_id.to_string(),
            workspace_id: workspace_id.to_string(),
            user_id: user_id.to_string(),
            ability,
        }
    }

    pub fn validate(&self) -> Result<(), ScopeError> {
        if self.tenant_id.is_empty() || self.workspace_id.is_empty() || self.user_id.is_empty() {
            return Err(ScopeError::InvalidContext);
        }
        Ok(())
    }
}

/// Authenticated user record as the server sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub display_name: String,
    pub role: Role,
    pub allowed_workspaces: BTreeSet<String>,
}

/// Workspace → tenant mapping of the seeded topology.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceDirectory {
    tenants: BTreeMap<String, String>,
}

impl WorkspaceDirectory {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            tenants: entries.into_iter().collect(),
        }
    }

    pub fn tenant_of(&self, workspace_id: &str) -> Option<&str> {
        self.tenants.get(workspace_id).map(|s| s.as_str())
    }

    pub fn workspaces(&self) -> impl Iterator<Item = &str> {
        self.tenants.keys().map(|s| s.as_str())
    }
}

/// The only shape of request a pipeline execute callback may hand to a
/// domain service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlledRequest {
    pub requested_workspace_id: String,
    pub authenticated_user: UserRecord,
    pub action_name: String,
    pub payload: Value,
}

/// Builds a controlled request from the active consumer context. The
/// workspace identifier always comes from the context, never from
/// model-supplied payload values.
pub fn inject_workspace_header(
    ctx: &ExecutionContext,
    user: &UserRecord,
    action_name: &str,
    payload: &Value,
) -> ControlledRequest {
    ControlledRequest {
        requested_workspace_id: ctx.workspace_id.clone(),
        authenticated_user: user.clone(),
        action_name: action_name.to_string(),
        payload: payload.clone(),
    }
}

/// Builds a request carrying an explicit workspace value, modeling a call
/// path where the application's header injection was circumvented (e.g. a
/// raw API invocation with model-inferred context). Server-side validation
/// is the layer that must catch these.
pub fn raw_workspace_request(
    workspace_id: &str,
    user: &UserRecord,
    action_name: &str,
    payload: &Value,
) -> ControlledRequest {
    ControlledRequest {
        requested_workspace_id: workspace_id.to_string(),
        authenticated_user: user.clone(),
        action_name: action_name.to_string(),
        payload: payload.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScopeError {
    #[error("execution context has empty identifiers")]
    InvalidContext,
    #[error("requested workspace {requested} not in authenticated set")]
    ScopeRejected {
        requested: String,
        allowed: Vec<String>,
    },
    #[error("Forbidden")]
    AuthRejected,
    #[error("unknown workspace {0}")]
    UnknownWorkspace(String),
}

/// Server-side request control: route-level authorization first, then
/// workspace validation against the authenticated user's allowed set, then
/// tenant derivation. Returns the context the handler runs under.
pub fn prepare_controlled_request(
    req: &ControlledRequest,
    ability: &Ability,
    route_requirement: &Grant,
    directory: &WorkspaceDirectory,
) -> Result<ExecutionContext, ScopeError> {
    if !ability.can(&route_requirement.verb, &route_requirement.subject) {
        return Err(ScopeError::AuthRejected);
    }
    if !req
        .authenticated_user
        .allowed_workspaces
        .contains(&req.requested_workspace_id)
    {
        return Err(ScopeError::ScopeRejected {
            requested: req.requested_workspace_id.clone(),
            allowed: req
                .authenticated_user
                .allowed_workspaces
                .iter()
                .cloned()
                .collect(),
        });
    }
    let tenant = directory
        .tenant_of(&req.requested_workspace_id)
        .ok_or_else(|| ScopeError::UnknownWorkspace(req.requested_workspace_id.clone()))?;
    Ok(ExecutionContext::new(
        tenant,
        &req.requested_workspace_id,
        &req.authenticated_user.user_id,
        ability.clone(),
    ))
}

// ---------------------------------------------------------------------------
// Stores
// ---------------------------------------------------------------------------

/// In-memory multi-tenant store. Cloned per trial; rows carry their scope.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RootStore {
    pub clients: BTreeMap<String, Client>,
    pub tasks: BTreeMap<String, Task>,
    pub invoices: BTreeMap<String, Invoice>,
    pub notes: BTreeMap<String, Note>,
    counters: BTreeMap<String, u64>,
}

impl RootStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self, kind: &str) -> String {
        let n = self.counters.entry(kind.to_string()).or_insert(0);
        *n += 1;
        format!("{kind}-{n:04}")
    }
}

/// Scope-bound handle over the root store. Every read filters on the bound
/// (tenant, workspace); every write is stamped with it. Rows outside the
/// scope are unreachable through this handle.
#[derive(Debug)]
pub struct ScopedStore<'a> {
    root: &'a mut RootStore,
    pub tenant_id: String,
    pub workspace_id: String,
}

/// Derives a scope-bound handle for a validated context.
pub fn scoped_store<'a>(ctx: &ExecutionContext, root: &'a mut RootStore) -> ScopedStore<'a> {
    ScopedStore {
        root,
        tenant_id: ctx.tenant_id.clone(),
        workspace_id: ctx.workspace_id.clone(),
    }
}

impl<'a> ScopedStore<'a> {
    fn in_scope(&self, tenant_id: &str, workspace_id: &str) -> bool {
        self.tenant_id == tenant_id && self.workspace_id == workspace_id
    }

    pub fn next_id(&mut self, kind: &str) -> String {
        self.root.next_id(kind)
    }

    pub fn insert_client(&mut self, mut client: Client) -> Client {
        client.tenant_id = self.tenant_id.clone();
        client.workspace_id = self.workspace_id.clone();
        self.root.clients.insert(client.id.clone(), client.clone());
        client
    }

    pub fn get_client(&self, id: &str) -> Option<&Client> {
        self.root
            .clients
            .get(id)
            .filter(|c| self.in_scope(&c.tenant_id, &c.workspace_id))
    }

    pub fn update_client(&mut self, client: Client) -> Option<Client> {
        if !self.in_scope(&client.tenant_id, &client.workspace_id) {
            return None;
        }
        let existing = self.root.clients.get(&client.id)?;
        if !self.in_scope(&existing.tenant_id, &existing.workspace_id) {
            return None;
        }
        self.root.clients.insert(client.id.clone(), client.clone());
        Some(client)
    }

    pub fn remove_client(&mut self, id: &str) -> Option<Client> {
        self.get_client(id)?;
        self.root.clients.remove(id)
    }

    pub fn clients(&self) -> impl Iterator<Item = &Client> {
        self.root
            .clients
            .values()
            .filter(|c| self.in_scope(&c.tenant_id, &c.workspace_id))
    }

    /// Case-insensitive substring match on client display names, scope-bound.
    pub fn find_clients_by_name(&self, term: &str) -> Vec<&Client> {
        let needle = term.to_lowercase();
        self.clients()
            .filter(|c| c.name.to_lowercase().contains(&needle))
            .collect()
    }

    pub fn insert_task(&mut self, mut task: Task) -> Task {
        task.tenant_id = self.tenant_id.clone();
        task.workspace_id = self.workspace_id.clone();
        self.root.tasks.insert(task.id.clone(), task.clone());
        task
    }

    pub fn insert_invoice(&mut self, mut invoice: Invoice) -> Invoice {
        invoice.tenant_id = self.tenant_id.clone();
        invoice.workspace_id = self.workspace_id.clone();
        self.root
            .invoices
            .insert(invoice.id.clone(), invoice.clone());
        invoice
    }

    pub fn insert_note(&mut self, mut note: Note) -> Note {
        note.tenant_id = self.tenant_id.clone();
        note.workspace_id = self.workspace_id.clone();
        self.root.notes.insert(note.id.clone(), note.clone());
        note
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.root
            .tasks
            .values()
            .filter(|t| self.in_scope(&t.tenant_id, &t.workspace_id))
    }
}

// ---------------------------------------------------------------------------
// Snapshots and deltas
// ---------------------------------------------------------------------------

/// Canonical snapshot of the whole store (sorted keys), for byte-level
/// before/after comparison. Also the fixture document format.
pub fn snapshot(store: &RootStore) -> String {
    serde_json::to_string_pretty(store).expect("store serializes")
}

/// Loads seed data from a fixture document (the snapshot format).
pub fn store_from_fixture(doc: &str) -> Result<RootStore, serde_json::Error> {
    serde_json::from_str(doc)
}

/// Natural-key fingerprints of rows added or modified between two store
/// states. Identifiers are excluded so expected deltas can be written
/// without predicting id assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreDelta {
    pub entries: BTreeSet<String>,
}

impl StoreDelta {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fingerprints present here but not in `other`.
    pub fn excess_over(&self, other: &StoreDelta) -> BTreeSet<String> {
        self.entries.difference(&other.entries).cloned().collect()
    }
}

pub fn fingerprint_client(c: &Client) -> String {
    let phones: Vec<String> = c
        .phones
        .iter()
        .map(|p| format!("{}/{}/{}", p.number, p.kind, p.is_primary))
        .collect();
    format!(
        "client|{}|{}|email={}|phone={}|phones=[{}]|archived={}",
        c.workspace_id,
        c.name,
        c.email,
        c.phone,
        phones.join(","),
        c.archived
    )
}

pub fn fingerprint_task(t: &Task) -> String {
    format!(
        "task|{}|{}|due={}|priority={}|assignee={}",
        t.workspace_id,
        t.title,
        t.due_date,
        t.priority.as_str(),
        t.assignee.as_deref().unwrap_or("-")
    )
}

pub fn fingerprint_invoice(i: &Invoice, client_name: &str) -> String {
    format!(
        "invoice|{}|client={}|amount_cents={}",
        i.workspace_id, client_name, i.amount_cents
    )
}

pub fn fingerprint_note(n: &Note, client_name: &str) -> String {
    format!("note|{}|client={}|body={}", n.workspace_id, client_name, n.body)
}

fn client_name_in(store: &RootStore, client_id: &str) -> String {
    store
        .clients
        .get(client_id)
        .map(|c| c.name.clone())
        .unwrap_or_else(|| format!("<{client_id}>"))
}

/// Diffs two store states into added (`+`) and modified (`~`) row
/// fingerprints. Removed rows appear as `-` with the before-state
/// fingerprint.
pub fn diff(before: &RootStore, after: &RootStore) -> StoreDelta {
    let mut entries = BTreeSet::new();

    for (id, c) in &after.clients {
        match before.clients.get(id) {
            None => {
                entries.insert(format!("+{}", fingerprint_client(c)));
            }
            Some(prev) if prev != c => {
                entries.insert(format!("~{}", fingerprint_client(c)));
            }
            _ => {}
        }
    }
    for (id, c) in &before.clients {
        if !after.clients.contains_key(id) {
            entries.insert(format!("-{}", fingerprint_client(c)));
        }
    }

    for (id, t) in &after.tasks {
        match before.tasks.get(id) {
            None => {
                entries.insert(format!("+{}", fingerprint_task(t)));
            }
            Some(prev) if prev != t => {
                entries.insert(format!("~{}", fingerprint_task(t)));
            }
            _ => {}
        }
    }
    for (id, i) in &after.invoices {
        let name = client_name_in(after, &i.client_id);
        match before.invoices.get(id) {
            None => {
                entries.insert(format!("+{}", fingerprint_invoice(i, &name)));
            }
            Some(prev) if prev != i => {
                entries.insert(format!("~{}", fingerprint_invoice(i, &name)));
            }
            _ => {}
        }
    }
    for (id, n) in &after.notes {
        let name = client_name_in(after, &n.client_id);
        match before.notes.get(id) {
            None => {
                entries.insert(format!("+{}", fingerprint_note(n, &name)));
            }
            Some(prev) if prev != n => {
                entries.insert(format!("~{}", fingerprint_note(n, &name)));
            }
            _ => {}
        }
    }

    StoreDelta { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authz::GrantTable;
    use crate::crm::Phone;
    use serde_json::json;

    fn directory() -> WorkspaceDirectory {
        WorkspaceDirectory::new([
            ("ws-a".to_string(), "tn-1".to_string()),
            ("ws-b".to_string(), "tn-1".to_string()),
        ])
    }

    fn user(allowed: &[&str], role: Role) -> UserRecord {
        UserRecord {
            user_id: "u-1".into(),
            display_name: "Sam".into(),
            role,
            allowed_workspaces: allowed.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn ability(role: Role) -> Ability {
        GrantTable::reference().ability_for("u-1", role)
    }

    fn ctx(ws: &str) -> ExecutionContext {
        ExecutionContext::new("tn-1", ws, "u-1", ability(Role::Standard))
    }

    fn client(id: &str, ws: &str, name: &str) -> Client {
        Client {
            id: id.into(),
            name: name.into(),
            email: format!("{}@example.com", id),
            phone: "555-0000".into(),
            phones: vec![Phone {
                number: "555-0000".into(),
                kind: "work".into(),
                is_primary: true,
            }],
            archived: false,
            tenant_id: "tn-1".into(),
            workspace_id: ws.into(),
        }
    }

    #[test]
    fn request_for_disallowed_workspace_is_scope_rejected() {
        let req = raw_workspace_request("ws-b", &user(&["ws-a"], Role::Standard), "update_client", &json!({}));
        let err = prepare_controlled_request(
            &req,
            &ability(Role::Standard),
            &Grant::new("update", "Client"),
            &directory(),
        )
        .unwrap_err();
        assert!(matches!(err, ScopeError::ScopeRejected { requested, .. } if requested == "ws-b"));
    }

    #[test]
    fn request_for_allowed_workspace_binds_that_workspace() {
        let req = raw_workspace_request("ws-b", &user(&["ws-a", "ws-b"], Role::Standard), "update_client", &json!({}));
        let ctx = prepare_controlled_request(
            &req,
            &ability(Role::Standard),
            &Grant::new("update", "Client"),
            &directory(),
        )
        .unwrap();
        assert_eq!(ctx.workspace_id, "ws-b");
        assert_eq!(ctx.tenant_id, "tn-1");
    }

    #[test]
    fn restricted_user_is_forbidden_at_the_route() {
        let req = raw_workspace_request("ws-a", &user(&["ws-a"], Role::Restricted), "create_client", &json!({}));
        let err = prepare_controlled_request(
            &req,
            &ability(Role::Restricted),
            &Grant::new("create", "Client"),
            &directory(),
        )
        .unwrap_err();
        assert_eq!(err, ScopeError::AuthRejected);
        assert_eq!(err.to_string(), "Forbidden");
    }

    #[test]
    fn header_injection_ignores_planner_supplied_workspace() {
        let payload = json!({"workspaceId": "ws-b", "name": "Acme"});
        let req = inject_workspace_header(&ctx("ws-a"), &user(&["ws-a"], Role::Standard), "create_client", &payload);
        assert_eq!(req.requested_workspace_id, "ws-a");
    }

    #[test]
    fn scoped_reads_see_only_their_workspace() {
        let mut root = RootStore::new();
        root.clients.insert("c1".into(), client("c1", "ws-a", "Acme"));
        root.clients.insert("c2".into(), client("c2", "ws-b", "Acme"));

        // Oracle: filter the root store by scope directly.
        let expected: Vec<String> = root
            .clients
            .values()
            .filter(|c| c.workspace_id == "ws-a")
            .map(|c| c.id.clone())
            .collect();

        let ctx = ctx("ws-a");
        let store = scoped_store(&ctx, &mut root);
        let got: Vec<String> = store.clients().map(|c| c.id.clone()).collect();
        assert_eq!(got, expected);
        assert_eq!(got, vec!["c1"]);
    }

    #[test]
    fn writes_are_stamped_with_the_bound_scope() {
        let mut root = RootStore::new();
        let ctx = ctx("ws-a");
        let mut store = scoped_store(&ctx, &mut root);
        let mut c = client("c9", "ws-b", "Driftwood");
        c.tenant_id = "tn-9".into();
        let written = store.insert_client(c);
        assert_eq!(written.workspace_id, "ws-a");
        assert_eq!(written.tenant_id, "tn-1");
    }

    #[test]
    fn updating_a_foreign_row_through_a_scoped_handle_is_not_found() {
        let mut root = RootStore::new();
        root.clients.insert("c2".into(), client("c2", "ws-b", "Acme"));
        let ctx = ctx("ws-a");
        let mut store = scoped_store(&ctx, &mut root);
        assert!(store.get_client("c2").is_none());
        let mut updated = client("c2", "ws-b", "Acme Updated");
        updated.workspace_id = "ws-a".into();
        assert!(store.update_client(updated).is_none());
        assert_eq!(root.clients["c2"].name, "Acme");
    }

    #[test]
    fn fixture_document_round_trips_through_the_snapshot_format() {
        let mut store = RootStore::new();
        store.clients.insert("c1".into(), client("c1", "ws-a", "Acme"));
        let doc = snapshot(&store);
        let loaded = store_from_fixture(&doc).unwrap();
        assert_eq!(loaded, store);
    }

    #[test]
    fn diff_reports_adds_and_modifications_by_natural_key() {
        let mut before = RootStore::new();
        before.clients.insert("c1".into(), client("c1", "ws-a", "Acme"));
        let mut after = before.clone();
        after.clients.get_mut("c1").unwrap().phone = "555-0199".into();
        after.clients.insert("c2".into(), client("c2", "ws-a", "Globex"));

        let delta = diff(&before, &after);
        assert_eq!(delta.entries.len(), 2);
        assert!(delta.entries.iter().any(|e| e.starts_with("+client|ws-a|Globex")));
        assert!(delta
            .entries
            .iter()
            .any(|e| e.starts_with("~client|ws-a|Acme") && e.contains("phone=555-0199")));
    }
}
