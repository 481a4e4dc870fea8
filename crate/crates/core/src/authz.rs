//! Role-based ability model and fail-closed granted-action computation.
//!
//! The ability object is the consumer application's authorization state,
//! passed into the mediation layer as a first-class dependency. The granted
//! action set is the user-specific subset of the registry that the planner
//! surface is later narrowed to. Permission evaluation is fail-closed: a
//! predicate that errors (or panics) excludes its action, it never includes
//! it by default.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::panic::{self, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimMillis;
use crate::contracts::ActionRegistry;
use crate::scope::ExecutionContext;

/// User roles of the reference consumer application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    Standard,
    Restricted,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Standard => "standard",
            Role::Restricted => "restricted",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "admin" => Some(Role::Admin),
            "standard" => Some(Role::Standard),
            "restricted" => Some(Role::Restricted),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A `(verb, subject)` authorization pair, e.g. `create` / `Client`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Grant {
    pub verb: String,
    pub subject: String,
}

impl Grant {
    pub fn new(verb: &str, subject: &str) -> Self {
        Self {
            verb: verb.to_string(),
            subject: subject.to_string(),
        }
    }

    pub fn key(&self) -> String {
        format!("{}:{}", self.verb, self.subject)
    }
}

/// Immutable authorization state for one user. Safe to share across threads;
/// context changes produce a new value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ability {
    pub user_id: String,
    pub role: Role,
    grants: BTreeSet<(String, String)>,
}

impl Ability {
    pub fn new(user_id: &str, role: Role, grants: impl IntoIterator<Item = Grant>) -> Self {
        Self {
            user_id: user_id.to_string(),
            role,
            grants: grants
                .into_iter()
                .map(|g| (g.verb, g.subject))
                .collect(),
        }
    }

    /// Pure membership check over the grant set.
    pub fn can(&self, verb: &str, subject: &str) -> bool {
        self.grants
            .contains(&(verb.to_string(), subject.to_string()))
    }

    pub fn grants(&self) -> impl Iterator<Item = Grant> + '_ {
        self.grants.iter().map(|(v, s)| Grant::new(v, s))
    }

    pub fn grant_pairs(&self) -> &BTreeSet<(String, String)> {
        &self.grants
    }
}

/// Errors a permission predicate may surface; always treated as denial.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("permission check failed: {0}")]
pub struct PermissionCheckError(pub String);

/// Permission predicate carried by an action contract.
///
/// `Grant` is the common case (`ability.can(verb, subject)`); `Func` supports
/// arbitrary predicates, including ones that error. Evaluation is fail-closed
/// in [`evaluate_permission`].
#[derive(Clone)]
pub enum PermissionPredicate {
    Grant { verb: String, subject: String },
    Func(fn(&Ability) -> Result<bool, PermissionCheckError>),
}

impl fmt::Debug for PermissionPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PermissionPredicate::Grant { verb, subject } => {
                write!(f, "Grant({verb}:{subject})")
            }
            PermissionPredicate::Func(_) => f.write_str("Func(..)"),
        }
    }
}

impl PermissionPredicate {
    pub fn grant(verb: &str, subject: &str) -> Self {
        PermissionPredicate::Grant {
            verb: verb.to_string(),
            subject: subject.to_string(),
        }
    }

    /// Human-readable permission requirement, e.g. `create:Client`.
    pub fn requirement(&self) -> String {
        match self {
            PermissionPredicate::Grant { verb, subject } => format!("{verb}:{subject}"),
            PermissionPredicate::Func(_) => "custom".to_string(),
        }
    }
}

/// Fail-closed evaluation: `false` on predicate error or panic.
pub fn evaluate_permission(predicate: &PermissionPredicate, ability: &Ability) -> bool {
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| match predicate {
        PermissionPredicate::Grant { verb, subject } => Ok(ability.can(verb, subject)),
        PermissionPredicate::Func(f) => f(ability),
    }));
    matches!(outcome, Ok(Ok(true)))
}

/// The user-specific subset of registered action names, in registration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantedActionSet {
    pub user_id: String,
    pub workspace_id: String,
    pub tenant_id: String,
    pub action_names: Vec<String>,
    pub computed_at: SimMillis,
}

impl GrantedActionSet {
    pub fn contains(&self, name: &str) -> bool {
        self.action_names.iter().any(|n| n == name)
    }
}

/// Evaluates every registered action's permission predicate against the
/// current ability and returns exactly the passing subset, registration
/// order preserved. Predicates that error or panic are excluded.
pub fn compute_granted_actions(
    registry: &ActionRegistry,
    ability: &Ability,
    ctx: &ExecutionContext,
    now: SimMillis,
) -> GrantedActionSet {
    let action_names = registry
        .iter()
        .filter(|spec| evaluate_permission(&spec.permission, ability))
        .map(|spec| spec.name.clone())
        .collect();
    GrantedActionSet {
        user_id: ctx.user_id.clone(),
        workspace_id: ctx.workspace_id.clone(),
        tenant_id: ctx.tenant_id.clone(),
        action_names,
        computed_at: now,
    }
}

/// Recomputation on workspace switch, role change, or session refresh.
/// The previous set is discarded; the result is always a fresh evaluation
/// under the new inputs.
pub fn recompute_on_context_change(
    _prev: &GrantedActionSet,
    registry: &ActionRegistry,
    new_ability: &Ability,
    new_ctx: &ExecutionContext,
    now: SimMillis,
) -> GrantedActionSet {
    compute_granted_actions(registry, new_ability, new_ctx, now)
}

/// Role → grant-pair table for the reference consumer.
///
/// admin holds every pair; standard everything except `delete:Client`;
/// restricted only `create:Task`, `create:Note`, `update:Client`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantTable {
    roles: BTreeMap<Role, BTreeSet<(String, String)>>,
}

pub const VERBS: [&str; 3] = ["create", "update", "delete"];
pub const SUBJECTS: [&str; 4] = ["Client", "Task", "Invoice", "Note"];

impl GrantTable {
    /// The embedded reference table.
    pub fn reference() -> Self {
        let mut all = BTreeSet::new();
        for verb in VERBS {
            for subject in SUBJECTS {
                all.insert((verb.to_string(), subject.to_string()));
            }
        }
        let mut standard = all.clone();
        standard.remove(&("delete".to_string(), "Client".to_string()));
        let restricted: BTreeSet<(String, String)> = [
            ("create", "Task"),
            ("create", "Note"),
            ("update", "Client"),
        ]
        .into_iter()
        .map(|(v, s)| (v.to_string(), s.to_string()))
        .collect();

        let mut roles = BTreeMap::new();
        roles.insert(Role::Admin, all);
        roles.insert(Role::Standard, standard);
        roles.insert(Role::Restricted, restricted);
        Self { roles }
    }

    /// Loads a table from a config document of the form
    /// `{ "admin": [{"verb": "...", "subject": "..."}, ...], ... }`.
    /// Roles absent from the document fall back to the reference table.
    pub fn from_config(doc: &serde_json::Value) -> Result<Self, GrantTableError> {
        let mut table = Self::reference();
        let obj = doc
            .as_object()
            .ok_or_else(|| GrantTableError::Malformed("top-level object expected".into()))?;
        for (role_name, pairs) in obj {
            let role = Role::parse(role_name)
                .ok_or_else(|| GrantTableError::UnknownRole(role_name.clone()))?;
            let list = pairs
                .as_array()
                .ok_or_else(|| GrantTableError::Malformed(format!("{role_name}: array expected")))?;
            let mut grants = BTreeSet::new();
            for entry in list {
                let verb = entry
                    .get("verb")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| GrantTableError::Malformed("grant missing verb".into()))?;
                let subject = entry
                    .get("subject")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| GrantTableError::Malformed("grant missing subject".into()))?;
                grants.insert((verb.to_string(), subject.to_string()));
            }
            table.roles.insert(role, grants);
        }
        Ok(table)
    }

    pub fn ability_for(&self, user_id: &str, role: Role) -> Ability {
        let grants = self
            .roles
            .get(&role)
            .cloned()
            .unwrap_or_default()
            .into_iter()
            .map(|(v, s)| Grant::new(&v, &s));
        Ability::new(user_id, role, grants)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrantTableError {
    #[error("unknown role: {0}")]
    UnknownRole(String),
    #[error("malformed grant table: {0}")]
    Malformed(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crm;
    use crate::scope::ExecutionContext;
    use serde_json::json;

    fn ctx() -> ExecutionContext {
        let table = GrantTable::reference();
        ExecutionContext::new(
            "tn-1",
            "ws-a",
            "user-admin",
            table.ability_for("user-admin", Role::Admin),
        )
    }

    fn ability(role: Role) -> Ability {
        GrantTable::reference().ability_for("u", role)
    }

    #[test]
    fn admin_can_delete_client() {
        assert!(ability(Role::Admin).can("delete", "Client"));
    }

    #[test]
    fn restricted_cannot_create_client() {
        assert!(!ability(Role::Restricted).can("create", "Client"));
    }

    #[test]
    fn restricted_cannot_create_invoice() {
        assert!(!ability(Role::Restricted).can("create", "Invoice"));
    }

    #[test]
    fn can_is_pure() {
        let a = ability(Role::Standard);
        for _ in 0..3 {
            assert!(a.can("create", "Invoice"));
            assert!(!a.can("delete", "Client"));
        }
    }

    #[test]
    fn grant_table_is_nested_by_role() {
        let table = GrantTable::reference();
        let restricted = table.ability_for("u", Role::Restricted);
        let standard = table.ability_for("u", Role::Standard);
        let admin = table.ability_for("u", Role::Admin);
        assert!(restricted.grant_pairs().is_subset(standard.grant_pairs()));
        assert!(standard.grant_pairs().is_subset(admin.grant_pairs()));
    }

    #[test]
    fn restricted_granted_set_is_3_of_6() {
        let registry = crm::reference_registry();
        let granted =
            compute_granted_actions(&registry, &ability(Role::Restricted), &ctx(), 0);
        assert_eq!(
            granted.action_names,
            vec!["update_client", "create_task", "create_note"]
        );
        assert_eq!(registry.len(), 6);
    }

    #[test]
    fn granted_sets_grow_monotonically_with_grants() {
        let registry = crm::reference_registry();
        let granted = |role| {
            compute_granted_actions(&registry, &ability(role), &ctx(), 0)
                .action_names
                .into_iter()
                .collect::<std::collections::BTreeSet<_>>()
        };
        let restricted = granted(Role::Restricted);
        let standard = granted(Role::Standard);
        let admin = granted(Role::Admin);
        assert!(restricted.is_subset(&standard));
        assert!(standard.is_subset(&admin));
    }

    #[test]
    fn empty_registry_yields_empty_set() {
        let registry = ActionRegistry::new();
        let granted = compute_granted_actions(&registry, &ability(Role::Admin), &ctx(), 0);
        assert!(granted.action_names.is_empty());
    }

    #[test]
    fn erroring_predicate_is_excluded_others_unaffected() {
        let mut registry = crm::reference_registry();
        let mut broken = crm::spec_for_tests("broken_action", "update", "Client");
        broken.permission =
            PermissionPredicate::Func(|_| Err(PermissionCheckError("backend down".into())));
        registry.register(broken).unwrap();

        let granted = compute_granted_actions(&registry, &ability(Role::Admin), &ctx(), 0);
        assert!(!granted.contains("broken_action"));
        assert_eq!(granted.action_names.len(), 6);
    }

    #[test]
    fn panicking_predicate_is_excluded() {
        let prev_hook = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let pred = PermissionPredicate::Func(|_| panic!("boom"));
        let allowed = evaluate_permission(&pred, &ability(Role::Admin));
        std::panic::set_hook(prev_hook);
        assert!(!allowed);
    }

    #[test]
    fn role_upgrade_grows_granted_set_from_3_to_6() {
        let registry = crm::reference_registry();
        let before =
            compute_granted_actions(&registry, &ability(Role::Restricted), &ctx(), 0);
        // Oracle: recompute_on_context_change must equal a fresh computation
        // under the new ability.
        let after = recompute_on_context_change(
            &before,
            &registry,
            &ability(Role::Admin),
            &ctx(),
            10,
        );
        let oracle = compute_granted_actions(&registry, &ability(Role::Admin), &ctx(), 10);
        assert_eq!(after, oracle);
        assert_eq!(before.action_names.len(), 3);
        assert_eq!(after.action_names.len(), 6);
    }

    #[test]
    fn workspace_switch_keeps_names_and_records_new_workspace() {
        let registry = crm::reference_registry();
        let table = GrantTable::reference();
        let a = ability(Role::Standard);
        let ctx_a = ExecutionContext::new("tn-1", "ws-a", "u", table.ability_for("u", Role::Standard));
        let ctx_b = ExecutionContext::new("tn-1", "ws-b", "u", table.ability_for("u", Role::Standard));
        let before = compute_granted_actions(&registry, &a, &ctx_a, 0);
        let after = recompute_on_context_change(&before, &registry, &a, &ctx_b, 5);
        assert_eq!(before.action_names, after.action_names);
        assert_eq!(after.workspace_id, "ws-b");
    }

    #[test]
    fn noop_context_change_differs_only_in_computed_at() {
        let registry = crm::reference_registry();
        let a = ability(Role::Standard);
        let before = compute_granted_actions(&registry, &a, &ctx(), 0);
        let after = recompute_on_context_change(&before, &registry, &a, &ctx(), 99);
        assert_eq!(before.action_names, after.action_names);
        assert_eq!(after.computed_at, 99);
    }

    #[test]
    fn grant_table_loads_from_config_document() {
        let doc = json!({
            "restricted": [
                {"verb": "create", "subject": "Note"}
            ]
        });
        let table = GrantTable::from_config(&doc).unwrap();
        let r = table.ability_for("u", Role::Restricted);
        assert!(r.can("create", "Note"));
        assert!(!r.can("update", "Client"));
        // Unlisted roles keep the embedded defaults.
        assert!(table.ability_for("u", Role::Admin).can("delete", "Client"));
    }

    #[test]
    fn unknown_role_in_config_is_rejected() {
        let doc = json!({ "superuser": [] });
        assert!(matches!(
            GrantTable::from_config(&doc),
            Err(GrantTableError::UnknownRole(_))
        ));
    }
}
