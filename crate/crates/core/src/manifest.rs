//! Metadata-only capability manifest: build, explicit publish, version
//! listing, rollback, and permission synchronization.
//!
//! The manifest carries names, descriptions, input schemas, and interaction
//! rules; execution callbacks, permission predicates, and validators stay
//! local. Publication is an explicit operator step, so a newly registered
//! action is invisible to the planner until the manifest is republished.
//! The planner surface is always `granted ∩ published`, in manifest order.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authz::GrantedActionSet;
use crate::clock::SimMillis;
use crate::contracts::ActionRegistry;
use crate::flags::FeatureFlags;
use crate::schema::FieldSchema;

/// One published capability entry. Metadata only, by construction: there is
/// no field a callback or predicate could live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestEntry {
    pub name: String,
    pub description: String,
    pub input_schema: Arc<Vec<FieldSchema>>,
    pub request_rule: String,
    pub response_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    /// 0 on an unpublished draft; assigned on publish, strictly increasing
    /// per tenant.
    pub version: u32,
    pub tenant_id: String,
    pub entries: Vec<ManifestEntry>,
    pub published_at: SimMillis,
}

impl Manifest {
    pub fn entry_names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }

    pub fn is_published(&self) -> bool {
        self.version > 0
    }

    /// Canonical manifest document (stable key order).
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_document(doc: &str) -> Result<Manifest, ManifestError> {
        serde_json::from_str(doc).map_err(|e| ManifestError::MalformedDocument(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("no active connection")]
    NoConnection,
    #[error("unknown tenant {0}")]
    InvalidTenant(String),
    #[error("unknown manifest version {0}")]
    UnknownVersion(u32),
    #[error("no published manifest")]
    NoPublishedManifest,
    #[error("malformed manifest document: {0}")]
    MalformedDocument(String),
}

/// Extracts a metadata-only draft from the registered action set,
/// registration order preserved. The entry schema is the contract's schema
/// value itself (shared pointer), not a copy that could drift.
pub fn build_manifest(registry: &ActionRegistry) -> Result<Manifest, ManifestError> {
    if registry.is_empty() {
        return Err(ManifestError::EmptyRegistry);
    }
    Ok(Manifest {
        version: 0,
        tenant_id: String::new(),
        entries: registry
            .iter()
            .map(|spec| ManifestEntry {
                name: spec.name.clone(),
                description: spec.description.clone(),
                input_schema: Arc::clone(&spec.input_schema),
                request_rule: spec.request_rule.clone(),
                response_rule: spec.response_rule.clone(),
            })
            .collect(),
        published_at: 0,
    })
}

/// Simulated connection handle required by the publish step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectionState {
    pub active: bool,
}

/// Append-only per-tenant manifest history with an active-version pointer.
#[derive(Debug, Clone, Default)]
pub struct ManifestStore {
    tenants: BTreeMap<String, TenantManifests>,
    known_tenants: Vec<String>,
}

#[derive(Debug, Clone, Default)]
struct TenantManifests {
    versions: Vec<Manifest>,
    active: Option<u32>,
}

impl ManifestStore {
    pub fn new(known_tenants: impl IntoIterator<Item = String>) -> Self {
        Self {
            tenants: BTreeMap::new(),
            known_tenants: known_tenants.into_iter().collect(),
        }
    }

    /// Explicit operator-triggered publication: requires an active
    /// connection and a valid tenant; assigns the next version and makes it
    /// the active planner surface.
    pub fn publish_manifest(
        &mut self,
        draft: Manifest,
        connection: ConnectionState,
        tenant_id: &str,
        now: SimMillis,
    ) -> Result<Manifest, ManifestError> {
        if !connection.active {
            return Err(ManifestError::NoConnection);
        }
        if !self.known_tenants.iter().any(|t| t == tenant_id) {
            return Err(ManifestError::InvalidTenant(tenant_id.to_string()));
        }
        let slot = self.tenants.entry(tenant_id.to_string()).or_default();
        let version = slot.versions.last().map(|m| m.version).unwrap_or(0) + 1;
        let mut published = draft;
        published.version = version;
        published.tenant_id = tenant_id.to_string();
        published.published_at = now;
        slot.versions.push(published.clone());
        slot.active = Some(version);
        Ok(published)
    }

    /// Reloads an already-published manifest into the store (state
    /// reconstruction from a manifest directory). Versions must arrive in
    /// ascending order; the newest becomes active.
    pub fn restore_published(&mut self, manifest: Manifest) {
        let slot = self.tenants.entry(manifest.tenant_id.clone()).or_default();
        slot.active = Some(manifest.version);
        slot.versions.push(manifest);
    }

    pub fn list_versions(&self, tenant_id: &str) -> Vec<u32> {
        self.tenants
            .get(tenant_id)
            .map(|t| t.versions.iter().map(|m| m.version).collect())
            .unwrap_or_default()
    }

    /// Re-activates an earlier version; subsequent planner surfaces derive
    /// from it.
    pub fn rollback(&mut self, tenant_id: &str, version: u32) -> Result<&Manifest, ManifestError> {
        let slot = self
            .tenants
            .get_mut(tenant_id)
            .ok_or(ManifestError::UnknownVersion(version))?;
        if !slot.versions.iter().any(|m| m.version == version) {
            return Err(ManifestError::UnknownVersion(version));
        }
        slot.active = Some(version);
        Ok(slot
            .versions
            .iter()
            .find(|m| m.version == version)
            .expect("checked above"))
    }

    pub fn active(&self, tenant_id: &str) -> Option<&Manifest> {
        let slot = self.tenants.get(tenant_id)?;
        let version = slot.active?;
        slot.versions.iter().find(|m| m.version == version)
    }
}

/// Planner-facing action surface for one user, derived from a published
/// manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionSync {
    pub granted_action_names: Vec<String>,
    pub tenant_id: String,
    pub workspace_id: String,
    pub user_id: String,
    pub synced_against_version: u32,
}

impl PermissionSync {
    pub fn contains(&self, name: &str) -> bool {
        self.granted_action_names.iter().any(|n| n == name)
    }
}

/// Narrows the published manifest to the user's granted actions, in
/// manifest order. Under the bypass flag the surface is every published
/// name — but never a name outside the manifest.
pub fn sync_permissions(
    granted: &GrantedActionSet,
    manifest: &Manifest,
    flags: &FeatureFlags,
) -> Result<PermissionSync, ManifestError> {
    if !manifest.is_published() {
        return Err(ManifestError::NoPublishedManifest);
    }
    let names = manifest
        .entry_names()
        .into_iter()
        .filter(|name| flags.bypass_permission_filtering || granted.contains(name))
        .collect();
    Ok(PermissionSync {
        granted_action_names: names,
        tenant_id: granted.tenant_id.clone(),
        workspace_id: granted.workspace_id.clone(),
        user_id: granted.user_id.clone(),
        synced_against_version: manifest.version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authz::{compute_granted_actions, GrantTable, Role};
    use crate::crm;
    use crate::scope::ExecutionContext;

    fn ctx(role: Role) -> ExecutionContext {
        ExecutionContext::new(
            "tn-1",
            "ws-a",
            "u",
            GrantTable::reference().ability_for("u", role),
        )
    }

    fn published_reference() -> (ManifestStore, Manifest) {
        let registry = crm::reference_registry();
        let draft = build_manifest(&registry).unwrap();
        let mut store = ManifestStore::new(["tn-1".to_string()]);
        let published = store
            .publish_manifest(draft, ConnectionState { active: true }, "tn-1", 0)
            .unwrap();
        (store, published)
    }

    #[test]
    fn six_action_registry_builds_six_metadata_entries() {
        let registry = crm::reference_registry();
        let draft = build_manifest(&registry).unwrap();
        assert_eq!(draft.entries.len(), 6);
        let doc = draft.to_document();
        for marker in ["permission", "validate", "execute", "finalUserFacing"] {
            assert!(!doc.contains(marker), "callback marker {marker} leaked");
        }
    }

    #[test]
    fn entry_schema_is_the_contract_schema_by_identity() {
        let registry = crm::reference_registry();
        let draft = build_manifest(&registry).unwrap();
        for (spec, entry) in registry.iter().zip(&draft.entries) {
            assert!(Arc::ptr_eq(&spec.input_schema, &entry.input_schema));
        }
    }

    #[test]
    fn empty_registry_cannot_build() {
        let registry = ActionRegistry::new();
        assert_eq!(build_manifest(&registry), Err(ManifestError::EmptyRegistry));
    }

    #[test]
    fn first_publish_is_version_one() {
        let (_, published) = published_reference();
        assert_eq!(published.version, 1);
    }

    #[test]
    fn locally_registered_action_stays_invisible_until_republished() {
        let (store, _) = published_reference();
        // A 7th action exists in the registry now, but the active manifest
        // predates it.
        let mut registry = crm::reference_registry();
        registry.register(crm::archive_client_spec()).unwrap();
        let active = store.active("tn-1").unwrap();
        assert_eq!(active.entries.len(), 6);
        assert!(!active.contains("archive_client"));

        let granted = compute_granted_actions(&registry, &ctx(Role::Admin).ability, &ctx(Role::Admin), 0);
        assert!(granted.contains("archive_client"));
        let sync = sync_permissions(&granted, active, &FeatureFlags::all_off()).unwrap();
        assert!(!sync.contains("archive_client"));
        // The bypass flag widens to all manifest names, never beyond them.
        let bypassed = sync_permissions(&granted, active, &FeatureFlags::all_on()).unwrap();
        assert!(!bypassed.contains("archive_client"));
    }

    #[test]
    fn publish_requires_an_active_connection() {
        let registry = crm::reference_registry();
        let draft = build_manifest(&registry).unwrap();
        let mut store = ManifestStore::new(["tn-1".to_string()]);
        assert_eq!(
            store.publish_manifest(draft, ConnectionState { active: false }, "tn-1", 0),
            Err(ManifestError::NoConnection)
        );
    }

    #[test]
    fn publish_rejects_an_unknown_tenant() {
        let registry = crm::reference_registry();
        let draft = build_manifest(&registry).unwrap();
        let mut store = ManifestStore::new(["tn-1".to_string()]);
        assert_eq!(
            store.publish_manifest(draft, ConnectionState { active: true }, "tn-9", 0),
            Err(ManifestError::InvalidTenant("tn-9".into()))
        );
    }

    #[test]
    fn versions_increase_and_rollback_reactivates() {
        let registry = crm::reference_registry();
        let mut store = ManifestStore::new(["tn-1".to_string()]);
        let conn = ConnectionState { active: true };
        store
            .publish_manifest(build_manifest(&registry).unwrap(), conn, "tn-1", 0)
            .unwrap();
        store
            .publish_manifest(build_manifest(&registry).unwrap(), conn, "tn-1", 5)
            .unwrap();
        assert_eq!(store.list_versions("tn-1"), vec![1, 2]);
        store.rollback("tn-1", 1).unwrap();
        assert_eq!(store.active("tn-1").unwrap().version, 1);
    }

    #[test]
    fn rollback_to_a_missing_version_fails() {
        let (mut store, _) = published_reference();
        assert_eq!(
            store.rollback("tn-1", 9).unwrap_err(),
            ManifestError::UnknownVersion(9)
        );
    }

    #[test]
    fn sync_after_rollback_excludes_later_only_actions() {
        let mut registry6 = crm::reference_registry();
        let mut store = ManifestStore::new(["tn-1".to_string()]);
        let conn = ConnectionState { active: true };
        let v1 = store
            .publish_manifest(build_manifest(&registry6).unwrap(), conn, "tn-1", 0)
            .unwrap();
        registry6.register(crm::archive_client_spec()).unwrap();
        store
            .publish_manifest(build_manifest(&registry6).unwrap(), conn, "tn-1", 5)
            .unwrap();
        store.rollback("tn-1", 1).unwrap();

        let ctx = ctx(Role::Admin);
        let granted = compute_granted_actions(&registry6, &ctx.ability, &ctx, 10);
        let sync =
            sync_permissions(&granted, store.active("tn-1").unwrap(), &FeatureFlags::all_off())
                .unwrap();
        // Oracle: granted ∩ v1 names, in manifest order.
        let expected: Vec<String> = v1
            .entry_names()
            .into_iter()
            .filter(|n| granted.contains(n))
            .collect();
        assert_eq!(sync.granted_action_names, expected);
        assert!(!sync.contains("archive_client"));
        assert_eq!(sync.synced_against_version, 1);
    }

    #[test]
    fn restricted_surface_is_three_and_bypass_widens_to_six() {
        let (_, manifest) = published_reference();
        let registry = crm::reference_registry();
        let ctx = ctx(Role::Restricted);
        let granted = compute_granted_actions(&registry, &ctx.ability, &ctx, 0);
        let sync = sync_permissions(&granted, &manifest, &FeatureFlags::all_off()).unwrap();
        assert_eq!(sync.granted_action_names.len(), 3);
        let bypassed = sync_permissions(&granted, &manifest, &FeatureFlags::all_on()).unwrap();
        assert_eq!(bypassed.granted_action_names.len(), 6);
    }

    #[test]
    fn empty_granted_set_yields_an_empty_surface() {
        let (_, manifest) = published_reference();
        let granted = GrantedActionSet {
            user_id: "u".into(),
            workspace_id: "ws-a".into(),
            tenant_id: "tn-1".into(),
            action_names: vec![],
            computed_at: 0,
        };
        let sync = sync_permissions(&granted, &manifest, &FeatureFlags::all_off()).unwrap();
        assert!(sync.granted_action_names.is_empty());
    }

    #[test]
    fn unpublished_draft_cannot_sync() {
        let registry = crm::reference_registry();
        let draft = build_manifest(&registry).unwrap();
        let granted = GrantedActionSet {
            user_id: "u".into(),
            workspace_id: "ws-a".into(),
            tenant_id: "tn-1".into(),
            action_names: vec![],
            computed_at: 0,
        };
        assert_eq!(
            sync_permissions(&granted, &draft, &FeatureFlags::all_off()),
            Err(ManifestError::NoPublishedManifest)
        );
    }

    #[test]
    fn manifest_document_round_trips() {
        let (_, manifest) = published_reference();
        let doc = manifest.to_document();
        let parsed = Manifest::from_document(&doc).unwrap();
        assert_eq!(parsed, manifest);
    }
}
