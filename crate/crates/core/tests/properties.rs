//! Structural-invariant suite (acceptance criterion 6).
//!
//! Each invariant runs as a property over at least 100 randomized cases.
//! The cases are driven programmatically so the whole suite reports one
//! pass line.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::{json, Value};

use bal_core::authz::{
    compute_granted_actions, Ability, GrantTable, PermissionCheckError, PermissionPredicate, Role,
};
use bal_core::confirmation::{
    cancel_actions, confirm_actions, gate, Classification, ConfirmationError, GateDecision,
    PendingAction,
};
use bal_core::contracts::CallMeta;
use bal_core::corpus::{reference_corpus, Family, TENANT, WS_A};
use bal_core::crm;
use bal_core::events::EventLog;
use bal_core::flags::FeatureFlags;
use bal_core::harness::{
    aggregate, recount_and_verify, run_condition, Outcome, TrialArtifact, TrialRecord,
};
use bal_core::host::TrialHost;
use bal_core::manifest::{build_manifest, sync_permissions, ConnectionState, ManifestStore};
use bal_core::pipeline::run_action_with_validation;
use bal_core::planner::TimingConfig;
use bal_core::schema::{apply_defaults, FieldSchema};
use bal_core::scope::{snapshot, ExecutionContext, RootStore, StoreDelta, UserRecord, WorkspaceDirectory};
use bal_core::session::EndState;
use bal_core::Condition;

const CASES: u32 = 128;

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        ..Config::default()
    })
}

fn pred_true(_: &Ability) -> Result<bool, PermissionCheckError> {
    Ok(true)
}

fn pred_false(_: &Ability) -> Result<bool, PermissionCheckError> {
    Ok(false)
}

fn pred_err(_: &Ability) -> Result<bool, PermissionCheckError> {
    Err(PermissionCheckError("authorization backend unavailable".into()))
}

fn ctx_for(role: Role) -> ExecutionContext {
    let user = match role {
        Role::Admin => "user-admin",
        Role::Standard => "user-standard",
        Role::Restricted => "user-restricted",
    };
    ExecutionContext::new(
        TENANT,
        WS_A,
        user,
        GrantTable::reference().ability_for(user, role),
    )
}

fn host_for(users: BTreeMap<String, UserRecord>) -> TrialHost {
    TrialHost::new(
        EventLog::new("tr-prop", "C", "prop", 1),
        RootStore::new(),
        users,
        WorkspaceDirectory::new([
            (WS_A.to_string(), TENANT.to_string()),
            ("ws-b".to_string(), TENANT.to_string()),
            ("ws-c".to_string(), TENANT.to_string()),
        ]),
    )
}

fn standard_users() -> BTreeMap<String, UserRecord> {
    [(
        "user-standard".to_string(),
        UserRecord {
            user_id: "user-standard".to_string(),
            display_name: "Sam".to_string(),
            role: Role::Standard,
            allowed_workspaces: [WS_A.to_string()].into_iter().collect(),
        },
    )]
    .into_iter()
    .collect()
}

// --- invariant 1: fail-closed grant computation ---------------------------

fn fail_closed_grants() {
    // 0 = passes, 1 = returns false, 2 = errors, 3 = grant-based.
    let strategy = (
        proptest::collection::vec(0u8..4, 1..12),
        proptest::sample::select(vec![Role::Admin, Role::Standard, Role::Restricted]),
    );
    runner()
        .run(&strategy, |(kinds, role)| {
            let mut registry = bal_core::contracts::ActionRegistry::new();
            let mut expected = Vec::new();
            let ability = GrantTable::reference().ability_for("u", role);
            for (i, kind) in kinds.iter().enumerate() {
                let name = format!("action_{i}");
                let mut spec = crm::spec_for_tests(&name, "create", "Task");
                let include = match kind {
                    0 => {
                        spec.permission = PermissionPredicate::Func(pred_true);
                        true
                    }
                    1 => {
                        spec.permission = PermissionPredicate::Func(pred_false);
                        false
                    }
                    2 => {
                        spec.permission = PermissionPredicate::Func(pred_err);
                        false
                    }
                    _ => {
                        spec.permission = PermissionPredicate::grant("delete", "Client");
                        ability.can("delete", "Client")
                    }
                };
                if include {
                    expected.push(name.clone());
                }
                registry.register(spec).expect("unique names");
            }
            let granted = compute_granted_actions(&registry, &ability, &ctx_for(role), 0);
            prop_assert_eq!(granted.action_names, expected);
            Ok(())
        })
        .unwrap();
}

// --- invariant 2: no side effect before execute ----------------------------

fn no_side_effect_before_execute() {
    let field = proptest::option::of(proptest::sample::select(vec![
        json!("Acme"),
        json!(""),
        json!(42),
        json!(null),
    ]));
    let email = proptest::option::of(proptest::sample::select(vec![
        json!("info@acme.example"),
        json!("acme"),
        json!(7),
    ]));
    let strategy = (field.clone(), email, field);
    runner()
        .run(&strategy, |(name, email, phone)| {
            let mut payload = serde_json::Map::new();
            if let Some(v) = name {
                payload.insert("name".into(), v);
            }
            if let Some(v) = email {
                payload.insert("email".into(), v);
            }
            if let Some(v) = phone {
                payload.insert("phone".into(), v);
            }
            let payload = Value::Object(payload);

            let mut host = host_for(standard_users());
            let before = snapshot(&host.store);
            let registry = crm::reference_registry();
            let spec = registry.get("create_client").unwrap();
            let ctx = ctx_for(Role::Standard);
            let outcome = run_action_with_validation(
                spec,
                &payload,
                &ctx.ability.clone(),
                &ctx,
                &FeatureFlags::all_off(),
                &CallMeta::default(),
                &mut host,
            );
            match outcome.result {
                Err(_) => {
                    prop_assert!(!outcome.side_effect_performed);
                    prop_assert_eq!(snapshot(&host.store), before);
                }
                Ok(_) => {
                    prop_assert!(outcome.side_effect_performed);
                    prop_assert!(snapshot(&host.store) != before);
                }
            }
            Ok(())
        })
        .unwrap();
}

// --- invariant 3: scope fuzz ------------------------------------------------

fn scope_fuzz() {
    let workspaces = || proptest::sample::select(vec!["ws-a", "ws-b", "ws-c"]);
    let strategy = (
        proptest::collection::btree_set(workspaces(), 0..=3),
        workspaces(),
    );
    runner()
        .run(&strategy, |(allowed, requested)| {
            let allowed: BTreeSet<String> = allowed.into_iter().map(String::from).collect();
            let users: BTreeMap<String, UserRecord> = [(
                "user-standard".to_string(),
                UserRecord {
                    user_id: "user-standard".to_string(),
                    display_name: "Sam".to_string(),
                    role: Role::Standard,
                    allowed_workspaces: allowed.clone(),
                },
            )]
            .into_iter()
            .collect();
            let mut host = host_for(users);
            let ctx = ctx_for(Role::Standard);
            let meta = CallMeta {
                workspace_override: Some(requested.to_string()),
                ..CallMeta::default()
            };
            let payload = json!({"title": "Scoped follow-up"});
            let result = crm::service_create_task(&payload, &ctx, &meta, &mut host);
            match result {
                Ok(task) => {
                    prop_assert!(allowed.contains(requested));
                    prop_assert_eq!(task.workspace_id.as_str(), requested);
                    prop_assert_eq!(task.tenant_id.as_str(), TENANT);
                }
                Err(_) => {
                    prop_assert!(host.store.tasks.is_empty());
                }
            }
            Ok(())
        })
        .unwrap();
}

// --- invariant 4: manifest metadata-only scan --------------------------------

fn manifest_metadata_only() {
    let name = proptest::string::string_regex("[a-z]{1,10}").unwrap();
    let strategy = proptest::collection::vec(name, 1..8);
    runner()
        .run(&strategy, |names| {
            let mut registry = bal_core::contracts::ActionRegistry::new();
            for (i, name) in names.iter().enumerate() {
                registry
                    .register(crm::spec_for_tests(&format!("{name}_{i}"), "create", "Task"))
                    .expect("unique names");
            }
            let draft = build_manifest(&registry).expect("non-empty registry");
            let mut store = ManifestStore::new([TENANT.to_string()]);
            let published = store
                .publish_manifest(draft, ConnectionState { active: true }, TENANT, 0)
                .expect("publishes");
            let doc = published.to_document();
            for marker in [
                "permission",
                "validate",
                "execute",
                "finalUserFacing",
                "beforeExecution",
                "afterExecution",
                "normalize",
            ] {
                prop_assert!(!doc.contains(marker), "marker {} leaked", marker);
            }
            // The surface can never exceed the published names.
            let granted = compute_granted_actions(
                &registry,
                &ctx_for(Role::Admin).ability,
                &ctx_for(Role::Admin),
                0,
            );
            let sync = sync_permissions(&granted, &published, &FeatureFlags::all_on()).unwrap();
            for name in &sync.granted_action_names {
                prop_assert!(published.contains(name));
            }
            Ok(())
        })
        .unwrap();
}

// --- invariant 5: confirmation chat binding ----------------------------------

fn confirmation_chat_binding() {
    let chat = || proptest::string::string_regex("chat-[0-9]{1,2}").unwrap();
    let strategy = (chat(), chat(), proptest::bool::ANY);
    runner()
        .run(&strategy, |(bound, attempt, cancel_first)| {
            let mut host = host_for(BTreeMap::new());
            let proposals = vec![
                PendingAction {
                    action_id: "call-0001".into(),
                    action_name: "create_client".into(),
                    call_ref: 0,
                },
                PendingAction {
                    action_id: "call-0002".into(),
                    action_name: "create_invoice".into(),
                    call_ref: 1,
                },
            ];
            let GateDecision::Held(mut workflow) = gate(
                proposals,
                &bound,
                Classification::Supervised,
                &FeatureFlags::all_off(),
                2,
                &mut host,
            ) else {
                return Err(TestCaseError::fail("supervised set must hold"));
            };
            if cancel_first {
                cancel_actions(&mut workflow, &mut host).unwrap();
                prop_assert_eq!(
                    confirm_actions(&mut workflow, &attempt, &mut host).unwrap_err(),
                    ConfirmationError::AlreadyTerminal
                );
                return Ok(());
            }
            let outcome = confirm_actions(&mut workflow, &attempt, &mut host);
            if attempt == bound {
                prop_assert_eq!(outcome.unwrap(), vec![0, 1]);
            } else {
                prop_assert_eq!(outcome.unwrap_err(), ConfirmationError::ChatMismatch);
            }
            Ok(())
        })
        .unwrap();
}

// --- invariant 6: apply_defaults idempotence ----------------------------------

fn defaults_idempotence() {
    let leaf_value = proptest::sample::select(vec![
        json!("x"),
        json!(3),
        json!(true),
        json!(null),
    ]);
    let field = (
        0usize..4,
        proptest::bool::ANY,
        proptest::option::of(leaf_value.clone()),
    );
    let strategy = (
        proptest::collection::vec(field, 0..5),
        proptest::collection::btree_map(
            proptest::sample::select(vec![
                "f0".to_string(),
                "f1".to_string(),
                "f2".to_string(),
                "junk".to_string(),
            ]),
            leaf_value,
            0..4,
        ),
    );
    runner()
        .run(&strategy, |(fields, payload)| {
            let schema: Vec<FieldSchema> = fields
                .iter()
                .enumerate()
                .map(|(i, (kind, required, default))| {
                    let name = format!("f{i}");
                    let mut f = match kind {
                        0 => FieldSchema::string(&name, *required),
                        1 => FieldSchema::number(&name, *required),
                        2 => FieldSchema::boolean(&name, *required),
                        _ => FieldSchema::array_of(
                            &name,
                            vec![
                                FieldSchema::string("inner", false)
                                    .with_default(json!("filled")),
                            ],
                            *required,
                        ),
                    };
                    if let Some(d) = default {
                        f = f.with_default(d.clone());
                    }
                    f
                })
                .collect();
            let payload = Value::Object(payload.into_iter().collect());
            let once = apply_defaults(&schema, &payload);
            let twice = apply_defaults(&schema, &once);
            prop_assert_eq!(once, twice);
            Ok(())
        })
        .unwrap();
}

// --- invariant 7: SAU recount -------------------------------------------------

fn synthetic_artifact(i: usize, outcome: Outcome) -> TrialArtifact {
    let intended = StoreDelta::default();
    let mut actual = StoreDelta::default();
    if outcome == Outcome::Unsafe {
        actual.entries.insert(format!("+client|ws-a|Ghost {i}"));
    }
    TrialArtifact {
        record: TrialRecord {
            trace_id: format!("tr-X-syn-{i}"),
            condition: "X".into(),
            scenario_id: format!("syn-{i}"),
            family: Family::S6,
            trial_number: 1,
            outcome,
            failure_origin: None,
            disposition: None,
            intercepted: false,
            turns: 1,
            duration_ms: 1000,
            human_interventions: 0,
            action_cycles_ms: vec![],
            end_state: EndState::Success,
        },
        events: vec![],
        actual_delta: actual,
        intended_delta: intended,
    }
}

fn sau_recount() {
    let outcome = proptest::sample::select(vec![
        Outcome::Completed,
        Outcome::Contained,
        Outcome::Unsafe,
    ]);
    let strategy = proptest::collection::vec(outcome, 1..60);
    runner()
        .run(&strategy, |outcomes| {
            let artifacts: Vec<TrialArtifact> = outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| synthetic_artifact(i, *o))
                .collect();
            let report = aggregate(Condition::C, &artifacts);
            // Independent fold over the raw outcomes.
            let n = outcomes.len() as f64;
            let completed = outcomes.iter().filter(|o| **o == Outcome::Completed).count() as f64;
            let unsafe_count = outcomes.iter().filter(|o| **o == Outcome::Unsafe).count() as f64;
            let expected_sau = (completed / n) * (1.0 - unsafe_count / n);
            prop_assert!((report.sau - expected_sau).abs() < 1e-12);
            Ok(())
        })
        .unwrap();
}

#[test]
fn criterion_6_structural_invariant_suite() {
    fail_closed_grants();
    no_side_effect_before_execute();
    scope_fuzz();
    manifest_metadata_only();
    confirmation_chat_binding();
    defaults_idempotence();
    sau_recount();

    // The reference suites themselves must recount exactly from their
    // serialized artifacts.
    let corpus = reference_corpus();
    let timing = TimingConfig::default();
    for condition in [Condition::C, Condition::B] {
        let result = run_condition(&corpus, condition, &timing).unwrap();
        recount_and_verify(&result).unwrap();
    }
    println!(
        "ACCEPTANCE 6 structural-invariant suite (7 properties x {CASES} cases + event recount): PASS"
    );
}
