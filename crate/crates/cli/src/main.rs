//! Operator CLI: run the evaluation suite, manage manifest versions, and
//! explore a single chat session interactively.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use bal_core::authz::{compute_granted_actions, GrantTable, Role};
use bal_core::confirmation::PendingWorkflow;
use bal_core::corpus::{self, load_corpus_dir, reference_corpus, Scenario, TENANT};
use bal_core::crm;
use bal_core::events::EventLog;
use bal_core::harness::{render_condition_summary, render_report, run_condition, SuiteResult};
use bal_core::host::TrialHost;
use bal_core::manifest::{
    build_manifest, sync_permissions, ConnectionState, Manifest, ManifestStore,
};
use bal_core::planner::TimingConfig;
use bal_core::scope::{diff, snapshot, ExecutionContext};
use bal_core::session::{
    render_pending, ApprovalDecision, ChatSession, ConversationOutcome, Interaction, Speaker,
};
use bal_core::Condition;

const EXIT_OK: u8 = 0;
const EXIT_GOLDEN_MISMATCH: u8 = 1;
const EXIT_CONFIG_FAULT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "bal",
    about = "Bounded-autonomy reference system: evaluation suite, manifest governance, REPL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario suite under one condition (or `all` for the
    /// comparative A/C/B report).
    RunSuite(RunSuiteArgs),
    /// Manifest governance: publish, list, rollback.
    Manifest(ManifestArgs),
    /// Interactive exploration of a single chat session.
    Repl(ReplArgs),
}

#[derive(Args)]
struct RunSuiteArgs {
    /// A | B | C | abl-p | abl-v | abl-c | all
    #[arg(long, default_value = "all")]
    condition: String,
    /// Directory of scenario documents; defaults to $BAL_CORPUS_ROOT, then
    /// the embedded reference corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory for the report, event logs, and trial records.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Golden report to compare against; mismatch exits 1.
    #[arg(long)]
    golden: Option<PathBuf>,
    /// Timing-config document (per-stage millisecond costs); defaults
    /// embedded.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Args)]
struct ManifestArgs {
    #[command(subcommand)]
    action: ManifestAction,
    /// Manifest state directory.
    #[arg(long, default_value = "manifests")]
    dir: PathBuf,
}

#[derive(Subcommand)]
enum ManifestAction {
    /// Build a manifest from the reference contracts and publish the next
    /// version.
    Publish,
    /// List published versions and the active one.
    List,
    /// Re-activate an earlier version.
    Rollback {
        #[arg(long)]
        version: u32,
    },
}

#[derive(Args)]
struct ReplArgs {
    /// admin | standard | restricted
    #[arg(long, default_value = "standard")]
    role: String,
    /// Workspace to bind the session to.
    #[arg(long, default_value = "ws-a")]
    workspace: String,
    /// Append event-log lines for each completed conversation here.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RunSuite(args) => run_suite(args),
        Command::Manifest(args) => manifest_command(args),
        Command::Repl(args) => repl(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_CONFIG_FAULT)
        }
    }
}

// ---------------------------------------------------------------------------
// run-suite
// ---------------------------------------------------------------------------

fn load_corpus(arg: &Option<PathBuf>) -> Result<Vec<Scenario>> {
    if let Some(dir) = arg {
        return load_corpus_dir(dir).with_context(|| format!("loading corpus from {dir:?}"));
    }
    if let Ok(root) = std::env::var("BAL_CORPUS_ROOT") {
        return load_corpus_dir(Path::new(&root))
            .with_context(|| format!("loading corpus from $BAL_CORPUS_ROOT={root}"));
    }
    Ok(reference_corpus())
}

fn run_suite(args: RunSuiteArgs) -> Result<u8> {
    let corpus = load_corpus(&args.corpus)?;
    if corpus.is_empty() {
        return Err(anyhow!("corpus is empty"));
    }
    let timing: TimingConfig = match &args.timing {
        Some(path) => {
            let doc = fs::read_to_string(path)
                .with_context(|| format!("reading timing config {path:?}"))?;
            serde_json::from_str(&doc).with_context(|| format!("parsing timing config {path:?}"))?
        }
        None => TimingConfig::default(),
    };

    let conditions: Vec<Condition> = if args.condition == "all" {
        vec![Condition::A, Condition::C, Condition::B]
    } else {
        vec![Condition::parse(&args.condition)
            .ok_or_else(|| anyhow!("unknown condition {:?}", args.condition))?]
    };

    let mut results: Vec<SuiteResult> = Vec::new();
    for condition in &conditions {
        let result = run_condition(&corpus, *condition, &timing)
            .map_err(|e| anyhow!("condition {condition}: {e}"))?;
        results.push(result);
    }

    let rendered = if args.condition == "all" {
        render_report(&results[0].report, &results[1].report, &results[2].report)
    } else {
        results
            .iter()
            .map(|r| render_condition_summary(&r.report))
            .collect::<Vec<_>>()
            .join("\n")
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {:?}", args.out))?;
    fs::write(args.out.join("report.txt"), &rendered)?;
    for result in &results {
        let tag = result.condition.as_str();
        fs::write(
            args.out.join(format!("events-{tag}.jsonl")),
            result.events_jsonl(),
        )?;
        fs::write(
            args.out.join(format!("records-{tag}.jsonl")),
            result.records_jsonl(),
        )?;
    }
    print!("{rendered}");

    if let Some(golden) = &args.golden {
        let expected = fs::read_to_string(golden)
            .with_context(|| format!("reading golden report {golden:?}"))?;
        if expected != rendered {
            eprintln!("golden mismatch: report differs from {golden:?}");
            return Ok(EXIT_GOLDEN_MISMATCH);
        }
        println!("golden comparison: ok");
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

fn load_manifest_state(dir: &Path) -> Result<(ManifestStore, Vec<u32>)> {
    let mut store = ManifestStore::new([TENANT.to_string()]);
    let mut versions: Vec<(u32, Manifest)> = Vec::new();
    if dir.exists() {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("manifest-v") && name.ends_with(".json") {
                let doc = fs::read_to_string(&path)?;
                let manifest =
                    Manifest::from_document(&doc).map_err(|e| anyhow!("parsing {path:?}: {e}"))?;
                versions.push((manifest.version, manifest));
            }
        }
    }
    versions.sort_by_key(|(v, _)| *v);
    let listed: Vec<u32> = versions.iter().map(|(v, _)| *v).collect();
    for (_, manifest) in versions {
        store.restore_published(manifest);
    }
    Ok((store, listed))
}

fn active_version(dir: &Path) -> Option<u32> {
    fs::read_to_string(dir.join("active"))
        .ok()
        .and_then(|s| s.trim().parse().ok())
}

fn manifest_command(args: ManifestArgs) -> Result<u8> {
    let dir = &args.dir;
    let (mut store, versions) = load_manifest_state(dir)?;
    match args.action {
        ManifestAction::Publish => {
            let registry = crm::reference_registry();
            let draft = build_manifest(&registry).map_err(|e| anyhow!(e))?;
            let now = versions.len() as u64;
            let published = store
                .publish_manifest(draft, ConnectionState { active: true }, TENANT, now)
                .map_err(|e| anyhow!(e))?;
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("manifest-v{}.json", published.version));
            fs::write(&path, published.to_document() + "\n")?;
            fs::write(dir.join("active"), format!("{}\n", published.version))?;
            println!(
                "published manifest version {} ({} entries)",
                published.version,
                published.entries.len()
            );
            Ok(EXIT_OK)
        }
        ManifestAction::List => {
            if versions.is_empty() {
                println!("no published manifests in {dir:?}");
            } else {
                let active = active_version(dir);
                for version in versions {
                    let marker = if active == Some(version) { " (active)" } else { "" };
                    println!("v{version}{marker}");
                }
            }
            Ok(EXIT_OK)
        }
        ManifestAction::Rollback { version } => {
            if !versions.contains(&version) {
                eprintln!("unknown manifest version {version}");
                return Ok(EXIT_CONFIG_FAULT);
            }
            fs::write(dir.join("active"), format!("{version}\n"))?;
            println!("active manifest is now v{version}");
            Ok(EXIT_OK)
        }
    }
}

// ---------------------------------------------------------------------------
// repl
// ---------------------------------------------------------------------------

struct ReplInteraction<'a> {
    input: &'a mut dyn BufRead,
}

impl Interaction for ReplInteraction<'_> {
    fn next_approval(&mut self, workflow: &PendingWorkflow) -> Option<ApprovalDecision> {
        println!("{}", render_pending(workflow));
        loop {
            print!("approve [c=confirm, x=cancel, r <action>=remove]> ");
            io::stdout().flush().ok();
            let mut line = String::new();
            if self.input.read_line(&mut line).ok()? == 0 {
                return None;
            }
            let line = line.trim();
            match line {
                "c" | "confirm" => return Some(ApprovalDecision::Confirm),
                "x" | "cancel" => return Some(ApprovalDecision::Cancel),
                _ => {
                    if let Some(rest) =
                        line.strip_prefix("r ").or_else(|| line.strip_prefix("remove "))
                    {
                        return Some(ApprovalDecision::Remove(rest.trim().to_string()));
                    }
                    println!("unrecognized choice {line:?}");
                }
            }
        }
    }

    fn next_reply(&mut self, question: &str) -> Option<String> {
        println!("assistant: {question}");
        print!("you> ");
        io::stdout().flush().ok();
        let mut line = String::new();
        if self.input.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim().to_string();
        if line.is_empty() {
            None
        } else {
            Some(line)
        }
    }
}

fn print_outcome(outcome: &ConversationOutcome) {
    for line in &outcome.transcript {
        match line.speaker {
            Speaker::Assistant => println!("assistant: {}", line.text),
            Speaker::User => println!("you: {}", line.text),
        }
    }
    println!("[{:?}] {}", outcome.end_state, outcome.final_message);
}

fn repl(args: ReplArgs) -> Result<u8> {
    let role = Role::parse(&args.role).ok_or_else(|| anyhow!("unknown role {:?}", args.role))?;
    let user_id = match role {
        Role::Admin => "user-admin",
        Role::Standard => "user-standard",
        Role::Restricted => "user-restricted",
    };
    let corpus = reference_corpus();
    let registry = crm::reference_registry();
    let mut manifest_store = ManifestStore::new([TENANT.to_string()]);
    let manifest = manifest_store
        .publish_manifest(
            build_manifest(&registry).map_err(|e| anyhow!(e))?,
            ConnectionState { active: true },
            TENANT,
            0,
        )
        .map_err(|e| anyhow!(e))?;
    let timing = TimingConfig::default();
    let flags = Condition::C.flags();

    println!(
        "bounded-autonomy repl | role {role} | workspace {} | every utterance starts from the seeded fixture",
        args.workspace
    );
    println!("type a scenario utterance; `scenarios` lists them; `snapshot` diffs the last run; `quit` exits");

    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut last_diff: Option<Vec<String>> = None;

    loop {
        print!("you> ");
        io::stdout().flush().ok();
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim().to_string();
        if line.is_empty() {
            continue;
        }
        match line.as_str() {
            "quit" | "exit" => break,
            "scenarios" => {
                for scenario in &corpus {
                    println!("  [{}] {}", scenario.id, scenario.utterance);
                }
                continue;
            }
            "snapshot" => {
                match &last_diff {
                    Some(entries) if entries.is_empty() => println!("store unchanged"),
                    Some(entries) => {
                        println!("store delta:");
                        for entry in entries {
                            println!("  {entry}");
                        }
                    }
                    None => println!("no conversation yet"),
                }
                continue;
            }
            _ => {}
        }

        let Some(scenario) = corpus.iter().find(|s| s.utterance == line || s.id == line) else {
            println!("no scripted conversation matches that utterance");
            println!("try `scenarios` for the list, `snapshot`, or `quit`");
            continue;
        };

        let table = GrantTable::reference();
        let ability = table.ability_for(user_id, role);
        let ctx = ExecutionContext::new(TENANT, &args.workspace, user_id, ability.clone());
        let granted = compute_granted_actions(&registry, &ability, &ctx, 0);
        let surface = sync_permissions(&granted, &manifest, &flags).map_err(|e| anyhow!(e))?;

        let mut trial_registry = crm::reference_registry();
        if scenario.requires_unpublished_action {
            trial_registry
                .register(crm::archive_client_spec())
                .map_err(|e| anyhow!(e))?;
        }
        let store = corpus::seed_store();
        let before = store.clone();
        let trace_id = format!("tr-C-{}", scenario.id);
        let log = EventLog::new(&trace_id, "C", &scenario.id, 1);
        let host = TrialHost::new(log, store, corpus::seed_users(), corpus::seed_directory());
        let mut session = ChatSession::new(
            &trial_registry,
            &manifest,
            surface,
            ctx,
            flags,
            timing.clone(),
            &format!("chat-{}", scenario.id),
            &scenario.id,
            "C",
            host,
        );
        let mut interaction = ReplInteraction { input: &mut input };
        let outcome = session.run_script(&scenario.script, &scenario.follow_ups, &mut interaction);
        print_outcome(&outcome);

        let delta = diff(&before, &session.host.store);
        if snapshot(&before) == snapshot(&session.host.store) {
            println!("(store unchanged)");
        }
        last_diff = Some(delta.entries.iter().cloned().collect());
        if let Some(log_path) = &args.log {
            let mut existing = fs::read_to_string(log_path).unwrap_or_default();
            existing.push_str(&session.host.log.serialize_lines());
            fs::write(log_path, existing)?;
        }
    }
    Ok(EXIT_OK)
}
