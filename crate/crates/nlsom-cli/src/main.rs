//! Operator CLI: run societies and economies, replay transcripts, and emit
//! reports.
//!
//! Exit codes: 0 ok, 1 validation failure, 2 runtime failure, 3 artifact
//! corruption.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use nlsom::backend::BackendRegistry;
use nlsom::config::{self, BackendDecl, FileConfig};
use nlsom::eom::{replay_journal, run_simulation, JournalRecord};
use nlsom::gridworld::{self, ExplorationSociety, GridWorld};
use nlsom::logfmt::{self, Header};
use nlsom::metrics::{
    mcq_accuracy, recall_grid, BackendScorer, MetricsRecord, ScoreDirection, DEFAULT_KS,
    DEFAULT_TAUS,
};
use nlsom::report::{verify_run_dir, Replayability, RetrievalVerify, RunSummary};
use nlsom::retrieval::{self, RetrievalSociety};
use nlsom::society::{validate_society, Right, Structure};
use nlsom::tasks;
use nlsom::voting::Vote;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CORRUPTION: u8 = 3;

#[derive(Parser)]
#[command(name = "nlsom", version, about = "Societies of language agents: run, replay, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the society described by a config file.
    Run(RunArgs),
    /// Verify a run directory's artifacts (transcript, summary, journal).
    Replay { path: PathBuf },
    /// Run a seeded random-activity economy and write its journal.
    EomSim(EomSimArgs),
    /// Print the metric report of a finished run.
    Report { path: PathBuf },
}

/// One seed governs all randomness; runs over scripted backends are
/// byte-identical per (config, seed).
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured mindstorm round count.
    #[arg(long)]
    rounds: Option<u32>,
    /// Switch to a democracy with these rights (comma-separated rtk,rtc,rte).
    #[arg(long, value_delimiter = ',')]
    rights: Option<Vec<String>>,
    /// Retrieval: drop the editor and rank timestamps by vote.
    #[arg(long)]
    democracy: bool,
    /// Retrieval: apply solution generation to the final list.
    #[arg(long)]
    w_exec: bool,
    /// Refinement loop iterations override.
    #[arg(long)]
    iterations: Option<u32>,
}

#[derive(Args)]
struct EomSimArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    fn corruption(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CORRUPTION,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Replay { path } => cmd_replay(&path),
        Command::EomSim(args) => cmd_eom_sim(&args),
        Command::Report { path } => cmd_report(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let file = config::load_file(&args.config)
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let registry = file
        .build_registry(args.seed)
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let replayability = if file
        .backend
        .values()
        .any(|d| matches!(d, BackendDecl::Http { .. } | BackendDecl::Console))
    {
        Replayability::Structural
    } else {
        Replayability::Exact
    };
    let run_id = format!("run-{:016x}", args.seed);

    let mut summary = match file.task.adapter.as_str() {
        "mcq" => run_mcq(args, &file, &registry, &run_id)?,
        "caption" => run_caption(args, &file, &registry, &run_id)?,
        "artist-critic" => run_artist_critic(args, &file, &registry, &run_id)?,
        "threed" => run_threed(args, &file, &registry, &run_id)?,
        "camel" => run_camel(args, &file, &registry, &run_id)?,
        "retrieval" => run_retrieval(args, &file, &registry, &run_id)?,
        "exploration" => run_exploration(args, &file, &registry, &run_id)?,
        other => {
            return Err(Failure::validation(format!("unknown task adapter: {other}")))
        }
    };
    summary.replayability = replayability;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::runtime(format!("creating {}: {e}", args.out.display())))?;
    let io = |e: std::io::Error| Failure::runtime(format!("writing artifacts: {e}"));
    std::fs::write(args.out.join("summary.json"), summary.to_json()).map_err(io)?;
    std::fs::write(args.out.join("report.txt"), render_report(&summary)).map_err(io)?;

    // wall time is console-only so artifacts stay byte-identical
    eprintln!(
        "run {} finished in {:.1} ms; artifacts in {}",
        summary.run_id,
        started.elapsed().as_secs_f64() * 1e3,
        args.out.display()
    );
    println!("final answer: {}", summary.final_answer);
    Ok(())
}

fn build_society(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
) -> Result<nlsom::society::SocietyConfig, Failure> {
    let mut society = file
        .society(args.rounds)
        .map_err(|e| Failure::validation(format!("{e}")))?;
    if let Some(rights) = &args.rights {
        let rights = rights
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| config::parse_right(r))
            .collect::<Result<std::collections::BTreeSet<Right>, _>>()
            .map_err(|e| Failure::validation(format!("{e}")))?;
        society.structure = Structure::Democracy { rights };
    }
    let violations = validate_society(&society, registry);
    if !violations.is_empty() {
        let mut message = String::from("society config invalid:");
        for v in &violations {
            message.push_str(&format!("\n  - {v}"));
        }
        return Err(Failure::validation(message));
    }
    Ok(society)
}

fn base_summary(adapter: &str, result: &nlsom::engine::MindstormResult) -> RunSummary {
    let log = logfmt::transcript_to_log(&result.transcript);
    RunSummary {
        run_id: result.transcript.run_id.clone(),
        config_digest: result.transcript.config_digest.clone(),
        adapter: adapter.to_string(),
        transcript_sha256: logfmt::sha256_hex(log.as_bytes()),
        final_answer: result.final_answer.clone(),
        per_stage_counts: result.per_stage_counts.clone(),
        summary_text: Some(result.summary.clone()),
        tally: result.tally.clone(),
        vote_options: None,
        metrics: None,
        predictions: None,
        retrieval_verify: None,
        termination: None,
        replayability: Replayability::Exact,
    }
}

fn write_transcript(out: &Path, transcript: &nlsom::message::Transcript) -> Result<String, Failure> {
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::runtime(format!("creating {}: {e}", out.display())))?;
    let log = logfmt::transcript_to_log(transcript);
    std::fs::write(out.join("transcript.log"), &log)
        .map_err(|e| Failure::runtime(format!("writing transcript: {e}")))?;
    Ok(logfmt::sha256_hex(log.as_bytes()))
}

fn run_mcq(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RunSummary, Failure> {
    let society = build_society(args, file, registry)?;
    let task = file
        .mcq_task()
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let outcome = tasks::run_mcq(&society, &task, registry, run_id)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    let sha = write_transcript(&args.out, &outcome.result.transcript)?;
    let mut summary = base_summary("mcq", &outcome.result);
    summary.transcript_sha256 = sha;
    summary.vote_options = Some(task.options.clone());
    summary.final_answer = match &outcome.chosen {
        Vote::Key(k) => k.clone(),
        Vote::Abstain => "abstain".to_string(),
    };
    if let Some(correct) = &task.answer {
        let accuracy = mcq_accuracy(&[(outcome.chosen.clone(), correct.clone())])
            .map_err(|e| Failure::runtime(format!("{e}")))?;
        summary.metrics = Some(MetricsRecord {
            mcq_accuracy: Some(accuracy),
            ..Default::default()
        });
    }
    Ok(summary)
}

fn run_caption(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RunSummary, Failure> {
    let society = build_society(args, file, registry)?;
    let decl = file
        .task
        .caption
        .as_ref()
        .ok_or_else(|| Failure::validation("missing [task.caption]"))?;
    let task = tasks::CaptionTask {
        image_ref: decl.image_ref.clone(),
    };
    let scorer = match &decl.scorer {
        Some(name) => {
            let backend = registry
                .get(name)
                .ok_or_else(|| Failure::validation(format!("scorer backend {name} missing")))?;
            let direction = if decl.scorer_lower_is_better {
                ScoreDirection::LowerBetter
            } else {
                ScoreDirection::HigherBetter
            };
            Some(BackendScorer::new(name.clone(), direction, backend))
        }
        None => None,
    };
    let outcome = tasks::run_caption(
        &society,
        &task,
        registry,
        scorer
            .as_ref()
            .map(|s| s as &dyn nlsom::metrics::ExternalScorer),
        run_id,
    )
    .map_err(|e| Failure::runtime(format!("{e}")))?;
    let sha = write_transcript(&args.out, &outcome.result.transcript)?;
    let mut summary = base_summary("caption", &outcome.result);
    summary.transcript_sha256 = sha;
    if let Some(score) = outcome.score {
        summary.metrics = Some(MetricsRecord {
            scores: Some(vec![score]),
            ..Default::default()
        });
    }
    Ok(summary)
}

fn run_artist_critic(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RunSummary, Failure> {
    let (cfg, object) = file
        .artist_critic_config()
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let outcome = tasks::run_artist_critic(&cfg, &object, registry, run_id)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    let sha = write_transcript(&args.out, &outcome.transcript)?;
    let mut extra = BTreeMap::new();
    extra.insert(
        "language_agents".to_string(),
        outcome.census.language_agents as f64,
    );
    extra.insert("painters".to_string(), outcome.census.painters as f64);
    Ok(RunSummary {
        run_id: outcome.transcript.run_id.clone(),
        config_digest: outcome.transcript.config_digest.clone(),
        adapter: "artist-critic".to_string(),
        transcript_sha256: sha,
        final_answer: outcome.winning_prompt.clone(),
        per_stage_counts: outcome.transcript.stage_counts(),
        summary_text: Some(outcome.collector_report.clone()),
        tally: Some(outcome.tally.clone()),
        vote_options: Some(outcome.proposals.clone()),
        metrics: Some(MetricsRecord {
            extra,
            ..Default::default()
        }),
        predictions: None,
        retrieval_verify: None,
        termination: None,
        replayability: Replayability::Exact,
    })
}

fn run_threed(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RunSummary, Failure> {
    let (cfg, initial_prompt) = file
        .threed_config(args.iterations)
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let outcome = tasks::run_3d_loop(&cfg, &initial_prompt, registry, run_id)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    let sha = write_transcript(&args.out, &outcome.transcript)?;
    let mut extra = BTreeMap::new();
    extra.insert("iterations".to_string(), outcome.iterations.len() as f64);
    Ok(RunSummary {
        run_id: outcome.transcript.run_id.clone(),
        config_digest: outcome.transcript.config_digest.clone(),
        adapter: "threed".to_string(),
        transcript_sha256: sha,
        final_answer: outcome.final_prompt.clone(),
        per_stage_counts: outcome.transcript.stage_counts(),
        summary_text: None,
        tally: None,
        vote_options: None,
        metrics: Some(MetricsRecord {
            extra,
            ..Default::default()
        }),
        predictions: None,
        retrieval_verify: None,
        termination: None,
        replayability: Replayability::Exact,
    })
}

fn run_camel(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RunSummary, Failure> {
    let (cfg, task) = file
        .camel_config()
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let outcome = tasks::run_camel(&cfg, &task, registry, run_id)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    let sha = write_transcript(&args.out, &outcome.transcript)?;
    Ok(RunSummary {
        run_id: outcome.transcript.run_id.clone(),
        config_digest: outcome.transcript.config_digest.clone(),
        adapter: "camel".to_string(),
        transcript_sha256: sha,
        final_answer: outcome
            .transcript
            .messages()
            .last()
            .map(|m| m.content.clone())
            .unwrap_or_default(),
        per_stage_counts: outcome.transcript.stage_counts(),
        summary_text: outcome.specified_task.clone(),
        tally: None,
        vote_options: None,
        metrics: Some(MetricsRecord {
            extra: std::iter::once(("messages".to_string(), outcome.messages as f64)).collect(),
            ..Default::default()
        }),
        predictions: None,
        retrieval_verify: None,
        termination: Some(outcome.reason.as_str().to_string()),
        replayability: Replayability::Exact,
    })
}

fn run_retrieval(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RunSummary, Failure> {
    let decl = file
        .task
        .retrieval
        .as_ref()
        .ok_or_else(|| Failure::validation("missing [task.retrieval]"))?;
    let fixture_path = resolve_relative(&args.config, &decl.fixture);
    let fixture_text = std::fs::read_to_string(&fixture_path)
        .map_err(|e| Failure::validation(format!("reading {}: {e}", fixture_path.display())))?;
    let task = retrieval::parse_fixture(&fixture_text)
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let society = RetrievalSociety {
        debater_backends: decl.debaters.clone(),
        editor_backend: if args.democracy {
            None
        } else {
            decl.editor.clone()
        },
        rounds: args.rounds.unwrap_or(decl.rounds),
        with_exec: decl.w_exec || args.w_exec,
        k: decl.k,
    };
    let monarchy = society.editor_backend.is_some();
    let outcome = retrieval::run_retrieval(&society, &task, registry, run_id)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    let sha = write_transcript(&args.out, &outcome.transcript)?;
    let instances = vec![(outcome.predictions.clone(), task.ground_truth)];
    let recall = recall_grid(&instances, &DEFAULT_KS, &DEFAULT_TAUS)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    Ok(RunSummary {
        run_id: outcome.transcript.run_id.clone(),
        config_digest: outcome.transcript.config_digest.clone(),
        adapter: "retrieval".to_string(),
        transcript_sha256: sha,
        final_answer: outcome
            .predictions
            .0
            .first()
            .map(|t| format!("{t}"))
            .unwrap_or_else(|| "no prediction".to_string()),
        per_stage_counts: outcome.transcript.stage_counts(),
        summary_text: Some(outcome.summary.clone()),
        tally: None,
        vote_options: None,
        metrics: Some(MetricsRecord {
            recall: Some(recall),
            ..Default::default()
        }),
        predictions: Some(outcome.predictions.clone()),
        retrieval_verify: Some(RetrievalVerify {
            duration: task.duration,
            k: society.k,
            w_exec: society.with_exec,
            monarchy,
        }),
        termination: None,
        replayability: Replayability::Exact,
    })
}

fn run_exploration(
    args: &RunArgs,
    file: &FileConfig,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RunSummary, Failure> {
    let decl = file
        .task
        .exploration
        .as_ref()
        .ok_or_else(|| Failure::validation("missing [task.exploration]"))?;
    let map_path = resolve_relative(&args.config, &decl.map);
    let map_text = std::fs::read_to_string(&map_path)
        .map_err(|e| Failure::validation(format!("reading {}: {e}", map_path.display())))?;
    let world = GridWorld::from_map(&map_text)
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let society = ExplorationSociety {
        observer_backend: decl.observer.clone(),
        first_mate_backend: decl.first_mate.clone(),
        captain_backend: decl.captain.clone(),
        qa_rounds: decl.qa_rounds,
    };
    let outcome = gridworld::run_exploration(&society, &world, decl.max_steps, registry, run_id)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    let sha = write_transcript(&args.out, &outcome.transcript)?;
    let final_answer = match &decl.question {
        Some(question) => {
            let captain = registry
                .get(&decl.captain)
                .ok_or_else(|| Failure::validation("captain backend missing"))?;
            gridworld::answer_environment_question(&outcome.summaries, question, captain.as_ref())
                .map_err(|e| Failure::runtime(format!("{e}")))?
        }
        None => format!("explored {} cells", outcome.world.visited_count()),
    };
    let mut extra = BTreeMap::new();
    extra.insert("steps".to_string(), outcome.trajectory.len() as f64);
    Ok(RunSummary {
        run_id: outcome.transcript.run_id.clone(),
        config_digest: outcome.transcript.config_digest.clone(),
        adapter: "exploration".to_string(),
        transcript_sha256: sha,
        final_answer,
        per_stage_counts: outcome.transcript.stage_counts(),
        summary_text: outcome.summaries.last().cloned(),
        tally: None,
        vote_options: None,
        metrics: Some(MetricsRecord {
            coverage: Some(outcome.coverage),
            extra,
            ..Default::default()
        }),
        predictions: None,
        retrieval_verify: None,
        termination: None,
        replayability: Replayability::Exact,
    })
}

fn resolve_relative(config_path: &Path, relative: &str) -> PathBuf {
    let candidate = PathBuf::from(relative);
    if candidate.is_absolute() {
        return candidate;
    }
    config_path
        .parent()
        .map(|p| p.join(relative))
        .unwrap_or(candidate)
}

fn cmd_replay(path: &Path) -> Result<(), Failure> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent()
            .map(|p| p.to_path_buf())
            .ok_or_else(|| Failure::validation("replay path has no parent directory"))?
    };
    if dir.join("journal.log").exists() {
        return replay_journal_dir(&dir);
    }
    if !dir.join("transcript.log").exists() {
        return Err(Failure::validation(format!(
            "{} holds neither transcript.log nor journal.log",
            dir.display()
        )));
    }
    let report = verify_run_dir(&dir).map_err(|e| Failure::corruption(format!("{e}")))?;
    print!("{}", report.render());
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::corruption("artifact verification failed"))
    }
}

fn replay_journal_dir(dir: &Path) -> Result<(), Failure> {
    let journal_path = dir.join("journal.log");
    let bytes = std::fs::read(&journal_path)
        .map_err(|e| Failure::corruption(format!("reading journal: {e}")))?;
    let (header, records): (Header, Vec<JournalRecord>) =
        logfmt::records_from_log(&String::from_utf8_lossy(&bytes))
            .map_err(|e| Failure::corruption(format!("{e}")))?;
    let (accounts, treasury) =
        replay_journal(&records).map_err(|e| Failure::corruption(format!("{e}")))?;
    let balances_text = std::fs::read_to_string(dir.join("balances.json"))
        .map_err(|e| Failure::corruption(format!("reading balances: {e}")))?;
    let recorded: BalancesFile = serde_json::from_str(&balances_text)
        .map_err(|e| Failure::corruption(format!("{e}")))?;
    let mut ok = true;
    let sha = logfmt::sha256_hex(&bytes);
    if sha != recorded.journal_sha256 {
        ok = false;
        println!("journal-sha256: MISMATCH");
    } else {
        println!("journal-sha256: ok");
    }
    let replayed: BTreeMap<String, String> = accounts
        .iter()
        .map(|(a, m)| (a.id.clone(), m.to_string()))
        .collect();
    if replayed != recorded.accounts || treasury.to_string() != recorded.treasury {
        ok = false;
        println!("balances: MISMATCH (replayed {replayed:?}, treasury {treasury})");
    } else {
        println!("balances: ok ({} accounts)", replayed.len());
    }
    println!("run: {}", header.run_id);
    if ok {
        println!("verified");
        Ok(())
    } else {
        println!("corrupt");
        Err(Failure::corruption("journal verification failed"))
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct BalancesFile {
    accounts: BTreeMap<String, String>,
    treasury: String,
    conservation_defect: String,
    removed: Vec<String>,
    contracts_settled: u64,
    contracts_disputed: u64,
    journal_sha256: String,
}

fn cmd_eom_sim(args: &EomSimArgs) -> Result<(), Failure> {
    let file = config::load_economy_file(&args.config)
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let sim = file
        .to_sim_config()
        .map_err(|e| Failure::validation(format!("{e}")))?;
    let outcome = run_simulation(&sim, args.steps, args.seed);

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::runtime(format!("creating {}: {e}", args.out.display())))?;
    let header = Header {
        run_id: format!("eom-{:016x}", args.seed),
        config_digest: logfmt::digest_of(&file),
    };
    let journal = logfmt::records_to_log(&header, outcome.ledger.records());
    std::fs::write(args.out.join("journal.log"), &journal)
        .map_err(|e| Failure::runtime(format!("writing journal: {e}")))?;

    let defect = outcome.ledger.conservation_defect();
    let balances = BalancesFile {
        accounts: outcome
            .ledger
            .accounts()
            .iter()
            .map(|(a, m)| (a.id.clone(), m.to_string()))
            .collect(),
        treasury: outcome.ledger.treasury().to_string(),
        conservation_defect: defect.to_string(),
        removed: outcome.removed.iter().map(|a| a.id.clone()).collect(),
        contracts_settled: outcome.contracts_settled,
        contracts_disputed: outcome.contracts_disputed,
        journal_sha256: logfmt::sha256_hex(journal.as_bytes()),
    };
    let mut text = serde_json::to_string_pretty(&balances)
        .map_err(|e| Failure::runtime(format!("{e}")))?;
    text.push('\n');
    std::fs::write(args.out.join("balances.json"), text)
        .map_err(|e| Failure::runtime(format!("writing balances: {e}")))?;

    println!(
        "steps: {}; accounts: {}; removed: {}; contracts settled: {}, disputed: {}",
        outcome.steps,
        outcome.ledger.accounts().len(),
        outcome.removed.len(),
        outcome.contracts_settled,
        outcome.contracts_disputed
    );
    println!("treasury: {}", outcome.ledger.treasury());
    if defect.is_zero() && !outcome.ledger.any_negative_balance() {
        println!("conservation check: exact (defect = 0, no negative balances)");
        Ok(())
    } else {
        println!("conservation check: FAILED (defect = {defect})");
        Err(Failure::runtime("conservation violated"))
    }
}

fn cmd_report(path: &Path) -> Result<(), Failure> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        return Err(Failure::validation("report expects a run directory"));
    };
    let summary_text = std::fs::read_to_string(dir.join("summary.json"))
        .map_err(|e| Failure::validation(format!("reading summary: {e}")))?;
    let summary =
        RunSummary::from_json(&summary_text).map_err(|e| Failure::corruption(format!("{e}")))?;
    print!("{}", render_report(&summary));
    Ok(())
}

fn render_report(summary: &RunSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!("run: {}\n", summary.run_id));
    out.push_str(&format!("adapter: {}\n", summary.adapter));
    out.push_str(&format!("final answer: {}\n", summary.final_answer));
    out.push_str(&format!("stage counts: {:?}\n", summary.per_stage_counts));
    if let Some(termination) = &summary.termination {
        out.push_str(&format!("termination: {termination}\n"));
    }
    if let Some(tally) = &summary.tally {
        out.push_str(&format!(
            "tally: winner {} (tie_broken {})\n",
            tally.winner, tally.tie_broken
        ));
        for (key, count) in &tally.counts {
            if *count > 0 {
                out.push_str(&format!("  {key}: {count}\n"));
            }
        }
    }
    if let Some(predictions) = &summary.predictions {
        out.push_str(&format!("predictions: {:?}\n", predictions.0));
    }
    if let Some(metrics) = &summary.metrics {
        if let Some(acc) = metrics.mcq_accuracy {
            out.push_str(&format!("accuracy: {acc:.4}\n"));
        }
        if let Some(recall) = &metrics.recall {
            out.push_str("recall grid (percent):\n");
            out.push_str(&recall.to_table());
        }
        if let Some(coverage) = metrics.coverage {
            out.push_str(&format!("coverage: {:.2}%\n", coverage * 100.0));
        }
        if let Some(scores) = &metrics.scores {
            for s in scores {
                out.push_str(&format!(
                    "score[{}] = {} (direction: {:?})\n",
                    s.scorer, s.value, s.direction
                ));
            }
        }
        for (key, value) in &metrics.extra {
            out.push_str(&format!("{key}: {value}\n"));
        }
    }
    out
}
