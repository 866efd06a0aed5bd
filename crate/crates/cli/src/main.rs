//! `dbforge`: characterize a database code base, then plan, synthesize,
//! validate and evaluate new native SQL functions in it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Map;

use dbforge_core::characterize::characterize_index;
use dbforge_core::config::RunConfig;
use dbforge_core::eval::{load_declaration, run_eval, EvalSuite};
use dbforge_core::exec::Exec;
use dbforge_core::index::{list_source_files, scan_repo_with};
use dbforge_core::llm::LlmMode;
use dbforge_core::orchestration::{
    builtin_registry, run_session, Artifacts, MemoryPool, SessionState, SynthesisRequest,
    ToolStatus,
};
use dbforge_core::util::write_json;
use dbforge_core::validation::{
    load_suite, run_validation_pipeline, validate_compliance, validate_syntax, PipelineInput,
    ValidationReport,
};
use dbforge_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "dbforge",
    version,
    about = "Synthesize native SQL functions into a database code base"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command; each one overrides the config file.
#[derive(Args, Debug, Default)]
struct GlobalOpts {
    /// Run config (TOML). Flags win over values in this file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    profile: Option<String>,
    #[arg(long, global = true)]
    profiles_dir: Option<PathBuf>,
    /// Repository to work on.
    #[arg(long, global = true)]
    repo: Option<PathBuf>,
    /// Directory for every document the command writes.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    llm_mode: Option<ModeArg>,
    /// JSONL transcript (replayed or recorded).
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    #[arg(long, global = true)]
    memory_pool: Option<PathBuf>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Leave the edits of a failed session in the repository.
    #[arg(long, global = true)]
    keep_failed: bool,
    #[arg(long, global = true)]
    num_plans: Option<usize>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    decay: Option<f64>,
    #[arg(long, global = true)]
    floor: Option<f64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Syntax,
    Compliance,
    Semantic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Index the repository and write characterization.json.
    Characterize,
    /// Generate, score and filter coding plans for one function.
    Plan {
        /// Function spec (TOML, or JSON with a .json extension).
        spec: PathBuf,
    },
    /// Run one synthesis attempt and apply its edits.
    Synthesize {
        spec: PathBuf,
        /// Plan first and use the best plan.
        #[arg(long)]
        with_plan: bool,
        /// Roll the edits back after writing the attempt document.
        #[arg(long)]
        dry_run: bool,
    },
    /// Validate the repository as it is.
    Validate {
        spec: PathBuf,
        /// Run only this stage.
        #[arg(long)]
        stage: Option<StageArg>,
    },
    /// Full tool-driven session for one function.
    Run { spec: PathBuf },
    /// Run a suite and report acc_exe and acc_res.
    Eval { suite: PathBuf },
    /// Inspect the trajectory memory pool.
    Memory {
        #[command(subcommand)]
        action: MemoryAction,
    },
}

#[derive(Subcommand, Debug)]
enum MemoryAction {
    /// Print stored records as JSON.
    Inspect {
        #[arg(long)]
        category: Option<String>,
    },
    /// Print per-category min, median, max and count.
    Stats,
}

fn build_config(g: &GlobalOpts) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = g.$flag.clone() { $field = v; })*
        };
    }
    set! {
        profile => cfg.profile,
        profiles_dir => cfg.profiles_dir,
        repo => cfg.repo_root,
        out => cfg.out_dir,
        seed => cfg.seed,
        max_steps => cfg.max_steps,
        memory_pool => cfg.memory_pool,
        jobs => cfg.jobs,
        num_plans => cfg.num_plans,
        threshold => cfg.threshold,
        decay => cfg.decay,
        floor => cfg.floor,
        samples => cfg.samples,
    }
    if let Some(m) = g.llm_mode {
        cfg.llm.mode = match m {
            ModeArg::Live => LlmMode::Live,
            ModeArg::Record => LlmMode::Record,
            ModeArg::Replay => LlmMode::Replay,
        };
    }
    if let Some(t) = &g.transcript {
        cfg.llm.transcript = Some(t.clone());
    }
    if g.keep_failed {
        cfg.keep_failed = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn request(cfg: &RunConfig, spec: &Path) -> Result<SynthesisRequest> {
    Ok(SynthesisRequest {
        declaration: load_declaration(spec)?,
        repo_root: cfg.repo_root.clone(),
        profile: cfg.load_profile()?,
    })
}

fn verdict_code(pass: bool) -> u8 {
    if pass {
        0
    } else {
        1
    }
}

fn cmd_characterize(cfg: &RunConfig) -> Result<u8> {
    let profile = cfg.load_profile()?;
    let exec = Exec::default();
    let index = scan_repo_with(&cfg.repo_root, &profile, exec)?;
    let doc = characterize_index(
        &cfg.repo_root,
        &profile,
        &index,
        &cfg.characterize_config(),
        exec,
    )?;
    if index.is_empty() {
        eprintln!(
            "warning: no symbols found under {}",
            cfg.repo_root.display()
        );
    }
    for w in &doc.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&cfg.out_dir.join("characterization.json"), &doc)?;
    println!(
        "{} declaration(s), {} group(s), {} template(s)",
        doc.declarations.len(),
        doc.groups.len(),
        doc.pruned_units.len()
    );
    Ok(0)
}

fn single_tool(cfg: &RunConfig, spec: &Path, tools: &[&str], dry_run: bool) -> Result<u8> {
    let req = request(cfg, spec)?;
    let gateway = cfg.gateway()?;
    let mut state = SessionState::prepare(
        &req,
        &gateway,
        &cfg.session_config(),
        Artifacts::new(&cfg.out_dir),
    )?;
    let registry = builtin_registry();
    let mut status = ToolStatus::Success;
    for tool in tools {
        let r = registry.route(&mut state, tool, &Map::new());
        println!(
            "{tool}: [{}] {}",
            r.status.as_str(),
            state.scrub(&r.summary_line)
        );
        status = r.status;
        if status == ToolStatus::Failure {
            break;
        }
    }
    if dry_run {
        if let Some((token, _)) = state.applied.take() {
            dbforge_core::index::rollback(&token)?;
        }
    }
    Ok(verdict_code(status != ToolStatus::Failure))
}

fn cmd_validate(cfg: &RunConfig, spec: &Path, stage: Option<StageArg>) -> Result<u8> {
    let req = request(cfg, spec)?;
    let root = &req.repo_root;
    let profile = &req.profile;
    let files = list_source_files(root, profile)?;
    let report = match stage {
        Some(StageArg::Syntax) => {
            ValidationReport::from_outcomes(vec![validate_syntax(root, &files, profile)?])
        }
        Some(StageArg::Compliance) => {
            let (outcome, stderr) = validate_compliance(root, profile)?;
            std::fs::create_dir_all(&cfg.out_dir).ok();
            std::fs::write(cfg.out_dir.join("compliance_stderr.txt"), stderr)
                .map_err(|e| Error::Config(format!("writing compliance_stderr.txt: {e}")))?;
            ValidationReport::from_outcomes(vec![outcome])
        }
        Some(StageArg::Semantic) | None => {
            let gateway = cfg.gateway()?;
            let suite = load_suite(root, profile)?;
            let run = run_validation_pipeline(PipelineInput {
                root,
                profile,
                decl: &req.declaration,
                units: &[],
                files: &files,
                suite: &suite,
                gateway: &gateway,
            });
            if stage == Some(StageArg::Semantic) {
                let keep: Vec<_> = run
                    .report
                    .outcomes
                    .iter()
                    .filter(|o| o.stage == dbforge_core::validation::Stage::Semantic)
                    .cloned()
                    .collect();
                if keep.is_empty() {
                    run.report
                } else {
                    ValidationReport::from_outcomes(keep)
                }
            } else {
                run.report
            }
        }
    };
    write_json(&cfg.out_dir.join("validation_report.json"), &report)?;
    for o in &report.outcomes {
        println!("{:?}: {}", o.stage, if o.passed { "pass" } else { "fail" });
        for d in &o.diagnostics {
            println!("  {}", d.message);
        }
    }
    Ok(verdict_code(report.verdict.is_pass()))
}

fn cmd_run(cfg: &RunConfig, spec: &Path) -> Result<u8> {
    let req = request(cfg, spec)?;
    let gateway = cfg.gateway()?;
    let pool = MemoryPool::load(&cfg.memory_pool)?;
    let outcome = run_session(
        &req,
        &builtin_registry(),
        &pool,
        &gateway,
        &cfg.session_config(),
        Artifacts::new(&cfg.out_dir),
    )?;
    let record = outcome.record.clone();
    let pass = record.verdict.is_pass();
    let accepted = MemoryPool::update_file(&cfg.memory_pool, cfg.pool_cap, |p| {
        p.insert_trajectory(outcome.record)
    })?;
    println!(
        "{}: {} after {} step(s){}; memory pool {}",
        record.function_name,
        if pass { "pass" } else { "fail" },
        record.total_count,
        if outcome.forced_stop {
            " (step cap reached)"
        } else {
            ""
        },
        if accepted {
            "accepted the trajectory"
        } else {
            "rejected the trajectory"
        }
    );
    Ok(verdict_code(pass))
}

fn cmd_eval(cfg: &RunConfig, suite: &Path) -> Result<u8> {
    let (_, decls) = EvalSuite::load(suite)?;
    let gateway = cfg.gateway()?;
    let report = run_eval(&decls, cfg, &gateway, Exec::default())?;
    write_json(&cfg.out_dir.join("eval_report.json"), &report)?;
    print!("{}", report.table());
    Ok(0)
}

fn cmd_memory(cfg: &RunConfig, action: &MemoryAction) -> Result<u8> {
    let pool = MemoryPool::load(&cfg.memory_pool)?;
    match action {
        MemoryAction::Stats => {
            for (cat, s) in &pool.stats {
                println!("{cat}: {s}");
            }
        }
        MemoryAction::Inspect { category } => {
            let view: std::collections::BTreeMap<_, _> = pool
                .entries
                .iter()
                .filter(|(c, _)| category.as_ref().is_none_or(|want| want == *c))
                .collect();
            println!("{}", serde_json::to_string_pretty(&view)?);
        }
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let cfg = build_config(&cli.global)?;
    match &cli.command {
        Command::Characterize => cmd_characterize(&cfg),
        Command::Plan { spec } => single_tool(&cfg, spec, &["plan_agent"], false),
        Command::Synthesize {
            spec,
            with_plan,
            dry_run,
        } => {
            let tools: &[&str] = if *with_plan {
                &["plan_agent", "code_agent"]
            } else {
                &["code_agent"]
            };
            single_tool(&cfg, spec, tools, *dry_run)
        }
        Command::Validate { spec, stage } => cmd_validate(&cfg, spec, *stage),
        Command::Run { spec } => cmd_run(&cfg, spec),
        Command::Eval { suite } => cmd_eval(&cfg, suite),
        Command::Memory { action } => cmd_memory(&cfg, action),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
