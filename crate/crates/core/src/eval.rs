//! Evaluation harness: runs a suite of function specs, each in its own
//! copy of the repository, and reports integration and result accuracy.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::characterize::FunctionDeclaration;
use crate::config::RunConfig;
use crate::exec::Exec;
use crate::llm::Gateway;
use crate::orchestration::{
    builtin_registry, run_session, Artifacts, MemoryPool, SynthesisRequest, TrajectoryRecord,
};
use crate::profile::DbProfile;
use crate::{Error, Result, SCHEMA_VERSION};

/// Reads a function spec: a [`FunctionDeclaration`] as TOML, or as JSON
/// when the file ends in `.json`.
pub fn load_declaration(path: &Path) -> Result<FunctionDeclaration> {
    let text = crate::util::read_to_string(path)?;
    let decl: FunctionDeclaration = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    decl.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(decl)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSuite {
    /// Function spec files, relative to the suite file.
    pub functions: Vec<PathBuf>,
}

impl EvalSuite {
    /// Loads a suite and resolves its spec paths.
    pub fn load(path: &Path) -> Result<(Self, Vec<FunctionDeclaration>)> {
        let text = crate::util::read_to_string(path)?;
        let suite: EvalSuite =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if suite.functions.is_empty() {
            return Err(Error::Config(format!(
                "{}: suite lists no functions",
                path.display()
            )));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let decls = suite
            .functions
            .iter()
            .map(|f| load_declaration(&base.join(f)))
            .collect::<Result<Vec<_>>>()?;
        Ok((suite, decls))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub category: String,
    /// The last validation got through the build.
    pub verdict_exe: bool,
    /// The session passed every stage.
    pub verdict_res: bool,
    pub steps: usize,
    /// Set when the session could not run at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Kept out of the report file so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub rows: Vec<EvalRow>,
    pub acc_exe: f64,
    pub acc_res: f64,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let exe = rows.iter().filter(|r| r.verdict_exe).count() as f64;
        let res = rows.iter().filter(|r| r.verdict_res).count() as f64;
        EvalReport {
            version: SCHEMA_VERSION,
            rows,
            acc_exe: exe / n,
            acc_res: res / n,
        }
    }

    /// Fractions in range and every result pass also integrated.
    pub fn is_consistent(&self) -> bool {
        self.acc_res <= self.acc_exe
            && (0.0..=1.0).contains(&self.acc_exe)
            && self.rows.iter().all(|r| r.verdict_exe || !r.verdict_res)
    }

    pub fn table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(4)
            .max(8);
        let mut out = format!(
            "{:<width$}  {:<10}  {:>4}  {:>4}  {:>5}  {:>8}\n",
            "function", "category", "exe", "res", "steps", "ms"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:<10}  {:>4}  {:>4}  {:>5}  {:>8}\n",
                r.name,
                r.category,
                if r.verdict_exe { "yes" } else { "no" },
                if r.verdict_res { "yes" } else { "no" },
                r.steps,
                r.wall_time_ms
            ));
        }
        out.push_str(&format!(
            "acc_exe={:.4} acc_res={:.4}\n",
            self.acc_exe, self.acc_res
        ));
        out
    }
}

fn skip_in_copy(rel: &Path) -> bool {
    rel.components()
        .next()
        .is_some_and(|c| matches!(c.as_os_str().to_str(), Some(".git" | "build" | "target")))
}

/// Copies a repository tree, leaving out VCS data and build output.
pub fn copy_repo(from: &Path, to: &Path) -> Result<()> {
    for entry in walkdir::WalkDir::new(from).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Config(format!("walking {}: {e}", from.display())))?;
        let rel = entry
            .path()
            .strip_prefix(from)
            .expect("walk stays under root");
        if rel.as_os_str().is_empty() || skip_in_copy(rel) {
            continue;
        }
        let dest = to.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
        } else if entry.file_type().is_file() {
            std::fs::copy(entry.path(), &dest).map_err(|e| Error::io(&dest, e))?;
        }
    }
    Ok(())
}

struct SessionRun {
    row: EvalRow,
    record: Option<TrajectoryRecord>,
}

fn evaluate_one(
    decl: &FunctionDeclaration,
    cfg: &RunConfig,
    profile: &DbProfile,
    pool: &MemoryPool,
    gateway: &Gateway,
) -> SessionRun {
    let started = Instant::now();
    let run = || -> Result<crate::orchestration::SessionOutcome> {
        let scratch = tempfile::tempdir().map_err(|e| Error::io(Path::new("tempdir"), e))?;
        copy_repo(&cfg.repo_root, scratch.path())?;
        let request = SynthesisRequest {
            declaration: decl.clone(),
            repo_root: scratch.path().to_path_buf(),
            profile: profile.clone(),
        };
        let artifacts = Artifacts::new(cfg.out_dir.join(&decl.name));
        run_session(
            &request,
            &builtin_registry(),
            pool,
            gateway,
            &cfg.session_config(),
            artifacts,
        )
    };
    match run() {
        Ok(outcome) => SessionRun {
            row: EvalRow {
                name: decl.name.clone(),
                category: decl.category.clone(),
                verdict_exe: outcome
                    .last_report
                    .as_ref()
                    .is_some_and(|r| r.compliance_passed()),
                verdict_res: outcome.record.verdict.is_pass(),
                steps: outcome.record.total_count,
                error: None,
                wall_time_ms: started.elapsed().as_millis(),
            },
            record: Some(outcome.record),
        },
        Err(e) => {
            log::error!("{}: session crashed: {e}", decl.name);
            SessionRun {
                row: EvalRow {
                    name: decl.name.clone(),
                    category: decl.category.clone(),
                    verdict_exe: false,
                    verdict_res: false,
                    steps: 0,
                    error: Some(e.to_string()),
                    wall_time_ms: started.elapsed().as_millis(),
                },
                record: None,
            }
        }
    }
}

/// Runs every declaration up to `cfg.jobs` at a time. All sessions see the
/// pool as it was when the evaluation started; their records are offered
/// to the pool afterwards in suite order, so results do not depend on
/// scheduling.
pub fn run_eval(
    decls: &[FunctionDeclaration],
    cfg: &RunConfig,
    gateway: &Gateway,
    exec: Exec,
) -> Result<EvalReport> {
    if decls.is_empty() {
        return Err(Error::Config("evaluation suite is empty".into()));
    }
    let profile = cfg.load_profile()?;
    let pool = MemoryPool::load(&cfg.memory_pool)?;
    let runs = exec.map_with_jobs(cfg.jobs, decls, |d| {
        evaluate_one(d, cfg, &profile, &pool, gateway)
    });
    let mut rows = Vec::with_capacity(runs.len());
    let mut records = Vec::new();
    for r in runs {
        rows.push(r.row);
        records.extend(r.record);
    }
    MemoryPool::update_file(&cfg.memory_pool, cfg.pool_cap, |p| {
        for rec in records {
            let name = rec.function_name.clone();
            let accepted = p.insert_trajectory(rec);
            log::info!(
                "memory pool: {name} {}",
                if accepted { "accepted" } else { "rejected" }
            );
        }
    })?;
    let report = EvalReport::from_rows(rows);
    debug_assert!(report.is_consistent());
    Ok(report)
}
