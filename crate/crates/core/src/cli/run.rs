use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::geneig::ExtReal;
use crate::solvers::{self, ContinuationStep, HistoryEntry, SolveReport, SolverKind};
use crate::truss::TrussModel;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable overriding `options.seed`.
pub const SEED_ENV: &str = "GENEIG_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    SweepEps,
    Bisect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub nodes: Vec<[f64; 2]>,
    pub bars: Vec<[usize; 2]>,
    pub fixed_dofs: Vec<usize>,
    pub load_node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    /// Design variables.
    pub m: usize,
    /// Free degrees of freedom.
    pub n: usize,
    pub bar_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
}

impl ModelStats {
    pub fn of(model: &TrussModel) -> Self {
        let geometry = model.structure().map(|gs| Geometry {
            nodes: gs.nodes().to_vec(),
            bars: gs.bars().iter().map(|&(a, b)| [a, b]).collect(),
            fixed_dofs: gs.fixed_dofs().iter().copied().collect(),
            load_node: model.load_node().unwrap_or(0),
        });
        Self {
            m: model.num_vars(),
            n: model.dim(),
            bar_count: model.structure().map_or(model.num_vars(), |gs| gs.bars().len()),
            geometry,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSummary {
    pub eps: f64,
    pub obj_final: f64,
    pub obj_exact: ExtReal,
    pub distance_to_final: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// SHA-256 of the canonical configuration JSON.
    pub config_digest: String,
    pub command: Command,
    pub seed: u64,
    pub model: ModelStats,
    pub report: SolveReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub continuation: Vec<ContinuationSummary>,
    /// Informational.
    pub wall_time_s: f64,
    pub version: String,
}

/// Digest of the configuration as re-serialized after parsing, so key
/// order and whitespace do not matter.
pub fn config_digest(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config is serializable");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Applies `GENEIG_SEED` if set.
pub fn apply_seed_override(cfg: &mut RunConfig) -> Result<()> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.options.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}: not an unsigned integer: {v}")))?;
    }
    Ok(())
}

pub struct RunOutput {
    pub record: ResultRecord,
    pub history: Vec<HistoryEntry>,
}

pub fn execute(cfg: &RunConfig, command: Command) -> Result<RunOutput> {
    let start = Instant::now();
    let model = Arc::new(cfg.model()?);
    let stats = ModelStats::of(&model);
    let opts = &cfg.options;
    let (report, steps): (SolveReport, Vec<ContinuationStep>) = match command {
        Command::Solve if cfg.solver != SolverKind::Bisection => {
            let spec = cfg.problem_spec(Arc::clone(&model))?;
            let x0 = spec.feasible.uniform();
            (solvers::solve(&spec, cfg.solver, &x0, opts)?, Vec::new())
        }
        Command::Solve | Command::Bisect => {
            let mut exact_cfg = cfg.clone();
            exact_cfg.formulation = crate::problems::Formulation::Exact;
            let spec = exact_cfg.problem_spec(Arc::clone(&model))?;
            let (lo, hi) = match cfg.bracket {
                Some([lo, hi]) => (lo, hi),
                None => solvers::default_bracket(&spec, opts)?,
            };
            (solvers::bisection_global(&spec, lo, hi, opts)?, Vec::new())
        }
        Command::SweepEps => {
            let schedule = cfg
                .eps_schedule
                .clone()
                .ok_or_else(|| Error::InvalidConfig("eps_schedule: required for sweep-eps".into()))?;
            let spec = cfg.problem_spec(Arc::clone(&model))?.with_eps(schedule[0])?;
            let kind = if cfg.solver == SolverKind::Bisection {
                SolverKind::Subgradient
            } else {
                cfg.solver
            };
            let steps = solvers::eps_continuation(&spec, &schedule, kind, opts)?;
            let last = steps.last().expect("schedule is nonempty").report.clone();
            (last, steps)
        }
    };
    let history = if steps.is_empty() {
        report.history.clone()
    } else {
        steps.iter().flat_map(|s| s.report.history.iter().cloned()).collect()
    };
    let continuation = steps
        .iter()
        .map(|s| ContinuationSummary {
            eps: s.eps,
            obj_final: s.report.obj_final,
            obj_exact: s.report.obj_exact,
            distance_to_final: s.distance_to_final,
            iterations: s.report.iterations,
        })
        .collect();
    let record = ResultRecord {
        config_digest: config_digest(cfg),
        command,
        seed: opts.seed,
        model: stats,
        report,
        continuation,
        wall_time_s: start.elapsed().as_secs_f64(),
        version: VERSION.to_string(),
    };
    Ok(RunOutput { record, history })
}

pub fn write_history(path: &Path, history: &[HistoryEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for h in history {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_record(path: &Path, record: &ResultRecord) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(record)?)?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<ResultRecord> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// `<dir>/<stem>.<suffix>` next to `base`.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let stem = stem.strip_suffix(".result").unwrap_or(stem);
    base.with_file_name(format!("{stem}.{suffix}"))
}
