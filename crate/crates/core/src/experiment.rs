//! Config ingestion, paired-seed sweeps and CSV output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bcd::{self, BcdConfig, BcdOutcome, SolveError, SolverTrace};
use crate::benchmarks::{self, SaConfig};
use crate::irs::CommConfig;
use crate::mec::BnbConfig;
use crate::scenario::{self, generate_channels, FadingModel, ScenarioError, SystemParams, UserDisk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    BcdFpDc,
    Sa,
    BcdSa,
    BcdMse,
    RandPhase,
    NoIrs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::BcdFpDc,
        Algorithm::Sa,
        Algorithm::BcdSa,
        Algorithm::BcdMse,
        Algorithm::RandPhase,
        Algorithm::NoIrs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BcdFpDc => "bcd-fp-dc",
            Algorithm::Sa => "sa",
            Algorithm::BcdSa => "bcd-sa",
            Algorithm::BcdMse => "bcd-mse",
            Algorithm::RandPhase => "rand-phase",
            Algorithm::NoIrs => "no-irs",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                format!("unknown algorithm {s:?} (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    IrsElements,
    NumUsers,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::IrsElements => "irs_elements",
            SweepVariable::NumUsers => "num_users",
        }
    }

    /// `params` with this variable set to `value`.
    pub fn apply(self, params: &SystemParams, value: usize) -> SystemParams {
        match self {
            SweepVariable::IrsElements => params.with_irs_elements(value),
            SweepVariable::NumUsers => params.with_num_users(value),
        }
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "irs_elements" => Ok(SweepVariable::IrsElements),
            "num_users" => Ok(SweepVariable::NumUsers),
            _ => Err(format!("unknown sweep variable {s:?} (expected irs_elements or num_users)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: SystemParams,
    #[serde(default)]
    pub fading: FadingModel,
    /// when set, users are redrawn from this disk for every seed
    #[serde(default)]
    pub user_disk: Option<UserDisk>,
}

/// Solver knobs below the outer loop. All optional in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub mec: BnbConfig,
    pub comm: CommConfig,
    /// joint annealing (`sa`)
    pub sa: SaConfig,
    /// annealing inside each communication step (`bcd-sa`)
    pub bcd_sa: SaConfig,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mec: BcdConfig::default().mec,
            comm: CommConfig::default(),
            sa: SaConfig::default(),
            bcd_sa: SaConfig {
                total_evals: 2000,
                ..SaConfig::default()
            },
        }
    }
}

fn default_outer_iters() -> usize {
    BcdConfig::default().outer_iters
}

fn default_outer_tol() -> f64 {
    BcdConfig::default().rel_tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub algo: Algorithm,
    #[serde(default = "default_outer_iters")]
    pub outer_iters: usize,
    /// relative improvement per outer iteration below which a run stops
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverSettings,
    /// wall-clock times make reruns differ, so they are only written on request
    #[serde(default)]
    pub record_wallclock: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        let problems = cfg.validate();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.outer_iters == 0 {
            out.push("outer_iters must be at least 1".into());
        }
        if !(self.outer_tol > 0.0) {
            out.push(format!("outer_tol must be positive, got {}", self.outer_tol));
        }
        if let Some(s) = &self.sweep {
            if s.values.iter().any(|&v| v == 0) {
                out.push(format!("{} sweep values must be positive", s.variable.name()));
            }
        }
        out.extend(scenario::validate(&self.scenario.params).iter().map(|v| v.to_string()));
        out.extend(self.scenario.fading.validate());
        for (name, sa) in [("sa", &self.solver.sa), ("bcd_sa", &self.solver.bcd_sa)] {
            out.extend(sa.validate().into_iter().map(|e| format!("solver.{name}: {e}")));
        }
        out
    }

    pub fn bcd_config(&self) -> BcdConfig {
        BcdConfig {
            outer_iters: self.outer_iters,
            rel_tol: self.outer_tol,
            mec: self.solver.mec,
            comm: self.solver.comm,
        }
    }

    /// `(variable, value)` cells of the sweep; a single unnamed cell without one.
    pub fn cells(&self) -> Vec<Option<(SweepVariable, usize)>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some((s.variable, v))).collect(),
            None => vec![None],
        }
    }

    /// Scenario constants for one cell and seed.
    pub fn params_for(&self, cell: Option<(SweepVariable, usize)>, seed: u64) -> SystemParams {
        let mut p = match cell {
            Some((var, v)) => var.apply(&self.scenario.params, v),
            None => self.scenario.params.clone(),
        };
        if let Some(disk) = &self.scenario.user_disk {
            p = p.with_users_placed(disk, seed);
        }
        p
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("returned decision violates constraints: {}", .0.join("; "))]
    Infeasible(Vec<String>),
}

/// One algorithm on one realization: channels drawn from `seed`, every
/// algorithm started from the same seeded point.
pub fn run_single(
    cfg: &ExperimentConfig,
    algo: Algorithm,
    cell: Option<(SweepVariable, usize)>,
    seed: u64,
) -> Result<BcdOutcome, RunError> {
    let params = cfg.params_for(cell, seed);
    let ch = generate_channels(&params, &cfg.scenario.fading, seed)?;
    let bcd_cfg = cfg.bcd_config();
    let out = match algo {
        Algorithm::BcdFpDc => bcd::run_bcd_fp_dc(&params, &ch, &bcd_cfg, seed)?,
        Algorithm::Sa => benchmarks::sa_solve(&params, &ch, &SaConfig { seed, ..cfg.solver.sa })?,
        Algorithm::BcdSa => benchmarks::bcd_sa_solve(&params, &ch, &bcd_cfg, &SaConfig { seed, ..cfg.solver.bcd_sa })?,
        Algorithm::BcdMse => benchmarks::bcd_mse_solve(&params, &ch, &bcd_cfg, seed)?,
        Algorithm::RandPhase => benchmarks::rand_phase_solve(&params, &ch, &bcd_cfg, seed)?,
        Algorithm::NoIrs => benchmarks::no_irs_solve(&params, &ch, &bcd_cfg, seed)?,
    };
    let checked = if algo == Algorithm::NoIrs { params.with_irs_elements(0) } else { params };
    let violations = out.decision.constraint_violations(&checked, 1e-9);
    if !violations.is_empty() {
        return Err(RunError::Infeasible(violations));
    }
    Ok(out)
}

/// Result of one (algorithm, cell, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algo: Algorithm,
    pub cell: Option<(SweepVariable, usize)>,
    pub seed: u64,
    /// the trace, or the error text of a failed run
    pub result: Result<SolverTrace, String>,
    pub energy: f64,
    pub latency: f64,
}

impl RunRecord {
    pub fn run_id(&self) -> String {
        match self.cell {
            Some((var, v)) => format!("{}-{}{}-s{}", self.algo, var.name(), v, self.seed),
            None => format!("{}-s{}", self.algo, self.seed),
        }
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.result.as_ref().ok().map(SolverTrace::final_cost)
    }
}

/// Per-cell statistics over the successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algo: Algorithm,
    pub cell: Option<(SweepVariable, usize)>,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub mean_cost: f64,
    /// sample standard deviation; 0 with fewer than two seeds
    pub std_cost: f64,
    pub mean_energy: f64,
    pub mean_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<SummaryRow>,
}

/// Every cell × seed for `algos`, in (algo, cell, seed) order. Failed runs are
/// recorded and skipped in the statistics.
pub fn run_sweep_for(cfg: &ExperimentConfig, algos: &[Algorithm]) -> SweepResult {
    let mut runs = Vec::new();
    for &algo in algos {
        for cell in cfg.cells() {
            for &seed in &cfg.seeds {
                let clock = Instant::now();
                let rec = match run_single(cfg, algo, cell, seed) {
                    Ok(out) => RunRecord {
                        algo,
                        cell,
                        seed,
                        energy: out.breakdown.total_energy(),
                        latency: out.breakdown.total_latency(),
                        result: Ok(out.trace),
                    },
                    Err(e) => {
                        log::warn!("{algo} cell {cell:?} seed {seed} failed: {e}");
                        RunRecord {
                            algo,
                            cell,
                            seed,
                            energy: f64::NAN,
                            latency: f64::NAN,
                            result: Err(e.to_string()),
                        }
                    }
                };
                log::info!("{} done in {:.2}s", rec.run_id(), clock.elapsed().as_secs_f64());
                runs.push(rec);
            }
        }
    }
    runs.sort_by_key(|r| (r.algo, r.cell.map(|c| c.1), r.seed));
    let summaries = summarize(&runs);
    SweepResult { runs, summaries }
}

pub fn run_sweep(cfg: &ExperimentConfig) -> SweepResult {
    run_sweep_for(cfg, &[cfg.algo])
}

fn summarize(runs: &[RunRecord]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for r in runs {
        let idx = match out.iter().position(|s| s.algo == r.algo && s.cell == r.cell) {
            Some(i) => i,
            None => {
                out.push(SummaryRow {
                    algo: r.algo,
                    cell: r.cell,
                    n_seeds: 0,
                    n_failed: 0,
                    mean_cost: 0.0,
                    std_cost: 0.0,
                    mean_energy: 0.0,
                    mean_latency: 0.0,
                });
                out.len() - 1
            }
        };
        if r.result.is_err() {
            out[idx].n_failed += 1;
        }
    }
    for s in &mut out {
        let ok: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| r.algo == s.algo && r.cell == s.cell && r.result.is_ok())
            .collect();
        s.n_seeds = ok.len();
        if ok.is_empty() {
            s.mean_cost = f64::NAN;
            s.std_cost = f64::NAN;
            s.mean_energy = f64::NAN;
            s.mean_latency = f64::NAN;
            continue;
        }
        let n = ok.len() as f64;
        let costs: Vec<f64> = ok.iter().filter_map(|r| r.final_cost()).collect();
        s.mean_cost = costs.iter().sum::<f64>() / n;
        s.std_cost = if ok.len() < 2 {
            0.0
        } else {
            (costs.iter().map(|c| (c - s.mean_cost).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        s.mean_energy = ok.iter().map(|r| r.energy).sum::<f64>() / n;
        s.mean_latency = ok.iter().map(|r| r.latency).sum::<f64>() / n;
    }
    out
}

/// Twelve significant digits, shortest form.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    rounded.to_string()
}

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct OutputError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

/// The effective config as `config.json`, so outputs record their seeds and settings.
pub fn emit_config(cfg: &ExperimentConfig, dir: &Path) -> Result<(), OutputError> {
    let path = dir.join("config.json");
    let wrap = |source: std::io::Error| OutputError {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(dir).map_err(wrap)?;
    let text = serde_json::to_string_pretty(cfg).map_err(|e| wrap(e.into()))?;
    fs::write(&path, text + "\n").map_err(wrap)
}

fn cell_fields(cell: Option<(SweepVariable, usize)>) -> (String, String) {
    match cell {
        Some((var, v)) => (var.name().to_string(), v.to_string()),
        None => ("none".to_string(), String::new()),
    }
}

/// Writes `convergence.csv`, `sweep.csv` and, when any run failed,
/// `failures.csv` under `dir`.
pub fn emit_outputs(result: &SweepResult, dir: &Path, record_wallclock: bool) -> Result<(), OutputError> {
    let err = |path: &Path| {
        let path = path.to_path_buf();
        move |source: std::io::Error| OutputError { path, source }
    };
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| OutputError {
            path,
            source: e.into(),
        }
    };
    fs::create_dir_all(dir).map_err(err(dir))?;

    let path = dir.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record([
        "run_id",
        "algo",
        "sweep_value",
        "seed",
        "iteration",
        "cost",
        "energy",
        "latency",
        "wallclock_s",
    ])
    .map_err(csv_err(&path))?;
    for r in &result.runs {
        let Ok(trace) = &r.result else { continue };
        let (_, value) = cell_fields(r.cell);
        for row in &trace.rows {
            w.write_record([
                r.run_id(),
                r.algo.to_string(),
                value.clone(),
                r.seed.to_string(),
                row.iteration.to_string(),
                fmt_num(row.cost),
                fmt_num(row.energy),
                fmt_num(row.latency),
                if record_wallclock { fmt_num(row.wallclock_s) } else { String::new() },
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(err(&path))?;

    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record([
        "algo",
        "sweep_variable",
        "sweep_value",
        "n_seeds",
        "mean_cost",
        "std_cost",
        "mean_energy",
        "mean_latency",
    ])
    .map_err(csv_err(&path))?;
    for s in &result.summaries {
        let (var, value) = cell_fields(s.cell);
        w.write_record([
            s.algo.to_string(),
            var,
            value,
            s.n_seeds.to_string(),
            fmt_num(s.mean_cost),
            fmt_num(s.std_cost),
            fmt_num(s.mean_energy),
            fmt_num(s.mean_latency),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(err(&path))?;

    let failed: Vec<&RunRecord> = result.runs.iter().filter(|r| r.result.is_err()).collect();
    let path = dir.join("failures.csv");
    if failed.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(err(&path))?;
        }
        return Ok(());
    }
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["run_id", "algo", "sweep_value", "seed", "error"]).map_err(csv_err(&path))?;
    for r in failed {
        let (_, value) = cell_fields(r.cell);
        let msg = r.result.as_ref().err().cloned().unwrap_or_default();
        w.write_record([r.run_id(), r.algo.to_string(), value, r.seed.to_string(), msg])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            scenario: Scenario {
                params: SystemParams::reference(2, 4),
                fading: FadingModel::default(),
                user_disk: Some(UserDisk::default()),
            },
            algo: Algorithm::BcdFpDc,
            outer_iters: 3,
            outer_tol: 1e-4,
            seeds,
            sweep: None,
            output_dir: PathBuf::from("out"),
            solver: SolverSettings::default(),
            record_wallclock: false,
        }
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("bcd".parse::<Algorithm>().is_err());
        assert_eq!("num_users".parse::<SweepVariable>().unwrap(), SweepVariable::NumUsers);
    }

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(5.0), "5");
        assert_eq!(fmt_num(123456.7890123456), "123456.789012");
        assert_eq!(fmt_num(0.0), "0");
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg = config(vec![1, 2]);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("solver");
        obj.remove("outer_iters");
        obj.remove("record_wallclock");
        let parsed = ExperimentConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(parsed.outer_iters, 60);
        assert_eq!(parsed.solver, SolverSettings::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = config(vec![0]);
        cfg.outer_iters = 0;
        cfg.outer_tol = 0.0;
        cfg.sweep = Some(Sweep {
            variable: SweepVariable::NumUsers,
            values: vec![1, 0],
        });
        assert_eq!(cfg.validate().len(), 3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(matches!(ExperimentConfig::from_json(&text), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::from_json("{\"algo\": 3}"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn empty_seed_list_gives_empty_table() {
        let res = run_sweep(&config(vec![]));
        assert!(res.runs.is_empty() && res.summaries.is_empty());
    }

    #[test]
    fn summary_statistics() {
        let trace = |c: f64| SolverTrace {
            initial_cost: 10.0,
            rows: vec![bcd::TraceRow {
                iteration: 1,
                cost: c,
                energy: 0.0,
                latency: 0.0,
                wallclock_s: 0.0,
            }],
            converged: true,
        };
        let rec = |seed, result| RunRecord {
            algo: Algorithm::Sa,
            cell: Some((SweepVariable::NumUsers, 2)),
            seed,
            result,
            energy: 1.0,
            latency: 2.0,
        };
        let runs = vec![rec(0, Ok(trace(1.0))), rec(1, Ok(trace(3.0))), rec(2, Err("boom".into()))];
        let s = summarize(&runs);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].n_seeds, s[0].n_failed), (2, 1));
        assert_eq!(s[0].mean_cost, 2.0);
        assert!((s[0].std_cost - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sweep_cells_change_the_swept_field_only() {
        let mut cfg = config(vec![3]);
        cfg.sweep = Some(Sweep {
            variable: SweepVariable::IrsElements,
            values: vec![4, 16],
        });
        let cells = cfg.cells();
        let a = cfg.params_for(cells[0], 3);
        let b = cfg.params_for(cells[1], 3);
        assert_eq!((a.irs_elements, b.irs_elements), (4, 16));
        assert_eq!(a.with_irs_elements(16), b);
    }
}
