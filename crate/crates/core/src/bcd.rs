//! Block coordinate descent over the computation block `(ℓ, f^E)` and the
//! communication block `(F, θ)`.

use std::f64::consts::TAU;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irs::{self, CommConfig, IrsError};
use crate::links::PerLink;
use crate::mec::{self, BnbConfig, MecError};
use crate::metrics::{self, Beam, CostBreakdown, Decision, MetricsError};
use crate::scenario::{complex_gaussian, rng_for, stream, ChannelSet, SystemParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("offloading block: {0}")]
    Mec(#[from] MecError),
    #[error("communication block: {0}")]
    Comm(#[from] IrsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Outer-loop settings shared by every BCD variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcdConfig {
    /// maximum outer iterations `N`
    pub outer_iters: usize,
    /// stop once an iteration improves the cost by less than this fraction
    pub rel_tol: f64,
    pub mec: BnbConfig,
    pub comm: CommConfig,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            outer_iters: 60,
            rel_tol: 1e-4,
            // The relaxation gap closes slowly with K ≥ 3 (see README); the
            // incumbent comes from the local CPU search, so a short search
            // suffices inside the loop.
            mec: BnbConfig {
                rel_gap: 1e-4,
                node_budget: 20,
            },
            comm: CommConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub energy: f64,
    pub latency: f64,
    pub wallclock_s: f64,
}

/// Per-iteration record of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverTrace {
    pub initial_cost: f64,
    pub rows: Vec<TraceRow>,
    /// stopped on the tolerance rather than the iteration cap
    pub converged: bool,
}

impl SolverTrace {
    pub fn final_cost(&self) -> f64 {
        self.rows.last().map_or(self.initial_cost, |r| r.cost)
    }

    /// First iteration whose improvement over the previous cost is below
    /// `rel` of that cost.
    pub fn iterations_to(&self, rel: f64) -> Option<usize> {
        let mut prev = self.initial_cost;
        for r in &self.rows {
            if prev - r.cost < rel * prev.abs() {
                return Some(r.iteration);
            }
            prev = r.cost;
        }
        None
    }

    /// Largest increase between consecutive costs (0 for a monotone trace).
    pub fn worst_increase(&self) -> f64 {
        let mut prev = self.initial_cost;
        let mut worst = 0.0f64;
        for r in &self.rows {
            worst = worst.max(r.cost - prev);
            prev = r.cost;
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdOutcome {
    pub decision: Decision,
    pub breakdown: CostBreakdown,
    pub trace: SolverTrace,
}

/// Uniform draw from the unit ball of `C^n`.
pub(crate) fn ball_uniform(rng: &mut impl Rng, n: usize) -> Beam {
    let v: Beam = (0..n).map(|_| complex_gaussian(rng)).collect();
    let norm = crate::linalg::vec_norm_sq(&v).sqrt();
    let radius = rng.random::<f64>().powf(1.0 / (2 * n) as f64);
    v.into_iter().map(|z| z * (radius / norm)).collect()
}

/// Random beams and phases, `ℓ = L/(2Q)` on every link, equal CPU shares.
pub fn initial_decision(params: &SystemParams, seed: u64) -> Decision {
    let (qn, kn) = (params.num_cells, params.num_users);
    let mut beam_rng = rng_for(seed, stream::INIT_BEAM);
    let mut phase_rng = rng_for(seed, stream::INIT_PHASE);
    Decision {
        beamformers: PerLink::from_fn(qn, kn, |_, _| ball_uniform(&mut beam_rng, params.user_antennas)),
        phases: (0..params.irs_elements).map(|_| phase_rng.random_range(0.0..TAU)).collect(),
        offload: PerLink::from_fn(qn, kn, |_, k| params.task_bits[k] / (2 * qn) as f64),
        edge_cpu: PerLink::from_fn(qn, kn, |q, _| params.edge_cpu_total[q] / kn as f64),
    }
}

/// The offloading half of an outer iteration: rates at the current `(F, θ)`,
/// then branch-and-bound warm-started from the current split.
pub fn mec_step(
    dec: &Decision,
    ch: &ChannelSet,
    params: &SystemParams,
    cfg: &BnbConfig,
) -> Result<Decision, SolveError> {
    let hbar = metrics::effective_channel(ch, &dec.phases)?;
    let rates = metrics::rates_logdet(&hbar, &dec.beamformers, params.noise_var)?;
    // a split the current rates cannot carry is not a valid warm start
    let warm_ok = metrics::cost_with_rates(&dec.offload, &dec.edge_cpu, rates.clone(), params).is_ok();
    let warm = warm_ok.then_some((&dec.offload, &dec.edge_cpu));
    let sol = mec::solve_mec(params, &rates, *cfg, warm)?;
    Ok(Decision {
        offload: sol.offload,
        edge_cpu: sol.edge_cpu,
        ..dec.clone()
    })
}

/// Generic outer loop: alternate [`mec_step`] with `comm` until the relative
/// improvement drops below `rel_tol` or `outer_iters` is reached.
pub fn run_bcd<F>(
    params: &SystemParams,
    ch: &ChannelSet,
    init: Decision,
    cfg: &BcdConfig,
    mut comm: F,
) -> Result<BcdOutcome, SolveError>
where
    F: FnMut(&Decision) -> Result<Decision, SolveError>,
{
    let clock = Instant::now();
    let mut dec = init;
    let mut breakdown = metrics::total_cost(&dec, ch, params)?;
    let mut trace = SolverTrace {
        initial_cost: breakdown.total,
        ..SolverTrace::default()
    };
    let mut prev = breakdown.total;
    for it in 1..=cfg.outer_iters {
        dec = mec_step(&dec, ch, params, &cfg.mec)?;
        dec = comm(&dec)?;
        breakdown = metrics::total_cost(&dec, ch, params)?;
        trace.rows.push(TraceRow {
            iteration: it,
            cost: breakdown.total,
            energy: breakdown.total_energy(),
            latency: breakdown.total_latency(),
            wallclock_s: clock.elapsed().as_secs_f64(),
        });
        log::debug!("bcd iteration {it}: cost {:.9e}", breakdown.total);
        if prev - breakdown.total < cfg.rel_tol * prev.abs() {
            trace.converged = true;
            break;
        }
        prev = breakdown.total;
    }
    Ok(BcdOutcome {
        decision: dec,
        breakdown,
        trace,
    })
}

/// BCD with the FP/MM communication solver.
pub fn run_bcd_fp_dc(
    params: &SystemParams,
    ch: &ChannelSet,
    cfg: &BcdConfig,
    seed: u64,
) -> Result<BcdOutcome, SolveError> {
    run_bcd(params, ch, initial_decision(params, seed), cfg, |d| {
        Ok(irs::solve_comm_subproblem(d, ch, params, &cfg.comm)?.decision)
    })
}
