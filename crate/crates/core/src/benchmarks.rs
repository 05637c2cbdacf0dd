//! Baselines: simulated annealing (joint, and as the communication step of
//! BCD), WMMSE inside BCD, and BCD with random or no IRS phases.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bcd::{self, BcdConfig, BcdOutcome, SolveError, SolverTrace, TraceRow};
use crate::irs::{self, build_subproblem, stack_beams, unstack_beams, Block, CommUpdate, IrsError, LinkWeights, Surrogate};
use crate::linalg::{self, dot_h};
use crate::links::PerLink;
use crate::mec;
use crate::metrics::{self, Beam, Decision, MetricsError};
use crate::scenario::{rng_for, stream, ChannelSet, SystemParams};
use crate::CMat64;

/// Fraction of the tuning proposals the initial temperature should accept.
const TARGET_ACCEPTANCE: f64 = 0.8;
const TUNING_PROPOSALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    /// `None` tunes it from the first proposals
    pub initial_temp: Option<f64>,
    pub cooling: f64,
    pub steps_per_temp: usize,
    pub total_evals: usize,
    /// radians
    pub phase_scale: f64,
    /// per beamformer entry
    pub beam_scale: f64,
    /// fraction of the user's task bits
    pub offload_scale: f64,
    /// fraction of the server's capacity
    pub cpu_scale: f64,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            initial_temp: None,
            cooling: 0.95,
            steps_per_temp: 100,
            total_evals: 20_000,
            phase_scale: 0.3,
            beam_scale: 0.1,
            offload_scale: 0.05,
            cpu_scale: 0.05,
            seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            out.push(format!("cooling must lie in (0,1), got {}", self.cooling));
        }
        if self.steps_per_temp == 0 {
            out.push("steps_per_temp must be positive".into());
        }
        if let Some(t) = self.initial_temp {
            if !(t > 0.0) {
                out.push(format!("initial_temp must be positive, got {t}"));
            }
        }
        for (name, v) in [
            ("phase_scale", self.phase_scale),
            ("beam_scale", self.beam_scale),
            ("offload_scale", self.offload_scale),
            ("cpu_scale", self.cpu_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        out
    }
}

/// Which blocks a proposal touches.
#[derive(Debug, Clone, Copy)]
struct Moves {
    comm: bool,
    mec: bool,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn propose(dec: &Decision, params: &SystemParams, cfg: &SaConfig, moves: Moves, rng: &mut ChaCha8Rng) -> Decision {
    let mut d = dec.clone();
    if moves.comm {
        for t in &mut d.phases {
            *t = metrics::wrap_phase(*t + cfg.phase_scale * gauss(rng));
        }
        for b in d.beamformers.iter_mut() {
            for z in b.iter_mut() {
                *z += Complex64::new(gauss(rng), gauss(rng)) * (cfg.beam_scale * std::f64::consts::FRAC_1_SQRT_2);
            }
            let n = linalg::vec_norm_sq(b).sqrt();
            if n > 1.0 {
                b.iter_mut().for_each(|z| *z /= n);
            }
        }
    }
    if moves.mec {
        let (qn, kn) = (params.num_cells, params.num_users);
        for k in 0..kn {
            let cap = params.task_bits[k];
            for q in 0..qn {
                let l = &mut d.offload[(q, k)];
                *l = (*l + cfg.offload_scale * cap * gauss(rng)).max(0.0);
            }
            let sent: f64 = (0..qn).map(|q| d.offload[(q, k)]).sum();
            if sent > cap {
                for q in 0..qn {
                    d.offload[(q, k)] *= cap / sent;
                }
            }
        }
        for q in 0..qn {
            let cap = params.edge_cpu_total[q];
            let row: Vec<f64> = (0..kn)
                .map(|k| (d.edge_cpu[(q, k)] + cfg.cpu_scale * cap * gauss(rng)).max(0.0))
                .collect();
            let row = mec::project_capacity(&row, cap);
            for (k, f) in row.into_iter().enumerate() {
                d.edge_cpu[(q, k)] = f;
                // a server with no cycles for k cannot take its bits
                if f <= 0.0 {
                    d.offload[(q, k)] = 0.0;
                }
            }
        }
    }
    d
}

/// Temperature at which the Metropolis rule accepts `TARGET_ACCEPTANCE` of
/// moves with cost changes `deltas`.
fn tune_temperature(deltas: &[f64], reference: f64) -> f64 {
    let fallback = 1e-3 * reference.abs().max(1e-300);
    let uphill: Vec<f64> = deltas.iter().copied().filter(|d| *d > 0.0).collect();
    if uphill.is_empty() {
        return fallback;
    }
    let n = deltas.len() as f64;
    let downhill = n - uphill.len() as f64;
    let acceptance = |t: f64| (downhill + uphill.iter().map(|d| (-d / t).exp()).sum::<f64>()) / n;
    let scale = uphill.iter().sum::<f64>() / uphill.len() as f64;
    let (mut lo, mut hi) = ((scale * 1e-9).ln(), (scale * 1e9).ln());
    if acceptance(lo.exp()) >= TARGET_ACCEPTANCE {
        return lo.exp();
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if acceptance(mid.exp()) < TARGET_ACCEPTANCE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.exp()
}

/// Metropolis search from `start`; `eval` returns `None` for rejected
/// points. Calls `on_level` with the best point after each temperature.
#[allow(clippy::too_many_arguments)]
fn anneal(
    start: Decision,
    start_cost: f64,
    params: &SystemParams,
    cfg: &SaConfig,
    moves: Moves,
    rng: &mut ChaCha8Rng,
    mut eval: impl FnMut(&Decision) -> Option<f64>,
    mut on_level: impl FnMut(usize, &Decision, f64),
) -> (Decision, f64) {
    if cfg.total_evals == 0 {
        return (start, start_cost);
    }
    let mut temp = match cfg.initial_temp {
        Some(t) => t,
        None => {
            let deltas: Vec<f64> = (0..TUNING_PROPOSALS)
                .filter_map(|_| eval(&propose(&start, params, cfg, moves, rng)).map(|c| c - start_cost))
                .collect();
            tune_temperature(&deltas, start_cost)
        }
    };
    let (mut cur, mut cur_cost) = (start.clone(), start_cost);
    let (mut best, mut best_cost) = (start, start_cost);
    let mut level = 0;
    for i in 1..=cfg.total_evals {
        let cand = propose(&cur, params, cfg, moves, rng);
        if let Some(c) = eval(&cand) {
            let delta = c - cur_cost;
            if delta <= 0.0 || rng.random::<f64>() < (-delta / temp).exp() {
                cur = cand;
                cur_cost = c;
                if c < best_cost {
                    best = cur.clone();
                    best_cost = c;
                }
            }
        }
        if i % cfg.steps_per_temp == 0 || i == cfg.total_evals {
            level += 1;
            on_level(level, &best, best_cost);
            temp *= cfg.cooling;
        }
    }
    (best, best_cost)
}

/// Joint annealing over `(F, θ, ℓ, f^E)` from the usual random start. The
/// trace records the best point after every temperature level.
pub fn sa_solve(params: &SystemParams, ch: &ChannelSet, cfg: &SaConfig) -> Result<BcdOutcome, SolveError> {
    let clock = std::time::Instant::now();
    let init = bcd::initial_decision(params, cfg.seed);
    let init_cost = metrics::total_cost(&init, ch, params)?.total;
    let mut rng = rng_for(cfg.seed, stream::SA);
    let mut rows = Vec::new();
    let moves = Moves { comm: true, mec: true };
    let eval = |d: &Decision| metrics::total_cost(d, ch, params).ok().map(|b| b.total);
    let (best, _) = anneal(init, init_cost, params, cfg, moves, &mut rng, eval, |level, d, _| {
        if let Ok(b) = metrics::total_cost(d, ch, params) {
            rows.push(TraceRow {
                iteration: level,
                cost: b.total,
                energy: b.total_energy(),
                latency: b.total_latency(),
                wallclock_s: clock.elapsed().as_secs_f64(),
            });
        }
    });
    let breakdown = metrics::total_cost(&best, ch, params)?;
    Ok(BcdOutcome {
        decision: best,
        breakdown,
        trace: SolverTrace {
            initial_cost: init_cost,
            rows,
            converged: false,
        },
    })
}

/// BCD whose communication step anneals `(F, θ)` with `(ℓ, f^E)` held. With
/// `refit_offload` set, candidates are scored (and the result returned) with
/// `ℓ` re-balanced for the current CPU split, as the FP/MM step does.
pub fn bcd_sa_solve(
    params: &SystemParams,
    ch: &ChannelSet,
    cfg: &BcdConfig,
    sa: &SaConfig,
) -> Result<BcdOutcome, SolveError> {
    let mut outer = 0u64;
    let refit = cfg.comm.refit_offload;
    bcd::run_bcd(params, ch, bcd::initial_decision(params, sa.seed), cfg, |d| {
        outer += 1;
        let start_cost = metrics::total_cost(d, ch, params)?.total;
        if d.offload.iter().all(|&l| l <= 0.0) {
            return Ok(d.clone());
        }
        let mut rng = rng_for(sa.seed, stream::SA | outer);
        let moves = Moves { comm: true, mec: false };
        let eval = |x: &Decision| -> Option<f64> {
            if refit {
                let hbar = metrics::effective_channel(ch, &x.phases).ok()?;
                let rates = metrics::rates_logdet(&hbar, &x.beamformers, params.noise_var).ok()?;
                let model = mec::build_qcp(params, &rates).ok()?;
                Some(mec::fixed_cpu_cost(&model, &x.edge_cpu))
            } else {
                metrics::total_cost(x, ch, params).ok().map(|b| b.total)
            }
        };
        let start_score = eval(d).unwrap_or(start_cost);
        let (mut best, _) = anneal(d.clone(), start_score, params, sa, moves, &mut rng, eval, |_, _, _| {});
        if refit {
            let hbar = metrics::effective_channel(ch, &best.phases)?;
            let rates = metrics::rates_logdet(&hbar, &best.beamformers, params.noise_var)?;
            if let Ok(p) = mec::build_qcp(params, &rates).and_then(|m| mec::best_offload_for_cpu(&m, &best.edge_cpu)) {
                best.offload = p.offload;
            }
        }
        // never hand back something worse than what came in
        match metrics::total_cost(&best, ch, params) {
            Ok(b) if b.total <= start_cost => Ok(best),
            _ => Ok(d.clone()),
        }
    })
}

/// Per-link MMSE decoders, their errors and the weights `W = 1/E`.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub decoders: PerLink<Vec<Complex64>>,
    pub mse: PerLink<f64>,
    pub weights: PerLink<f64>,
}

/// `U = (J + H̄F Fᴴ H̄ᴴ)⁻¹ H̄F`.
pub fn wmmse_update_u(
    hbar: &PerLink<CMat64>,
    beams: &PerLink<Beam>,
    noise_var: f64,
    q: usize,
    k: usize,
) -> Result<Vec<Complex64>, MetricsError> {
    let s = metrics::stream_at(hbar, beams, q, q, k);
    let mut t = metrics::interference_cov(hbar, beams, noise_var, q, k)?;
    t.add_outer(&s, 1.0);
    Ok(linalg::solve_hpd(&t, &CMat64::column(&s))?.into_vec())
}

/// `E = |1 − Uᴴ H̄F|² + Uᴴ J U` and `W = 1/E`.
pub fn wmmse_update_we(
    hbar: &PerLink<CMat64>,
    beams: &PerLink<Beam>,
    u: &[Complex64],
    noise_var: f64,
    q: usize,
    k: usize,
) -> Result<(f64, f64), IrsError> {
    let s = metrics::stream_at(hbar, beams, q, q, k);
    let j = metrics::interference_cov(hbar, beams, noise_var, q, k)?;
    let e = (Complex64::new(1.0, 0.0) - dot_h(u, &s)).norm_sqr() + dot_h(u, &j.mul_vec(u)).re;
    if !(e > 0.0) {
        return Err(IrsError::DegenerateMse { q, k });
    }
    Ok((e, 1.0 / e))
}

impl WmmseState {
    pub fn refresh(hbar: &PerLink<CMat64>, beams: &PerLink<Beam>, noise_var: f64) -> Result<Self, IrsError> {
        let (qn, kn) = (beams.num_cells(), beams.num_users());
        let mut decoders = PerLink::filled(qn, kn, Vec::new());
        let mut mse = PerLink::filled(qn, kn, 0.0);
        let mut weights = PerLink::filled(qn, kn, 0.0);
        for q in 0..qn {
            for k in 0..kn {
                let u = wmmse_update_u(hbar, beams, noise_var, q, k)?;
                let (e, w) = wmmse_update_we(hbar, beams, &u, noise_var, q, k)?;
                decoders[(q, k)] = u;
                mse[(q, k)] = e;
                weights[(q, k)] = w;
            }
        }
        Ok(Self { decoders, mse, weights })
    }

    /// `Σ ω (ln W − W E + 1)` in quadratic form: charge `ωW UUᴴ`, credit `2ωW U`.
    fn surrogate(&self, link_weight: &PerLink<f64>, n_bs: usize) -> Surrogate {
        let (qn, kn) = (self.weights.num_cells(), self.weights.num_users());
        let mut quad = PerLink::filled(qn, kn, CMat64::zeros(n_bs, n_bs));
        let mut linear = PerLink::filled(qn, kn, vec![Complex64::new(0.0, 0.0); n_bs]);
        for ((q, k), &w) in link_weight.indexed() {
            if w <= 0.0 {
                continue;
            }
            let c = w * self.weights[(q, k)];
            let u = &self.decoders[(q, k)];
            quad[(q, k)].add_outer(u, c);
            linear[(q, k)] = u.iter().map(|z| z * (2.0 * c)).collect();
        }
        Surrogate { quad, linear }
    }
}

/// WMMSE sweeps for the communication block: refresh `(U, W)`, re-solve one
/// block, repeat. Ascends the weighted log-det sum rate.
struct Wmmse {
    sweeps: usize,
}

impl CommUpdate for Wmmse {
    fn update(
        &self,
        weights: &LinkWeights,
        ch: &ChannelSet,
        reflection: &mut Vec<Complex64>,
        beams: &mut PerLink<Beam>,
        optimize_phases: bool,
    ) -> Result<f64, IrsError> {
        let objective = |refl: &[Complex64], b: &PerLink<Beam>| -> Result<f64, IrsError> {
            let hbar = metrics::effective_channel_with(ch, refl)?;
            let r = metrics::rates_logdet(&hbar, b, 1.0)?;
            Ok(weights.weight.indexed().map(|(i, &w)| w * r[i]).sum())
        };
        let mut obj = objective(reflection, beams)?;
        let blocks: &[Block] = if optimize_phases && ch.irs_elements() > 0 {
            &[Block::Phases, Block::Beams]
        } else {
            &[Block::Beams]
        };
        for _ in 0..self.sweeps {
            let before = obj;
            for &block in blocks {
                let hbar = metrics::effective_channel_with(ch, reflection)?;
                let sur = WmmseState::refresh(&hbar, beams, 1.0)?.surrogate(&weights.weight, ch.bs_antennas());
                let sub = build_subproblem(block, ch, reflection, beams, &sur)?;
                let (refl_new, beams_new) = match block {
                    Block::Phases => (sub.solve(reflection), beams.clone()),
                    Block::Beams => (reflection.clone(), unstack_beams(&sub.solve(&stack_beams(beams)), beams)),
                };
                let next = objective(&refl_new, &beams_new)?;
                if next >= obj {
                    *reflection = refl_new;
                    *beams = beams_new;
                    obj = next;
                }
            }
            if obj - before <= 1e-8 * obj.abs().max(1e-300) {
                break;
            }
        }
        Ok(obj)
    }

    fn models_logdet(&self) -> bool {
        true
    }
}

/// BCD with the WMMSE communication step.
pub fn bcd_mse_solve(params: &SystemParams, ch: &ChannelSet, cfg: &BcdConfig, seed: u64) -> Result<BcdOutcome, SolveError> {
    let upd = Wmmse { sweeps: cfg.comm.mm_steps };
    bcd::run_bcd(params, ch, bcd::initial_decision(params, seed), cfg, |d| {
        Ok(irs::run_comm_loop(d, ch, params, &cfg.comm, &upd)?.decision)
    })
}

/// Phases drawn once, uniformly, and frozen; everything else as BCD-FP-DC.
pub fn rand_phase_solve(params: &SystemParams, ch: &ChannelSet, cfg: &BcdConfig, seed: u64) -> Result<BcdOutcome, SolveError> {
    let mut init = bcd::initial_decision(params, seed);
    let mut rng = rng_for(seed, stream::RANDOM_PHASE);
    init.phases = (0..params.irs_elements).map(|_| rng.random_range(0.0..TAU)).collect();
    let mut cfg = *cfg;
    cfg.comm.optimize_phases = false;
    bcd::run_bcd(params, ch, init, &cfg, |d| {
        Ok(irs::solve_comm_subproblem(d, ch, params, &cfg.comm)?.decision)
    })
}

/// BCD-FP-DC on the same realization with the IRS removed. The returned
/// decision has no phases.
pub fn no_irs_solve(params: &SystemParams, ch: &ChannelSet, cfg: &BcdConfig, seed: u64) -> Result<BcdOutcome, SolveError> {
    bcd::run_bcd_fp_dc(&params.with_irs_elements(0), &ch.without_irs(), cfg, seed)
}
