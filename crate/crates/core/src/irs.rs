//! Communication block: IRS phases `Θ` and user beamformers `F` for a fixed
//! offloading split.
//!
//! The cost depends on the rates only through `Σ ω⁽¹⁾ / R`, which is handled
//! by reweighting into a weighted sum rate `Σ ω* ln(1+γ)`; the sum rate goes
//! through the Lagrangian dual transform (`α`) and the quadratic transform
//! (`ρ`), leaving a difference of convex functions in each block. The convex
//! part `h = Σ 2ρ√α* ‖H̄F‖` is linearized (MM) and the remaining convex
//! quadratic is minimized over disks / balls by accelerated projected gradient.
//!
//! Internally the channels are scaled by `1/σ` so the noise power is one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot_h, vec_norm_sq};
use crate::links::PerLink;
use crate::mec;
use crate::metrics::{self, Beam, Decision, MetricsError};
use crate::scenario::{ChannelSet, SystemParams};
use crate::CMat64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrsError {
    #[error("link (bs {q}, user {k}) carries bits over a zero rate")]
    ZeroRate { q: usize, k: usize },
    #[error("non-positive mean-square error at link (bs {q}, user {k})")]
    DegenerateMse { q: usize, k: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Tie tolerance when deciding which terms attain `D_k`.
const TIE_TOL: f64 = 1e-9;

/// Reweighting of the rate-dependent cost: `λ = 1/R`, `β = ω⁽¹⁾λ`, `ω* = λβ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkWeights {
    pub lambda: PerLink<f64>,
    pub beta: PerLink<f64>,
    pub weight: PerLink<f64>,
    /// `∂ cost / ∂λ`
    pub slope: PerLink<f64>,
}

/// Auxiliaries of both transforms, all per link.
#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub lambda: PerLink<f64>,
    pub beta: PerLink<f64>,
    pub weight: PerLink<f64>,
    pub alpha: PerLink<f64>,
    pub alpha_star: PerLink<f64>,
    pub rho: PerLink<f64>,
}

/// `ω⁽¹⁾_{q,k} = ω_k ℓ/B · (P + ζ·share)`, where `share` splits the latency
/// subgradient equally over every term of `D_k = max(local, edge_q)` within
/// the tie tolerance.
fn cost_slopes(
    offload: &PerLink<f64>,
    edge_cpu: &PerLink<f64>,
    cost_rates: &PerLink<f64>,
    params: &SystemParams,
) -> Result<PerLink<f64>, IrsError> {
    let (qn, kn) = (params.num_cells, params.num_users);
    let mut slope = PerLink::filled(qn, kn, 0.0);
    for k in 0..kn {
        if (0..qn).all(|q| offload[(q, k)] <= 0.0) {
            continue;
        }
        let (local, edge) = metrics::latency_components(offload, edge_cpu, cost_rates, params, k)
            .map_err(|e| match e {
                MetricsError::InfeasibleDecision { q, k, .. } => IrsError::ZeroRate { q, k },
                other => other.into(),
            })?;
        let d = edge.iter().copied().fold(local, f64::max);
        let attains = |v: f64| v >= d * (1.0 - TIE_TOL);
        let tied = usize::from(attains(local))
            + (0..qn).filter(|&q| offload[(q, k)] > 0.0 && attains(edge[q])).count();
        for q in 0..qn {
            let l = offload[(q, k)];
            if l <= 0.0 {
                continue;
            }
            let share = if attains(edge[q]) { 1.0 / tied as f64 } else { 0.0 };
            slope[(q, k)] = params.user_weights[k] * l / params.bandwidth
                * (params.tx_power_at(q, k) + params.tradeoff * share);
        }
    }
    Ok(slope)
}

/// Refresh `(λ, β, ω*)` from scalar rates, damped toward `prev` with factor
/// `damping` (`1` replaces the previous values outright).
pub fn update_weights_damped(
    offload: &PerLink<f64>,
    edge_cpu: &PerLink<f64>,
    params: &SystemParams,
    scalar_rates: &PerLink<f64>,
    cost_rates: &PerLink<f64>,
    prev: Option<&LinkWeights>,
    damping: f64,
) -> Result<LinkWeights, IrsError> {
    let slope = cost_slopes(offload, edge_cpu, cost_rates, params)?;
    weights_from_slopes(offload, scalar_rates, slope, prev, damping)
}

fn weights_from_slopes(
    offload: &PerLink<f64>,
    scalar_rates: &PerLink<f64>,
    slope: PerLink<f64>,
    prev: Option<&LinkWeights>,
    damping: f64,
) -> Result<LinkWeights, IrsError> {
    let (qn, kn) = (offload.num_cells(), offload.num_users());
    let mut lambda = PerLink::filled(qn, kn, 0.0);
    let mut beta = PerLink::filled(qn, kn, 0.0);
    let mut weight = PerLink::filled(qn, kn, 0.0);
    for ((q, k), &l) in offload.indexed() {
        if l <= 0.0 {
            continue;
        }
        let r = scalar_rates[(q, k)];
        if !(r > 0.0) {
            return Err(IrsError::ZeroRate { q, k });
        }
        let (mut lam, mut b) = (1.0 / r, slope[(q, k)] / r);
        if let Some(p) = prev {
            if p.lambda[(q, k)] > 0.0 {
                lam = (1.0 - damping) * p.lambda[(q, k)] + damping * lam;
                b = (1.0 - damping) * p.beta[(q, k)] + damping * slope[(q, k)] * lam;
            }
        }
        lambda[(q, k)] = lam;
        beta[(q, k)] = b;
        weight[(q, k)] = lam * b;
    }
    Ok(LinkWeights {
        lambda,
        beta,
        weight,
        slope,
    })
}

/// `(λ, β, ω*)` at the decision's current phases and beamformers.
pub fn update_weights(dec: &Decision, params: &SystemParams, ch: &ChannelSet) -> Result<LinkWeights, IrsError> {
    let hbar = metrics::effective_channel(ch, &dec.phases)?;
    let scalar = scalar_rates(&hbar, &dec.beamformers, params.noise_var);
    let logdet = metrics::rates_logdet(&hbar, &dec.beamformers, params.noise_var)?;
    update_weights_damped(&dec.offload, &dec.edge_cpu, params, &scalar, &logdet, None, 1.0)
}

fn sinrs(hbar: &PerLink<CMat64>, beams: &PerLink<Beam>, noise_var: f64) -> PerLink<f64> {
    metrics::sinrs_from_powers(&metrics::stream_powers(hbar, beams), noise_var)
}

fn scalar_rates(hbar: &PerLink<CMat64>, beams: &PerLink<Beam>, noise_var: f64) -> PerLink<f64> {
    sinrs(hbar, beams, noise_var).map(|g| g.ln_1p())
}

/// Dual-transform auxiliary: `α = γ`.
pub fn update_alpha(gamma: &PerLink<f64>) -> PerLink<f64> {
    gamma.clone()
}

/// Quadratic-transform auxiliary `ρ = √α* ‖H̄F‖ / (Σ_{all streams} ‖H̄F‖² + σ²)`.
pub fn update_rho(
    alpha_star: &PerLink<f64>,
    hbar: &PerLink<CMat64>,
    beams: &PerLink<Beam>,
    noise_var: f64,
) -> PerLink<f64> {
    let powers = metrics::stream_powers(hbar, beams);
    PerLink::from_fn(alpha_star.num_cells(), alpha_star.num_users(), |q, k| {
        let total: f64 = powers[q].iter().sum::<f64>() + noise_var;
        alpha_star[(q, k)].sqrt() * powers[q][(q, k)].sqrt() / total
    })
}

/// Complete FP state from weights at the given channels and beams.
pub fn fp_state(weights: &LinkWeights, hbar: &PerLink<CMat64>, beams: &PerLink<Beam>, noise_var: f64) -> FpState {
    let gamma = sinrs(hbar, beams, noise_var);
    let alpha = update_alpha(&gamma);
    let alpha_star = PerLink::from_fn(gamma.num_cells(), gamma.num_users(), |q, k| {
        weights.weight[(q, k)] * (1.0 + alpha[(q, k)])
    });
    let rho = update_rho(&alpha_star, hbar, beams, noise_var);
    FpState {
        lambda: weights.lambda.clone(),
        beta: weights.beta.clone(),
        weight: weights.weight.clone(),
        alpha,
        alpha_star,
        rho,
    }
}

/// The transformed objective (to be maximized):
/// `Σ ω*(ln(1+α) − α) + 2ρ√α*‖H̄F‖ − ρ²(Σ_{all streams}‖H̄F‖² + σ²)`.
pub fn fp_objective(state: &FpState, hbar: &PerLink<CMat64>, beams: &PerLink<Beam>, noise_var: f64) -> f64 {
    let powers = metrics::stream_powers(hbar, beams);
    let mut total = 0.0;
    for ((q, k), &w) in state.weight.indexed() {
        if w <= 0.0 {
            continue;
        }
        let a = state.alpha[(q, k)];
        let rho = state.rho[(q, k)];
        let t: f64 = powers[q].iter().sum::<f64>() + noise_var;
        total += w * (a.ln_1p() - a) + 2.0 * rho * state.alpha_star[(q, k)].sqrt() * powers[q][(q, k)].sqrt()
            - rho * rho * t;
    }
    total
}

/// Which block an MM step optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// IRS reflection coefficients, each in the unit disk.
    Phases,
    /// All beamformers stacked link by link, each in the unit ball.
    Beams,
}

/// `min xᴴ A x − Re(bᴴ x)` over a product of unit balls.
#[derive(Debug, Clone, PartialEq)]
pub struct MmSubproblem {
    pub quad: CMat64,
    pub linear: Vec<Complex64>,
    /// `(start, len)` of each ball-constrained sub-vector
    pub blocks: Vec<(usize, usize)>,
}

const APG_MAX_ITERS: usize = 500;
const APG_REL_TOL: f64 = 1e-8;
const POWER_STEPS: usize = 20;

impl MmSubproblem {
    pub fn value(&self, x: &[Complex64]) -> f64 {
        dot_h(x, &self.quad.mul_vec(x)).re - dot_h(&self.linear, x).re
    }

    /// Real gradient `2Ax − b` (directional derivative `Re(gᴴ d)`).
    pub fn gradient(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.quad
            .mul_vec(x)
            .iter()
            .zip(&self.linear)
            .map(|(ax, b)| 2.0 * ax - b)
            .collect()
    }

    /// Radial scaling of each sub-vector onto its ball.
    pub fn project(&self, x: &mut [Complex64]) {
        for &(s, n) in &self.blocks {
            let norm = vec_norm_sq(&x[s..s + n]).sqrt();
            if norm > 1.0 {
                for v in &mut x[s..s + n] {
                    *v /= norm;
                }
            }
        }
    }

    /// Largest eigenvalue of `A` by power iteration.
    fn spectral_estimate(&self) -> f64 {
        let n = self.linear.len();
        let mut v: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 + 0.01 * i as f64, 0.0)).collect();
        let mut est = 0.0;
        for _ in 0..POWER_STEPS {
            let norm = vec_norm_sq(&v).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for x in &mut v {
                *x /= norm;
            }
            let av = self.quad.mul_vec(&v);
            est = vec_norm_sq(&av).sqrt();
            v = av;
        }
        est
    }

    /// Accelerated projected gradient from `x0` (FISTA with restart); never
    /// returns a point worse than the projected start.
    pub fn solve(&self, x0: &[Complex64]) -> Vec<Complex64> {
        let mut x = x0.to_vec();
        self.project(&mut x);
        let lip = 2.0 * self.spectral_estimate();
        if !(lip > 0.0) {
            // purely linear: each ball's minimizer points along b
            for &(s, n) in &self.blocks {
                let norm = vec_norm_sq(&self.linear[s..s + n]).sqrt();
                if norm > 0.0 {
                    for i in s..s + n {
                        x[i] = self.linear[i] / norm;
                    }
                }
            }
            return x;
        }
        // power iteration approaches λ_max from below
        let step = 1.0 / (1.05 * lip);
        let mut best = x.clone();
        let mut best_val = self.value(&x);
        let mut prev_val = best_val;
        let mut y = x.clone();
        let mut t = 1.0f64;
        for _ in 0..APG_MAX_ITERS {
            let g = self.gradient(&y);
            let mut next: Vec<Complex64> = y.iter().zip(&g).map(|(a, b)| a - b * step).collect();
            self.project(&mut next);
            let val = self.value(&next);
            if val > prev_val {
                // restart momentum
                t = 1.0;
                y.clone_from(&x);
                prev_val = self.value(&x);
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(a, b)| a + (a - b) * mom).collect();
            x = next;
            t = t_next;
            if val < best_val {
                best_val = val;
                best.clone_from(&x);
            }
            let change = (prev_val - val).abs();
            prev_val = val;
            if change <= APG_REL_TOL * val.abs().max(1e-300) {
                break;
            }
        }
        best
    }
}

/// A convex quadratic surrogate over received images: for every link
/// `l = (q,k)` it charges `rᴴ P_l r` on every stream `r` received at BS `q`
/// and credits `Re(y_lᴴ s_l)` on the link's own stream `s_l = H̄_{q,k}F_{q,k}`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Surrogate {
    pub quad: PerLink<CMat64>,
    pub linear: PerLink<Vec<Complex64>>,
}

/// Channels scaled by `1/σ`, so the noise power becomes one.
pub(crate) fn normalized(ch: &ChannelSet, noise_var: f64) -> ChannelSet {
    let s = 1.0 / noise_var.sqrt();
    ChannelSet {
        direct: ch.direct.map(|h| h.scale(s)),
        irs_to_bs: ch.irs_to_bs.iter().map(|g| g.scale(s)).collect(),
        user_to_irs: ch.user_to_irs.clone(),
    }
}

/// Stack beamformers link by link.
pub(crate) fn stack_beams(beams: &PerLink<Beam>) -> Vec<Complex64> {
    beams.iter().flat_map(|b| b.iter().copied()).collect()
}

pub(crate) fn unstack_beams(x: &[Complex64], like: &PerLink<Beam>) -> PerLink<Beam> {
    let n = like.iter().next().map_or(0, |b| b.len());
    PerLink::from_fn(like.num_cells(), like.num_users(), |q, k| {
        let i = like.flat_index(q, k) * n;
        x[i..i + n].to_vec()
    })
}

/// The block-restricted quadratic of a surrogate, the other block held fixed.
pub(crate) fn build_subproblem(
    block: Block,
    ch: &ChannelSet,
    reflection: &[Complex64],
    beams: &PerLink<Beam>,
    sur: &Surrogate,
) -> Result<MmSubproblem, IrsError> {
    let (qn, kn) = (ch.num_cells(), ch.num_users());
    let n_bs = ch.bs_antennas();
    // every stream received at BS q is charged with Σ_k P_{q,k}
    let psum: Vec<CMat64> = (0..qn)
        .map(|q| {
            let mut p = CMat64::zeros(n_bs, n_bs);
            for k in 0..kn {
                p = &p + &sur.quad[(q, k)];
            }
            p
        })
        .collect();
    match block {
        Block::Beams => {
            let hbar = metrics::effective_channel_with(ch, reflection)?;
            let n_u = ch.user_antennas();
            let dim = qn * kn * n_u;
            let mut quad = CMat64::zeros(dim, dim);
            let mut linear = vec![Complex64::new(0.0, 0.0); dim];
            let mut blocks = Vec::with_capacity(qn * kn);
            for i in 0..qn {
                for j in 0..kn {
                    let s = beams.flat_index(i, j) * n_u;
                    blocks.push((s, n_u));
                    for (q, p) in psum.iter().enumerate() {
                        let h = &hbar[(q, j)];
                        let a = h.adjoint().matmul(&p.matmul(h).map_err(MetricsError::from)?).map_err(MetricsError::from)?;
                        for r in 0..n_u {
                            for c in 0..n_u {
                                quad[(s + r, s + c)] += a[(r, c)];
                            }
                        }
                    }
                    let g = hbar[(i, j)].adjoint_mul_vec(&sur.linear[(i, j)]);
                    linear[s..s + n_u].copy_from_slice(&g);
                }
            }
            Ok(MmSubproblem { quad, linear, blocks })
        }
        Block::Phases => {
            let m = ch.irs_elements();
            let zero = Complex64::new(0.0, 0.0);
            // v_{i,j} = H_{R,j} F_{i,j}: per-element gains of stream (i,j)
            let v = PerLink::from_fn(qn, kn, |i, j| ch.user_to_irs[j].mul_vec(&beams[(i, j)]));
            let mut vv = CMat64::zeros(m, m);
            for vij in v.iter() {
                for a in 0..m {
                    for b in 0..m {
                        vv[(a, b)] += vij[a].conj() * vij[b];
                    }
                }
            }
            let mut ksum = CMat64::zeros(m, m);
            let mut linear = vec![zero; m];
            for (q, p) in psum.iter().enumerate() {
                let g = &ch.irs_to_bs[q];
                let pg = p.matmul(g).map_err(MetricsError::from)?;
                ksum = &ksum + &g.adjoint().matmul(&pg).map_err(MetricsError::from)?;
                for i in 0..qn {
                    for j in 0..kn {
                        // −2 diag(v̄) Gᴴ P c with c = H_{q,j} F_{i,j}
                        let c = ch.direct[(q, j)].mul_vec(&beams[(i, j)]);
                        let gpc = g.adjoint_mul_vec(&p.mul_vec(&c));
                        for n in 0..m {
                            linear[n] -= 2.0 * v[(i, j)][n].conj() * gpc[n];
                        }
                    }
                }
                for k in 0..kn {
                    let gy = g.adjoint_mul_vec(&sur.linear[(q, k)]);
                    for n in 0..m {
                        linear[n] += v[(q, k)][n].conj() * gy[n];
                    }
                }
            }
            let quad = CMat64::from_fn(m, m, |a, b| ksum[(a, b)] * vv[(a, b)]);
            Ok(MmSubproblem {
                quad,
                linear,
                blocks: (0..m).map(|n| (n, 1)).collect(),
            })
        }
    }
}

/// `y_l = 2ρ√α* s_l/‖s_l‖` (zero where the stream vanishes).
fn norm_term_weights(state: &FpState, hbar: &PerLink<CMat64>, beams: &PerLink<Beam>) -> PerLink<Vec<Complex64>> {
    PerLink::from_fn(beams.num_cells(), beams.num_users(), |q, k| {
        let s = hbar[(q, k)].mul_vec(&beams[(q, k)]);
        let norm = vec_norm_sq(&s).sqrt();
        let coef = 2.0 * state.rho[(q, k)] * state.alpha_star[(q, k)].sqrt();
        if norm > 0.0 && coef > 0.0 {
            s.iter().map(|z| z * (coef / norm)).collect()
        } else {
            vec![Complex64::new(0.0, 0.0); s.len()]
        }
    })
}

/// Gradient of `h = Σ 2ρ√α* ‖H̄F‖` with respect to one block, the other held
/// fixed, in the convention `dh = Re(gᴴ dx)`.
pub fn grad_h(
    block: Block,
    state: &FpState,
    ch: &ChannelSet,
    reflection: &[Complex64],
    beams: &PerLink<Beam>,
) -> Result<Vec<Complex64>, IrsError> {
    let hbar = metrics::effective_channel_with(ch, reflection)?;
    let n_bs = ch.bs_antennas();
    let sur = Surrogate {
        quad: PerLink::from_fn(beams.num_cells(), beams.num_users(), |_, _| CMat64::zeros(n_bs, n_bs)),
        linear: norm_term_weights(state, &hbar, beams),
    };
    Ok(build_subproblem(block, ch, reflection, beams, &sur)?.linear)
}

/// The FP surrogate minorized at the current point: `ρ² I` charges and the
/// linearized norm term.
fn fp_surrogate(state: &FpState, hbar: &PerLink<CMat64>, beams: &PerLink<Beam>, n_bs: usize) -> Surrogate {
    Surrogate {
        quad: state.rho.map(|r| {
            let mut p = CMat64::zeros(n_bs, n_bs);
            p.add_identity(r * r);
            p
        }),
        linear: norm_term_weights(state, hbar, beams),
    }
}

/// One MM step on `block`: linearize `h` at the current point and minimize
/// the convex remainder. Returns the new block (reflection coefficients, or
/// stacked beamformers).
pub fn mm_step(
    block: Block,
    state: &FpState,
    ch: &ChannelSet,
    reflection: &[Complex64],
    beams: &PerLink<Beam>,
) -> Result<Vec<Complex64>, IrsError> {
    let hbar = metrics::effective_channel_with(ch, reflection)?;
    let sur = fp_surrogate(state, &hbar, beams, ch.bs_antennas());
    let sub = build_subproblem(block, ch, reflection, beams, &sur)?;
    let x0 = match block {
        Block::Phases => reflection.to_vec(),
        Block::Beams => stack_beams(beams),
    };
    Ok(sub.solve(&x0))
}

/// Communication-block settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommConfig {
    pub outer_iters: usize,
    /// relative change of the weighted cost that ends the loop
    pub tol: f64,
    /// MM steps per block per outer iteration
    pub mm_steps: usize,
    /// damping of the `(λ, β)` refresh; 1 replaces them outright
    pub damping: f64,
    /// `false` keeps the IRS phases fixed
    pub optimize_phases: bool,
    /// judge updates by the cost after re-balancing `ℓ` for the current CPU
    /// split (returned decisions then carry the re-balanced `ℓ`); `false`
    /// keeps `ℓ` fixed throughout
    pub refit_offload: bool,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            outer_iters: 30,
            tol: 1e-5,
            mm_steps: 10,
            damping: 1.0,
            optimize_phases: true,
            refit_offload: true,
        }
    }
}

/// One outer iteration of the communication loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommIterate {
    /// true weighted cost at unit-modulus phases
    pub cost: f64,
    /// FP objective after both blocks, at relaxed phases
    pub surrogate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommOutcome {
    pub decision: Decision,
    pub cost: f64,
    pub trace: Vec<CommIterate>,
}

/// Unit-modulus phases from relaxed coefficients (`θ = 0` where `Θ = 0`).
pub fn phases_of(reflection: &[Complex64]) -> Vec<f64> {
    reflection
        .iter()
        .map(|z| if z.norm_sqr() == 0.0 { 0.0 } else { metrics::wrap_phase(z.arg()) })
        .collect()
}

/// Which outer-loop updates the communication solver applies.
pub(crate) trait CommUpdate {
    /// Update `(Θ, F)` in place for the given link weights.
    fn update(
        &self,
        weights: &LinkWeights,
        ch: &ChannelSet,
        reflection: &mut Vec<Complex64>,
        beams: &mut PerLink<Beam>,
        optimize_phases: bool,
    ) -> Result<f64, IrsError>;

    /// Weights are `slope/R²` at the rates this update models: the scalar
    /// power-sum SINR by default, the log-det rate if `true`.
    fn models_logdet(&self) -> bool {
        false
    }
}

struct FpMm {
    mm_steps: usize,
}

impl CommUpdate for FpMm {
    fn update(
        &self,
        weights: &LinkWeights,
        ch: &ChannelSet,
        reflection: &mut Vec<Complex64>,
        beams: &mut PerLink<Beam>,
        optimize_phases: bool,
    ) -> Result<f64, IrsError> {
        let hbar = metrics::effective_channel_with(ch, reflection)?;
        let state = fp_state(weights, &hbar, beams, 1.0);
        let mut obj = fp_objective(&state, &hbar, beams, 1.0);
        let blocks: &[Block] = if optimize_phases && ch.irs_elements() > 0 {
            &[Block::Phases, Block::Beams]
        } else {
            &[Block::Beams]
        };
        for &block in blocks {
            for _ in 0..self.mm_steps {
                let x = mm_step(block, &state, ch, reflection, beams)?;
                let (refl_new, beams_new) = match block {
                    Block::Phases => (x, beams.clone()),
                    Block::Beams => (reflection.clone(), unstack_beams(&x, beams)),
                };
                let hbar = metrics::effective_channel_with(ch, &refl_new)?;
                let next = fp_objective(&state, &hbar, &beams_new, 1.0);
                if next < obj {
                    break;
                }
                *reflection = refl_new;
                *beams = beams_new;
                let gain = next - obj;
                obj = next;
                if gain <= 1e-8 * obj.abs().max(1e-300) {
                    break;
                }
            }
        }
        Ok(obj)
    }
}

/// Optimize `(F, θ)` for the decision's fixed `(ℓ, f^E)`. The returned cost
/// (at unit-modulus phases, log-det rates) never exceeds the input cost.
pub fn solve_comm_subproblem(
    dec: &Decision,
    ch: &ChannelSet,
    params: &SystemParams,
    cfg: &CommConfig,
) -> Result<CommOutcome, IrsError> {
    run_comm_loop(dec, ch, params, cfg, &FpMm { mm_steps: cfg.mm_steps })
}

pub(crate) fn run_comm_loop(
    dec: &Decision,
    ch: &ChannelSet,
    params: &SystemParams,
    cfg: &CommConfig,
    updater: &dyn CommUpdate,
) -> Result<CommOutcome, IrsError> {
    let start = metrics::total_cost(dec, ch, params)?.total;
    let mut cur = CommOutcome {
        decision: dec.clone(),
        cost: start,
        trace: Vec::new(),
    };
    if dec.offload.iter().all(|&l| l <= 0.0) {
        return Ok(cur);
    }
    let nch = normalized(ch, params.noise_var);
    let mut prev_weights: Option<LinkWeights> = None;
    for _ in 0..cfg.outer_iters {
        let base_refl = cur.decision.reflection();
        let base_beams = cur.decision.beamformers.clone();
        let hbar = metrics::effective_channel_with(&nch, &base_refl)?;
        let scalar = scalar_rates(&hbar, &base_beams, 1.0);
        let logdet = metrics::rates_logdet(&hbar, &base_beams, 1.0)?;
        let modeled = if updater.models_logdet() { &logdet } else { &scalar };
        let weights = if cfg.refit_offload {
            let logdet_true = metrics::rates_logdet(&metrics::effective_channel(ch, &cur.decision.phases)?, &base_beams, params.noise_var)?;
            let slope = refit_slopes(&cur.decision.offload, &cur.decision.edge_cpu, &logdet_true, params)?;
            weights_from_slopes(&cur.decision.offload, modeled, slope, prev_weights.as_ref(), cfg.damping)?
        } else {
            update_weights_damped(
                &cur.decision.offload,
                &cur.decision.edge_cpu,
                params,
                modeled,
                &logdet,
                prev_weights.as_ref(),
                cfg.damping,
            )?
        };
        let mut reflection = base_refl.clone();
        let mut beams = base_beams.clone();
        let surrogate = updater.update(&weights, &nch, &mut reflection, &mut beams, cfg.optimize_phases)?;
        prev_weights = Some(weights);

        // The reweighted sum rate only matches the cost to first order, and
        // left alone it happily starves weak links. Treat the update as a
        // direction and backtrack on the true cost.
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..BACKTRACK_STEPS {
            let refl_t: Vec<Complex64> = base_refl.iter().zip(&reflection).map(|(a, b)| a + (b - a) * t).collect();
            let beams_t = PerLink::from_fn(beams.num_cells(), beams.num_users(), |q, k| {
                base_beams[(q, k)]
                    .iter()
                    .zip(&beams[(q, k)])
                    .map(|(a, b)| a + (b - a) * t)
                    .collect::<Beam>()
            });
            let mut candidate = Decision {
                beamformers: beams_t,
                phases: if cfg.optimize_phases { phases_of(&refl_t) } else { dec.phases.clone() },
                offload: cur.decision.offload.clone(),
                edge_cpu: cur.decision.edge_cpu.clone(),
            };
            if cfg.refit_offload && !refit(&mut candidate, ch, params, cur.cost)? {
                t *= 0.5;
                continue;
            }
            match metrics::total_cost(&candidate, ch, params) {
                Ok(c) if c.total < cur.cost => {
                    accepted = Some((candidate, c.total));
                    break;
                }
                Ok(_) | Err(MetricsError::InfeasibleDecision { .. }) => {}
                Err(e) => return Err(e.into()),
            }
            t *= 0.5;
        }
        let Some((candidate, cost)) = accepted else {
            cur.trace.push(CommIterate {
                cost: cur.cost,
                surrogate,
            });
            break;
        };
        let gain = cur.cost - cost;
        cur.trace.push(CommIterate { cost, surrogate });
        cur.decision = candidate;
        cur.cost = cost;
        if gain <= cfg.tol * cost.abs() {
            break;
        }
    }
    Ok(cur)
}

/// Re-balance `ℓ` for the candidate's rates and CPU split. Returns `false`
/// (leaving `ℓ` alone) when even the re-balanced cost does not beat `target`.
fn refit(candidate: &mut Decision, ch: &ChannelSet, params: &SystemParams, target: f64) -> Result<bool, IrsError> {
    let hbar = metrics::effective_channel(ch, &candidate.phases)?;
    let rates = metrics::rates_logdet(&hbar, &candidate.beamformers, params.noise_var)?;
    let model = match mec::build_qcp(params, &rates) {
        Ok(m) => m,
        Err(_) => return Ok(false),
    };
    if mec::fixed_cpu_cost(&model, &candidate.edge_cpu) >= target {
        return Ok(false);
    }
    match mec::best_offload_for_cpu(&model, &candidate.edge_cpu) {
        Ok(p) => {
            candidate.offload = p.offload;
            Ok(true)
        }
        Err(_) => Ok(false),
    }
}

/// `∂V/∂λ` of the re-balanced cost `V` (best `ℓ` for the current CPU split)
/// by central differences in each link's inverse rate.
fn refit_slopes(
    offload: &PerLink<f64>,
    edge_cpu: &PerLink<f64>,
    cost_rates: &PerLink<f64>,
    params: &SystemParams,
) -> Result<PerLink<f64>, IrsError> {
    let mut slope = PerLink::filled(params.num_cells, params.num_users, 0.0);
    for ((q, k), &l) in offload.indexed() {
        if l <= 0.0 {
            continue;
        }
        let r = cost_rates[(q, k)];
        if !(r > 0.0) {
            return Err(IrsError::ZeroRate { q, k });
        }
        let lam = 1.0 / r;
        let h = 1e-6 * lam;
        let at = |lv: f64| -> Result<f64, IrsError> {
            let mut rates = cost_rates.clone();
            rates[(q, k)] = 1.0 / lv;
            let model = mec::build_qcp(params, &rates).map_err(|_| IrsError::ZeroRate { q, k })?;
            Ok(mec::fixed_cpu_cost(&model, edge_cpu))
        };
        slope[(q, k)] = ((at(lam + h)? - at(lam - h)?) / (2.0 * h)).max(0.0);
    }
    Ok(slope)
}

/// Halvings tried along an update before the loop declares convergence.
const BACKTRACK_STEPS: usize = 12;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot_h;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn in_ball(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        let v: Vec<Complex64> = (0..n).map(|_| cgauss(rng)).collect();
        let norm = vec_norm_sq(&v).sqrt();
        let r = rng.random_range(0.2..1.0);
        v.iter().map(|z| z * (r / norm)).collect()
    }

    struct Instance {
        ch: ChannelSet,
        refl: Vec<Complex64>,
        beams: PerLink<Beam>,
        state: FpState,
    }

    /// Unit-noise channels with two cells, two users, 2×2 antennas, 3 elements.
    fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
        let (qn, kn, nb, nu, m) = (2, 2, 2, 2, 3);
        let mat = |rng: &mut ChaCha8Rng, r: usize, cc: usize| CMat64::from_fn(r, cc, |_, _| cgauss(rng));
        let ch = ChannelSet {
            direct: PerLink::from_fn(qn, kn, |_, _| mat(rng, nb, nu)),
            irs_to_bs: (0..qn).map(|_| mat(rng, nb, m)).collect(),
            user_to_irs: (0..kn).map(|_| mat(rng, m, nu)).collect(),
        };
        let refl: Vec<Complex64> = (0..m).map(|_| c(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7))).collect();
        let beams = PerLink::from_fn(qn, kn, |_, _| in_ball(rng, nu));
        let lambda = PerLink::from_fn(qn, kn, |_, _| rng.random_range(0.2..2.0));
        let beta = PerLink::from_fn(qn, kn, |_, _| rng.random_range(0.2..2.0));
        let weights = LinkWeights {
            weight: PerLink::from_fn(qn, kn, |q, k| lambda[(q, k)] * beta[(q, k)]),
            slope: beta.clone(),
            lambda,
            beta,
        };
        let hbar = metrics::effective_channel_with(&ch, &refl).unwrap();
        let state = fp_state(&weights, &hbar, &beams, 1.0);
        Instance { ch, refl, beams, state }
    }

    fn h_value(state: &FpState, ch: &ChannelSet, refl: &[Complex64], beams: &PerLink<Beam>) -> f64 {
        let hbar = metrics::effective_channel_with(ch, refl).unwrap();
        state
            .rho
            .indexed()
            .map(|((q, k), &r)| {
                2.0 * r * state.alpha_star[(q, k)].sqrt() * crate::linalg::apply_norm_sq(&hbar[(q, k)], &beams[(q, k)]).sqrt()
            })
            .sum()
    }

    fn single_link_decision(offload: f64, f: f64) -> Decision {
        Decision {
            beamformers: PerLink::filled(1, 1, vec![c(1.0, 0.0)]),
            phases: vec![0.0],
            offload: PerLink::filled(1, 1, offload),
            edge_cpu: PerLink::filled(1, 1, f),
        }
    }

    #[test]
    fn unused_link_has_zero_weight() {
        let p = SystemParams::single_link();
        let ch = ChannelSet::single_link(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let w = update_weights(&single_link_decision(0.0, 100.0), &p, &ch).unwrap();
        assert_eq!(w.weight[(0, 0)], 0.0);
        assert_eq!(w.lambda[(0, 0)], 0.0);
    }

    #[test]
    fn slope_matches_cost_derivative() {
        let p = SystemParams::single_link();
        let ch = ChannelSet::single_link(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let dec = single_link_decision(1000.0, 100.0);
        let w = update_weights(&dec, &p, &ch).unwrap();
        // edge term alone attains D: ω ℓ/B (P + ζ) = 1.1
        assert!((w.slope[(0, 0)] - 1.1).abs() < 1e-12);
        let lam = w.lambda[(0, 0)];
        assert!((lam - 1.0 / 5f64.ln()).abs() < 1e-12);
        assert!((w.weight[(0, 0)] - 1.1 * lam * lam).abs() < 1e-12);
        let cost_at = |l: f64| {
            metrics::cost_with_rates(&dec.offload, &dec.edge_cpu, PerLink::filled(1, 1, 1.0 / l), &p)
                .unwrap()
                .total
        };
        let h = 1e-6;
        let fd = (cost_at(lam + h) - cost_at(lam - h)) / (2.0 * h);
        assert!((fd - 1.1).abs() < 1e-6, "{fd}");
    }

    #[test]
    fn slope_linear_in_tradeoff() {
        let mut p = SystemParams::single_link();
        let ch = ChannelSet::single_link(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let dec = single_link_decision(1000.0, 100.0);
        let a = update_weights(&dec, &p, &ch).unwrap().slope[(0, 0)];
        p.tradeoff = 2.0;
        let b = update_weights(&dec, &p, &ch).unwrap().slope[(0, 0)];
        assert!((b - a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_splits_latency_share() {
        let p = SystemParams::single_link();
        let r = 5f64.ln();
        // local (1000−ℓ)·0.01 equals edge ℓ(1/(1000 r) + 0.1/100)
        let per_bit = 1.0 / (1000.0 * r) + 0.001;
        let l = 10.0 / (0.01 + per_bit);
        let slopes = cost_slopes(
            &PerLink::filled(1, 1, l),
            &PerLink::filled(1, 1, 100.0),
            &PerLink::filled(1, 1, r),
            &p,
        )
        .unwrap();
        assert!((slopes[(0, 0)] - l / 1000.0 * (0.1 + 0.5)).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_rejected() {
        let p = SystemParams::single_link();
        let ch = ChannelSet::single_link(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let r = update_weights(&single_link_decision(500.0, 100.0), &p, &ch);
        assert!(matches!(r, Err(IrsError::ZeroRate { q: 0, k: 0 })));
    }

    #[test]
    fn dual_transform_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let gamma = rng.random_range(0.0..50.0);
            let w = rng.random_range(0.1..5.0);
            let a = update_alpha(&PerLink::filled(1, 1, gamma))[(0, 0)];
            let bracket = w * (a.ln_1p() - a + (1.0 + a) * gamma / (1.0 + gamma));
            assert!((bracket - w * gamma.ln_1p()).abs() < 1e-9);
        }
        assert_eq!(update_alpha(&PerLink::filled(1, 1, 0.0))[(0, 0)], 0.0);
        assert_eq!(update_alpha(&PerLink::filled(1, 1, 1.0))[(0, 0)], 1.0);
    }

    #[test]
    fn rho_closed_form_cases() {
        let hbar = PerLink::filled(1, 1, CMat64::identity(1));
        let one = PerLink::filled(1, 1, 1.0);
        let rho = update_rho(&one, &hbar, &PerLink::filled(1, 1, vec![c(1.0, 0.0)]), 0.0);
        assert!((rho[(0, 0)] - 1.0).abs() < 1e-15);
        let rho = update_rho(&one, &hbar, &PerLink::filled(1, 1, vec![c(0.0, 0.0)]), 1.0);
        assert_eq!(rho[(0, 0)], 0.0);
    }

    #[test]
    fn rho_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let inst = random_instance(&mut rng);
            let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
            let base = fp_objective(&inst.state, &hbar, &inst.beams, 1.0);
            for idx in 0..4 {
                for d in [-1e-3, 1e-3] {
                    let mut s = inst.state.clone();
                    s.rho.as_mut_slice()[idx] += d;
                    assert!(fp_objective(&s, &hbar, &inst.beams, 1.0) <= base + 1e-12);
                }
            }
        }
    }

    #[test]
    fn transforms_are_exact_at_optimal_auxiliaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let inst = random_instance(&mut rng);
            let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
            let fp = fp_objective(&inst.state, &hbar, &inst.beams, 1.0);
            let gamma = sinrs(&hbar, &inst.beams, 1.0);
            let direct: f64 = inst.state.weight.indexed().map(|(i, w)| w * gamma[i].ln_1p()).sum();
            assert!((fp - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{fp} {direct}");
        }
    }

    #[test]
    fn grad_h_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let inst = random_instance(&mut rng);
            for block in [Block::Phases, Block::Beams] {
                let g = grad_h(block, &inst.state, &inst.ch, &inst.refl, &inst.beams).unwrap();
                let x0 = match block {
                    Block::Phases => inst.refl.clone(),
                    Block::Beams => stack_beams(&inst.beams),
                };
                let d: Vec<Complex64> = (0..x0.len()).map(|_| cgauss(&mut rng)).collect();
                let at = |t: f64| {
                    let x: Vec<Complex64> = x0.iter().zip(&d).map(|(a, b)| a + b * t).collect();
                    match block {
                        Block::Phases => h_value(&inst.state, &inst.ch, &x, &inst.beams),
                        Block::Beams => h_value(&inst.state, &inst.ch, &inst.refl, &unstack_beams(&x, &inst.beams)),
                    }
                };
                let step = 1e-6;
                let fd = (at(step) - at(-step)) / (2.0 * step);
                let an = dot_h(&g, &d).re;
                let scale = vec_norm_sq(&g).sqrt() * vec_norm_sq(&d).sqrt();
                assert!((fd - an).abs() <= 1e-5 * scale, "{block:?}: fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn grad_h_zero_beam_and_scalar_magnitude() {
        let ch = ChannelSet::single_link(c(0.6, 0.8), c(0.0, 0.0), c(0.0, 0.0));
        let state = FpState {
            lambda: PerLink::filled(1, 1, 1.0),
            beta: PerLink::filled(1, 1, 1.0),
            weight: PerLink::filled(1, 1, 1.0),
            alpha: PerLink::filled(1, 1, 1.0),
            alpha_star: PerLink::filled(1, 1, 4.0),
            rho: PerLink::filled(1, 1, 0.5),
        };
        let refl = vec![c(1.0, 0.0)];
        let g = grad_h(Block::Beams, &state, &ch, &refl, &PerLink::filled(1, 1, vec![c(0.0, 0.0)])).unwrap();
        assert_eq!(g, vec![c(0.0, 0.0)]);
        let g = grad_h(Block::Beams, &state, &ch, &refl, &PerLink::filled(1, 1, vec![c(0.3, -0.2)])).unwrap();
        // 2ρ√α*·|h̄| = 2·0.5·2·1
        assert!((g[0].norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_quadratic_minimizer() {
        let sub = MmSubproblem {
            quad: CMat64::identity(2),
            linear: vec![c(0.4, 0.2), c(-0.2, 0.0)],
            blocks: vec![(0, 2)],
        };
        // the solver stops on a 1e-8 relative objective change, so x is
        // accurate to roughly its square root
        let x = sub.solve(&[c(0.0, 0.0), c(0.0, 0.0)]);
        assert!((x[0] - c(0.2, 0.1)).norm() < 1e-5 && (x[1] - c(-0.1, 0.0)).norm() < 1e-5, "{x:?}");
        // outside the ball: g/2 radially clipped
        let sub = MmSubproblem {
            linear: vec![c(4.0, 0.0), c(0.0, 3.0)],
            ..sub
        };
        let x = sub.solve(&[c(0.0, 0.0), c(0.0, 0.0)]);
        assert!((x[0] - c(0.8, 0.0)).norm() < 1e-5 && (x[1] - c(0.0, 0.6)).norm() < 1e-5, "{x:?}");
    }

    fn scalar_state(ch: &ChannelSet, refl: &[Complex64], beams: &PerLink<Beam>) -> FpState {
        let w = LinkWeights {
            lambda: PerLink::filled(1, 1, 1.0),
            beta: PerLink::filled(1, 1, 1.0),
            weight: PerLink::filled(1, 1, 1.0),
            slope: PerLink::filled(1, 1, 1.0),
        };
        let hbar = metrics::effective_channel_with(ch, refl).unwrap();
        fp_state(&w, &hbar, beams, 1.0)
    }

    #[test]
    fn phase_invariant_link_keeps_phase() {
        let ch = ChannelSet::single_link(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let beams = PerLink::filled(1, 1, vec![c(1.0, 0.0)]);
        let refl = vec![Complex64::from_polar(1.0, 1.3)];
        let state = scalar_state(&ch, &refl, &beams);
        let x = mm_step(Block::Phases, &state, &ch, &refl, &beams).unwrap();
        assert!((x[0] - refl[0]).norm() < 1e-9, "{x:?}");
    }

    #[test]
    fn phases_align_with_direct_path() {
        let ch = ChannelSet::single_link(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let beams = PerLink::filled(1, 1, vec![c(1.0, 0.0)]);
        let mut refl = vec![Complex64::from_polar(1.0, 2.0)];
        for _ in 0..200 {
            let state = scalar_state(&ch, &refl, &beams);
            refl = mm_step(Block::Phases, &state, &ch, &refl, &beams).unwrap();
        }
        assert!((refl[0] - c(1.0, 0.0)).norm() < 1e-3, "{refl:?}");
        let hbar = metrics::effective_channel_with(&ch, &refl).unwrap();
        assert!((hbar[(0, 0)][(0, 0)].norm_sqr() - 4.0).abs() < 1e-3);
        // the 1-D grid agrees: |1 + e^{jθ}|² peaks at θ = 0
        let best = (0..3600)
            .map(|i| 2.0 * PI * i as f64 / 3600.0)
            .max_by(|a, b| (1.0 + Complex64::from_polar(1.0, *a)).norm().total_cmp(&(1.0 + Complex64::from_polar(1.0, *b)).norm()))
            .unwrap();
        assert_eq!(best, 0.0);
    }

    #[test]
    fn mm_steps_ascend_and_stay_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let mut inst = random_instance(&mut rng);
            let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
            let mut obj = fp_objective(&inst.state, &hbar, &inst.beams, 1.0);
            for step in 0..6 {
                let block = if step % 2 == 0 { Block::Phases } else { Block::Beams };
                let x = mm_step(block, &inst.state, &inst.ch, &inst.refl, &inst.beams).unwrap();
                match block {
                    Block::Phases => {
                        assert!(x.iter().all(|z| z.norm() <= 1.0 + 1e-12));
                        inst.refl = x;
                    }
                    Block::Beams => {
                        inst.beams = unstack_beams(&x, &inst.beams);
                        assert!(inst.beams.iter().all(|b| vec_norm_sq(b).sqrt() <= 1.0 + 1e-12));
                    }
                }
                let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
                let next = fp_objective(&inst.state, &hbar, &inst.beams, 1.0);
                assert!(next >= obj - 1e-8, "{next} < {obj}");
                obj = next;
            }
        }
    }

    #[test]
    fn single_link_reaches_ln5() {
        let p = SystemParams::single_link();
        let ch = ChannelSet::single_link(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let dec = Decision {
            beamformers: PerLink::filled(1, 1, vec![c(0.3, 0.1)]),
            phases: vec![2.0],
            offload: PerLink::filled(1, 1, 500.0),
            edge_cpu: PerLink::filled(1, 1, 100.0),
        };
        let before = metrics::total_cost(&dec, &ch, &p).unwrap().total;
        let out = solve_comm_subproblem(&dec, &ch, &p, &CommConfig { outer_iters: 200, tol: 1e-12, ..CommConfig::default() })
            .unwrap();
        assert!(out.cost <= before + 1e-8);
        let b = metrics::total_cost(&out.decision, &ch, &p).unwrap();
        assert!((b.rates[(0, 0)] - 5f64.ln()).abs() < 1e-3, "{}", b.rates[(0, 0)]);
        assert!((vec_norm_sq(&out.decision.beamformers[(0, 0)]).sqrt() - 1.0).abs() < 1e-9);
        let th = out.decision.phases[0];
        assert!(th.min(2.0 * PI - th) < 0.05, "{th}");
    }

    #[test]
    fn without_irs_only_beams_change() {
        let p = SystemParams::single_link();
        let ch = ChannelSet::single_link(c(0.5, 0.5), c(1.0, 0.0), c(1.0, 0.0)).without_irs();
        let mut dec = single_link_decision(500.0, 100.0);
        dec.phases.clear();
        dec.beamformers = PerLink::filled(1, 1, vec![c(0.2, 0.0)]);
        let before = metrics::total_cost(&dec, &ch, &p).unwrap().total;
        let out = solve_comm_subproblem(&dec, &ch, &p, &CommConfig::default()).unwrap();
        assert!(out.cost <= before + 1e-8);
        assert!(out.decision.phases.is_empty());
    }

    #[test]
    fn all_local_is_untouched() {
        let p = SystemParams::single_link();
        let ch = ChannelSet::single_link(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
        let mut dec = single_link_decision(0.0, 100.0);
        dec.phases = vec![1.0];
        let out = solve_comm_subproblem(&dec, &ch, &p, &CommConfig::default()).unwrap();
        assert_eq!(out.decision, dec);
        assert!(out.trace.is_empty());
    }
}
