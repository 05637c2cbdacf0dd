//! Physical-layer and computation model: effective channels, rates, latency,
//! energy, and the weighted system cost of a [`Decision`].

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::links::PerLink;
use crate::scenario::{ChannelSet, SystemParams};
use crate::CMat64;

/// Transmit beamformer of one stream, length `N_U`.
pub type Beam = Vec<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("infeasible decision at link (bs {q}, user {k}): {reason}")]
    InfeasibleDecision {
        q: usize,
        k: usize,
        reason: &'static str,
    },
}

/// The four optimization blocks at one iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub beamformers: PerLink<Beam>,
    /// radians, one per IRS element
    pub phases: Vec<f64>,
    /// bits offloaded from user k to the server at BS q
    pub offload: PerLink<f64>,
    /// cycles/s allotted by server q to user k
    pub edge_cpu: PerLink<f64>,
}

impl Decision {
    /// `‖F‖ ≤ 1`, `θ ∈ [0, 2π)`, `0 ≤ Σ_q ℓ ≤ L`, `Σ_k f ≤ f_total`, `f > 0` where `ℓ > 0`.
    pub fn constraint_violations(&self, params: &SystemParams, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let (qn, kn) = (params.num_cells, params.num_users);
        if self.offload.num_cells() != qn
            || self.offload.num_users() != kn
            || self.edge_cpu.num_cells() != qn
            || self.edge_cpu.num_users() != kn
            || self.beamformers.num_cells() != qn
            || self.beamformers.num_users() != kn
        {
            out.push("link tables do not match the cell/user counts".to_string());
            return out;
        }
        if self.phases.len() != params.irs_elements {
            out.push(format!(
                "{} phases for {} IRS elements",
                self.phases.len(),
                params.irs_elements
            ));
        }
        for ((q, k), f) in self.beamformers.indexed() {
            if f.len() != params.user_antennas {
                out.push(format!("beamformer ({q},{k}) has length {}", f.len()));
            }
            let n = linalg::vec_norm_sq(f).sqrt();
            if !(n <= 1.0 + tol) {
                out.push(format!("beamformer ({q},{k}) norm {n} exceeds 1"));
            }
        }
        for (n, &t) in self.phases.iter().enumerate() {
            if !(0.0..TAU).contains(&t) {
                out.push(format!("phase {n} = {t} outside [0, 2π)"));
            }
        }
        for k in 0..kn {
            let total: f64 = (0..qn).map(|q| self.offload[(q, k)]).sum();
            if (0..qn).any(|q| !(self.offload[(q, k)] >= -tol)) {
                out.push(format!("user {k} has negative offload"));
            }
            if !(total <= params.task_bits[k] * (1.0 + tol) + tol) {
                out.push(format!("user {k} offloads {total} > {}", params.task_bits[k]));
            }
        }
        for q in 0..qn {
            let total: f64 = (0..kn).map(|k| self.edge_cpu[(q, k)]).sum();
            if (0..kn).any(|k| !(self.edge_cpu[(q, k)] >= -tol)) {
                out.push(format!("server {q} has negative allocation"));
            }
            if !(total <= params.edge_cpu_total[q] * (1.0 + tol) + tol) {
                out.push(format!(
                    "server {q} allocates {total} > {}",
                    params.edge_cpu_total[q]
                ));
            }
            for k in 0..kn {
                if self.offload[(q, k)] > 0.0 && !(self.edge_cpu[(q, k)] > 0.0) {
                    out.push(format!("link ({q},{k}) offloads with no edge cpu"));
                }
            }
        }
        out
    }

    pub fn is_feasible(&self, params: &SystemParams, tol: f64) -> bool {
        self.constraint_violations(params, tol).is_empty()
    }

    /// IRS reflection coefficients `e^{jθ}`.
    pub fn reflection(&self) -> Vec<Complex64> {
        self.phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect()
    }

    /// Everything computed locally, with the given beams and phases.
    pub fn all_local(params: &SystemParams, beamformers: PerLink<Beam>, phases: Vec<f64>) -> Self {
        let (qn, kn) = (params.num_cells, params.num_users);
        Self {
            beamformers,
            phases,
            offload: PerLink::filled(qn, kn, 0.0),
            edge_cpu: PerLink::from_fn(qn, kn, |q, _| params.edge_cpu_total[q] / kn as f64),
        }
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Per-user latency, energy and cost, plus the link rates they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    /// nat/s/Hz
    pub rates: PerLink<f64>,
    /// s
    pub latency: Vec<f64>,
    /// J
    pub energy: Vec<f64>,
    /// `E_k + ζ D_k`
    pub per_user: Vec<f64>,
    /// `Σ ω_k C_k`
    pub total: f64,
}

impl CostBreakdown {
    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    pub fn total_latency(&self) -> f64 {
        self.latency.iter().sum()
    }
}

/// `H̄_{q,k} = H_{q,k} + G_q · diag(Θ) · H_{R,k}` for arbitrary reflection
/// coefficients `Θ` (unit modulus or relaxed).
pub fn effective_channel_with(
    ch: &ChannelSet,
    reflection: &[Complex64],
) -> Result<PerLink<CMat64>, MetricsError> {
    let m = ch.irs_elements();
    if reflection.len() != m {
        return Err(MetricsError::DimensionMismatch(format!(
            "{} reflection coefficients for {m} IRS elements",
            reflection.len()
        )));
    }
    let n_bs = ch.bs_antennas();
    let n_u = ch.user_antennas();
    Ok(PerLink::from_fn(ch.num_cells(), ch.num_users(), |q, k| {
        let mut h = ch.direct[(q, k)].clone();
        if m > 0 {
            let g = &ch.irs_to_bs[q];
            let hr = &ch.user_to_irs[k];
            for r in 0..n_bs {
                for c in 0..n_u {
                    let mut s = Complex64::new(0.0, 0.0);
                    for n in 0..m {
                        s += g[(r, n)] * reflection[n] * hr[(n, c)];
                    }
                    h[(r, c)] += s;
                }
            }
        }
        h
    }))
}

/// `H̄` for IRS phases `θ`.
pub fn effective_channel(ch: &ChannelSet, phases: &[f64]) -> Result<PerLink<CMat64>, MetricsError> {
    let refl: Vec<Complex64> = phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    effective_channel_with(ch, &refl)
}

fn check_links(hbar: &PerLink<CMat64>, beams: &PerLink<Beam>) -> Result<(), MetricsError> {
    if hbar.num_cells() != beams.num_cells() || hbar.num_users() != beams.num_users() {
        return Err(MetricsError::DimensionMismatch(
            "channel and beamformer tables differ in shape".into(),
        ));
    }
    for ((q, k), h) in hbar.indexed() {
        if h.cols() != beams[(q, k)].len() {
            return Err(MetricsError::DimensionMismatch(format!(
                "beamformer ({q},{k}) has {} entries, channel has {} columns",
                beams[(q, k)].len(),
                h.cols()
            )));
        }
    }
    Ok(())
}

/// Received image of stream `(n, m)` (beam of user `m` toward BS `n`) at BS `q`: `H̄_{q,m} F_{n,m}`.
pub fn stream_at(hbar: &PerLink<CMat64>, beams: &PerLink<Beam>, q: usize, n: usize, m: usize) -> Vec<Complex64> {
    hbar[(q, m)].mul_vec(&beams[(n, m)])
}

/// `J_{q,k}`: every stream received at BS `q` except `(q,k)`, plus `σ² I`.
pub fn interference_cov(
    hbar: &PerLink<CMat64>,
    beams: &PerLink<Beam>,
    noise_var: f64,
    q: usize,
    k: usize,
) -> Result<CMat64, MetricsError> {
    check_links(hbar, beams)?;
    let n_bs = hbar[(q, k)].rows();
    let mut j = CMat64::identity(n_bs).scale(noise_var);
    for m in 0..hbar.num_users() {
        if m != k {
            j.add_outer(&stream_at(hbar, beams, q, q, m), 1.0);
        }
        for n in 0..hbar.num_cells() {
            if n != q {
                j.add_outer(&stream_at(hbar, beams, q, n, m), 1.0);
            }
        }
    }
    Ok(j)
}

/// `ln |I + H̄ F Fᴴ H̄ᴴ J⁻¹|`, evaluated as `ln|J + s sᴴ| − ln|J|` with `s = H̄ F`.
pub fn rate_logdet(hbar_qk: &CMat64, beam: &[Complex64], j: &CMat64) -> Result<f64, MetricsError> {
    if hbar_qk.cols() != beam.len() || j.rows() != hbar_qk.rows() {
        return Err(MetricsError::DimensionMismatch("rate_logdet operands".into()));
    }
    let s = hbar_qk.mul_vec(beam);
    let mut total = j.clone();
    total.add_outer(&s, 1.0);
    let r = linalg::log_det_hpd(&total)? - linalg::log_det_hpd(j)?;
    Ok(r.max(0.0))
}

/// Log-det rates of every link.
pub fn rates_logdet(
    hbar: &PerLink<CMat64>,
    beams: &PerLink<Beam>,
    noise_var: f64,
) -> Result<PerLink<f64>, MetricsError> {
    check_links(hbar, beams)?;
    let (qn, kn) = (hbar.num_cells(), hbar.num_users());
    let mut rates = PerLink::filled(qn, kn, 0.0);
    for q in 0..qn {
        let n_bs = hbar[(q, 0)].rows();
        let streams = PerLink::from_fn(qn, kn, |n, m| stream_at(hbar, beams, q, n, m));
        let mut total = CMat64::identity(n_bs).scale(noise_var);
        for s in streams.iter() {
            total.add_outer(s, 1.0);
        }
        let ld_total = linalg::log_det_hpd(&total)?;
        for k in 0..kn {
            // accumulate J directly rather than subtracting the own stream from the total
            let mut j = CMat64::identity(n_bs).scale(noise_var);
            for (idx, s) in streams.indexed() {
                if idx != (q, k) {
                    j.add_outer(s, 1.0);
                }
            }
            rates[(q, k)] = (ld_total - linalg::log_det_hpd(&j)?).max(0.0);
        }
    }
    Ok(rates)
}

/// Received power of every stream at every BS: `power[q][(n, m)] = ‖H̄_{q,m} F_{n,m}‖²`.
pub fn stream_powers(hbar: &PerLink<CMat64>, beams: &PerLink<Beam>) -> Vec<PerLink<f64>> {
    (0..hbar.num_cells())
        .map(|q| {
            PerLink::from_fn(beams.num_cells(), beams.num_users(), |n, m| {
                linalg::apply_norm_sq(&hbar[(q, m)], &beams[(n, m)])
            })
        })
        .collect()
}

/// Scalar SINR `γ_{q,k}` and `ln(1 + γ)`.
pub fn rate_scalar(
    hbar: &PerLink<CMat64>,
    beams: &PerLink<Beam>,
    noise_var: f64,
    q: usize,
    k: usize,
) -> Result<(f64, f64), MetricsError> {
    check_links(hbar, beams)?;
    let mut signal = 0.0;
    let mut interference = 0.0;
    for i in 0..beams.num_cells() {
        for j in 0..beams.num_users() {
            let p = linalg::apply_norm_sq(&hbar[(q, j)], &beams[(i, j)]);
            if (i, j) == (q, k) {
                signal = p;
            } else {
                interference += p;
            }
        }
    }
    let gamma = signal / (interference + noise_var);
    Ok((gamma, gamma.ln_1p()))
}

/// SINRs of every link from precomputed stream powers.
pub fn sinrs_from_powers(powers: &[PerLink<f64>], noise_var: f64) -> PerLink<f64> {
    let qn = powers.len();
    let kn = powers.first().map_or(0, |p| p.num_users());
    PerLink::from_fn(qn, kn, |q, k| {
        let total: f64 = powers[q].iter().sum();
        let signal = powers[q][(q, k)];
        signal / (total - signal + noise_var)
    })
}

fn link_active(offload: f64) -> bool {
    offload > 0.0
}

/// Local latency and per-BS edge latencies of user `k`.
pub fn latency_components(
    offload: &PerLink<f64>,
    edge_cpu: &PerLink<f64>,
    rates: &PerLink<f64>,
    params: &SystemParams,
    k: usize,
) -> Result<(f64, Vec<f64>), MetricsError> {
    let c = params.cycles_per_bit[k];
    let offloaded: f64 = (0..params.num_cells).map(|q| offload[(q, k)]).sum();
    let local = (params.task_bits[k] - offloaded).max(0.0) * c / params.local_cpu[k];
    let mut edge = Vec::with_capacity(params.num_cells);
    for q in 0..params.num_cells {
        let l = offload[(q, k)];
        if !link_active(l) {
            edge.push(0.0);
            continue;
        }
        let r = rates[(q, k)];
        if !(r > 0.0) {
            return Err(MetricsError::InfeasibleDecision {
                q,
                k,
                reason: "offloading over a zero-rate link",
            });
        }
        let f = edge_cpu[(q, k)];
        if !(f > 0.0) {
            return Err(MetricsError::InfeasibleDecision {
                q,
                k,
                reason: "offloading with no edge cpu",
            });
        }
        edge.push(l / (params.bandwidth * r) + l * c / f);
    }
    Ok((local, edge))
}

/// `D_k = max(local, max_q edge_q)`.
pub fn latency(
    offload: &PerLink<f64>,
    edge_cpu: &PerLink<f64>,
    rates: &PerLink<f64>,
    params: &SystemParams,
    k: usize,
) -> Result<f64, MetricsError> {
    let (local, edge) = latency_components(offload, edge_cpu, rates, params, k)?;
    Ok(edge.into_iter().fold(local, f64::max))
}

/// Local computing energy plus edge computing and transmission energy of user `k`.
pub fn energy(
    offload: &PerLink<f64>,
    rates: &PerLink<f64>,
    params: &SystemParams,
    k: usize,
) -> Result<f64, MetricsError> {
    let c = params.cycles_per_bit[k];
    let offloaded: f64 = (0..params.num_cells).map(|q| offload[(q, k)]).sum();
    let mut e = c * params.local_energy_per_cycle[k] * (params.task_bits[k] - offloaded);
    for q in 0..params.num_cells {
        let l = offload[(q, k)];
        if !link_active(l) {
            continue;
        }
        let r = rates[(q, k)];
        if !(r > 0.0) {
            return Err(MetricsError::InfeasibleDecision {
                q,
                k,
                reason: "offloading over a zero-rate link",
            });
        }
        e += c * params.edge_energy_per_cycle[q] * l
            + params.tx_power_at(q, k) * l / (params.bandwidth * r);
    }
    Ok(e)
}

/// Cost of an offloading split under fixed link rates.
pub fn cost_with_rates(
    offload: &PerLink<f64>,
    edge_cpu: &PerLink<f64>,
    rates: PerLink<f64>,
    params: &SystemParams,
) -> Result<CostBreakdown, MetricsError> {
    let kn = params.num_users;
    let mut latency_v = Vec::with_capacity(kn);
    let mut energy_v = Vec::with_capacity(kn);
    let mut per_user = Vec::with_capacity(kn);
    let mut total = 0.0;
    for k in 0..kn {
        let d = latency(offload, edge_cpu, &rates, params, k)?;
        let e = energy(offload, &rates, params, k)?;
        let c = e + params.tradeoff * d;
        total += params.user_weights[k] * c;
        latency_v.push(d);
        energy_v.push(e);
        per_user.push(c);
    }
    Ok(CostBreakdown {
        rates,
        latency: latency_v,
        energy: energy_v,
        per_user,
        total,
    })
}

/// Weighted system cost `Σ ω_k (E_k + ζ D_k)` of a full decision.
pub fn total_cost(dec: &Decision, ch: &ChannelSet, params: &SystemParams) -> Result<CostBreakdown, MetricsError> {
    let hbar = effective_channel(ch, &dec.phases)?;
    let rates = rates_logdet(&hbar, &dec.beamformers, params.noise_var)?;
    cost_with_rates(&dec.offload, &dec.edge_cpu, rates, params)
}

/// Same as [`total_cost`] for relaxed reflection coefficients.
pub fn total_cost_with_reflection(
    dec: &Decision,
    reflection: &[Complex64],
    ch: &ChannelSet,
    params: &SystemParams,
) -> Result<CostBreakdown, MetricsError> {
    let hbar = effective_channel_with(ch, reflection)?;
    let rates = rates_logdet(&hbar, &dec.beamformers, params.noise_var)?;
    cost_with_rates(&dec.offload, &dec.edge_cpu, rates, params)
}
