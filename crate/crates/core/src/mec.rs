//! Computation-offloading block: for fixed link rates, choose offloaded bits
//! `ℓ` and server CPU shares `f^E` minimizing `Σ ω_k (E_k + ζ D_k)`.
//!
//! Latency and energy are moved into epigraph variables `D_k`, `E_k`. The edge
//! latency bound `ℓ/(BR) + ℓc/f ≤ D` becomes, after multiplying by `f`, the
//! bilinear row `(1/(BR))·ℓf − D·f + c·ℓ ≤ 0`. The resulting QCP is solved
//! globally by spatial branch-and-bound over McCormick LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::links::PerLink;
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::scenario::SystemParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MecError {
    #[error("invalid rate {rate} on link (bs {q}, user {k})")]
    InvalidRates { q: usize, k: usize, rate: f64 },
    #[error("empty box: variable {index} has bounds [{lb}, {ub}]")]
    EmptyBox { index: usize, lb: f64, ub: f64 },
    #[error("grid oracle supports at most 2 cells and 2 users, got {num_cells}×{num_users}")]
    TooLarge { num_cells: usize, num_users: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// `Σ coef·x[idx] ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `Σ coef·x[u]·x[v] + Σ coef·x[idx] ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearRow {
    pub products: Vec<(f64, usize, usize)>,
    pub linear: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Epigraph QCP of the offloading block. Variables are laid out as
/// `ℓ` (BS-major), `f^E` (BS-major), `D` (only when `ζ > 0`), `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct QcpModel {
    pub num_cells: usize,
    pub num_users: usize,
    pub has_latency: bool,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub objective: Vec<f64>,
    pub linear: Vec<LinearRow>,
    pub bilinear: Vec<BilinearRow>,
    /// One entry per edge-latency row, parallel to `bilinear`.
    edge_rows: Vec<EdgeRow>,
    data: CostData,
}

/// Indices and coefficients of `ℓ(a f + c) ≤ D f` for one link.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EdgeRow {
    offload: usize,
    cpu: usize,
    latency: usize,
    tx_time: f64,
    cycles: f64,
}

/// Everything needed to price an `(ℓ, f)` pair exactly.
#[derive(Debug, Clone, PartialEq)]
struct CostData {
    tradeoff: f64,
    weights: Vec<f64>,
    task_bits: Vec<f64>,
    cycles: Vec<f64>,
    /// `c / f^L`, seconds per local bit
    local_time: Vec<f64>,
    /// `c E^d`, joules per local bit
    local_energy: Vec<f64>,
    /// `c E^s + P/(BR)`, joules per offloaded bit
    edge_energy: PerLink<f64>,
    /// `1/(BR)`, or `None` on dead links
    tx_time: PerLink<Option<f64>>,
    capacity: Vec<f64>,
}

impl QcpModel {
    pub fn num_vars(&self) -> usize {
        self.lb.len()
    }

    pub fn offload_index(&self, q: usize, k: usize) -> usize {
        q * self.num_users + k
    }

    pub fn cpu_index(&self, q: usize, k: usize) -> usize {
        self.num_cells * self.num_users + q * self.num_users + k
    }

    pub fn latency_index(&self, k: usize) -> Option<usize> {
        self.has_latency.then(|| 2 * self.num_cells * self.num_users + k)
    }

    pub fn energy_index(&self, k: usize) -> usize {
        2 * self.num_cells * self.num_users + if self.has_latency { self.num_users } else { 0 } + k
    }

    pub fn num_bilinear_terms(&self) -> usize {
        self.bilinear.iter().map(|r| r.products.len()).sum()
    }

    /// Exact `(D, E, Σ ω(E + ζD))` of an offloading split, or `None` if some
    /// link carries bits with no rate or no CPU.
    pub fn evaluate(&self, offload: &PerLink<f64>, edge_cpu: &PerLink<f64>) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let d = &self.data;
        let mut lat = Vec::with_capacity(self.num_users);
        let mut en = Vec::with_capacity(self.num_users);
        let mut total = 0.0;
        for k in 0..self.num_users {
            let sent: f64 = (0..self.num_cells).map(|q| offload[(q, k)]).sum();
            let local_bits = (d.task_bits[k] - sent).max(0.0);
            let mut dk = local_bits * d.local_time[k];
            let mut ek = local_bits * d.local_energy[k];
            for q in 0..self.num_cells {
                let l = offload[(q, k)];
                if l <= 0.0 {
                    continue;
                }
                let f = edge_cpu[(q, k)];
                let a = d.tx_time[(q, k)]?;
                if f <= 0.0 {
                    return None;
                }
                dk = dk.max(l * a + l * d.cycles[k] / f);
                ek += l * d.edge_energy[(q, k)];
            }
            total += d.weights[k] * (ek + d.tradeoff * dk);
            lat.push(dk);
            en.push(ek);
        }
        Some((lat, en, total))
    }

    fn split(&self, x: &[f64]) -> (PerLink<f64>, PerLink<f64>) {
        (
            PerLink::from_fn(self.num_cells, self.num_users, |q, k| x[self.offload_index(q, k)]),
            PerLink::from_fn(self.num_cells, self.num_users, |q, k| x[self.cpu_index(q, k)]),
        )
    }
}

/// Assemble the epigraph QCP for the given link rates (nat/s/Hz).
pub fn build_qcp(params: &SystemParams, rates: &PerLink<f64>) -> Result<QcpModel, MecError> {
    let (qn, kn) = (params.num_cells, params.num_users);
    for ((q, k), &r) in rates.indexed() {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(MecError::InvalidRates { q, k, rate: r });
        }
    }
    let zeta = params.tradeoff;
    let has_latency = zeta > 0.0;
    let data = CostData {
        tradeoff: zeta,
        weights: params.user_weights.clone(),
        task_bits: params.task_bits.clone(),
        cycles: params.cycles_per_bit.clone(),
        local_time: (0..kn).map(|k| params.cycles_per_bit[k] / params.local_cpu[k]).collect(),
        local_energy: (0..kn)
            .map(|k| params.cycles_per_bit[k] * params.local_energy_per_cycle[k])
            .collect(),
        edge_energy: PerLink::from_fn(qn, kn, |q, k| {
            let r = rates[(q, k)];
            let tx = if r > 0.0 {
                params.tx_power_at(q, k) / (params.bandwidth * r)
            } else {
                0.0
            };
            params.cycles_per_bit[k] * params.edge_energy_per_cycle[q] + tx
        }),
        tx_time: PerLink::from_fn(qn, kn, |q, k| {
            let r = rates[(q, k)];
            (r > 0.0).then(|| 1.0 / (params.bandwidth * r))
        }),
        capacity: params.edge_cpu_total.clone(),
    };

    let n = 2 * qn * kn + if has_latency { 2 * kn } else { kn };
    let mut model = QcpModel {
        num_cells: qn,
        num_users: kn,
        has_latency,
        lb: vec![0.0; n],
        ub: vec![0.0; n],
        objective: vec![0.0; n],
        linear: Vec::new(),
        bilinear: Vec::new(),
        edge_rows: Vec::new(),
        data,
    };
    let c0 = params.all_local_cost();
    for k in 0..kn {
        let lk = params.task_bits[k];
        for q in 0..qn {
            let li = model.offload_index(q, k);
            model.ub[li] = if rates[(q, k)] > 0.0 { lk } else { 0.0 };
            let fi = model.cpu_index(q, k);
            model.ub[fi] = params.edge_cpu_total[q];
        }
        let ei = model.energy_index(k);
        model.ub[ei] = lk * (model.data.local_energy[k] + (0..qn).map(|q| model.data.edge_energy[(q, k)]).sum::<f64>());
        model.objective[ei] = params.user_weights[k];
        if let Some(di) = model.latency_index(k) {
            // ζ ω_k D_k alone cannot exceed the all-local cost at an optimum
            model.ub[di] = c0 / (zeta * params.user_weights[k]);
            model.objective[di] = zeta * params.user_weights[k];
        }
    }

    for k in 0..kn {
        let lk = params.task_bits[k];
        let ls: Vec<usize> = (0..qn).map(|q| model.offload_index(q, k)).collect();
        // Σ_q ℓ ≤ L
        model.linear.push(LinearRow {
            terms: ls.iter().map(|&i| (i, 1.0)).collect(),
            rhs: lk,
        });
        // c E^d (L − Σℓ) + Σ e_q ℓ_q ≤ E
        let mut terms: Vec<(usize, f64)> = (0..qn)
            .map(|q| (ls[q], model.data.edge_energy[(q, k)] - model.data.local_energy[k]))
            .collect();
        terms.push((model.energy_index(k), -1.0));
        model.linear.push(LinearRow {
            terms,
            rhs: -model.data.local_energy[k] * lk,
        });
        if let Some(di) = model.latency_index(k) {
            // (L − Σℓ) c / f^L ≤ D
            let lt = model.data.local_time[k];
            let mut terms: Vec<(usize, f64)> = ls.iter().map(|&i| (i, -lt)).collect();
            terms.push((di, -1.0));
            model.linear.push(LinearRow {
                terms,
                rhs: -lt * lk,
            });
            for q in 0..qn {
                if let Some(a) = model.data.tx_time[(q, k)] {
                    let fi = model.cpu_index(q, k);
                    model.bilinear.push(BilinearRow {
                        products: vec![(a, ls[q], fi), (-1.0, di, fi)],
                        linear: vec![(ls[q], params.cycles_per_bit[k])],
                        rhs: 0.0,
                    });
                    model.edge_rows.push(EdgeRow {
                        offload: ls[q],
                        cpu: fi,
                        latency: di,
                        tx_time: a,
                        cycles: params.cycles_per_bit[k],
                    });
                }
            }
        }
    }
    for q in 0..qn {
        model.linear.push(LinearRow {
            terms: (0..kn).map(|k| (model.cpu_index(q, k), 1.0)).collect(),
            rhs: params.edge_cpu_total[q],
        });
    }
    Ok(model)
}

/// Box of one branch-and-bound node.
#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub bound: f64,
    pub depth: usize,
}

impl BnbNode {
    pub fn root(model: &QcpModel) -> Self {
        Self {
            lb: model.lb.clone(),
            ub: model.ub.clone(),
            bound: f64::NEG_INFINITY,
            depth: 0,
        }
    }
}

fn corner_range(ul: f64, uu: f64, vl: f64, vu: f64) -> (f64, f64) {
    let c = [ul * vl, ul * vu, uu * vl, uu * vu];
    (
        c.iter().copied().fold(f64::INFINITY, f64::min),
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// LP relaxation of `model` over the node box. Each product `u·v` becomes a
/// new variable appended after the model variables, in row/product order,
/// bounded by the four McCormick inequalities.
pub fn mccormick_relax(model: &QcpModel, node: &BnbNode) -> Result<LinearProgram, MecError> {
    let n = model.num_vars();
    for i in 0..n {
        if node.lb[i] > node.ub[i] {
            return Err(MecError::EmptyBox {
                index: i,
                lb: node.lb[i],
                ub: node.ub[i],
            });
        }
    }
    let nw = model.num_bilinear_terms();
    let mut c = model.objective.clone();
    c.resize(n + nw, 0.0);
    let mut lb = node.lb.clone();
    let mut ub = node.ub.clone();
    for row in &model.bilinear {
        for &(_, u, v) in &row.products {
            let (lo, hi) = corner_range(node.lb[u], node.ub[u], node.lb[v], node.ub[v]);
            lb.push(lo);
            ub.push(hi);
        }
    }
    let mut lp = LinearProgram::new(c, lb, ub);
    for row in &model.linear {
        lp.push_row(&row.terms, row.rhs);
    }
    let mut w = n;
    for row in &model.bilinear {
        let mut terms = row.linear.clone();
        for &(coef, u, v) in &row.products {
            terms.push((w, coef));
            let (ul, uu, vl, vu) = (node.lb[u], node.ub[u], node.lb[v], node.ub[v]);
            // w ≥ ul v + u vl − ul vl
            lp.push_row(&[(w, -1.0), (v, ul), (u, vl)], ul * vl);
            // w ≥ uu v + u vu − uu vu
            lp.push_row(&[(w, -1.0), (v, uu), (u, vu)], uu * vu);
            // w ≤ uu v + u vl − uu vl
            lp.push_row(&[(w, 1.0), (v, -uu), (u, -vl)], -uu * vl);
            // w ≤ ul v + u vu − ul vu
            lp.push_row(&[(w, 1.0), (v, -ul), (u, -vu)], -ul * vu);
            w += 1;
        }
        lp.push_row(&terms, row.rhs);
    }
    for e in &model.edge_rows {
        push_edge_cuts(&mut lp, e, node);
    }
    Ok(lp)
}

/// Extra rows valid on the node box that tighten the McCormick envelopes of
/// `ℓ(a f + c) ≤ D f`:
///  * envelopes of the single product `f·s` with `s = D − aℓ ∈ [s_l, s_u]`,
///    substituted into `cℓ ≤ f s`;
///  * tangents of the convex bound `f ≥ cℓ / (D_u − aℓ)`.
fn push_edge_cuts(lp: &mut LinearProgram, e: &EdgeRow, node: &BnbNode) {
    let (li, fi, di, a, c) = (e.offload, e.cpu, e.latency, e.tx_time, e.cycles);
    let (ll, lu) = (node.lb[li], node.ub[li]);
    let (fl, fu) = (node.lb[fi], node.ub[fi]);
    let (dl, du) = (node.lb[di], node.ub[di]);
    let sl = (dl - a * lu).max(0.0);
    let su = du - a * ll;
    // cℓ ≤ f_u(D − aℓ) + s_l(f − f_u)
    lp.push_row(&[(li, c + a * fu), (di, -fu), (fi, -sl)], -sl * fu);
    // cℓ ≤ f_l(D − aℓ) + s_u(f − f_l)
    lp.push_row(&[(li, c + a * fl), (di, -fl), (fi, -su)], -su * fl);
    if lu <= 0.0 || du <= a * lu {
        return;
    }
    for i in 0..=TANGENTS {
        let l0 = ll + (lu - ll) * i as f64 / TANGENTS as f64;
        let slack = du - a * l0;
        let h = c * l0 / slack;
        let dh = c * du / (slack * slack);
        // f ≥ h + h'(ℓ − ℓ0)
        lp.push_row(&[(li, dh), (fi, -1.0)], dh * l0 - h);
    }
}

const TANGENTS: usize = 4;
const CUT_ROUNDS: usize = 6;

/// McCormick relaxation of the node, refined by tangent cuts at the relaxed
/// point until the convex part of every edge row is met. `None` if the node
/// relaxation is infeasible.
fn relax_node(model: &QcpModel, node: &BnbNode) -> Result<Option<crate::lp::LpSolution>, MecError> {
    let mut lp = mccormick_relax(model, node)?;
    let mut sol = solve_lp(&lp)?;
    for _ in 0..CUT_ROUNDS {
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
        let mut added = false;
        for e in &model.edge_rows {
            let du = node.ub[e.latency];
            let l0 = sol.x[e.offload];
            let slack = du - e.tx_time * l0;
            if l0 <= 0.0 || slack <= 0.0 {
                continue;
            }
            let h = e.cycles * l0 / slack;
            if sol.x[e.cpu] >= h * (1.0 - 1e-9) {
                continue;
            }
            let dh = e.cycles * du / (slack * slack);
            lp.push_row(&[(e.offload, dh), (e.cpu, -1.0)], dh * l0 - h);
            added = true;
        }
        if !added {
            break;
        }
        sol = solve_lp(&lp)?;
    }
    Ok((sol.status == LpStatus::Optimal).then_some(sol))
}

/// Optimal (or best-found) offloading split.
#[derive(Debug, Clone, PartialEq)]
pub struct MecSolution {
    pub offload: PerLink<f64>,
    pub edge_cpu: PerLink<f64>,
    pub latency: Vec<f64>,
    pub energy: Vec<f64>,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
}

/// Feasible point produced from a relaxed one.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicPoint {
    pub offload: PerLink<f64>,
    pub edge_cpu: PerLink<f64>,
    pub latency: Vec<f64>,
    pub energy: Vec<f64>,
    pub objective: f64,
}

/// Euclidean projection onto `{x ≥ 0, Σx ≤ cap}`.
pub fn project_capacity(x: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    // projection onto the face Σx = cap: x_i − τ clipped at zero
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - cap) / (i + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = x.iter().map(|v| (v - tau).max(0.0)).collect();
    // land exactly on the capacity despite rounding
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        let scale = cap / s;
        for v in &mut out {
            *v *= scale;
        }
    }
    out
}

fn all_local_point(model: &QcpModel) -> HeuristicPoint {
    let (qn, kn) = (model.num_cells, model.num_users);
    let offload = PerLink::filled(qn, kn, 0.0);
    let edge_cpu = PerLink::from_fn(qn, kn, |q, _| model.data.capacity[q] / kn as f64);
    let (latency, energy, objective) = model.evaluate(&offload, &edge_cpu).expect("all-local is always feasible");
    HeuristicPoint {
        offload,
        edge_cpu,
        latency,
        energy,
        objective,
    }
}

/// Best `(ℓ, D, E)` for a fixed CPU split, by LP.
fn solve_fixed_cpu(model: &QcpModel, edge_cpu: &PerLink<f64>) -> Result<HeuristicPoint, MecError> {
    let (qn, kn) = (model.num_cells, model.num_users);
    let d = &model.data;
    // local layout: ℓ (qn·kn), then D (if any), then E
    let nl = qn * kn;
    let di = |k: usize| nl + k;
    let ei = |k: usize| nl + if model.has_latency { kn } else { 0 } + k;
    let n = nl + if model.has_latency { 2 * kn } else { kn };
    let mut c = vec![0.0; n];
    let mut lb = vec![0.0; n];
    let mut ub = vec![0.0; n];
    for k in 0..kn {
        for q in 0..qn {
            let i = q * kn + k;
            let usable = d.tx_time[(q, k)].is_some() && edge_cpu[(q, k)] > 0.0;
            ub[i] = if usable { model.ub[model.offload_index(q, k)] } else { 0.0 };
        }
        c[ei(k)] = d.weights[k];
        ub[ei(k)] = model.ub[model.energy_index(k)];
        lb[ei(k)] = model.lb[model.energy_index(k)].min(ub[ei(k)]);
        if let Some(mdi) = model.latency_index(k) {
            c[di(k)] = d.weights[k] * d.tradeoff;
            ub[di(k)] = model.ub[mdi];
        }
    }
    let mut lp = LinearProgram::new(c, lb, ub);
    for k in 0..kn {
        let ls: Vec<usize> = (0..qn).map(|q| q * kn + k).collect();
        lp.push_row(&ls.iter().map(|&i| (i, 1.0)).collect::<Vec<_>>(), d.task_bits[k]);
        let mut terms: Vec<(usize, f64)> = (0..qn)
            .map(|q| (ls[q], d.edge_energy[(q, k)] - d.local_energy[k]))
            .collect();
        terms.push((ei(k), -1.0));
        lp.push_row(&terms, -d.local_energy[k] * d.task_bits[k]);
        if model.has_latency {
            let lt = d.local_time[k];
            let mut terms: Vec<(usize, f64)> = ls.iter().map(|&i| (i, -lt)).collect();
            terms.push((di(k), -1.0));
            lp.push_row(&terms, -lt * d.task_bits[k]);
            for q in 0..qn {
                if let Some(a) = d.tx_time[(q, k)] {
                    let f = edge_cpu[(q, k)];
                    if f > 0.0 {
                        lp.push_row(&[(ls[q], a + d.cycles[k] / f), (di(k), -1.0)], 0.0);
                    }
                }
            }
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Ok(all_local_point(model));
    }
    let offload = PerLink::from_fn(qn, kn, |q, k| {
        let l = sol.x[q * kn + k];
        // drop dust so zero-CPU links stay idle
        if l > 1e-12 * d.task_bits[k] {
            l
        } else {
            0.0
        }
    });
    match model.evaluate(&offload, edge_cpu) {
        Some((latency, energy, objective)) => Ok(HeuristicPoint {
            offload,
            edge_cpu: edge_cpu.clone(),
            latency,
            energy,
            objective,
        }),
        None => Ok(all_local_point(model)),
    }
}

/// Fix `f^E` from a relaxed point (projected onto each server's capacity) and
/// solve the remaining LP in `(ℓ, D, E)`.
pub fn feasibility_heuristic(model: &QcpModel, relaxed_x: &[f64]) -> Result<HeuristicPoint, MecError> {
    let (qn, kn) = (model.num_cells, model.num_users);
    let mut edge_cpu = PerLink::filled(qn, kn, 0.0);
    for q in 0..qn {
        let raw: Vec<f64> = (0..kn).map(|k| relaxed_x[model.cpu_index(q, k)]).collect();
        for (k, v) in project_capacity(&raw, model.data.capacity[q]).into_iter().enumerate() {
            edge_cpu[(q, k)] = v;
        }
    }
    solve_fixed_cpu(model, &edge_cpu)
}

/// Scale each server's shares up to its full capacity (idle servers split evenly).
fn fill_capacity(model: &QcpModel, edge_cpu: &PerLink<f64>) -> PerLink<f64> {
    let (qn, kn) = (model.num_cells, model.num_users);
    let mut out = edge_cpu.clone();
    for q in 0..qn {
        let cap = model.data.capacity[q];
        let s: f64 = (0..kn).map(|k| edge_cpu[(q, k)]).sum();
        for k in 0..kn {
            out[(q, k)] = if s > 0.0 { edge_cpu[(q, k)] * cap / s } else { cap / kn as f64 };
        }
    }
    out
}

/// Pin every `D_k` at its relaxed value, where the node relaxation becomes
/// exact up to the tangent cuts, then polish the CPU split it returns.
fn pinned_latency_point(model: &QcpModel, node: &BnbNode, x: &[f64]) -> Result<Option<HeuristicPoint>, MecError> {
    let mut pinned = node.clone();
    for k in 0..model.num_users {
        if let Some(di) = model.latency_index(k) {
            let d = x[di].clamp(node.lb[di], node.ub[di]);
            pinned.lb[di] = d;
            pinned.ub[di] = d;
        }
    }
    let Some(sol) = relax_node(model, &pinned)? else {
        return Ok(None);
    };
    let (offload, edge_cpu) = model.split(&sol.x);
    let mut best = model.evaluate(&offload, &edge_cpu).map(|(latency, energy, objective)| HeuristicPoint {
        offload,
        edge_cpu: edge_cpu.clone(),
        latency,
        energy,
        objective,
    });
    let polished = solve_fixed_cpu(model, &fill_capacity(model, &edge_cpu))?;
    if best.as_ref().is_none_or(|b| polished.objective < b.objective) {
        best = Some(polished);
    }
    Ok(best)
}

/// Branch-and-bound settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BnbConfig {
    pub rel_gap: f64,
    pub node_budget: usize,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            rel_gap: 1e-4,
            node_budget: 10_000,
        }
    }
}

struct Queued {
    bound: f64,
    seq: usize,
    node: BnbNode,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Feasibility-based bound tightening. Returns `false` if the box is empty.
fn tighten(model: &QcpModel, lb: &mut [f64], ub: &mut [f64], incumbent: f64) -> bool {
    let (qn, kn) = (model.num_cells, model.num_users);
    let d = &model.data;
    let raise = |lb: &mut [f64], i: usize, v: f64| {
        if v > lb[i] {
            lb[i] = v;
        }
    };
    let lower = |ub: &mut [f64], i: usize, v: f64| {
        if v < ub[i] {
            ub[i] = v;
        }
    };
    for _ in 0..3 {
        for k in 0..kn {
            let ls: Vec<usize> = (0..qn).map(|q| model.offload_index(q, k)).collect();
            let sum_lb: f64 = ls.iter().map(|&i| lb[i]).sum();
            let sum_ub: f64 = ls.iter().map(|&i| ub[i]).sum();
            for &i in &ls {
                lower(ub, i, d.task_bits[k] - (sum_lb - lb[i]));
            }
            // energy epigraph
            let ei = model.energy_index(k);
            let mut emin = d.local_energy[k] * d.task_bits[k];
            for q in 0..qn {
                let s = d.edge_energy[(q, k)] - d.local_energy[k];
                emin += s * if s < 0.0 { ub[ls[q]] } else { lb[ls[q]] };
            }
            raise(lb, ei, emin);
            if let Some(di) = model.latency_index(k) {
                raise(lb, di, (d.task_bits[k] - sum_ub).max(0.0) * d.local_time[k]);
                // enough must leave to finish locally within D_ub
                let need = d.task_bits[k] - ub[di] / d.local_time[k];
                for &i in &ls {
                    raise(lb, i, need - (sum_ub - ub[i]));
                }
                for q in 0..qn {
                    let Some(a) = d.tx_time[(q, k)] else { continue };
                    let (li, fi) = (ls[q], model.cpu_index(q, k));
                    let c = d.cycles[k];
                    if ub[fi] > 0.0 {
                        lower(ub, li, ub[di] / (a + c / ub[fi]));
                        raise(lb, di, lb[li] * (a + c / ub[fi]));
                    } else {
                        lower(ub, li, 0.0);
                    }
                    if lb[li] > 0.0 {
                        let slack = ub[di] - a * lb[li];
                        if slack <= 0.0 {
                            return false;
                        }
                        raise(lb, fi, c * lb[li] / slack);
                    }
                }
            }
        }
        for q in 0..qn {
            let fs: Vec<usize> = (0..kn).map(|k| model.cpu_index(q, k)).collect();
            let sum_lb: f64 = fs.iter().map(|&i| lb[i]).sum();
            for &i in &fs {
                lower(ub, i, d.capacity[q] - (sum_lb - lb[i]));
            }
        }
        // objective cut against the incumbent
        if incumbent.is_finite() {
            let floor: f64 = (0..model.num_vars()).map(|i| model.objective[i] * lb[i]).sum();
            let room = incumbent - floor;
            for i in 0..model.num_vars() {
                let c = model.objective[i];
                if c > 0.0 {
                    lower(ub, i, lb[i] + room / c);
                }
            }
        }
        for i in 0..model.num_vars() {
            if lb[i] > ub[i] {
                if lb[i] - ub[i] <= 1e-12 * (1.0 + ub[i].abs()) {
                    lb[i] = ub[i];
                } else {
                    return false;
                }
            }
        }
    }
    true
}

fn gap_of(objective: f64, bound: f64) -> f64 {
    ((objective - bound) / objective.abs().max(1.0)).max(0.0)
}

/// Spatial branch-and-bound from the all-local incumbent.
pub fn spatial_bnb(model: &QcpModel, rel_gap: f64, node_budget: usize) -> Result<MecSolution, MecError> {
    spatial_bnb_from(model, BnbConfig { rel_gap, node_budget }, None)
}

/// Spatial branch-and-bound, optionally seeded with a known split that
/// becomes the incumbent if it beats all-local.
pub fn spatial_bnb_from(
    model: &QcpModel,
    cfg: BnbConfig,
    warm: Option<(&PerLink<f64>, &PerLink<f64>)>,
) -> Result<MecSolution, MecError> {
    let mut best = all_local_point(model);
    if let Some((l, f)) = warm {
        if let Some((latency, energy, objective)) = model.evaluate(l, f) {
            if objective < best.objective {
                best = HeuristicPoint {
                    offload: l.clone(),
                    edge_cpu: f.clone(),
                    latency,
                    energy,
                    objective,
                };
            }
        }
    }

    if !model.has_latency {
        // ζ = 0: the CPU split does not enter the objective; use equal shares.
        let (qn, kn) = (model.num_cells, model.num_users);
        let f = PerLink::from_fn(qn, kn, |q, _| model.data.capacity[q] / kn as f64);
        let p = solve_fixed_cpu(model, &f)?;
        if p.objective < best.objective {
            best = p;
        }
        return Ok(finish(best, f64::NEG_INFINITY, 1, true));
    }

    // local search from the equal split and from the warm split
    let (qn, kn) = (model.num_cells, model.num_users);
    let mut starts = vec![PerLink::from_fn(qn, kn, |q, _| model.data.capacity[q] / kn as f64)];
    if let Some((_, f)) = warm {
        starts.push(f.clone());
    }
    for f in &starts {
        let p = local_cpu_search(model, f)?;
        if p.objective < best.objective {
            best = p;
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut root = BnbNode::root(model);
    let mut explored = 0usize;
    let mut proven = true;
    if tighten(model, &mut root.lb, &mut root.ub, best.objective) {
        heap.push(Queued {
            bound: f64::NEG_INFINITY,
            seq,
            node: root,
        });
    }
    let mut global_bound = f64::NEG_INFINITY;
    while let Some(Queued { bound, node, .. }) = heap.pop() {
        global_bound = bound;
        if gap_of(best.objective, bound) <= cfg.rel_gap {
            break;
        }
        if explored >= cfg.node_budget {
            heap.push(Queued { bound, seq, node });
            proven = false;
            break;
        }
        explored += 1;
        let mut node = node;
        if !tighten(model, &mut node.lb, &mut node.ub, best.objective) {
            continue;
        }
        let Some(sol) = relax_node(model, &node)? else {
            continue;
        };
        let relax = sol.objective_value.max(bound);
        // heuristics: projected CPU split, and the same split filled to capacity
        let h = feasibility_heuristic(model, &sol.x)?;
        let filled = fill_capacity(model, &h.edge_cpu);
        if h.objective < best.objective {
            best = h;
        }
        let h2 = solve_fixed_cpu(model, &filled)?;
        if h2.objective < best.objective {
            best = h2;
        }
        if let Some(h3) = pinned_latency_point(model, &node, &sol.x)? {
            if h3.objective < best.objective {
                best = h3;
            }
        }
        if gap_of(best.objective, relax) <= cfg.rel_gap {
            continue;
        }
        // Branch on the latency variable of the most violated edge row: with D
        // pinned, the row is convex in (ℓ, f) and the tangent cuts make the
        // relaxation exact, so ℓ and f never need splitting.
        let mut pick: Option<(f64, usize)> = None;
        for e in &model.edge_rows {
            let (l, f, d) = (sol.x[e.offload], sol.x[e.cpu], sol.x[e.latency]);
            let needed = if l <= 0.0 {
                0.0
            } else if f > 0.0 {
                l * (e.tx_time + e.cycles / f)
            } else {
                f64::INFINITY
            };
            let width = node.ub[e.latency] - node.lb[e.latency];
            let viol = (needed - d).min(width) * model.objective[e.latency];
            if viol > 0.0 && pick.is_none_or(|(b, _)| viol > b) {
                pick = Some((viol, e.latency));
            }
        }
        let Some((viol, var)) = pick else { continue };
        if viol <= 1e-12 * best.objective.abs().max(1.0) {
            continue;
        }
        let mid = 0.5 * (node.lb[var] + node.ub[var]);
        for half in 0..2 {
            let mut child = BnbNode {
                lb: node.lb.clone(),
                ub: node.ub.clone(),
                bound: relax,
                depth: node.depth + 1,
            };
            if half == 0 {
                child.ub[var] = mid;
            } else {
                child.lb[var] = mid;
            }
            seq += 1;
            heap.push(Queued {
                bound: relax,
                seq,
                node: child,
            });
        }
    }
    let lower_bound = if heap.is_empty() && proven {
        // everything pruned: the incumbent is optimal up to the pruning tolerance
        global_bound.max(best.objective * (1.0 - cfg.rel_gap)).min(best.objective)
    } else {
        heap.iter().map(|q| q.bound).fold(global_bound, f64::min).min(best.objective)
    };
    Ok(finish(best, lower_bound, explored, false))
}

fn finish(best: HeuristicPoint, lower_bound: f64, nodes: usize, exact: bool) -> MecSolution {
    let lb = if exact { best.objective } else { lower_bound };
    MecSolution {
        gap: gap_of(best.objective, lb),
        lower_bound: lb,
        offload: best.offload,
        edge_cpu: best.edge_cpu,
        latency: best.latency,
        energy: best.energy,
        objective: best.objective,
        nodes_explored: nodes,
    }
}

/// Exact cost of the best offloading split for a fixed CPU split (users
/// decouple; each is solved in closed form over a latency search).
pub fn fixed_cpu_cost(model: &QcpModel, edge_cpu: &PerLink<f64>) -> f64 {
    (0..model.num_users)
        .map(|k| user_cost(&model.data, k, &cpu_column(edge_cpu, k)))
        .sum()
}

/// Best offloading split for a fixed CPU split, by LP.
pub fn best_offload_for_cpu(model: &QcpModel, edge_cpu: &PerLink<f64>) -> Result<HeuristicPoint, MecError> {
    solve_fixed_cpu(model, edge_cpu)
}

/// Build the QCP for `rates` and solve it, warm-started from a current split.
pub fn solve_mec(
    params: &SystemParams,
    rates: &PerLink<f64>,
    cfg: BnbConfig,
    warm: Option<(&PerLink<f64>, &PerLink<f64>)>,
) -> Result<MecSolution, MecError> {
    let model = build_qcp(params, rates)?;
    spatial_bnb_from(&model, cfg, warm)
}

/// Best cost of user `k` for a fixed CPU column: `ℓ` by greedy fractional
/// knapsack at each latency budget `D`, golden section over `D`.
fn user_cost(d: &CostData, k: usize, cpu: &[f64]) -> f64 {
    let qn = cpu.len();
    let lk = d.task_bits[k];
    let c = d.cycles[k];
    let lt = d.local_time[k];
    let le = d.local_energy[k];
    let zeta = d.tradeoff;
    let w = d.weights[k];
    // seconds per bit on each usable link, and energy slope relative to local
    let mut links: Vec<(f64, f64)> = (0..qn)
        .filter_map(|q| {
            let a = d.tx_time[(q, k)]?;
            (cpu[q] > 0.0).then(|| (a + c / cpu[q], d.edge_energy[(q, k)] - le))
        })
        .collect();
    links.sort_by(|a, b| a.1.total_cmp(&b.1));
    let energy_at = |dl: f64| -> Option<f64> {
        let need = (lk - dl / lt).max(0.0);
        let cap_total: f64 = links.iter().map(|(t, _)| (dl / t).min(lk)).sum();
        if cap_total < need * (1.0 - 1e-12) {
            return None;
        }
        let mut sent = 0.0;
        let mut e = le * lk;
        for &(t, slope) in &links {
            let cap = (dl / t).min(lk);
            let take = if slope < 0.0 {
                cap.min((lk - sent).max(0.0))
            } else {
                cap.min((need - sent).max(0.0))
            };
            sent += take;
            e += slope * take;
        }
        Some(e)
    };
    let eval = |dl: f64| energy_at(dl).map_or(f64::INFINITY, |e| w * (e + zeta * dl));
    let d_local = lk * lt;
    let d_hi = links.iter().map(|(t, _)| lk * t).fold(d_local, f64::max);
    // smallest feasible D by bisection
    let mut lo = 0.0;
    let mut hi = d_local;
    if energy_at(0.0).is_some() {
        hi = 0.0;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-14 * d_local.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if energy_at(mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (_, v) = golden_min(hi, d_hi, 1e-13, eval);
    [eval(hi), eval(d_hi), v].into_iter().fold(f64::INFINITY, f64::min)
}

/// Golden-section search on `[a, b]`; returns the best probe.
fn golden_min(mut a: f64, mut b: f64, rel_tol: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a <= rel_tol * b.abs().max(1.0) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn cpu_column(edge_cpu: &PerLink<f64>, k: usize) -> Vec<f64> {
    (0..edge_cpu.num_cells()).map(|q| edge_cpu[(q, k)]).collect()
}

/// Local search over the CPU split. For a fixed split users decouple and each
/// one is solved exactly, so the search only moves CPU between pairs of users
/// on one server (exact line search per pair) until no move helps. The
/// offloading split is then recovered by LP.
pub fn local_cpu_search(model: &QcpModel, start: &PerLink<f64>) -> Result<HeuristicPoint, MecError> {
    let (qn, kn) = (model.num_cells, model.num_users);
    let d = &model.data;
    let mut f = fill_capacity(model, start);
    let mut costs: Vec<f64> = (0..kn).map(|k| user_cost(d, k, &cpu_column(&f, k))).collect();
    if model.has_latency && kn > 1 {
        for _sweep in 0..60 {
            let before: f64 = costs.iter().sum();
            for q in 0..qn {
                for i in 0..kn {
                    for j in i + 1..kn {
                        let pool = f[(q, i)] + f[(q, j)];
                        if pool <= 0.0 {
                            continue;
                        }
                        let (mut ci, mut cj) = (cpu_column(&f, i), cpu_column(&f, j));
                        let mut pair = |s: f64| {
                            ci[q] = s * pool;
                            cj[q] = (1.0 - s) * pool;
                            user_cost(d, i, &ci) + user_cost(d, j, &cj)
                        };
                        let (s, v) = golden_min(0.0, 1.0, 1e-10, &mut pair);
                        let ends = [(0.0, pair(0.0)), (1.0, pair(1.0))];
                        let (s, v) = ends.into_iter().fold((s, v), |b, e| if e.1 < b.1 { e } else { b });
                        if v < costs[i] + costs[j] - 1e-15 * v.abs() {
                            f[(q, i)] = s * pool;
                            f[(q, j)] = (1.0 - s) * pool;
                            costs[i] = user_cost(d, i, &cpu_column(&f, i));
                            costs[j] = user_cost(d, j, &cpu_column(&f, j));
                        }
                    }
                }
            }
            let after: f64 = costs.iter().sum();
            if before - after <= 1e-12 * after.abs().max(1.0) {
                break;
            }
        }
    }
    solve_fixed_cpu(model, &f)
}

/// Brute-force optimum over the CPU split (grid plus golden-section polish),
/// with the offloading split solved exactly for each CPU split. Supports at
/// most two cells and two users.
pub fn oracle_grid(params: &SystemParams, rates: &PerLink<f64>, grid_points: usize) -> Result<f64, MecError> {
    let (qn, kn) = (params.num_cells, params.num_users);
    if qn > 2 || kn > 2 {
        return Err(MecError::TooLarge {
            num_cells: qn,
            num_users: kn,
        });
    }
    for ((q, k), &r) in rates.indexed() {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(MecError::InvalidRates { q, k, rate: r });
        }
    }
    let model = build_qcp(params, rates)?;
    // more CPU never hurts, so every server is fully allocated: one share per server
    let cost = |t: &[f64]| -> f64 {
        (0..kn)
            .map(|k| {
                let cpu: Vec<f64> = (0..qn)
                    .map(|q| {
                        let share = if kn == 1 {
                            1.0
                        } else if k == 0 {
                            t[q]
                        } else {
                            1.0 - t[q]
                        };
                        params.edge_cpu_total[q] * share
                    })
                    .collect();
                user_cost(&model.data, k, &cpu)
            })
            .sum()
    };
    if kn == 1 {
        return Ok(cost(&vec![1.0; qn]));
    }
    let g = grid_points.max(2);
    let step = 1.0 / (g - 1) as f64;
    let mut best_t = vec![0.0; qn];
    let mut best = f64::INFINITY;
    let mut t = vec![0.0; qn];
    let total = g.pow(qn as u32);
    for idx in 0..total {
        let mut r = idx;
        for tq in t.iter_mut() {
            *tq = (r % g) as f64 * step;
            r /= g;
        }
        let v = cost(&t);
        if v < best {
            best = v;
            best_t.clone_from(&t);
        }
    }
    // coordinate-wise golden section inside the neighbouring cells
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..4 {
        for q in 0..qn {
            let mut a = (best_t[q] - step).max(0.0);
            let mut b = (best_t[q] + step).min(1.0);
            let mut probe = best_t.clone();
            let mut at = |x: f64| {
                probe[q] = x;
                cost(&probe)
            };
            let mut x1 = b - gr * (b - a);
            let mut x2 = a + gr * (b - a);
            let (mut f1, mut f2) = (at(x1), at(x2));
            for _ in 0..60 {
                if f1 <= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - gr * (b - a);
                    f1 = at(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + gr * (b - a);
                    f2 = at(x2);
                }
            }
            let (x, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
            if v < best {
                best = v;
                best_t[q] = x;
            }
        }
    }
    Ok(best)
}
