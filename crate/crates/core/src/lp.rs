//! Dense bounded-variable primal simplex.
//!
//! Small problems only (a few hundred columns at most). Variables are shifted
//! and scaled onto `[0, 1]`, rows are equilibrated, and the final basis is
//! re-solved from the unscaled-by-pivoting data so the reported point does not
//! carry the tableau's accumulated rounding.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("simplex did not terminate within {pivots} pivots")]
    NumericalFailure { pivots: usize },
}

/// `min cᵀx  s.t.  A x ≤ b,  lb ≤ x ≤ ub`. `a` is row-major, `b.len()` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
}

impl LinearProgram {
    pub fn new(c: Vec<f64>, lb: Vec<f64>, ub: Vec<f64>) -> Self {
        Self {
            c,
            a: Vec::new(),
            b: Vec::new(),
            lb,
            ub,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Append `Σ coef·x[idx] ≤ rhs` given as sparse `(idx, coef)` pairs.
    pub fn push_row(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let n = self.num_vars();
        let start = self.a.len();
        self.a.resize(start + n, 0.0);
        for &(j, v) in terms {
            self.a[start + j] += v;
        }
        self.b.push(rhs);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.num_vars();
        &self.a[i * n..(i + 1) * n]
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lb.len() != n || self.ub.len() != n {
            return Err(LpError::InvalidProgram(format!(
                "bounds have length {}/{} for {} variables",
                self.lb.len(),
                self.ub.len(),
                n
            )));
        }
        if self.a.len() != n * self.b.len() {
            return Err(LpError::InvalidProgram(format!(
                "constraint matrix has {} entries, expected {}×{}",
                self.a.len(),
                self.b.len(),
                n
            )));
        }
        for j in 0..n {
            if !self.lb[j].is_finite() || !self.ub[j].is_finite() {
                return Err(LpError::InvalidProgram(format!("variable {j} has a non-finite bound")));
            }
            if self.lb[j] > self.ub[j] {
                return Err(LpError::InvalidProgram(format!(
                    "variable {j}: lower bound {} above upper bound {}",
                    self.lb[j], self.ub[j]
                )));
            }
        }
        if self.c.iter().chain(&self.a).chain(&self.b).any(|v| !v.is_finite()) {
            return Err(LpError::InvalidProgram("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Largest violation of `A x ≤ b`, each row measured relative to `1 + |b_i|`.
    pub fn max_row_violation(&self, x: &[f64]) -> f64 {
        (0..self.num_rows())
            .map(|i| {
                let lhs: f64 = self.row(i).iter().zip(x).map(|(a, x)| a * x).sum();
                (lhs - self.b[i]) / (1.0 + self.b[i].abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    pivots: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.ub[j]
        } else {
            0.0
        }
    }

    fn refresh_reduced_costs(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.width..(i + 1) * self.width];
                for (dj, tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for i in 0..self.m {
            d[self.basis[i]] = 0.0;
        }
        self.reduced = d;
    }

    fn choose_entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.width {
            if self.is_basic[j] || self.ub[j] <= 0.0 {
                continue;
            }
            let d = self.reduced[j];
            let gain = if self.at_upper[j] { d } else { -d };
            if gain <= OPT_TOL {
                continue;
            }
            if bland {
                return Some(j);
            }
            match best {
                Some((_, g)) if gain <= g => {}
                _ => best = Some((j, gain)),
            }
        }
        best.map(|(j, _)| j)
    }

    /// Returns `(step, leaving row or None for a bound flip)`.
    fn ratio_test(&self, j: usize, dir: f64) -> Option<(f64, Option<usize>)> {
        let mut step = self.ub[j];
        let mut leave: Option<usize> = None;
        let mut leave_pivot = 0.0;
        let mut bounded = step.is_finite();
        for i in 0..self.m {
            let alpha = dir * self.at(i, j);
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let bi = self.basis[i];
            // basic value moves by −alpha·t
            let limit = if alpha > 0.0 {
                (self.beta[i].max(0.0)) / alpha
            } else {
                let u = self.ub[bi];
                if !u.is_finite() {
                    continue;
                }
                ((u - self.beta[i]).max(0.0)) / -alpha
            };
            let better = if !bounded || limit < step - 1e-12 {
                true
            } else if limit <= step + 1e-12 {
                match leave {
                    // prefer the larger pivot among near-ties, then lower variable index
                    Some(r) => {
                        let a = alpha.abs();
                        a > leave_pivot * (1.0 + 1e-9)
                            || (a >= leave_pivot * (1.0 - 1e-9) && bi < self.basis[r])
                    }
                    None => false,
                }
            } else {
                false
            };
            if better {
                step = limit;
                leave = Some(i);
                leave_pivot = alpha.abs();
                bounded = true;
            }
        }
        if bounded {
            Some((step, leave))
        } else {
            None
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let p = self.t[r * w + j];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + j];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[j] = 0.0;
            }
        }
        let f = self.reduced[j];
        if f != 0.0 {
            for (v, pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.reduced[j] = 0.0;
        let old = self.basis[r];
        self.is_basic[old] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    fn run(&mut self, max_pivots: usize) -> Result<Phase, LpError> {
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_STREAK;
            let Some(j) = self.choose_entering(bland) else {
                return Ok(Phase::Optimal);
            };
            if self.pivots >= max_pivots {
                return Err(LpError::NumericalFailure { pivots: self.pivots });
            }
            self.pivots += 1;
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
            let Some((step, leave)) = self.ratio_test(j, dir) else {
                return Ok(Phase::Unbounded);
            };
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..self.m {
                let a = self.at(i, j);
                if a != 0.0 {
                    self.beta[i] -= dir * step * a;
                }
            }
            let entering_value = self.nonbasic_value(j) + dir * step;
            match leave {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some(r) => {
                    let out = self.basis[r];
                    let to_upper = dir * self.at(r, j) < 0.0;
                    self.pivot(r, j);
                    self.at_upper[out] = to_upper && self.ub[out].is_finite();
                    self.at_upper[j] = false;
                    self.beta[r] = entering_value;
                }
            }
        }
    }
}

/// Solve a small dense real system by Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<f64>, mut rhs: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-14 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            rhs.swap(piv, col);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for k in r + 1..n {
            s -= a[r * n + k] * x[k];
        }
        x[r] = s / a[r * n + r];
    }
    Some(x)
}

/// Solve `lp` to optimality (or certify infeasibility).
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.num_vars();
    let m = lp.num_rows();

    // x_j = lb_j + range_j · y_j with y_j ∈ [0, 1]; fixed variables drop out.
    let range: Vec<f64> = (0..n).map(|j| lp.ub[j] - lp.lb[j]).collect();
    let free: Vec<usize> = (0..n).filter(|&j| range[j] > 0.0).collect();
    let nf = free.len();

    let mut rows = vec![0.0; m * nf];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let a = lp.row(i);
        let mut r = lp.b[i] - a.iter().zip(&lp.lb).map(|(a, l)| a * l).sum::<f64>();
        let mut scale: f64 = 0.0;
        for (c, &j) in free.iter().enumerate() {
            let v = a[j] * range[j];
            rows[i * nf + c] = v;
            scale = scale.max(v.abs());
        }
        if scale == 0.0 {
            if r < -FEAS_TOL * (1.0 + lp.b[i].abs()) {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: lp.lb.clone(),
                    objective_value: f64::NAN,
                });
            }
            scale = 1.0;
            r = r.max(0.0);
        }
        for v in &mut rows[i * nf..(i + 1) * nf] {
            *v /= scale;
        }
        rhs[i] = r / scale;
    }
    let cost_scale = free
        .iter()
        .map(|&j| (lp.c[j] * range[j]).abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let cost: Vec<f64> = free.iter().map(|&j| lp.c[j] * range[j] / cost_scale).collect();

    // Columns: y (nf) | slacks (m) | artificials (one per negative-rhs row).
    let negative: Vec<usize> = (0..m).filter(|&i| rhs[i] < 0.0).collect();
    let na = negative.len();
    let width = nf + m + na;
    let mut t = vec![0.0; m * width];
    let mut basis = vec![0; m];
    let mut beta = vec![0.0; m];
    for i in 0..m {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..nf {
            t[i * width + c] = sign * rows[i * nf + c];
        }
        t[i * width + nf + i] = sign;
        beta[i] = sign * rhs[i];
    }
    for (a, &i) in negative.iter().enumerate() {
        t[i * width + nf + m + a] = 1.0;
        basis[i] = nf + m + a;
    }
    for i in 0..m {
        if rhs[i] >= 0.0 {
            basis[i] = nf + i;
        }
    }
    let mut ub = vec![1.0; nf];
    ub.extend(std::iter::repeat_n(f64::INFINITY, m + na));
    let mut is_basic = vec![false; width];
    for &b in &basis {
        is_basic[b] = true;
    }

    let max_pivots = 50 * (width + m) + 1000;
    let mut tab = Tableau {
        m,
        width,
        t,
        beta,
        basis,
        is_basic,
        at_upper: vec![false; width],
        ub,
        cost: vec![0.0; width],
        reduced: vec![0.0; width],
        pivots: 0,
    };

    if na > 0 {
        for a in 0..na {
            tab.cost[nf + m + a] = 1.0;
        }
        tab.refresh_reduced_costs();
        tab.run(max_pivots)?;
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= nf + m)
            .map(|i| tab.beta[i].max(0.0))
            .sum();
        if infeas > FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: lp.lb.clone(),
                objective_value: f64::NAN,
            });
        }
        for a in 0..na {
            let j = nf + m + a;
            tab.ub[j] = 0.0;
            tab.at_upper[j] = false;
        }
    }
    for (c, v) in cost.iter().enumerate() {
        tab.cost[c] = *v;
    }
    for a in 0..na {
        tab.cost[nf + m + a] = 0.0;
    }
    tab.refresh_reduced_costs();
    if let Phase::Unbounded = tab.run(max_pivots)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: lp.lb.clone(),
            objective_value: f64::NEG_INFINITY,
        });
    }

    // Re-solve the final basis against the equilibrated (pre-pivot) columns.
    let column = |j: usize, i: usize| -> f64 {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        if j < nf {
            sign * rows[i * nf + j]
        } else if j < nf + m {
            if j - nf == i {
                sign
            } else {
                0.0
            }
        } else if negative[j - nf - m] == i {
            1.0
        } else {
            0.0
        }
    };
    let mut values = vec![0.0; width];
    for j in 0..width {
        if !tab.is_basic[j] {
            values[j] = tab.nonbasic_value(j);
        }
    }
    let mut bmat = vec![0.0; m * m];
    let mut brhs = vec![0.0; m];
    for i in 0..m {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r = sign * rhs[i];
        for j in 0..width {
            if !tab.is_basic[j] && values[j] != 0.0 {
                r -= column(j, i) * values[j];
            }
        }
        brhs[i] = r;
        for (c, &bj) in tab.basis.iter().enumerate() {
            bmat[i * m + c] = column(bj, i);
        }
    }
    let basic_values = dense_solve(bmat, brhs, m).unwrap_or_else(|| tab.beta.clone());
    for (c, &bj) in tab.basis.iter().enumerate() {
        values[bj] = basic_values[c];
    }

    let mut x = lp.lb.clone();
    for (c, &j) in free.iter().enumerate() {
        let y = values[c].clamp(0.0, 1.0);
        x[j] = (lp.lb[j] + range[j] * y).clamp(lp.lb[j], lp.ub[j]);
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective(&x),
        x,
    })
}
