//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `ACCEPTANCE_ONLY=2,5` restricts the run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use irsmec::bcd::{self, BcdConfig, SolverTrace};
use irsmec::benchmarks;
use irsmec::experiment::{run_sweep_for, Algorithm, ExperimentConfig, RunRecord, Scenario, SolverSettings, Sweep, SweepVariable};
use irsmec::irs::{self, Block, FpState, LinkWeights};
use irsmec::linalg::{self, apply_norm_sq, dot_h, vec_norm_sq};
use irsmec::lp::{solve_lp, LinearProgram, LpStatus};
use irsmec::mec::{self, BnbConfig};
use irsmec::metrics::{self, Beam};
use irsmec::scenario::{ChannelSet, FadingModel, SystemParams, UserDisk};
use irsmec::{CMat64, PerLink};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn reference_config(num_users: usize, irs_elements: usize, seeds: std::ops::Range<u64>) -> ExperimentConfig {
    ExperimentConfig {
        scenario: Scenario {
            params: SystemParams::reference(num_users, irs_elements),
            fading: FadingModel::default(),
            user_disk: Some(UserDisk::default()),
        },
        algo: Algorithm::BcdFpDc,
        outer_iters: 60,
        outer_tol: 1e-4,
        seeds: seeds.collect(),
        sweep: None,
        output_dir: "unused".into(),
        solver: SolverSettings::default(),
        record_wallclock: false,
    }
}

fn traces(runs: &[RunRecord]) -> Result<Vec<&SolverTrace>, String> {
    runs.iter()
        .map(|r| r.result.as_ref().map_err(|e| format!("{} failed: {e}", r.run_id())))
        .collect()
}

/// Per-cell (mean cost, mean energy, mean latency), failing on any failed run.
fn cell_means(runs: &[RunRecord]) -> Result<BTreeMap<usize, (f64, f64, f64)>, String> {
    traces(runs)?;
    let mut cells: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        cells.entry(r.cell.map_or(0, |c| c.1)).or_default().push(r);
    }
    Ok(cells
        .into_iter()
        .map(|(v, rs)| {
            let cost: Vec<f64> = rs.iter().filter_map(|r| r.final_cost()).collect();
            let e: Vec<f64> = rs.iter().map(|r| r.energy).collect();
            let l: Vec<f64> = rs.iter().map(|r| r.latency).collect();
            (v, (mean(&cost), mean(&e), mean(&l)))
        })
        .collect())
}

fn fmt_means(m: &BTreeMap<usize, (f64, f64, f64)>, pick: impl Fn(&(f64, f64, f64)) -> f64) -> String {
    m.iter().map(|(v, t)| format!("{v}:{:.4}", pick(t))).collect::<Vec<_>>().join(" ")
}

fn monotone(m: &BTreeMap<usize, (f64, f64, f64)>, pick: impl Fn(&(f64, f64, f64)) -> f64, ok: impl Fn(f64, f64) -> bool) -> bool {
    let v: Vec<f64> = m.values().map(pick).collect();
    v.windows(2).all(|w| ok(w[0], w[1]))
}

// ---------------------------------------------------------------- 1

fn bcd_convergence() -> Verdict {
    let started = Instant::now();
    let cfg = reference_config(3, 64, 0..20);
    let runs = run_sweep_for(&cfg, &[Algorithm::BcdFpDc]).runs;
    let ts = match traces(&runs) {
        Ok(t) => t,
        Err(e) => return verdict(false, e),
    };
    let worst = ts.iter().map(|t| t.worst_increase()).fold(0.0, f64::max);
    let within = ts.iter().filter(|t| t.iterations_to(1e-4).is_some_and(|i| i <= 40)).count();
    let iters: Vec<usize> = ts.iter().map(|t| t.rows.len()).collect();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-8 && within * 10 >= ts.len() * 9 && secs <= 600.0,
        format!("largest cost increase {worst:.2e}; {within}/{} seeds settle within 40 iterations; iterations {iters:?}", ts.len()),
    )
}

// ---------------------------------------------------------------- 2

fn algorithm_ordering() -> Verdict {
    let cfg = reference_config(3, 64, 0..10);
    let runs = run_sweep_for(&cfg, &Algorithm::ALL).runs;
    if let Err(e) = traces(&runs) {
        return verdict(false, e);
    }
    let cost = |a: Algorithm| -> Vec<f64> {
        let mut v: Vec<(u64, f64)> = runs.iter().filter(|r| r.algo == a).map(|r| (r.seed, r.final_cost().unwrap())).collect();
        v.sort_by_key(|x| x.0);
        v.into_iter().map(|x| x.1).collect()
    };
    use Algorithm::*;
    let mut pairs = vec![(BcdFpDc, BcdMse), (BcdFpDc, BcdSa), (BcdFpDc, Sa)];
    for a in [BcdFpDc, BcdMse, BcdSa, Sa] {
        pairs.push((a, RandPhase));
    }
    pairs.push((RandPhase, NoIrs));
    let mut failed = Vec::new();
    for (a, b) in pairs {
        let (ca, cb) = (cost(a), cost(b));
        let bad: Vec<f64> = ca.iter().zip(&cb).filter(|(x, y)| x > y).map(|(x, y)| (x - y) / y).collect();
        let worst = bad.iter().copied().fold(0.0, f64::max);
        if mean(&ca) > mean(&cb) || bad.len() > 2 || worst > 0.01 {
            failed.push(format!("{a}≤{b} (means {:.4}/{:.4}, {} seed violations, worst {:.1}%)", mean(&ca), mean(&cb), bad.len(), 100.0 * worst));
        }
    }
    let means: Vec<String> = Algorithm::ALL.iter().map(|&a| format!("{a} {:.4}", mean(&cost(a)))).collect();
    let detail = format!("means: {}", means.join(", "));
    if failed.is_empty() {
        verdict(true, detail)
    } else {
        verdict(false, format!("{detail}; violated: {}", failed.join("; ")))
    }
}

// ---------------------------------------------------------------- 3, 4, 6

fn sweep(var: SweepVariable, values: Vec<usize>) -> Result<BTreeMap<usize, (f64, f64, f64)>, String> {
    let mut cfg = reference_config(3, 64, 0..10);
    cfg.sweep = Some(Sweep { variable: var, values });
    cell_means(&run_sweep_for(&cfg, &[Algorithm::BcdFpDc]).runs)
}

fn irs_trend(m: &BTreeMap<usize, (f64, f64, f64)>) -> Verdict {
    verdict(monotone(m, |t| t.0, |a, b| b <= a), format!("mean cost by N: {}", fmt_means(m, |t| t.0)))
}

fn user_trend(m: &BTreeMap<usize, (f64, f64, f64)>) -> Verdict {
    verdict(monotone(m, |t| t.0, |a, b| b > a), format!("mean cost by K: {}", fmt_means(m, |t| t.0)))
}

fn component_trends(by_n: &BTreeMap<usize, (f64, f64, f64)>, by_k: &BTreeMap<usize, (f64, f64, f64)>) -> Verdict {
    let checks = [
        ("energy vs N", monotone(by_n, |t| t.1, |a, b| b <= a)),
        ("latency vs N", monotone(by_n, |t| t.2, |a, b| b <= a)),
        ("energy vs K", monotone(by_k, |t| t.1, |a, b| b >= a)),
        ("latency vs K", monotone(by_k, |t| t.2, |a, b| b >= a)),
    ];
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = format!(
        "energy by N {}; latency by N {}; energy by K {}; latency by K {}",
        fmt_means(by_n, |t| t.1),
        fmt_means(by_n, |t| t.2),
        fmt_means(by_k, |t| t.1),
        fmt_means(by_k, |t| t.2)
    );
    if bad.is_empty() {
        verdict(true, detail)
    } else {
        verdict(false, format!("{detail}; not monotone: {}", bad.join(", ")))
    }
}

// ---------------------------------------------------------------- 5

fn convergence_speed() -> Verdict {
    let mut cfg = reference_config(3, 64, 0..10);
    cfg.scenario.params.noise_var = 3.16e-9;
    cfg.sweep = Some(Sweep {
        variable: SweepVariable::IrsElements,
        values: vec![16, 64],
    });
    let runs = run_sweep_for(&cfg, &[Algorithm::BcdFpDc]).runs;
    if let Err(e) = traces(&runs) {
        return verdict(false, e);
    }
    let iters = |n: usize| -> Vec<f64> {
        runs.iter()
            .filter(|r| r.cell.map(|c| c.1) == Some(n))
            .map(|r| {
                let t = r.result.as_ref().unwrap();
                t.iterations_to(1e-3).unwrap_or(cfg.outer_iters + 1) as f64
            })
            .collect()
    };
    let (m16, m64) = (median(&iters(16)), median(&iters(64)));
    verdict(m64 >= m16, format!("median iterations to 1e-3: N=16 {m16} ({:?}), N=64 {m64} ({:?})", iters(16), iters(64)))
}

// ---------------------------------------------------------------- 7

fn analytic_instance() -> SystemParams {
    let mut p = SystemParams::reference(1, 0);
    p.num_cells = 1;
    p.bs_positions.truncate(1);
    p.edge_cpu_total = vec![100.0];
    p.edge_energy_per_cycle = vec![0.0001];
    p.tx_power = vec![vec![0.1]];
    p.task_bits = vec![1000.0];
    p.cycles_per_bit = vec![1.0];
    p.local_cpu = vec![1.0];
    p.local_energy_per_cycle = vec![0.001];
    p.bandwidth = 1000.0;
    p
}

fn mec_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    // certify to 0.1%: well inside the 0.5% tolerance, and the default 0.01%
    // spends minutes closing McCormick bounds on an already-optimal incumbent
    let cfg = BnbConfig {
        rel_gap: 1e-3,
        ..BnbConfig::default()
    };
    let started = Instant::now();
    let mut bnb_secs = 0.0;
    for i in 0..50 {
        let qn = rng.random_range(1..=2);
        let kn = rng.random_range(1..=2);
        let mut p = SystemParams::reference(kn, 0);
        p.num_cells = qn;
        p.bs_positions.truncate(qn);
        p.edge_cpu_total = (0..qn).map(|_| rng.random_range(20.0..200.0)).collect();
        p.edge_energy_per_cycle = (0..qn).map(|_| rng.random_range(0.0005..0.005)).collect();
        p.tx_power = (0..qn).map(|_| (0..kn).map(|_| rng.random_range(0.05..0.2)).collect()).collect();
        p.cycles_per_bit = (0..kn).map(|_| rng.random_range(0.05..0.2)).collect();
        p.local_cpu = (0..kn).map(|_| rng.random_range(5.0..20.0)).collect();
        p.local_energy_per_cycle = (0..kn).map(|_| rng.random_range(0.005..0.02)).collect();
        p.user_weights = (0..kn).map(|_| rng.random_range(0.5..1.5)).collect();
        let rates = PerLink::from_fn(qn, kn, |_, _| rng.random_range(0.05..3.0));
        let model = match mec::build_qcp(&p, &rates) {
            Ok(m) => m,
            Err(e) => return verdict(false, format!("instance {i}: {e}")),
        };
        let tb = Instant::now();
        let sol = match mec::spatial_bnb(&model, cfg.rel_gap, cfg.node_budget) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("instance {i}: {e}")),
        };
        bnb_secs += tb.elapsed().as_secs_f64();
        let oracle = mec::oracle_grid(&p, &rates, 200).expect("small instance");
        worst = worst.max((sol.objective - oracle).abs() / oracle);
    }
    let p = analytic_instance();
    let model = mec::build_qcp(&p, &PerLink::filled(1, 1, 1.0)).unwrap();
    let analytic = mec::spatial_bnb(&model, cfg.rel_gap, cfg.node_budget).map(|s| s.objective).unwrap_or(f64::NAN);
    let analytic_err = (analytic - 11.0889).abs() / 11.0889;
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst <= 0.005 && analytic_err <= 1e-3 && secs <= 120.0,
        format!("worst deviation from grid oracle {:.3}% over 50 instances ({bnb_secs:.1}s in branch-and-bound); balance instance {analytic:.5}", 100.0 * worst),
    )
}

// ---------------------------------------------------------------- 8

fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn in_ball(rng: &mut ChaCha8Rng, n: usize) -> Beam {
    let v: Beam = (0..n).map(|_| cgauss(rng)).collect();
    let norm = vec_norm_sq(&v).sqrt();
    let r = rng.random_range(0.2..1.0);
    v.iter().map(|z| z * (r / norm)).collect()
}

struct FpInstance {
    ch: ChannelSet,
    refl: Vec<Complex64>,
    beams: PerLink<Beam>,
    state: FpState,
}

fn fp_instance(rng: &mut ChaCha8Rng) -> FpInstance {
    let (qn, kn, nb, nu, m) = (2, 2, 3, 2, 4);
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
    let state = irs::fp_state(&weights, &hbar, &beams, 1.0);
    FpInstance { ch, refl, beams, state }
}

/// The convex norm term `Σ 2ρ√α*‖H̄F‖`.
fn norm_term(state: &FpState, ch: &ChannelSet, refl: &[Complex64], beams: &PerLink<Beam>) -> f64 {
    let hbar = metrics::effective_channel_with(ch, refl).unwrap();
    state
        .rho
        .indexed()
        .map(|((q, k), &r)| 2.0 * r * state.alpha_star[(q, k)].sqrt() * apply_norm_sq(&hbar[(q, k)], &beams[(q, k)]).sqrt())
        .sum()
}

fn fp_mm_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut notes = Vec::new();

    // rank-one log-det identity
    let mut worst_ld: f64 = 0.0;
    for _ in 0..100 {
        let inst = fp_instance(&mut rng);
        let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
        let (q, k) = (rng.random_range(0..2), rng.random_range(0..2));
        let j = metrics::interference_cov(&hbar, &inst.beams, 0.5, q, k).unwrap();
        let r = metrics::rate_logdet(&hbar[(q, k)], &inst.beams[(q, k)], &j).unwrap();
        let s = hbar[(q, k)].mul_vec(&inst.beams[(q, k)]);
        let jinv_s = linalg::solve_hpd(&j, &CMat64::column(&s)).unwrap().into_vec();
        let closed = dot_h(&s, &jinv_s).re.ln_1p();
        worst_ld = worst_ld.max((r - closed).abs());
    }
    notes.push(format!("log-det identity error {worst_ld:.1e}"));

    // gradient of the norm term against central differences
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let inst = fp_instance(&mut rng);
        for block in [Block::Phases, Block::Beams] {
            let g = irs::grad_h(block, &inst.state, &inst.ch, &inst.refl, &inst.beams).unwrap();
            let x0: Vec<Complex64> = match block {
                Block::Phases => inst.refl.clone(),
                Block::Beams => inst.beams.iter().flat_map(|b| b.iter().copied()).collect(),
            };
            let d: Vec<Complex64> = (0..x0.len()).map(|_| cgauss(&mut rng)).collect();
            let at = |t: f64| {
                let x: Vec<Complex64> = x0.iter().zip(&d).map(|(a, b)| a + b * t).collect();
                match block {
                    Block::Phases => norm_term(&inst.state, &inst.ch, &x, &inst.beams),
                    Block::Beams => {
                        let n = inst.beams[(0, 0)].len();
                        let beams = PerLink::from_fn(2, 2, |q, k| {
                            let i = (q * 2 + k) * n;
                            x[i..i + n].to_vec()
                        });
                        norm_term(&inst.state, &inst.ch, &inst.refl, &beams)
                    }
                }
            };
            let h = 1e-6;
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let an = dot_h(&g, &d).re;
            let scale = (vec_norm_sq(&g) * vec_norm_sq(&d)).sqrt().max(1e-300);
            worst_grad = worst_grad.max((fd - an).abs() / scale);
        }
    }
    notes.push(format!("gradient relative error {worst_grad:.1e}"));

    // MM ascent of the transformed objective at fixed auxiliaries
    let mut worst_drop: f64 = 0.0;
    for _ in 0..50 {
        let mut inst = fp_instance(&mut rng);
        let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
        let mut obj = irs::fp_objective(&inst.state, &hbar, &inst.beams, 1.0);
        for step in 0..6 {
            let block = if step % 2 == 0 { Block::Phases } else { Block::Beams };
            let x = irs::mm_step(block, &inst.state, &inst.ch, &inst.refl, &inst.beams).unwrap();
            match block {
                Block::Phases => inst.refl = x,
                Block::Beams => {
                    let n = inst.beams[(0, 0)].len();
                    inst.beams = PerLink::from_fn(2, 2, |q, k| {
                        let i = (q * 2 + k) * n;
                        x[i..i + n].to_vec()
                    });
                }
            }
            let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
            let next = irs::fp_objective(&inst.state, &hbar, &inst.beams, 1.0);
            worst_drop = worst_drop.max(obj - next);
            obj = next;
        }
    }
    notes.push(format!("largest MM decrease {worst_drop:.1e}"));

    // ρ from the closed form is a maximizer
    let mut rho_ok = 0;
    for _ in 0..100 {
        let inst = fp_instance(&mut rng);
        let hbar = metrics::effective_channel_with(&inst.ch, &inst.refl).unwrap();
        let base = irs::fp_objective(&inst.state, &hbar, &inst.beams, 1.0);
        let stationary = (0..4).all(|i| {
            [-1e-4, 1e-4].iter().all(|d| {
                let mut s = inst.state.clone();
                s.rho.as_mut_slice()[i] += d;
                irs::fp_objective(&s, &hbar, &inst.beams, 1.0) <= base + 1e-12
            })
        });
        rho_ok += usize::from(stationary);
    }
    notes.push(format!("ρ stationary on {rho_ok}/100"));

    verdict(
        worst_ld <= 1e-9 && worst_grad <= 1e-5 && worst_drop <= 1e-8 && rho_ok == 100,
        notes.join("; "),
    )
}

// ---------------------------------------------------------------- 9

/// Minimum over all basic points: every choice of 5 active constraints
/// among the rows and bounds, solved by elimination and kept if feasible.
fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut cons: Vec<(Vec<f64>, f64)> = (0..lp.num_rows()).map(|i| (lp.row(i).to_vec(), lp.b[i])).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cons.push((e.clone(), lp.ub[j]));
        e[j] = -1.0;
        cons.push((e, -lp.lb[j]));
    }
    let m = cons.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut a: Vec<Vec<f64>> = idx.iter().map(|&i| {
            let mut row = cons[i].0.clone();
            row.push(cons[i].1);
            row
        }).collect();
        let mut singular = false;
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            if a[piv][col].abs() < 1e-10 {
                singular = true;
                break;
            }
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for cc in col..=n {
                        a[r][cc] -= f * a[col][cc];
                    }
                }
            }
        }
        if !singular {
            let x: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
            let feasible = cons.iter().all(|(row, b)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9 * (1.0 + b.abs()));
            if feasible {
                let v: f64 = lp.c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        // next combination
        let mut i = n;
        while i > 0 && idx[i - 1] == m - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn lp_core() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for i in 0..200 {
        let n = 5;
        let lb: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
        let ub: Vec<f64> = lb.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
        let mut lp = LinearProgram::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), lb.clone(), ub.clone());
        let x0: Vec<f64> = lb.iter().zip(&ub).map(|(l, u)| rng.random_range(*l..*u)).collect();
        for _ in 0..8 {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rhs = row.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>() + rng.random_range(0.0..0.5);
            let terms: Vec<(usize, f64)> = row.into_iter().enumerate().collect();
            lp.push_row(&terms, rhs);
        }
        let sol = match solve_lp(&lp) {
            Ok(s) if s.status == LpStatus::Optimal => s,
            other => return verdict(false, format!("LP {i}: {other:?}")),
        };
        let again = solve_lp(&lp).unwrap();
        if again.x != sol.x || again.objective_value.to_bits() != sol.objective_value.to_bits() {
            mismatched += 1;
        }
        let oracle = vertex_oracle(&lp).expect("feasible by construction");
        worst = worst.max((sol.objective_value - oracle).abs());
    }
    verdict(
        worst <= 1e-7 && mismatched == 0,
        format!("worst gap to vertex enumeration {worst:.1e} over 200 LPs; {mismatched} non-repeatable solves"),
    )
}

// ---------------------------------------------------------------- 10

fn single_link_closed_form() -> Verdict {
    let p = SystemParams::single_link();
    let ch = ChannelSet::single_link(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0));
    let cfg = BcdConfig::default();
    let mut notes = Vec::new();
    let mut ok = true;
    let target = 5f64.ln();
    for (name, out) in [
        ("bcd-fp-dc", bcd::run_bcd_fp_dc(&p, &ch, &cfg, 0)),
        ("bcd-mse", benchmarks::bcd_mse_solve(&p, &ch, &cfg, 0)),
    ] {
        match out {
            Ok(o) => {
                let r = o.breakdown.rates[(0, 0)];
                let th = o.decision.phases[0];
                ok &= (r - target).abs() <= 1e-3;
                notes.push(format!("{name} rate {r:.6} (θ {:.4})", th.min(2.0 * PI - th)));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{name} failed: {e}"));
            }
        }
    }
    verdict(ok, format!("target ln 5 = {target:.6}; {}", notes.join(", ")))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |i: usize| only.as_ref().is_none_or(|v| v.contains(&i));

    let mut results: Vec<(usize, &str, Verdict, f64)> = Vec::new();
    let mut record = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if wanted(id) {
            let t = Instant::now();
            let v = f();
            let secs = t.elapsed().as_secs_f64();
            println!("criterion {id:>2} {name}: {} ({secs:.1}s) — {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            results.push((id, name, v, secs));
        }
    };

    record(1, "BCD convergence", &mut bcd_convergence);
    record(2, "algorithm ordering", &mut algorithm_ordering);

    let need_sweeps = wanted(3) || wanted(4) || wanted(6);
    let (by_n, by_k) = if need_sweeps {
        let t = Instant::now();
        let by_n = sweep(SweepVariable::IrsElements, vec![4, 16, 36, 64]);
        let by_k = sweep(SweepVariable::NumUsers, vec![1, 2, 3, 4]);
        println!("(sweeps for criteria 3, 4, 6 took {:.1}s)", t.elapsed().as_secs_f64());
        (Some(by_n), Some(by_k))
    } else {
        (None, None)
    };
    let failed_sweep = |e: &String| verdict(false, e.clone());
    record(3, "IRS-element trend", &mut || match by_n.as_ref().unwrap() {
        Ok(m) => irs_trend(m),
        Err(e) => failed_sweep(e),
    });
    record(4, "user-count trend", &mut || match by_k.as_ref().unwrap() {
        Ok(m) => user_trend(m),
        Err(e) => failed_sweep(e),
    });
    record(5, "convergence-speed trend", &mut convergence_speed);
    record(6, "energy and latency trends", &mut || match (by_n.as_ref().unwrap(), by_k.as_ref().unwrap()) {
        (Ok(n), Ok(k)) => component_trends(n, k),
        (Err(e), _) | (_, Err(e)) => failed_sweep(e),
    });
    record(7, "offloading solver correctness", &mut mec_correctness);
    record(8, "FP/MM micro-properties", &mut fp_mm_properties);
    record(9, "LP core", &mut lp_core);
    record(10, "single-link closed form", &mut single_link_closed_form);

    let total: f64 = results.iter().map(|r| r.3).sum();
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {total:.1}s{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
