//! System constants and synthetic channel realizations.
//!
//! Channels follow a Rician model on top of distance-based path loss. Every
//! channel block draws from its own ChaCha stream keyed by the block identity,
//! so growing the IRS or adding users extends a realization instead of
//! reshuffling it. That keeps sweeps over `irs_elements` and `num_users`
//! paired across values.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::links::PerLink;
use crate::CMat64;

pub type Position = [f64; 3];

/// All scenario constants. Per-user vectors have length `num_users`,
/// per-BS vectors length `num_cells`, and `tx_power` is indexed `[q][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub num_cells: usize,
    pub num_users: usize,
    pub irs_elements: usize,
    pub bs_antennas: usize,
    pub user_antennas: usize,
    pub bs_positions: Vec<Position>,
    pub irs_position: Position,
    pub user_positions: Vec<Position>,
    /// Hz
    pub bandwidth: f64,
    /// Hz
    pub carrier_freq: f64,
    /// W
    pub noise_var: f64,
    /// bits
    pub task_bits: Vec<f64>,
    /// cycles/bit
    pub cycles_per_bit: Vec<f64>,
    /// cycles/s
    pub local_cpu: Vec<f64>,
    /// cycles/s, per BS
    pub edge_cpu_total: Vec<f64>,
    /// J/cycle, per user
    pub local_energy_per_cycle: Vec<f64>,
    /// J/cycle, per BS
    pub edge_energy_per_cycle: Vec<f64>,
    /// W, `[q][k]`
    pub tx_power: Vec<Vec<f64>>,
    /// J/s, weight of latency against energy
    pub tradeoff: f64,
    pub user_weights: Vec<f64>,
}

/// Centre and radius of the disk users are dropped into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserDisk {
    pub center: Position,
    pub radius: f64,
}

impl Default for UserDisk {
    fn default() -> Self {
        // midpoint of the two reference BS sites
        Self {
            center: [10.0, 0.0, 0.0],
            radius: 20.0,
        }
    }
}

impl SystemParams {
    /// Two-cell reference layout: BSs at (10,±100,0), IRS at (−10,0,1), 3×2
    /// antennas, 1 kHz, σ² = 3.16e−11 W, 100 cycles/s per server and 1000-bit
    /// tasks. The computation and energy constants are not given by the layout
    /// and are fixed here; users sit on the disk centre until placed.
    pub fn reference(num_users: usize, irs_elements: usize) -> Self {
        let q = 2;
        let disk = UserDisk::default();
        Self {
            num_cells: q,
            num_users,
            irs_elements,
            bs_antennas: 3,
            user_antennas: 2,
            bs_positions: vec![[10.0, -100.0, 0.0], [10.0, 100.0, 0.0]],
            irs_position: [-10.0, 0.0, 1.0],
            user_positions: vec![disk.center; num_users],
            bandwidth: 1.0e3,
            carrier_freq: 2.005e9,
            noise_var: 3.16e-11,
            task_bits: vec![1000.0; num_users],
            cycles_per_bit: vec![0.1; num_users],
            local_cpu: vec![10.0; num_users],
            edge_cpu_total: vec![100.0; q],
            local_energy_per_cycle: vec![0.01; num_users],
            edge_energy_per_cycle: vec![0.001; q],
            tx_power: vec![vec![0.1; num_users]; q],
            tradeoff: 1.0,
            user_weights: vec![1.0; num_users],
        }
    }

    /// Resizes every per-user field to `k` users. New users copy the last
    /// existing user's constants.
    pub fn with_num_users(&self, k: usize) -> Self {
        fn resize<T: Clone>(v: &[T], k: usize, fallback: T) -> Vec<T> {
            let fill = v.last().cloned().unwrap_or(fallback);
            let mut out: Vec<T> = v.iter().take(k).cloned().collect();
            out.resize(k, fill);
            out
        }
        let mut p = self.clone();
        p.num_users = k;
        p.user_positions = resize(&self.user_positions, k, UserDisk::default().center);
        p.task_bits = resize(&self.task_bits, k, 1000.0);
        p.cycles_per_bit = resize(&self.cycles_per_bit, k, 1.0);
        p.local_cpu = resize(&self.local_cpu, k, 1.0);
        p.local_energy_per_cycle = resize(&self.local_energy_per_cycle, k, 0.0);
        p.user_weights = resize(&self.user_weights, k, 1.0);
        p.tx_power = self.tx_power.iter().map(|row| resize(row, k, 0.1)).collect();
        p
    }

    pub fn with_irs_elements(&self, m: usize) -> Self {
        let mut p = self.clone();
        p.irs_elements = m;
        p
    }

    /// Overwrites user positions with a seeded draw from `disk`.
    pub fn with_users_placed(&self, disk: &UserDisk, seed: u64) -> Self {
        let mut p = self.clone();
        p.user_positions = place_users(disk, self.num_users, seed);
        p
    }

    /// One BS, one user, one IRS element, single antennas and unit noise;
    /// computing constants as in [`SystemParams::reference`]. Pairs with
    /// [`ChannelSet::single_link`].
    pub fn single_link() -> Self {
        let mut p = Self::reference(1, 1);
        p.num_cells = 1;
        p.bs_positions.truncate(1);
        p.bs_antennas = 1;
        p.user_antennas = 1;
        p.noise_var = 1.0;
        p.edge_cpu_total.truncate(1);
        p.edge_energy_per_cycle.truncate(1);
        p.tx_power.truncate(1);
        p
    }

    pub fn tx_power_at(&self, q: usize, k: usize) -> f64 {
        self.tx_power[q][k]
    }

    /// Cost of processing every task locally: `Σ ω_k (c E^d L + ζ L c / f^L)`.
    pub fn all_local_cost(&self) -> f64 {
        (0..self.num_users)
            .map(|k| {
                let lc = self.task_bits[k] * self.cycles_per_bit[k];
                self.user_weights[k]
                    * (lc * self.local_energy_per_cycle[k] + self.tradeoff * lc / self.local_cpu[k])
            })
            .sum()
    }

    pub fn wavelength(&self) -> f64 {
        299_792_458.0 / self.carrier_freq
    }
}

/// A violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamViolation {
    NoCells,
    NoUsers,
    NoAntennas,
    PositionCount { field: &'static str, expected: usize, got: usize },
    VectorLength { field: &'static str, expected: usize, got: usize },
    NonPositive { field: &'static str },
    TradeoffNegative,
    NonFinite { field: &'static str },
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoCells => write!(f, "num_cells must be at least 1"),
            Self::NoUsers => write!(f, "num_users must be at least 1"),
            Self::NoAntennas => write!(f, "antenna counts must be at least 1"),
            Self::PositionCount {
                field,
                expected,
                got,
            } => write!(f, "position count: {field} has {got}, expected {expected}"),
            Self::VectorLength {
                field,
                expected,
                got,
            } => write!(f, "length mismatch: {field} has {got}, expected {expected}"),
            Self::NonPositive { field } => write!(f, "{field} must be strictly positive"),
            Self::TradeoffNegative => write!(f, "tradeoff negative"),
            Self::NonFinite { field } => write!(f, "{field} must be finite"),
        }
    }
}

/// Collects every violated invariant; an empty list means the parameters are usable.
pub fn validate(p: &SystemParams) -> Vec<ParamViolation> {
    let mut out = Vec::new();
    if p.num_cells == 0 {
        out.push(ParamViolation::NoCells);
    }
    if p.num_users == 0 {
        out.push(ParamViolation::NoUsers);
    }
    if p.bs_antennas == 0 || p.user_antennas == 0 {
        out.push(ParamViolation::NoAntennas);
    }
    if p.bs_positions.len() != p.num_cells {
        out.push(ParamViolation::PositionCount {
            field: "bs_positions",
            expected: p.num_cells,
            got: p.bs_positions.len(),
        });
    }
    if p.user_positions.len() != p.num_users {
        out.push(ParamViolation::PositionCount {
            field: "user_positions",
            expected: p.num_users,
            got: p.user_positions.len(),
        });
    }
    let coords_finite = p
        .bs_positions
        .iter()
        .chain(p.user_positions.iter())
        .chain(std::iter::once(&p.irs_position))
        .all(|x| x.iter().all(|c| c.is_finite()));
    if !coords_finite {
        out.push(ParamViolation::NonFinite { field: "positions" });
    }

    for (field, v) in [
        ("bandwidth", p.bandwidth),
        ("carrier_freq", p.carrier_freq),
        ("noise_var", p.noise_var),
    ] {
        if !v.is_finite() {
            out.push(ParamViolation::NonFinite { field });
        } else if v <= 0.0 {
            out.push(ParamViolation::NonPositive { field });
        }
    }

    let per_user: [(&'static str, &[f64]); 5] = [
        ("task_bits", &p.task_bits),
        ("cycles_per_bit", &p.cycles_per_bit),
        ("local_cpu", &p.local_cpu),
        ("local_energy_per_cycle", &p.local_energy_per_cycle),
        ("user_weights", &p.user_weights),
    ];
    let per_bs: [(&'static str, &[f64]); 2] = [
        ("edge_cpu_total", &p.edge_cpu_total),
        ("edge_energy_per_cycle", &p.edge_energy_per_cycle),
    ];
    for (field, v) in per_user {
        check_positive_vec(&mut out, field, v, p.num_users);
    }
    for (field, v) in per_bs {
        check_positive_vec(&mut out, field, v, p.num_cells);
    }
    if p.tx_power.len() != p.num_cells {
        out.push(ParamViolation::VectorLength {
            field: "tx_power",
            expected: p.num_cells,
            got: p.tx_power.len(),
        });
    }
    for row in &p.tx_power {
        check_positive_vec(&mut out, "tx_power", row, p.num_users);
    }

    if !p.tradeoff.is_finite() {
        out.push(ParamViolation::NonFinite { field: "tradeoff" });
    } else if p.tradeoff < 0.0 {
        out.push(ParamViolation::TradeoffNegative);
    }
    out
}

fn check_positive_vec(out: &mut Vec<ParamViolation>, field: &'static str, v: &[f64], expected: usize) {
    if v.len() != expected {
        out.push(ParamViolation::VectorLength {
            field,
            expected,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        out.push(ParamViolation::NonFinite { field });
    } else if v.iter().any(|&x| x <= 0.0) {
        out.push(ParamViolation::NonPositive { field });
    }
}

/// Large-scale and small-scale fading constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingModel {
    /// path loss at 1 m, dB
    pub pathloss_ref_db: f64,
    pub exponent_direct: f64,
    pub exponent_irs_bs: f64,
    pub exponent_user_irs: f64,
    pub rician_k_direct: f64,
    pub rician_k_irs: f64,
}

impl Default for FadingModel {
    fn default() -> Self {
        Self {
            pathloss_ref_db: -30.0,
            exponent_direct: 3.5,
            exponent_irs_bs: 2.2,
            exponent_user_irs: 2.2,
            rician_k_direct: 0.0,
            rician_k_irs: 3.0,
        }
    }
}

impl FadingModel {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, e) in [
            ("exponent_direct", self.exponent_direct),
            ("exponent_irs_bs", self.exponent_irs_bs),
            ("exponent_user_irs", self.exponent_user_irs),
        ] {
            if !(1.5..=6.0).contains(&e) {
                out.push(format!("{name} = {e} outside [1.5, 6]"));
            }
        }
        for (name, k) in [
            ("rician_k_direct", self.rician_k_direct),
            ("rician_k_irs", self.rician_k_irs),
        ] {
            if !(k >= 0.0) {
                out.push(format!("{name} = {k} negative"));
            }
        }
        if !self.pathloss_ref_db.is_finite() {
            out.push("pathloss_ref_db not finite".into());
        }
        out
    }

    /// Linear power gain `PL_ref · d^(−exponent)`.
    pub fn path_loss(&self, distance: f64, exponent: f64) -> f64 {
        10f64.powf(self.pathloss_ref_db / 10.0) * distance.powf(-exponent)
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// user k → BS q, `N_BS × N_U`
    pub direct: PerLink<CMat64>,
    /// IRS → BS q, `N_BS × M`
    pub irs_to_bs: Vec<CMat64>,
    /// user k → IRS, `M × N_U`
    pub user_to_irs: Vec<CMat64>,
}

impl ChannelSet {
    pub fn num_cells(&self) -> usize {
        self.direct.num_cells()
    }

    pub fn num_users(&self) -> usize {
        self.direct.num_users()
    }

    pub fn irs_elements(&self) -> usize {
        self.irs_to_bs.first().map_or(0, |g| g.cols())
    }

    pub fn bs_antennas(&self) -> usize {
        self.direct.iter().next().map_or(0, |h| h.rows())
    }

    pub fn user_antennas(&self) -> usize {
        self.direct.iter().next().map_or(0, |h| h.cols())
    }

    /// Scalar channels for [`SystemParams::single_link`]: direct `h`,
    /// IRS→BS `g`, user→IRS `h_r`.
    pub fn single_link(h: Complex64, g: Complex64, h_r: Complex64) -> Self {
        Self {
            direct: PerLink::filled(1, 1, CMat64::from_fn(1, 1, |_, _| h)),
            irs_to_bs: vec![CMat64::from_fn(1, 1, |_, _| g)],
            user_to_irs: vec![CMat64::from_fn(1, 1, |_, _| h_r)],
        }
    }

    /// Same realization with the IRS removed (`M = 0`).
    pub fn without_irs(&self) -> Self {
        let n_bs = self.bs_antennas();
        let n_u = self.user_antennas();
        Self {
            direct: self.direct.clone(),
            irs_to_bs: (0..self.num_cells()).map(|_| CMat64::zeros(n_bs, 0)).collect(),
            user_to_irs: (0..self.num_users()).map(|_| CMat64::zeros(0, n_u)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.direct.iter().all(|m| m.is_finite())
            && self.irs_to_bs.iter().all(|m| m.is_finite())
            && self.user_to_irs.iter().all(|m| m.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid parameters: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidParams(Vec<ParamViolation>),
    #[error("invalid fading model: {}", .0.join("; "))]
    InvalidFading(Vec<String>),
}

/// RNG stream namespaces. Each channel block owns one stream.
pub(crate) mod stream {
    pub const DIRECT: u64 = 1 << 40;
    pub const IRS_BS: u64 = 2 << 40;
    pub const USER_IRS: u64 = 3 << 40;
    pub const USER_POS: u64 = 4 << 40;
    pub const INIT_BEAM: u64 = 5 << 40;
    pub const INIT_PHASE: u64 = 6 << 40;
    pub const RANDOM_PHASE: u64 = 7 << 40;
    pub const SA: u64 = 8 << 40;
}

pub(crate) fn rng_for(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub(crate) fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform drop inside a horizontal disk; user `k` depends only on `(seed, k)`.
pub fn place_users(disk: &UserDisk, k: usize, seed: u64) -> Vec<Position> {
    (0..k)
        .map(|i| {
            let mut rng = rng_for(seed, stream::USER_POS | i as u64);
            let r = disk.radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            [
                disk.center[0] + r * phi.cos(),
                disk.center[1] + r * phi.sin(),
                disk.center[2],
            ]
        })
        .collect()
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Direction cosine of `to − from` along the array axis (x).
fn axis_cosine(from: &Position, to: &Position) -> f64 {
    let d = distance(from, to);
    if d == 0.0 {
        0.0
    } else {
        (to[0] - from[0]) / d
    }
}

/// Half-wavelength ULA response along x.
fn steering(n: usize, cosine: f64) -> impl Iterator<Item = Complex64> {
    (0..n).map(move |i| Complex64::from_polar(1.0, PI * i as f64 * cosine))
}

struct LinkGeometry {
    amplitude: f64,
    los_weight: f64,
    nlos_weight: f64,
}

impl LinkGeometry {
    fn new(fading: &FadingModel, tx: &Position, rx: &Position, exponent: f64, kappa: f64) -> Self {
        let pl = fading.path_loss(distance(tx, rx).max(1e-3), exponent);
        let (los_weight, nlos_weight) = if kappa.is_infinite() {
            (1.0, 0.0)
        } else {
            ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
        };
        Self {
            amplitude: pl.sqrt(),
            los_weight,
            nlos_weight,
        }
    }

    fn entry(&self, los: Complex64, rng: &mut impl Rng) -> Complex64 {
        let nlos = complex_gaussian(rng);
        (los * self.los_weight + nlos * self.nlos_weight) * self.amplitude
    }
}

/// Draws the direct, IRS→BS and user→IRS channel blocks.
pub fn generate_channels(
    params: &SystemParams,
    fading: &FadingModel,
    seed: u64,
) -> Result<ChannelSet, ScenarioError> {
    let violations = validate(params);
    if !violations.is_empty() {
        return Err(ScenarioError::InvalidParams(violations));
    }
    let fading_issues = fading.validate();
    if !fading_issues.is_empty() {
        return Err(ScenarioError::InvalidFading(fading_issues));
    }
    let n_bs = params.bs_antennas;
    let n_u = params.user_antennas;
    let m = params.irs_elements;
    let irs = &params.irs_position;

    let direct = PerLink::from_fn(params.num_cells, params.num_users, |q, k| {
        let bs = &params.bs_positions[q];
        let user = &params.user_positions[k];
        let geo = LinkGeometry::new(fading, user, bs, fading.exponent_direct, fading.rician_k_direct);
        let rx: Vec<_> = steering(n_bs, axis_cosine(bs, user)).collect();
        let tx: Vec<_> = steering(n_u, axis_cosine(user, bs)).collect();
        let mut rng = rng_for(seed, stream::DIRECT | ((q as u64) << 20) | k as u64);
        CMat64::from_fn(n_bs, n_u, |r, c| geo.entry(rx[r] * tx[c].conj(), &mut rng))
    });

    // Column n of G and row n of H_R belong to IRS element n and are drawn
    // element by element so a larger surface extends a smaller one.
    let irs_to_bs = params
        .bs_positions
        .iter()
        .enumerate()
        .map(|(q, bs)| {
            let geo = LinkGeometry::new(fading, irs, bs, fading.exponent_irs_bs, fading.rician_k_irs);
            let rx: Vec<_> = steering(n_bs, axis_cosine(bs, irs)).collect();
            let tx: Vec<_> = steering(m, axis_cosine(irs, bs)).collect();
            let mut rng = rng_for(seed, stream::IRS_BS | q as u64);
            let mut g = CMat64::zeros(n_bs, m);
            for n in 0..m {
                for r in 0..n_bs {
                    g[(r, n)] = geo.entry(rx[r] * tx[n].conj(), &mut rng);
                }
            }
            g
        })
        .collect();

    let user_to_irs = params
        .user_positions
        .iter()
        .enumerate()
        .map(|(k, user)| {
            let geo =
                LinkGeometry::new(fading, user, irs, fading.exponent_user_irs, fading.rician_k_irs);
            let rx: Vec<_> = steering(m, axis_cosine(irs, user)).collect();
            let tx: Vec<_> = steering(n_u, axis_cosine(user, irs)).collect();
            let mut rng = rng_for(seed, stream::USER_IRS | k as u64);
            let mut h = CMat64::zeros(m, n_u);
            for n in 0..m {
                for c in 0..n_u {
                    h[(n, c)] = geo.entry(rx[n] * tx[c].conj(), &mut rng);
                }
            }
            h
        })
        .collect();

    Ok(ChannelSet {
        direct,
        irs_to_bs,
        user_to_irs,
    })
}
