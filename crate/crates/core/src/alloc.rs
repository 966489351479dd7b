//! Time, power and CPU-frequency allocation for fixed surface profiles and
//! beamformers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamphase::GainSummary;
use crate::channel::Side;
use crate::config::{Scenario, SurfaceMode, SystemConfig};
use crate::error::{Error, Result};
use crate::kernel::{one_dim_search, solve_dense_linear, ScanOrder};

/// Iteration cap for the uplink-time fixed point.
const FIXED_POINT_CAP: usize = 400;

/// Per-user data sizes for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub l_local_bits: Vec<f64>,
    pub l_up_bits: Vec<f64>,
    pub cycles_per_bit: Vec<f64>,
    pub l_down_bits: f64,
}

impl Workload {
    /// Uniform per-user draws over the configured ranges.
    pub fn draw<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Self {
        let k = config.users();
        let mut pick = |[lo, hi]: [f64; 2]| lo + rng.random::<f64>() * (hi - lo);
        let l_local_bits = (0..k).map(|_| pick(config.l_local_bits)).collect();
        let l_up_bits = (0..k).map(|_| pick(config.l_up_bits)).collect();
        Self {
            l_local_bits,
            l_up_bits,
            cycles_per_bit: vec![config.c_cycles_per_bit; k],
            l_down_bits: config.l_down_bits,
        }
    }

    /// Same sizes for every user.
    pub fn uniform(config: &SystemConfig, l_local: f64, l_up: f64) -> Self {
        let k = config.users();
        Self {
            l_local_bits: vec![l_local; k],
            l_up_bits: vec![l_up; k],
            cycles_per_bit: vec![config.c_cycles_per_bit; k],
            l_down_bits: config.l_down_bits,
        }
    }

    pub fn users(&self) -> usize {
        self.l_local_bits.len()
    }

    /// `a (L C)³`, so local energy is this over `τ_l²`.
    fn compute_load(&self, k: usize, a_cpu: f64) -> f64 {
        a_cpu * (self.l_local_bits[k] * self.cycles_per_bit[k]).powi(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum DownlinkPlan {
    Es { p_d: f64, tau_d: f64 },
    Ts { p_t: f64, p_r: f64, tau_t: f64, tau_r: f64 },
}

impl DownlinkPlan {
    pub fn time(&self) -> f64 {
        match *self {
            DownlinkPlan::Es { tau_d, .. } => tau_d,
            DownlinkPlan::Ts { tau_t, tau_r, .. } => tau_t + tau_r,
        }
    }

    pub fn energy(&self) -> f64 {
        match *self {
            DownlinkPlan::Es { p_d, tau_d } => p_d * tau_d,
            DownlinkPlan::Ts { p_t, p_r, tau_t, tau_r } => p_t * tau_t + p_r * tau_r,
        }
    }

    pub fn total_power(&self) -> f64 {
        match *self {
            DownlinkPlan::Es { p_d, .. } => p_d,
            DownlinkPlan::Ts { p_t, p_r, .. } => p_t + p_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcePlan {
    pub scenario: Scenario,
    pub p_e: f64,
    pub tau_e: f64,
    pub tau_l: Vec<f64>,
    pub f: Vec<f64>,
    /// Uplink time per user; equal across users for time switching.
    pub tau_u: Vec<f64>,
    pub p_u: Vec<f64>,
    pub downlink: DownlinkPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub harvest_j: f64,
    pub downlink_j: f64,
    pub total_j: f64,
    /// Local plus uplink energy spent by each user.
    pub user_consumed_j: Vec<f64>,
}

pub fn total_energy(plan: &ResourcePlan, config: &SystemConfig) -> EnergyBreakdown {
    let harvest_j = plan.p_e * plan.tau_e;
    let downlink_j = plan.downlink.energy();
    let user_consumed_j = (0..plan.tau_l.len())
        .map(|k| config.a_cpu * plan.f[k].powi(3) * plan.tau_l[k] + plan.p_u[k] * plan.tau_u[k])
        .collect();
    EnergyBreakdown { harvest_j, downlink_j, total_j: harvest_j + downlink_j, user_consumed_j }
}

fn is_time_switched(mode: SurfaceMode) -> bool {
    mode == SurfaceMode::Ts
}

/// Users sorted by descending uplink gain (ties by index). Users earlier in
/// the list are decoded first.
pub fn decoding_order(gains: &GainSummary) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.users()).collect();
    order.sort_by(|&a, &b| gains.z_u[b].total_cmp(&gains.z_u[a]).then(a.cmp(&b)));
    order
}

/// Decoding order and interference sets for one uplink mode.
#[derive(Debug, Clone)]
pub struct UplinkModel {
    pub order: Vec<usize>,
    /// Users whose signals remain when decoding each user.
    pub interferers: Vec<Vec<usize>>,
    pub time_switched: bool,
}

impl UplinkModel {
    /// Later-decoded users of the same group interfere; with both groups on
    /// the channel at once, every user of the other group does too.
    pub fn new(gains: &GainSummary, mode: SurfaceMode) -> Self {
        let order = decoding_order(gains);
        let time_switched = is_time_switched(mode);
        let mut pos = vec![0; order.len()];
        for (i, &u) in order.iter().enumerate() {
            pos[u] = i;
        }
        let interferers = (0..gains.users())
            .map(|k| {
                (0..gains.users())
                    .filter(|&m| m != k)
                    .filter(|&m| if gains.sides[m] == gains.sides[k] { pos[m] > pos[k] } else { !time_switched })
                    .collect()
            })
            .collect();
        Self { order, interferers, time_switched }
    }

    pub fn rate(&self, k: usize, p: &[f64], gains: &GainSummary, config: &SystemConfig) -> f64 {
        let interference: f64 = self.interferers[k].iter().map(|&m| p[m] * gains.cross_u[m][k]).sum();
        let sinr = p[k] * gains.z_u[k] / (interference + gains.noise_w * gains.v_u_norm2[k]);
        config.bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2
    }

    pub fn powers(&self, rates: &[f64], gains: &GainSummary, config: &SystemConfig) -> Result<Vec<f64>> {
        let k = gains.users();
        if rates.len() != k {
            return Err(Error::Dimension(format!("{} rates for {k} users", rates.len())));
        }
        if rates.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::Infeasible("uplink rates must be positive".into()));
        }
        let gamma: Vec<f64> = rates.iter().map(|&r| (r / config.bandwidth_hz).exp2() - 1.0).collect();
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::Infeasible("uplink rate overflows".into()));
        }
        let rhs = |j: usize| gamma[j] * gains.noise_w * gains.v_u_norm2[j];
        let p: Vec<f64> = if self.time_switched {
            // triangular: the last-decoded user sees no interference
            let mut p = vec![0.0; k];
            for &j in self.order.iter().rev() {
                let interference: f64 = self.interferers[j].iter().map(|&m| p[m] * gains.cross_u[m][j]).sum();
                p[j] = (gamma[j] * interference + rhs(j)) / gains.z_u[j];
            }
            p
        } else {
            let mut a = nalgebra::DMatrix::<f64>::zeros(k, k);
            let b = nalgebra::DVector::from_fn(k, |j, _| rhs(j));
            for j in 0..k {
                a[(j, j)] = gains.z_u[j];
                for &m in &self.interferers[j] {
                    a[(j, m)] = -gamma[j] * gains.cross_u[m][j];
                }
            }
            solve_dense_linear(&a, &b)
                .map_err(|_| Error::Infeasible("singular uplink power system".into()))?
                .iter()
                .copied()
                .collect()
        };
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Infeasible("negative uplink power".into()));
        }
        if p.iter().any(|&x| x > config.p_user_max_w) {
            return Err(Error::Infeasible("uplink power above cap".into()));
        }
        Ok(p)
    }
}

/// Uplink rate of user `k` in bits/s.
pub fn uplink_rate(k: usize, p: &[f64], gains: &GainSummary, mode: SurfaceMode, config: &SystemConfig) -> f64 {
    UplinkModel::new(gains, mode).rate(k, p, gains, config)
}

/// Powers meeting per-user target rates exactly.
pub fn solve_uplink_powers(rates: &[f64], gains: &GainSummary, mode: SurfaceMode, config: &SystemConfig) -> Result<Vec<f64>> {
    UplinkModel::new(gains, mode).powers(rates, gains, config)
}

/// Local-processing times and CPU frequencies that spend exactly the
/// harvested energy left after uplink. `window[k]` is the latest allowed
/// finish of local processing for user k.
#[allow(clippy::too_many_arguments)]
pub fn local_schedule(
    tau_e: f64,
    p_e: f64,
    p_u: &[f64],
    tau_u: &[f64],
    window: &[f64],
    gains: &GainSummary,
    workload: &Workload,
    config: &SystemConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(tau_e > 0.0) {
        return Err(Error::Infeasible("harvest time must be positive".into()));
    }
    let k = gains.users();
    let mut tau_l = Vec::with_capacity(k);
    let mut f = Vec::with_capacity(k);
    for j in 0..k {
        let residual = config.eta * p_e * gains.z_e[j] * tau_e - p_u[j] * tau_u[j];
        if !(residual > 0.0) {
            return Err(Error::Infeasible(format!("user {j} has no energy left for local processing")));
        }
        let cycles = workload.l_local_bits[j] * workload.cycles_per_bit[j];
        let t = (workload.compute_load(j, config.a_cpu) / residual).sqrt();
        if t < tau_e || t > window[j] {
            return Err(Error::Infeasible(format!("user {j} local time {t} outside [{tau_e}, {}]", window[j])));
        }
        tau_l.push(t);
        f.push(cycles / t);
    }
    Ok((tau_l, f))
}

/// Seconds needed to send `bits` at power `p` over normalised gain `z`.
pub fn downlink_time(bits: f64, p: f64, z: f64, config: &SystemConfig) -> f64 {
    bits * std::f64::consts::LN_2 / (config.bandwidth_hz * (p * z).ln_1p())
}

/// Smallest power on the grid `eps, 2 eps, …` up to `cap` whose transfer
/// time fits in `t_rem`.
fn min_power(bits: f64, z: f64, t_rem: f64, cap: f64, config: &SystemConfig) -> Option<f64> {
    let step = config.eps;
    let exact = (bits / (config.bandwidth_hz * t_rem)).exp2() - 1.0;
    let exact = exact / z;
    if !exact.is_finite() {
        return None;
    }
    let last = (cap / step * (1.0 + 1e-12)).floor();
    let mut k = (exact / step - 1e-9).ceil().max(1.0);
    while k <= last {
        if downlink_time(bits, k * step, z, config) <= t_rem {
            return Some(k * step);
        }
        k += 1.0;
    }
    None
}

/// Broadcast power and time on the worst normalised gain.
pub fn downlink_es(z_worst: f64, t_rem: f64, bits: f64, config: &SystemConfig) -> Result<(f64, f64)> {
    if !(t_rem > 0.0) {
        return Err(Error::Infeasible("no time left for downlink".into()));
    }
    let p = min_power(bits, z_worst, t_rem, config.p_max_w, config)
        .ok_or_else(|| Error::Infeasible("downlink needs more than the power cap".into()))?;
    Ok((p, downlink_time(bits, p, z_worst, config)))
}

/// Two-slot downlink on the power grid `eps, 2 eps, …, P_max`: the weaker
/// side gets the smallest grid power that still fits after the stronger
/// side's slot, and the stronger side's grid power minimises the total
/// energy.
///
/// With the weaker side's power left continuous the total is convex in
/// the split of time between the slots, hence unimodal along the grid, and
/// it bounds the grid total from below. A coarse pass and an integer
/// ternary search locate its minimum; the grid total is then scanned
/// outwards until the bound rules out the rest. The whole grid is scanned
/// only if the coarse pass finds nothing.
pub fn downlink_ts(z_t: f64, z_r: f64, t_rem: f64, bits: f64, config: &SystemConfig) -> Result<DownlinkPlan> {
    if !(t_rem > 0.0) {
        return Err(Error::Infeasible("no time left for downlink".into()));
    }
    let swapped = z_t < z_r;
    let (z_hi, z_lo) = if swapped { (z_r, z_t) } else { (z_t, z_r) };
    let step = config.eps;
    let steps = (config.p_max_w / step + 1e-9).floor() as usize;
    if steps == 0 {
        return Err(Error::Infeasible("power cap below the grid step".into()));
    }
    let eval = |i: usize| -> Option<(f64, f64, f64, f64, f64)> {
        let p_hi = i as f64 * step;
        let t_hi = downlink_time(bits, p_hi, z_hi, config);
        let rem = t_rem - t_hi;
        if !(rem > 0.0) {
            return None;
        }
        let p_lo = min_power(bits, z_lo, rem, config.p_max_w - p_hi, config)?;
        let t_lo = downlink_time(bits, p_lo, z_lo, config);
        Some((p_hi * t_hi + p_lo * t_lo, p_hi, p_lo, t_hi, t_lo))
    };
    let energy = |i: usize| eval(i).map_or(f64::INFINITY, |c| c.0);
    let bound = |i: usize| -> f64 {
        let p_hi = i as f64 * step;
        let t_hi = downlink_time(bits, p_hi, z_hi, config);
        let rem = t_rem - t_hi;
        if !(rem > 0.0) {
            return f64::INFINITY;
        }
        let p_lo = ((bits / (config.bandwidth_hz * rem)).exp2() - 1.0) / z_lo;
        if p_lo > config.p_max_w - p_hi {
            return f64::INFINITY;
        }
        p_hi * t_hi + p_lo * rem
    };

    // the stronger slot alone must fit
    let first = first_true(|p| downlink_time(bits, p, z_hi, config) < t_rem, step, steps as f64 * step, step)
        .ok_or_else(|| Error::Infeasible("no downlink power pair fits".into()))?;
    let lo_idx = ((first / step).round() as usize).max(1);
    const COARSE: usize = 256;
    let span = steps - lo_idx;
    let coarse: Vec<usize> = (0..=COARSE.min(span)).map(|j| lo_idx + j * span / COARSE.min(span).max(1)).collect();
    let found = coarse
        .iter()
        .enumerate()
        .map(|(j, &i)| (j, bound(i)))
        .filter(|(_, e)| e.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1));

    let best_idx = match found {
        Some((j, _)) => {
            let centre = coarse[j];
            let (mut a, mut b) = (coarse[j.saturating_sub(1)], coarse[(j + 1).min(coarse.len() - 1)]);
            while b - a > 2 {
                let m1 = a + (b - a) / 3;
                let m2 = b - (b - a) / 3;
                let (f1, f2) = (bound(m1), bound(m2));
                if f1.is_infinite() && f2.is_infinite() {
                    // both outside the feasible interval around the centre
                    if m2 <= centre {
                        a = m2;
                    } else if m1 >= centre {
                        b = m1;
                    } else {
                        a = m1;
                        b = m2;
                    }
                } else if f1 <= f2 {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            let valley = (a..=b).chain(std::iter::once(centre)).min_by(|&x, &y| bound(x).total_cmp(&bound(y))).expect("non-empty");
            let mut best = (valley, energy(valley));
            let mut i = valley;
            while i > lo_idx && bound(i - 1) <= best.1 {
                i -= 1;
                let e = energy(i);
                if e < best.1 {
                    best = (i, e);
                }
            }
            let mut i = valley;
            while i < steps && bound(i + 1) <= best.1 {
                i += 1;
                let e = energy(i);
                if e < best.1 {
                    best = (i, e);
                }
            }
            best.0
        }
        None => (lo_idx..=steps)
            .min_by(|&x, &y| energy(x).total_cmp(&energy(y)))
            .expect("non-empty range"),
    };
    let (_, p_hi, p_lo, t_hi, t_lo) =
        eval(best_idx).ok_or_else(|| Error::Infeasible("no downlink power pair fits".into()))?;
    Ok(if swapped {
        DownlinkPlan::Ts { p_t: p_lo, p_r: p_hi, tau_t: t_lo, tau_r: t_hi }
    } else {
        DownlinkPlan::Ts { p_t: p_hi, p_r: p_lo, tau_t: t_hi, tau_r: t_lo }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AllocOptions {
    /// Direction of the harvest-time grid scan.
    pub order: ScanOrder,
    /// Transfer power; `None` means the cap.
    pub p_e: Option<f64>,
}

#[derive(Debug, Clone)]
struct UserSchedule {
    tau_l: Vec<f64>,
    f: Vec<f64>,
    tau_u: Vec<f64>,
    p_u: Vec<f64>,
}

struct Problem<'a> {
    gains: &'a GainSummary,
    workload: &'a Workload,
    config: &'a SystemConfig,
    uplink: UplinkModel,
    downlink_ts: bool,
    p_e: f64,
    order: ScanOrder,
}

impl Problem<'_> {
    fn residuals(&self, tau_e: f64, p_u: &[f64], tau_u: &[f64]) -> Option<Vec<f64>> {
        let k = self.gains.users();
        let mut tau_l = vec![0.0; k];
        for j in 0..k {
            let residual = self.config.eta * self.p_e * self.gains.z_e[j] * tau_e - p_u[j] * tau_u[j];
            if !(residual > 0.0) {
                return None;
            }
            tau_l[j] = (self.workload.compute_load(j, self.config.a_cpu) / residual).sqrt();
        }
        Some(tau_l)
    }

    /// Greatest consistent uplink times for harvest time `tau_e` when users
    /// have `span` seconds for local processing and uplink. Starting from
    /// the longest possible uplink, each update gives uplink whatever the
    /// energy-tight local time leaves; the update is monotone, so the
    /// sequence decreases to the greatest fixed point when one exists.
    fn fixed_point(&self, tau_e: f64, span: f64) -> Option<Vec<f64>> {
        let k = self.gains.users();
        let ts = self.uplink.time_switched;
        let damping = self.config.uplink_damping.clamp(1e-3, 1.0);
        let tol = 1e-3 * self.config.eps;
        let mut tau_u = vec![if ts { 0.5 * span } else { span }; k];
        for _ in 0..FIXED_POINT_CAP {
            let rates: Vec<f64> = (0..k).map(|j| self.workload.l_up_bits[j] / tau_u[j]).collect();
            let p_u = self.uplink.powers(&rates, self.gains, self.config).ok()?;
            let tau_l = self.residuals(tau_e, &p_u, &tau_u)?;
            let target: Vec<f64> = if ts {
                vec![0.5 * (span - tau_l.iter().copied().fold(0.0, f64::max)); k]
            } else {
                (0..k).map(|j| span - tau_l[j]).collect()
            };
            if target.iter().any(|&t| !(t > 0.0)) {
                return None;
            }
            let step = (0..k).map(|j| (target[j] - tau_u[j]).abs()).fold(0.0, f64::max);
            for j in 0..k {
                tau_u[j] = (1.0 - damping) * tau_u[j] + damping * target[j];
            }
            if step <= tol {
                return Some(tau_u);
            }
        }
        None
    }

    /// Energy-tight schedule on the fixed point, with the window checks.
    fn schedule(&self, tau_e: f64, span: f64) -> Option<UserSchedule> {
        let k = self.gains.users();
        let tau_u = self.fixed_point(tau_e, span)?;
        let rates: Vec<f64> = (0..k).map(|j| self.workload.l_up_bits[j] / tau_u[j]).collect();
        let p_u = self.uplink.powers(&rates, self.gains, self.config).ok()?;
        let slack = 1e-2 * self.config.eps;
        let window: Vec<f64> = if self.uplink.time_switched {
            vec![span - 2.0 * tau_u[0] + slack; k]
        } else {
            (0..k).map(|j| span - tau_u[j] + slack).collect()
        };
        let (tau_l, f) =
            local_schedule(tau_e, self.p_e, &p_u, &tau_u, &window, self.gains, self.workload, self.config).ok()?;
        Some(UserSchedule { tau_l, f, tau_u, p_u })
    }

    /// Smallest grid harvest time admitting a schedule within `span`.
    fn min_harvest(&self, span: f64) -> Option<(f64, UserSchedule)> {
        if !(span > 0.0) {
            return None;
        }
        let eps = self.config.eps;
        let tau_e =
            one_dim_search(|t| self.fixed_point(t, span).is_some(), eps, self.config.t_total_s, eps, self.order).ok()?;
        Some((tau_e, self.schedule(tau_e, span)?))
    }

    fn downlink(&self, budget: f64) -> Option<DownlinkPlan> {
        let bits = self.workload.l_down_bits;
        if self.downlink_ts {
            downlink_ts(self.gains.z_worst_side(Side::T), self.gains.z_worst_side(Side::R), budget, bits, self.config)
                .ok()
        } else {
            downlink_es(self.gains.z_worst(), budget, bits, self.config)
                .ok()
                .map(|(p_d, tau_d)| DownlinkPlan::Es { p_d, tau_d })
        }
    }

    /// Downlink time once every slot runs at the power floor. Longer
    /// budgets cannot lower the downlink energy any further.
    fn floor_time(&self) -> f64 {
        let (bits, floor) = (self.workload.l_down_bits, self.config.eps);
        if self.downlink_ts {
            downlink_time(bits, floor, self.gains.z_worst_side(Side::T), self.config)
                + downlink_time(bits, floor, self.gains.z_worst_side(Side::R), self.config)
        } else {
            downlink_time(bits, floor, self.gains.z_worst(), self.config)
        }
    }

    fn evaluate(&self, budget: f64) -> Option<Candidate> {
        let downlink = self.downlink(budget)?;
        let (tau_e, users) = self.min_harvest(self.config.t_total_s - downlink.time())?;
        Some(Candidate { energy: self.p_e * tau_e + downlink.energy(), tau_e, users, downlink })
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    energy: f64,
    tau_e: f64,
    users: UserSchedule,
    downlink: DownlinkPlan,
}

/// Smallest grid point in `[lo, hi]` where a monotone predicate turns true.
fn first_true(pred: impl FnMut(f64) -> bool, lo: f64, hi: f64, step: f64) -> Option<f64> {
    one_dim_search(pred, lo, hi, step, ScanOrder::Forward).ok()
}

/// Joint time/power allocation for one scenario. For each downlink time
/// budget the users take all remaining time and the smallest harvest time
/// that powers them; the budget itself is chosen to minimise total energy.
pub fn allocate(
    gains: &GainSummary,
    scenario: Scenario,
    workload: &Workload,
    config: &SystemConfig,
    opts: AllocOptions,
) -> Result<ResourcePlan> {
    if workload.users() != gains.users() {
        return Err(Error::Dimension(format!("{} workloads for {} users", workload.users(), gains.users())));
    }
    let p_e = opts.p_e.unwrap_or(config.p_max_w);
    if !(p_e > 0.0 && p_e <= config.p_max_w) {
        return Err(Error::Config(format!("transfer power {p_e} outside (0, {}]", config.p_max_w)));
    }
    let prob = Problem {
        gains,
        workload,
        config,
        uplink: UplinkModel::new(gains, scenario.uplink()),
        downlink_ts: scenario.downlink() == SurfaceMode::Ts,
        p_e,
        order: opts.order,
    };
    let t = config.t_total_s;
    let eps = config.eps;
    let infeasible = || Error::Infeasible(format!("{} admits no schedule", scenario.name()));

    // shortest downlink budget that fits, then the longest the users
    // tolerate (at the largest harvest time), capped where the downlink
    // power bottoms out
    let d_min = first_true(|b| prob.downlink(b).is_some(), eps, t, eps).ok_or_else(infeasible)?;
    let first = prob.evaluate(d_min).ok_or_else(infeasible)?;
    let d_users = first_true(|b| b > d_min && prob.fixed_point(t, t - b).is_none(), d_min, t, eps).map_or(t, |b| b - eps);
    let d_floor = d_min + ((prob.floor_time() - d_min) / eps).ceil().max(0.0) * eps;
    let d_max = d_users.min(d_floor);

    let mut best = first;
    if d_max > d_min {
        let mut lo = d_min;
        let mut hi = d_max;
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let energy_at = |b: f64, best: &mut Candidate| -> f64 {
            let c = prob.evaluate(b);
            let e = c.as_ref().map_or(f64::INFINITY, |c| c.energy);
            if let Some(c) = c {
                if c.energy < best.energy {
                    *best = c;
                }
            }
            e
        };
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let mut f1 = energy_at(x1, &mut best);
        let mut f2 = energy_at(x2, &mut best);
        while hi - lo > eps {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = energy_at(x1, &mut best);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = energy_at(x2, &mut best);
            }
        }
        energy_at(d_max, &mut best);
    }

    let u = best.users;
    Ok(ResourcePlan {
        scenario,
        p_e,
        tau_e: best.tau_e,
        tau_l: u.tau_l,
        f: u.f,
        tau_u: u.tau_u,
        p_u: u.p_u,
        downlink: best.downlink,
    })
}

/// Uplink energy of user `k` from the successive-decoding closed form,
/// evaluated at the plan's rates. Matches `p_u τ_u` when each interferer
/// reaches user k's combiner with its own gain scaled by `‖v_k‖²/‖v_m‖²`,
/// as with a single AP antenna.
pub fn sic_uplink_energy(k: usize, plan: &ResourcePlan, gains: &GainSummary, config: &SystemConfig) -> f64 {
    let model = UplinkModel::new(gains, plan.scenario.uplink());
    let b = config.bandwidth_hz;
    let later: f64 = model.interferers[k]
        .iter()
        .filter(|&&m| gains.sides[m] == gains.sides[k])
        .map(|&m| model.rate(m, &plan.p_u, gains, config) / b)
        .sum();
    let r = model.rate(k, &plan.p_u, gains, config) / b;
    later.exp2() * plan.tau_u[k] * (r.exp2() - 1.0) * gains.noise_w * gains.v_u_norm2[k] / gains.z_u[k]
}

impl ResourcePlan {
    /// Constraint violations of the plan, empty when it is valid.
    pub fn violations(&self, gains: &GainSummary, workload: &Workload, config: &SystemConfig) -> Vec<String> {
        let mut out = Vec::new();
        let k = gains.users();
        let eps = config.eps;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        if self.p_e > config.p_max_w * (1.0 + 1e-12) {
            out.push(format!("transfer power {} above cap", self.p_e));
        }
        let model = UplinkModel::new(gains, self.scenario.uplink());
        let down = self.downlink.time();
        for j in 0..k {
            let harvest = config.eta * self.p_e * gains.z_e[j] * self.tau_e;
            let spent = self.p_u[j] * self.tau_u[j] + config.a_cpu * self.f[j].powi(3) * self.tau_l[j];
            if rel(spent, harvest) > 1e-6 {
                out.push(format!("user {j}: spends {spent:e} J of {harvest:e} J harvested"));
            }
            if self.tau_l[j] < self.tau_e * (1.0 - 1e-12) {
                out.push(format!("user {j}: local time {} shorter than harvest {}", self.tau_l[j], self.tau_e));
            }
            if self.p_u[j] < 0.0 || self.p_u[j] > config.p_user_max_w * (1.0 + 1e-12) {
                out.push(format!("user {j}: uplink power {} outside cap", self.p_u[j]));
            }
            let processed = self.f[j] * self.tau_l[j] / workload.cycles_per_bit[j];
            if rel(processed, workload.l_local_bits[j]) > 1e-9 {
                out.push(format!("user {j}: processes {processed} of {} bits", workload.l_local_bits[j]));
            }
            let sent = model.rate(j, &self.p_u, gains, config) * self.tau_u[j];
            if rel(sent, workload.l_up_bits[j]) > 1e-6 {
                out.push(format!("user {j}: uploads {sent} of {} bits", workload.l_up_bits[j]));
            }
        }
        let busy: Vec<f64> = if model.time_switched {
            (0..k).map(|j| self.tau_l[j] + 2.0 * self.tau_u[0] + down).collect()
        } else {
            (0..k).map(|j| self.tau_l[j] + self.tau_u[j] + down).collect()
        };
        if model.time_switched {
            if self.tau_u.iter().any(|&x| (x - self.tau_u[0]).abs() > 1e-12) {
                out.push("uplink slots differ across users".into());
            }
            let longest = busy.iter().copied().fold(0.0, f64::max);
            if (longest - config.t_total_s).abs() > eps {
                out.push(format!("round lasts {longest} s, not {} s", config.t_total_s));
            }
            if busy.iter().any(|&b| b > config.t_total_s + eps) {
                out.push("a user overruns the round".into());
            }
        } else {
            for (j, &b) in busy.iter().enumerate() {
                if (b - config.t_total_s).abs() > eps {
                    out.push(format!("user {j}: busy {b} s, not {} s", config.t_total_s));
                }
            }
        }
        if self.downlink.total_power() > config.p_max_w * (1.0 + 1e-12) {
            out.push(format!("downlink power {} above cap", self.downlink.total_power()));
        }
        let bits = workload.l_down_bits;
        let delivered: Vec<f64> = match self.downlink {
            DownlinkPlan::Es { p_d, tau_d } => {
                vec![tau_d * config.bandwidth_hz * (p_d * gains.z_worst()).ln_1p() / std::f64::consts::LN_2]
            }
            DownlinkPlan::Ts { p_t, p_r, tau_t, tau_r } => vec![
                tau_t * config.bandwidth_hz * (p_t * gains.z_worst_side(Side::T)).ln_1p() / std::f64::consts::LN_2,
                tau_r * config.bandwidth_hz * (p_r * gains.z_worst_side(Side::R)).ln_1p() / std::f64::consts::LN_2,
            ],
        };
        for d in delivered {
            if rel(d, bits) > 1e-9 {
                out.push(format!("downlink delivers {d} of {bits} bits"));
            }
        }
        out
    }

    /// One `name = value unit` line per field.
    pub fn to_record(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.9e}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "scenario = {}", self.scenario.name());
        let _ = writeln!(s, "p_e = {:.9e} W", self.p_e);
        let _ = writeln!(s, "tau_e = {:.9e} s", self.tau_e);
        let _ = writeln!(s, "tau_l = [{}] s", list(&self.tau_l));
        let _ = writeln!(s, "f = [{}] Hz", list(&self.f));
        let _ = writeln!(s, "tau_u = [{}] s", list(&self.tau_u));
        let _ = writeln!(s, "p_u = [{}] W", list(&self.p_u));
        match self.downlink {
            DownlinkPlan::Es { p_d, tau_d } => {
                let _ = writeln!(s, "p_d = {p_d:.9e} W");
                let _ = writeln!(s, "tau_d = {tau_d:.9e} s");
            }
            DownlinkPlan::Ts { p_t, p_r, tau_t, tau_r } => {
                let _ = writeln!(s, "p_d_t = {p_t:.9e} W");
                let _ = writeln!(s, "p_d_r = {p_r:.9e} W");
                let _ = writeln!(s, "tau_d_t = {tau_t:.9e} s");
                let _ = writeln!(s, "tau_d_r = {tau_r:.9e} s");
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// `(P_e, total energy)`, `None` where infeasible.
    pub points: Vec<(f64, Option<f64>)>,
    pub at_cap: Option<f64>,
    pub violations: Vec<String>,
}

/// Re-runs the allocation with the transfer power pinned to each grid value
/// and checks that the cap is never beaten.
pub fn verify_theorem1(
    gains: &GainSummary,
    scenario: Scenario,
    workload: &Workload,
    config: &SystemConfig,
    grid: &[f64],
) -> Theorem1Report {
    let run = |p: f64| {
        allocate(gains, scenario, workload, config, AllocOptions { p_e: Some(p), ..Default::default() })
            .ok()
            .map(|plan| total_energy(&plan, config).total_j)
    };
    let at_cap = run(config.p_max_w);
    let tol = 2.0 * config.eps * config.p_max_w;
    let mut violations = Vec::new();
    let points: Vec<(f64, Option<f64>)> = grid.iter().map(|&p| (p, run(p))).collect();
    for &(p, e) in &points {
        match (e, at_cap) {
            (Some(e), Some(cap)) if cap > e + tol => {
                violations.push(format!("P_e={p} W costs {e} J, below {cap} J at the cap"))
            }
            (Some(_), None) => violations.push(format!("feasible at P_e={p} W but not at the cap")),
            _ => {}
        }
    }
    Theorem1Report { points, at_cap, violations }
}
