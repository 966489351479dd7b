//! Network geometry, Rician channel sampling and cascaded effective gains.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::kernel::{CMat, CVec, C64};

/// Radius of the user arcs around the surface (m).
pub const USER_RADIUS_M: f64 = 20.0;
pub const AP_POSITION: [f64; 2] = [-20.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Transmission half-space, group A.
    T,
    /// Reflection half-space, group B.
    R,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::T, Side::R];

    pub fn index(self) -> usize {
        match self {
            Side::T => 0,
            Side::R => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Energy,
    Uplink,
    Downlink,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Energy, Phase::Uplink, Phase::Downlink];

    pub fn tag(self) -> &'static str {
        match self {
            Phase::Energy => "e",
            Phase::Uplink => "u",
            Phase::Downlink => "d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub ap: [f64; 2],
    pub ris: [f64; 2],
    pub users: Vec<[f64; 2]>,
    pub sides: Vec<Side>,
}

impl Topology {
    /// Surface-to-user distance.
    pub fn user_distance(&self, k: usize) -> f64 {
        dist(self.ris, self.users[k])
    }

    pub fn ap_distance(&self) -> f64 {
        dist(self.ris, self.ap)
    }

    /// Users served from `side`.
    pub fn group(&self, side: Side) -> Vec<usize> {
        (0..self.users.len()).filter(|&k| self.sides[k] == side).collect()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn bearing(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

/// Surface at the origin, AP at (−20, 20), group A on the first-quadrant arc
/// and group B on the third-quadrant arc of radius 20 m.
pub fn generate_topology<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Topology {
    let mut users = Vec::with_capacity(config.users());
    let mut sides = Vec::with_capacity(config.users());
    for (count, base, side) in [(config.k_t, 0.0, Side::T), (config.k_r, PI, Side::R)] {
        for _ in 0..count {
            let theta = base + rng.random::<f64>() * FRAC_PI_2;
            users.push([USER_RADIUS_M * theta.cos(), USER_RADIUS_M * theta.sin()]);
            sides.push(side);
        }
    }
    Topology { ap: AP_POSITION, ris: [0.0, 0.0], users, sides }
}

/// `L0 · d^(−ρ)` with `L0` given in dB of attenuation at 1 m.
pub fn path_loss_linear(distance_m: f64, l0_db: f64, rho: f64) -> Result<f64> {
    if !(distance_m >= 1.0) {
        return Err(Error::Config(format!("distance {distance_m} m is below the 1 m reference")));
    }
    Ok(10f64.powf(-l0_db / 10.0) * distance_m.powf(-rho))
}

/// Thermal noise power over the configured bandwidth (W).
pub fn noise_power(config: &SystemConfig) -> f64 {
    10f64.powf((config.sigma0_dbm_per_hz + 10.0 * config.bandwidth_hz.log10() - 30.0) / 10.0)
}

/// Downlink noise power at each user (W).
pub fn user_noise(config: &SystemConfig) -> f64 {
    config.user_noise_w.unwrap_or_else(|| noise_power(config))
}

/// `beta[i][j] = ι_i / ι_j` from surface-to-user distances.
pub fn fairness_targets(topology: &Topology) -> Vec<Vec<f64>> {
    let d: Vec<f64> = (0..topology.users.len()).map(|k| topology.user_distance(k)).collect();
    d.iter().map(|di| d.iter().map(|dj| di / dj).collect()).collect()
}

/// Half-wavelength uniform linear array response.
pub fn steering(n: usize, angle: f64) -> CVec {
    CVec::from_fn(n, |i, _| C64::from_polar(1.0, PI * i as f64 * angle.sin()))
}

/// Channels of one phase. `g[k]` is the surface-to-user vector on the user's
/// own side; the opposite side is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseChannels {
    /// AP → surface, N×M.
    pub ap_ris: CMat,
    pub g: Vec<CVec>,
    pub sides: Vec<Side>,
}

impl PhaseChannels {
    pub fn n(&self) -> usize {
        self.ap_ris.nrows()
    }

    pub fn m(&self) -> usize {
        self.ap_ris.ncols()
    }

    pub fn users(&self) -> usize {
        self.g.len()
    }

    /// Surface-to-user vector of user `k` on `side` (zero on the far side).
    pub fn side_vector(&self, k: usize, side: Side) -> CVec {
        if self.sides[k] == side {
            self.g[k].clone()
        } else {
            CVec::zeros(self.n())
        }
    }

    /// `diag(g_k) G`, the N×M cascade seen by user `k` on its own side.
    pub fn cascade(&self, k: usize) -> CMat {
        let mut c = self.ap_ris.clone();
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row *= self.g[k][i];
        }
        c
    }

    /// Multiplies every channel by a common scalar.
    pub fn scaled(&self, s: f64) -> PhaseChannels {
        PhaseChannels {
            ap_ris: &self.ap_ris * C64::from(s),
            g: self.g.clone(),
            sides: self.sides.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub energy: PhaseChannels,
    pub uplink: PhaseChannels,
    pub downlink: PhaseChannels,
}

impl ChannelSet {
    pub fn phase(&self, phase: Phase) -> &PhaseChannels {
        match phase {
            Phase::Energy => &self.energy,
            Phase::Uplink => &self.uplink,
            Phase::Downlink => &self.downlink,
        }
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rician_weights(k: f64) -> (f64, f64) {
    if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    }
}

fn sample_phase<R: Rng + ?Sized>(topology: &Topology, config: &SystemConfig, rng: &mut R) -> Result<PhaseChannels> {
    let (n, m) = (config.n_elements, config.m_antennas);
    let (w_los, w_nlos) = rician_weights(config.rician_k);

    let l_ap = path_loss_linear(topology.ap_distance(), config.l0_db, config.rho_ap)?;
    let los = steering(n, bearing(topology.ris, topology.ap)) * steering(m, bearing(topology.ap, topology.ris)).adjoint();
    let mut ap_ris = CMat::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            let nlos = complex_gaussian(rng);
            ap_ris[(i, j)] = (los[(i, j)] * w_los + nlos * w_nlos) * l_ap.sqrt();
        }
    }

    let mut g = Vec::with_capacity(topology.users.len());
    for k in 0..topology.users.len() {
        let l = path_loss_linear(topology.user_distance(k), config.l0_db, config.rho_user)?;
        let a = steering(n, bearing(topology.ris, topology.users[k]));
        let v = CVec::from_fn(n, |i, _| {
            let nlos = complex_gaussian(rng);
            (a[i] * w_los + nlos * w_nlos) * l.sqrt()
        });
        g.push(v);
    }
    Ok(PhaseChannels { ap_ris, g, sides: topology.sides.clone() })
}

/// Independent Rician draws for the energy, uplink and downlink phases.
pub fn sample_channels<R: Rng + ?Sized>(topology: &Topology, config: &SystemConfig, rng: &mut R) -> Result<ChannelSet> {
    Ok(ChannelSet {
        energy: sample_phase(topology, config, rng)?,
        uplink: sample_phase(topology, config, rng)?,
        downlink: sample_phase(topology, config, rng)?,
    })
}

/// Row vector `φᴴ diag(g_k) G` of user `k` for surface vector `phi` on the
/// user's side.
pub fn effective_row(ch: &PhaseChannels, k: usize, phi: &CVec) -> CVec {
    let mut row = CVec::zeros(ch.m());
    for i in 0..ch.n() {
        let w = phi[i].conj() * ch.g[k][i];
        if w != C64::from(0.0) {
            for j in 0..ch.m() {
                row[j] += w * ch.ap_ris[(i, j)];
            }
        }
    }
    row
}

/// `z = Σ_Y |φ_Yᴴ diag(g_k^Y) G v|²`.
pub fn effective_gain(ch: &PhaseChannels, phi_t: &CVec, phi_r: &CVec, v: &CVec, k: usize) -> Result<f64> {
    let (n, m) = (ch.n(), ch.m());
    if phi_t.len() != n || phi_r.len() != n || v.len() != m || k >= ch.users() {
        return Err(Error::Dimension(format!(
            "gain of user {k}: phi {}/{}, v {}, channel {n}x{m} with {} users",
            phi_t.len(),
            phi_r.len(),
            v.len(),
            ch.users()
        )));
    }
    let phi = match ch.sides[k] {
        Side::T => phi_t,
        Side::R => phi_r,
    };
    Ok(effective_row(ch, k, phi).dot(v).norm_sqr())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixDump {
    pub rows: usize,
    pub cols: usize,
    /// Column-major `(re, im)` pairs.
    pub data: Vec<[f64; 2]>,
}

impl MatrixDump {
    fn from_mat(m: &CMat) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.iter().map(|z| [z.re, z.im]).collect() }
    }

    fn from_vec(v: &CVec) -> Self {
        Self { rows: v.len(), cols: 1, data: v.iter().map(|z| [z.re, z.im]).collect() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseDump {
    pub phase: String,
    pub ap_ris: MatrixDump,
    pub g_t: Vec<MatrixDump>,
    pub g_r: Vec<MatrixDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelDump {
    pub trial: u64,
    pub topology: Topology,
    pub phases: Vec<PhaseDump>,
}

impl ChannelDump {
    pub fn new(trial: u64, topology: &Topology, set: &ChannelSet) -> Self {
        let phases = Phase::ALL
            .iter()
            .map(|&p| {
                let ch = set.phase(p);
                let side = |s| (0..ch.users()).map(|k| MatrixDump::from_vec(&ch.side_vector(k, s))).collect();
                PhaseDump {
                    phase: p.tag().to_string(),
                    ap_ris: MatrixDump::from_mat(&ch.ap_ris),
                    g_t: side(Side::T),
                    g_r: side(Side::R),
                }
            })
            .collect();
        Self { trial, topology: topology.clone(), phases }
    }
}
