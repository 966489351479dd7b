//! System parameters, scenario labels and config-file loading.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// STAR-RIS operating protocol for one transmission phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceMode {
    /// Energy splitting: every element serves both sides, `|φᵗ|² + |φʳ|² = 1`.
    Es,
    /// Time switching: all elements serve one side per time slot.
    Ts,
    /// Conventional RIS pair: half the elements reflect-only, half transmit-only.
    Conv,
}

/// Uplink/downlink protocol pairing evaluated by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "ES-ES")]
    EsEs,
    #[serde(rename = "ES-TS")]
    EsTs,
    #[serde(rename = "TS-ES")]
    TsEs,
    #[serde(rename = "TS-TS")]
    TsTs,
    #[serde(rename = "CONV")]
    Conv,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::TsTs,
        Scenario::TsEs,
        Scenario::EsTs,
        Scenario::EsEs,
        Scenario::Conv,
    ];

    pub fn uplink(self) -> SurfaceMode {
        match self {
            Scenario::EsEs | Scenario::EsTs => SurfaceMode::Es,
            Scenario::TsEs | Scenario::TsTs => SurfaceMode::Ts,
            Scenario::Conv => SurfaceMode::Conv,
        }
    }

    pub fn downlink(self) -> SurfaceMode {
        match self {
            Scenario::EsEs | Scenario::TsEs => SurfaceMode::Es,
            Scenario::EsTs | Scenario::TsTs => SurfaceMode::Ts,
            Scenario::Conv => SurfaceMode::Conv,
        }
    }

    /// Mode used during wireless power transfer.
    pub fn energy(self) -> SurfaceMode {
        match self {
            Scenario::Conv => SurfaceMode::Conv,
            _ => SurfaceMode::Es,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::EsEs => "ES-ES",
            Scenario::EsTs => "ES-TS",
            Scenario::TsEs => "TS-ES",
            Scenario::TsTs => "TS-TS",
            Scenario::Conv => "CONV",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "ES-ES" => Ok(Scenario::EsEs),
            "ES-TS" => Ok(Scenario::EsTs),
            "TS-ES" => Ok(Scenario::TsEs),
            "TS-TS" => Ok(Scenario::TsTs),
            "CONV" | "CONV-RIS" | "CONVENTIONAL" => Ok(Scenario::Conv),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// All scalar parameters of one simulated network plus numerical knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Users in group A (transmission side).
    pub k_t: usize,
    /// Users in group B (reflection side).
    pub k_r: usize,
    /// STAR-RIS elements.
    pub n_elements: usize,
    /// AP antennas.
    pub m_antennas: usize,
    /// AP power cap (W).
    pub p_max_w: f64,
    /// Per-user transmit power cap (W).
    pub p_user_max_w: f64,
    /// Round deadline (s).
    pub t_total_s: f64,
    pub bandwidth_hz: f64,
    /// Energy conversion efficiency.
    pub eta: f64,
    /// CPU energy coefficient (J·s²/cycle³).
    pub a_cpu: f64,
    /// Computational complexity (cycles/bit).
    pub c_cycles_per_bit: f64,
    /// Path-loss exponent of the AP↔RIS link.
    pub rho_ap: f64,
    /// Path-loss exponent of the RIS↔user links.
    pub rho_user: f64,
    /// Path loss at the 1 m reference distance (dB).
    pub l0_db: f64,
    /// Rician factor (linear); `inf` gives pure line of sight.
    pub rician_k: f64,
    pub sigma0_dbm_per_hz: f64,
    /// Range of per-user local data sizes (bits), drawn uniformly per trial.
    pub l_local_bits: [f64; 2],
    /// Range of per-user model-update sizes (bits), drawn uniformly per trial.
    pub l_up_bits: [f64; 2],
    /// Global model size (bits).
    pub l_down_bits: f64,
    /// Search grid step and termination tolerance.
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    /// Gaussian randomization candidates per rank-one recovery.
    pub randomization_candidates: usize,
    pub bcd_max_iterations: usize,
    /// Damping of the uplink-time fixed point (1 = undamped).
    pub uplink_damping: f64,
    /// Per-user downlink noise power (W); `None` uses the thermal noise power.
    pub user_noise_w: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::table3()
    }
}

impl SystemConfig {
    /// Full-scale default parameters.
    pub fn table3() -> Self {
        Self {
            k_t: 4,
            k_r: 4,
            n_elements: 60,
            m_antennas: 4,
            p_max_w: 10.0,
            p_user_max_w: 0.1,
            t_total_s: 10.0,
            bandwidth_hz: 2e6,
            eta: 0.8,
            a_cpu: 1e-28,
            c_cycles_per_bit: 300.0,
            rho_ap: 3.0,
            rho_user: 3.5,
            l0_db: 30.0,
            rician_k: 5.0,
            sigma0_dbm_per_hz: -174.0,
            l_local_bits: [0.1e6, 1e6],
            l_up_bits: [1e3, 10e3],
            l_down_bits: 1e6,
            eps: 1e-5,
            trials: 1000,
            seed: 1,
            randomization_candidates: 200,
            bcd_max_iterations: 50,
            uplink_damping: 1.0,
            user_noise_w: None,
        }
    }

    /// Reduced profile that fits a desk-top run budget. Path loss and CPU
    /// constant are recalibrated so that harvesting can power the users:
    /// at the table values the cascaded gain is near 1e-14 and no trial is
    /// feasible.
    pub fn desk() -> Self {
        Self {
            k_t: 2,
            k_r: 2,
            n_elements: 16,
            m_antennas: 2,
            eps: 1e-4,
            trials: 50,
            l0_db: 5.0,
            a_cpu: 1e-33,
            ..Self::table3()
        }
    }

    pub fn users(&self) -> usize {
        self.k_t + self.k_r
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.k_t == 0 || self.k_r == 0 {
            return bad("k_t and k_r must be at least 1");
        }
        if self.n_elements == 0 || self.m_antennas == 0 {
            return bad("n_elements and m_antennas must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        let positive = [
            ("p_max_w", self.p_max_w),
            ("p_user_max_w", self.p_user_max_w),
            ("t_total_s", self.t_total_s),
            ("bandwidth_hz", self.bandwidth_hz),
            ("a_cpu", self.a_cpu),
            ("c_cycles_per_bit", self.c_cycles_per_bit),
            ("l_down_bits", self.l_down_bits),
            ("eps", self.eps),
            ("rho_ap", self.rho_ap),
            ("rho_user", self.rho_user),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        for (name, r) in [("l_local_bits", self.l_local_bits), ("l_up_bits", self.l_up_bits)] {
            if !(r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive [min, max] range")));
            }
        }
        if self.rician_k < 0.0 || self.rician_k.is_nan() {
            return bad("rician_k must be nonnegative");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.randomization_candidates == 0 {
            return bad("randomization_candidates must be at least 1");
        }
        if self.bcd_max_iterations == 0 {
            return bad("bcd_max_iterations must be at least 1");
        }
        if !(self.uplink_damping > 0.0 && self.uplink_damping <= 1.0) {
            return bad("uplink_damping must lie in (0, 1]");
        }
        if let Some(s) = self.user_noise_w {
            if !(s > 0.0) {
                return bad("user_noise_w must be positive");
            }
        }
        Ok(())
    }

    /// Parses a TOML config. A `profile = "desk" | "table3"` key selects the
    /// base values; every other key overrides one field. Unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let base = match table.remove("profile") {
            None => Self::table3(),
            Some(toml::Value::String(p)) => Self::profile(&p)?,
            Some(_) => return Err(Error::Config("profile must be a string".into())),
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in table {
            if !merged.contains_key(&k) && k != "user_noise_w" {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            merged.insert(k, v);
        }
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "table3" => Ok(Self::table3()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table3_defaults() {
        let c = SystemConfig::table3();
        assert_eq!((c.k_t, c.k_r, c.n_elements, c.m_antennas), (4, 4, 60, 4));
        assert_eq!(c.p_max_w, 10.0);
        assert_eq!(c.p_user_max_w, 0.1);
        assert_eq!(c.t_total_s, 10.0);
        assert_eq!(c.bandwidth_hz, 2e6);
        assert_eq!(c.l0_db, 30.0);
        assert_eq!(c.c_cycles_per_bit, 300.0);
        assert_eq!(c.rician_k, 5.0);
        assert_eq!(c.eta, 0.8);
        assert_eq!(c.sigma0_dbm_per_hz, -174.0);
        assert_eq!(c.a_cpu, 1e-28);
        assert_eq!(c.l_down_bits, 1e6);
        c.validate().unwrap();
    }

    #[test]
    fn toml_overrides_and_rejects_unknown() {
        let c = SystemConfig::from_toml_str("profile = \"desk\"\neta = 0.6\n").unwrap();
        assert_eq!(c.eta, 0.6);
        assert_eq!(c.n_elements, 16);
        let err = SystemConfig::from_toml_str("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        assert!(SystemConfig::from_toml_str("eta = 1.5\n").is_err());
    }

    #[test]
    fn roundtrip_through_toml() {
        let c = SystemConfig::desk();
        let back = SystemConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn scenario_names() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("XX".parse::<Scenario>().is_err());
    }
}
