//! Monte-Carlo trials, parameter sweeps and result files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{allocate, total_energy, AllocOptions, EnergyBreakdown, ResourcePlan, Workload};
use crate::beamphase::{
    optimize_downlink, optimize_energy_phase, optimize_uplink, BcdRecord, GainSummary, PhaseSolution,
};
use crate::channel::{fairness_targets, generate_topology, sample_channels, ChannelSet, Phase, Topology};
use crate::config::{Scenario, SurfaceMode, SystemConfig};
use crate::error::{Error, Result};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "STARFL_WORKERS";

/// Everything drawn at random for one trial index. Scenarios evaluated on
/// the same index share these draws.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    pub index: u64,
    pub topology: Topology,
    pub channels: ChannelSet,
    pub beta: Vec<Vec<f64>>,
    pub workload: Workload,
}

fn stream(seed: u64, index: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

impl TrialInputs {
    pub fn draw(config: &SystemConfig, index: u64) -> Result<Self> {
        let mut rng = stream(config.seed, index, 0);
        let topology = generate_topology(config, &mut rng);
        let channels = sample_channels(&topology, config, &mut rng)?;
        let mut work_rng = stream(config.seed, index, 1);
        let workload = Workload::draw(config, &mut work_rng);
        let beta = fairness_targets(&topology);
        Ok(Self { index, topology, channels, beta, workload })
    }

    /// Workload under `config`, drawn from this trial's workload stream.
    pub fn workload_for(&self, config: &SystemConfig) -> Workload {
        Workload::draw(config, &mut stream(config.seed, self.index, 1))
    }
}

/// Lazily optimised surface/beam solutions keyed by phase and mode, so
/// scenarios on one trial reuse shared phases.
pub struct BlockA<'a> {
    inputs: &'a TrialInputs,
    config: &'a SystemConfig,
    cache: HashMap<(Phase, SurfaceMode), PhaseSolution>,
}

impl<'a> BlockA<'a> {
    pub fn new(inputs: &'a TrialInputs, config: &'a SystemConfig) -> Self {
        Self { inputs, config, cache: HashMap::new() }
    }

    pub fn solution(&mut self, phase: Phase, mode: SurfaceMode) -> Result<&PhaseSolution> {
        if !self.cache.contains_key(&(phase, mode)) {
            let salt = 16 + 4 * phase as u64 + mode as u64;
            let mut rng = stream(self.config.seed, self.inputs.index, salt);
            let ch = self.inputs.channels.phase(phase);
            let beta = &self.inputs.beta;
            let sol = match phase {
                Phase::Energy => optimize_energy_phase(ch, beta, self.config, mode, &mut rng)?,
                Phase::Uplink => optimize_uplink(ch, beta, self.config, mode, &mut rng)?,
                Phase::Downlink => optimize_downlink(ch, beta, self.config, mode, &mut rng)?,
            };
            self.cache.insert((phase, mode), sol);
        }
        Ok(&self.cache[&(phase, mode)])
    }

    pub fn gains(&mut self, scenario: Scenario) -> Result<GainSummary> {
        let modes = [scenario.energy(), scenario.uplink(), scenario.downlink()];
        for (phase, mode) in Phase::ALL.into_iter().zip(modes) {
            self.solution(phase, mode)?;
        }
        let ch = &self.inputs.channels;
        let get = |phase: Phase, mode| (ch.phase(phase), &self.cache[&(phase, mode)]);
        GainSummary::evaluate(
            get(Phase::Energy, modes[0]),
            get(Phase::Uplink, modes[1]),
            get(Phase::Downlink, modes[2]),
            self.config,
        )
    }

    pub fn iterations(&self, scenario: Scenario) -> [usize; 3] {
        let modes = [scenario.energy(), scenario.uplink(), scenario.downlink()];
        let mut out = [0; 3];
        for (i, (phase, mode)) in Phase::ALL.into_iter().zip(modes).enumerate() {
            out[i] = self.cache.get(&(phase, mode)).map_or(0, |s| s.trace.len());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scenario: Scenario,
    pub seed: u64,
    pub trial: u64,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub energy: Option<EnergyBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<ResourcePlan>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    /// BCD rounds for the energy, uplink and downlink phases.
    pub bcd_iterations: [usize; 3],
    pub wall_time_s: f64,
}

impl TrialResult {
    pub fn total_j(&self) -> Option<f64> {
        self.energy.as_ref().map(|e| e.total_j)
    }
}

/// Allocation step for one scenario on prepared gains.
pub fn finish_trial(
    config: &SystemConfig,
    scenario: Scenario,
    index: u64,
    gains: &GainSummary,
    workload: &Workload,
    bcd_iterations: [usize; 3],
    started: Instant,
) -> TrialResult {
    let outcome = allocate(gains, scenario, workload, config, AllocOptions::default());
    let (feasible, energy, plan, reason) = match outcome {
        Ok(plan) => (true, Some(total_energy(&plan, config)), Some(plan), None),
        Err(e) => (false, None, None, Some(e.to_string())),
    };
    TrialResult {
        scenario,
        seed: config.seed,
        trial: index,
        feasible,
        energy,
        plan,
        reason,
        bcd_iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

/// Runs several scenarios on one trial index, sharing draws and phases.
pub fn run_trial_scenarios(config: &SystemConfig, scenarios: &[Scenario], index: u64) -> Result<Vec<TrialResult>> {
    Ok(PreparedTrial::new(config, scenarios, index)?.allocate_all(config))
}

pub fn run_trial(config: &SystemConfig, scenario: Scenario, index: u64) -> Result<TrialResult> {
    Ok(run_trial_scenarios(config, &[scenario], index)?.remove(0))
}

/// Parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    K,
    N,
    M,
    #[serde(rename = "eta")]
    Eta,
    #[serde(rename = "P_max")]
    PMax,
    T,
    #[serde(rename = "C_k")]
    Ck,
    #[serde(rename = "L_local")]
    LLocal,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "K",
            SweepParam::N => "N",
            SweepParam::M => "M",
            SweepParam::Eta => "eta",
            SweepParam::PMax => "P_max",
            SweepParam::T => "T",
            SweepParam::Ck => "C_k",
            SweepParam::LLocal => "L_local",
        }
    }

    /// Whether the value changes the surface/beam optimisation.
    pub fn touches_block_a(self) -> bool {
        matches!(self, SweepParam::K | SweepParam::N | SweepParam::M)
    }

    /// Config with this parameter set to `value`. `K` sets both group sizes,
    /// `L_local` (bits) pins every user's local data size.
    pub fn apply(self, config: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut c = config.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepParam::K => {
                c.k_t = count()?;
                c.k_r = c.k_t;
            }
            SweepParam::N => c.n_elements = count()?,
            SweepParam::M => c.m_antennas = count()?,
            SweepParam::Eta => c.eta = value,
            SweepParam::PMax => c.p_max_w = value,
            SweepParam::T => c.t_total_s = value,
            SweepParam::Ck => c.c_cycles_per_bit = value,
            SweepParam::LLocal => c.l_local_bits = [value, value],
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub scenarios: Vec<Scenario>,
    pub trials: usize,
    /// Base config file, resolved relative to the spec file.
    #[serde(default)]
    pub base: Option<PathBuf>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("sweep needs at least one scenario".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("sweep needs at least one trial".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a spec and its base config (the desk profile when none is named).
    pub fn load(path: &Path) -> Result<(Self, SystemConfig)> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let spec = Self::from_toml_str(&text)?;
        let config = match &spec.base {
            Some(base) => {
                let resolved = path.parent().map_or_else(|| base.clone(), |dir| dir.join(base));
                SystemConfig::load(&resolved)?
            }
            None => SystemConfig::desk(),
        };
        Ok((spec, config))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub scenario: Scenario,
    #[serde(rename = "mean_energy_J")]
    pub mean_energy_j: Option<f64>,
    #[serde(rename = "stderr_J")]
    pub stderr_j: Option<f64>,
    pub infeasible_rate: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Per-trial records as `(value, result)`, sorted by value, trial, scenario.
    pub trials: Vec<(f64, TrialResult)>,
}

/// Mean and standard error of the feasible energies.
pub fn summarize(results: &[&TrialResult]) -> (Option<f64>, Option<f64>, f64) {
    let energies: Vec<f64> = results.iter().filter_map(|r| r.total_j()).collect();
    let n = energies.len();
    let infeasible = (results.len() - n) as f64 / results.len().max(1) as f64;
    if n == 0 {
        return (None, None, infeasible);
    }
    let mean = energies.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(stderr), infeasible)
}

/// Thread pool honouring the worker-count override.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v} is not a count")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

/// Prefix of the reason recorded when the surface/beam step fails numerically.
pub const BLOCK_A_FAILURE: &str = "beam/phase optimisation failed";

/// Surface/beam results of one trial for a list of scenarios, ready for
/// any number of allocation runs under configs that leave them unchanged.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub inputs: TrialInputs,
    pub scenarios: Vec<Scenario>,
    /// Gains per scenario, or why the surface/beam optimisation failed.
    pub gains: Vec<std::result::Result<GainSummary, String>>,
    pub iterations: Vec<[usize; 3]>,
    pub optimize_time_s: Vec<f64>,
}

impl PreparedTrial {
    pub fn new(config: &SystemConfig, scenarios: &[Scenario], index: u64) -> Result<Self> {
        let inputs = TrialInputs::draw(config, index)?;
        let mut gains = Vec::new();
        let mut iterations = Vec::new();
        let mut optimize_time_s = Vec::new();
        {
            let mut block = BlockA::new(&inputs, config);
            for &scenario in scenarios {
                let started = Instant::now();
                gains.push(block.gains(scenario).map_err(|e| format!("{BLOCK_A_FAILURE}: {e}")));
                iterations.push(block.iterations(scenario));
                optimize_time_s.push(started.elapsed().as_secs_f64());
            }
        }
        Ok(Self { inputs, scenarios: scenarios.to_vec(), gains, iterations, optimize_time_s })
    }

    /// Workload under `config`, drawn from the same stream as the inputs.
    pub fn workload(&self, config: &SystemConfig) -> Workload {
        self.inputs.workload_for(config)
    }

    pub fn gains_for(&self, scenario: Scenario) -> Option<&GainSummary> {
        let i = self.scenarios.iter().position(|&s| s == scenario)?;
        self.gains[i].as_ref().ok()
    }

    /// Allocation for every prepared scenario under `config`.
    pub fn allocate_all(&self, config: &SystemConfig) -> Vec<TrialResult> {
        let workload = self.workload(config);
        (0..self.scenarios.len())
            .map(|i| {
                let started = Instant::now();
                let mut r = match &self.gains[i] {
                    Ok(g) => finish_trial(config, self.scenarios[i], self.inputs.index, g, &workload, self.iterations[i], started),
                    Err(reason) => TrialResult {
                        scenario: self.scenarios[i],
                        seed: config.seed,
                        trial: self.inputs.index,
                        feasible: false,
                        energy: None,
                        plan: None,
                        reason: Some(reason.clone()),
                        bcd_iterations: self.iterations[i],
                        wall_time_s: 0.0,
                    },
                };
                r.wall_time_s += self.optimize_time_s[i];
                r
            })
            .collect()
    }
}

/// All scenarios for every value on one trial index. Surface and beam
/// solutions are shared across values the parameter does not affect.
fn sweep_trial(spec: &SweepSpec, base: &SystemConfig, index: u64) -> Result<Vec<(f64, TrialResult)>> {
    let mut out = Vec::new();
    if spec.param.touches_block_a() {
        for &value in &spec.values {
            let config = spec.param.apply(base, value)?;
            for r in run_trial_scenarios(&config, &spec.scenarios, index)? {
                out.push((value, r));
            }
        }
        return Ok(out);
    }
    let prepared = PreparedTrial::new(base, &spec.scenarios, index)?;
    for &value in &spec.values {
        let config = spec.param.apply(base, value)?;
        out.extend(prepared.allocate_all(&config).into_iter().map(|r| (value, r)));
    }
    Ok(out)
}

pub fn run_sweep(spec: &SweepSpec, base: &SystemConfig) -> Result<SweepOutput> {
    spec.validate()?;
    for &v in &spec.values {
        spec.param.apply(base, v)?;
    }
    let pool = worker_pool()?;
    let per_trial: Vec<Vec<(f64, TrialResult)>> =
        pool.install(|| (0..spec.trials as u64).into_par_iter().map(|i| sweep_trial(spec, base, i)).collect::<Result<_>>())?;
    let mut trials: Vec<(f64, TrialResult)> = per_trial.into_iter().flatten().collect();
    let rank = |s: Scenario| spec.scenarios.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    trials.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.trial.cmp(&b.1.trial)).then(rank(a.1.scenario).cmp(&rank(b.1.scenario))));

    let mut rows = Vec::new();
    for &value in &spec.values {
        for &scenario in &spec.scenarios {
            let group: Vec<&TrialResult> =
                trials.iter().filter(|(v, r)| *v == value && r.scenario == scenario).map(|(_, r)| r).collect();
            let (mean, stderr, infeasible_rate) = summarize(&group);
            rows.push(SweepRow {
                param: spec.param.name().to_string(),
                value,
                scenario,
                mean_energy_j: mean,
                stderr_j: stderr,
                infeasible_rate,
                trials: group.len(),
            });
        }
    }
    Ok(SweepOutput { rows, trials })
}

pub const SWEEP_HEADER: &str = "param,value,scenario,mean_energy_J,stderr_J,infeasible_rate,trials";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io { path: path.display().to_string(), source: std::io::Error::other(e) }
}

/// Serialises rows as CSV with a header line into any sink.
pub fn write_csv<W: std::io::Write, T: Serialize>(sink: W, rows: &[T]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    w.flush()
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_csv(std::io::BufWriter::new(file), rows).map_err(io_err(path))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv_file(path, rows)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

#[derive(Serialize)]
struct TrialLine<'a> {
    param: &'a str,
    value: f64,
    #[serde(flatten)]
    result: &'a TrialResult,
}

/// One JSON object per line per trial.
pub fn write_trials_jsonl(path: &Path, param: &str, trials: &[(f64, TrialResult)]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for (value, result) in trials {
        let line = serde_json::to_string(&TrialLine { param, value: *value, result })
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e.into() })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub phase: String,
    pub mode: String,
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

/// BCD traces of every phase a scenario uses on one trial.
pub fn convergence_trace(config: &SystemConfig, scenario: Scenario, index: u64) -> Result<Vec<ConvergenceRow>> {
    let inputs = TrialInputs::draw(config, index)?;
    let mut block = BlockA::new(&inputs, config);
    let modes = [scenario.energy(), scenario.uplink(), scenario.downlink()];
    let mut rows = Vec::new();
    for (phase, mode) in Phase::ALL.into_iter().zip(modes) {
        let sol = block.solution(phase, mode)?;
        rows.extend(sol.trace.iter().map(|r: &BcdRecord| ConvergenceRow {
            phase: phase.tag().to_string(),
            mode: format!("{mode:?}").to_uppercase(),
            iteration: r.iteration,
            objective: r.objective,
            residual: r.residual,
        }));
    }
    Ok(rows)
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    write_csv_file(path, rows)
}

/// Fresh 64-bit seed from a trial stream, for callers needing their own RNG.
pub fn trial_seed(config: &SystemConfig, index: u64, salt: u64) -> u64 {
    stream(config.seed, index, salt).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(energy: Option<f64>) -> TrialResult {
        TrialResult {
            scenario: Scenario::EsEs,
            seed: 1,
            trial: 0,
            feasible: energy.is_some(),
            energy: energy.map(|e| EnergyBreakdown { harvest_j: e, downlink_j: 0.0, total_j: e, user_consumed_j: vec![] }),
            plan: None,
            reason: None,
            bcd_iterations: [0; 3],
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn summary_statistics() {
        let rs = [result(Some(1.0)), result(Some(2.0)), result(Some(3.0)), result(None)];
        let refs: Vec<&TrialResult> = rs.iter().collect();
        let (mean, se, bad) = summarize(&refs);
        assert_eq!(mean, Some(2.0));
        assert!((se.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(bad, 0.25);
        assert_eq!(summarize(&refs[3..]), (None, None, 1.0));
        assert_eq!(summarize(&refs[..1]), (Some(1.0), Some(0.0), 0.0));
    }

    #[test]
    fn sweep_spec_parsing() {
        let spec = SweepSpec::from_toml_str("param = \"P_max\"\nvalues = [5, 10, 20]\nscenarios = [\"TS-TS\", \"CONV\"]\ntrials = 3\n").unwrap();
        assert_eq!(spec.param, SweepParam::PMax);
        assert_eq!(spec.scenarios, vec![Scenario::TsTs, Scenario::Conv]);
        assert!(spec.base.is_none());
        for bad in [
            "param = \"N\"\nvalues = [16, 8]\nscenarios = [\"TS-TS\"]\ntrials = 1\n",
            "param = \"N\"\nvalues = []\nscenarios = [\"TS-TS\"]\ntrials = 1\n",
            "param = \"N\"\nvalues = [8]\nscenarios = []\ntrials = 1\n",
            "param = \"N\"\nvalues = [8]\nscenarios = [\"TS-TS\"]\ntrials = 0\n",
            "param = \"Q\"\nvalues = [8]\nscenarios = [\"TS-TS\"]\ntrials = 1\n",
            "param = \"N\"\nvalues = [8]\nscenarios = [\"TS-TS\"]\ntrials = 1\ncolour = 2\n",
        ] {
            assert!(matches!(SweepSpec::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn sweep_parameters_edit_config() {
        let base = SystemConfig::desk();
        let c = SweepParam::K.apply(&base, 3.0).unwrap();
        assert_eq!((c.k_t, c.k_r), (3, 3));
        assert_eq!(SweepParam::LLocal.apply(&base, 5e5).unwrap().l_local_bits, [5e5, 5e5]);
        assert_eq!(SweepParam::T.apply(&base, 12.0).unwrap().t_total_s, 12.0);
        assert!(SweepParam::N.apply(&base, 8.5).is_err());
        assert!(SweepParam::Eta.apply(&base, 1.5).is_err());
        assert!(SweepParam::K.touches_block_a() && !SweepParam::Ck.touches_block_a());
    }

    #[test]
    fn sweep_csv_roundtrip() {
        let path = std::env::temp_dir().join(format!("starfl-sweep-{}.csv", std::process::id()));
        let rows = vec![
            SweepRow {
                param: "N".into(),
                value: 8.0,
                scenario: Scenario::TsTs,
                mean_energy_j: Some(0.125),
                stderr_j: Some(0.01),
                infeasible_rate: 0.5,
                trials: 2,
            },
            SweepRow {
                param: "N".into(),
                value: 8.0,
                scenario: Scenario::Conv,
                mean_energy_j: None,
                stderr_j: None,
                infeasible_rate: 1.0,
                trials: 2,
            },
        ];
        write_sweep_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER);
        assert_eq!(read_sweep_csv(&path).unwrap(), rows);
        std::fs::remove_file(&path).unwrap();
        assert!(matches!(read_sweep_csv(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let c = SystemConfig::desk();
        assert_eq!(trial_seed(&c, 3, 0), trial_seed(&c, 3, 0));
        assert_ne!(trial_seed(&c, 3, 0), trial_seed(&c, 4, 0));
        assert_ne!(trial_seed(&c, 3, 0), trial_seed(&c, 3, 1));
        let a = TrialInputs::draw(&c, 2).unwrap();
        let b = TrialInputs::draw(&c, 2).unwrap();
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.workload, b.workload);
        let prepared = PreparedTrial::new(&c, &[], 2).unwrap();
        assert_eq!(prepared.workload(&c), a.workload);
    }
}
