//! Self-checks behind the `validate` command: a kernel oracle, plan
//! validity, the transfer-power grid, scan-order consistency and BCD
//! monotonicity on a few trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alloc::{allocate, total_energy, verify_theorem1, AllocOptions};
use crate::config::{Scenario, SystemConfig};
use crate::error::Result;
use crate::kernel::{solve_sdp, CMat, Coeff, Relation, ScanOrder, SdpOptions, SdpProblem, C64};
use crate::sim::{convergence_trace, PreparedTrial};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Feasible (trial, scenario) pairs out of those attempted.
    pub feasible: usize,
    pub attempted: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `max Re Tr(C X)` with `Tr X = 1` on random 2x2 instances against a grid
/// over the rank-one boundary.
pub fn sdp_grid_check(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut gap = 0.0f64;
    let mut failed = None;
    for _ in 0..instances {
        let mut entry = || C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
        let (a, b, off) = (entry().re, entry().re, entry());
        let c = CMat::from_row_slice(2, 2, &[C64::from(a), off, off.conj(), C64::from(b)]);
        let mut p = SdpProblem::new();
        let x = p.add_block(2);
        p.maximize(x, Coeff::Dense(c.clone()));
        p.constrain(vec![(x, Coeff::identity(2))], Relation::Eq, 1.0);
        match solve_sdp(&p, &SdpOptions::default()) {
            Ok(sol) => {
                let mut best = f64::NEG_INFINITY;
                for i in 0..=400 {
                    let s = i as f64 / 400.0;
                    let r = (s * (1.0 - s)).sqrt();
                    for j in 0..720 {
                        let z = C64::from_polar(r, j as f64 * std::f64::consts::TAU / 720.0);
                        best = best.max(a * s + b * (1.0 - s) + 2.0 * (off * z.conj()).re);
                    }
                }
                worst = worst.max((sol.objective - best).abs());
                gap = gap.max(sol.gap);
            }
            Err(e) => failed = Some(e.to_string()),
        }
    }
    let passed = failed.is_none() && worst <= 1e-3 && gap <= 1e-6;
    let detail = failed.unwrap_or_else(|| format!("{instances} instances, max error {worst:.2e}, max gap {gap:.2e}"));
    Check { name: "sdp grid oracle", passed, detail }
}

/// Runs every check on trials `0..trials` of `config`.
pub fn validate(config: &SystemConfig, trials: u64) -> Result<ValidationReport> {
    config.validate()?;
    let mut checks = vec![sdp_grid_check(10, config.seed)];
    let tol = 2.0 * config.eps * config.p_max_w;
    let (mut feasible, mut attempted) = (0, 0);
    let (mut plan_bad, mut thm1_bad, mut order_bad, mut mono_bad) = (vec![], vec![], vec![], vec![]);
    let grid: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|f| f * config.p_max_w).collect();
    for index in 0..trials {
        let prepared = PreparedTrial::new(config, &Scenario::ALL, index)?;
        let workload = prepared.workload(config);
        for &s in &Scenario::ALL {
            attempted += 1;
            let Some(g) = prepared.gains_for(s) else { continue };
            let Ok(plan) = allocate(g, s, &workload, config, AllocOptions::default()) else { continue };
            feasible += 1;
            let tag = format!("trial {index} {s}");
            let v = plan.violations(g, &workload, config);
            if !v.is_empty() {
                plan_bad.push(format!("{tag}: {}", v.join("; ")));
            }
            let report = verify_theorem1(g, s, &workload, config, &grid);
            if !report.violations.is_empty() {
                thm1_bad.push(format!("{tag}: {}", report.violations.join("; ")));
            }
            let e = total_energy(&plan, config).total_j;
            let reversed = AllocOptions { order: ScanOrder::Reverse, ..Default::default() };
            match allocate(g, s, &workload, config, reversed) {
                Ok(p) if (total_energy(&p, config).total_j - e).abs() <= tol => {}
                Ok(p) => order_bad.push(format!("{tag}: {e} J vs {} J", total_energy(&p, config).total_j)),
                Err(err) => order_bad.push(format!("{tag}: reversed scan failed: {err}")),
            }
        }
        for s in [Scenario::TsTs, Scenario::EsEs] {
            let rows = convergence_trace(config, s, index)?;
            for w in rows.windows(2) {
                if w[0].phase == w[1].phase && w[1].objective < w[0].objective {
                    mono_bad.push(format!("trial {index} {s} {} iteration {}", w[1].phase, w[1].iteration));
                }
            }
        }
    }
    let summarise = |name: &'static str, bad: Vec<String>| Check {
        name,
        passed: bad.is_empty(),
        detail: if bad.is_empty() { format!("{feasible} feasible plans") } else { bad.join(" | ") },
    };
    checks.push(summarise("plan constraints", plan_bad));
    checks.push(summarise("full transfer power", thm1_bad));
    checks.push(summarise("scan order", order_bad));
    checks.push(Check {
        name: "bcd monotone",
        passed: mono_bad.is_empty(),
        detail: if mono_bad.is_empty() { format!("{trials} trials") } else { mono_bad.join(" | ") },
    });
    Ok(ValidationReport { checks, feasible, attempted })
}
