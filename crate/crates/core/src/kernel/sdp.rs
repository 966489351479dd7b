//! Primal-dual interior point method (HKM direction with a Mehrotra
//! corrector) for Hermitian SDPs with block structure.

use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{hermitian_asymmetry, hermitize, re_trace_product, CMat, C64};
use crate::error::{Error, Result};

/// Coefficient of one block in a linear form `Re Tr(A X)`.
#[derive(Debug, Clone)]
pub enum Coeff {
    /// Hermitian dense matrix.
    Dense(CMat),
    /// Sparse diagonal `(index, value)` entries.
    Diag(Vec<(usize, f64)>),
}

impl Coeff {
    pub fn scalar(a: f64) -> Self {
        Coeff::Diag(vec![(0, a)])
    }

    pub fn entry(i: usize, a: f64) -> Self {
        Coeff::Diag(vec![(i, a)])
    }

    pub fn identity(n: usize) -> Self {
        Coeff::Diag((0..n).map(|i| (i, 1.0)).collect())
    }

    fn eval(&self, x: &CMat) -> f64 {
        match self {
            Coeff::Dense(a) => re_trace_product(a, x),
            Coeff::Diag(d) => d.iter().map(|&(i, a)| a * x[(i, i)].re).sum(),
        }
    }

    fn add_to(&self, out: &mut CMat, w: f64) {
        match self {
            Coeff::Dense(a) => *out += a * C64::from(w),
            Coeff::Diag(d) => {
                for &(i, a) in d {
                    out[(i, i)].re += w * a;
                }
            }
        }
    }

    fn norm_sq(&self) -> f64 {
        match self {
            Coeff::Dense(a) => a.norm_squared(),
            Coeff::Diag(d) => d.iter().map(|(_, a)| a * a).sum(),
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            Coeff::Dense(a) => *a *= C64::from(s),
            Coeff::Diag(d) => d.iter_mut().for_each(|(_, a)| *a *= s),
        }
    }

    /// `X A Z` for Hermitian `X`, `Z`.
    fn sandwich(&self, x: &CMat, z: &CMat) -> CMat {
        match self {
            Coeff::Dense(a) => x * a * z,
            Coeff::Diag(d) => {
                let n = x.nrows();
                let mut out = CMat::zeros(n, n);
                for &(p, a) in d {
                    let col = x.column(p) * C64::from(a);
                    out.ger(C64::from(1.0), &col, &z.row(p).transpose(), C64::from(1.0));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

type Terms = Vec<(usize, Coeff)>;

/// A maximisation problem over Hermitian PSD blocks. Scalar nonnegative
/// variables are 1x1 blocks.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    dims: Vec<usize>,
    objective: Terms,
    constraints: Vec<(Terms, Relation, f64)>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, dim: usize) -> usize {
        self.dims.push(dim);
        self.dims.len() - 1
    }

    pub fn add_scalar(&mut self) -> usize {
        self.add_block(1)
    }

    pub fn maximize(&mut self, block: usize, coeff: Coeff) {
        self.objective.push((block, coeff));
    }

    pub fn constrain(&mut self, terms: Vec<(usize, Coeff)>, relation: Relation, rhs: f64) {
        self.constraints.push((terms, relation, rhs));
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Objective value of a candidate.
    pub fn objective_value(&self, blocks: &[CMat]) -> f64 {
        self.objective.iter().map(|(b, c)| c.eval(&blocks[*b])).sum()
    }

    /// Largest violation of the linear constraints by a candidate.
    pub fn max_violation(&self, blocks: &[CMat]) -> f64 {
        self.constraints
            .iter()
            .map(|(terms, rel, rhs)| {
                let lhs: f64 = terms.iter().map(|(b, c)| c.eval(&blocks[*b])).sum();
                match rel {
                    Relation::Eq => (lhs - rhs).abs(),
                    Relation::Le => (lhs - rhs).max(0.0),
                    Relation::Ge => (rhs - lhs).max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let check = |terms: &Terms| -> Result<()> {
            for (b, c) in terms {
                let dim = *self
                    .dims
                    .get(*b)
                    .ok_or_else(|| Error::Dimension(format!("block {b} does not exist")))?;
                match c {
                    Coeff::Dense(a) => {
                        if a.nrows() != dim || a.ncols() != dim {
                            return Err(Error::Dimension(format!(
                                "coefficient {}x{} on block of size {dim}",
                                a.nrows(),
                                a.ncols()
                            )));
                        }
                        let asym = hermitian_asymmetry(a);
                        if asym > 1e-10 {
                            return Err(Error::NotHermitian(asym));
                        }
                    }
                    Coeff::Diag(d) => {
                        if let Some((i, _)) = d.iter().find(|(i, _)| *i >= dim) {
                            return Err(Error::Dimension(format!("index {i} on block of size {dim}")));
                        }
                    }
                }
            }
            Ok(())
        };
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension("empty block".into()));
        }
        check(&self.objective)?;
        for (t, _, _) in &self.constraints {
            check(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    /// Relative gap and infeasibility tolerance.
    pub tol: f64,
    pub max_iterations: usize,
    /// Record per-iteration diagnostics.
    pub trace: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 100, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mu: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// One matrix per block of the problem, in insertion order.
    pub blocks: Vec<CMat>,
    /// Primal objective of the maximisation.
    pub objective: f64,
    /// Dual objective, an upper bound on the optimum up to `residual`.
    pub dual_bound: f64,
    /// `|primal − dual| / (1 + |primal| + |dual|)`.
    pub gap: f64,
    /// Largest relative primal or dual infeasibility.
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

/// Writes iteration diagnostics as CSV.
pub fn write_trace_csv(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "iteration,mu,primal_objective,dual_objective,gap,primal_infeasibility,dual_infeasibility,step_primal,step_dual")
        .map_err(io)?;
    for r in trace {
        writeln!(
            f,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            r.iteration,
            r.mu,
            r.primal_objective,
            r.dual_objective,
            r.gap,
            r.primal_infeasibility,
            r.dual_infeasibility,
            r.step_primal,
            r.step_dual
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Standard form `min ⟨C, X⟩  s.t.  A(X) = b, X ⪰ 0` with normalised rows.
struct Standard {
    dims: Vec<usize>,
    c: Vec<CMat>,
    rows: Vec<Terms>,
    b: DVector<f64>,
    c_scale: f64,
    by_block: Vec<Vec<(usize, usize)>>,
}

impl Standard {
    fn build(p: &SdpProblem) -> Self {
        let mut dims = p.dims.clone();
        let mut rows = Vec::with_capacity(p.constraints.len());
        let mut b = Vec::with_capacity(p.constraints.len());
        for (terms, rel, rhs) in &p.constraints {
            let mut terms = terms.clone();
            match rel {
                Relation::Eq => {}
                Relation::Le | Relation::Ge => {
                    dims.push(1);
                    let sign = if *rel == Relation::Le { 1.0 } else { -1.0 };
                    terms.push((dims.len() - 1, Coeff::scalar(sign)));
                }
            }
            let norm = terms.iter().map(|(_, c)| c.norm_sq()).sum::<f64>().sqrt();
            let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            terms.iter_mut().for_each(|(_, c)| c.scale(s));
            rows.push(terms);
            b.push(rhs * s);
        }
        let mut c: Vec<CMat> = dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        for (blk, coeff) in &p.objective {
            coeff.add_to(&mut c[*blk], -1.0);
        }
        let c_norm = c.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        let c_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
        for m in &mut c {
            *m /= C64::from(c_scale);
        }
        let mut by_block = vec![Vec::new(); dims.len()];
        for (i, terms) in rows.iter().enumerate() {
            for (t, (blk, _)) in terms.iter().enumerate() {
                by_block[*blk].push((i, t));
            }
        }
        Standard { dims, c, rows, b: DVector::from_vec(b), c_scale, by_block }
    }

    fn apply(&self, x: &[CMat]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|terms| terms.iter().map(|(blk, c)| c.eval(&x[*blk])).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<CMat> {
        let mut out: Vec<CMat> = self.dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        for (i, terms) in self.rows.iter().enumerate() {
            for (blk, c) in terms {
                c.add_to(&mut out[*blk], y[i]);
            }
        }
        out
    }

    fn schur(&self, x: &[CMat], zinv: &[CMat]) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut out = DMatrix::zeros(m, m);
        for (blk, entries) in self.by_block.iter().enumerate() {
            for &(j, tj) in entries {
                let g = self.rows[j][tj].1.sandwich(&x[blk], &zinv[blk]);
                for &(i, ti) in entries {
                    if i <= j {
                        out[(i, j)] += self.rows[i][ti].1.eval(&g);
                    }
                }
            }
        }
        // only the upper triangle was accumulated
        for j in 0..m {
            for i in (j + 1)..m {
                out[(i, j)] = out[(j, i)];
            }
        }
        out
    }
}

fn inner(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| re_trace_product(x, y)).sum()
}

fn frob(a: &[CMat]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

/// Cholesky test with real positive pivots. nalgebra's complex Cholesky takes
/// complex square roots and never rejects an indefinite matrix.
fn is_pd(m: &CMat) -> bool {
    let n = m.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = C64::from(d);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    true
}

/// Largest `α ≤ cap` keeping `X + α dX` positive definite.
fn max_step(x: &[CMat], dx: &[CMat], cap: f64) -> f64 {
    let mut alpha = cap;
    for (xb, db) in x.iter().zip(dx) {
        if xb.nrows() == 1 {
            let d = db[(0, 0)].re;
            if d < 0.0 {
                alpha = alpha.min(-xb[(0, 0)].re / d);
            }
            continue;
        }
        let trial = |a: f64| {
            let mut m = xb + db * C64::from(a);
            hermitize(&mut m);
            is_pd(&m)
        };
        if trial(alpha) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, alpha);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if trial(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-6 * hi {
                break;
            }
        }
        alpha = lo;
    }
    alpha
}

fn block_inverse(z: &CMat) -> Option<CMat> {
    if z.nrows() == 1 {
        let v = z[(0, 0)].re;
        return (v > 0.0).then(|| CMat::from_element(1, 1, C64::from(1.0 / v)));
    }
    if !is_pd(z) {
        return None;
    }
    let mut inv = Cholesky::new(z.clone())?.inverse();
    hermitize(&mut inv);
    Some(inv)
}

fn solve_schur(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Some(ch.solve(rhs));
    }
    // tiny diagonal regularisation when the Schur complement lost definiteness
    let scale = m.diagonal().amax().max(1e-300);
    let reg = m + DMatrix::identity(m.nrows(), m.nrows()) * (1e-12 * scale);
    Cholesky::new(reg).map(|ch| ch.solve(rhs)).or_else(|| m.clone().lu().solve(rhs))
}

/// Solves a block SDP to relative tolerance `opts.tol`.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let std = Standard::build(problem);
    let n_user = problem.dims.len();
    let m = std.rows.len();
    let n_total: usize = std.dims.iter().sum();

    let b_norm = std.b.norm();
    let c_norm = frob(&std.c);
    let b_max = std.b.amax();

    let mut x: Vec<CMat> = Vec::with_capacity(std.dims.len());
    let mut z: Vec<CMat> = Vec::with_capacity(std.dims.len());
    for (blk, &d) in std.dims.iter().enumerate() {
        let df = d as f64;
        let zeta = 10f64.max(df.sqrt()).max(df * (1.0 + b_max) / 2.0);
        let eta = 10f64.max(df.sqrt()).max(std.c[blk].norm());
        x.push(CMat::identity(d, d) * C64::from(zeta));
        z.push(CMat::identity(d, d) * C64::from(eta));
    }
    let mut y = DVector::<f64>::zeros(m);

    let mut trace = Vec::new();
    let mut best: Option<(f64, Vec<CMat>, f64, f64, f64, f64)> = None;
    let mut stalls = 0;
    let mut last = (f64::NAN, f64::NAN, f64::NAN);

    for iter in 0..=opts.max_iterations {
        let ax = std.apply(&x);
        let rp = &std.b - &ax;
        let aty = std.adjoint(&y);
        let rd: Vec<CMat> = (0..std.dims.len()).map(|k| &std.c[k] - &z[k] - &aty[k]).collect();
        let pobj = inner(&std.c, &x);
        let dobj = std.b.dot(&y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = frob(&rd) / (1.0 + c_norm);
        let mu = inner(&x, &z) / n_total as f64;
        last = (gap, pinf, dinf);

        let merit = gap.max(pinf).max(dinf);
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), pobj, dobj, gap, pinf.max(dinf)));
        }
        if gap <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
            if opts.trace {
                trace.push(IterationRecord {
                    iteration: iter,
                    mu,
                    primal_objective: -pobj * std.c_scale,
                    dual_objective: -dobj * std.c_scale,
                    gap,
                    primal_infeasibility: pinf,
                    dual_infeasibility: dinf,
                    step_primal: 0.0,
                    step_dual: 0.0,
                });
            }
            return Ok(finish(problem, &std, x, pobj, dobj, gap, pinf.max(dinf), iter, trace, n_user));
        }
        if dobj > 1e8 && dinf < 1e-3 || y.amax() > 1e12 {
            return Err(Error::SdpInfeasible);
        }
        if pobj < -1e8 && pinf < 1e-3 || frob(&x) > 1e12 {
            return Err(Error::SdpUnbounded);
        }
        if iter == opts.max_iterations || stalls >= 5 || !merit.is_finite() {
            break;
        }

        let Some(zinv) = z.iter().map(block_inverse).collect::<Option<Vec<_>>>() else {
            break;
        };
        let schur = std.schur(&x, &zinv);
        let x_rd_zinv: Vec<CMat> = (0..x.len()).map(|k| &x[k] * &rd[k] * &zinv[k]).collect();
        let a_xrdz = std.apply(&x_rd_zinv);

        let direction = |k_mat: &[CMat]| -> Option<(Vec<CMat>, DVector<f64>, Vec<CMat>)> {
            let rhs = &rp - std.apply(k_mat) + &a_xrdz;
            let dy = solve_schur(&schur, &rhs)?;
            let atdy = std.adjoint(&dy);
            let dz: Vec<CMat> = (0..x.len()).map(|k| &rd[k] - &atdy[k]).collect();
            let dx: Vec<CMat> = (0..x.len())
                .map(|k| {
                    let mut d = &k_mat[k] - &x[k] * &dz[k] * &zinv[k];
                    hermitize(&mut d);
                    d
                })
                .collect();
            Some((dx, dy, dz))
        };

        // predictor
        let k_aff: Vec<CMat> = x.iter().map(|xb| -xb).collect();
        let Some((dx_a, _, dz_a)) = direction(&k_aff) else { break };
        let ap = max_step(&x, &dx_a, 1.0);
        let ad = max_step(&z, &dz_a, 1.0);
        let x_aff: Vec<CMat> = (0..x.len()).map(|k| &x[k] + &dx_a[k] * C64::from(ap)).collect();
        let z_aff: Vec<CMat> = (0..z.len()).map(|k| &z[k] + &dz_a[k] * C64::from(ad)).collect();
        let mu_aff = inner(&x_aff, &z_aff) / n_total as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

        // corrector
        let k_cor: Vec<CMat> = (0..x.len())
            .map(|k| {
                &zinv[k] * C64::from(sigma * mu) - &x[k] - &dx_a[k] * &dz_a[k] * &zinv[k]
            })
            .collect();
        let Some((dx, dy, dz)) = direction(&k_cor) else { break };
        let ap = (0.98 * max_step(&x, &dx, 1.0 / 0.98)).min(1.0);
        let ad = (0.98 * max_step(&z, &dz, 1.0 / 0.98)).min(1.0);

        if opts.trace {
            trace.push(IterationRecord {
                iteration: iter,
                mu,
                primal_objective: -pobj * std.c_scale,
                dual_objective: -dobj * std.c_scale,
                gap,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                step_primal: ap,
                step_dual: ad,
            });
        }
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
        } else {
            stalls = 0;
        }

        for k in 0..x.len() {
            x[k] += &dx[k] * C64::from(ap);
            hermitize(&mut x[k]);
            z[k] += &dz[k] * C64::from(ad);
            hermitize(&mut z[k]);
        }
        y += dy * ad;
    }

    let (gap, pinf, dinf) = last;
    let iterations = opts.max_iterations;
    let (_, bx, bp, bd, bgap, bres) = best.unwrap_or((f64::NAN, x, f64::NAN, f64::NAN, f64::NAN, f64::NAN));
    let best_sol = finish(problem, &std, bx, bp, bd, bgap, bres, iterations, trace, n_user);
    Err(Error::SdpNoConvergence {
        iterations,
        gap,
        residual: pinf.max(dinf),
        best: Box::new(best_sol),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &SdpProblem,
    std: &Standard,
    mut x: Vec<CMat>,
    _pobj: f64,
    dobj: f64,
    gap: f64,
    residual: f64,
    iterations: usize,
    trace: Vec<IterationRecord>,
    n_user: usize,
) -> SdpSolution {
    x.truncate(n_user);
    let objective = problem.objective_value(&x);
    SdpSolution {
        blocks: x,
        objective,
        dual_bound: -dobj * std.c_scale,
        gap,
        residual,
        iterations,
        trace,
    }
}

/// Accepts a non-converged result when its best iterate already meets `tol`.
pub fn solve_sdp_lenient(problem: &SdpProblem, opts: &SdpOptions, tol: f64) -> Result<SdpSolution> {
    match solve_sdp(problem, opts) {
        Err(Error::SdpNoConvergence { best, .. }) if best.gap <= tol && best.residual <= tol => Ok(*best),
        other => other,
    }
}
