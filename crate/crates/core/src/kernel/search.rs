use crate::error::{Error, Result};

/// Direction in which the grid is scanned by [`one_dim_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanOrder {
    /// Start at `lo` and gallop upwards.
    #[default]
    Forward,
    /// Start at `hi` and gallop downwards.
    Reverse,
}

/// Smallest grid point `lo + i*step` in `[lo, hi]` satisfying a predicate
/// that is monotone (false then true) on the grid. Both scan orders give the
/// same answer for monotone predicates; they differ in which end is probed
/// first.
pub fn one_dim_search<F>(mut pred: F, lo: f64, hi: f64, step: f64, order: ScanOrder) -> Result<f64>
where
    F: FnMut(f64) -> bool,
{
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::SearchExhausted { lo, hi });
    }
    let last = ((hi - lo) / step + 1e-9).floor() as usize;
    let at = |i: usize| lo + i as f64 * step;
    let mut test = |i: usize| pred(at(i));

    // (bad, good): bad is an infeasible index or None, good is feasible.
    let (mut bad, mut good) = match order {
        ScanOrder::Forward => {
            if test(0) {
                return Ok(at(0));
            }
            let mut bad = 0usize;
            let mut jump = 1usize;
            loop {
                let probe = (bad + jump).min(last);
                if test(probe) {
                    break (bad, probe);
                }
                if probe == last {
                    return Err(Error::SearchExhausted { lo, hi });
                }
                bad = probe;
                jump *= 2;
            }
        }
        ScanOrder::Reverse => {
            if !test(last) {
                return Err(Error::SearchExhausted { lo, hi });
            }
            let mut good = last;
            let mut jump = 1usize;
            loop {
                if good == 0 {
                    return Ok(at(0));
                }
                let probe = good.saturating_sub(jump);
                if !test(probe) {
                    break (probe, good);
                }
                good = probe;
                jump *= 2;
            }
        }
    };
    while good - bad > 1 {
        let mid = bad + (good - bad) / 2;
        if test(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(at(good))
}

/// Final bracket of a bisection. `lo` and `hi` keep the sides of the target
/// they started on, so `f(lo) − target` and `f(hi) − target` never change sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

impl Bracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bisection for `f(x) = target` on `[lo, hi]` where `f` is monotone.
pub fn bisect_monotone<F>(mut f: F, target: f64, lo: f64, hi: f64, tol: f64) -> Result<Bracket>
where
    F: FnMut(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    let d_lo = f_lo - target;
    let d_hi = f_hi - target;
    if d_lo.is_nan() || d_hi.is_nan() || d_lo * d_hi > 0.0 {
        return Err(Error::NoBracket { target, f_lo, f_hi });
    }
    if d_lo == 0.0 {
        return Ok(Bracket { lo, hi: lo, iterations: 0 });
    }
    if d_hi == 0.0 {
        return Ok(Bracket { lo: hi, hi, iterations: 0 });
    }
    let (mut a, mut b) = (lo, hi);
    let mut iterations = 0;
    while (b - a).abs() > tol {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let d = f(mid) - target;
        if d == 0.0 {
            a = mid;
            b = mid;
        } else if (d > 0.0) == (d_lo > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
        iterations += 1;
    }
    Ok(Bracket { lo: a, hi: b, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_search_both_orders() {
        for order in [ScanOrder::Forward, ScanOrder::Reverse] {
            let x = one_dim_search(|x| x >= 0.35, 0.0, 1.0, 0.1, order).unwrap();
            assert!((x - 0.4).abs() < 1e-12, "{order:?} gave {x}");
        }
    }

    #[test]
    fn grid_search_endpoints() {
        assert_eq!(one_dim_search(|_| true, 0.5, 1.0, 0.1, ScanOrder::Forward).unwrap(), 0.5);
        assert_eq!(one_dim_search(|_| true, 0.5, 1.0, 0.1, ScanOrder::Reverse).unwrap(), 0.5);
        assert!(one_dim_search(|_| false, 0.0, 1.0, 0.1, ScanOrder::Forward).is_err());
        assert!(one_dim_search(|_| false, 0.0, 1.0, 0.1, ScanOrder::Reverse).is_err());
    }

    #[test]
    fn grid_search_uses_few_evaluations() {
        let mut calls = 0;
        let x = one_dim_search(
            |x| {
                calls += 1;
                x >= 0.7231
            },
            0.0,
            1.0,
            1e-5,
            ScanOrder::Forward,
        )
        .unwrap();
        assert!((x - 0.72310).abs() < 1e-9);
        assert!(calls < 60, "{calls} evaluations");
    }

    #[test]
    fn bisection_root_within_tolerance() {
        let br = bisect_monotone(|x| x * x * x, 2.0, 0.0, 2.0, 1e-10).unwrap();
        assert!((br.mid() - 2f64.cbrt()).abs() < 1e-10);
        assert!(br.lo.powi(3) <= 2.0 && br.hi.powi(3) >= 2.0);
        let bound = ((2.0f64) / 1e-10).log2().ceil() as usize;
        assert!(br.iterations <= bound);
    }

    #[test]
    fn bisection_decreasing_and_unbracketed() {
        let br = bisect_monotone(|x| -x, -0.25, 0.0, 1.0, 1e-12).unwrap();
        assert!((br.mid() - 0.25).abs() < 1e-12);
        assert!(matches!(
            bisect_monotone(|x| x, 5.0, 0.0, 1.0, 1e-6),
            Err(Error::NoBracket { .. })
        ));
    }
}
