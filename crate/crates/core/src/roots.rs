//! Safeguarded Newton iteration for monotone decreasing functions.

use crate::error::{Error, Result};

pub(crate) struct NewtonOutcome {
    pub root: f64,
}

/// Finds the root of a strictly decreasing `f` on `(lo, hi)` where
/// `f(lo) > 0 > f(hi)`. `f` returns the value and derivative. Newton steps
/// that leave the bracket are replaced by bisection. Converged when the
/// relative step falls below `rel_tol`.
pub(crate) fn newton_decreasing<F>(
    f: F,
    x0: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut x = x0.clamp(lo, hi);
    if !(x > lo && x < hi) {
        x = bisect_point(lo, hi);
    }
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(NewtonOutcome { root: x });
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = bisect_point(lo, hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= rel_tol * x.abs() {
            return Ok(NewtonOutcome { root: x });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        initial: x0,
    })
}

fn bisect_point(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi.is_finite() && hi / lo > 4.0 {
        (lo * hi).sqrt()
    } else if hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        (lo.max(1.0)) * 2.0
    }
}

/// Expands `hi` geometrically from `start` until `f(hi) < 0`.
pub(crate) fn bracket_above<F: Fn(f64) -> f64>(f: F, start: f64) -> Result<f64> {
    let mut hi = start;
    for _ in 0..2000 {
        if f(hi) < 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: 2000,
        initial: start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_reciprocal_equation() {
        // 3 - 6 / x is increasing; negate to make it decreasing. Root at 2.
        let f = |x: f64| (6.0 / x - 3.0, -6.0 / (x * x));
        let out = newton_decreasing(f, 0.5, 0.0, 100.0, 1e-14, 100).unwrap();
        assert!((out.root - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence_with_initial_value() {
        let f = |x: f64| (1.0 - x, -1e-300);
        match newton_decreasing(f, 0.25, 0.0, 1e300, 1e-15, 3) {
            Err(Error::NonConvergence { initial, .. }) => assert_eq!(initial, 0.25),
            Ok(out) => assert!((out.root - 1.0).abs() < 1e-9),
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
