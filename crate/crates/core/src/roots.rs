//! Bracketed root finding for monotone scalar functions.

use crate::error::{Error, Result};

/// A root located by bisection, with the final bracket and residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub root: f64,
    pub lower: f64,
    pub upper: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub iterations: usize,
}

/// Bisection on `[lower, upper]`; `f(lower)` and `f(upper)` must differ in
/// sign (a zero at either end is accepted). Stops once the bracket is
/// narrower than `x_tol` (absolute) or cannot be split further.
pub fn bisect<F: FnMut(f64) -> Result<f64>>(mut f: F, lower: f64, upper: f64, x_tol: f64) -> Result<Bracket> {
    let (mut lo, mut hi) = (lower.min(upper), lower.max(upper));
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(Bracket { root: lo, lower: lo, upper: lo, f_lower: 0.0, f_upper: 0.0, iterations: 0 });
    }
    if f_hi == 0.0 {
        return Ok(Bracket { root: hi, lower: hi, upper: hi, f_lower: 0.0, f_upper: 0.0, iterations: 0 });
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoBracket { lower: lo, upper: hi, f_lower: f_lo, f_upper: f_hi });
    }
    let mut iterations = 0;
    while hi - lo > x_tol && iterations < 2000 {
        let mid = lo + 0.5 * (hi - lo);
        if !(mid > lo && mid < hi) {
            break;
        }
        let f_mid = f(mid)?;
        iterations += 1;
        if f_mid == 0.0 {
            return Ok(Bracket { root: mid, lower: mid, upper: mid, f_lower: 0.0, f_upper: 0.0, iterations });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    Ok(Bracket {
        root: lo + 0.5 * (hi - lo),
        lower: lo,
        upper: hi,
        f_lower: f_lo,
        f_upper: f_hi,
        iterations,
    })
}

/// Grows `upper` geometrically from `lower` until `f` changes sign, then
/// bisects. Fails once `upper` passes `limit`.
pub fn bisect_expanding<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    lower: f64,
    initial_step: f64,
    limit: f64,
    x_tol: f64,
) -> Result<Bracket> {
    let f_lower = f(lower)?;
    let mut step = initial_step;
    let mut upper = lower + step;
    loop {
        let f_upper = f(upper)?;
        if f_upper == 0.0 || f_upper.signum() != f_lower.signum() {
            return bisect(f, lower, upper, x_tol);
        }
        if upper >= limit {
            return Err(Error::NoBracket { lower, upper, f_lower, f_upper });
        }
        step *= 2.0;
        upper = (lower + step).min(limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let b = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14).unwrap();
        assert!((b.root - std::f64::consts::SQRT_2).abs() < 1e-13);
        assert!(b.f_lower < 0.0 && b.f_upper > 0.0);
    }

    #[test]
    fn rejects_missing_bracket() {
        assert!(matches!(bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn expands_to_far_root() {
        let b = bisect_expanding(|x| Ok(1000.0 - x), 0.0, 1.0, 1e6, 1e-9).unwrap();
        assert!((b.root - 1000.0).abs() < 1e-8);
        assert!(bisect_expanding(|x| Ok(1.0 + x), 0.0, 1.0, 1e3, 1e-9).is_err());
    }
}
