//! Bracketed bisection for monotone scalar equations.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },
    #[error("could not bracket a root above {lo} after {doublings} doublings")]
    BracketExpansion { lo: f64, doublings: u32 },
    #[error("function returned NaN at {x}")]
    NaN { x: f64 },
}

/// Root of a non-decreasing `f` on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`.
///
/// Halves the bracket until its width is below `rel_width * max(|lo|, |hi|)`
/// or the midpoint is no longer representable strictly inside it, then
/// returns whichever endpoint has the smaller residual. Passing
/// `rel_width = 0.0` runs to machine precision.
pub fn bisect_increasing<F>(f: F, mut lo: f64, mut hi: f64, rel_width: f64) -> Result<f64, RootError>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo.is_nan() {
        return Err(RootError::NaN { x: lo });
    }
    if f_hi.is_nan() {
        return Err(RootError::NaN { x: hi });
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(RootError::NotBracketed { lo, hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi || hi - lo <= rel_width * lo.abs().max(hi.abs()) {
            break;
        }
        let f_mid = f(mid);
        if f_mid.is_nan() {
            return Err(RootError::NaN { x: mid });
        }
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    Ok(if -f_lo <= f_hi { lo } else { hi })
}

/// Doubles `start` until `f(upper) >= 0`, for a non-decreasing `f` with
/// `f(lo) <= 0`. Returns the first upper bracket found.
pub fn expand_upper<F>(f: &F, lo: f64, start: f64, max_doublings: u32) -> Result<f64, RootError>
where
    F: Fn(f64) -> f64,
{
    let mut hi = start;
    for _ in 0..max_doublings {
        let v = f(hi);
        if v.is_nan() {
            return Err(RootError::NaN { x: hi });
        }
        if v >= 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(RootError::BracketExpansion {
        lo,
        doublings: max_doublings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect_increasing(|x| x * x - 2.0, 0.0, 2.0, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn coarse_width_stops_early() {
        let r = bisect_increasing(|x| x - 0.3, 0.0, 1.0, 1e-3).unwrap();
        assert!((r - 0.3).abs() < 1e-3);
    }

    #[test]
    fn rejects_missing_bracket() {
        assert!(matches!(
            bisect_increasing(|x| x + 1.0, 0.0, 1.0, 0.0),
            Err(RootError::NotBracketed { .. })
        ));
    }

    #[test]
    fn expands_until_sign_change() {
        let f = |x: f64| x - 100.0;
        let hi = expand_upper(&f, 0.0, 1.0, 20).unwrap();
        assert!(hi >= 100.0 && hi < 200.0);
        assert!(expand_upper(&f, 0.0, 1.0, 3).is_err());
    }
}
