//! Adaptive Simpson quadrature.
//!
//! The integrands here are discounted cost rates along a flow; they are
//! smooth except at declared kink times, so the caller splits the interval
//! at kinks and each piece converges quickly.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 52;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err_acc: &mut f64,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        if delta.abs() > 15.0 * tol {
            *err_acc += delta.abs() / 15.0;
        }
        return left + right + delta / 15.0;
    }
    recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1, err_acc)
        + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1, err_acc)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    let mut err_acc = 0.0;
    let value = recurse(f, a, fa, b, fb, m, fm, whole, tol, 0, &mut err_acc);
    if err_acc > tol {
        return Err(Error::Quadrature {
            requested: tol,
            achieved: err_acc,
        });
    }
    Ok(value)
}

/// Integrates `f` over `[a, b]`, splitting at the given interior points.
///
/// Split points outside `(a, b)` are ignored; each piece gets an equal share
/// of the tolerance budget.
pub fn adaptive_simpson_split(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    splits: &[f64],
    tol: f64,
) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    let mut cuts: Vec<f64> = splits.iter().copied().filter(|&s| s > a && s < b).collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup();
    let pieces = cuts.len() + 1;
    let piece_tol = tol / pieces as f64;
    let mut total = 0.0;
    let mut left = a;
    for cut in cuts.into_iter().chain(std::iter::once(b)) {
        total += adaptive_simpson(f, left, cut, piece_tol)?;
        left = cut;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_exp() {
        let v = adaptive_simpson(&|t: f64| (-t).exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-1.0_f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn exact_on_cubics() {
        // Simpson is exact for cubics, so the first estimate already passes.
        let v = adaptive_simpson(&|t: f64| t * t * t, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn split_handles_step_integrand() {
        // step at t = 0.3: without the split this needs deep refinement
        let f = |t: f64| if t < 0.3 { 0.0 } else { 1.0 };
        let v = adaptive_simpson_split(&f, 0.0, 1.0, &[0.3], 1e-10).unwrap();
        assert!((v - 0.7).abs() < 1e-9);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(adaptive_simpson(&|_| 1.0, 1.0, 1.0, 1e-10).unwrap(), 0.0);
    }
}
