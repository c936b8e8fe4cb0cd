//! One-dimensional root finding and line search used across the crate.
//!
//! Every root here comes with a proven bracket and a monotone function, so
//! bisection is run to a tight absolute tolerance and finished with a couple
//! of Newton steps when the derivative is available.

/// Bisection on a bracketing interval `[lo, hi]` with `f(lo) <= 0 <= f(hi)`,
/// followed by up to two Newton polish steps if `df` is given.
///
/// `tol` is the absolute tolerance on the argument.
pub fn bisect_newton<F, G>(f: F, df: Option<G>, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    debug_assert!(lo <= hi);
    let mut mid = 0.5 * (lo + hi);
    while hi - lo > tol {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval exhausted at f64 resolution
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if let Some(df) = df {
        for _ in 0..2 {
            let d = df(mid);
            if d == 0.0 || !d.is_finite() {
                break;
            }
            let next = mid - f(mid) / d;
            if next.is_finite() && next >= lo - tol && next <= hi + tol {
                mid = next;
            } else {
                break;
            }
        }
    }
    mid
}

/// Doubles `hi` starting from `start` until `f(hi) > 0`, then returns the
/// bracket `(previous, hi)`. `f` must be eventually positive.
pub fn expand_upper<F: Fn(f64) -> f64>(f: F, start: f64) -> (f64, f64) {
    let mut hi = start.max(f64::MIN_POSITIVE);
    let mut lo = 0.0;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        assert!(hi.is_finite(), "bracket expansion diverged");
    }
    (lo, hi)
}

/// Golden-section search for the maximum of a concave `f` on `[a, b]`.
///
/// Returns `(x_max, f_max)`. Kinks are fine; only unimodality is used.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        if x1 >= x2 {
            break; // f64 resolution reached
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_newton_finds_sqrt2() {
        let r = bisect_newton(|x| x * x - 2.0, Some(|x: f64| 2.0 * x), 0.0, 2.0, 1e-12);
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn bisect_without_derivative() {
        let r = bisect_newton(
            |x| x.exp() - 3.0,
            None::<fn(f64) -> f64>,
            0.0,
            2.0,
            1e-12,
        );
        assert!((r - 3.0_f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn expand_upper_brackets_root() {
        let (lo, hi) = expand_upper(|x| x - 37.0, 1.0);
        assert!(lo <= 37.0 && 37.0 <= hi);
    }

    #[test]
    fn golden_max_quadratic() {
        let (x, v) = golden_max(|x| -(x - 0.7) * (x - 0.7), 0.0, 2.0, 1e-10);
        assert!((x - 0.7).abs() < 1e-8);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn golden_max_handles_kink() {
        // concave with a corner at 0.4
        let f = |x: f64| 1.0 - 2.0 * (x - 0.4).abs() - if x > 0.4 { x - 0.4 } else { 0.0 };
        let (x, _) = golden_max(f, 0.0, 3.0, 1e-10);
        assert!((x - 0.4).abs() < 1e-8);
    }
}
