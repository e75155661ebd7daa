//! Bracketed root finding for monotone scalar functions.

use crate::error::{ContestError, Result};

/// Brent's method on `[a, b]`.
///
/// Stops when `|f(x)| <= ftol` or the bracket shrinks below `xtol`.
pub fn brent<F: Fn(f64) -> f64>(
    f: F,
    mut a: f64,
    mut b: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa.abs() <= ftol {
        return Ok(a);
    }
    if fb.abs() <= ftol {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(ContestError::NoConvergence(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;

    for _ in 0..max_iter {
        if fb.abs() <= ftol || (b - a).abs() <= xtol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let out_of_range = !((s > lo.min(b)) && (s < lo.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0 || (b - c).abs() < xtol
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0 || (c - d).abs() < xtol
        };
        if out_of_range || slow {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    if fb.abs() <= ftol * 1e3 {
        Ok(b)
    } else {
        Err(ContestError::NoConvergence(format!(
            "brent did not converge; residual {fb}"
        )))
    }
}

/// Largest `x` in `[lo, hi]` with `g(x) <= q` for nondecreasing `g`.
///
/// Assumes `g(lo) <= q`. Bisection to machine resolution.
pub fn sup_at_most<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64, q: f64) -> f64 {
    if g(hi) <= q {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if g(mid) <= q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `x` in `[lo, hi]` with `g(x) >= q` for nondecreasing `g`.
pub fn inf_at_least<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64, q: f64) -> f64 {
    if g(lo) >= q {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if g(mid) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
