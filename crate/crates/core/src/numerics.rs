//! Small deterministic quadrature and root-finding helpers used on smooth
//! analytic paths.

/// Adaptive Simpson quadrature of `f` over [a, b] to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // Splitting first keeps the recursion from accepting a lucky coarse
    // estimate on oscillatory integrands.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == pieces { b } else { lo + h };
            let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(lo, hi, flo, fmid, fhi);
            adaptive(&f, lo, hi, flo, fmid, fhi, whole, tol / pieces as f64, 50)
        })
        .sum()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// First crossing of `g(t) = 0` from below on [0, t_max], located by scanning
/// `n_scan` uniform cells and bisecting the first sign change.
pub fn first_root<G: Fn(f64) -> f64>(g: G, t_max: f64, n_scan: usize) -> Option<f64> {
    let h = t_max / n_scan as f64;
    let mut lo = 0.0;
    let mut g_lo = g(lo);
    if g_lo >= 0.0 {
        return Some(0.0);
    }
    for i in 1..=n_scan {
        let hi = i as f64 * h;
        let g_hi = g(hi);
        if g_hi >= 0.0 {
            return Some(bisect(&g, lo, hi));
        }
        lo = hi;
        g_lo = g_hi;
    }
    let _ = g_lo;
    None
}

fn bisect<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
