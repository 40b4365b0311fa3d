//! Dense 2×2 complex matrix helpers.
//!
//! Everything here is small enough that fixed arrays beat a general linear
//! algebra dependency, and the explicit formulas double as the matrix-form
//! reference for the Bloch-coordinate fast paths.

use num_complex::Complex64 as C64;

pub type Mat2 = [[C64; 2]; 2];

pub const ZERO: Mat2 = [[C64::new(0.0, 0.0); 2]; 2];
pub const IDENTITY: Mat2 = [
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
];
pub const SIGMA_X: Mat2 = [
    [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
];
pub const SIGMA_Y: Mat2 = [
    [C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
    [C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
];
pub const SIGMA_Z: Mat2 = [
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
];

pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = ZERO;
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

pub fn sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

pub fn scale(a: &Mat2, s: C64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn scale_re(a: &Mat2, s: f64) -> Mat2 {
    scale(a, C64::new(s, 0.0))
}

pub fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    sub(&mul(a, b), &mul(b, a))
}

pub fn anticommutator(a: &Mat2, b: &Mat2) -> Mat2 {
    add(&mul(a, b), &mul(b, a))
}

pub fn dagger(a: &Mat2) -> Mat2 {
    [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ]
}

pub fn trace(a: &Mat2) -> C64 {
    a[0][0] + a[1][1]
}

/// Tr(a b) without forming the product.
pub fn trace_product(a: &Mat2, b: &Mat2) -> C64 {
    a[0][0] * b[0][0] + a[0][1] * b[1][0] + a[1][0] * b[0][1] + a[1][1] * b[1][1]
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_defect(a: &Mat2) -> f64 {
    let mut worst = 0.0_f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - a[j][i].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((a[i][j] - b[i][j]).norm());
        }
    }
    worst
}

/// Frobenius norm.
pub fn frobenius(a: &Mat2) -> f64 {
    a.iter()
        .flat_map(|row| row.iter())
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Operator norm (largest singular value) of an arbitrary complex 2×2 matrix.
///
/// σ_max² is the top eigenvalue of the Gram matrix G = AA†, taken from the
/// Hermitian closed form (p+q)/2 + √(((p−q)/2)² + |g₀₁|²), which avoids the
/// cancellation of the t² − 4|det|² form when the singular values coincide.
pub fn operator_norm(a: &Mat2) -> f64 {
    let p = a[0][0].norm_sqr() + a[0][1].norm_sqr();
    let q = a[1][0].norm_sqr() + a[1][1].norm_sqr();
    let off = a[0][0] * a[1][0].conj() + a[0][1] * a[1][1].conj();
    let half_gap = (0.25 * (p - q) * (p - q) + off.norm_sqr()).sqrt();
    (0.5 * (p + q) + half_gap).sqrt()
}

/// Eigen-decomposition of a Hermitian 2×2 matrix.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors (as columns `vecs[k]`).
pub fn hermitian_eigen(a: &Mat2) -> ([f64; 2], [[C64; 2]; 2]) {
    let p = a[0][0].re;
    let q = a[1][1].re;
    let b = a[0][1];
    let mean = 0.5 * (p + q);
    let half_gap = (0.25 * (p - q) * (p - q) + b.norm_sqr()).sqrt();
    let lo = mean - half_gap;
    let hi = mean + half_gap;
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);

    if b.norm() <= 1e-300 {
        // Already diagonal.
        return if p <= q {
            ([p, q], [[one, zero], [zero, one]])
        } else {
            ([q, p], [[zero, one], [one, zero]])
        };
    }

    // (A − λ)v = 0 with v = (b, λ − p) from the first row.
    let vec_for = |lambda: f64| {
        let v = [b, C64::new(lambda - p, 0.0)];
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        [v[0] / n, v[1] / n]
    };
    ([lo, hi], [vec_for(lo), vec_for(hi)])
}

/// ⟨u| A |v⟩.
pub fn sandwich(u: &[C64; 2], a: &Mat2, v: &[C64; 2]) -> C64 {
    let av = [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
    u[0].conj() * av[0] + u[1].conj() * av[1]
}
