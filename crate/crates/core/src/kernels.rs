//! Deterministic and stochastic generators of the monitored-qubit dynamics,
//! and the closed-form solution of the unconditioned (ensemble) evolution.
//!
//! Matrix-form kernels act on density matrices; the `bloch_*` kernels are the
//! same maps written in Bloch coordinates and are what the integrator uses.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, SIGMA_Y, SIGMA_Z};
use crate::params::SimParams;
use crate::state::{BlochVector, DensityMatrix};

/// L[ρ] = −i(ω/2)[σ_y, ρ] − κ[σ_z, [σ_z, ρ]].
pub fn liouvillian(rho: &DensityMatrix, params: &SimParams) -> Mat2 {
    liouvillian_matrix(rho.matrix(), params)
}

pub(crate) fn liouvillian_matrix(rho: &Mat2, params: &SimParams) -> Mat2 {
    let hamiltonian = linalg::scale(
        &linalg::commutator(&SIGMA_Y, rho),
        C64::new(0.0, -0.5 * params.omega),
    );
    let dephasing = linalg::scale_re(
        &linalg::commutator(&SIGMA_Z, &linalg::commutator(&SIGMA_Z, rho)),
        -params.kappa,
    );
    linalg::add(&hamiltonian, &dephasing)
}

/// I[ρ] = √(2κ)({σ_z, ρ} − 2Tr(σ_z ρ)ρ).
pub fn innovation(rho: &DensityMatrix, params: &SimParams) -> Mat2 {
    innovation_matrix(rho.matrix(), params)
}

pub(crate) fn innovation_matrix(rho: &Mat2, params: &SimParams) -> Mat2 {
    let mean_z = linalg::trace_product(&SIGMA_Z, rho).re;
    let anti = linalg::anticommutator(&SIGMA_Z, rho);
    let shifted = linalg::sub(&anti, &linalg::scale_re(rho, 2.0 * mean_z));
    linalg::scale_re(&shifted, (2.0 * params.kappa).sqrt())
}

/// Bloch components of L[ρ]: (ωz − 4κx, −4κy, −ωx).
#[inline]
pub fn bloch_drift(r: &BlochVector, params: &SimParams) -> BlochVector {
    let (w, k) = (params.omega, params.kappa);
    BlochVector::raw(w * r.z - 4.0 * k * r.x, -4.0 * k * r.y, -w * r.x)
}

/// Bloch components of I[ρ]: 2√(2κ)(−xz, −yz, 1 − z²).
#[inline]
pub fn bloch_diffusion(r: &BlochVector, params: &SimParams) -> BlochVector {
    let g = 2.0 * (2.0 * params.kappa).sqrt();
    BlochVector::raw(-g * r.x * r.z, -g * r.y * r.z, g * (1.0 - r.z * r.z))
}

/// The x–z block M = [[−4κ, ω], [−ω, 0]] of the ensemble dynamics, its
/// eigenpairs, and the expansion (x₀, z₀) = a·v₊ + b·v₋.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigensystemM {
    pub lambda_plus: C64,
    pub lambda_minus: C64,
    pub v_plus: [C64; 2],
    pub v_minus: [C64; 2],
    pub a: C64,
    pub b: C64,
}

/// Relative width of the band around 4κ² = ω² treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

pub fn is_degenerate(params: &SimParams) -> bool {
    let (w, k) = (params.omega, params.kappa);
    (4.0 * k * k - w * w).abs() < DEGENERACY_TOL * w * w
}

pub fn eigensystem_m(params: &SimParams, initial: &BlochVector) -> Result<EigensystemM> {
    let (w, k) = (params.omega, params.kappa);
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::params("omega", format!("must be > 0, got {w}")));
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::params("kappa", format!("must be >= 0, got {k}")));
    }
    if is_degenerate(params) {
        return Err(Error::DegenerateEigensystem { kappa: k, omega: w });
    }
    let disc = 4.0 * k * k - w * w;
    let (lambda_plus, lambda_minus) = if disc > 0.0 {
        // Overdamped: λ₊ = −2κ + √disc cancels; use λ₊λ₋ = ω² instead.
        let lm = -2.0 * k - disc.sqrt();
        (C64::new(w * w / lm, 0.0), C64::new(lm, 0.0))
    } else {
        let s = (-disc).sqrt();
        (C64::new(-2.0 * k, s), C64::new(-2.0 * k, -s))
    };
    let wc = C64::new(w, 0.0);
    let v_plus = [wc, -lambda_minus];
    let v_minus = [wc, -lambda_plus];
    let (x0, z0) = (initial.x, initial.z);
    let a = (z0 + x0 * lambda_plus / w) / (lambda_plus - lambda_minus);
    let b = C64::new(x0 / w, 0.0) - a;
    Ok(EigensystemM {
        lambda_plus,
        lambda_minus,
        v_plus,
        v_minus,
        a,
        b,
    })
}

impl EigensystemM {
    /// (x_t, z_t) = a·v₊·e^{λ₊t} + b·v₋·e^{λ₋t}, still in complex form.
    pub fn xz_complex(&self, t: f64) -> [C64; 2] {
        let ep = (self.lambda_plus * t).exp() * self.a;
        let em = (self.lambda_minus * t).exp() * self.b;
        [
            ep * self.v_plus[0] + em * self.v_minus[0],
            ep * self.v_plus[1] + em * self.v_minus[1],
        ]
    }

    /// ∫₀ᵀ (x_t, z_t) dt in complex form.
    pub fn xz_integral_complex(&self, t_end: f64) -> [C64; 2] {
        let ip = self.a * t_end * phi1(self.lambda_plus * t_end);
        let im = self.b * t_end * phi1(self.lambda_minus * t_end);
        [
            ip * self.v_plus[0] + im * self.v_minus[0],
            ip * self.v_plus[1] + im * self.v_minus[1],
        ]
    }
}

/// φ₁(z) = (e^z − 1)/z, accurate near z = 0.
fn phi1(z: C64) -> C64 {
    if z.norm() < 0.5 {
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for n in 2..30 {
            term = term * z / f64::from(n);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// ∫₀ᵀ tⁿ e^{λt} dt for real λ ≤ 0.
fn moment(n: u32, lambda: f64, t_end: f64) -> f64 {
    t_end.powi(n as i32 + 1) * unit_moment(n, lambda * t_end)
}

/// ∫₀¹ sⁿ e^{zs} ds.
fn unit_moment(n: u32, z: f64) -> f64 {
    if z.abs() < 2.0 {
        // Σ_m zᵐ/(m!(n+m+1))
        let mut power = 1.0;
        let mut sum = 1.0 / f64::from(n + 1);
        for m in 1..60 {
            power *= z / f64::from(m);
            let term = power / f64::from(n + m + 1);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        // n!(1 − e^z Σ_{j≤n} (−z)ʲ/j!)/(−z)ⁿ⁺¹
        let mut partial = 0.0;
        let mut term = 1.0;
        let mut n_fact = 1.0;
        for j in 0..=n {
            partial += term;
            term *= -z / f64::from(j + 1);
            if j > 0 {
                n_fact *= f64::from(j);
            }
        }
        n_fact * (1.0 - z.exp() * partial) / (-z).powi(n as i32 + 1)
    }
}

fn real_part_checked(v: C64, scale: f64) -> f64 {
    debug_assert!(
        v.im.abs() <= 1e-10 * scale.max(1.0),
        "imaginary residue {} in a real Bloch coordinate",
        v.im
    );
    v.re
}

/// Closed-form ensemble-averaged Bloch vector at time t.
///
/// Non-degenerate regimes use the eigenvector expansion evaluated in complex
/// arithmetic. On the degenerate line 4κ² = ω² the confluent solution
/// e^{−2κt}(u₀ + t(M + 2κ)u₀) is used.
pub fn ensemble_state_analytic(t: f64, params: &SimParams) -> BlochVector {
    let r0 = params.initial;
    let y = r0.y * (-4.0 * params.kappa * t).exp();
    let (x, z) = if is_degenerate(params) {
        confluent_xz(t, params)
    } else {
        let eig = eigensystem_m(params, &r0).expect("non-degenerate by construction");
        let [x, z] = eig.xz_complex(t);
        let scale = eig.a.norm().max(eig.b.norm()) * params.omega.max(1.0);
        (real_part_checked(x, scale), real_part_checked(z, scale))
    };
    BlochVector::raw(x, y, z)
}

fn confluent_xz(t: f64, params: &SimParams) -> (f64, f64) {
    let (u, nu, disc) = confluent_parts(params);
    let decay = (-2.0 * params.kappa * t).exp();
    // e^{Mt} = e^{−2κt}(cosh(st) + sinh(st)/s·N) with s² = 4κ² − ω², expanded
    // to first order in s² inside the degeneracy band.
    let c0 = 1.0 + 0.5 * disc * t * t;
    let c1 = t * (1.0 + disc * t * t / 6.0);
    (
        decay * (c0 * u[0] + c1 * nu[0]),
        decay * (c0 * u[1] + c1 * nu[1]),
    )
}

/// (x₀, z₀), N·(x₀, z₀) with N = M + 2κ𝟙 = [[−2κ, ω], [−ω, 2κ]], and
/// s² = 4κ² − ω². N is nilpotent exactly on the degenerate line.
fn confluent_parts(params: &SimParams) -> ([f64; 2], [f64; 2], f64) {
    let (w, k) = (params.omega, params.kappa);
    let (x0, z0) = (params.initial.x, params.initial.z);
    (
        [x0, z0],
        [-2.0 * k * x0 + w * z0, -w * x0 + 2.0 * k * z0],
        4.0 * k * k - w * w,
    )
}

/// Time average over [0, T] of the ensemble Bloch vector, in closed form.
pub fn ensemble_time_average(t_end: f64, params: &SimParams) -> BlochVector {
    if t_end <= 0.0 {
        return params.initial;
    }
    let r0 = params.initial;
    let k = params.kappa;
    let y_int = r0.y * moment(0, -4.0 * k, t_end);
    let (x_int, z_int) = if is_degenerate(params) {
        let (u, nu, disc) = confluent_parts(params);
        let lambda = -2.0 * k;
        let m = |n| moment(n, lambda, t_end);
        let i0 = m(0) + 0.5 * disc * m(2);
        let i1 = m(1) + disc * m(3) / 6.0;
        (u[0] * i0 + nu[0] * i1, u[1] * i0 + nu[1] * i1)
    } else {
        let eig = eigensystem_m(params, &r0).expect("non-degenerate by construction");
        let [x, z] = eig.xz_integral_complex(t_end);
        let scale = eig.a.norm().max(eig.b.norm()) * params.omega.max(1.0) * t_end.max(1.0);
        (real_part_checked(x, scale), real_part_checked(z, scale))
    };
    BlochVector::raw(x_int / t_end, y_int / t_end, z_int / t_end)
}
