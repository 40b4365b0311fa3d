//! Qubit states in Bloch and density-matrix form.
//!
//! The Bloch vector is the working representation of the simulator. The
//! density matrix is kept as an independent representation so that every
//! Bloch-coordinate formula can be checked against plain matrix algebra.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-12;
/// Tolerance for quantities carrying accumulated rounding error.
pub const ACCUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ORIGIN: BlochVector = BlochVector::raw(0.0, 0.0, 0.0);
    pub const PLUS_Z: BlochVector = BlochVector::raw(0.0, 0.0, 1.0);
    pub const MINUS_Z: BlochVector = BlochVector::raw(0.0, 0.0, -1.0);
    pub const PLUS_X: BlochVector = BlochVector::raw(1.0, 0.0, 0.0);

    /// Builds a vector without checking |r| ≤ 1. Used for rates and
    /// increments, which share the coordinate layout but not the invariant.
    pub const fn raw(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = BlochVector { x, y, z };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite Bloch vector {self}")));
        }
        if self.norm_sqr() > 1.0 + ACCUM_TOL {
            return Err(Error::InvalidState(format!(
                "Bloch vector {self} lies outside the unit ball (|r| = {})",
                self.norm()
            )));
        }
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn is_pure(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= ACCUM_TOL
    }

    pub fn scaled(&self, s: f64) -> BlochVector {
        BlochVector::raw(self.x * s, self.y * s, self.z * s)
    }

    pub fn plus(&self, other: &BlochVector) -> BlochVector {
        BlochVector::raw(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn minus(&self, other: &BlochVector) -> BlochVector {
        BlochVector::raw(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl fmt::Display for BlochVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.x, self.y, self.z)
    }
}

/// Parses the `x,y,z` triple used in config files and CSV.
impl FromStr for BlochVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidState(format!(
                "expected `x,y,z`, got `{s}`"
            )));
        }
        let mut xyz = [0.0; 3];
        for (slot, part) in xyz.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::InvalidState(format!("`{part}` is not a number")))?;
        }
        BlochVector::new(xyz[0], xyz[1], xyz[2])
    }
}

/// A validated qubit density matrix: Hermitian, unit trace, positive
/// semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    entries: Mat2,
}

impl DensityMatrix {
    pub fn new(entries: Mat2) -> Result<Self> {
        let herm = linalg::hermiticity_defect(&entries);
        if herm > EXACT_TOL {
            return Err(Error::InvalidState(format!(
                "matrix is not Hermitian (defect {herm:e})"
            )));
        }
        let tr = linalg::trace(&entries);
        if (tr - C64::new(1.0, 0.0)).norm() > EXACT_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, not 1")));
        }
        let (vals, _) = linalg::hermitian_eigen(&entries);
        if vals[0] < -ACCUM_TOL {
            return Err(Error::InvalidState(format!(
                "matrix is not positive semidefinite (eigenvalue {})",
                vals[0]
            )));
        }
        Ok(DensityMatrix { entries })
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix {
            entries: linalg::scale_re(&linalg::IDENTITY, 0.5),
        }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.entries[i][j]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        linalg::hermitian_eigen(&self.entries).0
    }
}

/// ρ = (𝟙 + xσ_x + yσ_y + zσ_z)/2.
pub fn bloch_to_density(r: BlochVector) -> Result<DensityMatrix> {
    r.validate()?;
    Ok(DensityMatrix {
        entries: bloch_matrix(&r),
    })
}

/// The matrix ½(c𝟙 + r·σ) for an arbitrary real triple; c = 1 gives a
/// state, c = 0 gives the traceless matrix whose Bloch components are r.
pub(crate) fn bloch_combination(c: f64, r: &BlochVector) -> Mat2 {
    [
        [
            C64::new(0.5 * (c + r.z), 0.0),
            C64::new(0.5 * r.x, -0.5 * r.y),
        ],
        [
            C64::new(0.5 * r.x, 0.5 * r.y),
            C64::new(0.5 * (c - r.z), 0.0),
        ],
    ]
}

fn bloch_matrix(r: &BlochVector) -> Mat2 {
    bloch_combination(1.0, r)
}

/// Components Tr(M σ_i) of any 2×2 matrix, keeping only the real parts.
/// For a traceless Hermitian matrix M = ½ v·σ this returns v.
pub fn pauli_components(m: &Mat2) -> BlochVector {
    BlochVector::raw(
        linalg::trace_product(m, &linalg::SIGMA_X).re,
        linalg::trace_product(m, &linalg::SIGMA_Y).re,
        linalg::trace_product(m, &linalg::SIGMA_Z).re,
    )
}

/// r_i = Tr(ρ σ_i).
pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    // Re-validate: the fields are private, but this keeps the contract local.
    let rho = DensityMatrix::new(rho.entries)?;
    let r = pauli_components(&rho.entries);
    r.validate()?;
    Ok(r)
}

/// Tr(ρ²).
pub fn purity(rho: &DensityMatrix) -> f64 {
    linalg::trace_product(&rho.entries, &rho.entries).re
}

/// (1 + |r|²)/2, the Bloch-form purity.
pub fn purity_bloch(r: &BlochVector) -> f64 {
    0.5 * (1.0 + r.norm_sqr())
}
