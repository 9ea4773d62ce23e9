//! Pure states and density matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, RVector};

/// Unit-norm complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState(CVector);

const NORM_TOL: f64 = 1e-10;

impl QuantumState {
    /// Wraps an amplitude vector that is already unit norm.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "state must be unit norm, got |x| = {norm}"
            )));
        }
        Ok(Self(amplitudes))
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(v: CVector) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NullState(format!("cannot normalize |v| = {norm}")));
        }
        Ok(Self(v.unscale(norm)))
    }

    pub fn from_real(v: &[f64]) -> Result<Self> {
        Self::normalize(CVector::from_iterator(v.len(), v.iter().map(|&x| c(x))))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = linalg::ONE;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    /// Real parts of the amplitudes.
    pub fn real_part(&self) -> RVector {
        self.0.map(|z| z.re)
    }

    /// Whether all imaginary parts vanish to `tol`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.0.iter().all(|z| z.im.abs() <= tol)
    }

    /// Multiplies by a global phase so that the largest amplitude is real
    /// and positive.
    pub fn canonical_phase(&self) -> Self {
        let pivot = self
            .0
            .iter()
            .cloned()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(linalg::ONE);
        if pivot.norm() == 0.0 {
            return self.clone();
        }
        let phase = pivot.conj() / pivot.norm();
        Self(self.0.map(|z| z * phase))
    }

    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        linalg::fidelity(&self.0, &other.0)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(linalg::outer(&self.0))
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

/// Tolerances used when validating a density matrix.
#[derive(Debug, Clone, Copy)]
pub struct DensityTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub eigen_floor: f64,
}

impl DensityTolerance {
    pub const STRICT: Self = Self {
        hermitian: 1e-12,
        trace: 1e-10,
        eigen_floor: -1e-10,
    };
    /// Looser bounds for outputs of long unitary/partial-trace pipelines.
    pub const CHANNEL: Self = Self {
        hermitian: 1e-9,
        trace: 1e-9,
        eigen_floor: -1e-9,
    };
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, DensityTolerance::STRICT)
    }

    pub fn with_tolerance(m: CMatrix, tol: DensityTolerance) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let dev = linalg::hermitian_deviation(&m);
        if dev > tol.hermitian {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {dev:.3e})"
            )));
        }
        let tr = linalg::trace(&m);
        if (tr - linalg::ONE).norm() > tol.trace {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} != 1")));
        }
        let eig = linalg::hermitian_eigen(&m);
        if let Some(&min) = eig.values.first() {
            if min < tol.eigen_floor {
                return Err(Error::InvalidDensityMatrix(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self(linalg::hermitize(&m)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim).map(|z| z / dim as f64))
    }

    /// Convex mixture of pure states.
    pub fn mixture(weights: &[f64], states: &[QuantumState]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::InvalidParameter(
                "mixture needs matching, nonempty weights and states".into(),
            ));
        }
        let dim = states[0].dim();
        let mut m = CMatrix::zeros(dim, dim);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
            m += linalg::outer(s.amplitudes()).map(|z| z * *w);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        linalg::trace_distance(&self.0, &other.0)
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    /// `ρ^{⊗k}`.
    pub fn tensor_power(&self, k: usize) -> CMatrix {
        let mut out = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for _ in 0..k {
            out = linalg::kron(&out, &self.0);
        }
        out
    }
}
