//! Matrix multiplication and well-conditioned inversion through eigenvalue
//! estimation, followed by a conditional ancilla rotation and
//! post-selection.
//!
//! `Ideal` mode rounds exact eigenvalues to a grid of spacing `ε`. `Circuit`
//! mode simulates a `b`-bit phase register with controlled powers of
//! `U = e^{iHt₀}` and decodes signed eigenvalues in two's complement.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, HermitianEigen, ZERO};
use crate::state::QuantumState;

pub const MAX_BITS: usize = 12;
const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeMode {
    Ideal,
    Circuit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PEConfig {
    pub mode: PeMode,
    /// Register size in circuit mode.
    pub bits: usize,
    /// Eigenvalue grid spacing in ideal mode.
    pub epsilon: f64,
    pub t0: f64,
    pub lambda_cut: f64,
}

impl PEConfig {
    pub fn ideal(epsilon: f64, lambda_cut: f64) -> Self {
        Self {
            mode: PeMode::Ideal,
            bits: 0,
            epsilon,
            t0: 0.0,
            lambda_cut,
        }
    }

    pub fn circuit(bits: usize, t0: f64, lambda_cut: f64) -> Self {
        Self {
            mode: PeMode::Circuit,
            bits,
            epsilon: 2.0 * PI / ((1u64 << bits.min(63)) as f64 * t0),
            t0,
            lambda_cut,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PeMode::Ideal => {
                if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "epsilon must be > 0, got {}",
                        self.epsilon
                    )));
                }
            }
            PeMode::Circuit => {
                if self.bits == 0 || self.bits > MAX_BITS {
                    return Err(Error::InvalidParameter(format!(
                        "bits must be in 1..={MAX_BITS}, got {}",
                        self.bits
                    )));
                }
                if !(self.t0.is_finite() && self.t0 > 0.0) {
                    return Err(Error::InvalidParameter(format!("t0 must be > 0, got {}", self.t0)));
                }
            }
        }
        if !(self.lambda_cut.is_finite() && self.lambda_cut > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda_cut must be > 0, got {}",
                self.lambda_cut
            )));
        }
        Ok(())
    }

    /// Largest `t₀` that keeps eigenvalues of magnitude `lambda` free of aliasing.
    pub fn safe_t0(lambda: f64) -> f64 {
        if lambda > 0.0 {
            PI / lambda
        } else {
            1.0
        }
    }
}

/// Eigenvalues (ascending), eigenvectors and their `ε`-binned values.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub binned: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn new(h: &CMatrix, epsilon: f64) -> Result<Self> {
        let HermitianEigen { values, vectors } = linalg::hermitian_eigen_checked(h, HERMITIAN_TOL)?;
        let binned = values.iter().map(|&l| bin(l, epsilon)).collect();
        Ok(Self {
            eigenvalues: values,
            eigenvectors: vectors,
            binned,
        })
    }

    pub fn reconstruct(&self) -> CMatrix {
        HermitianEigen {
            values: self.eigenvalues.clone(),
            vectors: self.eigenvectors.clone(),
        }
        .reconstruct_with(linalg::c)
    }

    /// Components of `v` in the eigenbasis.
    pub fn coefficients(&self, v: &CVector) -> CVector {
        self.eigenvectors.adjoint() * v
    }

    fn synthesize(&self, coeffs: &CVector) -> CVector {
        &self.eigenvectors * coeffs
    }
}

fn bin(lambda: f64, epsilon: f64) -> f64 {
    (lambda / epsilon).round() * epsilon
}

/// Post-selected output of a multiplication or inversion.
#[derive(Debug, Clone)]
pub struct PEOutput {
    /// Unnormalized accepted vector.
    pub vector: CVector,
    pub success_prob: f64,
    /// Probability of every rejected branch, computed separately.
    pub reject_prob: f64,
}

/// Result of simulating the phase-estimation circuit.
#[derive(Debug, Clone)]
pub struct PECircuitResult {
    /// Outcome probabilities indexed by register value `k`.
    pub histogram: Vec<f64>,
    /// Decoded eigenvalue for each outcome.
    pub decoded: Vec<f64>,
    /// Joint state, column `k` holding the system amplitudes for register `k`.
    pub joint: CMatrix,
}

impl PECircuitResult {
    pub fn modal_outcome(&self) -> usize {
        self.histogram
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

/// Decoded eigenvalue for register value `k` of a `b`-bit register.
pub fn decode_outcome(k: usize, bits: usize, t0: f64) -> f64 {
    let m = 1usize << bits;
    let signed = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
    2.0 * PI * signed / (m as f64 * t0)
}

fn check_aliasing(spec: &SpectralDecomposition, t0: f64) -> Result<()> {
    let worst = spec.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs())) * t0;
    if worst > PI * (1.0 + 1e-12) {
        return Err(Error::PhaseAliasing(worst));
    }
    Ok(())
}

/// Forward circuit on a prepared decomposition. Column `r` of the
/// pre-transform state holds `U^r x / √M`; the inverse QFT is a direct DFT.
fn forward_pe(spec: &SpectralDecomposition, x: &CVector, bits: usize, t0: f64) -> CMatrix {
    let m = 1usize << bits;
    let n = x.len();
    let beta = spec.coefficients(x);
    let norm = 1.0 / m as f64;
    // joint[:, k] = Σ_j β_j u_j · (1/M) Σ_r e^{i r (λ_j t0 − 2πk/M)}
    let mut coeff = CMatrix::zeros(n, m);
    for (j, &lam) in spec.eigenvalues.iter().enumerate() {
        let phase = lam * t0;
        for k in 0..m {
            let delta = phase - 2.0 * PI * k as f64 / m as f64;
            let mut acc = ZERO;
            for r in 0..m {
                acc += Complex64::from_polar(1.0, delta * r as f64);
            }
            coeff[(j, k)] = beta[j] * acc * norm;
        }
    }
    &spec.eigenvectors * coeff
}

/// Inverse circuit followed by projecting the register onto `|0⟩`.
fn inverse_pe_project(spec: &SpectralDecomposition, joint: &CMatrix, bits: usize, t0: f64) -> CVector {
    let m = 1usize << bits;
    let norm = 1.0 / m as f64;
    let coeff = spec.eigenvectors.adjoint() * joint;
    let mut out = CVector::zeros(joint.nrows());
    for (j, &lam) in spec.eigenvalues.iter().enumerate() {
        let phase = lam * t0;
        for k in 0..m {
            let delta = phase - 2.0 * PI * k as f64 / m as f64;
            let mut acc = ZERO;
            for r in 0..m {
                acc += Complex64::from_polar(1.0, -delta * r as f64);
            }
            out[j] += coeff[(j, k)] * acc * norm;
        }
    }
    spec.synthesize(&out)
}

/// Simulates `b`-bit phase estimation of `U = e^{iHt₀}` on `x`.
pub fn pe_circuit(h: &CMatrix, x: &QuantumState, bits: usize, t0: f64) -> Result<PECircuitResult> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::InvalidParameter(format!("bits must be in 1..={MAX_BITS}")));
    }
    check_dim(h, x.amplitudes())?;
    let spec = SpectralDecomposition::new(h, 1.0)?;
    check_aliasing(&spec, t0)?;
    let joint = forward_pe(&spec, x.amplitudes(), bits, t0);
    let m = 1usize << bits;
    let histogram = (0..m).map(|k| joint.column(k).norm_squared()).collect();
    let decoded = (0..m).map(|k| decode_outcome(k, bits, t0)).collect();
    Ok(PECircuitResult {
        histogram,
        decoded,
        joint,
    })
}

fn check_dim(h: &CMatrix, v: &CVector) -> Result<()> {
    if h.nrows() != v.len() || h.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Applies an amplitude map `g(λ̃)` with `|g| ≤ 1` to the eigencomponents of
/// `v` and post-selects the accepted branch.
fn conditional_rotation<G: Fn(f64) -> f64>(
    h: &CMatrix,
    v: &CVector,
    cfg: &PEConfig,
    g: G,
) -> Result<PEOutput> {
    check_dim(h, v)?;
    let in_norm2 = v.norm_squared();
    if !in_norm2.is_finite() {
        return Err(Error::InvalidParameter("input vector is not finite".into()));
    }
    if in_norm2 == 0.0 {
        return Err(Error::NullState("zero input vector".into()));
    }
    match cfg.mode {
        PeMode::Ideal => {
            let spec = SpectralDecomposition::new(h, cfg.epsilon)?;
            let beta = spec.coefficients(v);
            let mut accepted = CVector::zeros(v.len());
            let mut reject = 0.0;
            for (j, &lt) in spec.binned.iter().enumerate() {
                let amp = g(lt);
                accepted[j] = beta[j] * amp;
                reject += (1.0 - amp * amp) * beta[j].norm_sqr();
            }
            let vector = spec.synthesize(&accepted);
            Ok(PEOutput {
                success_prob: (vector.norm_squared() / in_norm2).clamp(0.0, 1.0),
                reject_prob: (reject / in_norm2).clamp(0.0, 1.0),
                vector,
            })
        }
        PeMode::Circuit => {
            let spec = SpectralDecomposition::new(h, 1.0)?;
            check_aliasing(&spec, cfg.t0)?;
            let joint = forward_pe(&spec, v, cfg.bits, cfg.t0);
            let m = 1usize << cfg.bits;
            let mut yes = CMatrix::zeros(v.len(), m);
            let mut reject_no = 0.0;
            for k in 0..m {
                let amp = g(decode_outcome(k, cfg.bits, cfg.t0));
                let col = joint.column(k);
                yes.set_column(k, &(col * Complex64::new(amp, 0.0)));
                reject_no += (1.0 - amp * amp) * col.norm_squared();
            }
            let vector = inverse_pe_project(&spec, &yes, cfg.bits, cfg.t0);
            let accepted = vector.norm_squared();
            // Yes-branch weight left on register values other than |0⟩.
            let garbage = (yes.norm_squared() - accepted).max(0.0);
            Ok(PEOutput {
                success_prob: (accepted / in_norm2).clamp(0.0, 1.0),
                reject_prob: ((reject_no + garbage) / in_norm2).clamp(0.0, 1.0),
                vector,
            })
        }
    }
}

/// Post-selected `Σ_j ξ λ̃_j β_j |u_j⟩` and its success probability.
pub fn apply_matrix_multiplication(
    h: &CMatrix,
    x: &QuantumState,
    cfg: &PEConfig,
    xi: f64,
) -> Result<PEOutput> {
    cfg.validate()?;
    let spec = SpectralDecomposition::new(h, cfg.epsilon)?;
    let lmax = spec.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    if !(xi.is_finite() && xi >= 0.0) || xi * lmax > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "xi = {xi} violates xi * max|lambda| = {} <= 1",
            xi * lmax
        )));
    }
    conditional_rotation(h, x.amplitudes(), cfg, |l| (xi * l).clamp(-1.0, 1.0))
}

/// Inverts `H` on its well-conditioned subspace `|λ̃| ≥ λ_cut` with
/// amplitude `ξ_H/λ̃` (or `ξ_H/|λ̃|` when `saddle_free`); the rest is rejected.
pub fn apply_matrix_inversion(
    h: &CMatrix,
    y: &CVector,
    cfg: &PEConfig,
    xi_h: f64,
    saddle_free: bool,
) -> Result<PEOutput> {
    cfg.validate()?;
    let cut = cfg.lambda_cut;
    // The rotation needs |ξ_H/λ̃| ≤ 1 on every kept eigenvalue estimate;
    // ξ_H ≤ λ_cut is sufficient.
    let kept_min = match cfg.mode {
        PeMode::Ideal => SpectralDecomposition::new(h, cfg.epsilon)?
            .binned
            .iter()
            .map(|l| l.abs())
            .filter(|&l| l >= cut)
            .fold(f64::INFINITY, f64::min),
        PeMode::Circuit => (0..1usize << cfg.bits)
            .map(|k| decode_outcome(k, cfg.bits, cfg.t0).abs())
            .filter(|&l| l >= cut)
            .fold(f64::INFINITY, f64::min),
    };
    if !(xi_h.is_finite() && xi_h > 0.0) || xi_h > kept_min.max(cut) {
        return Err(Error::InvalidParameter(format!(
            "xi_H = {xi_h} exceeds the smallest kept eigenvalue magnitude {}",
            kept_min.max(cut)
        )));
    }
    conditional_rotation(h, y, cfg, |l| {
        if l.abs() < cut {
            0.0
        } else if saddle_free {
            xi_h / l.abs()
        } else {
            xi_h / l
        }
    })
}
