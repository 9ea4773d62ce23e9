//! Constrained polynomial optimization problems.
//!
//! A homogeneous polynomial of degree `2p` over `x ∈ R^N` is stored as an
//! algebraic form `f(x) = ½ (x⊗…⊗x)ᵀ A (x⊗…⊗x)` with a sparse symmetric
//! `N^p × N^p` matrix `A`. Optional inhomogeneous terms
//! `(c_jᵀx) Π_i (xᵀ B_ij x)` extend it to odd-degree monomials.
//!
//! Tensor indices are row-major over registers: register 1 is the most
//! significant digit of an index in `[0, N^p)`.

mod parse;

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix, RVector};

pub use parse::load_problem;

/// Largest supported `N^p`.
pub const SIZE_CAP: usize = 256;

/// Splits a tensor index into its `p` register digits (register 1 first).
pub fn digits(index: usize, base: usize, p: usize) -> Vec<usize> {
    let mut out = vec![0; p];
    let mut rest = index;
    for k in (0..p).rev() {
        out[k] = rest % base;
        rest /= base;
    }
    out
}

/// Inverse of [`digits`].
pub fn compose(digits: &[usize], base: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * base + d)
}

/// Homogeneous even-order polynomial in algebraic form.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicForm {
    p: usize,
    n: usize,
    dim: usize,
    entries: BTreeMap<(usize, usize), f64>,
    lambda_override: Option<f64>,
}

impl AlgebraicForm {
    /// Builds a form from raw `(row, col, value)` triples.
    ///
    /// Duplicates are summed. The result is then averaged over every
    /// register-wise partial transpose of `A` (which includes the full
    /// transpose), so every stored form is symmetric and invariant under
    /// swapping row/column digits of any single register. The quadratic
    /// form, gradient and Hessian are unchanged by this averaging.
    pub fn new(
        p: usize,
        n: usize,
        raw: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        if n == 0 || n > 8 {
            return Err(Error::InvalidParameter(format!(
                "n must be in 1..=8, got {n}"
            )));
        }
        let dim = 1usize << n;
        let size = (dim as u128).pow(p as u32);
        if size > SIZE_CAP as u128 {
            return Err(Error::SizeCap {
                size: size.min(usize::MAX as u128) as usize,
                cap: SIZE_CAP,
            });
        }
        let size = size as usize;

        let mut summed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in raw {
            if r >= size || c >= size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    got: r.max(c),
                });
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite entry ({r}, {c})"
                )));
            }
            *summed.entry((r, c)).or_insert(0.0) += v;
        }

        let weight = 1.0 / (1u64 << p) as f64;
        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(r, c), &v) in &summed {
            if v == 0.0 {
                continue;
            }
            let rd = digits(r, dim, p);
            let cd = digits(c, dim, p);
            for mask in 0..(1usize << p) {
                let mut rr = rd.clone();
                let mut cc = cd.clone();
                for k in 0..p {
                    if mask & (1 << k) != 0 {
                        std::mem::swap(&mut rr[k], &mut cc[k]);
                    }
                }
                *entries
                    .entry((compose(&rr, dim), compose(&cc, dim)))
                    .or_insert(0.0) += weight * v;
            }
        }
        entries.retain(|_, v| v.abs() > 1e-300);

        Ok(Self {
            p,
            n,
            dim,
            entries,
            lambda_override: None,
        })
    }

    /// Builds `A = F_1 ⊗ … ⊗ F_p` from `N × N` factors.
    pub fn from_factors(factors: &[RMatrix]) -> Result<Self> {
        let dim = factors
            .first()
            .ok_or_else(|| Error::InvalidParameter("need at least one factor".into()))?
            .nrows();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "factor dimension {dim} is not a power of two >= 2"
            )));
        }
        let mut a = RMatrix::from_element(1, 1, 1.0);
        for f in factors {
            if f.nrows() != dim || f.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.nrows(),
                });
            }
            a = a.kronecker(f);
        }
        Self::from_dense(factors.len(), dim.trailing_zeros() as usize, &a)
    }

    pub fn from_dense(p: usize, n: usize, a: &RMatrix) -> Result<Self> {
        let mut raw = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    raw.push((i, j, a[(i, j)]));
                }
            }
        }
        let form = Self::new(p, n, raw)?;
        if a.nrows() != form.size() {
            return Err(Error::DimensionMismatch {
                expected: form.size(),
                got: a.nrows(),
            });
        }
        Ok(form)
    }

    /// Random sparse form with roughly `nnz_per_row` stored entries per row
    /// and values uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(p: usize, n: usize, nnz_per_row: usize, rng: &mut R) -> Result<Self> {
        let dim = 1usize << n;
        let size = dim.pow(p as u32);
        let mut raw = Vec::new();
        for r in 0..size.min(SIZE_CAP) {
            for _ in 0..nnz_per_row {
                let c = rng.random_range(0..size);
                raw.push((r, c, rng.random_range(-1.0..1.0)));
            }
        }
        Self::new(p, n, raw)
    }

    /// Accepts a user-supplied `Λ_A` if it is at least the exact spectral norm.
    pub fn with_lambda_override(mut self, lambda: f64) -> Result<Self> {
        let exact = self.spectral_norm();
        if !(lambda.is_finite() && lambda >= exact * (1.0 - 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "lambda_A override {lambda} is below the exact norm {exact}"
            )));
        }
        self.lambda_override = Some(lambda);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Per-register dimension `N = 2^n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `N^p`.
    pub fn size(&self) -> usize {
        self.dim.pow(self.p as u32)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn lambda_override(&self) -> Option<f64> {
        self.lambda_override
    }

    pub fn dense(&self) -> RMatrix {
        let s = self.size();
        let mut a = RMatrix::zeros(s, s);
        for (r, c, v) in self.entries() {
            a[(r, c)] = v;
        }
        a
    }

    pub fn dense_complex(&self) -> CMatrix {
        linalg::to_complex_matrix(&self.dense())
    }

    pub fn spectral_norm(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        linalg::symmetric_norm(&self.dense())
    }

    /// Maximum number of stored entries in any row or column.
    pub fn sparsity(&self) -> usize {
        let mut rows = vec![0usize; self.size()];
        let mut cols = vec![0usize; self.size()];
        for (r, c, _) in self.entries() {
            rows[r] += 1;
            cols[c] += 1;
        }
        rows.into_iter().chain(cols).max().unwrap_or(0)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    /// `½ Xᵀ A X` with `X = x^{⊗p}`.
    pub fn evaluate(&self, x: &RVector) -> Result<f64> {
        self.check_dim(x.len())?;
        let mut total = 0.0;
        for (r, c, v) in self.entries() {
            total += v * self.tensor_entry(r, x) * self.tensor_entry(c, x);
        }
        Ok(0.5 * total)
    }

    fn tensor_entry(&self, index: usize, x: &RVector) -> f64 {
        digits(index, self.dim, self.p).iter().map(|&d| x[d]).product()
    }

    /// `∇f(x)` by contracting `A` against `(p−1)`-fold tensor powers of `x`.
    pub fn gradient(&self, x: &RVector) -> Result<RVector> {
        self.check_dim(x.len())?;
        let mut g = RVector::zeros(self.dim);
        for (r, c, v) in self.entries() {
            let rd = digits(r, self.dim, self.p);
            let xc = self.tensor_entry(c, x);
            for (k, excl) in products_excluding_one(&rd, x).into_iter().enumerate() {
                g[rd[k]] += v * xc * excl;
            }
        }
        Ok(g)
    }

    /// Hessian of the homogeneous part.
    pub fn hessian(&self, x: &RVector) -> Result<RMatrix> {
        self.check_dim(x.len())?;
        let p = self.p;
        let mut h = RMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            let rd = digits(r, self.dim, p);
            let cd = digits(c, self.dim, p);
            let pr = products_excluding_one(&rd, x);
            let pc = products_excluding_one(&cd, x);
            for k in 0..p {
                for l in 0..p {
                    h[(rd[k], cd[l])] += v * pr[k] * pc[l];
                }
            }
            if p >= 2 {
                let xc: f64 = cd.iter().map(|&d| x[d]).product();
                for k in 0..p {
                    for l in 0..p {
                        if k == l {
                            continue;
                        }
                        let rest: f64 = (0..p)
                            .filter(|&i| i != k && i != l)
                            .map(|i| x[rd[i]])
                            .product();
                        h[(rd[k], rd[l])] += v * xc * rest;
                    }
                }
            }
        }
        Ok(h)
    }

    /// Gradient operator `D(ρ)` evaluated by direct sparse contraction:
    /// `D_{mn} = Σ_k Σ_{(r,c)} A_{rc} δ(r_k=m) δ(c_k=n) Π_{k'≠k} ρ_{c_k' r_k'}`.
    ///
    /// For a pure real state `ρ = xxᵀ` this satisfies `D(ρ) x = ∇f(x)`.
    pub fn gradient_operator_contracted(&self, rho: &CMatrix) -> Result<CMatrix> {
        self.check_dim(rho.nrows())?;
        let mut d = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            let rd = digits(r, self.dim, self.p);
            let cd = digits(c, self.dim, self.p);
            for k in 0..self.p {
                let mut w = Complex64::new(v, 0.0);
                for i in (0..self.p).filter(|&i| i != k) {
                    w *= rho[(cd[i], rd[i])];
                }
                d[(rd[k], cd[k])] += w;
            }
        }
        Ok(d)
    }
}

/// `out[k] = Π_{i≠k} x[idx[i]]` without division.
fn products_excluding_one(idx: &[usize], x: &RVector) -> Vec<f64> {
    let p = idx.len();
    let mut prefix = vec![1.0; p + 1];
    for i in 0..p {
        prefix[i + 1] = prefix[i] * x[idx[i]];
    }
    let mut out = vec![0.0; p];
    let mut suffix = 1.0;
    for k in (0..p).rev() {
        out[k] = prefix[k] * suffix;
        suffix *= x[idx[k]];
    }
    out
}

/// One inhomogeneous term `(c_jᵀ x) Π_{i=1}^{j−1} (xᵀ B_ij x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InhomogeneousTerm {
    j: usize,
    c: RVector,
    b: Vec<RMatrix>,
}

impl InhomogeneousTerm {
    /// `b` must hold exactly `j − 1` square matrices; each is symmetrized.
    pub fn new(j: usize, c: RVector, b: Vec<RMatrix>) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidParameter("level j must be >= 1".into()));
        }
        if b.len() != j - 1 {
            return Err(Error::InvalidParameter(format!(
                "level j = {j} needs {} B matrices, got {}",
                j - 1,
                b.len()
            )));
        }
        let n = c.len();
        let mut sym = Vec::with_capacity(b.len());
        for m in b {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.nrows(),
                });
            }
            sym.push((&m + m.transpose()) * 0.5);
        }
        if c.iter().chain(sym.iter().flat_map(|m| m.iter())).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite inhomogeneous coefficient".into()));
        }
        Ok(Self { j, c, b: sym })
    }

    pub fn level(&self) -> usize {
        self.j
    }

    pub fn c(&self) -> &RVector {
        &self.c
    }

    pub fn b(&self) -> &[RMatrix] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    fn quadratic_values(&self, x: &RVector) -> Vec<f64> {
        self.b.iter().map(|m| x.dot(&(m * x))).collect()
    }

    pub fn evaluate(&self, x: &RVector) -> f64 {
        self.c.dot(x) * self.quadratic_values(x).iter().product::<f64>()
    }

    pub fn gradient(&self, x: &RVector) -> RVector {
        let q = self.quadratic_values(x);
        let lin = self.c.dot(x);
        let prod: f64 = q.iter().product();
        let mut g = &self.c * prod;
        for (i, m) in self.b.iter().enumerate() {
            let others: f64 = q.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, v)| v).product();
            g += (m * x) * (2.0 * lin * others);
        }
        g
    }

    pub fn hessian(&self, x: &RVector) -> RMatrix {
        let n = self.c.len();
        let q = self.quadratic_values(x);
        let lin = self.c.dot(x);
        let bx: Vec<RVector> = self.b.iter().map(|m| m * x).collect();
        let excl = |skip: &[usize]| -> f64 {
            q.iter()
                .enumerate()
                .filter(|(k, _)| !skip.contains(k))
                .map(|(_, v)| v)
                .product()
        };
        // gradient of Π q
        let mut gq = RVector::zeros(n);
        for i in 0..bx.len() {
            gq += &bx[i] * (2.0 * excl(&[i]));
        }
        let mut h = &self.c * gq.transpose() + &gq * self.c.transpose();
        for i in 0..self.b.len() {
            h += &self.b[i] * (2.0 * lin * excl(&[i]));
            for k in 0..self.b.len() {
                if k != i {
                    h += (&bx[i] * bx[k].transpose()) * (4.0 * lin * excl(&[i, k]));
                }
            }
        }
        h
    }
}

/// Homogeneous part plus optional inhomogeneous terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialProblem {
    hom: AlgebraicForm,
    inhom: Vec<InhomogeneousTerm>,
    lambda_cut: Option<f64>,
}

impl PolynomialProblem {
    pub fn new(hom: AlgebraicForm, inhom: Vec<InhomogeneousTerm>) -> Result<Self> {
        for t in &inhom {
            if t.dim() != hom.dim() {
                return Err(Error::DimensionMismatch {
                    expected: hom.dim(),
                    got: t.dim(),
                });
            }
            // Odd degree 2j−1 must stay below the homogeneous degree 2p.
            if t.level() > hom.p() {
                return Err(Error::InvalidParameter(format!(
                    "inhomogeneous level j = {} exceeds p = {}",
                    t.level(),
                    hom.p()
                )));
            }
        }
        Ok(Self {
            hom,
            inhom,
            lambda_cut: None,
        })
    }

    pub fn homogeneous(hom: AlgebraicForm) -> Self {
        Self {
            hom,
            inhom: Vec::new(),
            lambda_cut: None,
        }
    }

    pub fn with_lambda_cut(mut self, cut: f64) -> Result<Self> {
        if !(cut.is_finite() && cut > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda_cut must be > 0, got {cut}")));
        }
        self.lambda_cut = Some(cut);
        Ok(self)
    }

    pub fn hom(&self) -> &AlgebraicForm {
        &self.hom
    }

    pub fn inhom(&self) -> &[InhomogeneousTerm] {
        &self.inhom
    }

    pub fn is_homogeneous(&self) -> bool {
        self.inhom.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.hom.dim()
    }

    pub fn p(&self) -> usize {
        self.hom.p()
    }

    /// Problem without its inhomogeneous terms.
    pub fn homogeneous_part(&self) -> Self {
        Self {
            hom: self.hom.clone(),
            inhom: Vec::new(),
            lambda_cut: self.lambda_cut,
        }
    }

    /// Well-conditioned threshold: file override, else `Λ_H / 32`.
    pub fn lambda_cut(&self) -> f64 {
        self.lambda_cut.unwrap_or_else(|| {
            let lh = norm_bounds(self).lambda_h;
            if lh > 0.0 {
                lh / 32.0
            } else {
                1.0 / 32.0
            }
        })
    }

    pub fn lambda_cut_override(&self) -> Option<f64> {
        self.lambda_cut
    }

    pub fn evaluate(&self, x: &RVector) -> Result<f64> {
        let mut f = self.hom.evaluate(x)?;
        for t in &self.inhom {
            f += t.evaluate(x);
        }
        Ok(f)
    }

    pub fn gradient(&self, x: &RVector) -> Result<RVector> {
        let mut g = self.hom.gradient(x)?;
        for t in &self.inhom {
            g += t.gradient(x);
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &RVector) -> Result<RMatrix> {
        let mut h = self.hom.hessian(x)?;
        for t in &self.inhom {
            h += t.hessian(x);
        }
        Ok(h)
    }

    /// Serializes to the line-oriented problem file format.
    pub fn to_problem_text(&self) -> String {
        let mut s = format!("p={} n={}", self.hom.p(), self.hom.n());
        if let Some(l) = self.hom.lambda_override() {
            s.push_str(&format!(" lambda_a={l:e}"));
        }
        if let Some(l) = self.lambda_cut {
            s.push_str(&format!(" lambda_cut={l:e}"));
        }
        s.push('\n');
        for (r, c, v) in self.hom.entries() {
            s.push_str(&format!("hom {r} {c} {v:e}\n"));
        }
        for t in &self.inhom {
            s.push_str(&format!("inhom j={}\n", t.level()));
            for (i, v) in t.c().iter().enumerate() {
                if *v != 0.0 {
                    s.push_str(&format!("c {i} {v:e}\n"));
                }
            }
            for (k, m) in t.b().iter().enumerate() {
                for r in 0..m.nrows() {
                    for col in 0..m.ncols() {
                        if m[(r, col)] != 0.0 {
                            s.push_str(&format!("B {} {r} {col} {:e}\n", k + 1, m[(r, col)]));
                        }
                    }
                }
            }
        }
        s
    }
}

/// Norm bounds of the homogeneous part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBounds {
    /// Exact spectral norm of `A`, or the accepted override.
    pub lambda_a: f64,
    /// `max(lambda_a, 1)`.
    pub lambda_a_clamped: f64,
    /// `p · Λ_A`.
    pub lambda_d: f64,
    /// `p(2p − 1) · Λ_A`, a valid bound on `‖H(x)‖` for unit `x`.
    pub lambda_h: f64,
    /// `p² · Λ_A`, the commonly quoted Hessian scale. Not a bound for p ≥ 2.
    pub lambda_h_nominal: f64,
    pub s_a: usize,
}

pub fn norm_bounds(problem: &PolynomialProblem) -> NormBounds {
    let a = problem.hom();
    let p = a.p() as f64;
    let lambda_a = a.lambda_override().unwrap_or_else(|| a.spectral_norm());
    NormBounds {
        lambda_a,
        lambda_a_clamped: lambda_a.max(1.0),
        lambda_d: p * lambda_a,
        lambda_h: p * (2.0 * p - 1.0) * lambda_a,
        lambda_h_nominal: p * p * lambda_a,
        s_a: a.sparsity(),
    }
}
