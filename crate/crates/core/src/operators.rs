//! State-dependent gradient and Hessian operators and the auxiliary matrices
//! `M_D`, `M_H1` from which they are obtained by partial traces.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE, ZERO};
use crate::state::DensityMatrix;
use crate::tensor_poly::{compose, digits, AlgebraicForm};

/// Which auxiliary matrix an [`AuxiliaryOperator`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    MD,
    MH1,
}

/// Auxiliary operator on `p` registers of dimension `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryOperator {
    pub kind: AuxKind,
    pub p: usize,
    pub n_dim: usize,
    pub data: CMatrix,
}

impl AuxiliaryOperator {
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn sparsity(&self) -> usize {
        linalg::sparsity(&self.data, 1e-14)
    }

    pub fn norm(&self) -> f64 {
        linalg::operator_norm(&self.data)
    }
}

/// Index permutation swapping register `j` (1-based) with register `p`.
pub fn permutation_q(j: usize, p: usize, n_dim: usize) -> Result<Vec<usize>> {
    if j == 0 || j > p {
        return Err(Error::InvalidParameter(format!(
            "register {j} outside 1..={p}"
        )));
    }
    let size = linalg::integer_pow(n_dim, p);
    Ok((0..size)
        .map(|i| {
            let mut d = digits(i, n_dim, p);
            d.swap(j - 1, p - 1);
            compose(&d, n_dim)
        })
        .collect())
}

/// `M_D = Σ_j Q_j A Q_jᵀ`.
pub fn build_md(a: &AlgebraicForm) -> AuxiliaryOperator {
    let (p, nd) = (a.p(), a.dim());
    let mut m = CMatrix::zeros(a.size(), a.size());
    for j in 1..=p {
        let q = permutation_q(j, p, nd).expect("j in range");
        for (r, c, v) in a.entries() {
            m[(q[r], q[c])] += v;
        }
    }
    AuxiliaryOperator {
        kind: AuxKind::MD,
        p,
        n_dim: nd,
        data: m,
    }
}

/// `M_H1` on `p` registers, the last register being the slot of the state
/// the Hessian part acts on.
///
/// For each entry `A_{rc}` and ordered pair `k ≠ l` it places `2 A_{rc}` at
/// row `(r_rest, r_l, r_k)`, column `(c_rest, c_k, c_l)`, where `rest` runs
/// over the remaining registers in order. With the register-wise symmetric
/// forms produced by [`AlgebraicForm::new`] this gives
/// `H₁(ρ)σ = tr_{1..p−1}{M_H1 (ρ^{⊗p−1} ⊗ σ)}` and is Hermitian.
pub fn build_mh1(a: &AlgebraicForm) -> AuxiliaryOperator {
    let (p, nd) = (a.p(), a.dim());
    let mut m = CMatrix::zeros(a.size(), a.size());
    if p < 2 {
        log::info!("M_H1 requested for p = {p}; returning the zero operator");
    } else {
        for (r, c, v) in a.entries() {
            let rd = digits(r, nd, p);
            let cd = digits(c, nd, p);
            for k in 0..p {
                for l in 0..p {
                    if k == l {
                        continue;
                    }
                    let rest = (0..p).filter(|&i| i != k && i != l);
                    let mut row: Vec<usize> = rest.clone().map(|i| rd[i]).collect();
                    let mut col: Vec<usize> = rest.map(|i| cd[i]).collect();
                    row.extend([rd[l], rd[k]]);
                    col.extend([cd[k], cd[l]]);
                    m[(compose(&row, nd), compose(&col, nd))] += 2.0 * v;
                }
            }
        }
    }
    AuxiliaryOperator {
        kind: AuxKind::MH1,
        p,
        n_dim: nd,
        data: m,
    }
}

/// Partial trace of `m` over registers with dimensions `dims`, keeping the
/// registers listed in `keep` (0-based, in increasing order).
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            got: m.nrows(),
        });
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::InvalidParameter(format!(
            "keep = {keep:?} is not an increasing subset of 0..{}",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = keep_dims.iter().product();
    let tr_dim: usize = traced_dims.iter().product();

    let split = |i: usize, ds: &[usize]| -> Vec<usize> {
        let mut out = vec![0; ds.len()];
        let mut rest = i;
        for k in (0..ds.len()).rev() {
            out[k] = rest % ds[k];
            rest /= ds[k];
        }
        out
    };
    let full_index = |kept: &[usize], tr: &[usize]| -> usize {
        let mut idx = vec![0; dims.len()];
        for (pos, &k) in keep.iter().enumerate() {
            idx[k] = kept[pos];
        }
        for (pos, &k) in traced.iter().enumerate() {
            idx[k] = tr[pos];
        }
        idx.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
    };

    let mut out = CMatrix::zeros(out_dim, out_dim);
    for t in 0..tr_dim {
        let td = split(t, &traced_dims);
        let rows: Vec<usize> = (0..out_dim)
            .map(|i| full_index(&split(i, &keep_dims), &td))
            .collect();
        for (i, &ri) in rows.iter().enumerate() {
            for (j, &rj) in rows.iter().enumerate() {
                out[(i, j)] += m[(ri, rj)];
            }
        }
    }
    Ok(out)
}

fn check_rho(a: &AlgebraicForm, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: rho.dim(),
        });
    }
    Ok(())
}

/// `D(ρ) = tr_{1..p−1}{(ρ^{⊗p−1} ⊗ I) M_D}` from a prebuilt `M_D`.
pub fn gradient_operator_from(md: &AuxiliaryOperator, rho: &DensityMatrix) -> Result<CMatrix> {
    let (p, nd) = (md.p, md.n_dim);
    if rho.dim() != nd {
        return Err(Error::DimensionMismatch {
            expected: nd,
            got: rho.dim(),
        });
    }
    let left = linalg::kron(&rho.tensor_power(p - 1), &linalg::identity(nd));
    let prod = left * &md.data;
    Ok(linalg::hermitize(&partial_trace(
        &prod,
        &vec![nd; p],
        &[p - 1],
    )?))
}

pub fn gradient_operator_d(a: &AlgebraicForm, rho: &DensityMatrix) -> Result<CMatrix> {
    check_rho(a, rho)?;
    gradient_operator_from(&build_md(a), rho)
}

/// `H₁(ρ)σ = tr_{1..p−1}{M_H1 (ρ^{⊗p−1} ⊗ σ)}`.
pub fn apply_h1(mh1: &AuxiliaryOperator, rho: &DensityMatrix, sigma: &CMatrix) -> Result<CMatrix> {
    let (p, nd) = (mh1.p, mh1.n_dim);
    if rho.dim() != nd || sigma.nrows() != nd {
        return Err(Error::DimensionMismatch {
            expected: nd,
            got: rho.dim().max(sigma.nrows()),
        });
    }
    if p < 2 {
        return Ok(CMatrix::zeros(nd, nd));
    }
    let right = linalg::kron(&rho.tensor_power(p - 1), sigma);
    partial_trace(&(&mh1.data * right), &vec![nd; p], &[p - 1])
}

/// `H₁(ρ)` assembled by feeding the diagonal basis `|b⟩⟨b|` through [`apply_h1`].
pub fn hessian_part_h1(mh1: &AuxiliaryOperator, rho: &DensityMatrix) -> Result<CMatrix> {
    let nd = mh1.n_dim;
    let mut h1 = CMatrix::zeros(nd, nd);
    for b in 0..nd {
        let mut sigma = CMatrix::zeros(nd, nd);
        sigma[(b, b)] = ONE;
        h1 += apply_h1(mh1, rho, &sigma)?;
    }
    Ok(linalg::hermitize(&h1))
}

/// `H(ρ) = H₁(ρ) + D(ρ)` from prebuilt auxiliary matrices.
pub fn hessian_operator_from(
    md: &AuxiliaryOperator,
    mh1: &AuxiliaryOperator,
    rho: &DensityMatrix,
) -> Result<CMatrix> {
    Ok(hessian_part_h1(mh1, rho)? + gradient_operator_from(md, rho)?)
}

pub fn hessian_operator(a: &AlgebraicForm, rho: &DensityMatrix) -> Result<CMatrix> {
    check_rho(a, rho)?;
    hessian_operator_from(&build_md(a), &build_mh1(a), rho)
}

/// Dense matrix as `row,col,re,im` records (nonzero entries only).
pub fn dump_rows(m: &CMatrix) -> Vec<(usize, usize, f64, f64)> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z: Complex64 = m[(i, j)];
            if z != ZERO {
                out.push((i, j, z.re, z.im));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, to_complex_matrix, to_complex_vector, RMatrix, RVector};
    use crate::rng::{stream_rng, Stream};
    use crate::state::QuantumState;
    use crate::tensor_poly::PolynomialProblem;
    use rand::Rng;

    fn random_symmetric<R: Rng>(n: usize, rng: &mut R) -> RMatrix {
        let m = RMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    fn random_unit<R: Rng>(n: usize, rng: &mut R) -> RVector {
        RVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)).normalize()
    }

    fn random_mixed<R: Rng>(n: usize, rng: &mut R) -> DensityMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &g * g.adjoint();
        let tr = linalg::trace(&m);
        DensityMatrix::new(m.map(|z| z / tr)).unwrap()
    }

    fn pure(x: &RVector) -> DensityMatrix {
        QuantumState::new(to_complex_vector(x)).unwrap().density()
    }

    #[test]
    fn q_examples() {
        assert_eq!(permutation_q(1, 2, 2).unwrap(), vec![0, 2, 1, 3]);
        assert_eq!(permutation_q(2, 2, 2).unwrap(), vec![0, 1, 2, 3]);
        let q = permutation_q(1, 3, 2).unwrap();
        for i in 0..8 {
            assert_eq!(q[q[i]], i);
        }
        assert!(permutation_q(0, 2, 2).is_err());
        assert!(permutation_q(3, 2, 2).is_err());
    }

    #[test]
    fn md_for_p1_is_a() {
        let a = AlgebraicForm::new(1, 1, [(0, 0, 0.3), (0, 1, -0.2), (1, 1, 0.5)]).unwrap();
        assert_eq!(build_md(&a).data, a.dense_complex());
        assert_eq!(build_mh1(&a).data, CMatrix::zeros(2, 2));
    }

    #[test]
    fn md_matches_decomposition_sum() {
        let mut rng = stream_rng(21, Stream::Problem, 0);
        for _ in 0..10 {
            let b = random_symmetric(2, &mut rng);
            let cm = random_symmetric(2, &mut rng);
            let a = AlgebraicForm::from_factors(&[b.clone(), cm.clone()]).unwrap();
            let expected = to_complex_matrix(&(cm.kronecker(&b) + b.kronecker(&cm)));
            assert!(linalg::max_abs_diff(&build_md(&a).data, &expected) < 1e-12);
        }
        // p = 3 with a sum of two decomposable terms
        for _ in 0..5 {
            let f: Vec<RMatrix> = (0..6).map(|_| random_symmetric(2, &mut rng)).collect();
            let t1 = f[0].kronecker(&f[1]).kronecker(&f[2]);
            let t2 = f[3].kronecker(&f[4]).kronecker(&f[5]);
            let a = AlgebraicForm::from_dense(3, 1, &(t1 + t2)).unwrap();
            let mut expected = RMatrix::zeros(8, 8);
            for fs in [&f[0..3], &f[3..6]] {
                // register j moved to the last slot
                expected += fs[2].kronecker(&fs[1]).kronecker(&fs[0]);
                expected += fs[0].kronecker(&fs[2]).kronecker(&fs[1]);
                expected += fs[0].kronecker(&fs[1]).kronecker(&fs[2]);
            }
            assert!(linalg::max_abs_diff(&build_md(&a).data, &to_complex_matrix(&expected)) < 1e-12);
        }
    }

    #[test]
    fn d_reproduces_gradient_on_pure_states() {
        let mut rng = stream_rng(22, Stream::Problem, 0);
        for trial in 0..50 {
            let p = 1 + trial % 3;
            let n = if p == 3 { 1 } else { 1 + trial % 2 };
            let a = AlgebraicForm::random(p, n, 2, &mut rng).unwrap();
            let x = random_unit(1 << n, &mut rng);
            let d = gradient_operator_d(&a, &pure(&x)).unwrap();
            assert!(linalg::hermitian_deviation(&d) < 1e-10);
            let dx = &d * to_complex_vector(&x);
            let g = a.gradient(&x).unwrap();
            for i in 0..g.len() {
                assert!((dx[i] - c(g[i])).norm() < 1e-10);
            }
            let direct = a.gradient_operator_contracted(pure(&x).matrix()).unwrap();
            assert!(linalg::max_abs_diff(&d, &direct) < 1e-12);
        }
    }

    #[test]
    fn d_for_p1_ignores_rho() {
        let a = AlgebraicForm::new(1, 1, [(0, 0, 0.3), (0, 1, -0.2), (1, 1, 0.5)]).unwrap();
        let mut rng = stream_rng(23, Stream::Problem, 0);
        let d = gradient_operator_d(&a, &random_mixed(2, &mut rng)).unwrap();
        assert!(linalg::max_abs_diff(&d, &a.dense_complex()) < 1e-15);
    }

    #[test]
    fn d_for_decomposable_a() {
        let mut rng = stream_rng(24, Stream::Problem, 0);
        let b = random_symmetric(2, &mut rng);
        let cm = random_symmetric(2, &mut rng);
        let a = AlgebraicForm::from_factors(&[b.clone(), cm.clone()]).unwrap();
        let rho = random_mixed(2, &mut rng);
        let (bc, cc) = (to_complex_matrix(&b), to_complex_matrix(&cm));
        let tr_b = linalg::trace(&(rho.matrix() * &bc));
        let tr_c = linalg::trace(&(rho.matrix() * &cc));
        let expected = cc.map(|z| z * tr_b) + bc.map(|z| z * tr_c);
        let d = gradient_operator_d(&a, &rho).unwrap();
        assert!(linalg::max_abs_diff(&d, &expected) < 1e-12);
    }

    #[test]
    fn hessian_matches_classical_on_pure_states() {
        let mut rng = stream_rng(25, Stream::Problem, 0);
        for trial in 0..40 {
            let p = 1 + trial % 3;
            let n = if p == 3 { 1 } else { 1 + trial % 2 };
            let a = AlgebraicForm::random(p, n, 2, &mut rng).unwrap();
            let x = random_unit(1 << n, &mut rng);
            let rho = pure(&x);
            let h = hessian_operator(&a, &rho).unwrap();
            let classical = to_complex_matrix(&a.hessian(&x).unwrap());
            assert!(linalg::max_abs_diff(&h, &classical) < 1e-8, "trial {trial}");
            let mh1 = build_mh1(&a);
            let h1 = hessian_part_h1(&mh1, &rho).unwrap();
            let d = gradient_operator_d(&a, &rho).unwrap();
            assert!(linalg::max_abs_diff(&h1, &(classical - d)) < 1e-8);
        }
    }

    #[test]
    fn auxiliary_operators_are_hermitian_and_sparse() {
        let mut rng = stream_rng(26, Stream::Problem, 0);
        for trial in 0..20 {
            let p = 2 + trial % 2;
            let n = if p == 3 { 1 } else { 2 };
            let a = AlgebraicForm::random(p, n, 1 + trial % 3, &mut rng).unwrap();
            let s_a = a.sparsity();
            let md = build_md(&a);
            let mh1 = build_mh1(&a);
            assert!(linalg::hermitian_deviation(&md.data) < 1e-10);
            assert!(linalg::hermitian_deviation(&mh1.data) < 1e-10);
            assert!(md.sparsity() <= p * s_a);
            assert!(mh1.sparsity() <= p * p * s_a);
        }
    }

    #[test]
    fn mixed_state_operators_respect_bounds() {
        let mut rng = stream_rng(27, Stream::Problem, 0);
        for trial in 0..20 {
            let p = 1 + trial % 2;
            let a = AlgebraicForm::random(p, 2, 2, &mut rng).unwrap();
            let bounds = crate::tensor_poly::norm_bounds(&PolynomialProblem::homogeneous(a.clone()));
            let md = build_md(&a);
            let mh1 = build_mh1(&a);
            for _ in 0..10 {
                let rho = random_mixed(4, &mut rng);
                let d = gradient_operator_from(&md, &rho).unwrap();
                let h = hessian_operator_from(&md, &mh1, &rho).unwrap();
                assert!(linalg::hermitian_deviation(&h) < 1e-10);
                assert!(linalg::operator_norm(&d) <= bounds.lambda_d * (1.0 + 1e-10));
                assert!(linalg::operator_norm(&h) <= bounds.lambda_h * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = stream_rng(28, Stream::Problem, 0);
        let rho = random_mixed(2, &mut rng);
        let sigma = random_mixed(3, &mut rng);
        let joint = linalg::kron(rho.matrix(), sigma.matrix());
        let kept = partial_trace(&joint, &[2, 3], &[1]).unwrap();
        assert!(linalg::max_abs_diff(&kept, sigma.matrix()) < 1e-14);
        let kept = partial_trace(&joint, &[2, 3], &[0]).unwrap();
        assert!(linalg::max_abs_diff(&kept, rho.matrix()) < 1e-14);
        let scalar = partial_trace(&joint, &[2, 3], &[]).unwrap();
        assert!((scalar[(0, 0)] - linalg::trace(&joint)).norm() < 1e-14);

        let m = CMatrix::from_fn(4, 4, |_, _| Complex64::new(rng.random(), rng.random()));
        let t1 = partial_trace(&m, &[2, 2], &[1]).unwrap();
        let t12 = partial_trace(&t1, &[2], &[]).unwrap();
        assert!((t12[(0, 0)] - linalg::trace(&m)).norm() < 1e-14);
        assert!(partial_trace(&m, &[2, 3], &[0]).is_err());
    }
}
