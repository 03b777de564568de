//! Dense complex operators on a finite-dimensional Hilbert space.
//!
//! Everything here is small and dense: the systems of interest are
//! qubit-scale and the joint system-cavity spaces stay below a few dozen
//! levels. Energies and rates share one arbitrary frequency unit with ħ = 1.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.data[i * dim + i] = ONE;
        }
        op
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds an operator from row-major entries; `entries.len()` must be a
    /// perfect square.
    pub fn from_row_major(entries: Vec<C64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "{} entries do not form a non-empty square matrix",
                entries.len()
            )));
        }
        Ok(Self { dim, data: entries })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter("matrix rows must form a non-empty square".into()));
        }
        Ok(Self { dim, data: rows.iter().flatten().copied().collect() })
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), dim * dim, "entry count must be dim^2");
        Self { dim, data: entries.iter().map(|&x| C64::new(x, 0.0)).collect() }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        let mut op = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            op.data[i * dim + i] = C64::new(v, 0.0);
        }
        op
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalized) vector.
    pub fn projector(psi: &[C64]) -> Self {
        let dim = psi.len();
        Self::from_fn(dim, |i, j| psi[i] * psi[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn dagger(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| self.data[j * d + i].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * c).collect() }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn matmul(&self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * d..(k + 1) * d];
                let dst = &mut out[i * d..(i + 1) * d];
                for (o, &b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Operator { dim: d, data: out }
    }

    /// Kronecker product `self ⊗ rhs`, first factor slowest.
    pub fn kron(&self, rhs: &Operator) -> Operator {
        let (a, b) = (self.dim, rhs.dim);
        let d = a * b;
        Operator::from_fn(d, |r, c| {
            let (i1, i2) = (r / b, r % b);
            let (j1, j2) = (c / b, c % b);
            self.data[i1 * a + j1] * rhs.data[i2 * b + j2]
        })
    }

    /// `U A U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Operator {
        u.matmul(self).matmul(&u.dagger())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max |A − A†| over entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let diff = self.data[i * d + j] - self.data[j * d + i].conj();
                worst = worst.max(diff.norm());
            }
        }
        worst
    }

    /// Hermitian within `1e-12 · max|A|` (absolute `1e-12` for the zero operator).
    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= 1e-12 * self.max_abs().max(1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// (A + A†)/2
    pub fn hermitian_part(&self) -> Operator {
        let d = self.dim;
        Operator::from_fn(d, |i, j| 0.5 * (self.data[i * d + j] + self.data[j * d + i].conj()))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        singular_values(self).into_iter().fold(0.0, f64::max)
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        singular_values(self).into_iter().sum()
    }

    /// Partial trace over the second factor of a `d1 ⊗ d2` operator.
    pub fn partial_trace_second(&self, d1: usize, d2: usize) -> Result<Operator> {
        if d1 * d2 != self.dim {
            return Err(Error::DimensionMismatch { expected: d1 * d2, found: self.dim });
        }
        let d = self.dim;
        Ok(Operator::from_fn(d1, |i, j| (0..d2).map(|k| self.data[(i * d2 + k) * d + j * d2 + k]).sum()))
    }

    /// Partial trace over the first factor of a `d1 ⊗ d2` operator.
    pub fn partial_trace_first(&self, d1: usize, d2: usize) -> Result<Operator> {
        if d1 * d2 != self.dim {
            return Err(Error::DimensionMismatch { expected: d1 * d2, found: self.dim });
        }
        let d = self.dim;
        Ok(Operator::from_fn(d2, |i, j| (0..d1).map(|k| self.data[(k * d2 + i) * d + k * d2 + j]).sum()))
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Operator {
        Operator::from_fn(m.nrows(), |i, j| m[(i, j)])
    }
}

impl std::ops::Index<(usize, usize)> for Operator {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Operator {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

macro_rules! elementwise {
    ($trait:ident, $method:ident, $assign_trait:ident, $assign:ident, $op:tt) => {
        impl $trait<&Operator> for &Operator {
            type Output = Operator;

            fn $method(self, rhs: &Operator) -> Operator {
                assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
                Operator {
                    dim: self.dim,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect(),
                }
            }
        }

        impl $trait<Operator> for Operator {
            type Output = Operator;

            fn $method(mut self, rhs: Operator) -> Operator {
                self.$assign(&rhs);
                self
            }
        }

        impl $assign_trait<&Operator> for Operator {
            fn $assign(&mut self, rhs: &Operator) {
                assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
                for (a, b) in self.data.iter_mut().zip(&rhs.data) {
                    *a = *a $op b;
                }
            }
        }
    };
}

elementwise!(Add, add, AddAssign, add_assign, +);
elementwise!(Sub, sub, SubAssign, sub_assign, -);

impl Mul<&Operator> for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Mul<&Operator> for C64 {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale(self)
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale_real(self)
    }
}

impl Neg for &Operator {
    type Output = Operator;

    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

fn singular_values(a: &Operator) -> Vec<f64> {
    a.to_nalgebra().singular_values().iter().copied().collect()
}

fn check_dims(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    Ok(())
}

/// [A, B]
pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    &a.matmul(b) - &b.matmul(a)
}

/// {A, B}
pub fn anticommutator(a: &Operator, b: &Operator) -> Operator {
    &a.matmul(b) + &b.matmul(a)
}

/// D[A]ρ = AρA† − ½{A†A, ρ}.
pub fn dissipator(a: &Operator, rho: &Operator) -> Result<Operator> {
    check_dims(a, rho)?;
    let ad = a.dagger();
    let ada = ad.matmul(a);
    Ok(&a.matmul(rho).matmul(&ad) - &anticommutator(&ada, rho).scale_real(0.5))
}

/// H[A]ρ = Aρ + ρA† − Tr[(A + A†)ρ] ρ.
pub fn meas_superop(a: &Operator, rho: &Operator) -> Result<Operator> {
    check_dims(a, rho)?;
    let a_rho = a.matmul(rho);
    let rho_ad = rho.matmul(&a.dagger());
    let mean = a_rho.trace() + rho_ad.trace();
    Ok(&(&a_rho + &rho_ad) - &rho.scale(mean))
}

/// Tr[Aρ].
pub fn expectation(a: &Operator, rho: &Operator) -> Result<C64> {
    check_dims(a, rho)?;
    let d = a.dim;
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a.data[i * d + k] * rho.data[k * d + i];
        }
    }
    Ok(acc)
}

/// Trace distance ½‖ρ − σ‖₁.
pub fn trace_distance(rho: &Operator, sigma: &Operator) -> Result<f64> {
    check_dims(rho, sigma)?;
    Ok(0.5 * (rho - sigma).trace_norm())
}

/// Eigen-decomposition `H = Σ_j Ω_j |j⟩⟨j|` of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the eigenvector for `eigenvalues[j]`.
    pub eigenvectors: Operator,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Matrix elements `⟨j|A|k⟩` in the eigenbasis.
    pub fn to_eigenbasis(&self, a: &Operator) -> Operator {
        let v = &self.eigenvectors;
        v.dagger().matmul(a).matmul(v)
    }

    /// Inverse of [`Self::to_eigenbasis`].
    pub fn from_eigenbasis(&self, a: &Operator) -> Operator {
        a.conjugate_by(&self.eigenvectors)
    }

    pub fn reconstruct(&self) -> Operator {
        self.from_eigenbasis(&Operator::diagonal(&self.eigenvalues))
    }
}

pub fn eigendecompose(h: &Operator) -> Result<SpectralDecomposition> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian(h.hermiticity_defect()));
    }
    // Exact Hermitian symmetrisation before handing to the solver.
    let eig = h.hermitian_part().to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vectors = Operator::from_nalgebra(&eig.eigenvectors);
    let d = h.dim;
    let eigenvectors = Operator::from_fn(d, |i, j| vectors[(i, order[j])]);
    Ok(SpectralDecomposition { eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(), eigenvectors })
}

/// Two-level operators in the basis `{|g⟩, |e⟩}` with σ_z|e⟩ = +|e⟩.
pub mod pauli {
    use super::Operator;
    use crate::C64;

    pub fn identity() -> Operator {
        Operator::identity(2)
    }

    pub fn sigma_x() -> Operator {
        Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn sigma_y() -> Operator {
        let i = C64::new(0.0, 1.0);
        Operator::from_row_major(vec![C64::new(0.0, 0.0), -i, i, C64::new(0.0, 0.0)]).unwrap()
    }

    pub fn sigma_z() -> Operator {
        Operator::from_real(2, &[-1.0, 0.0, 0.0, 1.0])
    }

    /// σ₋ = |g⟩⟨e|
    pub fn sigma_minus() -> Operator {
        Operator::from_real(2, &[0.0, 1.0, 0.0, 0.0])
    }

    /// σ₊ = |e⟩⟨g|
    pub fn sigma_plus() -> Operator {
        Operator::from_real(2, &[0.0, 0.0, 1.0, 0.0])
    }

    pub fn ground() -> Operator {
        Operator::from_real(2, &[1.0, 0.0, 0.0, 0.0])
    }

    pub fn excited() -> Operator {
        Operator::from_real(2, &[0.0, 0.0, 0.0, 1.0])
    }
}

/// Truncated harmonic-oscillator annihilation operator on `levels` Fock states.
pub fn annihilation(levels: usize) -> Operator {
    Operator::from_fn(levels, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { ZERO })
}

#[cfg(test)]
mod tests {
    use super::pauli::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_op_eq(a: &Operator, b: &Operator, tol: f64) {
        let diff = (a - b).max_abs();
        assert!(diff <= tol, "operators differ by {diff}:\n{a:?}\n{b:?}");
    }

    fn random_op(rng: &mut impl Rng, d: usize) -> Operator {
        Operator::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_hermitian(rng: &mut impl Rng, d: usize) -> Operator {
        random_op(rng, d).hermitian_part()
    }

    fn random_density(rng: &mut impl Rng, d: usize) -> Operator {
        let a = random_op(rng, d);
        let rho = a.matmul(&a.dagger());
        let tr = rho.trace();
        rho.scale(1.0 / tr)
    }

    fn plus_state() -> Operator {
        Operator::from_real(2, &[0.5, 0.5, 0.5, 0.5])
    }

    fn minus_state() -> Operator {
        Operator::from_real(2, &[0.5, -0.5, -0.5, 0.5])
    }

    #[test]
    fn dissipator_identity_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, 3);
        let out = dissipator(&Operator::identity(3), &rho).unwrap();
        assert!(out.max_abs() < 1e-14);
    }

    #[test]
    fn dissipator_decay_of_excited_state() {
        let out = dissipator(&sigma_minus(), &excited()).unwrap();
        assert_op_eq(&out, &(&ground() - &excited()), 1e-15);
    }

    #[test]
    fn dissipator_sigma_z_flips_plus_to_minus() {
        let out = dissipator(&sigma_z(), &plus_state()).unwrap();
        assert_op_eq(&out, &(&minus_state() - &plus_state()), 1e-15);
    }

    #[test]
    fn dissipator_rejects_dimension_mismatch() {
        let err = dissipator(&sigma_z(), &Operator::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn meas_superop_scalar_operator_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(&mut rng, 3);
        let c = C64::new(0.7, -1.3);
        let out = meas_superop(&Operator::identity(3).scale(c), &rho).unwrap();
        assert!(out.max_abs() < 1e-14);
    }

    #[test]
    fn meas_superop_sigma_z_on_maximally_mixed() {
        let rho = Operator::identity(2).scale_real(0.5);
        let out = meas_superop(&sigma_z(), &rho).unwrap();
        assert_op_eq(&out, &sigma_z(), 1e-15);
    }

    #[test]
    fn expectation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 4);
        assert_abs_diff_eq!(expectation(&Operator::identity(4), &rho).unwrap().re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(expectation(&sigma_z(), &excited()).unwrap().re, 1.0, epsilon = 1e-15);
        let mixed = Operator::identity(2).scale_real(0.5);
        assert_abs_diff_eq!(expectation(&sigma_x(), &mixed).unwrap().norm(), 0.0, epsilon = 1e-15);
        let h = random_hermitian(&mut rng, 4);
        assert!(expectation(&h, &rho).unwrap().im.abs() < 1e-12);
    }

    #[test]
    fn eigendecompose_sigma_z_and_diagonal() {
        let dec = eigendecompose(&sigma_z()).unwrap();
        assert_eq!(dec.eigenvalues, vec![-1.0, 1.0]);
        let dec = eigendecompose(&Operator::diagonal(&[1.0, 2.0, 3.0])).unwrap();
        for (j, &ev) in dec.eigenvalues.iter().enumerate() {
            assert_abs_diff_eq!(ev, (j + 1) as f64, epsilon = 1e-14);
            assert_abs_diff_eq!(dec.eigenvectors[(j, j)].norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn eigendecompose_random_hermitian_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let h = random_hermitian(&mut rng, 4);
            let dec = eigendecompose(&h).unwrap();
            let resid = (&dec.reconstruct() - &h).frobenius_norm();
            assert!(resid <= 1e-10 * h.frobenius_norm(), "residual {resid}");
            let gram = dec.eigenvectors.dagger().matmul(&dec.eigenvectors);
            assert_op_eq(&gram, &Operator::identity(4), 1e-12);
            assert!(dec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigendecompose_rejects_non_hermitian() {
        assert!(matches!(eigendecompose(&sigma_minus()), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn superoperators_preserve_hermiticity_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..120 {
            let d = 2 + case % 3;
            let a = random_op(&mut rng, d);
            let rho = random_density(&mut rng, d);
            let diss = dissipator(&a, &rho).unwrap();
            assert!(diss.hermiticity_defect() < 1e-12);
            assert!(diss.trace().norm() < 1e-12 * rho.trace_norm());
            let h = meas_superop(&a, &rho).unwrap();
            assert!(h.hermiticity_defect() < 1e-12);
            assert!(h.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn double_commutator_is_twice_dissipator_for_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let f = random_hermitian(&mut rng, 3);
            let rho = random_hermitian(&mut rng, 3);
            let lhs = -&commutator(&f, &commutator(&f, &rho));
            let rhs = dissipator(&f, &rho).unwrap().scale_real(2.0);
            assert_op_eq(&lhs, &rhs, 1e-12);
        }
    }

    #[test]
    fn partial_traces_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 3);
        let ab = a.kron(&b);
        assert_op_eq(&ab.partial_trace_second(2, 3).unwrap(), &a, 1e-14);
        assert_op_eq(&ab.partial_trace_first(2, 3).unwrap(), &b, 1e-14);
    }

    #[test]
    fn norms_of_pauli() {
        assert_abs_diff_eq!(sigma_z().spectral_norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma_z().trace_norm(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&ground(), &excited()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn annihilation_lowers_number() {
        let a = annihilation(4);
        let n = a.dagger().matmul(&a);
        assert_op_eq(&n, &Operator::diagonal(&[0.0, 1.0, 2.0, 3.0]), 1e-14);
    }

    proptest! {
        #[test]
        fn commutator_bilinear(seed in any::<u64>(), s in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_op(&mut rng, 3), random_op(&mut rng, 3), random_op(&mut rng, 3));
            let lhs = commutator(&(&a.scale_real(s) + &b), &c);
            let rhs = &commutator(&a, &c).scale_real(s) + &commutator(&b, &c);
            prop_assert!((&lhs - &rhs).max_abs() < 1e-12);
            let lhs = anticommutator(&c, &(&a + &b.scale_real(s)));
            let rhs = &anticommutator(&c, &a) + &anticommutator(&c, &b).scale_real(s);
            prop_assert!((&lhs - &rhs).max_abs() < 1e-12);
        }
    }
}
