//! Vectorized (Liouville-space) superoperators.
//!
//! A density matrix `ρ` of dimension `d` is stored as its row-major entries,
//! so `vec(ρ)[i*d + j] = ρ_ij` and the vectorization of `AρB` is
//! `(A ⊗ Bᵀ) vec(ρ)`. Hierarchies stack the vectorized auxiliaries one after
//! another and their generators are assembled as sparse block matrices.

use crate::algebra::Operator;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Dense `d² × d²` superoperator.
#[derive(Clone, Debug, PartialEq)]
pub struct Superop {
    d: usize,
    data: Vec<C64>,
}

impl Superop {
    pub fn zeros(d: usize) -> Self {
        Self { d, data: vec![ZERO; d.pow(4)] }
    }

    pub fn identity(d: usize) -> Self {
        Self::sandwich(&Operator::identity(d), &Operator::identity(d))
    }

    /// `ρ ↦ AρB`.
    pub fn sandwich(a: &Operator, b: &Operator) -> Self {
        assert_eq!(a.dim(), b.dim(), "operator dimension mismatch");
        let d = a.dim();
        let n = d * d;
        let mut data = vec![ZERO; n * n];
        for i in 0..d {
            for k in 0..d {
                let aik = a[(i, k)];
                if aik == ZERO {
                    continue;
                }
                for j in 0..d {
                    for l in 0..d {
                        // (A ⊗ Bᵀ)[(i,j),(k,l)] = A_ik B_lj
                        data[(i * d + j) * n + k * d + l] = aik * b[(l, j)];
                    }
                }
            }
        }
        Self { d, data }
    }

    /// `ρ ↦ Aρ`.
    pub fn left(a: &Operator) -> Self {
        Self::sandwich(a, &Operator::identity(a.dim()))
    }

    /// `ρ ↦ ρB`.
    pub fn right(b: &Operator) -> Self {
        Self::sandwich(&Operator::identity(b.dim()), b)
    }

    /// `ρ ↦ [A, ρ]`.
    pub fn commutator(a: &Operator) -> Self {
        &Self::left(a) - &Self::right(a)
    }

    /// `ρ ↦ {A, ρ}`.
    pub fn anticommutator(a: &Operator) -> Self {
        &Self::left(a) + &Self::right(a)
    }

    /// `ρ ↦ −i[H, ρ]`.
    pub fn hamiltonian(h: &Operator) -> Self {
        Self::commutator(h).scale(-I)
    }

    /// `ρ ↦ AρA† − ½{A†A, ρ}`.
    pub fn dissipator(a: &Operator) -> Self {
        let ad = a.dagger();
        let ada = ad.matmul(a);
        &Self::sandwich(a, &ad) - &Self::anticommutator(&ada).scale(C64::new(0.5, 0.0))
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    /// Side length `d²`.
    pub fn size(&self) -> usize {
        self.d * self.d
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.size() + col]
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { d: self.d, data: self.data.iter().map(|&z| z * c).collect() }
    }

    pub fn axpy(&mut self, c: C64, other: &Superop) {
        assert_eq!(self.d, other.d, "superoperator dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// `out += c · S x`.
    pub fn apply_add(&self, c: C64, x: &[C64], out: &mut [C64]) {
        let n = self.size();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        for (row, o) in self.data.chunks_exact(n).zip(out.iter_mut()) {
            let mut acc = ZERO;
            for (&s, &v) in row.iter().zip(x) {
                acc += s * v;
            }
            *o += c * acc;
        }
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        let mut out = vec![ZERO; self.size()];
        self.apply_add(C64::new(1.0, 0.0), rho.as_slice(), &mut out);
        Operator::from_row_major(out).expect("square by construction")
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        let n = self.size();
        self.data.iter().enumerate().filter(|(_, z)| **z != ZERO).map(move |(idx, &z)| (idx / n, idx % n, z))
    }
}

impl std::ops::Add<&Superop> for &Superop {
    type Output = Superop;

    fn add(self, rhs: &Superop) -> Superop {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), rhs);
        out
    }
}

impl std::ops::Sub<&Superop> for &Superop {
    type Output = Superop;

    fn sub(self, rhs: &Superop) -> Superop {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), rhs);
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl Csr {
    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut csr = Self { nrows, ncols, indptr, indices, values };
        csr.prune();
        csr
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != ZERO {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o = acc;
        }
    }

    /// `out += c · A x`.
    pub fn matvec_add(&self, c: C64, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o += c * acc;
        }
    }
}

impl From<&Superop> for Csr {
    fn from(s: &Superop) -> Self {
        Csr::from_triplets(s.size(), s.size(), s.nonzeros().collect())
    }
}

/// Periodic term `e^{−iωt} S` acting identically on every auxiliary block.
#[derive(Clone, Debug)]
pub struct Tone {
    pub omega: f64,
    pub superop: Csr,
}

/// Accumulates `blocks × blocks` superoperator blocks into one sparse
/// generator over the stacked vector of `blocks` auxiliaries.
#[derive(Debug)]
pub struct BlockAssembler {
    d2: usize,
    blocks: usize,
    triplets: Vec<(usize, usize, C64)>,
}

impl BlockAssembler {
    pub fn new(hilbert_dim: usize, blocks: usize) -> Self {
        Self { d2: hilbert_dim * hilbert_dim, blocks, triplets: Vec::new() }
    }

    /// Adds `c · S` at block position `(row, col)`.
    pub fn add(&mut self, row: usize, col: usize, c: C64, s: &Superop) {
        assert_eq!(s.size(), self.d2, "superoperator dimension mismatch");
        assert!(row < self.blocks && col < self.blocks, "block index out of range");
        if c == ZERO {
            return;
        }
        let (r0, c0) = (row * self.d2, col * self.d2);
        self.triplets.extend(s.nonzeros().map(|(i, j, z)| (r0 + i, c0 + j, c * z)));
    }

    pub fn finish(self) -> Csr {
        let n = self.d2 * self.blocks;
        Csr::from_triplets(n, n, self.triplets)
    }
}

/// Time-dependent generator `A(t) = A₀ + Σ_q e^{−iω_q t} (I ⊗ S_q)`.
#[derive(Clone, Debug)]
pub struct Generator {
    pub static_part: Csr,
    pub tones: Vec<Tone>,
    pub block_size: usize,
}

impl Generator {
    /// `out = A(t) x`.
    pub fn apply(&self, t: f64, x: &[C64], out: &mut [C64]) {
        self.static_part.matvec(x, out);
        for tone in &self.tones {
            let phase = C64::from_polar(1.0, -tone.omega * t);
            for (xb, ob) in x.chunks_exact(self.block_size).zip(out.chunks_exact_mut(self.block_size)) {
                tone.superop.matvec_add(phase, xb, ob);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.static_part.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{self, pauli};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_op(rng: &mut impl Rng, d: usize) -> Operator {
        Operator::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn superops_match_operator_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 2..5 {
            let (a, b, rho) = (random_op(&mut rng, d), random_op(&mut rng, d), random_op(&mut rng, d));
            let lhs = Superop::sandwich(&a, &b).apply(&rho);
            assert!((&lhs - &a.matmul(&rho).matmul(&b)).max_abs() < 1e-13);
            let lhs = Superop::dissipator(&a).apply(&rho);
            assert!((&lhs - &algebra::dissipator(&a, &rho).unwrap()).max_abs() < 1e-13);
            let lhs = Superop::hamiltonian(&a).apply(&rho);
            let rhs = algebra::commutator(&a, &rho).scale(-I);
            assert!((&lhs - &rhs).max_abs() < 1e-13);
        }
    }

    #[test]
    fn csr_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_op(&mut rng, 3);
        let s = Superop::dissipator(&a);
        let csr = Csr::from(&s);
        let x: Vec<C64> = (0..9).map(|_| C64::new(rng.random(), rng.random())).collect();
        let mut dense = vec![ZERO; 9];
        s.apply_add(C64::new(1.0, 0.0), &x, &mut dense);
        let mut sparse = vec![ZERO; 9];
        csr.matvec(&x, &mut sparse);
        for (p, q) in dense.iter().zip(&sparse) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let one = C64::new(1.0, 0.0);
        let csr = Csr::from_triplets(2, 2, vec![(0, 1, one), (0, 1, one), (1, 0, one), (1, 0, -one)]);
        assert_eq!(csr.nnz(), 1);
        let mut out = vec![ZERO; 2];
        csr.matvec(&[one, one], &mut out);
        assert_eq!(out, vec![C64::new(2.0, 0.0), ZERO]);
    }

    #[test]
    fn block_assembler_places_blocks() {
        let s = Superop::left(&pauli::sigma_x());
        let mut asm = BlockAssembler::new(2, 2);
        asm.add(0, 1, C64::new(2.0, 0.0), &s);
        let g = asm.finish();
        let mut x = vec![ZERO; 8];
        x[4..].copy_from_slice(pauli::excited().as_slice());
        let mut out = vec![ZERO; 8];
        g.matvec(&x, &mut out);
        let expect = pauli::sigma_x().matmul(&pauli::excited()).scale_real(2.0);
        assert_eq!(&out[..4], expect.as_slice());
        assert!(out[4..].iter().all(|z| *z == ZERO));
    }
}
