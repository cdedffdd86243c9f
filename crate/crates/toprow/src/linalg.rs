//! Dense complex operators on labeled qubit registers.
//!
//! An operator carries the ordered list of qubit labels it acts on; the
//! first label maps to the most significant index bit. Carrying labels keeps
//! partial traces and gate embeddings self-describing, so an 8x8 message on
//! one gate's qubits can never be silently misaligned with another's.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::fixed::{FixedComplex, FixedReal};
use crate::{Error, Result};

/// Registers above this size would need gigabytes of dense storage; the
/// dense representation only backs oracles and desk-scale tests.
pub const MAX_DENSE_QUBITS: usize = 14;

/// An ordered set of qubit labels (a subset of `1..=n`, no duplicates).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitSet {
    labels: Vec<u32>,
}

impl QubitSet {
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        let mut seen = labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != labels.len() {
            return Err(Error::Input(format!("duplicate qubit labels in {labels:?}")));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: u32) -> bool {
        self.labels.contains(&label)
    }
}

/// Dense `2^k x 2^k` complex operator on `k` labeled qubits, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseOperator {
    qubits: Vec<u32>,
    entries: Vec<FixedComplex>,
    p: u32,
}

impl DenseOperator {
    pub fn from_entries(qubits: Vec<u32>, entries: Vec<FixedComplex>, p: u32) -> Result<Self> {
        let k = qubits.len();
        if k > MAX_DENSE_QUBITS {
            return Err(Error::Input(format!(
                "dense operator on {k} qubits exceeds the {MAX_DENSE_QUBITS}-qubit cap"
            )));
        }
        QubitSet::new(qubits.clone())?;
        if entries.len() != 1 << (2 * k) {
            return Err(Error::Input(format!(
                "expected {} entries for {k} qubits, got {}",
                1usize << (2 * k),
                entries.len()
            )));
        }
        Ok(Self { qubits, entries, p })
    }

    pub fn zero(qubits: Vec<u32>, p: u32) -> Self {
        let k = qubits.len();
        Self::from_entries(qubits, vec![FixedComplex::zero(p); 1 << (2 * k)], p).unwrap()
    }

    pub fn identity(qubits: Vec<u32>, p: u32) -> Self {
        let mut op = Self::zero(qubits, p);
        for i in 0..op.dim() {
            *op.entry_mut(i, i) = FixedComplex::one(p);
        }
        op
    }

    /// The projector onto the all-zeros basis state of this register.
    pub fn zero_projector(qubits: Vec<u32>, p: u32) -> Self {
        let mut op = Self::zero(qubits, p);
        *op.entry_mut(0, 0) = FixedComplex::one(p);
        op
    }

    pub fn qubits(&self) -> &[u32] {
        &self.qubits
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits.len()
    }

    pub fn precision(&self) -> u32 {
        self.p
    }

    pub fn entry(&self, row: usize, col: usize) -> &FixedComplex {
        &self.entries[row * self.dim() + col]
    }

    pub fn entry_mut(&mut self, row: usize, col: usize) -> &mut FixedComplex {
        let d = self.dim();
        &mut self.entries[row * d + col]
    }

    pub fn entries(&self) -> &[FixedComplex] {
        &self.entries
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let entries =
            self.entries.iter().zip(&other.entries).map(|(a, b)| a.add(b)).collect();
        Self::from_entries(self.qubits.clone(), entries, self.p)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let entries =
            self.entries.iter().zip(&other.entries).map(|(a, b)| a.sub(b)).collect();
        Self::from_entries(self.qubits.clone(), entries, self.p)
    }

    pub fn scale(&self, factor: &FixedComplex) -> Self {
        let entries = self.entries.iter().map(|e| e.mul(factor)).collect();
        Self::from_entries(self.qubits.clone(), entries, self.p).unwrap()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.qubits != other.qubits || self.p != other.p {
            return Err(Error::Input(format!(
                "operator shape mismatch: {:?}@{} vs {:?}@{}",
                self.qubits, self.p, other.qubits, other.p
            )));
        }
        Ok(())
    }

    /// Kronecker product; labels concatenate, `self`'s qubits stay most
    /// significant.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        for l in &other.qubits {
            if self.qubits.contains(l) {
                return Err(Error::Input(format!("overlapping label {l} in kron")));
            }
        }
        let mut labels = self.qubits.clone();
        labels.extend_from_slice(&other.qubits);
        let (da, db) = (self.dim(), other.dim());
        let d = da * db;
        let mut entries = Vec::with_capacity(d * d);
        for ra in 0..da {
            for rb in 0..db {
                for ca in 0..da {
                    for cb in 0..db {
                        entries.push(self.entry(ra, ca).mul(other.entry(rb, cb)));
                    }
                }
            }
        }
        Self::from_entries(labels, entries, self.p)
    }

    /// Expand to an operator on `register` (ordered label list), acting as
    /// `self` on its own labels and as identity elsewhere. Handles arbitrary,
    /// non-contiguous label positions.
    pub fn embed(&self, register: &[u32]) -> Result<Self> {
        let positions: Vec<usize> = self
            .qubits
            .iter()
            .map(|l| {
                register.iter().position(|r| r == l).ok_or_else(|| {
                    Error::Input(format!("label {l} not in register {register:?}"))
                })
            })
            .collect::<Result<_>>()?;
        let n = register.len();
        if n > MAX_DENSE_QUBITS {
            return Err(Error::Input(format!("register of {n} qubits exceeds dense cap")));
        }
        let d = 1usize << n;
        let k = self.qubits.len();
        let extract = |idx: usize| -> usize {
            let mut sub = 0usize;
            for (i, &pos) in positions.iter().enumerate() {
                let bit = (idx >> (n - 1 - pos)) & 1;
                sub |= bit << (k - 1 - i);
            }
            sub
        };
        let rest_mask: usize = {
            let mut m = d - 1;
            for &pos in &positions {
                m &= !(1 << (n - 1 - pos));
            }
            m
        };
        let mut out = Self::zero(register.to_vec(), self.p);
        for r in 0..d {
            for c in 0..d {
                if (r & rest_mask) != (c & rest_mask) {
                    continue;
                }
                *out.entry_mut(r, c) = self.entry(extract(r), extract(c)).clone();
            }
        }
        Ok(out)
    }

    /// Trace out every qubit not in `keep`; the result is on `keep`'s labels
    /// in `keep`'s order. The trace is preserved exactly.
    pub fn partial_trace(&self, keep: &QubitSet) -> Result<Self> {
        let kept_pos: Vec<usize> = keep
            .labels()
            .iter()
            .map(|l| {
                self.qubits.iter().position(|q| q == l).ok_or_else(|| {
                    Error::Input(format!("keep label {l} not among {:?}", self.qubits))
                })
            })
            .collect::<Result<_>>()?;
        let n = self.qubits.len();
        let k = keep.len();
        let traced_pos: Vec<usize> =
            (0..n).filter(|pos| !kept_pos.contains(pos)).collect();
        let assemble = |kept_idx: usize, rest_idx: usize| -> usize {
            let mut idx = 0usize;
            for (i, &pos) in kept_pos.iter().enumerate() {
                let bit = (kept_idx >> (k - 1 - i)) & 1;
                idx |= bit << (n - 1 - pos);
            }
            for (i, &pos) in traced_pos.iter().enumerate() {
                let bit = (rest_idx >> (traced_pos.len() - 1 - i)) & 1;
                idx |= bit << (n - 1 - pos);
            }
            idx
        };
        let dk = 1usize << k;
        let dr = 1usize << traced_pos.len();
        let mut out = Self::zero(keep.labels().to_vec(), self.p);
        for x in 0..dk {
            for y in 0..dk {
                let mut acc = FixedComplex::zero(self.p);
                for r in 0..dr {
                    acc = acc.add(self.entry(assemble(x, r), assemble(y, r)));
                }
                *out.entry_mut(x, y) = acc;
            }
        }
        Ok(out)
    }

    /// Matrix product; requires identical label lists.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let d = self.dim();
        let mut out = Self::zero(self.qubits.clone(), self.p);
        for r in 0..d {
            for c in 0..d {
                let mut acc = FixedComplex::zero(self.p);
                for m in 0..d {
                    acc = acc.add(&self.entry(r, m).mul(other.entry(m, c)));
                }
                *out.entry_mut(r, c) = acc;
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim();
        let mut out = Self::zero(self.qubits.clone(), self.p);
        for r in 0..d {
            for c in 0..d {
                *out.entry_mut(r, c) = self.entry(c, r).conj();
            }
        }
        out
    }

    /// Exact sum of the diagonal.
    pub fn trace(&self) -> FixedComplex {
        let mut acc = FixedComplex::zero(self.p);
        for i in 0..self.dim() {
            acc = acc.add(self.entry(i, i));
        }
        acc
    }

    /// Entrywise L2 norm; upper-bounds `|trace|` up to rounding.
    pub fn frobenius_norm(&self) -> FixedReal {
        // Sum of exact integer squared moduli, then one integer sqrt.
        let mut acc = BigInt::from(0);
        for e in &self.entries {
            acc += e.re.mantissa() * e.re.mantissa() + e.im.mantissa() * e.im.mantissa();
        }
        // acc is at scale 2^-2p; sqrt lands on the 2^-p grid.
        FixedReal::from_mantissa(BigInt::from(acc.magnitude().sqrt()), self.p)
    }

    /// Largest entry modulus exceeds `2^k`?
    pub fn any_entry_modulus_above_pow2(&self, k: u32) -> bool {
        self.entries.iter().any(|e| !e.modulus_le_pow2(k))
    }

    /// Re-truncate all entries to precision `p` (toward zero).
    pub fn retrunc(&self, p: u32) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| FixedComplex::new(e.re.retrunc(p), e.im.retrunc(p)))
            .collect();
        Self::from_entries(self.qubits.clone(), entries, p).unwrap()
    }

    /// Debug dump as JSON arrays of (re, im) mantissa strings.
    pub fn dump_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<[String; 2]>> = (0..self.dim())
            .map(|r| {
                (0..self.dim())
                    .map(|c| {
                        let e = self.entry(r, c);
                        [e.re.mantissa().to_string(), e.im.mantissa().to_string()]
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({ "qubits": self.qubits, "p": self.p, "rows": rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::inv_sqrt2;
    use num_bigint::BigInt;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const P: u32 = 64;

    fn c(re: i64, im: i64) -> FixedComplex {
        FixedComplex::new(FixedReal::from_i64(re, P), FixedReal::from_i64(im, P))
    }

    pub(crate) fn hadamard(label: u32, p: u32) -> DenseOperator {
        let h = inv_sqrt2(p);
        let mk = |v: &FixedReal| FixedComplex::from_real(v.clone());
        DenseOperator::from_entries(
            vec![label],
            vec![mk(&h), mk(&h), mk(&h), mk(&h.neg())],
            p,
        )
        .unwrap()
    }

    fn random_operator(rng: &mut ChaCha20Rng, labels: Vec<u32>) -> DenseOperator {
        let k = labels.len();
        let entries = (0..1usize << (2 * k))
            .map(|_| {
                let bound = 1i64 << 62;
                let re = FixedReal::from_mantissa(BigInt::from(rng.gen_range(-bound..bound)), P);
                let im = FixedReal::from_mantissa(BigInt::from(rng.gen_range(-bound..bound)), P);
                FixedComplex::new(re, im)
            })
            .collect();
        DenseOperator::from_entries(labels, entries, P).unwrap()
    }

    fn random_unitaryish(rng: &mut ChaCha20Rng, labels: Vec<u32>) -> DenseOperator {
        // Product of embedded Hadamards and basis permutations: exactly
        // unitary up to fixed-point truncation of 1/sqrt(2).
        let n = labels.len();
        let mut u = DenseOperator::identity(labels.clone(), P);
        for _ in 0..6 {
            let l = labels[rng.gen_range(0..n)];
            let g = if rng.gen_bool(0.5) {
                hadamard(l, P)
            } else {
                DenseOperator::from_entries(
                    vec![l],
                    vec![c(0, 0), c(1, 0), c(1, 0), c(0, 0)],
                    P,
                )
                .unwrap()
            };
            u = g.embed(&labels).unwrap().matmul(&u).unwrap();
        }
        u
    }

    #[test]
    fn kron_identities() {
        let i2a = DenseOperator::identity(vec![1], P);
        let i2b = DenseOperator::identity(vec![2], P);
        let i4 = i2a.kron(&i2b).unwrap();
        assert_eq!(i4, DenseOperator::identity(vec![1, 2], P));
    }

    #[test]
    fn kron_basis_bookkeeping() {
        // |0><0| (x) |1><1| = diag(0,1,0,0) with qubit 1 most significant
        let p00 = DenseOperator::zero_projector(vec![1], P);
        let mut p11 = DenseOperator::zero(vec![2], P);
        *p11.entry_mut(1, 1) = c(1, 0);
        let k = p00.kron(&p11).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let expect = if r == 1 && col == 1 { c(1, 0) } else { c(0, 0) };
                assert_eq!(k.entry(r, col), &expect, "at ({r},{col})");
            }
        }
    }

    #[test]
    fn kron_hadamard_entry() {
        let hh = hadamard(1, P).kron(&hadamard(2, P)).unwrap();
        let half = FixedReal::from_ratio(&BigInt::from(1), &BigInt::from(2), P);
        let diff = hh.entry(0, 0).re.sub(&half);
        assert!(diff.abs_le_ratio(&num_bigint::BigUint::from(2u32), &(num_bigint::BigUint::from(1u64) << P)));
    }

    #[test]
    fn kron_overlapping_labels_rejected() {
        let a = DenseOperator::identity(vec![1, 2], P);
        let b = DenseOperator::identity(vec![2], P);
        assert!(a.kron(&b).is_err());
    }

    #[test]
    fn embed_x_on_qubit2() {
        let x = DenseOperator::from_entries(
            vec![2],
            vec![c(0, 0), c(1, 0), c(1, 0), c(0, 0)],
        P)
        .unwrap();
        let e = x.embed(&[1, 2]).unwrap();
        // apply to |00> (column 0): should give |01> (row 1)
        assert_eq!(e.entry(1, 0), &c(1, 0));
        assert_eq!(e.entry(0, 0), &c(0, 0));
    }

    #[test]
    fn embed_cnot_1_to_3() {
        // CNOT with control qubit 1, target qubit 3, inside n=3
        let mut cnot = DenseOperator::zero(vec![1, 3], P);
        for (r, c_) in [(0usize, 0usize), (1, 1), (2, 3), (3, 2)] {
            *cnot.entry_mut(r, c_) = c(1, 0);
        }
        let e = cnot.embed(&[1, 2, 3]).unwrap();
        // |100> is index 4; expect |101> = index 5
        assert_eq!(e.entry(5, 4), &c(1, 0));
        assert_eq!(e.entry(4, 4), &c(0, 0));
    }

    #[test]
    fn embed_matches_permuted_kron_oracle() {
        // H on qubit 3 of n=3 equals I4 (x) H directly (qubit 3 least
        // significant), which is the brute-force ordering oracle here.
        let h = hadamard(3, P);
        let e = h.embed(&[1, 2, 3]).unwrap();
        let oracle = DenseOperator::identity(vec![1, 2], P).kron(&h).unwrap();
        assert_eq!(e.entries(), oracle.entries());
    }

    #[test]
    fn embed_label_out_of_register() {
        let h = hadamard(4, P);
        assert!(h.embed(&[1, 2, 3]).is_err());
    }

    #[test]
    fn partial_trace_identity_and_projector() {
        let i4 = DenseOperator::identity(vec![1, 2], P);
        let keep = QubitSet::new(vec![1]).unwrap();
        let r = i4.partial_trace(&keep).unwrap();
        assert_eq!(r.entry(0, 0), &c(2, 0));
        assert_eq!(r.entry(1, 1), &c(2, 0));
        assert_eq!(r.entry(0, 1), &c(0, 0));

        // |01><01| keep qubit 1 -> |0><0|
        let mut proj = DenseOperator::zero(vec![1, 2], P);
        *proj.entry_mut(1, 1) = c(1, 0);
        let r = proj.partial_trace(&keep).unwrap();
        assert_eq!(r.entry(0, 0), &c(1, 0));
        assert_eq!(r.entry(1, 1), &c(0, 0));
    }

    #[test]
    fn partial_trace_matches_index_sum_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let b = random_operator(&mut rng, vec![1, 2, 3]);
        let keep = QubitSet::new(vec![1, 3]).unwrap();
        let r = b.partial_trace(&keep).unwrap();
        // direct oracle: result[(a1,a3),(b1,b3)] = sum_k B[(a1,k,a3),(b1,k,b3)]
        for a1 in 0..2usize {
            for a3 in 0..2usize {
                for b1 in 0..2usize {
                    for b3 in 0..2usize {
                        let mut acc = FixedComplex::zero(P);
                        for k in 0..2usize {
                            let row = a1 << 2 | k << 1 | a3;
                            let col = b1 << 2 | k << 1 | b3;
                            acc = acc.add(b.entry(row, col));
                        }
                        assert_eq!(r.entry(a1 << 1 | a3, b1 << 1 | b3), &acc);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_requires_subset() {
        let b = DenseOperator::identity(vec![1, 2], P);
        let keep = QubitSet::new(vec![3]).unwrap();
        assert!(b.partial_trace(&keep).is_err());
    }

    #[test]
    fn trace_identity_and_cyclicity() {
        let i8 = DenseOperator::identity(vec![1, 2, 3], P);
        assert_eq!(i8.trace(), c(8, 0));

        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..5 {
            let a = random_operator(&mut rng, vec![1, 2, 3]);
            let b = random_operator(&mut rng, vec![1, 2, 3]);
            let ab = a.matmul(&b).unwrap().trace();
            let ba = b.matmul(&a).unwrap().trace();
            let diff = ab.sub(&ba).modulus();
            // entries up to modulus ~sqrt(2); generous 2^-p+8 for 8x8
            assert!(diff.to_f64() < 2f64.powi(-(P as i32) + 8));
        }
    }

    #[test]
    fn frobenius_norm_unitary_invariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..5 {
            let b = random_operator(&mut rng, vec![1, 2, 3]);
            let u = random_unitaryish(&mut rng, vec![1, 2, 3]);
            let nb = b.frobenius_norm().to_f64();
            let nub = u.matmul(&b).unwrap().frobenius_norm().to_f64();
            assert!((nb - nub).abs() < 2f64.powi(-(P as i32) + 12));
        }
    }

    #[test]
    fn trace_bounded_by_frobenius() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..20 {
            let b = random_operator(&mut rng, vec![1, 2]);
            let t = b.trace().modulus().to_f64();
            let f = b.frobenius_norm().to_f64();
            assert!(t <= f + 4.0 * 2f64.powi(-(P as i32) + 4));
        }
    }

    #[test]
    fn kron_trace_multiplicative() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..10 {
            let a = random_operator(&mut rng, vec![1]);
            let b = random_operator(&mut rng, vec![2]);
            let lhs = a.kron(&b).unwrap().trace();
            let rhs = a.trace().mul(&b.trace());
            assert!(lhs.sub(&rhs).modulus().to_f64() < 2f64.powi(-(P as i32) + 6));
        }
    }

    #[test]
    fn reduction_commutes_with_local_factor() {
        // partial_trace(U * embed(q), Q) == partial_trace(U, Q) * q
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for _ in 0..5 {
            let reg = vec![1, 2, 3, 4];
            let u = random_operator(&mut rng, reg.clone());
            let q = random_operator(&mut rng, vec![2, 4]);
            let keep = QubitSet::new(vec![2, 4]).unwrap();
            let lhs = u
                .matmul(&q.embed(&reg).unwrap())
                .unwrap()
                .partial_trace(&keep)
                .unwrap();
            let rhs = u.partial_trace(&keep).unwrap().matmul(&q).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let d = lhs.entry(i, j).sub(rhs.entry(i, j)).modulus().to_f64();
                    assert!(d < 2f64.powi(-(P as i32) + 8), "entry ({i},{j}) differs by {d}");
                }
            }
        }
    }

    #[test]
    fn partial_trace_preserves_trace_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        for _ in 0..10 {
            let b = random_operator(&mut rng, vec![1, 2, 3]);
            let keep = QubitSet::new(vec![2]).unwrap();
            assert_eq!(b.partial_trace(&keep).unwrap().trace(), b.trace());
        }
    }
}
