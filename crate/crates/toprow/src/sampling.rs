//! Random single-qubit unitaries on the angle grid.
//!
//! Angles live on the grid {k·ξ : k·ξ < 2π} with ξ = 2^-xi_exp a power of
//! two. A draw is three grid indices; the realized 2x2 matrix
//!
//! ```text
//! [ cos θ e^{i φ1}    sin θ e^{i φ2} ]
//! [ -sin θ e^{-i φ2}  cos θ e^{-i φ1} ]
//! ```
//!
//! is computed deterministically from the indices, each entry within ξ of
//! the exact value at those grid angles. The verifier only ever transmits
//! indices, so both sides realize bit-identical matrices.

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fixed::{grid_point_count, trig_pair, FixedComplex, PrecisionContext};
use crate::linalg::DenseOperator;
use crate::{Error, Result};

/// Three angle-grid indices; `xi_exp` fixes the spacing `ξ = 2^-xi_exp`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleTriple {
    #[serde(with = "biguint_decimal")]
    pub theta_idx: BigUint,
    #[serde(with = "biguint_decimal")]
    pub phi1_idx: BigUint,
    #[serde(with = "biguint_decimal")]
    pub phi2_idx: BigUint,
    pub xi_exp: i32,
}

pub(crate) mod biguint_decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::from_str(&s).map_err(D::Error::custom)
    }
}

impl AngleTriple {
    pub fn zero(xi_exp: i32) -> Self {
        Self {
            theta_idx: BigUint::zero(),
            phi1_idx: BigUint::zero(),
            phi2_idx: BigUint::zero(),
            xi_exp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = grid_point_count(self.xi_exp);
        for (name, idx) in [
            ("theta", &self.theta_idx),
            ("phi1", &self.phi1_idx),
            ("phi2", &self.phi2_idx),
        ] {
            if idx >= &n {
                return Err(Error::Input(format!(
                    "{name} index {idx} out of range for xi_exp {}",
                    self.xi_exp
                )));
            }
        }
        Ok(())
    }
}

/// A draw from the tensor measure on three qubits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalUnitaryDescriptor {
    pub triples: [AngleTriple; 3],
    pub targets: [u32; 3],
}

/// One uniform draw of three angle indices. The grid has
/// `floor(2π·2^xi_exp)+1` points; `gen_biguint_below` rejection-samples the
/// top bucket, so no index ever maps at or beyond 2π.
pub fn sample_angles<R: Rng>(rng: &mut R, xi_exp: i32) -> AngleTriple {
    let n = grid_point_count(xi_exp);
    AngleTriple {
        theta_idx: rng.gen_biguint_below(&n),
        phi1_idx: rng.gen_biguint_below(&n),
        phi2_idx: rng.gen_biguint_below(&n),
        xi_exp,
    }
}

/// Realize the 2x2 truncated unitary for `t` on qubit `label`.
pub fn realize_unitary(t: &AngleTriple, label: u32, ctx: &PrecisionContext) -> DenseOperator {
    let (ct, st) = trig_pair(&t.theta_idx, t.xi_exp, ctx);
    let (c1, s1) = trig_pair(&t.phi1_idx, t.xi_exp, ctx);
    let (c2, s2) = trig_pair(&t.phi2_idx, t.xi_exp, ctx);
    let e1 = FixedComplex::new(c1.clone(), s1.clone());
    let e1c = FixedComplex::new(c1, s1.neg());
    let e2 = FixedComplex::new(c2.clone(), s2.clone());
    let e2c = FixedComplex::new(c2, s2.neg());
    let ct = FixedComplex::from_real(ct);
    let st = FixedComplex::from_real(st);
    DenseOperator::from_entries(
        vec![label],
        vec![ct.mul(&e1), st.mul(&e2), st.mul(&e2c).neg(), ct.mul(&e1c)],
        ctx.p,
    )
    .unwrap()
}

/// Draw three independent angle triples for the three target qubits.
pub fn sample_local_unitary<R: Rng>(
    rng: &mut R,
    targets: [u32; 3],
    xi_exp: i32,
) -> Result<LocalUnitaryDescriptor> {
    if targets[0] == targets[1] || targets[0] == targets[2] || targets[1] == targets[2] {
        return Err(Error::Input(format!("targets {targets:?} not distinct")));
    }
    let triples = [
        sample_angles(rng, xi_exp),
        sample_angles(rng, xi_exp),
        sample_angles(rng, xi_exp),
    ];
    Ok(LocalUnitaryDescriptor { triples, targets })
}

impl LocalUnitaryDescriptor {
    /// The 8x8 tensor `û¹ (x) û² (x) û³` on the descriptor's targets.
    pub fn realize(&self, ctx: &PrecisionContext) -> DenseOperator {
        let u1 = realize_unitary(&self.triples[0], self.targets[0], ctx);
        let u2 = realize_unitary(&self.triples[1], self.targets[1], ctx);
        let u3 = realize_unitary(&self.triples[2], self.targets[2], ctx);
        u1.kron(&u2).unwrap().kron(&u3).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.triples {
            t.validate()?;
        }
        Ok(())
    }
}
