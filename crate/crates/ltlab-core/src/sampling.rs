//! Seeded random generators for the identity suites.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::padic::{FieldElem, LocalField};
use crate::series::{OmegaScalar, Series, Tail, VarTag, EXACT_TRUNC, WIDE_PREC};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random exact Laurent polynomial with small integer coefficients.
pub fn random_laurent(
    field: &Arc<LocalField>,
    rng: &mut ChaCha8Rng,
    lo: i64,
    hi: i64,
    coeff_bound: i64,
) -> Series {
    let mut coeffs = BTreeMap::new();
    for k in lo..=hi {
        let c: i64 = rng.gen_range(-coeff_bound..=coeff_bound);
        if c != 0 {
            coeffs.insert(k, OmegaScalar::from_i64(field, c, WIDE_PREC));
        }
    }
    if coeffs.is_empty() {
        coeffs.insert(0, OmegaScalar::one(field, WIDE_PREC));
    }
    Series::from_coeffs(field, VarTag::Z, coeffs, EXACT_TRUNC, Tail::Exact)
}

/// A random unit of o_L (integer not divisible by p, plus a pi-multiple).
pub fn random_unit(field: &Arc<LocalField>, rng: &mut ChaCha8Rng) -> FieldElem {
    let p = field.p() as i64;
    let mut u0: i64 = rng.gen_range(1..1000);
    if u0 % p == 0 {
        u0 += 1;
    }
    let tail: i64 = rng.gen_range(0..100);
    let pi = FieldElem::pi(field, WIDE_PREC);
    FieldElem::from_i64(field, u0, WIDE_PREC).add(&pi.mul(&FieldElem::from_i64(field, tail, WIDE_PREC)))
}

/// A random integral element of o_L.
pub fn random_integral(field: &Arc<LocalField>, rng: &mut ChaCha8Rng) -> FieldElem {
    let v: i64 = rng.gen_range(0..2000);
    let pi = FieldElem::pi(field, WIDE_PREC);
    let w: i64 = rng.gen_range(0..50);
    FieldElem::from_i64(field, v, WIDE_PREC).add(&pi.mul(&FieldElem::from_i64(field, w, WIDE_PREC)))
}
