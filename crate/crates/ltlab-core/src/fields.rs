//! A small catalog of ready-made local fields.

use std::sync::Arc;

use num_bigint::BigInt;

use crate::error::Result;
use crate::padic::{make_field, FieldElem, LocalField, Rep, StageKind};

/// Q_p itself.
pub fn qp(p: u64, prec: i64) -> Result<Arc<LocalField>> {
    let _ = prec;
    make_field(p, vec![], 8)
}

fn base_coeffs(base: &Arc<LocalField>, cs: &[i64], prec: i64) -> Vec<Rep> {
    cs.iter().map(|&c| FieldElem::from_i64(base, c, prec).rep().clone()).collect()
}

/// Q_p(sqrt(p)) via the Eisenstein stage X^2 - p.
pub fn qp_sqrt_p(p: u64, prec: i64) -> Result<Arc<LocalField>> {
    let base = qp(p, prec)?;
    let poly = base_coeffs(&base, &[-(p as i64), 0, 1], prec);
    make_field(p, vec![(poly, StageKind::Eisenstein)], prec)
}

/// Coefficients of the p^m-th cyclotomic polynomial evaluated at 1 + Y,
/// an Eisenstein polynomial for zeta_{p^m} - 1.
pub fn cyclotomic_poly_shifted(p: u64, m: u32) -> Vec<BigInt> {
    // Phi_{p^m}(X) = sum_{j<p} X^{j p^(m-1)}; substitute X = 1 + Y.
    let deg = (p as usize - 1) * p.pow(m - 1) as usize;
    let mut coeffs = vec![BigInt::from(0); deg + 1];
    let step = p.pow(m - 1) as usize;
    for j in 0..p as usize {
        let n = j * step;
        // (1+Y)^n: add binomials
        let mut c = BigInt::from(1);
        for k in 0..=n {
            coeffs[k] += &c;
            // next binomial C(n, k+1)
            c = c * BigInt::from((n - k) as i64) / BigInt::from((k + 1) as i64);
        }
    }
    coeffs
}

/// Q_p(zeta_{p^m}) with uniformizer zeta - 1.
pub fn qp_cyclotomic(p: u64, m: u32, prec: i64) -> Result<Arc<LocalField>> {
    let base = qp(p, prec)?;
    let coeffs = cyclotomic_poly_shifted(p, m);
    let poly: Vec<Rep> = coeffs
        .iter()
        .map(|c| FieldElem::from_bigint(&base, c, prec).rep().clone())
        .collect();
    make_field(p, vec![(poly, StageKind::Eisenstein)], prec)
}

/// zeta_{p^m} inside `qp_cyclotomic(p, m, ..)`: 1 + (stage generator).
pub fn zeta_in_cyclotomic(field: &Arc<LocalField>, prec: i64) -> FieldElem {
    let u = FieldElem::stage_generator(field, field.stages().len() - 1, prec);
    u.add(&FieldElem::one(field, prec))
}

/// The unramified quadratic stage X^2 + X + 1 over Q_2 (residue degree 2).
pub fn q2_unramified_quadratic(prec: i64) -> Result<Arc<LocalField>> {
    let base = qp(2, prec)?;
    let poly = base_coeffs(&base, &[1, 1, 1], prec);
    make_field(2, vec![(poly, StageKind::Unramified)], prec)
}

/// Extend `l` by the level-one torsion stage X^(q-1) + pi of the special
/// Lubin-Tate datum.
pub fn special_torsion_stage(l: &Arc<LocalField>, prec: i64) -> Result<Arc<LocalField>> {
    let q = l.q();
    let pi = FieldElem::pi(l, prec);
    let mut poly = vec![pi.rep().clone()];
    for _ in 1..(q - 1) {
        poly.push(FieldElem::zero(l, prec).rep().clone());
    }
    poly.push(FieldElem::one(l, prec).rep().clone());
    let mut tower: Vec<(Vec<Rep>, StageKind)> = Vec::new();
    let rebuilt = l.stages().iter().map(|s| (s.poly.clone(), s.kind.clone()));
    tower.extend(rebuilt);
    tower.push((poly, StageKind::Eisenstein));
    make_field(l.p(), tower, prec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn cyclotomic_is_eisenstein() {
        let f = qp_cyclotomic(3, 1, 25).unwrap();
        assert_eq!(f.e(), 2);
        let z = zeta_in_cyclotomic(&f, 25);
        let one = FieldElem::one(&f, 25);
        assert!(z.pow_u64(3).eq_at_joint_prec(&one));
        // v_p(zeta_3 - 1) = 1/2
        let u = z.sub(&one);
        assert_eq!(u.val_p().unwrap(), BigRational::new(1.into(), 2.into()));
    }

    #[test]
    fn cyclotomic_level_two() {
        let f = qp_cyclotomic(3, 2, 25).unwrap();
        assert_eq!(f.e(), 6);
        let z = zeta_in_cyclotomic(&f, 25);
        let one = FieldElem::one(&f, 25);
        assert!(z.pow_u64(9).eq_at_joint_prec(&one));
        assert!(!z.pow_u64(3).sub(&one).is_zero_at_prec());
    }

    #[test]
    fn special_torsion_over_q3() {
        let l = qp(3, 25).unwrap();
        let l1 = special_torsion_stage(&l, 25).unwrap();
        assert_eq!(l1.e(), 2);
        let u1 = FieldElem::stage_generator(&l1, 0, 25);
        // u1^2 = -3
        let m3 = FieldElem::from_i64(&l1, -3, 25);
        assert!(u1.pow_u64(2).eq_at_joint_prec(&m3));
    }
}
