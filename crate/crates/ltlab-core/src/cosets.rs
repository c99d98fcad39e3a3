//! Finite quotients o_L / pi^n via pi-digit representatives.
//!
//! Codes are integers sum_i c_i p^i with digits c_i in 0..p standing for the
//! representative sum_i c_i pi^i.  Residue degree one is assumed wherever a
//! reduction is performed (all shipped level structures satisfy this).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::padic::{FieldElem, LocalField};
use crate::series::WIDE_PREC;

#[derive(Clone, Debug)]
pub struct Cosets {
    field: Arc<LocalField>,
    level: u32,
}

impl Cosets {
    pub fn new(field: &Arc<LocalField>, level: u32) -> Result<Self> {
        if level >= 1 && field.f() != 1 {
            return Err(Error::Invalid(
                "coset digit arithmetic requires residue degree one".into(),
            ));
        }
        Ok(Cosets { field: field.clone(), level })
    }

    pub fn field(&self) -> &Arc<LocalField> {
        &self.field
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn size(&self) -> u64 {
        self.field.p().pow(self.level)
    }

    pub fn digits(&self, code: u64) -> Vec<u64> {
        let p = self.field.p();
        let mut c = code;
        (0..self.level).map(|_| { let d = c % p; c /= p; d }).collect()
    }

    pub fn decode(&self, code: u64) -> FieldElem {
        let pi = FieldElem::pi(&self.field, WIDE_PREC);
        let mut acc = FieldElem::zero(&self.field, WIDE_PREC);
        let mut pw = FieldElem::one(&self.field, WIDE_PREC);
        for d in self.digits(code) {
            if d != 0 {
                acc = acc.add(&pw.scale_i64(d as i64));
            }
            pw = pw.mul(&pi);
        }
        acc
    }

    /// Reduce an integral element to its coset code.
    pub fn reduce(&self, x: &FieldElem) -> Result<u64> {
        if x.val_pi_bound() < 0 {
            return Err(Error::Invalid("cannot reduce a non-integral element".into()));
        }
        let p = self.field.p();
        let pi = FieldElem::pi(x.field(), WIDE_PREC);
        let mut rem = x.clone();
        let mut code = 0u64;
        let mut mult = 1u64;
        for _ in 0..self.level {
            let mut digit = None;
            for c in 0..p {
                let t = rem.sub(&FieldElem::from_i64(x.field(), c as i64, WIDE_PREC));
                if t.val_pi_bound() >= 1 {
                    digit = Some((c, t));
                    break;
                }
            }
            let (c, t) = digit.ok_or_else(|| {
                Error::PrecisionExhausted("no residue digit found at working precision".into())
            })?;
            code += c * mult;
            mult *= p;
            rem = t.mul(&pi.inv()?);
        }
        Ok(code)
    }

    pub fn is_unit(&self, code: u64) -> bool {
        code % self.field.p() != 0
    }

    pub fn all(&self) -> Vec<u64> {
        (0..self.size()).collect()
    }

    pub fn units(&self) -> Vec<u64> {
        (0..self.size()).filter(|c| self.is_unit(*c)).collect()
    }

    pub fn mul(&self, a: u64, b: u64) -> Result<u64> {
        self.reduce(&self.decode(a).mul(&self.decode(b)))
    }

    pub fn add(&self, a: u64, b: u64) -> Result<u64> {
        self.reduce(&self.decode(a).add(&self.decode(b)))
    }

    pub fn neg(&self, a: u64) -> Result<u64> {
        self.reduce(&self.decode(a).neg())
    }

    pub fn inv(&self, a: u64) -> Result<u64> {
        if !self.is_unit(a) {
            return Err(Error::Invalid("not a unit".into()));
        }
        // brute force at desk scale
        for b in self.units() {
            if self.mul(a, b)? == 1 {
                return Ok(b);
            }
        }
        Err(Error::Invalid("no inverse found".into()))
    }

    /// Multiplicative order of a unit code.
    pub fn order(&self, a: u64) -> Result<u32> {
        let mut ord = 1u32;
        let mut x = a;
        while x != 1 {
            x = self.mul(x, a)?;
            ord += 1;
            if ord as u64 > self.size() {
                return Err(Error::Invalid("order search overflow".into()));
            }
        }
        Ok(ord)
    }

    /// A generator of the unit group, assuming it is cyclic.
    pub fn unit_generator(&self) -> Result<u64> {
        let n = self.units().len() as u32;
        for g in self.units() {
            if self.order(g)? == n {
                return Ok(g);
            }
        }
        Err(Error::Invalid("unit group is not cyclic".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{qp, qp_sqrt_p};

    #[test]
    fn integer_cosets_match() {
        let f = qp(3, 25).unwrap();
        let c = Cosets::new(&f, 2).unwrap();
        assert_eq!(c.size(), 9);
        for code in 0..9u64 {
            let x = c.decode(code);
            assert_eq!(c.reduce(&x).unwrap(), code);
        }
        assert_eq!(c.mul(4, 5).unwrap(), 2); // 20 mod 9
        assert_eq!(c.neg(1).unwrap(), 8);
    }

    #[test]
    fn ramified_cosets() {
        let f = qp_sqrt_p(3, 25).unwrap();
        let c = Cosets::new(&f, 1).unwrap();
        assert_eq!(c.units(), vec![1, 2]);
        assert_eq!(c.mul(2, 2).unwrap(), 1); // 4 = 1 mod sqrt(3)
    }

    #[test]
    fn unit_group_generator() {
        let f = qp(3, 25).unwrap();
        let c = Cosets::new(&f, 2).unwrap();
        let g = c.unit_generator().unwrap();
        assert_eq!(c.order(g).unwrap(), 6);
    }
}
