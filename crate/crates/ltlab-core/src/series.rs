//! Truncated power and Laurent series over Laurent polynomials in the
//! formal period, with annulus valuations.
//!
//! Coefficients are `OmegaScalar`s: finitely supported maps from integer
//! period exponents to field elements.  All period-dependent identities stay
//! exact because the period is never evaluated numerically.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::padic::{FieldElem, LocalField};

/// Laurent polynomial in the formal period with field coefficients.
#[derive(Clone, Debug)]
pub struct OmegaScalar {
    field: Arc<LocalField>,
    terms: BTreeMap<i64, FieldElem>,
}

impl OmegaScalar {
    pub fn zero(field: &Arc<LocalField>) -> Self {
        OmegaScalar { field: field.clone(), terms: BTreeMap::new() }
    }

    pub fn from_elem(x: FieldElem) -> Self {
        let field = x.field().clone();
        let mut terms = BTreeMap::new();
        terms.insert(0, x);
        OmegaScalar { field, terms }
    }

    pub fn from_i64(field: &Arc<LocalField>, n: i64, prec: i64) -> Self {
        Self::from_elem(FieldElem::from_i64(field, n, prec))
    }

    /// Omega^k with the given coefficient.
    pub fn omega_pow(x: FieldElem, k: i64) -> Self {
        let field = x.field().clone();
        let mut terms = BTreeMap::new();
        terms.insert(k, x);
        OmegaScalar { field, terms }
    }

    pub fn one(field: &Arc<LocalField>, prec: i64) -> Self {
        Self::from_elem(FieldElem::one(field, prec))
    }

    pub fn field(&self) -> &Arc<LocalField> {
        &self.field
    }

    pub fn terms(&self) -> &BTreeMap<i64, FieldElem> {
        &self.terms
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (k, v) in &other.terms {
            match terms.get_mut(k) {
                Some(t) => *t = t.add(v),
                None => {
                    terms.insert(*k, v.clone());
                }
            }
        }
        OmegaScalar { field: self.field.clone(), terms }
    }

    pub fn neg(&self) -> Self {
        OmegaScalar {
            field: self.field.clone(),
            terms: self.terms.iter().map(|(k, v)| (*k, v.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms: BTreeMap<i64, FieldElem> = BTreeMap::new();
        for (i, a) in &self.terms {
            for (j, b) in &other.terms {
                let t = a.mul(b);
                match terms.get_mut(&(i + j)) {
                    Some(s) => *s = s.add(&t),
                    None => {
                        terms.insert(i + j, t);
                    }
                }
            }
        }
        OmegaScalar { field: self.field.clone(), terms }
    }

    pub fn scale(&self, c: &FieldElem) -> Self {
        OmegaScalar {
            field: self.field.clone(),
            terms: self.terms.iter().map(|(k, v)| (*k, v.mul(c))).collect(),
        }
    }

    /// Shift all period exponents by k (multiply by Omega^k).
    pub fn omega_shift(&self, k: i64) -> Self {
        OmegaScalar {
            field: self.field.clone(),
            terms: self.terms.iter().map(|(j, v)| (j + k, v.clone())).collect(),
        }
    }

    /// Invert a scalar concentrated in a single period degree.
    pub fn inv(&self) -> Result<Self> {
        let nz: Vec<(&i64, &FieldElem)> =
            self.terms.iter().filter(|(_, v)| !v.is_zero_at_prec()).collect();
        if nz.len() != 1 {
            return Err(Error::Invalid(
                "only single-degree period scalars are invertible here".into(),
            ));
        }
        let (k, v) = nz[0];
        Ok(Self::omega_pow(v.inv()?, -k))
    }

    pub fn is_zero_at_prec(&self) -> bool {
        self.terms.values().all(|v| v.is_zero_at_prec())
    }

    pub fn eq_at_joint_prec(&self, other: &Self) -> bool {
        self.sub(other).is_zero_at_prec()
    }

    /// The period-degree-zero part; asserts nothing else survives.
    pub fn scalar_part(&self) -> Result<FieldElem> {
        for (k, v) in &self.terms {
            if *k != 0 && !v.is_zero_at_prec() {
                return Err(Error::Invalid(format!(
                    "period degree {k} present in a value expected to be period-free"
                )));
            }
        }
        Ok(self
            .terms
            .get(&0)
            .cloned()
            .unwrap_or_else(|| FieldElem::zero(&self.field, WIDE_PREC)))
    }

    /// Valuation lower bound in pi-units, counting the period degree with
    /// its known valuation v_pi(Omega) = e/(p-1) - 1/(q-1).
    pub fn val_pi_bound(&self) -> BigRational {
        let ov = self.field.omega_vpi();
        let mut best: Option<BigRational> = None;
        for (k, v) in &self.terms {
            let w = BigRational::from(BigInt::from(v.val_pi_bound()))
                + ov.clone() * BigRational::from(BigInt::from(*k));
            best = Some(match best {
                None => w,
                Some(b) => b.min(w),
            });
        }
        best.unwrap_or_else(|| BigRational::from(BigInt::from(i64::MAX / 4)))
    }

    /// Exact valuation in pi-units; errors when indistinguishable from zero.
    pub fn val_pi(&self) -> Result<BigRational> {
        if self.is_zero_at_prec() {
            return Err(Error::PrecisionExhausted("period scalar is zero at precision".into()));
        }
        let ov = self.field.omega_vpi();
        let mut best: Option<BigRational> = None;
        for (k, v) in &self.terms {
            if v.is_zero_at_prec() {
                continue;
            }
            let w = BigRational::from(BigInt::from(v.val_pi()?))
                + ov.clone() * BigRational::from(BigInt::from(*k));
            best = Some(match best {
                None => w,
                Some(b) => b.min(w),
            });
        }
        Ok(best.unwrap())
    }

    pub fn truncate_pi(&self, m: i64) -> Self {
        OmegaScalar {
            field: self.field.clone(),
            terms: self.terms.iter().map(|(k, v)| (*k, v.truncate_pi(m))).collect(),
        }
    }
}

/// Variable of a series: the coordinate Z or the period variable t.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarTag {
    Z,
    T,
}

/// What is known beyond the truncation order.
#[derive(Clone, Debug, PartialEq)]
pub enum Tail {
    /// All higher coefficients vanish (the series is a Laurent polynomial).
    Exact,
    /// Higher coefficients have pi-valuation at least the bound.
    Bounded(BigRational),
    /// Nothing is known.
    Unknown,
}

impl Tail {
    fn meet(&self, other: &Tail) -> Tail {
        match (self, other) {
            (Tail::Exact, t) | (t, Tail::Exact) => t.clone(),
            (Tail::Bounded(a), Tail::Bounded(b)) => Tail::Bounded(a.clone().min(b.clone())),
            _ => Tail::Unknown,
        }
    }
}

/// Truncated Laurent series: coefficients for exponents in
/// [laurent floor, trunc) with a finite lower tail.
#[derive(Clone, Debug)]
pub struct Series {
    field: Arc<LocalField>,
    var: VarTag,
    coeffs: BTreeMap<i64, OmegaScalar>,
    trunc: i64,
    tail: Tail,
}

pub const EXACT_TRUNC: i64 = i64::MAX / 4;

/// Leaf precision used for exact small constants; wide enough that it never
/// limits a computation at desk scale.
pub const WIDE_PREC: i64 = 240;

impl Series {
    pub fn zero(field: &Arc<LocalField>, var: VarTag) -> Self {
        Series { field: field.clone(), var, coeffs: BTreeMap::new(), trunc: EXACT_TRUNC, tail: Tail::Exact }
    }

    pub fn monomial(c: OmegaScalar, exp: i64, var: VarTag) -> Self {
        let field = c.field().clone();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(exp, c);
        Series { field, var, coeffs, trunc: EXACT_TRUNC, tail: Tail::Exact }
    }

    pub fn constant(c: OmegaScalar, var: VarTag) -> Self {
        Self::monomial(c, 0, var)
    }

    pub fn from_coeffs(
        field: &Arc<LocalField>,
        var: VarTag,
        coeffs: BTreeMap<i64, OmegaScalar>,
        trunc: i64,
        tail: Tail,
    ) -> Self {
        let mut s = Series { field: field.clone(), var, coeffs, trunc, tail };
        s.coeffs.retain(|k, _| *k < s.trunc);
        s
    }

    pub fn field(&self) -> &Arc<LocalField> {
        &self.field
    }

    pub fn var(&self) -> VarTag {
        self.var
    }

    pub fn trunc(&self) -> i64 {
        self.trunc
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, OmegaScalar> {
        &self.coeffs
    }

    pub fn coeff(&self, k: i64) -> OmegaScalar {
        self.coeffs.get(&k).cloned().unwrap_or_else(|| OmegaScalar::zero(&self.field))
    }

    pub fn is_exact(&self) -> bool {
        self.tail == Tail::Exact
    }

    /// Lowest stored exponent with a coefficient (structural order).
    pub fn laurent_floor(&self) -> Option<i64> {
        self.coeffs.keys().next().copied()
    }

    /// Order: smallest exponent whose coefficient is nonzero at precision.
    pub fn order(&self) -> Option<i64> {
        self.coeffs.iter().find(|(_, c)| !c.is_zero_at_prec()).map(|(k, _)| *k)
    }

    pub fn is_power_series(&self) -> bool {
        self.coeffs.keys().next().map_or(true, |k| *k >= 0)
    }

    pub fn truncate_order(&self, t: i64) -> Self {
        if t >= self.trunc {
            return self.clone();
        }
        let mut s = self.clone();
        s.coeffs.retain(|k, _| *k < t);
        s.trunc = t;
        if s.tail == Tail::Exact {
            // the dropped coefficients were known exactly but are forgotten
            s.tail = Tail::Unknown;
        }
        s
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.var, other.var);
        let trunc = self.trunc.min(other.trunc);
        let mut coeffs = self.coeffs.clone();
        for (k, v) in &other.coeffs {
            match coeffs.get_mut(k) {
                Some(t) => *t = t.add(v),
                None => {
                    coeffs.insert(*k, v.clone());
                }
            }
        }
        Series::from_coeffs(&self.field, self.var, coeffs, trunc, self.tail.meet(&other.tail))
    }

    pub fn neg(&self) -> Self {
        Series {
            field: self.field.clone(),
            var: self.var,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.neg())).collect(),
            trunc: self.trunc,
            tail: self.tail.clone(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &OmegaScalar) -> Self {
        let tail = match &self.tail {
            Tail::Exact => Tail::Exact,
            Tail::Bounded(b) => Tail::Bounded(b.clone() + c.val_pi_bound()),
            Tail::Unknown => Tail::Unknown,
        };
        Series {
            field: self.field.clone(),
            var: self.var,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.mul(c))).collect(),
            trunc: self.trunc,
            tail,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.var, other.var);
        let ord1 = self.laurent_floor().unwrap_or(0);
        let ord2 = other.laurent_floor().unwrap_or(0);
        let trunc = if self.is_exact() && other.is_exact() {
            EXACT_TRUNC
        } else if self.is_exact() {
            other.trunc.saturating_add(ord1).min(EXACT_TRUNC)
        } else if other.is_exact() {
            self.trunc.saturating_add(ord2).min(EXACT_TRUNC)
        } else {
            (self.trunc.saturating_add(ord2)).min(other.trunc.saturating_add(ord1))
        };
        let mut coeffs: BTreeMap<i64, OmegaScalar> = BTreeMap::new();
        for (i, a) in &self.coeffs {
            for (j, b) in &other.coeffs {
                if i + j >= trunc {
                    continue;
                }
                let t = a.mul(b);
                match coeffs.get_mut(&(i + j)) {
                    Some(s) => *s = s.add(&t),
                    None => {
                        coeffs.insert(i + j, t);
                    }
                }
            }
        }
        let tail = if self.is_exact() && other.is_exact() { Tail::Exact } else { Tail::Unknown };
        Series::from_coeffs(&self.field, self.var, coeffs, trunc, tail)
    }

    pub fn pow_u64(&self, k: u64) -> Self {
        let mut acc = Series::constant(OmegaScalar::one(&self.field, WIDE_PREC), self.var);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Multiply by var^k.
    pub fn shift(&self, k: i64) -> Self {
        Series {
            field: self.field.clone(),
            var: self.var,
            coeffs: self.coeffs.iter().map(|(e, c)| (e + k, c.clone())).collect(),
            trunc: self.trunc.saturating_add(k).min(EXACT_TRUNC),
            tail: self.tail.clone(),
        }
    }

    /// d/dvar.
    pub fn derivative(&self) -> Self {
        let mut coeffs = BTreeMap::new();
        for (k, c) in &self.coeffs {
            if *k == 0 {
                continue;
            }
            let kf = FieldElem::from_i64(&self.field, *k, WIDE_PREC);
            coeffs.insert(k - 1, c.scale(&kf));
        }
        Series {
            field: self.field.clone(),
            var: self.var,
            coeffs,
            trunc: if self.trunc >= EXACT_TRUNC { EXACT_TRUNC } else { self.trunc - 1 },
            tail: self.tail.clone(),
        }
    }

    /// Coefficient of var^(-1).
    pub fn residue(&self) -> OmegaScalar {
        self.coeff(-1)
    }

    /// Multiplicative inverse, truncated at `out_trunc`; the leading
    /// coefficient must be invertible.
    pub fn invert(&self, out_trunc: i64) -> Result<Self> {
        let ord = self.order().ok_or_else(|| {
            Error::PrecisionExhausted("cannot invert a series that vanishes at precision".into())
        })?;
        let lead = self.coeff(ord);
        let lead_inv = lead.inv()?;
        // u = self * var^(-ord) has invertible constant term; invert u by the
        // standard recursion, then shift back.
        let u = self.shift(-ord);
        let n_terms = (out_trunc + ord).max(1);
        let mut inv_coeffs: BTreeMap<i64, OmegaScalar> = BTreeMap::new();
        inv_coeffs.insert(0, lead_inv.clone());
        for k in 1..n_terms {
            // coefficient k of u * inv must vanish
            let mut s = OmegaScalar::zero(&self.field);
            for (j, c) in inv_coeffs.iter() {
                if *j >= k {
                    break;
                }
                let a = u.coeff(k - j);
                s = s.add(&a.mul(c));
            }
            inv_coeffs.insert(k, s.neg().mul(&lead_inv));
        }
        let inv_u = Series::from_coeffs(&self.field, self.var, inv_coeffs, n_terms, Tail::Unknown);
        Ok(inv_u.shift(-ord).truncate_order(out_trunc))
    }

    pub fn div(&self, other: &Self, out_trunc: i64) -> Result<Self> {
        Ok(self.mul(&other.invert(out_trunc + 8)?).truncate_order(out_trunc))
    }

    /// Composition f(g) for an inner series g of strictly positive order.
    pub fn compose(&self, g: &Self) -> Result<Self> {
        if let Some(c0) = g.coeffs.get(&0) {
            if !c0.is_zero_at_prec() {
                return Err(Error::NonConvergentComposition(
                    "inner series must have positive order".into(),
                ));
            }
        }
        if g.laurent_floor().map_or(false, |f| f < 0) {
            return Err(Error::NonConvergentComposition(
                "inner series must be a power series".into(),
            ));
        }
        let floor = self.laurent_floor().unwrap_or(0);
        let out_trunc = if self.is_exact() && g.is_exact() {
            if floor >= 0 {
                EXACT_TRUNC
            } else {
                // inverse powers of g are infinite series; pick a finite
                // working order from the spans involved
                let top = self.coeffs.keys().max().copied().unwrap_or(0);
                let gdeg = g.coeffs.keys().max().copied().unwrap_or(1).max(1);
                ((top - floor + 4) * gdeg).max(48)
            }
        } else if g.is_exact() {
            self.trunc
        } else if self.is_exact() {
            g.trunc
        } else {
            g.trunc.min(self.trunc)
        };
        let work = out_trunc.min(EXACT_TRUNC / 2);
        let mut result = Series::zero(&self.field, g.var);
        if floor < 0 {
            let ginv = g.invert(work + (-floor) + 2)?;
            let mut pw = ginv.clone();
            let mut k = -1i64;
            loop {
                let c = self.coeff(k);
                if !c.terms.is_empty() {
                    result = result.add(&pw.scale(&c));
                }
                k -= 1;
                if k < floor {
                    break;
                }
                pw = pw.mul(&ginv).truncate_order(work + (-floor) + 2);
            }
            result = result.truncate_order(work);
        }
        // power-series part by Horner from the top stored exponent
        let top = self.coeffs.keys().rev().find(|k| **k >= 0).copied();
        if let Some(top) = top {
            let mut acc = Series::zero(&self.field, g.var);
            let mut k = top;
            loop {
                acc = acc.mul(g);
                if out_trunc < EXACT_TRUNC {
                    acc = acc.truncate_order(out_trunc);
                }
                let c = self.coeff(k);
                if !c.terms.is_empty() {
                    acc = acc.add(&Series::constant(c, g.var));
                }
                if k == 0 {
                    break;
                }
                k -= 1;
            }
            result = result.add(&acc);
        }
        if out_trunc >= EXACT_TRUNC {
            result.tail = Tail::Exact;
            result.trunc = EXACT_TRUNC;
        }
        Ok(result)
    }

    /// Evaluate at a field element of positive valuation.  The returned
    /// precision accounts for the unknown tail beyond the truncation.
    pub fn eval(&self, x: &FieldElem) -> Result<FieldElem> {
        let vx = match x.val_pi() {
            Ok(v) => v,
            Err(_) => {
                if self.laurent_floor().map_or(true, |f| f >= 0) {
                    // power series at (numerically) zero: constant term
                    let c = self.coeff(0).scalar_part()?;
                    return if c.field() == x.field() { Ok(c) } else { c.embed_into(x.field()) };
                }
                return Err(Error::PrecisionExhausted(
                    "evaluation point indistinguishable from zero".into(),
                ));
            }
        };
        if vx <= 0 && self.tail != Tail::Exact {
            return Err(Error::OutOfConvergenceDomain(
                "evaluation needs positive valuation".into(),
            ));
        }
        let mut acc = FieldElem::zero(x.field(), WIDE_PREC);
        for (k, c) in &self.coeffs {
            let cx = c.scalar_part()?;
            let cx = if cx.field() == x.field() { cx } else { cx.embed_into(x.field())? };
            let xp = x.pow_i64(*k)?;
            acc = acc.add(&cx.mul(&xp));
        }
        if self.tail != Tail::Exact {
            let bound = match &self.tail {
                Tail::Bounded(b) => b.clone(),
                _ => BigRational::zero(),
            };
            let tail_val = BigRational::from(BigInt::from(self.trunc * vx)) + bound;
            let fl = tail_val.floor().to_integer();
            let cap: i64 = i64::try_from(&fl).unwrap_or(EXACT_TRUNC / 2);
            acc = acc.truncate_pi(cap);
        }
        Ok(acc)
    }

    /// Map every coefficient.
    pub fn map_coeffs<F: Fn(&OmegaScalar) -> OmegaScalar>(&self, f: F) -> Self {
        Series {
            field: self.field.clone(),
            var: self.var,
            coeffs: self.coeffs.iter().map(|(k, c)| (*k, f(c))).collect(),
            trunc: self.trunc,
            tail: self.tail.clone(),
        }
    }

    pub fn with_var(&self, var: VarTag) -> Self {
        let mut s = self.clone();
        s.var = var;
        s
    }

    pub fn is_zero_at_prec(&self) -> bool {
        self.coeffs.values().all(|c| c.is_zero_at_prec())
    }

    /// Coefficientwise agreement at joint precision up to the joint
    /// truncation.
    pub fn eq_at_joint_prec(&self, other: &Self) -> bool {
        let t = self.trunc.min(other.trunc);
        let keys: std::collections::BTreeSet<i64> = self
            .coeffs
            .keys()
            .chain(other.coeffs.keys())
            .copied()
            .filter(|k| *k < t)
            .collect();
        keys.iter().all(|k| self.coeff(*k).eq_at_joint_prec(&other.coeff(*k)))
    }

    pub fn truncate_pi(&self, m: i64) -> Self {
        self.map_coeffs(|c| c.truncate_pi(m))
    }

    fn stored_min_valuation(&self) -> Result<BigRational> {
        let mut best: Option<BigRational> = None;
        for c in self.coeffs.values() {
            if c.is_zero_at_prec() {
                continue;
            }
            let v = c.val_pi()?;
            best = Some(match best {
                None => v,
                Some(b) => b.min(v),
            });
        }
        best.ok_or_else(|| Error::PrecisionExhausted("series vanishes at precision".into()))
    }

    /// -log_q of the sup norm over bounded elements: min_k v_pi(a_k).
    pub fn sup_norm_log(&self) -> Result<BigRational> {
        let m = self.stored_min_valuation()?;
        match &self.tail {
            Tail::Exact => Ok(m),
            Tail::Bounded(b) if *b >= m => Ok(m),
            _ => Err(Error::TailNotDominated(
                "tail bound does not dominate the stored minimum".into(),
            )),
        }
    }

    /// V_[s,r](f) = min over t in {s, r} of inf_k (v(a_k) + k t).
    pub fn annulus_valuation(&self, a: &AnnulusSpec) -> Result<BigRational> {
        let mut best: Option<BigRational> = None;
        for t in [&a.s, &a.r] {
            for (k, c) in &self.coeffs {
                if c.is_zero_at_prec() {
                    continue;
                }
                let w = c.val_pi()? + t.clone() * BigRational::from(BigInt::from(*k));
                best = Some(match best {
                    None => w,
                    Some(b) => b.min(w),
                });
            }
        }
        let best = best
            .ok_or_else(|| Error::PrecisionExhausted("series vanishes at precision".into()))?;
        // certify against the positive-exponent tail at t = s
        match &self.tail {
            Tail::Exact => Ok(best),
            Tail::Bounded(b) => {
                let tail_min =
                    b.clone() + a.s.clone() * BigRational::from(BigInt::from(self.trunc));
                if tail_min >= best {
                    Ok(best)
                } else {
                    Err(Error::TailNotDominated(format!(
                        "tail could reach {tail_min}, below certified {best}"
                    )))
                }
            }
            Tail::Unknown => Err(Error::TailNotDominated("tail unknown".into())),
        }
    }
}

/// A closed annulus 0 < s <= r given by valuation endpoints.
#[derive(Clone, Debug)]
pub struct AnnulusSpec {
    pub s: BigRational,
    pub r: BigRational,
}

impl AnnulusSpec {
    pub fn new(s: BigRational, r: BigRational) -> Result<Self> {
        if s <= BigRational::zero() || s > r {
            return Err(Error::Invalid("annulus requires 0 < s <= r".into()));
        }
        Ok(AnnulusSpec { s, r })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::qp;

    const PREC: i64 = 25;

    fn f3() -> Arc<LocalField> {
        qp(3, PREC).unwrap()
    }

    fn s_int(field: &Arc<LocalField>, terms: &[(i64, i64)]) -> Series {
        let mut coeffs = BTreeMap::new();
        for (e, c) in terms {
            coeffs.insert(*e, OmegaScalar::from_i64(field, *c, PREC));
        }
        Series::from_coeffs(field, VarTag::Z, coeffs, EXACT_TRUNC, Tail::Exact)
    }

    #[test]
    fn compose_polynomials() {
        let f = f3();
        // f = Z^2, g = Z + Z^2 -> Z^2 + 2Z^3 + Z^4
        let fz = s_int(&f, &[(2, 1)]);
        let gz = s_int(&f, &[(1, 1), (2, 1)]);
        let h = fz.compose(&gz).unwrap();
        let expect = s_int(&f, &[(2, 1), (3, 2), (4, 1)]);
        assert!(h.eq_at_joint_prec(&expect));
        assert!(h.is_exact());
    }

    #[test]
    fn geometric_series_composition() {
        let f = f3();
        // 1/(1+Z) composed with 2Z = sum (-2)^k Z^k
        let one_plus = s_int(&f, &[(0, 1), (1, 1)]);
        let inv = one_plus.invert(12).unwrap();
        let g2 = s_int(&f, &[(1, 2)]);
        let h = inv.compose(&g2).unwrap();
        for k in 0..8 {
            let expect = OmegaScalar::from_i64(&f, (-2i64).pow(k as u32), PREC);
            assert!(h.coeff(k).eq_at_joint_prec(&expect), "k = {k}");
        }
    }

    #[test]
    fn residue_basics() {
        let f = f3();
        let s = s_int(&f, &[(-1, 1), (0, 5), (3, 2)]);
        assert!(s.residue().eq_at_joint_prec(&OmegaScalar::from_i64(&f, 1, PREC)));
        // residue kills derivatives
        let d = s_int(&f, &[(-3, 4), (2, 7)]).derivative();
        assert!(d.residue().is_zero_at_prec());
    }

    #[test]
    fn annulus_vals() {
        let f = f3();
        let one = BigRational::from(BigInt::from(1));
        let a11 = AnnulusSpec::new(one.clone(), one.clone()).unwrap();
        // f = Z at [1,1] -> 1
        assert_eq!(s_int(&f, &[(1, 1)]).annulus_valuation(&a11).unwrap(), one);
        // f = p + Z^2 at [1,1] -> min(1, 2) = 1
        assert_eq!(s_int(&f, &[(0, 3), (2, 1)]).annulus_valuation(&a11).unwrap(), one);
        // f = sum p^k Z^(-k) at [1/2,1/2] -> 1/2
        let half = BigRational::new(1.into(), 2.into());
        let ah = AnnulusSpec::new(half.clone(), half.clone()).unwrap();
        let mut coeffs = BTreeMap::new();
        for k in 1..12i64 {
            coeffs.insert(
                -k,
                OmegaScalar::from_elem(FieldElem::from_bigint(
                    &f,
                    &BigInt::from(3).pow(k as u32),
                    PREC,
                )),
            );
        }
        let s = Series::from_coeffs(&f, VarTag::Z, coeffs, 1, Tail::Bounded(BigRational::zero()));
        assert_eq!(s.annulus_valuation(&ah).unwrap(), half);
    }

    #[test]
    fn sup_norm_examples() {
        let f = f3();
        // f = pi -> 1
        let s = s_int(&f, &[(0, 3)]);
        assert_eq!(s.sup_norm_log().unwrap(), BigRational::from(BigInt::from(1)));
        // f = 1 + pi Z -> 0
        let s = s_int(&f, &[(0, 1), (1, 3)]);
        assert_eq!(s.sup_norm_log().unwrap(), BigRational::zero());
    }

    #[test]
    fn eval_with_tail_cap() {
        let f = f3();
        // truncated geometric series evaluated at 3: 1/(1-3) = -1/2
        let one_minus = s_int(&f, &[(0, 1), (1, -1)]);
        let inv = one_minus.invert(12).unwrap();
        let x = FieldElem::from_i64(&f, 3, PREC);
        let v = inv.eval(&x).unwrap();
        let expect =
            FieldElem::from_rational(&f, &BigRational::new((-1).into(), 2.into()), v.prec_pi())
                .unwrap();
        assert!(v.eq_at_joint_prec(&expect));
        assert!(v.prec_pi() <= 12);
    }

    #[test]
    fn omega_scalar_algebra() {
        let f = f3();
        let om = OmegaScalar::omega_pow(FieldElem::one(&f, PREC), 1);
        let omi = OmegaScalar::omega_pow(FieldElem::one(&f, PREC), -1);
        assert!(om.mul(&omi).eq_at_joint_prec(&OmegaScalar::one(&f, PREC)));
        let two_om = om.scale(&FieldElem::from_i64(&f, 2, PREC));
        assert!(two_om.sub(&om).eq_at_joint_prec(&om));
    }

    #[test]
    fn mul_truncation_conservative() {
        let f = f3();
        let a = s_int(&f, &[(1, 1), (2, 1)]).truncate_order(3); // known below Z^3
        let b = s_int(&f, &[(2, 5)]);
        let c = a.mul(&b);
        // trunc = 3 + 2
        assert_eq!(c.trunc(), 5);
    }
}
