//! Exact arithmetic in Q_p and in finite extension towers, with absolute
//! precision tracking.
//!
//! An element is always known modulo a power of the uniformizer; binary
//! operations propagate precision by the conservative rules (min for
//! addition, valuation-shifted min for multiplication, explicit loss for
//! division).

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

fn pow_u(p: u64, k: u64) -> BigUint {
    BigUint::from(p).pow(k as u32)
}

/// An element of Q_p known modulo p^prec.
///
/// Nonzero elements are stored as p^val * unit with the unit reduced modulo
/// p^(prec - val) and coprime to p.  An element with val >= prec is
/// indistinguishable from zero at its precision.
#[derive(Clone, PartialEq, Eq)]
pub struct Padic {
    p: u64,
    val: i64,
    prec: i64,
    unit: BigUint,
}

impl fmt::Debug for Padic {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero_at_prec() {
            write!(fm, "O({}^{})", self.p, self.prec)
        } else {
            write!(fm, "{}^{}*{} + O({}^{})", self.p, self.val, self.unit, self.p, self.prec)
        }
    }
}

impl Padic {
    pub fn zero(p: u64, prec: i64) -> Self {
        Padic { p, val: prec, prec, unit: BigUint::zero() }
    }

    pub fn one(p: u64, prec: i64) -> Self {
        Self::from_i64(p, 1, prec)
    }

    pub fn from_i64(p: u64, n: i64, prec: i64) -> Self {
        Self::from_bigint(p, &BigInt::from(n), prec)
    }

    pub fn from_bigint(p: u64, n: &BigInt, prec: i64) -> Self {
        if n.is_zero() {
            return Self::zero(p, prec);
        }
        let mut val = 0i64;
        let pb = BigInt::from(p);
        let mut m = n.clone();
        while (&m % &pb).is_zero() {
            m /= &pb;
            val += 1;
            if val >= prec {
                return Self::zero(p, prec);
            }
        }
        let modulus = pow_u(p, (prec - val) as u64);
        let mut unit = m % BigInt::from(modulus.clone());
        if unit.is_negative() {
            unit += BigInt::from(modulus);
        }
        Padic { p, val, prec, unit: unit.to_biguint().unwrap() }
    }

    /// Exact rational, truncated to absolute precision `prec`.
    pub fn from_ratio(p: u64, num: &BigInt, den: &BigInt, prec: i64) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Invalid("division by zero".into()));
        }
        if num.is_zero() {
            return Ok(Self::zero(p, prec));
        }
        // strip p-powers from both sides
        let pb = BigInt::from(p);
        let (mut n, mut d) = (num.clone(), den.clone());
        let mut val = 0i64;
        while (&n % &pb).is_zero() {
            n /= &pb;
            val += 1;
        }
        while (&d % &pb).is_zero() {
            d /= &pb;
            val -= 1;
        }
        if val >= prec {
            return Ok(Self::zero(p, prec));
        }
        let modulus = pow_u(p, (prec - val) as u64);
        let d_inv = mod_inverse(&d, &modulus)?;
        let mut unit = (n * BigInt::from(d_inv)) % BigInt::from(modulus.clone());
        if unit.is_negative() {
            unit += BigInt::from(modulus);
        }
        Ok(Padic { p, val, prec, unit: unit.to_biguint().unwrap() })
    }

    pub fn from_rational(p: u64, r: &BigRational, prec: i64) -> Result<Self> {
        Self::from_ratio(p, r.numer(), r.denom(), prec)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn prec(&self) -> i64 {
        self.prec
    }

    pub fn is_zero_at_prec(&self) -> bool {
        self.val >= self.prec
    }

    /// p-adic valuation; None when indistinguishable from zero.
    pub fn val(&self) -> Option<i64> {
        if self.is_zero_at_prec() { None } else { Some(self.val) }
    }

    /// Lower bound for the valuation (the valuation itself, or the precision
    /// for zero-at-precision elements).
    pub fn val_bound(&self) -> i64 {
        self.val.min(self.prec)
    }

    /// Reduce the absolute precision to `prec`.
    pub fn truncate(&self, prec: i64) -> Self {
        if prec >= self.prec {
            return self.clone();
        }
        if self.val >= prec {
            return Self::zero(self.p, prec);
        }
        let modulus = pow_u(self.p, (prec - self.val) as u64);
        let unit = &self.unit % &modulus;
        if unit.is_zero() {
            // lost all digits above the valuation: renormalize
            return Self::zero(self.p, prec);
        }
        let mut r = Padic { p: self.p, val: self.val, prec, unit };
        r.renorm();
        r
    }

    fn renorm(&mut self) {
        if self.val >= self.prec {
            *self = Self::zero(self.p, self.prec);
            return;
        }
        let pb = BigUint::from(self.p);
        while !self.unit.is_zero() && (&self.unit % &pb).is_zero() {
            self.unit /= &pb;
            self.val += 1;
        }
        if self.unit.is_zero() || self.val >= self.prec {
            *self = Self::zero(self.p, self.prec);
        } else {
            let modulus = pow_u(self.p, (self.prec - self.val) as u64);
            self.unit %= &modulus;
            if self.unit.is_zero() {
                *self = Self::zero(self.p, self.prec);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.p, other.p);
        let prec = self.prec.min(other.prec);
        if self.is_zero_at_prec() {
            return other.truncate(prec);
        }
        if other.is_zero_at_prec() {
            return self.truncate(prec);
        }
        let val = self.val.min(other.val);
        if val >= prec {
            return Self::zero(self.p, prec);
        }
        let modulus = pow_u(self.p, (prec - val) as u64);
        let a = &self.unit * pow_u(self.p, (self.val - val) as u64) % &modulus;
        let b = &other.unit * pow_u(self.p, (other.val - val) as u64) % &modulus;
        let mut r = Padic { p: self.p, val, prec, unit: (a + b) % &modulus };
        r.renorm();
        r
    }

    pub fn neg(&self) -> Self {
        if self.is_zero_at_prec() {
            return self.clone();
        }
        let modulus = pow_u(self.p, (self.prec - self.val) as u64);
        Padic { p: self.p, val: self.val, prec: self.prec, unit: &modulus - &self.unit }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.p, other.p);
        // v = v1 + v2, prec = min(N1 + v2, N2 + v1)
        let v1 = self.val_bound();
        let v2 = other.val_bound();
        let prec = (self.prec + v2).min(other.prec + v1);
        if self.is_zero_at_prec() || other.is_zero_at_prec() {
            return Self::zero(self.p, prec);
        }
        let val = self.val + other.val;
        if val >= prec {
            return Self::zero(self.p, prec);
        }
        let modulus = pow_u(self.p, (prec - val) as u64);
        Padic { p: self.p, val, prec, unit: (&self.unit * &other.unit) % &modulus }
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_zero_at_prec() {
            return Err(Error::PrecisionExhausted("inverse of zero-at-precision".into()));
        }
        // 1/(p^v u) = p^{-v} u^{-1}; relative precision is preserved
        let rel = (self.prec - self.val) as u64;
        let modulus = pow_u(self.p, rel);
        let unit = mod_inverse(&BigInt::from(self.unit.clone()), &modulus)?;
        Ok(Padic { p: self.p, val: -self.val, prec: self.prec - 2 * self.val, unit })
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.inv()?))
    }

    /// Multiply by p^k (exact shift).
    pub fn shift(&self, k: i64) -> Self {
        if self.is_zero_at_prec() {
            return Self::zero(self.p, self.prec + k);
        }
        Padic { p: self.p, val: self.val + k, prec: self.prec + k, unit: self.unit.clone() }
    }

    /// Agreement modulo p^min(prec1, prec2).
    pub fn eq_at_joint_prec(&self, other: &Self) -> bool {
        self.sub(other).is_zero_at_prec()
    }

    /// Unit part as an integer representative (for serialization / hashing).
    pub fn unit_repr(&self) -> &BigUint {
        &self.unit
    }

    /// Integer representative of the whole element modulo p^prec
    /// (only for val >= 0).
    pub fn int_repr(&self) -> Option<BigUint> {
        if self.is_zero_at_prec() {
            return Some(BigUint::zero());
        }
        if self.val < 0 {
            return None;
        }
        Some(&self.unit * pow_u(self.p, self.val as u64))
    }

    pub fn val_raw(&self) -> i64 {
        self.val
    }
}

fn mod_inverse(a: &BigInt, modulus: &BigUint) -> Result<BigUint> {
    let m = BigInt::from(modulus.clone());
    let mut a = a % &m;
    if a.is_negative() {
        a += &m;
    }
    // extended Euclid
    let (mut r0, mut r1) = (m.clone(), a.clone());
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while !r1.is_zero() {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        r0 = std::mem::replace(&mut r1, r2);
        let t2 = &t0 - &q * &t1;
        t0 = std::mem::replace(&mut t1, t2);
    }
    if !r0.is_one() {
        return Err(Error::Invalid("element not invertible modulo p-power".into()));
    }
    let mut t = t0 % &m;
    if t.is_negative() {
        t += &m;
    }
    Ok(t.to_biguint().unwrap())
}

/// One stage of a defining tower.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StageKind {
    /// Monic polynomial whose non-leading coefficients have positive
    /// valuation and constant term of valuation exactly one.
    Eisenstein,
    /// Monic polynomial with unit coefficients whose reduction is
    /// irreducible over the residue field.
    Unramified,
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub poly: Vec<Rep>,
    pub kind: StageKind,
}

impl Stage {
    pub fn degree(&self) -> usize {
        self.poly.len() - 1
    }
}

/// Nested coefficient representation: depth equals the number of stages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rep {
    Base(Padic),
    Ext(Vec<Rep>),
}

impl Rep {
    fn depth(&self) -> usize {
        match self {
            Rep::Base(_) => 0,
            Rep::Ext(v) => 1 + v[0].depth(),
        }
    }
}

/// A finite extension tower over Q_p with a distinguished uniformizer.
#[derive(Clone, Debug)]
pub struct LocalField {
    p: u64,
    stages: Vec<Stage>,
    e: u64,
    f: u64,
}

impl PartialEq for LocalField {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.e == other.e
            && self.f == other.f
            && self.stages.len() == other.stages.len()
            && self.stages.iter().zip(&other.stages).all(|(a, b)| {
                a.kind == b.kind
                    && a.poly.len() == b.poly.len()
                    && a.poly
                        .iter()
                        .zip(&b.poly)
                        .all(|(x, y)| rep_eq_joint(self, self.stages.len().saturating_sub(1), x, y))
            })
    }
}

/// Structural equality at joint precision (leafwise).
fn rep_eq_joint(field: &LocalField, level: usize, a: &Rep, b: &Rep) -> bool {
    let _ = (field, level);
    match (a, b) {
        (Rep::Base(x), Rep::Base(y)) => x.eq_at_joint_prec(y),
        (Rep::Ext(xs), Rep::Ext(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| rep_eq_joint(field, level, x, y))
        }
        _ => false,
    }
}

impl LocalField {
    pub fn p(&self) -> u64 {
        self.p
    }
    pub fn e(&self) -> u64 {
        self.e
    }
    pub fn f(&self) -> u64 {
        self.f
    }
    pub fn q(&self) -> u64 {
        self.p.pow(self.f as u32)
    }
    pub fn degree(&self) -> usize {
        (self.e * self.f) as usize
    }
    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }
    /// v_p of the formal period: 1/(p-1) - 1/(e(q-1)).
    pub fn omega_vp(&self) -> BigRational {
        let one = BigInt::one();
        BigRational::new(one.clone(), BigInt::from(self.p - 1))
            - BigRational::new(one, BigInt::from(self.e * (self.q() - 1)))
    }
    /// v_pi of the formal period (e times the p-adic one).
    pub fn omega_vpi(&self) -> BigRational {
        self.omega_vp() * BigRational::from(BigInt::from(self.e))
    }
}

/// Build a field from a prime and a tower of stage polynomials.
///
/// Each polynomial is given by its coefficient list (constant first) as
/// elements of the previous stage; `prec` is the working precision used for
/// the stage checks.
pub fn make_field(p: u64, tower: Vec<(Vec<Rep>, StageKind)>, prec: i64) -> Result<Arc<LocalField>> {
    let mut field = LocalField { p, stages: Vec::new(), e: 1, f: 1 };
    for (poly, kind) in tower {
        let arc = Arc::new(field.clone());
        validate_stage(&arc, &poly, &kind, prec)?;
        let deg = poly.len() - 1;
        match kind {
            StageKind::Eisenstein => field.e *= deg as u64,
            StageKind::Unramified => field.f *= deg as u64,
        }
        field.stages.push(Stage { poly, kind });
    }
    Ok(Arc::new(field))
}

fn validate_stage(sub: &Arc<LocalField>, poly: &[Rep], kind: &StageKind, prec: i64) -> Result<()> {
    if poly.len() < 2 {
        return Err(Error::Invalid("stage polynomial must have positive degree".into()));
    }
    for c in poly {
        if c.depth() != sub.stages.len() {
            return Err(Error::Invalid("stage coefficient has wrong tower depth".into()));
        }
    }
    let lead = FieldElem { field: sub.clone(), rep: poly.last().unwrap().clone() };
    let one = FieldElem::one(sub, prec);
    if !lead.eq_at_joint_prec(&one) {
        return Err(Error::Invalid("stage polynomial must be monic".into()));
    }
    match kind {
        StageKind::Eisenstein => {
            let c0 = FieldElem { field: sub.clone(), rep: poly[0].clone() };
            if c0.val_pi()? != 1 {
                return Err(Error::NotEisenstein("constant term must have valuation one".into()));
            }
            for c in &poly[1..poly.len() - 1] {
                let fe = FieldElem { field: sub.clone(), rep: c.clone() };
                if fe.val_pi_bound() < 1 {
                    return Err(Error::NotEisenstein(
                        "middle coefficient must have positive valuation".into(),
                    ));
                }
            }
            Ok(())
        }
        StageKind::Unramified => {
            for c in poly {
                let fe = FieldElem { field: sub.clone(), rep: c.clone() };
                if fe.val_pi_bound() < 0 {
                    return Err(Error::Invalid("unramified stage needs integral coefficients".into()));
                }
            }
            // root search in the residue field of the current stage
            if residue_poly_has_root(sub, poly) {
                return Err(Error::NotIrreducibleDetected(
                    "residue polynomial has a root in the current residue field".into(),
                ));
            }
            let deg = poly.len() - 1;
            if deg > 3 {
                // exhaustive root search certifies irreducibility only up to
                // cubics; larger stages are out of the shipped catalog
                return Err(Error::Invalid(
                    "unramified stages of degree > 3 are not supported".into(),
                ));
            }
            Ok(())
        }
    }
}

/// Exhaustive residue-field root search (residue fields here are tiny).
///
/// Residues are enumerated as integer combinations of powers of the
/// unramified generator; the shipped catalog has at most one unramified
/// stage, which this spans completely.
fn residue_poly_has_root(sub: &Arc<LocalField>, poly: &[Rep]) -> bool {
    let q = sub.q();
    if q > 512 {
        return false;
    }
    let prec = 6;
    let p = sub.p();
    let fdim = sub.f as usize;
    let w = sub
        .stages
        .iter()
        .position(|s| s.kind == StageKind::Unramified)
        .map(|i| FieldElem::stage_generator(sub, i, prec))
        .unwrap_or_else(|| FieldElem::one(sub, prec));
    let mut basis = vec![FieldElem::one(sub, prec)];
    for _ in 1..fdim {
        basis.push(basis.last().unwrap().mul(&w));
    }
    let total = (p as u64).pow(fdim as u32);
    for code in 0..total {
        let mut c = code;
        let mut x = FieldElem::zero(sub, prec);
        for b in &basis {
            let d = (c % p) as i64;
            c /= p;
            if d != 0 {
                x = x.add(&b.scale_i64(d));
            }
        }
        let mut acc = FieldElem::zero(sub, prec);
        let mut pw = FieldElem::one(sub, prec);
        for coef in poly {
            let cf = FieldElem { field: sub.clone(), rep: coef.clone() };
            acc = acc.add(&cf.mul(&pw));
            pw = pw.mul(&x);
        }
        if acc.val_pi_bound() >= 1 {
            return true;
        }
    }
    false
}

/// An element of a LocalField with tracked precision.
#[derive(Clone, Debug)]
pub struct FieldElem {
    field: Arc<LocalField>,
    rep: Rep,
}

impl FieldElem {
    pub fn field(&self) -> &Arc<LocalField> {
        &self.field
    }

    pub fn rep(&self) -> &Rep {
        &self.rep
    }

    fn zero_rep(field: &LocalField, level: usize, prec_base: i64) -> Rep {
        if level == 0 {
            Rep::Base(Padic::zero(field.p, prec_base))
        } else {
            let d = field.stages[level - 1].degree();
            Rep::Ext(vec![Self::zero_rep(field, level - 1, prec_base); d])
        }
    }

    /// `prec` is absolute precision in base-p digits for the Q_p leaves.
    pub fn zero(field: &Arc<LocalField>, prec: i64) -> Self {
        FieldElem { field: field.clone(), rep: Self::zero_rep(field, field.stages.len(), prec) }
    }

    pub fn one(field: &Arc<LocalField>, prec: i64) -> Self {
        Self::from_i64(field, 1, prec)
    }

    pub fn from_i64(field: &Arc<LocalField>, n: i64, prec: i64) -> Self {
        Self::from_bigint(field, &BigInt::from(n), prec)
    }

    pub fn from_bigint(field: &Arc<LocalField>, n: &BigInt, prec: i64) -> Self {
        let mut rep = Self::zero_rep(field, field.stages.len(), prec);
        set_leading(&mut rep, Padic::from_bigint(field.p, n, prec));
        FieldElem { field: field.clone(), rep }
    }

    pub fn from_rational(field: &Arc<LocalField>, r: &BigRational, prec: i64) -> Result<Self> {
        let mut rep = Self::zero_rep(field, field.stages.len(), prec);
        set_leading(&mut rep, Padic::from_rational(field.p, r, prec)?);
        Ok(FieldElem { field: field.clone(), rep })
    }

    /// Generator of stage `i` (the class of X in that stage), embedded in the
    /// full tower.
    pub fn stage_generator(field: &Arc<LocalField>, i: usize, prec: i64) -> Self {
        let mut rep = gen_rep(field, i, prec);
        for j in (i + 1)..field.stages.len() {
            let d = field.stages[j].degree();
            let mut v = vec![Self::zero_rep(field, j, prec); d];
            v[0] = rep;
            rep = Rep::Ext(v);
        }
        FieldElem { field: field.clone(), rep }
    }

    /// The distinguished uniformizer: the generator of the last Eisenstein
    /// stage, or p itself.
    pub fn pi(field: &Arc<LocalField>, prec: i64) -> Self {
        let last_eis = field
            .stages
            .iter()
            .enumerate()
            .rev()
            .find(|(_, s)| s.kind == StageKind::Eisenstein)
            .map(|(i, _)| i);
        match last_eis {
            Some(i) => Self::stage_generator(field, i, prec),
            None => Self::from_i64(field, field.p as i64, prec),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert!(Arc::ptr_eq(&self.field, &other.field) || *self.field == *other.field);
        FieldElem {
            field: self.field.clone(),
            rep: add_rep(&self.field, self.field.stages.len(), &self.rep, &other.rep),
        }
    }

    pub fn neg(&self) -> Self {
        FieldElem { field: self.field.clone(), rep: neg_rep(&self.rep) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert!(Arc::ptr_eq(&self.field, &other.field) || *self.field == *other.field);
        FieldElem {
            field: self.field.clone(),
            rep: mul_rep(&self.field, self.field.stages.len(), &self.rep, &other.rep),
        }
    }

    pub fn scale_i64(&self, n: i64) -> Self {
        let k = FieldElem::from_i64(&self.field, n, self.prec_pi().max(1) + 4);
        self.mul(&k)
    }

    pub fn pow_u64(&self, mut k: u64) -> Self {
        let mut acc = FieldElem::one(&self.field, self.prec_pi().max(1));
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            k >>= 1;
        }
        acc
    }

    pub fn pow_i64(&self, k: i64) -> Result<Self> {
        if k >= 0 {
            Ok(self.pow_u64(k as u64))
        } else {
            Ok(self.inv()?.pow_u64((-k) as u64))
        }
    }

    /// pi-adic valuation (exact integer in the value group of the field).
    pub fn val_pi(&self) -> Result<i64> {
        match val_rep(&self.field, self.field.stages.len(), &self.rep) {
            ValInfo::Exact(v) => Ok(v),
            ValInfo::ZeroBound(b) => Err(Error::PrecisionExhausted(format!(
                "element is O(pi^{b}), indistinguishable from zero"
            ))),
            ValInfo::Uncertain(b) => Err(Error::PrecisionExhausted(format!(
                "valuation uncertain below pi^{b}"
            ))),
        }
    }

    /// Lower bound for v_pi (valid also for zero-at-precision elements).
    pub fn val_pi_bound(&self) -> i64 {
        match val_rep(&self.field, self.field.stages.len(), &self.rep) {
            ValInfo::Exact(v) => v,
            ValInfo::ZeroBound(b) | ValInfo::Uncertain(b) => b,
        }
    }

    /// p-adic valuation as a rational: v_pi / e.
    pub fn val_p(&self) -> Result<BigRational> {
        Ok(BigRational::new(BigInt::from(self.val_pi()?), BigInt::from(self.field.e)))
    }

    pub fn is_zero_at_prec(&self) -> bool {
        matches!(
            val_rep(&self.field, self.field.stages.len(), &self.rep),
            ValInfo::ZeroBound(_)
        ) || self.val_pi_bound() >= self.prec_pi()
    }

    /// Absolute precision in pi-units.
    pub fn prec_pi(&self) -> i64 {
        prec_rep(&self.field, self.field.stages.len(), &self.rep)
    }

    pub fn eq_at_joint_prec(&self, other: &Self) -> bool {
        self.sub(other).is_zero_at_prec()
    }

    /// Reduce the absolute pi-precision to `m`.
    pub fn truncate_pi(&self, m: i64) -> Self {
        FieldElem {
            field: self.field.clone(),
            rep: trunc_rep(&self.field, self.field.stages.len(), &self.rep, m),
        }
    }

    /// Flatten to Q_p coordinates in the tensor basis of stage generators.
    pub fn flatten(&self) -> Vec<Padic> {
        let mut out = Vec::with_capacity(self.field.degree());
        flatten_rep(&self.rep, &mut out);
        out
    }

    pub fn from_flat(field: &Arc<LocalField>, flat: &[Padic]) -> Self {
        let mut it = flat.iter();
        let rep = unflatten_rep(field, field.stages.len(), &mut it);
        FieldElem { field: field.clone(), rep }
    }

    pub fn inv(&self) -> Result<Self> {
        if self.field.stages.is_empty() {
            if let Rep::Base(b) = &self.rep {
                return Ok(FieldElem { field: self.field.clone(), rep: Rep::Base(b.inv()?) });
            }
            unreachable!();
        }
        // Solve (mul-by-self) * y = 1 over the Q_p basis.
        let n = self.field.degree();
        let prec_guard = leaf_max_prec(&self.rep);
        let mut cols: Vec<Vec<Padic>> = Vec::with_capacity(n);
        for j in 0..n {
            let bj = basis_elem(&self.field, j, prec_guard);
            cols.push(self.mul(&bj).flatten());
        }
        let one = FieldElem::one(&self.field, prec_guard).flatten();
        let sol = solve_linear(self.field.p, &cols, &one)?;
        Ok(Self::from_flat(&self.field, &sol))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.inv()?))
    }

    /// Trace to Q_p (trace of the multiplication operator).
    pub fn trace_to_qp(&self) -> Padic {
        let n = self.field.degree();
        if n == 1 {
            if let Rep::Base(b) = &self.rep {
                return b.clone();
            }
        }
        let prec_guard = leaf_max_prec(&self.rep);
        let mut tr = Padic::zero(self.field.p, prec_guard);
        for j in 0..n {
            let bj = basis_elem(&self.field, j, prec_guard);
            let col = self.mul(&bj).flatten();
            tr = tr.add(&col[j]);
        }
        tr
    }

    /// Embed into a field whose tower extends this element's tower.
    pub fn embed_into(&self, bigger: &Arc<LocalField>) -> Result<Self> {
        let small = &self.field;
        if bigger.p != small.p || bigger.stages.len() < small.stages.len() {
            return Err(Error::Invalid("target field does not extend the source tower".into()));
        }
        for (a, b) in small.stages.iter().zip(&bigger.stages) {
            if a.kind != b.kind || a.poly.len() != b.poly.len() {
                return Err(Error::Invalid("target tower does not extend the source tower".into()));
            }
        }
        let leaf_prec = leaf_max_prec(&self.rep);
        let mut rep = self.rep.clone();
        for j in small.stages.len()..bigger.stages.len() {
            let d = bigger.stages[j].degree();
            let mut v = vec![FieldElem::zero_rep(bigger, j, leaf_prec); d];
            v[0] = rep;
            rep = Rep::Ext(v);
        }
        Ok(FieldElem { field: bigger.clone(), rep })
    }

    /// Teichmueller lift: the (q-1)-st root of unity congruent to this
    /// element modulo pi.  The input must be a unit.
    pub fn teichmuller(&self, prec: i64) -> Result<Self> {
        if self.val_pi_bound() != 0 || self.val_pi().unwrap_or(1) != 0 {
            return Err(Error::PrecisionExhausted("teichmuller lift needs a unit".into()));
        }
        let q = self.field.q();
        let mut x = self.truncate_pi(prec * self.field.e() as i64);
        // x -> x^q converges to the fixed point; the congruence gains at
        // least one pi-digit per iteration
        let iters = (prec * self.field.e() as i64 + 2) as usize;
        for _ in 0..iters {
            let next = x.pow_u64(q);
            if next.sub(&x).is_zero_at_prec() {
                x = next;
                break;
            }
            x = next;
        }
        Ok(x)
    }

    /// p-adic logarithm, defined for v_pi(x - 1) >= 1.
    pub fn padic_log(&self) -> Result<Self> {
        let one = FieldElem::one(&self.field, self.prec_pi());
        let y = self.sub(&one);
        let vy = y.val_pi_bound();
        if vy < 1 {
            return Err(Error::OutOfConvergenceDomain(
                "log requires v_pi(x - 1) >= 1".into(),
            ));
        }
        if y.is_zero_at_prec() {
            return Ok(FieldElem::zero(&self.field, y.prec_pi().max(1)));
        }
        let prec = y.prec_pi();
        let e = self.field.e() as i64;
        let p = self.field.p() as i64;
        // number of terms: k*vy - e*log_p(k) >= prec
        let mut kmax = 1i64;
        while kmax * vy - e * ilog_floor(p, kmax) < prec + e {
            kmax += 1;
        }
        let mut acc = FieldElem::zero(&self.field, prec);
        let mut pw = FieldElem::one(&self.field, prec + e * ilog_floor(p, kmax) + 2);
        for k in 1..=kmax {
            pw = pw.mul(&y);
            let kin = FieldElem::from_i64(&self.field, k, pw.prec_pi().max(1) + 2 * e).inv()?;
            let term = pw.mul(&kin);
            acc = if k % 2 == 1 { acc.add(&term) } else { acc.sub(&term) };
        }
        Ok(acc)
    }

    /// p-adic exponential, defined for v_p(y) > 1/(p-1).
    pub fn padic_exp(&self) -> Result<Self> {
        let e = self.field.e() as i64;
        let p = self.field.p() as i64;
        let vy = self.val_pi_bound();
        // v_pi(y) > e/(p-1)
        if vy * (p - 1) <= e {
            return Err(Error::OutOfConvergenceDomain(
                "exp requires v_p(y) > 1/(p-1)".into(),
            ));
        }
        let prec = self.prec_pi();
        // v_pi(y^k / k!) = k*vy - e*(k - s_k)/(p-1) >= k*(vy - e/(p-1))
        let gap = vy - e / (p - 1) - if e % (p - 1) == 0 { 0 } else { 0 };
        let mut kmax = 1i64;
        while kmax * vy - e * (kmax / (p - 1)) < prec + e {
            kmax += 1;
            if kmax > 10_000 {
                break;
            }
        }
        let _ = gap;
        let mut acc = FieldElem::one(&self.field, prec);
        let mut term = FieldElem::one(&self.field, prec + e * (kmax / (p - 1)) + 2);
        for k in 1..=kmax {
            term = term.mul(self);
            let kin = FieldElem::from_i64(&self.field, k, term.prec_pi().max(1) + 2 * e).inv()?;
            term = term.mul(&kin);
            acc = acc.add(&term);
        }
        Ok(acc)
    }
}

fn ilog_floor(p: i64, k: i64) -> i64 {
    let mut v = 0;
    let mut m = p;
    while m <= k {
        v += 1;
        m *= p;
    }
    v
}

fn set_leading(rep: &mut Rep, x: Padic) {
    match rep {
        Rep::Base(b) => *b = x,
        Rep::Ext(v) => set_leading(&mut v[0], x),
    }
}

fn gen_rep(field: &Arc<LocalField>, i: usize, prec: i64) -> Rep {
    // X of stage i as a rep of depth i+1
    let d = field.stages[i].degree();
    let mut v = vec![FieldElem::zero_rep(field, i, prec); d];
    let mut one = FieldElem::zero_rep(field, i, prec);
    set_leading(&mut one, Padic::one(field.p, prec));
    v[1] = one;
    Rep::Ext(v)
}

fn add_rep(field: &LocalField, level: usize, a: &Rep, b: &Rep) -> Rep {
    match (a, b) {
        (Rep::Base(x), Rep::Base(y)) => Rep::Base(x.add(y)),
        (Rep::Ext(xs), Rep::Ext(ys)) => Rep::Ext(
            xs.iter().zip(ys).map(|(x, y)| add_rep(field, level - 1, x, y)).collect(),
        ),
        _ => panic!("mismatched tower depth"),
    }
}

fn neg_rep(a: &Rep) -> Rep {
    match a {
        Rep::Base(x) => Rep::Base(x.neg()),
        Rep::Ext(xs) => Rep::Ext(xs.iter().map(neg_rep).collect()),
    }
}

fn mul_rep(field: &LocalField, level: usize, a: &Rep, b: &Rep) -> Rep {
    match (a, b) {
        (Rep::Base(x), Rep::Base(y)) => Rep::Base(x.mul(y)),
        (Rep::Ext(xs), Rep::Ext(ys)) => {
            let d = xs.len();
            let stage = &field.stages[level - 1];
            // raw product of degree 2d-2
            let mut prod: Vec<Option<Rep>> = vec![None; 2 * d - 1];
            for (i, x) in xs.iter().enumerate() {
                for (j, y) in ys.iter().enumerate() {
                    let t = mul_rep(field, level - 1, x, y);
                    prod[i + j] = Some(match prod[i + j].take() {
                        None => t,
                        Some(s) => add_rep(field, level - 1, &s, &t),
                    });
                }
            }
            let mut prod: Vec<Rep> = prod
                .into_iter()
                .map(|o| o.expect("dense product"))
                .collect();
            // reduce modulo the monic stage polynomial
            for k in (d..prod.len()).rev() {
                let lead = prod[k].clone();
                for (j, c) in stage.poly[..d].iter().enumerate() {
                    let t = mul_rep(field, level - 1, &lead, c);
                    let idx = k - d + j;
                    prod[idx] = add_rep(field, level - 1, &prod[idx], &neg_rep(&t));
                }
            }
            prod.truncate(d);
            Rep::Ext(prod)
        }
        _ => panic!("mismatched tower depth"),
    }
}

enum ValInfo {
    Exact(i64),
    /// whole thing indistinguishable from zero; bound in pi-units
    ZeroBound(i64),
    /// a zero-at-precision coefficient could dominate; bound in pi-units
    Uncertain(i64),
}

fn val_rep(field: &LocalField, level: usize, a: &Rep) -> ValInfo {
    match a {
        Rep::Base(x) => match x.val() {
            Some(v) => ValInfo::Exact(v),
            None => ValInfo::ZeroBound(x.prec()),
        },
        Rep::Ext(coeffs) => {
            let stage = &field.stages[level - 1];
            let d = stage.degree() as i64;
            let eis = stage.kind == StageKind::Eisenstein;
            let weight = |i: i64, v: i64| if eis { d * v + i } else { v };
            let mut best_exact: Option<i64> = None;
            let mut best_zero: Option<i64> = None;
            for (i, c) in coeffs.iter().enumerate() {
                match val_rep(field, level - 1, c) {
                    ValInfo::Exact(v) => {
                        let w = weight(i as i64, v);
                        best_exact = Some(best_exact.map_or(w, |b| b.min(w)));
                    }
                    ValInfo::ZeroBound(b) | ValInfo::Uncertain(b) => {
                        let w = weight(i as i64, b);
                        best_zero = Some(best_zero.map_or(w, |z| z.min(w)));
                    }
                }
            }
            match (best_exact, best_zero) {
                (Some(v), None) => ValInfo::Exact(v),
                (Some(v), Some(z)) => {
                    if v < z {
                        ValInfo::Exact(v)
                    } else {
                        ValInfo::Uncertain(z)
                    }
                }
                (None, Some(z)) => ValInfo::ZeroBound(z),
                (None, None) => ValInfo::ZeroBound(i64::MAX / 4),
            }
        }
    }
}

fn prec_rep(field: &LocalField, level: usize, a: &Rep) -> i64 {
    match a {
        Rep::Base(x) => x.prec(),
        Rep::Ext(coeffs) => {
            let stage = &field.stages[level - 1];
            let d = stage.degree() as i64;
            let eis = stage.kind == StageKind::Eisenstein;
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let pr = prec_rep(field, level - 1, c);
                    if eis {
                        d * pr + i as i64
                    } else {
                        pr
                    }
                })
                .min()
                .unwrap()
        }
    }
}

fn trunc_rep(field: &LocalField, level: usize, a: &Rep, m: i64) -> Rep {
    match a {
        Rep::Base(x) => Rep::Base(x.truncate(m)),
        Rep::Ext(coeffs) => {
            let stage = &field.stages[level - 1];
            let d = stage.degree() as i64;
            let eis = stage.kind == StageKind::Eisenstein;
            Rep::Ext(
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let target = if eis {
                            // need c_i modulo pi_sub^ceil((m - i)/d)
                            div_ceil_i(m - i as i64, d)
                        } else {
                            m
                        };
                        trunc_rep(field, level - 1, c, target)
                    })
                    .collect(),
            )
        }
    }
}

fn div_ceil_i(a: i64, b: i64) -> i64 {
    if a >= 0 {
        (a + b - 1) / b
    } else {
        -((-a) / b)
    }
}

fn flatten_rep(a: &Rep, out: &mut Vec<Padic>) {
    match a {
        Rep::Base(x) => out.push(x.clone()),
        Rep::Ext(v) => {
            for c in v {
                flatten_rep(c, out);
            }
        }
    }
}

fn unflatten_rep<'a>(
    field: &LocalField,
    level: usize,
    it: &mut impl Iterator<Item = &'a Padic>,
) -> Rep {
    if level == 0 {
        Rep::Base(it.next().expect("flat length").clone())
    } else {
        let d = field.stages[level - 1].degree();
        Rep::Ext((0..d).map(|_| unflatten_rep(field, level - 1, it)).collect())
    }
}

fn leaf_max_prec(a: &Rep) -> i64 {
    match a {
        Rep::Base(x) => x.prec(),
        Rep::Ext(v) => v.iter().map(leaf_max_prec).max().unwrap(),
    }
}

fn basis_elem(field: &Arc<LocalField>, j: usize, prec: i64) -> FieldElem {
    let n = field.degree();
    let mut flat = vec![Padic::zero(field.p, prec); n];
    flat[j] = Padic::one(field.p, prec);
    FieldElem::from_flat(field, &flat)
}

/// Solve sum_j cols[j] * y_j = rhs over Q_p with min-valuation pivoting.
fn solve_linear(p: u64, cols: &[Vec<Padic>], rhs: &[Padic]) -> Result<Vec<Padic>> {
    let n = cols.len();
    let mut a: Vec<Vec<Padic>> = (0..n)
        .map(|i| cols.iter().map(|c| c[i].clone()).collect())
        .collect();
    let mut b: Vec<Padic> = rhs.to_vec();
    for k in 0..n {
        // pivot: entry of minimal valuation in column k, rows >= k
        let mut best: Option<(usize, i64)> = None;
        for (r, row) in a.iter().enumerate().skip(k) {
            if let Some(v) = row[k].val() {
                if best.map_or(true, |(_, bv)| v < bv) {
                    best = Some((r, v));
                }
            }
        }
        let (r, _) = best.ok_or_else(|| {
            Error::PrecisionExhausted("singular system at working precision".into())
        })?;
        a.swap(k, r);
        b.swap(k, r);
        let pivot = a[k][k].clone();
        let inv = pivot.inv()?;
        for j in k..n {
            a[k][j] = a[k][j].mul(&inv);
        }
        b[k] = b[k].mul(&inv);
        for i in 0..n {
            if i == k {
                continue;
            }
            let factor = a[i][k].clone();
            if factor.is_zero_at_prec() {
                continue;
            }
            for j in k..n {
                let t = a[k][j].mul(&factor);
                a[i][j] = a[i][j].sub(&t);
            }
            let t = b[k].mul(&factor);
            b[i] = b[i].sub(&t);
        }
    }
    let _ = p;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(p: u64) -> Arc<LocalField> {
        make_field(p, vec![], 30).unwrap()
    }

    fn eis_x2_minus_p(p: u64, prec: i64) -> Arc<LocalField> {
        let base = qp(p);
        let poly = vec![
            FieldElem::from_i64(&base, -(p as i64), prec).rep().clone(),
            FieldElem::zero(&base, prec).rep().clone(),
            FieldElem::one(&base, prec).rep().clone(),
        ];
        make_field(p, vec![(poly, StageKind::Eisenstein)], prec).unwrap()
    }

    #[test]
    fn base_field_data() {
        let f = qp(3);
        assert_eq!(f.e(), 1);
        assert_eq!(f.f(), 1);
        assert_eq!(f.q(), 3);
    }

    #[test]
    fn eisenstein_x2_minus_3() {
        let f = eis_x2_minus_p(3, 30);
        assert_eq!(f.e(), 2);
        assert_eq!(f.f(), 1);
        assert_eq!(f.q(), 3);
        let pi = FieldElem::pi(&f, 30);
        assert_eq!(pi.val_pi().unwrap(), 1);
        // pi^2 = 3
        let sq = pi.mul(&pi);
        let three = FieldElem::from_i64(&f, 3, 28);
        assert!(sq.eq_at_joint_prec(&three));
        // v_p(pi) = 1/2
        assert_eq!(pi.val_p().unwrap(), BigRational::new(1.into(), 2.into()));
    }

    #[test]
    fn unramified_stage_f2() {
        let base = qp(2);
        let prec = 30;
        let poly = vec![
            FieldElem::one(&base, prec).rep().clone(),
            FieldElem::one(&base, prec).rep().clone(),
            FieldElem::one(&base, prec).rep().clone(),
        ];
        let f = make_field(2, vec![(poly, StageKind::Unramified)], prec).unwrap();
        assert_eq!(f.e(), 1);
        assert_eq!(f.f(), 2);
        assert_eq!(f.q(), 4);
    }

    #[test]
    fn non_eisenstein_rejected() {
        let base = qp(3);
        let prec = 20;
        // X^2 - 9: constant valuation 2, not Eisenstein
        let poly = vec![
            FieldElem::from_i64(&base, -9, prec).rep().clone(),
            FieldElem::zero(&base, prec).rep().clone(),
            FieldElem::one(&base, prec).rep().clone(),
        ];
        assert!(matches!(
            make_field(3, vec![(poly, StageKind::Eisenstein)], prec),
            Err(Error::NotEisenstein(_))
        ));
    }

    #[test]
    fn reducible_unramified_rejected() {
        let base = qp(5);
        let prec = 20;
        // X^2 - 1 has roots mod 5
        let poly = vec![
            FieldElem::from_i64(&base, -1, prec).rep().clone(),
            FieldElem::zero(&base, prec).rep().clone(),
            FieldElem::one(&base, prec).rep().clone(),
        ];
        assert!(matches!(
            make_field(5, vec![(poly, StageKind::Unramified)], prec),
            Err(Error::NotIrreducibleDetected(_))
        ));
    }

    #[test]
    fn valuation_examples() {
        let f3 = qp(3);
        let p = FieldElem::from_i64(&f3, 3, 20);
        assert_eq!(p.val_pi().unwrap(), 1);
        assert_eq!(p.val_p().unwrap(), BigRational::from(BigInt::from(1)));
    }

    #[test]
    fn inverse_in_tower() {
        let f = eis_x2_minus_p(3, 30);
        let pi = FieldElem::pi(&f, 30);
        let one = FieldElem::one(&f, 20);
        let x = pi.add(&one); // 1 + sqrt(3)
        let xi = x.inv().unwrap();
        assert!(x.mul(&xi).eq_at_joint_prec(&FieldElem::one(&f, 20)));
    }

    #[test]
    fn teichmuller_p5() {
        let f = qp(5);
        let two = FieldElem::from_i64(&f, 2, 20);
        let w = two.teichmuller(20).unwrap();
        let one = FieldElem::one(&f, 20);
        assert!(w.pow_u64(4).eq_at_joint_prec(&one));
        // omega == 2 mod 5
        assert!(w.sub(&two).val_pi_bound() >= 1);
        // omega^2 = -1
        let m1 = FieldElem::from_i64(&f, -1, 20);
        assert!(w.pow_u64(2).eq_at_joint_prec(&m1));
    }

    #[test]
    fn log_exp_roundtrip() {
        let f = qp(3);
        let x = FieldElem::from_i64(&f, 1 + 9, 20); // 1 + p^2
        let l = x.padic_log().unwrap();
        let e = l.padic_exp().unwrap();
        assert!(e.eq_at_joint_prec(&x));
    }

    #[test]
    fn log_one_plus_p_series() {
        // log(1+5) = 5 - 25/2 + 125/3 - ... mod 5^4
        let f = qp(5);
        let x = FieldElem::from_i64(&f, 6, 8);
        let l = x.padic_log().unwrap();
        let expected = FieldElem::from_rational(
            &f,
            &(BigRational::from(BigInt::from(5)) - BigRational::new(25.into(), 2.into())
                + BigRational::new(125.into(), 3.into())
                - BigRational::new(625.into(), 4.into())),
            4,
        )
        .unwrap();
        assert!(l.truncate_pi(4).eq_at_joint_prec(&expected));
    }

    #[test]
    fn precision_truncation_consistency() {
        let f = eis_x2_minus_p(3, 40);
        let expr = |leaf_prec: i64| {
            let pi = FieldElem::pi(&f, leaf_prec);
            let a = pi.add(&FieldElem::from_i64(&f, 7, leaf_prec));
            let b = pi.mul(&pi).add(&FieldElem::from_i64(&f, 5, leaf_prec));
            a.mul(&b).add(&a.inv().unwrap())
        };
        let hi = expr(40);
        let lo = expr(30);
        let m = lo.prec_pi();
        assert!(hi.truncate_pi(m).eq_at_joint_prec(&lo));
    }

    #[test]
    fn embed_into_bigger_tower() {
        let prec = 25;
        let small = eis_x2_minus_p(3, prec);
        let pi_s = FieldElem::pi(&small, prec);
        // extend by a further Eisenstein stage Y^2 + pi
        let poly = vec![
            pi_s.rep().clone(),
            FieldElem::zero(&small, prec).rep().clone(),
            FieldElem::one(&small, prec).rep().clone(),
        ];
        let base = qp(3);
        let s0 = vec![
            FieldElem::from_i64(&base, -3, prec).rep().clone(),
            FieldElem::zero(&base, prec).rep().clone(),
            FieldElem::one(&base, prec).rep().clone(),
        ];
        let big = make_field(
            3,
            vec![(s0, StageKind::Eisenstein), (poly, StageKind::Eisenstein)],
            prec,
        )
        .unwrap();
        let x = pi_s.add(&FieldElem::one(&small, prec));
        let y = x.embed_into(&big).unwrap();
        assert_eq!(y.val_pi().unwrap(), 0);
        // pi of the small field has valuation 2 upstairs
        let piv = pi_s.embed_into(&big).unwrap();
        assert_eq!(piv.val_pi().unwrap(), 2);
    }
}
