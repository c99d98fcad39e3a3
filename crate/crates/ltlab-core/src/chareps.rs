//! Locally analytic characters of L^x, additive characters, local epsilon
//! constants via Gauss sums, equivariant epsilon tuples, crystalline and
//! Gamma factors, and the interpolation constants for the reciprocity
//! formulas.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use crate::cosets::Cosets;
use crate::error::{Error, Result};
use crate::fields;
use crate::padic::{FieldElem, LocalField, StageKind};
use crate::series::{OmegaScalar, WIDE_PREC};

/// A locally L-analytic character of L^x.
///
/// The value at a unit u is rho(u mod pi^a) * u^k * exp(s log<u>), where rho
/// is the stored finite-order table, k the integer weight and s an optional
/// analytic exponent.
#[derive(Clone, Debug)]
pub struct Character {
    base: Arc<LocalField>,
    values: Arc<LocalField>,
    pi_value: FieldElem,
    unit_level: u32,
    unit_table: BTreeMap<u64, FieldElem>,
    weight: i64,
    exponent_s: Option<FieldElem>,
}

impl Character {
    pub fn new(
        base: &Arc<LocalField>,
        values: &Arc<LocalField>,
        pi_value: FieldElem,
        unit_level: u32,
        unit_table: BTreeMap<u64, FieldElem>,
        weight: i64,
        exponent_s: Option<FieldElem>,
    ) -> Result<Self> {
        if pi_value.is_zero_at_prec() {
            return Err(Error::Invalid("character value at pi must be nonzero".into()));
        }
        if unit_level >= 1 {
            let cos = Cosets::new(base, unit_level)?;
            if unit_table.len() != cos.units().len() {
                return Err(Error::Invalid("unit table must cover the unit classes".into()));
            }
        } else if !unit_table.is_empty() {
            return Err(Error::Invalid("level-zero character with nonempty table".into()));
        }
        Ok(Character {
            base: base.clone(),
            values: values.clone(),
            pi_value,
            unit_level,
            unit_table,
            weight,
            exponent_s,
        })
    }

    /// Unramified character: value c at pi, trivial on units, weight zero.
    pub fn unramified(base: &Arc<LocalField>, values: &Arc<LocalField>, c: FieldElem) -> Result<Self> {
        Self::new(base, values, c, 0, BTreeMap::new(), 0, None)
    }

    /// x^k: pi at pi^k, weight k.
    pub fn x_power(base: &Arc<LocalField>, k: i64) -> Result<Self> {
        let pi = FieldElem::pi(base, WIDE_PREC);
        Self::new(base, base, pi.pow_i64(k)?, 0, BTreeMap::new(), k, None)
    }

    /// The dualizing character x|x|: pi/q at pi, identity on units.
    pub fn chi(base: &Arc<LocalField>) -> Result<Self> {
        let pi = FieldElem::pi(base, WIDE_PREC);
        let q = FieldElem::from_i64(base, base.q() as i64, WIDE_PREC);
        Self::new(base, base, pi.mul(&q.inv()?), 0, BTreeMap::new(), 1, None)
    }

    /// |x|: 1/q at pi, trivial on units.
    pub fn abs_value(base: &Arc<LocalField>) -> Result<Self> {
        let q = FieldElem::from_i64(base, base.q() as i64, WIDE_PREC);
        Self::new(base, base, q.inv()?, 0, BTreeMap::new(), 0, None)
    }

    pub fn trivial(base: &Arc<LocalField>) -> Result<Self> {
        Self::new(base, base, FieldElem::one(base, WIDE_PREC), 0, BTreeMap::new(), 0, None)
    }

    pub fn base(&self) -> &Arc<LocalField> {
        &self.base
    }
    pub fn value_field(&self) -> &Arc<LocalField> {
        &self.values
    }
    pub fn pi_value(&self) -> &FieldElem {
        &self.pi_value
    }
    pub fn unit_level(&self) -> u32 {
        self.unit_level
    }
    pub fn unit_table(&self) -> &BTreeMap<u64, FieldElem> {
        &self.unit_table
    }
    pub fn weight(&self) -> i64 {
        self.weight
    }
    pub fn exponent_s(&self) -> Option<&FieldElem> {
        self.exponent_s.as_ref()
    }

    /// Finite-order value at a unit class of the stored level.
    pub fn rho(&self, code: u64) -> Result<FieldElem> {
        if self.unit_level == 0 {
            return Ok(FieldElem::one(&self.values, WIDE_PREC));
        }
        self.unit_table
            .get(&code)
            .cloned()
            .ok_or_else(|| Error::Invalid(format!("no table value for unit class {code}")))
    }

    /// Value at a unit class given at any level >= the stored level.
    pub fn rho_at_level(&self, code: u64, level: u32) -> Result<FieldElem> {
        if level < self.unit_level {
            return Err(Error::ConductorExceedsLevel(format!(
                "character needs level {} but got {level}",
                self.unit_level
            )));
        }
        if self.unit_level == 0 {
            return Ok(FieldElem::one(&self.values, WIDE_PREC));
        }
        let big = Cosets::new(&self.base, level)?;
        let small = Cosets::new(&self.base, self.unit_level)?;
        let x = big.decode(code);
        self.rho(small.reduce(&x)?)
    }

    /// Full value at an integral unit of the base field (embedded into the
    /// value field).
    pub fn value_at_unit(&self, u: &FieldElem) -> Result<FieldElem> {
        if u.val_pi().unwrap_or(1) != 0 {
            return Err(Error::Invalid("value_at_unit needs a unit".into()));
        }
        let mut acc = if self.unit_level >= 1 {
            let cos = Cosets::new(&self.base, self.unit_level)?;
            self.rho(cos.reduce(u)?)?
        } else {
            FieldElem::one(&self.values, WIDE_PREC)
        };
        let u_emb = embed(u, &self.values)?;
        if self.weight != 0 {
            acc = acc.mul(&u_emb.pow_i64(self.weight)?);
        }
        if let Some(s) = &self.exponent_s {
            let teich = u_emb.teichmuller(WIDE_PREC / 2)?;
            let one_unit = u_emb.mul(&teich.inv()?);
            let l = one_unit.padic_log()?;
            acc = acc.mul(&s.mul(&l).padic_exp()?);
        }
        Ok(acc)
    }

    /// rho(-1) * (-1)^k.
    pub fn value_at_minus_one(&self) -> Result<FieldElem> {
        let m1 = FieldElem::from_i64(&self.base, -1, WIDE_PREC);
        self.value_at_unit(&m1)
    }

    /// Move the values into a larger field.
    pub fn with_value_field(&self, vf: &Arc<LocalField>) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (c, v) in &self.unit_table {
            table.insert(*c, embed(v, vf)?);
        }
        Character::new(
            &self.base,
            vf,
            embed(&self.pi_value, vf)?,
            self.unit_level,
            table,
            self.weight,
            self.exponent_s.as_ref().map(|s| embed(s, vf)).transpose()?,
        )
    }

    fn align(&self, other: &Self) -> Result<(Self, Self)> {
        if self.values == other.values {
            return Ok((self.clone(), other.clone()));
        }
        if let Ok(a) = self.with_value_field(&other.values) {
            return Ok((a, other.clone()));
        }
        let b = other.with_value_field(&self.values)?;
        Ok((self.clone(), b))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let (lhs, rhs) = self.align(other)?;
        let level = lhs.unit_level.max(rhs.unit_level);
        let mut table = BTreeMap::new();
        if level >= 1 {
            let cos = Cosets::new(&lhs.base, level)?;
            for c in cos.units() {
                let a = lhs.rho_at_level(c, level)?;
                let b = rhs.rho_at_level(c, level)?;
                table.insert(c, a.mul(&b));
            }
        }
        let s = match (&lhs.exponent_s, &rhs.exponent_s) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (Some(a), Some(b)) => Some(a.add(b)),
        };
        Character::new(
            &lhs.base,
            &lhs.values,
            lhs.pi_value.mul(&rhs.pi_value),
            level,
            table,
            lhs.weight + rhs.weight,
            s,
        )
        .map(|c| c.normalized())
    }

    pub fn inv(&self) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (c, v) in &self.unit_table {
            table.insert(*c, v.inv()?);
        }
        Character::new(
            &self.base,
            &self.values,
            self.pi_value.inv()?,
            self.unit_level,
            table,
            -self.weight,
            self.exponent_s.as_ref().map(|s| s.neg()),
        )
    }

    /// Twist by x^k (weight shift, value at pi multiplied by pi^k).
    pub fn twist_x_power(&self, k: i64) -> Result<Self> {
        let pi = embed(&FieldElem::pi(&self.base, WIDE_PREC), &self.values)?;
        Character::new(
            &self.base,
            &self.values,
            self.pi_value.mul(&pi.pow_i64(k)?),
            self.unit_level,
            self.unit_table.clone(),
            self.weight + k,
            self.exponent_s.clone(),
        )
    }

    /// Drop redundant levels from the table (make the level minimal).
    pub fn normalized(self) -> Self {
        let mut ch = self;
        while ch.unit_level >= 1 {
            let a = ch.unit_level;
            let lower_ok = (|| -> Result<bool> {
                let cos = Cosets::new(&ch.base, a)?;
                let lower = if a >= 2 { Some(Cosets::new(&ch.base, a - 1)?) } else { None };
                let mut classes: BTreeMap<u64, FieldElem> = BTreeMap::new();
                for c in cos.units() {
                    let key = match &lower {
                        Some(l) => l.reduce(&cos.decode(c))?,
                        None => 0,
                    };
                    let v = ch.rho(c)?;
                    if let Some(prev) = classes.get(&key) {
                        if !prev.eq_at_joint_prec(&v) {
                            return Ok(false);
                        }
                    } else {
                        classes.insert(key, v);
                    }
                }
                Ok(true)
            })()
            .unwrap_or(false);
            if !lower_ok {
                break;
            }
            // rebuild at level a-1
            if ch.unit_level == 1 {
                ch.unit_level = 0;
                ch.unit_table = BTreeMap::new();
            } else {
                let cos = Cosets::new(&ch.base, a).unwrap();
                let lower = Cosets::new(&ch.base, a - 1).unwrap();
                let mut table = BTreeMap::new();
                for c in cos.units() {
                    let key = lower.reduce(&cos.decode(c)).unwrap();
                    table.entry(key).or_insert_with(|| ch.unit_table[&c].clone());
                }
                ch.unit_level = a - 1;
                ch.unit_table = table;
            }
        }
        ch
    }

    /// Smallest m with 1 + pi^m o contained in the kernel; requires a
    /// locally constant restriction to the units.
    pub fn conductor(&self) -> Result<u32> {
        if self.weight != 0 || self.exponent_s.is_some() {
            return Err(Error::NotLocallyConstantOnUnits);
        }
        let norm = self.clone().normalized();
        Ok(norm.unit_level)
    }

    /// The locally constant part on units paired with the weight:
    /// delta = delta_lc * x^k.
    pub fn locally_constant_part(&self) -> Result<Self> {
        if self.exponent_s.is_some() {
            return Err(Error::NotDeRham);
        }
        let pi = embed(&FieldElem::pi(&self.base, WIDE_PREC), &self.values)?;
        Character::new(
            &self.base,
            &self.values,
            self.pi_value.mul(&pi.pow_i64(-self.weight)?),
            self.unit_level,
            self.unit_table.clone(),
            0,
            None,
        )
    }

    /// Membership in the special families and the de Rham weight.
    pub fn classify(&self) -> Classification {
        let de_rham = if self.exponent_s.is_none() { Some(self.weight) } else { None };
        let mut special = None;
        if self.exponent_s.is_none() && self.clone().normalized().unit_level == 0 {
            // compare pi_value with pi^k and pi^k / q
            let pi = embed(&FieldElem::pi(&self.base, WIDE_PREC), &self.values).ok();
            if let Some(pi) = pi {
                let k = self.weight;
                if k <= 0 {
                    if let Ok(t) = pi.pow_i64(k) {
                        if t.eq_at_joint_prec(&self.pi_value) {
                            special = Some(Special::Sigma1((-k) as u32));
                        }
                    }
                }
                if special.is_none() && k >= 1 {
                    let q = FieldElem::from_i64(&self.values, self.base.q() as i64, WIDE_PREC);
                    if let (Ok(t), Ok(qi)) = (pi.pow_i64(k), q.inv()) {
                        if t.mul(&qi).eq_at_joint_prec(&self.pi_value) {
                            special = Some(Special::Sigma2((k - 1) as u32));
                        }
                    }
                }
            }
        }
        Classification { special, de_rham }
    }

    /// The character of the attached Weil-Deligne representation:
    /// value delta_lc(pi) pi^(-k) at pi, the same finite unit part, weight 0.
    pub fn weil_character(&self) -> Result<Self> {
        if self.exponent_s.is_some() {
            return Err(Error::NotDeRham);
        }
        let pi = embed(&FieldElem::pi(&self.base, WIDE_PREC), &self.values)?;
        let lc_pi = self.pi_value.mul(&pi.pow_i64(-self.weight)?);
        Character::new(
            &self.base,
            &self.values,
            lc_pi.mul(&pi.pow_i64(-self.weight)?),
            self.unit_level,
            self.unit_table.clone(),
            0,
            None,
        )
    }

    pub fn eq_at_joint_prec(&self, other: &Self) -> Result<bool> {
        let (a, b) = self.align(other)?;
        let (this, other) = (&a, &b);
        return this.eq_aligned(other);
    }

    fn eq_aligned(&self, other: &Self) -> Result<bool> {
        if self.weight != other.weight {
            return Ok(false);
        }
        match (&self.exponent_s, &other.exponent_s) {
            (None, None) => {}
            (Some(a), Some(b)) if a.eq_at_joint_prec(b) => {}
            _ => return Ok(false),
        }
        if !self.pi_value.eq_at_joint_prec(&other.pi_value) {
            return Ok(false);
        }
        let level = self.unit_level.max(other.unit_level);
        if level >= 1 {
            let cos = Cosets::new(&self.base, level)?;
            for c in cos.units() {
                if !self.rho_at_level(c, level)?.eq_at_joint_prec(&other.rho_at_level(c, level)?) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

fn embed(x: &FieldElem, target: &Arc<LocalField>) -> Result<FieldElem> {
    if x.field() == target {
        Ok(x.clone())
    } else {
        x.embed_into(target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Special {
    /// x^(-i)
    Sigma1(u32),
    /// x^i * chi
    Sigma2(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub special: Option<Special>,
    /// Some(k) when the character is de Rham of weight k.
    pub de_rham: Option<i64>,
}

impl Classification {
    pub fn is_exceptional(&self) -> bool {
        self.special.is_some()
    }
    pub fn is_generic(&self) -> bool {
        self.special.is_none()
    }
}

/// Additive character of level n built from the trace form and a generator
/// of the different: psi(x / pi^n) = psi_0(Tr(x d^(-1) pi^(-n))).
///
/// Values are powers of a fixed compatible zeta_{p^m}; the induced psi has
/// level zero by construction.
#[derive(Clone, Debug)]
pub struct AdditiveCharacter {
    base: Arc<LocalField>,
    level: u32,
    zeta_order: u32,
    cyclo: Arc<LocalField>,
    zeta: FieldElem,
    exps: BTreeMap<u64, u64>,
    different: FieldElem,
}

impl AdditiveCharacter {
    pub fn build(base: &Arc<LocalField>, level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::Invalid("additive character needs level >= 1".into()));
        }
        let d = different_generator(base)?;
        let cos = Cosets::new(base, level)?;
        let pi = FieldElem::pi(base, WIDE_PREC);
        let d_inv = d.inv()?;
        let scale = d_inv.mul(&pi.pow_i64(-(level as i64))?);
        // collect exact trace values and the required zeta order
        let mut traces: BTreeMap<u64, crate::padic::Padic> = BTreeMap::new();
        let mut m: i64 = 0;
        for code in cos.all() {
            let x = cos.decode(code);
            let t = x.mul(&scale).trace_to_qp();
            if let Some(v) = t.val() {
                if -v > m {
                    m = -v;
                }
            }
            traces.insert(code, t);
        }
        let m = m.max(1) as u32;
        let p = base.p();
        let pm = (p as u64).pow(m);
        let mut exps = BTreeMap::new();
        for (code, t) in traces {
            // exponent = p^m * t mod p^m
            let shifted = t.shift(m as i64);
            let rep = shifted.int_repr().ok_or_else(|| {
                Error::Invalid("trace pairing produced a non-integral exponent".into())
            })?;
            let k = rep % num_bigint::BigUint::from(pm);
            let k: u64 = k.try_into().map_err(|_| Error::Invalid("exponent overflow".into()))?;
            exps.insert(code, k);
        }
        let cyclo = fields::qp_cyclotomic(p, m, WIDE_PREC)?;
        let zeta = fields::zeta_in_cyclotomic(&cyclo, WIDE_PREC);
        let psi = AdditiveCharacter {
            base: base.clone(),
            level,
            zeta_order: m,
            cyclo,
            zeta,
            exps,
            different: d,
        };
        psi.check_additive()?;
        psi.check_level_zero()?;
        Ok(psi)
    }

    pub fn base(&self) -> &Arc<LocalField> {
        &self.base
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn zeta_order(&self) -> u32 {
        self.zeta_order
    }
    pub fn value_field(&self) -> &Arc<LocalField> {
        &self.cyclo
    }
    pub fn different(&self) -> &FieldElem {
        &self.different
    }

    pub fn exponent(&self, code: u64) -> Result<u64> {
        self.exps
            .get(&code)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("no exponent for coset {code}")))
    }

    /// Value on the coset code at the stored level.
    pub fn value(&self, code: u64) -> Result<FieldElem> {
        Ok(self.zeta.pow_u64(self.exponent(code)?))
    }

    /// Value of the induced level-a character: psi(x / pi^a) for a <= level.
    pub fn value_at_depth(&self, code: u64, a: u32) -> Result<FieldElem> {
        if a > self.level {
            return Err(Error::ConductorExceedsLevel(format!(
                "depth {a} exceeds level {}",
                self.level
            )));
        }
        let cos_a = Cosets::new(&self.base, a)?;
        let cos = Cosets::new(&self.base, self.level)?;
        let pi = FieldElem::pi(&self.base, WIDE_PREC);
        let x = cos_a.decode(code).mul(&pi.pow_i64((self.level - a) as i64)?);
        self.value(cos.reduce(&x)?)
    }

    /// The argument-scaled character x -> psi(b x).
    pub fn scaled(&self, b: u64) -> Result<Self> {
        let cos = Cosets::new(&self.base, self.level)?;
        let mut exps = BTreeMap::new();
        for code in cos.all() {
            exps.insert(code, self.exponent(cos.mul(code, b)?)?);
        }
        Ok(AdditiveCharacter { exps, ..self.clone() })
    }

    fn check_additive(&self) -> Result<()> {
        let cos = Cosets::new(&self.base, self.level)?;
        let pm = (self.base.p() as u64).pow(self.zeta_order);
        for a in cos.all() {
            for b in cos.all() {
                let s = cos.add(a, b)?;
                if (self.exponent(a)? + self.exponent(b)?) % pm != self.exponent(s)? % pm {
                    return Err(Error::Invalid("additive character fails additivity".into()));
                }
            }
        }
        Ok(())
    }

    fn check_level_zero(&self) -> Result<()> {
        // psi must be nontrivial on pi^(level-1) o / pi^level
        let cos = Cosets::new(&self.base, self.level)?;
        let pi = FieldElem::pi(&self.base, WIDE_PREC);
        let pm = (self.base.p() as u64).pow(self.zeta_order);
        let mut nontrivial = false;
        for code in cos.all() {
            let x = cos.decode(code).mul(&pi.pow_i64(self.level as i64 - 1)?);
            if self.exponent(cos.reduce(&x)?)? % pm != 0 {
                nontrivial = true;
                break;
            }
        }
        if nontrivial {
            Ok(())
        } else {
            Err(Error::Invalid("induced additive character does not have level zero".into()))
        }
    }
}

/// Generator of the different: the product of the stage-polynomial
/// derivatives at their roots over the Eisenstein stages.
pub fn different_generator(field: &Arc<LocalField>) -> Result<FieldElem> {
    let mut d = FieldElem::one(field, WIDE_PREC);
    for (i, st) in field.stages().iter().enumerate() {
        if st.kind != StageKind::Eisenstein {
            continue;
        }
        let gen = FieldElem::stage_generator(field, i, WIDE_PREC);
        // derivative of the stage polynomial, evaluated at its root
        let mut acc = FieldElem::zero(field, WIDE_PREC);
        let mut pw = FieldElem::one(field, WIDE_PREC);
        for (k, c) in st.poly.iter().enumerate() {
            if k >= 1 {
                // lift the coefficient (an element of the sub-tower) into the
                // full tower by zero padding
                let sub = subfield_of(field, i)?;
                let cf = FieldElem::from_subrep(&sub, c)?.embed_into(field)?;
                acc = acc.add(&cf.scale_i64(k as i64).mul(&pw));
            }
            if k >= 1 {
                pw = pw.mul(&gen);
            }
        }
        d = d.mul(&acc);
    }
    Ok(d)
}

fn subfield_of(field: &Arc<LocalField>, stages: usize) -> Result<Arc<LocalField>> {
    let tower: Vec<_> = field.stages()[..stages]
        .iter()
        .map(|s| (s.poly.clone(), s.kind.clone()))
        .collect();
    crate::padic::make_field(field.p(), tower, WIDE_PREC)
}

/// A root of unity of exact order n inside Q_p(zeta_{p^m}).
pub fn root_of_unity(cyclo: &Arc<LocalField>, zeta: &FieldElem, m: u32, n: u32) -> Result<FieldElem> {
    let p = cyclo.p() as u32;
    let mut n1 = n;
    let mut beta = 0u32;
    while n1 % p == 0 {
        n1 /= p;
        beta += 1;
    }
    if beta > m {
        return Err(Error::Invalid(format!("no p^{beta}-th roots of unity available")));
    }
    // prime-to-p part via a Teichmueller lift of exact order n1
    let mut tpart = FieldElem::one(cyclo, WIDE_PREC);
    if n1 > 1 {
        if (p - 1) % n1 != 0 {
            return Err(Error::Invalid(format!("mu_{n1} does not lie in the value field")));
        }
        let mut found = false;
        for r in 2..p {
            let w = FieldElem::from_i64(cyclo, r as i64, WIDE_PREC).teichmuller(WIDE_PREC / 2)?;
            if elem_order(&w, n1)? == n1 {
                tpart = w;
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::Invalid("no Teichmueller generator found".into()));
        }
    }
    let ppart = zeta.pow_u64((cyclo.p() as u64).pow(m - beta));
    Ok(tpart.mul(&ppart))
}

fn elem_order(x: &FieldElem, max: u32) -> Result<u32> {
    let one = FieldElem::one(x.field(), 12);
    let mut p = x.clone();
    for k in 1..=max {
        if p.eq_at_joint_prec(&one) {
            return Ok(k);
        }
        p = p.mul(x);
    }
    Ok(max + 1)
}

/// All characters of (o_L / pi^a)^x valued in the additive character's
/// cyclotomic field, given as finite-order unit tables with weight zero and
/// the prescribed value at pi.
pub fn all_unit_characters(
    base: &Arc<LocalField>,
    a: u32,
    psi: &AdditiveCharacter,
    pi_value: &FieldElem,
) -> Result<Vec<Character>> {
    let cos = Cosets::new(base, a)?;
    let g = cos.unit_generator()?;
    let n = cos.units().len() as u32;
    let cyclo = psi.value_field().clone();
    let omega = root_of_unity(&cyclo, &self_zeta(psi), psi.zeta_order(), n)?;
    let mut out = Vec::new();
    for j in 0..n {
        let mut table = BTreeMap::new();
        let mut code = 1u64;
        let mut val = FieldElem::one(&cyclo, WIDE_PREC);
        let step = omega.pow_u64(j as u64);
        for _ in 0..n {
            table.insert(code, val.clone());
            code = cos.mul(code, g)?;
            val = val.mul(&step);
        }
        let ch = Character::new(base, &cyclo, pi_value.clone(), a, table, 0, None)?.normalized();
        out.push(ch);
    }
    Ok(out)
}

fn self_zeta(psi: &AdditiveCharacter) -> FieldElem {
    psi.zeta.clone()
}

/// Local epsilon constant of a locally constant character by the rank-one
/// Gauss-sum formula:
/// delta(pi)^a * q^(n_psi) * sum over units i mod pi^a of
/// delta(i)^(-1) psi(i / pi^a).
pub fn gauss_sum_epsilon(
    delta: &Character,
    psi: &AdditiveCharacter,
    n_psi: i64,
) -> Result<FieldElem> {
    let a = delta.conductor()?;
    if a > psi.level() {
        return Err(Error::ConductorExceedsLevel(format!(
            "conductor {a} exceeds additive level {}",
            psi.level()
        )));
    }
    let values = psi.value_field();
    let q = FieldElem::from_i64(values, delta.base().q() as i64, WIDE_PREC);
    let delta_pi = embed(delta.pi_value(), values)?;
    let mut eps = delta_pi.pow_i64(a as i64)?.mul(&q.pow_i64(n_psi)?);
    if a == 0 {
        return Ok(eps);
    }
    let cos = Cosets::new(delta.base(), a)?;
    let mut sum = FieldElem::zero(values, WIDE_PREC);
    for i in cos.units() {
        let dv = embed(&delta.rho(i)?, values)?.inv()?;
        let pv = psi.value_at_depth(i, a)?;
        sum = sum.add(&dv.mul(&pv));
    }
    eps = eps.mul(&sum);
    Ok(eps)
}

/// The Gamma_L-equivariant epsilon tuple: component b is the epsilon
/// constant computed with the argument-scaled character x -> psi(b x).
#[derive(Clone, Debug)]
pub struct EquivariantEps {
    pub level: u32,
    pub components: BTreeMap<u64, FieldElem>,
}

pub fn equivariant_epsilon(delta: &Character, psi: &AdditiveCharacter) -> Result<EquivariantEps> {
    let w = delta.weil_character()?;
    let a = w.conductor()?;
    if a > psi.level() {
        return Err(Error::ConductorExceedsLevel(format!(
            "conductor {a} exceeds additive level {}",
            psi.level()
        )));
    }
    let cos = Cosets::new(delta.base(), psi.level())?;
    let mut components = BTreeMap::new();
    for b in cos.units() {
        let eps = gauss_sum_epsilon(&w, &psi.scaled(b)?, 0)?;
        components.insert(b, eps);
    }
    Ok(EquivariantEps { level: psi.level(), components })
}

/// det(1 - q^(-1) phi^(-1) | D_cris) / det(1 - phi | D_cris) for an
/// unramified rank-one character; the Frobenius eigenvalue on the basis
/// t^(-k) e_delta is alpha = delta(pi) pi^(-k).
pub fn crystalline_factor(delta: &Character) -> Result<FieldElem> {
    if delta.clone().normalized().unit_level != 0 {
        return Err(Error::RamifiedCharacter);
    }
    if delta.exponent_s().is_some() {
        return Err(Error::NotDeRham);
    }
    let values = delta.value_field();
    let pi = embed(&FieldElem::pi(delta.base(), WIDE_PREC), values)?;
    let alpha = delta.pi_value().mul(&pi.pow_i64(-delta.weight())?);
    let one = FieldElem::one(values, WIDE_PREC);
    let denom = one.sub(&alpha);
    if denom.is_zero_at_prec() {
        return Err(Error::ExceptionalPole("Frobenius eigenvalue 1 on D_cris".into()));
    }
    let qinv = FieldElem::from_i64(values, delta.base().q() as i64, WIDE_PREC).inv()?;
    let num = one.sub(&qinv.mul(&alpha.inv()?));
    num.div(&denom)
}

/// Gamma^*(r): (r-1)! for r > 0, (-1)^r / (-r)! for r <= 0.
pub fn gamma_star(r: i64) -> BigRational {
    if r > 0 {
        let mut f = BigInt::one();
        for i in 1..r {
            f *= BigInt::from(i);
        }
        BigRational::from(f)
    } else {
        let mut f = BigInt::one();
        for i in 1..=(-r) {
            f *= BigInt::from(i);
        }
        let sign = if r % 2 == 0 { BigInt::one() } else { -BigInt::one() };
        BigRational::new(sign, f)
    }
}

/// Gamma(M) = prod over weights r of (Omega^r Gamma^*(r))^(-n(r)).
pub fn gamma_factor(field: &Arc<LocalField>, weights: &[(i64, u32)]) -> Result<OmegaScalar> {
    let mut omega_exp = 0i64;
    let mut coeff = BigRational::one();
    for (r, n) in weights {
        omega_exp -= r * (*n as i64);
        let g = gamma_star(*r);
        for _ in 0..*n {
            coeff /= g.clone();
        }
    }
    let c = FieldElem::from_rational(field, &coeff, WIDE_PREC)?;
    Ok(OmegaScalar::omega_pow(c, omega_exp))
}

/// Which interpolation constant: the weight <= 0 form or the weight >= 1
/// form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpVariant {
    /// (-Omega)^k / (-k)! * { epsilon-tuple inverse | crystalline ratio }
    C,
    /// Omega^k (k-1)! * { epsilon-tuple inverse | crystalline ratio }
    CPrime,
}

/// Interpolation constant: an Omega power and rational prefactor together
/// with per-unit-class field components (a single class 1 entry in the
/// crystalline case).
#[derive(Clone, Debug)]
pub struct InterpConstant {
    pub omega_exp: i64,
    pub prefactor: BigRational,
    pub components: BTreeMap<u64, FieldElem>,
}

impl InterpConstant {
    /// The tuple as Omega-scalars (componentwise).
    pub fn component_scalar(&self, b: u64) -> Result<OmegaScalar> {
        let c = self
            .components
            .get(&b)
            .ok_or_else(|| Error::Invalid(format!("no component {b}")))?;
        let r = FieldElem::from_rational(c.field(), &self.prefactor, WIDE_PREC)?;
        Ok(OmegaScalar::omega_pow(c.mul(&r), self.omega_exp))
    }
}

pub fn interp_constant(
    delta: &Character,
    variant: InterpVariant,
    psi: &AdditiveCharacter,
) -> Result<InterpConstant> {
    let cls = delta.classify();
    let k = match cls.de_rham {
        Some(k) => k,
        None => return Err(Error::NotDeRham),
    };
    match variant {
        InterpVariant::C if k > 0 => {
            return Err(Error::WrongVariant("weight must be <= 0 for this variant".into()))
        }
        InterpVariant::CPrime if k < 1 => {
            return Err(Error::WrongVariant("weight must be >= 1 for this variant".into()))
        }
        _ => {}
    }
    let lc = delta.locally_constant_part()?;
    let a = lc.conductor()?;
    let (omega_exp, prefactor) = match variant {
        InterpVariant::C => {
            // (-Omega)^k / (-k)!
            let sign = if k % 2 == 0 { BigInt::one() } else { -BigInt::one() };
            let mut f = BigInt::one();
            for i in 1..=(-k) {
                f *= BigInt::from(i);
            }
            (k, BigRational::new(sign, f))
        }
        InterpVariant::CPrime => {
            let mut f = BigInt::one();
            for i in 1..k {
                f *= BigInt::from(i);
            }
            (k, BigRational::from(f))
        }
    };
    let mut components = BTreeMap::new();
    if a != 0 {
        let eq = equivariant_epsilon(delta, psi)?;
        for (b, v) in eq.components {
            components.insert(b, v.inv()?);
        }
    } else {
        components.insert(1, crystalline_factor(delta)?);
    }
    Ok(InterpConstant { omega_exp, prefactor, components })
}

impl FieldElem {
    /// Rebuild an element of a subfield from a raw rep (tower plumbing for
    /// stage polynomials).
    pub fn from_subrep(field: &Arc<LocalField>, rep: &crate::padic::Rep) -> Result<Self> {
        Ok(FieldElem::from_flat(field, &{
            let probe = FieldElem::zero(field, WIDE_PREC);
            let mut flat = Vec::new();
            flatten_rep_into(rep, &mut flat);
            if flat.len() != probe.flatten().len() {
                return Err(Error::Invalid("rep does not match the subfield".into()));
            }
            flat
        }))
    }
}

fn flatten_rep_into(rep: &crate::padic::Rep, out: &mut Vec<crate::padic::Padic>) {
    match rep {
        crate::padic::Rep::Base(x) => out.push(x.clone()),
        crate::padic::Rep::Ext(v) => {
            for c in v {
                flatten_rep_into(c, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{qp, qp_sqrt_p};

    fn quadratic_mod_p(base: &Arc<LocalField>, psi: &AdditiveCharacter) -> Character {
        let pi_v = FieldElem::one(psi.value_field(), WIDE_PREC);
        all_unit_characters(base, 1, psi, &pi_v)
            .unwrap()
            .into_iter()
            .find(|c| {
                c.unit_level() == 1
                    && c.unit_table().values().any(|v| {
                        v.eq_at_joint_prec(&FieldElem::from_i64(psi.value_field(), -1, 12))
                    })
            })
            .unwrap()
    }

    #[test]
    fn additive_character_q3() {
        let f = qp(3, 25).unwrap();
        let psi = AdditiveCharacter::build(&f, 1).unwrap();
        assert_eq!(psi.zeta_order(), 1);
        // nontrivial somewhere
        assert!(psi.exps.values().any(|k| *k % 3 != 0));
    }

    #[test]
    fn additive_character_ramified() {
        let f = qp_sqrt_p(3, 25).unwrap();
        let psi = AdditiveCharacter::build(&f, 1).unwrap();
        assert_eq!(psi.zeta_order(), 1);
        let v = psi.value(1).unwrap();
        let one = FieldElem::one(psi.value_field(), 12);
        assert!(!v.eq_at_joint_prec(&one));
    }

    #[test]
    fn conductor_examples() {
        let f = qp(3, 25).unwrap();
        let psi = AdditiveCharacter::build(&f, 2).unwrap();
        let triv = Character::trivial(&f).unwrap();
        assert_eq!(triv.conductor().unwrap(), 0);
        let quad = quadratic_mod_p(&f, &psi);
        assert_eq!(quad.conductor().unwrap(), 1);
        // level-2 characters of (Z/9)^x of exact order 6 have conductor 2
        let all2 = all_unit_characters(&f, 2, &psi, &FieldElem::one(psi.value_field(), WIDE_PREC))
            .unwrap();
        let mut conductors: Vec<u32> = all2.iter().map(|c| c.conductor().unwrap()).collect();
        conductors.sort_unstable();
        assert_eq!(conductors, vec![0, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn classify_examples() {
        let f = qp(3, 25).unwrap();
        let xm2 = Character::x_power(&f, -2).unwrap();
        assert_eq!(xm2.classify().special, Some(Special::Sigma1(2)));
        let chi = Character::chi(&f).unwrap();
        assert_eq!(chi.classify().special, Some(Special::Sigma2(0)));
        let un = Character::unramified(&f, &f, FieldElem::from_i64(&f, 2, WIDE_PREC)).unwrap();
        let cls = un.classify();
        assert!(cls.is_generic());
        assert_eq!(cls.de_rham, Some(0));
    }

    #[test]
    fn quadratic_gauss_sum_squares_to_minus_three() {
        let f = qp(3, 25).unwrap();
        let psi = AdditiveCharacter::build(&f, 1).unwrap();
        let quad = quadratic_mod_p(&f, &psi);
        let eps = gauss_sum_epsilon(&quad, &psi, 0).unwrap();
        let sq = eps.mul(&eps);
        let m3 = FieldElem::from_i64(psi.value_field(), -3, 16);
        assert!(sq.eq_at_joint_prec(&m3));
    }

    #[test]
    fn gauss_duality_p5() {
        let f = qp(5, 25).unwrap();
        let psi = AdditiveCharacter::build(&f, 1).unwrap();
        let pi_v = FieldElem::one(psi.value_field(), WIDE_PREC);
        let q = FieldElem::from_i64(psi.value_field(), 5, WIDE_PREC);
        for delta in all_unit_characters(&f, 1, &psi, &pi_v).unwrap() {
            let eps = gauss_sum_epsilon(&delta, &psi, 0).unwrap();
            let dual = delta.inv().unwrap().mul(&Character::abs_value(&f).unwrap()).unwrap();
            let eps_dual = gauss_sum_epsilon(&dual, &psi, 0).unwrap();
            let lhs = eps.mul(&eps_dual);
            let rhs = delta.value_at_minus_one().unwrap();
            assert!(lhs.eq_at_joint_prec(&embed(&rhs, psi.value_field()).unwrap()));
            // norm relation: eps(delta^{-1}|.|) = q^(-a) eps(delta^{-1})
            let a = delta.conductor().unwrap() as i64;
            let inv_eps = gauss_sum_epsilon(&delta.inv().unwrap(), &psi, 0).unwrap();
            let lhs2 = eps_dual.mul(&q.pow_i64(a).unwrap());
            assert!(lhs2.eq_at_joint_prec(&inv_eps));
        }
    }

    #[test]
    fn equivariant_scaling_law() {
        let f = qp(3, 25).unwrap();
        let psi = AdditiveCharacter::build(&f, 1).unwrap();
        let quad = quadratic_mod_p(&f, &psi);
        let eq = equivariant_epsilon(&quad, &psi).unwrap();
        let w = quad.weil_character().unwrap();
        let base_eps = eq.components[&1].clone();
        for (b, v) in &eq.components {
            let scale = embed(&w.rho(*b).unwrap(), psi.value_field()).unwrap();
            assert!(v.eq_at_joint_prec(&base_eps.mul(&scale)));
        }
    }

    #[test]
    fn crystalline_factor_example() {
        // p = 3, k = 0, delta(pi) = 2 -> (1 - (1/3)(1/2)) / (1 - 2) = -5/6
        let f = qp(3, 25).unwrap();
        let delta = Character::unramified(&f, &f, FieldElem::from_i64(&f, 2, WIDE_PREC)).unwrap();
        let c = crystalline_factor(&delta).unwrap();
        let expect =
            FieldElem::from_rational(&f, &BigRational::new((-5).into(), 6.into()), 16).unwrap();
        assert!(c.eq_at_joint_prec(&expect));
        // x^k has eigenvalue 1: exceptional
        let xk = Character::x_power(&f, 2).unwrap();
        assert!(matches!(crystalline_factor(&xk), Err(Error::ExceptionalPole(_))));
    }

    #[test]
    fn gamma_factor_values() {
        let f = qp(3, 25).unwrap();
        // weight {1} -> Omega^(-1)
        let g = gamma_factor(&f, &[(1, 1)]).unwrap();
        let expect = OmegaScalar::omega_pow(FieldElem::one(&f, WIDE_PREC), -1);
        assert!(g.eq_at_joint_prec(&expect));
        // weight {0} -> 1
        let g0 = gamma_factor(&f, &[(0, 1)]).unwrap();
        assert!(g0.eq_at_joint_prec(&OmegaScalar::one(&f, WIDE_PREC)));
        // duality on pairs {k}, {1-k}
        for k in -4..=4i64 {
            let a = gamma_factor(&f, &[(k, 1)]).unwrap();
            let b = gamma_factor(&f, &[(1 - k, 1)]).unwrap();
            let prod = a.mul(&b);
            let h = k;
            let dim_t = if k >= 1 { 1 } else { 0 };
            let sign = if (h + dim_t) % 2 == 0 { 1 } else { -1 };
            let expect = OmegaScalar::omega_pow(FieldElem::from_i64(&f, sign, WIDE_PREC), -1);
            assert!(prod.eq_at_joint_prec(&expect), "k = {k}");
        }
    }

    #[test]
    fn interp_constant_twisting() {
        // CPrime(x * delta) = Omega * C(delta) for unramified weight-zero
        let f = qp(3, 25).unwrap();
        let psi = AdditiveCharacter::build(&f, 1).unwrap();
        let delta = Character::unramified(&f, &f, FieldElem::from_i64(&f, 2, WIDE_PREC)).unwrap();
        let c = interp_constant(&delta, InterpVariant::C, &psi).unwrap();
        let xdelta = delta.twist_x_power(1).unwrap();
        let cp = interp_constant(&xdelta, InterpVariant::CPrime, &psi).unwrap();
        let lhs = cp.component_scalar(1).unwrap();
        let rhs = c.component_scalar(1).unwrap().omega_shift(1);
        assert!(lhs.eq_at_joint_prec(&rhs));
    }
}
