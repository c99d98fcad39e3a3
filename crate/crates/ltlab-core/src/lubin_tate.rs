//! Lubin-Tate formal groups: group law, endomorphisms, logarithm and
//! exponential, torsion towers, the invariant derivative, and the character
//! series eta(x, Z) = exp(Omega x log(Z)).

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::{Error, Result};

use crate::padic::{FieldElem, LocalField, Rep, StageKind};
use crate::series::{OmegaScalar, Series, Tail, VarTag, EXACT_TRUNC, WIDE_PREC};

/// Bivariate polynomial/series truncated in total degree.
#[derive(Clone, Debug)]
pub struct TwoVar {
    field: Arc<LocalField>,
    coeffs: BTreeMap<(u32, u32), FieldElem>,
    total_trunc: i64,
}

impl TwoVar {
    pub fn zero(field: &Arc<LocalField>, total_trunc: i64) -> Self {
        TwoVar { field: field.clone(), coeffs: BTreeMap::new(), total_trunc }
    }

    pub fn x_plus_y(field: &Arc<LocalField>, total_trunc: i64) -> Self {
        let mut t = Self::zero(field, total_trunc);
        t.coeffs.insert((1, 0), FieldElem::one(field, WIDE_PREC));
        t.coeffs.insert((0, 1), FieldElem::one(field, WIDE_PREC));
        t
    }

    pub fn coeff(&self, i: u32, j: u32) -> FieldElem {
        self.coeffs
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| FieldElem::zero(&self.field, WIDE_PREC))
    }

    pub fn coeffs(&self) -> &BTreeMap<(u32, u32), FieldElem> {
        &self.coeffs
    }

    pub fn total_trunc(&self) -> i64 {
        self.total_trunc
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut coeffs = self.coeffs.clone();
        for (k, v) in &other.coeffs {
            match coeffs.get_mut(k) {
                Some(t) => *t = t.add(v),
                None => {
                    coeffs.insert(*k, v.clone());
                }
            }
        }
        TwoVar {
            field: self.field.clone(),
            coeffs,
            total_trunc: self.total_trunc.min(other.total_trunc),
        }
    }

    pub fn neg(&self) -> Self {
        TwoVar {
            field: self.field.clone(),
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.neg())).collect(),
            total_trunc: self.total_trunc,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &FieldElem) -> Self {
        TwoVar {
            field: self.field.clone(),
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.mul(c))).collect(),
            total_trunc: self.total_trunc,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let trunc = self.total_trunc.min(other.total_trunc);
        let mut coeffs: BTreeMap<(u32, u32), FieldElem> = BTreeMap::new();
        for ((i1, j1), a) in &self.coeffs {
            for ((i2, j2), b) in &other.coeffs {
                let (i, j) = (i1 + i2, j1 + j2);
                if (i + j) as i64 >= trunc {
                    continue;
                }
                let t = a.mul(b);
                match coeffs.get_mut(&(i, j)) {
                    Some(s) => *s = s.add(&t),
                    None => {
                        coeffs.insert((i, j), t);
                    }
                }
            }
        }
        TwoVar { field: self.field.clone(), coeffs, total_trunc: trunc }
    }

    /// Substitute univariate polynomials/series for X and Y.
    pub fn subst(&self, gx: &Series, gy: &Series) -> Self {
        let trunc = self.total_trunc;
        let max_i = self.coeffs.keys().map(|(i, _)| *i).max().unwrap_or(0);
        let max_j = self.coeffs.keys().map(|(_, j)| *j).max().unwrap_or(0);
        let xpows = univ_powers(gx, max_i, trunc);
        let ypows = univ_powers(gy, max_j, trunc);
        let mut out = TwoVar::zero(&self.field, trunc);
        for ((i, j), c) in &self.coeffs {
            let xs = &xpows[*i as usize];
            let ys = &ypows[*j as usize];
            for (ex, cx) in xs.coeffs() {
                let cx = cx.scalar_part().expect("period-free");
                for (ey, cy) in ys.coeffs() {
                    if ex + ey >= trunc {
                        continue;
                    }
                    let cy = cy.scalar_part().expect("period-free");
                    let t = c.mul(&cx).mul(&cy);
                    let key = (*ex as u32, *ey as u32);
                    match out.coeffs.get_mut(&key) {
                        Some(s) => *s = s.add(&t),
                        None => {
                            out.coeffs.insert(key, t);
                        }
                    }
                }
            }
        }
        out
    }

    /// Substitute a constant for X, producing a univariate series in Y.
    pub fn subst_x_const(&self, a: &FieldElem) -> Series {
        let afield = a.field().clone();
        let max_i = self.coeffs.keys().map(|(i, _)| *i).max().unwrap_or(0);
        let mut apow = vec![FieldElem::one(&afield, WIDE_PREC)];
        for _ in 1..=max_i {
            apow.push(apow.last().unwrap().mul(a));
        }
        let mut coeffs: BTreeMap<i64, OmegaScalar> = BTreeMap::new();
        for ((i, j), c) in &self.coeffs {
            let ce = if c.field() == &afield { c.clone() } else { c.embed_into(&afield).unwrap() };
            let t = ce.mul(&apow[*i as usize]);
            let key = *j as i64;
            let t = OmegaScalar::from_elem(t);
            match coeffs.get_mut(&key) {
                Some(s) => *s = s.add(&t),
                None => {
                    coeffs.insert(key, t);
                }
            }
        }
        Series::from_coeffs(&afield, VarTag::Z, coeffs, self.total_trunc, Tail::Unknown)
    }

    /// Partial derivative in Y evaluated at Y = 0, as a univariate series.
    pub fn dy_at_zero(&self) -> Series {
        let mut coeffs: BTreeMap<i64, OmegaScalar> = BTreeMap::new();
        for ((i, j), c) in &self.coeffs {
            if *j != 1 {
                continue;
            }
            coeffs.insert(*i as i64, OmegaScalar::from_elem(c.clone()));
        }
        Series::from_coeffs(&self.field, VarTag::Z, coeffs, self.total_trunc - 1, Tail::Unknown)
    }

    pub fn eq_at_joint_prec(&self, other: &Self) -> bool {
        let t = self.total_trunc.min(other.total_trunc);
        let keys: std::collections::BTreeSet<(u32, u32)> =
            self.coeffs.keys().chain(other.coeffs.keys()).copied().collect();
        keys.iter()
            .filter(|(i, j)| ((i + j) as i64) < t)
            .all(|k| self.coeff(k.0, k.1).eq_at_joint_prec(&other.coeff(k.0, k.1)))
    }
}

fn univ_powers(g: &Series, up_to: u32, trunc: i64) -> Vec<Series> {
    let mut pows = Vec::with_capacity(up_to as usize + 1);
    pows.push(Series::constant(OmegaScalar::one(g.field(), WIDE_PREC), g.var()));
    for _ in 1..=up_to {
        let next = pows.last().unwrap().mul(g).truncate_order(trunc);
        pows.push(next);
    }
    pows
}

/// How the Frobenius polynomial relates to the shipped torsion machinery.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrobeniusKind {
    /// pi Z + Z^q.
    Special,
    /// (1 + Z)^p - 1 over Q_p.
    Cyclotomic,
    Other,
}

#[derive(Default)]
struct Caches {
    log: Option<Series>,
    exp: Option<Series>,
    group: Option<TwoVar>,
    endos: BTreeMap<(String, i64), Series>,
}

/// A Lubin-Tate datum over its base field.
pub struct FormalGroup {
    field: Arc<LocalField>,
    frobenius: Series,
    kind: FrobeniusKind,
    caches: Mutex<Caches>,
}

impl FormalGroup {
    /// The special datum pi Z + Z^q.
    pub fn special(field: &Arc<LocalField>) -> Arc<Self> {
        let pi = FieldElem::pi(field, WIDE_PREC);
        let q = field.q();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(1, OmegaScalar::from_elem(pi));
        coeffs.insert(q as i64, OmegaScalar::one(field, WIDE_PREC));
        let frob = Series::from_coeffs(field, VarTag::Z, coeffs, EXACT_TRUNC, Tail::Exact);
        Arc::new(FormalGroup {
            field: field.clone(),
            frobenius: frob,
            kind: FrobeniusKind::Special,
            caches: Mutex::new(Caches::default()),
        })
    }

    /// The cyclotomic datum (1 + Z)^p - 1 over Q_p (requires e = f = 1 and
    /// pi = p).
    pub fn cyclotomic(field: &Arc<LocalField>) -> Result<Arc<Self>> {
        if field.e() != 1 || field.f() != 1 {
            return Err(Error::Invalid("cyclotomic datum needs Q_p as base".into()));
        }
        let p = field.p();
        let mut coeffs = BTreeMap::new();
        let mut binom = BigInt::from(1);
        for k in 1..=p {
            binom = binom * BigInt::from(p - k + 1) / BigInt::from(k);
            coeffs.insert(k as i64, OmegaScalar::from_elem(FieldElem::from_bigint(field, &binom, WIDE_PREC)));
        }
        let frob = Series::from_coeffs(field, VarTag::Z, coeffs, EXACT_TRUNC, Tail::Exact);
        Ok(Arc::new(FormalGroup {
            field: field.clone(),
            frobenius: frob,
            kind: FrobeniusKind::Cyclotomic,
            caches: Mutex::new(Caches::default()),
        }))
    }

    /// An arbitrary monic-or-not polynomial Frobenius with
    /// [pi](Z) = pi Z mod Z^2 and [pi](Z) = Z^q mod pi.
    pub fn from_frobenius(field: &Arc<LocalField>, frob: Series) -> Result<Arc<Self>> {
        if !frob.is_exact() {
            return Err(Error::Invalid("frobenius must be a polynomial".into()));
        }
        let pi = FieldElem::pi(field, WIDE_PREC);
        let lin = frob.coeff(1).scalar_part()?;
        if !lin.eq_at_joint_prec(&pi) {
            return Err(Error::Invalid("frobenius must have linear term pi Z".into()));
        }
        let q = field.q() as i64;
        for (k, c) in frob.coeffs() {
            let c = c.scalar_part()?;
            let need = if *k == q { 0 } else { 1 };
            if *k != 1 && c.val_pi_bound() < need && !c.is_zero_at_prec() {
                return Err(Error::Invalid("frobenius must reduce to Z^q mod pi".into()));
            }
        }
        let kind = detect_kind(field, &frob);
        Ok(Arc::new(FormalGroup {
            field: field.clone(),
            frobenius: frob,
            kind,
            caches: Mutex::new(Caches::default()),
        }))
    }

    pub fn field(&self) -> &Arc<LocalField> {
        &self.field
    }

    pub fn frobenius(&self) -> &Series {
        &self.frobenius
    }

    pub fn kind(&self) -> FrobeniusKind {
        self.kind
    }

    pub fn pi(&self) -> FieldElem {
        FieldElem::pi(&self.field, WIDE_PREC)
    }

    /// log_LT truncated below Z^trunc: the limit of [pi^n](Z)/pi^n.
    pub fn log_lt(&self, trunc: i64) -> Series {
        {
            let c = self.caches.lock().unwrap();
            if let Some(l) = &c.log {
                if l.trunc() >= trunc {
                    return l.truncate_order(trunc);
                }
            }
        }
        // the limit gains one pi-digit per step; certify agreement at
        // target_prec and claim no more than that
        let target_prec = (3 * WIDE_PREC) / 4;
        let pi = self.pi();
        let mut w = Series::monomial(OmegaScalar::one(&self.field, WIDE_PREC), 1, VarTag::Z);
        let mut cur: Option<Series> = None;
        let mut pi_pow = FieldElem::one(&self.field, WIDE_PREC);
        let mut stable = 0;
        for _ in 0..(WIDE_PREC as usize * 2) {
            w = self.frobenius.compose(&w).unwrap().truncate_order(trunc);
            pi_pow = pi_pow.mul(&pi);
            let candidate = w.scale(&OmegaScalar::from_elem(pi_pow.inv().unwrap()));
            if let Some(prev) = &cur {
                if prev
                    .sub(&candidate)
                    .truncate_pi(target_prec)
                    .is_zero_at_prec()
                {
                    stable += 1;
                    if stable >= 2 {
                        cur = Some(candidate);
                        break;
                    }
                } else {
                    stable = 0;
                }
            }
            cur = Some(candidate);
        }
        let mut log = cur.expect("logarithm limit did not stabilize");
        log = Series::from_coeffs(
            &self.field,
            VarTag::Z,
            log.truncate_pi(target_prec).coeffs().clone(),
            trunc,
            Tail::Unknown,
        );
        let mut c = self.caches.lock().unwrap();
        c.log = Some(log.clone());
        log
    }

    /// g_LT = log'(Z), the reciprocal of the invariant-differential unit.
    pub fn g_lt(&self, trunc: i64) -> Series {
        self.log_lt(trunc + 1).derivative()
    }

    /// exp_LT: the compositional inverse of log_LT.
    pub fn exp_lt(&self, trunc: i64) -> Series {
        {
            let c = self.caches.lock().unwrap();
            if let Some(ex) = &c.exp {
                if ex.trunc() >= trunc {
                    return ex.truncate_order(trunc);
                }
            }
        }
        let log = self.log_lt(trunc);
        let mut exp = Series::monomial(OmegaScalar::one(&self.field, WIDE_PREC), 1, VarTag::Z)
            .truncate_order(trunc);
        for k in 2..trunc {
            // E_k = -[Z^k](log(E_{<k}))
            let comp = log.compose(&exp).unwrap().truncate_order(k + 1);
            let defect = comp.coeff(k).neg();
            exp = exp.add(&Series::monomial(defect, k, VarTag::Z)).truncate_order(trunc);
        }
        let mut c = self.caches.lock().unwrap();
        c.exp = Some(exp.clone());
        exp
    }

    /// The group law F(X, Y), solved degree by degree from
    /// F([pi]X, [pi]Y) = [pi](F(X, Y)).
    pub fn group_law(&self, total_trunc: i64) -> Result<TwoVar> {
        {
            let c = self.caches.lock().unwrap();
            if let Some(g) = &c.group {
                if g.total_trunc() >= total_trunc {
                    let mut out = g.clone();
                    out.coeffs.retain(|(i, j), _| ((i + j) as i64) < total_trunc);
                    out.total_trunc = total_trunc;
                    return Ok(out);
                }
            }
        }
        let pi = self.pi();
        let mut f = TwoVar::x_plus_y(&self.field, total_trunc);
        let mut pi_r1 = pi.mul(&pi); // pi^(r+1) for r = 1
        for r in 1..(total_trunc - 1) {
            // defect = [pi](F) - F([pi]X, [pi]Y), homogeneous of degree r+1
            let lhs = frob_of_twovar(&self.frobenius, &f, r + 2);
            let rhs = f.subst(&self.frobenius, &self.frobenius);
            let defect = lhs.sub(&rhs);
            let denom = pi_r1.sub(&pi).inv()?;
            let mut corr = TwoVar::zero(&self.field, total_trunc);
            for ((i, j), c) in defect.coeffs.iter() {
                if (*i + *j) as i64 != r + 1 || c.is_zero_at_prec() {
                    continue;
                }
                corr.coeffs.insert((*i, *j), c.mul(&denom));
            }
            f = f.add(&corr);
            pi_r1 = pi_r1.mul(&pi);
        }
        // integrality sanity: coefficients of a formal group over o_L
        for c in f.coeffs.values() {
            if c.val_pi_bound() < 0 {
                return Err(Error::IntegralityViolation(
                    "group-law coefficient with negative valuation".into(),
                ));
            }
        }
        let mut cache = self.caches.lock().unwrap();
        cache.group = Some(f.clone());
        Ok(f)
    }

    /// The endomorphism [a](Z) = exp_LT(a log_LT(Z)), with an integrality
    /// assertion.
    pub fn endomorphism(&self, a: &FieldElem, trunc: i64) -> Result<Series> {
        if a.val_pi_bound() < 0 {
            return Err(Error::Invalid("endomorphism needs an integral multiplier".into()));
        }
        let key = (elem_key(a), trunc);
        {
            let c = self.caches.lock().unwrap();
            if let Some(s) = c.endos.get(&key) {
                return Ok(s.clone());
            }
        }
        let log = self.log_lt(trunc);
        let alog = log.scale(&OmegaScalar::from_elem(a.clone()));
        let exp = self.exp_lt(trunc);
        let out = exp.compose(&alog)?.truncate_order(trunc);
        for (k, c) in out.coeffs() {
            let sc = c.scalar_part()?;
            if !sc.is_zero_at_prec() && sc.val_pi().unwrap_or(0) < 0 {
                return Err(Error::IntegralityViolation(format!(
                    "coefficient of Z^{k} in [a](Z) has negative valuation"
                )));
            }
        }
        let mut c = self.caches.lock().unwrap();
        c.endos.insert(key, out.clone());
        Ok(out)
    }

    /// The invariant derivative d/dt = g^(-1) d/dZ.
    pub fn invariant_derivative(&self, f: &Series) -> Series {
        let fp = f.derivative();
        let floor = fp.laurent_floor().unwrap_or(0).min(0);
        let gtr = if fp.trunc() >= EXACT_TRUNC { 64 } else { fp.trunc() - floor + 2 };
        let ginv = self.g_lt(gtr).invert(gtr).unwrap();
        fp.mul(&ginv)
    }

    /// Res(f d log_LT) = the Z^(-1) coefficient of f * g_LT.
    pub fn residue_dt(&self, f: &Series) -> OmegaScalar {
        let floor = f.laurent_floor().unwrap_or(0).min(0);
        let need = (-floor) + 2;
        f.mul(&self.g_lt(need)).residue()
    }

    /// Antiderivative with respect to the invariant derivative; requires a
    /// vanishing dt-residue.
    pub fn antiderivative_dt(&self, f: &Series) -> Result<Series> {
        let floor = f.laurent_floor().unwrap_or(0).min(0);
        let gtr = if f.trunc() >= EXACT_TRUNC { 64 } else { f.trunc() } + (-floor) + 2;
        let fg = f.mul(&self.g_lt(gtr));
        if !fg.residue().is_zero_at_prec() {
            return Err(Error::Invalid("nonzero residue has no antiderivative".into()));
        }
        let mut coeffs = BTreeMap::new();
        for (k, c) in fg.coeffs() {
            if *k == -1 {
                continue;
            }
            let kf = FieldElem::from_i64(&self.field, k + 1, WIDE_PREC).inv()?;
            coeffs.insert(k + 1, c.scale(&kf));
        }
        Ok(Series::from_coeffs(&self.field, VarTag::Z, coeffs, fg.trunc().saturating_add(1).min(EXACT_TRUNC), Tail::Unknown))
    }

    /// Q_n = [pi^n](Z) / [pi^(n-1)](Z), an exact polynomial quotient.
    pub fn qn_polynomial(&self, n: u32) -> Result<Series> {
        if n == 0 {
            return Err(Error::Invalid("qn needs n >= 1".into()));
        }
        let mut num = self.frobenius.clone();
        let mut den = Series::monomial(OmegaScalar::one(&self.field, WIDE_PREC), 1, VarTag::Z);
        for _ in 1..n {
            num = self.frobenius.compose(&num)?;
            den = self.frobenius.compose(&den)?;
        }
        poly_div_exact(&num, &den)
    }

    /// eta(x, Z) = exp(Omega x log(Z)) as a series with period coefficients.
    pub fn eta(&self, x: &FieldElem, trunc: i64) -> Result<EtaSeries> {
        if x.val_pi_bound() < 0 {
            return Err(Error::Invalid("eta needs an integral argument".into()));
        }
        let log = self.log_lt(trunc);
        // sum_m Omega^m x^m log^m / m!
        let mut acc = Series::constant(OmegaScalar::one(&self.field, WIDE_PREC), VarTag::Z)
            .truncate_order(trunc);
        let mut pw = Series::constant(OmegaScalar::one(&self.field, WIDE_PREC), VarTag::Z);
        let mut xm = FieldElem::one(&self.field, WIDE_PREC);
        let mut fact = FieldElem::one(&self.field, WIDE_PREC);
        for m in 1..trunc {
            pw = pw.mul(&log).truncate_order(trunc);
            xm = xm.mul(x);
            fact = fact.mul(&FieldElem::from_i64(&self.field, m, WIDE_PREC));
            let c = xm.mul(&fact.inv()?);
            let term = pw.map_coeffs(|co| co.scale(&c).omega_shift(m));
            acc = acc.add(&term);
        }
        Ok(EtaSeries { x: x.clone(), series: acc })
    }

    /// Check the group-law associativity up to the given total degree.
    pub fn check_associativity(&self, deg: i64) -> Result<bool> {
        let f = self.group_law(deg + 1)?;
        Ok(tri_assoc_check(&f, deg))
    }
}

fn detect_kind(field: &Arc<LocalField>, frob: &Series) -> FrobeniusKind {
    let q = field.q() as i64;
    let pi = FieldElem::pi(field, WIDE_PREC);
    // special: pi Z + Z^q
    let mut coeffs = BTreeMap::new();
    coeffs.insert(1, OmegaScalar::from_elem(pi));
    coeffs.insert(q, OmegaScalar::one(field, WIDE_PREC));
    let special = Series::from_coeffs(field, VarTag::Z, coeffs, EXACT_TRUNC, Tail::Exact);
    if frob.eq_at_joint_prec(&special) && frob.coeffs().len() == special.coeffs().len() {
        return FrobeniusKind::Special;
    }
    if field.e() == 1 && field.f() == 1 {
        let p = field.p();
        let mut coeffs = BTreeMap::new();
        let mut binom = BigInt::from(1);
        for k in 1..=p {
            binom = binom * BigInt::from(p - k + 1) / BigInt::from(k);
            coeffs.insert(
                k as i64,
                OmegaScalar::from_elem(FieldElem::from_bigint(field, &binom, WIDE_PREC)),
            );
        }
        let cyc = Series::from_coeffs(field, VarTag::Z, coeffs, EXACT_TRUNC, Tail::Exact);
        if frob.eq_at_joint_prec(&cyc) {
            return FrobeniusKind::Cyclotomic;
        }
    }
    FrobeniusKind::Other
}

fn elem_key(a: &FieldElem) -> String {
    let mut s = String::new();
    for leaf in a.flatten() {
        match leaf.val() {
            Some(v) => {
                s.push_str(&format!("{}@{}:{};", v, leaf.prec().min(48), leaf.unit_repr()));
            }
            None => s.push_str(&format!("0@{};", leaf.prec().min(48))),
        }
    }
    s
}

/// [pi] applied to a bivariate series, truncated at total degree `trunc`.
fn frob_of_twovar(frob: &Series, f: &TwoVar, trunc: i64) -> TwoVar {
    let field = f.field.clone();
    let mut out = TwoVar::zero(&field, trunc);
    let mut pw = TwoVar::zero(&field, trunc);
    pw.coeffs.insert((0, 0), FieldElem::one(&field, WIDE_PREC));
    let top = frob.coeffs().keys().max().copied().unwrap_or(0);
    let mut truncated_f = f.clone();
    truncated_f.total_trunc = trunc;
    for k in 0..=top {
        if let Some(c) = frob.coeffs().get(&k) {
            let c = c.scalar_part().expect("period-free frobenius");
            out = out.add(&pw.scale(&c));
        }
        if k < top {
            pw = pw.mul(&truncated_f);
        }
    }
    out
}

/// Exact division of Laurent-polynomial series (used for Q_n).
fn poly_div_exact(num: &Series, den: &Series) -> Result<Series> {
    if !num.is_exact() || !den.is_exact() {
        return Err(Error::Invalid("exact division needs polynomials".into()));
    }
    let field = num.field().clone();
    let mut rem: BTreeMap<i64, OmegaScalar> = num.coeffs().clone();
    let dtop = *den.coeffs().keys().max().ok_or_else(|| Error::Invalid("zero divisor".into()))?;
    let dlead = den.coeff(dtop).scalar_part()?;
    let dlead_inv = dlead.inv()?;
    let mut qcoeffs: BTreeMap<i64, OmegaScalar> = BTreeMap::new();
    loop {
        let ntop = match rem.iter().rev().find(|(_, c)| !c.is_zero_at_prec()) {
            Some((k, _)) => *k,
            None => break,
        };
        if ntop < dtop {
            return Err(Error::Invalid("division not exact".into()));
        }
        let c = rem.get(&ntop).unwrap().clone();
        let qc = c.scale(&dlead_inv);
        qcoeffs.insert(ntop - dtop, qc.clone());
        for (k, dc) in den.coeffs() {
            let t = qc.mul(dc);
            let key = ntop - dtop + k;
            let cur = rem.remove(&key).unwrap_or_else(|| OmegaScalar::zero(&field));
            let nv = cur.sub(&t);
            rem.insert(key, nv);
        }
        rem.remove(&ntop);
    }
    Ok(Series::from_coeffs(&field, VarTag::Z, qcoeffs, EXACT_TRUNC, Tail::Exact))
}

/// Trivariate associativity check at total degree <= deg.
fn tri_assoc_check(f: &TwoVar, deg: i64) -> bool {
    type Key = (u32, u32, u32);
    let field = f.field.clone();
    let mul = |a: &BTreeMap<Key, FieldElem>, b: &BTreeMap<Key, FieldElem>| {
        let mut out: BTreeMap<Key, FieldElem> = BTreeMap::new();
        for ((i1, j1, k1), x) in a {
            for ((i2, j2, k2), y) in b {
                let key = (i1 + i2, j1 + j2, k1 + k2);
                if (key.0 + key.1 + key.2) as i64 > deg {
                    continue;
                }
                let t = x.mul(y);
                match out.get_mut(&key) {
                    Some(s) => *s = s.add(&t),
                    None => {
                        out.insert(key, t);
                    }
                }
            }
        }
        out
    };
    // F(A, B) for trivariate arguments
    let apply = |a: &BTreeMap<Key, FieldElem>, b: &BTreeMap<Key, FieldElem>| {
        let max_i = f.coeffs.keys().map(|(i, _)| *i).max().unwrap_or(0);
        let max_j = f.coeffs.keys().map(|(_, j)| *j).max().unwrap_or(0);
        let mut apow: Vec<BTreeMap<Key, FieldElem>> = vec![BTreeMap::new()];
        apow[0].insert((0, 0, 0), FieldElem::one(&field, WIDE_PREC));
        for _ in 1..=max_i {
            let last = apow.last().unwrap();
            apow.push(mul(last, a));
        }
        let mut bpow: Vec<BTreeMap<Key, FieldElem>> = vec![BTreeMap::new()];
        bpow[0].insert((0, 0, 0), FieldElem::one(&field, WIDE_PREC));
        for _ in 1..=max_j {
            let last = bpow.last().unwrap();
            bpow.push(mul(last, b));
        }
        let mut out: BTreeMap<Key, FieldElem> = BTreeMap::new();
        for ((i, j), c) in &f.coeffs {
            let t = mul(&apow[*i as usize], &bpow[*j as usize]);
            for (key, v) in t {
                let v = v.mul(c);
                match out.get_mut(&key) {
                    Some(s) => *s = s.add(&v),
                    None => {
                        out.insert(key, v);
                    }
                }
            }
        }
        out
    };
    let mut x: BTreeMap<Key, FieldElem> = BTreeMap::new();
    x.insert((1, 0, 0), FieldElem::one(&field, WIDE_PREC));
    let mut y: BTreeMap<Key, FieldElem> = BTreeMap::new();
    y.insert((0, 1, 0), FieldElem::one(&field, WIDE_PREC));
    let mut z: BTreeMap<Key, FieldElem> = BTreeMap::new();
    z.insert((0, 0, 1), FieldElem::one(&field, WIDE_PREC));
    let left = apply(&apply(&x, &y), &z);
    let right = apply(&x, &apply(&y, &z));
    let keys: std::collections::BTreeSet<Key> = left.keys().chain(right.keys()).copied().collect();
    for k in keys {
        let zero = FieldElem::zero(&field, 8);
        let l = left.get(&k).unwrap_or(&zero);
        let r = right.get(&k).unwrap_or(&zero);
        if !l.eq_at_joint_prec(r) {
            return false;
        }
    }
    true
}

/// The character series exp(Omega x log(Z)).
#[derive(Clone, Debug)]
pub struct EtaSeries {
    pub x: FieldElem,
    pub series: Series,
}

/// Torsion data: L_n with the chosen torsion point and the level-one orbit.
pub struct TorsionTower {
    group: Arc<FormalGroup>,
    level: u32,
    field_n: Arc<LocalField>,
    /// u_1, ..., u_level inside L_level.
    torsion: Vec<FieldElem>,
    /// (unit code c, [c](u_1)) for c in 1..q-1.
    orbit1: Vec<(u64, FieldElem)>,
}

impl TorsionTower {
    pub fn group(&self) -> &Arc<FormalGroup> {
        &self.group
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn field_n(&self) -> &Arc<LocalField> {
        &self.field_n
    }
    pub fn u_n(&self) -> &FieldElem {
        self.torsion.last().unwrap()
    }
    pub fn u(&self, k: u32) -> &FieldElem {
        &self.torsion[(k - 1) as usize]
    }
    pub fn orbit1(&self) -> &[(u64, FieldElem)] {
        &self.orbit1
    }

    /// Branch series s_a(Z) = a +_LT Z for a level-one torsion point a,
    /// solved from [pi](s(Z)) = [pi](Z).
    pub fn branch_series(&self, a: &FieldElem, trunc: i64) -> Result<Series> {
        branch_series_impl(&self.group, &self.field_n, a, &frob_target(&self.group, &self.field_n, 1, trunc)?, trunc)
    }
}

fn frob_target(
    group: &Arc<FormalGroup>,
    field_n: &Arc<LocalField>,
    _level: u32,
    trunc: i64,
) -> Result<Series> {
    // the right-hand side [pi](Z) embedded into L_n
    Ok(embed_series(&group.frobenius, field_n)?.truncate_order(trunc + 8))
}

pub fn embed_series(s: &Series, bigger: &Arc<LocalField>) -> Result<Series> {
    let mut coeffs = BTreeMap::new();
    for (k, c) in s.coeffs() {
        let mut terms = BTreeMap::new();
        for (m, v) in c.terms() {
            terms.insert(*m, v.embed_into(bigger)?);
        }
        let mut acc = OmegaScalar::zero(bigger);
        for (m, v) in terms {
            acc = acc.add(&OmegaScalar::omega_pow(v, m));
        }
        coeffs.insert(*k, acc);
    }
    Ok(Series::from_coeffs(bigger, s.var(), coeffs, s.trunc(), s.tail().clone()))
}

/// Solve [pi](s(Z)) = rhs(Z) with s(0) = a, coefficient by coefficient.
fn branch_series_impl(
    group: &Arc<FormalGroup>,
    field_n: &Arc<LocalField>,
    a: &FieldElem,
    rhs: &Series,
    trunc: i64,
) -> Result<Series> {
    // phi(a + h) = sum_j A_j h^j with A_j = phi^(j)(a)/j! computed exactly
    let frob = embed_series(&group.frobenius, field_n)?;
    let top = *frob.coeffs().keys().max().unwrap();
    let mut a_pows = vec![FieldElem::one(field_n, WIDE_PREC)];
    for _ in 1..=top {
        a_pows.push(a_pows.last().unwrap().mul(a));
    }
    let mut coefs_a: Vec<FieldElem> = Vec::new(); // A_j
    for j in 0..=top {
        let mut acc = FieldElem::zero(field_n, WIDE_PREC);
        for (m, cm) in frob.coeffs() {
            if *m < j {
                continue;
            }
            let cm = cm.scalar_part()?;
            let bin = binomial(*m, j);
            let t = cm
                .mul(&a_pows[(*m - j) as usize])
                .mul(&FieldElem::from_bigint(field_n, &bin, WIDE_PREC));
            acc = acc.add(&t);
        }
        coefs_a.push(acc);
    }
    let a1_inv = coefs_a[1].inv()?;
    // h = sum_{k>=1} s_k Z^k; running powers h^j truncated at `trunc`
    let mut h = Series::zero(field_n, VarTag::Z).truncate_order(trunc);
    let mut s_coeffs: BTreeMap<i64, OmegaScalar> = BTreeMap::new();
    s_coeffs.insert(0, OmegaScalar::from_elem(a.clone()));
    for k in 1..trunc {
        // target coefficient: rhs_k - A_0 [k = 0] - sum_{j>=2} A_j [Z^k] h^j
        let mut target = rhs.coeff(k).scalar_part()?;
        if k == 0 {
            target = target.sub(&coefs_a[0]);
        }
        let mut hp = h.clone();
        for j in 2..=top {
            hp = hp.mul(&h).truncate_order(k + 1);
            if j >= 2 {
                let co = hp.coeff(k).scalar_part()?;
                target = target.sub(&coefs_a[j as usize].mul(&co));
            }
        }
        // subtract A_1 * (already known part of h at k): none, h has only < k
        let sk = target.mul(&a1_inv);
        s_coeffs.insert(k, OmegaScalar::from_elem(sk.clone()));
        h = h.add(&Series::monomial(OmegaScalar::from_elem(sk), k, VarTag::Z)).truncate_order(trunc);
    }
    Ok(Series::from_coeffs(field_n, VarTag::Z, s_coeffs, trunc, Tail::Unknown))
}

fn binomial(n: i64, k: i64) -> BigInt {
    let mut c = BigInt::from(1);
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

/// Build the torsion tower for the special or cyclotomic datum.
pub fn torsion_tower(group: &Arc<FormalGroup>, level: u32) -> Result<Arc<TorsionTower>> {
    if level == 0 || level > 2 {
        return Err(Error::LevelUnsupported(format!("level {level} (supported: 1, 2)")));
    }
    if group.kind == FrobeniusKind::Other {
        return Err(Error::LevelUnsupported(
            "torsion towers are built only for the special and cyclotomic data".into(),
        ));
    }
    let l = group.field();
    let q1 = group.qn_polynomial(1)?;
    // stage polynomial for L_1: Q_1(X), Eisenstein of degree q - 1
    let mut stage1: Vec<Rep> = Vec::new();
    let deg1 = *q1.coeffs().keys().max().unwrap();
    for k in 0..=deg1 {
        stage1.push(q1.coeff(k).scalar_part()?.rep().clone());
    }
    let mut tower: Vec<(Vec<Rep>, StageKind)> =
        l.stages().iter().map(|s| (s.poly.clone(), s.kind.clone())).collect();
    tower.push((stage1, StageKind::Eisenstein));
    let l1 = crate::padic::make_field(l.p(), tower.clone(), WIDE_PREC)?;
    if level == 1 {
        let u1 = FieldElem::stage_generator(&l1, l1.stages().len() - 1, WIDE_PREC);
        let orbit = level_one_orbit(group, &l1, &u1)?;
        let t = TorsionTower {
            group: group.clone(),
            level,
            field_n: l1,
            torsion: vec![u1],
            orbit1: orbit,
        };
        check_torsion_valuation(&t)?;
        return Ok(Arc::new(t));
    }
    // level 2: adjoin a root of [pi](Y) - u_1 over L_1
    let u1_l1 = FieldElem::stage_generator(&l1, l1.stages().len() - 1, WIDE_PREC);
    let frob1 = embed_series(&group.frobenius, &l1)?;
    let mut stage2: Vec<Rep> = Vec::new();
    let deg2 = *frob1.coeffs().keys().max().unwrap();
    for k in 0..=deg2 {
        let mut c = frob1.coeff(k).scalar_part()?;
        if k == 0 {
            c = c.sub(&u1_l1);
        }
        stage2.push(c.rep().clone());
    }
    tower.push((stage2, StageKind::Eisenstein));
    let l2 = crate::padic::make_field(l.p(), tower, WIDE_PREC)?;
    let u2 = FieldElem::stage_generator(&l2, l2.stages().len() - 1, WIDE_PREC);
    let u1 = u1_l1.embed_into(&l2)?;
    let orbit = level_one_orbit(group, &l2, &u1)?;
    let t = TorsionTower {
        group: group.clone(),
        level,
        field_n: l2,
        torsion: vec![u1, u2],
        orbit1: orbit,
    };
    check_torsion_valuation(&t)?;
    Ok(Arc::new(t))
}

fn level_one_orbit(
    group: &Arc<FormalGroup>,
    field_n: &Arc<LocalField>,
    u1: &FieldElem,
) -> Result<Vec<(u64, FieldElem)>> {
    let q = group.field().q();
    let mut out = Vec::new();
    match group.kind {
        FrobeniusKind::Special => {
            // [c](u_1) = teich(c) * u_1
            for c in 1..q {
                let cf = FieldElem::from_i64(field_n, c as i64, WIDE_PREC);
                let w = cf.teichmuller(WIDE_PREC / 2)?;
                out.push((c, w.mul(u1)));
            }
        }
        FrobeniusKind::Cyclotomic => {
            // [c](u_1) = (1 + u_1)^c - 1
            let one = FieldElem::one(field_n, WIDE_PREC);
            for c in 1..q {
                let v = one.add(u1).pow_u64(c).sub(&one);
                out.push((c, v));
            }
        }
        FrobeniusKind::Other => unreachable!(),
    }
    Ok(out)
}

fn check_torsion_valuation(t: &TorsionTower) -> Result<()> {
    let l = t.group.field();
    let e = l.e();
    let q = l.q();
    for (k, u) in t.torsion.iter().enumerate() {
        let n = k as u32 + 1;
        let expect = BigRational::new(
            BigInt::from(1),
            BigInt::from(e) * BigInt::from(q - 1) * BigInt::from(q).pow(n - 1),
        );
        if u.val_p()? != expect {
            return Err(Error::Invalid(format!(
                "torsion point at level {n} has wrong valuation"
            )));
        }
    }
    Ok(())
}

/// iota_n: substitute u_n +_LT exp_LT(t / pi^n) into a Laurent series,
/// producing a t-series over L_n.  theta (t = 0) recovers f(u_n).
pub fn iota_n(
    group: &Arc<FormalGroup>,
    f: &Series,
    tower: &TorsionTower,
    t_trunc: i64,
) -> Result<Series> {
    let n = tower.level();
    let ln = tower.field_n();
    // exp_LT(t / pi^n): rescale coefficient k by pi^(-nk)
    let exp = group.exp_lt(t_trunc);
    let pi = group.pi().embed_into(ln)?;
    let mut coeffs = BTreeMap::new();
    for (k, c) in exp.coeffs() {
        let sc = c.scalar_part()?.embed_into(ln)?;
        let scale = pi.pow_i64(-(n as i64) * k)?;
        coeffs.insert(*k, OmegaScalar::from_elem(sc.mul(&scale)));
    }
    let inner_exp = Series::from_coeffs(ln, VarTag::T, coeffs, t_trunc, Tail::Unknown);
    // s_{u_n}(W): for level 1 solve against [pi](Z); for level 2 against
    // s_{u_1}([pi](Z))
    let trunc_z = t_trunc + 2;
    let branch = match n {
        1 => tower.branch_series(tower.u_n(), trunc_z)?,
        2 => {
            let s_u1 = branch_series_impl(
                group,
                ln,
                tower.u(1),
                &embed_series(&group.frobenius, ln)?,
                trunc_z,
            )?;
            let rhs = s_u1.compose(&embed_series(&group.frobenius, ln)?.with_var(VarTag::Z))?;
            branch_series_impl(group, ln, tower.u(2), &rhs.truncate_order(trunc_z + 8), trunc_z)?
        }
        _ => return Err(Error::LevelUnsupported("iota levels 1 and 2 only".into())),
    };
    // inner = s_{u_n}(exp_LT(t/pi^n)) as t-series with constant term u_n
    let inner = branch.with_var(VarTag::T).compose(&inner_exp)?;
    // f composed around the unit constant term
    let f_ln = embed_series(f, ln)?;
    compose_around_unit(&f_ln, &inner, t_trunc)
}

/// f(g) for an inner series g with invertible constant term.
///
/// The dropped tail of f contributes f_k g^k for k >= trunc(f); the output
/// coefficient of t^j is capped at (trunc(f) - j) v(g(0)) + j * hmin, where
/// hmin bounds the valuations of the non-constant inner coefficients.
pub fn compose_around_unit(f: &Series, g: &Series, out_trunc: i64) -> Result<Series> {
    let field = g.field().clone();
    let c0 = g.coeff(0).scalar_part()?;
    let vc = c0
        .val_pi()
        .map_err(|_| Error::NonConvergentComposition("inner constant term is zero".into()))?;
    let floor = f.laurent_floor().unwrap_or(0);
    let mut acc = Series::zero(&field, g.var()).truncate_order(out_trunc);
    let mut hmin: i64 = 0;
    for (k, c) in g.coeffs() {
        if *k >= 1 {
            if let Ok(v) = c.val_pi() {
                let fl = v.floor().to_integer();
                let vi = i64::try_from(&fl).unwrap_or(0);
                hmin = hmin.min(vi);
            }
        }
    }
    if floor < 0 {
        let ginv = g.invert(out_trunc)?;
        for (k, c) in ginv.coeffs() {
            if *k >= 1 {
                if let Ok(v) = c.val_pi() {
                    let fl = v.floor().to_integer();
                    let vi = i64::try_from(&fl).unwrap_or(0);
                    hmin = hmin.min(vi);
                }
            }
        }
        let mut pw = ginv.clone();
        let mut k = -1i64;
        loop {
            let c = f.coeff(k);
            if !c.terms().is_empty() {
                acc = acc.add(&pw.scale(&c));
            }
            k -= 1;
            if k < floor {
                break;
            }
            pw = pw.mul(&ginv).truncate_order(out_trunc);
        }
    }
    let top = f.coeffs().keys().rev().find(|k| **k >= 0).copied();
    if let Some(top) = top {
        let mut horner = Series::zero(&field, g.var());
        let mut k = top;
        loop {
            horner = horner.mul(g).truncate_order(out_trunc);
            let c = f.coeff(k);
            if !c.terms().is_empty() {
                horner = horner.add(&Series::constant(c, g.var()));
            }
            if k == 0 {
                break;
            }
            k -= 1;
        }
        acc = acc.add(&horner);
    }
    if !f.is_exact() {
        let ft = f.trunc();
        let mut coeffs = BTreeMap::new();
        for (j, c) in acc.coeffs() {
            let jj = (*j).max(0);
            let cap = (ft - j).saturating_mul(vc).saturating_add(jj.saturating_mul(hmin));
            coeffs.insert(*j, c.truncate_pi(cap.min(WIDE_PREC * 4)));
        }
        acc = Series::from_coeffs(&field, acc.var(), coeffs, acc.trunc(), Tail::Unknown);
    }
    Ok(acc.truncate_order(out_trunc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::qp;

    #[test]
    fn group_law_multiplicative_for_p2() {
        let f2 = qp(2, 30).unwrap();
        let g = FormalGroup::special(&f2); // 2Z + Z^2 = (1+Z)^2 - 1
        let law = g.group_law(13).unwrap();
        // expect X + Y + XY
        let mut expect = TwoVar::x_plus_y(&f2, 13);
        expect.coeffs.insert((1, 1), FieldElem::one(&f2, WIDE_PREC));
        assert!(law.eq_at_joint_prec(&expect));
    }

    #[test]
    fn group_law_unital_and_associative() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::special(&f3);
        let law = g.group_law(9).unwrap();
        // F(X, 0) = X
        for ((i, j), c) in law.coeffs() {
            if *j == 0 {
                let expect = if *i == 1 {
                    FieldElem::one(&f3, 20)
                } else {
                    FieldElem::zero(&f3, 20)
                };
                assert!(c.eq_at_joint_prec(&expect), "coefficient ({i},{j})");
            }
        }
        assert!(g.check_associativity(8).unwrap());
    }

    #[test]
    fn log_exp_inverse_cyclotomic() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::cyclotomic(&f3).unwrap();
        let log = g.log_lt(12);
        let exp = g.exp_lt(12);
        let comp = exp.compose(&log).unwrap();
        let z = Series::monomial(OmegaScalar::one(&f3, 20), 1, VarTag::Z);
        assert!(comp.eq_at_joint_prec(&z));
        // log(1+Z)-style: coefficient k is (-1)^(k+1)/k
        for k in 1..10i64 {
            let expect = FieldElem::from_rational(
                &f3,
                &BigRational::new(BigInt::from(if k % 2 == 1 { 1 } else { -1 }), BigInt::from(k)),
                18,
            )
            .unwrap();
            assert!(log.coeff(k).scalar_part().unwrap().truncate_pi(14).eq_at_joint_prec(&expect.truncate_pi(14)));
        }
    }

    #[test]
    fn endomorphism_properties() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::cyclotomic(&f3).unwrap();
        // [-1](Z) = (1+Z)^(-1) - 1 = -Z + Z^2 - Z^3 + ...
        let m1 = FieldElem::from_i64(&f3, -1, WIDE_PREC);
        let e = g.endomorphism(&m1, 10).unwrap();
        for k in 1..10i64 {
            let expect = OmegaScalar::from_i64(&f3, if k % 2 == 1 { -1 } else { 1 }, 20);
            assert!(e.coeff(k).eq_at_joint_prec(&expect), "k = {k}");
        }
        // [1](Z) = Z
        let one = FieldElem::one(&f3, WIDE_PREC);
        let id = g.endomorphism(&one, 10).unwrap();
        assert!(id.eq_at_joint_prec(&Series::monomial(OmegaScalar::one(&f3, 20), 1, VarTag::Z)));
        // log([a](Z)) = a log(Z)
        let a = FieldElem::from_i64(&f3, 5, WIDE_PREC);
        let ea = g.endomorphism(&a, 10).unwrap();
        let lhs = g.log_lt(10).compose(&ea).unwrap();
        let rhs = g.log_lt(10).scale(&OmegaScalar::from_elem(a));
        assert!(lhs.eq_at_joint_prec(&rhs));
    }

    #[test]
    fn qn_and_torsion_special_p3() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::special(&f3);
        let q1 = g.qn_polynomial(1).unwrap();
        // Q_1 = pi + Z^(q-1) = 3 + Z^2
        assert!(q1.coeff(0).eq_at_joint_prec(&OmegaScalar::from_i64(&f3, 3, 20)));
        assert!(q1.coeff(2).eq_at_joint_prec(&OmegaScalar::from_i64(&f3, 1, 20)));
        // Q_n(0) = pi
        let q2 = g.qn_polynomial(2).unwrap();
        assert!(q2.coeff(0).eq_at_joint_prec(&OmegaScalar::from_i64(&f3, 3, 20)));
        let tower = torsion_tower(&g, 1).unwrap();
        // [pi](u_1) = 0
        let frob = embed_series(g.frobenius(), tower.field_n()).unwrap();
        let v = frob.eval(tower.u_n()).unwrap();
        assert!(v.is_zero_at_prec());
    }

    #[test]
    fn torsion_level2_cyclotomic() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::cyclotomic(&f3).unwrap();
        let t2 = torsion_tower(&g, 2).unwrap();
        assert_eq!(
            t2.u(2).val_p().unwrap(),
            BigRational::new(BigInt::from(1), BigInt::from(6))
        );
        // [pi](u_2) = u_1
        let frob = embed_series(g.frobenius(), t2.field_n()).unwrap();
        let v = frob.eval(t2.u(2)).unwrap();
        assert!(v.eq_at_joint_prec(t2.u(1)));
    }

    #[test]
    fn iota_constant_term_and_t_lt() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::cyclotomic(&f3).unwrap();
        let t1 = torsion_tower(&g, 1).unwrap();
        // iota_1(Z): constant term u_1 = zeta_3 - 1
        let z = Series::monomial(OmegaScalar::one(&f3, WIDE_PREC), 1, VarTag::Z);
        let it = iota_n(&g, &z, &t1, 8).unwrap();
        assert!(it.coeff(0).scalar_part().unwrap().eq_at_joint_prec(t1.u_n()));
        // iota_1(t_LT) = t / pi; use a long log truncation so the tail cap
        // leaves plenty of verified digits
        let log = g.log_lt(40);
        let it2 = iota_n(&g, &log, &t1, 8).unwrap();
        let pi_inv = FieldElem::from_i64(t1.field_n(), 3, WIDE_PREC).inv().unwrap();
        for k in 0..8i64 {
            let expect = if k == 1 {
                OmegaScalar::from_elem(pi_inv.clone())
            } else {
                OmegaScalar::zero(t1.field_n())
            };
            let got = it2.coeff(k);
            assert!(
                got.sub(&expect).truncate_pi(10).is_zero_at_prec(),
                "t-coefficient {k}"
            );
        }
    }

    #[test]
    fn eta_exponential_law() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::cyclotomic(&f3).unwrap();
        let x = FieldElem::from_i64(&f3, 2, WIDE_PREC);
        let y = FieldElem::from_i64(&f3, 5, WIDE_PREC);
        let ex = g.eta(&x, 10).unwrap();
        let ey = g.eta(&y, 10).unwrap();
        let exy = g.eta(&x.add(&y), 10).unwrap();
        let prod = ex.series.mul(&ey.series).truncate_order(10);
        assert!(prod.truncate_pi(16).eq_at_joint_prec(&exy.series.truncate_pi(16)));
        // eta(0, Z) = 1
        let e0 = g.eta(&FieldElem::zero(&f3, WIDE_PREC), 10).unwrap();
        let one = Series::constant(OmegaScalar::one(&f3, 20), VarTag::Z);
        assert!(e0.series.eq_at_joint_prec(&one));
    }

    #[test]
    fn invariant_derivative_basics() {
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::cyclotomic(&f3).unwrap();
        // d(t_LT)/dt = 1
        let log = g.log_lt(12);
        let d = g.invariant_derivative(&log);
        let one = Series::constant(OmegaScalar::one(&f3, 16), VarTag::Z);
        assert!(d.truncate_pi(16).eq_at_joint_prec(&one.truncate_pi(16)));
        // eta derivative: d eta(x)/dt = Omega x eta(x)
        let x = FieldElem::from_i64(&f3, 4, WIDE_PREC);
        let eta = g.eta(&x, 10).unwrap().series;
        let lhs = g.invariant_derivative(&eta);
        let rhs = eta.map_coeffs(|c| c.scale(&x).omega_shift(1));
        assert!(lhs.truncate_pi(12).eq_at_joint_prec(&rhs.truncate_pi(12)));
    }

    #[test]
    fn t_lt_product_formula() {
        // t_LT = Z * prod_{mu>=1} Q_mu / pi to truncation
        let f3 = qp(3, 30).unwrap();
        let g = FormalGroup::special(&f3);
        let trunc = 10i64;
        let pi_inv = FieldElem::from_i64(&f3, 3, WIDE_PREC).inv().unwrap();
        // [pi^m](Z)/pi^m = Z prod_{mu<=m} Q_mu/pi; iterate composition
        let mut frob_m = Series::monomial(OmegaScalar::one(&f3, WIDE_PREC), 1, VarTag::Z);
        let m = 40;
        let mut pw = FieldElem::one(&f3, WIDE_PREC);
        for _ in 0..m {
            frob_m = g.frobenius().compose(&frob_m).unwrap().truncate_order(trunc);
            pw = pw.mul(&pi_inv);
        }
        let acc = frob_m.scale(&OmegaScalar::from_elem(pw));
        let log = g.log_lt(trunc);
        assert!(acc.truncate_pi(20).eq_at_joint_prec(&log.truncate_pi(20)));
    }
}
