//! Weight sequences and their fixed-point calculus.
//!
//! A weight sequence `q = (q_1, q_2, ...)` gives a face of degree `2i` the
//! weight `q_i`; the vertex map carries weight `q_0 = 1`. Everything downstream
//! (offspring laws, scaling constants, tuning) is driven by the generating
//! function
//!
//! ```text
//! f_q(x) = sum_{k >= 0} N(k + 1) q_{k+1} x^k,    N(k) = binom(2k - 1, k - 1)
//! ```
//!
//! and the fixed-point equation `f_q(x) = 1 - 1/x` on `(1, R_q]`.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Upper end of the root bracket when `f_q` is entire.
pub const X_MAX: f64 = 1e6;
/// Default criticality tolerance on `|Z^2 f'(Z) - 1|`.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Cumulative mass at which an infinite offspring pmf is cut.
pub const PMF_MASS_CUTOFF: f64 = 1.0 - 1e-12;

const MAX_RATIONAL_DENOMINATOR: u64 = 1_000_000;

/// `N(k) = binom(2k - 1, k - 1)`, the number of labelings around a face of degree `2k`.
pub fn n_coeff(k: u64) -> Result<BigUint> {
    if k == 0 {
        return Err(Error::InvalidArgument("N(k) is defined for k >= 1".into()));
    }
    // binom(2k-1, k-1) by the multiplicative formula, exact at every step.
    let mut acc = BigUint::one();
    for j in 1..k {
        acc = acc * BigUint::from(k + j) / BigUint::from(j);
    }
    Ok(acc)
}

/// Floating-point `N(k)`; overflows to infinity for `k` beyond ~510.
pub fn n_coeff_f64(k: u64) -> f64 {
    assert!(k >= 1, "N(k) is defined for k >= 1");
    let mut acc = 1.0f64;
    for j in 1..k {
        acc *= (k + j) as f64 / j as f64;
    }
    acc
}

pub(crate) fn n_coeff_rational(k: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n_coeff(k).expect("k >= 1")))
}

/// Parses `"p/q"`, `"p"` or a plain decimal such as `"0.125"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("cannot parse rational '{s}'"));
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.starts_with('-');
        let int_part = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            BigInt::from_str(int).map_err(|_| bad())?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part = BigRational::new(BigInt::from_str(frac).map_err(|_| bad())?, scale);
        let int_part = BigRational::from_integer(int_part);
        return Ok(if negative {
            int_part - frac_part
        } else {
            int_part + frac_part
        });
    }
    BigInt::from_str(s).map(BigRational::from_integer).map_err(|_| bad())
}

pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Best rational approximation with denominator at most `max_den`, by continued fractions.
pub(crate) fn rational_approximation(x: f64, max_den: u64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut y = x;
    for _ in 0..64 {
        let a = y.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i128;
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > max_den as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = y - a as f64;
        if frac.abs() < 1e-15 {
            break;
        }
        y = 1.0 / frac;
    }
    if k1 == 0 {
        return None;
    }
    Some(BigRational::new(BigInt::from(h1), BigInt::from(k1)))
}

fn rational_sqrt(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    (&n * &n == *r.numer() && &d * &d == *r.denom()).then(|| BigRational::new(n, d))
}

/// A nonnegative weight: a float, optionally backed by an exact rational.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    value: f64,
    exact: Option<BigRational>,
}

impl Weight {
    pub fn real(value: f64) -> Self {
        Weight { value, exact: None }
    }

    pub fn exact(r: BigRational) -> Self {
        Weight {
            value: rational_to_f64(&r),
            exact: Some(r),
        }
    }

    pub fn ratio(p: i64, q: i64) -> Self {
        Weight::exact(BigRational::new(p.into(), q.into()))
    }

    pub fn zero() -> Self {
        Weight::exact(BigRational::zero())
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0.0 && self.exact.as_ref().is_none_or(|r| r.is_zero())
    }

    pub fn mul(&self, other: &Weight) -> Weight {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => Weight::exact(a * b),
            _ => Weight::real(self.value * other.value),
        }
    }

    pub fn div(&self, other: &Weight) -> Weight {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) if !b.is_zero() => Weight::exact(a / b),
            _ => Weight::real(self.value / other.value),
        }
    }

    pub fn powi(&self, n: u32) -> Weight {
        match &self.exact {
            Some(r) => Weight::exact(num_traits::pow(r.clone(), n as usize)),
            None => Weight::real(self.value.powi(n as i32)),
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(r) => f.write_str(&format_rational(r)),
            None => write!(f, "{}", self.value),
        }
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.exact {
            Some(r) => s.serialize_str(&format_rational(r)),
            None => s.serialize_f64(self.value),
        }
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Weight::real(v)),
            Raw::Str(s) => parse_rational(&s)
                .map(Weight::exact)
                .map_err(serde::de::Error::custom),
        }
    }
}

/// Tail `q_i = coeff * beta^i` for every index past the stored prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricTail {
    pub beta: Weight,
    pub coeff: Weight,
}

/// Representation tag of a [`WeightSequence`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    FiniteSupport,
    GeometricTail,
}

/// The weights `(q_1, ..., q_K)` with an optional geometric tail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSequence {
    terms: Vec<Weight>,
    tail: Option<GeometricTail>,
}

impl<'de> Deserialize<'de> for WeightSequence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            terms: Vec<Weight>,
            #[serde(default)]
            tail: Option<GeometricTail>,
        }
        let raw = Raw::deserialize(d)?;
        WeightSequence::new(raw.terms, raw.tail).map_err(serde::de::Error::custom)
    }
}

impl WeightSequence {
    pub fn new(terms: Vec<Weight>, tail: Option<GeometricTail>) -> Result<Self> {
        let mut terms = terms;
        for (i, w) in terms.iter().enumerate() {
            if !(w.value >= 0.0 && w.value.is_finite()) {
                return Err(Error::InvalidWeights(format!("q_{} = {} is not a nonnegative finite number", i + 1, w)));
            }
        }
        if let Some(t) = &tail {
            if !(t.beta.value >= 0.0 && t.beta.value.is_finite()) {
                return Err(Error::InvalidWeights(format!("tail beta = {} must be finite and >= 0", t.beta)));
            }
            if !(t.coeff.value >= 0.0 && t.coeff.value.is_finite()) {
                return Err(Error::InvalidWeights(format!("tail coeff = {} must be finite and >= 0", t.coeff)));
            }
        }
        let tail = tail.filter(|t| !t.beta.is_zero() && !t.coeff.is_zero());
        if tail.is_none() {
            while terms.last().is_some_and(Weight::is_zero) {
                terms.pop();
            }
        }
        let seq = WeightSequence { terms, tail };
        if tail_or_prefix_has_higher_face(&seq) {
            Ok(seq)
        } else {
            Err(Error::InvalidWeights("some q_i with i > 1 must be positive".into()))
        }
    }

    pub fn finite(terms: Vec<Weight>) -> Result<Self> {
        Self::new(terms, None)
    }

    /// `alpha * delta_kappa`: only faces of degree `2 kappa`.
    pub fn single_degree(kappa: usize, alpha: Weight) -> Result<Self> {
        if kappa < 1 {
            return Err(Error::InvalidWeights("kappa must be >= 1".into()));
        }
        let mut terms = vec![Weight::zero(); kappa];
        terms[kappa - 1] = alpha;
        Self::finite(terms)
    }

    /// `q_i = coeff * beta^i` for all `i >= 1`.
    pub fn geometric(beta: Weight, coeff: Weight) -> Result<Self> {
        Self::new(Vec::new(), Some(GeometricTail { beta, coeff }))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weight sequences always serialize")
    }

    pub fn representation(&self) -> Representation {
        if self.tail.is_some() {
            Representation::GeometricTail
        } else {
            Representation::FiniteSupport
        }
    }

    pub fn terms(&self) -> &[Weight] {
        &self.terms
    }

    pub fn tail(&self) -> Option<&GeometricTail> {
        self.tail.as_ref()
    }

    /// `q_i` for `i >= 1`.
    pub fn q(&self, i: usize) -> Weight {
        assert!(i >= 1, "weights are indexed from 1");
        if i <= self.terms.len() {
            return self.terms[i - 1].clone();
        }
        match &self.tail {
            Some(t) => t.coeff.mul(&t.beta.powi(i as u32)),
            None => Weight::zero(),
        }
    }

    /// Largest index with a positive weight, `None` for an infinite support.
    pub fn support_max(&self) -> Option<usize> {
        if self.tail.is_some() {
            return None;
        }
        Some(self.terms.len())
    }

    pub fn is_exact(&self) -> bool {
        self.terms.iter().all(|w| w.exact.is_some())
            && self
                .tail
                .as_ref()
                .is_none_or(|t| t.beta.exact.is_some() && t.coeff.exact.is_some())
    }

    /// Radius of convergence `R_q` of `f_q` (`+inf` for finite support).
    pub fn radius_of_convergence(&self) -> f64 {
        match &self.tail {
            Some(t) => 1.0 / (4.0 * t.beta.value),
            None => f64::INFINITY,
        }
    }

    /// `alpha . q = (alpha q_i)`.
    pub fn scaled(&self, alpha: &Weight) -> Result<Self> {
        let terms = self.terms.iter().map(|w| w.mul(alpha)).collect();
        let tail = self.tail.as_ref().map(|t| GeometricTail {
            beta: t.beta.clone(),
            coeff: t.coeff.mul(alpha),
        });
        Self::new(terms, tail)
    }

    /// `beta • q = (beta^(i-1) q_i)`.
    pub fn beta_transformed(&self, beta: &Weight) -> Result<Self> {
        if beta.value <= 0.0 {
            return Err(Error::InvalidArgument("beta transform needs beta > 0".into()));
        }
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, w)| w.mul(&beta.powi(i as u32)))
            .collect();
        let tail = self.tail.as_ref().map(|t| GeometricTail {
            beta: t.beta.mul(beta),
            coeff: t.coeff.div(beta),
        });
        Self::new(terms, tail)
    }

    /// Value of `f_q`, `f_q'` or `f_q''` at `x >= 0`; `+inf` outside the disc of convergence.
    pub fn f_eval(&self, x: f64, order: u8) -> f64 {
        assert!(order <= 2, "only derivatives up to order 2 are supported");
        assert!(x >= 0.0, "f_q is evaluated on [0, inf)");
        let mut sum = 0.0;
        for (idx, w) in self.terms.iter().enumerate() {
            if w.value != 0.0 {
                sum += w.value * n_coeff_f64(idx as u64 + 1) * falling_power(x, idx as u32, order);
            }
        }
        if let Some(t) = &self.tail {
            sum += t.coeff.value * geometric_tail_series(t.beta.value, self.terms.len(), x, order);
        }
        sum
    }

    /// Exact `f_q`, `f_q'` or `f_q''` at a rational point; `None` when the weights are
    /// not exact or the tail needs an irrational square root.
    pub fn f_eval_exact(&self, x: &BigRational, order: u8) -> Option<BigRational> {
        assert!(order <= 2);
        if !self.is_exact() || x.is_negative() {
            return None;
        }
        let mut sum = BigRational::zero();
        for (idx, w) in self.terms.iter().enumerate() {
            let q = w.exact.as_ref()?;
            if !q.is_zero() {
                sum += q * n_coeff_rational(idx as u64 + 1) * falling_power_exact(x, idx as u32, order);
            }
        }
        if let Some(t) = &self.tail {
            let beta = t.beta.exact.as_ref()?;
            let coeff = t.coeff.exact.as_ref()?;
            let mut tail = geometric_closed_exact(beta, x, order)?;
            // Remove the part of the closed form already covered by the prefix.
            for idx in 0..self.terms.len() {
                let i = idx as u64 + 1;
                tail -= num_traits::pow(beta.clone(), i as usize)
                    * n_coeff_rational(i)
                    * falling_power_exact(x, idx as u32, order);
            }
            sum += coeff * tail;
        }
        Some(sum)
    }
}

fn tail_or_prefix_has_higher_face(seq: &WeightSequence) -> bool {
    seq.tail.is_some() || seq.terms.iter().skip(1).any(|w| !w.is_zero())
}

/// d^order/dx^order of x^k.
fn falling_power(x: f64, k: u32, order: u8) -> f64 {
    let order = order as u32;
    if k < order {
        return 0.0;
    }
    let coeff: f64 = (0..order).map(|j| (k - j) as f64).product();
    coeff * x.powi((k - order) as i32)
}

fn falling_power_exact(x: &BigRational, k: u32, order: u8) -> BigRational {
    let order = order as u32;
    if k < order {
        return BigRational::zero();
    }
    let coeff: i64 = (0..order).map(|j| (k - j) as i64).product();
    BigRational::from_integer(coeff.into()) * num_traits::pow(x.clone(), (k - order) as usize)
}

/// `sum_{i > skip} N(i) beta^i x^(i-1)` and its derivatives.
fn geometric_tail_series(beta: f64, skip: usize, x: f64, order: u8) -> f64 {
    let radius = 1.0 / (4.0 * beta);
    if x >= radius {
        return f64::INFINITY;
    }
    let ratio = 4.0 * beta * x;
    if ratio <= 0.5 {
        // Direct summation; terms shrink at least geometrically with ratio ~ 4 beta x.
        let mut sum = 0.0;
        let mut i = skip as u64 + 1;
        loop {
            let term = n_coeff_f64(i) * beta.powi(i as i32) * falling_power(x, (i - 1) as u32, order);
            sum += term;
            if (term.abs() <= 1e-18 * sum.abs() && i > skip as u64 + order as u64 + 2) || i > 4000 {
                break;
            }
            if !term.is_finite() {
                return f64::INFINITY;
            }
            i += 1;
        }
        return sum;
    }
    let mut total = geometric_closed(beta, x, order);
    for idx in 0..skip {
        let i = idx as u64 + 1;
        total -= n_coeff_f64(i) * beta.powi(i as i32) * falling_power(x, idx as u32, order);
    }
    total
}

/// `G(x) = ((1 - 4 beta x)^(-1/2) - 1) / (2x)` and its first two derivatives.
fn geometric_closed(beta: f64, x: f64, order: u8) -> f64 {
    let s = (1.0 - 4.0 * beta * x).powf(-0.5);
    match order {
        0 => (s - 1.0) / (2.0 * x),
        1 => beta * s.powi(3) / x - (s - 1.0) / (2.0 * x * x),
        _ => 6.0 * beta * beta * s.powi(5) / x - 2.0 * beta * s.powi(3) / (x * x) + (s - 1.0) / x.powi(3),
    }
}

fn geometric_closed_exact(beta: &BigRational, x: &BigRational, order: u8) -> Option<BigRational> {
    let four = BigRational::from_integer(4.into());
    if x.is_zero() {
        // Limits at 0: N(1) beta, N(2) beta^2, 2 N(3) beta^3.
        let b = beta.clone();
        return Some(match order {
            0 => b,
            1 => BigRational::from_integer(3.into()) * &b * &b,
            _ => BigRational::from_integer(20.into()) * &b * &b * &b,
        });
    }
    let inner = BigRational::one() - four * beta * x;
    if !inner.is_positive() {
        return None;
    }
    let s = BigRational::one() / rational_sqrt(&inner)?;
    let one = BigRational::one();
    let two = BigRational::from_integer(2.into());
    let s3 = &s * &s * &s;
    Some(match order {
        0 => (&s - &one) / (&two * x),
        1 => beta * &s3 / x - (&s - &one) / (&two * x * x),
        _ => {
            let s5 = &s3 * &s * &s;
            BigRational::from_integer(6.into()) * beta * beta * s5 / x - &two * beta * &s3 / (x * x)
                + (&s - &one) / (x * x * x)
        }
    })
}

/// Solution structure of `f_q(x) = 1 - 1/x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    NotAdmissible,
    AdmissibleSubcritical,
    Critical,
    RegularCritical,
}

impl Status {
    pub fn is_admissible(self) -> bool {
        self != Status::NotAdmissible
    }
}

mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad extended real '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub status: Status,
    /// The partition function `Z_q` (admissible sequences only).
    #[serde(rename = "Z")]
    pub z: Option<f64>,
    /// `Z_q` as `"p/q"` when it was verified to be exactly rational.
    #[serde(rename = "Z_exact")]
    pub z_exact: Option<String>,
    #[serde(rename = "R_q", with = "extended_real")]
    pub radius_of_convergence: f64,
    pub solutions: Vec<f64>,
    /// `Z^2 f'(Z)`, the mean of the two-generation offspring law.
    pub tangency: Option<f64>,
    pub tolerance: f64,
}

impl CriticalityReport {
    pub fn z_rational(&self) -> Option<BigRational> {
        self.z_exact.as_deref().and_then(|s| parse_rational(s).ok())
    }

    fn not_admissible(radius: f64, tol: f64) -> Self {
        CriticalityReport {
            status: Status::NotAdmissible,
            z: None,
            z_exact: None,
            radius_of_convergence: radius,
            solutions: Vec::new(),
            tangency: None,
            tolerance: tol,
        }
    }
}

/// Bisection for a sign change of `h` on `[lo, hi]`, `h(lo)` and `h(hi)` of opposite signs.
fn bisect(mut lo: f64, mut hi: f64, h: impl Fn(f64) -> f64) -> Result<f64> {
    let h_lo = h(lo);
    let h_hi = h(hi);
    if h_lo.is_nan() || h_hi.is_nan() {
        return Err(Error::NumericFailure(format!("NaN while bracketing on [{lo}, {hi}]")));
    }
    if h_lo.signum() == h_hi.signum() && h_lo != 0.0 && h_hi != 0.0 {
        return Err(Error::NumericFailure(format!("no sign change on [{lo}, {hi}]")));
    }
    let lo_positive = h_lo > 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-12 * lo.abs().max(1.0) * 1e-3 {
            return Ok(mid);
        }
        let v = h(mid);
        if v.is_nan() {
            return Err(Error::NumericFailure(format!("NaN at x = {mid}")));
        }
        if v == 0.0 {
            return Ok(mid);
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NumericFailure("bisection iteration budget exhausted".into()))
}

/// Largest point strictly below `radius` that is still a representable evaluation point.
fn upper_bracket(radius: f64) -> f64 {
    if radius.is_finite() {
        radius * (1.0 - 1e-15)
    } else {
        X_MAX
    }
}

pub fn classify(q: &WeightSequence) -> Result<CriticalityReport> {
    classify_with_tolerance(q, DEFAULT_TOLERANCE)
}

pub fn classify_with_tolerance(q: &WeightSequence, tol: f64) -> Result<CriticalityReport> {
    let radius = q.radius_of_convergence();
    if radius <= 1.0 {
        return Ok(CriticalityReport::not_admissible(radius, tol));
    }
    let hi = upper_bracket(radius);
    let g = |x: f64| q.f_eval(x, 0) - 1.0 + 1.0 / x;
    let dg = |x: f64| q.f_eval(x, 1) - 1.0 / (x * x);

    // g is strictly convex on (1, R): locate its minimum through the sign of g'.
    let x_min = if dg(1.0) >= 0.0 {
        1.0
    } else if dg(hi) <= 0.0 {
        hi
    } else {
        bisect(1.0, hi, dg)?
    };
    let g_min = g(x_min);
    if g_min.is_nan() {
        return Err(Error::NumericFailure(format!("f_q undefined at {x_min}")));
    }
    let curvature = q.f_eval(x_min, 2) + 2.0 / x_min.powi(3);
    let noise = 64.0 * f64::EPSILON * (1.0 + q.f_eval(x_min, 0).abs() + 1.0 / x_min);
    let band = (tol * tol / (2.0 * curvature * x_min.powi(4))).max(noise);

    if g_min > band || x_min == 1.0 {
        return Ok(CriticalityReport::not_admissible(radius, tol));
    }
    let (z, solutions) = if g_min.abs() <= band {
        (x_min, vec![x_min])
    } else {
        let z1 = bisect(1.0, x_min, g)?;
        let mut sols = vec![z1];
        let g_hi = g(hi);
        if g_hi > 0.0 || g_hi.is_infinite() {
            sols.push(bisect(x_min, hi, |x| {
                let v = g(x);
                if v.is_infinite() {
                    1.0
                } else {
                    v
                }
            })?);
        }
        (z1, sols)
    };
    let tangency = z * z * q.f_eval(z, 1);
    let status = if (tangency - 1.0).abs() <= tol {
        if z < hi {
            Status::RegularCritical
        } else {
            Status::Critical
        }
    } else {
        Status::AdmissibleSubcritical
    };
    let z_exact = exact_fixed_point(q, z);
    Ok(CriticalityReport {
        status,
        z: Some(z),
        z_exact: z_exact.as_ref().map(format_rational),
        radius_of_convergence: radius,
        solutions,
        tangency: Some(tangency),
        tolerance: tol,
    })
}

/// Recovers `Z` as an exact rational when the weights are rational and the fixed point is.
fn exact_fixed_point(q: &WeightSequence, z: f64) -> Option<BigRational> {
    if !q.is_exact() {
        return None;
    }
    let candidate = rational_approximation(z, MAX_RATIONAL_DENOMINATOR)?;
    if (rational_to_f64(&candidate) - z).abs() > 1e-9 * z {
        return None;
    }
    let f = q.f_eval_exact(&candidate, 0)?;
    (f == BigRational::one() - candidate.recip()).then_some(candidate)
}

/// Offspring laws of the two-type tree carried by a Boltzmann map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingLaw {
    /// `mu_0(k) = (1 - a) a^k` with `a = f_q(Z_q)`.
    pub mu0_param: f64,
    pub mu1_pmf: Vec<f64>,
    /// Length at which an infinite pmf was truncated (cumulative mass `1 - 1e-12`).
    pub mu1_truncated_at: Option<usize>,
    pub m0: f64,
    pub m1: f64,
    pub var0: f64,
    pub var1: f64,
}

impl BranchingLaw {
    pub fn mu0(&self, k: usize) -> f64 {
        (1.0 - self.mu0_param) * self.mu0_param.powi(k as i32)
    }

    pub fn mu1(&self, k: usize) -> f64 {
        self.mu1_pmf.get(k).copied().unwrap_or(0.0)
    }

    /// `m0 m1`, the mean of the grandchildren law.
    pub fn mean_product(&self) -> f64 {
        self.m0 * self.m1
    }

    pub fn is_critical(&self, tol: f64) -> bool {
        (self.mean_product() - 1.0).abs() <= tol
    }

    /// Values of `k` with `mu_1(k) > 0`.
    pub fn mu1_support(&self) -> Vec<usize> {
        self.mu1_pmf
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(k, _)| k)
            .collect()
    }

    /// Exact-in-structure, float-valued law of the type counts of the tree:
    /// entry `n` is `P(#T^(0) = n)` for `white == true`, else `P(#T^(1) = n)`.
    pub fn count_pmf(&self, white: bool, n_max: usize) -> Vec<f64> {
        let a = self.mu0_param;
        let len = n_max + 1;
        // W = generating function of the tree, B = that of a black-rooted subtree.
        let mut w = vec![0.0; len];
        if white {
            if len > 1 {
                w[1] = 1.0 - a;
            }
        } else {
            w[0] = 1.0 - a;
        }
        for _ in 0..len + 1 {
            let g1 = series_compose_pmf(&self.mu1_pmf, &w, len);
            let b = if white {
                g1
            } else {
                let mut shifted = vec![0.0; len];
                shifted[1..].copy_from_slice(&g1[..len - 1]);
                shifted
            };
            // (1 - a) / (1 - a B)
            let denom: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(i, v)| if i == 0 { 1.0 - a * v } else { -a * v })
                .collect();
            let mut inv = series_inverse(&denom, len);
            inv.iter_mut().for_each(|v| *v *= 1.0 - a);
            w = if white {
                let mut shifted = vec![0.0; len];
                shifted[1..].copy_from_slice(&inv[..len - 1]);
                shifted
            } else {
                inv
            };
        }
        w
    }
}

fn series_mul(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, x) in a.iter().enumerate().take(len) {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn series_inverse(a: &[f64], len: usize) -> Vec<f64> {
    let mut inv = vec![0.0; len];
    inv[0] = 1.0 / a[0];
    for n in 1..len {
        let s: f64 = (1..=n).map(|k| a.get(k).copied().unwrap_or(0.0) * inv[n - k]).sum();
        inv[n] = -s / a[0];
    }
    inv
}

/// `sum_k pmf[k] W^k` truncated to `len` coefficients (Horner).
fn series_compose_pmf(pmf: &[f64], w: &[f64], len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in pmf.iter().rev() {
        acc = series_mul(&acc, w, len);
        acc[0] += p;
    }
    acc
}

/// Offspring laws from the fixed point of an admissible sequence.
pub fn derive_branching(q: &WeightSequence, report: &CriticalityReport) -> Result<BranchingLaw> {
    let z = match (report.status, report.z) {
        (Status::NotAdmissible, _) | (_, None) => return Err(Error::NotAdmissible),
        (_, Some(z)) => z,
    };
    let fz = q.f_eval(z, 0);
    let f1 = q.f_eval(z, 1);
    let f2 = q.f_eval(z, 2);
    let mut pmf = Vec::new();
    let mut truncated_at = None;
    match q.support_max() {
        Some(max) => {
            for k in 0..max {
                pmf.push(mu1_term(q, z, fz, k));
            }
        }
        None => {
            let mut mass = 0.0;
            let mut k = 0;
            while mass < PMF_MASS_CUTOFF {
                let p = mu1_term(q, z, fz, k);
                if !p.is_finite() {
                    return Err(Error::NumericFailure(format!("mu_1({k}) is not finite")));
                }
                pmf.push(p);
                mass += p;
                k += 1;
                if k > 1_000_000 {
                    return Err(Error::NumericFailure("mu_1 tail does not decay".into()));
                }
            }
            truncated_at = Some(pmf.len());
        }
    }
    let m1 = z * f1 / fz;
    Ok(BranchingLaw {
        mu0_param: fz,
        mu1_pmf: pmf,
        mu1_truncated_at: truncated_at,
        m0: z - 1.0,
        m1,
        var0: z * (z - 1.0),
        var1: z * z * f2 / fz + m1 - m1 * m1,
    })
}

fn mu1_term(q: &WeightSequence, z: f64, fz: f64, k: usize) -> f64 {
    let qk = q.q(k + 1).value();
    if qk == 0.0 {
        return 0.0;
    }
    // z^k N(k+1) q_{k+1} / f(z), in log space to survive large k.
    let log = k as f64 * z.ln() + n_coeff_f64(k as u64 + 1).ln() + qk.ln() - fz.ln();
    log.exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub rho: f64,
    /// Height constant of the two-type tree.
    pub sigma: f64,
    /// Label constant of the two-type tree.
    #[serde(rename = "Sigma")]
    pub label_sigma: f64,
    #[serde(rename = "C_face")]
    pub c_face: f64,
    #[serde(rename = "C_vertex")]
    pub c_vertex: f64,
    #[serde(rename = "D_face")]
    pub d_face: f64,
}

/// `sigma` from the offspring moments.
pub fn height_sigma_from_moments(law: &BranchingLaw) -> f64 {
    0.5 * (law.var0 * (1.0 + law.m1) / law.m0 + law.var1 * (1.0 + law.m0) / law.m1).sqrt()
}

/// `Sigma` from the offspring pmf and the label variances `k(k+1)/3` around black vertices.
pub fn label_sigma_from_pmf(law: &BranchingLaw) -> f64 {
    let sum: f64 = law
        .mu1_pmf
        .iter()
        .enumerate()
        .map(|(k, p)| p / law.m1 * (k * (k + 1)) as f64 / 3.0)
        .sum();
    (0.5 * sum).sqrt()
}

pub fn scaling_constants(q: &WeightSequence, report: &CriticalityReport) -> Result<ScalingConstants> {
    if report.status != Status::RegularCritical {
        return Err(Error::NotRegularCritical(report.status));
    }
    let z = report.z.expect("regular critical reports carry Z");
    let law = derive_branching(q, report)?;
    let rho = 2.0 + z.powi(3) * q.f_eval(z, 2);

    let sigma = (z * rho).sqrt() / 2.0;
    let sigma_moments = height_sigma_from_moments(&law);
    if ((sigma - sigma_moments) / sigma).abs() > 1e-9 {
        return Err(Error::ConsistencyFailure(format!(
            "sigma routes disagree: closed form {sigma}, moments {sigma_moments}"
        )));
    }
    let label_sigma = (rho / 6.0).sqrt();
    let label_sigma_series = label_sigma_from_pmf(&law);
    if ((label_sigma - label_sigma_series) / label_sigma).abs() > 1e-6 {
        return Err(Error::ConsistencyFailure(format!(
            "Sigma routes disagree: closed form {label_sigma}, series {label_sigma_series}"
        )));
    }
    Ok(ScalingConstants {
        rho,
        sigma,
        label_sigma,
        c_face: (4.0 * rho / (9.0 * (z - 1.0))).powf(0.25),
        c_vertex: (4.0 * rho / 9.0).powf(0.25),
        d_face: 4.0 / (rho * (z - 1.0)).sqrt(),
    })
}

/// Result of tuning a sequence onto the critical line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub factor: f64,
    pub factor_exact: Option<String>,
    /// Partition function of the tuned sequence.
    pub z: f64,
    pub z_exact: Option<String>,
}

/// `alpha_c` with `alpha_c . q` regular critical.
pub fn tune_alpha(q: &WeightSequence) -> Result<Tuning> {
    let radius = q.radius_of_convergence();
    if radius <= 1.0 {
        return Err(Error::NotTunable(format!("R_q = {radius} <= 1")));
    }
    // Tangency of alpha f and 1 - 1/z, with alpha eliminated: z(z-1) f'(z) = f(z).
    let phi = |z: f64| {
        let d = q.f_eval(z, 1);
        if d.is_infinite() {
            return f64::INFINITY;
        }
        z * (z - 1.0) * d - q.f_eval(z, 0)
    };
    let hi = upper_bracket(radius);
    if phi(hi) <= 0.0 {
        return Err(Error::NotTunable("tangency falls at or beyond R_q".into()));
    }
    let z = bisect(1.0, hi, phi)?;
    let factor = 1.0 / (z * z * q.f_eval(z, 1));
    let exact = q.is_exact().then(|| rational_approximation(z, MAX_RATIONAL_DENOMINATOR)).flatten().and_then(|zr| {
        let f = q.f_eval_exact(&zr, 0)?;
        let d = q.f_eval_exact(&zr, 1)?;
        let one = BigRational::one();
        (&zr * (&zr - &one) * &d == f && !d.is_zero()).then(|| ((&zr * &zr * d).recip(), zr))
    });
    Ok(Tuning {
        factor,
        factor_exact: exact.as_ref().map(|(a, _)| format_rational(a)),
        z,
        z_exact: exact.as_ref().map(|(_, z)| format_rational(z)),
    })
}

/// `beta_c` with `beta_c • q` regular critical.
pub fn tune_beta(q: &WeightSequence) -> Result<Tuning> {
    // With y = beta z: f(y) + y f'(y) = 1 and beta = y^2 f'(y).
    let q1 = q.q(1).value();
    if q1 >= 1.0 {
        return Err(Error::NotTunable(format!("q_1 = {q1} >= 1 leaves no room for a fixed point")));
    }
    let psi = |y: f64| {
        let d = q.f_eval(y, 1);
        if d.is_infinite() {
            return f64::INFINITY;
        }
        q.f_eval(y, 0) + y * d - 1.0
    };
    let radius = q.radius_of_convergence();
    let hi = upper_bracket(radius);
    if psi(hi) <= 0.0 {
        return Err(Error::NotTunable("tangency falls at or beyond R_q".into()));
    }
    let y = bisect(0.0, hi, psi)?;
    let factor = y * y * q.f_eval(y, 1);
    if factor <= 0.0 {
        return Err(Error::NotTunable("degenerate tangency at y = 0".into()));
    }
    let exact = q.is_exact().then(|| rational_approximation(y, MAX_RATIONAL_DENOMINATOR)).flatten().and_then(|yr| {
        let f = q.f_eval_exact(&yr, 0)?;
        let d = q.f_eval_exact(&yr, 1)?;
        (f + &yr * &d == BigRational::one() && !d.is_zero()).then(|| {
            let beta = &yr * &yr * d;
            let z = &yr / &beta;
            (beta, z)
        })
    });
    Ok(Tuning {
        factor,
        factor_exact: exact.as_ref().map(|(b, _)| format_rational(b)),
        z: y / factor,
        z_exact: exact.as_ref().map(|(_, z)| format_rational(z)),
    })
}
