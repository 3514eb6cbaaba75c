//! Empirical verification by prime sweep: reduce the curve and point mod `p`,
//! compute the exact order of the reduced point by baby-step/giant-step in
//! the Hasse interval, and report the proportion of primes whose point order
//! is coprime to `m`.
//!
//! A point with `p` in a coordinate denominator reduces to the identity
//! (order 1, hence coprime to everything); primes dividing the model
//! discriminant are excluded from the count. Per-prime work is `O(p^{1/4})`
//! group operations, which keeps a sweep to 10⁶ at desk scale.

use crate::modmat::inv_mod_u64;
use crate::rational::{decimal_string, parse_rational, ExactRational, RationalJson};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Cap on sweep limits: keeps the sieve and the per-prime arithmetic at
/// desk scale.
pub const MAX_SWEEP_LIMIT: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmpiricalError {
    SingularCurve,
    PointNotOnCurve,
    /// Denominator valuations at p do not have the (−2k, −3k) shape.
    BadValuationPattern {
        p: u64,
    },
    /// The prime divides the model discriminant.
    BadReduction {
        p: u64,
    },
    NotAPrime(u64),
    IdentityInput,
    /// No annihilator found in the Hasse window (arithmetic bug).
    NoAnnihilator {
        p: u64,
    },
    LimitTooSmall(u64),
    LimitTooLarge(u64),
    Parse(String),
}

impl fmt::Display for EmpiricalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmpiricalError::SingularCurve => write!(f, "curve has zero discriminant"),
            EmpiricalError::PointNotOnCurve => write!(f, "point does not satisfy the curve"),
            EmpiricalError::BadValuationPattern { p } => {
                write!(
                    f,
                    "coordinate valuations at {p} violate the good-reduction shape"
                )
            }
            EmpiricalError::BadReduction { p } => write!(f, "bad reduction at {p}"),
            EmpiricalError::NotAPrime(p) => write!(f, "{p} is not prime"),
            EmpiricalError::IdentityInput => write!(f, "point order needs a non-identity point"),
            EmpiricalError::NoAnnihilator { p } => {
                write!(f, "no annihilator in the Hasse window at {p}")
            }
            EmpiricalError::LimitTooSmall(l) => write!(f, "limit {l} is below 3"),
            EmpiricalError::LimitTooLarge(l) => {
                write!(f, "limit {l} exceeds the sweep guard {MAX_SWEEP_LIMIT}")
            }
            EmpiricalError::Parse(s) => write!(f, "config: {s}"),
        }
    }
}

impl std::error::Error for EmpiricalError {}

/// Elliptic curve over ℚ in long Weierstrass form
/// `y² + a₁xy + a₃y = x³ + a₂x² + a₄x + a₆`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveOverQ {
    pub a1: BigInt,
    pub a2: BigInt,
    pub a3: BigInt,
    pub a4: BigInt,
    pub a6: BigInt,
}

impl CurveOverQ {
    pub fn new(a: [i64; 5]) -> Result<Self, EmpiricalError> {
        let c = CurveOverQ {
            a1: BigInt::from(a[0]),
            a2: BigInt::from(a[1]),
            a3: BigInt::from(a[2]),
            a4: BigInt::from(a[3]),
            a6: BigInt::from(a[4]),
        };
        if c.discriminant().is_zero() {
            return Err(EmpiricalError::SingularCurve);
        }
        Ok(c)
    }

    /// Model discriminant via the standard b-invariants.
    pub fn discriminant(&self) -> BigInt {
        let b2 = &self.a1 * &self.a1 + 4 * &self.a2;
        let b4 = 2 * &self.a4 + &self.a1 * &self.a3;
        let b6 = &self.a3 * &self.a3 + 4 * &self.a6;
        let b8 = &self.a1 * &self.a1 * &self.a6 + 4 * &self.a2 * &self.a6
            - &self.a1 * &self.a3 * &self.a4
            + &self.a2 * &self.a3 * &self.a3
            - &self.a4 * &self.a4;
        let part: BigInt = &b2 * &b2 * &b8;
        -part - 8 * (&b4 * &b4 * &b4) - 27 * (&b6 * &b6) + 9 * &b2 * &b4 * &b6
    }

    pub fn is_good_prime(&self, p: u64) -> bool {
        !(self.discriminant() % BigInt::from(p)).is_zero()
    }
}

/// Affine rational point, satisfying the curve equation exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalPoint {
    pub x: BigRational,
    pub y: BigRational,
}

impl RationalPoint {
    pub fn satisfies(&self, curve: &CurveOverQ) -> bool {
        let CurveOverQ { a1, a2, a3, a4, a6 } = curve;
        let lhs = &self.y * &self.y
            + BigRational::from_integer(a1.clone()) * &self.x * &self.y
            + BigRational::from_integer(a3.clone()) * &self.y;
        let rhs = &self.x * &self.x * &self.x
            + BigRational::from_integer(a2.clone()) * &self.x * &self.x
            + BigRational::from_integer(a4.clone()) * &self.x
            + BigRational::from_integer(a6.clone());
        lhs == rhs
    }
}

/// Point of `E(ℚ)` including the identity, with the exact group law; used to
/// form multiples `k·α` without copying coordinates around.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QPoint {
    Identity,
    Affine(RationalPoint),
}

impl QPoint {
    pub fn affine(self) -> Option<RationalPoint> {
        match self {
            QPoint::Identity => None,
            QPoint::Affine(p) => Some(p),
        }
    }
}

fn q_neg(curve: &CurveOverQ, p: &RationalPoint) -> RationalPoint {
    let a1 = BigRational::from_integer(curve.a1.clone());
    let a3 = BigRational::from_integer(curve.a3.clone());
    RationalPoint {
        x: p.x.clone(),
        y: -&p.y - a1 * &p.x - a3,
    }
}

/// Exact addition on `E(ℚ)`.
pub fn q_add(curve: &CurveOverQ, p: &QPoint, q: &QPoint) -> QPoint {
    let (p1, p2) = match (p, q) {
        (QPoint::Identity, _) => return q.clone(),
        (_, QPoint::Identity) => return p.clone(),
        (QPoint::Affine(a), QPoint::Affine(b)) => (a, b),
    };
    let a1 = BigRational::from_integer(curve.a1.clone());
    let a2 = BigRational::from_integer(curve.a2.clone());
    let a3 = BigRational::from_integer(curve.a3.clone());
    let a4 = BigRational::from_integer(curve.a4.clone());
    if p1.x == p2.x && p2.y == q_neg(curve, p1).y {
        return QPoint::Identity;
    }
    let lambda = if p1 == p2 {
        let num = BigRational::from_integer(BigInt::from(3)) * &p1.x * &p1.x
            + BigRational::from_integer(BigInt::from(2)) * &a2 * &p1.x
            + &a4
            - &a1 * &p1.y;
        let den = BigRational::from_integer(BigInt::from(2)) * &p1.y + &a1 * &p1.x + &a3;
        num / den
    } else {
        (&p2.y - &p1.y) / (&p2.x - &p1.x)
    };
    let nu = &p1.y - &lambda * &p1.x;
    let x3 = &lambda * &lambda + &a1 * &lambda - &a2 - &p1.x - &p2.x;
    let y3 = -(&lambda + &a1) * &x3 - nu - a3;
    QPoint::Affine(RationalPoint { x: x3, y: y3 })
}

/// `k · P` on `E(ℚ)` by double-and-add.
pub fn q_scalar_mul(curve: &CurveOverQ, p: &QPoint, k: u64) -> QPoint {
    let mut acc = QPoint::Identity;
    let mut base = p.clone();
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            acc = q_add(curve, &acc, &base);
        }
        base = q_add(curve, &base, &base);
        k >>= 1;
    }
    acc
}

/// Outcome of reducing a rational point mod p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// p divides the model discriminant.
    Skip,
    /// The point reduces to the identity (p in a coordinate denominator).
    Identity,
    Affine(u64, u64),
}

fn valuation_big(n: &BigInt, p: u64) -> u32 {
    let p = BigInt::from(p);
    let mut n = n.clone();
    let mut v = 0;
    while !n.is_zero() && (&n % &p).is_zero() {
        n /= &p;
        v += 1;
    }
    v
}

fn mod_u64(n: &BigInt, p: u64) -> u64 {
    n.mod_floor(&BigInt::from(p)).to_u64().expect("reduced")
}

/// Reduces a rational point mod p: `Skip` at bad primes, `Identity` when a
/// denominator is divisible by p (then the valuations must be `(−2k, −3k)`),
/// otherwise the affine reduction.
pub fn reduce_point(
    curve: &CurveOverQ,
    point: &RationalPoint,
    p: u64,
) -> Result<Reduction, EmpiricalError> {
    if !crate::modmat::is_prime_u64(p) {
        return Err(EmpiricalError::NotAPrime(p));
    }
    if !curve.is_good_prime(p) {
        return Ok(Reduction::Skip);
    }
    let vx = valuation_big(point.x.denom(), p);
    let vy = valuation_big(point.y.denom(), p);
    if vx > 0 || vy > 0 {
        if !vx.is_multiple_of(2) || vy != 3 * (vx / 2) {
            return Err(EmpiricalError::BadValuationPattern { p });
        }
        return Ok(Reduction::Identity);
    }
    let den_x = mod_u64(point.x.denom(), p);
    let den_y = mod_u64(point.y.denom(), p);
    let x = mulmod(
        mod_u64(point.x.numer(), p),
        inv_mod_u64(den_x, p).expect("unit denominator"),
        p,
    );
    let y = mulmod(
        mod_u64(point.y.numer(), p),
        inv_mod_u64(den_y, p).expect("unit denominator"),
        p,
    );
    Ok(Reduction::Affine(x, y))
}

#[inline]
fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

/// Point of `E(𝔽_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FqPoint {
    Identity,
    Affine(u64, u64),
}

/// Reduction of a curve at a good prime, coefficients mod p.
#[derive(Debug, Clone, Copy)]
pub struct CurveModP {
    pub p: u64,
    a: [u64; 5],
}

impl CurveModP {
    pub fn new(curve: &CurveOverQ, p: u64) -> Result<Self, EmpiricalError> {
        if !crate::modmat::is_prime_u64(p) {
            return Err(EmpiricalError::NotAPrime(p));
        }
        if !curve.is_good_prime(p) {
            return Err(EmpiricalError::BadReduction { p });
        }
        Ok(CurveModP {
            p,
            a: [
                mod_u64(&curve.a1, p),
                mod_u64(&curve.a2, p),
                mod_u64(&curve.a3, p),
                mod_u64(&curve.a4, p),
                mod_u64(&curve.a6, p),
            ],
        })
    }

    pub fn on_curve(&self, pt: FqPoint) -> bool {
        match pt {
            FqPoint::Identity => true,
            FqPoint::Affine(x, y) => {
                let p = self.p;
                let [a1, a2, a3, a4, a6] = self.a;
                let lhs = (mulmod(y, y, p) + mulmod(a1, mulmod(x, y, p), p) + mulmod(a3, y, p)) % p;
                let x2 = mulmod(x, x, p);
                let rhs = (mulmod(x2, x, p) + mulmod(a2, x2, p) + mulmod(a4, x, p) + a6 % p) % p;
                lhs == rhs
            }
        }
    }

    pub fn neg(&self, pt: FqPoint) -> FqPoint {
        match pt {
            FqPoint::Identity => FqPoint::Identity,
            FqPoint::Affine(x, y) => {
                let p = self.p;
                let [a1, _, a3, _, _] = self.a;
                FqPoint::Affine(x, (3 * p - y - mulmod(a1, x, p) - a3) % p)
            }
        }
    }

    pub fn add(&self, pt1: FqPoint, pt2: FqPoint) -> FqPoint {
        let p = self.p;
        let [a1, a2, a3, a4, _] = self.a;
        let ((x1, y1), (x2, y2)) = match (pt1, pt2) {
            (FqPoint::Identity, q) => return q,
            (q, FqPoint::Identity) => return q,
            (FqPoint::Affine(x1, y1), FqPoint::Affine(x2, y2)) => ((x1, y1), (x2, y2)),
        };
        if x1 == x2 && (y1 + y2 + mulmod(a1, x1, p) + a3).is_multiple_of(p) {
            return FqPoint::Identity;
        }
        let lambda = if (x1, y1) == (x2, y2) {
            let num = (3 * mulmod(x1, x1, p) % p + 2 * mulmod(a2, x1, p) % p + a4 % p + p * 4
                - mulmod(a1, y1, p))
                % p;
            let den = (2 * y1 + mulmod(a1, x1, p) + a3) % p;
            mulmod(num, inv_mod_u64(den, p).expect("non-vertical tangent"), p)
        } else {
            let num = (y2 + p - y1) % p;
            let den = (x2 + p - x1) % p;
            mulmod(num, inv_mod_u64(den, p).expect("distinct x"), p)
        };
        let nu = (y1 + p - mulmod(lambda, x1, p)) % p;
        let x3 = (mulmod(lambda, lambda, p) + mulmod(a1, lambda, p) + 5 * p - a2 % p - x1 - x2) % p;
        let y3 = (3 * p - mulmod((lambda + a1) % p, x3, p) - nu - a3 % p) % p;
        FqPoint::Affine(x3, y3)
    }

    pub fn scalar_mul(&self, pt: FqPoint, k: u64) -> FqPoint {
        let mut acc = FqPoint::Identity;
        let mut base = pt;
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = self.add(acc, base);
            }
            base = self.add(base, base);
            k >>= 1;
        }
        acc
    }
}

/// Exact order of a non-identity point: find an annihilator in the Hasse
/// interval `[p+1−2√p, p+1+2√p]` by baby-step/giant-step, then strip prime
/// factors while the quotient still annihilates. Any annihilator yields the
/// true order via stripping.
pub fn point_order(curve: &CurveModP, pt: FqPoint) -> Result<u64, EmpiricalError> {
    if pt == FqPoint::Identity {
        return Err(EmpiricalError::IdentityInput);
    }
    let p = curve.p;
    let w = (4 * p).isqrt();
    let n0 = p + 1 - w;
    let steps = (2 * w).isqrt() + 1;
    // baby table: j·P for 0 ≤ j < steps
    let mut table = std::collections::HashMap::with_capacity(steps as usize);
    let mut walk = FqPoint::Identity;
    for j in 0..steps {
        table.entry(walk).or_insert(j);
        walk = curve.add(walk, pt);
    }
    let giant = curve.neg(curve.scalar_mul(pt, steps));
    // looking for n0·P + i·steps·P = j·P, i.e. N = n0 + i·steps − j... flip:
    // we search k with k·P = −(n0·P): then N = n0 + k annihilates.
    let mut probe = curve.neg(curve.scalar_mul(pt, n0));
    let mut annihilator = None;
    'outer: for i in 0..=(2 * w / steps + 1) {
        if let Some(&j) = table.get(&probe) {
            annihilator = Some(n0 + i * steps + j);
            break 'outer;
        }
        probe = curve.add(probe, giant);
    }
    let mut n = annihilator.ok_or(EmpiricalError::NoAnnihilator { p })?;
    debug_assert_eq!(curve.scalar_mul(pt, n), FqPoint::Identity);
    for (q, _) in factor_u64(n) {
        while n % q == 0 && curve.scalar_mul(pt, n / q) == FqPoint::Identity {
            n /= q;
        }
    }
    Ok(n)
}

pub(crate) fn factor_u64(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            let mut e = 0;
            while n.is_multiple_of(d) {
                n /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Primes up to `limit` inclusive, by sieve of Eratosthenes.
pub fn sieve_primes(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            primes.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}

/// Result of an empirical density sweep.
#[derive(Debug, Clone)]
pub struct EmpiricalReport {
    pub label: Option<String>,
    pub m: u64,
    pub limit: u64,
    pub good_primes: u64,
    pub coprime_count: u64,
    pub estimate: ExactRational,
    pub exact: Option<ExactRational>,
    pub deviation: Option<ExactRational>,
}

impl EmpiricalReport {
    /// Attaches the exact density for comparison; deviation is absolute.
    pub fn with_exact(mut self, exact: ExactRational) -> Self {
        self.deviation = Some((&self.estimate - &exact).abs());
        self.exact = Some(exact);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ReportJson::from(self)).expect("report serializes")
    }

    /// Aligned text rendering.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        if let Some(l) = &self.label {
            s.push_str(&format!("{:<14} {}\n", "label", l));
        }
        s.push_str(&format!("{:<14} {}\n", "m", self.m));
        s.push_str(&format!("{:<14} {}\n", "limit", self.limit));
        s.push_str(&format!("{:<14} {}\n", "good primes", self.good_primes));
        s.push_str(&format!("{:<14} {}\n", "coprime order", self.coprime_count));
        s.push_str(&format!(
            "{:<14} {} = {}\n",
            "estimate",
            self.estimate,
            crate::rational::percent_string(&self.estimate, 3)
        ));
        if let Some(e) = &self.exact {
            s.push_str(&format!(
                "{:<14} {} = {}\n",
                "exact",
                e,
                crate::rational::percent_string(e, 3)
            ));
        }
        if let Some(d) = &self.deviation {
            s.push_str(&format!("{:<14} {}\n", "deviation", decimal_string(d, 4)));
        }
        s
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    m: u64,
    limit: u64,
    good_primes: u64,
    coprime_count: u64,
    estimate: ValueJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<ValueJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deviation: Option<ValueJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValueJson {
    num: String,
    den: String,
    decimal: String,
}

fn value_json(r: &ExactRational) -> ValueJson {
    let j = RationalJson::from(r);
    ValueJson {
        num: j.num,
        den: j.den,
        decimal: decimal_string(r, 10),
    }
}

impl From<&EmpiricalReport> for ReportJson {
    fn from(r: &EmpiricalReport) -> Self {
        ReportJson {
            label: r.label.clone(),
            m: r.m,
            limit: r.limit,
            good_primes: r.good_primes,
            coprime_count: r.coprime_count,
            estimate: value_json(&r.estimate),
            exact: r.exact.as_ref().map(value_json),
            deviation: r.deviation.as_ref().map(value_json),
        }
    }
}

/// Sweeps all good primes up to `limit`: the fraction whose reduced point
/// order is coprime to `m` (identity reductions count as order 1).
///
/// Primes are partitioned into ranges processed independently and counts
/// merged by addition, so the result is deterministic under any parallelism.
pub fn estimate_density(
    curve: &CurveOverQ,
    point: &RationalPoint,
    m: u64,
    limit: u64,
) -> Result<EmpiricalReport, EmpiricalError> {
    if limit < 3 {
        return Err(EmpiricalError::LimitTooSmall(limit));
    }
    if limit > MAX_SWEEP_LIMIT {
        return Err(EmpiricalError::LimitTooLarge(limit));
    }
    if !point.satisfies(curve) {
        return Err(EmpiricalError::PointNotOnCurve);
    }
    let primes = sieve_primes(limit);
    let results: Result<Vec<(u64, u64)>, EmpiricalError> = primes
        .par_chunks(1024)
        .map(|chunk| {
            let mut good = 0u64;
            let mut coprime = 0u64;
            for &p in chunk {
                match reduce_point(curve, point, p)? {
                    Reduction::Skip => {}
                    Reduction::Identity => {
                        good += 1;
                        coprime += 1;
                    }
                    Reduction::Affine(x, y) => {
                        good += 1;
                        let c = CurveModP::new(curve, p)?;
                        let order = point_order(&c, FqPoint::Affine(x, y))?;
                        if order.gcd(&m) == 1 {
                            coprime += 1;
                        }
                    }
                }
            }
            Ok((good, coprime))
        })
        .collect();
    let (good, coprime) = results?
        .into_iter()
        .fold((0, 0), |(g, c), (dg, dc)| (g + dg, c + dc));
    Ok(EmpiricalReport {
        label: None,
        m,
        limit,
        good_primes: good,
        coprime_count: coprime,
        estimate: ExactRational::new(BigInt::from(coprime), BigInt::from(good.max(1))),
        exact: None,
        deviation: None,
    })
}

/// Curve/point configuration file:
/// `{"a": [a1,a2,a3,a4,a6], "point": {"x": "num/den", "y": "num/den"}, "label": "..."}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveConfig {
    pub a: [i64; 5],
    pub point: PointConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointConfig {
    pub x: String,
    pub y: String,
}

impl CurveConfig {
    pub fn from_json(data: &str) -> Result<Self, EmpiricalError> {
        serde_json::from_str(data).map_err(|e| EmpiricalError::Parse(e.to_string()))
    }

    pub fn build(&self) -> Result<(CurveOverQ, RationalPoint), EmpiricalError> {
        let curve = CurveOverQ::new(self.a)?;
        let x = parse_rational(&self.point.x).map_err(EmpiricalError::Parse)?;
        let y = parse_rational(&self.point.y).map_err(EmpiricalError::Parse)?;
        let point = RationalPoint { x, y };
        if !point.satisfies(&curve) {
            return Err(EmpiricalError::PointNotOnCurve);
        }
        Ok((curve, point))
    }
}
