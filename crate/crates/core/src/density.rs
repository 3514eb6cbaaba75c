//! Closed-form exact densities of primes whose reduction of a point has
//! order coprime to ℓ (or to a square-free m).
//!
//! For a surjective ℓ-adic image with maximal Kummer towers, the density for
//! the point `ℓᵉ·α` is
//!
//! ```text
//! Σ_{a,b ≥ 0}  μ(ℳ_ℓ(a,b)) · ℓ^{−(2a+b)} · ℓ^{min(e,a) + min(e,a+b)}
//! ```
//!
//! summed in closed form as finitely many geometric series split at the
//! `e`-threshold (no truncation in the production path). Character-restricted
//! variants replace the class measure by its restricted refinement. The
//! composite combiner multiplies per-prime densities, except for the
//! index-two entanglement `ψ·ε_z = ε_u`, where matched-sign products are
//! summed and doubled.

use crate::characters::{CharacterError, QuadraticFieldData, Sign};
use crate::classmeasure::{measure_class, ClassConstraint, MeasureError};
use crate::modmat::is_prime_u64;
use crate::rational::{decimal_string, geometric_tail, int_pow, ExactRational, RationalJson};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub enum DensityError {
    NotPrime(u64),
    NotSquareFree(u64),
    /// Exponent or override attached to a prime not dividing m.
    UnknownPrime {
        ell: u64,
        m: u64,
    },
    /// Non-maximal assumption without an override.
    MissingPerPrimeData(u64),
    /// The zero multiple of a point has no density.
    ZeroMultiple,
    /// Entangled primes need the closed-form character splits.
    OverrideUnderEntanglement(u64),
    /// A factor or result escaped [0, 1].
    ValueOutOfRange(ExactRational),
    Measure(MeasureError),
    Character(CharacterError),
}

impl fmt::Display for DensityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityError::NotPrime(l) => write!(f, "{l} is not prime"),
            DensityError::NotSquareFree(m) => write!(f, "{m} is not square-free"),
            DensityError::UnknownPrime { ell, m } => {
                write!(f, "prime {ell} does not divide m={m}")
            }
            DensityError::MissingPerPrimeData(l) => {
                write!(
                    f,
                    "prime {l}: non-maximal assumption needs a density override"
                )
            }
            DensityError::OverrideUnderEntanglement(l) => {
                write!(
                    f,
                    "prime {l} is entangled; overrides cannot supply its sign split"
                )
            }
            DensityError::ZeroMultiple => write!(f, "point multiple must be at least 1"),
            DensityError::ValueOutOfRange(v) => write!(f, "value {v} is outside [0,1]"),
            DensityError::Measure(e) => write!(f, "{e}"),
            DensityError::Character(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DensityError {}

impl From<MeasureError> for DensityError {
    fn from(e: MeasureError) -> Self {
        DensityError::Measure(e)
    }
}

impl From<CharacterError> for DensityError {
    fn from(e: CharacterError) -> Self {
        DensityError::Character(e)
    }
}

/// Exact sum of the density series; `constraint` restricts each class.
///
/// Everything beyond `cut = max(e, 4)` is a plain geometric tail: the point
/// multiplier is pinned at its ceiling and every character factor is
/// constant there.
fn dens_series(
    ell: u64,
    e: u32,
    constraint: Option<&ClassConstraint>,
) -> Result<ExactRational, DensityError> {
    if !is_prime_u64(ell) {
        return Err(DensityError::NotPrime(ell));
    }
    let factor = |a: u32, b: u32| -> Result<ExactRational, MeasureError> {
        match constraint {
            None => Ok(ExactRational::one()),
            Some(c) => crate::classmeasure::class_char_factor(ell, c, a, b),
        }
    };
    let cut = e.max(4);
    let l = ell;
    let mut total = ExactRational::zero();
    for a in 0..=cut {
        for b in 0..=cut {
            let weight = int_pow(l, -((2 * a + b) as i64));
            let mult = int_pow(l, (e.min(a) + e.min(a + b)) as i64);
            total += factor(a, b)? * measure_class(l, a, b) * weight * mult;
        }
        // b > cut: μ(a,b) = K_a ℓ^{-b}, multiplier ℓ^{min(e,a)+e}
        let k_a = if a == 0 {
            measure_class(l, 0, 1) * int_pow(l, 1)
        } else {
            (ExactRational::one() + int_pow(l, -1)) * int_pow(l, -(4 * a as i64))
        };
        let tail_b = factor(a, cut + 1)?
            * k_a
            * int_pow(l, e.min(a) as i64 + e as i64 - 2 * a as i64)
            * geometric_tail(&int_pow(l, -2), cut + 1);
        total += tail_b;
    }
    // a > cut: multiplier ℓ^{2e}, character factors constant
    let f0 = factor(cut + 1, 0)?;
    let f1 = factor(cut + 1, 1)?;
    let tail_a = int_pow(l, 2 * e as i64)
        * geometric_tail(&int_pow(l, -6), cut + 1)
        * (f0 + f1 * (ExactRational::one() + int_pow(l, -1)) * geometric_tail(&int_pow(l, -2), 1));
    total += tail_a;
    Ok(total)
}

/// Density of primes with reduction order coprime to ℓ for the point ℓᵉ·α,
/// assuming a surjective ℓ-adic image and maximal Kummer towers.
pub fn dens_ell_maximal(ell: u64, e: u32) -> Result<ExactRational, DensityError> {
    dens_series(ell, e, None)
}

/// Character-restricted contribution to [`dens_ell_maximal`]; the two signs
/// of any constraint family sum to the unrestricted density.
pub fn dens_ell_char(
    ell: u64,
    e: u32,
    constraint: &ClassConstraint,
) -> Result<ExactRational, DensityError> {
    dens_series(ell, e, Some(constraint))
}

/// Rigorous enclosure of [`dens_ell_maximal`] from the partial sum over
/// `a + b ≤ cutoff`; each omitted term is at most its class measure, since
/// the weight times the point multiplier never exceeds 1.
pub fn dens_truncated_bounds(ell: u64, e: u32, cutoff: u32) -> (ExactRational, ExactRational) {
    let mut lower = ExactRational::zero();
    let mut mass = ExactRational::zero();
    for a in 0..=cutoff {
        for b in 0..=(cutoff - a) {
            let mu = measure_class(ell, a, b);
            lower += &mu
                * int_pow(ell, -((2 * a + b) as i64))
                * int_pow(ell, (e.min(a) + e.min(a + b)) as i64);
            mass += mu;
        }
    }
    let upper = &lower + (ExactRational::one() - mass);
    (lower, upper)
}

/// Product of per-prime densities (the linearly disjoint case); every factor
/// must lie in [0, 1].
pub fn dens_product(factors: &[ExactRational]) -> Result<ExactRational, DensityError> {
    let mut out = ExactRational::one();
    for f in factors {
        if f.is_negative() || f > &ExactRational::one() {
            return Err(DensityError::ValueOutOfRange(f.clone()));
        }
        out *= f;
    }
    Ok(out)
}

pub(crate) fn factor_squarefree_u64(m: u64) -> Result<Vec<u64>, DensityError> {
    if m == 0 {
        return Err(DensityError::NotSquareFree(0));
    }
    let mut n = m;
    let mut primes = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return Err(DensityError::NotSquareFree(m));
            }
            primes.push(p);
        }
        p += 1;
    }
    if n > 1 {
        primes.push(n);
    }
    Ok(primes)
}

/// Input for the composite density of a Serre curve (or a plain product).
///
/// Primes of `m` default to the closed form under surjective-image and
/// maximal-Kummer assumptions; `overrides` supplies the density for primes
/// where the closed form does not apply. A prime marked non-maximal without
/// an override is an error. `quadratic` is the discriminant data used to
/// decide entanglement; when absent, the plain product rule applies.
#[derive(Debug, Clone)]
pub struct SerreDensityInput {
    pub m: u64,
    pub exponents: BTreeMap<u64, u32>,
    pub overrides: BTreeMap<u64, ExactRational>,
    pub maximal: BTreeMap<u64, bool>,
    pub quadratic: Option<QuadraticFieldData>,
}

impl SerreDensityInput {
    pub fn new(m: u64) -> Result<Self, DensityError> {
        factor_squarefree_u64(m)?;
        Ok(SerreDensityInput {
            m,
            exponents: BTreeMap::new(),
            overrides: BTreeMap::new(),
            maximal: BTreeMap::new(),
            quadratic: None,
        })
    }

    /// Sets the per-prime exponents from a point multiple `k`: `e_ℓ = v_ℓ(k)`.
    pub fn with_multiple(mut self, k: u64) -> Result<Self, DensityError> {
        if k == 0 {
            return Err(DensityError::ZeroMultiple);
        }
        for &p in &factor_squarefree_u64(self.m)? {
            let mut e = 0u32;
            let mut kk = k;
            while kk.is_multiple_of(p) {
                kk /= p;
                e += 1;
            }
            if e > 0 {
                self.exponents.insert(p, e);
            }
        }
        Ok(self)
    }

    pub fn with_exponent(mut self, ell: u64, e: u32) -> Self {
        self.exponents.insert(ell, e);
        self
    }

    pub fn with_override(mut self, ell: u64, value: ExactRational) -> Self {
        self.overrides.insert(ell, value);
        self
    }

    pub fn with_quadratic(mut self, q: QuadraticFieldData) -> Self {
        self.quadratic = Some(q);
        self
    }

    pub fn with_maximal(mut self, ell: u64, maximal: bool) -> Self {
        self.maximal.insert(ell, maximal);
        self
    }

    fn exponent(&self, ell: u64) -> u32 {
        self.exponents.get(&ell).copied().unwrap_or(0)
    }

    fn resolve_total(&self, ell: u64) -> Result<ExactRational, DensityError> {
        if let Some(v) = self.overrides.get(&ell) {
            if v.is_negative() || v > &ExactRational::one() {
                return Err(DensityError::ValueOutOfRange(v.clone()));
            }
            return Ok(v.clone());
        }
        if !self.maximal.get(&ell).copied().unwrap_or(true) {
            return Err(DensityError::MissingPerPrimeData(ell));
        }
        dens_ell_maximal(ell, self.exponent(ell))
    }
}

/// One per-prime (and possibly per-sign) piece of a composite density.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contribution {
    pub ell: u64,
    pub sign: Option<Sign>,
    pub value: ExactRational,
}

/// Exact composite density with its per-prime breakdown.
#[derive(Debug, Clone)]
pub struct DensityBreakdown {
    pub m: u64,
    pub exponents: BTreeMap<u64, u32>,
    pub entangled: bool,
    pub contributions: Vec<Contribution>,
    pub density: ExactRational,
}

impl DensityBreakdown {
    /// Display-only decimal rendering, 10 significant digits.
    pub fn decimal(&self) -> String {
        decimal_string(&self.density, 10)
    }

    pub fn to_json(&self) -> String {
        let dto = BreakdownJson::from(self);
        serde_json::to_string_pretty(&dto).expect("breakdown serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContributionJson {
    pub ell: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<i8>,
    pub num: String,
    pub den: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BreakdownJson {
    pub m: u64,
    pub exponents: BTreeMap<u64, u32>,
    pub entangled: bool,
    pub contributions: Vec<ContributionJson>,
    pub density: DensityValueJson,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DensityValueJson {
    pub num: String,
    pub den: String,
    pub decimal: String,
}

impl From<&DensityBreakdown> for BreakdownJson {
    fn from(b: &DensityBreakdown) -> Self {
        BreakdownJson {
            m: b.m,
            exponents: b.exponents.clone(),
            entangled: b.entangled,
            contributions: b
                .contributions
                .iter()
                .map(|c| {
                    let j = RationalJson::from(&c.value);
                    ContributionJson {
                        ell: c.ell,
                        sign: c.sign.map(Sign::to_i8),
                        num: j.num,
                        den: j.den,
                    }
                })
                .collect(),
            density: DensityValueJson {
                num: b.density.numer().to_string(),
                den: b.density.denom().to_string(),
                decimal: b.decimal(),
            },
        }
    }
}

/// Composite density for square-free `m`.
///
/// Plain product when `m = 2`, `m` odd, no discriminant data, or `u ∤ m`.
/// Otherwise the index-two entanglement applies:
///
/// ```text
/// 2·[ D₂(ψε_z = +1)·D_u(+1) + D₂(ψε_z = −1)·D_u(−1) ] · Π_{ℓ ∣ m, ℓ ∤ 2u} D_ℓ
/// ```
///
/// where `D_u(s)` sums the products `Π_{ℓ ∣ u} D_ℓ(ε_ℓ = s_ℓ)` over sign
/// vectors with `Π s_ℓ = s`.
pub fn dens_serre_composite(input: &SerreDensityInput) -> Result<DensityBreakdown, DensityError> {
    let primes = factor_squarefree_u64(input.m)?;
    for key in input.exponents.keys().chain(input.overrides.keys()) {
        if !primes.contains(key) {
            return Err(DensityError::UnknownPrime {
                ell: *key,
                m: input.m,
            });
        }
    }
    let entangled = match &input.quadratic {
        Some(q) if input.m.is_multiple_of(2) && input.m != 2 => match q.u().magnitude().to_u64() {
            Some(u_abs) => u_abs == 1 || input.m.is_multiple_of(u_abs),
            None => false,
        },
        _ => false,
    };

    let mut contributions = Vec::new();
    let density = if !entangled {
        let mut factors = Vec::new();
        for &ell in &primes {
            let v = input.resolve_total(ell)?;
            contributions.push(Contribution {
                ell,
                sign: None,
                value: v.clone(),
            });
            factors.push(v);
        }
        dens_product(&factors)?
    } else {
        let q = input
            .quadratic
            .as_ref()
            .expect("entangled implies quadratic");
        let u_primes: Vec<u64> = q.odd_primes().to_vec();
        for &ell in std::iter::once(&2u64).chain(u_primes.iter()) {
            if input.overrides.contains_key(&ell) {
                return Err(DensityError::OverrideUnderEntanglement(ell));
            }
            if !input.maximal.get(&ell).copied().unwrap_or(true) {
                return Err(DensityError::MissingPerPrimeData(ell));
            }
        }
        let e2 = input.exponent(2);
        let two_plus = dens_ell_char(
            2,
            e2,
            &ClassConstraint::PsiEpsilonZ {
                z: q.z(),
                sign: Sign::Plus,
            },
        )?;
        let two_minus = dens_ell_char(
            2,
            e2,
            &ClassConstraint::PsiEpsilonZ {
                z: q.z(),
                sign: Sign::Minus,
            },
        )?;
        contributions.push(Contribution {
            ell: 2,
            sign: Some(Sign::Plus),
            value: two_plus.clone(),
        });
        contributions.push(Contribution {
            ell: 2,
            sign: Some(Sign::Minus),
            value: two_minus.clone(),
        });
        // D_u(±1): matched-sign sums over the primes of u
        let mut even = ExactRational::one();
        let mut odd = ExactRational::zero();
        for &ell in &u_primes {
            let e = input.exponent(ell);
            let plus = dens_ell_char(ell, e, &ClassConstraint::Epsilon(Sign::Plus))?;
            let minus = dens_ell_char(ell, e, &ClassConstraint::Epsilon(Sign::Minus))?;
            contributions.push(Contribution {
                ell,
                sign: Some(Sign::Plus),
                value: plus.clone(),
            });
            contributions.push(Contribution {
                ell,
                sign: Some(Sign::Minus),
                value: minus.clone(),
            });
            let new_even = &even * &plus + &odd * &minus;
            let new_odd = &even * &minus + &odd * &plus;
            even = new_even;
            odd = new_odd;
        }
        let mut rest = ExactRational::one();
        for &ell in &primes {
            if ell == 2 || u_primes.contains(&ell) {
                continue;
            }
            let v = input.resolve_total(ell)?;
            contributions.push(Contribution {
                ell,
                sign: None,
                value: v.clone(),
            });
            rest *= v;
        }
        (two_plus * even + two_minus * odd) * ExactRational::from_integer(2.into()) * rest
    };
    if density.is_negative() || density > ExactRational::one() {
        return Err(DensityError::ValueOutOfRange(density));
    }
    Ok(DensityBreakdown {
        m: input.m,
        exponents: input.exponents.clone(),
        entangled,
        contributions,
        density,
    })
}
