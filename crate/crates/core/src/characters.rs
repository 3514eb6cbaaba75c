//! Quadratic characters attached to discriminants.
//!
//! For a nonzero rational `d` with square-free part `d_sf`, the character
//! `ε_d` cuts out the quadratic field ℚ(√d) inside the cyclotomic field of
//! conductor `m_d`. Splitting `d_sf = z·u` with `z ∈ {1, −1, 2, −2}` and `u`
//! an odd fundamental discriminant, the even part `ε_z` is evaluated by the
//! explicit determinant tables mod 8 and the odd part `ε_u` as a product of
//! Legendre symbols; this matches the Jacobi symbol `(d_sf / a)` on odd
//! arguments. Characters of matrices are evaluated on determinant residues,
//! never on field automorphisms. The sign character `ψ` on `GL₂(𝔽₂) ≅ S₃`
//! also lives here.

use crate::modmat::{ModMatError, ResidueMatrix};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CharacterError {
    ZeroInput,
    /// Jacobi symbols need an odd positive lower argument.
    BadJacobiModulus(BigInt),
    /// The matrix modulus must be divisible by the conductor.
    ModulusNotDivisible {
        needed: BigUint,
        got: BigUint,
    },
    /// Character argument shares a factor with the conductor.
    NotAUnit,
    /// Factorisation gave up (composite cofactor beyond the trial bound).
    CannotFactor(BigUint),
    /// ψ is a character of GL₂(𝔽₂).
    PsiNeedsEllTwo(u64),
    /// CRT components must live at pairwise distinct primes.
    DuplicateComponent(u64),
    Matrix(ModMatError),
}

impl fmt::Display for CharacterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CharacterError::ZeroInput => write!(f, "zero has no square-free part"),
            CharacterError::BadJacobiModulus(n) => {
                write!(f, "Jacobi symbol needs odd positive modulus, got {n}")
            }
            CharacterError::ModulusNotDivisible { needed, got } => {
                write!(
                    f,
                    "modulus {got} is not divisible by the conductor {needed}"
                )
            }
            CharacterError::NotAUnit => write!(f, "argument is not a unit mod the conductor"),
            CharacterError::CannotFactor(n) => write!(f, "cannot factor remaining cofactor {n}"),
            CharacterError::PsiNeedsEllTwo(l) => write!(f, "psi is defined mod 2, got ell={l}"),
            CharacterError::DuplicateComponent(l) => {
                write!(f, "two CRT components at the same prime {l}")
            }
            CharacterError::Matrix(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CharacterError {}

impl From<ModMatError> for CharacterError {
    fn from(e: ModMatError) -> Self {
        CharacterError::Matrix(e)
    }
}

/// A value of a quadratic character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Sign> {
        match s.trim() {
            "+1" | "1" | "+" => Some(Sign::Plus),
            "-1" | "-" => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => write!(f, "+1"),
            Sign::Minus => write!(f, "-1"),
        }
    }
}

/// The even factor `z` of a square-free integer `d_sf = z·u`, `u` odd ≡ 1 mod 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZClass {
    One,
    MinusOne,
    Two,
    MinusTwo,
}

impl ZClass {
    pub fn value(self) -> i64 {
        match self {
            ZClass::One => 1,
            ZClass::MinusOne => -1,
            ZClass::Two => 2,
            ZClass::MinusTwo => -2,
        }
    }

    pub fn from_value(v: i64) -> Option<ZClass> {
        match v {
            1 => Some(ZClass::One),
            -1 => Some(ZClass::MinusOne),
            2 => Some(ZClass::Two),
            -2 => Some(ZClass::MinusTwo),
            _ => None,
        }
    }
}

impl fmt::Display for ZClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Standard Jacobi symbol `(a/n)` for odd positive `n`; 0 iff gcd(a,n) > 1.
pub fn jacobi(a: &BigInt, n: &BigInt) -> Result<i8, CharacterError> {
    if !n.is_positive() || n.is_even() {
        return Err(CharacterError::BadJacobiModulus(n.clone()));
    }
    let mut a = a.mod_floor(n);
    let mut n = n.clone();
    let mut t = 1i8;
    let eight = BigInt::from(8);
    let four = BigInt::from(4);
    let three = BigInt::from(3);
    while !a.is_zero() {
        while a.is_even() {
            a /= 2;
            let r = n.mod_floor(&eight);
            if r == three || r == BigInt::from(5) {
                t = -t;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a.mod_floor(&four) == three && n.mod_floor(&four) == three {
            t = -t;
        }
        a = a.mod_floor(&n);
    }
    Ok(if n.is_one() { t } else { 0 })
}

/// Legendre symbol via Jacobi; `p` must be an odd prime.
pub fn legendre(a: i64, p: u64) -> i8 {
    jacobi(&BigInt::from(a), &BigInt::from(p)).expect("odd prime modulus")
}

/// The determinant table mod 8 for fixing √z: which odd residues `a` satisfy
/// `σ_a(√z) = √z` inside ℚ(ζ₈).
pub fn epsilon_z(z: ZClass, a: u64) -> Sign {
    let a8 = a % 8;
    debug_assert!(a8 % 2 == 1, "epsilon_z needs an odd argument");
    let fixes = match z {
        ZClass::One => true,
        ZClass::MinusOne => a8 == 1 || a8 == 5,
        ZClass::Two => a8 == 1 || a8 == 7,
        ZClass::MinusTwo => a8 == 1 || a8 == 3,
    };
    if fixes {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Unique square-free integer `r` with `d / r` a rational square; sign kept.
pub fn squarefree_part(d: &BigRational) -> Result<BigInt, CharacterError> {
    if d.is_zero() {
        return Err(CharacterError::ZeroInput);
    }
    // squarefree part of num/den equals that of num·den
    let prod = d.numer() * d.denom();
    let negative = prod.is_negative();
    let mut n = prod.magnitude().clone();
    let mut sf = BigUint::one();
    let mut p = BigUint::from(2u32);
    let trial_bound = BigUint::from(1_000_000u64);
    while &p * &p <= n && p <= trial_bound {
        if (&n % &p).is_zero() {
            let mut e = 0u32;
            while (&n % &p).is_zero() {
                n /= &p;
                e += 1;
            }
            if e % 2 == 1 {
                sf *= &p;
            }
        }
        p = if p == BigUint::from(2u32) {
            BigUint::from(3u32)
        } else {
            p + 2u32
        };
    }
    if !n.is_one() {
        let root = n.sqrt();
        if &root * &root == n {
            // perfect square cofactor: even exponents throughout
        } else if is_probable_prime(&n) {
            sf *= &n;
        } else {
            return Err(CharacterError::CannotFactor(n));
        }
    }
    let sf = BigInt::from(sf);
    Ok(if negative { -sf } else { sf })
}

/// Conductor of ℚ(√d): |d_sf| if d_sf ≡ 1 mod 4, else 4|d_sf|.
pub fn conductor(d: &BigRational) -> Result<BigUint, CharacterError> {
    let sf = squarefree_part(d)?;
    Ok(conductor_of_squarefree(&sf))
}

fn conductor_of_squarefree(sf: &BigInt) -> BigUint {
    if sf.mod_floor(&BigInt::from(4)) == BigInt::one() {
        sf.magnitude().clone()
    } else {
        sf.magnitude() * 4u32
    }
}

/// Discriminant data for a quadratic field: `d_sf = z·u` with `u` odd ≡ 1 mod 4.
#[derive(Debug, Clone)]
pub struct QuadraticFieldData {
    d: BigRational,
    d_sf: BigInt,
    m_d: BigUint,
    z: ZClass,
    u: BigInt,
    odd_primes: Vec<u64>,
}

impl QuadraticFieldData {
    pub fn new(d: &BigRational) -> Result<Self, CharacterError> {
        let d_sf = squarefree_part(d)?;
        let m_d = conductor_of_squarefree(&d_sf);
        let (z, u) = split_even_odd(&d_sf);
        let odd_primes = odd_prime_factors(&u)?;
        Ok(QuadraticFieldData {
            d: d.clone(),
            d_sf,
            m_d,
            z,
            u,
            odd_primes,
        })
    }

    pub fn from_integer(d: i64) -> Result<Self, CharacterError> {
        QuadraticFieldData::new(&BigRational::from_integer(BigInt::from(d)))
    }

    pub fn d(&self) -> &BigRational {
        &self.d
    }

    pub fn squarefree(&self) -> &BigInt {
        &self.d_sf
    }

    pub fn conductor(&self) -> &BigUint {
        &self.m_d
    }

    pub fn z(&self) -> ZClass {
        self.z
    }

    pub fn u(&self) -> &BigInt {
        &self.u
    }

    /// The odd primes dividing `u` (equivalently the odd part of `m_d`).
    pub fn odd_primes(&self) -> &[u64] {
        &self.odd_primes
    }

    /// ε_d on a unit residue `a` known mod `modulus`; the modulus must be
    /// divisible by the conductor `m_d`.
    pub fn epsilon_on_residue(
        &self,
        a: &BigInt,
        modulus: &BigUint,
    ) -> Result<Sign, CharacterError> {
        if !(modulus % &self.m_d).is_zero() {
            return Err(CharacterError::ModulusNotDivisible {
                needed: self.m_d.clone(),
                got: modulus.clone(),
            });
        }
        let a = a.mod_floor(&BigInt::from(modulus.clone()));
        if !a.gcd(&BigInt::from(self.m_d.clone())).is_one() {
            return Err(CharacterError::NotAUnit);
        }
        let mut sign = Sign::Plus;
        if self.z != ZClass::One {
            // the even part of m_d (4 or 8) divides the modulus here
            let a8 = a.mod_floor(&BigInt::from(8)).to_u64().unwrap();
            sign = sign * epsilon_z(self.z, a8);
        }
        for &p in &self.odd_primes {
            let ap = a.mod_floor(&BigInt::from(p)).to_i64().unwrap();
            match legendre(ap, p) {
                1 => {}
                -1 => sign = sign * Sign::Minus,
                _ => return Err(CharacterError::NotAUnit),
            }
        }
        Ok(sign)
    }

    /// ε_d of a matrix, via its determinant; the matrix modulus must be
    /// divisible by `m_d`.
    pub fn epsilon(&self, m: &ResidueMatrix) -> Result<Sign, CharacterError> {
        self.epsilon_crt(&[*m])
    }

    /// ε_d of a matrix given by CRT components at pairwise distinct primes.
    pub fn epsilon_crt(&self, comps: &[ResidueMatrix]) -> Result<Sign, CharacterError> {
        for (i, c) in comps.iter().enumerate() {
            if comps[..i].iter().any(|other| other.ell() == c.ell()) {
                return Err(CharacterError::DuplicateComponent(c.ell()));
            }
        }
        let mut modulus = BigUint::one();
        let mut det = BigInt::zero();
        for c in comps {
            if !c.is_invertible() {
                return Err(CharacterError::NotAUnit);
            }
            let m = BigUint::from(c.modulus());
            let d = BigInt::from(c.det());
            det = crt_pair(
                &det,
                &BigInt::from(modulus.clone()),
                &d,
                &BigInt::from(m.clone()),
            );
            modulus *= m;
        }
        self.epsilon_on_residue(&det, &modulus)
    }
}

/// Splits a square-free integer as `z·u` with `z ∈ {1,−1,2,−2}` and `u` odd,
/// `u ≡ 1 mod 4`.
pub fn split_even_odd(d_sf: &BigInt) -> (ZClass, BigInt) {
    let four = BigInt::from(4);
    if d_sf.is_odd() {
        if d_sf.mod_floor(&four) == BigInt::one() {
            (ZClass::One, d_sf.clone())
        } else {
            (ZClass::MinusOne, -d_sf)
        }
    } else {
        let w: BigInt = d_sf / 2;
        if w.mod_floor(&four) == BigInt::one() {
            (ZClass::Two, w)
        } else {
            (ZClass::MinusTwo, -w)
        }
    }
}

fn odd_prime_factors(u: &BigInt) -> Result<Vec<u64>, CharacterError> {
    let mut n = u.magnitude().clone();
    let mut out = Vec::new();
    let mut p = BigUint::from(3u32);
    while &p * &p <= n {
        if (&n % &p).is_zero() {
            out.push(p.to_u64().expect("small prime factor"));
            while (&n % &p).is_zero() {
                n /= &p;
            }
        }
        p += 2u32;
        if p > BigUint::from(10_000_000u64) {
            break;
        }
    }
    if !n.is_one() {
        if is_probable_prime(&n) {
            out.push(
                n.to_u64()
                    .ok_or_else(|| CharacterError::CannotFactor(n.clone()))?,
            );
        } else {
            return Err(CharacterError::CannotFactor(n));
        }
    }
    Ok(out)
}

/// Miller–Rabin with a fixed witness set; deterministic below 3.3·10²⁴.
fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for small in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let s = BigUint::from(small);
        if *n == s {
            return true;
        }
        if (n % s).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for w in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = BigUint::from(w).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn crt_pair(a1: &BigInt, m1: &BigInt, a2: &BigInt, m2: &BigInt) -> BigInt {
    if m1.is_one() {
        return a2.clone();
    }
    // residues at coprime moduli
    let g = m1.extended_gcd(m2);
    debug_assert!(g.gcd.is_one());
    let m = m1 * m2;
    let r = a1 * &g.y * m2 + a2 * &g.x * m1;
    r.mod_floor(&m)
}

/// Sign character of `GL₂(𝔽₂) ≅ S₃`: −1 exactly when `ker(M − I)` is
/// one-dimensional over 𝔽₂.
pub fn psi(m: &ResidueMatrix) -> Result<Sign, CharacterError> {
    if m.ell() != 2 {
        return Err(CharacterError::PsiNeedsEllTwo(m.ell()));
    }
    if !m.is_invertible() {
        return Err(CharacterError::Matrix(ModMatError::NotInvertible));
    }
    let r = m.reduce_to(1);
    let [a, b, c, d] = r.entries();
    if [a, b, c, d] == [1, 0, 0, 1] {
        return Ok(Sign::Plus);
    }
    let det_m_minus_i = ((a + 1) * (d + 1) + b * c) % 2;
    Ok(if det_m_minus_i == 0 {
        Sign::Minus
    } else {
        Sign::Plus
    })
}
