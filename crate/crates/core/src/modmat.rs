//! Finite linear algebra over ℤ/ℓⁿℤ: 2×2 matrix arithmetic, determinants,
//! kernel classes of `M − I`, and exhaustive enumeration of `GL₂(ℤ/ℓⁿℤ)`.
//!
//! The kernel class of an invertible matrix `M` records the isomorphism type
//! `ℤ/ℓᵃ × ℤ/ℓᵃ⁺ᵇ` of `ker(M − I)` acting on `(ℤ/ℓⁿℤ)²`, via the elementary
//! divisors of `M − I`. When the larger divisor valuation reaches the level
//! `n`, the class is not determined at this level and is flagged `saturated`
//! instead of being guessed.

use rayon::prelude::*;
use std::fmt;

/// Hard cap used by enumeration guards when the caller does not supply one.
pub const DEFAULT_ENUM_BOUND: u64 = 1 << 25;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModMatError {
    /// The modulus base is not a prime number.
    NotPrime(u64),
    /// Level must be at least 1 and ℓ^level must fit in a u64.
    BadLevel { ell: u64, level: u32 },
    /// The operation requires an invertible matrix.
    NotInvertible,
    /// |GL₂(ℤ/ℓⁿℤ)| exceeds the enumeration guard.
    BoundExceeded { size: u128, bound: u64 },
    /// A lift target is not compatible with the matrix class at this level.
    InconsistentTarget,
}

impl fmt::Display for ModMatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModMatError::NotPrime(l) => write!(f, "{l} is not prime"),
            ModMatError::BadLevel { ell, level } => {
                write!(f, "invalid level {level} for prime {ell}")
            }
            ModMatError::NotInvertible => write!(f, "matrix is not invertible"),
            ModMatError::BoundExceeded { size, bound } => {
                write!(f, "group of order {size} exceeds enumeration bound {bound}")
            }
            ModMatError::InconsistentTarget => write!(f, "lift target inconsistent with class"),
        }
    }
}

impl std::error::Error for ModMatError {}

/// Deterministic trial-division primality test for small moduli.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// |GL₂(ℤ/ℓⁿℤ)| = ℓ^{4(n−1)} (ℓ²−1)(ℓ²−ℓ).
pub fn gl2_order(ell: u64, level: u32) -> u128 {
    let l = ell as u128;
    l.pow(4 * (level - 1)) * (l * l - 1) * (l * l - l)
}

/// Isomorphism type of `ker(M − I)` on `(ℤ/ℓⁿℤ)²`, as `ℤ/ℓᵃ × ℤ/ℓᵃ⁺ᵇ`.
///
/// `saturated` is set when the larger elementary divisor valuation equals the
/// level, i.e. the stable class is not visible at this level; otherwise
/// `(a, b)` is the stable kernel type of any lift of `M` to `ℤ_ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelClass {
    pub a: u32,
    pub b: u32,
    pub saturated: bool,
}

impl KernelClass {
    pub fn new(a: u32, b: u32, saturated: bool) -> Self {
        KernelClass { a, b, saturated }
    }

    /// Elementary divisor valuations `(s, t) = (a, a + b)`.
    pub fn divisors(&self) -> (u32, u32) {
        (self.a, self.a + self.b)
    }

    /// Size of the kernel on `(ℤ/ℓⁿℤ)²`, namely ℓ^{2a+b}.
    pub fn kernel_size(&self, ell: u64) -> u128 {
        (ell as u128).pow(2 * self.a + self.b)
    }
}

impl fmt::Display for KernelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)?;
        if self.saturated {
            write!(f, "*")?;
        }
        Ok(())
    }
}

/// 2×2 matrix over ℤ/ℓⁿℤ with entries reduced to `0 ≤ e < ℓⁿ`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResidueMatrix {
    ell: u64,
    level: u32,
    entries: [u64; 4],
}

impl ResidueMatrix {
    pub fn new(ell: u64, level: u32, entries: [u64; 4]) -> Result<Self, ModMatError> {
        if !is_prime_u64(ell) {
            return Err(ModMatError::NotPrime(ell));
        }
        let modulus = checked_modulus(ell, level)?;
        Ok(ResidueMatrix {
            ell,
            level,
            entries: entries.map(|e| e % modulus),
        })
    }

    pub fn identity(ell: u64, level: u32) -> Result<Self, ModMatError> {
        ResidueMatrix::new(ell, level, [1, 0, 0, 1])
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn modulus(&self) -> u64 {
        self.ell.pow(self.level)
    }

    pub fn entries(&self) -> [u64; 4] {
        self.entries
    }

    /// Determinant mod ℓⁿ.
    pub fn det(&self) -> u64 {
        let m = self.modulus() as u128;
        let [a, b, c, d] = self.entries.map(|e| e as u128);
        (((a * d) % m + m * m - (b * c) % m) % m) as u64
    }

    /// A matrix over ℤ/ℓⁿℤ is invertible iff its determinant is a unit mod ℓ.
    pub fn is_invertible(&self) -> bool {
        !self.det().is_multiple_of(self.ell)
    }

    pub fn mul(&self, other: &ResidueMatrix) -> ResidueMatrix {
        assert_eq!((self.ell, self.level), (other.ell, other.level));
        let m = self.modulus() as u128;
        let x = self.entries.map(|e| e as u128);
        let y = other.entries.map(|e| e as u128);
        let e = [
            (x[0] * y[0] + x[1] * y[2]) % m,
            (x[0] * y[1] + x[1] * y[3]) % m,
            (x[2] * y[0] + x[3] * y[2]) % m,
            (x[2] * y[1] + x[3] * y[3]) % m,
        ];
        ResidueMatrix {
            ell: self.ell,
            level: self.level,
            entries: e.map(|v| v as u64),
        }
    }

    pub fn inverse(&self) -> Result<ResidueMatrix, ModMatError> {
        if !self.is_invertible() {
            return Err(ModMatError::NotInvertible);
        }
        let m = self.modulus();
        let det_inv = inv_mod_u64(self.det(), m).expect("unit determinant");
        let mm = m as u128;
        let di = det_inv as u128;
        let [a, b, c, d] = self.entries.map(|e| e as u128);
        let e = [
            (d * di) % mm,
            ((mm - b % mm) % mm * di) % mm,
            ((mm - c % mm) % mm * di) % mm,
            (a * di) % mm,
        ];
        Ok(ResidueMatrix {
            ell: self.ell,
            level: self.level,
            entries: e.map(|v| v as u64),
        })
    }

    /// Matrix applied to a column vector mod ℓⁿ.
    pub fn apply(&self, v: [u64; 2]) -> [u64; 2] {
        let m = self.modulus() as u128;
        let [a, b, c, d] = self.entries.map(|e| e as u128);
        let (x, y) = (v[0] as u128, v[1] as u128);
        [((a * x + b * y) % m) as u64, ((c * x + d * y) % m) as u64]
    }

    /// Reduction to a lower level `k ≤ n`.
    pub fn reduce_to(&self, level: u32) -> ResidueMatrix {
        assert!(level >= 1 && level <= self.level);
        let modulus = self.ell.pow(level);
        ResidueMatrix {
            ell: self.ell,
            level,
            entries: self.entries.map(|e| e % modulus),
        }
    }

    /// The ℓ⁴ lifts of this matrix to level n+1.
    pub fn lifts(&self) -> Result<Vec<ResidueMatrix>, ModMatError> {
        let step = self.modulus();
        let new_mod = checked_modulus(self.ell, self.level + 1)?;
        let ell = self.ell;
        let mut out = Vec::with_capacity((ell * ell * ell * ell) as usize);
        for d0 in 0..ell {
            for d1 in 0..ell {
                for d2 in 0..ell {
                    for d3 in 0..ell {
                        let e = [
                            (self.entries[0] + d0 * step) % new_mod,
                            (self.entries[1] + d1 * step) % new_mod,
                            (self.entries[2] + d2 * step) % new_mod,
                            (self.entries[3] + d3 * step) % new_mod,
                        ];
                        out.push(ResidueMatrix {
                            ell,
                            level: self.level + 1,
                            entries: e,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Elementary-divisor data of `M − I` over ℤ/ℓⁿℤ.
    ///
    /// Returns the valuations `(s, t)` with `s ≤ t ≤ n`: the kernel of
    /// `M − I` on `(ℤ/ℓⁿℤ)²` is `ℤ/ℓˢ × ℤ/ℓᵗ`. Computed on the canonical
    /// integer lift; divisor valuations below `n` are lift-independent.
    fn divisor_valuations(&self) -> (u32, u32) {
        let n = self.level;
        let modulus = self.modulus();
        let a = [
            (self.entries[0] + modulus - 1) % modulus,
            self.entries[1],
            self.entries[2],
            (self.entries[3] + modulus - 1) % modulus,
        ];
        let s = a
            .iter()
            .map(|&e| valuation_capped(e as u128, self.ell, n))
            .min()
            .unwrap();
        if s == n {
            return (n, n);
        }
        let det = a[0] as i128 * a[3] as i128 - a[1] as i128 * a[2] as i128;
        let t = if det == 0 {
            n
        } else {
            let vd = valuation_capped(det.unsigned_abs(), self.ell, 2 * n);
            (vd - s).min(n)
        };
        (s, t)
    }

    /// Kernel class of `M − I`; rejects non-invertible matrices.
    pub fn kernel_class(&self) -> Result<KernelClass, ModMatError> {
        if !self.is_invertible() {
            return Err(ModMatError::NotInvertible);
        }
        let (s, t) = self.divisor_valuations();
        Ok(KernelClass::new(s, t - s, t == self.level))
    }
}

impl fmt::Display for ResidueMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.entries;
        write!(f, "[[{a},{b}],[{c},{d}]] mod {}", self.modulus())
    }
}

fn checked_modulus(ell: u64, level: u32) -> Result<u64, ModMatError> {
    if level == 0 {
        return Err(ModMatError::BadLevel { ell, level });
    }
    ell.checked_pow(level)
        .filter(|&m| m <= (1u64 << 62))
        .ok_or(ModMatError::BadLevel { ell, level })
}

fn valuation_capped(mut x: u128, ell: u64, cap: u32) -> u32 {
    if x == 0 {
        return cap;
    }
    let l = ell as u128;
    let mut v = 0;
    while x.is_multiple_of(l) && v < cap {
        x /= l;
        v += 1;
    }
    v
}

pub(crate) fn inv_mod_u64(a: u64, m: u64) -> Option<u64> {
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 != 1 {
        return None;
    }
    Some(s0.rem_euclid(m as i128) as u64)
}

fn guard(ell: u64, level: u32, bound: u64) -> Result<(), ModMatError> {
    let size = gl2_order(ell, level);
    if size > bound as u128 {
        return Err(ModMatError::BoundExceeded { size, bound });
    }
    Ok(())
}

/// Counts invertible matrices mod ℓⁿ satisfying `pred`.
///
/// Enumeration is partitioned across workers by the first column; counts are
/// combined by addition, so the result is deterministic.
pub fn count_invertible<P>(ell: u64, level: u32, bound: u64, pred: P) -> Result<u64, ModMatError>
where
    P: Fn(&ResidueMatrix) -> bool + Sync,
{
    if !is_prime_u64(ell) {
        return Err(ModMatError::NotPrime(ell));
    }
    let modulus = checked_modulus(ell, level)?;
    guard(ell, level, bound)?;
    let count = (0..modulus * modulus)
        .into_par_iter()
        .map(|col| {
            let (a, c) = (col / modulus, col % modulus);
            let mut local = 0u64;
            for b in 0..modulus {
                for d in 0..modulus {
                    let m = ResidueMatrix {
                        ell,
                        level,
                        entries: [a, b, c, d],
                    };
                    if m.is_invertible() && pred(&m) {
                        local += 1;
                    }
                }
            }
            local
        })
        .sum();
    Ok(count)
}

/// All invertible matrices mod ℓⁿ, in lexicographic entry order.
pub fn invertible_matrices(
    ell: u64,
    level: u32,
    bound: u64,
) -> Result<Vec<ResidueMatrix>, ModMatError> {
    if !is_prime_u64(ell) {
        return Err(ModMatError::NotPrime(ell));
    }
    let modulus = checked_modulus(ell, level)?;
    guard(ell, level, bound)?;
    let mut out = Vec::with_capacity(gl2_order(ell, level) as usize);
    for a in 0..modulus {
        for b in 0..modulus {
            for c in 0..modulus {
                for d in 0..modulus {
                    let m = ResidueMatrix {
                        ell,
                        level,
                        entries: [a, b, c, d],
                    };
                    if m.is_invertible() {
                        out.push(m);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact count of invertible matrices mod ℓⁿ whose kernel class and
/// determinant satisfy `pred`.
pub fn count_by_class_and_det<P>(
    ell: u64,
    level: u32,
    bound: u64,
    pred: P,
) -> Result<u64, ModMatError>
where
    P: Fn(&KernelClass, u64) -> bool + Sync,
{
    count_invertible(ell, level, bound, |m| {
        let class = m.kernel_class().expect("invertible by construction");
        pred(&class, m.det())
    })
}

/// Number of the ℓ⁴ lifts of `m` to level n+1 whose kernel class refines to
/// the stable class `(a, b)`.
///
/// The target must be decided at level n+1 (`a + b ≤ n`) and consistent with
/// the class of `m` at level n. The count depends only on the class of `m`,
/// not on the matrix itself.
pub fn lift_count(m: &ResidueMatrix, a: u32, b: u32) -> Result<u64, ModMatError> {
    let class = m.kernel_class()?;
    let n = m.level();
    if a + b > n {
        return Err(ModMatError::InconsistentTarget);
    }
    let (s, t) = class.divisors();
    if s != a.min(n) || t != (a + b).min(n) {
        return Err(ModMatError::InconsistentTarget);
    }
    let target = KernelClass::new(a, b, false);
    let mut count = 0;
    for lift in m.lifts()? {
        if lift.kernel_class()? == target {
            count += 1;
        }
    }
    Ok(count)
}
