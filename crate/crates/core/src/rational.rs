//! Arbitrary-precision rational values and their textual renderings.
//!
//! Every measure and density in this crate is an [`ExactRational`]; floating
//! point never enters a computation. Decimal strings are display-only and
//! rounded to nearest at the printed precision.

use num_bigint::{BigInt, BigUint, Sign as IntSign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Canonical-form arbitrary-precision rational (gcd 1, positive denominator).
pub type ExactRational = BigRational;

/// Shorthand for small rational constants.
pub fn rat(num: i64, den: i64) -> ExactRational {
    ExactRational::new(BigInt::from(num), BigInt::from(den))
}

/// `base^exp` as an exact rational; `base` is an integer, `exp` may be negative.
pub fn int_pow(base: u64, exp: i64) -> ExactRational {
    let p = BigInt::from(base).pow(exp.unsigned_abs() as u32);
    if exp >= 0 {
        ExactRational::from_integer(p)
    } else {
        ExactRational::new(BigInt::one(), p)
    }
}

/// Parses `"num/den"`, a plain integer string, or a decimal string.
pub fn parse_rational(s: &str) -> Result<ExactRational, String> {
    let s = s.trim();
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if s.contains('/') || frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(format!("bad decimal {s:?}"));
        }
        let negative = int_part.starts_with('-');
        let int = BigInt::from_str(if int_part.is_empty() || int_part == "-" {
            "0"
        } else {
            int_part
        })
        .map_err(|e| format!("bad decimal {s:?}: {e}"))?;
        let frac = BigInt::from_str(frac_part).map_err(|e| format!("bad decimal {s:?}: {e}"))?;
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let magnitude: BigInt = BigInt::from(int.magnitude().clone()) * &scale + frac;
        let num = if negative { -magnitude } else { magnitude };
        return Ok(ExactRational::new(num, scale));
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num = BigInt::from_str(num).map_err(|e| format!("bad numerator {num:?}: {e}"))?;
    let den = BigInt::from_str(den).map_err(|e| format!("bad denominator {den:?}: {e}"))?;
    if den.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(ExactRational::new(num, den))
}

/// Σ_{k=lo}^{hi} x^k, exact. Empty when `lo > hi`.
pub fn geometric_range(x: &ExactRational, lo: u32, hi: u32) -> ExactRational {
    let mut sum = ExactRational::zero();
    if lo > hi {
        return sum;
    }
    let mut term = pow_rational(x, lo);
    for _ in lo..=hi {
        sum += &term;
        term *= x;
    }
    sum
}

/// Σ_{k=lo}^∞ x^k = x^lo / (1 − x); requires |x| < 1.
pub fn geometric_tail(x: &ExactRational, lo: u32) -> ExactRational {
    assert!(
        x.abs() < ExactRational::one(),
        "geometric tail needs |x| < 1"
    );
    pow_rational(x, lo) / (ExactRational::one() - x)
}

/// x^k for non-negative k.
pub fn pow_rational(x: &ExactRational, k: u32) -> ExactRational {
    ExactRational::new(x.numer().pow(k), x.denom().pow(k))
}

/// Decimal rendering with `sig` significant digits, round half away from zero.
///
/// Plain positional notation; exact zero renders as `"0"`.
pub fn decimal_string(r: &ExactRational, sig: usize) -> String {
    assert!(sig > 0);
    if r.is_zero() {
        return "0".to_string();
    }
    let neg = r.is_negative();
    let num = r.numer().magnitude().clone();
    let den = r.denom().magnitude().clone();
    // exponent of the leading digit: |r| ∈ [10^exp, 10^(exp+1))
    let mut exp: i64 = num.to_string().len() as i64 - den.to_string().len() as i64;
    let ten = BigUint::from(10u32);
    let scaled_cmp = |e: i64| -> std::cmp::Ordering {
        // compare |r| against 10^e
        if e >= 0 {
            num.cmp(&(&den * ten.pow(e as u32)))
        } else {
            (&num * ten.pow((-e) as u32)).cmp(&den)
        }
    };
    if scaled_cmp(exp) == std::cmp::Ordering::Less {
        exp -= 1;
    } else if scaled_cmp(exp + 1) != std::cmp::Ordering::Less {
        exp += 1;
    }
    // round |r|·10^(sig−1−exp) to nearest integer, half away from zero
    let shift = sig as i64 - 1 - exp;
    let (scaled_num, scaled_den) = if shift >= 0 {
        (&num * ten.pow(shift as u32), den.clone())
    } else {
        (num.clone(), &den * ten.pow((-shift) as u32))
    };
    let (q, rem) = scaled_num.div_rem(&scaled_den);
    let mut digits = if &rem * 2u32 >= scaled_den {
        q + 1u32
    } else {
        q
    }
    .to_string();
    // rounding may carry into one extra digit (e.g. 9.99 -> 10.0)
    if digits.len() > sig {
        digits.truncate(sig);
        exp += 1;
    }
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if exp >= 0 {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            out.push_str(&digits);
            out.push_str(&"0".repeat(int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    } else {
        out.push_str("0.");
        out.push_str(&"0".repeat((-exp - 1) as usize));
        out.push_str(&digits);
    }
    out
}

/// Percentage rendering (`r · 100`) with the given number of decimal places.
pub fn percent_string(r: &ExactRational, places: usize) -> String {
    let hundred = ExactRational::from_integer(BigInt::from(100));
    let scaled = r * hundred;
    // fixed number of places: round scaled·10^places to nearest integer
    let ten_p = BigInt::from(10u32).pow(places as u32);
    let shifted = &scaled * ExactRational::from_integer(ten_p.clone());
    let rounded = shifted.round().to_integer();
    let neg = rounded.sign() == IntSign::Minus;
    let mag = rounded.magnitude().to_string();
    let mag = if mag.len() <= places {
        format!("{}{}", "0".repeat(places + 1 - mag.len()), mag)
    } else {
        mag
    };
    let (int_part, frac_part) = mag.split_at(mag.len() - places);
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(int_part);
    if places > 0 {
        out.push('.');
        out.push_str(frac_part);
    }
    out.push('%');
    out
}

/// Serialized form of a rational: decimal-string numerator and denominator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RationalJson {
    pub num: String,
    pub den: String,
}

impl From<&ExactRational> for RationalJson {
    fn from(r: &ExactRational) -> Self {
        RationalJson {
            num: r.numer().to_string(),
            den: r.denom().to_string(),
        }
    }
}

impl RationalJson {
    pub fn to_rational(&self) -> Result<ExactRational, String> {
        let num = BigInt::from_str(&self.num).map_err(|e| e.to_string())?;
        let den = BigInt::from_str(&self.den).map_err(|e| e.to_string())?;
        if den.is_zero() {
            return Err("zero denominator".into());
        }
        Ok(ExactRational::new(num, den))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rational("11/21").unwrap(), rat(11, 21));
        assert_eq!(parse_rational("-7/4").unwrap(), rat(-7, 4));
        assert_eq!(parse_rational("5").unwrap(), rat(5, 1));
        assert_eq!(parse_rational("4/8").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("11.624").unwrap(), rat(11624, 1000));
        assert_eq!(parse_rational("-0.25").unwrap(), rat(-1, 4));
        assert_eq!(parse_rational("0.03").unwrap(), rat(3, 100));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1.2.3").is_err());
        assert!(parse_rational("1/2.5").is_err());
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal_string(&rat(11, 21), 10), "0.5238095238");
        assert_eq!(decimal_string(&rat(1, 3), 4), "0.3333");
        assert_eq!(decimal_string(&rat(2, 3), 4), "0.6667");
        assert_eq!(decimal_string(&rat(1, 1), 3), "1.00");
        assert_eq!(decimal_string(&rat(999, 1000), 2), "1.0");
        assert_eq!(decimal_string(&rat(-31, 8), 5), "-3.8750");
        assert_eq!(decimal_string(&rat(1, 128), 3), "0.00781");
        assert_eq!(decimal_string(&ExactRational::zero(), 5), "0");
        assert_eq!(decimal_string(&rat(351, 1), 2), "350");
    }

    #[test]
    fn percent_rendering() {
        assert_eq!(percent_string(&rat(253, 2184), 3), "11.584%");
        assert_eq!(percent_string(&rat(22, 39), 3), "56.410%");
        assert_eq!(percent_string(&rat(1, 1), 1), "100.0%");
        assert_eq!(percent_string(&rat(1, 2000), 2), "0.05%");
    }

    #[test]
    fn geometric_sums() {
        let half = rat(1, 2);
        assert_eq!(geometric_range(&half, 1, 3), rat(7, 8));
        assert_eq!(geometric_range(&half, 2, 1), rat(0, 1));
        assert_eq!(geometric_tail(&half, 1), rat(1, 1));
        assert_eq!(geometric_tail(&rat(1, 4), 2), rat(1, 12));
    }

    #[test]
    fn decimal_string_close_to_exact_value() {
        // renderer accuracy: 10 significant digits leave a relative error
        // below 1e-8
        for (n, d) in [
            (1i64, 3i64),
            (11, 21),
            (143510179, 146927088),
            (-7, 4),
            (22, 7),
        ] {
            let r = rat(n, d);
            let back = parse_rational(&decimal_string(&r, 10)).unwrap();
            let err = if back >= r { &back - &r } else { &r - &back };
            let bound = (if r < ExactRational::zero() { -r } else { r }) * rat(1, 100_000_000);
            assert!(err <= bound, "{n}/{d}");
        }
    }

    #[test]
    fn json_roundtrip() {
        let r = rat(-143510179, 146927088);
        let j = RationalJson::from(&r);
        assert_eq!(j.to_rational().unwrap(), r);
    }
}
