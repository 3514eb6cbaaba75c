//! Shared fixtures for the benchmark targets.

use kummerdens_core::empirical::{CurveOverQ, RationalPoint};
use kummerdens_core::rational::parse_rational;

/// `y² + y = x³ + x²` with generator (0, 0).
pub fn curve_43a1() -> (CurveOverQ, RationalPoint) {
    let curve = CurveOverQ::new([0, 1, 1, 0, 0]).expect("non-singular");
    let point = RationalPoint {
        x: parse_rational("0").unwrap(),
        y: parse_rational("0").unwrap(),
    };
    (curve, point)
}

/// `y² + y = x³ + 6x + 27` with generator (5, 13).
pub fn curve_153b2() -> (CurveOverQ, RationalPoint) {
    let curve = CurveOverQ::new([0, 0, 1, 6, 27]).expect("non-singular");
    let point = RationalPoint {
        x: parse_rational("5").unwrap(),
        y: parse_rational("13").unwrap(),
    };
    (curve, point)
}

/// A fixed batch of primes just below 10⁶, for order benchmarks.
pub fn primes_near_million(count: usize) -> Vec<u64> {
    kummerdens_core::empirical::sieve_primes(1_000_000)
        .into_iter()
        .rev()
        .take(count)
        .collect()
}
