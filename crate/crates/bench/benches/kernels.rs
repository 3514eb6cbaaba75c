//! Benchmarks for the hot paths: point orders near 10⁶, exhaustive matrix
//! census, closed-form density evaluation, and a short empirical sweep.

use criterion::{criterion_group, criterion_main, Criterion};
use kummerdens_bench::{curve_43a1, primes_near_million};
use kummerdens_core::classmeasure::DEFAULT_ENUM_BOUND;
use kummerdens_core::density::dens_ell_maximal;
use kummerdens_core::empirical::{
    estimate_density, point_order, reduce_point, CurveModP, FqPoint, Reduction,
};
use kummerdens_core::modmat::count_by_class_and_det;
use std::hint::black_box;

fn bench_point_order(c: &mut Criterion) {
    let (curve, point) = curve_43a1();
    let primes = primes_near_million(64);
    c.bench_function("point_order_bsgs_near_1e6_x64", |b| {
        b.iter(|| {
            let mut acc = 0u64;
            for &p in &primes {
                let reduced = match reduce_point(&curve, &point, p).unwrap() {
                    Reduction::Affine(x, y) => FqPoint::Affine(x, y),
                    _ => continue,
                };
                let cm = CurveModP::new(&curve, p).unwrap();
                acc ^= point_order(&cm, reduced).unwrap();
            }
            black_box(acc)
        })
    });
}

fn bench_census(c: &mut Criterion) {
    c.bench_function("gl2_mod8_census", |b| {
        b.iter(|| {
            let n = count_by_class_and_det(2, 3, DEFAULT_ENUM_BOUND, |k, _| !k.saturated).unwrap();
            black_box(n)
        })
    });
}

fn bench_density_closed_form(c: &mut Criterion) {
    c.bench_function("dens_ell_maximal_43_e3", |b| {
        b.iter(|| black_box(dens_ell_maximal(black_box(43), black_box(3)).unwrap()))
    });
}

fn bench_sweep(c: &mut Criterion) {
    let (curve, point) = curve_43a1();
    c.bench_function("empirical_sweep_1e4", |b| {
        b.iter(|| black_box(estimate_density(&curve, &point, 86, 10_000).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_point_order, bench_census, bench_density_closed_form, bench_sweep
}
criterion_main!(benches);
