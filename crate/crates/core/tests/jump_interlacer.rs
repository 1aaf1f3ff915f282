use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use skewlevy::coset::CosetPoint;
use skewlevy::ensemble::par_map;
use skewlevy::group::{haar_sample, uniform_direction};
use skewlevy::jumps::{
    apply_generator_l3, interlace, sample_jump_times, semigroup_derivative, verify_inteq,
    JumpFamily, JumpMeasure,
};
use skewlevy::linalg::norm;
use skewlevy::rng::{stream, Purpose};
use skewlevy::scenarios::{RadialPoint, ScenarioGeometry};
use skewlevy::stats::{ks_two_sample, ks_vs_cdf, moment_z};

const SEED: u64 = 99;

fn families() -> [JumpFamily; 3] {
    [
        JumpFamily::PointMass { angle: FRAC_PI_2 },
        JumpFamily::Haar,
        JumpFamily::GaussianAlgebra { scale: 0.4 },
    ]
}

/// Cubic B-spline kernel of support radius 2.
fn spline(r: f64) -> f64 {
    if r < 1.0 {
        2.0 / 3.0 - r * r + 0.5 * r.powi(3)
    } else if r < 2.0 {
        (2.0 - r).powi(3) / 6.0
    } else {
        0.0
    }
}

#[test]
fn poisson_counts_and_gaps() {
    let (rate, t) = (2.0, 5.0);
    let draws: Vec<Vec<f64>> = par_map(10_000, |i| {
        sample_jump_times(rate, t, &mut stream(SEED, i as u64, Purpose::Jumps))
    });
    let counts: Vec<f64> = draws.iter().map(|d| d.len() as f64).collect();
    // Var(N) = 10 and Var((N - 10)^2) = mu4 - sigma^4 = (10 + 3 * 100) - 100 for Poisson(10).
    let mean = moment_z(&counts, rate * t, Some(rate * t)).unwrap();
    assert!(mean.statistic.abs() <= 3.0, "mean z = {}", mean.statistic);
    let sq: Vec<f64> = counts.iter().map(|c| (c - rate * t).powi(2)).collect();
    let var = moment_z(&sq, rate * t, Some(rate * t + 2.0 * (rate * t).powi(2))).unwrap();
    assert!(var.statistic.abs() <= 3.0, "variance z = {}", var.statistic);

    // Only the first three gaps: later ones are censored by the horizon, and
    // P(N(5) < 3) is about 3e-3 for rate 2, which shifts the gap CDF by about
    // 1e-3, far below the KS critical value at this sample size.
    let mut gaps = Vec::new();
    for d in &draws {
        assert!(d.windows(2).all(|w| w[0] < w[1]));
        let mut prev = 0.0;
        for &s in d.iter().take(3) {
            gaps.push(s - prev);
            prev = s;
        }
    }
    let v = ks_vs_cdf(&gaps, |x| 1.0 - (-rate * x.max(0.0)).exp()).unwrap();
    assert!(v.p_value > 0.01, "p = {}", v.p_value);
}

#[test]
fn jump_laws_are_conjugation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = haar_sample(3, &mut rng);
    for family in families() {
        let eta = JumpMeasure::new(1.0, family, 3).unwrap();
        let n = 4000;
        let a: Vec<_> = (0..n).map(|_| eta.sample(&mut rng)).collect();
        let b: Vec<_> = (0..n)
            .map(|_| k.compose(&eta.sample(&mut rng)).compose(&k.inverse()))
            .collect();
        for s in a.iter().chain(&b) {
            s.validate().unwrap();
        }
        for (i, j) in [(0, 0), (1, 2)] {
            let ea: Vec<f64> = a.iter().map(|g| g.mat()[(i, j)]).collect();
            let eb: Vec<f64> = b.iter().map(|g| g.mat()[(i, j)]).collect();
            let v = ks_two_sample(&ea, &eb).unwrap();
            assert!(
                v.p_value > 0.01,
                "{family:?} entry ({i},{j}): p = {}",
                v.p_value
            );
        }
    }
}

#[test]
fn interlaced_law_is_k_invariant() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let eta = JumpMeasure::new(1.0, JumpFamily::Haar, 3).unwrap();
    let x0 = [1.0, 0.0, 0.0];
    let k = haar_sample(3, &mut ChaCha8Rng::seed_from_u64(2));
    let kx0 = g.act(&k, &x0);
    let kinv = k.inverse();
    let n = 3000;
    let end = |x: &[f64], i: usize, salt: u64| {
        let mut a = stream(SEED + salt, i as u64, Purpose::Ambient);
        let mut j = stream(SEED + salt, i as u64, Purpose::Jumps);
        interlace(&g, Some(&eta), x, 1.0, 1e-2, &mut a, &mut j)
            .unwrap()
            .path
            .last_point()
            .to_vec()
    };
    let a: Vec<Vec<f64>> = par_map(n, |i| end(&x0, i, 0));
    let b: Vec<Vec<f64>> = par_map(n, |i| g.act(&kinv, &end(&kx0, i, 1)));
    for c in 0..3 {
        let ca: Vec<f64> = a.iter().map(|v| v[c]).collect();
        let cb: Vec<f64> = b.iter().map(|v| v[c]).collect();
        let v = ks_two_sample(&ca, &cb).unwrap();
        assert!(v.p_value > 0.01, "coordinate {c}: p = {}", v.p_value);
    }
}

#[test]
fn point_mass_jumps_are_exact_and_poisson() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let (rate, t) = (2.0, 1.0);
    let eta = JumpMeasure::new(rate, JumpFamily::PointMass { angle: FRAC_PI_2 }, 3).unwrap();
    let counts: Vec<f64> = par_map(4000, |i| {
        let mut a = stream(SEED, i as u64, Purpose::Ambient);
        let mut j = stream(SEED, i as u64, Purpose::Jumps);
        let p = interlace(&g, Some(&eta), &[1.0, 0.0, 0.0], t, 1e-2, &mut a, &mut j).unwrap();
        for r in &p.jumps {
            let want = g.act(&r.element, &r.pre);
            assert!(want
                .iter()
                .zip(&r.post)
                .all(|(u, v)| (u - v).abs() <= 1e-10));
            assert!((norm(&r.pre) - norm(&r.post)).abs() < 1e-12);
        }
        p.jumps.len() as f64
    });
    let v = moment_z(&counts, rate * t, Some(rate * t)).unwrap();
    assert!(v.statistic.abs() <= 3.0, "z = {}", v.statistic);
}

#[test]
fn conjugated_jumps_have_position_free_angular_law() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let space = g.space();
    let eta = JumpMeasure::new(1.0, JumpFamily::PointMass { angle: FRAC_PI_2 }, 3).unwrap();
    let y = g.radial_embed(&RadialPoint(vec![1.5]));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let zs = [
        CosetPoint::Direction(vec![1.0, 0.0, 0.0]),
        CosetPoint::Direction(uniform_direction(3, &mut rng)),
    ];
    let n = 4000;
    let samples: Vec<Vec<Vec<f64>>> = zs
        .iter()
        .map(|z| {
            let s = space.section(z);
            let si = s.inverse();
            (0..n)
                .map(|_| {
                    let sigma = si.compose(&eta.sample(&mut rng)).compose(&s);
                    space.encode(&g.project_angular(&g.act(&sigma, &y)).unwrap())
                })
                .collect()
        })
        .collect();
    for c in 0..3 {
        let a: Vec<f64> = samples[0].iter().map(|v| v[c]).collect();
        let b: Vec<f64> = samples[1].iter().map(|v| v[c]).collect();
        let v = ks_two_sample(&a, &b).unwrap();
        assert!(v.p_value > 0.01, "coordinate {c}: p = {}", v.p_value);
    }
}

#[test]
fn semigroup_derivative_matches_generator() {
    // f is a spline bump centred at x0, so grad f(x0) = 0 and L^0 f(x0) = -3.
    // Under Haar jumps |sigma x0 - x0|^2 is uniform on [0, 4], so the jump
    // distance has density d/2 on [0, 2].
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let rate = 2.0;
    let eta = JumpMeasure::new(rate, JumpFamily::Haar, 3).unwrap();
    let x0 = [1.0, 0.0, 0.0];
    let f = move |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        spline(norm(&d))
    };
    let m = 20_000;
    let h = 2.0 / m as f64;
    let mut jump_mean = 0.0;
    for i in 0..m {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let mid = 0.5 * (a + b);
        jump_mean +=
            h / 6.0 * (spline(a) * a / 2.0 + 4.0 * spline(mid) * mid / 2.0 + spline(b) * b / 2.0);
    }
    let oracle = -3.0 + rate * (jump_mean - spline(0.0));

    let l3 = apply_generator_l3(
        &f,
        &x0,
        &g,
        Some(&eta),
        200_000,
        &mut stream(SEED, 0, Purpose::Jumps),
    );
    assert!(
        (l3.value - oracle).abs() <= 4.0 * l3.se + 1e-3,
        "L3 {l3:?} vs {oracle}"
    );

    let est = semigroup_derivative(&g, &eta, &x0, 1e-3, 1e-4, &f, 100_000, SEED).unwrap();
    assert!(
        (est.value - oracle).abs() <= 0.05 * oracle.abs(),
        "{est:?} vs {oracle}"
    );
}

#[test]
fn first_jump_equation_residual() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let eta = JumpMeasure::new(1.0, JumpFamily::Haar, 3).unwrap();
    let f = |x: &[f64]| (-((x[0] - 1.0).powi(2) + x[1].powi(2) + x[2].powi(2))).exp();
    let r = verify_inteq(
        &g,
        Some(&eta),
        &[1.0, 0.0, 0.0],
        0.25,
        1e-2,
        &f,
        100_000,
        SEED,
    )
    .unwrap();
    assert!(r.z().abs() <= 3.0, "residual {} z {}", r.residual(), r.z());

    let zero = verify_inteq(&g, None, &[1.0, 0.0, 0.0], 0.25, 1e-2, &f, 20_000, SEED).unwrap();
    assert!(
        zero.z().abs() <= 3.0,
        "residual {} z {}",
        zero.residual(),
        zero.z()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jump_times_are_sorted_and_in_range(rate in 0.1f64..20.0, t in 0.0f64..5.0, seed in any::<u64>()) {
        let times = sample_jump_times(rate, t, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(times.iter().all(|&s| s > 0.0 && s <= t));
    }

    #[test]
    fn sampled_jumps_are_rotations(family in 0usize..3, seed in any::<u64>()) {
        let eta = JumpMeasure::new(1.0, families()[family], 4).unwrap();
        let s = eta.sample(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(s.validate().is_ok());
    }
}
