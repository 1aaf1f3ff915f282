use std::f64::consts::PI;

use proptest::prelude::*;

use skewlevy::ensemble::par_map;
use skewlevy::experiments::bes3_cdf;
use skewlevy::group::{GroupElement, GroupTag};
use skewlevy::linalg::Mat;
use skewlevy::path::CadlagPath;
use skewlevy::rng::{stream, Purpose, StreamId};
use skewlevy::scenarios::{RadialPoint, ScenarioGeometry};
use skewlevy::sde::{
    compute_time_change, factorize_ua, integrate_coupled_yk, sample_group_bm, sample_sphere_bm,
    simulate_invariant_diffusion, MixedFields,
};
use skewlevy::stats::{ks_two_sample, ks_vs_cdf, mean_se, moment_z, normal_cdf, z_test};

const SEED: u64 = 2024;

fn coupled(
    geom: &ScenarioGeometry,
    y0: &[f64],
    t: f64,
    dt: f64,
    i: usize,
) -> skewlevy::sde::CoupledPath {
    let k0 = GroupElement::identity(geom.tag());
    integrate_coupled_yk(
        geom,
        &RadialPoint(y0.to_vec()),
        &k0,
        t,
        dt,
        StreamId::new(SEED, i as u64),
        &MixedFields::none(),
    )
    .unwrap()
}

#[test]
fn euclid_second_moment() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let sq: Vec<f64> = par_map(10_000, |i| {
        let p = simulate_invariant_diffusion(
            &g,
            &[1.0, 0.0, 0.0],
            1.0,
            1e-2,
            &mut stream(SEED, i as u64, Purpose::Ambient),
        )
        .unwrap();
        p.last_point().iter().map(|x| x * x).sum()
    });
    let v = moment_z(&sq, 4.0, None).unwrap();
    assert!(v.statistic.abs() <= 3.0, "z = {}", v.statistic);
}

#[test]
fn sym_entry_marginals() {
    // Entrywise normalisation: diagonal increments have variance 2t and
    // off-diagonal increments variance t, so that a(y) = (l1 - l2)^-2.
    let g = ScenarioGeometry::sym_matrices(2).unwrap();
    let x0 = [1.0, -1.0, 0.0];
    let t = 0.5;
    let ends: Vec<Vec<f64>> = par_map(10_000, |i| {
        let p = simulate_invariant_diffusion(
            &g,
            &x0,
            t,
            1e-2,
            &mut stream(SEED, i as u64, Purpose::Ambient),
        )
        .unwrap();
        p.last_point().iter().zip(&x0).map(|(a, b)| a - b).collect()
    });
    for (c, var) in [(0, 2.0 * t), (1, 2.0 * t), (2, t)] {
        let s: Vec<f64> = ends.iter().map(|e| e[c]).collect();
        let sd = var.sqrt();
        let v = ks_vs_cdf(&s, |x| normal_cdf(x / sd)).unwrap();
        assert!(v.p_value > 0.01, "coordinate {c}: p = {}", v.p_value);
    }
}

#[test]
fn zero_horizon_is_constant() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let p = simulate_invariant_diffusion(
        &g,
        &[1.0, 2.0, 3.0],
        0.0,
        1e-3,
        &mut stream(1, 0, Purpose::Ambient),
    )
    .unwrap();
    assert_eq!(p.len(), 1);
    assert_eq!(p.point(0), &[1.0, 2.0, 3.0]);
}

#[test]
fn ambient_paths_pass_grid_and_continuity_checks() {
    let dt = 1e-3;
    for (g, x0) in [
        (
            ScenarioGeometry::euclid_son(3).unwrap(),
            vec![1.0, 0.0, 0.0],
        ),
        (
            ScenarioGeometry::sym_matrices(2).unwrap(),
            vec![1.0, -1.0, 0.0],
        ),
        (
            ScenarioGeometry::product_space().unwrap(),
            vec![0.0, 1.0, 0.0],
        ),
        (
            ScenarioGeometry::sphere_polar(2).unwrap(),
            vec![0.0, 1.0, 0.0],
        ),
    ] {
        let p =
            simulate_invariant_diffusion(&g, &x0, 1.0, dt, &mut stream(SEED, 5, Purpose::Ambient))
                .unwrap();
        p.check_grid(dt).unwrap();
        assert_eq!(
            p.continuity_violations(g.noise_scale(), dt),
            0,
            "{:?}",
            g.kind()
        );
    }
}

#[test]
fn coupled_group_path_stays_orthogonal() {
    let g = ScenarioGeometry::sym_matrices(3).unwrap();
    let c = coupled(&g, &[1.0, 0.0, -1.0], 1.0, 1e-3, 0);
    let mut worst: f64 = 0.0;
    for i in 0..c.group.len() {
        let k = Mat::from_row_slice(3, c.group.point(i));
        worst = worst.max((k.transpose() * k).dist_fro(&Mat::identity(3)));
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn coupled_and_ambient_laws_agree() {
    let n = 3000;
    let t = 0.5;
    let dt = 1e-3;
    let cases: Vec<(ScenarioGeometry, Vec<f64>)> = vec![
        (ScenarioGeometry::euclid_son(3).unwrap(), vec![1.0]),
        (ScenarioGeometry::sym_matrices(2).unwrap(), vec![1.0, -1.0]),
        (ScenarioGeometry::product_space().unwrap(), vec![0.0]),
        (ScenarioGeometry::sphere_polar(2).unwrap(), vec![PI / 2.0]),
    ];
    for (g, y0) in cases {
        let x0 = g.radial_embed(&RadialPoint(y0.clone()));
        let a: Vec<Vec<f64>> = par_map(n, |i| {
            let c = coupled(&g, &y0, t, dt, i);
            assert!(c.exit.is_none(), "{:?} exit {:?}", g.kind(), c.exit);
            c.ambient(&g).last_point().to_vec()
        });
        let b: Vec<Vec<f64>> = par_map(n, |i| {
            simulate_invariant_diffusion(
                &g,
                &x0,
                t,
                dt,
                &mut stream(SEED + 1, i as u64, Purpose::Ambient),
            )
            .unwrap()
            .last_point()
            .to_vec()
        });
        for c in 0..x0.len() {
            let ca: Vec<f64> = a.iter().map(|v| v[c]).collect();
            let cb: Vec<f64> = b.iter().map(|v| v[c]).collect();
            let v = ks_two_sample(&ca, &cb).unwrap();
            assert!(
                v.p_value > 0.01,
                "{:?} coordinate {c}: p = {}",
                g.kind(),
                v.p_value
            );
        }
    }
}

#[test]
fn radial_marginal_is_bessel3() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let r: Vec<f64> = par_map(4000, |i| {
        coupled(&g, &[1.0], 1.0, 1e-3, i).radial.last_point()[0]
    });
    let v = ks_vs_cdf(&r, |s| bes3_cdf(s, 1.0, 1.0)).unwrap();
    assert!(v.p_value > 0.01, "p = {}", v.p_value);
}

#[test]
fn ua_factorisation_with_zero_mixed_fields() {
    for g in [
        ScenarioGeometry::euclid_son(3).unwrap(),
        ScenarioGeometry::sphere_polar(3).unwrap(),
    ] {
        for i in 0..100 {
            let c = coupled(&g, &[1.0], 1.0, 1e-3, i);
            let ua = factorize_ua(&g, &c, &MixedFields::none()).unwrap();
            assert!(ua.max_error <= 1e-6);
            let e = Mat::identity(g.group_order());
            for s in (0..ua.a.len()).step_by(97) {
                assert_eq!(Mat::from_row_slice(g.group_order(), ua.a.point(s)), e);
                let u = Mat::from_row_slice(g.group_order(), ua.u.point(s));
                let k = Mat::from_row_slice(g.group_order(), c.group.point(s));
                assert!(u.dist_fro(&k) <= 1e-6);
            }
        }
    }
}

fn constant_path(value: f64, t: f64, dt: f64) -> CadlagPath {
    let mut p = CadlagPath::new(1);
    let steps = (t / dt).round() as usize;
    for i in 0..=steps {
        p.push(i as f64 * dt, &[value]);
    }
    p
}

#[test]
fn clock_closed_forms() {
    let e = ScenarioGeometry::euclid_son(3).unwrap();
    let tc = compute_time_change(&e, &constant_path(2.0, 1.0, 1e-3)).unwrap();
    assert!((tc.total() - 0.25).abs() < 1e-12);
    let s = ScenarioGeometry::sphere_polar(3).unwrap();
    let tc = compute_time_change(&s, &constant_path(PI / 2.0, 1.0, 1e-3)).unwrap();
    for (t, a) in tc.grid.iter().zip(&tc.values) {
        assert!((t - a).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clock_is_monotone_and_local(seed in any::<u64>(), s in 0usize..400, len in 1usize..600) {
        let g = ScenarioGeometry::euclid_son(3).unwrap();
        let k0 = GroupElement::identity(GroupTag::SpecialOrthogonal(3));
        let c = integrate_coupled_yk(&g, &RadialPoint(vec![1.0]), &k0, 1.0, 1e-3, StreamId::new(seed, 0), &MixedFields::none()).unwrap();
        let tc = compute_time_change(&g, &c.radial).unwrap();
        prop_assert_eq!(tc.values[0], 0.0);
        prop_assert!(tc.values.windows(2).all(|w| w[1] >= w[0]));

        // independent trapezoid of r^-2
        let r = &c.radial;
        let mut acc = 0.0;
        for i in 1..r.len() {
            acc += 0.5 * (r.time(i) - r.time(i - 1)) * (r.point(i - 1)[0].powi(-2) + r.point(i)[0].powi(-2));
        }
        prop_assert!((acc - tc.total()).abs() <= 1e-12 * acc.max(1.0));

        // increments depend only on the restricted path
        let t_idx = (s + len).min(r.len() - 1);
        let mut seg = CadlagPath::new(1);
        for i in s..=t_idx {
            seg.push(r.time(i) - r.time(s), r.point(i));
        }
        let sub = compute_time_change(&g, &seg).unwrap();
        let inc = tc.increment(s, t_idx);
        prop_assert!((sub.total() - inc).abs() <= 1e-12 * inc.max(1.0));
    }
}

#[test]
fn weak_order_under_step_halving() {
    // The coarse path aggregates the fine path's Gaussian increments, so the
    // two estimates differ only by discretisation error.
    let n = 10_000;
    let t = 1.0;
    let dt = 1e-2;
    let diffs: Vec<(f64, f64)> = par_map(n, |i| {
        let fine = sample_group_bm(
            3,
            t,
            dt,
            2,
            false,
            &mut stream(SEED, i as u64, Purpose::Angular),
        )
        .unwrap();
        let coarse = sample_group_bm(
            3,
            t,
            dt,
            2,
            true,
            &mut stream(SEED, i as u64, Purpose::Angular),
        )
        .unwrap();
        (fine.last_point()[0], coarse.last_point()[0])
    });
    let fine: Vec<f64> = diffs.iter().map(|d| d.0).collect();
    let coarse: Vec<f64> = diffs.iter().map(|d| d.1).collect();
    let (mf, se) = mean_se(&fine);
    let (mc, _) = mean_se(&coarse);
    assert!((mf - mc).abs() < se, "{mf} vs {mc}, se {se}");
}

#[test]
fn sphere_bm_becomes_uniform() {
    let z0 = [1.0, 0.0, 0.0];
    let h: Vec<f64> = par_map(10_000, |i| {
        sample_sphere_bm(
            &z0,
            20.0,
            1e-2,
            &mut stream(SEED, i as u64, Purpose::Angular),
        )
        .unwrap()
        .last_point()[2]
    });
    let v = ks_vs_cdf(&h, |x| (0.5 * (x + 1.0)).clamp(0.0, 1.0)).unwrap();
    assert!(v.p_value > 0.01, "p = {}", v.p_value);
}

#[test]
fn sphere_bm_first_harmonic_decay() {
    // With generator Δ/2 on S^d, the coordinate functions are eigenfunctions
    // of Δ with eigenvalue -d, so E[z_T . z_0] = exp(-d T / 2).
    let t = 0.5;
    for d in [2usize, 3] {
        let mut z0 = vec![0.0; d + 1];
        z0[0] = 1.0;
        let dots: Vec<f64> = par_map(10_000, |i| {
            sample_sphere_bm(&z0, t, 1e-3, &mut stream(SEED, i as u64, Purpose::Angular))
                .unwrap()
                .last_point()[0]
        });
        let (m, se) = mean_se(&dots);
        let v = z_test(m, se, (-(d as f64) * t / 2.0).exp());
        assert!(v.statistic.abs() <= 3.0, "d = {d}: z = {}", v.statistic);
    }
}
