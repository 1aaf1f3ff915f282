use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use skewlevy::coset::{CosetPoint, CosetSpace, FiniteIsotropy};
use skewlevy::group::{haar_sample, AlgebraBasis, AlgebraElement, GroupElement, GroupTag};
use skewlevy::linalg::{norm, Mat};
use skewlevy::stats::ks_vs_cdf;

fn scaled(c: &[f64], max_norm: f64) -> Vec<f64> {
    let r = norm(c);
    if r > max_norm {
        c.iter().map(|x| x * max_norm / r).collect()
    } else {
        c.to_vec()
    }
}

fn spaces() -> Vec<CosetSpace> {
    vec![
        CosetSpace::sphere(3).unwrap(),
        CosetSpace::sphere(4).unwrap(),
        CosetSpace::frame(2, FiniteIsotropy::SignFlips).unwrap(),
        CosetSpace::frame(3, FiniteIsotropy::SignFlips).unwrap(),
        CosetSpace::frame(4, FiniteIsotropy::SignFlips).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exp_log_round_trip(n in 2usize..=6, raw in prop::collection::vec(-1.0f64..1.0, 15)) {
        let basis = AlgebraBasis::so(n);
        let c = scaled(&raw[..basis.dim()], 0.5);
        let xi = basis.combine(&c);
        let back = xi.exp(GroupTag::SpecialOrthogonal(n)).unwrap().log().unwrap();
        prop_assert!(back.mat().dist_fro(xi.mat()) <= 1e-9);
    }

    #[test]
    fn adjoint_preserves_brackets(n in 2usize..=5, seed in any::<u64>(), raw in prop::collection::vec(-2.0f64..2.0, 20)) {
        let basis = AlgebraBasis::so(n);
        let m = basis.dim();
        let a = basis.combine(&raw[..m]);
        let b = basis.combine(&raw[10..10 + m]);
        let g = haar_sample(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let lhs = a.bracket(&b).conjugate(&g);
        let rhs = a.conjugate(&g).bracket(&b.conjugate(&g));
        prop_assert!(lhs.mat().dist_fro(rhs.mat()) <= 1e-9);
    }

    #[test]
    fn section_projects_back(which in 0usize..5, seed in any::<u64>()) {
        let space = spaces()[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = haar_sample(space.group_order(), &mut rng);
        let z = space.project(&k);
        let back = space.project(&space.section(&z));
        prop_assert!(space.same_coset(&back, &z, 1e-12));
    }

    #[test]
    fn sphere_section_near_antipode(n in 3usize..=5, raw in prop::collection::vec(-1.0f64..1.0, 5), eps in 0.0f64..0.2) {
        let space = CosetSpace::sphere(n).unwrap();
        let mut v = vec![-1.0; 1];
        v.extend(raw[..n - 1].iter().map(|x| x * eps));
        let r = norm(&v);
        let z = CosetPoint::Direction(v.iter().map(|x| x / r).collect());
        let back = space.project(&space.section(&z));
        prop_assert!(space.same_coset(&back, &z, 1e-12));
    }

    #[test]
    fn exp_coordinates_are_equivariant(which in 0usize..5, seed in any::<u64>(), raw in prop::collection::vec(-1.0f64..1.0, 6)) {
        let space = spaces()[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = space.p_basis();
        let phi = scaled(&raw[..basis.dim()], 0.6);
        let z = space.from_exp_coords(&phi);
        let m = space.random_isotropy(&mut rng);
        let lhs = space.exp_coords(&space.act(&m, &z)).unwrap();
        let ad = basis.adjoint(&m);
        for (i, row) in ad.iter().enumerate() {
            let rhs: f64 = row.iter().zip(&phi).map(|(a, p)| a * p).sum();
            prop_assert!((lhs[i] - rhs).abs() <= 1e-9, "coordinate {i}: {} vs {rhs}", lhs[i]);
        }
    }

    #[test]
    fn p_basis_is_ad_m_stable(which in 0usize..5, seed in any::<u64>()) {
        let space = spaces()[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = space.p_basis();
        let m = space.random_isotropy(&mut rng);
        for e in basis.elements() {
            let img = AlgebraElement::new(*e).conjugate(&m);
            let proj = basis.combine(&basis.coords(&img));
            prop_assert!(proj.mat().dist_fro(img.mat()) <= 1e-10);
        }
    }
}

#[test]
fn orthogonality_survives_long_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [3, 6] {
        let tag = GroupTag::SpecialOrthogonal(n);
        let basis = AlgebraBasis::so(n);
        let steps: Vec<GroupElement> = (0..16)
            .map(|i| {
                let c: Vec<f64> = (0..basis.dim())
                    .map(|j| 0.3 * ((i * 7 + j) as f64).sin())
                    .collect();
                basis.combine(&c).exp(tag).unwrap()
            })
            .collect();
        let mut k = haar_sample(n, &mut rng);
        for i in 0..10_000 {
            k = k.compose(&steps[i % steps.len()]);
        }
        let err = (k.mat().transpose() * *k.mat()).dist_fro(&Mat::identity(n));
        assert!(err <= 1e-8, "SO({n}) drift {err:e}");
    }
}

#[test]
fn haar_first_column_has_uniform_height() {
    // Archimedes: the height of a uniform point on S^2 is uniform on [-1, 1].
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h: Vec<f64> = (0..10_000)
        .map(|_| haar_sample(3, &mut rng).mat()[(2, 0)])
        .collect();
    let v = ks_vs_cdf(&h, |x| (0.5 * (x + 1.0)).clamp(0.0, 1.0)).unwrap();
    assert!(v.p_value > 0.01, "p = {}", v.p_value);
}

#[test]
fn haar_second_moments() {
    // E[g_ij g_kl] = delta_ik delta_jl / n for Haar on SO(n), n >= 3.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 4;
    let draws = 20_000;
    let mut acc = vec![0.0; n * n];
    let mut cross = 0.0;
    for _ in 0..draws {
        let g = haar_sample(n, &mut rng);
        for (a, x) in acc.iter_mut().zip(g.mat().as_slice()) {
            *a += x * x;
        }
        cross += g.mat()[(0, 0)] * g.mat()[(1, 1)];
    }
    // Var(g_ij^2) = 3/(n(n+2)) - 1/n^2 for a coordinate of a uniform unit vector.
    let nf = n as f64;
    let se = ((3.0 / (nf * (nf + 2.0)) - 1.0 / (nf * nf)) / draws as f64).sqrt();
    for a in acc {
        assert!((a / draws as f64 - 1.0 / nf).abs() < 5.0 * se);
    }
    assert!((cross / draws as f64).abs() < 5.0 / (nf * (draws as f64).sqrt()));
}
