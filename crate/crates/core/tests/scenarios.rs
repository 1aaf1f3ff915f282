use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewlevy::coset::CosetPoint;
use skewlevy::group::{haar_sample, plane_rotation};
use skewlevy::linalg::Mat;
use skewlevy::scenarios::{RadialPoint, ScenarioGeometry, ScenarioKind};

fn geometry(which: usize, n: usize) -> ScenarioGeometry {
    match which {
        0 => ScenarioGeometry::euclid_son(n).unwrap(),
        1 => ScenarioGeometry::sym_matrices(n).unwrap(),
        2 => ScenarioGeometry::product_space().unwrap(),
        _ => ScenarioGeometry::sphere_polar(n).unwrap(),
    }
}

fn random_radial(g: &ScenarioGeometry, rng: &mut ChaCha8Rng) -> RadialPoint {
    RadialPoint(match g.kind() {
        ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => {
            vec![rng.random_range(0.5..3.0)]
        }
        ScenarioKind::SymMatrices => {
            let mut v = vec![rng.random_range(-1.0..1.0)];
            for _ in 1..g.size() {
                let last = *v.last().unwrap();
                v.push(last - rng.random_range(0.3..1.5));
            }
            v
        }
        ScenarioKind::ProductSpace => vec![rng.random_range(-2.0..2.0)],
        ScenarioKind::SpherePolar => vec![rng.random_range(0.3..PI - 0.3)],
    })
}

fn random_interior(g: &ScenarioGeometry, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let y = random_radial(g, rng);
    let k = haar_sample(g.group_order(), rng);
    g.compose_group(&k, &y)
}

/// A smooth function on `K/M`; the frame version only sees squared entries,
/// so it is constant on sign-flip cosets.
fn angular_test(z: &CosetPoint) -> f64 {
    match z {
        CosetPoint::Direction(v) => (0.7 * v[0] - 0.4 * v[1]).exp(),
        CosetPoint::Frame(q) => {
            let n = q.n();
            let mut s = 1.0;
            for i in 0..n {
                for j in 0..n {
                    s += 0.3 * ((i + 2 * j + 1) as f64).sin() * q[(i, j)].powi(2);
                }
            }
            s
        }
    }
}

fn radial_test(y: &RadialPoint) -> f64 {
    2.0 + y
        .0
        .iter()
        .enumerate()
        .map(|(i, v)| (0.4 * (i as f64 + 1.0) * v).sin())
        .sum::<f64>()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn radial_projection_is_k_invariant(which in 0usize..4, n in 2usize..=4, seed in any::<u64>()) {
        let g = geometry(which, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_interior(&g, &mut rng);
        let k = haar_sample(g.group_order(), &mut rng);
        let y0 = g.project_radial(&x).unwrap();
        let y1 = g.project_radial(&g.act(&k, &x)).unwrap();
        prop_assert!(close(&y0.0, &y1.0, 1e-9));
    }

    #[test]
    fn decomposition_is_bijective(which in 0usize..4, n in 2usize..=4, seed in any::<u64>()) {
        let g = geometry(which, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_interior(&g, &mut rng);
        let (y, z) = g.split(&x).unwrap();
        prop_assert!(close(&g.compose(&z, &y), &x, 1e-9));
    }

    #[test]
    fn l2z_coefficient_is_ad_m_invariant(which in 0usize..4, n in 2usize..=4, seed in any::<u64>()) {
        let g = geometry(which, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_radial(&g, &mut rng);
        let a = g.l2z_coeff(&y).unwrap();
        let m = g.space().random_isotropy(&mut rng);
        let ad = g.space().p_basis().adjoint(&m);
        let p = a.len();
        for i in 0..p {
            for j in 0..p {
                let conj: f64 = (0..p).map(|k| ad[i][k] * a[k] * ad[j][k]).sum();
                let target = if i == j { a[i] } else { 0.0 };
                prop_assert!((conj - target).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn generator_split_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let geoms = [
        geometry(0, 2),
        geometry(0, 3),
        geometry(1, 2),
        geometry(1, 3),
        geometry(1, 4),
        geometry(2, 0),
        geometry(3, 2),
        geometry(3, 3),
    ];
    for g in &geoms {
        for _ in 0..10 {
            let x = random_interior(g, &mut rng);
            let (lhs, rhs) = g
                .generator_split(&x, &radial_test, &angular_test, 1e-4)
                .unwrap();
            let rel = (lhs - rhs).abs() / rhs.abs().max(1e-2);
            assert!(
                rel <= 1e-3,
                "{:?} n = {}: {lhs} vs {rhs}",
                g.kind(),
                g.size()
            );
        }
    }
}

#[test]
fn dimensions_add_up() {
    for which in 0..4 {
        for n in 2..=4 {
            let g = geometry(which, n);
            assert_eq!(g.dim_x(), g.dim_y() + g.dim_z(), "{:?}", g.kind());
        }
    }
}

#[test]
fn euclid_radius() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    assert!((g.project_radial(&[3.0, 4.0, 0.0]).unwrap().0[0] - 5.0).abs() < 1e-15);
}

#[test]
fn sym_eigenvalues_non_ascending() {
    let g = ScenarioGeometry::sym_matrices(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let q = haar_sample(2, &mut rng);
        let m = *q.mat() * Mat::diag(&[1.0, 2.0]) * q.mat().transpose();
        let y = g.project_radial(&g.sym_from_matrix(&m)).unwrap();
        assert!(close(&y.0, &[2.0, 1.0], 1e-12), "{:?}", y.0);
    }
}

#[test]
fn sphere_polar_angle() {
    let g = ScenarioGeometry::sphere_polar(2).unwrap();
    let y = g
        .project_radial(&[0.7f64.cos(), 0.7f64.sin(), 0.0])
        .unwrap();
    assert!((y.0[0] - 0.7).abs() < 1e-15);
}

#[test]
fn transversal_points_have_trivial_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for which in 0..4 {
        let g = geometry(which, 3);
        let y = random_radial(&g, &mut rng);
        let z = g.project_angular(&g.radial_embed(&y)).unwrap();
        assert!(
            g.space().same_coset(&z, &g.space().origin(), 1e-12),
            "{:?}",
            g.kind()
        );
    }
}

#[test]
fn euclid_angular_part_of_axis_point() {
    let g = ScenarioGeometry::euclid_son(3).unwrap();
    let x = [0.0, 5.0, 0.0];
    let z = g.project_angular(&x).unwrap();
    let rot = plane_rotation(3, 0, 1, PI / 2.0);
    assert!(g.space().same_coset(&z, &g.space().project(&rot), 1e-12));
    let (y, z) = g.split(&x).unwrap();
    assert!(close(&g.compose(&z, &y), &x, 1e-12));
}

#[test]
fn sym_angular_part_is_eigenframe() {
    let g = ScenarioGeometry::sym_matrices(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let q = haar_sample(2, &mut rng);
        let x = g.sym_from_matrix(&(*q.mat() * Mat::diag(&[2.0, 1.0]) * q.mat().transpose()));
        let (y, z) = g.split(&x).unwrap();
        assert!(g.space().same_coset(&z, &CosetPoint::Frame(*q.mat()), 1e-9));
        assert!(close(&g.compose(&z, &y), &x, 1e-9));
    }
}

#[test]
fn l2z_closed_forms() {
    let e = ScenarioGeometry::euclid_son(3).unwrap();
    assert!(close(
        &e.l2z_coeff(&RadialPoint(vec![2.0])).unwrap(),
        &[0.25, 0.25],
        1e-15
    ));
    let s = ScenarioGeometry::sphere_polar(3).unwrap();
    assert!(close(
        &s.l2z_coeff(&RadialPoint(vec![PI / 2.0])).unwrap(),
        &[1.0, 1.0],
        1e-15
    ));
    let m = ScenarioGeometry::sym_matrices(2).unwrap();
    let a = m.l2z_coeff(&RadialPoint(vec![1.5, -0.5])).unwrap();
    assert!(close(&a, &[0.25], 1e-15));
}

#[test]
fn reference_points_are_interior() {
    for kind in ScenarioKind::ALL {
        let g = ScenarioGeometry::new(kind, 3).unwrap();
        let x = g.reference_point();
        g.validate_point(&x).unwrap();
        assert!(g.is_interior(&x), "{kind:?}");
    }
}
