//! Path-level splitting `x_t = S(z_t) . y_t` with a continuously chosen section.

use crate::coset::{Chart, CosetPoint, CosetSpace};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::path::CadlagPath;
use crate::scenarios::ScenarioGeometry;

/// Reconstruction tolerance, relative to `1 + |x|`.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DecomposedPath {
    pub radial: CadlagPath,
    pub angular: CadlagPath,
    pub exit_index: Option<usize>,
    pub chart_switches: Vec<usize>,
    pub space: CosetSpace,
}

/// First index where both `x_t` and `x_{t-}` leave `X°`, or where the
/// path's lifetime ends.
pub fn detect_exit(x: &CadlagPath, geom: &ScenarioGeometry) -> Option<usize> {
    let life_end = x.lifetime.map(|l| l + 1).filter(|&e| e < x.len());
    let boundary =
        (0..x.len()).find(|&i| !geom.is_interior(x.point(i)) && !geom.is_interior(x.left_limit(i)));
    match (boundary, life_end) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

struct Chooser<'a> {
    geom: &'a ScenarioGeometry,
    prev: Option<(CosetPoint, usize)>,
}

impl Chooser<'_> {
    /// Picks the representative of `z` closest to the previous one and
    /// returns it with a chart label.
    fn choose(&mut self, z: CosetPoint) -> (CosetPoint, usize) {
        let space = self.geom.space();
        let chosen = match (&z, &self.prev) {
            (CosetPoint::Frame(q), Some((CosetPoint::Frame(p), _))) => {
                let (r, idx) = space.nearest_representative(q, p);
                (CosetPoint::Frame(r), idx)
            }
            (CosetPoint::Frame(_), _) => (z, 0),
            (CosetPoint::Direction(_), _) => {
                let chart = match space.section_with_chart(&z).1 {
                    Chart::Primary => 0,
                    Chart::Antipodal => 1,
                };
                (z, chart)
            }
        };
        self.prev = Some(chosen.clone());
        chosen
    }
}

/// Splits an ambient path into radial and angular paths up to the exit time.
pub fn decompose_path(x: &CadlagPath, geom: &ScenarioGeometry) -> Result<DecomposedPath> {
    let exit = detect_exit(x, geom);
    let end = exit.unwrap_or(x.len());
    if end == 0 {
        return Err(Error::Boundary(
            "path starts outside the principal-orbit set".into(),
        ));
    }
    let space = *geom.space();
    let mut radial = CadlagPath::with_capacity(geom.dim_y(), end);
    let mut angular = CadlagPath::with_capacity(space.point_dim(), end);
    radial.seed = x.seed;
    angular.seed = x.seed;
    let mut chooser = Chooser { geom, prev: None };
    let mut switches = Vec::new();
    let mut last_chart = None;
    for i in 0..end {
        let t = x.time(i);
        let mut split_one = |p: &[f64]| -> Result<(Vec<f64>, Vec<f64>, usize)> {
            let (y, z) = geom.split(p).map_err(|_| {
                Error::Boundary(format!(
                    "point at t = {t} left X° while its left limit stayed inside"
                ))
            })?;
            let (z, chart) = chooser.choose(z);
            let back = geom.compose(&z, &y);
            let err: f64 = back
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if err > RECONSTRUCTION_TOL * (1.0 + norm(p)) {
                return Err(Error::Accuracy(format!(
                    "reconstruction error {err:.2e} at t = {t}"
                )));
            }
            Ok((y.0, space.encode(&z), chart))
        };
        if x.is_jump(i) {
            let (yl, zl, _) = split_one(x.left_limit(i))?;
            let (y, z, chart) = split_one(x.point(i))?;
            radial.push_jump(t, &yl, &y);
            angular.push_jump(t, &zl, &z);
            last_chart = Some(chart);
        } else {
            let (y, z, chart) = split_one(x.point(i))?;
            if last_chart.is_some_and(|c| c != chart) {
                switches.push(i);
            }
            last_chart = Some(chart);
            radial.push(t, &y);
            angular.push(t, &z);
        }
    }
    if exit.is_some() {
        radial.lifetime = Some(end - 1);
        angular.lifetime = Some(end - 1);
    }
    Ok(DecomposedPath {
        radial,
        angular,
        exit_index: exit,
        chart_switches: switches,
        space,
    })
}

/// `S(z_{tau-})^{-1} z_tau` at every jump mark.
pub fn extract_angular_jumps(d: &DecomposedPath) -> Result<Vec<(f64, CosetPoint)>> {
    d.angular
        .jump_indices()
        .iter()
        .map(|&i| {
            let left = d.space.decode(d.angular.left_limit(i))?;
            let post = d.space.decode(d.angular.point(i))?;
            Ok((d.angular.time(i), d.space.increment(&left, &post)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::RadialPoint;

    #[test]
    fn constant_path_in_transversal() {
        let g = ScenarioGeometry::euclid_son(3).unwrap();
        let mut x = CadlagPath::new(3);
        for i in 0..10 {
            x.push(i as f64 * 0.1, &[2.0, 0.0, 0.0]);
        }
        let d = decompose_path(&x, &g).unwrap();
        for i in 0..10 {
            assert_eq!(d.radial.point(i), &[2.0]);
            assert_eq!(d.angular.point(i), &[1.0, 0.0, 0.0]);
        }
        assert!(d.exit_index.is_none());
    }

    #[test]
    fn circular_path_crosses_charts_smoothly() {
        let g = ScenarioGeometry::euclid_son(2).unwrap();
        let mut x = CadlagPath::new(2);
        let dt = 1e-3;
        for i in 0..=7000 {
            let t = i as f64 * dt;
            x.push(t, &[5.0 * t.cos(), 5.0 * t.sin()]);
        }
        let d = decompose_path(&x, &g).unwrap();
        assert!(!d.chart_switches.is_empty());
        for i in 0..d.radial.len() {
            assert!((d.radial.point(i)[0] - 5.0).abs() < 1e-12);
        }
        assert_eq!(d.angular.continuity_violations(1.0, dt), 0);
        for i in 1..d.angular.len() {
            let a = d.space.decode(d.angular.point(i - 1)).unwrap();
            let b = d.space.decode(d.angular.point(i)).unwrap();
            assert!((d.space.distance(&a, &b) - dt).abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_start_is_refused() {
        let g = ScenarioGeometry::euclid_son(3).unwrap();
        let mut x = CadlagPath::new(3);
        x.push(0.0, &[0.0; 3]);
        assert!(matches!(decompose_path(&x, &g), Err(Error::Boundary(_))));
    }

    #[test]
    fn eigengap_collapse_sets_exit() {
        let g = ScenarioGeometry::sym_matrices(2).unwrap();
        let mut x = CadlagPath::new(3);
        for i in 0..=600 {
            let gap = if i >= 500 {
                0.0
            } else {
                1.0 - i as f64 / 500.0 + 1e-13 * (500 - i) as f64
            };
            x.push(i as f64 * 1e-3, &[gap / 2.0, -gap / 2.0, 0.0]);
        }
        assert_eq!(detect_exit(&x, &g), Some(500));
        let d = decompose_path(&x, &g).unwrap();
        assert_eq!(d.radial.len(), 500);
    }

    #[test]
    fn jump_out_and_back_is_not_an_exit() {
        let g = ScenarioGeometry::euclid_son(3).unwrap();
        let mut x = CadlagPath::new(3);
        x.push(0.0, &[1.0, 0.0, 0.0]);
        x.push_jump(0.1, &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]);
        x.push(0.2, &[1.0, 0.0, 0.0]);
        assert_eq!(detect_exit(&x, &g), None);
    }

    #[test]
    fn identity_jump_has_trivial_increment() {
        let g = ScenarioGeometry::euclid_son(3).unwrap();
        let mut x = CadlagPath::new(3);
        let p = g.compose(
            &crate::coset::CosetPoint::Direction(vec![0.0, 0.6, 0.8]),
            &RadialPoint(vec![2.0]),
        );
        x.push(0.0, &p);
        x.push_jump(0.1, &p, &p);
        let d = decompose_path(&x, &g).unwrap();
        let jumps = extract_angular_jumps(&d).unwrap();
        assert_eq!(jumps.len(), 1);
        assert!(d.space.same_coset(&jumps[0].1, &d.space.origin(), 1e-12));
    }
}
