//! Homogeneous spaces `K/M` with local sections and exponential coordinates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{
    haar_sample, plane_rotation, rotation_generator, AlgebraBasis, GroupElement, GroupTag,
};
use crate::linalg::{dot, norm, Mat};

/// Distance from `-e_0` below which the sphere section switches charts.
pub const ANTIPODE_SWITCH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteIsotropy {
    /// `M = {e}`; the space is the group itself.
    Trivial,
    /// Diagonal sign matrices of determinant one.
    SignFlips,
}

/// `K/M` for `K = SO(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CosetSpace {
    /// `SO(n)/SO(n-1)`, the unit sphere of `R^n` with base point `e_0`.
    Sphere { n: usize },
    /// `SO(n)/M` with `M` finite, stored through matrix representatives.
    Frame { n: usize, isotropy: FiniteIsotropy },
}

/// Point of `K/M`. Frames carry one representative of their coset.
#[derive(Debug, Clone, PartialEq)]
pub enum CosetPoint {
    Direction(Vec<f64>),
    Frame(Mat),
}

/// Which local section produced a representative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    Primary,
    Antipodal,
}

impl CosetSpace {
    pub fn sphere(n: usize) -> Result<Self> {
        if !(2..=crate::linalg::MAX_DIM).contains(&n) {
            return Err(Error::InvalidInput(format!("sphere in R^{n} unsupported")));
        }
        Ok(CosetSpace::Sphere { n })
    }

    pub fn frame(n: usize, isotropy: FiniteIsotropy) -> Result<Self> {
        if !(2..=crate::linalg::MAX_DIM).contains(&n) {
            return Err(Error::InvalidInput(format!("SO({n}) unsupported")));
        }
        Ok(CosetSpace::Frame { n, isotropy })
    }

    pub fn group_order(&self) -> usize {
        match *self {
            CosetSpace::Sphere { n } | CosetSpace::Frame { n, .. } => n,
        }
    }

    pub fn tag(&self) -> GroupTag {
        GroupTag::SpecialOrthogonal(self.group_order())
    }

    /// Manifold dimension of `K/M`.
    pub fn dim(&self) -> usize {
        match *self {
            CosetSpace::Sphere { n } => n - 1,
            CosetSpace::Frame { n, .. } => n * (n - 1) / 2,
        }
    }

    /// Number of reals used to store a point.
    pub fn point_dim(&self) -> usize {
        match *self {
            CosetSpace::Sphere { n } => n,
            CosetSpace::Frame { n, .. } => n * n,
        }
    }

    pub fn chart_radius(&self) -> f64 {
        match self {
            CosetSpace::Sphere { .. } => 3.0,
            // ||phi|| < 0.7 keeps ||R - I||_F below the log domain for every n.
            CosetSpace::Frame { .. } => 0.7,
        }
    }

    pub fn origin(&self) -> CosetPoint {
        match *self {
            CosetSpace::Sphere { n } => {
                let mut v = vec![0.0; n];
                v[0] = 1.0;
                CosetPoint::Direction(v)
            }
            CosetSpace::Frame { n, .. } => CosetPoint::Frame(Mat::identity(n)),
        }
    }

    /// Orthonormal basis of the complement `p` of `m` in `so(n)`.
    pub fn p_basis(&self) -> AlgebraBasis {
        match *self {
            CosetSpace::Sphere { n } => {
                let elems = (1..n).map(|j| rotation_generator(n, 0, j)).collect();
                AlgebraBasis::new(n, elems).expect("orthonormal by construction")
            }
            CosetSpace::Frame { n, .. } => AlgebraBasis::so(n),
        }
    }

    /// Orthonormal basis of the isotropy algebra `m`.
    pub fn m_basis(&self) -> AlgebraBasis {
        match *self {
            CosetSpace::Sphere { n } => {
                let mut elems = Vec::new();
                for i in 1..n {
                    for j in i + 1..n {
                        elems.push(rotation_generator(n, i, j));
                    }
                }
                AlgebraBasis::new(n, elems).expect("orthonormal by construction")
            }
            CosetSpace::Frame { n, .. } => AlgebraBasis::empty(n),
        }
    }

    /// `p` followed by `m`: an orthonormal basis of all of `so(n)`.
    pub fn extended_basis(&self) -> AlgebraBasis {
        self.p_basis()
            .concat(&self.m_basis())
            .expect("p and m are orthogonal")
    }

    /// The finitely many isotropy elements, when `M` is finite.
    pub fn isotropy_elements(&self) -> Option<Vec<GroupElement>> {
        match *self {
            CosetSpace::Sphere { n } if n == 2 => Some(vec![GroupElement::identity(self.tag())]),
            CosetSpace::Sphere { .. } => None,
            CosetSpace::Frame { n, isotropy } => Some(match isotropy {
                FiniteIsotropy::Trivial => vec![GroupElement::identity(self.tag())],
                FiniteIsotropy::SignFlips => sign_flips(n)
                    .into_iter()
                    .map(|d| GroupElement::from_mat_unchecked(self.tag(), Mat::diag(&d)))
                    .collect(),
            }),
        }
    }

    /// Haar-random element of `M`.
    pub fn random_isotropy<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match *self {
            CosetSpace::Sphere { n } => {
                if n <= 2 {
                    return GroupElement::identity(self.tag());
                }
                let h = haar_sample(n - 1, rng);
                let mut m = Mat::identity(n);
                for i in 0..n - 1 {
                    for j in 0..n - 1 {
                        m[(i + 1, j + 1)] = h.mat()[(i, j)];
                    }
                }
                GroupElement::from_mat_unchecked(self.tag(), m)
            }
            CosetSpace::Frame { .. } => {
                let all = self.isotropy_elements().expect("finite isotropy");
                all[rng.random_range(0..all.len())]
            }
        }
    }

    pub fn project(&self, k: &GroupElement) -> CosetPoint {
        match self {
            CosetSpace::Sphere { .. } => CosetPoint::Direction(k.mat().col(0)),
            CosetSpace::Frame { .. } => CosetPoint::Frame(*k.mat()),
        }
    }

    /// Left action `k . z`.
    pub fn act(&self, k: &GroupElement, z: &CosetPoint) -> CosetPoint {
        match z {
            CosetPoint::Direction(v) => CosetPoint::Direction(k.mat().matvec(v)),
            CosetPoint::Frame(q) => CosetPoint::Frame(*k.mat() * *q),
        }
    }

    pub fn encode(&self, z: &CosetPoint) -> Vec<f64> {
        match z {
            CosetPoint::Direction(v) => v.clone(),
            CosetPoint::Frame(q) => q.to_vec(),
        }
    }

    pub fn decode(&self, s: &[f64]) -> Result<CosetPoint> {
        if s.len() != self.point_dim() {
            return Err(Error::InvalidInput(format!(
                "coset point of length {} for a space storing {}",
                s.len(),
                self.point_dim()
            )));
        }
        Ok(match *self {
            CosetSpace::Sphere { .. } => CosetPoint::Direction(s.to_vec()),
            CosetSpace::Frame { n, .. } => CosetPoint::Frame(Mat::from_row_slice(n, s)),
        })
    }

    pub fn validate(&self, z: &CosetPoint) -> Result<()> {
        match (self, z) {
            (CosetSpace::Sphere { n }, CosetPoint::Direction(v)) if v.len() == *n => {
                if (norm(v) - 1.0).abs() > 1e-8 {
                    return Err(Error::InvalidInput(format!(
                        "direction has norm {}",
                        norm(v)
                    )));
                }
                Ok(())
            }
            (CosetSpace::Frame { n, .. }, CosetPoint::Frame(q)) if q.n() == *n => {
                GroupElement::new(self.tag(), *q).map(|_| ())
            }
            _ => Err(Error::InvalidInput(
                "coset point does not belong to this space".into(),
            )),
        }
    }

    /// Local section `S` with `pi(S(z)) = z` and the chart it used.
    pub fn section_with_chart(&self, z: &CosetPoint) -> (GroupElement, Chart) {
        match (self, z) {
            (CosetSpace::Sphere { n }, CosetPoint::Direction(v)) => {
                let n = *n;
                let mut e0 = vec![0.0; n];
                e0[0] = 1.0;
                let antipode_dist =
                    ((v[0] + 1.0).powi(2) + v[1..].iter().map(|x| x * x).sum::<f64>()).sqrt();
                if antipode_dist >= ANTIPODE_SWITCH {
                    (
                        GroupElement::from_mat_unchecked(self.tag(), geodesic_rotation(&e0, v)),
                        Chart::Primary,
                    )
                } else {
                    let mut e1 = vec![0.0; n];
                    e1[1] = 1.0;
                    let r0 = plane_rotation(n, 0, 1, std::f64::consts::FRAC_PI_2);
                    let m = geodesic_rotation(&e1, v) * *r0.mat();
                    (
                        GroupElement::from_mat_unchecked(self.tag(), m),
                        Chart::Antipodal,
                    )
                }
            }
            (CosetSpace::Frame { .. }, CosetPoint::Frame(q)) => (
                GroupElement::from_mat_unchecked(self.tag(), *q),
                Chart::Primary,
            ),
            _ => panic!("coset point does not belong to this space"),
        }
    }

    pub fn section(&self, z: &CosetPoint) -> GroupElement {
        self.section_with_chart(z).0
    }

    /// `S(x) . y`.
    pub fn translate(&self, x: &CosetPoint, y: &CosetPoint) -> CosetPoint {
        self.act(&self.section(x), y)
    }

    /// `S(prev)^{-1} . z`.
    pub fn increment(&self, prev: &CosetPoint, z: &CosetPoint) -> CosetPoint {
        self.act(&self.section(prev).inverse(), z)
    }

    /// Representative among `q M` closest to `target`.
    pub fn nearest_representative(&self, q: &Mat, target: &Mat) -> (Mat, usize) {
        let ms = self.isotropy_elements().expect("finite isotropy");
        let mut best = (*q, 0, f64::INFINITY);
        for (idx, m) in ms.iter().enumerate() {
            let cand = *q * *m.mat();
            let d = cand.dist_fro(target);
            if d < best.2 {
                best = (cand, idx, d);
            }
        }
        (best.0, best.1)
    }

    /// Exponential coordinates `phi` with `exp(sum phi_i xi_i) . o = z`, in `basis`.
    pub fn exp_coords_in(&self, z: &CosetPoint, basis: &AlgebraBasis) -> Result<Vec<f64>> {
        let radius = self.chart_radius();
        match (self, z) {
            (CosetSpace::Sphere { .. }, CosetPoint::Direction(v)) => {
                let s = norm(&v[1..]);
                let theta = s.atan2(v[0]);
                if theta > radius {
                    return Err(Error::OutsideChart {
                        distance: theta,
                        radius,
                    });
                }
                let mut x = Mat::zeros(self.group_order());
                if s > 0.0 {
                    for (j, vj) in v.iter().enumerate().skip(1) {
                        x += rotation_generator(self.group_order(), 0, j).scale(theta * vj / s);
                    }
                }
                Ok(basis.coords(&crate::group::AlgebraElement::new(x)))
            }
            (CosetSpace::Frame { n, .. }, CosetPoint::Frame(q)) => {
                let (g, _) = self.nearest_representative(q, &Mat::identity(*n));
                let ge = GroupElement::from_mat_unchecked(self.tag(), g);
                let x = ge.log().map_err(|_| Error::OutsideChart {
                    distance: self.distance_from_origin(z),
                    radius,
                })?;
                let phi = basis.coords(&x);
                let r = norm(&phi);
                if r > radius {
                    return Err(Error::OutsideChart {
                        distance: r,
                        radius,
                    });
                }
                Ok(phi)
            }
            _ => Err(Error::InvalidInput(
                "coset point does not belong to this space".into(),
            )),
        }
    }

    pub fn exp_coords(&self, z: &CosetPoint) -> Result<Vec<f64>> {
        self.exp_coords_in(z, &self.p_basis())
    }

    /// `exp(sum phi_i xi_i) . o` for `phi` given in `basis`.
    pub fn from_exp_coords_in(&self, phi: &[f64], basis: &AlgebraBasis) -> CosetPoint {
        let g = basis
            .combine(phi)
            .exp(self.tag())
            .expect("finite coordinates");
        self.project(&g)
    }

    pub fn from_exp_coords(&self, phi: &[f64]) -> CosetPoint {
        self.from_exp_coords_in(phi, &self.p_basis())
    }

    /// Riemannian distance from the base point.
    pub fn distance_from_origin(&self, z: &CosetPoint) -> f64 {
        match (self, z) {
            (CosetSpace::Sphere { .. }, CosetPoint::Direction(v)) => norm(&v[1..]).atan2(v[0]),
            (CosetSpace::Frame { n, .. }, CosetPoint::Frame(q)) => {
                let (g, _) = self.nearest_representative(q, &Mat::identity(*n));
                rotation_distance(&g)
            }
            _ => panic!("coset point does not belong to this space"),
        }
    }

    pub fn distance(&self, a: &CosetPoint, b: &CosetPoint) -> f64 {
        match (a, b) {
            (CosetPoint::Direction(u), CosetPoint::Direction(v)) => {
                let diff: Vec<f64> = u.iter().zip(v).map(|(x, y)| x - y).collect();
                2.0 * (0.5 * norm(&diff)).min(1.0).asin()
            }
            (CosetPoint::Frame(p), CosetPoint::Frame(_)) => {
                let rel = self.act(
                    &GroupElement::from_mat_unchecked(self.tag(), p.transpose()),
                    b,
                );
                self.distance_from_origin(&rel)
            }
            _ => panic!("mismatched coset points"),
        }
    }

    /// Whether two points denote the same coset.
    pub fn same_coset(&self, a: &CosetPoint, b: &CosetPoint, tol: f64) -> bool {
        match (a, b) {
            (CosetPoint::Direction(u), CosetPoint::Direction(v)) => {
                u.iter().zip(v).all(|(x, y)| (x - y).abs() <= tol)
            }
            (CosetPoint::Frame(p), CosetPoint::Frame(q)) => {
                let (r, _) = self.nearest_representative(p, q);
                r.dist_fro(q) <= tol
            }
            _ => false,
        }
    }
}

/// Rotation in the plane of unit vectors `a`, `b` taking `a` to `b`.
///
/// Singular only at `b = -a`.
pub fn geodesic_rotation(a: &[f64], b: &[f64]) -> Mat {
    let n = a.len();
    let c = dot(a, b);
    let k = Mat::from_fn(n, |i, j| b[i] * a[j] - a[i] * b[j]);
    Mat::identity(n) + k + (k * k).scale(1.0 / (1.0 + c))
}

/// Geodesic distance from the identity in `SO(n)` for the half-trace metric.
///
/// Uses the rotation angles of `(R + R^T)/2` so it is valid beyond the
/// log's principal branch.
pub fn rotation_distance(r: &Mat) -> f64 {
    let (vals, _) = r.symmetrize().symmetric_eigen();
    (0.5 * vals
        .iter()
        .map(|l| l.clamp(-1.0, 1.0).acos().powi(2))
        .sum::<f64>())
    .sqrt()
}

/// Diagonal `+-1` patterns with an even number of minus signs.
pub fn sign_flips(n: usize) -> Vec<Vec<f64>> {
    (0..1u32 << n)
        .filter(|mask| mask.count_ones() % 2 == 0)
        .map(|mask| {
            (0..n)
                .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect()
        })
        .collect()
}

/// Sign-normalised orthonormal frame: the largest-magnitude entry of each
/// column is positive, then the last column absorbs any determinant sign.
pub fn canonical_frame(q: &Mat) -> Mat {
    let n = q.n();
    let mut out = *q;
    for j in 0..n {
        let col = q.col(j);
        let imax = (0..n)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()))
            .unwrap();
        if col[imax] < 0.0 {
            for i in 0..n {
                out[(i, j)] = -out[(i, j)];
            }
        }
    }
    if out.det() < 0.0 {
        for i in 0..n {
            out[(i, n - 1)] = -out[(i, n - 1)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::uniform_direction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_section_projects_back_in_both_charts() {
        let s = CosetSpace::sphere(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts: Vec<Vec<f64>> = (0..50).map(|_| uniform_direction(3, &mut rng)).collect();
        pts.push(vec![-1.0, 0.0, 0.0]);
        pts.push(vec![-0.999, 0.03, (1.0f64 - 0.999 * 0.999 - 0.0009).sqrt()]);
        for v in pts {
            let z = CosetPoint::Direction(v.clone());
            let g = s.section(&z);
            assert!(g.validate().is_ok());
            assert!(s.same_coset(&s.project(&g), &z, 1e-12));
        }
        assert_eq!(
            s.section_with_chart(&CosetPoint::Direction(vec![-1.0, 0.0, 0.0]))
                .1,
            Chart::Antipodal
        );
    }

    #[test]
    fn section_at_origin_is_identity() {
        let s = CosetSpace::sphere(4).unwrap();
        assert!(s.section(&s.origin()).dist_identity() < 1e-15);
    }

    #[test]
    fn exp_coords_invert() {
        let s = CosetSpace::sphere(3).unwrap();
        let phi = [0.4, -1.1];
        let z = s.from_exp_coords(&phi);
        let back = s.exp_coords(&z).unwrap();
        assert!((back[0] - phi[0]).abs() < 1e-12 && (back[1] - phi[1]).abs() < 1e-12);

        let f = CosetSpace::frame(3, FiniteIsotropy::SignFlips).unwrap();
        let phi = [0.2, -0.1, 0.3];
        let z = f.from_exp_coords(&phi);
        let back = f.exp_coords(&z).unwrap();
        for (a, b) in phi.iter().zip(back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_coords_error_outside_chart() {
        let s = CosetSpace::sphere(3).unwrap();
        let z = CosetPoint::Direction(vec![-1.0, 1e-9, 0.0]);
        assert!(matches!(s.exp_coords(&z), Err(Error::OutsideChart { .. })));
    }

    #[test]
    fn rotation_distance_is_angle() {
        let r = plane_rotation(4, 1, 3, 2.5);
        assert!((rotation_distance(r.mat()) - 2.5).abs() < 1e-9);
    }

    #[test]
    fn canonical_frame_is_constant_on_cosets() {
        let f = CosetSpace::frame(3, FiniteIsotropy::SignFlips).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = *haar_sample(3, &mut rng).mat();
        let c = canonical_frame(&q);
        for m in f.isotropy_elements().unwrap() {
            assert!(canonical_frame(&(q * *m.mat())).dist_fro(&c) < 1e-14);
        }
    }
}
