//! Concrete `K`-spaces with their radial/angular projections.
//!
//! | kind | `X` | `K` | `Y` | `K/M` |
//! |---|---|---|---|---|
//! | `euclid_son` | `R^n` | `SO(n)` | `r > 0` | `S^{n-1}` |
//! | `sym_matrices` | `n x n` symmetric | `SO(n)` by conjugation | ordered spectra | frames mod signs |
//! | `product_space` | `R x S^1` | `SO(2)` on the circle | `R` | `S^1` |
//! | `sphere_polar` | `S^n` | `SO(n)` fixing the pole | polar angle | `S^{n-1}` |
//! | `ray_counterexample` | `R^n` | `SO(n)` | `r >= 0` | `S^{n-1}` |
//!
//! Symmetric-matrix Brownian motion is normalised so its increments are
//! invariant under conjugation: diagonal entries have variance `2t`,
//! off-diagonal entries variance `t`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coset::{canonical_frame, CosetPoint, CosetSpace, FiniteIsotropy};
use crate::error::{Error, Result};
use crate::group::{uniform_direction, GroupElement, GroupTag};
use crate::linalg::{norm, Mat};

/// Radius below which a Euclidean point counts as the fixed origin.
pub const ORIGIN_TOL: f64 = 1e-12;
/// Minimum eigenvalue gap for a symmetric matrix to be regular.
pub const EIGEN_GAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    EuclidSon,
    SymMatrices,
    ProductSpace,
    SpherePolar,
    RayCounterexample,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::EuclidSon,
        ScenarioKind::SymMatrices,
        ScenarioKind::ProductSpace,
        ScenarioKind::SpherePolar,
        ScenarioKind::RayCounterexample,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::EuclidSon => "euclid_son",
            ScenarioKind::SymMatrices => "sym_matrices",
            ScenarioKind::ProductSpace => "product_space",
            ScenarioKind::SpherePolar => "sphere_polar",
            ScenarioKind::RayCounterexample => "ray_counterexample",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario '{s}'")))
    }
}

/// Point of the transversal `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPoint(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioGeometry {
    kind: ScenarioKind,
    size: usize,
    space: CosetSpace,
}

impl ScenarioGeometry {
    /// `size` is `n` for `R^n`, `n x n` matrices, or `S^n`; ignored for the product space.
    pub fn new(kind: ScenarioKind, size: usize) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("size {size} unsupported for {}", kind.name()));
        let space = match kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => {
                if !(2..=6).contains(&size) {
                    return Err(bad());
                }
                CosetSpace::sphere(size)?
            }
            ScenarioKind::SymMatrices => {
                if !(2..=6).contains(&size) {
                    return Err(bad());
                }
                CosetSpace::frame(size, FiniteIsotropy::SignFlips)?
            }
            ScenarioKind::ProductSpace => CosetSpace::sphere(2)?,
            ScenarioKind::SpherePolar => {
                if !(2..=5).contains(&size) {
                    return Err(bad());
                }
                CosetSpace::sphere(size)?
            }
        };
        let size = if kind == ScenarioKind::ProductSpace {
            1
        } else {
            size
        };
        Ok(ScenarioGeometry { kind, size, space })
    }

    pub fn euclid_son(n: usize) -> Result<Self> {
        Self::new(ScenarioKind::EuclidSon, n)
    }
    pub fn sym_matrices(n: usize) -> Result<Self> {
        Self::new(ScenarioKind::SymMatrices, n)
    }
    pub fn product_space() -> Result<Self> {
        Self::new(ScenarioKind::ProductSpace, 1)
    }
    pub fn sphere_polar(n: usize) -> Result<Self> {
        Self::new(ScenarioKind::SpherePolar, n)
    }
    pub fn ray_counterexample(n: usize) -> Result<Self> {
        Self::new(ScenarioKind::RayCounterexample, n)
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }
    pub fn size(&self) -> usize {
        self.size
    }
    pub fn space(&self) -> &CosetSpace {
        &self.space
    }
    pub fn tag(&self) -> GroupTag {
        self.space.tag()
    }
    pub fn group_order(&self) -> usize {
        self.space.group_order()
    }

    /// Default starting point in `X°`: `e_1`, `diag(n-1, ..., 0)`, or a
    /// point on the equator.
    pub fn reference_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.ambient_dim()];
        match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => x[0] = 1.0,
            ScenarioKind::SymMatrices => {
                for (i, v) in x.iter_mut().take(self.size).enumerate() {
                    *v = (self.size - 1 - i) as f64;
                }
            }
            ScenarioKind::ProductSpace | ScenarioKind::SpherePolar => x[1] = 1.0,
        }
        x
    }

    /// Number of ambient coordinates used to store a point of `X`.
    pub fn ambient_dim(&self) -> usize {
        let n = self.size;
        match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => n,
            ScenarioKind::SymMatrices => n * (n + 1) / 2,
            ScenarioKind::ProductSpace => 3,
            ScenarioKind::SpherePolar => n + 1,
        }
    }

    pub fn dim_x(&self) -> usize {
        self.dim_y() + self.dim_z()
    }

    pub fn dim_y(&self) -> usize {
        match self.kind {
            ScenarioKind::SymMatrices => self.size,
            _ => 1,
        }
    }

    pub fn dim_z(&self) -> usize {
        self.space.dim()
    }

    /// Whether `M` acts irreducibly on the tangent space of `K/M` at `o`.
    pub fn is_irreducible(&self) -> bool {
        !matches!(self.kind, ScenarioKind::SymMatrices)
    }

    // -- ambient coordinates ------------------------------------------------

    /// Symmetric matrix from `(x_11..x_nn, x_ij for i<j)`.
    pub fn sym_to_matrix(&self, x: &[f64]) -> Mat {
        let n = self.size;
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = x[i];
        }
        let mut k = n;
        for i in 0..n {
            for j in i + 1..n {
                m[(i, j)] = x[k];
                m[(j, i)] = x[k];
                k += 1;
            }
        }
        m
    }

    pub fn sym_from_matrix(&self, m: &Mat) -> Vec<f64> {
        let n = self.size;
        let mut x: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
        for i in 0..n {
            for j in i + 1..n {
                x.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        x
    }

    /// Left action of `K` on ambient coordinates.
    pub fn act(&self, k: &GroupElement, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => k.mat().matvec(x),
            ScenarioKind::SymMatrices => {
                let m = self.sym_to_matrix(x);
                self.sym_from_matrix(&(*k.mat() * m * k.mat().transpose()))
            }
            ScenarioKind::ProductSpace | ScenarioKind::SpherePolar => {
                let mut out = vec![x[0]];
                out.extend(k.mat().matvec(&x[1..]));
                out
            }
        }
    }

    /// Checks that `x` lies on `X` (not necessarily in `X°`).
    pub fn validate_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::InvalidInput(format!(
                "{} expects {} coordinates, got {}",
                self.kind.name(),
                self.ambient_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "point has non-finite coordinates".into(),
            ));
        }
        match self.kind {
            ScenarioKind::SpherePolar if (norm(x) - 1.0).abs() > 1e-8 => Err(Error::InvalidInput(
                format!("point not on the sphere (|x| = {})", norm(x)),
            )),
            ScenarioKind::ProductSpace if (norm(&x[1..]) - 1.0).abs() > 1e-8 => Err(
                Error::InvalidInput("circle factor is not a unit vector".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Membership in the principal-orbit set `X°`.
    pub fn is_interior(&self, x: &[f64]) -> bool {
        match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => norm(x) > ORIGIN_TOL,
            ScenarioKind::SymMatrices => {
                let (vals, _) = self.sym_to_matrix(x).symmetric_eigen();
                vals.windows(2).all(|w| w[0] - w[1] > EIGEN_GAP_TOL)
            }
            ScenarioKind::ProductSpace => true,
            ScenarioKind::SpherePolar => norm(&x[1..]) > ORIGIN_TOL,
        }
    }

    pub fn radial_is_interior(&self, y: &RadialPoint) -> bool {
        let y = &y.0;
        match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => y[0] > ORIGIN_TOL,
            ScenarioKind::SymMatrices => y.windows(2).all(|w| w[0] - w[1] > EIGEN_GAP_TOL),
            ScenarioKind::ProductSpace => y[0].is_finite(),
            ScenarioKind::SpherePolar => {
                y[0].sin() > ORIGIN_TOL && y[0] > 0.0 && y[0] < std::f64::consts::PI
            }
        }
    }

    // -- projections --------------------------------------------------------

    /// Radial projection `J`.
    pub fn project_radial(&self, x: &[f64]) -> Result<RadialPoint> {
        if !self.is_interior(x) {
            return Err(Error::Boundary(format!(
                "{} point is not in the principal-orbit set",
                self.kind.name()
            )));
        }
        Ok(RadialPoint(match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => vec![norm(x)],
            ScenarioKind::SymMatrices => self.sym_to_matrix(x).symmetric_eigen().0,
            ScenarioKind::ProductSpace => vec![x[0]],
            ScenarioKind::SpherePolar => vec![norm(&x[1..]).atan2(x[0])],
        }))
    }

    /// Angular projection `J_2`.
    pub fn project_angular(&self, x: &[f64]) -> Result<CosetPoint> {
        if !self.is_interior(x) {
            return Err(Error::Boundary(format!(
                "{} point is not in the principal-orbit set",
                self.kind.name()
            )));
        }
        Ok(match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => {
                let r = norm(x);
                CosetPoint::Direction(x.iter().map(|v| v / r).collect())
            }
            ScenarioKind::SymMatrices => {
                CosetPoint::Frame(canonical_frame(&self.sym_to_matrix(x).symmetric_eigen().1))
            }
            ScenarioKind::ProductSpace | ScenarioKind::SpherePolar => {
                let r = norm(&x[1..]);
                CosetPoint::Direction(x[1..].iter().map(|v| v / r).collect())
            }
        })
    }

    /// `(J(x), J_2(x))`, sharing one eigendecomposition for matrices.
    pub fn split(&self, x: &[f64]) -> Result<(RadialPoint, CosetPoint)> {
        if self.kind == ScenarioKind::SymMatrices {
            if !self.is_interior(x) {
                return Err(Error::Boundary("repeated eigenvalue".into()));
            }
            let (vals, vecs) = self.sym_to_matrix(x).symmetric_eigen();
            return Ok((RadialPoint(vals), CosetPoint::Frame(canonical_frame(&vecs))));
        }
        Ok((self.project_radial(x)?, self.project_angular(x)?))
    }

    /// The point of `Y` with radial coordinates `y`, in ambient coordinates.
    pub fn radial_embed(&self, y: &RadialPoint) -> Vec<f64> {
        let y = &y.0;
        match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => {
                let mut v = vec![0.0; self.size];
                v[0] = y[0];
                v
            }
            ScenarioKind::SymMatrices => {
                let mut v = y.clone();
                v.resize(self.ambient_dim(), 0.0);
                v
            }
            ScenarioKind::ProductSpace => vec![y[0], 1.0, 0.0],
            ScenarioKind::SpherePolar => {
                let mut v = vec![0.0; self.size + 1];
                v[0] = y[0].cos();
                v[1] = y[0].sin();
                v
            }
        }
    }

    /// `S(z) . y`.
    pub fn compose(&self, z: &CosetPoint, y: &RadialPoint) -> Vec<f64> {
        self.act(&self.space.section(z), &self.radial_embed(y))
    }

    /// `k . y` for a group representative of the angular part.
    pub fn compose_group(&self, k: &GroupElement, y: &RadialPoint) -> Vec<f64> {
        self.act(k, &self.radial_embed(y))
    }

    // -- generators ---------------------------------------------------------

    /// Diffusion matrix `c_ij` and drift `c_i` of `L^0 = 1/2 c_ij d_ij + c_i d_i`
    /// in ambient coordinates.
    pub fn generator_coeffs(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.ambient_dim();
        let mut c = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        match self.kind {
            ScenarioKind::EuclidSon => {
                for (i, row) in c.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
            }
            ScenarioKind::RayCounterexample => {
                let r = norm(x);
                let n = self.size as f64;
                for i in 0..d {
                    for j in 0..d {
                        c[i][j] = x[i] * x[j] / (r * r);
                    }
                    b[i] = (n - 1.0) / (2.0 * r) * x[i] / r;
                }
            }
            ScenarioKind::SymMatrices => {
                for (i, row) in c.iter_mut().enumerate() {
                    row[i] = if i < self.size { 2.0 } else { 1.0 };
                }
            }
            ScenarioKind::ProductSpace => {
                c[0][0] = 1.0;
                for i in 1..3 {
                    for j in 1..3 {
                        c[i][j] = if i == j { 1.0 } else { 0.0 } - x[i] * x[j];
                    }
                    b[i] = -0.5 * x[i];
                }
            }
            ScenarioKind::SpherePolar => {
                let n = self.size as f64;
                for i in 0..d {
                    for j in 0..d {
                        c[i][j] = if i == j { 1.0 } else { 0.0 } - x[i] * x[j];
                    }
                    b[i] = -0.5 * n * x[i];
                }
            }
        }
        (c, b)
    }

    /// Largest diffusion coefficient `sqrt(max eig c)`, for continuity checks.
    pub fn noise_scale(&self) -> f64 {
        match self.kind {
            ScenarioKind::SymMatrices => std::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }

    /// Drift of the radial SDE in the `y` coordinates.
    pub fn radial_drift(&self, y: &RadialPoint) -> Vec<f64> {
        let y = &y.0;
        match self.kind {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => {
                vec![(self.size as f64 - 1.0) / (2.0 * y[0])]
            }
            ScenarioKind::SymMatrices => (0..y.len())
                .map(|i| {
                    (0..y.len())
                        .filter(|&j| j != i)
                        .map(|j| 1.0 / (y[i] - y[j]))
                        .sum()
                })
                .collect(),
            ScenarioKind::ProductSpace => vec![0.0],
            ScenarioKind::SpherePolar => vec![0.5 * (self.size as f64 - 1.0) / y[0].tan()],
        }
    }

    /// Constant diagonal noise coefficients of the radial SDE.
    pub fn radial_noise(&self) -> Vec<f64> {
        match self.kind {
            ScenarioKind::SymMatrices => vec![std::f64::consts::SQRT_2; self.size],
            _ => vec![1.0],
        }
    }

    /// Diffusion matrix `a(y)` of `L_2^Z(y) = 1/2 a_ij(y) xi_i xi_j` in the
    /// orthonormal basis of `p` returned by the coset space.
    pub fn l2z_coeff(&self, y: &RadialPoint) -> Result<Vec<f64>> {
        if !self.radial_is_interior(y) {
            return Err(Error::Boundary("radial point on the orbit boundary".into()));
        }
        let yv = &y.0;
        Ok(match self.kind {
            ScenarioKind::EuclidSon => vec![yv[0].powi(-2); self.dim_z()],
            ScenarioKind::RayCounterexample => vec![0.0; self.dim_z()],
            ScenarioKind::SymMatrices => {
                let n = self.size;
                let mut d = Vec::with_capacity(self.dim_z());
                for i in 0..n {
                    for j in i + 1..n {
                        d.push((yv[i] - yv[j]).powi(-2));
                    }
                }
                d
            }
            ScenarioKind::ProductSpace => vec![1.0],
            ScenarioKind::SpherePolar => vec![yv[0].sin().powi(-2); self.dim_z()],
        })
    }

    /// The scalar clock rate `alpha(y)` with `a(y) = alpha(y) I`.
    pub fn alpha(&self, y: &RadialPoint) -> Result<f64> {
        if !self.is_irreducible() {
            return Err(Error::Unsupported(format!(
                "{} has a reducible isotropy representation; no scalar clock exists",
                self.kind.name()
            )));
        }
        Ok(self.l2z_coeff(y)?.first().copied().unwrap_or(0.0))
    }

    /// Finite-difference check that `L^0 (f∘J)(g∘J_2)` equals
    /// `(L^Y f) g + f (L_2^Z g)` at `x`. Returns `(lhs, rhs)`.
    pub fn generator_split(
        &self,
        x: &[f64],
        f: &dyn Fn(&RadialPoint) -> f64,
        g: &dyn Fn(&CosetPoint) -> f64,
        h: f64,
    ) -> Result<(f64, f64)> {
        let big_f = |p: &[f64]| -> f64 {
            let (y, z) = self.split(p).expect("finite-difference stencil left X°");
            f(&y) * g(&z)
        };
        let (c, b) = self.generator_coeffs(x);
        let lhs = second_order_fd(&big_f, x, &c, &b, h);

        let (y, z) = self.split(x)?;
        let q = self.dim_y();
        let noise = self.radial_noise();
        let drift = self.radial_drift(&y);
        let mut cy = vec![vec![0.0; q]; q];
        for i in 0..q {
            cy[i][i] = noise[i] * noise[i];
        }
        let fy = |p: &[f64]| f(&RadialPoint(p.to_vec()));
        let ly = second_order_fd(&fy, &y.0, &cy, &drift, h);

        let a = self.l2z_coeff(&y)?;
        let basis = self.space.p_basis();
        let base = self.space.section(&z);
        let gz = |t: &[f64]| {
            let e = basis.combine(t).exp(self.tag()).expect("finite");
            g(&self.space.project(&base.compose(&e)))
        };
        let p = self.dim_z();
        let mut ca = vec![vec![0.0; p]; p];
        for i in 0..p {
            ca[i][i] = a[i];
        }
        let lz = second_order_fd(&gz, &vec![0.0; p], &ca, &vec![0.0; p], h);
        Ok((lhs, ly * g(&z) + f(&y) * lz))
    }
}

/// `1/2 sum c_ij d_ij F + sum b_i d_i F` by central differences.
pub fn second_order_fd(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    c: &[Vec<f64>],
    b: &[f64],
    h: f64,
) -> f64 {
    let d = x.len();
    let eval = |shifts: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in shifts {
            p[i] += s;
        }
        f(&p)
    };
    let f0 = f(x);
    let mut acc = 0.0;
    for i in 0..d {
        if b[i] != 0.0 {
            acc += b[i] * (eval(&[(i, h)]) - eval(&[(i, -h)])) / (2.0 * h);
        }
        if c[i][i] != 0.0 {
            acc += 0.5 * c[i][i] * (eval(&[(i, h)]) - 2.0 * f0 + eval(&[(i, -h)])) / (h * h);
        }
        for j in i + 1..d {
            let cij = c[i][j] + c[j][i];
            if cij != 0.0 {
                let mixed =
                    (eval(&[(i, h), (j, h)]) - eval(&[(i, h), (j, -h)]) - eval(&[(i, -h), (j, h)])
                        + eval(&[(i, -h), (j, -h)]))
                        / (4.0 * h * h);
                acc += 0.5 * cij * mixed;
            }
        }
    }
    acc
}

/// State of the ray-Bessel process: a radius and a direction, resampled
/// each time the radius passes through zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RayState {
    pub direction: Option<Vec<f64>>,
    pub radius: f64,
}

impl RayState {
    pub fn from_point(x: &[f64]) -> Self {
        let r = norm(x);
        if r <= ORIGIN_TOL {
            RayState {
                direction: None,
                radius: 0.0,
            }
        } else {
            RayState {
                direction: Some(x.iter().map(|v| v / r).collect()),
                radius: r,
            }
        }
    }

    pub fn point(&self, n: usize) -> Vec<f64> {
        match &self.direction {
            Some(u) => u.iter().map(|v| v * self.radius).collect(),
            None => vec![0.0; n],
        }
    }
}

/// One step of the ray-Bessel process in `R^n`.
///
/// From the origin the radius takes an exact `BES(n)` step; elsewhere an
/// Euler step, reflected through zero with a fresh uniform direction.
pub fn counterexample_step<R: Rng + ?Sized>(
    state: &RayState,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> RayState {
    if dt <= 0.0 {
        return state.clone();
    }
    match &state.direction {
        None => {
            let r = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                .sum::<f64>()
                .sqrt()
                * dt.sqrt();
            RayState {
                direction: Some(uniform_direction(n, rng)),
                radius: r,
            }
        }
        Some(u) => {
            let z: f64 = rng.sample(StandardNormal);
            let r = state.radius + dt.sqrt() * z + (n as f64 - 1.0) / (2.0 * state.radius) * dt;
            if r > 0.0 {
                RayState {
                    direction: Some(u.clone()),
                    radius: r,
                }
            } else {
                RayState {
                    direction: Some(uniform_direction(n, rng)),
                    radius: -r,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::haar_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pts(g: &ScenarioGeometry) -> Vec<Vec<f64>> {
        match g.kind() {
            ScenarioKind::EuclidSon | ScenarioKind::RayCounterexample => vec![vec![0.3, -1.2, 0.7]],
            ScenarioKind::SymMatrices => vec![vec![1.0, -0.4, 0.2, 0.3, -0.5, 0.8]],
            ScenarioKind::ProductSpace => vec![vec![0.4, 0.6, -0.8]],
            ScenarioKind::SpherePolar => {
                let v = [0.3, -0.5, 0.6, 0.2];
                let r = norm(&v);
                vec![v.iter().map(|x| x / r).collect()]
            }
        }
    }

    fn all() -> Vec<ScenarioGeometry> {
        vec![
            ScenarioGeometry::euclid_son(3).unwrap(),
            ScenarioGeometry::sym_matrices(3).unwrap(),
            ScenarioGeometry::product_space().unwrap(),
            ScenarioGeometry::sphere_polar(3).unwrap(),
        ]
    }

    #[test]
    fn compose_inverts_projections() {
        for g in all() {
            for x in pts(&g) {
                let (y, z) = g.split(&x).unwrap();
                let back = g.compose(&z, &y);
                for (a, b) in x.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-12, "{:?}", g.kind());
                }
            }
        }
    }

    #[test]
    fn radial_projection_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for g in all() {
            for x in pts(&g) {
                let k = haar_sample(g.group_order(), &mut rng);
                let y0 = g.project_radial(&x).unwrap();
                let y1 = g.project_radial(&g.act(&k, &x)).unwrap();
                for (a, b) in y0.0.iter().zip(&y1.0) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn angular_projection_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in all() {
            for x in pts(&g) {
                let k = haar_sample(g.group_order(), &mut rng);
                let z = g.project_angular(&x).unwrap();
                let kz = g.project_angular(&g.act(&k, &x)).unwrap();
                assert!(g.space().same_coset(&g.space().act(&k, &z), &kz, 1e-10));
            }
        }
    }

    #[test]
    fn boundary_points_are_refused() {
        let e = ScenarioGeometry::euclid_son(3).unwrap();
        assert!(matches!(
            e.project_radial(&[0.0, 0.0, 0.0]),
            Err(Error::Boundary(_))
        ));
        let s = ScenarioGeometry::sym_matrices(2).unwrap();
        assert!(matches!(
            s.project_angular(&[1.0, 1.0, 0.0]),
            Err(Error::Boundary(_))
        ));
    }

    #[test]
    fn sym_clock_is_unsupported() {
        let s = ScenarioGeometry::sym_matrices(2).unwrap();
        assert!(matches!(
            s.alpha(&RadialPoint(vec![1.0, -1.0])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn generator_splits_at_sample_points() {
        let f = |y: &RadialPoint| {
            y.0.iter()
                .enumerate()
                .map(|(i, v)| (0.3 * (i as f64 + 1.0) * v).sin())
                .sum::<f64>()
                + 2.0
        };
        for g in all() {
            let gz = |z: &CosetPoint| match z {
                CosetPoint::Direction(v) => (0.7 * v[0] - 0.4 * v[1]).exp(),
                CosetPoint::Frame(q) => {
                    1.0 + q[(0, 0)].powi(2) + 0.5 * q[(1, 2)].powi(2) - 0.3 * q[(2, 1)].powi(2)
                }
            };
            for x in pts(&g) {
                let (lhs, rhs) = g.generator_split(&x, &f, &gz, 1e-4).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-3 * rhs.abs().max(1e-2),
                    "{:?}: {lhs} vs {rhs}",
                    g.kind()
                );
            }
        }
    }

    #[test]
    fn ray_step_from_origin_picks_a_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = counterexample_step(&RayState::from_point(&[0.0; 3]), 3, 1e-3, &mut rng);
        assert!(s.radius > 0.0);
        assert!((norm(s.direction.as_ref().unwrap()) - 1.0).abs() < 1e-12);
        let same = counterexample_step(&s, 3, 0.0, &mut rng);
        assert_eq!(same, s);
    }
}
