//! Stratonovich integrators for invariant diffusions.
//!
//! Ambient paths use exact Gaussian increments on linear spaces and
//! geodesic random-walk steps on spheres. The coupled `(y, k)` system on
//! `Y° x K` advances `y` by a Heun step and `k` by Lie-Euler steps
//! `k <- k exp(X) exp(Y)`, so `k` never leaves `SO(n)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::coset::CosetSpace;
use crate::error::{Error, Result};
use crate::group::{AlgebraBasis, AlgebraElement, GroupElement, GroupTag};
use crate::linalg::{dot, norm, Mat};
use crate::path::{CadlagPath, TimeChange};
use crate::rng::{Purpose, StreamId};
use crate::scenarios::{
    counterexample_step, RadialPoint, RayState, ScenarioGeometry, ScenarioKind,
};

pub const MAX_DT: f64 = 1e-2;
pub const MAX_STEPS: f64 = 1e7;
pub const MAX_HALVINGS: u32 = 8;
/// Bisection depth of a radial step near the boundary of `Y°`. Eigenvalue
/// gaps come arbitrarily close to zero without reaching it, so the radial
/// step keeps halving until the step itself is negligible.
pub const RADIAL_MAX_HALVINGS: u32 = 32;
/// Largest geodesic step taken on a sphere before the increment is bisected.
pub const MAX_GEODESIC_STEP: f64 = 0.5;
/// Tolerance of the `u a = k` reconstruction.
pub const UA_TOL: f64 = 1e-6;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Number of steps on `[0, t_end]`, validating the step-size contract.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidInput(format!(
            "dt = {dt} must lie in (0, {MAX_DT}]"
        )));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "horizon T = {t_end} must be finite and >= 0"
        )));
    }
    if t_end / dt > MAX_STEPS {
        return Err(Error::InvalidInput(format!(
            "T/dt = {} exceeds {MAX_STEPS:e}",
            t_end / dt
        )));
    }
    Ok((t_end / dt - 1e-9).ceil().max(0.0) as usize)
}

fn grid_time(k: usize, dt: f64, t_end: f64) -> f64 {
    (k as f64 * dt).min(t_end)
}

/// Geodesic random-walk step on the unit sphere driven by an ambient
/// Gaussian increment `g` of per-coordinate variance `h`.
pub fn sphere_step<R: Rng + ?Sized>(z: &[f64], g: &[f64], h: f64, rng: &mut R) -> Result<Vec<f64>> {
    sphere_step_inner(z, g, h, rng, 0)
}

fn sphere_step_inner<R: Rng + ?Sized>(
    z: &[f64],
    g: &[f64],
    h: f64,
    rng: &mut R,
    depth: u32,
) -> Result<Vec<f64>> {
    let gz = dot(g, z);
    let v: Vec<f64> = g.iter().zip(z).map(|(gi, zi)| gi - gz * zi).collect();
    let a = norm(&v);
    if a > MAX_GEODESIC_STEP {
        if depth >= MAX_HALVINGS {
            return Err(Error::StepHalving(depth));
        }
        let s = (0.25 * h).sqrt();
        let g1: Vec<f64> = g.iter().map(|gi| 0.5 * gi + s * normal(rng)).collect();
        let g2: Vec<f64> = g.iter().zip(&g1).map(|(a, b)| a - b).collect();
        let mid = sphere_step_inner(z, &g1, 0.5 * h, rng, depth + 1)?;
        return sphere_step_inner(&mid, &g2, 0.5 * h, rng, depth + 1);
    }
    let mut out: Vec<f64> = if a > 0.0 {
        let (s, c) = a.sin_cos();
        z.iter()
            .zip(&v)
            .map(|(zi, vi)| c * zi + s * vi / a)
            .collect()
    } else {
        z.to_vec()
    };
    let r = norm(&out);
    out.iter_mut().for_each(|x| *x /= r);
    Ok(out)
}

/// Single-path ambient stepper; carries the ray state for the counterexample.
pub struct AmbientStepper<'g> {
    geom: &'g ScenarioGeometry,
    ray: Option<RayState>,
}

impl<'g> AmbientStepper<'g> {
    pub fn new(geom: &'g ScenarioGeometry, x0: &[f64]) -> Self {
        let ray =
            (geom.kind() == ScenarioKind::RayCounterexample).then(|| RayState::from_point(x0));
        AmbientStepper { geom, ray }
    }

    /// Re-synchronises after `x` was changed externally (e.g. by a jump).
    pub fn reset(&mut self, x: &[f64]) {
        if self.ray.is_some() {
            self.ray = Some(RayState::from_point(x));
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, x: &mut [f64], h: f64, rng: &mut R) -> Result<()> {
        if h <= 0.0 {
            return Ok(());
        }
        let sh = h.sqrt();
        match self.geom.kind() {
            ScenarioKind::EuclidSon => x.iter_mut().for_each(|v| *v += sh * normal(rng)),
            ScenarioKind::SymMatrices => {
                let n = self.geom.size();
                let sd = (2.0 * h).sqrt();
                for (i, v) in x.iter_mut().enumerate() {
                    *v += if i < n { sd } else { sh } * normal(rng);
                }
            }
            ScenarioKind::ProductSpace => {
                x[0] += sh * normal(rng);
                let g = [sh * normal(rng), sh * normal(rng)];
                let w = sphere_step(&x[1..], &g, h, rng)?;
                x[1..].copy_from_slice(&w);
            }
            ScenarioKind::SpherePolar => {
                let g: Vec<f64> = (0..x.len()).map(|_| sh * normal(rng)).collect();
                let z = sphere_step(x, &g, h, rng)?;
                x.copy_from_slice(&z);
            }
            ScenarioKind::RayCounterexample => {
                let n = self.geom.size();
                let st = self.ray.take().expect("ray state");
                let next = counterexample_step(&st, n, h, rng);
                x.copy_from_slice(&next.point(n));
                self.ray = Some(next);
            }
        }
        Ok(())
    }
}

/// Simulates the canonical invariant diffusion of a scenario from `x0`.
///
/// `x0` may lie on the orbit boundary (e.g. Brownian motion from the origin);
/// exit semantics are applied later by the decomposer.
pub fn simulate_invariant_diffusion<R: Rng + ?Sized>(
    geom: &ScenarioGeometry,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<CadlagPath> {
    geom.validate_point(x0)?;
    let steps = step_count(t_end, dt)?;
    let mut path = CadlagPath::with_capacity(geom.ambient_dim(), steps + 1);
    let mut x = x0.to_vec();
    let mut stepper = AmbientStepper::new(geom, x0);
    path.push(0.0, &x);
    for k in 1..=steps {
        let h = grid_time(k, dt, t_end) - grid_time(k - 1, dt, t_end);
        stepper.step(&mut x, h, rng)?;
        path.push(grid_time(k, dt, t_end), &x);
    }
    Ok(path)
}

/// Brownian motion on the unit sphere of `R^d` with generator `Δ/2`.
pub fn sample_sphere_bm<R: Rng + ?Sized>(
    z0: &[f64],
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<CadlagPath> {
    if (norm(z0) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(
            "sphere BM needs a unit starting vector".into(),
        ));
    }
    let steps = step_count(t_end, dt)?;
    let mut path = CadlagPath::with_capacity(z0.len(), steps + 1);
    let mut z = z0.to_vec();
    path.push(0.0, &z);
    for k in 1..=steps {
        let h = grid_time(k, dt, t_end) - grid_time(k - 1, dt, t_end);
        let sh = h.sqrt();
        let g: Vec<f64> = (0..z.len()).map(|_| sh * normal(rng)).collect();
        z = sphere_step(&z, &g, h, rng)?;
        path.push(grid_time(k, dt, t_end), &z);
    }
    Ok(path)
}

/// Brownian motion on `SO(n)` with generator `1/2 sum xi_i^2` over an
/// orthonormal basis, started at the identity.
///
/// Gaussian increments are drawn on a grid of `dt / substeps`; with
/// `aggregate` they are summed into one step per `dt`, which couples a
/// coarse path to the fine path drawn from the same stream. Points are
/// stored every `dt` either way.
pub fn sample_group_bm<R: Rng + ?Sized>(
    n: usize,
    t_end: f64,
    dt: f64,
    substeps: usize,
    aggregate: bool,
    rng: &mut R,
) -> Result<CadlagPath> {
    let steps = step_count(t_end, dt)?;
    let basis = AlgebraBasis::so(n);
    let tag = GroupTag::SpecialOrthogonal(n);
    let mut k = GroupElement::identity(tag);
    let mut path = CadlagPath::with_capacity(n * n, steps + 1);
    path.push(0.0, k.mat().as_slice());
    let m = basis.dim();
    let sub = substeps.max(1);
    for s in 1..=steps {
        let h = grid_time(s, dt, t_end) - grid_time(s - 1, dt, t_end);
        let hs = (h / sub as f64).sqrt();
        let mut total = vec![0.0; m];
        for _ in 0..sub {
            let inc: Vec<f64> = (0..m).map(|_| hs * normal(rng)).collect();
            if aggregate {
                total.iter_mut().zip(&inc).for_each(|(t, i)| *t += i);
            } else {
                k = k.compose(&basis.combine(&inc).exp(tag)?);
            }
        }
        if aggregate {
            k = k.compose(&basis.combine(&total).exp(tag)?);
        }
        path.push(grid_time(s, dt, t_end), k.mat().as_slice());
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// coupled (y, k) system

/// Mixed vector fields on `K`: `eta_i` paired with the radial noises and a
/// drift `xi_0`. Both are left-invariant and constant in `y`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixedFields {
    pub eta: Vec<Mat>,
    pub xi0: Option<Mat>,
}

impl MixedFields {
    pub fn none() -> Self {
        MixedFields::default()
    }

    pub fn is_zero(&self) -> bool {
        self.xi0.is_none() && self.eta.is_empty()
    }

    fn increment(&self, n: usize, dw: &[f64], h: f64) -> Option<AlgebraElement> {
        if self.is_zero() {
            return None;
        }
        let mut m = Mat::zeros(n);
        for (e, w) in self.eta.iter().zip(dw) {
            m += e.scale(*w);
        }
        if let Some(x) = &self.xi0 {
            m += x.scale(h);
        }
        Some(AlgebraElement::new(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    pub index: usize,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub radial: CadlagPath,
    /// Row-major `k_t` matrices.
    pub group: CadlagPath,
    /// Radial Brownian increments, `dim_y` per step.
    pub radial_increments: Vec<f64>,
    pub exit: Option<ExitRecord>,
    pub noise: StreamId,
}

fn add_scaled(y: &[f64], d: &[f64], h: f64, s: &[f64], dw: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] + d[i] * h + s[i] * dw[i])
        .collect()
}

/// One Heun step of the radial SDE, bisecting the Brownian increment when a
/// stage leaves `Y°`. `None` means the boundary was reached.
fn radial_step<R: Rng + ?Sized>(
    geom: &ScenarioGeometry,
    y: &RadialPoint,
    dw: &[f64],
    h: f64,
    rng: &mut R,
    depth: u32,
) -> Option<RadialPoint> {
    let s = geom.radial_noise();
    let d0 = geom.radial_drift(y);
    let pred = RadialPoint(add_scaled(&y.0, &d0, h, &s, dw));
    if geom.radial_is_interior(&pred) {
        let d1 = geom.radial_drift(&pred);
        let avg: Vec<f64> = d0.iter().zip(&d1).map(|(a, b)| 0.5 * (a + b)).collect();
        let next = RadialPoint(add_scaled(&y.0, &avg, h, &s, dw));
        if geom.radial_is_interior(&next) {
            return Some(next);
        }
    }
    if depth >= RADIAL_MAX_HALVINGS {
        return None;
    }
    let sd = (0.25 * h).sqrt();
    let dw1: Vec<f64> = dw.iter().map(|w| 0.5 * w + sd * normal(rng)).collect();
    let dw2: Vec<f64> = dw.iter().zip(&dw1).map(|(a, b)| a - b).collect();
    let mid = radial_step(geom, y, &dw1, 0.5 * h, rng, depth + 1)?;
    radial_step(geom, &mid, &dw2, 0.5 * h, rng, depth + 1)
}

fn midpoint(a: &[f64], b: &[f64]) -> RadialPoint {
    RadialPoint(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
}

/// `sum_i sqrt(a_i) dW_i xi_i` for the diagonal coefficient `a`.
fn angular_increment<R: Rng + ?Sized>(
    basis: &AlgebraBasis,
    a: &[f64],
    h: f64,
    rng: &mut R,
) -> AlgebraElement {
    let sh = h.sqrt();
    let c: Vec<f64> = a
        .iter()
        .map(|ai| ai.max(0.0).sqrt() * sh * normal(rng))
        .collect();
    basis.combine(&c)
}

/// Integrates the coupled Stratonovich system on `Y° x K` from `(y0, k0)`.
pub fn integrate_coupled_yk(
    geom: &ScenarioGeometry,
    y0: &RadialPoint,
    k0: &GroupElement,
    t_end: f64,
    dt: f64,
    noise: StreamId,
    mixed: &MixedFields,
) -> Result<CoupledPath> {
    if !geom.radial_is_interior(y0) {
        return Err(Error::Boundary(
            "initial radial point is not interior".into(),
        ));
    }
    if y0.0.len() != geom.dim_y() {
        return Err(Error::InvalidInput(
            "radial point has wrong dimension".into(),
        ));
    }
    let steps = step_count(t_end, dt)?;
    let n = geom.group_order();
    let tag = geom.tag();
    let basis = geom.space().p_basis();
    let mut rad_rng = noise.rng(Purpose::Radial);
    let mut ang_rng = noise.rng(Purpose::Angular);
    let q = geom.dim_y();
    let mut radial = CadlagPath::with_capacity(q, steps + 1);
    let mut group = CadlagPath::with_capacity(n * n, steps + 1);
    radial.seed = Some(noise);
    group.seed = Some(noise);
    let mut incs = Vec::with_capacity(steps * q);
    let mut y = y0.clone();
    let mut k = *k0;
    radial.push(0.0, &y.0);
    group.push(0.0, k.mat().as_slice());
    let mut exit = None;
    for s in 1..=steps {
        let t = grid_time(s, dt, t_end);
        let h = t - grid_time(s - 1, dt, t_end);
        let sh = h.sqrt();
        let dw: Vec<f64> = (0..q).map(|_| sh * normal(&mut rad_rng)).collect();
        let Some(y_new) = radial_step(geom, &y, &dw, h, &mut rad_rng, 0) else {
            exit = Some(ExitRecord { index: s, time: t });
            radial.lifetime = Some(s - 1);
            group.lifetime = Some(s - 1);
            break;
        };
        let a = geom.l2z_coeff(&midpoint(&y.0, &y_new.0))?;
        let x = angular_increment(&basis, &a, h, &mut ang_rng);
        k = k.compose(&x.exp(tag)?);
        if let Some(m) = mixed.increment(n, &dw, h) {
            k = k.compose(&m.exp(tag)?);
        }
        y = y_new;
        incs.extend_from_slice(&dw);
        radial.push(t, &y.0);
        group.push(t, k.mat().as_slice());
    }
    Ok(CoupledPath {
        radial,
        group,
        radial_increments: incs,
        exit,
        noise,
    })
}

impl CoupledPath {
    /// `k_t . y_t` in ambient coordinates.
    pub fn ambient(&self, geom: &ScenarioGeometry) -> CadlagPath {
        let n = geom.group_order();
        let mut out = CadlagPath::with_capacity(geom.ambient_dim(), self.radial.len());
        for i in 0..self.radial.len() {
            let k = GroupElement::from_mat_unchecked(
                geom.tag(),
                Mat::from_row_slice(n, self.group.point(i)),
            );
            out.push(
                self.radial.time(i),
                &geom.compose_group(&k, &RadialPoint(self.radial.point(i).to_vec())),
            );
        }
        out.seed = self.radial.seed;
        out
    }
}

#[derive(Debug, Clone)]
pub struct UaFactorization {
    pub u: CadlagPath,
    pub a: CadlagPath,
    pub max_error: f64,
}

/// Replays the coupled noise to split `k_t = u_t a_t`, where `a` carries the
/// mixed fields and `u` the conjugated angular increments.
pub fn factorize_ua(
    geom: &ScenarioGeometry,
    coupled: &CoupledPath,
    mixed: &MixedFields,
) -> Result<UaFactorization> {
    let n = geom.group_order();
    let tag = geom.tag();
    let basis = geom.space().p_basis();
    let q = geom.dim_y();
    let mut ang_rng = coupled.noise.rng(Purpose::Angular);
    let len = coupled.radial.len();
    let mut u = GroupElement::new(tag, Mat::from_row_slice(n, coupled.group.point(0)))?;
    let mut a = GroupElement::identity(tag);
    let mut up = CadlagPath::with_capacity(n * n, len);
    let mut ap = CadlagPath::with_capacity(n * n, len);
    up.push(0.0, u.mat().as_slice());
    ap.push(0.0, a.mat().as_slice());
    let mut max_error: f64 = 0.0;
    for s in 1..len {
        let h = coupled.radial.time(s) - coupled.radial.time(s - 1);
        let ymid = midpoint(coupled.radial.point(s - 1), coupled.radial.point(s));
        let coeff = geom.l2z_coeff(&ymid)?;
        let x = angular_increment(&basis, &coeff, h, &mut ang_rng);
        u = u.compose(&x.conjugate(&a).exp(tag)?);
        let dw = &coupled.radial_increments[(s - 1) * q..s * q];
        if let Some(m) = mixed.increment(n, dw, h) {
            a = a.compose(&m.exp(tag)?);
        }
        let k = Mat::from_row_slice(n, coupled.group.point(s));
        let err = (*u.mat() * *a.mat()).dist_fro(&k);
        max_error = max_error.max(err);
        if err > UA_TOL {
            return Err(Error::Accuracy(format!(
                "u a differs from k by {err:.2e} at t = {}; reduce dt",
                coupled.radial.time(s)
            )));
        }
        up.push(coupled.radial.time(s), u.mat().as_slice());
        ap.push(coupled.radial.time(s), a.mat().as_slice());
    }
    Ok(UaFactorization {
        u: up,
        a: ap,
        max_error,
    })
}

/// Angular diffusion driven by a stored radial path: `k <- k exp(X)` with
/// `X` built from `a(y)` at each step midpoint. Returns coset points.
pub fn replay_angular<R: Rng + ?Sized>(
    geom: &ScenarioGeometry,
    radial: &CadlagPath,
    k0: &GroupElement,
    rng: &mut R,
) -> Result<CadlagPath> {
    let space = geom.space();
    let basis = space.p_basis();
    let tag = geom.tag();
    let end = radial.lifetime.map_or(radial.len(), |l| l + 1);
    let mut out = CadlagPath::with_capacity(space.point_dim(), end);
    let mut k = *k0;
    out.push(radial.time(0), &space.encode(&space.project(&k)));
    for s in 1..end {
        let h = radial.time(s) - radial.time(s - 1);
        let a = geom.l2z_coeff(&midpoint(radial.point(s - 1), radial.point(s)))?;
        k = k.compose(&angular_increment(&basis, &a, h, rng).exp(tag)?);
        out.push(radial.time(s), &space.encode(&space.project(&k)));
    }
    Ok(out)
}

/// `a_t = int_0^t alpha(y_s) ds` by the trapezoid rule on the path grid.
pub fn compute_time_change(geom: &ScenarioGeometry, radial: &CadlagPath) -> Result<TimeChange> {
    if !geom.is_irreducible() {
        return Err(Error::Unsupported(format!(
            "{} is not irreducible; estimate the full covariance A(t) instead of a scalar clock",
            geom.kind().name()
        )));
    }
    let end = radial.lifetime.map_or(radial.len(), |l| l + 1);
    let mut grid = Vec::with_capacity(end);
    let mut values = Vec::with_capacity(end);
    let mut prev = geom.alpha(&RadialPoint(radial.point(0).to_vec()))?;
    grid.push(radial.time(0));
    values.push(0.0);
    for s in 1..end {
        let cur = geom.alpha(&RadialPoint(radial.point(s).to_vec()))?;
        let h = radial.time(s) - radial.time(s - 1);
        values.push(values[s - 1] + 0.5 * h * (prev + cur));
        grid.push(radial.time(s));
        prev = cur;
    }
    Ok(TimeChange { grid, values })
}

/// Geodesic distance between the first and the stored point at `index`
/// of a path in `space`.
pub fn displacement(space: &CosetSpace, path: &CadlagPath, from: usize, to: usize) -> Result<f64> {
    Ok(space.distance(
        &space.decode(path.point(from))?,
        &space.decode(path.point(to))?,
    ))
}
