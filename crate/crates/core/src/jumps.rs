//! Invariant diffusions interlaced with Poisson jumps `x_tau = sigma x_{tau-}`.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::par_map;
use crate::error::{Error, Result};
use crate::group::{haar_sample, plane_rotation, AlgebraBasis, GroupElement, GroupTag};
use crate::linalg::Mat;
use crate::path::CadlagPath;
use crate::rng::{stream, Purpose, StreamId};
use crate::scenarios::{second_order_fd, RadialPoint, ScenarioGeometry};
use crate::sde::{step_count, AmbientStepper};
use crate::stats::Estimate;

/// Built-in conjugation-invariant jump laws on `SO(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum JumpFamily {
    /// `h R h^{-1}` with `R` a rotation by `angle` in a coordinate plane and `h` Haar.
    PointMass { angle: f64 },
    /// Haar measure.
    Haar,
    /// `exp(scale * sum N_i xi_i)` with i.i.d. standard normals.
    GaussianAlgebra { scale: f64 },
}

/// Finite measure `eta = rate * law` on `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasure {
    pub rate: f64,
    pub family: JumpFamily,
    pub group_order: usize,
}

impl JumpMeasure {
    pub fn new(rate: f64, family: JumpFamily, group_order: usize) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "jump rate {rate} must be positive and finite"
            )));
        }
        if !(2..=crate::linalg::MAX_DIM).contains(&group_order) {
            return Err(Error::InvalidInput(format!(
                "SO({group_order}) unsupported"
            )));
        }
        Ok(JumpMeasure {
            rate,
            family,
            group_order,
        })
    }

    pub fn tag(&self) -> GroupTag {
        GroupTag::SpecialOrthogonal(self.group_order)
    }

    /// Draws `sigma` from `eta / eta(K)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        let n = self.group_order;
        match self.family {
            JumpFamily::PointMass { angle } => {
                let r = plane_rotation(n, 0, 1, angle);
                let h = haar_sample(n, rng);
                h.compose(&r).compose(&h.inverse())
            }
            JumpFamily::Haar => haar_sample(n, rng),
            JumpFamily::GaussianAlgebra { scale } => {
                let b = AlgebraBasis::so(n);
                let c: Vec<f64> = (0..b.dim())
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                b.combine(&c).exp(self.tag()).expect("finite coefficients")
            }
        }
    }

    /// All built-in families are invariant under conjugation by `SO(n)`.
    pub fn conjugate_invariant(&self) -> bool {
        true
    }

    pub fn describe(&self) -> String {
        match self.family {
            JumpFamily::PointMass { angle } => format!(
                "rate {} x conjugation-averaged rotation by {angle}",
                self.rate
            ),
            JumpFamily::Haar => format!("rate {} x Haar", self.rate),
            JumpFamily::GaussianAlgebra { scale } => {
                format!("rate {} x exp(Gaussian, scale {scale})", self.rate)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub element: GroupElement,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

/// Arrival times of a rate-`rate` Poisson process on `(0, t_end]`.
pub fn sample_jump_times<R: Rng + ?Sized>(rate: f64, t_end: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if !(rate > 0.0) || !(t_end > 0.0) {
        return out;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > t_end {
            return out;
        }
        out.push(t);
    }
}

#[derive(Debug, Clone)]
pub struct InterlacedPath {
    pub path: CadlagPath,
    pub jumps: Vec<JumpRecord>,
    /// Indices of jumps that landed outside `X°`.
    pub exit_events: Vec<usize>,
}

/// Interlaces the scenario's diffusion with jumps from `eta`.
///
/// Diffusion noise comes from `diffusion_rng` and jump data from
/// `jump_rng`, so without jumps the path equals the pure diffusion.
pub fn interlace<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    geom: &ScenarioGeometry,
    eta: Option<&JumpMeasure>,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    diffusion_rng: &mut R1,
    jump_rng: &mut R2,
) -> Result<InterlacedPath> {
    geom.validate_point(x0)?;
    if let Some(e) = eta {
        if e.group_order != geom.group_order() {
            return Err(Error::InvalidInput(
                "jump measure lives on a different group".into(),
            ));
        }
    }
    let steps = step_count(t_end, dt)?;
    let times = eta.map_or(Vec::new(), |e| sample_jump_times(e.rate, t_end, jump_rng));
    let mut path = CadlagPath::with_capacity(geom.ambient_dim(), steps + 1 + times.len());
    let mut jumps = Vec::with_capacity(times.len());
    let mut exit_events = Vec::new();
    let mut x = x0.to_vec();
    let mut stepper = AmbientStepper::new(geom, x0);
    path.push(0.0, &x);
    let mut j = 0;
    for s in 1..=steps {
        let t1 = (s as f64 * dt).min(t_end);
        let mut cur = ((s - 1) as f64 * dt).min(t_end);
        while j < times.len() && times[j] <= t1 {
            let tau = times[j];
            stepper.step(&mut x, tau - cur, diffusion_rng)?;
            let sigma = eta.expect("times imply a measure").sample(jump_rng);
            let pre = x.clone();
            x = geom.act(&sigma, &x);
            stepper.reset(&x);
            path.push_jump(tau, &pre, &x);
            if !geom.is_interior(&x) && geom.is_interior(&pre) {
                exit_events.push(jumps.len());
            }
            jumps.push(JumpRecord {
                time: tau,
                element: sigma,
                pre,
                post: x.clone(),
            });
            cur = tau;
            j += 1;
        }
        if t1 > cur {
            stepper.step(&mut x, t1 - cur, diffusion_rng)?;
            path.push(t1, &x);
        }
    }
    Ok(InterlacedPath {
        path,
        jumps,
        exit_events,
    })
}

/// Angular diffusion along a stored radial path with interlaced jumps
/// `k <- sigma k`; the result is the decomposition `(radial, angular)` of
/// the interlaced process, both carrying the jump marks.
pub fn replay_angular_with_jumps<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    geom: &ScenarioGeometry,
    radial: &CadlagPath,
    k0: &GroupElement,
    eta: &JumpMeasure,
    angular_rng: &mut R1,
    jump_rng: &mut R2,
) -> Result<(CadlagPath, CadlagPath, Vec<JumpRecord>)> {
    let space = geom.space();
    let basis = space.p_basis();
    let tag = geom.tag();
    let end = radial.lifetime.map_or(radial.len(), |l| l + 1);
    let t_end = radial.time(end - 1);
    let times = sample_jump_times(eta.rate, t_end, jump_rng);
    let mut rad = CadlagPath::with_capacity(radial.dim(), end + times.len());
    let mut ang = CadlagPath::with_capacity(space.point_dim(), end + times.len());
    let mut records = Vec::with_capacity(times.len());
    let mut k = *k0;
    rad.push(radial.time(0), radial.point(0));
    ang.push(radial.time(0), &space.encode(&space.project(&k)));
    let mut j = 0;
    let diffuse = |k: &mut GroupElement, a: &[f64], h: f64, rng: &mut R1| -> Result<()> {
        let sh = h.sqrt();
        let c: Vec<f64> = a
            .iter()
            .map(|ai| ai.max(0.0).sqrt() * sh * rng.sample::<f64, _>(StandardNormal))
            .collect();
        *k = k.compose(&basis.combine(&c).exp(tag)?);
        Ok(())
    };
    for s in 1..end {
        let (t0, t1) = (radial.time(s - 1), radial.time(s));
        let (y0, y1) = (radial.point(s - 1), radial.point(s));
        let mid: Vec<f64> = y0.iter().zip(y1).map(|(a, b)| 0.5 * (a + b)).collect();
        let a = geom.l2z_coeff(&RadialPoint(mid))?;
        let mut cur = t0;
        while j < times.len() && times[j] <= t1 {
            let tau = times[j];
            diffuse(&mut k, &a, tau - cur, angular_rng)?;
            let w = (tau - t0) / (t1 - t0);
            let y_tau: Vec<f64> = y0.iter().zip(y1).map(|(a, b)| a + w * (b - a)).collect();
            let sigma = eta.sample(jump_rng);
            let pre = space.encode(&space.project(&k));
            k = sigma.compose(&k);
            let post = space.encode(&space.project(&k));
            rad.push_jump(tau, &y_tau, &y_tau);
            ang.push_jump(tau, &pre, &post);
            records.push(JumpRecord {
                time: tau,
                element: sigma,
                pre,
                post,
            });
            cur = tau;
            j += 1;
        }
        if t1 > cur {
            diffuse(&mut k, &a, t1 - cur, angular_rng)?;
            rad.push(t1, y1);
            ang.push(t1, &space.encode(&space.project(&k)));
        }
    }
    Ok((rad, ang, records))
}

/// `L f(x) = L^0 f(x) + int [f(sigma x) - f(x)] eta(d sigma)`; the diffusion
/// part by central differences at `h = 1e-4`, the jump part by Monte Carlo.
pub fn apply_generator_l3<R: Rng + ?Sized>(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    geom: &ScenarioGeometry,
    eta: Option<&JumpMeasure>,
    n_mc: usize,
    rng: &mut R,
) -> Estimate {
    let (c, b) = geom.generator_coeffs(x);
    let l0 = second_order_fd(f, x, &c, &b, 1e-4);
    let Some(eta) = eta else {
        return Estimate::exact(l0);
    };
    let fx = f(x);
    let samples: Vec<f64> = (0..n_mc.max(2))
        .map(|_| eta.rate * (f(&geom.act(&eta.sample(rng), x)) - fx))
        .collect();
    let jump = Estimate::from_samples(&samples);
    Estimate {
        value: l0 + jump.value,
        se: jump.se,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteqResidual {
    pub lhs: Estimate,
    pub rhs: Estimate,
}

impl InteqResidual {
    pub fn residual(&self) -> f64 {
        self.lhs.value - self.rhs.value
    }

    pub fn z(&self) -> f64 {
        self.lhs.z_against(&self.rhs)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (8 points).
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Monte-Carlo residual of the first-jump integral equation
/// `P_t f = e^{-lt} P^0_t f + int_0^t e^{-lu} du int int P^0_u(x, dx1) P_{t-u} f(sigma x1) eta(d sigma)`.
///
/// The left side uses `n_paths` interlaced paths. The right side uses
/// `n_paths` pure diffusions plus, at each of 8 Gauss-Legendre nodes `u`,
/// `n_paths / 8` diffusions to `u`, a jump, and an interlaced remainder.
#[allow(clippy::too_many_arguments)]
pub fn verify_inteq(
    geom: &ScenarioGeometry,
    eta: Option<&JumpMeasure>,
    x0: &[f64],
    t: f64,
    dt: f64,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_paths: usize,
    seed: u64,
) -> Result<InteqResidual> {
    let run = |x: &[f64], horizon: f64, id: StreamId, jumps: bool| -> Result<Vec<f64>> {
        if horizon <= 0.0 {
            return Ok(x.to_vec());
        }
        let mut dr = id.rng(Purpose::Ambient);
        let mut jr = id.rng(Purpose::Jumps);
        let p = interlace(
            geom,
            if jumps { eta } else { None },
            x,
            horizon,
            dt,
            &mut dr,
            &mut jr,
        )?;
        Ok(p.path.last_point().to_vec())
    };
    let collect =
        |base: u64, n: usize, g: &(dyn Fn(StreamId) -> Result<f64> + Sync)| -> Result<Vec<f64>> {
            par_map(n, |i| g(StreamId::new(seed, base + i as u64)))
                .into_iter()
                .collect()
        };
    let lhs = collect(0, n_paths, &|id| Ok(f(&run(x0, t, id, true)?)))?;
    let lhs = Estimate::from_samples(&lhs);
    let lam = eta.map_or(0.0, |e| e.rate);
    let pure = collect(1 << 40, n_paths, &|id| Ok(f(&run(x0, t, id, false)?)))?;
    let pure = Estimate::from_samples(&pure);
    let mut value = (-lam * t).exp() * pure.value;
    let mut var = ((-lam * t).exp() * pure.se).powi(2);
    if let Some(e) = eta {
        let per_node = (n_paths / GL8.len()).max(2);
        for (node, (xi, wi)) in GL8.iter().enumerate() {
            let u = 0.5 * t * (xi + 1.0);
            let w = 0.5 * t * wi * (-lam * u).exp() * lam;
            let base = (2 + node as u64) << 40;
            let vals = collect(base, per_node, &|id| {
                let x1 = run(x0, u, id, false)?;
                let mut r = stream(seed, base + (1 << 39) + id.index, Purpose::Jumps);
                let sigma = e.sample(&mut r);
                let x2 = geom.act(&sigma, &x1);
                Ok(f(&run(
                    &x2,
                    t - u,
                    StreamId::new(seed, id.index + (1 << 38)),
                    true,
                )?))
            })?;
            let est = Estimate::from_samples(&vals);
            value += w * est.value;
            var += (w * est.se).powi(2);
        }
    }
    Ok(InteqResidual {
        lhs,
        rhs: Estimate {
            value,
            se: var.sqrt(),
        },
    })
}

/// `(P_t f(x0) - f(x0)) / t` by Monte Carlo, stratified on the number of
/// jumps in `[0, t]` (0, 1, or 2; the remaining Poisson mass is added as a
/// bound on the standard error).
#[allow(clippy::too_many_arguments)]
pub fn semigroup_derivative(
    geom: &ScenarioGeometry,
    eta: &JumpMeasure,
    x0: &[f64],
    t: f64,
    dt: f64,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    let lt = eta.rate * t;
    let probs = [(-lt).exp(), lt * (-lt).exp(), 0.5 * lt * lt * (-lt).exp()];
    let f0 = f(x0);
    let mut value = 0.0;
    let mut var = 0.0;
    for (m, p) in probs.iter().enumerate() {
        let n = if m == 0 {
            n_paths
        } else {
            (n_paths / 4).max(2)
        };
        let base = (m as u64) << 40;
        let vals: Vec<f64> = par_map(n, |i| -> Result<f64> {
            let id = StreamId::new(seed, base + i as u64);
            let mut dr = id.rng(Purpose::Ambient);
            let mut jr = id.rng(Purpose::Jumps);
            // Given m arrivals, their times are sorted uniforms on [0, t].
            let mut taus: Vec<f64> = (0..m).map(|_| jr.random::<f64>() * t).collect();
            taus.sort_by(f64::total_cmp);
            let mut x = x0.to_vec();
            let mut stepper = AmbientStepper::new(geom, x0);
            let steps = step_count(t, dt)?;
            let mut j = 0;
            for s in 1..=steps {
                let t1 = (s as f64 * dt).min(t);
                let mut cur = ((s - 1) as f64 * dt).min(t);
                while j < taus.len() && taus[j] <= t1 {
                    stepper.step(&mut x, taus[j] - cur, &mut dr)?;
                    x = geom.act(&eta.sample(&mut jr), &x);
                    stepper.reset(&x);
                    cur = taus[j];
                    j += 1;
                }
                stepper.step(&mut x, t1 - cur, &mut dr)?;
            }
            Ok(f(&x) - f0)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let est = Estimate::from_samples(&vals);
        value += p * est.value;
        var += (p * est.se).powi(2);
    }
    let tail = 1.0 - probs.iter().sum::<f64>();
    let bound = tail * 2.0 * f0.abs().max(1.0);
    Ok(Estimate {
        value: value / t,
        se: (var.sqrt() + bound) / t,
    })
}

/// Rotation by a given angle about the axis `u` in `R^3`.
pub fn axis_rotation(u: &[f64], angle: f64) -> GroupElement {
    let k = Mat::from_row_slice(3, &[0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0]);
    let (s, c) = angle.sin_cos();
    let m = Mat::identity(3) + k.scale(s) + (k * k).scale(1.0 - c);
    GroupElement::from_mat_unchecked(GroupTag::SpecialOrthogonal(3), m)
}
