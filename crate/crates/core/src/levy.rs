//! Empirical Lévy triples `(b, A, Pi)` of angular path ensembles.
//!
//! Estimation streams paths through a [`TripleEstimator`]: a pilot ensemble
//! fixes per-cell jump thresholds, then every path adds its grid increments
//! to a mergeable [`TripleAccumulator`]. Standard errors come from per-path
//! cumulative sums.
//!
//! Increments are `S(z_{k-1})^{-1} z_k` in exponential coordinates. One is a
//! jump when its sup-norm exceeds the cell threshold or it leaves the chart.
//! The truncation set `U` is the threshold box, so no estimated `Pi` mass
//! lies inside `U` and the limit correction to `A` vanishes.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coset::{CosetPoint, CosetSpace, FiniteIsotropy};
use crate::decompose::DecomposedPath;
use crate::ensemble::par_fold;
use crate::error::{Error, Result};
use crate::group::{haar_sample, AlgebraBasis, GroupElement, GroupTag};
use crate::linalg::{Mat, MAX_DIM};
use crate::path::CadlagPath;
use crate::stats::{quantile_sorted, Estimate};

/// Smallest ensemble accepted by the estimator.
pub const MIN_PATHS: usize = 100;
/// Jump threshold in units of the local increment standard deviation.
pub const THRESHOLD_SIGMAS: f64 = 5.0;
/// Paths used to calibrate the thresholds.
pub const PILOT_PATHS: usize = 256;
/// Share of beyond-threshold increments that marks a cell as a fixed jump.
pub const FIXED_JUMP_FRACTION: f64 = 0.5;
/// Haar nodes for averaging over a continuous isotropy group.
pub const HAAR_NODES: usize = 1024;
/// Default cap on stored jump atoms.
pub const MAX_ATOMS: usize = 200_000;
/// Step for finite-difference derivatives of test functions.
pub const FD_STEP: f64 = 1e-5;

const GRID_TOL: f64 = 1e-9;

/// One observed jump increment, weighted as a point mass of `Pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub cell: usize,
    pub increment: Vec<f64>,
    pub weight: f64,
}

/// `Pi(t, .)` on distance shells around the origin.
///
/// Bin 0 covers jumps closer than `edges[0]`, bin `i` covers
/// `[edges[i-1], edges[i])`, and the last bin is the overflow
/// `[edges.last, inf)` together with increments outside the chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyHistogram {
    pub edges: Vec<f64>,
    /// `mass[k][bin]` at grid time `k`.
    pub mass: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

impl LevyHistogram {
    pub fn zeros(edges: &[f64], grid_len: usize) -> Self {
        let bins = edges.len() + 1;
        LevyHistogram {
            edges: edges.to_vec(),
            mass: vec![vec![0.0; bins]; grid_len],
            se: vec![vec![0.0; bins]; grid_len],
        }
    }

    pub fn bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin_of(&self, distance: Option<f64>) -> usize {
        match distance {
            Some(d) => self.edges.partition_point(|&e| e <= d),
            None => self.edges.len(),
        }
    }

    pub fn total(&self, k: usize) -> Estimate {
        let value = self.mass[k].iter().sum();
        let se = self.se[k].iter().map(|s| s * s).sum::<f64>().sqrt();
        Estimate { value, se }
    }
}

/// Increments of a cell holding a fixed jump, removed before estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedJump {
    pub time: f64,
    pub cell: usize,
    pub increments: Vec<Vec<f64>>,
}

/// Estimated or exact triple on a grid `0 = t_0 < ... < t_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyTriple {
    pub space: CosetSpace,
    /// Orthonormal basis in which coordinates and `A` are expressed.
    pub basis: Vec<Mat>,
    pub grid: Vec<f64>,
    /// Encoded `b_{t_k}`.
    pub drift: Vec<Vec<f64>>,
    /// Cumulative mean exponential coordinates of the drift.
    pub drift_coords: Vec<Vec<f64>>,
    pub drift_se: Vec<Vec<f64>>,
    /// Row-major `m x m` matrices `A(t_k)`.
    pub covariance: Vec<Vec<f64>>,
    pub covariance_se: Vec<Vec<f64>>,
    pub levy_hist: LevyHistogram,
    pub jump_atoms: Vec<JumpAtom>,
    pub fixed_jumps: Vec<FixedJump>,
    pub n_paths: usize,
    pub thresholds: Vec<f64>,
}

fn uniform_grid(t_end: f64, n_grid: usize) -> Vec<f64> {
    (0..=n_grid)
        .map(|k| t_end * k as f64 / n_grid as f64)
        .collect()
}

impl LevyTriple {
    /// `b = o`, `A(t) = scale t I`, `Pi = 0`.
    pub fn brownian(space: CosetSpace, t_end: f64, n_grid: usize, scale: f64) -> Self {
        let basis = space.p_basis();
        let m = basis.dim();
        let grid = uniform_grid(t_end, n_grid);
        let o = space.encode(&space.origin());
        let covariance = grid
            .iter()
            .map(|&t| {
                (0..m * m)
                    .map(|e| if e / m == e % m { scale * t } else { 0.0 })
                    .collect()
            })
            .collect();
        LevyTriple {
            space,
            basis: basis.elements().to_vec(),
            drift: vec![o; grid.len()],
            drift_coords: vec![vec![0.0; m]; grid.len()],
            drift_se: vec![vec![0.0; m]; grid.len()],
            covariance,
            covariance_se: vec![vec![0.0; m * m]; grid.len()],
            levy_hist: LevyHistogram::zeros(&[], grid.len()),
            jump_atoms: Vec::new(),
            fixed_jumps: Vec::new(),
            n_paths: 0,
            thresholds: vec![0.0; n_grid],
            grid,
        }
    }

    pub fn zero(space: CosetSpace, t_end: f64, n_grid: usize) -> Self {
        Self::brownian(space, t_end, n_grid, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn n_cells(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn algebra_basis(&self) -> Result<AlgebraBasis> {
        AlgebraBasis::new(self.space.group_order(), self.basis.clone())
    }

    pub fn covariance_entry(&self, k: usize, i: usize, j: usize) -> Estimate {
        let m = self.dim();
        Estimate {
            value: self.covariance[k][i * m + j],
            se: self.covariance_se[k][i * m + j],
        }
    }

    /// `A(t_k)` as a matrix; needs `m <= 6`.
    pub fn covariance_mat(&self, k: usize) -> Result<Mat> {
        let m = self.dim();
        if m > MAX_DIM {
            return Err(Error::Unsupported(format!(
                "covariance of dimension {m} exceeds {MAX_DIM}"
            )));
        }
        Ok(Mat::from_row_slice(m, &self.covariance[k]))
    }

    pub fn drift_point(&self, k: usize) -> Result<CosetPoint> {
        self.space.decode(&self.drift[k])
    }

    /// Group element representing `b_{t_k}`.
    pub fn drift_element(&self, k: usize) -> Result<GroupElement> {
        Ok(self.space.section(&self.drift_point(k)?))
    }

    /// `Pi(t_k, f) = sum of atom weights times f(increment)` over cells before `k`.
    pub fn pi_functional(&self, k: usize, f: &dyn Fn(&CosetPoint) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for a in self.jump_atoms.iter().filter(|a| a.cell < k) {
            acc += a.weight * f(&self.space.decode(&a.increment)?);
        }
        Ok(acc)
    }

    /// Checks grid, initial values, monotonicity of `Pi`, and shapes.
    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        let len = self.grid.len();
        if len < 2 || self.grid[0] != 0.0 || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "triple grid must start at 0 and increase".into(),
            ));
        }
        let shapes_ok = self.drift.len() == len
            && self.drift_coords.len() == len
            && self.covariance.len() == len
            && self.covariance_se.len() == len
            && self.levy_hist.mass.len() == len
            && self.covariance.iter().all(|c| c.len() == m * m)
            && self.drift_coords.iter().all(|c| c.len() == m);
        if !shapes_ok {
            return Err(Error::InvalidInput(
                "triple tables disagree with grid or basis".into(),
            ));
        }
        self.algebra_basis()?;
        if self.covariance[0].iter().any(|&a| a != 0.0)
            || self.levy_hist.mass[0].iter().any(|&p| p != 0.0)
        {
            return Err(Error::InvalidInput("A(0) and Pi(0) must vanish".into()));
        }
        for w in self.levy_hist.mass.windows(2) {
            if w[0].iter().zip(&w[1]).any(|(a, b)| b < a) {
                return Err(Error::InvalidInput(
                    "Pi(t, bin) must be nondecreasing in t".into(),
                ));
            }
        }
        Ok(())
    }

    /// Smallest `lambda_min(A(t) - A(s)) + 3 se` over pairs of `checkpoints`,
    /// with `se` the largest entrywise standard error at `t`.
    pub fn psd_margin(&self, checkpoints: &[usize]) -> Result<f64> {
        let mut margin = f64::INFINITY;
        for (a, &s) in checkpoints.iter().enumerate() {
            for &t in &checkpoints[a + 1..] {
                let d = self.covariance_mat(t)? - self.covariance_mat(s)?;
                let (vals, _) = d.symmetrize().symmetric_eigen();
                let se = self.covariance_se[t].iter().cloned().fold(0.0, f64::max);
                margin = margin.min(vals[vals.len() - 1] + 3.0 * se);
            }
        }
        Ok(margin)
    }

    /// Largest `|Ad(m) A Ad(m)^T - A|` in units of standard error, over
    /// `draws` isotropy elements.
    pub fn ad_m_deviation<R: Rng + ?Sized>(
        &self,
        k: usize,
        draws: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let basis = self.algebra_basis()?;
        let m = self.dim();
        let a = &self.covariance[k];
        let mut worst: f64 = 0.0;
        for _ in 0..draws {
            let h = self.space.random_isotropy(rng);
            let ad = basis.adjoint(&h);
            for i in 0..m {
                for j in 0..m {
                    let mut v = 0.0;
                    for p in 0..m {
                        for q in 0..m {
                            v += ad[i][p] * a[p * m + q] * ad[j][q];
                        }
                    }
                    let se = self.covariance_se[k][i * m + j].max(1e-300);
                    worst = worst.max((v - a[i * m + j]).abs() / se);
                }
            }
        }
        Ok(worst)
    }

    /// `V(t_k) f (g) = 1/2 sum A_ij(t_k) xi_i xi_j f (g)`.
    pub fn covariance_operator(
        &self,
        k: usize,
        f: &dyn CosetTestFunction,
        g: &GroupElement,
    ) -> f64 {
        let half: Vec<f64> = self.covariance[k].iter().map(|a| 0.5 * a).collect();
        f.hessian_form(g, &self.basis, &half)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let t: LevyTriple = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

// ---------------------------------------------------------------------------
// estimation

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub t_end: f64,
    pub n_grid: usize,
    /// Fixed sup-norm threshold; calibrated per cell when `None`.
    pub jump_threshold: Option<f64>,
    pub bin_edges: Vec<f64>,
    /// Known fixed-jump times, removed before estimation.
    pub fixed_jump_times: Vec<f64>,
    /// Alternative orthonormal basis of the tangent space at `o`.
    pub basis: Option<AlgebraBasis>,
    pub max_atoms: usize,
}

impl EstimatorConfig {
    pub fn new(t_end: f64, n_grid: usize) -> Self {
        EstimatorConfig {
            t_end,
            n_grid,
            jump_threshold: None,
            bin_edges: Vec::new(),
            fixed_jump_times: Vec::new(),
            basis: None,
            max_atoms: MAX_ATOMS,
        }
    }
}

/// Calibrated estimator; see the module docs.
#[derive(Debug, Clone)]
pub struct TripleEstimator {
    space: CosetSpace,
    basis: AlgebraBasis,
    cfg: EstimatorConfig,
    grid: Vec<f64>,
    thresholds: Vec<f64>,
    fixed: Vec<Option<f64>>,
}

/// Mergeable sufficient statistics.
#[derive(Debug, Clone)]
pub struct TripleAccumulator {
    n_paths: usize,
    m: usize,
    bins: usize,
    n_small: Vec<f64>,
    sum_phi: Vec<Vec<f64>>,
    sum_outer: Vec<Vec<f64>>,
    drift_sum: Vec<Vec<f64>>,
    drift_sq: Vec<Vec<f64>>,
    q_sum: Vec<Vec<f64>>,
    q_sq: Vec<Vec<f64>>,
    pi_sum: Vec<Vec<f64>>,
    pi_sq: Vec<Vec<f64>>,
    atoms: Vec<JumpAtom>,
    atoms_seen: usize,
    fixed: Vec<Vec<Vec<f64>>>,
}

impl TripleAccumulator {
    fn new(n_grid: usize, m: usize, bins: usize, n_fixed: usize) -> Self {
        let cells = |w| vec![vec![0.0; w]; n_grid];
        let points = |w| vec![vec![0.0; w]; n_grid + 1];
        TripleAccumulator {
            n_paths: 0,
            m,
            bins,
            n_small: vec![0.0; n_grid],
            sum_phi: cells(m),
            sum_outer: cells(m * m),
            drift_sum: points(m),
            drift_sq: points(m),
            q_sum: points(m * m),
            q_sq: points(m * m),
            pi_sum: points(bins),
            pi_sq: points(bins),
            atoms: Vec::new(),
            atoms_seen: 0,
            fixed: vec![Vec::new(); n_fixed],
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Adds `other`; atoms are kept in merge order up to `cap`.
    pub fn merge(&mut self, other: TripleAccumulator, cap: usize) {
        fn add(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
            for (x, y) in a.iter_mut().zip(b) {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
            }
        }
        self.n_paths += other.n_paths;
        self.n_small
            .iter_mut()
            .zip(&other.n_small)
            .for_each(|(a, b)| *a += b);
        add(&mut self.sum_phi, &other.sum_phi);
        add(&mut self.sum_outer, &other.sum_outer);
        add(&mut self.drift_sum, &other.drift_sum);
        add(&mut self.drift_sq, &other.drift_sq);
        add(&mut self.q_sum, &other.q_sum);
        add(&mut self.q_sq, &other.q_sq);
        add(&mut self.pi_sum, &other.pi_sum);
        add(&mut self.pi_sq, &other.pi_sq);
        self.atoms_seen += other.atoms_seen;
        let room = cap.saturating_sub(self.atoms.len());
        self.atoms.extend(other.atoms.into_iter().take(room));
        for (a, b) in self.fixed.iter_mut().zip(other.fixed) {
            a.extend(b);
        }
    }
}

enum Increment {
    Small(Vec<f64>),
    Jump {
        point: CosetPoint,
        distance: Option<f64>,
    },
}

/// Boundary indices of the cells of `grid` on `path`, up to its lifetime.
fn cell_indices(path: &CadlagPath, grid: &[f64]) -> Result<Vec<usize>> {
    let last = path.lifetime.unwrap_or(path.len().saturating_sub(1));
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        let Some(i) = path.index_at_or_before(t) else {
            return Err(Error::GridMismatch(format!(
                "path has no point at or before t = {t}"
            )));
        };
        if (path.time(i) - t).abs() > GRID_TOL * t.max(1.0) {
            if i >= last {
                break;
            }
            return Err(Error::GridMismatch(format!(
                "path grid misses the cell boundary t = {t}"
            )));
        }
        if i > last {
            break;
        }
        out.push(i);
    }
    Ok(out)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

impl TripleEstimator {
    /// Fixes thresholds and fixed-jump cells from a pilot ensemble.
    pub fn calibrate(
        space: CosetSpace,
        cfg: EstimatorConfig,
        pilot: &[CadlagPath],
    ) -> Result<Self> {
        if cfg.n_grid == 0 || !(cfg.t_end > 0.0) {
            return Err(Error::InvalidInput(
                "estimation grid needs n_grid >= 1 and t_end > 0".into(),
            ));
        }
        if cfg.bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("histogram edges must increase".into()));
        }
        let basis = match &cfg.basis {
            Some(b) => {
                if b.dim() != space.dim() || b.order() != space.group_order() {
                    return Err(Error::InvalidInput(
                        "basis does not match the tangent space".into(),
                    ));
                }
                b.clone()
            }
            None => space.p_basis(),
        };
        let grid = uniform_grid(cfg.t_end, cfg.n_grid);
        let cells = cfg.n_grid;
        let mut fixed: Vec<Option<f64>> = vec![None; cells];
        for &t in &cfg.fixed_jump_times {
            let c = ((t / cfg.t_end) * cells as f64).ceil() as usize;
            if t > 0.0 && c >= 1 && c <= cells {
                fixed[c - 1] = Some(t);
            }
        }
        let mut est = TripleEstimator {
            space,
            basis,
            cfg,
            grid,
            thresholds: vec![f64::INFINITY; cells],
            fixed,
        };
        if let Some(thr) = est.cfg.jump_threshold {
            est.thresholds = vec![thr; cells];
            return Ok(est);
        }
        if pilot.is_empty() {
            return Err(Error::InsufficientSamples(
                "threshold calibration needs pilot paths".into(),
            ));
        }
        // phi per cell over the pilot; None for increments outside the chart.
        let mut per_cell: Vec<Vec<Option<Vec<f64>>>> = vec![Vec::new(); cells];
        for p in pilot.iter().take(PILOT_PATHS) {
            let idx = cell_indices(p, &est.grid)?;
            for c in 1..idx.len() {
                let inc = est.raw_increment(p, idx[c - 1], idx[c])?;
                per_cell[c - 1].push(est.space.exp_coords_in(&inc, &est.basis).ok());
            }
        }
        let m = est.basis.dim();
        let robust: Vec<f64> = per_cell
            .iter()
            .map(|v| {
                (0..m)
                    .map(|j| {
                        let mut a: Vec<f64> = v
                            .iter()
                            .map(|p| p.as_ref().map_or(f64::INFINITY, |p| p[j].abs()))
                            .collect();
                        a.sort_by(f64::total_cmp);
                        if a.is_empty() {
                            0.0
                        } else {
                            quantile_sorted(&a, 0.5) / 0.674_489_750_196_081_7
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut finite: Vec<f64> = robust.iter().cloned().filter(|s| s.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let sigma_ref = if finite.is_empty() {
            0.0
        } else {
            quantile_sorted(&finite, 0.5)
        };
        for c in 0..cells {
            let v = &per_cell[c];
            let big = v
                .iter()
                .filter(|p| {
                    p.as_ref()
                        .is_none_or(|p| sup_norm(p) > THRESHOLD_SIGMAS * sigma_ref)
                })
                .count();
            if est.fixed[c].is_none()
                && !v.is_empty()
                && sigma_ref > 0.0
                && big as f64 > FIXED_JUMP_FRACTION * v.len() as f64
            {
                est.fixed[c] = Some(est.grid[c + 1]);
            }
            if est.fixed[c].is_some() || !robust[c].is_finite() {
                est.thresholds[c] = THRESHOLD_SIGMAS * sigma_ref;
                continue;
            }
            let thr0 = THRESHOLD_SIGMAS * robust[c];
            let kept: Vec<&Vec<f64>> = v.iter().flatten().filter(|p| sup_norm(p) <= thr0).collect();
            let var = (0..m)
                .map(|j| kept.iter().map(|p| p[j] * p[j]).sum::<f64>() / kept.len().max(1) as f64)
                .fold(0.0, f64::max);
            est.thresholds[c] = THRESHOLD_SIGMAS * var.sqrt();
        }
        Ok(est)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn fixed_cells(&self) -> Vec<usize> {
        (0..self.fixed.len())
            .filter(|&c| self.fixed[c].is_some())
            .collect()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn bins(&self) -> usize {
        self.cfg.bin_edges.len() + 1
    }

    pub fn accumulator(&self) -> TripleAccumulator {
        TripleAccumulator::new(
            self.cfg.n_grid,
            self.basis.dim(),
            self.bins(),
            self.fixed_cells().len(),
        )
    }

    fn raw_increment(&self, p: &CadlagPath, i0: usize, i1: usize) -> Result<CosetPoint> {
        let a = self.space.decode(p.point(i0))?;
        let b = self.space.decode(p.point(i1))?;
        Ok(self.space.increment(&a, &b))
    }

    fn classify(&self, inc: CosetPoint, cell: usize) -> Increment {
        match self.space.exp_coords_in(&inc, &self.basis) {
            Ok(phi) if sup_norm(&phi) <= self.thresholds[cell] => Increment::Small(phi),
            Ok(_) => {
                let d = self.space.distance_from_origin(&inc);
                Increment::Jump {
                    point: inc,
                    distance: Some(d),
                }
            }
            Err(_) => Increment::Jump {
                point: inc,
                distance: None,
            },
        }
    }

    /// Adds one path's grid increments.
    pub fn observe(&self, acc: &mut TripleAccumulator, path: &CadlagPath) -> Result<()> {
        if path.dim() != self.space.point_dim() {
            return Err(Error::InvalidInput(
                "path does not live in the estimator's space".into(),
            ));
        }
        let idx = cell_indices(path, &self.grid)?;
        let m = acc.m;
        let bins = acc.bins;
        let edges = &self.cfg.bin_edges;
        let fixed_slots = self.fixed_cells();
        let mut drift = vec![0.0; m];
        let mut q = vec![0.0; m * m];
        let mut pi = vec![0.0; bins];
        let n_grid = self.cfg.n_grid;
        for k in 0..=n_grid {
            if k >= 1 && k < idx.len() {
                let c = k - 1;
                let inc = self.raw_increment(path, idx[c], idx[k])?;
                if self.fixed[c].is_some() {
                    let slot = fixed_slots
                        .iter()
                        .position(|&s| s == c)
                        .expect("fixed cell");
                    acc.fixed[slot].push(self.space.encode(&inc));
                } else {
                    match self.classify(inc, c) {
                        Increment::Small(phi) => {
                            acc.n_small[c] += 1.0;
                            for i in 0..m {
                                acc.sum_phi[c][i] += phi[i];
                                drift[i] += phi[i];
                                for j in 0..m {
                                    acc.sum_outer[c][i * m + j] += phi[i] * phi[j];
                                    q[i * m + j] += phi[i] * phi[j];
                                }
                            }
                        }
                        Increment::Jump { point, distance } => {
                            let bin = match distance {
                                Some(d) => edges.partition_point(|&e| e <= d),
                                None => edges.len(),
                            };
                            pi[bin] += 1.0;
                            acc.atoms_seen += 1;
                            if acc.atoms.len() < self.cfg.max_atoms {
                                acc.atoms.push(JumpAtom {
                                    cell: c,
                                    increment: self.space.encode(&point),
                                    weight: 1.0,
                                });
                            }
                        }
                    }
                }
            }
            for i in 0..m {
                acc.drift_sum[k][i] += drift[i];
                acc.drift_sq[k][i] += drift[i] * drift[i];
            }
            for e in 0..m * m {
                acc.q_sum[k][e] += q[e];
                acc.q_sq[k][e] += q[e] * q[e];
            }
            for b in 0..bins {
                acc.pi_sum[k][b] += pi[b];
                acc.pi_sq[k][b] += pi[b] * pi[b];
            }
        }
        acc.n_paths += 1;
        Ok(())
    }

    /// Streams `n` generated paths through the estimator in parallel.
    pub fn observe_generated(
        &self,
        n: usize,
        make: impl Fn(usize) -> Result<CadlagPath> + Sync + Send,
    ) -> Result<TripleAccumulator> {
        let cap = self.cfg.max_atoms;
        let (acc, err) = par_fold(
            n,
            || (self.accumulator(), None),
            |(acc, err): &mut (TripleAccumulator, Option<Error>), i| {
                if err.is_some() {
                    return;
                }
                if let Err(e) = make(i).and_then(|p| self.observe(acc, &p)) {
                    *err = Some(e);
                }
            },
            |(a, ea), (b, eb)| {
                a.merge(b, cap);
                if ea.is_none() {
                    *ea = eb;
                }
            },
        );
        match err {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    }

    /// Turns accumulated statistics into a triple.
    pub fn finish(&self, acc: TripleAccumulator) -> Result<LevyTriple> {
        let n = acc.n_paths;
        if n < MIN_PATHS {
            return Err(Error::InsufficientSamples(format!(
                "{n} paths give no useful power; the triple estimator needs at least {MIN_PATHS}"
            )));
        }
        let nf = n as f64;
        let m = acc.m;
        let cells = self.cfg.n_grid;
        let tag = self.space.tag();
        let se_of = |sum: f64, sq: f64| ((sq / nf - (sum / nf).powi(2)).max(0.0) / nf).sqrt();
        let mut drift = Vec::with_capacity(cells + 1);
        let mut covariance = Vec::with_capacity(cells + 1);
        let mut b_group = GroupElement::identity(tag);
        let mut a_cum = vec![0.0; m * m];
        drift.push(self.space.encode(&self.space.origin()));
        covariance.push(a_cum.clone());
        for c in 0..cells {
            let b: Vec<f64> = acc.sum_phi[c].iter().map(|s| s / nf).collect();
            let ns = acc.n_small[c];
            for i in 0..m {
                for j in 0..m {
                    let e = i * m + j;
                    a_cum[e] +=
                        (acc.sum_outer[c][e] - b[i] * acc.sum_phi[c][j] - acc.sum_phi[c][i] * b[j]
                            + ns * b[i] * b[j])
                            / nf;
                }
            }
            b_group = b_group.compose(&self.basis.combine(&b).exp(tag)?);
            drift.push(self.space.encode(&self.space.project(&b_group)));
            covariance.push(a_cum.clone());
        }
        let table = |sum: &[Vec<f64>], sq: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let v = sum
                .iter()
                .map(|r| r.iter().map(|s| s / nf).collect())
                .collect();
            let s = sum
                .iter()
                .zip(sq)
                .map(|(r, q)| r.iter().zip(q).map(|(a, b)| se_of(*a, *b)).collect())
                .collect();
            (v, s)
        };
        let (drift_coords, drift_se) = table(&acc.drift_sum, &acc.drift_sq);
        let (_, covariance_se) = table(&acc.q_sum, &acc.q_sq);
        let (mass, pi_se) = table(&acc.pi_sum, &acc.pi_sq);
        let atom_weight = if acc.atoms.is_empty() {
            0.0
        } else {
            acc.atoms_seen as f64 / (acc.atoms.len() as f64 * nf)
        };
        let jump_atoms = acc
            .atoms
            .into_iter()
            .map(|a| JumpAtom {
                weight: atom_weight,
                ..a
            })
            .collect();
        let fixed_jumps = self
            .fixed_cells()
            .into_iter()
            .zip(acc.fixed)
            .map(|(c, increments)| FixedJump {
                time: self.fixed[c].expect("fixed cell"),
                cell: c,
                increments,
            })
            .collect();
        Ok(LevyTriple {
            space: self.space,
            basis: self.basis.elements().to_vec(),
            grid: self.grid.clone(),
            drift,
            drift_coords,
            drift_se,
            covariance,
            covariance_se,
            levy_hist: LevyHistogram {
                edges: self.cfg.bin_edges.clone(),
                mass,
                se: pi_se,
            },
            jump_atoms,
            fixed_jumps,
            n_paths: n,
            thresholds: self.thresholds.clone(),
        })
    }
}

/// Estimates the triple of stored angular paths in `space`.
pub fn estimate_from_paths(
    paths: &[CadlagPath],
    space: CosetSpace,
    cfg: EstimatorConfig,
) -> Result<LevyTriple> {
    if paths.len() < MIN_PATHS {
        return Err(Error::InsufficientSamples(format!(
            "{} paths give no useful power; the triple estimator needs at least {MIN_PATHS}",
            paths.len()
        )));
    }
    let est = TripleEstimator::calibrate(space, cfg, paths)?;
    let acc = est.observe_generated(paths.len(), |i| Ok(paths[i].clone()))?;
    est.finish(acc)
}

/// Estimates the triple of the angular parts of a decomposed ensemble.
pub fn estimate_triple(ensemble: &[DecomposedPath], cfg: EstimatorConfig) -> Result<LevyTriple> {
    let Some(first) = ensemble.first() else {
        return Err(Error::InsufficientSamples("empty ensemble".into()));
    };
    if ensemble.iter().any(|d| d.space != first.space) {
        return Err(Error::InvalidInput("ensemble mixes coset spaces".into()));
    }
    let paths: Vec<CadlagPath> = ensemble.iter().map(|d| d.angular.clone()).collect();
    estimate_from_paths(&paths, first.space, cfg)
}

// ---------------------------------------------------------------------------
// jump counting

/// `sum over jumps of f(S(z_{t-})^{-1} z_t)` along one path, up to its lifetime.
pub fn path_jump_sum(
    p: &CadlagPath,
    space: &CosetSpace,
    f: &dyn Fn(&CosetPoint) -> f64,
) -> Result<f64> {
    let end = p.lifetime.map_or(p.len(), |l| l + 1);
    let mut s = 0.0;
    for &i in p.jump_indices().iter().filter(|&&i| i < end) {
        let left = space.decode(p.left_limit(i))?;
        let post = space.decode(p.point(i))?;
        s += f(&space.increment(&left, &post));
    }
    Ok(s)
}

/// `E[sum over jumps of f(S(z_{t-})^{-1} z_t)]` from the jump marks of the paths.
pub fn count_jump_functional(
    paths: &[CadlagPath],
    space: &CosetSpace,
    f: &dyn Fn(&CosetPoint) -> f64,
) -> Result<Estimate> {
    let sums = paths
        .iter()
        .map(|p| path_jump_sum(p, space, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&sums))
}

// ---------------------------------------------------------------------------
// convolution

/// Local section used for products `S(x) y`.
#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Canonical,
    /// `S'(x) = S(x) m` for a fixed isotropy element `m`.
    Rotated(GroupElement),
}

impl Section {
    pub fn apply(&self, space: &CosetSpace, x: &CosetPoint) -> GroupElement {
        match self {
            Section::Canonical => space.section(x),
            Section::Rotated(m) => space.section(x).compose(m),
        }
    }
}

/// `{S(x_i) m_i y_{pi(i)}}` over a random pairing `pi`, with Haar `m_i` in `M`.
pub fn empirical_convolution<R: Rng + ?Sized>(
    mu: &[CosetPoint],
    nu: &[CosetPoint],
    space: &CosetSpace,
    section: &Section,
    rng: &mut R,
) -> Result<Vec<CosetPoint>> {
    if nu.is_empty() {
        return Err(Error::InsufficientSamples(
            "convolution needs samples of both factors".into(),
        ));
    }
    if let Section::Rotated(m) = section {
        if !space.same_coset(&space.act(m, &space.origin()), &space.origin(), 1e-9) {
            return Err(Error::InvalidInput(
                "rotated section needs an element of M".into(),
            ));
        }
    }
    let mut order: Vec<usize> = (0..nu.len()).collect();
    order.shuffle(rng);
    Ok(mu
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let m = space.random_isotropy(rng);
            let y = space.act(&m, &nu[order[i % nu.len()]]);
            space.act(&section.apply(space, x), &y)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// martingale check

/// Test function on `K/M` seen as a right-`M`-invariant function of `g`.
pub trait CosetTestFunction: Sync {
    fn value(&self, g: &GroupElement) -> f64;

    /// `X f (g) = d/ds f(g exp(sX))`.
    fn first_order(&self, g: &GroupElement, x: &Mat) -> f64 {
        let tag = g.tag();
        let p = g.compose(
            &crate::group::AlgebraElement::new(x.scale(FD_STEP))
                .exp(tag)
                .expect("finite"),
        );
        let q = g.compose(
            &crate::group::AlgebraElement::new(x.scale(-FD_STEP))
                .exp(tag)
                .expect("finite"),
        );
        (self.value(&p) - self.value(&q)) / (2.0 * FD_STEP)
    }

    /// `sum_ij c_ij (X_i X_j f)(g)` for row-major `c`, symmetrized.
    fn hessian_form(&self, g: &GroupElement, dirs: &[Mat], c: &[f64]) -> f64 {
        let tag = g.tag();
        let m = dirs.len();
        let h = FD_STEP;
        let at = |x: Mat| {
            self.value(
                &g.compose(
                    &crate::group::AlgebraElement::new(x)
                        .exp(tag)
                        .expect("finite"),
                ),
            )
        };
        let f0 = self.value(g);
        let mut acc = 0.0;
        for i in 0..m {
            let cii = c[i * m + i];
            if cii != 0.0 {
                acc += cii * (at(dirs[i].scale(h)) - 2.0 * f0 + at(dirs[i].scale(-h))) / (h * h);
            }
            for j in i + 1..m {
                let cij = c[i * m + j] + c[j * m + i];
                if cij != 0.0 {
                    let (a, b) = (dirs[i], dirs[j]);
                    let mixed =
                        (at((a + b).scale(h)) - at((a - b).scale(h)) - at((b - a).scale(h))
                            + at((a + b).scale(-h)))
                            / (4.0 * h * h);
                    acc += cij * mixed;
                }
            }
        }
        acc
    }
}

/// Smooth bump `psi(s)` around a center, with `s` the cosine of the
/// distance: for frames `s = (tr(C^T g) - n + 2) / 2`, for spheres
/// `s = (g e_0) . c`. `psi(s) = exp(1 - 1/(1 - u^2))` with `u = (1 - s)/w`
/// for `u < 1`, zero beyond.
#[derive(Debug, Clone, PartialEq)]
pub enum CosineBump {
    Frame { center: Mat, width: f64 },
    Sphere { center: Vec<f64>, width: f64 },
}

impl CosineBump {
    fn width(&self) -> f64 {
        match self {
            CosineBump::Frame { width, .. } | CosineBump::Sphere { width, .. } => *width,
        }
    }

    /// `psi`, `psi'`, `psi''` at `s`.
    fn profile(&self, s: f64) -> (f64, f64, f64) {
        let w = self.width();
        let u = (1.0 - s) / w;
        if !(u.abs() < 1.0) {
            return (0.0, 0.0, 0.0);
        }
        let d = 1.0 - u * u;
        let psi = (1.0 - 1.0 / d).exp();
        let g1 = -2.0 * u / (d * d);
        let g2 = -2.0 / (d * d) - 8.0 * u * u / (d * d * d);
        let du = -1.0 / w;
        (psi, psi * g1 * du, psi * (g1 * g1 + g2) * du * du)
    }

    /// `s(g M)` with `M` an optional right factor applied as `g M`.
    fn s_of(&self, gm: &Mat) -> f64 {
        match self {
            CosineBump::Frame { center, .. } => {
                let n = gm.n() as f64;
                let tr: f64 = center
                    .as_slice()
                    .iter()
                    .zip(gm.as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                0.5 * (tr - n + 2.0)
            }
            CosineBump::Sphere { center, .. } => (0..gm.n()).map(|i| gm[(i, 0)] * center[i]).sum(),
        }
    }

    /// Derivative of `s` in the matrix direction `d` (so `s_of` is linear).
    fn s_lin(&self, d: &Mat) -> f64 {
        match self {
            CosineBump::Frame { center, .. } => {
                0.5 * center
                    .as_slice()
                    .iter()
                    .zip(d.as_slice())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            }
            CosineBump::Sphere { center, .. } => (0..d.n()).map(|i| d[(i, 0)] * center[i]).sum(),
        }
    }
}

impl CosetTestFunction for CosineBump {
    fn value(&self, g: &GroupElement) -> f64 {
        self.profile(self.s_of(g.mat())).0
    }

    fn first_order(&self, g: &GroupElement, x: &Mat) -> f64 {
        let (_, p1, _) = self.profile(self.s_of(g.mat()));
        if p1 == 0.0 {
            return 0.0;
        }
        p1 * self.s_lin(&(*g.mat() * *x))
    }

    fn hessian_form(&self, g: &GroupElement, dirs: &[Mat], c: &[f64]) -> f64 {
        let (_, p1, p2) = self.profile(self.s_of(g.mat()));
        if p1 == 0.0 && p2 == 0.0 {
            return 0.0;
        }
        let m = dirs.len();
        let gx: Vec<Mat> = dirs.iter().map(|x| *g.mat() * *x).collect();
        let ds: Vec<f64> = gx.iter().map(|d| self.s_lin(d)).collect();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let cij = c[i * m + j];
                if cij == 0.0 {
                    continue;
                }
                let sym = (gx[i] * dirs[j] + gx[j] * dirs[i]).scale(0.5);
                acc += cij * (p2 * ds[i] * ds[j] + p1 * self.s_lin(&sym));
            }
        }
        acc
    }
}

impl<F: Fn(&GroupElement) -> f64 + Sync> CosetTestFunction for F {
    fn value(&self, g: &GroupElement) -> f64 {
        self(g)
    }
}

/// Mean compensated process `M_t - M_0` at the triple's grid times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n_paths: usize,
}

impl ResidualCurve {
    /// Largest `|mean| / se` over the given grid indices (all when empty).
    pub fn max_abs_z(&self, at: &[usize]) -> f64 {
        let all: Vec<usize> = (1..self.times.len()).collect();
        let idx = if at.is_empty() { &all[..] } else { at };
        idx.iter()
            .map(|&k| {
                if self.se[k] > 0.0 {
                    self.mean[k].abs() / self.se[k]
                } else if self.mean[k] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

fn coset_element(space: &CosetSpace, s: &[f64]) -> Result<GroupElement> {
    let z = space.decode(s)?;
    Ok(match z {
        CosetPoint::Frame(q) => GroupElement::from_mat_unchecked(space.tag(), q),
        CosetPoint::Direction(_) => space.section(&z),
    })
}

/// Cumulative compensated process of one path on the triple's grid:
/// Ito sums of `f(z_t)` minus the `Pi` and `A` integrals, with
/// `z = x b^{-1}` and the `Ad(b)`-rotated basis.
pub fn path_residual(
    path: &CadlagPath,
    triple: &LevyTriple,
    f: &dyn CosetTestFunction,
) -> Result<Vec<f64>> {
    let space = &triple.space;
    if path.dim() != space.point_dim() {
        return Err(Error::InvalidInput(
            "path does not live in the triple's space".into(),
        ));
    }
    let idx = cell_indices(path, &triple.grid)?;
    if idx.len() != triple.grid.len() {
        return Err(Error::GridMismatch(
            "path ends before the triple's grid".into(),
        ));
    }
    let m = triple.dim();
    let mut by_cell: Vec<Vec<(f64, GroupElement, Option<Vec<f64>>)>> =
        vec![Vec::new(); triple.n_cells()];
    let basis = triple.algebra_basis()?;
    for a in &triple.jump_atoms {
        let tau = space.decode(&a.increment)?;
        let phi = space.exp_coords_in(&tau, &basis).ok();
        let t = match tau {
            CosetPoint::Frame(q) => GroupElement::from_mat_unchecked(space.tag(), q),
            CosetPoint::Direction(_) => space.section(&tau),
        };
        if a.cell < by_cell.len() {
            by_cell[a.cell].push((a.weight, t, phi));
        }
    }
    let mut out = Vec::with_capacity(idx.len());
    out.push(0.0);
    let mut acc = 0.0;
    let z_at = |k: usize| -> Result<GroupElement> {
        let x = coset_element(space, path.point(idx[k]))?;
        Ok(x.compose(&triple.drift_element(k)?.inverse()))
    };
    let mut z_prev = z_at(0)?;
    let mut f_prev = f.value(&z_prev);
    for k in 1..idx.len() {
        let c = k - 1;
        let b = triple.drift_element(c)?;
        let dirs: Vec<Mat> = triple
            .basis
            .iter()
            .map(|x| *b.mat() * *x * b.mat().transpose())
            .collect();
        let da: Vec<f64> = (0..m * m)
            .map(|e| 0.5 * (triple.covariance[k][e] - triple.covariance[c][e]))
            .collect();
        let mut comp = f.hessian_form(&z_prev, &dirs, &da);
        for (w, tau, phi) in &by_cell[c] {
            let moved = z_prev.compose(&b.compose(tau).compose(&b.inverse()));
            let mut lin = 0.0;
            if let Some(phi) = phi {
                for (i, d) in dirs.iter().enumerate() {
                    lin += phi[i] * f.first_order(&z_prev, d);
                }
            }
            comp += w * (f.value(&moved) - f_prev - lin);
        }
        let z = z_at(k)?;
        let fz = f.value(&z);
        acc += fz - f_prev - comp;
        out.push(acc);
        z_prev = z;
        f_prev = fz;
    }
    Ok(out)
}

/// Streams `n` generated paths into one residual curve per
/// `(triple, test function)` pair; all pairs share each simulated path.
pub fn martingale_residuals_generated(
    n: usize,
    pairs: &[(&LevyTriple, &dyn CosetTestFunction)],
    make: impl Fn(usize) -> Result<CadlagPath> + Sync + Send,
) -> Result<Vec<ResidualCurve>> {
    let Some((first, _)) = pairs.first() else {
        return Ok(Vec::new());
    };
    if pairs.iter().any(|(t, _)| t.grid != first.grid) {
        return Err(Error::GridMismatch(
            "residual pairs must share one grid".into(),
        ));
    }
    let len = first.grid.len();
    let np = pairs.len();
    type Acc = (Vec<Vec<f64>>, Vec<Vec<f64>>, usize, Option<Error>);
    let init = || -> Acc { (vec![vec![0.0; len]; np], vec![vec![0.0; len]; np], 0, None) };
    let (sum, sq, count, err) = par_fold(
        n,
        init,
        |acc: &mut Acc, i| {
            if acc.3.is_some() {
                return;
            }
            let mut run = || -> Result<()> {
                let p = make(i)?;
                for (j, (t, f)) in pairs.iter().enumerate() {
                    let r = path_residual(&p, t, *f)?;
                    for k in 0..len {
                        acc.0[j][k] += r[k];
                        acc.1[j][k] += r[k] * r[k];
                    }
                }
                Ok(())
            };
            match run() {
                Ok(()) => acc.2 += 1,
                Err(e) => acc.3 = Some(e),
            }
        },
        |a, b| {
            for j in 0..np {
                for k in 0..len {
                    a.0[j][k] += b.0[j][k];
                    a.1[j][k] += b.1[j][k];
                }
            }
            a.2 += b.2;
            if a.3.is_none() {
                a.3 = b.3;
            }
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    let nf = count as f64;
    Ok((0..np)
        .map(|j| {
            let mean: Vec<f64> = sum[j].iter().map(|s| s / nf).collect();
            let se = sum[j]
                .iter()
                .zip(&sq[j])
                .map(|(s, q)| ((q / nf - (s / nf).powi(2)).max(0.0) / nf).sqrt())
                .collect();
            ResidualCurve {
                times: first.grid.clone(),
                mean,
                se,
                n_paths: count,
            }
        })
        .collect())
}

/// Residual curve of `f` over stored angular paths.
pub fn martingale_residual(
    paths: &[CadlagPath],
    triple: &LevyTriple,
    f: &dyn CosetTestFunction,
) -> Result<ResidualCurve> {
    let mut v =
        martingale_residuals_generated(paths.len(), &[(triple, f)], |i| Ok(paths[i].clone()))?;
    Ok(v.remove(0))
}

// ---------------------------------------------------------------------------
// lift to the group and simulation from a triple

fn conjugation_average(ms: &[GroupElement], g: &GroupElement) -> GroupElement {
    let n = g.mat().n();
    let mut sum = Mat::zeros(n);
    for h in ms {
        sum += *h.mat() * *g.mat() * h.mat().transpose();
    }
    let avg = sum.scale(1.0 / ms.len() as f64);
    match avg.orthonormalize_columns() {
        Some(q) if q.det() > 0.0 => GroupElement::from_mat_unchecked(g.tag(), q),
        _ => GroupElement::identity(g.tag()),
    }
}

/// Isotropy elements for `H`-averages: all of `M` when finite, Haar nodes otherwise.
fn averaging_nodes<R: Rng + ?Sized>(space: &CosetSpace, rng: &mut R) -> Vec<GroupElement> {
    match space.isotropy_elements() {
        Some(all) => all,
        None => (0..HAAR_NODES)
            .map(|_| space.random_isotropy(rng))
            .collect(),
    }
}

/// Triple on `K` for the `M`-conjugation-invariant lift of a triple on `K/M`:
/// `A` padded with zeros on `m`, drift and jumps averaged over `H = M`.
pub fn lift_to_group<R: Rng + ?Sized>(triple: &LevyTriple, rng: &mut R) -> Result<LevyTriple> {
    triple.validate()?;
    let space = triple.space;
    let n = space.group_order();
    let target = CosetSpace::frame(n, FiniteIsotropy::Trivial)?;
    let nodes = averaging_nodes(&space, rng);
    let p = triple.algebra_basis()?;
    let ext = p.concat(&space.m_basis())?;
    let (mp, me) = (p.dim(), ext.dim());
    let pad = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; me * me];
        for i in 0..mp {
            for j in 0..mp {
                out[i * me + j] = v[i * mp + j];
            }
        }
        out
    };
    let mut drift = Vec::with_capacity(triple.grid.len());
    let mut drift_coords = Vec::with_capacity(triple.grid.len());
    for k in 0..triple.grid.len() {
        let b = conjugation_average(&nodes, &triple.drift_element(k)?);
        drift_coords.push(
            b.log()
                .map(|x| ext.coords(&x))
                .unwrap_or_else(|_| vec![0.0; me]),
        );
        drift.push(b.mat().to_vec());
    }
    let mut jump_atoms = Vec::new();
    if !triple.jump_atoms.is_empty() {
        let per_atom = (nodes.len() / triple.jump_atoms.len()).max(1);
        let mut next = 0usize;
        for a in &triple.jump_atoms {
            let tau = space.section(&space.decode(&a.increment)?);
            for _ in 0..per_atom {
                let h = &nodes[next % nodes.len()];
                next += 1;
                let c = h.compose(&tau).compose(&h.inverse());
                jump_atoms.push(JumpAtom {
                    cell: a.cell,
                    increment: c.mat().to_vec(),
                    weight: a.weight / per_atom as f64,
                });
            }
        }
    }
    let grid_len = triple.grid.len();
    let mut hist = LevyHistogram::zeros(&triple.levy_hist.edges, grid_len);
    for a in &jump_atoms {
        let q = target.decode(&a.increment)?;
        let bin = hist.bin_of(Some(target.distance_from_origin(&q)));
        for k in a.cell + 1..grid_len {
            hist.mass[k][bin] += a.weight;
        }
    }
    for k in 0..grid_len {
        for b in 0..hist.bins() {
            hist.se[k][b] = triple.levy_hist.total(k).se / (hist.bins() as f64).sqrt();
        }
    }
    Ok(LevyTriple {
        space: target,
        basis: ext.elements().to_vec(),
        grid: triple.grid.clone(),
        drift,
        drift_coords,
        drift_se: triple
            .drift_se
            .iter()
            .map(|r| {
                r.iter()
                    .cloned()
                    .chain(std::iter::repeat(0.0).take(me - mp))
                    .collect()
            })
            .collect(),
        covariance: triple.covariance.iter().map(|v| pad(v)).collect(),
        covariance_se: triple.covariance_se.iter().map(|v| pad(v)).collect(),
        levy_hist: hist,
        jump_atoms,
        fixed_jumps: Vec::new(),
        n_paths: triple.n_paths,
        thresholds: triple.thresholds.clone(),
    })
}

/// Sampler for the group process `x = z b` of a group-valued triple.
///
/// `z` is driven by Gaussian increments of covariance `dA` in the
/// `Ad(b)`-rotated basis and by Poisson jumps `z <- z b tau b^{-1}` drawn
/// from the atoms of each cell.
#[derive(Debug, Clone)]
pub struct TripleSimulator {
    tag: GroupTag,
    grid: Vec<f64>,
    basis: AlgebraBasis,
    drift: Vec<GroupElement>,
    roots: Vec<Mat>,
    jumps: Vec<(f64, Vec<(f64, GroupElement)>)>,
}

impl TripleSimulator {
    pub fn new(triple: &LevyTriple) -> Result<Self> {
        let CosetSpace::Frame { n, .. } = triple.space else {
            return Err(Error::Unsupported(
                "simulation from a triple needs a group-valued triple; lift it first".into(),
            ));
        };
        triple.validate()?;
        let tag = GroupTag::SpecialOrthogonal(n);
        let drift = (0..triple.grid.len())
            .map(|k| triple.drift_element(k))
            .collect::<Result<Vec<_>>>()?;
        let mut roots = Vec::with_capacity(triple.n_cells());
        for k in 1..triple.grid.len() {
            let da = triple.covariance_mat(k)? - triple.covariance_mat(k - 1)?;
            roots.push(da.symmetrize().psd_sqrt());
        }
        let mut jumps: Vec<(f64, Vec<(f64, GroupElement)>)> =
            vec![(0.0, Vec::new()); triple.n_cells()];
        for a in &triple.jump_atoms {
            let q = GroupElement::from_mat_unchecked(tag, Mat::from_row_slice(n, &a.increment));
            let slot = &mut jumps[a.cell.min(triple.n_cells() - 1)];
            slot.0 += a.weight;
            slot.1.push((a.weight, q));
        }
        Ok(TripleSimulator {
            tag,
            grid: triple.grid.clone(),
            basis: triple.algebra_basis()?,
            drift,
            roots,
            jumps,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CadlagPath> {
        let tag = self.tag;
        let n = tag.order();
        let m = self.basis.dim();
        let mut z = GroupElement::identity(tag);
        let mut path = CadlagPath::with_capacity(n * n, self.grid.len());
        path.push(0.0, self.drift[0].mat().as_slice());
        for k in 1..self.grid.len() {
            let c = k - 1;
            let b = &self.drift[c];
            let g: Vec<f64> = (0..m)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let x = self.basis.combine(&self.roots[c].matvec(&g)).conjugate(b);
            z = z.compose(&x.exp(tag)?);
            let (rate, atoms) = &self.jumps[c];
            if *rate > 0.0 {
                let count = Poisson::new(*rate)
                    .map(|p| p.sample(rng) as usize)
                    .unwrap_or(0);
                for _ in 0..count {
                    let mut u = rng.random::<f64>() * rate;
                    let mut pick = &atoms[0].1;
                    for (w, tau) in atoms {
                        pick = tau;
                        if u < *w {
                            break;
                        }
                        u -= w;
                    }
                    z = z.compose(&b.compose(pick).compose(&b.inverse()));
                }
            }
            path.push(self.grid[k], z.compose(&self.drift[k]).mat().as_slice());
        }
        Ok(path)
    }
}

/// One path of the group process of `triple`; see [`TripleSimulator`].
pub fn simulate_from_triple<R: Rng + ?Sized>(
    triple: &LevyTriple,
    rng: &mut R,
) -> Result<CadlagPath> {
    TripleSimulator::new(triple)?.sample(rng)
}

/// Haar-random conjugate `h g h^{-1}` in `SO(n)`, used to probe conjugation invariance.
pub fn random_conjugate<R: Rng + ?Sized>(g: &GroupElement, rng: &mut R) -> GroupElement {
    let h = haar_sample(g.mat().n(), rng);
    h.compose(g).compose(&h.inverse())
}
