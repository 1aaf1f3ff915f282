//! Matrix Lie groups, their Lie algebras, and Haar sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Compositions between two re-orthonormalisations of an `SO(n)` element.
pub const REORTHONORMALIZE_EVERY: u32 = 64;

/// Tolerance on `||g^T g - I||_F` for a valid `SO(n)` element.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// `log` is only defined on the principal branch `||g - I||_F < 1`.
pub const LOG_DOMAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupTag {
    /// Rotation group of `R^n`.
    SpecialOrthogonal(usize),
    /// Any invertible matrix group of order `n`.
    General(usize),
}

impl GroupTag {
    pub fn order(&self) -> usize {
        match *self {
            GroupTag::SpecialOrthogonal(n) | GroupTag::General(n) => n,
        }
    }

    pub fn is_orthogonal(&self) -> bool {
        matches!(self, GroupTag::SpecialOrthogonal(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    tag: GroupTag,
    mat: Mat,
    compositions: u32,
}

impl GroupElement {
    pub fn identity(tag: GroupTag) -> Self {
        GroupElement {
            tag,
            mat: Mat::identity(tag.order()),
            compositions: 0,
        }
    }

    /// Wraps a matrix after validating it against the group tag.
    pub fn new(tag: GroupTag, mat: Mat) -> Result<Self> {
        let g = GroupElement {
            tag,
            mat,
            compositions: 0,
        };
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn from_mat_unchecked(tag: GroupTag, mat: Mat) -> Self {
        GroupElement {
            tag,
            mat,
            compositions: 0,
        }
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn validate(&self) -> Result<()> {
        if self.mat.n() != self.tag.order() {
            return Err(Error::InvalidInput(format!(
                "matrix order {} does not match group order {}",
                self.mat.n(),
                self.tag.order()
            )));
        }
        if !self.mat.is_finite() {
            return Err(Error::InvalidInput(
                "group element has non-finite entries".into(),
            ));
        }
        match self.tag {
            GroupTag::SpecialOrthogonal(n) => {
                let dev = (self.mat.transpose() * self.mat).dist_fro(&Mat::identity(n));
                if dev > ORTHOGONALITY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "||g^T g - I||_F = {dev:.3e} exceeds {ORTHOGONALITY_TOL:e}"
                    )));
                }
                let d = self.mat.det();
                if (d - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidInput(format!("det g = {d} is not 1")));
                }
            }
            GroupTag::General(_) => {
                if self.mat.det().abs() < 1e-14 {
                    return Err(Error::InvalidInput("group element is singular".into()));
                }
            }
        }
        Ok(())
    }

    /// Group product `self * other`, re-orthonormalising `SO(n)` elements
    /// once enough roundoff has had a chance to accumulate.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        debug_assert_eq!(self.tag, other.tag);
        let mut out = GroupElement {
            tag: self.tag,
            mat: self.mat * other.mat,
            compositions: self.compositions.max(other.compositions) + 1,
        };
        if out.tag.is_orthogonal() && out.compositions >= REORTHONORMALIZE_EVERY {
            out.reorthonormalize();
        }
        out
    }

    pub fn reorthonormalize(&mut self) {
        if let Some(q) = self.mat.orthonormalize_columns() {
            self.mat = q;
        }
        self.compositions = 0;
    }

    pub fn inverse(&self) -> GroupElement {
        let mat = match self.tag {
            GroupTag::SpecialOrthogonal(_) => self.mat.transpose(),
            GroupTag::General(_) => self.mat.inverse().expect("validated element is invertible"),
        };
        GroupElement {
            tag: self.tag,
            mat,
            compositions: self.compositions,
        }
    }

    /// Matrix logarithm on the principal branch.
    pub fn log(&self) -> Result<AlgebraElement> {
        let n = self.tag.order();
        let dist = self.mat.dist_fro(&Mat::identity(n));
        if !(dist < LOG_DOMAIN) {
            return Err(Error::OutsidePrincipalBranch { norm: dist });
        }
        let mut y = self.mat;
        let mut halvings = 0;
        while y.dist_fro(&Mat::identity(n)) > 0.1 {
            y = sqrt_denman_beavers(&y)?;
            halvings += 1;
        }
        let e = y - Mat::identity(n);
        let mut term = e;
        let mut acc = Mat::zeros(n);
        for m in 1..=40 {
            let c = if m % 2 == 1 { 1.0 } else { -1.0 } / m as f64;
            acc += term.scale(c);
            if term.norm_fro() < 1e-18 {
                break;
            }
            term = term * e;
        }
        let mut x = acc.scale((1u64 << halvings) as f64);
        if self.tag.is_orthogonal() {
            x = x.skew_part();
        }
        Ok(AlgebraElement { mat: x })
    }

    /// Displacement `||g - I||_F`.
    pub fn dist_identity(&self) -> f64 {
        self.mat.dist_fro(&Mat::identity(self.tag.order()))
    }
}

fn sqrt_denman_beavers(a: &Mat) -> Result<Mat> {
    let n = a.n();
    let mut y = *a;
    let mut z = Mat::identity(n);
    for _ in 0..60 {
        let yi = y.inverse().ok_or(Error::Accuracy(
            "singular iterate in matrix square root".into(),
        ))?;
        let zi = z.inverse().ok_or(Error::Accuracy(
            "singular iterate in matrix square root".into(),
        ))?;
        let y_next = (y + zi).scale(0.5);
        let z_next = (z + yi).scale(0.5);
        let delta = y_next.dist_fro(&y);
        y = y_next;
        z = z_next;
        if delta < 1e-15 * y.norm_fro() {
            return Ok(y);
        }
    }
    Ok(y)
}

/// Element of a matrix Lie algebra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraElement {
    mat: Mat,
}

impl AlgebraElement {
    pub fn new(mat: Mat) -> Self {
        AlgebraElement { mat }
    }

    pub fn zero(n: usize) -> Self {
        AlgebraElement { mat: Mat::zeros(n) }
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn scale(&self, s: f64) -> Self {
        AlgebraElement {
            mat: self.mat.scale(s),
        }
    }

    pub fn add(&self, other: &AlgebraElement) -> Self {
        AlgebraElement {
            mat: self.mat + other.mat,
        }
    }

    pub fn bracket(&self, other: &AlgebraElement) -> Self {
        AlgebraElement {
            mat: self.mat.commutator(&other.mat),
        }
    }

    /// Exponential into the group with the given tag.
    pub fn exp(&self, tag: GroupTag) -> Result<GroupElement> {
        if !self.mat.is_finite() {
            return Err(Error::InvalidInput(
                "exp of a non-finite algebra element".into(),
            ));
        }
        let mut m = mat_exp(&self.mat);
        if tag.is_orthogonal() && self.mat.norm_fro() > 1e-300 {
            // Skew input: the exact exponential is orthogonal, so clean roundoff.
            if let Some(q) = m.orthonormalize_columns() {
                m = q;
            }
        }
        Ok(GroupElement::from_mat_unchecked(tag, m))
    }

    /// `Ad(g) X = g X g^{-1}`.
    pub fn conjugate(&self, g: &GroupElement) -> Self {
        AlgebraElement {
            mat: *g.mat() * self.mat * *g.inverse().mat(),
        }
    }
}

/// Scaling-and-squaring exponential with a Taylor core.
pub fn mat_exp(x: &Mat) -> Mat {
    let n = x.n();
    let nrm = x.norm_inf();
    let s = if nrm > 0.25 {
        (nrm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let y = x.scale(1.0 / (1u64 << s) as f64);
    let mut term = Mat::identity(n);
    let mut acc = Mat::identity(n);
    for k in 1..=30 {
        term = (term * y).scale(1.0 / k as f64);
        acc += term;
        if term.norm_inf() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        acc = acc * acc;
    }
    acc
}

/// Basis of a Lie algebra, orthonormal for `<A, B> = tr(A^T B) / 2`.
///
/// On skew matrices this inner product is `-tr(AB) / 2`, the negative
/// Killing form up to scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraBasis {
    n: usize,
    elems: Vec<Mat>,
}

pub fn inner(a: &Mat, b: &Mat) -> f64 {
    0.5 * a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum::<f64>()
}

impl AlgebraBasis {
    pub fn new(n: usize, elems: Vec<Mat>) -> Result<Self> {
        for (i, a) in elems.iter().enumerate() {
            if a.n() != n {
                return Err(Error::InvalidInput("basis element has wrong order".into()));
            }
            for (j, b) in elems.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (inner(a, b) - want).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "basis is not orthonormal at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(AlgebraBasis { n, elems })
    }

    /// `E_ji - E_ij` for `i < j`, lexicographic in `(i, j)`.
    ///
    /// `exp(t (E_ji - E_ij))` rotates `e_i` towards `e_j`.
    pub fn so(n: usize) -> Self {
        let elems = so_pairs(n)
            .into_iter()
            .map(|(i, j)| rotation_generator(n, i, j))
            .collect();
        AlgebraBasis { n, elems }
    }

    /// `L_1, L_2, L_3` with `L_k v = e_k x v`.
    pub fn so3_hat() -> Self {
        let l = |a: [f64; 9]| Mat::from_row_slice(3, &a);
        AlgebraBasis {
            n: 3,
            elems: vec![
                l([0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]),
                l([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]),
                l([0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            ],
        }
    }

    pub fn empty(n: usize) -> Self {
        AlgebraBasis {
            n,
            elems: Vec::new(),
        }
    }

    /// Concatenation of two mutually orthogonal bases.
    pub fn concat(&self, other: &AlgebraBasis) -> Result<Self> {
        let mut elems = self.elems.clone();
        elems.extend(other.elems.iter().copied());
        AlgebraBasis::new(self.n, elems)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.elems.len()
    }

    pub fn elements(&self) -> &[Mat] {
        &self.elems
    }

    pub fn element(&self, i: usize) -> &Mat {
        &self.elems[i]
    }

    /// Coefficients of the orthogonal projection of `x` onto the span.
    pub fn coords(&self, x: &AlgebraElement) -> Vec<f64> {
        self.elems.iter().map(|e| inner(e, x.mat())).collect()
    }

    pub fn combine(&self, c: &[f64]) -> AlgebraElement {
        debug_assert_eq!(c.len(), self.elems.len());
        let mut m = Mat::zeros(self.n);
        for (ci, e) in c.iter().zip(&self.elems) {
            if *ci != 0.0 {
                m += e.scale(*ci);
            }
        }
        AlgebraElement::new(m)
    }

    /// Matrix of `Ad(g)` restricted to and projected on this span,
    /// row-major `dim x dim`: column `j` holds the coefficients of `Ad(g) e_j`.
    pub fn adjoint(&self, g: &GroupElement) -> Vec<Vec<f64>> {
        let d = self.dim();
        let gi = g.inverse();
        let mut out = vec![vec![0.0; d]; d];
        for (j, e) in self.elems.iter().enumerate() {
            let c = *g.mat() * *e * *gi.mat();
            for i in 0..d {
                out[i][j] = inner(&self.elems[i], &c);
            }
        }
        out
    }
}

pub fn so_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            v.push((i, j));
        }
    }
    v
}

/// `E_ji - E_ij`.
pub fn rotation_generator(n: usize, i: usize, j: usize) -> Mat {
    Mat::unit(n, j, i) - Mat::unit(n, i, j)
}

/// Rotation by `angle` in the `(i, j)` coordinate plane taking `e_i` towards `e_j`.
pub fn plane_rotation(n: usize, i: usize, j: usize, angle: f64) -> GroupElement {
    let mut m = Mat::identity(n);
    let (s, c) = angle.sin_cos();
    m[(i, i)] = c;
    m[(j, j)] = c;
    m[(j, i)] = s;
    m[(i, j)] = -s;
    GroupElement::from_mat_unchecked(GroupTag::SpecialOrthogonal(n), m)
}

/// Haar-distributed element of `SO(n)` via Gram-Schmidt of a Gaussian matrix.
pub fn haar_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GroupElement {
    loop {
        let g = Mat::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let Some(mut q) = g.orthonormalize_columns() else {
            continue;
        };
        if q.det() < 0.0 {
            for i in 0..n {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
        return GroupElement::from_mat_unchecked(GroupTag::SpecialOrthogonal(n), q);
    }
}

/// Uniform point on the unit sphere of `R^n`.
pub fn uniform_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = crate::linalg::norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn so3() -> GroupTag {
        GroupTag::SpecialOrthogonal(3)
    }

    #[test]
    fn exp_matches_rodrigues() {
        // exp(theta L_3) is the planar rotation by theta.
        let b = AlgebraBasis::so3_hat();
        let th = 0.83;
        let g = b.combine(&[0.0, 0.0, th]).exp(so3()).unwrap();
        let (s, c) = th.sin_cos();
        let want = Mat::from_row_slice(3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        assert!(g.mat().dist_fro(&want) < 1e-14);
    }

    #[test]
    fn log_inverts_exp_on_branch() {
        let b = AlgebraBasis::so(4);
        let c: Vec<f64> = (0..6)
            .map(|i| 0.07 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let x = b.combine(&c);
        let g = x.exp(GroupTag::SpecialOrthogonal(4)).unwrap();
        let back = g.log().unwrap();
        assert!(back.mat().dist_fro(x.mat()) < 1e-12);
    }

    #[test]
    fn log_refuses_off_branch() {
        let g = plane_rotation(3, 0, 1, 2.0);
        assert!(matches!(g.log(), Err(Error::OutsidePrincipalBranch { .. })));
    }

    #[test]
    fn basis_is_orthonormal_and_roundtrips() {
        for n in 2..=6 {
            let b = AlgebraBasis::so(n);
            assert!(AlgebraBasis::new(n, b.elements().to_vec()).is_ok());
            let c: Vec<f64> = (0..b.dim()).map(|i| (i as f64).sin()).collect();
            let back = b.coords(&b.combine(&c));
            for (u, v) in c.iter().zip(back) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hat_adjoint_is_the_rotation_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = haar_sample(3, &mut rng);
        let ad = AlgebraBasis::so3_hat().adjoint(&g);
        for i in 0..3 {
            for j in 0..3 {
                assert!((ad[i][j] - g.mat()[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn haar_output_is_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=6 {
            assert!(haar_sample(n, &mut rng).validate().is_ok());
        }
    }

    #[test]
    fn composition_chain_stays_in_group() {
        let b = AlgebraBasis::so(5);
        let step = b
            .combine(&[0.3, -0.2, 0.1, 0.05, 0.4, -0.1, 0.2, 0.0, 0.3, -0.25])
            .exp(GroupTag::SpecialOrthogonal(5))
            .unwrap();
        let mut g = GroupElement::identity(GroupTag::SpecialOrthogonal(5));
        for _ in 0..10_000 {
            g = g.compose(&step);
        }
        assert!(g.validate().is_ok());
    }
}
