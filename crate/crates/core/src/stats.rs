//! Hypothesis tests used to validate simulated laws.
//!
//! Special functions are implemented here so p-values carry no external
//! numeric dependency: Lanczos `ln Gamma`, regularised incomplete gamma
//! (series / Lentz continued fraction), and the Kolmogorov distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default significance level for `passed`.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Smallest expected count per cell before chi-square bins are merged.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    pub n: Vec<usize>,
    pub alpha: f64,
    pub passed: bool,
    pub degenerate: bool,
    pub notes: Vec<String>,
}

impl TestVerdict {
    fn new(test: &str, statistic: f64, p_value: f64, df: Option<f64>, n: Vec<usize>) -> Self {
        TestVerdict {
            test: test.to_string(),
            statistic,
            p_value,
            df,
            n,
            alpha: DEFAULT_ALPHA,
            passed: p_value > DEFAULT_ALPHA,
            degenerate: false,
            notes: Vec::new(),
        }
    }

    /// Re-evaluates `passed` at another level.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.passed = !self.degenerate && self.p_value > alpha;
        self
    }

    pub fn rejects_at(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

// ---------------------------------------------------------------------------
// special functions

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularised lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularised upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

pub fn erf(x: f64) -> f64 {
    let v = gamma_p(0.5, x * x);
    if x < 0.0 {
        -v
    } else {
        v
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - gamma_q(0.5, x * x)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Survival function of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(0.5 * df, 0.5 * x)
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.3 {
        // Jacobi-theta form converges fast near zero.
        let pi2 = std::f64::consts::PI.powi(2);
        let mut s = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            s += (-m * m * pi2 / (8.0 * lambda * lambda)).exp();
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let t = 2.0 * (-2.0 * k * k * lambda * lambda).exp();
        s += if k as u64 % 2 == 1 { t } else { -t };
        if t < 1e-18 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// tests

fn finite_sorted(v: &[f64], name: &str) -> Result<Vec<f64>> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite value {x} in {name}"
        )));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Two-sample Kolmogorov-Smirnov test (asymptotic p-value with the
/// Stephens small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestVerdict> {
    if a.len() < 50 || b.len() < 50 {
        return Err(Error::InsufficientSamples(format!(
            "two-sample KS needs >= 50 per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let a = finite_sorted(a, "first sample")?;
    let b = finite_sorted(b, "second sample")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut v = TestVerdict::new(
        "ks_two_sample",
        d,
        kolmogorov_sf(lambda),
        None,
        vec![a.len(), b.len()],
    );
    if a.first() == a.last() && b.first() == b.last() {
        v.degenerate = true;
        v.notes.push("both samples are constant".into());
        v.passed = false;
    }
    Ok(v)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_vs_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestVerdict> {
    if samples.len() < 50 {
        return Err(Error::InsufficientSamples(format!(
            "one-sample KS needs >= 50 samples, got {}",
            samples.len()
        )));
    }
    let s = finite_sorted(samples, "sample")?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    Ok(TestVerdict::new(
        "ks_vs_cdf",
        d,
        kolmogorov_sf(lambda),
        None,
        vec![s.len()],
    ))
}

/// Merges adjacent rows (then columns) with the smallest margin until every
/// expected count reaches `MIN_EXPECTED`.
fn merge_sparse(mut t: Vec<Vec<f64>>, notes: &mut Vec<String>) -> Vec<Vec<f64>> {
    t.retain(|r| r.iter().sum::<f64>() > 0.0);
    if t.is_empty() {
        return t;
    }
    let ncol = t[0].len();
    let keep: Vec<usize> = (0..ncol)
        .filter(|&c| t.iter().map(|r| r[c]).sum::<f64>() > 0.0)
        .collect();
    t = t
        .into_iter()
        .map(|r| keep.iter().map(|&c| r[c]).collect())
        .collect();
    loop {
        let rows = t.len();
        let cols = t.first().map_or(0, |r| r.len());
        if rows < 2 || cols < 2 {
            return t;
        }
        let rs: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
        let cs: Vec<f64> = (0..cols).map(|c| t.iter().map(|r| r[c]).sum()).collect();
        let total: f64 = rs.iter().sum();
        let min_exp = rs.iter().cloned().fold(f64::INFINITY, f64::min)
            * cs.iter().cloned().fold(f64::INFINITY, f64::min)
            / total;
        if min_exp >= MIN_EXPECTED {
            return t;
        }
        let (rmin, rv) = rs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let (cmin, cv) = cs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        if rv <= cv {
            let other = if rmin + 1 < rows { rmin + 1 } else { rmin - 1 };
            let row = t.remove(rmin);
            let other = if other > rmin { other - 1 } else { other };
            for (x, y) in t[other].iter_mut().zip(row) {
                *x += y;
            }
            notes.push(format!("merged sparse row {rmin}"));
        } else {
            let other = if cmin + 1 < cols { cmin + 1 } else { cmin - 1 };
            for r in t.iter_mut() {
                let v = r.remove(cmin);
                let o = if other > cmin { other - 1 } else { other };
                r[o] += v;
            }
            notes.push(format!("merged sparse column {cmin}"));
        }
    }
}

fn pearson(t: &[Vec<f64>]) -> (f64, f64) {
    let rows = t.len();
    let cols = t[0].len();
    let rs: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let cs: Vec<f64> = (0..cols).map(|c| t.iter().map(|r| r[c]).sum()).collect();
    let total: f64 = rs.iter().sum();
    let mut x2 = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let e = rs[i] * cs[j] / total;
            x2 += (t[i][j] - e).powi(2) / e;
        }
    }
    (x2, ((rows - 1) * (cols - 1)) as f64)
}

/// Pearson chi-square test of independence for a contingency table.
pub fn chi2_independence(table: &[Vec<f64>]) -> Result<TestVerdict> {
    chi2_stratified(&[table.to_vec()]).map(|mut v| {
        v.test = "chi2_independence".into();
        v
    })
}

/// Sum of per-stratum Pearson statistics; degrees of freedom add.
pub fn chi2_stratified(tables: &[Vec<Vec<f64>>]) -> Result<TestVerdict> {
    let mut notes = Vec::new();
    let mut stat = 0.0;
    let mut df = 0.0;
    let mut n = 0usize;
    for t in tables {
        if t.iter().any(|r| r.len() != t[0].len()) {
            return Err(Error::InvalidInput("ragged contingency table".into()));
        }
        if t.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidInput(
                "contingency counts must be finite and non-negative".into(),
            ));
        }
        n += t.iter().flatten().sum::<f64>() as usize;
        let merged = merge_sparse(t.clone(), &mut notes);
        if merged.len() < 2 || merged[0].len() < 2 {
            notes.push("stratum collapsed to a single row or column".into());
            continue;
        }
        let (s, d) = pearson(&merged);
        stat += s;
        df += d;
    }
    if df == 0.0 {
        let mut v = TestVerdict::new("chi2_stratified", 0.0, 1.0, Some(0.0), vec![n]);
        v.degenerate = true;
        v.passed = false;
        v.notes = notes;
        v.notes
            .push("no degrees of freedom left after merging".into());
        return Ok(v);
    }
    let mut v = TestVerdict::new(
        "chi2_stratified",
        stat,
        chi2_sf(stat, df),
        Some(df),
        vec![n],
    );
    v.notes = notes;
    Ok(v)
}

/// Chi-square goodness of fit of counts against cell probabilities.
pub fn chi2_goodness_of_fit(counts: &[f64], probs: &[f64]) -> Result<TestVerdict> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(Error::InvalidInput(
            "counts and probabilities must align".into(),
        ));
    }
    let total: f64 = counts.iter().sum();
    let psum: f64 = probs.iter().sum();
    let mut stat = 0.0;
    for (c, p) in counts.iter().zip(probs) {
        let e = total * p / psum;
        if e < MIN_EXPECTED {
            return Err(Error::InsufficientSamples(format!(
                "expected count {e:.2} below {MIN_EXPECTED}"
            )));
        }
        stat += (c - e).powi(2) / e;
    }
    let df = (counts.len() - 1) as f64;
    Ok(TestVerdict::new(
        "chi2_goodness_of_fit",
        stat,
        chi2_sf(stat, df),
        Some(df),
        vec![total as usize],
    ))
}

/// Two-sided z-test of a sample mean against `target`.
///
/// With `variance = None` the sample variance is used.
pub fn moment_z(samples: &[f64], target: f64, variance: Option<f64>) -> Result<TestVerdict> {
    if samples.len() < 100 {
        return Err(Error::InsufficientSamples(format!(
            "moment z-test needs >= 100 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = variance
        .unwrap_or_else(|| samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0));
    let mut v = z_test(mean, (var / n).sqrt(), target);
    v.test = "moment_z".into();
    v.n = vec![samples.len()];
    Ok(v)
}

/// Two-sided z-test of an estimate with standard error `se`.
pub fn z_test(estimate: f64, se: f64, target: f64) -> TestVerdict {
    if !(se > 0.0) {
        let mut v = TestVerdict::new(
            "z_test",
            0.0,
            if estimate == target { 1.0 } else { 0.0 },
            None,
            vec![],
        );
        v.degenerate = true;
        v.passed = false;
        v.notes.push("zero standard error".into());
        return v;
    }
    let z = (estimate - target) / se;
    TestVerdict::new(
        "z_test",
        z,
        erfc(z.abs() / std::f64::consts::SQRT_2),
        None,
        vec![],
    )
}

// ---------------------------------------------------------------------------
// descriptive helpers

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let (value, se) = mean_se(v);
        Estimate { value, se }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    /// `(self - other) / sqrt(se_1^2 + se_2^2)` for independent estimates.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let se = (self.se * self.se + other.se * other.se).sqrt();
        if se == 0.0 {
            if self.value == other.value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - other.value) / se
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    (mean(v), (variance(v) / v.len() as f64).sqrt())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Interior cut points splitting `v` into `k` equal-count groups.
pub fn quantile_cuts(v: &[f64], k: usize) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    (1..k)
        .map(|i| quantile_sorted(&s, i as f64 / k as f64))
        .collect()
}

pub fn bin_of(x: f64, cuts: &[f64]) -> usize {
    cuts.iter().take_while(|c| x > **c).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn erf_known_values() {
        // Abramowitz & Stegun table values.
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-14);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-14);
        assert!((erfc(3.0) - 2.209_049_699_858_544e-5).abs() < 1e-18);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-13);
    }

    #[test]
    fn chi2_sf_matches_closed_forms() {
        // df = 2: exp(-x/2).
        assert!((chi2_sf(3.0, 2.0) - (-1.5f64).exp()).abs() < 1e-14);
        // df = 1: erfc(sqrt(x/2)).
        assert!((chi2_sf(2.5, 1.0) - erfc((1.25f64).sqrt())).abs() < 1e-14);
        // Tabulated 99th percentile for df = 9 is 21.666.
        assert!((chi2_sf(21.665_994, 9.0) - 0.01).abs() < 1e-6);
    }

    #[test]
    fn kolmogorov_branches_agree_and_match_table() {
        assert!((kolmogorov_sf(0.3 - 1e-12) - kolmogorov_sf(0.3 + 1e-12)).abs() < 1e-9);
        // Classical critical value 1.3581 at the 5% level.
        assert!((kolmogorov_sf(1.358_099_9) - 0.05).abs() < 1e-5);
    }

    #[test]
    fn ks_detects_shift_and_accepts_identity() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value < 1e-10);
        assert!(ks_two_sample(&a, &a).unwrap().p_value > 0.99);
        assert!(ks_vs_cdf(&a, |x| x.clamp(0.0, 1.0)).unwrap().p_value > 0.99);
    }

    #[test]
    fn small_samples_are_refused() {
        let a = vec![0.0; 10];
        assert!(matches!(
            ks_two_sample(&a, &a),
            Err(Error::InsufficientSamples(_))
        ));
        assert!(matches!(
            moment_z(&a, 0.0, None),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn chi2_independent_table_passes() {
        let t = vec![vec![100.0, 200.0], vec![50.0, 100.0]];
        let v = chi2_independence(&t).unwrap();
        assert!(v.statistic.abs() < 1e-12);
        assert_eq!(v.df, Some(1.0));
    }

    #[test]
    fn chi2_merges_sparse_cells() {
        let t = vec![vec![100.0, 90.0, 1.0], vec![95.0, 105.0, 2.0]];
        let v = chi2_independence(&t).unwrap();
        assert_eq!(v.df, Some(1.0));
        assert!(!v.notes.is_empty());
    }
}
