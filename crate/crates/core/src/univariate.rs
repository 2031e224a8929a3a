//! Univariate robust location/scale estimators and outlier-scoring rules.
//!
//! The classical mean/standard deviation pair breaks down under a single wild
//! observation; the estimators here (median, MAD, Qn, normalized IQR,
//! M-location) fit the majority of a batch and keep their value when up to
//! half of it is replaced. Robust scores divide by these scales and flag
//! points past a cutoff (2.5 by default).

use crate::error::{Error, Result};

/// Gaussian consistency factor for the MAD.
pub const MAD_CONSISTENCY: f64 = 1.4826;
/// Gaussian consistency factor for the Qn estimator.
pub const QN_CONSISTENCY: f64 = 2.2219;
/// Gaussian consistency factor for the interquartile range.
pub const IQR_CONSISTENCY: f64 = 0.7413;
/// Default cutoff on (robust) scores before a point is flagged.
pub const DEFAULT_CUTOFF: f64 = 2.5;

/// One univariate batch of finite measurements.
#[derive(Debug, Clone)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    /// Validates that the batch is non-empty and free of NaN/infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_unstable_by(f64::total_cmp);
        v
    }
}

/// Bounded psi functions for M-estimation of location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiFamily {
    Huber,
    Bisquare,
}

/// A psi function together with its tuning constant `c`.
#[derive(Debug, Clone, Copy)]
pub struct PsiSpec {
    pub family: PsiFamily,
    pub c: f64,
}

impl PsiSpec {
    pub fn new(family: PsiFamily, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "psi tuning constant must be positive, got {c}"
            )));
        }
        Ok(Self { family, c })
    }

    /// Huber psi with the conventional 95%-efficiency constant c = 1.345.
    pub fn huber() -> Self {
        Self { family: PsiFamily::Huber, c: 1.345 }
    }

    /// Tukey bisquare psi with the conventional 95%-efficiency constant c = 4.685.
    pub fn bisquare() -> Self {
        Self { family: PsiFamily::Bisquare, c: 4.685 }
    }

    pub fn psi(&self, u: f64) -> f64 {
        match self.family {
            PsiFamily::Huber => u * (self.c / u.abs()).min(1.0),
            PsiFamily::Bisquare => {
                if u.abs() <= self.c {
                    let t = 1.0 - (u / self.c) * (u / self.c);
                    u * t * t
                } else {
                    0.0
                }
            }
        }
    }

    /// Reweighting function w(u) = psi(u)/u, continued with w(0) = psi'(0).
    pub fn weight(&self, u: f64) -> f64 {
        match self.family {
            PsiFamily::Huber => {
                if u == 0.0 {
                    1.0
                } else {
                    (self.c / u.abs()).min(1.0)
                }
            }
            PsiFamily::Bisquare => {
                if u.abs() <= self.c {
                    let t = 1.0 - (u / self.c) * (u / self.c);
                    t * t
                } else {
                    0.0
                }
            }
        }
    }
}

/// Scores of one batch against a location/scale pair, with flags past `cutoff`.
#[derive(Debug, Clone)]
pub struct UnivariateReport {
    pub location: f64,
    pub scale: f64,
    pub scores: Vec<f64>,
    pub flagged: Vec<bool>,
    pub cutoff: f64,
}

impl UnivariateReport {
    fn from_scores(location: f64, scale: f64, scores: Vec<f64>, cutoff: f64) -> Self {
        let flagged = scores.iter().map(|s| s.abs() > cutoff).collect();
        Self { location, scale, scores, flagged, cutoff }
    }
}

/// Sample mean.
pub fn mean(s: &Sample) -> f64 {
    s.values.iter().sum::<f64>() / s.n() as f64
}

/// Sample standard deviation (divisor n-1).
pub fn stdev(s: &Sample) -> Result<f64> {
    if s.n() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: s.n() });
    }
    let m = mean(s);
    let ss: f64 = s.values.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (s.n() as f64 - 1.0)).sqrt())
}

/// Median: middle order statistic, midpoint of the two middle ones for even n.
pub fn median(s: &Sample) -> f64 {
    median_of_sorted(&s.sorted())
}

fn median_of_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

fn median_of_unsorted(mut x: Vec<f64>) -> f64 {
    x.sort_unstable_by(f64::total_cmp);
    median_of_sorted(&x)
}

/// Median absolute deviation from the median, scaled by 1.4826 for gaussian
/// consistency.
pub fn mad(s: &Sample) -> f64 {
    let med = median(s);
    let dev: Vec<f64> = s.values.iter().map(|x| (x - med).abs()).collect();
    MAD_CONSISTENCY * median_of_unsorted(dev)
}

/// Qn scale estimator: 2.2219 times the k-th smallest pairwise distance,
/// k = C(h,2) with h = floor(n/2)+1 (the first quartile of all pairwise
/// distances).
///
/// Selection runs in O(n log n . log range) by bisection with a two-pointer
/// pair count, so large batches never materialize the O(n^2) distance set.
pub fn qn(s: &Sample) -> Result<f64> {
    let n = s.n();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let x = s.sorted();
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    Ok(QN_CONSISTENCY * kth_smallest_pairwise_gap(&x, k))
}

/// Number of pairs (i < j) with x[j] - x[i] <= t; x must be sorted ascending.
fn count_gaps_at_most(x: &[f64], t: f64) -> usize {
    let mut count = 0usize;
    let mut left = 0usize;
    for j in 1..x.len() {
        while x[j] - x[left] > t {
            left += 1;
        }
        count += j - left;
    }
    count
}

/// Exact k-th smallest element (1-based) of {x[j] - x[i] : i < j}, x sorted.
fn kth_smallest_pairwise_gap(x: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= x.len() * (x.len() - 1) / 2);
    if count_gaps_at_most(x, 0.0) >= k {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = x[x.len() - 1] - x[0];
    loop {
        // shrink (lo, hi] with count(lo) < k <= count(hi)
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count_gaps_at_most(x, mid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // smallest gap value strictly above lo
        let mut candidate = f64::INFINITY;
        for i in 0..x.len() - 1 {
            // first j > i with x[j] - x[i] > lo
            let (mut a, mut b) = (i + 1, x.len());
            while a < b {
                let m = (a + b) / 2;
                if x[m] - x[i] > lo {
                    b = m;
                } else {
                    a = m + 1;
                }
            }
            if a < x.len() {
                candidate = candidate.min(x[a] - x[i]);
            }
        }
        if count_gaps_at_most(x, candidate) >= k {
            return candidate;
        }
        // another distinct gap value sat inside (lo, hi]; tighten and retry
        lo = candidate;
    }
}

/// Paper-convention quartiles: Q1 = x_(floor(n/4)), Q3 = x_(ceil(3n/4)),
/// 1-based and clamped into [1, n].
fn quartiles(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    let i1 = (n / 4).max(1);
    let i3 = (3 * n).div_ceil(4).min(n);
    (sorted[i1 - 1], sorted[i3 - 1])
}

/// Normalized interquartile range 0.7413 (Q3 - Q1).
pub fn iqr_normalized(s: &Sample) -> Result<f64> {
    if s.n() < 4 {
        return Err(Error::TooFewObservations { needed: 4, got: s.n() });
    }
    let (q1, q3) = quartiles(&s.sorted());
    Ok(IQR_CONSISTENCY * (q3 - q1))
}

/// Boxplot fence [Q1 - 1.5 IQR, Q3 + 1.5 IQR] with the unnormalized IQR.
pub fn boxplot_fences(s: &Sample) -> Result<(f64, f64)> {
    if s.n() < 4 {
        return Err(Error::TooFewObservations { needed: 4, got: s.n() });
    }
    let (q1, q3) = quartiles(&s.sorted());
    let iqr = q3 - q1;
    Ok((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

/// M-estimate of location: solves sum psi((x_i - mu)/sigma) = 0 by
/// iteratively reweighted averaging, starting from the median, with sigma
/// fixed at the Qn scale of the batch.
pub fn m_location(s: &Sample, psi: &PsiSpec, tol: f64, max_iter: usize) -> Result<f64> {
    let sigma = qn(s)?;
    if sigma <= 0.0 {
        return Err(Error::DegenerateScale(format!(
            "Qn scale is zero (majority tied at {})",
            median(s)
        )));
    }
    let mut mu = median(s);
    for _ in 0..max_iter {
        let mut wsum = 0.0;
        let mut wx = 0.0;
        for &x in &s.values {
            let w = psi.weight((x - mu) / sigma);
            wsum += w;
            wx += w * x;
        }
        if wsum == 0.0 {
            return Err(Error::DegenerateScale("all M-estimation weights vanished".into()));
        }
        let next = wx / wsum;
        let delta = (next - mu).abs();
        mu = next;
        if delta <= tol {
            return Ok(mu);
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, last: mu })
}

/// Classical z-scores (x_i - mean)/stdev with the default 2.5 cutoff.
pub fn z_scores(s: &Sample) -> Result<UnivariateReport> {
    z_scores_with(s, DEFAULT_CUTOFF)
}

pub fn z_scores_with(s: &Sample, cutoff: f64) -> Result<UnivariateReport> {
    let sd = stdev(s)?;
    if sd <= 0.0 {
        return Err(Error::DegenerateScale("standard deviation is zero".into()));
    }
    let m = mean(s);
    let scores = s.values.iter().map(|x| (x - m) / sd).collect();
    Ok(UnivariateReport::from_scores(m, sd, scores, cutoff))
}

/// Robust scores (x_i - median)/MAD with the default 2.5 cutoff.
pub fn robust_scores(s: &Sample) -> Result<UnivariateReport> {
    robust_scores_with(s, DEFAULT_CUTOFF)
}

pub fn robust_scores_with(s: &Sample, cutoff: f64) -> Result<UnivariateReport> {
    let med = median(s);
    let scale = mad(s);
    if scale <= 0.0 {
        return Err(Error::DegenerateScale(format!(
            "MAD is zero: at least half of the sample is tied at {med}"
        )));
    }
    let scores = s.values.iter().map(|x| (x - med) / scale).collect();
    Ok(UnivariateReport::from_scores(med, scale, scores, cutoff))
}
