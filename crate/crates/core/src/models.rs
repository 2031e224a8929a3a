//! Discriminant scores with plug-in robust moments, and trimmed k-means.
//!
//! Swapping the classical group means/covariances for MCD estimates makes
//! quadratic and linear discriminant rules resistant to mislabeled or
//! contaminated training cases. Trimmed k-means carries the same trimming
//! idea to clustering: only the h best-fitting cases are assigned, the rest
//! stay unassigned.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::covariance::{classical_moments, fast_mcd, McdOptions};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::stream::start_rng;

/// Labeled training data; group ids run from 0 to J-1.
#[derive(Debug, Clone)]
pub struct GroupedData {
    x: DataMatrix,
    labels: Vec<usize>,
    n_groups: usize,
}

impl GroupedData {
    pub fn new(x: DataMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.n() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} rows",
                labels.len(),
                x.n()
            )));
        }
        let n_groups = labels.iter().max().map_or(0, |m| m + 1);
        if n_groups < 2 {
            return Err(Error::InvalidParameter("need at least two groups".into()));
        }
        for j in 0..n_groups {
            if !labels.contains(&j) {
                return Err(Error::InvalidParameter(format!("group {j} has no members")));
            }
        }
        Ok(Self { x, labels, n_groups })
    }

    pub fn x(&self) -> &DataMatrix {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    fn group_rows(&self, j: usize) -> Vec<usize> {
        (0..self.x.n()).filter(|&i| self.labels[i] == j).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscriminantKind {
    Qda,
    Lda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentEstimator {
    Classical,
    Mcd,
}

/// Per-group moments with priors; LDA variants carry the pooled scatter.
#[derive(Debug, Clone)]
pub struct DiscriminantModel {
    pub kind: DiscriminantKind,
    pub estimator: MomentEstimator,
    pub means: Vec<DVector<f64>>,
    /// Group scatters (QDA) or the single pooled scatter repeated per group (LDA).
    pub scatters: Vec<DMatrix<f64>>,
    pub priors: Vec<f64>,
    pub group_sizes: Vec<usize>,
}

impl DiscriminantModel {
    pub fn n_groups(&self) -> usize {
        self.means.len()
    }

    pub fn d(&self) -> usize {
        self.means[0].len()
    }
}

/// Options controlling the per-group moment estimation.
#[derive(Debug, Clone)]
pub struct DiscriminantOptions {
    /// Fraction of each group kept by the MCD subset (clamped to [d+1, n_j]).
    pub h_frac: f64,
    pub seed: u64,
    pub n_starts: usize,
    /// Overrides the empirical group-share priors when set.
    pub priors: Option<Vec<f64>>,
}

impl Default for DiscriminantOptions {
    fn default() -> Self {
        Self { h_frac: 0.75, seed: 0, n_starts: 500, priors: None }
    }
}

/// Fits per-group location/scatter by classical moments or reweighted MCD;
/// LDA pools the group scatters with (n_j - 1)/(n - J) weights.
pub fn train_discriminant(
    data: &GroupedData,
    kind: DiscriminantKind,
    estimator: MomentEstimator,
    opts: &DiscriminantOptions,
) -> Result<DiscriminantModel> {
    let d = data.x.d();
    let j_groups = data.n_groups;
    if !(opts.h_frac > 0.0 && opts.h_frac <= 1.0) {
        return Err(Error::InvalidParameter(format!("h_frac = {} outside (0, 1]", opts.h_frac)));
    }
    let priors = match &opts.priors {
        Some(p) => {
            if p.len() != j_groups {
                return Err(Error::InvalidParameter(format!(
                    "{} priors for {} groups",
                    p.len(),
                    j_groups
                )));
            }
            if p.iter().any(|&v| v <= 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(
                    "priors must be positive and sum to one".into(),
                ));
            }
            p.clone()
        }
        None => (0..j_groups)
            .map(|j| data.group_rows(j).len() as f64 / data.x.n() as f64)
            .collect(),
    };

    let mut means = Vec::with_capacity(j_groups);
    let mut scatters = Vec::with_capacity(j_groups);
    let mut group_sizes = Vec::with_capacity(j_groups);
    for j in 0..j_groups {
        let rows = data.group_rows(j);
        if rows.len() < d + 2 {
            return Err(Error::TooFewObservations { needed: d + 2, got: rows.len() });
        }
        let sub = data.x.select_rows(&rows)?;
        let ls = match estimator {
            MomentEstimator::Classical => classical_moments(&sub)?,
            MomentEstimator::Mcd => {
                let h = ((opts.h_frac * rows.len() as f64).floor() as usize)
                    .clamp(d + 1, rows.len());
                fast_mcd(
                    &sub,
                    h,
                    &McdOptions { seed: opts.seed, n_starts: opts.n_starts, ..Default::default() },
                )?
            }
        };
        if ls.is_exact_fit() {
            return Err(Error::Singular(format!("group {j} scatter is singular")));
        }
        means.push(ls.mu);
        scatters.push(ls.sigma);
        group_sizes.push(rows.len());
    }

    if kind == DiscriminantKind::Lda {
        let n: usize = group_sizes.iter().sum();
        let mut pooled = DMatrix::zeros(d, d);
        for (sigma, &nj) in scatters.iter().zip(&group_sizes) {
            pooled += sigma * ((nj - 1) as f64 / (n - j_groups) as f64);
        }
        scatters = vec![pooled; j_groups];
    }

    Ok(DiscriminantModel { kind, estimator, means, scatters, priors, group_sizes })
}

/// Quadratic discriminant scores
/// -ln|Sigma_j|/2 - (x-mu_j)' Sigma_j^-1 (x-mu_j)/2 + ln p_j for each group.
pub fn qda_scores(model: &DiscriminantModel, x: &DVector<f64>) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(model.n_groups());
    for j in 0..model.n_groups() {
        let chol = model.scatters[j]
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("group {j} scatter")))?;
        let ln_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let c = x - &model.means[j];
        let solved = chol.solve(&c);
        let quad = c.dot(&solved);
        scores.push(-0.5 * ln_det - 0.5 * quad + model.priors[j].ln());
    }
    Ok(scores)
}

/// Linear discriminant scores mu_j' Sigma^-1 x - mu_j' Sigma^-1 mu_j / 2 + ln p_j,
/// the equal-scatter simplification of the quadratic scores.
pub fn lda_scores(model: &DiscriminantModel, x: &DVector<f64>) -> Result<Vec<f64>> {
    let chol = model.scatters[0]
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("pooled scatter".into()))?;
    let mut scores = Vec::with_capacity(model.n_groups());
    for j in 0..model.n_groups() {
        let w = chol.solve(&model.means[j]);
        scores.push(w.dot(x) - 0.5 * w.dot(&model.means[j]) + model.priors[j].ln());
    }
    Ok(scores)
}

/// Predicted labels (argmax score; ties go to the smallest group index) and a
/// flag marking rows where a tie occurred.
pub fn classify(model: &DiscriminantModel, x_new: &DataMatrix) -> Result<(Vec<usize>, Vec<bool>)> {
    if x_new.d() != model.d() {
        return Err(Error::InvalidParameter(format!(
            "data has {} columns, model has {}",
            x_new.d(),
            model.d()
        )));
    }
    let mut labels = Vec::with_capacity(x_new.n());
    let mut ties = Vec::with_capacity(x_new.n());
    for i in 0..x_new.n() {
        let xi = x_new.row(i);
        let scores = match model.kind {
            DiscriminantKind::Qda => qda_scores(model, &xi)?,
            DiscriminantKind::Lda => lda_scores(model, &xi)?,
        };
        let mut best = 0;
        for j in 1..scores.len() {
            if scores[j] > scores[best] {
                best = j;
            }
        }
        let tie = scores.iter().enumerate().any(|(j, &s)| j != best && s == scores[best]);
        labels.push(best);
        ties.push(tie);
    }
    Ok((labels, ties))
}

// ---------------------------------------------------------------------------
// trimmed k-means

/// A trimmed clustering: exactly h cases carry an assignment.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub k: usize,
    pub centers: Vec<DVector<f64>>,
    /// None marks a trimmed (unassigned) case.
    pub assignment: Vec<Option<usize>>,
    pub h: usize,
    /// Sum of squared distances of assigned cases to their center.
    pub objective: f64,
}

/// One concentration step of trimmed k-means.
#[derive(Debug, Clone)]
pub struct ConcentrationStep {
    pub centers: Vec<DVector<f64>>,
    pub assignment: Vec<Option<usize>>,
    pub objective: f64,
    /// Set when a cluster lost all members.
    pub empty_cluster: bool,
}

fn nearest_center(x: &DVector<f64>, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = (x - &centers[0]).norm_squared();
    for (c, center) in centers.iter().enumerate().skip(1) {
        let d = (x - center).norm_squared();
        // strict inequality keeps ties on the lowest center index
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// Keep the h cases nearest to their closest center, reassign them, and
/// recompute the means. The trimmed objective never increases.
pub fn concentration_step(
    x: &DataMatrix,
    centers: &[DVector<f64>],
    h: usize,
) -> Result<ConcentrationStep> {
    let n = x.n();
    if h > n || centers.is_empty() {
        return Err(Error::InvalidParameter("bad concentration step inputs".into()));
    }
    let per_point: Vec<(usize, f64)> = (0..n).map(|i| nearest_center(&x.row(i), centers)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| per_point[a].1.total_cmp(&per_point[b].1).then(a.cmp(&b)));
    let kept: Vec<usize> = {
        let mut v: Vec<usize> = order.into_iter().take(h).collect();
        v.sort_unstable();
        v
    };

    let k = centers.len();
    let mut sums: Vec<DVector<f64>> = vec![DVector::zeros(x.d()); k];
    let mut counts = vec![0usize; k];
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    for &i in &kept {
        let c = per_point[i].0;
        assignment[i] = Some(c);
        sums[c] += x.row(i);
        counts[c] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Ok(ConcentrationStep {
            centers: centers.to_vec(),
            assignment,
            objective: f64::INFINITY,
            empty_cluster: true,
        });
    }
    let new_centers: Vec<DVector<f64>> =
        sums.into_iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let objective = kept
        .iter()
        .map(|&i| {
            let c = assignment[i].unwrap();
            (x.row(i) - &new_centers[c]).norm_squared()
        })
        .sum();
    Ok(ConcentrationStep { centers: new_centers, assignment, objective, empty_cluster: false })
}

/// Options for the trimmed k-means search.
#[derive(Debug, Clone)]
pub struct KmeansOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Re-draws allowed per start when a cluster empties out.
    pub max_restarts: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self { n_starts: 100, seed: 0, max_iter: 200, max_restarts: 50 }
    }
}

/// Trimmed k-means: minimize the sum of squared distances of the h kept
/// cases to their cluster mean; the other n - h cases stay unassigned.
/// Concentration steps from random initial centers, best of `n_starts`.
pub fn trimmed_kmeans(
    x: &DataMatrix,
    k: usize,
    h: usize,
    opts: &KmeansOptions,
) -> Result<ClusterResult> {
    let (n, d) = (x.n(), x.d());
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if h < k * (d + 1) || h > n {
        return Err(Error::SubsetSizeOutOfRange { h, min: k * (d + 1), max: n });
    }
    if n < k {
        return Err(Error::TooFewObservations { needed: k, got: n });
    }

    let runs: Vec<Option<(f64, Vec<Option<usize>>, Vec<DVector<f64>>)>> = (0..opts.n_starts as u64)
        .into_par_iter()
        .map(|idx| single_start(x, k, h, opts, idx))
        .collect();

    let best = runs
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or_else(|| {
            Error::InvalidParameter("every start collapsed to an empty cluster".into())
        })?;
    Ok(ClusterResult { k, centers: best.2, assignment: best.1, h, objective: best.0 })
}

fn single_start(
    x: &DataMatrix,
    k: usize,
    h: usize,
    opts: &KmeansOptions,
    index: u64,
) -> Option<(f64, Vec<Option<usize>>, Vec<DVector<f64>>)> {
    let mut rng = start_rng(opts.seed, index);
    'restart: for _ in 0..=opts.max_restarts {
        let seed_rows = sample_indices(&mut rng, x.n(), k).into_vec();
        let mut centers: Vec<DVector<f64>> = seed_rows.iter().map(|&i| x.row(i)).collect();
        let mut last: Option<ConcentrationStep> = None;
        for _ in 0..opts.max_iter {
            let step = concentration_step(x, &centers, h).ok()?;
            if step.empty_cluster {
                continue 'restart;
            }
            let converged = last
                .as_ref()
                .map(|p| p.assignment == step.assignment)
                .unwrap_or(false);
            centers = step.centers.clone();
            let done = converged;
            last = Some(step);
            if done {
                break;
            }
        }
        let fin = last?;
        return Some((fin.objective, fin.assignment, fin.centers));
    }
    None
}
