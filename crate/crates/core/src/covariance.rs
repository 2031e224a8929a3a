//! Robust multivariate location/scatter estimation and distance diagnostics.
//!
//! The centerpiece is the minimum covariance determinant (MCD): find the h
//! observations whose classical covariance matrix has the lowest possible
//! determinant, then report their mean and (consistency-scaled) covariance.
//! Robust distances computed from that fit expose outliers that classical
//! Mahalanobis distances mask. The regularized variant (MRCD) covers d >= n,
//! and Stahel-Donoho outlyingness gives a projection-based alternative.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::dist::{chi2_cdf, chi2_quantile};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::stream::start_rng;
use crate::univariate::{self, Sample};

/// Relative eigenvalue threshold below which a scatter counts as singular.
const SINGULARITY_TOL: f64 = 1e-12;

/// An affine subspace containing at least h data points (the exact-fit case).
#[derive(Debug, Clone)]
pub struct Hyperplane {
    /// Unit normal of the subspace.
    pub normal: DVector<f64>,
    /// Points x on the subspace satisfy normal . x = offset.
    pub offset: f64,
}

/// A location estimate with its scatter matrix and provenance.
#[derive(Debug, Clone)]
pub struct LocationScatter {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Size of the subset behind the raw estimate (h = n for classical moments).
    pub h: usize,
    /// Multiplicative factor applied to the subset covariance.
    pub consistency_factor: f64,
    pub reweighted: bool,
    /// Sorted indices of the h-subset the raw estimate was computed from.
    pub best_subset: Vec<usize>,
    /// Determinant of the raw subset covariance (regularized determinant for MRCD).
    pub objective: f64,
    /// Set when at least h points lie exactly on an affine subspace.
    pub exact_fit: Option<Hyperplane>,
}

impl LocationScatter {
    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn is_exact_fit(&self) -> bool {
        self.exact_fit.is_some()
    }
}

/// Distances of every row under a single location/scatter estimate.
#[derive(Debug, Clone)]
pub struct Distances {
    pub values: Vec<f64>,
    /// sqrt of the 0.975 chi-squared quantile with d degrees of freedom.
    pub cutoff: f64,
    pub flags: Vec<bool>,
}

/// Paired classical (md) and robust (rd) distances for the DD-plot.
#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub md: Vec<f64>,
    pub rd: Vec<f64>,
    pub cutoff: f64,
    /// Flagged by the robust distance.
    pub flags: Vec<bool>,
}

/// Stahel-Donoho outlyingness of every row.
#[derive(Debug, Clone)]
pub struct OutlyingnessReport {
    pub outl: Vec<f64>,
    /// Non-degenerate directions that entered the maximum.
    pub directions_used: usize,
}

/// Options shared by the random-start subset searches.
#[derive(Debug, Clone)]
pub struct McdOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub reweight: bool,
    /// Starts kept for full C-step convergence after the two warm-up steps.
    pub n_best: usize,
    pub warmup_csteps: usize,
    pub max_csteps: usize,
}

impl Default for McdOptions {
    fn default() -> Self {
        Self {
            n_starts: 500,
            seed: 0,
            reweight: true,
            n_best: 10,
            warmup_csteps: 2,
            max_csteps: 200,
        }
    }
}

/// Highest-breakdown default subset size for the MCD.
pub fn default_h(n: usize, d: usize) -> usize {
    (n + d + 1) / 2
}

/// sqrt(chi2 0.975 quantile with d dof): the tolerance-ellipsoid radius and
/// flagging cutoff used throughout.
pub fn distance_cutoff(d: usize) -> f64 {
    chi2_quantile(d as f64, 0.975).sqrt()
}

/// Factor making a covariance of the h best points consistent for gaussian
/// data: (h/n) / P(chi2_{d+2} <= q) with q the (h/n) chi2_d quantile.
pub fn mcd_consistency_factor(n: usize, h: usize, d: usize) -> f64 {
    if h >= n {
        return 1.0;
    }
    let alpha = h as f64 / n as f64;
    alpha / chi2_cdf(d as f64 + 2.0, chi2_quantile(d as f64, alpha))
}

fn reweight_consistency_factor(d: usize) -> f64 {
    0.975 / chi2_cdf(d as f64 + 2.0, chi2_quantile(d as f64, 0.975))
}

// ---------------------------------------------------------------------------
// moments and scatter inspection

fn subset_moments(x: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let m = rows.len();
    let mut mu = DVector::zeros(d);
    for &i in rows {
        mu += x.row(i).transpose();
    }
    mu /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for &i in rows {
        let c = x.row(i).transpose() - &mu;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (m - 1) as f64;
    (mu, cov)
}

/// Eigendecomposition of a symmetric scatter, eigenvalues descending.
fn sym_eigen(sigma: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = sigma.clone().symmetric_eigen();
    let d = sigma.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Inverse-scatter application via the eigendecomposition, or the hyperplane
/// evidence if the scatter is numerically singular.
enum ScatterKind {
    Regular { eigvals: Vec<f64>, eigvecs: DMatrix<f64>, ln_det: f64 },
    Singular { normal: DVector<f64> },
}

fn inspect_scatter(sigma: &DMatrix<f64>) -> ScatterKind {
    let (eigvals, eigvecs) = sym_eigen(sigma);
    let largest = eigvals[0].max(0.0);
    let smallest = *eigvals.last().unwrap();
    if smallest <= SINGULARITY_TOL * largest.max(SINGULARITY_TOL) {
        let d = sigma.nrows();
        let normal = eigvecs.column(d - 1).into_owned();
        ScatterKind::Singular { normal }
    } else {
        let ln_det = eigvals.iter().map(|l| l.ln()).sum();
        ScatterKind::Regular { eigvals, eigvecs, ln_det }
    }
}

fn squared_distance(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    eigvals: &[f64],
    eigvecs: &DMatrix<f64>,
) -> f64 {
    let c = x - mu;
    let t = eigvecs.transpose() * c;
    t.iter().zip(eigvals).map(|(ti, l)| ti * ti / l).sum()
}

fn all_squared_distances(
    x: &DMatrix<f64>,
    mu: &DVector<f64>,
    eigvals: &[f64],
    eigvecs: &DMatrix<f64>,
) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| squared_distance(&x.row(i).transpose(), mu, eigvals, eigvecs))
        .collect()
}

/// Indices of the h smallest entries, ties broken by index, result sorted.
fn h_smallest(d2: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d2.len()).collect();
    idx.sort_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(a.cmp(&b)));
    let mut subset: Vec<usize> = idx.into_iter().take(h).collect();
    subset.sort_unstable();
    subset
}

fn hyperplane_through(mu: &DVector<f64>, normal: DVector<f64>) -> Hyperplane {
    let offset = normal.dot(mu);
    Hyperplane { normal, offset }
}

// ---------------------------------------------------------------------------
// classical moments and distances

/// Empirical mean and covariance (divisor n-1), packaged as a LocationScatter
/// with h = n and consistency factor 1.
pub fn classical_moments(x: &DataMatrix) -> Result<LocationScatter> {
    let n = x.n();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let rows: Vec<usize> = (0..n).collect();
    let (mu, sigma) = subset_moments(x.matrix(), &rows);
    let (objective, exact_fit) = match inspect_scatter(&sigma) {
        ScatterKind::Regular { ln_det, .. } => (ln_det.exp(), None),
        ScatterKind::Singular { normal } => (0.0, Some(hyperplane_through(&mu, normal))),
    };
    Ok(LocationScatter {
        mu,
        sigma,
        h: n,
        consistency_factor: 1.0,
        reweighted: false,
        best_subset: rows,
        objective,
        exact_fit,
    })
}

/// Mahalanobis-type distances sqrt((x-mu)' Sigma^-1 (x-mu)) of every row,
/// flagged against sqrt(chi2_{d,0.975}).
pub fn mahalanobis_distances(x: &DataMatrix, ls: &LocationScatter) -> Result<Distances> {
    if x.d() != ls.d() {
        return Err(Error::InvalidParameter(format!(
            "data has {} columns, estimate has {}",
            x.d(),
            ls.d()
        )));
    }
    let (eigvals, eigvecs) = match inspect_scatter(&ls.sigma) {
        ScatterKind::Regular { eigvals, eigvecs, .. } => (eigvals, eigvecs),
        ScatterKind::Singular { .. } => {
            return Err(Error::Singular("scatter matrix in distance computation".into()))
        }
    };
    let values: Vec<f64> = all_squared_distances(x.matrix(), &ls.mu, &eigvals, &eigvecs)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let cutoff = distance_cutoff(x.d());
    let flags = values.iter().map(|&v| v > cutoff).collect();
    Ok(Distances { values, cutoff, flags })
}

// ---------------------------------------------------------------------------
// C-steps and FastMCD

/// One concentration step: refit moments on `subset`, then return the h rows
/// closest in the resulting Mahalanobis metric. The new subset's covariance
/// determinant never exceeds the old one's.
pub fn c_step(x: &DataMatrix, subset: &[usize]) -> Result<Vec<usize>> {
    let h = subset.len();
    let (mu, cov) = subset_moments(x.matrix(), subset);
    match inspect_scatter(&cov) {
        ScatterKind::Regular { eigvals, eigvecs, .. } => {
            let d2 = all_squared_distances(x.matrix(), &mu, &eigvals, &eigvecs);
            Ok(h_smallest(&d2, h))
        }
        ScatterKind::Singular { normal } => {
            let hp = hyperplane_through(&mu, normal);
            Err(Error::ExactFit {
                normal: hp.normal.iter().cloned().collect(),
                offset: hp.offset,
            })
        }
    }
}

fn ln_det_of_subset(x: &DMatrix<f64>, subset: &[usize]) -> Option<f64> {
    let (_, cov) = subset_moments(x, subset);
    match inspect_scatter(&cov) {
        ScatterKind::Regular { ln_det, .. } => Some(ln_det),
        ScatterKind::Singular { .. } => None,
    }
}

enum StartOutcome {
    Converged { ln_det: f64, subset: Vec<usize> },
    Exact { subset: Vec<usize> },
}

/// Run C-steps from `subset` until the subset stops changing.
fn concentrate(dm: &DataMatrix, mut subset: Vec<usize>, max_steps: usize) -> Result<StartOutcome> {
    for _ in 0..max_steps {
        match c_step(dm, &subset) {
            Ok(next) => {
                if next == subset {
                    break;
                }
                subset = next;
            }
            Err(Error::ExactFit { .. }) => return Ok(StartOutcome::Exact { subset }),
            Err(e) => return Err(e),
        }
    }
    match ln_det_of_subset(dm.matrix(), &subset) {
        Some(ln_det) => Ok(StartOutcome::Converged { ln_det, subset }),
        None => Ok(StartOutcome::Exact { subset }),
    }
}

fn run_warmup(dm: &DataMatrix, mut subset: Vec<usize>, steps: usize) -> Result<StartOutcome> {
    for _ in 0..steps {
        match c_step(dm, &subset) {
            Ok(next) => subset = next,
            Err(Error::ExactFit { .. }) => return Ok(StartOutcome::Exact { subset }),
            Err(e) => return Err(e),
        }
    }
    match ln_det_of_subset(dm.matrix(), &subset) {
        Some(ln_det) => Ok(StartOutcome::Converged { ln_det, subset }),
        None => Ok(StartOutcome::Exact { subset }),
    }
}

/// Draws an elemental (d+1)-point subset, enlarging it until its covariance
/// is nonsingular, then concentrates it to an h-subset.
fn elemental_start(
    dm: &DataMatrix,
    h: usize,
    seed: u64,
    index: u64,
    warmup: usize,
) -> Result<StartOutcome> {
    let x = dm.matrix();
    let (n, d) = (dm.n(), dm.d());
    let mut rng = start_rng(seed, index);
    let mut subset: Vec<usize> = sample_indices(&mut rng, n, d + 1).into_vec();
    loop {
        let (mu, cov) = subset_moments(x, &subset);
        match inspect_scatter(&cov) {
            ScatterKind::Regular { eigvals, eigvecs, .. } => {
                let d2 = all_squared_distances(x, &mu, &eigvals, &eigvecs);
                let initial = h_smallest(&d2, h);
                return run_warmup(dm, initial, warmup);
            }
            ScatterKind::Singular { .. } => {
                if subset.len() == n {
                    // the whole data set sits on a lower-dimensional subspace
                    return Ok(StartOutcome::Exact { subset: (0..n).collect() });
                }
                let mut extra = rng.gen_range(0..n);
                while subset.contains(&extra) {
                    extra = rng.gen_range(0..n);
                }
                subset.push(extra);
            }
        }
    }
}

fn exact_fit_estimate(x: &DataMatrix, subset: Vec<usize>, h: usize) -> LocationScatter {
    let (mu, sigma) = subset_moments(x.matrix(), &subset);
    let normal = match inspect_scatter(&sigma) {
        ScatterKind::Singular { normal } => normal,
        // subset shrank onto a subspace of the full data; fall back to its
        // smallest principal direction
        ScatterKind::Regular { eigvecs, .. } => eigvecs.column(x.d() - 1).into_owned(),
    };
    let hp = hyperplane_through(&mu, normal);
    LocationScatter {
        mu,
        sigma,
        h,
        consistency_factor: 1.0,
        reweighted: false,
        best_subset: subset,
        objective: 0.0,
        exact_fit: Some(hp),
    }
}

fn finalize_raw(x: &DataMatrix, subset: Vec<usize>, h: usize) -> LocationScatter {
    let (mu, cov) = subset_moments(x.matrix(), &subset);
    let objective = match inspect_scatter(&cov) {
        ScatterKind::Regular { ln_det, .. } => ln_det.exp(),
        ScatterKind::Singular { .. } => 0.0,
    };
    let factor = mcd_consistency_factor(x.n(), h, x.d());
    LocationScatter {
        mu,
        sigma: cov * factor,
        h,
        consistency_factor: factor,
        reweighted: false,
        best_subset: subset,
        objective,
        exact_fit: None,
    }
}

fn reweight_estimate(x: &DataMatrix, raw: LocationScatter) -> Result<LocationScatter> {
    let distances = mahalanobis_distances(x, &raw)?;
    let keep: Vec<usize> = (0..x.n()).filter(|&i| !distances.flags[i]).collect();
    if keep.len() <= x.d() {
        // too few retained points to form a covariance; keep the raw estimate
        return Ok(raw);
    }
    let (mu, cov) = subset_moments(x.matrix(), &keep);
    let factor = reweight_consistency_factor(x.d());
    Ok(LocationScatter {
        mu,
        sigma: cov * factor,
        h: raw.h,
        consistency_factor: factor,
        reweighted: true,
        best_subset: raw.best_subset,
        objective: raw.objective,
        exact_fit: None,
    })
}

/// FastMCD: random elemental starts, two warm-up C-steps each, full
/// convergence for the best few, optional reweighting of the winner.
///
/// Deterministic for a given (seed, n_starts) regardless of thread schedule.
pub fn fast_mcd(x: &DataMatrix, h: usize, opts: &McdOptions) -> Result<LocationScatter> {
    let (n, d) = (x.n(), x.d());
    if n <= d {
        return Err(Error::DimensionExceedsRows { n, d });
    }
    if h < d + 1 || h > n {
        return Err(Error::SubsetSizeOutOfRange { h, min: d + 1, max: n });
    }
    if h == n {
        let raw = classical_moments(x)?;
        if raw.is_exact_fit() {
            return Ok(raw);
        }
        return if opts.reweight { reweight_estimate(x, raw) } else { Ok(raw) };
    }

    let outcomes: Vec<Result<StartOutcome>> = (0..opts.n_starts as u64)
        .into_par_iter()
        .map(|i| elemental_start(x, h, opts.seed, i, opts.warmup_csteps))
        .collect();

    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();
    for outcome in outcomes {
        match outcome? {
            StartOutcome::Exact { subset } => return Ok(exact_fit_estimate(x, subset, h)),
            StartOutcome::Converged { ln_det, subset } => candidates.push((ln_det, subset)),
        }
    }
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no usable random starts".into()));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(opts.n_best.max(1));
    candidates.dedup_by(|a, b| a.1 == b.1);

    let refined: Vec<Result<StartOutcome>> = candidates
        .into_par_iter()
        .map(|(_, subset)| concentrate(x, subset, opts.max_csteps))
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    for outcome in refined {
        match outcome? {
            StartOutcome::Exact { subset } => return Ok(exact_fit_estimate(x, subset, h)),
            StartOutcome::Converged { ln_det, subset } => {
                let replace = match &best {
                    None => true,
                    Some((bl, bs)) => {
                        (ln_det, &subset) < (*bl, bs)
                    }
                };
                if replace {
                    best = Some((ln_det, subset));
                }
            }
        }
    }
    let (_, subset) = best.expect("at least one refined candidate");
    let raw = finalize_raw(x, subset, h);
    if opts.reweight {
        reweight_estimate(x, raw)
    } else {
        Ok(raw)
    }
}

/// Global MCD optimum by full enumeration of all C(n, h) subsets.
///
/// The oracle counterpart to [`fast_mcd`]; refuses to enumerate more than
/// 10^6 subsets.
pub fn exhaustive_mcd(x: &DataMatrix, h: usize) -> Result<LocationScatter> {
    const BUDGET: u64 = 1_000_000;
    let (n, d) = (x.n(), x.d());
    if h < d + 1 || h > n {
        return Err(Error::SubsetSizeOutOfRange { h, min: d + 1, max: n });
    }
    if binomial(n, h) > BUDGET {
        return Err(Error::CombinatorialBudget { n, h, budget: BUDGET });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut exact: Option<Vec<usize>> = None;
    for subset in combinations(n, h) {
        match ln_det_of_subset(x.matrix(), &subset) {
            Some(ln_det) => {
                if best.as_ref().map_or(true, |(bl, _)| ln_det < *bl) {
                    best = Some((ln_det, subset));
                }
            }
            None => {
                if exact.is_none() {
                    exact = Some(subset);
                }
            }
        }
    }
    if let Some(subset) = exact {
        return Ok(exact_fit_estimate(x, subset, h));
    }
    let (_, subset) = best.expect("nonempty enumeration");
    Ok(finalize_raw(x, subset, h))
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: f64 = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
        if acc > 1e18 {
            return u64::MAX;
        }
    }
    acc.round() as u64
}

/// Lexicographic k-subsets of 0..n.
fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = Some((0..k).collect());
    std::iter::from_fn(move || {
        let subset = current.clone()?;
        // advance to the next combination
        let mut next = subset.clone();
        let mut i = k;
        loop {
            if i == 0 {
                current = None;
                break;
            }
            i -= 1;
            if next[i] < n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                current = Some(next);
                break;
            }
        }
        Some(subset)
    })
}

// ---------------------------------------------------------------------------
// Stahel-Donoho outlyingness

/// Maximum over projection directions of the robust score of each point:
/// |x_i'u - med_j(x_j'u)| / MAD_j(x_j'u).
///
/// Directions are the d coordinate axes plus `n_dirs` normalized differences
/// of random point pairs; directions whose projected MAD is zero are skipped.
pub fn stahel_donoho(x: &DataMatrix, n_dirs: usize, seed: u64) -> Result<OutlyingnessReport> {
    let (n, d) = (x.n(), x.d());
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let m = x.matrix();
    let mut rng = start_rng(seed, 0);

    let mut directions: Vec<DVector<f64>> = Vec::with_capacity(d + n_dirs);
    for j in 0..d {
        let mut u = DVector::zeros(d);
        u[j] = 1.0;
        directions.push(u);
    }
    for _ in 0..n_dirs {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        while j == i {
            j = rng.gen_range(0..n);
        }
        let diff = m.row(i).transpose() - m.row(j).transpose();
        let norm = diff.norm();
        if norm > 0.0 {
            directions.push(diff / norm);
        }
    }

    let mut outl = vec![0.0f64; n];
    let mut used = 0usize;
    for u in &directions {
        let proj: Vec<f64> = (0..n).map(|i| m.row(i).transpose().dot(u)).collect();
        let s = Sample::new(proj.clone())?;
        let scale = univariate::mad(&s);
        if scale <= 0.0 {
            continue;
        }
        used += 1;
        let center = univariate::median(&s);
        for i in 0..n {
            let score = (proj[i] - center).abs() / scale;
            if score > outl[i] {
                outl[i] = score;
            }
        }
    }
    if used == 0 {
        return Err(Error::DegenerateDirections);
    }
    Ok(OutlyingnessReport { outl, directions_used: used })
}

// ---------------------------------------------------------------------------
// MRCD

/// Positive definite target matrix for the regularized determinant, expressed
/// on the (median, Qn)-standardized scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MrcdTarget {
    Identity,
    /// (1-c) I + c J with J the all-ones matrix; requires -1/(d-1) < c < 1.
    Equicorrelation(f64),
}

/// Outcome of the regularized subset search.
#[derive(Debug, Clone)]
pub struct MrcdFit {
    pub estimate: LocationScatter,
    /// Regularization weight actually used.
    pub rho: f64,
    /// Condition number of the regularized scatter on the standardized scale.
    pub condition: f64,
}

fn target_matrix(target: MrcdTarget, d: usize) -> Result<DMatrix<f64>> {
    match target {
        MrcdTarget::Identity => Ok(DMatrix::identity(d, d)),
        MrcdTarget::Equicorrelation(c) => {
            let lower = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
            if c <= lower || c >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "equicorrelation parameter {c} outside ({lower}, 1)"
                )));
            }
            Ok(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { c }))
        }
    }
}

struct MrcdSearch {
    subset: Vec<usize>,
    ln_det: f64,
    mu_std: DVector<f64>,
    k_std: DMatrix<f64>,
    condition: f64,
}

fn regularized_scatter(
    u: &DMatrix<f64>,
    subset: &[usize],
    rho: f64,
    t: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let (mu, s) = subset_moments(u, subset);
    let k = t * rho + s * (1.0 - rho);
    (mu, k)
}

fn mrcd_search(
    u: &DMatrix<f64>,
    h: usize,
    rho: f64,
    t: &DMatrix<f64>,
    n_starts: usize,
    seed: u64,
    max_csteps: usize,
) -> Result<MrcdSearch> {
    let n = u.nrows();
    let runs: Vec<(f64, Vec<usize>)> = (0..n_starts as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = start_rng(seed, idx);
            let mut subset: Vec<usize> = sample_indices(&mut rng, n, h).into_vec();
            subset.sort_unstable();
            for _ in 0..max_csteps {
                let (mu, k) = regularized_scatter(u, &subset, rho, t);
                let (eigvals, eigvecs) = sym_eigen(&k);
                let d2 = all_squared_distances(u, &mu, &eigvals, &eigvecs);
                let next = h_smallest(&d2, h);
                if next == subset {
                    break;
                }
                subset = next;
            }
            let (_, k) = regularized_scatter(u, &subset, rho, t);
            let (eigvals, _) = sym_eigen(&k);
            let ln_det: f64 = eigvals.iter().map(|l| l.ln()).sum();
            (ln_det, subset)
        })
        .collect();

    let best = runs
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or_else(|| Error::InvalidParameter("mrcd needs at least one start".into()))?;
    let (mu_std, k_std) = regularized_scatter(u, &best.1, rho, t);
    let (eigvals, _) = sym_eigen(&k_std);
    let condition = eigvals[0] / eigvals[eigvals.len() - 1];
    Ok(MrcdSearch { subset: best.1, ln_det: best.0, mu_std, k_std, condition })
}

/// Minimum regularized covariance determinant: minimizes
/// det(rho T + (1-rho) S_H) over h-subsets on (median, Qn)-standardized
/// columns, so the scatter stays positive definite even when d >= n.
///
/// With `rho = None` the smallest value on the grid 0.01, 0.02, ..., 1.00
/// whose regularized scatter has condition number <= 1000 is used.
pub fn mrcd(
    x: &DataMatrix,
    h: usize,
    rho: Option<f64>,
    target: MrcdTarget,
    n_starts: usize,
    seed: u64,
) -> Result<MrcdFit> {
    let (n, d) = (x.n(), x.d());
    if h < 2 || h > n {
        return Err(Error::SubsetSizeOutOfRange { h, min: 2, max: n });
    }
    if let Some(r) = rho {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidParameter(format!("rho = {r} outside (0, 1]")));
        }
    }

    // standardize columns by (median, Qn)
    let mut centers = Vec::with_capacity(d);
    let mut scales = Vec::with_capacity(d);
    for j in 0..d {
        let col = Sample::new(x.column(j))?;
        let qn = univariate::qn(&col)?;
        if qn <= 0.0 {
            return Err(Error::DegenerateScale(format!(
                "column {} has zero Qn scale",
                x.col_label(j)
            )));
        }
        centers.push(univariate::median(&col));
        scales.push(qn);
    }
    let u = DMatrix::from_fn(n, d, |i, j| (x.matrix()[(i, j)] - centers[j]) / scales[j]);
    let t = target_matrix(target, d)?;

    let search = |r: f64| mrcd_search(&u, h, r, &t, n_starts, seed, 200);
    let (rho_used, found) = match rho {
        Some(r) => (r, search(r)?),
        None => {
            let mut chosen = None;
            for i in 1..=100 {
                let r = i as f64 / 100.0;
                let s = search(r)?;
                if s.condition <= 1000.0 {
                    chosen = Some((r, s));
                    break;
                }
            }
            chosen.ok_or_else(|| {
                Error::InvalidParameter("no rho on the grid gave a well-conditioned scatter".into())
            })?
        }
    };

    // back to the original scale
    let scale_diag = DMatrix::from_fn(d, d, |i, j| if i == j { scales[i] } else { 0.0 });
    let mu = DVector::from_fn(d, |j, _| centers[j] + scales[j] * found.mu_std[j]);
    let sigma = &scale_diag * &found.k_std * &scale_diag;
    let estimate = LocationScatter {
        mu,
        sigma,
        h,
        consistency_factor: 1.0,
        reweighted: false,
        best_subset: found.subset,
        objective: found.ln_det.exp(),
        exact_fit: None,
    };
    Ok(MrcdFit { estimate, rho: rho_used, condition: found.condition })
}

// ---------------------------------------------------------------------------
// diagnostics

/// Distance-distance plot data: robust versus classical distance per row,
/// with the common chi-squared cutoff. Points far above the identity line
/// are outliers the classical fit masked.
pub fn dd_plot_data(
    x: &DataMatrix,
    classical: &LocationScatter,
    robust: &LocationScatter,
) -> Result<DistanceReport> {
    let md = mahalanobis_distances(x, classical)?;
    let rd = mahalanobis_distances(x, robust)?;
    Ok(DistanceReport {
        md: md.values,
        rd: rd.values,
        cutoff: rd.cutoff,
        flags: rd.flags,
    })
}

/// Closed polyline of the bivariate tolerance ellipse MD(x) = sqrt(chi2 level
/// quantile); only defined for d = 2.
pub fn tolerance_ellipse(ls: &LocationScatter, level: f64, points: usize) -> Result<Vec<[f64; 2]>> {
    if ls.d() != 2 {
        return Err(Error::InvalidParameter(format!(
            "tolerance ellipse needs d = 2, got d = {}",
            ls.d()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level = {level} outside (0, 1)")));
    }
    let chol = ls
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("scatter matrix of tolerance ellipse".into()))?;
    let l = chol.l();
    let radius = chi2_quantile(2.0, level).sqrt();
    let m = points.max(8);
    let mut out = Vec::with_capacity(m + 1);
    for t in 0..m {
        let theta = 2.0 * std::f64::consts::PI * t as f64 / m as f64;
        let unit = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
        let p = &ls.mu + &l * unit * radius;
        out.push([p[0], p[1]]);
    }
    out.push(out[0]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: &[Vec<f64>]) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn classical_moments_two_points() {
        let x = dm(&[vec![0.0, 0.0], vec![2.0, 2.0]]);
        let ls = classical_moments(&x).unwrap();
        assert_eq!(ls.mu.as_slice(), [1.0, 1.0]);
        assert_eq!(ls.sigma.as_slice(), [2.0, 2.0, 2.0, 2.0]);
        // two points always sit on a line: exact fit in d = 2
        assert!(ls.is_exact_fit());
    }

    #[test]
    fn classical_moments_equivariance() {
        let x = dm(&[
            vec![1.0, 2.0],
            vec![0.5, -1.0],
            vec![2.0, 0.3],
            vec![-1.0, 1.4],
            vec![0.0, 0.0],
        ]);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -0.5, 3.0]);
        let b = DVector::from_column_slice(&[10.0, -4.0]);
        let mapped_rows: Vec<Vec<f64>> = (0..x.n())
            .map(|i| {
                let v = &a * x.row(i) + &b;
                v.iter().cloned().collect()
            })
            .collect();
        let y = dm(&mapped_rows);
        let ls_x = classical_moments(&x).unwrap();
        let ls_y = classical_moments(&y).unwrap();
        let mu_want = &a * &ls_x.mu + &b;
        let sigma_want = &a * &ls_x.sigma * a.transpose();
        assert!((ls_y.mu - mu_want).norm() < 1e-10);
        assert!((ls_y.sigma - sigma_want).norm() < 1e-10);
    }

    #[test]
    fn classical_moments_constant_column_is_exact_fit() {
        let x = dm(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0], vec![0.5, 5.0]]);
        let ls = classical_moments(&x).unwrap();
        assert!(ls.is_exact_fit());
        let hp = ls.exact_fit.unwrap();
        // normal points along the constant column
        assert!(hp.normal[1].abs() > 0.99);
        assert!((hp.offset.abs() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn mahalanobis_distance_basics() {
        // d = 1 with unit variance reduces to |z|
        let x = dm(&[vec![0.0], vec![2.0], vec![1.0], vec![-1.0], vec![0.5]]);
        let ls = LocationScatter {
            mu: DVector::from_column_slice(&[0.0]),
            sigma: DMatrix::from_row_slice(1, 1, &[1.0]),
            h: 5,
            consistency_factor: 1.0,
            reweighted: false,
            best_subset: vec![0, 1, 2, 3, 4],
            objective: 1.0,
            exact_fit: None,
        };
        let d = mahalanobis_distances(&x, &ls).unwrap();
        assert_eq!(d.values[0], 0.0);
        assert_eq!(d.values[1], 2.0);
        assert!((d.cutoff - chi2_quantile(1.0, 0.975).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_matches_explicit_inverse_oracle() {
        use rand::Rng;
        let mut rng = start_rng(11, 0);
        let d = 3;
        // random SPD sigma = A A' + I
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let sigma = &a * a.transpose() + DMatrix::identity(d, d);
        let mu = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let rows: Vec<Vec<f64>> =
            (0..20).map(|_| (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
        let x = dm(&rows);
        let ls = LocationScatter {
            mu: mu.clone(),
            sigma: sigma.clone(),
            h: 20,
            consistency_factor: 1.0,
            reweighted: false,
            best_subset: (0..20).collect(),
            objective: 1.0,
            exact_fit: None,
        };
        let got = mahalanobis_distances(&x, &ls).unwrap();
        let inv = sigma.try_inverse().unwrap();
        for i in 0..x.n() {
            let c = x.row(i) - &mu;
            let want = (&c.transpose() * &inv * &c)[(0, 0)].sqrt();
            assert!((got.values[i] - want).abs() < 1e-8);
        }
    }

    #[test]
    fn fast_mcd_h_equals_n_is_classical() {
        let x = dm(&[
            vec![1.0, 0.1],
            vec![2.0, -0.3],
            vec![0.0, 0.8],
            vec![-1.0, 0.2],
            vec![0.5, -0.5],
            vec![1.5, 0.6],
        ]);
        let opts = McdOptions { reweight: false, ..Default::default() };
        let mcd = fast_mcd(&x, x.n(), &opts).unwrap();
        let cls = classical_moments(&x).unwrap();
        assert!((mcd.mu - cls.mu).norm() < 1e-10);
        assert!((mcd.sigma - cls.sigma).norm() < 1e-10);
        assert_eq!(mcd.consistency_factor, 1.0);
    }

    #[test]
    fn fast_mcd_rejects_bad_shapes() {
        let x = dm(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(matches!(fast_mcd(&x, 2, &McdOptions::default()), Err(Error::DimensionExceedsRows { .. })));
        let x = dm(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert!(matches!(
            fast_mcd(&x, 1, &McdOptions::default()),
            Err(Error::SubsetSizeOutOfRange { .. })
        ));
    }

    #[test]
    fn exhaustive_mcd_hand_fixture() {
        // tight cluster of four plus two giants: the optimum is the cluster
        let x = dm(&[vec![0.0], vec![0.1], vec![0.2], vec![0.3], vec![50.0], vec![60.0]]);
        let ls = exhaustive_mcd(&x, 4).unwrap();
        assert_eq!(ls.best_subset, vec![0, 1, 2, 3]);
        let perm = dm(&[vec![60.0], vec![0.3], vec![0.2], vec![0.1], vec![0.0], vec![50.0]]);
        let ls2 = exhaustive_mcd(&perm, 4).unwrap();
        assert_eq!(ls2.best_subset, vec![1, 2, 3, 4]);
        assert!((ls.objective - ls2.objective).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_mcd_h_equals_n() {
        let x = dm(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![-1.0, 0.5]]);
        let ex = exhaustive_mcd(&x, 4).unwrap();
        let cls = classical_moments(&x).unwrap();
        assert!((ex.mu - cls.mu).norm() < 1e-12);
        assert!((ex.sigma - cls.sigma).norm() < 1e-12);
    }

    #[test]
    fn exhaustive_mcd_budget() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let x = dm(&rows);
        assert!(matches!(
            exhaustive_mcd(&x, 20),
            Err(Error::CombinatorialBudget { .. })
        ));
    }

    #[test]
    fn c_step_identity_at_h_equals_n() {
        let x = dm(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![0.0, 0.5], vec![2.0, 2.5]]);
        let all: Vec<usize> = (0..4).collect();
        assert_eq!(c_step(&x, &all).unwrap(), all);
    }

    #[test]
    fn c_step_exact_fit_signal() {
        // three collinear points in d = 2
        let x = dm(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![5.0, -1.0]]);
        assert!(matches!(c_step(&x, &[0, 1, 2]), Err(Error::ExactFit { .. })));
    }

    #[test]
    fn stahel_donoho_d1_equals_robust_scores() {
        let values = vec![6.27, 6.34, 6.25, 63.1, 6.28];
        let x = dm(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        let rep = stahel_donoho(&x, 50, 3).unwrap();
        let scores =
            univariate::robust_scores(&Sample::new(values).unwrap()).unwrap();
        for (o, s) in rep.outl.iter().zip(&scores.scores) {
            assert!((o - s.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn stahel_donoho_center_point_and_column_permutation() {
        let rows = vec![
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
            vec![0.0, 0.0],
        ];
        let x = dm(&rows);
        let rep = stahel_donoho(&x, 100, 5).unwrap();
        assert!(rep.outl[4] < 1e-12, "coordinatewise median point has zero outlyingness");
        let swapped: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[1], r[0]]).collect();
        let rep2 = stahel_donoho(&dm(&swapped), 100, 5).unwrap();
        for (a, b) in rep.outl.iter().zip(&rep2.outl) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stahel_donoho_degenerate() {
        let x = dm(&[vec![3.0], vec![3.0], vec![3.0]]);
        assert!(matches!(stahel_donoho(&x, 10, 0), Err(Error::DegenerateDirections)));
    }

    #[test]
    fn mrcd_rho_one_returns_target() {
        let x = dm(&[
            vec![1.0, 2.0],
            vec![2.0, 1.0],
            vec![3.0, 5.0],
            vec![0.0, 1.5],
            vec![1.2, 2.2],
            vec![0.8, 0.3],
        ]);
        let fit = mrcd(&x, 4, Some(1.0), MrcdTarget::Identity, 20, 7).unwrap();
        // on the original scale the scatter is diag(qn_j^2)
        for i in 0..2 {
            for j in 0..2 {
                if i != j {
                    assert!(fit.estimate.sigma[(i, j)].abs() < 1e-12);
                }
            }
        }
        let q0 = univariate::qn(&Sample::new(x.column(0)).unwrap()).unwrap();
        assert!((fit.estimate.sigma[(0, 0)] - q0 * q0).abs() < 1e-12);
        assert!((fit.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mrcd_wide_matrix_is_positive_definite() {
        let mut rng = start_rng(5, 0);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let x = dm(&rows);
        let fit = mrcd(&x, 15, Some(0.25), MrcdTarget::Identity, 30, 1).unwrap();
        let (eigvals, _) = sym_eigen(&fit.estimate.sigma);
        assert!(eigvals[eigvals.len() - 1] > 0.0);
    }

    #[test]
    fn mrcd_invalid_rho() {
        let x = dm(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert!(mrcd(&x, 2, Some(0.0), MrcdTarget::Identity, 5, 0).is_err());
        assert!(mrcd(&x, 2, Some(1.5), MrcdTarget::Identity, 5, 0).is_err());
    }

    #[test]
    fn dd_plot_identical_inputs_on_identity_line() {
        let mut rng = start_rng(2, 0);
        let rows: Vec<Vec<f64>> =
            (0..30).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let x = dm(&rows);
        let ls = classical_moments(&x).unwrap();
        let rep = dd_plot_data(&x, &ls, &ls).unwrap();
        for (m, r) in rep.md.iter().zip(&rep.rd) {
            assert_eq!(m, r);
        }
    }

    #[test]
    fn tolerance_ellipse_circle_and_axis_ratio() {
        let ls = LocationScatter {
            mu: DVector::from_column_slice(&[0.0, 0.0]),
            sigma: DMatrix::identity(2, 2),
            h: 10,
            consistency_factor: 1.0,
            reweighted: false,
            best_subset: (0..10).collect(),
            objective: 1.0,
            exact_fit: None,
        };
        let poly = tolerance_ellipse(&ls, 0.975, 180).unwrap();
        let r = chi2_quantile(2.0, 0.975).sqrt();
        assert!((r - 2.716).abs() < 0.01);
        for p in &poly {
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - r).abs() < 1e-8);
        }
        assert_eq!(poly.first(), poly.last());

        let ls2 = LocationScatter {
            sigma: DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
            ..ls
        };
        let poly = tolerance_ellipse(&ls2, 0.975, 360).unwrap();
        let max_x = poly.iter().map(|p| p[0].abs()).fold(0.0f64, f64::max);
        let max_y = poly.iter().map(|p| p[1].abs()).fold(0.0f64, f64::max);
        assert!((max_x / max_y - 2.0).abs() < 0.01);
    }

    #[test]
    fn tolerance_ellipse_vertices_map_under_affine_transforms() {
        let base = LocationScatter {
            mu: DVector::from_column_slice(&[1.0, -2.0]),
            sigma: DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]),
            h: 10,
            consistency_factor: 1.0,
            reweighted: false,
            best_subset: (0..10).collect(),
            objective: 1.0,
            exact_fit: None,
        };
        let a = DMatrix::from_row_slice(2, 2, &[1.5, -0.4, 0.7, 2.0]);
        let b = DVector::from_column_slice(&[3.0, 1.0]);
        let mapped = LocationScatter {
            mu: &a * &base.mu + &b,
            sigma: &a * &base.sigma * a.transpose(),
            ..base.clone()
        };
        let radius = chi2_quantile(2.0, 0.975).sqrt();
        let inv = mapped.sigma.clone().try_inverse().unwrap();
        for v in tolerance_ellipse(&base, 0.975, 90).unwrap() {
            let p = &a * DVector::from_column_slice(&v) + &b;
            let c = &p - &mapped.mu;
            let md = (c.transpose() * &inv * &c)[(0, 0)].sqrt();
            assert!((md - radius).abs() < 1e-8);
        }
    }
}
