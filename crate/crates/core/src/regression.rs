//! Least trimmed squares regression and its outlier diagnostics.
//!
//! LTS minimizes the sum of the h smallest squared residuals, so up to n - h
//! cases may deviate arbitrarily without dragging the fit. The FAST-LTS
//! search mirrors FastMCD: elemental starts, two concentration steps each,
//! full convergence for the best few. Standardized residuals against robust
//! predictor distances classify every case as regular, vertical outlier,
//! good leverage, or bad leverage.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::covariance::{distance_cutoff, mahalanobis_distances, LocationScatter};
use crate::dist::{f_upper_p, normal_pdf, normal_quantile, t_two_sided_p};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::stream::start_rng;

/// Residual magnitudes below this multiple of the response scale count as an
/// exact fit.
const EXACT_FIT_TOL: f64 = 1e-10;

/// Predictors, response, and whether an intercept is fitted.
#[derive(Debug, Clone)]
pub struct RegressionData {
    x: DataMatrix,
    y: DVector<f64>,
    intercept: bool,
}

impl RegressionData {
    pub fn new(x: DataMatrix, y: Vec<f64>, intercept: bool) -> Result<Self> {
        if y.len() != x.n() {
            return Err(Error::InvalidParameter(format!(
                "{} responses for {} rows",
                y.len(),
                x.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: x.d() });
        }
        let p = x.d() + intercept as usize;
        if x.n() <= p {
            return Err(Error::TooFewObservations { needed: p + 1, got: x.n() });
        }
        Ok(Self { x, y: DVector::from_vec(y), intercept })
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    /// Number of predictor variables (excluding the intercept).
    pub fn d(&self) -> usize {
        self.x.d()
    }

    /// Number of fitted coefficients.
    pub fn p(&self) -> usize {
        self.x.d() + self.intercept as usize
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn predictors(&self) -> &DataMatrix {
        &self.x
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    /// Design matrix, with a leading column of ones when an intercept is fitted.
    fn design(&self) -> DMatrix<f64> {
        let (n, d) = (self.n(), self.d());
        if self.intercept {
            DMatrix::from_fn(n, d + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    self.x.matrix()[(i, j - 1)]
                }
            })
        } else {
            self.x.matrix().clone()
        }
    }
}

/// Classical inferential output of the (re)weighted least squares fit.
#[derive(Debug, Clone)]
pub struct Inference {
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub df_residual: usize,
}

/// A fitted regression with its residuals, robust scale, and case weights.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// Coefficients; the intercept comes first when one is fitted.
    pub beta: Vec<f64>,
    /// Raw residuals y_i - yhat_i for all n cases.
    pub residuals: Vec<f64>,
    pub h: usize,
    /// Robust residual scale (zero in the exact-fit case).
    pub sigma_lts: f64,
    /// Consistency constant applied inside `sigma_lts`.
    pub chn: f64,
    /// Case weights from |r_i / sigma_lts| <= cutoff.
    pub weights: Vec<bool>,
    /// Sorted indices of the h-subset behind the raw fit.
    pub best_subset: Vec<usize>,
    /// Sum of the h smallest squared residuals.
    pub objective: f64,
    pub exact_fit: bool,
    pub reweighted: bool,
    /// Present on reweighted fits.
    pub inference: Option<Inference>,
}

impl RegressionFit {
    pub fn predict(&self, data: &RegressionData, i: usize) -> f64 {
        let mut yhat = 0.0;
        let offset = data.intercept as usize;
        if data.intercept {
            yhat += self.beta[0];
        }
        for j in 0..data.d() {
            yhat += self.beta[j + offset] * data.x.matrix()[(i, j)];
        }
        yhat
    }
}

/// Case classes of the regression outlier map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionClass {
    Regular,
    Vertical,
    GoodLeverage,
    BadLeverage,
}

impl RegressionClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegressionClass::Regular => "regular",
            RegressionClass::Vertical => "vertical",
            RegressionClass::GoodLeverage => "good_leverage",
            RegressionClass::BadLeverage => "bad_leverage",
        }
    }
}

/// Standardized LTS residuals against robust predictor distances, with the
/// four-way classification.
#[derive(Debug, Clone)]
pub struct RegressionOutlierMap {
    pub std_resid: Vec<f64>,
    pub rd_x: Vec<f64>,
    pub resid_cutoff: f64,
    pub rd_cutoff: f64,
    pub class: Vec<RegressionClass>,
}

/// Options for the FAST-LTS random-start search.
#[derive(Debug, Clone)]
pub struct LtsOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub n_best: usize,
    pub warmup_csteps: usize,
    pub max_csteps: usize,
    /// Cutoff defining the 0/1 case weights on standardized residuals.
    pub weight_cutoff: f64,
}

impl Default for LtsOptions {
    fn default() -> Self {
        Self {
            n_starts: 500,
            seed: 0,
            n_best: 10,
            warmup_csteps: 2,
            max_csteps: 200,
            weight_cutoff: 2.5,
        }
    }
}

/// Default subset size, the regression analogue of the MCD default.
pub fn default_h(n: usize, d: usize) -> usize {
    (n + d + 2) / 2
}

/// Consistency constant making the trimmed residual scale unbiased for
/// gaussian errors: 1/sqrt(1 - (2n/h) q phi(q)) with q = Phi^-1((h+n)/2n).
pub fn chn_factor(n: usize, h: usize) -> f64 {
    if h >= n {
        return 1.0;
    }
    let q = normal_quantile((h + n) as f64 / (2.0 * n as f64));
    1.0 / (1.0 - (2.0 * n as f64 / h as f64) * q * normal_pdf(q)).sqrt()
}

/// Truncation consistency factor for weights cut at |r/sigma| <= t.
fn truncation_factor(t: f64) -> f64 {
    let phi = normal_pdf(t);
    let mass = 2.0 * crate::dist::normal_cdf(t) - 1.0;
    1.0 / (1.0 - 2.0 * t * phi / mass).sqrt()
}

fn least_squares(z: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let p = z.ncols();
    let svd = z.clone().svd(true, true);
    let rank = svd.rank(1e-10 * svd.singular_values[0].max(1e-300));
    if rank < p {
        return None;
    }
    svd.solve(y, 1e-12).ok()
}

fn residuals_of(z: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    y - z * beta
}

/// Sum of the h smallest squared residuals.
fn trimmed_objective(res: &DVector<f64>, h: usize) -> f64 {
    let mut sq: Vec<f64> = res.iter().map(|r| r * r).collect();
    sq.sort_unstable_by(f64::total_cmp);
    sq.iter().take(h).sum()
}

fn h_smallest_residuals(res: &DVector<f64>, h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..res.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (res[a] * res[a], res[b] * res[b]);
        ra.total_cmp(&rb).then(a.cmp(&b))
    });
    let mut subset: Vec<usize> = idx.into_iter().take(h).collect();
    subset.sort_unstable();
    subset
}

fn rows_of(z: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), z.ncols(), |i, j| z[(rows[i], j)])
}

fn entries_of(y: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| y[rows[i]])
}

/// One LTS concentration step outcome.
#[derive(Debug, Clone)]
pub struct LtsStep {
    pub subset: Vec<usize>,
    pub beta: Vec<f64>,
    pub objective: f64,
}

/// Refit least squares on the h cases with the smallest squared residuals
/// under `beta`. The trimmed objective never increases.
pub fn lts_c_step(data: &RegressionData, beta: &[f64], h: usize) -> Result<LtsStep> {
    if beta.len() != data.p() {
        return Err(Error::InvalidParameter(format!(
            "{} coefficients for p = {}",
            beta.len(),
            data.p()
        )));
    }
    let z = data.design();
    let res = residuals_of(&z, &data.y, &DVector::from_column_slice(beta));
    let subset = h_smallest_residuals(&res, h);
    let beta_new = least_squares(&rows_of(&z, &subset), &entries_of(&data.y, &subset))
        .ok_or_else(|| Error::Singular("rank-deficient h-subset design".into()))?;
    let res_new = residuals_of(&z, &data.y, &beta_new);
    Ok(LtsStep {
        subset,
        beta: beta_new.iter().cloned().collect(),
        objective: trimmed_objective(&res_new, h),
    })
}

fn concentrate(
    data: &RegressionData,
    z: &DMatrix<f64>,
    mut beta: DVector<f64>,
    h: usize,
    max_steps: usize,
) -> Option<(f64, Vec<usize>, DVector<f64>)> {
    let mut subset: Vec<usize> = Vec::new();
    for _ in 0..max_steps {
        let res = residuals_of(z, &data.y, &beta);
        let next = h_smallest_residuals(&res, h);
        if next == subset {
            break;
        }
        subset = next;
        beta = least_squares(&rows_of(z, &subset), &entries_of(&data.y, &subset))?;
    }
    let res = residuals_of(z, &data.y, &beta);
    Some((trimmed_objective(&res, h), subset, beta))
}

/// FAST-LTS: elemental p-point fits, two concentration steps each, full
/// convergence for the best few. Deterministic given (seed, n_starts).
pub fn fast_lts(data: &RegressionData, h: usize, opts: &LtsOptions) -> Result<RegressionFit> {
    let (n, p) = (data.n(), data.p());
    if h < p + 1 || h > n {
        return Err(Error::SubsetSizeOutOfRange { h, min: p + 1, max: n });
    }
    let z = data.design();

    let beta = if h == n {
        least_squares(&z, &data.y)
            .ok_or_else(|| Error::Singular("rank-deficient design matrix".into()))?
    } else {
        let starts: Vec<Option<(f64, Vec<usize>, DVector<f64>)>> = (0..opts.n_starts as u64)
            .into_par_iter()
            .map(|i| elemental_lts_start(data, &z, h, opts, i))
            .collect();
        let mut candidates: Vec<(f64, Vec<usize>, DVector<f64>)> =
            starts.into_iter().flatten().collect();
        if candidates.is_empty() {
            return Err(Error::Singular("every random start hit a rank-deficient design".into()));
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.truncate(opts.n_best.max(1));
        candidates.dedup_by(|a, b| a.1 == b.1);

        let refined: Vec<Option<(f64, Vec<usize>, DVector<f64>)>> = candidates
            .into_par_iter()
            .map(|(_, _, beta)| concentrate(data, &z, beta, h, opts.max_csteps))
            .collect();
        let best = refined
            .into_iter()
            .flatten()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .ok_or_else(|| Error::Singular("concentration failed on every start".into()))?;
        best.2
    };

    finalize_fit(data, &z, beta, h, opts.weight_cutoff)
}

fn elemental_lts_start(
    data: &RegressionData,
    z: &DMatrix<f64>,
    h: usize,
    opts: &LtsOptions,
    index: u64,
) -> Option<(f64, Vec<usize>, DVector<f64>)> {
    let (n, p) = (data.n(), data.p());
    let mut rng = start_rng(opts.seed, index);
    let mut subset: Vec<usize> = sample_indices(&mut rng, n, p).into_vec();
    let mut beta = loop {
        if let Some(b) = least_squares(&rows_of(z, &subset), &entries_of(&data.y, &subset)) {
            break b;
        }
        if subset.len() == n {
            return None;
        }
        let mut extra = rng.gen_range(0..n);
        while subset.contains(&extra) {
            extra = rng.gen_range(0..n);
        }
        subset.push(extra);
    };
    let mut h_subset: Vec<usize> = Vec::new();
    for _ in 0..opts.warmup_csteps {
        let res = residuals_of(z, &data.y, &beta);
        h_subset = h_smallest_residuals(&res, h);
        beta = least_squares(&rows_of(z, &h_subset), &entries_of(&data.y, &h_subset))?;
    }
    let res = residuals_of(z, &data.y, &beta);
    Some((trimmed_objective(&res, h), h_subset, beta))
}

fn finalize_fit(
    data: &RegressionData,
    z: &DMatrix<f64>,
    beta: DVector<f64>,
    h: usize,
    weight_cutoff: f64,
) -> Result<RegressionFit> {
    let res = residuals_of(z, &data.y, &beta);
    let best_subset = h_smallest_residuals(&res, h);
    let objective = trimmed_objective(&res, h);
    let chn = chn_factor(data.n(), h);
    let y_scale = 1.0 + data.y.iter().map(|v| v.abs()).sum::<f64>() / data.n() as f64;
    let exact_fit = (objective / h as f64).sqrt() <= EXACT_FIT_TOL * y_scale;
    let sigma_lts = if exact_fit { 0.0 } else { chn * (objective / h as f64).sqrt() };
    let weights = if exact_fit {
        res.iter().map(|r| r.abs() <= EXACT_FIT_TOL * y_scale).collect()
    } else {
        res.iter().map(|r| (r / sigma_lts).abs() <= weight_cutoff).collect()
    };
    Ok(RegressionFit {
        beta: beta.iter().cloned().collect(),
        residuals: res.iter().cloned().collect(),
        h,
        sigma_lts,
        chn,
        weights,
        best_subset,
        objective,
        exact_fit,
        reweighted: false,
        inference: None,
    })
}

/// Robust residual scale of a fit: chn * sqrt(mean of the h smallest squared
/// residuals).
pub fn lts_scale(fit: &RegressionFit) -> f64 {
    if fit.exact_fit {
        return 0.0;
    }
    let res = DVector::from_column_slice(&fit.residuals);
    fit.chn * (trimmed_objective(&res, fit.h) / fit.h as f64).sqrt()
}

/// Weighted least squares on the weight-1 cases of an LTS fit. Keeps the LTS
/// breakdown behavior while recovering gaussian efficiency and the usual
/// inferential output.
pub fn reweighted_ls(
    data: &RegressionData,
    fit: &RegressionFit,
    cutoff: f64,
) -> Result<RegressionFit> {
    if fit.sigma_lts <= 0.0 {
        return Err(Error::DegenerateScale(
            "LTS scale is zero (exact fit); reweighting is undefined".into(),
        ));
    }
    let keep: Vec<usize> = (0..data.n())
        .filter(|&i| (fit.residuals[i] / fit.sigma_lts).abs() <= cutoff)
        .collect();
    let p = data.p();
    if keep.len() < p + 1 {
        return Err(Error::TooFewObservations { needed: p + 1, got: keep.len() });
    }
    let z = data.design();
    let zk = rows_of(&z, &keep);
    let yk = entries_of(&data.y, &keep);
    let beta = least_squares(&zk, &yk)
        .ok_or_else(|| Error::Singular("rank-deficient reweighted design".into()))?;
    let res = residuals_of(&z, &data.y, &beta);

    let m = keep.len();
    let rss: f64 = keep.iter().map(|&i| res[i] * res[i]).sum();
    let ct = truncation_factor(cutoff);
    let sigma_rw = ct * (rss / (m - p) as f64).sqrt();
    let weights: Vec<bool> = if sigma_rw > 0.0 {
        res.iter().map(|r| (r / sigma_rw).abs() <= cutoff).collect()
    } else {
        (0..data.n()).map(|i| keep.binary_search(&i).is_ok()).collect()
    };
    let inference = Some(wls_inference(&zk, &yk, &beta, data.intercept, m, p, rss)?);

    Ok(RegressionFit {
        beta: beta.iter().cloned().collect(),
        residuals: res.iter().cloned().collect(),
        h: fit.h,
        sigma_lts: sigma_rw,
        chn: ct,
        weights,
        best_subset: fit.best_subset.clone(),
        objective: fit.objective,
        exact_fit: false,
        reweighted: true,
        inference,
    })
}

fn wls_inference(
    zk: &DMatrix<f64>,
    yk: &DVector<f64>,
    beta: &DVector<f64>,
    intercept: bool,
    m: usize,
    p: usize,
    rss: f64,
) -> Result<Inference> {
    let df = m - p;
    let s2 = rss / df as f64;
    let xtx = zk.transpose() * zk;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Singular("normal equations of the reweighted fit".into()))?;
    let std_errors: Vec<f64> = (0..p).map(|j| (s2 * inv[(j, j)]).sqrt()).collect();
    let t_values: Vec<f64> = (0..p)
        .map(|j| if std_errors[j] > 0.0 { beta[j] / std_errors[j] } else { f64::INFINITY })
        .collect();
    let p_values: Vec<f64> = t_values.iter().map(|&t| t_two_sided_p(t, df as f64)).collect();

    let tss = if intercept {
        let ybar = yk.iter().sum::<f64>() / m as f64;
        yk.iter().map(|y| (y - ybar) * (y - ybar)).sum::<f64>()
    } else {
        yk.iter().map(|y| y * y).sum::<f64>()
    };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let df_model = if intercept { p - 1 } else { p };
    let (f_statistic, f_p_value) = if df_model > 0 && rss > 0.0 && tss > rss {
        let f = ((tss - rss) / df_model as f64) / s2;
        (f, f_upper_p(f, df_model as f64, df as f64))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Inference {
        std_errors,
        t_values,
        p_values,
        r_squared,
        f_statistic,
        f_p_value,
        df_residual: df,
    })
}

/// Standardized LTS residuals versus robust distances of the predictors,
/// classified into the four outlier-map classes.
pub fn regression_outlier_map(
    data: &RegressionData,
    fit: &RegressionFit,
    x_scatter: &LocationScatter,
) -> Result<RegressionOutlierMap> {
    if fit.sigma_lts <= 0.0 {
        return Err(Error::DegenerateScale(
            "cannot standardize residuals with a zero LTS scale".into(),
        ));
    }
    let rd = mahalanobis_distances(data.predictors(), x_scatter)?;
    let resid_cutoff = 2.5;
    let rd_cutoff = distance_cutoff(data.d());
    let std_resid: Vec<f64> = fit.residuals.iter().map(|r| r / fit.sigma_lts).collect();
    let class: Vec<RegressionClass> = std_resid
        .iter()
        .zip(&rd.values)
        .map(|(&sr, &d)| match (sr.abs() > resid_cutoff, d > rd_cutoff) {
            (false, false) => RegressionClass::Regular,
            (true, false) => RegressionClass::Vertical,
            (false, true) => RegressionClass::GoodLeverage,
            (true, true) => RegressionClass::BadLeverage,
        })
        .collect();
    Ok(RegressionOutlierMap {
        std_resid,
        rd_x: rd.values,
        resid_cutoff,
        rd_cutoff,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data(slope: f64, icept: f64, xs: &[f64], noise: &[f64]) -> RegressionData {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let y: Vec<f64> =
            xs.iter().zip(noise).map(|(&x, &e)| icept + slope * x + e).collect();
        RegressionData::new(DataMatrix::from_rows(&rows).unwrap(), y, true).unwrap()
    }

    #[test]
    fn h_equals_n_is_ordinary_least_squares() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let noise = [0.1, -0.2, 0.05, 0.0, -0.1, 0.15, -0.05];
        let data = line_data(1.5, 0.3, &xs, &noise);
        let fit = fast_lts(&data, data.n(), &LtsOptions::default()).unwrap();
        // closed-form simple-regression solution
        let n = xs.len() as f64;
        let y: Vec<f64> = xs.iter().zip(&noise).map(|(&x, &e)| 0.3 + 1.5 * x + e).collect();
        let xbar = xs.iter().sum::<f64>() / n;
        let ybar = y.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&y).map(|(&x, &yi)| (x - xbar) * (yi - ybar)).sum();
        let sxx: f64 = xs.iter().map(|&x| (x - xbar) * (x - xbar)).sum();
        let slope = sxy / sxx;
        let icept = ybar - slope * xbar;
        assert!((fit.beta[0] - icept).abs() < 1e-9);
        assert!((fit.beta[1] - slope).abs() < 1e-9);
        assert_eq!(fit.chn, 1.0);
    }

    #[test]
    fn rejects_bad_h() {
        let data = line_data(1.0, 0.0, &[0.0, 1.0, 2.0, 3.0], &[0.0; 4]);
        assert!(matches!(
            fast_lts(&data, 2, &LtsOptions::default()),
            Err(Error::SubsetSizeOutOfRange { .. })
        ));
    }

    #[test]
    fn exact_fit_is_flagged_with_zero_scale() {
        // 6 of 8 points exactly on y = 1 + 2x
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let mut noise = [0.0; 8];
        noise[6] = 3.0;
        noise[7] = -2.0;
        let data = line_data(2.0, 1.0, &xs, &noise);
        let fit = fast_lts(&data, 6, &LtsOptions { n_starts: 200, ..Default::default() }).unwrap();
        assert!(fit.exact_fit);
        assert_eq!(fit.sigma_lts, 0.0);
        assert!(fit.objective <= 1e-18);
        assert!((fit.beta[0] - 1.0).abs() < 1e-8 && (fit.beta[1] - 2.0).abs() < 1e-8);
        assert!(reweighted_ls(&data, &fit, 2.5).is_err());
    }

    #[test]
    fn scale_equivariance_of_lts_scale() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let noise = [0.3, -0.2, 0.1, 0.4, -0.3, 0.2, -0.1, 0.25, -0.15, 0.05, 0.1, -0.2];
        let data = line_data(1.0, 0.0, &xs, &noise);
        let h = default_h(12, 1);
        let fit = fast_lts(&data, h, &LtsOptions::default()).unwrap();
        let scaled =
            RegressionData::new(data.predictors().clone(), data.y.iter().map(|v| v * 10.0).collect(), true)
                .unwrap();
        let fit10 = fast_lts(&scaled, h, &LtsOptions::default()).unwrap();
        assert!((fit10.sigma_lts - 10.0 * fit.sigma_lts).abs() < 1e-6 * fit.sigma_lts.max(1.0));
        // all-zero residuals give zero scale
        let exact = line_data(2.0, 0.5, &xs, &[0.0; 12]);
        let fitz = fast_lts(&exact, h, &LtsOptions::default()).unwrap();
        assert_eq!(lts_scale(&fitz), 0.0);
    }

    #[test]
    fn reweighting_without_flags_is_full_ls() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 2.0).collect();
        let noise = [0.05, -0.04, 0.03, 0.0, -0.02, 0.01, 0.04, -0.05, 0.02, -0.01];
        let data = line_data(0.8, 1.2, &xs, &noise);
        let fit = fast_lts(&data, data.n(), &LtsOptions::default()).unwrap();
        assert!(fit.weights.iter().all(|&w| w));
        let rew = reweighted_ls(&data, &fit, 2.5).unwrap();
        for (a, b) in rew.beta.iter().zip(&fit.beta) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(rew.inference.is_some());
        let inf = rew.inference.unwrap();
        assert!(inf.r_squared > 0.99);
    }

    #[test]
    fn outlier_map_classes_by_construction() {
        // bulk along y = x at x in [0, 5]; one vertical outlier at central x;
        // one zero-residual point at extreme x
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        let noise = [0.02, -0.03, 0.01, 0.04, -0.02, 0.03, -0.04, 0.0, 0.02, -0.01];
        for i in 0..10 {
            let x = i as f64 * 0.5;
            rows.push(vec![x]);
            y.push(x + noise[i]);
        }
        rows.push(vec![2.5]);
        y.push(2.5 + 5.0); // vertical
        rows.push(vec![25.0]);
        y.push(25.0); // good leverage: exactly on the line
        let data =
            RegressionData::new(DataMatrix::from_rows(&rows).unwrap(), y, true).unwrap();
        let h = default_h(data.n(), 1);
        let fit = fast_lts(&data, h, &LtsOptions::default()).unwrap();
        let x_scatter = crate::covariance::fast_mcd(
            data.predictors(),
            crate::covariance::default_h(data.n(), 1),
            &crate::covariance::McdOptions::default(),
        )
        .unwrap();
        let map = regression_outlier_map(&data, &fit, &x_scatter).unwrap();
        assert_eq!(map.class[10], RegressionClass::Vertical);
        assert_eq!(map.class[11], RegressionClass::GoodLeverage);
        assert!(map.class[..10].iter().all(|c| *c == RegressionClass::Regular));
    }

    #[test]
    fn chn_factor_limits() {
        assert_eq!(chn_factor(50, 50), 1.0);
        // half-sample factor approaches the known asymptotic value ~2.648 (to
        // machine accuracy the formula is exact, not sample-size dependent)
        let c = chn_factor(1000, 500);
        assert!((c - 2.6477).abs() < 0.01, "c = {c}");
        // factor shrinks toward 1 as h -> n
        assert!(chn_factor(100, 99) < chn_factor(100, 75));
        assert!(chn_factor(100, 75) < chn_factor(100, 50));
    }
}
