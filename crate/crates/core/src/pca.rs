//! Robust principal components and the orthogonal/score distance outlier map.
//!
//! Two fitting routes: an outlyingness-trimmed estimator (Stahel-Donoho
//! trimming followed by an eigendecomposition of the kept rows, a lightweight
//! take on the projection-pursuit/robust-covariance hybrid) and spherical
//! PCA (project onto a unit sphere around the spatial median, then decompose
//! classically). Either way, eigenvalues are re-estimated robustly as
//! squared Qn scales of the score columns, so score distances behave like
//! robust distances in the component space.

use nalgebra::{DMatrix, DVector};

use crate::covariance::stahel_donoho;
use crate::dist::{chi2_quantile, normal_quantile};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::univariate::{self, Sample};

/// How a PCA model was fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaMethod {
    Robust,
    Spherical,
    Classical,
}

impl PcaMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PcaMethod::Robust => "robust",
            PcaMethod::Spherical => "spherical",
            PcaMethod::Classical => "classical",
        }
    }
}

/// A fitted k-component model: center, orthonormal loadings, eigenvalues.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub center: DVector<f64>,
    /// d x k, columns orthonormal, largest-magnitude entry of each positive.
    pub loadings: DMatrix<f64>,
    /// Robust score variances, sorted descending, all positive.
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub method: PcaMethod,
}

/// Point classes of the PCA outlier map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaClass {
    Regular,
    GoodLeverage,
    Orthogonal,
    BadLeverage,
}

impl PcaClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PcaClass::Regular => "regular",
            PcaClass::GoodLeverage => "good_leverage",
            PcaClass::Orthogonal => "orthogonal",
            PcaClass::BadLeverage => "bad_leverage",
        }
    }
}

/// Orthogonal and score distances of every row with the four-way classes.
#[derive(Debug, Clone)]
pub struct PcaOutlierMap {
    pub od: Vec<f64>,
    pub sd: Vec<f64>,
    pub od_cutoff: f64,
    pub sd_cutoff: f64,
    pub class: Vec<PcaClass>,
}

fn sym_eigen_desc(sigma: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = sigma.clone().symmetric_eigen();
    let d = sigma.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn moments(rows: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows[0].len();
    let m = rows.len();
    let mut mu = DVector::zeros(d);
    for r in rows {
        mu += r;
    }
    mu /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = r - &mu;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (m - 1).max(1) as f64;
    (mu, cov)
}

/// Flip each loading so its largest-magnitude entry is positive.
fn fix_signs(loadings: &mut DMatrix<f64>) {
    for j in 0..loadings.ncols() {
        let mut arg = 0;
        for i in 1..loadings.nrows() {
            if loadings[(i, j)].abs() > loadings[(arg, j)].abs() {
                arg = i;
            }
        }
        if loadings[(arg, j)] < 0.0 {
            for i in 0..loadings.nrows() {
                loadings[(i, j)] = -loadings[(i, j)];
            }
        }
    }
}

/// Robust eigenvalues: squared Qn scale of each score column over all rows.
/// Columns are reordered (loadings too) so values come out descending.
fn robust_eigenvalues(
    x: &DataMatrix,
    center: &DVector<f64>,
    loadings: &mut DMatrix<f64>,
) -> Result<Vec<f64>> {
    let k = loadings.ncols();
    let mut lambda = Vec::with_capacity(k);
    for j in 0..k {
        let v = loadings.column(j);
        let scores: Vec<f64> =
            (0..x.n()).map(|i| (x.row(i) - center).dot(&v.clone_owned())).collect();
        let qn = univariate::qn(&Sample::new(scores)?)?;
        if qn <= 0.0 {
            return Err(Error::DegenerateScale(format!(
                "score column {} has zero Qn spread",
                j + 1
            )));
        }
        lambda.push(qn * qn);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
    let reordered = DMatrix::from_fn(loadings.nrows(), k, |r, c| loadings[(r, order[c])]);
    *loadings = reordered;
    Ok(order.iter().map(|&i| lambda[i]).collect())
}

fn model_from_subset(
    x: &DataMatrix,
    kept: &[usize],
    k: usize,
    method: PcaMethod,
) -> Result<PcaModel> {
    let rows: Vec<DVector<f64>> = kept.iter().map(|&i| x.row(i)).collect();
    let (center, cov) = moments(&rows);
    let (eigvals, eigvecs) = sym_eigen_desc(&cov);
    if eigvals[k - 1] <= 1e-12 * eigvals[0].max(1e-300) {
        return Err(Error::DegenerateScale(format!(
            "kept rows span fewer than k = {k} directions"
        )));
    }
    let mut loadings = eigvecs.columns(0, k).into_owned();
    fix_signs(&mut loadings);
    let eigenvalues = robust_eigenvalues(x, &center, &mut loadings)?;
    Ok(PcaModel { center, loadings, eigenvalues, k, method })
}

/// Outlyingness-trimmed robust PCA: rank rows by Stahel-Donoho outlyingness,
/// keep the h least outlying, and take the top-k eigenvectors of their
/// covariance. The center is the mean of the kept rows.
pub fn robust_pca(x: &DataMatrix, k: usize, h: usize, n_dirs: usize, seed: u64) -> Result<PcaModel> {
    let (n, d) = (x.n(), x.d());
    if k < 1 || k > d.min(n - 1) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside [1, min(n-1, d)] = [1, {}]",
            d.min(n - 1)
        )));
    }
    if h < k + 1 || h > n {
        return Err(Error::SubsetSizeOutOfRange { h, min: k + 1, max: n });
    }
    let outl = stahel_donoho(x, n_dirs, seed)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| outl.outl[a].total_cmp(&outl.outl[b]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = idx.into_iter().take(h).collect();
    kept.sort_unstable();
    model_from_subset(x, &kept, k, PcaMethod::Robust)
}

/// Classical PCA (mean center, covariance eigenvectors, classical
/// eigenvalues); the non-robust baseline for comparisons.
pub fn classical_pca(x: &DataMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (x.n(), x.d());
    if k < 1 || k > d.min(n - 1) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside [1, min(n-1, d)] = [1, {}]",
            d.min(n - 1)
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let rows: Vec<DVector<f64>> = all.iter().map(|&i| x.row(i)).collect();
    let (center, cov) = moments(&rows);
    let (eigvals, eigvecs) = sym_eigen_desc(&cov);
    let mut loadings = eigvecs.columns(0, k).into_owned();
    fix_signs(&mut loadings);
    Ok(PcaModel {
        center,
        loadings,
        eigenvalues: eigvals.into_iter().take(k).collect(),
        k,
        method: PcaMethod::Classical,
    })
}

/// Spatial median by Weiszfeld iteration, started from the coordinatewise
/// median.
pub fn spatial_median(x: &DataMatrix, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let (n, d) = (x.n(), x.d());
    let mut c = DVector::from_fn(d, |j, _| {
        univariate::median(&Sample::new(x.column(j)).expect("validated columns"))
    });
    if n == 1 {
        return Ok(c);
    }
    for _ in 0..max_iter {
        let mut wsum = 0.0;
        let mut acc = DVector::zeros(d);
        for i in 0..n {
            let dist = (x.row(i) - &c).norm();
            if dist < 1e-12 {
                continue;
            }
            let w = 1.0 / dist;
            wsum += w;
            acc += x.row(i) * w;
        }
        if wsum == 0.0 {
            // every point coincides with the current center
            return Ok(c);
        }
        let next = acc / wsum;
        let delta = (&next - &c).norm();
        c = next;
        if delta <= tol {
            return Ok(c);
        }
    }
    Ok(c)
}

/// Spherical PCA: project every row onto the unit sphere around the spatial
/// median, run classical PCA on the projected cloud, and re-estimate the
/// eigenvalues robustly. Radial moves of any single point cannot change the
/// projected data, which caps its influence.
pub fn spherical_pca(x: &DataMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (x.n(), x.d());
    if k < 1 || k > d {
        return Err(Error::InvalidParameter(format!("k = {k} outside [1, d] = [1, {d}]")));
    }
    let center = spatial_median(x, 1e-8, 500)?;
    let mut projected: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let c = x.row(i) - &center;
        let norm = c.norm();
        if norm > 1e-12 {
            projected.push(c / norm);
        }
    }
    if projected.is_empty() {
        return Err(Error::DegenerateScale("all points coincide with the robust center".into()));
    }
    let (_, cov) = moments(&projected);
    let (_, eigvecs) = sym_eigen_desc(&cov);
    let mut loadings = eigvecs.columns(0, k).into_owned();
    fix_signs(&mut loadings);
    let eigenvalues = robust_eigenvalues(x, &center, &mut loadings)?;
    Ok(PcaModel { center, loadings, eigenvalues, k, method: PcaMethod::Spherical })
}

/// Orthogonal distance (to the component subspace) and score distance
/// (robust standardized distance inside it) for every row, classified by the
/// two cutoffs.
///
/// The score cutoff is sqrt(chi2_{k,0.975}); the orthogonal cutoff uses the
/// Wilson-Hilferty normal approximation on od^(2/3).
pub fn pca_distances(model: &PcaModel, x: &DataMatrix) -> Result<PcaOutlierMap> {
    if x.d() != model.center.len() {
        return Err(Error::InvalidParameter(format!(
            "data has {} columns, model has {}",
            x.d(),
            model.center.len()
        )));
    }
    if model.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::DegenerateScale("model carries a zero eigenvalue".into()));
    }
    let n = x.n();
    let mut od = Vec::with_capacity(n);
    let mut sd = Vec::with_capacity(n);
    for i in 0..n {
        let c = x.row(i) - &model.center;
        let t = model.loadings.transpose() * &c;
        let proj = &model.loadings * &t;
        od.push((&c - proj).norm());
        sd.push(
            t.iter()
                .zip(&model.eigenvalues)
                .map(|(ti, l)| ti * ti / l)
                .sum::<f64>()
                .sqrt(),
        );
    }
    let sd_cutoff = chi2_quantile(model.k as f64, 0.975).sqrt();
    let od_cutoff = od_cutoff_wilson_hilferty(&od)?;
    let class: Vec<PcaClass> = od
        .iter()
        .zip(&sd)
        .map(|(&o, &s)| match (o > od_cutoff, s > sd_cutoff) {
            (false, false) => PcaClass::Regular,
            (false, true) => PcaClass::GoodLeverage,
            (true, false) => PcaClass::Orthogonal,
            (true, true) => PcaClass::BadLeverage,
        })
        .collect();
    Ok(PcaOutlierMap { od, sd, od_cutoff, sd_cutoff, class })
}

fn od_cutoff_wilson_hilferty(od: &[f64]) -> Result<f64> {
    let transformed = Sample::new(od.iter().map(|o| o.powf(2.0 / 3.0)).collect())?;
    let med = univariate::median(&transformed);
    let mad = univariate::mad(&transformed);
    let z = normal_quantile(0.975);
    Ok((med + mad * z).max(0.0).powf(1.5))
}

/// Largest principal angle (radians) between the column spaces of two
/// orthonormal loading matrices.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * b;
    let svd = m.svd(false, false);
    let smallest = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(-1.0, 1.0);
    smallest.acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::start_rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dm(rows: &[Vec<f64>]) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    fn gauss(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn plane_basis() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    #[test]
    fn exact_plane_is_recovered() {
        let mut rng = start_rng(1, 0);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let a: f64 = rng.gen_range(-3.0..3.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                vec![a, b, 0.0]
            })
            .collect();
        let x = dm(&rows);
        let model = robust_pca(&x, 2, 24, 200, 9).unwrap();
        assert!(principal_angle(&model.loadings, &plane_basis()) < 1e-6);
        // orthonormality
        let g = model.loadings.transpose() * &model.loadings;
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-8);
    }

    #[test]
    fn column_permutation_permutes_loadings() {
        let mut rng = start_rng(2, 0);
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|_| {
                let a: f64 = rng.gen_range(-3.0..3.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                let e: f64 = rng.gen_range(-0.01..0.01);
                vec![a, b, e]
            })
            .collect();
        let x = dm(&rows);
        let permuted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[2], r[0], r[1]]).collect();
        let xp = dm(&permuted);
        let m1 = robust_pca(&x, 2, 20, 150, 5).unwrap();
        let m2 = robust_pca(&xp, 2, 20, 150, 5).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                let pi = (i + 1) % 3; // column i moved to position (i+1) mod 3
                assert!(
                    (m1.loadings[(i, j)] - m2.loadings[(pi, j)]).abs() < 1e-9,
                    "loading ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn robust_pca_rejects_bad_k() {
        let x = dm(&[vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 0.5]]);
        assert!(robust_pca(&x, 3, 3, 10, 0).is_err());
        assert!(robust_pca(&x, 0, 3, 10, 0).is_err());
    }

    #[test]
    fn spherical_pca_ignores_radial_moves() {
        let mut rng = start_rng(3, 0);
        let mut rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let a: f64 = 3.0 * gauss(&mut rng);
                let b: f64 = gauss(&mut rng);
                let e: f64 = 0.05 * gauss(&mut rng);
                vec![a, b, e]
            })
            .collect();
        rows.push(vec![10.0, 10.0, 10.0]);
        let x = dm(&rows);
        let center = spatial_median(&x, 1e-8, 500).unwrap();
        let m1 = spherical_pca(&x, 2).unwrap();
        // move the outlier 10x further out along its ray from the center
        let mut rows2 = rows.clone();
        for j in 0..3 {
            rows2[40][j] = center[j] + 10.0 * (rows[40][j] - center[j]);
        }
        let m2 = spherical_pca(&dm(&rows2), 2).unwrap();
        assert!((&m1.loadings - &m2.loadings).norm() < 1e-6);
    }

    #[test]
    fn spherical_pca_full_dimension_gives_orthonormal_basis() {
        let mut rng = start_rng(4, 0);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = dm(&rows);
        let m = spherical_pca(&x, 3).unwrap();
        let g = m.loadings.transpose() * &m.loadings;
        assert!((g - DMatrix::identity(3, 3)).norm() < 1e-8);
    }

    #[test]
    fn spherical_matches_classical_subspace_on_clean_data() {
        let mut rng = start_rng(5, 0);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let a: f64 = 4.0 * gauss(&mut rng);
                let b: f64 = 1.5 * gauss(&mut rng);
                let e: f64 = 0.2 * gauss(&mut rng);
                vec![a, b, e]
            })
            .collect();
        let x = dm(&rows);
        let sph = spherical_pca(&x, 2).unwrap();
        let cls = classical_pca(&x, 2).unwrap();
        let angle = principal_angle(&sph.loadings, &cls.loadings);
        assert!(angle.to_degrees() < 2.0, "angle = {}", angle.to_degrees());
    }

    #[test]
    fn distances_decompose_and_classify() {
        let mut rng = start_rng(6, 0);
        let mut rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let a: f64 = 3.0 * gauss(&mut rng);
                let b: f64 = gauss(&mut rng);
                let e: f64 = 0.05 * gauss(&mut rng);
                vec![a, b, e]
            })
            .collect();
        rows.push(vec![0.1, 0.0, 0.0]); // in-plane, near center: regular, od ~ 0
        let x = dm(&rows);
        let model = robust_pca(&x, 2, 40, 300, 11).unwrap();
        let map = pca_distances(&model, &x).unwrap();
        // orthogonal + parallel parts rebuild the full distance
        for i in 0..x.n() {
            let c = x.row(i) - &model.center;
            let t = model.loadings.transpose() * &c;
            let lhs = map.od[i] * map.od[i] + t.norm_squared();
            assert!((lhs - c.norm_squared()).abs() < 1e-8);
        }
        assert_eq!(map.class[50], PcaClass::Regular);
        assert!(map.od[50] < 0.12);
    }

    #[test]
    fn od_invariant_under_complement_rotation() {
        // rotate the orthogonal complement of the fitted plane (z-axis sign
        // flip): od must not change
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, (i % 5) as f64, if i == 7 { 4.0 } else { 0.1 * i as f64 % 0.3 }])
            .collect();
        let x = dm(&rows);
        let model = robust_pca(&x, 2, 16, 100, 2).unwrap();
        let map1 = pca_distances(&model, &x).unwrap();
        let flipped: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1], -r[2]]).collect();
        let xf = dm(&flipped);
        let mut mf = model.clone();
        mf.center[2] = -mf.center[2];
        for j in 0..2 {
            mf.loadings[(2, j)] = -mf.loadings[(2, j)];
        }
        let map2 = pca_distances(&mf, &xf).unwrap();
        for (a, b) in map1.od.iter().zip(&map2.od) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
