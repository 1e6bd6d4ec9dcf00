use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureField;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmOptions {
    /// Features are projected on at most this many principal components.
    pub pca_dims: usize,
    /// Stop once the per-cell objective gain drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Extra randomly initialized runs; the best objective wins.
    pub restarts: usize,
    pub seed: u64,
    /// Covariance ridge, relative to the mean per-dimension data variance.
    pub regularization: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            pca_dims: 25,
            tolerance: 1e-6,
            max_iterations: 200,
            restarts: 0,
            seed: 0,
            regularization: 1e-6,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.pca_dims == 0 || self.max_iterations == 0 {
            return Err(Error::Config("pca_dims and max_iterations must be positive".into()));
        }
        if !(self.tolerance >= 0.0 && self.regularization > 0.0) {
            return Err(Error::Config("tolerance must be >= 0 and regularization > 0".into()));
        }
        Ok(())
    }
}

/// How the responsibilities of the first EM iteration are set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmInit {
    /// Hard split at the median of the projection on the first principal axis.
    MedianSplit,
    /// Uniformly random soft responsibilities.
    Random(u64),
}

/// A fitted two-component Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct EmModel {
    pub weights: [f64; 2],
    pub means: [Vec<f64>; 2],
    /// Row-major `dim x dim` matrices.
    pub covariances: [Vec<f64>; 2],
    pub dim: usize,
    /// Penalized log-likelihood after every E step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl EmModel {
    /// Index of the component with the smaller weight (the first on ties).
    pub fn minority(&self) -> usize {
        usize::from(self.weights[1] < self.weights[0])
    }
}

/// Projects the rows of `x` on its top `k` principal axes. Axes are ordered
/// by decreasing variance and signed so their largest entry is positive.
pub fn pca_project(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (n, f) = x.shape();
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let k = k.min(f);
    let mut basis = DMatrix::zeros(f, k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        let lead = v.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
        if lead < 0.0 {
            v = -v;
        }
        basis.set_column(j, &v);
    }
    centered * basis
}

struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Fits the mixture to the rows of `x` and returns it together with the
/// posterior probability of component 0 for every row.
///
/// Covariances are MAP estimates `(S_k + c I) / n_k` with `c = lambda * n / 2`,
/// `lambda = regularization * trace(cov(x)) / dim`: a ridge of `lambda` for a
/// balanced split. With this prior EM never decreases the penalized
/// log-likelihood that is recorded.
pub fn fit_gmm2(x: &DMatrix<f64>, opts: &EmOptions, init: EmInit) -> Result<(EmModel, Vec<f64>)> {
    opts.validate()?;
    let (n, d) = x.shape();
    if n < 2 * d || n < 2 {
        return Err(Error::invalid(format!(
            "{n} cells are too few for a {d}-dimensional mixture (need {})",
            2 * d.max(1)
        )));
    }
    let mean = x.row_mean();
    let total_var: f64 = x
        .row_iter()
        .map(|r| (r - &mean).norm_squared())
        .sum::<f64>()
        / n as f64;
    let lambda = opts.regularization * total_var / d as f64;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::DegenerateClustering("features have no variance".into()));
    }
    let prior = lambda * n as f64 / 2.0;

    let mut resp = initial_responsibilities(x, init);
    let mut comps = m_step(x, &resp, prior)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        let (ll, r) = e_step(x, &comps)?;
        resp = r;
        let objective = ll - comps.iter().map(|c| penalty(c, prior)).sum::<Result<f64>>()?;
        let gain = trace.last().map(|&prev: &f64| (objective - prev) / n as f64);
        trace.push(objective);
        if matches!(gain, Some(g) if g < opts.tolerance) {
            converged = true;
            break;
        }
        comps = m_step(x, &resp, prior)?;
    }
    let posterior0 = resp.iter().map(|r| r[0]).collect();
    let model = EmModel {
        weights: [comps[0].weight, comps[1].weight],
        means: [comps[0].mean.as_slice().to_vec(), comps[1].mean.as_slice().to_vec()],
        covariances: [
            comps[0].cov.transpose().as_slice().to_vec(),
            comps[1].cov.transpose().as_slice().to_vec(),
        ],
        dim: d,
        log_likelihood: trace,
        converged,
    };
    Ok((model, posterior0))
}

fn initial_responsibilities(x: &DMatrix<f64>, init: EmInit) -> Vec<[f64; 2]> {
    let n = x.nrows();
    match init {
        EmInit::MedianSplit => {
            let proj = pca_project(x, 1);
            let mut sorted: Vec<f64> = proj.column(0).iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            let above = proj.column(0).iter().filter(|&&p| p > median).count();
            (0..n)
                .map(|i| {
                    let upper = if above == 0 || above == n {
                        // no spread along the axis: split by position
                        i >= n / 2
                    } else {
                        proj[(i, 0)] > median
                    };
                    if upper {
                        [0.0, 1.0]
                    } else {
                        [1.0, 0.0]
                    }
                })
                .collect()
        }
        EmInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let r: f64 = rng.random_range(0.05..0.95);
                    [r, 1.0 - r]
                })
                .collect()
        }
    }
}

fn m_step(x: &DMatrix<f64>, resp: &[[f64; 2]], prior: f64) -> Result<[Component; 2]> {
    let (n, d) = x.shape();
    let make = |k: usize| -> Result<Component> {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        if !(nk > 0.0) || nk >= n as f64 && resp.iter().all(|r| r[1 - k] == 0.0) {
            return Err(Error::DegenerateClustering(format!(
                "component {k} lost all its cells"
            )));
        }
        let mut mean = DVector::zeros(d);
        for (i, r) in resp.iter().enumerate() {
            mean.axpy(r[k], &x.row(i).transpose(), 1.0);
        }
        mean /= nk;
        let mut scatter = DMatrix::from_diagonal_element(d, d, prior);
        for (i, r) in resp.iter().enumerate() {
            let diff = x.row(i).transpose() - &mean;
            scatter.syger(r[k], &diff, &diff, 1.0);
        }
        scatter.fill_upper_triangle_with_lower_triangle();
        Ok(Component {
            weight: nk / n as f64,
            mean,
            cov: scatter / nk,
        })
    };
    Ok([make(0)?, make(1)?])
}

fn cholesky(c: &Component) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    c.cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateClustering("covariance is not positive definite".into()))
}

fn penalty(c: &Component, prior: f64) -> Result<f64> {
    Ok(0.5 * prior * cholesky(c)?.inverse().trace())
}

/// Total log-likelihood and responsibilities.
fn e_step(x: &DMatrix<f64>, comps: &[Component; 2]) -> Result<(f64, Vec<[f64; 2]>)> {
    let (n, d) = x.shape();
    let log_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut logp = vec![[0.0; 2]; n];
    for (k, c) in comps.iter().enumerate() {
        let chol = cholesky(c)?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let base = c.weight.ln() - 0.5 * (d as f64 * log_2pi + log_det);
        let mut diffs = x.transpose();
        for mut col in diffs.column_iter_mut() {
            col -= &c.mean;
        }
        // solve L z = diff for all cells at once
        let l = chol.l();
        if !l.solve_lower_triangular_mut(&mut diffs) {
            return Err(Error::DegenerateClustering("singular covariance factor".into()));
        }
        for (i, col) in diffs.column_iter().enumerate() {
            logp[i][k] = base - 0.5 * col.norm_squared();
        }
    }
    let mut total = 0.0;
    let resp = logp
        .iter()
        .map(|lp| {
            let m = lp[0].max(lp[1]);
            let lse = m + ((lp[0] - m).exp() + (lp[1] - m).exp()).ln();
            total += lse;
            [(lp[0] - lse).exp(), (lp[1] - lse).exp()]
        })
        .collect();
    if !total.is_finite() {
        return Err(Error::DegenerateClustering("non-finite likelihood".into()));
    }
    Ok((total, resp))
}

/// Deterministic median-split run, plus `opts.restarts` random runs; the
/// run with the highest final objective is kept.
pub fn fit_gmm2_best(x: &DMatrix<f64>, opts: &EmOptions) -> Result<(EmModel, Vec<f64>)> {
    let mut best = fit_gmm2(x, opts, EmInit::MedianSplit)?;
    for r in 0..opts.restarts {
        let seed = opts.seed.wrapping_add(r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        match fit_gmm2(x, opts, EmInit::Random(seed)) {
            Ok(run) => {
                let (a, b) = (
                    run.0.log_likelihood.last().copied().unwrap_or(f64::NEG_INFINITY),
                    best.0.log_likelihood.last().copied().unwrap_or(f64::NEG_INFINITY),
                );
                if a > b {
                    best = run;
                }
            }
            Err(Error::DegenerateClustering(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

/// Feature matrix of a field, one row per cell.
pub fn field_matrix(field: &FeatureField) -> DMatrix<f64> {
    DMatrix::from_row_slice(field.len(), field.dim(), field.values())
}

/// PCA-reduces the field and fits the two-component mixture. Returns the
/// model and the posterior of component 0 per cell, row-major.
pub fn em_segment(field: &FeatureField, opts: &EmOptions) -> Result<(EmModel, Vec<f64>)> {
    opts.validate()?;
    let k = opts.pca_dims.min(field.dim());
    if field.len() < 2 * k {
        return Err(Error::invalid(format!(
            "{} windows are too few for {k} feature dimensions; use a smaller window or stride",
            field.len()
        )));
    }
    let reduced = pca_project(&field_matrix(field), k);
    fit_gmm2_best(&reduced, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn two_clusters(seed: u64, per: usize, sep: f64, d: usize) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * per {
            let k = i % 2;
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                rows.push(z + if j == 0 && k == 1 { sep } else { 0.0 });
            }
            labels.push(k);
        }
        (DMatrix::from_row_slice(2 * per, d, &rows), labels)
    }

    #[test]
    fn recovers_separated_clusters() {
        let (x, labels) = two_clusters(1, 200, 10.0, 3);
        let (model, post) = fit_gmm2(&x, &EmOptions::default(), EmInit::MedianSplit).unwrap();
        let agree = post
            .iter()
            .zip(&labels)
            .filter(|(p, &l)| (**p > 0.5) == (l == 0))
            .count();
        let agree = agree.max(400 - agree);
        assert!(agree >= 396, "{agree}");
        assert!((model.weights[0] + model.weights[1] - 1.0).abs() < 1e-12);
        let hi = usize::from(model.means[1][0] > model.means[0][0]);
        assert!((model.means[hi][0] - 10.0).abs() < 0.2);
        assert!(model.converged);
    }

    #[test]
    fn objective_never_decreases() {
        for seed in 0..20 {
            let (x, _) = two_clusters(seed, 60, 1.5, 4);
            let (model, _) = fit_gmm2(&x, &EmOptions::default(), EmInit::Random(seed)).unwrap();
            for w in model.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn identical_cells_are_degenerate() {
        let x = DMatrix::from_element(20, 2, 1.0);
        assert!(matches!(
            fit_gmm2(&x, &EmOptions::default(), EmInit::MedianSplit),
            Err(Error::DegenerateClustering(_))
        ));
    }

    #[test]
    fn too_few_cells() {
        let x = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64);
        assert!(matches!(
            fit_gmm2(&x, &EmOptions::default(), EmInit::MedianSplit),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn pca_orders_axes_by_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(300, 3, |_, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * [1.0, 5.0, 0.2][j]
        });
        let p = pca_project(&x, 2);
        let var = |c: usize| p.column(c).iter().map(|v| v * v).sum::<f64>() / 300.0;
        assert!(var(0) > 15.0 && var(1) < 2.0 && var(1) > 0.5);
    }
}
