//! Predictive conditional distributions of model-plus-discrepancy at test
//! times, for a fixed parameter vector (Case I) and for a posterior ensemble
//! (Case II), plus sampling of realizations.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::KernelParams;
use crate::linalg::{cholesky_solve, cholesky_with_pivot, psd_floor};
use crate::math;

/// Deterministic hyper-parameters (posterior means) used for prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatHypers {
    /// Noise variance `sigma_eps^2`.
    pub sigma_eps2: f64,
    /// Discrepancy kernel at the posterior-mean hyper-parameters.
    pub kernel: KernelParams,
}

impl HatHypers {
    /// From `(sigma_eps, sigma_delta, ell)` means and the run's exponent.
    pub fn from_means(means: &[f64; 3], gamma: f64) -> Result<Self> {
        Ok(Self {
            sigma_eps2: means[0] * means[0],
            kernel: KernelParams::new(means[1], means[2], gamma)?,
        })
    }
}

/// Gaussian predictive law at the test times.
#[derive(Debug, Clone)]
pub struct PredictiveGaussian {
    /// Predictive mean.
    pub mean: DVector<f64>,
    /// Symmetric positive semidefinite covariance (eigenvalue-floored).
    pub covariance: DMatrix<f64>,
    /// Test times (us).
    pub test_times: Vec<f64>,
}

impl PredictiveGaussian {
    fn new(mean: DVector<f64>, cov_raw: DMatrix<f64>, test_times: Vec<f64>) -> Self {
        let (covariance, _, _) = psd_floor(&cov_raw);
        Self {
            mean,
            covariance,
            test_times,
        }
    }

    /// Pointwise standard deviations.
    pub fn std_diag(&self) -> DVector<f64> {
        DVector::from_fn(self.mean.len(), |i, _| {
            math::sqrt(self.covariance[(i, i)].max(0.0))
        })
    }
}

fn cross_kernel(kp: &KernelParams, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        crate::kernels::kernel_eval(kp, a[i], b[j])
    })
}

/// Case I: deterministic parameters.
///
/// `mean = f*(theta) + A (y - f(theta))`, `cov = K** - A K*` with
/// `A = K*^T (K + sigma_eps^2 I)^{-1}`; the covariance is symmetrized and
/// eigenvalue-floored at zero.
pub fn predict_case1(
    train_times: &[f64],
    observations: &DVector<f64>,
    sim_train: &DVector<f64>,
    test_times: &[f64],
    sim_test: &DVector<f64>,
    hat: &HatHypers,
) -> Result<PredictiveGaussian> {
    let n = train_times.len();
    if observations.len() != n || sim_train.len() != n {
        return Err(Error::GridMismatch {
            detail: format!(
                "train set sizes disagree: {} times, {} observations, {} simulated",
                n,
                observations.len(),
                sim_train.len()
            ),
        });
    }
    if sim_test.len() != test_times.len() {
        return Err(Error::GridMismatch {
            detail: "test times and simulated test curve differ in length".into(),
        });
    }
    let k_train = {
        let mut k = cross_kernel(&hat.kernel, train_times, train_times);
        for i in 0..n {
            k[(i, i)] += hat.sigma_eps2;
        }
        k
    };
    let k_cross = cross_kernel(&hat.kernel, train_times, test_times);
    let k_test = cross_kernel(&hat.kernel, test_times, test_times);
    conditional(
        &k_train,
        &k_cross,
        &k_test,
        observations,
        sim_train,
        sim_test,
        test_times,
    )
}

/// Retained posterior parameter ensemble with pre-simulated curves.
#[derive(Debug, Clone)]
pub struct ThetaEnsemble {
    /// Simulated curves at the train times, one per posterior sample.
    pub train_curves: Vec<Vec<f64>>,
    /// Simulated curves at the test times, one per posterior sample.
    pub test_curves: Vec<Vec<f64>>,
}

impl ThetaEnsemble {
    /// Validates sizes: nonempty, matching counts, consistent lengths.
    pub fn new(train_curves: Vec<Vec<f64>>, test_curves: Vec<Vec<f64>>) -> Result<Self> {
        if train_curves.is_empty() || train_curves.len() != test_curves.len() {
            return Err(Error::InvalidParam {
                name: "ensemble",
                why: format!(
                    "need matching nonempty curve sets, got {} train / {} test",
                    train_curves.len(),
                    test_curves.len()
                ),
            });
        }
        let n = train_curves[0].len();
        let n_star = test_curves[0].len();
        if train_curves.iter().any(|c| c.len() != n)
            || test_curves.iter().any(|c| c.len() != n_star)
        {
            return Err(Error::InvalidParam {
                name: "ensemble",
                why: "curve lengths are inconsistent".into(),
            });
        }
        Ok(Self {
            train_curves,
            test_curves,
        })
    }

    /// Ensemble size.
    pub fn len(&self) -> usize {
        self.train_curves.len()
    }

    /// True when the ensemble holds no curves.
    pub fn is_empty(&self) -> bool {
        self.train_curves.is_empty()
    }
}

/// Case II: random parameters.
///
/// Curve means and covariances are Monte Carlo estimates over the ensemble
/// (unbiased sample covariance); the conditional is then
/// `mean = fbar* + B (y - fbar)`,
/// `cov = K**_theta + K** - B (K*_theta + K*)` with
/// `B = (K*_theta + K*)^T (K_theta + K + sigma_eps^2 I)^{-1}`.
pub fn predict_case2(
    ensemble: &ThetaEnsemble,
    train_times: &[f64],
    observations: &DVector<f64>,
    test_times: &[f64],
    hat: &HatHypers,
) -> Result<PredictiveGaussian> {
    let m = ensemble.len();
    if m < 2 {
        return Err(Error::InvalidParam {
            name: "ensemble",
            why: format!("Case II needs at least 2 samples, got {m}"),
        });
    }
    let n = train_times.len();
    let n_star = test_times.len();
    if observations.len() != n
        || ensemble.train_curves[0].len() != n
        || ensemble.test_curves[0].len() != n_star
    {
        return Err(Error::GridMismatch {
            detail: "ensemble curves do not match the train/test grids".into(),
        });
    }

    // Sample means and centered curve matrices.
    let mut mean_train = DVector::zeros(n);
    let mut mean_test = DVector::zeros(n_star);
    for c in &ensemble.train_curves {
        for i in 0..n {
            mean_train[i] += c[i];
        }
    }
    for c in &ensemble.test_curves {
        for i in 0..n_star {
            mean_test[i] += c[i];
        }
    }
    mean_train /= m as f64;
    mean_test /= m as f64;

    let centered_train =
        DMatrix::from_fn(n, m, |i, j| ensemble.train_curves[j][i] - mean_train[i]);
    let centered_test =
        DMatrix::from_fn(n_star, m, |i, j| ensemble.test_curves[j][i] - mean_test[i]);
    let denom = (m - 1) as f64;
    let k_theta = &centered_train * centered_train.transpose() / denom;
    let k_theta_cross = &centered_train * centered_test.transpose() / denom;
    let k_theta_test = &centered_test * centered_test.transpose() / denom;

    let mut k_train = cross_kernel(&hat.kernel, train_times, train_times) + k_theta;
    for i in 0..n {
        k_train[(i, i)] += hat.sigma_eps2;
    }
    let k_cross = cross_kernel(&hat.kernel, train_times, test_times) + k_theta_cross;
    let k_test = cross_kernel(&hat.kernel, test_times, test_times) + k_theta_test;
    conditional(
        &k_train,
        &k_cross,
        &k_test,
        observations,
        &mean_train,
        &mean_test,
        test_times,
    )
}

/// Shared Gaussian conditioning: `k_train` already includes the noise term.
fn conditional(
    k_train: &DMatrix<f64>,
    k_cross: &DMatrix<f64>,
    k_test: &DMatrix<f64>,
    observations: &DVector<f64>,
    mean_train: &DVector<f64>,
    mean_test: &DVector<f64>,
    test_times: &[f64],
) -> Result<PredictiveGaussian> {
    let n = k_train.nrows();
    let (mean, cov_raw) = if n == 0 {
        (mean_test.clone(), k_test.clone())
    } else {
        let (l, _) = cholesky_with_pivot(k_train)
            .map_err(|pivot| Error::DegenerateCovariance { min_pivot: pivot })?;
        // W = (K + s2 I)^{-1} K*, column by column.
        let mut w = DMatrix::zeros(n, k_cross.ncols());
        for j in 0..k_cross.ncols() {
            let col: DVector<f64> = k_cross.column(j).into();
            w.set_column(j, &cholesky_solve(&l, &col));
        }
        let resid = observations - mean_train;
        let mean = mean_test + w.transpose() * &resid;
        let cov = k_test - k_cross.transpose() * w;
        (mean, cov)
    };
    Ok(PredictiveGaussian::new(mean, cov_raw, test_times.to_vec()))
}

/// Draws `count` realizations via the symmetric square root of the floored
/// covariance; one row per realization.
pub fn sample_realizations<R: Rng + ?Sized>(
    pg: &PredictiveGaussian,
    count: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let n = pg.mean.len();
    let (_, values, vectors) = psd_floor(&pg.covariance);
    let sqrt_vals: Vec<f64> = values.iter().map(|&l| math::sqrt(l.max(0.0))).collect();
    let mut out = DMatrix::zeros(count, n);
    for row in 0..count {
        let z = DVector::from_fn(n, |_, _| math::standard_normal(rng));
        let mut x = pg.mean.clone();
        for j in 0..n {
            if sqrt_vals[j] > 0.0 {
                let col: DVector<f64> = vectors.column(j).into_owned();
                x.axpy(sqrt_vals[j] * z[j], &col, 1.0);
            }
        }
        out.set_row(row, &x.transpose());
    }
    out
}
