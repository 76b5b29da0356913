//! Gaussian log-likelihood of observed-minus-simulated residuals under
//! `Sigma(alpha) = K + sigma_eps^2 I`, with three interchangeable backends,
//! and the joint likelihood of a pair of Ramsey experiments.
//!
//! All number crunching stays in log space; normalization constants are
//! never exponentiated.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inference::{GibbsTarget, ALPHA_DIM, THETA_DIM};
use crate::kernels::{
    build_kernel_matrix, eigen_partition, low_rank_logdet, woodbury_solve, EigenPartition,
    KernelParams, LowRankFactor, NoiseHypers,
};
use crate::linalg::{cholesky_solve, cholesky_with_pivot};
use crate::math;
use crate::qudit::DeviceParams;
use crate::ramsey::{simulate_ramsey, RamseyConfig, RamseyDataset};

const LN_2PI: f64 = 1.837877066409345483560659;

/// Largest dimension accepted by the dense backend.
pub const DENSE_GUARD: usize = 2000;

/// Log-density of `x ~ N(0, sigma_eps^2 I)`.
pub fn loglik_iid(residual: &DVector<f64>, sigma_eps2: f64) -> f64 {
    let n = residual.len() as f64;
    -0.5 * n * (LN_2PI + math::ln(sigma_eps2)) - 0.5 * residual.norm_squared() / sigma_eps2
}

/// Log-density of `x ~ N(0, Sigma)` by symmetric factorization of the dense
/// covariance.
pub fn loglik_direct(residual: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let n = residual.len();
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::GridMismatch {
            detail: format!(
                "residual has {n} entries but covariance is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            ),
        });
    }
    if n > DENSE_GUARD {
        return Err(Error::InvalidParam {
            name: "n",
            why: format!("dense backend guards at {DENSE_GUARD} points, got {n}"),
        });
    }
    let (l, logdet) =
        cholesky_with_pivot(sigma).map_err(|pivot| Error::DegenerateCovariance { min_pivot: pivot })?;
    let z = cholesky_solve(&l, residual);
    Ok(-0.5 * (n as f64) * LN_2PI - 0.5 * logdet - 0.5 * residual.dot(&z))
}

/// Low-rank log-density given a prebuilt factor: `O(n r + r^3)` per call.
pub fn loglik_lowrank_with(residual: &DVector<f64>, sigma_eps2: f64, factor: &LowRankFactor) -> f64 {
    let n = residual.len() as f64;
    let logdet = low_rank_logdet(&factor.u, sigma_eps2);
    let z = woodbury_solve(&factor.u, sigma_eps2, residual);
    -0.5 * n * LN_2PI - 0.5 * logdet - 0.5 * residual.dot(&z)
}

/// Low-rank log-density for squared-exponential hyper-parameters, building
/// the Mercer factor on the fly.
pub fn loglik_lowrank(
    residual: &DVector<f64>,
    hypers: &NoiseHypers,
    times: &[f64],
    measure_sigma: f64,
    rank: usize,
) -> Result<f64> {
    let kp = hypers.kernel_params(2.0)?;
    let factor = LowRankFactor::build(&kp, times, measure_sigma, rank)?;
    Ok(loglik_lowrank_with(residual, hypers.sigma_eps2(), &factor))
}

/// Marginalized log-density over the retained eigen-subspace:
/// `-(r/2) log 2pi - 1/2 sum log lambda - 1/2 ||Lambda^{-1/2} E^T x||^2`.
pub fn loglik_marginal(residual: &DVector<f64>, part: &EigenPartition) -> f64 {
    let r = part.rank() as f64;
    let proj = part.project(residual);
    let mut logdet = 0.0;
    let mut quad = 0.0;
    for (j, &l) in part.lambda().iter().enumerate() {
        logdet += math::ln(l);
        quad += proj[j] * proj[j] / l;
    }
    -0.5 * r * LN_2PI - 0.5 * logdet - 0.5 * quad
}

/// Which algebra evaluates the Gaussian density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    /// `Sigma = sigma_eps^2 I`: the GP covariance is excluded.
    NoGp,
    /// Dense symmetric factorization (oracle; small `n` only).
    Direct,
    /// Mercer low-rank factor with the Woodbury identity (`gamma = 2`).
    LowRank,
    /// Projection onto the dominant eigen-subspace of `Sigma`.
    Marginalized,
}

/// Backend selection plus the numeric knobs it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodBackend {
    /// Evaluation strategy.
    pub kind: BackendKind,
    /// Kernel exponent for this run (1 or 2).
    pub gamma: f64,
    /// Retained rank (low-rank factor or eigen-partition).
    pub rank: usize,
    /// Standard deviation of the Mercer measure (low-rank only).
    pub measure_sigma: f64,
}

impl LikelihoodBackend {
    /// Backend without a GP term.
    pub fn no_gp() -> Self {
        Self {
            kind: BackendKind::NoGp,
            gamma: 2.0,
            rank: 0,
            measure_sigma: 0.01,
        }
    }

    /// Low-rank squared-exponential backend.
    pub fn low_rank(rank: usize, measure_sigma: f64) -> Self {
        Self {
            kind: BackendKind::LowRank,
            gamma: 2.0,
            rank,
            measure_sigma,
        }
    }

    /// Marginalized backend for a kernel with the given exponent.
    pub fn marginalized(gamma: f64, rank: usize) -> Self {
        Self {
            kind: BackendKind::Marginalized,
            gamma,
            rank,
            measure_sigma: 0.01,
        }
    }

    /// Dense oracle backend.
    pub fn direct(gamma: f64) -> Self {
        Self {
            kind: BackendKind::Direct,
            gamma,
            rank: 0,
            measure_sigma: 0.01,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(1.0..=2.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "kernel exponent must lie in [1, 2], got {}",
                self.gamma
            )));
        }
        match self.kind {
            BackendKind::LowRank => {
                if self.gamma != 2.0 {
                    return Err(Error::Config(
                        "the low-rank backend requires a squared-exponential kernel".into(),
                    ));
                }
                if self.rank < 1 {
                    return Err(Error::Config("low-rank backend needs rank >= 1".into()));
                }
                if !(self.measure_sigma > 0.0) {
                    return Err(Error::Config("measure sigma must be positive".into()));
                }
            }
            BackendKind::Marginalized => {
                if self.rank < 1 || self.rank > n {
                    return Err(Error::Config(format!(
                        "marginalized rank {} out of range for n = {n}",
                        self.rank
                    )));
                }
            }
            BackendKind::NoGp | BackendKind::Direct => {}
        }
        Ok(())
    }
}

/// An alpha-dependent covariance factorization, shared by both population
/// components of one experiment.
#[derive(Debug, Clone)]
pub enum CovFactor {
    /// `Sigma = sigma_eps^2 I`.
    Diagonal {
        /// Noise variance.
        sigma_eps2: f64,
    },
    /// Dense lower Cholesky factor with its log-determinant.
    Dense {
        /// Lower triangular factor.
        l: DMatrix<f64>,
        /// `log det Sigma`.
        logdet: f64,
    },
    /// Mercer low-rank factor.
    LowRank {
        /// The factor `U` (scaled by `sigma_delta` and `sqrt(lambda_j)`).
        factor: LowRankFactor,
        /// Noise variance.
        sigma_eps2: f64,
        /// Precomputed `log det(U U^T + sigma_eps^2 I)`.
        logdet: f64,
    },
    /// Retained eigen-subspace of the dense covariance.
    Marginal(EigenPartition),
}

impl CovFactor {
    /// Builds the factor for one experiment at the given hyper-parameters.
    pub fn build(
        backend: &LikelihoodBackend,
        hypers: &NoiseHypers,
        times: &[f64],
    ) -> Result<CovFactor> {
        let sigma_eps2 = hypers.sigma_eps2();
        match backend.kind {
            BackendKind::NoGp => Ok(CovFactor::Diagonal { sigma_eps2 }),
            BackendKind::Direct => {
                let kp = hypers.kernel_params(backend.gamma)?;
                let mut sigma = build_kernel_matrix(&kp, times);
                for i in 0..times.len() {
                    sigma[(i, i)] += sigma_eps2;
                }
                let (l, logdet) = cholesky_with_pivot(&sigma)
                    .map_err(|pivot| Error::DegenerateCovariance { min_pivot: pivot })?;
                Ok(CovFactor::Dense { l, logdet })
            }
            BackendKind::LowRank => {
                let sigma_delta = hypers.sigma_delta();
                if sigma_delta == 0.0 {
                    return Ok(CovFactor::Diagonal { sigma_eps2 });
                }
                let kp = KernelParams::new(sigma_delta, hypers.ell, 2.0)?;
                let factor =
                    LowRankFactor::build(&kp, times, backend.measure_sigma, backend.rank)?;
                let logdet = low_rank_logdet(&factor.u, sigma_eps2);
                Ok(CovFactor::LowRank {
                    factor,
                    sigma_eps2,
                    logdet,
                })
            }
            BackendKind::Marginalized => {
                let kp = hypers.kernel_params(backend.gamma)?;
                let mut sigma = build_kernel_matrix(&kp, times);
                for i in 0..times.len() {
                    sigma[(i, i)] += sigma_eps2;
                }
                Ok(CovFactor::Marginal(eigen_partition(&sigma, backend.rank)?))
            }
        }
    }

    /// Log-density of one component's residual under this factorization.
    pub fn component_loglik(&self, residual: &DVector<f64>) -> f64 {
        match self {
            CovFactor::Diagonal { sigma_eps2 } => loglik_iid(residual, *sigma_eps2),
            CovFactor::Dense { l, logdet } => {
                let z = cholesky_solve(l, residual);
                -0.5 * residual.len() as f64 * LN_2PI - 0.5 * logdet - 0.5 * residual.dot(&z)
            }
            CovFactor::LowRank {
                factor,
                sigma_eps2,
                logdet,
            } => {
                let z = woodbury_solve(&factor.u, *sigma_eps2, residual);
                -0.5 * residual.len() as f64 * LN_2PI - 0.5 * logdet - 0.5 * residual.dot(&z)
            }
            CovFactor::Marginal(part) => loglik_marginal(residual, part),
        }
    }
}

/// Observed population series of one experiment: the two included
/// components on the experiment's dark-time grid.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    /// Dark times (us).
    pub times: Vec<f64>,
    /// Included component series, in the order given by
    /// [`crate::ramsey::Experiment::included_components`].
    pub series: [Vec<f64>; 2],
}

impl ExperimentData {
    /// Validates lengths.
    pub fn new(times: Vec<f64>, series: [Vec<f64>; 2]) -> Result<Self> {
        if series[0].len() != times.len() || series[1].len() != times.len() {
            return Err(Error::GridMismatch {
                detail: format!(
                    "series lengths ({}, {}) do not match grid length {}",
                    series[0].len(),
                    series[1].len(),
                    times.len()
                ),
            });
        }
        Ok(Self { times, series })
    }

    /// Extracts the included components of a dataset (measured or simulated).
    pub fn from_dataset(data: &RamseyDataset) -> Self {
        let comps = data.config.experiment.included_components();
        Self {
            times: data.dark_times(),
            series: [
                data.populations[comps[0]].clone(),
                data.populations[comps[1]].clone(),
            ],
        }
    }
}

/// Fixed (not inferred) physical inputs needed to assemble device parameters
/// from a theta vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedParams {
    /// Decay times `(T1_1, T1_2, T1_3)` (us).
    pub t1: [f64; 3],
    /// Guard-level transition frequency (rad/us).
    pub omega23: f64,
}

/// Small LRU cache with two slots, keyed by exact bit patterns.
#[derive(Debug, Clone)]
struct TwoSlot<K: PartialEq + Copy, V> {
    slots: Vec<(K, V)>,
}

impl<K: PartialEq + Copy, V> TwoSlot<K, V> {
    fn new() -> Self {
        Self {
            slots: Vec::with_capacity(2),
        }
    }

    /// Moves a hit to the front; returns whether the key is resident.
    fn promote(&mut self, key: &K) -> bool {
        if let Some(pos) = self.slots.iter().position(|(k, _)| k == key) {
            self.slots.swap(0, pos);
            true
        } else {
            false
        }
    }

    fn insert_front(&mut self, key: K, value: V) {
        self.slots.insert(0, (key, value));
        self.slots.truncate(2);
    }

    fn front(&self) -> &V {
        &self.slots[0].1
    }
}

fn theta_key(theta: &[f64; THETA_DIM]) -> [u64; THETA_DIM] {
    core::array::from_fn(|i| theta[i].to_bits())
}

fn alpha_key(alpha: &[f64; ALPHA_DIM]) -> [u64; ALPHA_DIM] {
    core::array::from_fn(|i| alpha[i].to_bits())
}

/// Joint Ramsey likelihood evaluator with simulation and factorization
/// caches.
///
/// Within one Gibbs iteration the hyper-parameter steps reuse the cached
/// simulation at the current theta, and the theta step reuses the covariance
/// factors built during the hyper-parameter steps.
#[derive(Debug, Clone)]
pub struct RamseyLikelihood {
    fixed: FixedParams,
    configs: [RamseyConfig; 2],
    data: [ExperimentData; 2],
    backend: LikelihoodBackend,
    sim_cache: TwoSlot<[u64; THETA_DIM], [RamseyDataset; 2]>,
    factor_cache: [TwoSlot<[u64; ALPHA_DIM], CovFactor>; 2],
}

impl RamseyLikelihood {
    /// Validates grid consistency and backend settings.
    pub fn new(
        fixed: FixedParams,
        configs: [RamseyConfig; 2],
        data: [ExperimentData; 2],
        backend: LikelihoodBackend,
    ) -> Result<Self> {
        for (k, (config, d)) in configs.iter().zip(data.iter()).enumerate() {
            let grid = config.dark_times();
            if grid.len() != d.times.len() {
                return Err(Error::GridMismatch {
                    detail: format!(
                        "experiment {k}: config has {} dark times, data has {}",
                        grid.len(),
                        d.times.len()
                    ),
                });
            }
            let scale = grid.last().map(|t| t.max(1.0)).unwrap_or(1.0);
            for (i, (&a, &b)) in grid.iter().zip(d.times.iter()).enumerate() {
                if math::fabs(a - b) > 1e-9 * scale {
                    return Err(Error::GridMismatch {
                        detail: format!(
                            "experiment {k}: dark time {i} differs (config {a}, data {b})"
                        ),
                    });
                }
            }
            backend.validate(grid.len())?;
        }
        Ok(Self {
            fixed,
            configs,
            data,
            backend,
            sim_cache: TwoSlot::new(),
            factor_cache: [TwoSlot::new(), TwoSlot::new()],
        })
    }

    /// The backend in use.
    pub fn backend(&self) -> &LikelihoodBackend {
        &self.backend
    }

    /// Device parameters assembled from a theta vector.
    pub fn device_params(&self, theta: &[f64; THETA_DIM]) -> Result<DeviceParams> {
        DeviceParams::new(
            theta[0],
            theta[1],
            theta[2],
            theta[3],
            theta[4],
            self.fixed.t1,
            self.fixed.omega23,
            self.configs[0].drive_frequency,
            self.configs[1].drive_frequency,
        )
    }

    fn ensure_sims(&mut self, theta: &[f64; THETA_DIM]) -> Result<()> {
        let key = theta_key(theta);
        if self.sim_cache.promote(&key) {
            return Ok(());
        }
        let params = self.device_params(theta)?;
        let sims = [
            simulate_ramsey(&params, &self.configs[0])?,
            simulate_ramsey(&params, &self.configs[1])?,
        ];
        self.sim_cache.insert_front(key, sims);
        Ok(())
    }

    fn ensure_factor(&mut self, k: usize, alpha: &[f64; ALPHA_DIM]) -> Result<()> {
        let key = alpha_key(alpha);
        if self.factor_cache[k].promote(&key) {
            return Ok(());
        }
        let hypers = NoiseHypers::from_alpha(alpha)?;
        let factor = CovFactor::build(&self.backend, &hypers, &self.data[k].times)?;
        self.factor_cache[k].insert_front(key, factor);
        Ok(())
    }

    /// Log-likelihood factor of one experiment at `(theta, alpha)`.
    pub fn experiment_loglik(
        &mut self,
        k: usize,
        theta: &[f64; THETA_DIM],
        alpha: &[f64; ALPHA_DIM],
    ) -> Result<f64> {
        assert!(k < 2);
        self.ensure_sims(theta)?;
        self.ensure_factor(k, alpha)?;
        let sims = self.sim_cache.front();
        let factor = self.factor_cache[k].front();
        let comps = self.configs[k].experiment.included_components();
        let mut total = 0.0;
        for (slot, &comp) in comps.iter().enumerate() {
            let observed = &self.data[k].series[slot];
            let simulated = &sims[k].populations[comp];
            let residual = DVector::from_fn(observed.len(), |i, _| observed[i] - simulated[i]);
            total += factor.component_loglik(&residual);
        }
        Ok(total)
    }

    /// Noiseless simulation at `theta` (cached), for prediction ensembles.
    pub fn simulate_at(&mut self, theta: &[f64; THETA_DIM]) -> Result<[RamseyDataset; 2]> {
        self.ensure_sims(theta)?;
        Ok(self.sim_cache.front().clone())
    }
}

impl GibbsTarget for RamseyLikelihood {
    fn experiment_loglik(
        &mut self,
        experiment: usize,
        theta: &[f64; THETA_DIM],
        alpha: &[f64; ALPHA_DIM],
    ) -> Result<f64> {
        RamseyLikelihood::experiment_loglik(self, experiment, theta, alpha)
    }
}

/// Joint log-likelihood of both experiments:
/// `log Pr(D | theta, alpha0, alpha1)`.
pub fn ramsey_joint_loglik(
    lik: &mut RamseyLikelihood,
    theta: &[f64; THETA_DIM],
    alpha0: &[f64; ALPHA_DIM],
    alpha1: &[f64; ALPHA_DIM],
) -> Result<f64> {
    Ok(lik.experiment_loglik(0, theta, alpha0)? + lik.experiment_loglik(1, theta, alpha1)?)
}
