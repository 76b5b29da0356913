//! Covariance kernels, the analytical Mercer factorization of the
//! squared-exponential kernel, Woodbury algebra and truncated
//! eigen-decompositions.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetric_top_eigen;
use crate::math;

/// Stationary kernel `k(t,t') = sigma_delta^2 exp(-|t-t'|^gamma / (2 ell^gamma))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Process standard deviation (population units).
    pub sigma_delta: f64,
    /// Correlation time scale (us).
    pub ell: f64,
    /// Exponent in `[1, 2]`.
    pub gamma: f64,
}

impl KernelParams {
    /// Validated constructor.
    pub fn new(sigma_delta: f64, ell: f64, gamma: f64) -> Result<Self> {
        if !(sigma_delta >= 0.0) {
            return Err(Error::InvalidParam {
                name: "sigma_delta",
                why: format!("must be nonnegative, got {sigma_delta}"),
            });
        }
        if !(ell > 0.0) {
            return Err(Error::InvalidParam {
                name: "ell",
                why: format!("must be positive, got {ell}"),
            });
        }
        if !(1.0..=2.0).contains(&gamma) {
            return Err(Error::InvalidParam {
                name: "gamma",
                why: format!("must lie in [1, 2], got {gamma}"),
            });
        }
        Ok(Self {
            sigma_delta,
            ell,
            gamma,
        })
    }
}

/// Per-experiment hyper-parameters `alpha = (1/sigma_eps^2, 1/sigma_delta^2, ell)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseHypers {
    /// Reciprocal measurement-noise variance.
    pub inv_noise_var: f64,
    /// Reciprocal process variance.
    pub inv_gp_var: f64,
    /// Correlation time scale (us).
    pub ell: f64,
}

impl NoiseHypers {
    /// Validated constructor; all components must be strictly positive.
    pub fn new(inv_noise_var: f64, inv_gp_var: f64, ell: f64) -> Result<Self> {
        for (name, v) in [
            ("inv_noise_var", inv_noise_var),
            ("inv_gp_var", inv_gp_var),
            ("ell", ell),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    why: format!("must be strictly positive, got {v}"),
                });
            }
        }
        Ok(Self {
            inv_noise_var,
            inv_gp_var,
            ell,
        })
    }

    /// From a 3-vector in the `alpha` layout.
    pub fn from_alpha(alpha: &[f64; 3]) -> Result<Self> {
        Self::new(alpha[0], alpha[1], alpha[2])
    }

    /// Measurement-noise variance `sigma_eps^2`.
    pub fn sigma_eps2(&self) -> f64 {
        1.0 / self.inv_noise_var
    }

    /// Process standard deviation `sigma_delta`.
    pub fn sigma_delta(&self) -> f64 {
        math::sqrt(1.0 / self.inv_gp_var)
    }

    /// Kernel parameters at a fixed exponent.
    pub fn kernel_params(&self, gamma: f64) -> Result<KernelParams> {
        KernelParams::new(self.sigma_delta(), self.ell, gamma)
    }
}

/// Kernel value at a pair of times.
pub fn kernel_eval(kp: &KernelParams, t: f64, t2: f64) -> f64 {
    let d = math::fabs(t - t2);
    math::sq(kp.sigma_delta) * math::exp(-math::powf(d, kp.gamma) / (2.0 * math::powf(kp.ell, kp.gamma)))
}

/// Dense kernel matrix `K = [k(t_i, t_j)]`.
///
/// Uniform grids are detected and filled from a single row of kernel values.
pub fn build_kernel_matrix(kp: &KernelParams, times: &[f64]) -> DMatrix<f64> {
    let n = times.len();
    if let Some(dt) = uniform_step(times) {
        let row: Vec<f64> = (0..n)
            .map(|j| kernel_eval(kp, 0.0, j as f64 * dt))
            .collect();
        return DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)]);
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_eval(kp, times[i], times[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn uniform_step(times: &[f64]) -> Option<f64> {
    if times.len() < 3 {
        return None;
    }
    let dt = times[1] - times[0];
    if dt <= 0.0 {
        return None;
    }
    let tol = 1e-12 * math::fabs(dt).max(math::fabs(times[times.len() - 1]));
    for w in times.windows(2) {
        if math::fabs((w[1] - w[0]) - dt) > tol {
            return None;
        }
    }
    Some(dt)
}

/// Grid half-width, in units of the measure's standard deviation, that the
/// dark-time grid is affinely mapped to before evaluating eigenfunctions.
///
/// The kernel is invariant under a joint affine rescaling of times and `ell`,
/// so only this ratio matters; 2 sigma minimizes the truncation error of
/// low-rank expansions on grids a few correlation lengths wide.
pub const MEASURE_HALFWIDTH_SIGMAS: f64 = 2.0;

/// Analytical Mercer eigenpairs of the unit-variance squared-exponential
/// kernel with respect to a centered Gaussian measure.
#[derive(Debug, Clone)]
pub struct MercerExpansion {
    /// Standard deviation of the Gaussian measure.
    pub measure_sigma: f64,
    /// Retained rank.
    pub rank: usize,
    /// `beta = 2 sigma^2 / ell^2`.
    pub beta: f64,
    /// Eigenvalues, descending.
    pub lambdas: Vec<f64>,
    gauss_coeff: f64,
    hermite_scale: f64,
    prefactor: f64,
}

/// Eigenpairs of the squared-exponential kernel (`gamma = 2` only).
pub fn mercer_eigenpairs(kp: &KernelParams, measure_sigma: f64, r: usize) -> Result<MercerExpansion> {
    if kp.gamma != 2.0 {
        return Err(Error::InvalidParam {
            name: "gamma",
            why: format!("Mercer expansion requires gamma = 2, got {}", kp.gamma),
        });
    }
    if r < 1 {
        return Err(Error::InvalidParam {
            name: "rank",
            why: "at least one eigenpair required".into(),
        });
    }
    if !(measure_sigma > 0.0) {
        return Err(Error::InvalidParam {
            name: "measure_sigma",
            why: format!("must be positive, got {measure_sigma}"),
        });
    }
    let beta = 2.0 * math::sq(measure_sigma) / math::sq(kp.ell);
    let root = math::sqrt(1.0 + 2.0 * beta);
    let denom = 1.0 + beta + root;
    let lambda1 = math::sqrt(2.0 / denom);
    let ratio = beta / denom;

    let mut lambdas = Vec::with_capacity(r);
    let mut lam = lambda1;
    for j in 0..r {
        if lam < 1e-300 {
            return Err(Error::RankUnderflow { max_rank: j });
        }
        lambdas.push(lam);
        lam *= ratio;
    }
    Ok(MercerExpansion {
        measure_sigma,
        rank: r,
        beta,
        lambdas,
        gauss_coeff: (root - 1.0) / (4.0 * math::sq(measure_sigma)),
        hermite_scale: math::powf(0.25 + 0.5 * beta, 0.25) / measure_sigma,
        prefactor: math::powf(1.0 + 2.0 * beta, 0.125),
    })
}

impl MercerExpansion {
    /// Ratio `lambda_{j+1} / lambda_j` (constant, in closed form).
    pub fn eigenvalue_ratio(&self) -> f64 {
        self.beta / (1.0 + self.beta + math::sqrt(1.0 + 2.0 * self.beta))
    }

    /// All `rank` eigenfunctions evaluated at `t`.
    ///
    /// Hermite polynomials are generated by the normalized physicists'
    /// recurrence, which folds the `2^j j!` factor in as it goes and cannot
    /// overflow for the ranks of interest.
    pub fn eigenfunctions_at(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rank);
        let envelope = self.prefactor * math::exp(-self.gauss_coeff * math::sq(t));
        let x = self.hermite_scale * t;
        // h_m(x) = H_m(x) / sqrt(2^m m!)
        let mut h_prev = 1.0f64;
        let mut h = core::f64::consts::SQRT_2 * x;
        out.push(envelope * h_prev);
        if self.rank > 1 {
            out.push(envelope * h);
        }
        for m in 1..self.rank.saturating_sub(1) {
            let next = x * math::sqrt(2.0 / (m as f64 + 1.0)) * h
                - math::sqrt(m as f64 / (m as f64 + 1.0)) * h_prev;
            h_prev = h;
            h = next;
            out.push(envelope * h);
        }
        out
    }

    /// Single eigenfunction `phi_j` (1-based) at `t`.
    pub fn eigenfunction(&self, j: usize, t: f64) -> f64 {
        assert!(j >= 1 && j <= self.rank);
        self.eigenfunctions_at(t)[j - 1]
    }
}

/// Low-rank factor `U` with `K ~ U U^T`.
#[derive(Debug, Clone)]
pub struct LowRankFactor {
    /// `n x r` factor.
    pub u: DMatrix<f64>,
    /// The expansion it was built from (in normalized coordinates).
    pub mercer: MercerExpansion,
}

impl LowRankFactor {
    /// Builds the factor for a squared-exponential kernel on the given grid.
    ///
    /// The grid is affinely centered at zero and scaled so its half-width is
    /// [`MEASURE_HALFWIDTH_SIGMAS`] measure standard deviations; `ell` is
    /// scaled along, which leaves kernel values unchanged.
    pub fn build(
        kp: &KernelParams,
        times: &[f64],
        measure_sigma: f64,
        r: usize,
    ) -> Result<LowRankFactor> {
        if times.is_empty() {
            return Err(Error::InvalidParam {
                name: "times",
                why: "empty grid".into(),
            });
        }
        let (lo, hi) = times
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        let center = 0.5 * (lo + hi);
        let halfwidth = 0.5 * (hi - lo);
        let scale = if halfwidth > 0.0 {
            MEASURE_HALFWIDTH_SIGMAS * measure_sigma / halfwidth
        } else {
            1.0
        };
        let scaled = KernelParams::new(kp.sigma_delta, kp.ell * scale, 2.0)?;
        let mercer = mercer_eigenpairs(&scaled, measure_sigma, r)?;

        let n = times.len();
        let mut u = DMatrix::zeros(n, r);
        let sqrt_lam: Vec<f64> = mercer.lambdas.iter().map(|&l| math::sqrt(l)).collect();
        for i in 0..n {
            let s = (times[i] - center) * scale;
            let phis = mercer.eigenfunctions_at(s);
            for j in 0..r {
                u[(i, j)] = kp.sigma_delta * sqrt_lam[j] * phis[j];
            }
        }
        Ok(LowRankFactor { u, mercer })
    }

    /// Relative Frobenius error `||K - U U^T||_F / ||K||_F`.
    pub fn rel_frobenius_error(&self, kp: &KernelParams, times: &[f64]) -> f64 {
        let k = build_kernel_matrix(kp, times);
        let approx = &self.u * self.u.transpose();
        let num = (&k - approx).norm();
        let den = k.norm();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

/// Escalates the rank from `start_r` until the relative Frobenius target is
/// met, returning the factor together with its achieved error.
pub fn smallest_adequate_rank(
    kp: &KernelParams,
    times: &[f64],
    measure_sigma: f64,
    start_r: usize,
    target: f64,
    max_r: usize,
) -> Result<(LowRankFactor, f64)> {
    let mut r = start_r.max(1);
    loop {
        let factor = LowRankFactor::build(kp, times, measure_sigma, r)?;
        let err = factor.rel_frobenius_error(kp, times);
        if err < target {
            return Ok((factor, err));
        }
        if r >= max_r {
            return Err(Error::Numeric(format!(
                "rank {max_r} still has relative Frobenius error {err:.3e} (target {target:.1e})"
            )));
        }
        r += 1;
    }
}

/// Solves `(U U^T + sigma_eps^2 I) z = x` by the Woodbury identity in
/// `O(n r + r^3)`.
pub fn woodbury_solve(u: &DMatrix<f64>, sigma_eps2: f64, x: &DVector<f64>) -> DVector<f64> {
    assert!(sigma_eps2 > 0.0, "noise variance must be positive");
    let r = u.ncols();
    let inv = 1.0 / sigma_eps2;
    if r == 0 {
        return x * inv;
    }
    let mut inner = u.transpose() * u * inv;
    for i in 0..r {
        inner[(i, i)] += 1.0;
    }
    let chol = inner
        .cholesky()
        .expect("inner Woodbury system is SPD for positive noise variance");
    let ut_x = u.transpose() * x;
    let w = chol.solve(&ut_x);
    x * inv - u * w * (inv * inv)
}

/// `log det(U U^T + sigma_eps^2 I)` via the thin SVD of `U`:
/// `(n - r) log sigma_eps^2 + sum_j log(s_j^2 + sigma_eps^2)`.
pub fn low_rank_logdet(u: &DMatrix<f64>, sigma_eps2: f64) -> f64 {
    assert!(sigma_eps2 > 0.0, "noise variance must be positive");
    let n = u.nrows();
    let r = u.ncols();
    if r == 0 {
        return n as f64 * math::ln(sigma_eps2);
    }
    let svd = u.clone().svd(false, false);
    let mut logdet = (n - r) as f64 * math::ln(sigma_eps2);
    for &s in svd.singular_values.iter() {
        logdet += math::ln(s * s + sigma_eps2);
    }
    logdet
}

/// Retained top block of a covariance eigen-decomposition.
#[derive(Debug, Clone)]
pub struct EigenPartition {
    lambda: Vec<f64>,
    vectors: DMatrix<f64>,
    n: usize,
}

impl EigenPartition {
    /// Retained eigenvalues, descending.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Retained orthonormal eigenvector block (`n x r`).
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Retained rank.
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// Projection `E_I^T x` onto the retained subspace.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.vectors.transpose() * x
    }
}

/// Top-`r` eigenpairs of a symmetric positive definite covariance; the
/// discarded block is never materialized.
pub fn eigen_partition(sigma: &DMatrix<f64>, r: usize) -> Result<EigenPartition> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::InvalidParam {
            name: "sigma",
            why: format!("expected square matrix, got {n} x {}", sigma.ncols()),
        });
    }
    if r < 1 || r > n {
        return Err(Error::InvalidParam {
            name: "rank",
            why: format!("rank {r} out of range for n = {n}"),
        });
    }
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            dev = dev.max(math::fabs(sigma[(i, j)] - sigma[(j, i)]));
        }
    }
    if dev > 1e-10 {
        return Err(Error::NonSymmetric { deviation: dev });
    }
    let (lambda, vectors) = symmetric_top_eigen(sigma, r);
    let min = lambda[r - 1];
    if !(min > 0.0) {
        return Err(Error::DegenerateCovariance { min_pivot: min });
    }
    Ok(EigenPartition {
        lambda,
        vectors,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_eval_examples() {
        let kp = KernelParams::new(0.3, 1.5, 2.0).unwrap();
        assert_relative_eq!(kernel_eval(&kp, 2.0, 2.0), 0.09, epsilon = 1e-15);
        assert_relative_eq!(
            kernel_eval(&kp, 0.5, 2.0),
            0.09 * math::exp(-0.5),
            epsilon = 1e-15
        );
        // Independent scalar evaluation for gamma = 1.
        let kp1 = KernelParams::new(0.3, 1.5, 1.0).unwrap();
        let d = 2.0 * 1.5 * math::ln(2.0);
        assert_relative_eq!(
            kernel_eval(&kp1, 0.0, d),
            0.09 * math::exp(-d / 3.0),
            epsilon = 1e-14
        );
        // Symmetry.
        assert_eq!(kernel_eval(&kp1, 0.7, 3.2), kernel_eval(&kp1, 3.2, 0.7));
    }

    #[test]
    fn kernel_params_domain() {
        assert!(KernelParams::new(-0.1, 1.0, 2.0).is_err());
        assert!(KernelParams::new(0.1, 0.0, 2.0).is_err());
        assert!(KernelParams::new(0.1, 1.0, 2.5).is_err());
        assert!(NoiseHypers::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kernel_matrix_trivial_cases() {
        let kp = KernelParams::new(0.2, 1.0, 2.0).unwrap();
        let k1 = build_kernel_matrix(&kp, &[3.7]);
        assert_eq!(k1.nrows(), 1);
        assert_relative_eq!(k1[(0, 0)], 0.04, epsilon = 1e-15);

        let kp0 = KernelParams::new(0.0, 1.0, 2.0).unwrap();
        let kz = build_kernel_matrix(&kp0, &[0.0, 1.0, 2.0]);
        assert!(kz.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_matrix_matches_elementwise_oracle_on_arbitrary_grid() {
        let kp = KernelParams::new(0.5, 0.8, 1.0).unwrap();
        let times = [0.1, 0.75, 2.3];
        let k = build_kernel_matrix(&kp, &times);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k[(i, j)], kernel_eval(&kp, times[i], times[j]));
            }
        }
    }

    #[test]
    fn kernel_matrix_uniform_fill_matches_elementwise() {
        let kp = KernelParams::new(0.5, 0.8, 2.0).unwrap();
        let times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.02).collect();
        let k = build_kernel_matrix(&kp, &times);
        for i in 0..40 {
            for j in 0..40 {
                assert_relative_eq!(
                    k[(i, j)],
                    kernel_eval(&kp, times[i], times[j]),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn mercer_limit_and_center_value() {
        let kp = KernelParams::new(1.0, 1.0, 2.0).unwrap();
        // beta -> 0: lambda_1 -> 1 and the ratio -> 0.
        let me = mercer_eigenpairs(&kp, 1e-7, 3).unwrap();
        assert_relative_eq!(me.lambdas[0], 1.0, epsilon = 1e-6);
        assert!(me.lambdas[1] / me.lambdas[0] < 1e-10);
        // phi_1(0) = (1 + 2 beta)^{1/8}.
        let me = mercer_eigenpairs(&kp, 0.7, 4).unwrap();
        assert_relative_eq!(
            me.eigenfunction(1, 0.0),
            math::powf(1.0 + 2.0 * me.beta, 0.125),
            epsilon = 1e-14
        );
    }

    #[test]
    fn mercer_ratio_is_exact_closed_form() {
        let kp = KernelParams::new(0.05, 2.0, 2.0).unwrap();
        let me = mercer_eigenpairs(&kp, 0.01, 12).unwrap();
        let q = me.eigenvalue_ratio();
        for j in 0..11 {
            assert_relative_eq!(me.lambdas[j + 1] / me.lambdas[j], q, epsilon = 1e-12);
        }
    }

    #[test]
    fn mercer_underflow_reports_max_usable_rank() {
        let kp = KernelParams::new(1.0, 1.0, 2.0).unwrap();
        // Tiny beta: ratio ~ beta/2, eigenvalues collapse fast.
        let err = mercer_eigenpairs(&kp, 1e-9, 50).unwrap_err();
        match err {
            Error::RankUnderflow { max_rank } => {
                assert!(max_rank >= 1 && max_rank < 50);
                assert!(mercer_eigenpairs(&kp, 1e-9, max_rank).is_ok());
            }
            other => panic!("expected RankUnderflow, got {other:?}"),
        }
    }

    #[test]
    fn mercer_rejects_wrong_gamma() {
        let kp = KernelParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(mercer_eigenpairs(&kp, 0.01, 3).is_err());
    }

    #[test]
    fn low_rank_factor_zero_variance_gives_zero_factor() {
        let kp = KernelParams::new(0.0, 2.0, 2.0).unwrap();
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let f = LowRankFactor::build(&kp, &times, 0.01, 3).unwrap();
        assert!(f.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn low_rank_error_decreases_with_rank_on_tiny_grid() {
        let kp = KernelParams::new(0.4, 1.0, 2.0).unwrap();
        let times = [0.0, 0.5, 1.0, 1.5];
        let mut prev = f64::INFINITY;
        for r in 1..=4 {
            let f = LowRankFactor::build(&kp, &times, 0.01, r).unwrap();
            let err = f.rel_frobenius_error(&kp, &times);
            assert!(
                err <= prev + 1e-12,
                "error grew at rank {r}: {err} > {prev}"
            );
            prev = err;
        }
        assert!(prev < 1e-3, "full expansion error {prev}");
    }

    #[test]
    fn low_rank_column_norms_are_nonincreasing() {
        let kp = KernelParams::new(0.05, 2.0, 2.0).unwrap();
        let times: Vec<f64> = (1..=200).map(|i| i as f64 * 0.05).collect();
        let f = LowRankFactor::build(&kp, &times, 0.01, 8).unwrap();
        let mut prev = f64::INFINITY;
        for j in 0..8 {
            let norm = f.u.column(j).norm();
            assert!(norm <= prev + 1e-12, "column {j} grew: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn woodbury_trivial_cases() {
        let x = DVector::from_vec(alloc::vec![1.0, -2.0, 3.0]);
        let empty = DMatrix::<f64>::zeros(3, 0);
        let z = woodbury_solve(&empty, 0.25, &x);
        for i in 0..3 {
            assert_relative_eq!(z[i], x[i] * 4.0, epsilon = 1e-14);
        }
        let u = DMatrix::from_row_slice(3, 1, &[1.0, 0.5, -0.5]);
        let zero = DVector::zeros(3);
        assert_eq!(woodbury_solve(&u, 0.25, &zero), zero);
    }

    #[test]
    fn woodbury_residual_oracle() {
        let u = DMatrix::from_row_slice(
            6,
            2,
            &[
                0.8, -0.1, 0.3, 0.7, -0.4, 0.2, 0.1, 0.9, 0.5, -0.6, -0.2, 0.35,
            ],
        );
        let x = DVector::from_vec(alloc::vec![1.0, 2.0, -1.0, 0.5, 0.25, -2.0]);
        let s2 = 0.09;
        let z = woodbury_solve(&u, s2, &x);
        let sigma = &u * u.transpose() + DMatrix::identity(6, 6) * s2;
        let resid = (&sigma * &z - &x).norm();
        assert!(resid < 1e-10, "residual {resid:e}");
    }

    #[test]
    fn logdet_matches_dense_oracle_and_scales() {
        let u = DMatrix::from_row_slice(
            5,
            2,
            &[0.9, 0.1, -0.3, 0.6, 0.2, -0.8, 0.55, 0.25, -0.15, 0.4],
        );
        let s2 = 0.04;
        let dense = |u: &DMatrix<f64>| {
            let sigma = u * u.transpose() + DMatrix::identity(5, 5) * s2;
            math::ln(sigma.determinant())
        };
        assert_relative_eq!(low_rank_logdet(&u, s2), dense(&u), epsilon = 1e-10);
        let scaled = &u * 3.0;
        assert_relative_eq!(low_rank_logdet(&scaled, s2), dense(&scaled), epsilon = 1e-10);

        let zero = DMatrix::<f64>::zeros(7, 0);
        assert_relative_eq!(
            low_rank_logdet(&zero, s2),
            7.0 * math::ln(s2),
            epsilon = 1e-14
        );
    }

    #[test]
    fn eigen_partition_isotropic() {
        let sigma = DMatrix::identity(12, 12) * 0.09;
        let part = eigen_partition(&sigma, 4).unwrap();
        for &l in part.lambda() {
            assert_relative_eq!(l, 0.09, epsilon = 1e-12);
        }
        let gram = part.vectors().transpose() * part.vectors();
        assert_relative_eq!(
            (gram - DMatrix::identity(4, 4)).norm(),
            0.0,
            epsilon = 1e-10
        );
        for j in 0..4 {
            let v = part.vectors().column(j);
            let resid = (&sigma * v - v * part.lambda()[j]).norm();
            assert!(resid < 1e-9 * part.lambda()[0]);
        }
    }

    #[test]
    fn eigen_partition_full_rank_reconstructs() {
        let kp = KernelParams::new(0.5, 1.0, 2.0).unwrap();
        let times = [0.0, 0.4, 0.9, 1.7, 2.2, 3.0];
        let sigma = build_kernel_matrix(&kp, &times) + DMatrix::identity(6, 6) * 0.01;
        let part = eigen_partition(&sigma, 6).unwrap();
        let mut rec = DMatrix::zeros(6, 6);
        for j in 0..6 {
            let v = part.vectors().column(j);
            rec += v * v.transpose() * part.lambda()[j];
        }
        assert_relative_eq!((rec - &sigma).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn eigen_partition_rejects_nonsymmetric() {
        let mut sigma = DMatrix::identity(4, 4);
        sigma[(0, 1)] = 1e-6;
        assert!(matches!(
            eigen_partition(&sigma, 2),
            Err(Error::NonSymmetric { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_matrix_is_psd(
            sigma_delta in 0.01f64..1.0,
            ell in 0.1f64..5.0,
            gamma in 1.0f64..=2.0,
            times in proptest::collection::vec(0.0f64..10.0, 2..24),
        ) {
            let kp = KernelParams::new(sigma_delta, ell, gamma).unwrap();
            let k = build_kernel_matrix(&kp, &times);
            let eig = k.symmetric_eigen();
            let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l));
            prop_assert!(min >= -1e-10 * sigma_delta * sigma_delta,
                "min eigenvalue {min:e}");
        }

        #[test]
        fn woodbury_agrees_with_dense_solve(
            n in 2usize..50,
            r in 0usize..10,
            s2 in 0.01f64..1.0,
            seed in 0u64..1000,
        ) {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let u = DMatrix::from_fn(n, r, |_, _| next());
            let x = DVector::from_fn(n, |_, _| next());
            let z = woodbury_solve(&u, s2, &x);
            let sigma = &u * u.transpose() + DMatrix::identity(n, n) * s2;
            let dense = sigma.clone().cholesky().unwrap().solve(&x);
            let rel = (&z - &dense).norm() / dense.norm().max(1e-300);
            prop_assert!(rel < 1e-9, "relative error {rel:e}");
        }
    }
}
