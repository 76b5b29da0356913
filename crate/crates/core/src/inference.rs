//! Metropolis-within-Gibbs sampling over `(theta, alpha0, alpha1)` with
//! uniform priors and uniform random-walk proposals.
//!
//! Each iteration performs a Metropolis step per hyper-parameter block
//! (one per experiment, each against its own experiment's likelihood factor)
//! followed by a Metropolis step on the device parameters against the full
//! product likelihood. Flat priors make the acceptance ratio a pure
//! likelihood ratio inside the box; proposals are redrawn until they land
//! inside the box.

use alloc::format;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::math;

/// Dimension of the device-parameter block.
pub const THETA_DIM: usize = 5;
/// Dimension of each hyper-parameter block.
pub const ALPHA_DIM: usize = 3;
/// Total dimension of one sample row: theta, alpha0, alpha1.
pub const SAMPLE_DIM: usize = THETA_DIM + 2 * ALPHA_DIM;

/// Maximum redraws before a proposal is declared impossible.
const REDRAW_CAP: usize = 100;

/// Joint likelihood evaluator from the sampler's point of view.
///
/// The likelihood of Ramsey data factorizes over the two experiments, so the
/// hyper-parameter block of experiment `k` only needs that experiment's
/// factor; the theta block sums both. Implementations may cache simulations
/// and covariance factorizations internally (hence `&mut self`).
pub trait GibbsTarget {
    /// Log-likelihood factor of experiment `k` at `(theta, alpha_k)`.
    fn experiment_loglik(
        &mut self,
        experiment: usize,
        theta: &[f64; THETA_DIM],
        alpha: &[f64; ALPHA_DIM],
    ) -> Result<f64>;
}

/// Elementwise uniform prior boxes for theta and both alpha blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Lower bounds for theta.
    pub theta_lo: [f64; THETA_DIM],
    /// Upper bounds for theta.
    pub theta_hi: [f64; THETA_DIM],
    /// Lower bounds for alpha, per experiment.
    pub alpha_lo: [[f64; ALPHA_DIM]; 2],
    /// Upper bounds for alpha, per experiment.
    pub alpha_hi: [[f64; ALPHA_DIM]; 2],
}

impl PriorSpec {
    /// Validates `lower < upper` elementwise.
    pub fn validate(&self) -> Result<()> {
        for i in 0..THETA_DIM {
            if !(self.theta_lo[i] < self.theta_hi[i]) {
                return Err(Error::Config(format!(
                    "theta prior bound {i}: lower {} not below upper {}",
                    self.theta_lo[i], self.theta_hi[i]
                )));
            }
        }
        for k in 0..2 {
            for i in 0..ALPHA_DIM {
                if !(self.alpha_lo[k][i] < self.alpha_hi[k][i]) {
                    return Err(Error::Config(format!(
                        "alpha({k}) prior bound {i}: lower {} not below upper {}",
                        self.alpha_lo[k][i], self.alpha_hi[k][i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Center of the prior box (the default chain initialization).
    pub fn center(&self) -> SamplePoint {
        let mut theta = [0.0; THETA_DIM];
        for i in 0..THETA_DIM {
            theta[i] = 0.5 * (self.theta_lo[i] + self.theta_hi[i]);
        }
        let mut alpha = [[0.0; ALPHA_DIM]; 2];
        for k in 0..2 {
            for i in 0..ALPHA_DIM {
                alpha[k][i] = 0.5 * (self.alpha_lo[k][i] + self.alpha_hi[k][i]);
            }
        }
        SamplePoint {
            theta,
            alpha,
        }
    }

    /// Uniform draw from the prior box (multi-chain initialization).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SamplePoint {
        let mut theta = [0.0; THETA_DIM];
        for i in 0..THETA_DIM {
            theta[i] = rng.random_range(self.theta_lo[i]..self.theta_hi[i]);
        }
        let mut alpha = [[0.0; ALPHA_DIM]; 2];
        for k in 0..2 {
            for i in 0..ALPHA_DIM {
                alpha[k][i] = rng.random_range(self.alpha_lo[k][i]..self.alpha_hi[k][i]);
            }
        }
        SamplePoint { theta, alpha }
    }

    fn contains(&self, lo: &[f64], hi: &[f64], x: &[f64]) -> bool {
        x.iter()
            .zip(lo.iter().zip(hi.iter()))
            .all(|(&v, (&l, &h))| v >= l && v <= h)
    }
}

/// Uniform random-walk proposal supports (full widths).
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSpec {
    /// Support widths for theta.
    pub r_theta: [f64; THETA_DIM],
    /// Support widths for alpha (shared by both experiments).
    pub r_alpha: [f64; ALPHA_DIM],
}

impl ProposalSpec {
    /// Validates that all widths are positive.
    pub fn validate(&self) -> Result<()> {
        if self.r_theta.iter().chain(self.r_alpha.iter()).any(|&w| !(w > 0.0)) {
            return Err(Error::Config("proposal widths must be positive".into()));
        }
        Ok(())
    }
}

/// One point of the chain state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    /// Device parameters.
    pub theta: [f64; THETA_DIM],
    /// Hyper-parameters per experiment.
    pub alpha: [[f64; ALPHA_DIM]; 2],
}

impl SamplePoint {
    /// Flattened row `(theta, alpha0, alpha1)`.
    pub fn row(&self) -> [f64; SAMPLE_DIM] {
        let mut row = [0.0; SAMPLE_DIM];
        row[..THETA_DIM].copy_from_slice(&self.theta);
        row[THETA_DIM..THETA_DIM + ALPHA_DIM].copy_from_slice(&self.alpha[0]);
        row[THETA_DIM + ALPHA_DIM..].copy_from_slice(&self.alpha[1]);
        row
    }
}

/// Sampler configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    /// Chain length (number of Gibbs iterations).
    pub iterations: usize,
    /// Base RNG seed.
    pub seed: u64,
    /// Stream index for multi-chain runs (independent counter-based streams).
    pub stream: u64,
    /// Update the experiment-1 hyper block before experiment 0 (order test).
    pub swap_alpha_blocks: bool,
}

impl McmcConfig {
    /// Single-chain configuration with the default block order.
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            stream: 0,
            swap_alpha_blocks: false,
        }
    }
}

/// Ordered posterior samples with acceptance bookkeeping.
#[derive(Debug, Clone)]
pub struct Chain {
    /// One row per iteration: `(theta, alpha0, alpha1)`.
    pub samples: Vec<[f64; SAMPLE_DIM]>,
    /// Accepted proposals per block: `[alpha0, alpha1, theta]`.
    pub accepted: [usize; 3],
    /// RNG seed the chain was generated with.
    pub seed: u64,
    /// Stream index of the chain.
    pub stream: u64,
}

impl Chain {
    /// Number of iterations.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// True when the chain holds no samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Trace of a single parameter across all iterations.
    pub fn trace(&self, param: usize) -> Vec<f64> {
        self.samples.iter().map(|row| row[param]).collect()
    }

    /// Indices retained after burn-in and thinning (keep-even convention:
    /// the first retained index is the first post-burn-in iteration).
    pub fn retained_indices(&self, burn_in_fraction: f64, thinning: usize) -> Vec<usize> {
        let m = self.samples.len();
        let start = math::floor(m as f64 * burn_in_fraction) as usize;
        (start..m).filter(|i| (i - start) % thinning == 0).collect()
    }

    /// Retained rows after burn-in and thinning.
    pub fn retained(&self, burn_in_fraction: f64, thinning: usize) -> Vec<[f64; SAMPLE_DIM]> {
        self.retained_indices(burn_in_fraction, thinning)
            .into_iter()
            .map(|i| self.samples[i])
            .collect()
    }
}

/// Uniform random-walk proposal with redraw-until-inside-the-box semantics.
///
/// Each coordinate is drawn from `Uniform(current_i - w_i/2, current_i + w_i/2)`;
/// a draw with any coordinate outside `[lo, hi]` is discarded and redrawn,
/// up to a budget of 100 draws.
pub fn propose_uniform<R: Rng + ?Sized>(
    current: &[f64],
    widths: &[f64],
    lo: &[f64],
    hi: &[f64],
    block: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    debug_assert_eq!(current.len(), widths.len());
    let mut candidate = alloc::vec![0.0; current.len()];
    for _ in 0..REDRAW_CAP {
        for i in 0..current.len() {
            let u: f64 = rng.random();
            candidate[i] = current[i] + (u - 0.5) * widths[i];
        }
        if candidate
            .iter()
            .zip(lo.iter().zip(hi.iter()))
            .all(|(&v, (&l, &h))| v >= l && v <= h)
        {
            return Ok(candidate);
        }
    }
    Err(Error::ProposalExhausted { block })
}

/// Runs the Metropolis-within-Gibbs sampler.
///
/// Deterministic given `(seed, stream)`: the RNG is a counter-based ChaCha
/// stream and the draw order per iteration is fixed.
pub fn metropolis_within_gibbs<T: GibbsTarget>(
    target: &mut T,
    priors: &PriorSpec,
    props: &ProposalSpec,
    init: &SamplePoint,
    config: &McmcConfig,
) -> Result<Chain> {
    priors.validate()?;
    props.validate()?;
    if config.iterations < 1 {
        return Err(Error::Config("chain length must be at least 1".into()));
    }
    if !priors.contains(&priors.theta_lo, &priors.theta_hi, &init.theta)
        || !priors.contains(&priors.alpha_lo[0], &priors.alpha_hi[0], &init.alpha[0])
        || !priors.contains(&priors.alpha_lo[1], &priors.alpha_hi[1], &init.alpha[1])
    {
        return Err(Error::Config(
            "initial point lies outside the prior box".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);

    let mut state = *init;
    let mut ll = [
        target.experiment_loglik(0, &state.theta, &state.alpha[0])?,
        target.experiment_loglik(1, &state.theta, &state.alpha[1])?,
    ];

    let mut samples = Vec::with_capacity(config.iterations);
    let mut accepted = [0usize; 3];
    let block_order = if config.swap_alpha_blocks { [1, 0] } else { [0, 1] };

    for _ in 0..config.iterations {
        // Hyper-parameter blocks, one Metropolis step each.
        for &k in &block_order {
            let cand = propose_uniform(
                &state.alpha[k],
                &props.r_alpha,
                &priors.alpha_lo[k],
                &priors.alpha_hi[k],
                k,
                &mut rng,
            )?;
            let cand: [f64; ALPHA_DIM] = [cand[0], cand[1], cand[2]];
            let cand_ll = target.experiment_loglik(k, &state.theta, &cand)?;
            if metropolis_accept(cand_ll - ll[k], &mut rng) {
                state.alpha[k] = cand;
                ll[k] = cand_ll;
                accepted[k] += 1;
            }
        }
        // Device-parameter block against the full product likelihood.
        let cand = propose_uniform(
            &state.theta,
            &props.r_theta,
            &priors.theta_lo,
            &priors.theta_hi,
            2,
            &mut rng,
        )?;
        let cand: [f64; THETA_DIM] = [cand[0], cand[1], cand[2], cand[3], cand[4]];
        let cand_ll0 = target.experiment_loglik(0, &cand, &state.alpha[0])?;
        let cand_ll1 = target.experiment_loglik(1, &cand, &state.alpha[1])?;
        if metropolis_accept(cand_ll0 + cand_ll1 - ll[0] - ll[1], &mut rng) {
            state.theta = cand;
            ll = [cand_ll0, cand_ll1];
            accepted[2] += 1;
        }
        samples.push(state.row());
    }

    Ok(Chain {
        samples,
        accepted,
        seed: config.seed,
        stream: config.stream,
    })
}

/// Flat-prior Metropolis acceptance: accept iff `u <= exp(delta_loglik)`.
///
/// The uniform variate is always drawn so the RNG stream advances at a fixed
/// rate regardless of the decision.
fn metropolis_accept<R: Rng + ?Sized>(delta_ll: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    if delta_ll >= 0.0 {
        return true;
    }
    u <= math::exp(delta_ll)
}

/// Normalized histogram (density over equal-width bins).
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Lower edge of the first bin.
    pub lo: f64,
    /// Upper edge of the last bin.
    pub hi: f64,
    /// Densities per bin; `sum(density) * bin_width == 1`.
    pub densities: Vec<f64>,
}

impl Histogram {
    /// Bin width.
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.densities.len() as f64
    }

    /// Midpoint of the highest-density bin (the mode estimate).
    pub fn mode(&self) -> f64 {
        let (best, _) = self
            .densities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        self.lo + (best as f64 + 0.5) * self.bin_width()
    }

    fn build(values: &[f64], bins: usize) -> Histogram {
        let lo = values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let hi = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        if !(hi > lo) {
            // Degenerate chain: a single unit-mass bin of unit width.
            return Histogram {
                lo: lo - 0.5,
                hi: lo + 0.5,
                densities: alloc::vec![1.0],
            };
        }
        let mut counts = alloc::vec![0usize; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let n = values.len() as f64;
        Histogram {
            lo,
            hi,
            densities: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        }
    }
}

/// Summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    /// Posterior mean.
    pub mean: f64,
    /// Posterior standard deviation.
    pub std: f64,
    /// Mode estimate (midpoint of the highest-density histogram bin).
    pub mode: f64,
    /// Normalized histogram.
    pub histogram: Histogram,
}

/// Posterior summary over retained samples.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Per-parameter summaries in row layout `(theta, alpha0, alpha1)`.
    pub params: Vec<ParamSummary>,
    /// Hyper-parameter means transformed to `(sigma_eps, sigma_delta, ell)`,
    /// per experiment: each retained alpha sample is transformed, then
    /// averaged.
    pub hyper_means: [[f64; 3]; 2],
    /// Number of retained samples.
    pub retained: usize,
}

/// Number of histogram bins used by [`postprocess`].
pub const HISTOGRAM_BINS: usize = 50;

/// Burn-in removal, thinning and summary statistics.
pub fn postprocess(
    chain: &Chain,
    burn_in_fraction: f64,
    thinning: usize,
) -> Result<PosteriorSummary> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::Config(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    if thinning == 0 {
        return Err(Error::Config("thinning period must be at least 1".into()));
    }
    let rows = chain.retained(burn_in_fraction, thinning);
    if rows.len() < 10 {
        return Err(Error::TooFewSamples {
            retained: rows.len(),
        });
    }
    let n = rows.len() as f64;
    let mut params = Vec::with_capacity(SAMPLE_DIM);
    for j in 0..SAMPLE_DIM {
        let values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|&v| math::sq(v - mean)).sum::<f64>() / n;
        let histogram = Histogram::build(&values, HISTOGRAM_BINS);
        params.push(ParamSummary {
            mean,
            std: math::sqrt(var),
            mode: histogram.mode(),
            histogram,
        });
    }
    let mut hyper_means = [[0.0; 3]; 2];
    for k in 0..2 {
        let off = THETA_DIM + k * ALPHA_DIM;
        for row in &rows {
            hyper_means[k][0] += 1.0 / math::sqrt(row[off]);
            hyper_means[k][1] += 1.0 / math::sqrt(row[off + 1]);
            hyper_means[k][2] += row[off + 2];
        }
        for v in hyper_means[k].iter_mut() {
            *v /= n;
        }
    }
    Ok(PosteriorSummary {
        params,
        hyper_means,
        retained: rows.len(),
    })
}

/// Per-block acceptance rates and warning flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Acceptance fraction per block: `[alpha0, alpha1, theta]`.
    pub rates: [f64; 3],
    /// Flagged when a rate leaves the 20-25% target window.
    pub warn: [bool; 3],
}

/// Acceptance-rate diagnostics; trace arrays come from [`Chain::trace`].
pub fn acceptance_diagnostics(chain: &Chain) -> Diagnostics {
    assert!(!chain.is_empty(), "diagnostics need a nonempty chain");
    let m = chain.len() as f64;
    let mut rates = [0.0; 3];
    let mut warn = [false; 3];
    for b in 0..3 {
        rates[b] = chain.accepted[b] as f64 / m;
        warn[b] = !(0.20..=0.25).contains(&rates[b]);
    }
    Diagnostics { rates, warn }
}
