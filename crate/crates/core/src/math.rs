//! Scalar math shims for `no_std` builds, plus a few small helpers.
//!
//! Core code must use these instead of the `std` inherent float methods.
#![allow(missing_docs)] // thin libm wrappers, names say it all

use rand::Rng;

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline(always)]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline(always)]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline(always)]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline(always)]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline(always)]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline(always)]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline(always)]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline(always)]
pub fn fabs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline(always)]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline(always)]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

/// `x * x`.
#[inline(always)]
pub fn sq(x: f64) -> f64 {
    x * x
}

/// Standard normal draw via Box-Muller.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    sqrt(-2.0 * ln(u1)) * cos(2.0 * core::f64::consts::PI * u2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn shims_match_std() {
        // libm and std may differ in the last ulp.
        let close = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs();
        for &x in &[0.3, 1.7, 9.25] {
            assert!(close(exp(x), x.exp()));
            assert!(close(ln(x), x.ln()));
            assert_eq!(sqrt(x), x.sqrt());
            assert!(close(powf(x, 1.3), x.powf(1.3)));
        }
    }

    #[test]
    fn normal_draws_have_unit_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = standard_normal(&mut rng);
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(fabs(mean) < 0.01, "mean {mean}");
        assert!(fabs(var - 1.0) < 0.02, "var {var}");
    }
}
