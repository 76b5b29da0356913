//! Four-level transmon model: Hamiltonians in the rotating frame, decay and
//! dephasing operators, and Lindblad propagation via matrix exponentiation.
//!
//! Conventions: time in microseconds, angular frequency in rad/us. Density
//! matrices are vectorized column-major; the superoperator acts on
//! `vec(rho)[i + 4j] = rho[(i, j)]`.

use alloc::format;
use nalgebra::{Complex, Matrix4, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::math;

type C64 = Complex<f64>;
/// 4x4 complex matrix (Hilbert space of the qudit with one guard level).
pub type Op4 = Matrix4<C64>;
/// 16x16 complex matrix acting on vectorized density matrices.
pub type Super16 = SMatrix<C64, 16, 16>;
type Vec16 = SVector<C64, 16>;

/// Hermiticity tolerance for density matrices.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalue floor for positive semidefiniteness checks.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;

/// Charge-parity branch of the 1<->2 transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// Branch with the lower transition frequency.
    Minus,
    /// Branch with the higher transition frequency.
    Plus,
}

impl Parity {
    /// Both branches, in a fixed order.
    pub const BOTH: [Parity; 2] = [Parity::Minus, Parity::Plus];
}

/// Device parameters of the qudit.
///
/// The inferred vector is `(omega01, omega12_minus, omega12_plus, t2_1, t2_2)`;
/// the decay times, the guard-level frequency and the calibrated drive
/// frequencies are fixed inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    /// 0<->1 transition frequency (rad/us).
    pub omega01: f64,
    /// 1<->2 transition frequency, negative parity branch (rad/us).
    pub omega12_minus: f64,
    /// 1<->2 transition frequency, positive parity branch (rad/us).
    pub omega12_plus: f64,
    /// Pure dephasing time of level 1 (us).
    pub t2_1: f64,
    /// Pure dephasing time of level 2 (us).
    pub t2_2: f64,
    /// Fixed decay times (T1,1, T1,2, T1,3) (us).
    pub t1: [f64; 3],
    /// 2<->3 transition frequency of the guard level (rad/us).
    pub omega23: f64,
    /// Calibrated drive frequency for the 0<->1 experiment (rad/us).
    pub drive01: f64,
    /// Calibrated drive frequency for the 1<->2 experiment (rad/us).
    pub drive12: f64,
}

impl DeviceParams {
    /// Validates all invariants and returns the parameter set.
    pub fn new(
        omega01: f64,
        omega12_minus: f64,
        omega12_plus: f64,
        t2_1: f64,
        t2_2: f64,
        t1: [f64; 3],
        omega23: f64,
        drive01: f64,
        drive12: f64,
    ) -> Result<Self> {
        let positive = [
            ("omega01", omega01),
            ("omega12_minus", omega12_minus),
            ("omega12_plus", omega12_plus),
            ("t2_1", t2_1),
            ("t2_2", t2_2),
            ("t1_1", t1[0]),
            ("t1_2", t1[1]),
            ("t1_3", t1[2]),
            ("omega23", omega23),
            ("drive01", drive01),
            ("drive12", drive12),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    why: format!("must be strictly positive, got {value}"),
                });
            }
        }
        if !(omega12_minus < omega12_plus) {
            return Err(Error::InvalidParam {
                name: "omega12_minus",
                why: format!(
                    "parity branches must be ordered: {omega12_minus} >= {omega12_plus}"
                ),
            });
        }
        Ok(Self {
            omega01,
            omega12_minus,
            omega12_plus,
            t2_1,
            t2_2,
            t1,
            omega23,
            drive01,
            drive12,
        })
    }

    /// The 1<->2 frequency on the given parity branch.
    pub fn omega12(&self, parity: Parity) -> f64 {
        match parity {
            Parity::Minus => self.omega12_minus,
            Parity::Plus => self.omega12_plus,
        }
    }

    /// Guard-level dephasing time; tied to `t2_2` (the guard level only
    /// suppresses truncation error, its dephasing is not separately resolved).
    pub fn t2_3(&self) -> f64 {
        self.t2_2
    }
}

/// A piecewise-constant control segment in the rotating frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSegment {
    /// Segment duration (us).
    pub duration: f64,
    /// In-phase envelope amplitude (rad/us).
    pub i_amp: f64,
    /// Quadrature envelope amplitude (rad/us).
    pub q_amp: f64,
}

impl ControlSegment {
    /// Validated constructor; the duration must be nonnegative.
    pub fn new(duration: f64, i_amp: f64, q_amp: f64) -> Result<Self> {
        if !(duration >= 0.0) {
            return Err(Error::InvalidParam {
                name: "duration",
                why: format!("must be nonnegative, got {duration}"),
            });
        }
        Ok(Self {
            duration,
            i_amp,
            q_amp,
        })
    }

    /// Controls switched off.
    pub const OFF: ControlSegment = ControlSegment {
        duration: 0.0,
        i_amp: 0.0,
        q_amp: 0.0,
    };
}

/// 4x4 Hermitian, unit-trace, positive-semidefinite state of the qudit.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Op4);

impl DensityMatrix {
    /// Pure basis state `|k><k|`.
    pub fn basis_state(k: usize) -> Self {
        assert!(k < 4);
        let mut m = Op4::zeros();
        m[(k, k)] = C64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    /// The ground state `|0><0|`.
    pub fn ground() -> Self {
        Self::basis_state(0)
    }

    /// Wraps a matrix after validating the density-matrix invariants.
    pub fn new(m: Op4) -> Result<Self> {
        let dm = DensityMatrix(m);
        dm.validate()?;
        Ok(dm)
    }

    /// Wraps a matrix without validation.
    pub fn from_matrix_unchecked(m: Op4) -> Self {
        DensityMatrix(m)
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &Op4 {
        &self.0
    }

    /// Checks Hermiticity, unit trace and positive semidefiniteness to the
    /// documented tolerances.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(HERMITICITY_TOL, TRACE_TOL, EIGENVALUE_FLOOR)
    }

    /// Invariant check with explicit tolerances (propagation over long
    /// horizons accumulates rounding beyond the constructor-grade bounds).
    pub fn validate_with(&self, herm_tol: f64, trace_tol: f64, eig_floor: f64) -> Result<()> {
        let dev = hermiticity_deviation(&self.0);
        if dev > herm_tol {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let tr = self.0.trace();
        if math::fabs(tr.re - 1.0) > trace_tol || math::fabs(tr.im) > trace_tol {
            return Err(Error::InvalidParam {
                name: "trace",
                why: format!("expected 1, got {} + {}i", tr.re, tr.im),
            });
        }
        let eig = self.0.symmetric_eigen();
        for &l in eig.eigenvalues.iter() {
            if l < eig_floor {
                return Err(Error::InvalidParam {
                    name: "eigenvalues",
                    why: format!("negative eigenvalue {l}"),
                });
            }
        }
        Ok(())
    }

    /// Measurable populations `(p0, p1, p2)`; the guard level is excluded.
    pub fn populations(&self) -> [f64; 3] {
        [self.0[(0, 0)].re, self.0[(1, 1)].re, self.0[(2, 2)].re]
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// Conjugation `U rho U^dagger`.
    pub fn transformed(&self, u: &Op4) -> DensityMatrix {
        DensityMatrix(u * self.0 * u.adjoint())
    }

    /// Pointwise convex mixture `(rho + other) / 2`.
    pub fn averaged_with(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix((self.0 + other.0) * C64::new(0.5, 0.0))
    }
}

/// Lowering operator of the 4-level ladder (`sqrt(k+1)` on the superdiagonal).
pub fn lowering_operator() -> Op4 {
    let mut a = Op4::zeros();
    for k in 0..3 {
        a[(k, k + 1)] = C64::new(math::sqrt((k + 1) as f64), 0.0);
    }
    a
}

/// System Hamiltonian `diag(0, w01, w01+w12, w01+w12+w23)` from raw
/// frequencies (rad/us).
pub fn system_hamiltonian(omega01: f64, omega12: f64, omega23: f64) -> Op4 {
    let mut h = Op4::zeros();
    h[(1, 1)] = C64::new(omega01, 0.0);
    h[(2, 2)] = C64::new(omega01 + omega12, 0.0);
    h[(3, 3)] = C64::new(omega01 + omega12 + omega23, 0.0);
    h
}

/// System Hamiltonian with the 1<->2 frequency chosen by parity.
pub fn build_system_hamiltonian(params: &DeviceParams, parity: Parity) -> Op4 {
    system_hamiltonian(params.omega01, params.omega12(parity), params.omega23)
}

/// Rotating-frame Hamiltonian under the rotating wave approximation:
/// `Hs - wd a^dagger a + I (a + a^dagger) - i Q (a - a^dagger)`.
pub fn build_rotating_hamiltonian(hs: &Op4, omega_d: f64, seg: &ControlSegment) -> Op4 {
    let a = lowering_operator();
    let ad = a.adjoint();
    let number = &ad * &a;
    let mut h = hs - number * C64::new(omega_d, 0.0);
    if seg.i_amp != 0.0 {
        h += (a + ad) * C64::new(seg.i_amp, 0.0);
    }
    if seg.q_amp != 0.0 {
        h += (a - ad) * C64::new(0.0, -seg.q_amp);
    }
    h
}

/// Decay and dephasing rates derived from the time constants.
///
/// `sqrt(gamma_1k) = sqrt(1/T1_k)`; the dephasing amplitudes follow the
/// recurrence `gamma_20 = 0`, `sqrt(gamma_2k) = sqrt(gamma_2,k-1) + sqrt(2/T2_k)`.
pub fn build_decoherence_ops(params: &DeviceParams) -> (Op4, Op4) {
    let mut l1 = Op4::zeros();
    for k in 0..3 {
        l1[(k, k + 1)] = C64::new(math::sqrt(1.0 / params.t1[k]), 0.0);
    }
    let t2 = [params.t2_1, params.t2_2, params.t2_3()];
    let mut l2 = Op4::zeros();
    let mut sqrt_gamma = 0.0;
    for (k, &t) in t2.iter().enumerate() {
        sqrt_gamma += math::sqrt(2.0 / t);
        l2[(k + 1, k + 1)] = C64::new(sqrt_gamma, 0.0);
    }
    (l1, l2)
}

/// Generator of the Lindblad semigroup acting on vectorized density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladGenerator {
    superop: Super16,
    /// Parity branch this generator was built for, when applicable.
    pub parity: Option<Parity>,
    /// Control segment the rotating Hamiltonian was built from.
    pub segment: ControlSegment,
}

impl LindbladGenerator {
    /// Assembles the superoperator
    /// `-i (H . - . H) + sum_j (L_j . L_j^dagger - 1/2 {L_j^dagger L_j, .})`
    /// in the column-major vectorization convention.
    pub fn new(h_rot: &Op4, l1: &Op4, l2: &Op4) -> Result<Self> {
        let dev = hermiticity_deviation(h_rot);
        let scale = 1.0 + h_rot.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if dev > 1e-12 * scale {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let id = Op4::identity();
        let minus_i = C64::new(0.0, -1.0);
        let half = C64::new(0.5, 0.0);

        let mut s = (conjugation_map(h_rot, &id) - conjugation_map(&id, h_rot)) * minus_i;
        for l in [l1, l2] {
            let ldl = l.adjoint() * l;
            s += conjugation_map(l, &l.adjoint());
            s -= conjugation_map(&ldl, &id) * half;
            s -= conjugation_map(&id, &ldl) * half;
        }
        Ok(Self {
            superop: s,
            parity: None,
            segment: ControlSegment::OFF,
        })
    }

    /// Attaches branch and control metadata.
    pub fn with_meta(mut self, parity: Option<Parity>, segment: ControlSegment) -> Self {
        self.parity = parity;
        self.segment = segment;
        self
    }

    /// The 16x16 superoperator.
    pub fn superop(&self) -> &Super16 {
        &self.superop
    }
}

/// Superoperator of the map `rho -> A rho B` in column-major vectorization.
fn conjugation_map(a: &Op4, b: &Op4) -> Super16 {
    let mut m = Super16::zeros();
    for j in 0..4 {
        for i in 0..4 {
            for l in 0..4 {
                for k in 0..4 {
                    m[(i + 4 * j, k + 4 * l)] = a[(i, k)] * b[(l, j)];
                }
            }
        }
    }
    m
}

fn hermiticity_deviation(m: &Op4) -> f64 {
    let diff = m - m.adjoint();
    diff.iter().fold(0.0f64, |mx, z| mx.max(z.norm()))
}

/// Column-major vectorization.
pub fn vectorize(rho: &DensityMatrix) -> Vec16 {
    let m = rho.matrix();
    Vec16::from_fn(|idx, _| m[(idx % 4, idx / 4)])
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &Vec16) -> DensityMatrix {
    DensityMatrix::from_matrix_unchecked(Op4::from_fn(|i, j| v[i + 4 * j]))
}

/// Evolves `rho` for a nonnegative time under the generator.
pub fn propagate(gen: &LindbladGenerator, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime { t });
    }
    let step = expm(&(gen.superop * C64::new(t, 0.0)));
    let out = unvectorize(&(step * vectorize(rho)));
    debug_assert!(out.validate().is_ok());
    Ok(out)
}

/// Precomputed `exp(L dt)` for incremental dark-time sweeps.
///
/// Uniform grids must reuse one propagator and apply it repeatedly instead of
/// re-exponentiating per grid point.
#[derive(Debug, Clone)]
pub struct Propagator {
    step: Super16,
    /// Time advanced per application (us).
    pub dt: f64,
}

impl Propagator {
    /// Exponentiates the generator once for the given step.
    pub fn new(gen: &LindbladGenerator, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(Error::NegativeTime { t: dt });
        }
        Ok(Self {
            step: expm(&(gen.superop * C64::new(dt, 0.0))),
            dt,
        })
    }

    /// Advances the state by `dt`.
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        unvectorize(&(self.step * vectorize(rho)))
    }
}

/// Measured populations of a state (diagonal entries 0..2).
pub fn populations(rho: &DensityMatrix) -> [f64; 3] {
    rho.populations()
}

#[cfg(test)]
pub(crate) fn test_params() -> DeviceParams {
    // Frequencies near the device calibration, in rad/us.
    let tau = core::f64::consts::TAU;
    DeviceParams::new(
        tau * 3448.646,
        tau * 3240.105,
        tau * 3240.403,
        13.07,
        2.73,
        [258.39, 100.79, 100.79],
        tau * (2.0 * 3240.254 - 3448.646),
        tau * 3447.6698,
        tau * 3239.2576,
    )
    .unwrap()
}
