//! Lindblad propagation checked against an independent adaptive ODE
//! integration (Dormand-Prince 4/5), plus structural invariants of the flow.

use nalgebra::{Complex, SVector};
use quditchar_core::qudit::{
    build_decoherence_ops, build_rotating_hamiltonian, build_system_hamiltonian, populations,
    propagate, vectorize, ControlSegment, DensityMatrix, DeviceParams, LindbladGenerator, Op4,
    Parity, Propagator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

type C64 = Complex<f64>;
type State = SVector<C64, 16>;

fn device(tau: f64) -> DeviceParams {
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

fn free_generator(params: &DeviceParams, parity: Parity) -> LindbladGenerator {
    let hs = build_system_hamiltonian(params, parity);
    let h = build_rotating_hamiltonian(&hs, params.drive01, &ControlSegment::OFF);
    let (l1, l2) = build_decoherence_ops(params);
    LindbladGenerator::new(&h, &l1, &l2).unwrap()
}

/// Dormand-Prince 4(5) with adaptive steps; independent of the matrix
/// exponential used by the implementation.
fn rk45(gen: &LindbladGenerator, z0: State, t_end: f64, tol: f64) -> State {
    let l = gen.superop();
    let f = |z: &State| l * z;

    let mut t = 0.0;
    let mut z = z0;
    let mut h = 1e-4;
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        let k1 = f(&z);
        let k2 = f(&(z + k1 * c(h / 5.0)));
        let k3 = f(&(z + k1 * c(3.0 * h / 40.0) + k2 * c(9.0 * h / 40.0)));
        let k4 = f(&(z + k1 * c(44.0 / 45.0 * h) - k2 * c(56.0 / 15.0 * h) + k3 * c(32.0 / 9.0 * h)));
        let k5 = f(&(z
            + k1 * c(19372.0 / 6561.0 * h)
            - k2 * c(25360.0 / 2187.0 * h)
            + k3 * c(64448.0 / 6561.0 * h)
            - k4 * c(212.0 / 729.0 * h)));
        let k6 = f(&(z
            + k1 * c(9017.0 / 3168.0 * h)
            - k2 * c(355.0 / 33.0 * h)
            + k3 * c(46732.0 / 5247.0 * h)
            + k4 * c(49.0 / 176.0 * h)
            - k5 * c(5103.0 / 18656.0 * h)));
        let z5 = z
            + k1 * c(35.0 / 384.0 * h)
            + k3 * c(500.0 / 1113.0 * h)
            + k4 * c(125.0 / 192.0 * h)
            - k5 * c(2187.0 / 6784.0 * h)
            + k6 * c(11.0 / 84.0 * h);
        let k7 = f(&z5);
        let z4 = z
            + k1 * c(5179.0 / 57600.0 * h)
            + k3 * c(7571.0 / 16695.0 * h)
            + k4 * c(393.0 / 640.0 * h)
            - k5 * c(92097.0 / 339200.0 * h)
            + k6 * c(187.0 / 2100.0 * h)
            + k7 * c(h / 40.0);
        let err = (z5 - z4).norm();
        let scale = tol * z.norm().max(1.0);
        if err <= scale {
            t += h;
            z = z5;
        }
        let factor = if err > 0.0 {
            0.9 * (scale / err).powf(0.2)
        } else {
            5.0
        };
        h *= factor.clamp(0.2, 5.0);
    }
    z
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn superposition_state() -> DensityMatrix {
    // 50/50 superposition of |0> and |1> with a touch of level 2.
    let mut m = Op4::zeros();
    m[(0, 0)] = c(0.45);
    m[(1, 1)] = c(0.45);
    m[(2, 2)] = c(0.10);
    m[(0, 1)] = C64::new(0.4, 0.1);
    m[(1, 0)] = C64::new(0.4, -0.1);
    DensityMatrix::new(m).unwrap()
}

#[test]
fn propagation_matches_adaptive_ode_oracle() {
    let params = device(std::f64::consts::TAU);
    let gen = free_generator(&params, Parity::Minus);
    let rho0 = superposition_state();
    for &t in &[0.5, 3.0, 10.0] {
        let by_expm = propagate(&gen, &rho0, t).unwrap();
        let by_ode = rk45(&gen, vectorize(&rho0), t, 1e-11);
        let diff = (vectorize(&by_expm) - by_ode)
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(diff < 1e-8, "t = {t}: max-norm gap {diff:e}");
    }
}

#[test]
fn propagation_matches_ode_with_controls_on() {
    let params = device(std::f64::consts::TAU);
    let hs = build_system_hamiltonian(&params, Parity::Plus);
    let seg = ControlSegment::new(0.5, 40.0, -25.0).unwrap();
    let h = build_rotating_hamiltonian(&hs, params.drive12, &seg);
    let (l1, l2) = build_decoherence_ops(&params);
    let gen = LindbladGenerator::new(&h, &l1, &l2).unwrap();
    let rho0 = DensityMatrix::basis_state(1);
    let by_expm = propagate(&gen, &rho0, 0.5).unwrap();
    let by_ode = rk45(&gen, vectorize(&rho0), 0.5, 1e-11);
    let diff = (vectorize(&by_expm) - by_ode)
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    assert!(diff < 1e-8, "max-norm gap {diff:e}");
}

#[test]
fn flow_preserves_density_matrix_invariants() {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let tau = std::f64::consts::TAU;
    for trial in 0..8 {
        let params = DeviceParams::new(
            tau * rng.random_range(3000.0..3600.0),
            tau * 3240.0,
            tau * 3240.3,
            rng.random_range(2.0..20.0),
            rng.random_range(1.0..5.0),
            [
                rng.random_range(50.0..400.0),
                rng.random_range(50.0..200.0),
                rng.random_range(50.0..200.0),
            ],
            tau * 3031.0,
            tau * 3447.6698,
            tau * 3239.2576,
        )
        .unwrap();
        let parity = if trial % 2 == 0 { Parity::Minus } else { Parity::Plus };
        let hs = build_system_hamiltonian(&params, parity);
        let seg = if trial % 3 == 0 {
            ControlSegment::OFF
        } else {
            ControlSegment::new(0.0, rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0))
                .unwrap()
        };
        let h = build_rotating_hamiltonian(&hs, params.drive01, &seg);
        let (l1, l2) = build_decoherence_ops(&params);
        let gen = LindbladGenerator::new(&h, &l1, &l2).unwrap();
        // Single application: the output meets the strict type invariants.
        propagate(&gen, &superposition_state(), 2.0)
            .unwrap()
            .validate()
            .unwrap_or_else(|e| panic!("one-shot propagation broke invariants: {e}"));

        // A 10 us incremental sweep accumulates rounding; trace preservation
        // is then bounded by the generator-level 1e-10 tolerance.
        let step = Propagator::new(&gen, 0.02).unwrap();
        let mut rho = superposition_state();
        for k in 0..500 {
            rho = step.apply(&rho);
            if k % 100 == 99 {
                let m = rho.matrix();
                let tr = m.trace();
                assert!(
                    (tr.re - 1.0).abs() < 1e-10 && tr.im.abs() < 1e-10,
                    "trace drifted to {tr} at step {k} of trial {trial}"
                );
                let herm = (m - m.adjoint())
                    .iter()
                    .fold(0.0f64, |mx, z| mx.max(z.norm()));
                assert!(herm < 1e-12, "hermiticity {herm:e} at step {k}");
                let eig = m.symmetric_eigen();
                assert!(
                    eig.eigenvalues.iter().all(|&l| l >= -1e-10),
                    "negative eigenvalue at step {k} of trial {trial}"
                );
                let p = populations(&rho);
                let sum: f64 = p.iter().sum();
                assert!(p.iter().all(|&x| x >= -1e-10 && x <= 1.0 + 1e-10));
                assert!(sum <= 1.0 + 1e-9);
            }
        }
    }
}

#[test]
fn semigroup_property_holds() {
    let params = device(std::f64::consts::TAU);
    let gen = free_generator(&params, Parity::Plus);
    let rho0 = superposition_state();
    let (t1, t2) = (0.73, 1.54);
    let once = propagate(&gen, &rho0, t1 + t2).unwrap();
    let twice = propagate(&gen, &propagate(&gen, &rho0, t1).unwrap(), t2).unwrap();
    let diff = (once.matrix() - twice.matrix())
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    assert!(diff < 1e-10, "semigroup gap {diff:e}");
}

#[test]
fn purity_is_conserved_without_decoherence() {
    let params = device(std::f64::consts::TAU);
    let hs = build_system_hamiltonian(&params, Parity::Minus);
    let h = build_rotating_hamiltonian(&hs, params.drive01, &ControlSegment::OFF);
    let gen = LindbladGenerator::new(&h, &Op4::zeros(), &Op4::zeros()).unwrap();
    let mut m = Op4::zeros();
    m[(0, 0)] = c(0.5);
    m[(1, 1)] = c(0.5);
    m[(0, 1)] = c(0.5);
    m[(1, 0)] = c(0.5);
    let rho0 = DensityMatrix::new(m).unwrap(); // pure superposition
    let purity0 = rho0.purity();
    let rho = propagate(&gen, &rho0, 4.0).unwrap();
    assert!(
        (rho.purity() - purity0).abs() < 1e-10,
        "purity drifted: {} -> {}",
        purity0,
        rho.purity()
    );
}

#[test]
fn analytic_decay_of_first_excited_population() {
    let params = device(std::f64::consts::TAU);
    let gen = free_generator(&params, Parity::Minus);
    let step = Propagator::new(&gen, 0.02).unwrap();
    let mut rho = DensityMatrix::basis_state(1);
    for i in 1..=500 {
        rho = step.apply(&rho);
        if i % 125 == 0 {
            let t = i as f64 * 0.02;
            let expected = (-t / params.t1[0]).exp();
            assert!(
                (rho.populations()[1] - expected).abs() < 1e-6,
                "t = {t}: p1 = {} vs {expected}",
                rho.populations()[1]
            );
        }
    }
}
