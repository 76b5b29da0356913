//! Ramsey `k <-> k+1` experiment synthesis and spectral analysis.
//!
//! A run prepares `|k>`, applies a detuned pi/2 pulse, evolves freely over
//! the dark time, applies a second pi/2 pulse and reads the populations.
//! Both charge-parity branches are simulated and their density matrices
//! averaged, mirroring how shots average over parity flips on hardware.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::math;
use crate::qudit::{
    build_decoherence_ops, build_rotating_hamiltonian, build_system_hamiltonian, ControlSegment,
    DensityMatrix, DeviceParams, LindbladGenerator, Op4, Parity, Propagator,
};

type C64 = Complex<f64>;

/// Which transition the experiment probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Ramsey 0<->1.
    ZeroOne,
    /// Ramsey 1<->2 (with a state-preparation pi pulse on 0<->1).
    OneTwo,
}

impl Experiment {
    /// Index of the lower level of the probed transition.
    pub fn lower_level(self) -> usize {
        match self {
            Experiment::ZeroOne => 0,
            Experiment::OneTwo => 1,
        }
    }

    /// Numeric tag (0 or 1) used in file headers.
    pub fn index(self) -> usize {
        self.lower_level()
    }

    /// Population components informative for this experiment.
    pub fn included_components(self) -> [usize; 2] {
        match self {
            Experiment::ZeroOne => [0, 1],
            Experiment::OneTwo => [1, 2],
        }
    }
}

/// Pulse realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseMode {
    /// Instantaneous unitary rotations; no decoherence during pulses.
    IdealRotation,
    /// Constant-amplitude rotating-frame segments of finite duration.
    ///
    /// The two pi/2 pulses of the Ramsey pair are realized as segments with
    /// the given in-phase amplitude (rad/us); state preparation stays ideal
    /// so that a single rotating frame suffices.
    FinitePulse {
        /// In-phase drive amplitude (rad/us).
        amplitude: f64,
    },
}

/// Configuration of one Ramsey experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyConfig {
    /// Probed transition.
    pub experiment: Experiment,
    /// Number of dark times.
    pub n: usize,
    /// Dark-time step (us); the grid is `t_i = i * dt`, `i = 1..=n`.
    pub dt: f64,
    /// Angular drive frequency defining the rotating frame (rad/us).
    pub drive_frequency: f64,
    /// Pulse realization.
    pub pulse_mode: PulseMode,
}

impl RamseyConfig {
    /// Validated constructor.
    pub fn new(
        experiment: Experiment,
        n: usize,
        dt: f64,
        drive_frequency: f64,
        pulse_mode: PulseMode,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParam {
                name: "n",
                why: "at least one dark time required".into(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParam {
                name: "dt",
                why: format!("step must be positive, got {dt}"),
            });
        }
        if !(drive_frequency > 0.0) {
            return Err(Error::InvalidParam {
                name: "drive_frequency",
                why: format!("must be positive, got {drive_frequency}"),
            });
        }
        if let PulseMode::FinitePulse { amplitude } = pulse_mode {
            if !(amplitude > 0.0) {
                return Err(Error::InvalidParam {
                    name: "pulse amplitude",
                    why: format!("must be positive, got {amplitude}"),
                });
            }
        }
        Ok(Self {
            experiment,
            n,
            dt,
            drive_frequency,
            pulse_mode,
        })
    }

    /// The uniform dark-time grid.
    pub fn dark_times(&self) -> Vec<f64> {
        (1..=self.n).map(|i| i as f64 * self.dt).collect()
    }
}

/// Simulated (or measured) population curves of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyDataset {
    /// Experiment configuration, including the dark-time grid.
    pub config: RamseyConfig,
    /// Population series indexed by state `s` in 0..=2.
    pub populations: [Vec<f64>; 3],
}

impl RamseyDataset {
    /// The dark-time grid.
    pub fn dark_times(&self) -> Vec<f64> {
        self.config.dark_times()
    }

    /// Population series of state `s`.
    pub fn series(&self, s: usize) -> &[f64] {
        &self.populations[s]
    }
}

/// Ideal rotation `exp(-i (angle/2) sigma_x)` on the `(k, k+1)` subspace,
/// embedded with identity elsewhere.
fn subspace_rotation(k: usize, angle: f64) -> Op4 {
    let mut u = Op4::identity();
    let c = C64::new(math::cos(angle / 2.0), 0.0);
    let s = C64::new(0.0, -math::sin(angle / 2.0));
    u[(k, k)] = c;
    u[(k + 1, k + 1)] = c;
    u[(k, k + 1)] = s;
    u[(k + 1, k)] = s;
    u
}

/// How a pulse is applied to a state.
enum Pulse {
    Unitary(Op4),
    Segment(Propagator),
}

impl Pulse {
    fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        match self {
            Pulse::Unitary(u) => rho.transformed(u),
            Pulse::Segment(p) => p.apply(rho),
        }
    }
}

/// One parity branch of an experiment, ready for a dark-time sweep.
struct Branch {
    start: DensityMatrix,
    dark: Propagator,
    readout: Pulse,
}

impl Branch {
    fn build(params: &DeviceParams, config: &RamseyConfig, parity: Parity) -> Result<Self> {
        let k = config.experiment.lower_level();
        let hs = build_system_hamiltonian(params, parity);
        let (l1, l2) = build_decoherence_ops(params);
        let free_h = build_rotating_hamiltonian(&hs, config.drive_frequency, &ControlSegment::OFF);
        let free = LindbladGenerator::new(&free_h, &l1, &l2)?
            .with_meta(Some(parity), ControlSegment::OFF);

        // State preparation: |0>, plus an ideal pi pulse on 0<->1 for the
        // 1<->2 experiment.
        let mut rho = DensityMatrix::ground();
        if config.experiment == Experiment::OneTwo {
            rho = rho.transformed(&subspace_rotation(0, core::f64::consts::PI));
        }

        let half_pi = match config.pulse_mode {
            PulseMode::IdealRotation => {
                Pulse::Unitary(subspace_rotation(k, core::f64::consts::FRAC_PI_2))
            }
            PulseMode::FinitePulse { amplitude } => {
                // Rabi angle = 2 * amplitude * sqrt(k+1) * duration.
                let duration = core::f64::consts::FRAC_PI_2
                    / (2.0 * amplitude * math::sqrt((k + 1) as f64));
                let seg = ControlSegment::new(duration, amplitude, 0.0)?;
                let h = build_rotating_hamiltonian(&hs, config.drive_frequency, &seg);
                let gen = LindbladGenerator::new(&h, &l1, &l2)?.with_meta(Some(parity), seg);
                Pulse::Segment(Propagator::new(&gen, duration)?)
            }
        };

        let start = half_pi.apply(&rho);
        let dark = Propagator::new(&free, config.dt)?;
        Ok(Self {
            start,
            dark,
            readout: half_pi,
        })
    }
}

/// Simulates a single parity branch.
pub fn simulate_single_parity(
    params: &DeviceParams,
    config: &RamseyConfig,
    parity: Parity,
) -> Result<RamseyDataset> {
    let branch = Branch::build(params, config, parity)?;
    let mut populations: [Vec<f64>; 3] = core::array::from_fn(|_| Vec::with_capacity(config.n));
    let mut rho = branch.start.clone();
    for _ in 0..config.n {
        rho = branch.dark.apply(&rho);
        let measured = branch.readout.apply(&rho);
        let p = measured.populations();
        for s in 0..3 {
            populations[s].push(p[s]);
        }
    }
    Ok(RamseyDataset {
        config: config.clone(),
        populations,
    })
}

/// Simulates the experiment with parity averaging: both branches are evolved
/// and the measured density matrices averaged, `rho = (rho_plus + rho_minus)/2`,
/// before populations are extracted.
pub fn simulate_ramsey(params: &DeviceParams, config: &RamseyConfig) -> Result<RamseyDataset> {
    let minus = Branch::build(params, config, Parity::Minus)?;
    let plus = Branch::build(params, config, Parity::Plus)?;
    let mut populations: [Vec<f64>; 3] = core::array::from_fn(|_| Vec::with_capacity(config.n));
    let mut rho_m = minus.start.clone();
    let mut rho_p = plus.start.clone();
    for _ in 0..config.n {
        rho_m = minus.dark.apply(&rho_m);
        rho_p = plus.dark.apply(&rho_p);
        let avg = minus
            .readout
            .apply(&rho_m)
            .averaged_with(&plus.readout.apply(&rho_p));
        let p = avg.populations();
        for s in 0..3 {
            populations[s].push(p[s]);
        }
    }
    Ok(RamseyDataset {
        config: config.clone(),
        populations,
    })
}

/// State after a single Ramsey sequence with the given dark time.
///
/// Reference path for tests; the sweep in [`simulate_ramsey`] must agree.
pub fn ramsey_single(
    params: &DeviceParams,
    config: &RamseyConfig,
    parity: Parity,
    dark_time: f64,
) -> Result<DensityMatrix> {
    let branch = Branch::build(params, config, parity)?;
    let steps = math::round(dark_time / config.dt) as usize;
    let mut rho = branch.start.clone();
    if math::fabs(steps as f64 * config.dt - dark_time) < 1e-12 {
        for _ in 0..steps {
            rho = branch.dark.apply(&rho);
        }
    } else {
        let hs = build_system_hamiltonian(params, parity);
        let (l1, l2) = build_decoherence_ops(params);
        let h = build_rotating_hamiltonian(&hs, config.drive_frequency, &ControlSegment::OFF);
        let free = LindbladGenerator::new(&h, &l1, &l2)?;
        rho = crate::qudit::propagate(&free, &rho, dark_time)?;
    }
    Ok(branch.readout.apply(&rho))
}

/// One-sided DFT magnitudes of the mean-removed series.
///
/// Frequencies are in cycles per microsecond (MHz) on the grid implied by
/// the dataset's step.
pub fn detuning_spectrum(data: &RamseyDataset, state: usize) -> Result<Vec<(f64, f64)>> {
    assert!(state < 3);
    let series = data.series(state);
    spectrum_of_series(series, data.config.dt)
}

/// One-sided DFT magnitudes of an arbitrary uniform series.
pub fn spectrum_of_series(series: &[f64], dt: f64) -> Result<Vec<(f64, f64)>> {
    let n = series.len();
    if n < 8 {
        return Err(Error::SeriesTooShort { n, required: 8 });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n / 2 + 1);
    for j in 0..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, &y) in series.iter().enumerate() {
            let phase = -core::f64::consts::TAU * (j * k) as f64 / n as f64;
            let v = y - mean;
            re += v * math::cos(phase);
            im += v * math::sin(phase);
        }
        let freq = j as f64 / (n as f64 * dt);
        out.push((freq, math::hypot(re, im)));
    }
    Ok(out)
}

/// Interior local maxima of a spectrum with magnitude at least
/// `min_rel_height` times the global maximum.
pub fn spectrum_peaks(spectrum: &[(f64, f64)], min_rel_height: f64) -> Vec<(f64, f64)> {
    let max = spectrum.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
    if max <= 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for j in 1..spectrum.len().saturating_sub(1) {
        let (f, v) = spectrum[j];
        if v > spectrum[j - 1].1 && v > spectrum[j + 1].1 && v >= min_rel_height * max {
            peaks.push((f, v));
        }
    }
    peaks
}

/// Decay time of the oscillation envelope, by demodulation at `freq`
/// (cycles/us) followed by a log-linear fit of the local amplitude.
pub fn oscillation_envelope_decay(times: &[f64], values: &[f64], freq: f64) -> Result<f64> {
    let n = values.len();
    if n < 16 {
        return Err(Error::SeriesTooShort { n, required: 16 });
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let window = (1.0 / (freq * dt)).max(2.0) as usize;
    if window + 4 > n {
        return Err(Error::SeriesTooShort {
            n,
            required: window + 4,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    // Demodulate, then average over one period to isolate the envelope.
    let demod: Vec<(f64, f64)> = times
        .iter()
        .zip(values.iter())
        .map(|(&t, &y)| {
            let phase = -core::f64::consts::TAU * freq * t;
            let v = y - mean;
            (v * math::cos(phase), v * math::sin(phase))
        })
        .collect();
    let mut points = Vec::new();
    for start in 0..=(n - window) {
        let (mut re, mut im) = (0.0, 0.0);
        for &(r, i) in &demod[start..start + window] {
            re += r;
            im += i;
        }
        let amp = 2.0 * math::hypot(re, im) / window as f64;
        if amp > 1e-12 {
            let t_mid = times[start + window / 2];
            points.push((t_mid, math::ln(amp)));
        }
    }
    if points.len() < 8 {
        return Err(Error::Numeric("envelope has too few usable points".into()));
    }
    // Least-squares slope of ln(amplitude) vs time.
    let m = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    if !(slope < 0.0) {
        return Err(Error::Numeric(format!(
            "envelope does not decay (slope {slope})"
        )));
    }
    Ok(-1.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qudit::test_params;
    use approx::assert_relative_eq;

    fn config01(n: usize) -> RamseyConfig {
        let p = test_params();
        RamseyConfig::new(Experiment::ZeroOne, n, 0.02, p.drive01, PulseMode::IdealRotation)
            .unwrap()
    }

    fn config12(n: usize) -> RamseyConfig {
        let p = test_params();
        RamseyConfig::new(Experiment::OneTwo, n, 0.02, p.drive12, PulseMode::IdealRotation)
            .unwrap()
    }

    #[test]
    fn zero_dark_time_composes_to_a_pi_pulse() {
        let p = test_params();
        let rho = ramsey_single(&p, &config01(4), Parity::Minus, 0.0).unwrap();
        assert_relative_eq!(rho.populations()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sweep_matches_single_shot_sequence() {
        let p = test_params();
        let cfg = config12(10);
        let data = simulate_single_parity(&p, &cfg, Parity::Plus).unwrap();
        let single = ramsey_single(&p, &cfg, Parity::Plus, 5.0 * cfg.dt).unwrap();
        for s in 0..3 {
            assert_relative_eq!(
                data.populations[s][4],
                single.populations()[s],
                epsilon = 1e-11
            );
        }
    }

    #[test]
    fn parity_average_is_pointwise_mean_of_branches() {
        let p = test_params();
        let cfg = config12(32);
        let avg = simulate_ramsey(&p, &cfg).unwrap();
        let minus = simulate_single_parity(&p, &cfg, Parity::Minus).unwrap();
        let plus = simulate_single_parity(&p, &cfg, Parity::Plus).unwrap();
        for s in 0..3 {
            for i in 0..cfg.n {
                assert_relative_eq!(
                    avg.populations[s][i],
                    0.5 * (minus.populations[s][i] + plus.populations[s][i]),
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn swapping_parity_branches_leaves_average_unchanged() {
        // Exchanging the roles of the two branches is the same as swapping
        // omega12- and omega12+; the average must be exactly invariant.
        let p = test_params();
        let cfg = config12(24);
        let avg = simulate_ramsey(&p, &cfg).unwrap();
        let minus = simulate_single_parity(&p, &cfg, Parity::Minus).unwrap();
        let plus = simulate_single_parity(&p, &cfg, Parity::Plus).unwrap();
        for s in 0..3 {
            for i in 0..cfg.n {
                let forward = 0.5 * (minus.populations[s][i] + plus.populations[s][i]);
                let reversed = 0.5 * (plus.populations[s][i] + minus.populations[s][i]);
                assert_eq!(forward, reversed);
                assert_relative_eq!(avg.populations[s][i], forward, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn population_sums_stay_normalized_in_ideal_mode() {
        let p = test_params();
        let data = simulate_ramsey(&p, &config01(128)).unwrap();
        for i in 0..128 {
            let sum: f64 = (0..3).map(|s| data.populations[s][i]).sum();
            assert!(sum >= 1.0 - 1e-6 && sum <= 1.0 + 1e-9, "sum {sum}");
        }
    }

    #[test]
    fn spectrum_requires_eight_points() {
        let p = test_params();
        let data = simulate_ramsey(&p, &config01(4)).unwrap();
        assert!(matches!(
            detuning_spectrum(&data, 0),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn constant_series_has_empty_spectrum_and_no_peaks() {
        let spec = spectrum_of_series(&[0.7; 64], 0.02).unwrap();
        assert!(spec.iter().all(|&(_, v)| v < 1e-12));
        assert!(spectrum_peaks(&spec, 0.25).is_empty());
    }

    #[test]
    fn on_grid_cosine_yields_single_dominant_bin() {
        let n = 128;
        let dt = 0.05;
        let f = 10.0 / (n as f64 * dt); // exactly bin 10
        let series: Vec<f64> = (0..n)
            .map(|k| math::cos(core::f64::consts::TAU * f * (k as f64 * dt)))
            .collect();
        let spec = spectrum_of_series(&series, dt).unwrap();
        let peaks = spectrum_peaks(&spec, 0.25);
        assert_eq!(peaks.len(), 1);
        assert_relative_eq!(peaks[0].0, f, epsilon = 1e-12);
    }

    #[test]
    fn finite_resonant_pulse_pair_inverts_the_population() {
        // On resonance, two pi/2 segments back to back act as a pi pulse up
        // to leakage (amplitude well below the anharmonicity) and the
        // decoherence accrued over the pulse duration.
        let p = test_params();
        let cfg = RamseyConfig::new(
            Experiment::ZeroOne,
            4,
            0.02,
            p.omega01, // resonant drive
            PulseMode::FinitePulse { amplitude: 60.0 },
        )
        .unwrap();
        let rho = ramsey_single(&p, &cfg, Parity::Minus, 0.0).unwrap();
        assert!(rho.populations()[1] > 0.99, "p1 = {}", rho.populations()[1]);
    }

    #[test]
    fn finite_pulse_mode_tracks_ideal_rotations() {
        // Off resonance the finite pulse accrues an extra phase of order
        // detuning * duration, so the comparison is loose.
        let p = test_params();
        let ideal = simulate_ramsey(&p, &config01(16)).unwrap();
        let cfg = RamseyConfig::new(
            Experiment::ZeroOne,
            16,
            0.02,
            p.drive01,
            PulseMode::FinitePulse { amplitude: 60.0 },
        )
        .unwrap();
        let finite = simulate_ramsey(&p, &cfg).unwrap();
        for i in 0..16 {
            assert_relative_eq!(
                finite.populations[0][i],
                ideal.populations[0][i],
                epsilon = 0.1
            );
        }
    }
}
