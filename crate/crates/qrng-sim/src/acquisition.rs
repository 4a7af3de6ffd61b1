//! Acquisition engine: drives source, attenuator and detector gate by
//! gate, and the operating procedures built on top of it (gate-delay
//! scan, attenuator calibration).
//!
//! One stream is one sequential pass: the afterpulse memory crosses
//! every gate boundary, so a logical stream is never chunked across
//! seeds. Procedures that want parallelism (the delay scan) run
//! independent streams with per-point derived seeds and are therefore
//! identical under any thread count.

use rayon::prelude::*;

use crate::bitstream::BitStream;
use crate::detector::{
    gate_overlap_fraction, DetectorConfig, DetectorState, GateSimulator, PhotonSampler,
};
use crate::error::{Error, Result};
use crate::optics::{AttenuatorSetting, SourceConfig};
use crate::seed::{derive_seed, stream_rng};

/// Everything one simulated run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub attenuator: AttenuatorSetting,
    pub detector: DetectorConfig,
    pub n_gates: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.attenuator.validate()?;
        self.detector.validate()?;
        if self.n_gates == 0 {
            return Err(Error::InvalidConfig("a run needs at least one gate".into()));
        }
        Ok(())
    }

    /// Mean photon number arriving at the detector per gate: the source
    /// mean through the attenuator, scaled by how much of the pulse the
    /// gate actually covers. The detector's efficiency is applied later,
    /// photon by photon.
    pub fn arriving_mean_per_gate(&self) -> Result<f64> {
        let overlap = gate_overlap_fraction(
            self.source.pulse_arrival_ns,
            self.source.pulse_width_ns,
            self.detector.gate_delay_ns,
            self.detector.gate_width_ns,
        )?;
        Ok(self.source.mean_photons_per_pulse()? * self.attenuator.transmittance * overlap)
    }
}

/// Runs the configured number of gates and returns the click stream,
/// one bit per gate. Pure function of `(config, config.seed)`.
pub fn run_stream(config: &RunConfig) -> Result<BitStream> {
    config.validate()?;
    let lambda = config.arriving_mean_per_gate()?;
    let sampler = PhotonSampler::new(lambda)?;
    let sim = GateSimulator::new(&config.detector)?;
    let mut rng = stream_rng(config.seed, 0);
    let mut state = DetectorState::new();
    let mut bits = BitStream::with_capacity(config.n_gates as usize);
    for _ in 0..config.n_gates {
        let n = sampler.sample(&mut rng);
        bits.push(sim.gate_decision(n, &mut state, &mut rng));
    }
    Ok(bits)
}

/// Click count at one candidate gate delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayScanPoint {
    pub delay_ns: f64,
    pub clicks: u64,
}

/// Result of a gate-delay sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayScan {
    pub best_delay_ns: f64,
    pub points: Vec<DelayScanPoint>,
}

/// Sweeps the gate delay over `[delay_min_ns, delay_max_ns]` in steps of
/// `step_ns`, counting clicks over `gates_per_point` gates at each
/// candidate. Ties on the click count go to the smallest delay. Points
/// run on independent derived seeds, so the sweep parallelizes without
/// losing determinism.
pub fn scan_delay(
    config: &RunConfig,
    delay_min_ns: f64,
    delay_max_ns: f64,
    step_ns: f64,
    gates_per_point: u64,
) -> Result<DelayScan> {
    if !(delay_min_ns.is_finite() && delay_max_ns.is_finite() && delay_min_ns < delay_max_ns) {
        return Err(Error::InvalidParameter(format!(
            "scan range [{delay_min_ns}, {delay_max_ns}] is empty or not finite"
        )));
    }
    if !(step_ns.is_finite() && step_ns > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scan step must be positive, got {step_ns}"
        )));
    }
    if gates_per_point == 0 {
        return Err(Error::InvalidParameter(
            "scan needs at least one gate per point".into(),
        ));
    }
    config.validate()?;

    let mut delays = Vec::new();
    // Recompute each candidate from the index so step rounding never
    // accumulates; the tiny slack keeps an exact endpoint included.
    let slack = step_ns * 1e-9;
    let mut i = 0u64;
    loop {
        let delay = delay_min_ns + step_ns * i as f64;
        if delay > delay_max_ns + slack {
            break;
        }
        delays.push(delay);
        i += 1;
    }

    let points: Vec<DelayScanPoint> = delays
        .par_iter()
        .enumerate()
        .map(|(index, &delay_ns)| {
            let mut point_config = config.clone();
            point_config.detector.gate_delay_ns = delay_ns;
            point_config.n_gates = gates_per_point;
            point_config.seed = derive_seed(config.seed, index as u64);
            run_stream(&point_config)
                .map(|bits| DelayScanPoint { delay_ns, clicks: bits.count_ones() })
        })
        .collect::<Result<_>>()?;

    let best = points
        .iter()
        .fold(points[0], |best, &p| if p.clicks > best.clicks { p } else { best });
    Ok(DelayScan { best_delay_ns: best.delay_ns, points })
}

/// Outcome of the attenuator feedback loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub transmittance: f64,
    /// Bias (zeros fraction minus 1/2) measured in the last window.
    pub achieved_bias: f64,
    /// Measurement windows consumed.
    pub iterations: u32,
    pub converged: bool,
}

/// Tunes the attenuator until the measured bias sits within `tolerance`
/// of `target_bias`.
///
/// Each iteration measures the no-click fraction `f0` over one window
/// and, when off target, re-inverts it analytically: the detected
/// exponent is `-ln(f0 / (1 - p_dark))`, the wanted exponent is
/// `ln((1 - p_dark) / (1/2 + target_bias))`, and transmittance scales
/// linearly between them. Afterpulsing perturbs `f0` away from this
/// ideal, which is exactly what the iteration mops up.
///
/// Runs out of budget with `converged = false`; a window demanding a
/// transmittance above 1 is an error.
pub fn calibrate(
    config: &RunConfig,
    target_bias: f64,
    tolerance: f64,
    window_gates: u64,
    max_iterations: u32,
) -> Result<CalibrationResult> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    if window_gates == 0 {
        return Err(Error::InvalidParameter(
            "calibration needs at least one gate per window".into(),
        ));
    }
    if max_iterations == 0 {
        return Err(Error::InvalidParameter(
            "calibration needs at least one iteration".into(),
        ));
    }
    let p_dark = config.detector.p_dark;
    let target_no_click = 0.5 + target_bias;
    if !(target_no_click > 0.0 && target_no_click < 1.0 - p_dark) {
        return Err(Error::InvalidParameter(format!(
            "target bias {target_bias} puts the no-click probability outside what \
             dark counts at {p_dark} allow"
        )));
    }
    config.validate()?;

    let wanted_exponent = ((1.0 - p_dark) / target_no_click).ln();
    let mut transmittance = config.attenuator.transmittance;
    let mut bias = f64::NAN;
    for iteration in 0..max_iterations {
        let mut window = config.clone();
        window.attenuator = AttenuatorSetting { transmittance };
        window.n_gates = window_gates;
        window.seed = derive_seed(config.seed, u64::from(iteration));
        let bits = run_stream(&window)?;
        let f0 = bits.count_zeros() as f64 / window_gates as f64;
        bias = f0 - 0.5;
        if (bias - target_bias).abs() <= tolerance {
            return Ok(CalibrationResult {
                transmittance,
                achieved_bias: bias,
                iterations: iteration + 1,
                converged: true,
            });
        }
        // Continuity-correct an empty or full window so the inversion
        // stays finite.
        let f0 = f0.clamp(
            0.5 / window_gates as f64,
            (window_gates as f64 - 0.5) / window_gates as f64,
        );
        let measured_exponent = (-(f0 / (1.0 - p_dark)).ln()).max(1e-12);
        let required = transmittance * wanted_exponent / measured_exponent;
        if !(required.is_finite() && required > 0.0 && required <= 1.0) {
            return Err(Error::InfeasibleTransmittance { required });
        }
        transmittance = required;
    }
    Ok(CalibrationResult {
        transmittance,
        achieved_bias: bias,
        iterations: max_iterations,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{balance_transmittance, PulseDrive};

    fn base_config() -> RunConfig {
        RunConfig {
            source: SourceConfig {
                drive: PulseDrive::MeanPhotons { lambda: 6.93 },
                center_frequency_hz: crate::optics::wavelength_nm_to_frequency_hz(1550.0)
                    .unwrap(),
                rep_rate_hz: 1e6,
                pulse_width_ns: 0.3,
                pulse_arrival_ns: 100.0,
            },
            attenuator: AttenuatorSetting { transmittance: 1.0 },
            detector: DetectorConfig::default(),
            n_gates: 10_000,
            seed: 0,
        }
    }

    #[test]
    fn stream_replays_bit_exactly() {
        let config = base_config();
        assert_eq!(run_stream(&config).unwrap(), run_stream(&config).unwrap());
        let reseeded = RunConfig { seed: 1, ..config };
        assert_ne!(run_stream(&reseeded).unwrap(), run_stream(&config).unwrap());
    }

    #[test]
    fn shorter_run_is_a_prefix() {
        // One logical stream is one state thread: the first bits of a
        // long run and a short run of the same seed coincide.
        let long = run_stream(&base_config()).unwrap();
        let short = run_stream(&RunConfig { n_gates: 4_000, ..base_config() }).unwrap();
        assert_eq!(short.len(), 4_000);
        assert!(short.iter().zip(long.iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn overlap_scales_the_rate() {
        // Slide the gate so it covers none of the pulse: only dark
        // counts remain.
        let mut config = base_config();
        config.detector.gate_delay_ns = 300.0;
        config.n_gates = 100_000;
        let clicks = run_stream(&config).unwrap().count_ones();
        assert!(clicks < 20, "expected dark-level clicks, got {clicks}");
    }

    #[test]
    fn scan_finds_the_pulse() {
        let mut config = base_config();
        // Plenty of light so the plateau stands out instantly.
        config.source.drive = PulseDrive::MeanPhotons { lambda: 50.0 };
        let scan = scan_delay(&config, 95.0, 105.0, 0.5, 2_000).unwrap();
        assert_eq!(scan.points.len(), 21);
        // Gate [d, d + 2.5] fully covers the pulse [100.0, 100.3] for
        // d in [97.8, 100.0].
        assert!(
            (97.8..=100.0).contains(&scan.best_delay_ns),
            "best delay {}",
            scan.best_delay_ns
        );
        let full: Vec<u64> = scan
            .points
            .iter()
            .filter(|p| (97.8..=100.0).contains(&p.delay_ns))
            .map(|p| p.clicks)
            .collect();
        let none: Vec<u64> = scan
            .points
            .iter()
            .filter(|p| p.delay_ns < 97.4 || p.delay_ns > 100.4)
            .map(|p| p.clicks)
            .collect();
        assert!(full.iter().min().unwrap() > none.iter().max().unwrap());
    }

    #[test]
    fn scan_with_step_past_range_has_one_point() {
        let scan = scan_delay(&base_config(), 99.0, 100.0, 5.0, 1_000).unwrap();
        assert_eq!(scan.points.len(), 1);
        assert_eq!(scan.best_delay_ns, 99.0);
    }

    #[test]
    fn scan_is_thread_count_invariant() {
        let config = base_config();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| scan_delay(&config, 95.0, 105.0, 0.5, 5_000).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn scan_rejects_bad_arguments() {
        let config = base_config();
        assert!(scan_delay(&config, 105.0, 95.0, 0.5, 100).is_err());
        assert!(scan_delay(&config, 95.0, 105.0, 0.0, 100).is_err());
        assert!(scan_delay(&config, 95.0, 105.0, 0.5, 0).is_err());
    }

    #[test]
    fn calibrate_balanced_start_converges_immediately() {
        let mut config = base_config();
        config.source.drive = PulseDrive::MeanPhotons { lambda: 69.3 };
        config.attenuator =
            balance_transmittance(&config.source, config.detector.eta, config.detector.p_dark)
                .unwrap();
        let result = calibrate(&config, 0.0, 1e-2, 100_000, 10).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 1);
        assert_eq!(result.transmittance, config.attenuator.transmittance);
        assert!(result.achieved_bias.abs() <= 1e-2);
    }

    #[test]
    fn calibrate_recovers_from_misset_attenuator() {
        let mut config = base_config();
        config.source.drive = PulseDrive::MeanPhotons { lambda: 69.3 };
        let balanced =
            balance_transmittance(&config.source, config.detector.eta, config.detector.p_dark)
                .unwrap();
        for factor in [4.0, 0.25] {
            config.attenuator =
                AttenuatorSetting { transmittance: balanced.transmittance * factor };
            let result = calibrate(&config, 0.0, 1e-3, 1_000_000, 5).unwrap();
            assert!(result.converged, "failed from factor {factor}: {result:?}");
            assert!((result.achieved_bias).abs() <= 1e-3);
            let ratio = result.transmittance / balanced.transmittance;
            assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn calibrate_gives_up_cleanly() {
        // A window of 101 gates quantizes the bias to steps of 1/101
        // around an offset of 1/202, so a 1e-9 tolerance around zero is
        // unreachable and every retarget stays deep inside (0, 1].
        let mut config = base_config();
        config.source.drive = PulseDrive::MeanPhotons { lambda: 69.3 };
        config.attenuator = AttenuatorSetting { transmittance: 0.1 };
        let result = calibrate(&config, 0.0, 1e-9, 101, 4).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 4);
    }

    #[test]
    fn calibrate_reports_infeasible_sources() {
        // eta lambda = 0.35 wide open can never reach balance.
        let mut config = base_config();
        config.source.drive = PulseDrive::MeanPhotons { lambda: 3.5 };
        config.attenuator = AttenuatorSetting { transmittance: 1.0 };
        match calibrate(&config, 0.0, 1e-3, 100_000, 10) {
            Err(Error::InfeasibleTransmittance { required }) => assert!(required > 1.0),
            other => panic!("expected infeasible transmittance, got {other:?}"),
        }
    }

    #[test]
    fn calibrate_is_deterministic() {
        let mut config = base_config();
        config.attenuator = AttenuatorSetting { transmittance: 0.3 };
        let a = calibrate(&config, 0.0, 1e-3, 200_000, 8).unwrap();
        let b = calibrate(&config, 0.0, 1e-3, 200_000, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn run_config_validation() {
        let mut config = base_config();
        config.n_gates = 0;
        assert!(config.validate().is_err());
        let mut config = base_config();
        config.attenuator.transmittance = 0.0;
        assert!(run_stream(&config).is_err());
    }
}
