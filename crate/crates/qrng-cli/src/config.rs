//! Configuration layering: command line flags override config file
//! values, which override built-in defaults.
//!
//! The config file is a flat `key = value` text file whose keys mirror
//! the long flag names (dashes and underscores are interchangeable,
//! `#` starts a comment). Unknown keys are rejected, same as unknown
//! flags.

use std::path::Path;

use qrng_sim::acquisition::RunConfig;
use qrng_sim::detector::DetectorConfig;
use qrng_sim::optics::{
    dbm_to_watts, wavelength_nm_to_frequency_hz, AttenuatorSetting, PulseDrive, SourceConfig,
};

use crate::CliError;

/// How the stream is debiased after optional decimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Debias {
    #[default]
    None,
    Vn,
    Peres,
}

/// One layer of settings; `None` means "not set at this layer". The
/// field set mirrors the long flags.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub bits: Option<u64>,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub power_dbm: Option<f64>,
    pub wavelength_nm: Option<f64>,
    pub rep_rate_hz: Option<f64>,
    pub transmittance: Option<f64>,
    pub dark: Option<f64>,
    pub ap_alpha: Option<f64>,
    pub ap_tau: Option<f64>,
    pub ap_horizon: Option<u32>,
    pub dead_gates: Option<u32>,
    pub gate_delay_ns: Option<f64>,
    pub gate_width_ns: Option<f64>,
    pub pulse_arrival_ns: Option<f64>,
    pub pulse_width_ns: Option<f64>,
    pub decimate: Option<usize>,
    pub debias: Option<Debias>,
    pub seed: Option<u64>,
    pub target_bias: Option<f64>,
    pub tolerance: Option<f64>,
    pub window_gates: Option<u64>,
    pub max_iters: Option<u32>,
    pub delay_min_ns: Option<f64>,
    pub delay_max_ns: Option<f64>,
    pub delay_step_ns: Option<f64>,
    pub gates_per_point: Option<u64>,
}

impl Overrides {
    /// Sets one field from its config-file key. Keys use the flag
    /// names; `-` and `_` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let norm = key.trim().replace('-', "_");
        let bad = |what: &str| {
            CliError::domain(format!("bad value {value:?} for {key}: expected {what}"))
        };
        macro_rules! parse {
            ($ty:ty, $what:expr) => {
                Some(value.trim().parse::<$ty>().map_err(|_| bad($what))?)
            };
        }
        match norm.as_str() {
            "bits" => self.bits = parse!(u64, "a gate count"),
            "eta" => self.eta = parse!(f64, "a number"),
            "lambda" => self.lambda = parse!(f64, "a number"),
            "power_dbm" => self.power_dbm = parse!(f64, "a number"),
            "wavelength_nm" => self.wavelength_nm = parse!(f64, "a number"),
            "rep_rate_hz" => self.rep_rate_hz = parse!(f64, "a number"),
            "transmittance" => self.transmittance = parse!(f64, "a number"),
            "dark" => self.dark = parse!(f64, "a number"),
            "ap_alpha" => self.ap_alpha = parse!(f64, "a number"),
            "ap_tau" => self.ap_tau = parse!(f64, "a number"),
            "ap_horizon" => self.ap_horizon = parse!(u32, "a gate count"),
            "dead_gates" => self.dead_gates = parse!(u32, "a gate count"),
            "gate_delay_ns" => self.gate_delay_ns = parse!(f64, "a number"),
            "gate_width_ns" => self.gate_width_ns = parse!(f64, "a number"),
            "pulse_arrival_ns" => self.pulse_arrival_ns = parse!(f64, "a number"),
            "pulse_width_ns" => self.pulse_width_ns = parse!(f64, "a number"),
            "decimate" => self.decimate = parse!(usize, "a keep-every-nth factor"),
            "debias" => {
                self.debias = Some(match value.trim() {
                    "none" => Debias::None,
                    "vn" => Debias::Vn,
                    "peres" => Debias::Peres,
                    _ => return Err(bad("one of none, vn, peres")),
                })
            }
            "seed" => self.seed = parse!(u64, "a 64-bit integer"),
            "target_bias" => self.target_bias = parse!(f64, "a number"),
            "tolerance" => self.tolerance = parse!(f64, "a number"),
            "window_gates" => self.window_gates = parse!(u64, "a gate count"),
            "max_iters" => self.max_iters = parse!(u32, "an iteration count"),
            "delay_min_ns" => self.delay_min_ns = parse!(f64, "a number"),
            "delay_max_ns" => self.delay_max_ns = parse!(f64, "a number"),
            "delay_step_ns" => self.delay_step_ns = parse!(f64, "a number"),
            "gates_per_point" => self.gates_per_point = parse!(u64, "a gate count"),
            _ => return Err(CliError::domain(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Layers `self` over `base`: set fields win, unset fall through.
    pub fn over(self, base: Overrides) -> Overrides {
        // A source drive set at this layer displaces the other drive
        // flavour below it, so a flag --power-dbm is not fought by a
        // file lambda (and vice versa).
        let mut base = base;
        if self.lambda.is_some() || self.power_dbm.is_some() {
            base.lambda = None;
            base.power_dbm = None;
        }
        Overrides {
            bits: self.bits.or(base.bits),
            eta: self.eta.or(base.eta),
            lambda: self.lambda.or(base.lambda),
            power_dbm: self.power_dbm.or(base.power_dbm),
            wavelength_nm: self.wavelength_nm.or(base.wavelength_nm),
            rep_rate_hz: self.rep_rate_hz.or(base.rep_rate_hz),
            transmittance: self.transmittance.or(base.transmittance),
            dark: self.dark.or(base.dark),
            ap_alpha: self.ap_alpha.or(base.ap_alpha),
            ap_tau: self.ap_tau.or(base.ap_tau),
            ap_horizon: self.ap_horizon.or(base.ap_horizon),
            dead_gates: self.dead_gates.or(base.dead_gates),
            gate_delay_ns: self.gate_delay_ns.or(base.gate_delay_ns),
            gate_width_ns: self.gate_width_ns.or(base.gate_width_ns),
            pulse_arrival_ns: self.pulse_arrival_ns.or(base.pulse_arrival_ns),
            pulse_width_ns: self.pulse_width_ns.or(base.pulse_width_ns),
            decimate: self.decimate.or(base.decimate),
            debias: self.debias.or(base.debias),
            seed: self.seed.or(base.seed),
            target_bias: self.target_bias.or(base.target_bias),
            tolerance: self.tolerance.or(base.tolerance),
            window_gates: self.window_gates.or(base.window_gates),
            max_iters: self.max_iters.or(base.max_iters),
            delay_min_ns: self.delay_min_ns.or(base.delay_min_ns),
            delay_max_ns: self.delay_max_ns.or(base.delay_max_ns),
            delay_step_ns: self.delay_step_ns.or(base.delay_step_ns),
            gates_per_point: self.gates_per_point.or(base.gates_per_point),
        }
    }
}

/// Parses a flat key-value config file.
pub fn parse_config_file(path: &Path) -> Result<Overrides, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let mut overrides = Overrides::default();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::domain(format!(
                "{}:{}: expected key = value, got {raw:?}",
                path.display(),
                number + 1
            ))
        })?;
        overrides.set(key, value)?;
    }
    Ok(overrides)
}

/// Fully resolved run parameters after layering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub bits: u64,
    pub eta: f64,
    pub drive: PulseDrive,
    pub wavelength_nm: f64,
    pub rep_rate_hz: f64,
    pub transmittance: f64,
    pub dark: f64,
    pub ap_alpha: f64,
    pub ap_tau: f64,
    pub ap_horizon: u32,
    pub dead_gates: u32,
    pub gate_delay_ns: f64,
    pub gate_width_ns: f64,
    pub pulse_arrival_ns: f64,
    pub pulse_width_ns: f64,
    pub decimate: Option<usize>,
    pub debias: Debias,
    pub seed: u64,
    pub target_bias: f64,
    pub tolerance: f64,
    pub window_gates: u64,
    pub max_iters: u32,
    pub delay_min_ns: f64,
    pub delay_max_ns: f64,
    pub delay_step_ns: f64,
    pub gates_per_point: u64,
}

/// The nominal setup: 1550 nm pulses at 1 MHz, 300 ps wide, arriving at
/// 100 ns; gate of 2.5 ns opening at 99 ns; efficiency 0.1, dark count
/// probability 1e-5, no dead time, stock afterpulse constants; source
/// driven at 6.93 mean photons per pulse through a wide-open attenuator
/// so the detected mean sits at ln 2.
pub fn defaults() -> Params {
    let detector = DetectorConfig::default();
    Params {
        bits: 1_000_000,
        eta: detector.eta,
        drive: PulseDrive::MeanPhotons { lambda: 6.93 },
        wavelength_nm: 1550.0,
        rep_rate_hz: 1e6,
        transmittance: 1.0,
        dark: detector.p_dark,
        ap_alpha: detector.afterpulse_alpha,
        ap_tau: detector.afterpulse_tau_gates,
        ap_horizon: detector.afterpulse_horizon_gates,
        dead_gates: detector.dead_time_gates,
        gate_delay_ns: detector.gate_delay_ns,
        gate_width_ns: detector.gate_width_ns,
        pulse_arrival_ns: 100.0,
        pulse_width_ns: 0.3,
        decimate: None,
        debias: Debias::None,
        seed: 0,
        target_bias: 0.0,
        tolerance: 1e-3,
        window_gates: 1_000_000,
        max_iters: 10,
        delay_min_ns: 95.0,
        delay_max_ns: 105.0,
        delay_step_ns: 0.5,
        gates_per_point: 100_000,
    }
}

/// Applies a stack of layers (last wins) on top of the defaults.
pub fn resolve(layers: &[Overrides]) -> Result<Params, CliError> {
    let merged = layers
        .iter()
        .fold(Overrides::default(), |base, layer| layer.over(base));
    let d = defaults();
    let drive = match (merged.lambda, merged.power_dbm) {
        (Some(_), Some(_)) => {
            return Err(CliError::domain(
                "lambda and power-dbm both set; pick one source drive",
            ))
        }
        (Some(lambda), None) => PulseDrive::MeanPhotons { lambda },
        (None, Some(dbm)) => PulseDrive::AveragePower { watts: dbm_to_watts(dbm) },
        (None, None) => d.drive,
    };
    Ok(Params {
        bits: merged.bits.unwrap_or(d.bits),
        eta: merged.eta.unwrap_or(d.eta),
        drive,
        wavelength_nm: merged.wavelength_nm.unwrap_or(d.wavelength_nm),
        rep_rate_hz: merged.rep_rate_hz.unwrap_or(d.rep_rate_hz),
        transmittance: merged.transmittance.unwrap_or(d.transmittance),
        dark: merged.dark.unwrap_or(d.dark),
        ap_alpha: merged.ap_alpha.unwrap_or(d.ap_alpha),
        ap_tau: merged.ap_tau.unwrap_or(d.ap_tau),
        ap_horizon: merged.ap_horizon.unwrap_or(d.ap_horizon),
        dead_gates: merged.dead_gates.unwrap_or(d.dead_gates),
        gate_delay_ns: merged.gate_delay_ns.unwrap_or(d.gate_delay_ns),
        gate_width_ns: merged.gate_width_ns.unwrap_or(d.gate_width_ns),
        pulse_arrival_ns: merged.pulse_arrival_ns.unwrap_or(d.pulse_arrival_ns),
        pulse_width_ns: merged.pulse_width_ns.unwrap_or(d.pulse_width_ns),
        decimate: merged.decimate.or(d.decimate),
        debias: merged.debias.unwrap_or(d.debias),
        seed: merged.seed.unwrap_or(d.seed),
        target_bias: merged.target_bias.unwrap_or(d.target_bias),
        tolerance: merged.tolerance.unwrap_or(d.tolerance),
        window_gates: merged.window_gates.unwrap_or(d.window_gates),
        max_iters: merged.max_iters.unwrap_or(d.max_iters),
        delay_min_ns: merged.delay_min_ns.unwrap_or(d.delay_min_ns),
        delay_max_ns: merged.delay_max_ns.unwrap_or(d.delay_max_ns),
        delay_step_ns: merged.delay_step_ns.unwrap_or(d.delay_step_ns),
        gates_per_point: merged.gates_per_point.unwrap_or(d.gates_per_point),
    })
}

impl Params {
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let config = RunConfig {
            source: SourceConfig {
                drive: self.drive,
                center_frequency_hz: wavelength_nm_to_frequency_hz(self.wavelength_nm)?,
                rep_rate_hz: self.rep_rate_hz,
                pulse_width_ns: self.pulse_width_ns,
                pulse_arrival_ns: self.pulse_arrival_ns,
            },
            attenuator: AttenuatorSetting { transmittance: self.transmittance },
            detector: DetectorConfig {
                eta: self.eta,
                p_dark: self.dark,
                gate_delay_ns: self.gate_delay_ns,
                gate_width_ns: self.gate_width_ns,
                dead_time_gates: self.dead_gates,
                afterpulse_alpha: self.ap_alpha,
                afterpulse_tau_gates: self.ap_tau,
                afterpulse_horizon_gates: self.ap_horizon,
            },
            n_gates: self.bits,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn defaults_build_a_valid_run() {
        let params = resolve(&[]).unwrap();
        assert_eq!(params, defaults());
        params.run_config().unwrap();
    }

    #[test]
    fn file_overrides_defaults_and_flags_override_file() {
        let file = Overrides {
            eta: Some(0.2),
            seed: Some(7),
            bits: Some(4096),
            ..Overrides::default()
        };
        let flags = Overrides { eta: Some(0.3), ..Overrides::default() };
        let params = resolve(&[file, flags]).unwrap();
        assert_eq!(params.eta, 0.3);
        assert_eq!(params.seed, 7);
        assert_eq!(params.bits, 4096);
    }

    #[test]
    fn drive_flavours_displace_each_other_across_layers() {
        let file = Overrides { lambda: Some(10.0), ..Overrides::default() };
        let flags = Overrides { power_dbm: Some(-35.0), ..Overrides::default() };
        let params = resolve(&[file, flags]).unwrap();
        assert_eq!(
            params.drive,
            PulseDrive::AveragePower { watts: dbm_to_watts(-35.0) }
        );
        // And the other way round.
        let file = Overrides { power_dbm: Some(-35.0), ..Overrides::default() };
        let flags = Overrides { lambda: Some(10.0), ..Overrides::default() };
        let params = resolve(&[file, flags]).unwrap();
        assert_eq!(params.drive, PulseDrive::MeanPhotons { lambda: 10.0 });
    }

    #[test]
    fn both_drives_in_one_layer_is_ambiguous() {
        let layer = Overrides {
            lambda: Some(10.0),
            power_dbm: Some(-35.0),
            ..Overrides::default()
        };
        assert!(resolve(&[layer]).is_err());
    }

    #[test]
    fn config_file_parses_comments_aliases_and_rejects_unknowns() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# experiment record").unwrap();
        writeln!(file, "eta = 0.25").unwrap();
        writeln!(file, "gate-delay-ns = 98.5  # dashes allowed").unwrap();
        writeln!(file, "ap_horizon=10").unwrap();
        writeln!(file, "debias = peres").unwrap();
        file.flush().unwrap();
        let parsed = parse_config_file(file.path()).unwrap();
        assert_eq!(parsed.eta, Some(0.25));
        assert_eq!(parsed.gate_delay_ns, Some(98.5));
        assert_eq!(parsed.ap_horizon, Some(10));
        assert_eq!(parsed.debias, Some(Debias::Peres));

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "no_such_knob = 1").unwrap();
        bad.flush().unwrap();
        assert!(parse_config_file(bad.path()).is_err());

        let mut malformed = tempfile::NamedTempFile::new().unwrap();
        writeln!(malformed, "eta 0.25").unwrap();
        malformed.flush().unwrap();
        assert!(parse_config_file(malformed.path()).is_err());
    }

    /// One arbitrary layer with every field independently present or
    /// absent.
    fn overrides_strategy() -> impl Strategy<Value = Overrides> {
        // Tuple nesting keeps within proptest's arity limits.
        let floats = (
            proptest::option::of(0.0f64..=1.0),
            proptest::option::of(0.1f64..=100.0),
            proptest::option::of(-60.0f64..=-20.0),
            proptest::option::of(500.0f64..=2000.0),
            proptest::option::of(1e3f64..=1e9),
            proptest::option::of(0.01f64..=1.0),
            proptest::option::of(0.0f64..=0.01),
        );
        let shape = (
            proptest::option::of(1u64..=1 << 40),
            proptest::option::of(0.0f64..=0.1),
            proptest::option::of(0.5f64..=10.0),
            proptest::option::of(0u32..=127),
            proptest::option::of(0u32..=100),
            proptest::option::of(0.0f64..=200.0),
            proptest::option::of(0.1f64..=10.0),
            proptest::option::of(0.0f64..=200.0),
            proptest::option::of(0.01f64..=2.0),
        );
        let pipeline = (
            proptest::option::of(1usize..=100),
            proptest::option::of(prop_oneof![
                Just(Debias::None),
                Just(Debias::Vn),
                Just(Debias::Peres)
            ]),
            proptest::option::of(any::<u64>()),
        );
        let loops = (
            proptest::option::of(-0.4f64..=0.4),
            proptest::option::of(1e-6f64..=0.1),
            proptest::option::of(1u64..=1 << 30),
            proptest::option::of(1u32..=50),
            proptest::option::of(0.0f64..=100.0),
            proptest::option::of(101.0f64..=200.0),
            proptest::option::of(0.01f64..=10.0),
            proptest::option::of(1u64..=1 << 30),
        );
        (floats, shape, pipeline, loops).prop_map(|(f, s, p, l)| Overrides {
            eta: f.0,
            lambda: f.1,
            power_dbm: f.2,
            wavelength_nm: f.3,
            rep_rate_hz: f.4,
            transmittance: f.5,
            dark: f.6,
            bits: s.0,
            ap_alpha: s.1,
            ap_tau: s.2,
            ap_horizon: s.3,
            dead_gates: s.4,
            gate_delay_ns: s.5,
            gate_width_ns: s.6,
            pulse_arrival_ns: s.7,
            pulse_width_ns: s.8,
            decimate: p.0,
            debias: p.1,
            seed: p.2,
            target_bias: l.0,
            tolerance: l.1,
            window_gates: l.2,
            max_iters: l.3,
            delay_min_ns: l.4,
            delay_max_ns: l.5,
            delay_step_ns: l.6,
            gates_per_point: l.7,
        })
    }

    proptest! {
        /// Flags beat file beats defaults, field by field, for every
        /// combination of set and unset fields.
        #[test]
        fn precedence_holds_for_every_field(
            file in overrides_strategy(),
            flags in overrides_strategy(),
        ) {
            prop_assume!(resolve(&[file, flags]).is_ok());
            let resolved = resolve(&[file, flags]).unwrap();
            let d = defaults();

            macro_rules! check {
                ($field:ident) => {
                    let expected = flags.$field.or(file.$field);
                    match expected {
                        Some(v) => prop_assert_eq!(resolved.$field, v),
                        None => prop_assert_eq!(resolved.$field, d.$field),
                    }
                };
            }
            check!(bits);
            check!(eta);
            check!(wavelength_nm);
            check!(rep_rate_hz);
            check!(transmittance);
            check!(dark);
            check!(ap_alpha);
            check!(ap_tau);
            check!(ap_horizon);
            check!(dead_gates);
            check!(gate_delay_ns);
            check!(gate_width_ns);
            check!(pulse_arrival_ns);
            check!(pulse_width_ns);
            check!(seed);
            check!(target_bias);
            check!(tolerance);
            check!(window_gates);
            check!(max_iters);
            check!(delay_min_ns);
            check!(delay_max_ns);
            check!(delay_step_ns);
            check!(gates_per_point);
            match flags.decimate.or(file.decimate) {
                Some(v) => prop_assert_eq!(resolved.decimate, Some(v)),
                None => prop_assert_eq!(resolved.decimate, d.decimate),
            }
            match flags.debias.or(file.debias) {
                Some(v) => prop_assert_eq!(resolved.debias, v),
                None => prop_assert_eq!(resolved.debias, d.debias),
            }

            // The drive resolves from the topmost layer that set either
            // flavour.
            let expected_drive = if flags.lambda.is_some() || flags.power_dbm.is_some() {
                (flags.lambda, flags.power_dbm)
            } else if file.lambda.is_some() || file.power_dbm.is_some() {
                (file.lambda, file.power_dbm)
            } else {
                (None, None)
            };
            match expected_drive {
                (Some(lambda), None) => {
                    prop_assert_eq!(resolved.drive, PulseDrive::MeanPhotons { lambda })
                }
                (None, Some(dbm)) => prop_assert_eq!(
                    resolved.drive,
                    PulseDrive::AveragePower { watts: dbm_to_watts(dbm) }
                ),
                (None, None) => prop_assert_eq!(resolved.drive, d.drive),
                (Some(_), Some(_)) => prop_assert!(false, "ambiguous layer not rejected"),
            }
        }
    }
}
