//! Photon statistics of the attenuated pulse train.
//!
//! A laser pulse far above threshold carries a Poissonian photon number.
//! Linear attenuation and an imperfect detector both act as independent
//! Bernoulli thinning, so the detected photon number is again Poissonian
//! with mean `eta * lambda`:
//!
//! ```text
//! P(n) = (eta lambda)^n exp(-eta lambda) / n!
//! ```
//!
//! A threshold detector only distinguishes `n = 0` from `n > 0`, giving a
//! click probability `1 - exp(-eta lambda)`. At `eta lambda = ln 2` the
//! two outcomes are equally likely, which is the working point the
//! attenuator is tuned to.
//!
//! The mean detected photon number follows from the source's average
//! power: each pulse carries `P_avg / f_rep` joules, a photon at the
//! centre frequency carries `h nu0`, and the attenuator and detector
//! scale by `T` and `eta`.

use crate::error::{Error, Result};

/// Planck constant in joule-seconds (exact SI value).
pub const PLANCK_JS: f64 = 6.626_070_15e-34;

/// Speed of light in metres per second (exact SI value).
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Exact factorials 0!..=20!; beyond that the pmf switches to log space.
const FACTORIAL: [f64; 21] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
    6227020800.0,
    87178291200.0,
    1307674368000.0,
    20922789888000.0,
    355687428096000.0,
    6402373705728000.0,
    121645100408832000.0,
    2432902008176640000.0,
];

/// Average optical power in watts for a power level in dBm.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0) * 1e-3
}

/// Centre frequency in hertz for a vacuum wavelength in nanometres.
pub fn wavelength_nm_to_frequency_hz(wavelength_nm: f64) -> Result<f64> {
    if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wavelength must be positive and finite, got {wavelength_nm}"
        )));
    }
    Ok(SPEED_OF_LIGHT_M_PER_S / (wavelength_nm * 1e-9))
}

/// What drives the per-pulse mean photon number: a measured average
/// power, or a direct override of the mean itself. Exactly one applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseDrive {
    AveragePower { watts: f64 },
    MeanPhotons { lambda: f64 },
}

/// The pulsed source: drive, carrier, timing.
///
/// `pulse_arrival_ns` places the leading edge of every pulse on the
/// per-gate time axis shared with the detector's gate window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub drive: PulseDrive,
    pub center_frequency_hz: f64,
    pub rep_rate_hz: f64,
    pub pulse_width_ns: f64,
    pub pulse_arrival_ns: f64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        match self.drive {
            PulseDrive::AveragePower { watts } => {
                if !(watts.is_finite() && watts >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "average power must be finite and non-negative, got {watts}"
                    )));
                }
            }
            PulseDrive::MeanPhotons { lambda } => {
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(Error::MeanPhotonsOutOfRange(lambda));
                }
            }
        }
        if !(self.center_frequency_hz.is_finite() && self.center_frequency_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "centre frequency must be positive, got {}",
                self.center_frequency_hz
            )));
        }
        if !(self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "repetition rate must be positive, got {}",
                self.rep_rate_hz
            )));
        }
        if !(self.pulse_width_ns.is_finite() && self.pulse_width_ns > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pulse width must be positive, got {}",
                self.pulse_width_ns
            )));
        }
        if !self.pulse_arrival_ns.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "pulse arrival must be finite, got {}",
                self.pulse_arrival_ns
            )));
        }
        Ok(())
    }

    /// Mean photon number per emitted pulse, before any attenuation.
    ///
    /// On the power path this is `P_avg / (h nu0 f_rep)`: energy per
    /// pulse over energy per photon.
    pub fn mean_photons_per_pulse(&self) -> Result<f64> {
        self.validate()?;
        match self.drive {
            PulseDrive::MeanPhotons { lambda } => Ok(lambda),
            PulseDrive::AveragePower { watts } => {
                Ok(watts / (PLANCK_JS * self.center_frequency_hz * self.rep_rate_hz))
            }
        }
    }
}

/// Programmable attenuator, as a linear power transmittance in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuatorSetting {
    pub transmittance: f64,
}

impl AttenuatorSetting {
    pub fn new(transmittance: f64) -> Result<Self> {
        let setting = Self { transmittance };
        setting.validate()?;
        Ok(setting)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.transmittance.is_finite()
            && self.transmittance > 0.0
            && self.transmittance <= 1.0)
        {
            return Err(Error::TransmittanceOutOfRange(self.transmittance));
        }
        Ok(())
    }
}

/// Thinned Poisson statistics of one gated pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonStatistics {
    eta: f64,
    lambda: f64,
}

impl PhotonStatistics {
    pub fn new(eta: f64, lambda: f64) -> Result<Self> {
        if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
            return Err(Error::EfficiencyOutOfRange(eta));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::MeanPhotonsOutOfRange(lambda));
        }
        Ok(Self { eta, lambda })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Mean detected photon number `eta * lambda`.
    pub fn detected_mean(&self) -> f64 {
        self.eta * self.lambda
    }

    /// Probability of detecting exactly `n` photons.
    pub fn pmf(&self, n: u32) -> f64 {
        let x = self.detected_mean();
        if n <= 20 {
            x.powi(n as i32) * (-x).exp() / FACTORIAL[n as usize]
        } else {
            // Log space; also covers x = 0, where ln(0) * n = -inf.
            (f64::from(n) * x.ln() - x - libm::lgamma(f64::from(n) + 1.0)).exp()
        }
    }

    /// Probability that a gate sees no photon at all.
    pub fn no_click_probability(&self) -> f64 {
        (-self.detected_mean()).exp()
    }

    /// Probability of at least one detected photon. Shares the
    /// exponential with [`Self::no_click_probability`], so the two sum
    /// to exactly 1.0.
    pub fn click_probability(&self) -> f64 {
        1.0 - self.no_click_probability()
    }
}

/// Probability of detecting exactly `n` photons from a pulse of mean
/// `lambda` seen with efficiency `eta`.
pub fn photon_number_pmf(n: u32, eta: f64, lambda: f64) -> Result<f64> {
    Ok(PhotonStatistics::new(eta, lambda)?.pmf(n))
}

/// Probability that a gate clicks on photons alone.
pub fn click_probability(eta: f64, lambda: f64) -> Result<f64> {
    Ok(PhotonStatistics::new(eta, lambda)?.click_probability())
}

/// Mean detected photon number per gate on the power path,
/// `P_avg T eta / (h nu0 f_rep)`.
///
/// Errors with [`Error::NoPowerPath`] when the source is driven by a
/// mean-photon override instead of a measured power.
pub fn detected_mean(
    source: &SourceConfig,
    attenuator: &AttenuatorSetting,
    eta: f64,
) -> Result<f64> {
    source.validate()?;
    attenuator.validate()?;
    if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
        return Err(Error::EfficiencyOutOfRange(eta));
    }
    match source.drive {
        PulseDrive::MeanPhotons { .. } => Err(Error::NoPowerPath),
        PulseDrive::AveragePower { .. } => {
            Ok(source.mean_photons_per_pulse()? * attenuator.transmittance * eta)
        }
    }
}

/// Attenuator setting that balances the raw bits: with dark counts
/// firing independently at `p_dark`, solves
/// `(1 - p_dark) exp(-eta lambda(T)) = 1/2`, i.e. puts the detected mean
/// at `ln(2 (1 - p_dark))`.
///
/// Errors when the required transmittance falls outside (0, 1], that
/// is, a source too weak to reach balance even wide open.
pub fn balance_transmittance(
    source: &SourceConfig,
    eta: f64,
    p_dark: f64,
) -> Result<AttenuatorSetting> {
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(Error::EfficiencyOutOfRange(eta));
    }
    if !(p_dark.is_finite() && (0.0..0.5).contains(&p_dark)) {
        return Err(Error::DarkProbabilityOutOfRange(p_dark));
    }
    let lambda_open = source.mean_photons_per_pulse()?;
    let target_exponent = (2.0 * (1.0 - p_dark)).ln();
    let required = target_exponent / (eta * lambda_open);
    if !(required.is_finite() && required > 0.0 && required <= 1.0) {
        return Err(Error::InfeasibleTransmittance { required });
    }
    Ok(AttenuatorSetting { transmittance: required })
}
