//! Gated single-photon detector model.
//!
//! Each trigger opens one gate. Within a gate three independent sources
//! can fire: a photon click (each of the `n` arriving photons is seen
//! with probability `eta`, so the gate clicks with `1 - (1 - eta)^n`),
//! a dark count, and an afterpulse from charge trapped by earlier
//! avalanches. The gate clicks when any source fires.
//!
//! Afterpulsing carries the detector's memory. A click recorded `j`
//! gates ago contributes an independent afterpulse chance
//! `alpha * exp(-(j - 1) / tau)` for `1 <= j <= horizon`; older clicks
//! are forgotten. Every click feeds the memory, whatever its origin.
//! Dead time forces the `dead_time_gates` gates after a click to read
//! no-click without consuming randomness.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Largest supported afterpulse horizon; remembered clicks live in a
/// 128-bit age mask. Exponential memory with any practical `tau` is long
/// gone by age 127.
pub const MAX_AFTERPULSE_HORIZON: u32 = 127;

/// Default afterpulse amplitude. Fitted, together with `tau = 2` and
/// `horizon = 20`, so a balanced default stream shows a lag-1 serial
/// correlation near 3.1e-4; see the acceptance suite.
pub const DEFAULT_AFTERPULSE_ALPHA: f64 = 6.24e-4;

/// Default afterpulse memory constant in gates.
pub const DEFAULT_AFTERPULSE_TAU: f64 = 2.0;

/// Default afterpulse memory horizon in gates.
pub const DEFAULT_AFTERPULSE_HORIZON: u32 = 20;

/// Static detector parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Detection efficiency in [0, 1].
    pub eta: f64,
    /// Dark count probability per gate, independent of the light level.
    pub p_dark: f64,
    /// Gate opening time on the shared per-gate time axis.
    pub gate_delay_ns: f64,
    /// Gate width; the nominal hardware opens for 2.5 ns.
    pub gate_width_ns: f64,
    /// Gates blanked after every click.
    pub dead_time_gates: u32,
    /// Afterpulse amplitude for a click one gate old.
    pub afterpulse_alpha: f64,
    /// Afterpulse exponential memory constant in gates.
    pub afterpulse_tau_gates: f64,
    /// Clicks older than this many gates stop afterpulsing.
    pub afterpulse_horizon_gates: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            p_dark: 1e-5,
            gate_delay_ns: 99.0,
            gate_width_ns: 2.5,
            dead_time_gates: 0,
            afterpulse_alpha: DEFAULT_AFTERPULSE_ALPHA,
            afterpulse_tau_gates: DEFAULT_AFTERPULSE_TAU,
            afterpulse_horizon_gates: DEFAULT_AFTERPULSE_HORIZON,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && (0.0..=1.0).contains(&self.eta)) {
            return Err(Error::EfficiencyOutOfRange(self.eta));
        }
        if !(self.p_dark.is_finite() && (0.0..1.0).contains(&self.p_dark)) {
            return Err(Error::DarkProbabilityOutOfRange(self.p_dark));
        }
        if !self.gate_delay_ns.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gate delay must be finite, got {}",
                self.gate_delay_ns
            )));
        }
        if !(self.gate_width_ns.is_finite() && self.gate_width_ns > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gate width must be positive, got {}",
                self.gate_width_ns
            )));
        }
        if !(self.afterpulse_alpha.is_finite() && (0.0..=1.0).contains(&self.afterpulse_alpha)) {
            return Err(Error::InvalidConfig(format!(
                "afterpulse amplitude must lie in [0, 1], got {}",
                self.afterpulse_alpha
            )));
        }
        if !(self.afterpulse_tau_gates.is_finite() && self.afterpulse_tau_gates > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "afterpulse tau must be positive, got {}",
                self.afterpulse_tau_gates
            )));
        }
        if self.afterpulse_horizon_gates > MAX_AFTERPULSE_HORIZON {
            return Err(Error::InvalidConfig(format!(
                "afterpulse horizon is capped at {MAX_AFTERPULSE_HORIZON} gates, got {}",
                self.afterpulse_horizon_gates
            )));
        }
        Ok(())
    }
}

/// Per-gate evolving state: remembered click ages and the dead-time
/// countdown. Bit `j` of the mask marks a click `j` gates ago.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorState {
    ages: u128,
    dead_countdown: u32,
}

impl DetectorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State remembering clicks at the given ages (test and API entry;
    /// the engine builds states gate by gate). Panics on an age above
    /// [`MAX_AFTERPULSE_HORIZON`].
    pub fn with_click_ages(ages: &[u32]) -> Self {
        let mut mask = 0u128;
        for &age in ages {
            assert!(
                age <= MAX_AFTERPULSE_HORIZON,
                "click age {age} above supported horizon"
            );
            mask |= 1u128 << age;
        }
        Self { ages: mask, dead_countdown: 0 }
    }

    /// Ages of all remembered clicks, ascending.
    pub fn click_ages(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut mask = self.ages;
        while mask != 0 {
            out.push(mask.trailing_zeros());
            mask &= mask - 1;
        }
        out
    }

    pub fn dead_countdown(&self) -> u32 {
        self.dead_countdown
    }

    /// One gate passes: every remembered click ages by one, ages past
    /// the horizon fall out.
    fn advance(&mut self, horizon: u32) {
        self.ages <<= 1;
        if horizon < 127 {
            self.ages &= (1u128 << (horizon + 1)) - 1;
        }
    }

    fn record_click(&mut self) {
        self.ages |= 1;
    }
}

/// Probability that the remembered clicks afterpulse this gate:
/// `1 - prod_over_remembered (1 - alpha exp(-(age - 1) / tau))`,
/// counting ages in `1..=horizon`.
pub fn afterpulse_probability(state: &DetectorState, config: &DetectorConfig) -> f64 {
    let weights = afterpulse_weights(config);
    afterpulse_probability_with(state, &weights)
}

fn afterpulse_weights(config: &DetectorConfig) -> Vec<f64> {
    (1..=config.afterpulse_horizon_gates)
        .map(|age| {
            config.afterpulse_alpha
                * (-(f64::from(age) - 1.0) / config.afterpulse_tau_gates).exp()
        })
        .collect()
}

fn afterpulse_probability_with(state: &DetectorState, weights: &[f64]) -> f64 {
    // Bit 0 (a click in this very gate) never contributes; ages beyond
    // the horizon have already been dropped by advance().
    let mut survival = 1.0f64;
    let mut mask = state.ages >> 1;
    mask &= (1u128 << weights.len().min(127)) - 1;
    while mask != 0 {
        let age_minus_one = mask.trailing_zeros() as usize;
        survival *= 1.0 - weights[age_minus_one];
        mask &= mask - 1;
    }
    1.0 - survival
}

/// Poisson photon-number sampler for one gate. Uses an exact sampling
/// method for any finite mean; a zero mean never draws.
pub struct PhotonSampler {
    dist: Option<Poisson<f64>>,
}

impl PhotonSampler {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::MeanPhotonsOutOfRange(lambda));
        }
        let dist = if lambda > 0.0 {
            Some(Poisson::new(lambda).map_err(|e| {
                Error::InvalidParameter(format!("poisson mean {lambda}: {e}"))
            })?)
        } else {
            None
        };
        Ok(Self { dist })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        match &self.dist {
            None => 0,
            Some(dist) => dist.sample(rng) as u32,
        }
    }
}

/// Draws a photon number for one pulse of mean `lambda`.
pub fn sample_photon_count<R: Rng>(lambda: f64, rng: &mut R) -> Result<u32> {
    Ok(PhotonSampler::new(lambda)?.sample(rng))
}

/// Fraction of the pulse energy falling inside the gate window, for a
/// top-hat pulse of `pulse_width_ns` starting at `pulse_arrival_ns` and
/// a gate of `gate_width_ns` opening at `gate_delay_ns`.
pub fn gate_overlap_fraction(
    pulse_arrival_ns: f64,
    pulse_width_ns: f64,
    gate_delay_ns: f64,
    gate_width_ns: f64,
) -> Result<f64> {
    if !(pulse_width_ns.is_finite() && pulse_width_ns > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pulse width must be positive, got {pulse_width_ns}"
        )));
    }
    if !(gate_width_ns.is_finite() && gate_width_ns > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gate width must be positive, got {gate_width_ns}"
        )));
    }
    if !pulse_arrival_ns.is_finite() || !gate_delay_ns.is_finite() {
        return Err(Error::InvalidParameter(
            "pulse arrival and gate delay must be finite".into(),
        ));
    }
    let pulse_end = pulse_arrival_ns + pulse_width_ns;
    let gate_end = gate_delay_ns + gate_width_ns;
    // Full containment is exact by construction; going through the
    // division would smear the common aligned case by a few ulps.
    if gate_delay_ns <= pulse_arrival_ns && pulse_end <= gate_end {
        return Ok(1.0);
    }
    let start = pulse_arrival_ns.max(gate_delay_ns);
    let end = pulse_end.min(gate_end);
    Ok(((end - start).max(0.0) / pulse_width_ns).min(1.0))
}

/// One detector with its per-gate decision procedure, afterpulse weights
/// precomputed. Build once per stream; the free [`gate_decision`] wraps
/// it for one-off calls.
pub struct GateSimulator {
    miss: f64,
    p_dark: f64,
    dead_time_gates: u32,
    horizon: u32,
    weights: Vec<f64>,
}

impl GateSimulator {
    pub fn new(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            miss: 1.0 - config.eta,
            p_dark: config.p_dark,
            dead_time_gates: config.dead_time_gates,
            horizon: config.afterpulse_horizon_gates,
            weights: afterpulse_weights(config),
        })
    }

    /// Processes one gate seeing `n_photons` arriving photons and
    /// returns whether it clicked, updating `state` in place.
    ///
    /// Draw order is fixed (photon survival, dark count, afterpulse)
    /// and a source only draws when its click probability is nonzero,
    /// so a stream replays exactly from (config, seed).
    pub fn gate_decision<R: Rng>(
        &self,
        n_photons: u32,
        state: &mut DetectorState,
        rng: &mut R,
    ) -> bool {
        state.advance(self.horizon);
        if state.dead_countdown > 0 {
            state.dead_countdown -= 1;
            return false;
        }
        let mut click = false;
        if n_photons > 0 {
            let p_photon = 1.0 - self.miss.powi(n_photons as i32);
            click |= rng.random_bool(p_photon);
        }
        if self.p_dark > 0.0 {
            click |= rng.random_bool(self.p_dark);
        }
        let p_ap = afterpulse_probability_with(state, &self.weights);
        if p_ap > 0.0 {
            click |= rng.random_bool(p_ap);
        }
        if click {
            state.record_click();
            state.dead_countdown = self.dead_time_gates;
        }
        click
    }
}

/// One-off gate decision; validates `config` on every call. Streams
/// should hold a [`GateSimulator`] instead.
pub fn gate_decision<R: Rng>(
    n_photons: u32,
    state: &mut DetectorState,
    config: &DetectorConfig,
    rng: &mut R,
) -> Result<bool> {
    Ok(GateSimulator::new(config)?.gate_decision(n_photons, state, rng))
}
