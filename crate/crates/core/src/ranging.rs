//! Two-way-ranging simulation between clock-imperfect UWB nodes.
//!
//! Single-sided TWR estimates time of flight as `0.5 * (t_round - t_reply)`;
//! double-sided TWR adds a second reply and computes
//! `(t_round1 * t_round2 - t_reply1 * t_reply2) / (t_round1 + t_round2 + t_reply1 + t_reply2)`,
//! which cancels the first-order clock-rate error between the two nodes.
//! [`simulate_exchange`] generates the four durations for a node pair with
//! configurable clock drift and antenna delay, and [`sample_range`] applies
//! the calibrated distance-domain noise model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;

/// Vacuum speed of light in m/s. The ~300 ppm air-index correction is far
/// below the few-centimeter ranging noise floor, so the vacuum value is the
/// default; use [`tof_to_distance_with`] to override.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sanity bound on clock rate error; typical crystal spec.
pub const MAX_DRIFT_PPM: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum RangingError {
    #[error("invalid timestamps: {0}")]
    InvalidTimestamps(String),
    #[error("invalid clock model: {0}")]
    InvalidClock(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
}

/// Per-node clock imperfections driving timestamp simulation.
///
/// `offset` shifts the node's absolute clock; it cancels in every TWR
/// duration (both endpoints are read on the same clock) but is kept so a
/// scenario can describe the full clock state. `drift_ppm` scales elapsed
/// time by `1 + drift_ppm * 1e-6`. `antenna_delay` is the fixed electronic
/// delay added per transmit/receive path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset: f64,
    pub drift_ppm: f64,
    pub antenna_delay: f64,
}

impl ClockModel {
    pub fn new(offset: f64, drift_ppm: f64, antenna_delay: f64) -> Result<Self, RangingError> {
        if !drift_ppm.is_finite() || drift_ppm.abs() > MAX_DRIFT_PPM {
            return Err(RangingError::InvalidClock(format!(
                "|drift| must be <= {MAX_DRIFT_PPM} ppm, got {drift_ppm}"
            )));
        }
        if !antenna_delay.is_finite() || antenna_delay < 0.0 {
            return Err(RangingError::InvalidClock(format!(
                "antenna_delay must be >= 0, got {antenna_delay}"
            )));
        }
        Ok(Self {
            offset,
            drift_ppm,
            antenna_delay,
        })
    }

    /// An ideal clock: zero offset, drift and antenna delay.
    pub fn ideal() -> Self {
        Self {
            offset: 0.0,
            drift_ppm: 0.0,
            antenna_delay: 0.0,
        }
    }

    /// Local-clock rate relative to true time.
    pub fn rate(&self) -> f64 {
        1.0 + self.drift_ppm * 1e-6
    }
}

/// The four local-clock durations of a double-sided exchange.
///
/// `t_round1`/`t_reply2` are measured on the initiator clock,
/// `t_reply1`/`t_round2` on the responder clock. A single-sided exchange
/// uses only the first pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwrTimestamps {
    pub t_round1: f64,
    pub t_reply1: f64,
    pub t_round2: f64,
    pub t_reply2: f64,
}

impl TwrTimestamps {
    pub fn new(
        t_round1: f64,
        t_reply1: f64,
        t_round2: f64,
        t_reply2: f64,
    ) -> Result<Self, RangingError> {
        let ts = Self {
            t_round1,
            t_reply1,
            t_round2,
            t_reply2,
        };
        ts.validate()?;
        Ok(ts)
    }

    /// All durations positive and each round trip strictly contains its
    /// reply turnaround.
    pub fn validate(&self) -> Result<(), RangingError> {
        let all = [self.t_round1, self.t_reply1, self.t_round2, self.t_reply2];
        if all.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(RangingError::InvalidTimestamps(
                "all durations must be finite and > 0".into(),
            ));
        }
        if self.t_round1 <= self.t_reply1 || self.t_round2 <= self.t_reply2 {
            return Err(RangingError::InvalidTimestamps(
                "each round trip must exceed its reply turnaround".into(),
            ));
        }
        Ok(())
    }
}

/// Single-sided TWR time of flight: `0.5 * (t_round - t_reply)`.
pub fn ss_twr_tof(t_round: f64, t_reply: f64) -> Result<f64, RangingError> {
    if !t_round.is_finite() || !t_reply.is_finite() || t_reply <= 0.0 || t_round <= t_reply {
        return Err(RangingError::InvalidTimestamps(format!(
            "need t_round > t_reply > 0, got t_round={t_round}, t_reply={t_reply}"
        )));
    }
    Ok(0.5 * (t_round - t_reply))
}

/// Double-sided TWR time of flight.
pub fn ds_twr_tof(ts: &TwrTimestamps) -> Result<f64, RangingError> {
    ts.validate()?;
    let num = ts.t_round1 * ts.t_round2 - ts.t_reply1 * ts.t_reply2;
    let den = ts.t_round1 + ts.t_round2 + ts.t_reply1 + ts.t_reply2;
    Ok(num / den)
}

/// Simulate one full double-sided exchange between two nodes.
///
/// The true one-way time of flight is `distance / c`. Each measured
/// duration is the true elapsed time scaled by the measuring node's clock
/// rate, plus twice that node's antenna delay (transmit + receive path).
/// Both reply turnarounds equal `reply_turnaround` in true time.
pub fn simulate_exchange(
    initiator: (Point3, ClockModel),
    responder: (Point3, ClockModel),
    reply_turnaround: f64,
) -> TwrTimestamps {
    assert!(reply_turnaround > 0.0, "reply_turnaround must be > 0");
    let (pi, ci) = initiator;
    let (pr, cr) = responder;
    assert!(pi != pr, "initiator and responder positions must differ");

    let tof = pi.distance(&pr) / SPEED_OF_LIGHT;
    let round_true = 2.0 * tof + reply_turnaround;

    TwrTimestamps {
        t_round1: round_true * ci.rate() + 2.0 * ci.antenna_delay,
        t_reply1: reply_turnaround * cr.rate() + 2.0 * cr.antenna_delay,
        t_round2: round_true * cr.rate() + 2.0 * cr.antenna_delay,
        t_reply2: reply_turnaround * ci.rate() + 2.0 * ci.antenna_delay,
    }
}

/// Convert a time of flight to distance at the vacuum speed of light.
/// Negative ToF passes through as negative distance; the caller decides.
pub fn tof_to_distance(tof: f64) -> f64 {
    tof * SPEED_OF_LIGHT
}

/// Same as [`tof_to_distance`] with an explicit propagation speed.
pub fn tof_to_distance_with(tof: f64, propagation_speed: f64) -> f64 {
    tof * propagation_speed
}

/// Distance-domain noise model for line-of-sight ranging.
///
/// A sampled range is `true_distance + bias + clamp(N(0, sigma), ±clip)`.
/// The clip keeps simulated errors inside the observed LOS bounds
/// (3.9 cm std, 8.6 cm max for calibrated DWM1001 pairs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangingNoiseModel {
    pub sigma: f64,
    pub bias: f64,
    pub clip: f64,
    pub rng_seed: u64,
}

impl RangingNoiseModel {
    pub fn new(sigma: f64, bias: f64, clip: f64, rng_seed: u64) -> Result<Self, RangingError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(RangingError::InvalidNoise(format!(
                "sigma must be >= 0, got {sigma}"
            )));
        }
        if !clip.is_finite() || clip < sigma {
            return Err(RangingError::InvalidNoise(format!(
                "clip must be >= sigma ({sigma}), got {clip}"
            )));
        }
        if !bias.is_finite() {
            return Err(RangingError::InvalidNoise("bias must be finite".into()));
        }
        Ok(Self {
            sigma,
            bias,
            clip,
            rng_seed,
        })
    }

    /// The calibrated line-of-sight model: 3.9 cm std clipped at 8.6 cm,
    /// zero bias.
    pub fn calibrated_los(rng_seed: u64) -> Self {
        Self {
            sigma: 0.039,
            bias: 0.0,
            clip: 0.086,
            rng_seed,
        }
    }

    /// Exact ranges: zero noise, zero bias.
    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            bias: 0.0,
            clip: 0.0,
            rng_seed: 0,
        }
    }

    /// A fresh rng stream seeded from the model's own seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }
}

/// Draw one noisy range sample for a true distance.
pub fn sample_range<R: Rng + ?Sized>(
    true_distance: f64,
    noise: &RangingNoiseModel,
    rng: &mut R,
) -> f64 {
    debug_assert!(true_distance >= 0.0);
    let err = if noise.sigma > 0.0 {
        let normal = Normal::new(0.0, noise.sigma).expect("sigma validated at construction");
        normal.sample(rng).clamp(-noise.clip, noise.clip)
    } else {
        0.0
    };
    true_distance + noise.bias + err
}
