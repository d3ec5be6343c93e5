//! Reproducible disturbance signals built from constants, sinusoids and
//! piecewise-constant uniform noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise hold interval used when a term does not specify one.
pub const DEFAULT_HOLD_INTERVAL: f64 = 1e-3;

/// Absorbs rounding in `t / hold` so that `t = k·hold` maps to interval `k`.
const INDEX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalTerm {
    Constant {
        value: f64,
    },
    /// `amplitude · kind(angular_frequency · t + phase)`
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
        kind: WaveKind,
    },
    /// Uniform on `[low, high]`, redrawn every `hold_interval` seconds.
    UniformNoise {
        low: f64,
        high: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hold_interval: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    /// One term list per disturbance channel.
    pub channels: Vec<Vec<SignalTerm>>,
    #[serde(default)]
    pub seed: u64,
}

impl SignalSpec {
    pub fn zero(q: usize) -> Self {
        Self {
            channels: vec![Vec::new(); q],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (c, terms) in self.channels.iter().enumerate() {
            for term in terms {
                let bad = match term {
                    SignalTerm::Constant { value } => !value.is_finite(),
                    SignalTerm::Sinusoid {
                        amplitude,
                        angular_frequency,
                        phase,
                        ..
                    } => ![amplitude, angular_frequency, phase]
                        .iter()
                        .all(|v| v.is_finite()),
                    SignalTerm::UniformNoise {
                        low,
                        high,
                        hold_interval,
                    } => {
                        !(low.is_finite() && high.is_finite() && low <= high)
                            || hold_interval.is_some_and(|h| !(h.is_finite() && h > 0.0))
                    }
                };
                if bad {
                    return Err(Error::InvalidParameter(format!(
                        "invalid term in disturbance channel {c}: {term:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn has_noise(&self) -> bool {
        self.channels
            .iter()
            .flatten()
            .any(|t| matches!(t, SignalTerm::UniformNoise { .. }))
    }

    /// Per-channel magnitude bound by the triangle inequality.
    pub fn channel_bounds(&self) -> Vec<f64> {
        self.channels
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| match t {
                        SignalTerm::Constant { value } => value.abs(),
                        SignalTerm::Sinusoid { amplitude, .. } => amplitude.abs(),
                        SignalTerm::UniformNoise { low, high, .. } => low.abs().max(high.abs()),
                    })
                    .sum()
            })
            .collect()
    }
}

/// Euclidean norm of the per-channel bounds; a conservative `𝒟`.
pub fn nominal_bound(spec: &SignalSpec) -> f64 {
    spec.channel_bounds()
        .iter()
        .map(|b| b * b)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
struct NoiseTrack {
    low: f64,
    high: f64,
    hold: f64,
    /// Unit draws `ω ∈ [0, 1)`, one per interval.
    unit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Realized {
    Constant(f64),
    Sinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
        kind: WaveKind,
    },
    Noise(NoiseTrack),
}

/// A spec with all noise drawn for a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRealization {
    spec: SignalSpec,
    horizon: f64,
    channels: Vec<Vec<Realized>>,
}

/// Realizes with [`DEFAULT_HOLD_INTERVAL`] for terms without a hold interval.
pub fn realize(spec: &SignalSpec, horizon: f64) -> Result<SignalRealization> {
    realize_with_hold(spec, horizon, DEFAULT_HOLD_INTERVAL)
}

/// Each noise term `(channel c, term j)` reads its own ChaCha stream, so a
/// draw depends only on `(seed, c, j, interval index)`.
pub fn realize_with_hold(
    spec: &SignalSpec,
    horizon: f64,
    default_hold: f64,
) -> Result<SignalRealization> {
    let seed = spec.seed;
    realize_with_draws(spec, horizon, default_hold, |c, j, count| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((c as u64) << 32) | j as u64);
        (0..count).map(|_| rng.random::<f64>()).collect()
    })
}

/// Realization whose unit draws come from `draws(channel, term, count)`.
pub fn realize_with_draws(
    spec: &SignalSpec,
    horizon: f64,
    default_hold: f64,
    mut draws: impl FnMut(usize, usize, usize) -> Vec<f64>,
) -> Result<SignalRealization> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(default_hold.is_finite() && default_hold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "hold interval must be positive, got {default_hold}"
        )));
    }
    spec.validate()?;
    let channels = spec
        .channels
        .iter()
        .enumerate()
        .map(|(c, terms)| {
            terms
                .iter()
                .enumerate()
                .map(|(j, term)| match *term {
                    SignalTerm::Constant { value } => Ok(Realized::Constant(value)),
                    SignalTerm::Sinusoid {
                        amplitude,
                        angular_frequency,
                        phase,
                        kind,
                    } => Ok(Realized::Sinusoid {
                        amplitude,
                        omega: angular_frequency,
                        phase,
                        kind,
                    }),
                    SignalTerm::UniformNoise {
                        low,
                        high,
                        hold_interval,
                    } => {
                        let hold = hold_interval.unwrap_or(default_hold);
                        // one extra interval so t = horizon is addressable
                        let count = (horizon / hold - INDEX_EPS).ceil() as usize + 1;
                        let unit = draws(c, j, count);
                        if unit.len() != count {
                            return Err(Error::DimensionMismatch {
                                operand: "noise draws",
                                expected: count,
                                found: unit.len(),
                            });
                        }
                        Ok(Realized::Noise(NoiseTrack {
                            low,
                            high,
                            hold,
                            unit,
                        }))
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignalRealization {
        spec: spec.clone(),
        horizon,
        channels,
    })
}

impl SignalRealization {
    pub fn spec(&self) -> &SignalSpec {
        &self.spec
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * (1.0 + self.horizon);
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::OutsideHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// `d(t)`.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok(self
            .channels
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|term| match term {
                        Realized::Constant(v) => *v,
                        Realized::Sinusoid {
                            amplitude,
                            omega,
                            phase,
                            kind,
                        } => {
                            let arg = omega * t + phase;
                            amplitude
                                * match kind {
                                    WaveKind::Sin => arg.sin(),
                                    WaveKind::Cos => arg.cos(),
                                }
                        }
                        Realized::Noise(n) => {
                            let idx = ((t.max(0.0) / n.hold + INDEX_EPS).floor() as usize)
                                .min(n.unit.len() - 1);
                            n.low + (n.high - n.low) * n.unit[idx]
                        }
                    })
                    .sum()
            })
            .collect())
    }

    /// `ḋ(t)`; only defined for specs without noise.
    pub fn derivative(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        if self.spec.has_noise() {
            return Err(Error::InvalidParameter(
                "noise terms have no derivative".into(),
            ));
        }
        Ok(self
            .channels
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|term| match term {
                        Realized::Sinusoid {
                            amplitude,
                            omega,
                            phase,
                            kind,
                        } => {
                            let arg = omega * t + phase;
                            amplitude
                                * omega
                                * match kind {
                                    WaveKind::Sin => arg.cos(),
                                    WaveKind::Cos => -arg.sin(),
                                }
                        }
                        _ => 0.0,
                    })
                    .sum()
            })
            .collect())
    }
}
