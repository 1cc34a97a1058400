//! Two-stage measurement noise: amplitude-quantized Poisson instrument noise
//! `A Pois(p / A)` per pixel, then `B` background photons of energy `q` per
//! measured photon, each dropped on a uniformly chosen pixel.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with the user seed
//! and one stream per (component, stage), so outputs are bit-reproducible
//! across platforms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpectError};
use crate::grid::Sinogram;
use crate::transport::MeasurementPair;

/// Means at or above this use the rounded normal approximation.
const NORMAL_THRESHOLD: f64 = 30.0;

/// Ratio between the mean positive ballistic pixel and the default quantum.
pub const QUANTUM_DIVISOR: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub amplitude: f64,
    pub bias: f64,
    /// Background photon energy; `None` picks [`default_quantum`] per component.
    pub quantum: Option<f64>,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(amplitude: f64, bias: f64, seed: u64) -> Self {
        Self {
            amplitude,
            bias,
            quantum: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(SpectError::InvalidParameter(format!(
                "noise amplitude must be finite and >= 0, got {}",
                self.amplitude
            )));
        }
        if !(self.bias.is_finite() && self.bias >= 0.0) {
            return Err(SpectError::InvalidParameter(format!(
                "background bias must be finite and >= 0, got {}",
                self.bias
            )));
        }
        if let Some(q) = self.quantum {
            check_quantum(q)?;
        }
        Ok(())
    }
}

fn check_quantum(q: f64) -> Result<()> {
    if q.is_finite() && q > 0.0 {
        Ok(())
    } else {
        Err(SpectError::InvalidParameter(format!(
            "quantum must be finite and > 0, got {q}"
        )))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Knuth's product method below [`NORMAL_THRESHOLD`], rounded normal above.
fn poisson<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < NORMAL_THRESHOLD {
        let limit = (-mean).exp();
        let mut k = 0.0;
        let mut p: f64 = rng.random();
        while p > limit {
            k += 1.0;
            p *= rng.random::<f64>();
        }
        k
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (mean + mean.sqrt() * z).round().max(0.0)
    }
}

fn instrument_with(s: &Sinogram, amplitude: f64, rng: &mut ChaCha8Rng) -> Sinogram {
    if amplitude == 0.0 {
        return s.clone();
    }
    let values = s
        .values()
        .iter()
        .map(|&p| amplitude * poisson(rng, p.max(0.0) / amplitude))
        .collect();
    Sinogram::from_values(*s.spec(), *s.angles(), values).expect("shape preserved")
}

fn background_with(s: &Sinogram, bias: f64, quantum: f64, rng: &mut ChaCha8Rng) -> Sinogram {
    if bias == 0.0 {
        return s.clone();
    }
    let measured = (s.sum() / quantum).round().max(0.0);
    let added = (bias * measured).round() as u64;
    let mut values = s.values().to_vec();
    let len = values.len();
    for _ in 0..added {
        values[rng.random_range(0..len)] += quantum;
    }
    Sinogram::from_values(*s.spec(), *s.angles(), values).expect("shape preserved")
}

/// Replaces each pixel `p` by `A Pois(max(p, 0) / A)`; `A = 0` is the identity.
pub fn instrument_noise(s: &Sinogram, amplitude: f64, seed: u64) -> Result<Sinogram> {
    NoiseParams::new(amplitude, 0.0, seed).validate()?;
    Ok(instrument_with(s, amplitude, &mut stream_rng(seed, 0)))
}

/// Adds `q` to `round(B round(sum / q))` uniformly drawn pixels (with
/// replacement); `B = 0` is the identity.
pub fn background_noise(s: &Sinogram, bias: f64, quantum: f64, seed: u64) -> Result<Sinogram> {
    NoiseParams::new(0.0, bias, seed).validate()?;
    check_quantum(quantum)?;
    Ok(background_with(s, bias, quantum, &mut stream_rng(seed, 1)))
}

/// Mean of the positive pixels divided by [`QUANTUM_DIVISOR`].
pub fn default_quantum(s: &Sinogram) -> Result<f64> {
    let (sum, count) = s
        .values()
        .iter()
        .filter(|v| **v > 0.0)
        .fold((0.0, 0usize), |(acc, n), v| (acc + v, n + 1));
    if count == 0 {
        return Err(SpectError::InvalidParameter(
            "no positive pixel to derive a quantum from".into(),
        ));
    }
    Ok(sum / count as f64 / QUANTUM_DIVISOR)
}

/// Instrument then background noise on both components. Component `c` and
/// stage `t` draw from stream `2c + t`.
pub fn apply_noise(data: &MeasurementPair, params: &NoiseParams) -> Result<MeasurementPair> {
    params.validate()?;
    let mut out = Vec::with_capacity(2);
    for (c, s) in [data.a0(), data.a1()].into_iter().enumerate() {
        let c = c as u64;
        let noisy = instrument_with(s, params.amplitude, &mut stream_rng(params.seed, 2 * c));
        let noisy = if params.bias == 0.0 {
            noisy
        } else {
            let q = match params.quantum {
                Some(q) => q,
                None => default_quantum(s)?,
            };
            background_with(&noisy, params.bias, q, &mut stream_rng(params.seed, 2 * c + 1))
        };
        out.push(noisy);
    }
    let a1 = out.pop().expect("two components");
    let a0 = out.pop().expect("two components");
    MeasurementPair::new(a0, a1, data.c_scatter())
}
