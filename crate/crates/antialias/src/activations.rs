//! Pointwise activations with analytic derivatives, plus the harmonic
//! analysis showing that smooth activations generate faster-decaying
//! high-frequency content than ReLU.

use statrs::function::erf::erf;

use crate::spectral::{dft1d, Signal1d};
use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Exact erf-based form; the tanh approximation would contaminate the
    /// spectral-decay measurements.
    Gelu,
    Swish {
        beta: f64,
    },
}

impl Activation {
    pub fn swish() -> Self {
        Activation::Swish { beta: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Swish { .. } => "swish",
        }
    }

    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => x * normal_cdf(x),
            Activation::Swish { beta } => x * sigmoid(beta * x),
        }
    }

    /// Analytic derivative. ReLU uses subgradient 0 at the origin.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => normal_cdf(x) + x * normal_pdf(x),
            Activation::Swish { beta } => {
                let s = sigmoid(beta * x);
                s + beta * x * s * (1.0 - s)
            }
        }
    }

    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.forward(x)).collect()
    }

    pub fn apply_derivative(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.derivative(x)).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Power (spectral magnitude) at integer multiples of a sinusoid's
/// fundamental after passing it through an activation.
#[derive(Debug, Clone)]
pub struct HarmonicProfile {
    /// `power[m]` is the magnitude at harmonic m (m = 0 is DC, m = 1 the
    /// fundamental), with frequencies above Nyquist folded back.
    pub power: Vec<f64>,
    pub fundamental_cycles: usize,
    pub n: usize,
}

/// Apply `a` to `offset + amplitude * sin(2*pi*freq*n)` and group the
/// output spectrum by harmonic index. `freq * n_samples` must be an
/// integer so every harmonic lands exactly on a DFT bin.
pub fn spectral_leakage(
    a: Activation,
    freq: f64,
    n_samples: usize,
    amplitude: f64,
    offset: f64,
    max_harmonic: usize,
) -> Result<HarmonicProfile> {
    if !(0.0 < freq && freq < 0.5) {
        return Err(Error::invalid("freq must be in (0, 0.5) cycles per sample"));
    }
    let cycles = freq * n_samples as f64;
    if (cycles - cycles.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "freq {freq} is not coherent over {n_samples} samples"
        )));
    }
    let cycles = cycles.round() as usize;
    let x: Vec<f64> = (0..n_samples)
        .map(|i| {
            offset
                + amplitude
                    * (2.0 * std::f64::consts::PI * cycles as f64 * i as f64
                        / n_samples as f64)
                        .sin()
        })
        .collect();
    let y = a.apply(&x);
    let psd = dft1d(&Signal1d::new(y)?)?.psd();

    let power = (0..=max_harmonic)
        .map(|m| {
            let mut bin = (m * cycles) % n_samples;
            if bin > n_samples / 2 {
                bin = n_samples - bin;
            }
            psd[bin]
        })
        .collect();
    Ok(HarmonicProfile {
        power,
        fundamental_cycles: cycles,
        n: n_samples,
    })
}

/// Least-squares slope of log(power) against log(m) over the even
/// harmonics in `[m_lo, m_hi]`. More negative means faster decay.
///
/// Odd harmonics are skipped: for a zero-offset sinusoid every activation
/// here splits into an odd part (the scaled fundamental) plus an even
/// function of the input, so odd harmonics above the fundamental are
/// identically zero and carry no decay information.
pub fn harmonic_decay_exponent(profile: &HarmonicProfile, m_lo: usize, m_hi: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = (m_lo..=m_hi)
        .filter(|m| m % 2 == 0)
        .filter_map(|m| {
            let p = *profile.power.get(m)?;
            // floor sits above DFT roundoff noise so spurious bins never
            // enter the fit
            if p > 1e-9 {
                Some(((m as f64).ln(), p.ln()))
            } else {
                None
            }
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid(
            "not enough nonzero harmonics to fit a decay exponent",
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
