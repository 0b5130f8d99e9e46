//! Second-order Butterworth low-pass filter.
//!
//! The bilinear transform squeezes the whole analog axis into the band below
//! Nyquist, which at the wearable's 23.1 Hz rate drives the response near
//! Nyquist far under the analog prototype (about 0.03 instead of 0.24 at
//! 10 Hz for a 5 Hz cutoff). Instead, the poles are the exact images
//! `z = exp(s·T)` of the analog Butterworth poles and the zeros are fitted
//! so that the digital magnitude equals the analog one at DC and at the
//! cutoff and tracks it across the band with the smallest worst-case
//! log-magnitude error.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::ingest::SyncedRecording;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
    pub order: u32,
}

impl FilterSpec {
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64) -> Self {
        Self {
            cutoff_hz,
            sample_rate_hz,
            order: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != 2 {
            return Err(Error::Filter(format!(
                "order {} not supported, only 2",
                self.order
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Filter(format!(
                "sample rate {} must be positive",
                self.sample_rate_hz
            )));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::Filter(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }

    /// Magnitude of the analog Butterworth prototype at `freq_hz`.
    pub fn analog_magnitude(&self, freq_hz: f64) -> f64 {
        let r = freq_hz / self.cutoff_hz;
        1.0 / libm::sqrt(1.0 + libm::pow(r, 2.0 * self.order as f64))
    }
}

/// Biquad coefficients, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

/// Squared magnitude of a biquad written in terms of `phi = sin²(ω/2)`:
/// `|H|² = (B0(1-phi) + B1 phi + 4 B2 phi(1-phi)) / (same with A)`.
#[derive(Debug, Clone, Copy)]
struct PowerForm {
    num: [f64; 3],
    den: [f64; 3],
}

impl PowerForm {
    fn magnitude_sq(&self, phi: f64) -> f64 {
        let eval = |c: &[f64; 3]| c[0] * (1.0 - phi) + c[1] * phi + 4.0 * c[2] * phi * (1.0 - phi);
        eval(&self.num) / eval(&self.den)
    }
}

const SEARCH_FREQS: usize = 256;

impl Biquad {
    pub fn lowpass(spec: &FilterSpec) -> Result<Self> {
        spec.validate()?;
        let w0 = 2.0 * PI * spec.cutoff_hz / spec.sample_rate_hz;
        let zeta = FRAC_1_SQRT_2;
        let a1 = -2.0 * libm::exp(-zeta * w0) * libm::cos(libm::sqrt(1.0 - zeta * zeta) * w0);
        let a2 = libm::exp(-2.0 * zeta * w0);
        let den = [
            (1.0 + a1 + a2) * (1.0 + a1 + a2),
            (1.0 - a1 + a2) * (1.0 - a1 + a2),
            -4.0 * a2,
        ];

        let grid: Vec<(f64, f64)> = (1..=SEARCH_FREQS)
            .map(|i| {
                let f = spec.sample_rate_hz / 2.0 * i as f64 / SEARCH_FREQS as f64;
                let phi = libm::pow(libm::sin(PI * f / spec.sample_rate_hz), 2.0);
                (phi, libm::log(spec.analog_magnitude(f).max(1e-12)))
            })
            .collect();
        let objective = |g: f64| -> Option<f64> {
            let (pf, _) = Self::zeros_for(den, w0, g)?;
            let worst = grid.iter().fold(0.0f64, |acc, &(phi, ln_analog)| {
                let digital = pf.magnitude_sq(phi).max(1e-24);
                acc.max((0.5 * libm::log(digital) - ln_analog).abs())
            });
            Some(worst)
        };

        let mut best = (f64::INFINITY, 0.0);
        let coarse = 1000;
        for i in 0..=coarse {
            let g = i as f64 / coarse as f64;
            if let Some(e) = objective(g) {
                if e < best.0 {
                    best = (e, g);
                }
            }
        }
        let (lo, hi) = ((best.1 - 1e-3).max(0.0), (best.1 + 1e-3).min(1.0));
        let fine = 200;
        for i in 0..=fine {
            let g = lo + (hi - lo) * i as f64 / fine as f64;
            if let Some(e) = objective(g) {
                if e < best.0 {
                    best = (e, g);
                }
            }
        }
        let (_, b) = Self::zeros_for(den, w0, best.1)
            .ok_or_else(|| Error::Filter(format!("no realizable design for {spec:?}")))?;
        Ok(Biquad { b, a: [a1, a2] })
    }

    /// Numerator with unit DC gain, half power at `w0` and gain `nyquist_gain`
    /// at Nyquist. `None` if no real minimum-phase factorization exists.
    fn zeros_for(den: [f64; 3], w0: f64, nyquist_gain: f64) -> Option<(PowerForm, [f64; 3])> {
        let phi1 = libm::pow(libm::sin(w0 / 2.0), 2.0);
        let phi0 = 1.0 - phi1;
        let phi2 = 4.0 * phi0 * phi1;
        let d_w0 = den[0] * phi0 + den[1] * phi1 + den[2] * phi2;
        let n0 = den[0];
        let n1 = den[1] * nyquist_gain * nyquist_gain;
        let n2 = (0.5 * d_w0 - n0 * phi0 - n1 * phi1) / phi2;
        let w = 0.5 * (libm::sqrt(n0) + libm::sqrt(n1));
        let disc = w * w + n2;
        if disc < 0.0 {
            return None;
        }
        let b0 = 0.5 * (w + libm::sqrt(disc));
        if b0 <= 0.0 {
            return None;
        }
        let b1 = 0.5 * (libm::sqrt(n0) - libm::sqrt(n1));
        let b2 = -n2 / (4.0 * b0);
        let pf = PowerForm {
            num: [n0, n1, n2],
            den,
        };
        Some((pf, [b0, b1, b2]))
    }

    /// Magnitude of the digital response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (c1, s1) = (libm::cos(w), libm::sin(w));
        let (c2, s2) = (libm::cos(2.0 * w), libm::sin(2.0 * w));
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let nr = b0 + b1 * c1 + b2 * c2;
        let ni = -(b1 * s1 + b2 * s2);
        let dr = 1.0 + a1 * c1 + a2 * c2;
        let di = -(a1 * s1 + a2 * s2);
        libm::sqrt((nr * nr + ni * ni) / (dr * dr + di * di))
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }
}

/// Transposed direct-form II state for one channel.
#[derive(Debug, Clone)]
pub struct BiquadState {
    coeffs: Biquad,
    s1: f64,
    s2: f64,
}

impl BiquadState {
    /// State in steady equilibrium for a constant input `x0`.
    pub fn settled(coeffs: Biquad, x0: f64) -> Self {
        let y0 = coeffs.dc_gain() * x0;
        let [b0, b1, b2] = coeffs.b;
        let [a1, a2] = coeffs.a;
        let s2 = b2 * x0 - a2 * y0;
        let s1 = b1 * x0 - a1 * y0 + s2;
        debug_assert!((y0 - (b0 * x0 + s1)).abs() <= 1e-9 * (1.0 + x0.abs()));
        Self { coeffs, s1, s2 }
    }

    pub fn step(&mut self, x: f64) -> f64 {
        let [b0, b1, b2] = self.coeffs.b;
        let [a1, a2] = self.coeffs.a;
        let y = b0 * x + self.s1;
        self.s1 = b1 * x - a1 * y + self.s2;
        self.s2 = b2 * x - a2 * y;
        y
    }
}

/// Filters one channel causally, starting settled at its first sample.
pub fn filter_channel(coeffs: Biquad, input: &[f64]) -> Vec<f64> {
    let Some(&first) = input.first() else {
        return Vec::new();
    };
    let mut state = BiquadState::settled(coeffs, first);
    input.iter().map(|&x| state.step(x)).collect()
}

/// Low-pass filters each column of `values`, sampled at the filter's sample rate.
pub fn filter_columns(values: &Matrix, spec: &FilterSpec) -> Result<Matrix> {
    let coeffs = Biquad::lowpass(spec)?;
    let (n, m) = (values.rows(), values.cols());
    let mut out = Matrix::zeros(n, m);
    for c in 0..m {
        for (k, v) in filter_channel(coeffs, &values.column(c)).into_iter().enumerate() {
            out.set(k, c, v);
        }
    }
    Ok(out)
}

/// Low-pass filters every channel of a recording independently.
pub fn lowpass(recording: &SyncedRecording, spec: &FilterSpec) -> Result<SyncedRecording> {
    if (spec.sample_rate_hz - recording.rate_hz).abs() > 1e-9 * recording.rate_hz {
        return Err(Error::Filter(format!(
            "filter designed for {} Hz, recording sampled at {} Hz",
            spec.sample_rate_hz, recording.rate_hz
        )));
    }
    Ok(SyncedRecording {
        values: filter_columns(&recording.values, spec)?,
        ..recording.clone()
    })
}
