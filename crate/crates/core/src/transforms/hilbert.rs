//! Spectral Hilbert transform of sampled profiles.
//!
//! Convention: `Hg(s) = (1/pi) p.v. int g(t) / (s - t) dt`, i.e. the Fourier
//! multiplier `-i sgn(xi)`, so `H cos = sin`. Profiles are zero-padded before
//! the FFT to keep the periodic wrap-around of the `1/s` kernel away from the
//! samples. The multiplier is the spectrum of the band-limited sampled kernel
//! `2 / (pi m)` (odd `m`) rather than a sampled `sgn`, which keeps the
//! zero-frequency behaviour of the continuous transform.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Sinogram;

pub const DEFAULT_PADDING: usize = 4;

/// Planned Hilbert transform for profiles of a fixed length.
#[derive(Clone)]
pub struct HilbertTransform {
    n: usize,
    padded: usize,
    /// Refinement factor of [`Self::spectral`] outputs.
    up: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    inverse_fine: Arc<dyn Fft<f64>>,
    /// Spectra of the band-limited Hilbert and ramp kernels sampled at unit
    /// spacing and wrapped onto the padded length.
    hilbert_spectrum: Vec<Complex64>,
    ramp_spectrum: Vec<Complex64>,
}

/// Fourier multipliers available to [`HilbertTransform::spectral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Multiplier {
    Identity,
    /// `-i sgn(xi)`
    Hilbert,
    /// `d/ds` for sample spacing `h`.
    Derivative(f64),
    /// `d/ds H = |xi|` for sample spacing `h`.
    Ramp(f64),
}

/// DFT of the unit-spacing kernel `c(m)` wrapped circularly onto `p` bins.
fn kernel_spectrum(p: usize, c: impl Fn(isize) -> f64, fft: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
    let half = (p / 2) as isize;
    let mut buf: Vec<Complex64> = (0..p as isize)
        .map(|i| {
            let m = if i < half { i } else { i - p as isize };
            Complex64::new(c(m), 0.0)
        })
        .collect();
    fft.process(&mut buf);
    buf
}

impl std::fmt::Debug for HilbertTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HilbertTransform")
            .field("n", &self.n)
            .field("padded", &self.padded)
            .finish()
    }
}

impl HilbertTransform {
    pub fn new(n: usize, padding: usize) -> Self {
        Self::with_refinement(n, padding, 1)
    }

    pub(crate) fn with_refinement(n: usize, padding: usize, up: usize) -> Self {
        let padded = n * padding.max(2);
        let up = up.max(1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        // band-limited kernels: 2 / (pi m) and -2 / (pi m^2) at odd m, pi / 2 at 0
        let hilbert_spectrum = kernel_spectrum(
            padded,
            |m| if m % 2 != 0 { 2.0 / (PI * m as f64) } else { 0.0 },
            &forward,
        );
        let ramp_spectrum = kernel_spectrum(
            padded,
            |m| match m {
                0 => PI / 2.0,
                _ if m % 2 != 0 => -2.0 / (PI * (m * m) as f64),
                _ => 0.0,
            },
            &forward,
        );
        Self {
            n,
            padded,
            up,
            forward,
            inverse: planner.plan_fft_inverse(padded),
            inverse_fine: planner.plan_fft_inverse(padded * up),
            hilbert_spectrum,
            ramp_spectrum,
        }
    }

    pub(crate) fn refinement(&self) -> usize {
        self.up
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Transform of `input` (length `n`) returned on the padded window of
    /// samples `-before .. n + after` (the padded buffer must hold it).
    pub(crate) fn apply_extended(&self, input: &[Complex64], before: usize, after: usize) -> Vec<Complex64> {
        self.spectral_with(input, before, after, 1, Multiplier::Hilbert, false)
    }

    /// Applies a Fourier multiplier to the zero-padded `input` and returns the
    /// result on the window `-before .. n + after`, refined by spectral
    /// interpolation: output `i` sits at sample `i / up - before`. With
    /// `apodize`, the Hilbert and ramp multipliers are tapered by `cos(omega / 2)`,
    /// which vanishes at the Nyquist frequency.
    pub(crate) fn spectral(
        &self,
        input: &[Complex64],
        before: usize,
        after: usize,
        multiplier: Multiplier,
        apodize: bool,
    ) -> Vec<Complex64> {
        self.spectral_with(input, before, after, self.up, multiplier, apodize)
    }

    fn spectral_with(
        &self,
        input: &[Complex64],
        before: usize,
        after: usize,
        up: usize,
        multiplier: Multiplier,
        apodize: bool,
    ) -> Vec<Complex64> {
        assert_eq!(input.len(), self.n);
        assert!(self.n + before + after <= self.padded);
        assert!(up >= 1);
        let p = self.padded;
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        buf[..self.n].copy_from_slice(input);
        self.forward.process(&mut buf);
        let half = p / 2;
        let fine_len = p * up;
        let mut fine = vec![Complex64::new(0.0, 0.0); fine_len];
        let scale = 1.0 / p as f64;
        for (k, v) in buf.iter().enumerate() {
            // the Nyquist bin of an even length is dropped: its sign is ambiguous
            if p.is_multiple_of(2) && k == half {
                continue;
            }
            let signed = if k <= half { k as isize } else { k as isize - p as isize };
            let omega = 2.0 * PI * signed as f64 / p as f64;
            let win = match multiplier {
                Multiplier::Hilbert | Multiplier::Ramp(_) if apodize => (0.5 * omega).cos(),
                _ => 1.0,
            };
            let m = win
                * match multiplier {
                    Multiplier::Identity => Complex64::new(1.0, 0.0),
                    Multiplier::Hilbert => self.hilbert_spectrum[k],
                    Multiplier::Derivative(h) => Complex64::new(0.0, omega / h),
                    Multiplier::Ramp(h) => self.ramp_spectrum[k] / h,
                };
            let idx = if signed >= 0 {
                signed as usize
            } else {
                (fine_len as isize + signed) as usize
            };
            fine[idx] = *v * m * scale;
        }
        if up == 1 {
            self.inverse.process(&mut fine);
        } else {
            debug_assert_eq!(up, self.up);
            self.inverse_fine.process(&mut fine);
        }
        let fl = fine_len as isize;
        let start = -((before * up) as isize);
        let end = ((self.n + after) * up) as isize;
        (start..end).map(|i| fine[i.rem_euclid(fl) as usize]).collect()
    }

    pub fn apply_complex(&self, input: &[Complex64]) -> Vec<Complex64> {
        self.apply_extended(input, 0, 0)
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let z: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply_complex(&z).into_iter().map(|c| c.re).collect()
    }
}

/// Hilbert transform in `s` of every angle's profile.
pub fn hilbert_rows(g: &Sinogram) -> Sinogram {
    hilbert_rows_padded(g, DEFAULT_PADDING)
}

pub fn hilbert_rows_padded(g: &Sinogram, padding: usize) -> Sinogram {
    let ht = HilbertTransform::new(g.n_s(), padding);
    let profiles: Vec<Vec<f64>> = (0..g.n_theta()).map(|k| ht.apply(&g.profile(k))).collect();
    Sinogram::from_profiles(*g.spec(), *g.angles(), &profiles)
}
