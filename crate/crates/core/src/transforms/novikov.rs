//! Novikov's inversion of the attenuated Radon transform:
//!
//! ```text
//! R_a^{-1} J(x) = 1/(4 pi) Re div  int_{S^1} theta e^{Ba(x, theta_perp)}
//!                  (e^{-h} H e^{h} J_perp)(x . theta, theta) dtheta,
//! h = (I + iH) R_perp a / 2.
//! ```
//!
//! Per angle the complex profile `q = e^{-h} H e^{h} J_perp` and its offset
//! derivative are built spectrally on an extended, refined offset window.
//! The divergence is expanded by the product rule,
//! `div(theta E q(x . theta)) = E q'(x . theta) + q(x . theta) theta . grad E`,
//! so the only grid differentiation acts on the smooth factor
//! `E = e^{Ba(x, theta_perp)}`. The Hilbert and ramp filters applied to the
//! data are apodized by `cos(omega / 2)`; the unwindowed ramp amplifies
//! Nyquist-frequency modes of the discrete forward operator by more than 2.

use num_complex::Complex64;
use rayon::prelude::*;

use super::conventions::{perp_angle, perp_profile, reflect_s};
use super::hilbert::{HilbertTransform, Multiplier, DEFAULT_PADDING};
use crate::error::Result;
use crate::grid::{angle_reduce, direction, AngleSet, GridSpec, RayFrame, ScalarField, Sinogram};

/// Offset samples per grid cell in the backprojected profiles.
const REFINE: usize = 4;

/// Attenuation-dependent parts of the inversion formula, valid for the
/// `(a, grid, angles)` triple it was built from.
#[derive(Debug, Clone)]
pub struct NovikovCache {
    attenuation: ScalarField,
    angles: AngleSet,
    hilbert: HilbertTransform,
    /// Offset samples added on each side of `[-L, L]`.
    margin: usize,
    /// `e^{Ba(x, theta_k^perp)}` on the Cartesian grid.
    exp_beam: Vec<Vec<f64>>,
    /// `e^{h}`, `e^{-h}` and `dh/ds` on the refined extended window.
    exp_h: Vec<Vec<Complex64>>,
    exp_neg_h: Vec<Vec<Complex64>>,
    dh: Vec<Vec<Complex64>>,
}

fn real(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

impl NovikovCache {
    pub fn new(a: &ScalarField, angles: AngleSet) -> Self {
        Self::with_padding(a, angles, DEFAULT_PADDING)
    }

    pub fn with_padding(a: &ScalarField, angles: AngleSet, padding: usize) -> Self {
        let spec = *a.spec();
        let n = spec.n();
        let h = spec.spacing();
        let hilbert = HilbertTransform::with_refinement(n, padding.max(DEFAULT_PADDING), REFINE);
        // |x . theta| <= sqrt(2) L on the grid: a margin of n/2 covers [-2L, 2L].
        let margin = n / 2 + 1;

        type PerAngle = (Vec<f64>, Vec<Complex64>, Vec<Complex64>, Vec<Complex64>);
        let per_angle: Vec<PerAngle> = (0..angles.len())
            .into_par_iter()
            .map(|k| {
                let phi_perp = perp_angle(angles.angle(k));
                let frame = RayFrame::new(&spec, phi_perp);
                let alpha = frame.gather(a.values());
                // Rows of this frame are lines parallel to theta_perp, at offset s' = -x.theta.
                let mut beam = vec![0.0; alpha.len()];
                let mut ra_perp_dir = Vec::with_capacity(n);
                for (row, out) in alpha.chunks(n).zip(beam.chunks_mut(n)) {
                    crate::grid::cumsum_from_right(row, h, out);
                    ra_perp_dir.push(row.iter().sum::<f64>() * h);
                }
                let exp_beam: Vec<f64> = frame.scatter(&beam).into_iter().map(f64::exp).collect();
                // R_perp a(s, theta) = Ra(-s, theta_perp)
                let r = real(&reflect_s(&ra_perp_dir));
                let r_f = hilbert.spectral(&r, margin, margin, Multiplier::Identity, false);
                let hr_f = hilbert.spectral(&r, margin, margin, Multiplier::Hilbert, false);
                let dr_f = hilbert.spectral(&r, margin, margin, Multiplier::Derivative(h), false);
                let dhr_f = hilbert.spectral(&r, margin, margin, Multiplier::Ramp(h), false);
                let mut exp_h = Vec::with_capacity(r_f.len());
                let mut exp_neg_h = Vec::with_capacity(r_f.len());
                let mut dh = Vec::with_capacity(r_f.len());
                for i in 0..r_f.len() {
                    let hv = Complex64::new(0.5 * r_f[i].re, 0.5 * hr_f[i].re);
                    exp_h.push(hv.exp());
                    exp_neg_h.push((-hv).exp());
                    dh.push(Complex64::new(0.5 * dr_f[i].re, 0.5 * dhr_f[i].re));
                }
                (exp_beam, exp_h, exp_neg_h, dh)
            })
            .collect();

        let mut exp_beam = Vec::with_capacity(angles.len());
        let mut exp_h = Vec::with_capacity(angles.len());
        let mut exp_neg_h = Vec::with_capacity(angles.len());
        let mut dh = Vec::with_capacity(angles.len());
        for (b, p, m, d) in per_angle {
            exp_beam.push(b);
            exp_h.push(p);
            exp_neg_h.push(m);
            dh.push(d);
        }
        Self {
            attenuation: a.clone(),
            angles,
            hilbert,
            margin,
            exp_beam,
            exp_h,
            exp_neg_h,
            dh,
        }
    }

    pub fn attenuation(&self) -> &ScalarField {
        &self.attenuation
    }

    pub fn spec(&self) -> &GridSpec {
        self.attenuation.spec()
    }

    pub fn angles(&self) -> &AngleSet {
        &self.angles
    }

    /// True when the cache was built for exactly this attenuation and angle set.
    pub fn is_valid_for(&self, a: &ScalarField, angles: &AngleSet) -> bool {
        &self.attenuation == a && &self.angles == angles
    }

    /// `q = Re(e^{-h} H e^{h} J_perp)` and `dq/ds` for angle `k` on the
    /// refined extended window.
    fn filtered_profile(&self, j: &Sinogram, k: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.spec().spacing();
        let m = self.margin;
        let up = self.hilbert.refinement();
        let jp = perp_profile(j, k);
        let weighted: Vec<Complex64> = jp
            .iter()
            .enumerate()
            .map(|(i, &v)| self.exp_h[k][(i + m) * up] * v)
            .collect();
        let z = self.hilbert.spectral(&weighted, m, m, Multiplier::Hilbert, true);
        let dz = self.hilbert.spectral(&weighted, m, m, Multiplier::Ramp(h), true);
        let e = &self.exp_neg_h[k];
        let dh = &self.dh[k];
        let q = z.iter().zip(e).map(|(z, e)| (z * e).re).collect();
        let dq = (0..z.len()).map(|i| (e[i] * (dz[i] - dh[i] * z[i])).re).collect();
        (q, dq)
    }

    /// Applies the inversion formula to `j`.
    pub fn invert(&self, j: &Sinogram) -> Result<ScalarField> {
        let spec = *self.spec();
        spec.check_same(j.spec())?;
        self.angles.check_same(j.angles())?;
        let n = spec.n();
        let h = spec.spacing();
        let len = spec.len();
        let coords = spec.coords();
        let up = self.hilbert.refinement() as f64;
        let center = (spec.center_index() + self.margin as f64) * up;
        let ext = (n + 2 * self.margin) * self.hilbert.refinement();
        let dtheta = self.angles.step();
        let scale = dtheta / (4.0 * std::f64::consts::PI);

        let out = angle_reduce(self.angles.len(), len, |k, acc| {
            let (q, dq) = self.filtered_profile(j, k);
            let (c, s) = direction(self.angles.angle(k));
            let e = &self.exp_beam[k];
            for (i, &y) in coords.iter().enumerate() {
                for (jj, &x) in coords.iter().enumerate() {
                    let u = (x * c + y * s) / h * up + center;
                    let fu = u.floor();
                    let i0 = fu as isize;
                    if i0 < 0 || i0 as usize + 1 >= ext {
                        continue;
                    }
                    let i0 = i0 as usize;
                    let t = u - fu;
                    let qv = q[i0] * (1.0 - t) + q[i0 + 1] * t;
                    let dqv = dq[i0] * (1.0 - t) + dq[i0 + 1] * t;
                    let p = i * n + jj;
                    let (ex, ey) = grad(e, n, h, i, jj);
                    acc[p] += scale * (e[p] * dqv + qv * (c * ex + s * ey));
                }
            }
        });
        ScalarField::from_values(spec, out)
    }
}

/// Centred-difference gradient `(d/dx, d/dy)` of a row-major field,
/// one-sided at the edges.
#[inline]
fn grad(e: &[f64], n: usize, h: f64, i: usize, j: usize) -> (f64, f64) {
    let d = |lo: usize, hi: usize, span: usize| (e[hi] - e[lo]) / (span as f64 * h);
    let gx = match j {
        0 => d(i * n, i * n + 1, 1),
        _ if j == n - 1 => d(i * n + j - 1, i * n + j, 1),
        _ => d(i * n + j - 1, i * n + j + 1, 2),
    };
    let gy = match i {
        0 => d(j, n + j, 1),
        _ if i == n - 1 => d((i - 1) * n + j, i * n + j, 1),
        _ => d((i - 1) * n + j, (i + 1) * n + j, 2),
    };
    (gx, gy)
}

/// One-shot inversion; build a [`NovikovCache`] to invert repeatedly.
pub fn novikov_inverse(a: &ScalarField, j: &Sinogram) -> Result<ScalarField> {
    NovikovCache::new(a, *j.angles()).invert(j)
}
