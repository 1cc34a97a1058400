//! Integral geometry on the grid: beam, Radon, weighted and attenuated Radon
//! transforms, the Hilbert transform in `s`, and the Novikov inversion of
//! the attenuated Radon transform.
//!
//! Every transform works angle by angle in the ray frame of the direction
//! (see [`crate::grid::RayFrame`]): rows of the rotated image are the lines
//! `s theta_perp + R theta`, so line integrals are row sums and half-line
//! integrals are running sums along rows.

pub mod conventions;
pub mod hilbert;
mod novikov;

use rayon::prelude::*;

pub use hilbert::{hilbert_rows, hilbert_rows_padded, HilbertTransform};
pub use novikov::{novikov_inverse, NovikovCache};

use crate::error::Result;
use crate::grid::{directed_cumsum, AngleSet, CumsumMode, GridSpec, RayFrame, ScalarField, Sinogram};
use crate::rays;

/// Beam transform `Ba(x, theta) = int_0^inf a(x + t theta) dt`.
pub fn beam_transform(a: &ScalarField, theta: f64) -> ScalarField {
    directed_cumsum(a, theta, CumsumMode::ToPlusInfinity)
}

/// Evaluates `per_angle(k, frame)` for every angle and assembles the profiles.
pub(crate) fn sinogram_from_rays<F>(spec: GridSpec, angles: AngleSet, per_angle: F) -> Sinogram
where
    F: Fn(usize, RayFrame) -> Vec<f64> + Sync,
{
    let profiles: Vec<Vec<f64>> = (0..angles.len())
        .into_par_iter()
        .map(|k| per_angle(k, RayFrame::new(&spec, angles.angle(k))))
        .collect();
    Sinogram::from_profiles(spec, angles, &profiles)
}

/// Radon transform `Rf(s, theta) = int f(s theta_perp + t theta) dt`.
pub fn radon(f: &ScalarField, angles: AngleSet) -> Sinogram {
    let spec = *f.spec();
    let n = spec.n();
    let h = spec.spacing();
    sinogram_from_rays(spec, angles, |_, frame| {
        frame
            .gather(f.values())
            .chunks(n)
            .map(|row| row.iter().sum::<f64>() * h)
            .collect()
    })
}

/// Angle-dependent weight `w(x, theta)`, one slice per angle of an
/// [`AngleSet`]. Slices are held in the ray frame of their angle so that
/// weights built from ray-frame quantities (beam transforms, `w[u, v]`) are
/// applied without a second resampling.
#[derive(Debug, Clone)]
pub struct DirectionalWeight {
    spec: GridSpec,
    angles: AngleSet,
    frames: Vec<Vec<f64>>,
}

impl DirectionalWeight {
    /// Constant weight.
    pub fn constant(spec: GridSpec, angles: AngleSet, value: f64) -> Self {
        Self {
            spec,
            angles,
            frames: vec![vec![value; spec.len()]; angles.len()],
        }
    }

    /// Samples `w(x, y, phi)` exactly at the ray-frame points of every angle.
    pub fn from_fn(spec: GridSpec, angles: AngleSet, w: impl Fn(f64, f64, f64) -> f64 + Sync) -> Self {
        let coords = spec.coords();
        let frames = (0..angles.len())
            .into_par_iter()
            .map(|k| {
                let phi = angles.angle(k);
                let (c, s) = crate::grid::direction(phi);
                let mut out = Vec::with_capacity(spec.len());
                for &off in &coords {
                    for &t in &coords {
                        out.push(w(t * c - off * s, t * s + off * c, phi));
                    }
                }
                out
            })
            .collect();
        Self { spec, angles, frames }
    }

    /// One Cartesian field per angle, resampled into the ray frames.
    pub fn from_fields(fields: &[ScalarField], angles: AngleSet) -> Result<Self> {
        if fields.len() != angles.len() {
            return Err(crate::error::SpectError::GridMismatch(format!(
                "{} weight slices for {} angles",
                fields.len(),
                angles.len()
            )));
        }
        let spec = *fields[0].spec();
        for f in fields {
            spec.check_same(f.spec())?;
        }
        let frames = fields
            .par_iter()
            .enumerate()
            .map(|(k, f)| RayFrame::new(&spec, angles.angle(k)).gather(f.values()))
            .collect();
        Ok(Self { spec, angles, frames })
    }

    /// `exp(-Ba(x, theta))`, the weight of the attenuated Radon transform.
    pub fn attenuation(a: &ScalarField, angles: AngleSet) -> Self {
        let spec = *a.spec();
        let n = spec.n();
        let h = spec.spacing();
        let frames = (0..angles.len())
            .into_par_iter()
            .map(|k| {
                let alpha = RayFrame::new(&spec, angles.angle(k)).gather(a.values());
                alpha.chunks(n).flat_map(|row| rays::exit_attenuation(row, h)).collect()
            })
            .collect();
        Self { spec, angles, frames }
    }

    /// The weight `w[u, v]` of the linearized attenuated transform.
    pub fn linearization(u: &ScalarField, v: &ScalarField, angles: AngleSet) -> Result<Self> {
        u.spec().check_same(v.spec())?;
        let spec = *u.spec();
        let frames = (0..angles.len())
            .into_par_iter()
            .map(|k| weight_frame(RayFrame::new(&spec, angles.angle(k)), u, v))
            .collect();
        Ok(Self { spec, angles, frames })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn angles(&self) -> &AngleSet {
        &self.angles
    }

    /// Slice for angle `k` on the Cartesian grid.
    pub fn slice(&self, k: usize) -> ScalarField {
        let frame = RayFrame::new(&self.spec, self.angles.angle(k));
        ScalarField::from_raw(self.spec, frame.scatter(&self.frames[k]))
    }

    pub(crate) fn frame(&self, k: usize) -> &[f64] {
        &self.frames[k]
    }
}

/// Ray-frame samples of `w[u, v](., theta)`.
pub(crate) fn weight_frame(frame: RayFrame, u: &ScalarField, v: &ScalarField) -> Vec<f64> {
    let n = u.spec().n();
    let h = u.spec().spacing();
    let uf = frame.gather(u.values());
    let vf = frame.gather(v.values());
    let mut out = vec![0.0; uf.len()];
    for ((o, ur), vr) in out.chunks_mut(n).zip(uf.chunks(n)).zip(vf.chunks(n)) {
        rays::weight_row(ur, vr, h, o);
    }
    out
}

/// Weighted Radon transform `I_w f(s, theta) = int w f` over line `(s, theta)`.
pub fn weighted_radon(w: &DirectionalWeight, f: &ScalarField) -> Result<Sinogram> {
    w.spec.check_same(f.spec())?;
    let n = w.spec.n();
    let h = w.spec.spacing();
    Ok(sinogram_from_rays(w.spec, w.angles, |k, frame| {
        let ff = frame.gather(f.values());
        ff.chunks(n)
            .zip(w.frame(k).chunks(n))
            .map(|(fr, wr)| rays::line_dot(fr, wr, h))
            .collect()
    }))
}

/// Attenuated Radon transform
/// `R_a f(s, theta) = int f(x) exp(-Ba(x, theta)) dt` over line `(s, theta)`.
pub fn attenuated_radon(a: &ScalarField, f: &ScalarField, angles: AngleSet) -> Result<Sinogram> {
    a.spec().check_same(f.spec())?;
    let spec = *a.spec();
    let n = spec.n();
    let h = spec.spacing();
    Ok(sinogram_from_rays(spec, angles, |_, frame| {
        let af = frame.gather(a.values());
        let ff = frame.gather(f.values());
        af.chunks(n)
            .zip(ff.chunks(n))
            .map(|(ar, fr)| rays::attenuated_line(ar, fr, h))
            .collect()
    }))
}
