//! Parameterization bookkeeping for lines and sinograms.
//!
//! | symbol            | meaning                                              |
//! |-------------------|------------------------------------------------------|
//! | `theta`           | `(cos phi, sin phi)`, direction of propagation       |
//! | `theta_perp`      | `(-sin phi, cos phi)`, i.e. angle `phi + pi/2`       |
//! | line `(s, theta)` | `{ s theta_perp + t theta : t real }`                |
//! | `R g(s, theta)`   | integral of `g` over line `(s, theta)`              |
//! | `R_perp g(s, theta)` | `R g(-s, theta_perp)` = integral over `{x . theta = s}` |
//! | `J_perp(s, theta)`   | `J(-s, theta_perp)`, the same reparameterization applied to data |
//!
//! Offsets `s` live on the cell-centred grid axis, which is symmetric about
//! zero, so `s -> -s` is an index reversal.

use std::f64::consts::FRAC_PI_2;

use crate::grid::Sinogram;

/// Angle of `theta_perp` for a direction of angle `phi`.
pub fn perp_angle(phi: f64) -> f64 {
    phi + FRAC_PI_2
}

/// `theta_perp = (-theta_2, theta_1)`.
pub fn perp(theta: (f64, f64)) -> (f64, f64) {
    (-theta.1, theta.0)
}

/// `g(-s)` for a profile sampled on the symmetric offset grid.
pub fn reflect_s(profile: &[f64]) -> Vec<f64> {
    profile.iter().rev().copied().collect()
}

/// Profile `s -> J(s, phi)` at an arbitrary angle, linearly interpolated
/// between neighbouring sampled angles (exact on the angle set).
fn profile_at_angle(j: &Sinogram, phi: f64) -> Vec<f64> {
    let nt = j.n_theta();
    let pos = (phi / j.angles().step()).rem_euclid(nt as f64);
    let k0 = pos.floor() as usize % nt;
    let frac = pos - pos.floor();
    if frac < 1e-12 {
        return j.profile(k0);
    }
    if 1.0 - frac < 1e-12 {
        return j.profile((k0 + 1) % nt);
    }
    let p0 = j.profile(k0);
    let p1 = j.profile((k0 + 1) % nt);
    p0.iter().zip(&p1).map(|(a, b)| (1.0 - frac) * a + frac * b).collect()
}

/// `J_perp(., theta_k) = J(-., theta_k + pi/2)`. Exact when the number of
/// angles is a multiple of four, interpolated in angle otherwise.
pub fn perp_profile(j: &Sinogram, k: usize) -> Vec<f64> {
    let nt = j.n_theta();
    let shifted = if nt.is_multiple_of(4) {
        j.profile((k + nt / 4) % nt)
    } else {
        profile_at_angle(j, perp_angle(j.angles().angle(k)))
    };
    reflect_s(&shifted)
}

/// The whole sinogram in the perpendicular parameterization.
pub fn perp_sinogram(j: &Sinogram) -> Sinogram {
    let profiles: Vec<Vec<f64>> = (0..j.n_theta()).map(|k| perp_profile(j, k)).collect();
    Sinogram::from_profiles(*j.spec(), *j.angles(), &profiles)
}
