//! Forward transport by scattering order: the ballistic field `u0`, the
//! focused transform `M`, the first-scatter field and the two albedo traces.
//!
//! Every solve runs row by row in the ray frame of its direction, so the
//! boundary trace of a field is exactly the corresponding attenuated line
//! integral, and the linearized operators can differentiate the same kernels.

use std::f64::consts::PI;

use crate::error::{Result, SpectError};
use crate::grid::{angle_reduce, angle_reduce_with, AngleSet, GridSpec, RayFrame, ScalarField, Sinogram};
use crate::rays;
use crate::transforms::attenuated_radon;

/// Support radius of coefficients and perturbations.
pub const SUPPORT_RADIUS: f64 = 1.0;

/// Default scattering constant.
pub const DEFAULT_SCATTER: f64 = 1.0 / (4.0 * PI);

/// Attenuation `a` and source `f`, both supported in the unit disc.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffPair {
    a: ScalarField,
    f: ScalarField,
}

impl CoeffPair {
    /// Zeroes both fields outside the unit disc.
    pub fn new(a: ScalarField, f: ScalarField) -> Result<Self> {
        a.spec().check_same(f.spec())?;
        Ok(Self {
            a: a.restrict_to_disc(SUPPORT_RADIUS),
            f: f.restrict_to_disc(SUPPORT_RADIUS),
        })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            a: ScalarField::zeros(spec),
            f: ScalarField::zeros(spec),
        }
    }

    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn spec(&self) -> &GridSpec {
        self.a.spec()
    }

    pub fn into_parts(self) -> (ScalarField, ScalarField) {
        (self.a, self.f)
    }
}

/// Ballistic trace `A0 = R_a f` and single-scatter trace `A1 = C R_a(a M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPair {
    a0: Sinogram,
    a1: Sinogram,
    c_scatter: f64,
}

impl MeasurementPair {
    pub fn new(a0: Sinogram, a1: Sinogram, c_scatter: f64) -> Result<Self> {
        a0.check_same(&a1)?;
        if !(c_scatter.is_finite() && c_scatter > 0.0) {
            return Err(SpectError::InvalidParameter(format!(
                "scattering constant must be positive, got {c_scatter}"
            )));
        }
        Ok(Self { a0, a1, c_scatter })
    }

    pub fn a0(&self) -> &Sinogram {
        &self.a0
    }

    pub fn a1(&self) -> &Sinogram {
        &self.a1
    }

    pub fn c_scatter(&self) -> f64 {
        self.c_scatter
    }

    pub fn spec(&self) -> &GridSpec {
        self.a0.spec()
    }

    pub fn angles(&self) -> &AngleSet {
        self.a0.angles()
    }

    pub fn into_parts(self) -> (Sinogram, Sinogram, f64) {
        (self.a0, self.a1, self.c_scatter)
    }
}

/// Ballistic solve of one direction in ray-frame layout.
fn ballistic_frame(frame: &RayFrame, a: &ScalarField, src: &ScalarField) -> Vec<f64> {
    let n = a.spec().n();
    let h = a.spec().spacing();
    let alpha = frame.gather(a.values());
    let s = frame.gather(src.values());
    let mut out = vec![0.0; alpha.len()];
    for ((o, ar), sr) in out.chunks_mut(n).zip(alpha.chunks(n)).zip(s.chunks(n)) {
        rays::ballistic_row(ar, sr, h, o);
    }
    out
}

/// `u0(x, theta) = int_{-inf}^0 f(x + t theta) exp(-int_t^0 a(x + s theta) ds) dt`.
pub fn solve_ballistic(pair: &CoeffPair, theta: f64) -> ScalarField {
    let frame = RayFrame::new(pair.spec(), theta);
    ScalarField::from_raw(*pair.spec(), frame.scatter(&ballistic_frame(&frame, &pair.a, &pair.f)))
}

/// `M[a, src] = dtheta sum_k u0(., theta_k)` for fields on a shared grid.
pub(crate) fn focused(a: &ScalarField, src: &ScalarField, angles: &AngleSet) -> ScalarField {
    let spec = *a.spec();
    let dtheta = angles.step();
    let m = angle_reduce(angles.len(), spec.len(), |k, acc| {
        let frame = RayFrame::new(&spec, angles.angle(k));
        let u = frame.scatter(&ballistic_frame(&frame, a, src));
        for (m, v) in acc.iter_mut().zip(u) {
            *m += dtheta * v;
        }
    });
    ScalarField::from_raw(spec, m)
}

/// Focused transform `M[a, f](x) = int_{S^1} u0(x, theta) dtheta`.
pub fn focused_transform(pair: &CoeffPair, angles: &AngleSet) -> ScalarField {
    focused(&pair.a, &pair.f, angles)
}

/// Order-`i` field for direction `theta` from the angular sum of order
/// `i - 1`: a ballistic solve with effective source `C a source_field`.
pub fn solve_scatter_order(
    pair: &CoeffPair,
    source_field: &ScalarField,
    theta: f64,
    c_scatter: f64,
) -> Result<ScalarField> {
    pair.spec().check_same(source_field.spec())?;
    let src = pair.a.mul(source_field)?.scale(c_scatter);
    Ok(solve_ballistic(
        &CoeffPair {
            a: pair.a.clone(),
            f: src,
        },
        theta,
    ))
}

/// Albedo measurements `(R_a f, C R_a(a M[a, f]))`.
pub fn albedo(pair: &CoeffPair, angles: &AngleSet, c_scatter: f64) -> Result<MeasurementPair> {
    let spec = *pair.spec();
    let n = spec.n();
    let h = spec.spacing();
    let dtheta = angles.step();
    // One sweep yields both R_a f (boundary traces) and M (angular sum).
    let (m, profiles) = angle_reduce_with(angles.len(), spec.len(), |k, acc| {
        let frame = RayFrame::new(&spec, angles.angle(k));
        let alpha = frame.gather(pair.a.values());
        let src = frame.gather(pair.f.values());
        let mut u = vec![0.0; alpha.len()];
        let mut trace = Vec::with_capacity(n);
        for ((o, ar), sr) in u.chunks_mut(n).zip(alpha.chunks(n)).zip(src.chunks(n)) {
            rays::ballistic_row(ar, sr, h, o);
            trace.push(rays::attenuated_line(ar, sr, h));
        }
        for (m, v) in acc.iter_mut().zip(frame.scatter(&u)) {
            *m += dtheta * v;
        }
        trace
    });
    let a0 = Sinogram::from_profiles(spec, *angles, &profiles);
    let am = pair.a.mul(&ScalarField::from_raw(spec, m))?;
    let a1 = attenuated_radon(&pair.a, &am, *angles)?.scale(c_scatter);
    MeasurementPair::new(a0, a1, c_scatter)
}
