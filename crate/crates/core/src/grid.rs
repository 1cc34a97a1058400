//! Cartesian field containers and the two kernels every transform is built
//! from: bilinear rotation about the grid centre and trapezoid cumulative
//! sums along rows.
//!
//! Samples are cell-centred: on `[-L, L]` with `n` cells the coordinates are
//! `x_i = -L + (i + 1/2) h`, `h = 2L / n`. Fields are stored row-major with the
//! row index running over `y` and the column index over `x`.
//!
//! Rotation convention: `rotate_field(g, phi)(x) = g(R_{-phi} x)`, i.e. the
//! image content turns counter-clockwise by `phi`. Reads outside the sampled
//! square are zero.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Result, SpectError};

/// Uniform cell-centred grid on `[-L, L]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_width: f64,
}

impl GridSpec {
    pub const MIN_SAMPLES: usize = 8;

    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < Self::MIN_SAMPLES {
            return Err(SpectError::InvalidParameter(format!(
                "grid needs at least {} samples per axis, got {n}",
                Self::MIN_SAMPLES
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(SpectError::InvalidParameter(format!(
                "half width must be positive and finite, got {half_width}"
            )));
        }
        Ok(Self { n, half_width })
    }

    /// Grid on the unit square `[-1, 1]^2`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Coordinate of sample `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.center_index()) * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Fractional index of the origin, `(n - 1) / 2`.
    pub(crate) fn center_index(&self) -> f64 {
        (self.n as f64 - 1.0) * 0.5
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(SpectError::GridMismatch(format!(
                "{}x{} on [-{}, {}] vs {}x{} on [-{}, {}]",
                self.n, self.n, self.half_width, self.half_width, other.n, other.n, other.half_width, other.half_width
            )))
        }
    }
}

/// Uniform discretization of the unit circle, `theta_k = 2 pi k / n_theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AngleSet {
    n_theta: usize,
}

impl AngleSet {
    pub fn new(n_theta: usize) -> Result<Self> {
        if n_theta == 0 {
            return Err(SpectError::InvalidParameter("angle set must not be empty".into()));
        }
        Ok(Self { n_theta })
    }

    pub fn len(&self) -> usize {
        self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.n_theta == 0
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn angle(&self, k: usize) -> f64 {
        self.step() * k as f64
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_theta).map(|k| self.angle(k))
    }

    pub(crate) fn check_same(&self, other: &AngleSet) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(SpectError::GridMismatch(format!(
                "{} angles vs {} angles",
                self.n_theta, other.n_theta
            )))
        }
    }
}

/// Unit vector `(cos angle, sin angle)` with round-off snapped to zero, so
/// that quarter turns land exactly on lattice points.
pub fn direction(angle: f64) -> (f64, f64) {
    let snap = |v: f64| if v.abs() < 1e-14 { 0.0 } else { v };
    (snap(angle.cos()), snap(angle.sin()))
}

/// `n x n` samples of a real function on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self {
            spec,
            values: vec![value; spec.len()],
        }
    }

    /// Average of `f` over each cell from a `sub x sub` midpoint rule.
    pub fn cell_average(spec: GridSpec, sub: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let sub = sub.max(1);
        let h = spec.spacing();
        let offsets: Vec<f64> = (0..sub).map(|k| ((k as f64 + 0.5) / sub as f64 - 0.5) * h).collect();
        Self::from_fn(spec, |x, y| {
            let mut acc = 0.0;
            for &dy in &offsets {
                for &dx in &offsets {
                    acc += f(x + dx, y + dy);
                }
            }
            acc / (sub * sub) as f64
        })
    }

    /// Samples `f(x, y)` at every cell centre.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let coords = spec.coords();
        let n = spec.n();
        let mut values = vec![0.0; spec.len()];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let y = coords[i];
            for (v, &x) in row.iter_mut().zip(&coords) {
                *v = f(x, y);
            }
        });
        Self { spec, values }
    }

    /// Evaluates `f(row, col)` at every index.
    pub(crate) fn from_fn_indexed(spec: GridSpec, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let n = spec.n();
        let mut values = vec![0.0; spec.len()];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        });
        Self { spec, values }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(SpectError::GridMismatch(format!(
                "expected {} samples, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpectError::InvalidParameter(format!(
                "non-finite sample at index {bad}"
            )));
        }
        Ok(Self { spec, values })
    }

    /// Internal constructor for buffers known to have the right length.
    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.spec.n() + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.spec.check_same(&other.spec)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            spec: self.spec,
            values,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn exp(&self) -> Self {
        self.map(f64::exp)
    }

    /// Pointwise `max(v, 0)`.
    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    /// Riemann approximation of the integral over the square.
    pub fn integral(&self) -> f64 {
        let h = self.spec.spacing();
        self.values.iter().sum::<f64>() * h * h
    }

    pub fn l1_norm(&self) -> f64 {
        let h = self.spec.spacing();
        self.values.iter().map(|v| v.abs()).sum::<f64>() * h * h
    }

    pub fn l2_norm(&self) -> f64 {
        let h = self.spec.spacing();
        (self.values.iter().map(|v| v * v).sum::<f64>()).sqrt() * h
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Zeroes every sample whose cell centre lies outside the closed disc of
    /// the given radius.
    pub fn restrict_to_disc(&self, radius: f64) -> Self {
        let mask = disc_mask(self.spec, radius);
        let values = self
            .values
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Self {
            spec: self.spec,
            values,
        }
    }

    /// Bilinear interpolation at `(x, y)`, zero outside the sampled square.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let h = self.spec.spacing();
        let c = self.spec.center_index();
        bilinear(&self.values, self.spec.n(), x / h + c, y / h + c)
    }
}

/// Membership of each cell centre in the closed disc of radius `radius`.
pub fn disc_mask(spec: GridSpec, radius: f64) -> Vec<bool> {
    let coords = spec.coords();
    let r2 = radius * radius;
    let mut mask = Vec::with_capacity(spec.len());
    for &y in &coords {
        for &x in &coords {
            mask.push(x * x + y * y <= r2);
        }
    }
    mask
}

/// Samples over `(s, theta)`: `n_s` cell-centred offsets on `[-L, L]` (the
/// grid's axis) times the angles of an [`AngleSet`]. Stored s-major, so the
/// angle index is the fast axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    spec: GridSpec,
    angles: AngleSet,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(spec: GridSpec, angles: AngleSet) -> Self {
        Self {
            spec,
            angles,
            values: vec![0.0; spec.n() * angles.len()],
        }
    }

    pub fn from_values(spec: GridSpec, angles: AngleSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n() * angles.len() {
            return Err(SpectError::GridMismatch(format!(
                "expected {} sinogram samples, got {}",
                spec.n() * angles.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpectError::InvalidParameter(format!(
                "non-finite sinogram sample at index {bad}"
            )));
        }
        Ok(Self { spec, angles, values })
    }

    /// Assembles a sinogram from one s-profile per angle.
    pub(crate) fn from_profiles(spec: GridSpec, angles: AngleSet, profiles: &[Vec<f64>]) -> Self {
        let mut sino = Self::zeros(spec, angles);
        for (k, p) in profiles.iter().enumerate() {
            sino.set_profile(k, p);
        }
        sino
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn angles(&self) -> &AngleSet {
        &self.angles
    }

    pub fn n_s(&self) -> usize {
        self.spec.n()
    }

    pub fn n_theta(&self) -> usize {
        self.angles.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i_s: usize, k: usize) -> f64 {
        self.values[i_s * self.angles.len() + k]
    }

    /// The function `s -> g(s, theta_k)`.
    pub fn profile(&self, k: usize) -> Vec<f64> {
        let nt = self.angles.len();
        (0..self.spec.n()).map(|i| self.values[i * nt + k]).collect()
    }

    pub(crate) fn set_profile(&mut self, k: usize, profile: &[f64]) {
        let nt = self.angles.len();
        for (i, &v) in profile.iter().enumerate() {
            self.values[i * nt + k] = v;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            angles: self.angles,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            spec: self.spec,
            angles: self.angles,
            values,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// `L^2` norm over `[-L, L] x [0, 2 pi)`.
    pub fn l2_norm(&self) -> f64 {
        let w = self.spec.spacing() * self.angles.step();
        (self.values.iter().map(|v| v * v).sum::<f64>() * w).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        self.spec.check_same(&other.spec)?;
        self.angles.check_same(&other.angles)
    }
}

/// Bilinear read at fractional index `(u, v)` (column, row); zero outside.
#[inline]
fn bilinear(values: &[f64], n: usize, u: f64, v: f64) -> f64 {
    let fu = u.floor();
    let fv = v.floor();
    let j0 = fu as isize;
    let i0 = fv as isize;
    let n = n as isize;
    if j0 < -1 || i0 < -1 || j0 >= n || i0 >= n {
        return 0.0;
    }
    let du = u - fu;
    let dv = v - fv;
    let at = |i: isize, j: isize| -> f64 {
        if i >= 0 && j >= 0 && i < n && j < n {
            values[(i * n + j) as usize]
        } else {
            0.0
        }
    };
    let top = at(i0, j0) * (1.0 - du) + at(i0, j0 + 1) * du;
    let bottom = at(i0 + 1, j0) * (1.0 - du) + at(i0 + 1, j0 + 1) * du;
    top * (1.0 - dv) + bottom * dv
}

/// `out(p) = src(R p)` with `R = [[cos, -sin], [sin, cos]]` acting on
/// centred index coordinates.
pub(crate) fn rotate_into(src: &[f64], n: usize, cos: f64, sin: f64, out: &mut [f64]) {
    let m = (n as f64 - 1.0) * 0.5;
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let py = i as f64 - m;
        for (j, o) in row.iter_mut().enumerate() {
            let px = j as f64 - m;
            let u = cos * px - sin * py + m;
            let v = sin * px + cos * py + m;
            *o = bilinear(src, n, u, v);
        }
    });
}

/// Resampled copy of `field` whose content is rotated counter-clockwise by
/// `angle` about the origin.
pub fn rotate_field(field: &ScalarField, angle: f64) -> ScalarField {
    let (c, s) = direction(angle);
    let n = field.spec.n();
    let mut out = vec![0.0; field.spec.len()];
    rotate_into(&field.values, n, c, -s, &mut out);
    ScalarField::from_raw(field.spec, out)
}

/// Frame aligned with a propagation direction `theta`: sample `(row i,
/// col j)` holds the value at `t theta + s theta^perp` with `t = x_j` and
/// `s = y_i`. Rows are therefore lines of fixed `s` traversed in the
/// direction of propagation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RayFrame {
    n: usize,
    cos: f64,
    sin: f64,
}

impl RayFrame {
    pub fn new(spec: &GridSpec, angle: f64) -> Self {
        let (cos, sin) = direction(angle);
        Self { n: spec.n(), cos, sin }
    }

    /// Field values resampled into the ray frame.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        rotate_into(values, self.n, self.cos, self.sin, &mut out);
        out
    }

    /// Ray-frame values resampled back onto the Cartesian grid.
    pub fn scatter(&self, frame: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        rotate_into(frame, self.n, self.cos, -self.sin, &mut out);
        out
    }
}

/// Direction of integration for [`directed_cumsum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CumsumMode {
    /// `G(x) = int_0^inf g(x - t theta) dt`, the integral over the incoming ray.
    FromMinusInfinity,
    /// `G(x) = int_0^inf g(x + t theta) dt`, the integral over the outgoing ray.
    ToPlusInfinity,
}

/// Trapezoid running integral from the left: `out_j = h (sum_{i<j} r_i + r_j / 2)`.
pub(crate) fn cumsum_from_left(row: &[f64], h: f64, out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, &r) in out.iter_mut().zip(row) {
        *o = acc + 0.5 * h * r;
        acc += h * r;
    }
}

/// Trapezoid running integral from the right: `out_j = h (sum_{i>j} r_i + r_j / 2)`.
pub(crate) fn cumsum_from_right(row: &[f64], h: f64, out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, &r) in out.iter_mut().zip(row).rev() {
        *o = acc + 0.5 * h * r;
        acc += h * r;
    }
}

/// Half-line integrals of `field` along direction `theta`, computed by rotating
/// `theta` onto the x axis, integrating along rows and rotating back.
pub fn directed_cumsum(field: &ScalarField, theta: f64, mode: CumsumMode) -> ScalarField {
    let spec = *field.spec();
    let n = spec.n();
    let h = spec.spacing();
    let frame = RayFrame::new(&spec, theta);
    let rotated = frame.gather(field.values());
    let mut integrated = vec![0.0; rotated.len()];
    integrated
        .par_chunks_mut(n)
        .zip(rotated.par_chunks(n))
        .for_each(|(out, row)| match mode {
            CumsumMode::FromMinusInfinity => cumsum_from_left(row, h, out),
            CumsumMode::ToPlusInfinity => cumsum_from_right(row, h, out),
        });
    ScalarField::from_raw(spec, frame.scatter(&integrated))
}

/// Sums per-angle contributions into one buffer in a fixed order, whatever
/// the thread count: angles are split into fixed blocks, each block is summed
/// sequentially, and block partials are then added in block order.
pub(crate) fn angle_reduce<F>(n_angles: usize, len: usize, contribute: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    angle_reduce_with(n_angles, len, |k, acc| contribute(k, acc)).0
}

/// [`angle_reduce`] that also collects a per-angle output, in angle order.
pub(crate) fn angle_reduce_with<T, F>(n_angles: usize, len: usize, contribute: F) -> (Vec<f64>, Vec<T>)
where
    T: Send,
    F: Fn(usize, &mut [f64]) -> T + Sync,
{
    const BLOCK: usize = 8;
    let n_blocks = n_angles.div_ceil(BLOCK);
    let partials: Vec<(Vec<f64>, Vec<T>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; len];
            let outs = (b * BLOCK..((b + 1) * BLOCK).min(n_angles))
                .map(|k| contribute(k, &mut acc))
                .collect();
            (acc, outs)
        })
        .collect();
    let mut total = vec![0.0; len];
    let mut outputs = Vec::with_capacity(n_angles);
    for (p, outs) in partials {
        for (t, v) in total.iter_mut().zip(&p) {
            *t += v;
        }
        outputs.extend(outs);
    }
    (total, outputs)
}
