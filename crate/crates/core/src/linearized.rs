//! Differential of the albedo operator at a linearization point `(a, f)`,
//! the preconditioned operators `L` and `Q`, the explicit left inverse of
//! `L` and the truncated Neumann series for `(L + Q)^{-1}`.
//!
//! All kernels differentiate the discrete forward model of
//! [`crate::transport`] exactly: the same ray frames, the same trapezoid
//! weights and the same recurrences.

use std::f64::consts::PI;

use crate::error::{Result, SpectError};
use crate::grid::{angle_reduce, AngleSet, GridSpec, RayFrame, ScalarField, Sinogram};
use crate::rays;
use crate::transforms::{sinogram_from_rays, weight_frame, NovikovCache};
use crate::transport::{focused, CoeffPair, SUPPORT_RADIUS};

/// Cutoff in the offset variable: 1 on `|s| <= 1`, a cosine-squared ramp on
/// `1 < |s| < 2`, 0 beyond.
pub fn cutoff(s: f64) -> f64 {
    let r = s.abs();
    if r <= 1.0 {
        1.0
    } else if r < 2.0 {
        (0.5 * PI * (r - 1.0)).cos().powi(2)
    } else {
        0.0
    }
}

/// `w[u, v](., theta)` on the Cartesian grid.
pub fn weight_w(u: &ScalarField, v: &ScalarField, theta: f64) -> Result<ScalarField> {
    u.spec().check_same(v.spec())?;
    let frame = RayFrame::new(u.spec(), theta);
    Ok(ScalarField::from_raw(
        *u.spec(),
        frame.scatter(&weight_frame(frame, u, v)),
    ))
}

/// Perturbation `(da, df)` of a coefficient pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPair {
    pub da: ScalarField,
    pub df: ScalarField,
}

impl PerturbationPair {
    pub fn new(da: ScalarField, df: ScalarField) -> Result<Self> {
        da.spec().check_same(df.spec())?;
        Ok(Self { da, df })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            da: ScalarField::zeros(spec),
            df: ScalarField::zeros(spec),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        self.da.spec()
    }

    /// `sqrt(|da|^2 + |df|^2)`.
    pub fn norm(&self) -> f64 {
        self.da.l2_norm().hypot(self.df.l2_norm())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            da: self.da.add(&other.da)?,
            df: self.df.add(&other.df)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            da: self.da.sub(&other.da)?,
            df: self.df.sub(&other.df)?,
        })
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            da: self.da.scale(k),
            df: self.df.scale(k),
        }
    }
}

/// Ray-frame samples of the linearization point for one angle.
#[derive(Debug, Clone)]
struct AngleCache {
    alpha: Vec<f64>,
    src: Vec<f64>,
    /// `w[a, f]`
    w_f: Vec<f64>,
    /// `w[a, a M]`
    w_am: Vec<f64>,
}

/// Everything the linearized operators need at a fixed point `(a, f)`.
/// Immutable once built; `m_field` is always `M[a, f]` for `angles`.
#[derive(Debug, Clone)]
pub struct LinearizationPoint {
    base: CoeffPair,
    angles: AngleSet,
    c_scatter: f64,
    m_field: ScalarField,
    m_floor: f64,
    novikov: NovikovCache,
    chi: ScalarField,
    phi_row: Vec<f64>,
    rays: Vec<AngleCache>,
}

/// Result of the truncated Neumann series.
#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub pert: PerturbationPair,
    /// Norm of every computed term, starting with `L^{-1}(g, h)`.
    pub term_norms: Vec<f64>,
    /// `|term_{k+1}| / |term_k|`.
    pub ratios: Vec<f64>,
    /// Some ratio reached 1: the series is not contracting.
    pub divergent: bool,
}

impl LinearizationPoint {
    /// `m_floor_rel` scales the admissible minimum of `M` on the unit disc by
    /// its maximum.
    pub fn new(base: CoeffPair, angles: AngleSet, c_scatter: f64, m_floor_rel: f64) -> Result<Self> {
        if !(c_scatter.is_finite() && c_scatter > 0.0) {
            return Err(SpectError::InvalidParameter(format!(
                "scattering constant must be positive, got {c_scatter}"
            )));
        }
        if !(m_floor_rel.is_finite() && m_floor_rel >= 0.0) {
            return Err(SpectError::InvalidParameter(format!(
                "m_floor_rel must be nonnegative, got {m_floor_rel}"
            )));
        }
        let spec = *base.spec();
        let m_field = focused(base.a(), base.f(), &angles);
        let m_floor = m_floor_rel * m_field.max().max(0.0);
        let am = base.a().mul(&m_field)?;
        let rays = (0..angles.len())
            .map(|k| {
                let frame = RayFrame::new(&spec, angles.angle(k));
                AngleCache {
                    alpha: frame.gather(base.a().values()),
                    src: frame.gather(base.f().values()),
                    w_f: weight_frame(frame, base.a(), base.f()),
                    w_am: weight_frame(frame, base.a(), &am),
                }
            })
            .collect();
        let novikov = NovikovCache::new(base.a(), angles);
        let chi = ScalarField::from_fn(spec, |x, y| cutoff(x.hypot(y)));
        let phi_row = spec.coords().into_iter().map(cutoff).collect();
        Ok(Self {
            base,
            angles,
            c_scatter,
            m_field,
            m_floor,
            novikov,
            chi,
            phi_row,
            rays,
        })
    }

    pub fn base(&self) -> &CoeffPair {
        &self.base
    }

    pub fn angles(&self) -> &AngleSet {
        &self.angles
    }

    pub fn spec(&self) -> &GridSpec {
        self.base.spec()
    }

    pub fn c_scatter(&self) -> f64 {
        self.c_scatter
    }

    /// `M[a, f]` at the point.
    pub fn m_field(&self) -> &ScalarField {
        &self.m_field
    }

    pub fn m_floor(&self) -> f64 {
        self.m_floor
    }

    /// Minimum of `M` over the unit disc.
    pub fn m_min_on_disc(&self) -> f64 {
        let spec = self.spec();
        let coords = spec.coords();
        let mut min = f64::INFINITY;
        for (i, &y) in coords.iter().enumerate() {
            for (j, &x) in coords.iter().enumerate() {
                if x * x + y * y <= SUPPORT_RADIUS * SUPPORT_RADIUS {
                    min = min.min(self.m_field.get(i, j));
                }
            }
        }
        min
    }

    fn check(&self, f: &ScalarField) -> Result<()> {
        self.spec().check_same(f.spec())
    }

    fn check_pert(&self, p: &PerturbationPair) -> Result<()> {
        self.check(&p.da)?;
        self.check(&p.df)
    }

    /// `(d_a M[a, f] da, M[a, df])` in one sweep over the angles.
    fn focused_derivatives(&self, da: &ScalarField, df: &ScalarField) -> (ScalarField, ScalarField) {
        let spec = *self.spec();
        let n = spec.n();
        let h = spec.spacing();
        let len = spec.len();
        let dtheta = self.angles.step();
        let acc = angle_reduce(self.angles.len(), 2 * len, |k, acc| {
            let frame = RayFrame::new(&spec, self.angles.angle(k));
            let cache = &self.rays[k];
            let dalpha = frame.gather(da.values());
            let dsrc = frame.gather(df.values());
            let mut d_m = vec![0.0; len];
            let mut m_df = vec![0.0; len];
            for r in 0..n {
                let row = r * n..(r + 1) * n;
                rays::ballistic_row_derivative(
                    &cache.alpha[row.clone()],
                    &cache.src[row.clone()],
                    &dalpha[row.clone()],
                    h,
                    &mut d_m[row.clone()],
                );
                rays::ballistic_row(&cache.alpha[row.clone()], &dsrc[row.clone()], h, &mut m_df[row]);
            }
            let (acc_d, acc_m) = acc.split_at_mut(len);
            for (a, v) in acc_d.iter_mut().zip(frame.scatter(&d_m)) {
                *a += dtheta * v;
            }
            for (a, v) in acc_m.iter_mut().zip(frame.scatter(&m_df)) {
                *a += dtheta * v;
            }
        });
        let (d, m) = acc.split_at(len);
        (
            ScalarField::from_raw(spec, d.to_vec()),
            ScalarField::from_raw(spec, m.to_vec()),
        )
    }

    /// Directional derivative `d_a M[a, f] da`.
    pub fn d_focused(&self, da: &ScalarField) -> Result<ScalarField> {
        self.check(da)?;
        Ok(self.focused_derivatives(da, &ScalarField::zeros(*self.spec())).0)
    }

    /// `I_w[da]` for the cached weight `w[a, f]` (`second == false`) or
    /// `w[a, a M]` (`second == true`).
    fn weighted(&self, da: &ScalarField, second: bool) -> Sinogram {
        let n = self.spec().n();
        let h = self.spec().spacing();
        sinogram_from_rays(*self.spec(), self.angles, |k, frame| {
            let d = frame.gather(da.values());
            let w = if second { &self.rays[k].w_am } else { &self.rays[k].w_f };
            d.chunks(n)
                .zip(w.chunks(n))
                .map(|(dr, wr)| rays::line_dot(dr, wr, h))
                .collect()
        })
    }

    /// Differential of the albedo operator applied to `pert`; the second
    /// component carries the scattering constant.
    pub fn apply_da(&self, pert: &PerturbationPair) -> Result<(Sinogram, Sinogram)> {
        self.check_pert(pert)?;
        let spec = *self.spec();
        let n = spec.n();
        let h = spec.spacing();
        let (d_m, m_df) = self.focused_derivatives(&pert.da, &pert.df);
        // second-row source: da M + a (d_a M da + M[a, df])
        let g2 = pert.da.mul(&self.m_field)?.add(&self.base.a().mul(&d_m.add(&m_df)?)?)?;
        let c = self.c_scatter;
        let rows: Vec<(Vec<f64>, Vec<f64>)> = {
            use rayon::prelude::*;
            (0..self.angles.len())
                .into_par_iter()
                .map(|k| {
                    let frame = RayFrame::new(&spec, self.angles.angle(k));
                    let cache = &self.rays[k];
                    let da = frame.gather(pert.da.values());
                    let df = frame.gather(pert.df.values());
                    let g = frame.gather(g2.values());
                    let mut p0 = Vec::with_capacity(n);
                    let mut p1 = Vec::with_capacity(n);
                    for r in 0..n {
                        let row = r * n..(r + 1) * n;
                        let att = rays::exit_attenuation(&cache.alpha[row.clone()], h);
                        let dar = &da[row.clone()];
                        p0.push(
                            rays::line_dot(&cache.w_f[row.clone()], dar, h) + rays::line_dot(&att, &df[row.clone()], h),
                        );
                        p1.push(
                            c * (rays::line_dot(&cache.w_am[row.clone()], dar, h) + rays::line_dot(&att, &g[row], h)),
                        );
                    }
                    (p0, p1)
                })
                .collect()
        };
        let (p0, p1): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Ok((
            Sinogram::from_profiles(spec, self.angles, &p0),
            Sinogram::from_profiles(spec, self.angles, &p1),
        ))
    }

    /// `chi R_a^{-1}(phi J)`.
    pub fn precondition(&self, j: &Sinogram) -> Result<ScalarField> {
        let spec = *self.spec();
        spec.check_same(j.spec())?;
        self.angles.check_same(j.angles())?;
        let nt = j.n_theta();
        let mut v = j.values().to_vec();
        for (i, &p) in self.phi_row.iter().enumerate() {
            for x in &mut v[i * nt..(i + 1) * nt] {
                *x *= p;
            }
        }
        let cut = Sinogram::from_values(spec, self.angles, v)?;
        self.novikov.invert(&cut)?.mul(&self.chi)
    }

    /// `L(da, df) = (chi R_a^{-1} phi I_{w[a, f]}[da] + df, da M)`.
    pub fn apply_l(&self, pert: &PerturbationPair) -> Result<(ScalarField, ScalarField)> {
        self.check_pert(pert)?;
        let g = self.precondition(&self.weighted(&pert.da, false))?.add(&pert.df)?;
        let h = pert.da.mul(&self.m_field)?;
        Ok((g, h))
    }

    /// `Q(da, df) = (0, chi R_a^{-1} phi I_{w[a, a M]}[da] + a d_a M da + a M[a, df])`.
    pub fn apply_q(&self, pert: &PerturbationPair) -> Result<(ScalarField, ScalarField)> {
        self.check_pert(pert)?;
        let (d_m, m_df) = self.focused_derivatives(&pert.da, &pert.df);
        let second = self
            .precondition(&self.weighted(&pert.da, true))?
            .add(&self.base.a().mul(&d_m.add(&m_df)?)?)?;
        Ok((ScalarField::zeros(*self.spec()), second))
    }

    /// `L^{-1}(g, h) = (h / M, g - chi R_a^{-1} phi I_{w[a, f]}[h / M])`,
    /// both restricted to the unit disc.
    pub fn apply_l_inverse(&self, g: &ScalarField, h: &ScalarField) -> Result<PerturbationPair> {
        self.check(g)?;
        self.check(h)?;
        let min = self.m_min_on_disc();
        if !(min > 0.0 && min >= self.m_floor) {
            return Err(SpectError::DegenerateFocusedTransform {
                min,
                floor: self.m_floor,
            });
        }
        let da = h.zip(&self.m_field, |x, m| if m != 0.0 { x / m } else { 0.0 })?;
        let da = da.restrict_to_disc(SUPPORT_RADIUS);
        let df = g
            .sub(&self.precondition(&self.weighted(&da, false))?)?
            .restrict_to_disc(SUPPORT_RADIUS);
        Ok(PerturbationPair { da, df })
    }

    /// `sum_{k < k_terms} (-L^{-1} Q)^k L^{-1}(g, h)`, applied term by term.
    pub fn apply_lq_inverse(&self, g: &ScalarField, h: &ScalarField, k_terms: usize) -> Result<NeumannSolution> {
        if k_terms == 0 {
            return Err(SpectError::InvalidParameter("k_terms must be at least 1".into()));
        }
        let mut term = self.apply_l_inverse(g, h)?;
        let mut sum = term.clone();
        let mut term_norms = vec![term.norm()];
        let mut ratios = Vec::new();
        for _ in 1..k_terms {
            let (qg, qh) = self.apply_q(&term)?;
            term = self.apply_l_inverse(&qg, &qh)?.scale(-1.0);
            sum = sum.add(&term)?;
            let prev = *term_norms.last().unwrap();
            let norm = term.norm();
            ratios.push(if prev > 0.0 { norm / prev } else { 0.0 });
            term_norms.push(norm);
        }
        let divergent = ratios.iter().any(|&r| r >= 1.0);
        if divergent {
            log::warn!("Neumann series is not contracting: term ratios {ratios:?}");
        }
        Ok(NeumannSolution {
            pert: sum,
            term_norms,
            ratios,
            divergent,
        })
    }
}
