//! Deterministic coefficient pairs for the three experiment families: a
//! radially symmetric pair, a trapping-geometry pair, and piecewise-constant
//! discontinuous coefficients. Every shape lies inside the disc of radius 0.9.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SpectError};
use crate::grid::{GridSpec, ScalarField};
use crate::transport::CoeffPair;

/// Radius containing every generated shape.
pub const PHANTOM_RADIUS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomFamily {
    Radial,
    Trapping,
    Discs,
}

impl FromStr for PhantomFamily {
    type Err = SpectError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radial" => Ok(Self::Radial),
            "trapping" => Ok(Self::Trapping),
            "discs" => Ok(Self::Discs),
            other => Err(SpectError::InvalidParameter(format!(
                "unknown phantom family '{other}' (expected radial, trapping or discs)"
            ))),
        }
    }
}

impl fmt::Display for PhantomFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Radial => "radial",
            Self::Trapping => "trapping",
            Self::Discs => "discs",
        })
    }
}

/// Family, grid and peak amplitudes; shape parameters are fixed per family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub family: PhantomFamily,
    pub grid: GridSpec,
    pub amplitude_a: f64,
    pub amplitude_f: f64,
}

impl PhantomSpec {
    /// Default amplitudes of the family.
    pub fn new(family: PhantomFamily, grid: GridSpec) -> Self {
        let amplitude_a = match family {
            PhantomFamily::Radial => 0.4,
            PhantomFamily::Trapping => 0.8,
            PhantomFamily::Discs => 0.6,
        };
        Self {
            family,
            grid,
            amplitude_a,
            amplitude_f: 1.0,
        }
    }

    pub fn generate(&self) -> Result<CoeffPair> {
        if !(self.amplitude_a >= 0.0 && self.amplitude_f >= 0.0)
            || !self.amplitude_a.is_finite()
            || !self.amplitude_f.is_finite()
        {
            return Err(SpectError::InvalidParameter(
                "phantom amplitudes must be nonnegative".into(),
            ));
        }
        let base = match self.family {
            PhantomFamily::Radial => make_radial_pair(self.grid),
            PhantomFamily::Trapping => make_trapping_pair(self.grid),
            PhantomFamily::Discs => make_discontinuous_pair(self.grid),
        };
        let default = Self::new(self.family, self.grid);
        let (a, f) = base.into_parts();
        CoeffPair::new(
            a.scale(self.amplitude_a / default.amplitude_a),
            f.scale(self.amplitude_f / default.amplitude_f),
        )
    }
}

/// Smooth radial taper: 1 up to `r = 0.7`, 0 from `r = 0.9`.
fn taper(r: f64) -> f64 {
    if r <= 0.7 {
        1.0
    } else if r < PHANTOM_RADIUS {
        (FRAC_PI_2 * (r - 0.7) / (PHANTOM_RADIUS - 0.7)).cos().powi(2)
    } else {
        0.0
    }
}

fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Rescales so that the largest sample equals `peak`.
fn normalize(g: ScalarField, peak: f64) -> ScalarField {
    let m = g.max();
    if m > 0.0 {
        g.map(|v| if v == m { peak } else { v / m * peak })
    } else {
        g
    }
}

fn pair(a: ScalarField, f: ScalarField) -> CoeffPair {
    CoeffPair::new(a, f).expect("generated fields share one grid")
}

/// Radial Gaussian attenuation (peak 0.4, width 0.35) and a ring source of
/// radius 0.5 normalized to peak 1.
pub fn make_radial_pair(grid: GridSpec) -> CoeffPair {
    let a = ScalarField::from_fn(grid, |x, y| {
        let r = x.hypot(y);
        0.4 * gaussian(r * r, 0.35) * taper(r)
    });
    let f = ScalarField::from_fn(grid, |x, y| {
        let r = x.hypot(y);
        gaussian((r - 0.5).powi(2), 0.12) * taper(r)
    });
    pair(a, normalize(f, 1.0))
}

/// High-contrast annular attenuation (peak 0.8 on radius 0.5, width 0.12)
/// with two off-centre source bumps a quarter turn apart.
pub fn make_trapping_pair(grid: GridSpec) -> CoeffPair {
    let a = ScalarField::from_fn(grid, |x, y| {
        let r = x.hypot(y);
        gaussian((r - 0.5).powi(2), 0.12) * taper(r)
    });
    let f = ScalarField::from_fn(grid, |x, y| {
        let b1 = gaussian((x - 0.45).powi(2) + (y - 0.1).powi(2), 0.1);
        let b2 = 0.6 * gaussian((x + 0.1).powi(2) + (y - 0.45).powi(2), 0.12);
        (b1 + b2) * taper(x.hypot(y))
    });
    pair(normalize(a, 0.8), normalize(f, 1.0))
}

/// Disc `(cx, cy, r)` with a constant value.
struct Disc(f64, f64, f64, f64);

impl Disc {
    fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.0).powi(2) + (y - self.1).powi(2) < self.2 * self.2
    }
}

/// Piecewise-constant field: later discs overwrite earlier ones.
fn paint(discs: &[Disc], x: f64, y: f64) -> f64 {
    discs.iter().rev().find(|d| d.contains(x, y)).map_or(0.0, |d| d.3)
}

/// Disc attenuation 0.3 with inclusions 0.6 and 0.15; three source discs
/// 1.0, 0.7 and 0.4 inside it.
pub fn make_discontinuous_pair(grid: GridSpec) -> CoeffPair {
    let a_discs = [
        Disc(0.0, 0.0, 0.8, 0.3),
        Disc(-0.3, 0.25, 0.2, 0.6),
        Disc(0.35, -0.25, 0.15, 0.15),
    ];
    let f_discs = [
        Disc(0.3, 0.3, 0.15, 1.0),
        Disc(-0.35, -0.25, 0.2, 0.7),
        Disc(0.05, -0.5, 0.12, 0.4),
    ];
    let a = ScalarField::cell_average(grid, 4, |x, y| paint(&a_discs, x, y));
    let f = ScalarField::cell_average(grid, 4, |x, y| paint(&f_discs, x, y));
    pair(a, f)
}
