//! Modified Newton-Raphson reconstruction of `(a, f)` from albedo data.
//!
//! One step: mollify the iterate, simulate, precondition the residual with
//! `chi R^{-1} phi` at the mollified attenuation, apply the truncated Neumann
//! inverse of `L + Q` built at the mollified iterate, subtract, and
//! optionally project onto nonnegative functions.

use crate::error::{Result, SpectError};
use crate::grid::{AngleSet, GridSpec, ScalarField};
use crate::linearized::LinearizationPoint;
use crate::transport::{albedo, CoeffPair, MeasurementPair, DEFAULT_SCATTER, SUPPORT_RADIUS};

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub grid: GridSpec,
    pub angles: AngleSet,
    pub iters: usize,
    pub neumann_terms: usize,
    /// Mollifier radius in grid cells.
    pub mollifier_width_cells: f64,
    pub c_scatter: f64,
    pub project_nonneg: bool,
    pub m_floor_rel: f64,
    /// Recorded with the run; reconstruction itself draws no random numbers.
    pub seed: u64,
    /// Factor applied to every update.
    pub damping: f64,
    /// Zero the preconditioned single-scatter residual (ballistic data only).
    pub ballistic_only: bool,
}

impl ReconConfig {
    pub fn new(grid: GridSpec, angles: AngleSet) -> Self {
        Self {
            grid,
            angles,
            iters: 8,
            neumann_terms: 4,
            mollifier_width_cells: 2.0,
            c_scatter: DEFAULT_SCATTER,
            project_nonneg: false,
            m_floor_rel: 1e-6,
            seed: 0,
            damping: 1.0,
            ballistic_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SpectError::InvalidParameter(m.into()));
        if self.neumann_terms == 0 {
            return bad("neumann_terms must be at least 1");
        }
        if !(self.mollifier_width_cells >= 0.0 && self.mollifier_width_cells.is_finite()) {
            return bad("mollifier width must be a nonnegative number of cells");
        }
        if !(self.c_scatter > 0.0 && self.c_scatter.is_finite()) {
            return bad("scattering constant must be positive");
        }
        if !(self.m_floor_rel >= 0.0 && self.m_floor_rel.is_finite()) {
            return bad("m_floor_rel must be nonnegative");
        }
        if !self.damping.is_finite() {
            return bad("damping must be finite");
        }
        Ok(())
    }
}

/// Diagnostics of one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Index of the iterate (0 is the initial guess).
    pub iteration: usize,
    /// `|A0(F a, F f) - data0|` and `|A1(F a, F f) - data1| / C`, once evaluated.
    pub residual: Option<(f64, f64)>,
    /// Relative errors of `a` and `f` in percent, when a nonzero ground
    /// truth is known.
    pub rms_a: Option<f64>,
    pub rms_f: Option<f64>,
    /// Neumann term ratios of the step that produced this iterate.
    pub neumann_ratios: Vec<f64>,
    /// Whether those terms failed to decrease.
    pub neumann_divergent: bool,
}

impl IterationRecord {
    /// Largest Neumann term ratio, if any.
    pub fn max_ratio(&self) -> Option<f64> {
        self.neumann_ratios.iter().copied().reduce(f64::max)
    }
}

/// Current iterate and one record per iterate so far (initial guess included).
#[derive(Debug, Clone, PartialEq)]
pub struct ReconState {
    pub iterate: CoeffPair,
    pub history: Vec<IterationRecord>,
}

impl ReconState {
    /// `(0, indicator of the unit disc)`; boundary cells hold their covered fraction.
    pub fn initial(grid: GridSpec, truth: Option<&CoeffPair>) -> Result<Self> {
        let f0 = ScalarField::cell_average(grid, 8, |x, y| {
            if x * x + y * y < SUPPORT_RADIUS * SUPPORT_RADIUS {
                1.0
            } else {
                0.0
            }
        });
        let iterate = CoeffPair::new(ScalarField::zeros(grid), f0)?;
        Self::from_iterate(iterate, truth)
    }

    pub fn from_iterate(iterate: CoeffPair, truth: Option<&CoeffPair>) -> Result<Self> {
        let (rms_a, rms_f) = rms_pair(&iterate, truth)?;
        Ok(Self {
            iterate,
            history: vec![IterationRecord {
                iteration: 0,
                residual: None,
                rms_a,
                rms_f,
                neumann_ratios: vec![],
                neumann_divergent: false,
            }],
        })
    }

    /// Number of completed Newton steps.
    pub fn completed(&self) -> usize {
        self.history.len() - 1
    }
}

/// Normalized bump kernel `(1 - r^2 / rho^2)^2` on `r < rho = eps_cells h`,
/// as `(di, dj, weight)` taps.
fn mollifier_taps(eps_cells: f64) -> Vec<(isize, isize, f64)> {
    let reach = eps_cells.ceil() as isize;
    let mut taps = Vec::new();
    for di in -reach..=reach {
        for dj in -reach..=reach {
            let q = ((di * di + dj * dj) as f64) / (eps_cells * eps_cells);
            if q < 1.0 {
                taps.push((di, dj, (1.0 - q).powi(2)));
            }
        }
    }
    let total: f64 = taps.iter().map(|t| t.2).sum();
    for t in &mut taps {
        t.2 /= total;
    }
    taps
}

/// Convolution with a unit-mass bump of radius `eps_cells` cells; zero
/// width is the identity.
pub fn mollify(g: &ScalarField, eps_cells: f64) -> ScalarField {
    if eps_cells <= 0.0 {
        return g.clone();
    }
    let spec = *g.spec();
    let n = spec.n() as isize;
    let taps = mollifier_taps(eps_cells);
    let v = g.values();
    ScalarField::from_fn_indexed(spec, |i, j| {
        let mut acc = 0.0;
        for &(di, dj, w) in &taps {
            let (r, c) = (i as isize + di, j as isize + dj);
            if r >= 0 && r < n && c >= 0 && c < n {
                acc += w * v[(r * n + c) as usize];
            }
        }
        acc
    })
}

/// `100 |rec - truth| / |truth|` in L2 over the unit disc.
pub fn rms_error(rec: &ScalarField, truth: &ScalarField) -> Result<f64> {
    rec.spec().check_same(truth.spec())?;
    let t = truth.restrict_to_disc(SUPPORT_RADIUS).l2_norm();
    if t == 0.0 {
        return Err(SpectError::ZeroReference);
    }
    Ok(100.0 * rec.sub(truth)?.restrict_to_disc(SUPPORT_RADIUS).l2_norm() / t)
}

/// Per-coefficient errors; a coefficient whose truth vanishes has none.
fn rms_pair(rec: &CoeffPair, truth: Option<&CoeffPair>) -> Result<(Option<f64>, Option<f64>)> {
    let one = |r: &ScalarField, t: &ScalarField| match rms_error(r, t) {
        Ok(v) => Ok(Some(v)),
        Err(SpectError::ZeroReference) => Ok(None),
        Err(e) => Err(e),
    };
    match truth {
        Some(t) => Ok((one(rec.a(), t.a())?, one(rec.f(), t.f())?)),
        None => Ok((None, None)),
    }
}

fn check_inputs(state: &ReconState, data: &MeasurementPair, cfg: &ReconConfig) -> Result<()> {
    cfg.validate()?;
    cfg.grid.check_same(state.iterate.spec())?;
    cfg.grid.check_same(data.spec())?;
    cfg.angles.check_same(data.angles())?;
    if data.c_scatter() != cfg.c_scatter {
        return Err(SpectError::InvalidParameter(format!(
            "data were simulated with C = {} but the configuration uses C = {}",
            data.c_scatter(),
            cfg.c_scatter
        )));
    }
    Ok(())
}

fn mollified(pair: &CoeffPair, eps: f64) -> Result<CoeffPair> {
    CoeffPair::new(mollify(pair.a(), eps), mollify(pair.f(), eps))
}

/// Residual norms of the mollified iterate; the second is divided by `C`.
pub fn residual_norms(pair: &CoeffPair, data: &MeasurementPair, cfg: &ReconConfig) -> Result<(f64, f64)> {
    let sim = albedo(&mollified(pair, cfg.mollifier_width_cells)?, &cfg.angles, cfg.c_scatter)?;
    Ok((
        sim.a0().sub(data.a0())?.l2_norm(),
        sim.a1().sub(data.a1())?.l2_norm() / cfg.c_scatter,
    ))
}

/// One modified Newton-Raphson step.
pub fn newton_step(
    mut state: ReconState,
    data: &MeasurementPair,
    cfg: &ReconConfig,
    truth: Option<&CoeffPair>,
) -> Result<ReconState> {
    check_inputs(&state, data, cfg)?;
    let smooth = mollified(&state.iterate, cfg.mollifier_width_cells)?;
    let sim = albedo(&smooth, &cfg.angles, cfg.c_scatter)?;
    let r0 = sim.a0().sub(data.a0())?;
    let r1 = sim.a1().sub(data.a1())?.scale(1.0 / cfg.c_scatter);
    let last = state
        .history
        .last_mut()
        .expect("history starts with the initial record");
    last.residual = Some((r0.l2_norm(), r1.l2_norm()));

    let point = LinearizationPoint::new(smooth, cfg.angles, cfg.c_scatter, cfg.m_floor_rel)?;
    let g = point.precondition(&r0)?;
    let h = if cfg.ballistic_only {
        ScalarField::zeros(cfg.grid)
    } else {
        point.precondition(&r1)?
    };
    let sol = point.apply_lq_inverse(&g, &h, cfg.neumann_terms)?;
    let mut a = state.iterate.a().sub(&sol.pert.da.scale(cfg.damping))?;
    let mut f = state.iterate.f().sub(&sol.pert.df.scale(cfg.damping))?;
    if cfg.project_nonneg {
        a = a.positive_part();
        f = f.positive_part();
    }
    let iterate = CoeffPair::new(a, f)?;
    let (rms_a, rms_f) = rms_pair(&iterate, truth)?;
    let iteration = state.history.len();
    log::info!(
        "step {iteration}: residual ({:.4e}, {:.4e}), Neumann ratios {:?}",
        last_residual(&state).0,
        last_residual(&state).1,
        sol.ratios
    );
    state.history.push(IterationRecord {
        iteration,
        residual: None,
        rms_a,
        rms_f,
        neumann_ratios: sol.ratios,
        neumann_divergent: sol.divergent,
    });
    state.iterate = iterate;
    Ok(state)
}

fn last_residual(state: &ReconState) -> (f64, f64) {
    state
        .history
        .last()
        .and_then(|r| r.residual)
        .unwrap_or((f64::NAN, f64::NAN))
}

/// Runs `cfg.iters` steps from the initial guess and evaluates the residual
/// of the final iterate.
pub fn reconstruct(data: &MeasurementPair, cfg: &ReconConfig, truth: Option<&CoeffPair>) -> Result<ReconState> {
    let mut state = ReconState::initial(cfg.grid, truth)?;
    check_inputs(&state, data, cfg)?;
    for _ in 0..cfg.iters {
        state = newton_step(state, data, cfg, truth)?;
    }
    let residual = residual_norms(&state.iterate, data, cfg)?;
    state.history.last_mut().expect("nonempty history").residual = Some(residual);
    Ok(state)
}
