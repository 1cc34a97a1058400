//! Acceptance suite: one PASS/FAIL line per criterion, tolerances as stated.
//!
//! The process exits 0 after reporting unless `SPECT_ACCEPTANCE_STRICT=1`,
//! in which case any FAIL makes it exit 1. `SPECT_ACCEPTANCE_ONLY=3,5`
//! restricts the run to the listed criteria.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spect_core::cli::{decode_field, decode_sinogram, encode_field, encode_sinogram, format_log};
use spect_core::linearized::LinearizationPoint;
use spect_core::noise::{apply_noise, background_noise, instrument_noise, NoiseParams};
use spect_core::phantoms::{PhantomFamily, PhantomSpec};
use spect_core::recon::rms_error;
use spect_core::transforms::{attenuated_radon, novikov_inverse};
use spect_core::transport::{albedo, DEFAULT_SCATTER};
use spect_core::{
    reconstruct, AngleSet, CoeffPair, GridSpec, MeasurementPair, PerturbationPair, ReconConfig, ReconState, Result,
    ScalarField, Sinogram,
};

type Criterion = fn() -> Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn bump(spec: GridSpec, cx: f64, cy: f64, sigma: f64, amp: f64) -> ScalarField {
    ScalarField::from_fn(spec, move |x, y| {
        amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
    })
    .restrict_to_disc(0.9)
}

/// Sum of three Gaussian bumps with random centres in the radius 0.5 disc.
fn random_smooth(spec: GridSpec, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    (0..3).fold(ScalarField::zeros(spec), |acc, _| {
        let r = 0.5 * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let b = bump(
            spec,
            r * phi.cos(),
            r * phi.sin(),
            rng.random_range(0.15..0.3),
            amp * rng.random_range(-1.0..1.0),
        );
        acc.add(&b).unwrap()
    })
}

fn run_phantom(family: PhantomFamily, n: usize, tweak: impl Fn(&mut ReconConfig)) -> Result<(ReconState, f64)> {
    let spec = GridSpec::unit(n)?;
    let truth = PhantomSpec::new(family, spec).generate()?;
    let mut cfg = ReconConfig::new(spec, AngleSet::new(n)?);
    tweak(&mut cfg);
    let data = albedo(&truth, &cfg.angles, cfg.c_scatter)?;
    let start = Instant::now();
    let state = reconstruct(&data, &cfg, Some(&truth))?;
    Ok((state, start.elapsed().as_secs_f64()))
}

fn final_rms(state: &ReconState) -> (f64, f64) {
    let last = state.history.last().expect("nonempty history");
    (last.rms_a.unwrap_or(f64::NAN), last.rms_f.unwrap_or(f64::NAN))
}

fn discs_at(n: usize, limit: f64) -> Result<(bool, String)> {
    let (state, secs) = run_phantom(PhantomFamily::Discs, n, |_| {})?;
    let (a, f) = final_rms(&state);
    Ok((
        a <= limit && f <= limit,
        format!("n={n}: rms_a {a:.3}% rms_f {f:.3}% (limit {limit}%) in {secs:.0}s"),
    ))
}

fn criterion_1() -> Result<Outcome> {
    let (gate, gate_msg) = discs_at(128, 5.0)?;
    let (full, full_msg) = discs_at(256, 2.0)?;
    Ok(Outcome::new(gate && full, format!("{full_msg}; gate {gate_msg}")))
}

fn criterion_2() -> Result<Outcome> {
    let (state, _) = run_phantom(PhantomFamily::Radial, 128, |_| {})?;
    let (a, f) = final_rms(&state);
    let (control, _) = run_phantom(PhantomFamily::Radial, 128, |c| c.ballistic_only = true)?;
    let (ca, cf) = final_rms(&control);
    Ok(Outcome::new(
        a <= 5.0 && f <= 5.0 && ca >= 30.0,
        format!("both data: rms_a {a:.3}% rms_f {f:.3}% (limit 5%); ballistic only: rms_a {ca:.3}% (need >= 30%), rms_f {cf:.3}%"),
    ))
}

fn criterion_3() -> Result<Outcome> {
    let (state, _) = run_phantom(PhantomFamily::Trapping, 128, |_| {})?;
    let (a, f) = final_rms(&state);
    let residuals: Vec<(f64, f64)> = state
        .history
        .iter()
        .map(|r| r.residual.expect("residual recorded"))
        .collect();
    let monotone = residuals.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    Ok(Outcome::new(
        a <= 8.0 && f <= 8.0 && monotone,
        format!("rms_a {a:.3}% rms_f {f:.3}% (limit 8%); residuals strictly decreasing: {monotone}"),
    ))
}

fn novikov_error(n: usize) -> Result<f64> {
    let spec = GridSpec::unit(n)?;
    let a = bump(spec, 0.1, -0.05, 0.35, 0.5);
    let f = bump(spec, -0.2, 0.15, 0.2, 1.0).add(&bump(spec, 0.25, -0.2, 0.15, 0.6))?;
    let rec = novikov_inverse(&a, &attenuated_radon(&a, &f, AngleSet::new(n)?)?)?;
    rms_error(&rec, &f)
}

fn criterion_4() -> Result<Outcome> {
    let (coarse, fine) = (novikov_error(128)?, novikov_error(256)?);
    Ok(Outcome::new(
        fine <= 2.0 && fine < coarse,
        format!("relative L2 error {fine:.3}% at n=256 (limit 2%), {coarse:.3}% at n=128"),
    ))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn criterion_5() -> Result<Outcome> {
    let n = 64;
    let spec = GridSpec::unit(n)?;
    let angles = AngleSet::new(n)?;
    let base = CoeffPair::new(bump(spec, 0.1, -0.1, 0.3, 0.3), bump(spec, -0.2, 0.1, 0.35, 1.0))?;
    let point = LinearizationPoint::new(base.clone(), angles, DEFAULT_SCATTER, 1e-6)?;
    let at_base = albedo(&base, &angles, DEFAULT_SCATTER)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ts = [1e-1, 1e-2, 1e-3];
    let log_t: Vec<f64> = ts.iter().map(|t: &f64| t.ln()).collect();
    let mut pass = true;
    let mut slopes = Vec::new();
    for _ in 0..3 {
        let pert = PerturbationPair::new(random_smooth(spec, &mut rng, 0.3), random_smooth(spec, &mut rng, 1.0))?;
        let (d0, d1) = point.apply_da(&pert)?;
        let mut rem = [Vec::new(), Vec::new(), Vec::new()];
        for &t in &ts {
            let moved = CoeffPair::new(base.a().add(&pert.da.scale(t))?, base.f().add(&pert.df.scale(t))?)?;
            let sim = albedo(&moved, &angles, DEFAULT_SCATTER)?;
            let r0 = sim.a0().sub(at_base.a0())?.sub(&d0.scale(t))?.l2_norm();
            let r1 = sim.a1().sub(at_base.a1())?.sub(&d1.scale(t))?.l2_norm();
            rem[0].push(r0.hypot(r1).ln());
            rem[1].push(r0.ln());
            rem[2].push(r1.ln());
        }
        let s: Vec<f64> = rem.iter().map(|r| least_squares_slope(&log_t, r)).collect();
        pass &= s.iter().all(|v| (1.8..=2.2).contains(v));
        slopes.push(format!("{:.3} ({:.3}/{:.3})", s[0], s[1], s[2]));
    }
    Ok(Outcome::new(
        pass,
        format!(
            "slopes [1.8, 2.2]: total (first/second component) {}",
            slopes.join(", ")
        ),
    ))
}

fn pair_error(got: &PerturbationPair, want: &PerturbationPair) -> f64 {
    got.sub(want).unwrap().norm() / want.norm()
}

fn linearization(n: usize, a_amp: f64) -> Result<LinearizationPoint> {
    let spec = GridSpec::unit(n)?;
    let base = CoeffPair::new(bump(spec, 0.1, -0.1, 0.3, a_amp), bump(spec, -0.2, 0.1, 0.35, 1.0))?;
    LinearizationPoint::new(base, AngleSet::new(n)?, DEFAULT_SCATTER, 1e-6)
}

fn smooth_pert(spec: GridSpec) -> Result<PerturbationPair> {
    PerturbationPair::new(bump(spec, 0.2, 0.2, 0.25, 0.1), bump(spec, -0.1, -0.3, 0.2, 0.5))
}

fn criterion_6() -> Result<Outcome> {
    let point = linearization(128, 0.3)?;
    let pert = smooth_pert(*point.spec())?;
    let (g, h) = point.apply_l(&pert)?;
    let l_err = 100.0 * pair_error(&point.apply_l_inverse(&g, &h)?, &pert);
    let (qg, qh) = point.apply_q(&pert)?;
    let sol = point.apply_lq_inverse(&g.add(&qg)?, &h.add(&qh)?, 4)?;
    let lq_err = 100.0 * pair_error(&sol.pert, &pert);
    let zero = linearization(128, 0.0)?;
    let (z0, z1) = zero.apply_q(&pert)?;
    let q_zero = z0.values().iter().chain(z1.values()).all(|v| *v == 0.0);
    Ok(Outcome::new(
        l_err <= 1.0 && lq_err <= 3.0 && q_zero,
        format!("L^-1 L error {l_err:.3}% (limit 1%); (L+Q)^-1 (L+Q) error {lq_err:.3}% (limit 3%); Q = 0 at a = 0: {q_zero}"),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let point = linearization(128, 0.3)?;
    let (g, h) = point.apply_l(&smooth_pert(*point.spec())?)?;
    let sol = point.apply_lq_inverse(&g, &h, 4)?;
    let pass = sol.ratios.len() == 3 && sol.ratios.iter().all(|r| *r <= 0.5);
    Ok(Outcome::new(
        pass,
        format!("term ratios {:.4?} (limit 0.5)", sol.ratios),
    ))
}

fn noisy_rms(data: &MeasurementPair, truth: &CoeffPair, cfg: &ReconConfig, amp: f64, bias: f64) -> Result<(f64, f64)> {
    let noisy = apply_noise(data, &NoiseParams::new(amp, bias, 2024))?;
    let state = reconstruct(&noisy, cfg, Some(truth))?;
    let (a, f) = final_rms(&state);
    if !(a.is_finite() && f.is_finite()) {
        return Err(spect_core::SpectError::InvalidParameter(format!(
            "non-finite RMS ({a}, {f})"
        )));
    }
    Ok((a, f))
}

fn noise_moments() -> bool {
    let s = Sinogram::zeros(GridSpec::unit(100).unwrap(), AngleSet::new(100).unwrap()).map(|_| 1.0);
    let out = instrument_noise(&s, 0.2, 1).unwrap();
    let v = out.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let bg = background_noise(&s, 0.5, 0.05, 1).unwrap();
    let expected = s.sum() + (0.5 * (s.sum() / 0.05).round()).round() * 0.05;
    (0.99..=1.01).contains(&mean) && (0.18..=0.22).contains(&var) && (bg.sum() - expected).abs() <= 1e-9 * expected
}

fn criterion_8() -> Result<Outcome> {
    let n = 256;
    let spec = GridSpec::unit(n)?;
    let truth = PhantomSpec::new(PhantomFamily::Discs, spec).generate()?;
    let cfg = ReconConfig::new(spec, AngleSet::new(n)?);
    let data = albedo(&truth, &cfg.angles, cfg.c_scatter)?;
    let moments = noise_moments();
    let low = noisy_rms(&data, &truth, &cfg, 0.2, 0.5);
    let high = noisy_rms(&data, &truth, &cfg, 0.4, 5.0);
    let describe = |r: &Result<(f64, f64)>| match r {
        Ok((a, f)) => format!("rms_a {a:.3}% rms_f {f:.3}%"),
        Err(e) => format!("failed: {e}"),
    };
    let pass = moments
        && match (&low, &high) {
            (Ok((la, lf)), Ok((ha, hf))) => {
                (8.0..=40.0).contains(lf) && (15.0..=80.0).contains(la) && *ha >= 2.0 * la && *hf >= 2.0 * lf
            }
            _ => false,
        };
    Ok(Outcome::new(
        pass,
        format!(
            "low (0.2, 0.5): {} (need f in [8, 40], a in [15, 80]); high (0.4, 5): {} (need 2x low); moment oracles: {moments}",
            describe(&low),
            describe(&high)
        ),
    ))
}

fn criterion_9() -> Result<Outcome> {
    let n = 48;
    let spec = GridSpec::unit(n)?;
    let truth = PhantomSpec::new(PhantomFamily::Discs, spec).generate()?;
    let again = PhantomSpec::new(PhantomFamily::Discs, spec).generate()?;
    let mut cfg = ReconConfig::new(spec, AngleSet::new(n)?);
    cfg.iters = 3;
    let data = albedo(&truth, &cfg.angles, cfg.c_scatter)?;
    let params = NoiseParams::new(0.2, 0.5, 9);
    let noisy = apply_noise(&data, &params)?;
    let seeded = noisy == apply_noise(&data, &params)?;
    let x = reconstruct(&data, &cfg, Some(&truth))?;
    let y = reconstruct(&data, &cfg, Some(&truth))?;
    let log = format_log(&x);
    let deterministic =
        seeded && truth == again && x.history == y.history && x.iterate == y.iterate && log == format_log(&y);
    let field_bytes = encode_field(truth.f());
    let field_rt = decode_field(&field_bytes)?
        .values()
        .iter()
        .zip(truth.f().values())
        .all(|(p, q)| p.to_bits() == q.to_bits())
        && encode_field(&decode_field(&field_bytes)?) == field_bytes;
    let sino_bytes = encode_sinogram(noisy.a0());
    let sino_rt = decode_sinogram(&sino_bytes)?
        .values()
        .iter()
        .zip(noisy.a0().values())
        .all(|(p, q)| p.to_bits() == q.to_bits())
        && encode_sinogram(&decode_sinogram(&sino_bytes)?) == sino_bytes;
    let rows = log.lines().skip(1).filter(|l| !l.starts_with('#')).count();
    Ok(Outcome::new(
        deterministic && field_rt && sino_rt && rows == cfg.iters + 1,
        format!("deterministic {deterministic}; field round trip {field_rt}; sinogram round trip {sino_rt}; log rows {rows} for {} iterations", cfg.iters),
    ))
}

fn main() -> ExitCode {
    let criteria: [(usize, Criterion); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let only: Option<Vec<usize>> = std::env::var("SPECT_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("SPECT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = Vec::new();
    for (id, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id}: {verdict} [{:.0}s] {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed.push(id);
        }
    }
    println!("acceptance: {} failing criteria {failed:?}", failed.len());
    if strict && !failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
