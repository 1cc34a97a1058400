//! Command-line surface and the flat binary file formats.
//!
//! Field files: ASCII header `SPFLD <rows> <cols> <xmin> <xmax> <ymin> <ymax>\n`
//! then `rows * cols` little-endian f64, row-major with row index along `y`.
//! Sinogram files: `SPSIN <n_s> <n_theta> <smin> <smax>\n` then
//! `n_s * n_theta` little-endian f64, s-major; `theta_k = 2 pi k / n_theta`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Result, SpectError};
use crate::grid::{AngleSet, GridSpec, ScalarField, Sinogram};
use crate::noise::{background_noise, default_quantum, instrument_noise};
use crate::phantoms::{PhantomFamily, PhantomSpec};
use crate::recon::{reconstruct, rms_error, ReconConfig, ReconState};
use crate::transport::{albedo, CoeffPair, MeasurementPair, DEFAULT_SCATTER};

const FIELD_MAGIC: &str = "SPFLD";
const SINOGRAM_MAGIC: &str = "SPSIN";
const LOG_HEADER: &str = "iteration,residual0,residual1,rms_a,rms_f,neumann_ratio";

fn format_err(msg: impl Into<String>) -> SpectError {
    SpectError::Format(msg.into())
}

fn encode(header: String, values: &[f64]) -> Vec<u8> {
    let mut out = header.into_bytes();
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits off the header line and decodes exactly `expected` payload values.
fn split_header(bytes: &[u8]) -> Result<(Vec<&str>, &[u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| format_err("header is not ASCII"))?;
    Ok((header.split_ascii_whitespace().collect(), &bytes[end + 1..]))
}

fn decode_payload(payload: &[u8], expected: usize) -> Result<Vec<f64>> {
    if payload.len() != expected * 8 {
        return Err(format_err(format!(
            "payload holds {} bytes, header announces {} values",
            payload.len(),
            expected
        )));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn parse<T: std::str::FromStr>(token: &str, what: &str) -> Result<T> {
    token.parse().map_err(|_| format_err(format!("bad {what} '{token}'")))
}

fn half_width(min: f64, max: f64, what: &str) -> Result<f64> {
    if max > 0.0 && min == -max {
        Ok(max)
    } else {
        Err(format_err(format!(
            "{what} range [{min}, {max}] is not symmetric about 0"
        )))
    }
}

pub fn encode_field(g: &ScalarField) -> Vec<u8> {
    let n = g.spec().n();
    let l = g.spec().half_width();
    encode(format!("{FIELD_MAGIC} {n} {n} {} {l} {} {l}\n", -l, -l), g.values())
}

pub fn decode_field(bytes: &[u8]) -> Result<ScalarField> {
    let (tokens, payload) = split_header(bytes)?;
    if tokens.len() != 7 || tokens[0] != FIELD_MAGIC {
        return Err(format_err("expected header 'SPFLD rows cols xmin xmax ymin ymax'"));
    }
    let rows: usize = parse(tokens[1], "row count")?;
    let cols: usize = parse(tokens[2], "column count")?;
    let bounds: Vec<f64> = tokens[3..].iter().map(|t| parse(t, "bound")).collect::<Result<_>>()?;
    let lx = half_width(bounds[0], bounds[1], "x")?;
    let ly = half_width(bounds[2], bounds[3], "y")?;
    if rows != cols || lx != ly {
        return Err(format_err("only square grids on a square domain are supported"));
    }
    let values = decode_payload(
        payload,
        rows.checked_mul(cols).ok_or_else(|| format_err("size overflow"))?,
    )?;
    ScalarField::from_values(GridSpec::new(rows, lx)?, values)
}

pub fn encode_sinogram(s: &Sinogram) -> Vec<u8> {
    let l = s.spec().half_width();
    encode(
        format!("{SINOGRAM_MAGIC} {} {} {} {l}\n", s.n_s(), s.n_theta(), -l),
        s.values(),
    )
}

pub fn decode_sinogram(bytes: &[u8]) -> Result<Sinogram> {
    let (tokens, payload) = split_header(bytes)?;
    if tokens.len() != 5 || tokens[0] != SINOGRAM_MAGIC {
        return Err(format_err("expected header 'SPSIN n_s n_theta smin smax'"));
    }
    let n_s: usize = parse(tokens[1], "offset count")?;
    let n_theta: usize = parse(tokens[2], "angle count")?;
    let l = half_width(parse(tokens[3], "smin")?, parse(tokens[4], "smax")?, "s")?;
    let values = decode_payload(
        payload,
        n_s.checked_mul(n_theta).ok_or_else(|| format_err("size overflow"))?,
    )?;
    Sinogram::from_values(GridSpec::new(n_s, l)?, AngleSet::new(n_theta)?, values)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| SpectError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)
        .map_err(|e| SpectError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    decode_field(&read_bytes(path)?).map_err(|e| annotate(e, path))
}

pub fn write_field(path: &Path, g: &ScalarField) -> Result<()> {
    write_bytes(path, &encode_field(g))
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    decode_sinogram(&read_bytes(path)?).map_err(|e| annotate(e, path))
}

pub fn write_sinogram(path: &Path, s: &Sinogram) -> Result<()> {
    write_bytes(path, &encode_sinogram(s))
}

fn annotate(e: SpectError, path: &Path) -> SpectError {
    match e {
        SpectError::Format(m) => SpectError::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// `v` with 4 significant digits, e.g. `0.000`, `3.142`, `10.00`, `127.3`.
pub fn four_significant(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.000".into();
    }
    let decimals = |x: f64| (3 - x.abs().log10().floor() as i32).max(0) as usize;
    let d = decimals(v);
    let rounded: f64 = format!("{v:.d$}").parse().expect("formatted float");
    let d = decimals(rounded).min(d);
    format!("{rounded:.d$}")
}

/// 16-bit binary PGM, min-max normalized, first row at the top.
pub fn encode_pgm(rows: &[Vec<f64>]) -> Vec<u8> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let (lo, hi) = rows
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = hi - lo;
    let mut out = format!("P5\n# min {lo:e} max {hi:e}\n{width} {height}\n65535\n").into_bytes();
    for v in rows.iter().flatten() {
        let level = if span > 0.0 {
            ((v - lo) / span * 65535.0).round() as u16
        } else {
            0
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

/// Rows of a field for display: `y` decreasing downwards.
fn field_rows(g: &ScalarField, crop: bool) -> Vec<Vec<f64>> {
    let n = g.spec().n();
    let keep: Vec<usize> = (0..n).filter(|&i| !crop || g.spec().coord(i).abs() <= 1.0).collect();
    keep.iter()
        .rev()
        .map(|&i| keep.iter().map(|&j| g.get(i, j)).collect())
        .collect()
}

/// Rows of a sinogram for display: `theta` horizontal, `s` vertical.
fn sinogram_rows(s: &Sinogram, crop: bool) -> Vec<Vec<f64>> {
    (0..s.n_s())
        .filter(|&i| !crop || s.spec().coord(i).abs() <= 1.0)
        .map(|i| (0..s.n_theta()).map(|k| s.get(i, k)).collect())
        .collect()
}

#[derive(Debug, Parser)]
#[command(
    name = "spect",
    version,
    about = "2-D SPECT simulation and joint attenuation/source reconstruction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a deterministic (a, f) phantom pair.
    Phantom(PhantomArgs),
    /// Simulates ballistic and single-scatter measurements.
    Forward(ForwardArgs),
    /// Applies instrument then background noise to one sinogram.
    Noise(NoiseArgs),
    /// Joint reconstruction of (a, f) from both measurements.
    Recon(ReconArgs),
    /// Prints the relative L2 error in percent over the unit disc.
    Metrics(MetricsArgs),
    /// Exports a field or sinogram file as a 16-bit PGM image.
    ExportPgm(ExportArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: PhantomFamily,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out_a: PathBuf,
    #[arg(long)]
    pub out_f: PathBuf,
}

fn parse_family(s: &str) -> std::result::Result<PhantomFamily, String> {
    s.parse().map_err(|e: SpectError| e.to_string())
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub f: PathBuf,
    #[arg(long)]
    pub ntheta: usize,
    #[arg(long, default_value_t = DEFAULT_SCATTER)]
    pub c_scatter: f64,
    #[arg(long)]
    pub out_a0: PathBuf,
    #[arg(long)]
    pub out_a1: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub amp: f64,
    #[arg(long, default_value_t = 0.0)]
    pub bias: f64,
    /// Background photon energy; defaults to the mean positive pixel / 50.
    #[arg(long)]
    pub quantum: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconArgs {
    #[arg(long)]
    pub a0: PathBuf,
    #[arg(long)]
    pub a1: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub iters: usize,
    #[arg(long, default_value_t = 4)]
    pub neumann: usize,
    #[arg(long, default_value_t = 2.0)]
    pub eps_cells: f64,
    #[arg(long, default_value_t = DEFAULT_SCATTER)]
    pub c_scatter: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub m_floor_rel: f64,
    #[arg(long, requires = "truth_f")]
    pub truth_a: Option<PathBuf>,
    #[arg(long, requires = "truth_a")]
    pub truth_f: Option<PathBuf>,
    #[arg(long)]
    pub project_nonneg: bool,
    #[arg(long)]
    pub out_a: PathBuf,
    #[arg(long)]
    pub out_f: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// CSV of the reconstruction along the line x = 0.
    #[arg(long)]
    pub cut_x0: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub rec: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub crop_unit_square: bool,
}

/// Runs one command, writing any report to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::Phantom(args) => cmd_phantom(&args),
        Command::Forward(args) => cmd_forward(&args),
        Command::Noise(args) => cmd_noise(&args),
        Command::Recon(args) => cmd_recon(&args),
        Command::Metrics(args) => cmd_metrics(&args, out),
        Command::ExportPgm(args) => cmd_export_pgm(&args),
    }
}

pub fn cmd_phantom(args: &PhantomArgs) -> Result<()> {
    let pair = PhantomSpec::new(args.family, GridSpec::unit(args.n)?).generate()?;
    write_field(&args.out_a, pair.a())?;
    write_field(&args.out_f, pair.f())
}

pub fn cmd_forward(args: &ForwardArgs) -> Result<()> {
    let pair = CoeffPair::new(read_field(&args.a)?, read_field(&args.f)?)?;
    let data = albedo(&pair, &AngleSet::new(args.ntheta)?, args.c_scatter)?;
    write_sinogram(&args.out_a0, data.a0())?;
    write_sinogram(&args.out_a1, data.a1())
}

pub fn cmd_noise(args: &NoiseArgs) -> Result<()> {
    let s = read_sinogram(&args.input)?;
    let s = instrument_noise(&s, args.amp, args.seed)?;
    let s = if args.bias == 0.0 {
        s
    } else {
        let q = match args.quantum {
            Some(q) => q,
            None => default_quantum(&s)?,
        };
        background_noise(&s, args.bias, q, args.seed)?
    };
    write_sinogram(&args.out, &s)
}

fn csv_value(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:e}"))
}

/// Convergence log: one data row per iterate, `#` lines for warnings.
pub fn format_log(state: &ReconState) -> String {
    let mut log = format!("{LOG_HEADER}\n");
    for r in &state.history {
        if r.neumann_divergent {
            let _ = writeln!(
                log,
                "# warning: Neumann series did not contract in step {}",
                r.iteration
            );
        }
        let (r0, r1) = r.residual.map_or((None, None), |(a, b)| (Some(a), Some(b)));
        let _ = writeln!(
            log,
            "{},{},{},{},{},{}",
            r.iteration,
            csv_value(r0),
            csv_value(r1),
            csv_value(r.rms_a),
            csv_value(r.rms_f),
            csv_value(r.max_ratio())
        );
    }
    log
}

fn cut_x0(pair: &CoeffPair) -> String {
    let spec = *pair.spec();
    let mut csv = String::from("y,a,f\n");
    for i in 0..spec.n() {
        let y = spec.coord(i);
        let _ = writeln!(csv, "{y:e},{:e},{:e}", pair.a().sample(0.0, y), pair.f().sample(0.0, y));
    }
    csv
}

pub fn cmd_recon(args: &ReconArgs) -> Result<()> {
    let data = MeasurementPair::new(read_sinogram(&args.a0)?, read_sinogram(&args.a1)?, args.c_scatter)?;
    let truth = match (&args.truth_a, &args.truth_f) {
        (Some(a), Some(f)) => Some(CoeffPair::new(read_field(a)?, read_field(f)?)?),
        _ => None,
    };
    let mut cfg = ReconConfig::new(*data.spec(), *data.angles());
    cfg.iters = args.iters;
    cfg.neumann_terms = args.neumann;
    cfg.mollifier_width_cells = args.eps_cells;
    cfg.c_scatter = args.c_scatter;
    cfg.m_floor_rel = args.m_floor_rel;
    cfg.project_nonneg = args.project_nonneg;
    if let Some(t) = &truth {
        t.spec().check_same(data.spec())?;
    }
    let state = reconstruct(&data, &cfg, truth.as_ref())?;
    write_field(&args.out_a, state.iterate.a())?;
    write_field(&args.out_f, state.iterate.f())?;
    write_bytes(&args.log, format_log(&state).as_bytes())?;
    if let Some(path) = &args.cut_x0 {
        write_bytes(path, cut_x0(&state.iterate).as_bytes())?;
    }
    Ok(())
}

pub fn cmd_metrics(args: &MetricsArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let rec = read_field(&args.rec)?;
    let truth = read_field(&args.truth)?;
    let rms = rms_error(&rec, &truth)?;
    writeln!(out, "{}", four_significant(rms))?;
    Ok(())
}

pub fn cmd_export_pgm(args: &ExportArgs) -> Result<()> {
    let bytes = read_bytes(&args.input)?;
    let rows = if bytes.starts_with(FIELD_MAGIC.as_bytes()) {
        field_rows(
            &decode_field(&bytes).map_err(|e| annotate(e, &args.input))?,
            args.crop_unit_square,
        )
    } else if bytes.starts_with(SINOGRAM_MAGIC.as_bytes()) {
        sinogram_rows(
            &decode_sinogram(&bytes).map_err(|e| annotate(e, &args.input))?,
            args.crop_unit_square,
        )
    } else {
        return Err(format_err(format!(
            "{}: neither a field nor a sinogram file",
            args.input.display()
        )));
    };
    let mut file = fs::File::create(&args.out)?;
    file.write_all(&encode_pgm(&rows))?;
    Ok(())
}
