use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use homodyne::formats::{self, Header, CONVENTION, FORMAT_VERSION};
use homodyne::patterns::{Precision, RangeMode, DEFAULT_SEED_FLOOR};
use homodyne::reconstruct::{
    block_statistics, check_normalization, reconstruct, BetaPolicy, DensityMatrixEstimate,
    Estimator, ReconConfig,
};
use homodyne::simulate::{compare, make_state, simulate, SimulationPlan, RNG_NAME};
use homodyne::wigner::{polar_grid, wigner_polar, DiagonalDensityMatrix, LambdaMethod, WignerOptions};
use homodyne::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{require, ErrorMode, EstimatorName, RunConfig};

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = require(&cfg.output, "output")?;
    fs::create_dir_all(&out)?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    formats::write_text(path, &text)
}

fn truth_matrix(coeffs: &[Complex64], m: usize) -> Array2<Complex64> {
    let c = |n: usize| coeffs.get(n).copied().unwrap_or_default();
    Array2::from_shape_fn((m, m), |(n, k)| c(n) * c(k).conj())
}

#[derive(Serialize)]
struct SimulationMetadata {
    format_version: &'static str,
    convention: &'static str,
    rng: &'static str,
    seed: u64,
    n_phi: usize,
    nsamples: usize,
    nblks: usize,
    total_samples: usize,
    cutoff: usize,
    truncation_deficit: f64,
    config: RunConfig,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let spec = require(&cfg.state, "state")?;
    let cutoff = require(&cfg.cutoff, "cutoff")?;
    let plan = SimulationPlan {
        nsamples: require(&cfg.nsamples, "nsamples")?,
        nblks: require(&cfg.nblks, "nblks")?,
        n_phi: require(&cfg.n_phi, "n_phi")?,
        seed: cfg.seed.unwrap_or(0),
        x_points: cfg.x_points,
    };
    plan.validate()?;
    let out = output_dir(cfg)?;
    let state = make_state(&spec, cutoff)?;
    let ds = simulate(&state, &plan)?;

    formats::write_samples(&out.join("samples.csv"), &ds)?;
    formats::write_state(&out.join("state.csv"), state.coeffs())?;
    let mut echo = cfg.clone();
    echo.output = None;
    echo.seed = Some(plan.seed);
    write_json(
        &out.join("metadata.json"),
        &SimulationMetadata {
            format_version: FORMAT_VERSION,
            convention: CONVENTION,
            rng: RNG_NAME,
            seed: plan.seed,
            n_phi: plan.n_phi,
            nsamples: plan.nsamples,
            nblks: plan.nblks,
            total_samples: ds.len(),
            cutoff,
            truncation_deficit: state.deficit(),
            config: echo,
        },
    )?;
    println!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct TruthReport {
    max_z_re: f64,
    max_z_im: f64,
    max_z_diagonal: f64,
    max_abs_deviation: f64,
}

#[derive(Serialize)]
struct ReconReport {
    format_version: &'static str,
    convention: &'static str,
    input: String,
    estimator: EstimatorName,
    n_bin: Option<usize>,
    errors: ErrorMode,
    cutoff: usize,
    n_samples: usize,
    n_phi: usize,
    n_blocks: usize,
    beta: f64,
    precision: Precision,
    range: RangeMode,
    trace: f64,
    trace_err: f64,
    compatible: bool,
    timing_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<TruthReport>,
}

fn max_diagonal_z(est: &DensityMatrixEstimate, truth: &Array2<Complex64>) -> f64 {
    (0..est.cutoff())
        .map(|n| {
            let d = (est.rho[[n, n]].re - truth[[n, n]].re).abs();
            let e = est.err_re[[n, n]];
            if e > 0.0 {
                d / e
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn write_estimate(dir: &Path, est: &DensityMatrixEstimate) -> Result<()> {
    let (re, im) = formats::complex_to_strings(&est.rho, "rho");
    formats::write_text(&dir.join("rho_re.csv"), &re)?;
    formats::write_text(&dir.join("rho_im.csv"), &im)?;
    formats::write_matrix(&dir.join("err_re.csv"), &est.err_re, "err_re")?;
    formats::write_matrix(&dir.join("err_im.csv"), &est.err_im, "err_im")?;
    Ok(())
}

pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<()> {
    let input = require(&cfg.input, "input")?;
    let cutoff = require(&cfg.cutoff, "cutoff")?;
    let ds = formats::read_samples(&input)?;
    let truth = match &cfg.truth {
        Some(p) => Some(truth_matrix(&formats::read_state(p)?, cutoff)),
        None => None,
    };
    let estimator = cfg.estimator.unwrap_or(EstimatorName::Binned);
    let runs: Vec<Estimator> = match estimator {
        EstimatorName::Unbinned => vec![Estimator::Unbinned],
        EstimatorName::Binned => {
            let list = require(&cfg.n_bin, "n_bin")?;
            if list.is_empty() {
                return Err(Error::InvalidArgument("n_bin list is empty".into()));
            }
            list.into_iter().map(|n_bin| Estimator::Binned { n_bin }).collect()
        }
    };
    let errors = cfg.errors.unwrap_or(if ds.n_blocks() >= 2 {
        ErrorMode::Blocks
    } else {
        ErrorMode::PerSample
    });
    let out = output_dir(cfg)?;
    let nested = runs.len() > 1;

    for est_kind in runs {
        let rcfg = ReconConfig {
            cutoff,
            estimator: est_kind,
            beta: cfg.beta.unwrap_or(BetaPolicy::Heuristic),
            precision: cfg.precision.unwrap_or_default(),
            range: cfg.range.unwrap_or_default(),
            seed_floor: cfg.seed_floor.unwrap_or(DEFAULT_SEED_FLOOR),
            allow_phase_aliasing: cfg.allow_phase_aliasing.unwrap_or(false),
        };
        let start = Instant::now();
        let est = match errors {
            ErrorMode::Blocks => block_statistics(&ds, &rcfg)?,
            ErrorMode::PerSample => reconstruct(&ds, &rcfg)?,
        };
        let timing_seconds = start.elapsed().as_secs_f64();
        let norm = check_normalization(&est);
        let n_bin = match est_kind {
            Estimator::Binned { n_bin } => Some(n_bin),
            Estimator::Unbinned => None,
        };
        let dir = match n_bin {
            Some(n) if nested => out.join(format!("nbin-{n}")),
            _ => out.clone(),
        };
        fs::create_dir_all(&dir)?;
        write_estimate(&dir, &est)?;
        let truth_report = truth.as_ref().map(|t| {
            let (max_z_re, max_z_im, max_abs_deviation) = compare(&est, t);
            TruthReport {
                max_z_re,
                max_z_im,
                max_z_diagonal: max_diagonal_z(&est, t),
                max_abs_deviation,
            }
        });
        let report = ReconReport {
            format_version: FORMAT_VERSION,
            convention: CONVENTION,
            input: input.display().to_string(),
            estimator,
            n_bin,
            errors,
            cutoff,
            n_samples: ds.len(),
            n_phi: ds.n_phi(),
            n_blocks: ds.n_blocks(),
            beta: est.meta.beta,
            precision: rcfg.precision,
            range: rcfg.range,
            trace: norm.trace,
            trace_err: norm.trace_err,
            compatible: norm.compatible,
            timing_seconds,
            truth: truth_report,
        };
        write_json(&dir.join("report.json"), &report)?;
        println!(
            "{}: trace = {:.6} ± {:.2e} ({}) in {:.2} s",
            dir.display(),
            norm.trace,
            norm.trace_err,
            if norm.compatible { "compatible" } else { "NOT compatible" },
            timing_seconds
        );
    }
    Ok(())
}

fn method_name(m: LambdaMethod) -> &'static str {
    match m {
        LambdaMethod::Direct => "direct",
        LambdaMethod::Recurrence1 => "1",
        LambdaMethod::Recurrence2 => "2",
    }
}

/// A reconstruction directory (`rho_re.csv`, `rho_im.csv`) or a state file.
fn read_density_matrix(input: &Path, cutoff: Option<usize>) -> Result<Array2<Complex64>> {
    if input.is_dir() {
        let rho = formats::read_complex(&input.join("rho_re.csv"), &input.join("rho_im.csv"))?;
        return Ok(match cutoff {
            Some(m) if m < rho.nrows() => rho.slice(ndarray::s![..m, ..m]).to_owned(),
            _ => rho,
        });
    }
    let coeffs = formats::read_state(input)?;
    Ok(truth_matrix(&coeffs, cutoff.unwrap_or(coeffs.len())))
}

pub fn cmd_wigner(cfg: &RunConfig) -> Result<()> {
    let input = require(&cfg.input, "input")?;
    let rho = read_density_matrix(&input, cfg.cutoff)?;
    let diag = DiagonalDensityMatrix::from_matrix(&rho)?;
    let m = diag.cutoff();
    let n_r = cfg.n_r.unwrap_or(101);
    let n_theta = cfg.n_theta.unwrap_or(64);
    let (mut r, theta) = polar_grid(m, n_r, n_theta)?;
    if let Some(r_max) = cfg.r_max {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("r_max = {r_max} must be positive")));
        }
        let scale = r_max / r.last().copied().unwrap_or(1.0);
        r.iter_mut().for_each(|v| *v *= scale);
    }
    let method = cfg.method.unwrap_or_default();
    let opts = WignerOptions {
        method,
        precision: cfg.precision.unwrap_or_default(),
        range: cfg.range.unwrap_or_default(),
    };
    let grid = wigner_polar(&diag, &r, &theta, &opts)?;
    if !grid.is_finite() {
        return Err(Error::Numerical("Wigner grid contains non-finite values".into()));
    }
    let out = output_dir(cfg)?;
    formats::write_wigner(&out.join("wigner.csv"), &grid, method_name(method))?;
    if let Some(n) = cfg.cartesian {
        let extent = cfg.cartesian_extent.unwrap_or(*r.last().unwrap());
        let cart = grid.to_cartesian(n, extent)?;
        formats::write_cartesian(&out.join("wigner_cartesian.csv"), &cart)?;
    }
    let integral = grid.integrate()?;
    println!(
        "wigner M = {m}, {n_r} x {n_theta} grid, max |W| = {:.6}, integral = {:.6}",
        grid.max_abs(),
        integral
    );
    Ok(())
}

struct ReportRow {
    dir: PathBuf,
    json: serde_json::Value,
    truth_z: Option<(f64, f64)>,
}

fn find_reports(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    if root.join("report.json").is_file() {
        dirs.push(root.to_path_buf());
    }
    if root.is_dir() {
        let mut subs: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("report.json").is_file())
            .collect();
        subs.sort();
        dirs.extend(subs);
    }
    if dirs.is_empty() {
        return Err(Error::Data(format!("no report.json under {}", root.display())));
    }
    Ok(dirs)
}

fn numeric_key(dir: &Path) -> (u64, PathBuf) {
    let n = dir
        .file_name()
        .and_then(|s| s.to_str())
        .and_then(|s| s.rsplit('-').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    (n, dir.to_path_buf())
}

fn field(v: &serde_json::Value, key: &str) -> String {
    match v.get(key) {
        Some(serde_json::Value::Null) | None => "-".into(),
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(x) => x.to_string(),
    }
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let root = require(&cfg.input, "input")?;
    let mut dirs = find_reports(&root)?;
    dirs.sort_by_key(|d| numeric_key(d));
    let truth = match &cfg.truth {
        Some(p) => Some(formats::read_state(p)?),
        None => None,
    };
    let mut rows = Vec::new();
    for dir in dirs {
        let path = dir.join("report.json");
        let text = formats::read_text(&path)?;
        let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })?;
        let truth_z = match &truth {
            Some(c) => {
                let rho = formats::read_complex(&dir.join("rho_re.csv"), &dir.join("rho_im.csv"))?;
                let err = formats::read_matrix(&dir.join("err_re.csv"))?;
                let m = rho.nrows();
                let t = truth_matrix(c, m);
                let mut sum = 0.0;
                let mut zmax = 0.0f64;
                for n in 0..m {
                    let d = (rho[[n, n]].re - t[[n, n]].re).abs();
                    sum += d;
                    if err[[n, n]] > 0.0 {
                        zmax = zmax.max(d / err[[n, n]]);
                    }
                }
                Some((sum, zmax))
            }
            None => None,
        };
        rows.push(ReportRow { dir, json, truth_z });
    }

    let mut header = Header::new("report").with("runs", rows.len());
    if let Some(p) = &cfg.truth {
        header = header.with("truth", p.display());
    }
    let mut csv = header.render();
    csv.push_str("dir,estimator,n_bin,errors,trace,trace_err,compatible,diag_abs_error,diag_max_z\n");
    for row in &rows {
        let (s, z) = match row.truth_z {
            Some((s, z)) => (s.to_string(), z.to_string()),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            row.dir.display(),
            field(&row.json, "estimator"),
            field(&row.json, "n_bin"),
            field(&row.json, "errors"),
            field(&row.json, "trace"),
            field(&row.json, "trace_err"),
            field(&row.json, "compatible"),
            s,
            z
        );
    }
    print!("{csv}");
    if let Some(out) = &cfg.output {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        formats::write_text(out, &csv)?;
    }
    Ok(())
}
