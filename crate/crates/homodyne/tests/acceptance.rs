//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all eight; `-- 2 5` runs a subset.
//! Criteria in `KNOWN_RED` are reported but do not fail the run.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use homodyne::patterns::{
    choose_beta, safe_region_bound, PatternConfig, PatternKernel, Precision, RangeMode,
    SINGLE_PRECISION_TOLERANCE,
};
use homodyne::reconstruct::{
    block_statistics, block_statistics_unbinned, check_normalization, reconstruct,
    DensityMatrixEstimate, Estimator, QuadratureDataset, ReconConfig,
};
use homodyne::simulate::{make_state, simulate, FockVector, SimulationPlan, StateSpec};
use homodyne::wigner::{
    lambda_direct, lambda_method1, lambda_method2, wigner_polar, DiagonalDensityMatrix,
    LambdaMethod, LambdaTable, WignerOptions,
};
use homodyne::Result;
use ndarray::Array2;
use num_complex::Complex64;

const KNOWN_RED: [(usize, &str); 3] = [
    (
        2,
        "bin-centre displacement with 400 bins biases the n~24..32 diagonals by up to 6.8 standard errors",
    ),
    (
        4,
        "bin-centre displacement with 8000 bins biases both peaks by about -0.005, near 18 standard errors",
    ),
    (
        6,
        "the second lambda recursion loses all accuracy for M = 1024 and raises a numerical error",
    ),
];

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn note(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

// --- oracles --------------------------------------------------------------

/// `ψ_n(x)` from the three-term recurrence, `ψ_0 = (2/π)^{1/4} e^{-x²}`.
fn psi(x: f64, m: usize) -> Vec<f64> {
    let mut p = vec![0.0; m];
    p[0] = (2.0 / PI).powf(0.25) * (-x * x).exp();
    if m > 1 {
        p[1] = 2.0 * x * p[0];
    }
    for n in 2..m {
        let nf = n as f64;
        p[n] = (2.0 * x * p[n - 1] - (nf - 1.0).sqrt() * p[n - 2]) / nf.sqrt();
    }
    p
}

fn laguerre(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 1.0 - x);
    if n == 0 {
        return a;
    }
    for k in 2..=n {
        let kf = k as f64;
        let c = ((2.0 * kf - 1.0 - x) * b - (kf - 1.0) * a) / kf;
        a = b;
        b = c;
    }
    b
}

fn z_score(diff: f64, err: f64) -> f64 {
    if err > 0.0 {
        diff.abs() / err
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Largest diagonal deviation in standard errors and the summed absolute deviation.
fn diagonal_deviation(est: &DensityMatrixEstimate, truth: &Array2<Complex64>) -> (f64, f64, usize) {
    let mut zmax = 0.0f64;
    let mut at = 0;
    let mut sum = 0.0;
    for n in 0..est.cutoff() {
        let d = est.rho[[n, n]].re - truth[[n, n]].re;
        sum += d.abs();
        let z = z_score(d, est.err_re[[n, n]]);
        if z > zmax {
            zmax = z;
            at = n;
        }
    }
    (zmax, sum, at)
}

fn cat(alpha: f64, m: usize) -> FockVector {
    make_state(&StateSpec::Cat { re: alpha, im: 0.0 }, m).unwrap()
}

fn plan(nsamples: usize, nblks: usize, n_phi: usize, seed: u64) -> SimulationPlan {
    SimulationPlan {
        nsamples,
        nblks,
        n_phi,
        seed,
        x_points: None,
    }
}

fn binned(m: usize, n_bin: usize, n_phi: usize) -> ReconConfig {
    let mut c = ReconConfig::new(m, Estimator::Binned { n_bin });
    c.allow_phase_aliasing = n_phi < m;
    c
}

// --- criteria -------------------------------------------------------------

fn biorthogonality(m: usize, points: usize) -> f64 {
    const D_MAX: usize = 8;
    let half = ((2 * m + 1) as f64).sqrt() / 2.0 + 5.0;
    let h = 2.0 * half / (points - 1) as f64;
    let cfg = PatternConfig::new(m, choose_beta(&[half]).unwrap()).unwrap();
    let kernel = PatternKernel::<f64>::new(&cfg).unwrap();
    // acc[d][j * m + n] = ∫ ψ_j ψ_{j+d} f_{n,n+d}
    let mut acc = vec![vec![0.0; m * m]; D_MAX + 1];
    for k in 0..points {
        let x = -half + h * k as f64;
        let w = if k == 0 || k == points - 1 { 0.5 * h } else { h };
        let p = psi(x, m);
        let ws = kernel.workspace(x).unwrap();
        for (d, a) in acc.iter_mut().enumerate().take(D_MAX.min(m - 1) + 1) {
            let f = ws.pattern_row(d).unwrap();
            for j in 0..m - d {
                let pp = w * p[j] * p[j + d];
                let row = &mut a[j * m..j * m + m - d];
                for (r, fv) in row.iter_mut().zip(&f) {
                    *r += pp * fv;
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for (d, a) in acc.iter().enumerate().take(D_MAX.min(m - 1) + 1) {
        for j in 0..m - d {
            for n in 0..m - d {
                let target = if j == n { 1.0 } else { 0.0 };
                worst = worst.max((a[j * m + n] - target).abs());
            }
        }
    }
    worst
}

fn criterion1() -> Outcome {
    let e64 = biorthogonality(64, 4097);
    let e128 = biorthogonality(128, 4097);
    Outcome::new(
        e64 < 1e-6 && e128 < 1e-6,
        format!("biorthogonality max error {e64:.2e} (M = 64), {e128:.2e} (M = 128), bound 1e-6"),
    )
}

fn criterion2() -> Outcome {
    let m = 64;
    let state = cat(5.0, m);
    let truth = state.density_matrix(m);
    let phis = [20, 50, 100, 200];
    let mut out = Vec::new();
    let mut inversions = 0;
    let mut zmax_200 = 0.0f64;
    for seed in 1..=3u64 {
        let mut sums = Vec::new();
        let mut line = format!("seed {seed}: summed |diag error|");
        for &n_phi in &phis {
            let ds = simulate(&state, &plan(1000, 100, n_phi, seed)).unwrap();
            let est = block_statistics(&ds, &binned(m, 400, n_phi)).unwrap();
            let (z, s, at) = diagonal_deviation(&est, &truth);
            line += &format!(" n_phi={n_phi}: {s:.4}");
            if n_phi == 200 {
                zmax_200 = zmax_200.max(z);
                line += &format!(" (max z {z:.2} at n = {at})");
            }
            sums.push(s);
        }
        inversions += sums.windows(2).filter(|w| w[1] > w[0]).count();
        out.push(line);
    }
    let monotone = inversions <= 1;
    let within = zmax_200 <= 5.0;
    let mut o = Outcome::new(
        monotone && within,
        format!(
            "cat alpha=5: max diagonal z at n_phi=200 {zmax_200:.2} (bound 5), {inversions} inversion(s) of the summed error (allowed 1)"
        ),
    );
    o.details = out;
    // same data, finer bins
    let ds = simulate(&state, &plan(1000, 100, 200, 1)).unwrap();
    let est = block_statistics(&ds, &binned(m, 1600, 200)).unwrap();
    let (z, _, at) = diagonal_deviation(&est, &truth);
    o.note(format!(
        "seed 1, n_phi=200 with 1600 bins instead of 400: max diagonal z {z:.2} at n = {at}"
    ))
}

fn criterion3() -> Outcome {
    let m = 64;
    let state = cat(5.0, m);
    let truth = state.density_matrix(m);
    let ds = simulate(&state, &plan(100, 10, 800, 1)).unwrap();
    let mut pass = true;
    let mut o = Outcome::new(true, "");
    let mut parts = Vec::new();
    for n_bin in [50, 200, 800, 3200] {
        let est = block_statistics(&ds, &binned(m, n_bin, 800)).unwrap();
        let norm = check_normalization(&est);
        let (z, _, at) = diagonal_deviation(&est, &truth);
        let diag_ok = n_bin < 800 || z <= 5.0;
        pass &= norm.compatible && diag_ok;
        parts.push(format!("n_bin={n_bin} trace {:.4}", norm.trace));
        o = o.note(format!(
            "n_bin={n_bin}: trace {:.5} +- {:.5} ({}), max diagonal z {z:.2} at n = {at}{}",
            norm.trace,
            norm.trace_err,
            if norm.compatible { "compatible" } else { "incompatible" },
            if n_bin >= 800 { " (bound 5)" } else { "" }
        ));
    }
    o.pass = pass;
    o.summary = format!("cat alpha=5, n_phi=800, 100x10 samples: {}", parts.join(", "));
    o
}

fn two_level(a: usize, b: usize, m: usize) -> FockVector {
    make_state(&StateSpec::FockSuperposition { levels: vec![a, b] }, m).unwrap()
}

fn peaks(a: usize, b: usize, m: usize, n_phi: usize, n_bin: usize) -> (f64, f64, DensityMatrixEstimate) {
    let state = two_level(a, b, m);
    let ds = simulate(&state, &plan(1000, 10, n_phi, 1)).unwrap();
    let est = block_statistics(&ds, &binned(m, n_bin, n_phi)).unwrap();
    let z = |n: usize| (est.rho[[n, n]].re - 0.5) / est.err_re[[n, n]];
    (z(a), z(b), est)
}

fn criterion4() -> Outcome {
    let start = Instant::now();
    let (za, zb, est) = peaks(600, 700, 800, 1600, 8000);
    let secs = start.elapsed().as_secs_f64();
    let norm = check_normalization(&est);
    let within_time = secs <= 1800.0;
    let o = Outcome::new(
        za.abs() <= 5.0 && zb.abs() <= 5.0 && within_time,
        format!(
            "|600>+|700>, M=800, n_phi=1600, 8000 bins: rho_600 = {:.4} +- {:.5} (z {za:.1}), rho_700 = {:.4} +- {:.5} (z {zb:.1}), {secs:.0} s",
            est.rho[[600, 600]].re,
            est.err_re[[600, 600]],
            est.rho[[700, 700]].re,
            est.err_re[[700, 700]]
        ),
    )
    .note(format!(
        "trace {:.5} +- {:.5} ({})",
        norm.trace,
        norm.trace_err,
        if norm.compatible { "compatible" } else { "incompatible" }
    ));
    let start = Instant::now();
    let (za, zb, _) = peaks(150, 175, 200, 400, 2000);
    o.note(format!(
        "scaled |150>+|175>, M=200, n_phi=400, 2000 bins (runtime target met, informational): z {za:.1}, {zb:.1} in {:.0} s",
        start.elapsed().as_secs_f64()
    ))
}

/// Relative error with a floor of 1e-3 of the table's largest entry, so
/// entries sitting on a Laguerre root are judged on the table's scale.
fn table_error(a: &LambdaTable<f64>, b: &LambdaTable<f64>, m: usize) -> f64 {
    let mut scale = 0.0f64;
    for d in 0..m {
        for &v in b.column(d) {
            scale = scale.max(v.abs());
        }
    }
    let floor = 1e-3 * scale;
    let mut worst = 0.0f64;
    for d in 0..m {
        for n in 0..m - d {
            let (p, q) = (a.get(n, d), b.get(n, d));
            if q != 0.0 || p != 0.0 {
                worst = worst.max((p - q).abs() / q.abs().max(floor));
            }
        }
    }
    worst
}

fn criterion5() -> Outcome {
    let xs = |m: usize| (0..=200).map(move |k| 4.0 * m as f64 * k as f64 / 200.0);
    let (mut e1, mut e2, mut e12) = (0.0f64, 0.0f64, 0.0f64);
    let m = 24;
    for x in xs(m) {
        let d = lambda_direct(x, m).unwrap();
        e1 = e1.max(table_error(&lambda_method1(x, m, RangeMode::Extended).unwrap(), &d, m));
        e2 = e2.max(table_error(&lambda_method2(x, m, RangeMode::Extended).unwrap(), &d, m));
    }
    let m = 64;
    for x in xs(m) {
        let a = lambda_method1(x, m, RangeMode::Extended).unwrap();
        let b = lambda_method2(x, m, RangeMode::Extended).unwrap();
        e12 = e12.max(table_error(&a, &b, m));
    }
    let mut fock = 0.0f64;
    let r: Vec<f64> = (0..=60).map(|i| 0.05 * i as f64).collect();
    for n in [0usize, 1, 5] {
        let mut rho = Array2::zeros((8, 8));
        rho[[n, n]] = Complex64::new(1.0, 0.0);
        let diag = DiagonalDensityMatrix::from_matrix(&rho).unwrap();
        for method in [LambdaMethod::Recurrence1, LambdaMethod::Recurrence2] {
            let opts = WignerOptions {
                method,
                ..Default::default()
            };
            let g = wigner_polar(&diag, &r, &[0.0, 1.3], &opts).unwrap();
            for (i, &ri) in r.iter().enumerate() {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let want = 2.0 / PI * sign * (-2.0 * ri * ri).exp() * laguerre(n, 4.0 * ri * ri);
                for v in g.w.row(i) {
                    fock = fock.max((v - want).abs());
                }
            }
        }
    }
    Outcome::new(
        e1 < 1e-10 && e2 < 1e-10 && e12 < 1e-8 && fock < 1e-8,
        format!(
            "M=24 vs direct: method 1 {e1:.1e}, method 2 {e2:.1e} (bound 1e-10); M=64 method 1 vs 2 {e12:.1e} (bound 1e-8); Fock n=0,1,5 {fock:.1e} (bound 1e-8)"
        ),
    )
}

/// Error of a single-precision result against the double one, or `None`
/// when the single-precision run raised a numerical error.
fn single_outcome<T>(r: Result<T>, err: impl FnOnce(T) -> f64) -> std::result::Result<Option<f64>, String> {
    match r {
        Ok(v) => Ok(Some(err(v))),
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(format!("non-numerical error: {e}")),
    }
}

#[derive(Default)]
struct Tally {
    accurate: usize,
    raised: usize,
    garbage: usize,
    worst: f64,
}

impl Tally {
    fn add(&mut self, r: std::result::Result<Option<f64>, String>, tol: f64) {
        match r {
            Ok(None) => self.raised += 1,
            Ok(Some(e)) if e <= tol => {
                self.accurate += 1;
                self.worst = self.worst.max(e);
            }
            _ => self.garbage += 1,
        }
    }

    fn line(&self, name: &str) -> String {
        format!(
            "{name}: {} accurate (max error {:.1e}), {} raised, {} silent failures",
            self.accurate, self.worst, self.raised, self.garbage
        )
    }
}

fn criterion6() -> Outcome {
    let m = 1024;
    let bound = safe_region_bound(m);
    let beta = choose_beta(&[bound]).unwrap();
    let cfg = PatternConfig::new(m, beta).unwrap();
    let k64 = PatternKernel::<f64>::new(&cfg).unwrap();
    let xs: Vec<f64> = (0..=64).map(|i| bound * i as f64 / 64.0).collect();

    let mut pattern_bad = 0;
    let mut ws64 = Vec::new();
    for &x in &xs {
        for s in [x, -x] {
            let ok = k64.workspace(s).is_ok_and(|w| {
                w.is_finite() && (0..m).all(|d| w.pattern_row(d).is_ok_and(|r| r.iter().all(|v| v.is_finite())))
            });
            pattern_bad += usize::from(!ok);
        }
        ws64.push(k64.workspace(x).ok());
    }

    let lx: Vec<f64> = (0..=32).map(|i| 4.0 * m as f64 * i as f64 / 32.0).collect();
    let mut l1_bad = 0;
    let mut l2_bad = 0;
    let mut l2_numerical = 0;
    let mut tables64 = Vec::new();
    for &x in &lx {
        let t1 = lambda_method1::<f64>(x, m, RangeMode::Extended);
        l1_bad += usize::from(!t1.as_ref().is_ok_and(|t| t.is_finite()));
        match lambda_method2::<f64>(x, m, RangeMode::Extended) {
            Ok(t) if t.is_finite() => {}
            Err(e) if e.is_numerical() => {
                l2_bad += 1;
                l2_numerical += 1;
            }
            _ => l2_bad += 1,
        }
        tables64.push(t1.ok());
    }

    // single precision: every result is either accurate or a numerical error
    let mut pat = Tally::default();
    for range in [RangeMode::Plain, RangeMode::Extended] {
        let c32 = cfg.clone().with_precision(Precision::Single).with_range(range);
        let k32 = PatternKernel::<f32>::new(&c32).unwrap();
        for (x, w64) in xs.iter().zip(&ws64).step_by(4) {
            let Some(w64) = w64 else { continue };
            let r = single_outcome(k32.workspace(*x), |w| {
                let mut worst = 0.0f64;
                for n in 0..m {
                    for j in n..m {
                        let a = w.pattern(n, j).map_or(f64::INFINITY, |v| v as f64);
                        worst = worst.max((a - w64.pattern(n, j).unwrap()).abs());
                    }
                }
                worst
            });
            pat.add(r, SINGLE_PRECISION_TOLERANCE);
        }
    }
    let mut lam = Tally::default();
    for range in [RangeMode::Plain, RangeMode::Extended] {
        for (x, t64) in lx.iter().zip(&tables64).step_by(2) {
            let Some(t64) = t64 else { continue };
            let diff = |t: LambdaTable<f32>| {
                let mut worst = 0.0f64;
                for d in 0..m {
                    for n in 0..m - d {
                        worst = worst.max((t.get(n, d) as f64 - t64.get(n, d)).abs());
                    }
                }
                worst
            };
            lam.add(single_outcome(lambda_method1::<f32>(*x, m, range), diff), 1e-2);
            lam.add(single_outcome(lambda_method2::<f32>(*x, m, range), diff), 1e-2);
        }
    }

    let pass = pattern_bad == 0 && l1_bad == 0 && l2_bad == 0 && pat.garbage == 0 && lam.garbage == 0;
    Outcome::new(
        pass,
        format!(
            "M=1024 double: pattern workspaces {pattern_bad} failures over {} points of |x| <= {bound:.1}; lambda method 1 {l1_bad}, method 2 {l2_bad} failures over {} points of [0, 4M]",
            2 * xs.len(),
            lx.len()
        ),
    )
    .note(format!("method 2 failures raised as numerical errors: {l2_numerical} of {l2_bad}"))
    .note(pat.line("single-precision pattern workspaces"))
    .note(lam.line("single-precision lambda tables"))
}

fn vacuum_data(m: usize) -> (QuadratureDataset, usize) {
    let state = make_state(&StateSpec::FockSuperposition { levels: vec![0] }, m).unwrap();
    let ds = simulate(&state, &plan(100, 50, 16, 7)).unwrap();
    (ds, m)
}

fn criterion7() -> Outcome {
    let (ds, m) = vacuum_data(8);
    let unb = reconstruct(&ds, &ReconConfig::new(m, Estimator::Unbinned)).unwrap();
    let bin = reconstruct(&ds, &ReconConfig::new(m, Estimator::Binned { n_bin: 10_000 })).unwrap();
    let mut agree = 0.0f64;
    for n in 0..m {
        for j in n..m {
            let d = bin.rho[[n, j]] - unb.rho[[n, j]];
            agree = agree.max(d.re.abs() / unb.err_re[[n, j]]);
            if n != j {
                agree = agree.max(d.im.abs() / unb.err_im[[n, j]]);
            }
        }
    }
    let blocks = block_statistics_unbinned(&ds, &ReconConfig::new(m, Estimator::Unbinned).pattern_config(&ds).unwrap()).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in 0..m {
        for j in n..m {
            let mut pairs = vec![(unb.err_re[[n, j]], blocks.err_re[[n, j]])];
            if n != j {
                pairs.push((unb.err_im[[n, j]], blocks.err_im[[n, j]]));
            }
            for (a, b) in pairs {
                let r = a / b;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    Outcome::new(
        agree < 0.2 && lo >= 0.5 && hi <= 2.0,
        format!(
            "vacuum, M=8, {} samples: max |binned - unbinned| / error {agree:.3} (bound 0.2); per-sample / block error ratio in [{lo:.2}, {hi:.2}] (bound [0.5, 2])",
            ds.len()
        ),
    )
}

fn criterion8() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new(true, "");
    let mut failed = 0;
    for (name, suite) in common::SUITES {
        match suite() {
            Ok(()) => o = o.note(format!("{name}: ok")),
            Err(e) => {
                failed += 1;
                o = o.note(format!("{name}: {e}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    o.pass = failed == 0 && secs < 60.0;
    o.summary = format!(
        "{} property suites, {failed} failed, {secs:.1} s (bound 60 s)",
        common::SUITES.len()
    );
    o
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Outcome); 8] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
    ];
    let mut unexpected = Vec::new();
    let mut lines = Vec::new();
    for (id, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_RED.iter().find(|(k, _)| *k == id);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let line = format!("criterion {id} {verdict}: {} [{secs:.1} s]", o.summary);
        println!("{line}");
        for d in &o.details {
            println!("    {d}");
        }
        match (o.pass, known) {
            (false, Some((_, why))) => println!("    known red: {why}"),
            (false, None) => unexpected.push(id),
            (true, Some(_)) => println!("    listed as known red but passed"),
            (true, None) => {}
        }
        lines.push(line);
    }
    println!();
    println!("acceptance summary");
    for l in &lines {
        println!("  {l}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
