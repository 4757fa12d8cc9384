//! Property checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

use homodyne::patterns::{PatternConfig, PatternKernel};
use homodyne::reconstruct::{bin, estimate_unbinned, phase_dft, reconstruct, Estimator, QuadratureDataset, ReconConfig};
use homodyne::simulate::{make_state, simulate, SimulationPlan, StateSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

/// Runner with a fixed seed and no failure files.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

/// `f_{n,m}(-x) = (-1)^{n+m} f_{n,m}(x)`, bit for bit.
pub fn parity(m: usize, x: f64) -> Result<(), TestCaseError> {
    let cfg = PatternConfig::new(m, 1e-3).unwrap();
    let k = PatternKernel::<f64>::new(&cfg).unwrap();
    let (p, q) = (k.workspace(x).unwrap(), k.workspace(-x).unwrap());
    for n in 0..m {
        for j in n..m {
            let a = p.pattern(n, j).unwrap();
            let b = q.pattern(n, j).unwrap();
            let s = if (n + j) % 2 == 0 { 1.0 } else { -1.0 };
            if b != s * a {
                return Err(fail(format!("x = {x}, ({n}, {j}): {a} vs {b}")));
            }
        }
    }
    Ok(())
}

/// Pattern functions do not depend on the scale factor.
pub fn beta_invariance(m: usize, x: f64, ln_b1: f64, ln_b2: f64) -> Result<(), TestCaseError> {
    let k1 = PatternKernel::<f64>::new(&PatternConfig::new(m, ln_b1.exp()).unwrap()).unwrap();
    let k2 = PatternKernel::<f64>::new(&PatternConfig::new(m, ln_b2.exp()).unwrap()).unwrap();
    let (p, q) = (k1.workspace(x).unwrap(), k2.workspace(x).unwrap());
    for n in 0..m {
        for j in n..m {
            let a = p.pattern(n, j).unwrap();
            let b = q.pattern(n, j).unwrap();
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(fail(format!("x = {x}, ({n}, {j}): {a} vs {b}")));
            }
        }
    }
    Ok(())
}

/// Single-block gridded dataset, values dealt round-robin over the phases.
pub fn dataset(n_phi: usize, values: &[f64]) -> QuadratureDataset {
    QuadratureDataset::gridded(
        n_phi,
        1,
        values.iter().enumerate().map(|(k, &v)| (k % n_phi, 0, v)),
    )
    .unwrap()
}

/// Estimates are exactly Hermitian with symmetric error matrices.
pub fn hermiticity(m: usize, n_bin: Option<usize>, values: &[f64]) -> Result<(), TestCaseError> {
    let ds = dataset(m, values);
    let est = match n_bin {
        Some(n_bin) => reconstruct(&ds, &ReconConfig::new(m, Estimator::Binned { n_bin })).unwrap(),
        None => {
            let cfg = ReconConfig::new(m, Estimator::Unbinned);
            estimate_unbinned(&ds, &cfg.pattern_config(&ds).unwrap()).unwrap()
        }
    };
    for n in 0..m {
        if est.rho[[n, n]].im != 0.0 || est.err_im[[n, n]] != 0.0 {
            return Err(fail(format!("diagonal {n} has an imaginary part")));
        }
        for j in 0..m {
            if est.rho[[n, j]] != est.rho[[j, n]].conj()
                || est.err_re[[n, j]] != est.err_re[[j, n]]
                || est.err_im[[n, j]] != est.err_im[[j, n]]
            {
                return Err(fail(format!("({n}, {j}) breaks Hermiticity")));
            }
        }
    }
    Ok(())
}

/// The FFT spectrum matches a direct DFT and satisfies `Ŝ_{n_φ-d} = conj Ŝ_d`.
pub fn dft_conjugate(n_phi: usize, n_bin: usize, values: &[f64]) -> Result<(), TestCaseError> {
    let ds = dataset(n_phi, values);
    let sino = bin(&ds, n_bin, None).unwrap();
    let spec = phase_dft(&sino);
    for i in 0..n_bin {
        for d in 0..n_phi {
            let mut direct = Complex64::new(0.0, 0.0);
            for j in 0..n_phi {
                let t = -2.0 * PI * (j * d) as f64 / n_phi as f64;
                direct += sino.freq[[j, i]] * Complex64::from_polar(1.0, t);
            }
            direct /= n_phi as f64;
            let got = spec.shat[[d, i]];
            if (got - direct).norm() > 1e-12 {
                return Err(fail(format!("d = {d}, bin {i}: {got} vs {direct}")));
            }
            if spec.shat[[(n_phi - d) % n_phi, i]] != got.conj() {
                return Err(fail(format!("d = {d}, bin {i}: not conjugate symmetric")));
            }
        }
    }
    Ok(())
}

/// Identical seeds give identical datasets for any thread count.
pub fn sampler_determinism(seed: u64, n_phi: usize, alpha: f64) -> Result<(), TestCaseError> {
    let state = make_state(&StateSpec::Cat { re: alpha, im: 0.0 }, 24).unwrap();
    let plan = SimulationPlan {
        nsamples: 40,
        nblks: 2,
        n_phi,
        seed,
        x_points: Some(2049),
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&state, &plan).unwrap())
    };
    let a = run(1);
    if a != run(4) || a != simulate(&state, &plan).unwrap() {
        return Err(fail(format!("seed {seed}: datasets differ")));
    }
    let mut other = plan.clone();
    other.seed = seed.wrapping_add(1);
    if simulate(&state, &other).unwrap() == a {
        return Err(fail(format!("seed {seed}: next seed gives the same data")));
    }
    Ok(())
}

pub fn values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, 2..max_len)
}

pub fn suite_parity() -> Result<(), String> {
    check(48, (1usize..48, 0.0f64..9.0), |(m, x)| parity(m, x))
}

pub fn suite_beta() -> Result<(), String> {
    check(48, (1usize..40, -7.0f64..7.0, -60.0f64..0.0, -60.0f64..0.0), |(m, x, a, b)| {
        beta_invariance(m, x, a, b)
    })
}

pub fn suite_hermiticity() -> Result<(), String> {
    check(32, (2usize..12, prop::option::of(4usize..64), values(200)), |(m, n_bin, v)| {
        hermiticity(m, n_bin, &v)
    })
}

pub fn suite_dft() -> Result<(), String> {
    check(32, (1usize..20, 1usize..16, values(120)), |(n_phi, n_bin, v)| {
        dft_conjugate(n_phi, n_bin, &v)
    })
}

pub fn suite_sampler() -> Result<(), String> {
    check(12, (any::<u64>(), 1usize..24, 0.0f64..3.0), |(s, n_phi, a)| {
        sampler_determinism(s, n_phi, a)
    })
}

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: [Suite; 5] = [
    ("parity symmetry", suite_parity),
    ("beta invariance", suite_beta),
    ("Hermiticity", suite_hermiticity),
    ("DFT conjugate symmetry", suite_dft),
    ("sampler determinism", suite_sampler),
];
