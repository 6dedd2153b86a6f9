//! Numerical checks shared by `gammakde validate` and the acceptance tests.
//! Each returns a [`Check`] instead of panicking so a full table can be
//! printed.

use std::fmt;
use std::time::Instant;

use gammakde::bandwidth::{density_bandwidth, derivative_bandwidth};
use gammakde::quadrature::integrate_adaptive;
use gammakde::simulate::{mc_mise, mc_point_stats, BandwidthChoice, ExperimentConfig, MixingProcessSpec, Process};
use gammakde::theory::{bias_density, bias_derivative, cov_split_density, var_density, var_derivative};
use gammakde::{
    density_at, density_partial_at, field_on_grid, kernel_eval, kernel_grad_x, Bandwidth, Domain, EvalPoint,
    FieldKind, KernelPoint, Marginal, MixingProfile, ProductModel, Resolution, Sample, Target,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::naive;

/// Default seed for the Monte Carlo checks.
pub const DEFAULT_SEED: u64 = 20261015;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>3} {:<34} {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: &'static str, name: &'static str, body: impl FnOnce() -> anyhow::Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e:#}")),
    };
    Check {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// The kernel integrates to one in `t` on a grid of `(x, b)` including the
/// boundary strip.
pub fn kernel_normalization() -> Check {
    timed("1", "kernel normalization", || {
        let mut worst: f64 = 0.0;
        for &b in &[0.01, 0.1, 0.5] {
            for &x in &[0.0, 0.5 * b, b, 2.0 * b, 1.0, 5.0] {
                let p = KernelPoint::new(x, b)?;
                let (rho, _) = gammakde::rho(p);
                let mean = rho * b;
                let hi = mean + 60.0 * rho.sqrt() * b + 60.0 * b;
                // split at the mode so each panel sees a smooth integrand
                let mode = ((rho - 1.0) * b).max(0.0);
                let f = |t: f64| kernel_eval(t, p).unwrap_or(f64::NAN);
                let total = integrate_adaptive(f, 0.0, mode, 1e-13) + integrate_adaptive(f, mode, hi, 1e-13);
                worst = worst.max((total - 1.0).abs());
            }
        }
        Ok((worst <= 1e-8, format!("max |∫K - 1| = {worst:.2e} (tol 1e-8)")))
    })
}

fn rel_err(got: f64, fd: f64, scale: f64) -> f64 {
    (got - fd).abs() / got.abs().max(scale)
}

/// Analytic x-gradients against central differences on random interior
/// configurations.
pub fn gradient_consistency(seed: u64) -> Check {
    timed("2", "gradient consistency", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_kernel: f64 = 0.0;
        let mut worst_density: f64 = 0.0;
        let data: Vec<f64> = (0..200).map(|_| rng.random_range(0.05..6.0)).collect();
        for k in 0..100 {
            let b: f64 = rng.random_range(0.01..0.5);
            let x: f64 = rng.random_range(2.0 * b + 0.05..6.0);
            let width = (x * b).sqrt();
            let t: f64 = (x + rng.random_range(-2.0..2.0) * width).max(1e-3);
            let h = 1e-4 * width;
            let p = KernelPoint::new(x, b)?;
            let g = kernel_grad_x(t, p)?;
            let fd = (kernel_eval(t, KernelPoint::new(x + h, b)?)? - kernel_eval(t, KernelPoint::new(x - h, b)?)?)
                / (2.0 * h);
            // absolute floor: gradient scale K/√(xb) times 1e-3
            let floor = 1e-3 * kernel_eval(t, p)? / width;
            worst_kernel = worst_kernel.max(rel_err(g, fd, floor));

            let d = 1 + k % 3;
            let n = 40;
            let s = Sample::new(data[..n * d].to_vec(), n, d)?;
            let bw = Bandwidth::uniform(b, d)?;
            let mut pt: Vec<f64> = (0..d).map(|_| rng.random_range(2.0 * b + 0.05..4.0)).collect();
            let axis = rng.random_range(0..d);
            let g = density_partial_at(&s, &EvalPoint::new(pt.clone())?, &bw, axis)?;
            let hx = 1e-4 * (pt[axis] * b).sqrt();
            pt[axis] += hx;
            let up = density_at(&s, &EvalPoint::new(pt.clone())?, &bw)?;
            pt[axis] -= 2.0 * hx;
            let dn = density_at(&s, &EvalPoint::new(pt.clone())?, &bw)?;
            pt[axis] += hx;
            let f0 = density_at(&s, &EvalPoint::new(pt.clone())?, &bw)?;
            let floor = 1e-3 * f0 / (pt[axis] * b).sqrt();
            worst_density = worst_density.max(rel_err(g, (up - dn) / (2.0 * hx), floor));
        }
        let worst = worst_kernel.max(worst_density);
        Ok((
            worst <= 1e-5,
            format!("max rel err kernel {worst_kernel:.1e}, density {worst_density:.1e} (tol 1e-5)"),
        ))
    })
}

/// Library estimates against the naive double loop for `n = 200`,
/// `d ∈ {1, 2, 3}`.
pub fn brute_force_equivalence(seed: u64) -> Check {
    timed("3", "brute-force equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for d in 1..=3usize {
            let rows: Vec<Vec<f64>> = (0..200)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..4.0)).collect())
                .collect();
            let s = Sample::from_rows(&rows)?;
            let b: Vec<f64> = (0..d).map(|j| 0.1 + 0.05 * j as f64).collect();
            let bw = Bandwidth::new(b.clone())?;
            let axes: Vec<Vec<f64>> = (0..d).map(|_| vec![0.0, 0.07, 0.2, 0.55, 1.3, 3.1]).collect();
            let field = field_on_grid(&s, axes, &bw, FieldKind::Density)?;
            for (x, v) in field.nodes() {
                let reference = naive::density(&rows, &x, &b);
                let direct = density_at(&s, &EvalPoint::new(x.clone())?, &bw)?;
                let scale = reference.abs().max(1.0);
                worst = worst.max((v - reference).abs() / scale).max((direct - reference).abs() / scale);
            }
        }
        Ok((worst <= 1e-12, format!("max |lib - naive| / max(1,|naive|) = {worst:.1e} (tol 1e-12)")))
    })
}

/// Reference-rule constants against their closed forms.
pub fn bandwidth_constants() -> Check {
    timed("4", "bandwidth constants", || {
        let res = Resolution::default();
        let dens = density_bandwidth(&ProductModel::exponential(1.0, 1)?, &Domain::Orthant, res)?;
        let der = derivative_bandwidth(&ProductModel::gamma(3.0, 1.0, 1)?, &Domain::Orthant, res)?;
        let want_dens = 2f64.powf(0.4);
        let want_der = (108.0f64 / 35.0).powf(2.0 / 7.0);
        let (e1, e2) = ((dens.constant - want_dens).abs(), (der.constant - want_der).abs());
        Ok((
            e1 <= 1e-3 && e2 <= 1e-3,
            format!(
                "density C={:.10} (|Δ|={e1:.1e}), derivative C={:.10} (|Δ|={e2:.1e}) (tol 1e-3)",
                dens.constant, der.constant
            ),
        ))
    })
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    v.is_finite() && (lo..=hi).contains(&v)
}

/// Monte Carlo density bias and variance at `x = 1` for iid Exp(1),
/// `b = 0.05`, `n = 10⁵`, 200 replicates. The variance is compared with the
/// full variance expansion; its leading term alone is also reported.
pub fn density_bias_variance(seed: u64) -> (Check, Check) {
    let start = Instant::now();
    let outcome = (|| -> anyhow::Result<(f64, f64, f64)> {
        let (b, n) = (0.05, 100_000);
        let cfg = ExperimentConfig::new(
            Process::Iid {
                marginal: Marginal::exponential(1.0)?,
                d: 1,
            },
            vec![n],
            200,
            BandwidthChoice::Fixed(b),
            Target::Density,
            seed,
        )?;
        let st = mc_point_stats(&cfg, &EvalPoint::new(vec![1.0])?)?.remove(0);
        let m = ProductModel::exponential(1.0, 1)?;
        let bias = bias_density(&m, &[1.0], b)?;
        let var = var_density(&m, &[1.0], b, n)?;
        let lead = var.component("leading").unwrap_or(f64::NAN);
        Ok((st.bias / bias.value, st.variance / var.value, st.variance / lead))
    })();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((rb, rv, rl)) => (
            Check {
                id: "5",
                name: "density bias law",
                passed: in_range(rb, 0.7, 1.3),
                detail: format!("empirical/theory bias = {rb:.4} (want [0.7, 1.3])"),
                seconds,
            },
            Check {
                id: "6",
                name: "density variance law",
                passed: in_range(rv, 0.85, 1.15),
                detail: format!("empirical/expansion var = {rv:.4} (want [0.85, 1.15]); vs leading term alone {rl:.4}"),
                seconds: 0.0,
            },
        ),
        Err(e) => {
            let fail = |id, name| Check {
                id,
                name,
                passed: false,
                detail: format!("error: {e:#}"),
                seconds,
            };
            (fail("5", "density bias law"), fail("6", "density variance law"))
        }
    }
}

/// Monte Carlo derivative bias and variance at `x = 1` for iid Gamma(3,1),
/// `b = 0.1`, `n = 10⁵`, 200 replicates.
pub fn derivative_bias_variance(seed: u64) -> Check {
    timed("7", "derivative bias/variance laws", || {
        let (b, n) = (0.1, 100_000);
        let cfg = ExperimentConfig::new(
            Process::Iid {
                marginal: Marginal::gamma(3.0, 1.0)?,
                d: 1,
            },
            vec![n],
            200,
            BandwidthChoice::Fixed(b),
            Target::Derivative,
            seed,
        )?;
        let st = mc_point_stats(&cfg, &EvalPoint::new(vec![1.0])?)?.remove(0);
        let m = ProductModel::gamma(3.0, 1.0, 1)?;
        let bias = bias_derivative(&m, &[1.0], b)?;
        let var = var_derivative(&m, &[1.0], b, n)?;
        let rb = st.bias / bias.value;
        let rv = st.variance / var.value;
        Ok((
            in_range(rb, 0.7, 1.3) && in_range(rv, 0.85, 1.15),
            format!("bias ratio {rb:.4} (want [0.7, 1.3]), variance ratio {rv:.4} (want [0.85, 1.15])"),
        ))
    })
}

const N_GRID: [usize; 5] = [250, 500, 1000, 2000, 4000];

fn slope_check(
    id: &'static str,
    name: &'static str,
    process: Process,
    which: Target,
    want: f64,
    tol: f64,
    seed: u64,
) -> Check {
    timed(id, name, || {
        let res = Resolution::default();
        let reference = ProductModel::iid(process.marginal(), process.dim())?;
        let rule = match which {
            Target::Density => density_bandwidth(&reference, &Domain::Orthant, res)?,
            Target::Derivative => derivative_bandwidth(&reference, &Domain::Orthant, res)?,
        };
        let cfg = ExperimentConfig::new(process, N_GRID.to_vec(), 100, BandwidthChoice::Rule(rule), which, seed)?;
        let result = mc_mise(&cfg)?;
        let fit = result.fit.ok_or_else(|| anyhow::anyhow!("no rate fit"))?;
        Ok((
            (fit.slope - want).abs() <= tol,
            format!("slope {:.4} ± {:.4} (want {want:.4} ± {tol})", fit.slope, fit.stderr),
        ))
    })
}

pub fn rate_density(seed: u64) -> Check {
    let p = Process::Iid {
        marginal: Marginal::exponential(1.0).expect("valid"),
        d: 1,
    };
    slope_check("8", "density MISE rate", p, Target::Density, -0.8, 0.15, seed)
}

pub fn rate_derivative(seed: u64) -> Check {
    let p = Process::Iid {
        marginal: Marginal::gamma(3.0, 1.0).expect("valid"),
        d: 1,
    };
    slope_check("9", "derivative MISE rate", p, Target::Derivative, -4.0 / 7.0, 0.15, seed)
}

pub fn rate_mixing(seed: u64) -> Check {
    let p = Process::Mixing(MixingProcessSpec::new(0.5, Marginal::exponential(1.0).expect("valid"), 1).expect("valid"));
    slope_check("10", "density MISE rate, mixing data", p, Target::Density, -0.8, 0.2, seed)
}

/// Split covariance bound over the leading variance along `b = n^{-2/5}`.
pub fn covariance_order() -> Check {
    timed("11", "covariance order", || {
        let m = ProductModel::exponential(1.0, 1)?;
        // AR(1) copula with φ = 0.5: α(k) ≤ C φ^k, Σ k α(k)^{1/2} ≈ r/(1-r)², r = √φ
        let r = 0.5f64.sqrt();
        let mp = MixingProfile::new(0.5, 1.0)?.with_split(0.25, r / (1.0 - r).powi(2), 1.0)?;
        let mut ratios = Vec::new();
        for n in [1_000usize, 10_000, 100_000] {
            let b = (n as f64).powf(-0.4);
            let split = cov_split_density(&m, &[1.0], b, n, &mp)?;
            let lead = var_density(&m, &[1.0], b, n)?.component("leading").unwrap_or(f64::NAN);
            ratios.push(split.total() / lead);
        }
        let ok = ratios.windows(2).all(|w| w[1] < w[0]) && ratios.iter().all(|v| v.is_finite());
        Ok((ok, format!("bound/variance = {:.4e}, {:.4e}, {:.4e}", ratios[0], ratios[1], ratios[2])))
    })
}

/// Variance expansion against the exact single-observation variance
/// `(∫K²f - (∫Kf)²)/n` at a small bandwidth.
pub fn variance_expansion_exact() -> Check {
    timed("V", "variance expansion vs exact", || {
        let m = ProductModel::exponential(1.0, 1)?;
        let (x, b, n) = (1.0, 0.02, 100_000);
        let p = KernelPoint::new(x, b)?;
        let k = |t: f64| if t > 0.0 { kernel_eval(t, p).unwrap_or(f64::NAN) } else { 0.0 };
        let mean = integrate_adaptive(|t| k(t) * (-t).exp(), 0.0, 40.0, 1e-13);
        let sq = integrate_adaptive(|t| k(t).powi(2) * (-t).exp(), 0.0, 40.0, 1e-12);
        let exact = (sq - mean * mean) / n as f64;
        let ratio = var_density(&m, &[x], b, n)?.value / exact;
        Ok(((ratio - 1.0).abs() <= 0.025, format!("expansion/exact = {ratio:.5} (want 1 ± 0.025)")))
    })
}

/// Bias expansion against the exact bias `∫K f - f(x)` at a small bandwidth.
pub fn bias_expansion_exact() -> Check {
    timed("B", "bias expansion vs exact", || {
        let m = ProductModel::exponential(1.0, 1)?;
        let (x, b) = (1.0, 0.02);
        let p = KernelPoint::new(x, b)?;
        let k = |t: f64| if t > 0.0 { kernel_eval(t, p).unwrap_or(f64::NAN) } else { 0.0 };
        let mean = integrate_adaptive(|t| k(t) * (-t).exp(), 0.0, 40.0, 1e-13);
        let ratio = (mean - (-x).exp()) / bias_density(&m, &[x], b)?.value;
        Ok(((ratio - 1.0).abs() <= 0.025, format!("exact/expansion = {ratio:.5} (want 1 ± 0.025)")))
    })
}

/// A small experiment repeated on 1, 2 and 8 worker threads.
pub fn determinism_in_process(seed: u64) -> Check {
    timed("12", "determinism across workers", || {
        let cfg = ExperimentConfig::new(
            Process::Mixing(MixingProcessSpec::new(0.5, Marginal::exponential(1.0)?, 1)?),
            vec![200, 400, 800],
            8,
            BandwidthChoice::Fixed(0.1),
            Target::Density,
            seed,
        )?;
        let mut outputs = Vec::new();
        for threads in [1, 2, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
            outputs.push(pool.install(|| mc_mise(&cfg))?.to_text());
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        Ok((same, format!("{} bytes, identical on 1/2/8 workers: {same}", outputs[0].len())))
    })
}

/// Checks that need no Monte Carlo.
pub fn analytic_checks(seed: u64) -> Vec<Check> {
    vec![
        kernel_normalization(),
        gradient_consistency(seed),
        brute_force_equivalence(seed),
        bandwidth_constants(),
        bias_expansion_exact(),
        variance_expansion_exact(),
        covariance_order(),
        determinism_in_process(seed),
    ]
}

/// Monte Carlo law and rate checks.
pub fn monte_carlo_checks(seed: u64) -> Vec<Check> {
    let (c5, c6) = density_bias_variance(seed);
    vec![
        c5,
        c6,
        derivative_bias_variance(seed),
        rate_density(seed),
        rate_derivative(seed),
        rate_mixing(seed),
    ]
}
