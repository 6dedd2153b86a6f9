//! Data generation and Monte Carlo experiments.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by the experiment
//! seed and the replicate index, so results do not depend on the number of
//! worker threads.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::bandwidth::BandwidthRule;
use crate::error::{Error, Result};
use crate::estimator::{
    density_at, density_partial_at, field_on_grid, fragment, Bandwidth, EvalPoint, FieldKind, FieldOnGrid, Sample,
};
use crate::io::fmt_num;
use crate::model::{copula_ar1_model, std_normal_cdf, DensityModel, Marginal, ProductModel};
use crate::quadrature::trapezoid_rule;
use crate::theory::Target;

/// Gaussian-copula AR(1): `Z_t = φ Z_{t-1} + √(1-φ²) ε_t`, `X_t = F⁻¹(Φ(Z_t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingProcessSpec {
    pub phi: f64,
    pub marginal: Marginal,
    /// Fragment width `τ + 1`.
    pub d: usize,
}

impl MixingProcessSpec {
    pub fn new(phi: f64, marginal: Marginal, d: usize) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(Error::Config(format!("|phi| must be < 1, got {phi}")));
        }
        if d == 0 {
            return Err(Error::Size("fragment width must be >= 1".into()));
        }
        Ok(Self { phi, marginal, d })
    }
}

fn latent_to_series<R: Rng>(spec: &MixingProcessSpec, m: usize, rng: &mut R) -> Vec<f64> {
    let innov = (1.0 - spec.phi * spec.phi).sqrt();
    let mut z: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(m);
    for t in 0..m {
        if t > 0 {
            let e: f64 = rng.sample(StandardNormal);
            z = spec.phi * z + innov * e;
        }
        out.push(spec.marginal.quantile_pair(std_normal_cdf(z), std_normal_cdf(-z)));
    }
    out
}

/// A stationary series of length `m` from the copula process.
pub fn gen_series(spec: &MixingProcessSpec, m: usize, seed: u64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Size("series length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(latent_to_series(spec, m, &mut rng))
}

fn draw_marginal<R: Rng>(marginal: &Marginal, count: usize, rng: &mut R) -> Vec<f64> {
    match *marginal {
        Marginal::Exponential { rate } => {
            let dist = Exp::new(rate).expect("validated rate");
            (0..count).map(|_| rng.sample(dist)).collect()
        }
        Marginal::Gamma { shape, scale } => {
            let dist = Gamma::new(shape, scale).expect("validated parameters");
            (0..count).map(|_| rng.sample(dist)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Process {
    /// Rows are `d` independent draws from `marginal`.
    Iid { marginal: Marginal, d: usize },
    /// A series of length `n + d - 1` cut into overlapping fragments.
    Mixing(MixingProcessSpec),
}

impl Process {
    pub fn dim(&self) -> usize {
        match self {
            Process::Iid { d, .. } => *d,
            Process::Mixing(s) => s.d,
        }
    }

    pub fn marginal(&self) -> Marginal {
        match self {
            Process::Iid { marginal, .. } => *marginal,
            Process::Mixing(s) => s.marginal,
        }
    }

    /// Joint density of one row.
    pub fn truth(&self) -> Result<Box<dyn DensityModel>> {
        match *self {
            Process::Iid { marginal, d } => Ok(Box::new(ProductModel::iid(marginal, d)?)),
            Process::Mixing(s) if s.d == 1 || s.phi == 0.0 => Ok(Box::new(ProductModel::iid(s.marginal, s.d)?)),
            Process::Mixing(s) if s.d <= 3 => Ok(Box::new(copula_ar1_model(s.marginal, s.phi, s.d)?)),
            Process::Mixing(s) => Err(Error::Size(format!(
                "copula truth is supported for fragment width <= 3, got {}",
                s.d
            ))),
        }
    }

    /// An `n`-row sample from the given RNG.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        match self {
            Process::Iid { marginal, d } => Sample::new(draw_marginal(marginal, n * d, rng), n, *d),
            Process::Mixing(s) => fragment(&latent_to_series(s, n + s.d - 1, rng), s.d - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthChoice {
    Rule(BandwidthRule),
    Fixed(f64),
}

impl BandwidthChoice {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            BandwidthChoice::Rule(r) => r.bandwidth(n),
            BandwidthChoice::Fixed(b) => *b,
        }
    }

    fn label(&self) -> String {
        match self {
            BandwidthChoice::Rule(r) => r.kind.name().to_string(),
            BandwidthChoice::Fixed(b) => format!("fixed:{}", fmt_num(*b)),
        }
    }
}

/// Region over which each replicate's ISE is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IseDomain {
    /// `[2b, q_{0.999}]` per axis.
    Interior,
    /// `[0, q_{0.999}]` per axis.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub process: Process,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub bandwidth: BandwidthChoice,
    pub which: Target,
    pub seed: u64,
    pub domain: IseDomain,
    /// Trapezoid nodes per axis for the ISE.
    pub nodes: usize,
}

impl ExperimentConfig {
    pub fn new(process: Process, n_grid: Vec<usize>, replicates: usize, bandwidth: BandwidthChoice, which: Target, seed: u64) -> Result<Self> {
        let cfg = Self {
            process,
            n_grid,
            replicates,
            bandwidth,
            which,
            seed,
            domain: IseDomain::Interior,
            nodes: 200,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Err(Error::Config("n_grid must be nonempty with positive sizes".into()));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.replicates < 2 {
            return Err(Error::Config(format!("replicates must be >= 2, got {}", self.replicates)));
        }
        if self.nodes < 3 {
            return Err(Error::Config("ISE needs at least 3 nodes per axis".into()));
        }
        if let Process::Mixing(s) = self.process {
            MixingProcessSpec::new(s.phi, s.marginal, s.d)?;
        }
        if self.process.dim() == 0 {
            return Err(Error::Size("dimension must be >= 1".into()));
        }
        for &n in &self.n_grid {
            let b = self.bandwidth.at(n);
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Config(format!("bandwidth at n={n} is {b}")));
            }
        }
        Ok(())
    }

    /// Replicate `r` reads stream `r` at every `n`, so the sample at a larger
    /// `n` extends the one at a smaller `n`.
    fn rng(&self, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        rng
    }

    fn kind(&self) -> FieldKind {
        match self.which {
            Target::Density => FieldKind::Density,
            Target::Derivative => FieldKind::Derivative {
                axis: self.process.dim() - 1,
            },
        }
    }
}

/// Monte Carlo summary of the estimator at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    pub n: usize,
    pub b: f64,
    pub truth: f64,
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub replicates: usize,
    /// Fewer than 10 replicates: standard errors are unreliable.
    pub wide_se: bool,
}

fn truth_value(m: &dyn DensityModel, x: &[f64], which: Target) -> f64 {
    match which {
        Target::Density => m.pdf(x),
        Target::Derivative => m.partial(x, x.len() - 1),
    }
}

/// Empirical mean, variance and bias of the estimator at `x` for each `n`.
pub fn mc_point_stats(cfg: &ExperimentConfig, x: &EvalPoint) -> Result<Vec<PointStats>> {
    cfg.validate()?;
    let d = cfg.process.dim();
    if x.as_slice().len() != d {
        return Err(Error::Size(format!("point has {} coordinates, process has {d}", x.as_slice().len())));
    }
    let truth_model = cfg.process.truth()?;
    let truth = truth_value(truth_model.as_ref(), x.as_slice(), cfg.which);
    let mut out = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let b = cfg.bandwidth.at(n);
        if let Some(j) = x.as_slice().iter().position(|&v| v < 2.0 * b) {
            return Err(Error::OutOfValidity(format!("x{j} = {} is below 2b = {}", x.as_slice()[j], 2.0 * b)));
        }
        let bw = Bandwidth::uniform(b, d)?;
        let values = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let s = cfg.process.sample(n, &mut cfg.rng(r))?;
                match cfg.which {
                    Target::Density => density_at(&s, x, &bw),
                    Target::Derivative => density_partial_at(&s, x, &bw, d - 1),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let rf = values.len() as f64;
        let mean = values.iter().sum::<f64>() / rf;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / rf;
        let variance = m2 / (rf - 1.0);
        let pop = m2 / rf;
        out.push(PointStats {
            n,
            b,
            truth,
            mean,
            variance,
            bias: mean - truth,
            se_mean: (variance / rf).sqrt(),
            se_variance: ((m4 - pop * pop).max(0.0) / rf).sqrt(),
            replicates: cfg.replicates,
            wide_se: cfg.replicates < 10,
        });
    }
    Ok(out)
}

/// Trapezoid weights for an arbitrary increasing node set.
fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let m = axis.len();
    if m == 1 {
        return vec![1.0];
    }
    (0..m)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { axis[i] - axis[i - 1] };
            let right = if i + 1 == m { 0.0 } else { axis[i + 1] - axis[i] };
            0.5 * (left + right)
        })
        .collect()
}

/// `∫ (f̂ - g)²` by the tensor trapezoid rule on the field's own grid, where
/// `g` is the model's density or partial derivative matching the field kind.
/// Returns NaN when any node is non-finite.
pub fn integrated_squared_error(field: &FieldOnGrid, truth: &dyn DensityModel) -> f64 {
    let weights: Vec<Vec<f64>> = field.axes.iter().map(|a| trapezoid_weights(a)).collect();
    let shape = field.shape();
    let mut acc = 0.0;
    for (k, &v) in field.values.iter().enumerate() {
        let x = field.node(k);
        let g = match field.kind {
            FieldKind::Density => truth.pdf(&x),
            FieldKind::Derivative { axis } => truth.partial(&x, axis),
        };
        let mut rem = k;
        let mut w = 1.0;
        for j in (0..shape.len()).rev() {
            w *= weights[j][rem % shape[j]];
            rem /= shape[j];
        }
        acc += w * (v - g).powi(2);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IseRecord {
    pub n: usize,
    pub replicate: usize,
    pub b: f64,
    pub ise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiseSummary {
    pub n: usize,
    pub b: f64,
    pub mise: f64,
    pub stderr: f64,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub which: Target,
    pub bandwidth: String,
    pub seed: u64,
    pub records: Vec<IseRecord>,
    pub summary: Vec<MiseSummary>,
    pub fit: Option<RateFit>,
}

impl ExperimentResult {
    /// Records, then a `# summary` block and a `# fit` block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# which={} bandwidth={} seed={}", self.which, self.bandwidth, self.seed);
        let _ = writeln!(out, "n,replicate,b,ise");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.n, r.replicate, fmt_num(r.b), fmt_num(r.ise));
        }
        let _ = writeln!(out, "# summary");
        let _ = writeln!(out, "n,b,mise,stderr,used,excluded");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.n,
                fmt_num(s.b),
                fmt_num(s.mise),
                fmt_num(s.stderr),
                s.used,
                s.excluded
            );
        }
        let _ = writeln!(out, "# fit");
        let _ = writeln!(out, "slope,stderr,intercept");
        match &self.fit {
            Some(f) => {
                let _ = writeln!(out, "{},{},{}", fmt_num(f.slope), fmt_num(f.stderr), fmt_num(f.intercept));
            }
            None => {
                let _ = writeln!(out, "NaN,NaN,NaN");
            }
        }
        out
    }
}

/// ISE grid for one replicate: `nodes` equally spaced points per axis.
pub fn ise_axes(truth: &dyn DensityModel, b: f64, domain: IseDomain, nodes: usize) -> Vec<Vec<f64>> {
    (0..truth.dim())
        .map(|j| {
            let hi = truth.upper_quantile(j, 0.999);
            let lo = match domain {
                IseDomain::Interior => 2.0 * b,
                IseDomain::Full => 0.0,
            };
            trapezoid_rule(lo, hi, nodes).into_iter().map(|(x, _)| x).collect()
        })
        .collect()
}

/// Per-replicate ISE and MISE for every `n`, plus the log-log rate fit when
/// the grid has at least three sizes.
pub fn mc_mise(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let truth = cfg.process.truth()?;
    let d = cfg.process.dim();
    let kind = cfg.kind();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &n in &cfg.n_grid {
        let b = cfg.bandwidth.at(n);
        let axes = ise_axes(truth.as_ref(), b, cfg.domain, cfg.nodes);
        if axes.iter().any(|a| a[0] >= a[a.len() - 1]) {
            return Err(Error::OutOfValidity(format!(
                "ISE domain is empty at n={n}: 2b = {} exceeds the 0.999 quantile",
                2.0 * b
            )));
        }
        let bw = Bandwidth::uniform(b, d)?;
        let ises = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let s = cfg.process.sample(n, &mut cfg.rng(r))?;
                match field_on_grid(&s, axes.clone(), &bw, kind) {
                    Ok(field) => Ok(integrated_squared_error(&field, truth.as_ref())),
                    // an exact zero observation makes the derivative undefined
                    Err(Error::ZeroObservation { .. }) => Ok(f64::NAN),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let good: Vec<f64> = ises.iter().copied().filter(|v| v.is_finite()).collect();
        let used = good.len();
        let (mise, stderr) = if used == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = good.iter().sum::<f64>() / used as f64;
            let var = if used > 1 {
                good.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (used as f64 - 1.0)
            } else {
                f64::NAN
            };
            (mean, (var / used as f64).sqrt())
        };
        records.extend(ises.iter().enumerate().map(|(r, &ise)| IseRecord { n, replicate: r, b, ise }));
        summary.push(MiseSummary {
            n,
            b,
            mise,
            stderr,
            used,
            excluded: cfg.replicates - used,
        });
    }
    let mut result = ExperimentResult {
        which: cfg.which,
        bandwidth: cfg.bandwidth.label(),
        seed: cfg.seed,
        records,
        summary,
        fit: None,
    };
    if result.summary.len() >= 3 {
        result.fit = rate_fit(&result).ok();
    }
    Ok(result)
}

/// Ordinary least squares of `ln MISE` on `ln n`.
pub fn rate_fit(result: &ExperimentResult) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = result
        .summary
        .iter()
        .filter(|s| s.mise.is_finite() && s.mise > 0.0)
        .map(|s| ((s.n as f64).ln(), s.mise.ln()))
        .collect();
    fit_log_log(&pts)
}

/// OLS slope, its standard error and the intercept for `(ln n, ln MISE)`.
pub fn fit_log_log(pts: &[(f64, f64)]) -> Result<RateFit> {
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::Size(format!("rate fit needs >= 3 distinct n values, got {}", xs.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>();
    Ok(RateFit {
        slope,
        stderr: (ssr / (k - 2.0) / sxx).sqrt(),
        intercept,
    })
}
