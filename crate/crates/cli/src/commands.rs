//! Subcommand drivers. Each returns the text to emit; `main` decides where it
//! goes.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use gammakde::bandwidth::{
    density_bandwidth, derivative_bandwidth, interior_box_rule, mixing_bandwidth, plug_in_bandwidth, BandwidthRule,
};
use gammakde::io::{format_field, parse_sample};
use gammakde::simulate::{mc_mise, BandwidthChoice, ExperimentConfig, IseDomain, MixingProcessSpec, Process};
use gammakde::{field_on_grid, fragment, Bandwidth, Domain, FieldKind, MixingProfile, ProductModel, Resolution, Sample, Target};

use crate::checks::{self, Check};
use crate::{parse_grid, parse_marginal, parse_n_grid, parse_target};

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Delimited text file, one observation per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the grid here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Fragment a univariate series into windows of width tau+1.
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long, default_value = "density")]
    pub which: String,
    /// Coordinate for the derivative; defaults to the last one.
    #[arg(long)]
    pub axis: Option<usize>,
    /// Fixed bandwidth.
    #[arg(long, conflicts_with = "rule")]
    pub b: Option<f64>,
    /// Data-driven rule: plugin (pilot refined) or plugin-reference.
    #[arg(long)]
    pub rule: Option<String>,
    /// `lo:hi:count`, applied to every axis. Defaults to [0, max] with 50/20/10
    /// nodes for d = 1/2/3+.
    #[arg(long)]
    pub grid: Option<String>,
}

fn read_sample(path: &PathBuf, tau: Option<usize>) -> Result<Sample> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let s = parse_sample(&text).with_context(|| format!("in {}", path.display()))?;
    match tau {
        None => Ok(s),
        Some(t) => {
            if s.dim() != 1 {
                bail!("--tau needs a univariate series, {} has {} columns", path.display(), s.dim());
            }
            Ok(fragment(s.as_slice(), t)?)
        }
    }
}

fn plug_in_stages(rule: &str) -> Result<u8> {
    match rule {
        "plugin" => Ok(2),
        "plugin-reference" => Ok(1),
        _ => bail!("unknown rule `{rule}` for data (use plugin or plugin-reference)"),
    }
}

/// Returns the CSV grid and a one-line bandwidth report.
pub fn run_estimate(a: &EstimateArgs) -> Result<(String, String)> {
    let which = parse_target(&a.which)?;
    let s = read_sample(&a.input, a.tau)?;
    let d = s.dim();
    let axis = a.axis.unwrap_or(d - 1);
    if axis >= d {
        bail!("--axis {axis} is out of range for a {d}-dimensional sample");
    }
    let (b, source) = match (a.b, a.rule.as_deref()) {
        (Some(b), None) => (b, "fixed".to_string()),
        (None, Some(rule)) => {
            let r = plug_in_bandwidth(&s, which, plug_in_stages(rule)?)?;
            (r.bandwidth(s.n()), rule.to_string())
        }
        _ => bail!("give exactly one of --b or --rule"),
    };
    let bw = Bandwidth::uniform(b, d)?;
    let axes: Vec<Vec<f64>> = match &a.grid {
        Some(g) => {
            let (lo, hi, count) = parse_grid(g)?;
            vec![linspace(lo, hi, count); d]
        }
        None => {
            let count = match d {
                1 => 50,
                2 => 20,
                _ => 10,
            };
            (0..d)
                .map(|j| linspace(0.0, s.column(j).fold(0.0, f64::max), count))
                .collect()
        }
    };
    let kind = match which {
        Target::Density => FieldKind::Density,
        Target::Derivative => FieldKind::Derivative { axis },
    };
    let field = field_on_grid(&s, axes, &bw, kind)?;
    let mut out = String::new();
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let value = match kind {
        FieldKind::Density => "density".to_string(),
        FieldKind::Derivative { axis } => format!("d_density_dx{axis}"),
    };
    let _ = writeln!(out, "{},{value}", names.join(","));
    out.push_str(&format_field(&field));
    let report = format!("bandwidth={b:.16e} source={source} n={} d={d}", s.n());
    Ok((out, report))
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let h = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| if i + 1 == count { hi } else { lo + i as f64 * h }).collect()
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    /// Reference model `exp:RATE` or `gamma:SHAPE:SCALE` (iid coordinates).
    #[arg(long, conflicts_with = "input")]
    pub model: Option<String>,
    /// Data file for the plug-in rules.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub tau: usize,
    #[arg(long, default_value = "density")]
    pub which: String,
    /// reference, interior, mixing, plugin or plugin-reference.
    #[arg(long, default_value = "reference")]
    pub rule: String,
    /// Sample size at which b is reported; defaults to the data size or 1000.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub upsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_integral: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn run_bandwidth(a: &BandwidthArgs) -> Result<String> {
    let which = parse_target(&a.which)?;
    let res = Resolution::default();
    let (rule, n): (BandwidthRule, usize) = match (&a.model, &a.input) {
        (Some(spec), None) => {
            let m = ProductModel::iid(parse_marginal(spec)?, a.tau + 1)?;
            let n = a.n.unwrap_or(1000);
            let rule = match (a.rule.as_str(), which) {
                ("reference", Target::Density) => density_bandwidth(&m, &Domain::Orthant, res)?,
                ("reference", Target::Derivative) => derivative_bandwidth(&m, &Domain::Orthant, res)?,
                ("interior", w) => interior_box_rule(&m, w, n, res)?,
                ("mixing", Target::Density) => {
                    mixing_bandwidth(&m, &Domain::Orthant, res, &MixingProfile::new(a.upsilon, a.alpha_integral)?)?
                }
                ("mixing", Target::Derivative) => bail!("the mixing-aware rule is defined for the density only"),
                (r, _) => bail!("rule `{r}` needs --input data or is unknown"),
            };
            (rule, n)
        }
        (None, Some(path)) => {
            let s = read_sample(path, if a.tau > 0 { Some(a.tau) } else { None })?;
            let rule = plug_in_bandwidth(&s, which, plug_in_stages(&a.rule)?)?;
            (rule, a.n.unwrap_or(s.n()))
        }
        _ => bail!("give exactly one of --model or --input"),
    };
    Ok(rule.to_text(n))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Required; there is no time-based default.
    #[arg(long)]
    pub seed: u64,
    /// iid or mixing.
    #[arg(long, default_value = "iid")]
    pub process: String,
    /// Latent AR(1) coefficient for the mixing process.
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    #[arg(long, default_value = "exp:1")]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub tau: usize,
    #[arg(long, default_value = "250,500,1000,2000,4000")]
    pub n_grid: String,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value = "density")]
    pub which: String,
    #[arg(long, conflicts_with = "rule")]
    pub b: Option<f64>,
    /// reference or interior; used when --b is absent.
    #[arg(long, default_value = "reference")]
    pub rule: String,
    /// interior ([2b, q999]) or full ([0, q999]).
    #[arg(long, default_value = "interior")]
    pub domain: String,
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn run_simulate(a: &SimulateArgs) -> Result<String> {
    let which = parse_target(&a.which)?;
    let marginal = parse_marginal(&a.model)?;
    let d = a.tau + 1;
    let process = match a.process.as_str() {
        "iid" => Process::Iid { marginal, d },
        "mixing" => Process::Mixing(MixingProcessSpec::new(a.phi, marginal, d)?),
        p => bail!("--process must be iid or mixing, got `{p}`"),
    };
    let n_grid = parse_n_grid(&a.n_grid)?;
    let res = Resolution::default();
    let bandwidth = match a.b {
        Some(b) => BandwidthChoice::Fixed(b),
        None => {
            let truth = process.truth()?;
            let rule = match (a.rule.as_str(), which) {
                ("reference", Target::Density) => density_bandwidth(truth.as_ref(), &Domain::Orthant, res)?,
                ("reference", Target::Derivative) => derivative_bandwidth(truth.as_ref(), &Domain::Orthant, res)?,
                ("interior", w) => interior_box_rule(truth.as_ref(), w, n_grid[0], res)?,
                (r, _) => bail!("unknown rule `{r}` for simulate (use reference or interior)"),
            };
            BandwidthChoice::Rule(rule)
        }
    };
    let mut cfg = ExperimentConfig::new(process, n_grid, a.replicates, bandwidth, which, a.seed)?;
    cfg.domain = match a.domain.as_str() {
        "interior" => IseDomain::Interior,
        "full" => IseDomain::Full,
        x => bail!("--domain must be interior or full, got `{x}`"),
    };
    cfg.nodes = a.nodes;
    Ok(mc_mise(&cfg)?.to_text())
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Skip the Monte Carlo law and rate checks.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = checks::DEFAULT_SEED)]
    pub seed: u64,
}

/// The check table and whether every check passed.
pub fn run_validate(a: &ValidateArgs) -> (String, bool) {
    let mut all: Vec<Check> = checks::analytic_checks(a.seed);
    if !a.quick {
        all.extend(checks::monte_carlo_checks(a.seed));
    }
    let mut out = String::new();
    for c in &all {
        let _ = writeln!(out, "{c}");
    }
    let failed = all.iter().filter(|c| !c.passed).count();
    let _ = writeln!(out, "{} checks, {failed} failed{}", all.len(), if a.quick { " (quick)" } else { "" });
    (out, failed == 0)
}
