//! Library side of the `gammakde` command: option parsing helpers, the
//! subcommand drivers and the validation checks.

pub mod checks;
pub mod commands;
pub mod naive;

use anyhow::{bail, Context, Result};
use gammakde::{Marginal, Target};

/// Parses `exp:RATE` or `gamma:SHAPE:SCALE`.
pub fn parse_marginal(spec: &str) -> Result<Marginal> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| -> Result<f64> { s.parse::<f64>().with_context(|| format!("bad number `{s}` in model `{spec}`")) };
    let m = match parts.as_slice() {
        ["exp", rate] => Marginal::exponential(num(rate)?)?,
        ["gamma", shape, scale] => Marginal::gamma(num(shape)?, num(scale)?)?,
        _ => bail!("model must be `exp:RATE` or `gamma:SHAPE:SCALE`, got `{spec}`"),
    };
    Ok(m)
}

pub fn parse_target(s: &str) -> Result<Target> {
    match s {
        "density" => Ok(Target::Density),
        "derivative" => Ok(Target::Derivative),
        _ => bail!("--which must be `density` or `derivative`, got `{s}`"),
    }
}

/// Parses a comma-separated list of sample sizes.
pub fn parse_n_grid(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().with_context(|| format!("bad sample size `{v}`")))
        .collect()
}

/// Parses `lo:hi:count`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be `lo:hi:count`, got `{s}`");
    }
    let lo: f64 = parts[0].parse().with_context(|| format!("bad grid start in `{s}`"))?;
    let hi: f64 = parts[1].parse().with_context(|| format!("bad grid end in `{s}`"))?;
    let count: usize = parts[2].parse().with_context(|| format!("bad node count in `{s}`"))?;
    if !(lo >= 0.0 && hi > lo && count >= 2) {
        bail!("grid needs 0 <= lo < hi and count >= 2, got `{s}`");
    }
    Ok((lo, hi, count))
}

/// Configures the global worker pool from `GAMMAKDE_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GAMMAKDE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("GAMMAKDE_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_parsers() {
        assert_eq!(parse_marginal("exp:2").unwrap(), Marginal::exponential(2.0).unwrap());
        assert_eq!(parse_marginal("gamma:3:0.5").unwrap(), Marginal::gamma(3.0, 0.5).unwrap());
        assert!(parse_marginal("gamma:3").is_err());
        assert!(parse_marginal("exp:-1").is_err());
        assert_eq!(parse_n_grid("250, 500,1000").unwrap(), vec![250, 500, 1000]);
        assert_eq!(parse_grid("0:5:11").unwrap(), (0.0, 5.0, 11));
        assert!(parse_grid("5:0:11").is_err());
        assert!(parse_target("both").is_err());
    }
}
