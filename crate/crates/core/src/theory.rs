//! Leading-term bias, variance and covariance expansions for the density and
//! derivative estimators, evaluated against an analytic [`DensityModel`].
//!
//! All expansions assume a common bandwidth `b` on every coordinate and an
//! interior point (`x_j >= 2b` for every `j`); boundary points are rejected.
//! The derivative expansions refer to the last coordinate, written `x_n`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{domain, Error, Result};
use crate::model::DensityModel;
use crate::quadrature::{Domain, Resolution, TensorRule};

/// Which estimator an expression refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Density,
    Derivative,
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Target::Density => "density",
            Target::Derivative => "derivative",
        })
    }
}

/// A closed-form expansion: its value is the sum of `components`.
/// `coefficients` holds the named functions of `x` the addends are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub name: String,
    pub value: f64,
    pub order: String,
    pub components: Vec<(String, f64)>,
    pub coefficients: Vec<(String, f64)>,
}

impl ExpansionReport {
    fn new(name: &str, order: String, components: Vec<(String, f64)>, coefficients: Vec<(String, f64)>) -> Self {
        let value = components.iter().map(|(_, v)| v).sum();
        Self {
            name: name.to_string(),
            value,
            order,
            components,
            coefficients,
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// `name=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report={}", self.name);
        let _ = writeln!(out, "value={:.16e}", self.value);
        let _ = writeln!(out, "order={}", self.order);
        for (k, v) in self.components.iter().chain(&self.coefficients) {
            let _ = writeln!(out, "{k}={v:.16e}");
        }
        out
    }
}

/// Dependence description used by the covariance bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingProfile {
    /// Exponent `υ ∈ (0, 1)` of the mixing-coefficient integral.
    pub upsilon: f64,
    /// `∫₁^∞ α(τ)^υ dτ`.
    pub alpha_integral: f64,
    /// `κ ∈ (0, 1/2)` for the split covariance bound.
    pub kappa: f64,
    /// `Σ τ α(τ)^{2κ}`.
    pub alpha_sum: f64,
    /// Uniform bound `M` on `|f_τ(x, y) - f(x) f(y)|`, when known.
    pub joint_bound: Option<f64>,
}

impl MixingProfile {
    pub fn new(upsilon: f64, alpha_integral: f64) -> Result<Self> {
        let p = Self {
            upsilon,
            alpha_integral,
            kappa: 0.25,
            alpha_sum: 0.0,
            joint_bound: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_split(mut self, kappa: f64, alpha_sum: f64, joint_bound: f64) -> Result<Self> {
        self.kappa = kappa;
        self.alpha_sum = alpha_sum;
        self.joint_bound = Some(joint_bound);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.upsilon > 0.0 && self.upsilon < 1.0) {
            return Err(domain("MixingProfile", format!("upsilon must lie in (0, 1), got {}", self.upsilon)));
        }
        if !(self.alpha_integral.is_finite() && self.alpha_integral >= 0.0) {
            return Err(domain("MixingProfile", "alpha_integral must be finite and >= 0"));
        }
        if !(self.kappa > 0.0 && self.kappa < 0.5) {
            return Err(domain("MixingProfile", format!("kappa must lie in (0, 1/2), got {}", self.kappa)));
        }
        if !(self.alpha_sum.is_finite() && self.alpha_sum >= 0.0) {
            return Err(domain("MixingProfile", "alpha_sum must be finite and >= 0"));
        }
        if let Some(m) = self.joint_bound {
            if !(m.is_finite() && m >= 0.0) {
                return Err(domain("MixingProfile", "joint-density bound M must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

fn check_point<M: DensityModel + ?Sized>(m: &M, x: &[f64], b: f64) -> Result<()> {
    if x.len() != m.dim() {
        return Err(Error::Size(format!(
            "point has dimension {}, model has {}",
            x.len(),
            m.dim()
        )));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Config(format!("bandwidth must be > 0, got {b}")));
    }
    if let Some((j, v)) = x.iter().enumerate().find(|(_, &v)| !(v >= 2.0 * b)) {
        return Err(Error::OutOfValidity(format!(
            "x{j} = {v} < 2b = {}; expansions hold only for x >= 2b",
            2.0 * b
        )));
    }
    Ok(())
}

fn tau_of<M: DensityModel + ?Sized>(m: &M) -> f64 {
    (m.dim() - 1) as f64
}

/// `Σ_j x_j ∂²f/∂x_j²`
pub fn curvature_sum<M: DensityModel + ?Sized>(m: &M, x: &[f64]) -> f64 {
    (0..m.dim()).map(|j| x[j] * m.second(x, j, j)).sum()
}

/// `Π_j x_j^{-1/2} / (2√π)`
pub fn variance_factor(x: &[f64]) -> f64 {
    x.iter().map(|&v| 1.0 / (2.0 * (PI * v).sqrt())).product()
}

/// Density bias `(b/2) Σ_j x_j ∂²f/∂x_j²`.
pub fn bias_density<M: DensityModel + ?Sized>(m: &M, x: &[f64], b: f64) -> Result<ExpansionReport> {
    check_point(m, x, b)?;
    let c = curvature_sum(m, x);
    Ok(ExpansionReport::new(
        "bias_density",
        "O(b)".into(),
        vec![("b/2*sum_xj_fjj".into(), 0.5 * b * c)],
        vec![("sum_xj_fjj".into(), c)],
    ))
}

fn flip_v1() -> bool {
    #[cfg(feature = "fault-injection")]
    {
        std::env::var("GAMMAKDE_FAULT").is_ok_and(|v| v == "flip-v1")
    }
    #[cfg(not(feature = "fault-injection"))]
    {
        false
    }
}

/// Density variance expansion with corrections `v₁`, `v₂` and the
/// squared-mean subtraction.
pub fn var_density<M: DensityModel + ?Sized>(m: &M, x: &[f64], b: f64, n: usize) -> Result<ExpansionReport> {
    check_point(m, x, b)?;
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let d = m.dim();
    let tau = tau_of(m);
    let nf = n as f64;
    let f = m.pdf(x);
    let mut v1: f64 = (0..d).map(|j| -0.5 * m.partial(x, j) + 0.25 * x[j] * m.second(x, j, j)).sum();
    if flip_v1() {
        v1 = -v1;
    }
    let v2: f64 = -(0..d)
        .flat_map(|j| (0..d).map(move |i| (j, i)))
        .map(|(j, i)| x[j] / 8.0 * m.third(x, j, i))
        .sum::<f64>();
    let pre = b.powf(-(tau + 1.0) / 2.0) / nf * variance_factor(x);
    let mean = f + 0.5 * b * curvature_sum(m, x);
    Ok(ExpansionReport::new(
        "var_density",
        "O(n^-1 b^-(tau+1)/2)".into(),
        vec![
            ("leading".into(), pre * f),
            ("b*v1".into(), pre * b * v1),
            ("b^2*v2".into(), pre * b * b * v2),
            ("-mean^2/n".into(), -mean * mean / nf),
        ],
        vec![("f".into(), f), ("v1".into(), v1), ("v2".into(), v2), ("prefactor".into(), pre)],
    ))
}

// S(υ, x) from the covariance bound
fn s_term<M: DensityModel + ?Sized>(m: &M, x: &[f64], u: f64, f: f64) -> f64 {
    (0..m.dim())
        .map(|i| {
            (u + 1.0) / ((u - 1.0).powi(2) * x[i]) * f + (u + 1.0) / (u - 1.0) * m.partial(x, i)
                + 0.5 * x[i] * m.second(x, i, i)
        })
        .sum()
}

// D(υ, x) = 2 (2π)^{-(τ(υ+1)+υ-1)/2} Π x_j^{-(υ+1)/2}
fn d_term(x: &[f64], u: f64, tau: f64) -> f64 {
    let prod: f64 = x.iter().map(|&v| v.powf(-(u + 1.0) / 2.0)).product();
    2.0 * (2.0 * PI).powf(-(tau * (u + 1.0) + u - 1.0) / 2.0) * prod
}

/// Upper bound on the covariance part of the density-estimate variance for
/// α-mixing data.
///
/// The bracket `bS + f(3υ-1)/(2(υ-1))` is negative for small `b` whenever
/// `υ > 1/3`; its magnitude is used.
pub fn cov_bound_density<M: DensityModel + ?Sized>(
    m: &M,
    x: &[f64],
    b: f64,
    n: usize,
    mp: &MixingProfile,
) -> Result<f64> {
    check_point(m, x, b)?;
    mp.validate()?;
    let u = mp.upsilon;
    let tau = tau_of(m);
    let f = m.pdf(x);
    let bracket = b * s_term(m, x, u, f) + f * (3.0 * u - 1.0) / (2.0 * (u - 1.0));
    Ok(b.powf(-(tau + 1.0) * (u + 1.0) / 2.0) / n as f64
        * mp.alpha_integral
        * d_term(x, u, tau)
        * bracket.abs().powf(1.0 - u))
}

/// The two pieces of the split covariance bound with `c(n) = b^{-(τ+1)/8}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovSplit {
    pub i1: f64,
    pub i2: f64,
}

impl CovSplit {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2
    }
}

/// `I₁ ≤ 2M / (n b^{(τ+1)/8})` and
/// `I₂ ≤ D(κ) / (n b^{(τ+1)/16}) |f (6κ-1)/(2(2κ-1)) + b S(κ)|^{1-2κ} Σ τ α(τ)^{2κ}`.
pub fn cov_split_density<M: DensityModel + ?Sized>(
    m: &M,
    x: &[f64],
    b: f64,
    n: usize,
    mp: &MixingProfile,
) -> Result<CovSplit> {
    check_point(m, x, b)?;
    mp.validate()?;
    let big_m = mp
        .joint_bound
        .ok_or_else(|| Error::Config("the joint-density bound M is required for the split covariance bound".into()))?;
    let tau = tau_of(m);
    let k = mp.kappa;
    let nf = n as f64;
    let f = m.pdf(x);
    let i1 = 2.0 * big_m / (nf * b.powf((tau + 1.0) / 8.0));
    let bracket = f * (6.0 * k - 1.0) / (2.0 * (2.0 * k - 1.0)) + b * s_term(m, x, k, f);
    let i2 = d_term(x, k, tau) / (nf * b.powf((tau + 1.0) / 16.0)) * bracket.abs().powf(1.0 - 2.0 * k) * mp.alpha_sum;
    Ok(CovSplit { i1, i2 })
}

fn b1_b2<M: DensityModel + ?Sized>(m: &M, x: &[f64]) -> (f64, f64) {
    let xn = x[m.dim() - 1];
    let f = m.pdf(x);
    let c = curvature_sum(m, x);
    (f / (12.0 * xn * xn) + c / (4.0 * xn), c / (24.0 * xn * xn))
}

/// Derivative bias `b B₁ + b² B₂` along the last coordinate.
pub fn bias_derivative<M: DensityModel + ?Sized>(m: &M, x: &[f64], b: f64) -> Result<ExpansionReport> {
    check_point(m, x, b)?;
    let (b1, b2) = b1_b2(m, x);
    Ok(ExpansionReport::new(
        "bias_derivative",
        "O(b)".into(),
        vec![("b*B1".into(), b * b1), ("b^2*B2".into(), b * b * b2)],
        vec![("B1".into(), b1), ("B2".into(), b2)],
    ))
}

/// Derivative variance with components `V₁…V₄` and the squared-mean
/// subtraction; the leading order is `f / (2 x_n)` times
/// `Π x_j^{-1/2}/(2√π) / (n b^{(τ+3)/2})`.
pub fn var_derivative<M: DensityModel + ?Sized>(m: &M, x: &[f64], b: f64, n: usize) -> Result<ExpansionReport> {
    check_point(m, x, b)?;
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let d = m.dim();
    let last = d - 1;
    let tau = tau_of(m);
    let nf = n as f64;
    let xn = x[last];
    let f = m.pdf(x);
    let fn_ = m.partial(x, last);
    let grad = m.grad(x);
    let hess = m.hess_diag(x);

    let v1 = -fn_ / (24.0 * xn * xn)
        + (0..d).map(|j| hess[j] / (8.0 * xn) - grad[j] / (8.0 * xn * xn)).sum::<f64>()
        + 7.0 * f / (48.0 * xn.powi(3));
    let v2 = 7.0 * f / (576.0 * xn.powi(4))
        + (0..d)
            .map(|j| {
                hess[j] / (16.0 * xn * xn) - 7.0 * grad[j] / (96.0 * xn.powi(3))
                    + m.second(x, last, j) / (48.0 * xn * xn)
            })
            .sum::<f64>();
    let v3 = f / (2.0 * xn);
    let v4 = f / (4.0 * xn * xn) - grad.iter().map(|g| g / (4.0 * xn)).sum::<f64>();

    let (b1, b2) = b1_b2(m, x);
    let pre = b.powf(-(tau + 1.0) / 2.0) / nf * variance_factor(x);
    let mean_sq = b * b * b1 * b1 + fn_ * fn_ + 2.0 * fn_ * (b * b1 + b * b * b2);
    Ok(ExpansionReport::new(
        "var_derivative",
        "O(n^-1 b^-(tau+3)/2)".into(),
        vec![
            ("V3/b".into(), pre * v3 / b),
            ("V4".into(), pre * v4),
            ("b*V1".into(), pre * b * v1),
            ("b^2*V2".into(), pre * b * b * v2),
            ("-mean^2/n".into(), -mean_sq / nf),
        ],
        vec![
            ("V1".into(), v1),
            ("V2".into(), v2),
            ("V3".into(), v3),
            ("V4".into(), v4),
            ("B1".into(), b1),
            ("B2".into(), b2),
            ("prefactor".into(), pre),
        ],
    ))
}

/// Upper bound on the covariance part of the derivative-estimate variance:
/// `R / (n b^{(τ+1)(υ+1)/2}) |b² V + b W + L|^{1-υ} ∫α^υ`.
pub fn cov_bound_derivative<M: DensityModel + ?Sized>(
    m: &M,
    x: &[f64],
    b: f64,
    n: usize,
    mp: &MixingProfile,
) -> Result<f64> {
    check_point(m, x, b)?;
    mp.validate()?;
    let u = mp.upsilon;
    let d = m.dim();
    let last = d - 1;
    let tau = tau_of(m);
    let xn = x[last];
    let f = m.pdf(x);
    let fn_ = m.partial(x, last);
    let um = u - 1.0;
    let up = u + 1.0;

    let mut v = 0.0;
    let mut w = 0.0;
    let mut l = 0.0;
    for i in 0..d {
        let fi = m.partial(x, i);
        let fii = m.second(x, i, i);
        v += (up * (3.0 * u - 1.0) / (72.0 * um.powi(3) * xn * xn) + up / (um * um * x[i])
            - u * up / (9.0 * um.powi(4) * xn.powi(3)))
            * f
            + up / um * fi
            - u * up / (9.0 * um.powi(3) * xn * xn) * fn_
            + 0.5 * x[i] * fii;
        w += ((3.0 * u - 1.0) / (4.0 * um * xn) + up / (um * um * x[i]) + 2.0 * x[i] * up / (3.0 * um.powi(3) * xn * xn))
            * f
            + up / um * fi
            + 2.0 * up * x[i] / (3.0 * um * um * xn) * fn_
            + 0.5 * x[i] * fii;
        l += f * (3.0 * u - 1.0) / (2.0 * um) + x[i] * (-4.0 / um * fn_ - 4.0 / (um * um * xn) * f);
    }
    let prod: f64 = x.iter().map(|&v| v.powf(-up / 2.0)).product();
    let r = prod * (2.0 * PI).powf(-(tau + 1.0) * um / 2.0 - tau) / (2.0 * xn * xn);
    let bracket = b * b * v + b * w + l;
    Ok(r / (n as f64 * b.powf((tau + 1.0) * up / 2.0)) * bracket.abs().powf(1.0 - u) * mp.alpha_integral)
}

/// Leading-order MISE: squared leading bias plus leading variance,
/// integrated over `domain`.
pub fn mise_leading<M: DensityModel + ?Sized>(
    m: &M,
    b: f64,
    n: usize,
    which: Target,
    domain: &Domain,
    res: Resolution,
) -> Result<f64> {
    if !(b.is_finite() && b > 0.0) || n == 0 {
        return Err(Error::Config(format!("need b > 0 and n >= 1, got b={b}, n={n}")));
    }
    let d = m.dim();
    if let Domain::Box(bounds) = domain {
        if bounds.len() != d {
            return Err(Error::Size("integration box dimension does not match the model".into()));
        }
        if let Some((j, &(lo, _))) = bounds.iter().enumerate().find(|(_, (lo, _))| *lo < 2.0 * b * (1.0 - 1e-12)) {
            return Err(Error::OutOfValidity(format!(
                "integration box starts at x{j} = {lo} < 2b = {}",
                2.0 * b
            )));
        }
    }
    let tau = tau_of(m);
    let nf = n as f64;
    let scales: Vec<f64> = (0..d).map(|j| m.scale(j)).collect();
    let rule = TensorRule::for_domain(domain, &scales, res);
    match which {
        Target::Density => {
            let var_pre = 1.0 / (nf * b.powf((tau + 1.0) / 2.0));
            rule.integrate("density MISE", |x| {
                let bias = 0.5 * b * curvature_sum(m, x);
                bias * bias + var_pre * variance_factor(x) * m.pdf(x)
            })
        }
        Target::Derivative => {
            let var_pre = 1.0 / (nf * b.powf((tau + 3.0) / 2.0));
            rule.integrate("derivative MISE", |x| {
                let (b1, _) = b1_b2(m, x);
                b * b * b1 * b1 + var_pre * variance_factor(x) * m.pdf(x) / (2.0 * x[d - 1])
            })
        }
    }
}
