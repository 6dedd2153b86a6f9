//! Analytic reference densities with partial derivatives up to third order.

use std::sync::Arc;

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// A density on the nonnegative orthant together with the partial
/// derivatives the bias and variance expansions need.
pub trait DensityModel: Send + Sync {
    fn dim(&self) -> usize;

    fn pdf(&self, x: &[f64]) -> f64;

    /// `∂f/∂x_j`
    fn partial(&self, x: &[f64], j: usize) -> f64;

    /// `∂²f/∂x_j∂x_i`
    fn second(&self, x: &[f64], j: usize, i: usize) -> f64;

    /// `∂³f/∂x_j²∂x_i`
    fn third(&self, x: &[f64], j: usize, i: usize) -> f64;

    /// Typical magnitude of coordinate `j`; sets quadrature and
    /// finite-difference scales.
    fn scale(&self, j: usize) -> f64;

    /// Upper `p`-quantile of the marginal of coordinate `j`.
    fn upper_quantile(&self, j: usize, p: f64) -> f64;

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|j| self.partial(x, j)).collect()
    }

    fn hess_diag(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|j| self.second(x, j, j)).collect()
    }

    fn describe(&self) -> String {
        format!("{}-dimensional density", self.dim())
    }
}

/// Univariate marginal families on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl Marginal {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Config(format!("exponential rate must be > 0, got {rate}")));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!(
                "gamma shape and scale must be > 0, got ({shape}, {scale})"
            )));
        }
        Ok(Self::Gamma { shape, scale })
    }

    /// As a gamma family: exponential(λ) is gamma(1, 1/λ).
    fn shape_scale(&self) -> (f64, f64) {
        match *self {
            Self::Exponential { rate } => (1.0, 1.0 / rate),
            Self::Gamma { shape, scale } => (shape, scale),
        }
    }

    pub fn mean(&self) -> f64 {
        let (k, s) = self.shape_scale();
        k * s
    }

    pub fn variance(&self) -> f64 {
        let (k, s) = self.shape_scale();
        k * s * s
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    /// `m`-th derivative of the pdf, `m ≤ 3`.
    ///
    /// With `g = C x^a e^{-cx}` the derivative is
    /// `C e^{-cx} Σ_k binom(m, k) (-c)^{m-k} a(a-1)…(a-k+1) x^{a-k}`.
    pub fn derivative(&self, x: f64, m: u32) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let (k, s) = self.shape_scale();
        let a = k - 1.0;
        let c = 1.0 / s;
        let ln_c = -(ln_gamma(k) + k * s.ln());
        let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
        let mut total = 0.0;
        let mut falling = 1.0;
        for kk in 0..=m {
            if falling != 0.0 {
                let coef = binom[m as usize][kk as usize] * (-c).powi((m - kk) as i32) * falling;
                let p = a - kk as f64;
                let term = if p == 0.0 {
                    (ln_c - c * x).exp()
                } else if x == 0.0 {
                    if p > 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (ln_c + p * x.ln() - c * x).exp()
                };
                total += coef * term;
            }
            falling *= a - kk as f64;
        }
        total
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::Gamma { shape, scale } => gamma_lr(shape, x / scale),
        }
    }

    /// `1 - F(x)` without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match *self {
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::Gamma { shape, scale } => gamma_ur(shape, x / scale),
        }
    }

    /// Inverse CDF given both `u` and `1 - u`, so upper-tail values keep full
    /// precision.
    ///
    /// Gamma marginals are inverted by safeguarded Newton iteration on the
    /// regularized incomplete gamma function, with a bisection bracket, to
    /// relative tolerance 1e-12.
    pub fn quantile_pair(&self, u: f64, one_minus_u: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => {
                if u < 0.5 {
                    -(-u).ln_1p() / rate
                } else {
                    -one_minus_u.ln() / rate
                }
            }
            Self::Gamma { .. } => self.gamma_quantile(u, one_minus_u),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.quantile_pair(u, 1.0 - u)
    }

    fn gamma_quantile(&self, u: f64, q: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if q <= 0.0 {
            return f64::INFINITY;
        }
        let upper_tail = u > 0.5;
        // residual is monotone increasing in x
        let residual = |x: f64| {
            if upper_tail {
                q - self.sf(x)
            } else {
                self.cdf(x) - u
            }
        };
        let mean = self.mean();
        let mut lo = 0.0;
        let mut hi = mean.max(1e-300);
        while residual(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..300 {
            let r = residual(x);
            if r == 0.0 {
                return x;
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.pdf(x);
            let mut next = if d > 0.0 && d.is_finite() { x - r / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-12 * x.abs() || hi - lo <= 1e-14 * hi {
                return next;
            }
            x = next;
        }
        x
    }
}

/// Product of independent marginals, one per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductModel {
    marginals: Vec<Marginal>,
}

impl ProductModel {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Size("a product model needs at least one coordinate".into()));
        }
        let model = Self { marginals };
        validate_derivatives(&model)?;
        Ok(model)
    }

    pub fn iid(marginal: Marginal, dim: usize) -> Result<Self> {
        Self::new(vec![marginal; dim])
    }

    pub fn exponential(rate: f64, dim: usize) -> Result<Self> {
        Self::iid(Marginal::exponential(rate)?, dim)
    }

    pub fn gamma(shape: f64, scale: f64, dim: usize) -> Result<Self> {
        Self::iid(Marginal::gamma(shape, scale)?, dim)
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    // Π_{k ∉ skip} g_k(x_k)
    fn rest(&self, x: &[f64], skip: &[usize]) -> f64 {
        self.marginals
            .iter()
            .enumerate()
            .filter(|(k, _)| !skip.contains(k))
            .map(|(k, g)| g.pdf(x[k]))
            .product()
    }
}

impl DensityModel for ProductModel {
    fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        self.rest(x, &[])
    }

    fn partial(&self, x: &[f64], j: usize) -> f64 {
        self.marginals[j].derivative(x[j], 1) * self.rest(x, &[j])
    }

    fn second(&self, x: &[f64], j: usize, i: usize) -> f64 {
        if i == j {
            self.marginals[j].derivative(x[j], 2) * self.rest(x, &[j])
        } else {
            self.marginals[j].derivative(x[j], 1)
                * self.marginals[i].derivative(x[i], 1)
                * self.rest(x, &[i, j])
        }
    }

    fn third(&self, x: &[f64], j: usize, i: usize) -> f64 {
        if i == j {
            self.marginals[j].derivative(x[j], 3) * self.rest(x, &[j])
        } else {
            self.marginals[j].derivative(x[j], 2)
                * self.marginals[i].derivative(x[i], 1)
                * self.rest(x, &[i, j])
        }
    }

    fn scale(&self, j: usize) -> f64 {
        self.marginals[j].mean()
    }

    fn upper_quantile(&self, j: usize, p: f64) -> f64 {
        self.marginals[j].quantile(p)
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self
            .marginals
            .iter()
            .map(|m| match m {
                Marginal::Exponential { rate } => format!("exp({rate})"),
                Marginal::Gamma { shape, scale } => format!("gamma({shape},{scale})"),
            })
            .collect();
        parts.join("⊗")
    }
}

type PdfFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Wraps an arbitrary pdf and supplies its partial derivatives by central
/// differences.
///
/// Steps are `1e-4·scale` for first derivatives and grow for higher orders
/// (`3e-4·scale` for second, `2e-3·scale` for third) so round-off stays below
/// truncation error.
#[derive(Clone)]
pub struct NumericModel {
    dim: usize,
    pdf: PdfFn,
    scales: Vec<f64>,
    quantiles: Vec<f64>,
}

impl std::fmt::Debug for NumericModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NumericModel")
            .field("dim", &self.dim)
            .field("scales", &self.scales)
            .finish()
    }
}

impl NumericModel {
    /// `scales[j]` is the typical magnitude of coordinate `j`;
    /// `quantiles_999[j]` its upper 0.999 quantile.
    pub fn new<F>(pdf: F, scales: Vec<f64>, quantiles_999: Vec<f64>) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if scales.is_empty() || scales.len() != quantiles_999.len() {
            return Err(Error::Size("scales and quantiles must be non-empty and of equal length".into()));
        }
        if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("scales must be positive".into()));
        }
        Ok(Self {
            dim: scales.len(),
            pdf: Arc::new(pdf),
            scales,
            quantiles: quantiles_999,
        })
    }

    fn step(&self, j: usize, factor: f64) -> f64 {
        factor * self.scales[j]
    }

    fn eval_shifted(&self, x: &[f64], shifts: &[(usize, f64)]) -> f64 {
        let mut y = x.to_vec();
        for &(j, h) in shifts {
            y[j] += h;
        }
        (self.pdf)(&y)
    }

    fn d1(&self, x: &[f64], j: usize, factor: f64) -> f64 {
        let h = self.step(j, factor);
        (self.eval_shifted(x, &[(j, h)]) - self.eval_shifted(x, &[(j, -h)])) / (2.0 * h)
    }
}

impl DensityModel for NumericModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        (self.pdf)(x)
    }

    fn partial(&self, x: &[f64], j: usize) -> f64 {
        self.d1(x, j, 1e-4)
    }

    fn second(&self, x: &[f64], j: usize, i: usize) -> f64 {
        if i == j {
            let h = self.step(j, 3e-4);
            (self.eval_shifted(x, &[(j, h)]) - 2.0 * (self.pdf)(x) + self.eval_shifted(x, &[(j, -h)]))
                / (h * h)
        } else {
            let hj = self.step(j, 3e-4);
            let hi = self.step(i, 3e-4);
            (self.eval_shifted(x, &[(j, hj), (i, hi)]) - self.eval_shifted(x, &[(j, hj), (i, -hi)])
                - self.eval_shifted(x, &[(j, -hj), (i, hi)])
                + self.eval_shifted(x, &[(j, -hj), (i, -hi)]))
                / (4.0 * hj * hi)
        }
    }

    fn third(&self, x: &[f64], j: usize, i: usize) -> f64 {
        let h = self.step(j, 2e-3);
        if i == j {
            (self.eval_shifted(x, &[(j, 2.0 * h)]) - 2.0 * self.eval_shifted(x, &[(j, h)])
                + 2.0 * self.eval_shifted(x, &[(j, -h)])
                - self.eval_shifted(x, &[(j, -2.0 * h)]))
                / (2.0 * h * h * h)
        } else {
            let hi = self.step(i, 2e-3);
            let second_j = |s: f64| {
                (self.eval_shifted(x, &[(j, h), (i, s)]) - 2.0 * self.eval_shifted(x, &[(i, s)])
                    + self.eval_shifted(x, &[(j, -h), (i, s)]))
                    / (h * h)
            };
            (second_j(hi) - second_j(-hi)) / (2.0 * hi)
        }
    }

    fn scale(&self, j: usize) -> f64 {
        self.scales[j]
    }

    /// Only the 0.999 quantile is known for a wrapped pdf; it is returned for
    /// every `p`.
    fn upper_quantile(&self, j: usize, _p: f64) -> f64 {
        self.quantiles[j]
    }

    fn describe(&self) -> String {
        format!("numeric {}-dimensional density", self.dim)
    }
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_inv(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::standard();
    n.inverse_cdf(p)
}

/// Joint density of `d` consecutive values of a Gaussian-copula AR(1)
/// process: latent correlation `φ^{|i-j|}` and identical marginals.
///
/// Derivatives come from [`NumericModel`].
pub fn copula_ar1_model(marginal: Marginal, phi: f64, dim: usize) -> Result<NumericModel> {
    if !(phi.abs() < 1.0) {
        return Err(Error::Config(format!("|phi| must be < 1, got {phi}")));
    }
    if dim == 0 {
        return Err(Error::Size("dimension must be >= 1".into()));
    }
    let one_m = 1.0 - phi * phi;
    let ln_det = (dim as f64 - 1.0) * one_m.ln();
    let pdf = move |x: &[f64]| -> f64 {
        let mut ln_marg = 0.0;
        let mut z = Vec::with_capacity(x.len());
        for &xi in x {
            let g = marginal.pdf(xi);
            if !(g > 0.0) {
                return 0.0;
            }
            ln_marg += g.ln();
            let lower = marginal.cdf(xi);
            let zi = if lower < 0.5 {
                std_normal_inv(lower)
            } else {
                -std_normal_inv(marginal.sf(xi))
            };
            z.push(zi);
        }
        // zᵀ(R⁻¹ - I)z with the tridiagonal AR(1) precision matrix
        let d = z.len();
        let mut quad = 0.0;
        for k in 0..d {
            let diag = if d == 1 {
                1.0
            } else if k == 0 || k == d - 1 {
                1.0 / one_m
            } else {
                (1.0 + phi * phi) / one_m
            };
            quad += (diag - 1.0) * z[k] * z[k];
            if k + 1 < d {
                quad += 2.0 * (-phi / one_m) * z[k] * z[k + 1];
            }
        }
        (ln_marg - 0.5 * ln_det - 0.5 * quad).exp()
    };
    let scales = vec![marginal.mean(); dim];
    let q = vec![marginal.quantile(0.999); dim];
    NumericModel::new(pdf, scales, q)
}

/// Checks analytic derivatives against central differences on a small probe
/// grid (relative tolerance 1e-4 on nonnegligible values).
fn validate_derivatives<M: DensityModel>(m: &M) -> Result<()> {
    let d = m.dim();
    let probes: Vec<Vec<f64>> = [0.6, 1.3, 2.2]
        .iter()
        .map(|&t| (0..d).map(|j| t * m.scale(j) * (1.0 + 0.1 * j as f64)).collect())
        .collect();
    for x in &probes {
        let f0 = m.pdf(x).abs().max(1e-300);
        for j in 0..d {
            let h = 1e-5 * m.scale(j);
            let shifted = |s: f64, g: &dyn Fn(&[f64]) -> f64| {
                let mut y = x.clone();
                y[j] += s;
                g(&y)
            };
            let fd1 = (shifted(h, &|y| m.pdf(y)) - shifted(-h, &|y| m.pdf(y))) / (2.0 * h);
            let fd2 = (shifted(h, &|y| m.partial(y, j)) - shifted(-h, &|y| m.partial(y, j))) / (2.0 * h);
            let fd3 = (shifted(h, &|y| m.second(y, j, j)) - shifted(-h, &|y| m.second(y, j, j))) / (2.0 * h);
            let checks = [
                ("first", m.partial(x, j), fd1),
                ("second", m.second(x, j, j), fd2),
                ("third", m.third(x, j, j), fd3),
            ];
            for (what, exact, fd) in checks {
                let scale = exact.abs().max(1e-3 * f0 / m.scale(j).powi(3));
                if (exact - fd).abs() > 1e-4 * scale {
                    return Err(Error::Config(format!(
                        "{what} derivative along x{j} disagrees with finite differences at {x:?}: {exact} vs {fd}"
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_derivatives_closed_form() {
        // f = x² e^{-x} / 2
        let g = Marginal::gamma(3.0, 1.0).unwrap();
        let x: f64 = 1.7;
        let e = (-x).exp();
        assert!((g.pdf(x) - x * x * e / 2.0).abs() < 1e-15);
        assert!((g.derivative(x, 1) - (2.0 * x - x * x) * e / 2.0).abs() < 1e-15);
        assert!((g.derivative(x, 2) - (2.0 - 4.0 * x + x * x) * e / 2.0).abs() < 1e-15);
        assert!((g.derivative(x, 3) - (-6.0 + 6.0 * x - x * x) * e / 2.0).abs() < 1e-15);
        // integer shape: no spurious infinities at the origin
        assert_eq!(g.pdf(0.0), 0.0);
        assert!((g.derivative(0.0, 2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_derivatives() {
        let m = Marginal::exponential(2.0).unwrap();
        let x: f64 = 0.4;
        let f = 2.0 * (-0.8f64).exp();
        assert!((m.pdf(x) - f).abs() < 1e-14);
        assert!((m.derivative(x, 1) + 2.0 * f).abs() < 4e-14);
        assert!((m.derivative(x, 2) - 4.0 * f).abs() < 8e-14);
        assert!((m.derivative(x, 3) + 8.0 * f).abs() < 2e-13);
    }

    #[test]
    fn quantiles_invert_cdf() {
        for m in [Marginal::gamma(3.0, 1.0).unwrap(), Marginal::gamma(0.7, 2.0).unwrap(), Marginal::exponential(1.5).unwrap()] {
            for &u in &[1e-9, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
                let x = m.quantile_pair(u, 1.0 - u);
                let back = if u < 0.5 { m.cdf(x) } else { 1.0 - m.sf(x) };
                assert!((back - u).abs() < 1e-11 * u.max(1e-3), "{m:?} u={u} x={x} back={back}");
            }
        }
    }

    #[test]
    fn product_model_mixed_partials() {
        let m = ProductModel::gamma(3.0, 1.0, 2).unwrap();
        let x = [1.2, 0.7];
        let g = Marginal::gamma(3.0, 1.0).unwrap();
        assert!((m.second(&x, 0, 1) - g.derivative(1.2, 1) * g.derivative(0.7, 1)).abs() < 1e-15);
        assert!((m.third(&x, 1, 0) - g.derivative(0.7, 2) * g.derivative(1.2, 1)).abs() < 1e-15);
        assert!((m.third(&x, 0, 0) - g.derivative(1.2, 3) * g.pdf(0.7)).abs() < 1e-15);
    }

    #[test]
    fn numeric_model_tracks_analytic() {
        let exact = ProductModel::gamma(3.0, 1.0, 2).unwrap();
        let inner = exact.clone();
        let num = NumericModel::new(move |x| inner.pdf(x), vec![3.0, 3.0], vec![11.0, 11.0]).unwrap();
        let x = [1.1, 2.3];
        for j in 0..2 {
            assert!((num.partial(&x, j) - exact.partial(&x, j)).abs() < 1e-7);
            for i in 0..2 {
                assert!((num.second(&x, j, i) - exact.second(&x, j, i)).abs() < 1e-6);
                assert!((num.third(&x, j, i) - exact.third(&x, j, i)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn copula_reduces_to_product_when_independent() {
        let marg = Marginal::exponential(1.0).unwrap();
        let c = copula_ar1_model(marg, 0.0, 2).unwrap();
        let p = ProductModel::exponential(1.0, 2).unwrap();
        for x in [[0.3, 1.4], [2.0, 0.1]] {
            assert!((c.pdf(&x) - p.pdf(&x)).abs() < 1e-13);
        }
        let c1 = copula_ar1_model(marg, 0.5, 1).unwrap();
        assert!((c1.pdf(&[0.8]) - marg.pdf(0.8)).abs() < 1e-14);
    }

    #[test]
    fn copula_density_integrates_to_one() {
        use crate::quadrature::{Domain, Resolution, TensorRule};
        let c = copula_ar1_model(Marginal::exponential(1.0).unwrap(), 0.5, 2).unwrap();
        let rule = TensorRule::for_domain(&Domain::Orthant, &[1.0, 1.0], Resolution::default());
        let mass = rule.sum(|x| c.pdf(x)).value;
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }
}
