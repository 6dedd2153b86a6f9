//! Python bindings for the gammakde estimators, expansions, bandwidth rules
//! and Monte Carlo harness.

use gammakde::bandwidth::{self, BandwidthRule};
use gammakde::simulate::{self, BandwidthChoice, ExperimentConfig, MixingProcessSpec, Process};
use gammakde::{theory, Bandwidth, Domain, EvalPoint, FieldKind, KernelPoint, Marginal, Resolution, Target};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: gammakde::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn target(which: &str) -> PyResult<Target> {
    match which {
        "density" => Ok(Target::Density),
        "derivative" => Ok(Target::Derivative),
        _ => Err(PyValueError::new_err(format!("which must be 'density' or 'derivative', got '{which}'"))),
    }
}

fn positive(z: f64) -> PyResult<gammakde::PositiveReal> {
    gammakde::PositiveReal::new(z).map_err(err)
}

fn kp(x: f64, b: f64) -> PyResult<KernelPoint> {
    KernelPoint::new(x, b).map_err(err)
}

#[pyfunction]
fn log_gamma(z: f64) -> PyResult<f64> {
    Ok(gammakde::log_gamma(positive(z)?))
}

#[pyfunction]
fn digamma(z: f64) -> PyResult<f64> {
    Ok(gammakde::digamma(positive(z)?))
}

#[pyfunction]
fn stirling_ratio(z: f64) -> PyResult<f64> {
    Ok(gammakde::stirling_ratio(positive(z)?))
}

/// Gamma kernel `K(t; x, b)`.
#[pyfunction]
fn kernel_eval(t: f64, x: f64, b: f64) -> PyResult<f64> {
    gammakde::kernel_eval(t, kp(x, b)?).map_err(err)
}

/// `∂K(t; x, b)/∂x`.
#[pyfunction]
fn kernel_grad_x(t: f64, x: f64, b: f64) -> PyResult<f64> {
    gammakde::kernel_grad_x(t, kp(x, b)?).map_err(err)
}

#[pyfunction]
fn l_term(t: f64, x: f64, b: f64) -> PyResult<f64> {
    gammakde::l_term(t, kp(x, b)?).map_err(err)
}

/// `n × d` nonnegative observations.
#[pyclass(name = "Sample", frozen)]
struct PySample(gammakde::Sample);

#[pymethods]
impl PySample {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        gammakde::Sample::from_rows(&rows).map(Self).map_err(err)
    }

    /// Overlapping windows of width `tau + 1` over a univariate series.
    #[staticmethod]
    fn fragment(series: Vec<f64>, tau: usize) -> PyResult<Self> {
        gammakde::fragment(&series, tau).map(Self).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.0.rows().map(<[f64]>::to_vec).collect()
    }

    fn __repr__(&self) -> String {
        format!("Sample(n={}, dim={})", self.0.n(), self.0.dim())
    }
}

fn bandwidth_for(s: &gammakde::Sample, b: f64) -> PyResult<Bandwidth> {
    Bandwidth::uniform(b, s.dim()).map_err(err)
}

fn point(x: Vec<f64>) -> PyResult<EvalPoint> {
    EvalPoint::new(x).map_err(err)
}

#[pyfunction]
fn density_at(sample: &PySample, x: Vec<f64>, b: f64) -> PyResult<f64> {
    gammakde::density_at(&sample.0, &point(x)?, &bandwidth_for(&sample.0, b)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (sample, x, b, axis=None))]
fn density_partial_at(sample: &PySample, x: Vec<f64>, b: f64, axis: Option<usize>) -> PyResult<f64> {
    let axis = axis.unwrap_or(sample.0.dim() - 1);
    gammakde::density_partial_at(&sample.0, &point(x)?, &bandwidth_for(&sample.0, b)?, axis).map_err(err)
}

/// `(∂f̂/∂x_axis) / max(f̂, floor)` and whether the floor was used.
#[pyfunction]
#[pyo3(signature = (sample, x, b_density, b_derivative, axis=None, floor=gammakde::estimator::LOG_DERIVATIVE_FLOOR))]
fn log_density_derivative_at(
    sample: &PySample,
    x: Vec<f64>,
    b_density: f64,
    b_derivative: f64,
    axis: Option<usize>,
    floor: f64,
) -> PyResult<(f64, bool)> {
    let axis = axis.unwrap_or(sample.0.dim() - 1);
    let r = gammakde::log_density_derivative_at(
        &sample.0,
        &point(x)?,
        &bandwidth_for(&sample.0, b_density)?,
        &bandwidth_for(&sample.0, b_derivative)?,
        axis,
        floor,
    )
    .map_err(err)?;
    Ok((r.value, r.truncated))
}

/// Values on the tensor grid spanned by `axes`, last axis fastest.
#[pyfunction]
#[pyo3(signature = (sample, axes, b, which="density", axis=None))]
fn field_on_grid(sample: &PySample, axes: Vec<Vec<f64>>, b: f64, which: &str, axis: Option<usize>) -> PyResult<Vec<f64>> {
    let kind = match target(which)? {
        Target::Density => FieldKind::Density,
        Target::Derivative => FieldKind::Derivative {
            axis: axis.unwrap_or(sample.0.dim() - 1),
        },
    };
    Ok(gammakde::field_on_grid(&sample.0, axes, &bandwidth_for(&sample.0, b)?, kind)
        .map_err(err)?
        .values)
}

/// Product of identical exponential or gamma marginals.
#[pyclass(name = "ProductModel", frozen)]
struct PyProductModel(gammakde::ProductModel);

#[pymethods]
impl PyProductModel {
    #[staticmethod]
    #[pyo3(signature = (rate, dim=1))]
    fn exponential(rate: f64, dim: usize) -> PyResult<Self> {
        gammakde::ProductModel::exponential(rate, dim).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (shape, scale, dim=1))]
    fn gamma(shape: f64, scale: f64, dim: usize) -> PyResult<Self> {
        gammakde::ProductModel::gamma(shape, scale, dim).map(Self).map_err(err)
    }

    fn pdf(&self, x: Vec<f64>) -> f64 {
        use gammakde::DensityModel;
        self.0.pdf(&x)
    }

    #[getter]
    fn dim(&self) -> usize {
        use gammakde::DensityModel;
        self.0.dim()
    }
}

#[pyclass(name = "ExpansionReport", frozen, get_all)]
struct PyReport {
    name: String,
    value: f64,
    order: String,
    components: Vec<(String, f64)>,
    coefficients: Vec<(String, f64)>,
}

impl From<theory::ExpansionReport> for PyReport {
    fn from(r: theory::ExpansionReport) -> Self {
        Self {
            name: r.name,
            value: r.value,
            order: r.order,
            components: r.components,
            coefficients: r.coefficients,
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!("ExpansionReport({}={:e})", self.name, self.value)
    }
}

#[pyfunction]
fn bias_density(model: &PyProductModel, x: Vec<f64>, b: f64) -> PyResult<PyReport> {
    theory::bias_density(&model.0, &x, b).map(Into::into).map_err(err)
}

#[pyfunction]
fn var_density(model: &PyProductModel, x: Vec<f64>, b: f64, n: usize) -> PyResult<PyReport> {
    theory::var_density(&model.0, &x, b, n).map(Into::into).map_err(err)
}

#[pyfunction]
fn bias_derivative(model: &PyProductModel, x: Vec<f64>, b: f64) -> PyResult<PyReport> {
    theory::bias_derivative(&model.0, &x, b).map(Into::into).map_err(err)
}

#[pyfunction]
fn var_derivative(model: &PyProductModel, x: Vec<f64>, b: f64, n: usize) -> PyResult<PyReport> {
    theory::var_derivative(&model.0, &x, b, n).map(Into::into).map_err(err)
}

/// `b(n) = constant · n^{-exponent}`.
#[pyclass(name = "BandwidthRule", frozen)]
struct PyRule(BandwidthRule);

#[pymethods]
impl PyRule {
    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.name()
    }

    #[getter]
    fn constant(&self) -> f64 {
        self.0.constant
    }

    #[getter]
    fn exponent(&self) -> f64 {
        self.0.exponent
    }

    #[getter]
    fn metadata(&self) -> Vec<(String, String)> {
        self.0.metadata.clone()
    }

    fn bandwidth(&self, n: usize) -> f64 {
        self.0.bandwidth(n)
    }

    fn __repr__(&self) -> String {
        format!("BandwidthRule({}, C={}, e={})", self.0.kind.name(), self.0.constant, self.0.exponent)
    }
}

#[pyfunction]
fn density_bandwidth(model: &PyProductModel) -> PyResult<PyRule> {
    bandwidth::density_bandwidth(&model.0, &Domain::Orthant, Resolution::default())
        .map(PyRule)
        .map_err(err)
}

#[pyfunction]
fn derivative_bandwidth(model: &PyProductModel) -> PyResult<PyRule> {
    bandwidth::derivative_bandwidth(&model.0, &Domain::Orthant, Resolution::default())
        .map(PyRule)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (sample, which="density", stages=2))]
fn plug_in_bandwidth(sample: &PySample, which: &str, stages: u8) -> PyResult<PyRule> {
    bandwidth::plug_in_bandwidth(&sample.0, target(which)?, stages)
        .map(PyRule)
        .map_err(err)
}

fn marginal(family: &str, a: f64, b: f64) -> PyResult<Marginal> {
    match family {
        "exp" => Marginal::exponential(a),
        "gamma" => Marginal::gamma(a, b),
        _ => return Err(PyValueError::new_err(format!("family must be 'exp' or 'gamma', got '{family}'"))),
    }
    .map_err(err)
}

/// Copula AR(1) series with an exponential (`a` = rate) or gamma (`a` = shape,
/// `b` = scale) marginal.
#[pyfunction]
#[pyo3(signature = (phi, m, seed, family="exp", a=1.0, b=1.0))]
fn gen_series(phi: f64, m: usize, seed: u64, family: &str, a: f64, b: f64) -> PyResult<Vec<f64>> {
    let spec = MixingProcessSpec::new(phi, marginal(family, a, b)?, 1).map_err(err)?;
    simulate::gen_series(&spec, m, seed).map_err(err)
}

/// Monte Carlo MISE with a fixed bandwidth or the reference rule of the true
/// model; returns the delimited-text result.
#[pyfunction]
#[pyo3(signature = (n_grid, replicates, seed, which="density", phi=None, family="exp", a=1.0, b=1.0, tau=0, bandwidth=None))]
#[allow(clippy::too_many_arguments)]
fn mc_mise(
    n_grid: Vec<usize>,
    replicates: usize,
    seed: u64,
    which: &str,
    phi: Option<f64>,
    family: &str,
    a: f64,
    b: f64,
    tau: usize,
    bandwidth: Option<f64>,
) -> PyResult<String> {
    let which = target(which)?;
    let marg = marginal(family, a, b)?;
    let process = match phi {
        None => Process::Iid { marginal: marg, d: tau + 1 },
        Some(phi) => Process::Mixing(MixingProcessSpec::new(phi, marg, tau + 1).map_err(err)?),
    };
    let choice = match bandwidth {
        Some(b) => BandwidthChoice::Fixed(b),
        None => {
            let truth = process.truth().map_err(err)?;
            let res = Resolution::default();
            let rule = match which {
                Target::Density => bandwidth::density_bandwidth(truth.as_ref(), &Domain::Orthant, res),
                Target::Derivative => bandwidth::derivative_bandwidth(truth.as_ref(), &Domain::Orthant, res),
            }
            .map_err(err)?;
            BandwidthChoice::Rule(rule)
        }
    };
    let cfg = ExperimentConfig::new(process, n_grid, replicates, choice, which, seed).map_err(err)?;
    simulate::mc_mise(&cfg).map(|r| r.to_text()).map_err(err)
}

#[pymodule]
fn gammakde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyProductModel>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyRule>()?;
    m.add_function(wrap_pyfunction!(log_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(digamma, m)?)?;
    m.add_function(wrap_pyfunction!(stirling_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_eval, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_grad_x, m)?)?;
    m.add_function(wrap_pyfunction!(l_term, m)?)?;
    m.add_function(wrap_pyfunction!(density_at, m)?)?;
    m.add_function(wrap_pyfunction!(density_partial_at, m)?)?;
    m.add_function(wrap_pyfunction!(log_density_derivative_at, m)?)?;
    m.add_function(wrap_pyfunction!(field_on_grid, m)?)?;
    m.add_function(wrap_pyfunction!(bias_density, m)?)?;
    m.add_function(wrap_pyfunction!(var_density, m)?)?;
    m.add_function(wrap_pyfunction!(bias_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(var_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(density_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(derivative_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(plug_in_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(gen_series, m)?)?;
    m.add_function(wrap_pyfunction!(mc_mise, m)?)?;
    Ok(())
}
