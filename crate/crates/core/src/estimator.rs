//! Product gamma-kernel estimators of a density, its partial derivatives and
//! its logarithmic derivative.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelCoord;

/// `n × d` nonnegative observations, rows in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    n: usize,
    d: usize,
    data: Vec<f64>,
    logs: Vec<f64>,
}

impl Sample {
    /// Builds a sample from row-major data.
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Size(format!("sample must be at least 1×1, got {n}×{d}")));
        }
        if data.len() != n * d {
            return Err(Error::Size(format!(
                "expected {} values for a {n}×{d} sample, got {}",
                n * d,
                data.len()
            )));
        }
        for (k, &v) in data.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Negative {
                    row: k / d,
                    col: k % d,
                    value: v,
                });
            }
        }
        let logs = data.iter().map(|v| v.ln()).collect();
        Ok(Self { n, d, data, logs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Size(format!(
                "row {bad} has {} columns, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), rows.len(), d)
    }

    /// A univariate series as an `m × 1` sample.
    pub fn from_series(series: &[f64]) -> Result<Self> {
        Self::new(series.to_vec(), series.len(), 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.d).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn log_row(&self, i: usize) -> &[f64] {
        &self.logs[i * self.d..(i + 1) * self.d]
    }

    fn check_positive_column(&self, axis: usize) -> Result<()> {
        match self.column(axis).position(|v| v == 0.0) {
            Some(row) => Err(Error::ZeroObservation { row, col: axis }),
            None => Ok(()),
        }
    }
}

/// Slides a window of length `tau + 1` over `series`: row `k` is
/// `(series[k], …, series[k + tau])`.
pub fn fragment(series: &[f64], tau: usize) -> Result<Sample> {
    let m = series.len();
    if m <= tau {
        return Err(Error::Size(format!(
            "series of length {m} is too short for fragments of width {}",
            tau + 1
        )));
    }
    let d = tau + 1;
    let rows = m - tau;
    let mut data = Vec::with_capacity(rows * d);
    for k in 0..rows {
        data.extend_from_slice(&series[k..k + d]);
    }
    Sample::new(data, rows, d)
}

/// Per-coordinate positive smoothing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth(Vec<f64>);

impl Bandwidth {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::Size("bandwidth vector is empty".into()));
        }
        if let Some(bad) = b.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("bandwidth entries must be > 0, got {bad}")));
        }
        Ok(Self(b))
    }

    pub fn uniform(b: f64, d: usize) -> Result<Self> {
        Self::new(vec![b; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// A point of the nonnegative orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint(Vec<f64>);

impl EvalPoint {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Size("evaluation point is empty".into()));
        }
        if let Some(bad) = x.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Config(format!("evaluation coordinates must be >= 0, got {bad}")));
        }
        Ok(Self(x))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(s: &Sample, x: usize, b: usize) -> Result<()> {
    if x != s.dim() || b != s.dim() {
        return Err(Error::Size(format!(
            "sample has dimension {}, point has {x}, bandwidth has {b}",
            s.dim()
        )));
    }
    Ok(())
}

fn coords(x: &[f64], b: &[f64]) -> Vec<KernelCoord> {
    x.iter().zip(b).map(|(&x, &b)| KernelCoord::new(x, b)).collect()
}

#[inline]
fn ln_product(coords: &[KernelCoord], row: &[f64], logs: &[f64]) -> f64 {
    coords
        .iter()
        .zip(row.iter().zip(logs))
        .map(|(c, (&t, &lt))| c.ln_kernel(t, lt))
        .sum()
}

fn density_with(s: &Sample, coords: &[KernelCoord]) -> f64 {
    let total: f64 = (0..s.n())
        .map(|i| ln_product(coords, s.row(i), s.log_row(i)).exp())
        .sum();
    total / s.n() as f64
}

fn partial_with(s: &Sample, coords: &[KernelCoord], axis: usize) -> f64 {
    let total: f64 = (0..s.n())
        .map(|i| {
            let logs = s.log_row(i);
            coords[axis].grad_factor(logs[axis]) * ln_product(coords, s.row(i), logs).exp()
        })
        .sum();
    total / s.n() as f64
}

/// `(1/n) Σ_i Π_j K_{ρ(x_j, b_j), b_j}(X_ij)`.
pub fn density_at(s: &Sample, x: &EvalPoint, b: &Bandwidth) -> Result<f64> {
    check_dims(s, x.0.len(), b.dim())?;
    Ok(density_with(s, &coords(&x.0, &b.0)))
}

/// Partial derivative of [`density_at`] with respect to `x[axis]`.
///
/// Each term carries the factor `L/b` on the interior branch and
/// `x L / (2b²)` on the boundary branch. Observations equal to zero along
/// `axis` are rejected since `L` involves `ln t`.
pub fn density_partial_at(s: &Sample, x: &EvalPoint, b: &Bandwidth, axis: usize) -> Result<f64> {
    check_dims(s, x.0.len(), b.dim())?;
    check_axis(s, axis)?;
    s.check_positive_column(axis)?;
    Ok(partial_with(s, &coords(&x.0, &b.0), axis))
}

fn check_axis(s: &Sample, axis: usize) -> Result<()> {
    if axis >= s.dim() {
        return Err(Error::Size(format!(
            "axis {axis} out of range for dimension {}",
            s.dim()
        )));
    }
    Ok(())
}

/// Default floor for the density in the log-derivative ratio.
pub const LOG_DERIVATIVE_FLOOR: f64 = 1e-12;

/// Estimated log-derivative, with a marker when the density estimate fell
/// below the floor and was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDerivative {
    pub value: f64,
    pub truncated: bool,
}

/// `∂f/∂x_axis / f`, each estimated with its own bandwidth.
pub fn log_density_derivative_at(
    s: &Sample,
    x: &EvalPoint,
    b_density: &Bandwidth,
    b_derivative: &Bandwidth,
    axis: usize,
    floor: f64,
) -> Result<LogDerivative> {
    let f = density_at(s, x, b_density)?;
    let df = density_partial_at(s, x, b_derivative, axis)?;
    let truncated = f < floor;
    Ok(LogDerivative {
        value: df / f.max(floor),
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Density,
    Derivative { axis: usize },
}

/// Estimated values on a tensor grid. Values are stored with the last axis
/// varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnGrid {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub kind: FieldKind,
}

impl FieldOnGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Coordinates of node `k` in storage order.
    pub fn node(&self, k: usize) -> Vec<f64> {
        let mut rem = k;
        let mut x = vec![0.0; self.axes.len()];
        for j in (0..self.axes.len()).rev() {
            let len = self.axes[j].len();
            x[j] = self.axes[j][rem % len];
            rem /= len;
        }
        x
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (self.node(k), v))
    }
}

fn check_axes(axes: &[Vec<f64>]) -> Result<()> {
    for (j, axis) in axes.iter().enumerate() {
        if axis.is_empty() {
            return Err(Error::Size(format!("grid axis {j} is empty")));
        }
        if axis.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("grid axis {j} leaves the nonnegative orthant")));
        }
        if axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("grid axis {j} is not strictly increasing")));
        }
    }
    Ok(())
}

/// Evaluates the density or a partial derivative at every node of a tensor
/// grid. Node values are identical to the pointwise functions.
pub fn field_on_grid(s: &Sample, axes: Vec<Vec<f64>>, b: &Bandwidth, kind: FieldKind) -> Result<FieldOnGrid> {
    check_dims(s, axes.len(), b.dim())?;
    check_axes(&axes)?;
    if let FieldKind::Derivative { axis } = kind {
        check_axis(s, axis)?;
        s.check_positive_column(axis)?;
    }
    // kernel constants for every grid value on every axis
    let table: Vec<Vec<KernelCoord>> = axes
        .iter()
        .zip(b.as_slice())
        .map(|(axis, &bj)| axis.iter().map(|&x| KernelCoord::new(x, bj)).collect())
        .collect();
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let values = (0..total)
        .into_par_iter()
        .map(|k| {
            let mut rem = k;
            let mut node = vec![table[0][0]; shape.len()];
            for j in (0..shape.len()).rev() {
                node[j] = table[j][rem % shape[j]];
                rem /= shape[j];
            }
            match kind {
                FieldKind::Density => density_with(s, &node),
                FieldKind::Derivative { axis } => partial_with(s, &node, axis),
            }
        })
        .collect();
    Ok(FieldOnGrid { axes, values, kind })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: &[f64]) -> EvalPoint {
        EvalPoint::new(x.to_vec()).unwrap()
    }

    #[test]
    fn fragment_windows() {
        let s = fragment(&[1.0, 2.0, 3.0, 4.0], 0).unwrap();
        assert_eq!((s.n(), s.dim()), (4, 1));
        assert_eq!(s.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let s = fragment(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!((s.n(), s.dim()), (3, 2));
        assert_eq!(s.as_slice(), &[1.0, 2.0, 2.0, 3.0, 3.0, 4.0]);
        let s = fragment(&[1.0, 2.0, 3.0, 4.0, 5.0], 4).unwrap();
        assert_eq!((s.n(), s.dim()), (1, 5));
        assert!(matches!(fragment(&[1.0, 2.0], 2), Err(Error::Size(_))));
    }

    #[test]
    fn sample_rejects_negative() {
        let err = Sample::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap_err();
        assert_eq!(err, Error::Negative { row: 1, col: 1, value: -1.0 });
    }

    #[test]
    fn single_observation_values() {
        let e1 = (-1.0f64).exp();
        let b = Bandwidth::uniform(1.0, 1).unwrap();
        let s = Sample::from_series(&[1.0]).unwrap();
        assert!((density_at(&s, &pt(&[2.0]), &b).unwrap() - e1).abs() < 1e-14);
        let s2 = Sample::from_series(&[1.0, 1.0]).unwrap();
        assert!((density_at(&s2, &pt(&[2.0]), &b).unwrap() - e1).abs() < 1e-14);
        let d = density_partial_at(&s, &pt(&[2.0]), &b, 0).unwrap();
        assert!((d + 0.155_533_664_932_064).abs() < 1e-12);
        let r = log_density_derivative_at(&s, &pt(&[2.0]), &b, &b, 0, LOG_DERIVATIVE_FLOOR).unwrap();
        assert!((r.value + 0.422_784_335_098_467_1).abs() < 1e-12);
        assert!(!r.truncated);
    }

    #[test]
    fn log_derivative_clamps_and_flags() {
        let s = Sample::from_series(&[1.0]).unwrap();
        let b = Bandwidth::uniform(0.01, 1).unwrap();
        // far from the only observation the density underflows the floor
        let x = pt(&[9.0]);
        let r = log_density_derivative_at(&s, &x, &b, &b, 0, 1e-12).unwrap();
        assert!(r.truncated);
        let df = density_partial_at(&s, &x, &b, 0).unwrap();
        assert!(r.value.abs() <= df.abs() / 1e-12 * (1.0 + 1e-12));
    }

    #[test]
    fn zero_observations() {
        let s = Sample::from_rows(&[vec![0.5, 1.0], vec![0.0, 2.0]]).unwrap();
        let b = Bandwidth::uniform(0.2, 2).unwrap();
        // density is fine with zeros
        assert!(density_at(&s, &pt(&[0.0, 1.0]), &b).unwrap() > 0.0);
        assert_eq!(
            density_partial_at(&s, &pt(&[1.0, 1.0]), &b, 0).unwrap_err(),
            Error::ZeroObservation { row: 1, col: 0 }
        );
        assert!(density_partial_at(&s, &pt(&[1.0, 1.0]), &b, 1).is_ok());
    }

    #[test]
    fn derivative_vanishes_at_origin() {
        let s = Sample::from_series(&[0.3, 0.9, 1.7]).unwrap();
        let b = Bandwidth::uniform(0.2, 1).unwrap();
        assert_eq!(density_partial_at(&s, &pt(&[0.0]), &b, 0).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let s = Sample::from_series(&[1.0, 2.0]).unwrap();
        let b = Bandwidth::uniform(0.2, 2).unwrap();
        assert!(matches!(density_at(&s, &pt(&[1.0, 1.0]), &b), Err(Error::Size(_))));
    }

    #[test]
    fn grid_matches_pointwise() {
        let s = Sample::from_rows(&[vec![0.4, 1.1], vec![1.3, 0.2], vec![2.2, 0.9]]).unwrap();
        let b = Bandwidth::new(vec![0.3, 0.15]).unwrap();
        let axes = vec![vec![0.1, 0.7, 1.5], vec![0.2, 1.0]];
        for kind in [FieldKind::Density, FieldKind::Derivative { axis: 1 }] {
            let field = field_on_grid(&s, axes.clone(), &b, kind).unwrap();
            assert_eq!(field.values.len(), 6);
            for (x, v) in field.nodes() {
                let want = match kind {
                    FieldKind::Density => density_at(&s, &pt(&x), &b).unwrap(),
                    FieldKind::Derivative { axis } => density_partial_at(&s, &pt(&x), &b, axis).unwrap(),
                };
                assert_eq!(v.to_bits(), want.to_bits());
            }
        }
        let single = field_on_grid(&s, vec![vec![0.7], vec![1.0]], &b, FieldKind::Density).unwrap();
        assert_eq!(single.values[0], density_at(&s, &pt(&[0.7, 1.0]), &b).unwrap());
    }

    #[test]
    fn grid_rejects_unsorted_axes() {
        let s = Sample::from_series(&[1.0]).unwrap();
        let b = Bandwidth::uniform(0.2, 1).unwrap();
        assert!(field_on_grid(&s, vec![vec![1.0, 0.5]], &b, FieldKind::Density).is_err());
        assert!(field_on_grid(&s, vec![vec![-1.0, 0.5]], &b, FieldKind::Density).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sample_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
            (1usize..4).prop_flat_map(|d| {
                (
                    prop::collection::vec(prop::collection::vec(0.01f64..6.0, d), 1..25),
                    prop::collection::vec(0.0f64..5.0, d),
                    prop::collection::vec(0.02f64..0.8, d),
                )
            })
        }

        proptest! {
            #[test]
            fn density_nonnegative((rows, x, b) in sample_strategy()) {
                let s = Sample::from_rows(&rows).unwrap();
                let v = density_at(&s, &EvalPoint::new(x).unwrap(), &Bandwidth::new(b).unwrap()).unwrap();
                prop_assert!(v >= 0.0 && v.is_finite());
            }

            #[test]
            fn permutation_invariant((rows, x, b) in sample_strategy(), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let s = Sample::from_rows(&rows).unwrap();
                let mut shuffled = rows.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let t = Sample::from_rows(&shuffled).unwrap();
                let x = EvalPoint::new(x).unwrap();
                let b = Bandwidth::new(b).unwrap();
                let (a, c) = (density_at(&s, &x, &b).unwrap(), density_at(&t, &x, &b).unwrap());
                prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1e-300));
                let (a, c) = (density_partial_at(&s, &x, &b, 0).unwrap(), density_partial_at(&t, &x, &b, 0).unwrap());
                prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1e-300));
            }

            #[test]
            fn partial_is_derivative((rows, x, b) in sample_strategy(), axis_pick in 0usize..3) {
                let s = Sample::from_rows(&rows).unwrap();
                let axis = axis_pick % s.dim();
                let h = 1e-6;
                let mut x = x;
                // stay within one branch on both sides
                let two_b = 2.0 * b[axis];
                prop_assume!((x[axis] - two_b).abs() > 10.0 * h && x[axis] > 10.0 * h);
                let bw = Bandwidth::new(b).unwrap();
                let g = density_partial_at(&s, &EvalPoint::new(x.clone()).unwrap(), &bw, axis).unwrap();
                x[axis] += h;
                let up = density_at(&s, &EvalPoint::new(x.clone()).unwrap(), &bw).unwrap();
                x[axis] -= 2.0 * h;
                let down = density_at(&s, &EvalPoint::new(x).unwrap(), &bw).unwrap();
                let fd = (up - down) / (2.0 * h);
                let scale = g.abs().max(1e-3 * (up.abs() + down.abs()));
                prop_assume!(scale > 1e-250);
                prop_assert!((g - fd).abs() <= 1e-5 * scale, "g={} fd={}", g, fd);
            }
        }
    }
}
