//! Quadrature rules: adaptive Gauss–Kronrod on intervals, double-exponential
//! nodes on the half line, trapezoid nodes on boxes, and their tensor products.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Integration region for the functionals used by the theory and bandwidth
/// modules.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// The whole nonnegative orthant, integrated with exp-sinh nodes per axis.
    Orthant,
    /// A box `[lo_j, hi_j]` per axis, integrated with the tensor trapezoid rule.
    Box(Vec<(f64, f64)>),
}

/// Resolution knobs for tensor quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    /// Step of the exp-sinh rule in the transformed variable.
    pub de_step: f64,
    /// Trapezoid nodes per axis for box domains.
    pub box_nodes: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            de_step: 0.0625,
            box_nodes: 200,
        }
    }
}

impl Resolution {
    pub fn doubled(self) -> Self {
        Self {
            de_step: self.de_step / 2.0,
            box_nodes: 2 * self.box_nodes - 1,
        }
    }
}

/// One-dimensional rule as `(node, weight)` pairs.
pub type Rule1d = Vec<(f64, f64)>;

const DE_T_MIN: f64 = -4.5;
const DE_T_MAX: f64 = 4.0;

/// Exp-sinh nodes on `(0, ∞)`: `x = s·exp(π/2 · sinh t)`.
///
/// Handles integrable power singularities at the origin and exponential
/// decay at infinity.
pub fn half_line_rule(scale: f64, step: f64) -> Rule1d {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let k_min = (DE_T_MIN / step).floor() as i64;
    let k_max = (DE_T_MAX / step).ceil() as i64;
    (k_min..=k_max)
        .map(|k| {
            let t = k as f64 * step;
            let x = scale * (half_pi * t.sinh()).exp();
            let w = step * half_pi * t.cosh() * x;
            (x, w)
        })
        .collect()
}

/// Composite trapezoid nodes on `[lo, hi]`.
pub fn trapezoid_rule(lo: f64, hi: f64, nodes: usize) -> Rule1d {
    assert!(nodes >= 2, "trapezoid rule needs at least two nodes");
    let h = (hi - lo) / (nodes - 1) as f64;
    (0..nodes)
        .map(|i| {
            let x = if i == nodes - 1 { hi } else { lo + i as f64 * h };
            let w = if i == 0 || i == nodes - 1 { 0.5 * h } else { h };
            (x, w)
        })
        .collect()
}

/// Tensor product of per-axis rules.
#[derive(Debug, Clone)]
pub struct TensorRule {
    axes: Vec<Rule1d>,
    // whether each axis comes from the half-line rule (enables end checks)
    half_line: bool,
}

/// Result of a tensor sum, with the share of the total that came from the
/// outermost nodes of each axis.
#[derive(Debug, Clone)]
pub struct TensorSum {
    pub value: f64,
    pub abs_total: f64,
    // per axis: (|contribution| from the two lowest nodes, from the two highest)
    pub end_mass: Vec<(f64, f64)>,
    pub non_finite_at: Option<Vec<f64>>,
}

impl TensorRule {
    pub fn new(axes: Vec<Rule1d>) -> Self {
        Self {
            axes,
            half_line: false,
        }
    }

    pub fn for_domain(domain: &Domain, scales: &[f64], res: Resolution) -> Self {
        match domain {
            Domain::Orthant => Self {
                axes: scales.iter().map(|&s| half_line_rule(s, res.de_step)).collect(),
                half_line: true,
            },
            Domain::Box(bounds) => Self::new(
                bounds
                    .iter()
                    .map(|&(lo, hi)| trapezoid_rule(lo, hi, res.box_nodes))
                    .collect(),
            ),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Rule1d] {
        &self.axes
    }

    /// Sums `w·f(x)` over all nodes. Partial sums over slices of the first
    /// axis run in parallel and are combined in index order, so the result
    /// does not depend on the number of worker threads.
    pub fn sum<F>(&self, f: F) -> TensorSum
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let d = self.axes.len();
        let first = &self.axes[0];
        let partials: Vec<TensorSum> = first
            .par_iter()
            .enumerate()
            .map(|(i0, &(x0, w0))| {
                let mut acc = TensorSum {
                    value: 0.0,
                    abs_total: 0.0,
                    end_mass: vec![(0.0, 0.0); d],
                    non_finite_at: None,
                };
                let mut idx = vec![0usize; d];
                idx[0] = i0;
                let mut x = vec![0.0; d];
                x[0] = x0;
                loop {
                    let mut w = w0;
                    for j in 1..d {
                        let (xj, wj) = self.axes[j][idx[j]];
                        x[j] = xj;
                        w *= wj;
                    }
                    let v = f(&x);
                    if !v.is_finite() {
                        if acc.non_finite_at.is_none() {
                            acc.non_finite_at = Some(x.clone());
                        }
                    } else {
                        let term = w * v;
                        acc.value += term;
                        acc.abs_total += term.abs();
                        for j in 0..d {
                            let len = self.axes[j].len();
                            if idx[j] < 2 {
                                acc.end_mass[j].0 += term.abs();
                            } else if idx[j] + 2 >= len {
                                acc.end_mass[j].1 += term.abs();
                            }
                        }
                    }
                    // odometer over axes 1..d
                    let mut j = d;
                    loop {
                        if j <= 1 {
                            return acc;
                        }
                        j -= 1;
                        idx[j] += 1;
                        if idx[j] < self.axes[j].len() {
                            break;
                        }
                        idx[j] = 0;
                    }
                }
            })
            .collect();

        let mut out = TensorSum {
            value: 0.0,
            abs_total: 0.0,
            end_mass: vec![(0.0, 0.0); d],
            non_finite_at: None,
        };
        for p in partials {
            out.value += p.value;
            out.abs_total += p.abs_total;
            for j in 0..d {
                out.end_mass[j].0 += p.end_mass[j].0;
                out.end_mass[j].1 += p.end_mass[j].1;
            }
            if out.non_finite_at.is_none() {
                out.non_finite_at = p.non_finite_at;
            }
        }
        out
    }

    /// Like [`TensorRule::sum`] but fails when the integrand is non-finite on a
    /// node, or (for half-line rules) when the outermost nodes carry a
    /// non-negligible share of the total, which is how a divergent integral
    /// shows up under the exp-sinh map.
    pub fn integrate<F>(&self, name: &str, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        const END_SHARE: f64 = 1e-7;
        let s = self.sum(f);
        if let Some(at) = &s.non_finite_at {
            return Err(Error::Divergent {
                integral: name.to_string(),
                face: describe_point(at),
            });
        }
        if self.half_line && s.abs_total > 0.0 {
            for (j, &(lo, hi)) in s.end_mass.iter().enumerate() {
                if lo > END_SHARE * s.abs_total {
                    return Err(Error::Divergent {
                        integral: name.to_string(),
                        face: format!("the face x{j} = 0"),
                    });
                }
                if hi > END_SHARE * s.abs_total {
                    return Err(Error::Divergent {
                        integral: name.to_string(),
                        face: format!("x{j} → ∞"),
                    });
                }
            }
        }
        Ok(s.value)
    }
}

fn describe_point(x: &[f64]) -> String {
    let near_zero: Vec<String> = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < 1e-3)
        .map(|(j, _)| format!("x{j} = 0"))
        .collect();
    if near_zero.is_empty() {
        format!("the point {x:?} (non-finite integrand)")
    } else {
        format!("the face {} (non-finite integrand)", near_zero.join(", "))
    }
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below the absolute tolerance `tol` or 4000 subintervals
/// are in use.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut err = e;
    while err > tol && parts.len() < MAX_INTERVALS {
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, e) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval at floating-point resolution
            parts.push((lo, hi, gk15(&f, lo, hi).0, 0.0));
            err -= e;
            continue;
        }
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        err += el + er - e;
        parts.push((lo, mid, vl, el));
        parts.push((mid, hi, vr, er));
    }
    // ordered summation so the result does not depend on bisection history
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    parts.iter().map(|p| p.2).sum()
}
