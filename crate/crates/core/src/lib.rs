//! Gamma product-kernel estimation of densities and their partial derivatives
//! on the nonnegative orthant, for independent and strongly mixing data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bandwidth;
pub mod error;
pub mod estimator;
pub mod io;
pub mod kernel;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod special;
pub mod theory;

pub use error::{Error, Result};
pub use estimator::{
    density_at, density_partial_at, field_on_grid, fragment, log_density_derivative_at, Bandwidth, EvalPoint,
    FieldKind, FieldOnGrid, LogDerivative, Sample,
};
pub use kernel::{kernel_eval, kernel_grad_x, l_term, rho, Branch, KernelPoint};
pub use model::{DensityModel, Marginal, NumericModel, ProductModel};
pub use quadrature::{Domain, Resolution};
pub use special::{digamma, log_gamma, stirling_ratio, PositiveReal};
pub use theory::{ExpansionReport, MixingProfile, Target};
