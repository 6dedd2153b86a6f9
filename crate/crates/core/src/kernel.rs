//! The two-branch gamma kernel.
//!
//! For an evaluation coordinate `x` and bandwidth `b`, the kernel in `t` is a
//! gamma density with scale `b` and shape `ρ(x, b)`:
//!
//! ```text
//! ρ(x, b) = x / b               if x >= 2b   (interior)
//!         = (x / (2b))² + 1     if x <  2b   (boundary strip)
//! ```
//!
//! Both branches give `ρ = 2` at `x = 2b`, so the kernel is continuous in `x`.

use crate::error::{domain, Result};
use crate::special::{ln_gamma, psi};

/// An evaluation coordinate paired with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    x: f64,
    b: f64,
}

impl KernelPoint {
    pub fn new(x: f64, b: f64) -> Result<Self> {
        if !(x.is_finite() && x >= 0.0) {
            return Err(domain("KernelPoint", format!("x must be finite and >= 0, got {x}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(domain("KernelPoint", format!("b must be finite and > 0, got {b}")));
        }
        Ok(Self { x, b })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Interior,
    Boundary,
}

/// Shape parameter and the branch that produced it.
pub fn rho(p: KernelPoint) -> (f64, Branch) {
    rho_raw(p.x, p.b)
}

#[inline]
fn rho_raw(x: f64, b: f64) -> (f64, Branch) {
    if x >= 2.0 * b {
        (x / b, Branch::Interior)
    } else {
        let h = x / (2.0 * b);
        (h * h + 1.0, Branch::Boundary)
    }
}

/// Kernel value `t^{ρ-1} e^{-t/b} / (b^ρ Γ(ρ))`.
///
/// At `t = 0` the limit is returned: 0 for `ρ > 1`, `1/b` for `ρ = 1`.
pub fn kernel_eval(t: f64, p: KernelPoint) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(domain("kernel_eval", format!("t must be finite and >= 0, got {t}")));
    }
    let c = KernelCoord::new(p.x, p.b);
    Ok(c.ln_kernel(t, t.ln()).exp())
}

/// `L(t, x, b) = ln t - ln b - Ψ(ρ(x, b))`.
pub fn l_term(t: f64, p: KernelPoint) -> Result<f64> {
    check_positive_t("l_term", t)?;
    Ok(KernelCoord::new(p.x, p.b).l_term(t.ln()))
}

/// Partial derivative of the kernel with respect to the evaluation point `x`.
///
/// Interior: `K L / b`. Boundary: `x K L / (2b²)`; in both cases this is
/// `K L ∂ρ/∂x`.
pub fn kernel_grad_x(t: f64, p: KernelPoint) -> Result<f64> {
    check_positive_t("kernel_grad_x", t)?;
    let c = KernelCoord::new(p.x, p.b);
    let ln_t = t.ln();
    Ok(c.grad_factor(ln_t) * c.ln_kernel(t, ln_t).exp())
}

fn check_positive_t(op: &'static str, t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(op, format!("t must be finite and > 0 (log singularity at 0), got {t}")))
    }
}

/// Per-coordinate constants of one kernel factor, computed once and reused for
/// every observation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelCoord {
    pub(crate) rho: f64,
    inv_b: f64,
    ln_b: f64,
    // ρ ln b + ln Γ(ρ)
    ln_norm: f64,
    psi_rho: f64,
    // ∂ρ/∂x
    drho_dx: f64,
}

impl KernelCoord {
    pub(crate) fn new(x: f64, b: f64) -> Self {
        let (rho, branch) = rho_raw(x, b);
        let ln_b = b.ln();
        let drho_dx = match branch {
            Branch::Interior => 1.0 / b,
            Branch::Boundary => x / (2.0 * b * b),
        };
        Self {
            rho,
            inv_b: 1.0 / b,
            ln_b,
            ln_norm: rho * ln_b + ln_gamma(rho),
            psi_rho: psi(rho),
            drho_dx,
        }
    }

    /// `ln K(t)` given `t` and `ln t` (which may be `-inf` for `t = 0`).
    #[inline]
    pub(crate) fn ln_kernel(&self, t: f64, ln_t: f64) -> f64 {
        let power = if self.rho == 1.0 {
            0.0
        } else {
            (self.rho - 1.0) * ln_t
        };
        power - t * self.inv_b - self.ln_norm
    }

    #[inline]
    pub(crate) fn l_term(&self, ln_t: f64) -> f64 {
        ln_t - self.ln_b - self.psi_rho
    }

    /// `∂ρ/∂x · L(t)`, the factor turning the kernel into its x-derivative.
    #[inline]
    pub(crate) fn grad_factor(&self, ln_t: f64) -> f64 {
        self.drho_dx * self.l_term(ln_t)
    }
}
