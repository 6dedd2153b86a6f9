//! Scalar special functions: `ln Γ`, digamma and the Stirling ratio.
//!
//! Everything is evaluated in log space. The kernel shape `x/b` grows
//! without bound as the bandwidth shrinks, so `Γ` itself would overflow
//! long before the quantities we actually need do.

use crate::error::{domain, Result};

/// A finite, strictly positive real.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(domain(
                "PositiveReal",
                format!("expected a finite value > 0, got {value}"),
            ))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PositiveReal {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

// Below this the Stirling series is not used directly; the argument is
// shifted upward with the recurrence first.
const LN_GAMMA_SHIFT: f64 = 15.0;
const DIGAMMA_SHIFT: f64 = 10.0;

/// `ln Γ(z) - [(z - 1/2) ln z - z + ln √(2π)]` for `z >= 15`.
fn stirling_series(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0
        - r2 * (1.0 / 360.0
            - r2 * (1.0 / 1260.0
                - r2 * (1.0 / 1680.0
                    - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360_360.0 - r2 / 156.0))))))
}

/// The remainder of Stirling's approximation, `ln Γ(z) - [(z - 1/2) ln z - z + ln √(2π)]`.
pub(crate) fn stirling_correction(z: f64) -> f64 {
    if z >= LN_GAMMA_SHIFT {
        stirling_series(z)
    } else {
        ln_gamma(z) - ((z - 0.5) * z.ln() - z + HALF_LN_2PI)
    }
}

/// Unchecked `ln Γ(z)` for `z > 0`.
pub(crate) fn ln_gamma(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    if z >= LN_GAMMA_SHIFT {
        return (z - 0.5) * z.ln() - z + HALF_LN_2PI + stirling_series(z);
    }
    // ln Γ(z) = ln Γ(z + k) - ln(z (z + 1) ... (z + k - 1))
    let mut shifted = z;
    let mut prod = 1.0;
    while shifted < LN_GAMMA_SHIFT {
        prod *= shifted;
        shifted += 1.0;
    }
    (shifted - 0.5) * shifted.ln() - shifted + HALF_LN_2PI + stirling_series(shifted) - prod.ln()
}

/// Unchecked digamma for `z > 0`.
pub(crate) fn psi(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    let mut acc = 0.0;
    let mut z = z;
    while z < DIGAMMA_SHIFT {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let r = 1.0 / z;
    let r2 = r * r;
    acc + z.ln() - 0.5 * r - r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 * (1.0 / 240.0 - r2 / 132.0))))
}

/// Natural log of the gamma function.
pub fn log_gamma(z: PositiveReal) -> f64 {
    ln_gamma(z.get())
}

/// Digamma `Ψ(z) = d/dz ln Γ(z)`.
///
/// Shifts the argument above 10 with `Ψ(z) = Ψ(z + 1) - 1/z`, then applies the
/// asymptotic expansion `ln z - 1/(2z) - 1/(12z²) + 1/(120z⁴) - 1/(252z⁶)`
/// extended by `+ 1/(240z⁸) - 1/(132z¹⁰)`.
pub fn digamma(z: PositiveReal) -> f64 {
    psi(z.get())
}

/// `R(z) = √(2π) e^{-z} z^{z+1/2} / Γ(z + 1)`.
///
/// Increasing in `z`, strictly below 1, tends to 1 as `z → ∞`.
pub fn stirling_ratio(z: PositiveReal) -> f64 {
    (-stirling_correction(z.get())).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> PositiveReal {
        PositiveReal::new(v).unwrap()
    }

    // Reference values computed with 40-digit arithmetic.
    const LN_GAMMA_REF: &[(f64, f64)] = &[
        (0.001, 6.907_178_885_383_854),
        (0.1, 2.252_712_651_734_206),
        (0.5, 0.572_364_942_924_700_1),
        (3.7, 1.428_072_326_665_388),
        (10.0, 12.801_827_480_081_469),
        (100.0, 359.134_205_369_575_4),
        (12345.6, 103_959.185_066_168_46),
        (1.0e6, 12_815_504.569_147_612),
    ];

    const DIGAMMA_REF: &[(f64, f64)] = &[
        (0.001, -1_000.575_571_931_810_3),
        (0.1, -10.423_754_940_411_077),
        (1.0, -0.577_215_664_901_532_9),
        (2.0, 0.422_784_335_098_467_1),
        (3.7, 1.167_153_539_361_511_4),
        (10.0, 2.251_752_589_066_721),
        (100.0, 4.600_161_852_738_087),
        (1.0e4, 9.210_290_371_142_849),
    ];

    #[test]
    fn log_gamma_matches_reference() {
        assert!(log_gamma(p(1.0)).abs() < 1e-14);
        assert!(log_gamma(p(2.0)).abs() < 1e-14);
        for &(z, want) in LN_GAMMA_REF {
            let got = log_gamma(p(z));
            // absolute 1e-12 below magnitude 1, relative 1e-12 above
            let tol = 1e-12 * want.abs().max(1.0);
            assert!((got - want).abs() <= tol, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn digamma_matches_reference() {
        for &(z, want) in DIGAMMA_REF {
            let got = digamma(p(z));
            assert!((got - want).abs() <= 1e-10, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn digamma_series_oracle_at_ten() {
        // Ψ(z) = -γ + Σ_{k≥1} (1/k - 1/(k + z - 1)); the first 30 terms plus the
        // telescoped tail Σ_{k=31}^{39} 1/k give the sum exactly for z = 10.
        let gamma = 0.577_215_664_901_532_9;
        let z = 10.0;
        let head: f64 = (1..=30).map(|k| 1.0 / k as f64 - 1.0 / (k as f64 + z - 1.0)).sum();
        let tail: f64 = (31..=39).map(|k| 1.0 / k as f64).sum();
        let series = head + tail - gamma;
        assert!((digamma(p(z)) - series).abs() < 1e-10);
    }

    #[test]
    fn digamma_approaches_log() {
        let z = 1.0e9;
        assert!((digamma(p(z)) - z.ln()).abs() < 1e-9);
    }

    #[test]
    fn stirling_ratio_values() {
        let r1 = stirling_ratio(p(1.0));
        assert!((r1 - 0.922_137_008_895_789_1).abs() < 1e-12);
        assert!((stirling_ratio(p(0.5)) - 0.857_763_884_960_706_8).abs() < 1e-12);
        assert!((stirling_ratio(p(1000.0)) - 0.999_916_670_141_57).abs() < 1e-12);
        assert!((1.0 - stirling_ratio(p(1e12))).abs() < 1e-12);
    }

    #[test]
    fn stirling_ratio_monotone_on_geometric_grid() {
        let mut prev = 0.0;
        let mut z = 0.5;
        while z <= (1u64 << 20) as f64 {
            let r = stirling_ratio(p(z));
            assert!(r > 0.0 && r < 1.0, "R({z}) = {r}");
            assert!(r >= prev, "not monotone at {z}");
            prev = r;
            z *= 2.0;
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(PositiveReal::new(0.0).is_err());
        assert!(PositiveReal::new(-1.0).is_err());
        assert!(PositiveReal::new(f64::NAN).is_err());
        assert!(PositiveReal::new(f64::INFINITY).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn digamma_recurrence(z in 0.1f64..1.0e4) {
                let lhs = digamma(p(z + 1.0)) - digamma(p(z));
                prop_assert!((lhs - 1.0 / z).abs() < 1e-10);
            }

            #[test]
            fn log_gamma_recurrence(z in 1.0e-3f64..150.0) {
                let lhs = log_gamma(p(z + 1.0)).exp();
                let rhs = z * log_gamma(p(z)).exp();
                prop_assert!(((lhs - rhs) / rhs).abs() < 1e-10);
            }
        }
    }
}
