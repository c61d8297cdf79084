//! Disparity measures `rho(q, theta) = sum_k G(delta_k) p_k(theta)` built on
//! Pearson residuals `delta_k = q_k / p_k(theta) - 1`.
//!
//! Three measures are shipped:
//!
//! | measure | `G(delta)`                    | standardized RAF `A(delta)`   |
//! |---------|-------------------------------|-------------------------------|
//! | LD      | `(delta+1) ln(delta+1)`       | `delta`                       |
//! | HD      | `((delta+1)^(1/2) - 1)^2`     | `2((delta+1)^(1/2) - 1)`      |
//! | NED     | `exp(-delta) - 1`             | `2 - (2+delta) exp(-delta)`   |
//!
//! Cells where the model has no mass but `q` does take the limit of
//! `G(delta) p` as `p -> 0`: `+inf` for LD, `q_k` for HD and `0` for NED.
//! The mass beyond the model truncation point is treated as one extra cell,
//! paired with the tail mass of `q`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{OffspringFamily, Pmf, TAIL_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Disparity {
    /// Likelihood disparity.
    #[serde(rename = "LD")]
    Ld,
    /// Squared Hellinger distance.
    #[serde(rename = "HD")]
    Hd,
    /// Negative exponential disparity.
    #[serde(rename = "NED")]
    Ned,
}

impl Disparity {
    pub const ALL: [Disparity; 3] = [Disparity::Ld, Disparity::Hd, Disparity::Ned];

    pub fn name(self) -> &'static str {
        match self {
            Disparity::Ld => "LD",
            Disparity::Hd => "HD",
            Disparity::Ned => "NED",
        }
    }

    pub fn g(self, delta: f64) -> f64 {
        match self {
            Disparity::Ld => {
                if delta <= -1.0 {
                    0.0
                } else {
                    (delta + 1.0) * delta.ln_1p()
                }
            }
            Disparity::Hd => {
                let r = (delta + 1.0).sqrt() - 1.0;
                r * r
            }
            Disparity::Ned => (-delta).exp_m1(),
        }
    }

    pub fn g_prime(self, delta: f64) -> f64 {
        match self {
            Disparity::Ld => delta.ln_1p() + 1.0,
            Disparity::Hd => 1.0 - 1.0 / (delta + 1.0).sqrt(),
            Disparity::Ned => -(-delta).exp(),
        }
    }

    /// Standardized residual adjustment function, `A(0) = 0`, `A'(0) = 1`.
    pub fn raf(self, delta: f64) -> f64 {
        match self {
            Disparity::Ld => delta,
            Disparity::Hd => 2.0 * ((delta + 1.0).sqrt() - 1.0),
            Disparity::Ned => {
                if delta.abs() < 1.0 {
                    // 2 - (2+d)e^{-d} rewritten to avoid cancellation near 0
                    -delta - (2.0 + delta) * (-delta).exp_m1()
                } else {
                    2.0 - (2.0 + delta) * (-delta).exp()
                }
            }
        }
    }

    /// `(scale, shift)` with `raf(d) = scale * [(d+1) G'(d) - G(d)] + shift`.
    pub fn raf_standardization(self) -> (f64, f64) {
        match self {
            Disparity::Ld => (1.0, -1.0),
            Disparity::Hd => (2.0, 0.0),
            Disparity::Ned => (1.0, 1.0),
        }
    }

    /// Limit of `G(delta) p` as `p -> 0` with `q_k` fixed.
    pub fn zero_model_mass_contribution(self, q_k: f64) -> f64 {
        if q_k <= 0.0 {
            return 0.0;
        }
        match self {
            Disparity::Ld => f64::INFINITY,
            Disparity::Hd => q_k,
            Disparity::Ned => 0.0,
        }
    }

    /// `G` and `G'` bounded on `[-1, inf)`.
    pub fn bounded_g(self) -> bool {
        matches!(self, Disparity::Ned)
    }

    /// `A`, `A'`, `A'(d)(1+d)` and `A''(d)(1+d)` bounded on `[-1, inf)`.
    pub fn bounded_raf_family(self) -> bool {
        matches!(self, Disparity::Ned)
    }

    /// `sup |G'|` over `[-1, inf)`, when finite.
    pub fn g_prime_sup(self) -> Option<f64> {
        match self {
            Disparity::Ned => Some(std::f64::consts::E),
            _ => None,
        }
    }

    /// `G(delta) p` for one cell, with the zero-mass limits applied.
    pub fn cell_value(self, q: f64, p: f64) -> f64 {
        if p <= 0.0 {
            return self.zero_model_mass_contribution(q);
        }
        match self {
            Disparity::Ld => {
                if q <= 0.0 {
                    0.0
                } else {
                    q * (q / p).ln()
                }
            }
            Disparity::Hd => {
                let d = q.sqrt() - p.sqrt();
                d * d
            }
            Disparity::Ned => {
                let ratio = q / p;
                if ratio.is_finite() {
                    p * (1.0 - ratio).exp_m1()
                } else {
                    0.0
                }
            }
        }
    }

    /// `p'_k A(delta_k)` for one cell.
    fn cell_gradient_term(self, k: usize, q: f64, p: f64, dp: f64) -> Result<f64> {
        let ratio = q / p;
        if p <= 0.0 || !ratio.is_finite() {
            return match (self, q > 0.0) {
                (Disparity::Ld, true) => Err(Error::GradientUndefined { k }),
                _ => Ok(0.0),
            };
        }
        Ok(dp * self.raf(ratio - 1.0))
    }
}

impl fmt::Display for Disparity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Disparity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ld" => Ok(Disparity::Ld),
            "hd" => Ok(Disparity::Hd),
            "ned" => Ok(Disparity::Ned),
            other => Err(Error::InvalidConfig(format!(
                "unknown disparity '{other}' (expected ld, hd or ned)"
            ))),
        }
    }
}

/// `delta = q_k / p_k - 1`; `+inf` when `p_k = 0 < q_k`, `-1` when `q_k = 0`.
pub fn pearson_residual(q: &Pmf, model: &Pmf, k: usize) -> f64 {
    let (qk, pk) = (q.get(k), model.get(k));
    if qk <= 0.0 {
        -1.0
    } else if pk <= 0.0 {
        f64::INFINITY
    } else {
        qk / pk - 1.0
    }
}

/// `rho(q, model)`; may be `+inf` for LD.
///
/// NED is reported in the raw `G(delta) = exp(-delta) - 1` form.
pub fn disparity_value(spec: Disparity, q: &Pmf, model: &Pmf) -> f64 {
    value_on_cells(spec, q, model.probs(), model.tail_mass())
}

pub(crate) fn value_on_cells(spec: Disparity, q: &Pmf, masses: &[f64], tail: f64) -> f64 {
    let n = q.len().max(masses.len());
    let mut total = 0.0;
    for k in 0..n {
        let p = masses.get(k).copied().unwrap_or(0.0);
        total += spec.cell_value(q.get(k), p);
    }
    total + spec.cell_value(q.tail_mass(), tail)
}

/// Evaluation truncation for `q` against a family: covers the model tail
/// tolerance over the whole domain and the support of `q`.
pub fn evaluation_truncation<F: OffspringFamily + ?Sized>(family: &F, q: &Pmf) -> usize {
    family
        .domain_truncation(TAIL_TOL)
        .max(q.len().saturating_sub(1))
}

/// `d/dtheta rho(q, theta)`.
///
/// Computed as `-(1/s) sum_k p'_k(theta) A(delta_k)` with the standardized
/// RAF `A` and its scale `s`, which equals the derivative of
/// [`disparity_value`] because the `p'_k` (tail cell included) sum to zero.
pub fn disparity_gradient<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    q: &Pmf,
    theta: f64,
) -> Result<f64> {
    family.domain().check(theta)?;
    let k_max = evaluation_truncation(family, q);
    gradient_on_cells(spec, family, q, theta, k_max)
}

pub(crate) fn gradient_on_cells<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    q: &Pmf,
    theta: f64,
    k_max: usize,
) -> Result<f64> {
    let masses = family.masses(theta, k_max);
    let derivs = family.derivs(theta, k_max);
    let mut sum = 0.0;
    for (k, (p, dp)) in masses.iter().zip(&derivs).enumerate() {
        sum += spec.cell_gradient_term(k, q.get(k), *p, *dp)?;
    }
    sum += spec.cell_gradient_term(
        k_max + 1,
        q.tail_mass(),
        family.tail(theta, k_max),
        family.tail_deriv(theta, k_max),
    )?;
    let (scale, _) = spec.raf_standardization();
    Ok(-sum / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{contaminated_model, model_pmf, pmf_at, ContaminationSpec, Poisson};

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn g_is_zero_at_zero_and_strictly_convex() {
        for spec in Disparity::ALL {
            assert_eq!(spec.g(0.0), 0.0);
            let h = 1e-2;
            for d in grid(-0.99, 10.0, 400) {
                let second = spec.g(d + h) - 2.0 * spec.g(d) + spec.g(d - h);
                assert!(second > 0.0, "{spec} not convex at {d}");
            }
        }
    }

    #[test]
    fn raf_is_standardized_and_nondecreasing() {
        for spec in Disparity::ALL {
            assert_eq!(spec.raf(0.0), 0.0);
            let h = 1e-5;
            let slope = (spec.raf(h) - spec.raf(-h)) / (2.0 * h);
            assert!((slope - 1.0).abs() < 1e-8, "{spec} slope {slope}");
            let pts = grid(-1.0, 10.0, 1101);
            for w in pts.windows(2) {
                assert!(
                    spec.raf(w[1]) >= spec.raf(w[0]),
                    "{spec} decreasing at {}",
                    w[0]
                );
            }
        }
    }

    #[test]
    fn raf_is_affine_in_the_raw_raf() {
        for spec in Disparity::ALL {
            let (scale, shift) = spec.raf_standardization();
            for d in grid(-0.999, 20.0, 500) {
                let raw = (d + 1.0) * spec.g_prime(d) - spec.g(d);
                let lhs = spec.raf(d);
                assert!(
                    (lhs - (scale * raw + shift)).abs() < 1e-10 * (1.0 + lhs.abs()),
                    "{spec} at {d}"
                );
            }
        }
    }

    #[test]
    fn boundedness_metadata() {
        assert!(Disparity::Ned.bounded_g());
        assert!(!Disparity::Hd.bounded_g());
        assert!(!Disparity::Ld.bounded_raf_family());
        assert!(Disparity::Ned.bounded_raf_family());
        // NED's G and G' stay bounded far out while HD's G grows
        assert!(Disparity::Ned.g(1e6).abs() <= 1.0);
        assert!(Disparity::Ned.g_prime(-1.0).abs() <= std::f64::consts::E + 1e-12);
        assert!(Disparity::Hd.g(1e6) > 1e5);
    }

    #[test]
    fn residuals() {
        let q = Pmf::new(vec![0.2, 0.8, 0.0], 0.0).unwrap();
        let m = Pmf::new(vec![0.1, 0.8, 0.1], 0.0).unwrap();
        assert!((pearson_residual(&q, &m, 0) - 1.0).abs() < 1e-15);
        assert_eq!(pearson_residual(&q, &m, 1), 0.0);
        assert_eq!(pearson_residual(&q, &m, 2), -1.0);
        let m2 = Pmf::new(vec![0.0, 1.0], 0.0).unwrap();
        assert_eq!(pearson_residual(&q, &m2, 0), f64::INFINITY);
    }

    #[test]
    fn value_is_zero_at_the_model() {
        let m = model_pmf(&Poisson::default(), 7.0).unwrap();
        for spec in Disparity::ALL {
            assert_eq!(disparity_value(spec, &m, &m), 0.0, "{spec}");
        }
    }

    #[test]
    fn hellinger_between_disjoint_point_masses() {
        let v = disparity_value(Disparity::Hd, &Pmf::point_mass(0), &Pmf::point_mass(1));
        assert_eq!(v, 2.0);
    }

    #[test]
    fn ld_is_infinite_on_support_mismatch() {
        let v = disparity_value(Disparity::Ld, &Pmf::point_mass(0), &Pmf::point_mass(1));
        assert_eq!(v, f64::INFINITY);
        let v = disparity_value(Disparity::Ned, &Pmf::point_mass(0), &Pmf::point_mass(1));
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_the_model() {
        let fam = Poisson::default();
        let q = model_pmf(&fam, 7.0).unwrap();
        for spec in Disparity::ALL {
            let g = disparity_gradient(spec, &fam, &q, 7.0).unwrap();
            assert!(g.abs() < 1e-10, "{spec}: {g}");
        }
    }

    #[test]
    fn ld_gradient_reduces_to_mean_difference() {
        let fam = Poisson::default();
        let q = Pmf::new(vec![0.1, 0.2, 0.3, 0.25, 0.15], 0.0).unwrap();
        for theta in [1.0, 2.15, 5.0] {
            let g = disparity_gradient(Disparity::Ld, &fam, &q, theta).unwrap();
            let analytic = (theta - q.mean()) / theta;
            assert!(
                (g - analytic).abs() < 1e-12,
                "theta={theta}: {g} vs {analytic}"
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fam = Poisson::default();
        let q = contaminated_model(&fam, 7.0, ContaminationSpec::new(0.1, 12).unwrap()).unwrap();
        let k = evaluation_truncation(&fam, &q);
        let value = |spec, t: f64| disparity_value(spec, &q, &pmf_at(&fam, t, k).unwrap());
        for spec in Disparity::ALL {
            for theta in [5.0, 7.0, 9.0] {
                let h = 1e-6;
                let fd = (value(spec, theta + h) - value(spec, theta - h)) / (2.0 * h);
                let g = disparity_gradient(spec, &fam, &q, theta).unwrap();
                assert!(
                    (g - fd).abs() <= 1e-4 * fd.abs().max(1e-8),
                    "{spec} theta={theta}: {g} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn ld_gradient_undefined_on_mismatch() {
        let fam = Poisson::default();
        // q has mass at k = 2000 where every Poisson mass in the domain underflows
        let mut probs = vec![0.0; 2001];
        probs[3] = 0.5;
        probs[2000] = 0.5;
        let q = Pmf::new(probs, 0.0).unwrap();
        assert!(matches!(
            disparity_gradient(Disparity::Ld, &fam, &q, 7.0),
            Err(Error::GradientUndefined { .. })
        ));
        assert!(disparity_gradient(Disparity::Hd, &fam, &q, 7.0).is_ok());
        assert!(disparity_gradient(Disparity::Ned, &fam, &q, 7.0).is_ok());
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("HD".parse::<Disparity>().unwrap(), Disparity::Hd);
        assert_eq!("ned".parse::<Disparity>().unwrap(), Disparity::Ned);
        assert!("kl".parse::<Disparity>().is_err());
        assert_eq!(Disparity::Ld.to_string(), "LD");
    }
}
