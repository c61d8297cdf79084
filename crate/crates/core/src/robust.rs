//! Robustness of the disparity functionals under gross-error contamination,
//! computed on exact (population-level) distributions.

use serde::{Deserialize, Serialize};

use crate::disparity::Disparity;
use crate::dist::{
    contaminated_model, fisher_information, model_pmf, pmf_at, ContaminationSpec, OffspringFamily,
    Pmf, TAIL_TOL,
};
use crate::error::{Error, Result};
use crate::mde::{minimize, minimize_objective, MinimizeOptions};

/// `T(p(theta, alpha, L))` for one gross-error cell.
pub fn contaminated_functional<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    theta: f64,
    alpha: f64,
    location: usize,
) -> Result<f64> {
    let q = contaminated_model(family, theta, ContaminationSpec::new(alpha, location)?)?;
    Ok(minimize(spec, family, &q)?.theta_hat)
}

/// `u(theta, L) / I(theta) = p'_L / (I(theta) p_L)`, the influence-curve
/// limit as `alpha -> 0`.
pub fn influence_limit<F: OffspringFamily + ?Sized>(
    family: &F,
    theta: f64,
    location: usize,
) -> Result<f64> {
    let k = family.truncation(theta, TAIL_TOL);
    let info = fisher_information(family, theta, k)?;
    Ok(family.score(theta, location)? / info)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub disparity: Disparity,
    pub theta: f64,
    pub alpha: f64,
    pub l_values: Vec<usize>,
    /// `alpha^{-1} (T(p(theta, alpha, L)) - theta)` per `L`.
    pub curve: Vec<f64>,
    /// `p'_L / (I(theta) p_L)` per `L`.
    pub limit_curve: Vec<f64>,
}

pub fn alpha_influence<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    theta: f64,
    alpha: f64,
    l_values: &[usize],
) -> Result<InfluenceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidContamination {
            alpha,
            location: l_values.first().copied().unwrap_or(0),
            reason: "alpha-influence needs alpha in (0, 1)".into(),
        });
    }
    family.domain().check(theta)?;
    let mut curve = Vec::with_capacity(l_values.len());
    let mut limit_curve = Vec::with_capacity(l_values.len());
    for &l in l_values {
        let t = contaminated_functional(spec, family, theta, alpha, l)?;
        curve.push((t - theta) / alpha);
        // Beyond the representable support the score is undefined; report NaN.
        limit_curve.push(influence_limit(family, theta, l).unwrap_or(f64::NAN));
    }
    Ok(InfluenceReport {
        disparity: spec,
        theta,
        alpha,
        l_values: l_values.to_vec(),
        curve,
        limit_curve,
    })
}

/// The alpha-influence at a fixed `L` along a decreasing `alphas` sequence.
pub fn influence_limit_check<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    theta: f64,
    location: usize,
    alphas: &[f64],
) -> Result<Vec<f64>> {
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig(
            "alpha sequence must be strictly decreasing".into(),
        ));
    }
    alphas
        .iter()
        .map(|&a| {
            if !(a > 0.0 && a <= 0.05) {
                return Err(Error::InvalidConfig(format!("alpha {a} outside (0, 0.05]")));
            }
            Ok((contaminated_functional(spec, family, theta, a, location)? - theta) / a)
        })
        .collect()
}

/// `T(p(theta0, alpha, L)) - T(p(theta0))`; inliers (`alpha < 0`) allowed.
pub fn potential_bias<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    theta0: f64,
    alpha: f64,
    location: usize,
) -> Result<f64> {
    let base = minimize(spec, family, &model_pmf(family, theta0)?)?.theta_hat;
    Ok(contaminated_functional(spec, family, theta0, alpha, location)? - base)
}

/// One row of a relative-bias table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRatioRow {
    pub alpha: f64,
    pub location: usize,
    pub hd_over_ld: f64,
    pub ned_over_ld: f64,
}

/// Relative potential bias of HD and NED with respect to LD for each
/// `alpha` at a fixed gross-error location.
pub fn bias_ratio_table<F: OffspringFamily + ?Sized>(
    family: &F,
    theta0: f64,
    location: usize,
    alphas: &[f64],
) -> Result<Vec<BiasRatioRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let ld = potential_bias(Disparity::Ld, family, theta0, alpha, location)?;
            if ld == 0.0 {
                return Err(Error::DegenerateRatio);
            }
            Ok(BiasRatioRow {
                alpha,
                location,
                hd_over_ld: potential_bias(Disparity::Hd, family, theta0, alpha, location)? / ld,
                ned_over_ld: potential_bias(Disparity::Ned, family, theta0, alpha, location)? / ld,
            })
        })
        .collect()
}

/// `sum_k (q_k p_k)^{1/2}`, tails included as one cell.
pub fn hellinger_affinity(q: &Pmf, model: &Pmf) -> f64 {
    let n = q.len().max(model.len());
    (0..n)
        .map(|k| (q.get(k) * model.get(k)).sqrt())
        .sum::<f64>()
        + (q.tail_mass() * model.tail_mass()).sqrt()
}

/// Contamination level below which HD cannot be broken down at `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellingerBreakdownBound {
    /// Maximum affinity over the parameter interval.
    pub rho_hat: f64,
    /// Affinity at the interval endpoints (proxy for the limit at infinity).
    pub rho_star: f64,
    pub bound: f64,
}

pub fn affinity_breakdown_threshold(rho_hat: f64, rho_star: f64) -> f64 {
    let gap = (rho_hat - rho_star).powi(2);
    gap / (1.0 + gap)
}

pub fn hellinger_breakdown_bound<F: OffspringFamily + ?Sized>(
    family: &F,
    q: &Pmf,
) -> Result<HellingerBreakdownBound> {
    let domain = family.domain();
    let k = family
        .domain_truncation(TAIL_TOL)
        .max(q.len().saturating_sub(1));
    let affinity = |t: f64| hellinger_affinity(q, &pmf_at(family, t, k).expect("theta in domain"));
    let best = minimize_objective(|t| -affinity(t), domain, &MinimizeOptions::default())?;
    let rho_hat = -best.value;
    let rho_star = affinity(domain.lo).max(affinity(domain.hi));
    Ok(HellingerBreakdownBound {
        rho_hat,
        rho_star,
        bound: affinity_breakdown_threshold(rho_hat, rho_star),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub disparity: Disparity,
    pub theta: f64,
    pub alpha: f64,
    pub l_schedule: Vec<usize>,
    /// `T(p(theta, alpha, L))` per `L`.
    pub functional: Vec<f64>,
    /// Mixture mean `(1 - alpha) theta + alpha L`, the unconstrained LD answer
    /// for mean-parameterized families.
    pub mixture_mean: Vec<f64>,
    /// Scan reported a second, distant cell within tie tolerance.
    pub near_tie: Vec<bool>,
}

impl BreakdownReport {
    pub fn final_deviation(&self) -> f64 {
        self.functional
            .last()
            .map_or(0.0, |t| (t - self.theta).abs())
    }
}

pub fn breakdown_probe<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    theta: f64,
    alpha: f64,
    l_schedule: &[usize],
) -> Result<BreakdownReport> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "breakdown probe needs alpha in (0, 1/2), got {alpha}"
        )));
    }
    if l_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("L schedule must be increasing".into()));
    }
    let mut functional = Vec::with_capacity(l_schedule.len());
    let mut near_tie = Vec::with_capacity(l_schedule.len());
    for &l in l_schedule {
        let q = contaminated_model(family, theta, ContaminationSpec::new(alpha, l)?)?;
        let r = minimize(spec, family, &q)?;
        functional.push(r.theta_hat);
        near_tie.push(r.near_tie);
    }
    Ok(BreakdownReport {
        disparity: spec,
        theta,
        alpha,
        l_schedule: l_schedule.to_vec(),
        functional,
        mixture_mean: l_schedule
            .iter()
            .map(|&l| (1.0 - alpha) * theta + alpha * l as f64)
            .collect(),
        near_tie,
    })
}
