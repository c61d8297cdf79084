//! The disparity functional `T(q) = argmin_theta rho(q, theta)` over the
//! compact parameter interval, and the minimum disparity estimator
//! `T(p_hat_n)`.
//!
//! The minimizer is located by a uniform scan of the interval followed by a
//! golden-section search inside the bracket around the best scan point.
//! Ties in the scan resolve toward the smallest `theta`.

use serde::{Deserialize, Serialize};

use crate::cbp::FamilyTree;
use crate::disparity::{evaluation_truncation, gradient_on_cells, value_on_cells, Disparity};
use crate::dist::{OffspringFamily, Pmf, ThetaDomain};
use crate::error::{Error, Result};
use crate::npmle::npmle;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Points in the coarse scan over the parameter interval.
    pub grid_points: usize,
    /// Width of the final golden-section bracket.
    pub theta_tol: f64,
    /// Scan cells within this value of the minimum, away from the winner,
    /// are reported as near-ties.
    pub tie_tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            grid_points: 256,
            theta_tol: 1e-8,
            tie_tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Outcome of a one-dimensional minimization over a compact interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMinimum {
    pub theta: f64,
    pub value: f64,
    pub iterations: usize,
    pub bracket: f64,
    pub near_tie: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdeResult {
    pub disparity: Disparity,
    pub theta_hat: f64,
    /// Attained disparity; `+inf` is possible only for LD.
    pub value: f64,
    /// `|d rho / d theta|` at `theta_hat`, when the gradient is defined.
    pub stationarity: Option<f64>,
    pub iterations: usize,
    pub bracket: f64,
    pub near_tie: bool,
    /// `theta_hat` lies strictly inside the parameter interval.
    pub interior: bool,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `objective` over `domain` by scan plus golden section.
pub fn minimize_objective<F>(
    objective: F,
    domain: ThetaDomain,
    opts: &MinimizeOptions,
) -> Result<ScanMinimum>
where
    F: Fn(f64) -> f64,
{
    let f = |t: f64| finite_or_inf(objective(t));
    let grid = domain.grid(opts.grid_points.max(3));
    let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();

    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    let f_min = values[best];
    if f_min == f64::INFINITY {
        return Err(Error::NoFiniteValue);
    }
    let near_tie = values
        .iter()
        .enumerate()
        .any(|(i, v)| i.abs_diff(best) > 1 && *v - f_min <= opts.tie_tol);

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > opts.theta_tol && iterations < opts.max_iter {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }

    let mid = 0.5 * (a + b);
    let mut theta = mid;
    let mut value = f(mid);
    // The bracket may close on a boundary that beats its interior points.
    for edge in [grid[0], grid[grid.len() - 1]] {
        if (edge - mid).abs() <= b - a {
            let fe = f(edge);
            if fe < value {
                theta = edge;
                value = fe;
            }
        }
    }
    if value > f_min {
        // Refinement cannot lose to the scan; fall back to the scan winner.
        theta = grid[best];
        value = f_min;
    }
    Ok(ScanMinimum {
        theta,
        value,
        iterations,
        bracket: b - a,
        near_tie,
    })
}

/// Bisects a sign change of the gradient around `theta`. The value surface
/// is flat to rounding within about `1e-7` of a minimum; the gradient is not.
fn polish_root<G>(grad: &G, theta: f64, domain: ThetaDomain, width: f64) -> Option<f64>
where
    G: Fn(f64) -> Option<f64>,
{
    let mut h = 4.0 * width.max(1e-10);
    let (mut a, mut b);
    loop {
        a = (theta - h).max(domain.lo);
        b = (theta + h).min(domain.hi);
        if grad(a)? < 0.0 && grad(b)? > 0.0 {
            break;
        }
        h *= 4.0;
        if h > 1e-4 {
            return None;
        }
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = grad(m)?;
        if gm == 0.0 {
            return Some(m);
        }
        if gm < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// `T(q)` for the given disparity and family with default options.
pub fn minimize<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    q: &Pmf,
) -> Result<MdeResult> {
    minimize_with(spec, family, q, &MinimizeOptions::default())
}

pub fn minimize_with<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    q: &Pmf,
    opts: &MinimizeOptions,
) -> Result<MdeResult> {
    let domain = family.domain();
    let k_max = evaluation_truncation(family, q);
    let objective = |t: f64| {
        let masses = family.masses(t, k_max);
        value_on_cells(spec, q, &masses, family.tail(t, k_max))
    };
    let mut found = minimize_objective(objective, domain, opts)?;
    let grad = |t: f64| gradient_on_cells(spec, family, q, t, k_max).ok();
    if let Some(t) = polish_root(&grad, found.theta, domain, opts.theta_tol) {
        let v = objective(t);
        if v <= found.value + 1e-13 * found.value.abs().max(1.0) {
            found.theta = t;
            found.value = v.min(found.value);
        }
    }
    let stationarity = gradient_on_cells(spec, family, q, found.theta, k_max)
        .ok()
        .map(f64::abs);
    let margin = opts.theta_tol;
    Ok(MdeResult {
        disparity: spec,
        theta_hat: found.theta,
        value: found.value,
        stationarity,
        iterations: found.iterations,
        bracket: found.bracket,
        near_tie: found.near_tie,
        interior: found.theta > domain.lo + margin && found.theta < domain.hi - margin,
    })
}

/// Minimum disparity estimate from a complete family tree.
pub fn mde_from_tree<F: OffspringFamily + ?Sized>(
    spec: Disparity,
    family: &F,
    tree: &FamilyTree,
) -> Result<MdeResult> {
    minimize(spec, family, &npmle(tree)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbp::simulate;
    use crate::disparity::disparity_value;
    use crate::dist::{
        contaminated_model, model_pmf, pmf_at, ContaminationSpec, ControlSpec, Poisson,
    };

    #[test]
    fn recovers_the_true_parameter_at_the_model() {
        let fam = Poisson::default();
        let q = model_pmf(&fam, 7.0).unwrap();
        for spec in Disparity::ALL {
            let r = minimize(spec, &fam, &q).unwrap();
            assert!((r.theta_hat - 7.0).abs() < 1e-6, "{spec}: {}", r.theta_hat);
            assert!(r.bracket <= 1e-8);
            assert!(r.interior);
            assert!(r.stationarity.unwrap() < 1e-5);
        }
    }

    #[test]
    fn ld_minimizer_is_the_mixture_mean() {
        let fam = Poisson::default();
        let q = contaminated_model(&fam, 7.0, ContaminationSpec::new(0.2, 20).unwrap()).unwrap();
        let r = minimize(Disparity::Ld, &fam, &q).unwrap();
        assert!((r.theta_hat - 9.6).abs() < 1e-5, "{}", r.theta_hat);
    }

    #[test]
    fn robust_disparities_have_smaller_bias_than_ld() {
        let fam = Poisson::default();
        let q = contaminated_model(&fam, 7.0, ContaminationSpec::new(0.2, 20).unwrap()).unwrap();
        // brute-force oracle: dense grid over a neighbourhood of the answer
        let k = evaluation_truncation(&fam, &q);
        for spec in [Disparity::Hd, Disparity::Ned] {
            let r = minimize(spec, &fam, &q).unwrap();
            assert!((r.theta_hat - 7.0).abs() < 2.6, "{spec}");
            let brute = (0..=200_000)
                .map(|i| 5.0 + 6.0 * i as f64 / 200_000.0)
                .map(|t| (t, disparity_value(spec, &q, &pmf_at(&fam, t, k).unwrap())))
                .fold(
                    (0.0, f64::INFINITY),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                );
            assert!(
                (r.theta_hat - brute.0).abs() < 1e-4,
                "{spec}: {} vs {}",
                r.theta_hat,
                brute.0
            );
        }
        // frozen 40-digit values of the functional at this mixture
        let hd = minimize(Disparity::Hd, &fam, &q).unwrap().theta_hat;
        let ned = minimize(Disparity::Ned, &fam, &q).unwrap().theta_hat;
        assert!((hd - 7.074_705_216_211_13).abs() < 1e-7, "{hd}");
        assert!((ned - 7.001_096_425_148_23).abs() < 1e-7, "{ned}");
    }

    #[test]
    fn doubling_tree_ld_estimate() {
        let tree = simulate(&Pmf::point_mass(2), &ControlSpec::identity(), 1, 5, 0);
        let r = mde_from_tree(Disparity::Ld, &Poisson::default(), &tree).unwrap();
        assert!((r.theta_hat - 2.0).abs() < 1e-6);
    }

    #[test]
    fn shifting_g_by_a_constant_shifts_the_value_only() {
        // NED with G(d) = exp(-d) - 2 differs from exp(-d) - 1 by -1 per unit mass
        let fam = Poisson::default();
        let q = contaminated_model(&fam, 7.0, ContaminationSpec::new(0.15, 16).unwrap()).unwrap();
        let k = evaluation_truncation(&fam, &q);
        let raw = |t: f64| disparity_value(Disparity::Ned, &q, &pmf_at(&fam, t, k).unwrap());
        let opts = MinimizeOptions::default();
        let a = minimize_objective(raw, fam.domain(), &opts).unwrap();
        let b = minimize_objective(|t| raw(t) - 1.0, fam.domain(), &opts).unwrap();
        assert!((a.theta - b.theta).abs() < 1e-8);
        assert!(((b.value - a.value) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_infinite_is_an_error() {
        let domain = ThetaDomain::new(0.0, 1.0).unwrap();
        let r = minimize_objective(|_| f64::INFINITY, domain, &MinimizeOptions::default());
        assert_eq!(r, Err(Error::NoFiniteValue));
    }

    #[test]
    fn boundary_minimum_and_tie_breaking() {
        let domain = ThetaDomain::new(0.0, 1.0).unwrap();
        let opts = MinimizeOptions::default();
        let r = minimize_objective(|t| t, domain, &opts).unwrap();
        assert!(r.theta.abs() < 1e-8);
        let r = minimize_objective(|t| -t, domain, &opts).unwrap();
        assert!((r.theta - 1.0).abs() < 1e-8);
        // constant objective: every cell ties; the smallest theta wins
        let r = minimize_objective(|_| 3.0, domain, &opts).unwrap();
        assert!(r.theta < 1e-2);
        assert!(r.near_tie);
    }

    #[test]
    fn infinite_cells_never_win() {
        let domain = ThetaDomain::new(0.0, 10.0).unwrap();
        let f = |t: f64| {
            if t < 5.0 {
                f64::INFINITY
            } else {
                (t - 6.0).powi(2)
            }
        };
        let r = minimize_objective(f, domain, &MinimizeOptions::default()).unwrap();
        assert!((r.theta - 6.0).abs() < 1e-6);
    }

    #[test]
    fn empty_tree_propagates() {
        let tree = simulate(&Pmf::point_mass(2), &ControlSpec::identity(), 0, 3, 0);
        assert_eq!(
            mde_from_tree(Disparity::Hd, &Poisson::default(), &tree),
            Err(Error::NoProgenitors)
        );
    }
}
