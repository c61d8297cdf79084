//! Offspring laws, control laws and gross-error contamination.
//!
//! Probability mass functions are stored truncated at some `K`, with the
//! mass beyond `K` carried in [`Pmf::tail_mass`]. Parametric families expose
//! masses and their first two derivatives in the scalar parameter `theta`.

use rand::Rng;
use rand_distr::{Distribution, Poisson as PoissonSampler};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Tail mass left beyond the truncation point of any model evaluation.
pub const TAIL_TOL: f64 = 1e-12;

/// Normalization slack accepted by [`Pmf::new`].
pub const NORM_TOL: f64 = 1e-9;

/// A probability mass function on `0..=K` plus the mass beyond `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl Pmf {
    pub fn new(probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidPmf(format!("mass at k = {k} is {p}")));
        }
        if !tail_mass.is_finite() || tail_mass < 0.0 {
            return Err(Error::InvalidPmf(format!("tail mass is {tail_mass}")));
        }
        let total: f64 = probs.iter().sum::<f64>() + tail_mass;
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidPmf(format!("total mass is {total}")));
        }
        Ok(Self { probs, tail_mass })
    }

    /// Empirical law `counts[k] / total`, with no tail.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidPmf("all counts are zero".into()));
        }
        let denom = total as f64;
        let mut probs: Vec<f64> = counts.iter().map(|&c| c as f64 / denom).collect();
        trim_trailing_zeros(&mut probs);
        Ok(Self {
            probs,
            tail_mass: 0.0,
        })
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self {
            probs,
            tail_mass: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Mass at `k`; zero beyond the stored range.
    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Number of stored cells, i.e. `K + 1`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Largest `k` with positive mass.
    pub fn support_max(&self) -> Option<usize> {
        self.probs.iter().rposition(|&p| p > 0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    /// Mean over the stored cells (the tail is ignored).
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// L1 distance over the stored cells plus the difference in tail mass.
    pub fn l1_distance(&self, other: &Pmf) -> f64 {
        let n = self.len().max(other.len());
        (0..n)
            .map(|k| (self.get(k) - other.get(k)).abs())
            .sum::<f64>()
            + (self.tail_mass - other.tail_mass).abs()
    }
}

fn trim_trailing_zeros(v: &mut Vec<f64>) {
    while v.len() > 1 && v.last() == Some(&0.0) {
        v.pop();
    }
}

/// Compact parameter interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaDomain {
    pub lo: f64,
    pub hi: f64,
}

impl ThetaDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "parameter interval [{lo}, {hi}] is empty or unbounded"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lo && theta <= self.hi
    }

    pub fn check(&self, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::ThetaOutOfDomain {
                theta,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// `n` equally spaced points including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2, "a grid needs at least two points");
        let step = (self.hi - self.lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A one-parameter family of offspring laws on the nonnegative integers.
pub trait OffspringFamily: Send + Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> ThetaDomain;

    /// `p_k(theta)`.
    fn mass(&self, theta: f64, k: usize) -> f64;

    /// `p'_k(theta)`.
    fn deriv(&self, theta: f64, k: usize) -> f64;

    /// `p''_k(theta)`.
    fn second_deriv(&self, theta: f64, k: usize) -> f64;

    /// `p_0(theta) ..= p_K(theta)`.
    fn masses(&self, theta: f64, k_max: usize) -> Vec<f64> {
        (0..=k_max).map(|k| self.mass(theta, k)).collect()
    }

    fn derivs(&self, theta: f64, k_max: usize) -> Vec<f64> {
        (0..=k_max).map(|k| self.deriv(theta, k)).collect()
    }

    /// Mass beyond `k_max`.
    fn tail(&self, theta: f64, k_max: usize) -> f64 {
        (1.0 - self.masses(theta, k_max).iter().sum::<f64>()).max(0.0)
    }

    /// Derivative in `theta` of [`OffspringFamily::tail`].
    fn tail_deriv(&self, theta: f64, k_max: usize) -> f64 {
        -self.derivs(theta, k_max).iter().sum::<f64>()
    }

    /// `u(theta, k) = p'_k / p_k`.
    fn score(&self, theta: f64, k: usize) -> Result<f64> {
        let p = self.mass(theta, k);
        if p <= 0.0 {
            return Err(Error::UndefinedScore { theta, k });
        }
        Ok(self.deriv(theta, k) / p)
    }

    /// Smallest `K` whose tail mass at `theta` is below `tol`.
    fn truncation(&self, theta: f64, tol: f64) -> usize {
        let mut k = 0;
        while self.tail(theta, k) >= tol {
            k += 1;
        }
        k
    }

    /// Truncation valid simultaneously for every `theta` in the domain,
    /// probed on a grid.
    fn domain_truncation(&self, tol: f64) -> usize {
        self.domain()
            .grid(33)
            .into_iter()
            .map(|t| self.truncation(t, tol))
            .max()
            .unwrap_or(0)
    }
}

/// Poisson offspring law parameterized by its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poisson {
    domain: ThetaDomain,
}

impl Default for Poisson {
    fn default() -> Self {
        Self {
            domain: ThetaDomain { lo: 0.1, hi: 30.0 },
        }
    }
}

impl Poisson {
    pub fn new(domain: ThetaDomain) -> Result<Self> {
        if domain.lo <= 0.0 {
            return Err(Error::InvalidConfig(
                "Poisson mean interval must lie in (0, inf)".into(),
            ));
        }
        Ok(Self { domain })
    }
}

impl OffspringFamily for Poisson {
    fn name(&self) -> &str {
        "poisson"
    }

    fn domain(&self) -> ThetaDomain {
        self.domain
    }

    fn mass(&self, theta: f64, k: usize) -> f64 {
        (-theta + k as f64 * theta.ln() - ln_factorial(k as u64)).exp()
    }

    fn deriv(&self, theta: f64, k: usize) -> f64 {
        self.mass(theta, k) * (k as f64 / theta - 1.0)
    }

    fn second_deriv(&self, theta: f64, k: usize) -> f64 {
        let u = k as f64 / theta - 1.0;
        self.mass(theta, k) * (u * u - k as f64 / (theta * theta))
    }

    fn masses(&self, theta: f64, k_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k_max + 1);
        let mut p = (-theta).exp();
        out.push(p);
        for k in 1..=k_max {
            p *= theta / k as f64;
            out.push(p);
        }
        out
    }

    fn derivs(&self, theta: f64, k_max: usize) -> Vec<f64> {
        self.masses(theta, k_max)
            .into_iter()
            .enumerate()
            .map(|(k, p)| p * (k as f64 / theta - 1.0))
            .collect()
    }

    fn tail(&self, theta: f64, k_max: usize) -> f64 {
        // Forward summation keeps the tail accurate far below machine epsilon.
        let mut k = k_max + 1;
        let mut term = self.mass(theta, k);
        let mut sum = 0.0;
        while term > 0.0 {
            sum += term;
            if k as f64 > theta && term < sum * 1e-18 {
                break;
            }
            k += 1;
            term *= theta / k as f64;
        }
        sum
    }

    fn tail_deriv(&self, theta: f64, k_max: usize) -> f64 {
        // d/dtheta P(X > K) = p_K(theta) for the Poisson law.
        self.mass(theta, k_max)
    }

    fn score(&self, theta: f64, k: usize) -> Result<f64> {
        if self.mass(theta, k) <= 0.0 {
            return Err(Error::UndefinedScore { theta, k });
        }
        Ok(k as f64 / theta - 1.0)
    }

    fn truncation(&self, theta: f64, tol: f64) -> usize {
        let k_hi = (theta + 12.0 * theta.sqrt() + 40.0).ceil() as usize;
        let masses = self.masses(theta, k_hi);
        let mut suffix = self.tail(theta, k_hi);
        for k in (0..=k_hi).rev() {
            // suffix == tail beyond k
            if suffix >= tol {
                return k + 1;
            }
            suffix += masses[k];
        }
        0
    }

    fn domain_truncation(&self, tol: f64) -> usize {
        // The Poisson upper tail is increasing in the mean.
        self.truncation(self.domain.hi, tol)
    }
}

/// `{p_k(theta)}_{k=0..=K}` with the tail beyond `K`.
pub fn pmf_at<F: OffspringFamily + ?Sized>(family: &F, theta: f64, k_max: usize) -> Result<Pmf> {
    family.domain().check(theta)?;
    let probs = family.masses(theta, k_max);
    let tail_mass = family.tail(theta, k_max);
    Pmf::new(probs, tail_mass)
}

/// Model pmf truncated so that its tail is below [`TAIL_TOL`].
pub fn model_pmf<F: OffspringFamily + ?Sized>(family: &F, theta: f64) -> Result<Pmf> {
    family.domain().check(theta)?;
    pmf_at(family, theta, family.truncation(theta, TAIL_TOL))
}

pub fn score<F: OffspringFamily + ?Sized>(family: &F, theta: f64, k: usize) -> Result<f64> {
    family.score(theta, k)
}

/// `I(theta) = sum_k u(theta, k)^2 p_k(theta)` over `k <= K`.
pub fn fisher_information<F: OffspringFamily + ?Sized>(
    family: &F,
    theta: f64,
    k_max: usize,
) -> Result<f64> {
    family.domain().check(theta)?;
    let tail = family.tail(theta, k_max);
    if tail >= TAIL_TOL {
        return Err(Error::TruncationTooShort {
            k: k_max,
            tail,
            tol: TAIL_TOL,
        });
    }
    let masses = family.masses(theta, k_max);
    let derivs = family.derivs(theta, k_max);
    Ok(masses
        .iter()
        .zip(&derivs)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, d)| d * d / p)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    /// `phi(k) = floor(rate * k)`.
    Deterministic,
    /// `phi(k) ~ Poisson(rate * k)`.
    PoissonRate,
}

/// Law of the control variables `phi_n(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub law: ControlLaw,
    pub rate: f64,
}

impl ControlSpec {
    pub fn new(law: ControlLaw, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "control rate must be nonnegative, got {rate}"
            )));
        }
        Ok(Self { law, rate })
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        Self::new(ControlLaw::PoissonRate, rate)
    }

    /// Every individual reproduces: `phi(k) = k`.
    pub fn identity() -> Self {
        Self {
            law: ControlLaw::Deterministic,
            rate: 1.0,
        }
    }

    /// `epsilon(k) = E[phi(k)]`.
    pub fn mean(&self, k: u64) -> f64 {
        match self.law {
            ControlLaw::Deterministic => (self.rate * k as f64).floor(),
            ControlLaw::PoissonRate => self.rate * k as f64,
        }
    }

    /// `sigma^2(k) = Var[phi(k)]`.
    pub fn variance(&self, k: u64) -> f64 {
        match self.law {
            ControlLaw::Deterministic => 0.0,
            ControlLaw::PoissonRate => self.rate * k as f64,
        }
    }

    /// `tau = lim epsilon(k) / k`.
    pub fn tau(&self) -> f64 {
        self.rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> u64 {
        match self.law {
            ControlLaw::Deterministic => (self.rate * k as f64).floor() as u64,
            ControlLaw::PoissonRate => {
                let mean = self.rate * k as f64;
                if mean <= 0.0 {
                    return 0;
                }
                let dist = PoissonSampler::new(mean).expect("positive finite Poisson mean");
                dist.sample(rng) as u64
            }
        }
    }
}

/// Gross-error mixture `(1 - alpha) p + alpha * eta_L`.
///
/// Negative `alpha` models inliers and is only admissible while the mixture
/// stays a probability distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub alpha: f64,
    pub location: usize,
}

impl ContaminationSpec {
    pub fn new(alpha: f64, location: usize) -> Result<Self> {
        if !alpha.is_finite() || alpha >= 1.0 || alpha <= -1.0 {
            return Err(Error::InvalidContamination {
                alpha,
                location,
                reason: "alpha must lie in (-1, 1)".into(),
            });
        }
        Ok(Self { alpha, location })
    }

    /// Builds the spec and checks inlier admissibility against `base`.
    pub fn for_base(alpha: f64, location: usize, base: &Pmf) -> Result<Self> {
        let spec = Self::new(alpha, location)?;
        spec.validate_against(base)?;
        Ok(spec)
    }

    /// Most negative admissible alpha for a base mass `p_L`.
    pub fn inlier_bound(p_l: f64) -> f64 {
        -p_l / (1.0 - p_l)
    }

    pub fn validate_against(&self, base: &Pmf) -> Result<()> {
        let mass = (1.0 - self.alpha) * base.get(self.location) + self.alpha;
        if mass < 0.0 {
            return Err(Error::InvalidContamination {
                alpha: self.alpha,
                location: self.location,
                reason: format!(
                    "mixture mass at L would be {mass:e}; alpha must be >= {:e}",
                    Self::inlier_bound(base.get(self.location))
                ),
            });
        }
        Ok(())
    }
}

pub fn contaminate(base: &Pmf, spec: ContaminationSpec) -> Result<Pmf> {
    spec.validate_against(base)?;
    let a = spec.alpha;
    let n = base.len().max(spec.location + 1);
    let mut probs: Vec<f64> = (0..n).map(|k| (1.0 - a) * base.get(k)).collect();
    probs[spec.location] = ((1.0 - a) * base.get(spec.location) + a).max(0.0);
    Pmf::new(probs, (1.0 - a) * base.tail_mass())
}

/// Contaminated model `p(theta, alpha, L)` truncated to cover both the model
/// tail tolerance and the gross-error location.
pub fn contaminated_model<F: OffspringFamily + ?Sized>(
    family: &F,
    theta: f64,
    spec: ContaminationSpec,
) -> Result<Pmf> {
    family.domain().check(theta)?;
    let k = family.truncation(theta, TAIL_TOL).max(spec.location);
    contaminate(&pmf_at(family, theta, k)?, spec)
}

/// Asymptotic mean growth rate `lambda * [(1 - alpha) theta0 + alpha L]` of
/// the contaminated Poisson-control model.
pub fn tau_m_contaminated(theta0: f64, lambda: f64, spec: ContaminationSpec) -> f64 {
    lambda * ((1.0 - spec.alpha) * theta0 + spec.alpha * spec.location as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson() -> Poisson {
        Poisson::default()
    }

    #[test]
    fn poisson_p0_at_seven() {
        let pmf = model_pmf(&poisson(), 7.0).unwrap();
        assert!((pmf.get(0) - 9.118_819_655_545_162e-4).abs() < 1e-16);
    }

    #[test]
    fn poisson_mean_and_truncation() {
        let pmf = model_pmf(&poisson(), 7.0).unwrap();
        assert!(pmf.tail_mass() < 1e-12);
        assert!((pmf.mean() - 7.0).abs() < 1e-9);
        assert!((pmf.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_is_minimal() {
        let fam = poisson();
        for &theta in &[0.1, 2.0, 7.0, 15.0, 30.0] {
            let k = fam.truncation(theta, TAIL_TOL);
            assert!(fam.tail(theta, k) < TAIL_TOL);
            assert!(k == 0 || fam.tail(theta, k - 1) >= TAIL_TOL);
        }
        assert_eq!(
            fam.domain_truncation(TAIL_TOL),
            fam.truncation(30.0, TAIL_TOL)
        );
    }

    #[test]
    fn pmf_at_rejects_out_of_domain() {
        assert!(matches!(
            pmf_at(&poisson(), 31.0, 10),
            Err(Error::ThetaOutOfDomain { .. })
        ));
        assert!(pmf_at(&poisson(), 0.05, 10).is_err());
    }

    #[test]
    fn scores() {
        let fam = poisson();
        assert_eq!(score(&fam, 7.0, 7).unwrap(), 0.0);
        assert!((score(&fam, 7.0, 20).unwrap() - 13.0 / 7.0).abs() < 1e-15);
        assert_eq!(score(&fam, 7.0, 0).unwrap(), -1.0);
    }

    #[test]
    fn score_undefined_at_zero_mass() {
        // k = 2000 underflows to zero mass at theta = 0.1
        assert!(matches!(
            score(&poisson(), 0.1, 2000),
            Err(Error::UndefinedScore { .. })
        ));
    }

    #[test]
    fn fisher_information_matches_one_over_theta() {
        let fam = poisson();
        // brute-force oracle over k <= 200 with the analytic score
        for &theta in &[1.0, 7.0] {
            let brute: f64 = (0..=200)
                .map(|k| {
                    let u = k as f64 / theta - 1.0;
                    u * u * fam.mass(theta, k)
                })
                .sum();
            assert!((brute - 1.0 / theta).abs() < 1e-9);
            let k = fam.truncation(theta, TAIL_TOL);
            let info = fisher_information(&fam, theta, k).unwrap();
            assert!(
                (info - 1.0 / theta).abs() < 1e-9,
                "theta={theta} info={info}"
            );
            assert!(info > 0.0);
        }
        assert!(matches!(
            fisher_information(&fam, 7.0, 5),
            Err(Error::TruncationTooShort { .. })
        ));
    }

    #[test]
    fn contamination_identity_and_substitution() {
        let base = model_pmf(&poisson(), 7.0).unwrap();
        let same = contaminate(&base, ContaminationSpec::new(0.0, 3).unwrap()).unwrap();
        assert_eq!(same, base);

        let spec = ContaminationSpec::new(0.2, 20).unwrap();
        let mixed = contaminate(&base, spec).unwrap();
        assert!((mixed.get(20) - (0.8 * base.get(20) + 0.2)).abs() < 1e-16);
        assert!((mixed.total() - 1.0).abs() < 1e-12);
        assert!((mixed.mean() - (0.8 * 7.0 + 0.2 * 20.0)).abs() < 1e-9);
    }

    #[test]
    fn deepest_inlier_of_the_l0_table_is_admissible() {
        let base = model_pmf(&poisson(), 7.0).unwrap();
        let bound = ContaminationSpec::inlier_bound(base.get(0));
        assert!((bound + 9.127_142_532_217_34e-4).abs() < 1e-15);
        let spec = ContaminationSpec::for_base(-0.0009, 0, &base).unwrap();
        let mixed = contaminate(&base, spec).unwrap();
        assert!(mixed.get(0) > 0.0);
        assert!(matches!(
            ContaminationSpec::for_base(-0.001, 0, &base),
            Err(Error::InvalidContamination { .. })
        ));
    }

    #[test]
    fn contamination_rejects_out_of_range_alpha() {
        assert!(ContaminationSpec::new(1.0, 0).is_err());
        assert!(ContaminationSpec::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn tau_m_values() {
        let s = |a, l| ContaminationSpec::new(a, l).unwrap();
        assert!((tau_m_contaminated(7.0, 0.3, s(0.0, 0)) - 2.1).abs() < 1e-12);
        assert!((tau_m_contaminated(7.0, 0.3, s(0.5, 25)) - 4.8).abs() < 1e-12);
        assert!((tau_m_contaminated(7.0, 0.3, s(0.5, 0)) - 1.05).abs() < 1e-12);
    }

    #[test]
    fn control_moments() {
        let c = ControlSpec::poisson(0.3).unwrap();
        for k in [0u64, 1, 10, 1000] {
            assert_eq!(c.mean(k), 0.3 * k as f64);
            assert_eq!(c.variance(k), 0.3 * k as f64);
        }
        assert_eq!(c.tau(), 0.3);
        let id = ControlSpec::identity();
        assert_eq!(id.mean(17), 17.0);
        assert_eq!(id.variance(17), 0.0);
    }

    #[test]
    fn pmf_validation() {
        assert!(Pmf::new(vec![0.5, 0.4], 0.1).is_ok());
        assert!(Pmf::new(vec![0.5, 0.4], 0.0).is_err());
        assert!(Pmf::new(vec![1.5, -0.5], 0.0).is_err());
        assert!(Pmf::new(vec![1.0], -1e-3).is_err());
        let emp = Pmf::from_counts(&[0, 1, 0, 1, 0]).unwrap();
        assert_eq!(emp.probs(), &[0.0, 0.5, 0.0, 0.5]);
        assert!(Pmf::from_counts(&[0, 0]).is_err());
    }
}
