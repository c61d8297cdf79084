//! Monte Carlo harness: simulate many controlled branching processes under
//! clean and gross-error-contaminated offspring laws, estimate the offspring
//! parameter with each disparity, and summarize efficiency, accuracy and
//! normality.
//!
//! Replication `i` of cell `c` draws its randomness from
//! `seed_base + c * replications + i`, so results do not depend on thread
//! scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cbp::{generations_for_rate, simulate, totals_through, FamilyTree};
use crate::disparity::Disparity;
use crate::dist::{
    contaminated_model, fisher_information, model_pmf, tau_m_contaminated, ContaminationSpec,
    ControlSpec, OffspringFamily, TAIL_TOL,
};
use crate::error::{Error, Result};
use crate::mde::minimize;
use crate::npmle::npmle_from_totals;

/// Minimum survivor count for a trustworthy normality diagnostic.
pub const MIN_NORMALITY_SAMPLE: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub theta0: f64,
    pub lambda: f64,
    pub z0: u64,
    /// Horizon of the uncontaminated cell.
    pub generations: usize,
    pub replications: usize,
    pub disparities: Vec<Disparity>,
    pub alphas: Vec<f64>,
    pub l_values: Vec<usize>,
    pub seed_base: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            theta0: 7.0,
            lambda: 0.3,
            z0: 1,
            generations: 10,
            replications: 100,
            disparities: Disparity::ALL.to_vec(),
            alphas: (1..=10).map(|i| 0.05 * i as f64).collect(),
            l_values: (0..=25).collect(),
            seed_base: 20_170_301,
        }
    }
}

impl ExperimentConfig {
    /// Only the uncontaminated cell.
    pub fn uncontaminated(replications: usize, generations: usize, seed_base: u64) -> Self {
        Self {
            replications,
            generations,
            seed_base,
            alphas: Vec::new(),
            l_values: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate<F: OffspringFamily + ?Sized>(&self, family: &F) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if self.generations == 0 {
            return Err(Error::InvalidConfig("generations must be >= 1".into()));
        }
        if self.disparities.is_empty() {
            return Err(Error::InvalidConfig("no disparity selected".into()));
        }
        family.domain().check(self.theta0)?;
        ControlSpec::poisson(self.lambda)?;
        let base = model_pmf(family, self.theta0)?;
        for &alpha in &self.alphas {
            for &l in &self.l_values {
                ContaminationSpec::for_base(alpha, l, &base)?;
            }
        }
        Ok(())
    }

    /// Grid cells, the uncontaminated cell first.
    pub fn cells(&self) -> Result<Vec<GridCell>> {
        let mut out = vec![GridCell {
            alpha: 0.0,
            location: 0,
            tau_m: self.theta0 * self.lambda,
            horizon: self.generations,
            baseline: true,
        }];
        for &alpha in &self.alphas {
            for &l in &self.l_values {
                let tau_m =
                    tau_m_contaminated(self.theta0, self.lambda, ContaminationSpec::new(alpha, l)?);
                out.push(GridCell {
                    alpha,
                    location: l,
                    tau_m,
                    horizon: generations_for_rate(tau_m)?,
                    baseline: false,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub location: usize,
    pub tau_m: f64,
    pub horizon: usize,
    pub baseline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicationStatus {
    /// `Z_n > 0` at the horizon.
    Survived,
    /// Died out after at least one progenitor reproduced.
    Extinct,
    /// No progenitor ever reproduced; nothing to estimate from.
    NoProgenitors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationEstimate {
    pub generation: usize,
    pub delta: u64,
    /// One entry per configured disparity; `None` when the estimator failed.
    pub estimates: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub status: ReplicationStatus,
    /// Generations at which the process was alive and estimates were taken.
    pub estimates: Vec<GenerationEstimate>,
}

impl Replication {
    pub fn at_generation(&self, generation: usize) -> Option<&GenerationEstimate> {
        self.estimates.iter().find(|e| e.generation == generation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    pub replications: Vec<Replication>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub survived: usize,
    pub extinct: usize,
    pub no_progenitors: usize,
}

impl CellResult {
    pub fn status_counts(&self) -> StatusCounts {
        let mut c = StatusCounts {
            survived: 0,
            extinct: 0,
            no_progenitors: 0,
        };
        for r in &self.replications {
            match r.status {
                ReplicationStatus::Survived => c.survived += 1,
                ReplicationStatus::Extinct => c.extinct += 1,
                ReplicationStatus::NoProgenitors => c.no_progenitors += 1,
            }
        }
        c
    }

    pub fn survival_fraction(&self) -> f64 {
        self.status_counts().survived as f64 / self.replications.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSet {
    pub config: ExperimentConfig,
    pub baseline: CellResult,
    pub cells: Vec<CellResult>,
}

impl ReplicationSet {
    fn slot(&self, disparity: Disparity) -> Result<usize> {
        self.config
            .disparities
            .iter()
            .position(|d| *d == disparity)
            .ok_or_else(|| Error::InvalidConfig(format!("{disparity} was not estimated")))
    }

    /// Per-replication estimate of `disparity` at `generation` in `cell`.
    pub fn estimates(
        &self,
        cell: &CellResult,
        disparity: Disparity,
        generation: usize,
    ) -> Result<Vec<Option<f64>>> {
        let slot = self.slot(disparity)?;
        Ok(cell
            .replications
            .iter()
            .map(|r| r.at_generation(generation).and_then(|e| e.estimates[slot]))
            .collect())
    }

    /// Per-replication `(Delta_{n-1}, estimate)` at `generation`.
    pub fn estimates_with_delta(
        &self,
        cell: &CellResult,
        disparity: Disparity,
        generation: usize,
    ) -> Result<Vec<(u64, f64)>> {
        let slot = self.slot(disparity)?;
        Ok(cell
            .replications
            .iter()
            .filter_map(|r| {
                r.at_generation(generation)
                    .and_then(|e| e.estimates[slot].map(|t| (e.delta, t)))
            })
            .collect())
    }
}

fn estimate_at<F: OffspringFamily + ?Sized>(
    family: &F,
    tree: &FamilyTree,
    generation: usize,
    disparities: &[Disparity],
) -> Option<GenerationEstimate> {
    if tree.sizes()[generation] == 0 {
        return None;
    }
    let totals = totals_through(tree, generation);
    let q = npmle_from_totals(&totals).ok()?;
    Some(GenerationEstimate {
        generation,
        delta: totals.delta,
        estimates: disparities
            .iter()
            .map(|&d| minimize(d, family, &q).ok().map(|r| r.theta_hat))
            .collect(),
    })
}

fn run_replication<F: OffspringFamily + ?Sized>(
    family: &F,
    config: &ExperimentConfig,
    offspring: &crate::dist::Pmf,
    control: &ControlSpec,
    cell: &GridCell,
    index: usize,
    seed: u64,
) -> Replication {
    let tree = simulate(offspring, control, config.z0, cell.horizon, seed);
    let status = if tree.final_size() > 0 {
        ReplicationStatus::Survived
    } else if tree.progenitors().iter().any(|&p| p > 0) {
        ReplicationStatus::Extinct
    } else {
        ReplicationStatus::NoProgenitors
    };
    let generations: Vec<usize> = if cell.baseline {
        (1..=cell.horizon).collect()
    } else {
        vec![cell.horizon]
    };
    let estimates = generations
        .into_iter()
        .filter_map(|n| estimate_at(family, &tree, n, &config.disparities))
        .collect();
    Replication {
        index,
        seed,
        status,
        estimates,
    }
}

/// Runs every cell of the experiment. The uncontaminated cell records
/// estimates at each generation; contaminated cells only at their horizon.
pub fn run_experiment<F: OffspringFamily + ?Sized>(
    config: &ExperimentConfig,
    family: &F,
) -> Result<ReplicationSet> {
    config.validate(family)?;
    let control = ControlSpec::poisson(config.lambda)?;
    let cells = config.cells()?;
    let offspring = cells
        .iter()
        .map(|c| {
            contaminated_model(
                family,
                config.theta0,
                ContaminationSpec::new(c.alpha, c.location)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let n = config.replications;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..n).map(move |i| (c, i)))
        .collect();
    let reps: Vec<Replication> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let seed = config.seed_base.wrapping_add((c * n + i) as u64);
            run_replication(family, config, &offspring[c], &control, &cells[c], i, seed)
        })
        .collect();

    let mut results: Vec<CellResult> = cells
        .into_iter()
        .zip(reps.chunks(n))
        .map(|(cell, chunk)| CellResult {
            cell,
            replications: chunk.to_vec(),
        })
        .collect();
    let baseline = results.remove(0);
    Ok(ReplicationSet {
        config: config.clone(),
        baseline,
        cells: results,
    })
}

/// `N^{-1} sum_i (theta_i - theta0)^2`.
pub fn mse(estimates: &[f64], theta0: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(estimates.iter().map(|t| (t - theta0).powi(2)).sum::<f64>() / estimates.len() as f64)
}

/// `MSE(a) / MSE(b)` in the uncontaminated cell at `generation`, over the
/// replications where both estimators produced a value.
pub fn relative_efficiency(
    set: &ReplicationSet,
    pair: (Disparity, Disparity),
    generation: usize,
) -> Result<f64> {
    let a = set.estimates(&set.baseline, pair.0, generation)?;
    let b = set.estimates(&set.baseline, pair.1, generation)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .into_iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x?, y?)))
        .unzip();
    let theta0 = set.config.theta0;
    let num = mse(&xs, theta0)?;
    let den = mse(&ys, theta0)?;
    if den == 0.0 {
        return Err(Error::DegenerateRatio);
    }
    Ok(num / den)
}

/// The three efficiency ratios MSE(HD)/MSE(NED), MSE(LD)/MSE(HD) and
/// MSE(LD)/MSE(NED).
pub const EFFICIENCY_PAIRS: [(Disparity, Disparity); 3] = [
    (Disparity::Hd, Disparity::Ned),
    (Disparity::Ld, Disparity::Hd),
    (Disparity::Ld, Disparity::Ned),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub disparity: Disparity,
    pub generation: usize,
    /// `Delta_{n-1}^{1/2} (theta_i - theta0) I(theta0)^{1/2}`.
    pub standardized: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Kolmogorov-Smirnov distance to the standard normal.
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// Fewer than [`MIN_NORMALITY_SAMPLE`] survivors.
    pub insufficient_sample: bool,
    /// Zero spread; cannot be normal.
    pub degenerate: bool,
}

impl NormalitySummary {
    pub fn plausibly_normal(&self) -> bool {
        !self.degenerate && self.ks_p_value > 0.01
    }
}

pub fn normality_diagnostic<F: OffspringFamily + ?Sized>(
    set: &ReplicationSet,
    family: &F,
    theta0: f64,
    spec: Disparity,
) -> Result<NormalitySummary> {
    let generation = set.config.generations;
    let info = fisher_information(family, theta0, family.truncation(theta0, TAIL_TOL))?;
    let standardized: Vec<f64> = set
        .estimates_with_delta(&set.baseline, spec, generation)?
        .into_iter()
        .map(|(delta, t)| (delta as f64).sqrt() * (t - theta0) * info.sqrt())
        .collect();
    normality_from_standardized(spec, generation, standardized)
}

pub fn normality_from_standardized(
    spec: Disparity,
    generation: usize,
    standardized: Vec<f64>,
) -> Result<NormalitySummary> {
    let n = standardized.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mean = standardized.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        standardized.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let (ks_statistic, ks_p_value) = ks_standard_normal(&standardized);
    Ok(NormalitySummary {
        disparity: spec,
        generation,
        standardized,
        mean,
        variance,
        ks_statistic,
        ks_p_value,
        insufficient_sample: n < MIN_NORMALITY_SAMPLE,
        degenerate: variance == 0.0,
    })
}

/// One-sample KS statistic against N(0, 1) and its asymptotic p-value.
fn ks_standard_normal(sample: &[f64]) -> (f64, f64) {
    let normal = Normal::standard();
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityCellStats {
    pub disparity: Disparity,
    pub count: usize,
    pub mean: Option<f64>,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: GridCell,
    pub counts: StatusCounts,
    pub stats: Vec<DisparityCellStats>,
    /// Disparity with the smallest MSE in this cell.
    pub best: Option<Disparity>,
}

impl GridRow {
    pub fn stat(&self, d: Disparity) -> Option<&DisparityCellStats> {
        self.stats.iter().find(|s| s.disparity == d)
    }
}

fn cell_row(set: &ReplicationSet, cell: &CellResult) -> Result<GridRow> {
    let theta0 = set.config.theta0;
    let stats = set
        .config
        .disparities
        .iter()
        .map(|&d| {
            let xs: Vec<f64> = set
                .estimates(cell, d, cell.cell.horizon)?
                .into_iter()
                .flatten()
                .collect();
            Ok(DisparityCellStats {
                disparity: d,
                count: xs.len(),
                mean: (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64),
                mse: mse(&xs, theta0).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = stats
        .iter()
        .filter_map(|s| s.mse.map(|m| (s.disparity, m)))
        .fold(None, |acc: Option<(Disparity, f64)>, x| match acc {
            Some(a) if a.1 <= x.1 => Some(a),
            _ => Some(x),
        })
        .map(|(d, _)| d);
    Ok(GridRow {
        cell: cell.cell,
        counts: cell.status_counts(),
        stats,
        best,
    })
}

/// One row per cell at its horizon, the uncontaminated cell first.
pub fn grid_report(set: &ReplicationSet) -> Result<Vec<GridRow>> {
    std::iter::once(&set.baseline)
        .chain(&set.cells)
        .map(|c| cell_row(set, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Poisson;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[7.0, 7.0], 7.0).unwrap(), 0.0);
        assert_eq!(mse(&[8.0], 7.0).unwrap(), 1.0);
        assert_eq!(mse(&[6.0, 8.0], 7.0).unwrap(), 1.0);
        assert_eq!(mse(&[], 7.0), Err(Error::EmptySample));
    }

    #[test]
    fn default_grid_has_260_contaminated_cells() {
        let cfg = ExperimentConfig::default();
        let cells = cfg.cells().unwrap();
        assert_eq!(cells.len(), 261);
        assert!(cells[0].baseline);
        let max_tau = cells.iter().map(|c| c.tau_m).fold(0.0, f64::max);
        let min_tau = cells.iter().map(|c| c.tau_m).fold(f64::INFINITY, f64::min);
        assert!((max_tau - 4.8).abs() < 1e-12);
        assert!((min_tau - 1.05).abs() < 1e-12);
        assert!(cells.iter().all(|c| (8..=65).contains(&c.horizon)));
        cfg.validate(&Poisson::default()).unwrap();
    }

    #[test]
    fn invalid_configs() {
        let fam = Poisson::default();
        let mut cfg = ExperimentConfig::uncontaminated(0, 5, 1);
        assert!(cfg.validate(&fam).is_err());
        cfg.replications = 2;
        cfg.alphas = vec![-0.01];
        cfg.l_values = vec![0];
        assert!(matches!(
            cfg.validate(&fam),
            Err(Error::InvalidContamination { .. })
        ));
    }

    #[test]
    fn normality_flags() {
        let s = normality_from_standardized(Disparity::Hd, 10, vec![0.0; 40]).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.variance, 0.0);
        assert!(!s.plausibly_normal());
        let s = normality_from_standardized(Disparity::Hd, 10, vec![-1.0, 1.0]).unwrap();
        assert!(s.insufficient_sample);
    }

    #[test]
    fn kolmogorov_tail() {
        // tabulated: Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn identical_estimators_have_unit_efficiency() {
        let mut cfg = ExperimentConfig::uncontaminated(40, 6, 11);
        cfg.disparities = vec![Disparity::Ld, Disparity::Ld];
        let set = run_experiment(&cfg, &Poisson::default()).unwrap();
        assert_eq!(
            relative_efficiency(&set, (Disparity::Ld, Disparity::Ld), 6).unwrap(),
            1.0
        );
    }
}
