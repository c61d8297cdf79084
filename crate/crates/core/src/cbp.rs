//! Simulation of controlled branching processes with the complete family
//! tree recorded.
//!
//! Generation `l` has `Z_l` individuals; the control draws `phi_l(Z_l)`
//! progenitors, each of which produces an i.i.d. offspring count. The tree
//! keeps, per generation, how many progenitors produced exactly `k`
//! offspring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{model_pmf, ControlSpec, OffspringFamily, Pmf};
use crate::error::{Error, Result};

/// Generation count of the most explosive contaminated model.
pub const SCHEDULE_MIN_GENERATIONS: usize = 8;
/// Generation count of the nearly critical contaminated model.
pub const SCHEDULE_MAX_GENERATIONS: usize = 65;
/// Growth rate paired with [`SCHEDULE_MIN_GENERATIONS`].
pub const SCHEDULE_FAST_RATE: f64 = 4.8;
/// Growth rate paired with [`SCHEDULE_MAX_GENERATIONS`].
pub const SCHEDULE_SLOW_RATE: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyTree {
    z: Vec<u64>,
    phi: Vec<u64>,
    counts: Vec<Vec<u64>>,
}

impl FamilyTree {
    /// `z` holds `Z_0..=Z_n`, `phi` and `counts` one entry per generation
    /// `0..n`. Trailing zero counts are dropped.
    pub fn new(z: Vec<u64>, phi: Vec<u64>, mut counts: Vec<Vec<u64>>) -> Result<Self> {
        if z.len() != phi.len() + 1 || counts.len() != phi.len() {
            return Err(Error::InvalidTree(format!(
                "expected n+1 generation sizes and n progenitor rows, got {} sizes, {} phi, {} count rows",
                z.len(),
                phi.len(),
                counts.len()
            )));
        }
        for (l, row) in counts.iter_mut().enumerate() {
            while row.last() == Some(&0) {
                row.pop();
            }
            let classified: u64 = row.iter().sum();
            if classified != phi[l] {
                return Err(Error::InvalidTree(format!(
                    "generation {l}: {classified} classified progenitors but phi = {}",
                    phi[l]
                )));
            }
            let born: u64 = row.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
            if born != z[l + 1] {
                return Err(Error::InvalidTree(format!(
                    "generation {l}: offspring total {born} but Z_{} = {}",
                    l + 1,
                    z[l + 1]
                )));
            }
        }
        Ok(Self { z, phi, counts })
    }

    /// Number of observed reproduction steps `n`.
    pub fn generations(&self) -> usize {
        self.phi.len()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.z
    }

    pub fn progenitors(&self) -> &[u64] {
        &self.phi
    }

    /// `Z_l(k)` for generation `l`, trailing zeros trimmed.
    pub fn counts(&self, generation: usize) -> &[u64] {
        &self.counts[generation]
    }

    pub fn count_rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn final_size(&self) -> u64 {
        *self.z.last().expect("tree has at least Z_0")
    }

    /// The tree observed only up to generation `n`.
    pub fn prefix(&self, n: usize) -> FamilyTree {
        let n = n.min(self.generations());
        FamilyTree {
            z: self.z[..=n].to_vec(),
            phi: self.phi[..n].to_vec(),
            counts: self.counts[..n].to_vec(),
        }
    }
}

/// `Delta_{n-1}` and `Y_{n-1}(k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTotals {
    pub delta: u64,
    pub y: Vec<u64>,
}

pub fn totals(tree: &FamilyTree) -> TreeTotals {
    totals_through(tree, tree.generations())
}

/// Totals over the first `n` reproduction steps.
pub fn totals_through(tree: &FamilyTree, n: usize) -> TreeTotals {
    let n = n.min(tree.generations());
    let delta = tree.phi[..n].iter().sum();
    let width = tree.counts[..n].iter().map(Vec::len).max().unwrap_or(0);
    let mut y = vec![0u64; width];
    for row in &tree.counts[..n] {
        for (k, c) in row.iter().enumerate() {
            y[k] += c;
        }
    }
    TreeTotals { delta, y }
}

/// Inverse-CDF sampler over a truncated pmf; the tail mass is folded into
/// the last cell.
#[derive(Debug, Clone)]
pub struct OffspringSampler {
    cdf: Vec<f64>,
}

impl OffspringSampler {
    pub fn new(pmf: &Pmf) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        Self { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }

    pub fn support_len(&self) -> usize {
        self.cdf.len()
    }
}

/// Simulates `generations` reproduction steps from `z0` individuals.
///
/// Extinction is absorbing: once no progenitor is drawn every later
/// generation is empty.
pub fn simulate(
    offspring: &Pmf,
    control: &ControlSpec,
    z0: u64,
    generations: usize,
    seed: u64,
) -> FamilyTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = OffspringSampler::new(offspring);
    let mut z = Vec::with_capacity(generations + 1);
    let mut phi = Vec::with_capacity(generations);
    let mut counts = Vec::with_capacity(generations);
    z.push(z0);
    for _ in 0..generations {
        let current = *z.last().expect("nonempty");
        let progenitors = control.sample(current, &mut rng);
        let mut row = vec![0u64; sampler.support_len()];
        for _ in 0..progenitors {
            row[sampler.sample(&mut rng)] += 1;
        }
        let born: u64 = row.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
        while row.last() == Some(&0) {
            row.pop();
        }
        phi.push(progenitors);
        counts.push(row);
        z.push(born);
    }
    FamilyTree { z, phi, counts }
}

/// [`simulate`] with offspring law `p(theta)` from a parametric family.
pub fn simulate_family<F: OffspringFamily + ?Sized>(
    family: &F,
    theta: f64,
    control: &ControlSpec,
    z0: u64,
    generations: usize,
    seed: u64,
) -> Result<FamilyTree> {
    let pmf = model_pmf(family, theta)?;
    Ok(simulate(&pmf, control, z0, generations, seed))
}

/// Observation horizon for a model with asymptotic mean growth rate
/// `tau_m`.
///
/// Interpolates linearly in `1 / ln(tau_m)` between 8 generations at
/// `tau_m = 4.8` and 65 generations at `tau_m = 1.05`, rounding up and
/// clamping to that range, so the expected population at the horizon stays
/// bounded across the grid.
pub fn generations_for_rate(tau_m: f64) -> Result<usize> {
    if tau_m.is_nan() || tau_m <= 1.0 || !tau_m.is_finite() {
        return Err(Error::SubcriticalSchedule { tau_m });
    }
    let inv = |t: f64| 1.0 / t.ln();
    let frac = (inv(tau_m) - inv(SCHEDULE_FAST_RATE))
        / (inv(SCHEDULE_SLOW_RATE) - inv(SCHEDULE_FAST_RATE));
    let span = (SCHEDULE_MAX_GENERATIONS - SCHEDULE_MIN_GENERATIONS) as f64;
    let raw = SCHEDULE_MIN_GENERATIONS as f64 + frac * span;
    // absorb rounding noise at the anchor points before taking the ceiling
    let n = (raw - 1e-9).ceil();
    Ok((n as usize).clamp(SCHEDULE_MIN_GENERATIONS, SCHEDULE_MAX_GENERATIONS))
}
