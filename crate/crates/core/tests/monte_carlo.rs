use cbp_mde::cbp::{simulate, simulate_family, totals_through};
use cbp_mde::dist::{model_pmf, ControlSpec};
use cbp_mde::mc::{grid_report, run_experiment, ExperimentConfig, ReplicationStatus};
use cbp_mde::npmle::npmle_from_totals;
use cbp_mde::{Disparity, Poisson};
use rayon::prelude::*;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn base_control() -> ControlSpec {
    ControlSpec::poisson(0.3).unwrap()
}

#[test]
fn first_generation_mean_is_tau_m() {
    let p = model_pmf(&Poisson::default(), 7.0).unwrap();
    let n = 100_000u64;
    let z1: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|s| simulate(&p, &base_control(), 1, 1, s).final_size() as f64)
        .collect();
    let mean = z1.iter().sum::<f64>() / n as f64;
    let var = z1.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - 2.1).abs() < 3.0 * se, "{mean} +- {se}");
}

#[test]
fn survival_probability_matches_the_pgf_iteration() {
    // P(Z_10 > 0) = 0.203888 from iterating f(s) = exp(0.3 (e^{7(s-1)} - 1))
    let p = model_pmf(&Poisson::default(), 7.0).unwrap();
    let n = 4000u64;
    let alive = (0..n)
        .into_par_iter()
        .filter(|&s| simulate(&p, &base_control(), 1, 10, s).final_size() > 0)
        .count() as f64;
    let frac = alive / n as f64;
    let target = 0.203_888;
    let se = (target * (1.0 - target) / n as f64).sqrt();
    assert!(frac > 0.0);
    assert!((frac - target).abs() < 3.0 * se, "{frac}");
}

#[test]
fn normalized_population_stabilizes_among_survivors() {
    let fam = Poisson::default();
    let trees: Vec<_> = (0..3000u64)
        .into_par_iter()
        .map(|s| simulate_family(&fam, 7.0, &base_control(), 1, 12, s).unwrap())
        .filter(|t| t.final_size() > 0)
        .collect();
    let cv = |n: usize| {
        let w: Vec<f64> = trees
            .iter()
            .map(|t| t.sizes()[n] as f64 / 2.1f64.powi(n as i32))
            .collect();
        let m = w.iter().sum::<f64>() / w.len() as f64;
        let v = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        v.sqrt() / m
    };
    let (c4, c8, c12) = (cv(4), cv(8), cv(12));
    assert!(
        (c12 - c8).abs() < (c8 - c4).abs().max(0.05),
        "{c4} {c8} {c12}"
    );
    assert!((c12 / c8 - 1.0).abs() < 0.1, "{c8} {c12}");
}

#[test]
fn npmle_l1_error_shrinks_with_generations() {
    let fam = Poisson::default();
    let truth = model_pmf(&fam, 7.0).unwrap();
    let trees: Vec<_> = (0..100u64)
        .map(|s| simulate_family(&fam, 7.0, &base_control(), 1, 10, s).unwrap())
        .filter(|t| t.final_size() > 0)
        .collect();
    assert!(!trees.is_empty());
    let l1 = |n: usize| {
        median(
            trees
                .iter()
                .map(|t| {
                    npmle_from_totals(&totals_through(t, n))
                        .unwrap()
                        .l1_distance(&truth)
                })
                .collect(),
        )
    };
    assert!(l1(10) < l1(3), "{} vs {}", l1(10), l1(3));
}

#[test]
fn estimators_are_consistent_along_generations() {
    let cfg = ExperimentConfig::uncontaminated(100, 10, 7);
    let set = run_experiment(&cfg, &Poisson::default()).unwrap();
    for spec in Disparity::ALL {
        let at10 = set.estimates(&set.baseline, spec, 10).unwrap();
        let at4 = set.estimates(&set.baseline, spec, 4).unwrap();
        let (e4, e10): (Vec<f64>, Vec<f64>) = at4
            .into_iter()
            .zip(at10)
            .filter_map(|(a, b)| Some(((a? - 7.0).abs(), (b? - 7.0).abs())))
            .unzip();
        assert!(e10.len() >= 10);
        assert!(median(e10.clone()) < median(e4.clone()), "{spec}");
        if spec == Disparity::Hd {
            let xs: Vec<f64> = set
                .estimates(&set.baseline, spec, 10)
                .unwrap()
                .into_iter()
                .flatten()
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((mean - 7.0).abs() < 0.2, "{mean}");
        }
    }
}

#[test]
fn cell_counts_add_up_and_reruns_are_identical() {
    let cfg = ExperimentConfig {
        replications: 20,
        alphas: vec![0.1, 0.3],
        l_values: vec![3, 15],
        ..ExperimentConfig::default()
    };
    let fam = Poisson::default();
    let a = run_experiment(&cfg, &fam).unwrap();
    let b = run_experiment(&cfg, &fam).unwrap();
    assert_eq!(a, b);
    let rows = grid_report(&a).unwrap();
    assert_eq!(rows.len(), 5);
    for (row, cell) in rows
        .iter()
        .zip(std::iter::once(&a.baseline).chain(&a.cells))
    {
        let c = row.counts;
        assert_eq!(c.survived + c.extinct + c.no_progenitors, 20);
        let survivors = cell
            .replications
            .iter()
            .filter(|r| r.status == ReplicationStatus::Survived)
            .count();
        assert_eq!(survivors, c.survived);
        for s in &row.stats {
            assert_eq!(s.count, survivors);
        }
    }
}
