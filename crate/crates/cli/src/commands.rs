use std::path::PathBuf;

use anyhow::Context;
use cbp_mde::cbp::{simulate as simulate_tree, totals};
use cbp_mde::dist::{model_pmf, ControlLaw, ControlSpec};
use cbp_mde::mc::{
    grid_report, normality_diagnostic, relative_efficiency, run_experiment, ExperimentConfig,
    EFFICIENCY_PAIRS,
};
use cbp_mde::robust::{alpha_influence, bias_ratio_table};
use cbp_mde::{minimize, npmle, Disparity, FamilyTree, Pmf, Poisson};
use serde::Serialize;

use crate::config::{parse_disparities, ConfigFile};
use crate::output::{csv_bytes, num, opt_num, OutputDir};
use crate::tree_csv::{read_tree, tree_to_string};
use crate::{
    BiasTablesArgs, CliError, ControlKind, EstimateArgs, ExperimentArgs, InfluenceArgs, ModelArgs,
    SimulateArgs,
};

pub const TREE_FILE: &str = "tree.csv";
pub const ESTIMATE_FILE: &str = "estimate.json";
pub const INFLUENCE_FILE: &str = "influence.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const EFFICIENCY_FILE: &str = "efficiency.csv";
pub const NORMALITY_FILE: &str = "normality.json";
pub const BIAS_LOCATIONS: [usize; 3] = [0, 8, 20];

pub fn bias_file(location: usize) -> String {
    format!("bias_L{location}.csv")
}

/// Inlier proportions tabulated for each gross-error location.
pub fn bias_alphas(location: usize) -> Vec<f64> {
    let (step, scale) = match location {
        0 => (1.0, 1e4),
        8 => (1.0, 1e2),
        _ => (25.0, 1e7),
    };
    let first = if location == 20 { 3 } else { 1 };
    (first..first + 9)
        .map(|i| -(i as f64 * step) / scale)
        .collect()
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .context("serializing JSON")
        .map_err(CliError::Io)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn simulate_model(m: &ModelArgs) -> Result<FamilyTree, CliError> {
    let offspring = match m.offspring_point {
        Some(k) => Pmf::point_mass(k),
        None => model_pmf(&Poisson::default(), m.theta0)?,
    };
    let law = match m.control {
        ControlKind::Poisson => ControlLaw::PoissonRate,
        ControlKind::Deterministic => ControlLaw::Deterministic,
    };
    let control = ControlSpec::new(law, m.lambda)?;
    Ok(simulate_tree(&offspring, &control, m.z0, m.gens, m.seed))
}

pub fn simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let tree = simulate_model(&args.model)?;
    let mut out = OutputDir::create(&args.out.out)?;
    let path = out.write(TREE_FILE, tree_to_string(&tree).as_bytes())?;
    out.finish("simulate", &args.model, Some(args.model.seed))?;
    Ok(vec![path])
}

#[derive(Debug, Serialize)]
struct EstimateRecord {
    disparity: Disparity,
    theta_hat: f64,
    /// `null` when infinite.
    value: Option<f64>,
    stationarity: Option<f64>,
    iterations: usize,
    bracket: f64,
    near_tie: bool,
    interior: bool,
}

#[derive(Debug, Serialize)]
struct EstimateDoc {
    source: String,
    generations: usize,
    final_size: u64,
    delta: u64,
    npmle: Vec<f64>,
    results: Vec<EstimateRecord>,
}

pub fn estimate(args: &EstimateArgs) -> Result<Vec<PathBuf>, CliError> {
    let specs = parse_disparities(&[&args.disparity])?;
    let (tree, source) = match &args.tree {
        Some(path) => {
            let file = std::fs::File::open(path)
                .with_context(|| format!("opening {}", path.display()))
                .map_err(CliError::Io)?;
            let tree = read_tree(std::io::BufReader::new(file))
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            (tree, path.display().to_string())
        }
        None => (simulate_model(&args.model)?, "simulated".to_string()),
    };
    let delta = totals(&tree).delta;
    let q = npmle(&tree)?;
    let fam = Poisson::default();
    let results = specs
        .iter()
        .map(|&spec| {
            let r = minimize(spec, &fam, &q)?;
            Ok(EstimateRecord {
                disparity: spec,
                theta_hat: r.theta_hat,
                value: r.value.is_finite().then_some(r.value),
                stationarity: r.stationarity,
                iterations: r.iterations,
                bracket: r.bracket,
                near_tie: r.near_tie,
                interior: r.interior,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let doc = EstimateDoc {
        source,
        generations: tree.generations(),
        final_size: tree.final_size(),
        delta,
        npmle: q.probs().to_vec(),
        results,
    };
    let mut out = OutputDir::create(&args.out.out)?;
    let path = out.write(ESTIMATE_FILE, &json_bytes(&doc)?)?;
    let seed = args.tree.is_none().then_some(args.model.seed);
    out.finish("estimate", args, seed)?;
    Ok(vec![path])
}

pub fn default_influence_locations() -> Vec<usize> {
    (0..=30).chain((40..=400).step_by(20)).collect()
}

pub fn influence(args: &InfluenceArgs) -> Result<Vec<PathBuf>, CliError> {
    let specs = parse_disparities(&[&args.disparity])?;
    let ls = args
        .l_values
        .clone()
        .unwrap_or_else(default_influence_locations);
    let fam = Poisson::default();
    let mut rows = Vec::new();
    for &spec in &specs {
        for &alpha in &args.alphas {
            let r = alpha_influence(spec, &fam, args.theta0, alpha, &ls)?;
            for ((l, c), lim) in r.l_values.iter().zip(&r.curve).zip(&r.limit_curve) {
                rows.push(vec![
                    spec.to_string(),
                    num(alpha),
                    l.to_string(),
                    num(*c),
                    num(*lim),
                ]);
            }
        }
    }
    let mut out = OutputDir::create(&args.out.out)?;
    let bytes = csv_bytes(&["disparity", "alpha", "L", "curve", "limit_curve"], &rows)?;
    let path = out.write(INFLUENCE_FILE, &bytes)?;
    out.finish("influence", args, None)?;
    Ok(vec![path])
}

pub fn bias_tables(args: &BiasTablesArgs) -> Result<Vec<PathBuf>, CliError> {
    let fam = Poisson::default();
    let mut out = OutputDir::create(&args.out.out)?;
    let mut paths = Vec::new();
    for l in BIAS_LOCATIONS {
        let rows: Vec<Vec<String>> = bias_ratio_table(&fam, args.theta0, l, &bias_alphas(l))?
            .iter()
            .map(|r| vec![num(r.alpha), num(r.hd_over_ld), num(r.ned_over_ld)])
            .collect();
        let bytes = csv_bytes(&["alpha", "HD_over_LD", "NED_over_LD"], &rows)?;
        paths.push(out.write(&bias_file(l), &bytes)?);
    }
    out.finish("bias-tables", args, None)?;
    Ok(paths)
}

/// Defaults, then the config file, then flags.
pub fn experiment_config(
    args: &ExperimentArgs,
    contaminated: bool,
    default_replications: Option<usize>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(n) = default_replications {
        cfg.replications = n;
    }
    if let Some(path) = &args.config {
        ConfigFile::load(path)?.apply(&mut cfg)?;
    }
    cfg.generations = args.gens;
    if let Some(v) = args.theta0 {
        cfg.theta0 = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.z0 {
        cfg.z0 = v;
    }
    if let Some(v) = args.replications {
        cfg.replications = v;
    }
    if let Some(v) = args.seed {
        cfg.seed_base = v;
    }
    if let Some(v) = &args.alphas {
        cfg.alphas = v.clone();
    }
    if let Some(v) = &args.l_values {
        cfg.l_values = v.clone();
    }
    if let Some(v) = &args.disparities {
        cfg.disparities = parse_disparities(v)?;
    }
    if !contaminated {
        cfg.alphas.clear();
        cfg.l_values.clear();
    }
    cfg.validate(&Poisson::default())?;
    Ok(cfg)
}

pub fn grid(args: &ExperimentArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = experiment_config(args, true, None)?;
    let set = run_experiment(&cfg, &Poisson::default())?;
    let report = grid_report(&set)?;
    let mut header: Vec<String> = [
        "alpha",
        "L",
        "tau_m",
        "horizon",
        "survived",
        "extinct",
        "no_progenitors",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for d in &cfg.disparities {
        header.push(format!("mean_{d}"));
        header.push(format!("mse_{d}"));
    }
    header.push("best".into());
    let rows: Vec<Vec<String>> = report
        .iter()
        .map(|r| {
            let mut row = vec![
                num(r.cell.alpha),
                r.cell.location.to_string(),
                num(r.cell.tau_m),
                r.cell.horizon.to_string(),
                r.counts.survived.to_string(),
                r.counts.extinct.to_string(),
                r.counts.no_progenitors.to_string(),
            ];
            for s in &r.stats {
                row.push(opt_num(s.mean));
                row.push(opt_num(s.mse));
            }
            row.push(r.best.map(|d| d.to_string()).unwrap_or_default());
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = OutputDir::create(&args.out.out)?;
    let path = out.write(GRID_FILE, &csv_bytes(&header_refs, &rows)?)?;
    out.finish("grid", &cfg, Some(cfg.seed_base))?;
    Ok(vec![path])
}

pub fn efficiency(args: &ExperimentArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = experiment_config(args, false, None)?;
    for d in [Disparity::Ld, Disparity::Hd, Disparity::Ned] {
        if !cfg.disparities.contains(&d) {
            return Err(CliError::Usage("efficiency needs ld, hd and ned".into()));
        }
    }
    let set = run_experiment(&cfg, &Poisson::default())?;
    let rows: Vec<Vec<String>> = (1..=cfg.generations)
        .map(|n| {
            let survivors = set
                .baseline
                .replications
                .iter()
                .filter(|r| r.at_generation(n).is_some())
                .count();
            let mut row = vec![n.to_string(), survivors.to_string()];
            for pair in EFFICIENCY_PAIRS {
                row.push(opt_num(relative_efficiency(&set, pair, n).ok()));
            }
            row
        })
        .collect();
    let header = [
        "generation",
        "survivors",
        "HD_over_NED",
        "LD_over_HD",
        "LD_over_NED",
    ];
    let mut out = OutputDir::create(&args.out.out)?;
    let path = out.write(EFFICIENCY_FILE, &csv_bytes(&header, &rows)?)?;
    out.finish("efficiency", &cfg, Some(cfg.seed_base))?;
    Ok(vec![path])
}

#[derive(Debug, Serialize)]
struct NormalityDoc {
    theta0: f64,
    generation: usize,
    replications: usize,
    summaries: Vec<cbp_mde::mc::NormalitySummary>,
}

pub fn normality(args: &ExperimentArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = experiment_config(args, false, Some(500))?;
    let fam = Poisson::default();
    let set = run_experiment(&cfg, &fam)?;
    let summaries = cfg
        .disparities
        .iter()
        .map(|&d| normality_diagnostic(&set, &fam, cfg.theta0, d))
        .collect::<Result<Vec<_>, _>>()?;
    let doc = NormalityDoc {
        theta0: cfg.theta0,
        generation: cfg.generations,
        replications: cfg.replications,
        summaries,
    };
    let mut out = OutputDir::create(&args.out.out)?;
    let path = out.write(NORMALITY_FILE, &json_bytes(&doc)?)?;
    out.finish("normality", &cfg, Some(cfg.seed_base))?;
    Ok(vec![path])
}
