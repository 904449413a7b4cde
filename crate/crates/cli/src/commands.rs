use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hobz::inference::{
    compute_metrics, compute_pite, fit_linear_hobz, permutation_test, posterior_expectations,
    posterior_interior_mean, predict_draws, LinearConfig, MetricKind, RowSet, DEFAULT_LEVEL,
};
use hobz::io::{self, Table};
use hobz::sampler::{effective_sample_size, run_chain_with, ChainOptions};
use hobz::simgen::{self, SimConfig};
use hobz::{Category, Dataset, HobzError, Matrix, PosteriorDraws};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::{create, file_digest, open, sibling, usage, write_json, ChainArgs, CliResult, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Bart,
    Linear,
}

impl Model {
    fn name(self) -> &'static str {
        match self {
            Model::Bart => "hobz-bart",
            Model::Linear => "linear-hobz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rows {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Full,
    Partial,
}

impl From<Kind> for MetricKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Full => MetricKind::FullExpectation,
            Kind::Partial => MetricKind::PartialExpectation,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Column holding arm labels; never used as a covariate.
    #[arg(long)]
    pub arm_column: Option<String>,
    /// Fit only the rows whose arm label equals this value.
    #[arg(long, requires = "arm_column")]
    pub arm: Option<String>,
    /// CSV of rows to predict; response and arm columns are ignored if present.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Model::Bart)]
    pub model: Model,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Skip storing per-draw values for the training rows.
    #[arg(long)]
    pub no_train: bool,
    /// Draw file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Convergence summary; defaults to `<out>.summary.json`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

fn read_training(path: &Path, response: &str, arm_column: Option<&str>) -> CliResult<Table> {
    Ok(io::read_table(open(path)?, response, arm_column)?)
}

fn read_test_rows(path: &Path, train: &Table, arm_column: Option<&str>) -> CliResult<Matrix> {
    let mut drop = vec![train.response_name.as_str()];
    drop.extend(arm_column);
    let (x, names) = io::read_covariates(open(path)?, &drop)?;
    if names != train.covariate_names {
        return Err(HobzError::validation(format!(
            "test covariates {names:?} differ from training covariates {:?}",
            train.covariate_names
        ))
        .into());
    }
    Ok(x)
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let mut table = read_training(&a.data, &a.response, a.arm_column.as_deref())?;
    if let Some(level) = &a.arm {
        table = table.arm_subset(level)?;
    }
    let test_x = a
        .test_data
        .as_deref()
        .map(|p| read_test_rows(p, &table, a.arm_column.as_deref()))
        .transpose()?;
    let config = json!({
        "data": file_digest(&a.data)?,
        "response": a.response,
        "arm_column": a.arm_column,
        "arm": a.arm,
        "test_data": a.test_data.as_deref().map(file_digest).transpose()?,
        "model": a.model.name(),
        "chain": a.chain.to_json(),
        "keep_train": !a.no_train,
    });
    let prov = Provenance::new("fit", a.chain.seed, &config);
    let schedule = a.chain.schedule();
    let data = &table.data;
    let (mut draws, extra) = match a.model {
        Model::Bart => {
            let d = run_chain_with(
                data,
                test_x.as_ref(),
                &a.chain.hyperparams(),
                &schedule,
                ChainOptions { keep_train: !a.no_train },
            )?;
            (d, Value::Null)
        }
        Model::Linear => {
            let f = fit_linear_hobz(data, test_x.as_ref(), &schedule, &LinearConfig::default())?;
            let coef = json!({
                "beta_one": f.mean_of(&f.beta_one),
                "beta_zero": f.mean_of(&f.beta_zero),
                "beta_mu": f.mean_of(&f.beta_mu),
            });
            let mut d = f.draws;
            if a.no_train {
                d.train = hobz::sampler::ComponentDraws::new(0);
            }
            (d, coef)
        }
    };
    draws.meta.config_hash = prov.config_hash;
    let mut w = create(&a.out)?;
    io::write_draws(&mut w, &draws)?;
    let summary = fit_summary(&prov, a.model, data, &draws, extra);
    let path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, ".summary.json"));
    write_json(&path, &summary)?;
    println!(
        "wrote {} draws to {} (kappa mean {:.4})",
        draws.num_draws(),
        a.out.display(),
        summary["kappa"]["mean"].as_f64().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn fit_summary(prov: &Provenance, model: Model, data: &Dataset, d: &PosteriorDraws, extra: Value) -> Value {
    let k = &d.kappa;
    let l = k.len().max(1) as f64;
    let mean = k.iter().sum::<f64>() / l;
    let sd = hobz::dist::sample_sd(k);
    let g = &d.diagnostics;
    let rate = |i: usize| {
        if g.proposed[i] == 0 {
            Value::Null
        } else {
            json!(g.accepted[i] as f64 / g.proposed[i] as f64)
        }
    };
    let leaves = if g.mean_leaves.is_empty() {
        Value::Null
    } else {
        json!(g.mean_leaves.iter().sum::<f64>() / g.mean_leaves.len() as f64)
    };
    json!({
        "provenance": prov.to_json(),
        "model": model.name(),
        "rows": {
            "train": data.n(),
            "ones": data.count(Category::One),
            "zeros": data.count(Category::Zero),
            "interior": data.count(Category::Interior),
            "test": d.test.n_rows,
        },
        "draws": d.num_draws(),
        "kappa": { "mean": mean, "sd": sd, "ess": effective_sample_size(k) },
        "moves": {
            "proposed": { "grow": g.proposed[0], "prune": g.proposed[1], "change": g.proposed[2] },
            "acceptance": { "grow": rate(0), "prune": rate(1), "change": rate(2) },
            "rejected_min_leaf": g.rejected_min_leaf,
        },
        "mean_leaves_per_tree": leaves,
        "coefficients": extra,
    })
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, value_enum, default_value_t = Rows::Test)]
    pub rows: Rows,
    /// Per-row expectations CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one simulated response per draw and row.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Seed for the simulated responses.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV holding observed responses for the same rows, in the same order.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Arm column of the observed CSV, skipped when reading it.
    #[arg(long)]
    pub arm_column: Option<String>,
    /// Metrics JSON; defaults to `<out>.metrics.json` when `--observed` is given.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let draws = io::read_draws(open(&a.draws)?)?;
    let set = match a.rows {
        Rows::Train => RowSet::Train,
        Rows::Test => RowSet::Test,
    };
    let comp = draws.rows(set);
    if draws.num_draws() == 0 || comp.n_rows == 0 {
        return Err(usage(format!("draw file holds no {:?} predictions", a.rows)));
    }
    let config = json!({
        "draws": file_digest(&a.draws)?,
        "rows": format!("{:?}", a.rows).to_lowercase(),
        "samples": a.samples.is_some(),
        "observed": a.observed.as_deref().map(file_digest).transpose()?,
        "response": a.response,
        "arm_column": a.arm_column,
    });
    let prov = Provenance::new("predict", a.seed, &config);
    let (full, partial) = posterior_expectations(comp);
    let interior = posterior_interior_mean(comp);
    let ids: Vec<f64> = (0..comp.n_rows).map(|i| i as f64).collect();
    io::write_columns(
        create(&a.out)?,
        &["id", "expected_outcome", "expected_partial_outcome", "interior_mean"],
        &[&ids, &full, &partial, &interior],
        Some(&prov.comment()),
    )?;

    if let Some(path) = &a.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let samples = predict_draws(&draws, set, &mut rng)?;
        let mut w = create(path)?;
        io::write_comment(&mut w, &prov.comment())?;
        writeln!(w, "draw,id,category,value")?;
        for (k, s) in samples.iter().enumerate() {
            let cat = match s.category {
                Category::One => "one",
                Category::Zero => "zero",
                Category::Interior => "interior",
            };
            writeln!(w, "{},{},{},{}", k / comp.n_rows, k % comp.n_rows, cat, s.value)?;
        }
        w.flush()?;
    }

    if let Some(obs) = &a.observed {
        let t = io::read_table(open(obs)?, &a.response, a.arm_column.as_deref())?;
        if t.data.n() != comp.n_rows {
            return Err(HobzError::validation(format!(
                "{} observed rows for {} predicted rows",
                t.data.n(),
                comp.n_rows
            ))
            .into());
        }
        let m = compute_metrics(&full, t.data.y())?;
        let path = a.metrics.clone().unwrap_or_else(|| sibling(&a.out, ".metrics.json"));
        write_json(
            &path,
            &json!({
                "provenance": prov.to_json(),
                "rows": comp.n_rows,
                "mae": m.mae,
                "mse": m.mse,
                "rmse": m.rmse,
                "adj_r2": m.adj_r2,
                "degenerate": m.degenerate,
            }),
        )?;
        println!("mae={} rmse={} adj_r2={}", m.mae, m.rmse, m.adj_r2);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PiteArgs {
    /// Draw file fitted on the treated arm.
    #[arg(long)]
    pub treated: PathBuf,
    /// Draw file fitted on the control arm, predicting the same rows.
    #[arg(long)]
    pub control: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Full)]
    pub kind: Kind,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Rows sorted by point estimate; defaults to `<out>.plot.csv`.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

pub fn pite(a: &PiteArgs) -> CliResult<()> {
    let t = io::read_draws(open(&a.treated)?)?;
    let c = io::read_draws(open(&a.control)?)?;
    let kind = MetricKind::from(a.kind);
    let r = compute_pite(&t, &c, kind, a.level)?;
    let config = json!({
        "treated": file_digest(&a.treated)?,
        "control": file_digest(&a.control)?,
        "kind": kind.name(),
        "level": a.level,
    });
    let prov = Provenance::new("pite", t.meta.seed, &config);
    let mut w = create(&a.out)?;
    io::write_comment(&mut w, &format!("{}\nate={}", prov.comment(), r.ate))?;
    writeln!(w, "id,point,lower,upper,metric_kind")?;
    for (i, row) in r.rows.iter().enumerate() {
        writeln!(w, "{i},{},{},{},{}", row.point, row.lower, row.upper, kind.name())?;
    }
    w.flush()?;

    let mut order: Vec<usize> = (0..r.rows.len()).collect();
    order.sort_by(|&x, &y| r.rows[x].point.total_cmp(&r.rows[y].point).then(x.cmp(&y)));
    let path = a.plot.clone().unwrap_or_else(|| sibling(&a.out, ".plot.csv"));
    let mut w = create(&path)?;
    io::write_comment(&mut w, &prov.comment())?;
    writeln!(w, "rank,id,point,lower,upper")?;
    for (rank, &i) in order.iter().enumerate() {
        let row = &r.rows[i];
        writeln!(w, "{rank},{i},{},{},{}", row.point, row.lower, row.upper)?;
    }
    w.flush()?;
    println!("ate={}", r.ate);
    Ok(())
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    #[arg(long, default_value = "arm")]
    pub arm_column: String,
    #[arg(long, value_enum, default_value_t = Kind::Full)]
    pub kind: Kind,
    #[arg(long, default_value_t = 500)]
    pub n_perm: usize,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Result JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn permtest(a: &PermtestArgs) -> CliResult<()> {
    let table = read_training(&a.data, &a.response, Some(&a.arm_column))?;
    let levels = table.arm_levels();
    if levels.len() != 2 {
        return Err(HobzError::validation(format!(
            "permutation test needs exactly two arms, found {levels:?}"
        ))
        .into());
    }
    let arms = table.arm_mask(&levels[0])?;
    let kind = MetricKind::from(a.kind);
    let config = json!({
        "data": file_digest(&a.data)?,
        "response": a.response,
        "arm_column": a.arm_column,
        "kind": kind.name(),
        "n_perm": a.n_perm,
        "chain": a.chain.to_json(),
    });
    let prov = Provenance::new("permtest", a.chain.seed, &config);
    let r = permutation_test(
        &table.data,
        &arms,
        &a.chain.hyperparams(),
        &a.chain.schedule(),
        kind,
        a.n_perm,
    )?;
    write_json(
        &a.out,
        &json!({
            "provenance": prov.to_json(),
            "arms": levels,
            "metric_kind": kind.name(),
            "n_perm": a.n_perm,
            "observed_pite_sd": r.observed_pite_sd,
            "permuted_pite_sds": r.permuted_pite_sds,
            "p_value": r.p_value,
            "raw_p_value": r.raw_p_value,
        }),
    )?;
    println!("observed_pite_sd={} p_value={}", r.observed_pite_sd, r.p_value);
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named scenario; see `--list`.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Scenario JSON, in the format written next to every simulated dataset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data seed; defaults to the scenario's own seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    /// Dataset CSV. Truth goes to `<out>.truth.csv`, the scenario to `<out>.config.json`.
    #[arg(long, required_unless_present = "list")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Print the preset names and exit.
    #[arg(long)]
    pub list: bool,
}

fn scenario_from(a: &SimulateArgs) -> CliResult<SimConfig> {
    let mut cfg = match (&a.preset, &a.config) {
        (Some(name), _) => simgen::find_preset(name).ok_or_else(|| {
            usage(format!(
                "unknown preset '{name}'; known: {}",
                simgen::preset_names().join(", ")
            ))
        })?,
        (None, Some(path)) => serde_json::from_reader(std::io::BufReader::new(open(path)?))?,
        (None, None) => return Err(usage("one of --preset or --config is required")),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn table_for(cfg: &SimConfig, data: Dataset, truth: &simgen::SimTruth) -> Table {
    Table {
        data,
        covariate_names: (1..=cfg.p_base).map(|j| format!("x{j}")).collect(),
        response_name: "y".into(),
        arm: truth
            .arm
            .as_ref()
            .map(|v| v.iter().map(|&f| io::arm_label(f).to_string()).collect()),
    }
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.list {
        for name in simgen::preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let out = a.out.as_ref().ok_or_else(|| usage("--out is required"))?;
    let cfg = scenario_from(a)?;
    let cfg_json = serde_json::to_value(&cfg)?;
    let prov = Provenance::new("simulate", cfg.seed, &cfg_json);
    let (data, truth) = simgen::generate_dataset(&cfg)?;
    let table = table_for(&cfg, data, &truth);
    io::write_table(create(out)?, &table, Some(&prov.comment()))?;
    let tpath = a.truth.clone().unwrap_or_else(|| sibling(out, ".truth.csv"));
    io::write_truth(create(&tpath)?, &truth, Some(&prov.comment()))?;
    write_json(
        &sibling(out, ".config.json"),
        &json!({ "provenance": prov.to_json(), "scenario": cfg_json }),
    )?;
    println!("wrote {} rows of '{}' to {}", cfg.n, cfg.name, out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated preset names, or `grid` for the 3 x 3 grid.
    #[arg(long, default_value = "grid")]
    pub scenarios: String,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Metrics table CSV; per-replication rows go to `<out>.runs.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Held-out metrics for one fitted model, or `None` if the fit failed numerically.
type RunMetrics = Option<[f64; 3]>;

fn split_in_half(cfg: &SimConfig) -> hobz::Result<(Dataset, Dataset)> {
    let mut c = cfg.clone();
    c.n = 2 * cfg.n;
    let (d, _) = simgen::generate_dataset(&c)?;
    let train: Vec<usize> = (0..cfg.n).collect();
    let test: Vec<usize> = (cfg.n..2 * cfg.n).collect();
    Ok((d.subset(&train), d.subset(&test)))
}

fn held_out(draws: hobz::Result<PosteriorDraws>, test: &Dataset) -> hobz::Result<RunMetrics> {
    let d = match draws {
        Ok(d) => d,
        Err(HobzError::Numeric(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (pred, _) = posterior_expectations(&d.test);
    let m = compute_metrics(&pred, test.y())?;
    Ok(Some([m.mae, m.rmse, m.adj_r2]))
}

fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn benchmark(a: &BenchmarkArgs) -> CliResult<()> {
    let scenarios: Vec<SimConfig> = if a.scenarios == "grid" {
        simgen::scenario_presets()
            .into_iter()
            .filter(|c| c.name.starts_with("grid-"))
            .collect()
    } else {
        a.scenarios
            .split(',')
            .map(|s| simgen::find_preset(s.trim()).ok_or_else(|| usage(format!("unknown preset '{s}'"))))
            .collect::<CliResult<_>>()?
    };
    if a.replications == 0 {
        return Err(usage("--replications must be at least 1"));
    }
    let config = json!({
        "scenarios": scenarios.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "replications": a.replications,
        "chain": a.chain.to_json(),
    });
    let prov = Provenance::new("benchmark", a.chain.seed, &config);
    let h = a.chain.hyperparams();
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..a.replications).map(move |r| (s, r)))
        .collect();
    let runs: Vec<(RunMetrics, RunMetrics)> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let cfg = &scenarios[s];
            let seed = mix_seed(a.chain.seed, mix_seed(cfg.seed, r as u64));
            let (train, test) = split_in_half(&cfg.replicate(seed))?;
            let schedule = hobz::Schedule {
                seed: mix_seed(seed, 1),
                ..a.chain.schedule()
            };
            let bart = run_chain_with(&train, Some(test.x()), &h, &schedule, ChainOptions { keep_train: false });
            let linear = fit_linear_hobz(&train, Some(test.x()), &schedule, &LinearConfig::default())
                .map(|f| f.draws);
            Ok((held_out(bart, &test)?, held_out(linear, &test)?))
        })
        .collect::<hobz::Result<_>>()?;

    let mut w = create(&sibling(&a.out, ".runs.csv"))?;
    io::write_comment(&mut w, &prov.comment())?;
    writeln!(w, "model,scenario,replication,mae,rmse,adj_r2")?;
    for (&(s, r), (b, l)) in jobs.iter().zip(&runs) {
        for (model, m) in [(Model::Bart, b), (Model::Linear, l)] {
            let [mae, rmse, r2] = m.unwrap_or([f64::NAN; 3]);
            writeln!(w, "{},{},{r},{mae},{rmse},{r2}", model.name(), scenarios[s].name)?;
        }
    }
    w.flush()?;

    let mut w = create(&a.out)?;
    io::write_comment(&mut w, &prov.comment())?;
    writeln!(w, "model,scenario,n,p,replications,failed,mae,rmse,adj_r2")?;
    for (s, cfg) in scenarios.iter().enumerate() {
        for (k, model) in [Model::Bart, Model::Linear].into_iter().enumerate() {
            let ok: Vec<[f64; 3]> = jobs
                .iter()
                .zip(&runs)
                .filter(|((js, _), _)| *js == s)
                .filter_map(|(_, pair)| if k == 0 { pair.0 } else { pair.1 })
                .collect();
            let failed = a.replications - ok.len();
            let avg = |i: usize| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|m| m[i]).sum::<f64>() / ok.len() as f64
                }
            };
            writeln!(
                w,
                "{},{},{},{},{},{failed},{},{},{}",
                model.name(),
                cfg.name,
                cfg.n,
                cfg.terms.len(),
                a.replications,
                avg(0),
                avg(1),
                avg(2)
            )?;
        }
    }
    w.flush()?;
    println!("wrote benchmark table to {}", a.out.display());
    Ok(())
}
