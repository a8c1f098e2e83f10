//! Config-driven experiment runner.
//!
//! A benchmark config lists scenarios (graph model, SEM kind, noise, size),
//! methods (backbones, optionally wrapped in the reweighting loop, plus a
//! random-graph baseline), and a trial count. Each (scenario, method, trial)
//! cell derives its seeds purely from the base seed and the cell indices:
//! data seeds ignore the method index so every method sees the same datasets.
//! Trials run in parallel; rows are keyed and sorted, so parallelism never
//! changes the output bytes, and a rerun over an existing output directory
//! reuses completed rows instead of recomputing them.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::{sample_dag, Dag, GraphKind, GraphModel};
use crate::learners::{Backbone, LearnerConfig};
use crate::metrics::{evaluate_graph, sid};
use crate::parallel::{map_indexed_mode, Parallelism};
use crate::rescore::{fit_rescore, InnerSolver, RescoreConfig, SampleWeights};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scoring::AcyclicityKind;
use crate::sem::{
    assign_linear_weights_default, make_noise_spec, simulate_gp_sem, simulate_linear_sem,
    DataMatrix, NoiseKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemKind {
    Linear,
    Gp,
}

/// Noise selection in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NoiseConfig {
    Homo,
    Hetero,
    Corrupt { p: f64 },
}

impl NoiseConfig {
    fn to_spec(self, d: usize) -> Result<crate::sem::NoiseSpec> {
        match self {
            NoiseConfig::Homo => make_noise_spec(NoiseKind::Homogeneous, d, None),
            NoiseConfig::Hetero => make_noise_spec(NoiseKind::Heterogeneous, d, None),
            NoiseConfig::Corrupt { p } => make_noise_spec(NoiseKind::Corrupted, d, Some(p)),
        }
    }
}

/// Reweighting options of a method entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoreMethod {
    pub tau: f64,
    pub inner: InnerSolver,
    #[serde(default)]
    pub k_outer: Option<usize>,
    #[serde(default)]
    pub k_inner: Option<usize>,
    #[serde(default)]
    pub k_reweight: Option<usize>,
}

/// One method column of the experiment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum MethodSpec {
    /// Random DAG with the scenario's expected edge count.
    Random,
    Fit {
        backbone: Backbone,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        thresh: Option<f64>,
        #[serde(default)]
        acyclicity: Option<AcyclicityKind>,
        #[serde(default)]
        rescore: Option<RescoreMethod>,
        /// Display name override; needed when one scenario sweeps several
        /// variants of the same backbone (a tau sweep, say).
        #[serde(default)]
        label: Option<String>,
    },
}

impl MethodSpec {
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Random => "random".to_string(),
            MethodSpec::Fit {
                backbone,
                rescore,
                label,
                ..
            } => {
                if let Some(label) = label {
                    label.clone()
                } else if rescore.is_some() {
                    format!("{}+rescore", backbone.name())
                } else {
                    backbone.name().to_string()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub id: Option<String>,
    pub graph: GraphKind,
    pub k: usize,
    pub d: usize,
    pub sem: SemKind,
    pub n: usize,
    pub noise: NoiseConfig,
    pub methods: Vec<MethodSpec>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub lambda_sweep: Option<Vec<f64>>,
}

impl Scenario {
    fn display_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            let g = match self.graph {
                GraphKind::Er => "er",
                GraphKind::Sf => "sf",
            };
            let sem = match self.sem {
                SemKind::Linear => "linear",
                SemKind::Gp => "gp",
            };
            let noise = match self.noise {
                NoiseConfig::Homo => String::new(),
                NoiseConfig::Hetero => "-hetero".to_string(),
                NoiseConfig::Corrupt { p } => format!("-corrupt{p}"),
            };
            format!("{g}{}-d{}-{sem}-n{}{noise}", self.k, self.d, self.n)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl BenchConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: BenchConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::invalid("config lists no scenarios"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for sc in &self.scenarios {
            let id = sc.display_id();
            if id.contains(',') {
                return Err(Error::invalid(format!("scenario id '{id}' contains a comma")));
            }
            if !ids.insert(id.clone()) {
                return Err(Error::invalid(format!("duplicate scenario id '{id}'")));
            }
            if sc.trials < 1 {
                return Err(Error::invalid("trials must be >= 1"));
            }
            if sc.d < 2 {
                return Err(Error::invalid("scenarios require d >= 2"));
            }
            if sc.n < 1 {
                return Err(Error::invalid("scenarios require n >= 1"));
            }
            if sc.methods.is_empty() {
                return Err(Error::invalid(format!("scenario '{id}' lists no methods")));
            }
            let mut names = std::collections::BTreeSet::new();
            for m in &sc.methods {
                if !names.insert(m.name()) {
                    return Err(Error::invalid(format!(
                        "scenario '{id}' has duplicate method '{}'",
                        m.name()
                    )));
                }
                if let MethodSpec::Fit { rescore: Some(r), .. } = m {
                    if !(r.tau > 0.0 && r.tau <= 1.0) {
                        return Err(Error::invalid(format!("tau {} out of (0, 1]", r.tau)));
                    }
                }
            }
            if let Some(sweep) = &sc.lambda_sweep {
                if sweep.is_empty() {
                    return Err(Error::invalid("lambda sweep must be nonempty when present"));
                }
            }
        }
        Ok(())
    }
}

/// One (scenario, method, trial) outcome. Failed fits carry NaN metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    pub tpr: f64,
    pub fdr: f64,
    pub shd: f64,
    pub sid: f64,
    pub runtime_s: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.tpr.is_nan()
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.method,
            self.trial,
            self.seed,
            self.tpr,
            self.fdr,
            self.shd,
            self.sid,
            self.runtime_s
        )
    }

    fn from_csv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse(format!(
                "result row has {} fields, expected 9",
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse(format!("bad float '{s}': {e}")))
        };
        Ok(ResultRow {
            scenario: fields[0].to_string(),
            method: fields[1].to_string(),
            trial: fields[2]
                .parse()
                .map_err(|e| Error::Parse(format!("bad trial '{}': {e}", fields[2])))?,
            seed: fields[3]
                .parse()
                .map_err(|e| Error::Parse(format!("bad seed '{}': {e}", fields[3])))?,
            tpr: parse_f(fields[4])?,
            fdr: parse_f(fields[5])?,
            shd: parse_f(fields[6])?,
            sid: parse_f(fields[7])?,
            runtime_s: parse_f(fields[8])?,
        })
    }
}

/// Mean and sample standard deviation per scenario x method over the
/// non-failed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scenario: String,
    pub method: String,
    pub trials: usize,
    pub tpr_mean: f64,
    pub tpr_sd: f64,
    pub fdr_mean: f64,
    pub fdr_sd: f64,
    pub shd_mean: f64,
    pub shd_sd: f64,
    pub sid_mean: f64,
    pub sid_sd: f64,
    pub runtime_s_mean: f64,
    pub runtime_s_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: String,
    pub method: String,
    pub lambda: f64,
    pub shd_mean: f64,
    pub shd_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub sweep: Vec<SweepRow>,
}

pub const RESULTS_HEADER: &str = "scenario,method,trial,seed,tpr,fdr,shd,sid,runtime_s";
const AGGREGATES_HEADER: &str = "scenario,method,trials,tpr_mean,tpr_sd,fdr_mean,fdr_sd,shd_mean,shd_sd,sid_mean,sid_sd,runtime_s_mean,runtime_s_sd";
const SWEEP_HEADER: &str = "scenario,method,lambda,shd_mean,shd_sd";

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate_rows(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.scenario.clone(), r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|(sc, m)| {
            let ok: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| &r.scenario == sc && &r.method == m && !r.failed())
                .collect();
            let col = |f: fn(&ResultRow) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
            let (tpr_mean, tpr_sd) = mean_sd(&col(|r| r.tpr));
            let (fdr_mean, fdr_sd) = mean_sd(&col(|r| r.fdr));
            let (shd_mean, shd_sd) = mean_sd(&col(|r| r.shd));
            let (sid_mean, sid_sd) = mean_sd(&col(|r| r.sid));
            let (runtime_s_mean, runtime_s_sd) = mean_sd(&col(|r| r.runtime_s));
            AggregateRow {
                scenario: sc.clone(),
                method: m.clone(),
                trials: ok.len(),
                tpr_mean,
                tpr_sd,
                fdr_mean,
                fdr_sd,
                shd_mean,
                shd_sd,
                sid_mean,
                sid_sd,
                runtime_s_mean,
                runtime_s_sd,
            }
        })
        .collect()
}

/// Random DAG with exactly `edges` edges (a uniformly random topological
/// order plus a uniform subset of the available pairs).
fn random_dag_with_edges(d: usize, edges: usize, seed: u64) -> Dag {
    use rand::seq::SliceRandom;
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(d * (d - 1) / 2);
    for a in 0..d {
        for b in (a + 1)..d {
            pairs.push((order[a], order[b]));
        }
    }
    pairs.shuffle(&mut rng);
    let take = edges.min(pairs.len());
    Dag::from_edges(d, &pairs[..take]).expect("pairs respect the sampled order")
}

/// Expanded per-lambda view of a scenario (non-sweep scenarios appear once).
struct ScenarioVariant<'a> {
    scenario: &'a Scenario,
    scenario_index: usize,
    id: String,
    lambda_override: Option<f64>,
}

fn expand_scenarios(cfg: &BenchConfig) -> Vec<ScenarioVariant<'_>> {
    let mut out = Vec::new();
    for (s_idx, sc) in cfg.scenarios.iter().enumerate() {
        match &sc.lambda_sweep {
            None => out.push(ScenarioVariant {
                scenario: sc,
                scenario_index: s_idx,
                id: sc.display_id(),
                lambda_override: None,
            }),
            Some(lams) => {
                for &lam in lams {
                    out.push(ScenarioVariant {
                        scenario: sc,
                        scenario_index: s_idx,
                        id: format!("{}-lam{lam}", sc.display_id()),
                        lambda_override: Some(lam),
                    });
                }
            }
        }
    }
    out
}

fn generate_truth_and_data(sc: &Scenario, data_seed: u64) -> Result<(Dag, DataMatrix)> {
    let model = GraphModel::new(sc.graph, sc.k)?;
    let truth = sample_dag(model, sc.d, derive_seed(data_seed, &[0]))?;
    let noise = sc.noise.to_spec(sc.d)?;
    let data = match sc.sem {
        SemKind::Linear => {
            let coef = assign_linear_weights_default(&truth, derive_seed(data_seed, &[1]))?;
            simulate_linear_sem(&coef, sc.n, &noise, derive_seed(data_seed, &[2]))?
        }
        SemKind::Gp => simulate_gp_sem(&truth, sc.n, &noise, derive_seed(data_seed, &[2]))?,
    };
    Ok((truth, data))
}

fn run_method(
    sc: &Scenario,
    method: &MethodSpec,
    data: &DataMatrix,
    fit_seed: u64,
    lambda_override: Option<f64>,
) -> Result<(Dag, f64)> {
    let start = Instant::now();
    let graph = match method {
        MethodSpec::Random => random_dag_with_edges(sc.d, sc.k * sc.d, fit_seed),
        MethodSpec::Fit {
            backbone,
            lambda,
            thresh,
            acyclicity,
            rescore,
            label: _,
        } => {
            let mut lcfg = LearnerConfig::for_backbone(*backbone);
            if let Some(l) = lambda_override.or(*lambda) {
                lcfg.lambda = l;
            }
            if let Some(t) = thresh {
                lcfg.omega = *t;
            }
            if let Some(a) = acyclicity {
                lcfg.acyclicity = *a;
            }
            lcfg.seed = fit_seed;
            let fit = match rescore {
                None => {
                    let w = SampleWeights::uniform(data.n(), 1.0)?;
                    match backbone {
                        Backbone::Notears => crate::learners::fit_linear_notears(data, &w, &lcfg)?,
                        Backbone::Golem => crate::learners::fit_linear_nll(data, &w, &lcfg)?,
                        Backbone::NotearsMlp => crate::learners::fit_mlp_notears(data, &w, &lcfg)?,
                    }
                }
                Some(r) => {
                    let mut rcfg = RescoreConfig {
                        tau: r.tau,
                        solver: r.inner,
                        seed: fit_seed,
                        ..RescoreConfig::default()
                    };
                    if let Some(k) = r.k_outer {
                        rcfg.k_outer = Some(k);
                    }
                    if let Some(k) = r.k_inner {
                        rcfg.k_inner = k;
                    }
                    if let Some(k) = r.k_reweight {
                        rcfg.k_reweight = k;
                    }
                    fit_rescore(*backbone, data, &lcfg, &rcfg)?
                }
            };
            fit.graph
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    Ok((graph, runtime))
}

fn run_cell(
    variant: &ScenarioVariant<'_>,
    m_idx: usize,
    method: &MethodSpec,
    trial: usize,
) -> ResultRow {
    let sc = variant.scenario;
    let s_idx = variant.scenario_index as u64;
    let lam_tag = variant
        .lambda_override
        .map(|l| l.to_bits())
        .unwrap_or(u64::MAX);
    // data seeds ignore both the method and the lambda variant, so every
    // method (and every sweep point) sees the same datasets
    let data_seed = derive_seed(sc.base_seed, &[s_idx, trial as u64, 0]);
    let fit_seed = derive_seed(sc.base_seed, &[s_idx, lam_tag, trial as u64, 1, m_idx as u64]);
    let method_name = method.name();

    let outcome = generate_truth_and_data(sc, data_seed).and_then(|(truth, data)| {
        let (graph, runtime) = run_method(sc, method, &data, fit_seed, variant.lambda_override)?;
        let report = evaluate_graph(&graph, &truth)?;
        let s = sid(&graph, &truth)?;
        Ok((report, s, runtime))
    });

    match outcome {
        Ok((report, s, runtime)) => ResultRow {
            scenario: variant.id.clone(),
            method: method_name,
            trial,
            seed: fit_seed,
            tpr: report.tpr,
            fdr: report.fdr,
            shd: report.shd as f64,
            sid: s as f64,
            runtime_s: runtime,
        },
        Err(_) => ResultRow {
            scenario: variant.id.clone(),
            method: method_name,
            trial,
            seed: fit_seed,
            tpr: f64::NAN,
            fdr: f64::NAN,
            shd: f64::NAN,
            sid: f64::NAN,
            runtime_s: 0.0,
        },
    }
}

fn load_existing_rows(out_dir: &Path) -> Result<Vec<ResultRow>> {
    let path = out_dir.join("results.csv");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(std::fs::File::open(&path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        rows.push(ResultRow::from_csv(&line)?);
    }
    Ok(rows)
}

/// Runs the full experiment matrix. When `out_dir` is given, existing rows
/// in `results.csv` are reused (resume) and the results, aggregates, and
/// sweep files are (re)written there.
pub fn run_benchmark(cfg: &BenchConfig, out_dir: Option<&Path>) -> Result<ResultsTable> {
    run_benchmark_with_mode(cfg, out_dir, Parallelism::default())
}

pub fn run_benchmark_with_mode(
    cfg: &BenchConfig,
    out_dir: Option<&Path>,
    mode: Parallelism,
) -> Result<ResultsTable> {
    cfg.validate()?;
    let existing = match out_dir {
        Some(dir) => load_existing_rows(dir)?,
        None => Vec::new(),
    };
    let find_existing = |scenario: &str, method: &str, trial: usize| -> Option<&ResultRow> {
        existing
            .iter()
            .find(|r| r.scenario == scenario && r.method == method && r.trial == trial)
    };

    let variants = expand_scenarios(cfg);
    // flat job list in deterministic key order
    struct Job<'a> {
        variant: &'a ScenarioVariant<'a>,
        m_idx: usize,
        method: &'a MethodSpec,
        trial: usize,
    }
    let mut jobs: Vec<Job> = Vec::new();
    let mut rows_template: Vec<Option<ResultRow>> = Vec::new();
    for variant in &variants {
        for (m_idx, method) in variant.scenario.methods.iter().enumerate() {
            for trial in 0..variant.scenario.trials {
                let done = find_existing(&variant.id, &method.name(), trial).cloned();
                rows_template.push(done);
                jobs.push(Job {
                    variant,
                    m_idx,
                    method,
                    trial,
                });
            }
        }
    }

    let computed = map_indexed_mode(mode, jobs.len(), |idx| {
        if let Some(row) = &rows_template[idx] {
            return row.clone();
        }
        let job = &jobs[idx];
        run_cell(job.variant, job.m_idx, job.method, job.trial)
    });

    let aggregates = aggregate_rows(&computed);
    let mut sweep = Vec::new();
    for variant in &variants {
        if variant.lambda_override.is_none() {
            continue;
        }
        let lam = variant.lambda_override.unwrap();
        for method in &variant.scenario.methods {
            let name = method.name();
            if let Some(agg) = aggregates
                .iter()
                .find(|a| a.scenario == variant.id && a.method == name)
            {
                sweep.push(SweepRow {
                    scenario: variant.scenario.display_id(),
                    method: name,
                    lambda: lam,
                    shd_mean: agg.shd_mean,
                    shd_sd: agg.shd_sd,
                });
            }
        }
    }

    let table = ResultsTable {
        rows: computed,
        aggregates,
        sweep,
    };
    if let Some(dir) = out_dir {
        write_results(&table, dir)?;
    }
    Ok(table)
}

pub fn write_results(table: &ResultsTable, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = BufWriter::new(std::fs::File::create(out_dir.join("results.csv"))?);
    writeln!(w, "{RESULTS_HEADER}")?;
    for row in &table.rows {
        writeln!(w, "{}", row.to_csv())?;
    }
    w.flush()?;

    let mut w = BufWriter::new(std::fs::File::create(out_dir.join("aggregates.csv"))?);
    writeln!(w, "{AGGREGATES_HEADER}")?;
    for a in &table.aggregates {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.scenario,
            a.method,
            a.trials,
            a.tpr_mean,
            a.tpr_sd,
            a.fdr_mean,
            a.fdr_sd,
            a.shd_mean,
            a.shd_sd,
            a.sid_mean,
            a.sid_sd,
            a.runtime_s_mean,
            a.runtime_s_sd
        )?;
    }
    w.flush()?;

    if !table.sweep.is_empty() {
        let mut w = BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
        writeln!(w, "{SWEEP_HEADER}")?;
        for s in &table.sweep {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.scenario, s.method, s.lambda, s.shd_mean, s.shd_sd
            )?;
        }
        w.flush()?;
    }
    Ok(())
}
