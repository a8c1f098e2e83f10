//! `rescore`: simulate SEM data, fit DAG learners (optionally under the
//! adaptive reweighting loop), evaluate estimates, and run benchmark sweeps.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rescore_core::graph::{sample_dag, GraphFile, GraphKind, GraphModel};
use rescore_core::harness::{run_benchmark, BenchConfig};
use rescore_core::learners::{
    fit_linear_nll, fit_linear_notears, fit_mlp_notears, Backbone, LearnerConfig,
};
use rescore_core::rescore::{fit_rescore, InnerSolver, RescoreConfig, SampleWeights};
use rescore_core::scoring::AcyclicityKind;
use rescore_core::sem::{
    assign_linear_weights_default, make_noise_spec, simulate_gp_sem, simulate_linear_sem,
    DataMatrix, NoiseKind,
};
use rescore_core::{evaluate_graph, sid, Dag, FitResult};

#[derive(Parser)]
#[command(name = "rescore", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphArg {
    Er,
    Sf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemArg {
    Linear,
    Gp,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Homo,
    Hetero,
    Corrupt,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Notears,
    Golem,
    #[value(name = "notears-mlp")]
    NotearsMlp,
}

impl MethodArg {
    fn backbone(self) -> Backbone {
        match self {
            MethodArg::Notears => Backbone::Notears,
            MethodArg::Golem => Backbone::Golem,
            MethodArg::NotearsMlp => Backbone::NotearsMlp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HArg {
    Expm,
    Poly,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerArg {
    Exact,
    Parametric,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random DAG and draw observational data from it.
    Simulate {
        #[arg(long, value_enum, env = "RESCORE_GRAPH")]
        graph: GraphArg,
        #[arg(long, env = "RESCORE_K")]
        k: usize,
        #[arg(long, env = "RESCORE_D")]
        d: usize,
        #[arg(long, value_enum, env = "RESCORE_SEM")]
        sem: SemArg,
        #[arg(long, env = "RESCORE_N")]
        n: usize,
        #[arg(long, value_enum, default_value = "homo", env = "RESCORE_NOISE")]
        noise: NoiseArg,
        /// Corruption fraction for `--noise corrupt`.
        #[arg(long, env = "RESCORE_P")]
        p: Option<f64>,
        #[arg(long, default_value_t = 0, env = "RESCORE_SEED")]
        seed: u64,
        /// Data file (comma-separated values, one row per sample).
        #[arg(long, env = "RESCORE_OUT")]
        out: PathBuf,
        /// Ground-truth graph file.
        #[arg(long, env = "RESCORE_GRAPH_OUT")]
        graph_out: PathBuf,
        /// Sidecar with per-row group and corruption labels.
        #[arg(long, env = "RESCORE_LABELS_OUT")]
        labels_out: Option<PathBuf>,
        /// Write an x1..xd header line.
        #[arg(long, env = "RESCORE_HEADER")]
        header: bool,
        /// Standardize columns to zero mean and unit variance.
        #[arg(long, env = "RESCORE_STANDARDIZE")]
        standardize: bool,
    },
    /// Fit a backbone with uniform weights.
    Fit(FitArgs),
    /// Fit a backbone under the adaptive reweighting loop.
    Rescore(RescoreArgs),
    /// Compare an estimated graph against the truth.
    Eval {
        #[arg(long, env = "RESCORE_EST")]
        est: PathBuf,
        #[arg(long, env = "RESCORE_TRUTH")]
        truth: PathBuf,
        /// Also compute the structural intervention distance.
        #[arg(long, env = "RESCORE_SID")]
        sid: bool,
    },
    /// Run a benchmark config and write result tables.
    Bench {
        #[arg(long, env = "RESCORE_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "RESCORE_OUT")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum, env = "RESCORE_METHOD")]
    method: MethodArg,
    #[arg(long, env = "RESCORE_DATA")]
    data: PathBuf,
    #[arg(long, env = "RESCORE_LAMBDA")]
    lambda: Option<f64>,
    /// Edge threshold applied to the continuous matrix.
    #[arg(long, env = "RESCORE_THRESH")]
    thresh: Option<f64>,
    /// Acyclicity function.
    #[arg(long, value_enum, default_value = "expm", env = "RESCORE_H")]
    h: HArg,
    #[arg(long, default_value_t = 0, env = "RESCORE_SEED")]
    seed: u64,
    /// Continuous matrix output (data file format, d rows x d columns).
    #[arg(long, env = "RESCORE_OUT_CONT")]
    out_cont: PathBuf,
    /// Thresholded graph output (graph file format).
    #[arg(long, env = "RESCORE_OUT_GRAPH")]
    out_graph: PathBuf,
}

#[derive(Args)]
struct RescoreArgs {
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 0.9, env = "RESCORE_TAU")]
    tau: f64,
    #[arg(long, value_enum, default_value = "exact", env = "RESCORE_INNER")]
    inner: InnerArg,
    #[arg(long, env = "RESCORE_K_OUTER")]
    k_outer: Option<usize>,
    #[arg(long, default_value_t = 100, env = "RESCORE_K_INNER")]
    k_inner: usize,
    #[arg(long, default_value_t = 1, env = "RESCORE_K_REWEIGHT")]
    k_reweight: usize,
    /// Dump the final weights, one per line.
    #[arg(long, env = "RESCORE_WEIGHTS_OUT")]
    weights_out: Option<PathBuf>,
}

fn learner_config(args: &FitArgs) -> LearnerConfig {
    let mut cfg = LearnerConfig::for_backbone(args.method.backbone());
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(t) = args.thresh {
        cfg.omega = t;
    }
    cfg.acyclicity = match args.h {
        HArg::Expm => AcyclicityKind::Expm,
        HArg::Poly => AcyclicityKind::Poly,
    };
    cfg.seed = args.seed;
    cfg
}

fn write_fit_outputs(fit: &FitResult, args: &FitArgs) -> Result<()> {
    let d = fit.continuous.nrows();
    let cont = DataMatrix::new(fit.continuous.clone())
        .context("continuous matrix has non-finite entries")?;
    cont.write_csv(&args.out_cont, false)?;
    let mut gf = GraphFile::from_dag(&fit.graph);
    let weights: Vec<f64> = gf
        .edges
        .iter()
        .map(|e| fit.continuous[[e[0], e[1]]])
        .collect();
    gf.weights = Some(weights);
    gf.write(&args.out_graph)?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "fit: d={d} edges={} h={:.3e} outer={} ",
        fit.graph.edge_count(),
        fit.h_final,
        fit.outer_iterations
    );
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<FitResult> {
    let data = DataMatrix::read_csv(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let cfg = learner_config(args);
    let w = SampleWeights::uniform(data.n(), 1.0)?;
    let fit = match args.method.backbone() {
        Backbone::Notears => fit_linear_notears(&data, &w, &cfg)?,
        Backbone::Golem => fit_linear_nll(&data, &w, &cfg)?,
        Backbone::NotearsMlp => fit_mlp_notears(&data, &w, &cfg)?,
    };
    Ok(fit)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            graph,
            k,
            d,
            sem,
            n,
            noise,
            p,
            seed,
            out,
            graph_out,
            labels_out,
            header,
            standardize,
        } => {
            let kind = match graph {
                GraphArg::Er => GraphKind::Er,
                GraphArg::Sf => GraphKind::Sf,
            };
            let model = GraphModel::new(kind, k)?;
            let dag = sample_dag(model, d, seed)?;
            let noise_kind = match noise {
                NoiseArg::Homo => NoiseKind::Homogeneous,
                NoiseArg::Hetero => NoiseKind::Heterogeneous,
                NoiseArg::Corrupt => NoiseKind::Corrupted,
            };
            let spec = make_noise_spec(noise_kind, d, p)?;
            let mut data = match sem {
                SemArg::Linear => {
                    let coef = assign_linear_weights_default(&dag, seed.wrapping_add(1))?;
                    simulate_linear_sem(&coef, n, &spec, seed.wrapping_add(2))?
                }
                SemArg::Gp => simulate_gp_sem(&dag, n, &spec, seed.wrapping_add(2))?,
            };
            if standardize {
                data = data.standardized();
            }
            data.write_csv(&out, header)?;
            GraphFile::from_dag(&dag).write(&graph_out)?;
            if let Some(path) = labels_out {
                data.write_labels(&path)?;
            }
            eprintln!(
                "simulated n={n} d={d} edges={} -> {}",
                dag.edge_count(),
                out.display()
            );
        }
        Command::Fit(args) => {
            let fit = run_fit(&args)?;
            write_fit_outputs(&fit, &args)?;
        }
        Command::Rescore(args) => {
            let data = DataMatrix::read_csv(&args.fit.data)
                .with_context(|| format!("reading {}", args.fit.data.display()))?;
            let lcfg = learner_config(&args.fit);
            let rcfg = RescoreConfig {
                tau: args.tau,
                solver: match args.inner {
                    InnerArg::Exact => InnerSolver::Exact,
                    InnerArg::Parametric => InnerSolver::Parametric,
                },
                k_outer: args.k_outer,
                k_inner: args.k_inner,
                k_reweight: args.k_reweight,
                seed: args.fit.seed,
                ..RescoreConfig::default()
            };
            let fit = fit_rescore(args.fit.method.backbone(), &data, &lcfg, &rcfg)?;
            write_fit_outputs(&fit, &args.fit)?;
            if let Some(path) = args.weights_out {
                let weights = fit
                    .final_weights
                    .as_ref()
                    .expect("rescore fits always carry final weights");
                let mut text = String::new();
                for w in weights.weights() {
                    text.push_str(&format!("{w}\n"));
                }
                std::fs::write(&path, text)?;
            }
        }
        Command::Eval { est, truth, sid: want_sid } => {
            let est_dag: Dag = GraphFile::read(&est)?.to_dag()?;
            let truth_dag: Dag = GraphFile::read(&truth)?.to_dag()?;
            let mut report = evaluate_graph(&est_dag, &truth_dag)?;
            if want_sid {
                report.sid = Some(sid(&est_dag, &truth_dag)?);
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Bench { config, out } => {
            let cfg = BenchConfig::read(&config)?;
            let table = run_benchmark(&cfg, Some(&out))?;
            let failed = table.rows.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                eprintln!("{failed} of {} rows failed", table.rows.len());
            }
            eprintln!(
                "wrote {} rows, {} aggregates -> {}",
                table.rows.len(),
                table.aggregates.len(),
                out.display()
            );
            if table.rows.iter().all(|r| r.failed()) {
                bail!("all rows failed");
            }
        }
    }
    Ok(())
}
