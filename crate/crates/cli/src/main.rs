use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use churn_core::io::{
    allocation_json, centrality_investment_csv, histogram_csv, parse_project, sweep_csv, sweep_spend_csv,
    to_json_pretty, trajectory_csv, OutputDir, Project,
};
use churn_core::model::{
    apply_allocation, assemble_transitions, build_wtms, generalized_wtm_of, DsmSet, FeedbackDistribution,
};
use churn_core::netgen::{
    aggregate_investment_by_task, centralities, run_boundary_experiment, task_label, ExperimentConfig,
    ExtendedDsm, GraphModel, ModelKind, TaskRow,
};
use churn_core::optimize::{
    baseline_allocation, budget_grid, solve_budget_constrained, solve_performance_constrained, sweep_budget,
    AllocationResult,
};
use churn_core::simulate::{histogram, monte_carlo_completion_with, trajectory_with_rng, run_rng, IntervalSource};
use churn_core::spectral::{perron_pair, spectral_radius};
use churn_core::{IoError, ModelError, NetgenError, OptimizeError};

const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser)]
#[command(name = "churn", version, about = "Feasibility and dependency investment for iterative product-development projects")]
struct Cli {
    /// Directory for report files.
    #[arg(long, global = true, env = "CHURN_OUT_DIR", default_value = "churn-out")]
    out: PathBuf,
    /// Replace existing report files.
    #[arg(long, global = true)]
    force: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feasibility index and Perron vectors of a project.
    Feasibility { project: PathBuf },
    /// Sample paths and completion-time histogram.
    Simulate(SimulateArgs),
    /// Optimal dependency investment.
    Optimize {
        #[command(subcommand)]
        goal: Goal,
    },
    /// Spend proportional to nominal strength on dependencies of focus tasks.
    Baseline {
        project: PathBuf,
        #[arg(long)]
        budget: f64,
        /// One-based local task indices.
        #[arg(long, value_delimiter = ',', default_value = "2,3,6")]
        focus: Vec<usize>,
    },
    /// Optimized and baseline index over a range of budgets.
    SweepBudget {
        project: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 1.5)]
        to: f64,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,3,6")]
        focus: Vec<usize>,
    },
    /// Random network calibrated to the feasibility boundary, then optimized.
    Synth(SynthArgs),
    /// Task centralities, with optimized per-task investment for a budget.
    Centrality {
        project: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        budget: f64,
    },
}

#[derive(Subcommand)]
enum Goal {
    /// Minimise the feasibility index within a budget.
    Budget {
        project: PathBuf,
        #[arg(long)]
        budget: f64,
    },
    /// Reach a target index at least cost.
    Performance {
        project: PathBuf,
        #[arg(long)]
        target: f64,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Nominal,
    Baseline,
    Optimized,
}

#[derive(Args)]
struct SimulateArgs {
    project: PathBuf,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long, default_value_t = 2000)]
    horizon: usize,
    /// Completion threshold on total unfinished work (default: project value, else 1).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Draw a fresh interval pmf per run, uniform on the simplex over these intervals.
    #[arg(long, value_delimiter = ',')]
    random_pmf: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "nominal")]
    strategy: Strategy,
    /// Budget for the baseline and optimized strategies.
    #[arg(long, default_value_t = 0.0)]
    budget: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,3,6")]
    focus: Vec<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    budget_frac: f64,
    /// Cost exponent.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Completion coefficient on every DSM diagonal.
    #[arg(long, default_value_t = 1.0)]
    diag: f64,
    /// Edge probability (ER).
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Ring degree (WS).
    #[arg(long)]
    ring_degree: Option<usize>,
    /// Rewiring probability (WS).
    #[arg(long)]
    rewire: Option<f64>,
    /// Edges per new node (BA).
    #[arg(long)]
    attach: Option<usize>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model '{s}' (expected er, ws or ba)"))
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        eprintln!("no --seed given; using {DEFAULT_SEED}");
        DEFAULT_SEED
    })
}

fn load(path: &Path) -> Result<Project> {
    Ok(parse_project(path)?.1)
}

fn focus_indices(focus: &[usize], m: usize) -> Result<Vec<usize>> {
    focus
        .iter()
        .map(|&t| {
            if t == 0 || t > m {
                bail!("focus task {t} outside 1..={m}");
            }
            Ok(t - 1)
        })
        .collect()
}

fn print_allocation(r: &AllocationResult) {
    println!("rho before: {}", r.rho_before);
    println!("rho after:  {}", r.rho_after);
    println!("total cost: {}", r.total_cost);
    println!("converged:  {}", r.converged);
}

fn feasibility(cli: &Cli, path: &Path) -> Result<()> {
    let p = load(path)?;
    let out = OutputDir::create(&cli.out, cli.force)?;
    let mat = generalized_wtm_of(&p.dsms, &p.dist);
    let (rho, left, right) = match perron_pair(&mat) {
        Ok(pair) => (pair.rho, Some(pair.u), Some(pair.v)),
        Err(e) => {
            log::warn!("{e}");
            (spectral_radius(&mat), None, None)
        }
    };
    let feasible = rho < 1.0;
    println!("rho: {rho}");
    println!("feasible: {}", if feasible { "yes" } else { "no" });
    if let (Some(u), Some(v)) = (&left, &right) {
        println!("left Perron vector:  {u:?}");
        println!("right Perron vector: {v:?}");
    }
    let report = serde_json::json!({
        "rho": rho,
        "feasible": feasible,
        "left_vector": left,
        "right_vector": right,
    });
    out.write("feasibility.json", &to_json_pretty(&report))?;
    Ok(())
}

fn tuned_project(
    p: &Project,
    dist: &FeedbackDistribution<f64>,
    strategy: Strategy,
    budget: f64,
    focus: &[usize],
) -> Option<DsmSet<f64>> {
    let costs = &p.costs;
    let result = match strategy {
        Strategy::Nominal => return Some(p.dsms.clone()),
        Strategy::Baseline => baseline_allocation(&p.dsms, dist, costs, budget, focus),
        Strategy::Optimized => solve_budget_constrained(&p.dsms, dist, costs, budget),
    };
    match result {
        Ok(r) => apply_allocation(&p.dsms, &r.psi, costs.epsilon()).ok(),
        Err(e) => {
            log::warn!("allocation failed for one run: {e}");
            None
        }
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let p = load(&a.project)?;
    let seed = seed_or_default(a.seed);
    let gamma = a.gamma.or(p.gamma).unwrap_or(1.0);
    let focus = focus_indices(&a.focus, p.dsms.m())?;
    let out = OutputDir::create(&cli.out, cli.force)?;
    out.check(&["trajectory.csv", "histogram.csv"])?;

    let nominal_tuned = tuned_project(&p, &p.dist, a.strategy, a.budget, &focus)
        .context("allocation for the project's interval pmf failed")?;
    let pair = assemble_transitions(&build_wtms(&nominal_tuned));
    let traj = trajectory_with_rng(&pair, &p.dist, &p.initial_state, a.horizon, &mut run_rng(seed, 0));
    out.write("trajectory.csv", &trajectory_csv(&traj))?;

    let source = match &a.random_pmf {
        Some(support) => IntervalSource::Dirichlet(support.clone()),
        None => IntervalSource::Fixed(p.dist.clone()),
    };
    let times = monte_carlo_completion_with(
        |dist| match &source {
            IntervalSource::Fixed(_) => Some(nominal_tuned.clone()),
            IntervalSource::Dirichlet(_) => tuned_project(&p, dist, a.strategy, a.budget, &focus),
        },
        &source,
        &p.initial_state,
        gamma,
        a.horizon,
        a.runs,
        seed,
    );
    let failed = times.iter().filter(|t| t.is_none()).count();
    let done: Vec<_> = times.into_iter().flatten().collect();
    out.write("histogram.csv", &histogram_csv(&histogram(&done)))?;
    println!("runs: {} (skipped {failed})", done.len());
    println!("gamma: {gamma}, horizon: {}, seed: {seed}", a.horizon);
    Ok(())
}

fn optimize(cli: &Cli, goal: &Goal) -> Result<()> {
    let (path, run): (&Path, Box<dyn Fn(&Project) -> Result<AllocationResult, OptimizeError>>) = match goal {
        Goal::Budget { project, budget } => {
            let b = *budget;
            (project, Box::new(move |p| solve_budget_constrained(&p.dsms, &p.dist, &p.costs, b)))
        }
        Goal::Performance { project, target } => {
            let t = *target;
            (project, Box::new(move |p| solve_performance_constrained(&p.dsms, &p.dist, &p.costs, t)))
        }
    };
    let p = load(path)?;
    let out = OutputDir::create(&cli.out, cli.force)?;
    let r = run(&p)?;
    print_allocation(&r);
    out.write("allocation.json", &allocation_json(&p.dsms, &r))?;
    Ok(())
}

fn baseline(cli: &Cli, path: &Path, budget: f64, focus: &[usize]) -> Result<()> {
    let p = load(path)?;
    let focus = focus_indices(focus, p.dsms.m())?;
    let out = OutputDir::create(&cli.out, cli.force)?;
    let r = baseline_allocation(&p.dsms, &p.dist, &p.costs, budget, &focus)?;
    print_allocation(&r);
    out.write("allocation.json", &allocation_json(&p.dsms, &r))?;
    Ok(())
}

fn sweep(cli: &Cli, path: &Path, from: f64, to: f64, steps: usize, focus: &[usize]) -> Result<()> {
    let p = load(path)?;
    let focus = focus_indices(focus, p.dsms.m())?;
    let out = OutputDir::create(&cli.out, cli.force)?;
    out.check(&["sweep.csv", "sweep_spend.csv"])?;
    let points = sweep_budget(&p.dsms, &p.dist, &p.costs, &budget_grid(from, to, steps), Some(&focus))?;
    for (b, opt, base) in &points {
        println!(
            "B = {b:.4}: optimized {:.6}, baseline {:.6}",
            opt.rho_after,
            base.as_ref().map_or(f64::NAN, |r| r.rho_after)
        );
    }
    out.write("sweep.csv", &sweep_csv(&points))?;
    out.write("sweep_spend.csv", &sweep_spend_csv(&points))?;
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let seed = seed_or_default(a.seed);
    let mut cfg = ExperimentConfig::new(a.model, a.m, seed);
    cfg.graph = match cfg.graph {
        GraphModel::Er { p } => GraphModel::Er { p: a.edge_prob.unwrap_or(p) },
        GraphModel::Ws { k, beta } => GraphModel::Ws {
            k: a.ring_degree.unwrap_or(k),
            beta: a.rewire.unwrap_or(beta),
        },
        GraphModel::Ba { attach } => GraphModel::Ba {
            attach: a.attach.unwrap_or(attach),
        },
    };
    cfg.epsilon = a.epsilon;
    cfg.budget_fraction = a.budget_frac;
    cfg.cost_exponent = a.p;
    cfg.diag_value = a.diag;
    let out = OutputDir::create(&cli.out, cli.force)?;
    out.check(&["centrality_investment.csv", "allocation.json", "synth_summary.json"])?;
    let rep = run_boundary_experiment(&cfg)?;
    let summary = serde_json::json!({
        "model": a.model.name(),
        "graph": cfg.graph,
        "m": a.m,
        "seed": seed,
        "epsilon": cfg.epsilon,
        "cost_exponent_p": cfg.cost_exponent,
        "diag_value": cfg.diag_value,
        "edges": rep.edges,
        "scale": rep.scale,
        "budget": rep.budget,
        "rho_before": rep.result.rho_before,
        "rho_after": rep.result.rho_after,
        "total_cost": rep.result.total_cost,
        "converged": rep.result.converged,
        "top_decile_share": {
            "betweenness": rep.top_decile_share(|r| r.betweenness),
            "pagerank": rep.top_decile_share(|r| r.pagerank),
            "hub": rep.top_decile_share(|r| r.hub),
        },
    });
    println!("scale c: {}", rep.scale);
    print_allocation(&rep.result);
    out.write("centrality_investment.csv", &centrality_investment_csv(&rep.rows))?;
    out.write("allocation.json", &allocation_json(&rep.dsms, &rep.result))?;
    out.write("synth_summary.json", &to_json_pretty(&summary))?;
    Ok(())
}

fn centrality(cli: &Cli, path: &Path, budget: f64) -> Result<()> {
    let p = load(path)?;
    let out = OutputDir::create(&cli.out, cli.force)?;
    let m = p.dsms.m();
    let cent = centralities(&ExtendedDsm::from_dsms(&p.dsms));
    let invest = if budget > 0.0 {
        let r = solve_budget_constrained(&p.dsms, &p.dist, &p.costs, budget)?;
        aggregate_investment_by_task(&r, m)
    } else {
        vec![0.0; 2 * m]
    };
    let rows: Vec<TaskRow> = (0..2 * m)
        .map(|t| TaskRow {
            task_id: task_label(t, m),
            team: if t < m { "local" } else { "system" }.into(),
            betweenness: cent.betweenness[t],
            pagerank: cent.pagerank[t],
            hub: cent.hub[t],
            investment: invest[t],
        })
        .collect();
    out.write("centrality.csv", &centrality_investment_csv(&rows))?;
    println!("wrote {} task rows", rows.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Feasibility { project } => feasibility(cli, project),
        Command::Simulate(a) => simulate(cli, a),
        Command::Optimize { goal } => optimize(cli, goal),
        Command::Baseline { project, budget, focus } => baseline(cli, project, *budget, focus),
        Command::SweepBudget {
            project,
            from,
            to,
            steps,
            focus,
        } => sweep(cli, project, *from, *to, *steps, focus),
        Command::Synth(a) => synth(cli, a),
        Command::Centrality { project, budget } => centrality(cli, project, *budget),
    }
}

/// 2: target unreachable, 3: bad input, 4: calibration failed, 1: anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<OptimizeError>() {
            return match e {
                OptimizeError::Infeasible { .. } => 2,
                OptimizeError::Model(_) | OptimizeError::InvalidArgument(_) => 3,
                OptimizeError::Spectral(_) => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<NetgenError>() {
            return match e {
                NetgenError::Uncalibratable { .. } => 4,
                NetgenError::InvalidParams(_) | NetgenError::Model(_) => 3,
                NetgenError::Optimize(OptimizeError::Infeasible { .. }) => 2,
                NetgenError::Optimize(_) => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<IoError>() {
            return match e {
                IoError::MalformedFile { .. } | IoError::InvariantViolation { .. } => 3,
                IoError::WouldOverwrite(_) | IoError::Io { .. } => 1,
            };
        }
        if cause.downcast_ref::<ModelError>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
