//! `scenario-mpc`: tree export, single-epoch planning, closed-loop
//! simulation, timing and synthetic data generation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use scenario_mpc::config::{synthesize, RunConfig, SamplerSpec};
use scenario_mpc::data::{format_timestamp, ingest_prices, parse_timestamp, PriceSeries};
use scenario_mpc::harness::{
    aggregate_report, decision_tree, first_epoch, plan_epoch, report_from_totals, run_episodes, EpisodeJob,
    EpisodeResult, HarnessError, PolicyKind,
};
use scenario_mpc::optimizer::{solve_tree, OptError};
use scenario_mpc::scenario_tree::{build_tree, export_dot, TreeError};
use scenario_mpc::{Matrix, TrajectorySampler, TreeConfig};

#[derive(Parser)]
#[command(
    name = "scenario-mpc",
    version,
    about = "Scenario-tree stochastic MPC for battery arbitrage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scenario tree from the price history and emit JSON and DOT.
    BuildTree(Common),
    /// Plan one decision epoch and print the first-stage actions.
    Plan(Common),
    /// Run closed-loop episodes for every month, policy and seed.
    Simulate(Common),
    /// Time tree construction and solving across tree sizes.
    Bench(Common),
    /// Generate a synthetic price CSV.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seeds with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. `simulate` falls back to the configured `output_dir`; the other commands print to standard output without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restricts the run to one policy.
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Dot,
}

/// An error with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const DATA_ERROR: u8 = 2;
const SOLVER_ERROR: u8 = 3;

fn data_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: DATA_ERROR,
        error: error.into(),
    }
}

fn opt_code(e: &OptError) -> u8 {
    match e {
        OptError::SolverFailure(_) => SOLVER_ERROR,
        OptError::InvalidInput(_) => DATA_ERROR,
    }
}

fn harness_err(e: HarnessError) -> Failure {
    let code = match &e {
        HarnessError::Optimizer(o) => opt_code(o),
        HarnessError::Infeasible { .. } => SOLVER_ERROR,
        HarnessError::InvalidInput(_) | HarnessError::Sampler(_) | HarnessError::Tree(_) => DATA_ERROR,
    };
    Failure { code, error: e.into() }
}

fn tree_err(e: TreeError) -> Failure {
    data_err(e)
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::BuildTree(c) => build_tree_cmd(c),
        Command::Plan(c) => plan_cmd(c),
        Command::Simulate(c) => simulate_cmd(c),
        Command::Bench(c) => bench_cmd(c),
        Command::Synth(c) => synth_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Loaded configuration plus everything derived from it.
struct Run {
    cfg: RunConfig,
    prices: Option<PriceSeries>,
    trading_dim: usize,
}

impl Run {
    fn load(c: &Common) -> Result<Self, Failure> {
        let cfg = RunConfig::load(&c.config).map_err(data_err)?;
        let prices = match &cfg.data.path {
            Some(path) => Some(ingest_prices(path).map_err(data_err)?),
            None => None,
        };
        let trading_dim = match &prices {
            Some(p) => cfg.check_data(&p.names).map_err(data_err)?,
            None => cfg.optimizer.trading_dim,
        };
        Ok(Self {
            cfg,
            prices,
            trading_dim,
        })
    }

    fn seeds(&self, c: &Common) -> Vec<u64> {
        c.seed.map_or_else(|| self.cfg.seeds.clone(), |s| vec![s])
    }

    fn series(&self) -> Result<&PriceSeries, Failure> {
        self.prices
            .as_ref()
            .ok_or_else(|| data_err(anyhow!("this command needs `[data] path` in the config")))
    }

    fn values(&self) -> Option<&Matrix> {
        self.prices.as_ref().map(|p| &p.values)
    }

    fn sampler(&self, spec: &SamplerSpec) -> Result<Box<dyn TrajectorySampler>, Failure> {
        spec.build(self.values()).map_err(data_err)
    }

    fn samplers_for(
        &self,
        policies: &[PolicyKind],
    ) -> Result<BTreeMap<PolicyKind, Option<Box<dyn TrajectorySampler>>>, Failure> {
        let mut out = BTreeMap::new();
        for &p in policies {
            let s = match p {
                PolicyKind::PerfectMpc | PolicyKind::OracleMpc => None,
                PolicyKind::ArTreeSmpc => {
                    let spec = self
                        .cfg
                        .ar_sampler
                        .as_ref()
                        .ok_or_else(|| data_err(anyhow!("`ar_tree_smpc` needs an `[ar_sampler]` section")))?;
                    Some(self.sampler(spec)?)
                }
                _ => Some(self.sampler(&self.cfg.sampler)?),
            };
            out.insert(p, s);
        }
        Ok(out)
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(dir.join(name), contents))
        .with_context(|| format!("cannot write {}", dir.join(name).display()))
        .map_err(data_err)
}

fn build_tree_cmd(c: &Common) -> Outcome {
    let run = Run::load(c)?;
    let seed = run.seeds(c)[0];
    let history = run
        .values()
        .cloned()
        .unwrap_or_else(|| Matrix::zeros(0, run.cfg.tree.series_dim));
    let sampler = run.sampler(&run.cfg.sampler)?;
    let config = TreeConfig {
        master_seed: seed,
        ..run.cfg.tree.clone()
    };
    let tree = build_tree(sampler.as_ref(), &history, &config).map_err(tree_err)?;
    match &c.out {
        Some(dir) => {
            write_out(dir, "tree.json", &tree.to_json())?;
            write_out(dir, "tree.dot", &export_dot(&tree))?;
        }
        None => match c.format.unwrap_or(Format::Json) {
            Format::Dot => print!("{}", export_dot(&tree)),
            Format::Json => print!("{}", tree.to_json()),
            Format::Csv => return Err(data_err(anyhow!("build-tree emits json or dot"))),
        },
    }
    Ok(())
}

fn plan_cmd(c: &Common) -> Outcome {
    let run = Run::load(c)?;
    let series = run.series()?;
    let kind = c.policy.unwrap_or(PolicyKind::DstSmpc);
    let seed = run.seeds(c)[0];
    let hcfg = run.cfg.harness_config(seed, run.trading_dim);
    let (_, range) = series
        .months()
        .into_iter()
        .next()
        .ok_or_else(|| data_err(anyhow!("price data is empty")))?;
    let h = hcfg.tree.stage_horizon;
    let t = first_epoch(&range, h, hcfg.min_context);
    let end = t + range.end.saturating_sub(t) / h * h;
    if end == t {
        return Err(data_err(anyhow!("first month has no whole decision epoch")));
    }
    let samplers = run.samplers_for(&[kind])?;
    let sampler = samplers[&kind].as_deref();
    let plan =
        plan_epoch(kind, &series.values, t, end, sampler, &hcfg, hcfg.battery.soc_init, 0).map_err(harness_err)?;
    let first = &plan.actions[..h.min(plan.actions.len())];
    match c.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let doc = serde_json::json!({
                "policy": kind,
                "start": format_timestamp(&series.timestamps[t]),
                "objective": plan.objective,
                "actions": first,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("plan serialises"));
        }
        Format::Csv => {
            let mut out = String::from("timestamp,p_c,p_d\n");
            for (k, a) in first.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{:.6},{:.6}",
                    format_timestamp(&series.timestamps[t + k]),
                    a.p_c,
                    a.p_d
                );
            }
            print!("{out}");
        }
        Format::Dot => return Err(data_err(anyhow!("plan emits csv or json"))),
    }
    Ok(())
}

fn simulate_cmd(c: &Common) -> Outcome {
    let run = Run::load(c)?;
    let series = run.series()?;
    let policies: Vec<PolicyKind> = match c.policy {
        Some(p) => vec![p],
        None => run.cfg.policies.clone(),
    };
    let samplers = run.samplers_for(&policies)?;
    let seeds = run.seeds(c);
    let configs: Vec<_> = seeds
        .iter()
        .map(|&s| run.cfg.harness_config(s, run.trading_dim))
        .collect();
    let months = series.months();
    let mut jobs = Vec::new();
    let mut keys = Vec::new();
    for (seed, hcfg) in seeds.iter().zip(&configs) {
        for (month, range) in &months {
            for &kind in &policies {
                jobs.push(EpisodeJob {
                    kind,
                    series: &series.values,
                    range: range.clone(),
                    sampler: samplers[&kind].as_deref(),
                    config: hcfg,
                });
                keys.push((*seed, month.clone(), kind));
            }
        }
    }
    let mut by_seed: BTreeMap<u64, BTreeMap<String, BTreeMap<PolicyKind, EpisodeResult>>> = BTreeMap::new();
    for ((seed, month, kind), result) in keys.into_iter().zip(run_episodes(&jobs)) {
        let result = result.map_err(harness_err)?;
        by_seed
            .entry(seed)
            .or_default()
            .entry(month)
            .or_default()
            .insert(kind, result);
    }

    // Seed-averaged totals; with one seed this is that seed's report.
    let mut mean: BTreeMap<String, BTreeMap<PolicyKind, f64>> = BTreeMap::new();
    let n = by_seed.len() as f64;
    for months in by_seed.values() {
        for (month, row) in months {
            for (kind, r) in row {
                *mean.entry(month.clone()).or_default().entry(*kind).or_default() += r.total_reward / n;
            }
        }
    }
    let report = report_from_totals(&mean);
    let out = c.out.clone().unwrap_or_else(|| run.cfg.output_dir.clone());
    write_out(&out, "report.csv", &report)?;
    if by_seed.len() > 1 {
        for (seed, months) in &by_seed {
            write_out(&out, &format!("report_seed{seed}.csv"), &aggregate_report(months))?;
        }
    }
    for (seed, months) in &by_seed {
        for (month, row) in months {
            for (kind, r) in row {
                write_out(
                    &out.join("logs"),
                    &format!("{month}_{kind}_seed{seed}.json"),
                    &r.log_json(),
                )?;
            }
        }
    }
    match c.format.unwrap_or(Format::Csv) {
        Format::Csv => print!("{report}"),
        Format::Json => {
            let doc: BTreeMap<String, BTreeMap<String, f64>> = mean
                .iter()
                .map(|(m, row)| (m.clone(), row.iter().map(|(k, v)| (k.to_string(), *v)).collect()))
                .collect();
            println!("{}", serde_json::to_string_pretty(&doc).expect("totals serialise"));
        }
        Format::Dot => return Err(data_err(anyhow!("simulate emits csv or json"))),
    }
    Ok(())
}

fn bench_cmd(c: &Common) -> Outcome {
    let run = Run::load(c)?;
    let seed = run.seeds(c)[0];
    let sampler = run.sampler(&run.cfg.sampler)?;
    let history = run
        .values()
        .cloned()
        .unwrap_or_else(|| Matrix::zeros(0, run.cfg.tree.series_dim));
    let hcfg = run.cfg.harness_config(seed, run.trading_dim);
    let base = run.cfg.tree.samples_per_node;
    let mut out = String::from("depth,samples_per_node,nodes,lp_variables,build_ms,solve_ms\n");
    for depth in 1..=run.cfg.tree.depth {
        for m in [(base / 4).max(1), base] {
            let config = TreeConfig {
                depth,
                samples_per_node: m,
                master_seed: seed,
                ..run.cfg.tree.clone()
            };
            let clock = Instant::now();
            let tree = build_tree(sampler.as_ref(), &history, &config).map_err(tree_err)?;
            let build = clock.elapsed();
            let clock = Instant::now();
            let (prog, _) = solve_tree(
                &decision_tree(&tree),
                &hcfg.battery,
                &hcfg.optimizer,
                hcfg.battery.soc_init,
            )
            .map_err(|e| Failure {
                code: opt_code(&e),
                error: e.into(),
            })?;
            let solve = clock.elapsed();
            let _ = writeln!(
                out,
                "{depth},{m},{},{},{:.3},{:.3}",
                tree.len(),
                prog.lp.num_vars(),
                build.as_secs_f64() * 1e3,
                solve.as_secs_f64() * 1e3
            );
        }
    }
    match &c.out {
        Some(dir) => write_out(dir, "bench.csv", &out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn synth_cmd(c: &Common) -> Outcome {
    let cfg = RunConfig::load(&c.config).map_err(data_err)?;
    let mut synth = cfg
        .synth
        .clone()
        .ok_or_else(|| data_err(anyhow!("synth needs a `[synth]` section")))?;
    if let Some(seed) = c.seed {
        synth.seed = seed;
    }
    let spec = synth.sampler.as_ref().unwrap_or(&cfg.sampler);
    let values = synthesize(spec, &synth).map_err(data_err)?;
    let start = parse_timestamp(&synth.start).expect("validated with the config");
    let series = PriceSeries::hourly(start, synth.column_names(values.cols()), values);
    let csv = series.to_csv();
    match &c.out {
        Some(dir) => write_out(dir, "prices.csv", &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_failures_map_to_exit_3() {
        let e = HarnessError::Optimizer(OptError::SolverFailure("stalled".into()));
        assert_eq!(harness_err(e).code, SOLVER_ERROR);
        let e = HarnessError::Optimizer(OptError::InvalidInput("bad".into()));
        assert_eq!(harness_err(e).code, DATA_ERROR);
        let e = HarnessError::InvalidInput("short series".into());
        assert_eq!(harness_err(e).code, DATA_ERROR);
    }
}
