//! `noma-sim`: run scenarios, sweeps and audits from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use noma_core::montecarlo::monte_carlo_sum_rate;
use noma_core::rates::approx_sum_rate;
use noma_core::scenario::sweep::{options_for, run_scheme};
use noma_core::scenario::{
    build_instance, check_allocation, convergence_study, default_scenario, emit_results, read_csv, run_scenario,
    run_sweep, RunRecord, ScenarioConfig, Scheme, Summary, SweepAxis, SweepSpec, TopologySource, MAX_SEED,
};

#[derive(Parser)]
#[command(name = "noma-sim", version, about = "NOMA power allocation for nearshore networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); the built-in default scenario when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Master seed; overrides the scenario file.
    #[arg(long, env = "NOMA_SEED", value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, u64)> {
        let config = match &self.config {
            Some(path) => ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => default_scenario(),
        };
        let seed = self.seed.unwrap_or(config.simulation.seed);
        Ok((config, seed))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the scenario once with the selected schemes.
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated scheme tags.
        #[arg(long, value_delimiter = ',', default_value = "sca_noma,equal_power_noma,oma_equal,oma_sca")]
        schemes: Vec<Scheme>,
        /// CSV output path; a JSON summary is written next to it.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the scenario's sweep, or one given on the command line.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Sweep axis: p_max, qos_floor, leakage_cap or tbs_uav_mix.
        #[arg(long, requires = "values")]
        axis: Option<SweepAxis>,
        /// Comma-separated, strictly monotone axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// Draw a random topology per repetition.
        #[arg(long)]
        random_topology: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Iteration counts of the optimizer over random topologies.
    ConvergenceStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Cluster budget in W.
        #[arg(long, default_value_t = 50.0)]
        pmax: f64,
        /// JSON output path.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Re-check every allocation of a results file against its constraints.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Results CSV written by `run` or `sweep`.
        results: PathBuf,
    },
    /// Compare the rate approximation with Monte Carlo at the optimum and at
    /// equal power.
    McCheck {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo samples per user; the scenario's setting when omitted.
        #[arg(long)]
        samples: Option<usize>,
        /// Largest accepted relative gap.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Print the built-in default scenario as TOML.
    DefaultConfig,
}

fn print_records(records: &[RunRecord]) {
    println!(
        "{:<18} {:>12} {:>12} {:>12} {:>10} {:>11} {:>5}  status",
        "scheme", "axis_value", "approx", "monte_carlo", "mc_stderr", "leakage_w", "iter"
    );
    for r in records {
        let status = match (&r.error, &r.violation) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(v)) => format!("violation: {v}"),
            (None, None) if !r.converged => "not converged".to_string(),
            (None, None) => "ok".to_string(),
        };
        let axis = r.axis_value.map_or("-".to_string(), |v| format!("{v}"));
        println!(
            "{:<18} {:>12} {:>12.6} {:>12.6} {:>10.2e} {:>11.3e} {:>5}  {status}",
            r.scheme.tag(),
            axis,
            r.sum_rate_approx,
            r.sum_rate_mc,
            r.mc_stderr,
            r.leakage_w,
            r.iterations
        );
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

fn emit(records: &[RunRecord], config: &ScenarioConfig, seed: u64, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        create_parent(path)?;
        let summary = Summary::new(config, seed, records);
        let files = emit_results(records, &summary, path).with_context(|| format!("writing {}", path.display()))?;
        for file in files {
            eprintln!("wrote {}", file.display());
        }
    }
    Ok(())
}

fn validate(common: &Common, results: &Path) -> Result<ExitCode> {
    let (config, _) = common.load()?;
    let records = read_csv(results).with_context(|| format!("reading {}", results.display()))?;
    let source = config.sweep.as_ref().map_or(TopologySource::Config, |s| s.topology);
    let mut bad = 0;
    for r in &records {
        let Some(power) = &r.power else { continue };
        let axis = r.axis.zip(r.axis_value);
        let source = if axis.is_some() { source } else { TopologySource::Config };
        let instance = build_instance(&config, source, axis, r.repetition, r.seed)?;
        let net = instance.network(&config)?;
        let verdict = check_allocation(&net, &instance.constraints, power, r.scheme, config.simulation.oma_split)?;
        // Optimizer outputs must be feasible; baselines only have to match
        // what was recorded, since they do not enforce the rate floors.
        let optimized = matches!(r.scheme, Scheme::ScaNoma | Scheme::OmaSca);
        match (&verdict, &r.violation) {
            (Some(v), _) if optimized => {
                bad += 1;
                println!("{} {}: {v}", r.scenario_id, r.scheme);
            }
            (v, recorded) if v != recorded => {
                bad += 1;
                println!("{} {}: recorded {:?}, re-check gives {:?}", r.scenario_id, r.scheme, recorded, v);
            }
            (Some(v), _) => println!("{} {}: {v} (as recorded)", r.scenario_id, r.scheme),
            (None, _) => {}
        }
    }
    let checked = records.iter().filter(|r| r.power.is_some()).count();
    println!("checked {checked} allocations, {bad} failed re-validation");
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn mc_check(common: &Common, samples: Option<usize>, tolerance: f64) -> Result<ExitCode> {
    let (config, seed) = common.load()?;
    let samples = samples.unwrap_or(config.simulation.mc_samples);
    let instance = build_instance(&config, TopologySource::Config, None, 0, seed)?;
    let net = instance.network(&config)?;
    let options = options_for(&config);
    let mut ok = true;
    for scheme in [Scheme::ScaNoma, Scheme::EqualPowerNoma] {
        let outcome = run_scheme(&net, &instance.constraints, scheme, config.simulation.oma_split, &options)?;
        let approx = approx_sum_rate(&net, &outcome.power)?;
        let mc = monte_carlo_sum_rate(&net, &outcome.power, samples, seed);
        let gap = (approx - mc.mean).abs() / mc.mean;
        let pass = gap <= tolerance;
        ok &= pass;
        println!(
            "{:<18} approx {approx:.6}  monte_carlo {:.6} +/- {:.1e}  gap {:.3}%  {}",
            scheme.tag(),
            mc.mean,
            mc.std_err,
            100.0 * gap,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, schemes, out } => {
            let (config, seed) = common.load()?;
            let records = run_scenario(&config, &schemes, seed);
            print_records(&records);
            emit(&records, &config, seed, out.as_deref())?;
        }
        Command::Sweep { common, axis, values, repetitions, schemes, random_topology, out } => {
            let (config, seed) = common.load()?;
            let mut spec = match (axis, values, &config.sweep) {
                (Some(axis), Some(values), base) => SweepSpec {
                    axis,
                    values,
                    ..base.clone().unwrap_or_else(|| SweepSpec::new(axis, Vec::new()))
                },
                (None, None, Some(base)) => base.clone(),
                (None, Some(_), _) => bail!("--values needs --axis"),
                _ => bail!("the scenario has no [sweep] table; pass --axis and --values"),
            };
            if let Some(n) = repetitions {
                spec.repetitions = n;
            }
            if let Some(s) = schemes {
                spec.schemes = s;
            }
            if random_topology {
                spec.topology = TopologySource::Random;
            }
            let records = run_sweep(&spec, &config, seed)?;
            print_records(&records);
            emit(&records, &config, seed, out.as_deref())?;
        }
        Command::ConvergenceStudy { common, count, pmax, out } => {
            let (config, seed) = common.load()?;
            let study = convergence_study(&config, count, pmax, seed);
            println!("iterations  runs");
            for (iterations, runs) in study.histogram() {
                println!("{iterations:>10}  {runs}");
            }
            let failures = study.failures();
            println!("converged {} of {count}; within 15 iterations: {}", count - failures.len(), study.converged_within(15));
            for f in failures {
                println!("run {} (seed {}): {}", f.index, f.topology_seed, f.error.as_deref().unwrap_or("not converged"));
            }
            if let Some(path) = out {
                create_parent(&path)?;
                std::fs::write(&path, serde_json::to_string_pretty(&study)? + "\n")?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Validate { common, results } => return validate(&common, &results),
        Command::McCheck { common, samples, tolerance } => return mc_check(&common, samples, tolerance),
        Command::DefaultConfig => print!("{}", default_scenario().to_toml_string()),
    }
    Ok(ExitCode::SUCCESS)
}
