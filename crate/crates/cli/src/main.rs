use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rmab_mpc::analysis::{analyze, exact_small_oracle, DEFAULT_K_MAX};
use rmab_mpc::instances::{self, BUILTIN_IDS};
use rmab_mpc::policies::PolicyKind;
use rmab_mpc::simulator::{
    SimConfig, Simulator, SweepRow, SweepSpec, DEFAULT_HORIZON, DEFAULT_TAU, DEFAULT_WARMUP,
};
use rmab_mpc::{solve_relaxation, BudgetRule, RmabInstance};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "rmab-mpc",
    version,
    about = "LP-update control for restless bandits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the LP relaxation and structural diagnostics as JSON.
    Analyze(AnalyzeArgs),
    /// Estimate average gains for each (policy, N) pair.
    Simulate(SimulateArgs),
    /// Estimate gains over the product of instances, alpha, tau, N and policy.
    Sweep(SweepArgs),
    /// Write the per-step log of one trajectory.
    Trace(TraceArgs),
    /// Exact optimal gain of small systems.
    Oracle(OracleArgs),
    /// Bundled instances.
    #[command(subcommand)]
    Instances(InstancesCommand),
    /// Write a random instance as JSON.
    Generate(GenerateArgs),
}

#[derive(Subcommand)]
enum InstancesCommand {
    /// One line per bundled instance.
    List,
    /// Print a bundled instance as JSON.
    Show { id: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum BudgetArg {
    /// Exactly alpha N pulls in the relaxation.
    Exact,
    /// At most alpha N pulls in the relaxation.
    AtMost,
}

impl From<BudgetArg> for BudgetRule {
    fn from(arg: BudgetArg) -> Self {
        match arg {
            BudgetArg::Exact => BudgetRule::Exact,
            BudgetArg::AtMost => BudgetRule::AtMost,
        }
    }
}

#[derive(Args)]
struct InstanceArgs {
    /// Bundled id, `random:<states>:<seed>[:<alpha>]`, or a JSON file.
    #[arg(long)]
    instance: String,
    /// Overrides the budget fraction.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    budget: Option<BudgetArg>,
}

impl InstanceArgs {
    fn load(&self) -> Result<RmabInstance> {
        adjust(load_spec(&self.instance)?, self.alpha, self.budget)
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
    /// Population sizes at which the finite-N bound is evaluated.
    #[arg(long = "N", value_delimiter = ',', default_values_t = [10, 100, 1000])]
    n_list: Vec<usize>,
    /// Finite-horizon approximation error entering the bound.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Simulated steps.
    #[arg(long = "T", default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    /// Steps discarded before averaging.
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [PolicyKind::LpUpdate])]
    policy: Vec<PolicyKind>,
    #[arg(long = "N", value_delimiter = ',', default_values_t = [100])]
    n_list: Vec<usize>,
    /// Lookahead of LP-update; defaults to the catalog value.
    #[arg(long)]
    tau: Option<usize>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Instance specs, comma separated.
    #[arg(long, value_delimiter = ',')]
    instance: Vec<String>,
    /// Adds random instances with these state counts.
    #[arg(long, value_delimiter = ',')]
    states: Vec<usize>,
    /// Random instances per state count.
    #[arg(long, default_value_t = 1)]
    generated: u64,
    /// Seed of the first random instance.
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_enum)]
    budget: Option<BudgetArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [PolicyKind::LpUpdate])]
    policy: Vec<PolicyKind>,
    #[arg(long = "N", value_delimiter = ',', default_values_t = [100])]
    n_list: Vec<usize>,
    /// Defaults to the catalog value for a single bundled instance, else 10.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<usize>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = PolicyKind::LpUpdate)]
    policy: PolicyKind,
    #[arg(long = "N", default_value_t = 100)]
    n_arms: usize,
    #[arg(long = "T", default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// State every arm starts in.
    #[arg(long, default_value_t = 0)]
    initial_state: usize,
    /// Adds one column per occupancy coordinate.
    #[arg(long)]
    coords: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    states: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Trace(args) => cmd_trace(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Instances(InstancesCommand::List) => cmd_list(),
        Command::Instances(InstancesCommand::Show { id }) => {
            let entry = instances::builtin(&id)?;
            println!("{}", instances::to_json(&entry.instance));
            Ok(())
        }
        Command::Generate(args) => cmd_generate(&args),
    }
}

fn load_spec(spec: &str) -> Result<RmabInstance> {
    instances::resolve(spec).with_context(|| format!("cannot load instance '{spec}'"))
}

fn adjust(
    mut instance: RmabInstance,
    alpha: Option<f64>,
    budget: Option<BudgetArg>,
) -> Result<RmabInstance> {
    if let Some(alpha) = alpha {
        instance = instance.with_alpha(alpha);
    }
    if let Some(rule) = budget {
        instance = instance.with_budget(rule.into());
    }
    instance.ensure_valid()?;
    Ok(instance)
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn budget_name(rule: BudgetRule) -> &'static str {
    match rule {
        BudgetRule::Exact => "exact",
        BudgetRule::AtMost => "at-most",
    }
}

fn alpha_n_integral(alpha: f64, n: usize) -> bool {
    let an = alpha * n as f64;
    an - (an + 1e-9).floor() < 1e-9
}

/// Comment block that precedes every CSV.
fn write_metadata(out: &mut dyn Write, command: &str, fields: &[(&str, String)]) -> io::Result<()> {
    writeln!(out, "# rmab-mpc {VERSION}")?;
    writeln!(out, "# command: {command}")?;
    for (key, value) in fields {
        writeln!(out, "# {key}: {value}")?;
    }
    Ok(())
}

fn integral_note(alphas: &[f64], n_list: &[usize]) -> String {
    let mut parts = Vec::new();
    for &alpha in alphas {
        for &n in n_list {
            let flag = if alpha_n_integral(alpha, n) {
                "yes"
            } else {
                "no"
            };
            parts.push(format!("alpha={alpha}/N={n}:{flag}"));
        }
    }
    parts.join(" ")
}

fn write_sweep_row(out: &mut dyn Write, row: &SweepRow) -> io::Result<()> {
    row.write_csv(out)?;
    out.flush()
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let instance = args.instance.load()?;
    let report = analyze(&instance, args.k_max, &args.n_list, args.epsilon)?;
    let mut out = open_output(args.out.as_ref())?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run_sweep(
    spec: &SweepSpec,
    command: &str,
    mut fields: Vec<(&str, String)>,
    out: Option<&PathBuf>,
) -> Result<()> {
    let alphas: Vec<f64> = if spec.alpha_list.is_empty() {
        let mut a: Vec<f64> = spec.instances.iter().map(|i| i.alpha).collect();
        a.dedup();
        a
    } else {
        spec.alpha_list.clone()
    };
    fields.extend([
        ("policy", join(&spec.policies)),
        ("N", join(&spec.n_list)),
        ("tau", join(&spec.tau_list)),
        ("T", spec.horizon.to_string()),
        ("warmup", spec.warmup.to_string()),
        ("reps", spec.replications.to_string()),
        ("seed", spec.seed.to_string()),
        ("alpha_n_integral", integral_note(&alphas, &spec.n_list)),
    ]);
    let mut out = open_output(out)?;
    write_metadata(&mut *out, command, &fields)?;
    writeln!(out, "{}", SweepRow::CSV_HEADER)?;
    out.flush()?;
    spec.run(|row| {
        write_sweep_row(&mut *out, row).map_err(|source| rmab_mpc::Error::Io {
            path: PathBuf::from("<output>"),
            source,
        })
    })?;
    Ok(())
}

fn check_run(run: &RunArgs) -> Result<()> {
    if run.warmup >= run.horizon {
        bail!("--warmup must be smaller than --T");
    }
    if run.reps == 0 {
        bail!("--reps must be positive");
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    check_run(&args.run)?;
    let instance = args.instance.load()?;
    let tau = args
        .tau
        .unwrap_or_else(|| instances::default_tau(&args.instance.instance));
    let fields = vec![
        ("instance", args.instance.instance.clone()),
        ("alpha", instance.alpha.to_string()),
        ("budget", budget_name(instance.budget).to_string()),
    ];
    let spec = SweepSpec {
        instances: vec![instance],
        policies: args.policy.clone(),
        n_list: args.n_list.clone(),
        tau_list: vec![tau],
        alpha_list: Vec::new(),
        horizon: args.run.horizon,
        warmup: args.run.warmup,
        replications: args.run.reps,
        seed: args.run.seed,
    };
    run_sweep(&spec, "simulate", fields, args.run.out.as_ref())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    check_run(&args.run)?;
    let mut specs = args.instance.clone();
    for &states in &args.states {
        for seed in args.instance_seed..args.instance_seed + args.generated {
            specs.push(format!("random:{states}:{seed}"));
        }
    }
    if specs.is_empty() {
        bail!("give --instance or --states");
    }
    // Resolve everything before the first cell runs.
    let loaded = specs
        .iter()
        .map(|spec| adjust(load_spec(spec)?, None, args.budget))
        .collect::<Result<Vec<_>>>()?;
    for &alpha in &args.alpha {
        for inst in &loaded {
            inst.with_alpha(alpha).ensure_valid()?;
        }
    }
    let tau_list = if !args.tau.is_empty() {
        args.tau.clone()
    } else if specs.len() == 1 {
        vec![instances::default_tau(&specs[0])]
    } else {
        vec![DEFAULT_TAU]
    };
    let budget = loaded.first().map_or(BudgetRule::default(), |i| i.budget);
    let fields = vec![
        ("instance", specs.join(",")),
        (
            "alpha",
            if args.alpha.is_empty() {
                "instance".to_string()
            } else {
                join(&args.alpha)
            },
        ),
        ("budget", budget_name(budget).to_string()),
    ];
    let spec = SweepSpec {
        instances: loaded,
        policies: args.policy.clone(),
        n_list: args.n_list.clone(),
        tau_list,
        alpha_list: args.alpha.clone(),
        horizon: args.run.horizon,
        warmup: args.run.warmup,
        replications: args.run.reps,
        seed: args.run.seed,
    };
    run_sweep(&spec, "sweep", fields, args.run.out.as_ref())
}

fn cmd_trace(args: &TraceArgs) -> Result<()> {
    let instance = args.instance.load()?;
    let tau = args
        .tau
        .unwrap_or_else(|| instances::default_tau(&args.instance.instance));
    let config = SimConfig {
        n_arms: args.n_arms,
        horizon: args.horizon,
        warmup: 0,
        replications: 1,
        seed: args.seed,
        tau,
        policy: args.policy,
        initial_state: args.initial_state,
    };
    let sim = Simulator::new(&instance, &config)?;
    let log = sim.run(&sim.initial_state(), 0)?;
    let mut out = open_output(args.out.as_ref())?;
    let fields = [
        ("instance", args.instance.instance.clone()),
        ("alpha", instance.alpha.to_string()),
        ("budget", budget_name(instance.budget).to_string()),
        ("policy", args.policy.to_string()),
        ("N", args.n_arms.to_string()),
        ("T", args.horizon.to_string()),
        ("tau", tau.to_string()),
        ("seed", args.seed.to_string()),
        ("initial_state", args.initial_state.to_string()),
        ("g_star", sim.solution().gain.to_string()),
        (
            "alpha_n_integral",
            integral_note(&[instance.alpha], &[args.n_arms]),
        ),
    ];
    write_metadata(&mut *out, "trace", &fields)?;
    log.write_csv(&mut out, args.coords)?;
    out.flush()?;
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let instance = args.instance.load()?;
    let g_star = solve_relaxation(&instance)?.gain;
    let mut out = open_output(args.out.as_ref())?;
    let fields = [
        ("instance", args.instance.instance.clone()),
        ("alpha", instance.alpha.to_string()),
        ("N", join(&args.n_list)),
    ];
    write_metadata(&mut *out, "oracle", &fields)?;
    writeln!(out, "N,budget,oracle,g_star")?;
    out.flush()?;
    for &n in &args.n_list {
        let value = exact_small_oracle(&instance, n)?;
        writeln!(out, "{n},{},{value},{g_star}", instance.budget(n))?;
        out.flush()?;
    }
    Ok(())
}

fn cmd_list() -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "id,n_states,alpha,lp_value,tau")?;
    for id in BUILTIN_IDS {
        let entry = instances::builtin(id)?;
        writeln!(
            out,
            "{id},{},{},{},{}",
            entry.instance.n_states,
            entry.instance.alpha,
            entry.expected.lp_value,
            entry.expected.tau
        )?;
    }
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut instance = instances::generate_random(args.states, args.seed, args.alpha)?;
    if let Some(name) = &args.name {
        instance.name = name.clone();
    }
    match &args.out {
        Some(path) => instances::save(path, &instance)?,
        None => println!("{}", instances::to_json(&instance)),
    }
    Ok(())
}
