//! Command-line front end for the HetNet association simulator.
//!
//! Exit status: 0 on success, 1 for invalid input or configuration, 2 when a
//! run fails at runtime (including any failed seed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hetnet_core::dcd::dcd_solve;
use hetnet_core::harness::scenarios::{mimo_scenario, tiny_scenario};
use hetnet_core::harness::{
    exhaustive_oracle, joint_brute_oracle, parse_seeds, run_experiment, run_method, write_atomic, ExperimentSpec,
    Method, MethodFamily, Report,
};
use hetnet_core::netmodel::gen_topology;
use hetnet_core::Error;

#[derive(Parser)]
#[command(name = "hetnet", version, about = "Pricing-based user association for downlink HetNets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file ([scenario], [run], [dcd], [newton], ...).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds, e.g. `0,3,7` or `0..10`.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory for CSV/JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Method names, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Emit per-iteration convergence series.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instances and write them as JSON.
    Gen(Common),
    /// Fixed-power association: max-sinr, dcd, subgradient.
    Assoc(Common),
    /// Joint association and power control: joint-dcd, joint-maxsinr, direct-dual.
    Joint(Common),
    /// Two-stage MIMO scheme: two-stage[:S], maxsinr-wmmse.
    Mimo(Common),
    /// Compare solvers against the brute-force oracles on tiny instances.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Power grid points per BS for the joint oracle.
        #[arg(long, default_value_t = 10)]
        grid: usize,
    },
    /// Time every requested method on every seed, one run at a time.
    Bench(Common),
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::Dimension(_)
            | Error::OracleGuard(_)
            | Error::FormatVersion(_)
            | Error::Toml(_)
            | Error::MissingChannels => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Loads the spec and applies command-line overrides. `family` restricts
/// `--method`; `defaults` fills in when neither the file nor the flag names one.
fn build_spec(c: &Common, family: Option<MethodFamily>, defaults: &[Method]) -> CliResult<ExperimentSpec> {
    let mut spec = match &c.config {
        Some(path) => ExperimentSpec::load(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?,
        None => {
            let mut spec = ExperimentSpec::default();
            if family.is_some() {
                spec.run.methods.clear();
            }
            if family == Some(MethodFamily::Mimo) {
                spec.scenario = mimo_scenario();
            }
            spec
        }
    };
    if let Some(s) = &c.seed {
        spec.run.seeds = parse_seeds(s)?;
    }
    if !c.method.is_empty() {
        spec.run.methods = c.method.iter().map(|m| m.parse()).collect::<Result<_, Error>>()?;
    }
    if let Some(f) = family {
        spec.run.methods.retain(|m| m.family() == f);
        if spec.run.methods.is_empty() {
            spec.run.methods = defaults.to_vec();
        }
        if !c.method.is_empty() && spec.run.methods.len() != c.method.len() {
            return Err(Failure::Validation(format!("--method names a method outside this subcommand ({})", c.method.join(","))));
        }
    }
    if c.out.is_some() {
        spec.run.out = c.out.clone();
    }
    spec.run.trace |= c.trace;
    spec.validate()?;
    Ok(spec)
}

fn print_report(report: &Report) {
    println!(
        "{:<16} {:>5} {:>12} {:>12} {:>9} {:>9} {:>9} {:>7}",
        "method", "runs", "mean_util", "median_util", "p5_Mbps", "p50_Mbps", "p95_Mbps", "pico%"
    );
    for s in &report.summary {
        println!(
            "{:<16} {:>5} {:>12.3} {:>12.3} {:>9.4} {:>9.4} {:>9.4} {:>7.1}",
            s.method.to_string(),
            s.runs,
            s.mean_utility,
            s.median_utility,
            s.rate_p5_mbps,
            s.rate_p50_mbps,
            s.rate_p95_mbps,
            100.0 * s.pico_user_share
        );
    }
    for r in &report.runs {
        for w in &r.warnings {
            eprintln!("warning: seed {} {}: {w}", r.seed, r.method);
        }
    }
}

fn experiment(c: &Common, family: MethodFamily, defaults: &[Method]) -> CliResult<()> {
    let spec = build_spec(c, Some(family), defaults)?;
    let report = run_experiment(&spec)?;
    print_report(&report);
    fail_on_seeds(&report)
}

fn fail_on_seeds(report: &Report) -> CliResult<()> {
    if report.failures.is_empty() {
        return Ok(());
    }
    for f in &report.failures {
        let m = f.method.map(|m| m.to_string()).unwrap_or_else(|| "instance".into());
        eprintln!("error: seed {} {m}: {}", f.seed, f.error);
    }
    Err(Failure::Runtime(format!("{} run(s) failed", report.failures.len())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    write_atomic(&dir.join(name), &bytes)?;
    Ok(())
}

fn gen(c: &Common) -> CliResult<()> {
    let spec = build_spec(c, None, &[])?;
    for &seed in &spec.run.seeds {
        let inst = gen_topology(&spec.scenario.clone().with_seed(seed))?;
        let json = inst.to_json()?;
        match &spec.run.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
                write_atomic(&dir.join(format!("instance_{seed}.json")), json.as_bytes())?;
                println!("seed {seed}: K = {}, L = {}", inst.num_users, inst.num_bs);
            }
            None => println!("{json}"),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleRow {
    seed: u64,
    oracle_utility: f64,
    dcd_utility: f64,
    dcd_gap_bound: f64,
    certificate_holds: bool,
    joint_oracle_utility: Option<f64>,
    joint_dcd_utility: Option<f64>,
    direct_dual_utility: Option<f64>,
}

fn oracle(c: &Common, grid: usize) -> CliResult<()> {
    let mut c = c.clone();
    c.method.clear();
    let mut spec = build_spec(&c, None, &[])?;
    if c.config.is_none() {
        spec.scenario = tiny_scenario();
    }
    spec.scenario.validate()?;
    let mut rows = Vec::new();
    println!("{:>6} {:>12} {:>12} {:>10} {:>12} {:>12} {:>12}", "seed", "oracle", "dcd", "gap_bound", "joint_oracle", "joint_dcd", "direct_dual");
    for &seed in &spec.run.seeds {
        let inst = gen_topology(&spec.scenario.clone().with_seed(seed))?;
        let a = inst.utility_matrix(&inst.full_power(), false);
        let (best, _) = exhaustive_oracle(&a)?;
        let dcd = dcd_solve(&a, &spec.dcd)?;
        let u = dcd.utility(&a);
        let gap = dcd.gap_bound();
        let mut row = OracleRow {
            seed,
            oracle_utility: best,
            dcd_utility: u,
            dcd_gap_bound: gap,
            certificate_holds: u >= best - gap - 1e-9,
            joint_oracle_utility: None,
            joint_dcd_utility: None,
            direct_dual_utility: None,
        };
        if let Ok((ju, _, _)) = joint_brute_oracle(&inst, grid, &spec.newton) {
            row.joint_oracle_utility = Some(ju);
            row.joint_dcd_utility = Some(run_method(&inst, seed, Method::JointDcd, &spec, false)?.solver_utility);
            row.direct_dual_utility = Some(run_method(&inst, seed, Method::DirectDual, &spec, false)?.solver_utility);
        }
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        println!(
            "{seed:>6} {best:>12.6} {u:>12.6} {gap:>10.6} {:>12} {:>12} {:>12}",
            f(row.joint_oracle_utility),
            f(row.joint_dcd_utility),
            f(row.direct_dual_utility)
        );
        rows.push(row);
    }
    if let Some(dir) = &spec.run.out {
        write_json(dir, "oracle.json", &rows)?;
    }
    let bad = rows.iter().filter(|r| !r.certificate_holds).count();
    if bad > 0 {
        return Err(Failure::Runtime(format!("gap certificate violated on {bad} seed(s)")));
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    seed: u64,
    method: Method,
    seconds: f64,
    utility: f64,
}

fn bench(c: &Common) -> CliResult<()> {
    let mut spec = build_spec(c, None, &[])?;
    if c.method.is_empty() && c.config.is_none() {
        spec.run.methods = vec![Method::MaxSinr, Method::Dcd, Method::Subgradient, Method::JointDcd];
    }
    let mut rows = Vec::new();
    for &seed in &spec.run.seeds {
        let t = Instant::now();
        let inst = gen_topology(&spec.scenario.clone().with_seed(seed))?;
        println!("seed {seed:<4} {:<16} {:>10.3} ms", "gen", 1e3 * t.elapsed().as_secs_f64());
        for &m in &spec.run.methods {
            let rec = run_method(&inst, seed, m, &spec, false)?;
            println!("seed {seed:<4} {:<16} {:>10.3} ms  utility {:.4}", m.to_string(), 1e3 * rec.elapsed_s, rec.solver_utility);
            rows.push(BenchRow { seed, method: m, seconds: rec.elapsed_s, utility: rec.solver_utility });
        }
    }
    for &m in &spec.run.methods {
        let times: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.seconds).collect();
        println!("mean {:<16} {:>10.3} ms", m.to_string(), 1e3 * times.iter().sum::<f64>() / times.len() as f64);
    }
    if let Some(dir) = &spec.run.out {
        write_json(dir, "bench.json", &rows)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Gen(c) => gen(c),
        Command::Assoc(c) => experiment(c, MethodFamily::FixedPower, &[Method::MaxSinr, Method::Dcd]),
        Command::Joint(c) => experiment(c, MethodFamily::Joint, &[Method::JointDcd, Method::JointMaxSinr, Method::DirectDual]),
        Command::Mimo(c) => experiment(
            c,
            MethodFamily::Mimo,
            &[Method::TwoStage(4), Method::TwoStage(6), Method::TwoStage(8), Method::MaxSinrWmmse],
        ),
        Command::Oracle { common, grid } => oracle(common, *grid),
        Command::Bench(c) => bench(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
