use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlvr_core::Algorithm;
use rlvr_expcli::config::{ExperimentConfig, Format};
use rlvr_expcli::diagnose::{self, ThetaSource};
use rlvr_expcli::instance;
use rlvr_expcli::runner::{self, RunError};
use rlvr_expcli::{sweep, verify, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, EXIT_VIOLATION};

/// Policy-gradient experiments on log-linear softmax policies with
/// verifiable rewards.
#[derive(Parser)]
#[command(name = "rlvr-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write its CSV, JSON summary and plots.
    Run(RunArgs),
    /// Run every algorithm over a list of seeds and compare them pairwise.
    Sweep(SweepArgs),
    /// Report gradient geometry and curvature bounds at one θ.
    Diagnose(DiagnoseArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
    /// Write the scenario built from a config as an instance JSON file.
    ExportInstance(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Svg => Format::Svg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Reinforce,
    Grpo,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Reinforce => Algorithm::Reinforce,
            AlgorithmArg::Grpo => Algorithm::Grpo,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` and $RLVR_LAB_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides both the scenario and the prompt-selection seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated artifact formats.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Option<Vec<FormatArg>>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated seeds or ranges, e.g. `0..10` or `1,4,7..=9`.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "reinforce,grpo")]
    algorithms: Vec<AlgorithmArg>,
    /// Also print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, conflicts_with = "instance", required_unless_present = "instance")]
    config: Option<PathBuf>,
    /// Instance JSON; diagnostics use default settings.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "initial")]
    theta: ThetaSource,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated criterion ids; all when omitted.
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u8>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    config: PathBuf,
    /// Destination file.
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("bad seed `{s}` in `{spec}`"));
        if let Some((a, b)) = part.split_once("..=") {
            seeds.extend(num(a)?..=num(b)?);
        } else if let Some((a, b)) = part.split_once("..") {
            seeds.extend(num(a)?..num(b)?);
        } else {
            seeds.push(num(part)?);
        }
    }
    Ok(seeds)
}

fn load(common: &Common) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.clone());
    }
    Ok(cfg)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable report")
}

fn cmd_run(args: RunArgs) -> Result<i32, RunError> {
    let mut cfg = load(&args.common)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(f) = args.format {
        cfg.output.formats = f.into_iter().map(Format::from).collect();
        cfg.output.formats.sort();
        cfg.output.formats.dedup();
    }
    let art = runner::run(&cfg)?;
    let dir = cfg.output_dir();
    let written = art.write_to(&dir)?;
    let s = &art.summary;
    println!(
        "{} T={} eta={:.6e}: J_mean {:.6} -> {:.6}, iterations to {} {}",
        cfg.trainer.algorithm.name(),
        s.horizon,
        s.eta,
        s.initial_mean_objective,
        s.final_mean_objective,
        s.threshold,
        s.iterations_to_threshold.map_or_else(|| "unreached".into(), |t| t.to_string())
    );
    if let Some(c) = &s.cumulative {
        println!("cumulative bound: {}", if c.all_passed { "holds for every prompt" } else { "fails for some prompt" });
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32, RunError> {
    let cfg = load(&args.common)?;
    let seeds = parse_seeds(&args.seeds).map_err(RunError::Usage)?;
    let algorithms: Vec<Algorithm> = args.algorithms.into_iter().map(Algorithm::from).collect();
    let out = cfg.output_dir();
    let summary = sweep::sweep(&cfg, &seeds, &algorithms, Some(&out))?;
    let path = out.join("sweep.json");
    let body = json(&summary) + "\n";
    std::fs::write(&path, &body).map_err(|source| RunError::Io { path: path.clone(), source })?;
    print!("{}", sweep::render_table(&summary));
    if args.json {
        print!("{body}");
    }
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn instance_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let src = "[scenario]\ngenerator = \"instance\"\npath = \"instance.json\"\n\n[trainer]\nalgorithm = \"grpo\"\n";
    let mut cfg = ExperimentConfig::parse(src, "<instance defaults>")?;
    cfg.scenario.path = Some(path.to_path_buf());
    Ok(cfg)
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<i32, RunError> {
    let cfg = match (&args.config, &args.instance) {
        (Some(c), _) => ExperimentConfig::from_path(c)?,
        (None, Some(p)) => instance_config(p)?,
        (None, None) => return Err(RunError::Usage("diagnose needs --config or --instance".into())),
    };
    let sc = instance::build_scenario(&cfg.scenario)?;
    let report = diagnose::diagnose(&cfg, &sc, args.theta)?;
    if args.json {
        println!("{}", json(&report));
    } else {
        let a = &report.assumptions;
        println!("n={} K={} d={} X_max={:.6}", sc.features.n(), sc.features.k(), sc.features.d(), sc.features.x_max());
        println!(
            "gradient cosines: mean {:.4}, std {:.4}, |cos|<0.1 {:.3}, positive {:.3}, phase {:?}",
            a.cos_mean, a.cos_std, a.frac_abs_below_0p1, a.frac_positive, a.phase
        );
        println!(
            "interference: {:?}, M = {}, violations {}",
            report.m_bound.status,
            report.m_bound.m_hat.map_or_else(|| "n/a".into(), |m| format!("{m:.4}")),
            report.m_bound.violations.len()
        );
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        println!("scale regularity: R1 = {}, R2 = {}", show(report.scale.r1_hat), show(report.scale.r2_hat));
        println!("{:>6} {:>10} {:>12} {:>12} {:>12} {:>12}", "prompt", "V", "|H|", "4X²V", "|g|", "ball max");
        for r in &report.lemma {
            println!(
                "{:>6} {:>10.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                r.prompt, r.variance, r.hessian_norm, r.hessian_bound, r.grad_norm, r.ball_hessian_max
            );
        }
        println!("curvature bounds {}", if report.lemma_all_hold { "hold" } else { "VIOLATED" });
    }
    Ok(if report.has_violations() { EXIT_VIOLATION } else { EXIT_OK })
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, RunError> {
    let report = verify::verify(&args.criteria).map_err(|id| RunError::Usage(format!("unknown criterion {id}")))?;
    if args.json {
        println!("{}", json(&report));
    } else {
        print!("{}", report.render_table());
    }
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_export(args: ExportArgs) -> Result<i32, RunError> {
    let cfg = ExperimentConfig::from_path(&args.config)?;
    let sc = instance::build_scenario(&cfg.scenario)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| RunError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(&args.out, instance::instance_json(&sc))
        .map_err(|source| RunError::Io { path: args.out.clone(), source })?;
    println!("wrote {}", args.out.display());
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Verify(a) => cmd_verify(a),
        Command::ExportInstance(a) => cmd_export(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rlvr-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("1,4,7..=9").unwrap(), vec![1, 4, 7, 8, 9]);
        assert!(parse_seeds("a").is_err());
    }
}
