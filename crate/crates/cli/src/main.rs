use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand};
use hrgsdp::baselines::BaselineMethod;
use hrgsdp::pipeline::{self, RunConfig, CONFIG_KEYS};
use hrgsdp::{Error, ErrorKind};

fn key_help() -> &'static str {
    static HELP: OnceLock<String> = OnceLock::new();
    HELP.get_or_init(|| {
        let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::from("Configuration keys (config file lines or --set key=value):\n");
        for (k, doc) in CONFIG_KEYS {
            out.push_str(&format!("  {k:width$}  {doc}\n"));
        }
        out.push_str("\nExit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.");
        out
    })
}

#[derive(Parser, Debug)]
#[command(name = "hrgsdp", version, about = "Spatial Bayesian clustering of gray-level co-occurrence matrices")]
#[command(after_help = key_help())]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// key=value configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_pair)]
    set: Vec<(String, String)>,
    /// Shorthand for --set profile=...
    #[arg(long, global = true, value_name = "desk|full")]
    profile: Option<String>,
    /// Shorthand for --set seed=...
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantize images and build one GLCM per image
    BuildGlcm {
        /// CSV list with columns id,image,mask,label
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse bin edges written by an earlier run
        #[arg(long)]
        bins: Option<PathBuf>,
    },
    /// Run the Gibbs sampler and write the trace, surfaces and diagnostics
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ward clustering of posterior mean surfaces with KL-based cluster count
    Cluster {
        #[arg(long)]
        surfaces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a labelled cohort of GLCMs
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature-based baseline partition (hc, km or gmm)
    Baseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a partition against true labels
    Evaluate {
        #[arg(long)]
        partition: PathBuf,
        /// Labelled manifest or id,label file
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-tabulate two partitions of the same subjects
    Crosstab {
        /// Partition shown as table rows
        #[arg(long)]
        rows: PathBuf,
        /// Partition shown as table columns
        #[arg(long)]
        cols: PathBuf,
        #[arg(long, default_value = "rows")]
        row_name: String,
        #[arg(long, default_value = "cols")]
        col_name: String,
        /// Labels used to count flagged subjects per cell
        #[arg(long, requires = "flag_label")]
        truth: Option<PathBuf>,
        /// Label value counted as flagged
        #[arg(long, requires = "truth")]
        flag_label: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicated simulation study over every scale in s_values
    Replicate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration
    Config,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn config(opts: &GlobalOpts) -> hrgsdp::Result<RunConfig> {
    let mut pairs = Vec::new();
    if let Some(p) = &opts.profile {
        pairs.push(("profile".to_string(), p.clone()));
    }
    if let Some(s) = opts.seed {
        pairs.push(("seed".to_string(), s.to_string()));
    }
    pairs.extend(opts.set.iter().cloned());
    RunConfig::load(opts.config.as_deref(), &pairs)
}

fn run(cli: Cli) -> hrgsdp::Result<()> {
    let cfg = config(&cli.global)?;
    log::info!("config hash {}", cfg.hash());
    match cli.command {
        Command::BuildGlcm { images, out, bins } => {
            let (manifest, _) = pipeline::build_glcm_command(&images, &out, bins.as_deref(), &cfg)?;
            println!("wrote {} matrices to {}", manifest.entries.len(), out.display());
        }
        Command::Fit { manifest, out } => {
            let (fit, _) = pipeline::fit_command(&manifest, &out, &cfg)?;
            for (name, z) in &fit.geweke {
                match z {
                    Some(z) => println!("geweke {name} {z:.3}"),
                    None => println!("geweke {name} NA"),
                }
            }
        }
        Command::Cluster { surfaces, out } => {
            let (_, clustered) = pipeline::cluster_command(&surfaces, &out, &cfg)?;
            println!("kl rank {}, clusters {}", clustered.report.rank, clustered.partition.groups());
        }
        Command::Simulate { out } => {
            let cohort = pipeline::simulate_command(&out, &cfg)?;
            println!("wrote {} matrices to {}", cohort.matrices.len(), out.display());
        }
        Command::Baseline { manifest, method, out } => {
            let method: BaselineMethod = method.parse()?;
            let p = pipeline::baseline_command(&manifest, method, &out, &cfg)?;
            println!("{} clusters {}", method.name(), p.groups());
        }
        Command::Evaluate { partition, truth, out } => {
            let ev = pipeline::evaluate_command(&partition, &truth, &out, &cfg)?;
            println!("misassignment {:.4} chi2 {:.4}", ev.misassignment, ev.chi2);
        }
        Command::Crosstab { rows, cols, row_name, col_name, truth, flag_label, out } => {
            let flag = truth.as_deref().zip(flag_label);
            let t = pipeline::crosstab_command(&rows, &cols, flag, (&row_name, &col_name), &out, &cfg)?;
            println!("{} x {} table written to {}", t.row_labels.len(), t.col_labels.len(), out.display());
        }
        Command::Replicate { out } => {
            let result = pipeline::replicate_study(&cfg);
            pipeline::write_study(&result, &out, &cfg)?;
            println!("{} rows, {} failures", result.rows.len(), result.failures.len());
        }
        Command::Config => {
            for (k, v) in cfg.to_pairs() {
                println!("{k}={v}");
            }
            println!("# config_hash={}", cfg.hash());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
