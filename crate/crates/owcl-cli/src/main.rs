use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use owcl_cli::config::{
    ablation_methods, parse_config, strategy_methods, validate_config, ExperimentConfig,
};
use owcl_cli::runner::{reaggregate, run_experiment};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "owcl",
    about = "Open-world continual learning experiments on synthetic multimodal streams",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (key = value lines); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Run only this seed (overrides the config seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Parallel worker threads for grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Write per-sample score dumps and score histograms.
    #[arg(long, global = true, default_value_t = false)]
    dump_scores: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and write it to <out>/dataset.owcl.
    Generate,
    /// Run the configured method x setting x seed grid.
    Run,
    /// Run the module-ablation preset (full framework, scoring-only,
    /// training-only, plain replay).
    Ablate,
    /// Run the scoring-strategy preset (adaptive vs fixed weights).
    Strategies,
    /// Re-aggregate an existing metrics.csv in the output directory.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => validate_config(path)?,
        None => parse_config("").expect("defaults are valid"),
    };
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if cli.dump_scores {
        config.dump_scores = true;
    }
    Ok(config)
}

fn print_summary(output: &owcl_cli::runner::ExperimentOutput) {
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", output.out_dir.join("metrics.csv").display());
    println!("wrote {}", output.out_dir.join("significance.csv").display());
    println!("wrote {}", output.out_dir.join("losses.csv").display());
    println!("wrote {}", output.out_dir.join("manifest.txt").display());
    // Headline rows: per-method seed means.
    for row in &output.metrics_rows {
        if row.seed == "mean" {
            println!(
                "inc {:>2} {:>32}  AUC_T {}  FPR95_T {}  ACC_T {}  FGT_T {}",
                row.setting,
                format!("{}+{}", row.method, row.strategy),
                row.auc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                row.fpr95.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                row.acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                row.fgt.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            );
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate => {
            let config = load_config(&cli)?;
            let data = owcl::datagen::generate(&config.gen).context("generating dataset")?;
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("dataset.owcl");
            data.save(&path)?;
            println!(
                "wrote {} ({} samples, {} classes, {} modalities)",
                path.display(),
                data.samples.len(),
                data.num_classes,
                data.modality_dims.len()
            );
        }
        Command::Run => {
            let config = load_config(&cli)?;
            std::fs::create_dir_all(&cli.out)?;
            let output = run_experiment(&config, &cli.out, cli.jobs)?;
            print_summary(&output);
        }
        Command::Ablate => {
            let mut config = load_config(&cli)?;
            config.methods = ablation_methods();
            std::fs::create_dir_all(&cli.out)?;
            let output = run_experiment(&config, &cli.out, cli.jobs)?;
            print_summary(&output);
        }
        Command::Strategies => {
            let mut config = load_config(&cli)?;
            config.methods = strategy_methods();
            std::fs::create_dir_all(&cli.out)?;
            let output = run_experiment(&config, &cli.out, cli.jobs)?;
            print_summary(&output);
        }
        Command::Report => {
            let path = cli.out.join("metrics.csv");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let rebuilt = reaggregate(&text)?;
            let out_path = cli.out.join("metrics_reaggregated.csv");
            std::fs::write(&out_path, &rebuilt)?;
            println!("wrote {}", out_path.display());
            for line in rebuilt.lines().filter(|l| l.contains(",mean,")) {
                println!("{line}");
            }
        }
    }
    Ok(())
}
