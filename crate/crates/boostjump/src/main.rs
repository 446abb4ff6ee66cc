//! Command-line surface: train, evaluate, replay and ablate cooperative
//! jumping policies. Every run writes plain CSV artifacts into a run
//! directory (config.snapshot, stats.csv, events.csv, checkpoints/,
//! eval/); `--plot` additionally renders SVG line charts of the training
//! statistics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use boostjump::config::RunConfig;
use boostjump::evalkit::{self, AblationVariant, MetricsReport};
use boostjump::marl::checkpoint::{load_checkpoint, Checkpoint};
use boostjump::marl::trainer::train;

#[derive(Parser)]
#[command(
    name = "boostjump",
    about = "Cooperative two-robot jumping: planar simulation and multi-agent PPO training"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Train a policy pair and stream run artifacts to the output directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint over a seeded episode batch.
    Eval(EvalArgs),
    /// Replay one deterministic episode to a trajectory CSV.
    Replay(ReplayArgs),
    /// Train an ablation variant and compare it against its untrained baseline.
    Ablate(AblateArgs),
}

#[derive(Parser)]
struct TrainArgs {
    /// Configuration file (INI-style key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory (overrides the config's `out` key).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Render SVG line charts of the stats.csv columns after training.
    #[arg(long, default_value_t = false)]
    plot: bool,
}

#[derive(Parser)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Episodes per seed.
    #[arg(long)]
    episodes: Option<usize>,
    /// First evaluation seed; the config's seed list is used when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the eval/<name>.csv report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Parser)]
struct ReplayArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Output CSV path (default: replay_<seed>.csv in the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Parser)]
struct AblateArgs {
    /// One of: full, no_gravity, no_init.
    #[arg(long)]
    variant: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Commands::Train(a) => cmd_train(a),
        Commands::Eval(a) => cmd_eval(a),
        Commands::Replay(a) => cmd_replay(a),
        Commands::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, Box<dyn std::error::Error>> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn load_ckpt(path: &Path) -> Result<Checkpoint, Box<dyn std::error::Error>> {
    if !path.exists() {
        return Err(format!("checkpoint not found: {}", path.display()).into());
    }
    Ok(load_checkpoint(path)?)
}

fn resolve_out(flag: Option<PathBuf>, cfg: &RunConfig, fallback: &str) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let out = resolve_out(a.out, &cfg, &format!("run_seed{}", cfg.train.seed));
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.snapshot"), cfg.snapshot())?;
    println!("training into {} ...", out.display());
    let trainer = train(cfg.train.clone(), Some(&out))?;
    println!(
        "done: {} iterations, {} env steps, final checkpoint checkpoints/iter_{}.ckpt",
        trainer.iteration(),
        trainer.env_steps(),
        trainer.iteration()
    );
    if a.plot {
        let plots = plot_stats(&out.join("stats.csv"), &out.join("plots"))?;
        println!("wrote {plots} SVG charts to {}/plots", out.display());
    }
    Ok(())
}

fn eval_seeds(a_seed: Option<u64>, cfg: &RunConfig) -> Vec<u64> {
    match a_seed {
        Some(s) => vec![s],
        None => cfg.eval_seeds.clone(),
    }
}

fn write_report(dir: &Path, name: &str, report: &MetricsReport) -> std::io::Result<PathBuf> {
    let eval_dir = dir.join("eval");
    std::fs::create_dir_all(&eval_dir)?;
    let path = eval_dir.join(format!("{name}.csv"));
    let header: String = MetricsReport::csv_header()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    std::fs::write(&path, format!("{header}\n{}\n", report.csv_row()))?;
    Ok(path)
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let ckpt = load_ckpt(&a.checkpoint)?;
    let episodes = a.episodes.unwrap_or(cfg.eval_episodes);
    let seeds = eval_seeds(a.seed, &cfg);
    let report = evalkit::evaluate(&ckpt, &cfg.train.env, &cfg.train.curriculum, episodes, &seeds);
    println!("{}", report.text_table("checkpoint"));
    let out = resolve_out(a.out, &cfg, ".");
    let path = write_report(&out, "checkpoint", &report)?;
    println!("report written to {}", path.display());
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let ckpt = load_ckpt(&a.checkpoint)?;
    let path = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("replay_{}.csv", a.seed)));
    let report = evalkit::replay(&ckpt, &cfg.train.env, &cfg.train.curriculum, a.seed, &path)?;
    println!("{}", report.text_table(&format!("replay seed {}", a.seed)));
    println!("trajectory written to {}", path.display());
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> CliResult {
    let variant = AblationVariant::parse(&a.variant)
        .ok_or_else(|| format!("unknown variant `{}` (use full, no_gravity or no_init)", a.variant))?;
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let episodes = a.episodes.unwrap_or(cfg.eval_episodes);
    let out = resolve_out(a.out, &cfg, &format!("ablate_{}", a.variant));
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.snapshot"), cfg.snapshot())?;
    println!("training variant `{}` into {} ...", variant.label(), out.display());
    let (trained, baseline) = evalkit::ablation_run(
        variant,
        cfg.train.clone(),
        episodes,
        &cfg.eval_seeds,
        Some(&out),
    )?;
    println!("{}", trained.text_table(variant.label()));
    println!("{}", baseline.text_table("untrained baseline"));
    write_report(&out, "trained", &trained)?;
    write_report(&out, "baseline", &baseline)?;
    Ok(())
}

/// Render one SVG line chart per numeric stats.csv column (x = iteration).
/// Returns the number of charts written.
fn plot_stats(stats_csv: &Path, out_dir: &Path) -> std::io::Result<usize> {
    let text = std::fs::read_to_string(stats_csv)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        let row: Option<Vec<f64>> = line.split(',').map(|v| v.parse().ok()).collect();
        if let Some(r) = row {
            if r.len() == header.len() {
                rows.push(r);
            }
        }
    }
    if rows.is_empty() {
        return Ok(0);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut n = 0;
    for (col, name) in header.iter().enumerate().skip(1) {
        let ys: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        std::fs::write(out_dir.join(format!("{name}.svg")), line_chart(name, &xs, &ys))?;
        n += 1;
    }
    Ok(n)
}

fn line_chart(title: &str, xs: &[f64], ys: &[f64]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const M: f64 = 45.0; // margin around the plot area
    let (x0, x1) = bounds(xs);
    let (y0, y1) = bounds(ys);
    let sx = |x: f64| M + (x - x0) / (x1 - x0).max(1e-12) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0).max(1e-12) * (H - 2.0 * M);
    let points: String = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.1},{:.1} ", sx(x), sy(y)))
        .collect();
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{tx}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>
<line x1="{M}" y1="{by}" x2="{rx}" y2="{by}" stroke="black"/>
<line x1="{M}" y1="{M}" x2="{M}" y2="{by}" stroke="black"/>
<text x="{M}" y="{ly}" font-family="sans-serif" font-size="10">{y0:.4}</text>
<text x="{M}" y="{my}" font-family="sans-serif" font-size="10">{y1:.4}</text>
<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{points}"/>
</svg>
"#,
        tx = W / 2.0,
        by = H - M,
        rx = W - M,
        ly = H - M + 14.0,
        my = M - 6.0,
    )
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
