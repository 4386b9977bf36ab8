use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mbsr_core::config::RunConfig;
use mbsr_core::grid::{load_grid, GridFormat};
use mbsr_core::pipeline::{Pipeline, Stage, StageError};
use mbsr_core::render::{render_heatmap, Palette};
use mbsr_core::Error;

/// Multi-compound super-resolution of gridded emission maps.
///
/// Settings come from the `--config` file, then `MBSR_*` environment
/// variables (`MBSR_TRAIN__MAX_ITERS=500` sets `train.max_iters`), then flags.
#[derive(Parser)]
#[command(name = "mbsr", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for generation, splitting, initialization and batching.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-compound archive into the grid directory.
    Synth,
    /// Inter-connection matrix (SSIM and PCC) of every compound.
    Analyze,
    /// Slice patches and fit per-compound transforms on the training split.
    FitTransforms,
    /// Assemble stacked samples and record the split.
    MakeDataset,
    /// Train the network and write the checkpoint and history.
    Train,
    /// Score the checkpoint and the bicubic baseline on the test split.
    Evaluate,
    /// Every stage from fit-transforms to render, plus the run manifest.
    Run,
    /// Figures for the worst and best test samples, or a heatmap of one grid file.
    Render {
        /// Grid file (.bgrid or .csv) to draw instead of the test figures.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// `sequential` or `diverging`.
        #[arg(long, default_value = "sequential")]
        palette: String,
        /// Value range `lo,hi`; defaults to the grid's min and max.
        #[arg(long)]
        range: Option<String>,
    },
}

fn render_grid(dir: &Path, grid: &Path, palette: &str, range: Option<&str>) -> mbsr_core::Result<PathBuf> {
    let format = GridFormat::from_path(grid)
        .ok_or_else(|| Error::InvalidArgument(format!("{}: unknown grid extension", grid.display())))?;
    let g = load_grid(grid, format)?;
    let palette: Palette = palette.parse()?;
    let range = match range {
        None => (g.values().min(), g.values().max()),
        Some(s) => {
            let bad = || Error::InvalidArgument(format!("range {s:?}: expected lo,hi"));
            let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
            (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?)
        }
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let stem = grid.file_stem().map_or("grid".into(), |s| s.to_string_lossy().into_owned());
    let out = dir.join(format!("{}_{stem}.ppm", g.compound()));
    render_heatmap(g.values(), &out, palette, range)?;
    Ok(out)
}

fn execute(cli: Cli) -> Result<(), StageError> {
    let mut overrides = Vec::new();
    if let Some(seed) = cli.seed {
        overrides.push(("seed", seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("paths.out", out.display().to_string()));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), std::env::vars(), &overrides)
        .map_err(|source| StageError { stage: Stage::Config, source })?;
    let log = |msg: &str| eprintln!("{msg}");
    let p = Pipeline::new(cfg, &log);
    match cli.command {
        Command::Synth => p.synth().map(drop),
        Command::Analyze => p.analyze().map(drop),
        Command::FitTransforms => p.fit_transforms().map(drop),
        Command::MakeDataset => p.make_dataset().map(drop),
        Command::Train => p.train().map(drop),
        Command::Evaluate => p.evaluate().map(drop),
        Command::Run => p.run().map(drop),
        Command::Render { grid: None, .. } => p.render().map(drop),
        Command::Render { grid: Some(grid), palette, range } => {
            let path = render_grid(&p.layout.figures(), &grid, &palette, range.as_deref())
                .map_err(|source| StageError { stage: Stage::Render, source })?;
            eprintln!("render: {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
