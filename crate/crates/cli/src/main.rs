//! `segfuse` — batch workflows over the library: prior-map encoding,
//! feature fusion with snapshots, KITTI-style evaluation and gradient
//! verification.
//!
//! Exit codes: 0 success, 1 check failure, 2 data error, 64 usage error.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use segfuse_core::eval::IouConfigId;
use segfuse_core::fusion::{FusionPoint, FusionStrategy};

#[derive(Parser)]
#[command(name = "segfuse", version, about = "Segmentation-prior fusion and KITTI-style 3D detection evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_strategy(s: &str) -> Result<FusionStrategy, String> {
    s.parse().map_err(|_| format!("expected one of multiply, concat, attention; got `{s}`"))
}

fn parse_point(s: &str) -> Result<FusionPoint, String> {
    s.parse().map_err(|_| format!("expected one of after_dla, during_dla, heads_only; got `{s}`"))
}

fn parse_iou_config(s: &str) -> Result<IouConfigId, String> {
    match s {
        "primary" => Ok(IouConfigId::Primary),
        "secondary" => Ok(IouConfigId::Secondary),
        other => Err(format!("expected primary or secondary, got `{other}`")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Flatten per-frame instance masks into grayscale prior maps (PGM).
    ///
    /// The masks directory holds one `<frame>.txt` manifest per frame; each
    /// manifest line is `<class> <mask-file>` with the mask path relative to
    /// the masks directory.
    EncodePriors {
        #[arg(long)]
        masks: PathBuf,
        /// Output directory, one `<frame>.pgm` per frame.
        #[arg(long)]
        out: PathBuf,
        /// Optional override of the gray intensities: `<class> <value>`
        /// lines, classes Car, Pedestrian, Cyclist.
        #[arg(long)]
        intensity_table: Option<PathBuf>,
    },
    /// Run the fusion pipeline on one image (binary PPM) and its prior map
    /// (binary PGM); write the 3D-head tensor snapshot plus a JSON report
    /// with per-stage timings.
    Fuse {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: FusionStrategy,
        #[arg(long, value_parser = parse_point)]
        point: FusionPoint,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Snapshot path; the report is written next to it as `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate KITTI-format detections against ground truth and write
    /// text, CSV and JSON reports.
    Eval {
        /// Ground-truth directory (either `label_2/` inside it or the label
        /// files directly).
        #[arg(long)]
        gt: PathBuf,
        /// Detection directory, one 16-field `<frame>.txt` per frame.
        #[arg(long)]
        det: PathBuf,
        /// Restrict the report to one IoU configuration (default: both).
        #[arg(long, value_parser = parse_iou_config)]
        iou_config: Option<IouConfigId>,
        /// JSON report path; CSV and text reports are written with swapped
        /// extensions.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients of every kernel and fusion strategy
    /// against central finite differences; non-zero exit if any check is at
    /// or above 1e-4.
    Gradcheck {
        /// Randomized trials per kernel.
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// SLAM3D_THREADS caps the per-frame worker count.
fn init_thread_pool() {
    if let Ok(value) = std::env::var("SLAM3D_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_thread_pool();
    let result = match cli.command {
        Command::EncodePriors { masks, out, intensity_table } => {
            commands::encode_priors::run(&masks, &out, intensity_table.as_deref())
        }
        Command::Fuse { image, prior, strategy, point, seed, out } => {
            commands::fuse::run(&image, &prior, strategy, point, seed, &out)
        }
        Command::Eval { gt, det, iou_config, out } => commands::eval::run(&gt, &det, iou_config, &out),
        Command::Gradcheck { trials, seed } => commands::gradcheck::run(trials, seed),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
