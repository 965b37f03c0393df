//! `segfuse fuse`: run the pipeline on one aligned image/prior pair and
//! snapshot the 3D-head tensor, with a timing/memory report alongside.

use std::fs;
use std::path::Path;

use segfuse_core::fusion::{run_pipeline, FusionConfig, FusionPoint, FusionStrategy};
use segfuse_core::netpbm::read_p6;
use segfuse_core::prior::read_pgm;
use segfuse_core::tensor::write_snapshot;

use crate::manifest::{write_atomic, ManifestBuilder};

use super::{rgb_to_tensor, CliError};

pub fn run(
    image_path: &Path,
    prior_path: &Path,
    strategy: FusionStrategy,
    point: FusionPoint,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = FusionConfig { strategy, point, seed, ..Default::default() };
    let builder = ManifestBuilder::new(
        "fuse",
        &format!(
            "image={} prior={} strategy={strategy} point={point} seed={seed} out_channels={} eps={}",
            image_path.display(),
            prior_path.display(),
            cfg.out_channels,
            cfg.eps
        ),
        &[image_path, prior_path],
        seed,
    );

    let mut image_file = fs::File::open(image_path)
        .map_err(|e| CliError::Data(format!("cannot open image `{}`: {e}", image_path.display())))?;
    let rgb = read_p6(&mut image_file)
        .map_err(|e| CliError::Data(format!("bad image `{}`: {e}", image_path.display())))?;
    let image = rgb_to_tensor(&rgb);

    let mut prior_file = fs::File::open(prior_path)
        .map_err(|e| CliError::Data(format!("cannot open prior `{}`: {e}", prior_path.display())))?;
    let prior = read_pgm(&mut prior_file)
        .map_err(|e| CliError::Data(format!("bad prior `{}`: {e}", prior_path.display())))?;

    let run = run_pipeline(&image, &prior, &cfg).map_err(CliError::data)?;

    let mut snapshot = Vec::new();
    write_snapshot(&mut snapshot, &run.heads.slot_3d).map_err(CliError::data)?;
    write_atomic(out, &snapshot).map_err(CliError::data)?;

    let manifest = builder.finish();
    let report = serde_json::json!({
        "manifest": manifest,
        "config": cfg,
        "fuse_calls": run.fuse_calls,
        "output_shape": run.heads.slot_3d.shape(),
        "probe": run.probe,
    });
    let mut report_path = out.as_os_str().to_owned();
    report_path.push(".json");
    write_atomic(
        Path::new(&report_path),
        serde_json::to_string_pretty(&report).expect("report serialization").as_bytes(),
    )
    .map_err(CliError::data)?;
    Ok(())
}
