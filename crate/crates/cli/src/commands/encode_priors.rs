//! `segfuse encode-priors`: flatten externally produced instance masks into
//! one grayscale prior map per frame.

use std::fs;
use std::path::Path;

use segfuse_core::kitti::TargetClass;
use segfuse_core::prior::{encode_semantic_map_with, write_pgm, InstanceMask, IntensityTable};

use crate::manifest::{write_atomic, ManifestBuilder};

use super::CliError;

fn parse_intensity_table(text: &str, path: &Path) -> Result<IntensityTable, CliError> {
    let mut table = IntensityTable::default();
    let mut seen = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| CliError::Data(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let (class, value) = line.split_once(char::is_whitespace).ok_or_else(|| bad("expected `<class> <value>`"))?;
        let class: TargetClass = class.trim().parse().map_err(|_| bad("class must be Car, Pedestrian or Cyclist"))?;
        let value: u8 = value.trim().parse().map_err(|_| bad("value must be an integer in 0..=255"))?;
        if seen.contains(&class) {
            return Err(bad("duplicate class"));
        }
        seen.push(class);
        match class {
            TargetClass::Car => table.car = value,
            TargetClass::Pedestrian => table.pedestrian = value,
            TargetClass::Cyclist => table.cyclist = value,
        }
    }
    table
        .validate()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(table)
}

fn frame_manifests(masks_dir: &Path) -> Result<Vec<(String, std::path::PathBuf)>, CliError> {
    let mut manifests = Vec::new();
    let entries = fs::read_dir(masks_dir)
        .map_err(|e| CliError::Data(format!("cannot read masks directory `{}`: {e}", masks_dir.display())))?;
    for entry in entries {
        let path = entry.map_err(CliError::data)?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                manifests.push((stem.to_string(), path));
            }
        }
    }
    manifests.sort();
    Ok(manifests)
}

pub fn run(masks_dir: &Path, out_dir: &Path, intensity_table: Option<&Path>) -> Result<(), CliError> {
    let builder = ManifestBuilder::new(
        "encode-priors",
        &format!(
            "masks={} out={} intensity_table={}",
            masks_dir.display(),
            out_dir.display(),
            intensity_table.map(|p| p.display().to_string()).unwrap_or_default()
        ),
        &[masks_dir],
        0,
    );

    let table = match intensity_table {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read intensity table `{}`: {e}", path.display())))?;
            parse_intensity_table(&text, path)?
        }
        None => IntensityTable::default(),
    };

    let manifests = frame_manifests(masks_dir)?;
    fs::create_dir_all(out_dir).map_err(CliError::data)?;
    if manifests.is_empty() {
        eprintln!("warning: no frame manifests (*.txt) in `{}`; nothing to encode", masks_dir.display());
    }

    let mut encoded = 0usize;
    for (frame, manifest_path) in &manifests {
        let text = fs::read_to_string(manifest_path).map_err(CliError::data)?;
        let mut masks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| CliError::Data(format!("frame {frame} ({}:{}): {msg}", manifest_path.display(), lineno + 1));
            let (class, file) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| bad("expected `<class> <mask-file>`".into()))?;
            let class: TargetClass = class
                .trim()
                .parse()
                .map_err(|_| bad(format!("unknown class `{}`", class.trim())))?;
            let mask_path = masks_dir.join(file.trim());
            let mut reader = fs::File::open(&mask_path)
                .map_err(|e| bad(format!("cannot open mask `{}`: {e}", mask_path.display())))?;
            let gray = segfuse_core::netpbm::read_p5(&mut reader)
                .map_err(|e| bad(format!("bad mask `{}`: {e}", mask_path.display())))?;
            masks.push(InstanceMask::from_gray(class, &gray, file.trim()));
        }
        if masks.is_empty() {
            eprintln!("warning: frame {frame}: empty manifest, no prior map written");
            continue;
        }
        let (width, height) = (masks[0].width, masks[0].height);
        let map = encode_semantic_map_with(&masks, width, height, table)
            .map_err(|e| CliError::Data(format!("frame {frame}: {e}")))?;
        let mut bytes = Vec::new();
        write_pgm(&map, &mut bytes).map_err(|e| CliError::Data(format!("frame {frame}: {e}")))?;
        write_atomic(&out_dir.join(format!("{frame}.pgm")), &bytes).map_err(CliError::data)?;
        encoded += 1;
    }

    let manifest = builder.finish();
    let json = serde_json::json!({ "manifest": manifest, "frames_encoded": encoded });
    write_atomic(
        &out_dir.join("run_manifest.json"),
        serde_json::to_string_pretty(&json).expect("manifest serialization").as_bytes(),
    )
    .map_err(CliError::data)?;
    Ok(())
}
