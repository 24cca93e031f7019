use std::fs;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use image::{ImageBuffer, Rgb};
use vtprune::visualize::{back_project, normalize_min_max, render_frames};

use crate::run::{RunManifest, SelectionExport};
use crate::{CmdResult, Failure, VisualizeArgs};

pub fn cmd_visualize(a: &VisualizeArgs) -> CmdResult {
    let text = fs::read_to_string(&a.manifest)
        .with_context(|| format!("reading {}", a.manifest.display()))
        .map_err(Failure::usage)?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.manifest.display()))?;
    let run_dir = a.manifest.parent().unwrap_or(std::path::Path::new("."));
    if !manifest.videos.iter().any(|v| v.id == a.video) {
        return Err(anyhow!("video {:?} is not in run {}", a.video, manifest.run_id).into());
    }
    let export_path = run_dir
        .join(&manifest.selections_dir)
        .join(format!("{}.json", a.video));
    let export: SelectionExport = serde_json::from_str(
        &fs::read_to_string(&export_path)
            .with_context(|| format!("missing selection export {}", export_path.display()))?,
    )
    .with_context(|| format!("parsing {}", export_path.display()))?;

    let mut map = back_project(
        &export.provenance,
        &export.scores,
        &export.selected,
        export.frames,
        export.tokens_per_frame,
    )?;
    map.scores = normalize_min_max(&map.scores);

    let out_dir = a.out.clone().unwrap_or_else(|| run_dir.join("figures"));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (k, [first, last]) in export.segments.iter().enumerate() {
        let frames: Vec<usize> = (*first..=*last).collect();
        let img = render_frames(&map, &frames);
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(img.width as u32, img.height as u32, img.pixels)
                .ok_or_else(|| anyhow!("image buffer size mismatch"))?;
        let path = out_dir.join(format!("{}_segment_{k:02}.png", a.video));
        buf.save(&path).with_context(|| format!("writing {}", path.display()))?;
        out!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
