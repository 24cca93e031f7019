//! Synthetic token grids with planted scenes and static/dynamic locations.
//!
//! Each scene gets a random subset of static locations. A static token is
//! `R·e_s + u_i + jitter`: `e_s` is a unit direction shared by the whole scene
//! (scene directions are mutually orthogonal when `n_scenes <= C`), `u_i` is a
//! per-location base vector, zero-mean across the scene's static set, and the
//! jitter is `N(0, σ_s²)` per frame. Static tokens of a location keep pairwise
//! cosine ≥ 0.95 within a scene.
//!
//! Dynamic locations draw a fresh `N(0, σ_d²)` vector every frame, rejecting
//! draws whose cosine with an earlier frame of the same scene exceeds 0.5.
//! They come in antithetic pairs (`d` at one location, `−d` at its partner)
//! so that foreground motion does not move the frame-mean feature; scene
//! identity then shows up in frame features through the `R·e_s` term alone.
//! `R` starts at `sqrt(C)` and grows until the closest frames of different
//! scenes are at least 5× farther apart than the farthest frames of one scene.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::counts::round_count;
use crate::error::{Error, Result};
use crate::grid::{save_token_grid, TokenGrid};
use crate::matrix::{dot, mean_of, sq_dist};
use crate::rng::{derive_seed, seeded, Rng64};

pub const STATIC_MIN_COSINE: f64 = 0.95;
pub const DYNAMIC_MAX_COSINE: f64 = 0.5;
pub const SCENE_SEPARATION: f64 = 5.0;
const MAX_REDRAWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub channels: usize,
    pub n_scenes: usize,
    pub static_fraction: f64,
    /// `σ_s`, per-frame jitter of static tokens.
    pub static_noise: f64,
    /// `σ_d`, scale of dynamic tokens.
    pub dynamic_drift: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            frames: 16,
            tokens_per_frame: 64,
            channels: 64,
            n_scenes: 4,
            static_fraction: 0.75,
            static_noise: 0.02,
            dynamic_drift: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.frames == 0 || self.tokens_per_frame == 0 || self.channels == 0 {
            return bad("frames, tokens_per_frame and channels must be >= 1".into());
        }
        if self.n_scenes == 0 || !self.frames.is_multiple_of(self.n_scenes) {
            return bad(format!("n_scenes={} must divide frames={}", self.n_scenes, self.frames));
        }
        if !(0.0..=1.0).contains(&self.static_fraction) {
            return bad(format!("static_fraction={} must lie in [0, 1]", self.static_fraction));
        }
        for (name, v) in [("static_noise", self.static_noise), ("dynamic_drift", self.dynamic_drift)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name}={v} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn scene_len(&self) -> usize {
        self.frames / self.n_scenes
    }

    pub fn n_static(&self) -> usize {
        round_count(self.static_fraction, self.tokens_per_frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Inclusive frame ranges of the planted scenes.
    pub scene_boundaries: Vec<[usize; 2]>,
    /// Per scene, per location: planted static?
    pub static_mask: Vec<Vec<bool>>,
    /// Final magnitude `R` of the scene offset.
    pub scene_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub spec: SynthSpec,
    pub grid: TokenGrid,
    pub truth: GroundTruth,
}

/// JSON sidecar written next to each generated grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub spec: SynthSpec,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut Rng64, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn cos64(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na * nb)
    }
}

fn cos32(a: &[f32], b: &[f32]) -> f64 {
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// Unit directions; orthonormalised when there are few enough of them.
fn scene_directions(rng: &mut Rng64, n: usize, c: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = gaussian(rng, c, 1.0);
        if out.len() < c {
            for u in &out {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    out
}

/// Draws `scene_len` vectors of scale `sigma` whose pairwise cosines stay at
/// or below `DYNAMIC_MAX_COSINE`; keeps the least-correlated candidate if
/// no draw qualifies within the redraw budget.
fn dynamic_track(rng: &mut Rng64, scene_len: usize, c: usize, sigma: f64) -> Vec<Vec<f64>> {
    let mut track: Vec<Vec<f64>> = Vec::with_capacity(scene_len);
    for _ in 0..scene_len {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..MAX_REDRAWS {
            let cand = gaussian(rng, c, sigma);
            let worst = track.iter().map(|p| cos64(p, &cand)).fold(f64::NEG_INFINITY, f64::max);
            if best.as_ref().is_none_or(|(w, _)| worst < *w) {
                best = Some((worst, cand));
            }
            if worst <= DYNAMIC_MAX_COSINE || sigma == 0.0 {
                break;
            }
        }
        track.push(best.expect("at least one draw").1);
    }
    track
}

struct SceneParts {
    static_mask: Vec<bool>,
    /// location -> base vector (static locations only)
    bases: Vec<Option<Vec<f64>>>,
    /// frame-in-scene -> location -> jitter (static) or value (dynamic)
    per_frame: Vec<Vec<Vec<f64>>>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthVideo> {
    spec.validate()?;
    let (t_len, n_v, c) = (spec.frames, spec.tokens_per_frame, spec.channels);
    let scene_len = spec.scene_len();
    let n_static = spec.n_static();
    let mut rng = seeded(spec.seed);
    let directions = scene_directions(&mut rng, spec.n_scenes, c);

    let mut scenes = Vec::with_capacity(spec.n_scenes);
    for _ in 0..spec.n_scenes {
        let mut locations: Vec<usize> = (0..n_v).collect();
        locations.shuffle(&mut rng);
        let mut static_mask = vec![false; n_v];
        let mut statics: Vec<usize> = locations[..n_static].to_vec();
        statics.sort_unstable();
        for &i in &statics {
            static_mask[i] = true;
        }
        let mut dynamics: Vec<usize> = locations[n_static..].to_vec();
        dynamics.sort_unstable();

        let mut bases: Vec<Option<Vec<f64>>> = vec![None; n_v];
        let raw: Vec<Vec<f64>> = statics.iter().map(|_| gaussian(&mut rng, c, 1.0)).collect();
        let centre: Vec<f64> = if statics.len() > 1 {
            (0..c).map(|k| raw.iter().map(|v| v[k]).sum::<f64>() / raw.len() as f64).collect()
        } else {
            vec![0.0; c]
        };
        for (&i, v) in statics.iter().zip(raw) {
            bases[i] = Some(v.iter().zip(&centre).map(|(a, b)| a - b).collect());
        }

        let mut per_frame = vec![vec![Vec::new(); n_v]; scene_len];
        for &i in &statics {
            for frame in per_frame.iter_mut() {
                frame[i] = gaussian(&mut rng, c, spec.static_noise);
            }
        }
        for pair in dynamics.chunks(2) {
            let track = dynamic_track(&mut rng, scene_len, c, spec.dynamic_drift);
            for (frame, d) in per_frame.iter_mut().zip(track) {
                if let Some(&partner) = pair.get(1) {
                    frame[partner] = d.iter().map(|x| -x).collect();
                }
                frame[pair[0]] = d;
            }
        }
        scenes.push(SceneParts {
            static_mask,
            bases,
            per_frame,
        });
    }

    let assemble = |offset: f64| -> Result<TokenGrid> {
        let mut data = Vec::with_capacity(t_len * n_v * c);
        for (s, scene) in scenes.iter().enumerate() {
            for frame in &scene.per_frame {
                for (base, part) in scene.bases.iter().zip(frame) {
                    match base {
                        Some(base) => data.extend(
                            (0..c).map(|k| (offset * directions[s][k] + base[k] + part[k]) as f32),
                        ),
                        None => data.extend(part.iter().map(|&x| x as f32)),
                    }
                }
            }
        }
        TokenGrid::new(t_len, n_v, c, data)
    };

    let separable = spec.n_scenes > 1 && n_static > 0;
    let mut offset = (c as f64).sqrt();
    let mut grid = assemble(offset)?;
    for _ in 0..64 {
        let ok_static = static_margin_holds(&grid, spec, &scenes);
        let ok_sep = !separable || separation_ratio(&grid, scene_len) >= SCENE_SEPARATION;
        if ok_static && ok_sep {
            break;
        }
        offset *= 1.5;
        grid = assemble(offset)?;
    }

    let truth = GroundTruth {
        scene_boundaries: (0..spec.n_scenes)
            .map(|s| [s * scene_len, (s + 1) * scene_len - 1])
            .collect(),
        static_mask: scenes.into_iter().map(|s| s.static_mask).collect(),
        scene_offset: offset,
    };
    Ok(SynthVideo {
        spec: spec.clone(),
        grid,
        truth,
    })
}

fn static_margin_holds(grid: &TokenGrid, spec: &SynthSpec, scenes: &[SceneParts]) -> bool {
    let scene_len = spec.scene_len();
    scenes.iter().enumerate().all(|(s, scene)| {
        (0..grid.tokens_per_frame())
            .filter(|&i| scene.static_mask[i])
            .all(|i| {
                let frames: Vec<usize> = (s * scene_len..(s + 1) * scene_len).collect();
                frames.iter().enumerate().all(|(a, &ta)| {
                    frames[a + 1..]
                        .iter()
                        .all(|&tb| cos32(grid.token(ta, i), grid.token(tb, i)) >= STATIC_MIN_COSINE)
                })
            })
    })
}

/// min inter-scene frame-feature distance / max intra-scene distance.
pub fn separation_ratio(grid: &TokenGrid, scene_len: usize) -> f64 {
    let c = grid.channels();
    let feats: Vec<Vec<f32>> = (0..grid.frames())
        .map(|t| mean_of((0..grid.tokens_per_frame()).map(|i| grid.token(t, i)), c))
        .collect();
    let (mut intra, mut inter) = (0.0f64, f64::INFINITY);
    for a in 0..feats.len() {
        for b in a + 1..feats.len() {
            let d = sq_dist(&feats[a], &feats[b]).sqrt();
            if a / scene_len == b / scene_len {
                intra = intra.max(d);
            } else {
                inter = inter.min(d);
            }
        }
    }
    if intra == 0.0 {
        f64::INFINITY
    } else {
        inter / intra
    }
}

/// The mixed corpus: fixed shape, static fraction cycling through
/// 0.25, 0.5, 0.75, 0.375, 0.625 and dynamic scale alternating 1.0 / 1.5.
pub fn mixed_corpus_specs(videos: usize, seed: u64) -> Vec<SynthSpec> {
    const FRACTIONS: [f64; 5] = [0.25, 0.5, 0.75, 0.375, 0.625];
    (0..videos)
        .map(|v| SynthSpec {
            static_fraction: FRACTIONS[v % FRACTIONS.len()],
            dynamic_drift: if v % 2 == 0 { 1.0 } else { 1.5 },
            seed: derive_seed(seed, v as u64),
            ..SynthSpec::default()
        })
        .collect()
}

pub const DEFAULT_CORPUS_VIDEOS: usize = 10;
pub const DEFAULT_CORPUS_SEED: u64 = 7;

/// The corpus `generate` writes with no flags.
pub fn default_corpus() -> Result<Vec<SynthVideo>> {
    mixed_corpus_specs(DEFAULT_CORPUS_VIDEOS, DEFAULT_CORPUS_SEED)
        .iter()
        .map(generate)
        .collect()
}

pub fn video_id(index: usize) -> String {
    format!("video_{index:03}")
}

/// Writes `<id>.pvtg` and `<id>.truth.json` into `dir`.
pub fn write_video(video: &SynthVideo, dir: &Path, id: &str) -> Result<(PathBuf, PathBuf)> {
    let grid_path = dir.join(format!("{id}.pvtg"));
    let truth_path = dir.join(format!("{id}.truth.json"));
    save_token_grid(&video.grid, &grid_path)?;
    let json = serde_json::to_string_pretty(&TruthFile {
        spec: video.spec.clone(),
        truth: video.truth.clone(),
    })?;
    fs::write(&truth_path, json + "\n").map_err(|e| Error::io(&truth_path, e))?;
    Ok((grid_path, truth_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stmerge::{compute_static_mask, segment_frames};

    #[test]
    fn fully_static_noiseless_scenes_repeat_frames() {
        let v = generate(&SynthSpec {
            static_fraction: 1.0,
            static_noise: 0.0,
            frames: 8,
            n_scenes: 2,
            tokens_per_frame: 6,
            channels: 5,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        for t in 1..4 {
            assert_eq!(v.grid.frame(t), v.grid.frame(0));
            assert_eq!(v.grid.frame(4 + t), v.grid.frame(4));
        }
        assert_ne!(v.grid.frame(0), v.grid.frame(4));
    }

    #[test]
    fn planted_static_count() {
        let v = generate(&SynthSpec { static_fraction: 0.75, ..Default::default() }).unwrap();
        assert_eq!(v.truth.static_mask.len(), 4);
        for m in &v.truth.static_mask {
            assert_eq!(m.iter().filter(|&&s| s).count(), 48);
        }
        assert_eq!(v.truth.scene_boundaries, vec![[0, 3], [4, 7], [8, 11], [12, 15]]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let s = SynthSpec { seed: 99, ..Default::default() };
        assert_eq!(generate(&s).unwrap().grid.to_bytes(), generate(&s).unwrap().grid.to_bytes());
        let other = SynthSpec { seed: 100, ..Default::default() };
        assert_ne!(generate(&s).unwrap().grid, generate(&other).unwrap().grid);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate(&SynthSpec { static_fraction: 1.1, ..Default::default() }).is_err());
        assert!(generate(&SynthSpec { n_scenes: 3, ..Default::default() }).is_err());
        assert!(generate(&SynthSpec { dynamic_drift: -1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn margins_hold() {
        for seed in 0..5 {
            let spec = SynthSpec { channels: 32, seed, ..Default::default() };
            let v = generate(&spec).unwrap();
            let g = &v.grid;
            assert!(separation_ratio(g, 4) >= SCENE_SEPARATION);
            for (s, mask) in v.truth.static_mask.iter().enumerate() {
                for (i, &is_static) in mask.iter().enumerate() {
                    for a in 4 * s..4 * s + 4 {
                        for b in a + 1..4 * s + 4 {
                            let c = cos32(g.token(a, i), g.token(b, i));
                            if is_static {
                                assert!(c >= STATIC_MIN_COSINE, "static {c}");
                            } else {
                                assert!(c <= DYNAMIC_MAX_COSINE, "dynamic {c}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ground_truth_is_recoverable() {
        for seed in 0..5 {
            let v = generate(&SynthSpec { seed, ..Default::default() }).unwrap();
            let part = segment_frames(&v.grid, 0.25, 5).unwrap();
            assert_eq!(part.segments(), v.truth.scene_boundaries.as_slice());
            let mask = compute_static_mask(&v.grid, &part, 0.8).unwrap();
            for (got, want) in mask.segments.iter().zip(&v.truth.static_mask) {
                assert_eq!(&got.is_static, want);
            }
        }
    }

    #[test]
    fn writes_grid_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let v = generate(&SynthSpec { frames: 4, n_scenes: 2, tokens_per_frame: 4, channels: 3, ..Default::default() }).unwrap();
        let (g, t) = write_video(&v, dir.path(), "video_000").unwrap();
        assert_eq!(crate::grid::load_token_grid(g).unwrap(), v.grid);
        let back: TruthFile = serde_json::from_str(&fs::read_to_string(t).unwrap()).unwrap();
        assert_eq!(back.truth, v.truth);
    }
}
