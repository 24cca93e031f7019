use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vtprune::metrics::COST_MODEL;
use vtprune::pipeline::{
    default_model_spec, prepare, question_for_video, run_video, select_and_compress, QUESTION_LEN,
};
use vtprune::{
    EfficiencyReport, MergeTrace, Model, ModelSpec, Provenance, PruneConfig, TokenGrid,
};

use crate::sweep::{expand, parse_sweep};
use crate::{CmdResult, Failure, RunArgs};

pub const MANIFEST: &str = "manifest.json";
pub const SELECTIONS_DIR: &str = "selections";
pub const TRACES_DIR: &str = "traces";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub file: String,
    pub sha256: String,
    pub channels: usize,
    pub report: EfficiencyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub videos: usize,
    pub mean_retained_ratio: Option<f64>,
    pub mean_merged_ratio: Option<f64>,
    pub mean_flops_multiplier: Option<f64>,
    pub mean_merged_tokens: Option<f64>,
    pub mean_selected_tokens: Option<f64>,
}

impl Aggregate {
    fn of<'a>(reports: impl Iterator<Item = &'a EfficiencyReport>) -> Self {
        let reports: Vec<&EfficiencyReport> = reports.collect();
        let n = reports.len();
        let mean = |f: &dyn Fn(&EfficiencyReport) -> f64| {
            (n > 0).then(|| reports.iter().map(|r| f(r)).sum::<f64>() / n as f64)
        };
        Self {
            videos: n,
            mean_retained_ratio: mean(&|r| r.retained_ratio),
            mean_merged_ratio: mean(&|r| r.merged_ratio),
            mean_flops_multiplier: mean(&|r| r.flops_multiplier),
            mean_merged_tokens: mean(&|r| r.merged_tokens as f64),
            mean_selected_tokens: mean(&|r| r.selected_tokens as f64),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub config: PruneConfig,
    pub aggregate: Aggregate,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub run_id: String,
    pub cost_model: String,
    pub corpus: String,
    pub seed: u64,
    pub config: PruneConfig,
    /// Model used for every video; `visual_channels` follows each video.
    pub model: ModelSpec,
    pub question_len: usize,
    pub selections_dir: String,
    pub traces_dir: Option<String>,
    pub videos: Vec<VideoEntry>,
    pub aggregate: Aggregate,
    pub failures: Vec<FailureEntry>,
    pub sweep: Option<Vec<SweepPoint>>,
}

/// What `visualize` needs to paint one video.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionExport {
    pub id: String,
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub alpha: f64,
    pub m_layer: usize,
    /// Inclusive frame ranges of the detected segments.
    pub segments: Vec<[usize; 2]>,
    pub provenance: Vec<Provenance>,
    /// Score of each merged token, aligned with `provenance`.
    pub scores: Vec<f32>,
    /// Indices into `provenance` of the kept tokens, ascending.
    pub selected: Vec<usize>,
}

struct Input {
    id: String,
    file: String,
    sha256: String,
    grid: Result<TokenGrid, String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_inputs(corpus: &Path) -> Result<Vec<Input>, Failure> {
    if !corpus.is_dir() {
        return Err(Failure::usage(anyhow!("corpus directory {} does not exist", corpus.display())));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(corpus)
        .with_context(|| format!("reading {}", corpus.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pvtg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(anyhow!("no .pvtg files in {}", corpus.display()).into());
    }
    Ok(paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let file = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            match fs::read(&p) {
                Ok(bytes) => Input {
                    id,
                    file,
                    sha256: hex(&Sha256::digest(&bytes)),
                    grid: TokenGrid::from_bytes(&bytes, &p).map_err(|e| e.to_string()),
                },
                Err(e) => Input {
                    id,
                    file,
                    sha256: String::new(),
                    grid: Err(format!("reading {}: {e}", p.display())),
                },
            }
        })
        .collect())
}

fn resolve_config(a: &RunArgs) -> Result<PruneConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::usage)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(Failure::usage)?
        }
        None => PruneConfig::default(),
    };
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.m_layer {
        cfg.m_layer = v;
    }
    if let Some(v) = a.k_knn {
        cfg.k_knn = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate(Some(ModelSpec::default().layers)).map_err(Failure::usage)?;
    Ok(cfg)
}

fn default_run_id(cfg: &PruneConfig, sweep: Option<&str>, trace: bool, inputs: &[Input]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(sweep.unwrap_or("").as_bytes());
    h.update([u8::from(trace)]);
    for i in inputs {
        h.update(i.file.as_bytes());
        h.update(i.sha256.as_bytes());
    }
    format!("run-{}", &hex(&h.finalize())[..12])
}

struct VideoResult {
    entry: VideoEntry,
    export: SelectionExport,
    trace: MergeTrace,
}

fn process(index: usize, input: &Input, grid: &TokenGrid, cfg: &PruneConfig) -> Result<VideoResult, String> {
    let model = Model::new(default_model_spec(grid.channels(), cfg.seed)).map_err(|e| e.to_string())?;
    let q = question_for_video(cfg.seed, index, model.spec().vocab);
    let out = run_video(grid, &q, &model, cfg).map_err(|e| e.to_string())?;
    Ok(VideoResult {
        entry: VideoEntry {
            id: input.id.clone(),
            file: input.file.clone(),
            sha256: input.sha256.clone(),
            channels: grid.channels(),
            report: out.report,
        },
        export: SelectionExport {
            id: input.id.clone(),
            frames: grid.frames(),
            tokens_per_frame: grid.tokens_per_frame(),
            alpha: cfg.alpha,
            m_layer: cfg.m_layer,
            segments: out.trace.segments.iter().map(|s| s.frames).collect(),
            provenance: out.merged.provenance,
            scores: out.selection.scores,
            selected: out.selection.indices,
        },
        trace: out.trace,
    })
}

/// Runs every sweep configuration on every loadable video. Configurations
/// that differ only in `alpha` share one merge and prefill.
fn run_sweep(inputs: &[Input], configs: &[PruneConfig]) -> Vec<SweepPoint> {
    let mut groups: Vec<(PruneConfig, Vec<usize>)> = Vec::new();
    for (k, c) in configs.iter().enumerate() {
        let key = PruneConfig { alpha: 1.0, ..c.clone() };
        match groups.iter_mut().find(|(g, _)| *g == key) {
            Some((_, members)) => members.push(k),
            None => groups.push((key, vec![k])),
        }
    }
    let jobs: Vec<(usize, usize)> = (0..inputs.len())
        .flat_map(|v| (0..groups.len()).map(move |g| (v, g)))
        .collect();
    let results: Vec<Vec<(usize, Option<EfficiencyReport>)>> = jobs
        .par_iter()
        .map(|&(v, g)| {
            let (key, members) = &groups[g];
            let fail = || members.iter().map(|&k| (k, None)).collect();
            let Ok(grid) = &inputs[v].grid else { return fail() };
            let Ok(model) = Model::new(default_model_spec(grid.channels(), key.seed)) else {
                return fail();
            };
            let q = question_for_video(key.seed, v, model.spec().vocab);
            let Ok(prepared) = prepare(grid, &q, &model, key) else { return fail() };
            members
                .iter()
                .map(|&k| {
                    let r = select_and_compress(&prepared, &model, configs[k].alpha).ok();
                    (k, r.map(|(_, _, report)| report))
                })
                .collect()
        })
        .collect();
    let mut per_config: Vec<Vec<Option<EfficiencyReport>>> = vec![Vec::new(); configs.len()];
    for (k, r) in results.into_iter().flatten() {
        per_config[k].push(r);
    }
    configs
        .iter()
        .zip(per_config)
        .map(|(c, rs)| SweepPoint {
            config: c.clone(),
            aggregate: Aggregate::of(rs.iter().flatten()),
            failures: rs.iter().filter(|r| r.is_none()).count(),
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

pub fn cmd_run(a: &RunArgs) -> CmdResult {
    let cfg = resolve_config(a)?;
    let sweep_configs = match &a.sweep {
        Some(text) => {
            let axes = parse_sweep(text).map_err(Failure::usage)?;
            let configs = expand(&cfg, &axes);
            for c in &configs {
                c.validate(Some(ModelSpec::default().layers))
                    .with_context(|| format!("sweep point {c:?}"))
                    .map_err(Failure::usage)?;
            }
            Some(configs)
        }
        None => None,
    };
    if a.workers == 0 {
        return Err(Failure::usage(anyhow!("--workers must be >= 1")));
    }
    let inputs = load_inputs(&a.corpus)?;
    let run_id = a
        .run_id
        .clone()
        .unwrap_or_else(|| default_run_id(&cfg, a.sweep.as_deref(), a.trace, &inputs));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .context("building worker pool")?;

    let (results, sweep) = pool.install(|| {
        let results: Vec<Result<VideoResult, String>> = inputs
            .par_iter()
            .enumerate()
            .map(|(i, input)| match &input.grid {
                Ok(grid) => process(i, input, grid, &cfg),
                Err(e) => Err(e.clone()),
            })
            .collect();
        let sweep = sweep_configs.as_deref().map(|c| run_sweep(&inputs, c));
        (results, sweep)
    });

    let dir = a.out.join(&run_id);
    let selections = dir.join(SELECTIONS_DIR);
    fs::create_dir_all(&selections).with_context(|| format!("creating {}", selections.display()))?;
    if a.trace {
        fs::create_dir_all(dir.join(TRACES_DIR))?;
    }

    let mut videos = Vec::new();
    let mut failures = Vec::new();
    for (input, r) in inputs.iter().zip(results) {
        match r {
            Ok(v) => {
                write_json(&selections.join(format!("{}.json", v.entry.id)), &v.export)?;
                if a.trace {
                    write_json(&dir.join(TRACES_DIR).join(format!("{}.json", v.entry.id)), &v.trace)?;
                }
                videos.push(v.entry);
            }
            Err(reason) => {
                eprintln!("skipping {}: {reason}", input.file);
                failures.push(FailureEntry {
                    id: input.id.clone(),
                    reason,
                });
            }
        }
    }
    videos.sort_by(|x, y| x.id.cmp(&y.id));

    let mut csv = format!("id,{}\n", EfficiencyReport::CSV_HEADER);
    for v in &videos {
        csv += &format!("{},{}\n", v.id, v.report.csv_row());
    }
    fs::write(dir.join("reports.csv"), csv)?;
    if let Some(points) = &sweep {
        let mut s = String::from("tau,gamma,beta,alpha,m_layer,k_knn,videos,failures,mean_retained_ratio,mean_merged_ratio,mean_flops_multiplier\n");
        for p in points {
            let c = &p.config;
            let g = &p.aggregate;
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            s += &format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                c.tau,
                c.gamma,
                c.beta,
                c.alpha,
                c.m_layer,
                c.k_knn,
                g.videos,
                p.failures,
                opt(g.mean_retained_ratio),
                opt(g.mean_merged_ratio),
                opt(g.mean_flops_multiplier)
            );
        }
        fs::write(dir.join("sweep.csv"), s)?;
    }

    let channels = videos.first().map_or(ModelSpec::default().visual_channels, |v| v.channels);
    let aggregate = Aggregate::of(videos.iter().map(|v| &v.report));
    let manifest = RunManifest {
        tool: "vtprune".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        run_id: run_id.clone(),
        cost_model: COST_MODEL.into(),
        corpus: a.corpus.display().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        model: default_model_spec(channels, cfg.seed),
        question_len: QUESTION_LEN,
        selections_dir: SELECTIONS_DIR.into(),
        traces_dir: a.trace.then(|| TRACES_DIR.into()),
        videos,
        aggregate,
        failures,
        sweep,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;

    let g = &manifest.aggregate;
    out!(
        "videos {}  retained_ratio {}  flops_multiplier {}  merged_ratio {}",
        g.videos,
        fmt_opt(g.mean_retained_ratio),
        fmt_opt(g.mean_flops_multiplier),
        fmt_opt(g.mean_merged_ratio)
    );
    out!("manifest {}", dir.join(MANIFEST).display());
    if manifest.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} of {} videos failed", manifest.failures.len(), inputs.len());
        Ok(ExitCode::from(1))
    }
}
