//! The five subcommands. Each stage reads its inputs from explicit paths or
//! from the previous stage's directory under the output root, and finishes by
//! writing its manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use misep::align::{coarse_shift, local_align};
use misep::imagery::{
    flip_horizontal, load_grayscale, normalize_pair, sample_pixel_pairs, save_grayscale_with_depth, saturate_tails,
    BitDepth,
};
use misep::metrics::{build_report, evaluate, summarize, Method, QualityReport, ReportTable};
use misep::mixsim::{generate_bars_pair, mix_showthrough};
use misep::network::SeparatorKind;
use misep::trainer::{
    evaluate_run, objective_trace_csv, separate, train_series, training_set, SeparatorModel, TrainConfig, TrainedRun,
};
use misep::ImageGray;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SimPreset};
use crate::manifest::{write_json_atomic, StageManifest, MANIFEST_FILE};
use crate::pfm::{read_pfm, write_pfm};

/// Fraction of pixels saturated at each end of a display copy.
pub const DISPLAY_TAIL: f64 = 0.01;

pub const SIMULATE: &str = "simulate";
pub const ALIGN: &str = "align";
pub const EVALUATE: &str = "evaluate";

pub fn separate_stage(mode: SeparatorKind) -> String {
    format!("separate-{mode}")
}

/// Stage directories under the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            root: config.out_dir.clone(),
        }
    }

    pub fn stage(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn separate(&self, mode: SeparatorKind) -> PathBuf {
        self.stage(&separate_stage(mode))
    }

    pub fn run_dir(&self, mode: SeparatorKind, run: usize) -> PathBuf {
        self.separate(mode).join(run_name(run))
    }
}

pub fn run_name(run: usize) -> String {
    format!("run-{run:02}")
}

fn pair_in(dir: &Path, stem: &str, ext: &str) -> [PathBuf; 2] {
    [dir.join(format!("{stem}1.{ext}")), dir.join(format!("{stem}2.{ext}"))]
}

/// PNG/PGM through the image codecs, `.pfm` through the float-map reader.
pub fn load_any(path: &Path) -> Result<ImageGray> {
    if !path.exists() {
        bail!("missing input {}", path.display());
    }
    let img = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm")) {
        read_pfm(path)?
    } else {
        load_grayscale(path).with_context(|| format!("loading {}", path.display()))?
    };
    Ok(img)
}

fn load_pair(paths: &[PathBuf; 2]) -> Result<[ImageGray; 2]> {
    let a = load_any(&paths[0])?;
    let b = load_any(&paths[1])?;
    a.same_dims(&b)
        .with_context(|| format!("{} and {}", paths[0].display(), paths[1].display()))?;
    Ok([a, b])
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn save_png(image: &ImageGray, path: &Path, depth: BitDepth) -> Result<()> {
    save_grayscale_with_depth(image, path, depth).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn source_paths(config: &PipelineConfig, layout: &Layout) -> [PathBuf; 2] {
    config
        .paths
        .sources
        .clone()
        .unwrap_or_else(|| pair_in(&layout.stage(SIMULATE), "source", "png"))
}

fn mixture_paths(config: &PipelineConfig, layout: &Layout) -> [PathBuf; 2] {
    config
        .paths
        .mixtures
        .clone()
        .unwrap_or_else(|| pair_in(&layout.stage(SIMULATE), "mixture", "png"))
}

fn aligned_paths(config: &PipelineConfig, layout: &Layout) -> [PathBuf; 2] {
    config
        .paths
        .aligned
        .clone()
        .unwrap_or_else(|| pair_in(&layout.stage(ALIGN), "aligned", "png"))
}

fn available(paths: &[PathBuf; 2]) -> bool {
    paths.iter().all(|p| p.exists())
}

/// Writes the source and mixture pairs.
pub fn cmd_simulate(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = Layout::new(config);
    let dir = layout.stage(SIMULATE);
    create_dir(&dir)?;
    let mut manifest = StageManifest::new(SIMULATE, config);
    let (s1, s2) = match config.sim.preset {
        SimPreset::Bars => {
            manifest.seed("bars", config.sim.bars_seed);
            generate_bars_pair(config.sim.bars, config.sim.size, config.sim.bars_seed)?
        }
        SimPreset::Images => {
            let paths = config.sim.images.as_ref().expect("validated");
            manifest.inputs.extend(paths.iter().cloned());
            let [a, b] = load_pair(paths)?;
            (a, b)
        }
    };
    manifest.seed("mix", config.mix.seed);
    let (m1, m2) = mix_showthrough(&s1, &s2, &config.mix)?;
    // 8-bit output is exact only when the mixture is quantized to 256 levels
    let mix_depth = if config.mix.levels == 256 { BitDepth::Eight } else { BitDepth::Sixteen };
    for (img, name, depth) in [
        (&s1, "source1.png", BitDepth::Sixteen),
        (&s2, "source2.png", BitDepth::Sixteen),
        (&m1, "mixture1.png", mix_depth),
        (&m2, "mixture2.png", mix_depth),
    ] {
        save_png(img, &dir.join(name), depth)?;
        manifest.output(name);
    }
    manifest.details = serde_json::json!({
        "preset": match config.sim.preset { SimPreset::Bars => "bars", SimPreset::Images => "images" },
        "bars": config.sim.bars,
        "size": config.sim.size,
        "width": s1.width(),
        "height": s1.height(),
        "mix": config.mix,
        "jacobian_positive_everywhere": config.mix.jacobian_positive_everywhere(),
    });
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Flip, coarse shift, local alignment and joint normalization of the
/// acquired pair. The first image is the reference.
pub fn cmd_align(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = Layout::new(config);
    let inputs = mixture_paths(config, &layout);
    let [reference, mut moving] = load_pair(&inputs)?;
    let dir = layout.stage(ALIGN);
    create_dir(&dir)?;
    let mut manifest = StageManifest::new(ALIGN, config);
    manifest.inputs.extend(inputs.iter().cloned());

    if config.align.flip {
        moving = flip_horizontal(&moving);
    }
    let (sx, sy) = config.align.shift;
    if (sx, sy) != (0, 0) {
        moving = coarse_shift(&moving, sx, sy)?;
    }
    let mut field_summary = serde_json::Value::Null;
    if config.align.local {
        let (aligned, field) = local_align(&reference, &moving, config.align.params)?;
        let blocks = field.blocks_x * field.blocks_y;
        let flagged = field.flagged_count();
        if flagged == blocks {
            bail!("alignment failed: all {blocks} blocks are flat and carry no signal");
        }
        if field.max_abs() >= config.align.params.search_radius as i32 {
            eprintln!(
                "warning: some blocks hit the search radius ({} upsampled px); a coarse shift may be needed",
                config.align.params.search_radius
            );
        }
        write_text(&dir.join("field.json"), &field.to_json())?;
        manifest.output("field.json");
        field_summary = serde_json::json!({
            "blocks_x": field.blocks_x,
            "blocks_y": field.blocks_y,
            "flagged_blocks": flagged,
            "max_abs_displacement": field.max_abs(),
        });
        moving = aligned;
    }
    let (a1, a2) = normalize_pair(&reference, &moving)?;
    for (img, name) in [(&a1, "aligned1.png"), (&a2, "aligned2.png")] {
        save_png(img, &dir.join(name), BitDepth::Sixteen)?;
        manifest.output(name);
    }
    manifest.details = serde_json::json!({
        "flip": config.align.flip,
        "shift": [sx, sy],
        "local": config.align.local,
        "block_size": config.align.params.block_size,
        "upsample": config.align.params.upsample,
        "search_radius": config.align.params.search_radius,
        "field": field_summary,
    });
    manifest.write(&dir)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRun {
    pub run: usize,
    pub seed: u64,
    pub final_objective: f64,
    pub mean_q2_db: f64,
    pub report: QualityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub best: usize,
    pub worst: usize,
    pub runs: Vec<RankedRun>,
}

/// Trains `config.runs` separators of one mode and writes their models,
/// raw outputs, display copies and objective traces.
pub fn cmd_separate_mode(config: &PipelineConfig, mode: SeparatorKind) -> Result<StageManifest> {
    let layout = Layout::new(config);
    let inputs = aligned_paths(config, &layout);
    let [x1, x2] = load_pair(&inputs)?;
    let stage = separate_stage(mode);
    let dir = layout.separate(mode);
    create_dir(&dir)?;
    let mut manifest = StageManifest::new(&stage, config);
    manifest.inputs.extend(inputs.iter().cloned());
    let train = config.train_config(mode);
    manifest.seed("train", train.seed);

    let runs = train_series(&x1, &x2, train, config.runs)?;
    for r in &runs {
        let name = run_name(r.run);
        manifest.seed(&name, r.model.meta.seed);
        let run_dir = dir.join(&name);
        create_dir(&run_dir)?;
        r.model
            .save(&run_dir.join("model.json"))
            .with_context(|| format!("saving model of run {}", r.run))?;
        let (y1, y2) = separate(&r.model, &x1, &x2)?;
        for (y, i) in [(&y1, 1), (&y2, 2)] {
            write_pfm(y, &run_dir.join(format!("y{i}.pfm")))?;
            save_png(
                &saturate_tails(y, DISPLAY_TAIL)?,
                &run_dir.join(format!("y{i}.display.png")),
                BitDepth::Sixteen,
            )?;
            manifest.output(format!("{name}/y{i}.pfm"));
            manifest.output(format!("{name}/y{i}.display.png"));
        }
        write_text(&run_dir.join("trace.csv"), &objective_trace_csv(&r.model.meta.objective_trace))?;
        manifest.output(format!("{name}/model.json"));
        manifest.output(format!("{name}/trace.csv"));
    }

    let sources = source_paths(config, &layout);
    let mut ranking_summary = serde_json::Value::Null;
    if available(&sources) {
        let [s1, s2] = load_pair(&sources)?;
        let ranking = rank_runs(&runs, [&x1, &x2], [&s1, &s2], config)?;
        write_json_atomic(&dir.join("ranking.json"), &serde_json::to_string_pretty(&ranking)?)?;
        manifest.output("ranking.json");
        for (tag, run) in [("best", ranking.best), ("worst", ranking.worst)] {
            let file = format!("{tag}.model.json");
            std::fs::copy(dir.join(run_name(run)).join("model.json"), dir.join(&file))
                .with_context(|| format!("tagging {tag} run"))?;
            manifest.output(file);
        }
        ranking_summary = serde_json::json!({ "best": ranking.best, "worst": ranking.worst });
    }
    manifest.details = serde_json::json!({
        "mode": mode.to_string(),
        "runs": config.runs,
        "train": train,
        "display_tail": DISPLAY_TAIL,
        "ranking": ranking_summary,
    });
    manifest.write(&dir)?;
    Ok(manifest)
}

fn rank_runs(
    runs: &[TrainedRun],
    mixture: [&ImageGray; 2],
    sources: [&ImageGray; 2],
    config: &PipelineConfig,
) -> Result<Ranking> {
    let reports = runs
        .iter()
        .map(|r| evaluate_run(r, mixture, sources, config.eval.params))
        .collect::<misep::Result<Vec<_>>>()?;
    let summary = summarize(&reports)?;
    Ok(Ranking {
        best: summary.best,
        worst: summary.worst,
        runs: runs
            .iter()
            .zip(reports)
            .map(|(r, report)| RankedRun {
                run: r.run,
                seed: r.model.meta.seed,
                final_objective: r.model.meta.objective_trace.last().copied().unwrap_or(f64::NAN),
                mean_q2_db: report.mean_q2(),
                report,
            })
            .collect(),
    })
}

/// Runs every configured mode in order.
pub fn cmd_separate(config: &PipelineConfig) -> Result<Vec<StageManifest>> {
    config.modes.iter().map(|&m| cmd_separate_mode(config, m)).collect()
}

/// Rebuilds the trained runs of one mode from their saved models.
fn load_runs(dir: &Path, x: [&ImageGray; 2], train: &TrainConfig) -> Result<Vec<TrainedRun>> {
    let manifest = StageManifest::read(dir)?;
    let mut runs = Vec::new();
    for run in 0.. {
        let path = dir.join(run_name(run)).join("model.json");
        if !manifest.outputs.iter().any(|o| dir.join(o) == path) {
            break;
        }
        let model = SeparatorModel::load(&path).with_context(|| format!("loading {}", path.display()))?;
        let cfg = TrainConfig {
            seed: model.meta.seed,
            ..train.clone()
        };
        runs.push(TrainedRun {
            run,
            training_set: training_set(x[0], x[1], &cfg)?,
            model,
        });
    }
    if runs.is_empty() {
        bail!("{} lists no trained runs", dir.display());
    }
    Ok(runs)
}

fn scatter_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("x,y\n");
    for (a, b) in points {
        out.push_str(&format!("{a},{b}\n"));
    }
    out
}

/// Scores baseline, trained separations and externally extracted images
/// against the sources; optionally dumps scatter samples per panel.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<(StageManifest, ReportTable)> {
    let layout = Layout::new(config);
    let sources = source_paths(config, &layout);
    if !available(&sources) {
        bail!("missing inputs: source images {} and {}", sources[0].display(), sources[1].display());
    }
    let aligned = aligned_paths(config, &layout);
    let mixtures = if available(&aligned) { aligned } else { mixture_paths(config, &layout) };
    if !available(&mixtures) {
        bail!("missing inputs: no aligned or raw mixture pair found");
    }
    let [s1, s2] = load_pair(&sources)?;
    let [x1, x2] = load_pair(&mixtures)?;
    s1.same_dims(&x1).context("sources and mixtures differ in size")?;

    let dir = layout.stage(EVALUATE);
    create_dir(&dir)?;
    let mut manifest = StageManifest::new(EVALUATE, config);
    manifest.inputs.extend(sources.iter().chain(&mixtures).cloned());
    manifest.seed("eval", config.eval.params.seed);

    let baseline = evaluate([&x1, &x2], [&s1, &s2], None, config.eval.params)?;
    let mut series: Vec<(Method, Vec<QualityReport>)> = Vec::new();
    let mut scatter_panels: Vec<(String, [ImageGray; 2])> = vec![
        ("sources".into(), [s1.clone(), s2.clone()]),
        ("mixtures".into(), [x1.clone(), x2.clone()]),
    ];
    for mode in [SeparatorKind::Linear, SeparatorKind::Nonlinear] {
        let sep_dir = layout.separate(mode);
        if !sep_dir.join(MANIFEST_FILE).exists() {
            continue;
        }
        let runs = load_runs(&sep_dir, [&x1, &x2], config.train_config(mode))?;
        manifest.inputs.push(sep_dir.clone());
        let reports = runs
            .iter()
            .map(|r| evaluate_run(r, [&x1, &x2], [&s1, &s2], config.eval.params))
            .collect::<misep::Result<Vec<_>>>()?;
        let best = summarize(&reports)?.best;
        let (y1, y2) = separate(&runs[best].model, &x1, &x2)?;
        scatter_panels.push((format!("{mode}-best"), [y1, y2]));
        let method = match mode {
            SeparatorKind::Linear => Method::Linear,
            SeparatorKind::Nonlinear => Method::Nonlinear,
        };
        series.push((method, reports));
    }
    if let Some(paths) = &config.paths.extracted {
        let [e1, e2] = load_pair(paths)?;
        manifest.inputs.extend(paths.iter().cloned());
        series.push((Method::Extracted, vec![evaluate([&e1, &e2], [&s1, &s2], None, config.eval.params)?]));
        scatter_panels.push(("extracted".into(), [e1, e2]));
    }

    let table = build_report(&config.pair, &baseline, &series)?;
    if config.formats.csv {
        write_text(&dir.join("report.csv"), &table.to_csv())?;
        manifest.output("report.csv");
    }
    if config.formats.json {
        write_text(&dir.join("report.json"), &table.to_json())?;
        manifest.output("report.json");
    }

    if config.eval.scatter_points > 0 {
        manifest.seed("scatter", config.eval.scatter_seed);
        let locations = sample_pixel_pairs(&s1, &s2, config.eval.scatter_points, config.eval.scatter_seed, None)?;
        for (name, [a, b]) in &scatter_panels {
            let points = locations.resample_from(a, b)?.samples;
            let file = format!("scatter-{name}.csv");
            write_text(&dir.join(&file), &scatter_csv(&points))?;
            manifest.output(file);
        }
    }
    manifest.details = serde_json::json!({
        "pair": config.pair,
        "eval": config.eval.params,
        "scatter_points": config.eval.scatter_points,
        "methods": series.iter().map(|(m, r)| (m.as_str(), r.len())).collect::<std::collections::BTreeMap<_, _>>(),
    });
    manifest.write(&dir)?;
    Ok((manifest, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: String,
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub master_seed: u64,
    pub config_fingerprint: String,
    pub config: String,
    pub stages: Vec<StageRecord>,
    pub seeds: std::collections::BTreeMap<String, u64>,
}

/// Runs every stage in order, skipping stages whose manifest shows a
/// finished run of the same configuration. Stops at the first failure.
pub fn cmd_pipeline(config: &PipelineConfig) -> Result<PipelineManifest> {
    let layout = Layout::new(config);
    create_dir(&layout.root)?;
    let mut record = PipelineManifest {
        master_seed: config.seed,
        config_fingerprint: config.fingerprint(),
        config: config.kv.to_text(),
        stages: Vec::new(),
        seeds: Default::default(),
    };
    type Stage<'a> = (String, Box<dyn Fn() -> Result<()> + 'a>);
    let mut stages: Vec<Stage> = Vec::new();
    if config.paths.mixtures.is_none() {
        stages.push((SIMULATE.into(), Box::new(|| cmd_simulate(config).map(drop))));
    }
    if config.paths.aligned.is_none() {
        stages.push((ALIGN.into(), Box::new(|| cmd_align(config).map(drop))));
    }
    for mode in [SeparatorKind::Linear, SeparatorKind::Nonlinear] {
        stages.push((separate_stage(mode), Box::new(move || cmd_separate_mode(config, mode).map(drop))));
    }
    stages.push((EVALUATE.into(), Box::new(|| cmd_evaluate(config).map(drop))));

    // once a stage reruns, everything downstream of it reruns too
    let mut rerun = false;
    for (name, run) in &stages {
        let dir = layout.stage(name);
        let status = if !rerun && StageManifest::is_complete(&dir, name, config) {
            "reused"
        } else {
            rerun = true;
            run().with_context(|| format!("stage `{name}` failed"))?;
            "completed"
        };
        let m = StageManifest::read(&dir)?;
        for (k, v) in &m.seeds {
            record.seeds.insert(format!("{name}/{k}"), *v);
        }
        record.stages.push(StageRecord {
            stage: name.clone(),
            status: status.into(),
            manifest: Some(PathBuf::from(name).join(MANIFEST_FILE)),
        });
        write_json_atomic(&layout.root.join("manifest.json"), &serde_json::to_string_pretty(&record)?)?;
    }
    Ok(record)
}
