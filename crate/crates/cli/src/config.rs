//! Pipeline configuration assembled from a flat `key = value` file and
//! command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use misep::align::AlignParams;
use misep::config::KeyValues;
use misep::metrics::EvalParams;
use misep::mixsim::MixParams;
use misep::network::SeparatorKind;
use misep::seed::{derive_seed, fnv1a64};
use misep::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimPreset {
    Bars,
    /// User-supplied source images (`sim.source1`, `sim.source2`).
    Images,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub preset: SimPreset,
    pub bars: usize,
    pub size: usize,
    pub bars_seed: u64,
    pub images: Option<[PathBuf; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    /// Mirror the second side left-to-right before registration.
    pub flip: bool,
    pub shift: (i64, i64),
    pub local: bool,
    pub params: AlignParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub params: EvalParams,
    /// Rows per scatter panel; zero disables the dump.
    pub scatter_points: usize,
    pub scatter_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportFormats {
    pub csv: bool,
    pub json: bool,
}

/// Explicit input images. Unset entries fall back to the outputs of the
/// previous stage in the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputPaths {
    pub sources: Option<[PathBuf; 2]>,
    pub mixtures: Option<[PathBuf; 2]>,
    pub aligned: Option<[PathBuf; 2]>,
    pub extracted: Option<[PathBuf; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub runs: usize,
    pub pair: String,
    pub out_dir: PathBuf,
    pub modes: Vec<SeparatorKind>,
    pub sim: SimConfig,
    pub mix: MixParams,
    pub align: AlignConfig,
    pub linear: TrainConfig,
    pub nonlinear: TrainConfig,
    pub eval: EvalConfig,
    pub paths: InputPaths,
    pub formats: ReportFormats,
    /// Effective key-value text after overrides.
    pub kv: KeyValues,
}

/// Command-line flags that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub mode: Option<SeparatorKind>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, kv: &mut KeyValues) {
        if let Some(s) = self.seed {
            kv.set("seed", s);
        }
        if let Some(r) = self.runs {
            kv.set("runs", r);
        }
        if let Some(m) = self.mode {
            kv.set("modes", m);
        }
        if let Some(o) = &self.out {
            kv.set("out", o.display());
        }
    }
}

fn path_pair(kv: &KeyValues, prefix: &str) -> Result<Option<[PathBuf; 2]>> {
    let a = kv.get_str(&format!("{prefix}1"));
    let b = kv.get_str(&format!("{prefix}2"));
    match (a, b) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => Ok(Some([PathBuf::from(a), PathBuf::from(b)])),
        _ => bail!("`{prefix}1` and `{prefix}2` must be given together"),
    }
}

fn parse_modes(text: &str) -> Result<Vec<SeparatorKind>> {
    let mut modes = Vec::new();
    for m in text.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        let kind: SeparatorKind = m.parse().map_err(|_| anyhow::anyhow!("unknown mode `{m}`"))?;
        if !modes.contains(&kind) {
            modes.push(kind);
        }
    }
    if modes.is_empty() {
        bail!("`modes` lists no separator mode");
    }
    Ok(modes)
}

impl PipelineConfig {
    pub fn from_kv(kv: KeyValues) -> Result<Self> {
        let seed: u64 = kv.get_or("seed", 1)?;
        let preset = match kv.get_str("sim.preset").unwrap_or("bars") {
            "bars" => SimPreset::Bars,
            "images" => SimPreset::Images,
            other => bail!("unknown sim.preset `{other}`"),
        };
        let sim = SimConfig {
            preset,
            bars: kv.get_or("sim.bars", 25)?,
            size: kv.get_or("sim.size", 500)?,
            bars_seed: kv.get_or("sim.seed", derive_seed(seed, "bars"))?,
            images: path_pair(&kv, "sim.source")?,
        };
        if preset == SimPreset::Images && sim.images.is_none() {
            bail!("sim.preset = images needs sim.source1 and sim.source2");
        }

        let mut mix_kv = kv.clone();
        if kv.get_str("mix.seed").is_none() {
            mix_kv.set("mix.seed", derive_seed(seed, "mix"));
        }
        let mix = MixParams::from_config(&mix_kv)?;

        let d = AlignParams::default();
        let align = AlignConfig {
            flip: kv.get_or("align.flip", false)?,
            shift: (kv.get_or("align.shift_x", 0)?, kv.get_or("align.shift_y", 0)?),
            local: kv.get_or("align.local", true)?,
            params: AlignParams {
                block_size: kv.get_or("align.block_size", d.block_size)?,
                upsample: kv.get_or("align.upsample", d.upsample)?,
                search_radius: kv.get_or("align.search_radius", d.search_radius)?,
            },
        };

        let mut train_kv = kv.clone();
        if kv.get_str("train.seed").is_none() {
            train_kv.set("train.seed", derive_seed(seed, "train"));
        }
        let linear = TrainConfig::from_config(&train_kv, SeparatorKind::Linear)?;
        let nonlinear = TrainConfig::from_config(&train_kv, SeparatorKind::Nonlinear)?;

        let de = EvalParams::default();
        let eval = EvalConfig {
            params: EvalParams {
                samples: kv.get_or("eval.samples", de.samples)?,
                k: kv.get_or("eval.k", de.k)?,
                seed: kv.get_or("eval.seed", derive_seed(seed, "eval"))?,
            },
            scatter_points: kv.get_or("eval.scatter_points", 5000)?,
            scatter_seed: derive_seed(seed, "scatter"),
        };

        let formats_text = kv.get_str("report.formats").unwrap_or("csv,json");
        let mut formats = ReportFormats { csv: false, json: false };
        for f in formats_text.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match f {
                "csv" => formats.csv = true,
                "json" => formats.json = true,
                other => bail!("unknown report format `{other}`"),
            }
        }

        let runs: usize = kv.get_or("runs", 10)?;
        if runs == 0 {
            bail!("runs must be positive");
        }
        let config = Self {
            seed,
            runs,
            pair: kv.get_str("pair").unwrap_or("bars").to_string(),
            out_dir: PathBuf::from(kv.get_str("out").unwrap_or("out")),
            modes: parse_modes(kv.get_str("modes").unwrap_or("linear,nonlinear"))?,
            sim,
            mix,
            align,
            linear,
            nonlinear,
            eval,
            paths: InputPaths {
                sources: path_pair(&kv, "paths.source")?,
                mixtures: path_pair(&kv, "paths.mixture")?,
                aligned: path_pair(&kv, "paths.aligned")?,
                extracted: path_pair(&kv, "paths.extracted")?,
            },
            formats,
            kv,
        };
        config.validate()?;
        Ok(config)
    }

    /// Reads the optional config file and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut kv = match path {
            Some(p) => KeyValues::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => KeyValues::new(),
        };
        overrides.apply(&mut kv);
        Self::from_kv(kv)
    }

    /// Checks that every explicitly referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let explicit = [
            &self.sim.images,
            &self.paths.sources,
            &self.paths.mixtures,
            &self.paths.aligned,
            &self.paths.extracted,
        ];
        for pair in explicit.into_iter().flatten() {
            for p in pair {
                if !p.exists() {
                    bail!("input {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    pub fn train_config(&self, mode: SeparatorKind) -> &TrainConfig {
        match mode {
            SeparatorKind::Linear => &self.linear,
            SeparatorKind::Nonlinear => &self.nonlinear,
        }
    }

    /// Hash of the effective configuration, recorded in every stage manifest.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a64(self.kv.to_text().as_bytes()))
    }
}
