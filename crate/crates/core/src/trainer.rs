//! Entropy-maximization training of a separator model.
//!
//! For a training set `x_1..x_N` the objective is
//!
//! ```text
//! L = (1/N) sum_n [ ln|det J_F(x_n)| + ln psi_1'(y_1n) + ln psi_2'(y_2n) ]
//! ```
//!
//! which is, up to the constant entropy of `x`, the entropy of the squashed
//! outputs `z = psi(F(x))`. It is maximized by full-batch sign-based ascent
//! with per-parameter adaptive steps.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::imagery::{sample_pixel_pairs, ImageGray, PixelPairSet};
use crate::metrics::{evaluate, ks_distance_uniform, EvalParams, QualityReport};
use crate::network::{det2, init_identity, Mat2, PsiNet, Separator, SeparatorKind, UntiedSeparator};
use crate::seed::derive_seed;

pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_DET_FLOOR: f64 = 1e-12;
pub const STEP_INCREASE: f64 = 1.2;
pub const STEP_DECREASE: f64 = 0.5;

/// Samples per reduction chunk. Partial sums are combined in chunk order, so
/// results do not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: SeparatorKind,
    pub epochs: usize,
    /// Epochs during which the hidden-to-output weights of a nonlinear `F`
    /// stay at zero.
    pub priming_epochs: usize,
    pub train_set_size: usize,
    /// Initial adaptive step.
    pub learning_rate: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub det_floor: f64,
    /// Hidden units per output group of a nonlinear `F`.
    pub hidden_units: usize,
    pub psi_hidden: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(mode: SeparatorKind) -> Self {
        Self {
            mode,
            epochs: match mode {
                SeparatorKind::Linear => 200,
                SeparatorKind::Nonlinear => 400,
            },
            priming_epochs: 100,
            train_set_size: 5000,
            learning_rate: 1e-3,
            min_step: 1e-7,
            max_step: 1e-1,
            det_floor: DEFAULT_DET_FLOOR,
            hidden_units: 20,
            psi_hidden: 20,
            seed: 0,
        }
    }

    /// Priming epochs that apply in this mode.
    pub fn effective_priming(&self) -> usize {
        match self.mode {
            SeparatorKind::Linear => 0,
            SeparatorKind::Nonlinear => self.priming_epochs.min(self.epochs),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.mode == SeparatorKind::Nonlinear && self.priming_epochs > self.epochs {
            return bad(format!(
                "priming_epochs {} exceeds epochs {}",
                self.priming_epochs, self.epochs
            ));
        }
        if self.train_set_size == 0 {
            return bad("train_set_size must be positive".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.min_step > 0.0 && self.min_step <= self.learning_rate && self.learning_rate <= self.max_step) {
            return bad("step bounds must satisfy 0 < min <= initial <= max".into());
        }
        if self.det_floor.is_nan() || self.det_floor <= 0.0 {
            return bad(format!("det floor {} must be positive", self.det_floor));
        }
        if self.psi_hidden == 0 {
            return bad("psi networks need at least one hidden unit".into());
        }
        Ok(())
    }

    /// Mode defaults overridden by `train.*` keys. Epochs are read from
    /// `train.<mode>.epochs`, then `train.epochs`.
    pub fn from_config(kv: &KeyValues, mode: SeparatorKind) -> Result<Self> {
        let d = Self::new(mode);
        let epochs = match kv.get(&format!("train.{mode}.epochs"))? {
            Some(e) => e,
            None => kv.get_or("train.epochs", d.epochs)?,
        };
        let c = Self {
            mode,
            epochs,
            priming_epochs: kv.get_or("train.priming_epochs", d.priming_epochs)?,
            train_set_size: kv.get_or("train.train_set_size", d.train_set_size)?,
            learning_rate: kv.get_or("train.learning_rate", d.learning_rate)?,
            min_step: kv.get_or("train.min_step", d.min_step)?,
            max_step: kv.get_or("train.max_step", d.max_step)?,
            det_floor: kv.get_or("train.det_floor", d.det_floor)?,
            hidden_units: kv.get_or("train.hidden_units", d.hidden_units)?,
            psi_hidden: kv.get_or("train.psi_hidden", d.psi_hidden)?,
            seed: kv.get_or("train.seed", d.seed)?,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub seed: u64,
    /// Objective at the start of every epoch.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorModel {
    pub separator: Separator,
    pub psi: [PsiNet; 2],
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    version: u32,
    kind: SeparatorKind,
    seed: u64,
    #[serde(rename = "F")]
    f: Separator,
    psi: [PsiNet; 2],
    epochs: usize,
    objective_trace: Vec<f64>,
}

impl SeparatorModel {
    /// Untrained model: identity `F` and freshly initialized `psi` networks,
    /// seeded from `config.seed`.
    pub fn initial(config: &TrainConfig) -> Self {
        let seed = config.seed;
        let psi_seed = derive_seed(seed, "psi-init");
        let psi = [
            PsiNet::init(config.psi_hidden, derive_seed(psi_seed, "1")),
            PsiNet::init(config.psi_hidden, derive_seed(psi_seed, "2")),
        ];
        Self {
            separator: init_identity(config.mode, config.hidden_units, derive_seed(seed, "f-init")),
            psi,
            meta: TrainingMeta {
                epochs_run: 0,
                seed,
                objective_trace: Vec::new(),
            },
        }
    }

    pub fn kind(&self) -> SeparatorKind {
        self.separator.kind()
    }

    pub fn param_count(&self) -> usize {
        self.separator.param_count() + self.psi[0].param_count() + self.psi[1].param_count()
    }

    /// Separator parameters followed by both `psi` networks.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut p = self.separator.to_flat();
        p.extend(self.psi[0].to_flat());
        p.extend(self.psi[1].to_flat());
        p
    }

    pub fn set_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let a = self.separator.param_count();
        let b = a + self.psi[0].param_count();
        self.separator.set_flat(&p[..a]);
        self.psi[0].set_flat(&p[a..b]);
        self.psi[1].set_flat(&p[b..]);
    }

    /// Separated pair `y = F(x)` and squashed pair `z = psi(y)`.
    pub fn transform(&self, x: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let (y, _) = self.separator.forward(x);
        (y, [self.psi[0].eval(y[0]).z, self.psi[1].eval(y[1]).z])
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            version: MODEL_VERSION,
            kind: self.kind(),
            seed: self.meta.seed,
            f: self.separator.clone(),
            psi: self.psi.clone(),
            epochs: self.meta.epochs_run,
            objective_trace: self.meta.objective_trace.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::MalformedModel("missing version".into()))?;
        if version != MODEL_VERSION as u64 {
            return Err(Error::VersionMismatch {
                found: version.min(u32::MAX as u64) as u32,
                expected: MODEL_VERSION,
            });
        }
        let doc: ModelDocument =
            serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if doc.kind != doc.f.kind() {
            return Err(Error::MalformedModel(format!(
                "kind `{}` disagrees with separator `{}`",
                doc.kind,
                doc.f.kind()
            )));
        }
        if doc.objective_trace.len() != doc.epochs {
            return Err(Error::MalformedModel("objective trace length differs from epochs".into()));
        }
        for p in &doc.psi {
            if p.bias.len() != p.log_in.len() || p.log_out.len() != p.log_in.len() || p.log_in.is_empty() {
                return Err(Error::MalformedModel("inconsistent psi network sizes".into()));
            }
        }
        Ok(Self {
            separator: doc.f,
            psi: doc.psi,
            meta: TrainingMeta {
                epochs_run: doc.epochs,
                seed: doc.seed,
                objective_trace: doc.objective_trace,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Objective value with its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// Mean `ln|det J_F|`.
    pub log_det: f64,
    /// Mean `sum_i ln psi_i'`.
    pub log_psi: f64,
    /// Samples whose `|det J_F|` fell below the floor.
    pub flagged: usize,
}

struct Partial {
    log_det: f64,
    log_psi: f64,
    flagged: usize,
    grad: Vec<f64>,
}

/// Objective and (optionally) its gradient in the layout untied separator
/// parameters, then `psi[0]`, then `psi[1]`.
fn evaluate_untied(
    samples: &[(f64, f64)],
    f: &UntiedSeparator,
    psi: &[PsiNet; 2],
    det_floor: f64,
    with_grad: bool,
) -> (ObjectiveValue, Vec<f64>) {
    assert!(!samples.is_empty(), "objective needs a nonempty batch");
    let prepared = [psi[0].prepare(), psi[1].prepare()];
    let nf = f.param_count();
    let np = [psi[0].param_count(), psi[1].param_count()];
    let total = if with_grad { nf + np[0] + np[1] } else { 0 };
    let ln_floor = det_floor.ln();

    let partials: Vec<Partial> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut p = Partial {
                log_det: 0.0,
                log_psi: 0.0,
                flagged: 0,
                grad: vec![0.0; total],
            };
            for &(x1, x2) in chunk {
                let x = [x1, x2];
                let (y, j) = f.forward(x);
                let det = det2(&j);
                let dj: Mat2 = if det.abs() < det_floor {
                    p.flagged += 1;
                    p.log_det += ln_floor;
                    [[0.0; 2]; 2]
                } else {
                    p.log_det += det.abs().ln();
                    // d ln|det J| / dJ = J^{-T}
                    [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]]
                };
                if with_grad {
                    let (gf, rest) = p.grad.split_at_mut(nf);
                    let (g0, g1) = rest.split_at_mut(np[0]);
                    let e0 = prepared[0].accumulate_ln_slope_gradient(y[0], g0);
                    let e1 = prepared[1].accumulate_ln_slope_gradient(y[1], g1);
                    p.log_psi += e0.ln_dz + e1.ln_dz;
                    f.accumulate_gradient(x, &dj, [e0.d_ln_dz_dy, e1.d_ln_dz_dy], gf);
                } else {
                    p.log_psi += prepared[0].eval(y[0]).ln_dz + prepared[1].eval(y[1]).ln_dz;
                }
            }
            p
        })
        .collect();

    let mut log_det = 0.0;
    let mut log_psi = 0.0;
    let mut flagged = 0;
    let mut grad = vec![0.0; total];
    for p in &partials {
        log_det += p.log_det;
        log_psi += p.log_psi;
        flagged += p.flagged;
        for (g, v) in grad.iter_mut().zip(&p.grad) {
            *g += v;
        }
    }
    let n = samples.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    let (log_det, log_psi) = (log_det / n, log_psi / n);
    (
        ObjectiveValue {
            value: log_det + log_psi,
            log_det,
            log_psi,
            flagged,
        },
        grad,
    )
}

pub fn objective(samples: &[(f64, f64)], model: &SeparatorModel, det_floor: f64) -> ObjectiveValue {
    evaluate_untied(samples, &model.separator.untie(), &model.psi, det_floor, false).0
}

/// Objective and exact gradient in [`SeparatorModel::to_flat`] layout. Each
/// tied separator parameter receives the sum of the gradients of its copies.
pub fn gradient(samples: &[(f64, f64)], model: &SeparatorModel, det_floor: f64) -> (ObjectiveValue, Vec<f64>) {
    let untied = model.separator.untie();
    let (value, g) = evaluate_untied(samples, &untied, &model.psi, det_floor, true);
    let nf = untied.param_count();
    let mut out = model.separator.fold_gradient(&g[..nf]);
    out.extend_from_slice(&g[nf..]);
    (value, out)
}

/// Objective of an unconstrained separator with the given `psi` networks.
pub fn untied_objective(samples: &[(f64, f64)], f: &UntiedSeparator, psi: &[PsiNet; 2], det_floor: f64) -> ObjectiveValue {
    evaluate_untied(samples, f, psi, det_floor, false).0
}

/// Gradient w.r.t. the untied separator parameters, then both `psi` networks.
pub fn untied_gradient(
    samples: &[(f64, f64)],
    f: &UntiedSeparator,
    psi: &[PsiNet; 2],
    det_floor: f64,
) -> (ObjectiveValue, Vec<f64>) {
    evaluate_untied(samples, f, psi, det_floor, true)
}

/// Sign-based ascent with per-parameter step adaptation.
#[derive(Debug, Clone)]
pub struct AdaptiveSteps {
    steps: Vec<f64>,
    previous: Vec<f64>,
    min_step: f64,
    max_step: f64,
}

impl AdaptiveSteps {
    pub fn new(n: usize, initial: f64, min_step: f64, max_step: f64) -> Self {
        Self {
            steps: vec![initial; n],
            previous: vec![0.0; n],
            min_step,
            max_step,
        }
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Grows a step by [`STEP_INCREASE`] when its gradient keeps its sign,
    /// shrinks it by [`STEP_DECREASE`] on a sign flip, then moves the
    /// parameter by the step in the gradient's direction. Zero gradients
    /// leave both the parameter and its step unchanged.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        for k in 0..params.len() {
            let g = grad[k];
            let agreement = g * self.previous[k];
            if agreement > 0.0 {
                self.steps[k] = (self.steps[k] * STEP_INCREASE).min(self.max_step);
            } else if agreement < 0.0 {
                self.steps[k] = (self.steps[k] * STEP_DECREASE).max(self.min_step);
            }
            if g > 0.0 {
                params[k] += self.steps[k];
            } else if g < 0.0 {
                params[k] -= self.steps[k];
            }
            self.previous[k] = g;
        }
    }
}

/// The seeded training set for `config`; independent of the mode.
pub fn training_set(m1: &ImageGray, m2: &ImageGray, config: &TrainConfig) -> Result<PixelPairSet> {
    sample_pixel_pairs(m1, m2, config.train_set_size, derive_seed(config.seed, "sampling"), None)
}

/// Trains a model on a given set of pixel pairs.
pub fn fit(samples: &PixelPairSet, config: &TrainConfig) -> Result<SeparatorModel> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let mut model = SeparatorModel::initial(config);
    let mut params = model.to_flat();
    let mut opt = AdaptiveSteps::new(params.len(), config.learning_rate, config.min_step, config.max_step);
    let clamped = model.separator.output_weight_indices();
    let priming = config.effective_priming();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (value, mut grad) = gradient(&samples.samples, &model, config.det_floor);
        if !value.value.is_finite() {
            return Err(Error::TrainingAborted {
                epoch,
                reason: format!("objective is {}", value.value),
            });
        }
        if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::TrainingAborted {
                epoch,
                reason: format!("gradient component {k} is {}", grad[k]),
            });
        }
        trace.push(value.value);
        if epoch < priming {
            for &k in &clamped {
                grad[k] = 0.0;
            }
        }
        opt.ascend(&mut params, &grad);
        model.set_flat(&params);
    }
    model.meta = TrainingMeta {
        epochs_run: config.epochs,
        seed: config.seed,
        objective_trace: trace,
    };
    Ok(model)
}

/// Samples a training set from the mixture pair and trains on it.
pub fn train(m1: &ImageGray, m2: &ImageGray, config: &TrainConfig) -> Result<SeparatorModel> {
    m1.same_dims(m2)?;
    fit(&training_set(m1, m2, config)?, config)
}

/// Applies `F` pixel-wise. Outputs are not re-ranged.
pub fn separate(model: &SeparatorModel, m1: &ImageGray, m2: &ImageGray) -> Result<(ImageGray, ImageGray)> {
    m1.same_dims(m2)?;
    let untied = model.separator.untie();
    let ys: Vec<[f64; 2]> = m1
        .data()
        .par_iter()
        .zip(m2.data().par_iter())
        .map(|(&a, &b)| untied.forward([a, b]).0)
        .collect();
    let (w, h) = (m1.width(), m1.height());
    Ok((
        ImageGray::new(w, h, ys.iter().map(|y| y[0]).collect())?,
        ImageGray::new(w, h, ys.iter().map(|y| y[1]).collect())?,
    ))
}

pub fn objective_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,objective\n");
    for (e, v) in trace.iter().enumerate() {
        out.push_str(&format!("{e},{v}\n"));
    }
    out
}

/// Seed of run `run` in a series with master seed `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, &format!("run-{run}"))
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub run: usize,
    pub model: SeparatorModel,
    pub training_set: PixelPairSet,
}

/// Trains `n_runs` models that differ only in their derived sub-seeds
/// (training-set selection and initialization). `config.seed` is the master.
pub fn train_series(m1: &ImageGray, m2: &ImageGray, config: &TrainConfig, n_runs: usize) -> Result<Vec<TrainedRun>> {
    m1.same_dims(m2)?;
    config.validate()?;
    (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let cfg = TrainConfig {
                seed: run_seed(config.seed, run),
                ..config.clone()
            };
            let training_set = training_set(m1, m2, &cfg)?;
            let model = fit(&training_set, &cfg).map_err(|e| match e {
                Error::TrainingAborted { epoch, reason } => Error::TrainingAborted {
                    epoch,
                    reason: format!("run {run}: {reason}"),
                },
                other => other,
            })?;
            Ok(TrainedRun {
                run,
                model,
                training_set,
            })
        })
        .collect()
}

/// Scores a trained run against known sources. Evaluation pixels are drawn
/// disjoint from the run's training set, with a seed derived from the run.
pub fn evaluate_run(
    run: &TrainedRun,
    mixture: [&ImageGray; 2],
    sources: [&ImageGray; 2],
    eval: EvalParams,
) -> Result<QualityReport> {
    let (y1, y2) = separate(&run.model, mixture[0], mixture[1])?;
    let params = EvalParams {
        seed: derive_seed(run.model.meta.seed, "eval"),
        ..eval
    };
    evaluate([&y1, &y2], sources, Some(&run.training_set), params)
}

/// Kolmogorov-Smirnov distance from uniform of each squashed output
/// `z_i = psi_i(y_i)` over `n` pixels drawn disjoint from the run's training
/// set. Small values mean `psi_i` tracks the CDF of `y_i`.
pub fn output_uniformity(run: &TrainedRun, m1: &ImageGray, m2: &ImageGray, n: usize, seed: u64) -> Result<[f64; 2]> {
    let held_out = sample_pixel_pairs(m1, m2, n, seed, Some(&run.training_set))?;
    let z: Vec<[f64; 2]> = held_out.samples.iter().map(|&(a, b)| run.model.transform([a, b]).1).collect();
    Ok([
        ks_distance_uniform(&z.iter().map(|v| v[0]).collect::<Vec<_>>())?,
        ks_distance_uniform(&z.iter().map(|v| v[1]).collect::<Vec<_>>())?,
    ])
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trained: TrainedRun,
    pub report: QualityReport,
}

/// Ten-run style protocol: trains `n_runs` models and scores each one.
pub fn run_series(
    mixture: [&ImageGray; 2],
    sources: [&ImageGray; 2],
    config: &TrainConfig,
    n_runs: usize,
    eval: EvalParams,
) -> Result<Vec<RunResult>> {
    let runs = train_series(mixture[0], mixture[1], config, n_runs)?;
    runs.into_par_iter()
        .map(|trained| {
            let report = evaluate_run(&trained, mixture, sources, eval)?;
            Ok(RunResult { trained, report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::FLinear;

    /// One-unit psi with slope 1 centered at `center`: `psi'` is exactly 1/4
    /// there.
    fn quarter_slope_psi(center: f64) -> PsiNet {
        PsiNet {
            log_in: vec![0.0],
            bias: vec![-center],
            log_out: vec![0.0],
        }
    }

    fn linear_model(a: f64, b: f64, c1: f64, c2: f64) -> SeparatorModel {
        SeparatorModel {
            separator: Separator::Linear(FLinear {
                diagonal: a,
                off_diagonal: b,
            }),
            psi: [quarter_slope_psi(c1), quarter_slope_psi(c2)],
            meta: TrainingMeta::default(),
        }
    }

    #[test]
    fn closed_form_objective() {
        let batch = vec![(0.3, 0.7); 5];
        let id = objective(&batch, &linear_model(1.0, 0.0, 0.3, 0.7), DEFAULT_DET_FLOOR);
        assert!((id.value - 2.0 * 0.25f64.ln()).abs() < 1e-14);
        assert_eq!(id.flagged, 0);
        let scaled = objective(&batch, &linear_model(2.0, 0.0, 0.6, 1.4), DEFAULT_DET_FLOOR);
        assert!((scaled.value - id.value - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn singular_separator_is_floored_and_flagged() {
        let batch = vec![(0.3, 0.7), (0.1, 0.2)];
        let v = objective(&batch, &linear_model(1.0, 1.0, 0.5, 0.5), DEFAULT_DET_FLOOR);
        assert_eq!(v.flagged, 2);
        assert_eq!(v.log_det, DEFAULT_DET_FLOOR.ln());
        assert!(v.value.is_finite());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let lin = TrainConfig::new(SeparatorKind::Linear);
        assert_eq!(lin.epochs, 200);
        assert_eq!(lin.effective_priming(), 0);
        let non = TrainConfig::new(SeparatorKind::Nonlinear);
        assert_eq!((non.epochs, non.priming_epochs, non.train_set_size), (400, 100, 5000));
        let kv = KeyValues::parse("train.epochs = 7\ntrain.nonlinear.epochs = 9\ntrain.priming_epochs = 3\n").unwrap();
        assert_eq!(TrainConfig::from_config(&kv, SeparatorKind::Linear).unwrap().epochs, 7);
        assert_eq!(TrainConfig::from_config(&kv, SeparatorKind::Nonlinear).unwrap().epochs, 9);
        let kv = KeyValues::parse("train.epochs = 5\n").unwrap();
        assert!(TrainConfig::from_config(&kv, SeparatorKind::Nonlinear).is_err());
        assert!(TrainConfig {
            det_floor: 0.0,
            ..lin.clone()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn adaptive_steps_rule() {
        let mut opt = AdaptiveSteps::new(3, 1e-3, 1e-7, 1e-1);
        let mut p = vec![0.0; 3];
        opt.ascend(&mut p, &[1.0, -1.0, 0.0]);
        assert_eq!(p, vec![1e-3, -1e-3, 0.0]);
        opt.ascend(&mut p, &[2.0, 1.0, 0.0]);
        assert_eq!(opt.steps()[0], 1e-3 * 1.2);
        assert_eq!(opt.steps()[1], 1e-3 * 0.5);
        assert_eq!(opt.steps()[2], 1e-3);
        for _ in 0..100 {
            opt.ascend(&mut p, &[1.0, 0.0, 0.0]);
        }
        assert_eq!(opt.steps()[0], 1e-1);
    }

    #[test]
    fn model_round_trip_and_errors() {
        let mut cfg = TrainConfig::new(SeparatorKind::Nonlinear);
        cfg.seed = 42;
        let mut model = SeparatorModel::initial(&cfg);
        let mut p = model.to_flat();
        for (i, v) in p.iter_mut().enumerate() {
            *v += (i as f64 * 0.37).sin() / 3.0;
        }
        model.set_flat(&p);
        model.meta.epochs_run = 2;
        model.meta.objective_trace = vec![0.1 / 3.0, -2.0 / 7.0];
        let text = model.to_json();
        assert_eq!(SeparatorModel::from_json(&text).unwrap(), model);
        assert!(matches!(
            SeparatorModel::from_json(&text[..text.len() / 2]),
            Err(Error::MalformedModel(_))
        ));
        let bumped = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(
            SeparatorModel::from_json(&bumped),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn separate_closed_forms() {
        let m1 = ImageGray::filled(3, 2, 0.2).unwrap();
        let m2 = ImageGray::filled(3, 2, 0.6).unwrap();
        let id = SeparatorModel::initial(&TrainConfig::new(SeparatorKind::Nonlinear));
        let (y1, y2) = separate(&id, &m1, &m2).unwrap();
        assert_eq!((y1, y2), (m1.clone(), m2.clone()));
        let (y1, y2) = separate(&linear_model(1.5, -0.5, 0.0, 0.0), &m1, &m2).unwrap();
        assert!(y1.data().iter().all(|&v| v == 1.5 * 0.2 - 0.5 * 0.6));
        assert!(y2.data().iter().all(|&v| v == -0.5 * 0.2 + 1.5 * 0.6));
    }

    #[test]
    fn trace_csv_layout() {
        assert_eq!(objective_trace_csv(&[1.0, 0.5]), "epoch,objective\n0,1\n1,0.5\n");
    }
}
