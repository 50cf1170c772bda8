//! Separator and CDF-estimator networks.
//!
//! The separator `F` maps a mixture pair `x = (x1, x2)` to the extracted pair
//! `y`. Two variants exist, both exchange-symmetric by construction (swapping
//! the inputs swaps the outputs):
//!
//! * [`FLinear`]: `y = [[a, b], [b, a]] x`.
//! * [`FNonlinear`]: a symmetric shortcut matrix `[[c, d], [d, c]]` plus two
//!   groups of logistic hidden units, one group per output. Unit `h` of the
//!   first group sees `w_own * x1 + w_other * x2 + bias`; its mirror in the
//!   second group sees `w_other * x1 + w_own * x2 + bias`. Both feed their
//!   output with weight `out`.
//!
//! Every output `y_i` is followed by a [`PsiNet`], a strictly increasing map
//! onto `(0, 1)`:
//!
//! `psi(y) = sum_h v_h sigmoid(w_h y + b_h) / sum_h v_h`, with
//! `v_h = exp(log_out_h)` and `w_h = exp(log_in_h)`.
//!
//! Gradients are computed on an untied view ([`UntiedSeparator`]) in which
//! every output row owns its parameters; tied gradients are sums over the
//! untied copies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid'(t)`, stable for large `|t|`.
#[inline]
fn ln_sigmoid_slope(t: f64) -> f64 {
    let a = t.abs();
    -a - 2.0 * (-a).exp().ln_1p()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeparatorKind {
    Linear,
    Nonlinear,
}

impl std::str::FromStr for SeparatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SeparatorKind::Linear),
            "nonlinear" => Ok(SeparatorKind::Nonlinear),
            other => Err(Error::Config(format!("unknown separator kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for SeparatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeparatorKind::Linear => "linear",
            SeparatorKind::Nonlinear => "nonlinear",
        })
    }
}

/// Row-major 2x2 matrix.
pub type Mat2 = [[f64; 2]; 2];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FLinear {
    pub diagonal: f64,
    pub off_diagonal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenUnit {
    pub w_own: f64,
    pub w_other: f64,
    pub bias: f64,
    pub out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FNonlinear {
    pub shortcut_diagonal: f64,
    pub shortcut_off_diagonal: f64,
    /// Group-1 units; group 2 is their mirror image.
    pub units: Vec<HiddenUnit>,
}

impl FNonlinear {
    /// True when all hidden-to-output weights are zero, i.e. `F` is its
    /// shortcut map.
    pub fn is_linear(&self) -> bool {
        self.units.iter().all(|u| u.out == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Separator {
    Linear(FLinear),
    Nonlinear(FNonlinear),
}

/// One hidden unit with its own copy of every parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UntiedUnit {
    /// Weights from `x1` and `x2`.
    pub weights: [f64; 2],
    pub bias: f64,
    pub out: f64,
}

/// Unconstrained separator: a full shortcut matrix and one list of hidden
/// units per output row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UntiedSeparator {
    pub shortcut: Mat2,
    pub rows: [Vec<UntiedUnit>; 2],
}

impl UntiedSeparator {
    pub fn forward(&self, x: [f64; 2]) -> ([f64; 2], Mat2) {
        let mut y = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        for i in 0..2 {
            let (mut hy, mut hj0, mut hj1) = (0.0, 0.0, 0.0);
            for u in &self.rows[i] {
                let s = sigmoid(u.weights[0] * x[0] + u.weights[1] * x[1] + u.bias);
                let g = s * (1.0 - s);
                hy += u.out * s;
                hj0 += u.out * g * u.weights[0];
                hj1 += u.out * g * u.weights[1];
            }
            let s = &self.shortcut[i];
            y[i] = s[0] * x[0] + s[1] * x[1] + hy;
            jac[i][0] = s[0] + hj0;
            jac[i][1] = s[1] + hj1;
        }
        (y, jac)
    }

    pub fn param_count(&self) -> usize {
        4 + 4 * (self.rows[0].len() + self.rows[1].len())
    }

    /// Layout: shortcut row-major, then per row per unit
    /// `(weight_x1, weight_x2, bias, out)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut p = vec![
            self.shortcut[0][0],
            self.shortcut[0][1],
            self.shortcut[1][0],
            self.shortcut[1][1],
        ];
        for row in &self.rows {
            for u in row {
                p.extend_from_slice(&[u.weights[0], u.weights[1], u.bias, u.out]);
            }
        }
        p
    }

    pub fn set_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        self.shortcut = [[p[0], p[1]], [p[2], p[3]]];
        let mut k = 4;
        for row in self.rows.iter_mut() {
            for u in row.iter_mut() {
                *u = UntiedUnit {
                    weights: [p[k], p[k + 1]],
                    bias: p[k + 2],
                    out: p[k + 3],
                };
                k += 4;
            }
        }
    }

    /// Adds the gradient of one sample's contribution, given the sensitivity
    /// of the objective to the Jacobian (`dj`) and to the outputs (`dy`), to
    /// `grad` (laid out as [`to_flat`](Self::to_flat)).
    pub fn accumulate_gradient(&self, x: [f64; 2], dj: &Mat2, dy: [f64; 2], grad: &mut [f64]) {
        for i in 0..2 {
            for j in 0..2 {
                grad[2 * i + j] += dj[i][j] + dy[i] * x[j];
            }
        }
        let mut k = 4;
        for i in 0..2 {
            for u in &self.rows[i] {
                let s = sigmoid(u.weights[0] * x[0] + u.weights[1] * x[1] + u.bias);
                let g = s * (1.0 - s);
                let gg = g * (1.0 - 2.0 * s);
                let beta = dj[i][0] * u.weights[0] + dj[i][1] * u.weights[1];
                let q = gg * beta + dy[i] * g;
                grad[k] += u.out * (q * x[0] + g * dj[i][0]);
                grad[k + 1] += u.out * (q * x[1] + g * dj[i][1]);
                grad[k + 2] += u.out * q;
                grad[k + 3] += g * beta + dy[i] * s;
                k += 4;
            }
        }
    }
}

impl Separator {
    pub fn kind(&self) -> SeparatorKind {
        match self {
            Separator::Linear(_) => SeparatorKind::Linear,
            Separator::Nonlinear(_) => SeparatorKind::Nonlinear,
        }
    }

    /// Output and exact Jacobian at `x`.
    pub fn forward(&self, x: [f64; 2]) -> ([f64; 2], Mat2) {
        match self {
            Separator::Linear(f) => {
                let (a, b) = (f.diagonal, f.off_diagonal);
                ([a * x[0] + b * x[1], b * x[0] + a * x[1]], [[a, b], [b, a]])
            }
            Separator::Nonlinear(_) => self.untie().forward(x),
        }
    }

    pub fn untie(&self) -> UntiedSeparator {
        match self {
            Separator::Linear(f) => UntiedSeparator {
                shortcut: [[f.diagonal, f.off_diagonal], [f.off_diagonal, f.diagonal]],
                rows: [Vec::new(), Vec::new()],
            },
            Separator::Nonlinear(f) => {
                let (c, d) = (f.shortcut_diagonal, f.shortcut_off_diagonal);
                let group1 = f
                    .units
                    .iter()
                    .map(|u| UntiedUnit {
                        weights: [u.w_own, u.w_other],
                        bias: u.bias,
                        out: u.out,
                    })
                    .collect();
                let group2 = f
                    .units
                    .iter()
                    .map(|u| UntiedUnit {
                        weights: [u.w_other, u.w_own],
                        bias: u.bias,
                        out: u.out,
                    })
                    .collect();
                UntiedSeparator {
                    shortcut: [[c, d], [d, c]],
                    rows: [group1, group2],
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Separator::Linear(_) => 2,
            Separator::Nonlinear(f) => 2 + 4 * f.units.len(),
        }
    }

    /// Layout: `(a, b)` or `(c, d)` followed by `(w_own, w_other, bias, out)`
    /// per hidden unit.
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            Separator::Linear(f) => vec![f.diagonal, f.off_diagonal],
            Separator::Nonlinear(f) => {
                let mut p = vec![f.shortcut_diagonal, f.shortcut_off_diagonal];
                for u in &f.units {
                    p.extend_from_slice(&[u.w_own, u.w_other, u.bias, u.out]);
                }
                p
            }
        }
    }

    pub fn set_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        match self {
            Separator::Linear(f) => {
                f.diagonal = p[0];
                f.off_diagonal = p[1];
            }
            Separator::Nonlinear(f) => {
                f.shortcut_diagonal = p[0];
                f.shortcut_off_diagonal = p[1];
                for (u, c) in f.units.iter_mut().zip(p[2..].chunks_exact(4)) {
                    *u = HiddenUnit {
                        w_own: c[0],
                        w_other: c[1],
                        bias: c[2],
                        out: c[3],
                    };
                }
            }
        }
    }

    /// Folds a gradient in the untied layout onto the tied parameters: each
    /// tied parameter receives the sum of the gradients of its copies.
    pub fn fold_gradient(&self, untied: &[f64]) -> Vec<f64> {
        let shortcut = [
            untied[0] + untied[3], // diagonal
            untied[1] + untied[2], // off-diagonal
        ];
        match self {
            Separator::Linear(_) => shortcut.to_vec(),
            Separator::Nonlinear(f) => {
                let n = f.units.len();
                let mut out = shortcut.to_vec();
                for h in 0..n {
                    let g1 = &untied[4 + 4 * h..8 + 4 * h];
                    let g2 = &untied[4 + 4 * (n + h)..8 + 4 * (n + h)];
                    out.extend_from_slice(&[g1[0] + g2[1], g1[1] + g2[0], g1[2] + g2[2], g1[3] + g2[3]]);
                }
                out
            }
        }
    }

    /// Indices, in [`to_flat`](Self::to_flat) layout, of the hidden-to-output
    /// weights.
    pub fn output_weight_indices(&self) -> Vec<usize> {
        match self {
            Separator::Linear(_) => Vec::new(),
            Separator::Nonlinear(f) => (0..f.units.len()).map(|h| 2 + 4 * h + 3).collect(),
        }
    }
}

/// Identity separator. The nonlinear variant gets identity shortcuts, zero
/// hidden-to-output weights and small seeded random hidden weights and biases
/// (uniform in `[-0.5, 0.5] / sqrt(2)`).
pub fn init_identity(kind: SeparatorKind, hidden_units: usize, seed: u64) -> Separator {
    match kind {
        SeparatorKind::Linear => Separator::Linear(FLinear {
            diagonal: 1.0,
            off_diagonal: 0.0,
        }),
        SeparatorKind::Nonlinear => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = 1.0 / 2f64.sqrt();
            let mut draw = || (rng.random::<f64>() - 0.5) * scale;
            let units = (0..hidden_units)
                .map(|_| HiddenUnit {
                    w_own: draw(),
                    w_other: draw(),
                    bias: draw(),
                    out: 0.0,
                })
                .collect();
            Separator::Nonlinear(FNonlinear {
                shortcut_diagonal: 1.0,
                shortcut_off_diagonal: 0.0,
                units,
            })
        }
    }
}

/// Projects unconstrained parameters onto the exchange-symmetric family.
/// Shortcuts are averaged (`a = (F11 + F22) / 2`, `b = (F12 + F21) / 2`); for
/// the nonlinear kind the second group of hidden units is replaced by the
/// mirror of the first.
pub fn symmetrize(raw: &UntiedSeparator, kind: SeparatorKind) -> Separator {
    let s = &raw.shortcut;
    let diag = (s[0][0] + s[1][1]) / 2.0;
    let off = (s[0][1] + s[1][0]) / 2.0;
    match kind {
        SeparatorKind::Linear => Separator::Linear(FLinear {
            diagonal: diag,
            off_diagonal: off,
        }),
        SeparatorKind::Nonlinear => Separator::Nonlinear(FNonlinear {
            shortcut_diagonal: diag,
            shortcut_off_diagonal: off,
            units: raw.rows[0]
                .iter()
                .map(|u| HiddenUnit {
                    w_own: u.weights[0],
                    w_other: u.weights[1],
                    bias: u.bias,
                    out: u.out,
                })
                .collect(),
        }),
    }
}

/// Monotone map onto `(0, 1)` estimating the CDF of one extracted component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiNet {
    /// `ln` of the (positive) input weights.
    pub log_in: Vec<f64>,
    pub bias: Vec<f64>,
    /// `ln` of the (positive) output weights.
    pub log_out: Vec<f64>,
}

/// Value and derivatives of a [`PsiNet`] at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEval {
    pub z: f64,
    pub dz: f64,
    pub ln_dz: f64,
    /// `d ln psi'(y) / dy`.
    pub d_ln_dz_dy: f64,
}

impl PsiNet {
    /// Input slopes around `e^2.3` (about 10) and centers scattered over
    /// `[-0.25, 1.25]`, matching inputs that start in `[0, 1]`.
    pub fn init(hidden: usize, seed: u64) -> PsiNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log_in = Vec::with_capacity(hidden);
        let mut bias = Vec::with_capacity(hidden);
        let mut log_out = Vec::with_capacity(hidden);
        for _ in 0..hidden {
            let li = PSI_INIT_LOG_SLOPE + (rng.random::<f64>() - 0.5);
            let center = -0.25 + 1.5 * rng.random::<f64>();
            log_in.push(li);
            bias.push(-li.exp() * center);
            log_out.push(rng.random::<f64>() - 0.5);
        }
        PsiNet {
            log_in,
            bias,
            log_out,
        }
    }

    pub fn hidden(&self) -> usize {
        self.log_in.len()
    }

    pub fn eval(&self, y: f64) -> PsiEval {
        self.prepare().eval(y)
    }

    /// Caches the per-parameter quantities shared by every evaluation.
    pub fn prepare(&self) -> PreparedPsi {
        let ln_v = log_sum_exp(self.log_out.iter().copied());
        PreparedPsi {
            slope: self.log_in.iter().map(|l| l.exp()).collect(),
            ln_slope_out: self.log_in.iter().zip(&self.log_out).map(|(a, b)| a + b).collect(),
            mix: self.log_out.iter().map(|l| (l - ln_v).exp()).collect(),
            bias: self.bias.clone(),
            ln_v,
        }
    }

    pub fn param_count(&self) -> usize {
        3 * self.hidden()
    }

    /// Layout: per unit `(log_in, bias, log_out)`.
    pub fn to_flat(&self) -> Vec<f64> {
        (0..self.hidden())
            .flat_map(|h| [self.log_in[h], self.bias[h], self.log_out[h]])
            .collect()
    }

    pub fn set_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        for (h, c) in p.chunks_exact(3).enumerate() {
            self.log_in[h] = c[0];
            self.bias[h] = c[1];
            self.log_out[h] = c[2];
        }
    }

    /// Adds `d ln psi'(y) / d theta` to `grad` and returns the evaluation.
    pub fn accumulate_ln_slope_gradient(&self, y: f64, grad: &mut [f64]) -> PsiEval {
        self.prepare().accumulate_ln_slope_gradient(y, grad)
    }
}

/// A [`PsiNet`] with its parameter transforms precomputed.
#[derive(Debug, Clone)]
pub struct PreparedPsi {
    slope: Vec<f64>,
    ln_slope_out: Vec<f64>,
    /// Normalized output weights `v_h / sum v`.
    mix: Vec<f64>,
    bias: Vec<f64>,
    ln_v: f64,
}

impl PreparedPsi {
    fn eval_with(&self, y: f64, mut per_unit: impl FnMut(usize, f64, f64)) -> PsiEval {
        let n = self.slope.len();
        let mut small = [0.0f64; 128];
        let mut heap;
        let scratch: &mut [f64] = if 2 * n <= small.len() {
            &mut small[..2 * n]
        } else {
            heap = vec![0.0; 2 * n];
            &mut heap
        };
        let (sig, terms) = scratch.split_at_mut(n);
        let mut z = 0.0;
        for h in 0..n {
            let t = self.slope[h] * y + self.bias[h];
            sig[h] = sigmoid(t);
            z += self.mix[h] * sig[h];
            terms[h] = self.ln_slope_out[h] + ln_sigmoid_slope(t);
        }
        let ln_p = log_sum_exp(terms.iter().copied());
        let mut d = 0.0;
        for h in 0..n {
            let r = (terms[h] - ln_p).exp();
            let curv = 1.0 - 2.0 * sig[h];
            per_unit(h, r, curv);
            d += r * self.slope[h] * curv;
        }
        let ln_dz = ln_p - self.ln_v;
        PsiEval {
            z,
            dz: ln_dz.exp(),
            ln_dz,
            d_ln_dz_dy: d,
        }
    }

    pub fn eval(&self, y: f64) -> PsiEval {
        self.eval_with(y, |_, _, _| {})
    }

    /// Adds `d ln psi'(y) / d theta` (layout of [`PsiNet::to_flat`]) to `grad`.
    pub fn accumulate_ln_slope_gradient(&self, y: f64, grad: &mut [f64]) -> PsiEval {
        let slope = &self.slope;
        let mix = &self.mix;
        self.eval_with(y, |h, r, curv| {
            grad[3 * h] += r * (1.0 + slope[h] * y * curv);
            grad[3 * h + 1] += r * curv;
            grad[3 * h + 2] += r - mix[h];
        })
    }
}

const PSI_INIT_LOG_SLOPE: f64 = 2.3;
