//! Hypothesis classes with closed-form losses and gradients.
//!
//! * `ScalarRegression`: a single constant prediction `w`, squared error
//!   against the label. Used by the toy min-max task where each sample is a
//!   point on the real line.
//! * `LinearRegression`: `w[..d] . x + w[d]`, squared error.
//! * `Logistic`: multinomial logistic regression with one bias per class and
//!   cross-entropy loss. Parameters are stored row-major, one row of
//!   `input_dim + 1` entries per class (bias last).

use serde::{Deserialize, Serialize};

use crate::domain::{ParamVector, Sample};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ScalarRegression,
    LinearRegression,
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn scalar_regression() -> Self {
        Self {
            kind: ModelKind::ScalarRegression,
            input_dim: 0,
            num_classes: 0,
        }
    }

    pub fn linear_regression(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::LinearRegression,
            input_dim,
            num_classes: 0,
        }
    }

    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Logistic,
            input_dim,
            num_classes,
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::ScalarRegression => 1,
            ModelKind::LinearRegression => self.input_dim + 1,
            ModelKind::Logistic => self.num_classes * (self.input_dim + 1),
        }
    }

    fn check_params(&self, w: &ParamVector) -> Result<()> {
        if self.kind == ModelKind::Logistic && self.num_classes < 2 {
            return Err(invalid("logistic model needs at least two classes"));
        }
        if w.len() != self.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                w.len()
            )));
        }
        w.ensure_finite("parameter vector")
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.features.len() != self.input_dim {
            return Err(invalid(format!(
                "expected {} features, got {}",
                self.input_dim,
                s.features.len()
            )));
        }
        if self.kind == ModelKind::Logistic {
            self.class_of(s)?;
        }
        Ok(())
    }

    fn class_of(&self, s: &Sample) -> Result<usize> {
        let y = s.label;
        if y.fract() != 0.0 || y < 0.0 || y >= self.num_classes as f64 {
            return Err(invalid(format!(
                "label {y} is not a class index below {}",
                self.num_classes
            )));
        }
        Ok(y as usize)
    }

    /// Raw model output: the prediction for regression, logits for logistic.
    fn forward(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::ScalarRegression => vec![w[0]],
            ModelKind::LinearRegression => vec![affine(&w[..self.input_dim + 1], x)],
            ModelKind::Logistic => w
                .chunks_exact(self.input_dim + 1)
                .map(|row| affine(row, x))
                .collect(),
        }
    }

    /// Loss of a single sample.
    pub fn loss(&self, w: &ParamVector, s: &Sample) -> Result<f64> {
        self.check_params(w)?;
        self.check_sample(s)?;
        let out = self.forward(w.as_slice(), &s.features);
        let value = match self.kind {
            ModelKind::ScalarRegression | ModelKind::LinearRegression => {
                let r = out[0] - s.label;
                r * r
            }
            ModelKind::Logistic => {
                let y = self.class_of(s)?;
                // lse >= logit_y, clamp the rounding residue
                (log_sum_exp(&out) - out[y]).max(0.0)
            }
        };
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss evaluated to {value}")));
        }
        Ok(value)
    }

    /// Gradient of `sum_j weight_j * loss(w, sample_j)`. Normalization is
    /// left to the caller.
    pub fn grad(&self, w: &ParamVector, batch: &[(&Sample, f64)]) -> Result<ParamVector> {
        if batch.is_empty() {
            return Err(invalid("gradient of an empty batch"));
        }
        self.check_params(w)?;
        let mut g = vec![0.0; self.param_count()];
        let stride = self.input_dim + 1;
        for &(s, weight) in batch {
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(invalid(format!("sample weight {weight} is not >= 0")));
            }
            self.check_sample(s)?;
            if weight == 0.0 {
                continue;
            }
            let out = self.forward(w.as_slice(), &s.features);
            match self.kind {
                ModelKind::ScalarRegression => {
                    g[0] += weight * 2.0 * (out[0] - s.label);
                }
                ModelKind::LinearRegression => {
                    let c = weight * 2.0 * (out[0] - s.label);
                    for (gj, xj) in g.iter_mut().zip(&s.features) {
                        *gj += c * xj;
                    }
                    g[self.input_dim] += c;
                }
                ModelKind::Logistic => {
                    let y = self.class_of(s)?;
                    let probs = softmax(&out);
                    for (k, (row, pk)) in g.chunks_exact_mut(stride).zip(probs).enumerate() {
                        let c = weight * (pk - if k == y { 1.0 } else { 0.0 });
                        for (gj, xj) in row.iter_mut().zip(&s.features) {
                            *gj += c * xj;
                        }
                        row[self.input_dim] += c;
                    }
                }
            }
        }
        let g = ParamVector(g);
        g.ensure_finite("gradient")?;
        Ok(g)
    }

    /// Predicted class (logistic) or value (regression) for accuracy metrics.
    pub fn predict(&self, w: &ParamVector, x: &[f64]) -> Result<f64> {
        self.check_params(w)?;
        if x.len() != self.input_dim {
            return Err(invalid(format!(
                "expected {} features, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let out = self.forward(w.as_slice(), x);
        Ok(match self.kind {
            ModelKind::Logistic => argmax(&out) as f64,
            _ => out[0],
        })
    }

    /// `(n, sum of losses)` over the samples of `data` in `domain`; `(0, 0.0)`
    /// when the domain is absent.
    pub fn average_domain_loss(
        &self,
        w: &ParamVector,
        data: &[Sample],
        domain: usize,
    ) -> Result<(u64, f64)> {
        let mut count = 0u64;
        let mut sum = 0.0;
        for s in data.iter().filter(|s| s.domain == domain) {
            count += 1;
            sum += self.loss(w, s)?;
        }
        Ok((count, sum))
    }
}

fn affine(row: &[f64], x: &[f64]) -> f64 {
    let (weights, bias) = row.split_at(x.len());
    weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias[0]
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}
