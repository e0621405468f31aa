//! L2-regularized logistic regression fitted by damped Newton iterations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataTable;
use crate::encoding::Encoder;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2: f64,
    /// Stop once the largest gradient component is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Validation("l2 must be a finite non-negative number".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Validation(
                "tolerance and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_loss: f64,
    pub gradient_norm: f64,
    pub l2: f64,
    pub converged: bool,
    pub train_rows: usize,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    super::explain::sigmoid(z)
}

/// Mean logistic loss plus `(l2/2)‖w‖²` over a design matrix. The intercept
/// is the last parameter and is not penalized.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    pub x: DMatrix<f64>,
    pub y: Vec<bool>,
    pub l2: f64,
}

/// Mean loss of the parameters `[w.., b]` on `problem`.
pub fn logistic_loss(problem: &LogisticProblem, params: &DVector<f64>) -> f64 {
    problem.loss_with_grad(params).0
}

impl LogisticProblem {
    pub fn new(x: DMatrix<f64>, y: Vec<bool>, l2: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Validation(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { x, y, l2 })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn logits(&self, params: &DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        let w = params.rows(0, d);
        let mut z = &self.x * w;
        z.add_scalar_mut(params[d]);
        z
    }

    pub fn loss_with_grad(&self, params: &DVector<f64>) -> (f64, DVector<f64>) {
        let d = self.dim();
        let n = self.y.len() as f64;
        let z = self.logits(params);
        let mut loss = 0.0;
        let mut resid = DVector::zeros(self.y.len());
        for (i, &zi) in z.iter().enumerate() {
            let yi = f64::from(u8::from(self.y[i]));
            loss += softplus(zi) - yi * zi;
            resid[i] = sigmoid(zi) - yi;
        }
        let w = params.rows(0, d);
        loss = loss / n + 0.5 * self.l2 * w.norm_squared();
        let mut grad = DVector::zeros(d + 1);
        let gw = self.x.tr_mul(&resid) / n + w * self.l2;
        grad.rows_mut(0, d).copy_from(&gw);
        grad[d] = resid.sum() / n;
        (loss, grad)
    }

    fn hessian(&self, params: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.y.len() as f64;
        let z = self.logits(params);
        let mut xa = DMatrix::zeros(self.y.len(), d + 1);
        xa.columns_mut(0, d).copy_from(&self.x);
        xa.column_mut(d).fill(1.0);
        let mut weighted = xa.clone();
        for (i, &zi) in z.iter().enumerate() {
            let p = sigmoid(zi);
            weighted.row_mut(i).scale_mut(p * (1.0 - p) / n);
        }
        let mut h = xa.tr_mul(&weighted);
        for j in 0..d {
            h[(j, j)] += self.l2;
        }
        h
    }

    /// Minimize from zero. Returns the parameters `[w.., b]`.
    pub fn fit(&self, cfg: &LogisticConfig) -> Result<(DVector<f64>, TrainingMeta)> {
        cfg.validate()?;
        let mut params = DVector::zeros(self.dim() + 1);
        let (mut loss, mut grad) = self.loss_with_grad(&params);
        let mut iterations = 0;
        let mut converged = grad.amax() <= cfg.tolerance;
        while !converged && iterations < cfg.max_iterations {
            iterations += 1;
            let dir = newton_direction(self.hessian(&params), &grad);
            let slope = grad.dot(&dir);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial = &params + &dir * step;
                let (f, g) = self.loss_with_grad(&trial);
                if f <= loss + 1e-4 * step * slope {
                    accepted = Some((trial, f, g));
                    break;
                }
                step *= 0.5;
            }
            let Some((p, f, g)) = accepted else {
                break;
            };
            params = p;
            loss = f;
            grad = g;
            converged = grad.amax() <= cfg.tolerance;
        }
        if !loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("logistic regression diverged".into()));
        }
        Ok((
            params,
            TrainingMeta {
                iterations,
                final_loss: loss,
                gradient_norm: grad.amax(),
                l2: self.l2,
                converged,
                train_rows: self.y.len(),
            },
        ))
    }
}

/// Solve `H d = -g`, adding a growing ridge if `H` is not numerically
/// positive definite; falls back to steepest descent.
fn newton_direction(h: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().amax().max(1e-12);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for j in 0..m.nrows() {
            m[(j, j)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            let dir = -chol.solve(grad);
            if dir.iter().all(|v| v.is_finite()) {
                return dir;
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    -grad.clone()
}

/// A fitted decision model over the shared standardized encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub family: String,
    pub encoder: Encoder,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub target: String,
    pub positive_label: String,
    pub negative_label: String,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

/// Wire form of a model: weights keyed by encoded column name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub family: String,
    pub target: String,
    pub positive_label: String,
    pub weights: BTreeMap<String, f64>,
    pub intercept: f64,
    pub standardization: BTreeMap<String, Standardization>,
    pub metadata: TrainingMeta,
}

pub const LOGISTIC_FAMILY: &str = "logistic_l2";

impl ModelArtifact {
    pub fn export(&self) -> ModelExport {
        let names = self.encoder.column_names();
        ModelExport {
            family: self.family.clone(),
            target: self.target.clone(),
            positive_label: self.positive_label.clone(),
            weights: names.iter().cloned().zip(self.weights.iter().copied()).collect(),
            intercept: self.intercept,
            standardization: self
                .encoder
                .columns
                .iter()
                .map(|c| {
                    (
                        c.name.clone(),
                        Standardization {
                            mean: c.mean,
                            std: c.std,
                        },
                    )
                })
                .collect(),
            metadata: self.meta.clone(),
        }
    }
}

/// Fit the model on `train` rows of a table with a target. The encoder is
/// fitted on the whole table (every non-target feature); training rows with
/// a missing feature cell are skipped.
pub fn train_logistic(table: &DataTable, train: &[usize], cfg: &LogisticConfig) -> Result<ModelArtifact> {
    let target = table
        .target_name()
        .ok_or_else(|| Error::State("target is not set".into()))?
        .to_string();
    let features = table.feature_names();
    if features.is_empty() {
        return Err(Error::Validation("the table has no features besides the target".into()));
    }
    let (encoder, _) = Encoder::fit(table, &features)?;
    let outcomes = table.outcomes()?;
    let mut rows = Vec::new();
    let mut encoded = Vec::new();
    for &r in train {
        if r >= table.n_rows() {
            return Err(Error::NotFound(format!("row {r}")));
        }
        if let Some(v) = encoder.encode_row(table, r)? {
            rows.push(r);
            encoded.extend(v);
        }
    }
    if rows.is_empty() {
        return Err(Error::Validation("no complete training rows".into()));
    }
    let y: Vec<bool> = rows.iter().map(|&r| outcomes[r]).collect();
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::Validation(
            "training rows contain only one target class".into(),
        ));
    }
    let x = DMatrix::from_row_slice(rows.len(), encoder.dim(), &encoded);
    let problem = LogisticProblem::new(x, y, cfg.l2)?;
    let (params, meta) = problem.fit(cfg)?;
    let d = encoder.dim();
    Ok(ModelArtifact {
        family: LOGISTIC_FAMILY.to_string(),
        weights: params.rows(0, d).iter().copied().collect(),
        intercept: params[d],
        encoder,
        target,
        positive_label: table.positive_label().unwrap_or_default().to_string(),
        negative_label: table.negative_label().unwrap_or_default().to_string(),
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, d: usize, l2: f64) -> LogisticProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-2.0..2.0));
        let y = (0..n).map(|i| x[(i, 0)] + rng.gen_range(-1.0..1.0) > 0.0).collect();
        LogisticProblem::new(x, y, l2).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random_problem(3, 60, 4, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let params = DVector::from_fn(5, |_, _| rng.gen_range(-1.5..1.5));
            let (_, g) = p.loss_with_grad(&params);
            for k in 0..5 {
                let h = 1e-6;
                let mut up = params.clone();
                up[k] += h;
                let mut down = params.clone();
                down[k] -= h;
                let fd = (logistic_loss(&p, &up) - logistic_loss(&p, &down)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-8);
                assert!(rel <= 1e-5, "k={k} fd={fd} g={}", g[k]);
            }
        }
    }

    #[test]
    fn converges_to_stationary_point() {
        let p = random_problem(5, 200, 3, 1e-4);
        let (_, meta) = p.fit(&LogisticConfig::default()).unwrap();
        assert!(meta.converged);
        assert!(meta.gradient_norm <= 1e-8);
        assert!(meta.iterations < 50);
    }

    #[test]
    fn stronger_penalty_shrinks_weights() {
        let mut last = f64::INFINITY;
        for l2 in [1e-4, 1e-2, 1.0] {
            let p = random_problem(7, 300, 5, l2);
            let (params, _) = p.fit(&LogisticConfig { l2, ..Default::default() }).unwrap();
            let norm = params.rows(0, 5).norm();
            assert!(norm <= last, "l2={l2} norm={norm} previous={last}");
            last = norm;
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
