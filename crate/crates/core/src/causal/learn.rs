//! Continuous DAG structure learning for linear models.
//!
//! Minimizes `(1/2n)‖X − XW‖²_F + λ‖W‖₁` subject to `h(W) = 0` with an
//! augmented Lagrangian. Each subproblem minimizes
//! `loss + (ρ/2)h² + αh + λ‖W‖₁` by proximal gradient descent with
//! backtracking; every accepted step is a sufficient-decrease step, so the
//! subproblem objective never increases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::acyclicity::acyclicity_with_grad;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureConfig {
    pub l1_penalty: f64,
    pub edge_threshold: f64,
    pub rho_init: f64,
    pub rho_multiplier: f64,
    pub rho_max: f64,
    pub h_tolerance: f64,
    pub max_outer_iterations: usize,
    pub inner_tolerance: f64,
    pub max_inner_iterations: usize,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            l1_penalty: 0.05,
            edge_threshold: 0.3,
            rho_init: 1.0,
            rho_multiplier: 10.0,
            rho_max: 1e16,
            h_tolerance: 1e-8,
            max_outer_iterations: 100,
            inner_tolerance: 1e-6,
            max_inner_iterations: 20_000,
        }
    }
}

impl StructureConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_init", self.rho_init),
            ("rho_max", self.rho_max),
            ("h_tolerance", self.h_tolerance),
            ("inner_tolerance", self.inner_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.l1_penalty >= 0.0 && self.edge_threshold >= 0.0) {
            return Err(Error::Validation(
                "l1_penalty and edge_threshold must be non-negative".into(),
            ));
        }
        if self.rho_multiplier <= 1.0 {
            return Err(Error::Validation("rho_multiplier must exceed 1".into()));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::Validation("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureResult {
    /// Learned weights before thresholding; zero diagonal.
    pub w: DMatrix<f64>,
    /// `h(W) <= h_tolerance` at exit.
    pub converged: bool,
    pub h: f64,
    pub rho: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// Least-squares loss through the sample covariance `S = XᵀX / n`:
/// `½ tr((I − W)ᵀ S (I − W))`, gradient `−S (I − W)`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    cov: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Validation("empty data matrix".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("data matrix has non-finite values".into()));
        }
        Ok(Self {
            cov: x.transpose() * x / x.nrows() as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn loss_with_grad(&self, w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let d = self.dim();
        let resid = DMatrix::identity(d, d) - w;
        let s_r = &self.cov * &resid;
        let loss = 0.5 * resid.component_mul(&s_r).sum();
        (loss, -s_r)
    }

    pub fn loss(&self, w: &DMatrix<f64>) -> f64 {
        self.loss_with_grad(w).0
    }
}

/// Smooth part of the augmented Lagrangian for fixed `(ρ, α)`.
#[derive(Debug, Clone)]
pub struct AugmentedObjective<'a> {
    pub loss: &'a LeastSquares,
    pub rho: f64,
    pub alpha: f64,
}

impl AugmentedObjective<'_> {
    pub fn value_with_grad(&self, w: &DMatrix<f64>) -> Result<(f64, f64, DMatrix<f64>)> {
        let (loss, mut grad) = self.loss.loss_with_grad(w);
        let (h, grad_h) = acyclicity_with_grad(w)?;
        let value = loss + 0.5 * self.rho * h * h + self.alpha * h;
        grad += grad_h * (self.rho * h + self.alpha);
        Ok((value, h, grad))
    }
}

const STALL_FACTOR: f64 = 1e-3;

fn l1_off_diagonal(w: &DMatrix<f64>) -> f64 {
    w.iter().map(|v| v.abs()).sum::<f64>() - w.diagonal().iter().map(|v| v.abs()).sum::<f64>()
}

/// Entries of `W` that are held at zero: the diagonal, plus every pair of
/// columns that encode the same feature when column groups are given.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralZeros {
    groups: Option<Vec<usize>>,
}

impl StructuralZeros {
    pub fn diagonal() -> Self {
        Self { groups: None }
    }

    /// `groups[i]` is the feature that encoded column `i` belongs to.
    pub fn within_groups(groups: &[usize]) -> Self {
        Self {
            groups: Some(groups.to_vec()),
        }
    }

    pub fn is_fixed(&self, i: usize, j: usize) -> bool {
        i == j || self.groups.as_ref().is_some_and(|g| g[i] == g[j])
    }

    pub fn apply(&self, w: &mut DMatrix<f64>) {
        w.fill_diagonal(0.0);
        if let Some(g) = &self.groups {
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    if g[i] == g[j] {
                        w[(i, j)] = 0.0;
                    }
                }
            }
        }
    }
}

fn soft_threshold_step(
    w: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    step: f64,
    lambda: f64,
    zeros: &StructuralZeros,
) -> DMatrix<f64> {
    let mut out = w - grad * step;
    let cut = step * lambda;
    for v in out.iter_mut() {
        *v = v.signum() * (v.abs() - cut).max(0.0);
    }
    zeros.apply(&mut out);
    out
}

/// Trace of one subproblem solve; `objective` holds the full objective
/// (smooth part plus L1) after every accepted step.
#[derive(Debug, Clone, Default)]
pub struct InnerTrace {
    pub objective: Vec<f64>,
}

/// Minimize the subproblem from `w0` by proximal gradient with backtracking.
pub fn solve_subproblem(
    objective: &AugmentedObjective<'_>,
    lambda: f64,
    w0: DMatrix<f64>,
    cfg: &StructureConfig,
    zeros: &StructuralZeros,
    mut trace: Option<&mut InnerTrace>,
) -> Result<(DMatrix<f64>, f64, usize)> {
    let mut w = w0;
    zeros.apply(&mut w);
    let (mut f, mut h, mut grad) = objective.value_with_grad(&w)?;
    if let Some(t) = trace.as_deref_mut() {
        t.objective.push(f + lambda * l1_off_diagonal(&w));
    }
    let mut step = 1.0;
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut iters = 0;
    while iters < cfg.max_inner_iterations {
        iters += 1;
        // Barzilai-Borwein guess for the step, then backtrack.
        if let Some((pw, pg)) = &prev {
            let s = &w - pw;
            let y = &grad - pg;
            let sy = s.dot(&y);
            if sy > 0.0 {
                step = (s.norm_squared() / sy).clamp(1e-20, 1e6);
            }
        }
        let (w_new, f_new, h_new, grad_new) = loop {
            let cand = soft_threshold_step(&w, &grad, step, lambda, zeros);
            let diff = &cand - &w;
            let (fc, hc, gc) = objective.value_with_grad(&cand)?;
            let bound = f + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if fc.is_finite() && fc <= bound {
                break (cand, fc, hc, gc);
            }
            step *= 0.5;
            if step < 1e-30 {
                // no further progress possible at this precision
                return Ok((w, h, iters));
            }
        };
        let moved = (&w_new - &w).amax();
        prev = Some((std::mem::replace(&mut w, w_new), std::mem::replace(&mut grad, grad_new)));
        f = f_new;
        h = h_new;
        if let Some(t) = trace.as_deref_mut() {
            t.objective.push(f + lambda * l1_off_diagonal(&w));
        }
        // Stationary when the proximal gradient mapping is small; at very large
        // penalties steps shrink so far that a tiny absolute move also counts.
        if moved / step <= cfg.inner_tolerance || moved <= STALL_FACTOR * cfg.inner_tolerance {
            break;
        }
    }
    Ok((w, h, iters))
}

/// Learn a weighted adjacency matrix from data `x` (rows are samples).
pub fn learn_structure(x: &DMatrix<f64>, cfg: &StructureConfig) -> Result<StructureResult> {
    learn_structure_with(x, cfg, &StructuralZeros::diagonal())
}

/// [`learn_structure`] with extra entries of `W` held at zero.
pub fn learn_structure_with(
    x: &DMatrix<f64>,
    cfg: &StructureConfig,
    zeros: &StructuralZeros,
) -> Result<StructureResult> {
    cfg.validate()?;
    let loss = LeastSquares::new(x)?;
    let d = loss.dim();
    let mut w = DMatrix::zeros(d, d);
    let mut rho = cfg.rho_init;
    let mut alpha = 0.0;
    let mut h = f64::INFINITY;
    let mut outer = 0;
    let mut inner_total = 0;
    if d <= 1 {
        return Ok(StructureResult {
            w,
            converged: true,
            h: 0.0,
            rho,
            outer_iterations: 0,
            inner_iterations: 0,
        });
    }
    while outer < cfg.max_outer_iterations {
        outer += 1;
        let (mut w_new, mut h_new);
        loop {
            let obj = AugmentedObjective {
                loss: &loss,
                rho,
                alpha,
            };
            let (wn, hn, it) = solve_subproblem(&obj, cfg.l1_penalty, w.clone(), cfg, zeros, None)?;
            inner_total += it;
            w_new = wn;
            h_new = hn;
            if h_new > 0.25 * h && rho < cfg.rho_max {
                rho *= cfg.rho_multiplier;
            } else {
                break;
            }
        }
        w = w_new;
        h = h_new;
        alpha += rho * h;
        if h <= cfg.h_tolerance || rho >= cfg.rho_max {
            break;
        }
    }
    Ok(StructureResult {
        w,
        converged: h <= cfg.h_tolerance,
        h,
        rho,
        outer_iterations: outer,
        inner_iterations: inner_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_at_zero_is_half_total_variance() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.0, 0.0, -2.0]);
        let ls = LeastSquares::new(&x).unwrap();
        let direct = 0.5 * x.norm_squared() / 3.0;
        assert!((ls.loss(&DMatrix::zeros(2, 2)) - direct).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_residual_form() {
        let x = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, -0.2, 0.1, 0.0, 0.3, 0.0, -0.5, 0.0]);
        let ls = LeastSquares::new(&x).unwrap();
        let direct = 0.5 * (&x - &x * &w).norm_squared() / 7.0;
        assert!((ls.loss(&w) - direct).abs() < 1e-12);
    }

    #[test]
    fn single_column_has_no_edges() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.5]);
        let r = learn_structure(&x, &StructureConfig::default()).unwrap();
        assert_eq!(r.w[(0, 0)], 0.0);
        assert!(r.converged);
    }

    #[test]
    fn config_validation() {
        let cfg = StructureConfig {
            rho_multiplier: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(StructureConfig::default().validate().is_ok());
    }
}
