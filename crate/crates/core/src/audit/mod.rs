//! The decision model behind the model view: a stratified train/test split,
//! L2-regularized logistic regression on the shared standardized encoding,
//! and per-application explanations.

mod explain;
mod logistic;

pub use explain::{
    contributions, feature_importance, predict, predict_all, sigmoid, ContributionRow,
    FeatureContribution, FeatureImportance, Prediction, SignClass,
};
pub use logistic::{
    logistic_loss, train_logistic, LogisticConfig, LogisticProblem, ModelArtifact, ModelExport,
    Standardization, TrainingMeta, LOGISTIC_FAMILY,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split on the target. Each class contributes
/// `round(fraction * class_size)` test rows, clamped so that both sides keep
/// at least one row of the class. Both index lists are ascending.
pub fn split(table: &DataTable, spec: &SplitSpec) -> Result<Split> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "test fraction must be in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let outcomes = table.outcomes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut rows: Vec<usize> = (0..outcomes.len()).filter(|&r| outcomes[r] == class).collect();
        if rows.len() < 2 {
            let label = if class {
                table.positive_label()
            } else {
                table.negative_label()
            };
            return Err(Error::Validation(format!(
                "target class `{}` has {} row(s); at least 2 are needed to split",
                label.unwrap_or_default(),
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let k = ((spec.test_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
