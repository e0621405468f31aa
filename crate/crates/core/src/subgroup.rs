//! Feature-combination cards for intersectional fairness.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{filter_rows, Constraint, DataTable};
use crate::error::{Error, Result};
use crate::metrics::View;

pub const DEFAULT_MAX_CONSTRAINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgroupConfig {
    /// At most this many constraints per combination.
    pub max_constraints: usize,
    /// Cards with fewer members are hidden from listings; 0 disables the filter.
    pub min_support: usize,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        Self {
            max_constraints: DEFAULT_MAX_CONSTRAINTS,
            min_support: 0,
        }
    }
}

/// A conjunction of constraints on distinct features, kept sorted by
/// feature name. The id is derived from that normalized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub id: String,
    pub constraints: Vec<Constraint>,
}

impl Combination {
    pub fn new(mut constraints: Vec<Constraint>, max_constraints: usize) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::Validation("a combination needs at least one constraint".into()));
        }
        if constraints.len() > max_constraints {
            return Err(Error::Validation(format!(
                "a combination has at most {max_constraints} constraints, got {}",
                constraints.len()
            )));
        }
        constraints.sort_by(|a, b| a.feature.cmp(&b.feature));
        if let Some(w) = constraints.windows(2).find(|w| w[0].feature == w[1].feature) {
            return Err(Error::Validation(format!(
                "feature `{}` appears more than once",
                w[0].feature
            )));
        }
        let canonical = serde_json::to_string(&constraints)?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(Self {
            id: hex::encode(&digest[..8]),
            constraints,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCard {
    pub id: String,
    pub constraints: Vec<Constraint>,
    pub count: usize,
    pub positive_count: usize,
    /// `None` when the card has no members.
    pub rate: Option<f64>,
    pub unfair: bool,
    pub view: View,
}

/// Count members and positives. With `predictions` (model view) the
/// predicted outcome is used and members without a prediction are not counted.
pub fn build_card(
    table: &DataTable,
    combination: &Combination,
    predictions: Option<&[Option<bool>]>,
) -> Result<SubgroupCard> {
    let members = filter_rows(table, &combination.constraints)?;
    let labels = table.outcomes()?;
    let (view, outcomes): (View, Vec<Option<bool>>) = match predictions {
        Some(p) => {
            if p.len() != table.n_rows() {
                return Err(Error::Validation(format!(
                    "expected {} predictions, got {}",
                    table.n_rows(),
                    p.len()
                )));
            }
            (View::Model, p.to_vec())
        }
        None => (View::Dataset, labels.into_iter().map(Some).collect()),
    };
    let defined: Vec<bool> = members.iter().filter_map(|&r| outcomes[r]).collect();
    let count = defined.len();
    let positive_count = defined.iter().filter(|&&o| o).count();
    Ok(SubgroupCard {
        id: combination.id.clone(),
        constraints: combination.constraints.clone(),
        count,
        positive_count,
        rate: (count > 0).then(|| positive_count as f64 / count as f64),
        unfair: false,
        view,
    })
}

fn card_order(a: &SubgroupCard, b: &SubgroupCard) -> Ordering {
    let by_rate = match (a.rate, b.rate) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_rate
        .then_with(|| b.count.cmp(&a.count))
        .then_with(|| a.id.cmp(&b.id))
}

/// Ascending acceptance rate, empty cards last, then larger cards first, then id.
pub fn order_cards(mut cards: Vec<SubgroupCard>) -> Vec<SubgroupCard> {
    cards.sort_by(card_order);
    cards
}

/// Drop cards below the support threshold.
pub fn apply_min_support(cards: Vec<SubgroupCard>, min_support: usize) -> Vec<SubgroupCard> {
    cards.into_iter().filter(|c| c.count >= min_support).collect()
}
