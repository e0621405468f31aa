//! Seeded synthetic loan-application generator.
//!
//! Rows come from a linear structural-equation model over standardized
//! latent scores. The planted causal paths are
//!
//! * `citizenship -> credit_risk_level -> result`
//! * `age -> credit_risk_level -> result`
//! * `previous_defaults -> credit_risk_level`
//! * `net_monthly_income -> result` (direct)
//!
//! Everything else is either exogenous or hangs off the demographics with
//! weak links, so that the dataset looks like a loan book without
//! introducing other strong dependencies on the outcome. The binary
//! `result` is the sign of a linear latent score.
//!
//! Output is a pure function of `(seed, n)`: the table is built by
//! rendering each cell as text and running the ordinary CSV inference, so
//! re-loading an export reproduces the same schema.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::csvio::format_number;
use super::{DataTable, InferOptions};
use crate::error::{Error, Result};

pub const TARGET: &str = "result";
pub const POSITIVE: &str = "accepted";
pub const NEGATIVE: &str = "rejected";

pub const COLUMNS: [&str; 26] = [
    "age",
    "gender",
    "citizenship",
    "marital_status",
    "dependents",
    "education",
    "net_monthly_income",
    "household_income",
    "insurance",
    "savings",
    "existing_debt",
    "employment_type",
    "years_employed",
    "loan_amount",
    "loan_purpose",
    "loan_duration_months",
    "monthly_payment",
    "collateral",
    "years_with_bank",
    "credit_risk_level",
    "previous_defaults",
    "num_accounts",
    "id_verified",
    "address_verified",
    "residence_type",
    TARGET,
];

/// Share of foreign applicants.
const P_FOREIGN: f64 = 0.3;

/// Credit-risk latent: `RISK_FOREIGN * foreign - RISK_AGE * age_z
/// + RISK_DEFAULTS * defaults + noise`, cut into five levels.
const RISK_FOREIGN: f64 = 1.6;
const RISK_AGE: f64 = 0.8;
const RISK_DEFAULTS: f64 = 0.6;
const RISK_NOISE: f64 = 0.5;
/// Cut points on the risk latent for levels 1..5.
const RISK_CUTS: [f64; 4] = [-0.6, 0.0, 0.6, 1.2];

/// Outcome latent: `-RESULT_RISK * (level - 3) + RESULT_INCOME * income_z
/// + RESULT_OFFSET + noise`; accepted iff positive.
const RESULT_RISK: f64 = 0.9;
const RESULT_INCOME: f64 = 0.9;
const RESULT_OFFSET: f64 = 0.2;
const RESULT_NOISE: f64 = 0.6;

/// Net monthly income: `INCOME_BASE + INCOME_AGE * age_z
/// + INCOME_EDU * education_index - INCOME_GENDER_GAP * female + noise`.
const INCOME_BASE: f64 = 2400.0;
const INCOME_AGE: f64 = 250.0;
const INCOME_EDU: f64 = 350.0;
const INCOME_GENDER_GAP: f64 = 120.0;
const INCOME_NOISE: f64 = 550.0;
const INCOME_FLOOR: f64 = 600.0;
/// Mean and spread of net income, used to standardize it inside the outcome equation.
const INCOME_MEAN: f64 = 2400.0 + 350.0 * 1.3 - 60.0;
const INCOME_SD: f64 = 680.0;

const AGE_MEAN: f64 = 41.0;
const AGE_SD: f64 = 12.0;

const MARITAL: [&str; 4] = ["divorced", "married", "single", "widowed"];
const EDUCATION: [&str; 4] = ["primary", "secondary", "bachelor", "master"];
const EDUCATION_P: [f64; 4] = [0.15, 0.45, 0.3, 0.1];
const EMPLOYMENT: [&str; 4] = ["employed", "retired", "self_employed", "unemployed"];
const PURPOSE: [&str; 5] = ["business", "car", "consumer", "education", "home"];
const DURATIONS: [u32; 6] = [12, 24, 36, 48, 60, 72];
const RESIDENCE: [&str; 3] = ["family", "own", "rent"];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn pick_weighted(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn yes_no(flag: bool) -> String {
    if flag { "yes" } else { "no" }.to_string()
}

fn money(v: f64) -> String {
    format_number(v.round())
}

fn risk_level(latent: f64) -> u32 {
    1 + RISK_CUTS.iter().filter(|&&c| latent > c).count() as u32
}

fn generate_row(rng: &mut ChaCha8Rng) -> Vec<String> {
    let age_z = normal(rng);
    let age = (AGE_MEAN + AGE_SD * age_z).round().clamp(18.0, 75.0);
    let age_z = (age - AGE_MEAN) / AGE_SD;
    let female = rng.gen_bool(0.5);
    let foreign = rng.gen_bool(P_FOREIGN);
    let married = pick_weighted(rng, &[0.1, 0.45, 0.4, 0.05]);
    let dependents = if MARITAL[married] == "married" {
        rng.gen_range(0..=4u32)
    } else {
        rng.gen_range(0..=1u32)
    };
    let edu = pick_weighted(rng, &EDUCATION_P);

    let income = (INCOME_BASE + INCOME_AGE * age_z + INCOME_EDU * edu as f64
        - if female { INCOME_GENDER_GAP } else { 0.0 }
        + INCOME_NOISE * normal(rng))
    .max(INCOME_FLOOR);
    let household = if MARITAL[married] == "married" {
        income * 1.7 + 300.0 * normal(rng).abs()
    } else {
        income + 150.0 * normal(rng).abs()
    };
    let insurance = rng.gen_bool(0.6);
    let savings = (income * rng.gen_range(0.0..6.0)).round();
    let debt = (2000.0 * -rng.gen_range(f64::EPSILON..1.0f64).ln()).round();
    let employment = if age >= 65.0 && rng.gen_bool(0.7) {
        "retired"
    } else {
        EMPLOYMENT[pick_weighted(rng, &[0.75, 0.0, 0.17, 0.08])]
    };
    let years_employed = rng.gen_range(0.0..=(age - 18.0)).round();

    let purpose = *pick(rng, &PURPOSE);
    let amount = (8.0 + 1.0 * normal(rng) + if purpose == "home" { 2.0 } else { 0.0 })
        .exp()
        .clamp(500.0, 500_000.0)
        .round();
    let duration = *pick(rng, &DURATIONS);
    let payment = (amount / duration as f64 * 1.06 + 15.0 * normal(rng)).max(1.0);
    let collateral = purpose == "home" || rng.gen_bool(0.2);
    let years_with_bank = rng.gen_range(0.0..=(age - 18.0)).round();

    let defaults = pick_weighted(rng, &[0.7, 0.18, 0.08, 0.04]) as u32;
    let risk_latent = RISK_FOREIGN * f64::from(u8::from(foreign)) - RISK_AGE * age_z
        + RISK_DEFAULTS * f64::from(defaults)
        + RISK_NOISE * normal(rng);
    let level = risk_level(risk_latent);
    let accounts = rng.gen_range(1..=6u32);
    let id_verified = rng.gen_bool(0.95);
    let address_verified = rng.gen_bool(0.9);
    let residence = *pick(rng, &RESIDENCE);

    let income_z = (income - INCOME_MEAN) / INCOME_SD;
    let outcome = -RESULT_RISK * (f64::from(level) - 3.0)
        + RESULT_INCOME * income_z
        + RESULT_OFFSET
        + RESULT_NOISE * normal(rng);

    vec![
        format_number(age),
        if female { "F" } else { "M" }.to_string(),
        if foreign { "foreign" } else { "national" }.to_string(),
        MARITAL[married].to_string(),
        dependents.to_string(),
        EDUCATION[edu].to_string(),
        money(income),
        money(household),
        yes_no(insurance),
        money(savings),
        money(debt),
        employment.to_string(),
        format_number(years_employed),
        money(amount),
        purpose.to_string(),
        duration.to_string(),
        money(payment),
        yes_no(collateral),
        format_number(years_with_bank),
        level.to_string(),
        defaults.to_string(),
        accounts.to_string(),
        yes_no(id_verified),
        yes_no(address_verified),
        residence.to_string(),
        if outcome > 0.0 { POSITIVE } else { NEGATIVE }.to_string(),
    ]
}

/// Raw text records of the synthetic dataset.
pub fn synth_records(seed: u64, n: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| generate_row(&mut rng)).collect()
}

/// Generate `n` synthetic loan applications. The table has no target set;
/// the outcome column is [`TARGET`] with positive label [`POSITIVE`].
pub fn synth_loans(seed: u64, n: usize) -> Result<DataTable> {
    if n == 0 {
        return Err(Error::Validation("row count must be at least 1".into()));
    }
    let header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
    DataTable::from_records(&header, &synth_records(seed, n), InferOptions::default())
}
