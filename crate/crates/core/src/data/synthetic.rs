//! Synthetic stated-preference route-choice data in the Swiss-train wide
//! format.
//!
//! This generator exists because the published route-choice file cannot be
//! redistributed with the repository; it produces a stand-in with the same
//! columns, realistic marginal distributions (trip times around 52 minutes,
//! costs around 20 CHF, headways around 32 minutes, roughly one
//! interchange), and a binary-logit choice process whose time/cost
//! trade-off varies by trip purpose and income. Tests and examples run
//! against this file unless a real dataset path is supplied.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};

use crate::data::dataset::{ChoiceDataset, ColumnKind, DatasetMeta};
use crate::data::schema::{load_wide_csv, write_wide_csv, Schema};
use crate::error::Result;
use crate::simulation::sample_ev1;

/// Schema for the Swiss-format route-choice file (works for the stand-in
/// and for a real file with these column names).
pub fn swiss_schema() -> Schema {
    Schema::from_toml(
        r#"
        version = 1
        choice_column = "choice"
        choice_base = 0

        [[attribute]]
        name = "travel_time"
        unit = "minutes"
        kind = "continuous"
        columns = ["tt1", "tt2"]

        [[attribute]]
        name = "travel_cost"
        unit = "chf"
        kind = "continuous"
        columns = ["tc1", "tc2"]

        [[attribute]]
        name = "headway"
        unit = "minutes"
        kind = "continuous"
        columns = ["hw1", "hw2"]

        [[attribute]]
        name = "interchanges"
        unit = "count"
        kind = "continuous"
        columns = ["ch1", "ch2"]

        [[shared]]
        name = "income"
        column = "hh_inc_abs"
        kind = "continuous"
        unit = "chf_per_year"

        [[shared]]
        name = "car_availability"
        column = "car_availability"
        kind = "binary"

        [[shared]]
        name = "commute"
        column = "commute"
        kind = "binary"

        [[shared]]
        name = "shopping"
        column = "shopping"
        kind = "binary"

        [[shared]]
        name = "business"
        column = "business"
        kind = "binary"
        "#,
    )
    .expect("embedded schema is valid")
}

// choice-process coefficients: cost in 1/CHF, times in 1/minute.
// VOTT by purpose = 60 * b_time / b_cost at the reference income:
// leisure ~18, commute ~27, shopping ~24, business ~48 CHF/h.
const B_COST: f64 = -0.16;
const B_TIME_LEISURE: f64 = -0.048;
const B_TIME_COMMUTE: f64 = -0.072;
const B_TIME_SHOPPING: f64 = -0.064;
const B_TIME_BUSINESS: f64 = -0.128;
const B_HEADWAY: f64 = -0.029;
const B_INTERCHANGE: f64 = -0.56;
const REF_INCOME: f64 = 76_508.0;

/// Generate `n` synthetic route-choice observations. Deterministic per seed.
pub fn generate_swiss_standin(n: usize, seed: u64) -> Result<ChoiceDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_time = LogNormal::new(52.5f64.ln() - 0.35 * 0.35 / 2.0, 0.35).unwrap();
    let alt_jitter = Normal::new(-0.22f64 * 0.22 / 2.0, 0.22).unwrap();
    let cost_jitter = Normal::new(-0.28f64 * 0.28 / 2.0, 0.28).unwrap();
    let income_dist = LogNormal::new(REF_INCOME.ln() - 0.45 * 0.45 / 2.0, 0.45).unwrap();
    let headway_spread = Gamma::new(2.0, 11.2).unwrap();

    let k_x = 4; // time, cost, headway, interchanges
    let k_q = 5; // income, car availability, purpose dummies (leisure omitted)
    let j = 2;
    let mut x = Vec::with_capacity(n * j * k_x);
    let mut q = Vec::with_capacity(n * k_q);
    let mut y = Vec::with_capacity(n);

    for _ in 0..n {
        let t_base: f64 = base_time.sample(&mut rng);
        let income: f64 = income_dist.sample(&mut rng).clamp(15_000.0, 400_000.0);
        let car = rng.gen_bool(0.38);
        // purposes: commute 0.29, shopping 0.08, business 0.09, leisure 0.54
        let u: f64 = rng.gen();
        let (commute, shopping, business) = if u < 0.29 {
            (1.0, 0.0, 0.0)
        } else if u < 0.37 {
            (0.0, 1.0, 0.0)
        } else if u < 0.46 {
            (0.0, 0.0, 1.0)
        } else {
            (0.0, 0.0, 0.0) // leisure
        };
        let b_time = if commute == 1.0 {
            B_TIME_COMMUTE
        } else if shopping == 1.0 {
            B_TIME_SHOPPING
        } else if business == 1.0 {
            B_TIME_BUSINESS
        } else {
            B_TIME_LEISURE
        };
        // richer travelers are less cost sensitive
        let b_cost = B_COST * (REF_INCOME / income).powf(0.3);

        let eps = sample_ev1(&mut rng, j);
        let mut best = 0usize;
        let mut best_u = f64::NEG_INFINITY;
        for (a, &e) in eps.iter().enumerate() {
            let tt = t_base * alt_jitter.sample(&mut rng).exp();
            let tc = 0.374 * tt * cost_jitter.sample(&mut rng).exp();
            let hw = 10.0 + headway_spread.sample(&mut rng);
            let ch = {
                let r: f64 = rng.gen();
                if r < 0.38 {
                    0.0
                } else if r < 0.73 {
                    1.0
                } else if r < 0.95 {
                    2.0
                } else {
                    3.0
                }
            };
            let v = b_time * tt + b_cost * tc + B_HEADWAY * hw + B_INTERCHANGE * ch;
            if v + e > best_u {
                best_u = v + e;
                best = a;
            }
            x.extend_from_slice(&[tt, tc, hw, ch]);
        }
        q.extend_from_slice(&[income, car as i64 as f64, commute, shopping, business]);
        y.push(best);
    }

    let schema = swiss_schema();
    let mut meta = DatasetMeta::unnamed(k_x, k_q);
    meta.attr_names = schema.attribute.iter().map(|a| a.name.clone()).collect();
    meta.attr_units = schema.attribute.iter().map(|a| a.unit.clone()).collect();
    meta.attr_kinds = schema.attribute.iter().map(|a| a.kind).collect();
    meta.shared_names = schema.shared.iter().map(|s| s.name.clone()).collect();
    meta.shared_kinds = vec![
        ColumnKind::Continuous,
        ColumnKind::Binary,
        ColumnKind::Binary,
        ColumnKind::Binary,
        ColumnKind::Binary,
    ];
    ChoiceDataset::new(j, k_x, k_q, x, q, y, meta)
}

/// Write the stand-in to a wide CSV under [`swiss_schema`].
pub fn write_swiss_standin(n: usize, seed: u64, path: &std::path::Path) -> Result<()> {
    let ds = generate_swiss_standin(n, seed)?;
    write_wide_csv(&ds, &swiss_schema(), path)
}

/// Load a Swiss-format CSV under [`swiss_schema`].
pub fn load_swiss(path: &std::path::Path) -> Result<ChoiceDataset> {
    load_wide_csv(path, &swiss_schema())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standin_matches_published_marginals() {
        let ds = generate_swiss_standin(4000, 7).unwrap();
        let n = ds.n as f64;
        let mean_attr = |alt: usize, k: usize| -> f64 {
            (0..ds.n).map(|i| ds.x_at(i, alt, k)).sum::<f64>() / n
        };
        // travel time ~ 52.5 min, cost ~ 19.7 CHF, headway ~ 32.4 min,
        // interchanges ~ 0.94, choice share ~ 0.5, income ~ 76.5k
        assert!((mean_attr(0, 0) - 52.59).abs() < 3.0, "tt1 {}", mean_attr(0, 0));
        assert!((mean_attr(0, 1) - 19.67).abs() < 1.5, "tc1 {}", mean_attr(0, 1));
        assert!((mean_attr(0, 2) - 32.48).abs() < 1.5, "hw1 {}", mean_attr(0, 2));
        assert!((mean_attr(0, 3) - 0.94).abs() < 0.1, "ch1 {}", mean_attr(0, 3));
        let choice_mean = ds.choices().iter().map(|&c| c as f64).sum::<f64>() / n;
        assert!((choice_mean - 0.5).abs() < 0.03, "choice {}", choice_mean);
        let income_mean = (0..ds.n).map(|i| ds.q_at(i, 0)).sum::<f64>() / n;
        assert!(
            (income_mean - 76_508.0).abs() < 5_000.0,
            "income {}",
            income_mean
        );
    }

    #[test]
    fn standin_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("swiss.csv");
        write_swiss_standin(500, 3, &path).unwrap();
        let ds = load_swiss(&path).unwrap();
        let again = generate_swiss_standin(500, 3).unwrap();
        assert_eq!(ds.choices(), again.choices());
        assert_eq!(ds.x_raw(), again.x_raw());
        assert_eq!(ds.n, 500);
    }
}
