//! Cost-sensitive threshold selection.
//!
//! Flagging an encounter that would have been readmitted saves the cost of
//! the readmission minus the cost of the extra diagnostic day; flagging one
//! that would not have been readmitted only costs the extra day. Missed and
//! correctly ignored encounters change nothing. All money is integer cents.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{sorted_desc, ConfusionMatrix};

/// Money in whole cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub fn from_dollars(d: i64) -> Self {
        Cents(d * 100)
    }

    /// Nearest cent to a dollar amount.
    pub fn from_dollars_f64(d: f64) -> Result<Self> {
        let c = (d * 100.0).round();
        if !c.is_finite() || c.abs() > i64::MAX as f64 {
            return Err(Error::InvalidArgument(format!("amount ${d} is out of range")));
        }
        Ok(Cents(c as i64))
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Exact dollar amount without currency sign or grouping, e.g. `-24090.00`.
    pub fn plain(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = (abs / 100).to_string();
        let mut grouped = String::new();
        for (i, ch) in whole.chars().enumerate() {
            if i > 0 && (whole.len() - i) % 3 == 0 {
                grouped.push(',');
            }
            grouped.push(ch);
        }
        write!(f, "{sign}${grouped}.{:02}", abs % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    /// Cost of one readmission.
    pub alpha: Cents,
    /// Cost of the extra diagnostic day given to a flagged encounter.
    pub beta: Cents,
}

pub const DEFAULT_ALPHA_DOLLARS: i64 = 10_591;
pub const DEFAULT_BETA_DOLLARS: i64 = 2_409;

impl Default for CostParams {
    fn default() -> Self {
        Self {
            alpha: Cents::from_dollars(DEFAULT_ALPHA_DOLLARS),
            beta: Cents::from_dollars(DEFAULT_BETA_DOLLARS),
        }
    }
}

impl CostParams {
    pub fn new(alpha: Cents, beta: Cents) -> Result<Self> {
        if !(alpha > beta && beta > Cents(0)) {
            return Err(Error::InvalidArgument(format!(
                "cost parameters need alpha > beta > 0 (alpha {alpha}, beta {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Saved-cost matrix entries `(tp, fp, fn, tn)`.
    pub fn saved_matrix(&self) -> [Cents; 4] {
        [
            Cents(self.alpha.0 - self.beta.0),
            Cents(-self.beta.0),
            Cents(0),
            Cents(0),
        ]
    }
}

/// `tp (alpha - beta) - fp beta`.
pub fn saved_cost(cm: &ConfusionMatrix, params: &CostParams) -> Cents {
    let gain = (params.alpha.0 - params.beta.0) as i128 * cm.tp as i128;
    let loss = params.beta.0 as i128 * cm.fp as i128;
    Cents((gain - loss) as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Encounters scoring at or above this are flagged.
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub saved: Cents,
}

/// Threshold above every valid score; flags nothing.
pub fn above_all() -> f64 {
    f64::from_bits(1.0f64.to_bits() + 1)
}

/// Candidate thresholds: 0, every distinct score, and just above 1.
pub fn candidate_thresholds(scores: &[(f64, bool)]) -> Vec<f64> {
    let mut t: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
    t.push(0.0);
    t.push(above_all());
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Threshold maximising saved cost over every candidate threshold; ties go
/// to the lower threshold.
pub fn optimize_threshold(scores: &[(f64, bool)], params: &CostParams) -> Result<ThresholdResult> {
    if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite score {s}")));
    }
    let positives = scores.iter().filter(|(_, y)| *y).count() as u64;
    let negatives = scores.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(
            "threshold optimisation needs both classes".into(),
        ));
    }
    let sorted = sorted_desc(scores);
    let mut thresholds = candidate_thresholds(scores);
    thresholds.reverse();
    let mut cm = ConfusionMatrix {
        tp: 0,
        fp: 0,
        fn_: positives,
        tn: negatives,
    };
    let mut i = 0;
    let mut best: Option<ThresholdResult> = None;
    // descending thresholds: admit every score >= t, then evaluate
    for t in thresholds {
        while i < sorted.len() && sorted[i].0 >= t {
            if sorted[i].1 {
                cm.tp += 1;
                cm.fn_ -= 1;
            } else {
                cm.fp += 1;
                cm.tn -= 1;
            }
            i += 1;
        }
        let saved = saved_cost(&cm, params);
        if best.is_none_or(|b| saved >= b.saved) {
            best = Some(ThresholdResult {
                threshold: t,
                confusion: cm,
                saved,
            });
        }
    }
    Ok(best.expect("at least two candidate thresholds"))
}

/// Scale a test-set saving to a population of `n_total` encounters, rounded
/// to the nearest cent.
pub fn extrapolate_total(saved_test: Cents, n_test: u64, n_total: u64) -> Result<Cents> {
    if n_test == 0 {
        return Err(Error::InvalidArgument("cannot extrapolate from zero encounters".into()));
    }
    let num = saved_test.0 as i128 * n_total as i128;
    let den = n_test as i128;
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    let rounded = if 2 * r >= den { q + 1 } else { q };
    i64::try_from(rounded)
        .map(Cents)
        .map_err(|_| Error::Numerical("extrapolated amount overflows".into()))
}

/// Per-day cost from the per-stay cost and the average stay, rounded to
/// whole dollars.
pub fn derive_beta(alpha: Cents, avg_stay_days: f64) -> Result<Cents> {
    if !(avg_stay_days > 0.0 && avg_stay_days.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "average stay must be positive, got {avg_stay_days}"
        )));
    }
    Ok(Cents::from_dollars(
        (alpha.dollars() / avg_stay_days).round() as i64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::confusion;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cm(tp: u64, fp: u64) -> ConfusionMatrix {
        ConfusionMatrix {
            tp,
            fp,
            fn_: 0,
            tn: 0,
        }
    }

    /// Independent oracle: evaluate every candidate threshold from scratch.
    fn brute_force(scores: &[(f64, bool)], params: &CostParams) -> ThresholdResult {
        let mut best: Option<ThresholdResult> = None;
        for t in candidate_thresholds(scores) {
            let c = confusion(scores, t).unwrap();
            let saved = saved_cost(&c, params);
            let better = match &best {
                None => true,
                Some(b) => saved > b.saved || (saved == b.saved && t < b.threshold),
            };
            if better {
                best = Some(ThresholdResult {
                    threshold: t,
                    confusion: c,
                    saved,
                });
            }
        }
        best.unwrap()
    }

    #[test]
    fn saved_cost_examples() {
        let p = CostParams::default();
        assert_eq!(saved_cost(&cm(100, 50), &p), Cents::from_dollars(697_750));
        assert_eq!(saved_cost(&cm(0, 0), &p), Cents(0));
        assert_eq!(saved_cost(&cm(0, 10), &p), Cents::from_dollars(-24_090));
        assert_eq!(
            p.saved_matrix(),
            [
                Cents::from_dollars(8182),
                Cents::from_dollars(-2409),
                Cents(0),
                Cents(0)
            ]
        );
    }

    #[test]
    fn display_groups_thousands() {
        assert_eq!(Cents::from_dollars(697_750).to_string(), "$697,750.00");
        assert_eq!(Cents(-2_409_05).to_string(), "-$2,409.05");
        assert_eq!(Cents(5).to_string(), "$0.05");
        assert_eq!(Cents(-2_409_05).plain(), "-2409.05");
        assert_eq!(Cents::from_dollars(697_750).plain(), "697750.00");
    }

    #[test]
    fn params_validated() {
        assert!(CostParams::new(Cents(10), Cents(10)).is_err());
        assert!(CostParams::new(Cents(10), Cents(0)).is_err());
        assert!(CostParams::new(Cents(10), Cents(1)).is_ok());
    }

    #[test]
    fn perfect_scorer_saves_every_positive() {
        let p = CostParams::default();
        let scores = vec![(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        let r = optimize_threshold(&scores, &p).unwrap();
        assert_eq!(r.threshold, 0.8);
        assert_eq!(r.saved, Cents::from_dollars(2 * 8182));
    }

    #[test]
    fn identical_scores_pick_better_trivial_policy() {
        let p = CostParams::default();
        let many_pos = vec![(0.5, true), (0.5, true), (0.5, false)];
        let r = optimize_threshold(&many_pos, &p).unwrap();
        assert_eq!(r.confusion.predicted_positive(), 3);
        // at 0 and at 0.5 everything is flagged; the lower threshold wins
        assert_eq!(r.threshold, 0.0);
        let mostly_neg: Vec<(f64, bool)> = std::iter::once((0.5, true))
            .chain(std::iter::repeat_n((0.5, false), 9))
            .collect();
        let r = optimize_threshold(&mostly_neg, &p).unwrap();
        assert_eq!(r.confusion.predicted_positive(), 0);
        assert_eq!(r.saved, Cents(0));
    }

    #[test]
    fn single_class_rejected() {
        let p = CostParams::default();
        assert!(optimize_threshold(&[(0.2, true)], &p).is_err());
        assert!(optimize_threshold(&[(0.2, false), (0.3, false)], &p).is_err());
    }

    #[test]
    fn six_instance_fixture_matches_oracle() {
        let p = CostParams::default();
        let scores = vec![
            (0.95, false),
            (0.9, true),
            (0.7, true),
            (0.7, false),
            (0.4, true),
            (0.2, false),
        ];
        assert_eq!(optimize_threshold(&scores, &p).unwrap(), brute_force(&scores, &p));
    }

    #[test]
    fn hundred_random_fixtures_match_oracle() {
        let p = CostParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(2..80);
            let mut scores: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    let s = (rng.random_range(0..20) as f64) / 19.0;
                    (s, rng.random_bool(0.3))
                })
                .collect();
            scores[0].1 = true;
            scores[1].1 = false;
            assert_eq!(optimize_threshold(&scores, &p).unwrap(), brute_force(&scores, &p));
        }
    }

    #[test]
    fn extrapolation() {
        assert_eq!(
            extrapolate_total(Cents::from_dollars(59_425_000), 23_053, 98_053).unwrap(),
            Cents(25_275_667_050)
        );
        assert_eq!(extrapolate_total(Cents(0), 10, 1000).unwrap(), Cents(0));
        assert_eq!(extrapolate_total(Cents(1234), 7, 7).unwrap(), Cents(1234));
        assert!(extrapolate_total(Cents(1), 0, 7).is_err());
    }

    #[test]
    fn beta_from_average_stay() {
        let alpha = Cents::from_dollars(10_591);
        assert_eq!(derive_beta(alpha, 4.396).unwrap(), Cents::from_dollars(2409));
        assert_eq!(derive_beta(alpha, 10_591.0).unwrap(), Cents::from_dollars(1));
        assert!(derive_beta(alpha, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn saved_cost_is_linear(a in 0u64..10_000, b in 0u64..10_000, c in 0u64..10_000, d in 0u64..10_000) {
            let p = CostParams::default();
            let lhs = saved_cost(&cm(a, b), &p).0 + saved_cost(&cm(c, d), &p).0;
            prop_assert_eq!(lhs, saved_cost(&(cm(a, b) + cm(c, d)), &p).0);
        }

        #[test]
        fn optimum_matches_oracle_and_beats_trivial(
            raw in prop::collection::vec((0u8..50, any::<bool>()), 2..60),
            alpha in 2i64..50_000,
            frac in 0.01f64..0.99,
        ) {
            let beta = ((alpha as f64 * frac) as i64).clamp(1, alpha - 1);
            let p = CostParams::new(Cents(alpha), Cents(beta)).unwrap();
            let mut scores: Vec<(f64, bool)> =
                raw.iter().map(|(s, y)| (*s as f64 / 49.0, *y)).collect();
            scores[0].1 = true;
            scores[1].1 = false;
            let r = optimize_threshold(&scores, &p).unwrap();
            prop_assert_eq!(r, brute_force(&scores, &p));
            for t in [0.0, above_all()] {
                prop_assert!(r.saved >= saved_cost(&confusion(&scores, t).unwrap(), &p));
            }
        }
    }
}
