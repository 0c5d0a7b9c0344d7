//! The ranking formula and its exported form.
//!
//! Scores are additive: `r = base_score + Σ wᵢ·tᵢ`. With `W = 0` every item
//! keeps its base score, so the zero vector reproduces the original ranking.

use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{Item, WeightVector};
use crate::error::{Error, Result};

/// The only formula kind this crate reads or writes.
pub const FORMULA_KIND: &str = "additive_linear_v1";

/// Scores one item under `w`.
pub fn score_item(item: &Item, w: &WeightVector) -> Result<f64> {
    if item.terms.len() != w.len() {
        return Err(Error::Shape {
            expected: item.terms.len(),
            found: w.len(),
        });
    }
    let r = score_unchecked(item, w.as_slice());
    if !r.is_finite() {
        return Err(Error::NonFinite(format!("score of item {}", item.item_id)));
    }
    Ok(r)
}

/// Hot-path scoring without shape checks. Terms are summed in index order.
#[inline]
pub(crate) fn score_unchecked(item: &Item, w: &[f64]) -> f64 {
    item.terms
        .iter()
        .zip(w)
        .fold(item.base_score, |acc, (t, w)| acc + w * t)
}

/// Scores of a slate plus its ordering (indices into the input, best first).
#[derive(Debug, Clone, PartialEq)]
pub struct SlateRanking {
    pub scores: Vec<f64>,
    pub order: Vec<usize>,
}

/// Scores every item and sorts by descending score; equal scores fall back to
/// ascending `item_id`.
pub fn rank_slate(items: &[Item], w: &WeightVector) -> Result<SlateRanking> {
    if items.is_empty() {
        return Err(Error::EmptyInput("slate has no items".into()));
    }
    let scores = items
        .iter()
        .map(|item| score_item(item, w))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| items[a].item_id.cmp(&items[b].item_id))
    });
    Ok(SlateRanking { scores, order })
}

/// Where an exported formula came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_sha256: String,
    pub config_sha256: String,
}

/// A guardrailed ranking formula ready for serving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaExport {
    pub formula_kind: String,
    pub treatment_id: String,
    pub metric_names: Vec<String>,
    pub weights: WeightVector,
    pub created_at: DateTime<Utc>,
    pub provenance: Provenance,
}

impl FormulaExport {
    /// Pretty JSON with a trailing newline. Weights use shortest round-trip decimals.
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("formula export always serializes");
        s.push('\n');
        s
    }
}

/// Builds the export document for `weights`. Refuses non-finite weights.
pub fn export_formula(
    weights: &WeightVector,
    treatment_id: &str,
    metric_names: &[String],
    provenance: Provenance,
    created_at: DateTime<Utc>,
) -> Result<FormulaExport> {
    if let Some(i) = weights.as_slice().iter().position(|w| !w.is_finite()) {
        return Err(Error::NonFinite(format!("weight {i} of export for {treatment_id}")));
    }
    if weights.len() != metric_names.len() {
        return Err(Error::Shape {
            expected: metric_names.len(),
            found: weights.len(),
        });
    }
    Ok(FormulaExport {
        formula_kind: FORMULA_KIND.to_string(),
        treatment_id: treatment_id.to_string(),
        metric_names: metric_names.to_vec(),
        weights: weights.clone(),
        created_at,
        provenance,
    })
}

/// Parses a document produced by [`FormulaExport::render`].
pub fn parse_formula(document: &str) -> Result<FormulaExport> {
    let value: serde_json::Value = serde_json::from_str(document).map_err(json_error)?;
    match value.get("formula_kind").and_then(|k| k.as_str()) {
        Some(FORMULA_KIND) => {}
        Some(other) => return Err(Error::UnsupportedVersion(other.to_string())),
        None => return Err(Error::parse("formula_kind", "missing or not a string")),
    }
    // Re-parse from text rather than from `value` so floats take the exact
    // decimal-to-binary path.
    let export: FormulaExport = serde_json::from_str(document).map_err(json_error)?;
    if export.weights.len() != export.metric_names.len() {
        return Err(Error::parse(
            "weights",
            format!(
                "{} weights for {} metrics",
                export.weights.len(),
                export.metric_names.len()
            ),
        ));
    }
    if !export.weights.is_finite() {
        return Err(Error::NonFinite("weights".into()));
    }
    Ok(export)
}

fn json_error(e: serde_json::Error) -> Error {
    Error::parse(format!("line {} column {}", e.line(), e.column()), e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn item(id: &str, base: f64, terms: Vec<f64>) -> Item {
        let n = terms.len();
        Item::new(id, base, terms, vec![0.0; n])
    }

    fn prov() -> Provenance {
        Provenance {
            dataset_sha256: "ds".into(),
            config_sha256: "cfg".into(),
        }
    }

    fn names() -> Vec<String> {
        vec!["s1".into(), "s2".into()]
    }

    fn epoch() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap()
    }

    #[test]
    fn score_examples() {
        let w = WeightVector::new(vec![5.0, 7.0]);
        assert_eq!(score_item(&item("a", 1.0, vec![0.0, 0.0]), &w).unwrap(), 1.0);
        let it = item("a", 1.0, vec![2.0, 3.0]);
        assert_eq!(score_item(&it, &WeightVector::zeros(2)).unwrap(), 1.0);
        assert_eq!(score_item(&it, &WeightVector::new(vec![0.5, 1.0])).unwrap(), 5.0);
        assert!(matches!(
            score_item(&it, &WeightVector::zeros(3)),
            Err(Error::Shape { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn slate_examples() {
        let w = WeightVector::zeros(1);
        let one = rank_slate(&[item("z", 2.0, vec![1.0])], &w).unwrap();
        assert_eq!(one.order, vec![0]);
        assert_eq!(one.scores, vec![2.0]);

        let tied = rank_slate(&[item("b", 1.0, vec![0.0]), item("a", 1.0, vec![0.0])], &w).unwrap();
        assert_eq!(tied.order, vec![1, 0]);

        let three = rank_slate(
            &[
                item("x", 0.2, vec![9.0]),
                item("y", 0.9, vec![0.0]),
                item("z", 0.5, vec![-3.0]),
            ],
            &w,
        )
        .unwrap();
        assert_eq!(three.order, vec![1, 2, 0]);

        assert!(matches!(rank_slate(&[], &w), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn export_examples() {
        let zero = export_formula(&WeightVector::zeros(2), "prod", &names(), prov(), epoch()).unwrap();
        assert_eq!(zero.formula_kind, "additive_linear_v1");
        assert_eq!(zero.weights.as_slice(), &[0.0, 0.0]);

        let w = WeightVector::new(vec![0.25, 0.5]);
        let doc = export_formula(&w, "prod", &names(), prov(), epoch()).unwrap().render();
        assert_eq!(parse_formula(&doc).unwrap().weights, w);

        let nan = WeightVector::new(vec![f64::NAN, 0.0]);
        assert!(matches!(
            export_formula(&nan, "prod", &names(), prov(), epoch()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn parse_errors() {
        let doc = export_formula(&WeightVector::new(vec![1.0, 2.0]), "t", &names(), prov(), epoch())
            .unwrap()
            .render();
        assert_eq!(parse_formula(&doc).unwrap().weights.as_slice(), &[1.0, 2.0]);

        let v2 = doc.replace("additive_linear_v1", "additive_linear_v2");
        assert!(matches!(parse_formula(&v2), Err(Error::UnsupportedVersion(k)) if k == "additive_linear_v2"));

        let truncated = &doc[..doc.len() / 2];
        match parse_formula(truncated) {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("line ")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn golden_export() {
        let w = WeightVector::new(vec![0.1, 2.5]);
        let doc = export_formula(&w, "exp_42", &names(), prov(), epoch())
            .unwrap()
            .render();
        let golden = include_str!("../tests/golden/formula_export.json");
        assert_eq!(doc, golden);
        assert_eq!(parse_formula(golden).unwrap().weights, w);
    }
}
