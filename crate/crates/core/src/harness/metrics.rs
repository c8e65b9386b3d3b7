//! Rank-based AUC and ROC curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AUC of a scored set, or a marker when only one class is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AucValue {
    Defined(f64),
    Degenerate(Degenerate),
}

/// Serialises as the string `"degenerate"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degenerate {
    Degenerate,
}

impl AucValue {
    pub fn from_result(r: Result<f64>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Self::Defined(v)),
            Err(Error::DegenerateInput(_)) => Ok(Self::Degenerate(Degenerate::Degenerate)),
            Err(e) => Err(e),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Defined(v) => Some(*v),
            Self::Degenerate(_) => None,
        }
    }
}

impl std::fmt::Display for AucValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Defined(v) => write!(f, "{v:.4}"),
            Self::Degenerate(_) => f.write_str("degenerate"),
        }
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DegenerateInput(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::DegenerateInput(format!("score {s} is not comparable")));
    }
    let mut pos = 0;
    for &l in labels {
        match l {
            0 => {}
            1 => pos += 1,
            other => return Err(Error::Label(format!("label {other} is not 0 or 1"))),
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateInput(format!(
            "AUC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// `P(pos > neg) + 0.5 P(pos = neg)` via average ranks.
///
/// The rank sum is accumulated doubled, so it stays an integer and the
/// result is a single division.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, ranks starting at 1
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // tied block i..=j has average rank (i + 1 + j + 1) / 2
        let twice_rank = (i + j + 2) as u128;
        let block_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += twice_rank * block_pos;
        i = j + 1;
    }
    let (pos, neg) = (pos as u128, neg as u128);
    // 2U = 2R - pos(pos + 1); AUC = U / (pos * neg)
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// ROC points at every distinct threshold, highest first, framed by
/// `(0, 0)` and `(1, 1)`.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    Ok(points)
}

/// Trapezoidal area under a polyline.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.8, 0.8, 0.3], &[1, 0, 0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::DegenerateInput(_))));
        assert!(matches!(roc_points(&[0.1], &[0]), Err(Error::DegenerateInput(_))));
        let marker = AucValue::from_result(auc(&[0.3], &[1])).unwrap();
        assert_eq!(marker.value(), None);
        assert_eq!(serde_json::to_string(&marker).unwrap(), "\"degenerate\"");
        assert_eq!(serde_json::to_string(&AucValue::Defined(0.5)).unwrap(), "0.5");
    }

    #[test]
    fn roc_examples() {
        assert_eq!(
            roc_points(&[0.9, 0.1], &[1, 0]).unwrap(),
            vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        );
        let ties = roc_points(&[0.5; 4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(ties, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(trapezoid_area(&ties), 0.5);
    }
}
