//! Classification, masked reconstruction and joint losses.

use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::error::{Error, Result};
use crate::video::{MaskSpec, TokenBatch};

/// How the masked reconstruction error of one sample is normalised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecNormalization {
    /// Divide by `|M_i| * D_tok`: a per-element mean over masked patches.
    #[default]
    PerElement,
    /// Divide by `|M_i|` only: squared patch norms averaged over masked patches.
    PerPatch,
}

impl RecNormalization {
    pub fn denominator(self, masked: usize, token_dim: usize) -> f64 {
        match self {
            RecNormalization::PerElement => (masked * token_dim) as f64,
            RecNormalization::PerPatch => masked as f64,
        }
    }
}

/// Per-step loss values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_cls: f64,
    pub l_rec: f64,
    pub l_total: f64,
    pub lambda: f64,
}

impl LossReport {
    pub fn new(l_cls: f64, l_rec: f64, lambda: f64) -> Result<Self> {
        Ok(Self {
            l_cls,
            l_rec,
            l_total: joint_loss(l_cls, l_rec, lambda)?,
            lambda,
        })
    }
}

pub fn check_label(label: u8) -> Result<usize> {
    match label {
        0 | 1 => Ok(usize::from(label)),
        other => Err(Error::Label(format!("label {other} is not 0 or 1"))),
    }
}

/// Mean over rows of `-log softmax(logits)[label]`, with log-sum-exp
/// stabilisation.
pub fn cross_entropy(logits: &Matrix, labels: &[u8]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Geometry(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.cols() != 2 {
        return Err(Error::Geometry(format!(
            "expected two logits per row, got {}",
            logits.cols()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Label("empty batch".into()));
    }
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let k = check_label(label)?;
        let row = logits.row(r);
        let max = row[0].max(row[1]);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[k];
    }
    Ok(total / labels.len() as f64)
}

/// Softmax probability of class 1 for each row.
pub fn fake_probabilities(logits: &Matrix) -> Vec<f64> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            1.0 / (1.0 + (row[0] - row[1]).exp())
        })
        .collect()
}

/// Mean over the batch of the normalised squared error on masked tokens.
pub fn masked_mse(
    pred: &TokenBatch,
    target: &TokenBatch,
    mask: &MaskSpec,
    normalization: RecNormalization,
) -> Result<f64> {
    if pred.batch() != target.batch()
        || pred.seq_len() != target.seq_len()
        || pred.dim() != target.dim()
    {
        return Err(Error::Geometry("prediction and target shapes differ".into()));
    }
    if mask.batch() != pred.batch() || mask.num_tokens() != pred.seq_len() {
        return Err(Error::Mask("mask does not match the token batch".into()));
    }
    let d = pred.dim();
    let mut total = 0.0;
    for (b, masked) in mask.masked().iter().enumerate() {
        if masked.is_empty() {
            return Err(Error::DegenerateMask(format!(
                "sample {b} has no masked patches"
            )));
        }
        let mut acc = 0.0;
        for &s in masked {
            for (p, t) in pred.token(b, s).iter().zip(target.token(b, s)) {
                acc += (p - t) * (p - t);
            }
        }
        total += acc / normalization.denominator(masked.len(), d);
    }
    Ok(total / mask.batch() as f64)
}

/// `lambda * l_cls + (1 - lambda) * l_rec`.
pub fn joint_loss(l_cls: f64, l_rec: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda {lambda} is outside [0, 1]")));
    }
    Ok(lambda * l_cls + (1.0 - lambda) * l_rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{ClipShape, PatchGeometry};

    fn logits(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_vec(rows.len(), 2, rows.iter().flatten().copied().collect())
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        assert!((cross_entropy(&logits(&[[0.0, 0.0]]), &[0]).unwrap() - ln2).abs() < 1e-12);
        assert!((cross_entropy(&logits(&[[0.0, 0.0]]), &[1]).unwrap() - ln2).abs() < 1e-12);
        assert!(cross_entropy(&logits(&[[-50.0, 50.0]]), &[1]).unwrap() < 1e-20);
        let expected = 2.0 + (1.0 + (-2.0f64).exp()).ln();
        let got = cross_entropy(&logits(&[[1.0, -1.0]]), &[1]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 2.126928).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        assert!(matches!(
            cross_entropy(&logits(&[[0.0, 0.0]]), &[2]),
            Err(Error::Label(_))
        ));
    }

    fn tokens(value: f64) -> TokenBatch {
        let g = PatchGeometry::new(ClipShape::new(2, 1, 4, 4), 2, 2).unwrap();
        let (s, d) = (g.num_tokens(), g.token_dim());
        TokenBatch::new(vec![value; 2 * s * d], 2, s, d, g, vec![(0..s).collect(); 2]).unwrap()
    }

    #[test]
    fn masked_mse_examples() {
        let mask = MaskSpec::from_masked(vec![vec![0, 2], vec![1]], 4, 0.5, 0).unwrap();
        let t = tokens(0.25);
        let norm = RecNormalization::PerElement;
        assert_eq!(masked_mse(&t, &t, &mask, norm).unwrap(), 0.0);
        assert_eq!(masked_mse(&tokens(1.25), &t, &mask, norm).unwrap(), 1.0);
        // per-patch normalisation multiplies by D_tok = 8
        assert_eq!(
            masked_mse(&tokens(1.25), &t, &mask, RecNormalization::PerPatch).unwrap(),
            8.0
        );

        let mut perturbed = t.clone();
        let d = t.dim();
        // token 3 of sample 0 and token 0 of sample 1 are visible
        perturbed.data_mut()[3 * d] = 9.0;
        perturbed.data_mut()[4 * d] = -9.0;
        assert_eq!(masked_mse(&tokens(1.25), &perturbed, &mask, norm).unwrap(), 1.0);
    }

    #[test]
    fn masked_mse_needs_masked_patches() {
        let mask = MaskSpec::empty(2, 4);
        let t = tokens(0.0);
        assert!(matches!(
            masked_mse(&t, &t, &mask, RecNormalization::PerElement),
            Err(Error::DegenerateMask(_))
        ));
    }

    #[test]
    fn joint_loss_examples() {
        assert!((joint_loss(1.0, 2.0, 0.1).unwrap() - 1.9).abs() < 1e-15);
        assert_eq!(joint_loss(0.3, 7.0, 1.0).unwrap(), 0.3);
        assert_eq!(joint_loss(0.3, 7.0, 0.0).unwrap(), 7.0);
        assert!(matches!(joint_loss(1.0, 1.0, 1.5), Err(Error::Parameter(_))));
        assert!(matches!(joint_loss(1.0, 1.0, -0.1), Err(Error::Parameter(_))));
    }
}
