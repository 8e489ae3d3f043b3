use crate::error::{Error, Result};
use crate::model::SentenceScores;

fn check_lengths(n: usize, labels: &[u8]) -> Result<()> {
    if n != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} scores for {} labels",
            labels.len()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy of probabilities against 0/1 labels.
pub fn bce_loss(scores: &SentenceScores, labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels)?;
    let n = labels.len().max(1) as f64;
    Ok(scores
        .as_slice()
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y == 1 { -p.ln() } else { -(-p).ln_1p() })
        .sum::<f64>()
        / n)
}

/// Mean binary cross-entropy from pre-sigmoid logits,
/// `max(z, 0) - z y + ln(1 + e^-|z|)` per sentence.
pub fn bce_with_logits(logits: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(logits.len(), labels)?;
    let n = labels.len().max(1) as f64;
    Ok(logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) - z * f64::from(y) + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_costs_ln2() {
        let l = bce_loss(&SentenceScores(vec![0.5]), &[1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_with_logits(&[0.0], &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn exact_prediction_costs_nothing() {
        assert_eq!(bce_loss(&SentenceScores(vec![1.0, 0.0]), &[1, 0]).unwrap(), 0.0);
        assert!(bce_with_logits(&[60.0, -60.0], &[1, 0]).unwrap() < 1e-25);
    }

    #[test]
    fn five_sentence_case_matches_formula() {
        let logits = [0.3, -1.2, 2.5, -0.1, 0.0];
        let labels = [1u8, 0, 1, 1, 0];
        let probs: Vec<f64> = logits.iter().map(|z: &f64| 1.0 / (1.0 + (-z).exp())).collect();
        let mut want = 0.0;
        for (p, &y) in probs.iter().zip(&labels) {
            let y = f64::from(y);
            want -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        want /= 5.0;
        assert!((bce_with_logits(&logits, &labels).unwrap() - want).abs() < 1e-14);
        assert!((bce_loss(&SentenceScores(probs), &labels).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(bce_loss(&SentenceScores(vec![0.5]), &[1, 0]).is_err());
    }
}
