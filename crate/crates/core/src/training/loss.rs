//! Response-selection and supervised contrastive losses with their gradients.

use crate::encoder::dot;
use crate::error::{Error, Result};

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_logits(logits: &[f64], positive: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 candidates, got {}",
            logits.len()
        )));
    }
    if positive >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "positive index {positive} out of range for {} candidates",
            logits.len()
        )));
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "logits".into(),
            index: i,
        });
    }
    Ok(())
}

/// Cross-entropy of the positive candidate: `-log softmax(logits)[positive]`.
pub fn loss_rs(logits: &[f64], positive: usize) -> Result<f64> {
    check_logits(logits, positive)?;
    Ok(log_sum_exp(logits.iter().copied()) - logits[positive])
}

/// [`loss_rs`] and its gradient with respect to the logits.
pub fn loss_rs_grad(logits: &[f64], positive: usize) -> Result<(f64, Vec<f64>)> {
    check_logits(logits, positive)?;
    let lse = log_sum_exp(logits.iter().copied());
    let mut grad: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    grad[positive] -= 1.0;
    Ok((lse - logits[positive], grad))
}

fn check_cl(z: &[Vec<f64>], positive_rows: &[usize], tau: f64) -> Result<()> {
    if positive_rows.len() < 2 {
        return Err(Error::InvalidInput(
            "contrastive loss needs at least 2 positive pairs per batch".into(),
        ));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("temperature must be positive, got {tau}")));
    }
    if let Some(&p) = positive_rows.iter().find(|&&p| p >= z.len()) {
        return Err(Error::InvalidInput(format!("positive row {p} out of range")));
    }
    let mut sorted = positive_rows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != positive_rows.len() {
        return Err(Error::InvalidInput("duplicate positive rows".into()));
    }
    Ok(())
}

/// Supervised contrastive loss over a batch of normalized features, summed
/// over anchors.
///
/// Every positive row `p_i` is an anchor. Its positives `P(i)` are the other
/// positive rows; its contrast set `B(i)` is every row except `p_i`:
///
/// ```text
/// L = sum_i  -1/|P(i)| * sum_{p in P(i)} log( exp(z_pi·z_p/tau) / sum_{a in B(i)} exp(z_pi·z_a/tau) )
/// ```
pub fn loss_cl(z: &[Vec<f64>], positive_rows: &[usize], tau: f64) -> Result<f64> {
    check_cl(z, positive_rows, tau)?;
    let n_pos = (positive_rows.len() - 1) as f64;
    let mut total = 0.0;
    for &anchor in positive_rows {
        let sims = (0..z.len())
            .filter(|&a| a != anchor)
            .map(|a| dot(&z[anchor], &z[a]) / tau);
        let lse = log_sum_exp(sims);
        let pos_mean: f64 = positive_rows
            .iter()
            .filter(|&&p| p != anchor)
            .map(|&p| dot(&z[anchor], &z[p]) / tau)
            .sum::<f64>()
            / n_pos;
        total += lse - pos_mean;
    }
    Ok(total)
}

/// [`loss_cl`] and its gradient with respect to every row of `z`.
pub fn loss_cl_grad(z: &[Vec<f64>], positive_rows: &[usize], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    check_cl(z, positive_rows, tau)?;
    let n = z.len();
    let d = z.first().map_or(0, Vec::len);
    let n_pos = (positive_rows.len() - 1) as f64;
    let mut is_pos = vec![false; n];
    for &p in positive_rows {
        is_pos[p] = true;
    }
    let mut grad = vec![vec![0.0; d]; n];
    let mut total = 0.0;
    for &anchor in positive_rows {
        let sims: Vec<f64> = (0..n)
            .map(|a| if a == anchor { f64::NEG_INFINITY } else { dot(&z[anchor], &z[a]) / tau })
            .collect();
        let lse = log_sum_exp(sims.iter().copied());
        let mut pos_sum = 0.0;
        for a in 0..n {
            if a == anchor {
                continue;
            }
            let mut w = (sims[a] - lse).exp();
            if is_pos[a] {
                pos_sum += sims[a];
                w -= 1.0 / n_pos;
            }
            let w = w / tau;
            for k in 0..d {
                grad[anchor][k] += w * z[a][k];
                grad[a][k] += w * z[anchor][k];
            }
        }
        total += lse - pos_sum / n_pos;
    }
    Ok((total, grad))
}
