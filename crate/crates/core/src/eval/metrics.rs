use crate::error::{Error, Result};

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
///
/// Computed from mid-ranks in `O(n log n)`. The numerator is kept in
/// integer half-units so the result is the exact ratio
/// `(2 * wins + ties) / (2 * n_pos * n_neg)`.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as u128;
    let n_neg = positive.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one example of each class".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of the positives
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share the mid-rank (i + 1 + j) / 2
        let pos_in_group = order[i..j].iter().filter(|&&k| positive[k]).count() as u128;
        twice_rank_sum += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Fraction of positions where `predicted` equals `actual`.
pub fn accuracy<T: PartialEq>(predicted: &[T], actual: &[T]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::InvalidInput(format!(
            "accuracy needs equal non-empty inputs, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / predicted.len() as f64)
}
