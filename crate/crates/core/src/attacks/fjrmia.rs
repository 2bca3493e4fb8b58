use super::{query_candidates, AttackError, AttackPrediction, TargetRecord};
use crate::models::ConfusionMatrix;
use crate::oracle::Oracle;

/// Looks up `C[y, y'_i]` for each candidate's response and applies [`fjrmia_select`].
pub fn fjrmia_decide(
    label: usize,
    predicted: &[usize],
    priors: &[f64],
    confusion: &ConfusionMatrix,
) -> (usize, Vec<f64>) {
    let rates: Vec<f64> = predicted
        .iter()
        .map(|&y_hat| confusion.rate(label, y_hat))
        .collect();
    fjrmia_select(&rates, priors)
}

/// Scores `rate_i * p_1,i` and picks the best candidate. Ties go to the higher
/// prior, then to domain order.
pub fn fjrmia_select(rates: &[f64], priors: &[f64]) -> (usize, Vec<f64>) {
    let scores: Vec<f64> = rates.iter().zip(priors).map(|(r, p)| r * p).collect();
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && priors[i] > priors[best]) {
            best = i;
        }
    }
    (best, scores)
}

pub fn fjrmia(
    record: &TargetRecord,
    oracle: &Oracle,
    priors: &[f64],
    confusion: &ConfusionMatrix,
) -> Result<AttackPrediction, AttackError> {
    let m = oracle.labels().len();
    if confusion.m() != m {
        return Err(AttackError::InvalidConfusion(format!(
            "{}x{} matrix for {m} classes",
            confusion.m(),
            confusion.m()
        )));
    }
    let responses = query_candidates(record, oracle)?;
    let predicted: Vec<usize> = responses.iter().map(|r| r.label).collect();
    let (best, scores) = fjrmia_decide(record.label, &predicted, priors, confusion);
    Ok(AttackPrediction {
        record_id: record.id,
        predicted: best,
        case: None,
        queries: responses.len() as u64,
        aux: scores,
    })
}
