use super::{
    first_max, first_min, query_candidates, AttackError, AttackPrediction, Case, TargetRecord,
};
use crate::dataset::{Kind, Role, Schema, Value};
use crate::oracle::{Oracle, PredictionResponse};

/// The three-case rule over one response per candidate: the unique candidate
/// reproducing `label`, else the most confident of several, else the least
/// confident overall.
pub fn csmia_decide(label: usize, responses: &[PredictionResponse]) -> (usize, Case) {
    let correct: Vec<usize> = (0..responses.len())
        .filter(|&i| responses[i].label == label)
        .collect();
    let case = Case::from_correct(correct.len());
    let predicted = match case {
        Case::One => correct[0],
        Case::Two => first_max(correct.iter().map(|&i| (i, responses[i].confidence))).unwrap(),
        Case::Three => first_min(responses.iter().map(|r| r.confidence).enumerate()).unwrap(),
    };
    (predicted, case)
}

pub fn csmia(record: &TargetRecord, oracle: &Oracle) -> Result<AttackPrediction, AttackError> {
    let responses = query_candidates(record, oracle)?;
    let (predicted, case) = csmia_decide(record.label, &responses);
    Ok(AttackPrediction {
        record_id: record.id,
        predicted,
        case: Some(case),
        queries: responses.len() as u64,
        aux: responses.iter().map(|r| r.confidence).collect(),
    })
}

/// Non-sensitive attributes the adversary does not know, with the values to
/// enumerate for each: the full domain for categoricals, the schema's probe
/// values for numerics.
#[derive(Clone, Debug, PartialEq)]
pub struct UnknownSet {
    pub columns: Vec<usize>,
    pub domains: Vec<Vec<Value>>,
}

impl UnknownSet {
    pub fn new(schema: &Schema, names: &[&str]) -> Result<Self, AttackError> {
        if names.len() > 2 {
            return Err(AttackError::TooManyUnknown(names.len()));
        }
        let mut columns = Vec::with_capacity(names.len());
        let mut domains = Vec::with_capacity(names.len());
        for &name in names {
            let c = schema
                .index_of(name)
                .filter(|&c| schema.attributes[c].role == Role::Feature && !columns.contains(&c))
                .ok_or_else(|| AttackError::UnknownAttribute(name.to_string()))?;
            let attr = &schema.attributes[c];
            let domain: Vec<Value> = match attr.kind {
                Kind::Categorical => (0..attr.cardinality() as u32).map(Value::Cat).collect(),
                Kind::Numeric => match &attr.probes {
                    Some(p) if !p.is_empty() => p.iter().map(|&x| Value::Num(x)).collect(),
                    _ => return Err(AttackError::NoProbeValues(name.to_string())),
                },
            };
            columns.push(c);
            domains.push(domain);
        }
        Ok(UnknownSet { columns, domains })
    }

    /// Queries per candidate: `u`, `u * v`, or 1 when nothing is unknown.
    pub fn combinations(&self) -> usize {
        self.domains.iter().map(Vec::len).product()
    }

    /// Calls `f` with `values` filled in for every combination, in row-major order.
    fn for_each<E>(
        &self,
        values: &mut [Value],
        f: &mut impl FnMut(&[Value]) -> Result<(), E>,
    ) -> Result<(), E> {
        let n = self.combinations();
        for mut idx in 0..n {
            for (j, &c) in self.columns.iter().enumerate().rev() {
                let d = &self.domains[j];
                values[c] = d[idx % d.len()];
                idx /= d.len();
            }
            f(values)?;
        }
        Ok(())
    }
}

/// Per-candidate tallies from the partial-knowledge sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tally {
    pub correct: usize,
    pub correct_confidence: f64,
    pub total_confidence: f64,
}

/// Picks a candidate from per-candidate tallies. With `M = max C_i`: no
/// correct predictions at all is case 3 (least total confidence); a unique
/// maximizer is case 1; otherwise case 2 picks, among the maximizers, the
/// largest confidence sum over correct predictions.
pub fn partial_decide(tallies: &[Tally]) -> (usize, Case) {
    let max = tallies.iter().map(|t| t.correct).max().unwrap_or(0);
    if max == 0 {
        let i = first_min(tallies.iter().map(|t| t.total_confidence).enumerate()).unwrap();
        return (i, Case::Three);
    }
    let tied: Vec<usize> = (0..tallies.len())
        .filter(|&i| tallies[i].correct == max)
        .collect();
    if tied.len() == 1 {
        (tied[0], Case::One)
    } else {
        let i = first_max(tied.iter().map(|&i| (i, tallies[i].correct_confidence))).unwrap();
        (i, Case::Two)
    }
}

pub fn csmia_partial(
    record: &TargetRecord,
    oracle: &Oracle,
    unknown: &UnknownSet,
) -> Result<AttackPrediction, AttackError> {
    let schema = oracle.schema();
    let s = schema.sensitive_index();
    let mut values = record.values.clone();
    let mut tallies = vec![Tally::default(); schema.k()];
    let mut queries = 0u64;
    for (i, tally) in tallies.iter_mut().enumerate() {
        values[s] = Value::Cat(i as u32);
        unknown.for_each(&mut values, &mut |q| {
            let r = oracle.query(q).map_err(|source| AttackError::Oracle {
                record_id: record.id,
                queries,
                source,
            })?;
            queries += 1;
            tally.total_confidence += r.confidence;
            if r.label == record.label {
                tally.correct += 1;
                tally.correct_confidence += r.confidence;
            }
            Ok(())
        })?;
    }
    let (predicted, case) = partial_decide(&tallies);
    Ok(AttackPrediction {
        record_id: record.id,
        predicted,
        case: Some(case),
        queries,
        aux: tallies.iter().map(|t| t.correct as f64).collect(),
    })
}
