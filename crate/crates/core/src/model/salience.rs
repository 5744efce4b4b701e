use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Params, Scalar};
use crate::record::Domain;
use crate::registry::{FeatureRegistry, InputVocab};

/// Attention-weighted salience of each active input id:
/// `Σ_t α_t [id ∈ bin t] ‖E[id]‖`, normalized to sum to 1.
pub fn input_salience<T: Scalar>(params: &Params<T>, bins: &[Vec<u32>], attention: &[f64]) -> Vec<(u32, f64)> {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for (bin, &a) in bins.iter().zip(attention) {
        for &id in bin {
            *acc.entry(id).or_default() += a;
        }
    }
    let mut out: Vec<(u32, f64)> = acc
        .into_iter()
        .map(|(id, mass)| {
            let norm = params
                .embedding
                .row(id as usize)
                .iter()
                .map(|x| x.to_f64().unwrap().powi(2))
                .sum::<f64>()
                .sqrt();
            (id, mass * norm)
        })
        .collect();
    let total: f64 = out.iter().map(|(_, s)| s).sum();
    if total > 0.0 {
        for (_, s) in &mut out {
            *s /= total;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFactor {
    pub feature_id: u32,
    pub label: String,
    pub domain: Domain,
    pub score: f64,
}

/// Top `k` registry features by summed input salience; scores of the returned
/// items are renormalized to sum to 1. Ties break by feature id.
pub fn rank_risk_factors(
    salience: &[(u32, f64)],
    vocab: &InputVocab,
    registry: &FeatureRegistry,
    k: usize,
) -> Vec<RiskFactor> {
    let mut per_feature: BTreeMap<u32, f64> = BTreeMap::new();
    for &(id, s) in salience {
        if let Some((feature, _)) = vocab.owner(id) {
            *per_feature.entry(feature).or_default() += s;
        }
    }
    let mut ranked: Vec<(u32, f64)> = per_feature.into_iter().filter(|(_, s)| *s > 0.0).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    let total: f64 = ranked.iter().map(|(_, s)| s).sum();
    ranked
        .into_iter()
        .filter_map(|(feature_id, s)| {
            let spec = registry.get(feature_id)?;
            Some(RiskFactor {
                feature_id,
                label: spec.label.clone(),
                domain: spec.domain,
                score: s / total,
            })
        })
        .collect()
}
