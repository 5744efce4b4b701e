use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::LabeledExample;

pub const MIN_COHORT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("cohort of {0} patients is too small to split (need {MIN_COHORT})")]
    TooSmall(usize),
    #[error("undersampling needs both classes at the first horizon")]
    SingleClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Val,
    Test,
}

/// Patient-level 80/20 train/test split, then 5% of train peeled off as
/// validation. Deterministic in `seed` and independent of input order.
pub fn split_patients(patient_ids: &[String], seed: u64) -> Result<Split, SplitError> {
    let mut ids: Vec<String> = patient_ids.to_vec();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    if n < MIN_COHORT {
        return Err(SplitError::TooSmall(n));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * 0.2).round() as usize;
    let n_val = ((n - n_test) as f64 * 0.05).round() as usize;
    let test = ids.split_off(n - n_test);
    let val = ids.split_off(ids.len() - n_val);
    Ok(Split { train: ids, val, test })
}

/// Randomly drop majority-class examples (by the first-horizon label) until
/// majority/minority is at most `target_ratio`. Examples without a
/// first-horizon label are kept.
pub fn undersample(
    examples: Vec<LabeledExample>,
    target_ratio: f64,
    seed: u64,
) -> Result<Vec<LabeledExample>, SplitError> {
    let class = |e: &LabeledExample| e.labels[0].map(|l| l.obese);
    let pos = examples.iter().filter(|e| class(e) == Some(true)).count();
    let neg = examples.iter().filter(|e| class(e) == Some(false)).count();
    if pos == 0 || neg == 0 {
        return Err(SplitError::SingleClass);
    }
    let (majority, minority_n) = if neg >= pos { (false, pos) } else { (true, neg) };
    let keep_n = ((minority_n as f64 * target_ratio).floor() as usize).max(minority_n);
    let mut majority_idx: Vec<usize> = (0..examples.len())
        .filter(|&i| class(&examples[i]) == Some(majority))
        .collect();
    if majority_idx.len() <= keep_n {
        return Ok(examples);
    }
    majority_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut drop = vec![false; examples.len()];
    for &i in &majority_idx[keep_n..] {
        drop[i] = true;
    }
    Ok(examples
        .into_iter()
        .zip(drop)
        .filter_map(|(e, d)| (!d).then_some(e))
        .collect())
}
