//! Curated concept registry: code lookup, measurement quantization and the
//! expanded model input vocabulary.
//!
//! File format (UTF-8, one row per feature):
//!
//! ```text
//! #domains cond=<n> famhx=<n> med=<n> meas=<n> [proc=<n>]
//! feature_id|domain|label|code_system:code[,code_system:code...]|quant=<spec>
//! ```
//!
//! `<spec>` is `none`, `q<N>` (cohort quantiles, fitted on training data) or a
//! comma-separated list of strictly increasing bin edges. Either quantized form
//! may carry a UCUM unit suffix, e.g. `q10@kg` or `90,100,110@mm[Hg]`. A value
//! lands in bin `i` where `i` is the number of edges `<=` the value.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::record::{CodeSystem, Domain};

/// The demo registry shipped with the crate.
pub const DEMO_REGISTRY: &str = include_str!("../data/demo_registry.txt");

/// Codes with fixed meaning outside the feature list.
pub mod reserved {
    use crate::record::CodeSystem;

    pub const BODY_WEIGHT: &str = "29463-7";
    pub const BODY_HEIGHT: &str = "8302-2";
    pub const BMI: &str = "39156-5";

    pub const TYPE1_DIABETES: (CodeSystem, &str) = (CodeSystem::Snomed, "46635009");
    pub const MALIGNANT_NEOPLASM: (CodeSystem, &str) = (CodeSystem::Snomed, "363346000");
    pub const SICKLE_CELL_DISEASE: (CodeSystem, &str) = (CodeSystem::Snomed, "417357006");
    pub const DEVELOPMENTAL_DELAY: (CodeSystem, &str) = (CodeSystem::Snomed, "248290002");

    /// Conditions that exclude a child from the modeling cohort.
    pub const EXCLUSIONS: [(CodeSystem, &str); 4] = [
        TYPE1_DIABETES,
        MALIGNANT_NEOPLASM,
        SICKLE_CELL_DISEASE,
        DEVELOPMENTAL_DELAY,
    ];
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("{system}:{code} is listed by features {first} and {second}")]
    DuplicateCode {
        system: CodeSystem,
        code: String,
        first: u32,
        second: u32,
    },
    #[error("feature {0}: bin edges must be strictly increasing")]
    NonMonotoneEdges(u32),
    #[error("feature {0}: cohort quantiles have not been fitted")]
    NotFitted(u32),
    #[error("feature {feature_id}: {distinct} distinct training values, need {needed}")]
    InsufficientData {
        feature_id: u32,
        distinct: usize,
        needed: usize,
    },
    #[error("reading registry: {0}")]
    Io(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> RegistryError {
    RegistryError::ParseError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuantMode {
    FixedEdges(Vec<f64>),
    CohortQuantiles(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub mode: QuantMode,
    pub unit: Option<String>,
}

impl QuantizationSpec {
    pub fn fixed(edges: Vec<f64>) -> Self {
        Self {
            mode: QuantMode::FixedEdges(edges),
            unit: None,
        }
    }

    pub fn edges(&self) -> Option<&[f64]> {
        match &self.mode {
            QuantMode::FixedEdges(e) => Some(e),
            QuantMode::CohortQuantiles(_) => None,
        }
    }

    /// Number of bins once fitted.
    pub fn bin_count(&self) -> Option<usize> {
        self.edges().map(|e| e.len() + 1)
    }
}

/// Bin index of `value`: the number of edges less than or equal to it.
pub fn quantize(spec: &QuantizationSpec, value: f64) -> Result<usize, QuantizeError> {
    match &spec.mode {
        QuantMode::FixedEdges(edges) => Ok(edges.partition_point(|e| *e <= value)),
        QuantMode::CohortQuantiles(_) => Err(QuantizeError::NotFitted),
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeError {
    #[error("quantization spec is not fitted")]
    NotFitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub feature_id: u32,
    pub domain: Domain,
    pub label: String,
    pub codes: Vec<(CodeSystem, String)>,
    pub quantization: Option<QuantizationSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRegistry {
    entries: Vec<FeatureSpec>,
    index: HashMap<(CodeSystem, String), u32>,
    counts_by_domain: BTreeMap<Domain, usize>,
}

impl FeatureRegistry {
    /// Build and validate a registry from specs whose ids must be dense `0..n`.
    pub fn from_entries(mut entries: Vec<FeatureSpec>) -> Result<Self, RegistryError> {
        entries.sort_by_key(|e| e.feature_id);
        let mut index = HashMap::new();
        let mut counts_by_domain = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.feature_id as usize != i {
                return Err(parse_err(
                    0,
                    format!("feature ids must be dense 0..{}; found {}", entries.len(), e.feature_id),
                ));
            }
            if e.codes.is_empty() {
                return Err(parse_err(0, format!("feature {} lists no codes", e.feature_id)));
            }
            if e.quantization.is_some() != (e.domain == Domain::Measurement) {
                return Err(parse_err(
                    0,
                    format!("feature {}: quantization is required iff domain is meas", e.feature_id),
                ));
            }
            if let Some(q) = &e.quantization {
                validate_quant(e.feature_id, q)?;
            }
            for (system, code) in &e.codes {
                if let Some(first) = index.insert((*system, code.clone()), e.feature_id) {
                    return Err(RegistryError::DuplicateCode {
                        system: *system,
                        code: code.clone(),
                        first,
                        second: e.feature_id,
                    });
                }
            }
            *counts_by_domain.entry(e.domain).or_insert(0) += 1;
        }
        Ok(Self {
            entries,
            index,
            counts_by_domain,
        })
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (hline, header) = lines
            .by_ref()
            .find(|(_, l)| !l.is_empty())
            .ok_or_else(|| parse_err(1, "missing #domains header"))?;
        let declared = parse_header(hline, header)?;

        let mut entries = Vec::new();
        for (n, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            entries.push(parse_row(n, line)?);
        }
        let registry = Self::from_entries(entries)?;
        for domain in Domain::ALL {
            let have = registry.counts_by_domain.get(&domain).copied().unwrap_or(0);
            let want = declared.get(&domain).copied().unwrap_or(0);
            if have != want {
                return Err(parse_err(
                    hline,
                    format!("header declares {want} {} rows, file has {have}", domain.token()),
                ));
            }
        }
        Ok(registry)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| RegistryError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn demo() -> Self {
        Self::parse(DEMO_REGISTRY).expect("shipped demo registry is valid")
    }

    /// Serialize back to the registry file format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("#domains");
        for domain in [Domain::Condition, Domain::FamilyHistory, Domain::Medication, Domain::Measurement] {
            let _ = write!(out, " {}={}", domain.token(), self.count(domain));
        }
        if self.count(Domain::Procedure) > 0 {
            let _ = write!(out, " proc={}", self.count(Domain::Procedure));
        }
        out.push('\n');
        for e in &self.entries {
            let codes: Vec<String> = e.codes.iter().map(|(s, c)| format!("{s}:{c}")).collect();
            let quant = match &e.quantization {
                None => "none".to_string(),
                Some(q) => {
                    let mut s = match &q.mode {
                        QuantMode::CohortQuantiles(n) => format!("q{n}"),
                        QuantMode::FixedEdges(edges) => edges
                            .iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(","),
                    };
                    if let Some(u) = &q.unit {
                        s.push('@');
                        s.push_str(u);
                    }
                    s
                }
            };
            let _ = writeln!(
                out,
                "{}|{}|{}|{}|quant={}",
                e.feature_id,
                e.domain.token(),
                e.label,
                codes.join(","),
                quant
            );
        }
        out
    }

    /// SHA-256 of the serialized registry, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn entries(&self) -> &[FeatureSpec] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, feature_id: u32) -> Option<&FeatureSpec> {
        self.entries.get(feature_id as usize)
    }

    pub fn count(&self, domain: Domain) -> usize {
        self.counts_by_domain.get(&domain).copied().unwrap_or(0)
    }

    pub fn counts_by_domain(&self) -> &BTreeMap<Domain, usize> {
        &self.counts_by_domain
    }

    /// Feature owning `(code_system, code)`; unregistered codes map to nothing.
    pub fn map_code(&self, code_system: CodeSystem, code: &str) -> Option<u32> {
        self.index.get(&(code_system, code.to_string())).copied()
    }

    pub fn is_fitted(&self) -> bool {
        self.entries.iter().all(|e| {
            e.quantization
                .as_ref()
                .is_none_or(|q| matches!(q.mode, QuantMode::FixedEdges(_)))
        })
    }

    /// Replace every cohort-quantile spec with fixed edges at the empirical
    /// quantiles of `cohort_measurements` (feature id -> training values).
    pub fn fit_cohort_quantiles(
        &self,
        cohort_measurements: &BTreeMap<u32, Vec<f64>>,
    ) -> Result<Self, RegistryError> {
        let mut entries = self.entries.clone();
        for e in &mut entries {
            let Some(q) = e.quantization.as_mut() else { continue };
            let QuantMode::CohortQuantiles(count) = q.mode else { continue };
            let mut values: Vec<f64> = cohort_measurements
                .get(&e.feature_id)
                .map(|v| v.iter().copied().filter(|x| x.is_finite()).collect())
                .unwrap_or_default();
            values.sort_by(f64::total_cmp);
            let mut distinct = values.clone();
            distinct.dedup();
            if distinct.len() < count || distinct.len() < 2 {
                return Err(RegistryError::InsufficientData {
                    feature_id: e.feature_id,
                    distinct: distinct.len(),
                    needed: count.max(2),
                });
            }
            let mut edges: Vec<f64> = (1..count)
                .map(|i| quantile_sorted(&values, i as f64 / count as f64))
                .collect();
            edges.dedup();
            q.mode = QuantMode::FixedEdges(edges);
        }
        Self::from_entries(entries)
    }

    /// Expanded model input vocabulary; requires a fitted registry.
    pub fn input_vocab(&self) -> Result<InputVocab, RegistryError> {
        let mut offsets = Vec::with_capacity(self.entries.len());
        let mut owners = Vec::new();
        for e in &self.entries {
            offsets.push(owners.len() as u32);
            match &e.quantization {
                None => owners.push((e.feature_id, None)),
                Some(q) => {
                    let bins = q.bin_count().ok_or(RegistryError::NotFitted(e.feature_id))?;
                    owners.extend((0..bins as u32).map(|b| (e.feature_id, Some(b))));
                }
            }
        }
        Ok(InputVocab { offsets, owners })
    }
}

/// Linear interpolation between closest ranks on sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mapping between registry features and dense model input ids
/// (one id per binary feature, one per bin for quantized measurements).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputVocab {
    offsets: Vec<u32>,
    owners: Vec<(u32, Option<u32>)>,
}

impl InputVocab {
    pub fn size(&self) -> usize {
        self.owners.len()
    }

    pub fn input_id(&self, feature_id: u32, bin: Option<usize>) -> Option<u32> {
        let base = *self.offsets.get(feature_id as usize)?;
        let id = base + bin.unwrap_or(0) as u32;
        (self.owners.get(id as usize)?.0 == feature_id).then_some(id)
    }

    /// `(feature_id, bin)` that owns an input id.
    pub fn owner(&self, input_id: u32) -> Option<(u32, Option<u32>)> {
        self.owners.get(input_id as usize).copied()
    }

    /// Display key in the `feature_id:bin` form.
    pub fn key(&self, input_id: u32) -> Option<String> {
        self.owner(input_id).map(|(f, b)| match b {
            Some(b) => format!("{f}:{b}"),
            None => f.to_string(),
        })
    }
}

fn validate_quant(feature_id: u32, q: &QuantizationSpec) -> Result<(), RegistryError> {
    match &q.mode {
        QuantMode::FixedEdges(edges) => {
            if edges.is_empty() || edges.iter().any(|x| !x.is_finite()) {
                return Err(RegistryError::NonMonotoneEdges(feature_id));
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(RegistryError::NonMonotoneEdges(feature_id));
            }
        }
        QuantMode::CohortQuantiles(n) if !(2..=10).contains(n) => {
            return Err(parse_err(
                0,
                format!("feature {feature_id}: quantile count {n} outside [2, 10]"),
            ))
        }
        QuantMode::CohortQuantiles(_) => {}
    }
    Ok(())
}

fn parse_header(line: usize, header: &str) -> Result<BTreeMap<Domain, usize>, RegistryError> {
    let rest = header
        .strip_prefix("#domains")
        .ok_or_else(|| parse_err(line, "first line must be the #domains header"))?;
    let mut counts = BTreeMap::new();
    for part in rest.split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("bad header field `{part}`")))?;
        let domain =
            Domain::from_token(key).ok_or_else(|| parse_err(line, format!("unknown domain `{key}`")))?;
        let n = value
            .parse()
            .map_err(|_| parse_err(line, format!("bad count `{value}`")))?;
        counts.insert(domain, n);
    }
    Ok(counts)
}

fn parse_row(line: usize, row: &str) -> Result<FeatureSpec, RegistryError> {
    let fields: Vec<&str> = row.split('|').collect();
    let [id, domain, label, codes, quant] = fields.as_slice() else {
        return Err(parse_err(line, format!("expected 5 fields, found {}", fields.len())));
    };
    let feature_id = id
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad feature id `{id}`")))?;
    let domain = Domain::from_token(domain.trim())
        .ok_or_else(|| parse_err(line, format!("unknown domain `{domain}`")))?;
    let codes = codes
        .split(',')
        .map(|c| {
            let (system, code) = c
                .trim()
                .split_once(':')
                .ok_or_else(|| parse_err(line, format!("code `{c}` lacks a system prefix")))?;
            let system = system.parse().map_err(|e: String| parse_err(line, e))?;
            if code.is_empty() {
                return Err(parse_err(line, "empty code"));
            }
            Ok((system, code.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spec = quant
        .trim()
        .strip_prefix("quant=")
        .ok_or_else(|| parse_err(line, "last field must be quant=..."))?;
    let quantization = if spec == "none" {
        None
    } else {
        let (body, unit) = match spec.split_once('@') {
            Some((b, u)) => (b, Some(u.to_string())),
            None => (spec, None),
        };
        let mode = if let Some(n) = body.strip_prefix('q') {
            QuantMode::CohortQuantiles(
                n.parse()
                    .map_err(|_| parse_err(line, format!("bad quantile count `{n}`")))?,
            )
        } else {
            QuantMode::FixedEdges(
                body.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| parse_err(line, format!("bad edge `{x}`")))
                    })
                    .collect::<Result<_, _>>()?,
            )
        };
        Some(QuantizationSpec { mode, unit })
    };
    if quantization.is_some() != (domain == Domain::Measurement) {
        return Err(parse_err(line, "quantization is required iff domain is meas"));
    }
    Ok(FeatureSpec {
        feature_id,
        domain,
        label: label.trim().to_string(),
        codes,
        quantization,
    })
}

/// Convert between the handful of UCUM units used for anthropometrics.
pub fn convert_unit(value: f64, from: &str, to: &str) -> Option<f64> {
    if from == to {
        return Some(value);
    }
    let to_base = |u: &str| -> Option<(&'static str, f64)> {
        Some(match u {
            "kg" => ("mass", 1.0),
            "g" => ("mass", 0.001),
            "[lb_av]" | "lb" => ("mass", 0.453_592_37),
            "cm" => ("length", 1.0),
            "m" => ("length", 100.0),
            "mm" => ("length", 0.1),
            "[in_i]" | "in" => ("length", 2.54),
            _ => return None,
        })
    };
    let (kf, ff) = to_base(from)?;
    let (kt, ft) = to_base(to)?;
    (kf == kt).then(|| value * ff / ft)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_registry_counts_match_header() {
        let reg = FeatureRegistry::demo();
        let header = DEMO_REGISTRY.lines().next().unwrap();
        assert_eq!(header, "#domains cond=12 famhx=10 med=10 meas=8");
        assert_eq!(reg.count(Domain::Condition), 12);
        assert_eq!(reg.count(Domain::FamilyHistory), 10);
        assert_eq!(reg.count(Domain::Medication), 10);
        assert_eq!(reg.count(Domain::Measurement), 8);
        let data_rows = DEMO_REGISTRY.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count();
        assert_eq!(reg.counts_by_domain().values().sum::<usize>(), data_rows);
        assert_eq!(reg.len(), 40);
    }

    #[test]
    fn duplicate_snomed_code_rejected() {
        let text = "#domains cond=2 famhx=0 med=0 meas=0\n\
                    0|cond|A|SNOMED:111|quant=none\n\
                    1|cond|B|SNOMED:111|quant=none\n";
        assert!(matches!(
            FeatureRegistry::parse(text),
            Err(RegistryError::DuplicateCode { first: 0, second: 1, .. })
        ));
    }

    #[test]
    fn header_only_is_empty_registry() {
        let reg = FeatureRegistry::parse("#domains cond=0 famhx=0 med=0 meas=0\n").unwrap();
        assert!(reg.is_empty());
        assert_eq!(reg.input_vocab().unwrap().size(), 0);
    }

    #[test]
    fn header_count_mismatch_is_parse_error() {
        let text = "#domains cond=2 famhx=0 med=0 meas=0\n0|cond|A|SNOMED:1|quant=none\n";
        assert!(matches!(FeatureRegistry::parse(text), Err(RegistryError::ParseError { .. })));
    }

    #[test]
    fn non_monotone_edges_rejected() {
        let text = "#domains cond=0 famhx=0 med=0 meas=1\n0|meas|W|LOINC:1|quant=10,10\n";
        assert_eq!(FeatureRegistry::parse(text), Err(RegistryError::NonMonotoneEdges(0)));
    }

    #[test]
    fn bad_row_reports_line() {
        let text = "#domains cond=1 famhx=0 med=0 meas=0\n0|cond|A\n";
        assert!(matches!(
            FeatureRegistry::parse(text),
            Err(RegistryError::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn map_code_lookup() {
        let reg = FeatureRegistry::demo();
        assert_eq!(reg.map_code(CodeSystem::Snomed, "195967001"), Some(0));
        assert_eq!(reg.map_code(CodeSystem::RxNorm, "733"), Some(22));
        assert_eq!(reg.map_code(CodeSystem::Loinc, "39156-5"), Some(34));
        assert_eq!(reg.map_code(CodeSystem::Snomed, "ZZZ"), None);
        assert_eq!(
            reg.map_code(CodeSystem::Snomed, "72129000"),
            reg.map_code(CodeSystem::Snomed, "72129000")
        );
    }

    #[test]
    fn quantize_boundaries() {
        let spec = QuantizationSpec::fixed(vec![10.0, 20.0]);
        assert_eq!(quantize(&spec, 5.0), Ok(0));
        assert_eq!(quantize(&spec, 10.0), Ok(1));
        assert_eq!(quantize(&spec, 99.0), Ok(2));
        let unfitted = QuantizationSpec {
            mode: QuantMode::CohortQuantiles(4),
            unit: None,
        };
        assert_eq!(quantize(&unfitted, 1.0), Err(QuantizeError::NotFitted));
    }

    fn one_meas(q: &str) -> FeatureRegistry {
        FeatureRegistry::parse(&format!(
            "#domains cond=0 famhx=0 med=0 meas=1\n0|meas|X|LOINC:1|quant={q}\n"
        ))
        .unwrap()
    }

    #[test]
    fn quartile_edges_on_one_to_hundred() {
        let reg = one_meas("q4");
        let data = BTreeMap::from([(0, (1..=100).map(f64::from).collect())]);
        let fitted = reg.fit_cohort_quantiles(&data).unwrap();
        let edges = fitted.get(0).unwrap().quantization.as_ref().unwrap().edges().unwrap().to_vec();
        assert_eq!(edges, vec![25.75, 50.5, 75.25]);
        assert!(fitted.is_fitted());
    }

    #[test]
    fn median_edge_on_two_values() {
        let reg = one_meas("q2");
        let data = BTreeMap::from([(0, vec![0.0, 10.0])]);
        let fitted = reg.fit_cohort_quantiles(&data).unwrap();
        assert_eq!(fitted.get(0).unwrap().quantization.as_ref().unwrap().edges(), Some(&[5.0][..]));
    }

    #[test]
    fn identical_values_insufficient() {
        let reg = one_meas("q4");
        let data = BTreeMap::from([(0, vec![3.0; 50])]);
        assert!(matches!(
            reg.fit_cohort_quantiles(&data),
            Err(RegistryError::InsufficientData { feature_id: 0, distinct: 1, .. })
        ));
    }

    #[test]
    fn fitted_registry_round_trips_through_text() {
        let reg = one_meas("q4@kg");
        let data = BTreeMap::from([(0, (1..=37).map(|x| x as f64 * 0.37).collect())]);
        let fitted = reg.fit_cohort_quantiles(&data).unwrap();
        let back = FeatureRegistry::parse(&fitted.to_text()).unwrap();
        assert_eq!(back, fitted);
        assert_eq!(back.fingerprint(), fitted.fingerprint());
        assert_ne!(reg.fingerprint(), fitted.fingerprint());
    }

    #[test]
    fn input_vocab_expands_measurement_bins() {
        let text = "#domains cond=1 famhx=0 med=0 meas=1\n\
                    0|cond|A|SNOMED:1|quant=none\n\
                    1|meas|W|LOINC:2|quant=10,20\n";
        let vocab = FeatureRegistry::parse(text).unwrap().input_vocab().unwrap();
        assert_eq!(vocab.size(), 4);
        assert_eq!(vocab.input_id(0, None), Some(0));
        assert_eq!(vocab.input_id(1, Some(0)), Some(1));
        assert_eq!(vocab.input_id(1, Some(2)), Some(3));
        assert_eq!(vocab.input_id(1, Some(3)), None);
        assert_eq!(vocab.key(3).as_deref(), Some("1:2"));
        assert!(matches!(
            FeatureRegistry::demo().input_vocab(),
            Err(RegistryError::NotFitted(32))
        ));
    }

    #[test]
    fn unit_conversion() {
        assert_eq!(convert_unit(1500.0, "g", "kg"), Some(1.5));
        assert_eq!(convert_unit(1.0, "m", "cm"), Some(100.0));
        assert_eq!(convert_unit(1.0, "kg", "cm"), None);
        assert_eq!(convert_unit(7.0, "mm[Hg]", "mm[Hg]"), Some(7.0));
    }
}
