use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{auroc, bootstrap_ci, mae, net_benefit};
use super::{LabeledExample, HORIZONS};
use crate::model::{ModelError, ModelInput, ModelWeights};

pub const NET_BENEFIT_THRESHOLDS: [f64; 3] = [0.2, 0.4, 0.6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub bootstrap_reps: usize,
    pub seed: u64,
    /// Report a slice for the latest index year.
    pub temporal_holdout: bool,
    /// Report a slice for this site.
    pub geographic_holdout: Option<String>,
    pub subgroups: bool,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            bootstrap_reps: 100,
            seed: 0,
            temporal_holdout: true,
            geographic_holdout: None,
            subgroups: true,
            threads: 1,
        }
    }
}

/// Model outputs for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob_obese: [f64; HORIZONS],
    pub bmi: [f64; HORIZONS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetBenefitPoint {
    pub threshold: f64,
    pub value: f64,
}

/// Metrics for one (window, horizon) cell; `window: None` pools all windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub window: Option<u32>,
    pub horizon: usize,
    pub n: usize,
    pub n_obese: usize,
    pub prevalence: f64,
    pub auroc: Option<f64>,
    pub auroc_ci: Option<[f64; 2]>,
    pub mae: Option<f64>,
    pub conformal_half_width: Option<f64>,
    /// Share of true BMIs inside the conformal interval.
    pub interval_coverage: Option<f64>,
    pub net_benefit: Vec<NetBenefitPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupMetric {
    pub key: String,
    pub value: String,
    pub horizon: usize,
    pub n: usize,
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub name: String,
    pub filter: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n_patients: usize,
    pub n_examples: usize,
    pub seed: u64,
    pub bootstrap_reps: usize,
    pub conformal_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    /// Per (window, horizon) cells followed by pooled per-horizon cells.
    pub cells: Vec<Cell>,
    pub subgroups: Vec<SubgroupMetric>,
    pub slices: Vec<Slice>,
}

impl EvalReport {
    /// Pooled-over-windows cell for `horizon` (1-based).
    pub fn pooled(&self, horizon: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.window.is_none() && c.horizon == horizon)
    }

    pub fn cell(&self, window: u32, horizon: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.window == Some(window) && c.horizon == horizon)
    }

    /// Flat `|`-delimited table, one row per cell.
    pub fn metrics_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.4}"));
        let mut out = String::from(
            "window|horizon|n|prevalence|auroc|auroc_lo|auroc_hi|mae|conformal_half_width|nb_20|nb_40|nb_60\n",
        );
        for c in &self.cells {
            let window = c.window.map_or_else(|| "all".to_string(), |w| format!("0-{w}"));
            let nb: Vec<String> = NET_BENEFIT_THRESHOLDS
                .iter()
                .map(|&pt| fmt(c.net_benefit.iter().find(|p| p.threshold == pt).map(|p| p.value)))
                .collect();
            let _ = writeln!(
                out,
                "{window}|{}|{}|{:.4}|{}|{}|{}|{}|{}|{}",
                c.horizon,
                c.n,
                c.prevalence,
                fmt(c.auroc),
                fmt(c.auroc_ci.map(|ci| ci[0])),
                fmt(c.auroc_ci.map(|ci| ci[1])),
                fmt(c.mae),
                fmt(c.conformal_half_width),
                nb.join("|"),
            );
        }
        out
    }
}

/// Run the model over `examples` in inference mode.
pub fn predict_all(weights: &ModelWeights, examples: &[LabeledExample], threads: usize) -> Result<Vec<Prediction>, ModelError> {
    let run = |chunk: &[LabeledExample]| -> Result<Vec<Prediction>, ModelError> {
        chunk
            .iter()
            .map(|ex| {
                let out = weights.infer(&ModelInput::new(&ex.sequence, &ex.demo))?;
                Ok(Prediction {
                    prob_obese: std::array::from_fn(|h| out.horizons[h].prob_obese),
                    bmi: std::array::from_fn(|h| out.horizons[h].bmi_pred),
                })
            })
            .collect()
    };
    let threads = threads.max(1).min(examples.len().max(1));
    if threads == 1 {
        return run(examples);
    }
    let chunk = examples.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = examples.chunks(chunk).map(|c| s.spawn(move || run(c))).collect();
        let mut out = Vec::with_capacity(examples.len());
        for h in handles {
            out.extend(h.join().expect("prediction worker panicked")?);
        }
        Ok(out)
    })
}

fn cell(
    window: Option<u32>,
    horizon: usize,
    rows: &[(&LabeledExample, &Prediction)],
    half_width: Option<f64>,
    opts: &EvalOptions,
) -> Cell {
    let h = horizon - 1;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut pred_bmi = Vec::new();
    let mut true_bmi = Vec::new();
    for (ex, p) in rows {
        if let Some(l) = ex.labels[h] {
            scores.push(p.prob_obese[h]);
            labels.push(l.obese);
            pred_bmi.push(p.bmi[h]);
            true_bmi.push(l.bmi);
        }
    }
    let n = scores.len();
    let n_obese = labels.iter().filter(|&&l| l).count();
    let point = auroc(&scores, &labels).ok();
    let seed = opts.seed ^ ((horizon as u64) << 32) ^ u64::from(window.unwrap_or(0));
    let ci = point.and_then(|_| {
        bootstrap_ci(auroc, &scores, &labels, opts.bootstrap_reps, seed)
            .ok()
            .map(|(lo, hi)| [lo, hi])
    });
    let coverage = half_width.filter(|_| n > 0).map(|w| {
        let inside = pred_bmi.iter().zip(&true_bmi).filter(|(p, t)| (*p - *t).abs() <= w).count();
        inside as f64 / n as f64
    });
    Cell {
        window,
        horizon,
        n,
        n_obese,
        prevalence: if n > 0 { n_obese as f64 / n as f64 } else { 0.0 },
        auroc: point,
        auroc_ci: ci,
        mae: mae(&pred_bmi, &true_bmi).ok(),
        conformal_half_width: half_width,
        interval_coverage: coverage,
        net_benefit: NET_BENEFIT_THRESHOLDS
            .iter()
            .filter_map(|&pt| {
                Some(NetBenefitPoint {
                    threshold: pt,
                    value: net_benefit(&scores, &labels, pt).ok()?,
                })
            })
            .collect(),
    }
}

fn pooled_cells(rows: &[(&LabeledExample, &Prediction)], half_widths: &[Option<f64>], opts: &EvalOptions) -> Vec<Cell> {
    (1..=HORIZONS)
        .map(|h| cell(None, h, rows, half_widths.get(h - 1).copied().flatten(), opts))
        .collect()
}

/// Assemble the report from examples and their predictions.
pub fn build_report(
    examples: &[LabeledExample],
    predictions: &[Prediction],
    half_widths: &[Option<f64>],
    conformal_alpha: Option<f64>,
    opts: &EvalOptions,
) -> EvalReport {
    let rows: Vec<(&LabeledExample, &Prediction)> = examples.iter().zip(predictions).collect();
    let mut windows: Vec<u32> = examples.iter().map(LabeledExample::window).collect();
    windows.sort_unstable();
    windows.dedup();

    let mut cells = Vec::new();
    for &w in &windows {
        let subset: Vec<_> = rows.iter().copied().filter(|(e, _)| e.window() == w).collect();
        for h in 1..=HORIZONS {
            cells.push(cell(Some(w), h, &subset, half_widths.get(h - 1).copied().flatten(), opts));
        }
    }
    cells.extend(pooled_cells(&rows, half_widths, opts));

    let mut subgroups = Vec::new();
    if opts.subgroups {
        let mut groups: BTreeMap<(&'static str, String), Vec<(&LabeledExample, &Prediction)>> = BTreeMap::new();
        for r in &rows {
            for key in r.0.strata.keys() {
                groups.entry(key).or_default().push(*r);
            }
        }
        for ((key, value), members) in groups {
            for h in 1..=HORIZONS {
                let (scores, labels): (Vec<f64>, Vec<bool>) = members
                    .iter()
                    .filter_map(|(e, p)| e.labels[h - 1].map(|l| (p.prob_obese[h - 1], l.obese)))
                    .unzip();
                subgroups.push(SubgroupMetric {
                    key: key.to_string(),
                    value: value.clone(),
                    horizon: h,
                    n: scores.len(),
                    auroc: auroc(&scores, &labels).ok(),
                });
            }
        }
    }

    let mut slices = Vec::new();
    if opts.temporal_holdout {
        if let Some(latest) = examples.iter().map(|e| e.strata.index_year).max() {
            let subset: Vec<_> = rows.iter().copied().filter(|(e, _)| e.strata.index_year == latest).collect();
            slices.push(Slice {
                name: "temporal".into(),
                filter: format!("index_year={latest}"),
                cells: pooled_cells(&subset, half_widths, opts),
            });
        }
    }
    if let Some(site) = &opts.geographic_holdout {
        let subset: Vec<_> = rows.iter().copied().filter(|(e, _)| &e.strata.site == site).collect();
        slices.push(Slice {
            name: "geographic".into(),
            filter: format!("site={site}"),
            cells: pooled_cells(&subset, half_widths, opts),
        });
    }

    let mut patients: Vec<&str> = examples.iter().map(|e| e.patient_id.as_str()).collect();
    patients.sort_unstable();
    patients.dedup();
    EvalReport {
        meta: ReportMeta {
            n_patients: patients.len(),
            n_examples: examples.len(),
            seed: opts.seed,
            bootstrap_reps: opts.bootstrap_reps,
            conformal_alpha,
        },
        cells,
        subgroups,
        slices,
    }
}

/// Evaluate trained weights on labelled examples.
pub fn evaluate(weights: &ModelWeights, examples: &[LabeledExample], opts: &EvalOptions) -> Result<EvalReport, ModelError> {
    let predictions = predict_all(weights, examples, opts.threads)?;
    let (half_widths, alpha) = match &weights.calibration {
        Some(c) => (c.half_widths.clone(), Some(c.alpha)),
        None => (vec![None; HORIZONS], None),
    };
    Ok(build_report(examples, &predictions, &half_widths, alpha, opts))
}
