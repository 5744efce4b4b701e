use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{dot, leaky_relu, matvec_acc, sigmoid, softmax};
use super::{HorizonLabel, ModelConfig, ModelError, ModelInput, Params, Scalar};

/// Probabilities below this are clamped before taking logs.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    /// Post-activation gates per step, `T x 4H` (i, f, g, o).
    pub gates: Vec<T>,
    /// Cell and hidden states, `(T + 1) x H`; row 0 is the zero initial state.
    pub c: Vec<T>,
    pub h: Vec<T>,
    pub tanh_c: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    pub a1: Vec<T>,
    pub r1: Vec<T>,
    pub a2: Vec<T>,
    /// Second hidden layer after activation and dropout.
    pub r2d: Vec<T>,
    pub mask: Option<Vec<T>>,
    pub probs: [T; 2],
    pub bmi: T,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub steps: usize,
    /// Summed embeddings per bin, `T x D`.
    pub x0: Vec<T>,
    pub layers: Vec<LayerCache<T>>,
    /// `tanh(W_a h_t)` per step, `T x A`.
    pub attn_s: Vec<T>,
    pub alpha: Vec<T>,
    pub z: Vec<T>,
    pub heads: Vec<HeadCache<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonOutput {
    /// `[p(not obese), p(obese)]`
    pub probs: [f64; 2],
    pub prob_obese: f64,
    pub bmi_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub horizons: Vec<HorizonOutput>,
    /// Attention weight per bin.
    pub attention: Vec<f64>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> ModelOutput {
        let f = |x: T| x.to_f64().unwrap();
        ModelOutput {
            horizons: self
                .heads
                .iter()
                .map(|h| HorizonOutput {
                    probs: [f(h.probs[0]), f(h.probs[1])],
                    prob_obese: f(h.probs[1]),
                    bmi_pred: f(h.bmi),
                })
                .collect(),
            attention: self.alpha.iter().map(|&a| f(a)).collect(),
        }
    }

    /// Context vector (attention-pooled top hidden state).
    pub fn context(&self, hidden: usize) -> &[T] {
        &self.z[..hidden]
    }
}

pub fn check_input(cfg: &ModelConfig, input: &ModelInput<'_>) -> Result<(), ModelError> {
    for (field, (&idx, &card)) in input.demographics.iter().zip(&cfg.demographics.as_array()).enumerate() {
        if idx >= card {
            return Err(ModelError::ShapeMismatch(format!(
                "demographic field {field} index {idx} exceeds cardinality {card}"
            )));
        }
    }
    for bin in input.bins {
        if let Some(&id) = bin.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(ModelError::UnknownId { id, vocab: cfg.vocab_size });
        }
    }
    Ok(())
}

/// Inverted-dropout masks for each head's second hidden layer.
pub fn draw_dropout_masks<T: Scalar, R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Vec<Vec<T>> {
    let keep = 1.0 - cfg.dropout;
    let scale = T::from_f64(1.0 / keep).unwrap();
    (0..cfg.horizons)
        .map(|_| {
            (0..cfg.head_hidden.1)
                .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                .collect()
        })
        .collect()
}

/// Full forward pass; `masks` enables dropout (training mode).
pub fn forward<T: Scalar>(
    cfg: &ModelConfig,
    params: &Params<T>,
    input: &ModelInput<'_>,
    masks: Option<&[Vec<T>]>,
) -> Result<ForwardCache<T>, ModelError> {
    check_input(cfg, input)?;
    let steps = input.bins.len();
    let (d, hd, ad) = (cfg.embed_dim, cfg.hidden_dim, cfg.attention_dim);

    let mut x0 = vec![T::zero(); steps * d];
    for (t, bin) in input.bins.iter().enumerate() {
        let row = &mut x0[t * d..(t + 1) * d];
        for &id in bin {
            for (x, e) in row.iter_mut().zip(params.embedding.row(id as usize)) {
                *x = *x + *e;
            }
        }
    }

    let mut layers: Vec<LayerCache<T>> = Vec::with_capacity(params.lstm.len());
    let mut zbuf = vec![T::zero(); 4 * hd];
    for (l, layer) in params.lstm.iter().enumerate() {
        let in_dim = layer.w.cols;
        let mut cache = LayerCache {
            gates: vec![T::zero(); steps * 4 * hd],
            c: vec![T::zero(); (steps + 1) * hd],
            h: vec![T::zero(); (steps + 1) * hd],
            tanh_c: vec![T::zero(); steps * hd],
        };
        for t in 0..steps {
            let x = if l == 0 {
                &x0[t * d..(t + 1) * d]
            } else {
                &layers[l - 1].h[(t + 1) * hd..(t + 2) * hd]
            };
            zbuf.copy_from_slice(&layer.b.data);
            matvec_acc(&layer.w.data, in_dim, x, &mut zbuf);
            matvec_acc(&layer.u.data, hd, &cache.h[t * hd..(t + 1) * hd], &mut zbuf);
            let gates = &mut cache.gates[t * 4 * hd..(t + 1) * 4 * hd];
            for j in 0..hd {
                gates[j] = sigmoid(zbuf[j]);
                gates[hd + j] = sigmoid(zbuf[hd + j]);
                gates[2 * hd + j] = zbuf[2 * hd + j].tanh();
                gates[3 * hd + j] = sigmoid(zbuf[3 * hd + j]);
            }
            let (prev, next) = cache.c.split_at_mut((t + 1) * hd);
            let c_prev = &prev[t * hd..];
            let c_next = &mut next[..hd];
            let h_next = &mut cache.h[(t + 1) * hd..(t + 2) * hd];
            let tanh_c = &mut cache.tanh_c[t * hd..(t + 1) * hd];
            for j in 0..hd {
                let c = gates[hd + j] * c_prev[j] + gates[j] * gates[2 * hd + j];
                c_next[j] = c;
                tanh_c[j] = c.tanh();
                h_next[j] = gates[3 * hd + j] * tanh_c[j];
            }
        }
        layers.push(cache);
    }

    let top = &layers.last().expect("at least one layer").h;
    let mut attn_s = vec![T::zero(); steps * ad];
    let mut alpha = vec![T::zero(); steps];
    for t in 0..steps {
        let s = &mut attn_s[t * ad..(t + 1) * ad];
        matvec_acc(&params.attn_w.data, hd, &top[(t + 1) * hd..(t + 2) * hd], s);
        for x in s.iter_mut() {
            *x = x.tanh();
        }
        alpha[t] = dot(&params.attn_v.data, s);
    }
    if steps > 0 {
        softmax(&mut alpha);
    }

    let mut z = vec![T::zero(); cfg.head_input_dim()];
    for t in 0..steps {
        let a = alpha[t];
        for (zj, hj) in z[..hd].iter_mut().zip(&top[(t + 1) * hd..(t + 2) * hd]) {
            *zj = *zj + a * *hj;
        }
    }
    let e = cfg.demo_embed_dim;
    for (k, (&idx, table)) in input.demographics.iter().zip(&params.demo).enumerate() {
        z[hd + k * e..hd + (k + 1) * e].copy_from_slice(table.row(idx));
    }

    let slope = T::from_f64(cfg.leaky_relu_slope).unwrap();
    let center = T::from_f64(cfg.bmi_center).unwrap();
    let scale = T::from_f64(cfg.bmi_scale).unwrap();
    let heads = params
        .heads
        .iter()
        .enumerate()
        .map(|(k, head)| {
            let mut a1 = head.b1.data.clone();
            matvec_acc(&head.w1.data, head.w1.cols, &z, &mut a1);
            let r1: Vec<T> = a1.iter().map(|&x| leaky_relu(x, slope)).collect();
            let mut a2 = head.b2.data.clone();
            matvec_acc(&head.w2.data, head.w2.cols, &r1, &mut a2);
            let mask = masks.map(|m| m[k].clone());
            let r2d: Vec<T> = a2
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let r = leaky_relu(x, slope);
                    mask.as_ref().map_or(r, |m| r * m[j])
                })
                .collect();
            let mut logits = head.bc.data.clone();
            matvec_acc(&head.wc.data, head.wc.cols, &r2d, &mut logits);
            softmax(&mut logits);
            let raw = head.br.data[0] + dot(&head.wr.data, &r2d);
            HeadCache {
                a1,
                r1,
                a2,
                r2d,
                mask,
                probs: [logits[0], logits[1]],
                bmi: center + scale * raw,
            }
        })
        .collect();

    Ok(ForwardCache {
        steps,
        x0,
        layers,
        attn_s,
        alpha,
        z,
        heads,
    })
}

/// Mean over labelled horizons of cross-entropy plus `lambda` times squared
/// BMI error.
pub fn loss_terms<T: Scalar>(
    probs: &[[T; 2]],
    bmi: &[T],
    labels: &[Option<HorizonLabel>],
    lambda: T,
) -> Result<T, ModelError> {
    let eps = T::from_f64(LOSS_EPS).unwrap();
    let mut total = T::zero();
    let mut n = 0usize;
    for ((p, &b), label) in probs.iter().zip(bmi).zip(labels) {
        let Some(label) = label else { continue };
        let p_true = p[usize::from(label.obese)];
        let err = b - T::from_f64(label.bmi).unwrap();
        total = total - p_true.max(eps).ln() + lambda * err * err;
        n += 1;
    }
    if n == 0 {
        return Err(ModelError::AllMasked);
    }
    Ok(total / T::from_usize(n).unwrap())
}

/// Joint loss of a model output against per-horizon labels (`None` = masked).
pub fn loss(output: &ModelOutput, labels: &[Option<HorizonLabel>], lambda: f64) -> Result<f64, ModelError> {
    let probs: Vec<[f64; 2]> = output.horizons.iter().map(|h| h.probs).collect();
    let bmi: Vec<f64> = output.horizons.iter().map(|h| h.bmi_pred).collect();
    loss_terms(&probs, &bmi, labels, lambda)
}

impl<T: Scalar> ForwardCache<T> {
    pub fn loss(&self, labels: &[Option<HorizonLabel>], lambda: f64) -> Result<T, ModelError> {
        let probs: Vec<[T; 2]> = self.heads.iter().map(|h| h.probs).collect();
        let bmi: Vec<T> = self.heads.iter().map(|h| h.bmi).collect();
        loss_terms(&probs, &bmi, labels, T::from_f64(lambda).unwrap())
    }
}
