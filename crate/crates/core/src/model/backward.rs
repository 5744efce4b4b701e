use super::forward::{ForwardCache, LOSS_EPS};
use super::ops::{axpy, dot, leaky_relu_grad, matvec_t_acc, outer_acc};
use super::{HorizonLabel, ModelConfig, ModelError, ModelInput, Params, Scalar};

/// Backpropagate the joint loss of one example through every layer,
/// accumulating `scale * dLoss/dθ` into `grads`. Returns the example's loss.
pub fn backward<T: Scalar>(
    cfg: &ModelConfig,
    params: &Params<T>,
    input: &ModelInput<'_>,
    cache: &ForwardCache<T>,
    labels: &[Option<HorizonLabel>],
    scale: T,
    grads: &mut Params<T>,
) -> Result<T, ModelError> {
    let loss = cache.loss(labels, cfg.loss_lambda)?;
    let n_labelled = labels.iter().take(cfg.horizons).filter(|l| l.is_some()).count();
    let per = scale / T::from_usize(n_labelled).unwrap();
    let lambda = T::from_f64(cfg.loss_lambda).unwrap();
    let bmi_scale = T::from_f64(cfg.bmi_scale).unwrap();
    let slope = T::from_f64(cfg.leaky_relu_slope).unwrap();
    let eps = T::from_f64(LOSS_EPS).unwrap();
    let two = T::from_f64(2.0).unwrap();
    let (hd, ad, d) = (cfg.hidden_dim, cfg.attention_dim, cfg.embed_dim);

    // Heads.
    let mut dz = vec![T::zero(); cache.z.len()];
    for (k, label) in labels.iter().enumerate().take(cfg.horizons) {
        let Some(label) = label else { continue };
        let (head, hc, g) = (&params.heads[k], &cache.heads[k], &mut grads.heads[k]);
        let y = usize::from(label.obese);
        let mut dlogits = [T::zero(); 2];
        if hc.probs[y] >= eps {
            for (c, dl) in dlogits.iter_mut().enumerate() {
                let onehot = if c == y { T::one() } else { T::zero() };
                *dl = (hc.probs[c] - onehot) * per;
            }
        }
        let dbmi = two * lambda * (hc.bmi - T::from_f64(label.bmi).unwrap()) * per;
        let draw = dbmi * bmi_scale;

        outer_acc(&mut g.wc.data, head.wc.cols, &dlogits, &hc.r2d);
        g.bc.data[0] = g.bc.data[0] + dlogits[0];
        g.bc.data[1] = g.bc.data[1] + dlogits[1];
        axpy(draw, &hc.r2d, &mut g.wr.data);
        g.br.data[0] = g.br.data[0] + draw;

        let mut da2 = vec![T::zero(); hc.a2.len()];
        matvec_t_acc(&head.wc.data, head.wc.cols, &dlogits, &mut da2);
        axpy(draw, &head.wr.data, &mut da2);
        for (j, v) in da2.iter_mut().enumerate() {
            let m = hc.mask.as_ref().map_or(T::one(), |m| m[j]);
            *v = *v * m * leaky_relu_grad(hc.a2[j], slope);
        }
        outer_acc(&mut g.w2.data, head.w2.cols, &da2, &hc.r1);
        axpy(T::one(), &da2, &mut g.b2.data);

        let mut da1 = vec![T::zero(); hc.a1.len()];
        matvec_t_acc(&head.w2.data, head.w2.cols, &da2, &mut da1);
        for (v, &a) in da1.iter_mut().zip(&hc.a1) {
            *v = *v * leaky_relu_grad(a, slope);
        }
        outer_acc(&mut g.w1.data, head.w1.cols, &da1, &cache.z);
        axpy(T::one(), &da1, &mut g.b1.data);
        matvec_t_acc(&head.w1.data, head.w1.cols, &da1, &mut dz);
    }

    // Demographic embeddings.
    let e = cfg.demo_embed_dim;
    for (k, &idx) in input.demographics.iter().enumerate() {
        let src = &dz[hd + k * e..hd + (k + 1) * e];
        axpy(T::one(), src, grads.demo[k].row_mut(idx));
    }

    let steps = cache.steps;
    if steps == 0 {
        return Ok(loss);
    }

    // Attention pooling: ctx = Σ α_t h_t, α = softmax(vᵀ tanh(W_a h_t)).
    let dctx = &dz[..hd];
    let top = &cache.layers.last().expect("at least one layer").h;
    let mut dh_ext = vec![T::zero(); steps * hd];
    let mut dalpha = vec![T::zero(); steps];
    for t in 0..steps {
        let h = &top[(t + 1) * hd..(t + 2) * hd];
        axpy(cache.alpha[t], dctx, &mut dh_ext[t * hd..(t + 1) * hd]);
        dalpha[t] = dot(h, dctx);
    }
    let mean: T = cache
        .alpha
        .iter()
        .zip(&dalpha)
        .fold(T::zero(), |acc, (&a, &g)| acc + a * g);
    let mut du = vec![T::zero(); ad];
    for t in 0..steps {
        let de = cache.alpha[t] * (dalpha[t] - mean);
        if de == T::zero() {
            continue;
        }
        let s = &cache.attn_s[t * ad..(t + 1) * ad];
        axpy(de, s, &mut grads.attn_v.data);
        for ((dui, &si), &vi) in du.iter_mut().zip(s).zip(&params.attn_v.data) {
            *dui = de * vi * (T::one() - si * si);
        }
        let h = &top[(t + 1) * hd..(t + 2) * hd];
        outer_acc(&mut grads.attn_w.data, hd, &du, h);
        matvec_t_acc(&params.attn_w.data, hd, &du, &mut dh_ext[t * hd..(t + 1) * hd]);
    }

    // Recurrent layers, top down, backpropagation through time.
    let mut dzg = vec![T::zero(); 4 * hd];
    let mut dh_next = vec![T::zero(); hd];
    let mut dc_next = vec![T::zero(); hd];
    for l in (0..params.lstm.len()).rev() {
        let layer = &params.lstm[l];
        let lc = &cache.layers[l];
        let in_dim = layer.w.cols;
        let mut dx = vec![T::zero(); steps * in_dim];
        dh_next.fill(T::zero());
        dc_next.fill(T::zero());
        for t in (0..steps).rev() {
            let gates = &lc.gates[t * 4 * hd..(t + 1) * 4 * hd];
            let c_prev = &lc.c[t * hd..(t + 1) * hd];
            let tanh_c = &lc.tanh_c[t * hd..(t + 1) * hd];
            for j in 0..hd {
                let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
                let dh = dh_ext[t * hd + j] + dh_next[j];
                let dc = dc_next[j] + dh * o * (T::one() - tanh_c[j] * tanh_c[j]);
                dzg[j] = dc * g * i * (T::one() - i);
                dzg[hd + j] = dc * c_prev[j] * f * (T::one() - f);
                dzg[2 * hd + j] = dc * i * (T::one() - g * g);
                dzg[3 * hd + j] = dh * tanh_c[j] * o * (T::one() - o);
                dc_next[j] = dc * f;
            }
            let x = if l == 0 {
                &cache.x0[t * d..(t + 1) * d]
            } else {
                &cache.layers[l - 1].h[(t + 1) * hd..(t + 2) * hd]
            };
            let h_prev = &lc.h[t * hd..(t + 1) * hd];
            let g = &mut grads.lstm[l];
            outer_acc(&mut g.w.data, in_dim, &dzg, x);
            outer_acc(&mut g.u.data, hd, &dzg, h_prev);
            axpy(T::one(), &dzg, &mut g.b.data);
            matvec_t_acc(&layer.w.data, in_dim, &dzg, &mut dx[t * in_dim..(t + 1) * in_dim]);
            dh_next.fill(T::zero());
            matvec_t_acc(&layer.u.data, hd, &dzg, &mut dh_next);
        }
        if l == 0 {
            for (t, bin) in input.bins.iter().enumerate() {
                let src = &dx[t * d..(t + 1) * d];
                for &id in bin {
                    axpy(T::one(), src, grads.embedding.row_mut(id as usize));
                }
            }
        } else {
            dh_ext = dx;
        }
    }
    Ok(loss)
}
