use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backward::backward;
use super::forward::{draw_dropout_masks, forward};
use super::{Example, ModelConfig, ModelError, Params, Scalar};

pub const GRAD_CLIP_NORM: f64 = 5.0;
/// Upper bound on gradient shards per batch; shard boundaries depend only on
/// batch size, so results do not depend on the thread count.
const MAX_SHARDS: usize = 8;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    m: Params<T>,
    v: Params<T>,
    t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: GRAD_CLIP_NORM,
            m: Params::zeros(cfg),
            v: Params::zeros(cfg),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Clip `grads` to the global norm bound and apply one Adam update.
    /// Returns the pre-clip gradient norm and whether clipping fired.
    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, lr: f64) -> Result<(f64, bool), ModelError> {
        let norm = grads
            .tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|g| {
                let g = g.to_f64().unwrap();
                g * g
            })
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(ModelError::NonFiniteGradient);
        }
        let clipped = norm > self.clip_norm;
        let gscale = T::from_f64(if clipped { self.clip_norm / norm } else { 1.0 }).unwrap();
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (T::from_f64(self.beta1).unwrap(), T::from_f64(self.beta2).unwrap());
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step = T::from_f64(lr / bc1).unwrap();
        let inv_bc2 = T::from_f64(1.0 / bc2).unwrap();
        let eps = T::from_f64(self.eps).unwrap();
        let tensors = params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in tensors.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for (((w, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                let g = g * gscale;
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *w = *w - step * *m / ((*v * inv_bc2).sqrt() + eps);
            }
        }
        Ok((norm, clipped))
    }
}

/// Mean loss and gradient over a batch. Dropout masks are drawn from a
/// per-example stream of `dropout_seed`; `None` disables dropout.
pub fn batch_gradients<T: Scalar>(
    cfg: &ModelConfig,
    params: &Params<T>,
    batch: &[&Example],
    dropout_seed: Option<u64>,
    threads: usize,
) -> Result<(f64, Params<T>), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::ShapeMismatch("empty batch".into()));
    }
    let n_shards = batch.len().min(MAX_SHARDS);
    let shard_len = batch.len().div_ceil(n_shards);
    let shards: Vec<(usize, &[&Example])> = batch
        .chunks(shard_len)
        .enumerate()
        .map(|(i, c)| (i * shard_len, c))
        .collect();
    let scale = T::from_f64(1.0 / batch.len() as f64).unwrap();

    let run_shard = |(offset, shard): (usize, &[&Example])| -> Result<(f64, Params<T>), ModelError> {
        let mut grads = Params::zeros(cfg);
        let mut loss = 0.0;
        for (j, ex) in shard.iter().enumerate() {
            let input = ex.input();
            let masks = dropout_seed.map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((offset + j) as u64);
                draw_dropout_masks::<T, _>(cfg, &mut rng)
            });
            let cache = forward(cfg, params, &input, masks.as_deref())?;
            loss += backward(cfg, params, &input, &cache, &ex.labels, scale, &mut grads)?
                .to_f64()
                .unwrap();
        }
        Ok((loss, grads))
    };

    let threads = threads.clamp(1, shards.len());
    let results: Vec<Result<(f64, Params<T>), ModelError>> = if threads == 1 {
        shards.iter().copied().map(run_shard).collect()
    } else {
        let mut slots: Vec<Option<Result<(f64, Params<T>), ModelError>>> = (0..shards.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let shards = &shards;
                    let run_shard = &run_shard;
                    s.spawn(move || {
                        (w..shards.len())
                            .step_by(threads)
                            .map(|i| (i, run_shard(shards[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("gradient worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every shard ran")).collect()
    };

    let mut total_loss = 0.0;
    let mut grads: Option<Params<T>> = None;
    for r in results {
        let (loss, g) = r?;
        total_loss += loss;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => acc.add_assign(&g),
        }
    }
    Ok((total_loss / batch.len() as f64, grads.expect("nonempty batch")))
}

/// One optimizer step on a batch.
pub fn train_step<T: Scalar>(
    cfg: &ModelConfig,
    params: &mut Params<T>,
    adam: &mut Adam<T>,
    batch: &[&Example],
    lr: f64,
    dropout_seed: Option<u64>,
    threads: usize,
) -> Result<StepStats, ModelError> {
    let (loss, grads) = batch_gradients(cfg, params, batch, dropout_seed, threads)?;
    let (grad_norm, clipped) = adam.step(params, &grads, lr)?;
    if !params.all_finite() {
        return Err(ModelError::NonFiniteGradient);
    }
    Ok(StepStats { loss, grad_norm, clipped })
}
