use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};

/// Row-major matrix; vectors have `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<T> {
    /// Input weights, `4H x in`, gate blocks ordered input, forget, cell, output.
    pub w: Tensor<T>,
    /// Recurrent weights, `4H x H`.
    pub u: Tensor<T>,
    pub b: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    /// Two-way classifier: row 0 = not obese, row 1 = obese.
    pub wc: Tensor<T>,
    pub bc: Tensor<T>,
    pub wr: Tensor<T>,
    pub br: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub embedding: Tensor<T>,
    pub lstm: Vec<LstmLayer<T>>,
    /// Attention projection `A x H`.
    pub attn_w: Tensor<T>,
    pub attn_v: Tensor<T>,
    /// One `cardinality x demo_embed_dim` table per demographic field.
    pub demo: Vec<Tensor<T>>,
    pub heads: Vec<Head<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden_dim;
        let lstm = (0..cfg.lstm_layers)
            .map(|l| {
                let input = if l == 0 { cfg.embed_dim } else { h };
                LstmLayer {
                    w: Tensor::zeros(4 * h, input),
                    u: Tensor::zeros(4 * h, h),
                    b: Tensor::zeros(4 * h, 1),
                }
            })
            .collect();
        let (h1, h2) = cfg.head_hidden;
        let z = cfg.head_input_dim();
        let heads = (0..cfg.horizons)
            .map(|_| Head {
                w1: Tensor::zeros(h1, z),
                b1: Tensor::zeros(h1, 1),
                w2: Tensor::zeros(h2, h1),
                b2: Tensor::zeros(h2, 1),
                wc: Tensor::zeros(2, h2),
                bc: Tensor::zeros(2, 1),
                wr: Tensor::zeros(1, h2),
                br: Tensor::zeros(1, 1),
            })
            .collect();
        Self {
            embedding: Tensor::zeros(cfg.vocab_size, cfg.embed_dim),
            lstm,
            attn_w: Tensor::zeros(cfg.attention_dim, h),
            attn_v: Tensor::zeros(cfg.attention_dim, 1),
            demo: cfg
                .demographics
                .as_array()
                .iter()
                .map(|&n| Tensor::zeros(n, cfg.demo_embed_dim))
                .collect(),
            heads,
        }
    }

    /// Seeded initialization: uniform `±1/sqrt(fan_in)` for dense and
    /// recurrent blocks, small normal embeddings, forget-gate bias set.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.embed_init_std).expect("validated std");
        let gaussian = |t: &mut Tensor<T>, rng: &mut ChaCha8Rng| {
            for x in &mut t.data {
                *x = T::from_f64(normal.sample(rng)).unwrap();
            }
        };
        let uniform = |t: &mut Tensor<T>, fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in &mut t.data {
                *x = T::from_f64(rng.random_range(-bound..bound)).unwrap();
            }
        };
        gaussian(&mut p.embedding, &mut rng);
        let h = cfg.hidden_dim;
        for layer in &mut p.lstm {
            let fan_in = layer.w.cols;
            uniform(&mut layer.w, fan_in, &mut rng);
            uniform(&mut layer.u, h, &mut rng);
            for x in &mut layer.b.data[h..2 * h] {
                *x = T::from_f64(cfg.forget_bias).unwrap();
            }
        }
        uniform(&mut p.attn_w, h, &mut rng);
        uniform(&mut p.attn_v, cfg.attention_dim, &mut rng);
        for table in &mut p.demo {
            gaussian(table, &mut rng);
        }
        for head in &mut p.heads {
            let (c1, c2, c3) = (head.w1.cols, head.w2.cols, head.wc.cols);
            uniform(&mut head.w1, c1, &mut rng);
            uniform(&mut head.w2, c2, &mut rng);
            uniform(&mut head.wc, c3, &mut rng);
            uniform(&mut head.wr, c3, &mut rng);
        }
        p
    }

    /// All tensors with stable names, in container order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (l, layer) in self.lstm.iter().enumerate() {
            out.push((format!("lstm.{l}.w"), &layer.w));
            out.push((format!("lstm.{l}.u"), &layer.u));
            out.push((format!("lstm.{l}.b"), &layer.b));
        }
        out.push(("attn.w".into(), &self.attn_w));
        out.push(("attn.v".into(), &self.attn_v));
        for (i, t) in self.demo.iter().enumerate() {
            out.push((format!("demo.{i}"), t));
        }
        for (k, head) in self.heads.iter().enumerate() {
            for (n, t) in [
                ("w1", &head.w1),
                ("b1", &head.b1),
                ("w2", &head.w2),
                ("b2", &head.b2),
                ("wc", &head.wc),
                ("bc", &head.bc),
                ("wr", &head.wr),
                ("br", &head.br),
            ] {
                out.push((format!("head.{k}.{n}"), t));
            }
        }
        out
    }

    /// Mutable tensors in the same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding];
        for layer in &mut self.lstm {
            out.extend([&mut layer.w, &mut layer.u, &mut layer.b]);
        }
        out.push(&mut self.attn_w);
        out.push(&mut self.attn_v);
        out.extend(self.demo.iter_mut());
        for head in &mut self.heads {
            out.extend([
                &mut head.w1,
                &mut head.b1,
                &mut head.w2,
                &mut head.b2,
                &mut head.wc,
                &mut head.bc,
                &mut head.wr,
                &mut head.br,
            ]);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.data.fill(T::zero());
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + *y;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            embedding: self.embedding.cast(),
            lstm: self
                .lstm
                .iter()
                .map(|l| LstmLayer {
                    w: l.w.cast(),
                    u: l.u.cast(),
                    b: l.b.cast(),
                })
                .collect(),
            attn_w: self.attn_w.cast(),
            attn_v: self.attn_v.cast(),
            demo: self.demo.iter().map(Tensor::cast).collect(),
            heads: self
                .heads
                .iter()
                .map(|h| Head {
                    w1: h.w1.cast(),
                    b1: h.b1.cast(),
                    w2: h.w2.cast(),
                    b2: h.b2.cast(),
                    wc: h.wc.cast(),
                    bc: h.bc.cast(),
                    wr: h.wr.cast(),
                    br: h.br.cast(),
                })
                .collect(),
        }
    }
}
