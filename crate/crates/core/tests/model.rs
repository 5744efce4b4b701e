use pedrisk_core::model::{
    self, backward, draw_dropout_masks, forward, input_salience, io, rank_risk_factors, train_step, Adam, Example,
    HorizonLabel, ModelConfig, ModelError, ModelInput, ModelWeights, Params,
};
use pedrisk_core::registry::FeatureRegistry;
use pedrisk_core::sequence::{DemographicCardinalities, ScheduleConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 10,
        embed_dim: 4,
        hidden_dim: 6,
        attention_dim: 3,
        demographics: DemographicCardinalities {
            sex: 3,
            race: 2,
            ethnicity: 2,
            insurance: 2,
            region: 3,
            window_age: 4,
        },
        demo_embed_dim: 2,
        head_hidden: (5, 4),
        bmi_center: 17.0,
        seed: 7,
        ..ModelConfig::default()
    }
}

fn tiny_example() -> Example {
    Example {
        bins: vec![vec![1, 4], vec![], vec![0, 4, 9]],
        demographics: [1, 1, 0, 1, 2, 3],
        labels: vec![
            Some(HorizonLabel { obese: true, bmi: 18.2 }),
            None,
            Some(HorizonLabel { obese: false, bmi: 16.4 }),
        ],
    }
}

fn loss_at(cfg: &ModelConfig, p: &Params<f64>, ex: &Example, masks: &[Vec<f64>]) -> f64 {
    forward(cfg, p, &ex.input(), Some(masks)).unwrap().loss(&ex.labels, cfg.loss_lambda).unwrap()
}

#[test]
fn gradients_match_central_differences() {
    let start = std::time::Instant::now();
    let cfg = tiny_config();
    let params: Params<f64> = Params::init(&cfg);
    let ex = tiny_example();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let masks: Vec<Vec<f64>> = draw_dropout_masks(&cfg, &mut rng);

    let cache = forward(&cfg, &params, &ex.input(), Some(&masks)).unwrap();
    let mut grads = Params::zeros(&cfg);
    backward(&cfg, &params, &ex.input(), &cache, &ex.labels, 1.0, &mut grads).unwrap();

    let h = 1e-4;
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data.clone()).collect();
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].len();
        for i in 0..len {
            let orig = probe.tensors_mut()[ti].data[i];
            probe.tensors_mut()[ti].data[i] = orig + h;
            let up = loss_at(&cfg, &probe, &ex, &masks);
            probe.tensors_mut()[ti].data[i] = orig - h;
            let down = loss_at(&cfg, &probe, &ex, &masks);
            probe.tensors_mut()[ti].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "{name}[{i}]: analytic {a} numeric {numeric} rel {rel}");
            worst = worst.max(rel);
        }
    }
    // Untouched rows (unused ids and demographic values) must get exactly zero.
    assert!(grads.embedding.row(2).iter().all(|&g| g == 0.0));
    assert!(grads.demo[0].row(0).iter().all(|&g| g == 0.0));
    assert!(start.elapsed().as_secs() < 30);
    println!("worst relative error {worst:e}");
}

#[test]
fn softmax_and_attention_normalized() {
    let cfg = tiny_config();
    let p: Params<f32> = Params::init(&cfg);
    let ex = tiny_example();
    let out = forward(&cfg, &p, &ex.input(), None).unwrap().output();
    for h in &out.horizons {
        assert!((h.probs[0] + h.probs[1] - 1.0).abs() < 1e-6);
        assert_eq!(h.prob_obese, h.probs[1]);
    }
    assert!(out.attention.iter().all(|&a| a >= 0.0));
    assert!((out.attention.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

/// Straight-line reimplementation for a single-layer model on empty bins,
/// where every step sees a zero input vector.
#[test]
fn empty_bins_match_independent_oracle() {
    let cfg = ModelConfig {
        lstm_layers: 1,
        ..tiny_config()
    };
    let p: Params<f64> = Params::init(&cfg);
    let bins = vec![vec![]; 4];
    let demo = [2, 0, 1, 1, 0, 2];
    let got = forward(&cfg, &p, &ModelInput { bins: &bins, demographics: demo }, None)
        .unwrap()
        .output();

    let hd = cfg.hidden_dim;
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let (u, b) = (&p.lstm[0].u, &p.lstm[0].b.data);
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut hs = Vec::new();
    for _ in 0..bins.len() {
        let pre: Vec<f64> = (0..4 * hd)
            .map(|r| b[r] + (0..hd).map(|k| u.data[r * hd + k] * h[k]).sum::<f64>())
            .collect();
        for j in 0..hd {
            c[j] = sig(pre[hd + j]) * c[j] + sig(pre[j]) * pre[2 * hd + j].tanh();
            h[j] = sig(pre[3 * hd + j]) * c[j].tanh();
        }
        hs.push(h.clone());
    }
    let scores: Vec<f64> = hs
        .iter()
        .map(|h| {
            (0..cfg.attention_dim)
                .map(|a| {
                    let s: f64 = (0..hd).map(|k| p.attn_w.data[a * hd + k] * h[k]).sum();
                    p.attn_v.data[a] * s.tanh()
                })
                .sum()
        })
        .collect();
    let m = scores.iter().cloned().fold(f64::MIN, f64::max);
    let ex: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let alpha: Vec<f64> = ex.iter().map(|e| e / ex.iter().sum::<f64>()).collect();
    let mut z: Vec<f64> = (0..hd).map(|k| hs.iter().zip(&alpha).map(|(h, a)| a * h[k]).sum()).collect();
    for (t, &i) in p.demo.iter().zip(&demo) {
        z.extend_from_slice(t.row(i));
    }
    let lrelu = |x: f64| if x > 0.0 { x } else { 0.1 * x };
    let dense = |w: &model::Tensor<f64>, b: &model::Tensor<f64>, x: &[f64]| -> Vec<f64> {
        (0..w.rows)
            .map(|r| b.data[r] + (0..w.cols).map(|k| w.data[r * w.cols + k] * x[k]).sum::<f64>())
            .collect()
    };
    for (k, head) in p.heads.iter().enumerate() {
        let r1: Vec<f64> = dense(&head.w1, &head.b1, &z).into_iter().map(lrelu).collect();
        let r2: Vec<f64> = dense(&head.w2, &head.b2, &r1).into_iter().map(lrelu).collect();
        let logits = dense(&head.wc, &head.bc, &r2);
        let p1 = 1.0 / (1.0 + (logits[0] - logits[1]).exp());
        let bmi = cfg.bmi_center + dense(&head.wr, &head.br, &r2)[0];
        assert!((got.horizons[k].prob_obese - p1).abs() < 1e-12);
        assert!((got.horizons[k].bmi_pred - bmi).abs() < 1e-10);
    }
    for (a, b) in got.attention.iter().zip(&alpha) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn init_is_deterministic_and_finite() {
    let cfg = tiny_config();
    let a: Params<f32> = Params::init(&cfg);
    let b: Params<f32> = Params::init(&cfg);
    assert_eq!(a, b);
    let other: Params<f32> = Params::init(&ModelConfig { seed: 8, ..cfg.clone() });
    assert_ne!(a, other);
    let out = forward(&cfg, &a, &tiny_example().input(), None).unwrap().output();
    assert!(out.horizons.iter().all(|h| h.prob_obese.is_finite() && h.bmi_pred.is_finite()));
    assert_eq!(a.lstm[0].b.data[cfg.hidden_dim], 1.0);
}

#[test]
fn config_validation() {
    let bad = ModelConfig {
        embed_dim: 0,
        ..tiny_config()
    };
    assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig(_))));
    assert!(ModelConfig { leaky_relu_slope: 1.0, ..tiny_config() }.validate().is_err());
    assert!(ModelConfig { horizons: 2, ..tiny_config() }.validate().is_err());
    assert!(ModelConfig::with_vocab(40).validate().is_ok());
}

#[test]
fn inference_is_repeatable() {
    let cfg = tiny_config();
    let p: Params<f32> = Params::init(&cfg);
    let ex = tiny_example();
    let a = forward(&cfg, &p, &ex.input(), None).unwrap().output();
    let b = forward(&cfg, &p, &ex.input(), None).unwrap().output();
    assert_eq!(a, b);
}

#[test]
fn bad_inputs_rejected() {
    let cfg = tiny_config();
    let p: Params<f32> = Params::init(&cfg);
    let bins = vec![vec![10]];
    let err = forward(&cfg, &p, &ModelInput { bins: &bins, demographics: [0; 6] }, None).unwrap_err();
    assert_eq!(err, ModelError::UnknownId { id: 10, vocab: 10 });
    let bins = vec![vec![1]];
    let err = forward(&cfg, &p, &ModelInput { bins: &bins, demographics: [3, 0, 0, 0, 0, 0] }, None).unwrap_err();
    assert!(matches!(err, ModelError::ShapeMismatch(_)));
}

#[test]
fn loss_examples() {
    let out = model::ModelOutput {
        horizons: vec![
            model::HorizonOutput { probs: [0.5, 0.5], prob_obese: 0.5, bmi_pred: 20.0 },
            model::HorizonOutput { probs: [0.0, 1.0], prob_obese: 1.0, bmi_pred: 20.0 },
            model::HorizonOutput { probs: [0.5, 0.5], prob_obese: 0.5, bmi_pred: 20.0 },
        ],
        attention: vec![],
    };
    let l = |obese, bmi| Some(HorizonLabel { obese, bmi });
    let ln2 = model::loss(&out, &[l(true, 25.0), None, None], 0.0).unwrap();
    assert!((ln2 - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(model::loss(&out, &[None, l(true, 20.0), None], 1.0).unwrap().abs() < 1e-12);
    assert_eq!(model::loss(&out, &[None, None, None], 1.0), Err(ModelError::AllMasked));
    let with_bmi = model::loss(&out, &[l(true, 21.0), None, None], 0.5).unwrap();
    assert!((with_bmi - (std::f64::consts::LN_2 + 0.5)).abs() < 1e-12);
}

#[test]
fn zero_learning_rate_leaves_weights_bitwise() {
    let cfg = tiny_config();
    let mut p: Params<f32> = Params::init(&cfg);
    let before = p.clone();
    let mut adam = Adam::new(&cfg);
    let ex = tiny_example();
    train_step(&cfg, &mut p, &mut adam, &[&ex], 0.0, Some(1), 1).unwrap();
    assert_eq!(p, before);
}

#[test]
fn small_step_decreases_loss() {
    let cfg = ModelConfig { dropout: 0.0, ..tiny_config() };
    let mut p: Params<f64> = Params::init(&cfg);
    let mut adam = Adam::new(&cfg);
    let ex = tiny_example();
    let before = forward(&cfg, &p, &ex.input(), None).unwrap().loss(&ex.labels, 1.0).unwrap();
    train_step(&cfg, &mut p, &mut adam, &[&ex], 1e-3, None, 1).unwrap();
    let after = forward(&cfg, &p, &ex.input(), None).unwrap().loss(&ex.labels, 1.0).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn gradients_do_not_depend_on_thread_count() {
    let cfg = tiny_config();
    let p: Params<f32> = Params::init(&cfg);
    let examples = random_examples(&cfg, 19, 5);
    let refs: Vec<&Example> = examples.iter().collect();
    let (l1, g1) = model::batch_gradients(&cfg, &p, &refs, Some(9), 1).unwrap();
    let (l3, g3) = model::batch_gradients(&cfg, &p, &refs, Some(9), 3).unwrap();
    assert_eq!(l1, l3);
    assert_eq!(g1, g3);
}

fn random_examples(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let bins = (0..rng.random_range(2..6))
                .map(|_| {
                    let mut b: Vec<u32> = (0..rng.random_range(0..4))
                        .map(|_| rng.random_range(0..cfg.vocab_size as u32))
                        .collect();
                    b.sort();
                    b.dedup();
                    b
                })
                .collect();
            let demographics = [
                rng.random_range(0..3),
                rng.random_range(0..2),
                rng.random_range(0..2),
                rng.random_range(0..2),
                rng.random_range(0..3),
                rng.random_range(0..4),
            ];
            let labels = (0..3)
                .map(|_| {
                    Some(HorizonLabel {
                        obese: rng.random_bool(0.5),
                        bmi: 17.0 + rng.random_range(-1.0..1.0),
                    })
                })
                .collect();
            Example { bins, demographics, labels }
        })
        .collect()
}

#[test]
fn overfits_thirty_two_examples() {
    let cfg = ModelConfig {
        vocab_size: 40,
        embed_dim: 16,
        hidden_dim: 16,
        attention_dim: 8,
        head_hidden: (32, 16),
        dropout: 0.0,
        demographics: tiny_config().demographics,
        demo_embed_dim: 2,
        seed: 1,
        ..ModelConfig::default()
    };
    let examples = random_examples(&cfg, 32, 11);
    let refs: Vec<&Example> = examples.iter().collect();
    let mut p: Params<f32> = Params::init(&cfg);
    let mut adam = Adam::new(&cfg);
    let mut last = f64::INFINITY;
    for step in 0..500 {
        last = train_step(&cfg, &mut p, &mut adam, &refs, 1e-2, None, 1).unwrap().loss;
        if last < 0.01 {
            println!("converged at step {step}");
            break;
        }
    }
    assert!(last < 0.01, "final loss {last}");
}

#[test]
fn save_load_round_trip() {
    let reg = FeatureRegistry::demo();
    let cfg = ModelConfig { seed: 3, ..tiny_config() };
    let w = ModelWeights::init(cfg, ScheduleConfig::default(), reg.fingerprint()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.prsk");
    io::save(&w, &path).unwrap();
    let back = io::load(&path, Some(&reg.fingerprint())).unwrap();
    assert_eq!(back, w);
    for (a, b) in w.params.tensors().iter().zip(back.params.tensors()) {
        let bits = |t: &model::Tensor<f32>| t.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    assert!(matches!(
        io::load(&path, Some("0000")),
        Err(ModelError::FingerprintMismatch { .. })
    ));
    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(
        io::from_bytes(&bytes[..bytes.len() - 3], None),
        Err(ModelError::Corrupt(_))
    ));
    assert!(matches!(io::from_bytes(&bytes[..20], None), Err(ModelError::Corrupt(_))));
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(io::from_bytes(&v2, None), Err(ModelError::VersionMismatch { found: 2, .. })));
}

#[test]
fn risk_factor_ranking() {
    let reg = pedrisk_core::registry::FeatureRegistry::parse(
        "#domains cond=3 famhx=0 med=0 meas=0\n\
         0|cond|Asthma|SNOMED:1|quant=none\n\
         1|cond|Eczema|SNOMED:2|quant=none\n\
         2|cond|Otitis|SNOMED:3|quant=none\n",
    )
    .unwrap();
    let vocab = reg.input_vocab().unwrap();
    let cfg = ModelConfig { vocab_size: 3, ..tiny_config() };
    let mut p: Params<f64> = Params::init(&cfg);
    for id in 0..3 {
        p.embedding.row_mut(id).fill(1.0);
    }
    assert!(rank_risk_factors(&input_salience(&p, &[], &[]), &vocab, &reg, 5).is_empty());

    let single = input_salience(&p, &[vec![1]], &[1.0]);
    let ranked = rank_risk_factors(&single, &vocab, &reg, 5);
    assert_eq!(ranked.len(), 1);
    assert_eq!(ranked[0].label, "Eczema");
    assert_eq!(ranked[0].score, 1.0);

    // Feature 0 sits in bins holding 90% of the attention mass.
    let bins = vec![vec![0], vec![0, 2], vec![2]];
    let sal = input_salience(&p, &bins, &[0.6, 0.3, 0.1]);
    let ranked = rank_risk_factors(&sal, &vocab, &reg, 5);
    assert_eq!(ranked[0].feature_id, 0);
    assert!((ranked[0].score - 0.9 / 1.3).abs() < 1e-12);
    assert!((ranked.iter().map(|r| r.score).sum::<f64>() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permuting_ids_within_bins_is_invisible(seed in 0u64..1000, rot in 0usize..4) {
        let cfg = tiny_config();
        let p: Params<f32> = Params::init(&cfg);
        let ex = random_examples(&cfg, 1, seed).pop().unwrap();
        let mut shuffled = ex.bins.clone();
        for b in &mut shuffled {
            if !b.is_empty() {
                let k = rot % b.len();
                b.rotate_left(k);
                b.reverse();
            }
        }
        let a = forward(&cfg, &p, &ex.input(), None).unwrap().output();
        let b = forward(&cfg, &p, &ModelInput { bins: &shuffled, demographics: ex.demographics }, None)
            .unwrap()
            .output();
        for (x, y) in a.horizons.iter().zip(&b.horizons) {
            prop_assert!((x.prob_obese - y.prob_obese).abs() < 1e-6);
            prop_assert!((x.bmi_pred - y.bmi_pred).abs() < 1e-4);
        }
    }
}
