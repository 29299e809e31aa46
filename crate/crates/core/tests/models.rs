use proptest::prelude::*;
use pxm_core::autodiff::{grad_check_with, GradCheckOptions, Tape};
use pxm_core::exec::Parallelism;
use pxm_core::models::{EcgEncoderConfig, Model, ModelConfig, TextEncoderConfig, TokenSequence, MATCH_ET};
use pxm_core::prob_embed::{cosine_similarity, pcme_graph, MatchMatrix, MatchScalars, LOG_VAR_MAX, LOG_VAR_MIN};
use pxm_core::signal::Signal;
use pxm_core::synthdata::{generate_cohort, CohortConfig};
use pxm_core::train::{fit, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> ModelConfig {
    ModelConfig {
        ecg: EcgEncoderConfig {
            leads: 2,
            samples: 32,
            stem_channels: 3,
            stem_kernel: 3,
            stem_stride: 2,
            widths: vec![3, 4],
            block_stride: 2,
        },
        text: TextEncoderConfig { vocab_size: 7, token_dim: 3, hidden: 4 },
        embed_dim: 3,
        log_var_bias_init: -1.0,
        ..ModelConfig::default()
    }
}

fn window(seed: u64, leads: usize, samples: usize) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..leads).map(|_| (0..samples).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let names: Vec<String> = (0..leads).map(|i| format!("L{i}")).collect();
    Signal::new(data, 100.0, names).unwrap()
}

#[test]
fn both_encoders_and_matching_loss_pass_finite_differences() {
    let cfg = small_config();
    let mut model = Model::init(&cfg, 3).unwrap();
    let windows = [window(1, 2, 32), window(2, 2, 32)];
    let seqs = [TokenSequence::new(vec![1, 2, 3], 7).unwrap(), TokenSequence::new(vec![4, 5, 6, 6], 7).unwrap()];
    let shape = Model::init(&cfg, 3).unwrap();
    let opts = GradCheckOptions { eps: 1e-5, max_coords_per_param: Some(12), seed: 0 };
    let err = grad_check_with(&mut model.store, opts, |tape: &mut Tape, store| {
        let w: Vec<&Signal> = windows.iter().collect();
        let s: Vec<&TokenSequence> = seqs.iter().collect();
        let e = shape.ecg_graph_in(tape, store, &w)?;
        let t = shape.text_graph_in(tape, store, &s)?;
        pcme_graph(tape, store, &MatchScalars::with_prefix(MATCH_ET), e, t, &MatchMatrix::identity(2))
    })
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn small_perturbation_moves_outputs_by_a_small_amount() {
    let cfg = small_config();
    let model = Model::init(&cfg, 9).unwrap();
    let w = window(4, 2, 32);
    let mut data = w.leads().to_vec();
    data[1][7] += 1e-6;
    let w2 = Signal::new(data, 100.0, w.lead_names().to_vec()).unwrap();
    let (a, b) = (model.ecg_encode(&w).unwrap(), model.ecg_encode(&w2).unwrap());
    let diff = a.mu.iter().chain(&a.log_var).zip(b.mu.iter().chain(&b.log_var)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn trained_text_encoder_separates_classes() {
    let cohort_cfg = CohortConfig { classes: 2, samples_per_class: 24, teacher_dim: 16, teacher_frames: 4, ..Default::default() };
    let cohort = generate_cohort(&cohort_cfg).unwrap();
    let mut model_cfg = ModelConfig::desk();
    model_cfg.ecg = EcgEncoderConfig { stem_channels: 4, widths: vec![8, 8], ..EcgEncoderConfig::desk() };
    model_cfg.embed_dim = 16;
    let mut cfg = RunConfig { cohort: cohort_cfg.clone(), model: model_cfg, ..Default::default() };
    cfg.train.epochs = 150;
    cfg.train.batch_size = 16;
    cfg.train.lr = 2e-3;
    let out = fit(&cohort, &cfg, None).unwrap();
    let seqs: Vec<TokenSequence> = cohort.samples.iter().map(|s| s.tokens.clone()).collect();
    let emb = out.model.encode_text_batch(&seqs, Parallelism::Sequential).unwrap();
    let (mut same, mut cross) = (Vec::new(), Vec::new());
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            let c = cosine_similarity(&emb[i].mu, &emb[j].mu).unwrap();
            if cohort.samples[i].label == cohort.samples[j].label { same.push(c) } else { cross.push(c) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&same) > mean(&cross) + 0.1, "{} vs {}", mean(&same), mean(&cross));
}

proptest! {
    #[test]
    fn ecg_outputs_are_normalised_and_clamped(seed in 0u64..500, init in 0u64..4) {
        let model = Model::init(&small_config(), init).unwrap();
        let z = model.ecg_encode(&window(seed, 2, 32)).unwrap();
        prop_assert!((z.mu_norm() - 1.0).abs() < 1e-9);
        prop_assert!(z.log_var.iter().all(|v| (LOG_VAR_MIN..=LOG_VAR_MAX).contains(v)));
    }

    #[test]
    fn text_is_permutation_invariant(ids in prop::collection::vec(1usize..7, 1..10), seed in 0u64..100) {
        let model = Model::init(&small_config(), 5).unwrap();
        let mut shuffled = ids.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = model.text_encode(&TokenSequence::new(ids, 7).unwrap()).unwrap();
        let b = model.text_encode(&TokenSequence::new(shuffled, 7).unwrap()).unwrap();
        for (x, y) in a.mu.iter().zip(&b.mu) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.mu_norm() - 1.0).abs() < 1e-9);
    }
}
