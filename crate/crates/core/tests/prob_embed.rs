use proptest::prelude::*;
use pxm_core::autodiff::{grad_check, ParamStore, Tape, Tensor};
use pxm_core::exec::Parallelism;
use pxm_core::prob_embed::{
    combined_loss, csd, heads_on_tape, infonce_graph, infonce_loss, match_prob, pcme_graph, pcme_matching_loss,
    sampled_sq_distance, teacher_aggregate, uncertainty_scalar, vib_graph, vib_regularizer, FrameEmbeddingSet,
    HeadNames, LossWeights, MatchMatrix, MatchScalars, ProbEmbedding, TEACHER_VAR_FLOOR,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_embedding(rng: &mut ChaCha8Rng, d: usize) -> ProbEmbedding {
    let mu = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lv = (0..d).map(|_| rng.random_range(-3.0..0.5)).collect();
    ProbEmbedding::new(mu, lv).unwrap()
}

#[test]
fn csd_agrees_with_monte_carlo_on_a_few_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..5 {
        let (a, b) = (random_embedding(&mut rng, 8), random_embedding(&mut rng, 8));
        let exact = csd(&a, &b).unwrap();
        let mc = sampled_sq_distance(&a, &b, 200_000, k, Parallelism::Auto).unwrap();
        assert!((mc - exact).abs() / exact < 0.02, "{mc} vs {exact}");
    }
}

#[test]
fn vib_of_unit_log_variance() {
    let z = ProbEmbedding::new(vec![0.0], vec![1.0]).unwrap();
    assert!((vib_regularizer(&z) - 0.3591).abs() < 1e-4);
}

#[test]
fn infonce_on_single_pair_is_zero() {
    let l = infonce_loss(&[vec![0.3, 0.4]], &[vec![-1.0, 2.0]], &MatchMatrix::identity(1), 0.07).unwrap();
    assert!(l.abs() < 1e-15);
}

#[test]
fn infonce_two_by_two_closed_form() {
    let tau = 0.2;
    let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
    let b = vec![vec![2.0, 0.0, 0.0], vec![0.0, 0.5, 0.0]];
    let l = infonce_loss(&a, &b, &MatchMatrix::identity(2), tau).unwrap();
    let (s_on, s_off) = (1.0f64, 0.0f64);
    let want = (1.0f64 + ((s_off - s_on) / tau).exp()).ln();
    assert!((l - want).abs() < 1e-12);
}

#[test]
fn pcme_loss_matches_direct_bce() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a: Vec<_> = (0..3).map(|_| random_embedding(&mut rng, 4)).collect();
    let b: Vec<_> = (0..3).map(|_| random_embedding(&mut rng, 4)).collect();
    let w = LossWeights { sigmoid_scale: 0.7, sigmoid_shift: 1.5, ..Default::default() };
    let m = MatchMatrix::identity(3);
    let mut want = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let p = match_prob(csd(&a[i], &b[j]).unwrap(), 0.7, 1.5);
            want -= if i == j { p.ln() } else { (1.0 - p).ln() };
        }
    }
    want /= 9.0;
    let got = pcme_matching_loss(&a, &b, &m, &w).unwrap();
    assert!((got - want).abs() < 1e-12);
}

fn head_store(seed: u64, f: usize, d: usize) -> (ParamStore, HeadNames, HeadNames, MatchScalars) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let ha = HeadNames::with_prefix("a");
    let hb = HeadNames::with_prefix("b");
    ha.init(&mut s, f, d, -1.0, &mut rng).unwrap();
    hb.init(&mut s, f, d, -0.5, &mut rng).unwrap();
    let sc = MatchScalars::with_prefix("m");
    sc.init(&mut s, 2.0, 0.5).unwrap();
    (s, ha, hb, sc)
}

fn features(n: usize, f: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(n, f, (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn loss_graphs_pass_finite_differences() {
    let (mut s, ha, hb, sc) = head_store(4, 5, 3);
    let m = MatchMatrix::identity(3);
    let err = grad_check(&mut s, 1e-5, |tape: &mut Tape, store: &ParamStore| {
        let fa = tape.input(features(3, 5, 1));
        let fb = tape.input(features(3, 5, 2));
        let za = heads_on_tape(tape, store, &ha, fa)?;
        let zb = heads_on_tape(tape, store, &hb, fb)?;
        let pcme = pcme_graph(tape, store, &sc, za, zb, &m)?;
        let nce = infonce_graph(tape, za.0, zb.0, &m, 0.3)?;
        let vib = vib_graph(tape, za.0, za.1)?;
        let t = tape.add(pcme, nce)?;
        tape.add(t, vib)
    })
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

fn two_pass(frames: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = frames.len() as f64;
    let d = frames[0].len();
    let mean: Vec<f64> = (0..d).map(|k| frames.iter().map(|f| f[k]).sum::<f64>() / n).collect();
    let var = (0..d).map(|k| frames.iter().map(|f| (f[k] - mean[k]).powi(2)).sum::<f64>() / n).collect();
    (mean, var)
}

#[test]
fn teacher_aggregate_of_fifty_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let frames: Vec<Vec<f64>> = (0..50).map(|_| (0..16).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let z = teacher_aggregate(&FrameEmbeddingSet::new(frames.clone()).unwrap());
    let (mean, var) = two_pass(&frames);
    for k in 0..16 {
        assert!((z.mu[k] - mean[k]).abs() < 1e-12);
        assert!((z.log_var[k].exp() - var[k] - TEACHER_VAR_FLOOR).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn match_prob_decreases_in_distance(d in 0.0f64..50.0, delta in 1e-3f64..5.0, a in 0.1f64..20.0, b in -5.0f64..5.0) {
        prop_assert!(match_prob(d + delta, a, b) <= match_prob(d, a, b));
    }

    #[test]
    fn csd_is_symmetric_and_bounded_below(seed in 0u64..1000, d in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_embedding(&mut rng, d), random_embedding(&mut rng, d));
        let ab = csd(&a, &b).unwrap();
        prop_assert_eq!(ab, csd(&b, &a).unwrap());
        let var_sum: f64 = a.variance().chain(b.variance()).sum();
        prop_assert!(ab >= var_sum - 1e-12);
    }

    #[test]
    fn combined_loss_is_convex_combination(l_et in 0.0f64..10.0, l_ee in 0.0f64..10.0, lambda in 0.0f64..=1.0) {
        let t = combined_loss(l_et, l_ee, lambda);
        prop_assert!(t >= l_et.min(l_ee) - 1e-12 && t <= l_et.max(l_ee) + 1e-12);
        prop_assert_eq!(combined_loss(l_et, l_ee, 1.0), l_et);
    }

    #[test]
    fn uncertainty_is_mean_variance(lv in prop::collection::vec(-10.0f64..10.0, 1..20)) {
        let z = ProbEmbedding::new(vec![0.0; lv.len()], lv.clone()).unwrap();
        let want = lv.iter().map(|v| v.exp()).sum::<f64>() / lv.len() as f64;
        prop_assert!((uncertainty_scalar(&z) - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn teacher_aggregate_matches_two_pass(seed in 0u64..1000, n in 1usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<Vec<f64>> = (0..n).map(|_| (0..16).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let z = teacher_aggregate(&FrameEmbeddingSet::new(frames.clone()).unwrap());
        let (mean, var) = two_pass(&frames);
        for k in 0..16 {
            prop_assert!((z.mu[k] - mean[k]).abs() < 1e-12);
            prop_assert!((z.log_var[k].exp() - var[k] - TEACHER_VAR_FLOOR).abs() < 1e-12);
        }
    }
}
