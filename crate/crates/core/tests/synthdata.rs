use proptest::prelude::*;
use pxm_core::exec::Parallelism;
use pxm_core::signal::KorsMatrix;
use pxm_core::synthdata::{
    generate_cohort, generate_cohort_with, label_lvef, load_cohort, teacher_centroid_accuracy, write_cohort, ClassModel,
    CohortConfig,
};

fn small(classes: usize) -> CohortConfig {
    CohortConfig { classes, samples_per_class: 6, teacher_dim: 32, teacher_frames: 8, ..Default::default() }
}

fn nearest_mean_accuracy(frames: &[(usize, Vec<f64>)], classes: usize) -> f64 {
    let d = frames[0].1.len();
    let mut means = vec![vec![0.0; d]; classes];
    let mut counts = vec![0.0; classes];
    for (c, f) in frames {
        for k in 0..d {
            means[*c][k] += f[k];
        }
        counts[*c] += 1.0;
    }
    for c in 0..classes {
        means[c].iter_mut().for_each(|v| *v /= counts[c]);
    }
    let hits = frames
        .iter()
        .filter(|(c, f)| {
            let dist = |m: &Vec<f64>| m.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            (0..classes).all(|k| k == *c || dist(&means[*c]) < dist(&means[k]))
        })
        .count();
    hits as f64 / frames.len() as f64
}

#[test]
fn same_seed_same_cohort_under_any_parallelism() {
    let cfg = small(3);
    let k = KorsMatrix::default();
    let a = generate_cohort_with(&cfg, &k, Parallelism::Sequential).unwrap();
    let b = generate_cohort_with(&cfg, &k, Parallelism::Auto).unwrap();
    assert_eq!(a, b);
    let c = generate_cohort(&CohortConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.samples[0].signal, c.samples[0].signal);
}

#[test]
fn two_class_teacher_directions_are_nearly_orthogonal() {
    let m = ClassModel::new(&small(2));
    let (u, v) = (&m.teacher_directions[0], &m.teacher_directions[1]);
    let cos = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    assert!(cos.abs() <= 0.1, "{cos}");
}

#[test]
fn teacher_frames_are_separable_by_class_mean() {
    let cohort = generate_cohort(&CohortConfig { samples_per_class: 16, ..Default::default() }).unwrap();
    let frames: Vec<(usize, Vec<f64>)> =
        cohort.samples.iter().flat_map(|s| s.frames.frames().iter().map(move |f| (s.label, f.clone()))).collect();
    let acc = nearest_mean_accuracy(&frames, cohort.config.classes);
    assert!(acc >= 0.95, "{acc}");
    assert!((teacher_centroid_accuracy(&cohort) - acc).abs() < 1e-12);
}

#[test]
fn lvef_prevalence_follows_class_proportions() {
    let cfg = CohortConfig { classes: 5, low_lvef_classes: Some(vec![0, 3]), samples_per_class: 4, ..small(5) };
    let cohort = generate_cohort(&cfg).unwrap();
    let low = cohort.samples.iter().filter(|s| s.lvef == 1).count();
    assert_eq!(low as f64 / cohort.len() as f64, 2.0 / 5.0);
    assert_eq!(label_lvef(0, &cfg).unwrap(), 1);
    assert_eq!(label_lvef(4, &cfg).unwrap(), 0);
    assert!(label_lvef(5, &cfg).is_err());
}

#[test]
fn cohort_survives_a_disk_round_trip() {
    let cohort = generate_cohort(&small(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_cohort(dir.path(), &cohort).unwrap();
    assert!(dir.path().join("manifest.json").exists());
    assert_eq!(load_cohort(dir.path()).unwrap(), cohort);
}

#[test]
fn long_records_have_a_window_without_the_pattern() {
    let cfg = CohortConfig { duration_s: 30.0, event_rate: 0.5, ..small(4) };
    for s in generate_cohort(&cfg).unwrap().samples {
        assert_eq!(s.pattern_windows.len(), 3);
        assert!(s.pattern_windows.iter().any(|p| !p));
    }
}

#[test]
fn noise_grades_cycle_through_three_strata() {
    let cohort = generate_cohort(&small(2)).unwrap();
    for s in &cohort.samples {
        assert!([0.0, 0.1, 0.3].contains(&s.noise_grade));
        assert_eq!(s.signal.lead_count(), 12);
        assert!(s.label < 2);
    }
}

fn frame_variance(jitter: f64) -> f64 {
    let cohort = generate_cohort(&CohortConfig { teacher_jitter: jitter, ..small(2) }).unwrap();
    let mut total = 0.0;
    for s in &cohort.samples {
        let f = s.frames.frames();
        let n = f.len() as f64;
        for k in 0..f[0].len() {
            let m = f.iter().map(|r| r[k]).sum::<f64>() / n;
            total += f.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn teacher_variance_grows_with_jitter(a in 0.01f64..0.5, step in 0.05f64..0.5) {
        prop_assert!(frame_variance(a) < frame_variance(a + step));
    }
}
