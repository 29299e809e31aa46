use std::fs;
use std::path::{Path, PathBuf};

use pxm_core::autodiff::load_checkpoint;
use pxm_core::eval::{
    ablation_run, config_hash, embed_cohort, evaluate_probe, evaluate_retrieval, evaluate_zeroshot, holdout_split,
    select_window, trace_csv, EvalReport, PromptSet, ReportMeta,
};
use pxm_core::exec::Parallelism;
use pxm_core::models::Model;
use pxm_core::signal::KorsMatrix;
use pxm_core::synthdata::{generate_cohort_with, load_cohort, write_cohort, Cohort};
use pxm_core::train::{fit, LossVariant, RunConfig, BEST_CHECKPOINT, FINAL_CHECKPOINT, METRICS_CSV};

use crate::failure::Failure;
use crate::manifest::{RunManifest, RUN_MANIFEST};
use crate::{EvalArgs, SynthArgs, Task, TrainArgs};

pub const KORS_ENV: &str = "PXM_KORS_MATRIX";

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    })
}

fn kors_matrix() -> Result<KorsMatrix, Failure> {
    match std::env::var_os(KORS_ENV) {
        Some(p) => Ok(KorsMatrix::from_csv(Path::new(&p))?),
        None => Ok(KorsMatrix::default()),
    }
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn write_file(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        create_out(parent)?;
    }
    fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, variant: Option<&str>, lambda: Option<f64>) -> Result<(), Failure> {
    if let Some(v) = variant {
        cfg.train.loss_variant = v.parse()?;
    }
    if let Some(l) = lambda {
        cfg.train.lambda = l;
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.cohort.seed = seed;
    }
    cfg.cohort.validate()?;
    let cohort = generate_cohort_with(&cfg.cohort, &kors_matrix()?, Parallelism::Auto)?;
    create_out(&a.out)?;
    let written = write_cohort(&a.out, &cohort)?;
    let mut m = RunManifest::new("synth", a.config.as_deref(), cfg.clone(), cfg.cohort.seed, &a.out);
    if let Some(p) = std::env::var_os(KORS_ENV) {
        m.arg("kors_matrix", Path::new(&p).display());
    }
    m.hash_artifacts(&written)?;
    m.write()?;
    println!("wrote {} samples to {}", cohort.len(), a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), Failure> {
    let mut cfg = load_config(a.config.as_deref())?;
    apply_overrides(&mut cfg, a.loss_variant.as_deref(), a.lambda)?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    let cohort = load_cohort(&a.cohort)?;
    cfg.cohort = cohort.config.clone();
    let out = fit(&cohort, &cfg, Some(&a.out))?;
    let mut epoch = 0;
    for r in &out.metrics {
        if r.epoch != epoch {
            epoch = r.epoch;
            let rows: Vec<_> = out.metrics.iter().filter(|m| m.epoch == epoch).collect();
            let n = rows.len() as f64;
            let mean = |f: fn(&pxm_core::train::StepRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            println!(
                "epoch {epoch:>3}  L_et {:.5}  L_ee {:.5}  L_total {:.5}",
                mean(|r| r.values.l_et),
                mean(|r| r.values.l_ee),
                mean(|r| r.values.l_total)
            );
        }
    }
    let mut m = RunManifest::new("train", a.config.as_deref(), cfg.clone(), cfg.train.seed, &a.out);
    m.arg("cohort", a.cohort.display());
    m.arg("best_epoch", out.best_epoch);
    let written: Vec<PathBuf> = [METRICS_CSV, FINAL_CHECKPOINT, BEST_CHECKPOINT].iter().map(|f| a.out.join(f)).collect();
    m.hash_artifacts(&written)?;
    m.write()?;
    println!("best epoch {}; checkpoints in {}", out.best_epoch, a.out.display());
    Ok(())
}

/// `--config`, else the run manifest beside the checkpoint, else defaults.
fn eval_config(a: &EvalArgs) -> Result<(RunConfig, Option<PathBuf>), Failure> {
    if let Some(p) = &a.config {
        return Ok((RunConfig::from_file(p)?, Some(p.clone())));
    }
    if let Some(ck) = &a.checkpoint {
        let beside = ck.parent().unwrap_or(Path::new(".")).join(RUN_MANIFEST);
        if beside.is_file() {
            let cfg = RunManifest::read(&beside)?.config;
            cfg.validate()?;
            return Ok((cfg, Some(beside)));
        }
    }
    Ok((RunConfig::default(), None))
}

fn load_model(a: &EvalArgs, cfg: &RunConfig) -> Result<Model, Failure> {
    let path = a.checkpoint.as_ref().ok_or_else(|| Failure::usage("--checkpoint is required for this task"))?;
    let mut model = Model::init(&cfg.model, cfg.train.seed)?;
    model.load(&load_checkpoint(path)?)?;
    Ok(model)
}

fn report_files(report: &EvalReport, out: &Path, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    write_file(out.join(format!("{}_report.csv", report.task)), &report.to_csv(), written)?;
    write_file(out.join(format!("{}_report.txt", report.task)), &report.to_table(), written)?;
    print!("{}", report.to_table());
    Ok(())
}

fn window_task(cohort: &Cohort, model: &Model, a: &EvalArgs, par: Parallelism, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let mut summary = String::from("id,window_index,window_offset_s,uncertainty,burst_excluded\n");
    let mut excluded = (0usize, 0usize);
    let win_s = model.config.ecg.samples as f64 / pxm_core::train::TARGET_FS;
    for s in &cohort.samples {
        let sel = select_window(&s.signal, model, a.stride, par)?;
        write_file(a.out.join("traces").join(format!("trace_{:05}.csv", s.id)), &trace_csv(&sel.trace), written)?;
        let flag = match &s.burst {
            Some(b) => {
                let ok = !b.overlaps(sel.offset_s, sel.offset_s + win_s);
                excluded.0 += usize::from(ok);
                excluded.1 += 1;
                ok.to_string()
            }
            None => String::new(),
        };
        summary.push_str(&format!("{},{},{},{},{flag}\n", s.id, sel.index, sel.offset_s, sel.trace[sel.index].1));
    }
    write_file(a.out.join("window_selection.csv"), &summary, written)?;
    println!("selected windows for {} records", cohort.len());
    if excluded.1 > 0 {
        println!("burst excluded in {}/{} records", excluded.0, excluded.1);
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let (mut cfg, cfg_path) = eval_config(a)?;
    apply_overrides(&mut cfg, a.loss_variant.as_deref(), a.lambda)?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    if a.k == 0 {
        return Err(Failure::usage("--k must be at least 1"));
    }
    if !(a.stride > 0.0) {
        return Err(Failure::usage("--stride must be positive"));
    }
    let par = Parallelism::from_workers(a.workers);
    let cohort = load_cohort(&a.cohort)?;
    create_out(&a.out)?;
    let meta = ReportMeta { seed: cfg.train.seed, config_hash: config_hash(&cfg)? };
    let mut written = Vec::new();
    match a.task {
        Task::Zeroshot => {
            let model = load_model(a, &cfg)?;
            let emb = embed_cohort(&model, &cohort, par)?;
            let prompts = PromptSet::for_cohort(&cohort.config)?.embed(&model, par)?;
            report_files(&evaluate_zeroshot(&emb, &prompts, &meta)?, &a.out, &mut written)?;
        }
        Task::Probe => {
            let model = load_model(a, &cfg)?;
            let (train_idx, test_idx) = holdout_split(cohort.len(), cfg.eval.probe_test_fraction, meta.seed)?;
            let train = embed_cohort(&model, &cohort.subset(&train_idx), par)?;
            let test = embed_cohort(&model, &cohort.subset(&test_idx), par)?;
            let report = evaluate_probe(&train, &test, cfg.eval.few_shot_fraction, &cfg.eval.probe, &meta)?;
            report_files(&report, &a.out, &mut written)?;
        }
        Task::Retrieve => {
            let model = load_model(a, &cfg)?;
            let emb = embed_cohort(&model, &cohort, par)?;
            report_files(&evaluate_retrieval(&emb, a.k, &meta)?, &a.out, &mut written)?;
        }
        Task::Window => {
            let model = load_model(a, &cfg)?;
            window_task(&cohort, &model, a, par, &mut written)?;
        }
        Task::Ablate => {
            let (train_idx, test_idx) = holdout_split(cohort.len(), cfg.eval.ablation_test_fraction, meta.seed)?;
            let variants = match &a.loss_variant {
                Some(v) => vec![v.parse::<LossVariant>()?],
                None => LossVariant::ALL.to_vec(),
            };
            let mut base = cfg.clone();
            base.cohort = cohort.config.clone();
            let out = ablation_run(
                &cohort.subset(&train_idx),
                &cohort.subset(&test_idx),
                &base,
                &variants,
                &cfg.eval.ablation_seeds,
                par,
            )?;
            write_file(a.out.join("ablation.csv"), &out.table.to_csv(), &mut written)?;
            write_file(a.out.join("ablation.txt"), &out.table.to_table(), &mut written)?;
            print!("{}", out.table.to_table());
        }
    }
    let mut m = RunManifest::new("eval", cfg_path.as_deref(), cfg.clone(), meta.seed, &a.out);
    m.arg("cohort", a.cohort.display());
    m.arg("task", format!("{:?}", a.task).to_lowercase());
    if let Some(c) = &a.checkpoint {
        m.arg("checkpoint", c.display());
    }
    m.arg("k", a.k);
    m.arg("stride", a.stride);
    m.arg("workers", a.workers);
    m.hash_artifacts(&written)?;
    m.write()?;
    Ok(())
}
