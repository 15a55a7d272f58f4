//! Subcommand implementations. All artifacts (CSV/JSON/binary) are
//! deterministic in content given identical inputs and seeds; terminal
//! output is informational only.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use fas_core::config::{FasConfig, Variant};
use fas_core::metrics::Metrics;
use fas_core::model::SampleData;
use fas_core::params::param_count;
use fas_core::synth::{generate_synthetic, stratified_split, SplitTag};
use fas_core::train::{evaluate, gradient_check, init_state, train, EpochRecord};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{io_err, CliError, Result};
use crate::feature_file::{read_feature_header, write_feature_file};
use crate::manifest::{load_manifest, load_split, save_manifest, Manifest, ManifestSample};
use crate::runconfig::{cell_key, cell_seed, RunConfigFile};

pub struct Ctx {
    pub out: PathBuf,
    pub quiet: bool,
}

impl Ctx {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn prepare_out(&self, rc: &RunConfigFile) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        let echo = rc.echo();
        let path = self.out.join("effective_config.json");
        std::fs::write(&path, echo.clone() + "\n").map_err(|e| io_err(&path, e))?;
        self.say("effective config:");
        self.say(&echo);
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serializing output: {e}")))
}

pub fn cmd_synth(rc: &RunConfigFile, ctx: &Ctx) -> Result<()> {
    rc.synth.validate()?;
    ctx.prepare_out(rc)?;
    let spec = &rc.synth;
    let dataset = generate_synthetic(spec)?;

    let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();
    let (tags, warnings) =
        stratified_split(&labels, spec.n_classes, spec.train_fraction, spec.seed)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let feat_dir = ctx.out.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| io_err(&feat_dir, e))?;
    let mut records = Vec::with_capacity(dataset.samples.len());
    for (sample, tag) in dataset.samples.iter().zip(&tags) {
        let aco_rel = format!("features/{}_aco.fasf", sample.id);
        let sem_rel = format!("features/{}_sem.fasf", sample.id);
        write_feature_file(&ctx.out.join(&aco_rel), &sample.aco)?;
        write_feature_file(&ctx.out.join(&sem_rel), &sample.sem)?;
        records.push(ManifestSample {
            id: sample.id.clone(),
            aco: aco_rel,
            sem: sem_rel,
            label: sample.label,
            split: *tag,
        });
    }
    let manifest = Manifest {
        name: "synthetic".to_string(),
        labels: dataset.labels.clone(),
        samples: records,
    };
    save_manifest(&ctx.out.join("manifest.json"), &manifest)?;

    for (c, name) in dataset.labels.iter().enumerate() {
        ctx.say(&format!(
            "class {name}: train={} test={}",
            manifest.count(c, SplitTag::Train),
            manifest.count(c, SplitTag::Test)
        ));
    }
    ctx.say(&format!(
        "wrote {} samples to {}",
        manifest.samples.len(),
        ctx.out.join("manifest.json").display()
    ));
    Ok(())
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,lr,eval_accuracy,eval_macro_f1\n");
    for r in history {
        let acc = r.eval_accuracy.map(|v| v.to_string()).unwrap_or_default();
        let f1 = r.eval_macro_f1.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.mean_loss, r.lr, acc, f1);
    }
    out
}

fn check_dims(cfg: &FasConfig, samples: &[SampleData]) -> Result<()> {
    if let Some(s) = samples.first() {
        if s.aco.cols() != cfg.d_aco_in || s.sem.cols() != cfg.d_sem_in {
            return Err(CliError::Incompatible(format!(
                "feature dims {}x{} (acoustic x semantic) do not match the configured {}x{}",
                s.aco.cols(),
                s.sem.cols(),
                cfg.d_aco_in,
                cfg.d_sem_in
            )));
        }
    }
    Ok(())
}

pub fn cmd_train(
    rc: &RunConfigFile,
    ctx: &Ctx,
    manifest_path: Option<&Path>,
    print_params: bool,
    resume: Option<&Path>,
) -> Result<()> {
    rc.validate()?;
    if print_params {
        println!("param_count={}", param_count(&rc.fas));
        return Ok(());
    }
    let manifest_path = manifest_path
        .ok_or_else(|| CliError::Data("--manifest is required to train".to_string()))?;
    ctx.prepare_out(rc)?;
    let (manifest, base) = load_manifest(manifest_path)?;
    let train_set = load_split(&manifest, &base, SplitTag::Train)?;
    let eval_set = load_split(&manifest, &base, SplitTag::Test)?;
    check_dims(&rc.fas, &train_set)?;

    let (mut state, cfg, tcfg) = match resume {
        Some(path) => load_checkpoint(path)?,
        None => (init_state(&rc.fas, &rc.train)?, rc.fas.clone(), rc.train.clone()),
    };
    if resume.is_some() && (cfg != rc.fas || tcfg != rc.train) {
        return Err(CliError::Incompatible(
            "checkpoint configs differ from the supplied run config; \
             resume with the original configuration"
                .to_string(),
        ));
    }

    let eval_ref = if eval_set.is_empty() { None } else { Some(eval_set.as_slice()) };
    let quiet = ctx.quiet;
    train(&mut state, &cfg, &tcfg, &train_set, eval_ref, None, |r| {
        if !quiet {
            match (r.eval_accuracy, r.eval_macro_f1) {
                (Some(a), Some(f)) => {
                    println!("epoch {} loss={:.6} lr={:.3e} acc={a:.4} f1={f:.4}", r.epoch, r.mean_loss, r.lr)
                }
                _ => println!("epoch {} loss={:.6} lr={:.3e}", r.epoch, r.mean_loss, r.lr),
            }
        }
    })?;

    save_checkpoint(&ctx.out.join("checkpoint.fasc"), &state, &cfg, &tcfg)?;
    write_text(&ctx.out.join("history.csv"), &history_csv(&state.history))?;
    write_text(&ctx.out.join("history.json"), &(to_json_pretty(&state.history)? + "\n"))?;
    ctx.say(&format!(
        "trained {} epochs ({} steps); checkpoint at {}",
        state.epoch,
        state.global_step,
        ctx.out.join("checkpoint.fasc").display()
    ));
    Ok(())
}

fn confusion_csv(metrics: &Metrics, labels: &[String]) -> String {
    let mut out = String::from("true\\pred");
    for l in labels {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for (i, row) in metrics.confusion.iter().enumerate() {
        let _ = write!(out, "{}", labels[i]);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_split(s: &str) -> Result<SplitTag> {
    match s {
        "train" => Ok(SplitTag::Train),
        "test" => Ok(SplitTag::Test),
        other => Err(CliError::Config(format!("unknown split '{other}' (train or test)"))),
    }
}

pub fn cmd_eval(ctx: &Ctx, checkpoint: &Path, manifest_path: &Path, split: SplitTag) -> Result<()> {
    let (state, cfg, tcfg) = load_checkpoint(checkpoint)?;
    let (manifest, base) = load_manifest(manifest_path)?;
    if manifest.labels.len() != cfg.n_classes {
        return Err(CliError::Incompatible(format!(
            "manifest has {} labels but the checkpoint was trained for {} classes",
            manifest.labels.len(),
            cfg.n_classes
        )));
    }
    let set = load_split(&manifest, &base, split)?;
    if set.is_empty() {
        return Err(CliError::Data("selected split is empty".to_string()));
    }
    check_dims(&cfg, &set)?;

    let metrics = evaluate(&state.params, &cfg, &set, tcfg.seed)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| io_err(&ctx.out, e))?;
    write_text(&ctx.out.join("metrics.json"), &(to_json_pretty(&metrics)? + "\n"))?;
    write_text(&ctx.out.join("confusion.csv"), &confusion_csv(&metrics, &manifest.labels))?;
    println!("acc={} f1={}", metrics.accuracy, metrics.macro_f1);
    Ok(())
}

pub fn cmd_gradcheck(rc: &RunConfigFile, ctx: &Ctx) -> Result<()> {
    rc.fas.validate()?;
    if rc.fas.d > 8 {
        return Err(CliError::Config(format!(
            "gradcheck requires d <= 8 (finite differences are intractable beyond that), got {}",
            rc.fas.d
        )));
    }
    let mut failures = Vec::new();
    for variant in Variant::ALL {
        let cfg = FasConfig { variant, ..rc.fas.clone() };
        let report = gradient_check(&cfg, rc.train.seed, 1e-5, 400, 1e-4)?;
        ctx.say(&format!(
            "variant={} checked={} max_rel_err={:.3e} worst={}[{}]",
            variant.name(),
            report.checked,
            report.max_rel_err,
            report.worst_param,
            report.worst_entry
        ));
        if !report.passed {
            failures.push(format!(
                "{}: max relative error {:.3e} at {}[{}] exceeds 1e-4",
                variant.name(),
                report.max_rel_err,
                report.worst_param,
                report.worst_entry
            ));
        }
    }
    if !failures.is_empty() {
        return Err(CliError::GradCheck(failures.join("; ")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    variant: String,
    k_aco: usize,
    k_sem: usize,
    n_q: usize,
    param_count: usize,
    accuracy: Option<f64>,
    macro_f1: Option<f64>,
    status: String,
}

fn run_cell(
    cfg: &FasConfig,
    rc: &RunConfigFile,
    train_set: &[SampleData],
    eval_set: &[SampleData],
) -> Result<Metrics> {
    cfg.validate()?;
    let key = cell_key(cfg);
    let tcfg =
        fas_core::train::TrainConfig { seed: cell_seed(rc.train.seed, &key), ..rc.train.clone() };
    let mut state = init_state(cfg, &tcfg)?;
    train(&mut state, cfg, &tcfg, train_set, None, None, |_| {})?;
    Ok(evaluate(&state.params, cfg, eval_set, tcfg.seed)?)
}

pub fn cmd_sweep(rc: &RunConfigFile, ctx: &Ctx, manifest_path: &Path) -> Result<()> {
    rc.validate()?;
    ctx.prepare_out(rc)?;
    let (manifest, base) = load_manifest(manifest_path)?;
    let train_set = load_split(&manifest, &base, SplitTag::Train)?;
    let eval_set = load_split(&manifest, &base, SplitTag::Test)?;
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(CliError::Data("sweep needs nonempty train and test splits".to_string()));
    }

    let cells = rc.sweep_cells();
    let mut rows = Vec::with_capacity(cells.len());
    let mut ok = 0usize;
    for cfg in &cells {
        let started = Instant::now();
        let result = run_cell(cfg, rc, &train_set, &eval_set);
        // wall time is terminal-only so reruns produce byte-identical files
        let elapsed = started.elapsed().as_secs_f64();
        let mut row = SweepRow {
            variant: cfg.variant.name().to_string(),
            k_aco: cfg.k_aco,
            k_sem: cfg.k_sem,
            n_q: cfg.n_q,
            param_count: param_count(cfg),
            accuracy: None,
            macro_f1: None,
            status: "ok".to_string(),
        };
        match result {
            Ok(m) => {
                row.accuracy = Some(m.accuracy);
                row.macro_f1 = Some(m.macro_f1);
                ok += 1;
                ctx.say(&format!(
                    "{} acc={:.4} f1={:.4} ({elapsed:.1}s)",
                    cell_key(cfg),
                    m.accuracy,
                    m.macro_f1
                ));
            }
            Err(e) => {
                row.status = format!("failed: {e}");
                ctx.say(&format!("{} FAILED: {e} ({elapsed:.1}s)", cell_key(cfg)));
            }
        }
        rows.push(row);
    }

    let mut csv = String::from("variant,k_aco,k_sem,n_q,param_count,accuracy,macro_f1,status\n");
    for r in &rows {
        let acc = r.accuracy.map(|v| v.to_string()).unwrap_or_default();
        let f1 = r.macro_f1.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            r.k_aco,
            r.k_sem,
            r.n_q,
            r.param_count,
            acc,
            f1,
            r.status.replace(',', ";")
        );
    }
    write_text(&ctx.out.join("sweep.csv"), &csv)?;
    write_text(&ctx.out.join("sweep.json"), &(to_json_pretty(&rows)? + "\n"))?;

    if ok == 0 {
        return Err(CliError::SweepAllFailed(format!("all {} cells failed", rows.len())));
    }
    Ok(())
}

pub fn cmd_inspect(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"FASF") {
        let h = read_feature_header(path)?;
        println!("stream={} frames={} dim={}", h.kind.name(), h.frames, h.dim);
        return Ok(());
    }
    if bytes.starts_with(b"FASC") {
        let (state, cfg, _) = load_checkpoint(path)?;
        println!(
            "variant={} d={} epoch={} params={}",
            cfg.variant.name(),
            cfg.d,
            state.epoch,
            state.params.scalar_count()
        );
        return Ok(());
    }
    if let Ok(manifest) = serde_json::from_slice::<Manifest>(&bytes) {
        let train = manifest.samples.iter().filter(|s| s.split == SplitTag::Train).count();
        println!(
            "manifest name={} labels={} samples={} train={} test={}",
            manifest.name,
            manifest.labels.len(),
            manifest.samples.len(),
            train,
            manifest.samples.len() - train
        );
        return Ok(());
    }
    Err(CliError::Config(format!(
        "{}: unrecognized format (expected magic \"FASF\", \"FASC\", or a JSON manifest)",
        path.display()
    )))
}
