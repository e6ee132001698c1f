use std::io::Write;
use std::path::{Path, PathBuf};

use dualseg::gradsuite::{block_suite, full_model_check, primitive_suite, SuiteEntry};
use dualseg::io::{read_labels, read_volume, write_labels, write_volume};
use dualseg::metrics::{aggregate, evaluate_all, parse_key_values, FoldSummary};
use dualseg::training::{
    holdout_fold, loso_folds, read_checkpoint, resume_checkpoint, save_checkpoint, segment, Fold, FoldSpec,
    Subject, Trainer,
};
use dualseg::volume::{synth_phantom, LabelMap, LabelVolume, Volume};

use crate::config::RunConfig;
use crate::dataset::{image_path, label_path, scan, SubjectFiles};
use crate::error::{io_error, CliError, CliResult};
use crate::{Command, EvaluateArgs, GradcheckArgs, InferArgs, LosoArgs, ReportArgs, SynthArgs, TrainArgs};

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.dsa";
pub const LOSS_FILE: &str = "loss.txt";
pub const METRICS_TABLE: &str = "metrics.txt";
pub const METRICS_KV: &str = "metrics.kv";
pub const PREDICTIONS_DIR: &str = "predictions";

pub fn run(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(&a, out),
        Command::Train(a) => train(&a, out),
        Command::Infer(a) => infer(&a, out),
        Command::Evaluate(a) => evaluate(&a, out),
        Command::Gradcheck(a) => gradcheck(&a, out),
        Command::Loso(a) => loso(&a, out),
        Command::Report(a) => report(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn labelmap_arg(text: &Option<String>) -> CliResult<LabelMap> {
    match text {
        Some(t) => t.parse().map_err(|e: dualseg::Error| CliError::Usage(format!("--labelmap: {e}"))),
        None => Ok(LabelMap::default()),
    }
}

fn synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let map = labelmap_arg(&a.labelmap)?;
    if map.classes() != 4 {
        return Err(CliError::Usage(format!(
            "phantoms have 4 classes, --labelmap has {}",
            map.classes()
        )));
    }
    create_dir(&a.out)?;
    let ext = a.format.extension();
    for i in 0..a.count {
        let id = format!("subject{i:02}");
        let (v, l) = synth_phantom(a.seed + i as u64, [a.size; 3], a.noise)?;
        write_volume(&image_path(&a.out, &id, ext), &v)?;
        write_labels(&label_path(&a.out, &id, ext), &l, &map)?;
        emit(out, &format!("wrote {id} seed={} extents={:?}\n", a.seed + i as u64, [a.size; 3]))?;
    }
    Ok(())
}

/// A dataset subject read from disk, kept for training and evaluation.
struct Loaded {
    files: SubjectFiles,
    volume: Volume,
    labels: LabelVolume,
    subject: Subject,
}

fn load_all(files: Vec<SubjectFiles>, map: &LabelMap) -> CliResult<Vec<Loaded>> {
    files
        .into_iter()
        .map(|f| {
            let (volume, labels) = f.load(map)?;
            let subject = Subject::new(f.id.clone(), &volume, labels.clone())?;
            Ok(Loaded {
                files: f,
                volume,
                labels,
                subject,
            })
        })
        .collect()
}

fn find<'a>(data: &'a [Loaded], id: &str) -> &'a Loaded {
    data.iter().find(|d| d.files.id == id).expect("fold subjects come from the dataset")
}

/// Trains one fold into `dir` and evaluates its validation subjects.
fn run_fold(
    cfg: &RunConfig,
    data: &[Loaded],
    fold: &Fold,
    dir: &Path,
    resume: Option<&Path>,
    tag: &str,
) -> CliResult<Vec<FoldSummary>> {
    create_dir(dir)?;
    write_file(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    let train: Vec<Subject> = fold.train.iter().map(|id| find(data, id).subject.clone()).collect();
    let mut trainer = match resume {
        Some(path) => resume_checkpoint(path, &cfg.model, &cfg.train)?,
        None => Trainer::new(cfg.model.clone(), cfg.train.clone())?,
    };
    let until = cfg.train.iterations;
    let mut periodic: Option<dualseg::Error> = None;
    let (log_every, ckpt_every) = (cfg.log_every, cfg.checkpoint_every);
    while trainer.iteration < until {
        let loss = trainer.step_sampled(&train)?;
        let it = trainer.iteration;
        if log_every > 0 && (it % log_every == 0 || it == until) {
            eprintln!("{tag}iteration {it} loss {loss:.6}");
        }
        if ckpt_every > 0 && it % ckpt_every == 0 && it < until {
            if let Err(e) = save_checkpoint(&trainer, &dir.join(CHECKPOINT_FILE)) {
                periodic = Some(e);
                break;
            }
        }
    }
    if let Some(e) = periodic {
        return Err(e.into());
    }
    save_checkpoint(&trainer, &dir.join(CHECKPOINT_FILE))?;
    write_file(&dir.join(LOSS_FILE), &trainer.loss_trace_text())?;

    let preds = dir.join(PREDICTIONS_DIR);
    create_dir(&preds)?;
    let fold_name = fold.index.to_string();
    let mut summaries = Vec::new();
    let mut table = String::new();
    let mut kv = String::new();
    for id in &fold.validation {
        let d = find(data, id);
        let pred = segment(&d.volume, &trainer.params, &cfg.model, cfg.train.patch_size, cfg.eval_stride)?;
        let ext = d.files.image.extension().and_then(|e| e.to_str()).unwrap_or("nii");
        write_labels(&label_path(&preds, id, ext), &pred, &cfg.labelmap)?;
        let report = evaluate_all(&pred, &d.labels, cfg.labelmap.names())?;
        table.push_str(&format!("subject {id}\n{}", report.to_table()));
        kv.push_str(&report.to_key_values(&fold_name, id));
        summaries.push(FoldSummary {
            fold: fold_name.clone(),
            subject: id.clone(),
            report,
        });
    }
    write_file(&dir.join(METRICS_TABLE), &table)?;
    write_file(&dir.join(METRICS_KV), &kv)?;
    Ok(summaries)
}

fn prepare(config: &crate::ConfigArgs, data_dir: &Path) -> CliResult<(RunConfig, Vec<Loaded>)> {
    let cfg = RunConfig::resolve(config.config.as_deref(), &config.overrides)?;
    let files = scan(data_dir)?;
    let data = load_all(files, &cfg.labelmap)?;
    if let Some(d) = data.iter().find(|d| d.volume.modalities() != cfg.model.modalities) {
        return Err(CliError::Data(format!(
            "subject `{}` has {} modalities, model.modalities is {}",
            d.files.id,
            d.volume.modalities(),
            cfg.model.modalities
        )));
    }
    Ok((cfg, data))
}

fn ids(data: &[Loaded]) -> Vec<String> {
    data.iter().map(|d| d.files.id.clone()).collect()
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let (cfg, data) = prepare(&a.config, &a.data)?;
    let subjects = ids(&data);
    let spec: FoldSpec = match a.fold {
        Some(k) => {
            let mut spec = loso_folds(&subjects)?;
            if k >= spec.folds.len() {
                return Err(CliError::Usage(format!(
                    "--fold {k} is out of range for {} subjects",
                    spec.folds.len()
                )));
            }
            let fold = spec.folds.swap_remove(k);
            FoldSpec {
                subjects: spec.subjects,
                folds: vec![fold],
            }
        }
        None if !cfg.holdout.is_empty() => holdout_fold(&subjects, &cfg.holdout)?,
        None => {
            return Err(CliError::Usage(
                "train needs --fold or a run.holdout list of validation subjects".into(),
            ))
        }
    };
    let fold = &spec.folds[0];
    let summaries = run_fold(&cfg, &data, fold, &a.out, a.resume.as_deref(), "")?;
    for s in &summaries {
        emit(out, &format!("fold {} subject {}\n{}", s.fold, s.subject, s.report.to_table()))?;
    }
    Ok(())
}

fn loso(a: &LosoArgs, out: &mut dyn Write) -> CliResult<()> {
    let (cfg, data) = prepare(&a.config, &a.data)?;
    let spec = loso_folds(&ids(&data))?;
    create_dir(&a.out)?;
    write_file(&a.out.join(CONFIG_FILE), &cfg.to_text())?;
    let dir = |f: &Fold| a.out.join(format!("fold{}", f.index));
    let tag = |f: &Fold| format!("fold {}: ", f.index);
    let results: Vec<CliResult<Vec<FoldSummary>>> = if a.parallel_folds {
        dualseg::par::map_slice(&spec.folds, |f| run_fold(&cfg, &data, f, &dir(f), None, &tag(f)))
    } else {
        spec.folds.iter().map(|f| run_fold(&cfg, &data, f, &dir(f), None, &tag(f))).collect()
    };
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    let (table, kv) = aggregate(&cfg.model_name, &all);
    write_file(&a.out.join("report.txt"), &table)?;
    write_file(&a.out.join("report.kv"), &kv)?;
    emit(out, &table)
}

fn infer(a: &InferArgs, out: &mut dyn Write) -> CliResult<()> {
    let trainer = read_checkpoint(&a.checkpoint)?;
    let map = labelmap_arg(&a.labelmap)?;
    if map.classes() != trainer.model.classes {
        return Err(CliError::Usage(format!(
            "--labelmap has {} classes, the checkpoint model has {}",
            map.classes(),
            trainer.model.classes
        )));
    }
    if a.stride == 0 {
        return Err(CliError::Usage("--stride must be at least 1".into()));
    }
    let volume = read_volume(&a.input)?;
    if volume.modalities() != trainer.model.modalities {
        return Err(CliError::Data(format!(
            "{} has {} modalities, the checkpoint model has {}",
            a.input.display(),
            volume.modalities(),
            trainer.model.modalities
        )));
    }
    let pred = segment(&volume, &trainer.params, &trainer.model, trainer.train.patch_size, a.stride)?;
    write_labels(&a.out, &pred, &map)?;
    emit(out, &format!("wrote {} extents={:?}\n", a.out.display(), pred.extents))
}

fn evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> CliResult<()> {
    let map = labelmap_arg(&a.labelmap)?;
    let pred = read_labels(&a.pred, &map)?;
    let reference = read_labels(&a.reference, &map)?;
    let report = evaluate_all(&pred, &reference, map.names())?;
    let subject = a
        .reference
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.trim_end_matches(crate::dataset::LABEL_SUFFIX).to_string())
        .unwrap_or_else(|| "subject".into());
    let table = report.to_table();
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join(METRICS_TABLE), &table)?;
        write_file(&dir.join(METRICS_KV), &report.to_key_values("0", &subject))?;
    }
    emit(out, &table)
}

fn entry_line(group: &str, e: &SuiteEntry) -> String {
    format!(
        "{group:<9} {:<28} max_rel_error={:.3e} tolerance={:.0e} seeds={} probes={} kinks={} {}\n",
        e.name,
        e.max_rel_error,
        e.tolerance,
        e.seeds,
        e.probes,
        e.kinks,
        if e.passed() { "PASS" } else { "FAIL" }
    )
}

fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.seeds == 0 || a.probes == 0 {
        return Err(CliError::Usage("--seeds and --probes must be at least 1".into()));
    }
    let mut failed = Vec::new();
    let mut show = |group: &str, entries: &[SuiteEntry], out: &mut dyn Write| -> CliResult<()> {
        for e in entries {
            if !e.passed() {
                failed.push(e.name.clone());
            }
            emit(out, &entry_line(group, e))?;
        }
        Ok(())
    };
    show("primitive", &primitive_suite(a.seeds, a.probes)?, out)?;
    show("block", &block_suite(a.seeds, a.probes)?, out)?;
    if a.full_model {
        show("model", &[full_model_check(a.seeds, a.probes)?], out)?;
    }
    if failed.is_empty() {
        emit(out, "gradcheck passed\n")
    } else {
        Err(CliError::Data(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn report(a: &ReportArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut all = Vec::new();
    for dir in &a.folds {
        let path: PathBuf = if dir.is_dir() { dir.join(METRICS_KV) } else { dir.clone() };
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let rows = parse_key_values(&text)?;
        if rows.is_empty() {
            return Err(CliError::Data(format!("{} holds no fold metrics", path.display())));
        }
        all.extend(rows);
    }
    let (table, kv) = aggregate(&a.model, &all);
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join("report.txt"), &table)?;
        write_file(&dir.join("report.kv"), &kv)?;
    }
    emit(out, &table)
}
