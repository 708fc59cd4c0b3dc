use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use higru::data::{build_vocab, EmbeddingMatrix, RawDialogue};
use higru::fsutil::write_atomic;
use higru::optim::{evaluate, train_loop, EpochRecord};
use higru::rng::{stream, Stream};
use higru::{
    load_corpus_jsonl, load_embeddings, Checkpoint, CheckpointMeta, Corpus, HiGru, LabelScheme,
    ModelConfig, SelectMetric, Split, TrainConfig, TrainOutcome, Vocabulary,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{EvalArgs, SweepArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::settings::{model_config, train_config, FileConfig, Paths};

/// Loss-weight exponents tried by `sweep-alpha`.
pub const ALPHA_GRID: [f64; 7] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5];

struct Prepared {
    paths: Paths,
    scheme: LabelScheme,
    vocab: Vocabulary,
    train: Corpus,
    val: Corpus,
    test: Option<Corpus>,
    embeddings: EmbeddingMatrix,
    model: ModelConfig,
    optim: TrainConfig,
    out: PathBuf,
}

fn raw(path: &Path) -> CliResult<Vec<RawDialogue>> {
    Ok(load_corpus_jsonl(path)?)
}

fn prepare(args: &TrainArgs) -> CliResult<Prepared> {
    let file = FileConfig::load(args.paths.config.as_deref())?;
    let paths = Paths::merge(&args.paths, &file);
    let train_path = Paths::require(&paths.train, "train")?.to_path_buf();
    let val_path = Paths::require(&paths.val, "val")?.to_path_buf();
    let scheme_path = Paths::require(&paths.scheme, "scheme")?.to_path_buf();
    let out = Paths::require(&paths.out, "out")?.to_path_buf();
    let mut model = model_config(&args.model, &file)?;
    let optim = train_config(&args.optim, &file)?;

    let scheme = LabelScheme::load(&scheme_path)?;
    let train_raw = raw(&train_path)?;
    let vocab = build_vocab(&train_raw)?;
    let train = Corpus::encode(&train_raw, &vocab, &scheme, Split::Train, &train_path)?;
    let val = Corpus::encode(&raw(&val_path)?, &vocab, &scheme, Split::Val, &val_path)?;
    let test = match &paths.test {
        Some(p) => Some(Corpus::encode(&raw(p)?, &vocab, &scheme, Split::Test, p)?),
        None => None,
    };
    model.num_classes = scheme.num_classes();
    model.vocab_size = vocab.len();
    model
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut rng = stream(optim.seed, Stream::Embeddings);
    let embeddings = match &paths.embeddings {
        Some(p) => load_embeddings(p, &vocab, model.d0, &mut rng)?,
        None => EmbeddingMatrix::random(&vocab, model.d0, &mut rng),
    };
    Ok(Prepared {
        paths,
        scheme,
        vocab,
        train,
        val,
        test,
        embeddings,
        model,
        optim,
        out,
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn progress(tag: &str, r: &EpochRecord) {
    eprintln!(
        "{tag}epoch {:>3}  loss {:.4}  val WA {:.4}  UWA {:.4}  lr {:e}  clipped {:.2}",
        r.epoch, r.train_loss, r.val_wa, r.val_uwa, r.lr, r.clipped_fraction
    );
}

fn fit(p: &Prepared, alpha: f64, quiet: bool, tag: &str) -> CliResult<TrainOutcome> {
    let cfg = TrainConfig {
        alpha,
        ..p.optim.clone()
    };
    let model = HiGru::new(
        p.model.clone(),
        Some(&p.embeddings),
        &mut stream(cfg.seed, Stream::Init),
    )?;
    let on_epoch = |r: &EpochRecord| {
        if !quiet {
            progress(tag, r);
        }
    };
    Ok(train_loop(
        model, &p.train, &p.val, &p.scheme, &cfg, on_epoch,
    )?)
}

fn checkpoint_of(p: &Prepared, outcome: &TrainOutcome, alpha: f64) -> Checkpoint {
    let meta = CheckpointMeta {
        vocab: p.vocab.tokens().to_vec(),
        scheme: Some(p.scheme.clone()),
        alpha: Some(alpha),
        epoch: Some(outcome.best_epoch),
    };
    Checkpoint::from_model(&outcome.model, meta)
}

fn write_reports(
    dir: &Path,
    stem: &str,
    model: &HiGru,
    corpus: &Corpus,
    scheme: &LabelScheme,
) -> CliResult<()> {
    let cm = evaluate(model, corpus, scheme)?;
    write_text(&dir.join(format!("{stem}.txt")), &cm.report_text(scheme)?)?;
    write_text(&dir.join(format!("{stem}.csv")), &cm.report_csv(scheme)?)
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let p = prepare(args)?;
    create_dir(&p.out)?;
    let outcome = fit(&p, p.optim.alpha, args.quiet, "")?;
    let ckpt_path = p
        .paths
        .checkpoint
        .clone()
        .unwrap_or_else(|| p.out.join("best.ckpt"));
    checkpoint_of(&p, &outcome, p.optim.alpha).save(&ckpt_path)?;
    write_text(&p.out.join("history.csv"), &outcome.history.to_csv())?;
    write_reports(&p.out, "val_report", &outcome.model, &p.val, &p.scheme)?;
    if let Some(test) = &p.test {
        write_reports(&p.out, "test_report", &outcome.model, test, &p.scheme)?;
    }
    if !args.quiet {
        eprintln!(
            "best epoch {} with val {} {:.4}; checkpoint {}",
            outcome.best_epoch,
            p.optim.select_metric,
            outcome.best_score,
            ckpt_path.display()
        );
    }
    Ok(())
}

struct SweepRow {
    alpha: f64,
    best_epoch: usize,
    val_wa: f64,
    val_uwa: f64,
    score: f64,
}

pub fn sweep_alpha(args: &SweepArgs) -> CliResult<()> {
    let p = prepare(&args.train)?;
    let file = FileConfig::load(args.train.paths.config.as_deref())?;
    let jobs = args.jobs.or(file.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    create_dir(&p.out)?;
    let quiet = args.train.quiet;
    let run_one = |&alpha: &f64| fit(&p, alpha, quiet, &format!("[alpha {alpha}] "));
    let outcomes: Vec<TrainOutcome> = if jobs == 1 {
        ALPHA_GRID.iter().map(run_one).collect::<CliResult<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| ALPHA_GRID.par_iter().map(run_one).collect::<CliResult<_>>())?
    };

    let mut rows = Vec::with_capacity(ALPHA_GRID.len());
    for (&alpha, o) in ALPHA_GRID.iter().zip(&outcomes) {
        let r = &o.history.records[o.best_epoch - 1];
        rows.push(SweepRow {
            alpha,
            best_epoch: o.best_epoch,
            val_wa: r.val_wa,
            val_uwa: r.val_uwa,
            score: o.best_score,
        });
        write_text(
            &p.out.join(format!("history_alpha_{alpha}.csv")),
            &o.history.to_csv(),
        )?;
    }
    let best = (0..rows.len())
        .reduce(|b, i| if rows[i].score > rows[b].score { i } else { b })
        .expect("grid is nonempty");

    let metric = match p.optim.select_metric {
        SelectMetric::Wa => "val_WA",
        SelectMetric::Uwa => "val_UWA",
    };
    let mut csv = String::from("alpha,best_epoch,val_WA,val_UWA,selected\n");
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.alpha,
            r.best_epoch,
            r.val_wa,
            r.val_uwa,
            u8::from(i == best)
        ));
    }
    write_text(&p.out.join("alpha_sweep.csv"), &csv)?;

    let ckpt_path = p
        .paths
        .checkpoint
        .clone()
        .unwrap_or_else(|| p.out.join("best.ckpt"));
    checkpoint_of(&p, &outcomes[best], rows[best].alpha).save(&ckpt_path)?;
    write_reports(
        &p.out,
        "val_report",
        &outcomes[best].model,
        &p.val,
        &p.scheme,
    )?;
    if !quiet {
        eprintln!(
            "best alpha {} with {metric} {:.4}",
            rows[best].alpha, rows[best].score
        );
    }
    Ok(())
}

struct Loaded {
    model: HiGru,
    vocab: Vocabulary,
    scheme: LabelScheme,
    paths: Paths,
}

fn load_for_inference(args: &EvalArgs) -> CliResult<Loaded> {
    let file = FileConfig::load(args.paths.config.as_deref())?;
    let paths = Paths::merge(&args.paths, &file);
    let ckpt_path = Paths::require(&paths.checkpoint, "checkpoint")?;
    Paths::require(&paths.test, "test")?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let scheme = match (&paths.scheme, &ckpt.meta.scheme) {
        (Some(p), _) => LabelScheme::load(p)?,
        (None, Some(s)) => s.clone(),
        (None, None) => {
            return Err(CliError::Usage(
                "checkpoint carries no label scheme; pass --scheme".into(),
            ))
        }
    };
    if scheme.num_classes() != ckpt.config.num_classes {
        return Err(CliError::Runtime(format!(
            "label scheme has {} classes but the checkpoint was trained on {}",
            scheme.num_classes(),
            ckpt.config.num_classes
        )));
    }
    let vocab = Vocabulary::from_tokens(ckpt.meta.vocab.clone())?;
    if vocab.len() != ckpt.config.vocab_size {
        return Err(CliError::Runtime(format!(
            "checkpoint vocabulary holds {} tokens, its embedding table {}",
            vocab.len(),
            ckpt.config.vocab_size
        )));
    }
    let model = ckpt.to_model()?;
    Ok(Loaded {
        model,
        vocab,
        scheme,
        paths,
    })
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let l = load_for_inference(args)?;
    let test_path = l.paths.test.as_deref().expect("checked on load");
    let corpus = Corpus::encode(
        &raw(test_path)?,
        &l.vocab,
        &l.scheme,
        Split::Test,
        test_path,
    )?;
    let cm = evaluate(&l.model, &corpus, &l.scheme)?;
    let text = cm.report_text(&l.scheme)?;
    print!("{text}");
    if let Some(out) = &l.paths.out {
        create_dir(out)?;
        write_text(&out.join("report.txt"), &text)?;
        write_text(&out.join("report.csv"), &cm.report_csv(&l.scheme)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictedUtterance<'a> {
    speaker: &'a str,
    predicted: &'a str,
    distribution: serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize)]
struct PredictedDialogue<'a> {
    id: &'a str,
    utterances: Vec<PredictedUtterance<'a>>,
}

pub fn predict(args: &EvalArgs) -> CliResult<()> {
    let l = load_for_inference(args)?;
    let input = l.paths.test.as_deref().expect("checked on load");
    let corpus = Corpus::encode(&raw(input)?, &l.vocab, &l.scheme, Split::Test, input)?;
    let k = l.scheme.num_classes();
    let lines: Vec<String> = corpus
        .dialogues
        .par_iter()
        .map(|d| {
            let probs = l.model.predict_proba(d)?;
            let preds = higru::model::argmax_evaluated(probs.data(), k, l.scheme.evaluated_mask())?;
            let utterances = d
                .utterances
                .iter()
                .zip(preds)
                .enumerate()
                .map(|(j, (u, c))| PredictedUtterance {
                    speaker: &u.speaker,
                    predicted: l.scheme.class_name(c),
                    distribution: (0..k)
                        .map(|i| {
                            (
                                l.scheme.class_name(i).to_string(),
                                probs.data()[j * k + i].into(),
                            )
                        })
                        .collect(),
                })
                .collect();
            let line = serde_json::to_string(&PredictedDialogue {
                id: &d.id,
                utterances,
            })
            .map_err(|e| CliError::Runtime(format!("cannot serialize predictions: {e}")))?;
            Ok(line)
        })
        .collect::<CliResult<_>>()?;
    let mut text = lines.join("\n");
    text.push('\n');
    match &l.paths.out {
        Some(out) => {
            create_dir(out)?;
            write_text(&out.join("predictions.jsonl"), &text)
        }
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}
