use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ctc_headline::corpus::{self, PrepareConfig, PrepareStats, DEFAULT_TRUNCATE};
use ctc_headline::decode::{greedy_decode, DecodeConfig};
use ctc_headline::error::Error;
use ctc_headline::evaluation::{evaluate as score, render_table, Prediction};
use ctc_headline::headline::{summarize_document, TokenBridge, WindowConfig};
use ctc_headline::model::train::is_feasible;
use ctc_headline::model::{Checkpoint, CheckpointMeta, EpochReport, ModelParams, TrainConfig, Trainer};
use ctc_headline::par;
use ctc_headline::selfcheck::{faulty_ctc_log_prob, run_all, SelfCheckConfig};
use ctc_headline::synthetic::{generate, SyntheticConfig, SyntheticTask};
use ctc_headline::text::{decode_ids, encode, read_corpus, read_jsonl, tokenize, write_jsonl, CorpusPair, RawPair, TokenMode, Vocabulary};

use crate::{EvaluateArgs, Failure, PrepareArgs, SelfcheckArgs, SummarizeArgs, TrainArgs};

type CmdResult = Result<(), Failure>;

const INPUT_VOCAB: &str = "input.vocab";
const OUTPUT_VOCAB: &str = "output.vocab";
const CORPUS: &str = "corpus.bin";
const HELD_OUT: &str = "heldout.bin";
const SETTINGS: &str = "prepare.json";

#[derive(Serialize, Deserialize)]
struct PrepareRecord {
    config: PrepareConfig,
    stats: PrepareStats,
}

fn write_raw(path: &Path, pairs: &[RawPair]) -> CmdResult {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(&mut w, pairs)?;
    w.flush()?;
    Ok(())
}

pub fn prepare(a: PrepareArgs) -> CmdResult {
    let mode: TokenMode = a.mode.parse()?;
    let truncate = match (a.no_truncate, a.truncate, mode) {
        (true, _, _) => None,
        (false, Some(n), _) => Some(n),
        (false, None, TokenMode::Character) => Some(DEFAULT_TRUNCATE),
        (false, None, TokenMode::Word) => None,
    };
    let cfg = PrepareConfig { mode, k: a.k, min_count: a.min_count, truncate };

    let (train, held_out) = match (&a.synthetic, &a.corpus) {
        (Some(task), _) => {
            let task: SyntheticTask = task.parse()?;
            let mut all = generate(&SyntheticConfig::new(task), a.pairs + a.held_out, a.seed)?;
            let held = all.split_off(a.pairs);
            (all, (a.held_out > 0).then_some(held))
        }
        (None, Some(path)) => {
            let held = a.eval_corpus.as_deref().map(read_corpus).transpose()?;
            (read_corpus(path)?, held)
        }
        (None, None) => return Err(Failure::Usage("either --corpus or --synthetic is required".into())),
    };

    let p = corpus::prepare(&train, &cfg)?;
    fs::create_dir_all(&a.out)?;
    p.input_vocab.save(&a.out.join(INPUT_VOCAB))?;
    p.output_vocab.save(&a.out.join(OUTPUT_VOCAB))?;
    corpus::save_encoded(&a.out.join(CORPUS), &p.ids, &p.pairs)?;
    let record = PrepareRecord { config: cfg, stats: p.stats };
    fs::write(a.out.join(SETTINGS), serde_json::to_string_pretty(&record)? + "\n")?;
    if a.synthetic.is_some() {
        write_raw(&a.out.join("corpus.jsonl"), &train)?;
    }
    if let Some(held) = &held_out {
        let mut ids = Vec::with_capacity(held.len());
        let mut pairs = Vec::with_capacity(held.len());
        for (i, r) in held.iter().enumerate() {
            ids.push(r.id.clone().unwrap_or_else(|| i.to_string()));
            pairs.push(CorpusPair {
                document: corpus::encode_document(&r.document, &p.input_vocab, &cfg)?,
                headline: corpus::encode_headline(&r.headline, &p.output_vocab),
            });
        }
        corpus::save_encoded(&a.out.join(HELD_OUT), &ids, &pairs)?;
        if a.synthetic.is_some() {
            write_raw(&a.out.join("heldout.jsonl"), held)?;
        }
    }

    println!("pairs: {}", p.stats.pairs);
    println!("input vocabulary: {}", p.input_vocab.len());
    println!("output vocabulary: {}", p.output_vocab.len());
    println!("OOV rate: {:.4}", p.stats.oov_rate);
    println!("infeasible pairs: {}", p.stats.infeasible);
    if let Some(held) = &held_out {
        println!("held-out pairs: {}", held.len());
    }
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    macro_rules! overlay {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { cfg.$field = v; })* };
    }
    overlay!(epochs, learning_rate, batch_size, clip_norm, seed, d_emb, d_hidden, layers);
    if let Some(o) = &a.optimizer {
        cfg.optimizer = o.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Fraction of pairs whose greedy decode equals the reference headline.
fn exact_match(params: &ModelParams, pairs: &[CorpusPair]) -> Result<f64, Error> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let hits = par::map_ordered(pairs, |p| -> Result<bool, Error> {
        if p.document.is_empty() {
            return Ok(p.headline.is_empty());
        }
        let y = params.emissions(&p.document)?;
        Ok(greedy_decode(&y).labels.labels() == &p.headline[..])
    });
    let mut n = 0usize;
    for h in hits {
        n += usize::from(h?);
    }
    Ok(n as f64 / pairs.len() as f64)
}

#[derive(Serialize)]
struct LogLine<'a> {
    #[serde(flatten)]
    report: &'a EpochReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    held_out_exact_match: Option<f64>,
}

pub fn train(a: TrainArgs) -> CmdResult {
    let cfg = train_config(&a)?;
    let input_vocab = Vocabulary::load(&a.data.join(INPUT_VOCAB))?;
    let output_vocab = Vocabulary::load(&a.data.join(OUTPUT_VOCAB))?;
    let settings: PrepareRecord = serde_json::from_reader(BufReader::new(File::open(a.data.join(SETTINGS))?))?;
    let (_, pairs) = corpus::load_encoded(&a.data.join(CORPUS))?;
    let held_path = a.data.join(HELD_OUT);
    let held_out = if held_path.exists() {
        Some(corpus::load_encoded(&held_path)?.1)
    } else {
        None
    };
    if pairs.is_empty() {
        return Err(Failure::Data("empty training corpus".into()));
    }
    if !pairs.iter().any(is_feasible) {
        return Err(Error::NoFeasiblePairs.into());
    }

    fs::create_dir_all(&a.out)?;
    let mut log = BufWriter::new(File::create(a.out.join("train.log.jsonl"))?);
    let mut trainer = Trainer::from_config(input_vocab.len(), output_vocab.len(), cfg.clone())?;
    let mut last_exact = None;
    for _ in 0..cfg.epochs {
        let report = trainer.run_epoch(&pairs)?;
        let exact = held_out.as_deref().map(|h| exact_match(trainer.params(), h)).transpose()?;
        serde_json::to_writer(&mut log, &LogLine { report: &report, held_out_exact_match: exact })?;
        log.write_all(b"\n")?;
        log.flush()?;

        let ckpt = Checkpoint {
            meta: CheckpointMeta {
                config: cfg.clone(),
                dims: trainer.params().dims,
                input_mode: settings.config.mode,
                k: settings.config.k,
                truncate: settings.config.truncate,
                input_vocab: input_vocab.tokens().to_vec(),
                output_vocab: output_vocab.tokens().to_vec(),
                epoch: report.epoch,
                step: report.step,
            },
            params: trainer.params().clone(),
        };
        let bytes = ckpt.to_bytes()?;
        fs::write(a.out.join(format!("epoch-{:03}.ckpt", report.epoch)), &bytes)?;
        fs::write(a.out.join("model.ckpt"), &bytes)?;

        let mut line = format!(
            "epoch {:>3}  loss {:.4}  trained {}  skipped {}  {:.1}s",
            report.epoch, report.mean_loss, report.trained, report.skipped_infeasible, report.wall_seconds
        );
        if let Some(e) = exact {
            line.push_str(&format!("  held-out exact {e:.4}"));
        }
        println!("{line}");
        last_exact = exact;
    }
    if let Some(e) = last_exact {
        println!("final held-out exact match: {e:.4}");
    }
    Ok(())
}

#[derive(Deserialize)]
struct DocumentLine {
    id: Option<String>,
    document: String,
}

fn read_documents(path: &Path, format: Option<&str>) -> Result<Vec<(String, String)>, Failure> {
    let reader: Box<dyn BufRead> = if path == Path::new("-") {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(path)?))
    };
    let jsonl = match format {
        Some(f) => f == "jsonl",
        None => path.extension().is_some_and(|e| e == "jsonl" || e == "json"),
    };
    if jsonl {
        Ok(read_jsonl::<DocumentLine, _>(reader)?
            .into_iter()
            .enumerate()
            .map(|(i, (_, d))| (d.id.unwrap_or_else(|| i.to_string()), d.document))
            .collect())
    } else {
        reader
            .lines()
            .enumerate()
            .map(|(i, l)| Ok((i.to_string(), l?)))
            .collect()
    }
}

#[derive(Serialize)]
struct CandidateRecord {
    offset: usize,
    headline: String,
    overlap: usize,
}

#[derive(Serialize)]
struct HeadlineRecord {
    id: String,
    headline: String,
    overlap: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<CandidateRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    saliency: Option<Vec<f64>>,
}

pub fn summarize(a: SummarizeArgs) -> CmdResult {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let meta = &ckpt.meta;
    if let Some(mode) = &a.mode {
        let mode: TokenMode = mode.parse()?;
        if mode != meta.input_mode {
            return Err(Failure::Usage(format!(
                "--mode {mode:?} does not match the checkpoint's {:?}",
                meta.input_mode
            )));
        }
    }
    if let Some(k) = a.k {
        if k != meta.k {
            return Err(Failure::Usage(format!("--k {k} does not match the checkpoint's {}", meta.k)));
        }
    }
    let input_vocab = ckpt.input_vocab()?;
    let output_vocab = ckpt.output_vocab()?;
    if input_vocab.len() != ckpt.params.dims.vocab_in || output_vocab.len() != ckpt.params.dims.labels {
        return Err(Failure::Data("checkpoint vocabularies disagree with its model dimensions".into()));
    }
    let bridge = TokenBridge::new(&input_vocab, &output_vocab);
    let windows = WindowConfig {
        window_len: a.window_len,
        stride: a.stride,
        max_windows: a.max_windows,
        scan_len: a.scan_len,
    };
    windows.validate()?;
    let decode = match a.beam {
        Some(width) => DecodeConfig::Beam { width },
        None => DecodeConfig::Greedy,
    };

    let docs = read_documents(&a.input, a.format.as_deref())?;
    let spell = |ids: &[u32]| decode_ids(ids, &output_vocab, TokenMode::Character);
    let mut records = Vec::with_capacity(docs.len());
    for (id, text) in docs {
        let ids = encode(&tokenize(&text, meta.input_mode), &input_vocab);
        let s = summarize_document(&ckpt.params, &ids, &bridge, meta.k, &windows, decode)?;
        let candidates = if a.diagnostics {
            let c = s
                .candidates
                .iter()
                .map(|c| {
                    Ok(CandidateRecord {
                        offset: c.offset,
                        headline: spell(&c.labels)?,
                        overlap: c.overlap,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            Some(c)
        } else {
            None
        };
        records.push(HeadlineRecord {
            id,
            headline: spell(&s.headline)?,
            overlap: s.overlap,
            window: a.diagnostics.then_some(s.window),
            candidates,
            saliency: a.diagnostics.then_some(s.saliency),
        });
    }
    match &a.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_jsonl(&mut w, &records)?;
            w.flush()?;
        }
        None => write_jsonl(io::stdout().lock(), &records)?,
    }
    Ok(())
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<Vec<T>, Failure> {
    let rows = read_jsonl(BufReader::new(File::open(path)?))
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let predictions: Vec<Prediction> = read_lines(&a.predictions)?;
    let references: Vec<RawPair> = read_lines(&a.references)?;
    let report = score(&predictions, &references, a.lcs_threshold).map_err(|e| match e {
        Error::InvalidArgument(m) if m.starts_with("id mismatch") => Failure::Data(m),
        other => other.into(),
    })?;
    print!("{}", render_table(&report));
    if let Some(path) = &a.report {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

pub fn selfcheck(a: SelfcheckArgs) -> CmdResult {
    let mut cfg = SelfCheckConfig { seed: a.seed, ..SelfCheckConfig::default() };
    if a.inject_fault {
        cfg.ctc_impl = faulty_ctc_log_prob;
    }
    let reports = run_all(&cfg);
    let mut failed = Vec::new();
    for r in &reports {
        match &r.failure {
            None => println!("PASS {:<16} {:>5} instances  {:.2}s", r.name, r.instances, r.seconds),
            Some(f) => {
                println!("FAIL {:<16} seed {}: {}", r.name, f.seed, f.detail);
                failed.push(r.name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("self-check failed: {}", failed.join(", "))))
    }
}
