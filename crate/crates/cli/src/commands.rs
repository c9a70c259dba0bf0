use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::{Command as Process, Stdio};
use std::time::{SystemTime, UNIX_EPOCH};

use medclaim::bm25::{self, Bm25Index, Bm25Params};
use medclaim::bridge::{self, DecodingConfig, GeneratedClaim};
use medclaim::corpus::{self, AnnotatedPost, ClaimRecord, EvidenceAbstract};
use medclaim::crf::{self, CrfModel, LabeledSequence, Optimizer, TrainConfig};
use medclaim::dense;
use medclaim::eval::{self, PrecisionMode, Qrels};
use medclaim::features::{self, PosTag};
use medclaim::run::{self, RankedList};
use medclaim::tagging::{self, Averaging, ConllSentence, Label, LabelSequence, Scheme, TypedSpan};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::args::*;
use crate::Failure;

type Outcome = Result<Map<String, Value>, Failure>;

/// Runs the selected subcommand and returns its one-line JSON summary.
pub fn run(cli: &Cli) -> Result<String, Failure> {
    let (name, fields) = match &cli.command {
        Command::Stats(a) => ("stats", stats(a)?),
        Command::Split(a) => ("split", split(a, cli.seed)?),
        Command::Mask(a) => ("mask", mask(a, cli.seed)?),
        Command::TagConvert(a) => ("tag-convert", tag_convert(a)?),
        Command::TrainCrf(a) => ("train-crf", train_crf(a, cli.seed)?),
        Command::Predict(a) => ("predict", predict(a)?),
        Command::ScoreSpans(a) => ("score-spans", score_spans(a)?),
        Command::Index(a) => ("index", index(a)?),
        Command::Search(a) => ("search", search(a)?),
        Command::Pairs(a) => ("pairs", pairs(a, cli.seed)?),
        Command::Eval(a) => ("eval", evaluate(a)?),
        Command::Gen(a) => ("gen", gen(a)?),
    };
    let mut summary = Map::new();
    summary.insert("command".into(), name.into());
    summary.insert("seed".into(), cli.seed.into());
    if !cli.no_timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        summary.insert("timestamp".into(), secs.into());
    }
    summary.extend(fields);
    Ok(Value::Object(summary).to_string())
}

fn fields(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m,
        other => Map::from_iter([("value".to_string(), other)]),
    }
}

/// Prefixes core errors with the path being processed.
fn at(path: &Path) -> impl Fn(medclaim::Error) -> Failure + '_ {
    move |e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        Failure::Validation(m) => Failure::Validation(format!("{}: {m}", path.display())),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_records<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<(), Failure> {
    let mut w = create(path)?;
    corpus::write_jsonl_to(&mut w, records).map_err(at(path))?;
    finish(w, path)
}

fn read_conll(path: &Path, scheme: Scheme) -> Result<Vec<ConllSentence>, Failure> {
    tagging::read_conll(open(path)?, scheme, &path.display().to_string()).map_err(at(path))
}

fn stats(a: &StatsArgs) -> Outcome {
    let claims: Vec<ClaimRecord> = corpus::read_records(&a.claims).map_err(at(&a.claims))?;
    let stats = corpus::corpus_stats(&claims);
    Ok(fields(serde_json::to_value(stats).expect("stats serialize")))
}

fn split(a: &SplitArgs, seed: u64) -> Outcome {
    // lines are checked as JSON but copied verbatim
    let mut lines = Vec::new();
    for (idx, line) in open(&a.input)?.lines().enumerate() {
        let line = line.map_err(|e| Failure::Io(format!("{}: {e}", a.input.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        serde_json::from_str::<Value>(&line)
            .map_err(|e| Failure::Validation(format!("{}:{}: {e}", a.input.display(), idx + 1)))?;
        lines.push(line);
    }
    let (train, val) = corpus::split_train_val(&lines, a.ratio, seed)?;
    for (path, part) in [(&a.train_out, &train), (&a.val_out, &val)] {
        let mut w = create(path)?;
        for line in part {
            writeln!(w, "{line}").map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        }
        finish(w, path)?;
    }
    Ok(fields(json!({ "records": lines.len(), "train": train.len(), "val": val.len(), "ratio": a.ratio })))
}

fn mask(a: &MaskArgs, seed: u64) -> Outcome {
    let claims: Vec<ClaimRecord> = corpus::read_records(&a.claims).map_err(at(&a.claims))?;
    let masked = corpus::mask_corpus(&claims, a.rate, seed, &a.mask_token)?;
    write_records(&a.output, &masked)?;
    let words: usize = claims.iter().map(|c| corpus::words(&c.claim_text).len()).sum();
    let n_masked: usize = masked.iter().map(|m| m.masked_word_indices.len()).sum();
    let fraction = if words == 0 { 0.0 } else { n_masked as f64 / words as f64 };
    Ok(fields(json!({
        "claims": claims.len(),
        "words": words,
        "masked_words": n_masked,
        "masked_fraction": fraction,
    })))
}

fn tag_convert(a: &TagConvertArgs) -> Outcome {
    let scheme: Scheme = a.scheme.into();
    let posts: Vec<AnnotatedPost> = corpus::read_records(&a.posts).map_err(at(&a.posts))?;
    let mut sentences = Vec::with_capacity(posts.len());
    let mut spans_total = 0;
    let mut skipped = 0;
    for post in &posts {
        let tokens = tagging::tokenize(&post.text);
        if tokens.is_empty() {
            skipped += 1;
            continue;
        }
        let spans: Vec<TypedSpan> = match scheme {
            Scheme::Claim => post.claim_spans.iter().map(|s| (*s, None)).collect(),
            Scheme::Pio => post.pio_spans.iter().map(|p| (p.span, Some(p.category))).collect(),
        };
        spans_total += spans.len();
        let labels = tagging::spans_to_bio(&tokens, &spans, scheme)
            .map_err(|e| Failure::Validation(format!("post {}: {e}", post.post_id)))?;
        let words: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
        let pos = a.pos.then(|| {
            features::pos_tag(&words, None)
                .expect("no tags supplied")
                .iter()
                .map(ToString::to_string)
                .collect()
        });
        sentences.push(ConllSentence {
            tokens: words,
            labels,
            pos,
        });
    }
    let mut w = create(&a.output)?;
    tagging::write_conll(&mut w, &sentences).map_err(at(&a.output))?;
    finish(w, &a.output)?;
    let tokens: usize = sentences.iter().map(|s| s.tokens.len()).sum();
    Ok(fields(json!({
        "posts": posts.len(),
        "sentences": sentences.len(),
        "skipped_empty": skipped,
        "tokens": tokens,
        "spans": spans_total,
        "scheme": scheme.to_string(),
    })))
}

fn sentence_tags(s: &ConllSentence) -> Result<Vec<PosTag>, Failure> {
    match &s.pos {
        Some(tags) => tags
            .iter()
            .map(|t| t.parse::<PosTag>().map_err(|e| Failure::Validation(e.to_string())))
            .collect(),
        None => Ok(features::pos_tag(&s.tokens, None)?),
    }
}

fn train_crf(a: &TrainCrfArgs, seed: u64) -> Outcome {
    let scheme: Scheme = a.scheme.into();
    let all = read_conll(&a.train, scheme)?;
    let (train, val) = match &a.val {
        Some(path) => (all, read_conll(path, scheme)?),
        None => corpus::split_train_val(&all, a.ratio, seed)?,
    };
    let tag = |part: &[ConllSentence]| -> Result<Vec<(Vec<String>, Vec<PosTag>)>, Failure> {
        part.iter().map(|s| Ok((s.tokens.clone(), sentence_tags(s)?))).collect()
    };
    let train_tagged = tag(&train)?;
    let val_tagged = tag(&val)?;
    let dictionary = features::build_feature_dict(&train_tagged)?;
    let to_seqs = |tagged: &[(Vec<String>, Vec<PosTag>)], part: &[ConllSentence]| -> Result<Vec<LabeledSequence>, Failure> {
        tagged
            .iter()
            .zip(part)
            .map(|((tokens, pos), s)| {
                Ok(LabeledSequence {
                    features: crf::featurize(&dictionary, tokens, Some(pos))?,
                    labels: s.labels.ids(),
                })
            })
            .collect()
    };
    let train_seqs = to_seqs(&train_tagged, &train)?;
    let val_seqs = to_seqs(&val_tagged, &val)?;

    let optimizer = match a.optimizer {
        OptimizerArg::Sgd => Optimizer::Sgd,
        OptimizerArg::Adamw => match Optimizer::default() {
            Optimizer::AdamW { beta1, beta2, epsilon, .. } => Optimizer::AdamW {
                beta1,
                beta2,
                epsilon,
                weight_decay: a.weight_decay,
            },
            other => other,
        },
    };
    let config = TrainConfig {
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        learning_rate: a.lr,
        optimizer,
        l2: a.l2,
        seed,
    };
    let n_features = dictionary.len();
    let outcome = crf::train(dictionary, scheme, &train_seqs, &val_seqs, &config)?;
    if let Some(dir) = a.model_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    outcome.model.save(&a.model_out).map_err(at(&a.model_out))?;
    let best = &outcome.history[outcome.best_epoch - 1];
    Ok(fields(json!({
        "train_sentences": train_seqs.len(),
        "val_sentences": val_seqs.len(),
        "features": n_features,
        "labels": scheme.num_labels(),
        "epochs_run": outcome.epochs_run,
        "best_epoch": outcome.best_epoch,
        "best_val_nll": best.val_nll,
    })))
}

fn predict(a: &PredictArgs) -> Outcome {
    let model = CrfModel::load(&a.model).map_err(at(&a.model))?;
    let inputs: Vec<(Vec<String>, Option<Vec<String>>)> = match a.format {
        InputFormat::Posts => {
            let posts: Vec<AnnotatedPost> = corpus::read_records(&a.input).map_err(at(&a.input))?;
            posts
                .iter()
                .map(|p| (tagging::tokenize(&p.text).into_iter().map(|t| t.text).collect(), None))
                .collect()
        }
        InputFormat::Conll => read_conll(&a.input, model.scheme)?
            .into_iter()
            .map(|s| (s.tokens, s.pos))
            .collect(),
    };
    let inputs: Vec<_> = inputs.into_iter().filter(|(t, _)| !t.is_empty()).collect();

    let predicted: Vec<ConllSentence> = inputs
        .into_par_iter()
        .map(|(tokens, pos)| {
            let tags = match &pos {
                Some(p) => Some(
                    p.iter()
                        .map(|t| t.parse::<PosTag>())
                        .collect::<medclaim::Result<Vec<_>>>()?,
                ),
                None => None,
            };
            let labels = model.tag(&tokens, tags.as_deref())?;
            Ok(ConllSentence { tokens, labels, pos })
        })
        .collect::<medclaim::Result<_>>()?;

    let mut w = create(&a.output)?;
    tagging::write_conll(&mut w, &predicted).map_err(at(&a.output))?;
    finish(w, &a.output)?;
    let tokens: usize = predicted.iter().map(|s| s.tokens.len()).sum();
    let spans: usize = predicted
        .iter()
        .map(|s| s.labels.labels.iter().filter(|l| matches!(l, Label::Begin(_))).count())
        .sum();
    Ok(fields(json!({
        "sentences": predicted.len(),
        "tokens": tokens,
        "spans": spans,
        "scheme": model.scheme.to_string(),
    })))
}

fn score_spans(a: &ScoreSpansArgs) -> Outcome {
    let scheme: Scheme = a.scheme.into();
    let gold = read_conll(&a.gold, scheme)?;
    let pred = read_conll(&a.pred, scheme)?;
    for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
        if g.tokens != p.tokens {
            return Err(Failure::Validation(format!("sentence {} has different tokens in gold and prediction", i + 1)));
        }
    }
    let averaging = match a.averaging {
        AveragingArg::Micro => Averaging::Micro,
        AveragingArg::Macro => Averaging::Macro,
    };
    let g: Vec<LabelSequence> = gold.into_iter().map(|s| s.labels).collect();
    let p: Vec<LabelSequence> = pred.into_iter().map(|s| s.labels).collect();
    let report = tagging::token_prf(&g, &p, averaging)?;
    if let Some(path) = &a.output {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Io(e.to_string()))?;
        finish(w, path)?;
    }
    Ok(fields(json!({
        "sentences": g.len(),
        "averaging": report.averaging,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    })))
}

fn index(a: &IndexArgs) -> Outcome {
    let docs: Vec<EvidenceAbstract> = corpus::read_records(&a.evidence).map_err(at(&a.evidence))?;
    let idx = bm25::build_index(&docs, Bm25Params { k1: a.k1, b: a.b })?;
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    idx.save(&a.output).map_err(at(&a.output))?;
    Ok(fields(json!({
        "docs": idx.num_docs(),
        "terms": idx.num_terms(),
        "avg_doc_length": idx.avg_doc_length(),
        "k1": a.k1,
        "b": a.b,
    })))
}

fn search(a: &SearchArgs) -> Outcome {
    let claims: Vec<ClaimRecord> = corpus::read_records(&a.queries).map_err(at(&a.queries))?;
    let mode: medclaim::QueryMode = a.mode.into();
    let (runs, empty, backend): (Vec<RankedList>, usize, &str) = match (&a.index, &a.vectors, &a.query_vectors) {
        (Some(path), _, _) => {
            let idx = Bm25Index::load(path).map_err(at(path))?;
            let results = claims
                .par_iter()
                .map(|c| bm25::search(&idx, &bm25::claim_query(c, mode), a.k))
                .collect::<medclaim::Result<Vec<_>>>()?;
            let empty = results.iter().filter(|r| r.empty_query).count();
            (results.into_iter().map(|r| r.ranked).collect(), empty, "bm25")
        }
        (None, Some(docs_path), Some(query_path)) => {
            let docs = dense::load_vectors(open(docs_path)?, &docs_path.display().to_string()).map_err(at(docs_path))?;
            let queries =
                dense::load_vectors(open(query_path)?, &query_path.display().to_string()).map_err(at(query_path))?;
            let metric: medclaim::Metric = a.metric.into();
            let runs = claims
                .iter()
                .map(|c| {
                    let q = queries
                        .get(&c.claim_id)
                        .ok_or_else(|| Failure::Validation(format!("no query vector for claim {}", c.claim_id)))?;
                    Ok(dense::top_k(&docs, &c.claim_id, q, a.k, metric)?)
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            (runs, 0, "dense")
        }
        _ => return Err(Failure::Validation("pass --index, or --vectors with --query-vectors".into())),
    };
    let mut w = create(&a.output)?;
    run::write_run(&mut w, &runs).map_err(at(&a.output))?;
    finish(w, &a.output)?;
    let rows: usize = runs.iter().map(RankedList::len).sum();
    let mut out = fields(json!({
        "backend": backend,
        "queries": runs.len(),
        "rows": rows,
        "k": a.k,
        "empty_queries": empty,
    }));
    match backend {
        "bm25" => out.insert("mode".into(), mode.to_string().into()),
        _ => out.insert("metric".into(), medclaim::Metric::from(a.metric).to_string().into()),
    };
    Ok(out)
}

fn pairs(a: &PairsArgs, seed: u64) -> Outcome {
    let claims: Vec<ClaimRecord> = corpus::read_records(&a.claims).map_err(at(&a.claims))?;
    let docs: Vec<EvidenceAbstract> = corpus::read_records(&a.evidence).map_err(at(&a.evidence))?;
    let set = dense::build_training_pairs(&claims, &docs, a.negatives, seed, a.mode.into())?;
    write_records(&a.output, &set.pairs)?;
    if !set.short_pool.is_empty() {
        eprintln!(
            "warning: {} claims had fewer than {} eligible negatives",
            set.short_pool.len(),
            a.negatives
        );
    }
    Ok(fields(json!({
        "pairs": set.pairs.len(),
        "negatives": a.negatives,
        "short_pool": set.short_pool.len(),
    })))
}

fn evaluate(a: &EvalArgs) -> Outcome {
    let runs = run::read_run(open(&a.run)?, &a.run.display().to_string()).map_err(at(&a.run))?;
    let qrels = Qrels::read(open(&a.qrels)?, &a.qrels.display().to_string()).map_err(at(&a.qrels))?;
    if runs.is_empty() {
        return Err(Failure::Validation(format!("{}: run has no rows", a.run.display())));
    }
    let mode = match a.precision {
        PrecisionArg::Mean => PrecisionMode::MeanPerQuery,
        PrecisionArg::Pooled => PrecisionMode::Pooled,
    };
    let report = eval::evaluate(&runs, &qrels, &a.k, a.threshold, mode)?;
    if a.table {
        eprint!("{}", report.to_table());
    }
    if let Some(path) = &a.output {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Io(e.to_string()))?;
        finish(w, path)?;
    }
    Ok(fields(serde_json::to_value(&report).expect("report serializes")))
}

fn gen(a: &GenArgs) -> Outcome {
    let docs: Vec<EvidenceAbstract> = corpus::read_records(&a.evidence).map_err(at(&a.evidence))?;
    let requests = bridge::requests_from_evidence(&docs);
    if requests.is_empty() {
        return Err(Failure::Validation("no abstract has PIO elements to prompt with".into()));
    }
    let config = match &a.decoding {
        Some(path) => serde_json::from_reader::<_, DecodingConfig>(open(path)?)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?,
        None => match a.preset {
            PresetArg::T5 => DecodingConfig::t5(),
            PresetArg::Byt5 => DecodingConfig::byt5(),
        },
    };
    config.validate()?;
    let hash = config.config_hash();

    fs::create_dir_all(&a.workdir).map_err(|e| Failure::Io(format!("{}: {e}", a.workdir.display())))?;
    let prompts = a.workdir.join("prompts.jsonl");
    let config_path = a.workdir.join("decoding.json");
    let raw = a.workdir.join("generated.jsonl");
    write_records(&prompts, &requests)?;
    let mut w = create(&config_path)?;
    serde_json::to_writer_pretty(&mut w, &config).map_err(|e| Failure::Io(e.to_string()))?;
    finish(w, &config_path)?;

    let status = Process::new(&a.bridge)
        .arg("--prompts")
        .arg(&prompts)
        .arg("--config")
        .arg(&config_path)
        .arg("--output")
        .arg(&raw)
        .stdin(Stdio::null())
        .stdout(Stdio::from(std::io::stderr()))
        .status()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Failure::Io(format!(
                "claim generator `{}` not found; install it or pass --bridge",
                a.bridge
            )),
            _ => Failure::Io(format!("cannot run claim generator `{}`: {e}", a.bridge)),
        })?;
    if !status.success() {
        return Err(Failure::Io(format!("claim generator `{}` failed with {status}", a.bridge)));
    }

    let outputs: Vec<GeneratedClaim> = corpus::read_jsonl(&raw).map_err(at(&raw))?;
    let known: HashMap<&str, ()> = requests.iter().map(|r| (r.prompt_id.as_str(), ())).collect();
    if let Some(o) = outputs.iter().find(|o| !known.contains_key(o.prompt_id.as_str())) {
        return Err(Failure::Validation(format!("generator returned unknown prompt id {}", o.prompt_id)));
    }
    let stale = outputs.iter().filter(|o| o.error.is_none() && o.config_hash != hash).count();
    let report = bridge::check_outputs(&outputs, &config);
    if a.strict && !report.is_compliant() {
        return Err(Failure::Validation(format!(
            "{} generated claims violate the decoding constraints",
            report.violations.len()
        )));
    }
    let claims = bridge::claims_from_outputs(&requests, &outputs)?;
    write_records(&a.output, &claims)?;
    Ok(fields(json!({
        "prompts": requests.len(),
        "outputs": outputs.len(),
        "claims": claims.len(),
        "generation_errors": report.generation_errors,
        "violations": report.violations.len(),
        "config_hash_mismatches": stale,
        "config_hash": hash,
        "compliant": report.is_compliant(),
    })))
}
