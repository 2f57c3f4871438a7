use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use emojimodal::corpus::{
    balanced_test_subset, generate_synthetic, image_subset, ingest, read_corpus, split, write_corpus, Corpus,
    ImageSynth, IngestOptions, SynthConfig,
};
use emojimodal::emoji::{EmojiCatalog, SegmentOptions};
use emojimodal::fusion::{sweep_alpha, FusedScorer, FusionWeight};
use emojimodal::metrics::{
    map_per_query, parse_label_matrix, parse_score_matrix, EvalBatch, MetricReport, MetricValue,
};
use emojimodal::retrieval::{build_index, evaluate_retrieval, query, EmojiQuery, ScoreIndex};
use emojimodal::scores::{ScoreVector, Scorer};
use emojimodal::text_model::{train_text_model, ModelShape, TextClassifier, TEXT_MAGIC};
use emojimodal::train::TrainHistory;
use emojimodal::vision_model::{train_image_model, LinearSoftmaxModel, VISION_MAGIC};
use emojimodal::zeroshot::{parse_concept_file, ConceptSource, EmbeddingTable, ZeroShotScorer};
use emojimodal_server::{Predictor, Service};
use serde::Serialize;

use crate::args::*;
use crate::Usage;

pub fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(a) => run_ingest(a),
        Command::Split(a) => run_split(a, seed),
        Command::Synth(a) => run_synth(a, seed),
        Command::TrainText(a) => run_train_text(a, seed),
        Command::TrainImage(a) => run_train_image(a, seed),
        Command::SweepAlpha(a) => run_sweep(a),
        Command::Eval(a) => run_eval(a, false),
        Command::ZeroshotEval(a) => run_eval(a, true),
        Command::Index(a) => run_index(a),
        Command::Search(a) => run_search(a),
        Command::Serve(a) => run_serve(a),
        Command::Metrics(a) => run_metrics(a),
    }
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    Usage(message.into()).into()
}

fn ratios(v: &[f64]) -> Result<[f64; 3]> {
    <[f64; 3]>::try_from(v).map_err(|_| usage("--ratios takes exactly three fractions"))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    read_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn load_catalog(path: &Path) -> Result<EmojiCatalog> {
    EmojiCatalog::load(path).with_context(|| format!("loading catalog {}", path.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

/// `model.ckpt` -> `model.ckpt.json`
fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    create_parent(path)?;
    Ok(write_corpus(path, corpus)?)
}

fn print_corpus_summary(out: &mut impl Write, name: &str, corpus: &Corpus) -> Result<()> {
    let with_images = corpus.documents().iter().filter(|d| d.image_features.is_some()).count();
    writeln!(
        out,
        "{name}\tdocuments={}\tclasses={}\twith_images={with_images}\tannotation_sets={}",
        corpus.len(),
        corpus.num_classes(),
        corpus.annotation_set_counts().len()
    )?;
    Ok(())
}

fn run_ingest(a: IngestArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let options = IngestOptions {
        image_dim: a.image_dim,
        segment: SegmentOptions {
            letterwise_flags: a.letterwise_flags,
            modifier_fallback: !a.no_modifier_fallback,
        },
    };
    let corpus = ingest(&a.input, &catalog, options).with_context(|| format!("ingesting {}", a.input.display()))?;
    save_corpus(&a.out, &corpus)?;
    print_corpus_summary(&mut std::io::stdout().lock(), "corpus", &corpus)
}

fn write_splits(dir: &Path, prefix: &str, parts: [&Corpus; 3]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    for (name, corpus) in ["train", "val", "test"].iter().zip(parts) {
        let name = format!("{prefix}{name}");
        save_corpus(&dir.join(format!("{name}.bin")), corpus)?;
        print_corpus_summary(&mut out, &name, corpus)?;
    }
    Ok(())
}

fn run_split(a: SplitArgs, seed: u64) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let (train, val, test) = split(&corpus, ratios(&a.ratios)?, seed)?;
    write_splits(&a.out_dir, "", [&train, &val, &test])?;
    if let Some(cap) = a.balanced_cap {
        let balanced = balanced_test_subset(&test, cap, seed)?;
        save_corpus(&a.out_dir.join("test_balanced.bin"), &balanced)?;
        print_corpus_summary(&mut std::io::stdout().lock(), "test_balanced", &balanced)?;
    }
    if a.image_splits {
        let (itrain, ival, itest) = image_subset(&train, &val, &test);
        write_splits(&a.out_dir, "image_", [&itrain, &ival, &itest])?;
    }
    Ok(())
}

fn run_synth(a: SynthArgs, seed: u64) -> Result<()> {
    let mut config = SynthConfig::new(a.classes, a.docs, a.strength);
    if let Some(n) = a.text_len {
        config.text_len = n;
    }
    if let Some(p) = a.extra_label_prob {
        config.extra_label_prob = p;
    }
    config.text_informative = a.text_classes.map(|r| r.collect());
    match a.image_dim {
        Some(dim) => {
            config.image = Some(ImageSynth {
                informative: a.image_classes.map(|r| r.collect()),
                ..ImageSynth::aligned(dim, a.image_noise)
            })
        }
        None if a.image_classes.is_some() => return Err(usage("--image-classes needs --image-dim")),
        None => {}
    }
    let synth = generate_synthetic(&config, seed)?;
    let dir = &a.out_dir;
    write_file(&dir.join("catalog.tsv"), synth.catalog.to_tsv())?;
    write_file(&dir.join("records.jsonl"), synth.to_jsonl())?;
    write_json(&dir.join("truth.json"), &synth.truth)?;
    write_json(&dir.join("config.json"), &synth.config)?;
    save_corpus(&dir.join("corpus.bin"), &synth.corpus)?;
    print_corpus_summary(&mut std::io::stdout().lock(), "corpus", &synth.corpus)?;
    if let Some(dim) = a.embedding_dim {
        if dim == 0 {
            return Err(usage("--embedding-dim must be positive"));
        }
        let mut text = String::new();
        for (token, v) in synth.embedding_rows(dim, a.embedding_fillers, seed) {
            text.push_str(&token);
            for x in v {
                text.push(' ');
                text.push_str(&x.to_string());
            }
            text.push('\n');
        }
        write_file(&dir.join("embeddings.txt"), text)?;
    }
    let (train, val, test) = split(&synth.corpus, ratios(&a.ratios)?, seed)?;
    write_splits(dir, "", [&train, &val, &test])
}

#[derive(Serialize)]
struct CheckpointInfo<'a, C: Serialize> {
    kind: &'a str,
    format: &'a str,
    classes: usize,
    model: C,
    train: &'a emojimodal::train::TrainConfig,
    train_documents: usize,
    val_documents: usize,
    history: &'a TrainHistory,
}

fn print_history(history: &TrainHistory) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "epoch\ttrain_loss\tval_msap\tlearning_rate")?;
    for e in &history.epochs {
        writeln!(out, "{}\t{:.6}\t{:.6}\t{}", e.epoch, e.train_loss, e.val_msap, e.learning_rate)?;
    }
    writeln!(out, "best_epoch\t{}", history.best_epoch)?;
    writeln!(out, "best_val_msap\t{:.6}", history.best_val_msap)?;
    Ok(())
}

fn run_train_text(a: TrainTextArgs, seed: u64) -> Result<()> {
    let train = load_corpus(&a.train)?;
    let val = load_corpus(&a.val)?;
    let config = a.train_args.config(seed);
    config.validate().map_err(|e| usage(e.to_string()))?;
    if a.embed_dim == 0 || a.hidden == 0 || a.max_len == 0 {
        return Err(usage("--embed-dim, --hidden and --max-len must be positive"));
    }
    let shape = ModelShape {
        embed_dim: a.embed_dim,
        hidden: a.hidden,
        max_len: a.max_len,
    };
    let (model, history) = train_text_model(&train, &val, &shape, a.min_count, &config)?;
    create_parent(&a.out)?;
    model.save(&a.out)?;
    #[derive(Serialize)]
    struct Text<'a> {
        shape: &'a ModelShape,
        vocab_size: usize,
        min_count: usize,
    }
    write_json(
        &sidecar(&a.out),
        &CheckpointInfo {
            kind: "text",
            format: std::str::from_utf8(TEXT_MAGIC)?,
            classes: model.net.num_classes(),
            model: Text {
                shape: &shape,
                vocab_size: model.vocab.len(),
                min_count: a.min_count,
            },
            train: &config,
            train_documents: train.len(),
            val_documents: val.len(),
            history: &history,
        },
    )?;
    print_history(&history)
}

fn run_train_image(a: TrainImageArgs, seed: u64) -> Result<()> {
    let train = load_corpus(&a.train)?;
    let val = load_corpus(&a.val)?;
    let config = a.train_args.config(seed);
    config.validate().map_err(|e| usage(e.to_string()))?;
    if !(a.l2.is_finite() && a.l2 >= 0.0) {
        return Err(usage("--l2 must be a non-negative number"));
    }
    let (model, history) = train_image_model(&train, &val, a.l2, &config)?;
    create_parent(&a.out)?;
    model.save(&a.out)?;
    #[derive(Serialize)]
    struct Image {
        dim: usize,
        l2: f64,
    }
    write_json(
        &sidecar(&a.out),
        &CheckpointInfo {
            kind: "image",
            format: std::str::from_utf8(VISION_MAGIC)?,
            classes: model.num_classes(),
            model: Image { dim: model.dim(), l2: a.l2 },
            train: &config,
            train_documents: train.documents().iter().filter(|d| d.image_features.is_some()).count(),
            val_documents: val.documents().iter().filter(|d| d.image_features.is_some()).count(),
            history: &history,
        },
    )?;
    print_history(&history)
}

fn load_text(path: &Path) -> Result<TextClassifier> {
    TextClassifier::load(path).with_context(|| format!("loading text model {}", path.display()))
}

fn load_image(path: &Path) -> Result<LinearSoftmaxModel> {
    LinearSoftmaxModel::load(path).with_context(|| format!("loading image model {}", path.display()))
}

fn with_images(corpus: &Corpus) -> Corpus {
    corpus.filter(|d| d.image_features.is_some())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let val = with_images(&load_corpus(&a.val)?);
    let text = load_text(&a.text_model)?;
    let image = load_image(&a.image_model)?;
    let result = sweep_alpha(&val, &text, &image, &a.grid)?;
    let table = result.to_table();
    print!("{table}");
    eprintln!("best alpha {} (msAP {:.6})", result.best_alpha, result.best_msap);
    if let Some(out) = &a.out {
        write_file(out, &table)?;
        write_json(&sidecar(out), &result)?;
    }
    Ok(())
}

fn fusion_weight(alpha: f64) -> Result<FusionWeight> {
    FusionWeight::new(alpha).map_err(|e| usage(e.to_string()))
}

fn zeroshot_scorer(m: &ModelArgs, embeddings: &Path) -> Result<ZeroShotScorer> {
    let catalog_path = m.catalog.as_deref().ok_or_else(|| usage("zero-shot scoring needs --catalog"))?;
    let catalog = load_catalog(catalog_path)?;
    let table = EmbeddingTable::load(embeddings).with_context(|| format!("loading {}", embeddings.display()))?;
    let mut scorer = ZeroShotScorer::new(&catalog, table);
    scorer.similarity = m.similarity;
    scorer.alpha = fusion_weight(m.alpha)?;
    scorer.top_n = m.top_concepts;
    scorer.use_text = !m.no_text;
    if let Some(path) = &m.concepts {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let map: HashMap<_, _> = parse_concept_file(&text)?.into_iter().collect();
        scorer.concepts = ConceptSource::ById(map);
    } else if let Some(path) = &m.concept_names {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        scorer.concepts = ConceptSource::FromFeatures(
            text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
        );
    }
    if m.no_text && matches!(scorer.concepts, ConceptSource::None) {
        return Err(usage("--no-text leaves the zero-shot scorer without input; give --concepts or --concept-names"));
    }
    log::info!("{} of {} emoji have a prototype", scorer.prototypes.len(), scorer.classes);
    Ok(scorer)
}

/// A scorer plus whether it needs image features on every document.
struct Model {
    scorer: Box<dyn Scorer>,
    needs_images: bool,
}

fn build_model(m: &ModelArgs, zeroshot: bool) -> Result<Model> {
    if let Some(embeddings) = &m.embeddings {
        if m.text_model.is_some() || m.image_model.is_some() {
            return Err(usage("give either --embeddings or trained models, not both"));
        }
        return Ok(Model {
            scorer: Box::new(zeroshot_scorer(m, embeddings)?),
            needs_images: false,
        });
    }
    if zeroshot {
        return Err(usage("zero-shot evaluation needs --embeddings"));
    }
    let alpha = fusion_weight(m.alpha)?;
    let scorer: Box<dyn Scorer> = match (&m.text_model, &m.image_model) {
        (Some(t), Some(i)) => Box::new(FusedScorer {
            text: load_text(t)?,
            image: load_image(i)?,
            alpha,
        }),
        (Some(t), None) => Box::new(load_text(t)?),
        (None, Some(i)) => Box::new(load_image(i)?),
        (None, None) => return Err(usage("give --text-model, --image-model or --embeddings")),
    };
    Ok(Model {
        scorer,
        needs_images: m.image_model.is_some(),
    })
}

fn scored_index(corpus: &Corpus, model: &Model) -> Result<(Corpus, ScoreIndex)> {
    let corpus = if model.needs_images { with_images(corpus) } else { corpus.clone() };
    if corpus.is_empty() {
        bail!("no documents to score");
    }
    if model.scorer.num_classes() != corpus.num_classes() {
        bail!(
            "model predicts {} classes but the corpus has {}",
            model.scorer.num_classes(),
            corpus.num_classes()
        );
    }
    let index = build_index(&corpus, model.scorer.as_ref())?;
    Ok((corpus, index))
}

fn print_report(report: &MetricReport, json: bool) -> Result<()> {
    let text = if json { report.to_json_lines() } else { report.to_text() };
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn map_value(report: &emojimodal::metrics::MapReport, n: usize, c: usize) -> MetricValue {
    MetricValue {
        name: "map".into(),
        k: None,
        value: report.map,
        n,
        c,
    }
}

fn check_topk(topk: &[usize]) -> Result<()> {
    if topk.is_empty() || topk.contains(&0) {
        return Err(usage("--topk values must be at least 1"));
    }
    Ok(())
}

fn run_eval(a: EvalArgs, zeroshot: bool) -> Result<()> {
    check_topk(&a.topk)?;
    let model = build_model(&a.model, zeroshot)?;
    let (corpus, index) = scored_index(&load_corpus(&a.corpus)?, &model)?;
    log::info!("scored {} documents with {}", index.len(), index.scorer_tag());
    let scores: Vec<ScoreVector> = (0..index.len()).map(|i| ScoreVector::new(index.row(i).to_vec())).collect();
    let labels = corpus.labels();
    let batch = EvalBatch::from_labels(&scores, &labels, corpus.num_classes())?;
    let mut report = MetricReport::prediction(&batch, &a.topk)?;
    if a.retrieval || zeroshot {
        report.push(map_value(&evaluate_retrieval(&index, &labels)?, index.len(), index.num_classes()));
    }
    print_report(&report, a.json)
}

fn run_index(a: IndexArgs) -> Result<()> {
    let model = build_model(&a.model, false)?;
    let (corpus, index) = scored_index(&load_corpus(&a.corpus)?, &model)?;
    create_parent(&a.out)?;
    index.save(&a.out)?;
    let map = evaluate_retrieval(&index, &corpus.labels())?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "documents\t{}", index.len())?;
    writeln!(out, "classes\t{}", index.num_classes())?;
    writeln!(out, "scorer\t{}", index.scorer_tag())?;
    writeln!(out, "map\t{:.6}", map.map)?;
    Ok(())
}

fn run_search(a: SearchArgs) -> Result<()> {
    if a.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let index = ScoreIndex::load(&a.index).with_context(|| format!("loading index {}", a.index.display()))?;
    let catalog = load_catalog(&a.catalog)?;
    if catalog.len() != index.num_classes() {
        bail!("index has {} classes but the catalog has {}", index.num_classes(), catalog.len());
    }
    let q = EmojiQuery::parse(&a.query, &catalog)?;
    let results = query(&index, &q, a.k, a.combine)?;
    let mut out = std::io::stdout().lock();
    if a.json {
        writeln!(out, "{}", serde_json::to_string(&emojimodal_server::SearchResponse { query: q.raw, results })?)?;
    } else {
        for r in results {
            writeln!(out, "{}\t{:.6}\t{}\t{}", r.rank, r.score, r.doc_id, r.snippet.trim())?;
        }
    }
    Ok(())
}

fn run_serve(a: ServeArgs) -> Result<()> {
    let index = ScoreIndex::load(&a.index).with_context(|| format!("loading index {}", a.index.display()))?;
    let m = &a.model;
    let catalog_path = m.catalog.as_deref().ok_or_else(|| usage("serve needs --catalog"))?;
    let catalog = load_catalog(catalog_path)?;
    let predictor = Predictor {
        text: m.text_model.as_deref().map(load_text).transpose()?,
        image: m.image_model.as_deref().map(load_image).transpose()?,
        zeroshot: m.embeddings.as_deref().map(|e| zeroshot_scorer(m, e)).transpose()?,
        alpha: Some(fusion_weight(m.alpha)?.value()),
    };
    let mut service = Service::new(catalog, index)?.with_predictor(predictor);
    if let Some(dir) = &a.ui_dir {
        service = service.with_ui_dir(dir);
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .with_context(|| format!("binding {}", a.bind))?;
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        drop(out);
        emojimodal_server::serve(listener, Arc::new(service), emojimodal_server::shutdown_signal()).await?;
        Ok(())
    })
}

fn run_metrics(a: MetricsArgs) -> Result<()> {
    check_topk(&a.topk)?;
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let scores = parse_score_matrix(&read(&a.scores)?)?;
    let labels = parse_label_matrix(&read(&a.labels)?)?;
    let batch = EvalBatch::new(scores, labels)?;
    let mut report = MetricReport::prediction(&batch, &a.topk)?;
    if a.map {
        report.push(map_value(&map_per_query(&batch)?, batch.rows(), batch.cols()));
    }
    print_report(&report, a.json)
}
