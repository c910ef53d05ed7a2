use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use seqtag::corpus::{self, read_conll, write_tagged, ColumnMap, DevSize, ReadOptions, Sentence, Strictness};
use seqtag::eval;
use seqtag::features::{load_embeddings, EmbeddingMode, EmbeddingTable, FeatureConfig, FeatureExtractor, FeatureSpec, RegexRuleSet};
use seqtag::model::{load_model, save_model, CellKind};
use seqtag::selfcheck;
use seqtag::train::{self as trainer, Layout, Resources, RunSpec, TrainError};

use crate::config::{split_list, FileConfig, TrainSettings, DEFAULT_MODEL_PATH};
use crate::manifest::{sibling, RunManifest};
use crate::{AblateArgs, CliError, EvalArgs, SelfcheckArgs, StatsArgs, TagArgs, TrainArgs, EXIT_NON_FINITE, EXIT_SELFCHECK};

pub struct Context {
    pub seed: Option<u64>,
    pub quiet: bool,
    pub file: FileConfig,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn at(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("{}: {}", path.display(), e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| at(path, e))
}

fn read_corpus(path: &Path, opts: &ReadOptions) -> Result<Vec<Sentence>, CliError> {
    read_conll(open(path)?, opts).map_err(|e| at(path, e))
}

fn train_read_options(s: &TrainSettings) -> Result<ReadOptions, CliError> {
    Ok(ReadOptions {
        columns: ColumnMap::default(),
        strictness: if s.lenient { Strictness::Lenient } else { Strictness::Strict },
        scheme: s.scheme()?,
        max_len: Some(s.max_sentence_len),
        entity_types: Some(s.entity_types()),
    })
}

/// Vector width from a word2vec text file: the header's second number, or
/// the component count of the first line.
fn embedding_file_dim(path: &Path) -> Result<usize, CliError> {
    let mut first = String::new();
    open(path)?.read_line(&mut first).map_err(|e| at(path, e))?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    match fields.as_slice() {
        [a, b] if a.parse::<usize>().is_ok() => b.parse().map_err(|_| at(path, "line 1: bad header")),
        [_, rest @ ..] if !rest.is_empty() => Ok(rest.len()),
        _ => Err(at(path, "line 1: no vector found")),
    }
}

fn load_vectors(path: &Path, dim: usize) -> Result<EmbeddingTable, CliError> {
    load_embeddings(open(path)?, dim, 0).map_err(|e| at(path, e))
}

fn load_rules(path: Option<&Path>) -> Result<RegexRuleSet, CliError> {
    match path {
        None => Ok(RegexRuleSet::default_vietnamese()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| at(p, e))?;
            RegexRuleSet::parse(&text).map_err(|e| at(p, e))
        }
    }
}

struct Prepared {
    train: Vec<Sentence>,
    dev: Vec<Sentence>,
    resources: Resources,
    inputs: Vec<PathBuf>,
}

fn prepare(ctx: &Context, settings: &mut TrainSettings) -> Result<Prepared, CliError> {
    let opts = train_read_options(settings)?;
    let mut inputs = vec![settings.train.clone()];
    let all = read_corpus(&settings.train, &opts)?;
    let (train, dev) = match &settings.dev {
        Some(dev) => {
            inputs.push(dev.clone());
            (all, read_corpus(dev, &opts)?)
        }
        None => corpus::split(all, DevSize::Fraction(settings.dev_fraction), Some(settings.seed))
            .map_err(|e| at(&settings.train, e))?,
    };
    ctx.note(format!("{} training and {} dev sentences", train.len(), dev.len()));

    let mut resources = Resources {
        embedding_dim: settings.embedding_dim,
        rules: load_rules(settings.regex_file.as_deref())?,
        entity_types: settings.entity_types(),
        ..Resources::default()
    };
    if let Some(p) = &settings.regex_file {
        inputs.push(p.clone());
    }
    let mode = settings.embedding_mode()?;
    match (&settings.embeddings, mode) {
        (Some(path), _) => {
            if !settings.embedding_dim_explicit {
                settings.embedding_dim = embedding_file_dim(path)?;
            }
            let table = load_vectors(path, settings.embedding_dim)?;
            ctx.note(format!("{} word vectors of width {}", table.len(), table.dim()));
            resources.embeddings = Some(table);
            resources.embedding_source = Some(path.display().to_string());
            inputs.push(path.clone());
        }
        (None, EmbeddingMode::Pretrained) => {
            return Err(CliError::usage("--embedding-mode skipgram needs --embeddings <file>"));
        }
        _ => {}
    }
    Ok(Prepared {
        train,
        dev,
        resources,
        inputs,
    })
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::NonFiniteLoss { .. } => CliError {
            code: EXIT_NON_FINITE,
            message: e.to_string(),
        },
        other => CliError::input(other.to_string()),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| at(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| at(path, e))
}

fn model_bytes(fitted: &trainer::Fitted) -> Vec<u8> {
    let pipeline = serde_json::to_value(fitted.extractor.spec()).expect("spec serializes");
    let mut buf = Vec::new();
    save_model(&fitted.tagger, &pipeline, &mut buf).expect("writing to memory");
    buf
}

#[derive(Serialize)]
struct TrainManifestConfig<'a> {
    #[serde(flatten)]
    settings: &'a TrainSettings,
    out: &'a Path,
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<(), CliError> {
    let mut settings = TrainSettings::resolve(ctx.seed, &args.flags, &ctx.file)?;
    let out = args
        .out
        .or_else(|| ctx.file.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_MODEL_PATH));
    let data = prepare(ctx, &mut settings)?;
    let spec = settings.run_spec()?;
    let config = settings.train_config();

    let fitted = trainer::fit(&spec, &data.train, &data.dev, &data.resources, &config, &mut |e| {
        ctx.note(format!(
            "epoch {:>3}  loss {:.4}  dev F1 {:6.2}  ({:.1}s)",
            e.epoch, e.loss, e.dev_f1, e.seconds
        ))
    })
    .map_err(train_error)?;

    let log_path = sibling(&out, ".log");
    let manifest_path = sibling(&out, ".manifest.json");
    write_file(&out, &model_bytes(&fitted))?;
    write_file(&log_path, fitted.log.render().as_bytes())?;
    let inputs: Vec<&Path> = data.inputs.iter().map(PathBuf::as_path).collect();
    RunManifest::new(
        "train",
        settings.seed,
        &TrainManifestConfig {
            settings: &settings,
            out: &out,
        },
        &inputs,
        vec![out.clone(), log_path.clone()],
    )?
    .write(&manifest_path)?;

    print!("{}", eval::render(&fitted.dev_report));
    println!(
        "dev F1 {:.2} at epoch {} of {} ({}); model written to {}",
        fitted.log.best_dev_f1,
        fitted.log.best_epoch,
        fitted.log.epochs.len(),
        fitted.log.stop_reason,
        out.display()
    );
    Ok(())
}

/// Label column present iff the first token line has at least four columns.
fn detect_columns(path: &Path) -> Result<ColumnMap, CliError> {
    for line in open(path)?.lines() {
        let line = line.map_err(|e| at(path, e))?;
        let n = line.split_whitespace().count();
        if n == 0 || line.trim_start().starts_with("-DOCSTART-") {
            continue;
        }
        return Ok(if n >= 4 { ColumnMap::default() } else { ColumnMap::unlabeled() });
    }
    Ok(ColumnMap::default())
}

fn required(value: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::usage(format!("--{} is required", flag)))
}

#[derive(Serialize)]
struct TagManifestConfig<'a> {
    model: &'a Path,
    input: &'a Path,
    output: &'a Path,
    embeddings: Option<&'a Path>,
}

pub fn tag(ctx: &Context, args: TagArgs) -> Result<(), CliError> {
    let model_path = required(args.model, &ctx.file.model, "model")?;
    let input = required(args.input, &ctx.file.input, "input")?;
    let output = args.output.or_else(|| ctx.file.output.clone());
    let (tagger, pipeline) = load_model(open(&model_path)?).map_err(|e| at(&model_path, e))?;
    let spec: FeatureSpec = serde_json::from_value(pipeline)
        .map_err(|e| at(&model_path, format!("bad feature pipeline record: {}", e)))?;

    let mut inputs = vec![model_path.clone(), input.clone()];
    let table = if spec.embedding_mode == EmbeddingMode::Pretrained {
        let path = args
            .embeddings
            .or_else(|| ctx.file.embeddings.clone())
            .or_else(|| spec.embedding_source.as_ref().map(PathBuf::from))
            .ok_or_else(|| CliError::usage("this model needs --embeddings <file>"))?;
        inputs.push(path.clone());
        Some(load_vectors(&path, spec.embedding_dim)?)
    } else {
        None
    };
    let extractor = FeatureExtractor::from_spec(&spec, table).map_err(|e| at(&model_path, e))?;
    if extractor.input_dim() != tagger.config.input_dim {
        return Err(CliError::input(format!(
            "{}: feature width mismatch: pipeline produces {} features, model expects {}",
            model_path.display(),
            extractor.input_dim(),
            tagger.config.input_dim
        )));
    }

    let opts = ReadOptions {
        columns: detect_columns(&input)?,
        strictness: Strictness::Lenient,
        max_len: None,
        entity_types: None,
        ..ReadOptions::default()
    };
    let sentences = read_corpus(&input, &opts)?;
    let tagged = trainer::tag_sentences(&tagger, &extractor, &sentences).map_err(|e| at(&input, e))?;
    match &output {
        Some(path) => {
            let mut buf = Vec::new();
            write_tagged(&mut buf, &tagged).expect("writing to memory");
            write_file(path, &buf)?;
            let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            RunManifest::new(
                "tag",
                0,
                &TagManifestConfig {
                    model: &model_path,
                    input: &input,
                    output: path,
                    embeddings: inputs.get(2).map(PathBuf::as_path),
                },
                &refs,
                vec![path.clone()],
            )?
            .write(&sibling(path, ".manifest.json"))?;
            ctx.note(format!("tagged {} sentences into {}", tagged.len(), path.display()));
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_tagged(&mut w, &tagged)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::input(format!("stdout: {}", e)))?;
        }
    }
    Ok(())
}

pub fn eval(ctx: &Context, args: EvalArgs) -> Result<(), CliError> {
    let input = required(args.input, &ctx.file.input, "input")?;
    let text = std::fs::read_to_string(&input).map_err(|e| at(&input, e))?;
    let sentences = eval::parse_conlleval(&text).map_err(|e| at(&input, e))?;
    let types = args.types.or_else(|| ctx.file.types.clone()).map(|t| split_list(&t));
    let report = eval::score(&sentences, types.as_deref()).map_err(|e| at(&input, e))?;
    print!("{}", eval::render(&report));
    Ok(())
}

/// One `[[row]]` of a row-spec file; unset keys inherit the base settings.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowEntry {
    name: String,
    features: Option<String>,
    embedding_mode: Option<String>,
    cell: Option<String>,
    bidi: Option<bool>,
    layers: Option<usize>,
    hidden: Option<usize>,
    dropout: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowFile {
    row: Vec<RowEntry>,
}

fn read_rows(path: &Path, base: &RunSpec) -> Result<Vec<RunSpec>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| at(path, e))?;
    let file: RowFile = toml::from_str(&text).map_err(|e| at(path, e))?;
    file.row
        .into_iter()
        .map(|r| {
            let bad = |m: String| at(path, format!("row '{}': {}", r.name, m));
            Ok(RunSpec {
                features: match &r.features {
                    Some(f) => FeatureConfig::parse_list(f).map_err(bad)?,
                    None => base.features.clone(),
                },
                embedding_mode: match &r.embedding_mode {
                    Some(m) => m.parse::<EmbeddingMode>().map_err(bad)?,
                    None => base.embedding_mode,
                },
                cell: match &r.cell {
                    Some(c) => c.parse::<CellKind>().map_err(bad)?,
                    None => base.cell,
                },
                bidirectional: r.bidi.unwrap_or(base.bidirectional),
                layers: r.layers.unwrap_or(base.layers),
                hidden: r.hidden.unwrap_or(base.hidden),
                dropout: r.dropout.unwrap_or(base.dropout),
                name: r.name,
            })
        })
        .collect()
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[derive(Serialize)]
struct AblateManifestConfig<'a> {
    #[serde(flatten)]
    settings: &'a TrainSettings,
    preset: Option<&'a str>,
    rows: Option<&'a Path>,
    out_dir: &'a Path,
    keep_models: bool,
}

pub fn ablate(ctx: &Context, args: AblateArgs) -> Result<(), CliError> {
    let mut settings = TrainSettings::resolve(ctx.seed, &args.flags, &ctx.file)?;
    let out_dir = args
        .out_dir
        .or_else(|| ctx.file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ablation"));
    let keep_models = args.keep_models || ctx.file.keep_models.unwrap_or(false);
    let rows_path = args.rows.or_else(|| ctx.file.rows.clone());
    let preset_name = args.preset.or_else(|| ctx.file.preset.clone());
    let data = prepare(ctx, &mut settings)?;
    let base = settings.run_spec()?;

    let (name, layout, rows) = match (&preset_name, &rows_path) {
        (Some(p), None) => {
            let preset = trainer::preset(p, &base).ok_or_else(|| {
                CliError::usage(format!("unknown preset '{}' (expected one of {})", p, trainer::PRESETS.join(", ")))
            })?;
            (preset.name.to_string(), preset.layout, preset.rows)
        }
        (None, Some(path)) => ("rows".to_string(), Layout::ByRow, read_rows(path, &base)?),
        (Some(_), Some(_)) => return Err(CliError::usage("give either --preset or --rows, not both")),
        (None, None) => return Err(CliError::usage("--preset or --rows is required")),
    };
    ctx.note(format!("training {} rows", rows.len()));
    let started = Instant::now();
    let results = trainer::ablate(&rows, &data.train, &data.dev, &data.resources, &settings.train_config(), keep_models);
    ctx.note(format!("done in {:.1}s", started.elapsed().as_secs_f64()));

    let text = trainer::render_table(&results, layout);
    let text_path = out_dir.join(format!("{}.txt", name));
    let tsv_path = out_dir.join(format!("{}.tsv", name));
    write_file(&text_path, text.as_bytes())?;
    write_file(&tsv_path, trainer::render_tsv(&results).as_bytes())?;
    let mut outputs = vec![text_path, tsv_path];
    for row in &results {
        if let Some(f) = &row.fitted {
            let p = out_dir.join(format!("{}.sqtg", slug(&row.spec.name)));
            write_file(&p, &model_bytes(f))?;
            outputs.push(p);
        }
    }
    let mut inputs: Vec<&Path> = data.inputs.iter().map(PathBuf::as_path).collect();
    if let Some(p) = &rows_path {
        inputs.push(p);
    }
    RunManifest::new(
        "ablate",
        settings.seed,
        &AblateManifestConfig {
            settings: &settings,
            preset: preset_name.as_deref(),
            rows: rows_path.as_deref(),
            out_dir: &out_dir,
            keep_models,
        },
        &inputs,
        outputs,
    )?
    .write(&out_dir.join("manifest.json"))?;
    print!("{}", text);
    Ok(())
}

pub fn stats(_ctx: &Context, args: StatsArgs) -> Result<(), CliError> {
    let opts = ReadOptions {
        strictness: if args.lenient { Strictness::Lenient } else { Strictness::Strict },
        scheme: args.scheme.parse().map_err(CliError::usage)?,
        max_len: None,
        entity_types: None,
        ..ReadOptions::default()
    };
    for (i, path) in args.inputs.iter().enumerate() {
        let sentences = read_corpus(path, &opts)?;
        let st = corpus::stats(&sentences).map_err(|e| at(path, e))?;
        if args.kv {
            print!("{}", st.render_kv().lines().map(|l| format!("{}\t{}\n", path.display(), l)).collect::<String>());
        } else {
            if i > 0 {
                println!();
            }
            println!("{}", path.display());
            print!("{}", st.render_table());
        }
    }
    Ok(())
}

pub fn selfcheck(ctx: &Context, args: SelfcheckArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let report = selfcheck::run(args.seeds, args.cases, args.corrupt_gradient);
    let grad_ok = report.worst_grad_error < selfcheck::GRAD_TOLERANCE;
    println!(
        "gradient check: {} seeds, worst relative error {:.3e} (limit {:.0e}) {}",
        report.seeds,
        report.worst_grad_error,
        selfcheck::GRAD_TOLERANCE,
        if grad_ok { "ok" } else { "FAILED" }
    );
    println!(
        "scorer oracle: {} cases, {} mismatches {}",
        report.oracle_cases,
        report.oracle_mismatches,
        if report.oracle_mismatches == 0 { "ok" } else { "FAILED" }
    );
    ctx.note(format!("{:.1}s", started.elapsed().as_secs_f64()));
    if report.passed() {
        println!("selfcheck passed");
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_SELFCHECK,
            message: "selfcheck failed".to_string(),
        })
    }
}
