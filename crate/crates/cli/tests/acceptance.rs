//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use seqtag::corpus::{
    convert_scheme, extract_spans, parse_tag, read_conll, ReadOptions, Scheme, Sentence, Token,
};
use seqtag::eval::f1;
use seqtag::features::{EmbeddingMode, EmbeddingTable, FeatureConfig, FeatureKind};
use seqtag::model::{
    backward_layer, load_model, run_bilayer, run_layer, save_model, Cell, CellKind, Direction, LstmCellParams,
    ModelError, RnnCellParams, Tagger, TaggerConfig, FORGET_BIAS_INIT,
};
use seqtag::numerics::{l2_norm, uniform_vector, Rng};
use seqtag::selfcheck::{gradient_check, oracle_spans, scorer_oracle_check, GradShape, GRAD_TOLERANCE};
use seqtag::train::{ablate, fit, Resources, RunSpec, TrainConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy").join(name)
}

fn read_toy(name: &str) -> Vec<Sentence> {
    let file = std::fs::File::open(toy(name)).expect("toy corpus present");
    read_conll(std::io::BufReader::new(file), &ReadOptions::default()).expect("toy corpus parses")
}

fn gradients() -> Outcome {
    let started = Instant::now();
    let seeds = 20;
    let worst = (0..seeds)
        .map(|s| gradient_check(s, GradShape::default(), false))
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    check(
        worst < GRAD_TOLERANCE && secs < 60.0,
        format!("{} seeds, worst relative error {:.3e}, {:.1}s", seeds, worst, secs),
    )
}

fn f1_arithmetic() -> Outcome {
    let a = f1(91.09, 93.03);
    let b = f1(75.88, 72.26);
    let exact = (f1(50.0, 50.0) - 50.0).abs() < 1e-12 && f1(0.0, 0.0) == 0.0;
    check(
        (a - 92.05).abs() <= 0.01 && (b - 74.02).abs() <= 0.01 && exact,
        format!("f1(91.09, 93.03) = {:.4}, f1(75.88, 72.26) = {:.4}", a, b),
    )
}

fn scorer_oracle() -> Outcome {
    let mismatches = scorer_oracle_check(2017, 1000);
    check(mismatches == 0, format!("1000 cases, {} mismatches", mismatches))
}

fn overfit() -> Outcome {
    let started = Instant::now();
    let sentences = read_toy("train.conll");
    let cfg = TrainConfig {
        max_epochs: 200,
        patience: 200,
        target_f1: Some(100.0),
        ..TrainConfig::default()
    };
    let fitted = fit(&RunSpec::default(), &sentences, &sentences, &Resources::default(), &cfg, &mut |_| {})
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let score = fitted.dev_report.overall.f1();
    check(
        sentences.len() <= 50 && format!("{:.2}", score) == "100.00" && secs < 300.0,
        format!(
            "{} sentences, train F1 {:.2} after {} epochs, {:.0}s",
            sentences.len(),
            score,
            fitted.log.epochs.len(),
            secs
        ),
    )
}

fn random_cell(kind: CellKind, hidden: usize, input: usize, rng: &mut Rng) -> Cell {
    match kind {
        CellKind::Lstm => Cell::Lstm(LstmCellParams::init(hidden, input, FORGET_BIAS_INIT, rng)),
        CellKind::Rnn => Cell::Rnn(RnnCellParams::init(hidden, input, rng)),
    }
}

fn random_inputs(rng: &mut Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| uniform_vector(rng, dim, 1.0).unwrap()).collect()
}

fn bilayer() -> Outcome {
    let mut rng = Rng::new(5);
    let mut identical = 0;
    for case in 0..100 {
        let (h, d) = (1 + case % 7, 1 + case % 5);
        let len = 1 + (rng.next_u64() % 20) as usize;
        let fwd = random_cell(CellKind::Lstm, h, d, &mut rng);
        let bwd = random_cell(CellKind::Lstm, h, d, &mut rng);
        let xs = random_inputs(&mut rng, len, d);
        let both = run_bilayer(&fwd, &bwd, &xs).unwrap();
        let f = run_layer(&fwd, &xs, Direction::Forward).unwrap();
        let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let mut b = run_layer(&bwd, &reversed, Direction::Forward).unwrap();
        b.reverse();
        let concat: Vec<Vec<f64>> = f.into_iter().zip(b).map(|(a, b)| [a, b].concat()).collect();
        let same = both.len() == concat.len()
            && both
                .iter()
                .flatten()
                .zip(concat.iter().flatten())
                .all(|(x, y)| x.to_bits() == y.to_bits());
        identical += same as usize;
    }
    check(identical == 100, format!("{} of 100 inputs bit-identical", identical))
}

fn masked_log(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?;
    let mut out = String::new();
    let mut in_table = true;
    for line in text.lines() {
        if line.is_empty() {
            in_table = false;
        }
        if in_table {
            let mut cols: Vec<&str> = line.split('\t').collect();
            if cols.len() == 4 && cols[0] != "epoch" {
                cols[3] = "-";
            }
            out.push_str(&cols.join("\t"));
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let train = toy("train.conll");
    let mut models = Vec::new();
    let mut logs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{}.sqtg", run));
        let status = Command::new(env!("CARGO_BIN_EXE_seqtag"))
            .args(["--quiet", "--seed", "7", "train", "--train"])
            .arg(&train)
            .arg("--out")
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("train exited with {}", status));
        }
        models.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        logs.push(masked_log(&dir.path().join(format!("run{}.sqtg.log", run)))?);
    }
    check(
        models[0] == models[1] && logs[0] == logs[1],
        format!(
            "model files {} ({} bytes), logs {}",
            if models[0] == models[1] { "identical" } else { "differ" },
            models[0].len(),
            if logs[0] == logs[1] { "identical" } else { "differ" }
        ),
    )
}

fn oov_statistics() -> Outcome {
    let dim = 300;
    let draws = 100_000;
    let bound = (3.0 / dim as f64).sqrt();
    let (mut n, mut sum, mut sum_sq) = (0.0f64, 0.0f64, 0.0f64);
    let mut in_bounds = true;
    let mut table = EmbeddingTable::random(dim, 11).map_err(|e| e.to_string())?;
    for i in 0..draws {
        if i % 5000 == 0 {
            table = EmbeddingTable::random(dim, 11).map_err(|e| e.to_string())?;
        }
        for x in table.lookup(&format!("oov{}", i)) {
            in_bounds &= (-bound..=bound).contains(&x) && (-0.1..=0.1).contains(&x);
            n += 1.0;
            sum += x;
            sum_sq += x * x;
        }
    }
    let mean = sum / n;
    let var = sum_sq / n - mean * mean;
    let target = 0.01 / 3.0;
    check(
        in_bounds && mean.abs() <= 0.002 && ((var - target) / target).abs() <= 0.05,
        format!(
            "{} draws, all in [-0.1, 0.1]: {}, mean {:.2e}, variance {:.4e} (target {:.4e})",
            draws, in_bounds, mean, var, target
        ),
    )
}

/// Words are random; labels follow the chunk tags.
fn chunk_corpus(rng: &mut Rng, sentences: usize) -> Vec<Sentence> {
    let phrases: [(&str, Option<&str>); 4] = [("NP", Some("PER")), ("AP", Some("LOC")), ("VP", None), ("PP", None)];
    (0..sentences)
        .map(|_| {
            let mut tokens = Vec::new();
            let len = 6 + (rng.next_u64() % 8) as usize;
            while tokens.len() < len {
                let (chunk, label) = phrases[(rng.next_u64() % 4) as usize];
                let width = 1 + (rng.next_u64() % 3) as usize;
                for k in 0..width {
                    let word = format!("w{}", rng.next_u64() % 2000);
                    let prefix = if k == 0 { "B" } else { "I" };
                    let chunk_tag = format!("{}-{}", prefix, chunk);
                    let gold = label.map_or("O".to_string(), |l| format!("{}-{}", prefix, l));
                    tokens.push(Token::new(&word, "N", &chunk_tag, &gold));
                }
            }
            Sentence::new(tokens)
        })
        .collect()
}

fn chunk_directionality() -> Outcome {
    let mut rng = Rng::new(8);
    let train = chunk_corpus(&mut rng, 200);
    let dev = chunk_corpus(&mut rng, 50);
    let base = RunSpec {
        embedding_mode: EmbeddingMode::Random,
        hidden: 16,
        layers: 1,
        ..RunSpec::default()
    };
    let rows = vec![
        RunSpec {
            name: "Word".to_string(),
            features: FeatureConfig::word_only(),
            ..base.clone()
        },
        RunSpec {
            name: "Word+Chunk".to_string(),
            features: FeatureConfig::new([FeatureKind::Chunk]),
            ..base
        },
    ];
    let resources = Resources {
        embedding_dim: 50,
        ..Resources::default()
    };
    let cfg = TrainConfig {
        max_epochs: 15,
        seed: 3,
        ..TrainConfig::default()
    };
    let results = ablate(&rows, &train, &dev, &resources, &cfg, false);
    let score = |i: usize| -> Result<f64, String> {
        results[i].result.as_ref().map(|r| r.overall.f1()).map_err(Clone::clone)
    };
    let (word, chunk) = (score(0)?, score(1)?);
    check(
        chunk >= word + 20.0,
        format!("Word F1 {:.2}, Word+Chunk F1 {:.2}", word, chunk),
    )
}

fn all_sequences(alphabet: &[&'static str], len: usize) -> Vec<Vec<&'static str>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<&str>| {
                alphabet.iter().map(move |a| {
                    let mut p = prefix.clone();
                    p.push(*a);
                    p
                })
            })
            .collect();
    }
    out
}

fn valid_iob2(labels: &[&str]) -> bool {
    labels.iter().enumerate().all(|(i, l)| match l.strip_prefix("I-") {
        Some(t) => i > 0 && parse_tag(labels[i - 1]).and_then(|p| p.entity_type()) == Some(t),
        None => true,
    })
}

fn iob_machinery() -> Outcome {
    let alphabet = ["O", "B-A", "I-A", "B-B", "I-B"];
    let (mut checked, mut span_errors) = (0, 0);
    for len in 0..=6 {
        for seq in all_sequences(&alphabet, len).iter().filter(|s| valid_iob2(s)) {
            checked += 1;
            let got: std::collections::BTreeSet<_> = extract_spans(seq)
                .map_err(|e| format!("{:?}: {}", seq, e))?
                .into_iter()
                .map(|s| (s.entity_type, s.start, s.end))
                .collect();
            span_errors += (got != oracle_spans(seq)) as usize;
        }
    }
    let (mut round_trips, mut round_errors) = (0, 0);
    for len in 0..=5 {
        for seq in all_sequences(&alphabet, len).iter().filter(|s| valid_iob2(s)) {
            round_trips += 1;
            let back = convert_scheme(seq, Scheme::Iob2, Scheme::Iob1)
                .and_then(|iob1| convert_scheme(&iob1, Scheme::Iob1, Scheme::Iob2));
            round_errors += (back.ok().as_deref() != Some(&seq.iter().map(|s| s.to_string()).collect::<Vec<_>>()[..])) as usize;
        }
    }
    check(
        span_errors == 0 && round_errors == 0,
        format!(
            "{} sequences, {} span mismatches; {} round trips, {} failures",
            checked, span_errors, round_trips, round_errors
        ),
    )
}

fn serialization() -> Outcome {
    let mut cfg = TaggerConfig::new(6, vec!["O".into(), "B-PER".into(), "I-PER".into()]);
    cfg.hidden = 4;
    let tagger = Tagger::init(cfg, &mut Rng::new(10)).map_err(|e| e.to_string())?;
    let pipeline = serde_json::json!({"note": "acceptance"});
    let mut bytes = Vec::new();
    save_model(&tagger, &pipeline, &mut bytes).map_err(|e| e.to_string())?;
    let (loaded, meta) = load_model(&bytes[..]).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    save_model(&loaded, &meta, &mut again).map_err(|e| e.to_string())?;
    let same_bits = loaded
        .params
        .to_flat()
        .iter()
        .zip(tagger.params.to_flat())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let round_trip = again == bytes && same_bits && meta == pipeline;

    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    let magic = matches!(load_model(&bad_magic[..]), Err(ModelError::BadMagic));
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    let version = matches!(load_model(&bad_version[..]), Err(ModelError::UnsupportedVersion(99)));
    let truncated = (0..bytes.len()).all(|n| matches!(load_model(&bytes[..n]), Err(ModelError::TruncatedFile) | Err(ModelError::BadMagic)))
        && matches!(load_model(&bytes[..bytes.len() - 1]), Err(ModelError::TruncatedFile));
    check(
        round_trip && magic && version && truncated,
        format!(
            "round trip {}, bad magic {}, bad version {}, every truncation rejected {}",
            round_trip, magic, version, truncated
        ),
    )
}

/// log10 of |dL/dx_1| / |dL/dx_T| when the loss reads only the last output.
fn gradient_ratio(cell: &Cell, xs: &[Vec<f64>]) -> Result<f64, String> {
    let h = cell.hidden();
    let mut d_out = vec![vec![0.0; h]; xs.len()];
    d_out[xs.len() - 1] = vec![1.0; h];
    let (_, dx) = backward_layer(cell, xs, Direction::Forward, &d_out).map_err(|e| e.to_string())?;
    Ok((l2_norm(&dx[0]) / l2_norm(&dx[xs.len() - 1])).log10())
}

fn rnn_pathology() -> Outcome {
    let (steps, hidden, input) = (132, 16, 10);
    let mut rng = Rng::new(132);
    let xs = random_inputs(&mut rng, steps, input);
    let lstm = random_cell(CellKind::Lstm, hidden, input, &mut rng);
    let rnn = random_cell(CellKind::Rnn, hidden, input, &mut rng);
    let r_lstm = gradient_ratio(&lstm, &xs)?;
    let r_rnn = gradient_ratio(&rnn, &xs)?;
    check(
        r_rnn.is_finite() && r_rnn.abs() >= r_lstm.abs() + 3.0,
        format!(
            "{} steps: log10 ratio RNN {:.2}, LSTM {:.2}",
            steps, r_rnn, r_lstm
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient check", gradients),
        ("f1 arithmetic", f1_arithmetic),
        ("scorer oracle", scorer_oracle),
        ("toy overfit", overfit),
        ("bidirectional decomposition", bilayer),
        ("determinism", determinism),
        ("oov statistics", oov_statistics),
        ("chunk feature directionality", chunk_directionality),
        ("iob machinery", iob_machinery),
        ("serialization", serialization),
        ("rnn gradient pathology", rnn_pathology),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{} {:>2} {}: {}", tag, i + 1, name, detail);
    }
    if failed > 0 {
        println!("{} of {} criteria failed", failed, criteria.len());
        std::process::exit(1);
    }
}
