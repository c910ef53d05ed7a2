//! Built-in verification: analytic gradients against central finite
//! differences, and the scorer against a brute-force span oracle.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::parse_tag;
use crate::eval::{score_labels, Counts};
use crate::model::{Mode, Tagger, TaggerConfig};
use crate::numerics::{finite_diff_grad, relative_error, uniform_vector, Rng, DEFAULT_FD_EPSILON};

/// Denominator floor for relative gradient errors.
pub const GRAD_ERROR_FLOOR: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Shape of one gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradShape {
    pub hidden: usize,
    pub input: usize,
    pub len: usize,
    pub labels: usize,
    pub layers: usize,
}

impl Default for GradShape {
    /// H=8, D=10, T=5, 4 labels, 2 layers.
    fn default() -> Self {
        GradShape {
            hidden: 8,
            input: 10,
            len: 5,
            labels: 4,
            layers: 2,
        }
    }
}

/// Worst relative error between analytic and numeric gradients of a
/// freshly initialized bidirectional LSTM tagger (dropout 0). With
/// `corrupt`, one analytic component is perturbed first.
pub fn gradient_check(seed: u64, shape: GradShape, corrupt: bool) -> f64 {
    let mut rng = Rng::new(seed);
    let mut cfg = TaggerConfig::new(shape.input, (0..shape.labels).map(|i| format!("L{}", i)).collect());
    cfg.hidden = shape.hidden;
    cfg.layers = shape.layers;
    cfg.dropout = 0.0;
    let tagger = Tagger::init(cfg, &mut rng).expect("valid shape");
    let inputs: Vec<Vec<f64>> = (0..shape.len)
        .map(|_| uniform_vector(&mut rng, shape.input, 1.0).expect("nonzero dim"))
        .collect();
    let gold: Vec<usize> = (0..shape.len).map(|_| (rng.next_u64() % shape.labels as u64) as usize).collect();

    let (_, grads) = tagger
        .loss_and_gradients(&inputs, &gold, Mode::Infer)
        .expect("shapes agree");
    let mut analytic = grads.to_flat();
    if corrupt {
        let k = (rng.next_u64() % analytic.len() as u64) as usize;
        analytic[k] += 1e-2 * analytic[k].abs().max(1.0);
    }
    let mut probe = tagger.clone();
    let mut theta = tagger.params.to_flat();
    let numeric = finite_diff_grad(
        |p| {
            probe.params.set_flat(p);
            probe.loss(&inputs, &gold, Mode::Infer).expect("shapes agree")
        },
        &mut theta,
        DEFAULT_FD_EPSILON,
    );
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n, GRAD_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Every `(type, start, end)` chunk of a label sequence, found by testing
/// each candidate interval against the chunk definition directly: all
/// tokens share the type, every token after the first is `I-`, the first
/// token starts a chunk (a `B-`, the sentence start, or a type change) and
/// the next token does not continue it.
pub fn oracle_spans(labels: &[&str]) -> BTreeSet<(String, usize, usize)> {
    let n = labels.len();
    let ty = |i: usize| parse_tag(labels[i]).and_then(|t| t.entity_type());
    let is_inside = |i: usize, x: &str| labels[i] == format!("I-{}", x);
    let mut out = BTreeSet::new();
    for s in 0..n {
        for e in s..n {
            let Some(x) = ty(s) else { continue };
            if !(s..=e).all(|k| ty(k) == Some(x)) {
                continue;
            }
            let starts = labels[s] == format!("B-{}", x) || s == 0 || ty(s - 1) != Some(x);
            let inner = (s + 1..=e).all(|k| is_inside(k, x));
            let ends = e + 1 == n || !is_inside(e + 1, x);
            if starts && inner && ends {
                out.insert((x.to_string(), s, e));
            }
        }
    }
    out
}

/// Per-type and overall counts from span-set intersection.
pub fn oracle_counts(pairs: &[(Vec<String>, Vec<String>)]) -> (BTreeMap<String, Counts>, Counts) {
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for (g, p) in pairs {
        let g: Vec<&str> = g.iter().map(String::as_str).collect();
        let p: Vec<&str> = p.iter().map(String::as_str).collect();
        let gs = oracle_spans(&g);
        let ps = oracle_spans(&p);
        for (t, _, _) in &gs {
            per_type.entry(t.clone()).or_default().gold += 1;
        }
        for (t, _, _) in &ps {
            per_type.entry(t.clone()).or_default().predicted += 1;
        }
        for (t, _, _) in gs.intersection(&ps) {
            per_type.entry(t.clone()).or_default().correct += 1;
        }
    }
    let mut overall = Counts::default();
    for c in per_type.values() {
        overall.gold += c.gold;
        overall.predicted += c.predicted;
        overall.correct += c.correct;
    }
    (per_type, overall)
}

/// A random label sequence over O / B-X / I-X for the given types. Not
/// necessarily valid IOB2.
pub fn random_labels(rng: &mut Rng, types: &[&str], max_len: usize) -> Vec<String> {
    let len = 1 + (rng.next_u64() % max_len as u64) as usize;
    (0..len)
        .map(|_| {
            let k = (rng.next_u64() % (2 * types.len() as u64 + 1)) as usize;
            if k == 0 {
                "O".to_string()
            } else {
                let prefix = if k % 2 == 1 { "B" } else { "I" };
                format!("{}-{}", prefix, types[(k - 1) / 2])
            }
        })
        .collect()
}

/// Score `cases` random sentence pairs with both the scorer and the oracle.
/// Returns the number of pairs on which they disagree.
pub fn scorer_oracle_check(seed: u64, cases: usize) -> usize {
    let types = ["PER", "LOC", "ORG", "MISC"];
    let mut rng = Rng::new(seed);
    let mut mismatches = 0;
    for _ in 0..cases {
        let gold = random_labels(&mut rng, &types, 12);
        let mut pred = random_labels(&mut rng, &types, gold.len());
        pred.resize(gold.len(), "O".to_string());
        let pair = vec![(gold.clone(), pred.clone())];
        let (per_type, overall) = oracle_counts(&pair);
        let report = score_labels(&[gold], &[pred]).expect("labels are well formed");
        if report.per_type != per_type || report.overall != overall {
            mismatches += 1;
        }
    }
    mismatches
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckReport {
    pub seeds: usize,
    pub worst_grad_error: f64,
    pub oracle_cases: usize,
    pub oracle_mismatches: usize,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.worst_grad_error < GRAD_TOLERANCE && self.oracle_mismatches == 0
    }
}

/// Gradient checks over `seeds` seeds and the scorer-oracle comparison.
pub fn run(seeds: usize, oracle_cases: usize, corrupt: bool) -> SelfCheckReport {
    let worst_grad_error = (0..seeds as u64)
        .map(|s| gradient_check(s, GradShape::default(), corrupt))
        .fold(0.0, f64::max);
    SelfCheckReport {
        seeds,
        worst_grad_error,
        oracle_cases,
        oracle_mismatches: scorer_oracle_check(seeds as u64, oracle_cases),
    }
}
