//! The stacked (bi)recurrent tagger with a per-token softmax on top.

use serde::{Deserialize, Serialize};

use super::cell::{Cell, CellKind, LstmCellParams, RnnCellParams};
use super::layer::{backward_dir, forward_dir, DirTrace, Direction};
use super::ModelError;
use crate::numerics::{l2_norm, softmax, uniform_bound, Matrix, Rng};

pub const DEFAULT_HIDDEN: usize = 100;
pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub cell: CellKind,
    pub bidirectional: bool,
    pub layers: usize,
    /// Hidden units per direction.
    pub hidden: usize,
    /// Probability of dropping a layer-output unit during training.
    pub dropout: f64,
    pub labels: Vec<String>,
    pub input_dim: usize,
}

impl TaggerConfig {
    /// Two-layer Bi-LSTM, 100 hidden units per direction, dropout 0.5.
    pub fn new(input_dim: usize, labels: Vec<String>) -> Self {
        TaggerConfig {
            cell: CellKind::Lstm,
            bidirectional: true,
            layers: DEFAULT_LAYERS,
            hidden: DEFAULT_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            labels,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.layers == 0 {
            return bad("layers must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden size must be at least 1");
        }
        if self.input_dim == 0 {
            return bad("input dimension must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.labels.is_empty() {
            return bad("label alphabet is empty");
        }
        Ok(())
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of every layer's output.
    pub fn output_width(&self) -> usize {
        self.directions() * self.hidden
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub forward: Cell,
    pub backward: Option<Cell>,
}

/// All trainable parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Layer>,
    /// labels × output width
    pub projection: Matrix,
    pub projection_bias: Vec<f64>,
}

pub type Gradients = Params;

impl Params {
    /// All-zero parameters shaped for `config`.
    pub fn zeros(config: &TaggerConfig) -> Self {
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { config.input_dim } else { config.output_width() };
                Layer {
                    forward: Cell::zeros(config.cell, config.hidden, input),
                    backward: config
                        .bidirectional
                        .then(|| Cell::zeros(config.cell, config.hidden, input)),
                }
            })
            .collect();
        Params {
            layers,
            projection: Matrix::zeros(config.labels.len(), config.output_width()),
            projection_bias: vec![0.0; config.labels.len()],
        }
    }

    /// Parameter blocks in container order: for each layer, forward cell then
    /// backward cell (see [`Cell::blocks`]), then projection matrix, then
    /// projection bias.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.forward.blocks());
            if let Some(b) = &layer.backward {
                out.extend(b.blocks());
            }
        }
        out.push(self.projection.as_slice());
        out.push(&self.projection_bias);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.forward.blocks_mut());
            if let Some(b) = &mut layer.backward {
                out.extend(b.blocks_mut());
            }
        }
        out.push(self.projection.as_mut_slice());
        out.push(&mut self.projection_bias);
        out
    }

    pub fn zeros_like(&self) -> Params {
        let mut p = self.clone();
        p.blocks_mut().into_iter().for_each(|b| b.fill(0.0));
        p
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    /// Overwrite every parameter from a flat vector in block order.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
    }

    /// Global L2 norm over every block.
    pub fn l2_norm(&self) -> f64 {
        self.blocks().iter().map(|b| l2_norm(b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k · other`
    pub fn add_scaled(&mut self, other: &Params, k: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tagger {
    pub config: TaggerConfig,
    pub params: Params,
}

/// Inverted-dropout scale factors per layer, position and unit: `0` for a
/// dropped unit, `1/(1-p)` for a kept one.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl DropoutMasks {
    pub fn sample(config: &TaggerConfig, len: usize, rng: &mut Rng) -> Self {
        let keep = 1.0 - config.dropout;
        let width = config.output_width();
        let layers = (0..config.layers)
            .map(|_| {
                (0..len)
                    .map(|_| {
                        (0..width)
                            .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        DropoutMasks { layers }
    }
}

pub enum Mode<'a> {
    /// Deterministic; no dropout.
    Infer,
    /// Dropout masks drawn from the generator (skipped when the ratio is 0).
    Train(&'a mut Rng),
    /// Caller-supplied masks.
    Masks(&'a DropoutMasks),
}

struct LayerTrace {
    inputs: Vec<Vec<f64>>,
    forward: DirTrace,
    backward: Option<DirTrace>,
    mask: Option<Vec<Vec<f64>>>,
}

/// Output of [`Tagger::forward`]: per-token distributions plus what the
/// backward pass needs.
pub struct ForwardPass {
    pub probabilities: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
    top: Vec<Vec<f64>>,
    layers: Vec<LayerTrace>,
}

impl Tagger {
    /// Weights uniform in ±√(3/fan_in) per matrix, biases zero, forget-gate
    /// biases 1.0.
    pub fn init(config: TaggerConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        let make = |input: usize, rng: &mut Rng| match config.cell {
            CellKind::Lstm => Cell::Lstm(LstmCellParams::init(config.hidden, input, FORGET_BIAS_INIT, rng)),
            CellKind::Rnn => Cell::Rnn(RnnCellParams::init(config.hidden, input, rng)),
        };
        for l in 0..config.layers {
            let input = if l == 0 { config.input_dim } else { config.output_width() };
            let forward = make(input, rng);
            let backward = config.bidirectional.then(|| make(input, rng));
            layers.push(Layer { forward, backward });
        }
        let width = config.output_width();
        let projection = Matrix::uniform(config.labels.len(), width, uniform_bound(width), rng);
        let projection_bias = vec![0.0; config.labels.len()];
        Ok(Tagger {
            config,
            params: Params {
                layers,
                projection,
                projection_bias,
            },
        })
    }

    pub fn num_labels(&self) -> usize {
        self.config.labels.len()
    }

    pub fn forward(&self, inputs: &[Vec<f64>], mode: Mode<'_>) -> Result<ForwardPass, ModelError> {
        if inputs.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        for x in inputs {
            if x.len() != self.config.input_dim {
                return Err(ModelError::DimensionMismatch {
                    what: "token input",
                    expected: self.config.input_dim,
                    found: x.len(),
                });
            }
        }
        let sampled;
        let masks: Option<&DropoutMasks> = match mode {
            Mode::Infer => None,
            Mode::Train(_) if self.config.dropout == 0.0 => None,
            Mode::Train(rng) => {
                sampled = DropoutMasks::sample(&self.config, inputs.len(), rng);
                Some(&sampled)
            }
            Mode::Masks(m) => {
                let ok = m.layers.len() == self.config.layers
                    && m.layers.iter().all(|l| {
                        l.len() == inputs.len() && l.iter().all(|u| u.len() == self.config.output_width())
                    });
                if !ok {
                    return Err(ModelError::DimensionMismatch {
                        what: "dropout mask",
                        expected: self.config.output_width(),
                        found: m.layers.first().and_then(|l| l.first()).map_or(0, Vec::len),
                    });
                }
                Some(m)
            }
        };

        let mut current: Vec<Vec<f64>> = inputs.to_vec();
        let mut traces = Vec::with_capacity(self.params.layers.len());
        for (l, layer) in self.params.layers.iter().enumerate() {
            let (mut out, ftrace) = forward_dir(&layer.forward, &current, Direction::Forward);
            let btrace = layer.backward.as_ref().map(|cell| {
                let (bout, btrace) = forward_dir(cell, &current, Direction::Backward);
                for (o, b) in out.iter_mut().zip(bout) {
                    o.extend(b);
                }
                btrace
            });
            let mask = masks.map(|m| m.layers[l].clone());
            if let Some(mask) = &mask {
                for (o, m) in out.iter_mut().zip(mask) {
                    o.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
            }
            traces.push(LayerTrace {
                inputs: std::mem::replace(&mut current, out),
                forward: ftrace,
                backward: btrace,
                mask,
            });
        }

        let logits: Vec<Vec<f64>> = current
            .iter()
            .map(|h| {
                let mut z = self.params.projection_bias.clone();
                self.params.projection.matvec_acc(h, &mut z);
                z
            })
            .collect();
        let probabilities = logits.iter().map(|z| softmax(z)).collect();
        Ok(ForwardPass {
            probabilities,
            logits,
            top: current,
            layers: traces,
        })
    }

    /// Per-token argmax label index (lowest index on ties).
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<usize>, ModelError> {
        let pass = self.forward(inputs, Mode::Infer)?;
        Ok(pass.probabilities.iter().map(|p| argmax(p)).collect())
    }

    /// Per-token argmax labels as strings (not yet IOB-repaired).
    pub fn predict_labels(&self, inputs: &[Vec<f64>]) -> Result<Vec<String>, ModelError> {
        Ok(self
            .predict(inputs)?
            .into_iter()
            .map(|i| self.config.labels[i].clone())
            .collect())
    }

    /// Mean per-token cross-entropy and its gradient with respect to every
    /// parameter.
    pub fn loss_and_gradients(
        &self,
        inputs: &[Vec<f64>],
        gold: &[usize],
        mode: Mode<'_>,
    ) -> Result<(f64, Gradients), ModelError> {
        if gold.len() != inputs.len() {
            return Err(ModelError::DimensionMismatch {
                what: "gold labels",
                expected: inputs.len(),
                found: gold.len(),
            });
        }
        if let Some(&bad) = gold.iter().find(|&&g| g >= self.num_labels()) {
            return Err(ModelError::LabelOutOfRange {
                index: bad,
                labels: self.num_labels(),
            });
        }
        let pass = self.forward(inputs, mode)?;
        let n = inputs.len() as f64;
        let loss = pass
            .logits
            .iter()
            .zip(gold)
            .map(|(z, &g)| -log_softmax_at(z, g))
            .sum::<f64>()
            / n;
        let grads = self.backward(&pass, gold);
        Ok((loss, grads))
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, inputs: &[Vec<f64>], gold: &[usize], mode: Mode<'_>) -> Result<f64, ModelError> {
        let pass = self.forward(inputs, mode)?;
        Ok(pass
            .logits
            .iter()
            .zip(gold)
            .map(|(z, &g)| -log_softmax_at(z, g))
            .sum::<f64>()
            / inputs.len() as f64)
    }

    fn backward(&self, pass: &ForwardPass, gold: &[usize]) -> Gradients {
        let mut grads = self.params.zeros_like();
        let n = gold.len() as f64;
        let width = self.config.output_width();
        let h = self.config.hidden;

        let mut d_current: Vec<Vec<f64>> = Vec::with_capacity(gold.len());
        for ((p, &g), top) in pass.probabilities.iter().zip(gold).zip(&pass.top) {
            let mut dz: Vec<f64> = p.iter().map(|v| v / n).collect();
            dz[g] -= 1.0 / n;
            grads.projection.add_outer(&dz, top);
            for (b, d) in grads.projection_bias.iter_mut().zip(&dz) {
                *b += d;
            }
            let mut dtop = vec![0.0; width];
            self.params.projection.transpose_matvec_acc(&dz, &mut dtop);
            d_current.push(dtop);
        }

        for (l, (layer, trace)) in self.params.layers.iter().zip(&pass.layers).enumerate().rev() {
            if let Some(mask) = &trace.mask {
                for (d, m) in d_current.iter_mut().zip(mask) {
                    d.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
            }
            let d_fwd: Vec<Vec<f64>> = d_current.iter().map(|d| d[..h].to_vec()).collect();
            let (gf, mut d_in) = backward_dir(&layer.forward, &trace.forward, &trace.inputs, &d_fwd);
            grads.layers[l].forward = gf;
            if let (Some(cell), Some(btrace)) = (&layer.backward, &trace.backward) {
                let d_bwd: Vec<Vec<f64>> = d_current.iter().map(|d| d[h..].to_vec()).collect();
                let (gb, d_in_b) = backward_dir(cell, btrace, &trace.inputs, &d_bwd);
                grads.layers[l].backward = Some(gb);
                for (a, b) in d_in.iter_mut().zip(d_in_b) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
            }
            d_current = d_in;
        }
        grads
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn log_softmax_at(z: &[f64], k: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    z[k] - lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, uniform_vector, DEFAULT_FD_EPSILON};

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{}", i)).collect()
    }

    fn small(cell: CellKind, bidi: bool, layers: usize, dropout: f64, seed: u64) -> Tagger {
        let mut cfg = TaggerConfig::new(5, labels(3));
        cfg.cell = cell;
        cfg.bidirectional = bidi;
        cfg.layers = layers;
        cfg.hidden = 4;
        cfg.dropout = dropout;
        Tagger::init(cfg, &mut Rng::new(seed)).unwrap()
    }

    fn inputs(rng: &mut Rng, t: usize, d: usize) -> Vec<Vec<f64>> {
        (0..t).map(|_| uniform_vector(rng, d, 1.0).unwrap()).collect()
    }

    fn max_grad_error(tagger: &Tagger, x: &[Vec<f64>], gold: &[usize], masks: Option<&DropoutMasks>) -> f64 {
        let mode = || masks.map_or(Mode::Infer, Mode::Masks);
        let (_, analytic) = tagger.loss_and_gradients(x, gold, mode()).unwrap();
        let mut probe = tagger.clone();
        let mut flat = tagger.params.to_flat();
        let numeric = finite_diff_grad(
            |theta| {
                probe.params.set_flat(theta);
                probe.loss(x, gold, mode()).unwrap()
            },
            &mut flat,
            DEFAULT_FD_EPSILON,
        );
        analytic
            .to_flat()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| relative_error(*a, *n, 1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(77);
        for (cell, bidi, layers) in [
            (CellKind::Lstm, true, 2),
            (CellKind::Lstm, false, 1),
            (CellKind::Rnn, true, 2),
        ] {
            let t = small(cell, bidi, layers, 0.0, 3);
            let x = inputs(&mut rng, 4, 5);
            let err = max_grad_error(&t, &x, &[0, 2, 1, 2], None);
            assert!(err < 1e-4, "{:?} bidi={} layers={}: {}", cell, bidi, layers, err);
        }
    }

    #[test]
    fn gradients_with_fixed_dropout_masks() {
        let mut rng = Rng::new(78);
        let t = small(CellKind::Lstm, true, 2, 0.5, 4);
        let x = inputs(&mut rng, 4, 5);
        let masks = DropoutMasks::sample(&t.config, 4, &mut rng);
        assert!(masks.layers.iter().flatten().flatten().any(|&m| m == 0.0));
        let err = max_grad_error(&t, &x, &[1, 1, 0, 2], Some(&masks));
        assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn distributions_sum_to_one_and_infer_is_deterministic() {
        let t = small(CellKind::Lstm, true, 2, 0.5, 1);
        let x = inputs(&mut Rng::new(2), 6, 5);
        let a = t.forward(&x, Mode::Infer).unwrap().probabilities;
        let b = t.forward(&x, Mode::Infer).unwrap().probabilities;
        assert_eq!(a, b);
        for p in &a {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_dropout_train_equals_infer() {
        let t = small(CellKind::Lstm, true, 2, 0.0, 1);
        let x = inputs(&mut Rng::new(2), 6, 5);
        let mut rng = Rng::new(9);
        assert_eq!(
            t.forward(&x, Mode::Train(&mut rng)).unwrap().probabilities,
            t.forward(&x, Mode::Infer).unwrap().probabilities
        );
    }

    #[test]
    fn uniform_output_gives_log_l_loss() {
        let mut t = small(CellKind::Lstm, true, 1, 0.0, 1);
        t.params.projection = Matrix::zeros(3, 8);
        let x = inputs(&mut Rng::new(2), 3, 5);
        let (loss, _) = t.loss_and_gradients(&x, &[0, 1, 2], Mode::Infer).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        let mut t = small(CellKind::Lstm, true, 1, 0.0, 1);
        t.params.projection = Matrix::zeros(3, 8);
        t.params.projection_bias = vec![40.0, 0.0, 0.0];
        let x = inputs(&mut Rng::new(2), 3, 5);
        let (loss, g) = t.loss_and_gradients(&x, &[0, 0, 0], Mode::Infer).unwrap();
        assert!(loss < 1e-6);
        assert!(g.l2_norm() < 1e-6);
    }

    #[test]
    fn error_paths() {
        let t = small(CellKind::Lstm, true, 1, 0.0, 1);
        let x = inputs(&mut Rng::new(2), 2, 5);
        assert!(matches!(
            t.loss_and_gradients(&x, &[0, 3], Mode::Infer),
            Err(ModelError::LabelOutOfRange { index: 3, labels: 3 })
        ));
        assert!(t.loss_and_gradients(&x, &[0], Mode::Infer).is_err());
        assert!(matches!(t.forward(&[vec![0.0; 4]], Mode::Infer), Err(ModelError::DimensionMismatch { .. })));
        assert!(matches!(t.forward(&[], Mode::Infer), Err(ModelError::EmptySequence)));
        let mut cfg = t.config.clone();
        cfg.dropout = 1.0;
        assert!(Tagger::init(cfg, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = small(CellKind::Lstm, true, 2, 0.5, 42);
        let b = small(CellKind::Lstm, true, 2, 0.5, 42);
        assert_eq!(a, b);
        assert_ne!(a, small(CellKind::Lstm, true, 2, 0.5, 43));
        assert!(a.params.all_finite());
        for layer in &a.params.layers {
            for cell in std::iter::once(&layer.forward).chain(&layer.backward) {
                match cell {
                    Cell::Lstm(p) => assert_eq!(p.forget.b, vec![1.0; 4]),
                    Cell::Rnn(_) => unreachable!(),
                }
            }
        }
        // second layer consumes 2H = 8 inputs
        assert_eq!(a.params.layers[1].forward.input_dim(), 8);
        let bound = uniform_bound(8);
        assert!(a.params.projection.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let mut cfg = TaggerConfig::new(5, labels(2));
        cfg.hidden = 3;
        cfg.layers = 1;
        let mut rng = Rng::new(12);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let m = DropoutMasks::sample(&cfg, 1, &mut rng);
            sum += m.layers[0][0][0];
        }
        // masked activation a·m has expectation a·E[m] = a
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{}", mean);
    }
}
