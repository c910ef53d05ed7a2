//! Recurrent cells and their single-step backward passes.
//!
//! LSTM step, gates evaluated in this order:
//!
//! ```text
//! i_t = σ(W_i h_{t-1} + U_i x_t + b_i)
//! f_t = σ(W_f h_{t-1} + U_f x_t + b_f)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ tanh(W_c h_{t-1} + U_c x_t + b_c)
//! o_t = σ(W_o h_{t-1} + U_o x_t + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! `W_*` are hidden→gate (H×H), `U_*` input→gate (H×D).

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::{sigmoid_scalar, Matrix, Rng};

/// Weights feeding one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// hidden → gate, H×H
    pub w: Matrix,
    /// input → gate, H×D
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl Gate {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Gate {
            w: Matrix::zeros(hidden, hidden),
            u: Matrix::zeros(hidden, input),
            b: vec![0.0; hidden],
        }
    }

    fn init(hidden: usize, input: usize, bias: f64, rng: &mut Rng) -> Self {
        let w = Matrix::uniform(hidden, hidden, crate::numerics::uniform_bound(hidden), rng);
        let u = Matrix::uniform(hidden, input, crate::numerics::uniform_bound(input), rng);
        Gate {
            w,
            u,
            b: vec![bias; hidden],
        }
    }

    /// `W h + U x + b`
    fn preactivation(&self, h_prev: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = self.b.clone();
        self.w.matvec_acc(h_prev, &mut a);
        self.u.matvec_acc(x, &mut a);
        a
    }

    /// Accumulate this gate's parameter gradient and push `da` back into
    /// `dh_prev` and `dx`.
    fn backward(
        &self,
        grad: &mut Gate,
        da: &[f64],
        h_prev: &[f64],
        x: &[f64],
        dh_prev: &mut [f64],
        dx: &mut [f64],
    ) {
        grad.w.add_outer(da, h_prev);
        grad.u.add_outer(da, x);
        for (g, d) in grad.b.iter_mut().zip(da) {
            *g += d;
        }
        self.w.transpose_matvec_acc(da, dh_prev);
        self.u.transpose_matvec_acc(da, dx);
    }

    fn blocks(&self) -> [&[f64]; 3] {
        [self.w.as_slice(), self.u.as_slice(), &self.b]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 3] {
        [self.w.as_mut_slice(), self.u.as_mut_slice(), &mut self.b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub input: Gate,
    pub forget: Gate,
    pub cell: Gate,
    pub output: Gate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one LSTM step kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmStepCache {
    i: Vec<f64>,
    f: Vec<f64>,
    /// tanh candidate
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl LstmStepCache {
    pub(crate) fn h(&self) -> &[f64] {
        &self.h
    }

    pub(crate) fn c(&self) -> &[f64] {
        &self.c
    }
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmCellParams {
            input: Gate::zeros(hidden, input),
            forget: Gate::zeros(hidden, input),
            cell: Gate::zeros(hidden, input),
            output: Gate::zeros(hidden, input),
        }
    }

    /// Weights uniform in ±√(3/fan_in); biases zero except the forget gate's,
    /// which start at `forget_bias`.
    pub fn init(hidden: usize, input: usize, forget_bias: f64, rng: &mut Rng) -> Self {
        LstmCellParams {
            input: Gate::init(hidden, input, 0.0, rng),
            forget: Gate::init(hidden, input, forget_bias, rng),
            cell: Gate::init(hidden, input, 0.0, rng),
            output: Gate::init(hidden, input, 0.0, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.input.b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input.u.cols()
    }

    fn gates(&self) -> [&Gate; 4] {
        [&self.input, &self.forget, &self.cell, &self.output]
    }

    fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [&mut self.input, &mut self.forget, &mut self.cell, &mut self.output]
    }

    pub(crate) fn forward_step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStepCache {
        let mut i = self.input.preactivation(h_prev, x);
        i.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
        let mut f = self.forget.preactivation(h_prev, x);
        f.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
        let mut g = self.cell.preactivation(h_prev, x);
        g.iter_mut().for_each(|v| *v = v.tanh());
        let c: Vec<f64> = (0..g.len()).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let mut o = self.output.preactivation(h_prev, x);
        o.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
        LstmStepCache {
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            h,
        }
    }

    /// Backward through one step. `dh` is the total gradient reaching `h_t`,
    /// `dc` the gradient reaching `c_t` from step `t+1` (updated in place to
    /// the gradient for `c_{t-1}`). Returns `dh_{t-1}` and adds `dx_t` into `dx`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_step(
        &self,
        grad: &mut LstmCellParams,
        cache: &LstmStepCache,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        dh: &[f64],
        dc: &mut [f64],
        dx: &mut [f64],
    ) -> Vec<f64> {
        let n = dh.len();
        let mut da_i = vec![0.0; n];
        let mut da_f = vec![0.0; n];
        let mut da_g = vec![0.0; n];
        let mut da_o = vec![0.0; n];
        for k in 0..n {
            let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
            let dct = dh[k] * o * (1.0 - tc * tc) + dc[k];
            da_o[k] = dh[k] * tc * o * (1.0 - o);
            da_i[k] = dct * g * i * (1.0 - i);
            da_g[k] = dct * i * (1.0 - g * g);
            da_f[k] = dct * c_prev[k] * f * (1.0 - f);
            dc[k] = dct * f;
        }
        let mut dh_prev = vec![0.0; n];
        let [gi, gf, gc, go] = grad.gates_mut();
        self.input.backward(gi, &da_i, h_prev, x, &mut dh_prev, dx);
        self.forget.backward(gf, &da_f, h_prev, x, &mut dh_prev, dx);
        self.cell.backward(gc, &da_g, h_prev, x, &mut dh_prev, dx);
        self.output.backward(go, &da_o, h_prev, x, &mut dh_prev, dx);
        dh_prev
    }
}

/// One LSTM step with shape checks.
pub fn lstm_step(params: &LstmCellParams, x: &[f64], prev: &LstmState) -> Result<LstmState, ModelError> {
    let (hidden, input) = (params.hidden(), params.input_dim());
    check_len("x_t", input, x.len())?;
    check_len("h_{t-1}", hidden, prev.h.len())?;
    check_len("c_{t-1}", hidden, prev.c.len())?;
    let cache = params.forward_step(x, &prev.h, &prev.c);
    Ok(LstmState {
        h: cache.h,
        c: cache.c,
    })
}

/// Elman cell: `h_t = tanh(W h_{t-1} + U x_t + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnCellParams {
    pub gate: Gate,
}

impl RnnCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        RnnCellParams {
            gate: Gate::zeros(hidden, input),
        }
    }

    pub fn init(hidden: usize, input: usize, rng: &mut Rng) -> Self {
        RnnCellParams {
            gate: Gate::init(hidden, input, 0.0, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gate.b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.gate.u.cols()
    }

    pub(crate) fn forward_step(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut a = self.gate.preactivation(h_prev, x);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    pub(crate) fn backward_step(
        &self,
        grad: &mut RnnCellParams,
        h: &[f64],
        x: &[f64],
        h_prev: &[f64],
        dh: &[f64],
        dx: &mut [f64],
    ) -> Vec<f64> {
        let da: Vec<f64> = dh.iter().zip(h).map(|(d, h)| d * (1.0 - h * h)).collect();
        let mut dh_prev = vec![0.0; dh.len()];
        self.gate.backward(&mut grad.gate, &da, h_prev, x, &mut dh_prev, dx);
        dh_prev
    }
}

pub fn rnn_step(params: &RnnCellParams, x: &[f64], prev_h: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_len("x_t", params.input_dim(), x.len())?;
    check_len("h_{t-1}", params.hidden(), prev_h.len())?;
    Ok(params.forward_step(x, prev_h))
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Rnn,
}

impl std::str::FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "rnn" => Ok(CellKind::Rnn),
            other => Err(format!("unknown cell type '{}'", other)),
        }
    }
}

/// Parameters of one recurrent direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Lstm(LstmCellParams),
    Rnn(RnnCellParams),
}

impl Cell {
    pub fn zeros(kind: CellKind, hidden: usize, input: usize) -> Self {
        match kind {
            CellKind::Lstm => Cell::Lstm(LstmCellParams::zeros(hidden, input)),
            CellKind::Rnn => Cell::Rnn(RnnCellParams::zeros(hidden, input)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Cell::Lstm(_) => CellKind::Lstm,
            Cell::Rnn(_) => CellKind::Rnn,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Cell::Lstm(p) => p.hidden(),
            Cell::Rnn(p) => p.hidden(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Cell::Lstm(p) => p.input_dim(),
            Cell::Rnn(p) => p.input_dim(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Cell::zeros(self.kind(), self.hidden(), self.input_dim())
    }

    /// Parameter blocks: per gate (input, forget, cell, output) `W, U, b`;
    /// for an RNN just `W, U, b`.
    pub fn blocks(&self) -> Vec<&[f64]> {
        match self {
            Cell::Lstm(p) => p.gates().into_iter().flat_map(|g| g.blocks()).collect(),
            Cell::Rnn(p) => p.gate.blocks().to_vec(),
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Cell::Lstm(p) => p.gates_mut().into_iter().flat_map(|g| g.blocks_mut()).collect(),
            Cell::Rnn(p) => p.gate.blocks_mut().into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(h: usize, d: usize) -> LstmCellParams {
        let gate = Gate {
            w: Matrix::from_vec(h, h, vec![1.0; h * h]).unwrap(),
            u: Matrix::from_vec(h, d, vec![1.0; h * d]).unwrap(),
            b: vec![0.0; h],
        };
        LstmCellParams {
            input: gate.clone(),
            forget: gate.clone(),
            cell: gate.clone(),
            output: gate,
        }
    }

    #[test]
    fn zero_params_give_zero_state() {
        let p = LstmCellParams::zeros(3, 2);
        let s = lstm_step(&p, &[0.7, -1.3], &LstmState::zeros(3)).unwrap();
        assert_eq!(s.h, vec![0.0; 3]);
        assert_eq!(s.c, vec![0.0; 3]);
        let cache = p.forward_step(&[0.7, -1.3], &[0.0; 3], &[0.0; 3]);
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|&v| v == 0.5));
    }

    #[test]
    fn scalar_hand_evaluation() {
        // σ(1)·tanh(1) and σ(1)·tanh(σ(1)·tanh(1)), 30-digit mpmath
        let s = lstm_step(&ones(1, 1), &[1.0], &LstmState::zeros(1)).unwrap();
        assert!((s.c[0] - 0.556_769_941_145_939_7).abs() < 1e-14);
        assert!((s.h[0] - 0.369_606_352_935_705_8).abs() < 1e-14);
    }

    #[test]
    fn saturated_forget_gate_keeps_memory() {
        let mut p = LstmCellParams::zeros(2, 1);
        p.forget.b = vec![20.0; 2];
        let prev = LstmState {
            h: vec![0.0; 2],
            c: vec![0.8, -0.4],
        };
        let cache = p.forward_step(&[0.0], &prev.h, &prev.c);
        assert!(cache.f.iter().all(|f| (1.0 - f).abs() < 1e-8));
        // candidate is tanh(0) = 0, so c_t ≈ c_{t-1}
        for (c, c0) in cache.c.iter().zip(&prev.c) {
            assert!((c - c0).abs() < 1e-8);
        }
    }

    #[test]
    fn step_dimension_errors() {
        let p = LstmCellParams::zeros(2, 3);
        let err = lstm_step(&p, &[1.0], &LstmState::zeros(2)).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { what: "x_t", expected: 3, found: 1 }));
        assert!(rnn_step(&RnnCellParams::zeros(2, 3), &[0.0; 3], &[0.0]).is_err());
    }

    #[test]
    fn rnn_cases() {
        assert_eq!(rnn_step(&RnnCellParams::zeros(2, 2), &[1.0, 2.0], &[0.3, 0.1]).unwrap(), vec![0.0, 0.0]);
        let p = RnnCellParams {
            gate: Gate {
                w: Matrix::zeros(1, 1),
                u: Matrix::identity(1),
                b: vec![0.0],
            },
        };
        assert_eq!(rnn_step(&p, &[0.42], &[0.9]).unwrap(), vec![0.42f64.tanh()]);
    }

    #[test]
    fn gates_and_hidden_in_range() {
        let mut rng = Rng::new(8);
        let p = LstmCellParams::init(6, 4, 1.0, &mut rng);
        let mut h = vec![0.0; 6];
        let mut c = vec![0.0; 6];
        for t in 0..50 {
            let x: Vec<f64> = (0..4).map(|k| ((t * 7 + k) as f64).sin() * 5.0).collect();
            let cache = p.forward_step(&x, &h, &c);
            for v in cache.i.iter().chain(&cache.f).chain(&cache.o) {
                assert!(*v > 0.0 && *v < 1.0);
            }
            assert!(cache.h.iter().all(|v| v.abs() < 1.0));
            h = cache.h;
            c = cache.c;
        }
    }

    #[test]
    fn init_bounds_and_forget_bias() {
        let p = LstmCellParams::init(5, 12, 1.0, &mut Rng::new(1));
        assert_eq!(p.forget.b, vec![1.0; 5]);
        assert_eq!(p.input.b, vec![0.0; 5]);
        let bw = (3.0f64 / 5.0).sqrt();
        let bu = (3.0f64 / 12.0).sqrt();
        for g in p.gates() {
            assert!(g.w.as_slice().iter().all(|v| v.abs() <= bw));
            assert!(g.u.as_slice().iter().all(|v| v.abs() <= bu));
        }
    }
}
