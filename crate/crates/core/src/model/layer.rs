//! Running a cell over a sequence in either direction, and backpropagation
//! through time over that run.

use super::cell::{Cell, LstmStepCache};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// t = 1 … T
    Forward,
    /// t = T … 1
    Backward,
}

impl Direction {
    fn order(self, len: usize) -> Vec<usize> {
        match self {
            Direction::Forward => (0..len).collect(),
            Direction::Backward => (0..len).rev().collect(),
        }
    }
}

enum Steps {
    Lstm(Vec<LstmStepCache>),
    Rnn(Vec<Vec<f64>>),
}

/// Activations of one directional pass, in processing order.
pub(crate) struct DirTrace {
    order: Vec<usize>,
    steps: Steps,
}

/// Run `cell` from a zero state. Outputs are aligned to input positions.
pub(crate) fn forward_dir(cell: &Cell, inputs: &[Vec<f64>], dir: Direction) -> (Vec<Vec<f64>>, DirTrace) {
    let hidden = cell.hidden();
    let order = dir.order(inputs.len());
    let mut outputs = vec![Vec::new(); inputs.len()];
    let steps = match cell {
        Cell::Lstm(p) => {
            let mut caches: Vec<LstmStepCache> = Vec::with_capacity(inputs.len());
            let zeros = vec![0.0; hidden];
            for &pos in &order {
                let cache = match caches.last() {
                    Some(prev) => p.forward_step(&inputs[pos], prev.h(), prev.c()),
                    None => p.forward_step(&inputs[pos], &zeros, &zeros),
                };
                outputs[pos] = cache.h().to_vec();
                caches.push(cache);
            }
            Steps::Lstm(caches)
        }
        Cell::Rnn(p) => {
            let mut hs: Vec<Vec<f64>> = Vec::with_capacity(inputs.len());
            let zeros = vec![0.0; hidden];
            for &pos in &order {
                let h = p.forward_step(&inputs[pos], hs.last().unwrap_or(&zeros));
                outputs[pos] = h.clone();
                hs.push(h);
            }
            Steps::Rnn(hs)
        }
    };
    (outputs, DirTrace { order, steps })
}

/// BPTT over one directional pass. `d_outputs` is aligned to input
/// positions; returns the parameter gradient and the input gradients
/// (aligned).
pub(crate) fn backward_dir(
    cell: &Cell,
    trace: &DirTrace,
    inputs: &[Vec<f64>],
    d_outputs: &[Vec<f64>],
) -> (Cell, Vec<Vec<f64>>) {
    let hidden = cell.hidden();
    let zeros = vec![0.0; hidden];
    let mut grad = cell.zeros_like();
    let mut d_inputs = vec![vec![0.0; cell.input_dim()]; inputs.len()];
    let mut dh_next = vec![0.0; hidden];
    match (cell, &mut grad, &trace.steps) {
        (Cell::Lstm(p), Cell::Lstm(g), Steps::Lstm(caches)) => {
            let mut dc = vec![0.0; hidden];
            for s in (0..caches.len()).rev() {
                let pos = trace.order[s];
                let (h_prev, c_prev) = if s == 0 {
                    (&zeros[..], &zeros[..])
                } else {
                    (caches[s - 1].h(), caches[s - 1].c())
                };
                let dh: Vec<f64> = d_outputs[pos].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                dh_next = p.backward_step(
                    g,
                    &caches[s],
                    &inputs[pos],
                    h_prev,
                    c_prev,
                    &dh,
                    &mut dc,
                    &mut d_inputs[pos],
                );
            }
        }
        (Cell::Rnn(p), Cell::Rnn(g), Steps::Rnn(hs)) => {
            for s in (0..hs.len()).rev() {
                let pos = trace.order[s];
                let h_prev = if s == 0 { &zeros[..] } else { &hs[s - 1][..] };
                let dh: Vec<f64> = d_outputs[pos].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                dh_next = p.backward_step(g, &hs[s], &inputs[pos], h_prev, &dh, &mut d_inputs[pos]);
            }
        }
        _ => unreachable!("trace does not belong to this cell"),
    }
    (grad, d_inputs)
}

fn check_inputs(cell: &Cell, inputs: &[Vec<f64>]) -> Result<(), ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    for x in inputs {
        if x.len() != cell.input_dim() {
            return Err(ModelError::DimensionMismatch {
                what: "layer input",
                expected: cell.input_dim(),
                found: x.len(),
            });
        }
    }
    Ok(())
}

/// Hidden states of one directional pass, aligned to input positions.
pub fn run_layer(cell: &Cell, inputs: &[Vec<f64>], dir: Direction) -> Result<Vec<Vec<f64>>, ModelError> {
    check_inputs(cell, inputs)?;
    Ok(forward_dir(cell, inputs, dir).0)
}

/// `concat(forward[t], backward[t])` for every position.
pub fn run_bilayer(fwd: &Cell, bwd: &Cell, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
    let f = run_layer(fwd, inputs, Direction::Forward)?;
    let b = run_layer(bwd, inputs, Direction::Backward)?;
    Ok(f.into_iter()
        .zip(b)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect())
}

/// Gradients of `Σ_t ⟨d_outputs[t], h[t]⟩` with respect to the cell
/// parameters and to every input.
pub fn backward_layer(
    cell: &Cell,
    inputs: &[Vec<f64>],
    dir: Direction,
    d_outputs: &[Vec<f64>],
) -> Result<(Cell, Vec<Vec<f64>>), ModelError> {
    check_inputs(cell, inputs)?;
    if d_outputs.len() != inputs.len() || d_outputs.iter().any(|d| d.len() != cell.hidden()) {
        return Err(ModelError::DimensionMismatch {
            what: "output gradient",
            expected: cell.hidden(),
            found: d_outputs.first().map_or(0, Vec::len),
        });
    }
    let (_, trace) = forward_dir(cell, inputs, dir);
    Ok(backward_dir(cell, &trace, inputs, d_outputs))
}
