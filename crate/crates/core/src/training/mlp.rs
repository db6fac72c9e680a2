//! Small fully connected network used as a trainable demapper.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Hidden-layer activation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of the MLP demapper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            hidden: vec![64, 64],
            activation: Activation::Relu,
        }
    }
}

/// Affine layer `out = W in + b`, weights row-major (`outputs × inputs`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn he_init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks(self.inputs).zip(&self.bias)) {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// ReLU MLP; the last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-sample layer outputs of a batch, `activations[l]` is `S × width_l`.
#[derive(Clone, Debug)]
pub(crate) struct MlpTrace {
    pub inputs: Vec<f64>,
    pub activations: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], outputs: usize, rng: &mut R) -> Self {
        let widths: Vec<usize> = std::iter::once(inputs).chain(hidden.iter().copied()).chain(std::iter::once(outputs)).collect();
        Mlp {
            layers: widths.windows(2).map(|w| Dense::he_init(w[0], w[1], rng)).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Appends weights then biases of every layer.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Reads parameters in [`Mlp::write_params`] order; returns the count used.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&src[at..at + nw]);
            at += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&src[at..at + nb]);
            at += nb;
        }
        at
    }

    /// Runs the whole batch; `inputs` is `S × input_width`.
    pub(crate) fn forward_batch(&self, inputs: Vec<f64>, samples: usize) -> MlpTrace {
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let src = if l == 0 { &inputs } else { &activations[l - 1] };
            let mut out = vec![0.0; samples * layer.outputs];
            for (x, o) in src.chunks(layer.inputs).zip(out.chunks_mut(layer.outputs)) {
                layer.apply(x, o);
                if l != last {
                    o.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            activations.push(out);
        }
        MlpTrace { inputs, activations }
    }

    /// Backpropagates `grad_out` (`S × outputs`), accumulating parameter
    /// gradients into `grad_params` (layout of [`Mlp::write_params`]) and
    /// returning the gradient with respect to the inputs.
    pub(crate) fn backward_batch(&self, trace: &MlpTrace, grad_out: &[f64], samples: usize, grad_params: &mut [f64]) -> Vec<f64> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for layer in &self.layers {
            offsets.push(at);
            at += layer.num_params();
        }

        let mut upstream = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = if l == 0 { &trace.inputs } else { &trace.activations[l - 1] };
            let (gw, gb) = grad_params[offsets[l]..offsets[l] + layer.num_params()].split_at_mut(layer.weights.len());
            let mut downstream = vec![0.0; samples * layer.inputs];
            for s in 0..samples {
                let g = &upstream[s * layer.outputs..(s + 1) * layer.outputs];
                let x = &input[s * layer.inputs..(s + 1) * layer.inputs];
                let d = &mut downstream[s * layer.inputs..(s + 1) * layer.inputs];
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gb[o] += go;
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for i in 0..layer.inputs {
                        grow[i] += go * x[i];
                        d[i] += go * row[i];
                    }
                }
            }
            if l > 0 {
                // ReLU: pass gradient only where the unit was active
                for (d, a) in downstream.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            upstream = downstream;
        }
        upstream
    }
}
