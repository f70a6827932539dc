//! Dense networks with leaky-ReLU hidden activations (none on the output layer)
//! and a tape-based reverse pass.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn fan_in_uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-bound..bound)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Rows of `x` are samples.
    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTransform {
    pub layers: Vec<Dense>,
    /// Negative-side slope of the leaky ReLU.
    pub slope: f64,
}

#[inline]
fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}

/// Per-layer inputs and pre-activations recorded by [`MlpTransform::forward_tape`].
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

/// Gradients laid out like [`MlpTransform::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpTransform {
    /// Layer widths `widths[0] -> widths[1] -> ...`.
    pub fn init<R: Rng>(widths: &[usize], slope: f64, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Domain(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths.windows(2).map(|w| Dense::fan_in_uniform(w[0], w[1], rng)).collect();
        Ok(Self { layers, slope })
    }

    pub fn zeros(widths: &[usize], slope: f64) -> Self {
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            slope,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    /// Consistency of consecutive layer shapes.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Domain("network has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Dimension {
                    expected: pair[0].outputs(),
                    actual: pair[1].inputs(),
                    context: "layer chaining",
                });
            }
        }
        for layer in &self.layers {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::Dimension {
                    expected: layer.outputs(),
                    actual: layer.bias.len(),
                    context: "bias length",
                });
            }
        }
        Ok(())
    }

    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.ncols(),
                context: "network input",
            });
        }
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].apply(x);
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = layer.apply(&h);
            }
            if i < last {
                h.mapv_inplace(|v| leaky(v, self.slope));
            }
        }
        Ok(h)
    }

    pub fn forward_tape(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.ncols(),
                context: "network input",
            });
        }
        Ok(self.forward_range(0, self.layers.len(), x.clone()))
    }

    /// Runs layers `start..end` on `input` (the input of layer `start`).
    pub(crate) fn forward_range(&self, start: usize, end: usize, input: Array2<f64>) -> (Array2<f64>, Tape) {
        let last = self.layers.len() - 1;
        let mut tape = Tape {
            inputs: Vec::with_capacity(end - start),
            pre: Vec::with_capacity(end - start),
        };
        let mut h = input;
        for i in start..end {
            let z = self.layers[i].apply(&h);
            tape.inputs.push(h);
            h = if i < last { z.mapv(|v| leaky(v, self.slope)) } else { z.clone() };
            tape.pre.push(z);
        }
        (h, tape)
    }

    /// Accumulates parameter gradients for upstream `d_out` into `grads` and
    /// returns the gradient with respect to the network input.
    pub fn backward(&self, tape: &Tape, d_out: &Array2<f64>, grads: &mut MlpGrads) -> Array2<f64> {
        self.backward_range(0, tape, d_out.clone(), grads)
    }

    /// Reverse pass over a tape recorded by `forward_range(start, ..)`.
    pub(crate) fn backward_range(&self, start: usize, tape: &Tape, d_out: Array2<f64>, grads: &mut MlpGrads) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut delta = d_out;
        for t in (0..tape.pre.len()).rev() {
            let i = start + t;
            if i < last {
                self.leaky_backward(&mut delta, &tape.pre[t]);
            }
            let g = &mut grads.layers[i];
            g.weight += &delta.t().dot(&tape.inputs[t]);
            g.bias += &delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[i].weight);
        }
        delta
    }

    /// Multiplies `delta` by the activation derivative at pre-activations `pre`.
    pub(crate) fn leaky_backward(&self, delta: &mut Array2<f64>, pre: &Array2<f64>) {
        let slope = self.slope;
        ndarray::Zip::from(delta).and(pre).for_each(|d, &z| {
            if z < 0.0 {
                *d *= slope;
            }
        });
    }

    pub(crate) fn activate(&self, pre: &Array2<f64>) -> Array2<f64> {
        pre.mapv(|v| leaky(v, self.slope))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs(), l.outputs())).collect(),
        }
    }
}

/// Single-vector forward pass.
pub fn mlp_forward(transform: &MlpTransform, input: &[f64]) -> Result<Vec<f64>> {
    let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(transform.forward_batch(&x)?.into_raw_vec_and_offset().0)
}
