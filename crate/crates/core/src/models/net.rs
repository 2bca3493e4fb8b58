//! Feed-forward network: one-hot / min-max input encoding, ReLU hidden layers,
//! softmax output, cross-entropy loss, mini-batch SGD with momentum.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dataset::{Kind, Schema, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            hidden: vec![64, 32],
            epochs: 30,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Block {
    OneHot { offset: usize, size: usize },
    Scaled { offset: usize, min: f64, max: f64 },
}

/// Frozen at training time: maps schema-aligned values to the network input vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputEncoding {
    pub columns: Vec<usize>,
    pub blocks: Vec<Block>,
    pub width: usize,
}

impl InputEncoding {
    /// Categorical columns become one-hot blocks over the schema domain; numeric
    /// columns are min-max scaled with statistics from `rows`.
    pub fn fit<'a>(
        schema: &Schema,
        columns: &[usize],
        rows: impl Iterator<Item = &'a [Value]>,
    ) -> Self {
        let mut mins = vec![f64::INFINITY; columns.len()];
        let mut maxs = vec![f64::NEG_INFINITY; columns.len()];
        for row in rows {
            for (j, &c) in columns.iter().enumerate() {
                if let Value::Num(v) = row[c] {
                    mins[j] = mins[j].min(v);
                    maxs[j] = maxs[j].max(v);
                }
            }
        }
        let mut blocks = Vec::with_capacity(columns.len());
        let mut offset = 0;
        for (j, &c) in columns.iter().enumerate() {
            let attr = &schema.attributes[c];
            match attr.kind {
                Kind::Categorical => {
                    let size = attr.cardinality();
                    blocks.push(Block::OneHot { offset, size });
                    offset += size;
                }
                Kind::Numeric => {
                    let (min, max) = if mins[j].is_finite() {
                        (mins[j], maxs[j])
                    } else {
                        attr.range().unwrap_or((0.0, 1.0))
                    };
                    blocks.push(Block::Scaled { offset, min, max });
                    offset += 1;
                }
            }
        }
        InputEncoding {
            columns: columns.to_vec(),
            blocks,
            width: offset,
        }
    }

    /// Unknown categories and missing cells leave their block all-zero.
    pub fn encode(&self, row: &[Value]) -> Vec<f64> {
        let mut x = vec![0.0; self.width];
        for (&c, block) in self.columns.iter().zip(&self.blocks) {
            match (block, row[c]) {
                (Block::OneHot { offset, size }, Value::Cat(i)) if (i as usize) < *size => {
                    x[offset + i as usize] = 1.0;
                }
                (Block::Scaled { offset, min, max }, Value::Num(v)) => {
                    let span = max - min;
                    x[*offset] = if span > 0.0 { (v - min) / span } else { 0.0 };
                }
                _ => {}
            }
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / inputs.max(1) as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, acc) in out.iter_mut().enumerate() {
                *acc += self.weights[o * self.inputs + i] * xi;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    layers: Vec<Dense>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl NeuralNet {
    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    /// Layer activations, input first and softmax output last.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().unwrap(), &mut out);
            if l + 1 < self.layers.len() {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            } else {
                softmax_in_place(&mut out);
            }
            acts.push(out);
        }
        acts
    }

    pub fn predict_scores(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    pub fn fit(
        xs: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        params: &NetParams,
    ) -> Result<Self, ModelError> {
        if xs.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut sizes = vec![xs[0].len()];
        sizes.extend(&params.hidden);
        sizes.push(n_classes);
        let layers: Vec<Dense> = sizes
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], &mut rng))
            .collect();
        let mut net = NeuralNet { layers };

        let mut velocity: Vec<(Vec<f64>, Vec<f64>)> = net
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let mut grads = velocity.clone();
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let batch_size = params.batch_size.max(1);

        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut loss = 0.0;
            for batch in order.chunks(batch_size) {
                for (gw, gb) in grads.iter_mut() {
                    gw.iter_mut().for_each(|v| *v = 0.0);
                    gb.iter_mut().for_each(|v| *v = 0.0);
                }
                for &i in batch {
                    let acts = net.activations(&xs[i]);
                    let probs = acts.last().unwrap();
                    let p = probs[labels[i]];
                    loss -= if p.is_nan() {
                        f64::NAN
                    } else {
                        p.max(1e-300).ln()
                    };
                    // softmax + cross-entropy gradient
                    let mut delta: Vec<f64> = probs.clone();
                    delta[labels[i]] -= 1.0;
                    for l in (0..net.layers.len()).rev() {
                        let layer = &net.layers[l];
                        let input = &acts[l];
                        let (gw, gb) = &mut grads[l];
                        for (o, &d) in delta.iter().enumerate() {
                            gb[o] += d;
                            if d == 0.0 {
                                continue;
                            }
                            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                            for (g, &a) in row.iter_mut().zip(input) {
                                if a != 0.0 {
                                    *g += d * a;
                                }
                            }
                        }
                        if l > 0 {
                            let mut back = vec![0.0; layer.inputs];
                            for (o, &d) in delta.iter().enumerate() {
                                if d == 0.0 {
                                    continue;
                                }
                                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                                for (b, &w) in back.iter_mut().zip(row) {
                                    *b += d * w;
                                }
                            }
                            // ReLU derivative
                            for (b, &a) in back.iter_mut().zip(input) {
                                if a <= 0.0 {
                                    *b = 0.0;
                                }
                            }
                            delta = back;
                        }
                    }
                }
                let scale = params.learning_rate / batch.len() as f64;
                for ((layer, (vw, vb)), (gw, gb)) in
                    net.layers.iter_mut().zip(velocity.iter_mut()).zip(&grads)
                {
                    for ((w, v), g) in layer.weights.iter_mut().zip(vw.iter_mut()).zip(gw) {
                        *v = params.momentum * *v - scale * g;
                        *w += *v;
                    }
                    for ((b, v), g) in layer.bias.iter_mut().zip(vb.iter_mut()).zip(gb) {
                        *v = params.momentum * *v - scale * g;
                        *b += *v;
                    }
                }
            }
            let mean = loss / xs.len() as f64;
            if !mean.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch: epoch + 1 });
            }
        }
        Ok(net)
    }
}
