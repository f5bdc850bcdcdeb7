//! Plain f64 re-implementation of both agents' forward pass, written
//! independently of the tape so it can serve as an oracle for values and,
//! through central differences, for gradients.

use std::collections::HashMap;

use lsg::agents::{Message, ParamTree};
use lsg::numerics::Tensor;

const HIDDEN: usize = 64;

/// All parameters of one agent as f64, with an optional override of one
/// entry.
#[derive(Clone)]
pub struct RefParams {
    base: HashMap<String, Vec<f64>>,
}

impl RefParams {
    pub fn of<P: ParamTree>(params: &P) -> Self {
        let base = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.data().iter().map(|&v| f64::from(v)).collect()))
            .collect();
        Self { base }
    }

    pub fn values(&self, name: &str) -> &[f64] {
        &self.base[name]
    }

    pub fn view(&self) -> View<'_> {
        View {
            base: &self.base,
            name: "",
            value: &[],
        }
    }

    pub fn with<'a>(&'a self, name: &'a str, value: &'a [f64]) -> View<'a> {
        assert!(self.base.contains_key(name), "no parameter {name}");
        View {
            base: &self.base,
            name,
            value,
        }
    }
}

#[derive(Clone, Copy)]
pub struct View<'a> {
    base: &'a HashMap<String, Vec<f64>>,
    name: &'a str,
    value: &'a [f64],
}

impl View<'_> {
    fn get(&self, n: &str) -> &[f64] {
        if n == self.name {
            self.value
        } else {
            &self.base[n]
        }
    }

    /// True when the overridden entry belongs to the vision module.
    pub fn touches_vision(&self) -> bool {
        self.name.starts_with("vision.")
    }
}

fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    assert_eq!(w.len(), x.len() * out);
    let mut y = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..out {
            y[j] += xi * w[i * out + j];
        }
    }
    y
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

/// Valid 5×5 convolution of a `[3, 32, 32]` image followed by relu,
/// flattened channel-major.
pub fn conv_relu(p: View<'_>, image: &Tensor) -> Vec<f64> {
    let k = p.get("vision.conv.kernel");
    let b = p.get("vision.conv.bias");
    let x = image.data();
    let (c_in, size, ks) = (3, 32, 5);
    let out_size = size - ks + 1;
    let mut out = Vec::with_capacity(b.len() * out_size * out_size);
    for (o, &bias) in b.iter().enumerate() {
        for i in 0..out_size {
            for j in 0..out_size {
                let mut s = bias;
                for c in 0..c_in {
                    for di in 0..ks {
                        for dj in 0..ks {
                            let w = k[((o * c_in + c) * ks + di) * ks + dj];
                            s += w * f64::from(x[(c * size + i + di) * size + j + dj]);
                        }
                    }
                }
                out.push(s.max(0.0));
            }
        }
    }
    out
}

pub fn hidden_preactivations(p: View<'_>, conv: &[f64]) -> Vec<f64> {
    affine(conv, p.get("vision.mlp1.weight"), p.get("vision.mlp1.bias"))
}

pub fn mlp(p: View<'_>, conv: &[f64]) -> Vec<f64> {
    let h = relu(hidden_preactivations(p, conv));
    affine(&h, p.get("vision.mlp2.weight"), p.get("vision.mlp2.bias"))
}

pub fn encode(p: View<'_>, image: &Tensor) -> Vec<f64> {
    mlp(p, &conv_relu(p, image))
}

fn lstm_step(p: View<'_>, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w_ih = p.get("lstm.w_ih");
    let w_hh = p.get("lstm.w_hh");
    let bias = p.get("lstm.bias");
    let gates: Vec<f64> = affine(x, w_ih, bias)
        .iter()
        .zip(affine(h, w_hh, &vec![0.0; 4 * HIDDEN]))
        .map(|(a, b)| a + b)
        .collect();
    let mut h2 = vec![0.0; HIDDEN];
    let mut c2 = vec![0.0; HIDDEN];
    for j in 0..HIDDEN {
        let i = sigmoid(gates[j]);
        let f = sigmoid(gates[HIDDEN + j]);
        let g = gates[2 * HIDDEN + j].tanh();
        let o = sigmoid(gates[3 * HIDDEN + j]);
        c2[j] = f * c[j] + i * g;
        h2[j] = o * c2[j].tanh();
    }
    (h2, c2)
}

fn embedding_row(table: &[f64], token: usize) -> &[f64] {
    let dim = table.len() / 20;
    &table[token * dim..(token + 1) * dim]
}

/// Per-step log-probability of each token of `message` and per-step entropy,
/// given the speaker's target feature.
pub fn speaker_terms(p: View<'_>, feature: &[f64], message: &Message) -> (Vec<f64>, Vec<f64>) {
    let mut h: Vec<f64> = affine(feature, p.get("init_proj.weight"), p.get("init_proj.bias"))
        .into_iter()
        .map(f64::tanh)
        .collect();
    let mut c = vec![0.0; HIDDEN];
    let mut x = p.get("start_token").to_vec();
    let mut log_probs = Vec::new();
    let mut entropies = Vec::new();
    for &token in message.tokens() {
        (h, c) = lstm_step(p, &x, &h, &c);
        let logits = affine(&h, p.get("output.weight"), p.get("output.bias"));
        let lp = log_softmax(&logits);
        log_probs.push(lp[usize::from(token)]);
        entropies.push(-lp.iter().map(|l| l.exp() * l).sum::<f64>());
        x = embedding_row(p.get("embedding"), usize::from(token)).to_vec();
    }
    (log_probs, entropies)
}

/// Listener log-probabilities over candidates with features `features`.
pub fn listener_log_probs(p: View<'_>, message: &Message, features: &[Vec<f64>]) -> Vec<f64> {
    let mut h = vec![0.0; HIDDEN];
    let mut c = vec![0.0; HIDDEN];
    for &token in message.tokens() {
        let x = embedding_row(p.get("embedding"), usize::from(token)).to_vec();
        (h, c) = lstm_step(p, &x, &h, &c);
    }
    let scores: Vec<f64> = features
        .iter()
        .map(|u| {
            let proj = affine(u, p.get("candidate_proj.weight"), p.get("candidate_proj.bias"));
            proj.iter().zip(&h).map(|(a, b)| a * b).sum()
        })
        .collect();
    log_softmax(&scores)
}

/// Central differences of `f` at `x` with step `eps`, all in f64.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let hi = f(&probe);
            probe[i] = x[i] - eps;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
