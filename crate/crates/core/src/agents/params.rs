use rand::Rng;

use super::arch::*;
use crate::numerics::{Tape, Tensor, Var};

/// Which parameters receive gradients and optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainableSet {
    /// Every parameter, vision included (pair training).
    All,
    /// Everything except the vision module (evaluation with frozen encoders).
    PolicyOnly,
    /// Nothing; pure inference.
    Frozen,
}

impl TrainableSet {
    pub fn includes(self, name: &str) -> bool {
        match self {
            TrainableSet::All => true,
            TrainableSet::PolicyOnly => !is_vision(name),
            TrainableSet::Frozen => false,
        }
    }

    pub fn trains_vision(self) -> bool {
        self == TrainableSet::All
    }

    pub fn trains_policy(self) -> bool {
        self != TrainableSet::Frozen
    }
}

/// Names of vision-module parameters all start with `vision.`.
pub fn is_vision(name: &str) -> bool {
    name.starts_with("vision.")
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("finite by construction")
}

fn fan_in_bound(fan_in: usize) -> f32 {
    1.0 / (fan_in as f32).sqrt()
}

/// Collects `(dotted name, tensor)` pairs in a fixed order.
pub trait ParamTree {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor));

    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, t| out.push((n, t)));
        out
    }

    fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same names, shapes and bit patterns.
    fn same_bits(&self, other: &Self) -> bool
    where
        Self: Sized,
    {
        let (a, b) = (self.named(), other.named());
        a.len() == b.len() && a.iter().zip(&b).all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `y = x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let b = fan_in_bound(fan_in);
        Self {
            weight: uniform(rng, &[fan_in, fan_out], b),
            bias: uniform(rng, &[fan_out], b),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> LinearVars {
        LinearVars {
            weight: tape.leaf(self.weight.clone(), trainable),
            bias: tape.leaf(self.bias.clone(), trainable),
        }
    }
}

impl ParamTree for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearVars {
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Var)) {
        f(join(prefix, "weight"), self.weight);
        f(join(prefix, "bias"), self.bias);
    }
}

/// Single-layer LSTM. Gate blocks along the 4·hidden axis are ordered
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

impl LstmParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let w_ih = uniform(rng, &[input, 4 * hidden], fan_in_bound(input));
        let w_hh = uniform(rng, &[hidden, 4 * hidden], fan_in_bound(hidden));
        let mut bias = uniform(rng, &[4 * hidden], fan_in_bound(hidden));
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Self { w_ih, w_hh, bias }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> LstmVars {
        LstmVars {
            w_ih: tape.leaf(self.w_ih.clone(), trainable),
            w_hh: tape.leaf(self.w_hh.clone(), trainable),
            bias: tape.leaf(self.bias.clone(), trainable),
        }
    }
}

impl ParamTree for LstmParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w_ih"), &self.w_ih);
        f(join(prefix, "w_hh"), &self.w_hh);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "w_ih"), &mut self.w_ih);
        f(join(prefix, "w_hh"), &mut self.w_hh);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

impl LstmVars {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Var)) {
        f(join(prefix, "w_ih"), self.w_ih);
        f(join(prefix, "w_hh"), self.w_hh);
        f(join(prefix, "bias"), self.bias);
    }
}

/// Conv (20×3×5×5) followed by a two-layer feed-forward network 15680→50→50.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionParams {
    pub conv_kernel: Tensor,
    pub conv_bias: Tensor,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

impl VisionParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let conv_fan_in = IMAGE_CHANNELS * KERNEL_SIZE * KERNEL_SIZE;
        let b = fan_in_bound(conv_fan_in);
        Self {
            conv_kernel: uniform(rng, &[CONV_CHANNELS, IMAGE_CHANNELS, KERNEL_SIZE, KERNEL_SIZE], b),
            conv_bias: uniform(rng, &[CONV_CHANNELS], b),
            mlp1: Linear::init(rng, CONV_FLAT, FEATURE_DIM),
            mlp2: Linear::init(rng, FEATURE_DIM, FEATURE_DIM),
        }
    }

    /// Keeps the convolution, replaces the feed-forward layers with fresh
    /// random ones.
    pub fn with_fresh_mlp<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        Self {
            conv_kernel: self.conv_kernel.clone(),
            conv_bias: self.conv_bias.clone(),
            mlp1: Linear::init(rng, CONV_FLAT, FEATURE_DIM),
            mlp2: Linear::init(rng, FEATURE_DIM, FEATURE_DIM),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> VisionVars {
        VisionVars {
            conv_kernel: tape.leaf(self.conv_kernel.clone(), trainable),
            conv_bias: tape.leaf(self.conv_bias.clone(), trainable),
            mlp1: self.mlp1.bind(tape, trainable),
            mlp2: self.mlp2.bind(tape, trainable),
        }
    }
}

impl ParamTree for VisionParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "conv.kernel"), &self.conv_kernel);
        f(join(prefix, "conv.bias"), &self.conv_bias);
        self.mlp1.visit(&join(prefix, "mlp1"), f);
        self.mlp2.visit(&join(prefix, "mlp2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "conv.kernel"), &mut self.conv_kernel);
        f(join(prefix, "conv.bias"), &mut self.conv_bias);
        self.mlp1.visit_mut(&join(prefix, "mlp1"), f);
        self.mlp2.visit_mut(&join(prefix, "mlp2"), f);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VisionVars {
    pub conv_kernel: Var,
    pub conv_bias: Var,
    pub mlp1: LinearVars,
    pub mlp2: LinearVars,
}

impl VisionVars {
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Var)) {
        f(join(prefix, "conv.kernel"), self.conv_kernel);
        f(join(prefix, "conv.bias"), self.conv_bias);
        self.mlp1.visit(&join(prefix, "mlp1"), f);
        self.mlp2.visit(&join(prefix, "mlp2"), f);
    }
}

/// Attribute classifier used only while pretraining the vision module.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHeads {
    pub color: Linear,
    pub position: Linear,
}

impl ClassifierHeads {
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            color: Linear::init(rng, FEATURE_DIM, NUM_COLOR_CLASSES),
            position: Linear::init(rng, FEATURE_DIM, NUM_POSITION_CLASSES),
        }
    }

    pub fn zeros() -> Self {
        Self {
            color: Linear::zeros(FEATURE_DIM, NUM_COLOR_CLASSES),
            position: Linear::zeros(FEATURE_DIM, NUM_POSITION_CLASSES),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> HeadVars {
        HeadVars {
            color: self.color.bind(tape, trainable),
            position: self.position.bind(tape, trainable),
        }
    }
}

impl ParamTree for ClassifierHeads {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.color.visit(&join(prefix, "color"), f);
        self.position.visit(&join(prefix, "position"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.color.visit_mut(&join(prefix, "color"), f);
        self.position.visit_mut(&join(prefix, "position"), f);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub color: LinearVars,
    pub position: LinearVars,
}

impl HeadVars {
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Var)) {
        self.color.visit(&join(prefix, "color"), f);
        self.position.visit(&join(prefix, "position"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerParams {
    pub vision: VisionParams,
    /// Maps the 50-d target feature to the initial LSTM hidden state.
    pub init_proj: Linear,
    pub embedding: Tensor,
    pub start_token: Tensor,
    pub lstm: LstmParams,
    pub output: Linear,
}

impl SpeakerParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, vision: VisionParams) -> Self {
        let mut s = Self {
            vision,
            init_proj: Linear::zeros(FEATURE_DIM, HIDDEN_DIM),
            embedding: Tensor::zeros(&[VOCAB_SIZE, EMBED_DIM]),
            start_token: Tensor::zeros(&[EMBED_DIM]),
            lstm: LstmParams::init(rng, EMBED_DIM, HIDDEN_DIM),
            output: Linear::zeros(HIDDEN_DIM, VOCAB_SIZE),
        };
        s.reset_policy(rng);
        s
    }

    /// Re-initialises every non-vision parameter.
    pub fn reset_policy<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.init_proj = Linear::init(rng, FEATURE_DIM, HIDDEN_DIM);
        self.embedding = uniform(rng, &[VOCAB_SIZE, EMBED_DIM], fan_in_bound(EMBED_DIM));
        self.start_token = uniform(rng, &[EMBED_DIM], fan_in_bound(EMBED_DIM));
        self.lstm = LstmParams::init(rng, EMBED_DIM, HIDDEN_DIM);
        self.output = Linear::init(rng, HIDDEN_DIM, VOCAB_SIZE);
    }

    pub fn bind(&self, tape: &mut Tape, set: TrainableSet) -> SpeakerVars {
        let policy = set.trains_policy();
        SpeakerVars {
            vision: self.vision.bind(tape, set.trains_vision()),
            init_proj: self.init_proj.bind(tape, policy),
            embedding: tape.leaf(self.embedding.clone(), policy),
            start_token: tape.leaf(self.start_token.clone(), policy),
            lstm: self.lstm.bind(tape, policy),
            output: self.output.bind(tape, policy),
        }
    }
}

impl ParamTree for SpeakerParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.vision.visit(&join(prefix, "vision"), f);
        self.init_proj.visit(&join(prefix, "init_proj"), f);
        f(join(prefix, "embedding"), &self.embedding);
        f(join(prefix, "start_token"), &self.start_token);
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.vision.visit_mut(&join(prefix, "vision"), f);
        self.init_proj.visit_mut(&join(prefix, "init_proj"), f);
        f(join(prefix, "embedding"), &mut self.embedding);
        f(join(prefix, "start_token"), &mut self.start_token);
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpeakerVars {
    pub vision: VisionVars,
    pub init_proj: LinearVars,
    pub embedding: Var,
    pub start_token: Var,
    pub lstm: LstmVars,
    pub output: LinearVars,
}

impl SpeakerVars {
    /// Same names and order as [`SpeakerParams`]'s [`ParamTree`] impl.
    pub fn visit(&self, f: &mut dyn FnMut(String, Var)) {
        self.vision.visit("vision", f);
        self.init_proj.visit("init_proj", f);
        f("embedding".into(), self.embedding);
        f("start_token".into(), self.start_token);
        self.lstm.visit("lstm", f);
        self.output.visit("output", f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListenerParams {
    pub vision: VisionParams,
    pub embedding: Tensor,
    pub lstm: LstmParams,
    /// Pointing module: projects 50-d candidate features into the 64-d
    /// message space before the dot product.
    pub candidate_proj: Linear,
}

impl ListenerParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, vision: VisionParams) -> Self {
        let mut l = Self {
            vision,
            embedding: Tensor::zeros(&[VOCAB_SIZE, EMBED_DIM]),
            lstm: LstmParams::init(rng, EMBED_DIM, HIDDEN_DIM),
            candidate_proj: Linear::zeros(FEATURE_DIM, HIDDEN_DIM),
        };
        l.reset_policy(rng);
        l
    }

    pub fn reset_policy<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.embedding = uniform(rng, &[VOCAB_SIZE, EMBED_DIM], fan_in_bound(EMBED_DIM));
        self.lstm = LstmParams::init(rng, EMBED_DIM, HIDDEN_DIM);
        self.candidate_proj = Linear::init(rng, FEATURE_DIM, HIDDEN_DIM);
    }

    pub fn bind(&self, tape: &mut Tape, set: TrainableSet) -> ListenerVars {
        let policy = set.trains_policy();
        ListenerVars {
            vision: self.vision.bind(tape, set.trains_vision()),
            embedding: tape.leaf(self.embedding.clone(), policy),
            lstm: self.lstm.bind(tape, policy),
            candidate_proj: self.candidate_proj.bind(tape, policy),
        }
    }
}

impl ParamTree for ListenerParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.vision.visit(&join(prefix, "vision"), f);
        f(join(prefix, "embedding"), &self.embedding);
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.candidate_proj.visit(&join(prefix, "candidate_proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.vision.visit_mut(&join(prefix, "vision"), f);
        f(join(prefix, "embedding"), &mut self.embedding);
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.candidate_proj.visit_mut(&join(prefix, "candidate_proj"), f);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ListenerVars {
    pub vision: VisionVars,
    pub embedding: Var,
    pub lstm: LstmVars,
    pub candidate_proj: LinearVars,
}

impl ListenerVars {
    pub fn visit(&self, f: &mut dyn FnMut(String, Var)) {
        self.vision.visit("vision", f);
        f("embedding".into(), self.embedding);
        self.lstm.visit("lstm", f);
        self.candidate_proj.visit("candidate_proj", f);
    }
}
