//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

pub mod reference;

use lsg::numerics::{finite_diff_gradient, relative_error, NumericsError, OpKind, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f32 = 1e-3;
pub const GRAD_TOL: f32 = 1e-3;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Values bounded away from zero so relu kinks are never straddled by ±eps.
pub fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1f32..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// One registered op under test: its kind and a generator of conforming
/// inputs.
pub struct OpCase {
    pub name: &'static str,
    pub kind: OpKind,
    pub make_inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "matmul (matrix·matrix)",
            kind: OpKind::MatMul,
            make_inputs: |r| vec![rand_tensor(r, &[3, 4], 1.0), rand_tensor(r, &[4, 5], 1.0)],
        },
        OpCase {
            name: "matmul (vector·matrix)",
            kind: OpKind::MatMul,
            make_inputs: |r| vec![rand_tensor(r, &[6], 1.0), rand_tensor(r, &[6, 4], 1.0)],
        },
        OpCase {
            name: "matmul (matrix·vector)",
            kind: OpKind::MatMul,
            make_inputs: |r| vec![rand_tensor(r, &[3, 6], 1.0), rand_tensor(r, &[6], 1.0)],
        },
        OpCase {
            name: "matmul (many rows, sparse lhs)",
            kind: OpKind::MatMul,
            make_inputs: |r| {
                let mut a = rand_tensor(r, &[9, 5], 1.0);
                for (i, v) in a.data_mut().iter_mut().enumerate() {
                    if i % 3 == 0 {
                        *v = 0.0;
                    }
                }
                vec![a, rand_tensor(r, &[5, 3], 1.0)]
            },
        },
        OpCase {
            name: "conv2d",
            kind: OpKind::Conv2d,
            make_inputs: |r| {
                vec![
                    rand_tensor(r, &[2, 7, 6], 1.0),
                    rand_tensor(r, &[3, 2, 3, 3], 0.5),
                    rand_tensor(r, &[3], 0.5),
                ]
            },
        },
        OpCase {
            name: "add",
            kind: OpKind::Add,
            make_inputs: |r| vec![rand_tensor(r, &[4, 3], 1.0), rand_tensor(r, &[4, 3], 1.0)],
        },
        OpCase {
            name: "mul",
            kind: OpKind::Mul,
            make_inputs: |r| vec![rand_tensor(r, &[7], 1.0), rand_tensor(r, &[7], 1.0)],
        },
        OpCase {
            name: "scalar-mul",
            kind: OpKind::Scale(-1.7),
            make_inputs: |r| vec![rand_tensor(r, &[5], 1.0)],
        },
        OpCase {
            name: "tanh",
            kind: OpKind::Tanh,
            make_inputs: |r| vec![rand_tensor(r, &[6], 2.0)],
        },
        OpCase {
            name: "sigmoid",
            kind: OpKind::Sigmoid,
            make_inputs: |r| vec![rand_tensor(r, &[6], 3.0)],
        },
        OpCase {
            name: "relu",
            kind: OpKind::Relu,
            make_inputs: |r| vec![rand_away_from_zero(r, &[8])],
        },
        OpCase {
            name: "log_softmax",
            kind: OpKind::LogSoftmax,
            make_inputs: |r| vec![rand_tensor(r, &[10], 2.0)],
        },
        OpCase {
            name: "sum",
            kind: OpKind::Sum,
            make_inputs: |r| vec![rand_tensor(r, &[3, 4], 1.0)],
        },
        OpCase {
            name: "mean",
            kind: OpKind::Mean,
            make_inputs: |r| vec![rand_tensor(r, &[9], 1.0)],
        },
        OpCase {
            name: "embedding_lookup",
            kind: OpKind::EmbeddingLookup(3),
            make_inputs: |r| vec![rand_tensor(r, &[5, 4], 1.0)],
        },
        OpCase {
            name: "concat",
            kind: OpKind::Concat,
            make_inputs: |r| {
                vec![
                    rand_tensor(r, &[2, 3], 1.0),
                    rand_tensor(r, &[1, 3], 1.0),
                    rand_tensor(r, &[3, 3], 1.0),
                ]
            },
        },
        OpCase {
            name: "slice",
            kind: OpKind::Slice { start: 1, len: 2 },
            make_inputs: |r| vec![rand_tensor(r, &[4, 3], 1.0)],
        },
        OpCase {
            name: "reshape",
            kind: OpKind::Reshape(vec![2, 6]),
            make_inputs: |r| vec![rand_tensor(r, &[3, 4], 1.0)],
        },
        OpCase {
            name: "entropy",
            kind: OpKind::Entropy,
            make_inputs: |r| vec![rand_tensor(r, &[8], 3.0)],
        },
    ]
}

/// Scalar probe `Σ w ⊙ op(inputs)` with fixed random weights `w`, so every
/// output element contributes to the checked gradient.
fn probe_loss(
    kind: &OpKind,
    inputs: &[Tensor],
    weights: &Tensor,
    trainable: usize,
) -> Result<(Tape, Vec<Var>, Var), NumericsError> {
    let mut tape = Tape::new();
    let vars: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| tape.leaf(t.clone(), i == trainable))
        .collect();
    let out = tape.record(kind.clone(), &vars)?;
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    let loss = tape.sum(prod)?;
    Ok((tape, vars, loss))
}

/// Worst relative error between backward and central finite differences over
/// every input of `case`, for one seed.
pub fn op_gradient_error(case: &OpCase, seed: u64) -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (case.make_inputs)(&mut rng);
    let out_shape = {
        let mut tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = tape.record(case.kind.clone(), &vars).unwrap();
        tape.value(out).shape().to_vec()
    };
    let out_len: usize = out_shape.iter().product();
    let weights = if out_shape.is_empty() {
        Tensor::scalar(rng.random_range(0.5..1.5))
    } else {
        rand_tensor(&mut rng, &[out_len], 1.0).reshaped(&out_shape).unwrap()
    };
    let mut worst = 0.0f32;
    for idx in 0..inputs.len() {
        let (tape, vars, loss) = probe_loss(&case.kind, &inputs, &weights, idx).unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic = grads.get(vars[idx]).unwrap().clone();
        let numeric = finite_diff_gradient(
            |x: &Tensor| {
                let mut perturbed = inputs.clone();
                perturbed[idx] = x.clone();
                let (tape, _, loss) = probe_loss(&case.kind, &perturbed, &weights, usize::MAX)?;
                Ok::<f32, NumericsError>(tape.value(loss).item())
            },
            &inputs[idx],
            FD_EPS,
        )
        .unwrap();
        worst = worst.max(relative_error(analytic.data(), numeric.data()));
    }
    worst
}

/// Worst relative error over all weights of a random two-layer tanh MLP with
/// a log-softmax head.
pub fn mlp_gradient_error(seed: u64) -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_tensor(&mut rng, &[6], 1.0);
    let params = vec![
        rand_tensor(&mut rng, &[6, 8], 0.6),
        rand_tensor(&mut rng, &[8], 0.3),
        rand_tensor(&mut rng, &[8, 3], 0.6),
        rand_tensor(&mut rng, &[3], 0.3),
    ];
    let build = |ps: &[Tensor], trainable: bool| {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let vars: Vec<_> = ps.iter().map(|p| tape.leaf(p.clone(), trainable)).collect();
        let h = tape.linear(xv, vars[0], vars[1]).unwrap();
        let h = tape.tanh(h).unwrap();
        let o = tape.linear(h, vars[2], vars[3]).unwrap();
        let lp = tape.log_softmax(o).unwrap();
        let pick = tape.pick(lp, 1).unwrap();
        (tape, vars, pick)
    };
    let (tape, vars, loss) = build(&params, true);
    let grads = tape.backward(loss).unwrap();
    let mut worst = 0.0f32;
    for i in 0..params.len() {
        let numeric = finite_diff_gradient(
            |p: &Tensor| {
                let mut ps = params.clone();
                ps[i] = p.clone();
                let (tape, _, loss) = build(&ps, false);
                Ok::<f32, NumericsError>(tape.value(loss).item())
            },
            &params[i],
            FD_EPS,
        )
        .unwrap();
        worst = worst.max(relative_error(grads.get(vars[i]).unwrap().data(), numeric.data()));
    }
    worst
}

/// Freshly initialised speaker and listener with independent random vision.
pub fn fresh_pair(seed: u64) -> (lsg::agents::SpeakerParams, lsg::agents::ListenerParams) {
    use lsg::agents::{ListenerParams, SpeakerParams, VisionParams};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sv = VisionParams::init(&mut rng);
    let speaker = SpeakerParams::init(&mut rng, sv);
    let lv = VisionParams::init(&mut rng);
    let listener = ListenerParams::init(&mut rng, lv);
    (speaker, listener)
}

/// Copy of `params` with the tensor called `name` replaced by `f(old)`.
pub fn with_param<P: lsg::agents::ParamTree + Clone>(params: &P, name: &str, f: impl Fn(&Tensor) -> Tensor) -> P {
    let mut out = params.clone();
    let mut found = false;
    out.visit_mut("", &mut |n, t| {
        if n == name {
            *t = f(t);
            found = true;
        }
    });
    assert!(found, "no parameter named {name}");
    out
}

pub fn param<'a, P: lsg::agents::ParamTree>(params: &'a P, name: &str) -> &'a Tensor {
    params
        .named()
        .into_iter()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("no parameter named {name}"))
        .1
}

/// Names whose tensors differ bitwise between two parameter trees.
pub fn changed_params<P: lsg::agents::ParamTree>(before: &P, after: &P) -> Vec<String> {
    before
        .named()
        .into_iter()
        .zip(after.named())
        .filter(|((_, a), (_, b))| !a.bit_eq(b))
        .map(|((n, _), _)| n)
        .collect()
}

/// Parameters whose surrogate gradient is checked coordinate-wise. The
/// listener's candidate-projection bias shifts every score equally, so its
/// true gradient is identically zero and it is left out.
pub const SPEAKER_VECTORS: &[&str] = &["vision.mlp2.bias", "init_proj.bias", "start_token", "lstm.bias", "output.bias"];
pub const LISTENER_VECTORS: &[&str] = &["vision.mlp1.bias", "lstm.bias"];
/// Matrices checked along one random direction each.
pub const SPEAKER_MATRICES: &[&str] = &["vision.mlp2.weight", "init_proj.weight", "lstm.w_hh", "output.weight"];
pub const LISTENER_MATRICES: &[&str] = &["vision.mlp2.weight", "lstm.w_ih", "candidate_proj.weight"];

/// Worst relative error between the backward gradient of the surrogate loss
/// on one 2-candidate game (actions replayed unchanged) and central
/// differences of the same loss evaluated by the f64 reference model.
pub fn surrogate_gradient_error(seed: u64) -> f64 {
    use lsg::agents::{Action, TrainableSet};
    use lsg::learning::{play_batch, play_batch_with, surrogate_gradients, Actions, Coefficients, Features, PlayConfig};
    use lsg::shapes::{build_dataset, sample_game};
    use reference::*;

    let (speaker, listener) = fresh_pair(seed);
    let data = build_dataset(seed, 40, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let game = vec![sample_game(&data.train, 2, &mut rng).unwrap()];
    let frozen = PlayConfig {
        filter: TrainableSet::Frozen,
        features: Features::Encode,
    };
    let played = play_batch(&speaker, &listener, &game, frozen, &mut rng).unwrap().games()[0].clone();
    let fixed = Actions {
        speaker: Action::Fixed(played.message),
        listener: Action::Fixed(played.choice),
    };
    // A baseline away from the reward keeps the policy-gradient term alive.
    let baseline = 0.5 - 0.3 * (played.reward - 0.5);
    let alpha = 0.07;
    let coefficients = Coefficients {
        baseline,
        alphas: vec![alpha],
    };
    let batch = play_batch_with(&speaker, &listener, &game, PlayConfig::training(), &mut rng, &mut |_| fixed.clone())
        .unwrap();
    let grads = surrogate_gradients(batch, &coefficients).unwrap();

    let sp = RefParams::of(&speaker);
    let lp = RefParams::of(&listener);
    let target = &game[0].candidates[game[0].target_index].pixels;
    let cands: Vec<&Tensor> = game[0].candidates.iter().map(|c| &c.pixels).collect();
    let s_conv = conv_relu(sp.view(), target);
    let l_conv: Vec<Vec<f64>> = cands.iter().map(|c| conv_relu(lp.view(), c)).collect();
    let s_feat = mlp(sp.view(), &s_conv);
    let l_feat: Vec<Vec<f64>> = l_conv.iter().map(|c| mlp(lp.view(), c)).collect();
    let advantage = f64::from(played.reward - baseline);
    let loss = |s: View<'_>, l: View<'_>| {
        let su = if s.touches_vision() { mlp(s, &s_conv) } else { s_feat.clone() };
        let lu: Vec<Vec<f64>> = if l.touches_vision() {
            l_conv.iter().map(|c| mlp(l, c)).collect()
        } else {
            l_feat.clone()
        };
        let (token_lp, entropies) = speaker_terms(s, &su, &played.message);
        let choice_lp = listener_log_probs(l, &played.message, &lu)[played.choice];
        let logp: f64 = token_lp.iter().sum::<f64>() + choice_lp;
        -(advantage * logp + f64::from(alpha) * entropies.iter().sum::<f64>())
    };

    let analytic = |list: &[(String, Tensor)], name: &str| -> Vec<f64> {
        let g = &list.iter().find(|(n, _)| n == name).unwrap().1;
        g.data().iter().map(|&v| f64::from(v)).collect()
    };
    let eps = f64::from(FD_EPS);
    let mut worst = 0.0f64;
    let mut note = |what: &str, e: f64| {
        if std::env::var_os("LSG_GRAD_TRACE").is_some() {
            eprintln!("seed {seed} {what}: {e:.2e}");
        }
        worst = worst.max(e);
    };
    for &name in SPEAKER_VECTORS {
        let numeric = central_diff(|x| loss(sp.with(name, x), lp.view()), sp.values(name), eps);
        note(name, rel_err(&analytic(&grads.speaker, name), &numeric));
    }
    for &name in LISTENER_VECTORS {
        let numeric = central_diff(|x| loss(sp.view(), lp.with(name, x)), lp.values(name), eps);
        let mut exact = analytic(&grads.listener, name);
        let mut numeric = numeric;
        if name == "vision.mlp1.bias" {
            // A step of eps can carry a hidden unit across the relu kink, where
            // the loss is not differentiable; those units are left out.
            let pre: Vec<Vec<f64>> = l_conv.iter().map(|c| hidden_preactivations(lp.view(), c)).collect();
            let smooth: Vec<bool> = (0..exact.len()).map(|j| pre.iter().all(|z| z[j].abs() > 2.0 * eps)).collect();
            exact = exact.iter().zip(&smooth).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
            numeric = numeric.iter().zip(&smooth).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
        }
        note(name, rel_err(&exact, &numeric));
    }
    // Embedding row of the first token, for both agents.
    let token = usize::from(played.message.tokens()[0]);
    for (params, list, is_speaker) in [(&sp, &grads.speaker, true), (&lp, &grads.listener, false)] {
        let table = params.values("embedding");
        let dim = table.len() / 20;
        let range = token * dim..(token + 1) * dim;
        let numeric = central_diff(
            |row| {
                let mut t = table.to_vec();
                t[range.clone()].copy_from_slice(row);
                if is_speaker {
                    loss(sp.with("embedding", &t), lp.view())
                } else {
                    loss(sp.view(), lp.with("embedding", &t))
                }
            },
            &table[range.clone()],
            eps,
        );
        note("embedding row", rel_err(&analytic(list, "embedding")[range.clone()], &numeric));
    }
    // Directional derivatives for the large matrices.
    let mut dir_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + 7);
    for (params, names, list, is_speaker) in [
        (&sp, SPEAKER_MATRICES, &grads.speaker, true),
        (&lp, LISTENER_MATRICES, &grads.listener, false),
    ] {
        for &name in names {
            let base = params.values(name);
            let d: Vec<f64> = (0..base.len()).map(|_| dir_rng.random_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d: Vec<f64> = d.iter().map(|v| v / norm).collect();
            let along = |t: f64| -> f64 {
                let moved: Vec<f64> = base.iter().zip(&d).map(|(b, di)| b + t * di).collect();
                if is_speaker {
                    loss(sp.with(name, &moved), lp.view())
                } else {
                    loss(sp.view(), lp.with(name, &moved))
                }
            };
            let numeric = (along(eps) - along(-eps)) / (2.0 * eps);
            let exact: f64 = analytic(list, name).iter().zip(&d).map(|(g, di)| g * di).sum();
            note(name, rel_err(&[exact], &[numeric]));
        }
    }
    worst
}
