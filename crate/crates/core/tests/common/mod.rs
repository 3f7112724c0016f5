#![allow(dead_code)]

use clinlm_core::model::{Grads, LanguageModel, ModelConfig};
use clinlm_core::tensor::{Graph, NodeId, Tensor};

pub const H: f64 = 5e-4;
pub const REL_TOL: f64 = 1e-4;

pub fn tiny(vocab: usize) -> ModelConfig {
    ModelConfig { vocab_size: vocab, d_model: 8, n_layers: 2, n_heads: 2, d_ff: 16, max_seq_len: 8, dropout_rate: 0.0 }
}

/// Five-point central difference.
pub fn stencil(f: &mut dyn FnMut(f64) -> f64, x: f64) -> f64 {
    let (p1, m1, p2, m2) = (f(x + H), f(x - H), f(x + 2.0 * H), f(x - 2.0 * H));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * H)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

fn set_param<M: LanguageModel<f64>>(model: &mut M, name: &str, i: usize, v: f64) {
    for (n, t) in model.trainable_mut() {
        if n == name {
            t.data_mut()[i] = v;
            return;
        }
    }
    panic!("no trainable `{name}`");
}

/// Worst relative error between `analytic` and finite differences of `loss`
/// over every trainable scalar of `model`. Returns (worst, name, checked).
pub fn check_model<M: LanguageModel<f64>>(
    model: &mut M,
    analytic: &Grads<f64>,
    loss: &dyn Fn(&M) -> f64,
) -> (f64, String, usize) {
    let entries: Vec<(String, Vec<f64>)> =
        model.trainable_mut().into_iter().map(|(n, t)| (n, t.data().to_vec())).collect();
    let mut worst = (0.0, String::new(), 0);
    for (name, values) in entries {
        let grad = analytic.get(&name).unwrap_or_else(|| panic!("no analytic grad for {name}"));
        for (i, &orig) in values.iter().enumerate() {
            let mut f = |x: f64| {
                set_param(model, &name, i, x);
                loss(model)
            };
            let numeric = stencil(&mut f, orig);
            set_param(model, &name, i, orig);
            let e = rel_err(grad.data()[i], numeric);
            if e > worst.0 {
                worst = (e, format!("{name}[{i}]"), worst.2);
            }
            worst.2 += 1;
        }
    }
    worst
}

/// Gradient check of a graph function of several input tensors, reduced to
/// a scalar through a fixed random weighting.
pub fn check_op(inputs: &[Tensor<f64>], build: &dyn Fn(&mut Graph<f64>, &[NodeId]) -> NodeId) -> f64 {
    let eval = |vals: &[Tensor<f64>]| -> (f64, Vec<Tensor<f64>>) {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = vals.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &ids);
        let shape = g.value(out).shape().to_vec();
        let n = g.value(out).numel();
        let w: Vec<f64> = (0..n).map(|i| 0.5 + ((i * 7 + 3) % 11) as f64 / 10.0).collect();
        let w = g.constant(Tensor::new(shape, w).unwrap());
        let prod = g.mul(out, w).unwrap();
        let loss = g.sum(prod);
        let value = g.value(loss).item();
        g.backward(loss).unwrap();
        let grads =
            ids.iter().map(|&id| g.grad(id).unwrap_or_else(|| Tensor::zeros(g.value(id).shape().to_vec()))).collect();
        (value, grads)
    };
    let (_, analytic) = eval(inputs);
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let mut f = |x: f64| {
                let mut vals = inputs.to_vec();
                vals[k].data_mut()[i] = x;
                eval(&vals).0
            };
            let numeric = stencil(&mut f, input.data()[i]);
            worst = worst.max(rel_err(analytic[k].data()[i], numeric));
        }
    }
    worst
}

/// `−log softmax(row)[target]` computed directly.
pub fn nll(row: &[f64], target: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
    -(row[target] - m - z.ln())
}
