//! Finite-difference checks of every tape primitive and the model losses.

use mktcube::autodiff::{additive_attention, linear, lstm_step, AttentionVars, ParamStore, Tape, Tensor, Var};
use mktcube::models::net::{Example, NetConfig, NeuralNet};
use mktcube::models::ModelKind;
use mktcube::segnet::{SegNet, SegNetConfig};

use super::{check_store, values, FdReport};

/// Every check, named.
pub fn all() -> Vec<(String, FdReport)> {
    let mut out = Vec::new();
    for group in [elementwise, matrix, conv_day, conv1d, pooling, attention, lstm, model_losses, segnet_loss] {
        group(&mut out);
    }
    out
}

/// `sum(v * w)` with fixed pseudo-random `w`, so every output entry matters.
fn project(tape: &mut Tape<f64>, v: Var, seed: u64) -> Var {
    let n = tape.value(v).len();
    let flat = tape.reshape(v, &[n]).unwrap();
    let w = tape.vector(&values(seed, n, -1.0, 1.0));
    tape.dot(flat, w).unwrap()
}

fn store_of(shapes: &[(&str, &[usize])], seed: u64, lo: f64, hi: f64) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (i, (name, shape)) in shapes.iter().enumerate() {
        let n: usize = shape.iter().product();
        s.add(*name, Tensor::new(shape.to_vec(), values(seed + i as u64, n, lo, hi)).unwrap());
    }
    s
}

fn params(tape: &mut Tape<f64>, s: &ParamStore<f64>) -> Vec<Var> {
    s.ids().map(|id| tape.param(s, id)).collect()
}

fn unary(out: &mut Vec<(String, FdReport)>, name: &str, f: impl Fn(&mut Tape<f64>, Var) -> Var) {
    let mut s = store_of(&[("x", &[2, 3])], 1, -2.0, 2.0);
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let y = f(tape, p[0]);
        project(tape, y, 99)
    });
    out.push((name.to_string(), r));
}

fn binary(out: &mut Vec<(String, FdReport)>, name: &str, a: &[usize], b: &[usize], f: impl Fn(&mut Tape<f64>, Var, Var) -> Var) {
    let mut s = store_of(&[("a", a), ("b", b)], 3, -1.5, 1.5);
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let y = f(tape, p[0], p[1]);
        project(tape, y, 98)
    });
    out.push((name.to_string(), r));
}

pub fn elementwise(out: &mut Vec<(String, FdReport)>) {
    unary(out, "tanh", |t, x| t.tanh(x));
    unary(out, "sigmoid", |t, x| t.sigmoid(x));
    unary(out, "relu", |t, x| t.relu(x));
    unary(out, "scale", |t, x| t.scale(x, -1.7));
    unary(out, "add_scalar", |t, x| t.add_scalar(x, 0.3));
    unary(out, "softmax", |t, x| t.softmax(x));
    unary(out, "sum", |t, x| t.sum(x));
    unary(out, "mean", |t, x| t.mean(x));
    unary(out, "transpose", |t, x| t.transpose(x).unwrap());
    unary(out, "reshape", |t, x| t.reshape(x, &[3, 2]).unwrap());
    unary(out, "slice", |t, x| t.slice(x, 1, 4).unwrap());
    unary(out, "row", |t, x| t.row(x, 1).unwrap());
    unary(out, "mse", |t, x| t.mse(x, &[0.1, 0.2, -0.3, 0.0, 1.0, -1.0]).unwrap());
    binary(out, "add", &[2, 3], &[2, 3], |t, a, b| t.add(a, b).unwrap());
    binary(out, "sub", &[2, 3], &[2, 3], |t, a, b| t.sub(a, b).unwrap());
    binary(out, "mul", &[2, 3], &[2, 3], |t, a, b| t.mul(a, b).unwrap());
    binary(out, "dot", &[5], &[5], |t, a, b| t.dot(a, b).unwrap());
    binary(out, "concat", &[2, 3], &[4], |t, a, b| t.concat(&[a, b]).unwrap());
    binary(out, "stack", &[4], &[4], |t, a, b| t.stack(&[a, b, a]).unwrap());
}

pub fn matrix(out: &mut Vec<(String, FdReport)>) {
    binary(out, "matmul", &[3, 4], &[4, 2], |t, a, b| t.matmul(a, b).unwrap());
    binary(out, "matvec", &[3, 4], &[4], |t, a, b| t.matvec(a, b).unwrap());
    binary(out, "add_row", &[3, 4], &[4], |t, a, b| t.add_row(a, b).unwrap());
    let mut s = store_of(&[("w", &[3, 4]), ("b", &[3]), ("x", &[4])], 5, -1.0, 1.0);
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let y = linear(tape, p[0], p[1], p[2]).unwrap();
        project(tape, y, 7)
    });
    out.push(("linear".to_string(), r));
}

pub fn conv_day(out: &mut Vec<(String, FdReport)>) {
    let (t, m, n, j) = (3, 4, 2, 5);
    let mut s = store_of(&[("cube", &[t, m, n]), ("k", &[j, n, m]), ("b", &[j])], 11, -1.0, 1.0);
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let y = tape.conv_day(p[0], p[1], p[2]).unwrap();
        project(tape, y, 12)
    });
    out.push(("conv_day".to_string(), r));
}

pub fn conv1d(out: &mut Vec<(String, FdReport)>) {
    let mut s = store_of(&[("x", &[6, 3]), ("w", &[4, 3, 3]), ("b", &[4])], 13, -1.0, 1.0);
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let y = tape.conv1d(p[0], p[1], p[2]).unwrap();
        project(tape, y, 14)
    });
    out.push(("conv1d".to_string(), r));
}

pub fn pooling(out: &mut Vec<(String, FdReport)>) {
    // well-separated values so no window has a near tie
    let mut s = ParamStore::new();
    let x: Vec<f64> = (0..15).map(|i| ((i * 7) % 15) as f64 * 0.37 - 2.0).collect();
    s.add("x", Tensor::new(vec![5, 3], x).unwrap());
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let (y, idx) = tape.maxpool(p[0], 2, 0).unwrap();
        let z = tape.tanh(y);
        let u = tape.unpool(z, &idx, 5).unwrap();
        let a = tape.adaptive_avg_pool(u, 4).unwrap();
        let b = tape.adaptive_avg_pool(p[0], 7).unwrap();
        let pa = project(tape, a, 15);
        let pb = project(tape, b, 16);
        tape.add(pa, pb).unwrap()
    });
    out.push(("maxpool/unpool/adaptive".to_string(), r));
}

pub fn attention(out: &mut Vec<(String, FdReport)>) {
    let (a, v, t, j) = (3, 4, 5, 6);
    let mut s = store_of(
        &[("s", &[v]), ("c", &[j, t]), ("ws", &[a, v]), ("wc", &[a, t]), ("v", &[a])],
        17,
        -1.0,
        1.0,
    );
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let vars = AttentionVars {
            w_stock: p[2],
            w_feature: p[3],
            score: p[4],
        };
        let att = additive_attention(tape, p[0], p[1], &vars).unwrap();
        let x = project(tape, att.pooled, 18);
        let y = project(tape, att.weights, 19);
        tape.add(x, y).unwrap()
    });
    out.push(("attention".to_string(), r));
}

pub fn lstm(out: &mut Vec<(String, FdReport)>) {
    let (h, x) = (3, 2);
    let mut s = store_of(
        &[("x", &[x]), ("h", &[h]), ("c", &[h]), ("w", &[4 * h, h + x]), ("b", &[4 * h])],
        21,
        -1.0,
        1.0,
    );
    let r = check_store(&mut s, |s, tape| {
        let p = params(tape, s);
        let (h1, c1) = lstm_step(tape, p[0], p[1], p[2], p[3], Some(p[4])).unwrap();
        let (h2, c2) = lstm_step(tape, p[0], h1, c1, p[3], Some(p[4])).unwrap();
        let a = project(tape, h2, 22);
        let b = project(tape, c2, 23);
        tape.add(a, b).unwrap()
    });
    out.push(("lstm".to_string(), r));
}

fn small_net(kind: ModelKind) -> NeuralNet {
    let mut cfg = NetConfig::new(kind, 3, 4, 3);
    cfg.kernels = 4;
    cfg.embedding = 3;
    cfg.attention = 3;
    cfg.market = 4;
    cfg.ma_hidden = 5;
    cfg.lstm = 3;
    cfg.stock = 3;
    cfg.fused = 5;
    cfg.fused_hidden = 4;
    cfg.ffnn_hidden = 4;
    cfg.lstm_rnn_cell = 3;
    cfg.init_bound = 0.8;
    let order = (0..4).map(|i| format!("S{i}")).collect();
    let mut rng = mktcube::seeds::stream(5, "init");
    NeuralNet::new(cfg, order, &mut rng).unwrap()
}

fn model_loss(kind: ModelKind) -> FdReport {
    let net = small_net(kind);
    assert!(net.store.num_scalars() <= 500, "{kind}: {} params", net.store.num_scalars());
    let cube = values(31, 3 * 4 * 3, 0.0, 1.0);
    let hist: Vec<Vec<f64>> = (0..4).map(|s| values(40 + s, 9, 0.0, 1.0)).collect();
    let targets = [0.5, -1.0, 0.2, 1.5];
    let mut store = net.store.clone();
    check_store(&mut store, |s, tape| {
        let mut n = net.clone();
        n.store = s.clone();
        let ex: Vec<Example> = (0..4)
            .map(|i| Example {
                key: 0,
                cube: &cube,
                history: &hist[i],
                stock: i,
            })
            .collect();
        let (preds, _) = n.forward(tape, &ex).unwrap();
        let p = tape.concat(&preds).unwrap();
        tape.mse(p, &targets).unwrap()
    })
}

pub fn model_losses(out: &mut Vec<(String, FdReport)>) {
    for kind in [ModelKind::Ma, ModelKind::MaRnn, ModelKind::Ffnn, ModelKind::LstmRnn] {
        out.push((kind.as_str().to_string(), model_loss(kind)));
    }
}

pub fn segnet_loss(out: &mut Vec<(String, FdReport)>) {
    let cfg = SegNetConfig {
        channels: vec![3, 4],
        kernel: 3,
        window: 2,
        grid: 2,
        embedding_dim: 3,
        init_bound: 0.5,
    };
    let mut rng = mktcube::seeds::stream(9, "init");
    let net = SegNet::new(cfg, 2, &mut rng).unwrap();
    assert!(net.store.num_scalars() <= 500);
    let img = values(50, 8 * 2, 0.0, 1.0);
    let mut store = net.store.clone();
    let r = check_store(&mut store, |s, tape| {
        let mut n = net.clone();
        n.store = s.clone();
        n.batch_loss(tape, &[&img], 8).unwrap()
    });
    out.push(("segnet".to_string(), r));
}
