//! Composite layers built from tape primitives.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Result, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Tensor with entries drawn uniformly from `[-bound, bound]`.
pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..=bound)))
}

/// `W x + b`.
pub fn linear<T: Scalar>(tape: &mut Tape<T>, w: Var, b: Var, x: Var) -> Result<Var> {
    let y = tape.matvec(w, x)?;
    tape.add(y, b)
}

/// Weight/bias pair registered in a parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        inputs: usize,
        outputs: usize,
        bound: f64,
    ) -> Self {
        let weight = store.add(format!("{name}.w"), uniform(rng, &[outputs, inputs], bound));
        let bias = store.add(format!("{name}.b"), uniform(rng, &[outputs], bound));
        Self { weight, bias }
    }

    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> BoundDense {
        BoundDense {
            weight: tape.param(store, self.weight),
            bias: tape.param(store, self.bias),
        }
    }

    pub fn outputs<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.get(self.weight).shape()[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
}

impl BoundDense {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        linear(tape, self.weight, self.bias, x)
    }
}

/// Learned parameters of the additive attention block, bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    /// `[a, v]`, projects the stock embedding.
    pub w_stock: Var,
    /// `[a, t]`, projects one feature map.
    pub w_feature: Var,
    /// `[a]`, scores the joint projection.
    pub score: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Attention {
    /// `[J]` probability vector over feature maps.
    pub weights: Var,
    /// `[t]` weighted mean of the feature maps.
    pub pooled: Var,
}

/// Additive attention over feature maps conditioned on a stock embedding.
///
/// `features` is `[J, t]` with one feature map per row. With
/// `z_j = tanh(W_s s + W_c c_j)` the weights are `softmax_j(score . z_j)` and
/// the pooled vector is `sum_j weight_j c_j`.
pub fn additive_attention<T: Scalar>(
    tape: &mut Tape<T>,
    stock_emb: Var,
    features: Var,
    params: &AttentionVars,
) -> Result<Attention> {
    let stock_proj = tape.matvec(params.w_stock, stock_emb)?; // [a]
    let wct = tape.transpose(params.w_feature)?; // [t, a]
    let feat_proj = tape.matmul(features, wct)?; // [J, a]
    let pre = tape.add_row(feat_proj, stock_proj)?;
    let z = tape.tanh(pre);
    let energies = tape.matvec(z, params.score)?; // [J]
    let weights = tape.softmax(energies);
    let ft = tape.transpose(features)?; // [t, J]
    let pooled = tape.matvec(ft, weights)?;
    Ok(Attention { weights, pooled })
}

/// One LSTM step. `w` is `[4H, H + X]` over `concat(h_prev, x)` with gate
/// rows ordered input, forget, output, candidate.
pub fn lstm_step<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: Var,
    bias: Option<Var>,
) -> Result<(Var, Var)> {
    let hidden = tape.value(h_prev).len();
    let joined = tape.concat(&[h_prev, x])?;
    let mut pre = tape.matvec(w, joined)?;
    if let Some(b) = bias {
        pre = tape.add(pre, b)?;
    }
    let gi = tape.slice(pre, 0, hidden)?;
    let gf = tape.slice(pre, hidden, hidden)?;
    let go = tape.slice(pre, 2 * hidden, hidden)?;
    let gj = tape.slice(pre, 3 * hidden, hidden)?;
    let i = tape.sigmoid(gi);
    let f = tape.sigmoid(gf);
    let o = tape.sigmoid(go);
    let j = tape.tanh(gj);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, j)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Registered LSTM weights (`[4H, H + X]` plus a `[4H]` bias).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        inputs: usize,
        hidden: usize,
        bound: f64,
    ) -> Self {
        let weight = store.add(
            format!("{name}.w"),
            uniform(rng, &[4 * hidden, hidden + inputs], bound),
        );
        let bias = store.add(format!("{name}.b"), uniform(rng, &[4 * hidden], bound));
        Self { weight, bias, hidden }
    }

    /// Runs the cell over `steps` from zero state and returns the last hidden state.
    pub fn last_hidden<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        steps: &[Var],
    ) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let zeros = vec![T::zero(); self.hidden];
        let mut h = tape.vector(&zeros);
        let mut c = tape.vector(&zeros);
        for &x in steps {
            (h, c) = lstm_step(tape, x, h, c, w, Some(b))?;
        }
        Ok(h)
    }
}
