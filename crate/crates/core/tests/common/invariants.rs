//! Randomized instance checks shared by the property tests and the
//! acceptance run.

use mktcube::autodiff::{additive_attention, gather, maxpool_with_indices, unpool, AttentionVars, Tape, Tensor};
use rand::Rng;

fn draw<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// One random attention instance. Returns a description of the first
/// violated invariant.
pub fn attention_instance<R: Rng>(rng: &mut R) -> Result<(), String> {
    let j = rng.random_range(1..12);
    let t = rng.random_range(1..10);
    let v = rng.random_range(1..8);
    let a = rng.random_range(1..8);
    let scale = rng.random_range(0.1..20.0);
    let mut tape = Tape::<f64>::new();
    let features = tape.constant(&[j, t], draw(rng, j * t, scale)).unwrap();
    let stock = tape.vector(&draw(rng, v, 1.0));
    let params = AttentionVars {
        w_stock: tape.constant(&[a, v], draw(rng, a * v, scale)).unwrap(),
        w_feature: tape.constant(&[a, t], draw(rng, a * t, scale)).unwrap(),
        score: tape.vector(&draw(rng, a, scale)),
    };
    let out = additive_attention(&mut tape, stock, features, &params).map_err(|e| e.to_string())?;
    let w = tape.value(out.weights);
    if let Some(x) = w.iter().find(|&&x| !(x >= 0.0)) {
        return Err(format!("negative weight {x}"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(format!("weights sum to {total}"));
    }
    let c = tape.value(features);
    for (k, &p) in tape.value(out.pooled).iter().enumerate() {
        let col = (0..j).map(|r| c[r * t + k]);
        let lo = col.clone().fold(f64::INFINITY, f64::min);
        let hi = col.fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
        if p < lo - slack || p > hi + slack {
            return Err(format!("pooled[{k}] = {p} outside [{lo}, {hi}]"));
        }
    }
    Ok(())
}

fn random_shape<R: Rng>(rng: &mut R) -> (Vec<usize>, usize, usize) {
    let rank = rng.random_range(1..4);
    let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..7)).collect();
    let axis = rng.random_range(0..rank);
    let window = rng.random_range(1..5);
    (shape, axis, window)
}

/// One random pool/unpool instance.
pub fn pool_instance<R: Rng>(rng: &mut R) -> Result<(), String> {
    let (shape, axis, window) = random_shape(rng);
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape.clone(), draw(rng, n, 5.0)).unwrap();
    let rec = maxpool_with_indices(&x, window, axis).map_err(|e| e.to_string())?;
    if gather(&x, &rec.indices) != rec.output.data() {
        return Err("gather does not reproduce the pooled values".into());
    }
    let up = unpool(&rec, shape[axis]).map_err(|e| e.to_string())?;
    if up.shape() != shape.as_slice() {
        return Err(format!("unpooled shape {:?}", up.shape()));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    for o in 0..outer {
        for i in 0..inner {
            for start in (0..len).step_by(window) {
                let nz = (start..(start + window).min(len))
                    .filter(|&p| up.data()[(o * len + p) * inner + i] != 0.0)
                    .count();
                if nz > 1 {
                    return Err(format!("{nz} nonzeros in one window"));
                }
            }
        }
    }
    // Fixed point on non-negative data, where the zero fill never wins.
    let pos = Tensor::new(shape.clone(), x.data().iter().map(|v| v.abs() + 0.01).collect()).unwrap();
    let rec = maxpool_with_indices(&pos, window, axis).unwrap();
    let again = maxpool_with_indices(&unpool(&rec, len).unwrap(), window, axis).unwrap();
    if again != rec {
        return Err("pool(unpool(pool(x))) differs from pool(x)".into());
    }
    Ok(())
}
