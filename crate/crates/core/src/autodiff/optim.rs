use crate::autodiff::tensor::ParamStore;
use crate::autodiff::{AutodiffError, Result};
use crate::scalar::Scalar;

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [&mut [T]], max_norm: T) -> T {
    let sq: T = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&x| x * x)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > T::zero() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Zeroed moments shaped like `params`; lr 0.001, betas (0.9, 0.999), eps 1e-8.
    pub fn new(params: &ParamStore<T>) -> Self {
        Self::with_learning_rate(params, T::lit(1e-3))
    }

    pub fn with_learning_rate(params: &ParamStore<T>, learning_rate: T) -> Self {
        let zeros: Vec<Vec<T>> = params
            .iter()
            .map(|(_, t)| vec![T::zero(); t.len()])
            .collect();
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// Rebuilds an optimizer from serialized state.
    pub fn from_parts(
        hyper: [T; 4],
        step: u64,
        first_moment: Vec<Vec<T>>,
        second_moment: Vec<Vec<T>>,
    ) -> Result<Self> {
        if first_moment.len() != second_moment.len()
            || first_moment
                .iter()
                .zip(&second_moment)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam",
                expected: first_moment.iter().map(Vec::len).collect(),
                got: second_moment.iter().map(Vec::len).collect(),
            });
        }
        Ok(Self {
            learning_rate: hyper[0],
            beta1: hyper[1],
            beta2: hyper[2],
            epsilon: hyper[3],
            step,
            first_moment,
            second_moment,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.second_moment
    }

    /// Applies one update from the grads currently held in `params`.
    /// Parameters without a grad buffer are treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        let tensors = params.tensors_mut();
        if tensors.len() != self.first_moment.len()
            || tensors
                .iter()
                .zip(&self.first_moment)
                .any(|(t, m)| t.len() != m.len())
        {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam",
                expected: self.first_moment.iter().map(Vec::len).collect(),
                got: tensors.iter().map(|t| t.len()).collect(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for ((tensor, m), v) in tensors
            .iter_mut()
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            let (data, grad) = tensor.data_and_grad_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamId, Tensor};

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::vector(values.to_vec()));
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = store(&[1.0]);
        let id = p.find("p").unwrap();
        p.get_mut(id).accumulate_grad(&[1.0]);
        let mut adam = Adam::new(&p);
        adam.step(&mut p).unwrap();
        // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.get(id).data()[0] - expected).abs() < 1e-15);
        assert!((p.get(id).data()[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = store(&[0.25, -3.5, 7.0]);
        let before = p.get(ParamId(0)).data().to_vec();
        let mut adam = Adam::new(&p);
        for _ in 0..5 {
            p.zero_grad();
            let _ = p.grads_mut();
            adam.step(&mut p).unwrap();
        }
        assert_eq!(p.get(ParamId(0)).data(), before.as_slice());
    }

    #[test]
    fn moments_follow_ema_recursion() {
        let mut p = store(&[0.0, 0.0]);
        let mut adam = Adam::new(&p);
        let g = [0.5, -2.0];
        for _ in 0..2 {
            p.zero_grad();
            p.get_mut(ParamId(0)).accumulate_grad(&g);
            adam.step(&mut p).unwrap();
            p.zero_grad();
        }
        assert_eq!(adam.step_count(), 2);
        for (i, &gi) in g.iter().enumerate() {
            // m2 = 0.9*0.1 g + 0.1 g = 0.19 g ; v2 = 0.999*0.001 g^2 + 0.001 g^2 = 0.001999 g^2
            assert!((adam.first_moment()[0][i] - 0.19 * gi).abs() < 1e-15);
            assert!((adam.second_moment()[0][i] - 0.001999 * gi * gi).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_mismatched_store() {
        let p = store(&[1.0, 2.0]);
        let mut adam = Adam::new(&p);
        let mut other = store(&[1.0]);
        assert!(adam.step(&mut other).is_err());
    }

    #[test]
    fn clipping_halves_norm_ten() {
        let mut a = vec![6.0, 0.0];
        let mut b = vec![8.0];
        let n = clip_global_norm(&mut [a.as_mut_slice(), b.as_mut_slice()], 5.0);
        assert_eq!(n, 10.0);
        assert_eq!(a, vec![3.0, 0.0]);
        assert_eq!(b, vec![4.0]);
    }

    #[test]
    fn clipping_below_threshold_is_noop() {
        let mut a = vec![3.0, 0.0];
        let n = clip_global_norm(&mut [a.as_mut_slice()], 5.0);
        assert_eq!(n, 3.0);
        assert_eq!(a, vec![3.0, 0.0]);
    }
}
