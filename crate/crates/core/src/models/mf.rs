use super::{check_index, dot, init_gaussian, layout, CfModel, Gradient, ModelKind, Segment, UserInput};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Logistic matrix factorization: `z_ui = <P_u, Q_i> + b_i`.
///
/// Layout: user factors `[m x d]`, item factors `[n x d]`, item bias `[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfLogistic<S> {
    num_users: usize,
    num_items: usize,
    dim: usize,
    params: Vec<S>,
}

impl<S: Scalar> MfLogistic<S> {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        let len = dim * (num_users + num_items) + num_items;
        MfLogistic { num_users, num_items, dim, params: vec![S::zero(); len] }
    }

    /// Gaussian factors, zero biases.
    pub fn new(num_users: usize, num_items: usize, dim: usize, seed: u64, std: f64) -> Result<Self> {
        let mut m = Self::zeros(num_users, num_items, dim);
        let segs = m.segments();
        for (k, s) in segs[..2].iter().enumerate() {
            init_gaussian(&mut m.params[s.offset..s.offset + s.len()], seed, k as u64, std)?;
        }
        Ok(m)
    }

    pub fn from_params(num_users: usize, num_items: usize, dim: usize, params: Vec<S>) -> Result<Self> {
        let m = Self::zeros(num_users, num_items, dim);
        if params.len() != m.params.len() {
            return Err(Error::Format(format!("MF expects {} parameters, got {}", m.params.len(), params.len())));
        }
        Ok(MfLogistic { params, ..m })
    }

    fn item_offset(&self) -> usize {
        self.num_users * self.dim
    }

    fn bias_offset(&self) -> usize {
        (self.num_users + self.num_items) * self.dim
    }

    pub fn user_factor(&self, u: usize) -> &[S] {
        &self.params[u * self.dim..(u + 1) * self.dim]
    }

    pub fn user_factor_mut(&mut self, u: usize) -> &mut [S] {
        &mut self.params[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_factor(&self, i: usize) -> &[S] {
        let o = self.item_offset() + i * self.dim;
        &self.params[o..o + self.dim]
    }

    pub fn item_factor_mut(&mut self, i: usize) -> &mut [S] {
        let o = self.item_offset() + i * self.dim;
        &mut self.params[o..o + self.dim]
    }

    pub fn item_bias(&self, i: usize) -> S {
        self.params[self.bias_offset() + i]
    }

    pub fn set_item_bias(&mut self, i: usize, b: S) {
        let o = self.bias_offset();
        self.params[o + i] = b;
    }

    fn check(&self, user: usize, items: &[usize]) -> Result<()> {
        check_index("user", user, self.num_users)?;
        items.iter().try_for_each(|&i| check_index("item", i, self.num_items))
    }
}

impl<S: Scalar> CfModel<S> for MfLogistic<S> {
    fn kind(&self) -> ModelKind {
        ModelKind::Mf
    }

    fn num_users(&self) -> usize {
        self.num_users
    }

    fn num_items(&self) -> usize {
        self.num_items
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn segments(&self) -> Vec<Segment> {
        layout(&[
            ("user_factors", self.num_users, self.dim),
            ("item_factors", self.num_items, self.dim),
            ("item_bias", self.num_items, 1),
        ])
    }

    fn params(&self) -> &[S] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    fn input(&self, _positives: &[usize]) -> UserInput<S> {
        UserInput::empty()
    }

    fn training_input(&self, _positives: &[usize], _rng: &mut Rng) -> UserInput<S> {
        UserInput::empty()
    }

    fn logits(&self, user: usize, _input: &UserInput<S>, items: &[usize]) -> Result<Vec<S>> {
        self.check(user, items)?;
        let p = self.user_factor(user);
        Ok(items.iter().map(|&i| dot(p, self.item_factor(i)) + self.item_bias(i)).collect())
    }

    fn logits_all(&self, user: usize, _input: &UserInput<S>) -> Result<Vec<S>> {
        check_index("user", user, self.num_users)?;
        let p = self.user_factor(user);
        let bias = &self.params[self.bias_offset()..];
        Ok(self.params[self.item_offset()..self.bias_offset()]
            .chunks_exact(self.dim)
            .zip(bias)
            .map(|(q, &b)| dot(p, q) + b)
            .collect())
    }

    fn backward(&self, user: usize, _input: &UserInput<S>, items: &[usize], dz: &[S]) -> Result<Gradient<S>> {
        self.check(user, items)?;
        if items.len() != dz.len() {
            return Err(Error::Precondition("backward: items and dz lengths differ".into()));
        }
        let d = self.dim;
        let p = self.user_factor(user);
        let mut grad = Gradient::new();
        {
            let gu = grad.block_mut(user * d, d);
            for (&i, &g) in items.iter().zip(dz) {
                for (acc, &q) in gu.iter_mut().zip(self.item_factor(i)) {
                    *acc += g * q;
                }
            }
        }
        for (&i, &g) in items.iter().zip(dz) {
            let gi = grad.block_mut(self.item_offset() + i * d, d);
            for (acc, &pu) in gi.iter_mut().zip(p) {
                *acc = g * pu;
            }
            grad.block_mut(self.bias_offset() + i, 1)[0] = g;
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_model() -> MfLogistic<f64> {
        let mut m = MfLogistic::zeros(1, 3, 2);
        m.user_factor_mut(0).copy_from_slice(&[1.0, 2.0]);
        m.item_factor_mut(0).copy_from_slice(&[3.0, 4.0]);
        m.set_item_bias(0, 0.5);
        m.item_factor_mut(1).copy_from_slice(&[-1.0, 0.5]);
        m.item_factor_mut(2).copy_from_slice(&[0.0, 0.0]);
        m.set_item_bias(2, -2.0);
        m
    }

    #[test]
    fn zero_model_gives_zero_logit() {
        let m = MfLogistic::<f64>::zeros(2, 2, 3);
        assert_eq!(m.forward_logit(1, &UserInput::empty(), 1).unwrap(), 0.0);
    }

    #[test]
    fn hand_worked_logits() {
        let m = hand_model();
        let inp = UserInput::empty();
        assert_eq!(m.forward_logit(0, &inp, 0).unwrap(), 11.5);
        // [1*3+2*4+0.5, 1*-1+2*0.5+0, 0-2]
        assert_eq!(m.logits(0, &inp, &[0, 1, 2]).unwrap(), vec![11.5, 0.0, -2.0]);
        assert_eq!(m.logits_all(0, &inp).unwrap(), vec![11.5, 0.0, -2.0]);
        assert!(m.logits(0, &inp, &[]).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_is_an_error() {
        let m = hand_model();
        let inp = UserInput::empty();
        assert!(matches!(m.forward_logit(1, &inp, 0), Err(Error::IndexOutOfRange { what: "user", .. })));
        assert!(matches!(m.logits(0, &inp, &[3]), Err(Error::IndexOutOfRange { what: "item", .. })));
    }

    #[test]
    fn single_item_gradient_is_chain_rule() {
        let m = hand_model();
        let g = m.backward(0, &UserInput::empty(), &[0], &[0.25]).unwrap().to_dense(m.param_count());
        assert_eq!(&g[0..2], &[0.75, 1.0]);
        assert_eq!(&g[2..4], &[0.25, 0.5]);
        assert_eq!(g[8], 0.25);
        let zero = m.backward(0, &UserInput::empty(), &[0, 2], &[0.0, 0.0]).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }
}
