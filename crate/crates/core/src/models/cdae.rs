use rand::Rng as _;

use super::{check_index, dot, init_gaussian, layout, CfModel, Gradient, ModelKind, Segment, UserInput};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{sigmoid, Scalar};

/// Collaborative denoising autoencoder.
///
/// `h = sigmoid(sum_j x_j W_j + V_u + b_h)`, `z_ui = <D_i, h> + c_i`, where
/// `x` is the user's (possibly corrupted) positive-item vector. During
/// training each positive is dropped with probability `corruption_ratio` and
/// survivors are scaled by `1 / (1 - corruption_ratio)`.
///
/// Layout: encoder `[n x d]`, user nodes `[m x d]`, hidden bias `[d]`,
/// decoder `[n x d]` (item-major), output bias `[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdaeStyle<S> {
    num_users: usize,
    num_items: usize,
    dim: usize,
    corruption_ratio: f64,
    params: Vec<S>,
}

impl<S: Scalar> CdaeStyle<S> {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize, corruption_ratio: f64) -> Self {
        let len = 2 * num_items * dim + num_users * dim + dim + num_items;
        CdaeStyle { num_users, num_items, dim, corruption_ratio, params: vec![S::zero(); len] }
    }

    /// Gaussian weights and user nodes, zero biases.
    pub fn new(
        num_users: usize,
        num_items: usize,
        dim: usize,
        corruption_ratio: f64,
        seed: u64,
        std: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&corruption_ratio) {
            return Err(Error::Precondition(format!("corruption ratio {corruption_ratio} outside [0, 1)")));
        }
        let mut m = Self::zeros(num_users, num_items, dim, corruption_ratio);
        for s in m.segments() {
            if matches!(s.name, "encoder" | "user_nodes" | "decoder") {
                init_gaussian(&mut m.params[s.offset..s.offset + s.len()], seed, s.offset as u64, std)?;
            }
        }
        Ok(m)
    }

    pub fn from_params(
        num_users: usize,
        num_items: usize,
        dim: usize,
        corruption_ratio: f64,
        params: Vec<S>,
    ) -> Result<Self> {
        let m = Self::zeros(num_users, num_items, dim, corruption_ratio);
        if params.len() != m.params.len() {
            return Err(Error::Format(format!("CDAE expects {} parameters, got {}", m.params.len(), params.len())));
        }
        Ok(CdaeStyle { params, ..m })
    }

    pub fn corruption_ratio(&self) -> f64 {
        self.corruption_ratio
    }

    fn seg(&self) -> [Segment; 5] {
        self.segments().try_into().unwrap()
    }

    fn row(&self, s: Segment, r: usize) -> &[S] {
        &self.params[s.row(r)]
    }

    /// Hidden activation of `user` given `input`.
    pub fn hidden(&self, user: usize, input: &UserInput<S>) -> Result<Vec<S>> {
        check_index("user", user, self.num_users)?;
        let [enc, nodes, hb, _, _] = self.seg();
        let mut a: Vec<S> = self.row(nodes, user).iter().zip(self.row(hb, 0)).map(|(&v, &b)| v + b).collect();
        for &(j, w) in &input.entries {
            check_index("input item", j, self.num_items)?;
            for (acc, &e) in a.iter_mut().zip(self.row(enc, j)) {
                *acc += w * e;
            }
        }
        Ok(a.into_iter().map(sigmoid).collect())
    }
}

impl<S: Scalar> CfModel<S> for CdaeStyle<S> {
    fn kind(&self) -> ModelKind {
        ModelKind::Cdae
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
            ("encoder", self.num_items, self.dim),
            ("user_nodes", self.num_users, self.dim),
            ("hidden_bias", 1, self.dim),
            ("decoder", self.num_items, self.dim),
            ("output_bias", self.num_items, 1),
        ])
    }

    fn params(&self) -> &[S] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    fn input(&self, positives: &[usize]) -> UserInput<S> {
        UserInput::from_items(positives)
    }

    fn training_input(&self, positives: &[usize], rng: &mut Rng) -> UserInput<S> {
        if self.corruption_ratio == 0.0 {
            return UserInput::from_items(positives);
        }
        let keep = S::of(1.0 / (1.0 - self.corruption_ratio));
        UserInput {
            entries: positives
                .iter()
                .filter(|_| rng.random::<f64>() >= self.corruption_ratio)
                .map(|&i| (i, keep))
                .collect(),
        }
    }

    fn logits(&self, user: usize, input: &UserInput<S>, items: &[usize]) -> Result<Vec<S>> {
        items.iter().try_for_each(|&i| check_index("item", i, self.num_items))?;
        let h = self.hidden(user, input)?;
        let [_, _, _, dec, ob] = self.seg();
        Ok(items.iter().map(|&i| dot(self.row(dec, i), &h) + self.params[ob.offset + i]).collect())
    }

    fn logits_all(&self, user: usize, input: &UserInput<S>) -> Result<Vec<S>> {
        let h = self.hidden(user, input)?;
        let [_, _, _, dec, ob] = self.seg();
        Ok(self.params[dec.offset..dec.offset + dec.len()]
            .chunks_exact(self.dim)
            .zip(&self.params[ob.offset..ob.offset + ob.len()])
            .map(|(w, &c)| dot(w, &h) + c)
            .collect())
    }

    fn backward(&self, user: usize, input: &UserInput<S>, items: &[usize], dz: &[S]) -> Result<Gradient<S>> {
        if items.len() != dz.len() {
            return Err(Error::Precondition("backward: items and dz lengths differ".into()));
        }
        items.iter().try_for_each(|&i| check_index("item", i, self.num_items))?;
        let h = self.hidden(user, input)?;
        let [enc, nodes, hb, dec, ob] = self.seg();
        let d = self.dim;
        let mut grad = Gradient::new();

        let mut dh = vec![S::zero(); d];
        for (&i, &g) in items.iter().zip(dz) {
            let w = self.row(dec, i);
            let gd = grad.block_mut(dec.row(i).start, d);
            for k in 0..d {
                gd[k] = g * h[k];
                dh[k] += g * w[k];
            }
            grad.block_mut(ob.offset + i, 1)[0] = g;
        }
        let da: Vec<S> = dh.iter().zip(&h).map(|(&g, &hk)| g * hk * (S::one() - hk)).collect();
        grad.push(hb.offset, &da);
        grad.push(nodes.row(user).start, &da);
        let mut seen = std::collections::HashSet::with_capacity(input.entries.len());
        for &(j, w) in &input.entries {
            if !seen.insert(j) {
                return Err(Error::Precondition(format!("duplicate input item {j}")));
            }
            let ge = grad.block_mut(enc.row(j).start, d);
            for (o, &a) in ge.iter_mut().zip(&da) {
                *o = w * a;
            }
        }
        Ok(grad)
    }
}
