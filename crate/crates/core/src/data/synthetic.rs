//! Seeded block-preference generator used for desk-scale experiments.
//!
//! Users and items are split into `clusters` groups. Each user draws
//! `interactions_per_user` distinct items: with probability `1 - noise` from
//! their own group (popularity-weighted, `w_k = (k + 1)^-popularity_exponent`
//! for the k-th item of the group), otherwise uniformly from the other groups.
//! Timestamps are a random permutation, so the held-out item is a random one
//! of the user's interactions.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionDataset};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub clusters: usize,
    pub interactions_per_user: usize,
    pub noise: f64,
    pub popularity_exponent: f64,
    pub seed: u64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        BlockSpec {
            num_users: 200,
            num_items: 100,
            clusters: 4,
            interactions_per_user: 12,
            noise: 0.05,
            popularity_exponent: 0.7,
            seed: 1,
        }
    }
}

impl BlockSpec {
    pub fn with_seed(seed: u64) -> Self {
        BlockSpec { seed, ..Default::default() }
    }

    pub fn user_cluster(&self, user: usize) -> usize {
        user % self.clusters
    }

    pub fn item_cluster(&self, item: usize) -> usize {
        item * self.clusters / self.num_items
    }

    pub fn generate(&self) -> Result<InteractionDataset> {
        if self.clusters == 0 || self.clusters > self.num_items || self.num_users == 0 {
            return Err(Error::Config("block spec needs 1 <= clusters <= num_items and users > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("noise must lie in [0, 1]".into()));
        }
        let groups: Vec<Vec<usize>> = (0..self.clusters)
            .map(|c| (0..self.num_items).filter(|&i| self.item_cluster(i) == c).collect())
            .collect();
        if groups.iter().any(|g| g.len() < self.interactions_per_user) {
            return Err(Error::Config("interactions_per_user exceeds a cluster's item count".into()));
        }

        let mut rows = Vec::with_capacity(self.num_users * self.interactions_per_user);
        for u in 0..self.num_users {
            let mut rng = stream(self.seed, Stream::Synthetic, u as u64, 0);
            let c = self.user_cluster(u);
            let own = &groups[c];
            let mut weights: Vec<f64> =
                (0..own.len()).map(|k| ((k + 1) as f64).powf(-self.popularity_exponent)).collect();
            let mut chosen: Vec<usize> = Vec::with_capacity(self.interactions_per_user);
            while chosen.len() < self.interactions_per_user {
                let item = if self.clusters > 1 && rng.random::<f64>() < self.noise {
                    let other = rng.random_range(0..self.num_items - own.len());
                    (0..self.num_items).filter(|&i| self.item_cluster(i) != c).nth(other).unwrap()
                } else {
                    let total: f64 = weights.iter().sum();
                    let mut x = rng.random::<f64>() * total;
                    let mut k = 0;
                    while k + 1 < weights.len() && (x >= weights[k] || weights[k] == 0.0) {
                        x -= weights[k];
                        k += 1;
                    }
                    weights[k] = 0.0;
                    own[k]
                };
                if !chosen.contains(&item) {
                    chosen.push(item);
                }
            }
            let mut ts: Vec<i64> = (0..chosen.len() as i64).collect();
            ts.shuffle(&mut rng);
            rows.extend(chosen.into_iter().zip(ts).map(|(item, timestamp)| Interaction { user: u, item, timestamp }));
        }

        let users = (0..self.num_users).map(|u| format!("u{u}")).collect();
        let items = (0..self.num_items).map(|i| format!("i{i}")).collect();
        InteractionDataset::from_interactions(users, items, rows)
    }
}
