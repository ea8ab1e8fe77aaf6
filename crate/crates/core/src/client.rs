//! Client-side work for one round: pre-training domain statistics and the
//! alpha-weighted local SGD update.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ClientDataset, DomainStats, ParamVector, Sample, ScalingVector};
use crate::error::{invalid, Error, Result};
use crate::models::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSgdConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl LocalSgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("local epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!(
                "local learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

impl Default for LocalSgdConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 10,
            learning_rate: 0.1,
        }
    }
}

/// Output of a client that trained this round.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdateResult {
    pub client_id: usize,
    pub new_params: ParamVector,
    /// `beta = sum_i alpha_i * n_{k,i}`.
    pub beta: f64,
    /// Counts and summed losses at the incoming parameters.
    pub stats: DomainStats,
}

/// A client either trains, or has zero aggregation weight and only reports
/// its statistics.
#[derive(Clone, Debug, PartialEq)]
pub enum ClientUpdate {
    Trained(ClientUpdateResult),
    Skipped { client_id: usize, stats: DomainStats },
}

impl ClientUpdate {
    pub fn client_id(&self) -> usize {
        match self {
            ClientUpdate::Trained(r) => r.client_id,
            ClientUpdate::Skipped { client_id, .. } => *client_id,
        }
    }

    pub fn stats(&self) -> &DomainStats {
        match self {
            ClientUpdate::Trained(r) => &r.stats,
            ClientUpdate::Skipped { stats, .. } => stats,
        }
    }

    pub fn trained(&self) -> Option<&ClientUpdateResult> {
        match self {
            ClientUpdate::Trained(r) => Some(r),
            ClientUpdate::Skipped { .. } => None,
        }
    }
}

/// Per-domain counts and summed losses of a client's data at `w`.
pub fn compute_client_stats(
    spec: &ModelSpec,
    w: &ParamVector,
    data: &ClientDataset,
    p: usize,
) -> Result<DomainStats> {
    data.validate(p)?;
    let mut stats = DomainStats::zeros(p);
    for s in &data.samples {
        stats.counts[s.domain] += 1;
        stats.loss_sums[s.domain] += spec.loss(w, s)?;
    }
    Ok(stats)
}

/// Runs `E` epochs of minibatch SGD on
/// `sum_i alpha_i sum_{j in domain i} loss_j / beta`.
///
/// Each epoch reshuffles with a stream seeded by `rng_seed`; the last short
/// minibatch is kept. Every step normalizes by the whole-client `beta`.
pub fn client_update(
    spec: &ModelSpec,
    w_in: &ParamVector,
    alpha: &ScalingVector,
    data: &ClientDataset,
    cfg: &LocalSgdConfig,
    rng_seed: u64,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    let p = alpha.len();
    let stats = compute_client_stats(spec, w_in, data, p)?;
    let beta = alpha.weigh(&stats.counts);
    if beta == 0.0 {
        return Ok(ClientUpdate::Skipped {
            client_id: data.client_id,
            stats,
        });
    }
    if !beta.is_finite() {
        return Err(Error::Numeric(format!("client weight beta = {beta}")));
    }

    let alphas = alpha.as_slice();
    let mut w = w_in.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut batch: Vec<(&Sample, f64)> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&j| {
                let s = &data.samples[j];
                (s, alphas[s.domain] / beta)
            }));
            let g = spec.grad(&w, &batch)?;
            for (wi, gi) in w.0.iter_mut().zip(&g.0) {
                *wi -= cfg.learning_rate * gi;
            }
            w.ensure_finite("local model")?;
        }
    }
    Ok(ClientUpdate::Trained(ClientUpdateResult {
        client_id: data.client_id,
        new_params: w,
        beta,
        stats,
    }))
}
