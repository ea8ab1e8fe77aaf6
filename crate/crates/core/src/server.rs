//! Server-side orchestration of federated rounds.
//!
//! A round of agnostic federated averaging (`Algorithm::Afa`):
//!
//! 1. sample `m` clients uniformly without replacement;
//! 2. obtain the cohort's per-domain counts `N` and summed losses at
//!    `w_{t-1}` through secure aggregation;
//! 3. form the scaling vector `alpha_i = lambda_i / N_i` (zero when
//!    `N_i = 0`), where `N` is this round's exact counts
//!    (`ScalingMode::TwoPhaseExact`) or the mean of a sliding window of
//!    previous rounds' counts (`ScalingMode::Windowed`);
//! 4. let every client run [`client_update`] with `alpha`;
//! 5. average the client models weighted by `beta^k`;
//! 6. move `lambda` towards the domains with the largest average loss, by
//!    exponentiated gradient or by a projected ascent step.
//!
//! `Algorithm::FedAvg` is the same round with `alpha = 1` (so `beta^k = n_k`)
//! and `lambda` frozen.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{client_update, compute_client_stats, ClientUpdate, ClientUpdateResult, LocalSgdConfig};
use crate::domain::{ClientDataset, DomainStats, MixtureWeights, ParamVector, ScalingVector};
use crate::error::{invalid, Error, Result};
use crate::models::ModelSpec;
use crate::secagg::{self, MaskedVector, PairwiseSeeds, DEFAULT_SCALE_BITS};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Fedavg,
    Afa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaUpdate {
    Eg,
    ProjectedSgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    TwoPhaseExact,
    Windowed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    pub lambda_update: LambdaUpdate,
    pub scaling_mode: ScalingMode,
    pub clients_per_round: usize,
    pub rounds: u64,
    pub lambda_lr: f64,
    pub window_len: usize,
    /// Every model parameter starts at this value.
    #[serde(default)]
    pub init_param: f64,
    /// Run the selected clients of a round on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
    pub local: LocalSgdConfig,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Afa,
            lambda_update: LambdaUpdate::Eg,
            scaling_mode: ScalingMode::TwoPhaseExact,
            clients_per_round: 10,
            rounds: 100,
            lambda_lr: 0.1,
            window_len: 10,
            init_param: 0.0,
            parallel: false,
            local: LocalSgdConfig::default(),
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients_per_round == 0 {
            return Err(invalid("clients_per_round must be positive"));
        }
        if !(self.lambda_lr > 0.0 && self.lambda_lr.is_finite()) {
            return Err(invalid(format!("lambda_lr must be positive, got {}", self.lambda_lr)));
        }
        if self.window_len == 0 {
            return Err(invalid("window_len must be at least 1"));
        }
        if !self.init_param.is_finite() {
            return Err(invalid("init_param must be finite"));
        }
        self.local.validate()
    }
}

/// Which client vectors go through masked aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecAggConfig {
    /// Also mask `beta^k * w^k` and `beta^k`. Domain statistics are always
    /// masked.
    #[serde(default)]
    pub mask_params: bool,
    #[serde(default = "default_scale_bits")]
    pub scale_bits: u32,
}

fn default_scale_bits() -> u32 {
    DEFAULT_SCALE_BITS
}

impl Default for SecAggConfig {
    fn default() -> Self {
        Self {
            mask_params: false,
            scale_bits: DEFAULT_SCALE_BITS,
        }
    }
}

/// Parameters exchanged per round: model download
/// and upload for every client, plus `4p` scalars per client for AFA.
pub fn comm_cost_per_round(algorithm: Algorithm, clients: u64, param_count: u64, p: u64) -> u64 {
    let base = 2 * clients * param_count;
    match algorithm {
        Algorithm::Fedavg => base,
        Algorithm::Afa => base + 4 * clients * p,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    round: u64,
    w: ParamVector,
    lambda: MixtureWeights,
    window: VecDeque<Vec<u64>>,
    window_len: usize,
    comm_params_total: u64,
}

impl ServerState {
    pub fn new(w: ParamVector, lambda: MixtureWeights, window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return Err(invalid("window_len must be at least 1"));
        }
        w.ensure_finite("initial parameters")?;
        Ok(Self {
            round: 0,
            w,
            lambda,
            window: VecDeque::with_capacity(window_len),
            window_len,
            comm_params_total: 0,
        })
    }

    /// Uniform `lambda`, constant parameters.
    pub fn initial(spec: &ModelSpec, p: usize, cfg: &AlgorithmConfig) -> Result<Self> {
        Self::new(
            ParamVector::filled(spec.param_count(), cfg.init_param),
            MixtureWeights::uniform(p)?,
            cfg.window_len,
        )
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn params(&self) -> &ParamVector {
        &self.w
    }

    pub fn lambda(&self) -> &MixtureWeights {
        &self.lambda
    }

    /// Count vectors of the last `window_len` rounds, oldest first.
    pub fn window(&self) -> impl Iterator<Item = &[u64]> {
        self.window.iter().map(Vec::as_slice)
    }

    pub fn window_occupancy(&self) -> usize {
        self.window.len()
    }

    pub fn comm_params_total(&self) -> u64 {
        self.comm_params_total
    }

    pub fn push_counts(&mut self, counts: Vec<u64>) {
        if self.window.len() == self.window_len {
            self.window.pop_front();
        }
        self.window.push_back(counts);
    }
}

/// `alpha_i = lambda_i / N_i`, or 0 where `N_i = 0`.
pub fn compute_scaling(lambda: &MixtureWeights, effective_counts: &[f64]) -> Result<ScalingVector> {
    if lambda.len() != effective_counts.len() {
        return Err(invalid(format!(
            "lambda has {} domains, counts have {}",
            lambda.len(),
            effective_counts.len()
        )));
    }
    ScalingVector::new(
        lambda
            .as_slice()
            .iter()
            .zip(effective_counts)
            .map(|(&l, &n)| if n == 0.0 { 0.0 } else { l / n })
            .collect(),
    )
}

/// Domain counts used to build `alpha`: this round's exact counts in
/// two-phase mode, the window mean in windowed mode (zeros while empty).
pub fn effective_counts(
    state: &ServerState,
    mode: ScalingMode,
    exact_counts: Option<&[u64]>,
) -> Result<Vec<f64>> {
    let p = state.lambda.len();
    match (mode, exact_counts) {
        (ScalingMode::TwoPhaseExact, Some(counts)) => {
            if counts.len() != p {
                return Err(invalid(format!("expected {p} counts, got {}", counts.len())));
            }
            Ok(counts.iter().map(|&n| n as f64).collect())
        }
        (ScalingMode::Windowed, None) => {
            let mut mean = vec![0.0; p];
            if state.window.is_empty() {
                return Ok(mean);
            }
            for counts in &state.window {
                for (m, &n) in mean.iter_mut().zip(counts) {
                    *m += n as f64;
                }
            }
            let r = state.window.len() as f64;
            Ok(mean.into_iter().map(|m| m / r).collect())
        }
        (ScalingMode::TwoPhaseExact, None) => {
            Err(invalid("two-phase scaling needs this round's exact counts"))
        }
        (ScalingMode::Windowed, Some(_)) => {
            Err(invalid("windowed scaling does not take exact counts"))
        }
    }
}

/// `sum_k beta_k w_k / sum_k beta_k`, reduced in ascending client id order.
/// `None` when the total weight is zero.
pub fn aggregate_params(results: &[ClientUpdateResult]) -> Option<ParamVector> {
    let mut ordered: Vec<&ClientUpdateResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.client_id);
    let total: f64 = ordered.iter().map(|r| r.beta).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut w = vec![0.0; ordered.first()?.new_params.len()];
    for r in ordered {
        let share = r.beta / total;
        for (acc, v) in w.iter_mut().zip(&r.new_params.0) {
            *acc += share * v;
        }
    }
    Some(ParamVector(w))
}

fn check_losses(lambda: &MixtureWeights, losses: &[f64], lr: f64) -> Result<()> {
    if losses.len() != lambda.len() {
        return Err(invalid(format!(
            "lambda has {} domains, losses have {}",
            lambda.len(),
            losses.len()
        )));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(invalid(format!("domain losses must be finite: {losses:?}")));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid(format!("lambda learning rate must be positive, got {lr}")));
    }
    Ok(())
}

/// Exponentiated gradient ascent: `lambda_i <- lambda_i exp(lr L_i)`,
/// renormalized.
///
/// The exponent is shifted by the largest loss among domains with positive
/// weight, so at least one factor is exactly 1 and nothing overflows.
pub fn lambda_update_eg(lambda: &MixtureWeights, losses: &[f64], lr: f64) -> Result<MixtureWeights> {
    check_losses(lambda, losses, lr)?;
    let w = lambda.as_slice();
    let shift = w
        .iter()
        .zip(losses)
        .filter(|(l, _)| **l > 0.0)
        .map(|(_, &loss)| loss)
        .fold(f64::NEG_INFINITY, f64::max);
    let updated: Vec<f64> = w
        .iter()
        .zip(losses)
        .map(|(&l, &loss)| if l > 0.0 { l * (lr * (loss - shift)).exp() } else { 0.0 })
        .collect();
    MixtureWeights::from_unnormalized(updated)
}

/// Projected ascent: `lambda + lr L`, then Euclidean projection onto the
/// simplex.
pub fn lambda_update_projected_sgd(
    lambda: &MixtureWeights,
    losses: &[f64],
    lr: f64,
) -> Result<MixtureWeights> {
    check_losses(lambda, losses, lr)?;
    let stepped: Vec<f64> = lambda
        .as_slice()
        .iter()
        .zip(losses)
        .map(|(l, loss)| l + lr * loss)
        .collect();
    project_simplex(&stepped)
}

/// Euclidean projection onto the probability simplex by sorting and
/// thresholding.
pub fn project_simplex(v: &[f64]) -> Result<MixtureWeights> {
    if v.is_empty() {
        return Err(invalid("cannot project an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("cannot project non-finite vector {v:?}")));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    let projected: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // the thresholded vector sums to 1 up to rounding; fold that in
    MixtureWeights::from_unnormalized(projected)
}

/// Protocol-level outcome of one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    /// Client ids selected this round, ascending.
    pub selected: Vec<usize>,
    /// Aggregated `N` of this round's cohort.
    pub counts: Vec<u64>,
    /// `L_i(w_{t-1})`, zero for domains absent from the round.
    pub per_domain_loss: Vec<f64>,
    /// The `lambda` used to build this round's `alpha`.
    pub lambda_before: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub worst_domain_loss: f64,
    pub comm_params_cumulative: u64,
    pub skipped_clients: usize,
    pub degenerate: bool,
}

/// Max of `losses` over domains with a positive count; 0 if none.
pub fn worst_domain_loss(losses: &[f64], counts: &[u64]) -> f64 {
    losses
        .iter()
        .zip(counts)
        .filter(|(_, &n)| n > 0)
        .map(|(&l, _)| l)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))))
        .unwrap_or(0.0)
}

/// What a client sends back after training. The server only ever sees these
/// through [`secagg::unmask_sum`] (statistics, and parameters when masked).
struct ClientUpload {
    client_id: usize,
    masked_counts: MaskedVector,
    masked_loss_sums: MaskedVector,
    params: UploadParams,
}

enum UploadParams {
    Plain(Option<ClientUpdateResult>),
    // [beta * w..., beta]
    Masked(MaskedVector),
}

/// A population of clients, a model, and the configuration that drives it.
#[derive(Clone, Debug)]
pub struct Federation<'a> {
    spec: ModelSpec,
    population: &'a [ClientDataset],
    num_domains: usize,
    cfg: AlgorithmConfig,
    secagg: SecAggConfig,
    seed: u64,
}

impl<'a> Federation<'a> {
    pub fn new(
        spec: ModelSpec,
        population: &'a [ClientDataset],
        num_domains: usize,
        cfg: AlgorithmConfig,
        secagg: SecAggConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if num_domains == 0 {
            return Err(invalid("at least one domain is required"));
        }
        if secagg.scale_bits > 52 {
            return Err(invalid(format!("fixed-point scale 2^{} is too fine", secagg.scale_bits)));
        }
        if population.len() < cfg.clients_per_round {
            return Err(invalid(format!(
                "population of {} clients is smaller than clients_per_round = {}",
                population.len(),
                cfg.clients_per_round
            )));
        }
        let mut ids: Vec<usize> = population.iter().map(|c| c.client_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("client ids must be unique"));
        }
        for client in population {
            if client.is_empty() {
                return Err(invalid(format!("client {} has no samples", client.client_id)));
            }
            client.validate(num_domains)?;
        }
        Ok(Self {
            spec,
            population,
            num_domains,
            cfg,
            secagg,
            seed,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.cfg
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn population(&self) -> &'a [ClientDataset] {
        self.population
    }

    pub fn initial_state(&self) -> Result<ServerState> {
        ServerState::initial(&self.spec, self.num_domains, &self.cfg)
    }

    /// Runs one round of the configured algorithm.
    pub fn run_round<R: Rng + ?Sized>(
        &self,
        state: &ServerState,
        rng: &mut R,
    ) -> Result<(ServerState, RoundRecord)> {
        match self.cfg.algorithm {
            Algorithm::Afa => self.round_impl(state, rng, Algorithm::Afa),
            Algorithm::Fedavg => self.run_fedavg_round(state, rng),
        }
    }

    /// Baseline round: clients minimize their plain average loss and the
    /// server weights client models by sample count.
    pub fn run_fedavg_round<R: Rng + ?Sized>(
        &self,
        state: &ServerState,
        rng: &mut R,
    ) -> Result<(ServerState, RoundRecord)> {
        self.round_impl(state, rng, Algorithm::Fedavg)
    }

    fn sample_clients<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<&'a ClientDataset> {
        let mut picked: Vec<&ClientDataset> =
            rand::seq::index::sample(rng, self.population.len(), self.cfg.clients_per_round)
                .into_iter()
                .map(|i| &self.population[i])
                .collect();
        picked.sort_by_key(|c| c.client_id);
        picked
    }

    fn map_clients<T, F>(&self, cohort: &[&ClientDataset], f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &ClientDataset) -> Result<T> + Sync + Send,
    {
        if self.cfg.parallel {
            cohort.par_iter().enumerate().map(|(i, c)| f(i, c)).collect()
        } else {
            cohort.iter().enumerate().map(|(i, c)| f(i, c)).collect()
        }
    }

    fn mask_stats(&self, seeds: &PairwiseSeeds, slot: usize, stats: &DomainStats) -> Result<(MaskedVector, MaskedVector)> {
        let counts: Vec<f64> = stats.counts.iter().map(|&n| n as f64).collect();
        Ok((
            secagg::mask_set(seeds, slot, &counts, self.secagg.scale_bits)?,
            secagg::mask_set(seeds, slot, &stats.loss_sums, self.secagg.scale_bits)?,
        ))
    }

    fn round_impl<R: Rng + ?Sized>(
        &self,
        state: &ServerState,
        rng: &mut R,
        algorithm: Algorithm,
    ) -> Result<(ServerState, RoundRecord)> {
        let t = state.round + 1;
        let p = self.num_domains;
        if state.lambda.len() != p {
            return Err(invalid(format!("server lambda has {} domains, task has {p}", state.lambda.len())));
        }
        let cohort = self.sample_clients(rng);
        let seeds = PairwiseSeeds::generate(cohort.len(), &mut seed::rng_for(self.seed, t, seed::MASKING_STREAM));
        let w_prev = &state.w;

        // Phase one (two-phase AFA only): statistics before any training.
        let exact_stats = if algorithm == Algorithm::Afa && self.cfg.scaling_mode == ScalingMode::TwoPhaseExact {
            let masked = self.map_clients(&cohort, |slot, client| {
                let stats = compute_client_stats(&self.spec, w_prev, client, p)?;
                self.mask_stats(&seeds, slot, &stats)
            })?;
            let (counts, losses): (Vec<_>, Vec<_>) = masked.into_iter().unzip();
            Some(secagg::aggregate_stats(&counts, &losses)?)
        } else {
            None
        };

        let alpha = match algorithm {
            Algorithm::Fedavg => ScalingVector::ones(p),
            Algorithm::Afa => {
                let n = effective_counts(
                    state,
                    self.cfg.scaling_mode,
                    exact_stats.as_ref().map(|s| s.counts.as_slice()),
                )?;
                compute_scaling(&state.lambda, &n)?
            }
        };

        let uploads = self.map_clients(&cohort, |slot, client| {
            let client_seed = seed::derive_seed(self.seed, t, client.client_id as u64);
            let update = client_update(&self.spec, w_prev, &alpha, client, &self.cfg.local, client_seed)?;
            let (masked_counts, masked_loss_sums) = self.mask_stats(&seeds, slot, update.stats())?;
            let params = if self.secagg.mask_params {
                let mut plain = match update.trained() {
                    Some(r) => r.new_params.0.iter().map(|v| r.beta * v).collect(),
                    None => vec![0.0; self.spec.param_count()],
                };
                plain.push(update.trained().map_or(0.0, |r| r.beta));
                UploadParams::Masked(secagg::mask_set(&seeds, slot, &plain, self.secagg.scale_bits)?)
            } else {
                UploadParams::Plain(match update {
                    ClientUpdate::Trained(r) => Some(r),
                    ClientUpdate::Skipped { .. } => None,
                })
            };
            Ok(ClientUpload {
                client_id: client.client_id,
                masked_counts,
                masked_loss_sums,
                params,
            })
        })?;

        let stats = match exact_stats {
            Some(s) => s,
            None => {
                let counts: Vec<MaskedVector> = uploads.iter().map(|u| u.masked_counts.clone()).collect();
                let losses: Vec<MaskedVector> = uploads.iter().map(|u| u.masked_loss_sums.clone()).collect();
                secagg::aggregate_stats(&counts, &losses)?
            }
        };

        let skipped_clients = uploads
            .iter()
            .filter(|u| matches!(u.params, UploadParams::Plain(None)))
            .count();
        let aggregated = self.aggregate_uploads(uploads)?;
        let losses = stats.average_losses();
        let degenerate = aggregated.is_none();

        let mut next = state.clone();
        next.round = t;
        if let Some(w) = aggregated {
            w.ensure_finite("aggregated model")?;
            next.w = w;
            if algorithm == Algorithm::Afa {
                next.lambda = match self.cfg.lambda_update {
                    LambdaUpdate::Eg => lambda_update_eg(&state.lambda, &losses, self.cfg.lambda_lr)?,
                    LambdaUpdate::ProjectedSgd => {
                        lambda_update_projected_sgd(&state.lambda, &losses, self.cfg.lambda_lr)?
                    }
                };
            }
        }
        next.push_counts(stats.counts.clone());
        next.comm_params_total += comm_cost_per_round(
            algorithm,
            cohort.len() as u64,
            self.spec.param_count() as u64,
            p as u64,
        );

        let record = RoundRecord {
            round: t,
            selected: cohort.iter().map(|c| c.client_id).collect(),
            worst_domain_loss: worst_domain_loss(&losses, &stats.counts),
            counts: stats.counts,
            per_domain_loss: losses,
            lambda_before: state.lambda.as_slice().to_vec(),
            lambda: next.lambda.as_slice().to_vec(),
            alpha: alpha.as_slice().to_vec(),
            comm_params_cumulative: next.comm_params_total,
            skipped_clients,
            degenerate,
        };
        Ok((next, record))
    }

    fn aggregate_uploads(&self, uploads: Vec<ClientUpload>) -> Result<Option<ParamVector>> {
        debug_assert!(uploads.windows(2).all(|w| w[0].client_id < w[1].client_id));
        if self.secagg.mask_params {
            let masked: Vec<MaskedVector> = uploads
                .into_iter()
                .map(|u| match u.params {
                    UploadParams::Masked(m) => Ok(m),
                    UploadParams::Plain(_) => Err(Error::Protocol("mixed parameter upload modes".into())),
                })
                .collect::<Result<_>>()?;
            let mut sums = secagg::unmask_sum(&masked)?;
            let total = sums.pop().unwrap_or(0.0);
            if !(total > 0.0) {
                return Ok(None);
            }
            Ok(Some(ParamVector(sums.into_iter().map(|s| s / total).collect())))
        } else {
            let trained: Vec<ClientUpdateResult> = uploads
                .into_iter()
                .filter_map(|u| match u.params {
                    UploadParams::Plain(r) => r,
                    UploadParams::Masked(_) => None,
                })
                .collect();
            Ok(aggregate_params(&trained))
        }
    }
}
