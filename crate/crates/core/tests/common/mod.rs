//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the code it is used to check beyond the loss of
//! a single sample.

#![allow(dead_code)]

use agnostic_fl::domain::{ClientDataset, ParamVector, Sample};
use agnostic_fl::models::{ModelKind, ModelSpec};
use rand::Rng;

/// Random model of any kind with small dimensions.
pub fn random_spec<R: Rng>(rng: &mut R, kind: ModelKind) -> ModelSpec {
    match kind {
        ModelKind::ScalarRegression => ModelSpec::scalar_regression(),
        ModelKind::LinearRegression => ModelSpec::linear_regression(rng.random_range(1..=4)),
        ModelKind::Logistic => ModelSpec::logistic(rng.random_range(1..=4), rng.random_range(2..=4)),
    }
}

pub fn random_params<R: Rng>(rng: &mut R, spec: &ModelSpec, scale: f64) -> ParamVector {
    ParamVector((0..spec.param_count()).map(|_| rng.random_range(-scale..scale)).collect())
}

pub fn random_sample<R: Rng>(rng: &mut R, spec: &ModelSpec, domain: usize) -> Sample {
    let features = (0..spec.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let label = match spec.kind {
        ModelKind::Logistic => rng.random_range(0..spec.num_classes) as f64,
        _ => rng.random_range(-3.0..3.0),
    };
    Sample::new(features, label, domain)
}

/// `clients` non-empty datasets with ids `0..clients` over `p` domains.
pub fn random_population<R: Rng>(
    rng: &mut R,
    spec: &ModelSpec,
    p: usize,
    clients: usize,
    max_samples: usize,
) -> Vec<ClientDataset> {
    (0..clients)
        .map(|k| {
            let n = rng.random_range(1..=max_samples);
            let samples = (0..n)
                .map(|_| {
                    let d = rng.random_range(0..p);
                    random_sample(rng, spec, d)
                })
                .collect();
            ClientDataset::new(k, samples)
        })
        .collect()
}

/// Random point on the simplex, occasionally with exact zeros.
pub fn random_simplex<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..p)
            .map(|_| if rng.random_bool(0.15) { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            return raw.into_iter().map(|x| x / total).collect();
        }
    }
}

/// `sum_j weight_j * loss(w, sample_j)` evaluated directly.
pub fn weighted_loss(spec: &ModelSpec, w: &ParamVector, batch: &[(&Sample, f64)]) -> f64 {
    batch.iter().map(|(s, c)| c * spec.loss(w, s).unwrap()).sum()
}

/// Central finite-difference gradient of [`weighted_loss`].
pub fn fd_gradient(spec: &ModelSpec, w: &ParamVector, batch: &[(&Sample, f64)], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus.0[j] += h;
            minus.0[j] -= h;
            (weighted_loss(spec, &plus, batch) - weighted_loss(spec, &minus, batch)) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 { 0.0 } else { norm(&diff) / scale }
}

/// Euclidean projection onto the simplex by enumerating every support set:
/// on support `S` the KKT point is `v_S - t` with `t = (sum v_S - 1)/|S|`;
/// keep the feasible candidate closest to `v`.
pub fn brute_force_simplex_projection(v: &[f64]) -> Vec<f64> {
    let p = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let t = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = vec![0.0; p];
        for &i in &support {
            x[i] = v[i] - t;
        }
        if x.iter().any(|&xi| xi < -1e-12) {
            continue;
        }
        let x: Vec<f64> = x.into_iter().map(|xi| xi.max(0.0)).collect();
        let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    best.expect("the full support is always feasible for some vertex").1
}

/// Client objective `sum_i alpha_i sum_{j in P_k, domain i} loss_j / beta_k`
/// and `beta_k`, straight from the samples.
pub fn client_objective(spec: &ModelSpec, w: &ParamVector, alpha: &[f64], data: &ClientDataset) -> (f64, f64) {
    let mut num = 0.0;
    let mut beta = 0.0;
    for s in &data.samples {
        num += alpha[s.domain] * spec.loss(w, s).unwrap();
        beta += alpha[s.domain];
    }
    (if beta == 0.0 { 0.0 } else { num / beta }, beta)
}

/// Average loss per domain over a whole population, 0 for empty domains.
pub fn domain_losses(spec: &ModelSpec, w: &ParamVector, population: &[ClientDataset], p: usize) -> (Vec<u64>, Vec<f64>) {
    let mut n = vec![0u64; p];
    let mut sum = vec![0.0; p];
    for s in population.iter().flat_map(|c| &c.samples) {
        n[s.domain] += 1;
        sum[s.domain] += spec.loss(w, s).unwrap();
    }
    let avg = sum.iter().zip(&n).map(|(&l, &c)| if c == 0 { 0.0 } else { l / c as f64 }).collect();
    (n, avg)
}

/// Parameters exchanged per round: every selected client downloads and
/// uploads the model; AFA adds counts and loss sums, each sent and echoed.
pub fn expected_comm_per_round(afa: bool, c: u64, params: u64, p: u64) -> u64 {
    2 * c * params + if afa { 4 * c * p } else { 0 }
}
