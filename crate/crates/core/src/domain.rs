//! Value types shared across the simulator: samples, client datasets,
//! mixture weights, scaling vectors, per-domain statistics and parameters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the simplex sum constraint for [`MixtureWeights`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// One labelled example tagged with the domain it was drawn from.
///
/// `label` holds the regression target, or the class index (as an exact
/// integer value) for classification tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
    pub domain: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: f64, domain: usize) -> Self {
        Self {
            features,
            label,
            domain,
        }
    }
}

/// The local data of one simulated client. Sample order is fixed at
/// generation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub samples: Vec<Sample>,
}

impl ClientDataset {
    pub fn new(client_id: usize, samples: Vec<Sample>) -> Self {
        Self { client_id, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples per domain, `n_{k,i}`.
    pub fn domain_counts(&self, num_domains: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_domains];
        for s in &self.samples {
            if s.domain < num_domains {
                counts[s.domain] += 1;
            }
        }
        counts
    }

    pub fn validate(&self, num_domains: usize) -> Result<()> {
        if let Some(s) = self.samples.iter().find(|s| s.domain >= num_domains) {
            return Err(invalid(format!(
                "client {} has a sample in domain {} but only {} domains exist",
                self.client_id, s.domain, num_domains
            )));
        }
        Ok(())
    }
}

/// A point on the probability simplex: the adversary's weights over domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn uniform(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(invalid("mixture over zero domains"));
        }
        Ok(Self(vec![1.0 / p as f64; p]))
    }

    /// Validates that `weights` lies on the simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("mixture over zero domains"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid(format!(
                "mixture weights must be finite and non-negative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid(format!("mixture weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Normalizes a non-negative vector with positive finite mass.
    pub(crate) fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Numeric(format!(
                "cannot normalize mixture with total mass {total}"
            )));
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self(weights))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(m: MixtureWeights) -> Self {
        m.0
    }
}

/// Per-domain sample reweighting `alpha_i = lambda_i / N_i`, zero where the
/// effective count is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingVector(Vec<f64>);

impl ScalingVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(invalid(format!(
                "scaling entries must be finite and non-negative: {alphas:?}"
            )));
        }
        Ok(Self(alphas))
    }

    pub fn ones(p: usize) -> Self {
        Self(vec![1.0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `sum_i alpha_i * counts[i]`, the client weight beta.
    pub fn weigh(&self, counts: &[u64]) -> f64 {
        self.0
            .iter()
            .zip(counts)
            .map(|(a, &n)| a * n as f64)
            .sum()
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|a| a * c).collect())
    }
}

/// Per-domain sample counts and summed (not averaged) losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub counts: Vec<u64>,
    pub loss_sums: Vec<f64>,
}

impl DomainStats {
    pub fn zeros(p: usize) -> Self {
        Self {
            counts: vec![0; p],
            loss_sums: vec![0.0; p],
        }
    }

    pub fn new(counts: Vec<u64>, loss_sums: Vec<f64>) -> Result<Self> {
        if counts.len() != loss_sums.len() {
            return Err(invalid(format!(
                "counts has {} domains but loss_sums has {}",
                counts.len(),
                loss_sums.len()
            )));
        }
        if let Some(i) = (0..counts.len()).find(|&i| counts[i] == 0 && loss_sums[i] != 0.0) {
            return Err(invalid(format!(
                "domain {i} has no samples but a non-zero loss sum"
            )));
        }
        Ok(Self { counts, loss_sums })
    }

    pub fn num_domains(&self) -> usize {
        self.counts.len()
    }

    /// Element-wise sum; associative and commutative.
    pub fn merge(&self, other: &DomainStats) -> Result<DomainStats> {
        if self.num_domains() != other.num_domains() {
            return Err(invalid(format!(
                "cannot merge stats over {} and {} domains",
                self.num_domains(),
                other.num_domains()
            )));
        }
        Ok(DomainStats {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            loss_sums: self
                .loss_sums
                .iter()
                .zip(&other.loss_sums)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Average loss per domain, with the zero rule for empty domains.
    pub fn average_losses(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.loss_sums)
            .map(|(&n, &l)| if n == 0 { 0.0 } else { l / n as f64 })
            .collect()
    }
}

/// Flat model parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} contains non-finite values")))
        }
    }
}
