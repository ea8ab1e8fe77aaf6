//! Synthetic federated tasks.
//!
//! Two generators:
//!
//! * **Toy regression.** Every domain is a cloud of points on the real line
//!   around a center `c_i`; the model is a single scalar and the per-sample
//!   loss is the squared distance. All domains use the same offsets around
//!   their centers, so every domain has identical spread and the minimizer of
//!   the worst average per-sample loss is the minimizer of
//!   `max_i (c_i - w)^2`, i.e. `(min_i c_i + max_i c_i) / 2`.
//! * **Synthetic classification.** `p` Gaussian-mixture domains over `R^d`.
//!   Class `k` of domain `i` is centered at radius `margin_i` in direction
//!   `2 pi k / K + i * rotation` of the first two coordinates. Smaller margins
//!   make a domain harder and the rotation makes domains disagree on the best
//!   decision boundary.
//!
//! Clients are either single-domain (client partition) or draw each sample's
//! domain from a mixture (data partition).

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{ClientDataset, Sample};
use crate::error::{invalid, Error, Result};
use crate::models::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ToyRegression,
    SyntheticClassification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    /// Each client holds data from exactly one domain.
    ClientPartition,
    /// A client's data may span several domains.
    DataPartition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SamplesPerClient {
    Fixed(usize),
    /// Inclusive `[min, max]`, drawn uniformly per client.
    Range([usize; 2]),
}

impl SamplesPerClient {
    fn bounds(self) -> (usize, usize) {
        match self {
            SamplesPerClient::Fixed(n) => (n, n),
            SamplesPerClient::Range([a, b]) => (a, b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// Number of domains.
    pub p: usize,
    pub num_clients: usize,
    pub partition: Partition,
    /// Data seed; when absent the experiment seed is used.
    #[serde(default)]
    pub seed: Option<u64>,

    // toy regression
    #[serde(default)]
    pub centers: Vec<f64>,
    #[serde(default = "default_points_per_domain")]
    pub points_per_domain: usize,
    /// Largest offset of a point from its domain center.
    #[serde(default = "default_spread")]
    pub spread: f64,

    // synthetic classification
    #[serde(default = "default_samples_per_client")]
    pub samples_per_client: SamplesPerClient,
    /// Per-sample domain distribution under data partition (defaults to
    /// `shares`).
    #[serde(default)]
    pub mixing: Option<Vec<f64>>,
    #[serde(default)]
    pub margins: Vec<f64>,
    /// Fraction of clients per domain under client partition.
    #[serde(default)]
    pub shares: Vec<f64>,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// Angle in radians between the class layouts of consecutive domains.
    #[serde(default)]
    pub rotation: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

fn default_points_per_domain() -> usize {
    100
}
fn default_spread() -> f64 {
    0.1
}
fn default_samples_per_client() -> SamplesPerClient {
    SamplesPerClient::Fixed(50)
}
fn default_input_dim() -> usize {
    2
}
fn default_num_classes() -> usize {
    2
}
fn default_noise_std() -> f64 {
    1.0
}

impl TaskConfig {
    /// Five domains centered at -2..=2, 100 points each, dealt to 50
    /// clients at random.
    pub fn toy_regression() -> Self {
        Self {
            kind: TaskKind::ToyRegression,
            p: 5,
            num_clients: 50,
            partition: Partition::DataPartition,
            seed: None,
            centers: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            points_per_domain: default_points_per_domain(),
            spread: default_spread(),
            samples_per_client: default_samples_per_client(),
            mixing: None,
            margins: Vec::new(),
            shares: Vec::new(),
            input_dim: 0,
            num_classes: 0,
            rotation: 0.0,
            noise_std: 0.0,
        }
    }

    /// Two domains, the minority one harder and rotated, single-domain
    /// clients.
    pub fn synthetic_classification() -> Self {
        Self {
            kind: TaskKind::SyntheticClassification,
            p: 2,
            num_clients: 100,
            partition: Partition::ClientPartition,
            seed: None,
            centers: Vec::new(),
            points_per_domain: default_points_per_domain(),
            spread: default_spread(),
            samples_per_client: SamplesPerClient::Range([20, 60]),
            mixing: None,
            margins: vec![2.0, 0.5],
            shares: vec![0.85, 0.15],
            input_dim: 2,
            num_classes: 2,
            rotation: std::f64::consts::FRAC_PI_2,
            noise_std: 1.0,
        }
    }

    pub fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self.kind {
            TaskKind::ToyRegression => ModelSpec::scalar_regression(),
            TaskKind::SyntheticClassification => ModelSpec::logistic(self.input_dim, self.num_classes),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(invalid("task needs at least one domain"));
        }
        if self.num_clients == 0 {
            return Err(invalid("task needs at least one client"));
        }
        if self.partition == Partition::ClientPartition && self.num_clients < self.p {
            return Err(invalid(format!(
                "client partition needs at least one client per domain ({} clients, {} domains)",
                self.num_clients, self.p
            )));
        }
        match self.kind {
            TaskKind::ToyRegression => {
                if self.centers.len() != self.p {
                    return Err(invalid(format!("{} centers for {} domains", self.centers.len(), self.p)));
                }
                if self.centers.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("centers must be finite"));
                }
                if !(self.spread >= 0.0 && self.spread.is_finite()) {
                    return Err(invalid("spread must be finite and non-negative"));
                }
                if self.points_per_domain == 0 {
                    return Err(invalid("points_per_domain must be positive"));
                }
                if self.mixing.is_some() {
                    return Err(invalid("toy regression deals points uniformly; mixing is not supported"));
                }
                let per_domain_clients = match self.partition {
                    Partition::ClientPartition => self.num_clients.div_ceil(self.p),
                    Partition::DataPartition => self.num_clients,
                };
                let available = match self.partition {
                    Partition::ClientPartition => self.points_per_domain,
                    Partition::DataPartition => self.points_per_domain * self.p,
                };
                if per_domain_clients > available {
                    return Err(invalid(format!(
                        "not enough points ({available}) to give each of {per_domain_clients} clients one"
                    )));
                }
            }
            TaskKind::SyntheticClassification => {
                if self.input_dim < 2 {
                    return Err(invalid("classification needs input_dim >= 2"));
                }
                if self.num_classes < 2 {
                    return Err(invalid("classification needs at least two classes"));
                }
                if self.margins.len() != self.p || self.margins.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    return Err(invalid(format!("need {} non-negative margins", self.p)));
                }
                check_distribution("shares", &self.shares, self.p)?;
                if let Some(mixing) = &self.mixing {
                    check_distribution("mixing", mixing, self.p)?;
                }
                if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
                    return Err(invalid("noise_std must be positive"));
                }
                if !self.rotation.is_finite() {
                    return Err(invalid("rotation must be finite"));
                }
                let (lo, hi) = self.samples_per_client.bounds();
                if lo == 0 || lo > hi {
                    return Err(invalid(format!("invalid samples_per_client range [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }
}

fn check_distribution(name: &str, v: &[f64], p: usize) -> Result<()> {
    if v.len() != p {
        return Err(invalid(format!("{name} must have {p} entries")));
    }
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(v.iter().sum::<f64>() > 0.0) {
        return Err(invalid(format!("{name} must be non-negative with positive total")));
    }
    Ok(())
}

/// Minimizer of `max_i (c_i - w)^2` on the real line.
pub fn toy_oracle(centers: &[f64]) -> f64 {
    let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo + hi) / 2.0
}

/// Offsets shared by every toy domain: `+-spread * j / h` for `j = 1..=h`,
/// plus 0 when the count is odd.
fn symmetric_offsets(m: usize, spread: f64) -> Vec<f64> {
    let half = m / 2;
    let mut offsets = Vec::with_capacity(m);
    if m % 2 == 1 {
        offsets.push(0.0);
    }
    for j in 1..=half {
        let d = spread * j as f64 / half as f64;
        offsets.push(-d);
        offsets.push(d);
    }
    offsets
}

/// Deals `items` (already shuffled) round-robin to `ids`.
fn deal<T>(items: Vec<T>, n: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = (0..n).map(|_| Vec::new()).collect();
    for (j, item) in items.into_iter().enumerate() {
        out[j % n].push(item);
    }
    out
}

/// Toy min-max regression population and its analytic solution.
pub fn gen_toy_regression(cfg: &TaskConfig) -> Result<(Vec<ClientDataset>, f64)> {
    if cfg.kind != TaskKind::ToyRegression {
        return Err(invalid("task kind is not toy-regression"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed_or(0));
    let offsets = symmetric_offsets(cfg.points_per_domain, cfg.spread);
    let domain_points = |i: usize| -> Vec<Sample> {
        offsets
            .iter()
            .map(|o| Sample::new(Vec::new(), cfg.centers[i] + o, i))
            .collect()
    };

    let clients: Vec<Vec<Sample>> = match cfg.partition {
        Partition::DataPartition => {
            let mut all: Vec<Sample> = (0..cfg.p).flat_map(domain_points).collect();
            all.shuffle(&mut rng);
            deal(all, cfg.num_clients)
        }
        Partition::ClientPartition => {
            let mut clients: Vec<Vec<Sample>> = vec![Vec::new(); cfg.num_clients];
            for i in 0..cfg.p {
                let ids: Vec<usize> = (i..cfg.num_clients).step_by(cfg.p).collect();
                let mut pts = domain_points(i);
                pts.shuffle(&mut rng);
                for (id, chunk) in ids.iter().zip(deal(pts, ids.len())) {
                    clients[*id] = chunk;
                }
            }
            clients
        }
    };
    let datasets = clients
        .into_iter()
        .enumerate()
        .map(|(k, s)| ClientDataset::new(k, s))
        .collect();
    Ok((datasets, toy_oracle(&cfg.centers)))
}

/// Number of clients per domain: largest-remainder rounding of
/// `shares * num_clients`, then at least one client for every domain.
pub fn clients_per_domain(shares: &[f64], num_clients: usize) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|s| s / total * num_clients as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = alloc.iter().sum();
    for &i in order.iter().take(num_clients - assigned) {
        alloc[i] += 1;
    }
    while let Some(empty) = alloc.iter().position(|&a| a == 0) {
        let largest = (0..alloc.len()).max_by_key(|&i| (alloc[i], usize::MAX - i)).unwrap();
        alloc[largest] -= 1;
        alloc[empty] += 1;
    }
    alloc
}

struct ClassLayout {
    centers: Vec<Vec<Vec<f64>>>,
    noise: Normal<f64>,
}

impl ClassLayout {
    fn new(cfg: &TaskConfig) -> Result<Self> {
        let k = cfg.num_classes as f64;
        let centers = (0..cfg.p)
            .map(|i| {
                (0..cfg.num_classes)
                    .map(|c| {
                        let phi = std::f64::consts::TAU * c as f64 / k + i as f64 * cfg.rotation;
                        let mut v = vec![0.0; cfg.input_dim];
                        v[0] = cfg.margins[i] * phi.cos();
                        v[1] = cfg.margins[i] * phi.sin();
                        v
                    })
                    .collect()
            })
            .collect();
        let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| invalid(e.to_string()))?;
        Ok(Self { centers, noise })
    }

    fn sample(&self, rng: &mut ChaCha8Rng, domain: usize) -> Sample {
        let classes = self.centers[domain].len();
        let label = rng.random_range(0..classes);
        let features = self.centers[domain][label]
            .iter()
            .map(|c| c + self.noise.sample(rng))
            .collect();
        Sample::new(features, label as f64, domain)
    }
}

/// Skewed multi-domain classification population.
pub fn gen_synthetic_classification(cfg: &TaskConfig) -> Result<Vec<ClientDataset>> {
    if cfg.kind != TaskKind::SyntheticClassification {
        return Err(invalid("task kind is not synthetic-classification"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed_or(0));
    let layout = ClassLayout::new(cfg)?;
    let (lo, hi) = cfg.samples_per_client.bounds();

    let client_domains: Vec<Option<usize>> = match cfg.partition {
        Partition::ClientPartition => clients_per_domain(&cfg.shares, cfg.num_clients)
            .into_iter()
            .enumerate()
            .flat_map(|(i, n)| std::iter::repeat_n(Some(i), n))
            .collect(),
        Partition::DataPartition => vec![None; cfg.num_clients],
    };
    let mixing = WeightedIndex::new(cfg.mixing.as_ref().unwrap_or(&cfg.shares))
        .map_err(|e| invalid(format!("mixing: {e}")))?;

    let datasets = client_domains
        .into_iter()
        .enumerate()
        .map(|(k, fixed)| {
            let n = rng.random_range(lo..=hi);
            let samples = (0..n)
                .map(|_| {
                    let d = fixed.unwrap_or_else(|| mixing.sample(&mut rng));
                    layout.sample(&mut rng, d)
                })
                .collect();
            ClientDataset::new(k, samples)
        })
        .collect();
    Ok(datasets)
}

/// Generates the population of any task kind.
pub fn generate(cfg: &TaskConfig) -> Result<Vec<ClientDataset>> {
    match cfg.kind {
        TaskKind::ToyRegression => gen_toy_regression(cfg).map(|(d, _)| d),
        TaskKind::SyntheticClassification => gen_synthetic_classification(cfg),
    }
}

/// Line-oriented text form: a `# client <id>` header per client, then one
/// `domain,label,feature,...` line per sample. Reals use the shortest
/// representation that parses back to the same value.
pub fn datasets_to_text(datasets: &[ClientDataset]) -> String {
    let mut out = String::new();
    for client in datasets {
        let _ = writeln!(out, "# client {}", client.client_id);
        for s in &client.samples {
            let _ = write!(out, "{},{:?}", s.domain, s.label);
            for f in &s.features {
                let _ = write!(out, ",{f:?}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn datasets_from_text(text: &str) -> std::result::Result<Vec<ClientDataset>, String> {
    let mut out: Vec<ClientDataset> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: &str| format!("line {}: {msg}", lineno + 1);
        if let Some(id) = line.strip_prefix("# client ") {
            let id = id.trim().parse().map_err(|_| at("bad client id"))?;
            out.push(ClientDataset::new(id, Vec::new()));
            continue;
        }
        let client = out.last_mut().ok_or_else(|| at("sample before any client header"))?;
        let mut fields = line.split(',');
        let domain = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| at("bad domain index"))?;
        let label = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| at("bad label"))?;
        let features = fields
            .map(|f| f.trim().parse::<f64>().map_err(|_| at("bad feature")))
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        client.samples.push(Sample::new(features, label, domain));
    }
    Ok(out)
}

pub fn write_datasets(path: &Path, datasets: &[ClientDataset]) -> Result<()> {
    std::fs::write(path, datasets_to_text(datasets)).map_err(|e| Error::io(path, e))
}

pub fn read_datasets(path: &Path) -> Result<Vec<ClientDataset>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    datasets_from_text(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}
