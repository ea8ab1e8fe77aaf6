//! Simulated secure aggregation by pairwise additive masking.
//!
//! Every pair of participants `(i, j)` shares a seed. Participant `i` adds the
//! pseudo-random stream of that seed to its fixed-point encoded vector when
//! `i < j` and subtracts it when `i > j`, all modulo 2^64. The masks cancel in
//! the sum over the whole cohort, so unmasking only ever yields the total.
//!
//! This reproduces what the server gets to observe. It is not a secure
//! protocol: seeds come from the simulation RNG, there is no key agreement,
//! and dropouts are not tolerated.
//!
//! A [`MaskedVector`] exposes no plaintext. The only way back to real numbers
//! is [`unmask_sum`] over the complete cohort:
//!
//! ```
//! use agnostic_fl::secagg::{mask_set, unmask_sum, PairwiseSeeds, DEFAULT_SCALE_BITS};
//! let seeds = PairwiseSeeds::from_matrix(&[vec![0, 7], vec![7, 0]]).unwrap();
//! let a = mask_set(&seeds, 0, &[1.0], DEFAULT_SCALE_BITS).unwrap();
//! let b = mask_set(&seeds, 1, &[2.0], DEFAULT_SCALE_BITS).unwrap();
//! assert_eq!(unmask_sum(&[a, b]).unwrap(), vec![3.0]);
//! ```
//!
//! ```compile_fail
//! use agnostic_fl::secagg::{mask_set, PairwiseSeeds, DEFAULT_SCALE_BITS};
//! let seeds = PairwiseSeeds::from_matrix(&[vec![0, 7], vec![7, 0]]).unwrap();
//! let masked = mask_set(&seeds, 0, &[1.0], DEFAULT_SCALE_BITS).unwrap();
//! let leaked: Vec<u64> = masked.values;
//! ```

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::DomainStats;
use crate::error::{invalid, Error, Result};

/// Default fixed-point scale `2^20`.
pub const DEFAULT_SCALE_BITS: u32 = 20;

const ENCODE_LIMIT: f64 = (1u64 << 62) as f64;

pub fn encode(value: f64, scale_bits: u32) -> Result<u64> {
    let scaled = value * (1u64 << scale_bits) as f64;
    if !scaled.is_finite() || scaled.abs() >= ENCODE_LIMIT {
        return Err(Error::Range(format!(
            "{value} does not fit fixed-point encoding at scale 2^{scale_bits}"
        )));
    }
    Ok((scaled.round() as i64) as u64)
}

pub fn decode(residue: u64, scale_bits: u32) -> f64 {
    (residue as i64) as f64 / (1u64 << scale_bits) as f64
}

/// Symmetric table of pairwise seeds for a cohort of `n` participants.
#[derive(Clone, Debug)]
pub struct PairwiseSeeds {
    n: usize,
    // row-major upper triangle, i < j
    seeds: Vec<u64>,
}

impl PairwiseSeeds {
    pub fn generate<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let seeds = (0..n * n.saturating_sub(1) / 2).map(|_| rng.next_u64()).collect();
        Self { n, seeds }
    }

    /// Builds from a full matrix, which must be symmetric off the diagonal.
    pub fn from_matrix(matrix: &[Vec<u64>]) -> Result<Self> {
        let n = matrix.len();
        if matrix.iter().any(|row| row.len() != n) {
            return Err(invalid("seed matrix must be square"));
        }
        let mut seeds = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                if matrix[i][j] != matrix[j][i] {
                    return Err(invalid(format!("seed matrix not symmetric at ({i}, {j})")));
                }
                seeds.push(matrix[i][j]);
            }
        }
        Ok(Self { n, seeds })
    }

    pub fn cohort_size(&self) -> usize {
        self.n
    }

    fn seed(&self, i: usize, j: usize) -> u64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // offset of row a in the packed upper triangle
        let row = a * (2 * self.n - a - 1) / 2;
        self.seeds[row + (b - a - 1)]
    }

    /// Mask that participant `i` applies for its pair with `j`; satisfies
    /// `mask(i, j) + mask(j, i) = 0 mod 2^64`.
    pub fn mask(&self, i: usize, j: usize, len: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed(i, j));
        (0..len)
            .map(|_| {
                let r = rng.next_u64();
                if i < j {
                    r
                } else {
                    r.wrapping_neg()
                }
            })
            .collect()
    }

    /// `sum_{j != i} mask(i, j)`.
    pub fn total_mask(&self, i: usize, len: usize) -> Vec<u64> {
        let mut total = vec![0u64; len];
        for j in (0..self.n).filter(|&j| j != i) {
            for (t, m) in total.iter_mut().zip(self.mask(i, j, len)) {
                *t = t.wrapping_add(m);
            }
        }
        total
    }
}

/// A fixed-point vector hidden behind pairwise masks.
#[derive(Clone, Debug)]
pub struct MaskedVector {
    client: usize,
    cohort: usize,
    scale_bits: u32,
    values: Vec<u64>,
}

impl MaskedVector {
    pub fn participant(&self) -> usize {
        self.client
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `encode(plain) + sum_{j != client} mask(client, j)` modulo 2^64.
pub fn mask_set(
    seeds: &PairwiseSeeds,
    client: usize,
    plain: &[f64],
    scale_bits: u32,
) -> Result<MaskedVector> {
    if client >= seeds.cohort_size() {
        return Err(invalid(format!(
            "participant {client} outside cohort of {}",
            seeds.cohort_size()
        )));
    }
    if scale_bits > 52 {
        return Err(invalid(format!("scale 2^{scale_bits} is too fine")));
    }
    let mask = seeds.total_mask(client, plain.len());
    let values = plain
        .iter()
        .zip(mask)
        .map(|(&x, m)| Ok(encode(x, scale_bits)?.wrapping_add(m)))
        .collect::<Result<Vec<u64>>>()?;
    Ok(MaskedVector {
        client,
        cohort: seeds.cohort_size(),
        scale_bits,
        values,
    })
}

fn modular_sum(masked: &[MaskedVector]) -> Result<(Vec<u64>, u32)> {
    let first = masked
        .first()
        .ok_or_else(|| Error::Protocol("no masked inputs to aggregate".into()))?;
    let cohort = first.cohort;
    if masked.len() != cohort {
        return Err(Error::Protocol(format!(
            "expected {cohort} participants, received {}",
            masked.len()
        )));
    }
    let mut seen = vec![false; cohort];
    let mut total = vec![0u64; first.len()];
    for m in masked {
        if m.cohort != cohort || m.scale_bits != first.scale_bits || m.len() != first.len() {
            return Err(Error::Protocol(
                "masked inputs disagree on cohort, scale or length".into(),
            ));
        }
        if std::mem::replace(&mut seen[m.client], true) {
            return Err(Error::Protocol(format!("participant {} sent twice", m.client)));
        }
        for (t, v) in total.iter_mut().zip(&m.values) {
            *t = t.wrapping_add(*v);
        }
    }
    Ok((total, first.scale_bits))
}

/// Sum of the plaintexts of a complete cohort. The error per coordinate is at
/// most `n / (2 * 2^scale_bits)`.
pub fn unmask_sum(masked: &[MaskedVector]) -> Result<Vec<f64>> {
    let (total, scale_bits) = modular_sum(masked)?;
    Ok(total.into_iter().map(|r| decode(r, scale_bits)).collect())
}

/// Like [`unmask_sum`] for vectors of integers, which are exact.
pub fn unmask_sum_counts(masked: &[MaskedVector]) -> Result<Vec<u64>> {
    let (total, scale_bits) = modular_sum(masked)?;
    total
        .into_iter()
        .map(|r| {
            let v = r as i64;
            if v < 0 || v & ((1i64 << scale_bits) - 1) != 0 {
                return Err(Error::Protocol(format!(
                    "aggregated count residue {v} is not a non-negative integer"
                )));
            }
            Ok((v >> scale_bits) as u64)
        })
        .collect()
}

/// Server-side view of the per-domain statistics of a round: only the
/// aggregate over the cohort.
pub fn aggregate_stats(counts: &[MaskedVector], loss_sums: &[MaskedVector]) -> Result<DomainStats> {
    let counts = unmask_sum_counts(counts)?;
    let mut loss_sums = unmask_sum(loss_sums)?;
    // decoding noise may leave residue on domains nobody populated
    for (l, n) in loss_sums.iter_mut().zip(&counts) {
        if *n == 0 {
            *l = 0.0;
        }
    }
    DomainStats::new(counts, loss_sums)
}
