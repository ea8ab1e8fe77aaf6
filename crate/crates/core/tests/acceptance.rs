//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p agnostic-fl --test acceptance`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use agnostic_fl::client::{compute_client_stats, LocalSgdConfig};
use agnostic_fl::domain::{ClientDataset, DomainStats, MixtureWeights, Sample};
use agnostic_fl::harness::{self, ExperimentConfig};
use agnostic_fl::models::{ModelKind, ModelSpec};
use agnostic_fl::secagg::{self, PairwiseSeeds, DEFAULT_SCALE_BITS};
use agnostic_fl::server::{
    compute_scaling, lambda_update_eg, lambda_update_projected_sgd, project_simplex, Algorithm, AlgorithmConfig,
    Federation, LambdaUpdate, ScalingMode, SecAggConfig,
};
use agnostic_fl::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// 1. Toy min-max regression converges to the analytic optimum and the
///    weights concentrate on the extreme domains.
fn toy_regression() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::toy();
    ensure(cfg.task.p == 5 && cfg.task.num_clients == 50 && cfg.algorithm.rounds == 1000, || {
        "toy preset is not the 5-domain, 50-client, 1000-round setup".into()
    })?;
    ensure(cfg.task.centers == [-2.0, -1.0, 0.0, 1.0, 2.0], || "unexpected centers".into())?;
    ensure(
        cfg.algorithm.algorithm == Algorithm::Afa && cfg.algorithm.lambda_update == LambdaUpdate::Eg,
        || "toy preset is not AFA with EG".into(),
    )?;
    let out = harness::run_detailed(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let w = out.final_state.params().as_slice()[0];
    let oracle = out.oracle.ok_or("toy task returned no oracle")?;
    let lambda = out.final_state.lambda().as_slice().to_vec();
    let extremes = lambda[0] + lambda[4];
    let detail = format!("w={w:.5} (oracle {oracle}), lambda_0+lambda_4={extremes:.4}, {}", secs(elapsed));
    ensure(oracle == 0.0, || format!("oracle {oracle} != 0; {detail}"))?;
    ensure((w - oracle).abs() <= 0.05, || format!("|w - oracle| > 0.05; {detail}"))?;
    ensure(extremes >= 0.8, || format!("lambda_0+lambda_4 < 0.8; {detail}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("runtime >= 5s; {detail}"))?;
    Ok(detail)
}

/// Random population over `p` domains in which every domain is populated.
fn covering_population(rng: &mut ChaCha8Rng, spec: &ModelSpec, p: usize, clients: usize) -> Vec<ClientDataset> {
    let mut pop = common::random_population(rng, spec, p, clients, 8);
    for d in 0..p {
        let k = rng.random_range(0..clients);
        pop[k].samples.push(common::random_sample(rng, spec, d));
    }
    pop
}

/// 2. The beta-weighted average of client objectives equals the
///    lambda-weighted sum of domain losses.
fn identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kinds = [ModelKind::ScalarRegression, ModelKind::LinearRegression, ModelKind::Logistic];
    let mut worst = 0.0f64;
    let mut worst_unnormalized = 0.0f64;
    for instance in 0..100 {
        let spec = common::random_spec(&mut rng, kinds[instance % 3]);
        let p = rng.random_range(1..=5);
        let clients = rng.random_range(1..=10);
        // first 50 instances populate every domain; the rest may leave some empty
        let covering = instance < 50;
        let pop = if covering {
            covering_population(&mut rng, &spec, p, clients)
        } else {
            common::random_population(&mut rng, &spec, p, clients, 6)
        };
        let w = common::random_params(&mut rng, &spec, 1.5);
        let lambda = MixtureWeights::new(common::random_simplex(&mut rng, p)).map_err(|e| e.to_string())?;

        // library path: per-client stats, merged, averaged with the zero rule
        let mut total = DomainStats::zeros(p);
        for c in &pop {
            total = total.merge(&compute_client_stats(&spec, &w, c, p).map_err(|e| e.to_string())?).unwrap();
        }
        let losses = total.average_losses();
        let rhs: f64 = lambda.as_slice().iter().zip(&losses).map(|(l, x)| l * x).sum();

        // oracle path: alpha from raw counts, objectives from raw samples
        let (counts, _) = common::domain_losses(&spec, &w, &pop, p);
        let alpha: Vec<f64> = lambda
            .as_slice()
            .iter()
            .zip(&counts)
            .map(|(&l, &n)| if n == 0 { 0.0 } else { l / n as f64 })
            .collect();
        let mut weighted = 0.0;
        let mut beta_total = 0.0;
        for c in &pop {
            let (obj, beta) = common::client_objective(&spec, &w, &alpha, c);
            weighted += beta * obj;
            beta_total += beta;
        }
        let scale = rhs.abs().max(f64::MIN_POSITIVE);
        let unnormalized = (weighted - rhs).abs() / scale;
        worst_unnormalized = worst_unnormalized.max(unnormalized);
        ensure(unnormalized <= 1e-9, || {
            format!("instance {instance}: sum_k beta_k obj_k = {weighted}, sum_i lambda_i L_i = {rhs}")
        })?;
        if covering {
            let lhs = weighted / beta_total;
            let rel = (lhs - rhs).abs() / scale;
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || format!("instance {instance}: weighted average {lhs} vs {rhs}"))?;

            // the library's scaling and client weights agree with the oracle
            let n: Vec<f64> = total.counts.iter().map(|&c| c as f64).collect();
            let lib_alpha = compute_scaling(&lambda, &n).map_err(|e| e.to_string())?;
            for c in &pop {
                let (_, beta) = common::client_objective(&spec, &w, &alpha, c);
                let lib_beta = lib_alpha.weigh(&c.domain_counts(p));
                ensure((lib_beta - beta).abs() <= 1e-12 * beta.max(1e-300), || {
                    format!("instance {instance}: beta {lib_beta} vs oracle {beta}")
                })?;
            }
        }
    }
    Ok(format!(
        "50 covering instances max rel err {worst:.2e}; 50 with empty domains (unnormalized) max {worst_unnormalized:.2e}"
    ))
}

fn fed_config(algorithm: Algorithm, m: usize, rounds: u64, local: LocalSgdConfig) -> AlgorithmConfig {
    AlgorithmConfig {
        algorithm,
        lambda_update: LambdaUpdate::Eg,
        scaling_mode: ScalingMode::TwoPhaseExact,
        clients_per_round: m,
        rounds,
        lambda_lr: 0.3,
        window_len: 3,
        init_param: 0.0,
        parallel: false,
        local,
    }
}

/// 3. With one domain AFA reduces to federated averaging.
fn single_domain_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let local = LocalSgdConfig {
        epochs: 2,
        batch_size: 3,
        learning_rate: 0.2,
    };
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (trial, kind) in [ModelKind::Logistic, ModelKind::LinearRegression, ModelKind::ScalarRegression]
        .into_iter()
        .enumerate()
    {
        let spec = common::random_spec(&mut rng, kind);
        let pop = common::random_population(&mut rng, &spec, 1, 12, 9);
        let rounds = 15;
        let afa = Federation::new(spec, &pop, 1, fed_config(Algorithm::Afa, 4, rounds, local), SecAggConfig::default(), 77)
            .map_err(|e| e.to_string())?;
        let avg = Federation::new(spec, &pop, 1, fed_config(Algorithm::Fedavg, 4, rounds, local), SecAggConfig::default(), 77)
            .map_err(|e| e.to_string())?;
        let (mut sa, mut sf) = (afa.initial_state().unwrap(), avg.initial_state().unwrap());
        let (mut ra, mut rf) = (ChaCha8Rng::seed_from_u64(trial as u64), ChaCha8Rng::seed_from_u64(trial as u64));
        for t in 1..=rounds {
            let (na, reca) = afa.run_round(&sa, &mut ra).map_err(|e| e.to_string())?;
            let (nf, recf) = avg.run_fedavg_round(&sf, &mut rf).map_err(|e| e.to_string())?;
            ensure(reca.selected == recf.selected, || format!("round {t}: different cohorts"))?;
            let diff = na
                .params()
                .as_slice()
                .iter()
                .zip(nf.params().as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
            ensure(diff <= 1e-12, || format!("{kind:?} round {t}: max coordinate difference {diff:.3e}"))?;
            (sa, sf) = (na, nf);
        }
        cases += 1;
    }
    Ok(format!("{cases} models x 15 rounds, max coordinate difference {worst:.2e}"))
}

/// 4. Lambda updates stay on the simplex; EG ignores constant shifts;
///    projection is idempotent and matches the brute-force QP solution.
fn lambda_updates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let on_simplex = |l: &MixtureWeights| {
        let s: f64 = l.as_slice().iter().sum();
        (s - 1.0).abs() <= 1e-12 && l.as_slice().iter().all(|&x| x >= 0.0)
    };
    let mut shift_general = 0.0f64;
    let mut qp_worst = 0.0f64;
    let mut idem_worst = 0.0f64;
    let mut qp_cases = 0;
    for case in 0..10_000 {
        let p = rng.random_range(1..=8);
        let lambda = MixtureWeights::new(common::random_simplex(&mut rng, p)).map_err(|e| e.to_string())?;
        let scale = [1.0, 10.0, 1e3][case % 3];
        let losses: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..scale)).collect();
        let lr = rng.random_range(1e-3..10.0);

        let eg = lambda_update_eg(&lambda, &losses, lr).map_err(|e| e.to_string())?;
        let psgd = lambda_update_projected_sgd(&lambda, &losses, lr).map_err(|e| e.to_string())?;
        ensure(on_simplex(&eg), || format!("case {case}: EG off simplex {:?}", eg.as_slice()))?;
        ensure(on_simplex(&psgd), || format!("case {case}: projected SGD off simplex {:?}", psgd.as_slice()))?;

        // exact shift invariance on dyadic losses, where L + c is exact
        let dyadic: Vec<f64> = (0..p).map(|_| rng.random_range(0..80) as f64 / 8.0).collect();
        let c = rng.random_range(-50..=50) as f64;
        let shifted: Vec<f64> = dyadic.iter().map(|l| l + c).collect();
        let a = lambda_update_eg(&lambda, &dyadic, lr).unwrap();
        let b = lambda_update_eg(&lambda, &shifted, lr).unwrap();
        ensure(a.as_slice() == b.as_slice(), || {
            format!("case {case}: EG(L + {c}) = {:?} != EG(L) = {:?}", b.as_slice(), a.as_slice())
        })?;
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = losses.iter().map(|l| l + c).collect();
        let b = lambda_update_eg(&lambda, &shifted, lr).unwrap();
        let d = eg.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        shift_general = shift_general.max(d);

        let v: Vec<f64> = (0..p).map(|_| rng.random_range(-scale..scale)).collect();
        let proj = project_simplex(&v).map_err(|e| e.to_string())?;
        ensure(on_simplex(&proj), || format!("case {case}: projection off simplex"))?;
        let again = project_simplex(proj.as_slice()).unwrap();
        let d = proj.as_slice().iter().zip(again.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        idem_worst = idem_worst.max(d);
        ensure(d <= 1e-12, || format!("case {case}: projection not idempotent, moved by {d:.3e}"))?;
        if p <= 3 {
            let oracle = common::brute_force_simplex_projection(&v);
            let d = proj.as_slice().iter().zip(&oracle).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            qp_worst = qp_worst.max(d);
            qp_cases += 1;
            ensure(d <= 1e-8, || format!("case {case}: projection {:?} vs QP oracle {oracle:?}", proj.as_slice()))?;
        }
    }
    ensure(shift_general <= 1e-12, || format!("EG shift on general floats moved by {shift_general:.3e}"))?;
    Ok(format!(
        "10^4 inputs; dyadic shifts exact, general shifts <= {shift_general:.1e}; idempotence <= {idem_worst:.1e}; QP oracle ({qp_cases} cases) <= {qp_worst:.1e}"
    ))
}

/// 5. Analytic gradients match central finite differences.
fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut parts = Vec::new();
    for kind in [ModelKind::ScalarRegression, ModelKind::LinearRegression, ModelKind::Logistic] {
        let mut worst = 0.0f64;
        for instance in 0..200 {
            let spec = common::random_spec(&mut rng, kind);
            let w = common::random_params(&mut rng, &spec, 2.0);
            let samples: Vec<Sample> = (0..rng.random_range(1..=6)).map(|_| common::random_sample(&mut rng, &spec, 0)).collect();
            let batch: Vec<(&Sample, f64)> = samples.iter().map(|s| (s, rng.random_range(0.05..2.0))).collect();
            let g = spec.grad(&w, &batch).map_err(|e| e.to_string())?;
            let fd = common::fd_gradient(&spec, &w, &batch, 1e-5);
            let rel = common::relative_error(g.as_slice(), &fd);
            worst = worst.max(rel);
            ensure(rel <= 1e-5, || format!("{kind:?} instance {instance}: relative error {rel:.3e}"))?;
        }
        parts.push(format!("{kind:?} 200 max {worst:.1e}"));
    }
    Ok(parts.join(", "))
}

/// 6. Pairwise masks cancel, decoding error is bounded, counts are exact,
///    and the server can only recover sums of complete cohorts.
fn secure_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..200 {
        let n = rng.random_range(1..=12);
        let len = rng.random_range(1..=16);
        let seeds = PairwiseSeeds::generate(n, &mut rng);
        let mut total = vec![0u64; len];
        for i in 0..n {
            for (t, m) in total.iter_mut().zip(seeds.total_mask(i, len)) {
                *t = t.wrapping_add(m);
            }
            for j in 0..n {
                if i != j {
                    let pair: Vec<u64> = seeds.mask(i, j, len).iter().zip(seeds.mask(j, i, len)).map(|(a, b)| a.wrapping_add(b)).collect();
                    ensure(pair.iter().all(|&x| x == 0), || format!("trial {trial}: masks ({i},{j}) do not cancel"))?;
                }
            }
        }
        ensure(total.iter().all(|&x| x == 0), || format!("trial {trial}: total mask {total:?} != 0"))?;
    }

    let bound = 2.4e-5;
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = 50;
        let len = 32;
        let seeds = PairwiseSeeds::generate(n, &mut rng);
        let vectors: Vec<Vec<f64>> = (0..n).map(|_| (0..len).map(|_| rng.random_range(-100.0..100.0)).collect()).collect();
        let masked: Vec<_> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| secagg::mask_set(&seeds, i, v, DEFAULT_SCALE_BITS).unwrap())
            .collect();
        let sum = secagg::unmask_sum(&masked).map_err(|e| e.to_string())?;
        for (j, s) in sum.iter().enumerate() {
            let plain: f64 = vectors.iter().map(|v| v[j]).sum();
            let err = (s - plain).abs();
            worst = worst.max(err);
            ensure(err <= bound, || format!("trial {trial} coord {j}: error {err:.3e} > {bound:e}"))?;
        }

        let counts: Vec<Vec<u64>> = (0..n).map(|_| (0..len).map(|_| rng.random_range(0..1_000_000)).collect()).collect();
        let masked: Vec<_> = counts
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f: Vec<f64> = v.iter().map(|&c| c as f64).collect();
                secagg::mask_set(&seeds, i, &f, DEFAULT_SCALE_BITS).unwrap()
            })
            .collect();
        let got = secagg::unmask_sum_counts(&masked).map_err(|e| e.to_string())?;
        let want: Vec<u64> = (0..len).map(|j| counts.iter().map(|v| v[j]).sum()).collect();
        ensure(got == want, || format!("trial {trial}: count sums differ"))?;

        // a partial cohort, a single client, or a duplicate reveals nothing
        let partial = secagg::unmask_sum(&masked[..n - 1]);
        ensure(matches!(partial, Err(Error::Protocol(_))), || "partial cohort was unmasked".into())?;
        let single = secagg::unmask_sum(&masked[..1]);
        ensure(matches!(single, Err(Error::Protocol(_))), || "single client was unmasked".into())?;
        let mut dup = masked.clone();
        dup[1] = dup[0].clone();
        ensure(matches!(secagg::unmask_sum(&dup), Err(Error::Protocol(_))), || "duplicate accepted".into())?;
    }
    Ok(format!(
        "masks cancel in 200 cohorts; 50-vector sums max error {worst:.2e} <= {bound:e}; counts exact; partial/duplicate cohorts rejected; private fields checked by compile_fail doctest"
    ))
}

/// 7. The communication counter matches the closed form for every round,
///    degenerate ones included.
fn communication_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kinds = [ModelKind::ScalarRegression, ModelKind::LinearRegression, ModelKind::Logistic];
    for case in 0..150 {
        let spec = common::random_spec(&mut rng, kinds[case % 3]);
        let params = match spec.kind {
            ModelKind::ScalarRegression => 1,
            ModelKind::LinearRegression => spec.input_dim + 1,
            ModelKind::Logistic => spec.num_classes * (spec.input_dim + 1),
        } as u64;
        let p = rng.random_range(1..=4);
        let c = rng.random_range(1..=6);
        let rounds = rng.random_range(0..=6u64);
        let population = c + rng.random_range(0..=4);
        let pop = common::random_population(&mut rng, &spec, p, population, 6);
        let afa = rng.random_bool(0.5);
        let mut cfg = fed_config(if afa { Algorithm::Afa } else { Algorithm::Fedavg }, c, rounds, LocalSgdConfig::default());
        cfg.scaling_mode = if rng.random_bool(0.5) { ScalingMode::Windowed } else { ScalingMode::TwoPhaseExact };
        cfg.lambda_update = if rng.random_bool(0.5) { LambdaUpdate::Eg } else { LambdaUpdate::ProjectedSgd };
        let secagg_cfg = SecAggConfig {
            mask_params: rng.random_bool(0.5),
            scale_bits: DEFAULT_SCALE_BITS,
        };
        let fed = Federation::new(spec, &pop, p, cfg, secagg_cfg, case as u64).map_err(|e| e.to_string())?;
        let mut state = fed.initial_state().unwrap();
        let mut sampler = ChaCha8Rng::seed_from_u64(case as u64);
        for _ in 0..rounds {
            state = fed.run_round(&state, &mut sampler).map_err(|e| e.to_string())?.0;
        }
        let want = rounds * common::expected_comm_per_round(afa, c as u64, params, p as u64);
        ensure(state.comm_params_total() == want, || {
            format!(
                "case {case} (afa={afa}, c={c}, |W|={params}, p={p}, T={rounds}): counter {} != {want}",
                state.comm_params_total()
            )
        })?;
    }
    Ok("150 fuzzed (c, |W|, p, T, algorithm, scaling mode) combinations exact".into())
}

/// 8. On the skewed two-domain classification task AFA lowers the worst
///    domain loss and the gap between domains relative to FedAvg.
fn worst_domain_improvement() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for seed in 0..3 {
        let mut cfg = ExperimentConfig::classification();
        ensure(cfg.task.p == 2 && cfg.task.shares == [0.85, 0.15], || "classification preset changed".into())?;
        cfg.seed = seed;
        let rows = harness::compare(&cfg, &[Algorithm::Fedavg, Algorithm::Afa]).map_err(|e| e.to_string())?;
        let (fedavg, afa) = (&rows[0].eval, &rows[1].eval);
        let detail = format!(
            "seed {seed}: worst {:.4} vs {:.4}, gap {:.4} vs {:.4}",
            afa.worst_loss(),
            fedavg.worst_loss(),
            afa.loss_gap(),
            fedavg.loss_gap()
        );
        ensure(afa.worst_loss() <= fedavg.worst_loss(), || format!("AFA worst loss higher; {detail}"))?;
        ensure(afa.loss_gap() < fedavg.loss_gap(), || format!("AFA gap not smaller; {detail}"))?;
        parts.push(detail);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("runtime {} >= 2 min", secs(elapsed)))?;
    Ok(format!("AFA vs FedAvg {}; {}", parts.join("; "), secs(elapsed)))
}

fn run_files(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = cfg.clone();
    cfg.output.out_dir = dir.path().to_path_buf();
    let art = harness::run_to_disk(&cfg).map_err(|e| e.to_string())?;
    let mut paths = vec![art.metrics];
    paths.extend(art.plots.into_iter().flatten());
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            std::fs::read(&p).map(|b| (name, b)).map_err(|e| e.to_string())
        })
        .collect()
}

/// 9. Equal seeds give byte-identical outputs.
fn determinism() -> Outcome {
    let mut toy = ExperimentConfig::toy();
    toy.algorithm.rounds = 200;
    let mut toy_masked = toy.clone();
    toy_masked.secure_aggregation.mask_params = true;
    toy_masked.algorithm.scaling_mode = ScalingMode::Windowed;
    toy_masked.algorithm.lambda_update = LambdaUpdate::ProjectedSgd;
    let mut cls = ExperimentConfig::classification();
    cls.algorithm.rounds = 60;
    cls.seed = 9;
    let mut cls_fedavg = cls.clone();
    cls_fedavg.algorithm.algorithm = Algorithm::Fedavg;
    let mut checked = 0;
    for cfg in [toy, toy_masked, cls, cls_fedavg] {
        let a = run_files(&cfg)?;
        let b = run_files(&cfg)?;
        ensure(a == b, || format!("outputs differ for {:?}/{:?}", cfg.task.kind, cfg.algorithm.algorithm))?;
        let mut par = cfg.clone();
        par.algorithm.parallel = !cfg.algorithm.parallel;
        let c = run_files(&par)?;
        ensure(a == c, || "parallel and sequential client execution differ".into())?;
        checked += 1;
    }
    Ok(format!("{checked} configs: repeated runs and parallel/sequential runs byte-identical (CSV and SVG)"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("toy min-max regression", toy_regression),
        ("identity: beta-weighted client objectives = sum lambda_i L_i", identity),
        ("single-domain AFA reduces to FedAvg", single_domain_reduction),
        ("lambda updates: simplex, EG shift, projection vs QP", lambda_updates),
        ("gradient checks vs finite differences", gradient_checks),
        ("secure aggregation", secure_aggregation),
        ("communication accounting", communication_accounting),
        ("worst-domain improvement on skewed classification", worst_domain_improvement),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

