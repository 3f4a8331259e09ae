//! Acceptance criteria 1–9. Runs as a plain binary so every criterion prints
//! exactly one `PASS`/`FAIL` line; the process fails if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scorefeat::pipeline::{self, ExperimentConfig, LabelSpec, Link, MomentMode};
use scorefeat::poly::PolyFunction;
use scorefeat::quadrature::GaussHermite;
use scorefeat::score::{self, selftaught_refit_weights};
use scorefeat::spectral::{self, DecompConfig};
use scorefeat::stein::{self, LabeledDataset};
use scorefeat::tensor::{io, DenseTensor};
use scorefeat::{Model, ModelSpec, ScoreOrder};

type Outcome = Result<String, String>;

/// Name, check and runtime budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn order(m: usize) -> ScoreOrder {
    ScoreOrder::new(m).unwrap()
}

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn gmm_d2k3() -> RefMixture {
    RefMixture {
        weights: vec![0.3, 0.3, 0.4],
        means: vec![vec![-1.5, 0.0], vec![1.0, 1.0], vec![0.5, -1.5]],
        vars: vec![vec![1.0, 1.0], vec![0.5, 0.8], vec![1.2, 0.7]],
    }
}

fn build(json: &str) -> Model {
    ModelSpec::from_json(json).unwrap().build().unwrap()
}

/// Largest `|estimate − oracle| / SE` over all entries.
fn z_max(est: &stein::MomentEstimate<f64>, oracle: &[f64]) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for ((&a, &b), &se) in est.value.data().iter().zip(oracle).zip(est.std_error.data()) {
        let gap = (a - b).abs();
        let z = if se > 0.0 {
            gap / se
        } else if gap <= 1e-12 {
            0.0
        } else {
            return Err(format!("entry with zero standard error misses oracle by {gap:e}"));
        };
        worst = worst.max(z);
    }
    Ok(worst)
}

fn criterion_1() -> Outcome {
    const N: usize = 200_000;
    let cases = [
        ("standard gaussian d=5", RefMixture::standard(5), r#"{"type":"gaussian","dim":5}"#.to_string()),
        ("gmm d=2 k=3", gmm_d2k3(), gmm_d2k3().model_json()),
    ];
    let mut worst = 0.0f64;
    for (ci, (name, mix, json)) in cases.iter().enumerate() {
        let model = build(json);
        let d = mix.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + ci as u64);
        let monos = random_polys(&mut rng, d, 5, 6, 3);
        let g = PolyFunction::from_spec(&spec_of(d, 5, &monos)).map_err(|e| e.to_string())?;
        let xs = model.sample(&mut ChaCha8Rng::seed_from_u64(7 + ci as u64), N).map_err(|e| e.to_string())?;
        let data = LabeledDataset::from_function(xs, &g).map_err(|e| e.to_string())?;
        for m in 1..=3 {
            let est = stein::cross_moment(&data, &model, order(m)).map_err(|e| e.to_string())?;
            let oracle = expected_derivative(&monos, 5, mix, m);
            let z = z_max(&est, &oracle)?;
            worst = worst.max(z);
            check(z <= 5.0, format!("{name}, m={m}: gap {z:.2} SE > 5"))?;
        }
    }
    Ok(format!("worst gap {worst:.2} SE over 2 models × m∈{{1,2,3}} × 5 G at N=2e5"))
}

fn criterion_2() -> Outcome {
    const N: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = 3;
    let monos = random_polys(&mut rng, d, 1, 8, 3);
    let g0 = PolyFunction::from_spec(&spec_of(d, 1, &monos)).map_err(|e| e.to_string())?;
    let std = RefMixture::standard(d);
    let mut worst = 0.0f64;
    for mu0 in [vec![0.0, 0.0, 0.0], vec![1.0, -1.0, 0.0]] {
        for m in 1..=2 {
            let r = stein::parametric_stein_residual(&mu0, &g0, order(m), N, 5).map_err(|e| e.to_string())?;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let oracle: Vec<f64> = expected_derivative(&monos, 1, &std, m).iter().map(|v| sign * v).collect();
            let z = z_max(&r.estimate, &oracle)?;
            worst = worst.max(z);
            check(z <= 5.0, format!("μ0={mu0:?}, m={m}: gap {z:.2} SE > 5"))?;
            if mu0.iter().all(|&v| v == 0.0) {
                let model = Model::standard_gaussian(d).map_err(|e| e.to_string())?;
                let np = stein::stein_residual(&model, &g0, order(m), N, 5).map_err(|e| e.to_string())?;
                let same_value = r
                    .estimate
                    .value
                    .data()
                    .iter()
                    .zip(np.estimate.value.data())
                    .all(|(a, b)| a.to_bits() == (sign * b).to_bits());
                let same_se = r.estimate.std_error.data() == np.estimate.std_error.data();
                check(
                    same_value && same_se && r.max_abs_gap.to_bits() == np.max_abs_gap.to_bits(),
                    format!("m={m}: parametric and non-parametric runs differ at μ0=0"),
                )?;
            }
        }
    }
    Ok(format!("worst gap {worst:.2} SE; μ0=0 runs bit-identical up to (−1)^m"))
}

fn criterion_3() -> Outcome {
    let cases = [
        ("standard gaussian d=3", RefMixture::standard(3), r#"{"type":"gaussian","dim":3}"#.to_string()),
        ("gmm d=2 k=3", gmm_d2k3(), gmm_d2k3().model_json()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (mut gap_re, mut gap_fd) = (0.0f64, 0.0f64);
    for (name, mix, json) in &cases {
        let model = build(json);
        for _ in 0..100 {
            let x: Vec<f64> = (0..mix.dim()).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
            for m in 1..=3 {
                let a = model.score(&x, order(m)).map_err(|e| e.to_string())?;
                let b = model.score_explicit(&x, order(m)).map_err(|e| e.to_string())?;
                let fd = score_by_differences(mix, &x, m, 0.01);
                let g = a.max_abs_diff(&b);
                let f = a
                    .data()
                    .iter()
                    .chain(b.data())
                    .zip(fd.iter().chain(&fd))
                    .map(|(s, r)| (s - r).abs())
                    .fold(0.0, f64::max);
                gap_re = gap_re.max(g);
                gap_fd = gap_fd.max(f);
                check(g <= 1e-10, format!("{name}, m={m}, x={x:?}: recursion vs explicit {g:e}"))?;
                check(f <= 1e-5, format!("{name}, m={m}, x={x:?}: finite-difference gap {f:e}"))?;
            }
        }
    }
    Ok(format!("recursion/explicit {gap_re:.1e}, finite differences {gap_fd:.1e}"))
}

fn permutation_delta(m: usize, idx: &[usize]) -> f64 {
    fn perms(m: usize) -> Vec<Vec<usize>> {
        if m == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(m - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, m - 1);
                out.push(q);
            }
        }
        out
    }
    let (i, j) = idx.split_at(m);
    perms(m)
        .iter()
        .filter(|s| (0..m).all(|a| i[a] == j[s[a]]))
        .count() as f64
}

fn criterion_4() -> Outcome {
    let rule = GaussHermite::new(40).map_err(|e| e.to_string())?;
    let mut worst_cross = 0.0f64;
    let mut worst_diag = 0.0f64;
    for d in 1..=3 {
        let nodes = rule.product_rule(&vec![0.0; d], &vec![1.0; d]).map_err(|e| e.to_string())?;
        for m in 1..=3 {
            for mp in 1..=3 {
                let len = d.pow((m + mp) as u32);
                let mut acc = vec![0.0; len];
                for (w, x) in &nodes {
                    let a = score::hermite(x, order(m));
                    let b = score::hermite(x, order(mp));
                    for (ia, &va) in a.data().iter().enumerate() {
                        for (ib, &vb) in b.data().iter().enumerate() {
                            acc[ia * b.len() + ib] += w * va * vb;
                        }
                    }
                }
                for (flat, &v) in acc.iter().enumerate() {
                    if m == mp {
                        let idx: Vec<usize> = (0..2 * m).map(|a| flat / d.pow((2 * m - 1 - a) as u32) % d).collect();
                        let gap = (v - permutation_delta(m, &idx)).abs();
                        worst_diag = worst_diag.max(gap);
                    } else {
                        worst_cross = worst_cross.max(v.abs());
                    }
                }
            }
        }
    }
    check(worst_cross <= 1e-8, format!("cross term {worst_cross:e} > 1e-8"))?;
    check(worst_diag <= 1e-8, format!("diagonal term off by {worst_diag:e} > 1e-8"))?;
    Ok(format!("cross {worst_cross:.1e}, diagonal {worst_diag:.1e} for d≤3, m,m'≤3"))
}

fn criterion_5() -> Outcome {
    let d = 8;
    let us = orthonormal(55, d, 4);
    let t = DenseTensor::new(vec![d; 3], rank_one_sum(&[6.0; 4], &us, 3)).map_err(|e| e.to_string())?;
    let cfg = DecompConfig::new(4).with_seed(5);
    check(cfg.inits == 50 && cfg.iters == 100 && cfg.nu == 0.5, "unexpected defaults".into())?;
    let r = spectral::decompose(&t, &cfg).map_err(|e| e.to_string())?;
    check(r.components.len() == 4, format!("{} components", r.components.len()))?;
    let matches = best_matches(&r.vectors(), &us);
    let err = matches.iter().map(|m| m.1).fold(0.0, f64::max);
    check(err <= 1e-8, format!("component error {err:e}"))?;
    let mut seen: Vec<usize> = matches.iter().map(|m| m.0).collect();
    seen.sort_unstable();
    seen.dedup();
    check(seen.len() == 4, "two planted components matched the same estimate".into())?;
    let werr = matches
        .iter()
        .zip(&us)
        .map(|(&(e, _), u)| (r.components[e].weight - 6.0 * canonical_sign(u)).abs())
        .fold(0.0, f64::max);
    check(werr <= 1e-8, format!("weight error against canonical 6·u^⊗3 {werr:e}"))?;
    let tn = t.frobenius_norm();
    check(r.residual_fro <= 1e-8 * tn, format!("residual {:e} > 1e-8·‖T‖", r.residual_fro))?;
    Ok(format!("component error {err:.1e}, weight error {werr:.1e}, residual/‖T‖ {:.1e}", r.residual_fro / tn))
}

fn criterion_6() -> Outcome {
    let (d, k) = (6, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let us = loop {
        let cand: Vec<Vec<f64>> = (0..k).map(|_| unit(&mut rng, d)).collect();
        let coherent = (0..k).any(|i| {
            (i + 1..k).any(|j| cand[i].iter().zip(&cand[j]).map(|(a, b)| a * b).sum::<f64>().abs() > 0.3)
        });
        if !coherent {
            break cand;
        }
    };
    let w = [1.0, 2.0, 1.5];
    let t = DenseTensor::new(vec![d; 3], rank_one_sum(&w, &us, 3)).map_err(|e| e.to_string())?;
    let m2 = DenseTensor::new(vec![d; 2], rank_one_sum(&w, &us, 2)).map_err(|e| e.to_string())?;
    let r = spectral::decompose_whitened(&t, &m2, &DecompConfig::new(k).with_seed(6)).map_err(|e| e.to_string())?;
    check(r.components.len() == k, format!("{} components", r.components.len()))?;
    let err = best_matches(&r.vectors(), &us).iter().map(|m| m.1).fold(0.0, f64::max);
    check(err <= 1e-6, format!("component error {err:e}"))?;
    Ok(format!("component error {err:.1e} (max coherence ≤ 0.3)"))
}

fn planted_config(n: usize, us: &[Vec<f64>]) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::Gaussian { dim: 8 },
        labels: LabelSpec::Planted {
            components: us.to_vec(),
            link: Link::Cube,
            noise_sd: 0.1,
        },
        n_unlabeled: 0,
        n_labeled: n,
        order: 3,
        decomp: Default::default(),
        seed: 77,
        moment_mode: MomentMode::Empirical,
        whiten: false,
        outputs: Default::default(),
        selftaught: None,
    }
}

fn criterion_7() -> Outcome {
    let us = orthonormal(7, 8, 4);
    let mut errs = Vec::new();
    for n in [1_000, 10_000, 100_000, 200_000] {
        let out = pipeline::run_pipeline(&planted_config(n, &us)).map_err(|e| e.to_string())?;
        let est = out.decomposition.vectors();
        let per = best_matches(&est, &us);
        errs.push(per.iter().map(|m| m.1).fold(0.0, f64::max));
    }
    let last = *errs.last().unwrap();
    check(last <= 0.1, format!("recovery error {last:.3} > 0.1 at N=2e5 (all: {errs:.3?})"))?;
    for w in errs.windows(2) {
        check(w[1] <= 2.0 * w[0], format!("recovery error grew more than 2× with N: {errs:.3?}"))?;
    }
    Ok(format!("max recovery error by N∈{{1e3,1e4,1e5,2e5}}: {errs:.3?}"))
}

fn criterion_8() -> Outcome {
    let source = RefMixture {
        weights: vec![0.5, 0.5],
        means: vec![vec![-2.5, 0.0], vec![2.5, 0.5]],
        vars: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
    };
    let target = RefMixture {
        weights: vec![0.3, 0.7],
        ..source.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let monos = random_polys(&mut rng, 2, 1, 6, 3);
    let cfg = ExperimentConfig {
        model: ModelSpec::from_json(&source.model_json()).unwrap(),
        labels: LabelSpec::Polynomial {
            g: spec_of(2, 1, &monos),
            noise_sd: 0.1,
        },
        n_unlabeled: 10_000,
        n_labeled: 10_000,
        order: 2,
        decomp: scorefeat::pipeline::DecompSettings {
            k: Some(2),
            ..Default::default()
        },
        seed: 8,
        moment_mode: MomentMode::Empirical,
        whiten: false,
        outputs: Default::default(),
        selftaught: Some(scorefeat::pipeline::SelftaughtSettings {
            target_model: ModelSpec::from_json(&target.model_json()).unwrap(),
            loglik_drop_threshold: 2.0,
        }),
    };
    let (xs, data) = pipeline::selftaught_synthesize(&cfg).map_err(|e| e.to_string())?;
    let out = pipeline::selftaught_pipeline(&xs, &data, &cfg).map_err(|e| e.to_string())?;
    let st = out.report.selftaught.as_ref().ok_or("no transfer summary")?;
    let werr = st
        .refit_weights
        .iter()
        .zip(&target.weights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(werr <= 0.02, format!("refit weights {:?} off by {werr:.4}", st.refit_weights))?;

    let components: scorefeat::Mixture = match build(&source.model_json()) {
        Model::GaussianMixture(g) => g,
        _ => unreachable!(),
    };
    let fit = selftaught_refit_weights(&components, data.inputs()).map_err(|e| e.to_string())?;
    check(fit.weights == st.refit_weights, "pipeline refit differs from direct refit".into())?;
    let refit = RefMixture {
        weights: fit.weights.clone(),
        ..source.clone()
    };
    let model = build(&refit.model_json());
    let mut worst = 0.0f64;
    for m in 1..=3 {
        let est = stein::cross_moment(&data, &model, order(m)).map_err(|e| e.to_string())?;
        let z = z_max(&est, &expected_derivative(&monos, 1, &refit, m))?;
        worst = worst.max(z);
        check(z <= 5.0, format!("post-transfer Stein check m={m}: {z:.2} SE > 5"))?;
    }
    Ok(format!("refit weights {:.4?} (error {werr:.4}); Stein gap {worst:.2} SE", st.refit_weights))
}

fn criterion_9() -> Outcome {
    let us = orthonormal(9, 8, 4);
    let mut cfg = planted_config(5_000, &us);
    cfg.n_unlabeled = 2_000;
    let run = |threads: usize| -> Result<(String, Vec<u8>), String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let out = pool.install(|| pipeline::run_pipeline(&cfg)).map_err(|e| e.to_string())?;
        let json = serde_json::to_string(&out.report).map_err(|e| e.to_string())?;
        Ok((json, io::encode(&out.moment)))
    };
    let first = run(1)?;
    check(run(1)? == first, "repeated single-thread run differs".into())?;
    check(run(4)? == first, "four-thread run differs from single-thread run".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = io::decode(&first.1).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.stn1"), dir.path().join("b.stn1"));
    io::save(&a, &t).map_err(|e| e.to_string())?;
    let back = io::load(&a).map_err(|e| e.to_string())?;
    io::save(&b, &back).map_err(|e| e.to_string())?;
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    check(ba == bb && ba == first.1, "tensor file changed across write→read→write".into())?;
    Ok(format!("3 pipeline runs bit-identical; {}-byte tensor file round-trips", ba.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("stein identity suite", criterion_1, 60),
        ("parametric stein suite", criterion_2, 20),
        ("recursion vs explicit scores", criterion_3, 10),
        ("hermite orthogonality", criterion_4, 10),
        ("exact tensor recovery", criterion_5, 30),
        ("whitened non-orthogonal recovery", criterion_6, 10),
        ("end-to-end empirical pipeline", criterion_7, 120),
        ("self-taught transfer", criterion_8, 30),
        ("determinism and round-trip", criterion_9, 5),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let label = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str()) || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(*budget);
        let verdict = match (&result, over) {
            (Ok(msg), false) => format!("PASS {label} ({name}): {msg} [{:.2} s]", elapsed.as_secs_f64()),
            (Ok(msg), true) => format!(
                "FAIL {label} ({name}): {msg} but took {:.2} s > {budget} s",
                elapsed.as_secs_f64()
            ),
            (Err(msg), _) => format!("FAIL {label} ({name}): {msg} [{:.2} s]", elapsed.as_secs_f64()),
        };
        if verdict.starts_with("FAIL") {
            failed += 1;
        }
        println!("{verdict}");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
