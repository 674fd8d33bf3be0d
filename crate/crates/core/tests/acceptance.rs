//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p fdg-core --test acceptance` (add `--release` for
//! timings representative of an optimized build).

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fdg_core::augment::AugmenterKind;
use fdg_core::io::{decode_bin, encode_bin, read_csv, write_csv};
use fdg_core::linalg::{
    center, logdet_regularized_gram_with, manifold_volume, regularized_volume, Side,
};
use fdg_core::selection::{greedy_select, kmeans, Direction, SweepConfig, SweepMode};
use fdg_core::synth::{gen_longtail, inverted_u_experiment, ExperimentConfig, SynthConfig};
use fdg_core::{
    fdg, fdg_lower_bound, fdg_sweep, imbalance_factor, partition_head_tail, EmbeddingSet,
    FdgError, SampleMatrix,
};
use rand::Rng;

use common::{columns, matrix, rel_close, rng};

type Outcome = Result<String, String>;

/// Name, time limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_base(r: &mut impl Rng, lo: usize, hi: usize) -> (usize, Vec<Vec<f64>>) {
    let d = r.random_range(lo..=hi);
    let n = r.random_range(lo..=hi);
    (d, common::random_columns(r, d, n))
}

fn principle_one() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (d, base) = random_base(&mut r, 2, 64);
        let res = fdg(&matrix(d, &base), &SampleMatrix::empty(d).unwrap())
            .map_err(|e| e.to_string())?;
        worst = worst.max(res.fdg.abs());
    }
    ensure(worst <= 1e-12, || format!("max |fdg| = {worst:e}"))?;
    Ok(format!("max |fdg| = {worst:e}"))
}

fn lower_bound() -> Outcome {
    let mut r = rng(2);
    let mut min_slack = f64::INFINITY;
    for _ in 0..1000 {
        let (d, base) = random_base(&mut r, 2, 64);
        let n_aug = r.random_range(1..=200);
        // the duplicated point is either an existing sample or a random location
        let point: Vec<f64> = if r.random_bool(0.5) {
            base[r.random_range(0..base.len())].clone()
        } else {
            (0..d).map(|_| r.random_range(-10.0..10.0)).collect()
        };
        let aug = vec![point; n_aug];
        let res = fdg(&matrix(d, &base), &matrix(d, &aug)).map_err(|e| e.to_string())?;
        let bound = -(n_aug as f64) / ((base.len() + n_aug) as f64);
        ensure(res.lower_bound == bound, || "bound mismatch".into())?;
        min_slack = min_slack.min(res.fdg - bound);
    }
    ensure(min_slack >= -1e-9, || format!("min slack {min_slack:e}"))?;
    Ok(format!("min fdg - bound = {min_slack:.3e}"))
}

fn concavity() -> Outcome {
    let mut r = rng(3);
    let mut min_slack = f64::INFINITY;
    for _ in 0..1000 {
        let (d, base) = random_base(&mut r, 2, 64);
        let n_aug = r.random_range(1..=64);
        let aug = common::random_columns(&mut r, d, n_aug);
        let res = fdg(&matrix(d, &base), &matrix(d, &aug)).map_err(|e| e.to_string())?;
        let (n, n2) = (base.len() as f64, n_aug as f64);
        let rhs = (n * res.v_base.value() + n2 * res.v_aug.value()) / (n + n2);
        min_slack = min_slack.min(res.v_joint.value() - rhs);
    }
    ensure(min_slack >= -1e-9, || format!("min slack {min_slack:e}"))?;
    Ok(format!("min V(F) - mix = {min_slack:.3e}"))
}

fn equivalences() -> Outcome {
    let mut r = rng(4);
    let mut worst_delta = 0.0f64;
    for _ in 0..1000 {
        let (d, base) = random_base(&mut r, 2, 64);
        let n_aug = r.random_range(1..=64);
        let aug = common::random_columns(&mut r, d, n_aug);
        let res = fdg(&matrix(d, &base), &matrix(d, &aug)).map_err(|e| e.to_string())?;
        // log base delta of the determinant ratio, delta = det(I + ZZ^T/N)
        let ln_delta = common::ln_det_cov(&common::centered(&base));
        let joint: Vec<Vec<f64>> = base.iter().chain(&aug).cloned().collect();
        let ln_joint = common::ln_det_cov(&common::centered(&joint));
        let delta_form = (ln_joint - ln_delta) / ln_delta;
        let err = (res.fdg - delta_form).abs() / res.fdg.abs().max(delta_form.abs());
        worst_delta = worst_delta.max(err);
    }
    ensure(worst_delta <= 1e-9, || format!("delta-form rel err {worst_delta:e}"))?;

    let mut worst_side = 0.0f64;
    for _ in 0..1000 {
        let d = r.random_range(1..=64);
        let n = r.random_range(1..=64);
        let cols = common::random_columns(&mut r, d, n);
        let z = center(&matrix(d, &cols));
        let cov = logdet_regularized_gram_with(&z, Side::Covariance).map_err(|e| e.to_string())?;
        let gram = logdet_regularized_gram_with(&z, Side::Gram).map_err(|e| e.to_string())?;
        let oracle = common::ln_det_gram(&common::centered(&cols)) / std::f64::consts::LN_2;
        for (a, b) in [(cov, gram), (cov, oracle)] {
            if !rel_close(a, b, 1e-8) {
                return Err(format!("sides disagree: {a} vs {b} (d={d}, n={n})"));
            }
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                worst_side = worst_side.max((a - b).abs() / scale);
            }
        }
    }
    Ok(format!(
        "delta-form rel err {worst_delta:.2e}, side rel err {worst_side:.2e}"
    ))
}

fn fixtures() -> Outcome {
    let close = |name: &str, got: f64, want: f64| {
        ensure((got - want).abs() <= 1e-6, || format!("{name}: {got} != {want}"))
    };
    let single = regularized_volume(&matrix(2, &[vec![2.0, 0.0]])).map_err(|e| e.to_string())?;
    close("single-sample volume", single.value(), 1.160964)?;
    let pair = matrix(2, &[vec![1.0, 0.0], vec![-1.0, 0.0]]);
    let v = manifold_volume(&center(&pair)).map_err(|e| e.to_string())?;
    close("pair volume", v.value(), 0.5)?;
    let cases: [(&[Vec<f64>], f64); 3] = [
        (&[vec![0.0, 0.0]], -0.263034),
        (&[vec![0.0, 3.0]], 1.321928),
        (&[vec![0.0, 0.0], vec![0.0, 0.0]], -0.415037),
    ];
    for (aug, want) in cases {
        let res = fdg(&pair, &matrix(2, aug)).map_err(|e| e.to_string())?;
        close("fdg", res.fdg, want)?;
    }
    close("bound(2,1)", fdg_lower_bound(2, 1), -1.0 / 3.0)?;
    close("bound(500,4500)", fdg_lower_bound(500, 4500), -0.9)?;
    Ok("all worked values within 1e-6".into())
}

fn partition_fixtures() -> Outcome {
    let counts: BTreeMap<u32, usize> = [5000, 2997, 1796, 1077, 645, 387, 232, 139, 83, 50]
        .into_iter()
        .enumerate()
        .map(|(i, n)| (i as u32, n))
        .collect();
    let p = partition_head_tail(&counts, 0.9).map_err(|e| e.to_string())?;
    ensure(p.h == 5, || format!("h = {}", p.h))?;
    ensure((p.h_r - 0.92818).abs() <= 1e-5, || format!("h_r = {}", p.h_r))?;
    let even = BTreeMap::from([(0u32, 90usize), (1, 10)]);
    match partition_head_tail(&even, 0.9) {
        Err(FdgError::NoTailClasses { .. }) => {}
        other => return Err(format!("{{90,10}} gave {other:?}")),
    }
    let factor = imbalance_factor(&counts).map_err(|e| e.to_string())?;
    ensure(factor == 100.0, || format!("IF = {factor}"))?;
    Ok(format!("h = {}, h_r = {:.5}, IF = {factor}", p.h, p.h_r))
}

fn greedy_instance(r: &mut impl Rng) -> (SampleMatrix, SampleMatrix, usize, usize) {
    let d = r.random_range(1..=4);
    let n_base = r.random_range(3..=30);
    let base = common::random_columns(r, d, n_base);
    let n_pool = r.random_range(2..=200);
    let mut pool = Vec::with_capacity(n_pool);
    for _ in 0..n_pool {
        let spread = [0.05, 1.0, 4.0][r.random_range(0..3)];
        let anchor = &base[r.random_range(0..n_base)];
        pool.push(
            anchor
                .iter()
                .map(|v| v + spread * r.random_range(-1.0..1.0))
                .collect(),
        );
    }
    let k = r.random_range(1..=20usize.min(n_pool));
    let quota = r.random_range(0..=n_pool);
    (matrix(d, &base), matrix(d, &pool), k, quota)
}

fn greedy_dominance() -> Outcome {
    let mut r = rng(7);
    let mut steps_checked = 0usize;
    for inst in 0..1000 {
        let (base, pool, k, quota) = greedy_instance(&mut r);
        let clusters = kmeans(&pool, k, inst as u64).map_err(|e| e.to_string())?;
        let base_cols = columns(&base);
        let pool_cols = columns(&pool);
        let mut achieved = BTreeMap::new();
        for dir in [Direction::Maximize, Direction::Minimize] {
            let sel = greedy_select(&base, &clusters, &pool, quota, dir)
                .map_err(|e| format!("instance {inst}: {e}"))?;
            ensure(sel.samples.len() == quota, || format!("instance {inst}: quota missed"))?;
            // replay every step against the oracle
            let mut chosen: Vec<Vec<f64>> = Vec::new();
            let mut used = vec![false; clusters.k];
            for (step, &pick) in sel.plan.picked.iter().enumerate() {
                let mut scores = Vec::new();
                for (c, &taken) in used.iter().enumerate() {
                    let members = clusters.members(c);
                    if taken || members.is_empty() {
                        continue;
                    }
                    let mut cand = chosen.clone();
                    cand.extend(members.iter().map(|&i| pool_cols[i].clone()));
                    scores.push((c, common::fdg(&base_cols, &cand)));
                }
                let extreme = match dir {
                    Direction::Maximize => scores.iter().map(|s| s.1).fold(f64::MIN, f64::max),
                    Direction::Minimize => scores.iter().map(|s| s.1).fold(f64::MAX, f64::min),
                };
                let picked_score = scores
                    .iter()
                    .find(|s| s.0 == pick)
                    .map(|s| s.1)
                    .ok_or_else(|| format!("instance {inst}: pick {pick} not a candidate"))?;
                let tol = 1e-9 * extreme.abs().max(1.0);
                ensure((picked_score - extreme).abs() <= tol, || {
                    format!("instance {inst} step {step}: {picked_score} vs extreme {extreme}")
                })?;
                ensure((sel.plan.step_fdg[step] - picked_score).abs() <= tol, || {
                    format!("instance {inst} step {step}: recorded score drifted")
                })?;
                used[pick] = true;
                chosen.extend(clusters.members(pick).iter().map(|&i| pool_cols[i].clone()));
                steps_checked += 1;
            }
            achieved.insert(dir == Direction::Maximize, sel.plan.achieved_fdg);
        }
        let (max, min) = (achieved[&true], achieved[&false]);
        ensure(max >= min - 1e-12, || {
            format!("instance {inst}: maximize {max} < minimize {min}")
        })?;
    }
    Ok(format!("1000 instances, {steps_checked} greedy steps replayed"))
}

fn sweep_data() -> Result<(BTreeMap<u32, SampleMatrix>, fdg_core::ClassPartition), String> {
    let data = gen_longtail(&SynthConfig {
        n_test_per_class: 1,
        seed: 42,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let partition = partition_head_tail(&data.train.counts(), 0.9).map_err(|e| e.to_string())?;
    Ok((data.train.by_class(), partition))
}

fn sweep_contract() -> Outcome {
    let (classes, partition) = sweep_data()?;
    let kind = AugmenterKind::default();
    let config = SweepConfig {
        mode: SweepMode::Stochastic,
        m_generate: 100,
        m_keep: 50,
        seed: 2024,
        ..Default::default()
    };
    let kept = fdg_sweep(&classes, &kind, &partition, &config).map_err(|e| e.to_string())?;
    ensure(kept.sets.len() == 50, || format!("kept {} sets", kept.sets.len()))?;
    let f: Vec<f64> = kept.sets.iter().map(|s| s.fdg_tail()).collect();
    ensure(f.windows(2).all(|w| w[0] <= w[1]), || "FDGs not sorted".into())?;
    let runs: std::collections::BTreeSet<usize> = kept.sets.iter().map(|s| s.run).collect();
    ensure(runs.len() == 50, || "duplicate runs kept".into())?;

    let all = fdg_sweep(
        &classes,
        &kind,
        &partition,
        &SweepConfig {
            m_keep: 100,
            ..config.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    let all_f: Vec<f64> = all.sets.iter().map(|s| s.fdg_tail()).collect();
    ensure(all_f[0] == f[0] && all_f[99] == f[49], || {
        "endpoints not retained".into()
    })?;

    let again = fdg_sweep(&classes, &kind, &partition, &config).map_err(|e| e.to_string())?;
    let bits = |r: &fdg_core::SweepResult| -> Vec<u64> {
        r.sets
            .iter()
            .flat_map(|s| {
                std::iter::once(s.fdg_tail().to_bits()).chain(
                    s.sets
                        .values()
                        .flat_map(|a| a.samples.as_slice().iter().map(|v| v.to_bits())),
                )
            })
            .collect()
    };
    ensure(bits(&kept) == bits(&again), || "rerun differs".into())?;
    Ok(format!("FDG_Tail range [{:.4}, {:.4}]", f[0], f[49]))
}

fn inverted_u() -> Outcome {
    let config = ExperimentConfig {
        synth: SynthConfig {
            num_classes: 3,
            dim: 2,
            imbalance_factor: 100.0,
            n_max: 1000,
            ..Default::default()
        },
        seeds: 10,
        ..Default::default()
    };
    let report = inverted_u_experiment(&config).map_err(|e| e.to_string())?;
    let s = &report.summary;
    let detail = format!(
        "FDG order on {}/10 seeds, MID best on {}/10 seeds",
        s.fdg_ordered_seeds, s.mid_best_seeds
    );
    ensure(s.fdg_ordered_seeds >= 9 && s.mid_best_seeds >= 8, || detail.clone())?;
    Ok(detail)
}

fn io_roundtrip() -> Outcome {
    let mut r = rng(10);
    let cols = common::random_columns(&mut r, 64, 1000);
    let labels: Vec<u32> = (0..1000).map(|_| r.random_range(0..10)).collect();
    let set = EmbeddingSet::new(labels, matrix(64, &cols)).map_err(|e| e.to_string())?;

    let back = decode_bin(&encode_bin(&set)).map_err(|e| e.to_string())?;
    let same_bits = back.labels() == set.labels()
        && back
            .samples()
            .as_slice()
            .iter()
            .zip(set.samples().as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same_bits, || "fdg-bin round trip not bit exact".into())?;

    let mut buf = Vec::new();
    write_csv(&set, &mut buf).map_err(|e| e.to_string())?;
    let back = read_csv(buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(back == set, || "CSV round trip changed values".into())?;

    let mut bad = encode_bin(&set);
    bad[1] = b'X';
    ensure(matches!(decode_bin(&bad), Err(FdgError::BadMagic)), || {
        "bad magic accepted".into()
    })?;
    let good = encode_bin(&set);
    ensure(
        matches!(decode_bin(&good[..good.len() / 2]), Err(FdgError::TruncatedFile(_))),
        || "truncated file accepted".into(),
    )?;
    let mut empty = good[..17].to_vec();
    empty[9..17].copy_from_slice(&0u64.to_le_bytes());
    ensure(matches!(decode_bin(&empty), Err(FdgError::TruncatedFile(_))), || {
        "empty file accepted".into()
    })?;
    ensure(
        matches!(read_csv("lbl,f0\n0,1\n".as_bytes()), Err(FdgError::MalformedHeader(_))),
        || "bad header accepted".into(),
    )?;
    Ok("bit-exact fdg-bin, value-exact CSV, malformed inputs rejected".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 principle 1: empty augmentation has zero gain", 5, principle_one),
        ("2 lower bound under single-point augmentation", 10, lower_bound),
        ("3 concavity inequality", 10, concavity),
        ("4 delta-form and Gram-side equivalence", 10, equivalences),
        ("5 worked numeric fixtures", 1, fixtures),
        ("6 partition and imbalance fixtures", 1, partition_fixtures),
        ("7 greedy dominance, maximize >= minimize", 60, greedy_dominance),
        ("8 stochastic sweep contract", 60, sweep_contract),
        ("9 inverted-U experiment", 60, inverted_u),
        ("10 dataset I/O", 5, io_roundtrip),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(limit) => {
                Err(format!("{d}; took {elapsed:.2?}, limit {limit}s"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name} ({elapsed:.2?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({elapsed:.2?}): {detail}");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
