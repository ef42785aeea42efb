//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails the
//! test target if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use qamret::aggregate::{fit_whitening, rmac, spoc, whitening_samples, AggregationConfig, AggregationMethod, WhiteningModel};
use qamret::eval::{average_precision_ids, generate_synthetic, mean_ap, QueryJudgment, SyntheticSpec};
use qamret::pipeline::{
    build_index_from_tensors, initial_search, query_expansion, rerank, run_query, DescriptorIndex, IndexConfig,
    PipelineConfig,
};
use qamret::qam::{qam_similarity, solve, QamProblem, QamSolution, QamStatus, SolverConfig};
use qamret::regions::{fmp, fmp_raw, ospp, sample_grid, sample_levels, BaseRegionSet, FmpConfig, OsppConfig, Provenance};
use qamret::{CfmTensor, Error, Exec, GlobalDescriptor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn solve_rows(q: &[f64], rows: &[Vec<f64>]) -> QamSolution {
    solve(&QamProblem::new(q.to_vec(), rows.to_vec()).unwrap(), &SolverConfig::default())
}

fn qp_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = rng.gen_range(1..=4);
        let dim = rng.gen_range(2..=8);
        let (q, rows) = random_nonnegative_instance(&mut rng, k, dim);
        let got = solve_rows(&q, &rows).similarity;
        let oracle = oracle_simplex_max(&q, &rows, 100);
        worst = worst.max((got - oracle).abs());
    }
    let elapsed = start.elapsed();

    // Signed rows can need near-cancelling weights the 0.01 grid cannot
    // resolve, so there the grid only bounds the solver from below.
    let (mut below, mut above) = (0.0f64, 0usize);
    for _ in 0..200 {
        let k = rng.gen_range(1..=4);
        let dim = rng.gen_range(2..=8);
        let q = random_unit(&mut rng, dim);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| random_unit(&mut rng, dim)).collect();
        let d = solve_rows(&q, &rows).similarity - oracle_simplex_max(&q, &rows, 100);
        below = below.max(-d);
        above += (d > 1e-3) as usize;
    }
    check(
        worst <= 1e-3 && below <= 1e-3 && elapsed < Duration::from_secs(30),
        format!(
            "200 nonnegative instances, max |solver - grid| = {worst:.2e} (<= 1e-3), {:.2}s (< 30s); \
             200 signed instances, solver below grid by at most {:.1e}, above grid by > 1e-3 on {above}",
            elapsed.as_secs_f64(),
            below.max(0.0)
        ),
    )
}

/// Largest stationarity/complementarity violation of an Optimal solution.
fn kkt_violation(q: &[f64], rows: &[Vec<f64>], s: &QamSolution) -> f64 {
    let mut fz = vec![0.0; q.len()];
    for (row, z) in rows.iter().zip(&s.weights) {
        fz.iter_mut().zip(row).for_each(|(a, b)| *a += z * b);
    }
    let mut worst = 0.0f64;
    for (row, &z) in rows.iter().zip(&s.weights) {
        let grad = 2.0 * row.iter().zip(&fz).map(|(a, b)| a * b).sum::<f64>()
            - s.multiplier * row.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
        worst = worst.max(-grad);
        if z > 0.0 {
            worst = worst.max(grad.abs());
        }
    }
    let qfz: f64 = q.iter().zip(&fz).map(|(a, b)| a * b).sum();
    worst.max((qfz - 1.0).abs())
}

fn kkt_certificates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let (mut optimal, mut other, mut worst) = (0, 0, 0.0f64);
    for _ in 0..1000 {
        let k = rng.gen_range(1..=25);
        let dim = rng.gen_range(2..=32);
        let (q, rows) = random_instance(&mut rng, k, dim);
        let s = solve_rows(&q, &rows);
        match s.status {
            QamStatus::Optimal => {
                optimal += 1;
                worst = worst.max(kkt_violation(&q, &rows, &s));
            }
            QamStatus::Infeasible => {}
            QamStatus::MaxIterations => other += 1,
        }
    }
    check(
        worst <= 1e-6 && other == 0,
        format!("{optimal} optimal solutions, max violation {worst:.2e} (<= 1e-6), {other} hit the iteration cap"),
    )
}

fn qam_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut failures = Vec::new();
    let (mut low, mut high, mut mono, mut scale, mut dup) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in 0..1000 {
        let k = rng.gen_range(1..=10);
        let dim = rng.gen_range(2..=16);
        let (q, mut rows) = random_instance(&mut rng, k, dim);
        if n % 3 == 0 {
            // Unbiased rows, so some instances carry negatively correlated regions.
            rows = (0..k).map(|_| random_unit(&mut rng, dim)).collect();
        }
        let base = solve_rows(&q, &rows).similarity;
        let best_single = rows
            .iter()
            .map(|r| r.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>())
            .filter(|&c| c > 0.0)
            .fold(0.0f64, f64::max);
        low = low.max(best_single - base);
        high = high.max(base - 1.0);

        let mut grown = rows.clone();
        grown.push(random_unit(&mut rng, dim));
        mono = mono.max(base - solve_rows(&q, &grown).similarity);

        let mut scaled = rows.clone();
        let i = rng.gen_range(0..k);
        let c = rng.gen_range(0.1..10.0);
        scaled[i].iter_mut().for_each(|v| *v *= c);
        scale = scale.max((solve_rows(&q, &scaled).similarity - base).abs());

        let mut duplicated = rows.clone();
        duplicated.push(rows[rng.gen_range(0..k)].clone());
        dup = dup.max((solve_rows(&q, &duplicated).similarity - base).abs());
    }
    if low > 1e-6 {
        failures.push("lower bound");
    }
    if high > 1e-9 {
        failures.push("upper bound");
    }
    if mono > 1e-8 {
        failures.push("monotonicity");
    }
    if scale > 1e-8 {
        failures.push("scale invariance");
    }
    if dup > 1e-8 {
        failures.push("duplicate invariance");
    }
    let detail = format!(
        "1000 instances: below single-region bound {low:.1e}, above 1 {high:.1e}, drop on row addition {mono:.1e}, \
         scaling change {scale:.1e}, duplication change {dup:.1e}{}",
        if failures.is_empty() { String::new() } else { format!("; violated: {}", failures.join(", ")) }
    );
    check(failures.is_empty(), detail)
}

/// Largest distance from a raw point to its assigned cluster mean minus the
/// distance to the nearest other mean; positive means a point sits closer to
/// another cluster than a converged Lloyd assignment allows.
fn lloyd_slack(points: &[Vec<f64>], assignment: &[usize], clusters: usize) -> f64 {
    let dim = points[0].len();
    let mut means = vec![vec![0.0; dim]; clusters];
    let mut counts = vec![0usize; clusters];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        means[a].iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c as f64);
    }
    let dist = |p: &[f64], m: &[f64]| p.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| {
            let own = dist(p, &means[a]);
            let best = means.iter().map(|m| dist(p, m)).fold(f64::INFINITY, f64::min);
            own - best
        })
        .fold(0.0, f64::max)
}

fn pooling_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut worst = [0.0f64; 5];
    let mut mismatches = Vec::new();
    for case in 0..100 {
        let (h, w, d) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=16));
        let sparsity = rng.gen_range(0.0..0.9);
        let t = random_tensor(&mut rng, h, w, d, sparsity);
        let out = rng.gen_range(1..=d);
        let wm = random_whitening(&mut rng, d, out);
        let levels = rng.gen_range(1..=3);

        // fmp_raw
        let want = oracle_fmp_raw(&t);
        match fmp_raw(&t) {
            Ok(got) if got.len() == want.len() => {
                for (g, (ch, mask, desc)) in got.iter().zip(&want) {
                    if g.channel != *ch || g.mask.locations() != &mask[..] {
                        mismatches.push(format!("fmp_raw mask, case {case}"));
                    }
                    worst[0] = worst[0].max(max_abs_diff(&g.descriptor, desc));
                }
            }
            Err(Error::EmptyRegions) if want.is_empty() => {}
            _ => mismatches.push(format!("fmp_raw count, case {case}")),
        }

        // fmp: re-pooling over cluster unions, and a converged assignment.
        let cfg = FmpConfig { clusters: rng.gen_range(1..=6), seed: case, ..Default::default() };
        match fmp(&t, &cfg) {
            Ok(got) => {
                if got.regions.len() > cfg.clusters {
                    mismatches.push(format!("fmp count, case {case}"));
                }
                let assignment: Vec<usize> = want.iter().map(|(ch, _, _)| got.channel_cluster[*ch].unwrap()).collect();
                for (k, mask) in got.masks.iter().enumerate() {
                    let union: BTreeSet<usize> = want
                        .iter()
                        .zip(&assignment)
                        .filter(|(_, &a)| a == k)
                        .flat_map(|((_, m, _), _)| m.iter().copied())
                        .collect();
                    if mask.locations() != &union.iter().copied().collect::<Vec<_>>()[..] {
                        mismatches.push(format!("fmp union, case {case}"));
                    }
                    let pooled = unit(&oracle_mask_sum(&t, mask.locations())).unwrap();
                    worst[1] = worst[1].max(max_abs_diff(&to_f64(got.regions.row(k)), &pooled));
                }
                let points: Vec<Vec<f64>> = want.iter().map(|r| r.2.clone()).collect();
                if lloyd_slack(&points, &assignment, got.regions.len()) > 1e-9 {
                    mismatches.push(format!("fmp assignment not converged, case {case}"));
                }
            }
            Err(Error::EmptyRegions) if want.is_empty() => {}
            Err(e) => mismatches.push(format!("fmp error {e}, case {case}")),
        }

        // ospp
        let rows = oracle_ospp(&t, levels, &wm);
        match ospp(&t, &OsppConfig { scales: levels, overlap: 0.4 }, &wm) {
            Ok(got) if got.len() == rows.len() => {
                for (k, r) in rows.iter().enumerate() {
                    worst[2] = worst[2].max(max_abs_diff(&to_f64(got.row(k)), r));
                }
            }
            Err(Error::EmptyRegions) if rows.is_empty() => {}
            _ => mismatches.push(format!("ospp count, case {case}")),
        }

        // spoc
        let got = spoc(&t);
        match oracle_spoc(&t) {
            Some(v) => worst[3] = worst[3].max(max_abs_diff(&to_f64(got.values()), &v)),
            None if got.is_zero() => {}
            None => mismatches.push(format!("spoc zero flag, case {case}")),
        }

        // rmac
        let got = rmac(&t, &AggregationConfig::rmac(levels, wm.clone())).unwrap();
        match oracle_rmac(&t, levels, &wm) {
            Some(v) => worst[4] = worst[4].max(max_abs_diff(&to_f64(got.values()), &v)),
            None if got.is_zero() => {}
            None => mismatches.push(format!("rmac zero flag, case {case}")),
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    check(
        max <= 1e-6 && mismatches.is_empty(),
        format!(
            "100 tensors, max deviation fmp_raw {:.1e}, fmp {:.1e}, ospp {:.1e}, spoc {:.1e}, rmac {:.1e} (<= 1e-6){}",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4],
            if mismatches.is_empty() { String::new() } else { format!("; {}", mismatches.join(", ")) }
        ),
    )
}

fn grid_sampling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut problems = Vec::new();
    for _ in 0..50 {
        let (h, w, l) = (rng.gen_range(1..=64), rng.gen_range(1..=64), rng.gen_range(1..=3));
        let cfg = OsppConfig { scales: l, overlap: 0.4 };
        let regions = sample_grid(h, w, &cfg);
        let expected: Vec<(usize, usize, usize)> = oracle_grid(h, w, l, 0.4);
        let got: Vec<(usize, usize, usize)> = regions.iter().map(|r| (r.top, r.left, r.height)).collect();
        if got != expected {
            problems.push(format!("{h}x{w} L={l}: regions differ from stride rule"));
        }
        if regions.iter().any(|r| r.height != r.width || r.top + r.height > h || r.left + r.width > w) {
            problems.push(format!("{h}x{w} L={l}: region out of bounds"));
        }
        let levels = sample_levels(h, w, &cfg);
        let covered = (0..h).all(|y| (0..w).all(|x| levels[0].iter().any(|r| r.contains(y, x))));
        if !covered {
            problems.push(format!("{h}x{w}: level 1 leaves cells uncovered"));
        }
        for level in &levels {
            let size = level[0].width as f64;
            let tops: BTreeSet<usize> = level.iter().map(|r| r.top).collect();
            let lefts: BTreeSet<usize> = level.iter().map(|r| r.left).collect();
            for axis in [tops, lefts] {
                let offs: Vec<usize> = axis.into_iter().collect();
                for pair in offs.windows(2) {
                    let shared = size - (pair[1] - pair[0]) as f64;
                    if shared < 0.4 * size - 1.0 {
                        problems.push(format!("{h}x{w}: overlap {shared} below {:.1}", 0.4 * size - 1.0));
                    }
                }
            }
        }
    }
    let ten_by_twenty = sample_grid(10, 20, &OsppConfig { scales: 1, overlap: 0.4 });
    let lefts: Vec<usize> = ten_by_twenty.iter().map(|r| r.left).collect();
    if ten_by_twenty.len() != 3 || lefts != [0, 5, 10] {
        problems.push(format!("10x20 L=1 gave {} regions at {lefts:?}", ten_by_twenty.len()));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "50 random grids in bounds, covering, overlapping; 10x20 L=1 -> 3 regions at 0, 5, 10".into()
        } else {
            problems.join("; ")
        },
    )
}

fn ap_correctness() -> Outcome {
    let judge = |rel: &[&str], junk: &[&str]| QueryJudgment::new(rel.to_vec(), junk.to_vec()).unwrap();
    let ap = |list: &[&str], j: &QueryJudgment| average_precision_ids(list.iter().copied(), j).unwrap();
    let two = judge(&["r1", "r2"], &[]);
    let mut problems = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-5 {
            problems.push(format!("{name}: {got:.6} != {want:.6}"));
        }
    };
    expect("[R,N,R]", ap(&["r1", "n", "r2"], &two), 0.79167);
    expect("[R]", ap(&["r1"], &judge(&["r1"], &[])), 1.0);
    expect("[N,R]", ap(&["n", "r1"], &judge(&["r1"], &[])), 0.25);
    expect("[R,N] missing one", ap(&["r1", "n"], &two), 0.5);
    let with_junk = judge(&["r1", "r2"], &["j1", "j2"]);
    expect("[R,J,N,R]", ap(&["r1", "j1", "n", "r2"], &with_junk), 0.79167);
    expect("[J,R,N,J,R]", ap(&["j1", "r1", "n", "j2", "r2"], &with_junk), 0.79167);
    let base = ap(&["r1", "n1", "r2", "n2", "n3", "n4"], &two);
    expect("tail permutation", ap(&["r1", "n1", "r2", "n4", "n2", "n3"], &two), base);
    expect("mean", mean_ap(&[0.25, 0.5, 1.0]).unwrap(), 1.75 / 3.0);
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "[R,N,R] = 0.79167, junk removal and tail permutation invariance hold".into()
        } else {
            problems.join("; ")
        },
    )
}

fn clutter_recovery() -> Outcome {
    let start = Instant::now();
    let (mut initial, mut reranked, mut expanded) = (vec![], vec![], vec![]);
    for seed in 0..10u64 {
        let spec = SyntheticSpec::planted(seed);
        let corpus = generate_synthetic(&spec).map_err(|e| e.to_string())?;
        let holdout = generate_synthetic(&spec.holdout(100)).map_err(|e| e.to_string())?;
        let samples: Vec<Vec<f32>> =
            holdout.images.iter().flat_map(|(_, t)| whitening_samples(t, AggregationMethod::Rmac, 3)).collect();
        let wm = fit_whitening(&samples, 32).map_err(|e| e.to_string())?;
        let cfg = IndexConfig { fmp: FmpConfig { clusters: 8, ..Default::default() }, ..Default::default() };
        let index = build_index_from_tensors(&corpus.images, &cfg, &wm, Exec::default()).map_err(|e| e.to_string())?;
        let out = run_query(&index, &corpus.query, &PipelineConfig::default(), true, true).map_err(|e| e.to_string())?;
        let j = QueryJudgment::new(corpus.relevant.iter().cloned(), Vec::<String>::new()).unwrap();
        let ap = |l: &qamret::pipeline::RankedList| average_precision_ids(l.ids(), &j).unwrap();
        initial.push(ap(&out.initial));
        reranked.push(ap(out.reranked.as_ref().unwrap()));
        expanded.push(ap(out.expanded.as_ref().unwrap()));
    }
    let elapsed = start.elapsed();
    let (i, r, e) = (mean_ap(&initial).unwrap(), mean_ap(&reranked).unwrap(), mean_ap(&expanded).unwrap());
    check(
        r >= i + 0.02 && e >= r - 0.01 && elapsed < Duration::from_secs(120),
        format!(
            "10 seeds: mAP initial {i:.4}, reranked {r:.4} (>= {:.4}), expanded {e:.4} (>= {:.4}), {:.1}s (< 120s)",
            i + 0.02,
            r - 0.01,
            elapsed.as_secs_f64()
        ),
    )
}

fn pipeline_bytes(exec: Exec) -> Result<(Vec<u8>, Vec<u8>), Error> {
    let spec = SyntheticSpec { relevant: 10, distractors: 60, ..SyntheticSpec::planted(42) };
    let corpus = generate_synthetic(&spec)?;
    let holdout = generate_synthetic(&spec.holdout(40))?;
    let samples: Vec<Vec<f32>> =
        holdout.images.iter().flat_map(|(_, t)| whitening_samples(t, AggregationMethod::Rmac, 3)).collect();
    let wm = fit_whitening(&samples, 32)?;
    let index = build_index_from_tensors(&corpus.images, &IndexConfig::default(), &wm, exec)?;
    let cfg = PipelineConfig { exec, ..Default::default() };
    let q = index.query_descriptor(&corpus.query)?;
    let initial = initial_search(&index, &q, exec)?;
    let reranked = rerank(&index, &corpus.query, &initial, &cfg)?;
    let expanded = query_expansion(&index, &q, &reranked, &cfg)?;
    let mut lists = Vec::new();
    for l in [&initial, &reranked, &expanded] {
        for e in &l.entries {
            lists.extend_from_slice(e.id.as_bytes());
            lists.extend_from_slice(&e.score.to_le_bytes());
        }
    }
    Ok((index.to_bytes()?, lists))
}

fn determinism() -> Outcome {
    let a = pipeline_bytes(Exec::default()).map_err(|e| e.to_string())?;
    let b = pipeline_bytes(Exec::default()).map_err(|e| e.to_string())?;
    let c = pipeline_bytes(Exec::Sequential).map_err(|e| e.to_string())?;
    check(
        a == b && a == c,
        format!(
            "index ({} bytes) and initial/reranked/expanded lists identical across runs: {}, sequential vs default: {}",
            a.0.len(),
            a == b,
            a == c
        ),
    )
}

fn performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut slowest = Duration::ZERO;
    for _ in 0..5 {
        let q = GlobalDescriptor::normalized(&random_unit(&mut rng, 512));
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|_| {
                let r = random_unit(&mut rng, 512);
                r.iter().zip(q.values()).map(|(a, &b)| a + 0.3 * b as f64).collect()
            })
            .collect();
        let f = BaseRegionSet::from_rows(&rows, Provenance::Fmp).unwrap();
        let start = Instant::now();
        qam_similarity(&q, &f, &SolverConfig::default()).unwrap();
        slowest = slowest.max(start.elapsed());
    }

    let images: Vec<(String, CfmTensor)> =
        (0..120).map(|i| (format!("img{i:03}"), random_tensor(&mut rng, 12, 12, 512, 0.9))).collect();
    let cfg = IndexConfig { aggregation: AggregationMethod::Spoc, ..Default::default() };
    let index: DescriptorIndex =
        build_index_from_tensors(&images, &cfg, &WhiteningModel::identity(512), Exec::default()).unwrap();
    let query = &images[0].1;
    let q = index.query_descriptor(query).unwrap();
    let initial = initial_search(&index, &q, Exec::Sequential).unwrap();
    let pc = PipelineConfig { exec: Exec::Sequential, ..Default::default() };
    let start = Instant::now();
    rerank(&index, query, &initial, &pc).unwrap();
    let rerank_time = start.elapsed();
    check(
        slowest < Duration::from_millis(50) && rerank_time < Duration::from_secs(5),
        format!(
            "qam_similarity K=25 D'=512 slowest of 5: {:.2} ms (< 50 ms); rerank of 100 on one thread: {:.3} s (< 5 s)",
            slowest.as_secs_f64() * 1e3,
            rerank_time.as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("QP oracle", qp_oracle),
        ("KKT certificates", kkt_certificates),
        ("QAM bounds", qam_bounds),
        ("Pooling oracles", pooling_oracles),
        ("Grid sampling", grid_sampling),
        ("AP correctness", ap_correctness),
        ("End-to-end clutter recovery", clutter_recovery),
        ("Determinism", determinism),
        ("Performance", performance),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
