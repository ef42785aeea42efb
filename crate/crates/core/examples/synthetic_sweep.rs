//! Runs the three pipeline stages on the default planted-object corpus for
//! ten seeds and prints mAP per stage.
//!
//! `cargo run --release --example synthetic_sweep -- [K] [spoc|rmac]`

use qamret::aggregate::{fit_whitening, whitening_samples, AggregationMethod};
use qamret::eval::{average_precision, generate_synthetic, mean_ap, QueryJudgment, SyntheticSpec};
use qamret::pipeline::{build_index_from_tensors, run_query, IndexConfig, PipelineConfig, RerankerKind};
use qamret::regions::FmpConfig;
use qamret::Exec;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k = args.first().and_then(|s| s.parse().ok()).unwrap_or(8);
    let aggregation = match args.get(1).map(String::as_str) {
        Some("spoc") => AggregationMethod::Spoc,
        _ => AggregationMethod::Rmac,
    };

    let (mut init, mut rer, mut exp) = (vec![], vec![], vec![]);
    for seed in 0..10u64 {
        let spec = SyntheticSpec::planted(seed);
        let corpus = generate_synthetic(&spec).unwrap();
        let holdout = generate_synthetic(&spec.holdout(100)).unwrap();
        let samples: Vec<Vec<f32>> = holdout.images.iter().flat_map(|(_, t)| whitening_samples(t, aggregation, 3)).collect();
        let wm = fit_whitening(&samples, 32).unwrap();
        let cfg = IndexConfig {
            aggregation,
            reranker: RerankerKind::Fmp,
            fmp: FmpConfig { clusters: k, ..Default::default() },
            ..Default::default()
        };
        let index = build_index_from_tensors(&corpus.images, &cfg, &wm, Exec::default()).unwrap();
        let pc = PipelineConfig { reranker: RerankerKind::Fmp, ..Default::default() };
        let out = run_query(&index, &corpus.query, &pc, true, true).unwrap();
        let j = QueryJudgment::new(corpus.relevant.iter().cloned(), Vec::<String>::new()).unwrap();
        let a = average_precision(&out.initial, &j).unwrap();
        let b = average_precision(out.reranked.as_ref().unwrap(), &j).unwrap();
        let c = average_precision(out.expanded.as_ref().unwrap(), &j).unwrap();
        println!("seed {seed}: initial {a:.4} reranked {b:.4} expanded {c:.4}");
        init.push(a);
        rer.push(b);
        exp.push(c);
    }
    println!(
        "mAP initial {:.4} reranked {:.4} expanded {:.4}",
        mean_ap(&init).unwrap(),
        mean_ap(&rer).unwrap(),
        mean_ap(&exp).unwrap()
    );
}
