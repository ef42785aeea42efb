use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qamret::aggregate::{fit_whitening, l1_norm_map, whitening_samples, AggregationMethod, WhiteningModel};
use qamret::eval::{convert_oxford_gt, evaluate, generate_synthetic, ClutterVocabulary, ObjectSignature, SyntheticSpec};
use qamret::manifest::CorpusManifest;
use qamret::pipeline::{
    build_index, read_descriptors, run_query, DescriptorIndex, IndexConfig, PipelineConfig,
    RankedList, RerankerKind,
};
use qamret::qam::{merged_heatmap, solve, write_pgm, QamProblem, QamStatus, SolverConfig};
use qamret::regions::{fmp, FmpConfig, OsppConfig};
use qamret::tensor::{read_tensor, GridBox};
use qamret::Exec;

#[derive(Debug)]
enum CliError {
    /// Bad input, configuration or data; exit code 2.
    Usage(String),
    /// Failure while producing output; exit code 1.
    Internal(String),
}

impl From<qamret::Error> for CliError {
    fn from(e: qamret::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_box(s: &str) -> Result<GridBox, String> {
    let v: Vec<usize> = s.split(',').map(|p| p.trim().parse().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    match v[..] {
        [top, left, height, width] => Ok(GridBox { top, left, height, width }),
        _ => Err(format!("expected 4 comma-separated values, got {}", v.len())),
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

#[derive(Parser)]
#[command(name = "qamret", version, about = "Instance retrieval with query-adaptive region matching")]
struct Cli {
    /// Worker threads for data-parallel stages (0 = all cores).
    #[arg(long, global = true, env = "QAM_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a PCA-whitening model from hold-out descriptors.
    FitWhitening(FitWhiteningArgs),
    /// Describe every manifest entry and write an index file.
    Index(IndexArgs),
    /// Rank the indexed images for one query tensor.
    Search(SearchArgs),
    /// Report per-query AP and mAP for each pipeline stage.
    Eval(EvalArgs),
    /// Write a heat map (binary PGM) for an indexed image.
    Heatmap(HeatmapArgs),
    /// Generate a synthetic planted-object corpus.
    GenSynthetic(GenSyntheticArgs),
    /// Convert Oxford-style ground-truth files into a manifest.
    ConvertOxfordGt(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Aggregation {
    Spoc,
    Rmac,
}

impl From<Aggregation> for AggregationMethod {
    fn from(a: Aggregation) -> Self {
        match a {
            Aggregation::Spoc => AggregationMethod::Spoc,
            Aggregation::Rmac => AggregationMethod::Rmac,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Reranker {
    None,
    Fmp,
    Ospp,
}

impl From<Reranker> for RerankerKind {
    fn from(r: Reranker) -> Self {
        match r {
            Reranker::None => RerankerKind::None,
            Reranker::Fmp => RerankerKind::Fmp,
            Reranker::Ospp => RerankerKind::Ospp,
        }
    }
}

#[derive(Args)]
struct FitWhiteningArgs {
    /// DSC1 descriptor file of hold-out samples.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    descriptors: Option<PathBuf>,
    /// Hold-out manifest; samples are computed from its entries.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Descriptor family the samples are drawn for (with --manifest).
    #[arg(long, value_enum, default_value = "rmac")]
    aggregation: Aggregation,
    #[arg(long = "L", default_value_t = 3)]
    scales: usize,
    /// Output dimension (defaults to the input dimension).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    manifest: PathBuf,
    /// Whitening model learned on hold-out data.
    #[arg(long)]
    whitening: PathBuf,
    #[arg(long, value_enum, default_value = "rmac")]
    aggregation: Aggregation,
    #[arg(long, value_enum, default_value = "fmp")]
    reranker: Reranker,
    /// FMP cluster count.
    #[arg(long = "K", default_value_t = 25)]
    clusters: usize,
    /// Scales for R-MAC and OSPP.
    #[arg(long = "L", default_value_t = 3)]
    scales: usize,
    #[arg(long, default_value_t = 0.4)]
    overlap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct StageArgs {
    /// Rerank the shortlist with QAM.
    #[arg(long)]
    rerank: bool,
    /// Apply query expansion after the last stage.
    #[arg(long)]
    qe: bool,
    /// Shortlist size.
    #[arg(long = "N", default_value_t = 100)]
    shortlist: usize,
    #[arg(long, default_value_t = 5)]
    qe_depth: usize,
    #[arg(long, default_value_t = 1e-10)]
    objective_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    constraint_tol: f64,
    /// QAM iteration cap (default 10 K + 100).
    #[arg(long)]
    max_solver_iterations: Option<usize>,
}

impl StageArgs {
    fn pipeline(&self, index: &DescriptorIndex) -> CliResult<PipelineConfig> {
        let cfg = PipelineConfig {
            shortlist: self.shortlist,
            qe_depth: self.qe_depth,
            reranker: index.config().reranker,
            solver: SolverConfig {
                objective_tolerance: self.objective_tol,
                constraint_tolerance: self.constraint_tol,
                max_iterations: self.max_solver_iterations,
            },
            exec: Exec::default(),
        };
        cfg.validate()?;
        if self.rerank && index.config().reranker == RerankerKind::None {
            return Err(usage("--rerank given but the index was built without region sets"));
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SearchArgs {
    index: PathBuf,
    query: PathBuf,
    /// Grid crop `top,left,height,width` applied to the query tensor.
    #[arg(long, value_name = "T,L,H,W", value_parser = parse_box)]
    crop: Option<GridBox>,
    #[command(flatten)]
    stages: StageArgs,
    /// Rows to print.
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Also write all stages as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    index: PathBuf,
    manifest: PathBuf,
    #[command(flatten)]
    stages: StageArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeatmapMode {
    Merged,
    L1norm,
}

#[derive(Args)]
struct HeatmapArgs {
    index: PathBuf,
    query: PathBuf,
    image_id: String,
    out: PathBuf,
    #[arg(long, value_enum, default_value = "merged")]
    mode: HeatmapMode,
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    height: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    #[arg(long, default_value_t = 5)]
    object_size: usize,
    #[arg(long, default_value_t = 16)]
    object_channels: usize,
    #[arg(long, default_value_t = 0.3)]
    clutter: f64,
    /// Number of background patterns in the clutter vocabulary.
    #[arg(long, default_value_t = 12)]
    clutter_patterns: usize,
    /// Channels active in each background pattern.
    #[arg(long, default_value_t = 8)]
    clutter_channels: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 20)]
    relevant: usize,
    #[arg(long, default_value_t = 200)]
    distractors: usize,
    /// Also write a hold-out corpus of this many images under `<out>/holdout`.
    #[arg(long, default_value_t = 0)]
    holdout: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    tensor_dir: PathBuf,
    /// Feature-map cells per pixel, used to map query boxes onto the grid.
    #[arg(long)]
    grid_scale: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::FitWhitening(a) => cmd_fit_whitening(a),
        Command::Index(a) => cmd_index(a),
        Command::Search(a) => cmd_search(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::ConvertOxfordGt(a) => cmd_convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}

fn cmd_fit_whitening(a: FitWhiteningArgs) -> CliResult {
    let samples = match (&a.descriptors, &a.manifest) {
        (Some(path), _) => read_descriptors(path)?,
        (None, Some(path)) => {
            let m = CorpusManifest::load(path)?;
            let mut out = Vec::new();
            for e in &m.entries {
                out.extend(whitening_samples(&m.load_entry(e)?, a.aggregation.into(), a.scales));
            }
            out
        }
        (None, None) => return Err(usage("either --descriptors or --manifest is required")),
    };
    let input_dim = samples.first().map_or(0, Vec::len);
    let model = fit_whitening(&samples, a.dim.unwrap_or(input_dim))?;
    model.save(&a.out).map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!(
        "fitted on {} samples: {} -> {} dims, {} eigenvalue floor hits",
        samples.len(),
        model.input_dim(),
        model.output_dim(),
        model.clamped_dims()
    );
    println!("retained_dims\t{}", model.output_dim());
    println!("floor_hits\t{}", model.clamped_dims());
    Ok(())
}

fn cmd_index(a: IndexArgs) -> CliResult {
    let t0 = Instant::now();
    let manifest = CorpusManifest::load(&a.manifest)?;
    let whitening = WhiteningModel::load(&a.whitening)?;
    let t1 = Instant::now();
    let cfg = IndexConfig {
        aggregation: a.aggregation.into(),
        scales: a.scales,
        reranker: a.reranker.into(),
        fmp: FmpConfig {
            clusters: a.clusters,
            max_iterations: a.max_iterations,
            seed: a.seed,
        },
        ospp: OsppConfig {
            scales: a.scales,
            overlap: a.overlap,
        },
    };
    let index = build_index(&manifest, &cfg, &whitening, Exec::default())?;
    let t2 = Instant::now();
    let bytes = index.to_bytes()?;
    write_output(&a.out, &bytes)?;
    let t3 = Instant::now();
    eprintln!("load\t{:.3}s", (t1 - t0).as_secs_f64());
    eprintln!("describe\t{:.3}s\t{} images", (t2 - t1).as_secs_f64(), index.len());
    eprintln!("write\t{:.3}s\t{} bytes", (t3 - t2).as_secs_f64(), bytes.len());
    Ok(())
}

fn format_ranked(list: &RankedList, top: usize) -> String {
    let mut out = String::from("rank\timage_id\tscore\tstage\n");
    for (i, e) in list.entries.iter().take(top).enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", i + 1, e.id, e.score, list.stage.as_str());
    }
    out
}

fn cmd_search(a: SearchArgs) -> CliResult {
    let index = DescriptorIndex::load(&a.index)?;
    let cfg = a.stages.pipeline(&index)?;
    let mut query = read_tensor(&a.query)?;
    if let Some(b) = a.crop {
        query = query.crop(b)?;
    }
    let outcome = run_query(&index, &query, &cfg, a.stages.rerank, a.stages.qe)?;
    if a.top > 0 {
        print!("{}", format_ranked(outcome.last(), a.top));
    }
    if let Some(path) = &a.json {
        let text = serde_json::to_string_pretty(&outcome).map_err(|e| CliError::Internal(e.to_string()))?;
        write_output(path, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let index = DescriptorIndex::load(&a.index)?;
    let cfg = a.stages.pipeline(&index)?;
    let manifest = CorpusManifest::load(&a.manifest)?;
    let report = evaluate(&index, &manifest, &cfg, a.stages.rerank, a.stages.qe)?;
    println!("query\tinitial\treranked\texpanded");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    for q in &report.queries {
        println!("{}\t{:.6}\t{}\t{}", q.query, q.initial, opt(q.reranked), opt(q.expanded));
    }
    println!(
        "mAP\t{:.6}\t{}\t{}",
        report.initial_map,
        opt(report.reranked_map),
        opt(report.expanded_map)
    );
    Ok(())
}

fn cmd_heatmap(a: HeatmapArgs) -> CliResult {
    let index = DescriptorIndex::load(&a.index)?;
    let pos = index
        .position(&a.image_id)
        .ok_or_else(|| usage(format!("unknown image id {:?}", a.image_id)))?;
    let image = read_tensor(index.source(pos))?;
    let map = match a.mode {
        HeatmapMode::L1norm => l1_norm_map(&image),
        HeatmapMode::Merged => {
            if index.config().reranker != RerankerKind::Fmp {
                return Err(usage("merged heat maps need an FMP index"));
            }
            let query = read_tensor(&a.query)?;
            let q = index.rerank_query(&query)?;
            match fmp(&image, &index.config().fmp) {
                Ok(regions) => {
                    let problem = QamProblem::from_descriptors(&q, &regions.regions)?;
                    let sol = solve(&problem, &SolverConfig::default());
                    if sol.status == QamStatus::Infeasible {
                        eprintln!("warning: no region correlates with the query; writing a zero map");
                    }
                    merged_heatmap(&image, &regions.channel_cluster, &sol.weights)?
                }
                Err(qamret::Error::EmptyRegions) => {
                    eprintln!("warning: image has no activated region; writing a zero map");
                    vec![0.0; image.locations()]
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    write_pgm(&a.out, image.width(), image.height(), &map).map_err(|e| CliError::Internal(e.to_string()))
}

fn cmd_gen_synthetic(a: GenSyntheticArgs) -> CliResult {
    let object = ObjectSignature::random(a.object_size, a.channels, a.object_channels, a.seed)?;
    let spec = SyntheticSpec {
        height: a.height,
        width: a.width,
        object,
        clutter_density: a.clutter,
        clutter: ClutterVocabulary::random(a.channels, a.clutter_patterns, a.clutter_channels, a.seed)?,
        noise_scale: a.noise,
        relevant: a.relevant,
        distractors: a.distractors,
        seed: a.seed,
    };
    let corpus = generate_synthetic(&spec)?;
    corpus.write(&a.out)?;
    eprintln!("wrote {} images to {}", corpus.images.len(), a.out.display());
    if a.holdout > 0 {
        let holdout = spec.holdout(a.holdout);
        let dir = a.out.join("holdout");
        generate_synthetic(&holdout)?.write(&dir)?;
        eprintln!("wrote {} hold-out images to {}", a.holdout, dir.display());
    }
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> CliResult {
    let manifest = convert_oxford_gt(&a.gt_dir, &a.tensor_dir, a.grid_scale)?;
    manifest.save(&a.out).map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!(
        "{} entries, {} queries",
        manifest.entries.len(),
        manifest.queries.len()
    );
    Ok(())
}
