//! The `clickseg` command line tool.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use clickseg::datasets::{
    load_dataset, make_synthetic_suite_sized, merge_datasets, save_dataset, Dataset, MergeConfig, SuiteKind,
};
use clickseg::encoding::EncodingConfig;
use clickseg::eval::{run_noc, EvalConfig};
use clickseg::loss::{LossConfig, LossKind};
use clickseg::predictors::{
    train_featherweight, FeatherweightModel, GeodesicPredictor, OracleFactory, PredictorFactory, RemotePredictor,
    TrainConfig,
};
use clickseg::sampling::{generate_training_interaction, SamplingConfig};
use clickseg::{rle, Click, Parallelism};
use clickseg_service::{PredictorRegistry, ServiceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SharedFactory = Arc<dyn PredictorFactory + Send + Sync>;

/// `oracle`, `geodesic`, `featherweight:FILE` or `remote:URL`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorSpec {
    Oracle,
    Geodesic,
    Featherweight(PathBuf),
    Remote(String),
}

impl FromStr for PredictorSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "oracle" => Ok(Self::Oracle),
            None if s == "geodesic" => Ok(Self::Geodesic),
            Some(("featherweight", path)) if !path.is_empty() => Ok(Self::Featherweight(path.into())),
            Some(("remote", url)) if !url.is_empty() => Ok(Self::Remote(url.into())),
            _ => Err(format!(
                "unknown predictor `{s}`; expected oracle, geodesic, featherweight:FILE or remote:URL"
            )),
        }
    }
}

impl PredictorSpec {
    /// Short name used for service registration.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Geodesic => "geodesic",
            Self::Featherweight(_) => "featherweight",
            Self::Remote(_) => "remote",
        }
    }

    pub fn build(&self, parallelism: Parallelism) -> Result<SharedFactory> {
        Ok(match self {
            Self::Oracle => Arc::new(OracleFactory),
            Self::Geodesic => {
                let mut g = GeodesicPredictor::default();
                g.config.parallelism = parallelism;
                Arc::new(g)
            }
            Self::Featherweight(path) => Arc::new(
                FeatherweightModel::load(path).with_context(|| format!("loading model {}", path.display()))?,
            ),
            Self::Remote(url) => Arc::new(RemotePredictor::new(url)),
        })
    }
}

pub fn parse_thresholds(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad threshold `{t}`: {e}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Bce,
    Focal,
    Nfl,
    SoftIou,
}

impl From<LossArg> for LossKind {
    fn from(a: LossArg) -> Self {
        match a {
            LossArg::Bce => LossKind::Bce,
            LossArg::Focal => LossKind::Focal,
            LossArg::Nfl => LossKind::Nfl,
            LossArg::SoftIou => LossKind::SoftIou,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clickseg", version, about = "Click-based interactive segmentation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic suite.
    Synth(SynthArgs),
    /// Merge a general and a fine-grained dataset.
    Merge(MergeArgs),
    /// Emit simulated training interactions, one JSON line per instance.
    Simulate(SimulateArgs),
    /// Train the featherweight model.
    Train(TrainArgs),
    /// Run the NoC protocol and write a report.
    Eval(EvalArgs),
    /// Serve the session API (and optionally the annotation UI).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "two_color_shapes")]
    pub kind: SuiteKind,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = clickseg::datasets::SYNTHETIC_SIZE)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub general: PathBuf,
    #[arg(long)]
    pub fine: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "geodesic")]
    pub predictor: PredictorSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub n_iters: usize,
    #[arg(long, default_value = "disk:5")]
    pub encoding: EncodingConfig,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub n_iters: usize,
    #[arg(long, value_enum, default_value_t = LossArg::Nfl)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value = "disk:5")]
    pub encoding: EncodingConfig,
    /// Train without previous-mask guidance.
    #[arg(long)]
    pub no_prev_mask: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sequential: bool,
    /// Model output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-epoch and per-step loss log (JSON).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "geodesic")]
    pub predictor: PredictorSpec,
    #[arg(long = "iou-thr", default_value = "0.85,0.90", value_parser = parse_thresholds)]
    pub iou_thr: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub max_clicks: usize,
    #[arg(long, default_value = "disk:5")]
    pub encoding: EncodingConfig,
    /// Evaluate without previous-mask guidance.
    #[arg(long)]
    pub no_prev_mask: bool,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8911)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, default_value = "geodesic")]
    pub predictor: PredictorSpec,
    #[arg(long, default_value = "disk:5")]
    pub encoding: EncodingConfig,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// One line of `simulate` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub instance_id: String,
    pub clicks: Vec<Click>,
    pub prev_mask: String,
}

fn parallelism(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::default()
    }
}

fn load(dir: &Path) -> Result<Dataset> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Instance `i` draws from its own stream seeded `seed + i`.
pub fn simulate(
    dataset: &Dataset,
    predictor: &dyn PredictorFactory,
    sampling: &SamplingConfig,
    encoding: &EncodingConfig,
    seed: u64,
) -> Result<Vec<SimRecord>> {
    dataset
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let image = dataset.image(&inst.image_id)?;
            let bound = predictor.bind(&inst.mask);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let ti = generate_training_interaction(&inst.mask, image, &*bound, sampling, encoding, &mut rng)
                .with_context(|| format!("instance {}", inst.instance_id))?;
            Ok(SimRecord {
                instance_id: inst.instance_id.clone(),
                clicks: ti.clicks,
                prev_mask: rle::encode(&ti.prev_mask),
            })
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let suite = make_synthetic_suite_sized(a.kind, a.n, a.seed, a.size)?;
            save_dataset(&suite, &a.out)?;
            println!("wrote {} instances to {}", suite.len(), a.out.display());
        }
        Command::Merge(a) => {
            if !(0.0..=1.0).contains(&a.iou) {
                bail!("--iou must lie in [0, 1], got {}", a.iou);
            }
            let general = load(&a.general)?;
            let fine = load(&a.fine)?;
            let merged = merge_datasets(&general, &fine, &MergeConfig { iou_threshold: a.iou });
            save_dataset(&merged, &a.out)?;
            println!(
                "kept {} of {} general and all {} fine instances",
                merged.len() - fine.len(),
                general.len(),
                fine.len()
            );
        }
        Command::Simulate(a) => {
            let dataset = load(&a.dataset)?;
            let predictor = a.predictor.build(Parallelism::Sequential)?;
            let sampling = SamplingConfig {
                n_iters_max: a.n_iters,
                rng_seed: a.seed,
                ..Default::default()
            };
            let records = simulate(&dataset, predictor.as_ref(), &sampling, &a.encoding, a.seed)?;
            let mut out = create(&a.out)?;
            for r in &records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            println!("wrote {} records to {}", records.len(), a.out.display());
        }
        Command::Train(a) => {
            let dataset = load(&a.dataset)?;
            let cfg = TrainConfig {
                sampling: SamplingConfig {
                    n_iters_max: a.n_iters,
                    rng_seed: a.seed,
                    ..Default::default()
                },
                loss: LossConfig {
                    kind: a.loss.into(),
                    gamma: a.gamma,
                    ..Default::default()
                },
                encoding: a.encoding,
                learning_rate: a.lr,
                epochs: a.epochs,
                batch_size: a.batch_size,
                use_prev_mask: !a.no_prev_mask,
                seed: a.seed,
                parallelism: parallelism(a.sequential),
            };
            let (model, log) = train_featherweight(&dataset, &cfg)?;
            model.save(&a.out)?;
            if let Some(path) = &a.log {
                serde_json::to_writer_pretty(create(path)?, &log)?;
            }
            if let Some(last) = log.epoch_losses.last() {
                println!("final epoch loss {last:.6}");
            }
            println!("wrote model to {}", a.out.display());
        }
        Command::Eval(a) => {
            let dataset = load(&a.dataset)?;
            let mode = parallelism(a.sequential);
            let predictor = a.predictor.build(mode)?;
            let cfg = EvalConfig {
                iou_thresholds: a.iou_thr,
                max_clicks: a.max_clicks,
                encoding: a.encoding,
                use_prev_mask: !a.no_prev_mask,
                parallelism: mode,
                ..Default::default()
            };
            let report = run_noc(&dataset, predictor.as_ref(), &cfg)?;
            let mut out = create(&a.out)?;
            out.write_all(report.to_json()?.as_bytes())?;
            out.flush()?;
            if let Some(path) = &a.csv {
                report.write_csv(create(path)?)?;
            }
            for (k, v) in &report.aggregates.noc {
                println!("NoC{}@{k} = {v:.3}", cfg.max_clicks);
            }
            println!("#images >= 20 clicks: {}", report.aggregates.ge20);
            if let Some(n) = report.aggregates.ge100 {
                println!("#images >= 100 clicks: {n}");
            }
        }
        Command::Serve(a) => {
            let mut registry = PredictorRegistry::standard();
            registry.insert(a.predictor.name(), a.predictor.build(Parallelism::default())?);
            registry.set_default(a.predictor.name());
            let mut cfg = ServiceConfig::from_env().map_err(anyhow::Error::msg)?;
            cfg.encoding = a.encoding;
            cfg.static_dir = a.static_dir;
            let addr = SocketAddr::new(a.host, a.port);
            tokio::runtime::Runtime::new()?.block_on(clickseg_service::serve(addr, registry, cfg))?;
        }
    }
    Ok(())
}
