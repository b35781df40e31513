use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rotatematch::config::parse_rotations;
use rotatematch::evaluation::{evaluate_datasets, save_metrics};
use rotatematch::local_features::{load_external_features, write_rmkp};
use rotatematch::matching::{load_matches, save_matches};
use rotatematch::pairing::{load_pairs, save_pairs};
use rotatematch::pipeline::{self, dataset_dir, with_workers};
use rotatematch::scene_graph::{build_clusters, load_clustering, save_clustering};
use rotatematch::synthetic::{generate_dataset, SynthConfig};
use rotatematch::{viz, DatasetManifest, Error, PipelineConfig};

#[derive(Parser)]
#[command(name = "rotatematch", version, about = "Rotation-augmented image pairing, matching and scene clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PipelineFlags {
    /// Key/value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["builtin", "external"])]
    backend: Option<String>,
    /// Comma-separated degrees, e.g. 0,90,180,270.
    #[arg(long)]
    rotations: Option<String>,
    #[arg(long)]
    match_gate: Option<usize>,
    #[arg(long)]
    min_pairs: Option<usize>,
    #[arg(long)]
    exhaustive_threshold: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline; one output directory per manifest under --out.
    Run {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Candidate pairs → <out>/pairs.jsonl
    Pair {
        manifest: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Keypoints and descriptors → <out>/features.rmkp
    Extract {
        manifest: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Two-stage matching of listed pairs → <out>/matches.jsonl
    Match {
        manifest: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Connected components of kept pairs → <out>/clusters.json
    Cluster {
        manifest: PathBuf,
        #[arg(long)]
        matches: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Scores predictions against ground truth → <out>/metrics.json
    Evaluate {
        /// Ground-truth clusters file, once per dataset.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        /// Predicted clusters file, in the same order as --gt.
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generates a synthetic dataset with ground truth.
    Synth {
        #[arg(long, default_value = "synthetic")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        scenes: usize,
        #[arg(long, default_value_t = 8)]
        views: usize,
        #[arg(long, default_value_t = 4)]
        outliers: usize,
    },
    /// Renders one pair's correspondences as SVG.
    Viz {
        matches: PathBuf,
        manifest: PathBuf,
        a: String,
        b: String,
        #[arg(long, default_value = "pair.svg")]
        out: PathBuf,
    },
}

fn resolve_config(flags: &PipelineFlags) -> Result<PipelineConfig, Error> {
    let mut cfg = match &flags.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let cwd = Path::new(".");
    let mut set = |key: &str, value: String| cfg.set(key, &value, cwd).map_err(Error::InvalidConfig);
    if let Some(b) = &flags.backend {
        set("backend", b.clone())?;
    }
    if let Some(r) = &flags.rotations {
        parse_rotations(r).map_err(Error::InvalidConfig)?;
        set("rotations", r.clone())?;
    }
    if let Some(v) = flags.match_gate {
        set("match_gate", v.to_string())?;
    }
    if let Some(v) = flags.min_pairs {
        set("min_pairs", v.to_string())?;
    }
    if let Some(v) = flags.exhaustive_threshold {
        set("exhaustive_threshold", v.to_string())?;
    }
    if let Some(v) = flags.jobs {
        set("jobs", v.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Error> {
    let m = DatasetManifest::load(path)?;
    pipeline::ensure_valid(&m)?;
    Ok(m)
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { manifests, out, flags } => {
            let cfg = resolve_config(&flags)?;
            for path in &manifests {
                let manifest = load_manifest(path)?;
                let dir = dataset_dir(&out, &manifest.dataset_id);
                let s = pipeline::run_dataset(&manifest, &cfg, &dir)?;
                println!(
                    "{}: {} images, {} pairs, {} kept, {} clusters, {} outliers -> {}",
                    s.dataset_id,
                    s.images,
                    s.pairs,
                    s.kept_pairs,
                    s.clusters,
                    s.outliers,
                    dir.display()
                );
            }
        }
        Command::Pair { manifest, out, flags } => {
            let cfg = resolve_config(&flags)?;
            let manifest = load_manifest(&manifest)?;
            let pairs = with_workers(cfg.jobs, || pipeline::pair_stage(&manifest, &cfg))?;
            create_dir(&out)?;
            save_pairs(&out.join(pipeline::PAIRS_FILE), &pairs)?;
            println!("{} pairs", pairs.len());
        }
        Command::Extract { manifest, out, flags } => {
            let cfg = resolve_config(&flags)?;
            let manifest = load_manifest(&manifest)?;
            let features = with_workers(cfg.jobs, || pipeline::extract_stage(&manifest, &cfg))?;
            create_dir(&out)?;
            write_rmkp(&out.join(pipeline::FEATURES_FILE), &features)?;
            println!("{} keypoints", features.iter().map(|f| f.len()).sum::<usize>());
        }
        Command::Match {
            manifest,
            pairs,
            features,
            out,
            flags,
        } => {
            let cfg = resolve_config(&flags)?;
            let manifest = load_manifest(&manifest)?;
            let pairs = load_pairs(&pairs)?;
            let features = load_external_features(&features, &manifest)?;
            let results = with_workers(cfg.jobs, || pipeline::match_stage(&pairs, &features, &cfg))?;
            create_dir(&out)?;
            save_matches(&out.join(pipeline::MATCHES_FILE), &results)?;
            println!("{} of {} pairs kept", results.iter().filter(|r| r.kept).count(), results.len());
        }
        Command::Cluster { manifest, matches, out } => {
            let manifest = load_manifest(&manifest)?;
            let clustering = build_clusters(&manifest.ids(), &load_matches(&matches)?)?;
            create_dir(&out)?;
            save_clustering(&out.join(pipeline::CLUSTERS_FILE), &clustering)?;
            println!("{} clusters, {} outliers", clustering.clusters.len(), clustering.outliers.len());
        }
        Command::Evaluate { gt, pred, out } => {
            if gt.len() != pred.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} --gt files but {} --pred files",
                    gt.len(),
                    pred.len()
                )));
            }
            let mut sets = Vec::new();
            for (g, p) in gt.iter().zip(&pred) {
                let name = p
                    .parent()
                    .and_then(|d| d.file_name())
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                sets.push((name, load_clustering(g)?, load_clustering(p)?));
            }
            let report = evaluate_datasets(&sets)?;
            create_dir(&out)?;
            save_metrics(&out.join("metrics.json"), &report)?;
            let a = &report.aggregate;
            println!("maa {:.4}\ncl {:.4}\nscore {:.4}", a.maa, a.cl, a.score);
        }
        Command::Synth {
            out,
            seed,
            scenes,
            views,
            outliers,
        } => {
            let cfg = SynthConfig {
                seed,
                scenes,
                views_per_scene: views,
                outliers,
                ..SynthConfig::default()
            };
            let (manifest, _) = generate_dataset(&cfg, &out)?;
            println!("{} images -> {}", manifest.len(), out.join("manifest.json").display());
        }
        Command::Viz {
            matches,
            manifest,
            a,
            b,
            out,
        } => {
            let results = load_matches(&matches)?;
            let result = viz::find_pair(&results, &a, &b)?;
            let manifest = DatasetManifest::load(&manifest)?;
            let image = |id: &str| {
                manifest
                    .images
                    .iter()
                    .find(|r| r.id == id)
                    .ok_or_else(|| Error::UnknownId(id.to_string()))?
                    .load()
            };
            viz::save_pair_svg(&out, result, &image(&result.pair.a)?, &image(&result.pair.b)?)?;
            println!("{}", viz::caption(result));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROTATEMATCH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
