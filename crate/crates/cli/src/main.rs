//! Command-line interface: compare embedding files, build layer heatmaps,
//! run the gradient-descent reducer, study minibatch convergence, evaluate
//! reduction quality, trace sensitivity to component removal, check
//! gradients, and generate synthetic datasets.

mod io;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use io::{load_embedding, save_embedding};
use manifest::RunManifest;
use nsa_core::*;

#[derive(Parser)]
#[command(
    name = "nsa",
    version,
    about = "Normalized space alignment for embedding matrices",
    after_help = "Embedding files are .npy (v1.0, <f4/<f8, C order) or numeric CSV;\n\
                  rows correspond across files by index. Set NSA_THREADS to cap\n\
                  worker parallelism (0 = auto)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Gnsa,
    Lnsa,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Gnsa,
    Lnsa,
    Nsa,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Pca,
    Gauss,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Least,
    Most,
}

#[derive(Args, Clone)]
struct NormArgs {
    /// Normalization: origin, centered, or quantile=<q>
    #[arg(long, default_value = "origin")]
    norm: String,
    /// Multiplier applied to the normalizer
    #[arg(long, default_value_t = 1.0)]
    radius_scale: f64,
}

impl NormArgs {
    fn policy(&self) -> anyhow::Result<NormalizationPolicy> {
        let mode = match self.norm.as_str() {
            "origin" => NormMode::OriginMax,
            "centered" => NormMode::CenteredMax,
            other => {
                let q = other
                    .strip_prefix("quantile=")
                    .ok_or_else(|| anyhow!("unknown norm '{other}', use origin|centered|quantile=<q>"))?
                    .parse::<f64>()
                    .context("parsing quantile value")?;
                NormMode::Quantile(q)
            }
        };
        Ok(NormalizationPolicy::new(mode, self.radius_scale)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare two embedding files: global, local, and composite values as JSON
    Compare {
        x: PathBuf,
        y: PathBuf,
        /// Neighbor count for the local term
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        norm: NormArgs,
        /// Local weight in the composite value
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        /// Global weight in the composite value
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        /// Write per-point global discrepancies to this CSV
        #[arg(long)]
        pointwise: Option<PathBuf>,
        /// How many top discrepancy indices to report
        #[arg(long, default_value_t = 10)]
        top_r: usize,
    },
    /// Pairwise dissimilarity grid between two directories of layer files
    Heatmap {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = MeasureArg::Gnsa)]
        measure: MeasureArg,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        norm: NormArgs,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce an embedding to a lower dimension by direct gradient descent
    Reduce {
        x: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 250)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Preserve graph geodesic distances with this neighbor count
        #[arg(long)]
        geodesic_k: Option<usize>,
        #[arg(long, value_enum, default_value_t = InitArg::Pca)]
        init: InitArg,
        /// Coordinate scale for the gauss init
        #[arg(long, default_value_t = 1.0)]
        init_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        norm: NormArgs,
        /// Output embedding path (.npy or .csv); a trace CSV and manifest sit beside it
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo study of the global value over paired index subsets
    MinibatchStudy {
        x: PathBuf,
        y: PathBuf,
        #[arg(long)]
        batch: usize,
        #[arg(long)]
        trials: usize,
        /// Recompute normalizers on every batch (biased, loss-mode realism)
        #[arg(long)]
        per_batch_norm: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Distance-preservation quality measures between a reference and a reduction
    Eval {
        x: PathBuf,
        z: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 10_000)]
        triplets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Discrepancy after removing 0..min(N,D)-1 principal components
    Sensitivity {
        x: PathBuf,
        /// Detection threshold (e.g. the inter-seed dissimilarity)
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_enum, default_value_t = OrderArg::Least)]
        order: OrderArg,
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients against central finite differences
    Gradcheck {
        #[arg(long, value_enum)]
        loss: LossArg,
        /// Points per random instance
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Generate a synthetic dataset
    Gen {
        #[command(subcommand)]
        dataset: GenCommand,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Swiss roll in 3-D with intrinsic (t, h) parameters
    Swissroll {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the n x 2 intrinsic parameters
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Isotropic Gaussian clusters
    Blobs {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write one label per row
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Shifted unit spheres inside an enclosing sphere of radius 5
    Spheres {
        #[arg(long, default_value_t = 100)]
        n_per_sphere: usize,
        #[arg(long, default_value_t = 10)]
        spheres: usize,
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
}

fn init_thread_pool() {
    if let Ok(raw) = std::env::var("NSA_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> anyhow::Result<PointCloud> {
    Ok(load_embedding(path, None)?)
}

fn print_json(value: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn heatmap_csv(h: &HeatmapMatrix) -> String {
    let mut out = String::new();
    out.push_str("layer");
    for label in &h.col_labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (label, row) in h.row_labels.iter().zip(h.values.iter()) {
        out.push_str(label);
        for v in row {
            out.push_str(&format!(",{v:.17e}"));
        }
        out.push('\n');
    }
    out
}

fn layer_dir(dir: &Path) -> anyhow::Result<Vec<(String, PointCloud)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("npy") | Some("csv")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .npy or .csv files in {}", dir.display());
    }
    paths
        .into_iter()
        .map(|p| {
            let label = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((label, load(&p)?))
        })
        .collect()
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Compare {
            x,
            y,
            k,
            norm,
            l,
            g,
            pointwise,
            top_r,
        } => {
            let policy = norm.policy()?;
            let cx = load(&x)?;
            let cy = load(&y)?;
            let global = gnsa(&cx, &cy, &policy)?;
            let local = lnsa_metric(&cx, &cy, k)?;
            let composite = g * global.total + l * local.metric;
            let manifest = RunManifest::new(
                "compare",
                json!({"k": k, "norm": norm.norm, "radius_scale": norm.radius_scale, "l": l, "g": g}),
                0,
                &[&x, &y],
            )?;
            if let Some(out) = &pointwise {
                let report = pointwise_report(&cx, &cy, &policy, top_r)?;
                let mut csv = String::from("index,gnsa_pointwise\n");
                for (i, v) in report.values.iter().enumerate() {
                    csv.push_str(&format!("{i},{v:.17e}\n"));
                }
                write_text(out, &csv)?;
                manifest.write_beside(out)?;
            }
            print_json(&json!({
                "gnsa": global.total,
                "lnsa_directed_xy": local.directed_xy,
                "lnsa_directed_yx": local.directed_yx,
                "lnsa_metric": local.metric,
                "nsa": composite,
                "k": k,
                "manifest": serde_json::to_value(&manifest)?,
            }))?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Heatmap {
            a,
            b,
            measure,
            k,
            norm,
            out,
        } => {
            let policy = norm.policy()?;
            let layers_a = layer_dir(&a)?;
            let layers_b = layer_dir(&b)?;
            let measure = match measure {
                MeasureArg::Gnsa => HeatmapMeasure::Gnsa,
                MeasureArg::Lnsa => HeatmapMeasure::LnsaMetric,
            };
            let h = layer_heatmap(&layers_a, &layers_b, measure, &policy, k)?;
            let csv = heatmap_csv(&h);
            let manifest = RunManifest::new(
                "heatmap",
                json!({"a": a.display().to_string(), "b": b.display().to_string(), "k": k,
                       "norm": norm.norm, "radius_scale": norm.radius_scale}),
                0,
                &[],
            )?;
            match out {
                Some(path) => {
                    write_text(&path, &csv)?;
                    manifest.write_beside(&path)?;
                }
                None => {
                    print!("{csv}");
                    eprintln!("{}", serde_json::to_string(&manifest)?);
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Reduce {
            x,
            dim,
            epochs,
            batch,
            lr,
            l,
            g,
            k,
            geodesic_k,
            init,
            init_scale,
            seed,
            norm,
            out,
        } => {
            let policy = norm.policy()?;
            let cx = load(&x)?;
            let cfg = ReducerConfig {
                latent_dim: dim,
                epochs,
                batch_size: batch.min(cx.n_points()),
                step_size: lr,
                init: match init {
                    InitArg::Pca => InitScheme::PrincipalProjection,
                    InitArg::Gauss => InitScheme::RandomGaussian { scale: init_scale },
                },
                geodesic: geodesic_k.map(|k_graph| GeodesicConfig { k_graph }),
                nsa: NsaConfig {
                    l,
                    g,
                    k,
                    policy,
                    seed,
                    ..NsaConfig::default()
                },
                ..ReducerConfig::new(dim)
            };
            let trace = reduce(&cx, &cfg)?;
            save_embedding(&trace.final_cloud, &out, io::format_for(&out))?;

            let mut trace_csv = String::from("epoch,loss,seconds\n");
            for (e, (loss, secs)) in trace
                .per_epoch_loss
                .iter()
                .zip(trace.epoch_seconds.iter())
                .enumerate()
            {
                trace_csv.push_str(&format!("{e},{loss:.17e},{secs:.6}\n"));
            }
            let trace_path = out.with_extension("trace.csv");
            write_text(&trace_path, &trace_csv)?;

            let manifest = RunManifest::new(
                "reduce",
                json!({"dim": dim, "epochs": epochs, "batch": batch, "lr": lr, "l": l, "g": g,
                       "k": k, "geodesic_k": geodesic_k, "init": match init { InitArg::Pca => "pca", InitArg::Gauss => "gauss" },
                       "norm": norm.norm, "radius_scale": norm.radius_scale}),
                seed,
                &[&x],
            )?;
            manifest.write_beside(&out)?;
            eprintln!(
                "final loss {:.6e} after {} epochs -> {}",
                trace.per_epoch_loss.last().unwrap(),
                epochs,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::MinibatchStudy {
            x,
            y,
            batch,
            trials,
            per_batch_norm,
            seed,
            norm,
        } => {
            let policy = norm.policy()?;
            let cx = load(&x)?;
            let cy = load(&y)?;
            let cfg = NsaConfig {
                policy,
                seed,
                ..NsaConfig::default()
            };
            let source = if per_batch_norm {
                NormalizerSource::PerBatch
            } else {
                NormalizerSource::FullDataset
            };
            let est = subset_estimate(&cx, &cy, batch, trials, &cfg, source)?;
            let manifest = RunManifest::new(
                "minibatch-study",
                json!({"batch": batch, "trials": trials, "per_batch_norm": per_batch_norm,
                       "norm": norm.norm, "radius_scale": norm.radius_scale}),
                seed,
                &[&x, &y],
            )?;
            print_json(&json!({
                "trials": est.trials,
                "batch_size": est.batch_size,
                "mean": est.mean,
                "full_value": est.full_value,
                "rel_error": est.rel_error,
                "per_trial": est.per_trial,
                "manifest": serde_json::to_value(&manifest)?,
            }))?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Eval {
            x,
            z,
            k,
            triplets,
            seed,
            norm,
        } => {
            let policy = norm.policy()?;
            let cx = load(&x)?;
            let cz = load(&z)?;
            let report = quality_report(&cx, &cz, k, triplets, seed, &policy)?;
            let manifest = RunManifest::new(
                "eval",
                json!({"k": k, "triplets": triplets, "norm": norm.norm, "radius_scale": norm.radius_scale}),
                seed,
                &[&x, &z],
            )?;
            print_json(&json!({
                "linear_correlation": report.linear_correlation,
                "triplet_accuracy": report.triplet_accuracy,
                "gnsa": report.gnsa,
                "lnsa_at_k": report.lnsa_at_k,
                "knn_consistency": report.knn_consistency,
                "k_used": report.k_used,
                "manifest": serde_json::to_value(&manifest)?,
            }))?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Sensitivity {
            x,
            threshold,
            k,
            order,
            norm,
            out,
        } => {
            let policy = norm.policy()?;
            let cx = load(&x)?;
            let order = match order {
                OrderArg::Least => ComponentOrder::LeastVarianceFirst,
                OrderArg::Most => ComponentOrder::MostVarianceFirst,
            };
            let curve = sensitivity_curve(&cx, &policy, k, threshold, order)?;
            let mut csv = String::from("m,nsa,above_threshold\n");
            for p in &curve {
                csv.push_str(&format!("{},{:.17e},{}\n", p.m, p.value, p.above_threshold));
            }
            let manifest = RunManifest::new(
                "sensitivity",
                json!({"threshold": threshold, "k": k, "norm": norm.norm, "radius_scale": norm.radius_scale}),
                0,
                &[&x],
            )?;
            match out {
                Some(path) => {
                    write_text(&path, &csv)?;
                    manifest.write_beside(&path)?;
                }
                None => {
                    print!("{csv}");
                    eprintln!("{}", serde_json::to_string(&manifest)?);
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Gradcheck { loss, n, seed, h, k } => {
            let cfg = NsaConfig {
                k,
                seed,
                ..NsaConfig::default()
            };
            let loss_kind = match loss {
                LossArg::Gnsa => LossKind::Gnsa,
                LossArg::Lnsa => LossKind::Lnsa,
                LossArg::Nsa => LossKind::Nsa,
            };
            // seeded random instance: a wide reference and a narrow candidate
            let x = gaussian_cloud(n, 10, seed.wrapping_mul(2).wrapping_add(1));
            let z = gaussian_cloud(n, 3, seed.wrapping_mul(2).wrapping_add(2));
            let report = grad_check(loss_kind, &x, &z, &cfg, h)?;
            let manifest = RunManifest::new(
                "gradcheck",
                json!({"loss": match loss { LossArg::Gnsa => "gnsa", LossArg::Lnsa => "lnsa", LossArg::Nsa => "nsa" },
                       "n": n, "h": h, "k": k}),
                seed,
                &[],
            )?;
            print_json(&json!({
                "max_abs_err": report.max_abs_err,
                "max_rel_err": report.max_rel_err,
                "argmax_coord": [report.argmax_coord.0, report.argmax_coord.1],
                "analytic_inf_norm": report.analytic_inf_norm,
                "numeric_inf_norm": report.numeric_inf_norm,
                "manifest": serde_json::to_value(&manifest)?,
            }))?;
            if report.max_rel_err > 1e-4 {
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Gen { dataset } => {
            match dataset {
                GenCommand::Swissroll {
                    n,
                    noise,
                    seed,
                    out,
                    params_out,
                } => {
                    let (cloud, params) = make_swiss_roll(n, noise, seed)?;
                    save_embedding(&cloud, &out, io::format_for(&out))?;
                    if let Some(p) = &params_out {
                        let params_cloud = PointCloud::new(params)?;
                        save_embedding(&params_cloud, p, io::format_for(p))?;
                    }
                    RunManifest::new(
                        "gen swissroll",
                        json!({"n": n, "noise": noise}),
                        seed,
                        &[],
                    )?
                    .write_beside(&out)?;
                }
                GenCommand::Blobs {
                    n,
                    d,
                    clusters,
                    separation,
                    seed,
                    out,
                    labels_out,
                } => {
                    let (cloud, labels) = make_blobs(n, d, clusters, separation, seed)?;
                    save_embedding(&cloud, &out, io::format_for(&out))?;
                    if let Some(p) = &labels_out {
                        write_labels(p, &labels)?;
                    }
                    RunManifest::new(
                        "gen blobs",
                        json!({"n": n, "d": d, "clusters": clusters, "separation": separation}),
                        seed,
                        &[],
                    )?
                    .write_beside(&out)?;
                }
                GenCommand::Spheres {
                    n_per_sphere,
                    spheres,
                    d,
                    seed,
                    out,
                    labels_out,
                } => {
                    let (cloud, labels) = make_spheres(n_per_sphere, spheres, d, seed)?;
                    save_embedding(&cloud, &out, io::format_for(&out))?;
                    if let Some(p) = &labels_out {
                        write_labels(p, &labels)?;
                    }
                    RunManifest::new(
                        "gen spheres",
                        json!({"n_per_sphere": n_per_sphere, "spheres": spheres, "d": d}),
                        seed,
                        &[],
                    )?
                    .write_beside(&out)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn gaussian_cloud(n: usize, d: usize, seed: u64) -> PointCloud {
    // deterministic standard-normal cloud for the gradient checker
    let (cloud, _) = make_blobs(n, d, 1, 0.0, seed).expect("valid blob parameters");
    let data = cloud.into_data();
    // single cluster at separation 0 is centered at a basis offset; remove it
    let shifted = {
        let mut m = data;
        let mean = m.mean_axis(ndarray::Axis(0)).expect("non-empty");
        m -= &mean.insert_axis(ndarray::Axis(0));
        m
    };
    PointCloud::new(shifted).expect("valid cloud")
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_labels(path: &Path, labels: &[usize]) -> anyhow::Result<()> {
    let mut csv = String::from("label\n");
    for l in labels {
        csv.push_str(&format!("{l}\n"));
    }
    write_text(path, &csv)
}
