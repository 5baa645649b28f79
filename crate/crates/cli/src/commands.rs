use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cdskit::cds::{extract_cds, extract_cds_all, peel_off_extract, AlphaMode, ClusterResult, SolverParams, StartMode};
use cdskit::dcds::{
    batch_cds, constraint_expansion, fuse as dcds_fuse, grad_check, pair_cross_entropy, target_matrix, FusionParams,
    MiniBatch,
};
use cdskit::diffusion::{diffusion_pipeline, rank_all, DiffusionConfig, InitScheme, TransitionScheme};
use cdskit::fixtures;
use cdskit::fusion::{retrieve, FeatureChannel, FusionConfig};
use cdskit::graph::build_gaussian_affinity;
use cdskit::io::write_matrix;
use cdskit::metrics::{
    average_precision, bulls_eye, cmc, mean_average_precision, ns_score, segmentation_metrics, RankedList,
};
use cdskit::segmentation::{
    coseg_interactive, coseg_unsupervised, ids_to_mask, segment as run_segment, Adjacency, AffinityKind, Annotation,
    AnnotationMode, Label, SegmentationInstance, SegmentationParams,
};
use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::input::{self, GraphArgs};
use crate::{Log, Outcome};

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Fixed alpha instead of the spectral bound.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Relative margin of the automatic alpha over the bound.
    #[arg(long, default_value_t = 1e-4)]
    pub margin: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Stationarity tolerance on the change between iterates.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Number of perturbed barycenter starts; one plain barycenter start when omitted.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep the last iterate instead of snapping to a certified stationary point.
    #[arg(long)]
    pub no_polish: bool,
}

impl SolverArgs {
    pub fn params(&self) -> Result<SolverParams> {
        let p = SolverParams {
            alpha: self.alpha.map_or(AlphaMode::Auto, AlphaMode::Explicit),
            margin: self.margin,
            max_iters: self.max_iters,
            tol: self.tol,
            start: match self.starts {
                Some(count) => StartMode::MultiStart { count, seed: self.seed },
                None => StartMode::Barycenter,
            },
            polish: !self.no_polish,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }
}

fn cluster_json(r: &ClusterResult) -> Value {
    json!({
        "support": r.support,
        "membership": r.support.iter().map(|&i| r.x[i]).collect::<Vec<_>>(),
        "payoff": r.payoff,
        "kkt_residual": r.kkt_residual,
        "iterations": r.iterations,
        "converged": r.converged,
        "polished": r.polished,
    })
}

fn top(list: &RankedList, k: usize) -> Value {
    json!({
        "query": list.query,
        "ids": &list.ids[..k.min(list.ids.len())],
        "scores": &list.scores[..k.min(list.scores.len())],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClusterMethod {
    /// One extraction.
    Cds,
    /// One extraction per distinct solution found by multiple starts.
    All,
    /// Extract and remove clusters until every constraint is covered.
    Peel,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Constraint vertices as `1,4,7`, or `@file`. Empty extracts an unconstrained dominant set.
    #[arg(long, default_value = "")]
    constraints: String,
    /// Defaults to `peel` with constraints and `cds` without.
    #[arg(long, value_enum)]
    method: Option<ClusterMethod>,
    #[command(flatten)]
    solver: SolverArgs,
}

pub fn cluster(args: &ClusterArgs, log: &mut Log) -> Result<Outcome> {
    let a = args.graph.load()?;
    let s = input::id_source(&args.constraints, "constraints")?;
    input::check_ids(&s, a.n(), "constraints")?;
    let params = args.solver.params()?;
    log.stage("loading");
    let method = args.method.unwrap_or(if s.is_empty() {
        ClusterMethod::Cds
    } else {
        ClusterMethod::Peel
    });
    let (clusters, union) = match method {
        ClusterMethod::Cds => (vec![extract_cds(&a, &s, &params)?], None),
        ClusterMethod::All => (extract_cds_all(&a, &s, &params)?, None),
        ClusterMethod::Peel => {
            let r = peel_off_extract(&a, &s, &params)?;
            (r.clusters, Some(r.union_support))
        }
    };
    log.stage("extraction");
    let converged = clusters.iter().all(|c| c.converged);
    let mut report = json!({
        "n": a.n(),
        "constraints": s,
        "method": format!("{method:?}").to_lowercase(),
        "clusters": clusters.iter().map(cluster_json).collect::<Vec<_>>(),
    });
    if let Some(u) = union {
        report["union_support"] = json!(u);
    }
    Ok(Outcome { report, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SegmentMode {
    /// Foreground scribbles only.
    Scribble,
    /// Foreground and background scribbles, tolerating wrong foreground ones.
    FgBg,
    /// Bounding box given by the superpixels outside or on it.
    Bbox,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Superpixel features, one row each.
    #[arg(long)]
    features: PathBuf,
    /// Superpixel adjacency matrix.
    #[arg(long)]
    adjacency: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SegmentMode::Scribble)]
    mode: SegmentMode,
    /// Foreground scribble ids, inline or `@file`.
    #[arg(long)]
    fg: Option<String>,
    /// Background scribble ids, inline or `@file`.
    #[arg(long)]
    bg: Option<String>,
    /// Ids outside or on the bounding box, inline or `@file`.
    #[arg(long)]
    outside: Option<String>,
    /// Gaussian kernel width; self-tuning scales when omitted.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 7)]
    tune_k: usize,
    /// 0/1 ground-truth labels for scoring the mask.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Pixel count per superpixel, used to weight the metrics.
    #[arg(long)]
    pixels: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

fn ids_arg(v: &Option<String>, flag: &str) -> Result<Vec<usize>> {
    match v {
        Some(s) => input::id_source(s, flag),
        None => bail!("--{flag} is required in this mode"),
    }
}

pub fn segment(args: &SegmentArgs, log: &mut Log) -> Result<Outcome> {
    let features = input::features(&args.features)?;
    let n = features.rows();
    let adjacency = match &args.adjacency {
        Some(p) => {
            Adjacency::from_matrix(&input::matrix(p)?).with_context(|| format!("adjacency in {}", p.display()))?
        }
        None => Adjacency::from_pairs(n, &[])?,
    };
    let truth = args.truth.as_deref().map(input::mask).transpose()?;
    let pixels = args.pixels.as_deref().map(input::vector).transpose()?;
    let annotation = match args.mode {
        SegmentMode::Scribble => Annotation {
            mode: AnnotationMode::ScribbleFg,
            ids: ids_arg(&args.fg, "fg")?,
            labels: vec![],
        },
        SegmentMode::FgBg => {
            let fg = ids_arg(&args.fg, "fg")?;
            let bg = ids_arg(&args.bg, "bg")?;
            let labels = fg
                .iter()
                .map(|_| Label::Fg)
                .chain(bg.iter().map(|_| Label::Bg))
                .collect();
            Annotation {
                mode: AnnotationMode::ScribbleFgBg,
                ids: fg.into_iter().chain(bg).collect(),
                labels,
            }
        }
        SegmentMode::Bbox => Annotation {
            mode: AnnotationMode::BoundingBox,
            ids: ids_arg(&args.outside, "outside")?,
            labels: vec![],
        },
    };
    annotation.validate(n)?;
    let instance = SegmentationInstance::new(features, adjacency, pixels, truth)?;
    let params = SegmentationParams {
        affinity: match args.sigma {
            Some(sigma) => AffinityKind::Gaussian { sigma },
            None => AffinityKind::SelfTuning { k: args.tune_k },
        },
        solver: args.solver.params()?,
    };
    log.stage("loading");
    let out = run_segment(&instance, &annotation, &params)?;
    log.stage("segmentation");
    for w in &out.warnings {
        log.warn(w);
    }
    let mut report = json!({
        "n": n,
        "mask": out.mask,
        "clusters": out.clusters,
        "warnings": out.warnings,
    });
    if let Some(gt) = &instance.ground_truth {
        let region = (args.mode == SegmentMode::Bbox).then(|| {
            let outside = ids_to_mask(&annotation.ids, n);
            outside.iter().map(|o| !o).collect::<Vec<bool>>()
        });
        let m = segmentation_metrics(
            &ids_to_mask(&out.mask, n),
            gt,
            instance.pixel_counts.as_deref(),
            region.as_deref(),
        )?;
        report["metrics"] = serde_json::to_value(m)?;
    }
    Ok(Outcome {
        report,
        converged: true,
    })
}

#[derive(Debug, Args)]
pub struct CosegArgs {
    /// Directory of the first image: color, sift, hog, adjacency, objectness and optional truth.
    #[arg(long)]
    first: PathBuf,
    /// Directory of the second image.
    #[arg(long)]
    second: PathBuf,
    /// Foreground scribbles on the first image; switches to interactive mode.
    #[arg(long, requires = "bg")]
    fg: Option<String>,
    /// Background scribbles on the first image.
    #[arg(long, requires = "fg")]
    bg: Option<String>,
    #[command(flatten)]
    solver: SolverArgs,
}

pub fn coseg(args: &CosegArgs, log: &mut Log) -> Result<Outcome> {
    let images = [input::coseg_image(&args.first)?, input::coseg_image(&args.second)?];
    let solver = args.solver.params()?;
    let scribbles = match (&args.fg, &args.bg) {
        (Some(fg), Some(bg)) => {
            let fg = input::id_source(fg, "fg")?;
            let bg = input::id_source(bg, "bg")?;
            let labels = fg
                .iter()
                .map(|_| Label::Fg)
                .chain(bg.iter().map(|_| Label::Bg))
                .collect();
            let ann = Annotation {
                mode: AnnotationMode::ScribbleFgBg,
                ids: fg.into_iter().chain(bg).collect(),
                labels,
            };
            ann.validate(images[0].n())?;
            Some(ann)
        }
        _ => None,
    };
    log.stage("loading");
    let interactive = scribbles.is_some();
    let out = match scribbles {
        Some(ann) => coseg_interactive(&images, &[Some(ann), None], &solver)?,
        None => coseg_unsupervised(&images[0], &images[1], &solver)?,
    };
    log.stage("co-segmentation");
    for w in &out.warnings {
        log.warn(w);
    }
    let metrics: Vec<Value> = images
        .iter()
        .zip(&out.masks)
        .map(|(im, mask)| match &im.ground_truth {
            Some(gt) => Ok(serde_json::to_value(segmentation_metrics(
                &ids_to_mask(mask, im.n()),
                gt,
                None,
                None,
            )?)?),
            None => Ok(Value::Null),
        })
        .collect::<Result<_>>()?;
    let report = json!({
        "mode": if interactive { "interactive" } else { "unsupervised" },
        "masks": out.masks,
        "warnings": out.warnings,
        "metrics": metrics,
    });
    Ok(Outcome {
        report,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    A1,
    A2,
    A3,
    A4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transition {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
}

#[derive(Debug, Args)]
pub struct DiffuseArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Initial affinity: a1 affinity, a2 identity, a3 transition, a4 k-NN transition.
    #[arg(long, value_enum, default_value_t = Init::A1)]
    init: Init,
    /// Transition: b1 transition, b2 PageRank, b3 k-NN, b4 dominant neighbors, b5 affinity,
    /// b6 constrained dominant sets.
    #[arg(long, value_enum, default_value_t = Transition::B6)]
    transition: Transition,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Neighborhood size of the k-NN schemes.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.85)]
    teleport: f64,
    /// Class labels for scoring the rankings.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Bull's eye window; twice the largest class by default.
    #[arg(long)]
    r: Option<usize>,
    /// Ranked ids reported per query.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Write the diffused matrix here (`.bin` for the binary format).
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

fn retrieval_scores(lists: &[RankedList], labels: &[usize], r: usize) -> Value {
    let be: Vec<f64> = lists.iter().map(|l| bulls_eye(l, labels, r)).collect();
    json!({
        "map": mean_average_precision(lists, labels).map,
        "bulls_eye": be.iter().sum::<f64>() / be.len().max(1) as f64,
    })
}

fn default_window(labels: &[usize]) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    2 * counts.values().copied().max().unwrap_or(1)
}

pub fn diffuse(args: &DiffuseArgs, log: &mut Log) -> Result<Outcome> {
    let a = args.graph.load()?;
    let labels = args.labels.as_deref().map(input::labels).transpose()?;
    if let Some(l) = &labels {
        input::check_len(l, a.n(), "labels")?;
    }
    let config = DiffusionConfig {
        iterations: args.iterations,
        init: InitScheme::ALL[args.init as usize],
        transition: TransitionScheme::ALL[args.transition as usize],
        k: args.k,
        teleport: args.teleport,
        solver: args.solver.params()?,
    };
    config.validate()?;
    log.stage("loading");
    let v = diffusion_pipeline(&a, &config)?;
    log.stage("diffusion");
    let lists = rank_all(&v);
    let mut report = json!({
        "n": a.n(),
        "init": format!("{:?}", config.init),
        "transition": format!("{:?}", config.transition),
        "iterations": config.iterations,
        "rankings": lists.iter().map(|l| top(l, args.top)).collect::<Vec<_>>(),
    });
    if let Some(labels) = &labels {
        let r = args.r.unwrap_or_else(|| default_window(labels));
        report["scores"] = json!({
            "r": r,
            "before": retrieval_scores(&rank_all(a.matrix()), labels, r),
            "after": retrieval_scores(&lists, labels, r),
        });
    }
    if let Some(p) = &args.matrix_out {
        write_matrix(p, &v).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(Outcome {
        report,
        converged: true,
    })
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Similarity matrix of one feature, as `path` or `name=path`. Repeat per feature.
    #[arg(long = "channel", required = true)]
    channels: Vec<String>,
    /// Query ids, inline or `@file`; every item when omitted.
    #[arg(long)]
    queries: Option<String>,
    /// Neighbors proximity coefficient.
    #[arg(long, default_value_t = 0.9)]
    npc: f64,
    /// Weight of the fused similarity against the votes.
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    /// Scale of the outlier threshold.
    #[arg(long, default_value_t = 1.0)]
    lambda_scale: f64,
    /// Vote normalizers; the largest attainable count when omitted.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    iota: Option<f64>,
    /// Class labels for scoring the rankings.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CMC cutoffs.
    #[arg(long, default_value = "1,5")]
    ranks: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

pub fn fuse(args: &FuseArgs, log: &mut Log) -> Result<Outcome> {
    let channels: Vec<FeatureChannel> = args
        .channels
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let (name, path) = match spec.split_once('=') {
                Some((n, p)) => (n.to_string(), p),
                None => (format!("channel{i}"), spec.as_str()),
            };
            FeatureChannel::new(name, &input::matrix(Path::new(path))?).with_context(|| format!("channel {path}"))
        })
        .collect::<Result<_>>()?;
    let n = channels[0].n();
    if let Some(c) = channels.iter().find(|c| c.n() != n) {
        bail!("channel sizes differ: {n} and {}", c.n());
    }
    let queries = match &args.queries {
        Some(q) => input::id_source(q, "queries")?,
        None => (0..n).collect(),
    };
    input::check_ids(&queries, n, "queries")?;
    let labels = args.labels.as_deref().map(input::labels).transpose()?;
    if let Some(l) = &labels {
        input::check_len(l, n, "labels")?;
    }
    let ranks = input::ids(&args.ranks, "ranks")?;
    let config = FusionConfig {
        npc: args.npc,
        lambda_scale: args.lambda_scale,
        lambda: args.lambda,
        eta: args.eta,
        theta: args.theta,
        iota: args.iota,
        solver: args.solver.params()?,
    };
    config.validate()?;
    log.stage("loading");
    let results = queries
        .par_iter()
        .map(|&q| retrieve(q, &channels, &config))
        .collect::<cdskit::Result<Vec<_>>>()?;
    log.stage("fusion");
    let per_query: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "ranked": top(&r.ranked, args.top),
                "piw": r.piw,
                "channels": r.channels,
            })
        })
        .collect();
    let mut report = json!({
        "channels": channels.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "queries": per_query,
    });
    if let Some(labels) = &labels {
        let lists: Vec<RankedList> = results.into_iter().map(|r| r.ranked).collect();
        report["metrics"] = json!({
            "map": mean_average_precision(&lists, labels).map,
            "cmc": ranks.iter().zip(cmc(&lists, labels, &ranks)).map(|(r, v)| json!({"rank": r, "value": v})).collect::<Vec<_>>(),
            "ns_score": ns_score(&lists, labels),
        });
    }
    Ok(Outcome {
        report,
        converged: true,
    })
}

#[derive(Debug, Args)]
pub struct DcdsArgs {
    /// Mini-batch features, one item per row.
    #[arg(long, requires = "labels")]
    features: Option<PathBuf>,
    /// Identity label per item.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Gaussian kernel width of the batch affinity.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    /// Unrolled replicator steps.
    #[arg(long, default_value_t = 20)]
    unroll: usize,
    /// Verification similarity scores; with `--dissimilarity` the fusion loss is reported.
    #[arg(long, requires = "dissimilarity")]
    similarity: Option<PathBuf>,
    /// Verification dissimilarity scores.
    #[arg(long, requires = "similarity")]
    dissimilarity: Option<PathBuf>,
    /// Rank the batch for this probe with constraint expansion.
    #[arg(long)]
    probe: Option<usize>,
    /// Neighborhood size used by constraint expansion.
    #[arg(long, default_value_t = 3)]
    knn: usize,
    /// Check gradients on this many seeded random 5x5 affinities.
    #[arg(long)]
    grad_check: Option<usize>,
    /// Central-difference step of the gradient check.
    #[arg(long, default_value_t = 1e-6)]
    grad_step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn dcds(args: &DcdsArgs, log: &mut Log) -> Result<Outcome> {
    let params = FusionParams {
        beta: args.beta,
        delta: args.delta,
        unroll: args.unroll,
        ..Default::default()
    };
    params.validate()?;
    let batch = match (&args.features, &args.labels) {
        (Some(f), Some(l)) => Some(MiniBatch::new(input::features(f)?.with_labels(input::labels(l)?)?)?),
        _ => None,
    };
    let verification = match (&args.similarity, &args.dissimilarity) {
        (Some(s), Some(d)) => Some((input::matrix(s)?, input::matrix(d)?)),
        _ => None,
    };
    if batch.is_none() && args.grad_check.is_none() {
        bail!("give --features and --labels, or --grad-check");
    }
    if batch.is_none() && (verification.is_some() || args.probe.is_some()) {
        bail!("--similarity and --probe need a mini-batch");
    }
    log.stage("loading");
    let mut report = json!({ "beta": params.beta, "delta": params.delta, "unroll": params.unroll });
    if let Some(batch) = &batch {
        let a = build_gaussian_affinity(batch.features(), args.sigma)?;
        let y = batch_cds(&a, &params)?;
        let l = batch.labels();
        let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..batch.m() {
            for j in 0..batch.m() {
                if l[i] == l[j] {
                    within += y[(i, j)];
                    nw += 1;
                } else {
                    cross += y[(i, j)];
                    nc += 1;
                }
            }
        }
        report["batch"] = json!({
            "m": batch.m(),
            "identities": batch.k(),
            "per_identity": batch.omega(),
            "within_mean": within / nw as f64,
            "cross_mean": if nc > 0 { cross / nc as f64 } else { 0.0 },
            "membership": rows(&y),
        });
        if let Some((s, d)) = &verification {
            let (fs, fd) = dcds_fuse(&y, s, d, &params)?;
            report["batch"]["loss"] = json!(pair_cross_entropy(&fs, &fd, &target_matrix(l))?);
        }
        if let Some(p) = args.probe {
            let e = constraint_expansion(&a, p, args.knn, &SolverParams::default())?;
            report["expansion"] = json!({ "picked": e.picked, "ranked": e.ranked.ids });
        }
        log.stage("batch");
    }
    if let Some(count) = args.grad_check {
        let errors: Vec<f64> = (0..count as u64)
            .map(|i| {
                let a = fixtures::random_affinity(5, args.seed.wrapping_add(i));
                grad_check(a.matrix(), (i % 5) as usize, args.unroll, args.grad_step)
            })
            .collect::<cdskit::Result<_>>()?;
        report["grad_check"] = json!({
            "instances": count,
            "step": args.grad_step,
            "max_relative_error": errors.iter().copied().fold(0.0, f64::max),
            "errors": errors,
        });
        log.stage("gradient check");
    }
    Ok(Outcome {
        report,
        converged: true,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Ranked lists, one per line: the query id, then the gallery ids in order.
    #[arg(long, requires = "labels")]
    ranked: Option<PathBuf>,
    /// Class labels of the items in the ranked lists.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CMC cutoffs.
    #[arg(long, default_value = "1,5")]
    ranks: String,
    /// Bull's eye window; twice the largest class by default.
    #[arg(long)]
    r: Option<usize>,
    /// Predicted 0/1 mask.
    #[arg(long, requires = "truth")]
    mask: Option<PathBuf>,
    /// Ground-truth 0/1 mask.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Pixel count per superpixel.
    #[arg(long)]
    pixels: Option<PathBuf>,
    /// 0/1 evaluation region for the error rate.
    #[arg(long)]
    region: Option<PathBuf>,
}

pub fn metrics(args: &MetricsArgs, log: &mut Log) -> Result<Outcome> {
    if args.ranked.is_none() && args.mask.is_none() {
        bail!("give --ranked with --labels, or --mask with --truth");
    }
    let retrieval = match (&args.ranked, &args.labels) {
        (Some(r), Some(l)) => {
            let labels = input::labels(l)?;
            let lists = input::ranked_lists(r)?;
            for (i, list) in lists.iter().enumerate() {
                list.validate(labels.len())
                    .with_context(|| format!("{} line {}", r.display(), i + 1))?;
            }
            Some((lists, labels))
        }
        _ => None,
    };
    let ranks = input::ids(&args.ranks, "ranks")?;
    let segmentation = match (&args.mask, &args.truth) {
        (Some(m), Some(t)) => Some((
            input::mask(m)?,
            input::mask(t)?,
            args.pixels.as_deref().map(input::vector).transpose()?,
            args.region.as_deref().map(input::mask).transpose()?,
        )),
        _ => None,
    };
    log.stage("loading");
    let mut report = json!({});
    if let Some((lists, labels)) = &retrieval {
        let r = args.r.unwrap_or_else(|| default_window(labels));
        let summary = mean_average_precision(lists, labels);
        if summary.skipped > 0 {
            log.warn(&format!(
                "{} queries without relevant items were skipped in mAP",
                summary.skipped
            ));
        }
        let per_query: Vec<Value> = lists
            .iter()
            .map(|l| {
                json!({
                    "query": l.query,
                    "ap": average_precision(l, labels),
                    "bulls_eye": bulls_eye(l, labels, r),
                })
            })
            .collect();
        let be: Vec<f64> = lists.iter().map(|l| bulls_eye(l, labels, r)).collect();
        report["retrieval"] = json!({
            "queries": lists.len(),
            "map": summary.map,
            "skipped": summary.skipped,
            "cmc": ranks.iter().zip(cmc(lists, labels, &ranks)).map(|(r, v)| json!({"rank": r, "value": v})).collect::<Vec<_>>(),
            "ns_score": ns_score(lists, labels),
            "bulls_eye": { "r": r, "value": be.iter().sum::<f64>() / be.len().max(1) as f64 },
            "per_query": per_query,
        });
    }
    if let Some((mask, truth, pixels, region)) = &segmentation {
        let m = segmentation_metrics(mask, truth, pixels.as_deref(), region.as_deref())?;
        report["segmentation"] = serde_json::to_value(m)?;
    }
    Ok(Outcome {
        report,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    /// The 8-vertex test graph.
    G8,
    /// Three Gaussian blobs with labels.
    Blobs,
    /// A planted foreground on an 8x8 superpixel grid.
    Segmentation,
    /// Two images sharing a planted object.
    Coseg,
    /// A planted identity mini-batch.
    Batch,
    /// A class-pure and a shuffled similarity channel with labels.
    Channels,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(value_enum)]
    name: Fixture,
    /// Directory to write into; created when missing.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write matrices in the binary format.
    #[arg(long)]
    binary: bool,
}

struct Writer<'a> {
    dir: &'a Path,
    ext: &'static str,
    files: Vec<String>,
}

impl Writer<'_> {
    fn matrix(&mut self, stem: &str, m: &DMatrix<f64>) -> Result<()> {
        let p = self.dir.join(format!("{stem}.{}", self.ext));
        write_matrix(&p, m).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(p.display().to_string());
        Ok(())
    }

    fn column(&mut self, stem: &str, v: &[f64]) -> Result<()> {
        self.matrix(stem, &DMatrix::from_column_slice(v.len(), 1, v))
    }

    fn list<T: ToString>(&mut self, name: &str, v: &[T]) -> Result<()> {
        let p = self.dir.join(name);
        let text = v.iter().map(T::to_string).collect::<Vec<_>>().join(" ") + "\n";
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(p.display().to_string());
        Ok(())
    }

    fn features(&mut self, stem: &str, f: &cdskit::FeatureTable) -> Result<()> {
        self.matrix(stem, f.values())
    }
}

fn bits(v: &[bool]) -> Vec<u8> {
    v.iter().map(|&b| b as u8).collect()
}

pub fn fixtures(args: &FixturesArgs, _log: &mut Log) -> Result<Outcome> {
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut w = Writer {
        dir: &args.out_dir,
        ext: if args.binary { "bin" } else { "txt" },
        files: Vec::new(),
    };
    let seed = args.seed;
    match args.name {
        Fixture::G8 => w.matrix("g8", fixtures::g8().matrix())?,
        Fixture::Blobs => {
            let f = fixtures::three_blobs(seed);
            w.features("features", &f)?;
            w.list("labels.txt", f.labels().expect("blobs are labeled"))?;
        }
        Fixture::Segmentation => {
            let fx = fixtures::planted_segmentation(seed);
            w.features("features", &fx.instance.features)?;
            w.matrix("adjacency", &fx.instance.adjacency.to_matrix())?;
            w.column(
                "pixels",
                fx.instance.pixel_counts.as_deref().expect("fixture has pixel counts"),
            )?;
            w.list("truth.txt", &bits(fx.ground_truth()))?;
            w.list("fg.txt", &fx.fg_scribbles)?;
            w.list("bg.txt", &fx.bg_scribbles)?;
        }
        Fixture::Coseg => {
            for (stem, (r, c, s)) in [("first", (1, 1, 2 * seed)), ("second", (3, 2, 2 * seed + 1))] {
                let im = fixtures::planted_coseg_image(r, c, s);
                let dir = args.out_dir.join(stem);
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let mut sub = Writer {
                    dir: &dir,
                    ext: w.ext,
                    files: Vec::new(),
                };
                sub.features("color", &im.color)?;
                sub.features("sift", &im.sift)?;
                sub.features("hog", &im.hog)?;
                sub.matrix("adjacency", &im.adjacency.to_matrix())?;
                sub.column("objectness", &im.objectness)?;
                sub.list(
                    "truth.txt",
                    &bits(im.ground_truth.as_deref().expect("fixture has ground truth")),
                )?;
                w.files.append(&mut sub.files);
            }
        }
        Fixture::Batch => {
            let b = fixtures::planted_batch(16, 4, 8, 0.3, seed);
            w.features("features", b.features())?;
            w.list("labels.txt", b.labels())?;
        }
        Fixture::Channels => {
            let labels: Vec<usize> = (0..50).map(|i| i / 10).collect();
            let pure = fixtures::class_pure_channel(&labels, seed);
            w.matrix("channel_pure", &pure)?;
            w.matrix(
                "channel_shuffled",
                &fixtures::shuffled_channel(&pure, seed.wrapping_add(1)),
            )?;
            w.list("labels.txt", &labels)?;
        }
    }
    let report = json!({
        "fixture": format!("{:?}", args.name).to_lowercase(),
        "seed": seed,
        "files": w.files,
    });
    Ok(Outcome {
        report,
        converged: true,
    })
}
