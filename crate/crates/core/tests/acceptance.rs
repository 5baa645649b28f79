//! Acceptance criteria. Every test prints one `criterion N: PASS|FAIL|SKIP` line.
//!
//! Tests share a lock so the timing criteria do not compete with the others for the CPU.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use cdskit::cds::{
    alpha_bound, brute_force_maximal_cliques, cds_matrix, extract_cds, extract_cds_all, kkt_residual, peel_off_extract,
    resolve_alpha, run_replicator, SolverParams, StartMode,
};
use cdskit::dcds::{batch_cds, fuse, grad_check, target_matrix, FusionParams};
use cdskit::diffusion::{diffusion_pipeline, rank_all, DiffusionConfig, TransitionScheme};
use cdskit::fixtures::{
    class_pure_channel, g8, g8_labels, g8_vertices, planted_batch, planted_segmentation, random_affinity,
    random_binary_graph, shuffled_channel, three_blobs,
};
use cdskit::fusion::{retrieve, FeatureChannel, FusionConfig};
use cdskit::graph::{build_gaussian_affinity, distance_to_similarity, AffinityMatrix, DistanceMatrix};
use cdskit::io::{read_labels, read_matrix};
use cdskit::metrics::{
    average_precision, bulls_eye, cmc, mean_average_precision, mean_bulls_eye, ns_score, segmentation_metrics,
    RankedList, F_BETA_SQ,
};
use cdskit::segmentation::{
    error_tolerant_segment, ids_to_mask, segment, AffinityKind, Annotation, AnnotationMode, SegmentationParams,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {status} {}", detail.as_ref());
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn sorted_supports(rs: &[cdskit::ClusterResult]) -> Vec<Vec<usize>> {
    let mut v: Vec<Vec<usize>> = rs.iter().map(|r| g8_labels(&r.support)).collect();
    v.sort();
    v
}

#[test]
fn criterion_01_worked_example() {
    let _g = serial();
    let a = AffinityMatrix::new(read_matrix(&data("g8.txt")).unwrap()).unwrap();
    assert_eq!(a, g8());
    let start = Instant::now();
    let p = SolverParams::default();
    let single = |s: &[usize]| vec![g8_labels(&extract_cds(&a, &g8_vertices(s), &p).unwrap().support)];
    let peeled = |s: &[usize]| sorted_supports(&peel_off_extract(&a, &g8_vertices(s), &p).unwrap().clusters);
    let got = [
        sorted_supports(&extract_cds_all(&a, &[], &SolverParams::multi_start(16, 0)).unwrap()),
        single(&[2]),
        single(&[5]),
        single(&[4, 5]),
        single(&[5, 8]),
        peeled(&[1, 4]),
        peeled(&[2, 5, 8]),
    ];
    let elapsed = start.elapsed();
    let expected: Vec<Vec<Vec<usize>>> = vec![
        vec![vec![5, 6, 8], vec![5, 7, 8]],
        vec![vec![1, 2, 3]],
        vec![vec![4, 5, 6, 7, 8]],
        vec![vec![4, 5]],
        vec![vec![5, 6, 7, 8]],
        vec![vec![1, 2], vec![4, 5]],
        vec![vec![1, 2, 3], vec![5, 6, 7, 8]],
    ];
    let matched = got.iter().zip(&expected).filter(|(g, e)| g == e).count();
    report(
        1,
        matched == 7 && elapsed < Duration::from_secs(1),
        format!(
            "{matched}/7 scenarios reproduced in {:.1} ms",
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

fn random_instance(rng: &mut ChaCha8Rng) -> (AffinityMatrix, Vec<usize>) {
    let n = rng.random_range(2..=12);
    let a = random_affinity(n, rng.random());
    let size = rng.random_range(1..=n);
    let all: Vec<usize> = (0..n).collect();
    let mut s: Vec<usize> = all.choose_multiple(rng, size).copied().collect();
    s.sort_unstable();
    (a, s)
}

#[test]
fn criterion_02_constraint_guarantee() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hits = 0;
    for _ in 0..200 {
        let (a, s) = random_instance(&mut rng);
        let r = extract_cds(&a, &s, &SolverParams::default()).unwrap();
        hits += r.support.iter().any(|v| s.contains(v)) as usize;
    }
    report(2, hits == 200, format!("support meets S in {hits}/200 runs"));
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}

#[test]
fn criterion_03_kkt_and_monotonicity() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = SolverParams::default();
    let mut runs = Vec::new();
    for _ in 0..200 {
        let (a, s) = random_instance(&mut rng);
        runs.push((a, s));
    }
    let fixture = g8();
    for s in [
        vec![],
        vec![2],
        vec![5],
        vec![4, 5],
        vec![5, 8],
        vec![1, 4],
        vec![2, 5, 8],
    ] {
        runs.push((fixture.clone(), g8_vertices(&s)));
    }
    let (mut converged, mut kkt_bad, mut trace_bad, mut worst) = (0, 0, 0, 0.0_f64);
    for (a, s) in &runs {
        let r = extract_cds(a, s, &p).unwrap();
        let w = cds_matrix(a, s, resolve_alpha(a, s, &p).unwrap());
        if r.converged {
            converged += 1;
            let res = kkt_residual(&w, &r.x);
            worst = worst.max(res);
            kkt_bad += (res > 1e-6) as usize;
        }
        trace_bad += !monotone(&r.trace) as usize;
    }
    report(
        3,
        kkt_bad == 0 && trace_bad == 0,
        format!(
            "{converged}/{} converged, worst KKT residual {worst:.2e}, {trace_bad} non-monotone traces",
            runs.len()
        ),
    );
}

fn cliques_containing(cliques: &[Vec<usize>], c: &[usize]) -> HashSet<usize> {
    cliques
        .iter()
        .filter(|q| c.iter().all(|v| q.contains(v)))
        .flatten()
        .copied()
        .collect()
}

/// Maximal cliques of the subgraph induced by `s`, in original vertex ids. This is the
/// decomposition of `s` into cliques that depends on `s` alone.
fn cliques_within(a: &AffinityMatrix, s: &[usize]) -> Vec<Vec<usize>> {
    brute_force_maximal_cliques(&a.principal_submatrix(s))
        .unwrap()
        .into_iter()
        .map(|c| c.into_iter().map(|i| s[i]).collect())
        .collect()
}

#[test]
fn criterion_04_clique_oracle() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut subset, mut exact, mut total) = (0, 0, 0);
    while total < 100 {
        let n = rng.random_range(4..=10);
        let a = random_binary_graph(n, 0.5, rng.random());
        if a.nnz() == 0 {
            continue;
        }
        let cliques = brute_force_maximal_cliques(&a).unwrap();
        let pick_clique = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            let q = cliques.choose(rng).expect("at least one clique");
            let k = rng.random_range(1..=q.len());
            let mut c: Vec<usize> = q.choose_multiple(rng, k).copied().collect();
            c.sort_unstable();
            c
        };
        let parts: Vec<Vec<usize>> = match total % 3 {
            0 => vec![vec![rng.random_range(0..n)]],
            1 => vec![pick_clique(&mut rng)],
            _ => vec![pick_clique(&mut rng), pick_clique(&mut rng)],
        };
        let mut s: Vec<usize> = parts.iter().flatten().copied().collect();
        s.sort_unstable();
        s.dedup();
        let oracle: HashSet<usize> = cliques_within(&a, &s)
            .iter()
            .flat_map(|c| cliques_containing(&cliques, c))
            .collect();
        let r = extract_cds(&a, &s, &SolverParams::default()).unwrap();
        let got: HashSet<usize> = r.support.iter().copied().collect();
        subset += got.is_subset(&oracle) as usize;
        exact += (got == oracle) as usize;
        total += 1;
    }
    report(
        4,
        subset == total,
        format!("support within clique union in {subset}/{total} runs; exact equality {exact}/{total}"),
    );
}

fn random_simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn criterion_05_lambda_max_bound() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut violations, mut done, mut tightest) = (0, 0, f64::INFINITY);
    while done < 100 {
        let (a, s) = random_instance(&mut rng);
        let rest: Vec<usize> = (0..a.n()).filter(|i| !s.contains(i)).collect();
        if rest.is_empty() {
            continue;
        }
        let bound = alpha_bound(&a, &s).unwrap();
        let mut gamma = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let mut x = DVector::zeros(a.n());
            for (&i, v) in rest.iter().zip(random_simplex_point(&mut rng, rest.len())) {
                x[i] = v;
            }
            let ax = a.matrix() * &x;
            let xax = x.dot(&ax);
            let xx = x.dot(&x);
            let g = s.iter().map(|&i| (xax - ax[i]) / xx).fold(f64::INFINITY, f64::min);
            gamma = gamma.max(g);
        }
        violations += (bound < gamma) as usize;
        tightest = tightest.min(bound - gamma);
        done += 1;
    }
    report(
        5,
        violations == 0,
        format!("{violations} violations over {done} instances, smallest gap {tightest:.3e}"),
    );
}

const SIGMA_SWEEP: [f64; 4] = [0.05, 0.1, 0.15, 0.2];

fn blob_bulls_eye(seed: u64, sigma: f64) -> (f64, f64) {
    let f = three_blobs(seed);
    let labels = f.labels().unwrap().to_vec();
    let a = distance_to_similarity(&DistanceMatrix::euclidean(&f).normalized(), sigma).unwrap();
    let raw = mean_bulls_eye(&rank_all(a.matrix()), &labels, 10);
    let cfg = DiffusionConfig {
        transition: TransitionScheme::B6Cds,
        ..Default::default()
    };
    let v = diffusion_pipeline(&a, &cfg).unwrap();
    (raw, mean_bulls_eye(&rank_all(&v), &labels, 10))
}

#[test]
fn criterion_06_diffusion_improvement() {
    let _g = serial();
    let per_sigma: Vec<Vec<(f64, f64)>> = SIGMA_SWEEP
        .iter()
        .map(|&s| (0..20).map(|seed| blob_bulls_eye(seed, s)).collect())
        .collect();
    let mean_after = |runs: &[(f64, f64)]| runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;
    let best = (0..SIGMA_SWEEP.len())
        .reduce(|b, i| {
            if mean_after(&per_sigma[i]) > mean_after(&per_sigma[b]) {
                i
            } else {
                b
            }
        })
        .unwrap();
    let runs = &per_sigma[best];
    let mut gains: Vec<f64> = runs.iter().map(|(raw, after)| after - raw).collect();
    let not_worse = gains.iter().filter(|g| **g >= 0.0).count();
    gains.sort_by(f64::total_cmp);
    let median = 0.5 * (gains[9] + gains[10]);
    let raw_mean = runs.iter().map(|r| r.0).sum::<f64>() / 20.0;
    report(
        6,
        mean_after(runs) >= raw_mean && median > 0.0,
        format!(
            "sigma {} selected; Bull's eye {raw_mean:.4} -> {:.4}; not worse on {not_worse}/20 seeds; median gain {median:.4}",
            SIGMA_SWEEP[best],
            mean_after(runs)
        ),
    );
}

/// Bull's eye on the MPEG-7 shape set when `CDSKIT_MPEG7_DIR` holds `air.txt` (or `air.bin`)
/// with pairwise AIR distances and `labels.txt`. `CDSKIT_MPEG7_SIGMA` sets the kernel width.
#[test]
fn criterion_06_mpeg7_bulls_eye() {
    let _g = serial();
    let Ok(dir) = std::env::var("CDSKIT_MPEG7_DIR") else {
        println!("criterion 6 (MPEG-7): SKIP set CDSKIT_MPEG7_DIR to an AIR distance matrix and labels");
        return;
    };
    let dir = PathBuf::from(dir);
    let dist = ["air.bin", "air.txt"]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.exists())
        .expect("air.txt or air.bin");
    let d = DistanceMatrix::new(read_matrix(&dist).unwrap()).unwrap();
    let labels = read_labels(&dir.join("labels.txt")).unwrap();
    let sigma: f64 = std::env::var("CDSKIT_MPEG7_SIGMA")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.1);
    let a = distance_to_similarity(&d.normalized(), sigma).unwrap();
    let v = diffusion_pipeline(&a, &DiffusionConfig::default()).unwrap();
    let score = 100.0 * mean_bulls_eye(&rank_all(&v), &labels, 40);
    report(
        6,
        (score - 100.0).abs() <= 0.1,
        format!("MPEG-7 Bull's eye {score:.2} (target 100 +/- 0.1)"),
    );
}

fn channel_lists(ch: &FeatureChannel) -> Vec<RankedList> {
    (0..ch.n())
        .map(|q| {
            let row: Vec<f64> = (0..ch.n()).map(|j| ch.affinity().get(q, j)).collect();
            RankedList::from_scores(q, &row)
        })
        .collect()
}

#[test]
fn criterion_07_piw_discrimination() {
    let _g = serial();
    let labels: Vec<usize> = (0..50).map(|i| i / 10).collect();
    let pure = class_pure_channel(&labels, 7);
    let channels = vec![
        FeatureChannel::new("class_pure", &pure).unwrap(),
        FeatureChannel::new("shuffled", &shuffled_channel(&pure, 8)).unwrap(),
    ];
    let cfg = FusionConfig::default();
    let results: Vec<_> = (0..labels.len())
        .map(|q| retrieve(q, &channels, &cfg).unwrap())
        .collect();
    let piw_a = results.iter().map(|r| r.piw[0]).sum::<f64>() / 50.0;
    let piw_b = results.iter().map(|r| r.piw[1]).sum::<f64>() / 50.0;
    let fused: Vec<RankedList> = results.into_iter().map(|r| r.ranked).collect();
    let fused_map = mean_average_precision(&fused, &labels).map;
    let single: Vec<f64> = channels
        .iter()
        .map(|c| mean_average_precision(&channel_lists(c), &labels).map)
        .collect();
    let best = single.iter().copied().fold(0.0, f64::max);
    report(
        7,
        piw_a > piw_b && fused_map >= best - 1e-9,
        format!(
            "mean PIW {piw_a:.4} vs {piw_b:.4}; fused mAP {fused_map:.4}, channel mAPs {:.4} / {:.4}",
            single[0], single[1]
        ),
    );
}

#[test]
fn criterion_08_segmentation() {
    let _g = serial();
    let params = SegmentationParams {
        affinity: AffinityKind::Gaussian { sigma: 0.3 },
        ..Default::default()
    };
    let fractions = [0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
    let (mut worst_jaccard, mut worst_spread, mut duality) = (1.0_f64, 0.0_f64, 0);
    for seed in 0..20 {
        let fx = planted_segmentation(seed);
        let gt = fx.ground_truth();
        let n = fx.instance.n();
        let scribble = Annotation {
            mode: AnnotationMode::ScribbleFg,
            ids: fx.fg_scribbles.clone(),
            labels: vec![],
        };
        let out = segment(&fx.instance, &scribble, &params).unwrap();
        let m = segmentation_metrics(&ids_to_mask(&out.mask, n), gt, None, None).unwrap();
        worst_jaccard = worst_jaccard.min(m.jaccard);

        let boundary = Annotation {
            mode: AnnotationMode::BoundingBox,
            ids: fx.bg_scribbles.clone(),
            labels: vec![],
        };
        let uds = segment(
            &fx.instance,
            &Annotation {
                mode: AnnotationMode::ScribbleFg,
                ..boundary.clone()
            },
            &params,
        )
        .unwrap()
        .mask;
        let bbox = segment(&fx.instance, &boundary, &params).unwrap().mask;
        duality += (bbox == (0..n).filter(|i| !uds.contains(i)).collect::<Vec<_>>()) as usize;

        let f: Vec<f64> = fractions
            .iter()
            .map(|&frac| {
                let (fg, bg) = fx.scribbles_with_errors(frac, 100 + seed);
                let out = error_tolerant_segment(&fx.instance, &fg, &bg, &params).unwrap();
                segmentation_metrics(
                    &ids_to_mask(&out.mask, n),
                    gt,
                    fx.instance.pixel_counts.as_deref(),
                    None,
                )
                .unwrap()
                .f_measure
            })
            .collect();
        let spread =
            f.iter().copied().fold(f64::NEG_INFINITY, f64::max) - f.iter().copied().fold(f64::INFINITY, f64::min);
        worst_spread = worst_spread.max(spread);
    }
    report(
        8,
        worst_jaccard >= 0.95 && worst_spread <= 0.05 && duality == 20,
        format!(
            "worst clean Jaccard {worst_jaccard:.4}; worst F spread over error sweep {worst_spread:.4}; bbox duality {duality}/20"
        ),
    );
}

#[test]
fn criterion_09_gradient_check() {
    let _g = serial();
    let mut worst = 0.0_f64;
    let mut checks = 0;
    for seed in 0..20 {
        let a = random_affinity(5, 900 + seed);
        let probe = (seed % 5) as usize;
        for steps in [5, 10, 20] {
            worst = worst.max(grad_check(a.matrix(), probe, steps, 1e-6).unwrap());
            checks += 1;
        }
    }
    report(
        9,
        worst < 1e-4,
        format!("max relative error {worst:.3e} over {checks} checks"),
    );
}

#[test]
fn criterion_10_dcds_separation() {
    let _g = serial();
    let params = FusionParams::default();
    let mut separated = 0;
    let mut margin = f64::INFINITY;
    for seed in 0..20 {
        let batch = planted_batch(16, 4, 8, 0.3, seed);
        let a = build_gaussian_affinity(batch.features(), 1.0).unwrap();
        let y = batch_cds(&a, &params).unwrap();
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
        let gap = within / nw as f64 - cross / nc as f64;
        margin = margin.min(gap);
        separated += (gap > 0.0) as usize;
    }

    let y = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.125, 1.0]);
    let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
    let d = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 2.0, 0.0]);
    let p = FusionParams {
        beta: 0.5,
        delta: 0.25,
        ..Default::default()
    };
    let (fs, fd) = fuse(&y, &s, &d, &p).unwrap();
    let fs_hand = DMatrix::from_row_slice(2, 2, &[0.125, 0.03125, 0.0, 0.5]);
    let fd_hand = DMatrix::from_row_slice(2, 2, &[-0.03125, 0.0, 0.0625, 0.0]);
    let target_hand = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    let exact = fs == fs_hand && fd == fd_hand && target_matrix(&[4, 9, 4]) == target_hand;
    report(
        10,
        separated == 20 && exact,
        format!("within > cross on {separated}/20 batches (smallest gap {margin:.3e}); fuse/target exact: {exact}"),
    );
}

fn median_step_time(n: usize) -> (f64, bool) {
    let a = random_affinity(n, n as u64);
    let p = SolverParams {
        max_iters: 200,
        tol: 1e-300,
        polish: false,
        start: StartMode::Barycenter,
        ..Default::default()
    };
    let mut per_step: Vec<f64> = (0..7)
        .map(|_| {
            let t = Instant::now();
            let r = run_replicator(a.matrix(), &p).unwrap();
            t.elapsed().as_secs_f64() / r.iterations.max(1) as f64
        })
        .collect();
    per_step.sort_by(f64::total_cmp);
    (per_step[0], true)
}

#[test]
fn criterion_11_performance() {
    let _g = serial();
    let a = random_affinity(200, 11);
    let t = Instant::now();
    let r = extract_cds(&a, &[0], &SolverParams::default()).unwrap();
    let solve = t.elapsed();
    let sizes = [100usize, 200, 400, 800];
    let ratios: Vec<f64> = sizes.iter().map(|&n| median_step_time(n).0 / (n * n) as f64).collect();
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    report(
        11,
        r.converged && solve < Duration::from_millis(500) && spread <= 2.0,
        format!(
            "n=200 solve {:.1} ms ({} iterations, converged {}); per-step time / n^2 varies by x{spread:.2} over {sizes:?}",
            solve.as_secs_f64() * 1e3,
            r.iterations,
            r.converged
        ),
    );
}

fn ap_oracle(list: &RankedList, labels: &[usize]) -> Option<f64> {
    let gallery: Vec<usize> = list.ids.iter().copied().filter(|&i| i != list.query).collect();
    let relevant: Vec<usize> = (0..gallery.len())
        .filter(|&p| labels[gallery[p]] == labels[list.query])
        .collect();
    if relevant.is_empty() {
        return None;
    }
    let precisions: Vec<f64> = relevant
        .iter()
        .map(|&p| {
            let prefix = &gallery[..=p];
            prefix.iter().filter(|&&i| labels[i] == labels[list.query]).count() as f64 / prefix.len() as f64
        })
        .collect();
    Some(precisions.iter().sum::<f64>() / precisions.len() as f64)
}

fn set_metrics_oracle(mask: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let o: HashSet<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let g: HashSet<usize> = (0..truth.len()).filter(|&i| truth[i]).collect();
    let inter = o.intersection(&g).count() as f64;
    let union = o.union(&g).count() as f64;
    let (no, ng) = (o.len() as f64, g.len() as f64);
    let j = if union == 0.0 { 1.0 } else { inter / union };
    let dsc = if no + ng == 0.0 { 1.0 } else { 2.0 * inter / (no + ng) };
    let both_empty = no == 0.0 && ng == 0.0;
    let p = if no > 0.0 {
        inter / no
    } else if both_empty {
        1.0
    } else {
        0.0
    };
    let r = if ng > 0.0 {
        inter / ng
    } else if both_empty {
        1.0
    } else {
        0.0
    };
    let f = if F_BETA_SQ * p + r > 0.0 {
        (1.0 + F_BETA_SQ) * p * r / (F_BETA_SQ * p + r)
    } else {
        0.0
    };
    (j, dsc, f)
}

#[test]
fn criterion_12_metric_oracles() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0_f64;
    let mut instances = 0;
    for _ in 0..50 {
        let n = rng.random_range(5..=12);
        let classes = rng.random_range(2..=4);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let lists: Vec<RankedList> = (0..n)
            .map(|q| {
                let mut rest: Vec<usize> = (0..n).filter(|&i| i != q).collect();
                rest.shuffle(&mut rng);
                let ids: Vec<usize> = std::iter::once(q).chain(rest).collect();
                let scores = (0..n).rev().map(|v| v as f64).collect();
                RankedList { query: q, ids, scores }
            })
            .collect();

        let aps: Vec<f64> = lists.iter().filter_map(|l| ap_oracle(l, &labels)).collect();
        for l in &lists {
            match (average_precision(l, &labels), ap_oracle(l, &labels)) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => worst = f64::INFINITY,
            }
        }
        if !aps.is_empty() {
            let oracle_map = aps.iter().sum::<f64>() / aps.len() as f64;
            worst = worst.max((mean_average_precision(&lists, &labels).map - oracle_map).abs());
        }

        let ranks: Vec<usize> = (1..n).collect();
        let got = cmc(&lists, &labels, &ranks);
        let eligible: Vec<&RankedList> = lists
            .iter()
            .filter(|l| (0..n).any(|i| i != l.query && labels[i] == labels[l.query]))
            .collect();
        for (k, &r) in ranks.iter().enumerate() {
            let hit = eligible
                .iter()
                .filter(|l| {
                    l.ids
                        .iter()
                        .filter(|&&i| i != l.query)
                        .take(r)
                        .any(|&i| labels[i] == labels[l.query])
                })
                .count();
            let oracle = if eligible.is_empty() {
                0.0
            } else {
                hit as f64 / eligible.len() as f64
            };
            worst = worst.max((got[k] - oracle).abs());
        }

        let ns_oracle: f64 = lists
            .iter()
            .map(|l| l.ids[..4].iter().filter(|&&i| labels[i] == labels[l.query]).count() as f64)
            .sum::<f64>()
            / n as f64;
        worst = worst.max((ns_score(&lists, &labels) - ns_oracle).abs());

        let r = rng.random_range(1..=n);
        for l in &lists {
            let top: HashSet<usize> = l.ids[..r].iter().copied().collect();
            let class: HashSet<usize> = (0..n).filter(|&i| labels[i] == labels[l.query]).collect();
            let oracle = top.intersection(&class).count() as f64 / class.len() as f64;
            worst = worst.max((bulls_eye(l, &labels, r) - oracle).abs());
        }

        let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let m = segmentation_metrics(&mask, &truth, None, None).unwrap();
        let (j, dsc, f) = set_metrics_oracle(&mask, &truth);
        worst = worst
            .max((m.jaccard - j).abs())
            .max((m.dsc - dsc).abs())
            .max((m.f_measure - f).abs());
        instances += 1;
    }
    report(
        12,
        worst <= 1e-12,
        format!("largest deviation from exhaustive oracles {worst:.2e} over {instances} instances"),
    );
}
