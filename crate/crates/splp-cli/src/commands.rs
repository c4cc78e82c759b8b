use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use splp::detections::{
    self, generate_scene, sample_ground_truth, select_subset_scene, NoiseConfig, SceneConfig,
    SyntheticScene, UnaryNorm,
};
use splp::io::{read_json, write_json};
use splp::metrics::{self, MatchConfig};
use splp::model::{GroundTruthScene, ImageSize, PoseResult, ProblemInstance};
use splp::pairwise::{build_instance, AppearanceMode, HistogramConfig, PairwiseModel};
use splp::skeleton;
use splp::solver::{self, SolveStatus, SolverConfig};
use splp::training::{train_model, TrainingConfig};

use crate::{AppearanceArg, ModeArg, NoiseArgs, SolverArgs, UnaryNormArg};

impl NoiseArgs {
    fn to_config(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            loc_sigma: self.loc_sigma,
            scale_sigma: self.scale_sigma,
            unary_concentration: self.concentration,
            clutter_rate: self.clutter_rate,
            miss_rate: self.miss_rate,
            dup_mean: self.dup_mean,
            unary_norm: match self.unary_norm {
                UnaryNormArg::Softmax => UnaryNorm::Softmax,
                UnaryNormArg::Sigmoid => UnaryNorm::Sigmoid,
            },
            rng_seed: seed,
        }
    }
}

impl SolverArgs {
    fn to_config(&self) -> SolverConfig {
        SolverConfig {
            gap_tolerance: self.gap,
            max_nodes: self.max_nodes,
            max_wall_time: self.max_seconds,
            fractional_separation: self.fractional_separation,
            preinstall_structural: self.preinstall,
            cut_batch: splp::constraints::MAX_VIOLATIONS_PER_ROUND,
            rng_seed: self.seed,
        }
    }
}

impl AppearanceArg {
    fn to_mode(self) -> AppearanceMode {
        match self {
            AppearanceArg::None => AppearanceMode::None,
            AppearanceArg::Full => AppearanceMode::Full,
            AppearanceArg::Scalar => AppearanceMode::Scalar,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    scene: String,
    gt: String,
    noise_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    scene_count: usize,
    subset: usize,
    scene_config: SceneConfig,
    files: Vec<ManifestEntry>,
}

pub struct SynthOptions {
    pub out: PathBuf,
    pub scenes: usize,
    pub seed: u64,
    pub persons_min: usize,
    pub persons_max: usize,
    pub classes: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub scale: f64,
    pub occlusion_rate: f64,
    pub min_separation: f64,
    pub subset: usize,
    pub noise: NoiseArgs,
}

pub fn synth(opts: SynthOptions) -> Result<i32> {
    if opts.classes != skeleton::NUM_CLASSES && opts.classes != 8 {
        bail!("--classes must be 14 (full skeleton) or 8 (reduced)");
    }
    std::fs::create_dir_all(&opts.out)
        .with_context(|| format!("creating {}", opts.out.display()))?;
    let scene_config = SceneConfig {
        persons_min: opts.persons_min,
        persons_max: opts.persons_max,
        image: ImageSize {
            width: opts.image_width,
            height: opts.image_height,
        },
        scale: opts.scale,
        occlusion_rate: opts.occlusion_rate,
        min_separation: opts.min_separation,
        num_classes: opts.classes,
        ..SceneConfig::default()
    };
    let classes = detections::part_classes_for(&scene_config);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut files = Vec::with_capacity(opts.scenes);
    for i in 0..opts.scenes {
        let gt = sample_ground_truth(&scene_config, &mut rng);
        let noise_seed: u64 = rng.gen();
        let noise = opts.noise.to_config(noise_seed);
        let scene = generate_scene(&gt, &classes, &noise)?;
        let scene = select_subset_scene(&scene, opts.subset);
        let scene_name = format!("scene_{i:04}.json");
        let gt_name = format!("gt_{i:04}.json");
        write_json(&opts.out.join(&scene_name), &scene)?;
        write_json(&opts.out.join(&gt_name), &gt)?;
        files.push(ManifestEntry {
            scene: scene_name,
            gt: gt_name,
            noise_seed,
        });
    }
    let manifest = Manifest {
        seed: opts.seed,
        scene_count: opts.scenes,
        subset: opts.subset,
        scene_config,
        files,
    };
    write_json(&opts.out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} scene/gt pairs to {}",
        opts.scenes,
        opts.out.display()
    );
    Ok(0)
}

/// Files in `dir` matching `prefix_NNNN.json`, keyed by the numeric id.
fn indexed_files(dir: &Path, prefix: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let entries =
        std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(rest) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('_'))
            .and_then(|r| r.strip_suffix(".json"))
        {
            if rest.chars().all(|c| c.is_ascii_digit()) {
                out.push((rest.to_string(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn train(
    scenes_dir: &Path,
    out: &Path,
    sigma: f64,
    s_bins: usize,
    s_max: f64,
    r_bins: usize,
    appearance: AppearanceArg,
) -> Result<i32> {
    let files = indexed_files(scenes_dir, "scene")?;
    if files.is_empty() {
        bail!("no scene_*.json files under {}", scenes_dir.display());
    }
    let scenes: Vec<SyntheticScene> = files
        .iter()
        .map(|(_, path)| read_json(path).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let cfg = TrainingConfig {
        sigma,
        histogram: HistogramConfig {
            s_bins,
            s_max,
            r_bins,
        },
        appearance: appearance.to_mode(),
    };
    let model = train_model(&scenes, &cfg)?;
    write_json(out, &model)?;
    println!(
        "trained {} class-pair models from {} scenes -> {}",
        model.theta.len(),
        scenes.len(),
        out.display()
    );
    Ok(0)
}

pub fn solve(
    scene_path: &Path,
    model_path: &Path,
    mode: ModeArg,
    poses_out: &Path,
    report_out: Option<&Path>,
    log_out: Option<&Path>,
    solver_args: &SolverArgs,
) -> Result<i32> {
    let scene: SyntheticScene = read_json(scene_path)?;
    let model: PairwiseModel = read_json(model_path)?;
    let cfg = solver_args.to_config();
    let inst = build_instance(&scene.detections, &model, mode.to_mode())?;
    let (solution, report) = solver::solve(&inst, &cfg)?;
    let poses = solver::extract_poses(&solution, &scene.detections)?;
    write_json(poses_out, &poses)?;
    if let Some(path) = report_out {
        write_json(path, &report)?;
    }
    if let Some(path) = log_out {
        let mut lines = String::new();
        for record in &report.log {
            lines.push_str(&serde_json::to_string(record)?);
            lines.push('\n');
        }
        std::fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "status {:?}: objective {:.6}, bound {:.6}, gap {:.4}%, {} persons, {} nodes",
        report.status,
        report.best_objective,
        report.lower_bound,
        report.gap * 100.0,
        poses.persons.len(),
        report.nodes_explored,
    );
    Ok(match report.status {
        SolveStatus::Optimal | SolveStatus::GapReached => 0,
        SolveStatus::Limit => 2,
    })
}

#[derive(Serialize)]
struct SingleReport {
    class_names: Vec<String>,
    pck_per_class: Vec<f64>,
    pck_mean: f64,
    auc: f64,
    stick_names: Vec<String>,
    pcp_per_stick: Vec<f64>,
    pcp_mean: f64,
}

#[derive(Serialize)]
struct MultiReport {
    class_names: Vec<String>,
    ap_per_class: Vec<f64>,
    mean_ap: f64,
    aop: f64,
    person_count_accuracy: f64,
}

fn class_names(num_classes: usize) -> Vec<String> {
    let named = if num_classes == skeleton::NUM_CLASSES {
        skeleton::part_classes()
    } else if num_classes == 8 {
        skeleton::part_classes_reduced()
    } else {
        return (0..num_classes).map(|i| format!("c{i}")).collect();
    };
    named.into_iter().map(|c| c.name).collect()
}

pub fn eval(
    pred_dir: &Path,
    gt_dir: &Path,
    mode: ModeArg,
    out: Option<&Path>,
    pck_threshold: f64,
    pckh_threshold: f64,
    pcp_threshold: f64,
) -> Result<i32> {
    let preds = indexed_files(pred_dir, "poses")?;
    let gts = indexed_files(gt_dir, "gt")?;
    let pred_ids: Vec<&String> = preds.iter().map(|(id, _)| id).collect();
    let gt_ids: Vec<&String> = gts.iter().map(|(id, _)| id).collect();
    if pred_ids != gt_ids {
        let missing_gt: Vec<&&String> =
            pred_ids.iter().filter(|id| !gt_ids.contains(id)).collect();
        let missing_pred: Vec<&&String> =
            gt_ids.iter().filter(|id| !pred_ids.contains(id)).collect();
        bail!(
            "prediction/ground-truth sets differ: missing gt for {missing_gt:?}, missing predictions for {missing_pred:?}"
        );
    }
    if preds.is_empty() {
        bail!("no poses_*.json under {}", pred_dir.display());
    }

    let poses: Vec<PoseResult> = preds
        .iter()
        .map(|(_, p)| read_json(p).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let truths: Vec<GroundTruthScene> = gts
        .iter()
        .map(|(_, p)| read_json(p).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let scenes: Vec<(&PoseResult, &GroundTruthScene)> =
        poses.iter().zip(truths.iter()).collect();

    let cfg = MatchConfig {
        pck_threshold,
        pckh_threshold,
        pcp_threshold,
        ..MatchConfig::default()
    };
    let num_classes = truths
        .iter()
        .flat_map(|gt| gt.persons.iter())
        .flat_map(|p| p.parts.iter())
        .map(|p| p.class_id + 1)
        .max()
        .unwrap_or(0);
    let names = class_names(num_classes);

    match mode {
        ModeArg::Single => {
            let mut pck = metrics::PckCounts::new(num_classes);
            for (pred, gt) in &scenes {
                pck.merge(&metrics::pck_counts(pred, gt, &cfg, cfg.pck_threshold)?);
            }
            let curve = metrics::pck_curve(&scenes, &cfg)?;
            let auc = metrics::auc(&curve, &cfg.auc_range);
            let sticks = skeleton::sticks_for(num_classes);
            let mut pcp = metrics::PcpCounts::default();
            for (pred, gt) in &scenes {
                pcp.merge(&metrics::pcp_counts(pred, gt, &cfg, &sticks)?);
            }
            let report = SingleReport {
                class_names: names.clone(),
                pck_per_class: pck.per_class(),
                pck_mean: pck.mean(),
                auc,
                stick_names: sticks.iter().map(|s| s.name.to_string()).collect(),
                pcp_per_stick: pcp.per_stick(),
                pcp_mean: pcp.mean(),
            };
            let mut columns = names;
            columns.push("mean".into());
            let mut pck_row = report.pck_per_class.clone();
            pck_row.push(report.pck_mean);
            print!("{}", metrics::text_table(&columns, &[("PCK".into(), pck_row)]));
            let mut stick_columns = report.stick_names.clone();
            stick_columns.push("mean".into());
            let mut pcp_row = report.pcp_per_stick.clone();
            pcp_row.push(report.pcp_mean);
            print!(
                "{}",
                metrics::text_table(&stick_columns, &[("PCP".into(), pcp_row)])
            );
            println!("AUC {:5.1}", report.auc * 100.0);
            if let Some(path) = out {
                write_json(path, &report)?;
            }
        }
        ModeArg::Multi => {
            let map = metrics::map_multi(&scenes, &cfg)?;
            let aop = metrics::aop(&scenes, &cfg)?;
            let pca = metrics::person_count_accuracy(&scenes);
            let report = MultiReport {
                class_names: names.clone(),
                ap_per_class: map.per_class_ap.clone(),
                mean_ap: map.mean_ap,
                aop,
                person_count_accuracy: pca,
            };
            let mut columns = names;
            columns.push("mAP".into());
            let mut row = report.ap_per_class.clone();
            row.push(report.mean_ap);
            print!("{}", metrics::text_table(&columns, &[("AP".into(), row)]));
            println!("AOP {:5.1}", report.aop * 100.0);
            println!("person-count accuracy {:5.1}", report.person_count_accuracy * 100.0);
            if let Some(path) = out {
                write_json(path, &report)?;
            }
        }
    }
    Ok(0)
}

pub fn oracle(
    instance: Option<&Path>,
    scene: Option<&Path>,
    model: Option<&Path>,
    mode: ModeArg,
) -> Result<i32> {
    let inst: ProblemInstance = match (instance, scene, model) {
        (Some(path), _, _) => read_json(path)?,
        (None, Some(scene_path), Some(model_path)) => {
            let scene: SyntheticScene = read_json(scene_path)?;
            let model: PairwiseModel = read_json(model_path)?;
            build_instance(&scene.detections, &model, mode.to_mode())?
        }
        _ => bail!("oracle needs either --instance or --scene with --model"),
    };
    let (_, brute_obj) = solver::brute_force(&inst)?;
    let cfg = SolverConfig {
        gap_tolerance: 1e-12,
        ..SolverConfig::default()
    };
    let (_, report) = solver::solve(&inst, &cfg)?;
    println!("brute force optimum: {brute_obj:.9}");
    println!(
        "solver objective:    {:.9} (status {:?}, {} nodes, {} cuts)",
        report.best_objective, report.status, report.nodes_explored, report.cuts_added
    );
    let diff = (report.best_objective - brute_obj).abs();
    if diff <= 1e-9 {
        println!("match within 1e-9");
        Ok(0)
    } else {
        println!("MISMATCH: |difference| = {diff:.3e}");
        Ok(3)
    }
}

#[derive(Serialize)]
struct BenchRow {
    detections: usize,
    classes: usize,
    status: SolveStatus,
    objective: f64,
    lower_bound: f64,
    gap: f64,
    nodes: usize,
    cuts: usize,
    lp_pivots: u64,
    build_secs: f64,
    solve_secs: f64,
}

#[derive(Serialize)]
struct BenchReport {
    seed: u64,
    gap_tolerance: f64,
    max_seconds: f64,
    rows: Vec<BenchRow>,
}

/// Builds the operating-point instance through the full pipeline (train a
/// model on a small corpus, generate a crowded scene, select the subset)
/// and times the solve.
pub fn bench(
    detections_target: usize,
    num_classes: usize,
    seed: u64,
    gap: f64,
    max_seconds: f64,
    out: Option<&Path>,
) -> Result<i32> {
    if num_classes != skeleton::NUM_CLASSES && num_classes != 8 {
        bail!("--classes must be 14 or 8");
    }
    let scene_config = SceneConfig {
        persons_min: 3,
        persons_max: 5,
        num_classes,
        ..SceneConfig::default()
    };
    let classes = detections::part_classes_for(&scene_config);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // Training corpus.
    let train_scenes: Vec<SyntheticScene> = (0..20)
        .map(|_| {
            let gt = sample_ground_truth(&scene_config, &mut rng);
            let noise = NoiseConfig {
                rng_seed: rng.gen(),
                ..NoiseConfig::default()
            };
            generate_scene(&gt, &classes, &noise)
        })
        .collect::<splp::Result<_>>()?;
    let model = train_model(&train_scenes, &TrainingConfig::default())?;

    // Crowded benchmark scene, filled until the subset target is reachable.
    let bench_gt = sample_ground_truth(
        &SceneConfig {
            persons_min: 5,
            persons_max: 5,
            ..scene_config.clone()
        },
        &mut rng,
    );
    let noise = NoiseConfig {
        dup_mean: 2.0,
        clutter_rate: 12.0,
        rng_seed: rng.gen(),
        ..NoiseConfig::default()
    };
    let scene = generate_scene(&bench_gt, &classes, &noise)?;
    let scene = select_subset_scene(&scene, detections_target);

    let t0 = std::time::Instant::now();
    let inst = build_instance(&scene.detections, &model, splp::model::Mode::MultiPerson)?;
    let build_secs = t0.elapsed().as_secs_f64();

    let cfg = SolverConfig {
        gap_tolerance: gap,
        max_wall_time: max_seconds,
        ..SolverConfig::default()
    };
    let t1 = std::time::Instant::now();
    let (_, report) = solver::solve(&inst, &cfg)?;
    let solve_secs = t1.elapsed().as_secs_f64();

    let row = BenchRow {
        detections: scene.detections.num_detections(),
        classes: num_classes,
        status: report.status,
        objective: report.best_objective,
        lower_bound: report.lower_bound,
        gap: report.gap,
        nodes: report.nodes_explored,
        cuts: report.cuts_added,
        lp_pivots: report.lp_iterations,
        build_secs,
        solve_secs,
    };
    println!(
        "|D| {:4}  |C| {:2}  status {:?}  obj {:.4}  LB {:.4}  gap {:.3}%  nodes {}  cuts {}  pivots {}  build {:.2}s  solve {:.2}s",
        row.detections,
        row.classes,
        row.status,
        row.objective,
        row.lower_bound,
        row.gap * 100.0,
        row.nodes,
        row.cuts,
        row.lp_pivots,
        row.build_secs,
        row.solve_secs,
    );
    let bench_report = BenchReport {
        seed,
        gap_tolerance: gap,
        max_seconds,
        rows: vec![row],
    };
    if let Some(path) = out {
        write_json(path, &bench_report)?;
    }
    Ok(0)
}

