use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use photoba::ba::{FusionMode, SolverConfig};
use photoba::eval::{ate, Trajectory, DEFAULT_MAX_DT};
use photoba::graph::build_graph;
use photoba::io::{load_dataset_with, load_trajectory, save_trajectory, Dataset, Manifest};
use photoba::pipeline::{inputs_from_dataset, refine as run_refine, RefineOptions};
use photoba::selfalign::{sweep, AlignmentPair, SweepConfig};
use photoba::sensor::ProjectionModel;
use photoba::synth::{box_room_trajectory, generate_dataset, PerturbationSpec, SynthSpec};
use photoba::Error;

use crate::report::RunReport;
use crate::{
    Builtin, EvaluateArgs, GraphDumpArgs, RefineArgs, SelfalignArgs, SensorSet, SolverArgs, SynthArgs, ThresholdArgs,
};

/// Library errors map to their family's code; anything else (e.g. failing
/// to write an output) is an I/O failure.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) => err.family().exit_code() as u8,
        None => photoba::ErrorFamily::Io.exit_code() as u8,
    }
}

fn apply_thresholds(m: &mut Manifest, t: &ThresholdArgs) {
    if let Some(v) = t.max_angle_deg {
        m.graph.max_angle = v.to_radians();
    }
    if let Some(v) = t.max_translation {
        m.graph.max_translation = v;
    }
    if let Some(v) = t.min_overlap {
        m.graph.min_overlap_ratio = v;
    }
    if t.no_sequential {
        m.graph.sequential = false;
    }
    if let Some(s) = &t.scales {
        m.scales = s.clone();
    }
}

fn apply_solver(cfg: &mut SolverConfig, s: &SolverArgs) -> Result<()> {
    if let Some(v) = &s.iterations {
        cfg.max_iterations_per_level = v.clone();
    }
    if let Some(v) = s.huber_delta {
        cfg.huber_delta = v;
    }
    if let Some(w) = &s.omega {
        let [i, d, n] = w[..] else {
            return Err(Error::Config(format!("--omega takes three weights, got {}", w.len())).into());
        };
        cfg.omega.intensity = i;
        cfg.omega.depth = d;
        cfg.omega.normal = [n; 3];
    }
    if let Some(v) = s.lambda {
        cfg.lm_initial_lambda = v;
    }
    if let Some(v) = s.termination {
        cfg.termination_rel_decrease = v;
    }
    if let Some(v) = s.occlusion_tolerance {
        cfg.occlusion_depth_tolerance = v;
    }
    if let Some(v) = s.pixel_stride {
        cfg.pixel_stride = v;
    }
    cfg.validate()?;
    Ok(())
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn refine(a: &RefineArgs) -> Result<()> {
    let mut manifest = Manifest::load(&a.manifest)?;
    apply_thresholds(&mut manifest, &a.thresholds);
    apply_solver(&mut manifest.solver, &a.solver)?;
    if let Some(id) = &a.sensor {
        manifest.sensors.retain(|s| &s.id == id);
        if manifest.sensors.is_empty() {
            return Err(Error::Config(format!("no sensor `{id}` in {}", a.manifest.display())).into());
        }
    }
    let started = Instant::now();
    let ds = load_dataset_with(manifest.clone(), manifest_root(&a.manifest))?;
    let load_seconds = started.elapsed().as_secs_f64();

    let fusion: FusionMode = a.fusion.into();
    let opts = RefineOptions {
        levels: a.levels,
        fusion,
        graph: manifest.graph,
        solver: manifest.solver.clone(),
    };
    let result = run_refine(&inputs_from_dataset(&ds), &opts)?;
    let refined = Trajectory::from_poses(&ds.trajectory.timestamps(), &result.poses)?;

    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    save_trajectory(&refined, &a.out.join("trajectory_refined.txt"))?;
    if let Some(p) = &a.graph_dump {
        write_file(
            p,
            &graph_text(result.graphs.iter().map(|(id, g)| (id.as_str(), g.dump()))),
        )?;
    }

    let (initial_ate, final_ate) = match &ds.groundtruth {
        Some(gt) => (
            Some(ate(&ds.trajectory, gt, DEFAULT_MAX_DT)?.rmse),
            Some(ate(&refined, gt, DEFAULT_MAX_DT)?.rmse),
        ),
        None => (None, None),
    };
    let stages = stage_labels(&ds, fusion, result.report.levels.len());
    let report = RunReport {
        manifest: a.manifest.display().to_string(),
        sensors: ds.sensors.iter().map(|s| s.id.clone()).collect(),
        fusion: (ds.sensors.len() == 2).then(|| format!("{fusion:?}").to_lowercase()),
        frames: ds.trajectory.len(),
        edges: result.edge_count(),
        initial_ate,
        final_ate,
        load_seconds,
        levels: result.report.levels.clone(),
        stages,
        config: manifest.to_toml(),
    };
    write_file(&a.out.join("report.txt"), &report.to_text())?;
    write_file(&a.out.join("report.json"), &report.to_json())?;
    print!("{}", report.summary());
    Ok(())
}

/// Which sensors each solved level used.
fn stage_labels(ds: &Dataset, fusion: FusionMode, levels: usize) -> Vec<String> {
    let ids: Vec<&str> = ds.sensors.iter().map(|s| s.id.as_str()).collect();
    match (ids.as_slice(), fusion) {
        ([one], _) => vec![one.to_string(); levels],
        (_, FusionMode::Coupled) => vec![ids.join("+"); levels],
        (_, FusionMode::Consecutive) => {
            // the spherical sensor runs first
            let lidar = ds
                .sensors
                .iter()
                .find(|s| s.intrinsics.model == ProjectionModel::Spherical);
            let rgbd = ds
                .sensors
                .iter()
                .find(|s| s.intrinsics.model == ProjectionModel::Pinhole);
            let (first, second) = match (lidar, rgbd) {
                (Some(l), Some(r)) => (l.id.clone(), r.id.clone()),
                _ => (ids[0].to_string(), ids[1].to_string()),
            };
            (0..levels)
                .map(|k| if k < levels / 2 { first.clone() } else { second.clone() })
                .collect()
        }
    }
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let est = load_trajectory(&a.estimate)?;
    let reference = load_trajectory(&a.reference)?;
    let r = ate(&est, &reference, a.max_dt)?;
    if a.json {
        let v = serde_json::json!({
            "ate_rmse": r.rmse,
            "mean_rotation_error": r.mean_rotation_error,
            "pairs": r.pairs,
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!("ate_rmse {:.9}", r.rmse);
        println!("mean_rotation_error {:.9}", r.mean_rotation_error);
        println!("pairs {}", r.pairs);
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match (&a.spec, a.builtin) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile {
                    path: path.clone(),
                    what: "scene spec".into(),
                },
                _ => Error::Io {
                    path: path.clone(),
                    source: e,
                },
            })?;
            SynthSpec::parse(&text, &path.display().to_string())?
        }
        (None, Some(Builtin::BoxRoom)) => {
            let mut s = SynthSpec::box_room();
            if let Some(n) = a.poses {
                if n < 2 {
                    return Err(Error::Config("--poses must be at least 2".into()).into());
                }
                s.poses = box_room_trajectory(n);
            }
            s
        }
        (None, None) => unreachable!("clap requires --spec or --builtin"),
    };
    match a.sensors {
        SensorSet::Both => {}
        SensorSet::Rgbd => spec.sensors.retain(|s| s.intrinsics.model == ProjectionModel::Pinhole),
        SensorSet::Lidar => spec
            .sensors
            .retain(|s| s.intrinsics.model == ProjectionModel::Spherical),
    }
    if spec.sensors.is_empty() {
        return Err(Error::Config("no sensor of the requested kind in the scene spec".into()).into());
    }
    if a.sigma_t.is_some() || a.sigma_r_deg.is_some() {
        let base = spec.perturbation.unwrap_or(PerturbationSpec {
            sigma_t: 0.0,
            sigma_r: 0.0,
            seed: 0,
        });
        spec.perturbation = Some(PerturbationSpec {
            sigma_t: a.sigma_t.unwrap_or(base.sigma_t),
            sigma_r: a.sigma_r_deg.map_or(base.sigma_r, f64::to_radians),
            seed: base.seed,
        });
    }
    if let (Some(seed), Some(p)) = (a.seed, spec.perturbation.as_mut()) {
        p.seed = seed;
    }
    let manifest = generate_dataset(&spec, &a.out)?;
    if a.write_spec {
        write_file(&a.out.join("scene.toml"), &spec.to_toml())?;
    }
    println!(
        "wrote {} poses x {} sensor(s) to {}",
        spec.poses.len(),
        manifest.sensors.len(),
        a.out.display()
    );
    Ok(())
}

fn pair_for(ds: &Dataset, model: ProjectionModel, frame: usize, target: usize) -> Option<AlignmentPair> {
    let s = ds.sensors.iter().find(|s| s.intrinsics.model == model)?;
    Some(AlignmentPair {
        source: s.nodes[frame].clone(),
        target: s.nodes[target].clone(),
        extrinsics: s.extrinsics,
    })
}

pub fn selfalign(a: &SelfalignArgs) -> Result<()> {
    let mut manifest = Manifest::load(&a.manifest)?;
    apply_solver(&mut manifest.solver, &a.solver)?;
    let mut cfg = SweepConfig::linear(a.grid, a.max_translation, a.max_rotation, a.seed)?;
    cfg.convergence_threshold = a.threshold;
    cfg.validate()?;

    let ds = load_dataset_with(manifest.clone(), manifest_root(&a.manifest))?;
    let n = ds.trajectory.len();
    let target = a.target.unwrap_or(a.frame);
    if a.frame >= n || target >= n {
        return Err(Error::Config(format!("frame index out of range: trajectory has {n} rows")).into());
    }
    let reference = if target == a.frame {
        // identical images: any common pose is exact
        let x = ds.trajectory.entries()[a.frame].1;
        (x, x)
    } else {
        let gt = ds
            .groundtruth
            .as_ref()
            .ok_or_else(|| Error::Config("aligning two frames needs a ground-truth trajectory".into()))?;
        let pose_at = |row: usize| -> Result<_> {
            let t = ds.trajectory.entries()[row].0;
            gt.entries()
                .iter()
                .filter(|(s, _)| (s - t).abs() <= DEFAULT_MAX_DT)
                .min_by(|x, y| (x.0 - t).abs().total_cmp(&(y.0 - t).abs()))
                .map(|(_, p)| *p)
                .ok_or_else(|| Error::NoAssociation { max_dt: DEFAULT_MAX_DT }.into())
        };
        (pose_at(a.frame)?, pose_at(target)?)
    };
    let rgbd = pair_for(&ds, ProjectionModel::Pinhole, a.frame, target);
    let lidar = pair_for(&ds, ProjectionModel::Spherical, a.frame, target);

    let started = Instant::now();
    let result = sweep(rgbd.as_ref(), lidar.as_ref(), reference, &cfg, &manifest.solver)?;
    let grid = result.grid();
    let mut text = format!(
        "# basin grid: frame {} -> {}, seed {}, log10 mean error\n",
        a.frame, target, a.seed
    );
    text.push_str(&grid.format());
    write_file(&a.out, &text)?;

    let cells = cfg.rotations.len() * cfg.translations.len();
    for &m in &result.modes {
        println!("{:<12} converged {}/{}", m.name(), result.converged_set(m).len(), cells);
    }
    println!(
        "sweep {:.2}s, grid written to {}",
        started.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

fn graph_text<'a>(graphs: impl Iterator<Item = (&'a str, String)>) -> String {
    let mut out = String::new();
    for (id, dump) in graphs {
        out.push_str(&format!("# sensor {id}\n"));
        out.push_str(&dump);
    }
    out
}

pub fn graph_dump(a: &GraphDumpArgs) -> Result<()> {
    let mut manifest = Manifest::load(&a.manifest)?;
    apply_thresholds(&mut manifest, &a.thresholds);
    let ds = load_dataset_with(manifest.clone(), manifest_root(&a.manifest))?;
    let graphs = ds
        .sensors
        .iter()
        .map(|s| {
            Ok((
                s.id.as_str(),
                build_graph(s.nodes.clone(), &s.extrinsics, &manifest.graph)?.dump(),
            ))
        })
        .collect::<Result<Vec<_>>>()
        .context("building match graph")?;
    let text = graph_text(graphs.into_iter());
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
