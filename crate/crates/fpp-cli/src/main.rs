//! Command-line driver for the fringe projection toolkit.
//!
//! Every subcommand reads and writes the toolkit's native formats:
//! `.fpr1` rasters, 8-bit grayscale PNG previews, JSON rig and scene
//! descriptions, ASCII PLY point clouds and the binary parameter
//! container of the micro network. Errors print one `error: ...` line on
//! stderr and exit nonzero.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

use fpp_core::dataset::{
    default_bands, default_scenes, generate_dataset, run_pipeline, DatasetConfig, DatasetManifest,
    PipelineMode, SceneRecord, Split,
};
use fpp_core::geometry::RigCalibration;
use fpp_core::io::{read_raster, write_png8, write_raster};
use fpp_core::losses::{
    consistency_loss, finite_difference_check, geometric_loss, phase_loss, total_loss,
    LossWeights, PredictionSet, TargetSet, UnwrapContext,
};
use fpp_core::micro::{train_new, MicroNet, MicroNetConfig, ParameterStore, TrainConfig, TrainSample};
use fpp_core::pattern::{generate_pattern, PatternSpec};
use fpp_core::phase::{
    intensity_bounds, modulation_mask, normalize01, retrieve, WrappedPhaseBundle,
    DEFAULT_MODULATION_THRS,
};
use fpp_core::raster::{Raster, RasterKind};
use fpp_core::reconstruct::{fit_sphere, metrics, reconstruct_phase, write_ply};
use fpp_core::refine::{build_refined, three_freq_reference, two_phase_unwrap};
use fpp_core::render::{NoiseSpec, SceneGeometry};
use fpp_core::rng::SplitMix64;
use fpp_core::surface::Surface;
use fpp_core::unwrap::{ladder_unwrap, phi_min, zmin_order, FrequencyLadder, ZminConfig};

#[derive(Parser)]
#[command(name = "fpp", about = "Fringe projection profilometry toolkit", version)]
struct Cli {
    /// Base seed for every stochastic choice (noise, splits, init).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the data-parallel kernels; 0 = all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an N-step phase-shifted fringe pattern stack.
    Patterns {
        #[arg(long)]
        pitch: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 912)]
        width: usize,
        #[arg(long, default_value_t = 570)]
        height: usize,
        /// Also write 8-bit PNG previews.
        #[arg(long)]
        png: bool,
    },
    /// Render a fringe stack of a scene through the virtual rig.
    Render {
        /// Rig calibration JSON; built-in rig when omitted.
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Scene surface JSON.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        pitch: f64,
        #[arg(long)]
        steps: usize,
        /// Gaussian read-noise level in gray levels.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Quantize intensities to 8-bit gray levels.
        #[arg(long)]
        quantize: bool,
        /// Also write the exact unwrapped phase at this pitch.
        #[arg(long)]
        ground_truth: bool,
        /// Also write 8-bit PNG previews.
        #[arg(long)]
        png: bool,
    },
    /// Phase-shifting retrieval from an ordered fringe stack.
    Retrieve {
        /// Fringe images in step order.
        #[arg(required = true)]
        images: Vec<PathBuf>,
        /// Modulation threshold for the quality mask.
        #[arg(long, default_value_t = DEFAULT_MODULATION_THRS)]
        thrs: f64,
    },
    /// Multi-frequency temporal unwrapping down a ladder of stacks.
    Unwrap {
        /// One rung per flag, coarsest first: `PITCH:img1,img2,...`.
        #[arg(long = "stack", required = true)]
        stacks: Vec<String>,
    },
    /// Refined-reference two-phase unwrapping with the depth constraint.
    Refine {
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Unit-frequency stack, `PITCH:img1,img2,...`.
        #[arg(long)]
        unit: String,
        /// Mid-frequency stack.
        #[arg(long)]
        mid: String,
        /// Constraint-frequency stack.
        #[arg(long)]
        constraint: String,
        /// High-frequency stack.
        #[arg(long)]
        high: String,
        /// Closest depth of the measurement volume, meters.
        #[arg(long)]
        z_min: f64,
    },
    /// Triangulate an absolute phase map into a metric point cloud.
    Reconstruct {
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Absolute (unwrapped) phase raster.
        #[arg(long)]
        phi: PathBuf,
        /// Fringe pitch the phase was measured at.
        #[arg(long)]
        pitch: f64,
        /// Optional quality mask applied before triangulation.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Fit a sphere to the cloud and report center/radius.
        #[arg(long)]
        sphere: bool,
    },
    /// Materialize a synthetic dataset with ground truth and targets.
    Dataset {
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Height-field rotations per base relief.
        #[arg(long, default_value_t = 1)]
        rotations: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long)]
        quantize: bool,
        #[arg(long, default_value_t = 0.4)]
        z_min: f64,
        #[arg(long, default_value_t = 0.2)]
        validation_fraction: f64,
    },
    /// Replay the pipeline on a dataset scene and print error metrics.
    Eval {
        /// Dataset root (holds manifest.json).
        #[arg(long)]
        data: PathBuf,
        /// Scene id; all scenes when omitted.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, value_enum, default_value_t = ModeArg::TwoPhase)]
        mode: ModeArg,
    },
    /// Compare analytic loss gradients against finite differences.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = LossArg::Total)]
        loss: LossArg,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Train the fusion network on patches of a dataset's train split.
    TrainMicro {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 32)]
        patch: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 1e-2)]
        learning_rate: f64,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 8)]
        base_channels: usize,
        /// Cap on extracted training patches.
        #[arg(long, default_value_t = 64)]
        max_patches: usize,
    },
    /// Run the trained network on one patch of a dataset scene.
    InferMicro {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scene: String,
        #[arg(long, default_value_t = 0)]
        u0: usize,
        #[arg(long, default_value_t = 0)]
        v0: usize,
        #[arg(long, default_value_t = 32)]
        patch: usize,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 8)]
        base_channels: usize,
    },
    /// Check that every file a dataset manifest references is intact.
    Verify {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Classical multi-frequency ladder.
    ThreeFreq,
    /// Refined reference + depth constraint.
    TwoPhase,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Phase,
    Consist,
    Geo,
    Total,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("thread pool")?;
    }
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.clone();
    match cli.command {
        Command::Patterns { pitch, steps, width, height, png } => {
            let spec = PatternSpec::new(pitch, steps, width, height)?;
            for n in 1..=steps {
                let img = generate_pattern(&spec, n)?;
                write_raster(&img, out.join(format!("pattern_s{n:02}.fpr1")))?;
                if png {
                    write_png8(&img, out.join(format!("pattern_s{n:02}.png")))?;
                }
            }
            println!("wrote {steps} patterns to {}", out.display());
        }
        Command::Render {
            rig,
            scene,
            pitch,
            steps,
            sigma,
            quantize,
            ground_truth,
            png,
        } => {
            let rig = load_rig(rig.as_deref())?;
            let surface = Surface::load(&scene)?;
            let geom = SceneGeometry::trace(&rig, &surface)?;
            let spec = PatternSpec::new(pitch, steps, rig.projector.width, rig.projector.height)?;
            let noise = NoiseSpec { sigma, quantize, seed: cli.seed };
            for (i, img) in geom.render_stack(&spec, &noise)?.iter().enumerate() {
                write_raster(img, out.join(format!("fringe_s{:02}.fpr1", i + 1)))?;
                if png {
                    write_png8(img, out.join(format!("fringe_s{:02}.png", i + 1)))?;
                }
            }
            write_raster(&geom.mask_raster(), out.join("mask.fpr1"))?;
            if ground_truth {
                write_raster(&geom.ground_truth_phase(pitch)?, out.join("phi_gt.fpr1"))?;
            }
            println!("wrote {steps} frames to {}", out.display());
        }
        Command::Retrieve { images, thrs } => {
            let stack: Vec<Raster> =
                images.iter().map(|p| read_raster(p)).collect::<fpp_core::Result<_>>()?;
            let bundle = retrieve(&stack)?;
            let mask = modulation_mask(&bundle, thrs)?;
            write_raster(&bundle.phi, out.join("phi.fpr1"))?;
            write_raster(&bundle.numerator, out.join("numerator.fpr1"))?;
            write_raster(&bundle.denominator, out.join("denominator.fpr1"))?;
            write_raster(&bundle.modulation, out.join("modulation.fpr1"))?;
            write_raster(&mask, out.join("mask.fpr1"))?;
            println!("retrieved {}-step stack to {}", stack.len(), out.display());
        }
        Command::Unwrap { stacks } => {
            let rungs: Vec<(f64, WrappedPhaseBundle)> = stacks
                .iter()
                .map(|s| retrieve_rung(s))
                .collect::<Result<_>>()?;
            let refs: Vec<(f64, &WrappedPhaseBundle)> =
                rungs.iter().map(|(p, b)| (*p, b)).collect();
            let phi = ladder_unwrap(&FrequencyLadder::new(refs)?)?;
            write_raster(&phi, out.join("phi_unwrapped.fpr1"))?;
            write_raster(&phi.validity_raster(), out.join("mask.fpr1"))?;
            println!("unwrapped {} rungs to {}", rungs.len(), out.display());
        }
        Command::Refine { rig, unit, mid, constraint, high, z_min } => {
            let rig = load_rig(rig.as_deref())?;
            let (p_unit, b_unit) = retrieve_rung(&unit)?;
            let (p_mid, b_mid) = retrieve_rung(&mid)?;
            let (p_con, b_con) = retrieve_rung(&constraint)?;
            let (p_high, b_high) = retrieve_rung(&high)?;
            let phi_t = three_freq_reference(&b_unit.phi, &b_mid.phi, p_unit, p_mid)?;
            let pm = phi_min(&ZminConfig { rig, pitch: p_con, z_min })?;
            let k_z = zmin_order(&b_con.phi, &pm)?;
            let refined = build_refined(&phi_t, &k_z, p_mid, p_con)?;
            let phi = two_phase_unwrap(&b_high.phi, &refined, p_high)?;
            write_raster(&refined.numerator, out.join("m_ref.fpr1"))?;
            write_raster(&refined.denominator, out.join("d_ref.fpr1"))?;
            write_raster(&refined.phi_wrapped, out.join("phi_ref_wrapped.fpr1"))?;
            write_raster(&refined.phi_unwrapped, out.join("phi_ref.fpr1"))?;
            write_raster(&refined.order_z, out.join("order_z.fpr1"))?;
            write_raster(&phi, out.join("phi_unwrapped.fpr1"))?;
            write_raster(&phi.validity_raster(), out.join("mask.fpr1"))?;
            println!("refined unwrap to {}", out.display());
        }
        Command::Reconstruct { rig, phi, pitch, mask, sphere } => {
            let rig = load_rig(rig.as_deref())?;
            let mut phi = read_raster(&phi)?;
            if let Some(m) = mask {
                phi.apply_mask(&read_raster(&m)?)?;
            }
            let (cloud, depth) = reconstruct_phase(&rig, &phi, pitch)?;
            write_ply(&cloud, out.join("cloud.ply"))?;
            write_raster(&depth, out.join("depth.fpr1"))?;
            println!("triangulated {} points to {}", cloud.len(), out.display());
            if sphere {
                let fit = fit_sphere(&cloud)?;
                println!(
                    "sphere center ({:.4}, {:.4}, {:.4}) mm radius {:.4} mm rms {:.5} mm",
                    fit.center[0], fit.center[1], fit.center[2], fit.radius, fit.rms_residual
                );
            }
        }
        Command::Dataset { rig, rotations, sigma, quantize, z_min, validation_fraction } => {
            let rig = load_rig(rig.as_deref())?;
            let cfg = DatasetConfig {
                scenes: default_scenes(rotations),
                bands: default_bands(),
                noise: NoiseSpec { sigma, quantize, seed: cli.seed },
                z_min,
                constraint_pitch: 304.0,
                modulation_thrs: DEFAULT_MODULATION_THRS,
                validation_fraction,
                split_seed: cli.seed,
            };
            let manifest = generate_dataset(&out, &rig, &cfg)?;
            println!("wrote {} scenes to {}", manifest.scenes.len(), out.display());
        }
        Command::Eval { data, scene, mode } => {
            let manifest = DatasetManifest::load(data.join("manifest.json"))?;
            let mode = match mode {
                ModeArg::ThreeFreq => PipelineMode::ThreeFreq,
                ModeArg::TwoPhase => PipelineMode::TwoPhaseRefined,
            };
            let ids: Vec<String> = match scene {
                Some(id) => vec![id],
                None => manifest.scenes.iter().map(|s| s.id.clone()).collect(),
            };
            println!("scene,mae_rad,rmse_rad,mae_mm,rmse_mm");
            for id in ids {
                let (rad, mm) = eval_scene(&data, &manifest, &id, mode)?;
                println!(
                    "{id},{:.6e},{:.6e},{:.6e},{:.6e}",
                    rad.mae, rad.rmse, mm.mae, mm.rmse
                );
            }
        }
        Command::Gradcheck { loss, size, trials } => {
            let mut worst: f64 = 0.0;
            for t in 0..trials {
                let (pred, target) = random_pair(cli.seed ^ (t as u64 + 1), size, size);
                let err = match loss {
                    LossArg::Phase => {
                        finite_difference_check(&pred, |p| phase_loss(p, &target), 1e-5)?
                    }
                    LossArg::Consist => {
                        finite_difference_check(&pred, |p| consistency_loss(p, &target), 1e-5)?
                    }
                    LossArg::Geo => finite_difference_check(&pred, geometric_loss, 1e-5)?,
                    LossArg::Total => finite_difference_check(
                        &pred,
                        |p| total_loss(p, &target, &LossWeights::default()),
                        1e-5,
                    )?,
                };
                worst = worst.max(err);
            }
            println!("max relative gradient error over {trials} trials: {worst:.3e}");
            if worst > 1e-5 {
                bail!("gradient check failed: {worst:.3e} > 1e-5");
            }
        }
        Command::TrainMicro {
            data,
            steps,
            patch,
            batch,
            learning_rate,
            levels,
            base_channels,
            max_patches,
        } => {
            let manifest = DatasetManifest::load(data.join("manifest.json"))?;
            let samples = build_samples(&data, &manifest, patch, max_patches, None)?;
            if samples.is_empty() {
                bail!("no usable training patches in {}", data.display());
            }
            let model_cfg = MicroNetConfig {
                height: patch,
                width: patch,
                levels,
                base_channels,
                ..Default::default()
            };
            let train_cfg = TrainConfig {
                steps,
                batch_size: batch,
                learning_rate,
                seed: cli.seed,
                ..Default::default()
            };
            let (net, trace) = train_new(model_cfg, &samples, &train_cfg)?;
            let path = out.join("params.bin");
            net.params.save(&path)?;
            println!(
                "trained on {} patches for {} steps: loss {:.6e} -> {:.6e}, params {}",
                samples.len(),
                trace.len(),
                trace.first().copied().unwrap_or(f64::NAN),
                trace.last().copied().unwrap_or(f64::NAN),
                path.display()
            );
        }
        Command::InferMicro { params, data, scene, u0, v0, patch, levels, base_channels } => {
            let manifest = DatasetManifest::load(data.join("manifest.json"))?;
            let store = ParameterStore::load(&params)?;
            let cfg = MicroNetConfig {
                height: patch,
                width: patch,
                levels,
                base_channels,
                ..Default::default()
            };
            let net = MicroNet::from_store(cfg, store)?;
            let record = manifest.scene(&scene)?;
            let sample = scene_sample(&data, &manifest, record, u0, v0, patch)?;
            let (o, _) = net.forward(&sample.fringe_h, &sample.fringe_l, None)?;
            let pred = PredictionSet::new(o.m_h, o.d_h, o.m_l, o.d_l, &sample.ctx)?;
            write_raster(&pred.m_h, out.join("m_h.fpr1"))?;
            write_raster(&pred.d_h, out.join("d_h.fpr1"))?;
            write_raster(&pred.m_l, out.join("m_l.fpr1"))?;
            write_raster(&pred.d_l, out.join("d_l.fpr1"))?;
            write_raster(&pred.phi_wrapped, out.join("phi_wrapped.fpr1"))?;
            write_raster(&pred.phi_unwrapped, out.join("phi_unwrapped.fpr1"))?;
            let mae = fpp_core::micro::train::wrapped_phase_mae(
                &pred.m_h,
                &pred.d_h,
                &sample.target.phi,
                &sample.target.mask,
            )?;
            println!("wrapped-phase MAE {mae:.4} rad, outputs in {}", out.display());
        }
        Command::Verify { data } => {
            let manifest = DatasetManifest::load(data.join("manifest.json"))?;
            let n = fpp_core::dataset::verify(&data, &manifest)?;
            println!("ok: {n} files verified");
        }
    }
    Ok(())
}

fn load_rig(path: Option<&Path>) -> Result<RigCalibration> {
    Ok(match path {
        Some(p) => RigCalibration::load(p)?,
        None => RigCalibration::default_rig(),
    })
}

/// Parses `PITCH:img1,img2,...` and runs retrieval on the listed stack.
fn retrieve_rung(arg: &str) -> Result<(f64, WrappedPhaseBundle)> {
    let (pitch, files) = arg
        .split_once(':')
        .ok_or_else(|| anyhow!("expected PITCH:img1,img2,..., got `{arg}`"))?;
    let pitch: f64 = pitch.parse().with_context(|| format!("pitch in `{arg}`"))?;
    let stack: Vec<Raster> = files
        .split(',')
        .map(|f| read_raster(f.trim()))
        .collect::<fpp_core::Result<_>>()?;
    Ok((pitch, retrieve(&stack)?))
}

/// Phase metrics (radians) and depth metrics (millimeters) for one scene.
fn eval_scene(
    root: &Path,
    manifest: &DatasetManifest,
    scene_id: &str,
    mode: PipelineMode,
) -> Result<(fpp_core::reconstruct::Metrics, fpp_core::reconstruct::Metrics)> {
    let result = run_pipeline(root, manifest, scene_id, mode)?;
    let record = manifest.scene(scene_id)?;
    let rig = RigCalibration::load(root.join(&manifest.rig_path))?;
    let truth_phi = read_raster(root.join(&record.phi_path))?;
    let mask = read_raster(root.join(&record.mask_path))?;
    let high_pitch = ladder_high_pitch(manifest)?;
    let (_, depth_pred) = reconstruct_phase(&rig, &result.phi, high_pitch)?;
    let (_, depth_true) = reconstruct_phase(&rig, &truth_phi, high_pitch)?;
    let mm = metrics(&depth_pred, &depth_true, Some(&mask))?;
    Ok((result.metrics, mm))
}

/// Finest non-constraint pitch of the manifest's band list.
fn ladder_high_pitch(manifest: &DatasetManifest) -> Result<f64> {
    manifest
        .bands
        .iter()
        .map(|b| b.pitch)
        .filter(|&p| p != manifest.constraint_pitch)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.min(p))))
        .ok_or_else(|| anyhow!("manifest has no measurement bands"))
}

/// Random prediction/target pair for the gradient check, with phases
/// bounded away from the wrap boundary so finite differences stay on one
/// branch.
fn random_pair(seed: u64, w: usize, h: usize) -> (PredictionSet, TargetSet) {
    let mut rng = SplitMix64::new(seed);
    let gen = |rng: &mut SplitMix64| {
        let mut m = Raster::new(w, h, RasterKind::Numerator).unwrap();
        let mut d = Raster::new(w, h, RasterKind::Denominator).unwrap();
        let mut phi = Raster::new(w, h, RasterKind::UnwrappedPhase).unwrap();
        let mut order = Raster::new(w, h, RasterKind::FringeOrder).unwrap();
        for i in 0..w * h {
            let phi0 = rng.uniform(-2.8, 2.8);
            let r = rng.uniform(0.3, 1.5);
            let k = (rng.next_u64() % 5) as f64;
            m.data_mut()[i] = -r * phi0.sin();
            d.data_mut()[i] = r * phi0.cos();
            phi.data_mut()[i] = phi0 + std::f64::consts::TAU * k;
            order.data_mut()[i] = k;
        }
        (m, d, phi, order)
    };
    let (m_h, d_h, _, order) = gen(&mut rng);
    let (m_l, d_l, _, _) = gen(&mut rng);
    let pred = PredictionSet::with_frozen_order(m_h, d_h, m_l, d_l, order).unwrap();
    let (tm_h, td_h, tphi, _) = gen(&mut rng);
    let (tm_l, td_l, _, _) = gen(&mut rng);
    let target = TargetSet {
        m_h: tm_h,
        d_h: td_h,
        m_l: tm_l,
        d_l: td_l,
        phi: tphi,
        mask: Raster::constant(w, h, RasterKind::Mask, 1.0).unwrap(),
    };
    (pred, target)
}

/// One supervised patch of a dataset scene at the given corner.
fn scene_sample(
    root: &Path,
    manifest: &DatasetManifest,
    record: &SceneRecord,
    u0: usize,
    v0: usize,
    patch: usize,
) -> Result<TrainSample> {
    use fpp_core::micro::train::crop;
    let rig = RigCalibration::load(root.join(&manifest.rig_path))?;
    let high_pitch = ladder_high_pitch(manifest)?;
    let read_stack = |pitch: f64| -> Result<Vec<Raster>> {
        let stack = record
            .stacks
            .iter()
            .find(|s| s.band.pitch == pitch)
            .ok_or_else(|| anyhow!("scene {} has no stack at pitch {pitch}", record.id))?;
        Ok(stack
            .paths
            .iter()
            .map(|p| read_raster(root.join(p)))
            .collect::<fpp_core::Result<_>>()?)
    };
    let normalize = |stack: &[Raster]| -> Result<Raster> {
        let (lo, hi) =
            intensity_bounds(stack.iter()).ok_or_else(|| anyhow!("empty fringe stack"))?;
        Ok(normalize01(&stack[0], lo, hi)?)
    };
    let fringe_h = normalize(&read_stack(high_pitch)?)?;
    let fringe_l = normalize(&read_stack(manifest.constraint_pitch)?)?;
    let pm = phi_min(&ZminConfig {
        rig,
        pitch: manifest.constraint_pitch,
        z_min: manifest.z_min,
    })?;
    let size = (patch, patch);
    let target = TargetSet {
        m_h: crop(&read_raster(root.join(&record.m_h_path))?, u0, v0, size)?,
        d_h: crop(&read_raster(root.join(&record.d_h_path))?, u0, v0, size)?,
        m_l: crop(&read_raster(root.join(&record.m_r_path))?, u0, v0, size)?,
        d_l: crop(&read_raster(root.join(&record.d_r_path))?, u0, v0, size)?,
        phi: crop(&read_raster(root.join(&record.phi_path))?, u0, v0, size)?,
        mask: crop(&read_raster(root.join(&record.mask_path))?, u0, v0, size)?,
    };
    Ok(TrainSample {
        fringe_h: crop(&fringe_h, u0, v0, size)?,
        fringe_l: crop(&fringe_l, u0, v0, size)?,
        ctx: UnwrapContext {
            phi_min: crop(&pm, u0, v0, size)?,
            pitch_ref: manifest.constraint_pitch,
            pitch_high: high_pitch,
        },
        target,
    })
}

/// Tiles the train-split scenes into mostly-valid patches.
fn build_samples(
    root: &Path,
    manifest: &DatasetManifest,
    patch: usize,
    max_patches: usize,
    only_scene: Option<&str>,
) -> Result<Vec<TrainSample>> {
    let mut samples = Vec::new();
    for record in &manifest.scenes {
        if record.split != Split::Train && only_scene.is_none() {
            continue;
        }
        if let Some(id) = only_scene {
            if record.id != id {
                continue;
            }
        }
        let mask = read_raster(root.join(&record.mask_path))?;
        let (w, h) = (mask.width(), mask.height());
        let mut v0 = 0;
        while v0 + patch <= h && samples.len() < max_patches {
            let mut u0 = 0;
            while u0 + patch <= w && samples.len() < max_patches {
                let valid = (0..patch)
                    .flat_map(|dv| (0..patch).map(move |du| (u0 + du, v0 + dv)))
                    .filter(|&(u, v)| mask.is_valid(u, v) && mask.get(u, v) != 0.0)
                    .count();
                if valid * 2 >= patch * patch {
                    samples.push(scene_sample(root, manifest, record, u0, v0, patch)?);
                }
                u0 += patch;
            }
            v0 += patch;
        }
    }
    Ok(samples)
}
