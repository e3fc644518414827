//! Dataset generation and full-pipeline orchestration: materializes
//! fringe stacks, ground truth and refined training targets for a list
//! of analytic scenes, records everything in a JSON manifest with a
//! seeded train/validation split, and replays the retrieval-unwrap-
//! reconstruct pipeline against the stored files.

use crate::error::{FppError, Result};
use crate::geometry::RigCalibration;
use crate::io::{read_raster, write_raster};
use crate::pattern::PatternSpec;
use crate::phase::{modulation_mask, retrieve, WrappedPhaseBundle};
use crate::raster::{wrap, Raster, RasterKind};
use crate::reconstruct::{metrics, reconstruct_phase, Metrics, PointCloud};
use crate::refine::{build_refined, three_freq_reference, two_phase_unwrap};
use crate::render::{NoiseSpec, SceneGeometry};
use crate::rng::{mix, SplitMix64};
use crate::surface::Surface;
use crate::unwrap::{ladder_unwrap, phi_min, zmin_order, FrequencyLadder, ZminConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One fringe frequency: pitch in projector pixels and phase-shift step
/// count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Band {
    pub pitch: f64,
    pub steps: usize,
}

/// Default ladder: unit frequency down to the high frequency, plus the
/// geometric-constraint band. 15 steps at the finest pitch, 5 elsewhere.
pub fn default_bands() -> Vec<Band> {
    vec![
        Band { pitch: 912.0, steps: 5 },
        Band { pitch: 304.0, steps: 5 },
        Band { pitch: 114.0, steps: 5 },
        Band { pitch: 15.0, steps: 15 },
    ]
}

/// A scene to render: identifier plus analytic surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDef {
    pub id: String,
    pub surface: Surface,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scenes: Vec<SceneDef>,
    pub bands: Vec<Band>,
    pub noise: NoiseSpec,
    /// Closest depth of the measurement volume, meters.
    pub z_min: f64,
    /// Pitch of the geometric-constraint reference.
    pub constraint_pitch: f64,
    pub modulation_thrs: f64,
    /// Fraction of scenes held out for validation (rounded, min 1).
    pub validation_fraction: f64,
    pub split_seed: u64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(FppError::InvalidArgument("dataset needs at least one scene".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(FppError::InvalidArgument(format!(
                "validation fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        self.noise.validate()?;
        for b in &self.bands {
            if !(b.pitch > 0.0) || b.steps < 3 {
                return Err(FppError::InvalidArgument(format!(
                    "bad band: pitch {}, steps {}",
                    b.pitch, b.steps
                )));
            }
        }
        for s in &self.scenes {
            s.surface.validate()?;
        }
        Ok(())
    }
}

/// A compact built-in scene list: plane, sphere and procedural height
/// fields (optionally rotated about the view axis in 60-degree steps).
pub fn default_scenes(rotations: usize) -> Vec<SceneDef> {
    let mut scenes = vec![
        SceneDef { id: "plane".into(), surface: Surface::Plane { z0: 0.55 } },
        SceneDef {
            id: "sphere".into(),
            surface: Surface::Sphere { center: [0.0, 0.0, 0.6], radius: 0.1 },
        },
    ];
    for (hf_idx, seed) in [11u64, 23, 47].into_iter().enumerate() {
        for rot in 0..rotations.max(1) {
            let yaw = 60.0 * rot as f64;
            scenes.push(SceneDef {
                id: format!("relief{hf_idx}_r{rot}"),
                surface: procedural_height_field(seed, yaw),
            });
        }
    }
    scenes
}

/// Smooth random height field over a 24 cm square at 0.6 m, built from a
/// fixed set of seeded cosine bumps.
pub fn procedural_height_field(seed: u64, yaw_deg: f64) -> Surface {
    let mut rng = SplitMix64::new(seed);
    let nx = 33;
    let ny = 33;
    let mut bumps = Vec::new();
    for _ in 0..6 {
        bumps.push((
            rng.uniform(-0.08, 0.08),
            rng.uniform(-0.08, 0.08),
            rng.uniform(0.03, 0.08),
            rng.uniform(0.005, 0.02),
        ));
    }
    let mut heights = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let x = -0.12 + 0.24 * i as f64 / (nx - 1) as f64;
            let y = -0.12 + 0.24 * j as f64 / (ny - 1) as f64;
            let mut h = 0.0;
            for &(cx, cy, r, a) in &bumps {
                let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                if d2 < r * r {
                    h += a * 0.5 * (1.0 + (std::f64::consts::PI * d2.sqrt() / r).cos());
                }
            }
            heights[j * nx + i] = h;
        }
    }
    Surface::HeightField(crate::surface::HeightField {
        x0: -0.12,
        x1: 0.12,
        y0: -0.12,
        y1: 0.12,
        base_z: 0.62,
        nx,
        ny,
        heights,
        yaw_deg,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

/// One rendered stack in the manifest: the band plus relative file
/// paths, one per step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackRecord {
    pub band: Band,
    pub paths: Vec<String>,
}

/// Per-scene manifest entry: inputs, ground truth and training targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub surface: Surface,
    pub split: Split,
    pub stacks: Vec<StackRecord>,
    /// Absolute ground-truth phase at the finest pitch.
    pub phi_path: String,
    pub m_h_path: String,
    pub d_h_path: String,
    pub m_r_path: String,
    pub d_r_path: String,
    pub phi_r_path: String,
    pub mask_path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rig_path: String,
    pub bands: Vec<Band>,
    pub noise: NoiseSpec,
    pub z_min: f64,
    pub constraint_pitch: f64,
    pub modulation_thrs: f64,
    pub validation_fraction: f64,
    pub split_seed: u64,
    pub scenes: Vec<SceneRecord>,
}

impl DatasetManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|_| FppError::MissingFile(path.display().to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn scene(&self, id: &str) -> Result<&SceneRecord> {
        self.scenes
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| FppError::InvalidArgument(format!("no scene named {id}")))
    }
}

/// Noise seed for one scene: scenes draw independent noise even though
/// the manifest stores a single base seed.
fn scene_noise(noise: &NoiseSpec, scene_index: usize) -> NoiseSpec {
    NoiseSpec { seed: noise.seed ^ mix(scene_index as u64 + 1), ..*noise }
}

fn band_file(pitch: f64, step: usize) -> String {
    format!("f{:04}_s{step:02}.fpr1", pitch.round() as u64)
}

/// Renders and writes every artifact of the dataset under `root`,
/// returning the manifest (also written to `root/manifest.json`).
/// Fully deterministic: identical config + seed give byte-identical
/// trees.
pub fn generate_dataset(
    root: impl AsRef<Path>,
    rig: &RigCalibration,
    cfg: &DatasetConfig,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    rig.validate()?;
    let root = root.as_ref();
    std::fs::create_dir_all(root)?;
    rig.save(root.join("rig.json"))?;

    // seeded split: validation count rounds to nearest, at least 1
    let n = cfg.scenes.len();
    let val_count = if cfg.validation_fraction == 0.0 || n < 2 {
        0
    } else {
        (((n as f64) * cfg.validation_fraction).round() as usize).clamp(1, n - 1)
    };
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(cfg.split_seed).shuffle(&mut order);
    let mut splits = vec![Split::Train; n];
    for &i in order.iter().take(val_count) {
        splits[i] = Split::Validation;
    }

    let high = cfg
        .bands
        .iter()
        .min_by(|a, b| a.pitch.total_cmp(&b.pitch))
        .expect("validated non-empty");
    let ladder_pitches = ladder_bands(&cfg.bands, cfg.constraint_pitch)?;

    let mut records = Vec::with_capacity(n);
    for (idx, scene) in cfg.scenes.iter().enumerate() {
        let dir_name = format!("scene_{:03}_{}", idx, scene.id);
        let dir = root.join(&dir_name);
        std::fs::create_dir_all(&dir)?;
        let geom = SceneGeometry::trace(rig, &scene.surface)?;
        let noise = scene_noise(&cfg.noise, idx);

        // noisy capture stacks
        let mut stacks = Vec::new();
        for band in &cfg.bands {
            let spec = PatternSpec::new(band.pitch, band.steps, rig.projector.width, rig.projector.height)?;
            let mut paths = Vec::new();
            for (step, img) in geom.render_stack(&spec, &noise)?.into_iter().enumerate() {
                let rel = format!("{dir_name}/{}", band_file(band.pitch, step + 1));
                write_raster(&img, root.join(&rel))?;
                paths.push(rel);
            }
            stacks.push(StackRecord { band: *band, paths });
        }

        // noiseless ground truth via the frequency ladder
        let clean = NoiseSpec::none();
        let mut clean_bundles = Vec::new();
        for &pitch in &ladder_pitches {
            let band = cfg.bands.iter().find(|b| b.pitch == pitch).expect("ladder from bands");
            let spec = PatternSpec::new(pitch, band.steps, rig.projector.width, rig.projector.height)?;
            clean_bundles.push(retrieve(&geom.render_stack(&spec, &clean)?)?);
        }
        let rungs: Vec<(f64, &WrappedPhaseBundle)> =
            ladder_pitches.iter().copied().zip(clean_bundles.iter()).collect();
        let phi_gt = ladder_unwrap(&FrequencyLadder::new(rungs)?)?;
        let phi_rel = format!("{dir_name}/phi_gt.fpr1");
        write_raster(&phi_gt, root.join(&phi_rel))?;

        // high-frequency targets: unit-scale re-encoding of the truth
        let (mut m_h, mut d_h) = (
            Raster::new(phi_gt.width(), phi_gt.height(), RasterKind::Numerator)?,
            Raster::new(phi_gt.width(), phi_gt.height(), RasterKind::Denominator)?,
        );
        for i in 0..phi_gt.len() {
            if phi_gt.validity()[i] {
                let w = wrap(phi_gt.data()[i])?;
                m_h.data_mut()[i] = -w.sin();
                d_h.data_mut()[i] = w.cos();
            } else {
                m_h.invalidate_idx(i);
                d_h.invalidate_idx(i);
            }
        }

        // refined reference targets from the noiseless bundles
        let unit = &clean_bundles[0];
        let mid_pitch = ladder_pitches[1];
        let mid = &clean_bundles[1];
        let constraint_band = cfg
            .bands
            .iter()
            .find(|b| b.pitch == cfg.constraint_pitch)
            .ok_or_else(|| {
                FppError::InvalidArgument(format!(
                    "constraint pitch {} not among the bands",
                    cfg.constraint_pitch
                ))
            })?;
        let spec = PatternSpec::new(
            constraint_band.pitch,
            constraint_band.steps,
            rig.projector.width,
            rig.projector.height,
        )?;
        let constraint = retrieve(&geom.render_stack(&spec, &clean)?)?;
        let phi_t = three_freq_reference(&unit.phi, &mid.phi, ladder_pitches[0], mid_pitch)?;
        let pm = phi_min(&ZminConfig {
            rig: rig.clone(),
            pitch: cfg.constraint_pitch,
            z_min: cfg.z_min,
        })?;
        let k_z = zmin_order(&constraint.phi, &pm)?;
        let refined = build_refined(&phi_t, &k_z, mid_pitch, cfg.constraint_pitch)?;

        // quality mask from the captured (noisy) high-frequency stack
        let high_stack = stacks
            .iter()
            .find(|s| s.band.pitch == high.pitch)
            .expect("high band rendered above");
        let noisy_high: Vec<Raster> = high_stack
            .paths
            .iter()
            .map(|p| read_raster(root.join(p)))
            .collect::<Result<_>>()?;
        let noisy_bundle = retrieve(&noisy_high)?;
        let mask = modulation_mask(&noisy_bundle, cfg.modulation_thrs)?;

        let write_rel = |name: &str, raster: &Raster| -> Result<String> {
            let rel = format!("{dir_name}/{name}.fpr1");
            write_raster(raster, root.join(&rel))?;
            Ok(rel)
        };
        let m_h_path = write_rel("m_h", &m_h)?;
        let d_h_path = write_rel("d_h", &d_h)?;
        let m_r_path = write_rel("m_r", &refined.numerator)?;
        let d_r_path = write_rel("d_r", &refined.denominator)?;
        let phi_r_path = write_rel("phi_r", &refined.phi_wrapped)?;
        let mask_path = write_rel("mask", &mask)?;

        records.push(SceneRecord {
            id: scene.id.clone(),
            surface: scene.surface.clone(),
            split: splits[idx],
            stacks,
            phi_path: phi_rel,
            m_h_path,
            d_h_path,
            m_r_path,
            d_r_path,
            phi_r_path,
            mask_path,
        });
    }

    let manifest = DatasetManifest {
        rig_path: "rig.json".into(),
        bands: cfg.bands.clone(),
        noise: cfg.noise,
        z_min: cfg.z_min,
        constraint_pitch: cfg.constraint_pitch,
        modulation_thrs: cfg.modulation_thrs,
        validation_fraction: cfg.validation_fraction,
        split_seed: cfg.split_seed,
        scenes: records,
    };
    manifest.save(root.join("manifest.json"))?;
    Ok(manifest)
}

/// The pitches forming the unwrapping ladder: every band except the
/// constraint pitch, coarsest first.
fn ladder_bands(bands: &[Band], constraint_pitch: f64) -> Result<Vec<f64>> {
    let mut pitches: Vec<f64> =
        bands.iter().map(|b| b.pitch).filter(|&p| p != constraint_pitch).collect();
    pitches.sort_by(|a, b| b.total_cmp(a));
    if pitches.len() < 2 {
        return Err(FppError::InvalidArgument(
            "need at least two non-constraint bands for the ladder".into(),
        ));
    }
    Ok(pitches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Classical ladder over all non-constraint bands.
    ThreeFreq,
    /// Refined reference + geometric constraint: only two wrapped phases
    /// feed the final unwrap.
    TwoPhaseRefined,
}

pub struct PipelineResult {
    pub phi: Raster,
    pub cloud: PointCloud,
    pub metrics: Metrics,
}

fn read_stack(root: &Path, rec: &StackRecord) -> Result<Vec<Raster>> {
    rec.paths.iter().map(|p| read_raster(root.join(p))).collect()
}

/// Replays retrieval, unwrapping and reconstruction for one scene of a
/// materialized dataset; metrics compare against the stored ground
/// truth under the stored quality mask.
pub fn run_pipeline(
    root: impl AsRef<Path>,
    manifest: &DatasetManifest,
    scene_id: &str,
    mode: PipelineMode,
) -> Result<PipelineResult> {
    let root = root.as_ref();
    let record = manifest.scene(scene_id)?;
    let rig = RigCalibration::load(root.join(&manifest.rig_path))?;
    let ladder_pitches = ladder_bands(&manifest.bands, manifest.constraint_pitch)?;
    let high_pitch = *ladder_pitches.last().expect("validated");

    let bundle_for = |pitch: f64| -> Result<WrappedPhaseBundle> {
        let rec = record
            .stacks
            .iter()
            .find(|s| s.band.pitch == pitch)
            .ok_or_else(|| FppError::InvalidArgument(format!("no stack at pitch {pitch}")))?;
        retrieve(&read_stack(root, rec)?)
    };

    let phi = match mode {
        PipelineMode::ThreeFreq => {
            let bundles: Vec<WrappedPhaseBundle> =
                ladder_pitches.iter().map(|&p| bundle_for(p)).collect::<Result<_>>()?;
            let rungs: Vec<(f64, &WrappedPhaseBundle)> =
                ladder_pitches.iter().copied().zip(bundles.iter()).collect();
            ladder_unwrap(&FrequencyLadder::new(rungs)?)?
        }
        PipelineMode::TwoPhaseRefined => {
            let unit = bundle_for(ladder_pitches[0])?;
            let mid = bundle_for(ladder_pitches[1])?;
            let constraint = bundle_for(manifest.constraint_pitch)?;
            let high = bundle_for(high_pitch)?;
            let phi_t =
                three_freq_reference(&unit.phi, &mid.phi, ladder_pitches[0], ladder_pitches[1])?;
            let pm = phi_min(&ZminConfig {
                rig: rig.clone(),
                pitch: manifest.constraint_pitch,
                z_min: manifest.z_min,
            })?;
            let k_z = zmin_order(&constraint.phi, &pm)?;
            let refined =
                build_refined(&phi_t, &k_z, ladder_pitches[1], manifest.constraint_pitch)?;
            two_phase_unwrap(&high.phi, &refined, high_pitch)?
        }
    };

    let truth = read_raster(root.join(&record.phi_path))?;
    let mask = read_raster(root.join(&record.mask_path))?;
    let m = metrics(&phi, &truth, Some(&mask))?;
    let (cloud, _) = reconstruct_phase(&rig, &phi, high_pitch)?;
    Ok(PipelineResult { phi, cloud, metrics: m })
}

/// Checks that every file the manifest references exists and parses.
/// Returns the number of files checked.
pub fn verify(root: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<usize> {
    let root = root.as_ref();
    let mut checked = 0usize;
    let mut check_raster = |rel: &str| -> Result<()> {
        let path = root.join(rel);
        if !path.exists() {
            return Err(FppError::MissingFile(path.display().to_string()));
        }
        read_raster(&path)?;
        checked += 1;
        Ok(())
    };
    for scene in &manifest.scenes {
        for stack in &scene.stacks {
            if stack.paths.len() != stack.band.steps {
                return Err(FppError::InvalidArgument(format!(
                    "scene {}: stack at pitch {} lists {} files for {} steps",
                    scene.id,
                    stack.band.pitch,
                    stack.paths.len(),
                    stack.band.steps
                )));
            }
            for p in &stack.paths {
                check_raster(p)?;
            }
        }
        for p in [
            &scene.phi_path,
            &scene.m_h_path,
            &scene.d_h_path,
            &scene.m_r_path,
            &scene.d_r_path,
            &scene.phi_r_path,
            &scene.mask_path,
        ] {
            check_raster(p)?;
        }
    }
    let rig_path = root.join(&manifest.rig_path);
    if !rig_path.exists() {
        return Err(FppError::MissingFile(rig_path.display().to_string()));
    }
    RigCalibration::load(&rig_path)?;
    Ok(checked + 1)
}

/// Recursively collects (relative path, bytes) of a tree, sorted by
/// path — the byte-level fingerprint determinism tests compare.
pub fn tree_bytes(root: impl AsRef<Path>) -> Result<Vec<(String, Vec<u8>)>> {
    let root = root.as_ref();
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::from(root)];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path)?));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
