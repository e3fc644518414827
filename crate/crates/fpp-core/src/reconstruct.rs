//! Triangular-stereo reconstruction: absolute phase identifies the
//! projector column seen by each camera pixel, and intersecting the
//! camera-pixel ray with that projector-column plane yields a metric 3D
//! point. Plus sphere fitting for validation, accuracy metrics and an
//! ASCII point-cloud export.

use crate::error::{FppError, Result};
use crate::geometry::{PinholeModel, RigCalibration};
use crate::raster::{Raster, RasterKind, TAU};
use nalgebra::{Matrix3, Vector3};
use std::io::{BufWriter, Write};
use std::path::Path;

/// Reconstructed points in millimeters with their source pixels.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub pixels: Vec<(usize, usize)>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sphere parameters in millimeters.
#[derive(Debug, Clone, Copy)]
pub struct SphereFit {
    pub center: [f64; 3],
    pub radius: f64,
    pub rms_residual: f64,
}

/// `u_p = Phi * pitch / 2pi` per pixel.
pub fn phase_to_projector_column(phi: &Raster, pitch: f64) -> Result<Raster> {
    if !(pitch > 0.0) {
        return Err(FppError::InvalidArgument(format!("pitch must be positive, got {pitch}")));
    }
    let mut out = phi.clone();
    out.set_kind(RasterKind::Depth);
    let scale = pitch / TAU;
    for x in out.data_mut() {
        *x *= scale;
    }
    Ok(out)
}

/// One row of the linear system `a . p = c` cut from a device's
/// projection: `coord = (f * r_axis . p + f * t_axis)/(r3 . p + t_z) + c0`.
fn projection_row(
    device: &PinholeModel,
    f: f64,
    axis: usize,
    principal: f64,
    coord: f64,
) -> (Vector3<f64>, f64) {
    let r = &device.rotation;
    let t = &device.translation;
    let row_a = f * r.row(axis).transpose() + (principal - coord) * r.row(2).transpose();
    let c = -(f * t[axis] + (principal - coord) * t[2]);
    (row_a, c)
}

/// Solves the three projection equations (camera u and v, projector u)
/// for the world point, in meters. `u`/`v` are continuous camera
/// coordinates; rays cast through pixel centers correspond to
/// `(u + 0.5, v + 0.5)`. Returns `None` when the system is numerically
/// singular (near-parallel rays).
pub fn triangulate_pixel(
    rig: &RigCalibration,
    u: f64,
    v: f64,
    u_p: f64,
) -> Option<Vector3<f64>> {
    let cam = &rig.camera;
    let proj = &rig.projector;
    let (r0, c0) = projection_row(cam, cam.fx, 0, cam.cx, u);
    let (r1, c1) = projection_row(cam, cam.fy, 1, cam.cy, v);
    let (r2, c2) = projection_row(proj, proj.fx, 0, proj.cx, u_p);
    let a = Matrix3::from_rows(&[r0.transpose(), r1.transpose(), r2.transpose()]);
    let b = Vector3::new(c0, c1, c2);
    let lu = a.lu();
    if lu.determinant().abs() < 1e-12 {
        return None;
    }
    lu.solve(&b)
}

/// Triangulates every valid pixel of a projector-column raster into a
/// millimeter point cloud, plus a depth raster (mm) aligned with the
/// input.
pub fn triangulate(rig: &RigCalibration, columns: &Raster) -> Result<(PointCloud, Raster)> {
    rig.validate()?;
    if columns.width() != rig.camera.width || columns.height() != rig.camera.height {
        return Err(FppError::DimensionMismatch {
            expected: format!("{}x{}", rig.camera.width, rig.camera.height),
            got: format!("{}x{}", columns.width(), columns.height()),
        });
    }
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    let mut depth = Raster::new(columns.width(), columns.height(), RasterKind::Depth)?;
    for v in 0..columns.height() {
        for u in 0..columns.width() {
            if !columns.is_valid(u, v) {
                depth.invalidate(u, v);
                continue;
            }
            let u_p = columns.get(u, v);
            match triangulate_pixel(rig, u as f64 + 0.5, v as f64 + 0.5, u_p) {
                Some(p) if p.iter().all(|x| x.is_finite()) => {
                    points.push([p.x * 1000.0, p.y * 1000.0, p.z * 1000.0]);
                    pixels.push((u, v));
                    depth.set(u, v, p.z * 1000.0);
                }
                _ => depth.invalidate(u, v),
            }
        }
    }
    Ok((PointCloud { points, pixels }, depth))
}

/// Full chain from absolute phase to a millimeter cloud.
pub fn reconstruct_phase(
    rig: &RigCalibration,
    phi: &Raster,
    pitch: f64,
) -> Result<(PointCloud, Raster)> {
    let columns = phase_to_projector_column(phi, pitch)?;
    triangulate(rig, &columns)
}

/// Algebraic least-squares sphere fit followed by 20 Gauss-Newton
/// refinement steps on the geometric residuals.
pub fn fit_sphere(cloud: &PointCloud) -> Result<SphereFit> {
    let n = cloud.points.len();
    if n < 4 {
        return Err(FppError::InvalidArgument(format!("sphere fit needs >= 4 points, got {n}")));
    }
    // linear form: 2x*a + 2y*b + 2z*c + d = x^2 + y^2 + z^2
    // solve the 4x4 normal equations
    let mut ata = nalgebra::Matrix4::<f64>::zeros();
    let mut atb = nalgebra::Vector4::<f64>::zeros();
    for p in &cloud.points {
        let row = nalgebra::Vector4::new(2.0 * p[0], 2.0 * p[1], 2.0 * p[2], 1.0);
        let rhs = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        ata += row * row.transpose();
        atb += row * rhs;
    }
    let lu = ata.lu();
    if lu.determinant().abs() < 1e-6 {
        return Err(FppError::DegenerateRig(
            "sphere fit is degenerate (points coplanar or coincident)".into(),
        ));
    }
    let sol = lu.solve(&atb).ok_or_else(|| {
        FppError::DegenerateRig("sphere fit normal equations unsolvable".into())
    })?;
    let mut center = Vector3::new(sol[0], sol[1], sol[2]);
    let mut radius = (sol[3] + center.norm_squared()).max(0.0).sqrt();
    if radius <= 0.0 {
        return Err(FppError::DegenerateRig("sphere fit collapsed to zero radius".into()));
    }
    // Gauss-Newton on r_i = |p_i - c| - R over (c, R)
    for _ in 0..20 {
        let mut jtj = nalgebra::Matrix4::<f64>::zeros();
        let mut jtr = nalgebra::Vector4::<f64>::zeros();
        for p in &cloud.points {
            let d = Vector3::new(p[0], p[1], p[2]) - center;
            let dist = d.norm();
            if dist < 1e-12 {
                continue;
            }
            let res = dist - radius;
            let jac = nalgebra::Vector4::new(-d.x / dist, -d.y / dist, -d.z / dist, -1.0);
            jtj += jac * jac.transpose();
            jtr += jac * res;
        }
        let Some(delta) = jtj.lu().solve(&jtr) else {
            break;
        };
        center -= Vector3::new(delta[0], delta[1], delta[2]);
        radius -= delta[3];
        if delta.norm() < 1e-14 {
            break;
        }
    }
    if !(radius > 0.0) {
        return Err(FppError::DegenerateRig("sphere fit collapsed to zero radius".into()));
    }
    let ss: f64 = cloud
        .points
        .iter()
        .map(|p| {
            let r = (Vector3::new(p[0], p[1], p[2]) - center).norm() - radius;
            r * r
        })
        .sum();
    Ok(SphereFit {
        center: [center.x, center.y, center.z],
        radius,
        rms_residual: (ss / n as f64).sqrt(),
    })
}

/// Mean absolute error and root-mean-square error over jointly valid
/// pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
}

pub fn metrics(pred: &Raster, truth: &Raster, mask: Option<&Raster>) -> Result<Metrics> {
    pred.expect_same_dims(truth)?;
    if let Some(m) = mask {
        pred.expect_same_dims(m)?;
    }
    let mut sum_abs = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for i in 0..pred.len() {
        let masked_in = mask.map_or(true, |m| m.data()[i] != 0.0 && m.validity()[i]);
        if masked_in && pred.validity()[i] && truth.validity()[i] {
            let e = pred.data()[i] - truth.data()[i];
            sum_abs += e.abs();
            sum_sq += e * e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(FppError::EmptyMask);
    }
    Ok(Metrics { mae: sum_abs / count as f64, rmse: (sum_sq / count as f64).sqrt() })
}

/// ASCII PLY export: header then one `x y z` line per point, coordinates
/// as 32-bit reals.
pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.points.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
    }
    w.flush()?;
    Ok(())
}
