//! Pinhole camera/projector models and the virtual rig.
//!
//! Conventions: the device frame is the usual CV pinhole frame (x right,
//! y down, z forward along the optical axis); `rotation`/`translation`
//! map world points into the device frame. The world frame is chosen to
//! coincide with the camera device frame, so the camera of the default
//! rig has identity pose and the scene sits at positive world z.
//!
//! The default rig is specified as CG-tool object poses (position plus
//! extrinsic XYZ Euler angles, camera looking down its local -z with +y
//! up); [`RigCalibration::from_object_poses`] converts those into the
//! camera-frame convention above.

use crate::error::{FppError, Result};
use crate::raster::PixelCoord;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// A ray in world coordinates with a normalized direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, s: f64) -> Vector3<f64> {
        self.origin + self.direction * s
    }
}

/// Pinhole model: intrinsics in pixels plus a world-to-device rigid pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PinholeModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-device rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-device translation, meters.
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl PinholeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(FppError::InvalidArgument(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        let r = &self.rotation;
        let err = (r * r.transpose() - Matrix3::identity()).norm();
        if err > 1e-10 {
            return Err(FppError::InvalidArgument(format!(
                "rotation is not orthonormal (||RR^T - I|| = {err:.3e})"
            )));
        }
        if (r.determinant() - 1.0).abs() > 1e-10 {
            return Err(FppError::InvalidArgument(format!(
                "rotation determinant is {}, expected +1",
                r.determinant()
            )));
        }
        Ok(())
    }

    /// Device optical center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    /// Projects a world point into pixel coordinates.
    pub fn project(&self, point: Vector3<f64>) -> Result<(f64, f64)> {
        let q = self.rotation * point + self.translation;
        if q.z <= 0.0 {
            return Err(FppError::BehindDevice(q.z));
        }
        Ok((self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy))
    }

    /// World ray through a pixel (sub-pixel coordinates allowed).
    pub fn backproject_ray(&self, u: f64, v: f64) -> Ray {
        let d_dev = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let direction = (self.rotation.transpose() * d_dev).normalize();
        Ray { origin: self.center(), direction }
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.u < self.width && p.v < self.height
    }
}

/// Camera + projector pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RigCalibration {
    pub camera: PinholeModel,
    pub projector: PinholeModel,
}

/// A CG-tool object pose: world position in meters and extrinsic XYZ
/// Euler angles in degrees (rotations applied about world X, then Y,
/// then Z).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectPose {
    pub position: [f64; 3],
    pub rotation_deg: [f64; 3],
}

fn euler_xyz_extrinsic(deg: [f64; 3]) -> Matrix3<f64> {
    let [rx, ry, rz] = deg.map(f64::to_radians);
    let mx = Matrix3::new(1.0, 0.0, 0.0, 0.0, rx.cos(), -rx.sin(), 0.0, rx.sin(), rx.cos());
    let my = Matrix3::new(ry.cos(), 0.0, ry.sin(), 0.0, 1.0, 0.0, -ry.sin(), 0.0, ry.cos());
    let mz = Matrix3::new(rz.cos(), -rz.sin(), 0.0, rz.sin(), rz.cos(), 0.0, 0.0, 0.0, 1.0);
    mz * my * mx
}

/// Converts a CG camera-object local frame (x right, y up, looking down
/// local -z) to the CV device frame (x right, y down, z forward).
fn cv_to_object() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
}

impl RigCalibration {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.projector.validate()?;
        let baseline = (self.camera.center() - self.projector.center()).norm();
        if baseline <= 0.0 {
            return Err(FppError::DegenerateRig("zero baseline".into()));
        }
        Ok(())
    }

    pub fn baseline(&self) -> f64 {
        (self.camera.center() - self.projector.center()).norm()
    }

    /// Builds a rig from CG object poses, re-expressing everything in the
    /// camera device frame (camera gets identity pose).
    #[allow(clippy::too_many_arguments)]
    pub fn from_object_poses(
        camera_pose: ObjectPose,
        projector_pose: ObjectPose,
        camera_intrinsics: (f64, f64, f64, f64),
        camera_res: (usize, usize),
        projector_intrinsics: (f64, f64, f64, f64),
        projector_res: (usize, usize),
    ) -> Result<Self> {
        let c = cv_to_object();
        // device->world maps for both objects
        let r_cam = euler_xyz_extrinsic(camera_pose.rotation_deg) * c;
        let r_proj = euler_xyz_extrinsic(projector_pose.rotation_deg) * c;
        let p_cam = Vector3::from(camera_pose.position);
        let p_proj = Vector3::from(projector_pose.position);

        // New world frame := camera device frame.
        let (cfx, cfy, ccx, ccy) = camera_intrinsics;
        let camera = PinholeModel {
            fx: cfx,
            fy: cfy,
            cx: ccx,
            cy: ccy,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            width: camera_res.0,
            height: camera_res.1,
        };
        let rotation = r_proj.transpose() * r_cam;
        let translation = r_proj.transpose() * (p_cam - p_proj);
        let (pfx, pfy, pcx, pcy) = projector_intrinsics;
        let projector = PinholeModel {
            fx: pfx,
            fy: pfy,
            cx: pcx,
            cy: pcy,
            rotation,
            translation,
            width: projector_res.0,
            height: projector_res.1,
        };
        let rig = RigCalibration { camera, projector };
        rig.validate()?;
        Ok(rig)
    }

    /// The default virtual rig: camera at the origin rotated (90, 0, 90)
    /// degrees, 640x480, 12 mm lens on a 4.8 mm-wide sensor (fx = 1600 px);
    /// projector at (-0.15, 0.045, 0) rotated (90, 0, 95) degrees,
    /// 912x1140, with a default 1200 px focal length chosen so the
    /// projection covers the camera's field of view at half-meter range.
    pub fn default_rig() -> Self {
        RigCalibration::from_object_poses(
            ObjectPose { position: [0.0, 0.0, 0.0], rotation_deg: [90.0, 0.0, 90.0] },
            ObjectPose { position: [-0.15, 0.045, 0.0], rotation_deg: [90.0, 0.0, 95.0] },
            (1600.0, 1600.0, 320.0, 240.0),
            (640, 480),
            (1200.0, 1200.0, 456.0, 570.0),
            (912, 1140),
        )
        .expect("default rig is valid")
    }

    pub fn to_json(&self) -> RigFile {
        RigFile { camera: DeviceBlock::from_model(&self.camera), projector: DeviceBlock::from_model(&self.projector) }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, &self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref()).map_err(|_| {
            FppError::MissingFile(path.as_ref().display().to_string())
        })?;
        let file: RigFile = serde_json::from_reader(f)?;
        let rig = RigCalibration { camera: file.camera.to_model()?, projector: file.projector.to_model()? };
        rig.validate()?;
        Ok(rig)
    }
}

/// On-disk rig description (JSON).
#[derive(Debug, Serialize, Deserialize)]
pub struct RigFile {
    pub camera: DeviceBlock,
    pub projector: DeviceBlock,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DeviceBlock {
    /// 3x3 intrinsics matrix, row-major.
    pub intrinsics: [[f64; 3]; 3],
    /// 3x3 world-to-device rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// World-to-device translation, meters.
    pub translation: [f64; 3],
    /// (width, height) pixels.
    pub resolution: [usize; 2],
}

impl DeviceBlock {
    fn from_model(m: &PinholeModel) -> Self {
        let r = &m.rotation;
        DeviceBlock {
            intrinsics: [[m.fx, 0.0, m.cx], [0.0, m.fy, m.cy], [0.0, 0.0, 1.0]],
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [m.translation.x, m.translation.y, m.translation.z],
            resolution: [m.width, m.height],
        }
    }

    fn to_model(&self) -> Result<PinholeModel> {
        let k = self.intrinsics;
        let r = self.rotation;
        let model = PinholeModel {
            fx: k[0][0],
            fy: k[1][1],
            cx: k[0][2],
            cy: k[1][2],
            rotation: Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            translation: Vector3::from(self.translation),
            width: self.resolution[0],
            height: self.resolution[1],
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_model(fx: f64, fy: f64, cx: f64, cy: f64) -> PinholeModel {
        PinholeModel {
            fx,
            fy,
            cx,
            cy,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            width: 640,
            height: 480,
        }
    }

    #[test]
    fn project_examples() {
        let m = identity_model(1.0, 1.0, 0.0, 0.0);
        assert_eq!(m.project(Vector3::new(0.0, 0.0, 1.0)).unwrap(), (0.0, 0.0));

        let m = identity_model(100.0, 100.0, 320.0, 240.0);
        let (u, _) = m.project(Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((u - 330.0).abs() < 1e-12);

        assert!(matches!(
            m.project(Vector3::new(0.0, 0.0, -1.0)),
            Err(FppError::BehindDevice(_))
        ));
    }

    #[test]
    fn backproject_principal_point_is_optical_axis() {
        let m = identity_model(1600.0, 1600.0, 320.0, 240.0);
        let ray = m.backproject_ray(320.0, 240.0);
        assert_eq!(ray.origin, Vector3::zeros());
        assert!((ray.direction - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn project_backproject_round_trip() {
        let rig = RigCalibration::default_rig();
        for model in [&rig.camera, &rig.projector] {
            let p = Vector3::new(0.01, -0.02, 0.55);
            let (u, v) = model.project(p).unwrap();
            let ray = model.backproject_ray(u, v);
            // ray passes through p
            let s = (p - ray.origin).dot(&ray.direction);
            assert!((ray.at(s) - p).norm() < 1e-9);
            // and reprojects to the same pixel for any s > 0
            let (u2, v2) = model.project(ray.at(0.3 * s)).unwrap();
            assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9);
        }
    }

    /// Fixture for the CG Euler-angle convention: the default rig places
    /// the projector slightly right of and in front of the camera, looking
    /// mostly along +z with a 5 degree yaw back toward the camera axis.
    #[test]
    fn default_rig_fixture() {
        let rig = RigCalibration::default_rig();
        rig.validate().unwrap();
        assert_eq!(rig.camera.rotation, Matrix3::identity());

        let c = rig.projector.center();
        assert!((c - Vector3::new(0.045, 0.0, 0.15)).norm() < 1e-12, "center {c:?}");

        let fwd = rig.projector.rotation.transpose() * Vector3::new(0.0, 0.0, 1.0);
        let expect = Vector3::new(-(5f64.to_radians().sin()), 0.0, 5f64.to_radians().cos());
        assert!((fwd - expect).norm() < 1e-12, "forward {fwd:?}");

        assert!((rig.baseline() - (0.045f64 * 0.045 + 0.15 * 0.15).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn default_rig_sees_scene_volume() {
        let rig = RigCalibration::default_rig();
        // a point on the camera axis at half-meter depth lands inside both devices
        let p = Vector3::new(0.0, 0.0, 0.5);
        let (u, v) = rig.camera.project(p).unwrap();
        assert!((u - 320.0).abs() < 1e-9 && (v - 240.0).abs() < 1e-9);
        let (up, vp) = rig.projector.project(p).unwrap();
        assert!(rig.projector.contains_pixel(up, vp), "projector pixel ({up}, {vp})");
    }

    #[test]
    fn rig_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.json");
        let rig = RigCalibration::default_rig();
        rig.save(&path).unwrap();
        let back = RigCalibration::load(&path).unwrap();
        assert!((back.projector.rotation - rig.projector.rotation).norm() < 1e-15);
        assert!((back.projector.translation - rig.projector.translation).norm() < 1e-15);
        assert_eq!(back.camera.width, 640);
    }
}
