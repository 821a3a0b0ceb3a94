//! Fixed pinhole rig: four cameras on the table's sides, all aimed at the
//! table centre. World frame is millimetres with x to the right of the front
//! camera, y away from it, z up; the table top is the plane z = 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::scene::geometry::BBox;

pub const IMAGE_WIDTH: f64 = 640.0;
pub const IMAGE_HEIGHT: f64 = 480.0;
/// Horizontal distance from the table centre to each camera.
pub const CAMERA_DISTANCE: f64 = 900.0;
pub const CAMERA_ELEVATION: f64 = 700.0;
pub const FOCAL_PX: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraView {
    Front,
    Back,
    Left,
    Right,
}

impl CameraView {
    pub const ALL: [CameraView; 4] = [
        CameraView::Front,
        CameraView::Back,
        CameraView::Left,
        CameraView::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CameraView::Front => "front",
            CameraView::Back => "back",
            CameraView::Left => "left",
            CameraView::Right => "right",
        }
    }
}

impl fmt::Display for CameraView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CameraView {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CameraView::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown camera view {s:?}"))
    }
}

type Vec3<T> = [T; 3];

fn sub<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize<T: Scalar>(a: Vec3<T>) -> Vec3<T> {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Debug, Clone, Copy)]
pub struct Camera<T> {
    pub eye: Vec3<T>,
    pub right: Vec3<T>,
    pub down: Vec3<T>,
    pub forward: Vec3<T>,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Scalar> Camera<T> {
    pub fn for_view(view: CameraView) -> Self {
        let d = T::lit(CAMERA_DISTANCE);
        let h = T::lit(CAMERA_ELEVATION);
        let z = T::zero();
        let eye = match view {
            CameraView::Front => [z, -d, h],
            CameraView::Back => [z, d, h],
            CameraView::Left => [-d, z, h],
            CameraView::Right => [d, z, h],
        };
        let forward = normalize(sub([z, z, z], eye));
        let right = normalize(cross(forward, [z, z, T::one()]));
        let down = cross(forward, right);
        let f = T::lit(FOCAL_PX);
        Self {
            eye,
            right,
            down,
            forward,
            fx: f,
            fy: f,
            cx: T::lit(IMAGE_WIDTH / 2.0),
            cy: T::lit(IMAGE_HEIGHT / 2.0),
        }
    }

    /// World point to image pixel (u right, v down).
    pub fn project(&self, p: Vec3<T>) -> (T, T) {
        let rel = sub(p, self.eye);
        let zc = dot(rel, self.forward);
        let u = self.fx * dot(rel, self.right) / zc + self.cx;
        let v = self.fy * dot(rel, self.down) / zc + self.cy;
        (u, v)
    }

    /// Intersects the pixel's viewing ray with the horizontal plane at `plane_z`.
    pub fn backproject(&self, u: T, v: T, plane_z: T) -> Option<(T, T)> {
        let a = (u - self.cx) / self.fx;
        let b = (v - self.cy) / self.fy;
        let dir = [
            self.forward[0] + a * self.right[0] + b * self.down[0],
            self.forward[1] + a * self.right[1] + b * self.down[1],
            self.forward[2] + a * self.right[2] + b * self.down[2],
        ];
        if dir[2].abs() < T::lit(1e-12) {
            return None;
        }
        let t = (plane_z - self.eye[2]) / dir[2];
        if t <= T::zero() {
            return None;
        }
        Some((self.eye[0] + t * dir[0], self.eye[1] + t * dir[1]))
    }
}

/// Projects an axis-aligned cuboid `[x0,x1]×[y0,y1]×[z0,z1]` and clamps
/// the enclosing box to the image frame.
pub fn project_cuboid<T: Scalar>(
    view: CameraView,
    (x0, y0, x1, y1): (T, T, T, T),
    (z0, z1): (T, T),
) -> BBox<T> {
    let cam = Camera::<T>::for_view(view);
    let mut u_lo = T::infinity();
    let mut v_lo = T::infinity();
    let mut u_hi = T::neg_infinity();
    let mut v_hi = T::neg_infinity();
    for x in [x0, x1] {
        for y in [y0, y1] {
            for z in [z0, z1] {
                let (u, v) = cam.project([x, y, z]);
                u_lo = u_lo.min(u);
                u_hi = u_hi.max(u);
                v_lo = v_lo.min(v);
                v_hi = v_hi.max(v);
            }
        }
    }
    clamp_to_frame(u_lo, v_lo, u_hi, v_hi)
}

/// Clamps to `[0, W] × [0, H]`, keeping at least one pixel of extent.
pub fn clamp_to_frame<T: Scalar>(x0: T, y0: T, x1: T, y1: T) -> BBox<T> {
    let w = T::lit(IMAGE_WIDTH);
    let h = T::lit(IMAGE_HEIGHT);
    let one = T::one();
    let cl = |v: T, hi: T| v.max(T::zero()).min(hi);
    let mut bx0 = cl(x0.min(x1), w);
    let mut bx1 = cl(x0.max(x1), w);
    let mut by0 = cl(y0.min(y1), h);
    let mut by1 = cl(y0.max(y1), h);
    if bx1 - bx0 < one {
        bx0 = bx0.min(w - one);
        bx1 = bx0 + one;
    }
    if by1 - by0 < one {
        by0 = by0.min(h - one);
        by1 = by0 + one;
    }
    BBox {
        x_min: bx0,
        y_min: by0,
        x_max: bx1,
        y_max: by1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_centre_projects_to_principal_point() {
        for view in CameraView::ALL {
            let cam = Camera::<f64>::for_view(view);
            let (u, v) = cam.project([0.0, 0.0, 0.0]);
            assert!((u - 320.0).abs() < 1e-9 && (v - 240.0).abs() < 1e-9, "{view}");
        }
    }

    #[test]
    fn front_camera_by_hand() {
        // Eye (0,-900,700); forward = (0,900,-700)/n, n = sqrt(900^2+700^2).
        // Point (100,0,0): rel = (100,900,-700), zc = n, x_c = 100 -> u = 320 + 600*100/n.
        let n = (900.0f64 * 900.0 + 700.0 * 700.0).sqrt();
        let (u, v) = Camera::<f64>::for_view(CameraView::Front).project([100.0, 0.0, 0.0]);
        assert!((u - (320.0 + 600.0 * 100.0 / n)).abs() < 1e-9);
        assert!((v - 240.0).abs() < 1e-9);
    }

    #[test]
    fn backproject_inverts_project() {
        for view in CameraView::ALL {
            let cam = Camera::<f64>::for_view(view);
            for &(x, y, z) in &[(120.0, -80.0, 0.0), (-300.0, 250.0, 45.0), (0.0, 10.0, 100.0)] {
                let (u, v) = cam.project([x, y, z]);
                let (bx, by) = cam.backproject(u, v, z).unwrap();
                assert!((bx - x).abs() < 1e-6 && (by - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn clamp_keeps_valid_box() {
        let b = clamp_to_frame(700.0f64, 10.0, 720.0, 20.0);
        assert!(b.x_min < b.x_max && b.x_max <= IMAGE_WIDTH);
    }
}
