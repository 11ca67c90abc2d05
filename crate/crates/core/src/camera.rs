//! Gate-mask camera: nominal pinhole intrinsics, mask rasterization,
//! rolling-shutter warp and erosion.
//!
//! Two camera frames are used. The *camera frame* is the body frame rotated
//! by the extrinsic Euler triple (x forward, y right, z down); rates for the
//! rolling-shutter model live there. The *optical frame* is the same frame
//! with the usual pinhole axes (x right, y down, z forward) and is what
//! [`project`] consumes. Pixel `(i, j)` covers `[i, i+1) × [j, j+1)` in
//! continuous image coordinates.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::track::Track;

/// Focal length per pixel of image size: 64 px ↔ focal length 25.
pub const FOCAL_FACTOR: f64 = 25.0 / 64.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn nominal(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image size must be positive");
        Self {
            width,
            height,
            fx: FOCAL_FACTOR * width as f64,
            fy: FOCAL_FACTOR * height as f64,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        }
    }
}

/// Body-to-camera Euler rotation (ψ→θ→φ), rad.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraExtrinsics {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl CameraExtrinsics {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    /// Rotation taking camera-frame vectors into the body frame.
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// Camera-frame (forward, right, down) to optical-frame (right, down, forward).
pub fn camera_to_optical(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.y, v.z, v.x)
}

pub fn optical_to_camera(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.z, v.x, v.y)
}

/// Pinhole projection of an optical-frame point; `None` behind the camera.
pub fn project(p: &Vector3<f64>, k: &CameraIntrinsics) -> Option<(f64, f64)> {
    if p.z <= 0.0 {
        return None;
    }
    Some((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Body rates expressed in the camera frame: `(p_c, q_c, r_c)`.
pub fn body_rates_to_camera(rates: &Vector3<f64>, ext: &CameraExtrinsics) -> Vector3<f64> {
    ext.rotation().inverse_transform_vector(rates)
}

/// Row-major binary image, one byte per pixel holding 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// Builds a mask from row-major bytes; any nonzero byte becomes 1.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        (bytes.len() == width * height).then(|| Self {
            width,
            height,
            data: bytes.iter().map(|b| u8::from(*b != 0)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&b| b as usize).sum()
    }

    /// Mean pixel-center coordinate of set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let n = self.count();
        if n == 0 {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                }
            }
        }
        Some((sx / n as f64, sy / n as f64))
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &MaskImage) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| *a <= *b)
    }

    /// LSB-first bit packing, `ceil(W·H / 8)` bytes.
    pub fn pack_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.data.len().div_ceil(8)];
        for (i, &b) in self.data.iter().enumerate() {
            out[i / 8] |= b << (i % 8);
        }
        out
    }

    pub fn unpack_bits(width: usize, height: usize, packed: &[u8]) -> Option<Self> {
        let n = width * height;
        if packed.len() != n.div_ceil(8) {
            return None;
        }
        let data = (0..n).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect();
        Some(Self { width, height, data })
    }

    /// Binary portable graymap (`P5`), 0 or 255 per pixel.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&b| b * 255));
        out
    }
}

/// Renders the union of all visible gate frames (outer square minus inner
/// opening) seen from a camera at the body origin.
pub fn render_mask(
    position: &Vector3<f64>,
    attitude: &UnitQuaternion<f64>,
    ext: &CameraExtrinsics,
    k: &CameraIntrinsics,
    track: &Track,
) -> MaskImage {
    let mut mask = MaskImage::zeros(k.width, k.height);
    let optical_to_camera = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let optical_to_world = attitude.to_rotation_matrix().matrix() * ext.rotation().matrix() * optical_to_camera;

    for gate in track.gates.iter().filter(|g| g.visible) {
        let origin = gate.world_to_gate(position);
        let to_gate = gate.rotation().matrix().transpose() * optical_to_world;
        let (inner, outer) = (0.5 * gate.inner_size, 0.5 * gate.outer_size);

        for v in 0..k.height {
            let ry = (v as f64 + 0.5 - k.cy) / k.fy;
            for u in 0..k.width {
                let rx = (u as f64 + 0.5 - k.cx) / k.fx;
                let dir = to_gate * Vector3::new(rx, ry, 1.0);
                if dir.x == 0.0 {
                    continue;
                }
                let t = -origin.x / dir.x;
                if t <= 0.0 {
                    continue;
                }
                let a = (origin.y + t * dir.y).abs().max((origin.z + t * dir.z).abs());
                if a > inner && a <= outer {
                    mask.set(u, v, true);
                }
            }
        }
    }
    mask
}

/// Affine rolling-shutter approximation: horizontal shear from the camera
/// yaw rate, vertical scaling from the camera pitch rate. Each output pixel
/// samples the source pixel nearest to `A · [x, y, 1]`; sources outside the
/// image read as 0.
pub fn rolling_shutter_warp(mask: &MaskImage, s: f64, pitch_rate: f64, yaw_rate: f64) -> MaskImage {
    let (w, h) = (mask.width, mask.height);
    let shear = s * yaw_rate;
    let scale = s * pitch_rate;
    let row0 = [1.0, -shear, 0.5 * w as f64 * shear];
    let row1 = [0.0, 1.0 + scale, -0.5 * h as f64 * scale];

    let mut out = MaskImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let xs = (row0[0] * xf + row0[1] * yf + row0[2]).round();
            let ys = (row1[0] * xf + row1[1] * yf + row1[2]).round();
            if xs >= 0.0 && ys >= 0.0 && (xs as usize) < w && (ys as usize) < h {
                out.data[y * w + x] = mask.data[ys as usize * w + xs as usize];
            }
        }
    }
    out
}

/// 3×3 average pooling with edge replication followed by an all-ones
/// threshold, i.e. binary erosion by one pixel.
pub fn erode_mask(mask: &MaskImage) -> MaskImage {
    let (w, h) = (mask.width, mask.height);
    let mut out = MaskImage::zeros(w, h);
    if w == 0 || h == 0 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            for dy in [-1i64, 0, 1] {
                for dx in [-1i64, 0, 1] {
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    sum += mask.data[yy * w + xx] as u32;
                }
            }
            out.data[y * w + x] = u8::from(sum == 9);
        }
    }
    out
}
