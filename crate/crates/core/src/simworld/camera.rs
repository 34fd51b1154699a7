use super::HeightMap;
use crate::error::SceneError;

/// Pinhole camera looking straight down at the table plane `z = 0`.
///
/// A world point `P_w = (x, y, z)` maps to the pixel
/// `p = M_int · M_ext · [x, y, z, 1]ᵀ`, followed by division by the third
/// homogeneous coordinate (the depth along the optical axis).
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub intrinsic: [[f64; 3]; 3],
    pub extrinsic: [[f64; 4]; 3],
    pub height: f64,
}

impl Default for CameraModel {
    /// Focal length equal to the camera height and principal point at the
    /// origin: every table cell center projects onto its own index.
    fn default() -> Self {
        Self::looking_down(10.0, 10.0, (0.0, 0.0))
    }
}

impl CameraModel {
    /// Camera at `height` above the table origin, optical axis pointing down.
    pub fn looking_down(height: f64, focal: f64, principal: (f64, f64)) -> Self {
        Self {
            intrinsic: [[focal, 0.0, principal.0], [0.0, focal, principal.1], [0.0, 0.0, 1.0]],
            extrinsic: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, -1.0, height]],
            height,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let k = &self.intrinsic;
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(SceneError::InvalidCamera("focal entries must be positive".into()));
        }
        if k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 {
            return Err(SceneError::InvalidCamera("intrinsic matrix must be upper-triangular".into()));
        }
        Ok(())
    }

    fn full(&self) -> [[f64; 4]; 3] {
        let mut p = [[0.0; 4]; 3];
        for (r, row) in p.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|i| self.intrinsic[r][i] * self.extrinsic[i][c]).sum();
            }
        }
        p
    }

    /// Continuous pixel coordinates of a world point.
    pub fn project(&self, point: [f64; 3]) -> Result<(f64, f64), SceneError> {
        let p = self.full();
        let hom = [point[0], point[1], point[2], 1.0];
        let v: Vec<f64> = p.iter().map(|row| row.iter().zip(&hom).map(|(a, b)| a * b).sum()).collect();
        if !(v[2] > 0.0) {
            return Err(SceneError::BehindCamera { depth: v[2] });
        }
        Ok((v[0] / v[2], v[1] / v[2]))
    }

    /// Pixel of a world point, rounded to the nearest integer.
    pub fn project_world_to_pixel(&self, point: [f64; 3]) -> Result<(i64, i64), SceneError> {
        let (u, v) = self.project(point)?;
        Ok((u.round() as i64, v.round() as i64))
    }

    /// Table-plane cell seen by pixel `(u, v)`, by inverting the plane
    /// homography.
    pub fn pixel_to_table(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let p = self.full();
        let h = [[p[0][0], p[0][1], p[0][3]], [p[1][0], p[1][1], p[1][3]], [p[2][0], p[2][1], p[2][3]]];
        let inv = invert3(&h)?;
        let q = [u, v, 1.0];
        let w: Vec<f64> = inv.iter().map(|row| row.iter().zip(&q).map(|(a, b)| a * b).sum()).collect();
        if w[2].abs() < 1e-12 {
            return None;
        }
        Some((w[0] / w[2], w[1] / w[2]))
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * c(1, 2, 1, 2) - m[0][1] * c(1, 2, 0, 2) + m[0][2] * c(1, 2, 0, 1);
    if det.abs() < 1e-12 {
        return None;
    }
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for col in 0..3 {
            out[r][col] = adj[r][col] / det;
        }
    }
    Some(out)
}

/// Depth image, row-major, same grid as the table.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Each pixel reads `camera height − surface height` at the table cell it
/// looks at. Pixels that see no table cell read the bare table depth.
pub fn render_depth(map: &HeightMap, cam: &CameraModel) -> Result<DepthImage, SceneError> {
    cam.validate()?;
    if !(cam.height > map.h_max()) {
        return Err(SceneError::InvalidCamera(format!(
            "camera height {} must exceed h_max {}",
            cam.height,
            map.h_max()
        )));
    }
    let (h, w) = map.dims();
    let mut values = Vec::with_capacity(h * w);
    for v in 0..h {
        for u in 0..w {
            let surface = match cam.pixel_to_table(u as f64, v as f64) {
                Some((x, y)) => map.at(x.round() as isize, y.round() as isize),
                None => 0.0,
            };
            values.push(cam.height - surface);
        }
    }
    Ok(DepthImage {
        height: h,
        width: w,
        values,
    })
}
