//! Tabletop micro-world: procedurally placed objects on a flat table, a
//! top-down depth camera, a one-pixel-per-step gripper and a compliant
//! taxel sensor under the gripper footprint.

mod camera;
mod scene_file;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use camera::{render_depth, CameraModel, DepthImage};
pub use scene_file::{parse_scene, write_scene};

use crate::error::SceneError;
use crate::filter::{ActionDir, GridState};

pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_FOOTPRINT: usize = 5;
pub const DEFAULT_H_MAX: f64 = 1.0;
pub const DEFAULT_MOTION_NOISE: f64 = 0.1;
pub const PLACEMENT_ATTEMPTS: usize = 100;

const HEIGHT_RANGE: (f64, f64) = (0.3, 1.0);
const PRIMITIVE_MARGIN: i32 = 6;
const COMPOSITE_MARGIN: i32 = 8;
const MIN_GAP: i32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectFamily {
    Primitive,
    Composite,
}

impl ObjectFamily {
    pub fn name(self) -> &'static str {
        match self {
            ObjectFamily::Primitive => "primitive",
            ObjectFamily::Composite => "composite",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "primitive" => Some(ObjectFamily::Primitive),
            "composite" => Some(ObjectFamily::Composite),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Axis-aligned box covering `(2·hx + 1) × (2·hy + 1)` cells.
    Box { hx: u32, hy: u32 },
    /// Spherical cap of the given footprint radius.
    Sphere { radius: f64 },
    /// Upright cylinder: a flat disk.
    Cylinder { radius: f64 },
    /// Lying capsule: half-cylinder with hemispherical ends, segment of
    /// half-length `half_length` along `axis`.
    Capsule { radius: f64, half_length: f64, axis: Axis },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub cx: i32,
    pub cy: i32,
    pub height: f64,
}

/// Inclusive cell rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl Bounds {
    fn union(self, o: Bounds) -> Bounds {
        Bounds {
            x0: self.x0.min(o.x0),
            y0: self.y0.min(o.y0),
            x1: self.x1.max(o.x1),
            y1: self.y1.max(o.y1),
        }
    }

    fn separated(self, o: Bounds, gap: i32) -> bool {
        self.x1 + gap < o.x0 || o.x1 + gap < self.x0 || self.y1 + gap < o.y0 || o.y1 + gap < self.y0
    }

    fn inside(self, height: usize, width: usize) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 < width as i32 && self.y1 < height as i32
    }
}

impl Primitive {
    /// Surface height of this primitive at cell `(x, y)`; 0 outside.
    pub fn height_at(&self, x: i32, y: i32) -> f64 {
        let dx = (x - self.cx) as f64;
        let dy = (y - self.cy) as f64;
        match self.shape {
            Shape::Box { hx, hy } => {
                if dx.abs() <= hx as f64 && dy.abs() <= hy as f64 {
                    self.height
                } else {
                    0.0
                }
            }
            Shape::Sphere { radius } => cap(self.height, dx.hypot(dy), radius),
            Shape::Cylinder { radius } => {
                if dx.hypot(dy) <= radius {
                    self.height
                } else {
                    0.0
                }
            }
            Shape::Capsule {
                radius,
                half_length,
                axis,
            } => {
                let (along, across) = match axis {
                    Axis::X => (dx, dy),
                    Axis::Y => (dy, dx),
                };
                let beyond = (along.abs() - half_length).max(0.0);
                cap(self.height, beyond.hypot(across), radius)
            }
        }
    }

    pub fn bounds(&self) -> Bounds {
        let (ex, ey) = match self.shape {
            Shape::Box { hx, hy } => (hx as i32, hy as i32),
            Shape::Sphere { radius } | Shape::Cylinder { radius } => {
                let r = radius.floor() as i32;
                (r, r)
            }
            Shape::Capsule {
                radius,
                half_length,
                axis,
            } => {
                let long = (half_length + radius).floor() as i32;
                let short = radius.floor() as i32;
                match axis {
                    Axis::X => (long, short),
                    Axis::Y => (short, long),
                }
            }
        };
        Bounds {
            x0: self.cx - ex,
            y0: self.cy - ey,
            x1: self.cx + ex,
            y1: self.cy + ey,
        }
    }
}

fn cap(h: f64, r: f64, radius: f64) -> f64 {
    if r <= radius {
        h * (1.0 - (r / radius).powi(2)).max(0.0).sqrt()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectSpec {
    Primitive(Primitive),
    /// Overlapping parts fused by pointwise max.
    Composite(Vec<Primitive>),
}

impl ObjectSpec {
    pub fn parts(&self) -> &[Primitive] {
        match self {
            ObjectSpec::Primitive(p) => std::slice::from_ref(p),
            ObjectSpec::Composite(parts) => parts,
        }
    }

    pub fn height_at(&self, x: i32, y: i32) -> f64 {
        self.parts().iter().map(|p| p.height_at(x, y)).fold(0.0, f64::max)
    }

    pub fn bounds(&self) -> Bounds {
        let parts = self.parts();
        parts[1..].iter().fold(parts[0].bounds(), |b, p| b.union(p.bounds()))
    }

    pub fn center(&self) -> (i32, i32) {
        let p = &self.parts()[0];
        (p.cx, p.cy)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub objects: Vec<ObjectSpec>,
    pub seed: u64,
    pub motion_noise: f64,
    pub sensor_noise: f64,
    pub family: ObjectFamily,
}

impl SceneConfig {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            objects: Vec::new(),
            seed: 0,
            motion_noise: 0.0,
            sensor_noise: 0.0,
            family: ObjectFamily::Primitive,
        }
    }

    pub fn with_objects(height: usize, width: usize, objects: Vec<ObjectSpec>) -> Self {
        Self {
            objects,
            ..Self::empty(height, width)
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.height == 0 || self.width == 0 {
            return Err(SceneError::Invalid("empty grid".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.parts().is_empty() {
                return Err(SceneError::Invalid(format!("object {i} has no parts")));
            }
            for p in o.parts() {
                let sizes_ok = match p.shape {
                    Shape::Box { hx, hy } => hx > 0 && hy > 0,
                    Shape::Sphere { radius } | Shape::Cylinder { radius } => radius > 0.0,
                    Shape::Capsule {
                        radius, half_length, ..
                    } => radius > 0.0 && half_length > 0.0,
                };
                if !sizes_ok || !(p.height > 0.0) {
                    return Err(SceneError::Invalid(format!("object {i} has a non-positive size")));
                }
            }
            if !o.bounds().inside(self.height, self.width) {
                return Err(SceneError::Invalid(format!("object {i} leaves the table")));
            }
        }
        if !(0.0..=1.0).contains(&self.motion_noise) || !(self.sensor_noise >= 0.0) {
            return Err(SceneError::Invalid("noise parameters out of range".into()));
        }
        Ok(())
    }
}

fn sample_height<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(HEIGHT_RANGE.0..HEIGHT_RANGE.1)
}

fn sample_shape<R: Rng + ?Sized>(rng: &mut R, small: bool) -> Shape {
    match (rng.random_range(0..4u8), small) {
        (0, false) => Shape::Box {
            hx: rng.random_range(1..=4),
            hy: rng.random_range(1..=4),
        },
        (0, true) => Shape::Box {
            hx: rng.random_range(1..=3),
            hy: rng.random_range(1..=3),
        },
        (1, false) => Shape::Sphere {
            radius: rng.random_range(2.0..4.5),
        },
        (1, true) => Shape::Sphere {
            radius: rng.random_range(1.5..3.0),
        },
        (2, false) => Shape::Cylinder {
            radius: rng.random_range(1.5..4.0),
        },
        (2, true) => Shape::Cylinder {
            radius: rng.random_range(1.5..3.0),
        },
        (_, false) => Shape::Capsule {
            radius: rng.random_range(1.0..2.5),
            half_length: rng.random_range(1.5..3.5),
            axis: if rng.random_bool(0.5) { Axis::X } else { Axis::Y },
        },
        (_, true) => Shape::Capsule {
            radius: rng.random_range(1.0..2.0),
            half_length: rng.random_range(1.5..2.5),
            axis: if rng.random_bool(0.5) { Axis::X } else { Axis::Y },
        },
    }
}

fn sample_object<R: Rng + ?Sized>(rng: &mut R, family: ObjectFamily, cx: i32, cy: i32) -> ObjectSpec {
    let base = Primitive {
        shape: sample_shape(rng, false),
        cx,
        cy,
        height: sample_height(rng),
    };
    match family {
        ObjectFamily::Primitive => ObjectSpec::Primitive(base),
        ObjectFamily::Composite => {
            let extra = rng.random_range(1..=2);
            let mut parts = vec![base];
            // attach each part at a cell supported by the base so parts overlap
            let anchors: Vec<(i32, i32)> = (-2..=2)
                .flat_map(|oy| (-2..=2).map(move |ox| (ox, oy)))
                .filter(|&(ox, oy)| (ox, oy) != (0, 0) && base.height_at(cx + ox, cy + oy) > 0.0)
                .collect();
            for _ in 0..extra {
                let (ox, oy) = if anchors.is_empty() {
                    (0, 0)
                } else {
                    anchors[rng.random_range(0..anchors.len())]
                };
                parts.push(Primitive {
                    shape: sample_shape(rng, true),
                    cx: cx + ox,
                    cy: cy + oy,
                    height: sample_height(rng),
                });
            }
            ObjectSpec::Composite(parts)
        }
    }
}

/// Draws 1–4 pairwise separated objects with centers uniform over the table
/// interior.
pub fn generate_scene<R: Rng + ?Sized>(
    rng: &mut R,
    family: ObjectFamily,
    height: usize,
    width: usize,
) -> Result<SceneConfig, SceneError> {
    if height < 16 || width < 16 {
        return Err(SceneError::GridTooSmall { height, width });
    }
    let margin = match family {
        ObjectFamily::Primitive => PRIMITIVE_MARGIN,
        ObjectFamily::Composite => COMPOSITE_MARGIN,
    };
    // on small tables the margin shrinks to keep the center range nonempty;
    // oversized objects are then rejected by the bounds check
    let mx = margin.min((width as i32 - 1) / 2);
    let my = margin.min((height as i32 - 1) / 2);
    let count = rng.random_range(1..=4);
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(count);
    for index in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cx = rng.random_range(mx..=width as i32 - 1 - mx);
            let cy = rng.random_range(my..=height as i32 - 1 - my);
            let obj = sample_object(rng, family, cx, cy);
            let b = obj.bounds();
            if b.inside(height, width) && objects.iter().all(|o| o.bounds().separated(b, MIN_GAP)) {
                objects.push(obj);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneError::PlacementExhausted {
                index,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(SceneConfig {
        height,
        width,
        objects,
        seed: 0,
        motion_noise: DEFAULT_MOTION_NOISE,
        sensor_noise: 0.0,
        family,
    })
}

/// Two identical primitives at separated random positions. Their local
/// touch signatures coincide, which makes the scene ambiguous to touch.
pub fn generate_twin_scene<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> Result<SceneConfig, SceneError> {
    if height < 16 || width < 16 {
        return Err(SceneError::GridTooSmall { height, width });
    }
    let template = Primitive {
        shape: Shape::Box {
            hx: rng.random_range(1..=3),
            hy: rng.random_range(1..=3),
        },
        cx: 0,
        cy: 0,
        height: sample_height(rng),
    };
    for _ in 0..PLACEMENT_ATTEMPTS {
        let m = PRIMITIVE_MARGIN;
        let a = Primitive {
            cx: rng.random_range(m..=width as i32 - 1 - m),
            cy: rng.random_range(m..=height as i32 - 1 - m),
            ..template
        };
        let b = Primitive {
            cx: rng.random_range(m..=width as i32 - 1 - m),
            cy: rng.random_range(m..=height as i32 - 1 - m),
            ..template
        };
        // keep footprint scans of the two objects from interacting
        if a.bounds().separated(b.bounds(), DEFAULT_FOOTPRINT as i32) {
            return Ok(SceneConfig {
                objects: vec![ObjectSpec::Primitive(a), ObjectSpec::Primitive(b)],
                motion_noise: DEFAULT_MOTION_NOISE,
                ..SceneConfig::empty(height, width)
            });
        }
    }
    Err(SceneError::PlacementExhausted {
        index: 1,
        attempts: PLACEMENT_ATTEMPTS,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeightMap {
    height: usize,
    width: usize,
    h_max: f64,
    values: Vec<f64>,
}

impl HeightMap {
    pub fn flat(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            h_max: DEFAULT_H_MAX,
            values: vec![0.0; height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Height at a cell, 0 off the table.
    pub fn at(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            0.0
        } else {
            self.values[y as usize * self.width + x as usize]
        }
    }
}

pub fn rasterize(scene: &SceneConfig) -> HeightMap {
    let mut map = HeightMap::flat(scene.height, scene.width);
    for y in 0..scene.height {
        for x in 0..scene.width {
            let h = scene
                .objects
                .iter()
                .map(|o| o.height_at(x as i32, y as i32))
                .fold(0.0, f64::max);
            map.values[y * scene.width + x] = h.min(map.h_max);
        }
    }
    map
}

/// Moves one pixel in the action direction with probability `1 − ε`
/// (clamped at the table edge), stays otherwise.
pub fn step<R: Rng + ?Sized>(
    state: GridState,
    action: ActionDir,
    height: usize,
    width: usize,
    motion_noise: f64,
    rng: &mut R,
) -> GridState {
    if motion_noise > 0.0 && rng.random::<f64>() < motion_noise {
        return state;
    }
    let (dx, dy) = action.delta();
    let x = (state.x as isize + dx).clamp(0, width as isize - 1) as usize;
    let y = (state.y as isize + dy).clamp(0, height as isize - 1) as usize;
    GridState { x, y }
}

/// Taxel displacements under the `K×K` footprint centered on `state`,
/// row-major. Off-table taxels read 0. Gaussian noise `σ` is added and the
/// result clamped to `[0, h_max]`; with `σ = 0` the RNG is not touched.
pub fn sense<R: Rng + ?Sized>(map: &HeightMap, state: GridState, k: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let mut out = sense_exact(map, state, k);
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        for v in &mut out {
            *v = (*v + noise.sample(rng)).clamp(0.0, map.h_max);
        }
    }
    out
}

/// Noise-free reading.
pub fn sense_exact(map: &HeightMap, state: GridState, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity(k * k);
    for dy in -r..(k as isize - r) {
        for dx in -r..(k as isize - r) {
            out.push(map.at(state.x as isize + dx, state.y as isize + dy));
        }
    }
    out
}
