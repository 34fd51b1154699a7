//! Plain-text scene files.
//!
//! ```text
//! grid 32 32
//! seed 17
//! motion_noise 0.1
//! sensor_noise 0
//! family primitive
//! box 10 12 2 3 0.8
//! sphere 20 8 3.5 0.6
//! cylinder 5 25 2 1
//! capsule 24 24 1.5 3 x 0.7
//! composite
//! + box 8 8 2 2 0.5
//! + sphere 9 8 2 0.9
//! ```
//!
//! `grid` takes height then width. Object lines give the shape, the integer
//! center `x y`, the size parameters and the height. A `composite` line
//! opens an object whose parts follow on `+` lines. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;

use super::{Axis, ObjectFamily, ObjectSpec, Primitive, SceneConfig, Shape};
use crate::error::SceneError;

pub fn write_scene(scene: &SceneConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "grid {} {}", scene.height, scene.width);
    let _ = writeln!(s, "seed {}", scene.seed);
    let _ = writeln!(s, "motion_noise {}", scene.motion_noise);
    let _ = writeln!(s, "sensor_noise {}", scene.sensor_noise);
    let _ = writeln!(s, "family {}", scene.family.name());
    for o in &scene.objects {
        match o {
            ObjectSpec::Primitive(p) => {
                let _ = writeln!(s, "{}", primitive_line(p));
            }
            ObjectSpec::Composite(parts) => {
                s.push_str("composite\n");
                for p in parts {
                    let _ = writeln!(s, "+ {}", primitive_line(p));
                }
            }
        }
    }
    s
}

fn primitive_line(p: &Primitive) -> String {
    match p.shape {
        Shape::Box { hx, hy } => format!("box {} {} {hx} {hy} {}", p.cx, p.cy, p.height),
        Shape::Sphere { radius } => format!("sphere {} {} {radius} {}", p.cx, p.cy, p.height),
        Shape::Cylinder { radius } => format!("cylinder {} {} {radius} {}", p.cx, p.cy, p.height),
        Shape::Capsule {
            radius,
            half_length,
            axis,
        } => {
            let a = match axis {
                Axis::X => "x",
                Axis::Y => "y",
            };
            format!("capsule {} {} {radius} {half_length} {a} {}", p.cx, p.cy, p.height)
        }
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, SceneError> {
    let t = tok.ok_or_else(|| SceneError::Parse {
        line,
        reason: format!("missing {what}"),
    })?;
    t.parse().map_err(|_| SceneError::Parse {
        line,
        reason: format!("bad {what} {t:?}"),
    })
}

fn parse_primitive<'a>(mut toks: impl Iterator<Item = &'a str>, line: usize) -> Result<Primitive, SceneError> {
    let kind = toks.next().unwrap_or_default();
    let cx = field(toks.next(), line, "center x")?;
    let cy = field(toks.next(), line, "center y")?;
    let shape = match kind {
        "box" => Shape::Box {
            hx: field(toks.next(), line, "half-extent x")?,
            hy: field(toks.next(), line, "half-extent y")?,
        },
        "sphere" => Shape::Sphere {
            radius: field(toks.next(), line, "radius")?,
        },
        "cylinder" => Shape::Cylinder {
            radius: field(toks.next(), line, "radius")?,
        },
        "capsule" => {
            let radius = field(toks.next(), line, "radius")?;
            let half_length = field(toks.next(), line, "half-length")?;
            let axis = match toks.next() {
                Some("x") => Axis::X,
                Some("y") => Axis::Y,
                other => {
                    return Err(SceneError::Parse {
                        line,
                        reason: format!("bad axis {other:?}"),
                    })
                }
            };
            Shape::Capsule {
                radius,
                half_length,
                axis,
            }
        }
        other => {
            return Err(SceneError::Parse {
                line,
                reason: format!("unknown shape {other:?}"),
            })
        }
    };
    let height = field(toks.next(), line, "height")?;
    if let Some(extra) = toks.next() {
        return Err(SceneError::Parse {
            line,
            reason: format!("unexpected token {extra:?}"),
        });
    }
    Ok(Primitive { shape, cx, cy, height })
}

pub fn parse_scene(text: &str) -> Result<SceneConfig, SceneError> {
    let mut scene = SceneConfig::empty(0, 0);
    let mut grid_seen = false;
    let mut open: Option<Vec<Primitive>> = None;
    let close = |open: &mut Option<Vec<Primitive>>, scene: &mut SceneConfig, line: usize| {
        if let Some(parts) = open.take() {
            if parts.is_empty() {
                return Err(SceneError::Parse {
                    line,
                    reason: "composite without parts".into(),
                });
            }
            scene.objects.push(ObjectSpec::Composite(parts));
        }
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut toks = t.split_whitespace();
        let head = toks.next().unwrap_or_default();
        if head == "+" {
            let parts = open.as_mut().ok_or_else(|| SceneError::Parse {
                line,
                reason: "part outside a composite".into(),
            })?;
            parts.push(parse_primitive(toks, line)?);
            continue;
        }
        close(&mut open, &mut scene, line)?;
        match head {
            "grid" => {
                scene.height = field(toks.next(), line, "grid height")?;
                scene.width = field(toks.next(), line, "grid width")?;
                grid_seen = true;
            }
            "seed" => scene.seed = field(toks.next(), line, "seed")?,
            "motion_noise" => scene.motion_noise = field(toks.next(), line, "motion noise")?,
            "sensor_noise" => scene.sensor_noise = field(toks.next(), line, "sensor noise")?,
            "family" => {
                let name: String = field(toks.next(), line, "family")?;
                scene.family = ObjectFamily::parse(&name).ok_or_else(|| SceneError::Parse {
                    line,
                    reason: format!("unknown family {name:?}"),
                })?;
            }
            "composite" => open = Some(Vec::new()),
            "box" | "sphere" | "cylinder" | "capsule" => {
                scene.objects.push(ObjectSpec::Primitive(parse_primitive(t.split_whitespace(), line)?));
            }
            other => {
                return Err(SceneError::Parse {
                    line,
                    reason: format!("unknown directive {other:?}"),
                })
            }
        }
    }
    close(&mut open, &mut scene, text.lines().count())?;
    if !grid_seen {
        return Err(SceneError::Parse {
            line: 0,
            reason: "missing grid line".into(),
        });
    }
    scene.validate()?;
    Ok(scene)
}
