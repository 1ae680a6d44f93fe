//! Synthetic world description.
//!
//! One primitive per line, `#` starts a comment:
//!
//! ```text
//! point x y reflectivity
//! wall x1 y1 x2 y2 reflectivity
//! mover x y vx vy reflectivity
//! ```
//!
//! Coordinates in metres, velocities in m/s, reflectivity in [0, 1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Landmark {
    Point {
        position: Vec2,
        reflectivity: f64,
    },
    Wall {
        start: Vec2,
        end: Vec2,
        reflectivity: f64,
    },
    /// Point target moving at constant world velocity from `position` at t = 0.
    Mover {
        position: Vec2,
        velocity: Vec2,
        reflectivity: f64,
    },
}

impl Landmark {
    pub fn reflectivity(&self) -> f64 {
        match *self {
            Landmark::Point { reflectivity, .. }
            | Landmark::Wall { reflectivity, .. }
            | Landmark::Mover { reflectivity, .. } => reflectivity,
        }
    }

    pub fn is_static(&self) -> bool {
        !matches!(self, Landmark::Mover { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldSpec {
    pub landmarks: Vec<Landmark>,
}

impl WorldSpec {
    pub fn new(landmarks: Vec<Landmark>) -> Self {
        Self { landmarks }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut landmarks = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let kind = tokens.next().unwrap();
            let values = tokens
                .map(|t| {
                    t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::malformed(path, format!("line {}: bad number `{t}`", i + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let arity = |n: usize| {
                if values.len() == n {
                    Ok(())
                } else {
                    Err(Error::malformed(
                        path,
                        format!("line {}: `{kind}` takes {n} values, got {}", i + 1, values.len()),
                    ))
                }
            };
            let landmark = match kind {
                "point" => {
                    arity(3)?;
                    Landmark::Point {
                        position: Vec2::new(values[0], values[1]),
                        reflectivity: values[2],
                    }
                }
                "wall" => {
                    arity(5)?;
                    Landmark::Wall {
                        start: Vec2::new(values[0], values[1]),
                        end: Vec2::new(values[2], values[3]),
                        reflectivity: values[4],
                    }
                }
                "mover" => {
                    arity(5)?;
                    Landmark::Mover {
                        position: Vec2::new(values[0], values[1]),
                        velocity: Vec2::new(values[2], values[3]),
                        reflectivity: values[4],
                    }
                }
                other => {
                    return Err(Error::malformed(
                        path,
                        format!("line {}: unknown primitive `{other}`", i + 1),
                    ))
                }
            };
            let r = landmark.reflectivity();
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::out_of_range(
                    path,
                    format!("line {}: reflectivity {r}", i + 1),
                ));
            }
            landmarks.push(landmark);
        }
        Ok(Self { landmarks })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.landmarks {
            let line = match l {
                Landmark::Point {
                    position,
                    reflectivity,
                } => format!("point {} {} {}", position[0], position[1], reflectivity),
                Landmark::Wall {
                    start,
                    end,
                    reflectivity,
                } => format!(
                    "wall {} {} {} {} {}",
                    start[0], start[1], end[0], end[1], reflectivity
                ),
                Landmark::Mover {
                    position,
                    velocity,
                    reflectivity,
                } => format!(
                    "mover {} {} {} {} {}",
                    position[0], position[1], velocity[0], velocity[1], reflectivity
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}
