//! Raster and cost-surface exports: thresholded polar images, NDT map
//! densities and matching cost over a pose lattice.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};
use crate::ingest::PolarScan;
use crate::matcher::ScoringPoints;
use crate::ndt::{NdtMap, LAYER_COUNT};
use crate::submap::WeightedPoint;

/// 8-bit grey image written as ASCII PGM (P2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn count_nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Pgm> {
        let bad = |r: &str| Error::InvalidArgument(format!("not a P2 image: {r}"));
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("P2") {
            return Err(bad("magic"));
        }
        let mut num = || -> Result<usize> {
            tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("header"))
        };
        let (width, height, maxval) = (num()?, num()?, num()?);
        if maxval != 255 {
            return Err(bad("maxval"));
        }
        let pixels = tokens
            .map(|t| t.parse::<u8>().map_err(|_| bad("pixel")))
            .collect::<Result<Vec<u8>>>()?;
        if pixels.len() != width * height {
            return Err(bad("pixel count"));
        }
        Ok(Pgm {
            width,
            height,
            pixels,
        })
    }
}

fn to_grey(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Polar image (rows = azimuths, columns = range bins) with every bin at or
/// below `threshold` blanked.
pub fn threshold_raster(scan: &PolarScan, threshold: f64) -> Pgm {
    let pixels = scan
        .power
        .iter()
        .map(|&p| {
            let p = f64::from(p);
            if p > threshold {
                // keep surviving bins visible even at very low power
                to_grey(p).max(1)
            } else {
                0
            }
        })
        .collect();
    Pgm {
        width: scan.range_bin_count,
        height: scan.azimuth_count,
        pixels,
    }
}

/// Density `Σ_layers exp(-½ dᵀΣ⁻¹d)` of an NDT map on a Cartesian raster of
/// `resolution` metres per pixel covering `[min, max]`. Row 0 is the top
/// (largest y).
pub fn ndt_raster(map: &NdtMap, min: Vec2, max: Vec2, resolution: f64) -> Pgm {
    let width = ((max[0] - min[0]) / resolution).ceil().max(1.0) as usize;
    let height = ((max[1] - min[1]) / resolution).ceil().max(1.0) as usize;
    let mut density = vec![0.0; width * height];
    for r in 0..height {
        for c in 0..width {
            let p = Vec2::new(
                min[0] + (c as f64 + 0.5) * resolution,
                max[1] - (r as f64 + 0.5) * resolution,
            );
            let mut v = 0.0;
            for layer in 0..LAYER_COUNT {
                if let Some(cell) = map.lookup(layer, &p) {
                    let d = p - cell.mean;
                    v += (-0.5 * d.dot(&(cell.cov_inverse * d))).exp();
                }
            }
            density[r * width + c] = v;
        }
    }
    let peak = density.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    Pgm {
        width,
        height,
        pixels: density.iter().map(|v| to_grey(v * scale)).collect(),
    }
}

/// Pose lattice for a cost surface. The unused coordinate is held at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lattice {
    /// x [m] against θ [rad].
    XTheta {
        x: (f64, f64, usize),
        theta: (f64, f64, usize),
    },
    /// x [m] against y [m].
    XY {
        x: (f64, f64, usize),
        y: (f64, f64, usize),
    },
}

fn axis((lo, hi, n): (f64, f64, usize)) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One lattice node of a cost surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSample {
    pub pose: Pose2,
    /// Negated score.
    pub cost: f64,
}

/// Evaluates the matching cost at every lattice node, first axis outermost.
pub fn cost_surface(
    map: &NdtMap,
    points: &[WeightedPoint],
    s: f64,
    uncertainty_weighting: bool,
    lattice: &Lattice,
) -> Vec<CostSample> {
    let scoring = ScoringPoints::new(points, s, uncertainty_weighting);
    let poses: Vec<Pose2> = match *lattice {
        Lattice::XTheta { x, theta } => axis(x)
            .into_iter()
            .flat_map(|a| axis(theta).into_iter().map(move |b| Pose2::new(a, 0.0, b)))
            .collect(),
        Lattice::XY { x, y } => axis(x)
            .into_iter()
            .flat_map(|a| axis(y).into_iter().map(move |b| Pose2::new(a, b, 0.0)))
            .collect(),
    };
    poses
        .into_iter()
        .map(|pose| CostSample {
            pose,
            cost: -scoring.score(map, &pose),
        })
        .collect()
}

/// Long-format CSV: one row per lattice node.
pub fn cost_surface_csv(samples: &[CostSample], lattice: &Lattice) -> String {
    let mut s = String::new();
    match lattice {
        Lattice::XTheta { .. } => {
            s.push_str("x_m,theta_deg,cost\n");
            for c in samples {
                let _ = writeln!(s, "{},{},{}", c.pose.x, c.pose.theta.to_degrees(), c.cost);
            }
        }
        Lattice::XY { .. } => {
            s.push_str("x_m,y_m,cost\n");
            for c in samples {
                let _ = writeln!(s, "{},{},{}", c.pose.x, c.pose.y, c.cost);
            }
        }
    }
    s
}
