//! Weighted probabilistic normal-distributions maps.
//!
//! Points are binned into four g x g grids offset by half a cell along each
//! axis. Every cell with enough positively weighted points stores
//!
//! ```text
//! μ = Σ wᵢ xᵢ / Σ wᵢ
//! Σ = Σ wᵢ [(xᵢ - μ)(xᵢ - μ)ᵀ + Cᵢ] / Σ wᵢ
//! ```
//!
//! where `wᵢ = max(pᵢ - s, 0)` is the shifted returned power (1 for points
//! without power) and `Cᵢ` the point covariance.

use std::collections::HashMap;

use nalgebra as na;

use crate::error::{Error, Result};
use crate::geometry::{symmetrize2, Mat2, Vec2};
use crate::submap::{Submap, WeightedPoint};

pub const LAYER_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct NdtConfig {
    /// Cell edge length g [m].
    pub grid_size: f64,
    /// Power shift s in [0, 1].
    pub shift_s: f64,
    pub min_points_per_cell: usize,
    /// Largest allowed eigenvalue ratio of a cell covariance.
    pub cov_condition_cap: f64,
    /// Include per-point covariances in the cell covariance.
    pub probabilistic: bool,
}

impl Default for NdtConfig {
    fn default() -> Self {
        Self::automotive()
    }
}

impl NdtConfig {
    pub fn automotive() -> Self {
        Self {
            grid_size: 3.0,
            shift_s: 0.0,
            min_points_per_cell: 3,
            cov_condition_cap: 1000.0,
            probabilistic: true,
        }
    }

    pub fn scanning() -> Self {
        Self {
            grid_size: 3.75,
            shift_s: 0.333,
            ..Self::automotive()
        }
    }
}

/// Power-shifted point weight: `max(p - s, 0)`, or 1 when the point has no
/// returned power.
pub fn shifted_weight(power: Option<f64>, s: f64) -> f64 {
    match power {
        Some(p) => (p - s).max(0.0),
        None => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdtCell {
    pub mean: Vec2,
    pub cov: Mat2,
    pub cov_inverse: Mat2,
    pub weight_mass: f64,
    pub point_count: usize,
}

pub type CellIndex = (i64, i64);

#[derive(Debug, Clone, PartialEq)]
pub struct NdtLayer {
    pub offset: Vec2,
    pub cells: HashMap<CellIndex, NdtCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdtMap {
    pub grid_size: f64,
    pub shift_s: f64,
    pub layers: Vec<NdtLayer>,
    pub source_point_count: usize,
}

impl NdtMap {
    pub fn cell_index(&self, layer: usize, p: &Vec2) -> CellIndex {
        let o = self.layers[layer].offset;
        (
            ((p[0] - o[0]) / self.grid_size).floor() as i64,
            ((p[1] - o[1]) / self.grid_size).floor() as i64,
        )
    }

    pub fn lookup(&self, layer: usize, p: &Vec2) -> Option<&NdtCell> {
        self.layers[layer].cells.get(&self.cell_index(layer, p))
    }

    pub fn cell_count(&self) -> usize {
        self.layers.iter().map(|l| l.cells.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_count() == 0
    }

    /// Axis-aligned bounds of a cell.
    pub fn cell_bounds(&self, layer: usize, idx: CellIndex) -> (Vec2, Vec2) {
        let o = self.layers[layer].offset;
        let g = self.grid_size;
        let lo = Vec2::new(idx.0 as f64 * g + o[0], idx.1 as f64 * g + o[1]);
        (lo, lo + Vec2::new(g, g))
    }
}

/// Clamps the smaller eigenvalue to at least `largest / cap`. Returns `None`
/// for a vanishing covariance.
pub fn regularize_covariance(cov: &Mat2, cap: f64) -> Option<Mat2> {
    let eig = na::SymmetricEigen::new(symmetrize2(cov));
    let (i_big, i_small) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let big = eig.eigenvalues[i_big];
    if !(big > f64::MIN_POSITIVE) {
        return None;
    }
    let small = eig.eigenvalues[i_small].max(big / cap);
    let mut values = eig.eigenvalues;
    values[i_small] = small;
    let v = eig.eigenvectors;
    Some(symmetrize2(&(v * Mat2::from_diagonal(&values) * v.transpose())))
}

fn cell_from_points(points: &[&WeightedPoint], weights: &[f64], cfg: &NdtConfig) -> Option<NdtCell> {
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return None;
    }
    let mean = points
        .iter()
        .zip(weights)
        .map(|(p, w)| p.position * *w)
        .sum::<Vec2>()
        / mass;
    let mut cov = Mat2::zeros();
    for (p, w) in points.iter().zip(weights) {
        let d = p.position - mean;
        cov += (d * d.transpose()) * *w;
        if cfg.probabilistic {
            cov += p.cov * *w;
        }
    }
    cov /= mass;
    let cov = regularize_covariance(&cov, cfg.cov_condition_cap)?;
    let cov_inverse = symmetrize2(&cov.try_inverse()?);
    Some(NdtCell {
        mean,
        cov,
        cov_inverse,
        weight_mass: mass,
        point_count: points.len(),
    })
}

pub fn build_ndt_map(submap: &Submap, cfg: &NdtConfig) -> Result<NdtMap> {
    build_ndt_map_from_points(&submap.points, cfg)
}

pub fn build_ndt_map_from_points(points: &[WeightedPoint], cfg: &NdtConfig) -> Result<NdtMap> {
    if !(cfg.grid_size > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid size must be positive, got {}",
            cfg.grid_size
        )));
    }
    let g = cfg.grid_size;
    let offsets = [
        Vec2::new(0.0, 0.0),
        Vec2::new(g / 2.0, 0.0),
        Vec2::new(0.0, g / 2.0),
        Vec2::new(g / 2.0, g / 2.0),
    ];
    let weighted: Vec<(&WeightedPoint, f64)> = points
        .iter()
        .map(|p| (p, shifted_weight(p.power, cfg.shift_s)))
        .filter(|(_, w)| *w > 0.0)
        .collect();

    let mut map = NdtMap {
        grid_size: g,
        shift_s: cfg.shift_s,
        layers: offsets
            .iter()
            .map(|&offset| NdtLayer {
                offset,
                cells: HashMap::new(),
            })
            .collect(),
        source_point_count: points.len(),
    };

    for layer in 0..LAYER_COUNT {
        // Vec preserves point order inside each cell, so sums are reproducible.
        let mut bins: HashMap<CellIndex, Vec<usize>> = HashMap::new();
        for (i, (p, _)) in weighted.iter().enumerate() {
            bins.entry(map.cell_index(layer, &p.position)).or_default().push(i);
        }
        let mut cells = HashMap::with_capacity(bins.len());
        for (idx, members) in bins {
            if members.len() < cfg.min_points_per_cell {
                continue;
            }
            let pts: Vec<&WeightedPoint> = members.iter().map(|&i| weighted[i].0).collect();
            let ws: Vec<f64> = members.iter().map(|&i| weighted[i].1).collect();
            if let Some(cell) = cell_from_points(&pts, &ws, cfg) {
                cells.insert(idx, cell);
            }
        }
        map.layers[layer].cells = cells;
    }
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wp(x: f64, y: f64) -> WeightedPoint {
        WeightedPoint::new(Vec2::new(x, y), None, Mat2::zeros())
    }

    fn cfg(g: f64) -> NdtConfig {
        NdtConfig {
            grid_size: g,
            ..NdtConfig::automotive()
        }
    }

    #[test]
    fn shifted_weights() {
        assert!((shifted_weight(Some(0.5), 0.333) - 0.167).abs() < 1e-12);
        assert_eq!(shifted_weight(Some(0.2), 0.333), 0.0);
        assert_eq!(shifted_weight(None, 0.333), 1.0);
    }

    #[test]
    fn weighted_means() {
        let map = build_ndt_map_from_points(&[wp(0.0, 0.0), wp(2.0, 0.0), wp(1.0, 1.0)], &cfg(3.0)).unwrap();
        let cell = map.lookup(0, &Vec2::new(1.0, 1.0)).unwrap();
        assert!((cell.mean - Vec2::new(1.0, 1.0 / 3.0)).norm() < 1e-15);

        let pts = [
            WeightedPoint::new(Vec2::new(0.0, 0.0), Some(1.0), Mat2::identity() * 0.01),
            WeightedPoint::new(Vec2::new(4.0, 0.0), Some(3.0), Mat2::identity() * 0.01),
        ];
        let c = NdtConfig {
            min_points_per_cell: 2,
            ..cfg(10.0)
        };
        let map = build_ndt_map_from_points(&pts, &c).unwrap();
        let cell = map.lookup(0, &Vec2::new(1.0, 1.0)).unwrap();
        assert!((cell.mean - Vec2::new(3.0, 0.0)).norm() < 1e-15);
        assert_eq!(cell.weight_mass, 4.0);
    }

    #[test]
    fn collinear_cell_is_capped_at_condition_1000() {
        let map = build_ndt_map_from_points(&[wp(0.0, 0.0), wp(1.0, 0.0), wp(2.0, 0.0)], &cfg(3.0)).unwrap();
        let cell = map.lookup(0, &Vec2::new(0.5, 0.5)).unwrap();
        let eig = na::SymmetricEigen::new(cell.cov);
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        assert!((hi - 2.0 / 3.0).abs() < 1e-12);
        assert!((hi / lo - 1000.0).abs() < 1e-6);
        assert!((cell.cov_inverse * cell.cov - Mat2::identity()).norm() < 1e-8);
    }

    #[test]
    fn empty_map_when_no_cell_qualifies() {
        let pts = [wp(0.0, 0.0), wp(10.0, 0.0)];
        assert!(matches!(build_ndt_map_from_points(&pts, &cfg(3.0)), Err(Error::EmptyMap)));
        let low = [0.1, 0.2, 0.3].map(|p| WeightedPoint::new(Vec2::new(p, 0.0), Some(p), Mat2::identity()));
        let c = NdtConfig {
            shift_s: 0.333,
            ..cfg(3.0)
        };
        assert!(matches!(build_ndt_map_from_points(&low, &c), Err(Error::EmptyMap)));
    }

    /// Population mean/covariance computed directly from the member list.
    fn brute_force_stats(points: &[Vec2]) -> (Vec2, Mat2) {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in points {
            sxx += (p[0] - mx) * (p[0] - mx);
            sxy += (p[0] - mx) * (p[1] - my);
            syy += (p[1] - my) * (p[1] - my);
        }
        (Vec2::new(mx, my), Mat2::new(sxx / n, sxy / n, sxy / n, syy / n))
    }

    #[test]
    fn unit_weights_match_classical_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pts: Vec<WeightedPoint> = (0..300)
                .map(|_| wp(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
                .collect();
            let c = NdtConfig {
                cov_condition_cap: 1e12,
                ..cfg(4.0)
            };
            let map = build_ndt_map_from_points(&pts, &c).unwrap();
            for layer in 0..LAYER_COUNT {
                for (idx, cell) in &map.layers[layer].cells {
                    let members: Vec<Vec2> = pts
                        .iter()
                        .map(|p| p.position)
                        .filter(|p| map.cell_index(layer, p) == *idx)
                        .collect();
                    let (m, s) = brute_force_stats(&members);
                    assert_eq!(cell.point_count, members.len());
                    assert!((cell.mean - m).norm() < 1e-12);
                    assert!((cell.cov - s).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn power_shift_narrows_mixed_cell() {
        // bright cluster on a line plus a faint spread, all in one cell
        let mut pts = Vec::new();
        for i in 0..10 {
            let x = 1.0 + 0.1 * i as f64;
            pts.push(WeightedPoint::new(Vec2::new(x, 1.5), Some(0.9), Mat2::identity() * 1e-4));
        }
        for i in 0..10 {
            let a = i as f64 * 0.6;
            pts.push(WeightedPoint::new(
                Vec2::new(1.5 + 1.2 * a.cos(), 1.5 + 1.2 * a.sin()),
                Some(0.35),
                Mat2::identity() * 1e-4,
            ));
        }
        let det_at = |s: f64| {
            let c = NdtConfig {
                shift_s: s,
                ..cfg(3.0)
            };
            build_ndt_map_from_points(&pts, &c)
                .unwrap()
                .lookup(0, &Vec2::new(1.5, 1.5))
                .unwrap()
                .cov
                .determinant()
        };
        assert!(det_at(0.333) <= det_at(0.0));
        assert!(det_at(0.333) < 0.5 * det_at(0.0));
    }

    proptest! {
        #[test]
        fn cell_invariants(
            raw in proptest::collection::vec((-15.0..15.0f64, -15.0..15.0f64, 0.0..1.0f64, 0.0..0.3f64), 10..200),
            s1 in 0.0..1.0f64,
            s2 in 0.0..1.0f64,
        ) {
            let pts: Vec<WeightedPoint> = raw.iter()
                .map(|&(x, y, p, sd)| WeightedPoint::new(Vec2::new(x, y), Some(p), Mat2::identity() * sd * sd))
                .collect();
            let max_sigma = raw.iter().map(|r| r.3).fold(0.0, f64::max);
            let (lo_s, hi_s) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            let lo = build_ndt_map_from_points(&pts, &NdtConfig { shift_s: lo_s, ..cfg(5.0) });
            let hi = build_ndt_map_from_points(&pts, &NdtConfig { shift_s: hi_s, ..cfg(5.0) });
            if let Ok(map) = &lo {
                for layer in 0..LAYER_COUNT {
                    for (idx, cell) in &map.layers[layer].cells {
                        let (a, b) = map.cell_bounds(layer, *idx);
                        prop_assert!(cell.mean[0] >= a[0] - max_sigma && cell.mean[0] <= b[0] + max_sigma);
                        prop_assert!(cell.mean[1] >= a[1] - max_sigma && cell.mean[1] <= b[1] + max_sigma);
                        prop_assert!((cell.cov_inverse * cell.cov - Mat2::identity()).norm() < 1e-8);
                        let eig = na::SymmetricEigen::new(cell.cov);
                        prop_assert!(eig.eigenvalues.min() > 0.0);
                        prop_assert!(eig.eigenvalues.max() / eig.eigenvalues.min() <= 1000.0 * (1.0 + 1e-9));
                        prop_assert!(cell.point_count >= 3);
                    }
                }
            }
            // raising s never increases a cell's weight mass
            if let (Ok(lo), Ok(hi)) = (&lo, &hi) {
                for layer in 0..LAYER_COUNT {
                    for (idx, cell) in &hi.layers[layer].cells {
                        let before = lo.layers[layer].cells.get(idx).map_or(0.0, |c| c.weight_mass);
                        prop_assert!(cell.weight_mass <= before + 1e-12);
                    }
                }
            }
        }
    }
}
