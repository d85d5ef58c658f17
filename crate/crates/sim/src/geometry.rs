//! Concentric-ring maze layout.
//!
//! Regions are indexed from the goal outwards: region 0 is the center, region
//! `n` is the outermost ring. Boundary `b` is the wall separating region `b`
//! (inside) from region `b + 1` (outside), so boundary 0 is the innermost one.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

/// An opening in a ring wall, in polar terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    /// Angular center in radians.
    pub center: f64,
    /// Angular half-width in radians.
    pub half_width: f64,
}

/// User-facing maze description, as read from the config file.
///
/// `boundary_radii` and `gates` are listed outermost boundary first, matching
/// the way the maze is read from the rim inwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeConfig {
    pub outer_radius: f64,
    pub boundary_radii: Vec<f64>,
    pub gates: Vec<Vec<GateSpec>>,
    pub marble_radius: f64,
}

impl MazeConfig {
    /// Four rings around the center, 2/2/4/1 gates from the rim inwards.
    pub fn standard() -> Self {
        let radii = [0.115, 0.088, 0.060, 0.032];
        let marble = 0.008;
        let centers: [&[f64]; 4] = [
            &[0.5 * PI, 1.5 * PI],
            &[0.0, PI],
            &[0.25 * PI, 0.75 * PI, 1.25 * PI, 1.75 * PI],
            &[0.0],
        ];
        Self::with_gates(0.14, &radii, &centers, marble, 1.75)
    }

    /// Reduced maze used for desk-scale runs: two rings, 4 gates then 1,
    /// with wider gates so a short training budget sees gate events.
    pub fn two_ring() -> Self {
        let radii = [0.066, 0.034];
        let centers: [&[f64]; 2] = [&[0.25 * PI, 0.75 * PI, 1.25 * PI, 1.75 * PI], &[0.0]];
        Self::with_gates(0.10, &radii, &centers, 0.008, 3.0)
    }

    /// Gate half-widths are `footprint` times the marble's angular
    /// half-footprint on their boundary.
    pub fn with_gates(outer: f64, radii: &[f64], centers: &[&[f64]], marble_radius: f64, footprint: f64) -> Self {
        let gates = radii
            .iter()
            .zip(centers)
            .map(|(&r, cs)| {
                let half = footprint * (marble_radius / r).min(1.0).asin();
                cs.iter()
                    .map(|&c| GateSpec {
                        center: c,
                        half_width: half,
                    })
                    .collect()
            })
            .collect();
        MazeConfig {
            outer_radius: outer,
            boundary_radii: radii.to_vec(),
            gates,
            marble_radius,
        }
    }
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// A single ring wall with its openings.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub radius: f64,
    pub gates: Vec<GateSpec>,
}

impl Boundary {
    /// Whether polar angle `angle` lies within one of this wall's gate spans.
    pub fn in_gate(&self, angle: f64) -> bool {
        self.gate_at(angle).is_some()
    }

    pub fn gate_at(&self, angle: f64) -> Option<&GateSpec> {
        self.gates
            .iter()
            .find(|g| angle_dist(angle, g.center) <= g.half_width)
    }
}

/// Validated maze layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeGeometry {
    outer_radius: f64,
    marble_radius: f64,
    /// Innermost first.
    boundaries: Vec<Boundary>,
}

impl MazeGeometry {
    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn marble_radius(&self) -> f64 {
        self.marble_radius
    }

    /// Boundaries indexed innermost first.
    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    pub fn n_boundaries(&self) -> usize {
        self.boundaries.len()
    }

    /// Region index of the outermost ring.
    pub fn outermost_region(&self) -> usize {
        self.boundaries.len()
    }

    /// Index of the goal region.
    pub fn center_region(&self) -> usize {
        0
    }

    /// Wall radii, outermost first: the rim followed by every ring boundary.
    pub fn ring_radii(&self) -> Vec<f64> {
        std::iter::once(self.outer_radius)
            .chain(self.boundaries.iter().rev().map(|b| b.radius))
            .collect()
    }

    /// Region containing a point at distance `d` from the center.
    pub fn region_of_radius(&self, d: f64) -> usize {
        self.boundaries.iter().filter(|b| b.radius < d).count()
    }

    /// Radial extent (inner, outer) of a region's free space for a marble center.
    pub fn region_span(&self, region: usize) -> (f64, f64) {
        let inner = if region == 0 {
            0.0
        } else {
            self.boundaries[region - 1].radius + self.marble_radius
        };
        let outer = if region == self.boundaries.len() {
            self.outer_radius - self.marble_radius
        } else {
            self.boundaries[region].radius - self.marble_radius
        };
        (inner, outer)
    }

    /// Canonical byte encoding used for hashing.
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.outer_radius.to_le_bytes());
        out.extend_from_slice(&self.marble_radius.to_le_bytes());
        out.extend_from_slice(&(self.boundaries.len() as u64).to_le_bytes());
        for b in &self.boundaries {
            out.extend_from_slice(&b.radius.to_le_bytes());
            out.extend_from_slice(&(b.gates.len() as u64).to_le_bytes());
            for g in &b.gates {
                out.extend_from_slice(&g.center.to_le_bytes());
                out.extend_from_slice(&g.half_width.to_le_bytes());
            }
        }
        out
    }

    /// SHA-256 over the canonical encoding; equal layouts hash equal.
    pub fn hash(&self) -> GeometryHash {
        let digest = Sha256::digest(self.canonical_bytes());
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        GeometryHash(bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeometryHash(pub [u8; 32]);

impl fmt::Display for GeometryHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Smallest absolute angular difference, in [0, pi].
pub fn angle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

pub fn build_maze(config: &MazeConfig) -> Result<MazeGeometry, ConfigError> {
    let invalid = |msg: String| Err(ConfigError::InvalidMaze(msg));
    let n = config.boundary_radii.len();
    if n == 0 {
        return invalid("maze needs at least one ring boundary".into());
    }
    if config.gates.len() != n {
        return invalid(format!(
            "{} gate lists given for {n} boundaries",
            config.gates.len()
        ));
    }
    let rho = config.marble_radius;
    if !(rho > 0.0) {
        return invalid("marble radius must be positive".into());
    }
    let mut prev = config.outer_radius;
    for &r in &config.boundary_radii {
        if !(r < prev) || !(r > 0.0) {
            return invalid(format!("ring radii must be strictly decreasing, got {r} after {prev}"));
        }
        // every annulus must be wide enough for a marble to sit in
        if prev - r <= 2.0 * rho {
            return invalid(format!("ring between {r} and {prev} narrower than a marble"));
        }
        prev = r;
    }
    if prev <= rho {
        return invalid("center region smaller than a marble".into());
    }

    let mut boundaries: Vec<Boundary> = Vec::with_capacity(n);
    for (r, gates) in config.boundary_radii.iter().zip(&config.gates).rev() {
        let footprint = (rho / r).min(1.0).asin();
        if gates.is_empty() {
            return invalid(format!("boundary at r={r} has no gate"));
        }
        for g in gates {
            if !(g.half_width > footprint) {
                return invalid(format!(
                    "gate at {:.3} rad on r={r} too narrow for the marble ({} <= {footprint})",
                    g.center, g.half_width
                ));
            }
            if g.half_width >= PI {
                return invalid("gate half-width must be below pi".into());
            }
        }
        for (i, a) in gates.iter().enumerate() {
            for b in &gates[i + 1..] {
                if angle_dist(a.center, b.center) <= a.half_width + b.half_width {
                    return invalid(format!("overlapping gates on r={r}"));
                }
            }
        }
        boundaries.push(Boundary {
            radius: *r,
            gates: gates.clone(),
        });
    }
    if boundaries[0].gates.len() != 1 {
        return invalid("innermost boundary must have exactly one gate".into());
    }
    if n >= 2 && boundaries[1].gates.len() != 4 {
        return invalid("boundary next to the center must have exactly four gates".into());
    }
    Ok(MazeGeometry {
        outer_radius: config.outer_radius,
        marble_radius: rho,
        boundaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_layout() {
        let g = build_maze(&MazeConfig::standard()).unwrap();
        assert_eq!(g.n_boundaries(), 4);
        assert_eq!(g.outermost_region() + 1, 5);
        assert_eq!(g.boundaries()[0].gates.len(), 1);
        assert_eq!(g.boundaries()[1].gates.len(), 4);
        let radii = g.ring_radii();
        assert!(radii.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn zero_rings_rejected() {
        let mut c = MazeConfig::standard();
        c.boundary_radii.clear();
        c.gates.clear();
        assert!(matches!(build_maze(&c), Err(ConfigError::InvalidMaze(_))));
    }

    #[test]
    fn non_decreasing_radii_rejected() {
        let mut c = MazeConfig::standard();
        c.boundary_radii.swap(1, 2);
        assert!(build_maze(&c).is_err());
    }

    #[test]
    fn overlapping_gates_rejected() {
        let mut c = MazeConfig::standard();
        let g = c.gates[0][0];
        c.gates[0].push(GateSpec {
            center: g.center + g.half_width,
            ..g
        });
        assert!(build_maze(&c).is_err());
    }

    #[test]
    fn narrow_gate_rejected() {
        let mut c = MazeConfig::standard();
        c.gates[3][0].half_width = 0.01;
        assert!(build_maze(&c).is_err());
    }

    #[test]
    fn equal_configs_hash_equal() {
        let a = build_maze(&MazeConfig::standard()).unwrap();
        let b = build_maze(&MazeConfig::standard()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = build_maze(&MazeConfig::two_ring()).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn regions_by_radius() {
        let g = build_maze(&MazeConfig::two_ring()).unwrap();
        assert_eq!(g.region_of_radius(0.0), 0);
        assert_eq!(g.region_of_radius(0.05), 1);
        assert_eq!(g.region_of_radius(0.09), 2);
    }

    #[test]
    fn angle_distance_wraps() {
        assert!((angle_dist(0.1, 2.0 * PI - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_dist(-PI, PI)).abs() < 1e-12);
    }
}
