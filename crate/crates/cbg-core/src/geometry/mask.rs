//! Rasterized view of the etched membrane plane and its connectivity.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use super::{ring_annuli, CbgDesign, GeometryError};

/// 2D occupancy of the membrane plane; `true` = semiconductor present.
#[derive(Debug, Clone)]
pub struct Mask {
    pub nx: usize,
    pub ny: usize,
    pub resolution_nm: f64,
    /// Coordinate of the center of cell (0, 0); the pattern is centered on
    /// the origin.
    pub origin_nm: (f64, f64),
    pub data: Vec<bool>,
}

impl Mask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[j * self.nx + i]
    }

    /// Fraction of cells occupied by semiconductor.
    pub fn fill_fraction(&self) -> f64 {
        self.data.iter().filter(|&&b| b).count() as f64 / self.data.len() as f64
    }
}

/// Point-in-pattern test for the etched membrane plane, shared by the 2D
/// mask and the 3D rasterizer.
#[derive(Debug, Clone)]
pub(crate) struct PlanePattern {
    annuli: Vec<(f64, f64)>,
    bridges: Vec<(f64, f64)>, // unit direction per bridge
    half_width: f64,
}

impl PlanePattern {
    pub fn new(design: &CbgDesign) -> Self {
        let angles = design.bridge_angles();
        Self {
            annuli: ring_annuli(design),
            bridges: angles.iter().map(|a| (a.cos(), a.sin())).collect(),
            half_width: design.bridge_width_nm / 2.0,
        }
    }

    /// True where semiconductor remains (outside etched annuli or inside a
    /// bridge spoke).
    pub fn semiconductor_at(&self, x: f64, y: f64) -> bool {
        let r = x.hypot(y);
        let etched = self
            .annuli
            .iter()
            .any(|&(lo, hi)| r >= lo && r <= hi);
        if !etched {
            return true;
        }
        self.bridges.iter().any(|&(ux, uy)| {
            let along = x * ux + y * uy;
            let across = -x * uy + y * ux;
            along >= 0.0 && across.abs() <= self.half_width
        })
    }
}

/// Rasterizes the etched plane at the given resolution. The window spans the
/// outermost ring plus a margin of outer contact material.
pub fn etched_plane_mask(design: &CbgDesign, resolution_nm: f64) -> Result<Mask, GeometryError> {
    if design.bridge_count > 0 && resolution_nm > design.bridge_width_nm / 2.0 {
        return Err(GeometryError::BridgeUnresolvable {
            resolution_nm,
            bridge_width_nm: design.bridge_width_nm,
        });
    }
    let margin = 8.0 * resolution_nm;
    let half_extent = design.outer_radius_nm() + margin;
    let n = (2.0 * half_extent / resolution_nm).ceil() as usize + 1;
    let origin = -(n as f64 - 1.0) / 2.0 * resolution_nm;
    let pattern = PlanePattern::new(design);
    let mut data = vec![false; n * n];
    for j in 0..n {
        let y = origin + j as f64 * resolution_nm;
        for i in 0..n {
            let x = origin + i as f64 * resolution_nm;
            data[j * n + i] = pattern.semiconductor_at(x, y);
        }
    }
    Ok(Mask {
        nx: n,
        ny: n,
        resolution_nm,
        origin_nm: (origin, origin),
        data,
    })
}

/// True iff a 4-connected path of semiconductor cells links the center cell
/// to the mask boundary.
pub fn is_electrically_connected(mask: &Mask) -> bool {
    let (nx, ny) = (mask.nx, mask.ny);
    let start = (ny / 2) * nx + nx / 2;
    if !mask.data[start] {
        return false;
    }
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(idx) = queue.pop_front() {
        let (i, j) = (idx % nx, idx / nx);
        if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
            return true;
        }
        for next in [idx - 1, idx + 1, idx - nx, idx + nx] {
            if mask.data[next] && !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    false
}

/// Writes the mask as a binary PGM image (255 = semiconductor, 0 = etched).
pub fn write_pgm(mask: &Mask, path: &Path) -> Result<(), GeometryError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", mask.nx, mask.ny)?;
    // Image rows top to bottom: flip y.
    for j in (0..mask.ny).rev() {
        let row: Vec<u8> = (0..mask.nx)
            .map(|i| if mask.get(i, j) { 255 } else { 0 })
            .collect();
        out.write_all(&row)?;
    }
    Ok(())
}
