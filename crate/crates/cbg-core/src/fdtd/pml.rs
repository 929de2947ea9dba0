//! Convolutional PML (CPML) absorbing boundaries.
//!
//! Polynomial-graded conductivity with recursive-convolution auxiliary
//! fields. Auxiliary (psi) storage is allocated only for the boundary slabs,
//! not the full grid.

use crate::constants::{EPS0, ETA0};

/// CPML configuration for all six boundaries.
#[derive(Debug, Clone)]
pub struct PmlConfig {
    /// Slab thickness in cells (0 disables absorption; otherwise >= 8).
    pub thickness: usize,
    /// Polynomial grading order.
    pub grading_order: f64,
    /// Peak conductivity (S/m); `None` selects the standard optimum
    /// (order + 1) * 0.8 / (eta * dx).
    pub sigma_max: Option<f64>,
}

impl Default for PmlConfig {
    fn default() -> Self {
        Self {
            thickness: 10,
            grading_order: 3.0,
            sigma_max: None,
        }
    }
}

impl PmlConfig {
    pub fn auto_sigma_max(&self, cell_m: f64, boundary_index: f64) -> f64 {
        self.sigma_max
            .unwrap_or(0.8 * (self.grading_order + 1.0) / (ETA0 / boundary_index * cell_m))
    }
}

/// Per-axis CPML state: b/c coefficient profiles at integer (E) and
/// half-integer (H) sample positions, plus psi slabs for both walls.
pub struct AxisPml {
    pub thickness: usize,
    /// b,c at integer positions along the axis (length = axis dim).
    pub b_e: Vec<f64>,
    pub c_e: Vec<f64>,
    /// b,c at half-integer positions (entry i describes position i + 1/2).
    pub b_h: Vec<f64>,
    pub c_h: Vec<f64>,
    /// psi slabs: [side][component] with slab-local width `thickness + 1`.
    /// side 0 = low wall, side 1 = high wall; two E components and two H
    /// components carry a derivative along this axis.
    pub psi_e: [[Vec<f64>; 2]; 2],
    pub psi_h: [[Vec<f64>; 2]; 2],
}

impl AxisPml {
    /// `n` is the axis dimension, `plane` the number of samples in the two
    /// transverse dimensions combined (ny * nz for the x axis, etc.).
    pub fn new(cfg: &PmlConfig, n: usize, plane: usize, cell_m: f64, dt: f64, index: f64) -> Self {
        let t = cfg.thickness;
        let m = cfg.grading_order;
        let sigma_max = cfg.auto_sigma_max(cell_m, index);
        let mut b_e = vec![1.0; n];
        let mut c_e = vec![0.0; n];
        let mut b_h = vec![1.0; n];
        let mut c_h = vec![0.0; n];
        if t > 0 {
            let depth_lo = |pos: f64| (t as f64 - pos) / t as f64;
            let depth_hi = |pos: f64| (pos - (n as f64 - 1.0 - t as f64)) / t as f64;
            for i in 0..n {
                for (pos, b, c) in [
                    (i as f64, &mut b_e[i], &mut c_e[i]),
                    (i as f64 + 0.5, &mut b_h[i], &mut c_h[i]),
                ] {
                    let depth = depth_lo(pos).max(depth_hi(pos));
                    if depth > 0.0 {
                        let sigma = sigma_max * depth.min(1.0).powf(m);
                        *b = (-sigma * dt / EPS0).exp();
                        *c = *b - 1.0;
                    }
                }
            }
        }
        let width = t + 1;
        let slab = vec![0.0; width * plane];
        AxisPml {
            thickness: t,
            b_e,
            c_e,
            b_h,
            c_h,
            psi_e: [[slab.clone(), slab.clone()], [slab.clone(), slab.clone()]],
            psi_h: [[slab.clone(), slab.clone()], [slab.clone(), slab]],
        }
    }


    pub fn slab_width(&self) -> usize {
        self.thickness + 1
    }
}
