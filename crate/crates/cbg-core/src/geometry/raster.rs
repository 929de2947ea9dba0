//! Discretization of a CBG design onto a Yee-compatible permittivity grid.
//!
//! Relative permittivity is sampled separately at the Ex, Ey, and Ez sample
//! positions, with volume-weighted averaging over each sample's dual cell:
//! analytic along z (flat layer boundaries), supersampled in-plane where the
//! etch pattern cuts the membrane.

use super::mask::PlanePattern;
use super::{CbgDesign, GeometryError, MetalModel};

/// In-plane supersampling factor per axis for the subpixel average.
const SUPERSAMPLE: usize = 8;

/// Default allocation cap when `CBG_MAX_GRID_BYTES` is not set.
pub const DEFAULT_MAX_GRID_BYTES: u64 = 4 << 30;

/// Grid construction parameters: cell sizes plus padding between structure
/// and the absorbing boundary.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub cell_nm: [f64; 3],
    /// Extra in-plane material margin beyond the outermost ring, before PML.
    pub lateral_pad_nm: f64,
    /// Air gap below the stack bottom (keeps suspended membranes off the PML).
    pub pad_below_nm: f64,
    /// Air gap above the stack top.
    pub pad_above_nm: f64,
    /// Absorbing-boundary margin, in cells, included in the grid extent.
    pub pml_cells: usize,
    pub max_grid_bytes: Option<u64>,
}

impl GridSpec {
    /// Grid dimensions this spec would produce for a design, without
    /// allocating anything.
    pub fn estimated_dims(&self, design: &CbgDesign) -> [usize; 3] {
        let [dx, dy, dz] = self.cell_nm;
        let half_x = design.outer_radius_nm() + self.lateral_pad_nm + self.pml_cells as f64 * dx;
        let half_y = design.outer_radius_nm() + self.lateral_pad_nm + self.pml_cells as f64 * dy;
        let stack_top = design.stack.total_thickness_nm();
        let z_lo = -self.pad_below_nm - self.pml_cells as f64 * dz;
        let z_hi = stack_top + self.pad_above_nm + self.pml_cells as f64 * dz;
        [
            ((2.0 * half_x / dx).ceil() as usize).max(2),
            ((2.0 * half_y / dy).ceil() as usize).max(2),
            (((z_hi - z_lo) / dz).ceil() as usize).max(2),
        ]
    }

    /// Cubic cells at `points_per_wavelength` in the densest stack material.
    pub fn for_design(design: &CbgDesign, points_per_wavelength: f64) -> Self {
        let n_max = design
            .stack
            .layers()
            .iter()
            .filter(|l| !l.material.is_metal())
            .map(|l| l.material.refractive_index)
            .fold(1.0, f64::max);
        let cell = design.target_wavelength_nm / (n_max * points_per_wavelength);
        let lambda = design.target_wavelength_nm;
        GridSpec {
            cell_nm: [cell; 3],
            lateral_pad_nm: 0.25 * lambda,
            pad_below_nm: 0.0,
            pad_above_nm: 0.35 * lambda,
            pml_cells: 10,
            max_grid_bytes: None,
        }
    }
}

/// Single-pole Drude medium attached to a subset of grid samples.
#[derive(Debug, Clone)]
pub struct DrudeMedium {
    pub plasma_frequency_rad_s: f64,
    pub collision_rate_rad_s: f64,
    pub eps_inf: f64,
    /// Affected sample indices per E component.
    pub samples: [Vec<u32>; 3],
}

/// Rasterized relative-permittivity field on a Yee grid.
///
/// Sample layout per component array: index (k*ny + j)*nx + i, with Ex at
/// (i+1/2, j, k), Ey at (i, j+1/2, k), Ez at (i, j, k+1/2) in cell units.
#[derive(Debug, Clone)]
pub struct PermittivityGrid {
    pub cell_nm: [f64; 3],
    pub dims: [usize; 3],
    /// Coordinates (nm) of grid node (0, 0, 0).
    pub origin_nm: [f64; 3],
    pub eps: [Vec<f64>; 3],
    /// Sample indices pinned to zero field (perfect conductor).
    pub pec: [Vec<u32>; 3],
    pub drude: Option<DrudeMedium>,
    /// Refractive index assumed at the domain boundary (PML scaling).
    pub background_index: f64,
}

impl PermittivityGrid {
    /// Uniform dielectric filling the whole grid; handy for reference runs.
    pub fn homogeneous(dims: [usize; 3], cell_nm: [f64; 3], index: f64) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        let eps = index * index;
        PermittivityGrid {
            cell_nm,
            dims,
            origin_nm: [
                -(dims[0] as f64) * cell_nm[0] / 2.0,
                -(dims[1] as f64) * cell_nm[1] / 2.0,
                -(dims[2] as f64) * cell_nm[2] / 2.0,
            ],
            eps: [vec![eps; n], vec![eps; n], vec![eps; n]],
            pec: [Vec::new(), Vec::new(), Vec::new()],
            drude: None,
            background_index: index,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// Grid cell containing a physical point; clamped to the interior.
    pub fn cell_of(&self, point_nm: [f64; 3]) -> [usize; 3] {
        let mut cell = [0usize; 3];
        for a in 0..3 {
            let f = (point_nm[a] - self.origin_nm[a]) / self.cell_nm[a];
            cell[a] = (f.floor().max(0.0) as usize).min(self.dims[a] - 1);
        }
        cell
    }

    /// Perfectly conducting floor whose top surface is exactly the
    /// tangential-E plane at node `k_top`: Ex/Ey are pinned for k <= k_top
    /// and Ez (sampled at k + 1/2) strictly below it. This places the
    /// effective mirror plane at z = origin_z + k_top * dz.
    pub fn add_pec_floor(&mut self, k_top: usize) {
        for c in 0..3 {
            let k_max = if c == 2 { k_top.saturating_sub(1) } else { k_top };
            let mut idxs = std::mem::take(&mut self.pec[c]);
            for k in 0..=k_max.min(self.dims[2] - 1) {
                for j in 0..self.dims[1] {
                    for i in 0..self.dims[0] {
                        idxs.push(self.idx(i, j, k) as u32);
                    }
                }
            }
            idxs.sort_unstable();
            idxs.dedup();
            self.pec[c] = idxs;
        }
    }

    /// Marks an axis-aligned box of Ex/Ey/Ez samples as perfect conductor.
    pub fn add_pec_box(&mut self, lo: [usize; 3], hi: [usize; 3]) {
        for c in 0..3 {
            let mut idxs = std::mem::take(&mut self.pec[c]);
            for k in lo[2]..=hi[2].min(self.dims[2] - 1) {
                for j in lo[1]..=hi[1].min(self.dims[1] - 1) {
                    for i in lo[0]..=hi[0].min(self.dims[0] - 1) {
                        idxs.push(self.idx(i, j, k) as u32);
                    }
                }
            }
            idxs.sort_unstable();
            idxs.dedup();
            self.pec[c] = idxs;
        }
    }

    /// Estimated allocation for the grid plus solver working set.
    pub fn estimated_bytes(dims: [usize; 3]) -> u64 {
        dims[0] as u64 * dims[1] as u64 * dims[2] as u64 * 8 * 12
    }
}

/// Yee sample offsets (in cell units) per E component.
pub(crate) const E_OFFSETS: [[f64; 3]; 3] = [
    [0.5, 0.0, 0.0],
    [0.0, 0.5, 0.0],
    [0.0, 0.0, 0.5],
];

/// Rasterizes a validated design. Deterministic: identical inputs produce
/// bit-identical grids.
pub fn rasterize(design: &CbgDesign, spec: &GridSpec) -> Result<PermittivityGrid, GeometryError> {
    let violations = super::validate(design);
    if !violations.is_empty() {
        return Err(GeometryError::InvalidDesign(violations));
    }
    let [dx, dy, dz] = spec.cell_nm;
    let stack_top = design.stack.total_thickness_nm();
    let z_lo = -spec.pad_below_nm - spec.pml_cells as f64 * dz;
    let z_hi = stack_top + spec.pad_above_nm + spec.pml_cells as f64 * dz;
    let _ = dx;
    let dims = spec.estimated_dims(design);

    let cap = spec.max_grid_bytes.unwrap_or(DEFAULT_MAX_GRID_BYTES);
    let required = PermittivityGrid::estimated_bytes(dims);
    if required > cap {
        return Err(GeometryError::GridTooLarge {
            required_bytes: required,
            cap_bytes: cap,
            dims,
        });
    }

    let origin = [
        -(dims[0] as f64) * dx / 2.0,
        -(dims[1] as f64) * dy / 2.0,
        z_lo,
    ];

    // z-profile of the stack: (z_bottom, z_top, eps_or_metal, in_membrane).
    struct Slab {
        z0: f64,
        z1: f64,
        eps: f64,
        metal: Option<MetalModel>,
        in_membrane: bool,
    }
    let mut slabs = Vec::new();
    let membrane_start = design.stack.membrane_start();
    let mut z = 0.0;
    for (li, layer) in design.stack.layers().iter().enumerate() {
        slabs.push(Slab {
            z0: z,
            z1: z + layer.thickness_nm,
            eps: layer.material.permittivity(),
            metal: layer.material.metal,
            in_membrane: li >= membrane_start,
        });
        z += layer.thickness_nm;
    }
    let material_slab = |zq: f64| -> Option<&Slab> {
        slabs.iter().find(|s| zq >= s.z0 && zq < s.z1)
    };

    // In-plane semiconductor fraction per sample column, one map per E
    // component offset. Unpatterned designs shortcut to 1.
    let pattern = if design.num_rings > 0 {
        Some(PlanePattern::new(design))
    } else {
        None
    };
    let fraction_map = |off_x: f64, off_y: f64| -> Vec<f64> {
        let mut map = vec![1.0f64; dims[0] * dims[1]];
        if let Some(pattern) = &pattern {
            let inv = 1.0 / SUPERSAMPLE as f64;
            for j in 0..dims[1] {
                let yc = origin[1] + (j as f64 + off_y) * dy;
                for i in 0..dims[0] {
                    let xc = origin[0] + (i as f64 + off_x) * dx;
                    let mut hits = 0usize;
                    for sy in 0..SUPERSAMPLE {
                        let y = yc + ((sy as f64 + 0.5) * inv - 0.5) * dy;
                        for sx in 0..SUPERSAMPLE {
                            let x = xc + ((sx as f64 + 0.5) * inv - 0.5) * dx;
                            if pattern.semiconductor_at(x, y) {
                                hits += 1;
                            }
                        }
                    }
                    map[j * dims[0] + i] = hits as f64 * inv * inv;
                }
            }
        }
        map
    };

    let n_samples = dims[0] * dims[1] * dims[2];
    let mut eps_out: [Vec<f64>; 3] = [
        vec![1.0; n_samples],
        vec![1.0; n_samples],
        vec![1.0; n_samples],
    ];
    let mut pec: [Vec<u32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut drude_samples: [Vec<u32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut drude_params: Option<(f64, f64, f64)> = None;

    for c in 0..3 {
        let [off_x, off_y, off_z] = E_OFFSETS[c];
        let fractions = fraction_map(off_x, off_y);
        for k in 0..dims[2] {
            let zc = origin[2] + (k as f64 + off_z) * dz;
            // Metal ownership decided by the sample point itself.
            let metal_here = material_slab(zc).and_then(|s| s.metal.map(|m| (m, s.eps)));
            // Dual-cell z segment, clamped to the grid so edge samples see
            // the boundary material extended.
            let seg0 = (zc - dz / 2.0).max(origin[2]);
            let seg1 = (zc + dz / 2.0).min(z_hi);
            let seg_len = seg1 - seg0;
            // Partition the segment by slab boundaries into uniform pieces:
            // (weight, eps, in_membrane).
            let mut pieces: Vec<(f64, f64, bool)> = Vec::new();
            let mut cursor = seg0;
            while cursor < seg1 - 1e-12 {
                let slab = material_slab(cursor + 1e-12);
                let (piece_end, eps, in_membrane) = match slab {
                    Some(s) => (s.z1.min(seg1), s.eps, s.in_membrane),
                    None => {
                        // Air (below stack or above it).
                        let next = slabs
                            .iter()
                            .map(|s| s.z0)
                            .filter(|&z0| z0 > cursor + 1e-12)
                            .fold(seg1, f64::min);
                        (next.min(seg1), 1.0, false)
                    }
                };
                pieces.push(((piece_end - cursor) / seg_len, eps, in_membrane));
                cursor = piece_end;
            }

            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = (k * dims[1] + j) * dims[0] + i;
                    if let Some((model, eps_inf)) = metal_here {
                        match model {
                            MetalModel::PerfectConductor => pec[c].push(idx as u32),
                            MetalModel::Drude {
                                plasma_frequency_rad_s,
                                collision_rate_rad_s,
                            } => {
                                drude_params.get_or_insert((
                                    plasma_frequency_rad_s,
                                    collision_rate_rad_s,
                                    eps_inf,
                                ));
                                drude_samples[c].push(idx as u32);
                                eps_out[c][idx] = eps_inf;
                            }
                        }
                        continue;
                    }
                    let f = fractions[j * dims[0] + i];
                    let mut eps_avg = 0.0;
                    for &(w, eps, in_membrane) in &pieces {
                        let eps_here = if in_membrane {
                            f * eps + (1.0 - f) * 1.0
                        } else {
                            eps
                        };
                        eps_avg += w * eps_here;
                    }
                    eps_out[c][idx] = eps_avg;
                }
            }
        }
    }

    let drude = drude_params.map(
        |(plasma_frequency_rad_s, collision_rate_rad_s, eps_inf)| DrudeMedium {
            plasma_frequency_rad_s,
            collision_rate_rad_s,
            eps_inf,
            samples: drude_samples,
        },
    );

    Ok(PermittivityGrid {
        cell_nm: spec.cell_nm,
        dims,
        origin_nm: origin,
        eps: eps_out,
        pec,
        drude,
        background_index: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{presets, Layer, LayerStack, MaterialSpec};
    use approx::assert_relative_eq;

    fn bare_membrane(t: f64, n: f64) -> CbgDesign {
        CbgDesign {
            inner_radius_nm: 400.0,
            grating_period_nm: 350.0,
            etch_width_nm: 80.0,
            num_rings: 0,
            bridge_width_nm: 125.0,
            bridge_count: 4,
            bridge_angles_rad: None,
            stack: LayerStack::new(vec![Layer {
                material: MaterialSpec::dielectric("GaAs", n),
                thickness_nm: t,
            }]),
            target_wavelength_nm: 930.0,
        }
    }

    #[test]
    fn homogeneous_stack_rasters_to_uniform_permittivity() {
        let d = bare_membrane(100.0, 3.52);
        let spec = GridSpec {
            cell_nm: [25.0, 25.0, 25.0],
            lateral_pad_nm: 0.0,
            pad_below_nm: 0.0,
            pad_above_nm: 0.0,
            pml_cells: 0,
            max_grid_bytes: None,
        };
        let grid = rasterize(&d, &spec).unwrap();
        for c in 0..3 {
            for &e in &grid.eps[c] {
                assert_relative_eq!(e, 3.52 * 3.52, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn half_filled_cell_averages_to_mean_permittivity() {
        // 100 nm membrane, 50 nm cells, 50 nm air above: the Ex sample at
        // z = 100 nm has a dual cell half in semiconductor, half in air.
        let d = bare_membrane(100.0, 3.52);
        let spec = GridSpec {
            cell_nm: [50.0, 50.0, 50.0],
            lateral_pad_nm: 0.0,
            pad_below_nm: 0.0,
            pad_above_nm: 50.0,
            pml_cells: 0,
            max_grid_bytes: None,
        };
        let grid = rasterize(&d, &spec).unwrap();
        let k = 2; // Ex plane at z = 100 nm
        let idx = grid.idx(grid.dims[0] / 2, grid.dims[1] / 2, k);
        assert_relative_eq!(grid.eps[0][idx], (3.52f64.powi(2) + 1.0) / 2.0, max_relative = 1e-12);
        assert_relative_eq!(grid.eps[0][idx], 6.6952, max_relative = 1e-4);
    }

    #[test]
    fn table1_grid_extent_covers_stack_and_padding() {
        let d = presets::cbg930();
        let spec = GridSpec {
            cell_nm: [25.0, 25.0, 25.0],
            lateral_pad_nm: 100.0,
            pad_below_nm: 0.0,
            pad_above_nm: 200.0,
            pml_cells: 8,
            max_grid_bytes: None,
        };
        let grid = rasterize(&d, &spec).unwrap();
        let z_extent = grid.dims[2] as f64 * 25.0;
        let expected = 100.0 + 200.0 + 153.0 + 200.0 + 2.0 * 8.0 * 25.0;
        assert!(z_extent >= expected && z_extent < expected + 25.0 + 1e-9);
        // Gold plate must be pinned as PEC across the lateral extent.
        assert!(!grid.pec[0].is_empty());
    }

    #[test]
    fn rasterize_is_deterministic() {
        let d = presets::cbg780();
        let spec = GridSpec::for_design(&d, 8.0);
        let a = rasterize(&d, &spec).unwrap();
        let b = rasterize(&d, &spec).unwrap();
        for c in 0..3 {
            assert_eq!(a.eps[c], b.eps[c]);
            assert_eq!(a.pec[c], b.pec[c]);
        }
    }

    #[test]
    fn grid_cap_is_enforced_with_size_report() {
        let d = presets::cbg930();
        let mut spec = GridSpec::for_design(&d, 20.0);
        spec.max_grid_bytes = Some(1024);
        match rasterize(&d, &spec) {
            Err(GeometryError::GridTooLarge {
                required_bytes,
                cap_bytes,
                ..
            }) => {
                assert!(required_bytes > cap_bytes);
            }
            other => panic!("expected GridTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn drude_gold_samples_are_tagged() {
        let mut d = presets::cbg930();
        d.stack.layers[0].material = MaterialSpec::gold_drude();
        let spec = GridSpec::for_design(&d, 6.0);
        let grid = rasterize(&d, &spec).unwrap();
        let drude = grid.drude.expect("drude medium present");
        assert!(drude.samples.iter().all(|s| !s.is_empty()));
        assert_relative_eq!(drude.eps_inf, 9.5, max_relative = 1e-12);
        assert!(grid.pec.iter().all(|p| p.is_empty()));
    }
}
