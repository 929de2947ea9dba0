//! Simulation orchestration: turns a device design plus run options into a
//! meshed, monitored FDTD run and analyzed emission metrics. Shared by the
//! CLI commands and the FDTD-backed optimization objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emission::{analyze, AnalysisRequest, EmissionError, EmissionMetrics};
use crate::fdtd::{
    run, BoxSpec, DipoleSource, FdtdError, Monitor, MonitorSpec, PlaneSpec, SimConfig, SimResult,
};
use crate::geometry::{rasterize, CbgDesign, GeometryError, GridSpec};
use crate::optimizer::{
    cost, CostWeights, DesignObjective, EvalOutcome, MetricsSummary, Stage,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fdtd(#[from] FdtdError),
    #[error(transparent)]
    Emission(#[from] EmissionError),
}

/// Mesh density profile. `Desk` is the test-scale default; `PaperFidelity`
/// matches the 100-points-per-wavelength meshing rule and is guarded by an
/// explicit opt-in in the CLI because of its memory and runtime demands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshProfile {
    Desk,
    PaperFidelity,
}

impl MeshProfile {
    pub fn points_per_wavelength(self) -> f64 {
        match self {
            MeshProfile::Desk => 20.0,
            MeshProfile::PaperFidelity => 100.0,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(MeshProfile::Desk),
            "paper-fidelity" => Some(MeshProfile::PaperFidelity),
            _ => None,
        }
    }
}

impl std::fmt::Display for MeshProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshProfile::Desk => write!(f, "desk"),
            MeshProfile::PaperFidelity => write!(f, "paper-fidelity"),
        }
    }
}

/// Frequency band sampled by the run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Band {
    pub center_nm: f64,
    pub span_nm: f64,
    pub samples: usize,
}

impl Band {
    pub fn around(center_nm: f64) -> Self {
        Band {
            center_nm,
            span_nm: 0.08 * center_nm,
            samples: 31,
        }
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        let n = self.samples.max(3);
        (0..n)
            .map(|i| {
                self.center_nm - self.span_nm / 2.0
                    + self.span_nm * i as f64 / (n - 1) as f64
            })
            .collect()
    }
}

/// Knobs for one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub mesh: MeshProfile,
    pub band: Band,
    pub na_values: Vec<f64>,
    pub max_steps: usize,
    pub courant: f64,
    pub fractional_bandwidth: f64,
    /// Box/top monitors record at this many wavelengths spread over the
    /// band (the source-power spectrum always uses every band sample);
    /// `None` records fluxes at every sample.
    pub flux_samples: Option<usize>,
    pub max_grid_bytes: Option<u64>,
}

impl RunOptions {
    pub fn new(design: &CbgDesign, mesh: MeshProfile) -> Self {
        RunOptions {
            mesh,
            band: Band::around(design.target_wavelength_nm),
            na_values: vec![0.4, 0.7, 1.0],
            max_steps: 100_000,
            courant: 0.7,
            fractional_bandwidth: 0.7,
            flux_samples: None,
            max_grid_bytes: None,
        }
    }
}

/// A finished design simulation.
pub struct DesignRun {
    pub result: SimResult,
    pub metrics: EmissionMetrics,
    pub grid_dims: [usize; 3],
}

/// Refractive index of the membrane sublayer hosting the dipole (the
/// Purcell reference medium).
pub fn dipole_host_index(design: &CbgDesign) -> f64 {
    let z = design.stack.dipole_z_nm();
    let mut cursor = 0.0;
    for layer in design.stack.layers() {
        let top = cursor + layer.thickness_nm;
        if z >= cursor && z < top {
            return layer.material.refractive_index;
        }
        cursor = top;
    }
    design
        .stack
        .layers()
        .last()
        .map(|l| l.material.refractive_index)
        .unwrap_or(1.0)
}

/// Evenly decimates the band to `m` wavelengths (always keeping the ends).
fn decimate(wavelengths: &[f64], m: usize) -> Vec<f64> {
    let n = wavelengths.len();
    if m >= n || m < 2 {
        return wavelengths.to_vec();
    }
    let mut out: Vec<f64> = (0..m)
        .map(|i| wavelengths[(i * (n - 1)) / (m - 1)])
        .collect();
    out.dedup();
    out
}

/// Builds the standard simulation for a design: rasterized grid, centered
/// x-oriented dipole at the design's emitter position, an enclosing box
/// monitor, and a wide top plane for the far-field transform.
pub fn build_sim(design: &CbgDesign, opts: &RunOptions) -> Result<SimConfig, RunnerError> {
    let mut spec = GridSpec::for_design(design, opts.mesh.points_per_wavelength());
    spec.max_grid_bytes = opts.max_grid_bytes;
    // Suspended membranes need absorbing space below.
    if !design
        .stack
        .layers()
        .first()
        .map(|l| l.material.is_metal())
        .unwrap_or(false)
    {
        spec.pad_below_nm = 0.3 * design.target_wavelength_nm;
    }
    let grid = rasterize(design, &spec)?;
    let dims = grid.dims;
    let dz = grid.cell_nm[2];
    let stack_top = design.stack.total_thickness_nm();
    let pml = 10usize;

    let dipole = DipoleSource {
        position_nm: [0.0, 0.0, design.stack.dipole_z_nm()],
        orientation: [1.0, 0.0, 0.0],
        center_wavelength_nm: opts.band.center_nm,
        fractional_bandwidth: opts.fractional_bandwidth,
        amplitude: 1.0,
    };

    let spectrum = opts.band.wavelengths();
    let flux_wavelengths = match opts.flux_samples {
        Some(m) => decimate(&spectrum, m),
        None => spectrum.clone(),
    };

    // Top plane: halfway into the air gap above the stack.
    let gap_cells = ((dims[2] as f64) - (stack_top - grid.origin_nm[2]) / dz) as usize;
    let _ = gap_cells;
    let stack_top_k = ((stack_top - grid.origin_nm[2]) / dz).ceil() as usize;
    let air_top_k = dims[2] - pml - 1;
    let top_k = (stack_top_k + (air_top_k - stack_top_k.min(air_top_k)) / 2).clamp(1, dims[2] - 2);

    let m_lat = pml + 2;
    let box_spec = BoxSpec {
        lo: [m_lat, m_lat, (pml + 2).min(dims[2] - 3)],
        hi: [dims[0] - 1 - m_lat, dims[1] - 1 - m_lat, top_k - 1],
    };
    let plane_spec = PlaneSpec {
        axis: 2,
        index: top_k,
        lo: [m_lat, m_lat],
        hi: [dims[0] - 1 - m_lat, dims[1] - 1 - m_lat],
    };

    let mut config = SimConfig::new(grid, dipole);
    config.courant = opts.courant;
    config.pml.thickness = pml;
    config.spectrum_wavelengths_nm = spectrum;
    config.monitors.push(Monitor {
        label: "box".into(),
        spec: MonitorSpec::Box(box_spec),
        wavelengths_nm: flux_wavelengths.clone(),
    });
    config.monitors.push(Monitor {
        label: "top".into(),
        spec: MonitorSpec::Plane(plane_spec),
        wavelengths_nm: flux_wavelengths,
    });
    config.stop.max_steps = opts.max_steps;
    Ok(config)
}

/// Runs one design end to end and computes its emission metrics.
pub fn simulate_design(design: &CbgDesign, opts: &RunOptions) -> Result<DesignRun, RunnerError> {
    let violations = crate::geometry::validate(design);
    if !violations.is_empty() {
        return Err(GeometryError::InvalidDesign(violations).into());
    }
    let config = build_sim(design, opts)?;
    let dims = config.grid.dims;
    let result = run(&config)?;
    let metrics = analyze(&AnalysisRequest {
        result: &result,
        box_monitor: "box",
        top_monitor: "top",
        reference_index: dipole_host_index(design),
        na_values: opts.na_values.clone(),
        target_wavelength_nm: design.target_wavelength_nm,
        structure_top_nm: Some(design.stack.total_thickness_nm()),
    })?;
    Ok(DesignRun {
        result,
        metrics,
        grid_dims: dims,
    })
}

/// Sweepable geometry parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    R,
    P,
    W,
    TSc,
    TS,
}

impl SweepParam {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "R" | "r" => Some(SweepParam::R),
            "P" | "p" => Some(SweepParam::P),
            "W" | "w" | "E" | "e" => Some(SweepParam::W),
            "t_sc" | "tsc" => Some(SweepParam::TSc),
            "t_s" | "ts" => Some(SweepParam::TS),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::R => "R",
            SweepParam::P => "P",
            SweepParam::W => "W",
            SweepParam::TSc => "t_sc",
            SweepParam::TS => "t_s",
        }
    }
}

/// Applies an offset to one design parameter. Thickness offsets go to the
/// topmost membrane layer (t_sc) or the spacer directly below it (t_s).
pub fn apply_offset(design: &CbgDesign, param: SweepParam, offset_nm: f64) -> CbgDesign {
    let mut d = design.clone();
    match param {
        SweepParam::R => d.inner_radius_nm += offset_nm,
        SweepParam::P => d.grating_period_nm += offset_nm,
        SweepParam::W => d.etch_width_nm += offset_nm,
        SweepParam::TSc => {
            let last = d.stack.layers.len() - 1;
            d.stack.layers[last].thickness_nm += offset_nm;
        }
        SweepParam::TS => {
            let start = d.stack.membrane_start();
            if start > 0 {
                d.stack.layers[start - 1].thickness_nm += offset_nm;
            }
        }
    }
    d
}

/// Sets the optimizer's stage parameters on a design template. The vector
/// layout is (R, P, W, t_sc) for the membrane stage and (R, P, W, t_sc,
/// t_s) for the full stack. t_sc reshapes the whole membrane to a single
/// host layer; templates with barrier membranes keep their sublayer split
/// and scale it proportionally.
pub fn design_from_vector(template: &CbgDesign, stage: Stage, v: &[f64]) -> CbgDesign {
    let mut d = match stage {
        Stage::Membrane => template.suspended(),
        Stage::FullStack => template.clone(),
    };
    d.inner_radius_nm = v[0];
    d.grating_period_nm = v[1];
    d.etch_width_nm = v[2];
    let t_new = v[3];
    let t_old = d.stack.membrane_thickness_nm();
    if t_old > 0.0 {
        let scale = t_new / t_old;
        let start = d.stack.membrane_start();
        for layer in &mut d.stack.layers[start..] {
            layer.thickness_nm *= scale;
        }
        if let Some(offset) = d.stack.dipole_offset_nm {
            d.stack.dipole_offset_nm = Some(offset * scale);
        }
    }
    if let Stage::FullStack = stage {
        let start = d.stack.membrane_start();
        if start > 0 {
            d.stack.layers[start - 1].thickness_nm = v[4];
        }
    }
    d
}

/// FDTD-backed optimization objective over a design template.
pub struct FdtdObjective {
    pub template: CbgDesign,
    pub weights: CostWeights,
    pub opts: RunOptions,
}

impl DesignObjective for FdtdObjective {
    fn evaluate(&self, stage: Stage, vector: &[f64]) -> EvalOutcome {
        let design = design_from_vector(&self.template, stage, vector);
        if !crate::geometry::validate(&design).is_empty() {
            return EvalOutcome {
                cost: f64::INFINITY,
                metrics: None,
            };
        }
        match simulate_design(&design, &self.opts) {
            Ok(run) => {
                let m = &run.metrics;
                EvalOutcome {
                    cost: cost(m, &self.weights),
                    metrics: Some(MetricsSummary {
                        resonance_nm: m.resonance_nm,
                        purcell: m.purcell_at_resonance(),
                        e_up: m.resonance_nm.map(|_| m.at_resonance(&m.e_up.values)).flatten(),
                        o_ff: m.resonance_nm.map(|_| m.at_resonance(&m.o_ff)).flatten(),
                        c_na07: m.at_resonance(&m.c_na07_cost),
                        trusted: m.trusted,
                    }),
                }
            }
            Err(_) => EvalOutcome {
                cost: f64::INFINITY,
                metrics: None,
            },
        }
    }

    fn label(&self) -> &str {
        "fdtd"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::presets;

    #[test]
    fn band_wavelengths_cover_span() {
        let b = Band {
            center_nm: 930.0,
            span_nm: 60.0,
            samples: 7,
        };
        let w = b.wavelengths();
        assert_eq!(w.len(), 7);
        approx::assert_relative_eq!(w[0], 900.0);
        approx::assert_relative_eq!(w[6], 960.0);
    }

    #[test]
    fn decimation_keeps_ends() {
        let w: Vec<f64> = (0..21).map(|i| 900.0 + i as f64).collect();
        let d = decimate(&w, 5);
        assert_eq!(d.len(), 5);
        assert_eq!(d[0], 900.0);
        assert_eq!(d[4], 920.0);
    }

    #[test]
    fn dipole_host_index_finds_the_right_layer() {
        assert_eq!(dipole_host_index(&presets::cbg930()), 3.52);
        // Barrier preset: dipole sits 9 nm above the barrier, in GaAs.
        assert_eq!(dipole_host_index(&presets::cbg930_barrier()), 3.52);
    }

    #[test]
    fn offsets_apply_to_the_documented_knobs() {
        let d = presets::cbg930();
        assert_eq!(apply_offset(&d, SweepParam::R, 10.0).inner_radius_nm, 415.0);
        assert_eq!(apply_offset(&d, SweepParam::P, -10.0).grating_period_nm, 347.0);
        assert_eq!(apply_offset(&d, SweepParam::W, 10.0).etch_width_nm, 90.0);
        let t = apply_offset(&d, SweepParam::TSc, 5.0);
        assert_eq!(t.stack.membrane_thickness_nm(), 158.0);
        let s = apply_offset(&d, SweepParam::TS, -20.0);
        assert_eq!(s.stack.layers[1].thickness_nm, 180.0);
    }

    #[test]
    fn design_from_vector_round_trips_template_values() {
        let template = presets::cbg930();
        let v = [405.0, 357.0, 80.0, 153.0, 200.0];
        let full = design_from_vector(&template, Stage::FullStack, &v);
        assert_eq!(full, template);
        let membrane = design_from_vector(&template, Stage::Membrane, &v[..4]);
        assert_eq!(membrane.stack.layers.len(), 1);
        assert_eq!(membrane.stack.membrane_thickness_nm(), 153.0);
    }

    #[test]
    fn build_sim_produces_valid_monitor_layout() {
        let mut design = presets::cbg930();
        design.num_rings = 2;
        let mut opts = RunOptions::new(&design, MeshProfile::Desk);
        opts.band.samples = 5;
        // Coarse mesh keeps this quick; only the geometry is checked.
        let mut spec_opts = opts.clone();
        spec_opts.mesh = MeshProfile::Desk;
        let config = build_sim(&design, &spec_opts).unwrap();
        let dims = config.grid.dims;
        let top = config
            .monitors
            .iter()
            .find(|m| m.label == "top")
            .expect("top plane monitor");
        if let MonitorSpec::Plane(p) = &top.spec {
            let plane_z = config.grid.origin_nm[2] + p.index as f64 * config.grid.cell_nm[2];
            assert!(plane_z > design.stack.total_thickness_nm());
            assert!(p.index < dims[2] - 10);
        } else {
            panic!("top monitor must be a plane");
        }
    }
}
