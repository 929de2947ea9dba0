//! 3D finite-difference time-domain Maxwell solver on a Yee grid.
//!
//! Leapfrog E/H updates with CPML absorbing boundaries, a soft (additive
//! current) broadband dipole source, running-DFT field monitors, and an
//! energy-decay stop rule. Monitor output is normalized by the recorded
//! source spectrum so every frequency-domain quantity is per unit dipole
//! moment, directly comparable to the closed-form references.
//!
//! Field arrays are laid out as `(k * ny + j) * nx + i`; updates over a
//! half-step are embarrassingly parallel over z-slabs, so results are
//! bit-identical for any worker count.

mod monitor;
mod pml;

pub use monitor::{
    read_face_dump, write_face_dump, write_face_line_csv, BoxSpec, FaceData, Monitor,
    MonitorResult, MonitorSpec, PlaneSpec,
};
pub use pml::PmlConfig;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::constants::{C0, EPS0, MU0, NM};
use crate::geometry::PermittivityGrid;
use pml::AxisPml;

#[derive(Debug, Error)]
pub enum FdtdError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("numerical instability detected at step {step}")]
    Unstable { step: usize },
    #[error("monitor i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field dump: {0}")]
    BadDump(String),
}

/// Band-limited soft dipole current source.
///
/// The temporal profile is a sine carrier under a Gaussian envelope,
/// `sin(w0 (t - t0)) exp(-(t - t0)^2 / (2 tau^2))`, with `tau` set so the
/// spectral amplitude at the band edges `w0 (1 +- fractional_bandwidth / 2)`
/// is 1% of the peak.
#[derive(Debug, Clone)]
pub struct DipoleSource {
    /// Requested position; snapped to the nearest field sample per component.
    pub position_nm: [f64; 3],
    pub orientation: [f64; 3],
    pub center_wavelength_nm: f64,
    pub fractional_bandwidth: f64,
    pub amplitude: f64,
}

/// Spectral half-width (in units of 1/tau) at which the pulse amplitude
/// drops to 1% of peak: sqrt(2 ln 100).
const PULSE_EDGE: f64 = 3.034_854_258_770_293;

impl DipoleSource {
    pub fn x_oriented(position_nm: [f64; 3], center_wavelength_nm: f64) -> Self {
        DipoleSource {
            position_nm,
            orientation: [1.0, 0.0, 0.0],
            center_wavelength_nm,
            fractional_bandwidth: 0.7,
            amplitude: 1.0,
        }
    }

    pub fn omega0(&self) -> f64 {
        crate::constants::omega_from_wavelength_nm(self.center_wavelength_nm)
    }

    /// Envelope width from the fractional bandwidth.
    pub fn tau(&self) -> f64 {
        2.0 * PULSE_EDGE / (self.fractional_bandwidth * self.omega0())
    }

    /// Carrier delay; the envelope is ~4e-5 of peak at t = 0.
    pub fn t_start_offset(&self) -> f64 {
        4.5 * self.tau()
    }

    /// Time after which the source is effectively off.
    pub fn t_end(&self) -> f64 {
        9.0 * self.tau()
    }

    pub fn waveform(&self, t: f64) -> f64 {
        let t0 = self.t_start_offset();
        let arg = (t - t0) / self.tau();
        self.amplitude * (self.omega0() * (t - t0)).sin() * (-0.5 * arg * arg).exp()
    }

    /// True if the pulse spectrum covers `wavelength_nm` with at least 1%
    /// of the peak spectral amplitude.
    pub fn covers(&self, wavelength_nm: f64) -> bool {
        let omega = crate::constants::omega_from_wavelength_nm(wavelength_nm);
        (omega - self.omega0()).abs() * self.tau() <= PULSE_EDGE + 1e-9
    }
}

/// Termination rule: stop when total field energy decays below
/// `energy_threshold` times its peak (checked every `check_interval` steps
/// once the source has rung down), or at `max_steps`.
#[derive(Debug, Clone)]
pub struct StopRule {
    pub energy_threshold: f64,
    pub max_steps: usize,
    pub check_interval: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            energy_threshold: 1e-5,
            max_steps: 100_000,
            check_interval: 25,
        }
    }
}

/// Time-series probe of one field component at one cell.
#[derive(Debug, Clone)]
pub struct Probe {
    pub component: FieldComponent,
    pub cell: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldComponent {
    Ex,
    Ey,
    Ez,
    Hx,
    Hy,
    Hz,
}

/// Full simulation description.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: PermittivityGrid,
    /// Courant factor S in (0, 1]; dt = S / (c sqrt(sum 1/d_i^2)).
    pub courant: f64,
    pub pml: PmlConfig,
    pub source: DipoleSource,
    pub monitors: Vec<Monitor>,
    /// Wavelengths at which the delivered source power is recorded.
    pub spectrum_wavelengths_nm: Vec<f64>,
    pub stop: StopRule,
    pub probes: Vec<Probe>,
}

impl SimConfig {
    pub fn new(grid: PermittivityGrid, source: DipoleSource) -> Self {
        SimConfig {
            grid,
            courant: 0.7,
            pml: PmlConfig::default(),
            source,
            monitors: Vec::new(),
            spectrum_wavelengths_nm: Vec::new(),
            stop: StopRule::default(),
            probes: Vec::new(),
        }
    }

    pub fn dt(&self) -> f64 {
        timestep_bound(self.grid.cell_nm, self.courant)
    }

    fn validate(&self) -> Result<(), FdtdError> {
        let err = |msg: String| Err(FdtdError::Config(msg));
        if !(self.courant > 0.0 && self.courant <= 1.0) {
            return err(format!("courant factor {} outside (0, 1]", self.courant));
        }
        let t = self.pml.thickness;
        if t != 0 && t < 8 {
            return err(format!("PML thickness {t} below the 8-cell minimum"));
        }
        for (a, &dim) in self.grid.dims.iter().enumerate() {
            if dim < 2 * (t + 2) + 1 {
                return err(format!("axis {a} dimension {dim} too small for PML {t}"));
            }
        }
        let norm = self
            .source
            .orientation
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return err("source orientation must be a nonzero vector".into());
        }
        for m in &self.monitors {
            for wl in &m.wavelengths_nm {
                if !self.source.covers(*wl) {
                    return err(format!(
                        "monitor '{}' wavelength {wl} nm outside the source band",
                        m.label
                    ));
                }
            }
        }
        for wl in &self.spectrum_wavelengths_nm {
            if !self.source.covers(*wl) {
                return err(format!("spectrum wavelength {wl} nm outside the source band"));
            }
        }
        let cell = self.grid.cell_of(self.source.position_nm);
        for a in 0..3 {
            if cell[a] <= t + 1 || cell[a] >= self.grid.dims[a] - t - 2 {
                return err(format!("source cell {cell:?} too close to the boundary"));
            }
        }
        for m in &self.monitors {
            match &m.spec {
                MonitorSpec::Plane(p) => validate_plane(p, &self.grid.dims, &m.label)?,
                MonitorSpec::Box(b) => {
                    for a in 0..3 {
                        if b.lo[a] < 1 || b.hi[a] > self.grid.dims[a] - 2 || b.lo[a] > b.hi[a] {
                            return err(format!("monitor '{}' box range invalid", m.label));
                        }
                        if cell[a] < b.lo[a] || cell[a] > b.hi[a] {
                            return err(format!("monitor '{}' box does not enclose the source", m.label));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_plane(p: &PlaneSpec, dims: &[usize; 3], label: &str) -> Result<(), FdtdError> {
    if p.axis > 2 {
        return Err(FdtdError::Config(format!("monitor '{label}' axis > 2")));
    }
    let t1 = (p.axis + 1) % 3;
    let t2 = (p.axis + 2) % 3;
    if p.index < 1 || p.index > dims[p.axis] - 1 {
        return Err(FdtdError::Config(format!("monitor '{label}' plane index out of range")));
    }
    if p.hi[0] >= dims[t1] || p.hi[1] >= dims[t2] || p.lo[0] > p.hi[0] || p.lo[1] > p.hi[1] {
        return Err(FdtdError::Config(format!("monitor '{label}' in-plane range invalid")));
    }
    Ok(())
}

/// Result of a run. Frequency-domain quantities are normalized per unit
/// dipole moment at each frequency.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub cell_nm: [f64; 3],
    /// Coordinates (nm) of grid node (0, 0, 0), for georeferencing faces.
    pub origin_nm: [f64; 3],
    pub dt_s: f64,
    pub spectrum_wavelengths_nm: Vec<f64>,
    /// Power delivered by the dipole, -(1/2) Re(J* . E) at the source.
    pub source_power: Vec<f64>,
    pub monitors: Vec<MonitorResult>,
    pub steps_run: usize,
    pub residual_energy_fraction: f64,
    pub converged: bool,
    /// (step, total field energy) samples at each stop-rule check.
    pub energy_samples: Vec<(usize, f64)>,
    pub probe_series: Vec<Vec<f64>>,
    pub source_cell: [usize; 3],
}

impl SimResult {
    pub fn monitor(&self, label: &str) -> Option<&MonitorResult> {
        self.monitors.iter().find(|m| m.label == label)
    }

    pub fn cell_m(&self) -> [f64; 3] {
        [self.cell_nm[0] * NM, self.cell_nm[1] * NM, self.cell_nm[2] * NM]
    }
}

/// Power delivered by the source at the spectrum wavelength nearest to the
/// request (exact match expected in normal use).
pub fn source_power(result: &SimResult, wavelength_nm: f64) -> f64 {
    let mut best = (f64::INFINITY, 0);
    for (i, &w) in result.spectrum_wavelengths_nm.iter().enumerate() {
        let d = (w - wavelength_nm).abs();
        if d < best.0 {
            best = (d, i);
        }
    }
    result.source_power[best.1]
}

/// Stable Yee timestep: dt = S / (c sqrt(1/dx^2 + 1/dy^2 + 1/dz^2)).
pub fn timestep_bound(cell_nm: [f64; 3], courant: f64) -> f64 {
    assert!(courant > 0.0 && courant <= 1.0, "courant factor in (0,1]");
    let inv_sq: f64 = cell_nm
        .iter()
        .map(|&d| {
            assert!(d > 0.0, "cell sizes must be positive");
            1.0 / (d * NM * d * NM)
        })
        .sum();
    courant / (C0 * inv_sq.sqrt())
}

/// Runs the configured simulation to completion.
pub fn run(config: &SimConfig) -> Result<SimResult, FdtdError> {
    config.validate()?;
    Engine::new(config).run(config)
}

/// Per-monitor DFT bookkeeping: rotating phasors plus the source-waveform
/// spectrum on this monitor's frequency list.
struct FreqSet {
    omegas: Vec<f64>,
    rot: Vec<Complex64>,
    ph_e: Vec<Complex64>,
    ph_h: Vec<Complex64>,
    waveform_spectrum: Vec<Complex64>,
}

impl FreqSet {
    fn new(wavelengths_nm: &[f64], dt: f64) -> Self {
        let omegas: Vec<f64> = wavelengths_nm
            .iter()
            .map(|&w| crate::constants::omega_from_wavelength_nm(w))
            .collect();
        let rot: Vec<Complex64> = omegas.iter().map(|&w| Complex64::from_polar(1.0, w * dt)).collect();
        let ph_h = omegas
            .iter()
            .map(|&w| Complex64::from_polar(1.0, w * dt / 2.0))
            .collect();
        FreqSet {
            ph_e: rot.clone(),
            rot,
            ph_h,
            waveform_spectrum: vec![Complex64::new(0.0, 0.0); omegas.len()],
            omegas,
        }
    }

    fn advance(&mut self) {
        for i in 0..self.rot.len() {
            self.ph_e[i] *= self.rot[i];
            self.ph_h[i] *= self.rot[i];
        }
    }

    /// Dipole-moment spectrum p(w) = A(w) / (-i w) of the recorded current
    /// waveform.
    fn moment_spectrum(&self) -> Vec<Complex64> {
        self.omegas
            .iter()
            .zip(&self.waveform_spectrum)
            .map(|(&w, &a)| a / Complex64::new(0.0, -w))
            .collect()
    }
}

struct Engine {
    nx: usize,
    ny: usize,
    nz: usize,
    nxny: usize,
    inv_d: [f64; 3],
    dt: f64,
    ex: Vec<f64>,
    ey: Vec<f64>,
    ez: Vec<f64>,
    hx: Vec<f64>,
    hy: Vec<f64>,
    hz: Vec<f64>,
    /// dt / (eps0 eps_r) per E sample.
    ce: [Vec<f64>; 3],
    dh: f64,
    pml: [AxisPml; 3],
    drude: Option<DrudeState>,
    /// Snapped source sample index per component, with orientation weight.
    src: Vec<(usize, usize, f64)>, // (component, flat index, weight)
    src_cell_volume: f64,
}

struct DrudeState {
    /// (1 - g dt/2) / (1 + g dt/2)
    ka: f64,
    /// eps0 wp^2 dt / (1 + g dt/2)
    kb: f64,
    /// Per component: sample indices, current J, and scratch for E^n.
    samples: [Vec<u32>; 3],
    j: [Vec<f64>; 3],
    e_old: [Vec<f64>; 3],
}

impl Engine {
    fn new(config: &SimConfig) -> Self {
        let grid = &config.grid;
        let [nx, ny, nz] = grid.dims;
        let n = nx * ny * nz;
        let dt = config.dt();
        let cell_m = [grid.cell_nm[0] * NM, grid.cell_nm[1] * NM, grid.cell_nm[2] * NM];
        let ce = [
            grid.eps[0].iter().map(|&e| dt / (EPS0 * e)).collect::<Vec<_>>(),
            grid.eps[1].iter().map(|&e| dt / (EPS0 * e)).collect::<Vec<_>>(),
            grid.eps[2].iter().map(|&e| dt / (EPS0 * e)).collect::<Vec<_>>(),
        ];
        let pml = [
            AxisPml::new(&config.pml, nx, ny * nz, cell_m[0], dt, grid.background_index),
            AxisPml::new(&config.pml, ny, nx * nz, cell_m[1], dt, grid.background_index),
            AxisPml::new(&config.pml, nz, nx * ny, cell_m[2], dt, grid.background_index),
        ];
        let drude = grid.drude.as_ref().map(|d| {
            let g_half = d.collision_rate_rad_s * dt / 2.0;
            DrudeState {
                ka: (1.0 - g_half) / (1.0 + g_half),
                kb: EPS0 * d.plasma_frequency_rad_s.powi(2) * dt / (1.0 + g_half),
                samples: d.samples.clone(),
                j: [
                    vec![0.0; d.samples[0].len()],
                    vec![0.0; d.samples[1].len()],
                    vec![0.0; d.samples[2].len()],
                ],
                e_old: [
                    vec![0.0; d.samples[0].len()],
                    vec![0.0; d.samples[1].len()],
                    vec![0.0; d.samples[2].len()],
                ],
            }
        });

        // Snap the source to the nearest sample of each driven component.
        let mut src = Vec::new();
        let norm = config
            .source
            .orientation
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        for c in 0..3 {
            let w = config.source.orientation[c] / norm;
            if w != 0.0 {
                let off = crate::geometry::raster_offsets(c);
                let mut idx3 = [0usize; 3];
                for a in 0..3 {
                    let f = (config.source.position_nm[a] - grid.origin_nm[a]) / grid.cell_nm[a]
                        - off[a];
                    idx3[a] = (f.round().max(0.0) as usize).min(grid.dims[a] - 1);
                }
                src.push((c, (idx3[2] * ny + idx3[1]) * nx + idx3[0], w));
            }
        }

        Engine {
            nx,
            ny,
            nz,
            nxny: nx * ny,
            inv_d: [1.0 / cell_m[0], 1.0 / cell_m[1], 1.0 / cell_m[2]],
            dt,
            ex: vec![0.0; n],
            ey: vec![0.0; n],
            ez: vec![0.0; n],
            hx: vec![0.0; n],
            hy: vec![0.0; n],
            hz: vec![0.0; n],
            ce,
            dh: dt / MU0,
            pml,
            drude,
            src,
            src_cell_volume: cell_m[0] * cell_m[1] * cell_m[2],
        }
    }

    fn update_h(&mut self) {
        let (nx, ny, nz, nxny) = (self.nx, self.ny, self.nz, self.nxny);
        let [inv_dx, inv_dy, inv_dz] = self.inv_d;
        let dh = self.dh;
        // Hx -= dh (dEz/dy - dEy/dz); valid j < ny-1, k < nz-1.
        {
            let (ez, ey) = (&self.ez, &self.ey);
            self.hx
                .par_chunks_mut(nxny)
                .enumerate()
                .take(nz - 1)
                .for_each(|(k, plane)| {
                    for j in 0..ny - 1 {
                        let row = j * nx;
                        for i in 0..nx {
                            let l = row + i;
                            let g = k * nxny + l;
                            plane[l] -= dh
                                * ((ez[g + nx] - ez[g]) * inv_dy - (ey[g + nxny] - ey[g]) * inv_dz);
                        }
                    }
                });
        }
        // Hy -= dh (dEx/dz - dEz/dx); valid i < nx-1, k < nz-1.
        {
            let (ex, ez) = (&self.ex, &self.ez);
            self.hy
                .par_chunks_mut(nxny)
                .enumerate()
                .take(nz - 1)
                .for_each(|(k, plane)| {
                    for j in 0..ny {
                        let row = j * nx;
                        for i in 0..nx - 1 {
                            let l = row + i;
                            let g = k * nxny + l;
                            plane[l] -= dh
                                * ((ex[g + nxny] - ex[g]) * inv_dz - (ez[g + 1] - ez[g]) * inv_dx);
                        }
                    }
                });
        }
        // Hz -= dh (dEy/dx - dEx/dy); valid i < nx-1, j < ny-1.
        {
            let (ey, ex) = (&self.ey, &self.ex);
            self.hz
                .par_chunks_mut(nxny)
                .enumerate()
                .for_each(|(k, plane)| {
                    let _ = k;
                    for j in 0..ny - 1 {
                        let row = j * nx;
                        for i in 0..nx - 1 {
                            let l = row + i;
                            let g = k * nxny + l;
                            plane[l] -=
                                dh * ((ey[g + 1] - ey[g]) * inv_dx - (ex[g + nx] - ex[g]) * inv_dy);
                        }
                    }
                });
        }
        self.apply_pml_h();
    }

    fn update_e(&mut self) {
        let (nx, ny, _nz, nxny) = (self.nx, self.ny, self.nz, self.nxny);
        let [inv_dx, inv_dy, inv_dz] = self.inv_d;
        // Ex += ce (dHz/dy - dHy/dz); valid j >= 1, k >= 1.
        {
            let (hz, hy, ce) = (&self.hz, &self.hy, &self.ce[0]);
            self.ex
                .par_chunks_mut(nxny)
                .enumerate()
                .skip(1)
                .for_each(|(k, plane)| {
                    for j in 1..ny {
                        let row = j * nx;
                        for i in 0..nx {
                            let l = row + i;
                            let g = k * nxny + l;
                            plane[l] += ce[g]
                                * ((hz[g] - hz[g - nx]) * inv_dy - (hy[g] - hy[g - nxny]) * inv_dz);
                        }
                    }
                });
        }
        // Ey += ce (dHx/dz - dHz/dx); valid i >= 1, k >= 1.
        {
            let (hx, hz, ce) = (&self.hx, &self.hz, &self.ce[1]);
            self.ey
                .par_chunks_mut(nxny)
                .enumerate()
                .skip(1)
                .for_each(|(k, plane)| {
                    for j in 0..ny {
                        let row = j * nx;
                        for i in 1..nx {
                            let l = row + i;
                            let g = k * nxny + l;
                            plane[l] += ce[g]
                                * ((hx[g] - hx[g - nxny]) * inv_dz - (hz[g] - hz[g - 1]) * inv_dx);
                        }
                    }
                });
        }
        // Ez += ce (dHy/dx - dHx/dy); valid i >= 1, j >= 1.
        {
            let (hy, hx, ce) = (&self.hy, &self.hx, &self.ce[2]);
            self.ez
                .par_chunks_mut(nxny)
                .enumerate()
                .for_each(|(k, plane)| {
                    let _ = k;
                    for j in 1..ny {
                        let row = j * nx;
                        for i in 1..nx {
                            let l = row + i;
                            let g = k * nxny + l;
                            plane[l] += ce[g]
                                * ((hy[g] - hy[g - 1]) * inv_dx - (hx[g] - hx[g - nx]) * inv_dy);
                        }
                    }
                });
        }
        self.apply_pml_e();
    }

    /// CPML corrections for the E update (after the standard pass).
    fn apply_pml_e(&mut self) {
        let (nx, ny, nz, nxny) = (self.nx, self.ny, self.nz, self.nxny);
        let [inv_dx, inv_dy, inv_dz] = self.inv_d;
        // Axis x: Ey (slot 0, term -dHz/dx) and Ez (slot 1, term +dHy/dx).
        if self.pml[0].thickness > 0 {
            let t = self.pml[0].thickness;
            let width = self.pml[0].slab_width();
            for side in 0..2 {
                let i_range: Vec<usize> = if side == 0 {
                    (1..=t).collect()
                } else {
                    (nx - 1 - t..nx).collect()
                };
                let base = if side == 0 { 0 } else { nx - 1 - t };
                let pml = &mut self.pml[0];
                for k in 0..nz {
                    for j in 0..ny {
                        let plane = (k * ny + j) * width;
                        for &i in &i_range {
                            let slot = i - base;
                            let g = k * nxny + j * nx + i;
                            let b = pml.b_e[i];
                            let c = pml.c_e[i];
                            if c == 0.0 {
                                continue;
                            }
                            if k >= 1 {
                                let d = (self.hz[g] - self.hz[g - 1]) * inv_dx;
                                let psi = &mut pml.psi_e[side][0][plane + slot];
                                *psi = b * *psi + c * d;
                                self.ey[g] -= self.ce[1][g] * *psi;
                            }
                            if j >= 1 {
                                let d = (self.hy[g] - self.hy[g - 1]) * inv_dx;
                                let psi = &mut pml.psi_e[side][1][plane + slot];
                                *psi = b * *psi + c * d;
                                self.ez[g] += self.ce[2][g] * *psi;
                            }
                        }
                    }
                }
            }
        }
        // Axis y: Ex (slot 0, term +dHz/dy) and Ez (slot 1, term -dHx/dy).
        if self.pml[1].thickness > 0 {
            let t = self.pml[1].thickness;
            let width = self.pml[1].slab_width();
            for side in 0..2 {
                let j_range: Vec<usize> = if side == 0 {
                    (1..=t).collect()
                } else {
                    (ny - 1 - t..ny).collect()
                };
                let base = if side == 0 { 0 } else { ny - 1 - t };
                let pml = &mut self.pml[1];
                for k in 0..nz {
                    for &j in &j_range {
                        let slot = j - base;
                        let b = pml.b_e[j];
                        let c = pml.c_e[j];
                        if c == 0.0 {
                            continue;
                        }
                        for i in 0..nx {
                            let g = k * nxny + j * nx + i;
                            let plane = (k * nx + i) * width;
                            if k >= 1 {
                                let d = (self.hz[g] - self.hz[g - nx]) * inv_dy;
                                let psi = &mut pml.psi_e[side][0][plane + slot];
                                *psi = b * *psi + c * d;
                                self.ex[g] += self.ce[0][g] * *psi;
                            }
                            if i >= 1 {
                                let d = (self.hx[g] - self.hx[g - nx]) * inv_dy;
                                let psi = &mut pml.psi_e[side][1][plane + slot];
                                *psi = b * *psi + c * d;
                                self.ez[g] -= self.ce[2][g] * *psi;
                            }
                        }
                    }
                }
            }
        }
        // Axis z: Ex (slot 0, term -dHy/dz) and Ey (slot 1, term +dHx/dz).
        if self.pml[2].thickness > 0 {
            let t = self.pml[2].thickness;
            let width = self.pml[2].slab_width();
            for side in 0..2 {
                let k_range: Vec<usize> = if side == 0 {
                    (1..=t).collect()
                } else {
                    (nz - 1 - t..nz).collect()
                };
                let base = if side == 0 { 0 } else { nz - 1 - t };
                let pml = &mut self.pml[2];
                for &k in &k_range {
                    let slot = k - base;
                    let b = pml.b_e[k];
                    let c = pml.c_e[k];
                    if c == 0.0 {
                        continue;
                    }
                    for j in 0..ny {
                        for i in 0..nx {
                            let g = k * nxny + j * nx + i;
                            let plane = (j * nx + i) * width;
                            if j >= 1 {
                                let d = (self.hy[g] - self.hy[g - nxny]) * inv_dz;
                                let psi = &mut pml.psi_e[side][0][plane + slot];
                                *psi = b * *psi + c * d;
                                self.ex[g] -= self.ce[0][g] * *psi;
                            }
                            if i >= 1 {
                                let d = (self.hx[g] - self.hx[g - nxny]) * inv_dz;
                                let psi = &mut pml.psi_e[side][1][plane + slot];
                                *psi = b * *psi + c * d;
                                self.ey[g] += self.ce[1][g] * *psi;
                            }
                        }
                    }
                }
            }
        }
    }

    /// CPML corrections for the H update.
    fn apply_pml_h(&mut self) {
        let (nx, ny, nz, nxny) = (self.nx, self.ny, self.nz, self.nxny);
        let [inv_dx, inv_dy, inv_dz] = self.inv_d;
        let dh = self.dh;
        // Axis x: Hy (slot 0, term +dEz/dx) and Hz (slot 1, term -dEy/dx).
        if self.pml[0].thickness > 0 {
            let t = self.pml[0].thickness;
            let width = self.pml[0].slab_width();
            for side in 0..2 {
                let i_range: Vec<usize> = if side == 0 {
                    (0..t).collect()
                } else {
                    (nx - 1 - t..nx - 1).collect()
                };
                let base = if side == 0 { 0 } else { nx - 1 - t };
                let pml = &mut self.pml[0];
                for k in 0..nz {
                    for j in 0..ny {
                        let plane = (k * ny + j) * width;
                        for &i in &i_range {
                            let slot = i - base;
                            let g = k * nxny + j * nx + i;
                            let b = pml.b_h[i];
                            let c = pml.c_h[i];
                            if c == 0.0 {
                                continue;
                            }
                            if k < nz - 1 {
                                let d = (self.ez[g + 1] - self.ez[g]) * inv_dx;
                                let psi = &mut pml.psi_h[side][0][plane + slot];
                                *psi = b * *psi + c * d;
                                self.hy[g] += dh * *psi;
                            }
                            if j < ny - 1 {
                                let d = (self.ey[g + 1] - self.ey[g]) * inv_dx;
                                let psi = &mut pml.psi_h[side][1][plane + slot];
                                *psi = b * *psi + c * d;
                                self.hz[g] -= dh * *psi;
                            }
                        }
                    }
                }
            }
        }
        // Axis y: Hx (slot 0, term -dEz/dy) and Hz (slot 1, term +dEx/dy).
        if self.pml[1].thickness > 0 {
            let t = self.pml[1].thickness;
            let width = self.pml[1].slab_width();
            for side in 0..2 {
                let j_range: Vec<usize> = if side == 0 {
                    (0..t).collect()
                } else {
                    (ny - 1 - t..ny - 1).collect()
                };
                let base = if side == 0 { 0 } else { ny - 1 - t };
                let pml = &mut self.pml[1];
                for k in 0..nz {
                    for &j in &j_range {
                        let slot = j - base;
                        let b = pml.b_h[j];
                        let c = pml.c_h[j];
                        if c == 0.0 {
                            continue;
                        }
                        for i in 0..nx {
                            let g = k * nxny + j * nx + i;
                            let plane = (k * nx + i) * width;
                            if k < nz - 1 {
                                let d = (self.ez[g + nx] - self.ez[g]) * inv_dy;
                                let psi = &mut pml.psi_h[side][0][plane + slot];
                                *psi = b * *psi + c * d;
                                self.hx[g] -= dh * *psi;
                            }
                            if i < nx - 1 {
                                let d = (self.ex[g + nx] - self.ex[g]) * inv_dy;
                                let psi = &mut pml.psi_h[side][1][plane + slot];
                                *psi = b * *psi + c * d;
                                self.hz[g] += dh * *psi;
                            }
                        }
                    }
                }
            }
        }
        // Axis z: Hx (slot 0, term +dEy/dz) and Hy (slot 1, term -dEx/dz).
        if self.pml[2].thickness > 0 {
            let t = self.pml[2].thickness;
            let width = self.pml[2].slab_width();
            for side in 0..2 {
                let k_range: Vec<usize> = if side == 0 {
                    (0..t).collect()
                } else {
                    (nz - 1 - t..nz - 1).collect()
                };
                let base = if side == 0 { 0 } else { nz - 1 - t };
                let pml = &mut self.pml[2];
                for &k in &k_range {
                    let slot = k - base;
                    let b = pml.b_h[k];
                    let c = pml.c_h[k];
                    if c == 0.0 {
                        continue;
                    }
                    for j in 0..ny {
                        for i in 0..nx {
                            let g = k * nxny + j * nx + i;
                            let plane = (j * nx + i) * width;
                            if j < ny - 1 {
                                let d = (self.ey[g + nxny] - self.ey[g]) * inv_dz;
                                let psi = &mut pml.psi_h[side][0][plane + slot];
                                *psi = b * *psi + c * d;
                                self.hx[g] += dh * *psi;
                            }
                            if i < nx - 1 {
                                let d = (self.ex[g + nxny] - self.ex[g]) * inv_dz;
                                let psi = &mut pml.psi_h[side][1][plane + slot];
                                *psi = b * *psi + c * d;
                                self.hy[g] -= dh * *psi;
                            }
                        }
                    }
                }
            }
        }
    }

    fn e_field(&self, c: usize) -> &Vec<f64> {
        match c {
            0 => &self.ex,
            1 => &self.ey,
            _ => &self.ez,
        }
    }

    fn e_field_mut(&mut self, c: usize) -> &mut Vec<f64> {
        match c {
            0 => &mut self.ex,
            1 => &mut self.ey,
            _ => &mut self.ez,
        }
    }

    /// Semi-implicit auxiliary-differential-equation Drude update.
    fn apply_drude(&mut self, grid: &PermittivityGrid) {
        let Some(state) = &mut self.drude else { return };
        let eps_inf = grid.drude.as_ref().map(|d| d.eps_inf).unwrap_or(1.0);
        let beta = self.dt * state.kb / (4.0 * EPS0 * eps_inf);
        let half_1ka = (1.0 + state.ka) / 2.0;
        let ce = self.dt / (EPS0 * eps_inf);
        for c in 0..3 {
            let field = match c {
                0 => &mut self.ex,
                1 => &mut self.ey,
                _ => &mut self.ez,
            };
            let idxs = &state.samples[c];
            let jcur = &mut state.j[c];
            let eold = &state.e_old[c];
            for (s, &gi) in idxs.iter().enumerate() {
                let g = gi as usize;
                let e_new = (field[g] - beta * eold[s] - ce * half_1ka * jcur[s]) / (1.0 + beta);
                field[g] = e_new;
                jcur[s] = state.ka * jcur[s] + state.kb * 0.5 * (e_new + eold[s]);
            }
        }
    }

    fn capture_drude_e_old(&mut self) {
        let Some(state) = &mut self.drude else { return };
        for c in 0..3 {
            let field = match c {
                0 => &self.ex,
                1 => &self.ey,
                _ => &self.ez,
            };
            for (s, &gi) in state.samples[c].iter().enumerate() {
                state.e_old[c][s] = field[gi as usize];
            }
        }
    }

    fn apply_pec(&mut self, grid: &PermittivityGrid) {
        for c in 0..3 {
            if grid.pec[c].is_empty() {
                continue;
            }
            let field = self.e_field_mut(c);
            for &i in &grid.pec[c] {
                field[i as usize] = 0.0;
            }
        }
    }

    /// Total field energy, summed plane by plane in fixed order.
    fn energy(&self, grid: &PermittivityGrid) -> f64 {
        let nxny = self.nxny;
        let planes: Vec<f64> = (0..self.nz)
            .into_par_iter()
            .map(|k| {
                let r = k * nxny..(k + 1) * nxny;
                let mut e_acc = 0.0;
                for c in 0..3 {
                    let f = self.e_field(c);
                    let eps = &grid.eps[c];
                    for g in r.clone() {
                        e_acc += EPS0 * eps[g] * f[g] * f[g];
                    }
                }
                let mut h_acc = 0.0;
                for f in [&self.hx, &self.hy, &self.hz] {
                    for g in r.clone() {
                        h_acc += MU0 * f[g] * f[g];
                    }
                }
                0.5 * (e_acc + h_acc)
            })
            .collect();
        let vol = 1.0 / (self.inv_d[0] * self.inv_d[1] * self.inv_d[2]);
        planes.iter().sum::<f64>() * vol
    }

    fn probe_value(&self, p: &Probe) -> f64 {
        let g = (p.cell[2] * self.ny + p.cell[1]) * self.nx + p.cell[0];
        match p.component {
            FieldComponent::Ex => self.ex[g],
            FieldComponent::Ey => self.ey[g],
            FieldComponent::Ez => self.ez[g],
            FieldComponent::Hx => self.hx[g],
            FieldComponent::Hy => self.hy[g],
            FieldComponent::Hz => self.hz[g],
        }
    }

    fn run(mut self, config: &SimConfig) -> Result<SimResult, FdtdError> {
        let grid = &config.grid;
        let (nx, ny) = (self.nx, self.ny);
        let dt = self.dt;

        // Runtime monitor state: accumulators plus per-monitor phasors.
        struct MonitorRt {
            label: String,
            is_box: bool,
            faces: Vec<FaceData>,
            freqs: FreqSet,
            wavelengths: Vec<f64>,
        }
        let mut monitors: Vec<MonitorRt> = config
            .monitors
            .iter()
            .map(|m| {
                let nf = m.wavelengths_nm.len();
                let faces = match &m.spec {
                    MonitorSpec::Plane(p) => {
                        vec![FaceData::new(p.axis, p.index, 1.0, p.lo, p.hi, nf)]
                    }
                    MonitorSpec::Box(b) => box_faces(b, nf),
                };
                MonitorRt {
                    label: m.label.clone(),
                    is_box: matches!(m.spec, MonitorSpec::Box(_)),
                    faces,
                    freqs: FreqSet::new(&m.wavelengths_nm, dt),
                    wavelengths: m.wavelengths_nm.clone(),
                }
            })
            .collect();

        let mut spectrum = FreqSet::new(&config.spectrum_wavelengths_nm, dt);
        // Mid-step E accumulator at the source samples, per component.
        let mut src_e_acc: Vec<Vec<Complex64>> = self
            .src
            .iter()
            .map(|_| vec![Complex64::new(0.0, 0.0); spectrum.omegas.len()])
            .collect();

        let mut probe_series: Vec<Vec<f64>> = config.probes.iter().map(|_| Vec::new()).collect();
        let mut energy_samples = Vec::new();
        let pulse_end = config.source.t_end();
        let mut peak_energy = 0.0f64;
        let mut last_energy = 0.0f64;
        let mut converged = false;
        let mut steps_run = 0usize;

        for step in 0..config.stop.max_steps {
            steps_run = step + 1;
            let t_mid = (step as f64 + 0.5) * dt;

            self.update_h();

            // H-field DFT accumulation at t = (n + 1/2) dt.
            for m in monitors.iter_mut() {
                accumulate_h(&mut m.faces, &m.freqs, &self.hx, &self.hy, &self.hz, nx, ny, self.nxny, dt);
            }

            // Capture E^n where the update needs history.
            self.capture_drude_e_old();
            let src_e_before: Vec<f64> = self.src.iter().map(|&(c, g, _)| self.e_field(c)[g]).collect();

            self.update_e();

            // Soft source: E -= dt/(eps0 epsr) * J, J = g(t) u / cell volume.
            let g_t = config.source.waveform(t_mid);
            let injections: Vec<(usize, usize, f64)> = self
                .src
                .iter()
                .map(|&(c, g, w)| (c, g, -self.ce[c][g] * g_t * w / self.src_cell_volume))
                .collect();
            for (c, g, delta) in injections {
                self.e_field_mut(c)[g] += delta;
            }
            self.apply_drude(grid);
            self.apply_pec(grid);

            // Source spectrum and mid-time E at the source (both at t_mid).
            for (fi, ph) in spectrum.ph_h.iter().enumerate() {
                spectrum.waveform_spectrum[fi] += g_t * ph * dt;
            }
            for m in monitors.iter_mut() {
                for (fi, ph) in m.freqs.ph_h.iter().enumerate() {
                    m.freqs.waveform_spectrum[fi] += g_t * ph * dt;
                }
            }
            for (si, &(c, g, _)) in self.src.iter().enumerate() {
                let e_mid = 0.5 * (src_e_before[si] + self.e_field(c)[g]);
                for (fi, ph) in spectrum.ph_h.iter().enumerate() {
                    src_e_acc[si][fi] += e_mid * ph * dt;
                }
            }

            // E-field DFT accumulation at t = (n + 1) dt.
            for m in monitors.iter_mut() {
                accumulate_e(&mut m.faces, &m.freqs, &self.ex, &self.ey, &self.ez, nx, ny, self.nxny, dt);
            }

            for (pi, p) in config.probes.iter().enumerate() {
                probe_series[pi].push(self.probe_value(p));
            }

            spectrum.advance();
            for m in monitors.iter_mut() {
                m.freqs.advance();
            }

            if (step + 1) % config.stop.check_interval == 0 {
                let e = self.energy(grid);
                energy_samples.push((step + 1, e));
                if !e.is_finite() {
                    return Err(FdtdError::Unstable { step: step + 1 });
                }
                last_energy = e;
                peak_energy = peak_energy.max(e);
                if (step as f64 + 1.0) * dt > pulse_end {
                    if peak_energy == 0.0 || e < config.stop.energy_threshold * peak_energy {
                        converged = true;
                        break;
                    }
                }
            }
        }

        // Normalize everything by the dipole-moment spectrum.
        let spectrum_p = spectrum.moment_spectrum();
        let mut source_power_out = vec![0.0; spectrum.omegas.len()];
        for (fi, &p) in spectrum_p.iter().enumerate() {
            if p.norm_sqr() == 0.0 {
                continue;
            }
            let mut raw = 0.0;
            for (si, &(_, _, w)) in self.src.iter().enumerate() {
                // J spectrum for this component: A(w) * weight; P = -1/2 Re(J* E).
                let a = spectrum.waveform_spectrum[fi] * w;
                raw += -0.5 * (a.conj() * src_e_acc[si][fi]).re;
            }
            source_power_out[fi] = raw / spectrum_p[fi].norm_sqr();
        }

        let monitor_results: Vec<MonitorResult> = monitors
            .into_iter()
            .map(|mut m| {
                let p = m.freqs.moment_spectrum();
                let n_per_face: Vec<usize> = m.faces.iter().map(|f| f.samples()).collect();
                for (face, &nsamp) in m.faces.iter_mut().zip(&n_per_face) {
                    for (fi, &pf) in p.iter().enumerate() {
                        let inv = if pf.norm_sqr() == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(1.0, 0.0) / pf
                        };
                        for s in 0..nsamp {
                            face.e1[fi * nsamp + s] *= inv;
                            face.e2[fi * nsamp + s] *= inv;
                            face.h1[fi * nsamp + s] *= inv;
                            face.h2[fi * nsamp + s] *= inv;
                        }
                    }
                }
                MonitorResult {
                    label: m.label,
                    wavelengths_nm: m.wavelengths,
                    faces: m.faces,
                    is_box: m.is_box,
                }
            })
            .collect();

        let source_cell = grid.cell_of(config.source.position_nm);
        Ok(SimResult {
            cell_nm: grid.cell_nm,
            origin_nm: grid.origin_nm,
            dt_s: dt,
            spectrum_wavelengths_nm: config.spectrum_wavelengths_nm.clone(),
            source_power: source_power_out,
            monitors: monitor_results,
            steps_run,
            residual_energy_fraction: if peak_energy > 0.0 {
                last_energy / peak_energy
            } else {
                0.0
            },
            converged,
            energy_samples,
            probe_series,
            source_cell,
        })
    }
}

/// The six outward-oriented faces of a box monitor.
fn box_faces(b: &BoxSpec, nfreq: usize) -> Vec<FaceData> {
    let mut faces = Vec::with_capacity(6);
    for axis in 0..3 {
        let t1 = (axis + 1) % 3;
        let t2 = (axis + 2) % 3;
        let lo2 = [b.lo[t1], b.lo[t2]];
        let hi2 = [b.hi[t1], b.hi[t2]];
        faces.push(FaceData::new(axis, b.lo[axis], -1.0, lo2, hi2, nfreq));
        faces.push(FaceData::new(axis, b.hi[axis] + 1, 1.0, lo2, hi2, nfreq));
    }
    faces
}

/// Grid coordinates of a face sample (c1 along (axis+1)%3, c2 along
/// (axis+2)%3, plane node along the axis).
#[inline]
fn face_cell(axis: usize, index: usize, c1: usize, c2: usize) -> [usize; 3] {
    match axis {
        0 => [index, c1, c2],
        1 => [c2, index, c1],
        _ => [c1, c2, index],
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate_e(
    faces: &mut [FaceData],
    freqs: &FreqSet,
    ex: &[f64],
    ey: &[f64],
    ez: &[f64],
    nx: usize,
    ny: usize,
    nxny: usize,
    dt: f64,
) {
    let fields = [ex, ey, ez];
    for face in faces.iter_mut() {
        let t1 = (face.axis + 1) % 3;
        let t2 = (face.axis + 2) % 3;
        let (n1, n2) = (face.n1(), face.n2());
        let nsamp = n1 * n2;
        let f1 = fields[t1];
        let f2 = fields[t2];
        // Gather instantaneous tangential E on the face once per step.
        let mut v1 = vec![0.0; nsamp];
        let mut v2 = vec![0.0; nsamp];
        for c2 in 0..n2 {
            for c1 in 0..n1 {
                let [i, j, k] = face_cell(face.axis, face.index, face.lo[0] + c1, face.lo[1] + c2);
                let g = (k * ny + j) * nx + i;
                v1[c2 * n1 + c1] = f1[g];
                v2[c2 * n1 + c1] = f2[g];
            }
        }
        for (fi, ph) in freqs.ph_e.iter().enumerate() {
            let w = ph * dt;
            let base = fi * nsamp;
            for s in 0..nsamp {
                face.e1[base + s] += v1[s] * w;
                face.e2[base + s] += v2[s] * w;
            }
        }
    }
    let _ = nxny;
}

#[allow(clippy::too_many_arguments)]
fn accumulate_h(
    faces: &mut [FaceData],
    freqs: &FreqSet,
    hx: &[f64],
    hy: &[f64],
    hz: &[f64],
    nx: usize,
    ny: usize,
    nxny: usize,
    dt: f64,
) {
    let fields = [hx, hy, hz];
    let stride = [1usize, nx, nxny];
    for face in faces.iter_mut() {
        let t1 = (face.axis + 1) % 3;
        let t2 = (face.axis + 2) % 3;
        let (n1, n2) = (face.n1(), face.n2());
        let nsamp = n1 * n2;
        let f1 = fields[t1];
        let f2 = fields[t2];
        let s_axis = stride[face.axis];
        let mut v1 = vec![0.0; nsamp];
        let mut v2 = vec![0.0; nsamp];
        for c2 in 0..n2 {
            for c1 in 0..n1 {
                let [i, j, k] = face_cell(face.axis, face.index, face.lo[0] + c1, face.lo[1] + c2);
                let g = (k * ny + j) * nx + i;
                // Tangential H averaged onto the plane along the normal.
                v1[c2 * n1 + c1] = 0.5 * (f1[g - s_axis] + f1[g]);
                v2[c2 * n1 + c1] = 0.5 * (f2[g - s_axis] + f2[g]);
            }
        }
        for (fi, ph) in freqs.ph_h.iter().enumerate() {
            let w = ph * dt;
            let base = fi * nsamp;
            for s in 0..nsamp {
                face.h1[base + s] += v1[s] * w;
                face.h2[base + s] += v2[s] * w;
            }
        }
    }
}
