//! Emission figures of merit derived from raw monitor data: Purcell
//! spectrum, upward efficiency, far field, Gaussian overlap, and
//! NA-resolved collection efficiency.

mod farfield;

pub use farfield::{
    gaussian_mode, gaussian_overlap, gaussian_overlap_with_waist, na_fraction, near_to_far,
    FarField, N_PHI, N_THETA,
};

use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::fdtd::{MonitorResult, SimResult};
use crate::oracles;

/// Tolerance for efficiency values spilling outside [0, 1] before the
/// metric is flagged (absorbs DFT truncation noise).
pub const EFFICIENCY_CLAMP_TOL: f64 = 1e-3;

use std::sync::atomic::{AtomicUsize, Ordering};
static FARFIELD_STRIDE_CAP: AtomicUsize = AtomicUsize::new(160);

/// Aperture samples per axis above which the transform decimates.
pub(crate) fn farfield_stride_cap() -> usize {
    FARFIELD_STRIDE_CAP.load(Ordering::Relaxed)
}

/// Overrides the decimation cap (diagnostics / accuracy studies).
pub fn set_farfield_stride_cap(cap: usize) {
    FARFIELD_STRIDE_CAP.store(cap.max(1), Ordering::Relaxed);
}

#[derive(Debug, Error)]
pub enum EmissionError {
    #[error("degenerate run: total monitor flux is not positive")]
    DegenerateRun,
    #[error("NA {0} outside (0, 1]")]
    InvalidNa(f64),
    #[error("far field is identically zero")]
    ZeroFarField,
    #[error("monitor is not a +z plane suitable for the far-field transform")]
    NotATopPlane,
    #[error("spectrum has no peak")]
    NoPeak,
    #[error("spectrum needs at least 3 samples")]
    TooFewSamples,
    #[error("monitor '{0}' missing from the simulation result")]
    MissingMonitor(String),
    #[error("top monitor plane lies inside the structure")]
    MonitorInsideStructure,
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sampled spectrum (Purcell factor or an efficiency fraction).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub wavelengths_nm: Vec<f64>,
    pub values: Vec<f64>,
    /// False when derived from a run that hit its step budget before the
    /// energy threshold.
    pub trusted: bool,
}

impl Spectrum {
    pub fn new(wavelengths_nm: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert!(wavelengths_nm.windows(2).all(|w| w[0] < w[1]));
        Spectrum {
            wavelengths_nm,
            values,
            trusted: true,
        }
    }

    pub fn value_at(&self, wavelength_nm: f64) -> Option<f64> {
        self.wavelengths_nm
            .iter()
            .position(|&w| (w - wavelength_nm).abs() < 1e-9)
            .map(|i| self.values[i])
    }
}

/// Purcell spectrum: delivered source power over the bulk-medium dipole
/// power of the host semiconductor, at identical dipole amplitude.
pub fn purcell_spectrum(result: &SimResult, reference_index: f64) -> Spectrum {
    let values = result
        .spectrum_wavelengths_nm
        .iter()
        .zip(&result.source_power)
        .map(|(&wl, &p)| p / oracles::bulk_dipole_power(reference_index, wl))
        .collect();
    let mut s = Spectrum::new(result.spectrum_wavelengths_nm.clone(), values);
    s.trusted = result.converged;
    s
}

/// Upward efficiency E_up: top-face flux over total outward box flux,
/// clamped to [0, 1]. The unclamped value is returned alongside so callers
/// can flag out-of-range results beyond the clamp tolerance.
pub fn upward_fraction(
    monitor: &MonitorResult,
    freq_idx: usize,
    cell_m: [f64; 3],
) -> Result<(f64, f64), EmissionError> {
    let total = monitor.total_flux(freq_idx, cell_m);
    if total <= 0.0 {
        return Err(EmissionError::DegenerateRun);
    }
    let raw = monitor.top_flux(freq_idx, cell_m) / total;
    Ok((raw.clamp(0.0, 1.0), raw))
}

/// Cone-integrated collection efficiency C_NA = E_up * na_fraction.
pub fn collection_efficiency(
    e_up: f64,
    farfield: &FarField,
    na: f64,
) -> Result<f64, EmissionError> {
    Ok(e_up * na_fraction(farfield, na)?)
}

/// Peak wavelength of a spectrum, refined by a parabola through the maximum
/// sample and its neighbors.
pub fn resonance_peak(spectrum: &Spectrum) -> Result<f64, EmissionError> {
    let n = spectrum.values.len();
    if n < 3 {
        return Err(EmissionError::TooFewSamples);
    }
    let mut m = 0;
    for (i, &v) in spectrum.values.iter().enumerate() {
        if v > spectrum.values[m] {
            m = i;
        }
    }
    let spread = spectrum.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - spectrum.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 0.0 {
        return Err(EmissionError::NoPeak);
    }
    if m == 0 || m == n - 1 {
        return Ok(spectrum.wavelengths_nm[m]);
    }
    let (x1, x2, x3) = (
        spectrum.wavelengths_nm[m - 1],
        spectrum.wavelengths_nm[m],
        spectrum.wavelengths_nm[m + 1],
    );
    let (y1, y2, y3) = (
        spectrum.values[m - 1],
        spectrum.values[m],
        spectrum.values[m + 1],
    );
    let num = (x2 - x1).powi(2) * (y2 - y3) - (x2 - x3).powi(2) * (y2 - y1);
    let den = (x2 - x1) * (y2 - y3) - (x2 - x3) * (y2 - y1);
    if den == 0.0 {
        return Ok(x2);
    }
    Ok(x2 - 0.5 * num / den)
}

/// All emission metrics of one run, on the efficiency frequency grid.
#[derive(Debug, Clone)]
pub struct EmissionMetrics {
    /// Efficiency grid (the box/top monitors' wavelength list).
    pub wavelengths_nm: Vec<f64>,
    /// Purcell spectrum on its own (usually denser) grid.
    pub purcell: Spectrum,
    pub e_up: Spectrum,
    /// Gaussian far-field overlap per efficiency wavelength.
    pub o_ff: Vec<f64>,
    pub gaussian_waist_nm: Vec<f64>,
    pub na_values: Vec<f64>,
    /// Cone-integrated collection efficiency; `c_na[a][f]` for NA index a.
    pub c_na: Vec<Vec<f64>>,
    /// Cost-function collected-power term E_up * O_ff * NA_0.7.
    pub c_na07_cost: Vec<f64>,
    pub resonance_nm: Option<f64>,
    pub target_nm: f64,
    pub trusted: bool,
    pub flags: Vec<String>,
}

impl EmissionMetrics {
    /// Purcell factor at the resonance peak.
    pub fn purcell_at_resonance(&self) -> Option<f64> {
        let res = self.resonance_nm?;
        let mut best = (f64::INFINITY, 0);
        for (i, &w) in self.purcell.wavelengths_nm.iter().enumerate() {
            let d = (w - res).abs();
            if d < best.0 {
                best = (d, i);
            }
        }
        Some(self.purcell.values[best.1])
    }

    /// Value of a per-efficiency-wavelength series at the recorded
    /// wavelength nearest the resonance.
    pub fn at_resonance<'a>(&self, series: &'a [f64]) -> Option<f64> {
        let res = self.resonance_nm?;
        let mut best = (f64::INFINITY, 0);
        for (i, &w) in self.wavelengths_nm.iter().enumerate() {
            let d = (w - res).abs();
            if d < best.0 {
                best = (d, i);
            }
        }
        series.get(best.1).copied()
    }
}

/// Inputs for assembling [`EmissionMetrics`] from a finished run.
pub struct AnalysisRequest<'a> {
    pub result: &'a SimResult,
    pub box_monitor: &'a str,
    pub top_monitor: &'a str,
    /// Bulk index of the dipole's host layer (Purcell normalization).
    pub reference_index: f64,
    pub na_values: Vec<f64>,
    pub target_wavelength_nm: f64,
    /// Height of the structure top (nm, grid coordinates); used to verify
    /// the far-field plane sits in air above everything.
    pub structure_top_nm: Option<f64>,
}

/// Computes every emission metric for a run.
pub fn analyze(req: &AnalysisRequest) -> Result<EmissionMetrics, EmissionError> {
    let result = req.result;
    let cell_m = result.cell_m();
    let boxm = result
        .monitor(req.box_monitor)
        .ok_or_else(|| EmissionError::MissingMonitor(req.box_monitor.into()))?;
    let top = result
        .monitor(req.top_monitor)
        .ok_or_else(|| EmissionError::MissingMonitor(req.top_monitor.into()))?;
    let top_face = &top.faces[0];
    if top_face.axis != 2 {
        return Err(EmissionError::NotATopPlane);
    }
    if let Some(top_nm) = req.structure_top_nm {
        let plane_z = result.origin_nm[2] + top_face.index as f64 * result.cell_nm[2];
        if plane_z <= top_nm {
            return Err(EmissionError::MonitorInsideStructure);
        }
    }

    let mut flags = Vec::new();
    if !result.converged {
        flags.push(format!(
            "run hit the step budget ({} steps, residual energy {:.2e})",
            result.steps_run, result.residual_energy_fraction
        ));
    }

    let purcell = purcell_spectrum(result, req.reference_index);
    let wavelengths = boxm.wavelengths_nm.clone();
    let nf = wavelengths.len();

    let mut e_up_values = Vec::with_capacity(nf);
    let mut o_ff = Vec::with_capacity(nf);
    let mut waists = Vec::with_capacity(nf);
    let mut c_na16 = vec![Vec::with_capacity(nf); req.na_values.len()];
    let mut c_cost = Vec::with_capacity(nf);

    for fi in 0..nf {
        let (e_up, raw) = upward_fraction(boxm, fi, cell_m)?;
        if (raw - e_up).abs() > EFFICIENCY_CLAMP_TOL {
            flags.push(format!(
                "E_up at {} nm out of range by {:.2e}",
                wavelengths[fi],
                (raw - e_up).abs()
            ));
        }
        e_up_values.push(e_up);

        let top_fi = top
            .freq_index(wavelengths[fi])
            .unwrap_or_else(|| top.nearest_freq_index(wavelengths[fi]));
        let ff = near_to_far(
            top_face,
            top_fi,
            top.wavelengths_nm[top_fi],
            result.cell_nm,
            result.origin_nm,
        )?;
        let (overlap, waist) = match gaussian_overlap(&ff) {
            Ok(v) => v,
            Err(EmissionError::ZeroFarField) => (0.0, 0.0),
            Err(e) => return Err(e),
        };
        o_ff.push(overlap);
        waists.push(waist);
        for (ai, &na) in req.na_values.iter().enumerate() {
            let c = match na_fraction(&ff, na) {
                Ok(frac) => e_up * frac,
                Err(EmissionError::ZeroFarField) => 0.0,
                Err(e) => return Err(e),
            };
            c_na16[ai].push(c);
        }
        let na07 = match na_fraction(&ff, 0.7) {
            Ok(frac) => frac,
            Err(EmissionError::ZeroFarField) => 0.0,
            Err(e) => return Err(e),
        };
        c_cost.push(e_up * overlap * na07);
    }

    let resonance_nm = resonance_peak(&purcell).ok();
    let mut e_up_spec = Spectrum::new(wavelengths.clone(), e_up_values);
    e_up_spec.trusted = result.converged;

    Ok(EmissionMetrics {
        wavelengths_nm: wavelengths,
        purcell,
        e_up: e_up_spec,
        o_ff,
        gaussian_waist_nm: waists,
        na_values: req.na_values.clone(),
        c_na: c_na16,
        c_na07_cost: c_cost,
        resonance_nm,
        target_nm: req.target_wavelength_nm,
        trusted: result.converged,
        flags,
    })
}

/// Writes the spectrum CSV: wavelength_nm, purcell, e_up, o_ff, then one
/// c_na_<NA> column per requested aperture.
pub fn write_spectrum_csv(metrics: &EmissionMetrics, path: &Path) -> Result<(), EmissionError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let na_cols: Vec<String> = metrics
        .na_values
        .iter()
        .map(|na| {
            let mut s = format!("c_na_{na}");
            if !s.contains('.') {
                s.push_str(".0");
            }
            s
        })
        .collect();
    writeln!(out, "wavelength_nm,purcell,e_up,o_ff,{}", na_cols.join(","))?;
    for (fi, &wl) in metrics.wavelengths_nm.iter().enumerate() {
        let purcell = metrics
            .purcell
            .value_at(wl)
            .unwrap_or_else(|| nearest_value(&metrics.purcell, wl));
        write!(
            out,
            "{wl},{:.9e},{:.9e},{:.9e}",
            purcell, metrics.e_up.values[fi], metrics.o_ff[fi]
        )?;
        for series in &metrics.c_na {
            write!(out, ",{:.9e}", series[fi])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn nearest_value(s: &Spectrum, wl: f64) -> f64 {
    let mut best = (f64::INFINITY, 0);
    for (i, &w) in s.wavelengths_nm.iter().enumerate() {
        let d = (w - wl).abs();
        if d < best.0 {
            best = (d, i);
        }
    }
    s.values[best.1]
}

/// Writes the far-field CSV (theta_rad, phi_rad, complex E_theta / E_phi).
pub fn write_farfield_csv(farfield: &FarField, path: &Path) -> Result<(), EmissionError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "theta_rad,phi_rad,re_E_theta,im_E_theta,re_E_phi,im_E_phi")?;
    let nphi = farfield.phi.len();
    for (t, &theta) in farfield.theta.iter().enumerate() {
        for (p, &phi) in farfield.phi.iter().enumerate() {
            let et = farfield.e_theta[t * nphi + p];
            let ep = farfield.e_phi[t * nphi + p];
            writeln!(
                out,
                "{theta:.6},{phi:.6},{:.9e},{:.9e},{:.9e},{:.9e}",
                et.re, et.im, ep.re, ep.im
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn resonance_peak_exact_parabola() {
        let wl: Vec<f64> = (0..21).map(|i| 920.0 + i as f64).collect();
        let values: Vec<f64> = wl.iter().map(|&w| 1.0 - (w - 930.0).powi(2)).collect();
        let s = Spectrum::new(wl, values);
        assert_relative_eq!(resonance_peak(&s).unwrap(), 930.0, epsilon = 1e-9);
    }

    #[test]
    fn resonance_peak_symmetric_neighbors_returns_grid_point() {
        let s = Spectrum::new(vec![928.0, 929.0, 930.0, 931.0, 932.0], vec![0.1, 0.5, 2.0, 0.5, 0.1]);
        assert_relative_eq!(resonance_peak(&s).unwrap(), 930.0, epsilon = 1e-12);
    }

    #[test]
    fn resonance_peak_lorentzian_against_dense_scan() {
        let center = 930.4;
        let gamma = 3.0;
        let lorentz = |w: f64| 1.0 / (1.0 + ((w - center) / gamma).powi(2));
        let wl: Vec<f64> = (0..21).map(|i| 920.0 + i as f64).collect();
        let s = Spectrum::new(wl.clone(), wl.iter().map(|&w| lorentz(w)).collect());
        let peak = resonance_peak(&s).unwrap();
        // Brute-force oracle on a dense grid.
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..200_001 {
            let w = 920.0 + 20.0 * i as f64 / 200_000.0;
            let v = lorentz(w);
            if v > best.0 {
                best = (v, w);
            }
        }
        assert!((peak - best.1).abs() < 0.1, "peak {peak} vs oracle {}", best.1);
    }

    #[test]
    fn resonance_peak_error_cases() {
        let flat = Spectrum::new(vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]);
        assert!(matches!(resonance_peak(&flat), Err(EmissionError::NoPeak)));
        let short = Spectrum::new(vec![1.0, 2.0], vec![0.0, 1.0]);
        assert!(matches!(resonance_peak(&short), Err(EmissionError::TooFewSamples)));
    }

    #[test]
    fn spectrum_csv_uses_documented_columns() {
        let metrics = EmissionMetrics {
            wavelengths_nm: vec![928.0, 930.0],
            purcell: Spectrum::new(vec![928.0, 930.0], vec![10.0, 25.0]),
            e_up: Spectrum::new(vec![928.0, 930.0], vec![0.9, 0.95]),
            o_ff: vec![0.8, 0.85],
            gaussian_waist_nm: vec![1500.0, 1400.0],
            na_values: vec![0.4, 0.7, 1.0],
            c_na: vec![vec![0.4, 0.45], vec![0.7, 0.75], vec![0.9, 0.92]],
            c_na07_cost: vec![0.5, 0.55],
            resonance_nm: Some(930.0),
            target_nm: 930.0,
            trusted: true,
            flags: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.csv");
        write_spectrum_csv(&metrics, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "wavelength_nm,purcell,e_up,o_ff,c_na_0.4,c_na_0.7,c_na_1.0"
        );
        assert_eq!(lines.count(), 2);
    }
}
