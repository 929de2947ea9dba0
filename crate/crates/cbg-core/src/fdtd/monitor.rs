//! Frequency-domain field monitors: running DFT of tangential E and H on
//! axis-aligned planes, Poynting flux, and binary/CSV export.

use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

use super::FdtdError;

/// Axis-aligned plane monitor. The plane sits at grid node `index` along
/// `axis`; the in-plane extent is a cell range (inclusive) in the two
/// tangential axes, ordered (axis+1)%3 then (axis+2)%3.
#[derive(Debug, Clone)]
pub struct PlaneSpec {
    pub axis: usize,
    pub index: usize,
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

/// Closed box monitor over an inclusive cell range; expands to six faces
/// with outward normals.
#[derive(Debug, Clone)]
pub struct BoxSpec {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

/// What a monitor records.
#[derive(Debug, Clone)]
pub enum MonitorSpec {
    /// Single plane, flux counted positive along +axis.
    Plane(PlaneSpec),
    /// Six-face box, flux counted outward-positive.
    Box(BoxSpec),
}

/// One monitor to attach to a run.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub label: String,
    pub spec: MonitorSpec,
    pub wavelengths_nm: Vec<f64>,
}

/// Accumulated DFT fields on one face.
///
/// `e1`/`h1` are the tangential components along axis (normal+1)%3 and
/// `e2`/`h2` along (normal+2)%3; H is averaged onto the plane. Layout:
/// `[freq * samples + s]` with s = row-major over (t2, t1).
#[derive(Debug, Clone)]
pub struct FaceData {
    pub axis: usize,
    pub index: usize,
    /// Outward normal sign for flux accounting.
    pub sign: f64,
    pub lo: [usize; 2],
    pub hi: [usize; 2],
    pub e1: Vec<Complex64>,
    pub e2: Vec<Complex64>,
    pub h1: Vec<Complex64>,
    pub h2: Vec<Complex64>,
}

impl FaceData {
    pub fn new(axis: usize, index: usize, sign: f64, lo: [usize; 2], hi: [usize; 2], nfreq: usize) -> Self {
        let samples = (hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1);
        let zero = vec![Complex64::new(0.0, 0.0); samples * nfreq];
        FaceData {
            axis,
            index,
            sign,
            lo,
            hi,
            e1: zero.clone(),
            e2: zero.clone(),
            h1: zero.clone(),
            h2: zero,
        }
    }

    pub fn n1(&self) -> usize {
        self.hi[0] - self.lo[0] + 1
    }

    pub fn n2(&self) -> usize {
        self.hi[1] - self.lo[1] + 1
    }

    pub fn samples(&self) -> usize {
        self.n1() * self.n2()
    }

    /// Signed Poynting power through the face at one recorded frequency:
    /// (1/2) Re sum (E1 H2* - E2 H1*) dA, positive along the outward normal.
    pub fn flux(&self, freq_idx: usize, cell_m: [f64; 3]) -> f64 {
        let t1 = (self.axis + 1) % 3;
        let t2 = (self.axis + 2) % 3;
        let da = cell_m[t1] * cell_m[t2];
        let n = self.samples();
        let base = freq_idx * n;
        let mut acc = 0.0;
        for s in 0..n {
            let e1 = self.e1[base + s];
            let e2 = self.e2[base + s];
            let h1 = self.h1[base + s];
            let h2 = self.h2[base + s];
            acc += (e1 * h2.conj() - e2 * h1.conj()).re;
        }
        0.5 * acc * da * self.sign
    }
}

/// Result data for one monitor after a run (fields normalized per unit
/// dipole moment at each frequency).
#[derive(Debug, Clone)]
pub struct MonitorResult {
    pub label: String,
    pub wavelengths_nm: Vec<f64>,
    pub faces: Vec<FaceData>,
    pub is_box: bool,
}

impl MonitorResult {
    /// Sum of outward fluxes over all faces (box) or the plane flux.
    pub fn total_flux(&self, freq_idx: usize, cell_m: [f64; 3]) -> f64 {
        self.faces.iter().map(|f| f.flux(freq_idx, cell_m)).sum()
    }

    /// Flux through the +axis2 (top) face of a box, or the plane itself.
    pub fn top_flux(&self, freq_idx: usize, cell_m: [f64; 3]) -> f64 {
        self.faces
            .iter()
            .filter(|f| f.axis == 2 && f.sign > 0.0)
            .map(|f| f.flux(freq_idx, cell_m))
            .sum()
    }

    pub fn freq_index(&self, wavelength_nm: f64) -> Option<usize> {
        self.wavelengths_nm
            .iter()
            .position(|&w| (w - wavelength_nm).abs() < 1e-9)
    }

    /// Index of the recorded wavelength closest to the request.
    pub fn nearest_freq_index(&self, wavelength_nm: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &w) in self.wavelengths_nm.iter().enumerate() {
            let d = (w - wavelength_nm).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

const DUMP_MAGIC: u32 = 0x4347_4246; // "FBGC" little-endian tag

/// Writes a face's DFT fields in the documented little-endian binary layout:
/// magic u32, version u32, axis u32, plane index u32, lo[2] u32, hi[2] u32,
/// cell sizes (3 x f64, nm), frequency count u32, wavelengths (f64 each, nm),
/// then for each frequency, for each sample (row-major over t2 then t1), the
/// four components e1, e2, h1, h2 as interleaved re/im f64 pairs.
pub fn write_face_dump(face: &FaceData, cell_nm: [f64; 3], wavelengths_nm: &[f64], path: &Path) -> Result<(), FdtdError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&DUMP_MAGIC.to_le_bytes())?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(face.axis as u32).to_le_bytes())?;
    w.write_all(&(face.index as u32).to_le_bytes())?;
    for v in [face.lo[0], face.lo[1], face.hi[0], face.hi[1]] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for c in cell_nm {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(&(wavelengths_nm.len() as u32).to_le_bytes())?;
    for &wl in wavelengths_nm {
        w.write_all(&wl.to_le_bytes())?;
    }
    let n = face.samples();
    for fi in 0..wavelengths_nm.len() {
        for s in 0..n {
            for arr in [&face.e1, &face.e2, &face.h1, &face.h2] {
                let v = arr[fi * n + s];
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a face dump back; returns the face, cell sizes, and wavelengths.
pub fn read_face_dump(path: &Path) -> Result<(FaceData, [f64; 3], Vec<f64>), FdtdError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    let mut read_u32 = |r: &mut dyn Read| -> Result<u32, FdtdError> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let magic = read_u32(&mut r)?;
    if magic != DUMP_MAGIC {
        return Err(FdtdError::BadDump("magic mismatch".into()));
    }
    let version = read_u32(&mut r)?;
    if version != 1 {
        return Err(FdtdError::BadDump(format!("unsupported version {version}")));
    }
    let axis = read_u32(&mut r)? as usize;
    let index = read_u32(&mut r)? as usize;
    let lo = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
    let hi = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
    let mut read_f64 = |r: &mut dyn Read| -> Result<f64, FdtdError> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let cell_nm = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
    let mut u32buf2 = [0u8; 4];
    r.read_exact(&mut u32buf2)?;
    let nfreq = u32::from_le_bytes(u32buf2) as usize;
    let mut wavelengths = Vec::with_capacity(nfreq);
    for _ in 0..nfreq {
        wavelengths.push(read_f64(&mut r)?);
    }
    let mut face = FaceData::new(axis, index, 1.0, lo, hi, nfreq);
    let n = face.samples();
    for fi in 0..nfreq {
        for s in 0..n {
            let mut vals = [0.0f64; 8];
            for v in &mut vals {
                *v = read_f64(&mut r)?;
            }
            face.e1[fi * n + s] = Complex64::new(vals[0], vals[1]);
            face.e2[fi * n + s] = Complex64::new(vals[2], vals[3]);
            face.h1[fi * n + s] = Complex64::new(vals[4], vals[5]);
            face.h2[fi * n + s] = Complex64::new(vals[6], vals[7]);
        }
    }
    Ok((face, cell_nm, wavelengths))
}

/// 1D CSV extract along the face's first tangential axis through its middle
/// row: column magnitudes of the four recorded components.
pub fn write_face_line_csv(face: &FaceData, freq_idx: usize, path: &Path) -> Result<(), FdtdError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t1_cell,abs_e1,abs_e2,abs_h1,abs_h2")?;
    let n = face.samples();
    let mid = face.n2() / 2;
    for i in 0..face.n1() {
        let s = mid * face.n1() + i;
        writeln!(
            w,
            "{},{:.9e},{:.9e},{:.9e},{:.9e}",
            face.lo[0] + i,
            face.e1[freq_idx * n + s].norm(),
            face.e2[freq_idx * n + s].norm(),
            face.h1[freq_idx * n + s].norm(),
            face.h2[freq_idx * n + s].norm()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip_is_exact() {
        let mut face = FaceData::new(2, 7, 1.0, [2, 3], [5, 6], 2);
        let n = face.samples();
        for fi in 0..2 {
            for s in 0..n {
                let v = (fi * n + s) as f64;
                face.e1[fi * n + s] = Complex64::new(v, -v);
                face.e2[fi * n + s] = Complex64::new(0.5 * v, 2.0 * v);
                face.h1[fi * n + s] = Complex64::new(-v, 0.25 * v);
                face.h2[fi * n + s] = Complex64::new(v * v, 1.0);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("face.cbgf");
        write_face_dump(&face, [10.0, 11.0, 12.0], &[930.0, 935.0], &path).unwrap();
        let (back, cell, wl) = read_face_dump(&path).unwrap();
        assert_eq!(cell, [10.0, 11.0, 12.0]);
        assert_eq!(wl, vec![930.0, 935.0]);
        assert_eq!(back.axis, 2);
        assert_eq!(back.index, 7);
        assert_eq!(back.e1, face.e1);
        assert_eq!(back.h2, face.h2);
    }

    #[test]
    fn standing_wave_carries_no_net_flux() {
        // E and H in phase quadrature (H purely imaginary relative to E):
        // Re(E x H*) = 0.
        let mut face = FaceData::new(2, 1, 1.0, [0, 0], [3, 3], 1);
        for s in 0..face.samples() {
            face.e1[s] = Complex64::new(1.0, 0.0);
            face.h2[s] = Complex64::new(0.0, 0.8);
        }
        assert_eq!(face.flux(0, [1e-9; 3]), 0.0);
    }

    #[test]
    fn plane_wave_flux_matches_poynting_value() {
        // E1 = E0, H2 = E0/eta0: flux = E0^2 / (2 eta0) * area.
        let e0 = 3.0;
        let mut face = FaceData::new(2, 1, 1.0, [0, 0], [9, 4], 1);
        for s in 0..face.samples() {
            face.e1[s] = Complex64::new(e0, 0.0);
            face.h2[s] = Complex64::new(e0 / crate::constants::ETA0, 0.0);
        }
        let cell = [2e-9, 3e-9, 4e-9];
        let area = 50.0 * cell[0] * cell[1];
        let expected = e0 * e0 / (2.0 * crate::constants::ETA0) * area;
        approx::assert_relative_eq!(face.flux(0, cell), expected, max_relative = 1e-12);
    }
}
