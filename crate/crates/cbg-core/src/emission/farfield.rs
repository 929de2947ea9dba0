//! Near-to-far-field transform and angular figures of merit.
//!
//! The transform applies the equivalence principle to the tangential fields
//! recorded on a horizontal plane in air above the device: surface currents
//! J = n x H and M = -n x E are propagated to the upper hemisphere at 1 m.
//! Global phase is dropped (it cancels in every derived quantity).

use num_complex::Complex64;
use std::f64::consts::PI;

use super::EmissionError;
use crate::constants::{ETA0, NM};
use crate::fdtd::FaceData;

/// Angular resolution of the default far-field grid.
pub const N_THETA: usize = 91;
pub const N_PHI: usize = 180;

/// Upper-hemisphere far field on a (theta, phi) grid at a reference sphere.
#[derive(Debug, Clone)]
pub struct FarField {
    pub wavelength_nm: f64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// E_theta[t * n_phi + p] (V/m at the reference radius, per unit dipole
    /// moment when fed from normalized monitor data).
    pub e_theta: Vec<Complex64>,
    pub e_phi: Vec<Complex64>,
    pub radius_m: f64,
}

impl FarField {
    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn n_phi(&self) -> usize {
        self.phi.len()
    }

    /// Trapezoid quadrature weights along theta.
    fn theta_weights(&self) -> Vec<f64> {
        let n = self.theta.len();
        let mut w = vec![0.0; n];
        for t in 0..n - 1 {
            let h = self.theta[t + 1] - self.theta[t];
            w[t] += 0.5 * h;
            w[t + 1] += 0.5 * h;
        }
        w
    }

    /// Radiated power per unit solid angle integrated over phi, at each
    /// theta sample (includes the sin(theta) Jacobian).
    fn ring_power(&self) -> Vec<f64> {
        let nphi = self.phi.len();
        let dphi = 2.0 * PI / nphi as f64;
        let r2 = self.radius_m * self.radius_m;
        self.theta
            .iter()
            .enumerate()
            .map(|(t, &theta)| {
                let mut acc = 0.0;
                for p in 0..nphi {
                    let i = t * nphi + p;
                    acc += self.e_theta[i].norm_sqr() + self.e_phi[i].norm_sqr();
                }
                acc * dphi * theta.sin() * r2 / (2.0 * ETA0)
            })
            .collect()
    }

    /// Total power radiated into the upper hemisphere.
    pub fn total_power(&self) -> f64 {
        let ring = self.ring_power();
        self.theta_weights()
            .iter()
            .zip(&ring)
            .map(|(w, r)| w * r)
            .sum()
    }

    /// Power inside the cone theta <= theta_max, with linear interpolation
    /// of the partial segment so the cone edge need not hit a grid line.
    pub fn power_in_cone(&self, theta_max: f64) -> f64 {
        let ring = self.ring_power();
        let mut acc = 0.0;
        for t in 0..self.theta.len() - 1 {
            let (a, b) = (self.theta[t], self.theta[t + 1]);
            if theta_max <= a {
                break;
            }
            if theta_max >= b {
                acc += 0.5 * (ring[t] + ring[t + 1]) * (b - a);
            } else {
                let frac = (theta_max - a) / (b - a);
                let r_edge = ring[t] + frac * (ring[t + 1] - ring[t]);
                acc += 0.5 * (ring[t] + r_edge) * (theta_max - a);
                break;
            }
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.e_theta.iter().all(|c| c.norm_sqr() == 0.0)
            && self.e_phi.iter().all(|c| c.norm_sqr() == 0.0)
    }
}

/// Fraction of the hemisphere far-field power inside the numerical-aperture
/// cone theta <= asin(NA). Invariant under global scaling and phase.
pub fn na_fraction(farfield: &FarField, na: f64) -> Result<f64, EmissionError> {
    if !(na > 0.0 && na <= 1.0) {
        return Err(EmissionError::InvalidNa(na));
    }
    let total = farfield.total_power();
    if total <= 0.0 {
        return Err(EmissionError::ZeroFarField);
    }
    if na == 1.0 {
        return Ok(1.0);
    }
    Ok(farfield.power_in_cone(na.asin()) / total)
}

/// Linearly x-polarized fundamental Gaussian mode projected on the
/// reference sphere: amplitude exp(-(k w sin(theta) / 2)^2).
pub fn gaussian_mode(farfield: &FarField, waist_nm: f64) -> FarField {
    let k = crate::constants::wavenumber_from_wavelength_nm(farfield.wavelength_nm);
    let nphi = farfield.phi.len();
    let mut e_theta = vec![Complex64::new(0.0, 0.0); farfield.theta.len() * nphi];
    let mut e_phi = e_theta.clone();
    for (t, &theta) in farfield.theta.iter().enumerate() {
        let a = (-(k * waist_nm * NM * theta.sin() / 2.0).powi(2)).exp();
        for (p, &phi) in farfield.phi.iter().enumerate() {
            e_theta[t * nphi + p] = Complex64::new(a * phi.cos(), 0.0);
            e_phi[t * nphi + p] = Complex64::new(-a * phi.sin(), 0.0);
        }
    }
    FarField {
        wavelength_nm: farfield.wavelength_nm,
        theta: farfield.theta.clone(),
        phi: farfield.phi.clone(),
        e_theta,
        e_phi,
        radius_m: farfield.radius_m,
    }
}

/// Hemisphere inner product with the solid-angle measure.
fn inner(a: &FarField, b: &FarField) -> Complex64 {
    let nphi = a.phi.len();
    let dphi = 2.0 * PI / nphi as f64;
    let w = a.theta_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for (t, &theta) in a.theta.iter().enumerate() {
        let mut ring = Complex64::new(0.0, 0.0);
        for p in 0..nphi {
            let i = t * nphi + p;
            ring += a.e_theta[i] * b.e_theta[i].conj() + a.e_phi[i] * b.e_phi[i].conj();
        }
        acc += ring * w[t] * theta.sin() * dphi;
    }
    acc
}

/// Mode overlap |<F, G>|^2 / (<F,F><G,G>) with a Gaussian of fixed waist.
pub fn gaussian_overlap_with_waist(farfield: &FarField, waist_nm: f64) -> Result<f64, EmissionError> {
    if farfield.is_zero() {
        return Err(EmissionError::ZeroFarField);
    }
    let g = gaussian_mode(farfield, waist_nm);
    let ff = inner(farfield, farfield).re;
    let gg = inner(&g, &g).re;
    if ff <= 0.0 || gg <= 0.0 {
        return Err(EmissionError::ZeroFarField);
    }
    Ok(inner(farfield, &g).norm_sqr() / (ff * gg))
}

/// Gaussian mode overlap maximized over the waist by golden-section search
/// on [lambda/4, 50 lambda]. Returns (overlap, argmax waist in nm).
pub fn gaussian_overlap(farfield: &FarField) -> Result<(f64, f64), EmissionError> {
    if farfield.is_zero() {
        return Err(EmissionError::ZeroFarField);
    }
    let lambda = farfield.wavelength_nm;
    let (mut lo, mut hi) = (lambda / 4.0, 50.0 * lambda);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = gaussian_overlap_with_waist(farfield, x1)?;
    let mut f2 = gaussian_overlap_with_waist(farfield, x2)?;
    for _ in 0..70 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = gaussian_overlap_with_waist(farfield, x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = gaussian_overlap_with_waist(farfield, x1)?;
        }
    }
    let (w, f) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    Ok((f, w))
}

/// Equivalence-principle transform of a +z plane monitor to the upper
/// hemisphere at 1 m, on the default 91 x 180 angular grid.
///
/// The plane must lie above all structure in homogeneous air; coordinates
/// are taken relative to the device axis (x = y = 0), so the grid origin is
/// required to phase the aperture samples correctly.
pub fn near_to_far(
    face: &FaceData,
    freq_idx: usize,
    wavelength_nm: f64,
    cell_nm: [f64; 3],
    origin_nm: [f64; 3],
) -> Result<FarField, EmissionError> {
    if face.axis != 2 {
        return Err(EmissionError::NotATopPlane);
    }
    let (n1, n2) = (face.n1(), face.n2());
    if n1 < 3 || n2 < 3 {
        return Err(EmissionError::NotATopPlane);
    }
    let nsamp = n1 * n2;
    let base = freq_idx * nsamp;
    let k = crate::constants::wavenumber_from_wavelength_nm(wavelength_nm);
    let (dx, dy) = (cell_nm[0] * NM, cell_nm[1] * NM);

    // Interpolate the staggered tangential fields to in-plane cell centers
    // (i + 1/2, j + 1/2); decimate large planes for the angular sums.
    let (cx, cy) = (n1 - 1, n2 - 1);
    let stride = 1 + cx.max(cy) / crate::emission::farfield_stride_cap();
    let sx = (cx + stride - 1) / stride;
    let sy = (cy + stride - 1) / stride;
    let mut ex = vec![Complex64::new(0.0, 0.0); sx * sy];
    let mut ey = ex.clone();
    let mut hx = ex.clone();
    let mut hy = ex.clone();
    let mut xs = vec![0.0; sx];
    let mut ys = vec![0.0; sy];
    for (jj, j) in (0..cy).step_by(stride).enumerate() {
        ys[jj] = (origin_nm[1] + (face.lo[1] + j) as f64 * cell_nm[1] + 0.5 * cell_nm[1]) * NM;
        for (ii, i) in (0..cx).step_by(stride).enumerate() {
            if jj == 0 {
                xs[ii] =
                    (origin_nm[0] + (face.lo[0] + i) as f64 * cell_nm[0] + 0.5 * cell_nm[0]) * NM;
            }
            let s00 = base + j * n1 + i;
            let s01 = base + (j + 1) * n1 + i;
            let s10 = base + j * n1 + i + 1;
            let c = jj * sx + ii;
            // e1 = Ex at (i+1/2, j): average j, j+1. e2 = Ey at (i, j+1/2):
            // average i, i+1. H components sit opposite.
            ex[c] = 0.5 * (face.e1[s00] + face.e1[s01]);
            ey[c] = 0.5 * (face.e2[s00] + face.e2[s10]);
            hx[c] = 0.5 * (face.h1[s00] + face.h1[s10]);
            hy[c] = 0.5 * (face.h2[s00] + face.h2[s01]);
        }
    }
    let da = dx * dy * (stride * stride) as f64;
    let z0 = (origin_nm[2] + face.index as f64 * cell_nm[2]) * NM;

    let theta: Vec<f64> = (0..N_THETA)
        .map(|t| t as f64 * (PI / 2.0) / (N_THETA - 1) as f64)
        .collect();
    let phi: Vec<f64> = (0..N_PHI).map(|p| p as f64 * 2.0 * PI / N_PHI as f64).collect();

    let r = 1.0f64;
    // |ik/(4 pi r)|; the global propagation phase e^{ikr} is dropped.
    let prefactor = k / (4.0 * PI * r);

    let mut e_theta = vec![Complex64::new(0.0, 0.0); N_THETA * N_PHI];
    let mut e_phi = e_theta.clone();

    use rayon::prelude::*;
    let rows: Vec<(usize, Vec<Complex64>, Vec<Complex64>)> = (0..N_THETA)
        .into_par_iter()
        .map(|t| {
            let st = theta[t].sin();
            let ct = theta[t].cos();
            let mut row_t = vec![Complex64::new(0.0, 0.0); N_PHI];
            let mut row_p = vec![Complex64::new(0.0, 0.0); N_PHI];
            let z_phase = Complex64::from_polar(1.0, -k * ct * z0);
            for (p, &ph) in phi.iter().enumerate() {
                let (sp, cp) = (ph.sin(), ph.cos());
                let kx = k * st * cp;
                let ky = k * st * sp;
                // Separable aperture phases.
                let px: Vec<Complex64> =
                    xs.iter().map(|&x| Complex64::from_polar(1.0, -kx * x)).collect();
                let py: Vec<Complex64> =
                    ys.iter().map(|&y| Complex64::from_polar(1.0, -ky * y)).collect();
                let mut nx = Complex64::new(0.0, 0.0);
                let mut ny = Complex64::new(0.0, 0.0);
                let mut lx = Complex64::new(0.0, 0.0);
                let mut ly = Complex64::new(0.0, 0.0);
                for jj in 0..sy {
                    let mut rnx = Complex64::new(0.0, 0.0);
                    let mut rny = Complex64::new(0.0, 0.0);
                    let mut rlx = Complex64::new(0.0, 0.0);
                    let mut rly = Complex64::new(0.0, 0.0);
                    let row = jj * sx;
                    for ii in 0..sx {
                        let w = px[ii];
                        // J = z x H = (-Hy, Hx); M = -z x E = (Ey, -Ex).
                        rnx += -hy[row + ii] * w;
                        rny += hx[row + ii] * w;
                        rlx += ey[row + ii] * w;
                        rly += -ex[row + ii] * w;
                    }
                    rnx *= py[jj];
                    rny *= py[jj];
                    rlx *= py[jj];
                    rly *= py[jj];
                    nx += rnx;
                    ny += rny;
                    lx += rlx;
                    ly += rly;
                }
                let scale = da * z_phase;
                nx *= scale;
                ny *= scale;
                lx *= scale;
                ly *= scale;
                let n_t = (nx * cp + ny * sp) * ct;
                let n_p = -nx * sp + ny * cp;
                let l_t = (lx * cp + ly * sp) * ct;
                let l_p = -lx * sp + ly * cp;
                // e^{-i w t} convention equivalence-principle far field.
                row_t[p] = Complex64::i() * prefactor * (l_p + ETA0 * n_t);
                row_p[p] = -Complex64::i() * prefactor * (l_t - ETA0 * n_p);
            }
            (t, row_t, row_p)
        })
        .collect();
    for (t, row_t, row_p) in rows {
        e_theta[t * N_PHI..(t + 1) * N_PHI].copy_from_slice(&row_t);
        e_phi[t * N_PHI..(t + 1) * N_PHI].copy_from_slice(&row_p);
    }

    Ok(FarField {
        wavelength_nm,
        theta,
        phi,
        e_theta,
        e_phi,
        radius_m: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic(npat: impl Fn(f64, f64) -> (Complex64, Complex64)) -> FarField {
        let theta: Vec<f64> = (0..N_THETA)
            .map(|t| t as f64 * (PI / 2.0) / (N_THETA - 1) as f64)
            .collect();
        let phi: Vec<f64> = (0..N_PHI).map(|p| p as f64 * 2.0 * PI / N_PHI as f64).collect();
        let mut e_theta = vec![Complex64::new(0.0, 0.0); N_THETA * N_PHI];
        let mut e_phi = e_theta.clone();
        for (t, &th) in theta.iter().enumerate() {
            for (p, &ph) in phi.iter().enumerate() {
                let (et, ep) = npat(th, ph);
                e_theta[t * N_PHI + p] = et;
                e_phi[t * N_PHI + p] = ep;
            }
        }
        FarField {
            wavelength_nm: 930.0,
            theta,
            phi,
            e_theta,
            e_phi,
            radius_m: 1.0,
        }
    }

    #[test]
    fn na_fraction_uniform_hemisphere() {
        let ff = synthetic(|_, _| (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)));
        let f = na_fraction(&ff, 0.7).unwrap();
        assert!((f - 0.2859).abs() < 1e-3, "uniform NA fraction {f}");
        assert_eq!(na_fraction(&ff, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn na_fraction_vertical_dipole_pattern() {
        let ff = synthetic(|th, _| (Complex64::new(th.sin(), 0.0), Complex64::new(0.0, 0.0)));
        let f = na_fraction(&ff, 0.7).unwrap();
        assert!((f - 0.1109).abs() < 1e-3, "dipole NA fraction {f}");
    }

    #[test]
    fn na_fraction_is_scale_and_phase_invariant() {
        let base = synthetic(|th, ph| {
            (
                Complex64::new(th.cos() * ph.cos(), 0.1),
                Complex64::new(-ph.sin(), 0.3 * th.sin()),
            )
        });
        let mut scaled = base.clone();
        let factor = Complex64::from_polar(17.0, 1.234);
        for v in scaled.e_theta.iter_mut().chain(scaled.e_phi.iter_mut()) {
            *v *= factor;
        }
        for na in [0.3, 0.7, 0.95] {
            assert_relative_eq!(
                na_fraction(&base, na).unwrap(),
                na_fraction(&scaled, na).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn na_fraction_rejects_bad_aperture() {
        let ff = synthetic(|_, _| (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)));
        assert!(na_fraction(&ff, 0.0).is_err());
        assert!(na_fraction(&ff, 1.2).is_err());
    }

    #[test]
    fn overlap_with_itself_is_unity() {
        let probe = synthetic(|_, _| (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
        let g = gaussian_mode(&probe, 2.0 * 930.0);
        let (overlap, waist) = gaussian_overlap(&g).unwrap();
        assert!(overlap > 0.999_99, "self overlap {overlap}");
        assert_relative_eq!(waist, 2.0 * 930.0, max_relative = 1e-3);
    }

    #[test]
    fn overlap_of_orthogonal_polarization_is_zero() {
        let probe = synthetic(|_, _| (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
        let g = gaussian_mode(&probe, 2.0 * 930.0);
        // Rotate polarization by 90 degrees: (E_theta, E_phi) pattern of a
        // y-polarized mode is the x-polarized one with phi -> phi - pi/2.
        let mut y_pol = g.clone();
        let nphi = g.phi.len();
        let shift = nphi / 4;
        for t in 0..g.theta.len() {
            for p in 0..nphi {
                let src = t * nphi + (p + shift) % nphi;
                y_pol.e_theta[t * nphi + p] = g.e_theta[src];
                y_pol.e_phi[t * nphi + p] = g.e_phi[src];
            }
        }
        let overlap = gaussian_overlap_with_waist(&y_pol, 2.0 * 930.0).unwrap();
        assert!(overlap < 1e-10, "orthogonal overlap {overlap}");
    }

    #[test]
    fn overlap_of_two_gaussians_matches_closed_form() {
        // The paraxial closed form (2 w1 w2 / (w1^2 + w2^2))^2 = 0.64 for a
        // 2:1 waist ratio; the spherical-measure integral approaches it from
        // below as the waists grow.
        let probe = synthetic(|_, _| (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
        let (w1, w2) = (2.5 * 930.0, 5.0 * 930.0);
        let g1 = gaussian_mode(&probe, w1);
        let overlap = gaussian_overlap_with_waist(&g1, w2).unwrap();
        let expected = (2.0 * w1 * w2 / (w1 * w1 + w2 * w2)).powi(2);
        assert_relative_eq!(expected, 0.64, max_relative = 1e-12);
        assert!((overlap - expected).abs() < 3e-3, "overlap {overlap} vs {expected}");
    }

    #[test]
    fn zero_far_field_is_rejected() {
        let ff = synthetic(|_, _| (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
        assert!(matches!(gaussian_overlap(&ff), Err(EmissionError::ZeroFarField)));
        assert!(matches!(na_fraction(&ff, 0.7), Err(EmissionError::ZeroFarField)));
    }
}
