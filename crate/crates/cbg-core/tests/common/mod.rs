//! Shared helpers for integration tests: analytic Hertzian-dipole fields
//! sampled on a monitor plane, independent of the solver and transform
//! code paths they validate.

use cbg_core::constants::{C0, EPS0, NM};
use cbg_core::fdtd::FaceData;
use num_complex::Complex64;

/// Exact fields of an x-oriented unit-moment point dipole at the origin
/// (e^{-i w t} convention), evaluated at a point in meters.
/// Returns (E, H) as complex 3-vectors.
pub fn hertzian_dipole_fields(k: f64, r_m: [f64; 3]) -> ([Complex64; 3], [Complex64; 3]) {
    let r = (r_m[0] * r_m[0] + r_m[1] * r_m[1] + r_m[2] * r_m[2]).sqrt();
    let rhat = [r_m[0] / r, r_m[1] / r, r_m[2] / r];
    let expikr = Complex64::from_polar(1.0, k * r);
    let ikr = Complex64::new(0.0, k * r);

    // E = (1/4 pi eps0) { k^2 (rhat x p) x rhat e^{ikr}/r
    //     + [3 rhat (rhat.p) - p] (1/r^3 - ik/r^2) e^{ikr} }, p = x.
    let rdotp = rhat[0];
    let transverse = [
        rdotp * rhat[0] - 1.0,
        rdotp * rhat[1],
        rdotp * rhat[2],
    ];
    // (rhat x p) x rhat = p - rhat (rhat.p) = -transverse
    let near = Complex64::new(1.0 / (r * r * r), 0.0) - Complex64::new(0.0, k / (r * r));
    let mut e = [Complex64::new(0.0, 0.0); 3];
    for a in 0..3 {
        let far_term = Complex64::new(k * k * -transverse[a] / r, 0.0);
        let near_vec = 3.0 * rhat[a] * rdotp - if a == 0 { 1.0 } else { 0.0 };
        e[a] = (far_term + near * near_vec) * expikr / (4.0 * std::f64::consts::PI * EPS0);
    }

    // H = (c k^2 / 4 pi) (rhat x p) e^{ikr}/r (1 - 1/(ikr)); rhat x x =
    // (0, rz, -ry).
    let rxp = [0.0, rhat[2], -rhat[1]];
    let hfac = Complex64::new(C0 * k * k / (4.0 * std::f64::consts::PI * r), 0.0)
        * expikr
        * (Complex64::new(1.0, 0.0) - 1.0 / ikr);
    let h = [hfac * rxp[0], hfac * rxp[1], hfac * rxp[2]];
    (e, h)
}

/// Analytic far-field components of the same dipole at distance r:
/// E_theta = K cos(theta) cos(phi), E_phi = -K sin(phi).
pub fn hertzian_farfield_pattern(theta: f64, phi: f64) -> (f64, f64) {
    (theta.cos() * phi.cos(), -phi.sin())
}

/// Far-field intensity pattern (arbitrary scale) of a horizontal dipole a
/// height d above a perfect mirror: the single-dipole pattern times the
/// image-pair array factor 4 sin^2(k d cos(theta)).
pub fn mirrored_dipole_intensity(k: f64, d_m: f64, theta: f64, phi: f64) -> f64 {
    let (et, ep) = hertzian_farfield_pattern(theta, phi);
    (et * et + ep * ep) * 4.0 * (k * d_m * theta.cos()).sin().powi(2)
}

/// Samples the analytic dipole fields on a z-normal plane the way the FDTD
/// monitor stores them: e1 = Ex at (i+1/2, j), e2 = Ey at (i, j+1/2),
/// h1 = Hx at (i, j+1/2), h2 = Hy at (i+1/2, j), all on the plane z = z0.
/// The plane is centered on the dipole axis; `origin_nm` is returned for
/// feeding the transform.
pub fn dipole_plane_face(
    lambda_nm: f64,
    z0_nm: f64,
    half_width_nm: f64,
    cell_nm: f64,
) -> (FaceData, [f64; 3], [f64; 3]) {
    plane_face_of(lambda_nm, z0_nm, half_width_nm, cell_nm, |k, r| {
        hertzian_dipole_fields(k, r)
    })
}

/// Same sampling for a horizontal dipole at height d above a perfect
/// mirror at z = 0: real dipole at +d plus an inverted image at -d.
pub fn mirrored_dipole_plane_face(
    lambda_nm: f64,
    mirror_distance_nm: f64,
    z0_nm: f64,
    half_width_nm: f64,
    cell_nm: f64,
) -> (FaceData, [f64; 3], [f64; 3]) {
    let d = mirror_distance_nm * NM;
    plane_face_of(lambda_nm, z0_nm, half_width_nm, cell_nm, move |k, r| {
        let (e1, h1) = hertzian_dipole_fields(k, [r[0], r[1], r[2] - d]);
        let (e2, h2) = hertzian_dipole_fields(k, [r[0], r[1], r[2] + d]);
        let mut e = [Complex64::new(0.0, 0.0); 3];
        let mut h = e;
        for a in 0..3 {
            e[a] = e1[a] - e2[a];
            h[a] = h1[a] - h2[a];
        }
        (e, h)
    })
}

fn plane_face_of(
    lambda_nm: f64,
    z0_nm: f64,
    half_width_nm: f64,
    cell_nm: f64,
    fields: impl Fn(f64, [f64; 3]) -> ([Complex64; 3], [Complex64; 3]),
) -> (FaceData, [f64; 3], [f64; 3]) {
    let k = 2.0 * std::f64::consts::PI / (lambda_nm * NM);
    let n = (2.0 * half_width_nm / cell_nm).ceil() as usize;
    let origin = [
        -(n as f64) * cell_nm / 2.0,
        -(n as f64) * cell_nm / 2.0,
        0.0,
    ];
    let k_index = (z0_nm / cell_nm).round() as usize;
    let z = k_index as f64 * cell_nm;
    let mut face = FaceData::new(2, k_index, 1.0, [0, 0], [n - 1, n - 1], 1);
    for j in 0..n {
        for i in 0..n {
            let s = j * n + i;
            let x_half = (origin[0] + (i as f64 + 0.5) * cell_nm) * NM;
            let x_int = (origin[0] + i as f64 * cell_nm) * NM;
            let y_half = (origin[1] + (j as f64 + 0.5) * cell_nm) * NM;
            let y_int = (origin[1] + j as f64 * cell_nm) * NM;
            let zm = z * NM;
            let (e, _) = fields(k, [x_half, y_int, zm]);
            face.e1[s] = e[0];
            let (e, _) = fields(k, [x_int, y_half, zm]);
            face.e2[s] = e[1];
            let (_, h) = fields(k, [x_int, y_half, zm]);
            face.h1[s] = h[0];
            let (_, h) = fields(k, [x_half, y_int, zm]);
            face.h2[s] = h[1];
        }
    }
    (face, [cell_nm, cell_nm, cell_nm], origin)
}
