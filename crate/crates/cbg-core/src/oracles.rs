//! Closed-form electromagnetic references used as ground truth by tests,
//! the acceptance suite, and the `check` subcommand.
//!
//! Everything here is an analytic formula; nothing depends on the FDTD
//! engine, so these can safely judge its output.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{C0, EPS0, NM};

/// Dipole orientation relative to a horizontal mirror plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DipoleOrientation {
    /// Dipole axis parallel to the mirror.
    Horizontal,
    /// Dipole axis normal to the mirror.
    Vertical,
}

/// Input bundle for mirror-dipole style oracle evaluations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OracleInput {
    pub wavelength_nm: f64,
    pub refractive_index: f64,
    pub distance_nm: f64,
    pub orientation: DipoleOrientation,
}

/// Power radiated by a unit-moment point dipole in an unbounded medium of
/// index `n`: P = n omega^4 p^2 / (12 pi eps0 c^3) with p = 1.
///
/// The FDTD engine normalizes its monitor output per unit dipole moment,
/// so this is directly comparable to a simulated total radiated power.
pub fn bulk_dipole_power(n: f64, wavelength_nm: f64) -> f64 {
    assert!(n >= 1.0, "bulk index must be >= 1");
    let omega = crate::constants::omega_from_wavelength_nm(wavelength_nm);
    n * omega.powi(4) / (12.0 * std::f64::consts::PI * EPS0 * C0.powi(3))
}

/// Radiated-power enhancement of a dipole a distance `d` above a perfect
/// mirror, relative to free space (image-dipole interference).
///
/// Horizontal: F = 1 - (3/2)(sin x / x + cos x / x^2 - sin x / x^3),
/// vertical:   F = 1 - 3 (cos x / x^2 - sin x / x^3),
/// with x = 2 k d. F -> 1 as d -> infinity for both orientations.
pub fn mirror_dipole_factor(
    distance_nm: f64,
    wavelength_nm: f64,
    orientation: DipoleOrientation,
) -> f64 {
    assert!(distance_nm > 0.0, "mirror distance must be positive");
    let k = crate::constants::wavenumber_from_wavelength_nm(wavelength_nm);
    let x = 2.0 * k * distance_nm * NM;
    let (sx, cx) = (x.sin(), x.cos());
    match orientation {
        DipoleOrientation::Horizontal => 1.0 - 1.5 * (sx / x + cx / (x * x) - sx / (x * x * x)),
        DipoleOrientation::Vertical => 1.0 - 3.0 * (cx / (x * x) - sx / (x * x * x)),
    }
}

/// One thin film in a normal-incidence transfer-matrix stack.
#[derive(Debug, Clone, Copy)]
pub struct Film {
    /// Complex refractive index (imaginary part >= 0 for absorption).
    pub index: Complex64,
    pub thickness_nm: f64,
}

/// Terminating half-space of a thin-film stack.
#[derive(Debug, Clone, Copy)]
pub enum Substrate {
    /// Semi-infinite medium of the given complex index.
    Medium(Complex64),
    /// Perfect electric conductor (reflection coefficient -1).
    PerfectConductor,
}

/// Normal-incidence power reflectance of a film stack.
///
/// Light is incident from a half-space of index `ambient` onto `films`
/// (listed in propagation order, first film hit first), terminated by
/// `substrate`. Returns |r|^2.
pub fn thin_film_reflectance(
    ambient: f64,
    films: &[Film],
    substrate: Substrate,
    wavelength_nm: f64,
) -> f64 {
    let k0 = crate::constants::wavenumber_from_wavelength_nm(wavelength_nm);
    // Recurse from the back: r at the final interface, then roll films up.
    let mut r = match substrate {
        Substrate::Medium(n_sub) => {
            let n_last = films.last().map_or(Complex64::new(ambient, 0.0), |f| f.index);
            (n_last - n_sub) / (n_last + n_sub)
        }
        Substrate::PerfectConductor => Complex64::new(-1.0, 0.0),
    };
    for i in (0..films.len()).rev() {
        let film = films[i];
        let n_prev = if i == 0 {
            Complex64::new(ambient, 0.0)
        } else {
            films[i - 1].index
        };
        let phase = Complex64::i() * film.index * k0 * film.thickness_nm * NM;
        let r_prop = r * (2.0 * phase).exp();
        let r_if = (n_prev - film.index) / (n_prev + film.index);
        r = (r_if + r_prop) / (Complex64::new(1.0, 0.0) + r_if * r_prop);
    }
    r.norm_sqr().min(1.0)
}

/// Reflectance of a device layer stack seen from the air above, at normal
/// incidence. The bottom layer becomes the substrate; a perfect-conductor
/// bottom layer terminates the stack as a mirror.
pub fn layer_stack_reflectance(stack: &crate::geometry::LayerStack, wavelength_nm: f64) -> f64 {
    let layers = stack.layers();
    assert!(!layers.is_empty(), "empty layer stack");
    let (bottom, above) = layers.split_first().expect("non-empty");
    let substrate = match bottom.material.metal {
        Some(crate::geometry::MetalModel::PerfectConductor) => Substrate::PerfectConductor,
        Some(crate::geometry::MetalModel::Drude { .. }) => Substrate::Medium(
            drude_complex_index(&bottom.material, wavelength_nm),
        ),
        None => Substrate::Medium(Complex64::new(bottom.material.refractive_index, 0.0)),
    };
    // Films in propagation order: topmost layer first.
    let films: Vec<Film> = above
        .iter()
        .rev()
        .map(|layer| Film {
            index: match layer.material.metal {
                Some(crate::geometry::MetalModel::PerfectConductor) => {
                    // A PEC interior layer would short the stack; treat as a
                    // very large index so reflectance saturates.
                    Complex64::new(1e6, 0.0)
                }
                Some(crate::geometry::MetalModel::Drude { .. }) => {
                    drude_complex_index(&layer.material, wavelength_nm)
                }
                None => Complex64::new(layer.material.refractive_index, 0.0),
            },
            thickness_nm: layer.thickness_nm,
        })
        .collect();
    thin_film_reflectance(1.0, &films, substrate, wavelength_nm)
}

/// Complex refractive index of a single-pole Drude metal at a wavelength.
pub fn drude_complex_index(material: &crate::geometry::MaterialSpec, wavelength_nm: f64) -> Complex64 {
    let omega = crate::constants::omega_from_wavelength_nm(wavelength_nm);
    match material.metal {
        Some(crate::geometry::MetalModel::Drude {
            plasma_frequency_rad_s: wp,
            collision_rate_rad_s: gamma,
        }) => {
            let eps_inf = material.refractive_index * material.refractive_index;
            let eps = Complex64::new(eps_inf, 0.0)
                - wp * wp / (omega * Complex64::new(omega, gamma));
            let n = eps.sqrt();
            // sqrt branch with non-negative imaginary part (absorbing).
            if n.im < 0.0 {
                -n
            } else {
                n
            }
        }
        _ => Complex64::new(material.refractive_index, 0.0),
    }
}

/// Angular emission pattern with a closed-form cone integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmissionPattern {
    /// Isotropic intensity over the hemisphere.
    Uniform,
    /// sin^2(theta) intensity of a dipole whose axis is vertical.
    DipoleSinSquared,
}

/// Fraction of hemisphere-emitted power inside the cone theta <= asin(NA).
pub fn hemisphere_cone_fraction(pattern: EmissionPattern, na: f64) -> f64 {
    assert!(na > 0.0 && na <= 1.0, "NA must be in (0, 1]");
    let cos_c = (1.0 - na * na).sqrt();
    match pattern {
        EmissionPattern::Uniform => 1.0 - cos_c,
        EmissionPattern::DipoleSinSquared => (2.0 - 3.0 * cos_c + cos_c.powi(3)) / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn bulk_power_scales_linearly_with_index() {
        let ratio = bulk_dipole_power(3.52, 930.0) / bulk_dipole_power(1.0, 930.0);
        assert_relative_eq!(ratio, 3.52, max_relative = 1e-12);
    }

    #[test]
    fn bulk_power_scales_as_inverse_fourth_wavelength() {
        let ratio = bulk_dipole_power(1.0, 930.0) / bulk_dipole_power(1.0, 1860.0);
        assert_relative_eq!(ratio, 16.0, max_relative = 1e-12);
    }

    #[test]
    fn bulk_power_matches_textbook_constant() {
        // P = omega^4 / (12 pi eps0 c^3) in vacuum for p = 1.
        let lambda = 600.0;
        let omega = crate::constants::omega_from_wavelength_nm(lambda);
        let expected = omega.powi(4) / (12.0 * PI * EPS0 * C0.powi(3));
        assert_relative_eq!(bulk_dipole_power(1.0, lambda), expected, max_relative = 1e-14);
    }

    #[test]
    fn mirror_factor_quarter_wave_horizontal() {
        // x = pi: F = 1 + 3/(2 pi^2) ~ 1.152
        let f = mirror_dipole_factor(250.0, 1000.0, DipoleOrientation::Horizontal);
        assert_relative_eq!(f, 1.0 + 1.5 / (PI * PI), max_relative = 1e-12);
        assert_relative_eq!(f, 1.152, max_relative = 1e-3);
    }

    #[test]
    fn mirror_factor_small_distance_limits() {
        let h = mirror_dipole_factor(1e-3, 1000.0, DipoleOrientation::Horizontal);
        assert!(h.abs() < 1e-6, "horizontal image cancels: {h}");
        let v = mirror_dipole_factor(1e-3, 1000.0, DipoleOrientation::Vertical);
        assert_relative_eq!(v, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn mirror_factor_far_limit_both_orientations() {
        for orientation in [DipoleOrientation::Horizontal, DipoleOrientation::Vertical] {
            let f = mirror_dipole_factor(1e9, 1000.0, orientation);
            assert_relative_eq!(f, 1.0, epsilon = 1e-6);
        }
    }

    /// Quadrature cross-check of the image-dipole interference integral:
    /// F = 1 +- (3/2 or 3) Re integral of the image field, evaluated here
    /// as the angular spectrum integral over the radiation hemisphere.
    #[test]
    fn mirror_factor_matches_quadrature() {
        // Horizontal dipole above PEC: F(x) can also be written as the
        // normalized radiated power of two anti-phased dipoles separated
        // by x = 2kd: F = integral over sphere of the two-dipole array
        // pattern. Evaluate that integral numerically.
        let lambda = 1000.0;
        for d in [125.0, 250.0, 400.0, 700.0] {
            let x = 2.0 * (2.0 * PI / lambda) * d;
            // Array factor |1 - e^{i x cos(theta)}|^2, dipole pattern for
            // horizontal axis: 1 - sin^2(theta) cos^2(phi).
            let n_t = 4000;
            let n_p = 64;
            let mut acc = 0.0;
            for it in 0..n_t {
                let theta = PI * (it as f64 + 0.5) / n_t as f64;
                for ip in 0..n_p {
                    let phi = 2.0 * PI * (ip as f64 + 0.5) / n_p as f64;
                    let pat = 1.0 - theta.sin().powi(2) * phi.cos().powi(2);
                    let array = 2.0 - 2.0 * (x * theta.cos()).cos();
                    acc += pat * array * theta.sin();
                }
            }
            acc *= PI / n_t as f64 * 2.0 * PI / n_p as f64;
            // Normalize: free-space dipole integral is 8 pi / 3; the image
            // doubles power accounting, so F = acc / (2 * 8 pi / 3).
            let f_quad = acc / (2.0 * 8.0 * PI / 3.0);
            let f = mirror_dipole_factor(d, lambda, DipoleOrientation::Horizontal);
            assert_relative_eq!(f, f_quad, max_relative = 1e-6);
        }
    }

    #[test]
    fn fresnel_single_interface() {
        let r = thin_film_reflectance(
            1.0,
            &[],
            Substrate::Medium(Complex64::new(3.52, 0.0)),
            930.0,
        );
        assert_relative_eq!(r, ((3.52f64 - 1.0) / (3.52 + 1.0)).powi(2), max_relative = 1e-12);
        assert_relative_eq!(r, 0.3108, max_relative = 1e-3);
    }

    #[test]
    fn zero_thickness_film_is_inert() {
        let substrate = Substrate::Medium(Complex64::new(3.52, 0.0));
        let bare = thin_film_reflectance(1.0, &[], substrate, 930.0);
        let with_film = thin_film_reflectance(
            1.0,
            &[Film {
                index: Complex64::new(2.2, 0.0),
                thickness_nm: 0.0,
            }],
            substrate,
            930.0,
        );
        assert_relative_eq!(bare, with_film, max_relative = 1e-12);
    }

    #[test]
    fn quarter_wave_antireflection_coating() {
        let n_sub = 3.52_f64;
        let n_film = n_sub.sqrt();
        let lambda = 930.0;
        let r = thin_film_reflectance(
            1.0,
            &[Film {
                index: Complex64::new(n_film, 0.0),
                thickness_nm: lambda / (4.0 * n_film),
            }],
            Substrate::Medium(Complex64::new(n_sub, 0.0)),
            lambda,
        );
        assert!(r < 1e-6, "AR coating reflectance {r}");
    }

    #[test]
    fn pec_substrate_reflects_everything() {
        let r = thin_film_reflectance(1.0, &[], Substrate::PerfectConductor, 930.0);
        assert_relative_eq!(r, 1.0, max_relative = 1e-12);
        let r_spaced = thin_film_reflectance(
            1.0,
            &[Film {
                index: Complex64::new(1.62, 0.0),
                thickness_nm: 200.0,
            }],
            Substrate::PerfectConductor,
            930.0,
        );
        assert_relative_eq!(r_spaced, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn reflectance_stays_in_unit_interval_for_passive_stacks() {
        let substrate = Substrate::Medium(Complex64::new(1.5, 0.0));
        for i in 0..50 {
            let t = 10.0 + 37.0 * i as f64;
            let films = [
                Film { index: Complex64::new(3.3, 0.0), thickness_nm: t },
                Film { index: Complex64::new(1.62, 0.02), thickness_nm: 0.5 * t },
            ];
            let r = thin_film_reflectance(1.0, &films, substrate, 780.0);
            assert!((0.0..=1.0).contains(&r), "R = {r} at t = {t}");
        }
    }

    #[test]
    fn cone_fraction_uniform() {
        assert_relative_eq!(
            hemisphere_cone_fraction(EmissionPattern::Uniform, 0.7),
            1.0 - (1.0f64 - 0.49).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            hemisphere_cone_fraction(EmissionPattern::Uniform, 0.7),
            0.2859,
            epsilon = 5e-5
        );
    }

    #[test]
    fn cone_fraction_full_aperture_is_unity() {
        for pattern in [EmissionPattern::Uniform, EmissionPattern::DipoleSinSquared] {
            assert_relative_eq!(hemisphere_cone_fraction(pattern, 1.0), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cone_fraction_dipole_pattern() {
        assert_relative_eq!(
            hemisphere_cone_fraction(EmissionPattern::DipoleSinSquared, 0.7),
            0.1109,
            epsilon = 5e-5
        );
    }

    #[test]
    fn cone_fraction_matches_quadrature() {
        for (pattern, weight) in [
            (EmissionPattern::Uniform, 0),
            (EmissionPattern::DipoleSinSquared, 2),
        ] {
            for na in [0.2f64, 0.4, 0.7, 0.95, 1.0] {
                let theta_c = na.asin();
                let n = 200_000;
                let quad = |upper: f64| -> f64 {
                    let mut acc = 0.0;
                    for i in 0..n {
                        let theta = upper * (i as f64 + 0.5) / n as f64;
                        acc += theta.sin().powi(1 + weight) * upper / n as f64;
                    }
                    acc
                };
                let frac = quad(theta_c) / quad(PI / 2.0);
                assert_relative_eq!(
                    hemisphere_cone_fraction(pattern, na),
                    frac,
                    max_relative = 1e-6
                );
            }
        }
    }
}
