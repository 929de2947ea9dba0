//! Physical constants (SI units).

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_8128e-12;

/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Free-space wave impedance (Ohm).
pub const ETA0: f64 = 376.730_313_668;

/// Nanometers to meters.
pub const NM: f64 = 1e-9;

/// Angular frequency (rad/s) of light at a vacuum wavelength given in nm.
pub fn omega_from_wavelength_nm(wavelength_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * C0 / (wavelength_nm * NM)
}

/// Vacuum wavenumber (rad/m) at a vacuum wavelength given in nm.
pub fn wavenumber_from_wavelength_nm(wavelength_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI / (wavelength_nm * NM)
}
