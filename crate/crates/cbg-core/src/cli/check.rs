//! `cbg check`: evaluates the closed-form reference identities and prints a
//! pass/fail table. Nonzero exit on any failure.

use clap::Args;

use super::CliError;
use crate::oracles::{
    bulk_dipole_power, hemisphere_cone_fraction, mirror_dipole_factor, thin_film_reflectance,
    DipoleOrientation, EmissionPattern, Film, Substrate,
};
use num_complex::Complex64;

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Test hook: multiply every tolerance by this factor.
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub tolerance_scale: f64,
}

struct CheckRow {
    name: &'static str,
    expected: f64,
    got: f64,
    tolerance: f64,
}

impl CheckRow {
    fn passes(&self) -> bool {
        let scale = self.expected.abs().max(1.0);
        (self.got - self.expected).abs() <= self.tolerance * scale
    }
}

pub fn cmd_check(args: &CheckArgs) -> Result<(), CliError> {
    let s = args.tolerance_scale;
    let rows = vec![
        CheckRow {
            name: "bulk dipole power ratio n=3.52 / n=1",
            expected: 3.52,
            got: bulk_dipole_power(3.52, 930.0) / bulk_dipole_power(1.0, 930.0),
            tolerance: 1e-12 * s,
        },
        CheckRow {
            name: "bulk dipole power lambda^-4 scaling",
            expected: 16.0,
            got: bulk_dipole_power(1.0, 930.0) / bulk_dipole_power(1.0, 1860.0),
            tolerance: 1e-12 * s,
        },
        CheckRow {
            name: "mirror dipole factor, horizontal, d = lambda/4",
            expected: 1.0 + 1.5 / (std::f64::consts::PI * std::f64::consts::PI),
            got: mirror_dipole_factor(232.5, 930.0, DipoleOrientation::Horizontal),
            tolerance: 1e-12 * s,
        },
        CheckRow {
            name: "mirror dipole factor, horizontal, d -> 0",
            expected: 0.0,
            got: mirror_dipole_factor(1e-3, 930.0, DipoleOrientation::Horizontal),
            tolerance: 1e-6 * s,
        },
        CheckRow {
            name: "mirror dipole factor, vertical, d -> 0",
            expected: 2.0,
            got: mirror_dipole_factor(1e-3, 930.0, DipoleOrientation::Vertical),
            tolerance: 1e-6 * s,
        },
        CheckRow {
            name: "mirror dipole factor, d -> infinity",
            expected: 1.0,
            got: mirror_dipole_factor(1e9, 930.0, DipoleOrientation::Horizontal),
            tolerance: 1e-6 * s,
        },
        CheckRow {
            name: "Fresnel reflectance air/GaAs",
            expected: ((3.52 - 1.0) / (3.52 + 1.0)) * ((3.52 - 1.0) / (3.52 + 1.0)),
            got: thin_film_reflectance(1.0, &[], Substrate::Medium(Complex64::new(3.52, 0.0)), 930.0),
            tolerance: 1e-12 * s,
        },
        CheckRow {
            name: "quarter-wave antireflection null",
            expected: 0.0,
            got: {
                let n_film = 3.52f64.sqrt();
                thin_film_reflectance(
                    1.0,
                    &[Film {
                        index: Complex64::new(n_film, 0.0),
                        thickness_nm: 930.0 / (4.0 * n_film),
                    }],
                    Substrate::Medium(Complex64::new(3.52, 0.0)),
                    930.0,
                )
            },
            tolerance: 1e-6 * s,
        },
        CheckRow {
            name: "perfect-mirror substrate reflectance",
            expected: 1.0,
            got: thin_film_reflectance(1.0, &[], Substrate::PerfectConductor, 930.0),
            tolerance: 1e-12 * s,
        },
        CheckRow {
            name: "uniform hemisphere NA 0.7 cone fraction",
            expected: 1.0 - (1.0f64 - 0.49).sqrt(),
            got: hemisphere_cone_fraction(EmissionPattern::Uniform, 0.7),
            tolerance: 1e-12 * s,
        },
        CheckRow {
            name: "vertical-dipole pattern NA 0.7 cone fraction",
            expected: 0.110892,
            got: hemisphere_cone_fraction(EmissionPattern::DipoleSinSquared, 0.7),
            tolerance: 1e-5 * s,
        },
        CheckRow {
            name: "cost term f2 at P0 + 5",
            expected: 12.5,
            got: crate::optimizer::f2(30.0, 25.0),
            tolerance: 1e-12 * s,
        },
        CheckRow {
            name: "cost composite at P = 35, C = 0.9",
            expected: 0.2 * (100.0 / (1.0 + 5.0f64.exp())) - 0.54,
            got: crate::optimizer::cost_terms(
                930.0,
                35.0,
                0.9,
                &crate::optimizer::CostWeights::standard(930.0),
            ),
            tolerance: 1e-12 * s,
        },
    ];

    let mut failures = 0;
    println!("{:<48} {:>14} {:>14} {:>9} result", "check", "expected", "got", "tol");
    for row in &rows {
        let ok = row.passes();
        if !ok {
            failures += 1;
        }
        println!(
            "{:<48} {:>14.6} {:>14.6} {:>9.1e} {}",
            row.name,
            row.expected,
            row.got,
            row.tolerance,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failures > 0 {
        return Err(CliError::numerical(format!("{failures} oracle check(s) failed")));
    }
    println!("all {} oracle checks passed", rows.len());
    Ok(())
}
