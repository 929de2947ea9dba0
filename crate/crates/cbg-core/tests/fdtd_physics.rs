//! Physics validation of the FDTD engine against closed-form references:
//! free-space dipole power, Poynting bookkeeping, mesh convergence, and
//! boundary absorption.

use cbg_core::fdtd::{
    run, BoxSpec, DipoleSource, FieldComponent, Monitor, MonitorSpec, Probe, SimConfig,
};
use cbg_core::geometry::PermittivityGrid;
use cbg_core::oracles;

/// Free-space dipole run with an enclosing box monitor; returns
/// (box flux, source power) per wavelength plus the result.
fn vacuum_dipole(
    cells_per_wavelength: f64,
    lambda_nm: f64,
    wavelengths: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let cell = lambda_nm / cells_per_wavelength;
    // 10 PML + 4 gap + box of ~0.5 lambda half-extent.
    let half_box = (0.35 * cells_per_wavelength).round() as usize;
    let n = 2 * (10 + 4 + half_box) + 3;
    let grid = PermittivityGrid::homogeneous([n, n, n], [cell; 3], 1.0);
    let source = DipoleSource::x_oriented([0.0, 0.0, 0.0], lambda_nm);
    let mut config = SimConfig::new(grid, source);
    let c = n / 2;
    config.monitors.push(Monitor {
        label: "box".into(),
        spec: MonitorSpec::Box(BoxSpec {
            lo: [c - half_box; 3],
            hi: [c + half_box; 3],
        }),
        wavelengths_nm: wavelengths.to_vec(),
    });
    config.spectrum_wavelengths_nm = wavelengths.to_vec();
    config.stop.max_steps = 6000;
    let result = run(&config).unwrap();
    assert!(result.converged, "vacuum run should converge");
    let fluxes: Vec<f64> = (0..wavelengths.len())
        .map(|fi| result.monitors[0].total_flux(fi, result.cell_m()))
        .collect();
    (fluxes, result.source_power)
}

#[test]
fn vacuum_dipole_power_matches_analytic_within_5_percent() {
    let wavelengths = [560.0, 600.0, 640.0];
    let (fluxes, source_power) = vacuum_dipole(20.0, 600.0, &wavelengths);
    for (i, &wl) in wavelengths.iter().enumerate() {
        let oracle = oracles::bulk_dipole_power(1.0, wl);
        let err_flux = (fluxes[i] / oracle - 1.0).abs();
        let err_src = (source_power[i] / oracle - 1.0).abs();
        println!("lambda {wl}: flux/oracle = {:.4}, src/oracle = {:.4}", fluxes[i] / oracle, source_power[i] / oracle);
        assert!(err_flux < 0.05, "flux error {err_flux:.3} at {wl} nm");
        assert!(err_src < 0.05, "source power error {err_src:.3} at {wl} nm");
    }
}

#[test]
fn nested_boxes_agree_within_1_percent() {
    let lambda = 600.0;
    let cell = lambda / 20.0;
    let n = 2 * (10 + 4 + 9) + 3;
    let grid = PermittivityGrid::homogeneous([n, n, n], [cell; 3], 1.0);
    let source = DipoleSource::x_oriented([0.0, 0.0, 0.0], lambda);
    let mut config = SimConfig::new(grid, source);
    let c = n / 2;
    for (label, half) in [("inner", 5usize), ("outer", 9usize)] {
        config.monitors.push(Monitor {
            label: label.into(),
            spec: MonitorSpec::Box(BoxSpec {
                lo: [c - half; 3],
                hi: [c + half; 3],
            }),
            wavelengths_nm: vec![lambda],
        });
    }
    config.spectrum_wavelengths_nm = vec![lambda];
    config.stop.max_steps = 6000;
    let result = run(&config).unwrap();
    let inner = result.monitor("inner").unwrap().total_flux(0, result.cell_m());
    let outer = result.monitor("outer").unwrap().total_flux(0, result.cell_m());
    let ratio = inner / outer;
    println!("nested box flux ratio = {ratio:.5}");
    assert!((ratio - 1.0).abs() < 0.01, "flux ratio {ratio}");
}

#[test]
fn radiated_power_converges_at_second_order() {
    let lambda = 600.0;
    let mut errors = Vec::new();
    for cpw in [10.0, 20.0, 40.0] {
        let (fluxes, _) = vacuum_dipole(cpw, lambda, &[lambda]);
        let oracle = oracles::bulk_dipole_power(1.0, lambda);
        let err = (fluxes[0] / oracle - 1.0).abs();
        println!("cpw {cpw}: relative error {err:.5}");
        errors.push(err);
    }
    // log-log slope between successive refinements.
    let slope1 = (errors[0] / errors[1]).ln() / 2.0f64.ln();
    let slope2 = (errors[1] / errors[2]).ln() / 2.0f64.ln();
    let slope = (errors[0] / errors[2]).ln() / 4.0f64.ln();
    println!("convergence slopes: {slope1:.2}, {slope2:.2} (overall {slope:.2})");
    assert!(
        (1.5..=2.5).contains(&slope),
        "convergence slope {slope} outside [1.5, 2.5] (errors {errors:?})"
    );
}

#[test]
fn pml_reflects_less_than_1e_minus_4_energy() {
    // Identical pulses in a small PML-bounded domain and a large reference
    // domain; the probe difference after the direct pulse passes is the
    // boundary reflection.
    let lambda = 600.0;
    let cell = lambda / 20.0;
    let steps = 700;

    let probe_offset = 6; // cells from source to probe, toward the wall
    let small_n = 53; // 10 PML + interior
    let big_n = 121; // walls far enough that nothing returns within `steps`

    let run_with = |n: usize| {
        let grid = PermittivityGrid::homogeneous([n, n, n], [cell; 3], 1.0);
        let mut source = DipoleSource::x_oriented([0.0, 0.0, 0.0], lambda);
        source.fractional_bandwidth = 0.8;
        let mut config = SimConfig::new(grid, source);
        config.stop.max_steps = steps;
        config.stop.check_interval = 1000; // skip early-out
        let c = n / 2;
        config.probes.push(Probe {
            component: FieldComponent::Ex,
            cell: [c + probe_offset, c, c],
        });
        run(&config).unwrap()
    };

    let small = run_with(small_n);
    let big = run_with(big_n);
    let a = &small.probe_series[0];
    let b = &big.probe_series[0];
    let direct: f64 = b.iter().map(|v| v * v).sum();
    let reflected: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let fraction = reflected / direct;
    println!("PML reflected energy fraction = {fraction:.3e}");
    assert!(fraction < 1e-4, "PML reflection {fraction:.3e}");
}

#[test]
fn drude_mirror_absorbs_part_of_the_source_power() {
    // Passivity: with a lossy metal in the domain, the power delivered by
    // the source exceeds what leaves through the box.
    use cbg_core::geometry::{presets, rasterize, GridSpec, MaterialSpec};
    let mut design = presets::cbg930();
    design.num_rings = 0;
    design.stack.layers[0].material = MaterialSpec::gold_drude();
    let mut spec = GridSpec::for_design(&design, 8.0);
    spec.lateral_pad_nm = -design.outer_radius_nm() + 700.0; // small lateral window
    spec.pml_cells = 10;
    let grid = rasterize(&design, &spec).unwrap();
    let dims = grid.dims;
    let dipole_z = design.stack.dipole_z_nm() + grid.origin_nm[2].abs() - grid.origin_nm[2].abs();
    let source = DipoleSource::x_oriented([0.0, 0.0, dipole_z], 930.0);
    let mut config = SimConfig::new(grid, source);
    let lo = [12, 12, 12];
    let hi = [dims[0] - 13, dims[1] - 13, dims[2] - 13];
    config.monitors.push(Monitor {
        label: "box".into(),
        spec: MonitorSpec::Box(BoxSpec { lo, hi }),
        wavelengths_nm: vec![930.0],
    });
    config.spectrum_wavelengths_nm = vec![930.0];
    config.stop.max_steps = 2500;
    let result = run(&config).unwrap();
    let flux = result.monitors[0].total_flux(0, result.cell_m());
    let p_src = result.source_power[0];
    println!("drude run: source power {p_src:.3e}, box flux {flux:.3e}");
    assert!(p_src > 0.0 && flux > 0.0);
    assert!(p_src >= flux, "absorption requires source power >= box flux");
    assert!(flux / p_src < 0.999, "some absorption expected");
}
