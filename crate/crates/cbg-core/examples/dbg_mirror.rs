use cbg_core::emission::upward_fraction;
use cbg_core::fdtd::{run, BoxSpec, DipoleSource, Monitor, MonitorSpec, SimConfig};
use cbg_core::geometry::PermittivityGrid;
use cbg_core::oracles::{self, DipoleOrientation};

fn mirror_run(d_cells: usize, lateral: usize, nz: usize, lambda: f64, cpw: f64) -> (f64, f64) {
    let cell = lambda / cpw;
    let n = lateral;
    let mut grid = PermittivityGrid::homogeneous([n, n, nz], [cell; 3], 1.0);
    let k_mirror = 14; // mirror plane node
    grid.add_pec_floor(k_mirror);
    let z_dip = (k_mirror + d_cells) as f64 * cell + grid.origin_nm[2];
    let source = DipoleSource::x_oriented([0.0, 0.0, z_dip], lambda);
    let mut config = SimConfig::new(grid, source);
    let m = 12;
    config.monitors.push(Monitor {
        label: "box".into(),
        spec: MonitorSpec::Box(BoxSpec {
            lo: [m, m, k_mirror + 1],
            hi: [n - 1 - m, n - 1 - m, nz - 14],
        }),
        wavelengths_nm: vec![lambda],
    });
    config.spectrum_wavelengths_nm = vec![lambda];
    config.stop.max_steps = 4000;
    let result = run(&config).unwrap();
    let purcell = result.source_power[0] / oracles::bulk_dipole_power(1.0, lambda);
    let (e_up, _) = upward_fraction(result.monitor("box").unwrap(), 0, result.cell_m()).unwrap();
    (purcell, e_up)
}

fn main() {
    let lambda = 930.0;
    let cpw = 20.0;
    for (d_cells, name) in [(3usize, "~lambda/8"), (5, "lambda/4"), (10, "lambda/2")] {
        let d_nm = d_cells as f64 * lambda / cpw;
        let oracle = oracles::mirror_dipole_factor(d_nm, lambda, DipoleOrientation::Horizontal);
        let (p, e_up) = mirror_run(d_cells, 96, 60, lambda, cpw);
        println!("d = {d_nm:.1} nm ({name}): purcell {p:.4} vs oracle {oracle:.4} (err {:+.1}%), e_up {e_up:.4}",
                 100.0 * (p / oracle - 1.0));
    }
}
