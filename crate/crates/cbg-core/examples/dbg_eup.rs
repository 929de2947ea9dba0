use cbg_core::emission::upward_fraction;
use cbg_core::fdtd::{run, BoxSpec, DipoleSource, Monitor, MonitorSpec, SimConfig};
use cbg_core::geometry::PermittivityGrid;

fn main() {
    let lambda = 930.0;
    let cell = lambda / 20.0;
    let (n, nz) = (176usize, 46usize);
    let mut grid = PermittivityGrid::homogeneous([n, n, nz], [cell; 3], 1.0);
    let k_mirror = 12;
    grid.add_pec_floor(k_mirror);
    let z_dip = (k_mirror + 5) as f64 * cell + grid.origin_nm[2];
    let source = DipoleSource::x_oriented([0.0, 0.0, z_dip], lambda);
    let mut config = SimConfig::new(grid, source);
    let m = 12;
    config.monitors.push(Monitor {
        label: "box".into(),
        spec: MonitorSpec::Box(BoxSpec {
            lo: [m, m, k_mirror + 1],
            hi: [n - 1 - m, n - 1 - m, k_mirror + 16],
        }),
        wavelengths_nm: vec![lambda],
    });
    config.spectrum_wavelengths_nm = vec![lambda];
    config.stop.max_steps = 3000;
    let t0 = std::time::Instant::now();
    let result = run(&config).unwrap();
    let (e_up, raw) = upward_fraction(result.monitor("box").unwrap(), 0, result.cell_m()).unwrap();
    println!("E_up = {e_up:.4} (raw {raw:.4}), steps {} converged {}, {:.1}s",
             result.steps_run, result.converged, t0.elapsed().as_secs_f64());
}
