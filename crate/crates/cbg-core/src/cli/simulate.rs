//! `cbg simulate`: run one design and emit spectra, far field, and manifest.

use clap::Args;
use std::path::PathBuf;

use super::{grid_bytes_cap, parse_band, parse_mesh, parse_na_list, resolve_design, CliError, OutputDir};
use crate::emission::{near_to_far, write_farfield_csv, write_spectrum_csv};
use crate::fdtd::write_face_dump;
use crate::geometry::{etched_plane_mask, save_design, write_pgm, GridSpec};
use crate::runner::{simulate_design, MeshProfile, RunOptions};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Design file (JSON).
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Built-in preset: cbg780, cbg930, cbg1550, cbg930-barrier.
    #[arg(long)]
    pub preset: Option<String>,
    /// Mesh profile: desk | paper-fidelity.
    #[arg(long, default_value = "desk")]
    pub mesh: String,
    /// Frequency band as center_nm,span_nm,samples.
    #[arg(long)]
    pub band: Option<String>,
    /// Collection apertures, comma separated.
    #[arg(long, default_value = "0.4,0.7,1.0")]
    pub na: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Step budget before the run is flagged non-converged.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Acknowledge the memory/runtime demands of paper-fidelity meshing.
    #[arg(long)]
    pub i_have_compute: bool,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let design = resolve_design(&args.design, &args.preset)?;
    let violations = crate::geometry::validate(&design);
    if !violations.is_empty() {
        return Err(CliError::usage(format!("invalid design: {violations:?}")));
    }
    let mesh = parse_mesh(&args.mesh)?;
    if mesh == MeshProfile::PaperFidelity && !args.i_have_compute {
        let spec = GridSpec::for_design(&design, mesh.points_per_wavelength());
        let dims = spec.estimated_dims(&design);
        let bytes = crate::geometry::PermittivityGrid::estimated_bytes(dims);
        return Err(CliError::usage(format!(
            "paper-fidelity meshing needs roughly {:.1} GiB for a {}x{}x{} grid; \
             rerun with --i-have-compute to proceed",
            bytes as f64 / (1u64 << 30) as f64,
            dims[0],
            dims[1],
            dims[2]
        )));
    }

    let mut opts = RunOptions::new(&design, mesh);
    if let Some(band) = &args.band {
        opts.band = parse_band(band)?;
    }
    opts.na_values = parse_na_list(&args.na)?;
    if let Some(max_steps) = args.max_steps {
        opts.max_steps = max_steps;
    }
    opts.max_grid_bytes = grid_bytes_cap();

    let mut out = OutputDir::prepare(&args.out, args.force, false)?;

    let run = simulate_design(&design, &opts)
        .map_err(|e| CliError::numerical(format!("simulation failed: {e}")))?;
    let metrics = &run.metrics;

    save_design(&design, &out.path("design.json"))
        .map_err(|e| CliError::numerical(format!("cannot write design.json: {e}")))?;
    out.track("design.json")?;

    let mask_res = (run.result.cell_nm[0]).min(design.bridge_width_nm / 2.0);
    if let Ok(mask) = etched_plane_mask(&design, mask_res) {
        write_pgm(&mask, &out.path("mask.pgm"))
            .map_err(|e| CliError::numerical(format!("cannot write mask.pgm: {e}")))?;
        out.track("mask.pgm")?;
    }

    write_spectrum_csv(metrics, &out.path("spectrum.csv"))
        .map_err(|e| CliError::numerical(format!("cannot write spectrum.csv: {e}")))?;
    out.track("spectrum.csv")?;

    // Far field at the resonance (or band center when no peak was found).
    let top = run.result.monitor("top").expect("top monitor");
    let ff_wavelength = metrics.resonance_nm.unwrap_or(opts.band.center_nm);
    let fi = top.nearest_freq_index(ff_wavelength);
    let farfield = near_to_far(
        &top.faces[0],
        fi,
        top.wavelengths_nm[fi],
        run.result.cell_nm,
        run.result.origin_nm,
    )
    .map_err(|e| CliError::numerical(format!("far-field transform failed: {e}")))?;
    write_farfield_csv(&farfield, &out.path("farfield.csv"))
        .map_err(|e| CliError::numerical(format!("cannot write farfield.csv: {e}")))?;
    out.track("farfield.csv")?;

    write_face_dump(
        &top.faces[0],
        run.result.cell_nm,
        &top.wavelengths_nm,
        &out.path("top_plane.cbgf"),
    )
    .map_err(|e| CliError::numerical(format!("cannot write top_plane.cbgf: {e}")))?;
    out.track("top_plane.cbgf")?;

    let c_na_res: serde_json::Map<String, serde_json::Value> = metrics
        .na_values
        .iter()
        .zip(&metrics.c_na)
        .map(|(na, series)| {
            (
                format!("{na}"),
                serde_json::json!(metrics.at_resonance(series)),
            )
        })
        .collect();
    out.write_manifest(serde_json::json!({
        "command": "simulate",
        "mesh": mesh.to_string(),
        "band": opts.band,
        "na": opts.na_values,
        "grid_dims": run.grid_dims,
        "steps_run": run.result.steps_run,
        "converged": run.result.converged,
        "residual_energy_fraction": run.result.residual_energy_fraction,
        "flags": metrics.flags,
        "metrics": {
            "resonance_nm": metrics.resonance_nm,
            "purcell_at_resonance": metrics.purcell_at_resonance(),
            "e_up_at_resonance": metrics.at_resonance(&metrics.e_up.values),
            "o_ff_at_resonance": metrics.at_resonance(&metrics.o_ff),
            "c_na07_cost_term": metrics.at_resonance(&metrics.c_na07_cost),
            "c_na_at_resonance": c_na_res,
            "farfield_wavelength_nm": top.wavelengths_nm[fi],
        },
    }))?;

    println!(
        "simulate: resonance {} nm, Purcell {}, converged {}",
        metrics
            .resonance_nm
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "n/a".into()),
        metrics
            .purcell_at_resonance()
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "n/a".into()),
        run.result.converged
    );
    Ok(())
}
