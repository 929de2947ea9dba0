//! `cbg sweep`: one FDTD run per parameter offset, tabulated.

use clap::Args;
use std::io::Write;
use std::path::PathBuf;

use super::{grid_bytes_cap, parse_band, parse_mesh, parse_na_list, resolve_design, CliError, OutputDir};
use crate::runner::{apply_offset, simulate_design, RunOptions, SweepParam};

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter to sweep: R | P | W | t_sc | t_s.
    #[arg(long)]
    pub param: String,
    /// Offsets in nm, comma separated (e.g. -10,0,10).
    #[arg(long, allow_hyphen_values = true)]
    pub offsets: String,
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value = "desk")]
    pub mesh: String,
    #[arg(long)]
    pub band: Option<String>,
    #[arg(long, default_value = "0.4,0.7,1.0")]
    pub na: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Box/top monitor wavelength count (defaults to a light decimation).
    #[arg(long)]
    pub flux_samples: Option<usize>,
}

/// One sweep row for the CSV.
pub struct SweepRow {
    pub param: &'static str,
    pub offset_nm: f64,
    pub resonance_nm: Option<f64>,
    pub purcell: Option<f64>,
    pub c_na07: Option<f64>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let base = resolve_design(&args.design, &args.preset)?;
    let param = SweepParam::parse(&args.param)
        .ok_or_else(|| CliError::usage(format!("unknown sweep parameter '{}'", args.param)))?;
    let offsets: Vec<f64> = if args.offsets.trim().is_empty() {
        Vec::new()
    } else {
        args.offsets
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::usage(format!("bad offsets: {e}")))?
    };
    let mesh = parse_mesh(&args.mesh)?;

    let mut opts = RunOptions::new(&base, mesh);
    if let Some(band) = &args.band {
        opts.band = parse_band(band)?;
    }
    opts.na_values = parse_na_list(&args.na)?;
    if let Some(max_steps) = args.max_steps {
        opts.max_steps = max_steps;
    }
    opts.flux_samples = Some(args.flux_samples.unwrap_or(9));
    opts.max_grid_bytes = grid_bytes_cap();

    let mut out = OutputDir::prepare(&args.out, args.force, false)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &offset in &offsets {
        let design = apply_offset(&base, param, offset);
        let violations = crate::geometry::validate(&design);
        if !violations.is_empty() {
            eprintln!("sweep: skipping offset {offset} nm: {violations:?}");
            skipped.push(serde_json::json!({"offset_nm": offset, "violations": violations}));
            continue;
        }
        let run = simulate_design(&design, &opts)
            .map_err(|e| CliError::numerical(format!("offset {offset} nm failed: {e}")))?;
        let m = &run.metrics;
        println!(
            "sweep {} {offset:+} nm: resonance {:?} nm, converged {}",
            param.name(),
            m.resonance_nm,
            run.result.converged
        );
        rows.push(SweepRow {
            param: param.name(),
            offset_nm: offset,
            resonance_nm: m.resonance_nm,
            purcell: m.purcell_at_resonance(),
            c_na07: m.at_resonance(&m.c_na07_cost),
        });
    }

    if !offsets.is_empty() && rows.is_empty() {
        return Err(CliError::usage("all sweep offsets produced invalid designs"));
    }

    write_sweep_csv(&rows, &out.path("sweep.csv"))?;
    out.track("sweep.csv")?;
    out.write_manifest(serde_json::json!({
        "command": "sweep",
        "param": param.name(),
        "offsets_nm": offsets,
        "mesh": mesh.to_string(),
        "rows": rows.len(),
        "skipped": skipped,
    }))?;
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &std::path::Path) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path)
            .map_err(|e| CliError::numerical(format!("cannot write sweep.csv: {e}")))?,
    );
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
    writeln!(w, "param,offset_nm,resonance_nm,purcell,c_na_0.7").map_err(io_err)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.param,
            r.offset_nm,
            fmt(r.resonance_nm),
            fmt(r.purcell),
            fmt(r.c_na07)
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::numerical(format!("sweep.csv write error: {e}"))
}
