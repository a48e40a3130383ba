//! CSV iterate traces.

use std::io::Write;
use std::path::Path;

use fracprox_core::epsg::TraceRecord;

pub const COLUMNS: [&str; 10] = [
    "n",
    "theta",
    "objective",
    "merit_F",
    "step_norm",
    "tau",
    "kappa",
    "mu",
    "residual",
    "elapsed_ms",
];

pub const ENHANCED_COLUMNS: [&str; 2] = ["active_count", "chosen_index"];

/// Writes `trace` as CSV. The two enhanced-solver columns are appended when
/// `enhanced` is set.
pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord], enhanced: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if enhanced {
        header.extend(ENHANCED_COLUMNS);
    }
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![
            r.n.to_string(),
            r.theta.to_string(),
            r.objective.to_string(),
            r.merit.to_string(),
            r.step_norm.to_string(),
            r.tau.to_string(),
            r.kappa.to_string(),
            r.mu.to_string(),
            r.residual.to_string(),
            r.elapsed_ms.to_string(),
        ];
        if enhanced {
            row.push(r.active_count.map(|v| v.to_string()).unwrap_or_default());
            row.push(r.chosen_index.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &[TraceRecord], enhanced: bool) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), trace, enhanced).map_err(std::io::Error::other)
}
