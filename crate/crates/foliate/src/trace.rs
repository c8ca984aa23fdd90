//! CSV output for sampled trajectories.

use std::io::Write;

use foliate_core::geodesic::{GeodesicTrace, RiccatiTrace};

use crate::error::CliResult;

/// `t, x0.., v0.., speed_sq` per node.
pub fn write_geodesic<W: Write>(tr: &GeodesicTrace, g_speed: &[f64], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = tr.points.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..d).map(|i| format!("v{i}")));
    header.push("speed".into());
    w.write_record(&header)?;
    for k in 0..tr.len() {
        let mut row = vec![tr.times[k].to_string()];
        row.extend(tr.points[k].iter().map(f64::to_string));
        row.extend(tr.velocities[k].iter().map(f64::to_string));
        row.push(g_speed.get(k).copied().unwrap_or(f64::NAN).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t, b_00, b_01, ..` (row-major) per node.
pub fn write_riccati<W: Write>(tr: &RiccatiTrace, out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = tr.b.first().map_or(0, |m| m.nrows());
    let mut header = vec!["t".to_string()];
    for i in 0..n {
        for j in 0..n {
            header.push(format!("b{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for (t, b) in tr.times.iter().zip(&tr.b) {
        let mut row = vec![t.to_string()];
        for i in 0..n {
            for j in 0..n {
                row.push(b[(i, j)].to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
