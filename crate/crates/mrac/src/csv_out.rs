//! CSV emission for trajectories, Monte Carlo statistics and the gain-region
//! grid. Floats are written in Rust's shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Write};

use crate::error::{Error, Result};
use crate::gain_region::RegionGrid;
use crate::sim::{StepRecord, TrialStats};

/// Trajectory schema:
/// `k, x_p0.., x_m0.., e_norm, eps_norm, u0.., N` plus, when certificates
/// were recorded, `V, dV, bound, allowable_flag`.
pub fn write_trajectory_csv<W: Write>(
    mut out: W,
    records: &[StepRecord],
    state_dim: usize,
    input_dim: usize,
    with_cert: bool,
) -> std::io::Result<()> {
    let mut header = String::from("k");
    for i in 0..state_dim {
        header.push_str(&format!(",x_p{i}"));
    }
    for i in 0..state_dim {
        header.push_str(&format!(",x_m{i}"));
    }
    header.push_str(",e_norm,eps_norm");
    for i in 0..input_dim {
        header.push_str(&format!(",u{i}"));
    }
    header.push_str(",N");
    if with_cert {
        header.push_str(",V,dV,bound,allowable_flag");
    }
    writeln!(out, "{header}")?;

    for rec in records {
        let mut line = format!("{}", rec.k);
        for v in rec.x_p.iter().chain(rec.x_m.iter()) {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{},{}", rec.e.norm(), rec.eps.norm()));
        for v in rec.u.iter() {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{}", rec.n));
        if with_cert {
            match &rec.cert {
                Some(c) => line.push_str(&format!(
                    ",{},{},{},{}",
                    c.v,
                    c.dv,
                    c.bound,
                    u8::from(!c.violated)
                )),
                None => line.push_str(",,,,"),
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Statistics schema: `k, e_mean, e_p05, e_p25, e_p75, e_p95, eps_mean,
/// eps_p05, eps_p25, eps_p75, eps_p95, diverged_count` (the count is the
/// run total, repeated per row to keep the file self-contained).
pub fn write_stats_csv<W: Write>(mut out: W, stats: &TrialStats) -> std::io::Result<()> {
    writeln!(
        out,
        "k,e_mean,e_p05,e_p25,e_p75,e_p95,eps_mean,eps_p05,eps_p25,eps_p75,eps_p95,diverged_count"
    )?;
    let diverged = stats.diverged_count();
    for k in 0..stats.steps() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            k,
            stats.e.mean[k],
            stats.e.p05[k],
            stats.e.p25[k],
            stats.e.p75[k],
            stats.e.p95[k],
            stats.eps.mean[k],
            stats.eps.p05[k],
            stats.eps.p25[k],
            stats.eps.p75[k],
            stats.eps.p95[k],
            diverged,
        )?;
    }
    Ok(())
}

fn create(path: &str) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_string(),
            source: e,
        })
}

fn finish(path: &str, r: std::io::Result<()>, mut w: BufWriter<File>) -> Result<()> {
    r.and_then(|()| w.flush()).map_err(|e| Error::Io {
        path: path.to_string(),
        source: e,
    })
}

pub fn emit_trajectory_csv(
    path: &str,
    records: &[StepRecord],
    state_dim: usize,
    input_dim: usize,
    with_cert: bool,
) -> Result<()> {
    let mut w = create(path)?;
    let r = write_trajectory_csv(&mut w, records, state_dim, input_dim, with_cert);
    finish(path, r, w)
}

pub fn emit_stats_csv(path: &str, stats: &TrialStats) -> Result<()> {
    let mut w = create(path)?;
    let r = write_stats_csv(&mut w, stats);
    finish(path, r, w)
}

pub fn emit_region_csv(path: &str, grid: &RegionGrid) -> Result<()> {
    let mut w = create(path)?;
    let r = grid.write_csv(&mut w);
    finish(path, r, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_records_give_header_only() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[], 2, 1, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "k,x_p0,x_p1,x_m0,x_m1,e_norm,eps_norm,u0,N\n"
        );
    }

    #[test]
    fn single_record_gives_two_lines_with_matching_column_count() {
        use nalgebra::DVector;
        let rec = crate::sim::StepRecord {
            k: 0,
            x_p: DVector::from_vec(vec![1.0, 2.0]),
            x_m: DVector::zeros(2),
            e: DVector::from_vec(vec![1.0, 2.0]),
            eps: DVector::from_vec(vec![0.5]),
            u: DVector::from_vec(vec![-0.25]),
            phi: DVector::from_vec(vec![1.0, 2.0]),
            n: 5.0,
            cert: None,
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[rec], 2, 1, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0].split(',').count(),
            lines[1].split(',').count()
        );
    }

    #[test]
    fn floats_round_trip_through_display() {
        let v = 0.1 + 0.2;
        let printed = format!("{v}");
        let back: f64 = printed.parse().unwrap();
        assert_eq!(v, back);
    }
}
