//! Result files: reach JSON and plot-ready CSV.

use std::path::{Path, PathBuf};

use nnreach::reach::{compare_tightness, ReachResult};
use nnreach::systems::TrajectoryBatch;

use crate::CliError;

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(CliError::from)
}

/// `framework,t,lo1..lon,hi1..hin`: bounding-box corners per step.
pub fn write_boxes(path: &Path, results: &[&ReachResult]) -> Result<PathBuf, CliError> {
    let mut w = csv_writer(path)?;
    let n = results.first().map_or(0, |r| r.steps[0].polytope.dim());
    let mut header = vec!["framework".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("lo{i}")));
    header.extend((1..=n).map(|i| format!("hi{i}")));
    w.write_record(&header)?;
    for r in results {
        for s in &r.steps {
            let b = s.polytope.bounding_box()?;
            let mut rec = vec![r.framework.name().to_string(), s.t.to_string()];
            rec.extend(b.lo.iter().chain(&b.hi).map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Per-step widths and wall-clock per framework; with two results also
/// the smallest and largest support gap (second minus first).
pub fn write_comparison(path: &Path, results: &[&ReachResult]) -> Result<PathBuf, CliError> {
    let mut w = csv_writer(path)?;
    let n = results.first().map_or(0, |r| r.steps[0].polytope.dim());
    let mut header = vec!["t".to_string()];
    for r in results {
        let f = r.framework.name().replace('-', "_");
        header.extend((1..=n).map(|i| format!("{f}_w{i}")));
        header.push(format!("{f}_ms"));
    }
    let cmp = match results {
        [a, b] => Some(compare_tightness(b, a)?),
        _ => None,
    };
    if cmp.is_some() {
        header.extend(["gap_min".to_string(), "gap_max".to_string()]);
    }
    w.write_record(&header)?;
    let widths = results.iter().map(|r| r.widths()).collect::<Result<Vec<_>, _>>()?;
    for t in 0..results.first().map_or(0, |r| r.steps.len()) {
        let mut rec = vec![t.to_string()];
        for (r, wd) in results.iter().zip(&widths) {
            rec.extend(wd[t].iter().map(f64::to_string));
            rec.push(format!("{:.3}", r.steps[t].wall_ms));
        }
        if let Some(c) = &cmp {
            rec.push(c[t].min_gap().to_string());
            rec.push(c[t].max_gap().to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_trajectories(path: &Path, batch: &TrajectoryBatch) -> Result<PathBuf, CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    batch.write_csv(std::io::BufWriter::new(f))?;
    Ok(path.to_path_buf())
}
