//! CSV files for signals, trajectories and vectors.
//!
//! Every file has a header row; time-indexed files start with a `t` column.
//! Numbers are written in shortest round-trip form, so reading a file back
//! gives the exact values that were written.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gbf_core::stl::Variables;
use gbf_core::{PiecewiseLinearSignal, TimeGrid, Trajectory};

/// Columns of a numeric CSV: header names and row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Uniform grid through the given node times, which must start at 0.
pub fn grid_from_times(times: &[f64]) -> Result<TimeGrid> {
    if times.len() < 2 {
        bail!("a time series needs at least two rows, got {}", times.len());
    }
    if times[0] != 0.0 {
        bail!("time must start at 0, found {}", times[0]);
    }
    let horizon = *times.last().unwrap();
    let grid = TimeGrid::with_len(horizon, times.len())?;
    let tol = 1e-9 * horizon.max(1.0);
    for (k, t) in times.iter().enumerate() {
        if (t - grid.node(k)).abs() > tol {
            bail!("time column is not uniformly spaced (row {}: {t} vs {})", k + 1, grid.node(k));
        }
    }
    Ok(grid)
}

/// Header names of plant coordinates: the model's alias when it has one.
pub fn plant_names(vars: &Variables, plant_dim: usize) -> Vec<String> {
    (0..plant_dim)
        .map(|i| {
            vars.aliases
                .iter()
                .find(|(_, j)| *j == i)
                .map(|(n, _)| n.clone())
                .unwrap_or_else(|| format!("x{}", i + 1))
        })
        .collect()
}

pub fn write_signal(path: &Path, sig: &PiecewiseLinearSignal) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=sig.dim()).map(|i| format!("w{i}")));
    let grid = *sig.grid();
    write_table(
        path,
        &header,
        (0..grid.len()).map(|k| {
            let mut row = vec![grid.node(k)];
            row.extend_from_slice(sig.node(k));
            row
        }),
    )
}

pub fn read_signal(path: &Path) -> Result<PiecewiseLinearSignal> {
    let t = read_table(path)?;
    let dim = t.header.len().saturating_sub(1);
    if dim == 0 {
        bail!("{}: signal needs a time column and at least one value column", path.display());
    }
    let grid = grid_from_times(&t.rows.iter().map(|r| r[0]).collect::<Vec<_>>())
        .with_context(|| format!("in {}", path.display()))?;
    let values = t.rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    Ok(PiecewiseLinearSignal::new(grid, dim, values)?)
}

/// Trajectory columns: `t`, the plant names, then `nn1..nnb`.
pub fn write_trajectory(path: &Path, traj: &Trajectory, plant: &[String]) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(plant.iter().cloned());
    header.extend((1..=traj.nn_dim()).map(|i| format!("nn{i}")));
    let grid = *traj.grid();
    write_table(
        path,
        &header,
        (0..traj.len()).map(|k| {
            let mut row = vec![grid.node(k)];
            row.extend_from_slice(traj.state(k));
            row
        }),
    )
}

/// Reads a trajectory; columns named `nn*` form the network block and must
/// come last. Returns the trajectory and the plant column names.
pub fn read_trajectory(path: &Path) -> Result<(Trajectory, Vec<String>)> {
    let t = read_table(path)?;
    if t.header.first().map(String::as_str) != Some("t") {
        bail!("{}: first column must be 't'", path.display());
    }
    let cols = &t.header[1..];
    let plant_dim = cols.iter().take_while(|c| !c.starts_with("nn")).count();
    if cols[plant_dim..].iter().any(|c| !c.starts_with("nn")) {
        bail!("{}: network columns must follow the plant columns", path.display());
    }
    if plant_dim == 0 {
        bail!("{}: no plant columns", path.display());
    }
    let grid = grid_from_times(&t.rows.iter().map(|r| r[0]).collect::<Vec<_>>())
        .with_context(|| format!("in {}", path.display()))?;
    let data = t.rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    let traj = Trajectory::new(grid, plant_dim, cols.len() - plant_dim, data)?;
    Ok((traj, cols[..plant_dim].to_vec()))
}

pub fn write_vector(path: &Path, prefix: &str, v: &[f64]) -> Result<()> {
    let header: Vec<String> = (1..=v.len()).map(|i| format!("{prefix}{i}")).collect();
    write_table(path, &header, [v.to_vec()])
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let t = read_table(path)?;
    match t.rows.as_slice() {
        [row] => Ok(row.clone()),
        _ => bail!("{}: expected exactly one data row, found {}", path.display(), t.rows.len()),
    }
}
