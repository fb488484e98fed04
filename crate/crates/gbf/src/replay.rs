//! Witness replay: re-simulate, re-monitor, compare with the record.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gbf_core::sim::simulate;
use gbf_core::stl::{parse_formula, robustness, RobustnessCertificate};
use gbf_core::{TimeGrid, Trajectory};

use crate::io;
use crate::witness::{read_witness, write_trajectory};

/// Largest accepted gap between recorded and replayed robustness.
pub const REPLAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub recorded: f64,
    pub replayed: RobustnessCertificate,
    pub trajectory: Trajectory,
    /// Robustness on the refined grid and its refinement factor.
    pub refined: Option<(usize, f64)>,
}

impl ReplayReport {
    pub fn gap(&self) -> f64 {
        (self.replayed.robustness - self.recorded).abs()
    }

    pub fn reproduced(&self) -> bool {
        self.gap() <= REPLAY_TOL
    }
}

/// Replays the witness in `dir`, writing `replay_trajectory.csv` and
/// `plot.csv` to `out`. With `refine = Some(r)` the input is also simulated
/// and monitored on a grid `r` times finer.
pub fn replay(dir: &Path, out: &Path, refine: Option<usize>) -> Result<ReplayReport> {
    let wit = read_witness(dir)?;
    let model = wit.meta.source()?.load()?;
    let grid = model.grid()?;
    if *wit.w.grid() != grid {
        bail!(
            "witness input has {} nodes on [0, {}], the model grid {} on [0, {}]",
            wit.w.grid().len(),
            wit.w.grid().horizon(),
            grid.len(),
            grid.horizon()
        );
    }
    let phi = parse_formula(&wit.meta.spec, &model.variables).context("parsing recorded requirement")?;
    let traj = simulate(&model, &wit.x0, &wit.w, grid)?.trajectory;
    let cert = robustness(&phi, &traj)?;

    let refined = match refine {
        None | Some(1) => None,
        Some(0) => bail!("refinement factor must be positive"),
        Some(r) => {
            let fine = TimeGrid::with_len(grid.horizon(), (grid.len() - 1) * r + 1)?;
            let w = wit.w.resample(fine)?;
            let tr = simulate(&model, &wit.x0, &w, fine)?.trajectory;
            Some((r, robustness(&phi, &tr)?.robustness))
        }
    };

    std::fs::create_dir_all(out)?;
    write_trajectory(&out.join("replay_trajectory.csv"), &model, &traj)?;
    let names = io::plant_names(&model.variables, traj.plant_dim());
    let mut header = vec!["t".to_string()];
    header.extend((1..=wit.w.dim()).map(|i| format!("w{i}")));
    header.extend(names);
    header.push("critical".into());
    io::write_table(
        &out.join("plot.csv"),
        &header,
        (0..grid.len()).map(|k| {
            let mut row = vec![grid.node(k)];
            row.extend_from_slice(wit.w.node(k));
            row.extend_from_slice(traj.plant(k));
            row.push(f64::from(u8::from(k == cert.critical_index)));
            row
        }),
    )?;

    Ok(ReplayReport {
        recorded: wit.meta.robustness,
        replayed: cert,
        trajectory: traj,
        refined,
    })
}
