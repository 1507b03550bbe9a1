use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::baselines::{write_history_csv, HistoryRow};
use crate::error::Result;
use crate::sdesim::{MonteCarloCost, Trajectory};

use super::config::ExperimentConfig;

#[derive(Debug, Clone)]
pub struct MethodReport {
    pub name: String,
    pub cost: MonteCarloCost,
    /// Training plus evaluation time; the only nondeterministic field.
    pub wall_time_s: f64,
    /// Mean and standard deviation over runs of the instantaneous cost at each grid point.
    pub instantaneous_mean: Vec<f64>,
    pub instantaneous_stddev: Vec<f64>,
    /// Method-specific choices (tuned parameters, stop reasons).
    pub details: serde_json::Value,
    pub history: Option<Vec<HistoryRow>>,
    /// One trajectory per evaluation run.
    pub trajectories: Vec<Trajectory>,
}

impl MethodReport {
    pub fn mean_cost_per_user(&self) -> f64 {
        let n = self.trajectories.first().map_or(1, |t| t.num_users.max(1));
        self.cost.mean / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub config: ExperimentConfig,
    pub grid: Vec<f64>,
    /// Event-log hash per evaluation run, shared by all methods.
    pub event_hashes: Vec<u64>,
    pub methods: Vec<MethodReport>,
}

impl ComparisonReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let methods: Vec<_> = self
            .methods
            .iter()
            .map(|m| {
                json!({
                    "name": m.name,
                    "mean_total_cost": m.cost.mean,
                    "mean_cost_per_user": m.mean_cost_per_user(),
                    "variance": if m.cost.variance_defined { json!(m.cost.variance) } else { serde_json::Value::Null },
                    "variance_defined": m.cost.variance_defined,
                    "standard_error": m.cost.standard_error(),
                    "wall_time_s": m.wall_time_s,
                    "runs": m.cost.runs,
                    "details": m.details,
                })
            })
            .collect();
        json!({
            "seed": self.config.seed,
            "n_runs": self.config.n_runs,
            "num_users": self.config.model.num_users,
            "event_hashes": self.event_hashes.iter().map(|h| format!("{h:016x}")).collect::<Vec<_>>(),
            "methods": methods,
        })
    }

    fn export_users(&self) -> Vec<usize> {
        match &self.config.export_users {
            Some(u) => u.clone(),
            None => (0..self.config.model.num_users).collect(),
        }
    }

    /// CSV `t,method,mean,stddev`.
    pub fn write_instantaneous_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,method,mean,stddev")?;
        for m in &self.methods {
            for (k, t) in self.grid.iter().enumerate() {
                writeln!(
                    out,
                    "{t},{},{},{}",
                    m.name, m.instantaneous_mean[k], m.instantaneous_stddev[k]
                )?;
            }
        }
        Ok(())
    }

    /// CSV `t,user,method,x,u` of the first evaluation run.
    pub fn write_trajectories_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,user,method,x,u")?;
        let users = self.export_users();
        for m in &self.methods {
            let Some(tr) = m.trajectories.first() else {
                continue;
            };
            for (k, t) in tr.grid.iter().enumerate() {
                for &i in &users {
                    writeln!(
                        out,
                        "{t},{i},{},{},{}",
                        m.name,
                        tr.state(k)[i],
                        tr.control(k)[i]
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes `summary.json`, `config.echo.json` and, when methods ran,
/// `instantaneous_cost.csv`, `trajectories.csv` and `history_<method>.csv`
/// for the optimizers. Returns the paths written.
pub fn emit_reports(report: &ComparisonReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let summary = out_dir.join("summary.json");
    write_file(&summary, |w| {
        serde_json::to_writer_pretty(&mut *w, &report.summary_json())?;
        writeln!(w)?;
        Ok(())
    })?;
    written.push(summary);
    let echo = out_dir.join("config.echo.json");
    write_file(&echo, |w| {
        writeln!(w, "{}", report.config.to_json())?;
        Ok(())
    })?;
    written.push(echo);
    if report.methods.is_empty() {
        return Ok(written);
    }
    let inst = out_dir.join("instantaneous_cost.csv");
    write_file(&inst, |w| report.write_instantaneous_csv(w))?;
    written.push(inst);
    let traj = out_dir.join("trajectories.csv");
    write_file(&traj, |w| report.write_trajectories_csv(w))?;
    written.push(traj);
    for m in &report.methods {
        if let Some(h) = &m.history {
            let p = out_dir.join(format!("history_{}.csv", m.name));
            write_file(&p, |w| write_history_csv(h, w))?;
            written.push(p);
        }
    }
    Ok(written)
}
