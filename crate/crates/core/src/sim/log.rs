use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One logged sample of the augmented state and its barrier diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub g: Vec<f64>,
    pub rho: Vec<f64>,
    pub h: f64,
    pub delta_arm: f64,
    pub h_arm: f64,
    pub v: f64,
    pub min_dist: f64,
    pub feas_slack: f64,
    pub proj_residual: f64,
    pub grad_g_h_norm: f64,
}

/// Extremes over every governor evaluation of a run, RK4 stages included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageStats {
    pub evaluations: usize,
    pub min_feasibility_slack: f64,
    pub max_projection_residual: f64,
    /// Smallest `b_H` seen while `H ≥ 0`; nonnegative when `ρ = 0` is feasible.
    pub min_trivial_rhs: f64,
}

impl Default for StageStats {
    fn default() -> Self {
        Self {
            evaluations: 0,
            min_feasibility_slack: f64::INFINITY,
            max_projection_residual: f64::NEG_INFINITY,
            min_trivial_rhs: f64::INFINITY,
        }
    }
}

impl StageStats {
    pub fn observe(&mut self, slack: f64, residual: f64, h: f64, b: f64) {
        self.evaluations += 1;
        self.min_feasibility_slack = self.min_feasibility_slack.min(slack);
        self.max_projection_residual = self.max_projection_residual.max(residual);
        if h >= 0.0 {
            self.min_trivial_rhs = self.min_trivial_rhs.min(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub dof: usize,
    pub records: Vec<StepRecord>,
    /// Present for logs produced by a simulation, absent for logs read back from CSV.
    pub stage_stats: Option<StageStats>,
}

const TAIL_COLUMNS: [&str; 8] = [
    "H",
    "delta_arm",
    "h_arm",
    "V",
    "min_dist",
    "feas_slack",
    "proj_residual",
    "grad_g_H_norm",
];

/// CSV header for an `n`-joint log.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "qd", "g", "rho"] {
        cols.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    cols.extend(TAIL_COLUMNS.iter().map(|s| s.to_string()));
    cols
}

impl TrajectoryLog {
    pub fn new(dof: usize) -> Self {
        Self {
            dof,
            records: Vec::new(),
            stage_stats: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    /// Writes the log as CSV, every float with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", csv_header(self.dof).join(","))?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let fields = std::iter::once(r.t)
                .chain(r.q.iter().copied())
                .chain(r.qdot.iter().copied())
                .chain(r.g.iter().copied())
                .chain(r.rho.iter().copied())
                .chain([
                    r.h,
                    r.delta_arm,
                    r.h_arm,
                    r.v,
                    r.min_dist,
                    r.feas_slack,
                    r.proj_residual,
                    r.grad_g_h_norm,
                ]);
            for (i, x) in fields.enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{x:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Reads a log in the format produced by [`Self::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let cols = header.len();
        if cols < 13 || !(cols - 9).is_multiple_of(4) {
            return Err(Error::Parse(format!("unexpected column count {cols}")));
        }
        let n = (cols - 9) / 4;
        if header != csv_header(n) {
            return Err(Error::Parse("header does not match the trajectory layout".into()));
        }
        let mut log = TrajectoryLog::new(n);
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            if rec.len() != cols {
                return Err(Error::Parse(format!(
                    "row {}: {} fields, expected {cols}",
                    row + 1,
                    rec.len()
                )));
            }
            let vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            let block = |k: usize| vals[1 + k * n..1 + (k + 1) * n].to_vec();
            let tail = &vals[1 + 4 * n..];
            log.records.push(StepRecord {
                t: vals[0],
                q: block(0),
                qdot: block(1),
                g: block(2),
                rho: block(3),
                h: tail[0],
                delta_arm: tail[1],
                h_arm: tail[2],
                v: tail[3],
                min_dist: tail[4],
                feas_slack: tail[5],
                proj_residual: tail[6],
                grad_g_h_norm: tail[7],
            });
        }
        Ok(log)
    }
}
