//! CSV artifacts.
//!
//! * `trace.csv`: `t,loss,regret,bonus_mass,est_error`, one row per episode.
//! * `heatmap_<t>_<n>.csv`: state mass at layer `n` after episode `t`, laid
//!   out as the grid for gridworld tasks and as one row otherwise.
//! * `plotdata_<name>.csv`: `t,mean,min,max,log_mean` across repetitions.
//!
//! Floats are written with 17 significant digits so parsing recovers them
//! exactly.

use std::fmt::Write as _;
use std::path::Path;

use omd_curl::gridworld::Layout;
use omd_curl::mdp::{state_marginal, Field};

use crate::error::HarnessError;

pub const TRACE_HEADER: &str = "t,loss,regret,bonus_mass,est_error";
pub const PLOT_HEADER: &str = "t,mean,min,max,log_mean";

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a string");
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Columns of a trace file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceColumns {
    pub loss: Vec<f64>,
    pub regret: Vec<f64>,
    pub bonus_mass: Vec<f64>,
    pub est_error: Vec<f64>,
}

impl TraceColumns {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(90 * (self.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            write!(out, "{}", i + 1).expect("writing to a string");
            for col in [&self.loss, &self.regret, &self.bonus_mass, &self.est_error] {
                out.push(',');
                num(&mut out, col[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        write_file(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let bad = |message: String| HarnessError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(TRACE_HEADER) {
            return Err(bad("missing trace header".into()));
        }
        let mut cols = TraceColumns::default();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("line {}: expected 5 fields", i + 2)));
            }
            if fields[0].parse::<usize>().ok() != Some(i + 1) {
                return Err(bad(format!("line {}: episode index out of sequence", i + 2)));
            }
            let mut vals = [0.0; 4];
            for (v, f) in vals.iter_mut().zip(&fields[1..]) {
                *v = f.parse().map_err(|_| bad(format!("line {}: bad number {f}", i + 2)))?;
            }
            cols.loss.push(vals[0]);
            cols.regret.push(vals[1]);
            cols.bonus_mass.push(vals[2]);
            cols.est_error.push(vals[3]);
        }
        Ok(cols)
    }
}

/// State mass at layer `n`, shaped as the grid when a layout is given.
pub fn heatmap_csv(mu: &Field, n: usize, layout: Option<&Layout>) -> Result<String, HarnessError> {
    let mass = state_marginal(mu, n)?;
    let width = layout.map_or(mass.len(), |l| l.side());
    let mut out = String::new();
    for row in mass.chunks(width) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            num(&mut out, *v);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_heatmap(path: &Path, mu: &Field, n: usize, layout: Option<&Layout>) -> Result<(), HarnessError> {
    write_file(path, &heatmap_csv(mu, n, layout)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `ln(mean)`, NaN for nonpositive means.
    pub log_mean: f64,
}

/// Per-episode mean, min and max across equally long series.
pub fn emit_plot_data(series: &[&[f64]]) -> Result<Vec<AggregateRow>, HarnessError> {
    let first = series.first().ok_or_else(|| HarnessError::Config {
        field: "reps".into(),
        message: "no traces to aggregate".into(),
    })?;
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(HarnessError::Config {
            field: "episodes".into(),
            message: "traces of different lengths".into(),
        });
    }
    Ok((0..first.len())
        .map(|i| {
            let (mut sum, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
            for s in series {
                sum += s[i];
                min = min.min(s[i]);
                max = max.max(s[i]);
            }
            let mean = sum / series.len() as f64;
            AggregateRow {
                mean,
                min,
                max,
                log_mean: if mean > 0.0 { mean.ln() } else { f64::NAN },
            }
        })
        .collect())
}

pub fn plot_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::with_capacity(100 * (rows.len() + 1));
    out.push_str(PLOT_HEADER);
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        write!(out, "{}", i + 1).expect("writing to a string");
        for v in [r.mean, r.min, r.max, r.log_mean] {
            out.push(',');
            num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn write_plot_data(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    write_file(path, &plot_csv(rows))
}
