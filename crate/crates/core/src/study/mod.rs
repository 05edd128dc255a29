//! Manufactured problems, exact error norms, efficiency indices and study reports.

mod catalog;
mod norms;

pub use catalog::{self_check, ExactSolution, ExactValues, ProblemSpec};
pub use norms::{eoc, exact_error_norms, ErrorNorms};

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Square-root efficiency indices of one level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Efficiency {
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub m1_sh: Option<f64>,
    pub m2_sh: Option<f64>,
    pub eid: Option<f64>,
}

fn ratio(estimate2: Option<f64>, err: f64) -> Option<f64> {
    match estimate2 {
        Some(m) if err > 0.0 && err.is_finite() && m.is_finite() => Some(m.max(0.0).sqrt() / err),
        _ => None,
    }
}

/// `sqrt(M^I)/||grad e||`, `sqrt(M^II / C_gap)/||grad e||`, `sqrt(M^I_sh)/|||e|||_sh`,
/// `sqrt(M^II_sh)/|||e|||^II_sh` and `EId/|||e|||_L`.
pub fn efficiency_indices(norms: &ErrorNorms, est: &EstimateValues) -> Efficiency {
    Efficiency {
        m1: ratio(est.m1, norms.grad()),
        m2: ratio(est.m2.zip(est.c_gap).map(|(m, c)| m / c), norms.grad()),
        m1_sh: ratio(est.m1_sh, norms.sh()),
        m2_sh: ratio(est.m2_sh, norms.sh_ii()),
        eid: ratio(est.eid2, norms.l()),
    }
}

/// Estimator values of one level (squared bounds).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EstimateValues {
    pub m1: Option<f64>,
    pub m1_sh: Option<f64>,
    pub m2: Option<f64>,
    pub m2_sh: Option<f64>,
    pub eid2: Option<f64>,
    pub beta: Option<f64>,
    pub beta_ii: Option<f64>,
    pub alpha: Option<f64>,
    pub c_gap: Option<f64>,
}

/// Wall-clock seconds of one level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TimingLedger {
    pub t_as_u: f64,
    pub t_sol_u: f64,
    pub t_as_y: f64,
    pub t_sol_y: f64,
    pub t_as_w: f64,
    pub t_sol_w: f64,
    pub t_ew_norms: f64,
    pub t_ew_estimates: f64,
}

impl TimingLedger {
    /// `(t_sol(u) + t_as(u)) / (t_sol(y) + t_as(y) + t_sol(w) + t_as(w))`.
    pub fn ratio(&self) -> Option<f64> {
        let den = self.t_sol_y + self.t_as_y + self.t_sol_w + self.t_as_w;
        (den > 0.0).then(|| (self.t_sol_u + self.t_as_u) / den)
    }
}

/// One refinement level.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StudyRow {
    pub level: usize,
    pub elements: usize,
    pub dofs_u: usize,
    pub dofs_y: usize,
    pub dofs_w: usize,
    pub h: f64,
    pub delta: f64,
    pub norms: Option<ErrorNorms>,
    pub estimates: EstimateValues,
    pub efficiency: Efficiency,
    pub eoc_grad: Option<f64>,
    pub eoc_sh: Option<f64>,
    pub eoc_l: Option<f64>,
    pub marked: usize,
    pub timings: TimingLedger,
}

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 37] = [
    "level",
    "elements",
    "dofs_u",
    "dofs_y",
    "dofs_w",
    "h",
    "delta",
    "err_grad",
    "err_final",
    "err_energy",
    "err_sh",
    "err_l",
    "maj_i",
    "maj_i_sh",
    "maj_ii",
    "maj_ii_sh",
    "eid2",
    "ieff_maj_i",
    "ieff_maj_ii",
    "ieff_maj_i_sh",
    "ieff_maj_ii_sh",
    "ieff_eid",
    "eoc_grad",
    "eoc_sh",
    "eoc_l",
    "beta",
    "beta_ii",
    "alpha",
    "c_gap",
    "marked",
    "t_as_u",
    "t_sol_u",
    "t_as_y",
    "t_sol_y",
    "t_as_w",
    "t_sol_w",
    "t_ratio",
];

/// Columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 7] = ["t_as_u", "t_sol_u", "t_as_y", "t_sol_y", "t_as_w", "t_sol_w", "t_ratio"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

impl StudyRow {
    fn csv_record(&self) -> Vec<String> {
        let n = self.norms.as_ref();
        let e = &self.estimates;
        let f = &self.efficiency;
        let t = &self.timings;
        vec![
            self.level.to_string(),
            self.elements.to_string(),
            self.dofs_u.to_string(),
            self.dofs_y.to_string(),
            self.dofs_w.to_string(),
            format!("{:.10e}", self.h),
            format!("{:.10e}", self.delta),
            opt(n.map(|n| n.grad())),
            opt(n.map(|n| n.final_l2())),
            opt(n.map(|n| n.energy())),
            opt(n.map(|n| n.sh())),
            opt(n.map(|n| n.l())),
            opt(e.m1),
            opt(e.m1_sh),
            opt(e.m2),
            opt(e.m2_sh),
            opt(e.eid2),
            opt(f.m1),
            opt(f.m2),
            opt(f.m1_sh),
            opt(f.m2_sh),
            opt(f.eid),
            opt(self.eoc_grad),
            opt(self.eoc_sh),
            opt(self.eoc_l),
            opt(e.beta),
            opt(e.beta_ii),
            opt(e.alpha),
            opt(e.c_gap),
            self.marked.to_string(),
            format!("{:.6e}", t.t_as_u),
            format!("{:.6e}", t.t_sol_u),
            format!("{:.6e}", t.t_as_y),
            format!("{:.6e}", t.t_sol_y),
            format!("{:.6e}", t.t_as_w),
            format!("{:.6e}", t.t_sol_w),
            opt(t.ratio()),
        ]
    }
}

/// All levels of one study.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StudyReport {
    pub problem: String,
    pub strategy: String,
    pub rows: Vec<StudyRow>,
}

fn fmt_cell(v: Option<f64>, sci: bool) -> String {
    match v {
        Some(x) if sci => format!("{x:.4e}"),
        Some(x) => format!("{x:.2}"),
        None => "-".into(),
    }
}

impl StudyReport {
    /// Fills the e.o.c. columns from the stored errors.
    pub fn compute_eoc(&mut self) {
        let col = |f: fn(&ErrorNorms) -> f64| -> Vec<f64> {
            self.rows.iter().map(|r| r.norms.as_ref().map(f).unwrap_or(f64::NAN)).collect()
        };
        let g = eoc(&col(ErrorNorms::grad));
        let s = eoc(&col(ErrorNorms::sh));
        let l = eoc(&col(ErrorNorms::l));
        for (k, row) in self.rows.iter_mut().enumerate() {
            row.eoc_grad = g[k];
            row.eoc_sh = s[k];
            row.eoc_l = l[k];
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record(CSV_COLUMNS).map_err(io)?;
        for row in &self.rows {
            wr.write_record(row.csv_record()).map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    /// Aligned markdown table with the columns of the efficiency tables.
    pub fn to_markdown(&self) -> String {
        let header = [
            "# ref.",
            "dofs(u_h)",
            "dofs(y_h)",
            "dofs(w_h)",
            "‖∇e‖",
            "I_eff(M^I)",
            "I_eff(M^II)",
            "|||e|||_sh",
            "I_eff(M^I_sh)",
            "|||e|||_L",
            "I_eff(EId)",
            "e.o.c.(sh)",
            "e.o.c.(L)",
        ];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let n = r.norms.as_ref();
                vec![
                    r.level.to_string(),
                    r.dofs_u.to_string(),
                    r.dofs_y.to_string(),
                    r.dofs_w.to_string(),
                    fmt_cell(n.map(|n| n.grad()), true),
                    fmt_cell(r.efficiency.m1, false),
                    fmt_cell(r.efficiency.m2, false),
                    fmt_cell(n.map(|n| n.sh()), true),
                    fmt_cell(r.efficiency.m1_sh, false),
                    fmt_cell(n.map(|n| n.l()), true),
                    fmt_cell(r.efficiency.eid, false),
                    fmt_cell(r.eoc_sh, false),
                    fmt_cell(r.eoc_l, false),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0))
            .collect();
        let line = |cells: Vec<String>| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(s, &w)| format!("{s:>w$}")).collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut out = format!("{} ({})\n\n", self.problem, self.strategy);
        out += &line(header.iter().map(|s| s.to_string()).collect());
        out += &format!("|{}|\n", widths.iter().map(|w| format!("{}:", "-".repeat(w + 1))).collect::<Vec<_>>().join("|"));
        for r in rows {
            out += &line(r);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}
