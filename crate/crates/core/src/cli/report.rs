//! CSV and `rate.txt` rendering. Floats are written with 17 significant
//! digits in scientific notation so reruns compare byte for byte.

use std::fmt::Write as _;

use crate::analysis::{BlowupReport, ErrorTable, MomentTable, RateFit};
use crate::schemes::{AuditReport, SchemeKind};

pub const CONVERGE_HEADER: &str = "level,n,dt,lp_error,paths,p,stderr";
pub const MOMENTS_HEADER: &str = "level,t_index,moment_q,overflows";
pub const AUDIT_HEADER: &str = "n,max_shrink,growth_constant,max_consistency,samples";
pub const BLOWUP_HEADER: &str = "scheme,level,t_index,moment_q,overflows";

pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub struct CsvReport {
    header: String,
    rows: Vec<String>,
}

impl CsvReport {
    pub fn new(header: &str) -> Self {
        Self { header: header.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, fields: &[String]) {
        self.rows.push(fields.join(","));
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(&self.header);
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn converge_csv(table: &ErrorTable) -> CsvReport {
    let mut csv = CsvReport::new(CONVERGE_HEADER);
    for r in &table.rows {
        csv.push(&[r.level.to_string(), r.n.to_string(), num(r.dt), num(r.lp_error), r.paths.to_string(), num(r.p), num(r.stderr)]);
    }
    csv
}

pub fn moments_csv(table: &MomentTable) -> CsvReport {
    let mut csv = CsvReport::new(MOMENTS_HEADER);
    push_moment_rows(&mut csv, None, table);
    csv
}

fn push_moment_rows(csv: &mut CsvReport, scheme: Option<SchemeKind>, table: &MomentTable) {
    for &(level, overflows) in &table.overflows {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.level == level).collect();
        let prefix: Vec<String> = scheme.map(|s| vec![s.name().to_string()]).unwrap_or_default();
        if rows.is_empty() {
            // every path overflowed; keep the level visible
            let mut f = prefix.clone();
            f.extend([level.to_string(), "0".into(), num(f64::NAN), overflows.to_string()]);
            csv.push(&f);
        }
        for r in rows {
            let mut f = prefix.clone();
            f.extend([r.level.to_string(), r.t_index.to_string(), num(r.moment), overflows.to_string()]);
            csv.push(&f);
        }
    }
}

pub fn blowup_csv(report: &BlowupReport) -> CsvReport {
    let mut csv = CsvReport::new(BLOWUP_HEADER);
    push_moment_rows(&mut csv, Some(SchemeKind::EulerMaruyama), &report.untamed);
    push_moment_rows(&mut csv, Some(SchemeKind::TamedEuler), &report.tamed);
    csv
}

pub fn audit_csv(report: &AuditReport) -> CsvReport {
    let mut csv = CsvReport::new(AUDIT_HEADER);
    for r in &report.rows {
        csv.push(&[r.n.to_string(), num(r.max_shrink), num(r.growth_constant), num(r.max_consistency), r.samples.to_string()]);
    }
    csv
}

pub fn simulate_header(dim: usize) -> String {
    let mut h = String::from("path,t_index,t");
    for i in 0..dim {
        let _ = write!(h, ",x{i}");
    }
    h
}

pub fn rate_txt(fit: &RateFit) -> String {
    format!("slope={}\nintercept={}\nr_squared={}\n", num(fit.slope), num(fit.intercept), num(fit.r_squared))
}
