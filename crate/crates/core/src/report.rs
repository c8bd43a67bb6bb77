//! Number formatting and comparison reports.

use std::fmt::Write as _;

/// Formats `v` with 7 significant figures as `m.mmmmmmE±d`, e.g. `3.073451E+2`.
pub fn format_sig7(v: f64) -> String {
    if v == 0.0 {
        return "0.000000E+0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    // `{:.6e}` already rounds to 7 significant figures
    let s = format!("{v:.6e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}E{sign}{}", exp.abs())
}

/// Full-precision decimal form that round-trips through `f64` parsing.
pub fn format_full(v: f64) -> String {
    let s = format!("{v:e}");
    match s.split_once('e') {
        Some((m, e)) if !e.starts_with('-') => format!("{m}e+{e}"),
        _ => s,
    }
}

/// `|computed - reference| / |reference|`; absolute error if the reference is 0.
pub fn relative_error(computed: f64, reference: f64) -> f64 {
    let d = (computed - reference).abs();
    if reference == 0.0 {
        d
    } else {
        d / reference.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub cell: String,
    pub computed: f64,
    pub reference: f64,
    pub rel_error: f64,
    pub pass: bool,
    /// Independent closed-form or series value, where one exists.
    pub oracle: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub title: String,
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Text,
}

impl std::str::FromStr for OutputFormat {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "text" => Ok(OutputFormat::Text),
            other => Err(crate::Error::Config(format!("unknown format '{other}' (csv or text)"))),
        }
    }
}

impl ComparisonReport {
    pub fn new(title: impl Into<String>, threshold: f64) -> Self {
        Self {
            title: title.into(),
            threshold,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, cell: impl Into<String>, computed: f64, reference: f64) -> &mut ComparisonRow {
        let rel_error = relative_error(computed, reference);
        self.rows.push(ComparisonRow {
            cell: cell.into(),
            computed,
            reference,
            rel_error,
            pass: rel_error <= self.threshold,
            oracle: None,
            note: None,
        });
        self.rows.last_mut().expect("just pushed")
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }

    pub fn render(&self, format: OutputFormat) -> String {
        let mut out = String::new();
        match format {
            OutputFormat::Csv => {
                out.push_str("cell,computed,computed_7sf,reference,rel_error,pass,oracle,note\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.cell,
                        format_full(r.computed),
                        format_sig7(r.computed),
                        format_sig7(r.reference),
                        format_full(r.rel_error),
                        if r.pass { "pass" } else { "FAIL" },
                        r.oracle.map(format_full).unwrap_or_default(),
                        r.note.as_deref().unwrap_or("").replace(',', ";"),
                    );
                }
            }
            OutputFormat::Text => {
                let _ = writeln!(out, "{}  (threshold {:e})", self.title, self.threshold);
                let w = self.rows.iter().map(|r| r.cell.len()).max().unwrap_or(4).max(4);
                let _ = writeln!(
                    out,
                    "{:<w$}  {:>13}  {:>13}  {:>10}  {}",
                    "cell", "computed", "reference", "rel.err", "status"
                );
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{:<w$}  {:>13}  {:>13}  {:>10.3e}  {}{}",
                        r.cell,
                        format_sig7(r.computed),
                        format_sig7(r.reference),
                        r.rel_error,
                        if r.pass { "pass" } else { "FAIL" },
                        r.note.as_ref().map(|n| format!("  [{n}]")).unwrap_or_default(),
                    );
                }
                let _ = writeln!(
                    out,
                    "{} cells, {} failed, max rel.err {:.3e}",
                    self.rows.len(),
                    self.failures(),
                    self.max_rel_error()
                );
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "# note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig7_style() {
        assert_eq!(format_sig7(307.3451), "3.073451E+2");
        assert_eq!(format_sig7(0.1281821), "1.281821E-1");
        assert_eq!(format_sig7(9.901436e41), "9.901436E+41");
        assert_eq!(format_sig7(-2.5), "-2.500000E+0");
        assert_eq!(format_sig7(9.9999996), "1.000000E+1");
        assert_eq!(format_sig7(0.0), "0.000000E+0");
    }

    #[test]
    fn full_roundtrips() {
        for v in [307.345123456789, 1e-300, 6.02e23, -0.1] {
            assert_eq!(format_full(v).parse::<f64>().unwrap(), v);
        }
        assert!(format_full(1e5).contains("e+5"));
    }

    #[test]
    fn report_pass_fail() {
        let mut r = ComparisonReport::new("t", 1e-5);
        r.push("a", 1.000001, 1.0);
        assert!(r.passed());
        r.push("b", 1.1, 1.0);
        assert!(!r.passed());
        assert_eq!(r.failures(), 1);
        let csv = r.render(OutputFormat::Csv);
        assert_eq!(csv.lines().count(), 3);
        assert!(r.render(OutputFormat::Text).contains("FAIL"));
    }
}
