//! Reference tables for the Wiener, OU and Feller models, and their recomputation.
//!
//! Odd tables hold `t1` and `E(Tr)`, even tables `V` and `V(Tr)`; tables are
//! paired (1,2), (3,4), (5,6) and share parameters within a pair. All use
//! `nu = -80`, `S = -50`, `x = -70`.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::diffusion::{BoundaryClass, ElasticThreshold};
use crate::error::{Error, Result};
use crate::models::{FellerParams, Model, OuParams, WienerParams};
use crate::moments::fpt_basis;
use crate::report::ComparisonReport;

pub const TABLE_NU: f64 = -80.0;
pub const TABLE_S: f64 = -50.0;
pub const TABLE_X: f64 = -70.0;
pub const TABLE_REFLECTING_PROBABILITIES: [f64; 4] = [0.1, 0.5, 0.9, 0.99];
/// Tolerance handed to the quadrature when recomputing cells.
pub const TABLE_QUAD_TOL: f64 = 1e-10;
/// Required agreement between the series means and the recursion.
pub const ORACLE_TOL: f64 = 1e-6;

const EMBEDDED: [&str; 6] = [
    include_str!("../data/table1.csv"),
    include_str!("../data/table2.csv"),
    include_str!("../data/table3.csv"),
    include_str!("../data/table4.csv"),
    include_str!("../data/table5.csv"),
    include_str!("../data/table6.csv"),
];
const CHECKSUMS: &str = include_str!("../data/SHA256SUMS");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Mean,
    Variance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    /// `sigma2` for Wiener/OU, `xi` for Feller.
    pub param: f64,
    pub first: f64,
    pub by_reflecting_probability: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub id: u8,
    pub param_name: String,
    pub reflecting_probabilities: Vec<f64>,
    pub rows: Vec<ReferenceRow>,
    pub checksum: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_id(id: u8) -> Result<()> {
    if (1..=6).contains(&id) {
        Ok(())
    } else {
        Err(Error::Reference(format!("no table {id}; tables are 1-6")))
    }
}

pub fn quantity(id: u8) -> Quantity {
    if id % 2 == 1 {
        Quantity::Mean
    } else {
        Quantity::Variance
    }
}

/// Raw CSV text shipped with the crate.
pub fn embedded_csv(id: u8) -> Result<&'static str> {
    check_id(id)?;
    Ok(EMBEDDED[id as usize - 1])
}

/// Checksum recorded for the shipped copy of table `id`.
pub fn expected_checksum(id: u8) -> Result<String> {
    check_id(id)?;
    let name = format!("table{id}.csv");
    CHECKSUMS
        .lines()
        .find_map(|l| {
            let (sum, file) = l.split_once(char::is_whitespace)?;
            (file.trim() == name).then(|| sum.to_string())
        })
        .ok_or_else(|| Error::Reference(format!("no checksum for {name}")))
}

/// Loads a shipped table after verifying its checksum.
pub fn load_reference(id: u8) -> Result<ReferenceTable> {
    let text = embedded_csv(id)?;
    let want = expected_checksum(id)?;
    let got = sha256_hex(text.as_bytes());
    if got != want {
        return Err(Error::Reference(format!("table {id} checksum mismatch: {got} != {want}")));
    }
    parse_reference(text)
}

/// Parses the CSV layout: `# table=N` comment, header `param,first,p_R...`,
/// then one row per parameter value.
pub fn parse_reference(text: &str) -> Result<ReferenceTable> {
    let bad = |line: usize, msg: String| Error::Reference(format!("line {line}: {msg}"));
    let mut id = None;
    let mut header: Option<(String, Vec<f64>)> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("table=") {
                let n: u8 = v.trim().parse().map_err(|_| bad(lineno, format!("bad table id '{v}'")))?;
                check_id(n)?;
                id = Some(n);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => {
                if fields.len() < 3 {
                    return Err(bad(lineno, "header needs a parameter, a first column and p_R columns".into()));
                }
                let ps = fields[2..]
                    .iter()
                    .map(|f| {
                        f.parse::<f64>()
                            .ok()
                            .filter(|p| (0.0..1.0).contains(p))
                            .ok_or_else(|| bad(lineno, format!("bad p_R column '{f}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                header = Some((fields[0].to_string(), ps));
            }
            Some((_, ps)) => {
                if fields.len() != ps.len() + 2 {
                    return Err(bad(lineno, format!("expected {} fields, found {}", ps.len() + 2, fields.len())));
                }
                let nums = fields
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| bad(lineno, format!("bad number '{f}'"))))
                    .collect::<Result<Vec<_>>>()?;
                rows.push(ReferenceRow {
                    param: nums[0],
                    first: nums[1],
                    by_reflecting_probability: nums[2..].to_vec(),
                });
            }
        }
    }
    let id = id.ok_or_else(|| Error::Reference("missing '# table=N' line".into()))?;
    let (param_name, reflecting_probabilities) = header.ok_or_else(|| Error::Reference("missing header".into()))?;
    if rows.is_empty() {
        return Err(Error::Reference("no data rows".into()));
    }
    Ok(ReferenceTable {
        id,
        param_name,
        reflecting_probabilities,
        rows,
        checksum: sha256_hex(text.as_bytes()),
    })
}

/// The model behind one row of table `id`.
pub fn table_model(id: u8, param: f64) -> Result<Model> {
    check_id(id)?;
    Ok(match id {
        1 | 2 => Model::Wiener(WienerParams::new(-0.5, param, TABLE_NU)?),
        3 | 4 => Model::Ou(OuParams::new(5.0, -70.0, param, TABLE_NU)?),
        _ => Model::Feller(FellerParams::new(5.0, -70.0, param, TABLE_NU)?),
    })
}

/// Recomputed cells of one row: the first column, then one per `p_R`, and
/// the series mean for odd tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputedRow {
    pub first: f64,
    pub by_reflecting_probability: Vec<f64>,
    pub oracle: Option<f64>,
}

pub fn compute_row(id: u8, param: f64, reflecting_probabilities: &[f64]) -> Result<ComputedRow> {
    let model = table_model(id, param)?;
    let basis = fpt_basis(&model.spec(), TABLE_S, TABLE_X, TABLE_QUAD_TOL)?;
    let ratios = reflecting_probabilities
        .iter()
        .map(|p| ElasticThreshold::from_reflecting_probability(TABLE_S, *p).map(|t| t.ratio()))
        .collect::<Result<Vec<_>>>()?;
    Ok(match quantity(id) {
        Quantity::Mean => ComputedRow {
            first: basis.t1,
            by_reflecting_probability: ratios.iter().map(|r| basis.refractory_mean(*r)).collect(),
            oracle: Some(model.fpt_mean(TABLE_S, TABLE_X)?),
        },
        Quantity::Variance => ComputedRow {
            first: basis.fpt_variance(),
            by_reflecting_probability: ratios.iter().map(|r| basis.refractory_variance(*r)).collect(),
            oracle: None,
        },
    })
}

fn fmt_param(v: f64) -> String {
    format!("{v}")
}

/// Recomputes every cell of `reference` and compares at `threshold`.
pub fn compare_table(reference: &ReferenceTable, threshold: f64) -> Result<ComparisonReport> {
    let id = reference.id;
    let computed = reference
        .rows
        .par_iter()
        .map(|row| compute_row(id, row.param, &reference.reflecting_probabilities))
        .collect::<Result<Vec<_>>>()?;

    let first_name = match quantity(id) {
        Quantity::Mean => "t1",
        Quantity::Variance => "V",
    };
    let tr_name = match quantity(id) {
        Quantity::Mean => "E(Tr)",
        Quantity::Variance => "V(Tr)",
    };
    let mut report = ComparisonReport::new(format!("table {id}"), threshold);
    let mut regular_rows = Vec::new();
    for (row, got) in reference.rows.iter().zip(&computed) {
        let p = fmt_param(row.param);
        let regular = matches!(table_model(id, row.param)?, Model::Feller(f) if f.lower_class() == BoundaryClass::Reflecting);
        if regular {
            regular_rows.push(p.clone());
        }
        let note = regular.then(|| "regular lower boundary; reflection imposed".to_string());
        let r = report.push(format!("{}={p}/{first_name}", reference.param_name), got.first, row.first);
        r.oracle = got.oracle;
        r.note = note.clone();
        if let Some(o) = got.oracle {
            if crate::report::relative_error(o, got.first) > ORACLE_TOL {
                r.note = Some(format!("series mean {o:e} disagrees with recursion"));
            }
        }
        for ((pr, want), have) in reference
            .reflecting_probabilities
            .iter()
            .zip(&row.by_reflecting_probability)
            .zip(&got.by_reflecting_probability)
        {
            let r = report.push(format!("{}={p}/{tr_name}[p_R={pr}]", reference.param_name), *have, *want);
            r.note = note.clone();
        }
    }
    if !regular_rows.is_empty() {
        report.notes.push(format!(
            "{}={} have a regular lower boundary; reflection at nu is assumed",
            reference.param_name,
            regular_rows.join(";")
        ));
    }
    if id == 4 {
        report
            .notes
            .push("table 4 uses the parameters of table 3 (its caption refers to itself)".into());
    }
    if let Ok(want) = expected_checksum(id) {
        if want != reference.checksum {
            report
                .notes
                .push(format!("reference differs from the shipped table {id} (sha256 {})", reference.checksum));
        }
    }
    Ok(report)
}

/// Recomputes a shipped table.
pub fn table_report(id: u8, threshold: f64) -> Result<ComparisonReport> {
    compare_table(&load_reference(id)?, threshold)
}
