//! Convergence-basin grid files written by `selfalign`.
//!
//! ```text
//! # comment
//! translations 0 0.075 0.15
//! rotations 0 0.1
//! mode pinhole
//! -9.1 -8.7 -3.2
//! -8.8 -7.9 -1.1
//! mode coupled
//! ...
//! ```
//!
//! One row per rotation value, one column per translation value. Cells hold
//! `log10` of the mean of the final rotation (rad) and translation (m) errors.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BasinPanel {
    pub mode: String,
    /// `values[r][t]`
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinGrid {
    pub translations: Vec<f64>,
    pub rotations: Vec<f64>,
    pub panels: Vec<BasinPanel>,
}

impl BasinGrid {
    pub fn panel(&self, mode: &str) -> Option<&BasinPanel> {
        self.panels.iter().find(|p| p.mode == mode)
    }

    pub fn format(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::from("# rows: rotation [rad], columns: translation [m], cells: log10 mean error\n");
        writeln!(out, "translations {}", join(&self.translations)).unwrap();
        writeln!(out, "rotations {}", join(&self.rotations)).unwrap();
        for p in &self.panels {
            writeln!(out, "mode {}", p.mode).unwrap();
            for row in &p.values {
                writeln!(out, "{}", join(row)).unwrap();
            }
        }
        out
    }
}

fn numbers(fields: &[&str], lineno: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::parse("basin grid", lineno, format!("invalid number `{f}`")))
        })
        .collect()
}

pub fn parse_basin_grid(text: &str) -> Result<BasinGrid> {
    let mut translations: Option<Vec<f64>> = None;
    let mut rotations: Option<Vec<f64>> = None;
    let mut panels: Vec<BasinPanel> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "translations" | "rotations" => {
                if !panels.is_empty() {
                    return Err(Error::parse("basin grid", lineno, "axis declared after a mode"));
                }
                let vals = numbers(&fields[1..], lineno)?;
                if vals.is_empty() {
                    return Err(Error::parse("basin grid", lineno, "empty axis"));
                }
                let slot = if fields[0] == "translations" {
                    &mut translations
                } else {
                    &mut rotations
                };
                if slot.replace(vals).is_some() {
                    return Err(Error::parse("basin grid", lineno, format!("duplicate `{}`", fields[0])));
                }
            }
            "mode" => {
                if fields.len() != 2 {
                    return Err(Error::parse("basin grid", lineno, "expected `mode <name>`"));
                }
                let (Some(_), Some(rot)) = (&translations, &rotations) else {
                    return Err(Error::parse("basin grid", lineno, "mode before both axes"));
                };
                if let Some(prev) = panels.last() {
                    if prev.values.len() != rot.len() {
                        return Err(Error::parse(
                            "basin grid",
                            lineno,
                            format!(
                                "mode `{}` has {} rows, expected {}",
                                prev.mode,
                                prev.values.len(),
                                rot.len()
                            ),
                        ));
                    }
                }
                if panels.iter().any(|p| p.mode == fields[1]) {
                    return Err(Error::parse(
                        "basin grid",
                        lineno,
                        format!("duplicate mode `{}`", fields[1]),
                    ));
                }
                panels.push(BasinPanel {
                    mode: fields[1].to_string(),
                    values: Vec::new(),
                });
            }
            _ => {
                let Some(panel) = panels.last_mut() else {
                    return Err(Error::parse("basin grid", lineno, "values before any mode"));
                };
                let row = numbers(&fields, lineno)?;
                let nt = translations.as_ref().map_or(0, Vec::len);
                if row.len() != nt {
                    return Err(Error::parse(
                        "basin grid",
                        lineno,
                        format!("row has {} values, expected {nt}", row.len()),
                    ));
                }
                if panel.values.len() == rotations.as_ref().map_or(0, Vec::len) {
                    return Err(Error::parse("basin grid", lineno, "too many rows"));
                }
                panel.values.push(row);
            }
        }
    }
    let (Some(translations), Some(rotations)) = (translations, rotations) else {
        return Err(Error::parse("basin grid", last_line, "missing axis declaration"));
    };
    if let Some(p) = panels.iter().find(|p| p.values.len() != rotations.len()) {
        return Err(Error::parse(
            "basin grid",
            last_line,
            format!(
                "mode `{}` has {} rows, expected {}",
                p.mode,
                p.values.len(),
                rotations.len()
            ),
        ));
    }
    Ok(BasinGrid {
        translations,
        rotations,
        panels,
    })
}
