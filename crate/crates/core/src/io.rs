//! CSV and JSON artifacts: verdict tables, scan summaries and observed
//! distributions. Every file starts with a provenance header.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiscreteDistribution, ObservedAtom};
use crate::scan::{set_summary, Membership, ScanReport, SetSummary, Sweep};

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Metadata {
    pub fn new(config_hash: impl Into<String>, seed: Option<u64>) -> Self {
        Self {
            tool: "idtool".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// `# idtool 0.1.0 config=<hash> seed=<seed>`
    pub fn header_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!("# {} {} config={} seed={}", self.tool, self.version, self.config_hash, seed)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub const VERDICT_COLUMNS: [&str; 8] = [
    "gmm_residual_norm",
    "criterion_value",
    "lp_violation",
    "member_sf",
    "member_lp",
    "M",
    "divergent_dirs",
    "error",
];

/// Verdict table: parameter coordinates, then the fixed columns.
pub fn write_verdicts_csv<W: Write>(mut out: W, meta: &Metadata, report: &ScanReport, theta_names: &[String]) -> Result<()> {
    writeln!(out, "{}", meta.header_line())?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = theta_names.iter().map(String::as_str).collect();
    header.extend(VERDICT_COLUMNS);
    w.write_record(&header)?;
    for v in &report.verdicts {
        let mut rec: Vec<String> = v.theta.iter().map(|&x| num(x)).collect();
        rec.push(num(v.gmm_residual_norm));
        rec.push(num(v.criterion_value));
        rec.push(num(v.lp_violation));
        rec.push(v.member_sf.to_string());
        rec.push(v.member_lp.to_string());
        rec.push(num(v.truncation));
        rec.push(v.divergent_direction_count.to_string());
        rec.push(v.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub index: usize,
    pub theta: Vec<f64>,
    pub message: String,
}

/// Hull of one coordinate. `None` bounds mean the member set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateHull {
    pub coordinate: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Timing is left out so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub metadata: Metadata,
    pub model: String,
    pub points: usize,
    pub members_lp: usize,
    pub members_sf: usize,
    pub complete: bool,
    pub disagreements: Vec<usize>,
    /// Per-coordinate hulls of the member sets (outer descriptions).
    pub hull_lp: Vec<CoordinateHull>,
    pub hull_sf: Vec<CoordinateHull>,
    pub errors: Vec<PointError>,
    pub sweeps: Vec<Sweep>,
}

pub fn scan_summary(meta: &Metadata, model: &str, report: &ScanReport, theta_names: &[String]) -> ScanSummary {
    let hulls = |m: Membership| {
        theta_names
            .iter()
            .enumerate()
            .map(|(c, name)| match set_summary(report, c, m) {
                SetSummary::Empty => CoordinateHull {
                    coordinate: name.clone(),
                    lower: None,
                    upper: None,
                },
                SetSummary::Hull { lower, upper, .. } => CoordinateHull {
                    coordinate: name.clone(),
                    lower: Some(lower),
                    upper: Some(upper),
                },
            })
            .collect()
    };
    ScanSummary {
        metadata: meta.clone(),
        model: model.into(),
        points: report.verdicts.len(),
        members_lp: report.members_lp().count(),
        members_sf: report.members_sf().count(),
        complete: report.complete,
        disagreements: report.disagreements.clone(),
        hull_lp: hulls(Membership::Lp),
        hull_sf: hulls(Membership::Sf),
        errors: report
            .errors()
            .map(|v| PointError {
                index: v.index,
                theta: v.theta.clone(),
                message: v.error.clone().unwrap_or_default(),
            })
            .collect(),
        sweeps: report.sweeps.clone(),
    }
}

/// Pretty JSON with a trailing newline. Non-finite floats become `null`.
pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Distribution CSV: optional `#` header lines, a column header, then one
/// atom per line with the `z` components followed by the weight.
pub fn write_distribution_csv<W: Write>(mut out: W, meta: Option<&Metadata>, data: &DiscreteDistribution) -> Result<()> {
    if let Some(m) = meta {
        writeln!(out, "{}", m.header_line())?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..data.z_dim()).map(|i| format!("z{i}")).collect();
    header.push("weight".into());
    w.write_record(&header)?;
    for a in data.atoms() {
        let mut rec: Vec<String> = a.z.iter().map(|&x| num(x)).collect();
        rec.push(num(a.weight));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_distribution_csv<R: Read>(input: R) -> Result<DiscreteDistribution> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let width = r.headers()?.len();
    if width < 2 {
        return Err(Error::Config("distribution CSV needs at least one z column and a weight column".into()));
    }
    let mut atoms = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("distribution CSV row {}: {e}", line + 1)))?;
        let (weight, z) = vals.split_last().ok_or_else(|| Error::Config("empty row".into()))?;
        atoms.push(ObservedAtom {
            z: z.to_vec(),
            weight: *weight,
        });
    }
    DiscreteDistribution::new(atoms)
}

/// First line of an artifact, if it is a provenance header.
pub fn read_header_line<R: BufRead>(mut input: R) -> Result<Option<String>> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    Ok(line.strip_prefix("# ").map(|s| s.trim_end().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_round_trip() {
        let d = DiscreteDistribution::new(vec![
            ObservedAtom { z: vec![0.1, -2.0], weight: 0.25 },
            ObservedAtom { z: vec![1.0 / 3.0, 5.0], weight: 0.75 },
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_distribution_csv(&mut buf, Some(&Metadata::new("abc", Some(3))), &d).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# idtool "));
        assert!(text.contains("config=abc seed=3"));
        let back = read_distribution_csv(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn bad_weight_is_reported() {
        let text = "z0,weight\n1,0.5\n2,abc\n";
        assert!(matches!(read_distribution_csv(text.as_bytes()), Err(Error::Config(_))));
    }
}
