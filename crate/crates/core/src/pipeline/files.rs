//! Counts files and small output helpers.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::bell::{CountingMode, CountsRecord};
use crate::error::{Error, Result};
use crate::tomography::{basis_label, parse_basis_label, TomographyCounts};

/// Outcome counts keyed by the outcome signs of Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellCounts {
    #[serde(rename = "++")]
    pub pp: u64,
    #[serde(rename = "+-")]
    pub pm: u64,
    #[serde(rename = "-+")]
    pub mp: u64,
    #[serde(rename = "--")]
    pub mm: u64,
}

impl From<[u64; 4]> for CellCounts {
    fn from(c: [u64; 4]) -> Self {
        Self {
            pp: c[0],
            pm: c[1],
            mp: c[2],
            mm: c[3],
        }
    }
}

impl From<CellCounts> for [u64; 4] {
    fn from(c: CellCounts) -> Self {
        [c.pp, c.pm, c.mp, c.mm]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsMetadata {
    pub theta_deg: f64,
    pub trials_per_setting: u64,
    pub counting_mode: CountingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestEntry {
    pub x: usize,
    pub y: usize,
    pub counts: CellCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoEntry {
    pub basis: String,
    pub counts: CellCounts,
}

/// Everything measured at one angle: 4 self-testing settings and 9 Pauli bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsFile {
    pub metadata: CountsMetadata,
    pub selftest_settings: Vec<SelftestEntry>,
    pub tomo_settings: Vec<TomoEntry>,
}

impl CountsFile {
    pub fn new(selftest: &CountsRecord, tomo: &TomographyCounts) -> Self {
        let mut selftest_settings = Vec::with_capacity(4);
        for x in 0..2 {
            for y in 0..2 {
                selftest_settings.push(SelftestEntry {
                    x,
                    y,
                    counts: selftest.counts[x][y].into(),
                });
            }
        }
        let mut tomo_settings = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                tomo_settings.push(TomoEntry {
                    basis: basis_label(i, j),
                    counts: tomo.counts[i][j].into(),
                });
            }
        }
        Self {
            metadata: CountsMetadata {
                theta_deg: selftest.theta_deg,
                trials_per_setting: selftest.trials_per_setting,
                counting_mode: selftest.mode,
                seed: selftest.seed,
            },
            selftest_settings,
            tomo_settings,
        }
    }

    /// Splits into the two validated count records.
    pub fn records(&self) -> Result<(CountsRecord, TomographyCounts)> {
        let m = &self.metadata;
        let mut st = [[None; 2]; 2];
        for e in &self.selftest_settings {
            if e.x > 1 || e.y > 1 {
                return Err(Error::validation(format!(
                    "self-test setting ({}, {}) out of range",
                    e.x, e.y
                )));
            }
            if st[e.x][e.y].replace(<[u64; 4]>::from(e.counts)).is_some() {
                return Err(Error::validation(format!(
                    "self-test setting ({}, {}) listed twice",
                    e.x, e.y
                )));
            }
        }
        let mut counts = [[[0; 4]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                counts[x][y] =
                    st[x][y].ok_or_else(|| Error::validation(format!("self-test setting ({x}, {y}) missing")))?;
            }
        }
        let mut tomo = [[None; 3]; 3];
        for e in &self.tomo_settings {
            let (i, j) = parse_basis_label(&e.basis)?;
            if tomo[i][j].replace(<[u64; 4]>::from(e.counts)).is_some() {
                return Err(Error::validation(format!("tomography basis {} listed twice", e.basis)));
            }
        }
        let mut tcounts = [[[0; 4]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                tcounts[i][j] = tomo[i][j]
                    .ok_or_else(|| Error::validation(format!("tomography basis {} missing", basis_label(i, j))))?;
            }
        }
        let selftest = CountsRecord {
            theta_deg: m.theta_deg,
            trials_per_setting: m.trials_per_setting,
            mode: m.counting_mode,
            seed: m.seed,
            counts,
        };
        let tomo = TomographyCounts {
            theta_deg: m.theta_deg,
            trials_per_setting: m.trials_per_setting,
            mode: m.counting_mode,
            seed: m.seed,
            counts: tcounts,
        };
        selftest.validate()?;
        tomo.validate()?;
        Ok((selftest, tomo))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// `30` -> `"30"`, `32.5` -> `"32.5"`.
pub fn theta_tag(theta_deg: f64) -> String {
    format!("{theta_deg}")
}

pub fn counts_path(dir: &Path, theta_deg: f64) -> PathBuf {
    dir.join(format!("counts_{}.json", theta_tag(theta_deg)))
}

pub fn artifacts_path(dir: &Path, theta_deg: f64) -> PathBuf {
    dir.join(format!("theta_{}.json", theta_tag(theta_deg)))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Comma-separated table with a header row.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Parses a numeric CSV into its header and rows.
pub fn parse_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: non-numeric field {s:?}", n + 1)))
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, header has {}",
                n + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{sample_counts, simulated_source, TrialPlan};
    use crate::tomography::sample_tomography;

    fn sample_file() -> CountsFile {
        let t = 40f64.to_radians();
        let (rho, b) = simulated_source(t, &Default::default()).unwrap();
        let plan = TrialPlan {
            trials_per_setting: 50,
            mode: CountingMode::Multinomial,
            seed: 3,
        };
        let st = sample_counts(&b, &plan, 40.0).unwrap();
        let tomo = sample_tomography(&rho, 50, CountingMode::Multinomial, 3, 40.0).unwrap();
        CountsFile::new(&st, &tomo)
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = sample_file();
        let text = serde_json::to_string_pretty(&f).unwrap();
        assert!(text.contains("\"++\""));
        assert!(text.contains("\"basis\": \"xy\""));
        let back: CountsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let (st, tomo) = back.records().unwrap();
        assert_eq!(st.counts[1][0].iter().sum::<u64>(), 50);
        assert_eq!(tomo.counts[2][2].iter().sum::<u64>(), 50);
    }

    #[test]
    fn rejects_inconsistent_totals() {
        let mut f = sample_file();
        f.selftest_settings[2].counts.pp += 1;
        assert!(matches!(f.records(), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_missing_or_duplicate_settings() {
        let mut f = sample_file();
        f.tomo_settings.pop();
        assert!(f.records().is_err());
        let mut f = sample_file();
        f.selftest_settings[1] = f.selftest_settings[0].clone();
        assert!(f.records().is_err());
        let text = serde_json::to_string(&sample_file())
            .unwrap()
            .replace("\"++\"", "\"+0\"");
        assert!(serde_json::from_str::<CountsFile>(&text).is_err());
    }

    #[test]
    fn theta_tags() {
        assert_eq!(theta_tag(45.0), "45");
        assert_eq!(theta_tag(32.5), "32.5");
    }

    #[test]
    fn numeric_csv() {
        let (h, rows) = parse_numeric_csv("a,b\n1,2\n3,4.5\n").unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows[1], vec![3.0, 4.5]);
        assert!(parse_numeric_csv("a,b\n1\n").is_err());
        assert!(parse_numeric_csv("a\nx\n").is_err());
    }
}
