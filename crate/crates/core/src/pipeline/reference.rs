//! Published fidelity table and its aggregate.
//!
//! Table values carry three decimals, so they are held as integer
//! thousandths and the aggregate is computed exactly.

use serde::Serialize;

use crate::error::{Error, Result};

pub const REFERENCE_FIDELITIES: &str = include_str!("../../data/reference_fidelities.csv");

/// One row, every value in thousandths except the angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReferenceRow {
    /// Angle in tenths of a degree.
    pub theta_decideg: i64,
    pub f_t: i64,
    pub f_s: i64,
    /// The printed `f_s / f_t` column.
    pub ratio: i64,
}

impl ReferenceRow {
    pub fn theta_deg(&self) -> f64 {
        self.theta_decideg as f64 / 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceAggregate {
    pub min_theta_deg: f64,
    pub rows: usize,
    /// Mean of the printed ratios: `ratio_sum_milli / (1000 rows)`.
    pub ratio_sum_milli: i64,
    pub mean_ratio: f64,
    /// Mean of `f_s / f_t` recomputed from the rounded fidelities.
    pub mean_recomputed_ratio: f64,
}

/// Parses a nonnegative decimal with at most `digits` fractional digits into
/// an integer count of `10^-digits` units.
fn parse_fixed(s: &str, digits: u32) -> Result<i64> {
    let s = s.trim();
    let bad = || {
        Error::Parse(format!(
            "{s:?} is not a decimal with at most {digits} fractional digits"
        ))
    };
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || frac.len() > digits as usize || !(int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()))
    {
        return Err(bad());
    }
    let padded = format!("{frac:0<width$}", width = digits as usize);
    let whole: i64 = int.parse().map_err(|_| bad())?;
    let part: i64 = if padded.is_empty() {
        0
    } else {
        padded.parse().map_err(|_| bad())?
    };
    Ok(whole * 10i64.pow(digits) + part)
}

pub fn parse_reference(text: &str) -> Result<Vec<ReferenceRow>> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty reference table".into()))?;
    if header != "theta_deg,f_t,f_s,ratio" {
        return Err(Error::Parse(format!("unexpected reference header {header:?}")));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("reference row {line:?} needs 4 fields")));
            }
            Ok(ReferenceRow {
                theta_decideg: parse_fixed(f[0], 1)?,
                f_t: parse_fixed(f[1], 3)?,
                f_s: parse_fixed(f[2], 3)?,
                ratio: parse_fixed(f[3], 3)?,
            })
        })
        .collect()
}

pub fn reference_aggregate(rows: &[ReferenceRow], min_theta_deg: f64) -> Result<ReferenceAggregate> {
    let chosen: Vec<&ReferenceRow> = rows.iter().filter(|r| r.theta_deg() >= min_theta_deg).collect();
    if chosen.is_empty() {
        return Err(Error::validation(format!(
            "no reference row with theta >= {min_theta_deg}"
        )));
    }
    let n = chosen.len();
    let ratio_sum_milli: i64 = chosen.iter().map(|r| r.ratio).sum();
    let recomputed: f64 = chosen.iter().map(|r| r.f_s as f64 / r.f_t as f64).sum();
    Ok(ReferenceAggregate {
        min_theta_deg,
        rows: n,
        ratio_sum_milli,
        mean_ratio: ratio_sum_milli as f64 / (1000 * n as i64) as f64,
        mean_recomputed_ratio: recomputed / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_parsing() {
        assert_eq!(parse_fixed("0.953", 3).unwrap(), 953);
        assert_eq!(parse_fixed("32.5", 1).unwrap(), 325);
        assert_eq!(parse_fixed("30", 1).unwrap(), 300);
        assert_eq!(parse_fixed("0.9", 3).unwrap(), 900);
        assert!(parse_fixed("0.9531", 3).is_err());
        assert!(parse_fixed("-1", 3).is_err());
        assert!(parse_fixed(".5", 3).is_err());
    }

    #[test]
    fn published_means() {
        let rows = parse_reference(REFERENCE_FIDELITIES).unwrap();
        assert_eq!(rows.len(), 7);
        let high = reference_aggregate(&rows, 35.0).unwrap();
        assert_eq!(high.rows, 5);
        assert_eq!(high.ratio_sum_milli, 4940);
        assert_eq!(high.mean_ratio, 0.988);
        assert_eq!((high.mean_recomputed_ratio * 1000.0).round(), 988.0);
        let all = reference_aggregate(&rows, 0.0).unwrap();
        assert_eq!((all.mean_ratio * 1000.0).round(), 976.0);
        for r in &rows {
            assert!(r.f_s <= r.f_t);
        }
    }
}
