//! JSON Lines score files.
//!
//! Line 1 is a header, every following line one measured mask:
//!
//! ```text
//! {"baseline_utility": 14.98, "layer_count": 32, "direction": "lower"}
//! {"mask": "1111...0", "raw_utility": 15.2, "score": 0.985, "meta": {"stratum": "30"}}
//! ```
//!
//! `score` is optional on input and recomputed from the header when absent.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::UtilityOracle;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::record::{normalize_score, Direction, MaskScoreRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreFileHeader {
    pub baseline_utility: f64,
    pub layer_count: usize,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreFile {
    pub header: ScoreFileHeader,
    pub records: Vec<MaskScoreRecord>,
    /// 1-based line number of each record.
    pub lines: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    mask: String,
    raw_utility: f64,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
}

/// Parses a score file, keeping repeated masks (sampling is with replacement).
pub fn parse_score_file(text: &str) -> Result<ScoreFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (header_line, header_text) = lines.next().ok_or_else(|| Error::parse(1, "missing header line"))?;
    let header: ScoreFileHeader =
        serde_json::from_str(header_text).map_err(|e| Error::parse(header_line, format!("header: {e}")))?;
    if header.layer_count == 0 {
        return Err(Error::parse(header_line, "layer_count must be positive"));
    }
    if !(header.baseline_utility > 0.0 && header.baseline_utility.is_finite()) {
        return Err(Error::parse(header_line, "baseline_utility must be positive and finite"));
    }

    let mut records = Vec::new();
    let mut numbers = Vec::new();
    for (line, text) in lines {
        let raw: RecordLine = serde_json::from_str(text).map_err(|e| Error::parse(line, e.to_string()))?;
        let mask: Mask = raw.mask.parse().map_err(|e: Error| Error::parse(line, e.to_string()))?;
        if mask.len() != header.layer_count {
            return Err(Error::LengthMismatch {
                line,
                expected: header.layer_count,
                actual: mask.len(),
            });
        }
        let score = match raw.score {
            Some(s) if (0.0..=1.0).contains(&s) => s,
            Some(s) => return Err(Error::parse(line, format!("score {s} outside [0, 1]"))),
            None => normalize_score(raw.raw_utility, header.baseline_utility, header.direction)
                .map_err(|e| Error::parse(line, e.to_string()))?
                .score,
        };
        let meta = raw
            .meta
            .into_iter()
            .map(|(k, v)| match v {
                Value::String(s) => (k, s),
                other => (k, other.to_string()),
            })
            .collect();
        records.push(MaskScoreRecord {
            mask,
            raw_utility: raw.raw_utility,
            score,
            meta,
        });
        numbers.push(line);
    }
    Ok(ScoreFile {
        header,
        records,
        lines: numbers,
    })
}

pub fn read_score_file(path: impl AsRef<Path>) -> Result<ScoreFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_file(&text).map_err(|e| e.with_path(path))
}

/// Score file text: the header line followed by one record per line.
pub fn format_score_file(header: &ScoreFileHeader, records: &[MaskScoreRecord]) -> Result<String> {
    let mut out = serde_json::to_string(header)?;
    out.push('\n');
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_score_file(path: impl AsRef<Path>, header: &ScoreFileHeader, records: &[MaskScoreRecord]) -> Result<()> {
    let path = path.as_ref();
    let text = format_score_file(header, records)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Externally measured raw utilities, looked up exactly by mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    records: HashMap<Mask, f64>,
    baseline_utility: f64,
    layer_count: usize,
    direction: Direction,
}

impl ScoreTable {
    /// Builds a table from parsed lines, rejecting repeated masks.
    pub fn from_file(file: ScoreFile) -> Result<Self> {
        let full = Mask::full(file.header.layer_count);
        let mut records = HashMap::with_capacity(file.records.len());
        for (record, &line) in file.records.iter().zip(&file.lines) {
            if record.mask == full && record.raw_utility != file.header.baseline_utility {
                return Err(Error::parse(line, "full mask utility differs from baseline_utility"));
            }
            if records.insert(record.mask.clone(), record.raw_utility).is_some() {
                return Err(Error::DuplicateMask {
                    line,
                    mask: record.mask.to_string(),
                });
            }
        }
        Ok(ScoreTable {
            records,
            baseline_utility: file.header.baseline_utility,
            layer_count: file.header.layer_count,
            direction: file.header.direction,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_file(parse_score_file(text)?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_score_table(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    ScoreTable::from_file(read_score_file(path)?).map_err(|e| e.with_path(path))
}

impl UtilityOracle for ScoreTable {
    fn layer_count(&self) -> usize {
        self.layer_count
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn evaluate(&self, mask: &Mask) -> Result<f64> {
        mask.ensure_len(self.layer_count)?;
        match self.records.get(mask) {
            Some(&v) => Ok(v),
            None if mask.hamming_weight() == self.layer_count => Ok(self.baseline_utility),
            None => Err(Error::MaskNotInTable(mask.to_string())),
        }
    }

    fn baseline_utility(&self) -> Result<f64> {
        Ok(self.baseline_utility)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"baseline_utility": 14.98, "layer_count": 4, "direction": "lower"}"#;

    fn file(lines: &[&str]) -> String {
        std::iter::once(HEADER).chain(lines.iter().copied()).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn loads_records() {
        let text = file(&[
            r#"{"mask": "1110", "raw_utility": 16.0}"#,
            r#"{"mask": "0111", "raw_utility": 20.0, "meta": {"stratum": 3, "source": "bench"}}"#,
            r#"{"mask": "1011", "raw_utility": 29.96}"#,
        ]);
        let table = ScoreTable::parse(&text).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.evaluate(&"0111".parse().unwrap()).unwrap(), 20.0);
        assert_eq!(table.evaluate(&Mask::full(4)).unwrap(), 14.98);
        assert!(matches!(
            table.evaluate(&"0011".parse().unwrap()),
            Err(Error::MaskNotInTable(m)) if m == "0011"
        ));

        let parsed = parse_score_file(&text).unwrap();
        assert_eq!(parsed.records[1].meta["stratum"], "3");
        assert_eq!(parsed.records[1].meta["source"], "bench");
        assert!((parsed.records[2].score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_mask_reports_line() {
        let text = file(&[
            r#"{"mask": "1110", "raw_utility": 16.0}"#,
            r#"{"mask": "1101", "raw_utility": 17.0}"#,
            r#"{"mask": "1110", "raw_utility": 16.5}"#,
        ]);
        assert!(matches!(
            ScoreTable::parse(&text),
            Err(Error::DuplicateMask { line: 4, .. })
        ));
        // the record reader itself keeps repeats
        assert_eq!(parse_score_file(&text).unwrap().records.len(), 3);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let text = file(&[r#"{"mask": "111", "raw_utility": 16.0}"#]);
        assert!(matches!(
            ScoreTable::parse(&text),
            Err(Error::LengthMismatch { line: 2, expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = file(&[r#"{"mask": "1110", "raw_utility": 16.0}"#, r#"{"mask": "11"#]);
        assert!(matches!(ScoreTable::parse(&text), Err(Error::Parse { line: 3, .. })));
        let text = file(&[r#"{"mask": "11x0", "raw_utility": 16.0}"#]);
        assert!(matches!(ScoreTable::parse(&text), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(ScoreTable::parse(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            ScoreTable::parse(r#"{"baseline_utility": 0.0, "layer_count": 4}"#),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn two_loads_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let header = ScoreFileHeader {
            baseline_utility: 14.98,
            layer_count: 4,
            direction: Direction::Lower,
        };
        let records: Vec<MaskScoreRecord> = ["1110", "1100", "0001"]
            .iter()
            .enumerate()
            .map(|(i, m)| MaskScoreRecord::new(m.parse().unwrap(), 15.0 + i as f64 * 1.37, 0.9))
            .collect();
        write_score_file(&path, &header, &records).unwrap();
        let a = load_score_table(&path).unwrap();
        let b = load_score_table(&path).unwrap();
        for r in &records {
            assert_eq!(a.evaluate(&r.mask).unwrap(), r.raw_utility);
            assert_eq!(a.evaluate(&r.mask).unwrap(), b.evaluate(&r.mask).unwrap());
        }
    }
}
