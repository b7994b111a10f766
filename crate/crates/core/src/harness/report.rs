//! Accuracy, per-pair prediction files, results files and the
//! language-pair table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, REPORT_LANG_PAIRS};
use crate::error::{Error, Result};

/// `#correct / #total`.
pub fn evaluate(pred: &[Label], gold: &[Label]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Validation("nothing to evaluate".into()));
    }
    let ok = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(ok as f64 / pred.len() as f64)
}

/// One evaluated pair. `gold` is empty for unlabelled pairs, which are
/// written but not scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub system: String,
    pub pair_id: String,
    pub lang_pair: String,
    pub gold: Option<Label>,
    pub predicted: Label,
}

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub system: String,
    pub lang_pair: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Scores predictions per (system, language pair), in order of first
/// appearance.
pub fn tally(predictions: &[Prediction]) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for p in predictions {
        let Some(gold) = p.gold else { continue };
        let i = match rows
            .iter()
            .position(|r| r.system == p.system && r.lang_pair == p.lang_pair)
        {
            Some(i) => i,
            None => {
                rows.push(ResultRow {
                    system: p.system.clone(),
                    lang_pair: p.lang_pair.clone(),
                    n: 0,
                    correct: 0,
                    accuracy: 0.0,
                });
                rows.len() - 1
            }
        };
        rows[i].n += 1;
        rows[i].correct += usize::from(gold == p.predicted);
    }
    for r in &mut rows {
        r.accuracy = r.correct as f64 / r.n as f64;
    }
    rows
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn write_table<T: Serialize>(path: &Path, rows: &[T], delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path, delimiter: u8) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

/// CSV with columns `system,lang_pair,n,correct,accuracy`.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        // the header alone still identifies the file
        return std::fs::write(path, "system,lang_pair,n,correct,accuracy\n")
            .map_err(|e| Error::io(path, e));
    }
    write_table(path, rows, b',')
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    read_table(path, b',')
}

/// Tab-separated `system pair_id lang_pair gold predicted`.
pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    if preds.is_empty() {
        return std::fs::write(path, "system\tpair_id\tlang_pair\tgold\tpredicted\n")
            .map_err(|e| Error::io(path, e));
    }
    write_table(path, preds, b'\t')
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    read_table(path, b'\t')
}

/// Accuracy per (system, language pair); a missing cell is absent, not zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultGrid {
    systems: Vec<String>,
    cells: BTreeMap<(String, String), f64>,
}

impl ResultGrid {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a row with no cells yet; rows keep insertion order.
    pub fn add_system(&mut self, system: &str) {
        if !self.systems.iter().any(|s| s == system) {
            self.systems.push(system.to_string());
        }
    }

    pub fn insert(&mut self, system: &str, lang_pair: &str, accuracy: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::Validation(format!(
                "accuracy {accuracy} outside [0, 1]"
            )));
        }
        self.add_system(system);
        self.cells
            .insert((system.to_string(), lang_pair.to_string()), accuracy);
        Ok(())
    }

    pub fn get(&self, system: &str, lang_pair: &str) -> Option<f64> {
        self.cells
            .get(&(system.to_string(), lang_pair.to_string()))
            .copied()
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn from_rows(rows: &[ResultRow]) -> Result<Self> {
        let mut g = ResultGrid::new();
        for r in rows {
            g.insert(&r.system, &r.lang_pair, r.accuracy)?;
        }
        Ok(g)
    }

    /// The fixed column order, then any other language pairs present,
    /// sorted.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = REPORT_LANG_PAIRS.iter().map(|s| s.to_string()).collect();
        let extra: BTreeSet<&String> = self
            .cells
            .keys()
            .map(|(_, lp)| lp)
            .filter(|lp| !REPORT_LANG_PAIRS.contains(&lp.as_str()))
            .collect();
        cols.extend(extra.into_iter().cloned());
        cols
    }
}

/// `0.845` → `84.5%`.
pub fn format_accuracy(accuracy: f64) -> String {
    format!("{:.1}%", accuracy * 100.0)
}

/// Rendered table, as aligned text and as CSV with the same cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

pub fn emit_report(grid: &ResultGrid) -> Report {
    let cols = grid.columns();
    let cell = |s: &str, lp: &str| {
        grid.get(s, lp)
            .map(format_accuracy)
            .unwrap_or_else(|| "--".into())
    };
    let width = grid
        .systems()
        .iter()
        .map(|s| s.chars().count())
        .max()
        .unwrap_or(0)
        .max(6);

    let mut text = format!("{:<width$}", "system");
    let mut csv = String::from("system");
    for c in &cols {
        let _ = write!(text, " {c:>6}");
        let _ = write!(csv, ",{c}");
    }
    text.push('\n');
    csv.push('\n');
    for s in grid.systems() {
        let _ = write!(text, "{s:<width$}");
        csv.push_str(&csv_field(s));
        for c in &cols {
            let v = cell(s, c);
            let _ = write!(text, " {v:>6}");
            let _ = write!(csv, ",{v}");
        }
        text.push('\n');
        csv.push('\n');
    }
    Report { text, csv }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accuracy_cases() {
        let t = Label::True;
        let f = Label::False;
        assert_eq!(evaluate(&[t, f], &[t, f]).unwrap(), 1.0);
        assert_eq!(evaluate(&[t, t, f, f], &[t, t, f, t]).unwrap(), 0.75);
        assert!(evaluate(&[], &[]).is_err());
        assert!(evaluate(&[t], &[t, f]).is_err());
    }

    #[test]
    fn random_guessing_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gold: Vec<Label> = (0..1000).map(|i| Label::from_index(i % 2)).collect();
        let pred: Vec<Label> = (0..1000)
            .map(|_| Label::from_index(rng.random_range(0..2)))
            .collect();
        let acc = evaluate(&pred, &gold).unwrap();
        assert!((acc - 0.5).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn cell_formatting() {
        assert_eq!(format_accuracy(0.845), "84.5%");
        assert_eq!(format_accuracy(0.0), "0.0%");
        assert_eq!(format_accuracy(1.0), "100.0%");
        assert_eq!(format_accuracy(0.534), "53.4%");
    }

    #[test]
    fn report_layout() {
        let mut g = ResultGrid::new();
        g.insert("mBERT+Syntax+MLP", "en-en", 0.6).unwrap();
        assert!(g.insert("mBERT+Syntax+MLP", "ar-ar", 1.5).is_err());
        g.insert("XLMR+span", "en-en", 0.845).unwrap();
        let r = emit_report(&g);
        let lines: Vec<&str> = r.text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("system"));
        let header: Vec<&str> = lines[0].split_whitespace().collect();
        assert_eq!(&header[1..], REPORT_LANG_PAIRS);
        let syntax: Vec<&str> = lines[1].split_whitespace().collect();
        assert_eq!(syntax[1], "60.0%");
        assert_eq!(syntax[5], "--");
        assert_eq!(syntax[9], "--");
        assert!(lines[2].contains("84.5%"));
        assert_eq!(
            r.csv.lines().nth(2).unwrap(),
            "XLMR+span,84.5%,--,--,--,--,--,--,--,--"
        );
    }

    #[test]
    fn extra_language_pairs_follow_fixed_columns() {
        let mut g = ResultGrid::new();
        g.insert("s", "xx-xx", 0.5).unwrap();
        g.insert("s", "en-en", 0.5).unwrap();
        assert_eq!(g.columns().last().unwrap(), "xx-xx");
        assert_eq!(g.columns().len(), 10);
    }

    fn preds() -> Vec<Prediction> {
        let mk = |id: &str, lp: &str, gold: Option<Label>, predicted| Prediction {
            system: "sys".into(),
            pair_id: id.into(),
            lang_pair: lp.into(),
            gold,
            predicted,
        };
        vec![
            mk("test.en-en.0", "en-en", Some(Label::True), Label::True),
            mk("test.en-fr.0", "en-fr", Some(Label::True), Label::False),
            mk("test.en-en.1", "en-en", Some(Label::False), Label::True),
            mk("test.en-en.2", "en-en", None, Label::True),
        ]
    }

    #[test]
    fn tally_skips_unlabelled() {
        let rows = tally(&preds());
        assert_eq!(rows.len(), 2);
        assert_eq!(
            (rows[0].lang_pair.as_str(), rows[0].n, rows[0].correct),
            ("en-en", 2, 1)
        );
        assert_eq!(rows[0].accuracy, 0.5);
        assert_eq!((rows[1].n, rows[1].correct), (1, 0));
    }

    #[test]
    fn files_round_trip_and_rederive() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("predictions.tsv");
        let r = dir.path().join("results.csv");
        write_predictions(&p, &preds()).unwrap();
        write_results(&r, &tally(&preds())).unwrap();
        let back = read_predictions(&p).unwrap();
        assert_eq!(back, preds());
        assert_eq!(tally(&back), read_results(&r).unwrap());
        let text = std::fs::read_to_string(&r).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "system,lang_pair,n,correct,accuracy"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "sys,en-en,2,1,0.5");
    }
}
