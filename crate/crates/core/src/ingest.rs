//! CSV ingestion of datasets and prediction runs.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::accuracy::PredictionRun;
use crate::error::{Error, Result};
use crate::predictors::{Case, Dataset};

/// Cell values treated as missing.
pub const MISSING_TOKENS: [&str; 4] = ["", "?", "NA", "N/A"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetOptions {
    /// Outcome column; defaults to the last column.
    pub target: Option<String>,
    /// Column holding case labels; row numbers are used otherwise.
    pub id_column: Option<String>,
    /// Columns to leave out entirely.
    pub exclude: Vec<String>,
    /// Dataset name; defaults to the file stem.
    pub name: Option<String>,
}

impl DatasetOptions {
    pub fn target(target: impl Into<String>) -> Self {
        Self { target: Some(target.into()), ..Self::default() }
    }

    pub fn with_id_column(mut self, column: impl Into<String>) -> Self {
        self.id_column = Some(column.into());
        self
    }

    pub fn excluding(mut self, columns: &[&str]) -> Self {
        self.exclude.extend(columns.iter().map(|c| c.to_string()));
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.iter().any(|t| cell.trim().eq_ignore_ascii_case(t))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            Error::Parse { line, message: format!("ragged row: expected {expected_len} fields, found {len}") }
        }
        _ => Error::Parse { line, message: e.to_string() },
    }
}

fn parse_number(cell: &str, column: &str, line: usize) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("column '{column}': '{cell}' is not numeric") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("column '{column}': '{cell}' is not finite") });
    }
    Ok(v)
}

/// Loads a dataset from a CSV file with a header row. Every used column except
/// the id must be numeric; rows with a missing value in a used column are dropped.
pub fn load_dataset(path: impl AsRef<Path>, options: &DatasetOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut options = options.clone();
    if options.name.is_none() {
        options.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    read_dataset(open(path)?, &options)
}

pub fn read_dataset<R: Read>(input: R, options: &DatasetOptions) -> Result<Dataset> {
    let mut rdr = reader(input);
    let headers: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Parse { line: 1, message: "missing header row".into() });
    }
    let position = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::InvalidInput(format!("no column named '{name}'")))
    };
    let target = match &options.target {
        Some(t) => position(t)?,
        None => headers.len() - 1,
    };
    let id = options.id_column.as_deref().map(position).transpose()?;
    for c in &options.exclude {
        position(c)?;
    }
    let features: Vec<usize> = (0..headers.len())
        .filter(|&j| j != target && Some(j) != id && !options.exclude.contains(&headers[j]))
        .collect();

    let mut cases = Vec::new();
    let mut dropped = 0usize;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        let used = features.iter().chain(std::iter::once(&target));
        if used.clone().any(|&j| is_missing(&record[j])) {
            dropped += 1;
            continue;
        }
        let outcome = parse_number(&record[target], &headers[target], line)?;
        if !(outcome > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("target '{}' must be positive, found {outcome}", headers[target]),
            });
        }
        let values =
            features.iter().map(|&j| parse_number(&record[j], &headers[j], line)).collect::<Result<Vec<f64>>>()?;
        let case_id = match id {
            Some(j) if !record[j].trim().is_empty() => record[j].trim().to_string(),
            _ => (row + 1).to_string(),
        };
        cases.push(Case { id: case_id, features: values, outcome });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} row(s) with missing values");
    }
    if cases.is_empty() {
        return Err(Error::EmptySample("no complete rows remain after dropping missing values".into()));
    }
    let names = features.iter().map(|&j| headers[j].clone()).collect();
    Dataset::new(options.name.clone().unwrap_or_else(|| "dataset".into()), names, cases)
}

/// Loads runs from `case_id,actual,<system>...`; one run per system column.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRun>> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let runs = read_predictions(open(path)?)?;
    Ok(match name {
        Some(n) => runs.into_iter().map(|r| r.with_dataset(n.clone())).collect(),
        None => runs,
    })
}

pub fn read_predictions<R: Read>(input: R) -> Result<Vec<PredictionRun>> {
    let mut rdr = reader(input);
    let headers: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 3 {
        return Err(Error::Parse {
            line: 1,
            message: "expected columns case_id, actual and at least one system".into(),
        });
    }
    let systems = &headers[2..];
    let mut seen_systems = HashSet::new();
    if let Some(dup) = systems.iter().find(|s| !seen_systems.insert(s.as_str())) {
        return Err(Error::Parse { line: 1, message: format!("duplicate system column '{dup}'") });
    }
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut actuals = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); systems.len()];
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = record[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Parse { line, message: format!("duplicate case_id '{id}'") });
        }
        ids.push(id);
        actuals.push(parse_number(&record[1], &headers[1], line)?);
        for (j, col) in columns.iter_mut().enumerate() {
            col.push(parse_number(&record[j + 2], &systems[j], line)?);
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptySample("prediction file has no rows".into()));
    }
    systems
        .iter()
        .zip(columns)
        .map(|(system, preds)| {
            let pairs: Vec<(f64, f64)> = actuals.iter().copied().zip(preds).collect();
            PredictionRun::with_case_ids(system.clone(), ids.clone(), &pairs)
        })
        .collect()
}

/// Shortest decimal text of `v` rounded to 12 significant digits.
pub fn format_significant(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Renders runs over the same cases as a predictions CSV.
pub fn predictions_csv(runs: &[PredictionRun]) -> Result<String> {
    let first = runs.first().ok_or_else(|| Error::EmptySample("no runs to write".into()))?;
    for r in runs {
        if r.case_ids() != first.case_ids() || r.actuals() != first.actuals() {
            return Err(Error::MismatchedEvaluationSet(format!(
                "{} and {} cover different cases",
                first.system_id(),
                r.system_id()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["case_id".to_string(), "actual".to_string()];
    header.extend(runs.iter().map(|r| r.system_id().to_string()));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..first.len() {
        let mut row = vec![first.case_ids()[i].clone(), format_significant(first.actuals()[i])];
        row.extend(runs.iter().map(|r| format_significant(r.predictions()[i])));
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dataset() {
        let text = "a,b,effort\n1,2,10\n2,3,20\n3,4,30\n4,5,40\n5,6,50\n";
        let d = read_dataset(text.as_bytes(), &DatasetOptions::target("effort")).unwrap();
        assert_eq!((d.len(), d.n_features()), (5, 2));
        assert_eq!(d.feature_names, vec!["a", "b"]);
        assert_eq!(d.cases[2].outcome, 30.0);
        assert_eq!(d.cases[2].id, "3");
    }

    #[test]
    fn missing_rows_dropped() {
        let text = "id,a,b,y\np1,1,?,10\np2,2,3,20\np3,,4,30\np4,4,5,40\n";
        let opts = DatasetOptions::target("y").with_id_column("id");
        let d = read_dataset(text.as_bytes(), &opts).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.cases[0].id, "p2");
        // an excluded column may hold missing values freely
        let d = read_dataset(text.as_bytes(), &opts.clone().excluding(&["b"])).unwrap();
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn dataset_errors() {
        let zero = "a,y\n1,5\n2,0\n";
        match read_dataset(zero.as_bytes(), &DatasetOptions::target("y")) {
            Err(Error::Parse { line: 3, message }) => assert!(message.contains("positive")),
            other => panic!("{other:?}"),
        }
        let word = "a,y\n1,5\nlarge,6\n";
        assert!(matches!(
            read_dataset(word.as_bytes(), &DatasetOptions::target("y")),
            Err(Error::Parse { line: 3, .. })
        ));
        let empty = "a,y\n?,5\n";
        assert!(matches!(read_dataset(empty.as_bytes(), &DatasetOptions::default()), Err(Error::EmptySample(_))));
        assert!(read_dataset("a,y\n1,2\n".as_bytes(), &DatasetOptions::target("z")).is_err());
    }

    #[test]
    fn predictions_two_systems() {
        let mut text = String::from("case_id,actual,A,B\n");
        for i in 1..=10 {
            text.push_str(&format!("c{i},{},{},{}\n", i * 10, i * 11, i * 9));
        }
        let runs = read_predictions(text.as_bytes()).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].system_id(), "B");
        assert!(runs.iter().all(|r| r.len() == 10));
        assert_eq!(runs[0].predictions()[2], 33.0);
    }

    #[test]
    fn swapped_pair_file() {
        let runs = read_predictions("case_id,actual,P\n1,10,100\n2,100,10\n".as_bytes()).unwrap();
        assert_eq!(crate::accuracy::mar(&runs[0]), 90.0);
        assert!((crate::accuracy::mmre(&runs[0]).unwrap() - 495.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_errors() {
        assert!(matches!(
            read_predictions("case_id,actual,A\n1,2,3\n1,4,5\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        match read_predictions("case_id,actual,A\n1,2,3\n2,4\n".as_bytes()) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("ragged")),
            other => panic!("{other:?}"),
        }
        assert!(read_predictions("case_id,actual\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(90.0), "90");
        assert_eq!(format_significant(0.1 + 0.2), "0.3");
        assert_eq!(format_significant(1234.56789012345), "1234.56789012");
    }
}
