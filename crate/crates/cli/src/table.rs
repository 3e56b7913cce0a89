//! Tab-separated count tables.
//!
//! The first row holds taxon names (its first cell labels the sample-id
//! column), the first column holds unique sample identifiers, and every other
//! cell is a nonnegative integer count. One column may instead hold numeric
//! responses, selected by name.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use pamir_core::CountVector;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub sample_ids: Vec<String>,
    /// Taxon names in column order; the last is the ALR reference.
    pub taxa: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub responses: Option<Vec<f64>>,
}

fn at(source: &str, line: usize, column: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{source}: line {line}, column {column}: {msg}"))
}

impl CountTable {
    /// `source` only labels diagnostics.
    pub fn parse(text: &str, source: &str, response: Option<&str>) -> Result<Self, CliError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.trim().is_empty());
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| CliError::Input(format!("{source}: empty table")))?;
        let names: Vec<&str> = header.split('\t').collect();
        if names.len() < 2 {
            return Err(at(source, header_line, 1, "header needs a sample-id column and at least one taxon"));
        }
        let mut seen = HashSet::new();
        for (c, name) in names.iter().enumerate().skip(1) {
            if name.is_empty() {
                return Err(at(source, header_line, c + 1, "empty column name"));
            }
            if !seen.insert(*name) {
                return Err(at(source, header_line, c + 1, format!("duplicate column name '{name}'")));
            }
        }
        let response_col = match response {
            Some(r) => Some(
                names
                    .iter()
                    .skip(1)
                    .position(|n| *n == r)
                    .map(|i| i + 1)
                    .ok_or_else(|| CliError::Input(format!("{source}: response column '{r}' not found")))?,
            ),
            None => None,
        };
        let taxa: Vec<String> = names
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(c, _)| Some(*c) != response_col)
            .map(|(_, n)| n.to_string())
            .collect();
        if taxa.len() < 2 {
            return Err(at(source, header_line, 1, "need at least two taxon columns"));
        }

        let mut sample_ids = Vec::new();
        let mut counts = Vec::new();
        let mut responses = Vec::new();
        let mut ids = HashSet::new();
        for (line, row) in lines {
            let cells: Vec<&str> = row.split('\t').collect();
            if cells.len() != names.len() {
                return Err(at(
                    source,
                    line,
                    cells.len().min(names.len()) + 1,
                    format!("expected {} fields, found {}", names.len(), cells.len()),
                ));
            }
            let id = cells[0].trim();
            if id.is_empty() {
                return Err(at(source, line, 1, "empty sample identifier"));
            }
            if !ids.insert(id.to_string()) {
                return Err(at(source, line, 1, format!("duplicate sample identifier '{id}'")));
            }
            let mut row_counts = Vec::with_capacity(taxa.len());
            for (c, cell) in cells.iter().enumerate().skip(1) {
                let cell = cell.trim();
                if Some(c) == response_col {
                    let y: f64 = cell
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| at(source, line, c + 1, format!("response '{cell}' is not a finite number")))?;
                    responses.push(y);
                } else {
                    let v: u64 = cell
                        .parse()
                        .map_err(|_| at(source, line, c + 1, format!("'{cell}' is not a nonnegative integer")))?;
                    row_counts.push(v);
                }
            }
            if row_counts.iter().all(|&v| v == 0) {
                return Err(at(source, line, 1, format!("sample '{id}' has library size 0")));
            }
            sample_ids.push(id.to_string());
            counts.push(row_counts);
        }
        if sample_ids.is_empty() {
            return Err(CliError::Input(format!("{source}: table has no samples")));
        }
        Ok(Self {
            sample_ids,
            taxa,
            counts,
            responses: response_col.map(|_| responses),
        })
    }

    pub fn read(path: &std::path::Path, response: Option<&str>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string(), response)
    }

    /// Moves `taxon` to the last (reference) column.
    pub fn with_reference(mut self, taxon: &str) -> Result<Self, CliError> {
        let j = self
            .taxa
            .iter()
            .position(|t| t == taxon)
            .ok_or_else(|| CliError::Input(format!("reference taxon '{taxon}' not in table")))?;
        let name = self.taxa.remove(j);
        self.taxa.push(name);
        for row in &mut self.counts {
            let v = row.remove(j);
            row.push(v);
        }
        Ok(self)
    }

    pub fn count_vectors(&self) -> Result<Vec<CountVector>, CliError> {
        self.counts
            .iter()
            .zip(&self.sample_ids)
            .map(|(row, id)| {
                CountVector::new(row.clone()).map_err(|e| CliError::Input(format!("sample '{id}': {e}")))
            })
            .collect()
    }

    /// Reorders columns to match `taxa` by name. Any missing or extra name is
    /// an error that lists them all.
    pub fn aligned_to(&self, taxa: &[String]) -> Result<Vec<CountVector>, CliError> {
        let index: HashMap<&str, usize> = self.taxa.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let wanted: HashSet<&str> = taxa.iter().map(String::as_str).collect();
        let missing: Vec<&str> = taxa.iter().map(String::as_str).filter(|t| !index.contains_key(t)).collect();
        let extra: Vec<&str> = self.taxa.iter().map(String::as_str).filter(|t| !wanted.contains(t)).collect();
        if !missing.is_empty() || !extra.is_empty() {
            let mut msg = String::from("taxon mismatch with model");
            if !missing.is_empty() {
                let _ = write!(msg, "; missing: {}", missing.join(", "));
            }
            if !extra.is_empty() {
                let _ = write!(msg, "; extra: {}", extra.join(", "));
            }
            return Err(CliError::Input(msg));
        }
        let order: Vec<usize> = taxa.iter().map(|t| index[t.as_str()]).collect();
        self.counts
            .iter()
            .zip(&self.sample_ids)
            .map(|(row, id)| {
                CountVector::new(order.iter().map(|&j| row[j]).collect())
                    .map_err(|e| CliError::Input(format!("sample '{id}': {e}")))
            })
            .collect()
    }

    pub fn to_tsv(&self, response_name: &str) -> String {
        let mut out = String::from("sample_id");
        if self.responses.is_some() {
            out.push('\t');
            out.push_str(response_name);
        }
        for t in &self.taxa {
            out.push('\t');
            out.push_str(t);
        }
        out.push('\n');
        for (i, id) in self.sample_ids.iter().enumerate() {
            out.push_str(id);
            if let Some(r) = &self.responses {
                let _ = write!(out, "\t{:.16e}", r[i]);
            }
            for c in &self.counts[i] {
                let _ = write!(out, "\t{c}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "id\ty\tA\tB\tC\ns1\t0.5\t1\t2\t3\ns2\t-1\t0\t4\t1\n";

    #[test]
    fn parses_response_and_counts() {
        let t = CountTable::parse(TABLE, "t", Some("y")).unwrap();
        assert_eq!(t.taxa, vec!["A", "B", "C"]);
        assert_eq!(t.sample_ids, vec!["s1", "s2"]);
        assert_eq!(t.counts, vec![vec![1, 2, 3], vec![0, 4, 1]]);
        assert_eq!(t.responses, Some(vec![0.5, -1.0]));
    }

    #[test]
    fn parse_errors_have_positions() {
        let bad = "id\tA\tB\ns1\t1\tx\n";
        let e = CountTable::parse(bad, "t", None).unwrap_err().to_string();
        assert!(e.contains("line 2, column 3"), "{e}");
        let ragged = "id\tA\tB\ns1\t1\n";
        assert!(CountTable::parse(ragged, "t", None).unwrap_err().to_string().contains("line 2"));
        let neg = "id\tA\tB\ns1\t-1\t2\n";
        assert!(CountTable::parse(neg, "t", None).unwrap_err().to_string().contains("column 2"));
        let dup = "id\tA\tB\ns1\t1\t2\ns1\t1\t2\n";
        assert!(CountTable::parse(dup, "t", None).unwrap_err().to_string().contains("duplicate"));
        assert!(CountTable::parse(TABLE, "t", Some("z")).unwrap_err().to_string().contains("'z' not found"));
        let zero = "id\tA\tB\ns1\t0\t0\n";
        assert!(CountTable::parse(zero, "t", None).is_err());
    }

    #[test]
    fn reference_moves_last() {
        let t = CountTable::parse(TABLE, "t", Some("y")).unwrap().with_reference("A").unwrap();
        assert_eq!(t.taxa, vec!["B", "C", "A"]);
        assert_eq!(t.counts[0], vec![2, 3, 1]);
        assert!(CountTable::parse(TABLE, "t", Some("y")).unwrap().with_reference("Q").is_err());
    }

    #[test]
    fn alignment_by_name() {
        let t = CountTable::parse(TABLE, "t", Some("y")).unwrap();
        let order = vec!["C".to_string(), "A".to_string(), "B".to_string()];
        let v = t.aligned_to(&order).unwrap();
        assert_eq!(v[0].counts(), &[3, 1, 2]);
        let e = t.aligned_to(&["A".to_string(), "B".to_string(), "D".to_string()]).unwrap_err().to_string();
        assert!(e.contains("missing: D") && e.contains("extra: C"), "{e}");
    }

    #[test]
    fn tsv_round_trip() {
        let t = CountTable::parse(TABLE, "t", Some("y")).unwrap();
        let again = CountTable::parse(&t.to_tsv("y"), "t", Some("y")).unwrap();
        assert_eq!(t, again);
    }
}
