//! Complete-graph edge lists: header `i,j,y,x1,...,xL`, one row per unordered pair.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{DyadError, Result};
use crate::format::fmt_sig17;
use crate::linalg::SymMatrix;
use crate::model::{DyadicDesign, OutcomeMatrix};

/// Parsed edge list; `labels[k]` is the original label of node `k`.
#[derive(Debug, Clone)]
pub struct EdgeListDataset {
    pub design: DyadicDesign,
    pub y: OutcomeMatrix,
    pub labels: Vec<String>,
}

fn ingestion(line: Option<u64>, message: impl Into<String>) -> DyadError {
    DyadError::Ingestion {
        line,
        message: message.into(),
    }
}

fn check_header(headers: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.len() < 4 || cols[0] != "i" || cols[1] != "j" || cols[2] != "y" {
        return Err(ingestion(
            Some(1),
            format!("header must be i,j,y,x1,...,xL; got '{}'", cols.join(",")),
        ));
    }
    for (k, c) in cols[3..].iter().enumerate() {
        let expect = format!("x{}", k + 1);
        if *c != expect {
            return Err(ingestion(Some(1), format!("expected column '{expect}', found '{c}'")));
        }
    }
    Ok(cols.len() - 3)
}

/// Integer labels sort numerically; anything else sorts lexicographically.
fn order_labels(mut labels: Vec<String>) -> Vec<String> {
    let numeric: Option<Vec<i64>> = labels.iter().map(|s| s.parse::<i64>().ok()).collect();
    match numeric {
        Some(_) => labels.sort_by_key(|s| s.parse::<i64>().expect("checked numeric")),
        None => labels.sort(),
    }
    labels
}

pub fn load_edge_list(path: &Path) -> Result<EdgeListDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => DyadError::io(path, io),
            other => ingestion(None, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| ingestion(Some(1), e.to_string()))?
        .clone();
    let l = check_header(&headers)?;

    struct Row {
        i: String,
        j: String,
        vals: Vec<f64>,
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            ingestion(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line());
        if rec.len() != l + 3 {
            return Err(ingestion(line, format!("expected {} fields, found {}", l + 3, rec.len())));
        }
        let mut vals = Vec::with_capacity(l + 1);
        for (c, cell) in rec.iter().enumerate().skip(2) {
            let v: f64 = cell.parse().map_err(|_| {
                ingestion(line, format!("column '{}': cannot parse '{cell}' as a number", &headers[c]))
            })?;
            if !v.is_finite() {
                return Err(ingestion(line, format!("column '{}': value '{cell}' is not finite", &headers[c])));
            }
            vals.push(v);
        }
        let (i, j) = (rec[0].to_string(), rec[1].to_string());
        if i == j {
            return Err(ingestion(line, format!("self-pair ({i}, {j}) is not allowed")));
        }
        rows.push((line, Row { i, j, vals }));
    }

    let mut uniq: Vec<String> = rows.iter().flat_map(|(_, r)| [r.i.clone(), r.j.clone()]).collect();
    uniq.sort();
    uniq.dedup();
    let labels = order_labels(uniq);
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let n = labels.len();

    let mut seen: HashMap<(usize, usize), Option<u64>> = HashMap::with_capacity(rows.len());
    let mut y = vec![0.0; n * n];
    let mut xs = vec![vec![0.0; n * n]; l];
    for (line, r) in &rows {
        let (a, b) = (index[r.i.as_str()], index[r.j.as_str()]);
        let key = (a.min(b), a.max(b));
        if let Some(first) = seen.insert(key, *line) {
            let at = first.map(|f| format!(" (first seen at line {f})")).unwrap_or_default();
            return Err(ingestion(*line, format!("duplicate pair ({}, {}){at}", r.i, r.j)));
        }
        y[a * n + b] = r.vals[0];
        y[b * n + a] = r.vals[0];
        for (x, v) in xs.iter_mut().zip(&r.vals[1..]) {
            x[a * n + b] = *v;
            x[b * n + a] = *v;
        }
    }
    let expected = n * n.saturating_sub(1) / 2;
    if seen.len() != expected {
        let missing = expected - seen.len();
        return Err(ingestion(
            None,
            format!("incomplete graph: {missing} missing pair(s) among {n} nodes (expected {expected})"),
        ));
    }
    if n < crate::model::MIN_NODES {
        return Err(ingestion(
            None,
            format!("edge list has {n} nodes; at least {} are required", crate::model::MIN_NODES),
        ));
    }
    let to_sym = |v: &[f64]| SymMatrix::from_lower_fn(n, |i, j| v[i * n + j]);
    let design = DyadicDesign::with_detected_intercept(xs.iter().map(|x| to_sym(x)).collect())?;
    let y = OutcomeMatrix::new(to_sym(&y))?;
    Ok(EdgeListDataset { design, y, labels })
}

/// Writes every pair `i < j` with 0-based node labels.
pub fn write_edge_list(design: &DyadicDesign, y: &OutcomeMatrix, path: &Path) -> Result<()> {
    let n = design.n();
    let mut out = String::with_capacity(n * n * 12 * (design.l() + 1));
    out.push_str("i,j,y");
    for k in 1..=design.l() {
        out.push_str(&format!(",x{k}"));
    }
    out.push('\n');
    for i in 0..n {
        for j in (i + 1)..n {
            out.push_str(&format!("{i},{j},{}", fmt_sig17(y.get(i, j))));
            for x in design.regressors() {
                out.push(',');
                out.push_str(&fmt_sig17(x.get(i, j)));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| DyadError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, standard_designs};

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn small_graph_is_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("i,j,y,x1\n");
        for (i, j) in [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)] {
            text.push_str(&format!("{i},{j},{},1\n", i * 10 + j));
        }
        let ds = load_edge_list(&write(&dir, "g.csv", &text)).unwrap();
        assert_eq!(ds.labels, vec!["1", "2", "3", "4"]);
        assert_eq!(ds.y.get(0, 2), 13.0);
        assert_eq!(ds.y.get(2, 0), 13.0);
        assert_eq!(ds.y.get(1, 1), 0.0);
        assert!(ds.design.has_intercept_column());
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let ordered = order_labels(vec!["10".into(), "9".into(), "100".into()]);
        assert_eq!(ordered, vec!["9", "10", "100"]);
        let ordered = order_labels(vec!["b".into(), "a".into(), "10".into()]);
        assert_eq!(ordered, vec!["10", "a", "b"]);
    }

    #[test]
    fn missing_pair_is_counted() {
        let dir = tempfile::tempdir().unwrap();
        let text = "i,j,y,x1\n1,2,0,1\n1,4,0,1\n2,3,0,1\n2,4,0,1\n3,4,0,1\n";
        match load_edge_list(&write(&dir, "m.csv", text)) {
            Err(DyadError::Ingestion { message, .. }) => assert!(message.contains("1 missing pair"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let text = "i,j,y,x1\n1,2,0,1\n2,1,0,1\n";
        match load_edge_list(&write(&dir, "d.csv", text)) {
            Err(DyadError::Ingestion { line, message }) => {
                assert!(message.contains("duplicate pair (2, 1)"), "{message}");
                assert_eq!(line, Some(3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let text = "i,j,y,x1\n1,2,0,1\n1,3,abc,1\n";
        match load_edge_list(&write(&dir, "b.csv", text)) {
            Err(DyadError::Ingestion { line, message }) => {
                assert_eq!(line, Some(3));
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "h.csv", "a,b,y,x1\n1,2,0,1\n");
        assert!(matches!(load_edge_list(&p), Err(DyadError::Ingestion { line: Some(1), .. })));
        assert!(matches!(
            load_edge_list(&dir.path().join("absent.csv")),
            Err(DyadError::Io { .. })
        ));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = standard_designs()[1].clone().with_n(15).with_seed(3);
        let (design, y, _) = simulate(&spec).unwrap();
        let p = dir.path().join("rt.csv");
        write_edge_list(&design, &y, &p).unwrap();
        let ds = load_edge_list(&p).unwrap();
        assert_eq!(ds.design, design);
        assert_eq!(ds.y, y);
    }
}
