//! Reading and writing count matrices, dense matrices and library sizes.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use plnet::CountMatrix;

/// Malformed or inconsistent input data. Maps to exit status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

macro_rules! input_err {
    ($($arg:tt)*) => {
        anyhow::Error::new(InputError(format!($($arg)*)))
    };
}

/// Full-precision float rendering used in every numeric output file.
pub fn fmt_f64(x: f64) -> String {
    // + 0.0 folds negative zero
    format!("{:.16e}", x + 0.0)
}

/// A table of labeled rows and columns.
struct Table<T> {
    col_labels: Vec<String>,
    row_labels: Option<Vec<String>>,
    rows: Vec<Vec<T>>,
}

fn parse_count(field: &str, row: usize, col: usize) -> Result<u64> {
    let f = field.trim();
    if let Ok(v) = f.parse::<u64>() {
        return Ok(v);
    }
    match f.parse::<f64>() {
        Ok(x) if x < 0.0 => Err(input_err!("negative count at row {row} col {col}")),
        Ok(x) if x.fract() == 0.0 && x.is_finite() && x <= u64::MAX as f64 => Ok(x as u64),
        Ok(_) => Err(input_err!("non-integer count at row {row} col {col}")),
        Err(_) => Err(input_err!("unparseable count {f:?} at row {row} col {col}")),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

/// Reads a CSV whose first line holds column labels. A leading column of
/// row labels is recognized when the first data field is not numeric.
fn read_count_table(path: &Path) -> Result<Table<u64>> {
    let mut records = csv_reader(path)?.into_records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| input_err!("{}: {e}", path.display()))?,
        None => return Err(input_err!("{} is empty", path.display())),
    };
    let mut header: Vec<String> = header.iter().map(str::to_string).collect();
    let mut row_labels: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (idx, rec) in records.enumerate() {
        let rec = rec.map_err(|e| input_err!("{}: {e}", path.display()))?;
        let row = idx + 1;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if row == 1 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            header.remove(0);
            row_labels = Some(Vec::new());
        }
        let mut fields = rec.iter();
        if let Some(labels) = row_labels.as_mut() {
            labels.push(fields.next().unwrap_or_default().to_string());
        }
        let values: Vec<u64> = fields
            .enumerate()
            .map(|(c, f)| parse_count(f, row, c + 1))
            .collect::<Result<_>>()?;
        if values.len() != header.len() {
            return Err(input_err!(
                "row {row} has {} values, header has {}",
                values.len(),
                header.len()
            ));
        }
        rows.push(values);
    }
    Ok(Table {
        col_labels: header,
        row_labels,
        rows,
    })
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.txt"))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
}

/// MatrixMarket coordinate file with integer (or integral real) entries.
fn read_mtx(path: &Path) -> Result<(usize, usize, Vec<u64>)> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let banner = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(input_err!("{} is empty", path.display())),
    };
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(input_err!("{}: missing MatrixMarket banner", path.display()));
    }
    if tokens[2] != "coordinate" {
        return Err(input_err!("{}: only coordinate format is supported", path.display()));
    }
    if tokens[3] != "integer" && tokens[3] != "real" {
        return Err(input_err!("{}: unsupported field type {}", path.display(), tokens[3]));
    }
    if tokens[4] != "general" {
        return Err(input_err!("{}: unsupported symmetry {}", path.display(), tokens[4]));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut dense = Vec::new();
    let mut seen = 0usize;
    for (lineno, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let lineno = lineno + 1;
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                let nums: Vec<usize> = parts
                    .iter()
                    .map(|p| p.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| input_err!("{}: bad size line {lineno}", path.display()))?;
                if nums.len() != 3 {
                    return Err(input_err!("{}: bad size line {lineno}", path.display()));
                }
                size = Some((nums[0], nums[1], nums[2]));
                dense = vec![0u64; nums[0] * nums[1]];
            }
            Some((rows, cols, _)) => {
                if parts.len() != 3 {
                    return Err(input_err!("{}: line {lineno} needs 3 fields", path.display()));
                }
                let i: usize = parts[0].parse().map_err(|_| input_err!("bad row index on line {lineno}"))?;
                let j: usize = parts[1].parse().map_err(|_| input_err!("bad column index on line {lineno}"))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(input_err!("entry ({i}, {j}) on line {lineno} is out of range"));
                }
                let v = parse_count(parts[2], i, j)?;
                dense[(i - 1) * cols + (j - 1)] = v;
                seen += 1;
            }
        }
    }
    let Some((rows, cols, nnz)) = size else {
        return Err(input_err!("{}: missing size line", path.display()));
    };
    if seen != nnz {
        return Err(input_err!("{}: header promises {nnz} entries, found {seen}", path.display()));
    }
    Ok((rows, cols, dense))
}

fn transpose(rows: usize, cols: usize, data: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

/// Reads a cells-by-genes count matrix from `.csv` or `.mtx`. With
/// `transpose`, the file is taken to be genes-by-cells.
///
/// Library sizes are set to one; callers replace them.
pub fn read_counts(path: &Path, transpose_input: bool) -> Result<CountMatrix> {
    let ext = path.extension().map(|e| e.to_string_lossy().to_lowercase());
    let (mut rows, mut cols, mut data, col_labels, row_labels) = match ext.as_deref() {
        Some("csv") => {
            let t = read_count_table(path)?;
            let (r, c) = (t.rows.len(), t.col_labels.len());
            (r, c, t.rows.concat(), Some(t.col_labels), t.row_labels)
        }
        Some("mtx") => {
            let (r, c, d) = read_mtx(path)?;
            // Sidecars are named after what they describe; map them onto
            // the file's own rows and columns.
            let (cols_file, rows_file) = if transpose_input {
                (sidecar(path, "cells"), sidecar(path, "genes"))
            } else {
                (sidecar(path, "genes"), sidecar(path, "cells"))
            };
            let cols_named = if cols_file.exists() { Some(read_lines(&cols_file)?) } else { None };
            let rows_named = if rows_file.exists() { Some(read_lines(&rows_file)?) } else { None };
            (r, c, d, cols_named, rows_named)
        }
        _ => bail!(InputError(format!(
            "{}: unknown extension, expected .csv or .mtx",
            path.display()
        ))),
    };
    if let Some(l) = &col_labels {
        if l.len() != cols {
            return Err(input_err!("{} column labels for {cols} columns", l.len()));
        }
    }
    if let Some(l) = &row_labels {
        if l.len() != rows {
            return Err(input_err!("{} row labels for {rows} rows", l.len()));
        }
    }
    let (genes, cells) = if transpose_input {
        data = transpose(rows, cols, &data);
        std::mem::swap(&mut rows, &mut cols);
        (row_labels, col_labels)
    } else {
        (col_labels, row_labels)
    };
    if rows == 0 || cols == 0 {
        return Err(input_err!("{} has no counts", path.display()));
    }
    let mut m = CountMatrix::from_counts(rows, cols, data)?;
    if let Some(g) = genes {
        m = m.with_gene_names(g)?;
    }
    if let Some(c) = cells {
        m = m.with_cell_ids(c)?;
    }
    Ok(m)
}

/// Reads `cell_id,S` rows, checking length and, when present, cell order.
pub fn read_lib_sizes(path: &Path, counts: &CountMatrix) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut ids = Vec::new();
    let mut sizes = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| input_err!("{}: {e}", path.display()))?;
        if rec.len() != 2 {
            return Err(input_err!("{}: row {} needs cell_id,S", path.display(), idx + 1));
        }
        let s: f64 = rec[1]
            .parse()
            .map_err(|_| input_err!("{}: bad library size at row {}", path.display(), idx + 1))?;
        if !(s > 0.0 && s.is_finite()) {
            return Err(input_err!("library size at row {} must be positive", idx + 1));
        }
        ids.push(rec[0].to_string());
        sizes.push(s);
    }
    if sizes.len() != counts.n() {
        return Err(input_err!("{} library sizes for {} cells", sizes.len(), counts.n()));
    }
    if let Some(cells) = counts.cell_ids() {
        if let Some(i) = (0..cells.len()).find(|&i| cells[i] != ids[i]) {
            return Err(input_err!(
                "library size row {} is for {:?}, counts row is {:?}",
                i + 1,
                ids[i],
                cells[i]
            ));
        }
    }
    Ok(sizes)
}

pub fn write_lib_sizes(path: &Path, cells: &[String], sizes: &[f64]) -> Result<()> {
    let mut out = String::from("cell_id,S\n");
    for (c, s) in cells.iter().zip(sizes) {
        out.push_str(&format!("{c},{}\n", fmt_f64(*s)));
    }
    write_file(path, &out)
}

pub fn write_counts(path: &Path, m: &CountMatrix) -> Result<()> {
    let mut out = m.gene_labels().join(",");
    out.push('\n');
    for i in 0..m.n() {
        let row: Vec<String> = m.row(i).iter().map(u64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Dense matrix with a header of labels.
pub fn write_matrix(path: &Path, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut out = labels.join(",");
    out.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Square matrix from CSV, with an optional label header.
pub fn read_matrix(path: &Path) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in csv_reader(path)?.into_records().enumerate() {
        let rec = rec.map_err(|e| input_err!("{}: {e}", path.display()))?;
        if idx == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            labels = Some(rec.iter().map(str::to_string).collect());
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>()
                    .map_err(|_| input_err!("{}: bad number at line {} col {}", path.display(), idx + 1, c + 1))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let p = rows.len();
    if p == 0 {
        return Err(input_err!("{} holds no matrix", path.display()));
    }
    if rows.iter().any(|r| r.len() != p) {
        return Err(input_err!("{} is not a square matrix", path.display()));
    }
    if labels.as_ref().is_some_and(|l| l.len() != p) {
        return Err(input_err!("{}: header does not match matrix size", path.display()));
    }
    Ok((labels, DMatrix::from_fn(p, p, |i, j| rows[i][j])))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, contents: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, contents).unwrap();
        (dir, path)
    }

    #[test]
    fn small_csv() {
        let (_d, p) = tmp("c.csv", "g1,g2\n1,2\n3,4\n");
        let m = read_counts(&p, false).unwrap();
        assert_eq!(m.counts(), &[1, 2, 3, 4]);
        assert_eq!(m.gene_names().unwrap(), &["g1".to_string(), "g2".to_string()]);
        assert!(m.cell_ids().is_none());
    }

    #[test]
    fn csv_with_cell_column_and_transpose() {
        let (_d, p) = tmp("c.csv", "cell,a,b,c\nx,1,0,2\ny,0,5,1\n");
        let m = read_counts(&p, false).unwrap();
        assert_eq!((m.n(), m.p()), (2, 3));
        assert_eq!(m.cell_ids().unwrap(), &["x".to_string(), "y".to_string()]);
        let t = read_counts(&p, true).unwrap();
        assert_eq!((t.n(), t.p()), (3, 2));
        assert_eq!(t.counts(), &[1, 0, 0, 5, 2, 1]);
        assert_eq!(t.gene_names().unwrap(), &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn rejects_fractional_and_negative() {
        let (_d, p) = tmp("c.csv", "g1,g2\n1.5,2\n3,4\n");
        let err = read_counts(&p, false).unwrap_err();
        assert_eq!(err.to_string(), "non-integer count at row 1 col 1");
        assert!(err.downcast_ref::<InputError>().is_some());
        let (_d, p) = tmp("c.csv", "g1,g2\n1,2\n3,-4\n");
        assert_eq!(read_counts(&p, false).unwrap_err().to_string(), "negative count at row 2 col 2");
        let (_d, p) = tmp("c.csv", "g1,g2\n1,2,3\n");
        assert!(read_counts(&p, false).is_err());
    }

    #[test]
    fn mtx_matches_dense_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        fs::write(&csv, "a,b,c\n1,0,2\n0,0,3\n").unwrap();
        let mtx = dir.path().join("m.mtx");
        fs::write(
            &mtx,
            "%%MatrixMarket matrix coordinate integer general\n% comment\n2 3 4\n1 1 1\n1 3 2\n2 3 3\n2 1 0\n",
        )
        .unwrap();
        fs::write(dir.path().join("m.genes.txt"), "a\nb\nc\n").unwrap();
        let a = read_counts(&csv, false).unwrap();
        let b = read_counts(&mtx, false).unwrap();
        assert_eq!(a.counts(), b.counts());
        assert_eq!(a.gene_names(), b.gene_names());

        fs::write(dir.path().join("m.cells.txt"), "only-one\n").unwrap();
        assert!(read_counts(&mtx, false).is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let m = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, -0.1, -0.1, 2.0]);
        write_matrix(&path, &["g1".into(), "g2".into()], &m).unwrap();
        let (labels, back) = read_matrix(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(labels.unwrap(), vec!["g1".to_string(), "g2".to_string()]);
    }
}
