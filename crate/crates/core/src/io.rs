//! Grouped CSV files.
//!
//! Two layouts are read:
//!
//! * a single CSV with a `group` column; rows sharing a group label form one
//!   group, groups are ordered by first appearance;
//! * a JSON manifest listing one CSV per group (or a row range of a shared
//!   CSV); its extension must be `.json`.
//!
//! Leading `# key=value` lines carry provenance. Values are written with the
//! shortest representation that parses back to the same `f64`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::GroupedDataset;
use crate::error::{EnciError, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const GROUP_COLUMN: &str = "group";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    /// Half-open range of data rows (0-based, header excluded) to take from
    /// `path`; the whole file when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupManifest {
    pub format_version: u32,
    pub variables: Vec<String>,
    pub groups: Vec<GroupEntry>,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> EnciError {
    EnciError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// A parsed CSV table with the physical line number of every data row.
struct Table {
    header: Vec<String>,
    header_line: u64,
    rows: Vec<(u64, csv::StringRecord)>,
    provenance: BTreeMap<String, String>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| EnciError::io(path, e))?;
    let mut provenance = BTreeMap::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else {
            if line.trim().is_empty() {
                continue;
            }
            break;
        };
        if let Some((k, v)) = rest.trim().split_once('=') {
            provenance.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let (header, header_line) = match records.next() {
        Some(Ok(r)) => (
            r.iter().map(str::to_string).collect::<Vec<_>>(),
            r.position().map_or(1, |p| p.line()),
        ),
        Some(Err(e)) => return Err(csv_err(path, e)),
        None => return Err(parse_err(path, 1, "file has no header")),
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec));
    }
    Ok(Table {
        header,
        header_line,
        rows,
        provenance,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> EnciError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => EnciError::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => parse_err(
            path,
            line,
            format!("expected {expected_len} fields, found {len}"),
        ),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        parse_err(path, line, format!("non-numeric value `{cell}` in column `{column}`"))
    })?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("non-finite value `{cell}` in column `{column}`"),
        ));
    }
    Ok(v)
}

/// Reads the rows of `table` in the column order given by `variables`.
fn numeric_rows(path: &Path, table: &Table, variables: &[String]) -> Result<Vec<(u64, Vec<f64>)>> {
    let cols: Vec<usize> = variables
        .iter()
        .map(|v| {
            table
                .header
                .iter()
                .position(|h| h == v)
                .ok_or_else(|| parse_err(path, table.header_line, format!("missing column `{v}`")))
        })
        .collect::<Result<_>>()?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            let vals = cols
                .iter()
                .zip(variables)
                .map(|(&c, name)| parse_cell(path, *line, name, &rec[c]))
                .collect::<Result<Vec<f64>>>()?;
            Ok((*line, vals))
        })
        .collect()
}

fn check_group_size(path: &Path, id: &str, rows: &[(u64, Vec<f64>)], first_line: u64) -> Result<()> {
    if rows.len() < 2 {
        return Err(parse_err(
            path,
            rows.first().map_or(first_line, |r| r.0),
            format!("group `{id}` has {} row(s), need at least 2", rows.len()),
        ));
    }
    Ok(())
}

fn to_matrix(rows: &[(u64, Vec<f64>)], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i].1[j])
}

/// Loads a grouped dataset from a manifest (`.json`) or a single CSV with a
/// `group` column.
pub fn load_grouped_csv(path: impl AsRef<Path>) -> Result<GroupedDataset> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        load_manifest(path)
    } else {
        load_single(path)
    }
}

fn load_single(path: &Path) -> Result<GroupedDataset> {
    let table = read_table(path)?;
    let gcol = table
        .header
        .iter()
        .position(|h| h == GROUP_COLUMN)
        .ok_or_else(|| parse_err(path, table.header_line, "missing `group` column"))?;
    let variables: Vec<String> = table
        .header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != gcol)
        .map(|(_, h)| h.clone())
        .collect();
    if variables.is_empty() {
        return Err(parse_err(path, table.header_line, "no variable columns"));
    }
    let rows = numeric_rows(path, &table, &variables)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<(u64, Vec<f64>)>> = HashMap::new();
    for ((line, rec), row) in table.rows.iter().zip(rows) {
        let id = rec[gcol].to_string();
        if id.is_empty() {
            return Err(parse_err(path, *line, "empty group label"));
        }
        by_id
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(row);
    }
    let mut groups = Vec::with_capacity(order.len());
    for id in &order {
        let rows = &by_id[id];
        check_group_size(path, id, rows, table.header_line)?;
        groups.push(to_matrix(rows, variables.len()));
    }
    if groups.len() < 2 {
        return Err(parse_err(
            path,
            table.header_line,
            format!("need at least 2 groups, found {}", groups.len()),
        ));
    }
    let mut data = GroupedDataset::new(variables, groups)?;
    data.provenance = table.provenance;
    Ok(data)
}

pub fn read_manifest(path: &Path) -> Result<GroupManifest> {
    let text = fs::read_to_string(path).map_err(|e| EnciError::io(path, e))?;
    let m: GroupManifest = serde_json::from_str(&text)
        .map_err(|e| parse_err(path, e.line() as u64, format!("invalid manifest: {e}")))?;
    if m.format_version != MANIFEST_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("unsupported manifest format_version {}", m.format_version),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for g in &m.groups {
        if !seen.insert(&g.id) {
            return Err(parse_err(path, 0, format!("duplicate group id `{}`", g.id)));
        }
    }
    Ok(m)
}

fn load_manifest(path: &Path) -> Result<GroupedDataset> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut tables: HashMap<PathBuf, Table> = HashMap::new();
    let mut groups = Vec::with_capacity(manifest.groups.len());
    let mut provenance = BTreeMap::new();
    for entry in &manifest.groups {
        let file = base.join(&entry.path);
        if !tables.contains_key(&file) {
            let t = read_table(&file)?;
            let expected: Vec<&String> = manifest.variables.iter().collect();
            let got: Vec<&String> = t.header.iter().filter(|h| *h != GROUP_COLUMN).collect();
            if got != expected {
                return Err(parse_err(
                    &file,
                    t.header_line,
                    format!(
                        "header {:?} does not match manifest variables {:?}",
                        t.header, manifest.variables
                    ),
                ));
            }
            for (k, v) in &t.provenance {
                provenance.entry(k.clone()).or_insert_with(|| v.clone());
            }
            tables.insert(file.clone(), t);
        }
        let table = &tables[&file];
        let all = numeric_rows(&file, table, &manifest.variables)?;
        let rows = match entry.rows {
            None => all,
            Some([a, b]) => {
                if a > b || b > all.len() {
                    return Err(parse_err(
                        path,
                        0,
                        format!("group `{}`: row range {a}..{b} outside 0..{}", entry.id, all.len()),
                    ));
                }
                all[a..b].to_vec()
            }
        };
        check_group_size(&file, &entry.id, &rows, table.header_line)?;
        groups.push(to_matrix(&rows, manifest.variables.len()));
    }
    if groups.len() < 2 {
        return Err(parse_err(path, 0, "manifest lists fewer than 2 groups"));
    }
    let mut data = GroupedDataset::new(manifest.variables, groups)?;
    data.provenance = provenance;
    Ok(data)
}

fn write_provenance(out: &mut String, provenance: &BTreeMap<String, String>) {
    for (k, v) in provenance {
        let clean = |s: &str| s.replace(['\n', '\r'], " ");
        out.push_str(&format!("# {}={}\n", clean(k).replace('=', "_"), clean(v)));
    }
}

fn csv_line(fields: impl IntoIterator<Item = String>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(fields)
        .map_err(|e| EnciError::InvalidDataset(e.to_string()))?;
    let bytes = w
        .into_inner()
        .map_err(|e| EnciError::InvalidDataset(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Single-file layout with provenance comments and a `group` column holding
/// the group index.
pub fn grouped_csv_string(data: &GroupedDataset) -> Result<String> {
    if data.n_groups() == 0 || data.n_vars() == 0 {
        return Err(EnciError::InvalidDataset("nothing to write".into()));
    }
    if data.variables().iter().any(|v| v == GROUP_COLUMN) {
        return Err(EnciError::InvalidDataset(format!(
            "variable name `{GROUP_COLUMN}` is reserved"
        )));
    }
    let mut out = String::new();
    write_provenance(&mut out, &data.provenance);
    out.push_str(&csv_line(
        std::iter::once(GROUP_COLUMN.to_string()).chain(data.variables().iter().cloned()),
    )?);
    for (g, m) in data.groups().iter().enumerate() {
        for r in 0..m.nrows() {
            out.push_str(&g.to_string());
            for v in m.row(r).iter() {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn save_grouped_csv(data: &GroupedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = grouped_csv_string(data)?;
    fs::write(path, text).map_err(|e| EnciError::io(path, e))
}

/// Manifest layout: `dir/manifest.json` plus one `group_<i>.csv` per group.
/// Returns the manifest path.
pub fn save_manifest_layout(data: &GroupedDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| EnciError::io(dir, e))?;
    let mut entries = Vec::with_capacity(data.n_groups());
    for (g, m) in data.groups().iter().enumerate() {
        let name = format!("group_{g}.csv");
        let mut out = String::new();
        if g == 0 {
            write_provenance(&mut out, &data.provenance);
        }
        out.push_str(&csv_line(data.variables().iter().cloned())?);
        for r in 0..m.nrows() {
            let cells: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let file = dir.join(&name);
        fs::write(&file, out).map_err(|e| EnciError::io(&file, e))?;
        entries.push(GroupEntry {
            id: g.to_string(),
            path: PathBuf::from(name),
            rows: None,
        });
    }
    let manifest = GroupManifest {
        format_version: MANIFEST_VERSION,
        variables: data.variables().to_vec(),
        groups: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| EnciError::io(&path, e))?;
    Ok(path)
}

/// A plain numeric table (header row, no `group` column required).
pub fn load_table(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, Vec<String>)> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let variables = table.header.clone();
    let rows = numeric_rows(path, &table, &variables)?;
    if rows.is_empty() {
        return Err(parse_err(path, table.header_line, "table has no data rows"));
    }
    Ok((to_matrix(&rows, variables.len()), variables))
}

pub fn save_table(data: &DMatrix<f64>, variables: &[String], provenance: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if variables.len() != data.ncols() {
        return Err(EnciError::DimensionMismatch {
            expected: data.ncols(),
            got: variables.len(),
        });
    }
    let mut out = String::new();
    write_provenance(&mut out, provenance);
    out.push_str(&csv_line(variables.iter().cloned())?);
    for r in 0..data.nrows() {
        let cells: Vec<String> = data.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| EnciError::io(path, e))
}

#[cfg(test)]
mod tests {
    #[test]
    fn shortest_float_text_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 123456789.12345679] {
            assert_eq!(v.to_string().parse::<f64>().unwrap(), v);
        }
    }
}
