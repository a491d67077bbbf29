//! Wide-CSV ingestion driven by a schema file.
//!
//! The wide layout has one row per choice situation with alternative
//! attributes spread across suffixed columns (`tt1`, `tt2`, ...). The schema
//! maps CSV columns to roles: per-alternative attribute columns, shared
//! characteristics, and the chosen-alternative column. Units are declared in
//! the schema so downstream unit conversions (e.g. minutes to hours for
//! value-of-travel-time) are explicit.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{ChoiceDataset, ColumnKind, DatasetMeta};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One alternative attribute: a name, unit, kind, and one CSV column per
/// alternative (the list order defines the alternative indices).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    #[serde(default = "default_continuous")]
    pub kind: ColumnKind,
    pub columns: Vec<String>,
}

/// One shared individual characteristic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    #[serde(default = "default_binary")]
    pub kind: ColumnKind,
    pub column: String,
}

fn default_continuous() -> ColumnKind {
    ColumnKind::Continuous
}

fn default_binary() -> ColumnKind {
    ColumnKind::Binary
}

/// Schema file contents (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub version: u32,
    pub choice_column: String,
    /// The choice-column value that denotes alternative 0.
    #[serde(default)]
    pub choice_base: i64,
    pub attribute: Vec<AttributeSpec>,
    #[serde(default)]
    pub shared: Vec<SharedSpec>,
}

impl Schema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: Schema =
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {}", e)))?;
        if schema.version != SCHEMA_VERSION {
            return Err(Error::Version {
                what: "schema",
                found: schema.version,
                expected: SCHEMA_VERSION,
            });
        }
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.attribute.is_empty() {
            return Err(Error::Config("schema declares no attributes".into()));
        }
        let j = self.attribute[0].columns.len();
        if j < 2 {
            return Err(Error::Config("need at least 2 alternatives".into()));
        }
        for a in &self.attribute {
            if a.columns.len() != j {
                return Err(Error::Config(format!(
                    "attribute `{}` lists {} columns, expected {}",
                    a.name,
                    a.columns.len(),
                    j
                )));
            }
        }
        Ok(())
    }

    pub fn n_alternatives(&self) -> usize {
        self.attribute[0].columns.len()
    }

    /// Index of a named attribute.
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attribute.iter().position(|a| a.name == name)
    }
}

/// Parse a wide CSV into a [`ChoiceDataset`] according to `schema`.
///
/// Rows with missing required cells (empty or `NA`) are dropped and counted
/// in `meta.dropped_rows`; a cell that is present but not numeric is an
/// error naming the row and column.
pub fn load_wide_csv(path: &Path, schema: &Schema) -> Result<ChoiceDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();

    let lookup = |name: &str| -> Result<usize> {
        col_index.get(name.trim()).copied().ok_or_else(|| {
            Error::Dataset(format!("unknown column `{}` (not in CSV header)", name))
        })
    };

    let j = schema.n_alternatives();
    let k_x = schema.attribute.len();
    let k_q = schema.shared.len();
    let choice_col = lookup(&schema.choice_column)?;
    let mut attr_cols = Vec::with_capacity(k_x);
    for a in &schema.attribute {
        let cols: Result<Vec<usize>> = a.columns.iter().map(|c| lookup(c)).collect();
        attr_cols.push(cols?);
    }
    let shared_cols: Result<Vec<usize>> = schema.shared.iter().map(|s| lookup(&s.column)).collect();
    let shared_cols = shared_cols?;

    let mut x = Vec::new();
    let mut q = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0usize;

    'rows: for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut needed: Vec<usize> = vec![choice_col];
        for cols in &attr_cols {
            needed.extend_from_slice(cols);
        }
        needed.extend_from_slice(&shared_cols);
        for &c in &needed {
            match record.get(c) {
                None => {
                    dropped += 1;
                    continue 'rows;
                }
                Some(cell) => {
                    let t = cell.trim();
                    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
                    {
                        dropped += 1;
                        continue 'rows;
                    }
                }
            }
        }
        let parse = |c: usize| -> Result<f64> {
            let cell = record.get(c).unwrap().trim();
            cell.parse::<f64>().map_err(|_| Error::ParseCell {
                row: row_idx + 2, // 1-based, after the header line
                column: headers.get(c).unwrap_or("?").to_string(),
                value: cell.to_string(),
            })
        };
        let choice_raw = parse(choice_col)?;
        let choice = choice_raw as i64 - schema.choice_base;
        if choice_raw.fract() != 0.0 || choice < 0 || choice >= j as i64 {
            return Err(Error::Dataset(format!(
                "choice value {} out of range at row {}",
                choice_raw,
                row_idx + 2
            )));
        }
        // row-major [alt][attr] for this observation
        let mut row_x = vec![0.0; j * k_x];
        for (k, cols) in attr_cols.iter().enumerate() {
            for (alt, &c) in cols.iter().enumerate() {
                row_x[alt * k_x + k] = parse(c)?;
            }
        }
        x.extend_from_slice(&row_x);
        for &c in &shared_cols {
            q.push(parse(c)?);
        }
        y.push(choice as usize);
    }

    let meta = DatasetMeta {
        attr_names: schema.attribute.iter().map(|a| a.name.clone()).collect(),
        attr_units: schema.attribute.iter().map(|a| a.unit.clone()).collect(),
        attr_kinds: schema.attribute.iter().map(|a| a.kind).collect(),
        shared_names: schema.shared.iter().map(|s| s.name.clone()).collect(),
        shared_kinds: schema.shared.iter().map(|s| s.kind).collect(),
        standardization: None,
        dropped_rows: dropped,
    };
    let mut ds = ChoiceDataset::new(j, k_x, k_q, x, q, y, meta)?;
    ds.meta.dropped_rows = dropped;
    Ok(ds)
}

/// Serialize a dataset back to wide CSV under the same schema. Numeric
/// formatting is shortest-round-trip, so retained rows re-load value-identical.
pub fn write_wide_csv(ds: &ChoiceDataset, schema: &Schema, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![schema.choice_column.clone()];
    for a in &schema.attribute {
        header.extend(a.columns.iter().cloned());
    }
    for s in &schema.shared {
        header.push(s.column.clone());
    }
    w.write_record(&header)?;
    for i in 0..ds.n {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(format!("{}", ds.choices()[i] as i64 + schema.choice_base));
        for (k, a) in schema.attribute.iter().enumerate() {
            for alt in 0..a.columns.len() {
                rec.push(format!("{}", ds.x_at(i, alt, k)));
            }
        }
        for k in 0..ds.k_q {
            rec.push(format!("{}", ds.q_at(i, k)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn two_row_schema() -> Schema {
        Schema::from_toml(
            r#"
            version = 1
            choice_column = "choice"
            choice_base = 0

            [[attribute]]
            name = "time"
            unit = "minutes"
            kind = "continuous"
            columns = ["t1", "t2"]

            [[attribute]]
            name = "cost"
            unit = "chf"
            kind = "continuous"
            columns = ["c1", "c2"]

            [[shared]]
            name = "income"
            column = "inc"
            kind = "continuous"
            "#,
        )
        .unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn two_row_file_round_trips() {
        let schema = two_row_schema();
        let f = write_tmp("choice,t1,t2,c1,c2,inc\n0,10,20,1.5,2.5,50\n1,30,5,3.25,0.75,60\n");
        let ds = load_wide_csv(f.path(), &schema).unwrap();
        assert_eq!((ds.n, ds.j, ds.k_x, ds.k_q), (2, 2, 2, 1));
        assert_eq!(ds.x_at(0, 0, 0), 10.0);
        assert_eq!(ds.x_at(0, 1, 0), 20.0);
        assert_eq!(ds.x_at(1, 1, 1), 0.75);
        assert_eq!(ds.q_at(1, 0), 60.0);
        assert_eq!(ds.choices(), &[0, 1]);

        let out = tempfile::NamedTempFile::new().unwrap();
        write_wide_csv(&ds, &schema, out.path()).unwrap();
        let ds2 = load_wide_csv(out.path(), &schema).unwrap();
        assert_eq!(ds.x_raw(), ds2.x_raw());
        assert_eq!(ds.q_raw(), ds2.q_raw());
        assert_eq!(ds.choices(), ds2.choices());
    }

    #[test]
    fn missing_cell_drops_row_and_counts() {
        let schema = two_row_schema();
        let f = write_tmp("choice,t1,t2,c1,c2,inc\n0,10,20,1.5,2.5,50\n1,30,,3.25,0.75,60\n");
        let ds = load_wide_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.n, 1);
        assert_eq!(ds.meta.dropped_rows, 1);
    }

    #[test]
    fn unknown_column_is_an_error() {
        let schema = two_row_schema();
        let f = write_tmp("choice,t1,t2,c1,c2\n0,10,20,1.5,2.5\n");
        let err = load_wide_csv(f.path(), &schema).unwrap_err();
        assert!(err.to_string().contains("unknown column"));
    }

    #[test]
    fn unparseable_numeric_names_row_and_column() {
        let schema = two_row_schema();
        let f = write_tmp("choice,t1,t2,c1,c2,inc\n0,10,twenty,1.5,2.5,50\n");
        match load_wide_csv(f.path(), &schema) {
            Err(Error::ParseCell { row, column, value }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "t2");
                assert_eq!(value, "twenty");
            }
            other => panic!("expected ParseCell, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn schema_version_is_checked() {
        let err = Schema::from_toml("version = 9\nchoice_column = \"c\"\n[[attribute]]\nname=\"a\"\ncolumns=[\"a1\",\"a2\"]\n");
        assert!(matches!(err, Err(Error::Version { .. })));
    }
}
