//! CSV loading for point clouds and empirical targets.
//!
//! Lines starting with `#` are skipped. A header row is optional and detected by the
//! first record failing to parse as numbers; a header column named `weight` or `w`
//! marks the weight column of an empirical support.

use std::path::Path;

use crate::swgrad::PointCloud;
use crate::targets::ProjectedTarget;
use crate::{invalid, Error, Result};

struct Table {
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

fn read_table(reader: impl std::io::Read) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => header = Some(record.iter().map(str::to_owned).collect()),
            Err(e) => return Err(invalid(format!("row {}: {e}", line + 1))),
        }
    }
    if rows.is_empty() {
        return Err(invalid("csv file has no data rows"));
    }
    let width = rows[0].len();
    if let Some(row) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::LengthMismatch(width, row.len()));
    }
    Ok(Table { header, rows })
}

pub fn parse_cloud_csv(reader: impl std::io::Read) -> Result<PointCloud> {
    let table = read_table(reader)?;
    PointCloud::from_points(&table.rows)
}

/// A point cloud with one row per particle and one column per coordinate.
pub fn read_cloud_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_cloud_csv(std::fs::File::open(path)?)
}

pub fn parse_empirical_csv(reader: impl std::io::Read) -> Result<ProjectedTarget> {
    let table = read_table(reader)?;
    let weight_col = table.header.as_ref().and_then(|h| {
        h.iter()
            .position(|name| name.eq_ignore_ascii_case("weight") || name.eq_ignore_ascii_case("w"))
    });
    let width = table.rows[0].len();
    let dim = width - usize::from(weight_col.is_some());
    let mut points = Vec::with_capacity(table.rows.len() * dim);
    let mut weights = weight_col.map(|_| Vec::with_capacity(table.rows.len()));
    for row in &table.rows {
        for (k, v) in row.iter().enumerate() {
            if Some(k) == weight_col {
                weights.as_mut().map(|w| w.push(*v));
            } else {
                points.push(*v);
            }
        }
    }
    ProjectedTarget::empirical(dim, points, weights)
}

/// An empirical target: `d` coordinate columns plus an optional `weight` column.
pub fn read_empirical_csv(path: impl AsRef<Path>) -> Result<ProjectedTarget> {
    parse_empirical_csv(std::fs::File::open(path)?)
}
