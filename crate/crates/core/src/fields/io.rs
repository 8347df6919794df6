//! CSV dump of per-point field values.
//!
//! Layout: a header `i,j,k,c0,c1,...` followed by one row per grid point in
//! lexicographic `(i, j, k)` order (`k` fastest). Values are written with the
//! shortest round-trip representation, so a dump reloads bit-for-bit.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::domain::{DomainChart, GridShape};
use crate::error::{Error, Result};
use crate::target::Target;

use super::{MapField, SectionField};

/// Raw contents of a field dump.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData {
    pub shape: GridShape,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_field_csv(path: &Path, shape: GridShape, dim: usize, values: &[f64]) -> Result<()> {
    if values.len() != shape.len() * dim {
        return Err(Error::Validation("field length does not match grid".into()));
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        let mut header = vec!["i".to_string(), "j".to_string(), "k".to_string()];
        header.extend((0..dim).map(|c| format!("c{c}")));
        w.write_record(&header)?;
        for (idx, v) in values.chunks_exact(dim).enumerate() {
            let [i, j, k] = shape.unravel(idx);
            let mut row = vec![i.to_string(), j.to_string(), k.to_string()];
            row.extend(v.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<FieldData> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.len().checked_sub(3).filter(|&d| d > 0).ok_or_else(|| {
        Error::Validation(format!("{}: expected columns i,j,k followed by components", path.display()))
    })?;
    let mut index = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_idx = |c: usize| -> Result<usize> {
            rec[c].trim().parse().map_err(|_| Error::Validation(format!("row {row}: bad grid index '{}'", &rec[c])))
        };
        index.push([parse_idx(0)?, parse_idx(1)?, parse_idx(2)?]);
        for c in 0..dim {
            let v: f64 = rec[3 + c]
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("row {row}: bad value '{}'", &rec[3 + c])))?;
            values.push(v);
        }
    }
    let last = index.last().copied().ok_or_else(|| Error::Validation("empty field dump".into()))?;
    let shape = GridShape { n: [last[0] + 1, last[1] + 1, last[2] + 1] };
    if index.len() != shape.len() {
        return Err(Error::Validation(format!("field dump has {} rows, grid needs {}", index.len(), shape.len())));
    }
    for (idx, ijk) in index.iter().enumerate() {
        if shape.unravel(idx) != *ijk {
            return Err(Error::Validation(format!("row {idx} is out of lexicographic order")));
        }
    }
    Ok(FieldData { shape, dim, values })
}

impl FieldData {
    fn check_chart(&self, chart: &DomainChart) -> Result<()> {
        if self.shape != chart.shape() {
            return Err(Error::Validation(format!(
                "field grid {:?} does not match chart grid {:?}",
                self.shape.n,
                chart.shape().n
            )));
        }
        Ok(())
    }
}

impl MapField {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_field_csv(path, self.chart.shape(), self.dim(), &self.values)
    }

    pub fn read_csv(path: &Path, chart: Arc<DomainChart>, target: Target) -> Result<Self> {
        let data = read_field_csv(path)?;
        data.check_chart(&chart)?;
        if data.dim != target.ambient_dim() {
            return Err(Error::Validation(format!(
                "field has {} components, {target} needs {}",
                data.dim,
                target.ambient_dim()
            )));
        }
        MapField::new(chart, target, data.values)
    }
}

impl SectionField {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_field_csv(path, self.chart.shape(), self.dim, &self.values)
    }

    pub fn read_csv(path: &Path, chart: Arc<DomainChart>) -> Result<Self> {
        let data = read_field_csv(path)?;
        data.check_chart(&chart)?;
        SectionField::new(chart, data.dim, data.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_chart;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn csv_round_trip_is_bitwise(seed in 0u64..1000) {
            let chart = Arc::new(build_chart("twisted-torus", [8, 8, 8]).unwrap());
            let f = MapField::from_fn(Arc::clone(&chart), Target::Sphere { n: 3 }, |p| {
                vec![p[0].cos(), (p[1] + seed as f64).sin(), 0.3 * p[2].cos(), 1.0]
            }).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f.csv");
            f.write_csv(&path).unwrap();
            let g = MapField::read_csv(&path, Arc::clone(&chart), f.target()).unwrap();
            prop_assert_eq!(f.values(), g.values());
        }
    }

    #[test]
    fn rejects_mismatched_grid() {
        let chart = Arc::new(build_chart("twisted-torus", [8, 8, 8]).unwrap());
        let other = Arc::new(build_chart("twisted-torus", [8, 8, 10]).unwrap());
        let v = SectionField::zeros(Arc::clone(&chart), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        v.write_csv(&path).unwrap();
        assert!(SectionField::read_csv(&path, Arc::clone(&chart)).is_ok());
        assert!(matches!(SectionField::read_csv(&path, other), Err(Error::Validation(_))));
        assert!(matches!(MapField::read_csv(&path, chart, Target::Sphere { n: 2 }), Err(Error::Validation(_))));
    }
}
