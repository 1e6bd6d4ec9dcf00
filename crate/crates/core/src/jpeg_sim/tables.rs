use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Luminance base table from Annex K of ITU-T T.81, natural (row-major) order.
pub const STD_LUMINANCE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quality factors of the standard-table part of the training registry.
pub const TRAINING_QFS: [u8; 10] = [20, 25, 30, 35, 40, 50, 60, 70, 80, 90];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TableOrigin {
    StandardQf,
    Photoshop,
    Parsed,
    User,
}

/// An 8x8 quantization matrix in natural order, tagged with the compression
/// class it stands for.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuantTable {
    values: [u16; 64],
    label: String,
    origin: TableOrigin,
}

impl QuantTable {
    pub fn new(values: [u16; 64], label: impl Into<String>, origin: TableOrigin) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| v == 0) {
            return Err(Error::invalid(format!(
                "quantization entry ({}, {}) is zero",
                i / 8,
                i % 8
            )));
        }
        let label = label.into();
        if label.is_empty() || label.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("bad table label {label:?}")));
        }
        Ok(QuantTable {
            values,
            label,
            origin,
        })
    }

    pub fn values(&self) -> &[u16; 64] {
        &self.values
    }

    /// Entry at `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> u16 {
        self.values[row * 8 + col]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn origin(&self) -> TableOrigin {
        self.origin
    }

    pub fn relabel(mut self, label: impl Into<String>, origin: TableOrigin) -> Result<Self> {
        self.label = label.into();
        self.origin = origin;
        QuantTable::new(self.values, self.label, self.origin)
    }

    /// L1 distance between the two matrices.
    pub fn l1_distance(&self, other: &QuantTable) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).abs())
            .sum()
    }
}

impl fmt::Display for QuantTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.label)?;
        for row in self.values.chunks(8) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:>4}")).collect();
            writeln!(f, "{}", line.join(""))?;
        }
        Ok(())
    }
}

/// Standard luminance table scaled to quality `qf` with the IJG scaling law.
pub fn qf_to_table(qf: u32) -> Result<QuantTable> {
    if !(1..=100).contains(&qf) {
        return Err(Error::invalid(format!("quality factor {qf} outside [1, 100]")));
    }
    let scale = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    let mut values = [0u16; 64];
    for (v, &base) in values.iter_mut().zip(STD_LUMINANCE.iter()) {
        *v = ((u32::from(base) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    QuantTable::new(values, format!("QF{qf}"), TableOrigin::StandardQf)
}

/// Closest standard quality factor by L1 distance; ties go to the larger QF.
pub fn nearest_standard_qf(table: &QuantTable) -> (u32, f64) {
    let mut best = (0, f64::INFINITY);
    for qf in 1..=100 {
        let d = table.l1_distance(&qf_to_table(qf).expect("qf in range"));
        if d <= best.1 {
            best = (qf, d);
        }
    }
    best
}

/// Ordered set of compression classes used to draw training pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressionClassRegistry {
    tables: Vec<QuantTable>,
}

impl CompressionClassRegistry {
    pub fn new(tables: Vec<QuantTable>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &tables {
            if !seen.insert(t.label()) {
                return Err(Error::invalid(format!("duplicate table label {}", t.label())));
            }
        }
        Ok(CompressionClassRegistry { tables })
    }

    /// The ten standard-QF classes of the training list.
    pub fn standard() -> Self {
        Self::from_qfs(&TRAINING_QFS.map(u32::from)).expect("static list is valid")
    }

    /// Standard classes followed by the Photoshop tables read from `path`.
    pub fn with_photoshop_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        let ps = parse_table_file(&text, TableOrigin::Photoshop).map_err(|e| e.at_path(path))?;
        let mut tables = Self::standard().tables;
        tables.extend(ps);
        Self::new(tables)
    }

    pub fn from_qfs(qfs: &[u32]) -> Result<Self> {
        Self::new(qfs.iter().map(|&q| qf_to_table(q)).collect::<Result<_>>()?)
    }

    /// Resolves labels such as `QF30` against the standard law, or against
    /// the tables of an optional extra file.
    pub fn from_labels(labels: &[String], extra: Option<&CompressionClassRegistry>) -> Result<Self> {
        let mut tables = Vec::with_capacity(labels.len());
        for label in labels {
            if let Some(t) = extra.and_then(|r| r.get(label)) {
                tables.push(t.clone());
            } else if let Some(qf) = label.strip_prefix("QF").and_then(|s| s.parse().ok()) {
                tables.push(qf_to_table(qf)?);
            } else {
                return Err(Error::invalid(format!("unknown compression class {label}")));
            }
        }
        Self::new(tables)
    }

    pub fn tables(&self) -> &[QuantTable] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&QuantTable> {
        self.tables.iter().find(|t| t.label() == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.tables.iter().map(|t| t.label().to_string()).collect()
    }
}

/// Parses the plain-text table format: each record is a label token followed
/// by 64 integers in natural order. `#` starts a comment.
pub fn parse_table_file(text: &str, origin: TableOrigin) -> Result<Vec<QuantTable>> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .peekable();
    let mut out = Vec::new();
    while let Some(label) = tokens.next() {
        if label.parse::<u32>().is_ok() {
            return Err(Error::invalid(format!(
                "expected a table label, found number {label}"
            )));
        }
        let mut values = [0u16; 64];
        for (i, v) in values.iter_mut().enumerate() {
            let tok = tokens.next().ok_or_else(|| {
                Error::invalid(format!("table {label}: only {i} of 64 entries"))
            })?;
            *v = tok
                .parse()
                .map_err(|_| Error::invalid(format!("table {label}: bad entry {tok:?}")))?;
        }
        out.push(QuantTable::new(values, label, origin)?);
    }
    Ok(out)
}

/// Inverse of [`parse_table_file`].
pub fn format_table_file(tables: &[QuantTable]) -> String {
    tables.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qf50_is_base_table() {
        assert_eq!(qf_to_table(50).unwrap().values(), &STD_LUMINANCE);
    }

    #[test]
    fn qf100_is_all_ones() {
        assert!(qf_to_table(100).unwrap().values().iter().all(|&v| v == 1));
    }

    #[test]
    fn qf35_dc_entry() {
        // scale = 5000 / 35 = 142 (integer), (16 * 142 + 50) / 100 = 23.22 -> 23;
        // the real-valued scale 142.857 also floors to 23.
        assert_eq!(qf_to_table(35).unwrap().at(0, 0), 23);
        let real = ((16.0 * (5000.0f64 / 35.0) + 50.0) / 100.0).floor();
        assert_eq!(real, 23.0);
    }

    #[test]
    fn qf_out_of_range() {
        assert!(matches!(qf_to_table(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(qf_to_table(101), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn nearest_qf_exact_members() {
        assert_eq!(nearest_standard_qf(&qf_to_table(70).unwrap()), (70, 0.0));
        let ones = QuantTable::new([1; 64], "ones", TableOrigin::User).unwrap();
        assert_eq!(nearest_standard_qf(&ones), (100, 0.0));
    }

    #[test]
    fn nearest_qf_matches_exhaustive_scan() {
        // A smooth non-standard table (flat 10s).
        let flat = QuantTable::new([10; 64], "flat10", TableOrigin::User).unwrap();
        let mut dists: Vec<(u32, f64)> = (1..=100)
            .map(|q| (q, flat.l1_distance(&qf_to_table(q).unwrap())))
            .collect();
        let min = dists.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        dists.retain(|d| d.1 == min);
        let expected = dists.iter().map(|d| d.0).max().unwrap();
        assert_eq!(nearest_standard_qf(&flat), (expected, min));
    }

    #[test]
    fn zero_entries_rejected() {
        let mut v = [1u16; 64];
        v[5] = 0;
        assert!(QuantTable::new(v, "z", TableOrigin::User).is_err());
    }

    #[test]
    fn registry_labels_unique() {
        let t = qf_to_table(30).unwrap();
        assert!(CompressionClassRegistry::new(vec![t.clone(), t]).is_err());
        assert_eq!(CompressionClassRegistry::standard().len(), 10);
    }

    #[test]
    fn table_file_roundtrip_and_photoshop_registry() {
        let tables: Vec<QuantTable> = (4..=12)
            .map(|i| {
                let mut v = [0u16; 64];
                for (k, e) in v.iter_mut().enumerate() {
                    *e = 1 + ((k as u16 * (13 - i)) % 40);
                }
                QuantTable::new(v, format!("PS{i}"), TableOrigin::Photoshop).unwrap()
            })
            .collect();
        let text = format_table_file(&tables);
        assert_eq!(parse_table_file(&text, TableOrigin::Photoshop).unwrap(), tables);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ps.txt");
        std::fs::write(&path, text).unwrap();
        let reg = CompressionClassRegistry::with_photoshop_file(&path).unwrap();
        assert_eq!(reg.len(), 19);
        assert_eq!(reg.get("PS7").unwrap().origin(), TableOrigin::Photoshop);
    }

    #[test]
    fn labels_resolve() {
        let reg =
            CompressionClassRegistry::from_labels(&["QF30".into(), "QF90".into()], None).unwrap();
        assert_eq!(reg.labels(), vec!["QF30", "QF90"]);
        assert!(CompressionClassRegistry::from_labels(&["PS9".into()], None).is_err());
    }
}
