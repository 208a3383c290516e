//! Observation table, instrument encoding and the pre-estimation screens.
//!
//! The instrument takes one of four values `0a, 1a, 0b, 1b`: the stage
//! (`a` or `b`, i.e. which version of the encouragement was in force) and the
//! randomized arm within that stage. Covariates are stored row-major without
//! an intercept column; design matrices add it when needed.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the instrument in force (the stratification variable).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    A,
    B,
}

/// Randomized arm within a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrumentCode {
    pub stage: Stage,
    pub arm: Arm,
}

impl InstrumentCode {
    pub const ZERO_A: Self = Self::new(Stage::A, Arm::Zero);
    pub const ONE_A: Self = Self::new(Stage::A, Arm::One);
    pub const ZERO_B: Self = Self::new(Stage::B, Arm::Zero);
    pub const ONE_B: Self = Self::new(Stage::B, Arm::One);

    /// All four codes in index order.
    pub const ALL: [Self; 4] = [Self::ZERO_A, Self::ONE_A, Self::ZERO_B, Self::ONE_B];

    pub const fn new(stage: Stage, arm: Arm) -> Self {
        Self { stage, arm }
    }

    /// Dense index in `0..4`, matching the order of [`InstrumentCode::ALL`].
    pub const fn index(self) -> usize {
        let s = match self.stage {
            Stage::A => 0,
            Stage::B => 2,
        };
        let a = match self.arm {
            Arm::Zero => 0,
            Arm::One => 1,
        };
        s + a
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        ["0a", "1a", "0b", "1b"][self.index()]
    }
}

impl fmt::Display for InstrumentCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstrumentCode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "0a" => Ok(Self::ZERO_A),
            "1a" => Ok(Self::ONE_A),
            "0b" => Ok(Self::ZERO_B),
            "1b" => Ok(Self::ONE_B),
            other => Err(format!(
                "invalid instrument code {other:?}, expected one of 0a, 1a, 0b, 1b"
            )),
        }
    }
}

impl Serialize for InstrumentCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for InstrumentCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The analysis dataset: one row per participant.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    names: Vec<String>,
    z: Vec<InstrumentCode>,
    x: Vec<f64>,
    d: Vec<u8>,
    y: Vec<f64>,
    offset: Option<Vec<f64>>,
}

impl ObservationTable {
    /// Builds a table from columns. `x` is row-major with `names.len()`
    /// columns per row.
    pub fn new(
        names: Vec<String>,
        z: Vec<InstrumentCode>,
        x: Vec<f64>,
        d: Vec<u8>,
        y: Vec<f64>,
        offset: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = z.len();
        let dx = names.len();
        if x.len() != n * dx {
            return Err(Error::InvalidTable(format!(
                "covariate buffer has {} values, expected {n} rows x {dx} columns",
                x.len()
            )));
        }
        if d.len() != n || y.len() != n {
            return Err(Error::InvalidTable("column lengths differ".into()));
        }
        if let Some(i) = d.iter().position(|&v| v > 1) {
            return Err(Error::InvalidTable(format!("row {i}: treatment must be 0 or 1")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTable(format!("row {i}: outcome is not finite")));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTable(format!(
                "row {}: covariate is not finite",
                i / dx.max(1)
            )));
        }
        if let Some(off) = &offset {
            if off.len() != n {
                return Err(Error::InvalidTable("offset column length differs".into()));
            }
            if let Some(i) = off.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidTable(format!("row {i}: offset must be positive")));
            }
        }
        Ok(Self {
            names,
            z,
            x,
            d,
            y,
            offset,
        })
    }

    /// Convenience constructor with generated covariate names `x1..x{dx}`.
    pub fn from_rows(
        dx: usize,
        z: Vec<InstrumentCode>,
        x: Vec<f64>,
        d: Vec<u8>,
        y: Vec<f64>,
        offset: Option<Vec<f64>>,
    ) -> Result<Self> {
        let names = (1..=dx).map(|j| format!("x{j}")).collect();
        Self::new(names, z, x, d, y, offset)
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn dx(&self) -> usize {
        self.names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.names
    }

    pub fn z(&self) -> &[InstrumentCode] {
        &self.z
    }

    pub fn d(&self) -> &[u8] {
        &self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    /// Covariates of row `i` (no intercept).
    pub fn x_row(&self, i: usize) -> &[f64] {
        let dx = self.dx();
        &self.x[i * dx..(i + 1) * dx]
    }

    /// Row-major covariate buffer.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn cell_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for z in &self.z {
            c[z.index()] += 1;
        }
        c
    }

    /// Returns a copy with the outcome replaced by `f(y)`.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut t = self.clone();
        t.y = self.y.iter().map(|&v| f(v)).collect();
        if t.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTable("mapped outcome is not finite".into()));
        }
        Ok(t)
    }

    /// Returns a copy with each covariate row replaced by `f(row)`.
    pub fn map_covariates(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut x = Vec::with_capacity(self.x.len());
        for i in 0..self.n() {
            let row = f(self.x_row(i));
            if row.len() != self.dx() {
                return Err(Error::InvalidTable("covariate map changed dimension".into()));
            }
            x.extend(row);
        }
        Self::new(
            self.names.clone(),
            self.z.clone(),
            x,
            self.d.clone(),
            self.y.clone(),
            self.offset.clone(),
        )
    }

    /// Table restricted to the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let dx = self.dx();
        let mut x = Vec::with_capacity(rows.len() * dx);
        for &i in rows {
            x.extend_from_slice(self.x_row(i));
        }
        Self {
            names: self.names.clone(),
            z: rows.iter().map(|&i| self.z[i]).collect(),
            x,
            d: rows.iter().map(|&i| self.d[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            offset: self
                .offset
                .as_ref()
                .map(|o| rows.iter().map(|&i| o[i]).collect()),
        }
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    /// Reads `z,x1,...,x{d_x},d,y[,offset]` with a mandatory header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let parse_err = |message: String| Error::Parse { line: 1, message };
        if cols.first() != Some(&"z") {
            return Err(parse_err("first column must be `z`".into()));
        }
        let has_offset = cols.last() == Some(&"offset");
        let tail = if has_offset { 3 } else { 2 };
        if cols.len() < 1 + tail {
            return Err(parse_err("header must contain z, d and y".into()));
        }
        let d_pos = cols.len() - tail;
        if cols[d_pos] != "d" || cols[d_pos + 1] != "y" {
            return Err(parse_err(
                "header must end with `d,y` or `d,y,offset`".into(),
            ));
        }
        let names: Vec<String> = cols[1..d_pos].iter().map(|s| s.to_string()).collect();
        let dx = names.len();

        let mut z = Vec::new();
        let mut x = Vec::new();
        let mut d = Vec::new();
        let mut y = Vec::new();
        let mut off = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != cols.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", cols.len(), rec.len()),
                });
            }
            let code: InstrumentCode = rec[0]
                .parse()
                .map_err(|message| Error::Parse { line, message })?;
            z.push(code);
            for j in 0..dx {
                x.push(parse_num(&rec[1 + j], &names[j], line)?);
            }
            let dv = parse_num(&rec[d_pos], "d", line)?;
            if dv != 0.0 && dv != 1.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("treatment must be 0 or 1, found {dv}"),
                });
            }
            d.push(dv as u8);
            let yv = parse_num(&rec[d_pos + 1], "y", line)?;
            y.push(yv);
            if has_offset {
                let ov = parse_num(&rec[d_pos + 2], "offset", line)?;
                if ov <= 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("offset must be positive, found {ov}"),
                    });
                }
                off.push(ov);
            }
        }
        Self::new(names, z, x, d, y, has_offset.then_some(off))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["z".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("d".into());
        header.push("y".into());
        if self.offset.is_some() {
            header.push("offset".into());
        }
        let csv_err = |e: csv::Error| Error::InvalidTable(e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut rec = vec![self.z[i].to_string()];
            rec.extend(self.x_row(i).iter().map(|v| v.to_string()));
            rec.push(self.d[i].to_string());
            rec.push(self.y[i].to_string());
            if let Some(o) = &self.offset {
                rec.push(o[i].to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidTable(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn parse_num(s: &str, col: &str, line: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {col}: cannot parse {s:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {col}: value is not finite"),
        });
    }
    Ok(v)
}

/// Default minimum number of rows per instrument cell.
pub const DEFAULT_MIN_CELL: usize = 10;

/// Marginal compliance gaps closer than this trigger
/// [`ValidationFlag::NonEqualComplianceViolated`].
pub const NON_EQUAL_COMPLIANCE_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValidationFlag {
    /// Some instrument cell has fewer than `min_cell` rows. Fatal.
    EmptyCell,
    /// The two stages have (nearly) the same marginal compliance rate.
    NonEqualComplianceViolated,
    /// Arm One has lower treatment uptake than arm Zero in some stage.
    NegativeComplianceGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub cell_counts: [usize; 4],
    pub min_cell: usize,
    /// Raw compliance rate per stage: mean D in arm One minus arm Zero.
    pub compliance_a: f64,
    pub compliance_b: f64,
    pub flags: Vec<ValidationFlag>,
}

impl ValidationReport {
    pub fn has(&self, flag: ValidationFlag) -> bool {
        self.flags.contains(&flag)
    }

    /// Fails with [`Error::EmptyCell`] when the table cannot be used for
    /// estimation; the other flags are warnings.
    pub fn require_estimable(&self) -> Result<()> {
        for code in InstrumentCode::ALL {
            let count = self.cell_counts[code.index()];
            if count < self.min_cell {
                return Err(Error::EmptyCell {
                    code,
                    count,
                    required: self.min_cell,
                });
            }
        }
        Ok(())
    }
}

pub fn validate(table: &ObservationTable, min_cell: usize) -> ValidationReport {
    let counts = table.cell_counts();
    let mut sum_d = [0.0; 4];
    for (z, &d) in table.z().iter().zip(table.d()) {
        sum_d[z.index()] += d as f64;
    }
    let mean = |i: usize| {
        if counts[i] == 0 {
            f64::NAN
        } else {
            sum_d[i] / counts[i] as f64
        }
    };
    let compliance_a = mean(InstrumentCode::ONE_A.index()) - mean(InstrumentCode::ZERO_A.index());
    let compliance_b = mean(InstrumentCode::ONE_B.index()) - mean(InstrumentCode::ZERO_B.index());

    let mut flags = Vec::new();
    if counts.iter().any(|&c| c < min_cell) {
        flags.push(ValidationFlag::EmptyCell);
    }
    if compliance_a.is_finite()
        && compliance_b.is_finite()
        && (compliance_b - compliance_a).abs() < NON_EQUAL_COMPLIANCE_TOL
    {
        flags.push(ValidationFlag::NonEqualComplianceViolated);
    }
    if compliance_a < 0.0 || compliance_b < 0.0 {
        flags.push(ValidationFlag::NegativeComplianceGap);
    }
    ValidationReport {
        cell_counts: counts,
        min_cell,
        compliance_a,
        compliance_b,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from_cells(cells: &[(InstrumentCode, usize, usize)]) -> ObservationTable {
        // (code, rows, treated rows)
        let mut z = Vec::new();
        let mut d = Vec::new();
        for &(code, n, treated) in cells {
            for k in 0..n {
                z.push(code);
                d.push((k < treated) as u8);
            }
        }
        let n = z.len();
        ObservationTable::from_rows(1, z, vec![0.0; n], d, vec![0.0; n], None).unwrap()
    }

    #[test]
    fn codes_are_bijective_with_strings() {
        for (i, code) in InstrumentCode::ALL.iter().enumerate() {
            assert_eq!(code.index(), i);
            assert_eq!(code.as_str().parse::<InstrumentCode>().unwrap(), *code);
        }
        assert!(InstrumentCode::ZERO_A < InstrumentCode::ONE_A);
        assert!(InstrumentCode::ZERO_B < InstrumentCode::ONE_B);
        assert!("2a".parse::<InstrumentCode>().is_err());
    }

    #[test]
    fn plco_like_uptake_gives_expected_gap() {
        let t = table_from_cells(&[
            (InstrumentCode::ZERO_A, 4210, 0),
            (InstrumentCode::ONE_A, 4204, 2141),
            (InstrumentCode::ZERO_B, 4970, 0),
            (InstrumentCode::ONE_B, 4978, 3989),
        ]);
        let r = validate(&t, DEFAULT_MIN_CELL);
        assert!((r.compliance_a - 0.509).abs() < 5e-4);
        assert!((r.compliance_b - 0.801).abs() < 5e-4);
        assert!(((r.compliance_b - r.compliance_a) - 0.291).abs() < 2e-3);
        assert!(r.flags.is_empty());
        r.require_estimable().unwrap();
    }

    #[test]
    fn equal_compliance_is_flagged() {
        let t = table_from_cells(&[
            (InstrumentCode::ZERO_A, 20, 5),
            (InstrumentCode::ONE_A, 20, 15),
            (InstrumentCode::ZERO_B, 20, 5),
            (InstrumentCode::ONE_B, 20, 15),
        ]);
        let r = validate(&t, DEFAULT_MIN_CELL);
        assert_eq!(r.compliance_b - r.compliance_a, 0.0);
        assert!(r.has(ValidationFlag::NonEqualComplianceViolated));
        assert!(r.require_estimable().is_ok());
    }

    #[test]
    fn missing_cell_is_fatal() {
        let t = table_from_cells(&[
            (InstrumentCode::ZERO_A, 20, 0),
            (InstrumentCode::ONE_A, 20, 10),
            (InstrumentCode::ZERO_B, 20, 0),
        ]);
        let r = validate(&t, DEFAULT_MIN_CELL);
        assert!(r.has(ValidationFlag::EmptyCell));
        assert!(matches!(
            r.require_estimable(),
            Err(Error::EmptyCell { code, count: 0, .. }) if code == InstrumentCode::ONE_B
        ));
    }

    #[test]
    fn negative_gap_is_a_warning() {
        let t = table_from_cells(&[
            (InstrumentCode::ZERO_A, 20, 12),
            (InstrumentCode::ONE_A, 20, 4),
            (InstrumentCode::ZERO_B, 20, 0),
            (InstrumentCode::ONE_B, 20, 15),
        ]);
        let r = validate(&t, DEFAULT_MIN_CELL);
        assert!(r.has(ValidationFlag::NegativeComplianceGap));
        assert!(r.require_estimable().is_ok());
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let src = "z,x1,d,y\n0a,1.0,0,2.0\n2a,1.0,0,2.0\n";
        let err = ObservationTable::read_csv(src.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let src = "z,x1,d,y\n0a,1.0,2,2.0\n";
        let err = ObservationTable::read_csv(src.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let src = "x1,z,d,y\n";
        assert!(ObservationTable::read_csv(src.as_bytes()).is_err());
    }

    #[test]
    fn csv_reads_offset_column() {
        let src = "z,age,male,d,y,offset\n1b,61.5,1,1,0,9.25\n0a,70,0,0,1,12\n";
        let t = ObservationTable::read_csv(src.as_bytes()).unwrap();
        assert_eq!(t.n(), 2);
        assert_eq!(t.dx(), 2);
        assert_eq!(t.covariate_names(), &["age".to_string(), "male".to_string()]);
        assert_eq!(t.offset().unwrap(), &[9.25, 12.0]);
        assert_eq!(t.x_row(1), &[70.0, 0.0]);
    }
}
