//! Time series of named observables and their CSV form.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    columns: Vec<(String, Column)>,
    pub config_echo: String,
    pub diagnostics: Option<Box<TimeSeries>>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation(
                "times must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            ..Default::default()
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn columns(&self) -> &[(String, Column)] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn push(&mut self, name: impl Into<String>, column: Column) -> Result<()> {
        let name = name.into();
        if column.len() != self.times.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                found: column.len(),
            });
        }
        if name.is_empty() || name == "t" || name.contains(',') {
            return Err(Error::Validation(format!("invalid column name `{name}`")));
        }
        if self.column(&name).is_some() {
            return Err(Error::Validation(format!("duplicate column `{name}`")));
        }
        self.columns.push((name, column));
        Ok(())
    }

    pub fn push_real(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        self.push(name, Column::Real(values))
    }

    pub fn push_complex(&mut self, name: impl Into<String>, values: Vec<C64>) -> Result<()> {
        self.push(name, Column::Complex(values))
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Real-valued view of a column; `x_re`/`x_im` resolve to parts of a
    /// complex column `x`.
    pub fn real(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(c) = self.column(name) {
            return Some(match c {
                Column::Real(v) => v.clone(),
                Column::Complex(v) => v.iter().map(|z| z.re).collect(),
            });
        }
        let (base, im) = name
            .strip_suffix("_re")
            .map(|b| (b, false))
            .or_else(|| name.strip_suffix("_im").map(|b| (b, true)))?;
        match self.column(base)? {
            Column::Complex(v) => Some(v.iter().map(|z| if im { z.im } else { z.re }).collect()),
            Column::Real(_) => None,
        }
    }

    /// Flattened header names and values, complex columns split in two.
    pub fn flat_columns(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (name, col) in &self.columns {
            match col {
                Column::Real(v) => out.push((name.clone(), v.clone())),
                Column::Complex(v) => {
                    out.push((format!("{name}_re"), v.iter().map(|z| z.re).collect()));
                    out.push((format!("{name}_im"), v.iter().map(|z| z.im).collect()));
                }
            }
        }
        out
    }

    /// CSV text: `#` comment lines, a header row and one row per time.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let flat = self.flat_columns();
        let mut s = String::new();
        for c in comments {
            for line in c.lines() {
                let _ = writeln!(s, "# {line}");
            }
        }
        s.push('t');
        for (n, _) in &flat {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{t:.16e}");
            for (_, v) in &flat {
                let _ = write!(s, ",{:.16e}", v[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_csv(comments).as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Parses CSV text produced by [`TimeSeries::to_csv`]. All columns come
    /// back as real columns.
    pub fn from_csv(reader: impl BufRead) -> Result<Self> {
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match &header {
                None => {
                    if fields.first() != Some(&"t") {
                        return Err(Error::Validation(format!(
                            "line {}: header must start with `t`",
                            lineno + 1
                        )));
                    }
                    header = Some(fields.iter().map(|f| f.to_string()).collect());
                }
                Some(h) => {
                    if fields.len() != h.len() {
                        return Err(Error::Validation(format!(
                            "line {}: expected {} fields, found {}",
                            lineno + 1,
                            h.len(),
                            fields.len()
                        )));
                    }
                    let row = fields
                        .iter()
                        .map(|f| {
                            f.parse::<f64>().map_err(|e| {
                                Error::Validation(format!("line {}: `{f}`: {e}", lineno + 1))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    rows.push(row);
                }
            }
        }
        let header = header.ok_or_else(|| Error::Validation("missing header row".into()))?;
        let mut ts = TimeSeries::new(rows.iter().map(|r| r[0]).collect())?;
        for (j, name) in header.iter().enumerate().skip(1) {
            ts.push_real(name.clone(), rows.iter().map(|r| r[j]).collect())?;
        }
        Ok(ts)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv(std::io::BufReader::new(f))
            .map_err(|e| e.context(format!("reading {}", path.display())))
    }
}

/// Deviation statistics of one shared column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDeviation {
    pub name: String,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub samples: usize,
}

/// Compares every shared (flattened) column over the overlapping time range.
/// Samples of `b` are linearly interpolated onto the times of `a`.
pub fn compare(a: &TimeSeries, b: &TimeSeries) -> Result<Vec<ColumnDeviation>> {
    let fa = a.flat_columns();
    let fb = b.flat_columns();
    let (ta, tb) = (a.times(), b.times());
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::Validation("cannot compare empty series".into()));
    }
    let lo = ta[0].max(tb[0]);
    let hi = ta[ta.len() - 1].min(tb[tb.len() - 1]);
    let scale = 1e-12 * hi.abs().max(1.0);
    let idx: Vec<usize> = (0..ta.len())
        .filter(|&i| ta[i] >= lo - scale && ta[i] <= hi + scale)
        .collect();
    if idx.is_empty() {
        return Err(Error::Validation("series share no time range".into()));
    }
    let mut out = Vec::new();
    for (name, va) in &fa {
        let Some((_, vb)) = fb.iter().find(|(n, _)| n == name) else {
            continue;
        };
        let mut max_abs = 0.0f64;
        let mut sum = 0.0;
        for &i in &idx {
            let d = (va[i] - interpolate(tb, vb, ta[i])).abs();
            max_abs = max_abs.max(d);
            sum += d;
        }
        out.push(ColumnDeviation {
            name: name.clone(),
            max_abs,
            mean_abs: sum / idx.len() as f64,
            samples: idx.len(),
        });
    }
    if out.is_empty() {
        return Err(Error::Validation("series share no columns".into()));
    }
    Ok(out)
}

fn interpolate(t: &[f64], v: &[f64], x: f64) -> f64 {
    let k = t.partition_point(|&ti| ti < x);
    if k < t.len() && (t[k] - x).abs() <= 1e-12 * x.abs().max(1.0) {
        return v[k];
    }
    if k == 0 {
        return v[0];
    }
    if k == t.len() {
        return v[t.len() - 1];
    }
    let w = (x - t[k - 1]) / (t[k] - t[k - 1]);
    v[k - 1] + w * (v[k] - v[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TimeSeries {
        let mut ts = TimeSeries::new(vec![0.0, 0.5, 1.0]).unwrap();
        ts.push_real("sz", vec![1.0, 0.9, 0.8]).unwrap();
        ts.push_complex(
            "coh",
            vec![
                C64::new(1.0, 0.0),
                C64::new(0.1, 1.0 / 3.0),
                C64::new(-2e-300, 7.0),
            ],
        )
        .unwrap();
        ts
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let ts = sample();
        let text = ts.to_csv(&["tool 0.1".into(), "hash abc".into()]);
        assert!(text.starts_with("# tool 0.1\n# hash abc\nt,sz,coh_re,coh_im\n"));
        let back = TimeSeries::from_csv(text.as_bytes()).unwrap();
        assert_eq!(back.times(), ts.times());
        assert_eq!(back.real("coh_im"), ts.real("coh_im"));
        assert_eq!(back.real("sz"), ts.real("sz"));
    }

    #[test]
    fn rejects_bad_series() {
        assert!(TimeSeries::new(vec![0.0, 0.0]).is_err());
        let mut ts = TimeSeries::new(vec![0.0, 1.0]).unwrap();
        assert!(ts.push_real("x", vec![1.0]).is_err());
        assert!(ts.push_real("t", vec![1.0, 2.0]).is_err());
        ts.push_real("x", vec![1.0, 2.0]).unwrap();
        assert!(ts.push_real("x", vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn self_comparison_is_exact() {
        let ts = sample();
        for d in compare(&ts, &ts).unwrap() {
            assert_eq!(d.max_abs, 0.0);
        }
    }

    #[test]
    fn comparison_interpolates_and_overlaps() {
        let mut a = TimeSeries::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        a.push_real("x", vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut b = TimeSeries::new(vec![0.0, 2.0]).unwrap();
        b.push_real("x", vec![0.0, 2.5]).unwrap();
        let d = compare(&a, &b).unwrap();
        assert_eq!(d[0].samples, 3);
        assert!((d[0].max_abs - 0.5).abs() < 1e-15);
    }
}
