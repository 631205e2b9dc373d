use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::{Input, Levels};
use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 7] = ["t", "y1", "y2", "y3", "y4", "u1", "u2"];

/// Uniformly sampled input/output data. Row `k` holds the measurement taken at
/// `t[k]` and the input applied over `[t[k], t[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub t: Vec<f64>,
    pub y: Vec<Levels>,
    pub u: Vec<Input>,
}

impl Dataset {
    pub fn new(t: Vec<f64>, y: Vec<Levels>, u: Vec<Input>) -> Result<Self> {
        let ds = Self { t, y, u };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn sample_time(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n < 2 {
            return Err(Error::Data(format!(
                "dataset needs at least 2 samples, got {n}"
            )));
        }
        if self.y.len() != n || self.u.len() != n {
            return Err(Error::Data(format!(
                "column lengths differ: t={n}, y={}, u={}",
                self.y.len(),
                self.u.len()
            )));
        }
        let ts = self.t[1] - self.t[0];
        if !(ts > 0.0) {
            return Err(Error::Data("timestamps must be strictly increasing".into()));
        }
        for (k, w) in self.t.windows(2).enumerate() {
            let dt = w[1] - w[0];
            if !(dt > 0.0) || (dt - ts).abs() > 1e-9 * ts.max(w[1].abs()) {
                return Err(Error::Data(format!(
                    "non-uniform sampling at row {}",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(
            self.t[range.clone()].to_vec(),
            self.y[range.clone()].to_vec(),
            self.u[range].to_vec(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DATASET_HEADER)?;
        for k in 0..self.len() {
            let y = &self.y[k];
            let u = &self.u[k];
            w.write_record([self.t[k], y[0], y[1], y[2], y[3], u[0], u[1]].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != DATASET_HEADER {
            return Err(Error::Data(format!(
                "expected header {}, found {}",
                DATASET_HEADER.join(","),
                header.join(",")
            )));
        }
        let (mut t, mut y, mut u) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("row {}: {e}", row + 1)))?;
            t.push(v[0]);
            y.push(Levels::new(v[1], v[2], v[3], v[4]));
            u.push(Input::new(v[5], v[6]));
        }
        Self::new(t, y, u)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
