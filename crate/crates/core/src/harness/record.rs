use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Disturbance, Input, Levels, Mass};
use crate::error::{Error, Result};

pub const RECORD_HEADER: [&str; 17] = [
    "t", "zbar1", "zbar2", "y1", "y2", "y3", "y4", "u1", "u2", "xhat1", "xhat2", "xhat3", "xhat4",
    "dhat1", "dhat2", "dhat3", "dhat4",
];

/// One logged sample. `xhat` holds estimated masses (g) and `dhat` the
/// estimated disturbance flows, both absolute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub t: f64,
    pub zbar: Vector2<f64>,
    pub y: Levels,
    pub u: Input,
    pub xhat: Mass,
    pub dhat: Disturbance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub controller: String,
    pub plant: String,
    pub model: String,
    pub seed: u64,
    pub ts: f64,
    pub duration: f64,
    pub bounds: [f64; 2],
    /// Set when the run stopped early; the rows logged so far are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.meta.failure.is_none()
    }

    /// Measured CV tracking errors `z̄_k − (y₁, y₂)_k`.
    pub fn errors(&self) -> Vec<Vector2<f64>> {
        self.rows
            .iter()
            .map(|r| r.zbar - Vector2::new(r.y[0], r.y[1]))
            .collect()
    }

    pub fn inputs(&self) -> Vec<Input> {
        self.rows.iter().map(|r| r.u).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RECORD_HEADER)?;
        for r in &self.rows {
            let mut fields = vec![r.t, r.zbar[0], r.zbar[1]];
            fields.extend(r.y.iter());
            fields.extend(r.u.iter());
            fields.extend(r.xhat.iter());
            fields.extend(r.dhat.iter());
            w.write_record(fields.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, meta: RunMeta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let found: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if found != RECORD_HEADER {
            return Err(Error::Data(format!("unexpected run header {found:?}")));
        }
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("row {}: {e}", k + 1)))?;
            rows.push(RunRow {
                t: v[0],
                zbar: Vector2::new(v[1], v[2]),
                y: Levels::new(v[3], v[4], v[5], v[6]),
                u: Input::new(v[7], v[8]),
                xhat: Mass::new(v[9], v[10], v[11], v[12]),
                dhat: Disturbance::new(v[13], v[14], v[15], v[16]),
            });
        }
        Ok(Self { meta, rows })
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("toml")
    }

    /// Writes `path` and its metadata sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(Self::sidecar_path(path), meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta_text = fs::read_to_string(Self::sidecar_path(path))?;
        let meta: RunMeta = toml::from_str(&meta_text).map_err(|e| Error::Config(e.to_string()))?;
        Self::read_csv(fs::File::open(path)?, meta)
    }
}
