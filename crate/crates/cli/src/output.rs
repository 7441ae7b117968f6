use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mlqlab::EmpiricalDistribution;
use serde::{Deserialize, Serialize};

use crate::Format;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub x: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub ci_half: f64,
}

pub struct Sink {
    dir: PathBuf,
    format: Format,
}

impl Sink {
    pub fn new(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
        })
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }

    pub fn json<T: Serialize>(&self, stem: &str, value: &T) -> Result<PathBuf> {
        let (path, mut w) = self.create(&format!("{stem}.json"))?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }

    /// A numeric table; in CSV form an optional JSON object goes on a leading
    /// `#` line, in JSON form it becomes the `header` field.
    pub fn table<H: Serialize>(
        &self,
        stem: &str,
        header: Option<&H>,
        columns: &[&str],
        rows: &[Vec<f64>],
    ) -> Result<PathBuf> {
        match self.format {
            Format::Csv => {
                let (path, mut w) = self.create(&format!("{stem}.csv"))?;
                if let Some(h) = header {
                    writeln!(w, "# {}", serde_json::to_string(h)?)?;
                }
                writeln!(w, "{}", columns.join(","))?;
                for row in rows {
                    let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                    writeln!(w, "{}", cells.join(","))?;
                }
                w.flush()?;
                Ok(path)
            }
            Format::Json => {
                let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
                    .iter()
                    .map(|row| {
                        columns
                            .iter()
                            .map(|c| c.to_string())
                            .zip(row.iter().map(|v| serde_json::json!(v)))
                            .collect()
                    })
                    .collect();
                let value = serde_json::json!({ "header": header, "rows": records });
                self.json(stem, &value)
            }
        }
    }

    pub fn ecdf(&self, stem: &str, points: &[EcdfPoint]) -> Result<PathBuf> {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.x, p.f, p.ci_half]).collect();
        self.table::<()>(stem, None, &["x", "F", "ci_half"], &rows)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn format(&self) -> Format {
        self.format
    }
}

pub fn ecdf_points(dist: &EmpiricalDistribution, confidence: f64) -> Vec<EcdfPoint> {
    dist.ecdf_with_ci(confidence)
        .into_iter()
        .map(|(x, f, ci_half)| EcdfPoint { x, f, ci_half })
        .collect()
}

/// Reads an ECDF written by [`Sink::ecdf`] in either format.
pub fn read_ecdf(path: &Path) -> Result<EmpiricalDistribution> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let points: Vec<EcdfPoint> = if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Table {
            rows: Vec<EcdfPoint>,
        }
        let t: Table = serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("parsing {}", path.display()))?;
        t.rows
    } else {
        let mut points = Vec::new();
        let mut header_seen = false;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "x,F,ci_half" {
                    bail!(
                        "{}: expected header `x,F,ci_half`, found `{line}`",
                        path.display()
                    );
                }
                header_seen = true;
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 3 {
                bail!("{}:{}: expected 3 fields", path.display(), i + 1);
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .with_context(|| format!("{}:{}: bad number `{s}`", path.display(), i + 1))
            };
            points.push(EcdfPoint {
                x: num(cells[0])?,
                f: num(cells[1])?,
                ci_half: num(cells[2])?,
            });
        }
        points
    };
    if points.is_empty() {
        bail!("{}: no ECDF rows", path.display());
    }
    let mut prev = 0.0;
    let mut weights = Vec::with_capacity(points.len());
    for p in &points {
        weights.push((p.f - prev).max(0.0));
        prev = p.f;
    }
    let support = points.iter().map(|p| p.x).collect();
    Ok(EmpiricalDistribution::new(support, vec![weights])?)
}
