//! Sample sets produced by the samplers, with per-cycle metadata and an
//! NDJSON on-disk form.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chimera::Embedding;
use crate::error::{Error, Result};
use crate::ising::{GaugeTransform, SpinConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub spins: SpinConfig,
    pub cycle: usize,
    pub run: usize,
    pub seed: u64,
}

/// How one programming cycle was set up. Recorded spins are already mapped
/// back through `gauge`; `permutation` and `embedding` say how nested
/// vertices were laid out on the sampled variables.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleInfo {
    pub gauge: GaugeTransform,
    pub permutation: Option<Vec<usize>>,
    pub embedding: Option<Embedding>,
    /// Digest of the problem actually sampled in this cycle (gauged, noisy).
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub problem_digest: String,
    pub cycles: Vec<CycleInfo>,
    pub records: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        problem_digest: String,
        cycles: usize,
        records: usize,
    },
    Cycle {
        cycle: usize,
        gauge: GaugeTransform,
        permutation: Option<Vec<usize>>,
        embedding: Option<serde_json::Value>,
        digest: String,
    },
    Sample(SampleRecord),
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by cycle, in cycle order.
    pub fn by_cycle(&self) -> Vec<Vec<&SampleRecord>> {
        let mut groups = vec![Vec::new(); self.cycles.len()];
        for r in &self.records {
            groups[r.cycle].push(r);
        }
        groups
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Line::Header {
            problem_digest: self.problem_digest.clone(),
            cycles: self.cycles.len(),
            records: self.records.len(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (c, info) in self.cycles.iter().enumerate() {
            let embedding = match &info.embedding {
                Some(e) => Some(serde_json::from_str(&e.to_json()?)?),
                None => None,
            };
            let line = Line::Cycle {
                cycle: c,
                gauge: info.gauge.clone(),
                permutation: info.permutation.clone(),
                embedding,
                digest: info.digest.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(&Line::Sample(r.clone()))?)?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self> {
        let mut set: Option<SampleSet> = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)?;
            match (parsed, set.as_mut()) {
                (Line::Header { problem_digest, .. }, None) => {
                    set = Some(SampleSet {
                        problem_digest,
                        cycles: Vec::new(),
                        records: Vec::new(),
                    })
                }
                (
                    Line::Cycle {
                        cycle,
                        gauge,
                        permutation,
                        embedding,
                        digest,
                    },
                    Some(s),
                ) => {
                    if cycle != s.cycles.len() {
                        return Err(Error::Parse(format!("line {}: cycle {cycle} out of order", i + 1)));
                    }
                    let embedding = match embedding {
                        Some(v) => Some(Embedding::from_json(&v.to_string())?),
                        None => None,
                    };
                    s.cycles.push(CycleInfo {
                        gauge,
                        permutation,
                        embedding,
                        digest,
                    });
                }
                (Line::Sample(rec), Some(s)) => {
                    if rec.cycle >= s.cycles.len() {
                        return Err(Error::Parse(format!(
                            "line {}: sample refers to unknown cycle {}",
                            i + 1,
                            rec.cycle
                        )));
                    }
                    s.records.push(rec);
                }
                _ => return Err(Error::Parse(format!("line {}: unexpected record", i + 1))),
            }
        }
        set.ok_or_else(|| Error::Parse("empty sample file".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_ndjson(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_ndjson(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// SHA-256 of the NDJSON form.
    pub fn digest(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        self.write_ndjson(HashWriter(&mut hasher))?;
        Ok(hex::encode(hasher.finalize()))
    }
}

struct HashWriter<'a>(&'a mut Sha256);

impl Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
