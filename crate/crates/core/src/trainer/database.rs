//! On-disk design database: `records.jsonl`, content-addressed `graphs/`,
//! the kernel sources under `kernels/` and `meta.json`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::context::KernelContext;
use crate::frontend::{KernelSource, ParseError};
use crate::graph::ProgGraph;
use crate::oracle::{OracleConfig, SynthesisResult};
use crate::space::{DesignConfig, DEFAULT_FACTOR_CAP};

pub const DB_FORMAT: &str = "pragma-dse-db";
pub const DB_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("kernel `{0}` is already in the database with a different source")]
    KernelConflict(String),
    #[error("record refers to unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("kernel name `{0}` appears more than once")]
    DuplicateKernel(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DbError + '_ {
    move |source| DbError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Bottleneck,
    Hybrid,
    Random,
    /// Top design of active-learning round `k` (1-based).
    DseRound(u32),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Bottleneck => f.write_str("bottleneck"),
            Provenance::Hybrid => f.write_str("hybrid"),
            Provenance::Random => f.write_str("random"),
            Provenance::DseRound(k) => write!(f, "dse_round_{k}"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bottleneck" => Ok(Provenance::Bottleneck),
            "hybrid" => Ok(Provenance::Hybrid),
            "random" => Ok(Provenance::Random),
            _ => s
                .strip_prefix("dse_round_")
                .and_then(|k| k.parse().ok())
                .map(Provenance::DseRound)
                .ok_or_else(|| format!("unknown provenance `{s}`")),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub kernel: String,
    pub config: DesignConfig,
    pub graph_ref: String,
    pub result: SynthesisResult,
    pub provenance: Provenance,
}

/// Settings every record of a database was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbSettings {
    pub factor_cap: u64,
    pub oracle: OracleConfig,
}

impl Default for DbSettings {
    fn default() -> Self {
        DbSettings { factor_cap: DEFAULT_FACTOR_CAP, oracle: OracleConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbMeta {
    pub format: String,
    pub version: u32,
    pub kernels: Vec<String>,
    pub records: usize,
    #[serde(default)]
    pub settings: DbSettings,
}

/// Append-only record list keyed by (kernel, config).
#[derive(Debug, Clone, Default)]
pub struct Database {
    pub records: Vec<DesignRecord>,
    pub kernels: BTreeMap<String, KernelSource>,
    pub settings: DbSettings,
    graphs: BTreeMap<String, String>,
    seen: HashSet<(String, String)>,
}

impl Database {
    pub fn new() -> Self {
        Database::default()
    }

    pub fn add_kernel(&mut self, src: &KernelSource) -> Result<(), DbError> {
        match self.kernels.get(&src.name) {
            Some(k) if k.text != src.text => Err(DbError::KernelConflict(src.name.clone())),
            Some(_) => Ok(()),
            None => {
                self.kernels.insert(src.name.clone(), src.clone());
                Ok(())
            }
        }
    }

    pub fn contains(&self, kernel: &str, cfg: &DesignConfig) -> bool {
        self.seen.contains(&(kernel.to_string(), cfg.key()))
    }

    /// Appends unless (kernel, config) is already present; returns whether
    /// the record was added.
    pub fn append(&mut self, record: DesignRecord, graph: &ProgGraph) -> Result<bool, DbError> {
        if !self.kernels.contains_key(&record.kernel) {
            return Err(DbError::UnknownKernel(record.kernel.clone()));
        }
        if !self.seen.insert((record.kernel.clone(), record.config.key())) {
            return Ok(false);
        }
        self.graphs.entry(record.graph_ref.clone()).or_insert_with(|| graph.to_json());
        self.records.push(record);
        Ok(true)
    }

    /// Appends every record of `other` not already present, with its graph.
    /// Returns the number of records added.
    pub fn merge(&mut self, other: &Database) -> Result<usize, DbError> {
        for src in other.kernels.values() {
            self.add_kernel(src)?;
        }
        let mut added = 0;
        for r in &other.records {
            if !self.seen.insert((r.kernel.clone(), r.config.key())) {
                continue;
            }
            if let Some(g) = other.graphs.get(&r.graph_ref) {
                self.graphs.entry(r.graph_ref.clone()).or_insert_with(|| g.clone());
            }
            self.records.push(r.clone());
            added += 1;
        }
        Ok(added)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn graph_json(&self, hash: &str) -> Option<&str> {
        self.graphs.get(hash).map(String::as_str)
    }

    pub fn records_of<'a>(&'a self, kernel: &'a str) -> impl Iterator<Item = &'a DesignRecord> + 'a {
        self.records.iter().filter(move |r| r.kernel == kernel)
    }

    /// Lowest valid latency per kernel.
    pub fn best_latency(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            if let Some(o) = r.result.objectives {
                let e = out.entry(r.kernel.clone()).or_insert(u64::MAX);
                *e = (*e).min(o.latency);
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), DbError> {
        std::fs::create_dir_all(dir.join("graphs")).map_err(io_err(dir))?;
        std::fs::create_dir_all(dir.join("kernels")).map_err(io_err(dir))?;
        let rec_path = dir.join("records.jsonl");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&rec_path).map_err(io_err(&rec_path))?);
        for r in &self.records {
            let line = serde_json::to_string(r).expect("records serialise");
            writeln!(out, "{line}").map_err(io_err(&rec_path))?;
        }
        out.flush().map_err(io_err(&rec_path))?;
        for (hash, json) in &self.graphs {
            let p = dir.join("graphs").join(format!("{hash}.json"));
            if !p.exists() {
                std::fs::write(&p, json).map_err(io_err(&p))?;
            }
        }
        for (name, src) in &self.kernels {
            let p = dir.join("kernels").join(format!("{name}.mlk"));
            std::fs::write(&p, &src.text).map_err(io_err(&p))?;
        }
        let meta = DbMeta {
            format: DB_FORMAT.into(),
            version: DB_VERSION,
            kernels: self.kernels.keys().cloned().collect(),
            records: self.records.len(),
            settings: self.settings.clone(),
        };
        let p = dir.join("meta.json");
        std::fs::write(&p, serde_json::to_string_pretty(&meta).expect("meta serialises") + "\n").map_err(io_err(&p))?;
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Database, DbError> {
        let meta_path = dir.join("meta.json");
        let meta_text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: DbMeta = serde_json::from_str(&meta_text).map_err(|e| DbError::Parse {
            path: meta_path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if meta.format != DB_FORMAT || meta.version != DB_VERSION {
            return Err(DbError::Parse {
                path: meta_path.display().to_string(),
                line: 1,
                msg: format!("unsupported database format {} v{}", meta.format, meta.version),
            });
        }
        let mut db = Database { settings: meta.settings.clone(), ..Database::default() };
        for name in &meta.kernels {
            let p = dir.join("kernels").join(format!("{name}.mlk"));
            let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
            db.kernels.insert(name.clone(), KernelSource { name: name.clone(), text, path: p.display().to_string() });
        }
        let rec_path = dir.join("records.jsonl");
        let file = std::fs::File::open(&rec_path).map_err(io_err(&rec_path))?;
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&rec_path))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DesignRecord = serde_json::from_str(&line).map_err(|e| DbError::Parse {
                path: rec_path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            if !db.kernels.contains_key(&rec.kernel) {
                return Err(DbError::UnknownKernel(rec.kernel));
            }
            let gp = dir.join("graphs").join(format!("{}.json", rec.graph_ref));
            if !db.graphs.contains_key(&rec.graph_ref) {
                let json = std::fs::read_to_string(&gp).map_err(io_err(&gp))?;
                db.graphs.insert(rec.graph_ref.clone(), json);
            }
            if db.seen.insert((rec.kernel.clone(), rec.config.key())) {
                db.records.push(rec);
            }
        }
        Ok(db)
    }

    /// A context for every kernel, built with the database settings.
    pub fn contexts(&self) -> Result<BTreeMap<String, KernelContext>, ParseError> {
        self.kernels
            .iter()
            .map(|(k, src)| Ok((k.clone(), KernelContext::new(src.clone(), self.settings.factor_cap, self.settings.oracle.clone())?)))
            .collect()
    }

    /// Record counts per kernel: (total, valid).
    pub fn summary(&self) -> BTreeMap<String, (usize, usize)> {
        let mut out: BTreeMap<String, (usize, usize)> = self.kernels.keys().map(|k| (k.clone(), (0, 0))).collect();
        for r in &self.records {
            let e = out.entry(r.kernel.clone()).or_default();
            e.0 += 1;
            e.1 += usize::from(r.result.valid);
        }
        out
    }
}
