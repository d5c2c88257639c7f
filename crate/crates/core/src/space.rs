//! Pragma candidates, static pruning and enumeration of a kernel's design space.
//!
//! Internally a design is a [`Point`]: one option index per candidate, in slot
//! order. [`DesignConfig`] is the named, serialisable form.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::frontend::{KernelIr, LoopId, PragmaKind};

pub const DEFAULT_FACTOR_CAP: u64 = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpaceError {
    #[error("unknown pragma slot `{0}`")]
    UnknownSlot(String),
    #[error("missing value for pragma slot `{0}`")]
    MissingSlot(String),
    #[error("value `{value}` is not an option of slot `{slot}`")]
    BadOption { slot: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Off,
    Cg,
    Fg,
}

impl PipelineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::Off => "off",
            PipelineMode::Cg => "cg",
            PipelineMode::Fg => "fg",
        }
    }
}

/// One option of a pragma: a pipeline mode or an integer factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OptionValue {
    Pipeline(PipelineMode),
    Factor(u64),
}

impl OptionValue {
    pub fn factor(self) -> u64 {
        match self {
            OptionValue::Factor(f) => f,
            OptionValue::Pipeline(_) => 1,
        }
    }

    pub fn pipeline(self) -> PipelineMode {
        match self {
            OptionValue::Pipeline(p) => p,
            OptionValue::Factor(_) => PipelineMode::Off,
        }
    }
}

impl fmt::Display for OptionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptionValue::Pipeline(p) => f.write_str(p.as_str()),
            OptionValue::Factor(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PragmaCandidate {
    pub slot: String,
    pub kind: PragmaKind,
    pub loop_id: LoopId,
    /// First option is the default (`off` or factor 1).
    pub options: Vec<OptionValue>,
}

/// Slot name → chosen option.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignConfig(pub BTreeMap<String, OptionValue>);

impl DesignConfig {
    pub fn get(&self, slot: &str) -> Option<OptionValue> {
        self.0.get(slot).copied()
    }

    /// Compact canonical text, e.g. `_PARA_L1=4,_PIPE_L1=cg`.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        parts.join(",")
    }
}

/// Option indices, one per candidate in slot order.
pub type Point = Vec<u8>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LoopSlots {
    parent: Option<LoopId>,
    depth: u32,
    pipeline: Option<usize>,
    parallel: Option<usize>,
    tile: Option<usize>,
    children: Vec<LoopId>,
    /// Candidates of strictly nested loops.
    inner_candidates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub kernel: String,
    pub factor_cap: u64,
    pub candidates: Vec<PragmaCandidate>,
    pub size_total: u128,
    pub size_pruned: u128,
    /// Candidate indices in enumeration order, most significant first.
    pub enum_order: Vec<usize>,
    #[serde(skip)]
    loops: Vec<LoopSlots>,
    #[serde(skip)]
    top_loops: Vec<LoopId>,
}

fn divisors_capped(n: u64, cap: u64) -> Vec<OptionValue> {
    (1..=n.min(cap)).filter(|d| n.is_multiple_of(*d)).map(OptionValue::Factor).collect()
}

/// One candidate per pragma slot of the kernel. Parallel and tile factors are
/// the divisors of the trip count up to `cap`; a tile slot on a loop without a
/// child loop only gets factor 1.
pub fn generate_candidates(ir: &KernelIr, cap: u64) -> Vec<PragmaCandidate> {
    ir.slots
        .iter()
        .map(|s| {
            let lp = &ir.loops[s.loop_id];
            let options = match s.kind {
                PragmaKind::Pipeline => {
                    vec![
                        OptionValue::Pipeline(PipelineMode::Off),
                        OptionValue::Pipeline(PipelineMode::Cg),
                        OptionValue::Pipeline(PipelineMode::Fg),
                    ]
                }
                PragmaKind::Parallel => divisors_capped(lp.trip_count, cap),
                PragmaKind::Tile if lp.has_child_loop() => divisors_capped(lp.trip_count, cap),
                PragmaKind::Tile => vec![OptionValue::Factor(1)],
            };
            PragmaCandidate { slot: s.name.clone(), kind: s.kind, loop_id: s.loop_id, options }
        })
        .collect()
}

impl DesignSpace {
    pub fn new(ir: &KernelIr, cap: u64) -> Self {
        let candidates = generate_candidates(ir, cap);
        let mut loops: Vec<LoopSlots> = ir
            .loops
            .iter()
            .map(|l| LoopSlots {
                parent: l.parent,
                depth: l.depth,
                pipeline: None,
                parallel: None,
                tile: None,
                children: l.children().collect(),
                inner_candidates: Vec::new(),
            })
            .collect();
        for (i, c) in candidates.iter().enumerate() {
            let ls = &mut loops[c.loop_id];
            match c.kind {
                PragmaKind::Pipeline => ls.pipeline = Some(i),
                PragmaKind::Parallel => ls.parallel = Some(i),
                PragmaKind::Tile => ls.tile = Some(i),
            }
        }
        for l in 0..ir.loops.len() {
            let inner: Vec<usize> = ir
                .descendants(l)
                .into_iter()
                .flat_map(|d| {
                    let ls = &loops[d];
                    [ls.parallel, ls.pipeline, ls.tile].into_iter().flatten()
                })
                .collect();
            loops[l].inner_candidates = inner;
        }
        let mut enum_order: Vec<usize> = (0..candidates.len()).collect();
        enum_order.sort_by_key(|&i| {
            let c = &candidates[i];
            (std::cmp::Reverse(loops[c.loop_id].depth), c.loop_id, c.kind.priority())
        });
        let size_total = candidates.iter().map(|c| c.options.len() as u128).product();
        let mut space = DesignSpace {
            kernel: ir.name.clone(),
            factor_cap: cap,
            candidates,
            size_total,
            size_pruned: 0,
            enum_order,
            loops,
            top_loops: ir.top_level_loops().collect(),
        };
        space.size_pruned = space.count_pruned();
        space
    }

    pub fn num_slots(&self) -> usize {
        self.candidates.len()
    }

    pub fn default_point(&self) -> Point {
        vec![0; self.candidates.len()]
    }

    pub fn option(&self, p: &[u8], cand: usize) -> OptionValue {
        self.candidates[cand].options[p[cand] as usize]
    }

    pub fn pipeline_of(&self, p: &[u8], l: LoopId) -> PipelineMode {
        self.loops[l].pipeline.map_or(PipelineMode::Off, |c| self.option(p, c).pipeline())
    }

    pub fn parallel_of(&self, p: &[u8], l: LoopId) -> u64 {
        self.loops[l].parallel.map_or(1, |c| self.option(p, c).factor())
    }

    pub fn tile_of(&self, p: &[u8], l: LoopId) -> u64 {
        self.loops[l].tile.map_or(1, |c| self.option(p, c).factor())
    }

    pub fn candidate_of(&self, l: LoopId, kind: PragmaKind) -> Option<usize> {
        let ls = &self.loops[l];
        match kind {
            PragmaKind::Pipeline => ls.pipeline,
            PragmaKind::Parallel => ls.parallel,
            PragmaKind::Tile => ls.tile,
        }
    }

    pub fn loop_parent(&self, l: LoopId) -> Option<LoopId> {
        self.loops[l].parent
    }

    pub fn loop_children(&self, l: LoopId) -> &[LoopId] {
        &self.loops[l].children
    }

    pub fn top_loops(&self) -> &[LoopId] {
        &self.top_loops
    }

    pub fn num_loops(&self) -> usize {
        self.loops.len()
    }

    pub fn to_config(&self, p: &[u8]) -> DesignConfig {
        DesignConfig(
            self.candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (c.slot.clone(), c.options[p[i] as usize]))
                .collect(),
        )
    }

    /// Converts a named config; every slot must be present and no extra slots
    /// are allowed.
    pub fn to_point(&self, cfg: &DesignConfig) -> Result<Point, SpaceError> {
        for k in cfg.0.keys() {
            if !self.candidates.iter().any(|c| &c.slot == k) {
                return Err(SpaceError::UnknownSlot(k.clone()));
            }
        }
        self.candidates
            .iter()
            .map(|c| {
                let v = cfg.get(&c.slot).ok_or_else(|| SpaceError::MissingSlot(c.slot.clone()))?;
                c.options
                    .iter()
                    .position(|o| *o == v)
                    .map(|i| i as u8)
                    .ok_or_else(|| SpaceError::BadOption { slot: c.slot.clone(), value: v.to_string() })
            })
            .collect()
    }

    /// Like [`to_point`](Self::to_point) but missing slots take their default.
    pub fn to_point_lenient(&self, cfg: &DesignConfig) -> Result<Point, SpaceError> {
        let mut full = cfg.clone();
        for c in &self.candidates {
            full.0.entry(c.slot.clone()).or_insert(c.options[0]);
        }
        self.to_point(&full)
    }

    /// `true` when no pruning rule fires:
    /// R1 an fg-pipelined loop forces every pragma of nested loops to default;
    /// R2 a loop under an fg-pipelined parent cannot be parallel;
    /// R3 an fg-pipelined loop cannot be tiled.
    pub fn is_kept(&self, p: &[u8]) -> bool {
        for (l, ls) in self.loops.iter().enumerate() {
            if self.pipeline_of(p, l) == PipelineMode::Fg {
                if ls.inner_candidates.iter().any(|&c| p[c] != 0) {
                    return false;
                }
                if self.tile_of(p, l) > 1 {
                    return false;
                }
            }
            if self.parallel_of(p, l) > 1 {
                if let Some(parent) = ls.parent {
                    if self.pipeline_of(p, parent) == PipelineMode::Fg {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn prune_config(&self, cfg: &DesignConfig) -> Result<bool, SpaceError> {
        Ok(self.is_kept(&self.to_point(cfg)?))
    }

    /// Closed-form count of kept points, one factor per top-level loop nest.
    fn count_pruned(&self) -> u128 {
        fn opts(s: &DesignSpace, c: Option<usize>) -> u128 {
            c.map_or(1, |c| s.candidates[c].options.len() as u128)
        }
        fn nest(s: &DesignSpace, l: LoopId) -> u128 {
            let ls = &s.loops[l];
            let par = opts(s, ls.parallel);
            let tile = opts(s, ls.tile);
            let inner: u128 = ls.children.iter().map(|&c| nest(s, c)).product();
            // off and cg leave the subtree free; fg pins it to defaults
            let (free, fg) = if ls.pipeline.is_some() { (2, 1) } else { (1, 0) };
            free * par * tile * inner + fg * par
        }
        self.top_loops.iter().map(|&l| nest(self, l)).product()
    }

    /// Every kept point exactly once, lexicographic over `enum_order`.
    pub fn enumerate(&self) -> impl Iterator<Item = Point> + '_ {
        RawOdometer::new(self, self.enum_order.iter().rev().copied().collect()).filter(move |p| self.is_kept(p))
    }

    /// Every raw (unpruned) point; the first candidate of `fastest_first`
    /// changes fastest.
    pub fn odometer(&self, fastest_first: Vec<usize>) -> impl Iterator<Item = Point> + '_ {
        RawOdometer::new(self, fastest_first)
    }

    /// Kept points at Hamming distance exactly 1.
    pub fn neighbors(&self, p: &[u8]) -> Vec<Point> {
        let mut out = Vec::new();
        for (i, c) in self.candidates.iter().enumerate() {
            for o in 0..c.options.len() as u8 {
                if o == p[i] {
                    continue;
                }
                let mut q = p.to_vec();
                q[i] = o;
                if self.is_kept(&q) {
                    out.push(q);
                }
            }
        }
        out
    }

    pub fn is_default(&self, p: &[u8]) -> bool {
        p.iter().all(|&o| o == 0)
    }
}

struct RawOdometer {
    radix: Vec<u8>,
    order: Vec<usize>,
    cur: Option<Point>,
}

impl RawOdometer {
    fn new(space: &DesignSpace, fastest_first: Vec<usize>) -> Self {
        let radix = space.candidates.iter().map(|c| c.options.len() as u8).collect();
        RawOdometer { radix, order: fastest_first, cur: Some(space.default_point()) }
    }
}

impl Iterator for RawOdometer {
    type Item = Point;

    fn next(&mut self) -> Option<Point> {
        let out = self.cur.clone()?;
        let mut next = out.clone();
        let mut carried = true;
        for &c in &self.order {
            next[c] += 1;
            if next[c] < self.radix[c] {
                carried = false;
                break;
            }
            next[c] = 0;
        }
        self.cur = if carried { None } else { Some(next) };
        Some(out)
    }
}
