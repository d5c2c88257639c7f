//! Analytical HLS cost model: validity, cycle count and resource utilization
//! of a kernel under a pragma configuration.
//!
//! Pure and deterministic. All constants live in [`OracleConfig`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::frontend::{KernelIr, LoopId, OpCounts, PragmaKind, Statement};
use crate::space::{DesignConfig, DesignSpace, OptionValue, PipelineMode, SpaceError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("factor for slot `{0}` must be a positive integer")]
    BadFactor(String),
    #[error("slot `{0}` expects a pipeline mode (off, cg or fg)")]
    BadMode(String),
    #[error("config line {line}: {msg}")]
    ConfigFile { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpLatency {
    pub add: u64,
    pub sub: u64,
    pub mul: u64,
    pub div: u64,
    pub cmp: u64,
    pub load: u64,
    pub store: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub dsp: f64,
    pub bram18: f64,
    pub lut: f64,
    pub ff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub op_latency: OpLatency,
    pub dram_burst_fixed: u64,
    pub dram_words_per_cycle: u64,
    pub dsp_per_mul: f64,
    pub dsp_per_div: f64,
    pub lut_per_op: f64,
    pub lut_base: f64,
    pub ff_per_lut: f64,
    pub bram_bits: u64,
    pub parallel_product_cap: u64,
    /// Unrolled operation count above which synthesis "times out".
    pub timeout_ops: u64,
    pub device: Device,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            op_latency: OpLatency { add: 1, sub: 1, mul: 3, div: 16, cmp: 1, load: 2, store: 2 },
            dram_burst_fixed: 50,
            dram_words_per_cycle: 8,
            dsp_per_mul: 5.0,
            dsp_per_div: 14.0,
            lut_per_op: 100.0,
            lut_base: 5000.0,
            ff_per_lut: 0.9,
            bram_bits: 18432,
            parallel_product_cap: 1024,
            timeout_ops: 1_000_000,
            device: Device { dsp: 6840.0, bram18: 4320.0, lut: 1_182_240.0, ff: 2_364_480.0 },
        }
    }
}

impl OracleConfig {
    /// Reads `key = value` lines over the defaults. Keys use dotted paths
    /// (`op_latency.mul`, `device.dsp`); `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self, OracleError> {
        let mut value = serde_json::to_value(OracleConfig::default()).expect("config serialises");
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| OracleError::ConfigFile { line: i + 1, msg };
            let (key, val) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, val) = (key.trim(), val.trim());
            let mut slot = &mut value;
            for part in key.split('.') {
                slot = slot.get_mut(part).ok_or_else(|| err(format!("unknown key `{key}`")))?;
            }
            let parsed: serde_json::Value =
                serde_json::from_str(val).map_err(|_| err(format!("`{val}` is not a number")))?;
            if !parsed.is_number() || !slot.is_number() {
                return Err(err(format!("`{key}` takes a number")));
            }
            *slot = parsed;
        }
        let cfg: OracleConfig = serde_json::from_value(value).map_err(|e| OracleError::ConfigFile { line: 0, msg: e.to_string() })?;
        Ok(cfg)
    }

    pub fn stmt_latency(&self, ops: &OpCounts) -> u64 {
        let l = &self.op_latency;
        ops.add as u64 * l.add
            + ops.sub as u64 * l.sub
            + ops.mul as u64 * l.mul
            + ops.div as u64 * l.div
            + ops.cmp as u64 * l.cmp
            + ops.load as u64 * l.load
            + ops.store as u64 * l.store
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Ok,
    InfeasibleCombination,
    ParallelOverTrip,
    ParallelismCap,
    TimeoutProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub dsp: f64,
    pub bram: f64,
    pub lut: f64,
    pub ff: f64,
}

impl Utilization {
    pub fn max(&self) -> f64 {
        self.dsp.max(self.bram).max(self.lut).max(self.ff)
    }

    pub fn total(&self) -> f64 {
        self.dsp + self.bram + self.lut + self.ff
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resources {
    pub dsp: f64,
    pub bram18: f64,
    pub lut: f64,
    pub ff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub latency: u64,
    pub util: Utilization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub valid: bool,
    pub reason: Reason,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub objectives: Option<Objectives>,
}

impl SynthesisResult {
    fn invalid(reason: Reason) -> Self {
        SynthesisResult { valid: false, reason, objectives: None }
    }
}

/// Pragma values resolved per loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopPragmas {
    pub pipeline: PipelineMode,
    pub parallel: u64,
    pub tile: u64,
}

impl Default for LoopPragmas {
    fn default() -> Self {
        LoopPragmas { pipeline: PipelineMode::Off, parallel: 1, tile: 1 }
    }
}

#[derive(Debug, Clone)]
struct ArrayAccessInfo {
    local: bool,
    words: u64,
    bits: u64,
    last_dim_loops: Vec<LoopId>,
    /// Enclosing loops of every access, innermost last.
    access_chains: Vec<Vec<LoopId>>,
    read: bool,
    written: bool,
}

/// Cost model bound to one kernel.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub ir: KernelIr,
    pub space: DesignSpace,
    pub config: OracleConfig,
    stmt_lat: Vec<u64>,
    /// Σ latency of statements directly in each loop.
    loop_stmt_lat: Vec<u64>,
    top_stmt_lat: u64,
    /// Per-iteration DRAM words of each loop (for cg transfers).
    words_per_iter: Vec<u64>,
    arrays: Vec<ArrayAccessInfo>,
    chains: Vec<Vec<LoopId>>,
    /// Statement ids in each loop's subtree; drives the timeout proxy.
    stmt_chains: Vec<Vec<LoopId>>,
}

/// Per-loop latency attribution for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub total: u64,
    /// Latency of one invocation of each loop.
    pub loop_latency: Vec<u64>,
    /// Cycles attributable to each loop excluding its child loops, summed
    /// over all invocations.
    pub exclusive: Vec<u64>,
}

impl Oracle {
    pub fn new(ir: &KernelIr, space: DesignSpace, config: OracleConfig) -> Self {
        let stmt_lat: Vec<u64> = ir.statements.iter().map(|s| config.stmt_latency(&s.ops)).collect();
        let mut loop_stmt_lat = vec![0; ir.loops.len()];
        let mut top_stmt_lat = 0;
        for s in &ir.statements {
            match s.parent {
                Some(l) => loop_stmt_lat[l] += stmt_lat[s.id],
                None => top_stmt_lat += stmt_lat[s.id],
            }
        }
        let chains: Vec<Vec<LoopId>> = (0..ir.loops.len()).map(|l| ir.loop_chain(l)).collect();
        let stmt_chains: Vec<Vec<LoopId>> =
            ir.statements.iter().map(|s| s.parent.map_or_else(Vec::new, |p| chains[p].clone())).collect();

        let mut arrays: Vec<ArrayAccessInfo> = ir
            .arrays
            .iter()
            .map(|a| ArrayAccessInfo {
                local: a.local,
                words: a.words(),
                bits: a.elem.bits(),
                last_dim_loops: Vec::new(),
                access_chains: Vec::new(),
                read: false,
                written: false,
            })
            .collect();
        for s in &ir.statements {
            for acc in &s.accesses {
                let info = &mut arrays[acc.array];
                if let Some(last) = acc.index.last() {
                    for l in last.loops() {
                        if !info.last_dim_loops.contains(&l) {
                            info.last_dim_loops.push(l);
                        }
                    }
                }
                info.access_chains.push(stmt_chains[s.id].clone());
                if acc.is_write {
                    info.written = true;
                } else {
                    info.read = true;
                }
            }
        }

        let words_per_iter = (0..ir.loops.len()).map(|l| iteration_words(ir, l, &stmt_chains)).collect();

        Oracle {
            ir: ir.clone(),
            space,
            config,
            stmt_lat,
            loop_stmt_lat,
            top_stmt_lat,
            words_per_iter,
            arrays,
            chains,
            stmt_chains,
        }
    }

    /// Resolves a named config. Slots absent from `cfg` take their default;
    /// factors need not be options of the space.
    pub fn resolve(&self, cfg: &DesignConfig) -> Result<Vec<LoopPragmas>, OracleError> {
        for k in cfg.0.keys() {
            if self.ir.slot_by_name(k).is_none() {
                return Err(SpaceError::UnknownSlot(k.clone()).into());
            }
        }
        let mut out = vec![LoopPragmas::default(); self.ir.loops.len()];
        for s in &self.ir.slots {
            let Some(v) = cfg.get(&s.name) else { continue };
            let lp = &mut out[s.loop_id];
            match (s.kind, v) {
                (PragmaKind::Pipeline, OptionValue::Pipeline(m)) => lp.pipeline = m,
                (PragmaKind::Pipeline, _) => return Err(OracleError::BadMode(s.name.clone())),
                (_, OptionValue::Factor(0)) | (_, OptionValue::Pipeline(_)) => {
                    return Err(OracleError::BadFactor(s.name.clone()))
                }
                (PragmaKind::Parallel, OptionValue::Factor(f)) => lp.parallel = f,
                (PragmaKind::Tile, OptionValue::Factor(f)) => lp.tile = f,
            }
        }
        Ok(out)
    }

    pub fn resolve_point(&self, p: &[u8]) -> Vec<LoopPragmas> {
        (0..self.ir.loops.len())
            .map(|l| LoopPragmas {
                pipeline: self.space.pipeline_of(p, l),
                parallel: self.space.parallel_of(p, l),
                tile: self.space.tile_of(p, l),
            })
            .collect()
    }

    pub fn synthesize(&self, cfg: &DesignConfig) -> Result<SynthesisResult, OracleError> {
        Ok(self.synthesize_loops(&self.resolve(cfg)?))
    }

    pub fn synthesize_point(&self, p: &[u8]) -> SynthesisResult {
        self.synthesize_loops(&self.resolve_point(p))
    }

    fn under_fg(&self, lp: &[LoopPragmas], l: LoopId) -> bool {
        let chain = &self.chains[l];
        chain[..chain.len() - 1].iter().any(|&a| lp[a].pipeline == PipelineMode::Fg)
    }

    /// Parallel factor, or the full trip count under an fg-pipelined ancestor.
    fn effective_unroll(&self, lp: &[LoopPragmas], l: LoopId) -> u64 {
        if self.under_fg(lp, l) {
            self.ir.loops[l].trip_count
        } else {
            lp[l].parallel
        }
    }

    pub fn check_validity(&self, lp: &[LoopPragmas]) -> Reason {
        let ir = &self.ir;
        // V1: static pruning rules
        for (l, node) in ir.loops.iter().enumerate() {
            if lp[l].pipeline == PipelineMode::Fg {
                if lp[l].tile > 1 {
                    return Reason::InfeasibleCombination;
                }
                if ir.descendants(l).iter().any(|&d| lp[d] != LoopPragmas::default()) {
                    return Reason::InfeasibleCombination;
                }
            }
            if lp[l].parallel > 1 && node.parent.is_some_and(|p| lp[p].pipeline == PipelineMode::Fg) {
                return Reason::InfeasibleCombination;
            }
        }
        // V2
        if ir.loops.iter().enumerate().any(|(l, n)| lp[l].parallel > n.trip_count || lp[l].tile > n.trip_count) {
            return Reason::ParallelOverTrip;
        }
        // V4
        if lp.iter().any(|p| p.pipeline == PipelineMode::Cg && p.parallel > 1) {
            return Reason::InfeasibleCombination;
        }
        // V3
        let mut product: u64 = 1;
        for l in 0..ir.loops.len() {
            product = product.saturating_mul(self.effective_unroll(lp, l));
        }
        if product > self.config.parallel_product_cap {
            return Reason::ParallelismCap;
        }
        if self.unrolled_ops(lp) > self.config.timeout_ops {
            return Reason::TimeoutProxy;
        }
        Reason::Ok
    }

    fn stmt_unroll(&self, lp: &[LoopPragmas], s: usize) -> u64 {
        self.stmt_chains[s].iter().map(|&l| self.effective_unroll(lp, l)).fold(1u64, |a, b| a.saturating_mul(b))
    }

    fn unrolled_ops(&self, lp: &[LoopPragmas]) -> u64 {
        self.ir
            .statements
            .iter()
            .map(|s| (s.ops.total() as u64).saturating_mul(self.stmt_unroll(lp, s.id)))
            .fold(0u64, |a, b| a.saturating_add(b))
    }

    pub fn synthesize_loops(&self, lp: &[LoopPragmas]) -> SynthesisResult {
        let reason = self.check_validity(lp);
        if reason != Reason::Ok {
            return SynthesisResult::invalid(reason);
        }
        let latency = self.kernel_latency(lp).max(1);
        let res = self.resources(lp);
        let d = &self.config.device;
        let util = Utilization { dsp: res.dsp / d.dsp, bram: res.bram18 / d.bram18, lut: res.lut / d.lut, ff: res.ff / d.ff };
        SynthesisResult { valid: true, reason: Reason::Ok, objectives: Some(Objectives { latency, util }) }
    }

    /// Fully unrolled depth of one iteration of `l`.
    fn unrolled_depth(&self, l: LoopId) -> u64 {
        self.loop_stmt_lat[l] + self.ir.loops[l].children().map(|c| self.unrolled_depth(c)).sum::<u64>()
    }

    /// Latency of one invocation of loop `l`.
    pub fn loop_latency(&self, l: LoopId, lp: &[LoopPragmas]) -> u64 {
        let node = &self.ir.loops[l];
        let p = lp[l];
        let trip = node.trip_count;
        let trip_eff = trip.div_ceil(p.parallel.max(1));
        match p.pipeline {
            PipelineMode::Fg => trip_eff + self.unrolled_depth(l) - 1,
            PipelineMode::Off => trip_eff * self.body_latency(l, lp),
            PipelineMode::Cg => {
                let t = p.tile.max(1);
                let tiles = trip_eff.div_ceil(t);
                let compute = t * self.body_latency(l, lp);
                let transfer = self.config.dram_burst_fixed
                    + (t * self.words_per_iter[l]).div_ceil(self.config.dram_words_per_cycle);
                tiles * compute.max(transfer) + compute.min(transfer)
            }
        }
    }

    fn body_latency(&self, l: LoopId, lp: &[LoopPragmas]) -> u64 {
        self.loop_stmt_lat[l] + self.ir.loops[l].children().map(|c| self.loop_latency(c, lp)).sum::<u64>()
    }

    fn dram_latency(&self, lp: &[LoopPragmas]) -> u64 {
        let mut total = 0;
        for a in &self.arrays {
            if a.local || a.access_chains.is_empty() {
                continue;
            }
            let covered = a.access_chains.iter().all(|c| c.iter().any(|&l| lp[l].pipeline == PipelineMode::Cg));
            if covered {
                continue;
            }
            let one = self.config.dram_burst_fixed + a.words.div_ceil(self.config.dram_words_per_cycle);
            total += one * (u64::from(a.read) + u64::from(a.written));
        }
        total
    }

    pub fn kernel_latency(&self, lp: &[LoopPragmas]) -> u64 {
        let loops: u64 = self.ir.top_level_loops().map(|l| self.loop_latency(l, lp)).sum();
        loops + self.top_stmt_lat + self.dram_latency(lp)
    }

    pub fn breakdown(&self, lp: &[LoopPragmas]) -> LatencyBreakdown {
        let n = self.ir.loops.len();
        let loop_latency: Vec<u64> = (0..n).map(|l| self.loop_latency(l, lp)).collect();
        let mut exclusive = vec![0; n];
        let mut stack: Vec<(LoopId, u64)> = self.ir.top_level_loops().map(|l| (l, 1)).collect();
        while let Some((l, mult)) = stack.pop() {
            let node = &self.ir.loops[l];
            if lp[l].pipeline == PipelineMode::Fg {
                exclusive[l] = mult * loop_latency[l];
                continue;
            }
            let iters = node.trip_count.div_ceil(lp[l].parallel.max(1));
            let child_sum: u64 = node.children().map(|c| loop_latency[c]).sum();
            exclusive[l] = mult * loop_latency[l].saturating_sub(iters * child_sum);
            for c in node.children() {
                stack.push((c, mult * iters));
            }
        }
        LatencyBreakdown { total: self.kernel_latency(lp), loop_latency, exclusive }
    }

    pub fn resources(&self, lp: &[LoopPragmas]) -> Resources {
        let c = &self.config;
        let mut dsp = 0.0;
        let mut lut = c.lut_base;
        for s in &self.ir.statements {
            let u = self.stmt_unroll(lp, s.id) as f64;
            dsp += (s.ops.mul as f64 * c.dsp_per_mul + s.ops.div as f64 * c.dsp_per_div) * u;
            lut += s.ops.total() as f64 * c.lut_per_op * u;
        }
        let mut bram = 0.0;
        for a in &self.arrays {
            let blocks = (a.words * a.bits).div_ceil(c.bram_bits);
            let partition = a.last_dim_loops.iter().map(|&l| self.effective_unroll(lp, l)).max().unwrap_or(1);
            let double = a.access_chains.iter().any(|ch| ch.iter().any(|&l| lp[l].pipeline == PipelineMode::Cg));
            bram += (blocks * partition * if double { 2 } else { 1 }) as f64;
        }
        Resources { dsp, bram18: bram, lut, ff: c.ff_per_lut * lut }
    }

    pub fn statement(&self, s: usize) -> &Statement {
        &self.ir.statements[s]
    }

    pub fn statement_latency(&self, s: usize) -> u64 {
        self.stmt_lat[s]
    }
}

/// DRAM words moved by one iteration of loop `l`: per array and direction,
/// the largest footprint of any access inside `l` with `l`'s own variable
/// (and all outer ones) fixed.
fn iteration_words(ir: &KernelIr, l: LoopId, stmt_chains: &[Vec<LoopId>]) -> u64 {
    let inner: Vec<LoopId> = ir.descendants(l);
    let mut best: BTreeMap<(usize, bool), u64> = BTreeMap::new();
    for s in &ir.statements {
        if !stmt_chains[s.id].contains(&l) {
            continue;
        }
        for acc in &s.accesses {
            let arr = &ir.arrays[acc.array];
            if arr.local {
                continue;
            }
            let mut words = 1u64;
            for (d, ix) in acc.index.iter().enumerate() {
                let span: i64 = ix
                    .terms
                    .iter()
                    .filter(|(lv, _)| inner.contains(lv))
                    .map(|(lv, c)| c.abs() * (ir.loops[*lv].trip_count as i64 - 1))
                    .sum();
                words *= ((span + 1) as u64).min(arr.dims[d]);
            }
            let e = best.entry((acc.array, acc.is_write)).or_insert(0);
            *e = (*e).max(words);
        }
    }
    best.values().sum()
}
