//! Search spaces and architecture encodings.
//!
//! Two spaces are supported. A [`MacroSpace`] describes a whole network as a
//! fixed-length sequence of per-layer hyperparameters (kernel size, filter
//! count and optionally a skip flag). A [`MicroSpace`] describes a single
//! cell built progressively from alternating Norm and Conv layers; the cell
//! is stacked `num_cells_stacked` times to form the network.
//!
//! Micro tokens index the concatenated operation vocabulary
//! `[norm_ops.., conv_ops..]`, so the Norm/Conv alternation is an explicit,
//! checkable property of a token list. Macro tokens are per-slot choice
//! indices.
//!
//! Every architecture has a canonical string key `kind:v0.v1.…` which is the
//! stable cross-file identifier used by traces, fronts and benchmark tables.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NasError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Macro,
    Micro,
}

impl SpaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpaceKind::Macro => "macro",
            SpaceKind::Micro => "micro",
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One candidate architecture.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: SpaceKind,
    pub tokens: Vec<usize>,
}

impl ArchSpec {
    pub fn new(kind: SpaceKind, tokens: Vec<usize>) -> Self {
        Self { kind, tokens }
    }

    pub fn empty_micro() -> Self {
        Self::new(SpaceKind::Micro, Vec::new())
    }

    /// Number of layers in a micro cell (the token count).
    pub fn layer_count(&self) -> usize {
        self.tokens.len()
    }

    /// Canonical key. Formatting only; use [`SearchSpace::encode`] to also
    /// check the spec against a space.
    pub fn key(&self) -> String {
        let body: Vec<String> = self.tokens.iter().map(|t| t.to_string()).collect();
        format!("{}:{}", self.kind, body.join("."))
    }

    /// Copy of `self` with one token appended.
    pub fn extended(&self, token: usize) -> Self {
        let mut tokens = Vec::with_capacity(self.tokens.len() + 1);
        tokens.extend_from_slice(&self.tokens);
        tokens.push(token);
        Self::new(self.kind, tokens)
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for ArchSpec {
    type Err = NasError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| NasError::Data(format!("malformed architecture key {s:?}")))?;
        let kind = match kind {
            "macro" => SpaceKind::Macro,
            "micro" => SpaceKind::Micro,
            other => {
                return Err(NasError::Data(format!(
                    "unknown space kind {other:?} in key {s:?}"
                )))
            }
        };
        let tokens = if body.is_empty() {
            Vec::new()
        } else {
            body.split('.')
                .map(|t| {
                    // reject signs and leading zeros so the key stays canonical
                    let canonical = !t.is_empty()
                        && t.bytes().all(|b| b.is_ascii_digit())
                        && (t == "0" || !t.starts_with('0'));
                    if !canonical {
                        return Err(NasError::Data(format!("bad token {t:?} in key {s:?}")));
                    }
                    t.parse::<usize>()
                        .map_err(|_| NasError::Data(format!("bad token {t:?} in key {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(ArchSpec { kind, tokens })
    }
}

/// Whole-network hyperparameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroSpace {
    pub num_layers: usize,
    pub kernel_sizes: Vec<u32>,
    pub filter_counts: Vec<u32>,
    /// Adds a binary "skip from previous layer" slot to every layer after the first.
    #[serde(default)]
    pub skip_connections: bool,
}

impl Default for MacroSpace {
    fn default() -> Self {
        Self {
            num_layers: 3,
            kernel_sizes: vec![1, 3, 5, 7],
            filter_counts: vec![16, 32, 64, 128],
            skip_connections: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacroSlot {
    Kernel { layer: usize },
    Filters { layer: usize },
    Skip { layer: usize },
}

impl MacroSpace {
    fn slots_for_layer(&self, layer: usize) -> usize {
        if self.skip_connections && layer > 0 {
            3
        } else {
            2
        }
    }

    pub fn num_slots(&self) -> usize {
        (0..self.num_layers).map(|l| self.slots_for_layer(l)).sum()
    }

    /// Maps a flat slot index to its role.
    pub fn slot(&self, index: usize) -> Option<MacroSlot> {
        let mut base = 0;
        for layer in 0..self.num_layers {
            let n = self.slots_for_layer(layer);
            if index < base + n {
                return Some(match index - base {
                    0 => MacroSlot::Kernel { layer },
                    1 => MacroSlot::Filters { layer },
                    _ => MacroSlot::Skip { layer },
                });
            }
            base += n;
        }
        None
    }

    pub fn slot_cardinality(&self, index: usize) -> usize {
        match self.slot(index) {
            Some(MacroSlot::Kernel { .. }) => self.kernel_sizes.len(),
            Some(MacroSlot::Filters { .. }) => self.filter_counts.len(),
            Some(MacroSlot::Skip { .. }) => 2,
            None => 0,
        }
    }

    /// Decoded per-layer hyperparameters `(kernel, filters, skip)`.
    pub fn layers(&self, spec: &ArchSpec) -> Vec<(u32, u32, bool)> {
        let mut out = Vec::with_capacity(self.num_layers);
        let mut i = 0;
        for layer in 0..self.num_layers {
            let k = self.kernel_sizes[spec.tokens[i]];
            let f = self.filter_counts[spec.tokens[i + 1]];
            let skip = self.slots_for_layer(layer) == 3 && spec.tokens[i + 2] == 1;
            out.push((k, f, skip));
            i += self.slots_for_layer(layer);
        }
        out
    }

    fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.num_layers == 0 {
            errs.push("macro space: num_layers must be >= 1".to_string());
        }
        if self.kernel_sizes.is_empty() {
            errs.push("macro space: kernel_sizes is empty".to_string());
        }
        if self.filter_counts.is_empty() {
            errs.push("macro space: filter_counts is empty".to_string());
        }
        for &k in &self.kernel_sizes {
            if k == 0 || k % 2 == 0 {
                errs.push(format!("macro space: kernel size {k} must be a positive odd integer"));
            }
        }
        if self.filter_counts.contains(&0) {
            errs.push("macro space: filter counts must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(NasError::Validation(errs))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    BatchNorm,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormOp {
    pub name: String,
    pub kind: NormKind,
}

fn one() -> u32 {
    1
}

/// Convolution-type cell operation. All convolutions are stride 1 with same
/// padding and produce `cell_channels * expansion` output channels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvOp {
    pub name: String,
    pub kernel: u32,
    #[serde(default = "one")]
    pub groups: u32,
    /// Depthwise k×k followed by pointwise 1×1.
    #[serde(default)]
    pub depthwise_separable: bool,
    #[serde(default = "one")]
    pub expansion: u32,
    /// Channel shuffle after the convolution; a permutation with no cost.
    #[serde(default)]
    pub shuffle: bool,
}

impl ConvOp {
    fn plain(name: &str, kernel: u32, groups: u32) -> Self {
        Self {
            name: name.to_string(),
            kernel,
            groups,
            depthwise_separable: false,
            expansion: 1,
            shuffle: false,
        }
    }
}

/// Progressive cell space. Layers alternate Norm, Conv, Norm, Conv, …
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSpace {
    pub norm_ops: Vec<NormOp>,
    pub conv_ops: Vec<ConvOp>,
    pub max_layers: usize,
    pub num_cells_stacked: usize,
    /// Base output width of every conv op.
    #[serde(default = "default_cell_channels")]
    pub cell_channels: u32,
    /// Spatial divisor applied between consecutive stacked cells.
    #[serde(default = "one")]
    pub reduction: u32,
    /// Project the input image to `cell_channels` with a 3x3 conv before
    /// the first cell (skipped when the channel counts already agree).
    #[serde(default = "yes")]
    pub stem: bool,
}

fn default_cell_channels() -> u32 {
    16
}

fn yes() -> bool {
    true
}

impl Default for MicroSpace {
    fn default() -> Self {
        let shuffled = ConvOp {
            shuffle: true,
            ..ConvOp::plain("shuffle_group_conv1x1_g8", 1, 8)
        };
        let dw = ConvOp {
            depthwise_separable: true,
            ..ConvOp::plain("dw_sep_conv3x3", 3, 1)
        };
        Self {
            norm_ops: vec![
                NormOp {
                    name: "batch_norm".into(),
                    kind: NormKind::BatchNorm,
                },
                NormOp {
                    name: "identity".into(),
                    kind: NormKind::Identity,
                },
            ],
            conv_ops: vec![
                ConvOp::plain("conv3x3", 3, 1),
                ConvOp::plain("conv1x1", 1, 1),
                dw,
                ConvOp::plain("group_conv1x1_g2", 1, 2),
                ConvOp::plain("group_conv3x3_g4", 3, 4),
                shuffled,
            ],
            max_layers: 6,
            num_cells_stacked: 3,
            cell_channels: 16,
            reduction: 1,
            stem: true,
        }
    }
}

/// A cell layer decoded from a micro token.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellOp<'a> {
    Norm(&'a NormOp),
    Conv(&'a ConvOp),
}

impl MicroSpace {
    pub fn vocab_size(&self) -> usize {
        self.norm_ops.len() + self.conv_ops.len()
    }

    pub fn is_norm_slot(slot: usize) -> bool {
        slot.is_multiple_of(2)
    }

    /// Combined-vocabulary tokens valid at `slot`, in declaration order.
    pub fn slot_tokens(&self, slot: usize) -> std::ops::Range<usize> {
        if Self::is_norm_slot(slot) {
            0..self.norm_ops.len()
        } else {
            self.norm_ops.len()..self.vocab_size()
        }
    }

    pub fn slot_cardinality(&self, slot: usize) -> usize {
        if slot >= self.max_layers {
            0
        } else {
            self.slot_tokens(slot).len()
        }
    }

    pub fn op(&self, token: usize) -> Option<CellOp<'_>> {
        if token < self.norm_ops.len() {
            Some(CellOp::Norm(&self.norm_ops[token]))
        } else {
            self.conv_ops
                .get(token - self.norm_ops.len())
                .map(CellOp::Conv)
        }
    }

    pub fn op_name(&self, token: usize) -> &str {
        match self.op(token) {
            Some(CellOp::Norm(n)) => &n.name,
            Some(CellOp::Conv(c)) => &c.name,
            None => "?",
        }
    }

    /// All `ℓ+1`-layer cells reachable from `spec` by appending one layer,
    /// in vocabulary order.
    pub fn enumerate_extensions(&self, spec: &ArchSpec) -> Result<Vec<ArchSpec>> {
        let depth = spec.layer_count();
        if depth >= self.max_layers {
            return Err(NasError::Capacity {
                max_layers: self.max_layers,
            });
        }
        Ok(self
            .slot_tokens(depth)
            .map(|t| spec.extended(t))
            .collect())
    }

    /// Uniform cell with exactly `layers` layers.
    pub fn sample_layers<R: Rng + ?Sized>(&self, layers: usize, rng: &mut R) -> ArchSpec {
        let tokens = (0..layers)
            .map(|slot| rng.random_range(self.slot_tokens(slot)))
            .collect();
        ArchSpec::new(SpaceKind::Micro, tokens)
    }

    fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.norm_ops.is_empty() {
            errs.push("micro space: norm_ops is empty".to_string());
        }
        if self.conv_ops.is_empty() {
            errs.push("micro space: conv_ops is empty".to_string());
        }
        let mut seen = HashSet::new();
        let names = self
            .norm_ops
            .iter()
            .map(|n| &n.name)
            .chain(self.conv_ops.iter().map(|c| &c.name));
        for name in names {
            if !seen.insert(name) {
                errs.push(format!("micro space: duplicate op name {name:?}"));
            }
        }
        if self.max_layers == 0 || !self.max_layers.is_multiple_of(2) {
            errs.push(format!(
                "micro space: max_layers must be a positive even number, got {}",
                self.max_layers
            ));
        }
        if self.num_cells_stacked == 0 {
            errs.push("micro space: num_cells_stacked must be >= 1".to_string());
        }
        if self.cell_channels == 0 {
            errs.push("micro space: cell_channels must be positive".to_string());
        }
        if self.reduction == 0 {
            errs.push("micro space: reduction must be >= 1".to_string());
        }
        for c in &self.conv_ops {
            if c.kernel == 0 || c.kernel % 2 == 0 {
                errs.push(format!("micro space: op {} kernel must be positive odd", c.name));
            }
            if c.depthwise_separable && c.groups != 1 {
                errs.push(format!("micro space: op {} is depthwise-separable and grouped", c.name));
            }
            if c.groups == 0 || c.expansion == 0 {
                errs.push(format!(
                    "micro space: op {} groups and expansion must be positive",
                    c.name
                ));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(NasError::Validation(errs))
        }
    }
}

/// Size summary of a space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpaceStats {
    pub total_candidates: u128,
    pub slot_cardinalities: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchSpace {
    Macro(MacroSpace),
    Micro(MicroSpace),
}

impl SearchSpace {
    pub fn kind(&self) -> SpaceKind {
        match self {
            SearchSpace::Macro(_) => SpaceKind::Macro,
            SearchSpace::Micro(_) => SpaceKind::Micro,
        }
    }

    /// Checks the space's own invariants, including that its size fits a u128.
    pub fn check(&self) -> Result<()> {
        match self {
            SearchSpace::Macro(m) => m.check()?,
            SearchSpace::Micro(m) => m.check()?,
        }
        self.stats().map(|_| ())
    }

    /// Number of decision slots of a full-length candidate.
    pub fn num_slots(&self) -> usize {
        match self {
            SearchSpace::Macro(m) => m.num_slots(),
            SearchSpace::Micro(m) => m.max_layers,
        }
    }

    pub fn slot_cardinality(&self, slot: usize) -> usize {
        match self {
            SearchSpace::Macro(m) => m.slot_cardinality(slot),
            SearchSpace::Micro(m) => m.slot_cardinality(slot),
        }
    }

    pub fn slot_cardinalities(&self) -> Vec<usize> {
        (0..self.num_slots())
            .map(|s| self.slot_cardinality(s))
            .collect()
    }

    /// Full-length candidate count. Micro spaces count cells of exactly
    /// `max_layers` layers.
    pub fn stats(&self) -> Result<SpaceStats> {
        let slot_cardinalities = self.slot_cardinalities();
        let mut total: u128 = 1;
        for &c in &slot_cardinalities {
            total = total.checked_mul(c as u128).ok_or_else(|| {
                NasError::Config("search space size overflows 128 bits".to_string())
            })?;
        }
        Ok(SpaceStats {
            total_candidates: total,
            slot_cardinalities,
        })
    }

    /// Every violated invariant of `spec` in this space; empty means valid.
    pub fn validate(&self, spec: &ArchSpec) -> Vec<String> {
        let mut v = Vec::new();
        if spec.kind != self.kind() {
            v.push(format!(
                "spec kind {} does not match {} space",
                spec.kind,
                self.kind()
            ));
            return v;
        }
        match self {
            SearchSpace::Macro(m) => {
                let n = m.num_slots();
                if spec.tokens.len() != n {
                    v.push(format!(
                        "length {} does not match the {n} macro slots",
                        spec.tokens.len()
                    ));
                }
                for (slot, &t) in spec.tokens.iter().enumerate().take(n) {
                    let card = m.slot_cardinality(slot);
                    if t >= card {
                        v.push(format!(
                            "slot {slot}: token {t} out of range (cardinality {card})"
                        ));
                    }
                }
            }
            SearchSpace::Micro(m) => {
                if spec.tokens.len() > m.max_layers {
                    v.push(format!(
                        "length {} exceeds max_layers {}",
                        spec.tokens.len(),
                        m.max_layers
                    ));
                }
                let vocab = m.vocab_size();
                for (slot, &t) in spec.tokens.iter().enumerate() {
                    if t >= vocab {
                        v.push(format!(
                            "slot {slot}: token {t} out of range (vocabulary size {vocab})"
                        ));
                    } else if !m.slot_tokens(slot).contains(&t) {
                        let want = if MicroSpace::is_norm_slot(slot) {
                            "Norm"
                        } else {
                            "Conv"
                        };
                        v.push(format!("slot {slot} must be {want}"));
                    }
                }
            }
        }
        v
    }

    pub fn ensure_valid(&self, spec: &ArchSpec) -> Result<()> {
        let v = self.validate(spec);
        if v.is_empty() {
            Ok(())
        } else {
            Err(NasError::Validation(v))
        }
    }

    pub fn encode(&self, spec: &ArchSpec) -> Result<String> {
        self.ensure_valid(spec)?;
        Ok(spec.key())
    }

    pub fn decode(&self, key: &str) -> Result<ArchSpec> {
        let spec: ArchSpec = key.parse()?;
        self.ensure_valid(&spec)?;
        Ok(spec)
    }

    /// Every slot drawn independently and uniformly. Micro spaces yield
    /// full-length cells.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchSpec {
        match self {
            SearchSpace::Macro(m) => {
                let tokens = (0..m.num_slots())
                    .map(|s| rng.random_range(0..m.slot_cardinality(s)))
                    .collect();
                ArchSpec::new(SpaceKind::Macro, tokens)
            }
            SearchSpace::Micro(m) => m.sample_layers(m.max_layers, rng),
        }
    }

    /// Valid tokens for `slot` in declaration order.
    pub fn slot_tokens(&self, slot: usize) -> std::ops::Range<usize> {
        match self {
            SearchSpace::Macro(m) => 0..m.slot_cardinality(slot),
            SearchSpace::Micro(m) => m.slot_tokens(slot),
        }
    }

    /// Resamples one slot to a different value. Slots with a single choice
    /// are left unchanged.
    pub fn mutate_slot<R: Rng + ?Sized>(&self, spec: &ArchSpec, slot: usize, rng: &mut R) -> ArchSpec {
        let range = self.slot_tokens(slot);
        let mut out = spec.clone();
        if range.len() < 2 {
            return out;
        }
        let current = spec.tokens[slot];
        let mut pick = rng.random_range(range.start..range.end - 1);
        if pick >= current {
            pick += 1;
        }
        out.tokens[slot] = pick;
        out
    }

    /// All full-length candidates in lexicographic token order.
    pub fn enumerate_all(&self, limit: u128) -> Result<Vec<ArchSpec>> {
        let stats = self.stats()?;
        if stats.total_candidates > limit {
            return Err(NasError::SpaceTooLarge {
                size: stats.total_candidates,
                limit,
            });
        }
        let ranges: Vec<_> = (0..self.num_slots()).map(|s| self.slot_tokens(s)).collect();
        let mut out = Vec::with_capacity(stats.total_candidates as usize);
        let mut cur: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        if ranges.iter().any(|r| r.is_empty()) {
            return Ok(out);
        }
        loop {
            out.push(ArchSpec::new(self.kind(), cur.clone()));
            let mut i = cur.len();
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] < ranges[i].end {
                    break;
                }
                cur[i] = ranges[i].start;
            }
        }
    }

    /// Per-slot, per-choice capacity score in `[0, 1]`: how much a choice
    /// grows the network relative to the other choices of the same slot.
    pub fn capacity_scores(&self) -> Vec<Vec<f64>> {
        fn minmax(xs: &[f64]) -> Vec<f64> {
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            xs.iter()
                .map(|&x| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 })
                .collect()
        }
        match self {
            SearchSpace::Macro(m) => (0..m.num_slots())
                .map(|s| match m.slot(s) {
                    Some(MacroSlot::Kernel { .. }) => minmax(
                        &m.kernel_sizes.iter().map(|&k| (k * k) as f64).collect::<Vec<_>>(),
                    ),
                    Some(MacroSlot::Filters { .. }) => {
                        minmax(&m.filter_counts.iter().map(|&f| f as f64).collect::<Vec<_>>())
                    }
                    _ => vec![0.0, 1.0],
                })
                .collect(),
            SearchSpace::Micro(m) => {
                let c = m.cell_channels as f64;
                let norm: Vec<f64> = m
                    .norm_ops
                    .iter()
                    .map(|n| match n.kind {
                        NormKind::BatchNorm => 1.0,
                        NormKind::Identity => 0.0,
                    })
                    .collect();
                let conv = minmax(
                    &m.conv_ops
                        .iter()
                        .map(|op| {
                            let k2 = (op.kernel * op.kernel) as f64;
                            let out = c * op.expansion as f64;
                            if op.depthwise_separable {
                                k2 * c + c * out
                            } else {
                                k2 * c / op.groups as f64 * out
                            }
                        })
                        .collect::<Vec<_>>(),
                );
                (0..m.max_layers)
                    .map(|s| {
                        if MicroSpace::is_norm_slot(s) {
                            norm.clone()
                        } else {
                            conv.clone()
                        }
                    })
                    .collect()
            }
        }
    }
}
