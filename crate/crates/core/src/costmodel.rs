//! Static cost counting and device metric estimation.
//!
//! Parameters and FLOPs are counted exactly from an [`ArchSpec`]. FLOPs use
//! the 2×MAC convention for convolutions and normalization; a residual add
//! costs one FLOP per output element. Every convolution is stride 1 with
//! same padding, so only the configured between-cell reduction changes the
//! spatial size.
//!
//! Device-aware metrics come from a linear [`DeviceProfile`] model:
//!
//! ```text
//! latency = flops / flops_per_second + layers * per_layer_overhead_s
//! energy  = flops / 1e9 * joules_per_gflop + idle_power_w * latency
//! power   = energy / latency            (idle_power_w when latency == 0)
//! memory  = params * bytes_per_param + activation_bytes_factor * max_activation_bytes
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archspace::{ArchSpec, CellOp, MacroSpace, MicroSpace, NormKind, SearchSpace};
use crate::error::{NasError, Result};

/// Bytes per activation element (f32).
pub const ACTIVATION_BYTES: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputShape {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl InputShape {
    pub fn new(channels: u32, height: u32, width: u32) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }
}

impl Default for InputShape {
    fn default() -> Self {
        Self::new(3, 32, 32)
    }
}

/// Costs of one executed layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub params: u64,
    pub flops: u64,
    pub out: InputShape,
}

/// Device-independent totals for a whole network.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StaticCosts {
    pub params: u64,
    pub flops: u64,
    /// Executed layers with a non-zero cost; identity ops are not counted.
    pub layer_count: u64,
    pub max_activation_bytes: u64,
}

impl StaticCosts {
    fn add(&mut self, layer: &LayerCost) {
        self.params += layer.params;
        self.flops += layer.flops;
        self.layer_count += 1;
        let act = layer.out.channels as u64 * layer.out.height as u64 * layer.out.width as u64;
        self.max_activation_bytes = self.max_activation_bytes.max(act * ACTIVATION_BYTES);
    }
}

fn hw(s: InputShape) -> u64 {
    s.height as u64 * s.width as u64
}

/// Grouped k×k convolution with bias.
pub fn conv_cost(input: InputShape, out_channels: u32, kernel: u32, groups: u32) -> Result<LayerCost> {
    if groups == 0 || !input.channels.is_multiple_of(groups) || !out_channels.is_multiple_of(groups) {
        return Err(NasError::Config(format!(
            "{} input / {} output channels not divisible by groups {}",
            input.channels, out_channels, groups
        )));
    }
    let k2 = kernel as u64 * kernel as u64;
    let fan_in = k2 * (input.channels / groups) as u64;
    let out = InputShape {
        channels: out_channels,
        ..input
    };
    Ok(LayerCost {
        params: fan_in * out_channels as u64 + out_channels as u64,
        flops: 2 * hw(input) * out_channels as u64 * fan_in,
        out,
    })
}

/// Depthwise k×k (with bias) followed by a pointwise 1×1 (with bias).
pub fn depthwise_separable_cost(input: InputShape, out_channels: u32, kernel: u32) -> LayerCost {
    let c = input.channels as u64;
    let k2 = kernel as u64 * kernel as u64;
    let o = out_channels as u64;
    LayerCost {
        params: (k2 * c + c) + (c * o + o),
        flops: 2 * hw(input) * c * k2 + 2 * hw(input) * c * o,
        out: InputShape {
            channels: out_channels,
            ..input
        },
    }
}

pub fn batch_norm_cost(input: InputShape) -> LayerCost {
    let c = input.channels as u64;
    LayerCost {
        params: 2 * c,
        flops: 2 * c * hw(input),
        out: input,
    }
}

/// Exact cost counting for architectures of one search space.
#[derive(Clone, Debug)]
pub struct CostModel {
    pub space: SearchSpace,
    pub input: InputShape,
}

impl CostModel {
    pub fn new(space: SearchSpace, input: InputShape) -> Self {
        Self { space, input }
    }

    /// Per-layer costs of every executed layer, in execution order.
    pub fn layer_costs(&self, spec: &ArchSpec) -> Result<Vec<LayerCost>> {
        self.space.ensure_valid(spec)?;
        match &self.space {
            SearchSpace::Macro(m) => macro_layers(m, spec, self.input),
            SearchSpace::Micro(m) => micro_layers(m, spec, self.input),
        }
    }

    pub fn static_costs(&self, spec: &ArchSpec) -> Result<StaticCosts> {
        let mut totals = StaticCosts::default();
        for layer in self.layer_costs(spec)? {
            totals.add(&layer);
        }
        Ok(totals)
    }

    pub fn count_params(&self, spec: &ArchSpec) -> Result<u64> {
        Ok(self.static_costs(spec)?.params)
    }

    pub fn count_flops(&self, spec: &ArchSpec) -> Result<u64> {
        Ok(self.static_costs(spec)?.flops)
    }

    /// All device-dependent and device-independent cost metrics.
    pub fn estimate(&self, spec: &ArchSpec, profile: &DeviceProfile) -> Result<CostEstimate> {
        Ok(profile.estimate(&self.static_costs(spec)?))
    }
}

fn macro_layers(m: &MacroSpace, spec: &ArchSpec, input: InputShape) -> Result<Vec<LayerCost>> {
    let mut shape = input;
    let mut out = Vec::new();
    for (kernel, filters, skip) in m.layers(spec) {
        let mut layer = conv_cost(shape, filters, kernel, 1)?;
        if skip {
            if shape.channels != filters {
                let proj = conv_cost(shape, filters, 1, 1)?;
                layer.params += proj.params;
                layer.flops += proj.flops;
            }
            layer.flops += filters as u64 * hw(shape);
        }
        shape = layer.out;
        out.push(layer);
    }
    Ok(out)
}

/// Kernel of the fixed stem conv in front of a cell stack.
pub const STEM_KERNEL: u32 = 3;

fn micro_layers(m: &MicroSpace, spec: &ArchSpec, input: InputShape) -> Result<Vec<LayerCost>> {
    let mut shape = input;
    let mut out = Vec::new();
    if m.stem && input.channels != m.cell_channels {
        let stem = conv_cost(shape, m.cell_channels, STEM_KERNEL, 1)?;
        shape = stem.out;
        out.push(stem);
    }
    for cell in 0..m.num_cells_stacked {
        if cell > 0 && m.reduction > 1 {
            shape.height = shape.height.div_ceil(m.reduction);
            shape.width = shape.width.div_ceil(m.reduction);
        }
        for &token in &spec.tokens {
            let layer = match m.op(token) {
                Some(CellOp::Norm(n)) => match n.kind {
                    NormKind::BatchNorm => batch_norm_cost(shape),
                    NormKind::Identity => continue,
                },
                Some(CellOp::Conv(c)) => {
                    let width = m.cell_channels * c.expansion;
                    if c.depthwise_separable {
                        depthwise_separable_cost(shape, width, c.kernel)
                    } else {
                        conv_cost(shape, width, c.kernel, c.groups)?
                    }
                }
                None => unreachable!("spec validated against space"),
            };
            shape = layer.out;
            out.push(layer);
        }
    }
    Ok(out)
}

/// Descriptive hardware facts of a device preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hardware {
    pub instance: String,
    pub cpu: String,
    pub cores: u32,
    pub ghz: f64,
    pub gpu: Option<String>,
    pub memory: String,
}

/// Coefficients that turn static counts into device metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub flops_per_second: f64,
    pub per_layer_overhead_s: f64,
    pub joules_per_gflop: f64,
    pub idle_power_w: f64,
    pub bytes_per_param: f64,
    pub activation_bytes_factor: f64,
    /// `(E_min, E_max)` used to normalize energy into `[0, 1]`.
    pub energy_bounds: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardware: Option<Hardware>,
}

impl DeviceProfile {
    /// Workstation: desktop PC, i5-7600 with a Titan X (Pascal).
    pub fn workstation() -> Self {
        Self {
            name: "WS".into(),
            flops_per_second: 2e12,
            per_layer_overhead_s: 2e-5,
            joules_per_gflop: 0.1,
            idle_power_w: 50.0,
            bytes_per_param: 4.0,
            activation_bytes_factor: 2.0,
            energy_bounds: (1e-3, 0.5),
            hardware: Some(Hardware {
                instance: "Desktop PC".into(),
                cpu: "Intel i5-7600".into(),
                cores: 4,
                ghz: 3.5,
                gpu: Some("Titan X (Pascal)".into()),
                memory: "64 GB / 12 GB".into(),
            }),
        }
    }

    /// Embedded system: NVIDIA Jetson TX1.
    pub fn embedded() -> Self {
        Self {
            name: "ES".into(),
            flops_per_second: 1e11,
            per_layer_overhead_s: 2e-4,
            joules_per_gflop: 0.1,
            idle_power_w: 2.0,
            bytes_per_param: 4.0,
            activation_bytes_factor: 2.0,
            energy_bounds: (1e-3, 1.0),
            hardware: Some(Hardware {
                instance: "NVIDIA Jetson TX1".into(),
                cpu: "ARM Cortex57".into(),
                cores: 4,
                ghz: 1.9,
                gpu: Some("Maxwell 256".into()),
                memory: "4 GB".into(),
            }),
        }
    }

    /// Mobile phone: Xiaomi Redmi Note 4, CPU only.
    pub fn mobile() -> Self {
        Self {
            name: "M".into(),
            flops_per_second: 1e10,
            per_layer_overhead_s: 1e-3,
            joules_per_gflop: 0.3,
            idle_power_w: 0.5,
            bytes_per_param: 4.0,
            activation_bytes_factor: 3.0,
            energy_bounds: (1e-3, 2.0),
            hardware: Some(Hardware {
                instance: "Xiaomi Redmi Note 4".into(),
                cpu: "ARM Cortex53".into(),
                cores: 8,
                ghz: 2.0,
                gpu: None,
                memory: "3 GB".into(),
            }),
        }
    }

    pub fn presets() -> Vec<DeviceProfile> {
        vec![Self::workstation(), Self::embedded(), Self::mobile()]
    }

    pub fn preset(name: &str) -> Option<DeviceProfile> {
        Self::presets()
            .into_iter()
            .find(|p| p.name.eq_ignore_ascii_case(name))
    }

    pub fn from_json_file(path: &Path) -> Result<DeviceProfile> {
        let text = std::fs::read_to_string(path).map_err(|e| NasError::io(path, e))?;
        let profile: DeviceProfile = serde_json::from_str(&text)?;
        profile.check()?;
        Ok(profile)
    }

    pub fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        let fields = [
            ("flops_per_second", self.flops_per_second, true),
            ("per_layer_overhead_s", self.per_layer_overhead_s, false),
            ("joules_per_gflop", self.joules_per_gflop, true),
            ("idle_power_w", self.idle_power_w, false),
            ("bytes_per_param", self.bytes_per_param, true),
            ("activation_bytes_factor", self.activation_bytes_factor, true),
            ("energy_bounds.0", self.energy_bounds.0, true),
            ("energy_bounds.1", self.energy_bounds.1, true),
        ];
        for (name, v, strict) in fields {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                let want = if strict { "positive" } else { "non-negative" };
                errs.push(format!("profile {}: {name} must be finite and {want}, got {v}", self.name));
            }
        }
        if self.energy_bounds.0 >= self.energy_bounds.1 {
            errs.push(format!(
                "profile {}: energy_bounds must satisfy E_min < E_max",
                self.name
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(NasError::Validation(errs))
        }
    }

    pub fn estimate(&self, costs: &StaticCosts) -> CostEstimate {
        let flops = costs.flops as f64;
        let latency_s = flops / self.flops_per_second
            + costs.layer_count as f64 * self.per_layer_overhead_s;
        let energy_j = flops / 1e9 * self.joules_per_gflop + self.idle_power_w * latency_s;
        let peak_power_w = if latency_s > 0.0 {
            energy_j / latency_s
        } else {
            self.idle_power_w
        };
        let memory = costs.params as f64 * self.bytes_per_param
            + self.activation_bytes_factor * costs.max_activation_bytes as f64;
        CostEstimate {
            params: costs.params,
            flops: costs.flops,
            latency_s,
            energy_j,
            peak_power_w,
            memory_bytes: memory.round() as u64,
        }
    }

    pub fn normalize_energy(&self, energy_j: f64) -> NormalizedEnergy {
        let (lo, hi) = self.energy_bounds;
        NormalizedEnergy::new((energy_j - lo) / (hi - lo))
    }
}

/// Energy mapped into `[0, 1]` by the profile's bounds.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NormalizedEnergy(f64);

impl NormalizedEnergy {
    pub fn new(v: f64) -> Self {
        Self(if v.is_nan() { 1.0 } else { v.clamp(0.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostEstimate {
    pub params: u64,
    pub flops: u64,
    pub latency_s: f64,
    pub energy_j: f64,
    pub peak_power_w: f64,
    pub memory_bytes: u64,
}

/// All objectives of one evaluated candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub accuracy: f64,
    pub error_rate: f64,
    pub params: u64,
    pub flops: u64,
    pub latency_s: f64,
    pub energy_j: f64,
    pub peak_power_w: f64,
    pub memory_bytes: u64,
}

impl MetricVector {
    pub const FIELDS: [&'static str; 8] = [
        "accuracy",
        "error_rate",
        "params",
        "flops",
        "latency_s",
        "energy_j",
        "peak_power_w",
        "memory_bytes",
    ];

    pub fn new(accuracy: f64, cost: &CostEstimate) -> Self {
        let accuracy = accuracy.clamp(0.0, 1.0);
        Self {
            accuracy,
            error_rate: 1.0 - accuracy,
            params: cost.params,
            flops: cost.flops,
            latency_s: cost.latency_s,
            energy_j: cost.energy_j,
            peak_power_w: cost.peak_power_w,
            memory_bytes: cost.memory_bytes,
        }
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        Some(match field {
            "accuracy" => self.accuracy,
            "error_rate" => self.error_rate,
            "params" => self.params as f64,
            "flops" => self.flops as f64,
            "latency_s" => self.latency_s,
            "energy_j" => self.energy_j,
            "peak_power_w" => self.peak_power_w,
            "memory_bytes" => self.memory_bytes as f64,
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{ConvOp, NormOp, SpaceKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(c: u32, h: u32, w: u32) -> InputShape {
        InputShape::new(c, h, w)
    }

    #[test]
    fn conv3x3_rgb_to_16() {
        let l = conv_cost(s(3, 8, 8), 16, 3, 1).unwrap();
        assert_eq!(l.params, 448);
        assert_eq!(l.flops, 55_296);
    }

    #[test]
    fn grouped_conv() {
        let l = conv_cost(s(8, 1, 1), 8, 1, 2).unwrap();
        assert_eq!(l.params, 40);
        assert!(conv_cost(s(3, 4, 4), 8, 1, 2).is_err());
    }

    #[test]
    fn identity_norm_costs_nothing() {
        let m = MicroSpace::default();
        let model = CostModel::new(SearchSpace::Micro(m), s(16, 8, 8));
        let spec = ArchSpec::new(SpaceKind::Micro, vec![1]);
        assert_eq!(model.count_params(&spec).unwrap(), 0);
        assert_eq!(model.count_flops(&spec).unwrap(), 0);
        assert_eq!(model.static_costs(&spec).unwrap().layer_count, 0);
    }

    #[test]
    fn latency_and_energy_formulas() {
        let p = DeviceProfile {
            per_layer_overhead_s: 0.0,
            flops_per_second: 1e6,
            ..DeviceProfile::workstation()
        };
        let costs = StaticCosts {
            params: 448,
            flops: 55_296,
            layer_count: 1,
            max_activation_bytes: 4096,
        };
        let e = p.estimate(&costs);
        assert!((e.latency_s - 0.055296).abs() < 1e-15);

        let zero = p.estimate(&StaticCosts::default());
        assert_eq!(zero.latency_s, 0.0);
        assert_eq!(zero.energy_j, 0.0);
        assert_eq!(zero.peak_power_w, p.idle_power_w);
        assert_eq!(zero.memory_bytes, 0);

        let doubled = p.estimate(&StaticCosts {
            flops: 2 * costs.flops,
            ..costs.clone()
        });
        assert_eq!(doubled.latency_s, 2.0 * e.latency_s);
        let dyn_e = |x: &CostEstimate| x.energy_j - p.idle_power_w * x.latency_s;
        assert!((dyn_e(&doubled) - 2.0 * dyn_e(&e)).abs() < 1e-15);
    }

    #[test]
    fn normalize_energy_bounds() {
        let p = DeviceProfile {
            energy_bounds: (1.0, 5.0),
            ..DeviceProfile::mobile()
        };
        assert_eq!(p.normalize_energy(1.0).value(), 0.0);
        assert_eq!(p.normalize_energy(5.0).value(), 1.0);
        assert_eq!(p.normalize_energy(2.0).value(), 0.25);
        assert_eq!(p.normalize_energy(0.0).value(), 0.0);
        assert_eq!(p.normalize_energy(99.0).value(), 1.0);
    }

    #[test]
    fn profile_validation() {
        for p in DeviceProfile::presets() {
            p.check().unwrap();
        }
        let bad = DeviceProfile {
            energy_bounds: (2.0, 1.0),
            flops_per_second: -1.0,
            ..DeviceProfile::embedded()
        };
        let err = bad.check().unwrap_err().to_string();
        assert!(err.contains("flops_per_second") && err.contains("E_min < E_max"), "{err}");
        assert_eq!(DeviceProfile::preset("es").unwrap().name, "ES");
        assert!(DeviceProfile::preset("tpu").is_none());
    }

    #[test]
    fn profile_json_roundtrip() {
        let p = DeviceProfile::mobile();
        let text = serde_json::to_string(&p).unwrap();
        let back: DeviceProfile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let minimal = r#"{"name":"X","flops_per_second":1e9,"per_layer_overhead_s":0,
            "joules_per_gflop":1,"idle_power_w":0,"bytes_per_param":4,
            "activation_bytes_factor":1,"energy_bounds":[0.1,1.0]}"#;
        let p: DeviceProfile = serde_json::from_str(minimal).unwrap();
        p.check().unwrap();
    }

    #[test]
    fn stacked_cells_are_additive() {
        let mut m = MicroSpace::default();
        m.num_cells_stacked = 1;
        let spec = ArchSpec::new(SpaceKind::Micro, vec![0, 2, 0, 4]);
        let one = CostModel::new(SearchSpace::Micro(m.clone()), s(16, 8, 8))
            .static_costs(&spec)
            .unwrap();
        m.num_cells_stacked = 2;
        let two = CostModel::new(SearchSpace::Micro(m), s(16, 8, 8))
            .static_costs(&spec)
            .unwrap();
        assert_eq!(two.flops, 2 * one.flops);
        assert_eq!(two.params, 2 * one.params);
    }

    #[test]
    fn reduction_shrinks_later_cells() {
        let mut m = MicroSpace::default();
        m.num_cells_stacked = 2;
        m.reduction = 2;
        let model = CostModel::new(SearchSpace::Micro(m), s(16, 8, 8));
        let spec = ArchSpec::new(SpaceKind::Micro, vec![0, 2]);
        let layers = model.layer_costs(&spec).unwrap();
        assert_eq!(layers.len(), 4);
        assert_eq!(layers[2].out.height, 4);
        assert_eq!(layers[3].flops * 4, layers[1].flops);
    }

    #[test]
    fn macro_skip_projection() {
        let m = MacroSpace {
            num_layers: 2,
            kernel_sizes: vec![3],
            filter_counts: vec![8, 16],
            skip_connections: true,
        };
        let model = CostModel::new(SearchSpace::Macro(m), s(3, 4, 4));
        let no_skip = ArchSpec::new(SpaceKind::Macro, vec![0, 0, 0, 1, 0]);
        let skip = ArchSpec::new(SpaceKind::Macro, vec![0, 0, 0, 1, 1]);
        let a = model.static_costs(&no_skip).unwrap();
        let b = model.static_costs(&skip).unwrap();
        // projection 8->16 1x1: 8*16+16 params, 2*16*16*8 flops; add 16*16 flops
        assert_eq!(b.params - a.params, 144);
        assert_eq!(b.flops - a.flops, 4096 + 256);
    }

    /// Hand-derived oracle table; every value worked out on paper from the
    /// per-layer formulas.
    #[test]
    fn hand_oracle_table() {
        let cases: Vec<(LayerCost, u64, u64)> = vec![
            (conv_cost(s(3, 8, 8), 16, 3, 1).unwrap(), 448, 55_296),
            // 1*1*8/2*8 + 8 = 40 ; 2*1*8*4 = 64
            (conv_cost(s(8, 1, 1), 8, 1, 2).unwrap(), 40, 64),
            // 16*16+16 = 272 ; 2*64*16*16 = 32768
            (conv_cost(s(16, 8, 8), 16, 1, 1).unwrap(), 272, 32_768),
            // 9*4*16+16 = 592 ; 2*64*16*36 = 73728
            (conv_cost(s(16, 8, 8), 16, 3, 4).unwrap(), 592, 73_728),
            // 1*1*2*16 + 16 = 48 ; 2*64*16*2 = 4096
            (conv_cost(s(16, 8, 8), 16, 1, 8).unwrap(), 48, 4_096),
            // 5*5*1*4+4 = 104 ; 2*16*4*25 = 3200
            (conv_cost(s(1, 4, 4), 4, 5, 1).unwrap(), 104, 3_200),
            // dw: 9*16+16 = 160, pw: 16*16+16 = 272 ; 2*64*16*9 + 2*64*16*16 = 18432+32768
            (depthwise_separable_cost(s(16, 8, 8), 16, 3), 432, 51_200),
            // dw: 9*3+3 = 30, pw: 3*8+8 = 32 ; 2*4*3*9 + 2*4*3*8 = 216+192
            (depthwise_separable_cost(s(3, 2, 2), 8, 3), 62, 408),
            // bn: 2*16 = 32 ; 2*16*64 = 2048
            (batch_norm_cost(s(16, 8, 8)), 32, 2_048),
            // bn: 2*3 = 6 ; 2*3*1024 = 6144
            (batch_norm_cost(s(3, 32, 32)), 6, 6_144),
            // 7*7*3*128+128 = 18944 ; 2*1024*128*147 = 38535168
            (conv_cost(s(3, 32, 32), 128, 7, 1).unwrap(), 18_944, 38_535_168),
        ];
        for (i, (layer, params, flops)) in cases.iter().enumerate() {
            assert_eq!(layer.params, *params, "case {i} params");
            assert_eq!(layer.flops, *flops, "case {i} flops");
        }
    }

    #[test]
    fn whole_micro_cell_by_hand() {
        let m = MicroSpace {
            norm_ops: vec![NormOp {
                name: "bn".into(),
                kind: NormKind::BatchNorm,
            }],
            conv_ops: vec![ConvOp {
                name: "c3".into(),
                kernel: 3,
                groups: 1,
                depthwise_separable: false,
                expansion: 1,
                shuffle: false,
            }],
            max_layers: 2,
            num_cells_stacked: 1,
            cell_channels: 16,
            reduction: 1,
            stem: false,
        };
        let model = CostModel::new(SearchSpace::Micro(m.clone()), s(3, 8, 8));
        let spec = ArchSpec::new(SpaceKind::Micro, vec![0, 1]);
        // bn(3): 6 params, 2*3*64 = 384 flops; conv: 448, 55296
        assert_eq!(model.count_params(&spec).unwrap(), 454);
        assert_eq!(model.count_flops(&spec).unwrap(), 55_680);
        let c = model.static_costs(&spec).unwrap();
        assert_eq!(c.max_activation_bytes, 16 * 64 * 4);

        // With the stem, conv3x3 3->16 (448 / 55,296) runs first, then bn(16):
        // 32 params, 2*16*64 = 2048 flops; then conv3x3 16->16: 2320, 294,912.
        let stemmed = CostModel::new(SearchSpace::Micro(MicroSpace { stem: true, ..m }), s(3, 8, 8));
        assert_eq!(stemmed.count_params(&spec).unwrap(), 448 + 32 + 2320);
        assert_eq!(stemmed.count_flops(&spec).unwrap(), 55_296 + 2048 + 294_912);
        assert_eq!(stemmed.static_costs(&spec).unwrap().layer_count, 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn appending_layers_is_monotone(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = MicroSpace::default();
            let model = CostModel::new(SearchSpace::Micro(m.clone()), s(16, 16, 16));
            let depth = rng.random_range(0..m.max_layers);
            let spec = m.sample_layers(depth, &mut rng);
            let p = DeviceProfile::presets()[rng.random_range(0..3)].clone();
            let before = model.estimate(&spec, &p).unwrap();
            for child in m.enumerate_extensions(&spec).unwrap() {
                let after = model.estimate(&child, &p).unwrap();
                prop_assert!(after.params >= before.params);
                prop_assert!(after.flops >= before.flops);
                prop_assert!(after.latency_s >= before.latency_s);
                prop_assert!(after.memory_bytes >= before.memory_bytes);
            }
        }

        #[test]
        fn stacking_is_additive(seed in any::<u64>(), cells in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = MicroSpace::default();
            let depth = rng.random_range(0..=m.max_layers);
            let spec = m.sample_layers(depth, &mut rng);
            m.num_cells_stacked = 1;
            let single = CostModel::new(SearchSpace::Micro(m.clone()), s(16, 8, 8)).static_costs(&spec).unwrap();
            m.num_cells_stacked = cells;
            let stacked = CostModel::new(SearchSpace::Micro(m), s(16, 8, 8)).static_costs(&spec).unwrap();
            prop_assert_eq!(stacked.flops, single.flops * cells as u64);
            prop_assert_eq!(stacked.params, single.params * cells as u64);
        }

        #[test]
        fn normalized_energy_in_unit_interval(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let p = DeviceProfile { energy_bounds: (0.5, 3.0), ..DeviceProfile::workstation() };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let x = p.normalize_energy(lo).value();
            let y = p.normalize_energy(hi).value();
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!(x <= y);
        }
    }
}
