//! Tuning knobs, the enumerable design space, configurations and conv
//! workloads.
//!
//! A [`DesignSpace`] always carries the seven conv knobs in a fixed order:
//! `tile_b, tile_ci, tile_co, tile_h, tile_w, h_threading, oc_threading`.
//! That order doubles as the mixed-radix order used by
//! [`DesignSpace::index_of`]: the *last* knob (`oc_threading`) varies
//! fastest, so index 1 is the all-zero configuration with `oc_threading`
//! advanced one step.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Upper bound on `h_threading * oc_threading` in the default space.
pub const MAX_THREADS: u64 = 16;

/// Number of knobs in every design space.
pub const NUM_KNOBS: usize = 7;

/// The three cooperating agents. Each owns a disjoint subset of the knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentId {
    /// Parallelization: the two threading knobs.
    Scheduling,
    /// Spatial mapping: height and width tiles.
    Mapping,
    /// Accelerator shape: batch and channel tiles.
    Hardware,
}

impl AgentId {
    pub const ALL: [AgentId; 3] = [AgentId::Scheduling, AgentId::Mapping, AgentId::Hardware];

    pub fn name(self) -> &'static str {
        match self {
            AgentId::Scheduling => "scheduling",
            AgentId::Mapping => "mapping",
            AgentId::Hardware => "hardware",
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A conv tuning knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Knob {
    TileB,
    TileCi,
    TileCo,
    TileH,
    TileW,
    HThreading,
    OcThreading,
}

impl Knob {
    /// Canonical (radix) order.
    pub const ALL: [Knob; NUM_KNOBS] = [
        Knob::TileB,
        Knob::TileCi,
        Knob::TileCo,
        Knob::TileH,
        Knob::TileW,
        Knob::HThreading,
        Knob::OcThreading,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Knob::TileB => "tile_b",
            Knob::TileCi => "tile_ci",
            Knob::TileCo => "tile_co",
            Knob::TileH => "tile_h",
            Knob::TileW => "tile_w",
            Knob::HThreading => "h_threading",
            Knob::OcThreading => "oc_threading",
        }
    }

    pub fn from_name(name: &str) -> Option<Knob> {
        Knob::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn owner(self) -> AgentId {
        match self {
            Knob::TileB | Knob::TileCi | Knob::TileCo => AgentId::Hardware,
            Knob::TileH | Knob::TileW => AgentId::Mapping,
            Knob::HThreading | Knob::OcThreading => AgentId::Scheduling,
        }
    }

    /// Position of this knob in the canonical order.
    pub fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One knob together with its ordered candidate values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnobDef {
    knob: Knob,
    values: Vec<u64>,
}

impl KnobDef {
    /// Values must be non-empty, strictly ascending and at least 1.
    pub fn new(knob: Knob, values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidKnob(format!("{knob}: empty value list")));
        }
        if values[0] < 1 {
            return Err(Error::InvalidKnob(format!("{knob}: values must be >= 1")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidKnob(format!("{knob}: values must be strictly ascending")));
        }
        Ok(Self { knob, values })
    }

    pub fn knob(&self) -> Knob {
        self.knob
    }

    pub fn name(&self) -> &'static str {
        self.knob.name()
    }

    pub fn owner(&self) -> AgentId {
        self.knob.owner()
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One value-list index per knob, in canonical knob order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration(pub [usize; NUM_KNOBS]);

impl Configuration {
    pub fn zeros() -> Self {
        Configuration([0; NUM_KNOBS])
    }

    pub fn indices(&self) -> &[usize; NUM_KNOBS] {
        &self.0
    }

    pub fn index(&self, knob: Knob) -> usize {
        self.0[knob.position()]
    }

    pub fn set(&mut self, knob: Knob, index: usize) {
        self.0[knob.position()] = index;
    }
}

/// Knob values resolved from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnobSettings {
    pub tile_b: u64,
    pub tile_ci: u64,
    pub tile_co: u64,
    pub tile_h: u64,
    pub tile_w: u64,
    pub h_threading: u64,
    pub oc_threading: u64,
}

impl KnobSettings {
    pub fn thread_product(&self) -> u64 {
        self.h_threading * self.oc_threading
    }
}

/// The Cartesian product of the seven knob value lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpace {
    knobs: Vec<KnobDef>,
    max_threads: u64,
}

impl DesignSpace {
    /// Builds a space from exactly one definition per knob, in canonical order.
    pub fn new(knobs: Vec<KnobDef>, max_threads: u64) -> Result<Self> {
        if knobs.len() != NUM_KNOBS {
            return Err(Error::InvalidKnob(format!(
                "expected {NUM_KNOBS} knobs, got {}",
                knobs.len()
            )));
        }
        for (def, expected) in knobs.iter().zip(Knob::ALL) {
            if def.knob != expected {
                return Err(Error::InvalidKnob(format!(
                    "knob {} out of order, expected {expected}",
                    def.knob
                )));
            }
        }
        if max_threads < 1 {
            return Err(Error::InvalidKnob("max_threads must be >= 1".into()));
        }
        Ok(Self { knobs, max_threads })
    }

    /// The default 4096-point conv space.
    pub fn default_space() -> Self {
        let lists: [&[u64]; NUM_KNOBS] = [
            &[1, 2],
            &[1, 2, 4, 8],
            &[1, 2, 4, 8],
            &[1, 2, 4, 8],
            &[1, 2],
            &[1, 2, 4, 8],
            &[1, 2, 4, 8],
        ];
        let knobs = Knob::ALL
            .into_iter()
            .zip(lists)
            .map(|(k, v)| KnobDef::new(k, v.to_vec()).expect("default knob lists are well formed"))
            .collect();
        Self::new(knobs, MAX_THREADS).expect("default space is well formed")
    }

    /// Returns a copy with one knob's value list replaced.
    pub fn with_values(&self, knob: Knob, values: Vec<u64>) -> Result<Self> {
        let mut out = self.clone();
        out.knobs[knob.position()] = KnobDef::new(knob, values)?;
        Ok(out)
    }

    pub fn with_max_threads(mut self, max_threads: u64) -> Result<Self> {
        if max_threads < 1 {
            return Err(Error::InvalidKnob("max_threads must be >= 1".into()));
        }
        self.max_threads = max_threads;
        Ok(self)
    }

    pub fn knobs(&self) -> &[KnobDef] {
        &self.knobs
    }

    pub fn knob(&self, knob: Knob) -> &KnobDef {
        &self.knobs[knob.position()]
    }

    pub fn max_threads(&self) -> u64 {
        self.max_threads
    }

    pub fn total_size(&self) -> usize {
        self.knobs.iter().map(KnobDef::len).product()
    }

    /// Knobs owned by `agent`, in canonical order.
    pub fn agent_knobs(&self, agent: AgentId) -> Vec<Knob> {
        Knob::ALL.into_iter().filter(|k| k.owner() == agent).collect()
    }

    /// Checks that every index is inside its knob's value list.
    pub fn check(&self, cfg: &Configuration) -> Result<()> {
        for (def, &idx) in self.knobs.iter().zip(cfg.0.iter()) {
            if idx >= def.len() {
                return Err(Error::InvalidArgument(format!(
                    "{}: index {idx} exceeds value list of length {}",
                    def.name(),
                    def.len()
                )));
            }
        }
        Ok(())
    }

    /// Mixed-radix encoding, last knob fastest.
    pub fn index_of(&self, cfg: &Configuration) -> Result<usize> {
        self.check(cfg)?;
        Ok(self.index_of_unchecked(cfg))
    }

    pub(crate) fn index_of_unchecked(&self, cfg: &Configuration) -> usize {
        self.knobs
            .iter()
            .zip(cfg.0.iter())
            .fold(0, |acc, (def, &idx)| acc * def.len() + idx)
    }

    /// Inverse of [`DesignSpace::index_of`].
    pub fn config_at(&self, index: usize) -> Result<Configuration> {
        let size = self.total_size();
        if index >= size {
            return Err(Error::OutOfRange { index, size });
        }
        let mut rest = index;
        let mut cfg = Configuration::zeros();
        for (slot, def) in cfg.0.iter_mut().zip(&self.knobs).rev() {
            *slot = rest % def.len();
            rest /= def.len();
        }
        Ok(cfg)
    }

    /// Every configuration in index order.
    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.total_size()).map(|i| self.config_at(i).expect("index within range"))
    }

    /// Index normalized to [0, 1]; single-valued knobs map to 0.
    pub fn normalized(&self, cfg: &Configuration, knob: Knob) -> f64 {
        let len = self.knob(knob).len();
        if len <= 1 {
            0.0
        } else {
            cfg.index(knob) as f64 / (len - 1) as f64
        }
    }

    pub fn value(&self, cfg: &Configuration, knob: Knob) -> u64 {
        self.knob(knob).values[cfg.index(knob)]
    }

    /// Panics if `cfg` is out of range; call [`DesignSpace::check`] first
    /// for untrusted input.
    pub fn settings(&self, cfg: &Configuration) -> KnobSettings {
        KnobSettings {
            tile_b: self.value(cfg, Knob::TileB),
            tile_ci: self.value(cfg, Knob::TileCi),
            tile_co: self.value(cfg, Knob::TileCo),
            tile_h: self.value(cfg, Knob::TileH),
            tile_w: self.value(cfg, Knob::TileW),
            h_threading: self.value(cfg, Knob::HThreading),
            oc_threading: self.value(cfg, Knob::OcThreading),
        }
    }

    /// Knob name to value, in canonical order.
    pub fn named_values(&self, cfg: &Configuration) -> IndexMap<String, u64> {
        Knob::ALL
            .into_iter()
            .map(|k| (k.name().to_string(), self.value(cfg, k)))
            .collect()
    }

    /// Parses a knob name to value map back into a configuration.
    pub fn config_from_values(&self, values: &IndexMap<String, u64>) -> Result<Configuration> {
        let mut cfg = Configuration::zeros();
        for knob in Knob::ALL {
            let v = values
                .get(knob.name())
                .ok_or_else(|| Error::InvalidArgument(format!("missing knob {knob}")))?;
            let idx = self
                .knob(knob)
                .values
                .iter()
                .position(|x| x == v)
                .ok_or_else(|| Error::InvalidArgument(format!("{knob}: value {v} not in space")))?;
            cfg.set(knob, idx);
        }
        Ok(cfg)
    }

    /// Checks the workload-dependent validity rules.
    pub fn validate(&self, cfg: &Configuration, workload: &LayerWorkload) -> Verdict {
        let s = self.settings(cfg);
        let mut violations = Vec::new();
        let dims = [
            (Knob::TileB, s.tile_b, "N", workload.n),
            (Knob::TileCi, s.tile_ci, "Cin", workload.cin),
            (Knob::TileCo, s.tile_co, "Cout", workload.cout),
            (Knob::TileH, s.tile_h, "Hout", workload.out_h()),
            (Knob::TileW, s.tile_w, "Wout", workload.out_w()),
        ];
        for (knob, tile, dim, extent) in dims {
            if tile > extent {
                violations.push(Violation::TileExceeds { knob, dim, tile, extent });
            }
        }
        let product = s.thread_product();
        if product > self.max_threads {
            violations.push(Violation::ThreadProduct { product, max: self.max_threads });
        }
        if violations.is_empty() {
            Verdict::Valid
        } else {
            Verdict::Invalid(violations)
        }
    }

    pub fn is_valid(&self, cfg: &Configuration, workload: &LayerWorkload) -> bool {
        self.validate(cfg, workload).is_valid()
    }
}

impl Default for DesignSpace {
    fn default() -> Self {
        Self::default_space()
    }
}

/// The 7-knob, 4096-configuration default space.
pub fn default_space() -> DesignSpace {
    DesignSpace::default_space()
}

/// Why a configuration cannot run on a workload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TileExceeds { knob: Knob, dim: &'static str, tile: u64, extent: u64 },
    ThreadProduct { product: u64, max: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TileExceeds { knob, dim, tile, extent } => {
                write!(f, "{knob} exceeds {dim} ({tile} > {extent})")
            }
            Violation::ThreadProduct { product, max } => {
                write!(f, "thread product {product} > {max}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(Vec<Violation>),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Verdict::Valid => &[],
            Verdict::Invalid(v) => v,
        }
    }
}

/// Shape of one convolution layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawWorkload", into = "RawWorkload")]
pub struct LayerWorkload {
    pub name: String,
    pub n: u64,
    pub cin: u64,
    pub cout: u64,
    pub h: u64,
    pub w: u64,
    pub kh: u64,
    pub kw: u64,
    pub stride: u64,
    pub pad: u64,
}

impl LayerWorkload {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: u64,
        cin: u64,
        cout: u64,
        h: u64,
        w: u64,
        kh: u64,
        kw: u64,
        stride: u64,
        pad: u64,
    ) -> Result<Self> {
        let wl = Self { name: name.into(), n, cin, cout, h, w, kh, kw, stride, pad };
        wl.check()?;
        Ok(wl)
    }

    /// Square-kernel shorthand: `(name, N, Cin, Cout, H=W, K, stride, pad)`.
    #[allow(clippy::too_many_arguments)]
    pub fn square(
        name: impl Into<String>,
        n: u64,
        cin: u64,
        cout: u64,
        hw: u64,
        k: u64,
        stride: u64,
        pad: u64,
    ) -> Result<Self> {
        Self::new(name, n, cin, cout, hw, hw, k, k, stride, pad)
    }

    fn check(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidWorkload { name: self.name.clone(), reason };
        for (label, v) in [
            ("N", self.n),
            ("Cin", self.cin),
            ("Cout", self.cout),
            ("H", self.h),
            ("W", self.w),
            ("KH", self.kh),
            ("KW", self.kw),
            ("stride", self.stride),
        ] {
            if v < 1 {
                return Err(fail(format!("{label} must be >= 1")));
            }
        }
        for (label, extent, k) in [("height", self.h, self.kh), ("width", self.w, self.kw)] {
            let padded = extent + 2 * self.pad;
            if padded < k {
                return Err(fail(format!("kernel larger than padded {label}")));
            }
            if !(padded - k).is_multiple_of(self.stride) {
                return Err(fail(format!("{label} does not tile evenly under stride {}", self.stride)));
            }
        }
        Ok(())
    }

    pub fn out_h(&self) -> u64 {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> u64 {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    /// Useful FLOPs of the layer (2 per MAC, no padding waste).
    pub fn flops(&self) -> f64 {
        2.0 * (self.n * self.out_h() * self.out_w() * self.cout * self.cin * self.kh * self.kw) as f64
    }

    /// log2 of N, Cin, Cout, Hout, Wout and KH*KW.
    pub fn descriptor(&self) -> [f64; 6] {
        [
            self.n,
            self.cin,
            self.cout,
            self.out_h(),
            self.out_w(),
            self.kh * self.kw,
        ]
        .map(|v| (v as f64).log2())
    }
}

#[derive(Serialize, Deserialize)]
struct RawWorkload {
    name: String,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "Cin")]
    cin: u64,
    #[serde(rename = "Cout")]
    cout: u64,
    #[serde(rename = "H")]
    h: u64,
    #[serde(rename = "W")]
    w: u64,
    #[serde(rename = "KH")]
    kh: u64,
    #[serde(rename = "KW")]
    kw: u64,
    stride: u64,
    pad: u64,
}

impl TryFrom<RawWorkload> for LayerWorkload {
    type Error = Error;

    fn try_from(r: RawWorkload) -> Result<Self> {
        LayerWorkload::new(r.name, r.n, r.cin, r.cout, r.h, r.w, r.kh, r.kw, r.stride, r.pad)
    }
}

impl From<LayerWorkload> for RawWorkload {
    fn from(w: LayerWorkload) -> Self {
        RawWorkload {
            name: w.name,
            n: w.n,
            cin: w.cin,
            cout: w.cout,
            h: w.h,
            w: w.w,
            kh: w.kh,
            kw: w.kw,
            stride: w.stride,
            pad: w.pad,
        }
    }
}

/// One entry of a workload file: a layer plus optional knob overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    #[serde(flatten)]
    pub workload: LayerWorkload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knobs: Option<BTreeMap<String, Vec<u64>>>,
}

impl WorkloadSpec {
    pub fn new(workload: LayerWorkload) -> Self {
        Self { workload, knobs: None }
    }

    /// Default space with this entry's knob overrides applied.
    pub fn space(&self) -> Result<DesignSpace> {
        let mut space = DesignSpace::default_space();
        if let Some(overrides) = &self.knobs {
            for (name, values) in overrides {
                let knob = Knob::from_name(name)
                    .ok_or_else(|| Error::InvalidKnob(format!("unknown knob `{name}`")))?;
                space = space.with_values(knob, values.clone())?;
            }
        }
        Ok(space)
    }
}

/// Parses a workload file: a JSON array of [`WorkloadSpec`].
pub fn parse_workloads(json: &str) -> Result<Vec<WorkloadSpec>> {
    let specs: Vec<WorkloadSpec> = serde_json::from_str(json)?;
    let mut names = std::collections::HashSet::new();
    for spec in &specs {
        if !names.insert(spec.workload.name.as_str()) {
            return invalid(format!("duplicate workload name `{}`", spec.workload.name));
        }
        spec.space()?;
    }
    Ok(specs)
}

pub fn load_workloads(path: impl AsRef<Path>) -> Result<Vec<WorkloadSpec>> {
    parse_workloads(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(n: u64, cin: u64, cout: u64, hw: u64) -> LayerWorkload {
        LayerWorkload::square("t", n, cin, cout, hw, 1, 1, 0).unwrap()
    }

    #[test]
    fn default_space_shape() {
        let space = default_space();
        assert_eq!(space.total_size(), 4096);
        assert_eq!(space.knobs().len(), 7);
        assert_eq!(space.knob(Knob::TileCi).owner(), AgentId::Hardware);
        assert_eq!(space.knob(Knob::HThreading).owner(), AgentId::Scheduling);
        assert_eq!(space.knob(Knob::TileW).owner(), AgentId::Mapping);
        assert_eq!(space.knob(Knob::TileB).values(), &[1, 2]);
        assert_eq!(space.knob(Knob::TileH).values(), &[1, 2, 4, 8]);
        assert_eq!(space.knob(Knob::TileW).values(), &[1, 2]);
        assert_eq!(space.knob(Knob::OcThreading).values(), &[1, 2, 4, 8]);
    }

    #[test]
    fn agents_partition_knobs() {
        let space = default_space();
        let mut all: Vec<Knob> = AgentId::ALL.iter().flat_map(|&a| space.agent_knobs(a)).collect();
        all.sort();
        assert_eq!(all, Knob::ALL.to_vec());
        assert_eq!(space.agent_knobs(AgentId::Hardware).len(), 3);
        assert_eq!(space.agent_knobs(AgentId::Mapping).len(), 2);
        assert_eq!(space.agent_knobs(AgentId::Scheduling).len(), 2);
    }

    #[test]
    fn knob_def_rejects_bad_lists() {
        assert!(KnobDef::new(Knob::TileB, vec![]).is_err());
        assert!(KnobDef::new(Knob::TileB, vec![0, 1]).is_err());
        assert!(KnobDef::new(Knob::TileB, vec![2, 2]).is_err());
        assert!(KnobDef::new(Knob::TileB, vec![4, 2]).is_err());
        assert!(KnobDef::new(Knob::TileB, vec![1, 3, 9]).is_ok());
    }

    #[test]
    fn radix_corners() {
        let space = default_space();
        assert_eq!(space.index_of(&Configuration::zeros()).unwrap(), 0);
        let max = Configuration(space.knobs().iter().map(|k| k.len() - 1).collect::<Vec<_>>().try_into().unwrap());
        assert_eq!(space.index_of(&max).unwrap(), 4095);
        assert_eq!(space.config_at(0).unwrap(), Configuration::zeros());
        assert_eq!(space.config_at(4095).unwrap(), max);
        let one = space.config_at(1).unwrap();
        assert_eq!(one.0, [0, 0, 0, 0, 0, 0, 1]);
        assert!(matches!(space.config_at(4096), Err(Error::OutOfRange { .. })));
        let mut bad = Configuration::zeros();
        bad.set(Knob::TileB, 2);
        assert!(space.index_of(&bad).is_err());
    }

    #[test]
    fn radix_exhaustive_bijection() {
        let space = default_space();
        for i in 0..space.total_size() {
            let cfg = space.config_at(i).unwrap();
            assert_eq!(space.index_of(&cfg).unwrap(), i);
        }
    }

    proptest! {
        #[test]
        fn radix_round_trip(idx in prop::array::uniform7(0usize..8)) {
            let space = default_space();
            let mut cfg = Configuration(idx);
            for k in Knob::ALL {
                let len = space.knob(k).len();
                cfg.set(k, cfg.index(k) % len);
            }
            let i = space.index_of(&cfg).unwrap();
            prop_assert!(i < space.total_size());
            prop_assert_eq!(space.config_at(i).unwrap(), cfg);
        }
    }

    #[test]
    fn validation_rules() {
        let space = default_space();
        let wl = layer(1, 4, 64, 8);
        assert!(space.validate(&Configuration::zeros(), &wl).is_valid());

        let mut cfg = Configuration::zeros();
        cfg.set(Knob::TileCi, 3);
        let v = space.validate(&cfg, &wl);
        assert_eq!(v.violations().len(), 1);
        assert!(v.violations()[0].to_string().starts_with("tile_ci exceeds Cin"));

        let mut cfg = Configuration::zeros();
        cfg.set(Knob::HThreading, 3);
        cfg.set(Knob::OcThreading, 3);
        let v = space.validate(&cfg, &wl);
        assert_eq!(v.violations()[0].to_string(), "thread product 64 > 16");

        let mut cfg = Configuration::zeros();
        cfg.set(Knob::TileB, 1);
        assert!(!space.is_valid(&cfg, &wl));
    }

    #[test]
    fn workload_output_dims() {
        let wl = LayerWorkload::square("r", 1, 64, 64, 56, 3, 1, 1).unwrap();
        assert_eq!((wl.out_h(), wl.out_w()), (56, 56));
        let wl = LayerWorkload::square("s2", 1, 3, 64, 224, 7, 2, 3).unwrap_err();
        assert!(matches!(wl, Error::InvalidWorkload { .. }));
        let wl = LayerWorkload::square("s2", 1, 3, 64, 225, 7, 2, 3).unwrap();
        assert_eq!(wl.out_h(), 113);
        assert!(LayerWorkload::square("big", 1, 1, 1, 2, 5, 1, 0).is_err());
        assert!(LayerWorkload::square("zero", 0, 1, 1, 2, 1, 1, 0).is_err());
    }

    #[test]
    fn descriptor_differs_between_layers() {
        let a = layer(1, 64, 64, 56).descriptor();
        let b = layer(1, 128, 64, 28).descriptor();
        assert_ne!(a, b);
        assert_eq!(a[1], 6.0);
    }

    #[test]
    fn workload_file_parses_overrides() {
        let json = r#"[
            {"name": "conv1", "N": 1, "Cin": 64, "Cout": 64, "H": 56, "W": 56,
             "KH": 3, "KW": 3, "stride": 1, "pad": 1},
            {"name": "toy", "N": 1, "Cin": 8, "Cout": 8, "H": 8, "W": 8,
             "KH": 1, "KW": 1, "stride": 1, "pad": 0,
             "knobs": {"tile_b": [1], "tile_h": [1], "tile_w": [1], "oc_threading": [1]}}
        ]"#;
        let specs = parse_workloads(json).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].space().unwrap().total_size(), 4096);
        assert_eq!(specs[1].space().unwrap().total_size(), 64);
        assert_eq!(specs[0].workload.out_h(), 56);

        let bad = r#"[{"name": "x", "N": 1, "Cin": 1, "Cout": 1, "H": 4, "W": 4,
            "KH": 1, "KW": 1, "stride": 1, "pad": 0, "knobs": {"tile_q": [1]}}]"#;
        assert!(parse_workloads(bad).is_err());
        let dup = r#"[{"name": "x", "N": 1, "Cin": 1, "Cout": 1, "H": 4, "W": 4, "KH": 1, "KW": 1, "stride": 1, "pad": 0},
                      {"name": "x", "N": 1, "Cin": 1, "Cout": 1, "H": 4, "W": 4, "KH": 1, "KW": 1, "stride": 1, "pad": 0}]"#;
        assert!(parse_workloads(dup).is_err());
    }

    #[test]
    fn named_values_round_trip() {
        let space = default_space();
        let cfg = space.config_at(1234).unwrap();
        let named = space.named_values(&cfg);
        assert_eq!(named.keys().next().unwrap(), "tile_b");
        assert_eq!(space.config_from_values(&named).unwrap(), cfg);
    }
}
