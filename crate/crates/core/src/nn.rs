//! BiasNet: an input-free network that learns filter parameters.
//!
//! The only input is a learnable bias vector `b0`. It passes through a
//! dense bottleneck with sine-activated hidden layers (`sin(omega0 z)`)
//! and a tanh output layer, so every output lies in (-1, 1). Each output is
//! then mapped affinely onto a bounded physical range (break frequency,
//! pole radius, warping factor, first-order pole).
//!
//! A [`Model`] ties one or more networks to a cascade layout:
//!
//! * `Connected`: one network emits every parameter of the cascade.
//! * `Sequential`: one network per section.
//! * `Naive`: no network; the normalized parameters themselves are the
//!   learnable leaves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tape, Var, VarVec};
use crate::error::{Error, Result};
use crate::filters::{biquad_coeffs, Cascade, CascadeSection, Order, SectionCoeffs, SectionSpec};

pub const DEFAULT_HIDDEN: [usize; 4] = [1024, 512, 256, 128];
pub const DEFAULT_OMEGA0: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sine,
    Tanh,
    None,
}

/// Fully connected layer, weights stored row-major (`outputs x inputs`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn forward(&self, x: &[f64], omega0: f64) -> Vec<f64> {
        (0..self.outputs)
            .map(|r| {
                let row = &self.weights[r * self.inputs..(r + 1) * self.inputs];
                let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[r];
                match self.activation {
                    Activation::Sine => (omega0 * z).sin(),
                    Activation::Tanh => z.tanh(),
                    Activation::None => z,
                }
            })
            .collect()
    }
}

/// Layer sizes of a BiasNet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasNetArch {
    pub b0_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub omega0: f64,
}

impl BiasNetArch {
    pub fn new(out_dim: usize) -> Self {
        BiasNetArch {
            b0_dim: 1,
            hidden: DEFAULT_HIDDEN.to_vec(),
            out_dim,
            omega0: DEFAULT_OMEGA0,
        }
    }

    pub fn param_count(&self) -> usize {
        biasnet_param_count(self.b0_dim, &self.hidden, self.out_dim)
    }
}

/// `b0_dim + sum over layers of (inputs * outputs + outputs)`.
pub fn biasnet_param_count(b0_dim: usize, hidden: &[usize], out_dim: usize) -> usize {
    let mut total = b0_dim;
    let mut prev = b0_dim;
    for &h in hidden.iter().chain(std::iter::once(&out_dim)) {
        total += prev * h + h;
        prev = h;
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasNet {
    pub b0: Vec<f64>,
    pub layers: Vec<DenseLayer>,
    pub omega0: f64,
}

impl BiasNet {
    /// All weights and biases zero.
    pub fn zeros(arch: &BiasNetArch) -> Self {
        let mut layers = Vec::with_capacity(arch.hidden.len() + 1);
        let mut prev = arch.b0_dim;
        for &h in &arch.hidden {
            layers.push(DenseLayer::zeros(prev, h, Activation::Sine));
            prev = h;
        }
        layers.push(DenseLayer::zeros(prev, arch.out_dim, Activation::Tanh));
        BiasNet {
            b0: vec![0.0; arch.b0_dim],
            layers,
            omega0: arch.omega0,
        }
    }

    /// Sine-network initialization for the hidden layers, Xavier-uniform
    /// for the tanh output layer (zero output bias), `b0 ~ U(-1, 1)`.
    pub fn init(arch: &BiasNetArch, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(arch);
        net.b0
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-1.0..=1.0));
        let omega0 = arch.omega0;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let n = layer.inputs as f64;
            match layer.activation {
                Activation::Sine => {
                    let w = if i == 0 {
                        1.0 / n
                    } else {
                        (6.0 / n).sqrt() / omega0
                    };
                    let b = 1.0 / n.sqrt();
                    layer
                        .weights
                        .iter_mut()
                        .for_each(|v| *v = rng.gen_range(-w..=w));
                    layer
                        .biases
                        .iter_mut()
                        .for_each(|v| *v = rng.gen_range(-b..=b));
                }
                Activation::Tanh | Activation::None => {
                    let w = (6.0 / (n + layer.outputs as f64)).sqrt();
                    layer
                        .weights
                        .iter_mut()
                        .for_each(|v| *v = rng.gen_range(-w..=w));
                }
            }
        }
        net
    }

    pub fn arch(&self) -> BiasNetArch {
        let (hidden, last) = self.layers.split_at(self.layers.len() - 1);
        BiasNetArch {
            b0_dim: self.b0.len(),
            hidden: hidden.iter().map(|l| l.outputs).collect(),
            out_dim: last[0].outputs,
            omega0: self.omega0,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.b0.len()
            + self
                .layers
                .iter()
                .map(DenseLayer::param_count)
                .sum::<usize>()
    }

    /// Flattened parameters: `b0`, then each layer's weights and biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.b0);
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "network parameter vector",
                left: params.len(),
                right: self.param_count(),
            });
        }
        let mut rest = params;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.b0);
        for l in &mut self.layers {
            take(&mut l.weights);
            take(&mut l.biases);
        }
        Ok(())
    }

    /// Raw outputs in (-1, 1).
    pub fn forward(&self) -> Vec<f64> {
        self.layers
            .iter()
            .fold(self.b0.clone(), |x, l| l.forward(&x, self.omega0))
    }

    /// Records the forward pass; `params` must be laid out as [`Self::params`].
    pub fn forward_on_tape<'t>(&self, tape: &'t Tape, params: VarVec<'t>) -> VarVec<'t> {
        let b0 = params.slice(0, self.b0.len());
        let mut offset = self.b0.len();
        let mut x = b0;
        for l in &self.layers {
            let w = params.slice(offset, l.weights.len());
            offset += l.weights.len();
            let b = params.slice(offset, l.biases.len());
            offset += l.biases.len();
            let z = tape.add_vec(tape.matvec(w, x, l.outputs, l.inputs), b);
            x = match l.activation {
                Activation::Sine => tape.sin_vec(z, self.omega0),
                Activation::Tanh => tape.tanh_vec(z),
                Activation::None => z,
            };
        }
        x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    #[serde(rename = "fc")]
    Cutoff,
    #[serde(rename = "R")]
    Radius,
    #[serde(rename = "a")]
    Warp,
    #[serde(rename = "pole")]
    Pole,
}

impl ParamKind {
    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Cutoff => "fc",
            ParamKind::Radius => "R",
            ParamKind::Warp => "a",
            ParamKind::Pole => "pole",
        }
    }
}

/// Denormalization range of one network output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub min: f64,
    pub max: f64,
}

/// `((max - min) / 2) p + (max + min) / 2`.
pub fn denormalize<T: Real>(p: T, spec: &ParamSpec) -> T {
    p * ((spec.max - spec.min) / 2.0) + (spec.max + spec.min) / 2.0
}

/// Inverse of [`denormalize`].
pub fn normalize(value: f64, spec: &ParamSpec) -> f64 {
    (value - (spec.max + spec.min) / 2.0) / ((spec.max - spec.min) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub fc: [f64; 2],
    #[serde(rename = "R")]
    pub radius: [f64; 2],
    #[serde(rename = "a")]
    pub warp: [f64; 2],
    pub pole: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            fc: [20.0, 20_000.0],
            radius: [0.0, 0.99999],
            warp: [-0.999, 0.999],
            pole: [-0.999, 0.999],
        }
    }
}

impl Bounds {
    pub fn spec(&self, kind: ParamKind) -> ParamSpec {
        let [min, max] = match kind {
            ParamKind::Cutoff => self.fc,
            ParamKind::Radius => self.radius,
            ParamKind::Warp => self.warp,
            ParamKind::Pole => self.pole,
        };
        ParamSpec { kind, min, max }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |[lo, hi]: [f64; 2]| lo.is_finite() && hi.is_finite() && lo < hi;
        if !(ok(self.fc) && ok(self.radius) && ok(self.warp) && ok(self.pole)) {
            return Err(Error::config("every bound needs finite min < max"));
        }
        if self.fc[0] <= 0.0 {
            return Err(Error::config("fc lower bound must be positive"));
        }
        if self.radius[0] < 0.0 || self.radius[1] >= 1.0 {
            return Err(Error::config("R bounds must lie in [0, 1)"));
        }
        for (name, [lo, hi]) in [("a", self.warp), ("pole", self.pole)] {
            if lo <= -1.0 || hi >= 1.0 {
                return Err(Error::config(format!("{name} bounds must lie in (-1, 1)")));
            }
        }
        Ok(())
    }
}

/// Whether each warped section owns its warping factor or all share one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpMode {
    #[default]
    PerSection,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slot {
    kind: ParamKind,
    /// Owning section, or `None` for the shared warping factor.
    section: Option<usize>,
}

/// Maps a flat vector of physical parameters onto cascade sections.
///
/// The order is section by section, `(R, fc[, a])` for 2nd-order and
/// `(pole[, a])` for 1st-order sections, followed by the shared `a` in
/// global warp mode. The default layout therefore reads
/// `(R1, fc1, a1, R2, fc2, a2, R3, fc3, a3, pole4, a4)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub sections: Vec<SectionSpec>,
    pub warp_mode: WarpMode,
    pub bounds: Bounds,
}

impl Layout {
    pub fn new(sections: Vec<SectionSpec>, warp_mode: WarpMode, bounds: Bounds) -> Result<Self> {
        bounds.validate()?;
        Ok(Layout {
            sections,
            warp_mode,
            bounds,
        })
    }

    fn has_global_warp(&self) -> bool {
        self.warp_mode == WarpMode::Global && self.sections.iter().any(|s| s.warped)
    }

    fn section_slots(&self, index: usize) -> Vec<Slot> {
        let spec = self.sections[index];
        let section = Some(index);
        let mut v = match spec.order {
            Order::Second => vec![
                Slot {
                    kind: ParamKind::Radius,
                    section,
                },
                Slot {
                    kind: ParamKind::Cutoff,
                    section,
                },
            ],
            Order::First => vec![Slot {
                kind: ParamKind::Pole,
                section,
            }],
        };
        if spec.warped && self.warp_mode == WarpMode::PerSection {
            v.push(Slot {
                kind: ParamKind::Warp,
                section,
            });
        }
        v
    }

    fn slots(&self) -> Vec<Slot> {
        let mut v: Vec<Slot> = (0..self.sections.len())
            .flat_map(|i| self.section_slots(i))
            .collect();
        if self.has_global_warp() {
            v.push(Slot {
                kind: ParamKind::Warp,
                section: None,
            });
        }
        v
    }

    /// Number of physical parameters.
    pub fn len(&self) -> usize {
        self.slots().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of parameters emitted for section `index` (the shared warp,
    /// if any, is not included).
    pub fn section_len(&self, index: usize) -> usize {
        self.section_slots(index).len()
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        self.slots()
            .iter()
            .map(|s| self.bounds.spec(s.kind))
            .collect()
    }

    /// Labels such as `R1`, `fc1`, `a1`, ..., `pole4`, `a4` (or `a` for a
    /// shared warping factor).
    pub fn routing(&self) -> Vec<String> {
        self.slots()
            .iter()
            .map(|s| match s.section {
                Some(i) => format!("{}{}", s.kind.name(), i + 1),
                None => s.kind.name().to_string(),
            })
            .collect()
    }

    /// Physical parameters from raw outputs in [-1, 1].
    pub fn denormalize<T: Real>(&self, raw: &[T]) -> Vec<T> {
        raw.iter()
            .zip(self.param_specs())
            .map(|(&p, spec)| denormalize(p, &spec))
            .collect()
    }

    /// Section coefficients from physical parameters.
    pub fn coeffs<T: Real>(&self, phys: &[T], sample_rate: f64) -> Result<Vec<SectionCoeffs<T>>> {
        if phys.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "physical parameters vs layout",
                left: phys.len(),
                right: self.len(),
            });
        }
        let shared = self.has_global_warp().then(|| phys[phys.len() - 1]);
        let mut i = 0;
        let mut out = Vec::with_capacity(self.sections.len());
        for spec in &self.sections {
            let own_warp = spec.warped && self.warp_mode == WarpMode::PerSection;
            let coeffs = match spec.order {
                Order::Second => {
                    let (c, d) = biquad_coeffs(phys[i], phys[i + 1], sample_rate);
                    i += 2;
                    let warp = self.warp_of(spec, own_warp, phys, &mut i, shared);
                    SectionCoeffs::Biquad { c, d, warp }
                }
                Order::First => {
                    let pole = phys[i];
                    i += 1;
                    let warp = self.warp_of(spec, own_warp, phys, &mut i, shared);
                    SectionCoeffs::FirstOrder { pole, warp }
                }
            };
            out.push(coeffs);
        }
        Ok(out)
    }

    fn warp_of<T: Real>(
        &self,
        spec: &SectionSpec,
        own: bool,
        phys: &[T],
        i: &mut usize,
        shared: Option<T>,
    ) -> Option<T> {
        if !spec.warped {
            None
        } else if own {
            *i += 1;
            Some(phys[*i - 1])
        } else {
            shared
        }
    }

    /// Builds a validated cascade from physical parameters.
    pub fn cascade(&self, phys: &[f64]) -> Result<Cascade> {
        let shared = self.has_global_warp().then(|| phys[phys.len() - 1]);
        let mut i = 0;
        let mut sections = Vec::with_capacity(self.sections.len());
        for spec in &self.sections {
            let own = spec.warped && self.warp_mode == WarpMode::PerSection;
            let s = match spec.order {
                Order::Second => {
                    let (r, fc) = (phys[i], phys[i + 1]);
                    i += 2;
                    let warp = self.warp_of(spec, own, phys, &mut i, shared);
                    CascadeSection::second(r, fc, warp)?
                }
                Order::First => {
                    let pole = phys[i];
                    i += 1;
                    let warp = self.warp_of(spec, own, phys, &mut i, shared);
                    CascadeSection::first(pole, warp)?
                }
            };
            sections.push(s);
        }
        Cascade::new(sections)
    }

    /// True if every value lies inside its bounds.
    pub fn in_bounds(&self, phys: &[f64]) -> bool {
        phys.len() == self.len()
            && phys
                .iter()
                .zip(self.param_specs())
                .all(|(v, s)| *v >= s.min && *v <= s.max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sequential,
    #[default]
    Connected,
    Naive,
}

/// Networks (or free parameters) together with the cascade they drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub layout: Layout,
    pub nets: Vec<BiasNet>,
    /// For each network, the physical slots its outputs feed.
    pub routing: Vec<Vec<usize>>,
    /// Normalized parameters in [-1, 1]; used by the naive model only.
    pub raw: Vec<f64>,
}

impl Model {
    /// One network emitting every parameter.
    pub fn connected(layout: Layout, hidden: &[usize], omega0: f64, seed: u64) -> Self {
        let n = layout.len();
        let arch = BiasNetArch {
            b0_dim: 1,
            hidden: hidden.to_vec(),
            out_dim: n,
            omega0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Model {
            kind: ModelKind::Connected,
            nets: vec![BiasNet::init(&arch, &mut rng)],
            routing: vec![(0..n).collect()],
            raw: Vec::new(),
            layout,
        }
    }

    /// One network per section; the shared warping factor, if any, is
    /// emitted by the first network.
    pub fn sequential(layout: Layout, hidden: &[usize], omega0: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut routing = Vec::with_capacity(layout.sections.len());
        let mut start = 0;
        for i in 0..layout.sections.len() {
            let n = layout.section_len(i);
            routing.push((start..start + n).collect::<Vec<_>>());
            start += n;
        }
        if start < layout.len() {
            if let Some(first) = routing.first_mut() {
                first.push(start);
            }
        }
        let nets = routing
            .iter()
            .map(|r| {
                let arch = BiasNetArch {
                    b0_dim: 1,
                    hidden: hidden.to_vec(),
                    out_dim: r.len(),
                    omega0,
                };
                BiasNet::init(&arch, &mut rng)
            })
            .collect();
        Model {
            kind: ModelKind::Sequential,
            nets,
            routing,
            raw: Vec::new(),
            layout,
        }
    }

    /// Free parameters starting at the centre of every range.
    pub fn naive(layout: Layout) -> Self {
        Model {
            kind: ModelKind::Naive,
            nets: Vec::new(),
            routing: Vec::new(),
            raw: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn build(
        kind: ModelKind,
        layout: Layout,
        hidden: &[usize],
        omega0: f64,
        seed: u64,
    ) -> Self {
        match kind {
            ModelKind::Connected => Self::connected(layout, hidden, omega0, seed),
            ModelKind::Sequential => Self::sequential(layout, hidden, omega0, seed),
            ModelKind::Naive => Self::naive(layout),
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::Naive => self.raw.len(),
            _ => self.nets.iter().map(BiasNet::param_count).sum(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self.kind {
            ModelKind::Naive => self.raw.clone(),
            _ => self.nets.iter().flat_map(BiasNet::params).collect(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "model parameter vector",
                left: params.len(),
                right: self.param_count(),
            });
        }
        if self.kind == ModelKind::Naive {
            self.raw.copy_from_slice(params);
            return Ok(());
        }
        let mut offset = 0;
        for net in &mut self.nets {
            let n = net.param_count();
            net.set_params(&params[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    /// Keeps naive parameters inside [-1, 1] after an update.
    pub fn project(&mut self) {
        if self.kind == ModelKind::Naive {
            self.raw.iter_mut().for_each(|p| *p = p.clamp(-1.0, 1.0));
        }
    }

    /// Raw values in [-1, 1] for every physical slot.
    pub fn raw_outputs(&self) -> Vec<f64> {
        let tape = Tape::new();
        let (_, raw) = self.raw_on_tape(&tape);
        raw.iter().map(|v| v.value()).collect()
    }

    fn raw_on_tape<'t>(&self, tape: &'t Tape) -> (VarVec<'t>, Vec<Var<'t>>) {
        let leaves = tape.leaf_vec(&self.params());
        if self.kind == ModelKind::Naive {
            return (leaves, leaves.vars());
        }
        let mut raw: Vec<Option<Var<'t>>> = vec![None; self.layout.len()];
        let mut offset = 0;
        for (net, route) in self.nets.iter().zip(&self.routing) {
            let n = net.param_count();
            let out = net.forward_on_tape(tape, leaves.slice(offset, n));
            offset += n;
            for (k, &slot) in route.iter().enumerate() {
                raw[slot] = Some(out.get(k));
            }
        }
        let raw = raw
            .into_iter()
            .map(|v| v.expect("every slot routed"))
            .collect();
        (leaves, raw)
    }

    /// Records the whole parameter path on `tape`; returns the parameter
    /// leaves (laid out as [`Self::params`]) and the physical values.
    pub fn physical_on_tape<'t>(&self, tape: &'t Tape) -> (VarVec<'t>, Vec<Var<'t>>) {
        let (leaves, raw) = self.raw_on_tape(tape);
        (leaves, self.layout.denormalize(&raw))
    }

    /// Physical parameters, evaluated through the same recorded path as
    /// training so exported values match the trained ones exactly.
    pub fn physical(&self) -> Vec<f64> {
        let tape = Tape::new();
        let (_, phys) = self.physical_on_tape(&tape);
        phys.iter().map(|v| v.value()).collect()
    }

    pub fn cascade(&self) -> Result<Cascade> {
        self.layout.cascade(&self.physical())
    }
}
