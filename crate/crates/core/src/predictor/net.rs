//! The importance predictor: max-pool by 8, a per-width 1x1 compression to 16
//! channels, three grouped 3x3 convolutions, a 1x1 projection and a sigmoid.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::conv2d::{Conv2d, Conv2dGrad};
use super::heatmap::Heatmap;
use crate::cost::{CostLedger, Domain, BYTES_PER_VALUE};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::voxel::{BevExtent, SparseBevTensor};

pub const POOL: usize = 8;
pub const GROUPS: usize = 8;
pub const TRUNK_WIDTH: usize = 16;
pub const TRUNK_CHANNELS: [usize; 3] = [16, 32, 16];
pub const WEIGHTS_VERSION: u32 = 1;

/// 1x1 compression from an input width to the trunk width.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub conv: Conv2d,
    /// Fixed per-channel multiplier applied to pooled inputs. `None` means 1.
    pub input_scale: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorNet {
    heads: BTreeMap<usize, Head>,
    trunk: [Conv2d; 3],
    out: Conv2d,
}

/// Activations kept by a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    /// Scaled pooled input.
    pub x: Vec<f64>,
    /// Post-ReLU activations after the head and each trunk layer.
    pub acts: [Vec<f64>; 4],
    pub y: Vec<f64>,
}

/// Gradient with the net's structure. Heads not touched by a sample are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrad {
    pub heads: BTreeMap<usize, Conv2dGrad>,
    pub trunk: [Conv2dGrad; 3],
    pub out: Conv2dGrad,
}

impl NetGrad {
    pub(crate) fn zeros_like(net: &PredictorNet) -> Self {
        NetGrad {
            heads: BTreeMap::new(),
            trunk: [net.trunk[0].zero_grad(), net.trunk[1].zero_grad(), net.trunk[2].zero_grad()],
            out: net.out.zero_grad(),
        }
    }

    /// Adds `other` into `self`.
    pub(crate) fn add(&mut self, other: &NetGrad) {
        fn acc(a: &mut Conv2dGrad, b: &Conv2dGrad) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        for (c, g) in &other.heads {
            match self.heads.get_mut(c) {
                Some(mine) => acc(mine, g),
                None => {
                    self.heads.insert(*c, g.clone());
                }
            }
        }
        for (a, b) in self.trunk.iter_mut().zip(&other.trunk) {
            acc(a, b);
        }
        acc(&mut self.out, &other.out);
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for g in self.tensors_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v = Vec::new();
        for g in self.heads.values_mut() {
            v.push(&mut g.weight);
            v.push(&mut g.bias);
        }
        for g in self.trunk.iter_mut().chain(std::iter::once(&mut self.out)) {
            v.push(&mut g.weight);
            v.push(&mut g.bias);
        }
        v
    }
}

impl PredictorNet {
    /// Seeded uniform initialization with one compression head per input width.
    pub fn seeded(input_widths: &[usize], seed: u64) -> Result<Self> {
        let mut net = PredictorNet {
            heads: BTreeMap::new(),
            trunk: [
                Conv2d::seeded(TRUNK_WIDTH, TRUNK_CHANNELS[0], 3, GROUPS, seed ^ 0x11)?,
                Conv2d::seeded(TRUNK_CHANNELS[0], TRUNK_CHANNELS[1], 3, GROUPS, seed ^ 0x12)?,
                Conv2d::seeded(TRUNK_CHANNELS[1], TRUNK_CHANNELS[2], 3, GROUPS, seed ^ 0x13)?,
            ],
            out: Conv2d::seeded(TRUNK_CHANNELS[2], 1, 1, 1, seed ^ 0x14)?,
        };
        for &c in input_widths {
            net.add_head(c, seed)?;
        }
        Ok(net)
    }

    /// All weights and biases zero: the output is sigmoid(0) everywhere.
    pub fn zeros(input_widths: &[usize]) -> Result<Self> {
        let mut net = PredictorNet {
            heads: BTreeMap::new(),
            trunk: [
                Conv2d::zeros(TRUNK_WIDTH, TRUNK_CHANNELS[0], 3, GROUPS)?,
                Conv2d::zeros(TRUNK_CHANNELS[0], TRUNK_CHANNELS[1], 3, GROUPS)?,
                Conv2d::zeros(TRUNK_CHANNELS[1], TRUNK_CHANNELS[2], 3, GROUPS)?,
            ],
            out: Conv2d::zeros(TRUNK_CHANNELS[2], 1, 1, 1)?,
        };
        for &c in input_widths {
            net.heads.insert(
                c,
                Head {
                    conv: Conv2d::zeros(c, TRUNK_WIDTH, 1, 1)?,
                    input_scale: None,
                },
            );
        }
        Ok(net)
    }

    /// Adds a seeded head for width `c` unless one exists.
    pub fn add_head(&mut self, c: usize, seed: u64) -> Result<()> {
        if c == 0 {
            return Err(Error::Config("predictor input width must be positive".into()));
        }
        if let std::collections::btree_map::Entry::Vacant(e) = self.heads.entry(c) {
            let conv = Conv2d::seeded(c, TRUNK_WIDTH, 1, 1, seed ^ (0x100 + c as u64))?;
            e.insert(Head { conv, input_scale: None });
        }
        Ok(())
    }

    pub fn input_widths(&self) -> Vec<usize> {
        self.heads.keys().copied().collect()
    }

    pub fn head(&self, c: usize) -> Option<&Head> {
        self.heads.get(&c)
    }

    pub fn head_mut(&mut self, c: usize) -> Option<&mut Head> {
        self.heads.get_mut(&c)
    }

    pub fn trunk(&self) -> &[Conv2d; 3] {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut [Conv2d; 3] {
        &mut self.trunk
    }

    pub fn output_layer(&self) -> &Conv2d {
        &self.out
    }

    pub fn output_layer_mut(&mut self) -> &mut Conv2d {
        &mut self.out
    }

    /// Parameter tensors in a fixed order matching [`NetGrad::tensors_mut`]
    /// for a gradient that covers every head.
    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v = Vec::new();
        for h in self.heads.values_mut() {
            v.push(&mut h.conv.weight);
            v.push(&mut h.conv.bias);
        }
        for c in self.trunk.iter_mut().chain(std::iter::once(&mut self.out)) {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v
    }

    pub fn output_extent(input: BevExtent) -> BevExtent {
        input.downsampled(POOL as i32)
    }

    pub fn forward(&self, x: &SparseBevTensor, exec: ExecMode) -> Result<Heatmap> {
        let trace = self.trace(x, exec)?;
        let extent = BevExtent::new(trace.w as i32, trace.h as i32);
        Heatmap::new(extent, trace.y)
    }

    pub(crate) fn trace(&self, x: &SparseBevTensor, exec: ExecMode) -> Result<Trace> {
        let c = x.channels();
        let head = self.heads.get(&c).ok_or_else(|| {
            Error::Shape(format!(
                "predictor has no compression head for {c} input channels (has {:?})",
                self.input_widths()
            ))
        })?;
        let (mut pooled, h, w) = max_pool(x);
        if let Some(scale) = &head.input_scale {
            let plane = h * w;
            for (ch, s) in scale.iter().enumerate() {
                pooled[ch * plane..][..plane].iter_mut().for_each(|v| *v *= s);
            }
        }
        Ok(self.trace_pooled(head, pooled, c, h, w, exec))
    }

    fn trace_pooled(&self, head: &Head, x: Vec<f64>, c: usize, h: usize, w: usize, exec: ExecMode) -> Trace {
        let relu = |mut v: Vec<f64>| {
            v.iter_mut().for_each(|a| *a = a.max(0.0));
            v
        };
        let a0 = relu(head.conv.forward(&x, h, w, exec));
        let a1 = relu(self.trunk[0].forward(&a0, h, w, exec));
        let a2 = relu(self.trunk[1].forward(&a1, h, w, exec));
        let a3 = relu(self.trunk[2].forward(&a2, h, w, exec));
        let y = self
            .out
            .forward(&a3, h, w, exec)
            .into_iter()
            .map(sigmoid)
            .collect();
        Trace {
            channels: c,
            h,
            w,
            x,
            acts: [a0, a1, a2, a3],
            y,
        }
    }

    /// Backpropagates `dl_dy` (gradient of the loss with respect to the
    /// sigmoid output) through a recorded forward pass.
    pub(crate) fn backward(&self, t: &Trace, dl_dy: &[f64], exec: ExecMode) -> NetGrad {
        let (h, w) = (t.h, t.w);
        let dz: Vec<f64> = dl_dy.iter().zip(&t.y).map(|(g, y)| g * y * (1.0 - y)).collect();
        let (g_out, mut da) = self.out.backward(&t.acts[3], &dz, h, w, exec, true);
        let mut trunk_grads = Vec::with_capacity(3);
        for l in (0..3).rev() {
            relu_mask(&mut da, &t.acts[l + 1]);
            let (g, d) = self.trunk[l].backward(&t.acts[l], &da, h, w, exec, true);
            trunk_grads.push(g);
            da = d;
        }
        relu_mask(&mut da, &t.acts[0]);
        let head = &self.heads[&t.channels];
        let (g_head, _) = head.conv.backward(&t.x, &da, h, w, exec, false);
        trunk_grads.reverse();
        let mut it = trunk_grads.into_iter();
        NetGrad {
            heads: BTreeMap::from([(t.channels, g_head)]),
            trunk: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
            out: g_out,
        }
    }

    /// Adds predictor cost entries for one forward pass on `input`.
    pub fn record_cost(&self, ledger: &mut CostLedger, name: &str, input: BevExtent, channels: usize) {
        let out = Self::output_extent(input);
        let (h, w) = (out.h as usize, out.w as usize);
        let cells = out.cells() as u64;
        let head = Conv2d {
            in_channels: channels,
            out_channels: TRUNK_WIDTH,
            kernel_size: 1,
            groups: 1,
            weight: Vec::new(),
            bias: Vec::new(),
        };
        let layers = std::iter::once(&head).chain(self.trunk.iter()).chain(std::iter::once(&self.out));
        let mut macs = 0;
        let mut act = 0;
        for c in layers {
            macs += c.macs(h, w);
            act += (c.out_channels * h * w) as u64 * BYTES_PER_VALUE;
        }
        let e = ledger.begin_layer(name, Domain::Predictor, cells);
        e.flops = 2 * macs;
        e.activation_bytes = act;
        e.input_rows = cells;
        e.filtered_rows = cells;
        e.conv_input_rows = cells;
        e.output_rows = cells;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&WeightsFile::from(self)).expect("weights serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: WeightsFile = serde_json::from_str(s).map_err(|e| Error::json("predictor weights", e))?;
        PredictorNet::try_from(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Forward pass of `net` on `x`; see [`PredictorNet::forward`].
pub fn predictor_forward(x: &SparseBevTensor, net: &PredictorNet) -> Result<Heatmap> {
    net.forward(x, ExecMode::default())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu_mask(d: &mut [f64], act: &[f64]) {
    for (g, a) in d.iter_mut().zip(act) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Densifies with absent cells as zero and max-pools by [`POOL`]; windows on
/// the ragged border cover only cells inside the grid.
pub(crate) fn max_pool(x: &SparseBevTensor) -> (Vec<f64>, usize, usize) {
    let e = x.extent();
    let out = PredictorNet::output_extent(e);
    let (h, w) = (out.h as usize, out.w as usize);
    let c = x.channels();
    let plane = h * w;
    // Absent cells are zeros, so a window containing any absent cell has max >= 0.
    let mut full = vec![0u32; plane];
    let mut pooled = vec![f64::NEG_INFINITY; c * plane];
    for (coord, row) in x.coords().iter().zip(x.feats().chunks_exact(c.max(1))) {
        let cell = (coord.v as usize / POOL) * w + coord.u as usize / POOL;
        full[cell] += 1;
        for (ch, &val) in row.iter().enumerate() {
            let p = &mut pooled[ch * plane + cell];
            *p = p.max(val as f64);
        }
    }
    for v in 0..h {
        for u in 0..w {
            let cell = v * w + u;
            let cw = (e.w as usize - u * POOL).min(POOL);
            let ch = (e.h as usize - v * POOL).min(POOL);
            if (full[cell] as usize) < cw * ch {
                for k in 0..c {
                    let p = &mut pooled[k * plane + cell];
                    *p = p.max(0.0);
                }
            }
        }
    }
    (pooled, h, w)
}

/// Pooled input for a head, before input scaling.
pub fn pooled_input(x: &SparseBevTensor) -> (Vec<f64>, usize, usize) {
    max_pool(x)
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    version: u32,
    layers: Vec<LayerRepr>,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    name: String,
    in_channels: usize,
    out_channels: usize,
    kernel_size: usize,
    groups: usize,
    /// `[out][in / groups][k][k]`
    weight: Vec<Vec<Vec<Vec<f64>>>>,
    bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_scale: Option<Vec<f64>>,
}

impl LayerRepr {
    fn from_conv(name: String, c: &Conv2d, input_scale: Option<Vec<f64>>) -> Self {
        let k = c.kernel_size;
        let ipg = c.in_per_group();
        let weight = (0..c.out_channels)
            .map(|o| {
                (0..ipg)
                    .map(|i| {
                        (0..k)
                            .map(|y| c.weight[((o * ipg + i) * k + y) * k..][..k].to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        LayerRepr {
            name,
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel_size: k,
            groups: c.groups,
            weight,
            bias: c.bias.clone(),
            input_scale,
        }
    }

    fn into_conv(self, expect: (usize, usize, usize, usize)) -> Result<(Conv2d, Option<Vec<f64>>)> {
        let got = (self.in_channels, self.out_channels, self.kernel_size, self.groups);
        if got != expect {
            return Err(Error::Shape(format!(
                "layer {}: (in, out, k, groups) = {got:?}, expected {expect:?}",
                self.name
            )));
        }
        let mut c = Conv2d::zeros(self.in_channels, self.out_channels, self.kernel_size, self.groups)?;
        let k = c.kernel_size;
        let ipg = c.in_per_group();
        let bad = || Error::Shape(format!("layer {}: weight array has the wrong shape", self.name));
        if self.weight.len() != c.out_channels || self.bias.len() != c.out_channels {
            return Err(bad());
        }
        let mut flat = Vec::with_capacity(c.weight.len());
        for o in &self.weight {
            if o.len() != ipg {
                return Err(bad());
            }
            for i in o {
                if i.len() != k {
                    return Err(bad());
                }
                for row in i {
                    if row.len() != k {
                        return Err(bad());
                    }
                    flat.extend_from_slice(row);
                }
            }
        }
        if let Some(s) = &self.input_scale {
            if s.len() != self.in_channels {
                return Err(Error::Shape(format!("layer {}: input_scale length", self.name)));
            }
        }
        c.weight = flat;
        c.bias = self.bias;
        Ok((c, self.input_scale))
    }
}

impl From<&PredictorNet> for WeightsFile {
    fn from(net: &PredictorNet) -> Self {
        let mut layers: Vec<LayerRepr> = net
            .heads
            .iter()
            .map(|(c, h)| LayerRepr::from_conv(format!("compress_{c}"), &h.conv, h.input_scale.clone()))
            .collect();
        for (i, t) in net.trunk.iter().enumerate() {
            layers.push(LayerRepr::from_conv(format!("grouped_{}", i + 1), t, None));
        }
        layers.push(LayerRepr::from_conv("output".into(), &net.out, None));
        WeightsFile {
            version: WEIGHTS_VERSION,
            layers,
        }
    }
}

impl TryFrom<WeightsFile> for PredictorNet {
    type Error = Error;

    fn try_from(f: WeightsFile) -> Result<Self> {
        if f.version != WEIGHTS_VERSION {
            return Err(Error::Config(format!(
                "unsupported predictor weights version {} (expected {WEIGHTS_VERSION})",
                f.version
            )));
        }
        let mut net = PredictorNet::zeros(&[])?;
        let mut trunk_seen = [false; 3];
        let mut out_seen = false;
        for layer in f.layers {
            match layer.name.as_str() {
                "output" => {
                    let (c, _) = layer.into_conv((TRUNK_CHANNELS[2], 1, 1, 1))?;
                    net.out = c;
                    out_seen = true;
                }
                name if name.starts_with("grouped_") => {
                    let i: usize = name["grouped_".len()..]
                        .parse::<usize>()
                        .ok()
                        .filter(|i| (1..=3).contains(i))
                        .ok_or_else(|| Error::Shape(format!("unknown layer {name}")))?
                        - 1;
                    let cin = if i == 0 { TRUNK_WIDTH } else { TRUNK_CHANNELS[i - 1] };
                    let (c, _) = layer.into_conv((cin, TRUNK_CHANNELS[i], 3, GROUPS))?;
                    net.trunk[i] = c;
                    trunk_seen[i] = true;
                }
                name if name.starts_with("compress_") => {
                    let cin = layer.in_channels;
                    let (conv, input_scale) = layer.into_conv((cin, TRUNK_WIDTH, 1, 1))?;
                    net.heads.insert(cin, Head { conv, input_scale });
                }
                name => return Err(Error::Shape(format!("unknown layer {name}"))),
            }
        }
        if !out_seen || trunk_seen.contains(&false) {
            return Err(Error::Shape("predictor weights are missing layers".into()));
        }
        Ok(net)
    }
}
