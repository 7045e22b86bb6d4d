//! Policy/value network with hand-rolled forward and backward passes.
//!
//! Two 3x3 convolution layers feed one fully-connected layer; a linear
//! head emits three logits per placement site and a second linear head
//! emits the scalar state value. Both heads share the trunk. Parameters
//! live in one flat vector so optimizers and finite-difference checks
//! can treat the model as a plain function of that vector.

use rand::Rng;

use crate::error::{Error, Result};
use crate::floorplan::Floorplan;
use crate::rl::state::StateTensor;

/// Network shape. Kernels are fixed at 3x3 with unit zero padding, so
/// spatial dimensions are preserved through the trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub in_channels: usize,
    pub h: usize,
    pub w: usize,
    /// Placement sites; the policy head emits 3 logits per site.
    pub n_sites: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub fc_units: usize,
}

impl NetConfig {
    /// Impedance-phase shape: 4 input channels, one site per available
    /// on-chip and interposer cell.
    pub fn for_freq(fp: &Floorplan) -> Self {
        NetConfig {
            in_channels: 4,
            h: fp.intp_rows,
            w: fp.intp_cols,
            n_sites: fp.freq_sites().len(),
            conv1_channels: 16,
            conv2_channels: 32,
            fc_units: 256,
        }
    }

    /// Voltage-phase shape: adds the VVI channel, on-chip sites only.
    pub fn for_time(fp: &Floorplan) -> Self {
        NetConfig {
            in_channels: 5,
            n_sites: fp.time_sites().len(),
            ..Self::for_freq(fp)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.in_channels,
            self.h,
            self.w,
            self.n_sites,
            self.conv1_channels,
            self.conv2_channels,
            self.fc_units,
        ];
        if fields.iter().any(|&v| v == 0) {
            return Err(Error::InvalidParameter(
                "network dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn n_logits(&self) -> usize {
        3 * self.n_sites
    }
}

/// Named view into the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn segments(cfg: &NetConfig) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut off = 0;
    let mut push = |name: &'static str, shape: Vec<usize>| {
        let seg = Segment {
            name,
            offset: off,
            shape,
        };
        off += seg.len();
        out.push(seg);
    };
    push("conv1_w", vec![cfg.conv1_channels, cfg.in_channels, 3, 3]);
    push("conv1_b", vec![cfg.conv1_channels]);
    push("conv2_w", vec![cfg.conv2_channels, cfg.conv1_channels, 3, 3]);
    push("conv2_b", vec![cfg.conv2_channels]);
    push("fc_w", vec![cfg.fc_units, cfg.conv2_channels * cfg.plane()]);
    push("fc_b", vec![cfg.fc_units]);
    push("pol_w", vec![cfg.n_logits(), cfg.fc_units]);
    push("pol_b", vec![cfg.n_logits()]);
    push("val_w", vec![cfg.fc_units]);
    push("val_b", vec![1]);
    out
}

/// Shared-trunk policy/value model over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    pub cfg: NetConfig,
    pub params: Vec<f64>,
    segments: Vec<Segment>,
}

/// Cached activations from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: StateTensor,
    a1: Vec<f64>,
    a2: Vec<f64>,
    af: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

/// 3x3 zero-padded convolution; `out[o]` accumulates over `cin` planes.
fn conv_forward(
    input: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    biases: &[f64],
    out: &mut [f64],
) {
    for o in 0..cout {
        let ob = o * h * w;
        out[ob..ob + h * w].fill(biases[o]);
        for i in 0..cin {
            let ib = i * h * w;
            let wb = (o * cin + i) * 9;
            for dr in 0..3 {
                for dc in 0..3 {
                    let k = weights[wb + dr * 3 + dc];
                    if k == 0.0 {
                        continue;
                    }
                    // input row = out row + dr - 1, clipped by padding
                    let r_lo = 1usize.saturating_sub(dr);
                    let r_hi = h.min(h + 1 - dr);
                    let c_lo = 1usize.saturating_sub(dc);
                    let c_hi = w.min(w + 1 - dc);
                    for r in r_lo..r_hi {
                        let ir = r + dr - 1;
                        for c in c_lo..c_hi {
                            out[ob + r * w + c] += k * input[ib + ir * w + c + dc - 1];
                        }
                    }
                }
            }
        }
    }
}

/// Backward of `conv_forward`: scatters `dout` into weight/bias grads
/// and the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    dout: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    dweights: &mut [f64],
    dbiases: &mut [f64],
    dinput: &mut [f64],
) {
    for o in 0..cout {
        let ob = o * h * w;
        dbiases[o] += dout[ob..ob + h * w].iter().sum::<f64>();
        for i in 0..cin {
            let ib = i * h * w;
            let wb = (o * cin + i) * 9;
            for dr in 0..3 {
                for dc in 0..3 {
                    let r_lo = 1usize.saturating_sub(dr);
                    let r_hi = h.min(h + 1 - dr);
                    let c_lo = 1usize.saturating_sub(dc);
                    let c_hi = w.min(w + 1 - dc);
                    let mut wg = 0.0;
                    let k = weights[wb + dr * 3 + dc];
                    for r in r_lo..r_hi {
                        let ir = r + dr - 1;
                        for c in c_lo..c_hi {
                            let g = dout[ob + r * w + c];
                            wg += g * input[ib + ir * w + c + dc - 1];
                            dinput[ib + ir * w + c + dc - 1] += g * k;
                        }
                    }
                    dweights[wb + dr * 3 + dc] += wg;
                }
            }
        }
    }
}

impl PolicyValueNet {
    /// Builds with small fan-in-scaled uniform weights and zero biases.
    pub fn new<R: Rng>(cfg: NetConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let segments = segments(&cfg);
        let total: usize = segments.iter().map(|s| s.len()).sum();
        let mut params = vec![0.0; total];
        for seg in &segments {
            if seg.name.ends_with("_b") {
                continue; // biases start at zero
            }
            // fan-in = product of all shape dims but the first
            let fan_in: usize = seg.shape[1..].iter().product::<usize>().max(1);
            let s = (1.0 / fan_in as f64).sqrt();
            for v in &mut params[seg.offset..seg.offset + seg.len()] {
                *v = rng.gen_range(-s..s);
            }
        }
        Ok(PolicyValueNet {
            cfg,
            params,
            segments,
        })
    }

    pub fn zeroed(cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        let segments = segments(&cfg);
        let total: usize = segments.iter().map(|s| s.len()).sum();
        Ok(PolicyValueNet {
            cfg,
            params: vec![0.0; total],
            segments,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> &Segment {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .expect("known segment name")
    }

    fn seg_slice<'a>(&self, name: &str, params: &'a [f64]) -> &'a [f64] {
        let s = self.segment(name);
        &params[s.offset..s.offset + s.len()]
    }

    pub fn forward(&self, x: &StateTensor) -> Result<ForwardCache> {
        let cfg = &self.cfg;
        if x.channels != cfg.in_channels || x.h != cfg.h || x.w != cfg.w {
            return Err(Error::InvalidInput(format!(
                "state shape {}x{}x{} does not match network {}x{}x{}",
                x.channels, x.h, x.w, cfg.in_channels, cfg.h, cfg.w
            )));
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault("non-finite state entry".into()));
        }
        let p = &self.params;
        let plane = cfg.plane();

        let mut a1 = vec![0.0; cfg.conv1_channels * plane];
        conv_forward(
            &x.data,
            cfg.in_channels,
            cfg.conv1_channels,
            cfg.h,
            cfg.w,
            self.seg_slice("conv1_w", p),
            self.seg_slice("conv1_b", p),
            &mut a1,
        );
        for v in &mut a1 {
            *v = v.tanh();
        }

        let mut a2 = vec![0.0; cfg.conv2_channels * plane];
        conv_forward(
            &a1,
            cfg.conv1_channels,
            cfg.conv2_channels,
            cfg.h,
            cfg.w,
            self.seg_slice("conv2_w", p),
            self.seg_slice("conv2_b", p),
            &mut a2,
        );
        for v in &mut a2 {
            *v = v.tanh();
        }

        let fc_w = self.seg_slice("fc_w", p);
        let fc_b = self.seg_slice("fc_b", p);
        let mut af = vec![0.0; cfg.fc_units];
        for (u, out) in af.iter_mut().enumerate() {
            let row = &fc_w[u * a2.len()..(u + 1) * a2.len()];
            *out = (fc_b[u] + dot(row, &a2)).tanh();
        }

        let pol_w = self.seg_slice("pol_w", p);
        let pol_b = self.seg_slice("pol_b", p);
        let mut logits = vec![0.0; cfg.n_logits()];
        for (k, out) in logits.iter_mut().enumerate() {
            let row = &pol_w[k * cfg.fc_units..(k + 1) * cfg.fc_units];
            *out = pol_b[k] + dot(row, &af);
        }
        let value = self.seg_slice("val_b", p)[0] + dot(self.seg_slice("val_w", p), &af);

        if !value.is_finite() || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault("non-finite network output".into()));
        }
        Ok(ForwardCache {
            input: x.clone(),
            a1,
            a2,
            af,
            logits,
            value,
        })
    }

    pub fn forward_batch(&self, xs: &[StateTensor]) -> Result<Vec<ForwardCache>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Accumulates d(scalar loss)/d(params) into `grad` given the loss
    /// gradients at the two heads. `grad` must have `param_count` len.
    pub fn backward(&self, fwd: &ForwardCache, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.param_count());
        assert_eq!(dlogits.len(), self.cfg.n_logits());
        let cfg = &self.cfg;
        let p = &self.params;
        let plane = cfg.plane();
        let (fc_units, flat2) = (cfg.fc_units, cfg.conv2_channels * plane);

        // heads
        let mut daf = vec![0.0; fc_units];
        let val_w = self.segment("val_w");
        for u in 0..fc_units {
            grad[val_w.offset + u] += dvalue * fwd.af[u];
            daf[u] += dvalue * p[val_w.offset + u];
        }
        grad[self.segment("val_b").offset] += dvalue;
        let pol_w = self.segment("pol_w");
        let pol_b = self.segment("pol_b");
        for (k, &dk) in dlogits.iter().enumerate() {
            grad[pol_b.offset + k] += dk;
            if dk == 0.0 {
                continue;
            }
            let row = pol_w.offset + k * fc_units;
            for u in 0..fc_units {
                grad[row + u] += dk * fwd.af[u];
                daf[u] += dk * p[row + u];
            }
        }

        // fully-connected trunk layer
        let fc_w = self.segment("fc_w");
        let fc_b = self.segment("fc_b");
        let mut da2 = vec![0.0; flat2];
        for u in 0..fc_units {
            let dz = daf[u] * (1.0 - fwd.af[u] * fwd.af[u]);
            if dz == 0.0 {
                continue;
            }
            grad[fc_b.offset + u] += dz;
            let row = fc_w.offset + u * flat2;
            for v in 0..flat2 {
                grad[row + v] += dz * fwd.a2[v];
                da2[v] += dz * p[row + v];
            }
        }

        // conv2
        let mut dz2 = da2;
        for (v, a) in dz2.iter_mut().zip(&fwd.a2) {
            *v *= 1.0 - a * a;
        }
        let c2w = self.segment("conv2_w");
        let c2b = self.segment("conv2_b");
        let mut da1 = vec![0.0; cfg.conv1_channels * plane];
        {
            let (gw, rest) = grad.split_at_mut(c2b.offset);
            conv_backward(
                &fwd.a1,
                &dz2,
                cfg.conv1_channels,
                cfg.conv2_channels,
                cfg.h,
                cfg.w,
                &p[c2w.offset..c2w.offset + c2w.len()],
                &mut gw[c2w.offset..],
                &mut rest[..c2b.len()],
                &mut da1,
            );
        }

        // conv1
        let mut dz1 = da1;
        for (v, a) in dz1.iter_mut().zip(&fwd.a1) {
            *v *= 1.0 - a * a;
        }
        let c1w = self.segment("conv1_w");
        let c1b = self.segment("conv1_b");
        let mut dx = vec![0.0; cfg.in_channels * plane];
        {
            let (gw, rest) = grad.split_at_mut(c1b.offset);
            conv_backward(
                &fwd.input.data,
                &dz1,
                cfg.in_channels,
                cfg.conv1_channels,
                cfg.h,
                cfg.w,
                &p[c1w.offset..c1w.offset + c1w.len()],
                &mut gw[c1w.offset..],
                &mut rest[..c1b.len()],
                &mut dx,
            );
        }
    }

    /// Text checkpoint: one header and one value line per tensor.
    pub fn to_checkpoint(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("pdn-net v1\n");
        for seg in &self.segments {
            let _ = write!(s, "tensor {}", seg.name);
            for d in &seg.shape {
                let _ = write!(s, " {d}");
            }
            s.push('\n');
            let vals = &self.params[seg.offset..seg.offset + seg.len()];
            let mut first = true;
            for v in vals {
                if !first {
                    s.push(' ');
                }
                let _ = write!(s, "{v:?}");
                first = false;
            }
            s.push('\n');
        }
        s
    }

    pub fn from_checkpoint(text: &str, cfg: NetConfig) -> Result<Self> {
        let mut net = Self::zeroed(cfg)?;
        let mut lines = text.lines();
        if lines.next() != Some("pdn-net v1") {
            return Err(Error::InvalidInput("unrecognized checkpoint header".into()));
        }
        let bad = |m: String| Error::InvalidInput(format!("checkpoint: {m}"));
        for seg in net.segments.clone() {
            let header = lines
                .next()
                .ok_or_else(|| bad(format!("missing tensor {}", seg.name)))?;
            let mut parts = header.split_whitespace();
            if parts.next() != Some("tensor") || parts.next() != Some(seg.name) {
                return Err(bad(format!("expected tensor {}, got {header:?}", seg.name)));
            }
            let shape: Vec<usize> = parts.map(|t| t.parse().unwrap_or(0)).collect();
            if shape != seg.shape {
                return Err(bad(format!(
                    "tensor {} shape {shape:?} does not match {:?}",
                    seg.name, seg.shape
                )));
            }
            let vals = lines
                .next()
                .ok_or_else(|| bad(format!("missing values for {}", seg.name)))?;
            let dst = &mut net.params[seg.offset..seg.offset + seg.len()];
            let mut n = 0;
            for (slot, tok) in dst.iter_mut().zip(vals.split_whitespace()) {
                *slot = tok
                    .parse()
                    .map_err(|_| bad(format!("bad value {tok:?} in {}", seg.name)))?;
                n += 1;
            }
            if n != seg.len() || vals.split_whitespace().count() != seg.len() {
                return Err(bad(format!("tensor {} value count mismatch", seg.name)));
            }
        }
        Ok(net)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
