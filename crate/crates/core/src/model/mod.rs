//! Residual channel-attention super-resolution network.
//!
//! ```text
//! input C x 16 x 16
//!   head conv 3x3 (C -> F)                                   = x0
//!   B x [ conv 3x3, relu, conv 3x3, channel gate, + skip ]
//!   + x0                                                      long skip
//!   2 x [ conv 3x3 (F -> 4F), depth-to-space x2 ]            16 -> 32 -> 64
//!   tail conv 3x3 (F -> 1)
//! ```
//!
//! The channel gate squeezes each feature map to its spatial mean and maps the
//! `F` means through `F -> F/r -> F` (relu, then sigmoid) to per-channel scales.
//! All parameters live in one flat vector described by [`ParamLayout`].

mod checkpoint;
mod layers;
mod optim;
mod real;
mod train;

pub use checkpoint::Checkpoint;
pub use layers::{depth_to_space, space_to_depth};
pub use optim::{cosine_lr, Adam};
pub use real::Real;
pub use train::{mean_loss, train, EarlyStopper, HistoryRow, StopReason, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use layers::{conv3x3_backward, conv3x3_forward, relu, sigmoid};

pub const LR_SIDE: usize = 16;
pub const HR_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrModelConfig {
    pub in_channels: usize,
    pub features: usize,
    pub blocks: usize,
    pub attention_reduction: usize,
    pub scale: usize,
}

impl SrModelConfig {
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            features: 32,
            blocks: 5,
            attention_reduction: 8,
            scale: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::InvalidArgument("in_channels must be >= 1".into()));
        }
        if self.features == 0 || self.attention_reduction == 0 {
            return Err(Error::InvalidArgument("features and reduction must be >= 1".into()));
        }
        if self.features % self.attention_reduction != 0 {
            return Err(Error::InvalidArgument(format!(
                "features {} not divisible by reduction {}",
                self.features, self.attention_reduction
            )));
        }
        if self.scale != 4 {
            return Err(Error::InvalidArgument("only scale 4 (two x2 stages) is supported".into()));
        }
        Ok(())
    }

    pub fn squeezed(&self) -> usize {
        self.features / self.attention_reduction
    }
}

/// Where one named tensor sits in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvSlot {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockSlots {
    conv1: ConvSlot,
    conv2: ConvSlot,
    down_w: usize,
    down_b: usize,
    up_w: usize,
    up_b: usize,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    slots: Vec<TensorSlot>,
    total: usize,
    head: ConvSlot,
    blocks: Vec<BlockSlots>,
    upsample: [ConvSlot; 2],
    tail: ConvSlot,
}

impl ParamLayout {
    pub fn new(cfg: &SrModelConfig) -> Self {
        let mut slots = Vec::new();
        let mut total = 0usize;
        let mut push = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            slots.push(TensorSlot { name, shape, offset });
            offset
        };
        let mut conv = |name: &str, cin: usize, cout: usize| ConvSlot {
            w: push(format!("{name}.weight"), vec![cout, cin, 3, 3]),
            b: push(format!("{name}.bias"), vec![cout]),
            cin,
            cout,
        };
        let f = cfg.features;
        let sq = cfg.squeezed();
        let head = conv("head", cfg.in_channels, f);
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            let conv1 = conv(&format!("block{i}.conv1"), f, f);
            let conv2 = conv(&format!("block{i}.conv2"), f, f);
            blocks.push(BlockSlots {
                conv1,
                conv2,
                down_w: 0,
                down_b: 0,
                up_w: 0,
                up_b: 0,
            });
        }
        let upsample = [conv("upsample0", f, 4 * f), conv("upsample1", f, 4 * f)];
        let tail = conv("tail", f, 1);
        drop(conv);
        for (i, b) in blocks.iter_mut().enumerate() {
            b.down_w = push(format!("block{i}.gate_down.weight"), vec![sq, f]);
            b.down_b = push(format!("block{i}.gate_down.bias"), vec![sq]);
            b.up_w = push(format!("block{i}.gate_up.weight"), vec![f, sq]);
            b.up_b = push(format!("block{i}.gate_up.bias"), vec![f]);
        }
        Self {
            slots,
            total,
            head,
            blocks,
            upsample,
            tail,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn slots(&self) -> &[TensorSlot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&TensorSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

/// Closed-form parameter count.
pub fn parameter_count(cfg: &SrModelConfig) -> usize {
    let (c, f, sq) = (cfg.in_channels, cfg.features, cfg.squeezed());
    let conv = |cin: usize, cout: usize| cout * cin * 9 + cout;
    conv(c, f)
        + cfg.blocks * (2 * conv(f, f) + sq * f + sq + f * sq + f)
        + 2 * conv(f, 4 * f)
        + conv(f, 1)
}

/// Batch of equally-shaped images, `[n][c][h][w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::ZERO; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(format!(
                "{} values for a {n}x{c}x{h}x{w} tensor",
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }
}

/// Intermediate values of one sample's forward pass, kept for the backward pass.
struct Tape<T> {
    input: Vec<T>,
    blocks: Vec<BlockTape<T>>,
    body: Vec<T>,
    up: [Vec<T>; 2],
    output: Vec<T>,
}

struct BlockTape<T> {
    input: Vec<T>,
    h1: Vec<T>,
    a1: Vec<T>,
    h2: Vec<T>,
    pooled: Vec<T>,
    z_pre: Vec<T>,
    z: Vec<T>,
    gate: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrModel<T> {
    config: SrModelConfig,
    params: Vec<T>,
    layout_total: usize,
}

impl<T: Real> SrModel<T> {
    /// Uniform(+-sqrt(6 / fan_in)) weights and zero biases; the gate output
    /// layer and the tail convolution are scaled by 0.1 so the untrained
    /// network starts near a zero output with half-open gates.
    pub fn init(config: SrModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![T::ZERO; layout.total()];
        let mut rng = SplitMix64::derive(seed, 0x494e4954);
        for slot in layout.slots() {
            if slot.shape.len() == 1 {
                continue;
            }
            let fan_in: usize = slot.shape[1..].iter().product();
            let mut bound = (6.0 / fan_in as f64).sqrt();
            if slot.name.ends_with("gate_up.weight") || slot.name == "tail.weight" {
                bound *= 0.1;
            }
            for p in &mut params[slot.range()] {
                *p = T::from_f64((2.0 * rng.next_f64() - 1.0) * bound);
            }
        }
        Ok(Self {
            config,
            layout_total: layout.total(),
            params,
        })
    }

    pub fn from_params(config: SrModelConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let total = parameter_count(&config);
        if params.len() != total {
            return Err(Error::Shape(format!("{} parameters, config needs {total}", params.len())));
        }
        Ok(Self {
            config,
            params,
            layout_total: total,
        })
    }

    pub fn config(&self) -> &SrModelConfig {
        &self.config
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.config)
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.layout_total
    }

    /// Sets the tail convolution to zero, making the output identically zero.
    pub fn zero_tail(&mut self) {
        let layout = self.layout();
        for name in ["tail.weight", "tail.bias"] {
            let r = layout.slot(name).expect("tail slot").range();
            self.params[r].iter_mut().for_each(|p| *p = T::ZERO);
        }
    }

    /// Converts parameters to another precision.
    pub fn cast<U: Real>(&self) -> SrModel<U> {
        SrModel {
            config: self.config,
            params: self.params.iter().map(|p| U::from_f64(p.to_f64())).collect(),
            layout_total: self.layout_total,
        }
    }

    fn check_input(&self, input: &Tensor4<T>) -> Result<()> {
        if input.c != self.config.in_channels || input.h != LR_SIDE || input.w != LR_SIDE {
            return Err(Error::Shape(format!(
                "expected n x {} x {LR_SIDE} x {LR_SIDE} input, got {}x{}x{}x{}",
                self.config.in_channels, input.n, input.c, input.h, input.w
            )));
        }
        if input.n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if let Some(i) = input.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input element {i}")));
        }
        Ok(())
    }

    fn forward_sample(&self, layout: &ParamLayout, x: &[T], col: &mut Vec<T>) -> Tape<T> {
        let p = &self.params;
        let f = self.config.features;
        let sq = self.config.squeezed();
        let s = LR_SIDE;
        let hw = s * s;
        let conv = |slot: &ConvSlot, x: &[T], h: usize, w: usize, col: &mut Vec<T>| {
            let mut y = Vec::new();
            let wlen = slot.cout * slot.cin * 9;
            conv3x3_forward(
                x,
                slot.cin,
                h,
                w,
                &p[slot.w..slot.w + wlen],
                &p[slot.b..slot.b + slot.cout],
                slot.cout,
                col,
                &mut y,
            );
            y
        };

        let x0 = conv(&layout.head, x, s, s, col);
        let mut cur = x0.clone();
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        for b in &layout.blocks {
            let h1 = conv(&b.conv1, &cur, s, s, col);
            let a1: Vec<T> = h1.iter().map(|&v| relu(v)).collect();
            let h2 = conv(&b.conv2, &a1, s, s, col);
            let inv_hw = T::from_f64(1.0 / hw as f64);
            let pooled: Vec<T> = (0..f)
                .map(|c| {
                    let mut acc = T::ZERO;
                    for &v in &h2[c * hw..(c + 1) * hw] {
                        acc += v;
                    }
                    acc * inv_hw
                })
                .collect();
            let z_pre: Vec<T> = (0..sq)
                .map(|j| {
                    let mut acc = p[b.down_b + j];
                    for c in 0..f {
                        acc += p[b.down_w + j * f + c] * pooled[c];
                    }
                    acc
                })
                .collect();
            let z: Vec<T> = z_pre.iter().map(|&v| relu(v)).collect();
            let gate: Vec<T> = (0..f)
                .map(|c| {
                    let mut acc = p[b.up_b + c];
                    for j in 0..sq {
                        acc += p[b.up_w + c * sq + j] * z[j];
                    }
                    sigmoid(acc)
                })
                .collect();
            let mut out = cur.clone();
            for c in 0..f {
                let g = gate[c];
                for (o, &v) in out[c * hw..(c + 1) * hw].iter_mut().zip(&h2[c * hw..(c + 1) * hw]) {
                    *o += v * g;
                }
            }
            blocks.push(BlockTape {
                input: std::mem::replace(&mut cur, out),
                h1,
                a1,
                h2,
                pooled,
                z_pre,
                z,
                gate,
            });
        }
        let body: Vec<T> = cur.iter().zip(&x0).map(|(&a, &b)| a + b).collect();
        let u0 = conv(&layout.upsample[0], &body, s, s, col);
        let up0 = layers::depth_to_space(&u0, f, s, s);
        let u1 = conv(&layout.upsample[1], &up0, 2 * s, 2 * s, col);
        let up1 = layers::depth_to_space(&u1, f, 2 * s, 2 * s);
        let output = conv(&layout.tail, &up1, 4 * s, 4 * s, col);
        Tape {
            input: x.to_vec(),
            blocks,
            body,
            up: [up0, up1],
            output,
        }
    }

    /// Unclamped network output, `n x 1 x 64 x 64`.
    pub fn forward(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(input)?;
        let layout = self.layout();
        let mut col = Vec::new();
        let mut data = Vec::with_capacity(input.n * HR_SIDE * HR_SIDE);
        for i in 0..input.n {
            data.extend(self.forward_sample(&layout, input.sample(i), &mut col).output);
        }
        Tensor4::from_vec(input.n, 1, HR_SIDE, HR_SIDE, data)
    }

    /// Inference output: [`Self::forward`] clamped to [0, 1].
    pub fn predict(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut out = self.forward(input)?;
        for v in &mut out.data {
            *v = if *v < T::ZERO {
                T::ZERO
            } else if *v > T::ONE {
                T::ONE
            } else {
                *v
            };
        }
        Ok(out)
    }

    /// Mean absolute error of the unclamped output and its gradient.
    pub fn loss_and_gradients(&self, input: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Vec<T>)> {
        self.check_input(input)?;
        if target.n != input.n || target.c != 1 || target.h != HR_SIDE || target.w != HR_SIDE {
            return Err(Error::Shape(format!(
                "target must be {}x1x{HR_SIDE}x{HR_SIDE}",
                input.n
            )));
        }
        let layout = self.layout();
        let mut grads = vec![T::ZERO; self.params.len()];
        let mut col = Vec::new();
        let count = (input.n * HR_SIDE * HR_SIDE) as f64;
        let scale = T::from_f64(1.0 / count);
        let mut total = 0.0;
        for i in 0..input.n {
            let tape = self.forward_sample(&layout, input.sample(i), &mut col);
            let t = target.sample(i);
            let mut sample_loss = 0.0;
            let dout: Vec<T> = tape
                .output
                .iter()
                .zip(t)
                .map(|(&y, &tv)| {
                    let d = y - tv;
                    sample_loss += d.to_f64().abs();
                    if d > T::ZERO {
                        scale
                    } else if d < T::ZERO {
                        -scale
                    } else {
                        T::ZERO
                    }
                })
                .collect();
            if !sample_loss.is_finite() {
                return Err(Error::NonFinite(format!("loss of sample {i} in batch")));
            }
            total += sample_loss;
            self.backward_sample(&layout, &tape, &dout, &mut grads, &mut col);
        }
        Ok((total / count, grads))
    }

    fn backward_sample(
        &self,
        layout: &ParamLayout,
        tape: &Tape<T>,
        dout: &[T],
        grads: &mut [T],
        col: &mut Vec<T>,
    ) {
        let p = &self.params;
        let f = self.config.features;
        let sq = self.config.squeezed();
        let s = LR_SIDE;
        let hw = s * s;
        let mut conv_back =
            |slot: &ConvSlot, x: &[T], h: usize, w: usize, dy: &[T], grads: &mut [T], need_dx: bool| {
                let wlen = slot.cout * slot.cin * 9;
                let (gw, rest) = grads[slot.w..].split_at_mut(wlen);
                let gb_off = slot.b - slot.w - wlen;
                let gb = &mut rest[gb_off..gb_off + slot.cout];
                conv3x3_backward(x, slot.cin, h, w, &p[slot.w..slot.w + wlen], slot.cout, dy, gw, gb, need_dx, col)
            };

        let d_up1 = conv_back(&layout.tail, &tape.up[1], 4 * s, 4 * s, dout, grads, true).unwrap();
        let d_u1 = layers::space_to_depth(&d_up1, f, 4 * s, 4 * s);
        let d_up0 = conv_back(&layout.upsample[1], &tape.up[0], 2 * s, 2 * s, &d_u1, grads, true).unwrap();
        let d_u0 = layers::space_to_depth(&d_up0, f, 2 * s, 2 * s);
        let d_body = conv_back(&layout.upsample[0], &tape.body, s, s, &d_u0, grads, true).unwrap();

        // body = blocks(x0) + x0
        let mut d_cur = d_body.clone();
        for (b, bt) in layout.blocks.iter().zip(&tape.blocks).rev() {
            // out = input + h2 * gate
            let mut d_h2 = vec![T::ZERO; f * hw];
            let mut d_gate = vec![T::ZERO; f];
            for c in 0..f {
                let g = bt.gate[c];
                let mut acc = T::ZERO;
                for k in c * hw..(c + 1) * hw {
                    d_h2[k] = d_cur[k] * g;
                    acc += d_cur[k] * bt.h2[k];
                }
                d_gate[c] = acc;
            }
            // gate = sigmoid(up_w z + up_b)
            let d_u: Vec<T> = (0..f).map(|c| d_gate[c] * bt.gate[c] * (T::ONE - bt.gate[c])).collect();
            let mut d_z = vec![T::ZERO; sq];
            for c in 0..f {
                grads[b.up_b + c] += d_u[c];
                for j in 0..sq {
                    grads[b.up_w + c * sq + j] += d_u[c] * bt.z[j];
                    d_z[j] += p[b.up_w + c * sq + j] * d_u[c];
                }
            }
            // z = relu(down_w pooled + down_b)
            let mut d_pooled = vec![T::ZERO; f];
            for j in 0..sq {
                let dz = if bt.z_pre[j] > T::ZERO { d_z[j] } else { T::ZERO };
                grads[b.down_b + j] += dz;
                for c in 0..f {
                    grads[b.down_w + j * f + c] += dz * bt.pooled[c];
                    d_pooled[c] += p[b.down_w + j * f + c] * dz;
                }
            }
            let inv_hw = T::from_f64(1.0 / hw as f64);
            for c in 0..f {
                let add = d_pooled[c] * inv_hw;
                for v in &mut d_h2[c * hw..(c + 1) * hw] {
                    *v += add;
                }
            }
            let mut d_a1 = conv_back(&b.conv2, &bt.a1, s, s, &d_h2, grads, true).unwrap();
            for (d, &h) in d_a1.iter_mut().zip(&bt.h1) {
                if h <= T::ZERO {
                    *d = T::ZERO;
                }
            }
            let d_in = conv_back(&b.conv1, &bt.input, s, s, &d_a1, grads, true).unwrap();
            for (d, v) in d_cur.iter_mut().zip(d_in) {
                *d += v;
            }
        }
        let d_x0: Vec<T> = d_cur.iter().zip(&d_body).map(|(&a, &b)| a + b).collect();
        conv_back(&layout.head, &tape.input, s, s, &d_x0, grads, false);
    }
}
