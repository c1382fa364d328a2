//! Conditional imitation network: conv encoder(s), dense feature stacks,
//! command concatenation and a three-layer head, with hand-written
//! backpropagation.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::def::NetworkDef;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::DirectionCommand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ConvWeight,
    ConvBias,
    DenseWeight,
    DenseBias,
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub role: Role,
}

impl ParamBlock {
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

#[derive(Debug, Clone, PartialEq)]
struct Conv {
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    w: usize,
    b: usize,
}

impl Conv {
    fn ckk(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn ohw(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    fn out_len(&self) -> usize {
        self.out_c * self.ohw()
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let ohw = self.ohw();
        for c in 0..self.in_c {
            let plane = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut cols[((c * k + ki) * k + kj) * ohw..][..ohw];
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ki) as isize - p;
                        let dst = &mut row[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= self.in_h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - p;
                            *d = if ix < 0 || ix >= self.in_w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let ohw = self.ohw();
        for c in 0..self.in_c {
            let plane = &mut dx[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &cols[((c * k + ki) * k + kj) * ohw..][..ohw];
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ki) as isize - p;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for ox in 0..self.out_w {
                            let ix = (ox * s + kj) as isize - p;
                            if ix >= 0 && ix < self.in_w as isize {
                                dst[ix as usize] += row[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
    relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayout {
    convs: Vec<Conv>,
    dense: Vec<Dense>,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    pub input: Vec<T>,
    /// Post-ReLU output of every conv layer, `[batch, channels, h, w]`.
    pub convs: Vec<Tensor<T>>,
    /// Inverted-dropout multipliers on the flattened conv output.
    pub mask: Option<Vec<T>>,
    /// Flattened conv output after dropout.
    pub flat: Vec<T>,
    /// Post-ReLU dense activations.
    pub dense: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct Cache<T> {
    pub batch: usize,
    pub encoders: Vec<EncoderCache<T>>,
    pub concat: Vec<T>,
    /// Head activations; the last entry is the linear output `[batch, 2]`.
    pub head: Vec<Vec<T>>,
    pub head_mask: Option<Vec<T>>,
    /// First head layer's activation after dropout.
    pub head_dropped: Vec<T>,
}

fn mask_hash<T: Scalar>(h: &mut u64, mask: &[T]) {
    for m in mask {
        *h = (*h ^ u64::from(*m != T::zero())).wrapping_mul(0x0000_0100_0000_01b3);
    }
}

impl<T: Scalar> Cache<T> {
    pub fn output(&self) -> &[T] {
        self.head.last().expect("head has an output layer")
    }

    /// Digest of every dropout mask drawn in the forward pass.
    pub fn mask_digest(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325;
        for e in &self.encoders {
            if let Some(m) = &e.mask {
                mask_hash(&mut h, m);
            }
        }
        if let Some(m) = &self.head_mask {
            mask_hash(&mut h, m);
        }
        h
    }
}

/// One mini-batch of network inputs, planar and already normalized.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub size: usize,
    pub primary: &'a [T],
    pub semantic: Option<&'a [T]>,
    /// One-hot commands, `[size, 4]`.
    pub commands: &'a [T],
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub grad: Vec<T>,
    /// Digest of the dropout masks replayed during backpropagation.
    pub mask_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    def: NetworkDef,
    params: Vec<T>,
    blocks: Vec<ParamBlock>,
    encoders: Vec<EncoderLayout>,
    head: Vec<Dense>,
}

struct Builder {
    blocks: Vec<ParamBlock>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, role: Role) -> usize {
        let offset = self.total;
        self.total += shape.iter().product::<usize>();
        self.blocks.push(ParamBlock { name, shape, offset, role });
        offset
    }

    fn dense(&mut self, name: &str, inp: usize, out: usize, relu: bool) -> Dense {
        let w = self.add(format!("{name}.w"), vec![out, inp], Role::DenseWeight);
        let b = self.add(format!("{name}.b"), vec![out], Role::DenseBias);
        Dense { inp, out, w, b, relu }
    }
}

fn relu_grad<T: Scalar>(d: &mut [T], activation: &[T]) {
    for (g, a) in d.iter_mut().zip(activation) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

fn dropout<T: Scalar>(x: &mut [T], p: f64, rng: &mut dyn RngCore) -> Vec<T> {
    let keep = 1.0 - p;
    let scale = T::from_f64_lossy(1.0 / keep);
    let mask: Vec<T> = (0..x.len()).map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() }).collect();
    for (v, m) in x.iter_mut().zip(&mask) {
        *v *= *m;
    }
    mask
}

impl<T: Scalar> Network<T> {
    /// All-zero parameters.
    pub fn zeros(def: &NetworkDef) -> Result<Self> {
        def.validate()?;
        let mut b = Builder { blocks: Vec::new(), total: 0 };
        let mut encoders = Vec::new();
        for (e, enc) in std::iter::once(&def.encoder1).chain(def.encoder2.as_ref()).enumerate() {
            let (mut c, mut h, mut w) = (enc.in_channels, def.height, def.width);
            let mut convs = Vec::new();
            for (i, cs) in enc.convs.iter().enumerate() {
                let (oh, ow) = (cs.out_extent(h), cs.out_extent(w));
                let wo = b.add(format!("enc{}.conv{i}.w", e + 1), vec![cs.channels, c, cs.kernel, cs.kernel], Role::ConvWeight);
                let bo = b.add(format!("enc{}.conv{i}.b", e + 1), vec![cs.channels], Role::ConvBias);
                convs.push(Conv {
                    in_c: c,
                    out_c: cs.channels,
                    k: cs.kernel,
                    stride: cs.stride,
                    pad: cs.kernel / 2,
                    in_h: h,
                    in_w: w,
                    out_h: oh,
                    out_w: ow,
                    w: wo,
                    b: bo,
                });
                (c, h, w) = (cs.channels, oh, ow);
            }
            let mut inp = c * h * w;
            let mut dense = Vec::new();
            for (j, &width) in enc.dense.iter().enumerate() {
                dense.push(b.dense(&format!("enc{}.dense{j}", e + 1), inp, width, true));
                inp = width;
            }
            encoders.push(EncoderLayout { convs, dense });
        }
        let mut inp = def.concat_width();
        let mut head = Vec::new();
        for (j, &width) in def.head.iter().enumerate() {
            head.push(b.dense(&format!("head.dense{j}"), inp, width, true));
            inp = width;
        }
        head.push(b.dense(&format!("head.dense{}", def.head.len()), inp, def.output_width, false));
        Ok(Self { def: def.clone(), params: vec![T::zero(); b.total], blocks: b.blocks, encoders, head })
    }

    /// He-uniform weights (`U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`), zero biases.
    pub fn init<R: Rng + ?Sized>(def: &NetworkDef, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(def)?;
        for block in &net.blocks {
            if matches!(block.role, Role::ConvWeight | Role::DenseWeight) {
                let fan_in: usize = block.shape[1..].iter().product();
                let limit = (6.0 / fan_in as f64).sqrt();
                for v in &mut net.params[block.range()] {
                    *v = T::from_f64_lossy(rng.random_range(-limit..limit));
                }
            }
        }
        Ok(net)
    }

    pub fn from_params(def: &NetworkDef, params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(def)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!("architecture needs {} parameters, got {}", net.params.len(), params.len())));
        }
        net.params = params;
        Ok(net)
    }

    pub fn def(&self) -> &NetworkDef {
        &self.def
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Number of conv layers in encoder `index` (0 primary, 1 semantic).
    pub fn conv_layers(&self, index: usize) -> Option<usize> {
        self.encoders.get(index).map(|e| e.convs.len())
    }

    /// Converts to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            def: self.def.clone(),
            params: self.params.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            blocks: self.blocks.clone(),
            encoders: self.encoders.clone(),
            head: self.head.clone(),
        }
    }

    fn dense_forward(&self, d: &Dense, x: &[T], n: usize) -> Vec<T> {
        let mut y = vec![T::zero(); n * d.out];
        let w = &self.params[d.w..d.w + d.out * d.inp];
        T::gemm(n, d.inp, d.out, T::one(), x, (d.inp as isize, 1), w, (1, d.inp as isize), T::zero(), &mut y, (d.out as isize, 1));
        let b = &self.params[d.b..d.b + d.out];
        for row in y.chunks_exact_mut(d.out) {
            for (v, bias) in row.iter_mut().zip(b) {
                *v += *bias;
                if d.relu && *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        y
    }

    fn conv_forward(&self, c: &Conv, x: &[T], n: usize, cols: &mut Vec<T>) -> Vec<T> {
        let (ckk, ohw) = (c.ckk(), c.ohw());
        cols.resize(ckk * ohw, T::zero());
        let mut y = vec![T::zero(); n * c.out_len()];
        let w = &self.params[c.w..c.w + c.out_c * ckk];
        let b = &self.params[c.b..c.b + c.out_c];
        for s in 0..n {
            c.im2col(&x[s * c.in_len()..(s + 1) * c.in_len()], cols);
            let out = &mut y[s * c.out_len()..(s + 1) * c.out_len()];
            T::gemm(c.out_c, ckk, ohw, T::one(), w, (ckk as isize, 1), cols, (ohw as isize, 1), T::zero(), out, (ohw as isize, 1));
            for (ch, plane) in out.chunks_exact_mut(ohw).enumerate() {
                for v in plane {
                    *v += b[ch];
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
        y
    }

    fn check_batch(&self, batch: &Batch<'_, T>) -> Result<()> {
        let n = batch.size;
        if n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if batch.primary.len() != n * self.def.primary_len() {
            return Err(Error::Shape(format!("primary input has {} values, expected {}", batch.primary.len(), n * self.def.primary_len())));
        }
        match (batch.semantic, self.def.is_dual()) {
            (Some(s), true) if s.len() == n * self.def.semantic_len() => {}
            (None, false) => {}
            (Some(_), true) => return Err(Error::Shape("semantic input has the wrong size".into())),
            (None, true) => return Err(Error::Shape("dual-encoder network needs a semantic image".into())),
            (Some(_), false) => return Err(Error::Shape("single-encoder network takes no semantic image".into())),
        }
        if batch.commands.len() != n * self.def.command_width {
            return Err(Error::Shape("command block has the wrong size".into()));
        }
        Ok(())
    }

    fn run(&self, batch: &Batch<'_, T>, mut rng: Option<&mut dyn RngCore>) -> Result<Cache<T>> {
        self.check_batch(batch)?;
        let n = batch.size;
        let p = self.def.dropout;
        let mut cols = Vec::new();
        let mut encoders = Vec::new();
        let inputs = std::iter::once(batch.primary).chain(batch.semantic);
        for (layout, input) in self.encoders.iter().zip(inputs) {
            let mut convs = Vec::with_capacity(layout.convs.len());
            let mut x: &[T] = input;
            for c in &layout.convs {
                let y = self.conv_forward(c, x, n, &mut cols);
                convs.push(Tensor::from_vec(&[n, c.out_c, c.out_h, c.out_w], y)?);
                x = convs.last().unwrap().data();
            }
            let mut flat = x.to_vec();
            let mask = match rng.as_deref_mut() {
                Some(r) if p > 0.0 => Some(dropout(&mut flat, p, r)),
                _ => None,
            };
            let mut dense: Vec<Vec<T>> = Vec::with_capacity(layout.dense.len());
            for d in &layout.dense {
                let y = self.dense_forward(d, dense.last().unwrap_or(&flat), n);
                dense.push(y);
            }
            encoders.push(EncoderCache { input: input.to_vec(), convs, mask, flat, dense });
        }
        let width = self.def.concat_width();
        let mut concat = Vec::with_capacity(n * width);
        for s in 0..n {
            for (e, layout) in encoders.iter().zip(&self.encoders) {
                let fw = layout.dense.last().unwrap().out;
                concat.extend_from_slice(&e.dense.last().unwrap()[s * fw..(s + 1) * fw]);
            }
            let cw = self.def.command_width;
            concat.extend_from_slice(&batch.commands[s * cw..(s + 1) * cw]);
        }
        let h0 = self.dense_forward(&self.head[0], &concat, n);
        let mut dropped = h0.clone();
        let head_mask = match rng.as_mut() {
            Some(r) if p > 0.0 => Some(dropout(&mut dropped, p, r)),
            _ => None,
        };
        let mut head = vec![h0];
        let mut x = dropped.clone();
        for d in &self.head[1..] {
            x = self.dense_forward(d, &x, n);
            head.push(x.clone());
        }
        let cache = Cache { batch: n, encoders, concat, head, head_mask, head_dropped: dropped };
        if !cache.output().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidValue("non-finite network output".into()));
        }
        Ok(cache)
    }

    /// Inference pass, dropout off.
    pub fn forward(&self, batch: &Batch<'_, T>) -> Result<Cache<T>> {
        self.run(batch, None)
    }

    /// Training pass: dropout masks drawn from `rng` and kept in the cache.
    pub fn forward_train(&self, batch: &Batch<'_, T>, rng: &mut dyn RngCore) -> Result<Cache<T>> {
        self.run(batch, Some(rng))
    }

    fn dense_backward(&self, d: &Dense, x: &[T], dy: &[T], n: usize, grad: &mut [T], need_dx: bool) -> Vec<T> {
        let gw = &mut grad[d.w..d.w + d.out * d.inp];
        T::gemm(d.out, n, d.inp, T::one(), dy, (1, d.out as isize), x, (d.inp as isize, 1), T::one(), gw, (d.inp as isize, 1));
        let gb = &mut grad[d.b..d.b + d.out];
        for row in dy.chunks_exact(d.out) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += *v;
            }
        }
        if !need_dx {
            return Vec::new();
        }
        let mut dx = vec![T::zero(); n * d.inp];
        let w = &self.params[d.w..d.w + d.out * d.inp];
        T::gemm(n, d.out, d.inp, T::one(), dy, (d.out as isize, 1), w, (d.inp as isize, 1), T::zero(), &mut dx, (d.inp as isize, 1));
        dx
    }

    fn conv_backward(&self, c: &Conv, x: &[T], dy: &[T], n: usize, grad: &mut [T], need_dx: bool) -> Vec<T> {
        let (ckk, ohw) = (c.ckk(), c.ohw());
        let mut cols = vec![T::zero(); ckk * ohw];
        let mut dcols = vec![T::zero(); if need_dx { ckk * ohw } else { 0 }];
        let mut dx = vec![T::zero(); if need_dx { n * c.in_len() } else { 0 }];
        for s in 0..n {
            let g = &dy[s * c.out_len()..(s + 1) * c.out_len()];
            c.im2col(&x[s * c.in_len()..(s + 1) * c.in_len()], &mut cols);
            let gw = &mut grad[c.w..c.w + c.out_c * ckk];
            T::gemm(c.out_c, ohw, ckk, T::one(), g, (ohw as isize, 1), &cols, (1, ohw as isize), T::one(), gw, (ckk as isize, 1));
            let gb = &mut grad[c.b..c.b + c.out_c];
            for (ch, plane) in g.chunks_exact(ohw).enumerate() {
                gb[ch] += plane.iter().copied().sum::<T>();
            }
            if need_dx {
                let w = &self.params[c.w..c.w + c.out_c * ckk];
                T::gemm(ckk, c.out_c, ohw, T::one(), w, (1, ckk as isize), g, (ohw as isize, 1), T::zero(), &mut dcols, (ohw as isize, 1));
                c.col2im(&dcols, &mut dx[s * c.in_len()..(s + 1) * c.in_len()]);
            }
        }
        dx
    }

    /// Gradients of `sum_i d_out[i] * output[i]` with respect to every
    /// parameter, replaying the cached dropout masks.
    pub fn backward(&self, cache: &Cache<T>, d_out: &[T]) -> Result<Gradients<T>> {
        let n = cache.batch;
        if d_out.len() != n * self.def.output_width {
            return Err(Error::Shape("output gradient has the wrong size".into()));
        }
        let mut grad = vec![T::zero(); self.params.len()];
        let mut digest = 0xcbf2_9ce4_8422_2325;

        // head, last layer first
        let last = self.head.len() - 1;
        let mut d = d_out.to_vec();
        for j in (1..=last).rev() {
            let x = if j == 1 { &cache.head_dropped } else { &cache.head[j - 1] };
            d = self.dense_backward(&self.head[j], x, &d, n, &mut grad, true);
            relu_grad(&mut d, &cache.head[j - 1]);
        }
        if let Some(m) = &cache.head_mask {
            // relu of head[0] already applied above: head_dropped = mask * head[0]
            for (g, mv) in d.iter_mut().zip(m) {
                *g *= *mv;
            }
        }
        let d_concat = self.dense_backward(&self.head[0], &cache.concat, &d, n, &mut grad, true);

        // split the concatenation back into encoder features
        let width = self.def.concat_width();
        let mut offset = 0;
        for (layout, ec) in self.encoders.iter().zip(&cache.encoders) {
            let fw = layout.dense.last().unwrap().out;
            let mut d: Vec<T> = (0..n).flat_map(|s| d_concat[s * width + offset..s * width + offset + fw].iter().copied()).collect();
            offset += fw;
            for j in (0..layout.dense.len()).rev() {
                relu_grad(&mut d, &ec.dense[j]);
                let x = if j == 0 { &ec.flat } else { &ec.dense[j - 1] };
                d = self.dense_backward(&layout.dense[j], x, &d, n, &mut grad, true);
            }
            if let Some(m) = &ec.mask {
                for (g, mv) in d.iter_mut().zip(m) {
                    *g *= *mv;
                }
            }
            for i in (0..layout.convs.len()).rev() {
                relu_grad(&mut d, ec.convs[i].data());
                let x = if i == 0 { &ec.input[..] } else { ec.convs[i - 1].data() };
                d = self.conv_backward(&layout.convs[i], x, &d, n, &mut grad, i > 0);
            }
        }
        for ec in &cache.encoders {
            if let Some(m) = &ec.mask {
                mask_hash(&mut digest, m);
            }
        }
        if let Some(m) = &cache.head_mask {
            mask_hash(&mut digest, m);
        }
        Ok(Gradients { grad, mask_digest: digest })
    }

    /// `sum theta^2` over dense-layer weights (biases and convs excluded).
    pub fn dense_weight_sq_sum(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.role == Role::DenseWeight)
            .flat_map(|b| self.params[b.range()].iter())
            .map(|v| v.to_f64_lossy().powi(2))
            .sum()
    }

    /// Adds the gradient of `gamma * sum theta^2` over dense weights.
    pub fn add_regularizer_grad(&self, grad: &mut [T], gamma: f64) {
        if gamma == 0.0 {
            return;
        }
        let two_gamma = T::from_f64_lossy(2.0 * gamma);
        for b in self.blocks.iter().filter(|b| b.role == Role::DenseWeight) {
            for (g, p) in grad[b.range()].iter_mut().zip(&self.params[b.range()]) {
                *g += two_gamma * *p;
            }
        }
    }

    /// Normalized action `[v, omega]` clamped to `[0, 1] x [-1, 1]`.
    pub fn predict(&self, primary: &[f32], semantic: Option<&[f32]>, cmd: DirectionCommand) -> Result<[f64; 2]> {
        let conv = |v: &[f32]| v.iter().map(|x| T::from_f64_lossy(f64::from(*x))).collect::<Vec<T>>();
        let p = conv(primary);
        let s = semantic.map(conv);
        let c = conv(&cmd.one_hot());
        let cache = self.forward(&Batch { size: 1, primary: &p, semantic: s.as_deref(), commands: &c })?;
        let out = cache.output();
        Ok([out[0].to_f64_lossy().clamp(0.0, 1.0), out[1].to_f64_lossy().clamp(-1.0, 1.0)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::def::{ConvDef, NetworkDef};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(def: &NetworkDef, n: usize, seed: u64) -> (Vec<f64>, Option<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = (0..n * def.primary_len()).map(|_| rng.random::<f64>()).collect();
        let s = def.is_dual().then(|| (0..n * def.semantic_len()).map(|_| rng.random::<f64>()).collect());
        let mut c = vec![0.0; n * 4];
        for i in 0..n {
            c[i * 4 + rng.random_range(0..4)] = 1.0;
        }
        (p, s, c)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let def = NetworkDef::miniature_dual();
        let net = Network::<f64>::zeros(&def).unwrap();
        let (p, s, c) = inputs(&def, 3, 1);
        let cache = net.forward(&Batch { size: 3, primary: &p, semantic: s.as_deref(), commands: &c }).unwrap();
        assert!(cache.output().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let def = NetworkDef::miniature_dual();
        let net = Network::<f32>::init(&def, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let p = vec![0.5f32; def.primary_len()];
        let s = vec![0.25f32; def.semantic_len()];
        let a = net.predict(&p, Some(&s), DirectionCommand::TurnLeft).unwrap();
        let b = net.predict(&p, Some(&s), DirectionCommand::TurnLeft).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn concat_width_and_block_names() {
        let def = NetworkDef::miniature_dual();
        let net = Network::<f32>::zeros(&def).unwrap();
        assert_eq!(net.block("head.dense0.w").unwrap().shape, vec![256, 516]);
        assert_eq!(net.block("enc2.dense1.w").unwrap().shape, vec![32, 32]);
        assert_eq!(net.block("head.dense2.w").unwrap().shape, vec![2, 64]);
        assert_eq!(net.conv_layers(1), Some(2));
    }

    #[test]
    fn rejects_wrong_inputs() {
        let def = NetworkDef::miniature_dual();
        let net = Network::<f64>::zeros(&def).unwrap();
        let (p, _, c) = inputs(&def, 1, 1);
        assert!(net.forward(&Batch { size: 1, primary: &p, semantic: None, commands: &c }).is_err());
        assert!(net.forward(&Batch { size: 1, primary: &p[1..], semantic: None, commands: &c }).is_err());
    }

    #[test]
    fn conv_matches_direct_convolution() {
        // one conv layer against a naive loop
        let def = NetworkDef::single(2, 7, 5, vec![ConvDef::new(3, 3, 2)]);
        let net = Network::<f64>::init(&def, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (p, _, c) = inputs(&def, 1, 9);
        let cache = net.forward(&Batch { size: 1, primary: &p, semantic: None, commands: &c }).unwrap();
        let out = cache.encoders[0].convs[0].data();
        let w = &net.params()[net.block("enc1.conv0.w").unwrap().range()];
        let b = &net.params()[net.block("enc1.conv0.b").unwrap().range()];
        let (oh, ow) = (3, 4);
        for oc in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..2 {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let iy = (oy * 2 + ki) as isize - 1;
                                let ix = (ox * 2 + kj) as isize - 1;
                                if (0..5).contains(&iy) && (0..7).contains(&ix) {
                                    acc += w[((oc * 2 + ic) * 3 + ki) * 3 + kj] * p[ic * 35 + iy as usize * 7 + ix as usize];
                                }
                            }
                        }
                    }
                    let got = out[oc * oh * ow + oy * ow + ox];
                    assert!((got - acc.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_replays_forward_masks() {
        let def = NetworkDef::miniature_dual();
        let net = Network::<f64>::init(&def, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let (p, s, c) = inputs(&def, 2, 3);
        let batch = Batch { size: 2, primary: &p, semantic: s.as_deref(), commands: &c };
        let cache = net.forward_train(&batch, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let g = net.backward(&cache, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(g.mask_digest, cache.mask_digest());
        let other = net.forward_train(&batch, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_ne!(other.mask_digest(), cache.mask_digest());
    }
}
