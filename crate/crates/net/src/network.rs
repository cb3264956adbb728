//! Forward and reverse-mode passes for an [`Architecture`].
//!
//! Convolutions are lowered to im2col + GEMM over the whole batch. Inside
//! the conv stacks activations are stored channel-major across the batch
//! (`[C][B][H][W]`) so one GEMM per layer covers every sample; network
//! inputs are sample-major (`[B][C][H][W]`).

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{Activation, Architecture, ConvSpec};
use crate::error::{NetError, Result};
use crate::scalar::Real;

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

/// A batch of network inputs, sample-major.
#[derive(Debug, Clone, Copy)]
pub struct Input<'a, T> {
    pub batch: usize,
    /// `batch × global_channels × M × M`
    pub global: &'a [T],
    /// `batch × 1 × N × N`; empty for architectures without a local branch.
    pub local: &'a [T],
}

/// Per-parameter gradients, aligned with [`Network::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            tensors: net.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for v in self.tensors.iter_mut().flat_map(|t| t.iter_mut()) {
            *v = *v * factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    col: Vec<T>,
    out: Vec<T>,
    in_size: usize,
    out_size: usize,
}

/// Activations retained by [`Network::forward`] for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    net_id: u64,
    generation: u64,
    batch: usize,
    global: Vec<ConvCache<T>>,
    local: Option<ConvCache<T>>,
    dense_in: Vec<Vec<T>>,
    dense_out: Vec<Vec<T>>,
}

/// Named activation shape, channels-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationShape {
    pub name: String,
    pub dims: Vec<usize>,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network outputs, `batch × outputs`.
    pub fn output(&self) -> &[T] {
        self.dense_out.last().map_or(&[], Vec::as_slice)
    }

    /// Per-sample shapes of every intermediate activation, in pipeline order.
    pub fn activation_shapes(&self, arch: &Architecture) -> Vec<ActivationShape> {
        let mut shapes = Vec::new();
        for (spec, cache) in arch.global.iter().zip(&self.global) {
            shapes.push(ActivationShape {
                name: format!("global.{}", spec.name),
                dims: vec![spec.out_channels, cache.out_size, cache.out_size],
            });
        }
        if let (Some(spec), Some(cache)) = (&arch.local, &self.local) {
            shapes.push(ActivationShape {
                name: format!("local.{}", spec.name),
                dims: vec![spec.out_channels, cache.out_size, cache.out_size],
            });
        }
        if let Some(first) = self.dense_in.first() {
            shapes.push(ActivationShape {
                name: "concat".into(),
                dims: vec![first.len() / self.batch],
            });
        }
        for (spec, out) in arch.head.iter().zip(&self.dense_out) {
            shapes.push(ActivationShape {
                name: format!("head.{}", spec.name),
                dims: vec![out.len() / self.batch],
            });
        }
        shapes
    }

    /// Which ReLU units are active, over every ReLU layer in pipeline order.
    /// Finite-difference checks use it to spot probes that straddle a kink.
    pub fn relu_mask(&self, arch: &Architecture) -> Vec<bool> {
        let mut layers: Vec<&[T]> = Vec::new();
        for (spec, cache) in arch.global.iter().zip(&self.global) {
            if spec.activation == Activation::Relu {
                layers.push(&cache.out);
            }
        }
        if let (Some(spec), Some(cache)) = (&arch.local, &self.local) {
            if spec.activation == Activation::Relu {
                layers.push(&cache.out);
            }
        }
        for (spec, out) in arch.head.iter().zip(&self.dense_out) {
            if spec.activation == Activation::Relu {
                layers.push(out);
            }
        }
        layers.into_iter().flatten().map(|&v| v > T::zero()).collect()
    }
}

/// Network parameters plus the bookkeeping that ties forward caches to the
/// parameter values they were computed from.
#[derive(Debug)]
pub struct Network<T> {
    arch: Architecture,
    tensors: Vec<Vec<T>>,
    id: u64,
    generation: u64,
}

impl<T: Real> Clone for Network<T> {
    fn clone(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            tensors: self.tensors.clone(),
            id: next_id(),
            generation: 0,
        }
    }
}

impl<T: Real> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.tensors == other.tensors
    }
}

#[derive(Clone, Copy)]
enum Layout {
    SampleMajor,
    ChannelMajor,
}

impl Layout {
    /// (channel stride, sample stride) for a plane of `plane` elements.
    fn strides(self, batch: usize, channels: usize, plane: usize) -> (usize, usize) {
        match self {
            Layout::SampleMajor => (plane, channels * plane),
            Layout::ChannelMajor => (batch * plane, plane),
        }
    }
}

fn im2col<T: Real>(input: &[T], layout: Layout, batch: usize, size: usize, spec: &ConvSpec) -> Vec<T> {
    let (k, s) = (spec.kernel, spec.stride);
    let out = spec.output_size(size);
    let p = out * out;
    let n = batch * p;
    let (cs, bs) = layout.strides(batch, spec.in_channels, size * size);
    let mut col = vec![T::zero(); spec.fan_in() * n];
    for c in 0..spec.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n;
                for b in 0..batch {
                    let src = c * cs + b * bs;
                    let dst = row + b * p;
                    for oy in 0..out {
                        let src_row = src + (oy * s + ky) * size + kx;
                        let dst_row = &mut col[dst + oy * out..dst + (oy + 1) * out];
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            *d = input[src_row + ox * s];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(col: &[T], layout: Layout, batch: usize, size: usize, spec: &ConvSpec) -> Vec<T> {
    let (k, s) = (spec.kernel, spec.stride);
    let out = spec.output_size(size);
    let p = out * out;
    let n = batch * p;
    let (cs, bs) = layout.strides(batch, spec.in_channels, size * size);
    let mut grad = vec![T::zero(); spec.in_channels * batch * size * size];
    for c in 0..spec.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n;
                for b in 0..batch {
                    let dst = c * cs + b * bs;
                    let src = row + b * p;
                    for oy in 0..out {
                        let dst_row = dst + (oy * s + ky) * size + kx;
                        let src_row = &col[src + oy * out..src + (oy + 1) * out];
                        for (ox, &v) in src_row.iter().enumerate() {
                            let g = &mut grad[dst_row + ox * s];
                            *g = *g + v;
                        }
                    }
                }
            }
        }
    }
    grad
}

fn activate<T: Real>(values: &mut [T], act: Activation) {
    if act == Activation::Relu {
        for v in values {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

fn mask_relu<T: Real>(grad: &mut [T], out: &[T], act: Activation) {
    if act == Activation::Relu {
        for (g, &o) in grad.iter_mut().zip(out) {
            if o <= T::zero() {
                *g = T::zero();
            }
        }
    }
}

fn conv_forward<T: Real>(
    spec: &ConvSpec,
    weight: &[T],
    bias: &[T],
    input: &[T],
    layout: Layout,
    batch: usize,
    size: usize,
) -> ConvCache<T> {
    let col = im2col(input, layout, batch, size, spec);
    let out_size = spec.output_size(size);
    let n = batch * out_size * out_size;
    let kdim = spec.fan_in();
    let mut out = vec![T::zero(); spec.out_channels * n];
    T::gemm(
        spec.out_channels,
        kdim,
        n,
        weight,
        (kdim as isize, 1),
        &col,
        (n as isize, 1),
        T::zero(),
        &mut out,
        (n as isize, 1),
    );
    for (row, &b) in out.chunks_exact_mut(n).zip(bias) {
        for v in row {
            *v = *v + b;
        }
    }
    activate(&mut out, spec.activation);
    ConvCache {
        col,
        out,
        in_size: size,
        out_size,
    }
}

/// Accumulates weight/bias gradients of one conv layer; returns the input
/// gradient when `need_input` is set. `grad_out` is consumed.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    spec: &ConvSpec,
    weight: &[T],
    cache: &ConvCache<T>,
    mut grad_out: Vec<T>,
    layout: Layout,
    batch: usize,
    grad_w: &mut [T],
    grad_b: &mut [T],
    need_input: bool,
) -> Option<Vec<T>> {
    mask_relu(&mut grad_out, &cache.out, spec.activation);
    let n = batch * cache.out_size * cache.out_size;
    let kdim = spec.fan_in();
    T::gemm(
        spec.out_channels,
        n,
        kdim,
        &grad_out,
        (n as isize, 1),
        &cache.col,
        (1, n as isize),
        T::zero(),
        grad_w,
        (kdim as isize, 1),
    );
    for (gb, row) in grad_b.iter_mut().zip(grad_out.chunks_exact(n)) {
        *gb = row.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    if !need_input {
        return None;
    }
    let mut grad_col = vec![T::zero(); kdim * n];
    T::gemm(
        kdim,
        spec.out_channels,
        n,
        weight,
        (1, kdim as isize),
        &grad_out,
        (n as isize, 1),
        T::zero(),
        &mut grad_col,
        (n as isize, 1),
    );
    Some(col2im(&grad_col, layout, batch, cache.in_size, spec))
}

impl<T: Real> Network<T> {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Self {
        let tensors = arch
            .tensor_shapes()
            .iter()
            .map(|s| vec![T::zero(); s.len()])
            .collect();
        Self {
            arch,
            tensors,
            id: next_id(),
            generation: 0,
        }
    }

    /// Weights uniform in ±√(6/fan_in), biases zero, drawn from a ChaCha8
    /// stream seeded with `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut net = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_ins = net.arch.fan_ins();
        for (layer, fan_in) in fan_ins.into_iter().enumerate() {
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in net.tensors[2 * layer].iter_mut() {
                *w = T::from_f64_lossy(rng.gen_range(-limit..limit));
            }
        }
        net
    }

    /// Builds a network from raw tensors, validating every shape.
    pub fn from_tensors(arch: Architecture, tensors: Vec<Vec<T>>) -> Result<Self> {
        let shapes = arch.tensor_shapes();
        if shapes.len() != tensors.len() {
            return Err(NetError::Shape(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for (s, t) in shapes.iter().zip(&tensors) {
            if s.len() != t.len() {
                return Err(NetError::Shape(format!(
                    "{}: expected {} values, got {}",
                    s.name,
                    s.len(),
                    t.len()
                )));
            }
        }
        Ok(Self {
            arch,
            tensors,
            id: next_id(),
            generation: 0,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensors(&self) -> &[Vec<T>] {
        &self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|v| U::from_f64_lossy(v.to_f64().unwrap())).collect())
                .collect(),
            id: next_id(),
            generation: 0,
        }
    }

    pub fn get_param(&self, tensor: usize, index: usize) -> T {
        self.tensors[tensor][index]
    }

    pub fn set_param(&mut self, tensor: usize, index: usize, value: T) {
        self.tensors[tensor][index] = value;
        self.generation += 1;
    }

    /// Overwrites every parameter with `other`'s (same architecture).
    pub fn copy_from(&mut self, other: &Network<T>) -> Result<()> {
        if self.arch != other.arch {
            return Err(NetError::Shape("cannot copy between architectures".into()));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.copy_from_slice(src);
        }
        self.generation += 1;
        Ok(())
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Vec<T>] {
        self.generation += 1;
        &mut self.tensors
    }

    fn check_input(&self, input: &Input<'_, T>) -> Result<()> {
        if input.batch == 0 {
            return Err(NetError::Shape("empty batch".into()));
        }
        let g = self.arch.global_input_len() * input.batch;
        if input.global.len() != g {
            return Err(NetError::Shape(format!(
                "global input has {} values, expected {} ({} × {}×{}×{})",
                input.global.len(),
                g,
                input.batch,
                self.arch.global_channels,
                self.arch.input_size,
                self.arch.input_size
            )));
        }
        let l = self.arch.local_input_len() * input.batch;
        if input.local.len() != l {
            return Err(NetError::Shape(format!(
                "local input has {} values, expected {}",
                input.local.len(),
                l
            )));
        }
        Ok(())
    }

    /// Runs the network on a batch, returning the activations needed for
    /// [`Network::backward`]. Outputs are in [`ForwardCache::output`].
    pub fn forward(&self, input: &Input<'_, T>) -> Result<ForwardCache<T>> {
        self.check_input(input)?;
        let batch = input.batch;
        let mut global = Vec::with_capacity(self.arch.global.len());
        let mut size = self.arch.input_size;
        for (i, spec) in self.arch.global.iter().enumerate() {
            let cache = match global.last() {
                None => conv_forward(
                    spec,
                    &self.tensors[2 * i],
                    &self.tensors[2 * i + 1],
                    input.global,
                    Layout::SampleMajor,
                    batch,
                    size,
                ),
                Some(prev) => {
                    let prev: &ConvCache<T> = prev;
                    conv_forward(
                        spec,
                        &self.tensors[2 * i],
                        &self.tensors[2 * i + 1],
                        &prev.out,
                        Layout::ChannelMajor,
                        batch,
                        size,
                    )
                }
            };
            size = cache.out_size;
            global.push(cache);
        }
        let li = self.arch.global.len();
        let local = self.arch.local.as_ref().map(|spec| {
            conv_forward(
                spec,
                &self.tensors[2 * li],
                &self.tensors[2 * li + 1],
                input.local,
                Layout::SampleMajor,
                batch,
                self.arch.patch_size,
            )
        });

        // Flatten channel-major per sample and concatenate.
        let gwidth = self.arch.global_flat_width();
        let width = self.arch.concat_width();
        let mut x = vec![T::zero(); batch * width];
        let last = global.last().expect("global stack is non-empty");
        let plane = last.out_size * last.out_size;
        let channels = gwidth / plane;
        for c in 0..channels {
            for b in 0..batch {
                let src = &last.out[(c * batch + b) * plane..(c * batch + b + 1) * plane];
                x[b * width + c * plane..b * width + (c + 1) * plane].copy_from_slice(src);
            }
        }
        if let Some(lc) = &local {
            let lplane = lc.out_size * lc.out_size;
            let lchannels = self.arch.local_width() / lplane;
            for c in 0..lchannels {
                for b in 0..batch {
                    let src = &lc.out[(c * batch + b) * lplane..(c * batch + b + 1) * lplane];
                    let dst = b * width + gwidth + c * lplane;
                    x[dst..dst + lplane].copy_from_slice(src);
                }
            }
        }

        let first_dense = li + usize::from(self.arch.local.is_some());
        let mut dense_in = Vec::with_capacity(self.arch.head.len());
        let mut dense_out: Vec<Vec<T>> = Vec::with_capacity(self.arch.head.len());
        for (d, spec) in self.arch.head.iter().enumerate() {
            let w = &self.tensors[2 * (first_dense + d)];
            let bias = &self.tensors[2 * (first_dense + d) + 1];
            let mut y = vec![T::zero(); batch * spec.units];
            T::gemm(
                batch,
                spec.inputs,
                spec.units,
                &x,
                (spec.inputs as isize, 1),
                w,
                (1, spec.inputs as isize),
                T::zero(),
                &mut y,
                (spec.units as isize, 1),
            );
            for row in y.chunks_exact_mut(spec.units) {
                for (v, &b) in row.iter_mut().zip(bias) {
                    *v = *v + b;
                }
            }
            activate(&mut y, spec.activation);
            dense_in.push(std::mem::replace(&mut x, y.clone()));
            dense_out.push(y);
        }

        Ok(ForwardCache {
            net_id: self.id,
            generation: self.generation,
            batch,
            global,
            local,
            dense_in,
            dense_out,
        })
    }

    /// Convenience wrapper returning only the outputs (`batch × outputs`).
    pub fn predict(&self, input: &Input<'_, T>) -> Result<Vec<T>> {
        Ok(self.forward(input)?.dense_out.pop().unwrap_or_default())
    }

    /// Gradients of a scalar loss whose derivative w.r.t. the network
    /// outputs is `grad_out` (`batch × outputs`), summed over the batch.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &[T]) -> Result<Gradients<T>> {
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(NetError::StaleCache(format!(
                "cache from network {} generation {}, network is {} generation {}",
                cache.net_id, cache.generation, self.id, self.generation
            )));
        }
        let batch = cache.batch;
        if grad_out.len() != batch * self.arch.outputs() {
            return Err(NetError::Shape(format!(
                "output gradient has {} values, expected {}",
                grad_out.len(),
                batch * self.arch.outputs()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let li = self.arch.global.len();
        let first_dense = li + usize::from(self.arch.local.is_some());

        let mut d = grad_out.to_vec();
        for (di, spec) in self.arch.head.iter().enumerate().rev() {
            mask_relu(&mut d, &cache.dense_out[di], spec.activation);
            let x = &cache.dense_in[di];
            let ti = 2 * (first_dense + di);
            let (gw, rest) = grads.tensors[ti..].split_at_mut(1);
            T::gemm(
                spec.units,
                batch,
                spec.inputs,
                &d,
                (1, spec.units as isize),
                x,
                (spec.inputs as isize, 1),
                T::zero(),
                &mut gw[0],
                (spec.inputs as isize, 1),
            );
            for row in d.chunks_exact(spec.units) {
                for (gb, &v) in rest[0].iter_mut().zip(row) {
                    *gb = *gb + v;
                }
            }
            let mut dx = vec![T::zero(); batch * spec.inputs];
            T::gemm(
                batch,
                spec.units,
                spec.inputs,
                &d,
                (spec.units as isize, 1),
                &self.tensors[ti],
                (spec.inputs as isize, 1),
                T::zero(),
                &mut dx,
                (spec.inputs as isize, 1),
            );
            d = dx;
        }

        // Split the concat gradient back into conv-output layouts.
        let gwidth = self.arch.global_flat_width();
        let width = self.arch.concat_width();
        if let (Some(spec), Some(lc)) = (&self.arch.local, &cache.local) {
            let lplane = lc.out_size * lc.out_size;
            let lchannels = self.arch.local_width() / lplane;
            let mut dl = vec![T::zero(); lc.out.len()];
            for c in 0..lchannels {
                for b in 0..batch {
                    let src = b * width + gwidth + c * lplane;
                    dl[(c * batch + b) * lplane..(c * batch + b + 1) * lplane]
                        .copy_from_slice(&d[src..src + lplane]);
                }
            }
            let (gw, gb) = grads.tensors[2 * li..2 * li + 2].split_at_mut(1);
            conv_backward(
                spec,
                &self.tensors[2 * li],
                lc,
                dl,
                Layout::SampleMajor,
                batch,
                &mut gw[0],
                &mut gb[0],
                false,
            );
        }
        let last = cache.global.last().expect("global stack is non-empty");
        let plane = last.out_size * last.out_size;
        let mut dg = vec![T::zero(); last.out.len()];
        for c in 0..gwidth / plane {
            for b in 0..batch {
                let src = b * width + c * plane;
                dg[(c * batch + b) * plane..(c * batch + b + 1) * plane]
                    .copy_from_slice(&d[src..src + plane]);
            }
        }
        for (i, spec) in self.arch.global.iter().enumerate().rev() {
            let layout = if i == 0 {
                Layout::SampleMajor
            } else {
                Layout::ChannelMajor
            };
            let (gw, gb) = grads.tensors[2 * i..2 * i + 2].split_at_mut(1);
            match conv_backward(
                spec,
                &self.tensors[2 * i],
                &cache.global[i],
                dg,
                layout,
                batch,
                &mut gw[0],
                &mut gb[0],
                i > 0,
            ) {
                Some(next) => dg = next,
                None => break,
            }
        }
        Ok(grads)
    }
}
