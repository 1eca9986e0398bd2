//! Boundary classifier: stacked 3x3 valid convolutions with 2x2 max pooling
//! and dropout, one hidden dense layer, and a two-way softmax whose class-1
//! output is the split score `p`.

mod checkpoint;
mod train;

use std::fmt::Debug;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patches::{Patch4, WeightedPatchSet};
use crate::synth::derive_seed;

pub use checkpoint::{
    load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta,
    CHECKPOINT_VERSION,
};
pub use train::{train, EpochStats, Nesterov, TrainSchedule};

const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnArch {
    pub input_size: usize,
    pub in_channels: usize,
    pub conv_filters: Vec<usize>,
    pub dense_units: usize,
    pub classes: usize,
    pub conv_dropout: f64,
    pub dense_dropout: f64,
}

impl Default for CnnArch {
    fn default() -> Self {
        Self {
            input_size: 75,
            in_channels: 4,
            conv_filters: vec![64, 48, 48, 48],
            dense_units: 512,
            classes: 2,
            conv_dropout: 0.2,
            dense_dropout: 0.5,
        }
    }
}

/// Where one parameterized layer lives in the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    /// Spatial input side for conv layers, 1 for dense.
    pub in_size: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn conv_size(&self) -> usize {
        self.in_size + 1 - KERNEL
    }

    pub fn pool_size(&self) -> usize {
        self.conv_size() / 2
    }

    /// Columns of the weight matrix: `inputs * 9` for conv, `inputs` for dense.
    pub fn fan_in(&self) -> usize {
        if self.in_size > 1 {
            self.inputs * KERNEL * KERNEL
        } else {
            self.inputs
        }
    }

    pub fn param_len(&self) -> usize {
        self.outputs * (self.fan_in() + 1)
    }
}

impl CnnArch {
    /// Patch side reduced to 12 with two conv layers, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            input_size: 12,
            in_channels: 4,
            conv_filters: vec![3, 4],
            dense_units: 6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("conv_filters must be nonempty and positive".into());
        }
        if self.in_channels == 0 || self.dense_units == 0 || self.classes != 2 {
            return bad("channels and dense units must be positive, classes must be 2".into());
        }
        for p in [self.conv_dropout, self.dense_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout rate {p} outside [0, 1)"));
            }
        }
        let mut s = self.input_size;
        for _ in &self.conv_filters {
            if s < KERNEL + 1 {
                return bad(format!(
                    "input size {} too small for the conv stack",
                    self.input_size
                ));
            }
            s = (s + 1 - KERNEL) / 2;
        }
        Ok(())
    }

    /// Parameterized layers in declared order: the convs, then two dense.
    pub fn layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::with_capacity(self.conv_filters.len() + 2);
        let mut offset = 0;
        let mut push = |inputs, outputs, in_size| {
            let mut l = LayerShape {
                inputs,
                outputs,
                in_size,
                weight_offset: offset,
                bias_offset: 0,
            };
            l.bias_offset = offset + outputs * l.fan_in();
            offset += l.param_len();
            out.push(l);
        };
        let (mut ch, mut size) = (self.in_channels, self.input_size);
        for &f in &self.conv_filters {
            push(ch, f, size);
            ch = f;
            size = (size + 1 - KERNEL) / 2;
        }
        push(ch * size * size, self.dense_units, 1);
        push(self.dense_units, self.classes, 1);
        out
    }

    pub fn flat_features(&self) -> usize {
        self.layers()[self.conv_filters.len()].inputs
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.input_size * self.input_size
    }
}

pub fn param_count(arch: &CnnArch) -> usize {
    arch.layers().iter().map(LayerShape::param_len).sum()
}

/// Scalar type the network computes in. Training and inference use `f32`;
/// gradient checks use `f64`.
pub trait Real: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    /// `c = a * b + beta * c` for an `m x k` by `k x n` product with
    /// arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );

    fn of(v: f64) -> Self {
        num_traits::cast(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite")
    }
}

fn check_gemm(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert!(
        a >= m * k && b >= k * n && c >= m * n,
        "gemm operand too short"
    );
}

impl Real for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
    ) {
        check_gemm(m, k, n, a.len(), b.len(), c.len());
        // SAFETY: operand lengths checked above; strides describe dense
        // row- or column-major layouts within those lengths.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Real for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
    ) {
        check_gemm(m, k, n, a.len(), b.len(), c.len());
        // SAFETY: as for f32.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

/// `c (m x n) = op(a) * op(b) + beta * c`; `a_t` means `a` is stored `k x m`,
/// `b_t` means `b` is stored `n x k`.
#[allow(clippy::too_many_arguments)]
fn matmul<R: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[R],
    a_t: bool,
    b: &[R],
    b_t: bool,
    accumulate: bool,
    c: &mut [R],
) {
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { R::one() } else { R::zero() };
    R::gemm(m, k, n, a, rsa, csa, b, rsb, csb, beta, c);
}

/// All learnable parameters, flattened layer by layer as weights then biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<R: Real = f32> {
    pub arch: CnnArch,
    pub params: Vec<R>,
    layers: Vec<LayerShape>,
}

pub type CnnWeights = Weights<f32>;

impl<R: Real> Weights<R> {
    pub fn zeros(arch: CnnArch) -> Result<Self> {
        arch.validate()?;
        let layers = arch.layers();
        let n = param_count(&arch);
        Ok(Self {
            arch,
            params: vec![R::zero(); n],
            layers,
        })
    }

    /// Zero-mean normal weights with standard deviation `1/sqrt(fan_in)`,
    /// zero biases.
    pub fn init(arch: CnnArch, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in w.layers.clone() {
            let scale = 1.0 / (l.fan_in() as f64).sqrt();
            for v in &mut w.params[l.weight_offset..l.bias_offset] {
                let z: f64 = rng.sample(StandardNormal);
                *v = R::of(z * scale);
            }
        }
        Ok(w)
    }

    pub fn from_params(arch: CnnArch, params: Vec<R>) -> Result<Self> {
        let mut w = Self::zeros(arch)?;
        if params.len() != w.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for an architecture with {}",
                params.len(),
                w.params.len()
            )));
        }
        w.params = params;
        Ok(w)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn cast<S: Real>(&self) -> Weights<S> {
        Weights {
            arch: self.arch.clone(),
            params: self.params.iter().map(|v| S::of(v.f64())).collect(),
            layers: self.layers.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Post-ReLU activations of every hidden layer (convolutions, then the
    /// dense layer) for one input. Each layer's vector holds its units'
    /// outputs contiguously, unit by unit.
    pub fn hidden_activations(&self, input: &[f32], dropout: Dropout) -> Vec<Vec<R>> {
        let t = self.forward_one(input, dropout);
        let mut out: Vec<Vec<R>> = t.convs.into_iter().map(|c| c.act).collect();
        out.push(t.hidden);
        out
    }

    fn weight(&self, l: &LayerShape) -> &[R] {
        &self.params[l.weight_offset..l.bias_offset]
    }

    fn bias(&self, l: &LayerShape) -> &[R] {
        &self.params[l.bias_offset..l.bias_offset + l.outputs]
    }

    fn check_input(&self, input: &[f32]) -> Result<()> {
        if input.len() != self.arch.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, network expects {}x{}x{}",
                input.len(),
                self.arch.in_channels,
                self.arch.input_size,
                self.arch.input_size
            )));
        }
        Ok(())
    }
}

/// Dropout during a pass: off for inference, or on with a per-sample seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dropout {
    Off,
    On(u64),
}

struct ConvTrace<R> {
    cols: Vec<R>,
    act: Vec<R>,
    argmax: Vec<u32>,
    mask: Option<Vec<R>>,
}

struct Trace<R> {
    convs: Vec<ConvTrace<R>>,
    flat: Vec<R>,
    hidden: Vec<R>,
    hidden_mask: Option<Vec<R>>,
    hidden_out: Vec<R>,
    probs: [R; 2],
}

fn im2col<R: Real>(x: &[R], channels: usize, size: usize, cols: &mut [R]) {
    let so = size + 1 - KERNEL;
    let plane = so * so;
    for c in 0..channels {
        let xc = &x[c * size * size..(c + 1) * size * size];
        for kr in 0..KERNEL {
            for kc in 0..KERNEL {
                let row = &mut cols[((c * KERNEL + kr) * KERNEL + kc) * plane..][..plane];
                for r in 0..so {
                    row[r * so..(r + 1) * so].copy_from_slice(&xc[(r + kr) * size + kc..][..so]);
                }
            }
        }
    }
}

fn col2im<R: Real>(cols: &[R], channels: usize, size: usize, x: &mut [R]) {
    let so = size + 1 - KERNEL;
    let plane = so * so;
    for c in 0..channels {
        let xc = &mut x[c * size * size..(c + 1) * size * size];
        for kr in 0..KERNEL {
            for kc in 0..KERNEL {
                let row = &cols[((c * KERNEL + kr) * KERNEL + kc) * plane..][..plane];
                for r in 0..so {
                    let dst = &mut xc[(r + kr) * size + kc..][..so];
                    for (d, &s) in dst.iter_mut().zip(&row[r * so..(r + 1) * so]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

fn dropout_mask<R: Real>(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<R> {
    let keep = R::of(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                R::zero()
            } else {
                keep
            }
        })
        .collect()
}

fn softmax2<R: Real>(z: [R; 2]) -> [R; 2] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

impl<R: Real> Weights<R> {
    fn forward_one(&self, input: &[f32], dropout: Dropout) -> Trace<R> {
        let mut rng = match dropout {
            Dropout::On(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            Dropout::Off => None,
        };
        let n_conv = self.arch.conv_filters.len();
        let mut x: Vec<R> = input.iter().map(|&v| R::of(f64::from(v))).collect();
        let mut convs = Vec::with_capacity(n_conv);
        for l in &self.layers[..n_conv] {
            let (so, sp) = (l.conv_size(), l.pool_size());
            let k = l.fan_in();
            let mut cols = vec![R::zero(); k * so * so];
            im2col(&x, l.inputs, l.in_size, &mut cols);
            let mut act = vec![R::zero(); l.outputs * so * so];
            matmul(
                l.outputs,
                k,
                so * so,
                self.weight(l),
                false,
                &cols,
                false,
                false,
                &mut act,
            );
            for (f, &b) in self.bias(l).iter().enumerate() {
                for v in &mut act[f * so * so..(f + 1) * so * so] {
                    *v = (*v + b).max(R::zero());
                }
            }
            let mut pooled = vec![R::zero(); l.outputs * sp * sp];
            let mut argmax = vec![0u32; pooled.len()];
            for f in 0..l.outputs {
                for pr in 0..sp {
                    for pc in 0..sp {
                        let mut best = f * so * so + 2 * pr * so + 2 * pc;
                        for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                            let i = f * so * so + (2 * pr + dr) * so + 2 * pc + dc;
                            if act[i] > act[best] {
                                best = i;
                            }
                        }
                        let o = (f * sp + pr) * sp + pc;
                        pooled[o] = act[best];
                        argmax[o] = best as u32;
                    }
                }
            }
            let mask = rng
                .as_mut()
                .filter(|_| self.arch.conv_dropout > 0.0)
                .map(|rng| {
                    let m = dropout_mask(pooled.len(), self.arch.conv_dropout, rng);
                    for (v, &s) in pooled.iter_mut().zip(&m) {
                        *v = *v * s;
                    }
                    m
                });
            convs.push(ConvTrace {
                cols,
                act,
                argmax,
                mask,
            });
            x = pooled;
        }

        let d1 = &self.layers[n_conv];
        let mut hidden = self.bias(d1).to_vec();
        matmul(
            d1.outputs,
            d1.inputs,
            1,
            self.weight(d1),
            false,
            &x,
            false,
            true,
            &mut hidden,
        );
        for v in &mut hidden {
            *v = v.max(R::zero());
        }
        let mut hidden_out = hidden.clone();
        let hidden_mask = rng
            .as_mut()
            .filter(|_| self.arch.dense_dropout > 0.0)
            .map(|rng| {
                let m = dropout_mask(hidden.len(), self.arch.dense_dropout, rng);
                for (v, &s) in hidden_out.iter_mut().zip(&m) {
                    *v = *v * s;
                }
                m
            });

        let d2 = &self.layers[n_conv + 1];
        let mut logits = self.bias(d2).to_vec();
        matmul(
            d2.outputs,
            d2.inputs,
            1,
            self.weight(d2),
            false,
            &hidden_out,
            false,
            true,
            &mut logits,
        );
        Trace {
            convs,
            flat: x,
            hidden,
            hidden_mask,
            hidden_out,
            probs: softmax2([logits[0], logits[1]]),
        }
    }

    /// Adds `scale` times the cross-entropy gradient of one traced sample to
    /// `grad`.
    fn backward_one(&self, t: &Trace<R>, target: u8, scale: R, grad: &mut [R]) {
        let n_conv = self.arch.conv_filters.len();
        let d2 = self.layers[n_conv + 1];
        let d1 = self.layers[n_conv];

        let mut dlogit = [t.probs[0], t.probs[1]];
        dlogit[usize::from(target)] = dlogit[usize::from(target)] - R::one();
        for v in &mut dlogit {
            *v = *v * scale;
        }
        let (gw, gb) = grad[d2.weight_offset..].split_at_mut(d2.bias_offset - d2.weight_offset);
        matmul(
            2,
            1,
            d2.inputs,
            &dlogit,
            false,
            &t.hidden_out,
            false,
            true,
            gw,
        );
        gb[0] = gb[0] + dlogit[0];
        gb[1] = gb[1] + dlogit[1];

        let mut dh = vec![R::zero(); d2.inputs];
        matmul(
            1,
            2,
            d2.inputs,
            &dlogit,
            false,
            self.weight(&d2),
            false,
            false,
            &mut dh,
        );
        for (i, v) in dh.iter_mut().enumerate() {
            if t.hidden[i] <= R::zero() {
                *v = R::zero();
            } else if let Some(m) = &t.hidden_mask {
                *v = *v * m[i];
            }
        }
        let (gw, gb) = grad[d1.weight_offset..].split_at_mut(d1.bias_offset - d1.weight_offset);
        matmul(
            d1.outputs, 1, d1.inputs, &dh, false, &t.flat, false, true, gw,
        );
        for (g, &d) in gb.iter_mut().zip(&dh) {
            *g = *g + d;
        }
        let mut dx = vec![R::zero(); d1.inputs];
        matmul(
            1,
            d1.outputs,
            d1.inputs,
            &dh,
            false,
            self.weight(&d1),
            false,
            false,
            &mut dx,
        );

        for (li, l) in self.layers[..n_conv].iter().enumerate().rev() {
            let ct = &t.convs[li];
            let plane = l.conv_size() * l.conv_size();
            let k = l.fan_in();
            if let Some(m) = &ct.mask {
                for (v, &s) in dx.iter_mut().zip(m) {
                    *v = *v * s;
                }
            }
            let mut dact = vec![R::zero(); l.outputs * plane];
            for (&i, &d) in ct.argmax.iter().zip(&dx) {
                if ct.act[i as usize] > R::zero() {
                    dact[i as usize] = dact[i as usize] + d;
                }
            }
            let (gw, gb) = grad[l.weight_offset..].split_at_mut(l.bias_offset - l.weight_offset);
            matmul(l.outputs, plane, k, &dact, false, &ct.cols, true, true, gw);
            for (f, g) in gb[..l.outputs].iter_mut().enumerate() {
                *g = *g + dact[f * plane..(f + 1) * plane].iter().copied().sum();
            }
            if li > 0 {
                let mut dcols = vec![R::zero(); k * plane];
                matmul(
                    k,
                    l.outputs,
                    plane,
                    self.weight(l),
                    true,
                    &dact,
                    false,
                    false,
                    &mut dcols,
                );
                dx = vec![R::zero(); l.inputs * l.in_size * l.in_size];
                col2im(&dcols, l.inputs, l.in_size, &mut dx);
            }
        }
    }
}

/// One training or evaluation example.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub input: &'a [f32],
    pub target: u8,
    pub dropout: Dropout,
}

/// Samples per parallel work unit; partial gradients are summed in chunk
/// order so results do not depend on the thread count.
const CHUNK: usize = 4;

fn cross_entropy<R: Real>(probs: [R; 2], target: u8) -> f64 {
    -probs[usize::from(target)].f64().max(1e-300).ln()
}

/// Mean cross-entropy over `batch` and its gradient.
pub fn loss_and_gradient<R: Real>(
    weights: &Weights<R>,
    batch: &[Example],
) -> Result<(f64, Vec<R>)> {
    if batch.is_empty() {
        return Err(Error::EmptySet);
    }
    for e in batch {
        weights.check_input(e.input)?;
        if e.target > 1 {
            return Err(Error::ShapeMismatch(format!(
                "target {} is not a class",
                e.target
            )));
        }
    }
    let scale = R::of(1.0 / batch.len() as f64);
    let partials: Vec<(f64, Vec<R>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![R::zero(); weights.params.len()];
            let mut loss = 0.0;
            for e in chunk {
                let t = weights.forward_one(e.input, e.dropout);
                loss += cross_entropy(t.probs, e.target);
                weights.backward_one(&t, e.target, scale, &mut grad);
            }
            (loss, grad)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![R::zero(); weights.params.len()];
    for (loss, g) in partials {
        total += loss;
        for (a, b) in grad.iter_mut().zip(g) {
            *a = *a + b;
        }
    }
    Ok((total / batch.len() as f64, grad))
}

fn patch_inputs<'a, R: Real>(weights: &Weights<R>, batch: &'a [Patch4]) -> Result<Vec<&'a [f32]>> {
    batch
        .iter()
        .map(|p| {
            weights.check_input(&p.data)?;
            Ok(p.data.as_slice())
        })
        .collect()
}

/// Class probabilities per patch. With dropout on, sample `i` uses the seed
/// `derive_seed(seed, [i])`.
pub fn forward<R: Real>(
    weights: &Weights<R>,
    batch: &[Patch4],
    dropout: Dropout,
) -> Result<Vec<[f64; 2]>> {
    let inputs = patch_inputs(weights, batch)?;
    Ok(forward_inputs(weights, &inputs, dropout))
}

pub(crate) fn forward_inputs<R: Real>(
    weights: &Weights<R>,
    inputs: &[&[f32]],
    dropout: Dropout,
) -> Vec<[f64; 2]> {
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let d = match dropout {
                Dropout::Off => Dropout::Off,
                Dropout::On(seed) => Dropout::On(derive_seed(seed, &[i as u64])),
            };
            let p = weights.forward_one(x, d).probs;
            [p[0].f64(), p[1].f64()]
        })
        .collect()
}

/// Gradient of the mean cross-entropy over `batch` with dropout off.
pub fn backward<R: Real>(weights: &Weights<R>, batch: &[Patch4], targets: &[u8]) -> Result<Vec<R>> {
    if batch.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} patches but {} targets",
            batch.len(),
            targets.len()
        )));
    }
    let inputs = patch_inputs(weights, batch)?;
    let examples: Vec<Example> = inputs
        .iter()
        .zip(targets)
        .map(|(&input, &target)| Example {
            input,
            target,
            dropout: Dropout::Off,
        })
        .collect();
    Ok(loss_and_gradient(weights, &examples)?.1)
}

/// Split-error probabilities (class 1) for each patch, dropout off.
pub fn predict(weights: &CnnWeights, patches: &[Patch4]) -> Result<Vec<f64>> {
    Ok(forward(weights, patches, Dropout::Off)?
        .into_iter()
        .map(|p| p[1])
        .collect())
}

/// Coverage-weighted mean of the per-patch split probabilities.
pub fn score_boundary(weights: &CnnWeights, set: &WeightedPatchSet) -> Result<f64> {
    if set.patches.is_empty() {
        return Err(Error::EmptySet);
    }
    let p = predict(weights, &set.patches)?;
    Ok(weighted_mean(&p, &set.weights))
}

pub(crate) fn weighted_mean(p: &[f64], w: &[f64]) -> f64 {
    p.iter()
        .zip(w)
        .map(|(p, w)| p * w)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}
