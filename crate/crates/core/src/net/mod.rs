//! Residual MLP with one linear utility head per action dimension.
//!
//! ```text
//! h0 = relu(W_in s + b_in)
//! h  = LayerNorm(h0 + relu(W2 relu(W1 h0 + b1) + b2))
//! U^i(s, ·) = W_i h + c_i
//! ```
//!
//! Parameters live in one flat buffer split into named segments, so the
//! optimiser, gradient clipping, Polyak averaging and checkpointing all work
//! on plain slices. Gradients use the same type as parameters.

pub mod checkpoint;
mod gradcheck;
mod loss;
mod optim;

pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use loss::huber;
pub use optim::{clip_grad_norm, polyak_update, AdamConfig, AdamState};

use std::fmt::Debug;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Result};
use crate::fmdp::ActionSpaceSpec;

/// Floating-point types the network runs in.
pub trait Real:
    Float + LinalgScalar + ScalarOperand + FromPrimitive + Debug + Default + Send + Sync + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub spec: ActionSpaceSpec,
    pub seed: u64,
}

impl NetConfig {
    pub fn new(input_dim: usize, spec: ActionSpaceSpec, seed: u64) -> Self {
        Self { input_dim, hidden: 512, spec, seed }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(domain!("input_dim and hidden must be at least 1"));
        }
        Ok(())
    }
}

/// A named slice of the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shapes and offsets of every parameter array for one network shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub input_dim: usize,
    pub hidden: usize,
    pub spec: ActionSpaceSpec,
    pub segments: Vec<Segment>,
    pub len: usize,
}

const W_IN: usize = 0;
const B_IN: usize = 1;
const W1: usize = 2;
const B1: usize = 3;
const W2: usize = 4;
const B2: usize = 5;
const LN_GAIN: usize = 6;
const LN_BIAS: usize = 7;
const W_HEAD: usize = 8;
const B_HEAD: usize = 9;

impl Layout {
    fn new(input_dim: usize, hidden: usize, spec: ActionSpaceSpec) -> Self {
        let outputs = spec.total_sub_actions();
        let shapes: [(&'static str, Vec<usize>); 10] = [
            ("input.weight", vec![input_dim, hidden]),
            ("input.bias", vec![hidden]),
            ("residual.0.weight", vec![hidden, hidden]),
            ("residual.0.bias", vec![hidden]),
            ("residual.1.weight", vec![hidden, hidden]),
            ("residual.1.bias", vec![hidden]),
            ("layer_norm.gain", vec![hidden]),
            ("layer_norm.bias", vec![hidden]),
            ("heads.weight", vec![hidden, outputs]),
            ("heads.bias", vec![outputs]),
        ];
        let mut offset = 0;
        let segments = shapes
            .into_iter()
            .map(|(name, shape)| {
                let seg = Segment { name, shape, offset };
                offset += seg.len();
                seg
            })
            .collect();
        Self { input_dim, hidden, spec, segments, len: offset }
    }

    pub fn outputs(&self) -> usize {
        self.spec.total_sub_actions()
    }
}

/// Network parameters (or gradients, which share the shape).
///
/// Weights are stored `[fan_in, fan_out]` so a batch forward is `X · W`.
/// All heads share one weight matrix; columns `offset(i)..offset(i) + n_i`
/// belong to head `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    layout: Arc<Layout>,
    data: Vec<T>,
}

impl<T: Real> NetParams<T> {
    /// Fresh parameters: He-style uniform bounds `sqrt(6 / fan_in)` on the
    /// ReLU layers, `1 / sqrt(fan_in)` on the linear heads, zero biases,
    /// unit layer-norm gain.
    pub fn init(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let layout = Arc::new(Layout::new(config.input_dim, config.hidden, config.spec.clone()));
        let mut data = vec![T::zero(); layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (idx, seg) in layout.segments.iter().enumerate() {
            let bound = match idx {
                W_IN | W1 | W2 => (6.0 / seg.shape[0] as f64).sqrt(),
                W_HEAD => (1.0 / seg.shape[0] as f64).sqrt(),
                _ => 0.0,
            };
            let slot = &mut data[seg.offset..seg.offset + seg.len()];
            if idx == LN_GAIN {
                slot.fill(T::one());
            } else if bound > 0.0 {
                for x in slot {
                    *x = T::from_f64_lossy(rng.random_range(-bound..bound));
                }
            }
        }
        Ok(Self { layout, data })
    }

    /// All-zero buffer with the same layout (used for gradients).
    pub fn zeros_like(&self) -> Self {
        Self { layout: Arc::clone(&self.layout), data: vec![T::zero(); self.data.len()] }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn spec(&self) -> &ActionSpaceSpec {
        &self.layout.spec
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        *self.layout == *other.layout
    }

    /// Converts element type, e.g. to run an f32 network in f64.
    pub fn cast<U: Real>(&self) -> NetParams<U> {
        NetParams {
            layout: Arc::clone(&self.layout),
            data: self.data.iter().map(|x| U::from_f64_lossy(x.to_f64().unwrap())).collect(),
        }
    }

    /// Builds parameters from raw data, checking the length against the layout.
    pub fn from_raw(config: &NetConfig, data: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Arc::new(Layout::new(config.input_dim, config.hidden, config.spec.clone()));
        if data.len() != layout.len {
            return Err(structural!("expected {} parameters, got {}", layout.len, data.len()));
        }
        Ok(Self { layout, data })
    }

    /// Named segment views, in layout order.
    pub fn named(&self) -> impl Iterator<Item = (&Segment, &[T])> {
        self.layout.segments.iter().map(|s| (s, &self.data[s.offset..s.offset + s.len()]))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn mat(&self, idx: usize) -> ArrayView2<'_, T> {
        let seg = &self.layout.segments[idx];
        ArrayView2::from_shape((seg.shape[0], seg.shape[1]), &self.data[seg.offset..seg.offset + seg.len()])
            .expect("layout shape")
    }

    fn vec(&self, idx: usize) -> ArrayView1<'_, T> {
        let seg = &self.layout.segments[idx];
        ArrayView1::from(&self.data[seg.offset..seg.offset + seg.len()])
    }

    /// Mutable views of a weight matrix and its bias, for accumulating gradients.
    fn layer_mut(&mut self, w: usize, b: usize) -> (ArrayViewMut2<'_, T>, ArrayViewMut1<'_, T>) {
        let (ws, bs) = (&self.layout.segments[w], &self.layout.segments[b]);
        let (w_shape, w_off, w_len) = ((ws.shape[0], ws.shape[1]), ws.offset, ws.len());
        let (b_off, b_len) = (bs.offset, bs.len());
        debug_assert_eq!(w_off + w_len, b_off);
        let (w_data, rest) = self.data[w_off..].split_at_mut(w_len);
        (
            ArrayViewMut2::from_shape(w_shape, w_data).expect("layout shape"),
            ArrayViewMut1::from(&mut rest[..b_len]),
        )
    }

    /// Mutable views of two adjacent vectors (layer-norm gain and bias).
    fn vec_pair_mut(&mut self, a: usize, b: usize) -> (ArrayViewMut1<'_, T>, ArrayViewMut1<'_, T>) {
        let (sa, sb) = (&self.layout.segments[a], &self.layout.segments[b]);
        let (a_off, a_len, b_len) = (sa.offset, sa.len(), sb.len());
        debug_assert_eq!(a_off + a_len, sb.offset);
        let (a_data, rest) = self.data[a_off..].split_at_mut(a_len);
        (ArrayViewMut1::from(a_data), ArrayViewMut1::from(&mut rest[..b_len]))
    }

    /// Batched forward pass; rows of `states` are inputs.
    pub fn forward_batch(&self, states: ArrayView2<'_, T>) -> Result<ForwardCache<T>> {
        let layout = &*self.layout;
        if states.ncols() != layout.input_dim {
            return Err(structural!("input has {} features, network expects {}", states.ncols(), layout.input_dim));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(domain!("non-finite network input"));
        }
        let relu = |z: &Array2<T>| z.mapv(|v| if v > T::zero() { v } else { T::zero() });

        let z0 = states.dot(&self.mat(W_IN)) + &self.vec(B_IN);
        let h0 = relu(&z0);
        let z1 = h0.dot(&self.mat(W1)) + &self.vec(B1);
        let h1 = relu(&z1);
        let z2 = h1.dot(&self.mat(W2)) + &self.vec(B2);
        let pre_norm = &h0 + &relu(&z2);

        let width = T::from_usize(layout.hidden).unwrap();
        let eps = T::from_f64_lossy(LAYER_NORM_EPS);
        let mut normed = pre_norm.clone();
        let mut inv_std = Array1::zeros(states.nrows());
        for (mut row, inv) in normed.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
            let mean = row.sum() / width;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().fold(T::zero(), |acc, &v| acc + v * v) / width;
            *inv = T::one() / (var + eps).sqrt();
            let s = *inv;
            row.mapv_inplace(|v| v * s);
        }
        let hidden_out = &normed * &self.vec(LN_GAIN) + &self.vec(LN_BIAS);
        let outputs = hidden_out.dot(&self.mat(W_HEAD)) + &self.vec(B_HEAD);

        Ok(ForwardCache {
            input: states.to_owned(),
            z0,
            h0,
            z1,
            h1,
            z2,
            pre_norm,
            normed,
            inv_std,
            hidden_out,
            outputs,
        })
    }

    /// Utilities for a single state, one vector per dimension.
    pub fn forward(&self, state: &[T]) -> Result<Vec<Vec<T>>> {
        let x = ArrayView2::from_shape((1, state.len()), state).expect("row vector");
        let cache = self.forward_batch(x)?;
        Ok(cache.utilities(0, &self.layout.spec))
    }

    /// Reverse-mode pass. `upstream` is `∂loss/∂outputs`, shaped like
    /// [`ForwardCache::outputs`]. Returns `∂loss/∂params`.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: ArrayView2<'_, T>) -> Result<NetParams<T>> {
        if upstream.dim() != cache.outputs.dim() {
            return Err(structural!(
                "upstream gradient shape {:?} does not match outputs {:?}",
                upstream.dim(),
                cache.outputs.dim()
            ));
        }
        let mut grads = self.zeros_like();
        let width = T::from_usize(self.layout.hidden).unwrap();
        let relu_grad = |g: Array2<T>, z: &Array2<T>| {
            let mut g = g;
            g.zip_mut_with(z, |gv, &zv| {
                if zv <= T::zero() {
                    *gv = T::zero()
                }
            });
            g
        };

        {
            let (mut dw, mut db) = grads.layer_mut(W_HEAD, B_HEAD);
            dw.assign(&cache.hidden_out.t().dot(&upstream));
            db.assign(&upstream.sum_axis(Axis(0)));
        }
        let d_hidden_out = upstream.dot(&self.mat(W_HEAD).t());
        {
            let (mut dgain, mut dbias) = grads.vec_pair_mut(LN_GAIN, LN_BIAS);
            dgain.assign(&(&d_hidden_out * &cache.normed).sum_axis(Axis(0)));
            dbias.assign(&d_hidden_out.sum_axis(Axis(0)));
        }
        let mut d_pre = &d_hidden_out * &self.vec(LN_GAIN);
        for ((mut row, xhat), &inv) in d_pre.axis_iter_mut(Axis(0)).zip(cache.normed.axis_iter(Axis(0))).zip(&cache.inv_std) {
            let mean_g = row.sum() / width;
            let mean_gx = row.iter().zip(xhat.iter()).fold(T::zero(), |acc, (&g, &x)| acc + g * x) / width;
            row.zip_mut_with(&xhat, |g, &x| *g = inv * (*g - mean_g - x * mean_gx));
        }

        let dz2 = relu_grad(d_pre.clone(), &cache.z2);
        {
            let (mut dw, mut db) = grads.layer_mut(W2, B2);
            dw.assign(&cache.h1.t().dot(&dz2));
            db.assign(&dz2.sum_axis(Axis(0)));
        }
        let dz1 = relu_grad(dz2.dot(&self.mat(W2).t()), &cache.z1);
        {
            let (mut dw, mut db) = grads.layer_mut(W1, B1);
            dw.assign(&cache.h0.t().dot(&dz1));
            db.assign(&dz1.sum_axis(Axis(0)));
        }
        let dh0 = dz1.dot(&self.mat(W1).t()) + &d_pre;
        let dz0 = relu_grad(dh0, &cache.z0);
        {
            let (mut dw, mut db) = grads.layer_mut(W_IN, B_IN);
            dw.assign(&cache.input.t().dot(&dz0));
            db.assign(&dz0.sum_axis(Axis(0)));
        }
        Ok(grads)
    }
}

impl NetParams<f32> {
    /// Checkpoint arrays named `<prefix>.<segment>`.
    pub fn to_named(&self, prefix: &str) -> Vec<checkpoint::NamedArray> {
        self.named()
            .map(|(seg, data)| checkpoint::NamedArray {
                name: format!("{prefix}.{}", seg.name),
                shape: seg.shape.clone(),
                data: data.to_vec(),
            })
            .collect()
    }

    /// Overwrites every segment from the arrays named `<prefix>.<segment>`.
    pub fn load_named(&mut self, prefix: &str, arrays: &[checkpoint::NamedArray]) -> Result<()> {
        let layout = Arc::clone(&self.layout);
        for seg in &layout.segments {
            let name = format!("{prefix}.{}", seg.name);
            let array = arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| structural!("checkpoint is missing array {name}"))?;
            if array.shape != seg.shape {
                return Err(structural!("array {name} has shape {:?}, expected {:?}", array.shape, seg.shape));
            }
            self.data[seg.offset..seg.offset + seg.len()].copy_from_slice(&array.data);
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Array2<T>,
    z0: Array2<T>,
    h0: Array2<T>,
    z1: Array2<T>,
    h1: Array2<T>,
    z2: Array2<T>,
    /// Residual sum fed into the layer norm.
    pub pre_norm: Array2<T>,
    /// Layer-norm output before gain and bias.
    pub normed: Array2<T>,
    inv_std: Array1<T>,
    hidden_out: Array2<T>,
    /// `batch × Σ n_i` utilities, heads concatenated in dimension order.
    pub outputs: Array2<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Utilities of row `row`, split per dimension.
    pub fn utilities(&self, row: usize, spec: &ActionSpaceSpec) -> Vec<Vec<T>> {
        let out = self.outputs.row(row);
        let mut offset = 0;
        spec.sizes()
            .iter()
            .map(|&n| {
                let v = out.slice(ndarray::s![offset..offset + n]).to_vec();
                offset += n;
                v
            })
            .collect()
    }
}
