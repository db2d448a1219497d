//! Fully connected ReLU Q-network with TD gradients and RMSProp.
//!
//! Layer weights are stored input-major (`w[i * out + j]` connects input `i`
//! to output `j`), so a minibatch forward is the row-major product
//! `X (B x in) * W (in x out)`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;

/// RMSProp decay of the squared-gradient average.
pub const RMS_DECAY: f64 = 0.95;
/// RMSProp denominator stabiliser.
pub const RMS_EPS: f64 = 1e-6;

const MAGIC: &[u8; 4] = b"GFQN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has {got} values, network expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("network needs at least an input and an output layer")]
    TooFewLayers,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            biases: vec![T::zero(); out_dim],
        }
    }

    pub fn weight(&self, input: usize, output: usize) -> T {
        self.weights[input * self.out_dim + output]
    }
}

/// Same shape as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Gradient<T> {
    pub fn to_flat(&self) -> Vec<T> {
        flatten(&self.layers)
    }

    pub fn max_abs(&self) -> T {
        self.to_flat().into_iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet<T> {
    dims: Vec<usize>,
    layers: Vec<Layer<T>>,
    rms_accum: Vec<Layer<T>>,
}

/// One stored interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: usize,
    pub reward: T,
    pub next_state: Vec<T>,
    pub terminal: bool,
}

/// A sampled minibatch; borrows from replay memory.
pub type Minibatch<'a, T> = [&'a Transition<T>];

/// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
pub fn net_init<T: Scalar, R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<ValueNet<T>, NetError> {
    let mut net = ValueNet::zeros(dims)?;
    for layer in &mut net.layers {
        let bound = 1.0 / (layer.in_dim as f64).sqrt();
        for w in &mut layer.weights {
            *w = T::of(rng.gen_range(-bound..bound));
        }
    }
    Ok(net)
}

impl<T: Scalar> ValueNet<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self, NetError> {
        if dims.len() < 2 {
            return Err(NetError::TooFewLayers);
        }
        if dims.contains(&0) {
            return Err(NetError::Checkpoint("zero-width layer".into()));
        }
        let layers: Vec<Layer<T>> = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            dims: dims.to_vec(),
            rms_accum: layers.clone(),
            layers,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn rms_accum(&self) -> &[Layer<T>] {
        &self.rms_accum
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters in layer order, weights before biases.
    pub fn to_flat(&self) -> Vec<T> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
    }

    /// Q-values for one state.
    pub fn forward(&self, s: &[T]) -> Result<Vec<T>, NetError> {
        if s.len() != self.input_dim() {
            return Err(NetError::DimMismatch {
                expected: self.input_dim(),
                got: s.len(),
            });
        }
        Ok(self.forward_batch(s, 1))
    }

    /// Q-values for `batch` states laid out row by row.
    pub fn forward_batch(&self, xs: &[T], batch: usize) -> Vec<T> {
        let mut acts = self.forward_cached(xs, batch);
        acts.pop().unwrap()
    }

    /// Activations of every layer, input included; hidden layers post-ReLU.
    fn forward_cached(&self, xs: &[T], batch: usize) -> Vec<Vec<T>> {
        debug_assert_eq!(xs.len(), batch * self.input_dim());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(xs.to_vec());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (layer.in_dim, layer.out_dim);
            let mut z = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                z.extend_from_slice(&layer.biases);
            }
            let x = acts.last().unwrap();
            T::gemm(
                batch, n_in, n_out, T::one(), x, n_in as isize, 1, &layer.weights, n_out as isize, 1,
                T::one(), &mut z, n_out as isize, 1,
            );
            if li != last {
                for v in &mut z {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Gradient of `sum_b 0.5 * dq[b]^2`-style losses: backpropagates
    /// `d loss / d output` (`batch x out`) through cached activations.
    fn backward(&self, acts: &[Vec<T>], d_out: Vec<T>, batch: usize) -> Gradient<T> {
        let mut grads: Vec<Layer<T>> = self.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect();
        let mut delta = d_out;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (n_in, n_out) = (layer.in_dim, layer.out_dim);
            let x = &acts[li];
            let g = &mut grads[li];
            // dW = X^T * delta
            T::gemm(
                n_in, batch, n_out, T::one(), x, 1, n_in as isize, &delta, n_out as isize, 1,
                T::zero(), &mut g.weights, n_out as isize, 1,
            );
            for row in delta.chunks_exact(n_out) {
                for (b, &d) in g.biases.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if li > 0 {
                // dX = delta * W^T, masked by the ReLU that produced X
                let mut dx = vec![T::zero(); batch * n_in];
                T::gemm(
                    batch, n_out, n_in, T::one(), &delta, n_out as isize, 1, &layer.weights, 1, n_out as isize,
                    T::zero(), &mut dx, n_in as isize, 1,
                );
                for (d, &a) in dx.iter_mut().zip(x.iter()) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
                delta = dx;
            }
        }
        Gradient { layers: grads }
    }

    /// Checkpoint bytes: magic, version, dtype, dims, then weights/biases and
    /// RMSProp accumulators layer by layer, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 2 * self.param_count() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(T::DTYPE_TAG);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for layers in [&self.layers, &self.rms_accum] {
            for l in layers.iter() {
                for &v in l.weights.iter().chain(&l.biases) {
                    v.write_le(&mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let bad = |m: &str| NetError::Checkpoint(m.to_string());
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8], NetError> {
            if cur.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(NetError::Checkpoint(format!("unsupported version {version}")));
        }
        let tag = take(1)?[0];
        if tag != T::DTYPE_TAG {
            return Err(NetError::Checkpoint(format!(
                "stored with {tag}-byte scalars, loading as {}-byte",
                T::DTYPE_TAG
            )));
        }
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if n > 64 {
            return Err(bad("implausible layer count"));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            dims.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let mut net = Self::zeros(&dims)?;
        for layers in [&mut net.layers, &mut net.rms_accum] {
            for l in layers.iter_mut() {
                for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                    *v = T::read_le(take(T::BYTES)?);
                }
            }
        }
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn flatten<T: Scalar>(layers: &[Layer<T>]) -> Vec<T> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

fn stack_states<T: Scalar, F: Fn(&Transition<T>) -> &[T]>(batch: &Minibatch<'_, T>, pick: F) -> Vec<T> {
    let mut out = Vec::with_capacity(batch.len() * pick(batch[0]).len());
    for t in batch {
        out.extend_from_slice(pick(t));
    }
    out
}

/// TD targets `y = r` (terminal) or `r + gamma * Q_target(s', a*)`, with `a*`
/// from the online net when `ddqn`, else from the target net.
pub fn td_targets<T: Scalar>(
    online: &ValueNet<T>,
    target: &ValueNet<T>,
    batch: &Minibatch<'_, T>,
    gamma: T,
    ddqn: bool,
) -> Vec<T> {
    if batch.is_empty() {
        return Vec::new();
    }
    let n_out = target.output_dim();
    let next = stack_states(batch, |t| &t.next_state);
    let q_target = target.forward_batch(&next, batch.len());
    let q_select = if ddqn { online.forward_batch(&next, batch.len()) } else { q_target.clone() };
    batch
        .iter()
        .enumerate()
        .map(|(b, t)| {
            if t.terminal {
                t.reward
            } else {
                let row = b * n_out..(b + 1) * n_out;
                let a_star = argmax(&q_select[row.clone()]);
                t.reward + gamma * q_target[row][a_star]
            }
        })
        .collect()
}

/// Mean over the batch of `0.5 * (y - Q(s, a))^2` for fixed targets.
pub fn td_loss<T: Scalar>(online: &ValueNet<T>, batch: &Minibatch<'_, T>, targets: &[T]) -> T {
    if batch.is_empty() {
        return T::zero();
    }
    let n_out = online.output_dim();
    let states = stack_states(batch, |t| &t.state);
    let q = online.forward_batch(&states, batch.len());
    let half = T::of(0.5);
    let sum: T = batch
        .iter()
        .enumerate()
        .map(|(b, t)| {
            let e = targets[b] - q[b * n_out + t.action];
            half * e * e
        })
        .sum();
    sum / T::of(batch.len() as f64)
}

/// Gradient of [`td_loss`] w.r.t. the online parameters, targets held constant.
/// Returns the gradient and the loss value.
pub fn td_gradient<T: Scalar>(
    online: &ValueNet<T>,
    target: &ValueNet<T>,
    batch: &Minibatch<'_, T>,
    gamma: T,
    ddqn: bool,
) -> (Gradient<T>, T) {
    let targets = td_targets(online, target, batch, gamma, ddqn);
    td_gradient_with_targets(online, batch, &targets)
}

pub fn td_gradient_with_targets<T: Scalar>(
    online: &ValueNet<T>,
    batch: &Minibatch<'_, T>,
    targets: &[T],
) -> (Gradient<T>, T) {
    let n = batch.len();
    if n == 0 {
        let zero = Gradient {
            layers: online.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect(),
        };
        return (zero, T::zero());
    }
    let n_out = online.output_dim();
    let states = stack_states(batch, |t| &t.state);
    let acts = online.forward_cached(&states, n);
    let q = acts.last().unwrap();
    let inv_n = T::one() / T::of(n as f64);
    let mut d_out = vec![T::zero(); n * n_out];
    let mut loss = T::zero();
    for (b, t) in batch.iter().enumerate() {
        let e = q[b * n_out + t.action] - targets[b];
        loss += T::of(0.5) * e * e;
        d_out[b * n_out + t.action] = e * inv_n;
    }
    (online.backward(&acts, d_out, n), loss * inv_n)
}

/// `acc = rho*acc + (1-rho)*g^2; theta -= lr * g / (sqrt(acc) + eps)`.
pub fn rmsprop_step<T: Scalar>(net: &mut ValueNet<T>, grad: &Gradient<T>, lr: T) {
    let rho = T::of(RMS_DECAY);
    let one_minus = T::one() - rho;
    let eps = T::of(RMS_EPS);
    for ((layer, acc), g) in net.layers.iter_mut().zip(net.rms_accum.iter_mut()).zip(&grad.layers) {
        let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
        let accs = acc.weights.iter_mut().chain(acc.biases.iter_mut());
        let gs = g.weights.iter().chain(&g.biases);
        for ((p, a), &gv) in params.zip(accs).zip(gs) {
            *a = rho * *a + one_minus * gv * gv;
            *p -= lr * gv / (a.sqrt() + eps);
        }
    }
}

/// Deep copy for the target network.
pub fn copy_into_target<T: Scalar>(online: &ValueNet<T>) -> ValueNet<T> {
    online.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::Rng;

    #[test]
    fn parameter_count_of_reference_shape() {
        let net: ValueNet<f64> = ValueNet::zeros(&[5, 128, 128, 5]).unwrap();
        assert_eq!(net.param_count(), 5 * 128 + 128 + 128 * 128 + 128 + 128 * 5 + 5);
        assert_eq!(net.param_count(), 17_925);
    }

    #[test]
    fn init_is_reproducible_and_finite() {
        let a: ValueNet<f32> = net_init(&[35, 64, 64, 5], &mut substream(3, Stream::NetInit)).unwrap();
        let b: ValueNet<f32> = net_init(&[35, 64, 64, 5], &mut substream(3, Stream::NetInit)).unwrap();
        assert_eq!(a, b);
        let q = a.forward(&[0.7; 35]).unwrap();
        assert!(q.iter().all(|x| x.is_finite()));
        assert!(a.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        let bound = 1.0 / 35f32.sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net: ValueNet<f64> = ValueNet::zeros(&[4, 8, 3]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
        assert!(matches!(net.forward(&[1.0]), Err(NetError::DimMismatch { expected: 4, got: 1 })));
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut net: ValueNet<f64> = ValueNet::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            net.layers_mut()[0].weights[i * 3 + i] = 1.0;
        }
        assert_eq!(net.forward(&[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn hand_computed_two_two_two() {
        // hidden = relu(W1^T x + b1), out = W2^T hidden + b2
        let mut net: ValueNet<f64> = ValueNet::zeros(&[2, 2, 2]).unwrap();
        {
            let l = &mut net.layers_mut()[0];
            l.weights = vec![0.5, -1.0, 2.0, 0.25]; // w[in][out]
            l.biases = vec![0.1, -0.2];
        }
        {
            let l = &mut net.layers_mut()[1];
            l.weights = vec![1.5, -0.5, 3.0, 2.0];
            l.biases = vec![0.05, 0.0];
        }
        let x = [1.0, 2.0];
        // h0 = 0.5*1 + 2*2 + 0.1 = 4.6 ; h1 = -1*1 + 0.25*2 - 0.2 = -0.7 -> 0
        // o0 = 1.5*4.6 + 3*0 + 0.05 = 6.95 ; o1 = -0.5*4.6 + 2*0 = -2.3
        let q = net.forward(&x).unwrap();
        assert!((q[0] - 6.95).abs() < 1e-12);
        assert!((q[1] + 2.3).abs() < 1e-12);
    }

    fn batch_for(net_in: usize, n: usize, seed: u64) -> Vec<Transition<f64>> {
        let mut rng = substream(seed, Stream::ReplaySampling);
        (0..n)
            .map(|_| Transition {
                state: (0..net_in).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: rng.gen_range(0..3),
                reward: rng.gen_range(0.0..5.0),
                next_state: (0..net_in).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                terminal: rng.gen_bool(0.2),
            })
            .collect()
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let online: ValueNet<f64> = net_init(&[4, 8, 3], &mut substream(1, Stream::NetInit)).unwrap();
        let target: ValueNet<f64> = net_init(&[4, 8, 3], &mut substream(2, Stream::NetInit)).unwrap();
        let data = batch_for(4, 16, 5);
        let batch: Vec<&Transition<f64>> = data.iter().collect();
        let y = td_targets(&online, &target, &batch, 0.0, true);
        assert_eq!(y, data.iter().map(|t| t.reward).collect::<Vec<_>>());
    }

    #[test]
    fn fixed_point_has_zero_gradient() {
        let online: ValueNet<f64> = net_init(&[4, 8, 3], &mut substream(1, Stream::NetInit)).unwrap();
        let data = batch_for(4, 16, 6);
        let batch: Vec<&Transition<f64>> = data.iter().collect();
        let y: Vec<f64> = data.iter().map(|t| online.forward(&t.state).unwrap()[t.action]).collect();
        let (g, loss) = td_gradient_with_targets(&online, &batch, &y);
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn ddqn_equals_dqn_when_nets_coincide() {
        let online: ValueNet<f64> = net_init(&[4, 8, 3], &mut substream(1, Stream::NetInit)).unwrap();
        let target = copy_into_target(&online);
        let data = batch_for(4, 16, 7);
        let batch: Vec<&Transition<f64>> = data.iter().collect();
        let (a, la) = td_gradient(&online, &target, &batch, 0.5, true);
        let (b, lb) = td_gradient(&online, &target, &batch, 0.5, false);
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let online: ValueNet<f64> = net_init(&[4, 6, 5, 3], &mut substream(8, Stream::NetInit)).unwrap();
        let target: ValueNet<f64> = net_init(&[4, 6, 5, 3], &mut substream(9, Stream::NetInit)).unwrap();
        let data = batch_for(4, 8, 10);
        let batch: Vec<&Transition<f64>> = data.iter().collect();
        let y = td_targets(&online, &target, &batch, 0.5, true);
        let (g, _) = td_gradient_with_targets(&online, &batch, &y);
        let flat = online.to_flat();
        let analytic = g.to_flat();
        let h = 1e-6;
        let mut probe = online.clone();
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += h;
            probe.set_flat(&p);
            let up = td_loss(&probe, &batch, &y);
            p[i] -= 2.0 * h;
            probe.set_flat(&p);
            let down = td_loss(&probe, &batch, &y);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-6 * analytic[i].abs().max(1.0), "param {i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn rmsprop_edge_cases() {
        let mut net: ValueNet<f64> = net_init(&[3, 4, 2], &mut substream(1, Stream::NetInit)).unwrap();
        let before = net.to_flat();
        let zero = Gradient {
            layers: net.layers().iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect(),
        };
        rmsprop_step(&mut net, &zero, 0.1);
        assert_eq!(net.to_flat(), before);

        let mut ones = zero.clone();
        for l in &mut ones.layers {
            l.weights.iter_mut().for_each(|w| *w = 1.0);
            l.biases.iter_mut().for_each(|w| *w = 1.0);
        }
        let mut frozen = net.clone();
        rmsprop_step(&mut frozen, &ones, 0.0);
        assert_eq!(frozen.to_flat(), before);

        // accumulator -> 1, so the step -> lr / (1 + eps)
        let lr = 0.01;
        let mut prev = net.to_flat();
        let mut last_step = 0.0;
        for _ in 0..2000 {
            rmsprop_step(&mut net, &ones, lr);
            let now = net.to_flat();
            last_step = prev[0] - now[0];
            prev = now;
        }
        assert!((last_step - lr / (1.0 + RMS_EPS)).abs() < 1e-12, "{last_step}");
    }

    #[test]
    fn target_copy_is_detached() {
        let mut online: ValueNet<f64> = net_init(&[3, 4, 2], &mut substream(1, Stream::NetInit)).unwrap();
        let target = copy_into_target(&online);
        let s = [0.2, -0.4, 0.9];
        assert_eq!(online.forward(&s).unwrap(), target.forward(&s).unwrap());
        let snapshot = target.clone();
        online.layers_mut()[0].weights[0] += 1.0;
        assert_eq!(target, snapshot);
        assert_eq!(copy_into_target(&copy_into_target(&target)), target);
    }

    #[test]
    fn checkpoint_roundtrip_and_rejection() {
        let mut net: ValueNet<f32> = net_init(&[5, 7, 3], &mut substream(4, Stream::NetInit)).unwrap();
        net.rms_accum[0].weights[2] = 0.125;
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..4], b"GFQN");
        assert_eq!(ValueNet::<f32>::from_bytes(&bytes).unwrap(), net);
        assert!(ValueNet::<f64>::from_bytes(&bytes).is_err());
        assert!(ValueNet::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.bin");
        net.save(&p).unwrap();
        assert_eq!(ValueNet::<f32>::load(&p).unwrap(), net);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    proptest! {
        #[test]
        fn relu_net_positively_homogeneous_without_bias(
            seed in any::<u64>(), c in 0.01f64..100.0,
            x in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let net: ValueNet<f64> = net_init(&[4, 6, 6, 2], &mut substream(seed, Stream::NetInit)).unwrap();
            let a = net.forward(&x).unwrap();
            let cx: Vec<f64> = x.iter().map(|v| v * c).collect();
            let b = net.forward(&cx).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((c * u - v).abs() <= 1e-9 * (c * u).abs().max(1e-9));
            }
        }

        #[test]
        fn rms_accumulators_stay_nonnegative(gs in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let mut net: ValueNet<f64> = ValueNet::zeros(&[1, 1]).unwrap();
            for g in gs {
                let grad = Gradient { layers: vec![Layer { in_dim: 1, out_dim: 1, weights: vec![g], biases: vec![-g] }] };
                rmsprop_step(&mut net, &grad, 0.01);
                prop_assert!(net.rms_accum().iter().all(|l| l.weights.iter().chain(&l.biases).all(|&a| a >= 0.0)));
            }
        }
    }
}
