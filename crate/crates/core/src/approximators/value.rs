use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::io::NamedTensor;

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian CDF.
fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * INV_SQRT_2)
}

/// Exact GELU, `x Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * phi_cdf(x)
}

pub fn gelu_derivative(x: f64) -> f64 {
    phi_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// MLP value function over one-hot encoded states.
///
/// Parameters live in one flat vector, layer by layer: the `(out × in)`
/// weight matrix in row-major order followed by the `out` biases. The last
/// layer is linear with a single output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpValueFunction {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

struct Cache {
    /// Pre-activations of every hidden layer, batch-major.
    pre: Vec<Array2<f64>>,
    /// Hidden activations (post-GELU).
    post: Vec<Array2<f64>>,
    out: Array1<f64>,
}

impl MlpValueFunction {
    fn layout(sizes: &[usize]) -> Vec<(usize, usize, usize)> {
        // (weight offset, in, out)
        let mut offset = 0;
        sizes
            .windows(2)
            .map(|w| {
                let entry = (offset, w[0], w[1]);
                offset += w[0] * w[1] + w[1];
                entry
            })
            .collect()
    }

    fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Xavier-uniform weights and zero biases drawn from `rng`. With
    /// `zero_output` the last layer starts at zero so `V ≡ 0`.
    pub fn new<R: Rng + ?Sized>(
        n_states: usize,
        hidden: &[usize],
        zero_output: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if n_states == 0 || hidden.contains(&0) {
            return Err(Error::input("layer widths must be positive"));
        }
        let mut sizes = vec![n_states];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = vec![0.0; Self::param_count(&sizes)];
        let layers = Self::layout(&sizes);
        let last = layers.len() - 1;
        for (l, &(off, fan_in, fan_out)) in layers.iter().enumerate() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params[off..off + fan_in * fan_out] {
                let x = rng.random_range(-bound..bound);
                *w = if zero_output && l == last { 0.0 } else { x };
            }
        }
        Ok(Self { sizes, params })
    }

    pub fn from_params(n_states: usize, hidden: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut sizes = vec![n_states];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        check_len("value parameters", Self::param_count(&sizes), params.len())?;
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite value parameter".into()));
        }
        Ok(Self { sizes, params })
    }

    pub fn n_states(&self) -> usize {
        self.sizes[0]
    }

    pub fn hidden(&self) -> &[usize] {
        &self.sizes[1..self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, off: usize, fan_in: usize, fan_out: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((fan_out, fan_in), &self.params[off..off + fan_in * fan_out])
            .expect("layout matches parameter length")
    }

    fn bias(&self, off: usize, fan_in: usize, fan_out: usize) -> &[f64] {
        let start = off + fan_in * fan_out;
        &self.params[start..start + fan_out]
    }

    fn check_states(&self, states: &[usize]) -> Result<()> {
        match states.iter().find(|&&s| s >= self.n_states()) {
            Some(s) => Err(Error::input(format!("state {s} out of range 0..{}", self.n_states()))),
            None => Ok(()),
        }
    }

    fn forward_cached(&self, states: &[usize]) -> Cache {
        let layers = Self::layout(&self.sizes);
        let batch = states.len();
        let (off0, in0, out0) = layers[0];
        let w0 = self.weight(off0, in0, out0);
        let b0 = self.bias(off0, in0, out0);
        // one-hot input selects a column of the first weight matrix
        let mut z = Array2::zeros((batch, out0));
        for (row, &s) in states.iter().enumerate() {
            for j in 0..out0 {
                z[(row, j)] = w0[(j, s)] + b0[j];
            }
        }
        let mut pre = Vec::with_capacity(layers.len() - 1);
        let mut post = Vec::with_capacity(layers.len() - 1);
        let mut h = z.mapv(gelu);
        pre.push(z);
        for &(off, fan_in, fan_out) in &layers[1..] {
            let mut z = h.dot(&self.weight(off, fan_in, fan_out).t());
            let b = self.bias(off, fan_in, fan_out);
            for mut row in z.rows_mut() {
                for (x, bj) in row.iter_mut().zip(b) {
                    *x += bj;
                }
            }
            post.push(h);
            if pre.len() == layers.len() - 1 {
                return Cache {
                    pre,
                    post,
                    out: z.column(0).to_owned(),
                };
            }
            h = z.mapv(gelu);
            pre.push(z);
        }
        unreachable!("network has at least one hidden layer")
    }

    /// Values of the listed states in one batched pass.
    pub fn forward_batch(&self, states: &[usize]) -> Result<Vec<f64>> {
        self.check_states(states)?;
        Ok(self.forward_cached(states).out.to_vec())
    }

    pub fn value(&self, s: usize) -> Result<f64> {
        Ok(self.forward_batch(&[s])?[0])
    }

    /// Values of every state, in index order.
    pub fn values(&self) -> Vec<f64> {
        let states: Vec<usize> = (0..self.n_states()).collect();
        self.forward_cached(&states).out.to_vec()
    }

    /// `Σ_i coeffs[i] ∇_w V(states[i], w)` by one batched backward pass.
    pub fn weighted_gradient(&self, states: &[usize], coeffs: &[f64]) -> Result<Vec<f64>> {
        check_len("gradient coefficients", states.len(), coeffs.len())?;
        let coeffs = coeffs.to_vec();
        Ok(self.gradient_from_outputs(states, |_| coeffs)?.1)
    }

    /// Forward pass on `states`, then a backward pass whose per-state
    /// coefficients are computed from the outputs by `coeffs`. Returns the
    /// outputs and `Σ_i c_i ∇_w V(states[i], w)`.
    pub fn gradient_from_outputs<F>(&self, states: &[usize], coeffs: F) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        self.check_states(states)?;
        let cache = self.forward_cached(states);
        let outputs = cache.out.to_vec();
        let coeffs = coeffs(&outputs);
        check_len("gradient coefficients", states.len(), coeffs.len())?;
        Ok((outputs, self.backward(&cache, states, coeffs)))
    }

    fn backward(&self, cache: &Cache, states: &[usize], coeffs: Vec<f64>) -> Vec<f64> {
        let layers = Self::layout(&self.sizes);
        let mut grad = vec![0.0; self.params.len()];
        let mut delta =
            Array2::from_shape_vec((states.len(), 1), coeffs).expect("column vector shape");
        for l in (1..layers.len()).rev() {
            let (off, fan_in, fan_out) = layers[l];
            let h = &cache.post[l - 1];
            let gw = delta.t().dot(h);
            for (dst, src) in grad[off..off + fan_in * fan_out].iter_mut().zip(gw.iter()) {
                *dst = *src;
            }
            let gb = delta.sum_axis(Axis(0));
            let bstart = off + fan_in * fan_out;
            grad[bstart..bstart + fan_out].copy_from_slice(gb.as_slice().expect("contiguous"));
            let back = delta.dot(&self.weight(off, fan_in, fan_out));
            let z = &cache.pre[l - 1];
            delta = back * z.mapv(gelu_derivative);
        }
        let (off0, in0, out0) = layers[0];
        for (row, &s) in states.iter().enumerate() {
            for j in 0..out0 {
                grad[off0 + j * in0 + s] += delta[(row, j)];
            }
        }
        let gb = delta.sum_axis(Axis(0));
        let bstart = off0 + in0 * out0;
        grad[bstart..bstart + out0].copy_from_slice(gb.as_slice().expect("contiguous"));
        grad
    }

    /// `∇_w V(s, w)`.
    pub fn value_gradient(&self, s: usize) -> Result<Vec<f64>> {
        self.weighted_gradient(&[s], &[1.0])
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (l, (off, fan_in, fan_out)) in Self::layout(&self.sizes).into_iter().enumerate() {
            out.push(NamedTensor {
                name: format!("layer{l}.weight"),
                shape: vec![fan_out, fan_in],
                data: self.params[off..off + fan_in * fan_out].to_vec(),
            });
            out.push(NamedTensor {
                name: format!("layer{l}.bias"),
                shape: vec![fan_out],
                data: self.bias(off, fan_in, fan_out).to_vec(),
            });
        }
        out
    }

    /// Rebuilds the network from `layer{l}.weight` / `layer{l}.bias` tensors.
    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let mut sizes = Vec::new();
        let mut params = Vec::new();
        for l in 0.. {
            let find = |name: String| tensors.iter().find(|t| t.name == name);
            let Some(w) = find(format!("layer{l}.weight")) else {
                break;
            };
            let b = find(format!("layer{l}.bias"))
                .ok_or_else(|| Error::Structure(format!("missing layer{l}.bias")))?;
            if w.shape.len() != 2 || b.shape != [w.shape[0]] {
                return Err(Error::Structure(format!("layer {l} has inconsistent shapes")));
            }
            if sizes.is_empty() {
                sizes.push(w.shape[1]);
            } else if sizes.last() != Some(&w.shape[1]) {
                return Err(Error::Structure(format!("layer {l} input width mismatch")));
            }
            sizes.push(w.shape[0]);
            params.extend_from_slice(&w.data);
            params.extend_from_slice(&b.data);
        }
        if sizes.len() < 3 || sizes.last() != Some(&1) {
            return Err(Error::Structure("need hidden layers and a scalar output".into()));
        }
        Self::from_params(sizes[0], &sizes[1..sizes.len() - 1], params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::seeded_rng;

    fn net(hidden: &[usize]) -> MlpValueFunction {
        MlpValueFunction::new(5, hidden, false, &mut seeded_rng(11)).unwrap()
    }

    #[test]
    fn gelu_basics() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        let h = 1e-6;
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn output_bias_only() {
        let mut vf = net(&[4, 4]);
        let n = vf.n_params();
        vf.params_mut().iter_mut().for_each(|p| *p = 0.0);
        vf.params_mut()[n - 1] = 0.7;
        assert!(vf.values().iter().all(|v| *v == 0.7));
        let g = vf.value_gradient(2).unwrap();
        assert_eq!(g[n - 1], 1.0);
    }

    #[test]
    fn zero_output_init_is_zero_everywhere() {
        let vf = MlpValueFunction::new(16, &[8, 8, 8], true, &mut seeded_rng(0)).unwrap();
        assert!(vf.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let vf = net(&[8, 8]);
        assert_eq!(vf.value(3).unwrap().to_bits(), vf.value(3).unwrap().to_bits());
        let batch = vf.values();
        for s in 0..5 {
            assert!((batch[s] - vf.value(s).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn input_gradient_is_one_hot_sparse() {
        let vf = net(&[6, 6]);
        let g = vf.value_gradient(3).unwrap();
        for j in 0..6 {
            for s in 0..5 {
                if s != 3 {
                    assert_eq!(g[j * 5 + s], 0.0);
                }
            }
        }
        assert!((0..6).any(|j| g[j * 5 + 3] != 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let vf = net(&[6, 7, 5]);
        let h = 1e-5;
        let g = vf.value_gradient(1).unwrap();
        for i in 0..vf.n_params() {
            let mut plus = vf.clone();
            plus.params_mut()[i] += h;
            let mut minus = vf.clone();
            minus.params_mut()[i] -= h;
            let fd = (plus.value(1).unwrap() - minus.value(1).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-7 + 1e-4 * fd.abs(), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn weighted_gradient_is_linear() {
        let vf = net(&[6, 6]);
        let combo = vf.weighted_gradient(&[0, 4], &[2.0, -0.5]).unwrap();
        let g0 = vf.value_gradient(0).unwrap();
        let g4 = vf.value_gradient(4).unwrap();
        for i in 0..combo.len() {
            assert!((combo[i] - (2.0 * g0[i] - 0.5 * g4[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let vf = net(&[6, 3]);
        let back = MlpValueFunction::from_tensors(&vf.to_tensors()).unwrap();
        assert_eq!(vf, back);
    }
}
