use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{
    axpy, col2im_add, dot, conv_forward, im2col, logit_gradient, maxpool2, maxpool2_backward, relu_backward,
    relu_inplace, softmax2,
};
use super::scalar::{gemm, MatRef, Scalar};
use super::tensor::Tensor;
use super::NnError;

pub const KERNEL: usize = 5;
pub const CLASSES: usize = 2;

/// Layer sizes of the two-convolution pixel classifier.
///
/// Wiring: conv 5x5 (valid) -> ReLU -> maxpool 2x2 -> conv 5x5 -> ReLU ->
/// maxpool 2x2 -> fully connected -> ReLU -> 2 outputs -> softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub patch_size: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub fc_units: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { patch_size: 47, conv1_filters: 48, conv2_filters: 48, fc_units: 200 }
    }
}

impl Architecture {
    pub fn with_patch_size(patch_size: usize) -> Self {
        Architecture { patch_size, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.patch_size < 21 || self.patch_size.is_multiple_of(2) {
            return Err(NnError::InvalidArchitecture(format!(
                "patch_size must be odd and >= 21, got {}",
                self.patch_size
            )));
        }
        if self.conv1_filters == 0 || self.conv2_filters == 0 || self.fc_units == 0 {
            return Err(NnError::InvalidArchitecture("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn conv1_size(&self) -> usize {
        self.patch_size - KERNEL + 1
    }

    pub fn pool1_size(&self) -> usize {
        self.conv1_size() / 2
    }

    pub fn conv2_size(&self) -> usize {
        self.pool1_size() - KERNEL + 1
    }

    pub fn pool2_size(&self) -> usize {
        self.conv2_size() / 2
    }

    /// Length of the vector entering the fully connected layer.
    pub fn flattened_dim(&self) -> usize {
        self.conv2_filters * self.pool2_size() * self.pool2_size()
    }

    /// Shapes of the parameter arrays in checkpoint order.
    pub fn param_shapes(&self) -> [Vec<usize>; 8] {
        [
            vec![self.conv1_filters, 1, KERNEL, KERNEL],
            vec![self.conv1_filters],
            vec![self.conv2_filters, self.conv1_filters, KERNEL, KERNEL],
            vec![self.conv2_filters],
            vec![self.fc_units, self.flattened_dim()],
            vec![self.fc_units],
            vec![CLASSES, self.fc_units],
            vec![CLASSES],
        ]
    }
}

pub const PARAM_NAMES: [&str; 8] = [
    "conv1_weights",
    "conv1_bias",
    "conv2_weights",
    "conv2_bias",
    "fc_weights",
    "fc_bias",
    "out_weights",
    "out_bias",
];

/// One array per weight/bias; used for weights, velocities and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub conv1_weights: Tensor<T>,
    pub conv1_bias: Tensor<T>,
    pub conv2_weights: Tensor<T>,
    pub conv2_bias: Tensor<T>,
    pub fc_weights: Tensor<T>,
    pub fc_bias: Tensor<T>,
    pub out_weights: Tensor<T>,
    pub out_bias: Tensor<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        let [a, b, c, d, e, f, g, h] = arch.param_shapes();
        Params {
            conv1_weights: Tensor::zeros(&a),
            conv1_bias: Tensor::zeros(&b),
            conv2_weights: Tensor::zeros(&c),
            conv2_bias: Tensor::zeros(&d),
            fc_weights: Tensor::zeros(&e),
            fc_bias: Tensor::zeros(&f),
            out_weights: Tensor::zeros(&g),
            out_bias: Tensor::zeros(&h),
        }
    }

    /// Arrays in the fixed order of [`PARAM_NAMES`].
    pub fn arrays(&self) -> [&Tensor<T>; 8] {
        [
            &self.conv1_weights,
            &self.conv1_bias,
            &self.conv2_weights,
            &self.conv2_bias,
            &self.fc_weights,
            &self.fc_bias,
            &self.out_weights,
            &self.out_bias,
        ]
    }

    pub fn arrays_mut(&mut self) -> [&mut Tensor<T>; 8] {
        [
            &mut self.conv1_weights,
            &mut self.conv1_bias,
            &mut self.conv2_weights,
            &mut self.conv2_bias,
            &mut self.fc_weights,
            &mut self.fc_bias,
            &mut self.out_weights,
            &mut self.out_bias,
        ]
    }

    pub fn from_arrays(arrays: Vec<Tensor<T>>) -> Self {
        let mut it = arrays.into_iter();
        let mut next = || it.next().expect("eight parameter arrays");
        Params {
            conv1_weights: next(),
            conv1_bias: next(),
            conv2_weights: next(),
            conv2_bias: next(),
            fc_weights: next(),
            fc_bias: next(),
            out_weights: next(),
            out_bias: next(),
        }
    }

    pub fn same_shapes(&self, other: &Params<T>) -> bool {
        self.arrays().iter().zip(other.arrays()).all(|(a, b)| a.shape() == b.shape())
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.all_finite())
    }

    pub fn add_scaled(&mut self, other: &Params<T>, alpha: T) {
        for (a, b) in self.arrays_mut().into_iter().zip(other.arrays()) {
            a.add_scaled(b, alpha);
        }
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params::from_arrays(self.arrays().iter().map(|a| a.cast()).collect())
    }
}

/// Square grayscale input window, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    size: usize,
    pixels: Vec<f32>,
}

impl Patch {
    pub fn new(size: usize, pixels: Vec<f32>) -> Result<Self, NnError> {
        if pixels.len() != size * size {
            return Err(NnError::Shape {
                what: "patch",
                expected: vec![size, size],
                got: vec![pixels.len()],
            });
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NnError::InvalidPatch(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Patch { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.size + col]
    }
}

/// Two-convolution-layer pixel classifier with momentum state.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    pub params: Params<T>,
    pub velocity: Params<T>,
    pub validation_accuracy: f64,
    pub revision: u64,
}

/// The model trained and served at `f32` precision.
pub type CnnModel = Network<f32>;

/// Intermediate activations kept for the backward pass.
struct Trace<T> {
    col1: Vec<T>,
    act1: Vec<T>,
    arg1: Vec<u32>,
    col2: Vec<T>,
    act2: Vec<T>,
    arg2: Vec<u32>,
    flat: Vec<T>,
    hidden: Vec<T>,
    probs: [T; 2],
    logits: [T; 2],
}

impl<T: Scalar> Network<T> {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&arch);
        let k2 = KERNEL * KERNEL;
        let fans = [
            (k2, arch.conv1_filters * k2),
            (arch.conv1_filters * k2, arch.conv2_filters * k2),
            (arch.flattened_dim(), arch.fc_units),
            (arch.fc_units, CLASSES),
        ];
        let weights = [
            &mut params.conv1_weights,
            &mut params.conv2_weights,
            &mut params.fc_weights,
            &mut params.out_weights,
        ];
        for (w, (fan_in, fan_out)) in weights.into_iter().zip(fans) {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w.data_mut() {
                *v = T::from_f64(rng.random_range(-limit..limit));
            }
        }
        Ok(Network {
            arch,
            params,
            velocity: Params::zeros(&arch),
            validation_accuracy: 0.0,
            revision: 0,
        })
    }

    /// All weights and biases zero.
    pub fn zeroed(arch: Architecture) -> Result<Self, NnError> {
        arch.validate()?;
        Ok(Network {
            arch,
            params: Params::zeros(&arch),
            velocity: Params::zeros(&arch),
            validation_accuracy: 0.0,
            revision: 0,
        })
    }

    /// Assembles a network from explicit arrays, checking every shape.
    pub fn from_parts(
        arch: Architecture,
        params: Params<T>,
        velocity: Params<T>,
        validation_accuracy: f64,
        revision: u64,
    ) -> Result<Self, NnError> {
        arch.validate()?;
        for ((p, v), (shape, name)) in params
            .arrays()
            .iter()
            .zip(velocity.arrays())
            .zip(arch.param_shapes().iter().zip(PARAM_NAMES))
        {
            for t in [p, &v] {
                if t.shape() != shape.as_slice() {
                    return Err(NnError::Shape {
                        what: name,
                        expected: shape.clone(),
                        got: t.shape().to_vec(),
                    });
                }
            }
        }
        Ok(Network { arch, params, velocity, validation_accuracy, revision })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn patch_size(&self) -> usize {
        self.arch.patch_size
    }

    /// Converts every array to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            arch: self.arch,
            params: self.params.cast(),
            velocity: self.velocity.cast(),
            validation_accuracy: self.validation_accuracy,
            revision: self.revision,
        }
    }

    fn check_patch(&self, patch: &Patch) -> Result<(), NnError> {
        if patch.size != self.arch.patch_size {
            return Err(NnError::Shape {
                what: "patch",
                expected: vec![self.arch.patch_size, self.arch.patch_size],
                got: vec![patch.size, patch.size],
            });
        }
        Ok(())
    }

    /// Class probabilities `[non-membrane, membrane]`.
    pub fn forward(&self, patch: &Patch) -> Result<[T; 2], NnError> {
        self.check_patch(patch)?;
        Ok(self.trace(patch).probs)
    }

    fn trace(&self, patch: &Patch) -> Trace<T> {
        let a = &self.arch;
        let p = &self.params;
        let input: Vec<T> = patch.pixels.iter().map(|&v| T::from_f64(v as f64)).collect();

        let (s0, s1, s2) = (a.patch_size, a.conv1_size(), a.conv2_size());
        let mut col1 = Vec::new();
        im2col(&input, 1, s0, s0, KERNEL, &mut col1);
        let mut act1 = conv_forward(p.conv1_weights.data(), p.conv1_bias.data(), &col1, a.conv1_filters, s1 * s1);
        relu_inplace(&mut act1);
        let (pool1, arg1) = maxpool2(&act1, a.conv1_filters, s1, s1);

        let mut col2 = Vec::new();
        im2col(&pool1, a.conv1_filters, a.pool1_size(), a.pool1_size(), KERNEL, &mut col2);
        let mut act2 = conv_forward(p.conv2_weights.data(), p.conv2_bias.data(), &col2, a.conv2_filters, s2 * s2);
        relu_inplace(&mut act2);
        let (flat, arg2) = maxpool2(&act2, a.conv2_filters, s2, s2);

        let mut hidden: Vec<T> = p
            .fc_weights
            .data()
            .chunks_exact(flat.len())
            .zip(p.fc_bias.data())
            .map(|(row, &b)| b + dot(row, &flat))
            .collect();
        relu_inplace(&mut hidden);

        let ow = p.out_weights.data();
        let mut logits = [p.out_bias.data()[0], p.out_bias.data()[1]];
        for (c, logit) in logits.iter_mut().enumerate() {
            let row = &ow[c * a.fc_units..(c + 1) * a.fc_units];
            *logit += row.iter().zip(&hidden).map(|(&w, &h)| w * h).sum::<T>();
        }
        let probs = softmax2(logits);
        Trace { col1, act1, arg1, col2, act2, arg2, flat, hidden, probs, logits }
    }

    /// Softmax cross-entropy loss and its gradient for every parameter array.
    pub fn backward(&self, patch: &Patch, target: [T; 2]) -> Result<(Params<T>, T), NnError> {
        self.check_patch(patch)?;
        let one_hot = (target[0] == T::one() && target[1] == T::zero())
            || (target[0] == T::zero() && target[1] == T::one());
        if !one_hot {
            return Err(NnError::InvalidTarget);
        }
        let a = &self.arch;
        let p = &self.params;
        let tr = self.trace(patch);
        let mut g = Params::zeros(a);

        // loss = logsumexp(z) - z_y, stable for confident predictions
        let truth = if target[1] == T::one() { 1 } else { 0 };
        let m = tr.logits[0].max(tr.logits[1]);
        let lse = m + ((tr.logits[0] - m).exp() + (tr.logits[1] - m).exp()).ln();
        let loss = lse - tr.logits[truth];

        let dz = logit_gradient(tr.probs, target);
        let h = a.fc_units;
        let ow = p.out_weights.data();
        let mut dhidden = vec![T::zero(); h];
        for c in 0..CLASSES {
            g.out_bias.data_mut()[c] = dz[c];
            let gw = &mut g.out_weights.data_mut()[c * h..(c + 1) * h];
            for j in 0..h {
                gw[j] = dz[c] * tr.hidden[j];
                dhidden[j] += ow[c * h + j] * dz[c];
            }
        }
        relu_backward(&mut dhidden, &tr.hidden);

        let flat_len = tr.flat.len();
        g.fc_bias.data_mut().copy_from_slice(&dhidden);
        let mut dflat = vec![T::zero(); flat_len];
        let rows = p.fc_weights.data().chunks_exact(flat_len);
        let grad_rows = g.fc_weights.data_mut().chunks_exact_mut(flat_len);
        for ((&dh, w_row), g_row) in dhidden.iter().zip(rows).zip(grad_rows) {
            if dh != T::zero() {
                axpy(dh, &tr.flat, g_row);
                axpy(dh, w_row, &mut dflat);
            }
        }

        let s2 = a.conv2_size() * a.conv2_size();
        let mut dact2 = maxpool2_backward(&dflat, &tr.arg2, tr.act2.len());
        relu_backward(&mut dact2, &tr.act2);
        let fan2 = a.conv1_filters * KERNEL * KERNEL;
        gemm(
            MatRef::new(&dact2, a.conv2_filters, s2),
            MatRef::new(&tr.col2, fan2, s2).t(),
            T::zero(),
            g.conv2_weights.data_mut(),
        );
        for (b, row) in g.conv2_bias.data_mut().iter_mut().zip(dact2.chunks(s2)) {
            *b = row.iter().copied().sum();
        }
        let mut dcol2 = vec![T::zero(); fan2 * s2];
        gemm(
            MatRef::new(p.conv2_weights.data(), a.conv2_filters, fan2).t(),
            MatRef::new(&dact2, a.conv2_filters, s2),
            T::zero(),
            &mut dcol2,
        );
        let p1 = a.pool1_size();
        let mut dpool1 = vec![T::zero(); a.conv1_filters * p1 * p1];
        col2im_add(&dcol2, a.conv1_filters, p1, p1, KERNEL, &mut dpool1);

        let s1 = a.conv1_size() * a.conv1_size();
        let mut dact1 = maxpool2_backward(&dpool1, &tr.arg1, tr.act1.len());
        relu_backward(&mut dact1, &tr.act1);
        let fan1 = KERNEL * KERNEL;
        gemm(
            MatRef::new(&dact1, a.conv1_filters, s1),
            MatRef::new(&tr.col1, fan1, s1).t(),
            T::zero(),
            g.conv1_weights.data_mut(),
        );
        for (b, row) in g.conv1_bias.data_mut().iter_mut().zip(dact1.chunks(s1)) {
            *b = row.iter().copied().sum();
        }
        Ok((g, loss))
    }

    /// Mean gradient and mean loss over a minibatch. Per-sample gradients are
    /// computed in parallel and summed in input order, so the result does not
    /// depend on thread scheduling.
    pub fn batch_gradient(&self, batch: &[(Patch, [T; 2])]) -> Result<(Params<T>, T), NnError> {
        let per_sample: Vec<(Params<T>, T)> = batch
            .par_iter()
            .map(|(patch, target)| self.backward(patch, *target))
            .collect::<Result<_, _>>()?;
        let mut total = Params::zeros(&self.arch);
        let mut loss = T::zero();
        for (g, l) in &per_sample {
            total.add_scaled(g, T::one());
            loss += *l;
        }
        let scale = T::one() / T::from_f64(batch.len().max(1) as f64);
        for arr in total.arrays_mut() {
            arr.data_mut().iter_mut().for_each(|v| *v = *v * scale);
        }
        Ok((total, loss * scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_feature_map_sizes() {
        let a = Architecture::default();
        assert_eq!(
            (a.conv1_size(), a.pool1_size(), a.conv2_size(), a.pool2_size()),
            (43, 21, 17, 8)
        );
        assert_eq!(a.flattened_dim(), 3072);
    }

    #[test]
    fn rejects_even_or_small_patches() {
        assert!(Architecture::with_patch_size(20).validate().is_err());
        assert!(Architecture::with_patch_size(22).validate().is_err());
        assert!(Architecture::with_patch_size(19).validate().is_err());
        assert!(Architecture::with_patch_size(21).validate().is_ok());
    }

    #[test]
    fn zero_network_is_indifferent() {
        let net = Network::<f32>::zeroed(Architecture::default()).unwrap();
        let patch = Patch::new(47, vec![0.0; 47 * 47]).unwrap();
        assert_eq!(net.forward(&patch).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn wrong_patch_size_is_a_shape_error() {
        let net = Network::<f32>::new(Architecture::default(), 1).unwrap();
        let patch = Patch::new(21, vec![0.5; 21 * 21]).unwrap();
        assert!(matches!(net.forward(&patch), Err(NnError::Shape { .. })));
        assert!(matches!(net.backward(&patch, [1.0, 0.0]), Err(NnError::Shape { .. })));
    }

    #[test]
    fn init_respects_glorot_bounds_and_zero_bias() {
        let net = Network::<f32>::new(Architecture::default(), 3).unwrap();
        let limit = (6.0f32 / (3072.0 + 200.0)).sqrt();
        assert!(net.params.fc_weights.data().iter().all(|v| v.abs() <= limit));
        assert!(net.params.conv1_bias.data().iter().all(|&v| v == 0.0));
        assert!(net.velocity.same_shapes(&net.params));
    }

    #[test]
    fn non_one_hot_target_rejected() {
        let net = Network::<f64>::new(Architecture { patch_size: 21, conv1_filters: 2, conv2_filters: 2, fc_units: 3 }, 0).unwrap();
        let patch = Patch::new(21, vec![0.1; 441]).unwrap();
        assert!(matches!(net.backward(&patch, [0.5, 0.5]), Err(NnError::InvalidTarget)));
    }
}
