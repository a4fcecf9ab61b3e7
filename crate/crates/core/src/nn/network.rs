use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{defragment, fragment, max_pool_overlapping, max_pool_strided, upscale_nearest, Conv2d, Dense};
use super::tensor::{FeatureMapArray, Tensor3};
use super::topology::Topology;
use super::Scalar;
use crate::error::{Error, Result};
use crate::image::Grid2;
use crate::labels::{ClassMembershipMap, NUM_CLASSES};

/// Weights of a multi-scale network: one convolution branch per pyramid
/// level and a per-pixel fully-connected stage ending in six logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub topology: Topology,
    /// `branches[level]` lists the convolutions of that branch in order.
    pub branches: Vec<Vec<Conv2d<T>>>,
    pub fc: Vec<Dense<T>>,
}

/// Result of dense inference.
///
/// Output pixel `(r, c)` classifies input pixel
/// `(origin.0 + r + anchor, origin.1 + c + anchor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOutput {
    pub origin: (usize, usize),
    pub anchor: usize,
    pub height: usize,
    pub width: usize,
    /// Raw scores, `NUM_CLASSES` per pixel in row-major pixel order.
    pub logits: Vec<f64>,
}

impl DenseOutput {
    pub fn pixel_logits(&self, r: usize, c: usize) -> &[f64] {
        let i = (r * self.width + c) * NUM_CLASSES;
        &self.logits[i..i + NUM_CLASSES]
    }

    pub fn probabilities(&self) -> Vec<Grid2<f32>> {
        let mut maps: Vec<Grid2<f32>> = (0..NUM_CLASSES)
            .map(|_| Grid2::filled(self.width, self.height, 0.0))
            .collect();
        for r in 0..self.height {
            for c in 0..self.width {
                let p = softmax(self.pixel_logits(r, c));
                for (k, m) in maps.iter_mut().enumerate() {
                    m.set(r, c, p[k] as f32);
                }
            }
        }
        maps
    }

    /// Class map over the covered region.
    pub fn class_map(&self) -> ClassMembershipMap {
        ClassMembershipMap::from_probabilities(self.probabilities()).expect("six maps of equal size")
    }

    /// Class map at input resolution; uncovered border pixels copy the
    /// nearest covered pixel.
    pub fn full_class_map(&self, input_height: usize, input_width: usize) -> ClassMembershipMap {
        let inner = self.class_map();
        let r0 = self.origin.0 + self.anchor;
        let c0 = self.origin.1 + self.anchor;
        let labels = Grid2::from_fn(input_width, input_height, |r, c| {
            let rr = r.saturating_sub(r0).min(self.height.saturating_sub(1));
            let cc = c.saturating_sub(c0).min(self.width.saturating_sub(1));
            *inner.labels().get(rr, cc)
        });
        ClassMembershipMap::from_labels(labels).expect("labels come from argmax")
    }
}

/// Numerically stable softmax in `f64`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

fn check_finite<T: Scalar>(t: &Tensor3<T>, layer: usize) -> Result<()> {
    match t.data.iter().position(|v| !v.to_f64().is_finite()) {
        Some(i) => Err(Error::Numeric {
            layer,
            message: format!("non-finite activation at element {i}"),
        }),
        None => Ok(()),
    }
}

fn grid_to_tensor<T: Scalar>(g: &Grid2<f32>) -> Tensor3<T> {
    Tensor3::from_fn(1, g.height(), g.width(), |_, r, c| T::from_f64(*g.get(r, c) as f64))
}

impl<T: Scalar> Network<T> {
    /// All-zero weights.
    pub fn zeros(topology: &Topology) -> Self {
        Self::build(topology, |i, o, k| Conv2d::zeros(i, o, k), |i, o| Dense::zeros(i, o))
    }

    /// Gaussian weights with the given standard deviation and zero biases.
    pub fn gaussian(topology: &Topology, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::build(
            topology,
            |i, o, k| Conv2d::gaussian(i, o, k, std, &mut rng),
            |i, o| Dense::zeros(i, o),
        );
        for layer in net.fc.iter_mut() {
            *layer = Dense::gaussian(layer.inputs, layer.outputs, std, &mut rng);
        }
        net
    }

    fn build(
        topology: &Topology,
        mut conv: impl FnMut(usize, usize, usize) -> Conv2d<T>,
        mut dense: impl FnMut(usize, usize) -> Dense<T>,
    ) -> Self {
        let mut branches = Vec::with_capacity(topology.n_l);
        for _ in 0..topology.n_l {
            let mut layers = Vec::new();
            let mut in_ch = 1;
            for f in topology.block_filters() {
                for _ in 0..topology.n_c() {
                    layers.push(conv(in_ch, f, topology.k_c()));
                    in_ch = f;
                }
            }
            branches.push(layers);
        }
        let mut fc = Vec::new();
        let mut width = topology.feature_width();
        for &h in &topology.fc_hidden {
            fc.push(dense(width, h));
            width = h;
        }
        fc.push(dense(width, NUM_CLASSES));
        Self {
            topology: topology.clone(),
            branches,
            fc,
        }
    }

    /// Checks every layer shape against the topology.
    pub fn validate(&self) -> Result<()> {
        let reference = Network::<T>::zeros(&self.topology);
        let shape_err = |what: String| Err(Error::Config(format!("weights do not match {}: {what}", self.topology)));
        if self.branches.len() != reference.branches.len() {
            return shape_err(format!("{} branches", self.branches.len()));
        }
        for (l, (a, b)) in self.branches.iter().zip(&reference.branches).enumerate() {
            if a.len() != b.len() {
                return shape_err(format!("branch {l} has {} layers", a.len()));
            }
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                if (x.in_ch, x.out_ch, x.k, x.weights.len(), x.bias.len())
                    != (y.in_ch, y.out_ch, y.k, y.weights.len(), y.bias.len())
                {
                    return shape_err(format!("branch {l} layer {i}"));
                }
            }
        }
        if self.fc.len() != reference.fc.len() {
            return shape_err(format!("{} fully-connected layers", self.fc.len()));
        }
        for (i, (x, y)) in self.fc.iter().zip(&reference.fc).enumerate() {
            if (x.inputs, x.outputs, x.weights.len(), x.bias.len())
                != (y.inputs, y.outputs, y.weights.len(), y.bias.len())
            {
                return shape_err(format!("fully-connected layer {i}"));
            }
        }
        Ok(())
    }

    pub fn output_layer(&self) -> &Dense<T> {
        self.fc.last().expect("at least one fc layer")
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense<T> {
        self.fc.last_mut().expect("at least one fc layer")
    }

    /// Global index of a convolution, used in numeric error reports.
    fn layer_index(&self, level: usize, i: usize) -> usize {
        level * self.branches.first().map_or(0, |b| b.len()) + i
    }

    /// Branch features of one patch (`R`×`R`) with strided pooling.
    pub fn branch_patch(&self, level: usize, patch: &Tensor3<T>) -> Result<Vec<T>> {
        let t = &self.topology;
        let mut x = patch.clone();
        let mut li = 0;
        for b in 0..t.n_b() {
            for _ in 0..t.n_c() {
                x = self.branches[level][li].forward(&x, true);
                check_finite(&x, self.layer_index(level, li))?;
                li += 1;
            }
            if b < t.n_p {
                x = max_pool_strided(&x).0;
            }
        }
        debug_assert_eq!((x.height, x.width), (1, 1));
        Ok(x.data)
    }

    /// Fully-connected stage on one feature vector.
    pub fn head(&self, features: &[T]) -> Vec<T> {
        let mut x = features.to_vec();
        let mut y = Vec::new();
        let last = self.fc.len() - 1;
        for (i, layer) in self.fc.iter().enumerate() {
            layer.forward(&x, i < last, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        x
    }

    /// Logits for one set of patches, one `R`×`R` patch per pyramid level.
    pub fn patch_logits(&self, patches: &[Grid2<f32>]) -> Result<Vec<f64>> {
        let t = &self.topology;
        let r = t.receptive_field();
        if patches.len() != t.n_l {
            return Err(Error::InvalidInput(format!(
                "expected {} patches, got {}",
                t.n_l,
                patches.len()
            )));
        }
        let mut features = Vec::with_capacity(t.feature_width());
        for (l, p) in patches.iter().enumerate() {
            if p.dims() != (r, r) {
                return Err(Error::InvalidInput(format!(
                    "patch {}x{} does not match receptive field {r}x{r}",
                    p.width(),
                    p.height()
                )));
            }
            features.extend(self.branch_patch(l, &grid_to_tensor(p))?);
        }
        Ok(self.head(&features).into_iter().map(Scalar::to_f64).collect())
    }

    /// Class probabilities for one set of patches.
    pub fn forward_patch(&self, patches: &[Grid2<f32>]) -> Result<Vec<f64>> {
        Ok(softmax(&self.patch_logits(patches)?))
    }

    /// Patches whose classification equals dense output pixel `(r, c)`.
    pub fn extract_patches(&self, pyramid: &[Grid2<f32>], output: &DenseOutput, r: usize, c: usize) -> Vec<Grid2<f32>> {
        let (j_r, j_c) = (output.origin.0 + r, output.origin.1 + c);
        self.patches_at(pyramid, j_r, j_c).expect("dense output pixel inside every level")
    }

    /// Patches for the level-0 patch starting at `(j_r, j_c)`.
    pub fn patches_at(&self, pyramid: &[Grid2<f32>], j_r: usize, j_c: usize) -> Option<Vec<Grid2<f32>>> {
        let size = self.topology.receptive_field();
        let a = self.topology.anchor();
        pyramid
            .iter()
            .enumerate()
            .map(|(l, level)| {
                let r0 = ((j_r + a) >> l).checked_sub(a)?;
                let c0 = ((j_c + a) >> l).checked_sub(a)?;
                if r0 + size > level.height() || c0 + size > level.width() {
                    return None;
                }
                Some(Grid2::from_fn(size, size, |r, c| *level.get(r0 + r, c0 + c)))
            })
            .collect()
    }

    /// Covered range of level-0 patch starts along one axis, given the
    /// level extents along that axis.
    fn output_range(&self, extents: &[usize]) -> Option<(usize, usize)> {
        let size = self.topology.receptive_field();
        let a = self.topology.anchor();
        let mut lo = 0;
        let mut hi = usize::MAX;
        for (l, &n) in extents.iter().enumerate() {
            if n < size {
                return None;
            }
            lo = lo.max(a * ((1 << l) - 1));
            hi = hi.min(((n - size + a + 1) << l) - 1 - a);
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Dense branch output: overlapping pooling with fragmentation, then
    /// defragmentation. Covers every patch start of the level.
    pub fn branch_dense(&self, level: usize, input: &Grid2<f32>) -> Result<Tensor3<T>> {
        let t = &self.topology;
        let mut fma = FeatureMapArray::single(grid_to_tensor::<T>(input));
        let mut li = 0;
        for b in 0..t.n_b() {
            for _ in 0..t.n_c() {
                let layer = &self.branches[level][li];
                for f in fma.fragments.iter_mut() {
                    *f = layer.forward(f, true);
                    check_finite(f, self.layer_index(level, li))?;
                }
                li += 1;
            }
            if b < t.n_p {
                for f in fma.fragments.iter_mut() {
                    *f = max_pool_overlapping(f);
                }
                fma = fragment(&fma, 2);
            }
        }
        defragment(&fma)
    }

    /// Dense inference over a normalized pyramid.
    pub fn dense_logits(&self, pyramid: &[Grid2<f32>]) -> Result<DenseOutput> {
        self.validate()?;
        let t = &self.topology;
        if pyramid.len() != t.n_l {
            return Err(Error::InvalidInput(format!(
                "expected {} pyramid levels, got {}",
                t.n_l,
                pyramid.len()
            )));
        }
        let heights: Vec<usize> = pyramid.iter().map(|l| l.height()).collect();
        let widths: Vec<usize> = pyramid.iter().map(|l| l.width()).collect();
        let too_small = || {
            Error::InvalidInput(format!(
                "input {}x{} too small for {} (minimum {min}x{min})",
                widths[0],
                heights[0],
                t,
                min = t.min_input_size()
            ))
        };
        let (r_lo, r_hi) = self.output_range(&heights).ok_or_else(too_small)?;
        let (c_lo, c_hi) = self.output_range(&widths).ok_or_else(too_small)?;
        let (h, w) = (r_hi - r_lo + 1, c_hi - c_lo + 1);
        let a = t.anchor();
        let mut levels = Vec::with_capacity(t.n_l);
        for (l, input) in pyramid.iter().enumerate() {
            let dense = self.branch_dense(l, input)?;
            levels.push(upscale_nearest(&dense, 1 << l, a, (r_lo, c_lo), h, w)?);
        }
        let mut logits = Vec::with_capacity(h * w * NUM_CLASSES);
        let mut features = Vec::with_capacity(t.feature_width());
        for r in 0..h {
            for c in 0..w {
                features.clear();
                for lv in &levels {
                    for ch in 0..lv.channels {
                        features.push(lv.at(ch, r, c));
                    }
                }
                let out = self.head(&features);
                if let Some(bad) = out.iter().find(|v| !v.to_f64().is_finite()) {
                    return Err(Error::Numeric {
                        layer: self.layer_index(t.n_l, 0) + self.fc.len() - 1,
                        message: format!("non-finite logit {bad:?}"),
                    });
                }
                logits.extend(out.into_iter().map(Scalar::to_f64));
            }
        }
        Ok(DenseOutput {
            origin: (r_lo, c_lo),
            anchor: a,
            height: h,
            width: w,
            logits,
        })
    }

    /// Dense inference returning per-class probability maps and labels for
    /// the covered region.
    pub fn forward_dense(&self, pyramid: &[Grid2<f32>]) -> Result<(DenseOutput, ClassMembershipMap)> {
        let out = self.dense_logits(pyramid)?;
        let map = out.class_map();
        Ok((out, map))
    }

    /// Converts the storage type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |c: &Conv2d<T>| Conv2d {
            in_ch: c.in_ch,
            out_ch: c.out_ch,
            k: c.k,
            weights: c.weights.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            bias: c.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        };
        Network {
            topology: self.topology.clone(),
            branches: self.branches.iter().map(|b| b.iter().map(conv).collect()).collect(),
            fc: self
                .fc
                .iter()
                .map(|d| Dense {
                    inputs: d.inputs,
                    outputs: d.outputs,
                    weights: d.weights.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                    bias: d.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Visits every parameter in declaration order: per branch each
    /// convolution's weights then biases, then each fc layer likewise.
    pub fn params(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.topology.parameter_count());
        for branch in &self.branches {
            for c in branch {
                v.extend_from_slice(&c.weights);
                v.extend_from_slice(&c.bias);
            }
        }
        for d in &self.fc {
            v.extend_from_slice(&d.weights);
            v.extend_from_slice(&d.bias);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut T> {
        let mut v = Vec::new();
        for branch in self.branches.iter_mut() {
            for c in branch.iter_mut() {
                v.extend(c.weights.iter_mut());
                v.extend(c.bias.iter_mut());
            }
        }
        for d in self.fc.iter_mut() {
            v.extend(d.weights.iter_mut());
            v.extend(d.bias.iter_mut());
        }
        v
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (s, &v) in slots.iter_mut().zip(values) {
            **s = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_pyramid, ConvVariant};

    fn image(w: usize, h: usize, seed: u64) -> Grid2<u8> {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Grid2::from_fn(w, h, |_, _| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 56) as u8
        })
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let t = Topology::new(2, 1, ConvVariant::Triple3, 2).unwrap();
        let mut net = Network::<f32>::gaussian(&t, 0.3, 1);
        *net.output_layer_mut() = Dense::zeros(net.output_layer().inputs, NUM_CLASSES);
        let pyr = build_pyramid(&image(48, 48, 3), &t).unwrap();
        let (out, _) = net.forward_dense(&pyr).unwrap();
        for m in out.probabilities() {
            assert!(m.as_slice().iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-7));
        }
    }

    #[test]
    fn dense_matches_patch_on_every_pixel() {
        for (n_l, n_p, v, seed) in [
            (1, 0, ConvVariant::Single7, 5u64),
            (2, 1, ConvVariant::Triple3, 42),
            (1, 2, ConvVariant::Single7, 42),
        ] {
            let t = Topology::new(n_l, n_p, v, 2).unwrap();
            let net = Network::<f32>::gaussian(&t, 0.5, seed);
            let pyr = build_pyramid(&image(64, 64, seed), &t).unwrap();
            let out = net.dense_logits(&pyr).unwrap();
            for r in (0..out.height).step_by(3) {
                for c in (0..out.width).step_by(5) {
                    let patch = net.patch_logits(&net.extract_patches(&pyr, &out, r, c)).unwrap();
                    assert_eq!(patch.as_slice(), out.pixel_logits(r, c), "{t} at {r},{c}");
                }
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let t = Topology::new(1, 1, ConvVariant::Single7, 3).unwrap();
        let net = Network::<f32>::gaussian(&t, 1.0, 9);
        let pyr = build_pyramid(&image(40, 40, 1), &t).unwrap();
        let probs = net.dense_logits(&pyr).unwrap().probabilities();
        for i in 0..probs[0].as_slice().len() {
            let s: f64 = probs.iter().map(|m| m.as_slice()[i] as f64).sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn wrong_patch_size_and_shape_mismatch() {
        let t = Topology::new(1, 0, ConvVariant::Single7, 2).unwrap();
        let net = Network::<f32>::gaussian(&t, 0.1, 0);
        assert!(net.forward_patch(&[Grid2::filled(6, 6, 0.0)]).is_err());
        let mut bad = net.clone();
        bad.branches[0].pop();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_activation_reports_layer() {
        let t = Topology::new(1, 0, ConvVariant::Triple3, 2).unwrap();
        let mut net = Network::<f32>::gaussian(&t, 0.1, 0);
        net.branches[0][1].bias[0] = f32::INFINITY;
        let pyr = build_pyramid(&image(20, 20, 0), &t).unwrap();
        match net.dense_logits(&pyr) {
            Err(Error::Numeric { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("{other:?}"),
        }
    }
}
