use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{FeatureMapArray, Tensor3};
use super::Scalar;
use crate::error::{Error, Result};

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Valid (unpadded) square convolution with one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    /// `[out][in][kr][kc]`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            k,
            weights: vec![T::zero(); out_ch * in_ch * k * k],
            bias: vec![T::zero(); out_ch],
        }
    }

    pub fn gaussian(in_ch: usize, out_ch: usize, k: usize, std: f64, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(in_ch, out_ch, k);
        let normal = Normal::new(0.0, std).expect("finite std");
        for w in layer.weights.iter_mut() {
            *w = T::from_f64(normal.sample(rng));
        }
        layer
    }

    #[inline]
    fn w(&self, o: usize, i: usize, kr: usize, kc: usize) -> T {
        self.weights[((o * self.in_ch + i) * self.k + kr) * self.k + kc]
    }

    /// Convolution followed by ReLU when `activate` is set.
    pub fn forward(&self, x: &Tensor3<T>, activate: bool) -> Tensor3<T> {
        debug_assert_eq!(x.channels, self.in_ch);
        let oh = (x.height + 1).saturating_sub(self.k);
        let ow = (x.width + 1).saturating_sub(self.k);
        let mut out = Tensor3::zeros(self.out_ch, oh, ow);
        for o in 0..self.out_ch {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = self.bias[o].to_f64();
                    for i in 0..self.in_ch {
                        for kr in 0..self.k {
                            let row = &x.data[x.idx(i, r + kr, c)..x.idx(i, r + kr, c) + self.k];
                            for (kc, v) in row.iter().enumerate() {
                                acc += self.w(o, i, kr, kc).to_f64() * v.to_f64();
                            }
                        }
                    }
                    let v = T::from_f64(acc);
                    let idx = out.idx(o, r, c);
                    out.data[idx] = if activate { relu(v) } else { v };
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &self,
        x: &Tensor3<T>,
        grad_out: &Tensor3<f64>,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Tensor3<f64> {
        let mut grad_in = Tensor3::<f64>::zeros(x.channels, x.height, x.width);
        for o in 0..self.out_ch {
            for r in 0..grad_out.height {
                for c in 0..grad_out.width {
                    let g = grad_out.at(o, r, c);
                    if g == 0.0 {
                        continue;
                    }
                    grad_b[o] += g;
                    for i in 0..self.in_ch {
                        for kr in 0..self.k {
                            for kc in 0..self.k {
                                let wi = ((o * self.in_ch + i) * self.k + kr) * self.k + kc;
                                grad_w[wi] += g * x.at(i, r + kr, c + kc).to_f64();
                                let ii = grad_in.idx(i, r + kr, c + kc);
                                grad_in.data[ii] += g * self.weights[wi].to_f64();
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }
}

/// Fully-connected layer applied per pixel (a 1×1 convolution).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn gaussian(inputs: usize, outputs: usize, std: f64, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        let normal = Normal::new(0.0, std).expect("finite std");
        for w in layer.weights.iter_mut() {
            *w = T::from_f64(normal.sample(rng));
        }
        layer
    }

    pub fn forward(&self, x: &[T], activate: bool, out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let mut acc = self.bias[o].to_f64();
            for (w, v) in self.weights[o * self.inputs..(o + 1) * self.inputs].iter().zip(x) {
                acc += w.to_f64() * v.to_f64();
            }
            let v = T::from_f64(acc);
            out.push(if activate { relu(v) } else { v });
        }
    }

    pub fn backward(&self, x: &[T], grad_out: &[f64], grad_w: &mut [f64], grad_b: &mut [f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            grad_b[o] += g;
            for i in 0..self.inputs {
                grad_w[o * self.inputs + i] += g * x[i].to_f64();
                grad_in[i] += g * self.weights[o * self.inputs + i].to_f64();
            }
        }
        grad_in
    }
}

#[inline]
fn max4<T: Scalar>(a: T, b: T, c: T, d: T) -> (T, usize) {
    let mut best = (a, 0);
    for (i, v) in [b, c, d].into_iter().enumerate() {
        if v > best.0 {
            best = (v, i + 1);
        }
    }
    best
}

/// 2×2 max pooling with stride 1; output shrinks by one pixel per axis.
pub fn max_pool_overlapping<T: Scalar>(x: &Tensor3<T>) -> Tensor3<T> {
    let oh = x.height.saturating_sub(1);
    let ow = x.width.saturating_sub(1);
    Tensor3::from_fn(x.channels, oh, ow, |c, r, col| {
        max4(x.at(c, r, col), x.at(c, r, col + 1), x.at(c, r + 1, col), x.at(c, r + 1, col + 1)).0
    })
}

/// 2×2 max pooling with stride 2. Also returns, per output value, the flat
/// input index that won (for backpropagation).
pub fn max_pool_strided<T: Scalar>(x: &Tensor3<T>) -> (Tensor3<T>, Vec<usize>) {
    let oh = x.height / 2;
    let ow = x.width / 2;
    let mut arg = Vec::with_capacity(x.channels * oh * ow);
    let out = Tensor3::from_fn(x.channels, oh, ow, |c, r, col| {
        let (r0, c0) = (2 * r, 2 * col);
        let cand = [
            x.idx(c, r0, c0),
            x.idx(c, r0, c0 + 1),
            x.idx(c, r0 + 1, c0),
            x.idx(c, r0 + 1, c0 + 1),
        ];
        let (v, k) = max4(
            x.data[cand[0]],
            x.data[cand[1]],
            x.data[cand[2]],
            x.data[cand[3]],
        );
        arg.push(cand[k]);
        v
    });
    (out, arg)
}

/// Splits every fragment into `factor²` subsampled fragments, row parity
/// first.
pub fn fragment<T: Scalar>(input: &FeatureMapArray<T>, factor: usize) -> FeatureMapArray<T> {
    assert!(factor >= 1);
    let mut fragments = Vec::with_capacity(input.len() * factor * factor);
    let mut offsets = Vec::with_capacity(fragments.capacity());
    for (frag, &(or, oc)) in input.fragments.iter().zip(&input.offsets) {
        for ar in 0..factor {
            for ac in 0..factor {
                let h = frag.height.saturating_sub(ar).div_ceil(factor);
                let w = frag.width.saturating_sub(ac).div_ceil(factor);
                fragments.push(Tensor3::from_fn(frag.channels, h, w, |c, r, col| {
                    frag.at(c, ar + factor * r, ac + factor * col)
                }));
                offsets.push((or + ar * input.stride, oc + ac * input.stride));
            }
        }
    }
    FeatureMapArray {
        fragments,
        offsets,
        stride: input.stride * factor,
    }
}

/// Interleaves fragments back into one feature map. Fails unless the
/// fragments tile a rectangle exactly.
pub fn defragment<T: Scalar>(input: &FeatureMapArray<T>) -> Result<Tensor3<T>> {
    let s = input.stride;
    let channels = input.channels();
    let mut h = 0;
    let mut w = 0;
    let mut total = 0;
    for (f, &(or, oc)) in input.fragments.iter().zip(&input.offsets) {
        if f.channels != channels {
            return Err(Error::Config("fragments differ in channel count".into()));
        }
        if f.height > 0 && f.width > 0 {
            h = h.max(or + (f.height - 1) * s + 1);
            w = w.max(oc + (f.width - 1) * s + 1);
            total += f.height * f.width;
        }
    }
    if total != h * w {
        return Err(Error::Config(format!(
            "fragments cover {total} of {h}x{w} lattice positions"
        )));
    }
    let mut out = Tensor3::zeros(channels, h, w);
    let mut seen = vec![false; h * w];
    for (f, &(or, oc)) in input.fragments.iter().zip(&input.offsets) {
        for r in 0..f.height {
            for col in 0..f.width {
                let (rr, cc) = (or + r * s, oc + col * s);
                if std::mem::replace(&mut seen[rr * w + cc], true) {
                    return Err(Error::Config("overlapping fragments".into()));
                }
                for c in 0..channels {
                    let i = out.idx(c, rr, cc);
                    out.data[i] = f.at(c, r, col);
                }
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour upscaling by `factor` followed by cropping.
///
/// Output pixel `i` (per axis) takes input pixel
/// `⌊(origin + i + anchor) / factor⌋ − anchor`, which keeps the anchor pixel
/// of every patch aligned across pyramid levels.
pub fn upscale_nearest<T: Scalar>(
    x: &Tensor3<T>,
    factor: usize,
    anchor: usize,
    origin: (usize, usize),
    out_h: usize,
    out_w: usize,
) -> Result<Tensor3<T>> {
    let map = |o: usize, i: usize, n: usize| -> Result<usize> {
        let j = (o + i + anchor) / factor;
        j.checked_sub(anchor)
            .filter(|&j| j < n)
            .ok_or_else(|| Error::Config(format!("upscaled index {i} falls outside the source map")))
    };
    let rows: Vec<usize> = (0..out_h).map(|i| map(origin.0, i, x.height)).collect::<Result<_>>()?;
    let cols: Vec<usize> = (0..out_w).map(|i| map(origin.1, i, x.width)).collect::<Result<_>>()?;
    Ok(Tensor3::from_fn(x.channels, out_h, out_w, |c, r, col| x.at(c, rows[r], cols[col])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_values() {
        assert_eq!(relu(-3.0f32), 0.0);
        assert_eq!(relu(5.0f32), 5.0);
    }

    #[test]
    fn max_pool_window() {
        let x = Tensor3::from_fn(1, 2, 2, |_, r, c| (r * 2 + c + 1) as f32);
        assert_eq!(max_pool_overlapping(&x).data, vec![4.0]);
        let (p, arg) = max_pool_strided(&x);
        assert_eq!(p.data, vec![4.0]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn conv_matches_hand_sum() {
        let mut conv = Conv2d::<f64>::zeros(1, 1, 2);
        conv.weights = vec![1.0, 2.0, 3.0, 4.0];
        conv.bias = vec![0.5];
        let x = Tensor3::from_fn(1, 2, 3, |_, r, c| (r * 3 + c) as f64);
        let y = conv.forward(&x, false);
        // [0 1 2; 3 4 5]
        assert_eq!(y.data, vec![0.5 + 0.0 + 2.0 + 9.0 + 16.0, 0.5 + 1.0 + 4.0 + 12.0 + 20.0]);
    }

    #[test]
    fn overlapping_pool_then_fragment_equals_strided_pool() {
        let x = Tensor3::from_fn(2, 8, 6, |c, r, col| ((c * 31 + r * 7 + col * 13) % 17) as f32);
        let frags = fragment(&FeatureMapArray::single(max_pool_overlapping(&x)), 2);
        let (strided, _) = max_pool_strided(&x);
        assert_eq!(frags.fragments[0], strided);
    }

    #[test]
    fn upscale_replicates() {
        let x = Tensor3::from_fn(1, 2, 2, |_, r, c| (r * 2 + c) as f32);
        let y = upscale_nearest(&x, 2, 0, (0, 0), 4, 4).unwrap();
        assert_eq!(y.at(0, 1, 1), 0.0);
        assert_eq!(y.at(0, 3, 2), 3.0);
        assert!(upscale_nearest(&x, 2, 0, (0, 0), 5, 4).is_err());
    }

    proptest! {
        #[test]
        fn defragment_inverts_fragment(
            h in 0usize..13, w in 0usize..13, ch in 1usize..3,
            factors in proptest::collection::vec(1usize..4, 0..4),
        ) {
            let x = Tensor3::from_fn(ch, h, w, |c, r, col| (c * 1000 + r * 37 + col) as f32);
            let mut fma = FeatureMapArray::single(x.clone());
            let mut product = 1;
            for f in factors {
                fma = fragment(&fma, f);
                product *= f * f;
            }
            prop_assert_eq!(fma.len(), product);
            if h > 0 && w > 0 {
                prop_assert_eq!(defragment(&fma).unwrap(), x);
            }
        }
    }
}
