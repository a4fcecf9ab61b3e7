use super::Scalar;

/// Channel-major feature maps: `data[(c * height + r) * width + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for r in 0..height {
                for col in 0..width {
                    data.push(f(c, r, col));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.height + r) * self.width + col
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> T {
        self.data[self.idx(c, r, col)]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Square window `[r0, r0+size) × [c0, c0+size)` of every channel.
    pub fn crop(&self, r0: usize, c0: usize, h: usize, w: usize) -> Self {
        Self::from_fn(self.channels, h, w, |c, r, col| self.at(c, r0 + r, c0 + col))
    }
}

/// Fragmented feature maps. Fragment `i` pixel `(r, c)` sits at
/// `offsets[i] + stride · (r, c)` in the unfragmented lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapArray<T> {
    pub fragments: Vec<Tensor3<T>>,
    pub offsets: Vec<(usize, usize)>,
    pub stride: usize,
}

impl<T: Scalar> FeatureMapArray<T> {
    pub fn single(t: Tensor3<T>) -> Self {
        Self {
            fragments: vec![t],
            offsets: vec![(0, 0)],
            stride: 1,
        }
    }

    pub fn channels(&self) -> usize {
        self.fragments.first().map_or(0, |f| f.channels)
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }
}
