use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Convolution block layout: one 7×7 layer or three stacked 3×3 layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvVariant {
    Single7,
    Triple3,
}

impl ConvVariant {
    pub fn n_c(self) -> usize {
        match self {
            ConvVariant::Single7 => 1,
            ConvVariant::Triple3 => 3,
        }
    }

    pub fn k_c(self) -> usize {
        match self {
            ConvVariant::Single7 => 7,
            ConvVariant::Triple3 => 3,
        }
    }

    pub fn from_n_c(n_c: usize) -> Result<Self> {
        match n_c {
            1 => Ok(ConvVariant::Single7),
            3 => Ok(ConvVariant::Triple3),
            _ => Err(Error::Config(format!(
                "unsupported conv block with {n_c} layers (use 1 for 7x7 or 3 for 3x3)"
            ))),
        }
    }
}

/// Pooling is strided (product of strides 4) when classifying single patches
/// and overlapping (product 1) with fragmentation for dense inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingMode {
    Patch,
    Dense,
}

impl PoolingMode {
    pub fn stride_product(self) -> usize {
        match self {
            PoolingMode::Patch => 4,
            PoolingMode::Dense => 1,
        }
    }
}

pub const POOL_KERNEL: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    /// Pyramid levels.
    pub n_l: usize,
    /// Pooling layers per branch.
    pub n_p: usize,
    pub variant: ConvVariant,
    /// Filters in the first block; doubled after every pooling layer.
    pub n_f: usize,
    /// Hidden widths of the per-pixel fully-connected stage (empty for a
    /// single softmax layer).
    pub fc_hidden: Vec<usize>,
}

impl Topology {
    pub fn new(n_l: usize, n_p: usize, variant: ConvVariant, n_f: usize) -> Result<Self> {
        let t = Self {
            n_l,
            n_p,
            variant,
            n_f,
            fc_hidden: Vec::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Result<Self> {
        self.fc_hidden = hidden;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_l == 0 {
            return Err(Error::Config("n_l must be at least 1".into()));
        }
        if self.n_p > 3 {
            return Err(Error::Config(format!("n_p = {} exceeds 3", self.n_p)));
        }
        if self.n_f == 0 {
            return Err(Error::Config("n_f must be at least 1".into()));
        }
        if self.fc_hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn n_b(&self) -> usize {
        self.n_p + 1
    }

    pub fn n_c(&self) -> usize {
        self.variant.n_c()
    }

    pub fn k_c(&self) -> usize {
        self.variant.k_c()
    }

    pub fn block_filters(&self) -> Vec<usize> {
        (0..self.n_b()).map(|b| self.n_f << b).collect()
    }

    /// Channels leaving each branch.
    pub fn branch_channels(&self) -> usize {
        self.n_f << self.n_p
    }

    /// Input width of the fully-connected stage (all branches concatenated).
    pub fn feature_width(&self) -> usize {
        self.n_l * self.branch_channels()
    }

    /// Side length of the square patch one branch consumes in patch mode.
    pub fn receptive_field(&self) -> usize {
        let shrink = self.n_c() * (self.k_c() - 1);
        let mut size = 1 + shrink;
        for _ in 0..self.n_p {
            size = size * POOL_KERNEL + shrink;
        }
        size
    }

    /// Offset of the classified pixel inside a patch.
    pub fn anchor(&self) -> usize {
        (self.receptive_field() - 1) / 2
    }

    /// Smallest square input for which every pyramid level holds one patch.
    pub fn min_input_size(&self) -> usize {
        self.receptive_field() << (self.n_l - 1)
    }

    pub fn name(&self) -> String {
        format!("mssn-{}-{}-{}", self.n_l, self.n_c(), self.n_f)
    }

    /// Parses `mssn-<n_l>-<n_c>-<n_f>` with the given pooling depth.
    pub fn parse_with_pooling(name: &str, n_p: usize) -> Result<Self> {
        let parts: Vec<&str> = name.trim().split('-').collect();
        if parts.len() != 4 || parts[0] != "mssn" {
            return Err(Error::Config(format!(
                "topology `{name}` is not of the form mssn-<n_l>-<n_c>-<n_f>"
            )));
        }
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number `{s}` in topology `{name}`")))
        };
        Self::new(
            num(parts[1])?,
            n_p,
            ConvVariant::from_n_c(num(parts[2])?)?,
            num(parts[3])?,
        )
    }

    /// Number of trainable parameters.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.k_c() * self.k_c();
        let mut branch = 0;
        let mut in_ch = 1;
        for f in self.block_filters() {
            for _ in 0..self.n_c() {
                branch += f * in_ch * k2 + f;
                in_ch = f;
            }
        }
        let mut fc = 0;
        let mut width = self.feature_width();
        for &h in self.fc_hidden.iter().chain(std::iter::once(&crate::labels::NUM_CLASSES)) {
            fc += h * width + h;
            width = h;
        }
        self.n_l * branch + fc
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parses with the default pooling depth of 2.
impl FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with_pooling(s, 2)
    }
}
