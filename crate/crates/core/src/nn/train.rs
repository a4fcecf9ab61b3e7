use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::max_pool_strided;
use super::network::{softmax, Network};
use super::pyramid::build_pyramid;
use super::tensor::Tensor3;
use super::topology::Topology;
use super::Scalar;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid2};
use crate::labels::{ClassId, ClassMembershipMap};
use crate::metrics::ConfusionMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial learn rate.
    pub learn_rate: f64,
    pub epochs: usize,
    /// Epochs over which the learn rate falls linearly to zero (0: `epochs`).
    pub anneal_epochs: usize,
    pub batch_size: usize,
    pub patches_per_class: usize,
    pub init_std: f64,
    pub seed: u64,
    /// Classes sampled during training, each with `patches_per_class`
    /// patches per epoch.
    pub classes: Vec<ClassId>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learn_rate: 1e-2,
            epochs: 50,
            anneal_epochs: 0,
            batch_size: 16,
            patches_per_class: 64,
            init_std: 0.01,
            seed: 0,
            classes: ClassId::ALL.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learn_rate >= 0.0 && self.learn_rate.is_finite()) {
            return Err(Error::Config(format!("bad learn rate {}", self.learn_rate)));
        }
        if self.batch_size == 0 || self.patches_per_class == 0 {
            return Err(Error::Config("batch size and patches per class must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("no training classes".into()));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config("init std must be positive".into()));
        }
        Ok(())
    }

    /// Learn rate used during epoch `e`.
    pub fn learn_rate_at(&self, e: usize) -> f64 {
        let span = if self.anneal_epochs == 0 { self.epochs } else { self.anneal_epochs };
        self.learn_rate * (1.0 - e as f64 / span.max(1) as f64).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub labels: ClassMembershipMap,
}

/// One training patch: level-0 patch start `(row, col)` of image `image`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub image: usize,
    pub row: usize,
    pub col: usize,
    pub class: ClassId,
}

#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    pub network: Network<T>,
    /// Mean cross-entropy per epoch.
    pub loss_trace: Vec<f64>,
}

/// Normalized pyramids plus every valid patch position grouped by the class
/// of its anchor pixel.
struct Prepared {
    pyramids: Vec<Vec<Grid2<f32>>>,
    by_class: Vec<Vec<Sample>>,
}

fn prepare(dataset: &[LabeledImage], topology: &Topology, classes: &[ClassId]) -> Result<Prepared> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let probe = Network::<f32>::zeros(topology);
    let a = topology.anchor();
    let mut by_class = vec![Vec::new(); classes.len()];
    let mut pyramids = Vec::with_capacity(dataset.len());
    for (i, item) in dataset.iter().enumerate() {
        if item.image.dims() != item.labels.dims() {
            return Err(Error::InvalidInput(format!("image {i}: label map size differs")));
        }
        let pyr = build_pyramid(&item.image, topology)?;
        let out = probe.dense_logits(&pyr)?;
        for r in 0..out.height {
            for c in 0..out.width {
                let (row, col) = (out.origin.0 + r, out.origin.1 + c);
                let class = item.labels.class_at(row + a, col + a);
                if let Some(k) = classes.iter().position(|&x| x == class) {
                    by_class[k].push(Sample { image: i, row, col, class });
                }
            }
        }
        pyramids.push(pyr);
    }
    for (k, list) in by_class.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::InvalidInput(format!(
                "class `{}` does not occur in the training set",
                classes[k]
            )));
        }
    }
    Ok(Prepared { pyramids, by_class })
}

/// Draws `per_class` positions uniformly from each class list and shuffles
/// the union.
pub fn class_balanced_samples(by_class: &[Vec<Sample>], per_class: usize, rng: &mut impl Rng) -> Vec<Sample> {
    let mut out = Vec::with_capacity(by_class.len() * per_class);
    for list in by_class {
        for _ in 0..per_class {
            out.push(list[rng.random_range(0..list.len())]);
        }
    }
    out.shuffle(rng);
    out
}

struct BranchCache<T> {
    /// Input of every convolution.
    inputs: Vec<Tensor3<T>>,
    /// Output (post-ReLU) of every convolution.
    outputs: Vec<Tensor3<T>>,
    /// Per pooling layer: winning indices and the pre-pool shape.
    pools: Vec<(Vec<usize>, (usize, usize, usize))>,
}

fn branch_forward<T: Scalar>(net: &Network<T>, level: usize, patch: Tensor3<T>) -> (Vec<T>, BranchCache<T>) {
    let t = &net.topology;
    let mut cache = BranchCache {
        inputs: Vec::new(),
        outputs: Vec::new(),
        pools: Vec::new(),
    };
    let mut x = patch;
    let mut li = 0;
    for b in 0..t.n_b() {
        for _ in 0..t.n_c() {
            let y = net.branches[level][li].forward(&x, true);
            cache.inputs.push(std::mem::replace(&mut x, y.clone()));
            cache.outputs.push(y);
            li += 1;
        }
        if b < t.n_p {
            let shape = (x.channels, x.height, x.width);
            let (p, arg) = max_pool_strided(&x);
            cache.pools.push((arg, shape));
            x = p;
        }
    }
    (x.data, cache)
}

/// Flat offsets of every layer's weights and biases in parameter order.
fn layer_offsets<T: Scalar>(net: &Network<T>) -> (Vec<Vec<usize>>, Vec<usize>, usize) {
    let mut off = 0;
    let mut conv = Vec::new();
    for branch in &net.branches {
        let mut v = Vec::new();
        for c in branch {
            v.push(off);
            off += c.weights.len() + c.bias.len();
        }
        conv.push(v);
    }
    let mut fc = Vec::new();
    for d in &net.fc {
        fc.push(off);
        off += d.weights.len() + d.bias.len();
    }
    (conv, fc, off)
}

fn sample_patches<T: Scalar>(net: &Network<T>, pyramid: &[Grid2<f32>], s: &Sample) -> Vec<Tensor3<T>> {
    net.patches_at(pyramid, s.row, s.col)
        .expect("training positions lie inside every level")
        .iter()
        .map(|g| Tensor3::from_fn(1, g.height(), g.width(), |_, r, c| T::from_f64(*g.get(r, c) as f64)))
        .collect()
}

/// Mean softmax cross-entropy over `samples` and its gradient with respect
/// to every parameter (in [`Network::params`] order).
pub fn loss_and_gradient<T: Scalar>(
    net: &Network<T>,
    pyramids: &[Vec<Grid2<f32>>],
    samples: &[Sample],
) -> (f64, Vec<f64>) {
    let (conv_off, fc_off, total) = layer_offsets(net);
    let mut grad = vec![0.0f64; total];
    let mut loss = 0.0;
    let t = &net.topology;
    for s in samples {
        let patches = sample_patches(net, &pyramids[s.image], s);
        let mut features = Vec::with_capacity(t.feature_width());
        let mut caches = Vec::with_capacity(t.n_l);
        for (l, p) in patches.into_iter().enumerate() {
            let (f, cache) = branch_forward(net, l, p);
            features.extend(f);
            caches.push(cache);
        }
        // fully-connected stage
        let mut acts = vec![features];
        let last = net.fc.len() - 1;
        for (i, layer) in net.fc.iter().enumerate() {
            let mut y = Vec::new();
            layer.forward(acts.last().expect("input"), i < last, &mut y);
            acts.push(y);
        }
        let logits: Vec<f64> = acts[last + 1].iter().map(|v| v.to_f64()).collect();
        let p = softmax(&logits);
        let y = s.class.index();
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        let mut g: Vec<f64> = p.clone();
        g[y] -= 1.0;
        for (i, layer) in net.fc.iter().enumerate().rev() {
            if i < last {
                for (gv, a) in g.iter_mut().zip(&acts[i + 1]) {
                    if !(*a > T::zero()) {
                        *gv = 0.0;
                    }
                }
            }
            let (gw, gb) = grad[fc_off[i]..fc_off[i] + layer.weights.len() + layer.bias.len()]
                .split_at_mut(layer.weights.len());
            g = layer.backward(&acts[i], &g, gw, gb);
        }
        // branches
        let ch = t.branch_channels();
        for (l, cache) in caches.iter().enumerate() {
            let mut gt = Tensor3 {
                channels: ch,
                height: 1,
                width: 1,
                data: g[l * ch..(l + 1) * ch].to_vec(),
            };
            let mut li = t.n_b() * t.n_c();
            for b in (0..t.n_b()).rev() {
                if b < t.n_p {
                    let (arg, (c, h, w)) = &cache.pools[b];
                    let mut up = Tensor3::<f64>::zeros(*c, *h, *w);
                    for (k, &src) in arg.iter().enumerate() {
                        up.data[src] += gt.data[k];
                    }
                    gt = up;
                }
                for _ in 0..t.n_c() {
                    li -= 1;
                    for (gv, a) in gt.data.iter_mut().zip(&cache.outputs[li].data) {
                        if !(*a > T::zero()) {
                            *gv = 0.0;
                        }
                    }
                    let layer = &net.branches[l][li];
                    let off = conv_off[l][li];
                    let (gw, gb) = grad[off..off + layer.weights.len() + layer.bias.len()]
                        .split_at_mut(layer.weights.len());
                    gt = layer.backward(&cache.inputs[li], &gt, gw, gb);
                }
            }
        }
    }
    let n = samples.len().max(1) as f64;
    for v in grad.iter_mut() {
        *v /= n;
    }
    (loss / n, grad)
}

/// Mean cross-entropy without gradients.
pub fn loss_only<T: Scalar>(net: &Network<T>, pyramids: &[Vec<Grid2<f32>>], samples: &[Sample]) -> f64 {
    let mut loss = 0.0;
    for s in samples {
        let pats = net
            .patches_at(&pyramids[s.image], s.row, s.col)
            .expect("training positions lie inside every level");
        let p = net.forward_patch(&pats).expect("finite activations");
        loss -= p[s.class.index()].max(f64::MIN_POSITIVE).ln();
    }
    loss / samples.len().max(1) as f64
}

fn train_prepared<T: Scalar>(
    prep: &Prepared,
    topology: &Topology,
    cfg: &TrainConfig,
) -> Result<TrainResult<T>> {
    let mut net = Network::<T>::gaussian(topology, cfg.init_std, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5a3c_1e00_0001);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.learn_rate_at(epoch);
        let samples = class_balanced_samples(&prep.by_class, cfg.patches_per_class, &mut rng);
        let mut epoch_loss = 0.0;
        for batch in samples.chunks(cfg.batch_size) {
            let (loss, grad) = loss_and_gradient(&net, &prep.pyramids, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { iteration });
            }
            epoch_loss += loss * batch.len() as f64;
            if lr > 0.0 {
                for (p, g) in net.params_mut().into_iter().zip(&grad) {
                    *p = T::from_f64(p.to_f64() - lr * g);
                }
            }
            iteration += 1;
        }
        let mean = epoch_loss / samples.len() as f64;
        debug!("epoch {epoch}: lr {lr:.3e}, loss {mean:.5}");
        trace.push(mean);
    }
    Ok(TrainResult { network: net, loss_trace: trace })
}

/// Stochastic gradient descent on class-balanced patches.
pub fn train<T: Scalar>(dataset: &[LabeledImage], topology: &Topology, cfg: &TrainConfig) -> Result<TrainResult<T>> {
    cfg.validate()?;
    let prep = prepare(dataset, topology, &cfg.classes)?;
    train_prepared(&prep, topology, cfg)
}

/// Short trainings with each candidate learn rate; returns the rate with the
/// lowest final loss together with every `(rate, final loss)` pair.
/// Candidates that diverge are skipped.
pub fn select_learn_rate(
    dataset: &[LabeledImage],
    topology: &Topology,
    cfg: &TrainConfig,
    candidates: &[f64],
    mini_epochs: usize,
) -> Result<(f64, Vec<(f64, f64)>)> {
    cfg.validate()?;
    let prep = prepare(dataset, topology, &cfg.classes)?;
    let mut results = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &lr in candidates {
        let mini = TrainConfig {
            learn_rate: lr,
            epochs: mini_epochs,
            anneal_epochs: 0,
            ..cfg.clone()
        };
        match train_prepared::<f32>(&prep, topology, &mini) {
            Ok(r) => {
                let loss = r.loss_trace.last().copied().unwrap_or(f64::INFINITY);
                results.push((lr, loss));
                if loss.is_finite() && best.is_none_or(|(_, b)| loss < b) {
                    best = Some((lr, loss));
                }
            }
            Err(Error::Diverged { .. }) => results.push((lr, f64::INFINITY)),
            Err(e) => return Err(e),
        }
    }
    best.map(|(lr, _)| (lr, results))
        .ok_or(Error::Diverged { iteration: 0 })
}

/// Pixel accuracy of dense inference over the covered region of every image.
pub fn evaluate_accuracy<T: Scalar>(net: &Network<T>, dataset: &[LabeledImage]) -> Result<f64> {
    Ok(confusion(net, dataset)?.accuracy())
}

/// Confusion matrix of dense inference against the labels at the covered
/// anchor pixels.
pub fn confusion<T: Scalar>(net: &Network<T>, dataset: &[LabeledImage]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(crate::labels::NUM_CLASSES);
    for item in dataset {
        let pyr = build_pyramid(&item.image, &net.topology)?;
        let (out, map) = net.forward_dense(&pyr)?;
        let a = out.anchor;
        for r in 0..out.height {
            for c in 0..out.width {
                let truth = item.labels.class_at(out.origin.0 + r + a, out.origin.1 + c + a);
                cm.record(truth.index(), map.class_at(r, c).index());
            }
        }
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ConvVariant;

    fn stripes(seed: u64) -> LabeledImage {
        let split = 14 + (seed as usize * 7) % 12;
        let image = Grid2::from_fn(40, 40, |r, c| {
            let on = if c < split { r % 4 < 2 } else { c % 4 < 2 };
            if on { 200 } else { 40 }
        });
        let labels = ClassMembershipMap::from_labels(Grid2::from_fn(40, 40, |_, c| {
            if c < split { ClassId::Background as u8 } else { ClassId::Road as u8 }
        }))
        .unwrap();
        LabeledImage { image, labels }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            classes: vec![ClassId::Background, ClassId::Road],
            patches_per_class: 8,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learn_rate_keeps_init() {
        let t = Topology::new(1, 0, ConvVariant::Single7, 2).unwrap();
        let c = TrainConfig { learn_rate: 0.0, ..cfg() };
        let r = train::<f32>(&[stripes(0)], &t, &c).unwrap();
        assert_eq!(r.network, Network::gaussian(&t, c.init_std, c.seed));
    }

    #[test]
    fn same_seed_same_trace() {
        let t = Topology::new(1, 0, ConvVariant::Single7, 2).unwrap();
        let a = train::<f32>(&[stripes(0), stripes(1)], &t, &cfg()).unwrap();
        let b = train::<f32>(&[stripes(0), stripes(1)], &t, &cfg()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.loss_trace), bits(&b.loss_trace));
    }

    #[test]
    fn missing_class_is_rejected() {
        let t = Topology::new(1, 0, ConvVariant::Single7, 2).unwrap();
        let c = TrainConfig { classes: vec![ClassId::Road, ClassId::Sky], ..cfg() };
        let err = train::<f32>(&[stripes(0)], &t, &c).unwrap_err();
        assert!(err.to_string().contains("sky"), "{err}");
    }

    #[test]
    fn balanced_sampling() {
        let lists = vec![
            vec![Sample { image: 0, row: 0, col: 0, class: ClassId::Road }; 3],
            vec![Sample { image: 0, row: 1, col: 0, class: ClassId::Sky }; 50],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = class_balanced_samples(&lists, 10, &mut rng);
        assert_eq!(s.iter().filter(|x| x.class == ClassId::Road).count(), 10);
        assert_eq!(s.len(), 20);
    }

    #[test]
    fn annealing_is_linear() {
        let c = TrainConfig { learn_rate: 0.1, epochs: 10, ..TrainConfig::default() };
        assert_eq!(c.learn_rate_at(0), 0.1);
        assert!((c.learn_rate_at(5) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn learn_rate_sweep_picks_a_candidate() {
        let t = Topology::new(1, 0, ConvVariant::Single7, 2).unwrap();
        let (lr, all) = select_learn_rate(&[stripes(0)], &t, &cfg(), &[1e-1, 1e-2, 1e-3, 1e-4], 2).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().any(|&(r, _)| r == lr));
    }
}
