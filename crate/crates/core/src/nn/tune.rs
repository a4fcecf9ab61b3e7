use super::network::Network;
use super::pyramid::build_pyramid;
use super::train::{confusion, LabeledImage};
use super::Scalar;
use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;
use crate::metrics::ConfusionMatrix;

pub const BIAS_GRID_STEP: f64 = 0.1;
/// Offsets range over `±BIAS_GRID_STEPS · BIAS_GRID_STEP`.
pub const BIAS_GRID_STEPS: i32 = 20;
pub const BIAS_SWEEPS: usize = 2;

fn mcc_with_offsets(pixels: &[([f64; NUM_CLASSES], usize)], delta: &[f64; NUM_CLASSES]) -> f64 {
    let mut cm = ConfusionMatrix::new(NUM_CLASSES);
    for (logits, truth) in pixels {
        let mut best = 0;
        let mut best_v = logits[0] + delta[0];
        for k in 1..NUM_CLASSES {
            let v = logits[k] + delta[k];
            if v > best_v {
                best = k;
                best_v = v;
            }
        }
        cm.record(*truth, best);
    }
    cm.mcc()
}

/// Adjusts the output-layer biases to maximise validation MCC.
///
/// Cyclic coordinate search: each class offset in turn is set to the grid
/// value that strictly improves MCC the most. The returned network never
/// scores below the input on the validation set.
pub fn tune_biases_mcc<T: Scalar>(net: &Network<T>, validation: &[LabeledImage]) -> Result<Network<T>> {
    if validation.is_empty() {
        return Err(Error::InvalidInput("empty validation set".into()));
    }
    let mut pixels = Vec::new();
    for item in validation {
        let pyr = build_pyramid(&item.image, &net.topology)?;
        let out = net.dense_logits(&pyr)?;
        let a = out.anchor;
        for r in 0..out.height {
            for c in 0..out.width {
                let mut l = [0.0; NUM_CLASSES];
                l.copy_from_slice(out.pixel_logits(r, c));
                let truth = item.labels.class_at(out.origin.0 + r + a, out.origin.1 + c + a);
                pixels.push((l, truth.index()));
            }
        }
    }
    let mut delta = [0.0; NUM_CLASSES];
    let mut best = mcc_with_offsets(&pixels, &delta);
    let base = best;
    for _ in 0..BIAS_SWEEPS {
        for k in 0..NUM_CLASSES {
            for i in -BIAS_GRID_STEPS..=BIAS_GRID_STEPS {
                let mut cand = delta;
                cand[k] = i as f64 * BIAS_GRID_STEP;
                let m = mcc_with_offsets(&pixels, &cand);
                if m > best {
                    best = m;
                    delta = cand;
                }
            }
        }
    }
    if best <= base {
        return Ok(net.clone());
    }
    let mut tuned = net.clone();
    for (b, d) in tuned.output_layer_mut().bias.iter_mut().zip(delta) {
        *b = T::from_f64(b.to_f64() + d);
    }
    // storage rounding of the biases could in principle flip a tie
    if confusion(&tuned, validation)?.mcc() < confusion(net, validation)?.mcc() {
        return Ok(net.clone());
    }
    Ok(tuned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Grid2;
    use crate::labels::{ClassId, ClassMembershipMap};
    use crate::nn::{ConvVariant, Topology};

    fn item(seed: u64) -> LabeledImage {
        // sky: flat; road: horizontal stripes
        let image = Grid2::from_fn(24, 24, |r, c| {
            if r < 12 {
                100
            } else if (r + seed as usize) % 4 < 2 {
                200
            } else {
                40 + (c % 2) as u8
            }
        });
        let labels = ClassMembershipMap::from_labels(Grid2::from_fn(24, 24, |r, _| {
            if r < 12 { ClassId::Sky as u8 } else { ClassId::Road as u8 }
        }))
        .unwrap();
        LabeledImage { image, labels }
    }

    #[test]
    fn starved_road_class_gets_a_higher_bias() {
        // one centre-tap filter responds to the striped road texture; the
        // road bias is set so low that road is never predicted
        let t = Topology::new(1, 0, ConvVariant::Single7, 1).unwrap();
        let mut net = Network::<f32>::zeros(&t);
        net.branches[0][0].weights[24] = 1.0;
        let out = net.output_layer_mut();
        out.bias = vec![-5.0, -2.0, -5.0, 0.0, -5.0, -5.0];
        out.weights[ClassId::Road.index()] = 1.0;
        let val = vec![item(0), item(1)];
        let before = confusion(&net, &val).unwrap();
        assert_eq!(before.predicted_total(ClassId::Road.index()), 0);
        let tuned = tune_biases_mcc(&net, &val).unwrap();
        let after = confusion(&tuned, &val).unwrap();
        assert!(after.mcc() > before.mcc());
        assert!(tuned.output_layer().bias[1] > net.output_layer().bias[1]);
        // only output biases change
        let mut restored = tuned.clone();
        restored.output_layer_mut().bias = net.output_layer().bias.clone();
        assert_eq!(restored, net);
    }

    #[test]
    fn optimal_classifier_is_unchanged() {
        let t = Topology::new(1, 0, ConvVariant::Single7, 2).unwrap();
        let mut net = Network::<f32>::zeros(&t);
        net.output_layer_mut().bias[ClassId::Sky.index()] = 1.0;
        let sky_only = LabeledImage {
            image: Grid2::filled(20, 20, 9),
            labels: ClassMembershipMap::filled(20, 20, ClassId::Sky),
        };
        // a single true class gives MCC 0 for every prediction, so nothing improves
        let tuned = tune_biases_mcc(&net, &[sky_only]).unwrap();
        assert_eq!(tuned, net);
    }

    #[test]
    fn constant_bias_shift_keeps_labels() {
        let t = Topology::new(1, 1, ConvVariant::Triple3, 2).unwrap();
        let net = Network::<f32>::gaussian(&t, 0.5, 11);
        let mut shifted = net.clone();
        for b in shifted.output_layer_mut().bias.iter_mut() {
            *b += 1.0;
        }
        let it = item(4);
        let pyr = build_pyramid(&it.image, &t).unwrap();
        let (_, a) = net.forward_dense(&pyr).unwrap();
        let (_, b) = shifted.forward_dense(&pyr).unwrap();
        assert_eq!(a.labels(), b.labels());
    }
}
