//! Finite-difference check of the labeler's backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenekit::net::{ToyNet, DEFAULT_SCALES};
use scenekit::{LabelMap, RgbImage, IGNORE};

pub const EPS: f64 = 1e-4;
pub const PER_LAYER: usize = 20;

fn sample(rng: &mut ChaCha8Rng, size: usize, classes: usize) -> (RgbImage, LabelMap) {
    let image = RgbImage::new(size, size, (0..size * size * 3).map(|_| rng.random()).collect()).unwrap();
    let labels = LabelMap::new(
        size,
        size,
        (0..size * size)
            .map(|_| if rng.random_bool(0.1) { IGNORE } else { rng.random_range(0..classes) as u8 })
            .collect(),
    )
    .unwrap();
    (image, labels)
}

fn param(net: &mut ToyNet<f64>, layer: usize, k: usize) -> &mut f64 {
    let l = &mut net.layers[layer];
    let nw = l.weights.len();
    if k < nw {
        &mut l.weights[k]
    } else {
        &mut l.bias[k - nw]
    }
}

/// Index of the scale whose score wins the max fusion at every
/// (pixel, class), lowest index on ties.
fn fusion_winners(net: &ToyNet<f64>, image: &RgbImage) -> Vec<usize> {
    let maps = net.forward(image).unwrap();
    let n = maps[0].as_slice().len();
    (0..n)
        .map(|i| {
            let mut best = 0;
            for (s, m) in maps.iter().enumerate() {
                if m.as_slice()[i] > maps[best].as_slice()[i] {
                    best = s;
                }
            }
            best
        })
        .collect()
}

pub struct Check {
    pub worst: [f64; 3],
    pub checked: [usize; 3],
    pub skipped: [usize; 3],
}

fn central_difference(net: &mut ToyNet<f64>, layer: usize, k: usize, h: f64, image: &RgbImage, labels: &LabelMap) -> (f64, bool) {
    let orig = *param(net, layer, k);
    *param(net, layer, k) = orig + h;
    let plus = net.loss(image, labels).unwrap();
    let winners_plus = fusion_winners(net, image);
    *param(net, layer, k) = orig - h;
    let minus = net.loss(image, labels).unwrap();
    let winners_minus = fusion_winners(net, image);
    *param(net, layer, k) = orig;
    ((plus - minus) / (2.0 * h), winners_plus == winners_minus)
}

/// Central differences on random coordinates of each layer. A coordinate is
/// skipped when its stencil straddles a kink: either a max-fusion winner
/// changes, or the differences at EPS and EPS/2 disagree beyond the O(EPS^2)
/// drift a smooth loss allows (a ReLU crossing zero).
pub fn gradient_check(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = 4;
    let mut net = ToyNet::<f64>::init(classes, &DEFAULT_SCALES, seed).unwrap();
    let (image, labels) = sample(&mut rng, 12, classes);
    let (_, grads) = net.loss_and_gradients(&image, &labels).unwrap();
    let mut out = Check { worst: [0.0; 3], checked: [0; 3], skipped: [0; 3] };
    for layer in 0..3 {
        let n = net.layers[layer].weights.len() + net.layers[layer].bias.len();
        let nw = grads[layer].weights.len();
        while out.checked[layer] < PER_LAYER && out.skipped[layer] < 10 * PER_LAYER {
            let k = rng.random_range(0..n);
            let analytic = if k < nw { grads[layer].weights[k] } else { grads[layer].bias[k - nw] };
            let (numeric, same_winners) = central_difference(&mut net, layer, k, EPS, &image, &labels);
            let (half, same_half) = central_difference(&mut net, layer, k, EPS / 2.0, &image, &labels);
            let smooth = (numeric - half).abs() <= 1e-6 * numeric.abs().max(half.abs()) + 1e-10;
            if !(same_winners && same_half && smooth) {
                out.skipped[layer] += 1;
                continue;
            }
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            if std::env::var_os("GRADCHECK_VERBOSE").is_some() {
                eprintln!("layer {layer} k {k}: analytic {analytic:e} numeric {numeric:e} rel {rel:e}");
            }
            out.worst[layer] = out.worst[layer].max(rel);
            out.checked[layer] += 1;
        }
    }
    out
}

