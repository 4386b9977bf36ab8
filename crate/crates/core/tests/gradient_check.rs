//! Central finite differences against the analytic gradients, per layer type.

use mbsr_core::model::{SrModel, SrModelConfig, Tensor4};
use mbsr_core::rng::SplitMix64;

/// Random inputs, with targets 0.5 to 1 above or below the current output so
/// that no finite-difference step crosses the kink of the L1 loss.
fn batch(model: &SrModel<f64>, n: usize, seed: u64) -> (Tensor4<f64>, Tensor4<f64>) {
    let mut r = SplitMix64::new(seed);
    let c = model.config().in_channels;
    let x = Tensor4::from_vec(n, c, 16, 16, (0..n * c * 256).map(|_| r.next_f64()).collect()).unwrap();
    let y = model
        .forward(&x)
        .unwrap()
        .data
        .iter()
        .map(|o| {
            let d = 0.5 + 0.5 * r.next_f64();
            if r.next_u64() & 1 == 0 { o + d } else { o - d }
        })
        .collect();
    (x, Tensor4::from_vec(n, 1, 64, 64, y).unwrap())
}

fn loss_at(model: &SrModel<f64>, x: &Tensor4<f64>, y: &Tensor4<f64>) -> f64 {
    let out = model.forward(x).unwrap();
    out.data.iter().zip(&y.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / out.data.len() as f64
}

/// Worst relative error over up to `per_layer` sampled parameters of each tensor group.
fn check(cfg: SrModelConfig, per_layer: usize, seed: u64) -> Vec<(String, usize, f64)> {
    let mut model = SrModel::<f64>::init(cfg, seed).unwrap();
    // Undo the small-output init so every layer has gradients well above rounding noise.
    for slot in model.layout().slots() {
        if slot.name.ends_with("gate_up.weight") || slot.name == "tail.weight" {
            slot.range().for_each(|i| model.params_mut()[i] *= 10.0);
        }
    }
    let (x, y) = batch(&model, 2, seed + 1);
    let (_, grads) = model.loss_and_gradients(&x, &y).unwrap();
    let layout = model.layout();
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for slot in layout.slots() {
        let group = if slot.name.starts_with("head") {
            "head"
        } else if slot.name.contains("gate") {
            "attention"
        } else if slot.name.contains("conv") {
            "residual"
        } else if slot.name.starts_with("upsample") {
            "depth_to_space"
        } else {
            "tail"
        };
        match groups.iter_mut().find(|g| g.0 == group) {
            Some(g) => g.1.extend(slot.range()),
            None => groups.push((group.to_string(), slot.range().collect())),
        }
    }
    let mut rng = SplitMix64::new(seed ^ 0xfd);
    let h = 1e-5;
    let mut out = Vec::new();
    for (name, mut idx) in groups {
        rng.shuffle(&mut idx);
        idx.truncate(per_layer);
        let mut worst: f64 = 0.0;
        for &i in &idx {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss_at(&plus, &x, &y) - loss_at(&minus, &x, &y)) / (2.0 * h);
            let an = grads[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        out.push((name, idx.len(), worst));
    }
    out
}

#[test]
fn tiny_model_gradients() {
    let cfg = SrModelConfig {
        in_channels: 3,
        features: 4,
        blocks: 1,
        attention_reduction: 2,
        scale: 4,
    };
    for (name, n, worst) in check(cfg, 50, 11) {
        println!("{name}: {n} params, max rel err {worst:.3e}");
        assert!(worst <= 1e-4, "{name}: {worst}");
    }
}
