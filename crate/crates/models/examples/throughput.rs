//! Times training steps of each model on random images.

use std::time::Instant;

use data_io::{IdxDataset, Split};
use models::*;

fn dataset(n: usize) -> IdxDataset {
    let images = (0..n * 784).map(|i| ((i * 2654435761usize) >> 7) as u8).collect();
    let labels = (0..n).map(|i| (i % 10) as u8).collect();
    IdxDataset::new(images, labels, Split::Train).unwrap()
}

fn main() {
    let ds = dataset(640);
    let cfg = TrainConfig::new(1, 0);
    let t = Instant::now();
    let run = classifier_train(&ds, &cfg, None).unwrap();
    println!("classifier: {:.1} ms/step", t.elapsed().as_secs_f64() * 100.0);
    let cls = run.classifier;
    for (name, spec) in [("32,16", VaeSpec::default()), ("16,8", VaeSpec { latent_dim: 8, decoder_channels: [16, 8] })] {
        for obj in [
            Objective::Vanilla { beta: 1.0 },
            Objective::ActionCentric { beta: 1e-3, divergence: Divergence::ClassifierKl },
        ] {
            let t = Instant::now();
            vae_train(&ds, obj, Some(&cls), None, spec, &cfg, None).unwrap();
            println!("vae {name} {}: {:.1} ms/step", obj.mode(), t.elapsed().as_secs_f64() * 100.0);
        }
    }
    let probe: Vec<f64> = (0..512 * 784).map(|i| (i % 255) as f64 / 255.0).collect();
    let labels: Vec<usize> = (0..512).map(|i| i % 10).collect();
    let vae = Vae::new(VaeSpec::default(), 0);
    let t = Instant::now();
    evaluate_downstream(&vae, &cls, &probe, &labels).unwrap();
    println!("probe of 512: {:.2} s", t.elapsed().as_secs_f64());
}
