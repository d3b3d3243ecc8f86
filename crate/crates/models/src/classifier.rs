use tensor_autodiff::rng::{stream_rng, TrainRng};
use tensor_autodiff::{Checkpoint, Mode, Tape, Tensor, Var};

use crate::error::{ModelError, Result};
use crate::net::{Layers, Net};

pub const INPUT_SIDE: usize = 28;
pub const CLASSES: usize = 10;
pub const DROPOUT: f64 = 0.2;
pub(crate) const INIT_STREAM: u64 = 1 << 40;

/// Three conv blocks (16/32/64 filters, strides 1/1/2, each with batchnorm and
/// ReLU; 2×2 max pools of stride 2 and 1 after the first two), then fully
/// connected layers 512 → 128 → 10 with dropout after the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: Net,
}

/// Feature map side after the shared conv trunk: 28 → pool 14 → pool 13 → stride-2 conv 7.
pub const TRUNK_SIDE: usize = 7;
pub const TRUNK_CHANNELS: usize = 64;

pub(crate) fn add_trunk(net: &mut Net, prefix: &str, rng: &mut TrainRng) {
    net.add_conv(&format!("{prefix}conv1"), 1, 16, rng);
    net.add_bn(&format!("{prefix}bn1"), 16);
    net.add_conv(&format!("{prefix}conv2"), 16, 32, rng);
    net.add_bn(&format!("{prefix}bn2"), 32);
    net.add_conv(&format!("{prefix}conv3"), 32, 64, rng);
    net.add_bn(&format!("{prefix}bn3"), 64);
}

pub(crate) fn trunk(l: &mut Layers, x: Var) -> Result<Var> {
    let h = l.conv_block(x, 1)?;
    let h = l.tape.maxpool2d(h, 2, 2)?;
    let h = l.conv_block(h, 1)?;
    let h = l.tape.maxpool2d(h, 2, 1)?;
    l.conv_block(h, 2)
}

impl Classifier {
    pub fn new(seed: u64) -> Self {
        let mut rng = stream_rng(seed, INIT_STREAM);
        let mut net = Net::empty();
        add_trunk(&mut net, "", &mut rng);
        let flat = TRUNK_CHANNELS * TRUNK_SIDE * TRUNK_SIDE;
        net.add_linear("fc1", flat, 512, &mut rng);
        net.add_linear("fc2", 512, 128, &mut rng);
        net.add_linear("fc3", 128, CLASSES, &mut rng);
        Self { net }
    }

    /// Logits `[N, 10]` for images `x [N, 1, 28, 28]`. In train mode the
    /// batchnorm statistics are updated in place and `rng` drives dropout.
    pub fn forward(&mut self, tape: &mut Tape, vars: &[Var], x: Var, mode: Mode, rng: &mut TrainRng) -> Result<Var> {
        forward_with(tape, vars, &mut self.net.stats, x, mode, rng)
    }

    /// Eval-mode logits with the parameters treated as constants, so
    /// gradients reach `x` but never the classifier.
    pub fn frozen_logits(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut stats = self.net.stats.clone();
        // Eval mode draws nothing from the generator.
        let mut unused = stream_rng(0, 0);
        forward_with(tape, vars, &mut stats, x, Mode::Eval, &mut unused)
    }

    /// Eval-mode logits for flat images `[N · 784]` in `[0, 1]`.
    pub fn predict(&self, images: &[f64]) -> Result<Tensor> {
        let n = images.len() / (INPUT_SIDE * INPUT_SIDE);
        let mut parts = Vec::new();
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            let mut tape = Tape::new();
            let vars = self.net.register(&mut tape, false)?;
            let x = tape.constant(Tensor::new(
                vec![end - start, 1, INPUT_SIDE, INPUT_SIDE],
                images[start * 784..end * 784].to_vec(),
            )?)?;
            let y = self.frozen_logits(&mut tape, &vars, x)?;
            parts.push(tape.value(y).clone());
        }
        Ok(Tensor::concat_rows(&parts)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("kind".into(), "classifier".into());
        self.net.write_into(&mut ck, "");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").map(String::as_str) != Some("classifier") {
            return Err(ModelError::Config("checkpoint is not a classifier".into()));
        }
        let mut c = Classifier::new(0);
        c.net.read_from(ck, "")?;
        Ok(c)
    }
}

pub(crate) const EVAL_CHUNK: usize = 128;

fn forward_with(
    tape: &mut Tape,
    vars: &[Var],
    stats: &mut [tensor_autodiff::RunningStats],
    x: Var,
    mode: Mode,
    rng: &mut TrainRng,
) -> Result<Var> {
    let mut l = Layers::new(tape, vars, stats, mode);
    let h = trunk(&mut l, x)?;
    let h = l.tape.flatten(h)?;
    let h = l.linear(h)?;
    let h = l.tape.relu(h)?;
    let h = l.tape.dropout(h, DROPOUT, mode, rng)?;
    let h = l.linear(h)?;
    let h = l.tape.relu(h)?;
    l.linear(h)
}
