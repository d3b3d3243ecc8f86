use tensor_autodiff::rng::stream_rng;
use tensor_autodiff::{Checkpoint, Mode, Tape, Tensor, Var};

use crate::classifier::{add_trunk, trunk, EVAL_CHUNK, INIT_STREAM, INPUT_SIDE, TRUNK_CHANNELS, TRUNK_SIDE};
use crate::error::{ModelError, Result};
use crate::net::{Layers, Net};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaeSpec {
    pub latent_dim: usize,
    /// Filters of the two decoder conv blocks at 14×14 and 28×28.
    pub decoder_channels: [usize; 2],
}

impl Default for VaeSpec {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            decoder_channels: [32, 16],
        }
    }
}

pub const ENCODER_CHANNELS: usize = 128;
pub const ENCODER_SIDE: usize = 4;

/// Encoder: the classifier's conv trunk, a fourth conv block (128 filters,
/// stride 2, 7×7 → 4×4), then linear heads for μ and log σ².
/// Decoder: linear to 64×7×7, two rounds of nearest-neighbour upsampling and
/// a conv block, a final 1-filter conv giving pixel logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub spec: VaeSpec,
    pub net: Net,
    decoder_start: (usize, usize),
}

/// Encoder outputs and decoder pixel logits for one recorded pass.
pub struct VaePass {
    pub mu: Var,
    pub logvar: Var,
    pub z: Var,
    pub logits: Var,
}

impl Vae {
    pub fn new(spec: VaeSpec, seed: u64) -> Self {
        let mut rng = stream_rng(seed, INIT_STREAM + 1);
        let mut net = Net::empty();
        add_trunk(&mut net, "enc.", &mut rng);
        net.add_conv("enc.conv4", TRUNK_CHANNELS, ENCODER_CHANNELS, &mut rng);
        net.add_bn("enc.bn4", ENCODER_CHANNELS);
        let flat = ENCODER_CHANNELS * ENCODER_SIDE * ENCODER_SIDE;
        net.add_linear("enc.mu", flat, spec.latent_dim, &mut rng);
        net.add_linear("enc.logvar", flat, spec.latent_dim, &mut rng);
        let decoder_start = (net.params.len(), net.stats.len());
        let [c1, c2] = spec.decoder_channels;
        net.add_linear("dec.fc", spec.latent_dim, TRUNK_CHANNELS * TRUNK_SIDE * TRUNK_SIDE, &mut rng);
        net.add_conv("dec.conv1", TRUNK_CHANNELS, c1, &mut rng);
        net.add_bn("dec.bn1", c1);
        net.add_conv("dec.conv2", c1, c2, &mut rng);
        net.add_bn("dec.bn2", c2);
        net.add_conv("dec.out", c2, 1, &mut rng);
        Self { spec, net, decoder_start }
    }

    pub fn encode(&mut self, tape: &mut Tape, vars: &[Var], x: Var, mode: Mode) -> Result<(Var, Var)> {
        let mut l = Layers::new(tape, vars, &mut self.net.stats, mode);
        let h = trunk(&mut l, x)?;
        let h = l.conv_block(h, 2)?;
        let h = l.tape.flatten(h)?;
        let mu = l.linear(h)?;
        let logvar = l.linear(h)?;
        Ok((mu, logvar))
    }

    /// Pixel logits `[N, 1, 28, 28]` for latents `z [N, latent_dim]`.
    pub fn decode(&mut self, tape: &mut Tape, vars: &[Var], z: Var, mode: Mode) -> Result<Var> {
        let (p, b) = self.decoder_start;
        let mut l = Layers::new(tape, vars, &mut self.net.stats, mode).resume_at(p, b);
        let n = l.tape.value(z).shape()[0];
        let h = l.linear(z)?;
        let h = l.tape.relu(h)?;
        let h = l.tape.reshape(h, &[n, TRUNK_CHANNELS, TRUNK_SIDE, TRUNK_SIDE])?;
        let h = l.tape.upsample_nearest(h, 2)?;
        let h = l.conv_block(h, 1)?;
        let h = l.tape.upsample_nearest(h, 2)?;
        let h = l.conv_block(h, 1)?;
        l.conv(h, 1)
    }

    /// Full pass with the draw `z = μ + σ·ε`.
    pub fn pass(&mut self, tape: &mut Tape, vars: &[Var], x: Var, eps: &Tensor, mode: Mode) -> Result<VaePass> {
        let (mu, logvar) = self.encode(tape, vars, x, mode)?;
        let z = tape.reparameterize(mu, logvar, eps)?;
        let logits = self.decode(tape, vars, z, mode)?;
        Ok(VaePass { mu, logvar, z, logits })
    }

    /// Eval-mode posterior means, log-variances and mean-latent
    /// reconstructions for flat images `[N · 784]`.
    pub fn reconstruct(&self, images: &[f64]) -> Result<Reconstruction> {
        let px = INPUT_SIDE * INPUT_SIDE;
        let n = images.len() / px;
        let d = self.spec.latent_dim;
        let mut out = Reconstruction {
            mu: Vec::with_capacity(n * d),
            logvar: Vec::with_capacity(n * d),
            recon: Vec::with_capacity(n * px),
        };
        let mut this = self.clone();
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            let mut tape = Tape::new();
            let vars = this.net.register(&mut tape, false)?;
            let x = tape.constant(Tensor::new(
                vec![end - start, 1, INPUT_SIDE, INPUT_SIDE],
                images[start * px..end * px].to_vec(),
            )?)?;
            let (mu, logvar) = this.encode(&mut tape, &vars, x, Mode::Eval)?;
            let logits = this.decode(&mut tape, &vars, mu, Mode::Eval)?;
            let recon = tape.sigmoid(logits)?;
            out.mu.extend_from_slice(tape.value(mu).data());
            out.logvar.extend_from_slice(tape.value(logvar).data());
            out.recon.extend_from_slice(tape.value(recon).data());
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("kind".into(), "vae".into());
        ck.meta.insert("latent_dim".into(), self.spec.latent_dim.to_string());
        ck.meta.insert(
            "decoder_channels".into(),
            format!("{} {}", self.spec.decoder_channels[0], self.spec.decoder_channels[1]),
        );
        self.net.write_into(&mut ck, "");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").map(String::as_str) != Some("vae") {
            return Err(ModelError::Config("checkpoint is not a VAE".into()));
        }
        let parse = |key: &str| -> Result<Vec<usize>> {
            ck.meta
                .get(key)
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks {key}")))?
                .split(' ')
                .map(|v| v.parse().map_err(|_| ModelError::Config(format!("bad {key}"))))
                .collect()
        };
        let latent = parse("latent_dim")?;
        let dec = parse("decoder_channels")?;
        if latent.len() != 1 || dec.len() != 2 {
            return Err(ModelError::Config("malformed VAE metadata".into()));
        }
        let mut v = Vae::new(
            VaeSpec {
                latent_dim: latent[0],
                decoder_channels: [dec[0], dec[1]],
            },
            0,
        );
        v.net.read_from(ck, "")?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub recon: Vec<f64>,
}
