//! Named parameter lists and the sequential layer builder shared by both
//! architectures.

use rand::Rng;
use tensor_autodiff::rng::TrainRng;
use tensor_autodiff::{Checkpoint, Mode, RunningStats, Tape, Tensor, Var};

use crate::error::{ModelError, Result};

/// Parameters in the order the forward pass consumes them, plus batchnorm
/// running statistics in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
    pub stats: Vec<RunningStats>,
}

impl Net {
    pub(crate) fn empty() -> Self {
        Self {
            names: Vec::new(),
            params: Vec::new(),
            stats: Vec::new(),
        }
    }

    fn push(&mut self, name: String, t: Tensor) {
        self.names.push(name);
        self.params.push(t);
    }

    /// Weights and biases drawn from `U(−1/√fan_in, 1/√fan_in)`.
    fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut TrainRng) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.push(name.to_string(), Tensor::new(shape.to_vec(), data).unwrap());
    }

    pub(crate) fn add_conv(&mut self, name: &str, cin: usize, cout: usize, rng: &mut TrainRng) {
        let fan_in = cin * 9;
        self.uniform(&format!("{name}.weight"), &[cout, cin, 3, 3], fan_in, rng);
        self.uniform(&format!("{name}.bias"), &[cout], fan_in, rng);
    }

    pub(crate) fn add_bn(&mut self, name: &str, channels: usize) {
        self.push(format!("{name}.gamma"), Tensor::full(&[channels], 1.0));
        self.push(format!("{name}.beta"), Tensor::zeros(&[channels]));
        self.stats.push(RunningStats::new(channels));
    }

    pub(crate) fn add_linear(&mut self, name: &str, inp: usize, out: usize, rng: &mut TrainRng) {
        self.uniform(&format!("{name}.weight"), &[out, inp], inp, rng);
        self.uniform(&format!("{name}.bias"), &[out], inp, rng);
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records every parameter on the tape; frozen parameters get no gradient.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Result<Vec<Var>> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.clone(), trainable).map_err(Into::into))
            .collect()
    }

    pub fn write_into(&self, ck: &mut Checkpoint, prefix: &str) {
        for (n, p) in self.names.iter().zip(&self.params) {
            ck.push(format!("{prefix}{n}"), p.clone());
        }
        for (i, s) in self.stats.iter().enumerate() {
            ck.push(format!("{prefix}bn{i}.running_mean"), Tensor::new(vec![s.mean.len()], s.mean.clone()).unwrap());
            ck.push(format!("{prefix}bn{i}.running_var"), Tensor::new(vec![s.var.len()], s.var.clone()).unwrap());
        }
    }

    /// Replaces every value with the checkpoint's, requiring identical shapes.
    pub fn read_from(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        let fetch = |name: String, shape: &[usize]| -> Result<Tensor> {
            let t = ck
                .get(&name)
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks tensor {name}")))?;
            if t.shape() != shape {
                return Err(ModelError::Config(format!(
                    "checkpoint tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for (n, p) in self.names.iter().zip(self.params.iter_mut()) {
            *p = fetch(format!("{prefix}{n}"), p.shape())?;
        }
        for (i, s) in self.stats.iter_mut().enumerate() {
            let c = s.mean.len();
            s.mean = fetch(format!("{prefix}bn{i}.running_mean"), &[c])?.into_data();
            s.var = fetch(format!("{prefix}bn{i}.running_var"), &[c])?.into_data();
        }
        Ok(())
    }
}

/// Walks parameters and batchnorm statistics in declaration order while the
/// forward pass is recorded.
pub(crate) struct Layers<'a> {
    pub tape: &'a mut Tape,
    vars: &'a [Var],
    next: usize,
    stats: &'a mut [RunningStats],
    next_bn: usize,
    pub mode: Mode,
}

impl<'a> Layers<'a> {
    pub fn new(tape: &'a mut Tape, vars: &'a [Var], stats: &'a mut [RunningStats], mode: Mode) -> Self {
        Self {
            tape,
            vars,
            next: 0,
            stats,
            next_bn: 0,
            mode,
        }
    }

    /// Continues from where another walker over the same net stopped.
    pub fn resume_at(mut self, next: usize, next_bn: usize) -> Self {
        self.next = next;
        self.next_bn = next_bn;
        self
    }

    fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }

    pub fn conv(&mut self, x: Var, stride: usize) -> Result<Var> {
        let (w, b) = (self.take(), self.take());
        Ok(self.tape.conv2d(x, w, b, stride, 1)?)
    }

    /// Convolution, batchnorm, ReLU.
    pub fn conv_block(&mut self, x: Var, stride: usize) -> Result<Var> {
        let y = self.conv(x, stride)?;
        let (g, b) = (self.take(), self.take());
        let stats = &mut self.stats[self.next_bn];
        self.next_bn += 1;
        let y = self.tape.batchnorm2d(y, g, b, stats, self.mode)?;
        Ok(self.tape.relu(y)?)
    }

    pub fn linear(&mut self, x: Var) -> Result<Var> {
        let (w, b) = (self.take(), self.take());
        Ok(self.tape.linear(x, w, b)?)
    }
}
