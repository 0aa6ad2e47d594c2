//! Fully connected Q-network with rectified-linear hidden layers and a
//! linear output layer, trained by plain mini-batch gradient descent.
//!
//! The per-sample loss is `Σ_o (y_o - t_o)²` and a batch loss is the mean
//! over samples.
//!
//! # Checkpoint format
//!
//! Plain text, one record per line:
//!
//! ```text
//! sensorlife-qnetwork 1
//! layout <input> <hidden...> <output>
//! layer <index> <relu|linear> <rows> <cols>
//! w <cols values>            (repeated `rows` times, row-major)
//! b <rows values>
//! ```
//!
//! Values are printed in Rust's shortest round-trip decimal form, so a
//! checkpoint reloads bit-identically.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::{Error, Result};

const MAGIC: &str = "sensorlife-qnetwork 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkLayout {
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
}

impl NetworkLayout {
    pub fn new(input_size: usize, hidden_sizes: Vec<usize>, output_size: usize) -> Result<Self> {
        if input_size == 0 || output_size == 0 || hidden_sizes.contains(&0) {
            return Err(Error::contract(format!(
                "layer sizes must be >= 1, got {input_size} -> {hidden_sizes:?} -> {output_size}"
            )));
        }
        Ok(Self {
            input_size,
            hidden_sizes,
            output_size,
        })
    }

    /// Three hidden layers of 1500 units over `3 n_sensors` inputs and five
    /// action values.
    pub fn q_network(n_sensors: usize) -> Self {
        Self {
            input_size: 3 * n_sensors,
            hidden_sizes: vec![1500; 3],
            output_size: 5,
        }
    }

    fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_size)
            .chain(self.hidden_sizes.iter().copied())
            .chain(std::iter::once(self.output_size))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            let z = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            match self.activation {
                Activation::Relu => z.max(0.0),
                Activation::Linear => z,
            }
        }));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub step_size: f64,
    pub batch_size: usize,
    pub epochs_per_update: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            batch_size: 32,
            epochs_per_update: 1,
        }
    }
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layout: NetworkLayout,
    layers: Vec<Layer>,
}

impl QNetwork {
    /// All-zero parameters.
    pub fn zeros(layout: &NetworkLayout) -> Result<Self> {
        let layout = NetworkLayout::new(layout.input_size, layout.hidden_sizes.clone(), layout.output_size)?;
        let sizes = layout.sizes();
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
                activation: if i == last { Activation::Linear } else { Activation::Relu },
            })
            .collect();
        Ok(Self { layout, layers })
    }

    /// Weights uniform with standard deviation `1/√fan_in`, zero biases.
    pub fn init<R: Rng + ?Sized>(layout: &NetworkLayout, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layout)?;
        for layer in &mut net.layers {
            let bound = 3.0f64.sqrt() / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn layout(&self) -> &NetworkLayout {
        &self.layout
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.layout.input_size {
            return Err(Error::contract(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.layout.input_size
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract("network input must be finite"));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.apply(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Activations of every layer, input first.
    fn trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(acts.last().unwrap(), &mut out);
            acts.push(out);
        }
        acts
    }

    fn check_batch(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(Error::contract(format!(
                "batch has {} inputs and {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        for (x, t) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            if t.len() != self.layout.output_size {
                return Err(Error::contract(format!(
                    "target has {} entries, network outputs {}",
                    t.len(),
                    self.layout.output_size
                )));
            }
        }
        Ok(())
    }

    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        let mut total = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            total += self.forward(x)?.iter().zip(t).map(|(y, t)| (y - t).powi(2)).sum::<f64>();
        }
        Ok(total / inputs.len() as f64)
    }

    /// Batch loss and its gradient by backpropagation.
    pub fn gradients(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        self.check_batch(inputs, targets)?;
        let scale = 1.0 / inputs.len() as f64;
        let mut grads = Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        };
        let mut loss = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            let acts = self.trace(x);
            let out = acts.last().unwrap();
            let mut delta: Vec<f64> = out.iter().zip(t).map(|(y, t)| 2.0 * (y - t) * scale).collect();
            loss += out.iter().zip(t).map(|(y, t)| (y - t).powi(2)).sum::<f64>() * scale;

            for (l, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[l];
                let gw = &mut grads.weights[l];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grads.bias[l][o] += d;
                    for (g, a) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // input[i] is the rectified output of the layer below
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, grads))
    }

    /// One gradient-descent step on the batch. Returns the loss before the
    /// step; leaves the network untouched on a non-finite loss or gradient.
    pub fn train_batch(&mut self, inputs: &[Vec<f64>], targets: &[Vec<f64>], config: &TrainConfig) -> Result<f64> {
        if !(config.step_size >= 0.0 && config.step_size.is_finite()) {
            return Err(Error::contract(format!("step size must be >= 0, got {}", config.step_size)));
        }
        let (loss, grads) = self.gradients(inputs, targets)?;
        let finite = loss.is_finite()
            && grads.weights.iter().chain(&grads.bias).flatten().all(|g| g.is_finite());
        if !finite {
            return Err(Error::numerical("non-finite loss or gradient; training step skipped"));
        }
        if config.step_size > 0.0 {
            for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w -= config.step_size * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(gb) {
                    *b -= config.step_size * g;
                }
            }
        }
        Ok(loss)
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                return &mut layer.weights[index];
            }
            index -= layer.weights.len();
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        let sizes: Vec<String> = self.layout.sizes().iter().map(|s| s.to_string()).collect();
        writeln!(w, "layout {}", sizes.join(" "))?;
        for (i, layer) in self.layers.iter().enumerate() {
            writeln!(w, "layer {i} {} {} {}", layer.activation.name(), layer.outputs, layer.inputs)?;
            for row in layer.weights.chunks_exact(layer.inputs) {
                writeln!(w, "w {}", join(row))?;
            }
            writeln!(w, "b {}", join(&layer.bias))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(checkpoint_error(i + 1, &format!("read failed: {e}"))),
                None => Err(checkpoint_error(0, &format!("unexpected end of file, expected {what}"))),
            }
        };
        let (n, magic) = next("header")?;
        if magic.trim() != MAGIC {
            return Err(checkpoint_error(n, "not a sensorlife Q-network checkpoint"));
        }
        let (n, layout_line) = next("layout")?;
        let sizes: Vec<usize> = parse_fields(n, &layout_line, "layout")?;
        if sizes.len() < 2 {
            return Err(checkpoint_error(n, "layout needs input and output sizes"));
        }
        let layout = NetworkLayout::new(sizes[0], sizes[1..sizes.len() - 1].to_vec(), sizes[sizes.len() - 1])
            .map_err(|e| checkpoint_error(n, &e.to_string()))?;
        let mut net = Self::zeros(&layout)?;
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let (n, header) = next("layer header")?;
            let expected = format!("layer {li} {} {} {}", layer.activation.name(), layer.outputs, layer.inputs);
            if header.trim() != expected {
                return Err(checkpoint_error(n, &format!("expected `{expected}`")));
            }
            for r in 0..layer.outputs {
                let (n, row) = next("weight row")?;
                let vals: Vec<f64> = parse_fields(n, &row, "w")?;
                if vals.len() != layer.inputs {
                    return Err(checkpoint_error(n, &format!("expected {} weights", layer.inputs)));
                }
                layer.weights[r * layer.inputs..(r + 1) * layer.inputs].copy_from_slice(&vals);
            }
            let (n, row) = next("bias row")?;
            let vals: Vec<f64> = parse_fields(n, &row, "b")?;
            if vals.len() != layer.outputs {
                return Err(checkpoint_error(n, &format!("expected {} biases", layer.outputs)));
            }
            layer.bias.copy_from_slice(&vals);
        }
        if net.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).any(|v| !v.is_finite()) {
            return Err(checkpoint_error(0, "non-finite parameter"));
        }
        Ok(net)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn checkpoint_error(line: usize, message: &str) -> Error {
    Error::Config {
        path: "<checkpoint>".into(),
        line,
        message: message.into(),
    }
}

fn parse_fields<T: std::str::FromStr>(line_no: usize, line: &str, tag: &str) -> Result<Vec<T>> {
    let mut fields = line.split_whitespace();
    if fields.next() != Some(tag) {
        return Err(checkpoint_error(line_no, &format!("expected `{tag}` record")));
    }
    fields
        .map(|f| f.parse().map_err(|_| checkpoint_error(line_no, &format!("bad number `{f}`"))))
        .collect()
}

/// Central finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// Largest relative disagreement between backpropagated and central
/// finite-difference gradients over all parameters; magnitudes below `1e-7`
/// are compared absolutely.
pub fn gradient_check(network: &QNetwork, input: &[f64], target: &[f64]) -> Result<f64> {
    let inputs = vec![input.to_vec()];
    let targets = vec![target.to_vec()];
    let (_, grads) = network.gradients(&inputs, &targets)?;
    let analytic: Vec<f64> = grads
        .weights
        .iter()
        .zip(&grads.bias)
        .flat_map(|(w, b)| w.iter().chain(b).copied())
        .collect();
    let mut probe = network.clone();
    let mut worst = 0.0f64;
    for (i, g) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + FD_STEP;
        let up = probe.loss(&inputs, &targets)?;
        *probe.param_mut(i) = orig - FD_STEP;
        let down = probe.loss(&inputs, &targets)?;
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let scale = g.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((g - numeric).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Smallest |pre-activation| over the hidden units for `x`.
    fn kink_margin(net: &QNetwork, x: &[f64]) -> f64 {
        let acts = net.trace(x);
        let mut margin = f64::INFINITY;
        for (layer, input) in net.layers().iter().zip(&acts).filter(|(l, _)| l.activation == Activation::Relu) {
            for o in 0..layer.outputs {
                let z: f64 = layer.bias[o]
                    + (0..layer.inputs).map(|i| layer.weights[o * layer.inputs + i] * input[i]).sum::<f64>();
                margin = margin.min(z.abs());
            }
        }
        margin
    }

    fn layout(i: usize, h: &[usize], o: usize) -> NetworkLayout {
        NetworkLayout::new(i, h.to_vec(), o).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn init_is_deterministic() {
        let l = layout(3, &[2], 5);
        assert_eq!(QNetwork::init(&l, &mut rng(9)).unwrap(), QNetwork::init(&l, &mut rng(9)).unwrap());
        assert_ne!(QNetwork::init(&l, &mut rng(9)).unwrap(), QNetwork::init(&l, &mut rng(10)).unwrap());
    }

    #[test]
    fn init_weights_are_centered() {
        let net = QNetwork::init(&layout(1000, &[1000], 5), &mut rng(3)).unwrap();
        let w = &net.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
        assert!((var * 1000.0 - 1.0).abs() < 0.01, "scaled variance {}", var * 1000.0);
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_width_layer_is_rejected() {
        assert!(NetworkLayout::new(3, vec![4, 0], 5).is_err());
        assert!(NetworkLayout::new(0, vec![4], 5).is_err());
    }

    #[test]
    fn forward_basics() {
        let zero = QNetwork::zeros(&layout(3, &[4, 4], 5)).unwrap();
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0; 5]);
        assert!(zero.forward(&[1.0, 2.0]).is_err());
        assert!(zero.forward(&[1.0, f64::NAN, 0.0]).is_err());

        let mut chain = QNetwork::zeros(&layout(1, &[1], 1)).unwrap();
        for l in chain.layers_mut() {
            l.weights[0] = 1.0;
        }
        assert_eq!(chain.forward(&[0.37]).unwrap(), vec![0.37]);
        assert_eq!(chain.forward(&[-0.37]).unwrap(), vec![0.0]);
    }

    #[test]
    fn output_layer_scaling() {
        let mut net = QNetwork::init(&layout(4, &[6, 6], 5), &mut rng(1)).unwrap();
        for l in net.layers_mut() {
            l.bias.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64 - 0.2);
        }
        let x = [0.3, 0.1, 0.9, 0.5];
        let base = net.forward(&x).unwrap();
        let last = net.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w *= 2.0);
        last.bias.iter_mut().for_each(|b| *b *= 2.0);
        let doubled = net.forward(&x).unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn fitted_targets_do_not_move_parameters() {
        let mut net = QNetwork::init(&layout(3, &[8], 5), &mut rng(2)).unwrap();
        let xs = vec![vec![0.1, 0.2, 0.3], vec![0.9, 0.0, 0.4]];
        let ts: Vec<_> = xs.iter().map(|x| net.forward(x).unwrap()).collect();
        let before = net.clone();
        let loss = net.train_batch(&xs, &ts, &TrainConfig { step_size: 0.1, ..Default::default() }).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn zero_step_size_reports_loss_only() {
        let mut net = QNetwork::init(&layout(3, &[8], 5), &mut rng(2)).unwrap();
        let before = net.clone();
        let xs = vec![vec![0.1, 0.2, 0.3]];
        let ts = vec![vec![1.0; 5]];
        let loss = net.train_batch(&xs, &ts, &TrainConfig { step_size: 0.0, ..Default::default() }).unwrap();
        assert!(loss > 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn overfits_one_sample() {
        let mut net = QNetwork::init(&layout(3, &[8], 5), &mut rng(5)).unwrap();
        let xs = vec![vec![0.5, 0.2, 0.8]];
        let ts = vec![vec![1.0, -0.5, 0.75, 0.2, -1.0]];
        let cfg = TrainConfig { step_size: 0.05, ..Default::default() };
        for _ in 0..500 {
            net.train_batch(&xs, &ts, &cfg).unwrap();
        }
        assert!(net.loss(&xs, &ts).unwrap() < 1e-6);
    }

    #[test]
    fn non_finite_gradients_leave_network_unchanged() {
        let mut net = QNetwork::init(&layout(2, &[3], 5), &mut rng(5)).unwrap();
        let before = net.clone();
        let err = net.train_batch(&[vec![0.1, 0.2]], &[vec![f64::INFINITY; 5]], &TrainConfig::default());
        assert!(matches!(err, Err(Error::Numerical(_))));
        assert_eq!(net, before);
    }

    #[test]
    fn supervised_loss_drops_hundredfold() {
        let mut r = rng(11);
        let net_layout = layout(3, &[32, 32], 5);
        let mut net = QNetwork::init(&net_layout, &mut r).unwrap();
        let xs: Vec<Vec<f64>> = (0..100).map(|_| (0..3).map(|_| r.random::<f64>()).collect()).collect();
        let ts: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                vec![x[0] + x[1], x[1] - x[2], 0.5 * x[0] * x[2], (x[0] - 0.5).abs(), 1.0 - x[1]]
            })
            .collect();
        let initial = net.loss(&xs, &ts).unwrap();
        let cfg = TrainConfig { step_size: 0.05, batch_size: 100, epochs_per_update: 1 };
        let mut history = Vec::new();
        for _ in 0..2000 {
            history.push(net.train_batch(&xs, &ts, &cfg).unwrap());
        }
        let last = net.loss(&xs, &ts).unwrap();
        assert!(initial / last >= 100.0, "{initial} -> {last}");
        // full-batch descent with a small step never goes uphill after the transient
        for w in history[10..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_network_has_zero_gradients() {
        let net = QNetwork::zeros(&layout(3, &[4], 5)).unwrap();
        let (_, g) = net.gradients(&[vec![0.2, 0.4, 0.6]], &[vec![0.0; 5]]).unwrap();
        assert!(g.weights.iter().chain(&g.bias).flatten().all(|&x| x == 0.0));
        assert_eq!(gradient_check(&net, &[0.2, 0.4, 0.6], &[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn linear_network_gradient_is_closed_form() {
        let mut r = rng(8);
        let net = QNetwork::init(&layout(4, &[], 5), &mut r).unwrap();
        let x = vec![0.3, -0.7, 1.1, 0.25];
        let t = vec![0.5, -1.0, 0.0, 2.0, 0.1];
        let y = net.forward(&x).unwrap();
        let (_, g) = net.gradients(&[x.clone()], &[t.clone()]).unwrap();
        for o in 0..5 {
            for j in 0..4 {
                let closed = 2.0 * (y[o] - t[o]) * x[j];
                assert!((g.weights[0][o * 4 + j] - closed).abs() < 1e-10);
            }
            assert!((g.bias[0][o] - 2.0 * (y[o] - t[o])).abs() < 1e-10);
        }
        assert!(gradient_check(&net, &x, &t).unwrap() < 1e-4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = QNetwork::init(&layout(6, &[7, 3], 5), &mut rng(4)).unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        let back = QNetwork::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, net);

        let text = String::from_utf8(buf).unwrap().replace("layer 1 relu", "layer 1 linear");
        assert!(QNetwork::read_from(text.as_bytes()).is_err());
        assert!(QNetwork::read_from("garbage\n".as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn backprop_matches_finite_differences(seed in 0u64..10_000) {
            let mut r = rng(seed);
            let hidden: Vec<usize> = (0..r.random_range(1..=3)).map(|_| r.random_range(2..=8)).collect();
            let inputs = r.random_range(1..=6);
            let net = QNetwork::init(&layout(inputs, &hidden, 5), &mut r).unwrap();
            let x: Vec<f64> = (0..inputs).map(|_| r.random_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
            // finite differences straddling a ReLU kink are meaningless
            prop_assume!(kink_margin(&net, &x) > 1e-3);
            prop_assert!(gradient_check(&net, &x, &t).unwrap() < 1e-4);
        }
    }
}
