use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::config::{LossWeights, MessagePair, ModelConfig};
use crate::channel::{draw_noise, energy_scale, normalize_energy_backward};
use crate::nn::{
    cross_entropy, softmax_cross_entropy_grad, Activation, DenseStack, GradientStore, Objective,
    Optimizer, OutputGrad, ParamId, ParamKind, ParamSlot, StackCache,
};
use crate::otfg::{resample_plan, GridSignal, ResamplePlan};
use crate::{Error, Result};

/// Identifies one of the networks inside an [`Autoencoder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Network {
    TxIntech,
    TxCtc,
    RxIntech,
    RxCtc(usize),
}

impl Network {
    pub fn name(self) -> &'static str {
        match self {
            Network::TxIntech => "tx_intech",
            Network::TxCtc => "tx_ctc",
            Network::RxIntech => "rx_intech",
            Network::RxCtc(_) => "rx_ctc",
        }
    }

    pub fn receiver(self) -> Option<usize> {
        match self {
            Network::RxCtc(i) => Some(i),
            _ => None,
        }
    }

    /// `tx_intech`, `rx_ctc[1]`, ...
    pub fn label(self) -> String {
        match self {
            Network::RxCtc(i) => alloc::format!("rx_ctc[{i}]"),
            other => String::from(other.name()),
        }
    }

    pub fn parse_label(label: &str) -> Option<Self> {
        match label {
            "tx_intech" => Some(Network::TxIntech),
            "tx_ctc" => Some(Network::TxCtc),
            "rx_intech" => Some(Network::RxIntech),
            other => other
                .strip_prefix("rx_ctc[")?
                .strip_suffix(']')?
                .parse()
                .ok()
                .map(Network::RxCtc),
        }
    }
}

pub type NetworkRef<'a> = (Network, &'a DenseStack);

/// `size`-vector of zeros with a one at `s`.
pub fn one_hot(s: usize, size: usize) -> Result<Vec<f64>> {
    if s >= size {
        return Err(Error::IndexOutOfRange { index: s, size });
    }
    let mut v = vec![0.0; size];
    v[s] = 1.0;
    Ok(v)
}

/// Index of the largest probability, ties to the lowest index.
pub fn decode(p: &[f64]) -> Result<usize> {
    if p.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverOutputs {
    pub intech: Option<Vec<f64>>,
    pub ctc: Vec<Vec<f64>>,
}

/// Parameter gradients for every network of an [`Autoencoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub tx_intech: Option<GradientStore>,
    pub tx_ctc: GradientStore,
    pub rx_intech: Option<GradientStore>,
    pub rx_ctc: Vec<GradientStore>,
}

impl ModelGradients {
    fn zeros_like(model: &Autoencoder) -> Self {
        Self {
            tx_intech: model.tx_intech.as_ref().map(GradientStore::zeros_like),
            tx_ctc: GradientStore::zeros_like(&model.tx_ctc),
            rx_intech: model.rx_intech.as_ref().map(GradientStore::zeros_like),
            rx_ctc: model.rx_ctc.iter().map(GradientStore::zeros_like).collect(),
        }
    }

    /// Stores in canonical network order.
    pub fn stores(&self) -> Vec<(Network, &GradientStore)> {
        let mut out = Vec::with_capacity(3 + self.rx_ctc.len());
        if let Some(g) = &self.tx_intech {
            out.push((Network::TxIntech, g));
        }
        out.push((Network::TxCtc, &self.tx_ctc));
        if let Some(g) = &self.rx_intech {
            out.push((Network::RxIntech, g));
        }
        out.extend(
            self.rx_ctc
                .iter()
                .enumerate()
                .map(|(i, g)| (Network::RxCtc(i), g)),
        );
        out
    }

    /// All gradient values in canonical flat parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.stores()
            .into_iter()
            .flat_map(|(_, s)| s.values().copied())
            .collect()
    }
}

/// Batch-mean losses and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub loss: f64,
    pub intech: Option<f64>,
    pub ctc: Vec<f64>,
    pub gradients: ModelGradients,
}

/// Transmitter branches (one-hot → hidden ReLU → linear `t·f`) feeding an
/// add + energy-normalization layer, an AWGN channel, and softmax receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    config: ModelConfig,
    tx_intech: Option<DenseStack>,
    tx_ctc: DenseStack,
    rx_intech: Option<DenseStack>,
    rx_ctc: Vec<DenseStack>,
    plans: Vec<ResamplePlan>,
}

struct TxPass {
    intech: Option<StackCache>,
    ctc: StackCache,
    sum: Vec<f64>,
    x: Vec<f64>,
}

impl Autoencoder {
    pub fn build<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n = config.tx_grid.channel_uses();
        let (width, depth) = (config.hidden_width(), config.hidden_depth);
        let (m, c) = (config.intech_alphabet, config.ctc_alphabet);
        let tx_intech = config
            .intech_enabled
            .then(|| DenseStack::mlp(m, width, depth, n, Activation::Linear, rng));
        let tx_ctc = DenseStack::mlp(c, width, depth, n, Activation::Linear, rng);
        let rx_intech = config
            .intech_enabled
            .then(|| DenseStack::mlp(n, width, depth, m, Activation::Softmax, rng));
        let rx_ctc = config
            .ctc_rx_grids
            .iter()
            .map(|g| DenseStack::mlp(g.channel_uses(), width, depth, c, Activation::Softmax, rng))
            .collect();
        Self::assemble(config, tx_intech, tx_ctc, rx_intech, rx_ctc)
    }

    /// Reassembles a model from stored networks, checking every dimension
    /// against the configuration.
    pub fn from_networks(
        config: ModelConfig,
        networks: Vec<(Network, DenseStack)>,
    ) -> Result<Self> {
        config.validate()?;
        let (mut tx_intech, mut tx_ctc, mut rx_intech) = (None, None, None);
        let mut rx_ctc: Vec<Option<DenseStack>> = vec![None; config.ctc_rx_grids.len()];
        for (id, net) in networks {
            let slot = match id {
                Network::TxIntech => &mut tx_intech,
                Network::TxCtc => &mut tx_ctc,
                Network::RxIntech => &mut rx_intech,
                Network::RxCtc(i) => rx_ctc.get_mut(i).ok_or_else(|| {
                    Error::config("ctc_rx_grids", alloc::format!("no receiver {i} in config"))
                })?,
            };
            if slot.replace(net).is_some() {
                return Err(Error::config(
                    "networks",
                    alloc::format!("duplicate network {}", id.label()),
                ));
            }
        }
        if config.intech_enabled != tx_intech.is_some()
            || config.intech_enabled != rx_intech.is_some()
        {
            return Err(Error::config(
                "intech_enabled",
                "in-technology networks do not match the flag",
            ));
        }
        let tx_ctc = tx_ctc.ok_or_else(|| Error::config("networks", "missing tx_ctc"))?;
        let rx_ctc = rx_ctc
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.ok_or_else(|| Error::config("networks", alloc::format!("missing rx_ctc[{i}]")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(config, tx_intech, tx_ctc, rx_intech, rx_ctc)
    }

    fn assemble(
        config: ModelConfig,
        tx_intech: Option<DenseStack>,
        tx_ctc: DenseStack,
        rx_intech: Option<DenseStack>,
        rx_ctc: Vec<DenseStack>,
    ) -> Result<Self> {
        let n = config.tx_grid.channel_uses();
        let check =
            |net: &DenseStack, id: Network, inputs: usize, outputs: usize, act: Activation| {
                let last_act = net.layers().last().map(|l| l.activation());
                if net.inputs() != inputs || net.outputs() != outputs || last_act != Some(act) {
                    return Err(Error::config(
                        "networks",
                        alloc::format!(
                            "{} has shape {}→{}, expected {inputs}→{outputs} with {} output",
                            id.label(),
                            net.inputs(),
                            net.outputs(),
                            act.name()
                        ),
                    ));
                }
                Ok(())
            };
        let (m, c) = (config.intech_alphabet, config.ctc_alphabet);
        if let Some(net) = &tx_intech {
            check(net, Network::TxIntech, m, n, Activation::Linear)?;
        }
        check(&tx_ctc, Network::TxCtc, c, n, Activation::Linear)?;
        if let Some(net) = &rx_intech {
            check(net, Network::RxIntech, n, m, Activation::Softmax)?;
        }
        if rx_ctc.len() != config.ctc_rx_grids.len() {
            return Err(Error::config("ctc_rx_grids", "receiver count mismatch"));
        }
        for (i, (net, grid)) in rx_ctc.iter().zip(&config.ctc_rx_grids).enumerate() {
            check(
                net,
                Network::RxCtc(i),
                grid.channel_uses(),
                c,
                Activation::Softmax,
            )?;
        }
        let plans = config
            .ctc_rx_grids
            .iter()
            .map(|&g| resample_plan(config.tx_grid, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            tx_intech,
            tx_ctc,
            rx_intech,
            rx_ctc,
            plans,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Networks in canonical order: `tx_intech`, `tx_ctc`, `rx_intech`,
    /// `rx_ctc[0..]`, with absent in-technology networks skipped.
    pub fn networks(&self) -> Vec<NetworkRef<'_>> {
        let mut out = Vec::with_capacity(3 + self.rx_ctc.len());
        if let Some(n) = &self.tx_intech {
            out.push((Network::TxIntech, n));
        }
        out.push((Network::TxCtc, &self.tx_ctc));
        if let Some(n) = &self.rx_intech {
            out.push((Network::RxIntech, n));
        }
        out.extend(
            self.rx_ctc
                .iter()
                .enumerate()
                .map(|(i, n)| (Network::RxCtc(i), n)),
        );
        out
    }

    fn networks_mut(&mut self) -> Vec<(Network, &mut DenseStack)> {
        let mut out = Vec::with_capacity(3 + self.rx_ctc.len());
        if let Some(n) = &mut self.tx_intech {
            out.push((Network::TxIntech, n));
        }
        out.push((Network::TxCtc, &mut self.tx_ctc));
        if let Some(n) = &mut self.rx_intech {
            out.push((Network::RxIntech, n));
        }
        out.extend(
            self.rx_ctc
                .iter_mut()
                .enumerate()
                .map(|(i, n)| (Network::RxCtc(i), n)),
        );
        out
    }

    pub fn resample_plans(&self) -> &[ResamplePlan] {
        &self.plans
    }

    pub fn parameter_count(&self) -> usize {
        self.networks()
            .iter()
            .map(|(_, n)| n.parameter_count())
            .sum()
    }

    /// Flat parameter `index` in canonical order.
    pub fn parameter(&self, mut index: usize) -> f64 {
        for (_, net) in self.networks() {
            let count = net.parameter_count();
            if index < count {
                return net.parameter(index);
            }
            index -= count;
        }
        panic!("parameter index out of range");
    }

    pub fn set_parameter(&mut self, mut index: usize, value: f64) {
        for (_, net) in self.networks_mut() {
            let count = net.parameter_count();
            if index < count {
                net.set_parameter(index, value);
                return;
            }
            index -= count;
        }
        panic!("parameter index out of range");
    }

    /// SHA-256 over the little-endian bits of every parameter in canonical
    /// order.
    pub fn parameter_checksum(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (_, net) in self.networks() {
            for layer in net.layers() {
                for v in layer.weights().data().iter().chain(layer.bias().data()) {
                    hasher.update(v.to_bits().to_le_bytes());
                }
            }
        }
        hasher.finalize().into()
    }

    fn transmit(&self, pair: MessagePair) -> Result<TxPass> {
        self.config.check_pair(pair)?;
        let ctc = self
            .tx_ctc
            .forward(&one_hot(pair.ctc, self.config.ctc_alphabet)?)?;
        let (intech, sum) = match &self.tx_intech {
            Some(net) => {
                let cache = net.forward(&one_hot(pair.intech, self.config.intech_alphabet)?)?;
                let sum = cache
                    .output()
                    .iter()
                    .zip(ctc.output())
                    .map(|(a, b)| a + b)
                    .collect();
                (Some(cache), sum)
            }
            None => (None, ctc.output().to_vec()),
        };
        let scale = energy_scale(&sum)?;
        let x = sum.iter().map(|v| v * scale).collect();
        Ok(TxPass {
            intech,
            ctc,
            sum,
            x,
        })
    }

    /// The normalized transmit signal on the transmitter grid.
    pub fn encode(&self, pair: MessagePair) -> Result<GridSignal> {
        GridSignal::unflatten(&self.transmit(pair)?.x, self.config.tx_grid)
    }

    /// Receiver probability vectors for `pair` sent through AWGN of
    /// standard deviation `sigma`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        pair: MessagePair,
        sigma: f64,
        rng: &mut R,
    ) -> Result<ReceiverOutputs> {
        let mut noise = Vec::with_capacity(self.config.tx_grid.channel_uses());
        draw_noise(self.config.tx_grid.channel_uses(), sigma, rng, &mut noise)?;
        self.forward_with_noise(pair, &noise)
    }

    /// As [`forward`](Self::forward) with an explicit noise realization.
    pub fn forward_with_noise(&self, pair: MessagePair, noise: &[f64]) -> Result<ReceiverOutputs> {
        let tx = self.transmit(pair)?;
        let y = self.channel(&tx.x, noise)?;
        let intech = match &self.rx_intech {
            Some(net) => Some(net.forward(&y)?.output().to_vec()),
            None => None,
        };
        let ctc = self
            .rx_ctc
            .iter()
            .zip(&self.plans)
            .map(|(net, plan)| Ok(net.forward(&plan.apply(&y)?)?.output().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReceiverOutputs { intech, ctc })
    }

    fn channel(&self, x: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        if noise.len() != x.len() {
            return Err(Error::ShapeMismatch {
                context: "noise realization",
                expected: x.len(),
                actual: noise.len(),
            });
        }
        Ok(x.iter().zip(noise).map(|(a, n)| a + n).collect())
    }

    /// Batch-mean weighted cross-entropy and its gradient, drawing one noise
    /// realization per sample from `rng`.
    pub fn joint_loss<R: Rng + ?Sized>(
        &self,
        batch: &[MessagePair],
        sigma: f64,
        rng: &mut R,
    ) -> Result<JointLoss> {
        let n = self.config.tx_grid.channel_uses();
        let mut noise = Vec::with_capacity(n * batch.len());
        draw_noise(n * batch.len(), sigma, rng, &mut noise)?;
        self.joint_loss_with(batch, &noise, &self.config.loss_weights())
    }

    /// Deterministic core of [`joint_loss`](Self::joint_loss): `noise` holds
    /// `batch.len()` consecutive realizations of `t·f` values.
    pub fn joint_loss_with(
        &self,
        batch: &[MessagePair],
        noise: &[f64],
        weights: &LossWeights,
    ) -> Result<JointLoss> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n = self.config.tx_grid.channel_uses();
        if noise.len() != n * batch.len() {
            return Err(Error::ShapeMismatch {
                context: "batch noise",
                expected: n * batch.len(),
                actual: noise.len(),
            });
        }
        let receivers = self.rx_ctc.len();
        if let LossWeights::Broadcast { weights } = weights {
            if weights.len() != receivers {
                return Err(Error::ShapeMismatch {
                    context: "broadcast weights",
                    expected: receivers,
                    actual: weights.len(),
                });
            }
        }
        let (w_intech, w_ctc) = weights.coefficients(receivers);
        let inv_b = 1.0 / batch.len() as f64;
        let mut grads = ModelGradients::zeros_like(self);
        let mut sum_intech = 0.0;
        let mut sum_ctc = vec![0.0; receivers];

        for (pair, noise) in batch.iter().zip(noise.chunks_exact(n)) {
            let tx = self.transmit(*pair)?;
            let y = self.channel(&tx.x, noise)?;
            let mut grad_y = vec![0.0; n];

            if let (Some(net), Some(store)) = (&self.rx_intech, &mut grads.rx_intech) {
                let cache = net.forward(&y)?;
                sum_intech += cross_entropy(cache.output(), pair.intech)?;
                if w_intech != 0.0 {
                    let mut g = softmax_cross_entropy_grad(cache.output(), pair.intech)?;
                    g.iter_mut().for_each(|v| *v *= w_intech * inv_b);
                    let gy = net.backward_into(&cache, OutputGrad::Logits(&g), store)?;
                    add_into(&mut grad_y, &gy);
                }
            }
            for (k, ((net, plan), store)) in self
                .rx_ctc
                .iter()
                .zip(&self.plans)
                .zip(&mut grads.rx_ctc)
                .enumerate()
            {
                let cache = net.forward(&plan.apply(&y)?)?;
                sum_ctc[k] += cross_entropy(cache.output(), pair.ctc)?;
                if w_ctc[k] != 0.0 {
                    let mut g = softmax_cross_entropy_grad(cache.output(), pair.ctc)?;
                    g.iter_mut().for_each(|v| *v *= w_ctc[k] * inv_b);
                    let gr = net.backward_into(&cache, OutputGrad::Logits(&g), store)?;
                    add_into(&mut grad_y, &plan.adjoint(&gr)?);
                }
            }

            // Additive noise passes the gradient through unchanged.
            let grad_sum = normalize_energy_backward(&tx.sum, &grad_y)?;
            if let (Some(net), Some(cache), Some(store)) =
                (&self.tx_intech, &tx.intech, &mut grads.tx_intech)
            {
                net.backward_into(cache, OutputGrad::Activation(&grad_sum), store)?;
            }
            self.tx_ctc.backward_into(
                &tx.ctc,
                OutputGrad::Activation(&grad_sum),
                &mut grads.tx_ctc,
            )?;
        }

        let intech = self.rx_intech.as_ref().map(|_| sum_intech * inv_b);
        let ctc: Vec<f64> = sum_ctc.iter().map(|s| s * inv_b).collect();
        let loss = weights.combine(intech, &ctc);
        if !loss.is_finite() {
            return Err(Error::NonFinite(String::from("joint loss")));
        }
        Ok(JointLoss {
            loss,
            intech,
            ctc,
            gradients: grads,
        })
    }

    /// Applies one optimizer step with `grads`.
    pub fn apply_gradients(
        &mut self,
        grads: &ModelGradients,
        optimizer: &mut dyn Optimizer,
    ) -> Result<()> {
        let stores = grads.stores();
        let mut nets = self.networks_mut();
        if stores.len() != nets.len() || stores.iter().zip(&nets).any(|((a, _), (b, _))| a != b) {
            return Err(Error::ShapeMismatch {
                context: "gradient networks",
                expected: nets.len(),
                actual: stores.len(),
            });
        }
        let mut slots = Vec::new();
        for ((id, net), (_, store)) in nets.iter_mut().zip(&stores) {
            if !store.is_congruent(net) {
                return Err(Error::ShapeMismatch {
                    context: "gradient store layers",
                    expected: net.layers().len(),
                    actual: store.layers.len(),
                });
            }
            for (layer, ((w, b), g)) in net.parameters_mut().zip(&store.layers).enumerate() {
                let param = |kind| ParamId {
                    network: id.name(),
                    receiver: id.receiver(),
                    layer,
                    kind,
                };
                slots.push(ParamSlot {
                    id: param(ParamKind::Weights),
                    values: w,
                    grad: &g.weights,
                });
                slots.push(ParamSlot {
                    id: param(ParamKind::Bias),
                    values: b,
                    grad: &g.bias,
                });
            }
        }
        optimizer.step(&mut slots)
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// The joint loss at a fixed batch and noise realization, as a
/// finite-difference objective.
#[derive(Debug, Clone)]
pub struct JointObjective {
    pub model: Autoencoder,
    pub batch: Vec<MessagePair>,
    pub noise: Vec<f64>,
    pub weights: LossWeights,
}

impl JointObjective {
    pub fn new<R: Rng + ?Sized>(
        model: Autoencoder,
        batch: Vec<MessagePair>,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut noise = Vec::new();
        draw_noise(
            model.config.tx_grid.channel_uses() * batch.len(),
            sigma,
            rng,
            &mut noise,
        )?;
        let weights = model.config.loss_weights();
        Ok(Self {
            model,
            batch,
            noise,
            weights,
        })
    }
}

impl Objective for JointObjective {
    fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }

    fn parameter(&self, index: usize) -> f64 {
        self.model.parameter(index)
    }

    fn set_parameter(&mut self, index: usize, value: f64) {
        self.model.set_parameter(index, value);
    }

    fn loss(&self) -> Result<f64> {
        Ok(self
            .model
            .joint_loss_with(&self.batch, &self.noise, &self.weights)?
            .loss)
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        Ok(self
            .model
            .joint_loss_with(&self.batch, &self.noise, &self.weights)?
            .gradients
            .flatten())
    }
}
