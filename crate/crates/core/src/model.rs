//! Trainable maps: the embedding MLP `f`, the composition network `g`, and the
//! auxiliary-label classification head, each with exact analytic gradients.
//!
//! Two evaluation paths share the same parameters: [`MlpNet::forward`] works on
//! one input vector and is the reference used by gradient checks, while
//! [`MlpNet::forward_batch`] stacks inputs as matrix rows for training.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::{fmt_f64, header_usize, parse_header_fields, Dataset};
use crate::error::{check_dims, Error, Result};
use crate::math::{self, gemm, Mat, Transpose};
use crate::spaces::{self, SpaceConfig, SpaceKind};
use crate::Rng;

/// Hidden width of the composition network and the classification head.
pub const AUX_HIDDEN_WIDTH: usize = 100;

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "none",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "none" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Layer widths from input to output. Hidden layers use `hidden_activation`;
/// the last layer is linear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, hidden_activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_widths,
            hidden_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `[input_dim, 128, 64, embed_dim]` with ReLU.
    pub fn default_backbone(input_dim: usize, embed_dim: usize) -> Self {
        Self {
            layer_widths: vec![input_dim, 128, 64, embed_dim],
            hidden_activation: Activation::Relu,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            self.hidden_activation
        }
    }

    pub fn num_params(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    /// `out × in`
    weight: Mat,
    bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MlpNet {
    spec: MlpSpec,
    layers: Vec<Dense>,
    generation: u64,
}

impl PartialEq for MlpNet {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

/// Intermediate values from [`MlpNet::forward`].
#[derive(Clone, Debug)]
pub struct ForwardTape {
    generation: u64,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardTape {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("at least one layer")
    }
}

/// Intermediate values from [`MlpNet::forward_batch`]; one row per input.
#[derive(Clone, Debug)]
pub struct BatchTape {
    generation: u64,
    input: Mat,
    pre: Vec<Mat>,
    post: Vec<Mat>,
}

impl BatchTape {
    pub fn output(&self) -> &Mat {
        self.post.last().expect("at least one layer")
    }
}

impl MlpNet {
    /// He-uniform for ReLU layers, Xavier-uniform otherwise; zero biases.
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.num_layers())
            .map(|l| {
                let fan_in = spec.layer_widths[l];
                let fan_out = spec.layer_widths[l + 1];
                let limit = match spec.activation(l) {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-limit, limit))
                    .collect();
                Dense {
                    weight: Mat::from_vec(fan_out, fan_in, data).expect("shape"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            spec,
            layers,
            generation: next_generation(),
        })
    }

    /// All-zero parameters.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_widths
            .windows(2)
            .map(|w| Dense {
                weight: Mat::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            spec,
            layers,
            generation: next_generation(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    pub fn weight(&self, layer: usize) -> &Mat {
        &self.layers[layer].weight
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.layers[layer].bias
    }

    pub fn set_layer(&mut self, layer: usize, weight: Mat, bias: Vec<f64>) -> Result<()> {
        let cur = &self.layers[layer];
        if weight.rows() != cur.weight.rows() || weight.cols() != cur.weight.cols() {
            return Err(Error::DimensionMismatch {
                expected: cur.weight.rows() * cur.weight.cols(),
                got: weight.rows() * weight.cols(),
            });
        }
        check_dims(cur.bias.len(), bias.len())?;
        self.layers[layer] = Dense { weight, bias };
        self.generation = next_generation();
        Ok(())
    }

    /// Layer by layer: weights row-major, then biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        check_dims(self.num_params(), params.len())?;
        let mut rest = params;
        for l in &mut self.layers {
            let nw = l.weight.rows() * l.weight.cols();
            l.weight.as_mut_slice().copy_from_slice(&rest[..nw]);
            rest = &rest[nw..];
            let nb = l.bias.len();
            l.bias.copy_from_slice(&rest[..nb]);
            rest = &rest[nb..];
        }
        self.generation = next_generation();
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardTape)> {
        check_dims(self.input_dim(), x.len())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let input = post.last().map_or(x, Vec::as_slice);
            let mut z = layer.weight.matvec(input)?;
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            let act = self.spec.activation(li);
            let a = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            post.push(a);
        }
        let tape = ForwardTape {
            generation: self.generation,
            input: x.to_vec(),
            pre,
            post,
        };
        Ok((tape.output().to_vec(), tape))
    }

    fn check_generation(&self, generation: u64) -> Result<()> {
        if generation != self.generation {
            return Err(Error::StaleTape(
                "tape was recorded with different parameters".into(),
            ));
        }
        Ok(())
    }

    /// Returns `(∂L/∂θ, ∂L/∂x)` with `∂L/∂θ` in [`params_flat`](Self::params_flat) order.
    pub fn backward(&self, tape: &ForwardTape, dl_dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grads = vec![0.0; self.num_params()];
        let dx = self.backward_into(tape, dl_dy, &mut grads)?;
        Ok((grads, dx))
    }

    /// As [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(
        &self,
        tape: &ForwardTape,
        dl_dy: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_generation(tape.generation)?;
        check_dims(self.output_dim(), dl_dy.len())?;
        check_dims(self.num_params(), grads.len())?;
        let offsets = self.layer_offsets();
        let mut upstream = dl_dy.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let act = self.spec.activation(li);
            let dz: Vec<f64> = upstream
                .iter()
                .zip(&tape.pre[li])
                .zip(&tape.post[li])
                .map(|((g, &z), &a)| g * act.derivative(z, a))
                .collect();
            let input = if li == 0 { &tape.input } else { &tape.post[li - 1] };
            let (w_off, b_off) = offsets[li];
            let n_in = layer.weight.cols();
            for (o, &d) in dz.iter().enumerate() {
                if d != 0.0 {
                    math::add_scaled(&mut grads[w_off + o * n_in..w_off + (o + 1) * n_in], d, input);
                }
                grads[b_off + o] += d;
            }
            upstream = layer.weight.matvec_t(&dz)?;
        }
        Ok(upstream)
    }

    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = off;
                let b = w + l.weight.rows() * l.weight.cols();
                off = b + l.bias.len();
                (w, b)
            })
            .collect()
    }

    /// Forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: &Mat) -> Result<BatchTape> {
        check_dims(self.input_dim(), x.cols())?;
        let n = x.rows();
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Mat> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let input = post.last().unwrap_or(x);
            let mut z = Mat::zeros(n, layer.weight.rows());
            gemm(1.0, input, Transpose::No, &layer.weight, Transpose::Yes, 0.0, &mut z)?;
            for r in 0..n {
                for (zi, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *zi += b;
                }
            }
            let act = self.spec.activation(li);
            let mut a = z.clone();
            if act != Activation::Identity {
                a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            pre.push(z);
            post.push(a);
        }
        Ok(BatchTape {
            generation: self.generation,
            input: x.clone(),
            pre,
            post,
        })
    }

    /// Backward pass for a batch; accumulates parameter gradients summed over
    /// rows into `grads` and returns `∂L/∂X`.
    pub fn backward_batch(&self, tape: &BatchTape, dl_dy: &Mat, grads: &mut [f64]) -> Result<Mat> {
        self.check_generation(tape.generation)?;
        check_dims(self.output_dim(), dl_dy.cols())?;
        check_dims(tape.input.rows(), dl_dy.rows())?;
        check_dims(self.num_params(), grads.len())?;
        let offsets = self.layer_offsets();
        let n = dl_dy.rows();
        let mut upstream = dl_dy.clone();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let act = self.spec.activation(li);
            let mut dz = upstream;
            if act != Activation::Identity {
                for ((g, &z), &a) in dz
                    .as_mut_slice()
                    .iter_mut()
                    .zip(tape.pre[li].as_slice())
                    .zip(tape.post[li].as_slice())
                {
                    *g *= act.derivative(z, a);
                }
            }
            let input = if li == 0 { &tape.input } else { &tape.post[li - 1] };
            let (w_off, b_off) = offsets[li];
            let mut dw = Mat::zeros(layer.weight.rows(), layer.weight.cols());
            gemm(1.0, &dz, Transpose::Yes, input, Transpose::No, 0.0, &mut dw)?;
            for (g, d) in grads[w_off..b_off].iter_mut().zip(dw.as_slice()) {
                *g += d;
            }
            for r in 0..n {
                for (g, d) in grads[b_off..b_off + layer.bias.len()].iter_mut().zip(dz.row(r)) {
                    *g += d;
                }
            }
            let mut dx = Mat::zeros(n, layer.weight.cols());
            gemm(1.0, &dz, Transpose::No, &layer.weight, Transpose::No, 0.0, &mut dx)?;
            upstream = dx;
        }
        Ok(upstream)
    }
}

/// `f(x)` followed by the space projection.
pub fn embed(net: &MlpNet, space: &SpaceConfig, x: &[f64]) -> Result<Vec<f64>> {
    let (raw, _) = net.forward(x)?;
    spaces::project(space, &raw)
}

/// Embeddings for every example of `ds`, in order.
pub fn embed_dataset(net: &MlpNet, space: &SpaceConfig, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = ds.examples().iter().map(|e| e.features.clone()).collect();
    let x = Mat::from_rows(&rows)?;
    let tape = net.forward_batch(&x)?;
    let out = tape.output();
    (0..out.rows())
        .map(|r| spaces::project(space, out.row(r)))
        .collect()
}

/// `g(f(x_a), e_a, e_b)`: predicts the embedding of the same identity under
/// another auxiliary label. Labels enter as one-hot vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionNet {
    net: MlpNet,
    num_aux: usize,
}

impl CompositionNet {
    pub fn new(embed_dim: usize, num_aux: usize, rng: &mut Rng) -> Result<Self> {
        let spec = MlpSpec::new(
            vec![
                embed_dim + 2 * num_aux,
                AUX_HIDDEN_WIDTH,
                AUX_HIDDEN_WIDTH,
                embed_dim,
            ],
            Activation::Relu,
        )?;
        Ok(Self {
            net: MlpNet::new(spec, rng)?,
            num_aux,
        })
    }

    /// Wrap an existing network whose input is `embed_dim + 2·num_aux` wide.
    pub fn from_net(net: MlpNet, num_aux: usize) -> Result<Self> {
        check_dims(net.output_dim() + 2 * num_aux, net.input_dim())?;
        Ok(Self { net, num_aux })
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpNet {
        &mut self.net
    }

    pub fn num_aux(&self) -> usize {
        self.num_aux
    }

    pub fn embed_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input(&self, ya: &[f64], e_a: usize, e_b: usize) -> Result<Vec<f64>> {
        check_dims(self.embed_dim(), ya.len())?;
        if e_a >= self.num_aux || e_b >= self.num_aux {
            return Err(Error::InvalidArgument(format!(
                "aux labels ({e_a}, {e_b}) out of range [0, {})",
                self.num_aux
            )));
        }
        let mut v = Vec::with_capacity(self.net.input_dim());
        v.extend_from_slice(ya);
        v.extend(math::one_hot(e_a, self.num_aux));
        v.extend(math::one_hot(e_b, self.num_aux));
        Ok(v)
    }

    pub fn forward(&self, ya: &[f64], e_a: usize, e_b: usize) -> Result<(Vec<f64>, ForwardTape)> {
        self.net.forward(&self.input(ya, e_a, e_b)?)
    }
}

/// Softmax classifier over auxiliary labels, attached to the embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct MtlHead {
    net: MlpNet,
}

impl MtlHead {
    pub fn new(embed_dim: usize, num_aux: usize, rng: &mut Rng) -> Result<Self> {
        let spec = MlpSpec::new(
            vec![embed_dim, AUX_HIDDEN_WIDTH, AUX_HIDDEN_WIDTH, num_aux],
            Activation::Relu,
        )?;
        Ok(Self {
            net: MlpNet::new(spec, rng)?,
        })
    }

    pub fn from_net(net: MlpNet) -> Self {
        Self { net }
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpNet {
        &mut self.net
    }

    pub fn num_aux(&self) -> usize {
        self.net.output_dim()
    }

    /// Class probabilities.
    pub fn probabilities(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (logits, _) = self.net.forward(y)?;
        Ok(softmax(&logits))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Embedding network plus the optional auxiliary networks a recipe needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub space: SpaceConfig,
    pub f: MlpNet,
    pub g: Option<CompositionNet>,
    pub head: Option<MtlHead>,
}

impl ModelBundle {
    pub fn num_params(&self) -> usize {
        self.f.num_params()
            + self.g.as_ref().map_or(0, |g| g.net.num_params())
            + self.head.as_ref().map_or(0, |h| h.net.num_params())
    }

    /// `f`, then `g`, then the head.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut p = self.f.params_flat();
        if let Some(g) = &self.g {
            p.extend(g.net.params_flat());
        }
        if let Some(h) = &self.head {
            p.extend(h.net.params_flat());
        }
        p
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        check_dims(self.num_params(), params.len())?;
        let nf = self.f.num_params();
        self.f.set_params_flat(&params[..nf])?;
        let mut off = nf;
        if let Some(g) = &mut self.g {
            let n = g.net.num_params();
            g.net.set_params_flat(&params[off..off + n])?;
            off += n;
        }
        if let Some(h) = &mut self.head {
            let n = h.net.num_params();
            h.net.set_params_flat(&params[off..off + n])?;
        }
        Ok(())
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        embed(&self.f, &self.space, x)
    }

    pub fn embed_dataset(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        embed_dataset(&self.f, &self.space, ds)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(
            s,
            "space={} margin={} basis_magnitude={}",
            self.space.kind,
            fmt_f64(self.space.margin),
            fmt_f64(self.space.basis_magnitude)
        )
        .unwrap();
        write_net(&mut s, "f", &self.f, None);
        if let Some(g) = &self.g {
            write_net(&mut s, "g", &g.net, Some(g.num_aux));
        }
        if let Some(h) = &self.head {
            write_net(&mut s, "head", &h.net, None);
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_checkpoint().as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        let perr = |line: usize, message: String| Error::Parse { line, message };
        if lines.first().map(String::as_str) != Some(CHECKPOINT_MAGIC) {
            return Err(perr(1, format!("expected '{CHECKPOINT_MAGIC}'")));
        }
        let space_line = lines.get(1).ok_or_else(|| perr(2, "missing space line".into()))?;
        let fields = parse_header_fields(space_line, 2)?;
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| perr(2, format!("missing '{k}'")))
        };
        let kind: SpaceKind = get("space")?.parse()?;
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|e| perr(2, format!("'{k}': {e}")))
        };
        let space = SpaceConfig::new(kind, parse_f("margin")?, parse_f("basis_magnitude")?)?;

        let mut f = None;
        let mut g = None;
        let mut head = None;
        let mut i = 2;
        while i < lines.len() {
            if lines[i].trim().is_empty() {
                i += 1;
                continue;
            }
            let line_no = i + 1;
            let fields = parse_header_fields(&lines[i], line_no)?;
            let name = *fields
                .get("net")
                .ok_or_else(|| perr(line_no, "expected a 'net=' line".into()))?;
            let widths = fields
                .get("widths")
                .ok_or_else(|| perr(line_no, "missing 'widths'".into()))?
                .split(',')
                .map(|w| w.parse::<usize>().map_err(|e| perr(line_no, format!("width: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let act = Activation::parse(
                fields
                    .get("activation")
                    .ok_or_else(|| perr(line_no, "missing 'activation'".into()))?,
            )?;
            let mut net = MlpNet::zeros(MlpSpec::new(widths, act)?)?;
            let n = net.num_params();
            if i + 1 + n > lines.len() {
                return Err(perr(line_no, format!("net '{name}' needs {n} parameter lines")));
            }
            let params = lines[i + 1..i + 1 + n]
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| perr(i + 2 + j, format!("parameter: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            net.set_params_flat(&params)?;
            match name {
                "f" => f = Some(net),
                "g" => {
                    let k = header_usize(&fields, "aux", line_no)?;
                    g = Some(CompositionNet::from_net(net, k)?);
                }
                "head" => head = Some(MtlHead::from_net(net)),
                other => return Err(perr(line_no, format!("unknown net '{other}'"))),
            }
            i += 1 + n;
        }
        let f = f.ok_or_else(|| perr(lines.len(), "checkpoint has no 'f' network".into()))?;
        Ok(Self { space, f, g, head })
    }
}

const CHECKPOINT_MAGIC: &str = "#geoembed model v1";

fn write_net(s: &mut String, name: &str, net: &MlpNet, aux: Option<usize>) {
    let widths: Vec<String> = net.spec.layer_widths.iter().map(usize::to_string).collect();
    write!(
        s,
        "net={name} widths={} activation={}",
        widths.join(","),
        net.spec.hidden_activation.name()
    )
    .unwrap();
    if let Some(k) = aux {
        write!(s, " aux={k}").unwrap();
    }
    s.push('\n');
    for p in net.params_flat() {
        s.push_str(&fmt_f64(p));
        s.push('\n');
    }
}
