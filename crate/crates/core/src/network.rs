//! Fully connected feed-forward approximators, one scalar output per field.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::jet::{coeff_count, Jet2, MAX_ORDER};
use crate::tape::{activation_forward, affine_forward, NodeId, ParamTape};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub output_dim: usize,
    pub activation: ActivationKind,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// Two inputs, one output.
    pub fn new(hidden_width: usize, hidden_layers: usize, activation: ActivationKind, init_seed: u64) -> Self {
        NetworkSpec { input_dim: 2, hidden_width, hidden_layers, output_dim: 1, activation, init_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::invalid("hidden width and hidden layer count must be at least 1"));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("input and output dimensions must be at least 1"));
        }
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, input layer first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let n = self.hidden_width;
        let mut dims = vec![(n, self.input_dim)];
        dims.extend(std::iter::repeat_n((n, n), self.hidden_layers - 1));
        dims.push((self.output_dim, n));
        dims
    }

    pub fn param_count(&self) -> usize {
        let (n, l) = (self.hidden_width, self.hidden_layers);
        (self.input_dim * n + n) + (l - 1) * (n * n + n) + (n * self.output_dim + self.output_dim)
    }

    /// Same architecture with a different initialization seed.
    pub fn with_seed(&self, init_seed: u64) -> Self {
        NetworkSpec { init_seed, ..self.clone() }
    }
}

pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.param_count()
}

/// Weights and biases stored flat, layer by layer: `W` row-major, then `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    spec: NetworkSpec,
    params: Vec<f64>,
}

pub fn init_network(spec: &NetworkSpec) -> Result<DenseNetwork> {
    DenseNetwork::new(spec)
}

pub fn forward(net: &DenseNetwork, x: [f64; 2]) -> f64 {
    net.forward(x)
}

/// Jets of every output at `point`, in output order.
pub fn network_jet_eval(net: &DenseNetwork, point: [f64; 2], order: usize) -> Result<Vec<Jet2>> {
    if !matches!(order, 1 | 2 | 4) {
        return Err(Error::invalid(format!("jet order {order} not in {{1, 2, 4}}")));
    }
    if net.spec.input_dim != 2 {
        return Err(Error::invalid("jet evaluation requires a two-input network"));
    }
    Ok(net.jets(&[point], order))
}

impl DenseNetwork {
    /// Glorot-uniform weights from `ChaCha8Rng::seed_from_u64(spec.init_seed)`, zero biases.
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let mut params = Vec::with_capacity(spec.param_count());
        for (rows, cols) in spec.layer_dims() {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            params.extend((0..rows * cols).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, rows));
        }
        Ok(DenseNetwork { spec: spec.clone(), params })
    }

    pub fn from_params(spec: &NetworkSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} parameters, got {}",
                spec.param_count(),
                params.len()
            )));
        }
        Ok(DenseNetwork { spec: spec.clone(), params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// `(W, b, rows, cols)` for each layer.
    pub fn layers(&self) -> Vec<(&[f64], &[f64], usize, usize)> {
        let mut out = Vec::new();
        let mut off = 0;
        for (rows, cols) in self.spec.layer_dims() {
            let w = &self.params[off..off + rows * cols];
            let b = &self.params[off + rows * cols..off + rows * cols + rows];
            out.push((w, b, rows, cols));
            off += rows * cols + rows;
        }
        out
    }

    /// Mutable access to one layer's weight matrix and bias.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let dims = self.spec.layer_dims();
        let off: usize = dims[..layer].iter().map(|(r, c)| r * c + r).sum();
        let (rows, cols) = dims[layer];
        let (w, rest) = self.params[off..].split_at_mut(rows * cols);
        (w, &mut rest[..rows])
    }

    pub fn forward(&self, x: [f64; 2]) -> f64 {
        self.forward_batch(&[x])[0]
    }

    /// First output at every point.
    pub fn forward_batch(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let input = seed_matrix(points, 0);
        let out = self.propagate(input, points.len(), 0);
        out[..points.len()].to_vec()
    }

    /// Jets of every output; result index is `output * points.len() + point`.
    pub fn jets(&self, points: &[[f64; 2]], order: usize) -> Vec<Jet2> {
        assert!(order <= MAX_ORDER);
        let k = coeff_count(order);
        let cols = points.len() * k;
        let out = self.propagate(seed_matrix(points, order), cols, order);
        out.chunks_exact(k).map(|c| Jet2::from_coeffs(order, c)).collect()
    }

    /// Forward pass on a `input_dim x cols` matrix of jets of the given order.
    fn propagate(&self, mut x: Vec<f64>, cols: usize, order: usize) -> Vec<f64> {
        let stride = coeff_count(order);
        let layers = self.layers();
        let last = layers.len() - 1;
        for (l, (w, b, rows, n_in)) in layers.into_iter().enumerate() {
            let mut z = vec![0.0; rows * cols];
            affine_forward(w, rows, n_in, b, &x, cols, stride, &mut z);
            if l < last {
                let mut a = vec![0.0; z.len()];
                activation_forward(self.spec.activation, order, &z, &mut a);
                x = a;
            } else {
                x = z;
            }
        }
        x
    }

    /// Records the network on `tape` with its parameters at `offset` in the tape's
    /// parameter vector; `input` is a `input_dim x (points * K)` jet matrix.
    pub fn record(&self, tape: &mut ParamTape, offset: usize, input: NodeId, order: usize) -> Result<NodeId> {
        let stride = coeff_count(order);
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut x = input;
        let mut off = offset;
        for (l, (w, b, rows, cols)) in layers.into_iter().enumerate() {
            let wn = tape.param(off, rows, cols, w.to_vec())?;
            let bn = tape.param(off + rows * cols, rows, 1, b.to_vec())?;
            off += rows * cols + rows;
            let z = tape.affine(wn, bn, x, stride);
            x = if l < last { tape.activation(z, self.spec.activation, order) } else { z };
        }
        Ok(x)
    }
}

/// `2 x (points * K)` matrix of coordinate seed jets.
pub(crate) fn seed_matrix(points: &[[f64; 2]], order: usize) -> Vec<f64> {
    let k = coeff_count(order);
    let cols = points.len() * k;
    let mut m = vec![0.0; 2 * cols];
    for (p, pt) in points.iter().enumerate() {
        for axis in 0..2 {
            let row = &mut m[axis * cols + p * k..axis * cols + (p + 1) * k];
            row[0] = pt[axis];
            if order >= 1 {
                row[1 + axis] = 1.0;
            }
        }
    }
    m
}

/// Named collection of scalar field networks sharing one flat parameter vector layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBundle {
    names: Vec<String>,
    nets: Vec<DenseNetwork>,
    offsets: Vec<usize>,
}

impl FieldBundle {
    pub fn new(names: Vec<String>, nets: Vec<DenseNetwork>) -> Result<Self> {
        if names.len() != nets.len() || names.is_empty() {
            return Err(Error::invalid("field bundle needs one network per name"));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid(format!("duplicate field name '{n}'")));
            }
        }
        for (name, net) in names.iter().zip(&nets) {
            if net.spec.input_dim != 2 || net.spec.output_dim != 1 {
                return Err(Error::invalid(format!("field '{name}' must map 2 inputs to 1 output")));
            }
        }
        let mut offsets = Vec::with_capacity(nets.len());
        let mut off = 0;
        for net in &nets {
            offsets.push(off);
            off += net.params.len();
        }
        Ok(FieldBundle { names, nets, offsets })
    }

    /// One network per field, all with `spec`; field `i` uses seed `spec.init_seed + i`.
    pub fn uniform(names: &[&str], spec: &NetworkSpec) -> Result<Self> {
        let nets = (0..names.len())
            .map(|i| DenseNetwork::new(&spec.with_seed(spec.init_seed.wrapping_add(i as u64))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(names.iter().map(|s| s.to_string()).collect(), nets)
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nets(&self) -> &[DenseNetwork] {
        &self.nets
    }

    pub fn net(&self, i: usize) -> &DenseNetwork {
        &self.nets[i]
    }

    pub fn net_mut(&mut self, i: usize) -> &mut DenseNetwork {
        &mut self.nets[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn param_len(&self) -> usize {
        self.nets.iter().map(|n| n.params.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.params.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::ShapeMismatch(format!(
                "bundle expects {} parameters, got {}",
                self.param_len(),
                params.len()
            )));
        }
        for (net, &off) in self.nets.iter_mut().zip(&self.offsets) {
            let n = net.params.len();
            net.params.copy_from_slice(&params[off..off + n]);
        }
        Ok(())
    }

    /// True when every network has the same architecture as in `other`.
    pub fn same_layout(&self, other: &FieldBundle) -> bool {
        self.names == other.names
            && self.nets.iter().zip(&other.nets).all(|(a, b)| {
                let (sa, sb) = (&a.spec, &b.spec);
                sa.hidden_width == sb.hidden_width
                    && sa.hidden_layers == sb.hidden_layers
                    && sa.activation == sb.activation
            })
    }

    /// FNV-1a over the bit patterns of all parameters.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.nets.iter().flat_map(|n| n.params.iter()) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}
