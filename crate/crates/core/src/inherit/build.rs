use serde::{Deserialize, Serialize};

use super::conv::InherConvLayer;
use super::gate::{Gate, GateInput};
use super::inverse::InverseLayer;
use super::layer::InherNetLayer;
use super::symmetric::SymmetricLayer;
use super::{Combiner, Variant};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, truncated_svd, Matrix, Tensor4D};
use crate::nn::{Conv2DLayer, DenseLayer, Layer, Network};
use crate::rng::{domain, Philox};
use crate::theory::rank_for_energy;

fn check_rank(w: &Matrix, r: usize, h: usize) -> Result<()> {
    let max = w.rows().min(w.cols());
    if r == 0 || r > max {
        return Err(Error::range("rank", r, format!("1..={max} for a {}x{} weight", w.rows(), w.cols())));
    }
    if h == 0 {
        return Err(Error::range("heads", h, ">= 1"));
    }
    Ok(())
}

fn make_gate(enabled: bool, dim: usize, heads: usize, input: GateInput) -> Option<Gate> {
    enabled.then(|| Gate::zeros(dim, heads, input))
}

/// Algorithm-1 initialization of one dense weight `w` (`m x n`).
///
/// `w_down = U_r Σ_r^½`; each head is `Σ_r^½ V_rᵀ` scaled per `mode`; the gate
/// starts at zero so mixing is exactly uniform.
pub fn inherit_dense(w: &Matrix, r: usize, h: usize, mode: Combiner, gate_input: GateInput) -> Result<InherNetLayer> {
    check_rank(w, r, h)?;
    let f = truncated_svd(w, r)?;
    let head = f.right_factor_sqrt().scale(mode.head_scale(h));
    let gate_dim = match gate_input {
        GateInput::Code => r,
        GateInput::Input => w.rows(),
    };
    InherNetLayer::new(
        f.left_factor_sqrt(),
        vec![head; h],
        Some(Gate::zeros(gate_dim, h, gate_input)),
        mode,
        None,
    )
}

/// [`inherit_dense`] on a teacher layer, carrying its bias over unchanged.
pub fn inherit_dense_layer(teacher: &DenseLayer, r: usize, h: usize, mode: Combiner, gate_input: GateInput) -> Result<InherNetLayer> {
    let mut layer = inherit_dense(&teacher.weight, r, h, mode, gate_input)?;
    layer.bias = teacher.bias.clone();
    Ok(layer)
}

/// Channel decomposition of a kernel `(N, c, kh, kw)`.
///
/// Returns the `r`-channel spatial kernel `Σ_r^½ V_rᵀ` reshaped to
/// `(r, c, kh, kw)` and `h` copies of the 1x1 kernel `U_r Σ_r^½` shaped
/// `(N, r, 1, 1)`, scaled per `mode`.
pub fn inherit_conv(k: &Tensor4D, r: usize, h: usize, mode: Combiner) -> Result<(Tensor4D, Vec<Tensor4D>)> {
    let [n, c, kh, kw] = k.dims();
    let k_hat = k.to_matrix();
    check_rank(&k_hat, r, h)?;
    let f = truncated_svd(&k_hat, r)?;
    let spatial = Tensor4D::from_matrix(&f.right_factor_sqrt(), [r, c, kh, kw])?;
    let head = Tensor4D::from_matrix(&f.left_factor_sqrt().scale(mode.head_scale(h)), [n, r, 1, 1])?;
    Ok((spatial, vec![head; h]))
}

/// Inherited conv layer built from a teacher conv; the teacher bias moves to
/// the output stage.
pub fn inherit_conv_layer(
    teacher: &Conv2DLayer,
    r: usize,
    h: usize,
    mode: Combiner,
    gate_input: GateInput,
) -> Result<InherConvLayer> {
    let (kernel, heads) = inherit_conv(&teacher.kernel, r, h, mode)?;
    let spatial = Conv2DLayer::new(kernel, None, teacher.stride, teacher.padding, teacher.input_hw)?;
    let gate_dim = match gate_input {
        GateInput::Code => r,
        GateInput::Input => teacher.in_channels(),
    };
    let layer = InherConvLayer {
        spatial,
        heads,
        gate: Some(Gate::zeros(gate_dim, h, gate_input)),
        combiner: mode,
        bias: teacher.bias.clone(),
    };
    layer.validate()?;
    Ok(layer)
}

/// Many-downs-one-up layer: every down starts at `U_r Σ_r^½` (scaled per
/// `mode`), the shared up at `Σ_r^½ V_rᵀ`. The gate reads the layer input.
pub fn build_inverse(w: &Matrix, r: usize, h: usize, mode: Combiner) -> Result<InverseLayer> {
    check_rank(w, r, h)?;
    let f = truncated_svd(w, r)?;
    let down = f.left_factor_sqrt().scale(mode.head_scale(h));
    let layer = InverseLayer {
        downs: vec![down; h],
        w_up: f.right_factor_sqrt(),
        gate: Some(Gate::zeros(w.rows(), h, GateInput::Input)),
        combiner: mode,
        bias: None,
    };
    layer.validate()?;
    Ok(layer)
}

const SYMMETRIC_BRANCHES: usize = 2;

fn standard_count(m: usize, n: usize, r: usize, h: usize, gate: Option<GateInput>, bias: bool) -> usize {
    let gate = match gate {
        Some(GateInput::Code) => r * h + h,
        Some(GateInput::Input) => m * h + h,
        None => 0,
    };
    m * r + h * r * n + gate + if bias { n } else { 0 }
}

fn symmetric_count(m: usize, n: usize, r: usize, bias: bool) -> usize {
    let b = SYMMETRIC_BRANCHES;
    b * (m * r + r * n) + m * b + b + if bias { n } else { 0 }
}

/// Largest rank whose two-branch layer fits within the parameter budget of a
/// `Standard` layer with rank `r` and `h` heads (at least 1).
pub fn symmetric_rank(m: usize, n: usize, r: usize, h: usize, gate_input: GateInput, bias: bool) -> usize {
    let budget = standard_count(m, n, r, h, Some(gate_input), bias);
    let max = m.min(n);
    (1..=max)
        .take_while(|&rs| symmetric_count(m, n, rs, bias) <= budget)
        .last()
        .unwrap_or(1)
}

/// Two SVD-initialized branches of rank `r`, gated on the input.
pub fn build_symmetric(w: &Matrix, r: usize, mode: Combiner) -> Result<SymmetricLayer> {
    check_rank(w, r, SYMMETRIC_BRANCHES)?;
    let f = truncated_svd(w, r)?;
    let scale = mode.head_scale(SYMMETRIC_BRANCHES);
    let layer = SymmetricLayer {
        downs: vec![f.left_factor_sqrt(); SYMMETRIC_BRANCHES],
        ups: vec![f.right_factor_sqrt().scale(scale); SYMMETRIC_BRANCHES],
        gate: Some(Gate::zeros(w.rows(), SYMMETRIC_BRANCHES, GateInput::Input)),
        combiner: mode,
        bias: None,
    };
    layer.validate()?;
    Ok(layer)
}

fn kaiming(rows: usize, cols: usize, rng: &mut Philox) -> Matrix {
    Matrix::random_uniform(rows, cols, (6.0 / rows as f64).sqrt(), rng)
}

/// Build one inherited layer of the requested variant from a dense teacher.
pub fn make_variant(teacher: &DenseLayer, r: usize, opts: &InheritOptions, rng: &mut Philox) -> Result<Layer> {
    let w = &teacher.weight;
    let (m, n) = w.shape();
    let h = opts.heads;
    Ok(match opts.variant {
        Variant::Standard => Layer::Inher(inherit_dense_layer(teacher, r, h, opts.combiner, opts.gate_input)?),
        Variant::NoGate => {
            let mut l = inherit_dense_layer(teacher, r, h, opts.combiner, opts.gate_input)?;
            l.gate = None;
            Layer::Inher(l)
        }
        Variant::NoSvd => {
            check_rank(w, r, h)?;
            let down = kaiming(m, r, rng);
            let heads = (0..h).map(|_| kaiming(r, n, rng)).collect();
            let gate_dim = match opts.gate_input {
                GateInput::Code => r,
                GateInput::Input => m,
            };
            let bias = teacher.bias.as_ref().map(|b| vec![0.0; b.len()]);
            Layer::Inher(InherNetLayer::new(down, heads, make_gate(true, gate_dim, h, opts.gate_input), opts.combiner, bias)?)
        }
        Variant::Inverse => {
            let mut l = build_inverse(w, r, h, opts.combiner)?;
            l.bias = teacher.bias.clone();
            Layer::Inverse(l)
        }
        Variant::Symmetric => {
            check_rank(w, r, h)?;
            let rs = symmetric_rank(m, n, r, h, opts.gate_input, teacher.bias.is_some());
            let mut l = build_symmetric(w, rs, opts.combiner)?;
            l.bias = teacher.bias.clone();
            Layer::Symmetric(l)
        }
    })
}

/// How each teacher layer's rank is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    /// Same rank everywhere; a layer too small for it is an error.
    Fixed(usize),
    /// Same rank, clipped to each layer's `min(m, n)`.
    Clamped(usize),
    /// Smallest rank keeping residual energy at most `ε` of the total.
    Energy(f64),
    /// One rank per inheritable layer, in order.
    PerLayer(Vec<usize>),
}

/// Settings for [`inherit_network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InheritOptions {
    pub rank: RankPolicy,
    pub heads: usize,
    pub combiner: Combiner,
    pub gate_input: GateInput,
    pub variant: Variant,
    /// Seeds random init for `NoSvd` and the gate.
    pub seed: u64,
    /// Standard deviation of the initial gate weights; 0 gives exactly
    /// uniform mixing at step 0. The gate bias always starts at zero.
    #[serde(default)]
    pub gate_init_std: f64,
}

impl Default for InheritOptions {
    fn default() -> Self {
        Self {
            rank: RankPolicy::Clamped(8),
            heads: 3,
            combiner: Combiner::ConvexExact,
            gate_input: GateInput::Code,
            variant: Variant::Standard,
            seed: 0,
            gate_init_std: 0.0,
        }
    }
}

/// Rank for inheritable layer number `ordinal` with weight `w`.
pub fn resolve_rank(policy: &RankPolicy, ordinal: usize, name: &str, w: &Matrix) -> Result<usize> {
    let max = w.rows().min(w.cols());
    let r = match policy {
        RankPolicy::Fixed(r) => *r,
        RankPolicy::Clamped(r) => (*r).clamp(1, max),
        RankPolicy::Energy(eps) => rank_for_energy(&singular_values(w)?, *eps)?,
        RankPolicy::PerLayer(rs) => *rs
            .get(ordinal)
            .ok_or_else(|| Error::shape("per-layer ranks", format!("an entry for {name}"), rs.len()))?,
    };
    if r == 0 || r > max {
        return Err(Error::range(
            format!("rank for {name} ({}x{})", w.rows(), w.cols()),
            r,
            format!("1..={max}"),
        ));
    }
    Ok(r)
}

/// Replace every dense and conv layer of `teacher` by its inherited form.
///
/// Conv layers support the `Standard`, `NoGate` and `NoSvd` variants.
pub fn inherit_network(teacher: &Network, opts: &InheritOptions) -> Result<Network> {
    let mut layers = Vec::with_capacity(teacher.layers().len());
    let mut ordinal = 0;
    for (i, layer) in teacher.layers().iter().enumerate() {
        let name = format!("layer {i} ({})", layer.kind());
        let mut rng = Philox::derived(opts.seed, domain::INIT, 1 + i as u32);
        match layer {
            Layer::Dense(d) => {
                let r = resolve_rank(&opts.rank, ordinal, &name, &d.weight)?;
                layers.push(make_variant(d, r, opts, &mut rng)?);
                ordinal += 1;
            }
            Layer::Conv2d(c) => {
                let r = resolve_rank(&opts.rank, ordinal, &name, &c.kernel.to_matrix())?;
                layers.push(Layer::InherConv(conv_variant(c, r, opts, &mut rng)?));
                ordinal += 1;
            }
            other => layers.push(other.clone()),
        }
        if opts.gate_init_std > 0.0 {
            if let Some(g) = gate_mut(layers.last_mut().expect("just pushed")) {
                g.weight.data_mut().iter_mut().for_each(|v| *v = opts.gate_init_std * rng.normal());
            }
        }
    }
    Network::new(layers)
}

fn gate_mut(layer: &mut Layer) -> Option<&mut Gate> {
    match layer {
        Layer::Inher(l) => l.gate.as_mut(),
        Layer::InherConv(l) => l.gate.as_mut(),
        Layer::Inverse(l) => l.gate.as_mut(),
        Layer::Symmetric(l) => l.gate.as_mut(),
        _ => None,
    }
}

fn conv_variant(teacher: &Conv2DLayer, r: usize, opts: &InheritOptions, rng: &mut Philox) -> Result<InherConvLayer> {
    let mut l = inherit_conv_layer(teacher, r, opts.heads, opts.combiner, opts.gate_input)?;
    match opts.variant {
        Variant::Standard => {}
        Variant::NoGate => l.gate = None,
        Variant::NoSvd => {
            let [_, c, kh, kw] = l.spatial.kernel.dims();
            let bound = (6.0 / (c * kh * kw) as f64).sqrt();
            l.spatial.kernel.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
            let hb = (6.0 / r as f64).sqrt();
            for head in &mut l.heads {
                head.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-hb, hb));
            }
            if let Some(b) = &mut l.bias {
                b.fill(0.0);
            }
        }
        Variant::Symmetric | Variant::Inverse => {
            return Err(Error::range("variant for conv layers", format!("{:?}", opts.variant), "standard, no-gate or no-svd"));
        }
    }
    Ok(l)
}
