//! The Phi-SegNet network: a small DoubleConv encoder, bi-feature mask
//! fusion over adjacent encoder levels, attention-refined skips, a decoder
//! chain, per-stage single-channel conditioner masks, reverse Fourier
//! attention, and a summed sigmoid head.

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{FilterKind, FilterSpec};
use crate::tensor::{RunningStat, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Negative slope of every LeakyReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Encoder geometry: `levels` DoubleConv stages with 2x2 max-pool between
/// them; level i emits `channels[i]` maps at 1/2^i of the input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub levels: usize,
    pub channels: Vec<usize>,
    pub in_channels: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            levels: 5,
            channels: vec![16, 32, 64, 128, 256],
            in_channels: 1,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidArgument {
                op: "encoder_spec",
                message: format!("need at least 2 levels, got {}", self.levels),
            });
        }
        if self.channels.len() != self.levels || self.channels.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument {
                op: "encoder_spec",
                message: format!(
                    "channels {:?} must list one positive width per level ({})",
                    self.channels, self.levels
                ),
            });
        }
        if self.in_channels == 0 {
            return Err(Error::InvalidArgument {
                op: "encoder_spec",
                message: "in_channels must be positive".into(),
            });
        }
        Ok(())
    }

    /// Input sides must be divisible by this.
    pub fn required_divisor(&self) -> usize {
        1 << (self.levels - 1)
    }
}

// ---- parameter registry ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Flat, ordered set of trainable parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.params.push(Param { name: name.into(), tensor });
        ParamId(self.params.len() - 1)
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Register every parameter as a tape leaf; index-aligned with the set.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(&p.tensor)).collect()
    }
}

struct Builder {
    set: ParamSet,
    stats: Vec<RunningStat>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Builder {
            set: ParamSet::default(),
            stats: Vec::new(),
            rng: rng::stream(seed, "init", 0),
        }
    }

    fn uniform(&mut self, n: usize, bound: f64) -> Vec<f64> {
        (0..n).map(|_| self.rng.random_range(-bound..bound)).collect()
    }

    fn add(&mut self, name: String, shape: Vec<usize>, data: Vec<f64>) -> ParamId {
        let tensor = Tensor::new(shape, data).with_grad();
        self.set.params.push(Param { name, tensor });
        ParamId(self.set.params.len() - 1)
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, dilation: usize) -> ConvLayer {
        let fan_in = cin * k * k;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let wdata = self.uniform(cout * cin * k * k, bound);
        let bdata = self.uniform(cout, bound);
        let weight = self.add(format!("{name}.weight"), vec![cout, cin, k, k], wdata);
        let bias = self.add(format!("{name}.bias"), vec![cout], bdata);
        ConvLayer {
            weight,
            bias,
            padding: dilation * (k - 1) / 2,
            dilation,
        }
    }

    fn bn(&mut self, name: &str, c: usize) -> BnLayer {
        let gamma = self.add(format!("{name}.gamma"), vec![c], vec![1.0; c]);
        let beta = self.add(format!("{name}.beta"), vec![c], vec![0.0; c]);
        self.stats.push(RunningStat::new(c));
        BnLayer {
            name: name.to_string(),
            gamma,
            beta,
            stat: self.stats.len() - 1,
        }
    }
}

/// Running-stat access during forward: train mode updates, eval reads only.
enum StatsAccess<'a> {
    Train(&'a mut [RunningStat]),
    Eval(&'a [RunningStat]),
}

impl StatsAccess<'_> {
    fn is_train(&self) -> bool {
        matches!(self, StatsAccess::Train(_))
    }
}

// ---- layers ----

#[derive(Debug, Clone)]
struct ConvLayer {
    weight: ParamId,
    bias: ParamId,
    padding: usize,
    dilation: usize,
}

impl ConvLayer {
    fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        tape.conv2d(x, bound[self.weight.0], bound[self.bias.0], 1, self.padding, self.dilation)
    }
}

#[derive(Debug, Clone)]
struct BnLayer {
    name: String,
    gamma: ParamId,
    beta: ParamId,
    stat: usize,
}

impl BnLayer {
    fn forward(&self, tape: &mut Tape, bound: &[Var], stats: &mut StatsAccess, x: Var) -> Result<Var> {
        let (g, b) = (bound[self.gamma.0], bound[self.beta.0]);
        match stats {
            StatsAccess::Train(s) => tape.batchnorm2d(x, g, b, true, &mut s[self.stat]),
            StatsAccess::Eval(s) => tape.batchnorm2d_eval(x, g, b, &s[self.stat]),
        }
    }
}

/// Two 3x3 convolutions, each followed by batch norm and LeakyReLU.
#[derive(Debug, Clone)]
struct DoubleConv {
    c1: ConvLayer,
    bn1: BnLayer,
    c2: ConvLayer,
    bn2: BnLayer,
}

impl DoubleConv {
    fn build(b: &mut Builder, name: &str, cin: usize, cout: usize) -> Self {
        DoubleConv {
            c1: b.conv(&format!("{name}.conv1"), cin, cout, 3, 1),
            bn1: b.bn(&format!("{name}.bn1"), cout),
            c2: b.conv(&format!("{name}.conv2"), cout, cout, 3, 1),
            bn2: b.bn(&format!("{name}.bn2"), cout),
        }
    }

    fn forward(&self, tape: &mut Tape, bound: &[Var], stats: &mut StatsAccess, x: Var) -> Result<Var> {
        let h = self.c1.forward(tape, bound, x)?;
        let h = self.bn1.forward(tape, bound, stats, h)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        let h = self.c2.forward(tape, bound, h)?;
        let h = self.bn2.forward(tape, bound, stats, h)?;
        tape.leaky_relu(h, LEAKY_SLOPE)
    }
}

/// Multi-kernel convolution bank: 1x1, 3x3 (d=1) and 5x5 (d=2) branches,
/// each projecting to the block width and carrying BN + LeakyReLU.
#[derive(Debug, Clone)]
struct Mkc {
    branches: Vec<(ConvLayer, BnLayer)>,
}

impl Mkc {
    fn build(b: &mut Builder, name: &str, cin: usize, cout: usize) -> Self {
        let specs = [("p1", 1usize, 1usize), ("p2", 3, 1), ("p3", 5, 2)];
        let branches = specs
            .iter()
            .map(|(tag, k, d)| {
                (
                    b.conv(&format!("{name}.{tag}"), cin, cout, *k, *d),
                    b.bn(&format!("{name}.{tag}_bn"), cout),
                )
            })
            .collect();
        Mkc { branches }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        stats: &mut StatsAccess,
        x: Var,
    ) -> Result<(Var, Var, Var)> {
        let mut outs = Vec::with_capacity(3);
        for (conv, bn) in &self.branches {
            let h = conv.forward(tape, bound, x)?;
            let h = bn.forward(tape, bound, stats, h)?;
            outs.push(tape.leaky_relu(h, LEAKY_SLOPE)?);
        }
        Ok((outs[0], outs[1], outs[2]))
    }
}

/// Bi-feature mask former over one adjacent encoder level pair.
#[derive(Debug, Clone)]
struct Bfmf {
    mkc1: Mkc,
    project: ConvLayer,
    mkc2: Mkc,
    y_conv3: ConvLayer,
    y_conv1: ConvLayer,
    ys_conv1: ConvLayer,
}

impl Bfmf {
    fn build(b: &mut Builder, name: &str, c: usize, cs: usize) -> Self {
        Bfmf {
            mkc1: Mkc::build(b, &format!("{name}.mkc1"), c, c),
            project: b.conv(&format!("{name}.project"), cs, c, 1, 1),
            mkc2: Mkc::build(b, &format!("{name}.mkc2"), 3 * c, c),
            y_conv3: b.conv(&format!("{name}.y_conv3"), 3 * c, c, 3, 1),
            y_conv1: b.conv(&format!("{name}.y_conv1"), c, c, 1, 1),
            ys_conv1: b.conv(&format!("{name}.ys_conv1"), c, cs, 1, 1),
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        stats: &mut StatsAccess,
        x: Var,
        x_s: Var,
    ) -> Result<(Var, Var)> {
        let sx = tape.shape(x).to_vec();
        let ss = tape.shape(x_s).to_vec();
        if sx[2] != 2 * ss[2] || sx[3] != 2 * ss[3] {
            return Err(Error::ShapeMismatch {
                op: "bfmf_forward",
                expected: format!("x_s at exactly half of {}x{}", sx[2], sx[3]),
                got: format!("{}x{}", ss[2], ss[3]),
            });
        }
        let (p11, p21, p31) = self.mkc1.forward(tape, bound, stats, x)?;
        let up = tape.upsample_bilinear(x_s, 2.0)?;
        let proj = self.project.forward(tape, bound, up)?;
        let cat = tape.concat_channels(p11, p21)?;
        let x_c1 = tape.concat_channels(cat, proj)?;
        let (p12, p22, p32) = self.mkc2.forward(tape, bound, stats, x_c1)?;
        let cat = tape.concat_channels(p12, p22)?;
        let cat = tape.concat_channels(cat, p31)?;
        let y = self.y_conv3.forward(tape, bound, cat)?;
        let y = self.y_conv1.forward(tape, bound, y)?;
        let y = tape.sigmoid(y);
        let ys = tape.sigmoid(p32);
        let ys = self.ys_conv1.forward(tape, bound, ys)?;
        let y_s = tape.maxpool2(ys)?;
        Ok((y, y_s))
    }
}

/// Residual attention gate: E_A = E ox sigma(BN(conv(BN(conv(cat))))) + E.
#[derive(Debug, Clone)]
struct Attention {
    conv1: ConvLayer,
    bn1: BnLayer,
    conv2: ConvLayer,
    bn2: BnLayer,
}

impl Attention {
    fn build(b: &mut Builder, name: &str, c: usize) -> Self {
        Attention {
            conv1: b.conv(&format!("{name}.conv1"), 2 * c, c, 3, 1),
            bn1: b.bn(&format!("{name}.bn1"), c),
            conv2: b.conv(&format!("{name}.conv2"), c, c, 3, 1),
            bn2: b.bn(&format!("{name}.bn2"), c),
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        stats: &mut StatsAccess,
        e_i: Var,
        y_s_prev: Var,
        y_i: Var,
    ) -> Result<Var> {
        let cat = tape.concat_channels(y_s_prev, y_i)?;
        let h = self.conv1.forward(tape, bound, cat)?;
        let h = self.bn1.forward(tape, bound, stats, h)?;
        let h = self.conv2.forward(tape, bound, h)?;
        let h = self.bn2.forward(tape, bound, stats, h)?;
        let e_m = tape.sigmoid(h);
        let gated = tape.mul(e_i, e_m)?;
        tape.add(gated, e_i)
    }
}

/// Decoder stage: align the previous decoder output to the attention map
/// (the deepest stage arrives at half size), concatenate, DoubleConv, then
/// upsample by two.
#[derive(Debug, Clone)]
struct DecoderBlock {
    dc: DoubleConv,
}

impl DecoderBlock {
    fn build(b: &mut Builder, name: &str, c_ea: usize, c_prev: usize, width: usize) -> Self {
        DecoderBlock {
            dc: DoubleConv::build(b, name, c_ea + c_prev, width),
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        stats: &mut StatsAccess,
        e_a: Var,
        x_d_prev: Var,
    ) -> Result<Var> {
        let se = tape.shape(e_a).to_vec();
        let sp = tape.shape(x_d_prev).to_vec();
        let prev = if (sp[2], sp[3]) == (se[2], se[3]) {
            x_d_prev
        } else if (2 * sp[2], 2 * sp[3]) == (se[2], se[3]) {
            tape.upsample_bilinear(x_d_prev, 2.0)?
        } else {
            return Err(Error::ShapeMismatch {
                op: "decoder_block",
                expected: format!("x_d_prev at {}x{} or half of it", se[2], se[3]),
                got: format!("{}x{}", sp[2], sp[3]),
            });
        };
        let cat = tape.concat_channels(e_a, prev)?;
        let h = self.dc.forward(tape, bound, stats, cat)?;
        tape.upsample_bilinear(h, 2.0)
    }
}

/// 1x1 projection + sigmoid producing a single-channel stage mask.
#[derive(Debug, Clone)]
struct PhiConditioner {
    conv: ConvLayer,
}

impl PhiConditioner {
    fn forward(&self, tape: &mut Tape, bound: &[Var], x_d: Var) -> Result<Var> {
        let h = self.conv.forward(tape, bound, x_d)?;
        Ok(tape.sigmoid(h))
    }
}

/// Reverse Fourier attention: filter the reverse mask in the frequency
/// domain, gate the decoder features with it, and convolve.
#[derive(Debug, Clone)]
struct RfaBlock {
    conv: ConvLayer,
}

impl RfaBlock {
    fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        x_phi: Var,
        x_d: Var,
        filter: &FilterSpec,
    ) -> Result<Var> {
        let s = tape.shape(x_phi).to_vec();
        if matches!(filter.kind, FilterKind::Lowpass | FilterKind::Highpass)
            && (s[2] < filter.gamma as usize || s[3] < filter.gamma as usize)
        {
            return Err(Error::InvalidArgument {
                op: "rfa",
                message: format!(
                    "stage plane {}x{} is smaller than filter gamma {}",
                    s[2], s[3], filter.gamma
                ),
            });
        }
        let cd = tape.shape(x_d)[1];
        let rev = tape.sub_from_scalar(1.0, x_phi);
        let spec = tape.dft2(rev)?;
        let filt = tape.apply_filter(spec, filter)?;
        let real = tape.idft2_real(filt)?;
        let xhat = tape.abs(real);
        let gate = tape.broadcast_channels(xhat, cd)?;
        let prod = tape.mul(x_d, gate)?;
        self.conv.forward(tape, bound, prod)
    }
}

/// Everything produced by one forward pass.
pub struct ForwardOut {
    /// Prediction mask in (0,1), at the input resolution.
    pub pred: Var,
    /// One single-channel mask per decoder stage, deepest stage first.
    pub phi_masks: Vec<Var>,
    /// Tape bindings of the parameters, index-aligned with the `ParamSet`.
    pub param_vars: Vec<Var>,
}

/// Parameter container and forward logic of the whole network.
#[derive(Debug, Clone)]
pub struct PhiSegModel {
    pub spec: EncoderSpec,
    pub filter: FilterSpec,
    pub params: ParamSet,
    bn_stats: Vec<RunningStat>,
    encoder: Vec<DoubleConv>,
    bfmf: Vec<Bfmf>,
    att: Vec<Attention>,
    att0_const: ParamId,
    decoder: Vec<DecoderBlock>,
    phi: Vec<PhiConditioner>,
    rfa: Vec<RfaBlock>,
    head: Vec<ConvLayer>,
    bn_names: Vec<String>,
}

impl PhiSegModel {
    pub fn new(spec: EncoderSpec, filter: FilterSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let n = spec.levels;
        let ch = &spec.channels;
        let mut b = Builder::new(seed);

        let encoder: Vec<DoubleConv> = (0..n)
            .map(|i| {
                let cin = if i == 0 { spec.in_channels } else { ch[i - 1] };
                DoubleConv::build(&mut b, &format!("encoder.{i}"), cin, ch[i])
            })
            .collect();

        let bfmf: Vec<Bfmf> = (0..n - 1)
            .map(|i| Bfmf::build(&mut b, &format!("bfmf.{i}"), ch[i], ch[i + 1]))
            .collect();

        let att: Vec<Attention> = (0..n - 1)
            .map(|i| Attention::build(&mut b, &format!("att.{i}"), ch[i]))
            .collect();
        let att0_const = b.add("att.0.const".into(), vec![ch[0]], vec![0.0; ch[0]]);

        // stage i decodes level i; the deepest stage (i = n-2) is seeded by
        // the last encoder map
        let decoder: Vec<DecoderBlock> = (0..n - 1)
            .map(|i| DecoderBlock::build(&mut b, &format!("decoder.{i}"), ch[i], ch[i + 1], ch[i]))
            .collect();

        let phi: Vec<PhiConditioner> = (0..n - 1)
            .map(|i| PhiConditioner {
                conv: b.conv(&format!("phi.{i}"), ch[i], 1, 1, 1),
            })
            .collect();

        let rfa: Vec<RfaBlock> = (0..n - 1)
            .map(|i| RfaBlock {
                conv: b.conv(&format!("rfa.{i}"), ch[i], ch[i], 3, 1),
            })
            .collect();

        let head: Vec<ConvLayer> = (0..n - 1)
            .map(|i| b.conv(&format!("head.{i}"), ch[i], 1, 1, 1))
            .collect();

        let mut model = PhiSegModel {
            spec,
            filter,
            params: b.set,
            bn_stats: b.stats,
            encoder,
            bfmf,
            att,
            att0_const,
            decoder,
            phi,
            rfa,
            head,
            bn_names: Vec::new(),
        };
        model.bn_names = model.collect_bn_names();
        Ok(model)
    }

    fn collect_bn_names(&self) -> Vec<String> {
        let mut names: Vec<(usize, String)> = Vec::new();
        let mut dc = |d: &DoubleConv, names: &mut Vec<(usize, String)>| {
            names.push((d.bn1.stat, d.bn1.name.clone()));
            names.push((d.bn2.stat, d.bn2.name.clone()));
        };
        for e in &self.encoder {
            dc(e, &mut names);
        }
        for m in &self.bfmf {
            for (_, bn) in m.mkc1.branches.iter().chain(&m.mkc2.branches) {
                names.push((bn.stat, bn.name.clone()));
            }
        }
        for a in &self.att {
            names.push((a.bn1.stat, a.bn1.name.clone()));
            names.push((a.bn2.stat, a.bn2.name.clone()));
        }
        for d in &self.decoder {
            dc(&d.dc, &mut names);
        }
        names.sort_by_key(|(stat, _)| *stat);
        debug_assert_eq!(names.len(), self.bn_stats.len());
        names.into_iter().map(|(_, n)| n).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    /// Stage plane sides for an input of the given extent, deepest first.
    pub fn stage_sizes(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        (0..self.spec.levels - 1)
            .rev()
            .map(|i| {
                let f = 1usize << i;
                (2 * h / f, 2 * w / f)
            })
            .collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let div = self.spec.required_divisor();
        if shape.len() != 4 || shape[1] != self.spec.in_channels {
            return Err(Error::ShapeMismatch {
                op: "phiseg_forward",
                expected: format!("[B,{},H,W] input", self.spec.in_channels),
                got: format!("{shape:?}"),
            });
        }
        let (h, w) = (shape[2], shape[3]);
        if h % div != 0 || w % div != 0 {
            return Err(Error::InvalidArgument {
                op: "phiseg_forward",
                message: format!("input sides must be divisible by {div}, got {h}x{w}"),
            });
        }
        if matches!(self.filter.kind, FilterKind::Lowpass | FilterKind::Highpass) {
            // the deepest stage plane is the smallest the filter must fit in
            let (sh, sw) = self.stage_sizes(h, w)[0];
            let g = self.filter.gamma as usize;
            if sh < g || sw < g {
                return Err(Error::InvalidArgument {
                    op: "phiseg_forward",
                    message: format!(
                        "deepest stage plane {sh}x{sw} cannot hold filter gamma {g}; \
                         need input sides >= {}",
                        g.next_multiple_of(2) / 2 * (1 << (self.spec.levels - 2)).max(1)
                    ),
                });
            }
        }
        Ok(())
    }

    /// Training forward: batch statistics normalize and running stats update.
    pub fn forward_train(&mut self, tape: &mut Tape, input: &Tensor) -> Result<ForwardOut> {
        self.check_input(&input.shape)?;
        let x = tape.leaf(input);
        let bound = self.params.bind(tape);
        // split borrow: stats are the only mutated field
        let mut stats = std::mem::take(&mut self.bn_stats);
        let result = self.forward_impl(tape, x, &bound, &mut StatsAccess::Train(&mut stats));
        self.bn_stats = stats;
        result
    }

    /// Evaluation forward: running statistics, no side effects.
    pub fn forward_eval(&self, tape: &mut Tape, input: &Tensor) -> Result<ForwardOut> {
        self.check_input(&input.shape)?;
        let x = tape.leaf(input);
        let bound = self.params.bind(tape);
        self.forward_impl(tape, x, &bound, &mut StatsAccess::Eval(&self.bn_stats))
    }

    fn forward_impl(
        &self,
        tape: &mut Tape,
        x: Var,
        bound: &[Var],
        stats: &mut StatsAccess,
    ) -> Result<ForwardOut> {
        let n = self.spec.levels;
        let (batch, _, h, w) = {
            let s = tape.shape(x);
            (s[0], s[1], s[2], s[3])
        };

        // encoder pyramid
        let mut enc = Vec::with_capacity(n);
        let mut cur = x;
        for (i, dc) in self.encoder.iter().enumerate() {
            if i > 0 {
                cur = tape.maxpool2(cur)?;
            }
            cur = dc.forward(tape, bound, stats, cur)?;
            enc.push(cur);
        }

        // mask features over adjacent level pairs
        let mut ys = Vec::with_capacity(n - 1);
        let mut ys_s = Vec::with_capacity(n - 1);
        for (i, blk) in self.bfmf.iter().enumerate() {
            let (y, y_s) = blk.forward(tape, bound, stats, enc[i], enc[i + 1])?;
            ys.push(y);
            ys_s.push(y_s);
        }

        // attention refinement; level 0 pairs with a learned constant mask
        let mut refined = Vec::with_capacity(n - 1);
        for (i, a) in self.att.iter().enumerate() {
            let y_s_prev = if i == 0 {
                let s = tape.shape(enc[0]).to_vec();
                tape.expand_channel_vec(bound[self.att0_const.0], batch, s[2], s[3])?
            } else {
                ys_s[i - 1]
            };
            refined.push(a.forward(tape, bound, stats, enc[i], y_s_prev, ys[i])?);
        }

        // decoder chain with per-stage conditioner + reverse Fourier attention
        let mut phi_masks = Vec::with_capacity(n - 1);
        let mut rfa_outs = Vec::with_capacity(n - 1);
        let mut prev = enc[n - 1];
        for i in (0..n - 1).rev() {
            let x_d = self.decoder[i].forward(tape, bound, stats, refined[i], prev)?;
            let x_phi = self.phi[i].forward(tape, bound, x_d)?;
            let x_rfa = self.rfa[i].forward(tape, bound, x_phi, x_d, &self.filter)?;
            phi_masks.push(x_phi);
            rfa_outs.push((i, x_rfa));
            prev = x_d;
        }

        // aggregate: per-stage 1x1 projection, resize to input size, sum,
        // sigmoid
        let mut acc: Option<Var> = None;
        for &(i, x_rfa) in &rfa_outs {
            let p = self.head[i].forward(tape, bound, x_rfa)?;
            let p = tape.upsample_to(p, h, w)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, p)?,
                None => p,
            });
        }
        let pred = tape.sigmoid(acc.expect("at least one stage"));

        Ok(ForwardOut {
            pred,
            phi_masks,
            param_vars: bound.to_vec(),
        })
    }

    /// Model state as named records: parameters first, then batch-norm
    /// running statistics.
    pub fn state_records(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out: Vec<(String, Vec<usize>, Vec<f64>)> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape.clone(), p.tensor.data.clone()))
            .collect();
        for (name, stat) in self.bn_names.iter().zip(&self.bn_stats) {
            out.push((format!("{name}.running_mean"), vec![stat.mean.len()], stat.mean.clone()));
            out.push((format!("{name}.running_var"), vec![stat.var.len()], stat.var.clone()));
        }
        out
    }

    /// Load state saved by [`Self::state_records`]; the first record whose
    /// name or shape disagrees with this architecture aborts the load.
    pub fn load_state_records(&mut self, records: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let expected = self.state_records();
        if records.len() != expected.len() {
            let name = expected
                .get(records.len())
                .map(|e| e.0.clone())
                .unwrap_or_else(|| records[expected.len()].0.clone());
            return Err(Error::ParameterMismatch {
                name,
                message: format!("expected {} records, found {}", expected.len(), records.len()),
            });
        }
        for ((name, shape, data), (ename, eshape, _)) in records.iter().zip(&expected) {
            if name != ename {
                return Err(Error::ParameterMismatch {
                    name: ename.clone(),
                    message: format!("found `{name}` instead"),
                });
            }
            if shape != eshape {
                return Err(Error::ParameterMismatch {
                    name: name.clone(),
                    message: format!("shape {shape:?}, expected {eshape:?}"),
                });
            }
            if data.len() != shape.iter().product::<usize>() {
                return Err(Error::ParameterMismatch {
                    name: name.clone(),
                    message: "data length disagrees with shape".into(),
                });
            }
        }
        let n_params = self.params.len();
        for (i, (_, _, data)) in records.iter().enumerate().take(n_params) {
            self.params.params[i].tensor.data = data.clone();
        }
        for (j, chunk) in records[n_params..].chunks_exact(2).enumerate() {
            self.bn_stats[j].mean = chunk[0].2.clone();
            self.bn_stats[j].var = chunk[1].2.clone();
        }
        Ok(())
    }
}
