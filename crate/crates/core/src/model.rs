//! The dual-branch predictor: a GNN branch that message-passes over the
//! directed PDN graph (voltage-drop acquiring blocks on the directed
//! edges, neighbor-influence blocks on the bidirected closure), in
//! parallel with a CNN branch (3D encoder over a rasterized
//! space-time canvas, temporal squeeze, 2D decoder with skip fusion),
//! joined by a small per-node fusion head.

use crate::autodiff::{Tape, Tensor, Var};
use crate::pdngraph::{to_bidirected, PdnGraph};
use crate::{Error, Result};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::HashMap;

/// Which branches the network is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// GNN + CNN, the heterogeneous pairing.
    Pdnnet,
    /// GNN + CNN with every GNN block of voltage-drop type.
    FullVd,
    /// GNN + CNN with every GNN block of neighbor-influence type.
    FullNi,
    /// Alias of the standard mixed GNN layer stack, kept as its own row
    /// in ablation tables.
    Mixed,
    GnnSingle,
    GnnDual,
    CnnSingle,
    CnnDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnnFlavor {
    Mixed,
    AllVd,
    AllNi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Gnn(GnnFlavor),
    Cnn,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Pdnnet,
        Variant::FullVd,
        Variant::FullNi,
        Variant::Mixed,
        Variant::GnnSingle,
        Variant::GnnDual,
        Variant::CnnSingle,
        Variant::CnnDual,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Pdnnet => "pdnnet",
            Variant::FullVd => "full_vd",
            Variant::FullNi => "full_ni",
            Variant::Mixed => "mixed",
            Variant::GnnSingle => "gnn_single",
            Variant::GnnDual => "gnn_dual",
            Variant::CnnSingle => "cnn_single",
            Variant::CnnDual => "cnn_dual",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant '{s}'")))
    }

    pub fn code(&self) -> usize {
        Variant::ALL.iter().position(|v| v == self).unwrap()
    }

    pub fn from_code(code: usize) -> Result<Variant> {
        Variant::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown variant code {code}")))
    }

    pub fn branches(&self) -> Vec<BranchKind> {
        match self {
            Variant::Pdnnet | Variant::Mixed => {
                vec![BranchKind::Gnn(GnnFlavor::Mixed), BranchKind::Cnn]
            }
            Variant::FullVd => vec![BranchKind::Gnn(GnnFlavor::AllVd), BranchKind::Cnn],
            Variant::FullNi => vec![BranchKind::Gnn(GnnFlavor::AllNi), BranchKind::Cnn],
            Variant::GnnSingle => vec![BranchKind::Gnn(GnnFlavor::Mixed)],
            Variant::GnnDual => vec![
                BranchKind::Gnn(GnnFlavor::Mixed),
                BranchKind::Gnn(GnnFlavor::Mixed),
            ],
            Variant::CnnSingle => vec![BranchKind::Cnn],
            Variant::CnnDual => vec![BranchKind::Cnn, BranchKind::Cnn],
        }
    }
}

/// Static architecture description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Node feature channels (3 + t_sim).
    pub c_in: usize,
    pub d_hidden: usize,
    pub n_vd_blocks: usize,
    pub n_ni_blocks: usize,
    /// Fixed CNN canvas size; must be divisible by 2^cnn_levels.
    pub h_f: usize,
    pub w_f: usize,
    pub cnn_levels: usize,
    pub cnn_channels: Vec<usize>,
    pub fusion_hidden: usize,
    pub variant: Variant,
}

impl ModelConfig {
    /// Desk-scale default sized near the reference architecture.
    pub fn desk(c_in: usize) -> Self {
        ModelConfig {
            c_in,
            d_hidden: 32,
            n_vd_blocks: 2,
            n_ni_blocks: 2,
            h_f: 32,
            w_f: 32,
            cnn_levels: 3,
            cnn_channels: vec![8, 16, 32],
            fusion_hidden: 16,
            variant: Variant::Pdnnet,
        }
    }

    /// Small configuration for fast tests.
    pub fn tiny(c_in: usize) -> Self {
        ModelConfig {
            c_in,
            d_hidden: 8,
            n_vd_blocks: 1,
            n_ni_blocks: 1,
            h_f: 8,
            w_f: 8,
            cnn_levels: 3,
            cnn_channels: vec![2, 2, 2],
            fusion_hidden: 4,
            variant: Variant::Pdnnet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let div = 1usize << self.cnn_levels;
        if !self.h_f.is_multiple_of(div) || !self.w_f.is_multiple_of(div) {
            return Err(Error::invalid(format!(
                "canvas {}x{} not divisible by 2^{}",
                self.h_f, self.w_f, self.cnn_levels
            )));
        }
        if self.cnn_channels.len() != self.cnn_levels {
            return Err(Error::invalid(format!(
                "{} channel widths for {} levels",
                self.cnn_channels.len(),
                self.cnn_levels
            )));
        }
        let widths = [self.c_in, self.d_hidden, self.fusion_hidden, self.h_f, self.w_f];
        if widths.contains(&0) || self.cnn_channels.contains(&0) {
            return Err(Error::invalid("all model widths must be at least 1"));
        }
        if self.n_vd_blocks + self.n_ni_blocks == 0 {
            return Err(Error::invalid("GNN depth must be at least 1 block"));
        }
        Ok(())
    }

    /// Block kinds of the GNN stack for a flavor: the mixed stack runs
    /// voltage-drop blocks first, then neighbor-influence blocks.
    fn gnn_blocks(&self, flavor: GnnFlavor) -> Vec<BlockKind> {
        let total = self.n_vd_blocks + self.n_ni_blocks;
        match flavor {
            GnnFlavor::Mixed => (0..total)
                .map(|i| {
                    if i < self.n_vd_blocks {
                        BlockKind::VoltageDrop
                    } else {
                        BlockKind::NeighborInfluence
                    }
                })
                .collect(),
            GnnFlavor::AllVd => vec![BlockKind::VoltageDrop; total],
            GnnFlavor::AllNi => vec![BlockKind::NeighborInfluence; total],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    VoltageDrop,
    NeighborInfluence,
}

/// Named learnable tensors in a deterministic order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    /// Deterministic Xavier-uniform initialization.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut params = ModelParams {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        };
        let add = |params: &mut ModelParams,
                       name: String,
                       shape: Vec<usize>,
                       fan: Option<(usize, usize)>,
                       rng: &mut StdRng| {
            let numel: usize = shape.iter().product();
            let data = match fan {
                Some((fan_in, fan_out)) => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..numel).map(|_| rng.random_range(-limit..limit)).collect()
                }
                None => vec![0.0; numel],
            };
            params.index.insert(name.clone(), params.names.len());
            params.names.push(name);
            params.tensors.push(Tensor::new(shape, data).unwrap());
        };
        let d = config.d_hidden;

        for (b, kind) in config.variant.branches().into_iter().enumerate() {
            let p = format!("branch{b}");
            match kind {
                BranchKind::Gnn(flavor) => {
                    add(&mut params, format!("{p}.embed.w1"), vec![config.c_in, d], Some((config.c_in, d)), &mut rng);
                    add(&mut params, format!("{p}.embed.b1"), vec![d], None, &mut rng);
                    add(&mut params, format!("{p}.embed.w2"), vec![d, d], Some((d, d)), &mut rng);
                    add(&mut params, format!("{p}.embed.b2"), vec![d], None, &mut rng);
                    for (i, _) in config.gnn_blocks(flavor).iter().enumerate() {
                        add(&mut params, format!("{p}.blk{i}.w1"), vec![2 * d, d], Some((2 * d, d)), &mut rng);
                        add(&mut params, format!("{p}.blk{i}.b1"), vec![d], None, &mut rng);
                        add(&mut params, format!("{p}.blk{i}.w2"), vec![d, d], Some((d, d)), &mut rng);
                        add(&mut params, format!("{p}.blk{i}.b2"), vec![d], None, &mut rng);
                    }
                    add(&mut params, format!("{p}.readout.w1"), vec![d, d], Some((d, d)), &mut rng);
                    add(&mut params, format!("{p}.readout.b1"), vec![d], None, &mut rng);
                    add(&mut params, format!("{p}.readout.w2"), vec![d, 1], Some((d, 1)), &mut rng);
                    add(&mut params, format!("{p}.readout.b2"), vec![1], None, &mut rng);
                }
                BranchKind::Cnn => {
                    let mut c_prev = 1;
                    for (l, &c) in config.cnn_channels.iter().enumerate() {
                        for (ci, co, tag) in [(c_prev, c, 0), (c, c, 1)] {
                            add(&mut params, format!("{p}.enc{l}.conv{tag}.k"), vec![3, 3, 3, ci, co], Some((27 * ci, 27 * co)), &mut rng);
                            add(&mut params, format!("{p}.enc{l}.conv{tag}.b"), vec![co], None, &mut rng);
                        }
                        c_prev = c;
                    }
                    for l in (0..config.cnn_levels).rev() {
                        let c_in = if l + 1 == config.cnn_levels {
                            config.cnn_channels[l]
                        } else {
                            config.cnn_channels[l + 1]
                        };
                        let c = config.cnn_channels[l];
                        add(&mut params, format!("{p}.dec{l}.tconv.k"), vec![2, 2, c_in, c], Some((4 * c_in, 4 * c)), &mut rng);
                        add(&mut params, format!("{p}.dec{l}.tconv.b"), vec![c], None, &mut rng);
                        add(&mut params, format!("{p}.dec{l}.conv.k"), vec![3, 3, 2 * c, c], Some((9 * 2 * c, 9 * c)), &mut rng);
                        add(&mut params, format!("{p}.dec{l}.conv.b"), vec![c], None, &mut rng);
                    }
                    let c0 = config.cnn_channels[0];
                    add(&mut params, format!("{p}.head.k"), vec![1, 1, c0, 1], Some((c0, 1)), &mut rng);
                    add(&mut params, format!("{p}.head.b"), vec![1], None, &mut rng);
                }
            }
        }
        let n_branches = config.variant.branches().len();
        add(&mut params, "fusion.w1".into(), vec![n_branches, config.fusion_hidden], Some((n_branches, config.fusion_hidden)), &mut rng);
        add(&mut params, "fusion.b1".into(), vec![config.fusion_hidden], None, &mut rng);
        add(&mut params, "fusion.w2".into(), vec![config.fusion_hidden, 1], Some((config.fusion_hidden, 1)), &mut rng);
        add(&mut params, "fusion.b2".into(), vec![1], None, &mut rng);
        Ok(params)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).copied().map(move |i| &mut self.tensors[i])
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Checkpoint entries: the architecture under `config/`, then every
    /// parameter by name.
    pub fn to_checkpoint(&self, config: &ModelConfig) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("config/c_in".to_string(), Tensor::scalar(config.c_in as f64)),
            ("config/d_hidden".to_string(), Tensor::scalar(config.d_hidden as f64)),
            ("config/n_vd_blocks".to_string(), Tensor::scalar(config.n_vd_blocks as f64)),
            ("config/n_ni_blocks".to_string(), Tensor::scalar(config.n_ni_blocks as f64)),
            ("config/h_f".to_string(), Tensor::scalar(config.h_f as f64)),
            ("config/w_f".to_string(), Tensor::scalar(config.w_f as f64)),
            ("config/cnn_levels".to_string(), Tensor::scalar(config.cnn_levels as f64)),
            (
                "config/cnn_channels".to_string(),
                Tensor::from_vec(config.cnn_channels.iter().map(|&c| c as f64).collect()),
            ),
            ("config/fusion_hidden".to_string(), Tensor::scalar(config.fusion_hidden as f64)),
            ("config/variant".to_string(), Tensor::scalar(config.variant.code() as f64)),
        ];
        for (name, tensor) in self.names.iter().zip(&self.tensors) {
            out.push((name.clone(), tensor.clone()));
        }
        out
    }

    /// Rebuild config and parameters from checkpoint entries. Unknown
    /// entries (e.g. run metadata) are ignored.
    pub fn from_checkpoint(entries: &[(String, Tensor)]) -> Result<(ModelConfig, ModelParams)> {
        let map: HashMap<&str, &Tensor> = entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let scalar = |name: &str| -> Result<usize> {
            map.get(name)
                .map(|t| t.item() as usize)
                .ok_or_else(|| Error::invalid(format!("checkpoint missing {name}")))
        };
        let config = ModelConfig {
            c_in: scalar("config/c_in")?,
            d_hidden: scalar("config/d_hidden")?,
            n_vd_blocks: scalar("config/n_vd_blocks")?,
            n_ni_blocks: scalar("config/n_ni_blocks")?,
            h_f: scalar("config/h_f")?,
            w_f: scalar("config/w_f")?,
            cnn_levels: scalar("config/cnn_levels")?,
            cnn_channels: map
                .get("config/cnn_channels")
                .ok_or_else(|| Error::invalid("checkpoint missing config/cnn_channels"))?
                .data()
                .iter()
                .map(|&c| c as usize)
                .collect(),
            fusion_hidden: scalar("config/fusion_hidden")?,
            variant: Variant::from_code(scalar("config/variant")?)?,
        };
        let mut params = ModelParams::init(&config, 0)?;
        for i in 0..params.names.len() {
            let name = params.names[i].clone();
            let stored = map
                .get(name.as_str())
                .ok_or_else(|| Error::invalid(format!("checkpoint missing parameter {name}")))?;
            if stored.shape() != params.tensors[i].shape() {
                return Err(Error::shape(format!(
                    "checkpoint {name}: shape {:?} expected {:?}",
                    stored.shape(),
                    params.tensors[i].shape()
                )));
            }
            params.tensors[i] = (*stored).clone();
        }
        Ok((config, params))
    }
}

/// Parameters bound onto a tape for one forward/backward pass. Var
/// order matches `ModelParams` order, so gradients align with tensors.
pub struct BoundModel<'a> {
    params: &'a ModelParams,
    vars: Vec<Var>,
}

/// Insert every parameter as a tape parameter leaf.
pub fn bind<'a>(tape: &mut Tape, params: &'a ModelParams) -> BoundModel<'a> {
    let vars = params
        .tensors
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect();
    BoundModel { params, vars }
}

impl BoundModel<'_> {
    fn var(&self, name: &str) -> Result<Var> {
        self.params
            .index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::invalid(format!("no parameter named {name}")))
    }

    /// Gradients in parameter order after `tape.backward`.
    pub fn gradients(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .zip(self.params.tensors())
            .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.len()], |g| g.to_vec()))
            .collect()
    }
}

fn mlp2(tape: &mut Tape, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let h = tape.matmul(x, w1)?;
    let h = tape.bias_add(h, b1)?;
    let h = tape.relu(h);
    let h = tape.matmul(h, w2)?;
    tape.bias_add(h, b2)
}

/// Shared two-layer node MLP lifting raw features to the hidden width.
pub fn gnn_embed(tape: &mut Tape, bm: &BoundModel, prefix: &str, features: Var) -> Result<Var> {
    mlp2(
        tape,
        features,
        bm.var(&format!("{prefix}.embed.w1"))?,
        bm.var(&format!("{prefix}.embed.b1"))?,
        bm.var(&format!("{prefix}.embed.w2"))?,
        bm.var(&format!("{prefix}.embed.b2"))?,
    )
}

/// Voltage-drop acquiring block: sum in-neighbor states along the edge
/// direction (messages flow src -> dst, mirroring current flow), then
/// transform the concatenated self state and message sum.
pub fn voltage_drop_block(
    tape: &mut Tape,
    bm: &BoundModel,
    prefix: &str,
    idx: usize,
    h: Var,
    edges: &[(usize, usize)],
) -> Result<Var> {
    let n = tape.value(h).shape()[0];
    let m = tape.segment_sum(h, edges, n)?;
    let cat = tape.concat(&[h, m], 1)?;
    mlp2(
        tape,
        cat,
        bm.var(&format!("{prefix}.blk{idx}.w1"))?,
        bm.var(&format!("{prefix}.blk{idx}.b1"))?,
        bm.var(&format!("{prefix}.blk{idx}.w2"))?,
        bm.var(&format!("{prefix}.blk{idx}.b2"))?,
    )
}

/// Neighbor-influence block: transform each (self, neighbor) pair along
/// the bidirected edges and mean the messages per node. Nodes with no
/// neighbors read a single zero-neighbor message, so an isolated node
/// yields f(h_v || 0).
pub fn neighbor_influence_block(
    tape: &mut Tape,
    bm: &BoundModel,
    prefix: &str,
    idx: usize,
    h: Var,
    edges: &[(usize, usize)],
) -> Result<Var> {
    let (n, d) = {
        let s = tape.value(h).shape();
        (s[0], s[1])
    };
    {
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        for &(s, t) in edges {
            if sorted.binary_search(&(t, s)).is_err() {
                return Err(Error::invalid(format!(
                    "neighbor influence needs a bidirected edge set; ({s},{t}) has no reverse"
                )));
            }
        }
    }
    let mut in_degree = vec![0usize; n];
    for &(_, t) in edges {
        in_degree[t] += 1;
    }
    let mut srcs: Vec<usize> = Vec::with_capacity(edges.len() + n);
    let mut dsts: Vec<usize> = Vec::with_capacity(edges.len() + n);
    for &(s, t) in edges {
        srcs.push(s);
        dsts.push(t);
    }
    // virtual zero-feature source row at index n for isolated nodes
    for (v, deg) in in_degree.iter_mut().enumerate() {
        if *deg == 0 {
            srcs.push(n);
            dsts.push(v);
            *deg = 1;
        }
    }
    let zero_row = tape.leaf(Tensor::zeros(vec![1, d]));
    let h_aug = tape.concat(&[h, zero_row], 0)?;
    let self_rows = tape.gather_rows(h_aug, &dsts)?;
    let nbr_rows = tape.gather_rows(h_aug, &srcs)?;
    let pairs = tape.concat(&[self_rows, nbr_rows], 1)?;
    let messages = mlp2(
        tape,
        pairs,
        bm.var(&format!("{prefix}.blk{idx}.w1"))?,
        bm.var(&format!("{prefix}.blk{idx}.b1"))?,
        bm.var(&format!("{prefix}.blk{idx}.w2"))?,
        bm.var(&format!("{prefix}.blk{idx}.b2"))?,
    )?;
    let routes: Vec<(usize, usize)> = dsts.iter().copied().enumerate().collect();
    let summed = tape.segment_sum(messages, &routes, n)?;
    tape.row_scale(summed, in_degree.iter().map(|&c| 1.0 / c as f64).collect())
}

/// Per-node MLP to a scalar followed by tanh, so outputs live in (-1, 1).
pub fn gnn_readout(tape: &mut Tape, bm: &BoundModel, prefix: &str, h: Var) -> Result<Var> {
    let y = mlp2(
        tape,
        h,
        bm.var(&format!("{prefix}.readout.w1"))?,
        bm.var(&format!("{prefix}.readout.b1"))?,
        bm.var(&format!("{prefix}.readout.w2"))?,
        bm.var(&format!("{prefix}.readout.b2"))?,
    )?;
    Ok(tape.tanh(y))
}

/// Map node features onto the fixed CNN canvas: reshape the node grid
/// to [n_h, n_w, C], nearest-resample to [h_f, w_f, C], and move the
/// channels onto the temporal axis with a trailing singleton channel.
pub fn rasterize_to_canvas(
    tape: &mut Tape,
    features: Var,
    n_h: usize,
    n_w: usize,
    h_f: usize,
    w_f: usize,
) -> Result<Var> {
    let c = tape.value(features).shape()[1];
    let grid = tape.reshape(features, vec![n_h, n_w, c])?;
    let canvas = tape.resample2d_nearest(grid, h_f, w_f)?;
    tape.reshape(canvas, vec![h_f, w_f, c, 1])
}

/// 3D encoder, temporal squeeze, 2D decoder with temporally averaged
/// skips, and a 1-channel head. Output is [h_f, w_f, 1].
pub fn cnn_forward(
    tape: &mut Tape,
    bm: &BoundModel,
    prefix: &str,
    canvas: Var,
    config: &ModelConfig,
) -> Result<Var> {
    let mut x = canvas;
    let mut skips = Vec::with_capacity(config.cnn_levels);
    for l in 0..config.cnn_levels {
        for tag in 0..2 {
            let k = bm.var(&format!("{prefix}.enc{l}.conv{tag}.k"))?;
            let b = bm.var(&format!("{prefix}.enc{l}.conv{tag}.b"))?;
            x = tape.conv3d(x, k, [1, 1, 1], [1, 1, 1])?;
            x = tape.bias_add(x, b)?;
            x = tape.relu(x);
        }
        skips.push(tape.mean_over_axis(x, 2)?);
        x = tape.downsample2(x, &[0, 1])?;
        if tape.value(x).shape()[2] > 1 {
            x = tape.downsample2(x, &[2])?;
        }
    }
    let mut y = tape.mean_over_axis(x, 2)?;
    for l in (0..config.cnn_levels).rev() {
        let tk = bm.var(&format!("{prefix}.dec{l}.tconv.k"))?;
        let tb = bm.var(&format!("{prefix}.dec{l}.tconv.b"))?;
        y = tape.transposed_conv2d(y, tk, 2)?;
        y = tape.bias_add(y, tb)?;
        y = tape.concat(&[y, skips[l]], 2)?;
        let ck = bm.var(&format!("{prefix}.dec{l}.conv.k"))?;
        let cb = bm.var(&format!("{prefix}.dec{l}.conv.b"))?;
        y = tape.conv2d(y, ck, [1, 1], [1, 1])?;
        y = tape.bias_add(y, cb)?;
        y = tape.relu(y);
    }
    let hk = bm.var(&format!("{prefix}.head.k"))?;
    let hb = bm.var(&format!("{prefix}.head.b"))?;
    let y = tape.conv2d(y, hk, [1, 1], [0, 0])?;
    tape.bias_add(y, hb)
}

/// Per-node fusion of the branch outputs (each [N,1]) through a shared
/// MLP, reshaped to the [n_h, n_w] prediction map.
pub fn fuse(
    tape: &mut Tape,
    bm: &BoundModel,
    branch_outputs: &[Var],
    n_h: usize,
    n_w: usize,
) -> Result<Var> {
    let cat = tape.concat(branch_outputs, 1)?;
    let z = mlp2(
        tape,
        cat,
        bm.var("fusion.w1")?,
        bm.var("fusion.b1")?,
        bm.var("fusion.w2")?,
        bm.var("fusion.b2")?,
    )?;
    tape.reshape(z, vec![n_h, n_w])
}

/// Full forward pass on one graph: every branch produces a per-node
/// column, fused into the prediction map.
pub fn forward(
    tape: &mut Tape,
    bm: &BoundModel,
    graph: &PdnGraph,
    config: &ModelConfig,
) -> Result<Var> {
    if graph.n_channels != config.c_in {
        return Err(Error::shape(format!(
            "graph has {} feature channels, model expects {}",
            graph.n_channels, config.c_in
        )));
    }
    let (n_h, n_w) = (graph.n_h, graph.n_w);
    let n = graph.n_nodes();
    let features = tape.leaf(Tensor::new(vec![n, config.c_in], graph.features.clone())?);
    let bidirected = to_bidirected(graph);

    let mut branch_outputs = Vec::new();
    for (b, kind) in config.variant.branches().into_iter().enumerate() {
        let prefix = format!("branch{b}");
        let out = match kind {
            BranchKind::Gnn(flavor) => {
                let mut h = gnn_embed(tape, bm, &prefix, features)?;
                for (i, block) in config.gnn_blocks(flavor).into_iter().enumerate() {
                    h = match block {
                        BlockKind::VoltageDrop => {
                            voltage_drop_block(tape, bm, &prefix, i, h, &graph.edges)?
                        }
                        BlockKind::NeighborInfluence => {
                            neighbor_influence_block(tape, bm, &prefix, i, h, &bidirected.edges)?
                        }
                    };
                }
                gnn_readout(tape, bm, &prefix, h)?
            }
            BranchKind::Cnn => {
                let canvas =
                    rasterize_to_canvas(tape, features, n_h, n_w, config.h_f, config.w_f)?;
                let y = cnn_forward(tape, bm, &prefix, canvas, config)?;
                let y = tape.resample2d_bilinear(y, n_h, n_w)?;
                tape.reshape(y, vec![n, 1])?
            }
        };
        branch_outputs.push(out);
    }
    fuse(tape, bm, &branch_outputs, n_h, n_w)
}
