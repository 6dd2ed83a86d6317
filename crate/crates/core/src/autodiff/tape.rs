use super::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

enum Op {
    Leaf {
        param: bool,
    },
    MatMul(Var, Var),
    BiasAdd(Var, Var),
    Relu(Var),
    Tanh(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    MeanAxis {
        x: Var,
        axis: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    /// out[i] = x[map[i]]
    Gather {
        x: Var,
        map: Vec<usize>,
    },
    /// out[i] = sum of terms[i*per_out..(i+1)*per_out] as (src, weight)
    Lincomb {
        x: Var,
        terms: Vec<(usize, f64)>,
        per_out: usize,
    },
    /// Row pairs (src, dst): out[dst, :] += x[src, :]
    SegmentSum {
        x: Var,
        pairs: Vec<(usize, usize)>,
    },
    RowScale {
        x: Var,
        factors: Vec<f64>,
    },
    Conv3d {
        x: Var,
        k: Var,
        stride: [usize; 3],
        pad: [usize; 3],
    },
    Conv2d {
        x: Var,
        k: Var,
        stride: [usize; 2],
        pad: [usize; 2],
    },
    TConv2d {
        x: Var,
        k: Var,
        stride: usize,
    },
    Reshape(Var),
    L1Loss(Var, Var),
    DiceLoss(Var, Var),
}

const DICE_EPS: f64 = 1e-6;

/// Records primitives applied to tensors and replays them in reverse
/// for gradient accumulation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    ran_backward: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record a non-parameter input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { param: false })
    }

    /// Record a parameter leaf; its gradient is retained by `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { param: true })
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` with respect to a parameter leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    // ---- primitives ------------------------------------------------

    /// [m,k] x [k,n] -> [m,n]
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        let (da, db) = (self.data(a), self.data(b));
        for i in 0..m {
            for kk in 0..k {
                let av = da[i * k + kk];
                if av == 0.0 {
                    continue;
                }
                let brow = &db[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    /// x[..., c] + bias[c]
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() != 1 || sx.last() != sb.first() {
            return Err(Error::shape(format!("bias_add {sx:?} + {sb:?}")));
        }
        let c = sb[0];
        let (dx, dbias) = (self.data(x), self.data(bias));
        let out: Vec<f64> = dx
            .iter()
            .enumerate()
            .map(|(i, &v)| v + dbias[i % c])
            .collect();
        let shape = sx.to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::BiasAdd(x, bias)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, out).unwrap(), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|&v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, out).unwrap(), Op::Tanh(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "mul {:?} * {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, out).unwrap(), Op::Scale(x, c))
    }

    /// Sum of all elements, scalar output.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Mean over one axis; the axis disappears from the shape.
    pub fn mean_over_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(Error::shape(format!("mean axis {axis} of {sx:?}")));
        }
        let inner: usize = sx[axis + 1..].iter().product();
        let n_axis = sx[axis];
        let outer: usize = sx[..axis].iter().product();
        let mut out_shape = sx.clone();
        out_shape.remove(axis);
        let dx = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..n_axis {
                let base = (o * n_axis + a) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    out[obase + i] += dx[base + i];
                }
            }
        }
        let scale = 1.0 / n_axis as f64;
        for v in &mut out {
            *v *= scale;
        }
        Ok(self.push(Tensor::new(out_shape, out)?, Op::MeanAxis { x, axis }))
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of zero parts"));
        }
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::shape(format!("concat axis {axis} of {first:?}")));
        }
        let mut axis_total = 0;
        for &p in parts {
            let sp = self.shape(p);
            if sp.len() != first.len() {
                return Err(Error::shape("concat rank mismatch"));
            }
            for (d, (&a, &b)) in sp.iter().zip(&first).enumerate() {
                if d != axis && a != b {
                    return Err(Error::shape(format!("concat dim {d}: {a} vs {b}")));
                }
            }
            axis_total += sp[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let mut out = vec![0.0; outer * axis_total * inner];
        let mut offset = 0;
        for &p in parts {
            let block = self.shape(p)[axis] * inner;
            let dp = self.data(p);
            for o in 0..outer {
                let src = &dp[o * block..(o + 1) * block];
                let dst_base = o * axis_total * inner + offset;
                out[dst_base..dst_base + block].copy_from_slice(src);
            }
            offset += block;
        }
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// out[e, :] = x[rows[e], :]
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::shape(format!("gather_rows on {sx:?}")));
        }
        let (n, d) = (sx[0], sx[1]);
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape(format!("gather row {bad} out of {n}")));
        }
        let map: Vec<usize> = rows
            .iter()
            .flat_map(|&r| (0..d).map(move |c| r * d + c))
            .collect();
        self.gather_with_map(x, map, vec![rows.len(), d])
    }

    fn gather_with_map(&mut self, x: Var, map: Vec<usize>, out_shape: Vec<usize>) -> Result<Var> {
        let dx = self.data(x);
        let out: Vec<f64> = map.iter().map(|&i| dx[i]).collect();
        Ok(self.push(Tensor::new(out_shape, out)?, Op::Gather { x, map }))
    }

    /// Sum source-node rows into destination rows over an edge list:
    /// out[dst, :] += x[src, :] for every (src, dst).
    pub fn segment_sum(&mut self, x: Var, edges: &[(usize, usize)], n_out: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::shape(format!("segment_sum on {sx:?}")));
        }
        let (n, d) = (sx[0], sx[1]);
        for &(s, t) in edges {
            if s >= n || t >= n_out {
                return Err(Error::shape(format!(
                    "edge ({s},{t}) outside {n} -> {n_out}"
                )));
            }
        }
        let dx = self.data(x);
        let mut out = vec![0.0; n_out * d];
        for &(s, t) in edges {
            let src = &dx[s * d..(s + 1) * d];
            let dst = &mut out[t * d..(t + 1) * d];
            for (o, &v) in dst.iter_mut().zip(src) {
                *o += v;
            }
        }
        Ok(self.push(
            Tensor::new(vec![n_out, d], out)?,
            Op::SegmentSum {
                x,
                pairs: edges.to_vec(),
            },
        ))
    }

    /// out[i, :] = factors[i] * x[i, :]
    pub fn row_scale(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || sx[0] != factors.len() {
            return Err(Error::shape(format!(
                "row_scale {sx:?} with {} factors",
                factors.len()
            )));
        }
        let d = sx[1];
        let dx = self.data(x);
        let out: Vec<f64> = dx
            .iter()
            .enumerate()
            .map(|(i, &v)| v * factors[i / d])
            .collect();
        Ok(self.push(Tensor::new(sx, out)?, Op::RowScale { x, factors }))
    }

    /// 3D convolution: x [H,W,T,Ci], kernel [kh,kw,kt,Ci,Co].
    pub fn conv3d(&mut self, x: Var, k: Var, stride: [usize; 3], pad: [usize; 3]) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if sx.len() != 4 || sk.len() != 5 || sx[3] != sk[3] {
            return Err(Error::shape(format!("conv3d {sx:?} * {sk:?}")));
        }
        let out_dims: Vec<usize> = (0..3)
            .map(|d| conv_out_dim(sx[d], sk[d], stride[d], pad[d]))
            .collect::<Result<_>>()?;
        let (ci, co) = (sk[3], sk[4]);
        let mut out = vec![0.0; out_dims.iter().product::<usize>() * co];
        {
            let dx = self.data(x);
            let dk = self.data(k);
            let (h, w, t) = (sx[0], sx[1], sx[2]);
            let (kh, kw, kt) = (sk[0], sk[1], sk[2]);
            let (oh_n, ow_n, ot_n) = (out_dims[0], out_dims[1], out_dims[2]);
            for oh in 0..oh_n {
                for ow in 0..ow_n {
                    for ot in 0..ot_n {
                        let obase = ((oh * ow_n + ow) * ot_n + ot) * co;
                        for dh in 0..kh {
                            let Some(ih) = in_coord(oh, stride[0], dh, pad[0], h) else {
                                continue;
                            };
                            for dw in 0..kw {
                                let Some(iw) = in_coord(ow, stride[1], dw, pad[1], w) else {
                                    continue;
                                };
                                for dt in 0..kt {
                                    let Some(it) = in_coord(ot, stride[2], dt, pad[2], t) else {
                                        continue;
                                    };
                                    let xbase = ((ih * w + iw) * t + it) * ci;
                                    let kbase = (((dh * kw + dw) * kt + dt) * ci) * co;
                                    for c_in in 0..ci {
                                        let xv = dx[xbase + c_in];
                                        if xv == 0.0 {
                                            continue;
                                        }
                                        let krow = &dk[kbase + c_in * co..kbase + (c_in + 1) * co];
                                        let orow = &mut out[obase..obase + co];
                                        for c_out in 0..co {
                                            orow[c_out] += xv * krow[c_out];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let shape = vec![out_dims[0], out_dims[1], out_dims[2], co];
        Ok(self.push(Tensor::new(shape, out)?, Op::Conv3d { x, k, stride, pad }))
    }

    /// 2D convolution: x [H,W,Ci], kernel [kh,kw,Ci,Co].
    pub fn conv2d(&mut self, x: Var, k: Var, stride: [usize; 2], pad: [usize; 2]) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if sx.len() != 3 || sk.len() != 4 || sx[2] != sk[2] {
            return Err(Error::shape(format!("conv2d {sx:?} * {sk:?}")));
        }
        let oh_n = conv_out_dim(sx[0], sk[0], stride[0], pad[0])?;
        let ow_n = conv_out_dim(sx[1], sk[1], stride[1], pad[1])?;
        let (ci, co) = (sk[2], sk[3]);
        let mut out = vec![0.0; oh_n * ow_n * co];
        {
            let dx = self.data(x);
            let dk = self.data(k);
            let (h, w) = (sx[0], sx[1]);
            let (kh, kw) = (sk[0], sk[1]);
            for oh in 0..oh_n {
                for ow in 0..ow_n {
                    let obase = (oh * ow_n + ow) * co;
                    for dh in 0..kh {
                        let Some(ih) = in_coord(oh, stride[0], dh, pad[0], h) else {
                            continue;
                        };
                        for dw in 0..kw {
                            let Some(iw) = in_coord(ow, stride[1], dw, pad[1], w) else {
                                continue;
                            };
                            let xbase = (ih * w + iw) * ci;
                            let kbase = (dh * kw + dw) * ci * co;
                            for c_in in 0..ci {
                                let xv = dx[xbase + c_in];
                                if xv == 0.0 {
                                    continue;
                                }
                                let krow = &dk[kbase + c_in * co..kbase + (c_in + 1) * co];
                                let orow = &mut out[obase..obase + co];
                                for c_out in 0..co {
                                    orow[c_out] += xv * krow[c_out];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![oh_n, ow_n, co], out)?,
            Op::Conv2d { x, k, stride, pad },
        ))
    }

    /// Transposed 2D convolution (zero padding): x [H,W,Ci], kernel
    /// [kh,kw,Ci,Co] -> [(H-1)s+kh, (W-1)s+kw, Co].
    pub fn transposed_conv2d(&mut self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if sx.len() != 3 || sk.len() != 4 || sx[2] != sk[2] {
            return Err(Error::shape(format!("transposed_conv2d {sx:?} * {sk:?}")));
        }
        if stride == 0 {
            return Err(Error::shape("transposed_conv2d stride 0"));
        }
        let (h, w, ci) = (sx[0], sx[1], sx[2]);
        let (kh, kw, co) = (sk[0], sk[1], sk[3]);
        let oh_n = (h - 1) * stride + kh;
        let ow_n = (w - 1) * stride + kw;
        let mut out = vec![0.0; oh_n * ow_n * co];
        {
            let dx = self.data(x);
            let dk = self.data(k);
            for ih in 0..h {
                for iw in 0..w {
                    let xbase = (ih * w + iw) * ci;
                    for dh in 0..kh {
                        let oh = ih * stride + dh;
                        for dw in 0..kw {
                            let ow = iw * stride + dw;
                            let obase = (oh * ow_n + ow) * co;
                            let kbase = (dh * kw + dw) * ci * co;
                            for c_in in 0..ci {
                                let xv = dx[xbase + c_in];
                                if xv == 0.0 {
                                    continue;
                                }
                                let krow = &dk[kbase + c_in * co..kbase + (c_in + 1) * co];
                                let orow = &mut out[obase..obase + co];
                                for c_out in 0..co {
                                    orow[c_out] += xv * krow[c_out];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![oh_n, ow_n, co], out)?,
            Op::TConv2d { x, k, stride },
        ))
    }

    /// Stride-2 downsampling (keep even indices) along the given axes.
    pub fn downsample2(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        for &a in axes {
            if a >= sx.len() {
                return Err(Error::shape(format!("downsample axis {a} of {sx:?}")));
            }
        }
        let out_shape: Vec<usize> = sx
            .iter()
            .enumerate()
            .map(|(d, &n)| if axes.contains(&d) { n.div_ceil(2) } else { n })
            .collect();
        let map = coord_map(&out_shape, &sx, |coords| {
            coords
                .iter()
                .enumerate()
                .map(|(d, &c)| if axes.contains(&d) { c * 2 } else { c })
                .collect()
        });
        self.gather_with_map(x, map, out_shape)
    }

    /// Nearest-neighbor 2x upsampling along the given axes.
    pub fn upsample2(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        for &a in axes {
            if a >= sx.len() {
                return Err(Error::shape(format!("upsample axis {a} of {sx:?}")));
            }
        }
        let out_shape: Vec<usize> = sx
            .iter()
            .enumerate()
            .map(|(d, &n)| if axes.contains(&d) { n * 2 } else { n })
            .collect();
        let map = coord_map(&out_shape, &sx, |coords| {
            coords
                .iter()
                .enumerate()
                .map(|(d, &c)| if axes.contains(&d) { c / 2 } else { c })
                .collect()
        });
        self.gather_with_map(x, map, out_shape)
    }

    /// Nearest-neighbor resample of an [H,W,C] field to [oh,ow,C]:
    /// source row for output row i is floor(i*H/oh).
    pub fn resample2d_nearest(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || oh == 0 || ow == 0 {
            return Err(Error::shape(format!("resample2d_nearest {sx:?} -> {oh}x{ow}")));
        }
        let (h, w, c) = (sx[0], sx[1], sx[2]);
        let mut map = Vec::with_capacity(oh * ow * c);
        for i in 0..oh {
            let si = i * h / oh;
            for j in 0..ow {
                let sj = j * w / ow;
                let base = (si * w + sj) * c;
                map.extend(base..base + c);
            }
        }
        self.gather_with_map(x, map, vec![oh, ow, c])
    }

    /// Bilinear resample of an [H,W,C] field to [oh,ow,C], half-pixel
    /// centers, edge-clamped. Identity when the sizes match.
    pub fn resample2d_bilinear(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || oh == 0 || ow == 0 {
            return Err(Error::shape(format!("resample2d_bilinear {sx:?} -> {oh}x{ow}")));
        }
        let (h, w, c) = (sx[0], sx[1], sx[2]);
        let axis = |i: usize, out_n: usize, in_n: usize| -> (usize, usize, f64) {
            let src = ((i as f64 + 0.5) * in_n as f64 / out_n as f64 - 0.5)
                .clamp(0.0, (in_n - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_n - 1);
            (lo, hi, src - lo as f64)
        };
        let mut terms = Vec::with_capacity(oh * ow * c * 4);
        for i in 0..oh {
            let (y0, y1, fy) = axis(i, oh, h);
            for j in 0..ow {
                let (x0, x1, fx) = axis(j, ow, w);
                for ch in 0..c {
                    terms.push(((y0 * w + x0) * c + ch, (1.0 - fy) * (1.0 - fx)));
                    terms.push(((y0 * w + x1) * c + ch, (1.0 - fy) * fx));
                    terms.push(((y1 * w + x0) * c + ch, fy * (1.0 - fx)));
                    terms.push(((y1 * w + x1) * c + ch, fy * fx));
                }
            }
        }
        let dx = self.data(x);
        let mut out = vec![0.0; oh * ow * c];
        for (o, chunk) in out.iter_mut().zip(terms.chunks_exact(4)) {
            *o = chunk.iter().map(|&(i, wgt)| dx[i] * wgt).sum();
        }
        Ok(self.push(
            Tensor::new(vec![oh, ow, c], out)?,
            Op::Lincomb {
                x,
                terms,
                per_out: 4,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.data(x).len() {
            return Err(Error::shape(format!(
                "reshape {:?} -> {:?}",
                self.shape(x),
                shape
            )));
        }
        let value = Tensor::new(shape, self.data(x).to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Mean absolute error, scalar.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape(format!(
                "l1_loss {:?} vs {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let n = self.data(pred).len() as f64;
        let s: f64 = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(&p, &t)| (p - t).abs())
            .sum();
        Ok(self.push(Tensor::scalar(s / n), Op::L1Loss(pred, target)))
    }

    /// Soft Dice loss: 1 - (2*sum(p*t) + eps) / (sum(p^2) + sum(t^2) + eps).
    pub fn dice_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape(format!(
                "dice_loss {:?} vs {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let (dp, dt) = (self.data(pred), self.data(target));
        let s_pt: f64 = dp.iter().zip(dt).map(|(&p, &t)| p * t).sum();
        let s_pp: f64 = dp.iter().map(|&p| p * p).sum();
        let s_tt: f64 = dt.iter().map(|&t| t * t).sum();
        let loss = 1.0 - (2.0 * s_pt + DICE_EPS) / (s_pp + s_tt + DICE_EPS);
        Ok(self.push(Tensor::scalar(loss), Op::DiceLoss(pred, target)))
    }

    // ---- reverse pass ----------------------------------------------

    /// Propagate gradients from a scalar loss back to every parameter.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.ran_backward {
            return Err(Error::invalid(
                "backward already ran on this tape; build a fresh tape",
            ));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        self.ran_backward = true;

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        fn sink<'a>(
            nodes: &[Node],
            grads: &'a mut [Option<Vec<f64>>],
            v: Var,
        ) -> &'a mut Vec<f64> {
            let len = nodes[v.0].value.len();
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else { continue };
            if let Op::Leaf { param } = self.nodes[id].op {
                if param {
                    self.nodes[id].grad = Some(gout);
                }
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf { .. } => unreachable!(),
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = {
                        let s = self.shape(a);
                        (s[0], s[1])
                    };
                    let n = self.shape(b)[1];
                    {
                        let db = self.nodes[b.0].value.data().to_vec();
                        let ga = sink(&self.nodes, &mut grads, a);
                        for i in 0..m {
                            for kk in 0..k {
                                let brow = &db[kk * n..(kk + 1) * n];
                                let grow = &gout[i * n..(i + 1) * n];
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += grow[j] * brow[j];
                                }
                                ga[i * k + kk] += acc;
                            }
                        }
                    }
                    {
                        let da = self.nodes[a.0].value.data().to_vec();
                        let gb = sink(&self.nodes, &mut grads, b);
                        for i in 0..m {
                            for kk in 0..k {
                                let av = da[i * k + kk];
                                if av == 0.0 {
                                    continue;
                                }
                                let grow = &gout[i * n..(i + 1) * n];
                                let gbrow = &mut gb[kk * n..(kk + 1) * n];
                                for j in 0..n {
                                    gbrow[j] += av * grow[j];
                                }
                            }
                        }
                    }
                }
                Op::BiasAdd(x, bias) => {
                    let (x, bias) = (*x, *bias);
                    let c = self.shape(bias)[0];
                    {
                        let gx = sink(&self.nodes, &mut grads, x);
                        for (g, &v) in gx.iter_mut().zip(&gout) {
                            *g += v;
                        }
                    }
                    let gb = sink(&self.nodes, &mut grads, bias);
                    for (i, &v) in gout.iter().enumerate() {
                        gb[i % c] += v;
                    }
                }
                Op::Relu(x) => {
                    let x = *x;
                    let xs = self.nodes[x.0].value.data().to_vec();
                    let gx = sink(&self.nodes, &mut grads, x);
                    for i in 0..gout.len() {
                        if xs[i] > 0.0 {
                            gx[i] += gout[i];
                        }
                    }
                }
                Op::Tanh(x) => {
                    let x = *x;
                    let ys = self.nodes[id].value.data().to_vec();
                    let gx = sink(&self.nodes, &mut grads, x);
                    for i in 0..gout.len() {
                        gx[i] += gout[i] * (1.0 - ys[i] * ys[i]);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    {
                        let ga = sink(&self.nodes, &mut grads, a);
                        for (g, &v) in ga.iter_mut().zip(&gout) {
                            *g += v;
                        }
                    }
                    let gb = sink(&self.nodes, &mut grads, b);
                    for (g, &v) in gb.iter_mut().zip(&gout) {
                        *g += v;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = self.nodes[a.0].value.data().to_vec();
                    let db = self.nodes[b.0].value.data().to_vec();
                    {
                        let ga = sink(&self.nodes, &mut grads, a);
                        for i in 0..gout.len() {
                            ga[i] += gout[i] * db[i];
                        }
                    }
                    let gb = sink(&self.nodes, &mut grads, b);
                    for i in 0..gout.len() {
                        gb[i] += gout[i] * da[i];
                    }
                }
                Op::Scale(x, c) => {
                    let (x, c) = (*x, *c);
                    let gx = sink(&self.nodes, &mut grads, x);
                    for i in 0..gout.len() {
                        gx[i] += gout[i] * c;
                    }
                }
                Op::Sum(x) => {
                    let x = *x;
                    let g = gout[0];
                    let gx = sink(&self.nodes, &mut grads, x);
                    for v in gx.iter_mut() {
                        *v += g;
                    }
                }
                Op::MeanAxis { x, axis } => {
                    let (x, axis) = (*x, *axis);
                    let sx = self.shape(x).to_vec();
                    let inner: usize = sx[axis + 1..].iter().product();
                    let n_axis = sx[axis];
                    let outer: usize = sx[..axis].iter().product();
                    let scale = 1.0 / n_axis as f64;
                    let gx = sink(&self.nodes, &mut grads, x);
                    for o in 0..outer {
                        for a in 0..n_axis {
                            let base = (o * n_axis + a) * inner;
                            let obase = o * inner;
                            for i in 0..inner {
                                gx[base + i] += gout[obase + i] * scale;
                            }
                        }
                    }
                }
                Op::Concat { parts, axis } => {
                    let parts = parts.clone();
                    let axis = *axis;
                    let out_shape = self.nodes[id].value.shape().to_vec();
                    let outer: usize = out_shape[..axis].iter().product();
                    let inner: usize = out_shape[axis + 1..].iter().product();
                    let total_block = out_shape[axis] * inner;
                    let mut offset = 0;
                    for &p in &parts {
                        let block = self.shape(p)[axis] * inner;
                        let gp = sink(&self.nodes, &mut grads, p);
                        for o in 0..outer {
                            let src = &gout[o * total_block + offset..o * total_block + offset + block];
                            let dst = &mut gp[o * block..(o + 1) * block];
                            for (g, &v) in dst.iter_mut().zip(src) {
                                *g += v;
                            }
                        }
                        offset += block;
                    }
                }
                Op::Gather { x, map } => {
                    let x = *x;
                    let map = map.clone();
                    let gx = sink(&self.nodes, &mut grads, x);
                    for (o, &src) in map.iter().enumerate() {
                        gx[src] += gout[o];
                    }
                }
                Op::Lincomb { x, terms, per_out } => {
                    let x = *x;
                    let terms = terms.clone();
                    let per_out = *per_out;
                    let gx = sink(&self.nodes, &mut grads, x);
                    for (o, chunk) in terms.chunks_exact(per_out).enumerate() {
                        let g = gout[o];
                        for &(src, wgt) in chunk {
                            gx[src] += g * wgt;
                        }
                    }
                }
                Op::SegmentSum { x, pairs } => {
                    let x = *x;
                    let pairs = pairs.clone();
                    let d = self.shape(x)[1];
                    let gx = sink(&self.nodes, &mut grads, x);
                    for &(s, t) in &pairs {
                        let src = &gout[t * d..(t + 1) * d];
                        let dst = &mut gx[s * d..(s + 1) * d];
                        for (g, &v) in dst.iter_mut().zip(src) {
                            *g += v;
                        }
                    }
                }
                Op::RowScale { x, factors } => {
                    let x = *x;
                    let factors = factors.clone();
                    let d = self.shape(x)[1];
                    let gx = sink(&self.nodes, &mut grads, x);
                    for (i, g) in gx.iter_mut().enumerate() {
                        *g += gout[i] * factors[i / d];
                    }
                }
                Op::Conv3d { x, k, stride, pad } => {
                    let (x, k, stride, pad) = (*x, *k, *stride, *pad);
                    let sx = self.shape(x).to_vec();
                    let sk = self.shape(k).to_vec();
                    let so = self.nodes[id].value.shape().to_vec();
                    let dx = self.nodes[x.0].value.data().to_vec();
                    let dk = self.nodes[k.0].value.data().to_vec();
                    let (h, w, t, ci) = (sx[0], sx[1], sx[2], sx[3]);
                    let (kh, kw, kt, co) = (sk[0], sk[1], sk[2], sk[4]);
                    let (oh_n, ow_n, ot_n) = (so[0], so[1], so[2]);
                    let mut gx = vec![0.0; dx.len()];
                    let mut gk = vec![0.0; dk.len()];
                    for oh in 0..oh_n {
                        for ow in 0..ow_n {
                            for ot in 0..ot_n {
                                let obase = ((oh * ow_n + ow) * ot_n + ot) * co;
                                let grow = &gout[obase..obase + co];
                                for dh in 0..kh {
                                    let Some(ih) = in_coord(oh, stride[0], dh, pad[0], h) else {
                                        continue;
                                    };
                                    for dw in 0..kw {
                                        let Some(iw) = in_coord(ow, stride[1], dw, pad[1], w)
                                        else {
                                            continue;
                                        };
                                        for dt in 0..kt {
                                            let Some(it) =
                                                in_coord(ot, stride[2], dt, pad[2], t)
                                            else {
                                                continue;
                                            };
                                            let xbase = ((ih * w + iw) * t + it) * ci;
                                            let kbase = (((dh * kw + dw) * kt + dt) * ci) * co;
                                            for c_in in 0..ci {
                                                let krow = &dk
                                                    [kbase + c_in * co..kbase + (c_in + 1) * co];
                                                let gkrow = &mut gk
                                                    [kbase + c_in * co..kbase + (c_in + 1) * co];
                                                let xv = dx[xbase + c_in];
                                                let mut acc = 0.0;
                                                for c_out in 0..co {
                                                    acc += grow[c_out] * krow[c_out];
                                                    gkrow[c_out] += xv * grow[c_out];
                                                }
                                                gx[xbase + c_in] += acc;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    accumulate(sink(&self.nodes, &mut grads, x), &gx);
                    accumulate(sink(&self.nodes, &mut grads, k), &gk);
                }
                Op::Conv2d { x, k, stride, pad } => {
                    let (x, k, stride, pad) = (*x, *k, *stride, *pad);
                    let sx = self.shape(x).to_vec();
                    let sk = self.shape(k).to_vec();
                    let so = self.nodes[id].value.shape().to_vec();
                    let dx = self.nodes[x.0].value.data().to_vec();
                    let dk = self.nodes[k.0].value.data().to_vec();
                    let (h, w, ci) = (sx[0], sx[1], sx[2]);
                    let (kh, kw, co) = (sk[0], sk[1], sk[3]);
                    let (oh_n, ow_n) = (so[0], so[1]);
                    let mut gx = vec![0.0; dx.len()];
                    let mut gk = vec![0.0; dk.len()];
                    for oh in 0..oh_n {
                        for ow in 0..ow_n {
                            let obase = (oh * ow_n + ow) * co;
                            let grow = &gout[obase..obase + co];
                            for dh in 0..kh {
                                let Some(ih) = in_coord(oh, stride[0], dh, pad[0], h) else {
                                    continue;
                                };
                                for dw in 0..kw {
                                    let Some(iw) = in_coord(ow, stride[1], dw, pad[1], w) else {
                                        continue;
                                    };
                                    let xbase = (ih * w + iw) * ci;
                                    let kbase = (dh * kw + dw) * ci * co;
                                    for c_in in 0..ci {
                                        let krow =
                                            &dk[kbase + c_in * co..kbase + (c_in + 1) * co];
                                        let gkrow =
                                            &mut gk[kbase + c_in * co..kbase + (c_in + 1) * co];
                                        let xv = dx[xbase + c_in];
                                        let mut acc = 0.0;
                                        for c_out in 0..co {
                                            acc += grow[c_out] * krow[c_out];
                                            gkrow[c_out] += xv * grow[c_out];
                                        }
                                        gx[xbase + c_in] += acc;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(sink(&self.nodes, &mut grads, x), &gx);
                    accumulate(sink(&self.nodes, &mut grads, k), &gk);
                }
                Op::TConv2d { x, k, stride } => {
                    let (x, k, stride) = (*x, *k, *stride);
                    let sx = self.shape(x).to_vec();
                    let sk = self.shape(k).to_vec();
                    let dx = self.nodes[x.0].value.data().to_vec();
                    let dk = self.nodes[k.0].value.data().to_vec();
                    let (h, w, ci) = (sx[0], sx[1], sx[2]);
                    let (kh, kw, co) = (sk[0], sk[1], sk[3]);
                    let ow_n = (w - 1) * stride + kw;
                    let mut gx = vec![0.0; dx.len()];
                    let mut gk = vec![0.0; dk.len()];
                    for ih in 0..h {
                        for iw in 0..w {
                            let xbase = (ih * w + iw) * ci;
                            for dh in 0..kh {
                                let oh = ih * stride + dh;
                                for dw in 0..kw {
                                    let ow = iw * stride + dw;
                                    let obase = (oh * ow_n + ow) * co;
                                    let grow = &gout[obase..obase + co];
                                    let kbase = (dh * kw + dw) * ci * co;
                                    for c_in in 0..ci {
                                        let krow =
                                            &dk[kbase + c_in * co..kbase + (c_in + 1) * co];
                                        let gkrow =
                                            &mut gk[kbase + c_in * co..kbase + (c_in + 1) * co];
                                        let xv = dx[xbase + c_in];
                                        let mut acc = 0.0;
                                        for c_out in 0..co {
                                            acc += grow[c_out] * krow[c_out];
                                            gkrow[c_out] += xv * grow[c_out];
                                        }
                                        gx[xbase + c_in] += acc;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(sink(&self.nodes, &mut grads, x), &gx);
                    accumulate(sink(&self.nodes, &mut grads, k), &gk);
                }
                Op::Reshape(x) => {
                    let x = *x;
                    let gx = sink(&self.nodes, &mut grads, x);
                    for (g, &v) in gx.iter_mut().zip(&gout) {
                        *g += v;
                    }
                }
                Op::L1Loss(p, t) => {
                    let (p, t) = (*p, *t);
                    let dp = self.nodes[p.0].value.data().to_vec();
                    let dt = self.nodes[t.0].value.data().to_vec();
                    let n = dp.len() as f64;
                    let g = gout[0] / n;
                    {
                        let gp = sink(&self.nodes, &mut grads, p);
                        for i in 0..dp.len() {
                            gp[i] += g * (dp[i] - dt[i]).signum_or_zero();
                        }
                    }
                    let gt = sink(&self.nodes, &mut grads, t);
                    for i in 0..dp.len() {
                        gt[i] -= g * (dp[i] - dt[i]).signum_or_zero();
                    }
                }
                Op::DiceLoss(p, t) => {
                    let (p, t) = (*p, *t);
                    let dp = self.nodes[p.0].value.data().to_vec();
                    let dt = self.nodes[t.0].value.data().to_vec();
                    let s_pt: f64 = dp.iter().zip(&dt).map(|(&a, &b)| a * b).sum();
                    let s_pp: f64 = dp.iter().map(|&a| a * a).sum();
                    let s_tt: f64 = dt.iter().map(|&b| b * b).sum();
                    let num = 2.0 * s_pt + DICE_EPS;
                    let den = s_pp + s_tt + DICE_EPS;
                    let g = gout[0];
                    {
                        let gp = sink(&self.nodes, &mut grads, p);
                        for i in 0..dp.len() {
                            gp[i] += g * (2.0 * num * dp[i] - 2.0 * dt[i] * den) / (den * den);
                        }
                    }
                    let gt = sink(&self.nodes, &mut grads, t);
                    for i in 0..dt.len() {
                        gt[i] += g * (2.0 * num * dt[i] - 2.0 * dp[i] * den) / (den * den);
                    }
                }
            }
        }
        Ok(())
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// floor((in + 2p - k)/s) + 1, rejecting kernels that do not fit.
fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("stride 0"));
    }
    if input + 2 * pad < kernel {
        return Err(Error::shape(format!(
            "kernel {kernel} exceeds padded input {input}+2*{pad}"
        )));
    }
    Ok((input + 2 * pad - kernel) / stride + 1)
}

fn in_coord(out: usize, stride: usize, offset: usize, pad: usize, limit: usize) -> Option<usize> {
    let raw = out * stride + offset;
    if raw < pad {
        return None;
    }
    let idx = raw - pad;
    (idx < limit).then_some(idx)
}

/// Build a flat gather map by walking output coordinates.
fn coord_map<F>(out_shape: &[usize], in_shape: &[usize], f: F) -> Vec<usize>
where
    F: Fn(&[usize]) -> Vec<usize>,
{
    let out_strides = Tensor::strides_of(out_shape);
    let in_strides = Tensor::strides_of(in_shape);
    let numel: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut coords = vec![0usize; out_shape.len()];
    for flat in 0..numel {
        let mut rem = flat;
        for (d, &s) in out_strides.iter().enumerate() {
            coords[d] = rem / s;
            rem %= s;
        }
        let in_coords = f(&coords);
        let idx: usize = in_coords
            .iter()
            .zip(&in_strides)
            .map(|(&c, &s)| c * s)
            .sum();
        map.push(idx);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_grad_is_input() {
        // loss = sum(w * x) with fixed x => dloss/dw = x
        let mut tape = Tape::new();
        let w = tape.param(Tensor::from_vec(vec![0.5, -1.0, 2.0]));
        let x = tape.leaf(Tensor::from_vec(vec![3.0, 4.0, 5.0]));
        let prod = tape.mul(w, x).unwrap();
        let loss = tape.sum(prod);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[3.0, 4.0, 5.0]);
        assert!(tape.grad(x).is_none(), "non-parameter leaves stay untouched");
    }

    #[test]
    fn tanh_grad_at_zero_is_one() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::scalar(0.0));
        let y = tape.tanh(w);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[1.0]);
    }

    #[test]
    fn fanout_accumulates() {
        // loss = sum(w + w) => grad = 2
        let mut tape = Tape::new();
        let w = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let s = tape.add(w, w).unwrap();
        let loss = tape.sum(s);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(tape.backward(w).is_err());
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::scalar(1.0));
        let loss = tape.tanh(w);
        tape.backward(loss).unwrap();
        assert!(tape.backward(loss).is_err());
    }

    #[test]
    fn segment_sum_follows_edges() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let out = tape.segment_sum(x, &[(0, 1), (2, 1), (1, 0)], 3).unwrap();
        assert_eq!(tape.value(out).data(), &[3.0, 4.0, 6.0, 8.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_axis_one() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2, 1], vec![9.0, 8.0]).unwrap());
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 3]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
    }

    #[test]
    fn conv_shape_algebra() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(vec![8, 8, 4, 1]));
        let k = tape.leaf(Tensor::zeros(vec![3, 3, 3, 1, 2]));
        let y = tape.conv3d(x, k, [1, 1, 1], [1, 1, 1]).unwrap();
        assert_eq!(tape.value(y).shape(), &[8, 8, 4, 2]);
        let ds = tape.downsample2(y, &[0, 1, 2]).unwrap();
        assert_eq!(tape.value(ds).shape(), &[4, 4, 2, 2]);

        let x2 = tape.leaf(Tensor::zeros(vec![4, 4, 3]));
        let k2 = tape.leaf(Tensor::zeros(vec![2, 2, 3, 5]));
        let up = tape.transposed_conv2d(x2, k2, 2).unwrap();
        assert_eq!(tape.value(up).shape(), &[8, 8, 5]);
        let k3 = tape.leaf(Tensor::zeros(vec![3, 3, 5, 2]));
        let back = tape.conv2d(up, k3, [1, 1], [1, 1]).unwrap();
        assert_eq!(tape.value(back).shape(), &[8, 8, 2]);
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(vec![2, 2, 1]));
        let k = tape.leaf(Tensor::zeros(vec![3, 3, 1, 1]));
        assert!(tape.conv2d(x, k, [1, 1], [0, 0]).is_err());
    }

    #[test]
    fn downsample_keeps_even_indices_with_ceil() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![0.0, 1.0, 2.0, 3.0, 4.0]));
        let y = tape.downsample2(x, &[0]).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0, 4.0]);
    }

    #[test]
    fn upsample_duplicates_blocks() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = tape.upsample2(x, &[0, 1]).unwrap();
        assert_eq!(tape.value(y).shape(), &[4, 4, 1]);
        let d = tape.value(y).data();
        assert_eq!(&d[0..4], &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(&d[12..16], &[3.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn nearest_resample_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        // identity
        let same = tape.resample2d_nearest(x, 2, 2).unwrap();
        assert_eq!(tape.value(same).data(), &[1.0, 2.0, 3.0, 4.0]);
        // 2x2 -> 4x4 duplicates each value into a 2x2 block
        let up = tape.resample2d_nearest(x, 4, 4).unwrap();
        let d = tape.value(up).data();
        assert_eq!(&d[0..4], &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(&d[4..8], &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(&d[12..16], &[3.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn bilinear_identity_when_sizes_match() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 3, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let y = tape.resample2d_bilinear(x, 2, 3).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn l1_and_dice_of_equal_maps_are_zero() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(vec![0.2, 0.4, 0.9]));
        let t = tape.leaf(Tensor::from_vec(vec![0.2, 0.4, 0.9]));
        let l1 = tape.l1_loss(p, t).unwrap();
        let dice = tape.dice_loss(p, t).unwrap();
        assert_eq!(tape.value(l1).item(), 0.0);
        assert!(tape.value(dice).item().abs() < 1e-6);
    }
}
