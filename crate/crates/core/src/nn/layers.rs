//! Small layer zoo on top of candle tensor ops. Everything is built from
//! differentiable primitives so gradients flow through every layer.

use candle_core::{Module, Tensor, D};

use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Linear {
    inner: candle_nn::Linear,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        let w = ps.var(&format!("{name}.weight"), &[output, input], Init::Uniform(bound))?;
        let b = ps.var(&format!("{name}.bias"), &[output], Init::Uniform(bound))?;
        Ok(Self {
            inner: candle_nn::Linear::new(w, Some(b)),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.inner.forward(x)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.var(&format!("{name}.gamma"), &[width], Init::Ones)?,
            beta: ps.var(&format!("{name}.beta"), &[width], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// 1-D convolution over `[B, C, T]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv1d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let bound = 1.0 / ((input * kernel) as f64).sqrt();
        Ok(Self {
            weight: ps.var(&format!("{name}.weight"), &[output, input, kernel], Init::Uniform(bound))?,
            bias: ps.var(&format!("{name}.bias"), &[output], Init::Uniform(bound))?,
            stride,
            padding,
        })
    }

    /// im2col + matmul. candle's native conv1d backward gives wrong kernel
    /// gradients for batches larger than one, so it is not used.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, t) = x.dims3()?;
        let (o, ci, k) = self.weight.dims3()?;
        if c != ci {
            return Err(Error::Shape(format!("conv expects {ci} input channels, got {c}")));
        }
        let s = self.stride.max(1);
        let tp = t + 2 * self.padding;
        if tp < k {
            return Err(Error::Shape(format!("input length {t} shorter than kernel {k}")));
        }
        let l = (tp - k) / s + 1;
        let mut xp = if self.padding > 0 {
            x.pad_with_zeros(2, self.padding, self.padding)?
        } else {
            x.clone()
        };
        // Every tap reads s·l samples so the stride can be taken by reshape.
        let need = k - 1 + s * l;
        if need > tp {
            xp = xp.pad_with_zeros(2, 0, need - tp)?;
        }
        let cols = (0..k)
            .map(|j| {
                let tap = xp.narrow(2, j, s * l)?;
                if s == 1 {
                    Ok(tap)
                } else {
                    tap.reshape((b, c, l, s))?.narrow(3, 0, 1)?.squeeze(3)
                }
            })
            .collect::<candle_core::Result<Vec<_>>>()?;
        let cols = Tensor::stack(&cols, 2)?.reshape((b, c * k, l))?;
        let y = self.weight.reshape((o, c * k))?.broadcast_matmul(&cols)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1))?)?)
    }
}

/// Single-layer GRU over `[B, T, F]` with an optional `[B, T]` step mask;
/// masked steps carry the previous hidden state through unchanged.
#[derive(Debug, Clone)]
pub struct Gru {
    input: Linear,
    hidden: Linear,
    width: usize,
}

impl Gru {
    pub fn new(ps: &mut ParamStore, name: &str, input: usize, width: usize) -> Result<Self> {
        Ok(Self {
            input: Linear::new(ps, &format!("{name}.ih"), input, 3 * width)?,
            hidden: Linear::new(ps, &format!("{name}.hh"), width, 3 * width)?,
            width,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Returns all hidden states `[B, T, H]`.
    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let h_dim = self.width;
        let gx = self.input.forward(x)?;
        let mut h = Tensor::zeros((b, h_dim), x.dtype(), x.device())?;
        let mut outputs = Vec::with_capacity(t);
        for step in 0..t {
            let gxt = gx.narrow(1, step, 1)?.squeeze(1)?;
            let gh = self.hidden.forward(&h)?;
            let r = candle_nn::ops::sigmoid(&(gxt.narrow(1, 0, h_dim)? + gh.narrow(1, 0, h_dim)?)?)?;
            let z = candle_nn::ops::sigmoid(&(gxt.narrow(1, h_dim, h_dim)? + gh.narrow(1, h_dim, h_dim)?)?)?;
            let n = (gxt.narrow(1, 2 * h_dim, h_dim)? + (r * gh.narrow(1, 2 * h_dim, h_dim)?)?)?.tanh()?;
            let one_minus_z = z.affine(-1.0, 1.0)?;
            let mut h_new = ((one_minus_z * n)? + (z * &h)?)?;
            if let Some(m) = mask {
                let mt = m.narrow(1, step, 1)?;
                h_new = (h_new.broadcast_mul(&mt)? + h.broadcast_mul(&mt.affine(-1.0, 1.0)?)?)?;
            }
            h = h_new;
            outputs.push(h.unsqueeze(1)?);
        }
        Ok(Tensor::cat(&outputs, 1)?)
    }
}

/// Multi-head self-attention over `[B, T, D]` with an optional `[B, T]`
/// key mask (1 = attend, 0 = ignore).
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    width: usize,
}

impl MultiHeadAttention {
    pub fn new(ps: &mut ParamStore, name: &str, width: usize, heads: usize) -> Result<Self> {
        assert!(width % heads == 0, "width must divide into heads");
        Ok(Self {
            q: Linear::new(ps, &format!("{name}.q"), width, width)?,
            k: Linear::new(ps, &format!("{name}.k"), width, width)?,
            v: Linear::new(ps, &format!("{name}.v"), width, width)?,
            o: Linear::new(ps, &format!("{name}.o"), width, width)?,
            heads,
            width,
        })
    }

    pub fn forward(&self, x: &Tensor, key_mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let dh = self.width / self.heads;
        let split = |y: Tensor| -> Result<Tensor> {
            Ok(y.reshape((b, t, self.heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(x)?)?;
        let k = split(self.k.forward(x)?)?;
        let v = split(self.v.forward(x)?)?;
        let mut scores = (q.matmul(&k.t()?.contiguous()?)? / (dh as f64).sqrt())?;
        if let Some(m) = key_mask {
            // 0 → large negative bias on that key.
            let bias = m.affine(1e9, -1e9)?.reshape((b, 1, 1, t))?;
            scores = scores.broadcast_add(&bias)?;
        }
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, t, self.width))?;
        self.o.forward(&ctx)
    }
}

/// Pre-norm transformer encoder layer without positional encoding.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl TransformerLayer {
    pub fn new(ps: &mut ParamStore, name: &str, width: usize, heads: usize, ff: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(ps, &format!("{name}.norm1"), width)?,
            attn: MultiHeadAttention::new(ps, &format!("{name}.attn"), width, heads)?,
            norm2: LayerNorm::new(ps, &format!("{name}.norm2"), width)?,
            ff1: Linear::new(ps, &format!("{name}.ff1"), width, ff)?,
            ff2: Linear::new(ps, &format!("{name}.ff2"), ff, width)?,
        })
    }

    pub fn forward(&self, x: &Tensor, key_mask: Option<&Tensor>) -> Result<Tensor> {
        let x = (x + self.attn.forward(&self.norm1.forward(x)?, key_mask)?)?;
        let ff = self.ff2.forward(&self.ff1.forward(&self.norm2.forward(&x)?)?.relu()?)?;
        Ok((x + ff)?)
    }
}

/// Row-wise L2 normalisation of the last dimension.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    Ok(x.broadcast_div(&(norm + 1e-12)?)?)
}

/// Mean over dim 1 of `[B, T, F]` restricted to `mask` (`[B, T]`, 0/1).
pub fn masked_mean(x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    match mask {
        None => Ok(x.mean(1)?),
        Some(m) => {
            let m3 = m.unsqueeze(2)?;
            let sum = x.broadcast_mul(&m3)?.sum(1)?;
            let count = m.sum_keepdim(1)?.clamp(1.0, f64::MAX)?;
            Ok(sum.broadcast_div(&count)?)
        }
    }
}

/// Binary cross-entropy on logits, averaged over all elements.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    // max(x, 0) - x*y + log(1 + exp(-|x|))
    let relu = logits.relu()?;
    let log_term = logits.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    let loss = ((relu - (logits * targets)?)? + log_term)?;
    Ok(loss.mean_all()?)
}

/// Cross-entropy against soft targets along the last dimension, averaged
/// over rows; `weights` (`[rows]`) masks rows out of the mean.
pub fn soft_cross_entropy(logits: &Tensor, targets: &Tensor, weights: Option<&Tensor>) -> Result<Tensor> {
    let logp = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    let per_row = (logp * targets)?.sum(D::Minus1)?.neg()?;
    match weights {
        None => Ok(per_row.mean_all()?),
        Some(w) => {
            let total = w.sum_all()?.clamp(1e-12, f64::MAX)?;
            Ok((per_row * w)?.sum_all()?.broadcast_div(&total)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn conv_case(stride: usize, padding: usize, kernel: usize) {
        let mut ps = ParamStore::new(DType::F64, 3);
        let conv = Conv1d::new(&mut ps, "c", 3, 4, kernel, stride, padding).unwrap();
        let x = Tensor::randn(0f64, 1.0, (3, 3, 21), &Device::Cpu).unwrap();
        let ours = conv.forward(&x).unwrap();
        let reference = x
            .conv1d(&conv.weight, padding, stride, 1, 1)
            .unwrap()
            .broadcast_add(&conv.bias.reshape((1, (), 1)).unwrap())
            .unwrap();
        assert_eq!(ours.dims(), reference.dims());
        let diff = (ours.clone() - reference).unwrap().abs().unwrap().max_all().unwrap();
        assert!(diff.to_scalar::<f64>().unwrap() < 1e-10);

        // Kernel gradient against central differences.
        let r = Tensor::randn(0f64, 1.0, ours.dims(), &Device::Cpu).unwrap();
        let var = ps.get("c.weight").unwrap().clone();
        let grads = conv.forward(&x).unwrap().mul(&r).unwrap().sum_all().unwrap().backward().unwrap();
        let g = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let w0 = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let shape = var.as_tensor().dims().to_vec();
        let f = |w: Vec<f64>| {
            var.set(&Tensor::from_vec(w, shape.as_slice(), &Device::Cpu).unwrap()).unwrap();
            conv.forward(&x).unwrap().mul(&r).unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap()
        };
        for i in (0..w0.len()).step_by(5) {
            let (mut p, mut m) = (w0.clone(), w0.clone());
            p[i] += 1e-5;
            m[i] -= 1e-5;
            let fd = (f(p) - f(m)) / 2e-5;
            assert!((fd - g[i]).abs() < 1e-6, "stride {stride}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn conv_matches_reference_and_gradients() {
        conv_case(1, 1, 3);
        conv_case(5, 0, 5);
        conv_case(2, 2, 5);
        conv_case(4, 4, 9);
    }

    /// Central-difference check of every parameter's gradient (sampled).
    fn check_grads(ps: &ParamStore, f: &dyn Fn() -> Tensor) {
        for name in ps.names().map(str::to_string).collect::<Vec<_>>() {
            let var = ps.get(&name).unwrap().clone();
            let grads = f().backward().unwrap();
            let Some(g) = grads.get(var.as_tensor()) else {
                panic!("{name} has no gradient")
            };
            let g = g.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let w0 = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let shape = var.as_tensor().dims().to_vec();
            let eval = |w: Vec<f64>| {
                var.set(&Tensor::from_vec(w, shape.as_slice(), &Device::Cpu).unwrap()).unwrap();
                f().to_scalar::<f64>().unwrap()
            };
            for i in (0..w0.len()).step_by(7) {
                let (mut p, mut m) = (w0.clone(), w0.clone());
                p[i] += 1e-5;
                m[i] -= 1e-5;
                let fd = (eval(p) - eval(m)) / 2e-5;
                assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{name}[{i}]: fd {fd} vs {}", g[i]);
            }
            var.set(&Tensor::from_vec(w0, shape.as_slice(), &Device::Cpu).unwrap()).unwrap();
        }
    }

    #[test]
    fn gru_gradients() {
        let mut ps = ParamStore::new(DType::F64, 4);
        let gru = Gru::new(&mut ps, "g", 5, 6).unwrap();
        let x = Tensor::randn(0f64, 1.0, (3, 4, 5), &Device::Cpu).unwrap();
        let mask = Tensor::new(&[[1f64, 1., 1., 0.], [1., 1., 0., 0.], [1., 1., 1., 1.]], &Device::Cpu).unwrap();
        let r = Tensor::randn(0f64, 1.0, (3, 4, 6), &Device::Cpu).unwrap();
        check_grads(&ps, &|| gru.forward(&x, Some(&mask)).unwrap().mul(&r).unwrap().sum_all().unwrap());
    }

    #[test]
    fn transformer_gradients() {
        let mut ps = ParamStore::new(DType::F64, 5);
        let layer = TransformerLayer::new(&mut ps, "t", 8, 2, 16).unwrap();
        let x = Tensor::randn(0f64, 1.0, (3, 5, 8), &Device::Cpu).unwrap();
        let mask = Tensor::new(&[[1f64, 1., 1., 0., 0.], [1., 1., 1., 1., 1.], [1., 0., 0., 0., 0.]], &Device::Cpu).unwrap();
        let r = Tensor::randn(0f64, 1.0, (3, 5, 8), &Device::Cpu).unwrap();
        check_grads(&ps, &|| layer.forward(&x, Some(&mask)).unwrap().mul(&r).unwrap().sum_all().unwrap());
    }
}
