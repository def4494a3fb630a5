//! Dense C x H x W kernels for channel attention gating and adaptive
//! three-level feature fusion.
//!
//! Everything here is a plain function of its inputs. Weights and logits are
//! supplied by the caller; nothing is trained.

use crate::error::{Error, Result};

/// Row-major `C x H x W` volume of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidConfig(format!(
                "tensor dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::DimMismatch(format!(
                "{channels}x{height}x{width} tensor needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite tensor entry at index {i}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![value; channels * height * width],
        )
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(c, h, w));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }

    fn with_data(&self, data: Vec<f64>) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    const MAGIC: &'static [u8; 2] = b"T3";
    const HEADER_LEN: usize = 14;

    /// Binary form: `"T3"`, then `u32` C, H, W little-endian, then
    /// `C * H * W` little-endian IEEE-754 doubles.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(Self::MAGIC);
        for d in [self.channels, self.height, self.width] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset, message: &str| Error::Tensor {
            offset,
            message: message.to_string(),
        };
        if bytes.len() < Self::HEADER_LEN {
            return Err(err(bytes.len(), "truncated header"));
        }
        if &bytes[..2] != Self::MAGIC {
            return Err(err(0, "bad magic, expected \"T3\""));
        }
        let dim = |i: usize| {
            let o = 2 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
        };
        let (c, h, w) = (dim(0), dim(1), dim(2));
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| err(2, "dimension product overflows"))?;
        let expected = n
            .checked_mul(8)
            .and_then(|v| v.checked_add(Self::HEADER_LEN))
            .ok_or_else(|| err(2, "dimension product overflows"))?;
        if bytes.len() != expected {
            return Err(err(
                bytes.len().min(expected),
                &format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let data = bytes[Self::HEADER_LEN..]
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
            .collect();
        Self::new(c, h, w, data).map_err(|e| err(Self::HEADER_LEN, &e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcaConfig {
    pub gamma: f64,
    pub b: f64,
}

impl Default for EcaConfig {
    fn default() -> Self {
        Self { gamma: 2.0, b: 1.0 }
    }
}

/// Shared-weight 1D kernel applied across the channel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dKernel {
    weights: Vec<f64>,
}

impl Conv1dKernel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "kernel size must be odd and positive, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite kernel weight".into()));
        }
        Ok(Self { weights })
    }

    /// Center tap 1, others 0.
    pub fn identity(k: usize) -> Result<Self> {
        let mut w = vec![0.0; k];
        if k > 0 {
            w[k / 2] = 1.0;
        }
        Self::new(w)
    }

    pub fn zeros(k: usize) -> Result<Self> {
        Self::new(vec![0.0; k])
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Adaptive kernel size for `channels` channels:
/// `t = floor(|(log2 C + b) / gamma|)`, bumped to the next odd number when
/// even, and never below 3.
pub fn eca_kernel_size(channels: usize, cfg: &EcaConfig) -> Result<usize> {
    if channels < 1 {
        return Err(Error::InvalidConfig("channel count must be >= 1".into()));
    }
    if !(cfg.gamma > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ECA gamma must be positive, got {}",
            cfg.gamma
        )));
    }
    let t = (((channels as f64).log2() + cfg.b) / cfg.gamma)
        .abs()
        .floor() as usize;
    let k = if t % 2 == 1 { t } else { t + 1 };
    Ok(k.max(3))
}

pub fn global_avg_pool(x: &Tensor3) -> Vec<f64> {
    let n = (x.height * x.width) as f64;
    (0..x.channels)
        .map(|c| x.plane(c).iter().sum::<f64>() / n)
        .collect()
}

/// Zero-padded "same" correlation of `v` with a shared kernel.
pub fn conv1d_same(v: &[f64], kern: &Conv1dKernel) -> Vec<f64> {
    let k = kern.size();
    let half = (k - 1) / 2;
    let len = v.len() as isize;
    (0..v.len())
        .map(|c| {
            kern.weights
                .iter()
                .enumerate()
                .filter_map(|(j, w)| {
                    let i = c as isize + j as isize - half as isize;
                    (0..len).contains(&i).then(|| w * v[i as usize])
                })
                .sum()
        })
        .collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-channel gate `sigmoid(conv1d(GAP(x)))` multiplied into `x`.
pub fn eca_forward(x: &Tensor3, kern: &Conv1dKernel) -> Tensor3 {
    let gates: Vec<f64> = conv1d_same(&global_avg_pool(x), kern)
        .into_iter()
        .map(sigmoid)
        .collect();
    let n = x.height * x.width;
    let data = x
        .data
        .chunks_exact(n)
        .zip(&gates)
        .flat_map(|(plane, g)| plane.iter().map(move |v| g * v))
        .collect();
    x.with_data(data)
}

/// Nearest-neighbour resize; source index `floor(dst * src / dst_extent)`
/// on both axes, so it also subsamples when shrinking.
pub fn resize_to(x: &Tensor3, target_h: usize, target_w: usize) -> Result<Tensor3> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::InvalidConfig(format!(
            "resize target must be positive, got {target_h}x{target_w}"
        )));
    }
    if (target_h, target_w) == (x.height, x.width) {
        return Ok(x.clone());
    }
    let rows: Vec<usize> = (0..target_h).map(|d| d * x.height / target_h).collect();
    let cols: Vec<usize> = (0..target_w).map(|d| d * x.width / target_w).collect();
    let mut data = Vec::with_capacity(x.channels * target_h * target_w);
    for c in 0..x.channels {
        let plane = x.plane(c);
        for &sh in &rows {
            let row = &plane[sh * x.width..(sh + 1) * x.width];
            data.extend(cols.iter().map(|&sw| row[sw]));
        }
    }
    Ok(Tensor3 {
        channels: x.channels,
        height: target_h,
        width: target_w,
        data,
    })
}

/// Three spatial `H x W` maps, one per pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    height: usize,
    width: usize,
    maps: [Vec<f64>; 3],
}

impl FusionWeights {
    pub fn new(height: usize, width: usize, maps: [Vec<f64>; 3]) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig("weight maps must be non-empty".into()));
        }
        for (i, m) in maps.iter().enumerate() {
            if m.len() != height * width {
                return Err(Error::DimMismatch(format!(
                    "weight map {i} has {} entries, expected {}",
                    m.len(),
                    height * width
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "weight map {i} has a non-finite entry"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            maps,
        })
    }

    /// Constant weights `(a, b, c)` everywhere.
    pub fn uniform(height: usize, width: usize, a: f64, b: f64, c: f64) -> Result<Self> {
        let n = height * width;
        Self::new(height, width, [vec![a; n], vec![b; n], vec![c; n]])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn maps(&self) -> &[Vec<f64>; 3] {
        &self.maps
    }

    pub fn at(&self, h: usize, w: usize) -> [f64; 3] {
        let i = h * self.width + w;
        [self.maps[0][i], self.maps[1][i], self.maps[2][i]]
    }

    /// True when every location is non-negative and sums to 1 within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (0..self.height * self.width).all(|i| {
            let w = [self.maps[0][i], self.maps[1][i], self.maps[2][i]];
            w.iter().all(|v| *v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// Pointwise softmax across the three logit maps.
pub fn normalize_fusion_weights(logits: &FusionWeights) -> FusionWeights {
    let n = logits.height * logits.width;
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let l = [logits.maps[0][i], logits.maps[1][i], logits.maps[2][i]];
        let m = l[0].max(l[1]).max(l[2]);
        let e = l.map(|v| (v - m).exp());
        let s = e[0] + e[1] + e[2];
        for (map, ek) in out.iter_mut().zip(e) {
            map[i] = ek / s;
        }
    }
    FusionWeights {
        height: logits.height,
        width: logits.width,
        maps: out,
    }
}

/// `alpha * x1 + beta * x2 + gamma * x3` with spatial weights broadcast over
/// channels. Inputs must share dims and the weights must be normalized.
pub fn asff_fuse(x1: &Tensor3, x2: &Tensor3, x3: &Tensor3, w: &FusionWeights) -> Result<Tensor3> {
    if x1.dims() != x2.dims() || x1.dims() != x3.dims() {
        return Err(Error::DimMismatch(format!(
            "fusion inputs differ: {:?}, {:?}, {:?}",
            x1.dims(),
            x2.dims(),
            x3.dims()
        )));
    }
    if (w.height, w.width) != (x1.height, x1.width) {
        return Err(Error::DimMismatch(format!(
            "weight maps are {}x{}, inputs are {}x{}",
            w.height, w.width, x1.height, x1.width
        )));
    }
    if !w.is_normalized(1e-9) {
        return Err(Error::InvalidConfig(
            "fusion weights are not normalized".into(),
        ));
    }
    let n = x1.height * x1.width;
    let [a, b, g] = &w.maps;
    let data = (0..x1.data.len())
        .map(|i| {
            let s = i % n;
            a[s] * x1.data[i] + b[s] * x2.data[i] + g[s] * x3.data[i]
        })
        .collect();
    Ok(x1.with_data(data))
}
