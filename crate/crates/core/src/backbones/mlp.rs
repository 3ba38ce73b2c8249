//! A two-layer perceptron applied to non-overlapping `P x P` tiles.
//!
//! Parameters live in one flat vector laid out `W1, b1, W2, b2` (row-major),
//! which is also the on-disk order of the checkpoint format.

use std::io::{Read, Write};

use rand::Rng;

use super::pad::extend_plane;
use super::{Backbone, Descriptor, EquivarianceClass};
use crate::error::{Error, Result};
use crate::instance::Instance;

const MAGIC: &[u8; 4] = b"NEPM";
const VERSION: u32 = 1;

/// What the network output represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prediction {
    /// Output is the clean patch.
    Clean,
    /// Output is added to the input patch (skip connection).
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// No nonlinearity: the whole model is affine in its input.
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Relu => v.max(0.0),
            Self::Linear => v,
        }
    }

    fn grad(self, pre: f64) -> f64 {
        match self {
            Self::Relu if pre <= 0.0 => 0.0,
            _ => 1.0,
        }
    }
}

/// Four-lane dot product; the split accumulators let the compiler
/// vectorize.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchMlpParams {
    patch: usize,
    hidden: usize,
    prediction: Prediction,
    activation: Activation,
    theta: Vec<f64>,
}

/// Gradient with the same flat layout as [`PatchMlpParams`].
/// Hidden pre-activations and activations of every tile of one forward
/// pass.
#[derive(Clone, Debug)]
pub struct MlpTape {
    pre: Vec<f64>,
    act: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads(pub Vec<f64>);

impl MlpGrads {
    pub fn zeros_like(p: &PatchMlpParams) -> Self {
        Self(vec![0.0; p.theta.len()])
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|g| *g *= k);
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a += b);
    }
}

impl PatchMlpParams {
    fn count(patch: usize, hidden: usize) -> usize {
        let n = patch * patch;
        2 * n * hidden + hidden + n
    }

    pub fn zeros(patch: usize, hidden: usize, prediction: Prediction, activation: Activation) -> Result<Self> {
        if patch == 0 || hidden == 0 {
            return Err(Error::InvalidParameter("patch size and hidden width must be positive".into()));
        }
        Ok(Self { patch, hidden, prediction, activation, theta: vec![0.0; Self::count(patch, hidden)] })
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases,
    /// then each first-layer filter is shifted to zero sum so that the
    /// initial hidden layer ignores the tile mean.
    pub fn init<R: Rng + ?Sized>(
        patch: usize,
        hidden: usize,
        prediction: Prediction,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(patch, hidden, prediction, activation)?;
        let n = patch * patch;
        let (b_in, b_hid) = (1.0 / (n as f64).sqrt(), 1.0 / (hidden as f64).sqrt());
        let split = n * hidden + hidden;
        for (k, t) in p.theta.iter_mut().enumerate() {
            let bound = if k < split { b_in } else { b_hid };
            *t = rng.random_range(-bound..bound);
        }
        for row in p.theta[..n * hidden].chunks_exact_mut(n) {
            let m = row.iter().sum::<f64>() / n as f64;
            row.iter_mut().for_each(|v| *v -= m);
        }
        Ok(p)
    }

    pub fn from_flat(
        patch: usize,
        hidden: usize,
        prediction: Prediction,
        activation: Activation,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(patch, hidden, prediction, activation)?;
        if theta.len() != p.theta.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameters, got {}",
                p.theta.len(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameters".into()));
        }
        p.theta = theta;
        Ok(p)
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn prediction(&self) -> Prediction {
        self.prediction
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn offsets(&self) -> [usize; 4] {
        let n = self.patch * self.patch;
        let w1 = 0;
        let b1 = w1 + self.hidden * n;
        let w2 = b1 + self.hidden;
        let b2 = w2 + n * self.hidden;
        [w1, b1, w2, b2]
    }

    /// `(W1, b1, W2, b2)` views.
    pub fn parts(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let [w1, b1, w2, b2] = self.offsets();
        let t = &self.theta;
        (&t[w1..b1], &t[b1..w2], &t[w2..b2], &t[b2..])
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameters".into()));
        }
        Ok(())
    }

    /// Forward one flattened tile; fills `pre` and `act` with the hidden
    /// pre-activations and activations.
    fn forward_tile(&self, input: &[f64], pre: &mut [f64], act: &mut [f64], out: &mut [f64]) {
        let n = self.patch * self.patch;
        let (w1, b1, w2, b2) = self.parts();
        for (h, (p, a)) in pre.iter_mut().zip(act.iter_mut()).enumerate() {
            *p = b1[h] + dot(&w1[h * n..(h + 1) * n], input);
            *a = self.activation.apply(*p);
        }
        for (o, out_v) in out.iter_mut().enumerate() {
            let mut acc = b2[o] + dot(&w2[o * self.hidden..(o + 1) * self.hidden], act);
            if self.prediction == Prediction::Residual {
                acc += input[o];
            }
            *out_v = acc;
        }
    }

    /// Accumulate parameter gradients of one tile given `dL/d(out)`.
    fn backward_tile(&self, input: &[f64], pre: &[f64], act: &[f64], dout: &[f64], dhidden: &mut [f64], grads: &mut [f64]) {
        let n = self.patch * self.patch;
        let hd = self.hidden;
        let [ow1, ob1, ow2, ob2] = self.offsets();
        let (_, _, w2, _) = self.parts();
        dhidden.fill(0.0);
        for (o, &g) in dout.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads[ob2 + o] += g;
            let wrow = &w2[o * hd..(o + 1) * hd];
            let grow = &mut grads[ow2 + o * hd..ow2 + (o + 1) * hd];
            for ((gw, dh), (&a, &w)) in grow.iter_mut().zip(dhidden.iter_mut()).zip(act.iter().zip(wrow)) {
                *gw += g * a;
                *dh += g * w;
            }
        }
        for h in 0..hd {
            let dp = dhidden[h] * self.activation.grad(pre[h]);
            if dp == 0.0 {
                continue;
            }
            grads[ob1 + h] += dp;
            let grow = &mut grads[ow1 + h * n..ow1 + (h + 1) * n];
            for (gw, &x) in grow.iter_mut().zip(input) {
                *gw += dp * x;
            }
        }
    }

    /// Visit every tile of every channel as (channel, extended plane,
    /// extended width, tile origin).
    fn tiles(&self, z: &Instance) -> (usize, usize, Vec<Vec<f64>>) {
        let s = z.shape();
        let p = self.patch;
        let (eh, ew) = (s.height.div_ceil(p) * p, s.width.div_ceil(p) * p);
        let planes = (0..s.channels).map(|c| extend_plane(z.channel(c), s.height, s.width, eh, ew)).collect();
        (eh, ew, planes)
    }

    fn gather(&self, plane: &[f64], ew: usize, bi: usize, bj: usize, buf: &mut [f64]) {
        let p = self.patch;
        for u in 0..p {
            buf[u * p..(u + 1) * p].copy_from_slice(&plane[(bi + u) * ew + bj..(bi + u) * ew + bj + p]);
        }
    }

    pub fn forward(&self, z: &Instance) -> Result<Instance> {
        Ok(self.forward_taped(z)?.0)
    }

    /// Forward pass that also keeps the hidden layer of every tile for
    /// [`PatchMlpParams::backward_taped`].
    pub fn forward_taped(&self, z: &Instance) -> Result<(Instance, MlpTape)> {
        let s = z.shape();
        let p = self.patch;
        let hd = self.hidden;
        let (eh, ew, planes) = self.tiles(z);
        let n = p * p;
        let tiles = s.channels * (eh / p) * (ew / p);
        let mut tape = MlpTape { pre: vec![0.0; tiles * hd], act: vec![0.0; tiles * hd] };
        let (mut input, mut out) = (vec![0.0; n], vec![0.0; n]);
        let mut result = Vec::with_capacity(s.len());
        let mut k = 0;
        for plane in &planes {
            let mut ext_out = vec![0.0; eh * ew];
            for bi in (0..eh).step_by(p) {
                for bj in (0..ew).step_by(p) {
                    self.gather(plane, ew, bi, bj, &mut input);
                    let (pre, act) = (&mut tape.pre[k * hd..(k + 1) * hd], &mut tape.act[k * hd..(k + 1) * hd]);
                    self.forward_tile(&input, pre, act, &mut out);
                    for u in 0..p {
                        ext_out[(bi + u) * ew + bj..(bi + u) * ew + bj + p].copy_from_slice(&out[u * p..(u + 1) * p]);
                    }
                    k += 1;
                }
            }
            for i in 0..s.height {
                result.extend_from_slice(&ext_out[i * ew..i * ew + s.width]);
            }
        }
        Ok((z.with_values(result)?, tape))
    }

    /// Gradient of `<dout, forward(z)>` with respect to the parameters,
    /// accumulated into `grads`. Outputs of reflect-extended border pixels
    /// are cropped away and so receive no gradient.
    pub fn backward(&self, z: &Instance, dout: &Instance, grads: &mut MlpGrads) -> Result<()> {
        let (_, tape) = self.forward_taped(z)?;
        self.backward_taped(z, &tape, dout, grads)
    }

    /// [`PatchMlpParams::backward`] reusing the tape of a forward pass on the
    /// same `z`.
    pub fn backward_taped(&self, z: &Instance, tape: &MlpTape, dout: &Instance, grads: &mut MlpGrads) -> Result<()> {
        z.check_same_shape(dout)?;
        let s = z.shape();
        let p = self.patch;
        let n = p * p;
        let hd = self.hidden;
        let (eh, ew, planes) = self.tiles(z);
        if tape.pre.len() != s.channels * (eh / p) * (ew / p) * hd || grads.0.len() != self.theta.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("tape and gradients for {s}"),
                actual: format!("{} tape entries, {} gradients", tape.pre.len(), grads.0.len()),
            });
        }
        let (mut input, mut dtile, mut dhidden) = (vec![0.0; n], vec![0.0; n], vec![0.0; hd]);
        let mut k = 0;
        for (c, plane) in planes.iter().enumerate() {
            let dplane = dout.channel(c);
            for bi in (0..eh).step_by(p) {
                for bj in (0..ew).step_by(p) {
                    let tile = k;
                    k += 1;
                    let mut any = false;
                    for u in 0..p {
                        for v in 0..p {
                            let (i, j) = (bi + u, bj + v);
                            let g = if i < s.height && j < s.width { dplane[i * s.width + j] } else { 0.0 };
                            any |= g != 0.0;
                            dtile[u * p + v] = g;
                        }
                    }
                    if !any {
                        continue;
                    }
                    self.gather(plane, ew, bi, bj, &mut input);
                    let (pre, act) = (&tape.pre[tile * hd..(tile + 1) * hd], &tape.act[tile * hd..(tile + 1) * hd]);
                    self.backward_tile(&input, pre, act, &dtile, &mut dhidden, &mut grads.0);
                }
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let prediction = match self.prediction {
            Prediction::Clean => 0u32,
            Prediction::Residual => 1,
        };
        let activation = match self.activation {
            Activation::Relu => 0u32,
            Activation::Linear => 1,
        };
        for v in [VERSION, self.patch as u32, self.hidden as u32, prediction, activation] {
            w.write_all(&v.to_le_bytes())?;
        }
        for t in &self.theta {
            w.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let perr = |offset: usize, message: &str| Error::Parse { offset, message: message.to_string() };
        if bytes.len() < 24 {
            return Err(perr(bytes.len(), "truncated checkpoint header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(perr(0, "bad checkpoint magic"));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
        if word(0) != VERSION {
            return Err(perr(4, &format!("unsupported checkpoint version {}", word(0))));
        }
        let (patch, hidden) = (word(1) as usize, word(2) as usize);
        let prediction = match word(3) {
            0 => Prediction::Clean,
            1 => Prediction::Residual,
            _ => return Err(perr(16, "unknown prediction convention")),
        };
        let activation = match word(4) {
            0 => Activation::Relu,
            1 => Activation::Linear,
            _ => return Err(perr(20, "unknown activation")),
        };
        if patch == 0 || hidden == 0 {
            return Err(perr(8, "zero patch size or hidden width"));
        }
        let count = Self::count(patch, hidden);
        let body = &bytes[24..];
        if body.len() != count * 8 {
            return Err(perr(bytes.len(), &format!("expected {count} parameters, payload has {} bytes", body.len())));
        }
        let theta = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_flat(patch, hidden, prediction, activation, theta)
    }
}

impl Backbone for PatchMlpParams {
    fn descriptor(&self) -> Descriptor {
        let class = match (self.activation, self.theta.iter().all(|&t| t == 0.0)) {
            (_, true) if self.prediction == Prediction::Residual => EquivarianceClass::Ne,
            _ => EquivarianceClass::Unknown,
        };
        Descriptor { name: format!("patch-mlp-p{}-h{}", self.patch, self.hidden), class }
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        self.validate()?;
        self.forward(z)
    }
}

/// Alias used where the parameters act as a frozen, shareable model.
pub type PatchMlp = PatchMlpParams;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(h: usize, w: usize) -> Instance {
        Instance::new(Shape::gray(h, w), (0..h * w).map(|k| ((k * 31 % 17) as f64) / 17.0).collect()).unwrap()
    }

    #[test]
    fn zero_residual_is_identity_and_zero_clean_is_zero() {
        let y = image(9, 7);
        let r = PatchMlpParams::zeros(4, 8, Prediction::Residual, Activation::Relu).unwrap();
        assert_eq!(r.denoise(&y).unwrap(), y);
        let c = PatchMlpParams::zeros(4, 8, Prediction::Clean, Activation::Relu).unwrap();
        assert!(c.denoise(&y).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_for_ragged_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = PatchMlpParams::init(8, 16, Prediction::Residual, Activation::Relu, &mut rng).unwrap();
        for (h, w) in [(9, 13), (8, 8), (17, 10)] {
            let y = image(h, w);
            assert_eq!(p.denoise(&y).unwrap().shape(), y.shape());
        }
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let mut p = PatchMlpParams::zeros(2, 2, Prediction::Clean, Activation::Relu).unwrap();
        p.flat_mut()[0] = f64::NAN;
        assert!(p.denoise(&image(4, 4)).is_err());
        assert!(PatchMlpParams::from_flat(2, 2, Prediction::Clean, Activation::Relu, vec![f64::INFINITY; 22]).is_err());
    }

    #[test]
    fn checkpoint_header_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = PatchMlpParams::init(3, 4, Prediction::Residual, Activation::Relu, &mut rng).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"NEPM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 24 + 8 * (2 * 9 * 4 + 4 + 9));
        // W1[0][0] comes first
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), p.parts().0[0]);
        assert_eq!(PatchMlpParams::from_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn checkpoint_errors_carry_offsets() {
        let p = PatchMlpParams::zeros(2, 2, Prediction::Clean, Activation::Relu).unwrap();
        let mut bytes = p.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(PatchMlpParams::from_bytes(&bytes), Err(Error::Parse { .. })));
        let mut bad = p.to_bytes();
        bad[0] = b'X';
        assert!(matches!(PatchMlpParams::from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
    }
}
