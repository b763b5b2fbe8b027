//! Training objective: pixel L1 plus L1 between Fourier spectra.

use msprl_tensor::{Element, Graph, Tensor, TensorError, Var};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_FFT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_fft: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_fft: DEFAULT_LAMBDA_FFT,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_fft: f64) -> Result<Self> {
        if !(lambda_fft >= 0.0 && lambda_fft.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_fft must be >= 0, got {lambda_fft}")));
        }
        Ok(Self { lambda_fft })
    }
}

/// Graph handles of the three loss scalars.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub l1: Var,
    pub fft: Var,
}

/// Scalar loss values, in f64.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub l1: f64,
    pub fft: f64,
}

impl LossVars {
    pub fn values<E: Element>(&self, g: &Graph<E>) -> LossValues {
        let read = |v: Var| g.value(v).data()[0].to_f64();
        LossValues {
            total: read(self.total),
            l1: read(self.l1),
            fft: read(self.fft),
        }
    }
}

fn check_shapes<E: Element>(g: &Graph<E>, op: &'static str, y: Var, t: Var) -> Result<()> {
    if g.shape(y) != g.shape(t) {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: g.shape(y).to_vec(),
            rhs: g.shape(t).to_vec(),
        }
        .into());
    }
    Ok(())
}

/// Mean absolute error over all elements.
pub fn l1_loss<E: Element>(g: &mut Graph<E>, y: Var, target: Var) -> Result<Var> {
    check_shapes(g, "l1_loss", y, target)?;
    let d = g.sub(y, target)?;
    let a = g.abs(d)?;
    Ok(g.mean(a)?)
}

/// Mean absolute difference of the real and imaginary parts of the 2-D
/// spectra. Sides are zero-padded to the next power of two; spectra are not
/// normalized.
pub fn fft_loss<E: Element>(g: &mut Graph<E>, y: Var, target: Var) -> Result<Var> {
    check_shapes(g, "fft_loss", y, target)?;
    let shape = g.shape(y).to_vec();
    if shape.len() != 4 {
        return Err(TensorError::Rank {
            op: "fft_loss",
            expected: 4,
            shape,
        }
        .into());
    }
    let (ph, pw) = (shape[2].next_power_of_two(), shape[3].next_power_of_two());
    let (y, target) = if (ph, pw) != (shape[2], shape[3]) {
        (g.zero_pad(y, ph, pw)?, g.zero_pad(target, ph, pw)?)
    } else {
        (y, target)
    };
    let (yr, yi) = g.fft2d(y)?;
    let (tr, ti) = g.fft2d(target)?;
    let dr = g.sub(yr, tr)?;
    let di = g.sub(yi, ti)?;
    let d = g.concat_channels(dr, di)?;
    let a = g.abs(d)?;
    Ok(g.mean(a)?)
}

/// `l1 + lambda_fft · fft`.
pub fn total_loss<E: Element>(g: &mut Graph<E>, y: Var, target: Var, w: LossWeights) -> Result<LossVars> {
    let l1 = l1_loss(g, y, target)?;
    let fft = fft_loss(g, y, target)?;
    let weighted = g.scale(fft, w.lambda_fft)?;
    let total = g.add(l1, weighted)?;
    Ok(LossVars { total, l1, fft })
}

/// Evaluates the loss on plain tensors without tracking gradients.
pub fn evaluate_loss<E: Element>(y: &Tensor<E>, target: &Tensor<E>, w: LossWeights) -> Result<LossValues> {
    let mut g = Graph::new();
    let yv = g.constant(y.detached())?;
    let tv = g.constant(target.detached())?;
    let vars = total_loss(&mut g, yv, tv, w)?;
    Ok(vars.values(&g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_offset_l1() {
        let t = Tensor::<f64>::from_fn([1, 1, 4, 4], |i| i as f64 / 16.0);
        let y = Tensor::from_fn([1, 1, 4, 4], |i| i as f64 / 16.0 + 0.5);
        let v = evaluate_loss(&y, &t, LossWeights::default()).unwrap();
        assert!((v.l1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(LossWeights::new(-0.1).is_err());
        assert!(LossWeights::new(f64::NAN).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros([1, 1, 4, 4]);
        let b = Tensor::<f64>::zeros([1, 1, 4, 8]);
        assert!(evaluate_loss(&a, &b, LossWeights::default()).is_err());
    }
}
