//! Central finite-difference checks of the analytic gradients.
//!
//! Every check builds `loss = Σ out ⊙ r` for a fixed random projection `r`,
//! differentiates it with [`Graph::backward`] and compares against
//! `(loss(x + h) − loss(x − h)) / 2h` element by element, in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::ops::activation::Activation;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

fn projection(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn projected_loss<F>(inputs: &[Tensor<f64>], f: &F, track: bool, seed: u64) -> Result<(Graph<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| g.leaf(t.detached().with_requires_grad(track)))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    let r = Tensor::from_vec(g.shape(out).to_vec(), projection(g.value(out).len(), seed))?;
    let r = g.constant(r)?;
    let weighted = g.mul(out, r)?;
    let loss = g.sum(weighted)?;
    Ok((g, vars, loss))
}

/// Largest relative error between analytic and numeric gradients over every
/// element of every input.
pub fn max_relative_error<F>(inputs: &[Tensor<f64>], f: F, step: f64, seed: u64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (mut g, vars, loss) = projected_loss(inputs, &f, true, seed)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, loss) = projected_loss(probe, &f, false, seed)?;
        Ok(g.value(loss).data()[0])
    };
    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<f64>> = inputs.iter().map(Tensor::detached).collect();
    for (t, grad) in analytic.iter().enumerate() {
        for i in 0..inputs[t].len() {
            let orig = inputs[t].data()[i];
            probe[t].data_mut()[i] = orig + step;
            let plus = eval(&probe)?;
            probe[t].data_mut()[i] = orig - step;
            let minus = eval(&probe)?;
            probe[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grad[i], numeric));
        }
    }
    Ok(worst)
}

/// Outcome of one operator's check over many random instances.
#[derive(Clone, Debug)]
pub struct OpReport {
    pub op: &'static str,
    pub instances: usize,
    pub max_relative_error: f64,
}

type Case = (Vec<Tensor<f64>>, Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>);

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Values kept at least 0.05 away from zero so kinked ops are smooth
/// within one finite-difference step.
fn away_from_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Names of the operators covered by [`standard_suite`].
pub const OPS: &[&str] = &[
    "conv2d_3x3",
    "conv2d_1x1",
    "conv2d_stride2",
    "relu",
    "leaky_relu",
    "gelu",
    "add",
    "sub",
    "mul",
    "scale",
    "abs",
    "sum",
    "mean",
    "concat_channels",
    "pixel_unshuffle",
    "pixel_shuffle",
    "bilinear_down",
    "bilinear_up",
    "fft2d_real",
    "fft2d_imag",
    "zero_pad",
];

fn make_case(op: &str, rng: &mut ChaCha8Rng) -> Case {
    let n = rng.gen_range(1..=2);
    let c = rng.gen_range(1..=3);
    let h = rng.gen_range(2..=5);
    let w = rng.gen_range(2..=5);
    let img = [n, c, h, w];
    match op {
        "conv2d_3x3" | "conv2d_1x1" | "conv2d_stride2" => {
            let k = if op == "conv2d_1x1" { 1 } else { 3 };
            let stride = if op == "conv2d_stride2" { 2 } else { 1 };
            let oc = rng.gen_range(1..=4);
            let inputs = vec![
                random_tensor(rng, &img),
                random_tensor(rng, &[oc, c, k, k]),
                random_tensor(rng, &[oc]),
            ];
            (
                inputs,
                Box::new(move |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, k / 2)),
            )
        }
        "relu" | "leaky_relu" | "gelu" => {
            let kind: Activation = op.parse().expect("known activation");
            let x = if kind == Activation::Gelu {
                random_tensor(rng, &img)
            } else {
                away_from_kink(rng, &img)
            };
            (vec![x], Box::new(move |g, v| g.activation(v[0], kind)))
        }
        "add" | "sub" | "mul" => {
            let inputs = vec![random_tensor(rng, &img), random_tensor(rng, &img)];
            let f: Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>> = match op {
                "add" => Box::new(|g, v| g.add(v[0], v[1])),
                "sub" => Box::new(|g, v| g.sub(v[0], v[1])),
                _ => Box::new(|g, v| g.mul(v[0], v[1])),
            };
            (inputs, f)
        }
        "scale" => {
            let factor: f64 = rng.gen_range(-2.0..2.0);
            (vec![random_tensor(rng, &img)], Box::new(move |g, v| g.scale(v[0], factor)))
        }
        "abs" => (vec![away_from_kink(rng, &img)], Box::new(|g, v| g.abs(v[0]))),
        "sum" => (vec![random_tensor(rng, &img)], Box::new(|g, v| g.sum(v[0]))),
        "mean" => (vec![random_tensor(rng, &img)], Box::new(|g, v| g.mean(v[0]))),
        "concat_channels" => {
            let c2 = rng.gen_range(1..=3);
            let inputs = vec![random_tensor(rng, &img), random_tensor(rng, &[n, c2, h, w])];
            (inputs, Box::new(|g, v| g.concat_channels(v[0], v[1])))
        }
        "pixel_unshuffle" => {
            let x = random_tensor(rng, &[n, c, 2 * h, 2 * w]);
            (vec![x], Box::new(|g, v| g.pixel_unshuffle(v[0], 2)))
        }
        "pixel_shuffle" => {
            let x = random_tensor(rng, &[n, 4 * c, h, w]);
            (vec![x], Box::new(|g, v| g.pixel_shuffle(v[0], 2)))
        }
        "bilinear_down" | "bilinear_up" => {
            let (oh, ow) = if op == "bilinear_down" {
                (rng.gen_range(1..=h), rng.gen_range(1..=w))
            } else {
                (rng.gen_range(h..=2 * h + 1), rng.gen_range(w..=2 * w + 1))
            };
            (vec![random_tensor(rng, &img)], Box::new(move |g, v| g.bilinear_resize(v[0], oh, ow)))
        }
        "fft2d_real" | "fft2d_imag" => {
            // mix power-of-two and direct-sum sizes
            let fh = [2, 3, 4, 8][rng.gen_range(0..4)];
            let fw = [2, 4, 5, 8][rng.gen_range(0..4)];
            let real = op == "fft2d_real";
            (
                vec![random_tensor(rng, &[n, c, fh, fw])],
                Box::new(move |g, v| {
                    let (re, im) = g.fft2d(v[0])?;
                    Ok(if real { re } else { im })
                }),
            )
        }
        "zero_pad" => {
            let (oh, ow) = (h + rng.gen_range(0..3), w + rng.gen_range(0..3));
            (vec![random_tensor(rng, &img)], Box::new(move |g, v| g.zero_pad(v[0], oh, ow)))
        }
        other => panic!("no gradient case for `{other}`"),
    }
}

/// Runs `instances` random checks for every operator in [`OPS`].
pub fn standard_suite(instances: usize, seed: u64) -> Result<Vec<OpReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OPS.iter()
        .map(|&op| {
            let mut worst = 0.0f64;
            for i in 0..instances {
                let (inputs, f) = make_case(op, &mut rng);
                let err = max_relative_error(&inputs, f, DEFAULT_STEP, seed.wrapping_add(i as u64))?;
                worst = worst.max(err);
            }
            Ok(OpReport {
                op,
                instances,
                max_relative_error: worst,
            })
        })
        .collect()
}
