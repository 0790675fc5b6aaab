//! Elementwise operations and the activation family.

use crate::error::{arg_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// Activation kinds. Swish carries its beta scalar; beta = 1 makes it
/// numerically identical to SiLU, which is kept as a separate kind for the
/// activation ablations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActKind {
    Gelu,
    Swish(f64),
    Tanh,
    Relu,
    Silu,
    Sigmoid,
    /// Pass-through, used by ablation rows that strip a nonlinearity.
    Identity,
}

impl ActKind {
    pub fn parse(s: &str) -> Result<ActKind> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "gelu" => ActKind::Gelu,
            "swish" => ActKind::Swish(1.0),
            "tanh" => ActKind::Tanh,
            "relu" => ActKind::Relu,
            "silu" => ActKind::Silu,
            "sigmoid" => ActKind::Sigmoid,
            "identity" | "none" => ActKind::Identity,
            _ => return Err(arg_err!("unknown activation kind '{s}'")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActKind::Gelu => "gelu",
            ActKind::Swish(_) => "swish",
            ActKind::Tanh => "tanh",
            ActKind::Relu => "relu",
            ActKind::Silu => "silu",
            ActKind::Sigmoid => "sigmoid",
            ActKind::Identity => "identity",
        }
    }
}

fn sigmoid<E: Elem>(x: E) -> E {
    E::one() / (E::one() + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn act_value<E: Elem>(kind: ActKind, x: E) -> E {
    match kind {
        ActKind::Gelu => {
            let c = E::from_f64(GELU_C);
            let a = E::from_f64(GELU_A);
            let half = E::from_f64(0.5);
            let u = c * (x + a * x * x * x);
            half * x * (E::one() + u.tanh())
        }
        ActKind::Swish(beta) => x * sigmoid(E::from_f64(beta) * x),
        ActKind::Tanh => {
            // tanh's codomain is the open interval (-1, 1); floating-point
            // rounding saturates to exactly +/-1 for large |x|, so clamp one
            // representable step inside the bound to keep the codomain open.
            let lim = E::one() - E::epsilon();
            x.tanh().min(lim).max(-lim)
        }
        ActKind::Relu => {
            if x > E::zero() {
                x
            } else {
                E::zero()
            }
        }
        ActKind::Silu => x * sigmoid(x),
        ActKind::Sigmoid => sigmoid(x),
        ActKind::Identity => x,
    }
}

fn act_deriv<E: Elem>(kind: ActKind, x: E) -> E {
    match kind {
        ActKind::Gelu => {
            let c = E::from_f64(GELU_C);
            let a = E::from_f64(GELU_A);
            let half = E::from_f64(0.5);
            let three = E::from_f64(3.0);
            let u = c * (x + a * x * x * x);
            let t = u.tanh();
            let du = c * (E::one() + three * a * x * x);
            half * (E::one() + t) + half * x * (E::one() - t * t) * du
        }
        ActKind::Swish(beta) => {
            let b = E::from_f64(beta);
            let s = sigmoid(b * x);
            s + x * b * s * (E::one() - s)
        }
        ActKind::Tanh => {
            let t = x.tanh();
            E::one() - t * t
        }
        ActKind::Relu => {
            if x > E::zero() {
                E::one()
            } else {
                E::zero()
            }
        }
        ActKind::Silu => {
            let s = sigmoid(x);
            s + x * s * (E::one() - s)
        }
        ActKind::Sigmoid => {
            let s = sigmoid(x);
            s * (E::one() - s)
        }
        ActKind::Identity => E::one(),
    }
}

pub fn activation<E: Elem>(kind: ActKind, x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| act_value(kind, v))
}

pub fn activation_t<E: Elem>(tape: &mut Tape<E>, kind: ActKind, x: Val) -> Val {
    let out = activation(kind, tape.value(x));
    tape.push(
        out,
        vec![x],
        Box::new(move |g, ps, _| {
            vec![g
                .zip(&ps[0].map(|v| act_deriv(kind, v)), |a, b| a * b)
                .expect("activation backward")]
        }),
    )
}

/// Elementwise (Hadamard) product.
pub fn hadamard<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    a.zip(b, |x, y| x * y)
}

pub fn hadamard_t<E: Elem>(tape: &mut Tape<E>, a: Val, b: Val) -> Result<Val> {
    let out = hadamard(tape.value(a), tape.value(b))?;
    Ok(tape.push(
        out,
        vec![a, b],
        Box::new(|g, ps, _| {
            vec![
                g.zip(ps[1], |x, y| x * y).expect("hadamard backward"),
                g.zip(ps[0], |x, y| x * y).expect("hadamard backward"),
            ]
        }),
    ))
}

pub fn add<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    a.zip(b, |x, y| x + y)
}

pub fn add_t<E: Elem>(tape: &mut Tape<E>, a: Val, b: Val) -> Result<Val> {
    let out = add(tape.value(a), tape.value(b))?;
    Ok(tape.push(
        out,
        vec![a, b],
        Box::new(|g, _, _| vec![g.clone(), g.clone()]),
    ))
}

pub fn scale<E: Elem>(x: &Tensor<E>, s: E) -> Tensor<E> {
    x.map(|v| v * s)
}

pub fn scale_t<E: Elem>(tape: &mut Tape<E>, x: Val, s: E) -> Val {
    let out = scale(tape.value(x), s);
    tape.push(
        out,
        vec![x],
        Box::new(move |g, _, _| vec![g.map(|v| v * s)]),
    )
}

/// Scalar dot product against fixed weights; handy for reducing any tensor
/// to a scalar in gradient checks.
pub fn dot<E: Elem>(x: &Tensor<E>, w: &Tensor<E>) -> Result<E> {
    Ok(hadamard(x, w)?.sum())
}

pub fn dot_t<E: Elem>(tape: &mut Tape<E>, x: Val, w: &Tensor<E>) -> Result<Val> {
    let s = dot(tape.value(x), w)?;
    let w = w.clone();
    Ok(tape.push(
        Tensor::scalar(s),
        vec![x],
        Box::new(move |g, _, _| {
            let gs = g.data()[0];
            vec![w.map(|v| v * gs)]
        }),
    ))
}
