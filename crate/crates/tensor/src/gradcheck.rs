//! Central finite-difference gradient checking in double precision.

use crate::graph::Ops;
use crate::{Result, Tape, Tensor, Var};

/// Worst disagreement found by [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error of one entry. Entries far below the tensor's largest
/// gradient are judged against `floor` instead of their own magnitude.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Relative floor as a fraction of the largest analytic gradient.
pub const FLOOR_FRACTION: f64 = 1e-3;

/// What the relative floor is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Floor {
    /// The largest gradient of the same input tensor.
    PerTensor,
    /// The largest gradient over all inputs. Suits whole networks, where
    /// some layers only ever see gradients far below finite-difference
    /// resolution.
    Global,
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.get(out).data()[0])
}

/// Compares backward against central differences with step `eps` for the
/// selected `(input, element)` pairs, or every element when `only` is `None`.
pub fn check_gradients<F>(
    inputs: &[Tensor<f64>],
    eps: f64,
    only: Option<&[(usize, usize)]>,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    check_gradients_with(inputs, eps, only, Floor::PerTensor, f)
}

/// [`check_gradients`] with an explicit floor policy.
pub fn check_gradients_with<F>(
    inputs: &[Tensor<f64>],
    eps: f64,
    only: Option<&[(usize, usize)]>,
    floor: Floor,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect();
    let mut floors: Vec<f64> = analytic
        .iter()
        .map(|g| g.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) * FLOOR_FRACTION)
        .collect();
    if floor == Floor::Global {
        let top = floors.iter().copied().fold(0.0, f64::max);
        floors.iter_mut().for_each(|f| *f = top);
    }

    let all: Vec<(usize, usize)>;
    let coords = match only {
        Some(c) => c,
        None => {
            all = inputs
                .iter()
                .enumerate()
                .flat_map(|(i, t)| (0..t.len()).map(move |e| (i, e)))
                .collect();
            &all
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = inputs.to_vec();
    for &(i, e) in coords {
        let orig = probe[i].data()[e];
        probe[i].data_mut()[e] = orig + eps;
        let up = eval(&f, &probe)?;
        probe[i].data_mut()[e] = orig - eps;
        let down = eval(&f, &probe)?;
        probe[i].data_mut()[e] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i].data()[e];
        let err = relative_error(a, numeric, floors[i]);
        report.checked += 1;
        if err > report.max_rel_error || report.checked == 1 {
            report.max_rel_error = err;
            report.worst = (i, e);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
