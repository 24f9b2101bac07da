//! Layer-normalized LSTM cell with exact backward-through-time.
//!
//! Each of the four gates applies layer normalization to the summed
//! pre-activation `W_xe·e + W_xh·h_prev` before its nonlinearity. The gain
//! and shift vectors of those four normalizations are the only parameters
//! that differ between generation domains; there are no separate additive
//! gate biases (the LN shift plays that role).

use crate::error::{DlnError, Result};
use crate::tensor::{matvec, matvec_acc, matvec_t_acc, outer_acc, Scalar, Tensor};

/// Gate order used everywhere: input, forget, output, cell candidate.
pub const GATE_KEYS: [&str; 4] = ["i", "f", "o", "u"];
pub const NUM_GATES: usize = 4;

/// Borrowed per-gate weight matrices: `ie[g]` maps the input vector,
/// `ih[g]` the previous hidden state. All four gates share dimensions.
#[derive(Clone, Copy)]
pub struct LstmWeightsView<'a, T: Scalar> {
    pub ie: [&'a [T]; NUM_GATES],
    pub ih: [&'a [T]; NUM_GATES],
    pub input_dim: usize,
    pub hidden: usize,
}

/// Borrowed per-gate layer-norm gain/shift vectors, length `hidden` each.
#[derive(Clone, Copy)]
pub struct LnParamsView<'a, T: Scalar> {
    pub gain: [&'a [T]; NUM_GATES],
    pub shift: [&'a [T]; NUM_GATES],
}

/// Owned gradient buffers mirroring [`LstmWeightsView`] + [`LnParamsView`].
#[derive(Debug, Clone)]
pub struct LstmGrads<T: Scalar> {
    pub d_ie: [Vec<T>; NUM_GATES],
    pub d_ih: [Vec<T>; NUM_GATES],
    pub d_gain: [Vec<T>; NUM_GATES],
    pub d_shift: [Vec<T>; NUM_GATES],
    pub d_inputs: Vec<Vec<T>>,
    pub d_h0: Vec<T>,
    pub d_c0: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState<T: Scalar> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> CellState<T> {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            h: vec![T::zero(); hidden],
            c: vec![T::zero(); hidden],
        }
    }
}

/// â = g ⊙ (a − μ)/(σ + eps) + b with population mean/standard deviation.
pub fn layer_norm<T: Scalar>(
    a: &Tensor<T>,
    gain: &Tensor<T>,
    shift: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    if a.numel() == 0 {
        return Err(DlnError::Argument("layer_norm input must be non-empty".into()));
    }
    if gain.numel() != a.numel() || shift.numel() != a.numel() {
        return Err(DlnError::Shape {
            op: "layer_norm",
            lhs: a.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    if eps <= 0.0 {
        return Err(DlnError::Argument(format!("eps must be positive, got {eps}")));
    }
    let mut out = vec![T::zero(); a.numel()];
    let mut cache = LnCache::empty(a.numel());
    layer_norm_into(
        a.values(),
        gain.values(),
        shift.values(),
        T::from_f64(eps),
        &mut out,
        &mut cache,
    );
    Tensor::new(a.shape().to_vec(), out)
}

/// Normalization intermediates kept for the backward pass.
#[derive(Debug, Clone)]
struct LnCache<T: Scalar> {
    /// (a − μ)/(σ + eps)
    normalized: Vec<T>,
    /// σ + eps
    denom: T,
    /// population standard deviation σ
    sigma: T,
}

impl<T: Scalar> LnCache<T> {
    fn empty(n: usize) -> Self {
        LnCache {
            normalized: vec![T::zero(); n],
            denom: T::zero(),
            sigma: T::zero(),
        }
    }
}

fn layer_norm_into<T: Scalar>(
    a: &[T],
    gain: &[T],
    shift: &[T],
    eps: T,
    out: &mut [T],
    cache: &mut LnCache<T>,
) {
    let n = a.len();
    let count = T::from_f64(n as f64);
    let mean = a.iter().fold(T::zero(), |s, &v| s + v) / count;
    let var = a
        .iter()
        .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
        / count;
    let sigma = var.sqrt();
    let denom = sigma + eps;
    for i in 0..n {
        let norm = (a[i] - mean) / denom;
        cache.normalized[i] = norm;
        out[i] = gain[i] * norm + shift[i];
    }
    cache.denom = denom;
    cache.sigma = sigma;
}

/// Backward through one layer-norm application.
///
/// With n = (a − μ)/s, s = σ + eps:
///   dg = dâ ⊙ n, db = dâ, dn = dâ ⊙ g,
///   da = (dn − mean(dn))/s − n ⊙ mean(dn ⊙ n)/σ.
/// At σ = 0 the input is constant, n = 0 and the σ-path contribution is
/// taken as zero (subgradient of the cusp).
fn layer_norm_backward_into<T: Scalar>(
    cache: &LnCache<T>,
    gain: &[T],
    d_out: &[T],
    d_gain: &mut [T],
    d_shift: &mut [T],
    d_a: &mut [T],
) {
    let n = d_out.len();
    let count = T::from_f64(n as f64);
    let mut dn_sum = T::zero();
    let mut dn_n_sum = T::zero();
    for i in 0..n {
        let dn = d_out[i] * gain[i];
        d_gain[i] = d_gain[i] + d_out[i] * cache.normalized[i];
        d_shift[i] = d_shift[i] + d_out[i];
        dn_sum = dn_sum + dn;
        dn_n_sum = dn_n_sum + dn * cache.normalized[i];
    }
    let dn_mean = dn_sum / count;
    let sigma_term = if cache.sigma > T::zero() {
        dn_n_sum / (count * cache.sigma)
    } else {
        T::zero()
    };
    for i in 0..n {
        let dn = d_out[i] * gain[i];
        d_a[i] = (dn - dn_mean) / cache.denom - cache.normalized[i] * sigma_term;
    }
}

/// Activations cached by one forward step.
#[derive(Debug, Clone)]
pub struct StepCache<T: Scalar> {
    input: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    ln: [LnCache<T>; NUM_GATES],
    /// Post-nonlinearity gate values: sigmoid for i/f/o, tanh for u.
    act: [Vec<T>; NUM_GATES],
    c_tanh: Vec<T>,
    pub h: Vec<T>,
}

/// One LN-LSTM step. For each gate the summed pre-activation is layer
/// normalized with that gate's (g, b) before the nonlinearity, then
/// c = f⊙c_prev + i⊙u and h = o⊙tanh(c).
pub fn lnlstm_step<T: Scalar>(
    input: &[T],
    state: &CellState<T>,
    weights: &LstmWeightsView<'_, T>,
    ln: &LnParamsView<'_, T>,
    eps: f64,
) -> Result<CellState<T>> {
    let (state, _) = lnlstm_step_cached(input, state, weights, ln, eps)?;
    Ok(state)
}

pub fn lnlstm_step_cached<T: Scalar>(
    input: &[T],
    state: &CellState<T>,
    weights: &LstmWeightsView<'_, T>,
    ln: &LnParamsView<'_, T>,
    eps: f64,
) -> Result<(CellState<T>, StepCache<T>)> {
    let hidden = weights.hidden;
    if input.len() != weights.input_dim {
        return Err(DlnError::Shape {
            op: "lnlstm_step input",
            lhs: vec![weights.input_dim],
            rhs: vec![input.len()],
        });
    }
    if state.h.len() != hidden || state.c.len() != hidden {
        return Err(DlnError::Shape {
            op: "lnlstm_step state",
            lhs: vec![hidden],
            rhs: vec![state.h.len(), state.c.len()],
        });
    }
    for g in 0..NUM_GATES {
        if weights.ie[g].len() != hidden * weights.input_dim
            || weights.ih[g].len() != hidden * hidden
            || ln.gain[g].len() != hidden
            || ln.shift[g].len() != hidden
        {
            return Err(DlnError::Shape {
                op: "lnlstm_step weights",
                lhs: vec![hidden, weights.input_dim],
                rhs: vec![weights.ie[g].len(), weights.ih[g].len()],
            });
        }
    }

    let eps_t = T::from_f64(eps);
    let mut act: [Vec<T>; NUM_GATES] = std::array::from_fn(|_| vec![T::zero(); hidden]);
    let mut caches: [LnCache<T>; NUM_GATES] = std::array::from_fn(|_| LnCache::empty(hidden));
    let mut pre = vec![T::zero(); hidden];
    let mut normed = vec![T::zero(); hidden];
    for g in 0..NUM_GATES {
        matvec(weights.ie[g], hidden, weights.input_dim, input, &mut pre);
        matvec_acc(weights.ih[g], hidden, hidden, &state.h, &mut pre);
        layer_norm_into(&pre, ln.gain[g], ln.shift[g], eps_t, &mut normed, &mut caches[g]);
        let one = T::one();
        if g == 3 {
            for i in 0..hidden {
                act[g][i] = normed[i].tanh();
            }
        } else {
            for i in 0..hidden {
                act[g][i] = one / (one + (-normed[i]).exp());
            }
        }
    }

    let mut c = vec![T::zero(); hidden];
    let mut c_tanh = vec![T::zero(); hidden];
    let mut h = vec![T::zero(); hidden];
    for i in 0..hidden {
        c[i] = act[1][i] * state.c[i] + act[0][i] * act[3][i];
        c_tanh[i] = c[i].tanh();
        h[i] = act[2][i] * c_tanh[i];
    }

    let next = CellState {
        h: h.clone(),
        c,
    };
    let cache = StepCache {
        input: input.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        ln: caches,
        act,
        c_tanh,
        h,
    };
    Ok((next, cache))
}

/// Forward trajectory over a full input sequence.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    pub steps: Vec<StepCache<T>>,
    pub initial: CellState<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Hidden state produced by step `k` (0-based).
    pub fn hidden(&self, k: usize) -> &[T] {
        &self.steps[k].h
    }
}

pub fn run_sequence<T: Scalar>(
    inputs: &[Vec<T>],
    initial: &CellState<T>,
    weights: &LstmWeightsView<'_, T>,
    ln: &LnParamsView<'_, T>,
    eps: f64,
) -> Result<Trajectory<T>> {
    let mut steps = Vec::with_capacity(inputs.len());
    let mut state = initial.clone();
    for input in inputs {
        let (next, cache) = lnlstm_step_cached(input, &state, weights, ln, eps)?;
        steps.push(cache);
        state = next;
    }
    Ok(Trajectory {
        steps,
        initial: initial.clone(),
    })
}

/// Exact reverse pass over a cached trajectory.
///
/// `grad_h` holds the upstream gradient w.r.t. each step's output hidden
/// state (same length as the trajectory); `grad_c_final` the gradient
/// w.r.t. the final cell state.
pub fn lnlstm_backward<T: Scalar>(
    traj: &Trajectory<T>,
    weights: &LstmWeightsView<'_, T>,
    ln: &LnParamsView<'_, T>,
    grad_h: &[Vec<T>],
    grad_c_final: &[T],
) -> Result<LstmGrads<T>> {
    let hidden = weights.hidden;
    let input_dim = weights.input_dim;
    if grad_h.len() != traj.len() {
        return Err(DlnError::State(format!(
            "trajectory has {} steps but {} hidden gradients were supplied",
            traj.len(),
            grad_h.len()
        )));
    }
    if grad_c_final.len() != hidden {
        return Err(DlnError::Shape {
            op: "lnlstm_backward grad_c_final",
            lhs: vec![hidden],
            rhs: vec![grad_c_final.len()],
        });
    }

    let mut grads = LstmGrads {
        d_ie: std::array::from_fn(|_| vec![T::zero(); hidden * input_dim]),
        d_ih: std::array::from_fn(|_| vec![T::zero(); hidden * hidden]),
        d_gain: std::array::from_fn(|_| vec![T::zero(); hidden]),
        d_shift: std::array::from_fn(|_| vec![T::zero(); hidden]),
        d_inputs: vec![vec![T::zero(); input_dim]; traj.len()],
        d_h0: vec![T::zero(); hidden],
        d_c0: vec![T::zero(); hidden],
    };

    let one = T::one();
    let mut dh_next = vec![T::zero(); hidden];
    let mut dc_next = grad_c_final.to_vec();
    let mut d_act: [Vec<T>; NUM_GATES] = std::array::from_fn(|_| vec![T::zero(); hidden]);
    let mut d_normed = vec![T::zero(); hidden];
    let mut d_pre = vec![T::zero(); hidden];

    for k in (0..traj.len()).rev() {
        let step = &traj.steps[k];
        // total upstream on h_k: external + recurrent from step k+1
        let mut dh: Vec<T> = grad_h[k].clone();
        for i in 0..hidden {
            dh[i] = dh[i] + dh_next[i];
        }
        let mut dc = dc_next.clone();

        let (gi, gf, go, gu) = (&step.act[0], &step.act[1], &step.act[2], &step.act[3]);
        for i in 0..hidden {
            // h = o ⊙ tanh(c)
            let dt = dh[i] * go[i];
            d_act[2][i] = dh[i] * step.c_tanh[i];
            dc[i] = dc[i] + dt * (one - step.c_tanh[i] * step.c_tanh[i]);
            // c = f ⊙ c_prev + i ⊙ u
            d_act[1][i] = dc[i] * step.c_prev[i];
            d_act[0][i] = dc[i] * gu[i];
            d_act[3][i] = dc[i] * gi[i];
            dc_next[i] = dc[i] * gf[i];
        }

        for i in 0..hidden {
            dh_next[i] = T::zero();
        }
        for g in 0..NUM_GATES {
            let act = &step.act[g];
            if g == 3 {
                for i in 0..hidden {
                    d_normed[i] = d_act[g][i] * (one - act[i] * act[i]);
                }
            } else {
                for i in 0..hidden {
                    d_normed[i] = d_act[g][i] * act[i] * (one - act[i]);
                }
            }
            layer_norm_backward_into(
                &step.ln[g],
                ln.gain[g],
                &d_normed,
                &mut grads.d_gain[g],
                &mut grads.d_shift[g],
                &mut d_pre,
            );
            outer_acc(&d_pre, &step.input, &mut grads.d_ie[g]);
            outer_acc(&d_pre, &step.h_prev, &mut grads.d_ih[g]);
            matvec_t_acc(weights.ie[g], hidden, input_dim, &d_pre, &mut grads.d_inputs[k]);
            matvec_t_acc(weights.ih[g], hidden, hidden, &d_pre, &mut dh_next);
        }
    }
    grads.d_h0 = dh_next;
    grads.d_c0 = dc_next;
    Ok(grads)
}
