//! Personalized session encoder.
//!
//! Current preference `C_u` is soft attention over position-augmented item
//! vectors, general preference `O_u` is attention over the raw item vectors
//! conditioned on the user embedding, and a scalar sigmoid gate mixes them:
//! `S_u = g · C_u + (1 - g) · O_u`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

/// Encoder parameters; `d`-vectors are stored as `1 × d` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    /// `L_max × d`, row 0 is the most recent position.
    pub position: T,
    /// `d × 2d`
    pub w_c: T,
    pub w_0: T,
    pub w_1: T,
    pub v_0: T,
    pub b_0: T,
    pub w_2: T,
    pub w_3: T,
    pub v_1: T,
    pub b_1: T,
    /// `1 × 2d`
    pub w_s: T,
}

/// Which preference paths feed the session representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Paths {
    pub current: bool,
    pub general: bool,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            current: true,
            general: true,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SessionState {
    pub current: Option<Var>,
    pub current_weights: Option<Var>,
    pub general: Option<Var>,
    pub general_weights: Option<Var>,
    pub gate: Option<Var>,
    /// `S_u`, `1 × d`.
    pub session: Var,
}

/// `p'_i = W_c · [p_i || l_pos(i)]` with reversed positions: the last item
/// of the prefix uses position row 0.
pub fn position_augment(tape: &mut Tape, items: Var, position: Var, w_c: Var) -> Result<Var> {
    let l = tape.value(items).rows();
    let l_max = tape.value(position).rows();
    if l == 0 || l > l_max {
        return Err(Error::invalid(alloc::format!(
            "prefix length {l} outside 1..={l_max}"
        )));
    }
    let rev: Vec<usize> = (0..l).rev().collect();
    let pos = tape.gather(position, &rev)?;
    let cat = tape.concat(items, pos)?;
    tape.linear(cat, w_c, None)
}

/// Attention pooling `Σ softmax(v^T σ(rows·W_a^T + ctx·W_b^T + b)) · rows`.
/// Returns the pooled `1 × d` row and the `1 × l` attention weights.
fn attend(
    tape: &mut Tape,
    rows: Var,
    context: Var,
    w_rows: Var,
    w_ctx: Var,
    v: Var,
    b: Var,
) -> Result<(Var, Var)> {
    let l = tape.value(rows).rows();
    let a = tape.linear(rows, w_rows, None)?;
    let c = tape.linear(context, w_ctx, Some(b))?;
    let pre = tape.add_row(a, c)?;
    let act = tape.sigmoid(pre)?;
    let logits = tape.matmul_nt(act, v)?;
    let logits = tape.reshape(logits, 1, l)?;
    let weights = tape.softmax(logits)?;
    let pooled = tape.matmul(weights, rows)?;
    Ok((pooled, weights))
}

/// `C_u` from the augmented vectors, attending against their mean.
pub fn current_preference(tape: &mut Tape, augmented: Var, enc: &Encoder<Var>) -> Result<(Var, Var)> {
    let mean = tape.row_mean(augmented)?;
    attend(tape, augmented, mean, enc.w_0, enc.w_1, enc.v_0, enc.b_0)
}

/// `O_u` from the raw item vectors, attending against the user row `q_u`.
pub fn general_preference(tape: &mut Tape, items: Var, user: Var, enc: &Encoder<Var>) -> Result<(Var, Var)> {
    attend(tape, items, user, enc.w_2, enc.w_3, enc.v_1, enc.b_1)
}

/// `g = σ(W_s · [C || O])`, `S = g·C + (1-g)·O`. Returns `(S, g)`.
///
/// `W_s` is `1 × 2d` for a scalar gate or `d × 2d` for one gate per
/// coordinate.
pub fn fuse(tape: &mut Tape, current: Var, general: Var, w_s: Var) -> Result<(Var, Var)> {
    let cat = tape.concat(current, general)?;
    let logit = tape.linear(cat, w_s, None)?;
    let gate = tape.sigmoid(logit)?;
    let rest = tape.affine(gate, -1.0, 1.0)?;
    let (a, b) = if tape.value(gate).cols() == 1 {
        (tape.mul_col(current, gate)?, tape.mul_col(general, rest)?)
    } else {
        (tape.mul(current, gate)?, tape.mul(general, rest)?)
    };
    Ok((tape.add(a, b)?, gate))
}

/// Encodes one prefix. `items` holds the prefix's item rows (`l × d`, oldest
/// first) and `user` the `1 × d` user row.
pub fn encode_session(tape: &mut Tape, items: Var, user: Var, enc: &Encoder<Var>, paths: Paths) -> Result<SessionState> {
    let mut st = SessionState {
        current: None,
        current_weights: None,
        general: None,
        general_weights: None,
        gate: None,
        session: items,
    };
    if paths.current {
        let aug = position_augment(tape, items, enc.position, enc.w_c)?;
        let (c, w) = current_preference(tape, aug, enc)?;
        st.current = Some(c);
        st.current_weights = Some(w);
    }
    if paths.general {
        let (o, w) = general_preference(tape, items, user, enc)?;
        st.general = Some(o);
        st.general_weights = Some(w);
    }
    st.session = match (st.current, st.general) {
        (Some(c), Some(o)) => {
            let (s, g) = fuse(tape, c, o, enc.w_s)?;
            st.gate = Some(g);
            s
        }
        (Some(c), None) => c,
        (None, Some(o)) => o,
        (None, None) => return Err(Error::invalid("session encoder needs at least one preference path")),
    };
    Ok(st)
}
