use super::{NumericsError, Tape, Var};

/// Parameter handles of one LSTM cell.
///
/// Gate rows are stacked as input, forget, candidate, output. Each gate has
/// both an input-to-hidden and a hidden-to-hidden bias.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_ih: Var,
    pub b_ih: Var,
    pub w_hh: Var,
    pub b_hh: Var,
}

/// Number of scalars in a double-bias LSTM cell.
pub fn lstm_param_count(input: usize, hidden: usize) -> usize {
    4 * (input * hidden + hidden + hidden * hidden + hidden)
}

/// One LSTM step; returns `(h, c)`.
pub fn lstm_step(
    tape: &mut Tape<'_>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: LstmVars,
) -> Result<(Var, Var), NumericsError> {
    let hidden = tape.value(h_prev).len();
    if tape.value(c_prev).len() != hidden || tape.shape(p.w_hh) != [4 * hidden, hidden] {
        return Err(NumericsError::ShapeMismatch {
            op: "lstm_step",
            expected: vec![4 * hidden, hidden],
            got: tape.shape(p.w_hh).to_vec(),
        });
    }
    let from_input = tape.affine(x, p.w_ih, Some(p.b_ih))?;
    let from_hidden = tape.affine(h_prev, p.w_hh, Some(p.b_hh))?;
    let gates = tape.add(from_input, from_hidden)?;

    let i = tape.slice(gates, 0, hidden)?;
    let i = tape.sigmoid(i)?;
    let f = tape.slice(gates, hidden, hidden)?;
    let f = tape.sigmoid(f)?;
    let g = tape.slice(gates, 2 * hidden, hidden)?;
    let g = tape.tanh(g)?;
    let o = tape.slice(gates, 3 * hidden, hidden)?;
    let o = tape.sigmoid(o)?;

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c)?;
    let h = tape.mul(o, c_act)?;
    Ok((h, c))
}
