//! Gated recurrent unit with the update convention
//! `h' = (1 − z) ⊙ h + z ⊙ n`, `n = tanh(W_n x + U_n (r ⊙ h) + b_n)`.

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Var};
use crate::error::Result;
use crate::rng::RandomStream;

/// Parameter ids of one GRU layer. Input weights for the (z, r, n) gates are
/// fused into one `[I × 3H]` matrix.
#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    w_x: ParamId,
    u_zr: ParamId,
    u_n: ParamId,
    bias: ParamId,
}

/// A [`GruCell`] whose parameters have been placed on a tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundGru {
    hidden: usize,
    w_x: Var,
    u_zr: Var,
    u_n: Var,
    bias: Var,
}

impl GruCell {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut RandomStream,
    ) -> Self {
        let h = hidden;
        GruCell {
            input,
            hidden,
            w_x: store.add_uniform(&format!("{name}.w_x"), &[input, 3 * h], h, rng),
            u_zr: store.add_uniform(&format!("{name}.u_zr"), &[h, 2 * h], h, rng),
            u_n: store.add_uniform(&format!("{name}.u_n"), &[h, h], h, rng),
            bias: store.add_uniform(&format!("{name}.b"), &[3 * h], h, rng),
        }
    }

    pub fn bind<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> BoundGru {
        BoundGru {
            hidden: self.hidden,
            w_x: tape.param(store, self.w_x),
            u_zr: tape.param(store, self.u_zr),
            u_n: tape.param(store, self.u_n),
            bias: tape.param(store, self.bias),
        }
    }

    pub fn ids(&self) -> [ParamId; 4] {
        [self.w_x, self.u_zr, self.u_n, self.bias]
    }
}

impl BoundGru {
    /// One step for a `[B × I]` input and `[B × H]` state.
    pub fn step<T: Real>(&self, tape: &mut Tape<T>, x: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let xw = tape.matmul(x, self.w_x)?;
        let xw = tape.add_bias(xw, self.bias)?;
        let hu = tape.matmul(h, self.u_zr)?;
        let (xz, xr, xn) = (
            tape.slice_cols(xw, 0, hd)?,
            tape.slice_cols(xw, hd, hd)?,
            tape.slice_cols(xw, 2 * hd, hd)?,
        );
        let (hz, hr) = (tape.slice_cols(hu, 0, hd)?, tape.slice_cols(hu, hd, hd)?);
        let z = tape.add(xz, hz)?;
        let z = tape.sigmoid(z);
        let r = tape.add(xr, hr)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let un = tape.matmul(rh, self.u_n)?;
        let n = tape.add(xn, un)?;
        let n = tape.tanh(n);
        let diff = tape.sub(n, h)?;
        let upd = tape.mul(z, diff)?;
        tape.add(h, upd)
    }
}
