use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamSet, Tensor, Var};

/// Gate parameters of one GRU direction.
///
/// Input projections are `d_in×d_hid`, recurrent ones `d_hid×d_hid`, and
/// vectors multiply from the left (`x·W`).
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub d_in: usize,
    pub d_hid: usize,
}

impl GruCell {
    /// Weights uniform in `±1/√d_hid`, biases zero.
    pub fn new<T: Scalar, R: Rng>(
        params: &mut ParamSet<T>,
        prefix: &str,
        d_in: usize,
        d_hid: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d_in == 0 || d_hid == 0 {
            return Err(Error::Config(format!(
                "{prefix}: GRU dimensions must be positive"
            )));
        }
        let bound = 1.0 / (d_hid as f64).sqrt();
        let mut w = |name: &str, rows: usize| {
            params.add(
                format!("{prefix}.{name}"),
                Tensor::uniform(&[rows, d_hid], bound, rng),
            )
        };
        let (w_z, w_r, w_h) = (w("W_z", d_in)?, w("W_r", d_in)?, w("W_h", d_in)?);
        let (u_z, u_r, u_h) = (w("U_z", d_hid)?, w("U_r", d_hid)?, w("U_h", d_hid)?);
        let mut b = |name: &str| params.add(format!("{prefix}.{name}"), Tensor::zeros(&[d_hid]));
        let (b_z, b_r, b_h) = (b("b_z")?, b("b_r")?, b("b_h")?);
        Ok(GruCell {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
            d_in,
            d_hid,
        })
    }

    /// One recurrence step on vectors `x` (`d_in`) and `h_prev` (`d_hid`):
    ///
    /// ```text
    /// z = σ(x·W_z + h·U_z + b_z)
    /// r = σ(x·W_r + h·U_r + b_r)
    /// ĥ = tanh(x·W_h + (r⊙h)·U_h + b_h)
    /// h' = (1−z)⊙h + z⊙ĥ
    /// ```
    pub fn step<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, h_prev: Var) -> Result<Var> {
        if g.shape(x) != [self.d_in] || g.shape(h_prev) != [self.d_hid] {
            return Err(Error::dim(
                "gru_cell_step",
                format!(
                    "x {:?} / h {:?} do not fit a {}→{} cell",
                    g.shape(x),
                    g.shape(h_prev),
                    self.d_in,
                    self.d_hid
                ),
            ));
        }
        let z = self.gate(g, x, h_prev, self.w_z, self.u_z, self.b_z)?;
        let z = g.sigmoid(z);
        let r = self.gate(g, x, h_prev, self.w_r, self.u_r, self.b_r)?;
        let r = g.sigmoid(r);
        let rh = g.mul(r, h_prev)?;
        let cand = self.gate(g, x, rh, self.w_h, self.u_h, self.b_h)?;
        let cand = g.tanh(cand);
        let keep = g.one_minus(z);
        let old = g.mul(keep, h_prev)?;
        let new = g.mul(z, cand)?;
        g.add(old, new)
    }

    fn gate<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        h: Var,
        w: ParamId,
        u: ParamId,
        b: ParamId,
    ) -> Result<Var> {
        let (w, u, b) = (g.param(w), g.param(u), g.param(b));
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        g.add(s, b)
    }
}

/// Two independent GRU cells run in opposite directions over one sequence.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

impl BiGru {
    pub fn new<T: Scalar, R: Rng>(
        params: &mut ParamSet<T>,
        prefix: &str,
        d_in: usize,
        d_hid: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fwd = GruCell::new(params, &format!("{prefix}.fwd"), d_in, d_hid, rng)?;
        let bwd = GruCell::new(params, &format!("{prefix}.bwd"), d_in, d_hid, rng)?;
        Ok(BiGru { fwd, bwd })
    }

    pub fn d_hid(&self) -> usize {
        self.fwd.d_hid
    }

    /// Runs both directions over the first `valid` rows of `inputs`
    /// (`L×d_in`) from zero initial states. Returns `(fwd, bwd)`, each
    /// `L×d_hid`, with zero rows past `valid`.
    pub fn run<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        inputs: Var,
        valid: usize,
    ) -> Result<(Var, Var)> {
        let shape = g.shape(inputs).to_vec();
        let [len, d_in] = shape[..] else {
            return Err(Error::dim(
                "bigru_run",
                format!("inputs must be 2-D, got {shape:?}"),
            ));
        };
        if valid == 0 {
            return Err(Error::EmptySequence("bigru_run"));
        }
        if valid > len {
            return Err(Error::InvalidMask(format!(
                "valid length {valid} exceeds {len} rows"
            )));
        }
        if d_in != self.fwd.d_in {
            return Err(Error::dim(
                "bigru_run",
                format!("input width {d_in}, cell expects {}", self.fwd.d_in),
            ));
        }
        let d_hid = self.d_hid();
        let xs: Vec<Var> = (0..valid)
            .map(|k| g.row(inputs, k))
            .collect::<Result<_>>()?;
        let h0 = g.constant(&[d_hid], vec![T::zero(); d_hid])?;

        let mut fwd = Vec::with_capacity(len);
        let mut h = h0;
        for &x in &xs {
            h = self.fwd.step(g, x, h)?;
            fwd.push(h);
        }
        let mut bwd = vec![h0; valid];
        let mut h = h0;
        for k in (0..valid).rev() {
            h = self.bwd.step(g, xs[k], h)?;
            bwd[k] = h;
        }
        fwd.resize(len, h0);
        bwd.resize(len, h0);
        Ok((g.stack(&fwd)?, g.stack(&bwd)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn zero_cell(ps: &mut ParamSet<f64>, d: usize) -> GruCell {
        let c = GruCell::new(ps, "c", d, d, &mut stream(0, Stream::Init)).unwrap();
        for id in ps.ids().collect::<Vec<_>>() {
            ps.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        c
    }

    #[test]
    fn zero_params_halve_the_state() {
        let mut ps = ParamSet::new();
        let cell = zero_cell(&mut ps, 3);
        let mut g = Graph::new(&ps);
        let x = g.constant(&[3], vec![0.7, -0.1, 2.0]).unwrap();
        let h = g.constant(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let out = cell.step(&mut g, x, h).unwrap();
        assert_eq!(g.value(out), &[0.5, -1.0, 0.25]);
        let h0 = g.constant(&[3], vec![0.0; 3]).unwrap();
        let out = cell.step(&mut g, x, h0).unwrap();
        assert_eq!(g.value(out), &[0.0; 3]);
    }

    #[test]
    fn step_rejects_wrong_shapes() {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "c", 2, 3, &mut stream(0, Stream::Init)).unwrap();
        let mut g = Graph::new(&ps);
        let x = g.constant(&[3], vec![0.0; 3]).unwrap();
        let h = g.constant(&[3], vec![0.0; 3]).unwrap();
        assert!(matches!(
            cell.step(&mut g, x, h),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn init_ranges() {
        let mut ps = ParamSet::<f64>::new();
        let cell = GruCell::new(&mut ps, "c", 5, 4, &mut stream(9, Stream::Init)).unwrap();
        assert!(ps.get(cell.w_z).data().iter().all(|x| x.abs() <= 0.5));
        assert!(ps.get(cell.b_h).data().iter().all(|&x| x == 0.0));
        assert_eq!(ps.get(cell.u_r).shape(), &[4, 4]);
        assert_eq!(ps.get(cell.w_r).shape(), &[5, 4]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut ps = ParamSet::new();
        let bi = BiGru::new(&mut ps, "b", 2, 2, &mut stream(0, Stream::Init)).unwrap();
        let mut g = Graph::new(&ps);
        let x = g.constant(&[1, 2], vec![0.0; 2]).unwrap();
        assert!(matches!(bi.run(&mut g, x, 0), Err(Error::EmptySequence(_))));
    }
}
