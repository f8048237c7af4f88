use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng, Tape, Var};

/// `Z = Â·X·W + W_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvParams {
    /// d_in×d_out
    pub w: Matrix,
    /// 1×d_out
    pub b: Matrix,
}

impl GraphConvParams {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w: Matrix::zeros(d_in, d_out),
            b: Matrix::zeros(1, d_out),
        }
    }

    /// Weights uniform in `±√(6/(d_in + d_out))`, zero bias.
    pub fn xavier(d_in: usize, d_out: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        Self {
            w: Matrix::from_fn(d_in, d_out, |_, _| rng.uniform_range(-limit, limit)),
            b: Matrix::zeros(1, d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w.rows() * self.w.cols() + self.b.cols()
    }
}

fn check_conv(x: &Matrix, ops: &[Matrix], params: &GraphConvParams) -> Result<()> {
    if ops.is_empty() {
        return Err(Error::Argument(
            "graph convolution needs at least one operator".into(),
        ));
    }
    let n = x.rows();
    for op in ops {
        if op.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "operator {:?} for {n} nodes",
                op.shape()
            )));
        }
    }
    if x.cols() != params.d_in() {
        return Err(Error::Dimension(format!(
            "features have width {}, weights expect {}",
            x.cols(),
            params.d_in()
        )));
    }
    if params.b.shape() != (1, params.d_out()) {
        return Err(Error::Dimension(
            "bias width differs from weight width".into(),
        ));
    }
    Ok(())
}

/// `Â·X·W + W_b` for one normalized operator.
pub fn graph_conv(x: &Matrix, a_hat: &Matrix, params: &GraphConvParams) -> Result<Matrix> {
    aggregate_conv(x, std::slice::from_ref(a_hat), params)
}

/// Mean of [`graph_conv`] over several operators with shared parameters.
pub fn aggregate_conv(x: &Matrix, ops: &[Matrix], params: &GraphConvParams) -> Result<Matrix> {
    check_conv(x, ops, params)?;
    let mut tape = Tape::new();
    let ops: Vec<Var> = ops.iter().map(|o| tape.constant(o.clone())).collect();
    let xv = tape.constant(x.clone());
    let p = ConvVars {
        w: tape.constant(params.w.clone()),
        b: tape.constant(params.b.clone()),
    };
    let agg = propagate(&mut tape, &ops, xv);
    let out = p.apply(&mut tape, agg);
    Ok(tape.value(out).clone())
}

/// A GRU cell whose three affine maps are graph convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct GCGRUCell {
    pub r: GraphConvParams,
    pub z: GraphConvParams,
    pub c: GraphConvParams,
}

impl GCGRUCell {
    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            r: GraphConvParams::zeros(d_in + hidden, hidden),
            z: GraphConvParams::zeros(d_in + hidden, hidden),
            c: GraphConvParams::zeros(d_in + hidden, hidden),
        }
    }

    pub fn xavier(d_in: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Self {
            r: GraphConvParams::xavier(d_in + hidden, hidden, rng),
            z: GraphConvParams::xavier(d_in + hidden, hidden, rng),
            c: GraphConvParams::xavier(d_in + hidden, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.r.d_out()
    }

    pub fn input_dim(&self) -> usize {
        self.r.d_in() - self.hidden()
    }

    pub fn param_count(&self) -> usize {
        self.r.param_count() + self.z.param_count() + self.c.param_count()
    }

    pub(crate) fn blocks(&self) -> [&Matrix; 6] {
        [
            &self.r.w, &self.r.b, &self.z.w, &self.z.b, &self.c.w, &self.c.b,
        ]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.r.w,
            &mut self.r.b,
            &mut self.z.w,
            &mut self.z.b,
            &mut self.c.w,
            &mut self.c.b,
        ]
    }
}

/// One recurrent update:
///
/// ```text
/// r = σ(G_r(x ‖ h)),  z = σ(G_z(x ‖ h)),  c = tanh(G_c(x ‖ r⊙h))
/// h' = z⊙h + (1 − z)⊙c
/// ```
pub fn gcgru_step(x: &Matrix, h_prev: &Matrix, ops: &[Matrix], cell: &GCGRUCell) -> Result<Matrix> {
    let hidden = cell.hidden();
    if h_prev.shape() != (x.rows(), hidden) {
        return Err(Error::Dimension(format!(
            "hidden state {:?}, expected ({}, {hidden})",
            h_prev.shape(),
            x.rows()
        )));
    }
    check_conv(&x.hcat(h_prev), ops, &cell.r)?;
    let mut tape = Tape::new();
    let ops: Vec<Var> = ops.iter().map(|o| tape.constant(o.clone())).collect();
    let vars = CellVars::constants(&mut tape, cell);
    let xv = tape.constant(x.clone());
    let hv = tape.constant(h_prev.clone());
    let out = vars.step(&mut tape, &ops, xv, hv);
    Ok(tape.value(out).clone())
}

/// Tape handles for one graph convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvVars {
    pub w: Var,
    pub b: Var,
}

impl ConvVars {
    fn apply(self, tape: &mut Tape, aggregated: Var) -> Var {
        let xw = tape.matmul(aggregated, self.w);
        tape.add_bias(xw, self.b)
    }
}

/// `mean_k Â_k · X`; the parameter product is applied once afterwards,
/// which is the same map as averaging whole convolutions.
pub(crate) fn propagate(tape: &mut Tape, ops: &[Var], x: Var) -> Var {
    let terms: Vec<Var> = ops.iter().map(|&op| tape.matmul(op, x)).collect();
    if terms.len() == 1 {
        terms[0]
    } else {
        tape.mean(&terms)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CellVars {
    pub r: ConvVars,
    pub z: ConvVars,
    pub c: ConvVars,
}

impl CellVars {
    fn from_blocks(v: [Var; 6]) -> Self {
        Self {
            r: ConvVars { w: v[0], b: v[1] },
            z: ConvVars { w: v[2], b: v[3] },
            c: ConvVars { w: v[4], b: v[5] },
        }
    }

    pub fn params(tape: &mut Tape, cell: &GCGRUCell) -> Self {
        Self::from_blocks(cell.blocks().map(|m| tape.param(m.clone())))
    }

    pub fn constants(tape: &mut Tape, cell: &GCGRUCell) -> Self {
        Self::from_blocks(cell.blocks().map(|m| tape.constant(m.clone())))
    }

    pub fn vars(&self) -> [Var; 6] {
        [self.r.w, self.r.b, self.z.w, self.z.b, self.c.w, self.c.b]
    }

    /// The reset and update gates share `Â·[x ‖ h]`.
    pub fn step(&self, tape: &mut Tape, ops: &[Var], x: Var, h: Var) -> Var {
        let xh = tape.concat(x, h);
        let agg = propagate(tape, ops, xh);
        let r_pre = self.r.apply(tape, agg);
        let r = tape.sigmoid(r_pre);
        let z_pre = self.z.apply(tape, agg);
        let z = tape.sigmoid(z_pre);
        let rh = tape.mul(r, h);
        let xrh = tape.concat(x, rh);
        let agg_c = propagate(tape, ops, xrh);
        let c_pre = self.c.apply(tape, agg_c);
        let c = tape.tanh(c_pre);
        let keep = tape.mul(z, h);
        let one_minus_z = tape.one_minus(z);
        let fresh = tape.mul(one_minus_z, c);
        tape.add(keep, fresh)
    }
}
