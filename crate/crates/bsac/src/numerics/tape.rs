use super::{NumericsError, Result, LOG_STD_MAX, LOG_STD_MIN};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// [m,n] + [1,n], bias broadcast over rows.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad_needed: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Straight-line record of the forward computation. Ops execute eagerly;
/// [`Tape::backward`] replays the record in reverse to populate gradients.
/// Shape misuse inside the op set is a programming error and panics; the
/// published module operations validate their inputs and return errors.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, grad_needed: bool, op: Op) -> Var {
        debug_assert_eq!(rows * cols, data.len());
        self.nodes.push(Node { rows, cols, data, grad_needed, grad: None, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf with gradient tracking (a parameter).
    pub fn leaf(&mut self, data: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(rows * cols, data.len(), "leaf: shape/data mismatch");
        self.push(rows, cols, data, true, Op::Leaf)
    }

    /// Leaf without gradient tracking (an input or constant).
    pub fn constant(&mut self, data: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(rows * cols, data.len(), "constant: shape/data mismatch");
        self.push(rows, cols, data, false, Op::Leaf)
    }

    pub fn scalar_constant(&mut self, v: f64) -> Var {
        self.push(1, 1, vec![v], false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    // ---- op set ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        matmul_into(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n, &mut out);
        let g = self.grad_needed(a) || self.grad_needed(b);
        self.push(m, n, out, g, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.assert_same_shape("add", a, b);
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| x + y);
        let g = self.grad_needed(a) || self.grad_needed(b);
        self.push(m, n, data, g, Op::Add(a, b))
    }

    /// `a[m,n] + row[1,n]`, broadcasting the row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape(a);
        let (rm, rn) = self.shape(row);
        assert!(rm == 1 && rn == n, "add_row: [{m},{n}] + [{rm},{rn}]");
        let rowd = &self.nodes[row.0].data;
        let mut data = self.nodes[a.0].data.clone();
        for r in 0..m {
            for c in 0..n {
                data[r * n + c] += rowd[c];
            }
        }
        let g = self.grad_needed(a) || self.grad_needed(row);
        self.push(m, n, data, g, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.assert_same_shape("sub", a, b);
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| x - y);
        let g = self.grad_needed(a) || self.grad_needed(b);
        self.push(m, n, data, g, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.assert_same_shape("mul", a, b);
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| x * y);
        let g = self.grad_needed(a) || self.grad_needed(b);
        self.push(m, n, data, g, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| c * x).collect();
        let g = self.grad_needed(a);
        self.push(m, n, data, g, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|x| x + c).collect();
        let g = self.grad_needed(a);
        self.push(m, n, data, g, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Numerically stable log(1 + exp(x)).
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Elementwise minimum; on ties the gradient goes to the left operand.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.assert_same_shape("min", a, b);
        let data = zip_map(&self.nodes[a.0].data, &self.nodes[b.0].data, |x, y| x.min(y));
        let g = self.grad_needed(a) || self.grad_needed(b);
        self.push(m, n, data, g, Op::Min(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let g = self.grad_needed(a);
        self.push(1, 1, vec![s], g, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = &self.nodes[a.0].data;
        let s: f64 = d.iter().sum::<f64>() / d.len() as f64;
        let g = self.grad_needed(a);
        self.push(1, 1, vec![s], g, Op::Mean(a))
    }

    /// Sum along each row: [m,n] -> [m,1].
    pub fn row_sum(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let d = &self.nodes[a.0].data;
        let data: Vec<f64> = (0..m).map(|r| d[r * n..(r + 1) * n].iter().sum()).collect();
        let g = self.grad_needed(a);
        self.push(m, 1, data, g, Op::RowSum(a))
    }

    /// Concatenate along columns; all inputs share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: empty input");
        let (m, _) = self.shape(parts[0]);
        let n: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        for &p in parts {
            assert_eq!(self.shape(p).0, m, "concat_cols: row mismatch");
        }
        let mut data = vec![0.0; m * n];
        let mut col = 0;
        for &p in parts {
            let (_, pc) = self.shape(p);
            let pd = &self.nodes[p.0].data;
            for r in 0..m {
                data[r * n + col..r * n + col + pc].copy_from_slice(&pd[r * pc..(r + 1) * pc]);
            }
            col += pc;
        }
        let g = parts.iter().any(|&p| self.grad_needed(p));
        self.push(m, n, data, g, Op::ConcatCols(parts.to_vec()))
    }

    /// Columns [start, start+len) of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.shape(a);
        assert!(start + len <= n, "slice_cols: {start}+{len} > {n}");
        let d = &self.nodes[a.0].data;
        let mut data = vec![0.0; m * len];
        for r in 0..m {
            data[r * len..(r + 1) * len].copy_from_slice(&d[r * n + start..r * n + start + len]);
        }
        let g = self.grad_needed(a);
        self.push(m, len, data, g, Op::SliceCols(a, start, len))
    }

    /// mean + exp(log_std) * noise, with log_std clamped to the published
    /// range first. Differentiable through mean and log_std.
    pub fn gaussian_sample_reparam(&mut self, mean: Var, log_std: Var, noise: Var) -> Result<Var> {
        let ms = self.shape(mean);
        let ls = self.shape(log_std);
        let ns = self.shape(noise);
        if ms != ls || ms != ns {
            return Err(NumericsError::Dimension {
                op: "gaussian_sample_reparam",
                detail: format!("mean {ms:?}, log_std {ls:?}, noise {ns:?}"),
            });
        }
        let clamped = self.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = self.exp(clamped);
        let scaled = self.mul(std, noise);
        Ok(self.add(mean, scaled))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar output. Clears old gradients, then fills
    /// the grad slot of every grad-tracked node reachable from `out`.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        let (r, c) = self.shape(out);
        if r != 1 || c != 1 {
            return Err(NumericsError::NonScalarBackward { rows: r, cols: c });
        }
        if !self.nodes[out.0].grad_needed {
            return Err(NumericsError::Dimension {
                op: "backward",
                detail: "output does not require gradients".to_string(),
            });
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[out.0].grad = Some(vec![1.0]);

        for i in (0..=out.0).rev() {
            if !self.nodes[i].grad_needed {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {
                    // Keep leaf gradients readable after the sweep.
                    self.nodes[i].grad = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(a);
                    let (_, n) = self.shape(b);
                    if self.grad_needed(a) {
                        // dA = G @ B^T
                        let mut da = vec![0.0; m * k];
                        {
                            let bd = &self.nodes[b.0].data;
                            for r in 0..m {
                                for p in 0..k {
                                    let mut s = 0.0;
                                    for j in 0..n {
                                        s += g[r * n + j] * bd[p * n + j];
                                    }
                                    da[r * k + p] = s;
                                }
                            }
                        }
                        self.accumulate(a, &da);
                    }
                    if self.grad_needed(b) {
                        // dB = A^T @ G
                        let mut db = vec![0.0; k * n];
                        {
                            let ad = &self.nodes[a.0].data;
                            for r in 0..m {
                                for p in 0..k {
                                    let arp = ad[r * k + p];
                                    for j in 0..n {
                                        db[p * n + j] += arp * g[r * n + j];
                                    }
                                }
                            }
                        }
                        self.accumulate(b, &db);
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(a, &g);
                    self.accumulate(b, &g);
                }
                Op::AddRow(a, row) => {
                    self.accumulate(a, &g);
                    if self.grad_needed(row) {
                        let (m, n) = self.shape(a);
                        let mut dr = vec![0.0; n];
                        for r in 0..m {
                            for c in 0..n {
                                dr[c] += g[r * n + c];
                            }
                        }
                        self.accumulate(row, &dr);
                    }
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, &g);
                    if self.grad_needed(b) {
                        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                        self.accumulate(b, &neg);
                    }
                }
                Op::Mul(a, b) => {
                    if self.grad_needed(a) {
                        let da = zip_map(&g, &self.nodes[b.0].data, |gi, bi| gi * bi);
                        self.accumulate(a, &da);
                    }
                    if self.grad_needed(b) {
                        let db = zip_map(&g, &self.nodes[a.0].data, |gi, ai| gi * ai);
                        self.accumulate(b, &db);
                    }
                }
                Op::Scale(a, cfac) => {
                    let da: Vec<f64> = g.iter().map(|x| cfac * x).collect();
                    self.accumulate(a, &da);
                }
                Op::AddScalar(a) => self.accumulate(a, &g),
                Op::Tanh(a) => {
                    let da = zip_map(&g, &self.nodes[i].data, |gi, y| gi * (1.0 - y * y));
                    self.accumulate(a, &da);
                }
                Op::Relu(a) => {
                    let da =
                        zip_map(&g, &self.nodes[a.0].data, |gi, x| if x > 0.0 { gi } else { 0.0 });
                    self.accumulate(a, &da);
                }
                Op::Exp(a) => {
                    let da = zip_map(&g, &self.nodes[i].data, |gi, y| gi * y);
                    self.accumulate(a, &da);
                }
                Op::Log(a) => {
                    let da = zip_map(&g, &self.nodes[a.0].data, |gi, x| gi / x);
                    self.accumulate(a, &da);
                }
                Op::Square(a) => {
                    let da = zip_map(&g, &self.nodes[a.0].data, |gi, x| gi * 2.0 * x);
                    self.accumulate(a, &da);
                }
                Op::Softplus(a) => {
                    let da = zip_map(&g, &self.nodes[a.0].data, |gi, x| gi * sigmoid(x));
                    self.accumulate(a, &da);
                }
                Op::Clamp(a, lo, hi) => {
                    let da = zip_map(&g, &self.nodes[a.0].data, |gi, x| {
                        if x >= lo && x <= hi {
                            gi
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(a, &da);
                }
                Op::Min(a, b) => {
                    if self.grad_needed(a) {
                        let da = izip_map(&g, &self.nodes[a.0].data, &self.nodes[b.0].data, |gi, x, y| {
                            if x <= y {
                                gi
                            } else {
                                0.0
                            }
                        });
                        self.accumulate(a, &da);
                    }
                    if self.grad_needed(b) {
                        let db = izip_map(&g, &self.nodes[a.0].data, &self.nodes[b.0].data, |gi, x, y| {
                            if y < x {
                                gi
                            } else {
                                0.0
                            }
                        });
                        self.accumulate(b, &db);
                    }
                }
                Op::Sum(a) => {
                    let numel = self.nodes[a.0].data.len();
                    let da = vec![g[0]; numel];
                    self.accumulate(a, &da);
                }
                Op::Mean(a) => {
                    let numel = self.nodes[a.0].data.len();
                    let da = vec![g[0] / numel as f64; numel];
                    self.accumulate(a, &da);
                }
                Op::RowSum(a) => {
                    let (m, n) = self.shape(a);
                    let mut da = vec![0.0; m * n];
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] = g[r];
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::ConcatCols(parts) => {
                    let (m, n) = {
                        let node = &self.nodes[i];
                        (node.rows, node.cols)
                    };
                    let mut col = 0;
                    for &p in &parts {
                        let (_, pc) = self.shape(p);
                        if self.grad_needed(p) {
                            let mut dp = vec![0.0; m * pc];
                            for r in 0..m {
                                dp[r * pc..(r + 1) * pc]
                                    .copy_from_slice(&g[r * n + col..r * n + col + pc]);
                            }
                            self.accumulate(p, &dp);
                        }
                        col += pc;
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let (m, n) = self.shape(a);
                    let mut da = vec![0.0; m * n];
                    for r in 0..m {
                        da[r * n + start..r * n + start + len]
                            .copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    self.accumulate(a, &da);
                }
            }
        }
        Ok(())
    }

    fn grad_needed(&self, v: Var) -> bool {
        self.nodes[v.0].grad_needed
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        if !self.nodes[v.0].grad_needed {
            return;
        }
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => node.grad = Some(delta.to_vec()),
        }
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|&x| f(x)).collect();
        let g = self.grad_needed(a);
        self.push(m, n, data, g, op)
    }

    fn assert_same_shape(&self, op: &str, a: Var, b: Var) -> (usize, usize) {
        let sa = self.shape(a);
        let sb = self.shape(b);
        assert_eq!(sa, sb, "{op}: shape {sa:?} vs {sb:?}");
        sa
    }
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..m {
        for p in 0..k {
            let arp = a[r * k + p];
            if arp == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[r * n..(r + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += arp * bv;
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn izip_map(a: &[f64], b: &[f64], c: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
    a.iter()
        .zip(b.iter().zip(c))
        .map(|(&x, (&y, &z))| f(x, y, z))
        .collect()
}
