//! Forward op constructors. Each validates shapes, evaluates eagerly, and
//! records the op for the reverse sweep.

use super::{Op, Tape, TensorError, TensorId};
use super::{mm, mm_nt};

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    fn dims2(&self, id: TensorId, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.nodes[id.0].shape.as_slice() {
            &[m, n] => Ok((m, n)),
            other => Err(TensorError::BadShape {
                op,
                expected: "rank-2 tensor",
                got: other.to_vec(),
            }),
        }
    }

    fn dims3(&self, id: TensorId, op: &'static str) -> Result<(usize, usize, usize), TensorError> {
        match self.nodes[id.0].shape.as_slice() {
            &[g, m, n] => Ok((g, m, n)),
            other => Err(TensorError::BadShape {
                op,
                expected: "rank-3 tensor",
                got: other.to_vec(),
            }),
        }
    }

    fn vec_dim(&self, id: TensorId, op: &'static str) -> Result<usize, TensorError> {
        match self.nodes[id.0].shape.as_slice() {
            &[n] => Ok(n),
            other => Err(TensorError::BadShape {
                op,
                expected: "rank-1 tensor",
                got: other.to_vec(),
            }),
        }
    }

    fn mismatch(&self, op: &'static str, a: TensorId, b: TensorId) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            lhs: self.nodes[a.0].shape.clone(),
            rhs: self.nodes[b.0].shape.clone(),
        }
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let data = mm(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(data, vec![m, n], rg, Op::MatMul { a, b }))
    }

    /// Batched matmul over the leading axis.
    pub fn bmm(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (g, m, k) = self.dims3(a, "bmm")?;
        let (g2, k2, n) = self.dims3(b, "bmm")?;
        if g != g2 || k != k2 {
            return Err(self.mismatch("bmm", a, b));
        }
        let mut data = Vec::with_capacity(g * m * n);
        for gi in 0..g {
            let av = &self.value(a)[gi * m * k..(gi + 1) * m * k];
            let bv = &self.value(b)[gi * k * n..(gi + 1) * k * n];
            data.extend_from_slice(&mm(av, bv, m, k, n));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(data, vec![g, m, n], rg, Op::Bmm { a, b }))
    }

    /// Batched matmul with the second operand transposed: [g,m,k]·[g,n,k]ᵀ.
    pub fn bmm_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (g, m, k) = self.dims3(a, "bmm_nt")?;
        let (g2, n, k2) = self.dims3(b, "bmm_nt")?;
        if g != g2 || k != k2 {
            return Err(self.mismatch("bmm_nt", a, b));
        }
        let mut data = Vec::with_capacity(g * m * n);
        for gi in 0..g {
            let av = &self.value(a)[gi * m * k..(gi + 1) * m * k];
            let bv = &self.value(b)[gi * n * k..(gi + 1) * n * k];
            data.extend_from_slice(&mm_nt(av, bv, m, k, n));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(data, vec![g, m, n], rg, Op::BmmNt { a, b }))
    }

    fn zip_elementwise(
        &mut self,
        a: TensorId,
        b: TensorId,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId, TensorError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(self.mismatch(op_name, a, b));
        }
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(data, shape, rg, op))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_elementwise(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_elementwise(a, b, "sub", |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_elementwise(a, b, "mul", |x, y| x * y, Op::Mul { a, b })
    }

    /// Add a row vector to every row of a matrix (bias broadcast).
    pub fn add_row_vec(&mut self, x: TensorId, v: TensorId) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "add_row_vec")?;
        if self.vec_dim(v, "add_row_vec")? != n {
            return Err(self.mismatch("add_row_vec", x, v));
        }
        let vv = self.value(v);
        let data = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &xv)| xv + vv[i % n])
            .collect();
        let rg = self.rg(x) || self.rg(v);
        Ok(self.push(data, vec![m, n], rg, Op::AddRowVec { x, v }))
    }

    /// Multiply every row of a matrix elementwise by a row vector.
    pub fn mul_row_vec(&mut self, x: TensorId, v: TensorId) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "mul_row_vec")?;
        if self.vec_dim(v, "mul_row_vec")? != n {
            return Err(self.mismatch("mul_row_vec", x, v));
        }
        let vv = self.value(v);
        let data = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &xv)| xv * vv[i % n])
            .collect();
        let rg = self.rg(x) || self.rg(v);
        Ok(self.push(data, vec![m, n], rg, Op::MulRowVec { x, v }))
    }

    /// Scale row i of a matrix by s[i].
    pub fn scale_rows(&mut self, x: TensorId, s: TensorId) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "scale_rows")?;
        if self.vec_dim(s, "scale_rows")? != m {
            return Err(self.mismatch("scale_rows", x, s));
        }
        let sv = self.value(s);
        let data = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &xv)| xv * sv[i / n])
            .collect();
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(data, vec![m, n], rg, Op::ScaleRows { x, s }))
    }

    /// Multiply by a constant scalar.
    pub fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId, TensorError> {
        let data = self.value(x).iter().map(|&v| v * c).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        Ok(self.push(data, shape, rg, Op::Scale { x, c }))
    }

    /// Multiply by a one-element tensor (e.g. a trainable temperature).
    pub fn mul_scalar(&mut self, x: TensorId, s: TensorId) -> Result<TensorId, TensorError> {
        if self.nodes[s.0].len() != 1 {
            return Err(TensorError::BadShape {
                op: "mul_scalar",
                expected: "one-element tensor",
                got: self.nodes[s.0].shape.clone(),
            });
        }
        let sv = self.value(s)[0];
        let data = self.value(x).iter().map(|&v| v * sv).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(data, shape, rg, Op::MulScalar { x, s }))
    }

    fn unary(
        &mut self,
        x: TensorId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<TensorId, TensorError> {
        let data = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        Ok(self.push(data, shape, rg, op))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(x, sigmoid_scalar, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(x, f64::tanh, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(x, |v| v.max(0.0), Op::Relu { x })
    }

    pub fn exp(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(x, f64::exp, Op::Exp { x })
    }

    pub fn ln(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(x, f64::ln, Op::Ln { x })
    }

    pub fn pow_const(&mut self, x: TensorId, p: f64) -> Result<TensorId, TensorError> {
        self.unary(x, |v| v.powf(p), Op::PowConst { x, p })
    }

    pub fn clamp(&mut self, x: TensorId, lo: f64, hi: f64) -> Result<TensorId, TensorError> {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "softmax_rows")?;
        let xv = self.value(x);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[i * n..(i + 1) * n];
            let mut z = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - mx).exp();
                z += *o;
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(data, vec![m, n], rg, Op::SoftmaxRows { x }))
    }

    /// Per-row layer normalization with learned scale and shift.
    pub fn layer_norm_rows(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "layer_norm_rows")?;
        if self.vec_dim(gamma, "layer_norm_rows")? != n {
            return Err(self.mismatch("layer_norm_rows", x, gamma));
        }
        if self.vec_dim(beta, "layer_norm_rows")? != n {
            return Err(self.mismatch("layer_norm_rows", x, beta));
        }
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                data[i * n + j] = gv[j] * (row[j] - mu) * inv + bv[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(data, vec![m, n], rg, Op::LayerNormRows { x, gamma, beta, eps }))
    }

    /// Cosine similarity of each row of x against v. Zero-norm rows (and a
    /// zero-norm v) produce similarity 0 rather than NaN.
    pub fn cosine_sim_rows(&mut self, x: TensorId, v: TensorId) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "cosine_sim_rows")?;
        if self.vec_dim(v, "cosine_sim_rows")? != n {
            return Err(self.mismatch("cosine_sim_rows", x, v));
        }
        let xv = self.value(x);
        let vv = self.value(v);
        let vnorm = vv.iter().map(|&a| a * a).sum::<f64>().sqrt();
        let mut data = vec![0.0; m];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let rnorm = row.iter().map(|&a| a * a).sum::<f64>().sqrt();
            if rnorm > 0.0 && vnorm > 0.0 {
                let dot: f64 = row.iter().zip(vv).map(|(a, b)| a * b).sum();
                data[i] = dot / (rnorm * vnorm);
            }
        }
        let rg = self.rg(x) || self.rg(v);
        Ok(self.push(data, vec![m], rg, Op::CosineSimRows { x, v }))
    }

    /// out[i] = x[ids[i]]. Duplicate ids are allowed; their gradients
    /// accumulate. This is both embedding lookup and row permutation.
    pub fn row_gather(&mut self, x: TensorId, ids: &[usize]) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "row_gather")?;
        let xv = self.value(x);
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            if i >= m {
                return Err(TensorError::RowOutOfBounds {
                    op: "row_gather",
                    index: i,
                    bound: m,
                });
            }
            data.extend_from_slice(&xv[i * n..(i + 1) * n]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            data,
            vec![ids.len(), n],
            rg,
            Op::RowGather {
                x,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Stack rank-2 tensors vertically (equal column counts).
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId, TensorError> {
        let (_, n) = self.dims2(parts[0], "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pm, pn) = self.dims2(p, "concat_rows")?;
            if pn != n {
                return Err(self.mismatch("concat_rows", parts[0], p));
            }
            rows += pm;
            data.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            data,
            vec![rows, n],
            rg,
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Stack rank-2 tensors side by side (equal row counts).
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId, TensorError> {
        let (m, _) = self.dims2(parts[0], "concat_cols")?;
        let mut width = 0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.dims2(p, "concat_cols")?;
            if pm != m {
                return Err(self.mismatch("concat_cols", parts[0], p));
            }
            widths.push(pn);
            width += pn;
        }
        let mut data = vec![0.0; m * width];
        let mut off = 0;
        for (&p, &pn) in parts.iter().zip(&widths) {
            let pv = self.value(p);
            for i in 0..m {
                data[i * width + off..i * width + off + pn]
                    .copy_from_slice(&pv[i * pn..(i + 1) * pn]);
            }
            off += pn;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            data,
            vec![m, width],
            rg,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Column range [from, to) of a rank-2 tensor.
    pub fn slice_cols(
        &mut self,
        x: TensorId,
        from: usize,
        to: usize,
    ) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "slice_cols")?;
        if from >= to || to > n {
            return Err(TensorError::RowOutOfBounds {
                op: "slice_cols",
                index: to,
                bound: n,
            });
        }
        let w = to - from;
        let xv = self.value(x);
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&xv[i * n + from..i * n + to]);
        }
        let rg = self.rg(x);
        Ok(self.push(data, vec![m, w], rg, Op::SliceCols { x, from, to }))
    }

    /// Same elements, new shape.
    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId, TensorError> {
        let expect: usize = shape.iter().product();
        if expect != self.nodes[x.0].len() {
            return Err(TensorError::DataLen {
                op: "reshape",
                len: self.nodes[x.0].len(),
                shape,
            });
        }
        let data = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(data, shape, rg, Op::Reshape { x }))
    }

    /// Column-wise max over each consecutive block of `group` rows,
    /// considering only rows with `keep[i] == true`. The gradient routes to
    /// the winning row; ties go to the lowest index. Errors if any block has
    /// no kept rows.
    pub fn max_over_groups(
        &mut self,
        x: TensorId,
        group: usize,
        keep: &[bool],
    ) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(x, "max_over_groups")?;
        if group == 0 || m % group != 0 || keep.len() != m {
            return Err(TensorError::BadShape {
                op: "max_over_groups",
                expected: "row count divisible by group size, keep mask of equal length",
                got: vec![m, n],
            });
        }
        let blocks = m / group;
        let xv = self.value(x);
        let mut data = vec![0.0; blocks * n];
        let mut argmax = vec![0usize; blocks * n];
        for b in 0..blocks {
            let rows: Vec<usize> = (b * group..(b + 1) * group).filter(|&r| keep[r]).collect();
            if rows.is_empty() {
                return Err(TensorError::EmptyGroup { group: b });
            }
            for j in 0..n {
                let mut best_row = rows[0];
                let mut best = xv[rows[0] * n + j];
                for &r in &rows[1..] {
                    let v = xv[r * n + j];
                    if v > best {
                        best = v;
                        best_row = r;
                    }
                }
                data[b * n + j] = best;
                argmax[b * n + j] = best_row;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            data,
            vec![blocks, n],
            rg,
            Op::MaxOverGroups { x, argmax },
        ))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        Ok(self.push(vec![s], vec![1], rg, Op::SumAll { x }))
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean_all(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let len = self.nodes[x.0].len().max(1);
        let s = self.value(x).iter().sum::<f64>() / len as f64;
        let rg = self.rg(x);
        Ok(self.push(vec![s], vec![1], rg, Op::MeanAll { x }))
    }
}
