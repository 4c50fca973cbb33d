//! Adjoint rules for every recorded op. Each arm computes the contribution to
//! its inputs' pass buffers from the output adjoint `gout`; `Tape::acc` skips
//! inputs that do not require grad.

use super::{mm, mm_nt, mm_tn, Op, Tape, TensorId};

impl Tape {
    pub(crate) fn backward_op(
        &self,
        op: &Op,
        out: TensorId,
        gout: &[f64],
        pass: &mut [Option<Vec<f64>>],
    ) {
        match op {
            Op::Leaf => {}

            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                self.acc(pass, *a, || mm_nt(gout, self.value(*b), m, n, k));
                self.acc(pass, *b, || mm_tn(self.value(*a), gout, m, k, n));
            }

            Op::Bmm { a, b } => {
                let &[g, m, k] = self.shape(*a) else { unreachable!() };
                let n = self.shape(*b)[2];
                self.acc(pass, *a, || {
                    let bv = self.value(*b);
                    let mut da = Vec::with_capacity(g * m * k);
                    for gi in 0..g {
                        let go = &gout[gi * m * n..(gi + 1) * m * n];
                        let bg = &bv[gi * k * n..(gi + 1) * k * n];
                        da.extend_from_slice(&mm_nt(go, bg, m, n, k));
                    }
                    da
                });
                self.acc(pass, *b, || {
                    let av = self.value(*a);
                    let mut db = Vec::with_capacity(g * k * n);
                    for gi in 0..g {
                        let go = &gout[gi * m * n..(gi + 1) * m * n];
                        let ag = &av[gi * m * k..(gi + 1) * m * k];
                        db.extend_from_slice(&mm_tn(ag, go, m, k, n));
                    }
                    db
                });
            }

            Op::BmmNt { a, b } => {
                let &[g, m, k] = self.shape(*a) else { unreachable!() };
                let n = self.shape(*b)[1];
                self.acc(pass, *a, || {
                    let bv = self.value(*b);
                    let mut da = Vec::with_capacity(g * m * k);
                    for gi in 0..g {
                        let go = &gout[gi * m * n..(gi + 1) * m * n];
                        let bg = &bv[gi * n * k..(gi + 1) * n * k];
                        da.extend_from_slice(&mm(go, bg, m, n, k));
                    }
                    da
                });
                self.acc(pass, *b, || {
                    let av = self.value(*a);
                    let mut db = Vec::with_capacity(g * n * k);
                    for gi in 0..g {
                        let go = &gout[gi * m * n..(gi + 1) * m * n];
                        let ag = &av[gi * m * k..(gi + 1) * m * k];
                        db.extend_from_slice(&mm_tn(go, ag, m, n, k));
                    }
                    db
                });
            }

            Op::Add { a, b } => {
                self.acc(pass, *a, || gout.to_vec());
                self.acc(pass, *b, || gout.to_vec());
            }

            Op::Sub { a, b } => {
                self.acc(pass, *a, || gout.to_vec());
                self.acc(pass, *b, || gout.iter().map(|&g| -g).collect());
            }

            Op::Mul { a, b } => {
                self.acc(pass, *a, || {
                    gout.iter().zip(self.value(*b)).map(|(g, v)| g * v).collect()
                });
                self.acc(pass, *b, || {
                    gout.iter().zip(self.value(*a)).map(|(g, v)| g * v).collect()
                });
            }

            Op::AddRowVec { x, v } => {
                let n = self.shape(*v)[0];
                self.acc(pass, *x, || gout.to_vec());
                self.acc(pass, *v, || {
                    let mut dv = vec![0.0; n];
                    for (i, &g) in gout.iter().enumerate() {
                        dv[i % n] += g;
                    }
                    dv
                });
            }

            Op::MulRowVec { x, v } => {
                let n = self.shape(*v)[0];
                self.acc(pass, *x, || {
                    let vv = self.value(*v);
                    gout.iter()
                        .enumerate()
                        .map(|(i, &g)| g * vv[i % n])
                        .collect()
                });
                self.acc(pass, *v, || {
                    let xv = self.value(*x);
                    let mut dv = vec![0.0; n];
                    for (i, &g) in gout.iter().enumerate() {
                        dv[i % n] += g * xv[i];
                    }
                    dv
                });
            }

            Op::ScaleRows { x, s } => {
                let n = self.shape(*x)[1];
                self.acc(pass, *x, || {
                    let sv = self.value(*s);
                    gout.iter()
                        .enumerate()
                        .map(|(i, &g)| g * sv[i / n])
                        .collect()
                });
                self.acc(pass, *s, || {
                    let xv = self.value(*x);
                    let mut ds = vec![0.0; self.shape(*s)[0]];
                    for (i, &g) in gout.iter().enumerate() {
                        ds[i / n] += g * xv[i];
                    }
                    ds
                });
            }

            Op::Scale { x, c } => {
                self.acc(pass, *x, || gout.iter().map(|&g| g * c).collect());
            }

            Op::MulScalar { x, s } => {
                self.acc(pass, *x, || {
                    let sv = self.value(*s)[0];
                    gout.iter().map(|&g| g * sv).collect()
                });
                self.acc(pass, *s, || {
                    let xv = self.value(*x);
                    vec![gout.iter().zip(xv).map(|(g, v)| g * v).sum()]
                });
            }

            Op::Sigmoid { x } => {
                self.acc(pass, *x, || {
                    let y = self.value(out);
                    gout.iter()
                        .zip(y)
                        .map(|(g, &y)| g * y * (1.0 - y))
                        .collect()
                });
            }

            Op::Tanh { x } => {
                self.acc(pass, *x, || {
                    let y = self.value(out);
                    gout.iter()
                        .zip(y)
                        .map(|(g, &y)| g * (1.0 - y * y))
                        .collect()
                });
            }

            Op::Relu { x } => {
                self.acc(pass, *x, || {
                    let xv = self.value(*x);
                    gout.iter()
                        .zip(xv)
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect()
                });
            }

            Op::Exp { x } => {
                self.acc(pass, *x, || {
                    let y = self.value(out);
                    gout.iter().zip(y).map(|(g, &y)| g * y).collect()
                });
            }

            Op::Ln { x } => {
                self.acc(pass, *x, || {
                    let xv = self.value(*x);
                    gout.iter().zip(xv).map(|(g, &v)| g / v).collect()
                });
            }

            Op::PowConst { x, p } => {
                self.acc(pass, *x, || {
                    if *p == 0.0 {
                        return vec![0.0; gout.len()];
                    }
                    let xv = self.value(*x);
                    gout.iter()
                        .zip(xv)
                        .map(|(g, &v)| g * p * v.powf(p - 1.0))
                        .collect()
                });
            }

            Op::Clamp { x, lo, hi } => {
                self.acc(pass, *x, || {
                    let xv = self.value(*x);
                    gout.iter()
                        .zip(xv)
                        .map(|(g, &v)| if v > *lo && v < *hi { *g } else { 0.0 })
                        .collect()
                });
            }

            Op::SoftmaxRows { x } => {
                let &[m, n] = self.shape(out) else { unreachable!() };
                self.acc(pass, *x, || {
                    let y = self.value(out);
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let yr = &y[i * n..(i + 1) * n];
                        let gr = &gout[i * n..(i + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[i * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    dx
                });
            }

            Op::LayerNormRows { x, gamma, beta, eps } => {
                let &[m, n] = self.shape(*x) else { unreachable!() };
                let nf = n as f64;
                let stats = |row: &[f64]| {
                    let mu = row.iter().sum::<f64>() / nf;
                    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / nf;
                    (mu, 1.0 / (var + eps).sqrt())
                };
                self.acc(pass, *x, || {
                    let xv = self.value(*x);
                    let gv = self.value(*gamma);
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let row = &xv[i * n..(i + 1) * n];
                        let gr = &gout[i * n..(i + 1) * n];
                        let (mu, inv) = stats(row);
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let xhat = (row[j] - mu) * inv;
                            let dxh = gr[j] * gv[j];
                            s1 += dxh;
                            s2 += dxh * xhat;
                        }
                        for j in 0..n {
                            let xhat = (row[j] - mu) * inv;
                            let dxh = gr[j] * gv[j];
                            dx[i * n + j] = inv * (dxh - s1 / nf - xhat * s2 / nf);
                        }
                    }
                    dx
                });
                self.acc(pass, *gamma, || {
                    let xv = self.value(*x);
                    let mut dg = vec![0.0; n];
                    for i in 0..m {
                        let row = &xv[i * n..(i + 1) * n];
                        let (mu, inv) = stats(row);
                        for j in 0..n {
                            dg[j] += gout[i * n + j] * (row[j] - mu) * inv;
                        }
                    }
                    dg
                });
                self.acc(pass, *beta, || {
                    let mut db = vec![0.0; n];
                    for (i, &g) in gout.iter().enumerate() {
                        db[i % n] += g;
                    }
                    db
                });
            }

            Op::CosineSimRows { x, v } => {
                let &[m, n] = self.shape(*x) else { unreachable!() };
                let vv = self.value(*v);
                let vnorm = vv.iter().map(|&a| a * a).sum::<f64>().sqrt();
                let sims = self.value(out);
                let xv = self.value(*x);
                self.acc(pass, *x, || {
                    let mut dx = vec![0.0; m * n];
                    if vnorm == 0.0 {
                        return dx;
                    }
                    for i in 0..m {
                        let row = &xv[i * n..(i + 1) * n];
                        let rnorm = row.iter().map(|&a| a * a).sum::<f64>().sqrt();
                        if rnorm == 0.0 {
                            continue;
                        }
                        let g = gout[i];
                        let s = sims[i];
                        for j in 0..n {
                            dx[i * n + j] =
                                g * (vv[j] / (rnorm * vnorm) - s * row[j] / (rnorm * rnorm));
                        }
                    }
                    dx
                });
                self.acc(pass, *v, || {
                    let mut dv = vec![0.0; n];
                    if vnorm == 0.0 {
                        return dv;
                    }
                    for i in 0..m {
                        let row = &xv[i * n..(i + 1) * n];
                        let rnorm = row.iter().map(|&a| a * a).sum::<f64>().sqrt();
                        if rnorm == 0.0 {
                            continue;
                        }
                        let g = gout[i];
                        let s = sims[i];
                        for j in 0..n {
                            dv[j] += g * (row[j] / (rnorm * vnorm) - s * vv[j] / (vnorm * vnorm));
                        }
                    }
                    dv
                });
            }

            Op::RowGather { x, ids } => {
                let &[m, n] = self.shape(*x) else { unreachable!() };
                self.acc(pass, *x, || {
                    let mut dx = vec![0.0; m * n];
                    for (r, &src) in ids.iter().enumerate() {
                        for j in 0..n {
                            dx[src * n + j] += gout[r * n + j];
                        }
                    }
                    dx
                });
            }

            Op::ConcatRows { parts } => {
                let mut off = 0;
                for &p in parts {
                    let len = self.tensor(p).len();
                    let lo = off;
                    self.acc(pass, p, || gout[lo..lo + len].to_vec());
                    off += len;
                }
            }

            Op::ConcatCols { parts } => {
                let width = self.shape(out)[1];
                let m = self.shape(out)[0];
                let mut off = 0;
                for &p in parts {
                    let pn = self.shape(p)[1];
                    let lo = off;
                    self.acc(pass, p, || {
                        let mut dp = vec![0.0; m * pn];
                        for i in 0..m {
                            dp[i * pn..(i + 1) * pn]
                                .copy_from_slice(&gout[i * width + lo..i * width + lo + pn]);
                        }
                        dp
                    });
                    off += pn;
                }
            }

            Op::SliceCols { x, from, to } => {
                let &[m, n] = self.shape(*x) else { unreachable!() };
                let w = to - from;
                self.acc(pass, *x, || {
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        dx[i * n + from..i * n + to].copy_from_slice(&gout[i * w..(i + 1) * w]);
                    }
                    dx
                });
            }

            Op::Reshape { x } => {
                self.acc(pass, *x, || gout.to_vec());
            }

            Op::MaxOverGroups { x, argmax, .. } => {
                let &[m, n] = self.shape(*x) else { unreachable!() };
                self.acc(pass, *x, || {
                    let mut dx = vec![0.0; m * n];
                    for (slot, &row) in argmax.iter().enumerate() {
                        let j = slot % n;
                        dx[row * n + j] += gout[slot];
                    }
                    dx
                });
            }

            Op::SumAll { x } => {
                let len = self.tensor(*x).len();
                self.acc(pass, *x, || vec![gout[0]; len]);
            }

            Op::MeanAll { x } => {
                let len = self.tensor(*x).len();
                self.acc(pass, *x, || vec![gout[0] / len.max(1) as f64; len]);
            }
        }
    }
}
