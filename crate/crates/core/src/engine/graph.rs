//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node to the tape; nodes only reference earlier
//! nodes, so tape order is a topological order and `backward` walks it in
//! reverse. Gradients accumulate in tape order, which keeps results
//! bit-reproducible.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{Element, Tensor};
use crate::error::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of a specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op<T> {
    Param,
    Input,
    Conv2d {
        x: usize,
        k: usize,
        stride: usize,
        pad: usize,
        // im2col buffers, one [C*kh*kw, Ho*Wo] block per sample; kept only
        // when the kernel needs a gradient.
        cols: Vec<T>,
    },
    ChannelBias {
        x: usize,
        b: usize,
    },
    Dense {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    Relu {
        x: usize,
    },
    MaxPool2 {
        x: usize,
        argmax: Vec<u32>,
    },
    GlobalAvgPool {
        x: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Flatten {
        x: usize,
    },
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Sum {
        x: usize,
    },
    Scale {
        x: usize,
        factor: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A recorded forward computation.
#[derive(Debug)]
pub struct Graph<T: Element = f32> {
    id: u64,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: receives a gradient on `backward`.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Param, true)
    }

    /// Non-trainable leaf: `backward` does not compute its gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.check(v).expect("var from another graph")].value
    }

    pub fn is_param(&self, v: Var) -> bool {
        self.check(v)
            .map(|i| matches!(self.nodes[i].op, Op::Param))
            .unwrap_or(false)
    }

    /// Gradient of the last `backward` loss with respect to `v`, if computed.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        let i = self.check(v).ok()?;
        self.grads.get(i)?.as_deref()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(Error::Usage(format!(
                "variable {} does not belong to this graph",
                v.index
            )));
        }
        Ok(v.index)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Direct cross-correlation of `x: [N,C,H,W]` with `k: [F,C,kH,kW]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xi, ki) = (self.check(x)?, self.check(k)?);
        let xs = self.nodes[xi].value.shape().to_vec();
        let ks = self.nodes[ki].value.shape().to_vec();
        if xs.len() != 4 || ks.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d expects 4-d input and kernel, got {xs:?} and {ks:?}"
            )));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (f, kc, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
        if c != kc {
            return Err(Error::Dimension(format!(
                "conv2d channel mismatch: input has {c}, kernel expects {kc}"
            )));
        }
        if stride == 0 {
            return Err(Error::Input("conv2d stride must be positive".into()));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::Dimension(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        let (ck, p) = (c * kh * kw, ho * wo);

        let geom = ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        };
        let mut cols = vec![T::zero(); n * ck * p];
        let mut out = vec![T::zero(); n * f * p];
        {
            let xv = self.nodes[xi].value.data();
            let kv = self.nodes[ki].value.data();
            for s in 0..n {
                let col = &mut cols[s * ck * p..(s + 1) * ck * p];
                geom.im2col(&xv[s * c * h * w..(s + 1) * c * h * w], col);
                let o = &mut out[s * f * p..(s + 1) * f * p];
                // out_s[F x P] = K[F x CK] * col[CK x P]
                unsafe {
                    T::gemm(
                        f,
                        ck,
                        p,
                        T::one(),
                        kv.as_ptr(),
                        ck as isize,
                        1,
                        col.as_ptr(),
                        p as isize,
                        1,
                        T::zero(),
                        o.as_mut_ptr(),
                        p as isize,
                        1,
                    );
                }
            }
        }
        let requires = self.needs(xi) || self.needs(ki);
        if !self.needs(ki) {
            cols = Vec::new();
        }
        let value = Tensor::new(vec![n, f, ho, wo], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x: xi,
                k: ki,
                stride,
                pad,
                cols,
            },
            requires,
        ))
    }

    /// Adds a per-channel bias `b: [C]` to `x: [N,C,H,W]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xi, bi) = (self.check(x)?, self.check(b)?);
        let xs = self.nodes[xi].value.shape().to_vec();
        let bs = self.nodes[bi].value.shape();
        if xs.len() != 4 || bs != [xs[1]] {
            return Err(Error::Dimension(format!(
                "channel bias {bs:?} does not match input {xs:?}"
            )));
        }
        let plane = xs[2] * xs[3];
        let bv = self.nodes[bi].value.data();
        let mut out = self.nodes[xi].value.data().to_vec();
        for (chunk_idx, chunk) in out.chunks_mut(plane).enumerate() {
            let bias = bv[chunk_idx % xs[1]];
            for v in chunk {
                *v = *v + bias;
            }
        }
        let requires = self.needs(xi) || self.needs(bi);
        let value = Tensor::new(xs, out)?;
        Ok(self.push(value, Op::ChannelBias { x: xi, b: bi }, requires))
    }

    /// Fully connected layer: `x: [N,In]`, `w: [Out,In]`, optional `b: [Out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xi, wi) = (self.check(x)?, self.check(w)?);
        let bi = b.map(|b| self.check(b)).transpose()?;
        let xs = self.nodes[xi].value.shape().to_vec();
        let ws = self.nodes[wi].value.shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::Dimension(format!(
                "dense expects [N,In] x [Out,In], got {xs:?} and {ws:?}"
            )));
        }
        let (n, inp, outp) = (xs[0], xs[1], ws[0]);
        if let Some(bi) = bi {
            if self.nodes[bi].value.shape() != [outp] {
                return Err(Error::Dimension(format!(
                    "dense bias {:?} does not match {outp} outputs",
                    self.nodes[bi].value.shape()
                )));
            }
        }
        let mut out = vec![T::zero(); n * outp];
        if let Some(bi) = bi {
            let bv = self.nodes[bi].value.data();
            for row in out.chunks_mut(outp) {
                row.copy_from_slice(bv);
            }
        }
        let beta = if bi.is_some() { T::one() } else { T::zero() };
        unsafe {
            T::gemm(
                n,
                inp,
                outp,
                T::one(),
                self.nodes[xi].value.data().as_ptr(),
                inp as isize,
                1,
                self.nodes[wi].value.data().as_ptr(),
                1,
                inp as isize,
                beta,
                out.as_mut_ptr(),
                outp as isize,
                1,
            );
        }
        let requires = self.needs(xi) || self.needs(wi) || bi.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![n, outp], out)?;
        Ok(self.push(
            value,
            Op::Dense {
                x: xi,
                w: wi,
                b: bi,
            },
            requires,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let src = &self.nodes[xi].value;
        let out = src
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let requires = self.needs(xi);
        Ok(self.push(value, Op::Relu { x: xi }, requires))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    /// Ties resolve to the first element in row-major window order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let xs = self.nodes[xi].value.shape().to_vec();
        if xs.len() != 4 || xs[2] < 2 || xs[3] < 2 {
            return Err(Error::Dimension(format!(
                "max_pool2 expects [N,C,H>=2,W>=2], got {xs:?}"
            )));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / 2, w / 2);
        let xv = self.nodes[xi].value.data();
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut argmax = Vec::with_capacity(planes * ho * wo);
        for pl in 0..planes {
            let base = pl * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = base + (2 * i) * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let value = Tensor::new(vec![xs[0], xs[1], ho, wo], out)?;
        let requires = self.needs(xi);
        Ok(self.push(value, Op::MaxPool2 { x: xi, argmax }, requires))
    }

    /// `[N,C,H,W] -> [N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let xs = self.nodes[xi].value.shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::Dimension(format!(
                "global_avg_pool expects 4-d input, got {xs:?}"
            )));
        }
        let plane = xs[2] * xs[3];
        let inv = T::one() / T::from_f64(plane as f64);
        let out = self.nodes[xi]
            .value
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().fold(T::zero(), |acc, &v| acc + v) * inv)
            .collect();
        let value = Tensor::new(vec![xs[0], xs[1]], out)?;
        let requires = self.needs(xi);
        Ok(self.push(value, Op::GlobalAvgPool { x: xi }, requires))
    }

    /// Elementwise sum of two same-shape tensors (residual connection).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.shape() != bv.shape() {
            return Err(Error::Dimension(format!(
                "add shape mismatch: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(av.shape().to_vec(), out)?;
        let requires = self.needs(ai) || self.needs(bi);
        Ok(self.push(value, Op::Add { a: ai, b: bi }, requires))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let src = &self.nodes[xi].value;
        let n = src.shape()[0];
        let rest = src.numel() / n;
        let value = Tensor::new(vec![n, rest], src.data().to_vec())?;
        let requires = self.needs(xi);
        Ok(self.push(value, Op::Flatten { x: xi }, requires))
    }

    /// Mean softmax cross-entropy of `logits: [N,K]` against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let li = self.check(logits)?;
        let ls = self.nodes[li].value.shape().to_vec();
        if ls.len() != 2 || ls[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "cross_entropy expects [N,K] logits for {} labels, got {ls:?}",
                labels.len()
            )));
        }
        let k = ls[1];
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let lv = self.nodes[li].value.data();
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = T::zero();
        for (row, &y) in lv.chunks(k).zip(labels) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
            let z = exps.iter().fold(T::zero(), |acc, &e| acc + e);
            total = total + (z.ln() - (row[y] - max));
            probs.extend(exps.into_iter().map(|e| e / z));
        }
        let loss = total / T::from_f64(labels.len() as f64);
        let requires = self.needs(li);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: li,
                labels: labels.to_vec(),
                probs,
            },
            requires,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let s = self.nodes[xi]
            .value
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        let requires = self.needs(xi);
        Ok(self.push(Tensor::scalar(s), Op::Sum { x: xi }, requires))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let xi = self.check(x)?;
        let src = &self.nodes[xi].value;
        let out = src.data().iter().map(|&v| v * factor).collect();
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let requires = self.needs(xi);
        Ok(self.push(value, Op::Scale { x: xi, factor }, requires))
    }

    /// Populates gradients of the scalar `loss` for every node that needs one.
    /// Input leaves (and anything depending only on inputs) are skipped.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.check(loss)?;
        if self.nodes[li].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[li].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![T::one()]);
        for i in (0..=li).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[i] = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Param | Op::Input => {}
            Op::Conv2d {
                x,
                k,
                stride,
                pad,
                cols,
            } => {
                let xs = self.nodes[*x].value.shape();
                let ks = self.nodes[*k].value.shape();
                let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let (f, kh, kw) = (ks[0], ks[2], ks[3]);
                let os = node.value.shape();
                let geom = ConvGeom {
                    c,
                    h,
                    w,
                    kh,
                    kw,
                    stride: *stride,
                    pad: *pad,
                    ho: os[2],
                    wo: os[3],
                };
                let (ck, p) = (c * kh * kw, os[2] * os[3]);
                if self.needs(*k) {
                    let dk = slot(grads, *k, f * ck);
                    for s in 0..n {
                        // dK[F x CK] += dOut_s[F x P] * col_s^T
                        unsafe {
                            T::gemm(
                                f,
                                p,
                                ck,
                                T::one(),
                                g[s * f * p..].as_ptr(),
                                p as isize,
                                1,
                                cols[s * ck * p..].as_ptr(),
                                1,
                                p as isize,
                                T::one(),
                                dk.as_mut_ptr(),
                                ck as isize,
                                1,
                            );
                        }
                    }
                }
                if self.needs(*x) {
                    let kv = self.nodes[*k].value.data();
                    let mut dcol = vec![T::zero(); ck * p];
                    let dx = slot(grads, *x, n * c * h * w);
                    for s in 0..n {
                        // dcol[CK x P] = K^T * dOut_s
                        unsafe {
                            T::gemm(
                                ck,
                                f,
                                p,
                                T::one(),
                                kv.as_ptr(),
                                1,
                                ck as isize,
                                g[s * f * p..].as_ptr(),
                                p as isize,
                                1,
                                T::zero(),
                                dcol.as_mut_ptr(),
                                p as isize,
                                1,
                            );
                        }
                        geom.col2im_add(&dcol, &mut dx[s * c * h * w..(s + 1) * c * h * w]);
                    }
                }
            }
            Op::ChannelBias { x, b } => {
                let xs = node.value.shape();
                let (ch, plane) = (xs[1], xs[2] * xs[3]);
                if self.needs(*x) {
                    add_into(slot(grads, *x, g.len()), g);
                }
                if self.needs(*b) {
                    let db = slot(grads, *b, ch);
                    for (chunk_idx, chunk) in g.chunks(plane).enumerate() {
                        let acc = &mut db[chunk_idx % ch];
                        for &v in chunk {
                            *acc = *acc + v;
                        }
                    }
                }
            }
            Op::Dense { x, w, b } => {
                let xs = self.nodes[*x].value.shape();
                let (n, inp) = (xs[0], xs[1]);
                let outp = node.value.shape()[1];
                if self.needs(*x) {
                    let wv = self.nodes[*w].value.data();
                    let dx = slot(grads, *x, n * inp);
                    // dX[N x In] += dY[N x Out] * W[Out x In]
                    unsafe {
                        T::gemm(
                            n,
                            outp,
                            inp,
                            T::one(),
                            g.as_ptr(),
                            outp as isize,
                            1,
                            wv.as_ptr(),
                            inp as isize,
                            1,
                            T::one(),
                            dx.as_mut_ptr(),
                            inp as isize,
                            1,
                        );
                    }
                }
                if self.needs(*w) {
                    let xv = self.nodes[*x].value.data();
                    let dw = slot(grads, *w, outp * inp);
                    // dW[Out x In] += dY^T * X
                    unsafe {
                        T::gemm(
                            outp,
                            n,
                            inp,
                            T::one(),
                            g.as_ptr(),
                            1,
                            outp as isize,
                            xv.as_ptr(),
                            inp as isize,
                            1,
                            T::one(),
                            dw.as_mut_ptr(),
                            inp as isize,
                            1,
                        );
                    }
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let db = slot(grads, *b, outp);
                        for row in g.chunks(outp) {
                            add_into(db, row);
                        }
                    }
                }
            }
            Op::Relu { x } => {
                let xv = self.nodes[*x].value.data();
                let dx = slot(grads, *x, g.len());
                for ((d, &gv), &v) in dx.iter_mut().zip(g).zip(xv) {
                    if v > T::zero() {
                        *d = *d + gv;
                    }
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let len = self.nodes[*x].value.numel();
                let dx = slot(grads, *x, len);
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src as usize] = dx[src as usize] + gv;
                }
            }
            Op::GlobalAvgPool { x } => {
                let xs = self.nodes[*x].value.shape();
                let plane = xs[2] * xs[3];
                let inv = T::one() / T::from_f64(plane as f64);
                let dx = slot(grads, *x, g.len() * plane);
                for (chunk, &gv) in dx.chunks_mut(plane).zip(g) {
                    let share = gv * inv;
                    for d in chunk {
                        *d = *d + share;
                    }
                }
            }
            Op::Add { a, b } => {
                for &t in [a, b] {
                    if self.needs(t) {
                        add_into(slot(grads, t, g.len()), g);
                    }
                }
            }
            Op::Flatten { x } => add_into(slot(grads, *x, g.len()), g),
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = self.nodes[*logits].value.shape()[1];
                let scale = g[0] / T::from_f64(labels.len() as f64);
                let dl = slot(grads, *logits, probs.len());
                for (r, &y) in labels.iter().enumerate() {
                    for j in 0..k {
                        let mut d = probs[r * k + j];
                        if j == y {
                            d = d - T::one();
                        }
                        dl[r * k + j] = dl[r * k + j] + d * scale;
                    }
                }
            }
            Op::Sum { x } => {
                let len = self.nodes[*x].value.numel();
                let dx = slot(grads, *x, len);
                for d in dx.iter_mut() {
                    *d = *d + g[0];
                }
            }
            Op::Scale { x, factor } => {
                let dx = slot(grads, *x, g.len());
                for (d, &gv) in dx.iter_mut().zip(g) {
                    *d = *d + gv * *factor;
                }
            }
        }
    }
}

fn slot<T: Element>(grads: &mut [Option<Vec<T>>], i: usize, len: usize) -> &mut [T] {
    grads[i].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Element>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    /// Output columns `ox` whose tap `j` lands inside the image, as a range.
    #[inline]
    fn valid_cols(&self, j: usize) -> (usize, usize) {
        let lo = if j >= self.pad {
            0
        } else {
            (self.pad - j).div_ceil(self.stride)
        };
        // ox * stride + j - pad <= w - 1
        let hi = if self.w + self.pad > j {
            ((self.w + self.pad - 1 - j) / self.stride + 1).min(self.wo)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    #[inline]
    fn src_row(&self, oy: usize, i: usize) -> Option<usize> {
        let y = (oy * self.stride + i).checked_sub(self.pad)?;
        (y < self.h).then_some(y)
    }

    fn im2col<T: Element>(&self, img: &[T], col: &mut [T]) {
        let p = self.ho * self.wo;
        for ch in 0..self.c {
            let plane = &img[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((ch * self.kh + i) * self.kw + j) * p;
                    let (lo, hi) = self.valid_cols(j);
                    for oy in 0..self.ho {
                        let dst = &mut col[row + oy * self.wo..row + (oy + 1) * self.wo];
                        let Some(y) = self.src_row(oy, i) else {
                            dst.fill(T::zero());
                            continue;
                        };
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        let src = &plane[y * self.w..(y + 1) * self.w];
                        if self.stride == 1 {
                            let x0 = lo + j - self.pad;
                            dst[lo..hi].copy_from_slice(&src[x0..x0 + (hi - lo)]);
                        } else {
                            for ox in lo..hi {
                                dst[ox] = src[ox * self.stride + j - self.pad];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<T: Element>(&self, col: &[T], img: &mut [T]) {
        let p = self.ho * self.wo;
        for ch in 0..self.c {
            let plane = &mut img[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((ch * self.kh + i) * self.kw + j) * p;
                    let (lo, hi) = self.valid_cols(j);
                    for oy in 0..self.ho {
                        let Some(y) = self.src_row(oy, i) else {
                            continue;
                        };
                        let src = &col[row + oy * self.wo..row + (oy + 1) * self.wo];
                        let dst = &mut plane[y * self.w..(y + 1) * self.w];
                        for ox in lo..hi {
                            let x = ox * self.stride + j - self.pad;
                            dst[x] = dst[x] + src[ox];
                        }
                    }
                }
            }
        }
    }
}
