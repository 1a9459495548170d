//! Reverse-mode tape over 2-D f64 tensors.
//!
//! The tape borrows a [`ParameterArchive`] immutably; ops reference
//! parameters by name and forward values are computed eagerly. `backward`
//! walks the node list in exact reverse order and accumulates parameter
//! gradients into a name-keyed map. There is no hidden state outside the
//! tape: replaying the same ops over the same archive reproduces the same
//! values bit for bit.
//!
//! Lattice-shaped values are flattened to 2-D: the joint over a T-frame,
//! (U+1)-position utterance lives in a (T·(U+1)) × (V+1) node whose row
//! index is `t·(U+1) + u`.

use std::collections::BTreeMap;

use super::archive::ParameterArchive;
use super::kernels;
use super::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Parameter gradients keyed by archive name. BTreeMap keeps reduction
/// order deterministic.
pub type GradMap = BTreeMap<String, Vec<f64>>;

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

enum Op {
    Input,
    /// y = x·Wᵀ + b, W is (out × in), b is (out).
    Affine { x: NodeId, w: String, b: String },
    Relu { x: NodeId },
    LogSoftmaxRows { x: NodeId },
    ConcatCols { a: NodeId, b: NodeId },
    SliceCols { x: NodeId, start: usize, end: usize },
    /// y = s · x for a single-value parameter s.
    ScaleParam { x: NodeId, s: String },
    /// y[i·Rb + j] = a[i] + b[j]; both operands share the column count.
    PairwiseAdd { a: NodeId, b: NodeId },
    /// y[i·Rg + j] = w·relu(f[i] + g[j]) + b — the blank joint over all
    /// (frame, position) pairs, fused to keep the node count flat.
    PairwiseBlank { f: NodeId, g: NodeId, w: String, b: String },
    /// Row lookup into an embedding table parameter.
    Embed { table: String, ids: Vec<usize> },
    /// Full recurrent layer: x is (T × D_in), output (T × hidden). Caches
    /// the gate and candidate activations for backpropagation through time.
    Rnn { x: NodeId, prefix: String, gates: Vec<f64>, cands: Vec<f64> },
}

pub struct Tape<'a> {
    params: &'a ParameterArchive,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParameterArchive) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &ParameterArchive {
        self.params
    }

    pub fn rows(&self, id: NodeId) -> usize {
        self.nodes[id.0].rows
    }

    pub fn cols(&self, id: NodeId) -> usize {
        self.nodes[id.0].cols
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn value_mat(&self, id: NodeId) -> Mat {
        let n = &self.nodes[id.0];
        Mat::from_vec(n.rows, n.cols, n.value.clone())
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: &[f64]) -> NodeId {
        self.push(rows, cols, data.to_vec(), Op::Input)
    }

    pub fn input_mat(&mut self, m: &Mat) -> NodeId {
        self.input(m.rows, m.cols, &m.data)
    }

    pub fn affine(&mut self, x: NodeId, w: &str, b: &str) -> NodeId {
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let (out_dim, in_dim) = (wt.shape[0], wt.shape[1]);
        let xn = &self.nodes[x.0];
        assert_eq!(xn.cols, in_dim, "affine: {w} expects {in_dim} inputs, got {}", xn.cols);
        assert_eq!(bt.len(), out_dim, "affine: bias {b} must be ({out_dim})");
        let rows = xn.rows;
        let mut value = vec![0.0; rows * out_dim];
        for r in 0..rows {
            kernels::affine_row(
                &wt.data,
                &bt.data,
                &xn.value[r * in_dim..(r + 1) * in_dim],
                &mut value[r * out_dim..(r + 1) * out_dim],
            );
        }
        self.push(rows, out_dim, value, Op::Affine { x, w: w.into(), b: b.into() })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xn = &self.nodes[x.0];
        let value: Vec<f64> = xn.value.iter().map(|v| kernels::relu(*v)).collect();
        let (r, c) = (xn.rows, xn.cols);
        self.push(r, c, value, Op::Relu { x })
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xn = &self.nodes[x.0];
        let (rows, cols) = (xn.rows, xn.cols);
        let mut value = xn.value.clone();
        for r in 0..rows {
            kernels::log_softmax_row(&mut value[r * cols..(r + 1) * cols]);
        }
        self.push(rows, cols, value, Op::LogSoftmaxRows { x })
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (an, bn) = (&self.nodes[a.0], &self.nodes[b.0]);
        assert_eq!(an.rows, bn.rows, "concat_cols: row mismatch");
        let (rows, ca, cb) = (an.rows, an.cols, bn.cols);
        let mut value = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            value.extend_from_slice(&an.value[r * ca..(r + 1) * ca]);
            value.extend_from_slice(&bn.value[r * cb..(r + 1) * cb]);
        }
        self.push(rows, ca + cb, value, Op::ConcatCols { a, b })
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let xn = &self.nodes[x.0];
        assert!(start < end && end <= xn.cols, "slice_cols out of range");
        let (rows, cols) = (xn.rows, xn.cols);
        let width = end - start;
        let mut value = Vec::with_capacity(rows * width);
        for r in 0..rows {
            value.extend_from_slice(&xn.value[r * cols + start..r * cols + end]);
        }
        self.push(rows, width, value, Op::SliceCols { x, start, end })
    }

    pub fn scale_by_param(&mut self, x: NodeId, s: &str) -> NodeId {
        let scale = self.params.scalar(s);
        let xn = &self.nodes[x.0];
        let value: Vec<f64> = xn.value.iter().map(|v| scale * v).collect();
        let (r, c) = (xn.rows, xn.cols);
        self.push(r, c, value, Op::ScaleParam { x, s: s.into() })
    }

    pub fn pairwise_add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (an, bn) = (&self.nodes[a.0], &self.nodes[b.0]);
        assert_eq!(an.cols, bn.cols, "pairwise_add: column mismatch");
        let (ra, rb, cols) = (an.rows, bn.rows, an.cols);
        let mut value = Vec::with_capacity(ra * rb * cols);
        for i in 0..ra {
            let arow = &an.value[i * cols..(i + 1) * cols];
            for j in 0..rb {
                let brow = &bn.value[j * cols..(j + 1) * cols];
                value.extend(arow.iter().zip(brow).map(|(x, y)| x + y));
            }
        }
        self.push(ra * rb, cols, value, Op::PairwiseAdd { a, b })
    }

    pub fn pairwise_blank(&mut self, f: NodeId, g: NodeId, w: &str, b: &str) -> NodeId {
        let wt = self.params.get(w);
        let bias = self.params.get(b).data[0];
        let (fn_, gn) = (&self.nodes[f.0], &self.nodes[g.0]);
        assert_eq!(fn_.cols, gn.cols, "pairwise_blank: width mismatch");
        assert_eq!(wt.len(), fn_.cols, "pairwise_blank: {w} must be (1 × width)");
        let (rf, rg, h) = (fn_.rows, gn.rows, fn_.cols);
        let mut value = Vec::with_capacity(rf * rg);
        for i in 0..rf {
            let frow = &fn_.value[i * h..(i + 1) * h];
            for j in 0..rg {
                let grow = &gn.value[j * h..(j + 1) * h];
                let mut acc = bias;
                for k in 0..h {
                    acc += wt.data[k] * kernels::relu(frow[k] + grow[k]);
                }
                value.push(acc);
            }
        }
        self.push(rf * rg, 1, value, Op::PairwiseBlank { f, g, w: w.into(), b: b.into() })
    }

    pub fn embed(&mut self, table: &str, ids: &[usize]) -> NodeId {
        let t = self.params.get(table);
        let (vocab, dim) = (t.shape[0], t.shape[1]);
        let mut value = Vec::with_capacity(ids.len() * dim);
        for id in ids {
            assert!(*id < vocab, "embed: id {id} out of range for {table}");
            value.extend_from_slice(&t.data[id * dim..(id + 1) * dim]);
        }
        self.push(ids.len(), dim, value, Op::Embed { table: table.into(), ids: ids.to_vec() })
    }

    /// Recurrent layer under `prefix` (`{prefix}.wf/bf/wh/bh`), initial
    /// state zero, one output row per input row.
    pub fn rnn(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let wf = self.params.get(&format!("{prefix}.wf"));
        let bf = self.params.get(&format!("{prefix}.bf"));
        let wh = self.params.get(&format!("{prefix}.wh"));
        let bh = self.params.get(&format!("{prefix}.bh"));
        let hidden = bf.len();
        let xn = &self.nodes[x.0];
        let (steps, d_in) = (xn.rows, xn.cols);
        assert_eq!(wf.shape, vec![hidden, hidden + d_in], "rnn: {prefix}.wf shape mismatch");

        let mut value = vec![0.0; steps * hidden];
        let mut gates = vec![0.0; steps * hidden];
        let mut cands = vec![0.0; steps * hidden];
        let mut h_prev = vec![0.0; hidden];
        for t in 0..steps {
            let (f_out, hcand_out, h_new) = (
                &mut gates[t * hidden..(t + 1) * hidden],
                &mut cands[t * hidden..(t + 1) * hidden],
                &mut value[t * hidden..(t + 1) * hidden],
            );
            kernels::mgu_step(
                &wf.data,
                &bf.data,
                &wh.data,
                &bh.data,
                &h_prev,
                &xn.value[t * d_in..(t + 1) * d_in],
                f_out,
                hcand_out,
                h_new,
            );
            h_prev.copy_from_slice(h_new);
        }
        self.push(steps, hidden, value, Op::Rnn { x, prefix: prefix.into(), gates, cands })
    }

    /// Backpropagate from the seeded output gradients to every parameter.
    /// Seeds accumulate, so one backward pass can serve a composite loss.
    pub fn backward(&self, seeds: &[(NodeId, Vec<f64>)]) -> GradMap {
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            let node = &self.nodes[id.0];
            assert_eq!(seed.len(), node.value.len(), "seed length mismatch");
            let slot = accumulate(&mut node_grads, id.0, seed.len());
            add_into(slot, seed);
        }

        let mut param_grads: GradMap = GradMap::new();
        for idx in (0..self.nodes.len()).rev() {
            let Some(dy) = node_grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Affine { x, w, b } => {
                    self.backward_affine(&mut node_grads, &mut param_grads, *x, w, b, node, &dy)
                }
                Op::Relu { x } => {
                    let xn = &self.nodes[x.0];
                    let dx = accumulate(&mut node_grads, x.0, xn.value.len());
                    for (i, v) in xn.value.iter().enumerate() {
                        if *v > 0.0 {
                            dx[i] += dy[i];
                        }
                    }
                }
                Op::LogSoftmaxRows { x } => {
                    let cols = node.cols;
                    let dx = accumulate(&mut node_grads, x.0, node.value.len());
                    for r in 0..node.rows {
                        let y = &node.value[r * cols..(r + 1) * cols];
                        let dyr = &dy[r * cols..(r + 1) * cols];
                        let sum: f64 = dyr.iter().sum();
                        for c in 0..cols {
                            dx[r * cols + c] += dyr[c] - y[c].exp() * sum;
                        }
                    }
                }
                Op::ConcatCols { a, b } => {
                    let (ca, cb) = (self.nodes[a.0].cols, self.nodes[b.0].cols);
                    let rows = node.rows;
                    {
                        let da = accumulate(&mut node_grads, a.0, rows * ca);
                        for r in 0..rows {
                            for c in 0..ca {
                                da[r * ca + c] += dy[r * (ca + cb) + c];
                            }
                        }
                    }
                    let db = accumulate(&mut node_grads, b.0, rows * cb);
                    for r in 0..rows {
                        for c in 0..cb {
                            db[r * cb + c] += dy[r * (ca + cb) + ca + c];
                        }
                    }
                }
                Op::SliceCols { x, start, end } => {
                    let cols = self.nodes[x.0].cols;
                    let width = end - start;
                    let dx = accumulate(&mut node_grads, x.0, node.rows * cols);
                    for r in 0..node.rows {
                        for c in 0..width {
                            dx[r * cols + start + c] += dy[r * width + c];
                        }
                    }
                }
                Op::ScaleParam { x, s } => {
                    let scale = self.params.scalar(s);
                    let xn = &self.nodes[x.0];
                    {
                        let dx = accumulate(&mut node_grads, x.0, xn.value.len());
                        for (di, gi) in dx.iter_mut().zip(&dy) {
                            *di += scale * gi;
                        }
                    }
                    let ds = param_grad(&mut param_grads, self.params, s);
                    ds[0] += xn.value.iter().zip(&dy).map(|(v, g)| v * g).sum::<f64>();
                }
                Op::PairwiseAdd { a, b } => {
                    let (ra, rb, cols) = (self.nodes[a.0].rows, self.nodes[b.0].rows, node.cols);
                    {
                        let da = accumulate(&mut node_grads, a.0, ra * cols);
                        for i in 0..ra {
                            for j in 0..rb {
                                let row = &dy[(i * rb + j) * cols..(i * rb + j + 1) * cols];
                                for c in 0..cols {
                                    da[i * cols + c] += row[c];
                                }
                            }
                        }
                    }
                    let db = accumulate(&mut node_grads, b.0, rb * cols);
                    for i in 0..ra {
                        for j in 0..rb {
                            let row = &dy[(i * rb + j) * cols..(i * rb + j + 1) * cols];
                            for c in 0..cols {
                                db[j * cols + c] += row[c];
                            }
                        }
                    }
                }
                Op::PairwiseBlank { f, g, w, b } => {
                    self.backward_pairwise_blank(&mut node_grads, &mut param_grads, *f, *g, w, b, &dy)
                }
                Op::Embed { table, ids } => {
                    let dim = node.cols;
                    let dt = param_grad(&mut param_grads, self.params, table);
                    for (r, id) in ids.iter().enumerate() {
                        for c in 0..dim {
                            dt[id * dim + c] += dy[r * dim + c];
                        }
                    }
                }
                Op::Rnn { x, prefix, gates, cands } => {
                    self.backward_rnn(&mut node_grads, &mut param_grads, *x, prefix, gates, cands, node, &dy)
                }
            }
        }
        param_grads
    }

    fn backward_affine(
        &self,
        node_grads: &mut [Option<Vec<f64>>],
        param_grads: &mut GradMap,
        x: NodeId,
        w: &str,
        b: &str,
        node: &Node,
        dy: &[f64],
    ) {
        let wt = self.params.get(w);
        let (out_dim, in_dim) = (wt.shape[0], wt.shape[1]);
        let xn = &self.nodes[x.0];
        let rows = node.rows;
        {
            let dx = accumulate(node_grads, x.0, rows * in_dim);
            for r in 0..rows {
                let dyr = &dy[r * out_dim..(r + 1) * out_dim];
                let dxr = &mut dx[r * in_dim..(r + 1) * in_dim];
                for (i, dyi) in dyr.iter().enumerate() {
                    if *dyi == 0.0 {
                        continue;
                    }
                    let wrow = &wt.data[i * in_dim..(i + 1) * in_dim];
                    for (dxj, wj) in dxr.iter_mut().zip(wrow) {
                        *dxj += dyi * wj;
                    }
                }
            }
        }
        {
            let dw = param_grad(param_grads, self.params, w);
            for r in 0..rows {
                let dyr = &dy[r * out_dim..(r + 1) * out_dim];
                let xr = &xn.value[r * in_dim..(r + 1) * in_dim];
                for (i, dyi) in dyr.iter().enumerate() {
                    if *dyi == 0.0 {
                        continue;
                    }
                    let wrow = &mut dw[i * in_dim..(i + 1) * in_dim];
                    for (dwj, xj) in wrow.iter_mut().zip(xr) {
                        *dwj += dyi * xj;
                    }
                }
            }
        }
        let db = param_grad(param_grads, self.params, b);
        for r in 0..rows {
            for (i, dyi) in dy[r * out_dim..(r + 1) * out_dim].iter().enumerate() {
                db[i] += dyi;
            }
        }
    }

    fn backward_pairwise_blank(
        &self,
        node_grads: &mut [Option<Vec<f64>>],
        param_grads: &mut GradMap,
        f: NodeId,
        g: NodeId,
        w: &str,
        b: &str,
        dy: &[f64],
    ) {
        let wt = self.params.get(w);
        let (fn_, gn) = (&self.nodes[f.0], &self.nodes[g.0]);
        let (rf, rg, h) = (fn_.rows, gn.rows, fn_.cols);
        let mut df = vec![0.0; rf * h];
        let mut dg = vec![0.0; rg * h];
        let mut dw = vec![0.0; h];
        let mut db_acc = 0.0;
        for i in 0..rf {
            let frow = &fn_.value[i * h..(i + 1) * h];
            for j in 0..rg {
                let gy = dy[i * rg + j];
                if gy == 0.0 {
                    continue;
                }
                db_acc += gy;
                let grow = &gn.value[j * h..(j + 1) * h];
                for k in 0..h {
                    let s = frow[k] + grow[k];
                    if s > 0.0 {
                        dw[k] += gy * s;
                        let d = gy * wt.data[k];
                        df[i * h + k] += d;
                        dg[j * h + k] += d;
                    }
                }
            }
        }
        add_into(accumulate(node_grads, f.0, rf * h), &df);
        add_into(accumulate(node_grads, g.0, rg * h), &dg);
        add_into(param_grad(param_grads, self.params, w), &dw);
        param_grad(param_grads, self.params, b)[0] += db_acc;
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_rnn(
        &self,
        node_grads: &mut [Option<Vec<f64>>],
        param_grads: &mut GradMap,
        x: NodeId,
        prefix: &str,
        gates: &[f64],
        cands: &[f64],
        node: &Node,
        dy: &[f64],
    ) {
        let wf = self.params.get(&format!("{prefix}.wf"));
        let wh = self.params.get(&format!("{prefix}.wh"));
        let hidden = node.cols;
        let xn = &self.nodes[x.0];
        let (steps, d_in) = (xn.rows, xn.cols);
        let n_in = hidden + d_in;

        let mut dwf = vec![0.0; wf.len()];
        let mut dbf = vec![0.0; hidden];
        let mut dwh = vec![0.0; wh.len()];
        let mut dbh = vec![0.0; hidden];
        let mut dx = vec![0.0; steps * d_in];

        let zero_state = vec![0.0; hidden];
        let mut dh = vec![0.0; hidden];
        let mut da_h = vec![0.0; hidden];
        let mut da_f = vec![0.0; hidden];
        let mut dr = vec![0.0; hidden];
        for t in (0..steps).rev() {
            let h_prev: &[f64] =
                if t == 0 { &zero_state } else { &node.value[(t - 1) * hidden..t * hidden] };
            let f = &gates[t * hidden..(t + 1) * hidden];
            let hcand = &cands[t * hidden..(t + 1) * hidden];
            let xt = &xn.value[t * d_in..(t + 1) * d_in];
            let dxt = &mut dx[t * d_in..(t + 1) * d_in];

            for i in 0..hidden {
                dh[i] += dy[t * hidden + i];
            }
            // h = (1−f)·h_prev + f·hcand
            let mut dh_prev = vec![0.0; hidden];
            let mut df = vec![0.0; hidden];
            for i in 0..hidden {
                da_h[i] = dh[i] * f[i] * (1.0 - hcand[i] * hcand[i]);
                df[i] = dh[i] * (hcand[i] - h_prev[i]);
                dh_prev[i] = dh[i] * (1.0 - f[i]);
            }
            // candidate branch: a_h = Wh·[f⊙h_prev; x] + bh
            for i in 0..hidden {
                dbh[i] += da_h[i];
            }
            dr.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..hidden {
                let g = da_h[i];
                if g == 0.0 {
                    continue;
                }
                let wrow = &wh.data[i * n_in..(i + 1) * n_in];
                let dwrow = &mut dwh[i * n_in..(i + 1) * n_in];
                for j in 0..hidden {
                    dwrow[j] += g * f[j] * h_prev[j];
                    dr[j] += g * wrow[j];
                }
                for j in 0..d_in {
                    dwrow[hidden + j] += g * xt[j];
                    dxt[j] += g * wrow[hidden + j];
                }
            }
            for i in 0..hidden {
                df[i] += dr[i] * h_prev[i];
                dh_prev[i] += dr[i] * f[i];
            }
            // gate branch: a_f = Wf·[h_prev; x] + bf
            for i in 0..hidden {
                da_f[i] = df[i] * f[i] * (1.0 - f[i]);
                dbf[i] += da_f[i];
            }
            for i in 0..hidden {
                let g = da_f[i];
                if g == 0.0 {
                    continue;
                }
                let wrow = &wf.data[i * n_in..(i + 1) * n_in];
                let dwrow = &mut dwf[i * n_in..(i + 1) * n_in];
                for j in 0..hidden {
                    dwrow[j] += g * h_prev[j];
                    dh_prev[j] += g * wrow[j];
                }
                for j in 0..d_in {
                    dwrow[hidden + j] += g * xt[j];
                    dxt[j] += g * wrow[hidden + j];
                }
            }
            dh.copy_from_slice(&dh_prev);
        }

        add_into(accumulate(node_grads, x.0, steps * d_in), &dx);
        add_into(param_grad(param_grads, self.params, &format!("{prefix}.wf")), &dwf);
        add_into(param_grad(param_grads, self.params, &format!("{prefix}.bf")), &dbf);
        add_into(param_grad(param_grads, self.params, &format!("{prefix}.wh")), &dwh);
        add_into(param_grad(param_grads, self.params, &format!("{prefix}.bh")), &dbh);
    }
}

fn accumulate<'g>(grads: &'g mut [Option<Vec<f64>>], idx: usize, len: usize) -> &'g mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

fn param_grad<'g>(
    grads: &'g mut GradMap,
    params: &ParameterArchive,
    name: &str,
) -> &'g mut Vec<f64> {
    grads
        .entry(name.to_string())
        .or_insert_with(|| vec![0.0; params.get(name).len()])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
