//! Row-major dense kernels sized for the micro model.

/// `out (n×m) = a (n×k) · b (k×m)`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    out[..n * m].fill(0.0);
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
}

/// `out (n×m) = a (n×k) · bᵀ` where `b` is `m×k`.
pub fn matmul_bt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), m * k);
    for i in 0..n {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..m {
            out[i * m + j] = dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out (n×m) += a (n×k) · bᵀ` where `b` is `m×k`.
pub fn matmul_bt_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..m {
            out[i * m + j] += dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out (k×m) += aᵀ · b` where `a` is `n×k` and `b` is `n×m`.
pub fn matmul_at_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), k * m);
    for i in 0..n {
        let br = &b[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * m..(p + 1) * m].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}

/// `out (1×m) = x (1×k) · w (k×m)`.
pub fn vecmat(x: &[f64], w: &[f64], m: usize, out: &mut [f64]) {
    matmul(x, w, 1, x.len(), m, out);
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Adds `bias` to each of the `n` rows of `a`.
pub fn add_bias(a: &mut [f64], bias: &[f64]) {
    for row in a.chunks_mut(bias.len()) {
        add_assign(row, bias);
    }
}

/// Column sums of an `n×m` matrix accumulated into `out`.
pub fn col_sum_acc(a: &[f64], m: usize, out: &mut [f64]) {
    for row in a.chunks(m) {
        add_assign(out, row);
    }
}

/// In-place softmax of one row; entries at or beyond `valid` are set to zero.
pub fn softmax_prefix(row: &mut [f64], valid: usize) {
    let max = row[..valid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in &mut row[..valid] {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in &mut row[..valid] {
        *x /= z;
    }
    row[valid..].fill(0.0);
}

/// Log-softmax of one row into `out`.
pub fn log_softmax(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for (o, x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}

/// Backward of a row softmax: `ds = p ⊙ (dp − ⟨dp, p⟩)`, written over `dp`.
pub fn softmax_backward_rows(p: &[f64], dp: &mut [f64], m: usize) {
    for (pr, dr) in p.chunks(m).zip(dp.chunks_mut(m)) {
        let s = dot(pr, dr);
        for (d, &pv) in dr.iter_mut().zip(pr) {
            *d = pv * (*d - s);
        }
    }
}
