use crate::error::{Error, Result};

/// Dense row-major tensor of `f64` values.
///
/// Tensors are plain values: every operation returns a new tensor, and
/// construction rejects non-finite data.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction".into()));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor without the finiteness scan. Callers guarantee the
    /// shape/data agreement.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![0.0; numel])
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn vector(values: &[f64]) -> Result<Self> {
        Tensor::new(vec![values.len()], values.to_vec())
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Builds a matrix from nested rows. All rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let numel = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..numel).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interprets the tensor as `rows × last_dim`.
    pub fn rows_cols(&self) -> (usize, usize) {
        let cols = *self.shape.last().expect("tensor rank >= 1");
        (self.data.len() / cols, cols)
    }

    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::shape(op, format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.rows_cols();
        self.data[row * cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let (_, cols) = self.rows_cols();
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{m}x{k} by {k2}x{n}: inner dimensions differ"),
            ));
        }
        let out = kernels::matmul(&self.data, &other.data, m, k, n);
        check_finite("matmul", Tensor::from_parts(vec![m, n], out))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        Ok(Tensor::from_parts(vec![c, r], kernels::transpose(&self.data, r, c)))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::shape(
                "softmax",
                format!("axis {axis} out of range for shape {:?}", self.shape),
            ));
        }
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = vec![0.0; self.numel()];
        let mut slice = vec![0.0; n];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                for (j, s) in slice.iter_mut().enumerate() {
                    *s = self.data[idx(j)];
                }
                kernels::softmax_in_place(&mut slice);
                for (j, s) in slice.iter().enumerate() {
                    out[idx(j)] = *s;
                }
            }
        }
        check_finite("softmax", Tensor::from_parts(self.shape.clone(), out))
    }

    /// Layer normalization over the last axis with biased variance.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let (rows, d) = self.rows_cols();
        if gamma.numel() != d || beta.numel() != d {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "width {d} with gamma {:?} and beta {:?}",
                    gamma.shape, beta.shape
                ),
            ));
        }
        let mut out = vec![0.0; self.numel()];
        for r in 0..rows {
            let x = &self.data[r * d..(r + 1) * d];
            let (mean, inv_std) = kernels::moments(x, eps);
            for j in 0..d {
                out[r * d + j] = (x[j] - mean) * inv_std * gamma.data[j] + beta.data[j];
            }
        }
        check_finite("layer_norm", Tensor::from_parts(self.shape.clone(), out))
    }

    pub fn activation(&self, kind: Activation) -> Result<Tensor> {
        check_finite(kind.name(), self.map(|v| kind.apply(v)))
    }
}

fn check_finite(op: &str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// Exact `x·Φ(x)` with the Gaussian CDF.
    Gelu,
    /// `0.5·x·(1 + tanh(√(2/π)(x + 0.044715x³)))`.
    GeluTanh,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::GeluTanh => "gelu_tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => x * normal_cdf(x),
            Activation::GeluTanh => {
                let inner = GELU_TANH_C * (x + 0.044715 * x * x * x);
                0.5 * x * (1.0 + inner.tanh())
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at `x`, given the forward output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Gelu => normal_cdf(x) + x * normal_pdf(x),
            Activation::GeluTanh => {
                let inner = GELU_TANH_C * (x + 0.044715 * x * x * x);
                let t = inner.tanh();
                let d_inner = GELU_TANH_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

const GELU_TANH_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub(crate) mod kernels {
    /// `a[m×k] · b[k×n]`.
    pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
        out
    }

    /// `aᵀ · b` for `a[k×m]`, `b[k×n]`, accumulated into `out[m×n]`.
    pub fn matmul_at_b_acc(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            for i in 0..m {
                let av = a[p * m + i];
                if av == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    }

    /// `a · bᵀ` for `a[m×k]`, `b[n×k]`, accumulated into `out[m×n]`.
    pub fn matmul_a_bt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &b[j * k..(j + 1) * k];
                out[i * n + j] += a_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }

    pub fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = a[i * c + j];
            }
        }
        out
    }

    pub fn softmax_in_place(x: &mut [f64]) {
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in x.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in x.iter_mut() {
            *v /= sum;
        }
    }

    /// Mean and `1/sqrt(var + eps)` with the biased variance.
    pub fn moments(x: &[f64], eps: f64) -> (f64, f64) {
        let d = x.len() as f64;
        let mean = x.iter().sum::<f64>() / d;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        (mean, 1.0 / (var + eps).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k) = a.dims2("t").unwrap();
        let (_, n) = b.dims2("t").unwrap();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.at(i, p) * b.at(p, j);
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(matches!(
            Tensor::new(vec![1], vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn matmul_identity_and_zero() {
        let a = Tensor::from_rows(&[vec![1., 2., 3.], vec![4., 5., 6.], vec![7., 8., 9.]]).unwrap();
        assert_eq!(a.matmul(&Tensor::identity(3)).unwrap(), a);
        let b = Tensor::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap();
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(b.matmul(&z).unwrap(), z);
    }

    #[test]
    fn matmul_shape_error() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = lcg(7);
        for (m, k, n) in [(4, 5, 3), (16, 16, 16), (1, 7, 9), (11, 3, 13)] {
            let a = Tensor::from_fn(&[m, k], |_| rng()).unwrap();
            let b = Tensor::from_fn(&[k, n], |_| rng()).unwrap();
            let got = a.matmul(&b).unwrap();
            for (x, y) in got.data().iter().zip(naive_matmul(&a, &b)) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let s = Tensor::vector(&[0., 0., 0.]).unwrap().softmax(0).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = Tensor::vector(&[1., 2., 3.]).unwrap().softmax(0).unwrap();
        let expected = [0.09003057, 0.24472847, 0.66524096];
        for (v, e) in s.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-8);
        }
        let shifted = Tensor::vector(&[1. + 41.5, 2. + 41.5, 3. + 41.5])
            .unwrap()
            .softmax(0)
            .unwrap();
        assert!(shifted.max_abs_diff(&s) < 1e-12);
        assert!(Tensor::zeros(&[2]).softmax(1).is_err());
    }

    #[test]
    fn softmax_along_first_axis() {
        let t = Tensor::from_rows(&[vec![1., 5.], vec![3., 5.]]).unwrap();
        let s = t.softmax(0).unwrap();
        assert!((s.at(0, 1) - 0.5).abs() < 1e-15);
        assert!((s.at(0, 0) + s.at(1, 0) - 1.0).abs() < 1e-15);
        assert!(s.at(1, 0) > s.at(0, 0));
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::filled(&[3], 1.0);
        let zero = Tensor::zeros(&[3]);
        let out = Tensor::filled(&[3], 4.2).layer_norm(&one, &zero, 1e-6).unwrap();
        assert_eq!(out.max_abs(), 0.0);

        let out = Tensor::vector(&[1., 2., 3.]).unwrap().layer_norm(&one, &zero, 0.0).unwrap();
        let e = 1.224_744_871_391_589;
        for (v, x) in out.data().iter().zip([-e, 0.0, e]) {
            assert!((v - x).abs() < 1e-8);
        }

        let one2 = Tensor::filled(&[2], 1.0);
        let zero2 = Tensor::zeros(&[2]);
        let out = Tensor::vector(&[1., -1.]).unwrap().layer_norm(&one2, &zero2, 1e-14).unwrap();
        assert!((out.data()[0] - 1.0).abs() < 1e-12 && (out.data()[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn activation_examples() {
        assert_eq!(Activation::Gelu.apply(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert!((Activation::Gelu.apply(10.0) - 10.0).abs() < 1e-9);
        assert!((Activation::Gelu.apply(1.0) - 0.841_344_75).abs() < 1e-8);
        for x in [-3.0, -1.0, -0.2, 0.5, 2.0] {
            assert!((Activation::Gelu.apply(x) - Activation::GeluTanh.apply(x)).abs() < 1e-3);
        }
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
