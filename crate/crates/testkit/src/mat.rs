/// Row-major matrix as nested vectors.
pub type Mat = Vec<Vec<f64>>;

pub const LN_EPS: f64 = 1e-5;

pub fn from_flat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    assert_eq!(rows * cols, data.len());
    (0..rows).map(|r| data[r * cols..(r + 1) * cols].to_vec()).collect()
}

pub fn flatten(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

pub fn zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = b.len();
    let m = b[0].len();
    let mut out = zeros(a.len(), m);
    for i in 0..a.len() {
        assert_eq!(a[i].len(), n);
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let mut out = zeros(a[0].len(), a.len());
    for i in 0..a.len() {
        for j in 0..a[0].len() {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn hadamard(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).collect())
        .collect()
}

pub fn add_bias(a: &Mat, bias: &[f64]) -> Mat {
    a.iter()
        .map(|row| row.iter().zip(bias).map(|(x, b)| x + b).collect())
        .collect()
}

pub fn relu(a: &Mat) -> Mat {
    a.iter()
        .map(|row| row.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect())
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn layer_norm_row(row: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let denom = (var + LN_EPS).sqrt();
    (0..row.len())
        .map(|i| (row[i] - mean) / denom * gain[i] + bias[i])
        .collect()
}

pub fn layer_norm(a: &Mat, gain: &[f64], bias: &[f64]) -> Mat {
    a.iter().map(|row| layer_norm_row(row, gain, bias)).collect()
}

/// Largest absolute entrywise difference.
pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut m: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.len(), y.len());
        for (p, q) in x.iter().zip(y) {
            m = m.max((p - q).abs());
        }
    }
    m
}
