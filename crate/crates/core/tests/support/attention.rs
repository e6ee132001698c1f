use dualseg::network::attention::embed_channels;
use dualseg::network::SegNetParams;
use dualseg::Tensor;

pub fn p<'a>(params: &'a SegNetParams<f64>, name: &str) -> &'a Tensor<f64> {
    &params.params[name]
}

/// Pointwise projection of a single map `[1, C, N]` given as a flat slice.
pub fn pointwise(params: &SegNetParams<f64>, prefix: &str, x: &[f64], c: usize, n: usize) -> Vec<Vec<f64>> {
    let w = p(params, &format!("{prefix}.weight"));
    let b = p(params, &format!("{prefix}.bias")).data();
    let cout = w.shape()[0];
    (0..cout)
        .map(|o| {
            (0..n)
                .map(|i| b[o] + (0..c).map(|ci| w.data()[o * c + ci] * x[ci * n + i]).sum::<f64>())
                .collect()
        })
        .collect()
}

pub fn softmax_row(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter_mut().map(|v| {
        *v = (*v - m).exp();
        *v
    }).sum();
    row.iter_mut().for_each(|v| *v /= s);
}

pub struct PositionOracle {
    pub affinity: Vec<Vec<f64>>,
    pub attended: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Dense pairwise evaluation of position attention, loop over all pairs.
pub fn position_oracle(params: &SegNetParams<f64>, prefix: &str, x: &Tensor<f64>) -> PositionOracle {
    let c = x.shape()[1];
    let n: usize = x.shape()[2..].iter().product();
    let ce = embed_channels(c);
    let q = pointwise(params, &format!("{prefix}.query"), x.data(), c, n);
    let k = pointwise(params, &format!("{prefix}.key"), x.data(), c, n);
    let v = pointwise(params, &format!("{prefix}.value"), x.data(), c, n);
    let mut affinity = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            affinity[i][j] = (0..ce).map(|e| q[e][i] * k[e][j]).sum::<f64>() / (ce as f64).sqrt();
        }
        softmax_row(&mut affinity[i]);
    }
    let mut attended = vec![vec![0.0; c]; n];
    for i in 0..n {
        for ch in 0..c {
            attended[i][ch] = (0..n).map(|j| affinity[i][j] * v[ch][j]).sum();
        }
    }
    let restored: Vec<f64> = (0..c * n).map(|idx| attended[idx % n][idx / n]).collect();
    let o = pointwise(params, &format!("{prefix}.out"), &restored, c, n);
    let gamma = p(params, &format!("{prefix}.gamma")).data()[0];
    let output = (0..c * n).map(|idx| x.data()[idx] + gamma * o[idx / n][idx % n]).collect();
    PositionOracle { affinity, attended, output }
}

/// Dense channel-pair evaluation of channel attention.
pub fn channel_oracle(params: &SegNetParams<f64>, prefix: &str, x: &Tensor<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let c = x.shape()[1];
    let n: usize = x.shape()[2..].iter().product();
    let at = |ch: usize, i: usize| x.data()[ch * n + i];
    let mut fc = vec![vec![0.0; c]; c];
    for a in 0..c {
        for b in 0..c {
            fc[a][b] = (0..n).map(|i| at(a, i) * at(b, i)).sum::<f64>() / (n as f64).sqrt();
        }
        softmax_row(&mut fc[a]);
    }
    let gamma = p(params, &format!("{prefix}.gamma")).data()[0];
    let out = (0..c * n)
        .map(|idx| {
            let (a, i) = (idx / n, idx % n);
            let kc: f64 = (0..c).map(|b| at(b, i) * fc[a][b]).sum();
            x.data()[idx] + gamma * kc
        })
        .collect();
    (fc, out)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn flat(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}
