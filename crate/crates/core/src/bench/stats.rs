use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

fn histogram(data: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &b in data {
        h[b as usize] += 1;
    }
    h
}

fn entropy_of(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Shannon entropy of the byte histogram, in bits per byte.
pub fn order0_entropy(data: &[u8]) -> f64 {
    entropy_of(&histogram(data), data.len() as u64)
}

/// Order-0 entropy of consecutive non-overlapping windows. A trailing partial
/// window is dropped unless it is the only one.
pub fn local_entropy_profile(data: &[u8], window: usize) -> Vec<f64> {
    if data.is_empty() {
        return Vec::new();
    }
    if window == 0 || window >= data.len() {
        return vec![order0_entropy(data)];
    }
    data.chunks_exact(window).map(order0_entropy).collect()
}

/// Plug-in estimate of I(X_i; X_{i+lag}) in bits.
pub fn mutual_information(data: &[u8], lag: usize) -> f64 {
    if lag == 0 || lag >= data.len() {
        return 0.0;
    }
    let n = (data.len() - lag) as u64;
    let mut joint = vec![0u64; 256 * 256];
    for (&x, &y) in data.iter().zip(&data[lag..]) {
        joint[x as usize * 256 + y as usize] += 1;
    }
    let hx = entropy_of(&histogram(&data[..data.len() - lag]), n);
    let hy = entropy_of(&histogram(&data[lag..]), n);
    (hx + hy - entropy_of(&joint, n)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MiPoint {
    pub lag: usize,
    /// Plug-in estimate on the data.
    pub raw: f64,
    /// Same estimate on a shuffled copy: the estimator's bias floor.
    pub control: f64,
    /// `raw − control`, floored at zero.
    pub corrected: f64,
}

/// Mutual information at lags `1..=max_lag`, with a shuffled control.
pub fn mutual_information_decay(data: &[u8], max_lag: usize, seed: u64) -> Vec<MiPoint> {
    let mut shuffled = data.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (1..=max_lag)
        .map(|lag| {
            let raw = mutual_information(data, lag);
            let control = mutual_information(&shuffled, lag);
            MiPoint {
                lag,
                raw,
                control,
                corrected: (raw - control).max(0.0),
            }
        })
        .collect()
}

/// Cosine similarity between the byte histograms of every pair of blocks.
/// A trailing partial block is ignored.
pub fn self_similarity_matrix(data: &[u8], block: usize) -> Vec<Vec<f64>> {
    if block == 0 {
        return Vec::new();
    }
    let hists: Vec<[u64; 256]> = data.chunks_exact(block).map(histogram).collect();
    let norms: Vec<f64> = hists
        .iter()
        .map(|h| h.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt())
        .collect();
    let n = hists.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = 1.0;
        for j in i + 1..n {
            let dot: f64 = hists[i].iter().zip(&hists[j]).map(|(&a, &b)| (a * b) as f64).sum();
            let s = dot / (norms[i] * norms[j]);
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    m
}
