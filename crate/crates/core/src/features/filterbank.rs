//! Triangular filterbanks (mel-warped and linearly spaced) and the
//! orthonormal DCT used for cepstral coefficients.

/// Log energies are floored at this value before taking the logarithm so
/// silent frames stay finite.
pub const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// A bank of triangular filters over FFT power-spectrum bins.
pub struct Filterbank {
    /// Per filter: (first bin, weights over consecutive bins).
    filters: Vec<(usize, Vec<f64>)>,
    pub centers_hz: Vec<f64>,
}

impl Filterbank {
    /// `n_filters` triangles with mel-spaced centres spanning 0..sr/2.
    pub fn mel(n_filters: usize, fft_len: usize, sample_rate: u32) -> Self {
        let top = hz_to_mel(sample_rate as f64 / 2.0);
        let nodes: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
            .collect();
        Self::from_nodes(&nodes, fft_len, sample_rate)
    }

    /// `n_filters` triangles with linearly spaced centres over (0, sr/2).
    pub fn linear(n_filters: usize, fft_len: usize, sample_rate: u32) -> Self {
        let top = sample_rate as f64 / 2.0;
        let nodes: Vec<f64> = (0..n_filters + 2)
            .map(|i| top * i as f64 / (n_filters + 1) as f64)
            .collect();
        Self::from_nodes(&nodes, fft_len, sample_rate)
    }

    /// Builds triangles from n_filters + 2 frequency nodes: filter k rises
    /// from node k to node k+1 and falls to node k+2.
    fn from_nodes(nodes: &[f64], fft_len: usize, sample_rate: u32) -> Self {
        let n_bins = fft_len / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_len as f64;
        let n_filters = nodes.len() - 2;
        let mut filters = Vec::with_capacity(n_filters);
        for f in 0..n_filters {
            let (lo, mid, hi) = (nodes[f], nodes[f + 1], nodes[f + 2]);
            let first_bin = (lo / bin_hz).ceil().max(0.0) as usize;
            let last_bin = ((hi / bin_hz).floor() as usize).min(n_bins - 1);
            let mut weights = Vec::new();
            for bin in first_bin..=last_bin {
                let freq = bin as f64 * bin_hz;
                let w = if freq <= mid {
                    if mid - lo > 1e-12 {
                        (freq - lo) / (mid - lo)
                    } else {
                        1.0
                    }
                } else if hi - mid > 1e-12 {
                    (hi - freq) / (hi - mid)
                } else {
                    1.0
                };
                weights.push(w.max(0.0));
            }
            filters.push((first_bin, weights));
        }
        Filterbank {
            filters,
            centers_hz: nodes[1..=n_filters].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    /// Log filter energies of a power spectrum, floored at [`LOG_FLOOR`].
    pub fn log_energies(&self, power: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (first, weights) in &self.filters {
            let mut e = 0.0;
            for (i, w) in weights.iter().enumerate() {
                e += w * power[first + i];
            }
            out.push(e.max(LOG_FLOOR).ln());
        }
    }
}

/// Orthonormal type-II DCT matrix, rows = coefficients.
pub struct Dct {
    n: usize,
    matrix: Vec<f64>, // row-major n x n
}

impl Dct {
    pub fn new(n: usize) -> Self {
        let mut matrix = vec![0.0; n * n];
        for k in 0..n {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for t in 0..n {
                matrix[k * n + t] =
                    scale * (std::f64::consts::PI * (t as f64 + 0.5) * k as f64 / n as f64).cos();
            }
        }
        Dct { n, matrix }
    }

    pub fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        assert_eq!(input.len(), self.n);
        out.clear();
        for k in 0..self.n {
            let row = &self.matrix[k * self.n..(k + 1) * self.n];
            out.push(row.iter().zip(input).map(|(m, x)| m * x).sum());
        }
    }

    /// Returns max |D D^T - I| entry; used to verify orthonormality.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n)
                    .map(|t| self.matrix[i * n + t] * self.matrix[j * n + t])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}
