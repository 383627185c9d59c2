//! Iterative radix-2 FFT used for frame power spectra.

use std::f64::consts::PI;

/// Power-of-two FFT with precomputed twiddles and bit-reversal table.
pub struct Fft {
    n: usize,
    rev: Vec<usize>,
    // twiddles for each butterfly stage, concatenated
    twiddle_re: Vec<f64>,
    twiddle_im: Vec<f64>,
}

impl Fft {
    /// `n` must be a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "fft size must be a power of two");
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| (i.reverse_bits() >> (usize::BITS - bits)) as usize)
            .collect();
        let mut twiddle_re = Vec::new();
        let mut twiddle_im = Vec::new();
        let mut len = 2;
        while len <= n {
            for k in 0..len / 2 {
                let ang = -2.0 * PI * k as f64 / len as f64;
                twiddle_re.push(ang.cos());
                twiddle_im.push(ang.sin());
            }
            len <<= 1;
        }
        Fft {
            n,
            rev,
            twiddle_re,
            twiddle_im,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// In-place complex FFT over interleaved (re, im) buffers.
    fn transform(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i];
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        let mut tw_off = 0;
        while len <= n {
            let half = len / 2;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let wr = self.twiddle_re[tw_off + k];
                    let wi = self.twiddle_im[tw_off + k];
                    let i = start + k;
                    let j = i + half;
                    let tr = re[j] * wr - im[j] * wi;
                    let ti = re[j] * wi + im[j] * wr;
                    re[j] = re[i] - tr;
                    im[j] = im[i] - ti;
                    re[i] += tr;
                    im[i] += ti;
                }
            }
            tw_off += half;
            len <<= 1;
        }
    }

    /// Power spectrum |X_k|^2 of a real signal, bins 0..=n/2.
    ///
    /// The input may be shorter than the FFT size; it is zero-padded.
    pub fn power_spectrum(&self, signal: &[f64], out: &mut Vec<f64>) {
        assert!(signal.len() <= self.n);
        let mut re = vec![0.0; self.n];
        let mut im = vec![0.0; self.n];
        re[..signal.len()].copy_from_slice(signal);
        self.transform(&mut re, &mut im);
        out.clear();
        out.extend((0..=self.n / 2).map(|k| re[k] * re[k] + im[k] * im[k]));
    }
}
