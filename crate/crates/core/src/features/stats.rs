//! Time-domain frame statistics and trajectory deltas.

/// Fraction of adjacent sample pairs whose sign differs, with zero treated
/// as positive. Value lies in [0, 1].
pub fn zcr_frame(frame: &[f64]) -> f64 {
    assert!(frame.len() >= 2, "zcr needs at least 2 samples");
    let neg = |x: f64| x < 0.0;
    let changes = frame
        .windows(2)
        .filter(|w| neg(w[0]) != neg(w[1]))
        .count();
    changes as f64 / (frame.len() - 1) as f64
}

/// Pearson kurtosis m4 / m2^2 about the frame mean; 0 when the variance is
/// degenerate (m2 < 1e-12). A Gaussian signal scores close to 3.
pub fn kurtosis_frame(frame: &[f64]) -> f64 {
    assert!(frame.len() >= 2, "kurtosis needs at least 2 samples");
    let n = frame.len() as f64;
    let mean = frame.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in frame {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 < 1e-12 {
        0.0
    } else {
        m4 / (m2 * m2)
    }
}

/// Regression-delta half window; deltas look two frames to each side.
const DELTA_HALF_WINDOW: usize = 2;

/// Appends velocity and acceleration rows to a static feature matrix.
///
/// Input is row-major (rows, cols) where columns are frames. Velocity is the
/// centred regression delta over ±2 frames with boundary columns replicated
/// at the edges; acceleration is the delta of the velocity. Output stacks
/// [static; velocity; acceleration] for a (3 * rows, cols) result.
pub fn append_deltas(matrix: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(matrix.len(), rows * cols);
    assert!(cols >= 1);
    let velocity = delta_rows(matrix, rows, cols);
    let acceleration = delta_rows(&velocity, rows, cols);
    let mut out = Vec::with_capacity(3 * rows * cols);
    out.extend_from_slice(matrix);
    out.extend_from_slice(&velocity);
    out.extend_from_slice(&acceleration);
    out
}

fn delta_rows(matrix: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let denom: f64 = 2.0
        * (1..=DELTA_HALF_WINDOW)
            .map(|n| (n * n) as f64)
            .sum::<f64>();
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &matrix[r * cols..(r + 1) * cols];
        let at = |t: isize| -> f64 {
            let t = t.clamp(0, cols as isize - 1) as usize;
            row[t]
        };
        for t in 0..cols {
            let mut num = 0.0;
            for n in 1..=DELTA_HALF_WINDOW as isize {
                num += n as f64 * (at(t as isize + n) - at(t as isize - n));
            }
            out[r * cols + t] = num / denom;
        }
    }
    out
}
