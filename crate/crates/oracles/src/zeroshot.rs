//! Direct enumeration of the 256 classes with bit arithmetic.
//!
//! Bit layout: bit 7 is speaker A bin 1, bit 4 speaker A bin 4, bit 3
//! speaker B bin 1, bit 0 speaker B bin 4.

fn active(class: usize, speaker: usize, bin: usize) -> bool {
    let shift = 7 - (speaker * 4 + (bin - 1));
    (class >> shift) & 1 == 1
}

/// `(pA, pB)` by summing over all classes.
pub fn next_speaker(dist: &[f64], shift_bins: &[usize]) -> (f64, f64) {
    let mut ev = [0.0f64; 2];
    for (c, &p) in dist.iter().enumerate() {
        for s in 0..2 {
            if shift_bins.iter().all(|&b| active(c, s, b) && !active(c, 1 - s, b)) {
                ev[s] += p;
            }
        }
    }
    let total = ev[0] + ev[1];
    if total == 0.0 {
        (0.5, 0.5)
    } else {
        (ev[0] / total, ev[1] / total)
    }
}

pub fn backchannel(dist: &[f64], listener: usize, active_bins: &[usize], silent_bins: &[usize]) -> f64 {
    dist.iter()
        .enumerate()
        .filter(|&(c, _)| {
            active_bins.iter().any(|&b| active(c, listener, b))
                && silent_bins.iter().all(|&b| !active(c, listener, b))
        })
        .map(|(_, p)| p)
        .sum()
}

/// Fraction of the 256 classes satisfying the backchannel predicate.
pub fn backchannel_fraction(listener: usize, active_bins: &[usize], silent_bins: &[usize]) -> f64 {
    backchannel(&[1.0 / 256.0; 256], listener, active_bins, silent_bins)
}
