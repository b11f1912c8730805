//! Seeded random two-speaker activity rows with turns, pauses, overlaps and
//! short listener segments in varied proportions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fill(row: &mut [bool], start: usize, end: usize) {
    let end = end.min(row.len());
    for v in &mut row[start.min(end)..end] {
        *v = true;
    }
}

/// Two activity rows of `frames` frames at `hz` frames per second.
pub fn random_rows(seed: u64, frames: usize, hz: u32) -> (Vec<bool>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sec = |x: f64| (x * hz as f64).round() as usize;
    let mut rows = [vec![false; frames], vec![false; frames]];
    let mut speaker = rng.random_range(0..2usize);
    let mut t = sec(rng.random_range(0.0..2.0));
    while t < frames {
        let len = if rng.random_bool(0.15) {
            sec(rng.random_range(0.1..1.2))
        } else {
            sec(rng.random_range(0.8..7.0))
        }
        .max(1);
        fill(&mut rows[speaker], t, t + len);
        // listener feedback somewhere inside the turn
        if len > sec(1.0) && rng.random_bool(0.35) {
            let at = t + rng.random_range(0..len);
            let bc = sec(rng.random_range(0.1..1.3)).max(1);
            fill(&mut rows[1 - speaker], at, at + bc);
        }
        let end = t + len;
        match rng.random_range(0..10) {
            // pause, same speaker continues
            0..=3 => t = end + sec(rng.random_range(0.0..2.5)),
            // gap, other speaker takes over
            4..=7 => {
                speaker = 1 - speaker;
                t = end + sec(rng.random_range(0.0..3.0));
            }
            // overlapping takeover
            8 => {
                speaker = 1 - speaker;
                t = end.saturating_sub(sec(rng.random_range(0.05..1.0)));
            }
            // long lull
            _ => t = end + sec(rng.random_range(2.0..8.0)),
        }
    }
    let [a, b] = rows;
    (a, b)
}
