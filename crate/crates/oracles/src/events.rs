//! Brute-force turn-taking event scanner.
//!
//! Works on raw boolean rows and integer milliseconds and checks every
//! definition frame by frame, so it shares nothing with the production
//! extractor beyond the definitions themselves.

/// Event timing parameters in milliseconds.
#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    pub min_context_ms: u32,
    pub eval_offset_ms: u32,
    pub eval_duration_ms: u32,
    pub region_ms: u32,
    pub horizon_ms: u32,
    pub bc_max_ms: u32,
    pub bc_pre_ms: u32,
    pub bc_post_ms: u32,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            min_context_ms: 1000,
            eval_offset_ms: 50,
            eval_duration_ms: 100,
            region_ms: 500,
            horizon_ms: 2000,
            bc_max_ms: 1000,
            bc_pre_ms: 1000,
            bc_post_ms: 2000,
        }
    }
}

/// `(silence_start, silence_end, prev, next, eval_start, eval_end)`,
/// speakers as 0 (A) / 1 (B).
pub type OracleGap = (usize, usize, usize, usize, usize, usize);
/// `(start, end, speaker)`.
pub type OracleSpan = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleEvents {
    pub gaps: Vec<OracleGap>,
    pub backchannels: Vec<OracleSpan>,
    /// `(start, end, target)`
    pub shift_positives: Vec<OracleSpan>,
    pub shift_negative_candidates: Vec<OracleSpan>,
    pub bc_positives: Vec<OracleSpan>,
    pub bc_negative_candidates: Vec<OracleSpan>,
}

struct Scan<'a> {
    rows: [&'a [bool]; 2],
    step_ms: u32,
}

impl Scan<'_> {
    fn len(&self) -> usize {
        self.rows[0].len()
    }
    fn on(&self, s: usize, t: usize) -> bool {
        self.rows[s][t]
    }
    fn silent(&self, t: usize) -> bool {
        !self.on(0, t) && !self.on(1, t)
    }
    fn only(&self, s: usize, t: usize) -> bool {
        self.on(s, t) && !self.on(1 - s, t)
    }
    fn frames(&self, ms: u32) -> usize {
        (ms / self.step_ms) as usize
    }
}

pub fn scan(a: &[bool], b: &[bool], frame_rate_hz: u32, p: &OracleParams) -> OracleEvents {
    assert_eq!(a.len(), b.len());
    assert_eq!(1000 % frame_rate_hz, 0);
    let sc = Scan { rows: [a, b], step_ms: 1000 / frame_rate_hz };
    let n = sc.len();
    let ctx = sc.frames(p.min_context_ms);
    let region = sc.frames(p.region_ms);
    let horizon = sc.frames(p.horizon_ms);

    // gaps: every maximal mutual silence strictly inside the dialog
    let mut gaps = Vec::new();
    for s in 1..n {
        if !sc.silent(s) || sc.silent(s - 1) {
            continue;
        }
        let mut e = s;
        while e < n && sc.silent(e) {
            e += 1;
        }
        if e == n {
            continue;
        }
        let prev = (0..2).find(|&x| sc.only(x, s - 1));
        let next = (0..2).find(|&x| sc.only(x, e));
        let (Some(prev), Some(next)) = (prev, next) else { continue };
        if s < ctx || e + ctx > n {
            continue;
        }
        if !(s - ctx..s).all(|t| sc.only(prev, t)) || !(e..e + ctx).all(|t| sc.only(next, t)) {
            continue;
        }
        // frame k belongs to the eval window iff its center, in half
        // milliseconds, lies in [2 * (start + offset), 2 * (start + offset + dur))
        let step = sc.step_ms as usize;
        let lo = 2 * (s * step + p.eval_offset_ms as usize);
        let hi = lo + 2 * p.eval_duration_ms as usize;
        let members: Vec<usize> =
            (0..n).filter(|&k| (2 * k + 1) * step >= lo && (2 * k + 1) * step < hi).collect();
        let Some((&first, &last)) = members.first().zip(members.last()) else { continue };
        if last + 1 > e {
            continue;
        }
        gaps.push((s, e, prev, next, first, last + 1));
    }

    // backchannels: short segments with own-track silence around them
    let mut backchannels = Vec::new();
    let bc_max = sc.frames(p.bc_max_ms);
    let pre = sc.frames(p.bc_pre_ms);
    let post = sc.frames(p.bc_post_ms);
    for spk in 0..2 {
        for s in 0..n {
            if !sc.on(spk, s) || (s > 0 && sc.on(spk, s - 1)) {
                continue;
            }
            let mut e = s;
            while e < n && sc.on(spk, e) {
                e += 1;
            }
            if e - s > bc_max || s < pre || e + post > n {
                continue;
            }
            if (s - pre..s).any(|t| sc.on(spk, t)) || (e..e + post).any(|t| sc.on(spk, t)) {
                continue;
            }
            backchannels.push((s, e, spk));
        }
    }
    backchannels.sort_by_key(|&(s, _, spk)| (s, spk));

    let shift_positives: Vec<OracleSpan> = gaps
        .iter()
        .filter(|g| g.2 != g.3 && g.0 >= region && region > 0)
        .filter(|g| (g.0 - region..g.0).all(|t| sc.only(g.2, t)))
        .map(|g| (g.0 - region, g.0, g.3))
        .collect();
    let bc_positives: Vec<OracleSpan> = backchannels
        .iter()
        .filter(|b| b.0 >= region && region > 0)
        .map(|b| (b.0 - region, b.0, b.2))
        .collect();

    let excluded: Vec<(usize, usize)> = gaps
        .iter()
        .map(|g| (g.0.saturating_sub(region), g.0))
        .chain(backchannels.iter().map(|b| (b.0.saturating_sub(region), b.0)))
        .collect();
    let clashes = |a: usize| {
        excluded.iter().any(|&(zs, ze)| (a..a + region).any(|t| t >= zs && t < ze))
    };

    let mut shift_negative_candidates = Vec::new();
    let mut bc_negative_candidates = Vec::new();
    if region > 0 {
        for a in 0..n {
            if a + region + horizon > n || clashes(a) {
                continue;
            }
            for target in 0..2 {
                let talker = 1 - target;
                let quiet = (a..a + region + horizon).all(|t| !sc.on(target, t));
                if !quiet {
                    continue;
                }
                let talking = (a..a + region).all(|t| sc.on(talker, t));
                let silent = (a..a + region).all(|t| !sc.on(talker, t));
                if talking {
                    shift_negative_candidates.push((a, a + region, target));
                }
                if talking || silent {
                    bc_negative_candidates.push((a, a + region, target));
                }
            }
        }
    }

    OracleEvents {
        gaps,
        backchannels,
        shift_positives,
        shift_negative_candidates,
        bc_positives,
        bc_negative_candidates,
    }
}
