use serde::Serialize;

use super::metrics::auc;
use crate::ingest::StanceLabel;

pub const DAY_SECS: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub created_at: i64,
    pub score: f64,
    pub label: StanceLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowStat {
    pub window_start: i64,
    pub window_end: i64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Absent when the window lacks one of the classes.
    pub auc: Option<f64>,
}

/// The test period rounded out to whole UTC days: `[day(min), day(max) + 1)`.
pub fn day_aligned_period(preds: &[Prediction]) -> Option<(i64, i64)> {
    let min = preds.iter().map(|p| p.created_at).min()?;
    let max = preds.iter().map(|p| p.created_at).max()?;
    Some((
        min.div_euclid(DAY_SECS) * DAY_SECS,
        (max.div_euclid(DAY_SECS) + 1) * DAY_SECS,
    ))
}

/// AUC over half-open windows `[t, t + window)` advancing by `stride` over
/// `period`. Only windows lying fully inside the period are emitted; a
/// period shorter than one window yields a single window at its start.
pub fn sliding_window_over(preds: &[Prediction], period: (i64, i64), window: i64, stride: i64) -> Vec<WindowStat> {
    assert!(window > 0 && stride > 0);
    let (start, end) = period;
    let mut starts = Vec::new();
    let mut t = start;
    while t + window <= end {
        starts.push(t);
        t += stride;
    }
    if starts.is_empty() {
        starts.push(start);
    }
    starts
        .into_iter()
        .map(|s| {
            let e = s + window;
            let inside: Vec<&Prediction> = preds
                .iter()
                .filter(|p| p.created_at >= s && p.created_at < e)
                .collect();
            let scores: Vec<f64> = inside.iter().map(|p| p.score).collect();
            let pos: Vec<bool> = inside.iter().map(|p| p.label.is_positive()).collect();
            let n_pos = pos.iter().filter(|&&x| x).count();
            WindowStat {
                window_start: s,
                window_end: e,
                n_pos,
                n_neg: pos.len() - n_pos,
                auc: auc(&scores, &pos).ok(),
            }
        })
        .collect()
}

/// Sliding windows over the day-aligned test period, sizes in days.
pub fn sliding_window(preds: &[Prediction], window_days: u32, stride_days: u32) -> Vec<WindowStat> {
    match day_aligned_period(preds) {
        None => Vec::new(),
        Some(period) => sliding_window_over(
            preds,
            period,
            window_days as i64 * DAY_SECS,
            stride_days as i64 * DAY_SECS,
        ),
    }
}
