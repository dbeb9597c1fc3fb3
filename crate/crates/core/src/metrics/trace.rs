use std::io::Write;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub me_score: f64,
    pub loss: f64,
    pub accuracy: f64,
}

/// ME score, loss and accuracy recorded over training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MEScoreTrace {
    rows: Vec<TraceRow>,
}

impl MEScoreTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::Contract(format!(
                    "trace steps must increase: {} after {}",
                    row.step, last.step
                )));
            }
        }
        if !(0.0..=1.0).contains(&row.me_score) {
            return Err(Error::Contract(format!("ME score {} outside [0, 1]", row.me_score)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// `(step, me_score)` points.
    pub fn scores(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.step as f64, r.me_score)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "me_score", "loss", "accuracy"])?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                crate::harness::format_number(r.me_score),
                crate::harness::format_number(r.loss),
                crate::harness::format_number(r.accuracy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// First x at which each threshold is crossed, in the order given.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdReport {
    pub smoothing: Option<usize>,
    pub entries: Vec<(f64, Option<f64>)>,
}

impl ThresholdReport {
    pub fn get(&self, threshold: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|(t, _)| *t == threshold)
            .and_then(|&(_, x)| x)
    }
}

/// For each threshold, the first `x` whose value (optionally a trailing mean
/// over `smoothing` points) is strictly below it. Missing values are skipped.
pub fn threshold_crossings(
    points: &[(f64, Option<f64>)],
    thresholds: &[f64],
    smoothing: Option<usize>,
) -> Result<ThresholdReport> {
    if points.is_empty() {
        return Err(Error::param("cannot scan an empty trace"));
    }
    if smoothing == Some(0) {
        return Err(Error::param("smoothing window must be positive"));
    }
    let present: Vec<(f64, f64)> = points.iter().filter_map(|&(x, v)| v.map(|v| (x, v))).collect();
    let w = smoothing.unwrap_or(1);
    let smoothed: Vec<(f64, f64)> = (0..present.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let win = &present[lo..=i];
            (present[i].0, win.iter().map(|p| p.1).sum::<f64>() / win.len() as f64)
        })
        .collect();
    let entries = thresholds
        .iter()
        .map(|&t| (t, smoothed.iter().find(|p| p.1 < t).map(|p| p.0)))
        .collect();
    Ok(ThresholdReport { smoothing, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn indexed(v: &[f64]) -> Vec<(f64, Option<f64>)> {
        v.iter().enumerate().map(|(i, &x)| ((i + 1) as f64, Some(x))).collect()
    }

    #[test]
    fn hand_scan() {
        let r = threshold_crossings(&indexed(&[0.9, 0.6, 0.4]), &[0.5, 0.1], None).unwrap();
        assert_eq!(r.get(0.5), Some(3.0));
        assert_eq!(r.get(0.1), None);
    }

    #[test]
    fn crossing_is_strict() {
        let r = threshold_crossings(&indexed(&[0.5, 0.5]), &[0.5], None).unwrap();
        assert_eq!(r.get(0.5), None);
    }

    #[test]
    fn smoothing_delays_a_dip() {
        let r = threshold_crossings(&indexed(&[1.0, 0.0, 1.0, 0.0, 0.0]), &[0.4], Some(2)).unwrap();
        assert_eq!(r.get(0.4), Some(5.0));
    }

    #[test]
    fn gaps_are_skipped() {
        let pts = vec![(1.0, Some(0.9)), (2.0, None), (3.0, Some(0.2))];
        assert_eq!(threshold_crossings(&pts, &[0.5], None).unwrap().get(0.5), Some(3.0));
    }

    #[test]
    fn empty_trace_is_rejected() {
        assert!(threshold_crossings(&[], &[0.5], None).is_err());
    }

    #[test]
    fn trace_enforces_its_invariants() {
        let mut t = MEScoreTrace::new();
        let row = |step, me_score| TraceRow { step, me_score, loss: 1.0, accuracy: 0.5 };
        t.push(row(1, 0.1)).unwrap();
        assert!(t.push(row(1, 0.1)).is_err());
        assert!(t.push(row(2, 1.5)).is_err());
        t.push(row(3, 0.05)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,me_score,loss,accuracy\n1,0.1,1,0.5\n3,0.05,1,0.5\n");
    }

    proptest! {
        #[test]
        fn steps_do_not_increase_as_thresholds_fall(
            v in prop::collection::vec(0.0f64..1.0, 1..60),
            w in 1usize..6,
        ) {
            let ts = [0.9, 0.7, 0.5, 0.3, 0.1];
            let r = threshold_crossings(&indexed(&v), &ts, Some(w)).unwrap();
            let mut prev = 0.0;
            let mut absent = false;
            for (_, x) in &r.entries {
                match x {
                    Some(x) => { prop_assert!(!absent); prop_assert!(*x >= prev); prev = *x; }
                    None => absent = true,
                }
            }
        }
    }
}
