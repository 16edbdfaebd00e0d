//! Daily-log report: a scenario row of trailing-window normalised
//! probabilities and an activity row of top-1 counts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ablation::xml_escape;
use crate::error::{Error, Result};

/// Minutes over which scenario probabilities are averaged.
pub const DEFAULT_HORIZON_MINUTES: f64 = 10.0;
/// Spacing of report buckets, minutes.
pub const DEFAULT_STEP_MINUTES: f64 = 1.0;

/// One window of the prediction stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    /// Stream time of the window start, seconds.
    pub time: f64,
    pub scenario_probabilities: Vec<f64>,
    pub activity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBucket {
    /// Bucket end, seconds; the bucket averages windows in `(end - horizon, end]`.
    pub end: f64,
    pub windows: usize,
    /// Renormalised to sum to one.
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityCount {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyLogReport {
    pub scenarios: Vec<String>,
    pub horizon_minutes: f64,
    pub step_minutes: f64,
    pub scenario_row: Vec<ScenarioBucket>,
    pub activity_row: Vec<ActivityCount>,
    pub windows: usize,
}

/// Builds the report from a time-ordered stream.
pub fn generate_daily_log(
    stream: &[WindowPrediction],
    scenarios: &[String],
    activities: &[String],
    horizon_minutes: f64,
    step_minutes: f64,
) -> Result<DailyLogReport> {
    if stream.is_empty() {
        return Err(Error::Empty("prediction stream"));
    }
    if !(horizon_minutes > 0.0 && step_minutes > 0.0) {
        return Err(Error::invalid("report horizon and step must be positive"));
    }
    for (i, w) in stream.iter().enumerate() {
        if w.scenario_probabilities.len() != scenarios.len() {
            return Err(Error::Shape(format!(
                "window {i} has {} scenario probabilities for {} scenarios",
                w.scenario_probabilities.len(),
                scenarios.len()
            )));
        }
        if w.activity >= activities.len() {
            return Err(Error::IndexOutOfRange {
                index: w.activity,
                len: activities.len(),
            });
        }
        if i > 0 && w.time < stream[i - 1].time {
            return Err(Error::invalid("prediction stream is not time ordered"));
        }
    }
    let horizon = horizon_minutes * 60.0;
    let step = step_minutes * 60.0;
    let t0 = stream[0].time;
    let last = stream[stream.len() - 1].time;
    let mut scenario_row = Vec::new();
    let mut lo = 0;
    let mut hi = 0;
    let mut k = 1.0;
    loop {
        let end = t0 + k * step;
        while hi < stream.len() && stream[hi].time < end {
            hi += 1;
        }
        while lo < hi && stream[lo].time < end - horizon {
            lo += 1;
        }
        if hi > lo {
            let mut mean = vec![0.0; scenarios.len()];
            for w in &stream[lo..hi] {
                for (m, p) in mean.iter_mut().zip(&w.scenario_probabilities) {
                    *m += p.max(0.0);
                }
            }
            let total: f64 = mean.iter().sum();
            let probabilities = if total > 0.0 {
                mean.iter().map(|m| m / total).collect()
            } else {
                vec![1.0 / scenarios.len() as f64; scenarios.len()]
            };
            scenario_row.push(ScenarioBucket {
                end,
                windows: hi - lo,
                probabilities,
            });
        }
        if end > last {
            break;
        }
        k += 1.0;
    }
    let mut counts = vec![0usize; activities.len()];
    for w in stream {
        counts[w.activity] += 1;
    }
    Ok(DailyLogReport {
        scenarios: scenarios.to_vec(),
        horizon_minutes,
        step_minutes,
        scenario_row,
        activity_row: activities
            .iter()
            .zip(counts)
            .map(|(name, count)| ActivityCount {
                name: name.clone(),
                count,
            })
            .collect(),
        windows: stream.len(),
    })
}

const PALETTE: [&str; 8] = ["#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#eeca3b", "#b279a2", "#9d755d"];

impl DailyLogReport {
    /// Two rows: stacked scenario probabilities over time, then the activity
    /// histogram.
    pub fn to_svg(&self) -> String {
        let (left, plot_w, row_h) = (60.0, 640.0, 180.0);
        let width = left + plot_w + 170.0;
        let height = 2.0 * row_h + 110.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<text x="10" y="20" font-weight="bold">Scenario</text>"#);
        let n = self.scenario_row.len().max(1);
        let bar = plot_w / n as f64;
        for (i, b) in self.scenario_row.iter().enumerate() {
            let mut y = 30.0 + row_h;
            for (c, p) in b.probabilities.iter().enumerate() {
                let h = p * row_h;
                y -= h;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
                    left + bar * i as f64,
                    bar,
                    PALETTE[c % PALETTE.len()]
                );
            }
        }
        if let (Some(first), Some(last)) = (self.scenario_row.first(), self.scenario_row.last()) {
            let y = 30.0 + row_h + 14.0;
            let _ = writeln!(s, r#"<text x="{left}" y="{y}">{:.0} min</text>"#, first.end / 60.0);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{y}" text-anchor="end">{:.0} min</text>"#,
                left + plot_w,
                last.end / 60.0
            );
        }
        for (c, name) in self.scenarios.iter().enumerate() {
            let y = 40.0 + 16.0 * c as f64;
            let x = left + plot_w + 12.0;
            let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[c % PALETTE.len()]);
            let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, xml_escape(name));
        }

        let top = 30.0 + row_h + 40.0;
        let _ = writeln!(s, r#"<text x="10" y="{}" font-weight="bold">Activity</text>"#, top - 10.0);
        let max = self.activity_row.iter().map(|a| a.count).max().unwrap_or(0).max(1) as f64;
        let m = self.activity_row.len().max(1);
        let bw = plot_w / m as f64;
        for (i, a) in self.activity_row.iter().enumerate() {
            let h = a.count as f64 / max * (row_h - 20.0);
            let x = left + bw * i as f64;
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="#4c78a8"/>"##,
                x + 2.0,
                top + row_h - 20.0 - h,
                bw - 4.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end" transform="rotate(-35 {:.2} {:.2})">{}</text>"#,
                x + bw / 2.0,
                top + row_h - 6.0,
                x + bw / 2.0,
                top + row_h - 6.0,
                xml_escape(&a.name)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                x + bw / 2.0,
                top + row_h - 24.0 - h,
                a.count
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn one_hot(c: usize, n: usize) -> Vec<f64> {
        (0..n).map(|i| if i == c { 0.9 } else { 0.05 }).collect()
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(generate_daily_log(&[], &names("s", 2), &names("a", 2), 10.0, 1.0).is_err());
    }

    #[test]
    fn single_scenario_is_certain_everywhere() {
        let stream: Vec<WindowPrediction> = (0..200)
            .map(|i| WindowPrediction {
                time: i as f64 * 15.0,
                scenario_probabilities: vec![0.0, 0.8, 0.0],
                activity: 0,
            })
            .collect();
        let r = generate_daily_log(&stream, &names("s", 3), &names("a", 1), 10.0, 1.0).unwrap();
        assert!(r.scenario_row.iter().all(|b| b.probabilities == vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn argmax_flips_within_the_horizon() {
        // 20 minutes of scenario 0, then 20 of scenario 1, one window per 15 s.
        let stream: Vec<WindowPrediction> = (0..160)
            .map(|i| WindowPrediction {
                time: i as f64 * 15.0,
                scenario_probabilities: one_hot(usize::from(i >= 80), 4),
                activity: i % 3,
            })
            .collect();
        let r = generate_daily_log(&stream, &names("s", 4), &names("a", 3), 10.0, 1.0).unwrap();
        let switch = 20.0 * 60.0;
        let flip = r
            .scenario_row
            .iter()
            .find(|b| b.end > switch && b.probabilities[1] > b.probabilities[0])
            .unwrap();
        assert!(flip.end - switch <= 600.0);
        for b in &r.scenario_row {
            assert!((b.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let top = if b.probabilities[0] > b.probabilities[1] { 0 } else { 1 };
            if b.end <= switch {
                assert_eq!(top, 0);
            }
            if b.end > switch + 600.0 {
                assert_eq!(top, 1);
            }
        }
        assert_eq!(r.activity_row.iter().map(|a| a.count).sum::<usize>(), 160);
        let svg = r.to_svg();
        assert!(svg.contains("Scenario") && svg.contains("Activity"));
    }

    #[test]
    fn out_of_order_or_malformed_streams_are_rejected() {
        let w = |t: f64, a: usize| WindowPrediction {
            time: t,
            scenario_probabilities: vec![0.5, 0.5],
            activity: a,
        };
        let s = names("s", 2);
        let a = names("a", 2);
        assert!(generate_daily_log(&[w(5.0, 0), w(1.0, 0)], &s, &a, 10.0, 1.0).is_err());
        assert!(generate_daily_log(&[w(0.0, 2)], &s, &a, 10.0, 1.0).is_err());
        assert!(generate_daily_log(&[w(0.0, 0)], &names("s", 3), &a, 10.0, 1.0).is_err());
    }
}
