//! Per-student trajectories: chronological strings of discretized
//! engagement, play proportion and IPI, one symbol per watched video.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{domain, Result};
use crate::stats::{bin_symbol, discretize, BinMode};

/// Metrics of one student on one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoObservation {
    pub student_id: String,
    pub video_id: String,
    /// Chronological sort key, usually the first click time.
    pub order: f64,
    /// Course week of the observation, 1-based.
    pub week: u32,
    pub engagement: f64,
    /// Video play proportion in percent.
    pub vpp: f64,
    pub ipi: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub student_id: String,
    pub videos: Vec<String>,
    pub weeks: Vec<u32>,
    /// `H`/`L` per video.
    pub engagement: Vec<String>,
    /// `VL`/`L`/`H`/`VH` per video.
    pub vpp: Vec<String>,
    pub ipi: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    fn kinds(&self) -> [(&'static str, &[String]); 3] {
        [("eng", &self.engagement), ("vpp", &self.vpp), ("ipi", &self.ipi)]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
    pub diagnostics: Vec<String>,
    pub vpp_cuts: Vec<f64>,
    pub ipi_cuts: Vec<f64>,
}

/// Discretizes and orders observations into one trajectory per student.
///
/// Engagement is split at the median separately for each video, since video
/// lengths differ; a video whose engagement values are all equal marks every
/// viewer `H`. Play proportion uses four equal-width bins and IPI four
/// equal-frequency bins over all observations. Students in `roster` without
/// any observation are reported and left out.
pub fn build_trajectories(obs: &[VideoObservation], roster: &[String]) -> Result<TrajectorySet> {
    let mut diagnostics = Vec::new();
    if obs.is_empty() {
        return domain("no observations to build trajectories from");
    }
    let mut eng_bin = vec![1usize; obs.len()];
    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        by_video.entry(&o.video_id).or_default().push(i);
    }
    for (video, idx) in &by_video {
        let vals: Vec<f64> = idx.iter().map(|i| obs[*i].engagement).collect();
        match discretize(&vals, BinMode::EqualFrequency, 2) {
            Ok(d) => {
                for (i, l) in idx.iter().zip(d.labels) {
                    eng_bin[*i] = l;
                }
            }
            Err(_) => diagnostics.push(format!("video {video}: engagement has one value; all viewers marked H")),
        }
    }
    let vpp_vals: Vec<f64> = obs.iter().map(|o| o.vpp).collect();
    let vpp = discretize(&vpp_vals, BinMode::EqualWidth, 4)?;
    if vpp.degenerate {
        diagnostics.push("play proportion is constant; every video is in the lowest bin".into());
    }
    let ipi_vals: Vec<f64> = obs.iter().map(|o| o.ipi).collect();
    let (ipi_labels, ipi_cuts) = match discretize(&ipi_vals, BinMode::EqualFrequency, 4) {
        Ok(d) => (d.labels, d.cuts),
        Err(_) => {
            diagnostics.push("IPI is constant; every video is in the lowest bin".into());
            (vec![0; obs.len()], Vec::new())
        }
    };

    let mut by_student: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        by_student.entry(&o.student_id).or_default().push(i);
    }
    let seen: BTreeSet<&str> = by_student.keys().copied().collect();
    for s in roster {
        if !seen.contains(s.as_str()) {
            diagnostics.push(format!("student {s} watched no videos; excluded"));
        }
    }
    let trajectories = by_student
        .into_iter()
        .map(|(student, mut idx)| {
            idx.sort_by(|a, b| {
                obs[*a]
                    .order
                    .total_cmp(&obs[*b].order)
                    .then_with(|| obs[*a].video_id.cmp(&obs[*b].video_id))
            });
            Trajectory {
                student_id: student.to_string(),
                videos: idx.iter().map(|i| obs[*i].video_id.clone()).collect(),
                weeks: idx.iter().map(|i| obs[*i].week).collect(),
                engagement: idx.iter().map(|i| bin_symbol(eng_bin[*i], 2)).collect(),
                vpp: idx.iter().map(|i| bin_symbol(vpp.labels[*i], 4)).collect(),
                ipi: idx.iter().map(|i| bin_symbol(ipi_labels[*i], 4)).collect(),
            }
        })
        .collect();
    Ok(TrajectorySet {
        trajectories,
        diagnostics,
        vpp_cuts: vpp.cuts,
        ipi_cuts,
    })
}

/// Counts of each length-`n` window, symbols concatenated.
pub fn symbol_ngrams(symbols: &[String], n: usize) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    if n == 0 {
        return out;
    }
    for w in symbols.windows(n) {
        *out.entry(w.concat()).or_insert(0) += 1;
    }
    out
}

/// Share of each symbol in the trajectory.
pub fn symbol_proportions(symbols: &[String]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for s in symbols {
        *out.entry(s.clone()).or_insert(0.0) += 1.0;
    }
    for v in out.values_mut() {
        *v /= symbols.len() as f64;
    }
    out
}

/// Features of the first `upto` videos of a trajectory: n-grams and length
/// over videos 0..upto−1, the symbols of the last of them, and symbol
/// proportions over all of them.
pub fn trajectory_features(t: &Trajectory, upto: usize, ngram_sizes: &[usize]) -> BTreeMap<String, f64> {
    let upto = upto.min(t.len());
    let mut f = BTreeMap::new();
    if upto == 0 {
        return f;
    }
    for (kind, symbols) in t.kinds() {
        let seen = &symbols[..upto];
        let history = &seen[..upto - 1];
        for &n in ngram_sizes {
            for (g, c) in symbol_ngrams(history, n) {
                f.insert(format!("traj:{kind}:ngram:{g}"), c as f64);
            }
        }
        f.insert(format!("traj:{kind}:len"), history.len() as f64);
        f.insert(format!("traj:{kind}:last:{}", seen[upto - 1]), 1.0);
        for (s, p) in symbol_proportions(seen) {
            f.insert(format!("traj:{kind}:prop:{s}"), p);
        }
    }
    f
}

/// One label per active week: 1 on the last active week when that week is
/// before `final_week`, 0 otherwise.
pub fn dropout_week_labels(active_weeks: &[u32], final_week: u32) -> Vec<(u32, usize)> {
    let weeks: BTreeSet<u32> = active_weeks.iter().copied().collect();
    let last = weeks.last().copied();
    weeks
        .iter()
        .map(|w| (*w, usize::from(Some(*w) == last && *w < final_week)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syms(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn proportions_of_hllhh() {
        let p = symbol_proportions(&syms("H L L H H"));
        assert!((p["H"] - 0.6).abs() < 1e-15);
        assert!((p["L"] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ngrams_of_hllhh() {
        let g = symbol_ngrams(&syms("H L L H H"), 4);
        assert_eq!(g.len(), 2);
        assert_eq!(g["HLLH"], 1);
        assert_eq!(g["LLHH"], 1);
    }

    fn obs(student: &str, video: &str, order: f64, eng: f64, vpp: f64, ipi: f64) -> VideoObservation {
        VideoObservation {
            student_id: student.into(),
            video_id: video.into(),
            order,
            week: 1,
            engagement: eng,
            vpp,
            ipi,
        }
    }

    #[test]
    fn per_video_engagement_split() {
        // v2 engagement is ten times v1's; each video is split on its own
        let o = vec![
            obs("a", "v1", 0.0, 10.0, 0.0, -3.0),
            obs("b", "v1", 0.0, 20.0, 50.0, 0.0),
            obs("a", "v2", 1.0, 100.0, 150.0, 2.0),
            obs("b", "v2", 1.0, 200.0, 200.0, 5.0),
            obs("c", "v1", 5.0, 20.0, 100.0, 1.0),
        ];
        let set = build_trajectories(&o, &["a".into(), "b".into(), "c".into(), "z".into()]).unwrap();
        assert_eq!(set.trajectories.len(), 3);
        let a = &set.trajectories[0];
        assert_eq!(a.engagement, syms("L L"));
        assert_eq!(a.vpp, syms("VL VH"));
        assert_eq!(set.trajectories[1].engagement, syms("H H"));
        assert_eq!(set.trajectories[2].len(), 1);
        assert_eq!(set.vpp_cuts, vec![50.0, 100.0, 150.0]);
        assert!(set.diagnostics.iter().any(|d| d.contains("student z")));
    }

    #[test]
    fn features_split_history_and_last() {
        let t = Trajectory {
            student_id: "s".into(),
            videos: (0..5).map(|i| i.to_string()).collect(),
            weeks: vec![1; 5],
            engagement: syms("H L L H H"),
            vpp: syms("VL VL L H VH"),
            ipi: syms("L L L L L"),
        };
        let f = trajectory_features(&t, 5, &[4]);
        assert_eq!(f["traj:eng:ngram:HLLH"], 1.0);
        assert!(!f.contains_key("traj:eng:ngram:LLHH"));
        assert_eq!(f["traj:eng:len"], 4.0);
        assert_eq!(f["traj:vpp:last:VH"], 1.0);
        assert!((f["traj:eng:prop:H"] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dropout_labels() {
        assert_eq!(dropout_week_labels(&[1, 2, 2, 4], 6), vec![(1, 0), (2, 0), (4, 1)]);
        assert_eq!(dropout_week_labels(&[3, 6], 6), vec![(3, 0), (6, 0)]);
    }
}
