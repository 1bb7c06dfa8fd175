//! Level-1 encoding: raw player events to video watching state sequences.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{domain, Error, Result};

/// Default gap (seconds) below which consecutive same-direction seeks form a scroll.
pub const DEFAULT_SCROLL_WINDOW: f64 = 1.0;

/// One of the eight encoded click operations.
///
/// The declaration order is the canonical state order used by transition
/// matrices and feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClickOp {
    Pl,
    Pa,
    Sf,
    SSf,
    Sb,
    SSb,
    Rf,
    Rs,
}

impl ClickOp {
    pub const ALL: [ClickOp; 8] = [
        ClickOp::Pl,
        ClickOp::Pa,
        ClickOp::Sf,
        ClickOp::SSf,
        ClickOp::Sb,
        ClickOp::SSb,
        ClickOp::Rf,
        ClickOp::Rs,
    ];

    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClickOp> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClickOp::Pl => "Pl",
            ClickOp::Pa => "Pa",
            ClickOp::Sf => "Sf",
            ClickOp::SSf => "SSf",
            ClickOp::Sb => "Sb",
            ClickOp::SSb => "SSb",
            ClickOp::Rf => "Rf",
            ClickOp::Rs => "Rs",
        }
    }

    pub fn is_seek(self) -> bool {
        matches!(self, ClickOp::Sf | ClickOp::SSf | ClickOp::Sb | ClickOp::SSb)
    }

    pub fn is_play_or_pause(self) -> bool {
        matches!(self, ClickOp::Pl | ClickOp::Pa)
    }
}

impl fmt::Display for ClickOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClickOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClickOp::ALL
            .iter()
            .copied()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown click operation {s:?}")))
    }
}

/// Parses a comma-joined token string such as `Pl,Pa,SSf`.
pub fn parse_tokens(s: &str) -> Result<Vec<ClickOp>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

/// Parses a concatenated symbol string such as `PlPaSSfSb`.
///
/// Longest match first, so `SSf` is never read as `S` + `Sf`.
pub fn parse_concatenated(s: &str) -> Result<Vec<ClickOp>> {
    let mut rest = s.trim();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let op = [ClickOp::SSf, ClickOp::SSb]
            .into_iter()
            .chain(ClickOp::ALL)
            .find(|op| rest.starts_with(op.as_str()))
            .ok_or_else(|| Error::Domain(format!("cannot tokenize {rest:?}")))?;
        out.push(op);
        rest = &rest[op.as_str().len()..];
    }
    Ok(out)
}

/// Joins tokens with commas (the unambiguous wire form).
pub fn join_tokens(tokens: &[ClickOp]) -> String {
    let mut s = String::with_capacity(tokens.len() * 3);
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(t.as_str());
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Play,
    Pause,
    Seek,
    Ratechange,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Play => "play",
            EventKind::Pause => "pause",
            EventKind::Seek => "seek",
            EventKind::Ratechange => "ratechange",
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "play" => Ok(EventKind::Play),
            "pause" => Ok(EventKind::Pause),
            "seek" => Ok(EventKind::Seek),
            "ratechange" => Ok(EventKind::Ratechange),
            other => domain(format!("unknown event kind {other:?}")),
        }
    }
}

/// One raw player event.
///
/// `rate` is the playback multiplier in effect after the event: the record's
/// own value on a ratechange, carried forward from the previous ratechange of
/// the same student-video otherwise (1.0 before any ratechange).
#[derive(Debug, Clone, PartialEq)]
pub struct ClickEvent {
    pub student_id: String,
    pub video_id: String,
    pub wall_time: f64,
    pub kind: EventKind,
    pub pos_from: Option<f64>,
    pub pos_to: Option<f64>,
    pub rate: f64,
    /// Optional video duration carried by the record.
    pub video_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parsed events plus the per-line report of rejected records.
#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    /// Sorted by (student, video, wall_time); ties keep input order.
    pub events: Vec<ClickEvent>,
    pub diagnostics: Vec<LineDiagnostic>,
}

fn field_id(obj: &serde_json::Map<String, Value>, key: &str) -> std::result::Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(format!("field `{key}` must be a non-empty string")),
        None => Err(format!("missing field `{key}`")),
    }
}

fn field_num(obj: &serde_json::Map<String, Value>, key: &str) -> std::result::Result<Option<f64>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => match n.as_f64() {
            Some(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(format!("field `{key}` is not a finite number")),
        },
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| format!("field `{key}` is not a finite number")),
        Some(_) => Err(format!("field `{key}` must be numeric")),
    }
}

struct RawEvent {
    student_id: String,
    video_id: String,
    t: f64,
    kind: EventKind,
    pos_from: Option<f64>,
    pos_to: Option<f64>,
    rate: Option<f64>,
    video_length: Option<f64>,
}

fn parse_record(line: &str) -> std::result::Result<RawEvent, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let student_id = field_id(obj, "student_id")?;
    let video_id = field_id(obj, "video_id")?;
    let t = field_num(obj, "t")?.ok_or("missing field `t`")?;
    let kind = match obj.get("event") {
        Some(Value::String(s)) => s.parse::<EventKind>().map_err(|e| e.to_string())?,
        Some(_) => return Err("field `event` must be a string".into()),
        None => return Err("missing field `event`".into()),
    };
    let pos_from = field_num(obj, "pos_from")?;
    let pos_to = field_num(obj, "pos_to")?;
    let rate = field_num(obj, "rate")?;
    let video_length = field_num(obj, "video_length")?;
    match kind {
        EventKind::Seek if pos_from.is_none() || pos_to.is_none() => {
            return Err("seek record needs both `pos_from` and `pos_to`".into())
        }
        EventKind::Ratechange => match rate {
            None => return Err("ratechange record missing `rate`".into()),
            Some(r) if r <= 0.0 => return Err(format!("rate must be positive, got {r}")),
            _ => {}
        },
        _ => {}
    }
    Ok(RawEvent {
        student_id,
        video_id,
        t,
        kind,
        pos_from,
        pos_to,
        rate,
        video_length,
    })
}

/// Parses a line-delimited JSON event log.
///
/// Blank lines and lines starting with `#` are skipped. Records that violate
/// the schema are reported in [`ParsedLog::diagnostics`] with their 1-based
/// line number and excluded from the result.
pub fn parse_event_log(input: &str) -> ParsedLog {
    let mut raw = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_record(trimmed) {
            Ok(ev) => raw.push(ev),
            Err(message) => diagnostics.push(LineDiagnostic { line: i + 1, message }),
        }
    }
    finish(raw, diagnostics)
}

/// Streaming variant of [`parse_event_log`].
pub fn read_event_log<R: BufRead>(reader: R) -> Result<ParsedLog> {
    let mut raw = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_record(trimmed) {
            Ok(ev) => raw.push(ev),
            Err(message) => diagnostics.push(LineDiagnostic { line: i + 1, message }),
        }
    }
    Ok(finish(raw, diagnostics))
}

fn finish(mut raw: Vec<RawEvent>, diagnostics: Vec<LineDiagnostic>) -> ParsedLog {
    raw.sort_by(|a, b| {
        a.student_id
            .cmp(&b.student_id)
            .then_with(|| a.video_id.cmp(&b.video_id))
            .then_with(|| a.t.total_cmp(&b.t))
    });
    let mut events = Vec::with_capacity(raw.len());
    let mut rate = 1.0;
    let mut prev_key: Option<(String, String)> = None;
    for ev in raw {
        let same = prev_key
            .as_ref()
            .is_some_and(|(s, v)| *s == ev.student_id && *v == ev.video_id);
        if !same {
            rate = 1.0;
            prev_key = Some((ev.student_id.clone(), ev.video_id.clone()));
        }
        if ev.kind == EventKind::Ratechange {
            rate = ev.rate.expect("validated");
        }
        events.push(ClickEvent {
            student_id: ev.student_id,
            video_id: ev.video_id,
            wall_time: ev.t,
            kind: ev.kind,
            pos_from: ev.pos_from,
            pos_to: ev.pos_to,
            rate,
            video_length: ev.video_length,
        });
    }
    ParsedLog { events, diagnostics }
}

/// Events of one (student, video) pair.
#[derive(Debug, Clone)]
pub struct EventGroup<'a> {
    pub student_id: &'a str,
    pub video_id: &'a str,
    pub events: &'a [ClickEvent],
}

/// Splits key-sorted events into per-(student, video) groups.
pub fn group_events(events: &[ClickEvent]) -> Vec<EventGroup<'_>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=events.len() {
        let boundary = i == events.len()
            || events[i].student_id != events[start].student_id
            || events[i].video_id != events[start].video_id;
        if boundary {
            groups.push(EventGroup {
                student_id: &events[start].student_id,
                video_id: &events[start].video_id,
                events: &events[start..i],
            });
            start = i;
        }
    }
    groups
}

/// A student's encoded interaction with one video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vwss {
    pub student_id: String,
    pub video_id: String,
    pub tokens: Vec<ClickOp>,
    /// Wall-clock time of each token; a scroll is stamped at its first seek.
    pub token_times: Vec<f64>,
    /// Playback multiplier in effect after each token.
    pub token_rates: Vec<f64>,
    /// Video duration in seconds; 0 when the log carried none.
    pub video_length: f64,
    pub played_seconds: f64,
    /// Total video seconds skipped by forward seeks.
    pub jumped_forward: f64,
    /// Total video seconds rewound by backward seeks.
    pub jumped_backward: f64,
    /// Ratechange events dropped because the rate did not change.
    pub dropped_ratechanges: usize,
}

impl Vwss {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Time from each token to the next; the final token dwells 0.
    pub fn dwell_times(&self) -> Vec<f64> {
        let n = self.token_times.len();
        (0..n)
            .map(|i| {
                if i + 1 < n {
                    self.token_times[i + 1] - self.token_times[i]
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn dwell_where(&self, pred: impl Fn(ClickOp) -> bool) -> f64 {
        self.dwell_times()
            .iter()
            .zip(&self.tokens)
            .filter(|(_, op)| pred(**op))
            .map(|(d, _)| d)
            .sum()
    }

    pub fn pause_time(&self) -> f64 {
        self.dwell_where(|op| op == ClickOp::Pa)
    }

    pub fn seek_dwell_time(&self) -> f64 {
        self.dwell_where(ClickOp::is_seek)
    }

    pub fn seek_forward_dwell(&self) -> f64 {
        self.dwell_where(|op| matches!(op, ClickOp::Sf | ClickOp::SSf))
    }

    pub fn seek_backward_dwell(&self) -> f64 {
        self.dwell_where(|op| matches!(op, ClickOp::Sb | ClickOp::SSb))
    }

    /// Mean of `token_rates`; nominal 1.0 for an empty sequence.
    pub fn mean_rate(&self) -> f64 {
        if self.token_rates.is_empty() {
            1.0
        } else {
            self.token_rates.iter().sum::<f64>() / self.token_rates.len() as f64
        }
    }

    pub fn op_counts(&self) -> [usize; ClickOp::COUNT] {
        let mut counts = [0; ClickOp::COUNT];
        for op in &self.tokens {
            counts[op.index()] += 1;
        }
        counts
    }

    pub fn first_time(&self) -> Option<f64> {
        self.token_times.first().copied()
    }
}

/// An encoded token before grouping into a [`Vwss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedToken {
    pub op: ClickOp,
    pub time: f64,
    pub rate: f64,
}

/// Collapses runs of two or more same-direction seeks whose successive gaps
/// are below `window` into a single scroll token stamped at the run start.
///
/// Only `Sf`/`Sb` tokens take part; applying the rule twice is a no-op.
pub fn collapse_scrolls(tokens: &[TimedToken], window: f64) -> Vec<TimedToken> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        if !matches!(tok.op, ClickOp::Sf | ClickOp::Sb) {
            out.push(tok);
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < tokens.len() && tokens[j].op == tok.op && tokens[j].time - tokens[j - 1].time < window {
            j += 1;
        }
        if j - i >= 2 {
            let op = if tok.op == ClickOp::Sf { ClickOp::SSf } else { ClickOp::SSb };
            out.push(TimedToken {
                op,
                time: tok.time,
                rate: tokens[j - 1].rate,
            });
        } else {
            out.push(tok);
        }
        i = j;
    }
    out
}

/// Encodes the time-sorted events of one student-video into a [`Vwss`].
pub fn encode_vwss(events: &[ClickEvent], scroll_window: f64) -> Result<Vwss> {
    let first = match events.first() {
        Some(e) => e,
        None => return domain("cannot encode an empty event group"),
    };
    if !(scroll_window > 0.0) {
        return domain(format!("scroll window must be positive, got {scroll_window}"));
    }
    if events
        .iter()
        .any(|e| e.student_id != first.student_id || e.video_id != first.video_id)
    {
        return domain("events span more than one (student, video) pair");
    }
    if events.windows(2).any(|w| w[1].wall_time < w[0].wall_time) {
        return domain("events are not time-sorted");
    }

    let mut raw = Vec::with_capacity(events.len());
    let mut prev_rate = 1.0;
    let mut dropped = 0;
    let mut played = 0.0;
    let mut play_start: Option<f64> = None;
    let mut video_length: f64 = 0.0;
    let (mut jumped_forward, mut jumped_backward) = (0.0, 0.0);

    for ev in events {
        if let Some(len) = ev.video_length {
            video_length = video_length.max(len);
        }
        let op = match ev.kind {
            EventKind::Play => {
                play_start.get_or_insert(ev.wall_time);
                Some(ClickOp::Pl)
            }
            EventKind::Pause | EventKind::Seek => {
                if let Some(start) = play_start.take() {
                    played += ev.wall_time - start;
                }
                if ev.kind == EventKind::Pause {
                    Some(ClickOp::Pa)
                } else {
                    let from = ev.pos_from.unwrap_or(0.0);
                    let to = ev.pos_to.unwrap_or(0.0);
                    if to > from {
                        jumped_forward += to - from;
                    } else {
                        jumped_backward += from - to;
                    }
                    Some(if to > from { ClickOp::Sf } else { ClickOp::Sb })
                }
            }
            EventKind::Ratechange => {
                let op = if ev.rate > prev_rate {
                    Some(ClickOp::Rf)
                } else if ev.rate < prev_rate {
                    Some(ClickOp::Rs)
                } else {
                    dropped += 1;
                    None
                };
                prev_rate = ev.rate;
                op
            }
        };
        if let Some(op) = op {
            raw.push(TimedToken {
                op,
                time: ev.wall_time,
                rate: ev.rate,
            });
        }
    }

    let collapsed = collapse_scrolls(&raw, scroll_window);
    Ok(Vwss {
        student_id: first.student_id.clone(),
        video_id: first.video_id.clone(),
        tokens: collapsed.iter().map(|t| t.op).collect(),
        token_times: collapsed.iter().map(|t| t.time).collect(),
        token_rates: collapsed.iter().map(|t| t.rate).collect(),
        video_length,
        played_seconds: played,
        jumped_forward,
        jumped_backward,
        dropped_ratechanges: dropped,
    })
}

/// Parses and encodes a whole log, one [`Vwss`] per (student, video),
/// sorted by key. Groups are encoded in parallel.
pub fn encode_log(log: &ParsedLog, scroll_window: f64) -> Result<Vec<Vwss>> {
    let groups = group_events(&log.events);
    crate::exec::map(&groups, |g| encode_vwss(g.events, scroll_window))
        .into_iter()
        .collect()
}

/// Which engagement definition to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementVariant {
    /// (play + pause + seek dwell) × mean rate.
    #[default]
    Full,
    /// (pause + seek dwell) × mean rate.
    PauseSeekOnly,
}

impl FromStr for EngagementVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EngagementVariant::Full),
            "pause_seek_only" => Ok(EngagementVariant::PauseSeekOnly),
            other => domain(format!("unknown engagement variant {other:?}")),
        }
    }
}

/// Rate-scaled interaction time in seconds.
pub fn compute_engagement(v: &Vwss, variant: EngagementVariant) -> f64 {
    if v.tokens.is_empty() {
        return 0.0;
    }
    let mut base = v.pause_time() + v.seek_dwell_time();
    if variant == EngagementVariant::Full {
        base += v.played_seconds;
    }
    (base * v.mean_rate()).max(0.0)
}

/// Played length over video length, rate-scaled, in percent. May exceed 100.
pub fn compute_play_proportion(v: &Vwss) -> Result<f64> {
    if !(v.video_length > 0.0) {
        return domain(format!(
            "video length must be positive for {}/{}",
            v.student_id, v.video_id
        ));
    }
    if v.played_seconds == 0.0 {
        return Ok(0.0);
    }
    Ok(v.played_seconds / v.video_length * v.mean_rate() * 100.0)
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub const VWSS_COLUMNS: [&str; 11] = [
    "student_id",
    "video_id",
    "video_length",
    "played_seconds",
    "jumped_forward",
    "jumped_backward",
    "n_tokens",
    "tokens",
    "token_times",
    "token_rates",
    "dropped_ratechanges",
];

/// One row of the Vwss table, in [`VWSS_COLUMNS`] order.
pub fn vwss_record(v: &Vwss) -> Vec<String> {
    vec![
        v.student_id.clone(),
        v.video_id.clone(),
        v.video_length.to_string(),
        v.played_seconds.to_string(),
        v.jumped_forward.to_string(),
        v.jumped_backward.to_string(),
        v.tokens.len().to_string(),
        join_tokens(&v.tokens),
        join_f64(&v.token_times),
        join_f64(&v.token_rates),
        v.dropped_ratechanges.to_string(),
    ]
}

/// Writes the Vwss table as tab-separated values.
pub fn write_vwss_table<W: Write>(out: W, rows: &[Vwss]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(VWSS_COLUMNS)?;
    for v in rows {
        w.write_record(vwss_record(v))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, kind: EventKind) -> ClickEvent {
        ClickEvent {
            student_id: "s".into(),
            video_id: "v".into(),
            wall_time: t,
            kind,
            pos_from: None,
            pos_to: None,
            rate: 1.0,
            video_length: Some(1000.0),
        }
    }

    fn seek(t: f64, from: f64, to: f64) -> ClickEvent {
        ClickEvent {
            pos_from: Some(from),
            pos_to: Some(to),
            ..ev(t, EventKind::Seek)
        }
    }

    fn rc(t: f64, rate: f64) -> ClickEvent {
        ClickEvent {
            rate,
            ..ev(t, EventKind::Ratechange)
        }
    }

    #[test]
    fn parses_one_play_record() {
        let log = parse_event_log(r#"{"student_id":"a","video_id":"v1","t":3.5,"event":"play"}"#);
        assert!(log.diagnostics.is_empty());
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.events[0].kind, EventKind::Play);
        assert_eq!(log.events[0].rate, 1.0);
    }

    #[test]
    fn ratechange_without_rate_is_reported() {
        let input = "{\"student_id\":\"a\",\"video_id\":\"v\",\"t\":1,\"event\":\"play\"}\n\
                     {\"student_id\":\"a\",\"video_id\":\"v\",\"t\":2,\"event\":\"ratechange\"}";
        let log = parse_event_log(input);
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.diagnostics.len(), 1);
        assert_eq!(log.diagnostics[0].line, 2);
        assert!(log.diagnostics[0].message.contains("rate"));
    }

    #[test]
    fn schema_violations_carry_line_numbers() {
        let input = "not json\n\n{\"student_id\":\"a\",\"video_id\":\"v\",\"t\":1,\"event\":\"jump\"}\n\
                     {\"student_id\":\"a\",\"video_id\":\"v\",\"t\":1,\"event\":\"seek\",\"pos_from\":3}\n\
                     {\"video_id\":\"v\",\"t\":1,\"event\":\"play\"}";
        let log = parse_event_log(input);
        assert!(log.events.is_empty());
        let lines: Vec<usize> = log.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![1, 3, 4, 5]);
    }

    #[test]
    fn empty_input_is_empty() {
        let log = parse_event_log("");
        assert!(log.events.is_empty() && log.diagnostics.is_empty());
    }

    #[test]
    fn unknown_fields_are_ignored_and_seeks_kept_separate() {
        let input = "{\"student_id\":\"a\",\"video_id\":\"v\",\"t\":5.4,\"event\":\"seek\",\"pos_from\":40,\"pos_to\":70,\"ua\":\"x\"}\n\
                     {\"student_id\":\"a\",\"video_id\":\"v\",\"t\":5.0,\"event\":\"seek\",\"pos_from\":10,\"pos_to\":40}";
        let log = parse_event_log(input);
        assert_eq!(log.events.len(), 2);
        assert_eq!(log.events[0].wall_time, 5.0);
        assert_eq!(log.events[1].wall_time, 5.4);
    }

    #[test]
    fn rate_is_carried_forward_per_group() {
        let input = "{\"student_id\":\"a\",\"video_id\":\"v\",\"t\":1,\"event\":\"ratechange\",\"rate\":1.5}\n\
                     {\"student_id\":\"a\",\"video_id\":\"v\",\"t\":2,\"event\":\"play\"}\n\
                     {\"student_id\":\"a\",\"video_id\":\"w\",\"t\":3,\"event\":\"play\"}";
        let log = parse_event_log(input);
        assert_eq!(log.events[1].rate, 1.5);
        assert_eq!(log.events[2].rate, 1.0);
        assert_eq!(group_events(&log.events).len(), 2);
    }

    #[test]
    fn close_forward_seeks_become_a_scroll() {
        let v = encode_vwss(&[seek(5.0, 10.0, 40.0), seek(5.6, 40.0, 70.0)], 1.0).unwrap();
        assert_eq!(v.tokens, vec![ClickOp::SSf]);
        assert_eq!(v.token_times, vec![5.0]);
    }

    #[test]
    fn ratechanges_compare_with_previous_rate() {
        let v = encode_vwss(&[ev(0.0, EventKind::Play), rc(1.0, 1.5), rc(2.0, 1.0)], 1.0).unwrap();
        assert_eq!(v.tokens, vec![ClickOp::Pl, ClickOp::Rf, ClickOp::Rs]);
        assert_eq!(v.token_rates, vec![1.0, 1.5, 1.0]);
    }

    #[test]
    fn opposite_direction_seeks_never_collapse() {
        let v = encode_vwss(&[seek(5.0, 40.0, 10.0), seek(5.5, 70.0, 90.0)], 1.0).unwrap();
        assert_eq!(v.tokens, vec![ClickOp::Sb, ClickOp::Sf]);
    }

    #[test]
    fn scroll_chains_on_successive_gaps() {
        let evs = [seek(0.0, 0.0, 1.0), seek(0.9, 1.0, 2.0), seek(1.8, 2.0, 3.0), seek(3.0, 3.0, 4.0)];
        let v = encode_vwss(&evs, 1.0).unwrap();
        assert_eq!(v.tokens, vec![ClickOp::SSf, ClickOp::Sf]);
        // exactly one window apart is not "within" the window
        let v = encode_vwss(&[seek(0.0, 5.0, 1.0), seek(1.0, 5.0, 1.0)], 1.0).unwrap();
        assert_eq!(v.tokens, vec![ClickOp::Sb, ClickOp::Sb]);
    }

    #[test]
    fn equal_rate_change_is_dropped_and_tallied() {
        let v = encode_vwss(&[rc(0.0, 1.0), rc(1.0, 1.25), rc(2.0, 1.25)], 1.0).unwrap();
        assert_eq!(v.tokens, vec![ClickOp::Rf]);
        assert_eq!(v.dropped_ratechanges, 2);
    }

    #[test]
    fn mixed_groups_are_rejected() {
        let mut other = ev(1.0, EventKind::Play);
        other.video_id = "w".into();
        assert!(encode_vwss(&[ev(0.0, EventKind::Play), other], 1.0).is_err());
        assert!(encode_vwss(&[], 1.0).is_err());
    }

    #[test]
    fn played_seconds_accumulate_between_play_and_stop() {
        let evs = [
            ev(0.0, EventKind::Play),
            ev(350.0, EventKind::Pause),
            ev(450.0, EventKind::Play),
            seek(800.0, 500.0, 520.0),
            ev(810.0, EventKind::Play),
        ];
        let v = encode_vwss(&evs, 1.0).unwrap();
        assert_eq!(v.played_seconds, 700.0);
        assert_eq!(v.pause_time(), 100.0);
        assert_eq!(v.seek_dwell_time(), 10.0);
    }

    #[test]
    fn jump_totals() {
        let evs = vec![seek(0.0, 10.0, 70.0), seek(5.0, 70.0, 20.0), seek(9.0, 20.0, 25.0)];
        let v = encode_vwss(&evs, 1.0).unwrap();
        assert_eq!(v.jumped_forward, 65.0);
        assert_eq!(v.jumped_backward, 50.0);
    }

    fn worked_example() -> Vwss {
        Vwss {
            student_id: "s".into(),
            video_id: "v".into(),
            tokens: vec![ClickOp::Pl, ClickOp::Pa, ClickOp::Pl, ClickOp::Pa, ClickOp::Pl],
            token_times: vec![0.0, 350.0, 450.0, 800.0, 900.0],
            token_rates: vec![1.5; 5],
            video_length: 1000.0,
            played_seconds: 700.0,
            ..Default::default()
        }
    }

    #[test]
    fn engagement_worked_example() {
        assert_eq!(compute_engagement(&worked_example(), EngagementVariant::Full), 1350.0);
        assert_eq!(compute_engagement(&worked_example(), EngagementVariant::PauseSeekOnly), 300.0);
    }

    #[test]
    fn engagement_of_empty_sequence_is_zero() {
        let mut v = worked_example();
        v.tokens.clear();
        v.token_times.clear();
        v.token_rates.clear();
        assert_eq!(compute_engagement(&v, EngagementVariant::Full), 0.0);
    }

    #[test]
    fn pause_only_engagement() {
        let v = Vwss {
            tokens: vec![ClickOp::Pa, ClickOp::Pl],
            token_times: vec![0.0, 50.0],
            token_rates: vec![1.0, 1.0],
            played_seconds: 0.0,
            ..worked_example()
        };
        assert_eq!(compute_engagement(&v, EngagementVariant::PauseSeekOnly), 50.0);
    }

    #[test]
    fn play_proportion() {
        let mut v = worked_example();
        v.token_rates = vec![1.0; 5];
        v.played_seconds = 500.0;
        assert_eq!(compute_play_proportion(&v).unwrap(), 50.0);
        v.token_rates = vec![1.6; 5];
        v.played_seconds = 1000.0;
        assert!((compute_play_proportion(&v).unwrap() - 160.0).abs() < 1e-9);
        v.played_seconds = 0.0;
        assert_eq!(compute_play_proportion(&v).unwrap(), 0.0);
        v.video_length = 0.0;
        assert!(compute_play_proportion(&v).is_err());
    }

    #[test]
    fn token_string_round_trip() {
        let toks = parse_concatenated("PlPaSSfSfSbSSbRfRs").unwrap();
        use ClickOp::*;
        assert_eq!(toks, vec![Pl, Pa, SSf, Sf, Sb, SSb, Rf, Rs]);
        assert_eq!(parse_tokens(&join_tokens(&toks)).unwrap(), toks);
        assert!(parse_concatenated("PlX").is_err());
    }
}
