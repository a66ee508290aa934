//! RTTM segment files: `SPEAKER <file> 1 <onset> <dur> <NA> <NA> <spk> <NA> <NA>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub speaker: String,
    pub onset: f64,
    pub dur: f64,
}

impl Segment {
    pub fn end(&self) -> f64 {
        self.onset + self.dur
    }
}

/// Segments grouped by recording id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentSet {
    pub recordings: BTreeMap<String, Vec<Segment>>,
}

impl SegmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, recording: &str, speaker: &str, onset: f64, dur: f64) {
        self.recordings
            .entry(recording.to_string())
            .or_default()
            .push(Segment {
                speaker: speaker.to_string(),
                onset,
                dur,
            });
    }

    pub fn speakers(&self, recording: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .recordings
            .get(recording)
            .map(|segs| segs.iter().map(|s| s.speaker.clone()).collect())
            .unwrap_or_default();
        out.sort();
        out.dedup();
        out
    }

    pub fn total_speech(&self) -> f64 {
        self.recordings
            .values()
            .flat_map(|segs| segs.iter().map(|s| s.dur))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.values().all(|v| v.is_empty())
    }

    /// Sort segments by onset and merge same-speaker overlaps, per recording.
    pub fn normalized(&self) -> SegmentSet {
        let mut out = SegmentSet::new();
        for (rec, segs) in &self.recordings {
            let mut by_speaker: BTreeMap<&str, Vec<&Segment>> = BTreeMap::new();
            for s in segs {
                by_speaker.entry(&s.speaker).or_default().push(s);
            }
            let merged = out.recordings.entry(rec.clone()).or_default();
            for (spk, mut list) in by_speaker {
                list.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap());
                let mut cur: Option<(f64, f64)> = None;
                for s in list {
                    match cur {
                        Some((on, end)) if s.onset <= end + 1e-9 => {
                            cur = Some((on, end.max(s.end())));
                        }
                        Some((on, end)) => {
                            merged.push(Segment {
                                speaker: spk.to_string(),
                                onset: on,
                                dur: end - on,
                            });
                            cur = Some((s.onset, s.end()));
                        }
                        None => cur = Some((s.onset, s.end())),
                    }
                }
                if let Some((on, end)) = cur {
                    merged.push(Segment {
                        speaker: spk.to_string(),
                        onset: on,
                        dur: end - on,
                    });
                }
            }
            merged.sort_by(|a, b| {
                a.onset
                    .partial_cmp(&b.onset)
                    .unwrap()
                    .then_with(|| a.speaker.cmp(&b.speaker))
            });
        }
        out
    }
}

pub fn parse_rttm(text: &str) -> Result<SegmentSet> {
    let mut set = SegmentSet::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 9 {
            return Err(CoreError::RttmParse {
                line: ln + 1,
                detail: format!("expected >= 9 fields, got {}", fields.len()),
            });
        }
        if fields[0] != "SPEAKER" {
            return Err(CoreError::RttmParse {
                line: ln + 1,
                detail: format!("unsupported record type '{}'", fields[0]),
            });
        }
        let onset: f64 = fields[3].parse().map_err(|_| CoreError::RttmParse {
            line: ln + 1,
            detail: format!("bad onset '{}'", fields[3]),
        })?;
        let dur: f64 = fields[4].parse().map_err(|_| CoreError::RttmParse {
            line: ln + 1,
            detail: format!("bad duration '{}'", fields[4]),
        })?;
        if onset < 0.0 {
            return Err(CoreError::RttmParse {
                line: ln + 1,
                detail: format!("negative onset {}", onset),
            });
        }
        if dur <= 0.0 {
            return Err(CoreError::RttmParse {
                line: ln + 1,
                detail: format!("non-positive duration {}", dur),
            });
        }
        set.push(fields[1], fields[7], onset, dur);
    }
    Ok(set)
}

/// Serialize with onsets and durations at 3 decimals (1 ms).
pub fn write_rttm(set: &SegmentSet) -> String {
    let mut out = String::new();
    for (rec, segs) in &set.recordings {
        for s in segs {
            writeln!(
                out,
                "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
                rec, s.onset, s.dur, s.speaker
            )
            .unwrap();
        }
    }
    out
}
