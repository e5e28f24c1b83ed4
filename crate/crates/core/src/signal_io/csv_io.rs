use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{EmgRecording, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

/// Column mapping for the recording CSV format.
///
/// The default matches `subject,trial,label,channel_1,channel_2,...`; channel
/// columns are every column whose name starts with `channel_prefix`, in header
/// order.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub subject_column: String,
    pub trial_column: String,
    pub label_column: String,
    pub channel_prefix: String,
    pub sample_rate_hz: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            subject_column: "subject".into(),
            trial_column: "trial".into(),
            label_column: "label".into(),
            channel_prefix: "channel_".into(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

pub fn load_recordings(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<EmgRecording>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_recordings(file, schema).map_err(|e| match e {
        Error::NoRecords(_) => Error::NoRecords(path.display().to_string()),
        other => other,
    })
}

struct Group {
    subject: String,
    trial: u32,
    label: usize,
    channels: Vec<Vec<f64>>,
}

/// Parses recordings from any reader. One recording is produced per
/// (subject, trial, label) group, in order of first appearance.
pub fn read_recordings(reader: impl Read, schema: &CsvSchema) -> Result<Vec<EmgRecording>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::NoRecords("input".into()));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let subject_col = find(&schema.subject_column)?;
    let trial_col = find(&schema.trial_column)?;
    let label_col = find(&schema.label_column)?;
    let channel_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().starts_with(&schema.channel_prefix))
        .map(|(i, _)| i)
        .collect();
    if channel_cols.is_empty() {
        return Err(Error::MissingColumn(format!("{}1", schema.channel_prefix)));
    }

    let mut groups: Vec<Group> = Vec::new();
    let mut index: HashMap<(String, u32, usize), usize> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != headers.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let subject = row[subject_col].trim().to_string();
        let trial: u32 = parse_field(&row[trial_col], line, &schema.trial_column)?;
        let label: usize = parse_field(&row[label_col], line, &schema.label_column)?;
        if trial == 0 || label == 0 {
            return Err(Error::MalformedRow {
                line,
                message: "trial and label start at 1".into(),
            });
        }
        let key = (subject, trial, label);
        let gi = match index.get(&key) {
            Some(&gi) => gi,
            None => {
                groups.push(Group {
                    subject: key.0.clone(),
                    trial,
                    label,
                    channels: vec![Vec::new(); channel_cols.len()],
                });
                index.insert(key, groups.len() - 1);
                groups.len() - 1
            }
        };
        for (k, &col) in channel_cols.iter().enumerate() {
            let v: f64 = parse_field(&row[col], line, &headers[col])?;
            if !v.is_finite() {
                return Err(Error::NonFiniteSample {
                    line,
                    column: headers[col].to_string(),
                });
            }
            groups[gi].channels[k].push(v);
        }
    }
    if groups.is_empty() {
        return Err(Error::NoRecords("input".into()));
    }
    groups
        .into_iter()
        .map(|g| EmgRecording::new(g.channels, schema.sample_rate_hz, g.label, g.subject, g.trial))
        .collect()
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: u64, column: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::MalformedRow {
        line,
        message: format!("cannot parse `{raw}` in column `{column}`"),
    })
}

/// Writes recordings in the default CSV layout. Samples are printed in their
/// shortest round-trip form, so reloading is bit-exact.
pub fn write_recordings(writer: impl Write, recordings: &[EmgRecording]) -> Result<()> {
    let channels = recordings.first().map_or(0, |r| r.channel_count());
    if recordings.iter().any(|r| r.channel_count() != channels) {
        return Err(Error::InvalidRecording(
            "recordings in one file must share a channel count".into(),
        ));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["subject".to_string(), "trial".into(), "label".into()];
    header.extend((1..=channels).map(|c| format!("channel_{c}")));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for rec in recordings {
        for i in 0..rec.len() {
            row.clear();
            row.push(rec.subject_id().to_string());
            row.push(rec.trial_index().to_string());
            row.push(rec.label().to_string());
            row.extend(rec.channels().iter().map(|ch| format!("{:?}", ch[i])));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(s: &str) -> Result<Vec<EmgRecording>> {
        read_recordings(s.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn groups_by_subject_trial_label() {
        let text = "subject,trial,label,channel_1,channel_2\n\
                    s1,1,3,0.5,-0.5\n\
                    s1,1,3,0.25,1e-3\n\
                    s1,2,3,1,2\n\
                    s2,1,3,4,5\n";
        let recs = read(text).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].len(), 2);
        assert_eq!(recs[0].channels()[1], vec![-0.5, 1e-3]);
        assert_eq!(recs[1].trial_index(), 2);
        assert_eq!(recs[2].subject_id(), "s2");
        assert_eq!(recs[0].label(), 3);
        assert_eq!(recs[0].sample_rate_hz(), 4000.0);
    }

    #[test]
    fn accepts_crlf() {
        let text = "subject,trial,label,channel_1\r\ns,1,1,0.5\r\ns,1,1,0.75\r\n";
        let recs = read(text).unwrap();
        assert_eq!(recs[0].channels()[0], vec![0.5, 0.75]);
    }

    #[test]
    fn twenty_thousand_rows_one_trial() {
        let mut text = String::from("subject,trial,label,channel_1,channel_2\n");
        for i in 0..20_000 {
            text.push_str(&format!("a,1,1,{},{}\n", i as f64 * 1e-3, -(i as f64)));
        }
        let recs = read(&text).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].len(), 20_000);
        assert_eq!(recs[0].channel_count(), 2);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(read(""), Err(Error::NoRecords(_))));
        assert!(matches!(
            read("subject,trial,label,channel_1\n"),
            Err(Error::NoRecords(_))
        ));
        assert!(matches!(
            read("subject,trial,label,channel_1\ns,1,1,NaN\n"),
            Err(Error::NonFiniteSample { line: 2, .. })
        ));
        assert!(matches!(
            read("subject,label,channel_1\ns,1,0.1\n"),
            Err(Error::MissingColumn(c)) if c == "trial"
        ));
        assert!(matches!(
            read("subject,trial,label\ns,1,1\n"),
            Err(Error::MissingColumn(_))
        ));
        assert!(matches!(
            read("subject,trial,label,channel_1\ns,1,1,0.1\ns,1,1,abc\n"),
            Err(Error::MalformedRow { line: 3, .. })
        ));
        assert!(matches!(
            read("subject,trial,label,channel_1\ns,1,1,0.1\ns,1,1\n"),
            Err(Error::MalformedRow { line: 3, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn write_then_read_is_bit_exact(
            samples in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 2..200),
            trial in 1u32..10,
        ) {
            let half = samples.len() / 2;
            let rec = EmgRecording::new(
                vec![samples[..half].to_vec(), samples[half..2 * half].to_vec()],
                4000.0, 2, "subj", trial,
            ).unwrap();
            let mut buf = Vec::new();
            write_recordings(&mut buf, std::slice::from_ref(&rec)).unwrap();
            let back = read_recordings(buf.as_slice(), &CsvSchema::default()).unwrap();
            prop_assert_eq!(back.len(), 1);
            for (a, b) in back[0].channels().iter().flatten().zip(rec.channels().iter().flatten()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
