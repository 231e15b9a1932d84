use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BridgeSpec, PathEnsembleSample};
use crate::rng::SeedRecord;
use crate::{Error, Result};

/// JSON companion of a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEnvelope {
    pub spec: BridgeSpec,
    pub seed_record: Option<SeedRecord>,
    pub trajectory_csv: Option<String>,
}

/// Writes `step,walker_1,…,walker_d` rows.
pub fn write_sample_csv<W: Write>(sample: &PathEnsembleSample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend((1..=sample.d()).map(|k| format!("walker_{k}")));
    w.write_record(&header)?;
    for (n, row) in sample.rows().enumerate() {
        let mut rec = vec![n.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sample_json<W: Write>(sample: &PathEnsembleSample, trajectory_csv: Option<String>, out: W) -> Result<()> {
    let env = SampleEnvelope { spec: sample.spec, seed_record: sample.seed_record, trajectory_csv };
    serde_json::to_writer_pretty(out, &env)?;
    Ok(())
}

/// Reads a trajectory CSV written by [`write_sample_csv`] and validates it.
pub fn read_sample_csv<R: Read>(spec: BridgeSpec, seed_record: Option<SeedRecord>, input: R) -> Result<PathEnsembleSample> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let step: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Io("bad step column".into()))?;
        if step != i {
            return Err(Error::Io(format!("step {step} out of order")));
        }
        let row: std::result::Result<Vec<i64>, _> = rec.iter().skip(1).map(|s| s.parse::<i64>()).collect();
        rows.push(row.map_err(|e| Error::Io(e.to_string()))?);
    }
    PathEnsembleSample::from_rows(spec, &rows, seed_record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk_ensembles::sample_bridge;

    #[test]
    fn csv_round_trip() {
        let spec = BridgeSpec::new(2, 10, 2).unwrap();
        let rec = SeedRecord::new(9, 1);
        let s = sample_bridge(&spec, rec).unwrap();
        let mut buf = Vec::new();
        write_sample_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,walker_1,walker_2\n0,0,2\n"));
        let back = read_sample_csv(spec, Some(rec), buf.as_slice()).unwrap();
        assert_eq!(back, s);
        let mut js = Vec::new();
        write_sample_json(&s, Some("t.csv".into()), &mut js).unwrap();
        let env: SampleEnvelope = serde_json::from_slice(&js).unwrap();
        assert_eq!(env.seed_record, Some(rec));
    }
}
