//! Metrics CSV output.

use std::io::Write;
use std::path::Path;

use byzsgd::training::RoundRecord;

pub const HEADER: [&str; 6] = [
    "round",
    "train_loss",
    "test_accuracy",
    "agg_deviation",
    "dist_to_opt",
    "agg_time_ns",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders records as CSV. Floats use the shortest round-trip form;
/// undefined metrics are empty fields.
pub fn to_csv(records: &[RoundRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.train_loss.to_string(),
            opt(r.test_accuracy),
            r.agg_deviation.to_string(),
            opt(r.dist_to_opt),
            opt(r.agg_time_ns),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes `bytes` to a temporary file next to `path`, then renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn mean_of(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.fold(0.0, |a, v| a + v) / n as f64
}

/// Pointwise average of runs with identical round counts. An optional
/// metric is averaged only where every run defines it.
pub fn average(runs: &[Vec<RoundRecord>]) -> Vec<RoundRecord> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let k = runs.len();
    (0..first.len())
        .map(|t| {
            let at = |f: &dyn Fn(&RoundRecord) -> Option<f64>| -> Option<f64> {
                let vals: Option<Vec<f64>> = runs.iter().map(|r| f(&r[t])).collect();
                vals.map(|v| mean_of(v.into_iter(), k))
            };
            RoundRecord {
                round: first[t].round,
                train_loss: mean_of(runs.iter().map(|r| r[t].train_loss), k),
                test_accuracy: at(&|r| r.test_accuracy),
                agg_deviation: mean_of(runs.iter().map(|r| r[t].agg_deviation), k),
                dist_to_opt: at(&|r| r.dist_to_opt),
                agg_time_ns: at(&|r| r.agg_time_ns.map(|v| v as f64)).map(|v| v.round() as u64),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(round: usize, loss: f64, acc: Option<f64>) -> RoundRecord {
        RoundRecord {
            round,
            train_loss: loss,
            test_accuracy: acc,
            agg_deviation: 0.5,
            dist_to_opt: None,
            agg_time_ns: None,
        }
    }

    #[test]
    fn csv_shape() {
        let text = String::from_utf8(to_csv(&[rec(1, 0.25, None), rec(2, 0.1, Some(1.0))])).unwrap();
        assert_eq!(
            text,
            "round,train_loss,test_accuracy,agg_deviation,dist_to_opt,agg_time_ns\n\
             1,0.25,,0.5,,\n\
             2,0.1,1,0.5,,\n"
        );
    }

    #[test]
    fn averaging_is_pointwise() {
        let a = vec![rec(1, 1.0, Some(0.5)), rec(2, 2.0, None)];
        let b = vec![rec(1, 3.0, Some(1.0)), rec(2, 4.0, Some(1.0))];
        let avg = average(&[a, b]);
        assert_eq!(avg[0].train_loss, 2.0);
        assert_eq!(avg[0].test_accuracy, Some(0.75));
        assert_eq!(avg[1].test_accuracy, None);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/m.csv");
        write_atomic(&path, b"a").unwrap();
        write_atomic(&path, b"b").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"b");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
