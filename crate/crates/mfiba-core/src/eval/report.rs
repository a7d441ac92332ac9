//! CSV serialization of runs, curves, and sweeps.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs always serialize to byte-identical output. No field ever needs
//! quoting: run identifiers are restricted to a safe character set.

use crate::error::{Error, Result};
use crate::eval::{PipelineRun, RdCurve, SweepRow, WeightSizeRow};

/// A pipeline run plus the identifier it is reported under.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub run: PipelineRun,
}

fn check_run_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "run id {id:?}; use only alphanumerics, '_', '-', '.', ':'"
        )))
    }
}

/// One row per run: identity, rate-accuracy point, and the full wall-time
/// decomposition.
pub fn runs_csv(records: &[RunRecord]) -> Result<String> {
    let mut out =
        String::from("run_id,mode,lambda_prime,bpp,accuracy,t_pre,t_assign,t_enc,t_dec,t_task\n");
    for rec in records {
        check_run_id(&rec.run_id)?;
        let r = &rec.run;
        let t = &r.timing;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            rec.run_id,
            r.mode.label(),
            r.lambda_prime,
            r.point.bpp,
            r.point.accuracy,
            t.t_pre,
            t.t_assign,
            t.t_enc,
            t.t_dec,
            t.t_task,
        ));
    }
    Ok(out)
}

/// Rate-accuracy curves, one row per point, tagged by mode label.
pub fn curves_csv(curves: &[(&str, &RdCurve)]) -> String {
    let mut out = String::from("mode,bpp,accuracy\n");
    for (label, curve) in curves {
        for p in curve.points() {
            out.push_str(&format!("{},{},{}\n", label, p.bpp, p.accuracy));
        }
    }
    out
}

/// Per-scale quality sweep rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("scale,phi,bpp,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.scale, r.phi, r.bpp, r.accuracy));
    }
    out
}

/// Predicted-weight profiles by object size; one weight column per scale.
pub fn weight_size_csv(rows: &[WeightSizeRow]) -> Result<String> {
    let Some(first) = rows.first() else {
        return Err(Error::InvalidParameter("no weight rows".into()));
    };
    let scales = first.weights.len();
    let mut out = String::from("size_param");
    for i in 0..scales {
        out.push_str(&format!(",w{i}"));
    }
    out.push('\n');
    for r in rows {
        if r.weights.len() != scales {
            return Err(Error::InvalidParameter(format!(
                "weight row has {} scales, expected {scales}",
                r.weights.len()
            )));
        }
        out.push_str(&format!("{}", r.size_param));
        for w in &r.weights {
            out.push_str(&format!(",{w}"));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::RdPoint;

    #[test]
    fn curve_csv_has_fixed_header_and_one_row_per_point() {
        let curve = RdCurve::new(vec![
            RdPoint {
                bpp: 0.5,
                accuracy: 0.75,
            },
            RdPoint {
                bpp: 1.25,
                accuracy: 0.875,
            },
        ])
        .unwrap();
        let csv = curves_csv(&[("mfiba", &curve)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "mode,bpp,accuracy");
        assert_eq!(lines[1], "mfiba,0.5,0.75");
        assert_eq!(lines[2], "mfiba,1.25,0.875");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn sweep_csv_round_trips_values_exactly() {
        let rows = vec![SweepRow {
            scale: 2,
            phi: 3.5,
            bpp: 0.1234567890123,
            accuracy: 0.9,
        }];
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scale,phi,bpp,accuracy");
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], "2");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 3.5);
        assert_eq!(fields[2].parse::<f64>().unwrap(), 0.1234567890123);
    }

    #[test]
    fn weight_size_csv_grows_one_column_per_scale() {
        let rows = vec![
            WeightSizeRow {
                size_param: 0.0,
                weights: vec![0.5, 0.3, 0.2],
            },
            WeightSizeRow {
                size_param: 1.0,
                weights: vec![0.2, 0.3, 0.5],
            },
        ];
        let csv = weight_size_csv(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "size_param,w0,w1,w2");
        assert_eq!(lines[1], "0,0.5,0.3,0.2");
        let ragged = WeightSizeRow {
            size_param: 0.0,
            weights: vec![0.5],
        };
        assert!(weight_size_csv(std::slice::from_ref(&ragged)).is_ok());
        assert!(weight_size_csv(&[rows[0].clone(), ragged]).is_err());
    }

    #[test]
    fn run_ids_are_validated() {
        assert!(check_run_id("synth-7.mfiba:l0").is_ok());
        assert!(check_run_id("has space").is_err());
        assert!(check_run_id("has,comma").is_err());
        assert!(check_run_id("").is_err());
    }
}
