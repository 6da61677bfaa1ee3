//! Detail and aggregate CSV records.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Result, RfsError};

pub const DETAIL_HEADER: [&str; 14] = [
    "experiment_id",
    "n",
    "d",
    "M",
    "T",
    "rep",
    "lambda",
    "alpha",
    "beta",
    "train_mse",
    "test_mse",
    "zero_one",
    "l2_analytic",
    "wall_ms",
];

pub const METRICS: [&str; 4] = ["train_mse", "test_mse", "zero_one", "l2_analytic"];

/// One fitted cell at one stopping point.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailRow {
    pub experiment_id: String,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub t: usize,
    pub rep: usize,
    pub lambda: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub zero_one: Option<f64>,
    pub l2_analytic: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl DetailRow {
    pub fn metric(&self, index: usize) -> Option<f64> {
        match index {
            0 => self.train_mse,
            1 => self.test_mse,
            2 => self.zero_one,
            3 => self.l2_analytic,
            _ => None,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(line: usize, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| RfsError::Parse { line, message: format!("bad number '{s}'") })
}

fn parse_count(line: usize, s: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| RfsError::Parse { line, message: format!("bad count '{s}'") })
}

pub fn write_detail<W: Write>(rows: &[DetailRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DETAIL_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment_id.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.m.to_string(),
            r.t.to_string(),
            r.rep.to_string(),
            r.lambda.to_string(),
            cell(r.alpha),
            cell(r.beta),
            cell(r.train_mse),
            cell(r.test_mse),
            cell(r.zero_one),
            cell(r.l2_analytic),
            cell(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_detail<R: Read>(input: R) -> Result<Vec<DetailRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != DETAIL_HEADER {
        return Err(RfsError::Parse { line: 1, message: "unexpected detail header".into() });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let f = |i: usize| rec.get(i).unwrap_or("");
        rows.push(DetailRow {
            experiment_id: f(0).to_string(),
            n: parse_count(line, f(1))?,
            d: parse_count(line, f(2))?,
            m: parse_count(line, f(3))?,
            t: parse_count(line, f(4))?,
            rep: parse_count(line, f(5))?,
            lambda: parse_opt(line, f(6))?.unwrap_or(f64::NAN),
            alpha: parse_opt(line, f(7))?,
            beta: parse_opt(line, f(8))?,
            train_mse: parse_opt(line, f(9))?,
            test_mse: parse_opt(line, f(10))?,
            zero_one: parse_opt(line, f(11))?,
            l2_analytic: parse_opt(line, f(12))?,
            wall_ms: parse_opt(line, f(13))?,
        });
    }
    Ok(rows)
}

/// Mean and standard error of one metric over the repetitions that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; zero for one value.
    pub stderr: f64,
    pub count: usize,
}

/// Values summed in the given order, so equal inputs give equal bits.
pub fn mean_stderr(values: &[f64]) -> Option<MeanStderr> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Some(MeanStderr { mean, stderr, count: values.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub n: usize,
    pub m: usize,
    pub t: usize,
    /// Detail rows in the cell.
    pub rows: usize,
    pub metrics: [Option<MeanStderr>; 4],
}

impl AggregateRow {
    pub fn metric(&self, name: &str) -> Option<MeanStderr> {
        METRICS.iter().position(|&m| m == name).and_then(|i| self.metrics[i])
    }
}

/// Groups by `(n, M, T)` in ascending order; within a group, values keep detail order.
pub fn aggregate(rows: &[DetailRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, usize, usize), Vec<&DetailRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.n, r.m, r.t)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((n, m, t), members)| {
            let metrics = std::array::from_fn(|i| {
                let vals: Vec<f64> = members.iter().filter_map(|r| r.metric(i)).collect();
                mean_stderr(&vals)
            });
            AggregateRow { n, m, t, rows: members.len(), metrics }
        })
        .collect()
}

pub fn aggregate_header() -> Vec<String> {
    let mut h: Vec<String> = ["n", "M", "T", "reps"].iter().map(|s| s.to_string()).collect();
    for m in METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_stderr"));
    }
    h
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(aggregate_header())?;
    for r in rows {
        let mut rec = vec![r.n.to_string(), r.m.to_string(), r.t.to_string(), r.rows.to_string()];
        for m in &r.metrics {
            rec.push(cell(m.map(|s| s.mean)));
            rec.push(cell(m.map(|s| s.stderr)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(m: usize, t: usize, rep: usize, test: Option<f64>) -> DetailRow {
        DetailRow {
            experiment_id: "x".into(),
            n: 10,
            d: 1,
            m,
            t,
            rep,
            lambda: 1.0 / t as f64,
            alpha: Some(0.25),
            beta: None,
            train_mse: Some(0.1 * rep as f64),
            test_mse: test,
            zero_one: None,
            l2_analytic: None,
            wall_ms: None,
        }
    }

    #[test]
    fn mean_and_stderr() {
        let s = mean_stderr(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[4.0]).unwrap().stderr, 0.0);
        assert!(mean_stderr(&[]).is_none());
    }

    #[test]
    fn grouping_and_missing_values() {
        let rows = vec![row(4, 1, 0, Some(1.0)), row(4, 1, 1, None), row(2, 1, 0, Some(3.0))];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].m, agg[1].m), (2, 4));
        assert_eq!(agg[1].rows, 2);
        assert_eq!(agg[1].metric("test_mse").unwrap().count, 1);
        assert!(agg[1].metric("zero_one").is_none());
    }

    #[test]
    fn detail_roundtrip() {
        let rows = vec![row(4, 1, 0, Some(0.1 + 0.2)), row(4, 2, 1, None)];
        let mut buf = Vec::new();
        write_detail(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "experiment_id,n,d,M,T,rep,lambda,alpha,beta,train_mse,test_mse,zero_one,l2_analytic,wall_ms\n"
        ));
        assert_eq!(read_detail(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn aggregate_layout() {
        let mut buf = Vec::new();
        write_aggregate(&aggregate(&[row(4, 1, 0, Some(1.0))]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,M,T,reps,train_mse_mean,train_mse_stderr,test_mse_mean,test_mse_stderr,zero_one_mean,zero_one_stderr,l2_analytic_mean,l2_analytic_stderr"
        );
        assert_eq!(lines.next().unwrap(), "10,4,1,1,0,0,1,0,,,,");
    }
}
