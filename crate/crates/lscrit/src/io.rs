//! CSV formats for datasets and posterior draws.
//!
//! Datasets carry a header row. Regression datasets list inputs first:
//! `x1,…,xM,y1,…,yN`; other datasets only have `y` columns.

use std::io::{Read, Write};

use lscrit_core::model::Dataset;
use lscrit_core::sampler::PosteriorSamples;

use crate::error::{Error, Result};

/// Writes a dataset with its header. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = data.input_dim();
    let mut header: Vec<String> = (1..=m).map(|j| format!("x{j}")).collect();
    header.extend((1..=data.output_dim()).map(|j| format!("y{j}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if let Some(x) = data.input(i) {
            record.extend(x.iter().map(f64::to_string));
        }
        record.extend(data.output(i).iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]. Columns must be
/// `x1..xM` (optional) followed by `y1..yN`.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let m = header.iter().take_while(|h| h.starts_with('x')).count();
    let n_out = header.len() - m;
    for (k, h) in header.iter().enumerate() {
        let expected = if k < m {
            format!("x{}", k + 1)
        } else {
            format!("y{}", k - m + 1)
        };
        if h != expected {
            return Err(Error::Format(format!(
                "dataset header column {} is {h:?}, expected {expected:?}",
                k + 1
            )));
        }
    }
    if n_out == 0 {
        return Err(Error::Format("dataset has no y columns".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                record.len(),
                header.len()
            )));
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("row {}: cannot parse {field:?} as a number", line + 1))
            })?;
            if k < m {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let data = if m > 0 {
        Dataset::with_inputs(xs, m, ys, n_out)?
    } else {
        Dataset::new(ys, n_out)?
    };
    Ok(data)
}

/// Dumps draws as `chain,iter,tempered_logpost,untempered_loglik,<coords>`.
pub fn write_draws<W: Write>(samples: &PosteriorSamples, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = samples.draws().first() else {
        return Err(Error::Format("no draws to write".into()));
    };
    let mut header = vec![
        "chain".to_string(),
        "iter".to_string(),
        "tempered_logpost".to_string(),
        "untempered_loglik".to_string(),
    ];
    header.extend(first.params.coord_names());
    w.write_record(&header)?;
    for d in samples.draws() {
        let mut record = vec![
            d.chain.to_string(),
            d.iteration.to_string(),
            d.tempered_logpost.to_string(),
            d.untempered_loglik.to_string(),
        ];
        record.extend(d.params.coords().iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
