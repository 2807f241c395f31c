use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// n observations of a fixed-dimension output vector, optionally paired
/// with input vectors (regression data).
///
/// Storage is row-major; `output(i)` and `input(i)` borrow the i-th row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outputs: Vec<f64>,
    inputs: Option<Vec<f64>>,
    n: usize,
    output_dim: usize,
    input_dim: usize,
}

/// One observation borrowed from a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct Datum<'a> {
    pub output: &'a [f64],
    pub input: Option<&'a [f64]>,
}

impl<'a> Datum<'a> {
    pub fn scalar(output: &'a [f64]) -> Self {
        Self {
            output,
            input: None,
        }
    }
}

fn check_block(name: &str, values: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(invalid!("{name} dimension must be positive"));
    }
    if values.is_empty() || values.len() % dim != 0 {
        return Err(invalid!(
            "{name} length {} is not a positive multiple of dimension {dim}",
            values.len()
        ));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(invalid!("{name} entry {i} is not finite"));
    }
    Ok(values.len() / dim)
}

impl Dataset {
    /// Unpaired observations, `outputs.len() = n * output_dim`.
    pub fn new(outputs: Vec<f64>, output_dim: usize) -> Result<Self> {
        let n = check_block("output", &outputs, output_dim)?;
        Ok(Self {
            outputs,
            inputs: None,
            n,
            output_dim,
            input_dim: 0,
        })
    }

    /// Scalar observations (output dimension 1).
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.to_vec(), 1)
    }

    /// Regression data: row i pairs `inputs[i]` (length `input_dim`) with
    /// `outputs[i]` (length `output_dim`).
    pub fn with_inputs(
        inputs: Vec<f64>,
        input_dim: usize,
        outputs: Vec<f64>,
        output_dim: usize,
    ) -> Result<Self> {
        let n_in = check_block("input", &inputs, input_dim)?;
        let n = check_block("output", &outputs, output_dim)?;
        if n != n_in {
            return Err(invalid!("{n_in} input rows but {n} output rows"));
        }
        Ok(Self {
            outputs,
            inputs: Some(inputs),
            n,
            output_dim,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false: a dataset holds at least one observation.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Zero when the dataset carries no inputs.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn has_inputs(&self) -> bool {
        self.inputs.is_some()
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn inputs(&self) -> Option<&[f64]> {
        self.inputs.as_deref()
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn input(&self, i: usize) -> Option<&[f64]> {
        self.inputs
            .as_ref()
            .map(|x| &x[i * self.input_dim..(i + 1) * self.input_dim])
    }

    pub fn datum(&self, i: usize) -> Datum<'_> {
        Datum {
            output: self.output(i),
            input: self.input(i),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Datum<'_>> + '_ {
        (0..self.n).map(move |i| self.datum(i))
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.output_dim != other.output_dim
            || self.input_dim != other.input_dim
            || self.has_inputs() != other.has_inputs()
        {
            return Err(invalid!("cannot concatenate datasets of different shapes"));
        }
        let mut outputs = self.outputs.clone();
        outputs.extend_from_slice(&other.outputs);
        match (&self.inputs, &other.inputs) {
            (Some(a), Some(b)) => {
                let mut inputs = a.clone();
                inputs.extend_from_slice(b);
                Dataset::with_inputs(inputs, self.input_dim, outputs, self.output_dim)
            }
            _ => Dataset::new(outputs, self.output_dim),
        }
    }

    /// Column means of the outputs.
    pub fn output_mean(&self) -> Vec<f64> {
        let mut mean = alloc::vec![0.0; self.output_dim];
        for i in 0..self.n {
            for (m, v) in mean.iter_mut().zip(self.output(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.n as f64;
        }
        mean
    }
}
