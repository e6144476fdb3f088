//! Datasets as JSON lines, one instance per line. Floats are written in
//! shortest round-trip form, so regenerating from the same configuration
//! and seeds reproduces files byte for byte.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ProblemInstance, Sizes, TaskKind};
use crate::complex::ComplexMatrix;
use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub task: TaskKind,
    pub sizes: Sizes,
    pub seed: u64,
    pub sigma2: f64,
    pub p_t: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major real parts of the channel.
    pub h_re: Vec<f64>,
    pub h_im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_re: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_im: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cross_gains: Vec<f64>,
}

impl From<&ProblemInstance> for DatasetRecord {
    fn from(i: &ProblemInstance) -> Self {
        DatasetRecord {
            task: i.task,
            sizes: i.sizes,
            seed: i.seed,
            sigma2: i.sigma2,
            p_t: i.p_t,
            rows: i.h.rows(),
            cols: i.h.cols(),
            h_re: i.h.re.data().to_vec(),
            h_im: i.h.im.data().to_vec(),
            label_re: i.labels.as_ref().map(|l| l.re.data().to_vec()),
            label_im: i.labels.as_ref().map(|l| l.im.data().to_vec()),
            cross_gains: i.cross_gains.clone(),
        }
    }
}

impl DatasetRecord {
    pub fn into_instance(self) -> Result<ProblemInstance> {
        let mat = |re: Vec<f64>, im: Vec<f64>| -> Result<ComplexMatrix> {
            ComplexMatrix::new(
                Matrix::from_vec(self.rows, self.cols, re)?,
                Matrix::from_vec(self.rows, self.cols, im)?,
            )
        };
        let h = mat(self.h_re.clone(), self.h_im.clone())?;
        let labels = match (self.label_re.clone(), self.label_im.clone()) {
            (Some(re), Some(im)) => Some(mat(re, im)?),
            (None, None) => None,
            _ => return Err(CoreError::Invalid("label has only one of its parts".into())),
        };
        let inst = ProblemInstance {
            task: self.task,
            sizes: self.sizes,
            h,
            sigma2: self.sigma2,
            p_t: self.p_t,
            labels,
            cross_gains: self.cross_gains,
            seed: self.seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

pub fn write_dataset<W: Write>(mut w: W, instances: &[ProblemInstance]) -> Result<()> {
    for i in instances {
        serde_json::to_writer(&mut w, &DatasetRecord::from(i))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<ProblemInstance>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)?;
        out.push(rec.into_instance()?);
    }
    Ok(out)
}
