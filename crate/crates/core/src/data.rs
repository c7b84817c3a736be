use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Prediction task carried by a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Binary,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg" | "regression" => Ok(Task::Regression),
            "bin" | "binary" | "classification" => Ok(Task::Binary),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

/// Design matrix plus target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, task: Task) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite values");
        }
        if task == Task::Binary && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return invalid("binary targets must be 0 or 1");
        }
        Ok(Dataset { x, y, task })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
            task: self.task,
        }
    }

    /// Same rows with column `j` removed.
    pub fn without_column(&self, j: usize) -> Dataset {
        Dataset { x: drop_column(self.x.view(), j), y: self.y.clone(), task: self.task }
    }
}

pub fn drop_column(x: ArrayView2<f64>, j: usize) -> Array2<f64> {
    let keep: Vec<usize> = (0..x.ncols()).filter(|&c| c != j).collect();
    x.select(Axis(1), &keep)
}
