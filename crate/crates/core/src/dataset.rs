use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{Architecture, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// `N x O` real targets.
    Regression(Vec<Vec<f64>>),
    /// Zero-based class labels.
    Classification(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Targets,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn regression(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let ds = Self {
            inputs,
            targets: Targets::Regression(targets),
            feature_names: None,
        };
        ds.check_rows()?;
        Ok(ds)
    }

    pub fn classification(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let ds = Self {
            inputs,
            targets: Targets::Classification(labels),
            feature_names: None,
        };
        ds.check_rows()?;
        Ok(ds)
    }

    pub fn empty(task: Task) -> Self {
        Self {
            inputs: Vec::new(),
            targets: match task {
                Task::Regression => Targets::Regression(Vec::new()),
                Task::Classification => Targets::Classification(Vec::new()),
            },
            feature_names: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification(_) => Task::Classification,
        }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classification(l) => Some(l),
            Targets::Regression(_) => None,
        }
    }

    pub fn regression_targets(&self) -> Option<&[Vec<f64>]> {
        match &self.targets {
            Targets::Regression(t) => Some(t),
            Targets::Classification(_) => None,
        }
    }

    /// Rows at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: match &self.targets {
                Targets::Regression(t) => {
                    Targets::Regression(indices.iter().map(|&i| t[i].clone()).collect())
                }
                Targets::Classification(l) => {
                    Targets::Classification(indices.iter().map(|&i| l[i]).collect())
                }
            },
            feature_names: self.feature_names.clone(),
        }
    }

    fn check_rows(&self) -> Result<()> {
        let n = self.inputs.len();
        let target_rows = match &self.targets {
            Targets::Regression(t) => t.len(),
            Targets::Classification(l) => l.len(),
        };
        if target_rows != n {
            return Err(Error::shape(format!(
                "{n} input rows but {target_rows} target rows"
            )));
        }
        if let Some(d) = self.input_dim() {
            if self.inputs.iter().any(|r| r.len() != d) {
                return Err(Error::shape("ragged input rows"));
            }
        }
        if let Targets::Regression(t) = &self.targets {
            if let Some(o) = t.first().map(Vec::len) {
                if t.iter().any(|r| r.len() != o) {
                    return Err(Error::shape("ragged target rows"));
                }
            }
        }
        Ok(())
    }

    /// Check that rows fit the architecture.
    pub fn check_against(&self, arch: &Architecture) -> Result<()> {
        self.check_rows()?;
        if self.task() != arch.task {
            return Err(Error::config(format!(
                "dataset task {:?} does not match architecture task {:?}",
                self.task(),
                arch.task
            )));
        }
        if self.inputs.iter().any(|r| r.len() != arch.input_dim) {
            return Err(Error::shape(format!(
                "dataset inputs must have {} columns",
                arch.input_dim
            )));
        }
        match &self.targets {
            Targets::Regression(t) => {
                if t.iter().any(|r| r.len() != arch.output_dim) {
                    return Err(Error::shape(format!(
                        "regression targets must have {} columns",
                        arch.output_dim
                    )));
                }
            }
            Targets::Classification(l) => {
                if let Some(bad) = l.iter().find(|&&c| c >= arch.output_dim) {
                    return Err(Error::shape(format!(
                        "label {bad} out of range for {} classes",
                        arch.output_dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// Header `x1..xD` then `y1..yO` or `label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let d = self.input_dim().unwrap_or(0);
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        match &self.targets {
            Targets::Regression(t) => {
                let o = t.first().map(Vec::len).unwrap_or(0);
                header.extend((1..=o).map(|j| format!("y{j}")));
            }
            Targets::Classification(_) => header.push("label".to_string()),
        }
        out.write_record(&header)?;
        for (i, row) in self.inputs.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            match &self.targets {
                Targets::Regression(t) => rec.extend(t[i].iter().map(|v| v.to_string())),
                Targets::Classification(l) => rec.push(l[i].to_string()),
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Columns named `y*` are regression targets, a `label` column marks a
    /// classification set, every other column is an input feature.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let is_target = |h: &str| {
            h == "label"
                || (h.starts_with('y') && h.len() > 1 && h[1..].chars().all(|c| c.is_ascii_digit()))
        };
        let label_col = header.iter().position(|h| h == "label");
        let y_cols: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| is_target(h) && *h != "label")
            .map(|(i, _)| i)
            .collect();
        let x_cols: Vec<usize> = (0..header.len()).filter(|&i| !is_target(&header[i])).collect();
        if label_col.is_some() && !y_cols.is_empty() {
            return Err(Error::Data("CSV has both label and y columns".into()));
        }
        if label_col.is_none() && y_cols.is_empty() {
            return Err(Error::Data("CSV has no target columns (y1.. or label)".into()));
        }
        if x_cols.is_empty() {
            return Err(Error::Data("CSV has no input columns".into()));
        }

        let mut inputs = Vec::new();
        let mut reg = Vec::new();
        let mut labels = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            // header is line 1
            let line = row_idx + 2;
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::Data(format!(
                    "row {line}: expected {} fields, found {}",
                    header.len(),
                    record.len()
                )));
            }
            let parse = |col: usize| -> Result<f64> {
                let raw = &record[col];
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "row {line}: column '{}' has invalid number '{raw}'",
                            header[col]
                        ))
                    })
            };
            inputs.push(x_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?);
            if let Some(lc) = label_col {
                let raw = &record[lc];
                labels.push(raw.parse::<usize>().map_err(|_| {
                    Error::Data(format!("row {line}: invalid class label '{raw}'"))
                })?);
            } else {
                reg.push(y_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?);
            }
        }
        let default_names = x_cols
            .iter()
            .enumerate()
            .all(|(k, &c)| header[c] == format!("x{}", k + 1));
        let feature_names = if default_names {
            None
        } else {
            Some(x_cols.iter().map(|&c| header[c].clone()).collect())
        };
        let targets = if label_col.is_some() {
            Targets::Classification(labels)
        } else {
            Targets::Regression(reg)
        };
        let ds = Self {
            inputs,
            targets,
            feature_names,
        };
        ds.check_rows()?;
        Ok(ds)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Data(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
