use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::ModelError;

/// Inputs `x` (one row per sample) with scalar properties `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledDataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl LabelledDataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self, ModelError> {
        if x.nrows() != y.len() {
            return Err(ModelError::Dataset(format!(
                "{} input rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(ModelError::Dataset("inputs have no columns".into()));
        }
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(ModelError::Dataset("non-finite entry".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Writes `x1,..,xd,y` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        out.write_record(&header).map_err(csv_err)?;
        for (row, y) in self.x.rows().into_iter().zip(self.y.iter()) {
            let rec: Vec<String> = row
                .iter()
                .chain(std::iter::once(y))
                .map(|v| format!("{v:.16e}"))
                .collect();
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| ModelError::Dataset(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ModelError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let d = header
            .len()
            .checked_sub(1)
            .filter(|&d| d > 0)
            .ok_or_else(|| ModelError::Dataset("expected columns x1..xd,y".into()))?;
        if header.get(d) != Some("y") {
            return Err(ModelError::Dataset("last column must be y".into()));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ModelError::Dataset(e.to_string()))?;
            xs.extend_from_slice(&vals[..d]);
            ys.push(vals[d]);
        }
        let x = Array2::from_shape_vec((ys.len(), d), xs)
            .map_err(|e| ModelError::Dataset(e.to_string()))?;
        Self::new(x, Array1::from(ys))
    }
}

fn csv_err(e: csv::Error) -> ModelError {
    ModelError::Dataset(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_mismatched_rows_and_nan() {
        assert!(LabelledDataset::new(array![[1.0], [2.0]], array![1.0]).is_err());
        assert!(LabelledDataset::new(array![[f64::NAN]], array![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = LabelledDataset::new(
            array![[0.1, -1.0 / 3.0], [1e-300, 2.5]],
            array![std::f64::consts::PI, -0.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,y\n"));
        assert_eq!(LabelledDataset::read_csv(buf.as_slice()).unwrap(), d);
    }
}
