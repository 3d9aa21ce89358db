//! Dense matrices as JSON objects `{rows, cols, data}` with row-major data.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Mat;

#[derive(Serialize, Deserialize)]
pub struct RowMajor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Mat> for RowMajor {
    fn from(m: &Mat) -> Self {
        RowMajor {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl TryFrom<RowMajor> for Mat {
    type Error = String;

    fn try_from(r: RowMajor) -> Result<Self, String> {
        if r.rows * r.cols != r.data.len() {
            return Err(format!("{}x{} matrix with {} entries", r.rows, r.cols, r.data.len()));
        }
        if r.data.iter().any(|x| !x.is_finite()) {
            return Err("non-finite matrix entry".into());
        }
        Ok(Mat::from_row_slice(r.rows, r.cols, &r.data))
    }
}

pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
    RowMajor::from(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
    Mat::try_from(RowMajor::deserialize(d)?).map_err(serde::de::Error::custom)
}
