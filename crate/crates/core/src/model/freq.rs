use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TransferFunction;
use crate::error::{MorError, Result};
use crate::linalg::{CMat, C64};

/// Sampled transfer matrix on the imaginary axis. Points where the solve
/// failed are kept as `None` instead of aborting the sweep.
#[derive(Clone, Debug)]
pub struct FrequencyResponse {
    pub omegas: Vec<f64>,
    pub values: Vec<Option<CMat>>,
    pub outputs: usize,
    pub inputs: usize,
}

pub fn logspace(lo_exp: f64, hi_exp: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo_exp)],
        _ => (0..n)
            .map(|k| 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / (n - 1) as f64))
            .collect(),
    }
}

pub fn frequency_response<S: TransferFunction + ?Sized>(sys: &S, omegas: &[f64]) -> Result<FrequencyResponse> {
    if omegas.iter().any(|w| !w.is_finite()) {
        return Err(MorError::InvalidInput("non-finite frequency".into()));
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MorError::InvalidInput("frequencies must be strictly increasing".into()));
    }
    let (outputs, inputs) = sys.io_dims();
    let values = omegas
        .iter()
        .map(|&w| sys.transfer_eval(C64::new(0.0, w)).ok())
        .collect();
    Ok(FrequencyResponse {
        omegas: omegas.to_vec(),
        values,
        outputs,
        inputs,
    })
}

#[derive(Serialize, Deserialize)]
struct JsonPoint {
    omega: f64,
    re: Option<Vec<Vec<f64>>>,
    im: Option<Vec<Vec<f64>>>,
}

impl FrequencyResponse {
    pub fn failed_points(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Pointwise difference self − other on a shared grid.
    pub fn difference(&self, other: &FrequencyResponse) -> Result<FrequencyResponse> {
        if self.omegas != other.omegas || (self.outputs, self.inputs) != (other.outputs, other.inputs) {
            return Err(MorError::dims("frequency responses on different grids"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            })
            .collect();
        Ok(FrequencyResponse {
            omegas: self.omegas.clone(),
            values,
            outputs: self.outputs,
            inputs: self.inputs,
        })
    }

    /// max over the grid of ‖self − reference‖ / ‖reference‖ (entrywise max norms).
    pub fn max_relative_error(&self, reference: &FrequencyResponse) -> Result<f64> {
        let diff = reference.difference(self)?;
        let mut worst: f64 = 0.0;
        for (d, r) in diff.values.iter().zip(&reference.values) {
            match (d, r) {
                (Some(d), Some(r)) => {
                    let denom = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
                    let num = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
                    worst = worst.max(if denom > 0.0 { num / denom } else { num });
                }
                _ => return Ok(f64::INFINITY),
            }
        }
        Ok(worst)
    }

    fn channel_header(&self, prefixes: &[&str]) -> String {
        let mut cols = vec!["omega".to_string()];
        for i in 0..self.outputs {
            for j in 0..self.inputs {
                for p in prefixes {
                    cols.push(format!("{p}_{}{}", i + 1, j + 1));
                }
            }
        }
        cols.join(",")
    }

    /// CSV with columns omega,re_11,im_11,re_12,... (row-major channels).
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{}", self.channel_header(&["re", "im"]))?;
        for (w, v) in self.omegas.iter().zip(&self.values) {
            let mut line = format!("{w:e}");
            for i in 0..self.outputs {
                for j in 0..self.inputs {
                    match v {
                        Some(g) => line.push_str(&format!(",{:e},{:e}", g[(i, j)].re, g[(i, j)].im)),
                        None => line.push_str(",nan,nan"),
                    }
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Bode magnitude CSV: omega,mag_db_11,...
    pub fn write_bode_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{}", self.channel_header(&["mag_db"]))?;
        for (w, v) in self.omegas.iter().zip(&self.values) {
            let mut line = format!("{w:e}");
            for i in 0..self.outputs {
                for j in 0..self.inputs {
                    match v {
                        Some(g) => line.push_str(&format!(",{:e}", 20.0 * g[(i, j)].norm().log10())),
                        None => line.push_str(",nan"),
                    }
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let points: Vec<JsonPoint> = self
            .omegas
            .iter()
            .zip(&self.values)
            .map(|(&omega, v)| {
                let part = |f: fn(&C64) -> f64| {
                    v.as_ref().map(|g| {
                        (0..g.nrows())
                            .map(|i| (0..g.ncols()).map(|j| f(&g[(i, j)])).collect())
                            .collect()
                    })
                };
                JsonPoint {
                    omega,
                    re: part(|z| z.re),
                    im: part(|z| z.im),
                }
            })
            .collect();
        serde_json::json!({
            "outputs": self.outputs,
            "inputs": self.inputs,
            "points": points,
        })
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut raw = std::fs::File::create(stem.with_extension("csv"))?;
        self.write_csv(&mut raw)?;
        let mut bode = std::fs::File::create(with_suffix(stem, "_bode.csv"))?;
        self.write_bode_csv(&mut bode)?;
        std::fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&self.to_json())?,
        )?;
        Ok(())
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = stem.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    stem.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::OdeRealization;

    fn lowpass(channels: usize) -> OdeRealization {
        let i = Mat::identity(channels, channels);
        OdeRealization {
            e1: i.clone(),
            a1: -&i,
            b1: i.clone(),
            c1: i.clone(),
            d1: Mat::zeros(channels, channels),
        }
    }

    #[test]
    fn single_point_equals_eval() {
        let sys = lowpass(1);
        let fr = frequency_response(&sys, &[3.0]).unwrap();
        assert_eq!(
            fr.values[0].as_ref().unwrap(),
            &sys.transfer_eval(C64::new(0.0, 3.0)).unwrap()
        );
    }

    #[test]
    fn first_order_rolloff_per_channel() {
        let fr = frequency_response(&lowpass(2), &logspace(-2.0, 3.0, 30)).unwrap();
        for (w, g) in fr.omegas.iter().zip(&fr.values) {
            let g = g.as_ref().unwrap();
            let expect = 1.0 / (1.0 + w * w).sqrt();
            assert!((g[(0, 0)].norm() - expect).abs() < 1e-14);
            assert!((g[(1, 1)].norm() - expect).abs() < 1e-14);
            assert_eq!(g[(0, 1)].norm(), 0.0);
        }
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(frequency_response(&lowpass(1), &[2.0, 1.0]).is_err());
        assert!(frequency_response(&lowpass(1), &[f64::NAN]).is_err());
    }

    #[test]
    fn csv_layout() {
        let fr = frequency_response(&lowpass(2), &[1.0]).unwrap();
        let mut buf = Vec::new();
        fr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "omega,re_11,im_11,re_12,im_12,re_21,im_21,re_22,im_22");
        let fields: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|f| f.parse().unwrap())
            .collect();
        assert_eq!(fields.len(), 9);
        assert!((fields[1] - 0.5).abs() < 1e-15 && (fields[2] + 0.5).abs() < 1e-15);

        let mut bode = Vec::new();
        fr.write_bode_csv(&mut bode).unwrap();
        assert!(String::from_utf8(bode)
            .unwrap()
            .starts_with("omega,mag_db_11,mag_db_12"));
    }
}
