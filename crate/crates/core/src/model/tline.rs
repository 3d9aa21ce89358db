//! RLC ladder approximation of a transmission line.
//!
//! Each of the q loops carries [I_R, U_C | U_R, I_C, U_L]; the states are stacked
//! block-wise so that the inductor currents and capacitor voltages come first.

use serde::{Deserialize, Serialize};

use super::{DaeBlocks, SemiExplicitDae};
use crate::error::{MorError, Result};
use crate::linalg::{Mat, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTap {
    /// Voltage over the last capacitor, a dynamic state.
    EndCapacitorVoltage,
    /// Voltage over the first inductor, an algebraic state.
    FirstInductorVoltage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionLineParams {
    pub q: usize,
    /// Resistance per loop (Ω).
    pub r_per: f64,
    /// Inductance per loop (H).
    pub l_per: f64,
    /// Capacitance per loop (F).
    pub c_per: f64,
    pub output_tap: OutputTap,
}

impl TransmissionLineParams {
    /// Telephone-cable constants per metre, one metre per loop.
    pub fn telephone_cable(q: usize) -> Self {
        TransmissionLineParams {
            q,
            r_per: 172.24e-3,
            l_per: 0.61e-6,
            c_per: 51.57e-12,
            output_tap: OutputTap::EndCapacitorVoltage,
        }
    }

    pub fn with_tap(mut self, tap: OutputTap) -> Self {
        self.output_tap = tap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(MorError::InvalidInput("transmission line needs q >= 1 loops".into()));
        }
        for (name, v) in [("r_per", self.r_per), ("l_per", self.l_per), ("c_per", self.c_per)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MorError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn build_transmission_line(params: &TransmissionLineParams) -> Result<SemiExplicitDae> {
    params.validate()?;
    let q = params.q;
    let sp = |rows: usize, cols: usize, t: Vec<(usize, usize, f64)>| SparseMatrix::from_triplets(rows, cols, &t);

    // L İ_R = U_L, C U̇_C = I_C
    let e11 = sp(
        2 * q,
        2 * q,
        (0..q)
            .map(|i| (i, i, params.l_per))
            .chain((0..q).map(|i| (q + i, q + i, params.c_per)))
            .collect(),
    )?;
    let a11 = SparseMatrix::zeros(2 * q, 2 * q);
    let a12 = sp(
        2 * q,
        3 * q,
        (0..q)
            .map(|i| (i, 2 * q + i, 1.0))
            .chain((0..q).map(|i| (q + i, q + i, 1.0)))
            .collect(),
    )?;

    let mut t21 = Vec::new();
    let mut t22 = Vec::new();
    for i in 0..q {
        // 0 = U_R − R I_R
        t21.push((i, i, -params.r_per));
        t22.push((i, i, 1.0));
        // 0 = I_R,i − I_R,i+1 − I_C,i
        t21.push((q + i, i, 1.0));
        if i + 1 < q {
            t21.push((q + i, i + 1, -1.0));
        }
        t22.push((q + i, q + i, -1.0));
        // 0 = U_C,i − U_C,i−1 + U_R,i + U_L,i − δ_B U_0
        t21.push((2 * q + i, q + i, 1.0));
        if i > 0 {
            t21.push((2 * q + i, q + i - 1, -1.0));
        }
        t22.push((2 * q + i, i, 1.0));
        t22.push((2 * q + i, 2 * q + i, 1.0));
    }
    let a21 = sp(3 * q, 2 * q, t21)?;
    let a22 = sp(3 * q, 3 * q, t22)?;

    let b11 = Mat::zeros(2 * q, 1);
    let mut b22 = Mat::zeros(3 * q, 1);
    b22[(2 * q, 0)] = -1.0;

    let mut c11 = Mat::zeros(1, 2 * q);
    let mut c22 = Mat::zeros(1, 3 * q);
    match params.output_tap {
        OutputTap::EndCapacitorVoltage => c11[(0, 2 * q - 1)] = 1.0,
        OutputTap::FirstInductorVoltage => c22[(0, 2 * q)] = 1.0,
    }

    SemiExplicitDae::new(DaeBlocks {
        e11,
        a11,
        a12,
        a21,
        a22,
        b11,
        b22,
        c11,
        c22,
        d: Mat::zeros(1, 1),
    })
}
