//! SE-DAE data model, generators and file ingestion.

mod dae;
mod freq;
mod mtx;
mod random;
mod system;
mod tline;

use serde::{Deserialize, Serialize};

pub use dae::{validate_semi_explicit, DaeBlocks, SemiExplicitDae, ValidationReport};
pub use freq::{frequency_response, logspace, FrequencyResponse};
pub use mtx::{
    load_matrix_market, partition_descriptor, read_matrix_market, read_mtx_file, save_matrix_market,
    write_matrix_market, write_mtx_file, DescriptorFiles, IngestRecord, Sidecar,
};
pub use random::{dissipative_full_a, random_stable_dae, scalar_blocks, RandomDaeOptions};
pub use system::{dense_transfer, DescriptorSystem, OdeRealization, TransferFunction};
pub use tline::{build_transmission_line, OutputTap, TransmissionLineParams};

/// Which side of the system a construction acts on: inputs (V, B) or outputs (W, C).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Input,
    Output,
}

impl Side {
    pub fn dual(self) -> Side {
        match self {
            Side::Input => Side::Output,
            Side::Output => Side::Input,
        }
    }
}
