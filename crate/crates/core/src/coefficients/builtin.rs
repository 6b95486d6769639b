//! Ready-made coefficient sets for `s = 1..=4`.
//!
//! Only the free inputs of [`construct_order_s`] are stored; `Q` and `S1` are recomputed on
//! every call. The transfer matrices, node positions, off-diagonal `R` and `S2` were chosen
//! offline so that the methods are zero-stable, damp the stiff limit (small spectral radius
//! of `R^-1 Q`, nilpotent for `s = 4`) and keep the IMEX linearizations of the test
//! problems stable up to `dt = 1`.

use nalgebra::DMatrix;

use super::{construct_order_s, ConstructionInputs, NodeVector, PeerCoefficients};
use crate::error::{Error, Result};

pub const MAX_BUILTIN_STAGES: usize = 4;

/// Construction inputs of a builtin method; matrices are row-major `s x s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinInputs {
    pub nodes: &'static [f64],
    pub gamma: f64,
    pub p: &'static [f64],
    pub r_lower: &'static [f64],
    pub s2: &'static [f64],
}

impl BuiltinInputs {
    pub fn stages(&self) -> usize {
        self.nodes.len()
    }

    pub fn to_construction(&self) -> Result<ConstructionInputs> {
        let s = self.stages();
        let m = |v: &[f64]| DMatrix::from_row_slice(s, s, v);
        Ok(ConstructionInputs::new(NodeVector::new(self.nodes.to_vec())?)
            .with_gamma(self.gamma)
            .with_transfer(m(self.p))
            .with_r_lower(m(self.r_lower))
            .with_s2(m(self.s2)))
    }
}

const S1: BuiltinInputs = BuiltinInputs {
    nodes: &[1.0],
    gamma: 1.0,
    p: &[1.0],
    r_lower: &[0.0],
    s2: &[0.0],
};

const S2: BuiltinInputs = BuiltinInputs {
    nodes: &[0.00016620121705326402, 1.0],
    gamma: 0.8701626158193494,
    p: &[
        0.9541974797389094, 0.04580252026109055,
        0.9634690521846121, 0.036530947815387904,
    ],
    r_lower: &[
        0.0, 0.0,
        0.9189737193901757, 0.0,
    ],
    s2: &[
        0.0, 0.0,
        1.8473022823220102, 0.0,
    ],
};

const S3: BuiltinInputs = BuiltinInputs {
    nodes: &[0.02220810438940336, 0.44637072728397104, 1.0],
    gamma: 0.8072891231239027,
    p: &[
        -0.4290617947309739, 0.46066781725919426, 0.9683939774717796,
        -0.5648721378175443, 1.1698357294091244, 0.3950364084084199,
        -0.4595262601028731, 0.47082834073093505, 0.9886979193719381,
    ],
    r_lower: &[
        0.0, 0.0, 0.0,
        -0.6132771286844074, 0.0, 0.0,
        0.7373183013106255, -0.11350955174995411, 0.0,
    ],
    s2: &[
        0.0, 0.0, 0.0,
        -0.7611703291248179, 0.0, 0.0,
        -0.063224615357044, 1.249906339537566, 0.0,
    ],
};

const S4: BuiltinInputs = BuiltinInputs {
    nodes: &[0.05826239074857649, 0.3570725964395754, 0.7148718191237861, 1.0],
    gamma: 0.16462079773555263,
    p: &[
        -0.05068473822608568, 0.17798638456652213, -0.33970629352947684, 1.2124046471890404,
        -0.23060887062176694, 0.9936835460329944, -2.402574759194309, 2.6395000837830818,
        -0.40576907444198884, 1.8120923632556902, -4.578752302425062, 4.17242901361136,
        -0.6695343832276266, 2.9289177317345527, -6.892840197107513, 5.633456848600587,
    ],
    r_lower: &[
        0.0, 0.0, 0.0, 0.0,
        0.20228480361961035, 0.0, 0.0, 0.0,
        -0.09503744216348882, 0.3767474481169425, 0.0, 0.0,
        -0.6993822088881525, 0.3321431826210485, 0.2763205286021897, 0.0,
    ],
    s2: &[
        0.0, 0.0, 0.0, 0.0,
        -0.17266638603852613, 0.0, 0.0, 0.0,
        -0.4600875657705422, 0.46616123585929337, 0.0, 0.0,
        0.27203814660088843, 0.7559490492209974, 1.6167549518726527, 0.0,
    ],
};

pub fn builtin_inputs(stages: usize) -> Result<BuiltinInputs> {
    match stages {
        1 => Ok(S1),
        2 => Ok(S2),
        3 => Ok(S3),
        4 => Ok(S4),
        _ => Err(Error::InvalidArgument(format!(
            "no builtin method with {stages} stages (available: 1 to {MAX_BUILTIN_STAGES})"
        ))),
    }
}

/// The builtin `s`-stage method of order `s`.
pub fn builtin(stages: usize) -> Result<PeerCoefficients> {
    construct_order_s(&builtin_inputs(stages)?.to_construction()?)
}
