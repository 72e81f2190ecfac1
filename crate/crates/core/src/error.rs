use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("trajectory left the divergence guard at t = {time}")]
    Escaped { time: f64 },

    #[error("{escaped} of {total} trajectories escaped (more than 1%)")]
    EscapeFraction { escaped: usize, total: usize },

    #[error("the first-order compensation formulas assume n = 3 (got n = {0})")]
    UnsupportedPower(u32),

    #[error("schedule term Q^{q} x^{x} p^{p} is outside what the perturbation series handles")]
    UnsupportedTerm { q: u8, x: u8, p: u8 },

    #[error("tables live on different grids")]
    GridMismatch,

    #[error("need at least {needed} usable points, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidParameter { name, reason }
    }
}
