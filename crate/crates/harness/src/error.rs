use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid or unreadable configuration; maps to exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure while an experiment was running.
    #[error("experiment failed: {0}")]
    Run(#[from] fvre_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn config_error(context: &'static str) -> impl Fn(fvre_core::Error) -> HarnessError {
    move |e| HarnessError::Config(format!("{context}: {e}"))
}
