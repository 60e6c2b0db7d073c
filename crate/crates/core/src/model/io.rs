use std::path::Path;

use super::TwoStageProblem;
use crate::{Error, Result};

/// Parses an instance document. Shapes are checked; emptiness and sample
/// membership are left to [`super::validate`].
pub fn from_json_str(text: &str) -> Result<TwoStageProblem> {
    let p: TwoStageProblem = serde_json::from_str(text)?;
    p.check_dimensions()?;
    if !p.metric.epsilon.is_finite() {
        return Err(Error::InvalidInput("radius must be finite".into()));
    }
    Ok(p)
}

pub fn to_json_string(p: &TwoStageProblem) -> Result<String> {
    Ok(serde_json::to_string_pretty(p)?)
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<TwoStageProblem> {
    from_json_str(&std::fs::read_to_string(path)?)
}

pub fn save_problem(p: &TwoStageProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json_string(p)?)?;
    Ok(())
}
