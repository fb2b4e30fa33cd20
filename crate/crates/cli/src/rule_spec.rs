//! Rule arguments: `oja`, `lr1`..`lr4`, `expr:KERNEL` or `file:PATH`.
//!
//! A file holds either kernel text or a champion JSON with a `genome` key.

use std::fs;

use plastigen::cgp::{parse_rule, Genome, OperatorSet};
use plastigen::plasticity::PlasticityRule;
use plastigen::Error;

use crate::error::{CliError, CliResult};

fn parse_kernel(source: &str, spec: &str) -> CliResult<PlasticityRule> {
    parse_rule(source)
        .map(|kernel| PlasticityRule::named(spec, kernel))
        .map_err(|e| CliError::Usage(format!("in rule '{spec}': {}", e.render(source))))
}

pub fn resolve(spec: &str) -> CliResult<PlasticityRule> {
    if let Some(source) = spec.strip_prefix("expr:") {
        return parse_kernel(source, spec);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let json: Option<serde_json::Value> = serde_json::from_str(&text).ok();
        return match json.as_ref().and_then(|v| v.get("genome")) {
            Some(genome) => {
                let genome: Genome = serde_json::from_value(genome.clone()).map_err(Error::from)?;
                let kernel = genome.decode(&OperatorSet::default())?;
                Ok(PlasticityRule::named(spec, kernel))
            }
            None => parse_kernel(text.trim(), spec),
        };
    }
    PlasticityRule::builtin(spec).map_err(|e| CliError::Usage(e.to_string()))
}

/// True for the builtin lr3 spelling, which has a closed-form field.
pub fn is_lr3(spec: &str) -> bool {
    spec.eq_ignore_ascii_case("lr3")
}
