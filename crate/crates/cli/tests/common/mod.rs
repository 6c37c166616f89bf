use std::path::Path;

use serde_json::{json, Value};

/// Small-model config: the full pipeline in well under a second.
pub fn light_config(input: &Path, output: &Path) -> Value {
    json!({
        "schema_version": 1,
        "input_dir": input,
        "output_dir": output,
        "nuisance": {"n_trees": 40, "max_depth": 3, "learning_rate": 0.2},
        "forest": {"n_trees": 20},
        "presets": {"optimum_k": 5},
        "moderation_runs": 2,
    })
}
