//! End-to-end link assembly, training data generation, Monte Carlo BER
//! sweeps and the text formats that carry their results.

pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod link;
pub mod sweep;

pub use config::ExperimentConfig;

/// `# key value` header lines shared by every output file.
pub fn metadata(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    vec![("config-hash", cfg.hash()), ("seed", cfg.seed.to_string())]
}

pub(crate) fn write_metadata(out: &mut String, meta: &[(&str, String)]) {
    for (k, v) in meta {
        out.push_str("# ");
        out.push_str(k);
        out.push(' ');
        out.push_str(v);
        out.push('\n');
    }
}

/// Splits a commented CSV into its `# key value` metadata and data lines,
/// each with its 1-based line number.
pub(crate) fn split_commented(text: &str) -> (Vec<(String, String)>, Vec<(usize, &str)>) {
    let mut meta = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.push((k.to_string(), v.trim().to_string()));
        } else if !line.is_empty() {
            lines.push((i + 1, line));
        }
    }
    (meta, lines)
}
