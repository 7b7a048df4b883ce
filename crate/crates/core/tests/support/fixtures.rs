use resume_audit::report::ExperimentConfig;

pub const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/fixtures");

/// Noise level of the mock backend used by the null and power fixtures.
pub const MOCK_NOISE: f64 = 0.75;

pub const BIAS_DIRECTION: &str = "Given a job description, retrieve relevant resumes";

pub fn mock_backend(id: &str, dim: usize, noise: f64) -> String {
    format!("[[backends]]\nid = \"{id}\"\ndim = {dim}\nkind = \"mock\"\nnoise = {noise}\n")
}

pub fn biased_mock_backend(id: &str, dim: usize, noise: f64, groups: &str, delta: f64) -> String {
    format!(
        "{}[backends.bias]\ngroups = {groups}\ndelta = {delta}\ndirection = \"{BIAS_DIRECTION}\"\n",
        mock_backend(id, dim, noise)
    )
}

pub fn remote_backend(id: &str, dim: usize, endpoint: &str, extra: &str) -> String {
    format!(
        "[[backends]]\nid = \"{id}\"\ndim = {dim}\nkind = \"remote\"\nendpoint = \"{endpoint}\"\nmodel = \"echo\"\nbackoff_ms = 0\n{extra}"
    )
}

/// Config text for the bundled mini corpus (two occupations, 20 resumes and 10 jobs each).
pub fn mini_toml(experiment: &str, seed: u64, top_level: &str, backends: &str) -> String {
    format!(
        "experiment = \"{experiment}\"\nseed = {seed}\n{top_level}\n\
         [corpus]\nresumes = \"{FIXTURES}/mini_resumes.csv\"\njobs = \"{FIXTURES}/mini_jobs.csv\"\nmin_jobs = 10\n\n{backends}"
    )
}

pub fn mini_config(experiment: &str, seed: u64, top_level: &str, backends: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&mini_toml(experiment, seed, top_level, backends)).expect("fixture config parses")
}
