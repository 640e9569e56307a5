//! Python module `longdial`: scoring helpers, metrics and a conversation
//! object driving the full agent.

use std::path::PathBuf;
use std::sync::Arc;

use longdial::backend::{BackendKind, ChatBackend, ChatModel};
use longdial::embedding::{semantic_score as sem_score, EmbeddingVector, HashingEncoder, TextEncoder};
use longdial::memory::{combine_scores, time_decay as decay, RetrievalConfig};
use longdial::metrics::{self, metric_tokens, Smoothing};
use longdial::persistence::{load_state, save_state};
use longdial::topics::{self, TopicSet};
use longdial::{AgentRuntime, BackendConfig, ModuleSet, Timestamp};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

create_exception!(longdial, LongdialError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    LongdialError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            _ => n.to_string().into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &serde_json::to_value(value).map_err(err)?)
}

fn vector(values: Vec<f64>) -> PyResult<EmbeddingVector> {
    EmbeddingVector::new(values).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Deterministic feature-hashing embedding of `text` (unit length).
#[pyfunction]
#[pyo3(signature = (text, dim = HashingEncoder::DEFAULT_DIM))]
fn embed(text: &str, dim: usize) -> PyResult<Vec<f64>> {
    if dim == 0 {
        return Err(PyValueError::new_err("dim must be positive"));
    }
    Ok(HashingEncoder::new(dim).embed(text).map_err(err)?.values().to_vec())
}

/// Cosine similarity clamped to [0, 1].
#[pyfunction]
fn semantic_score(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    sem_score(&vector(a)?, &vector(b)?).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Sorted content-word topics of `text`.
#[pyfunction]
fn extract_topics(text: &str) -> Vec<String> {
    topics::extract_topics(text).iter().map(str::to_owned).collect()
}

/// Mean of |Q∩K|/|Q| and |Q∩K|/|K|; 0 when either set is empty.
#[pyfunction]
fn topic_overlap(query: Vec<String>, key: Vec<String>) -> f64 {
    let q: TopicSet = query.into_iter().collect();
    let k: TopicSet = key.into_iter().collect();
    topics::topic_overlap(&q, &k)
}

/// exp(-elapsed_hours / tau_hours)
#[pyfunction]
#[pyo3(signature = (elapsed_hours, tau_hours = RetrievalConfig::default().tau_hours))]
fn time_decay(elapsed_hours: f64, tau_hours: f64) -> PyResult<f64> {
    if !(tau_hours > 0.0) || elapsed_hours < 0.0 {
        return Err(PyValueError::new_err("need tau_hours > 0 and elapsed_hours >= 0"));
    }
    Ok(decay(elapsed_hours, tau_hours))
}

/// Decayed sum of semantic and topic scores.
#[pyfunction]
#[pyo3(signature = (s_sem, s_top, elapsed_hours, tau_hours = RetrievalConfig::default().tau_hours))]
fn overall_score(s_sem: f64, s_top: f64, elapsed_hours: f64, tau_hours: f64) -> PyResult<f64> {
    Ok(combine_scores(s_sem, s_top, time_decay(elapsed_hours, tau_hours)?))
}

fn smoothing(name: &str) -> PyResult<Smoothing> {
    match name {
        "none" => Ok(Smoothing::None),
        "add-one" => Ok(Smoothing::AddOne),
        other => Err(PyValueError::new_err(format!("unknown smoothing {other:?}; use 'none' or 'add-one'"))),
    }
}

/// Sentence BLEU-n of `hypothesis` against `reference`.
#[pyfunction]
#[pyo3(signature = (hypothesis, reference, n = 2, smoothing = "add-one"))]
fn bleu(hypothesis: &str, reference: &str, n: usize, smoothing: &str) -> PyResult<f64> {
    if n == 0 {
        return Err(PyValueError::new_err("n must be at least 1"));
    }
    let s = self::smoothing(smoothing)?;
    Ok(metrics::bleu_n(&metric_tokens(hypothesis), &metric_tokens(reference), n, s))
}

/// LCS-based ROUGE-L F1.
#[pyfunction]
fn rouge_l(hypothesis: &str, reference: &str) -> f64 {
    metrics::rouge_l(&metric_tokens(hypothesis), &metric_tokens(reference))
}

/// METEOR with exact unigram matching.
#[pyfunction]
fn meteor(hypothesis: &str, reference: &str) -> f64 {
    metrics::meteor(&metric_tokens(hypothesis), &metric_tokens(reference))
}

/// BLEU-2, BLEU-3, ROUGE-L and METEOR as a dict.
#[pyfunction]
fn score_response<'py>(py: Python<'py>, hypothesis: &str, reference: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::score_response(hypothesis, reference))
}

/// One conversation with its own memory, personas and simulated clock.
///
/// Uses the deterministic mock backend unless `backend_endpoint` is given,
/// in which case an OpenAI-style chat completions server is called.
#[pyclass(module = "longdial")]
struct Conversation {
    runtime: AgentRuntime,
    inner: longdial::Conversation,
}

struct Settings {
    gamma: f64,
    tau_hours: f64,
    top_k: usize,
    beta_secs: f64,
    modules: String,
    dim: usize,
    backend_endpoint: Option<String>,
    backend_model: String,
    api_key_env: Option<String>,
}

impl Settings {
    fn runtime(&self) -> PyResult<AgentRuntime> {
        let retrieval = RetrievalConfig {
            gamma: self.gamma,
            tau_hours: self.tau_hours,
            top_k: self.top_k,
            beta_secs: self.beta_secs,
        };
        retrieval.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        let modules: ModuleSet = self.modules.parse().map_err(PyValueError::new_err)?;
        if self.dim == 0 {
            return Err(PyValueError::new_err("dim must be positive"));
        }
        let backend = match &self.backend_endpoint {
            None => BackendConfig::mock(),
            Some(endpoint) => BackendConfig {
                kind: BackendKind::RemoteHttp,
                endpoint: endpoint.clone(),
                model_id: self.backend_model.clone(),
                api_key_env: self.api_key_env.clone(),
                ..BackendConfig::default()
            },
        };
        let model: Arc<dyn ChatModel> = Arc::new(ChatBackend::new(backend).map_err(err)?);
        let mut runtime = AgentRuntime::new(model, Arc::new(HashingEncoder::new(self.dim))).with_modules(modules);
        runtime.retrieval = retrieval;
        Ok(runtime)
    }
}

#[pymethods]
impl Conversation {
    #[new]
    #[pyo3(signature = (
        user_name,
        agent_name,
        conversation_id = "py",
        clock_start = 1_704_067_200,
        *,
        gamma = 0.5,
        tau_hours = 168.0,
        top_k = 2,
        beta_secs = 3600.0,
        modules = "full",
        dim = 256,
        backend_endpoint = None,
        backend_model = "mock",
        api_key_env = None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        user_name: &str,
        agent_name: &str,
        conversation_id: &str,
        clock_start: i64,
        gamma: f64,
        tau_hours: f64,
        top_k: usize,
        beta_secs: f64,
        modules: &str,
        dim: usize,
        backend_endpoint: Option<String>,
        backend_model: &str,
        api_key_env: Option<String>,
    ) -> PyResult<Self> {
        if user_name.trim().is_empty() || agent_name.trim().is_empty() || conversation_id.is_empty() {
            return Err(PyValueError::new_err("names and conversation_id must be non-empty"));
        }
        let settings = Settings {
            gamma,
            tau_hours,
            top_k,
            beta_secs,
            modules: modules.into(),
            dim,
            backend_endpoint,
            backend_model: backend_model.into(),
            api_key_env,
        };
        Ok(Self {
            runtime: settings.runtime()?,
            inner: longdial::Conversation::new(conversation_id, user_name, agent_name, Some(Timestamp(clock_start))),
        })
    }

    /// Restores a conversation saved with `save`. Settings are not stored in
    /// the snapshot and default as in the constructor.
    #[staticmethod]
    #[pyo3(signature = (path, *, gamma = 0.5, tau_hours = 168.0, top_k = 2, beta_secs = 3600.0, modules = "full", dim = 256))]
    fn load(path: PathBuf, gamma: f64, tau_hours: f64, top_k: usize, beta_secs: f64, modules: &str, dim: usize) -> PyResult<Self> {
        let settings = Settings {
            gamma,
            tau_hours,
            top_k,
            beta_secs,
            modules: modules.into(),
            dim,
            backend_endpoint: None,
            backend_model: "mock".into(),
            api_key_env: None,
        };
        let snapshot = load_state(&path).map_err(err)?;
        Ok(Self { runtime: settings.runtime()?, inner: longdial::Conversation::from_snapshot(snapshot) })
    }

    #[getter]
    fn conversation_id(&self) -> String {
        self.inner.id().to_owned()
    }

    /// Current simulated time in Unix seconds.
    #[getter]
    fn now(&self) -> i64 {
        self.inner.now().0
    }

    #[getter]
    fn session_index(&self) -> u32 {
        self.inner.state.cache.session_index()
    }

    /// Moves the clock forward and returns the new time.
    fn advance(&mut self, seconds: i64) -> PyResult<i64> {
        Ok(self.inner.advance_clock(seconds).map_err(err)?.0)
    }

    /// Sends a user message and returns the full turn report as a dict.
    fn send<'py>(&mut self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let report = self.runtime.handle_message(&mut self.inner, text).map_err(err)?;
        to_py(py, &report)
    }

    /// Scores stored memories against `query` without changing any state
    /// other than the last-retrieval diagnostics.
    fn retrieve<'py>(&mut self, py: Python<'py>, query: &str) -> PyResult<Bound<'py, PyAny>> {
        let now = self.inner.now();
        let result = self.runtime.retrieve_for(&mut self.inner, query, now).map_err(err)?;
        to_py(py, &result)
    }

    fn memories<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.state.bank.records())
    }

    fn personas<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.state.personas)
    }

    fn transcript<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.state.transcript)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.state.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_state(&self.inner.state, &path).map_err(err)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.state;
        format!(
            "Conversation(id={:?}, user={:?}, agent={:?}, session={}, memories={})",
            s.conversation_id,
            s.user_name,
            s.agent_name,
            s.cache.session_index(),
            s.bank.len()
        )
    }
}

#[pymodule]
#[pyo3(name = "longdial")]
fn longdial_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LongdialError", m.py().get_type::<LongdialError>())?;
    m.add("NO_RELEVANT_MEMORY", longdial::memory::NO_RELEVANT_MEMORY)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(semantic_score, m)?)?;
    m.add_function(wrap_pyfunction!(extract_topics, m)?)?;
    m.add_function(wrap_pyfunction!(topic_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(time_decay, m)?)?;
    m.add_function(wrap_pyfunction!(overall_score, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(meteor, m)?)?;
    m.add_function(wrap_pyfunction!(score_response, m)?)?;
    m.add_class::<Conversation>()?;
    Ok(())
}
