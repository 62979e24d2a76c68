//! Python bindings. Digests and MACs cross the boundary as hex strings,
//! messages and payloads as `bytes`.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt::Display;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use nversion::codegen;
use nversion::engine::{self, Digest};
use nversion::genome;
use nversion::guard::{self, SegmentDictionary};
use nversion::harness::{self, CostMode, CostParameters, ExperimentReport};
use nversion::mac::{self, MacRequest, Nonce, NONCE_LEN};
use nversion::pool::variant_pool_build;
use nversion::server::{self, NVersionDatabase, ServerOptions, Verdict};

fn value_error(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_nonce(bytes: &[u8]) -> PyResult<Nonce> {
    bytes.try_into().map_err(|_| PyValueError::new_err(format!("nonce must be {NONCE_LEN} bytes, got {}", bytes.len())))
}

/// Round-function and constant selections for the 80 rounds.
#[pyclass(name = "GeneVector", module = "nversion_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyGeneVector {
    inner: engine::GeneVector,
}

impl From<engine::GeneVector> for PyGeneVector {
    fn from(inner: engine::GeneVector) -> Self {
        PyGeneVector { inner }
    }
}

#[pymethods]
impl PyGeneVector {
    #[new]
    fn new(fp_hex: &str, k_hex: &str) -> PyResult<Self> {
        Ok(genome::decode_hex(fp_hex, k_hex).map_err(value_error)?.into())
    }

    #[staticmethod]
    fn canonical() -> Self {
        engine::canonical_genes().into()
    }

    #[staticmethod]
    #[pyo3(signature = (seed=None))]
    fn random(seed: Option<u64>) -> Self {
        genome::random_genes(seed).into()
    }

    #[getter]
    fn fp_hex(&self) -> String {
        genome::encode(&self.inner).fp.to_hex()
    }

    #[getter]
    fn k_hex(&self) -> String {
        genome::encode(&self.inner).k.to_hex()
    }

    /// Function ids 0..3 per round.
    #[getter]
    fn fp(&self) -> Vec<u8> {
        self.inner.fp.iter().map(|f| f.code()).collect()
    }

    /// Constant ids 0..3 per round.
    #[getter]
    fn k(&self) -> Vec<u8> {
        self.inner.k.iter().map(|k| k.code()).collect()
    }

    fn digest(&self, message: &[u8]) -> String {
        engine::digest(&self.inner, message).to_hex()
    }

    fn equivalent(&self, other: &PyGeneVector) -> bool {
        engine::functionally_equivalent(&self.inner, &other.inner)
    }

    /// Hex of the canonical SHA-1 over the encoded chromosomes.
    fn fingerprint(&self) -> String {
        codegen::fingerprint(&self.inner).to_hex()
    }

    fn __repr__(&self) -> String {
        format!("GeneVector('{}', '{}')", self.fp_hex(), self.k_hex())
    }
}

#[pyfunction]
fn digest(genes: &PyGeneVector, message: &[u8]) -> String {
    genes.digest(message)
}

#[pyfunction]
fn canonical_genes() -> PyGeneVector {
    PyGeneVector::canonical()
}

#[pyfunction]
#[pyo3(signature = (seed=None))]
fn random_genes(seed: Option<u64>) -> PyGeneVector {
    PyGeneVector::random(seed)
}

#[pyfunction]
fn functionally_equivalent(a: &PyGeneVector, b: &PyGeneVector) -> bool {
    a.equivalent(b)
}

/// Length-prefixed MAC input.
#[pyfunction]
fn canonicalize(client_id: &str, nonce: &[u8], payload: &[u8]) -> PyResult<Cow<'static, [u8]>> {
    let bytes = mac::canonicalize(client_id, &to_nonce(nonce)?, payload).map_err(value_error)?;
    Ok(Cow::Owned(bytes))
}

#[pyfunction]
fn compute_mac(genes: &PyGeneVector, client_id: &str, nonce: &[u8], payload: &[u8]) -> PyResult<String> {
    let tag = mac::compute_mac(&genes.inner, client_id, &to_nonce(nonce)?, payload).map_err(value_error)?;
    Ok(tag.to_hex())
}

#[pyfunction]
fn verify_mac(genes: &PyGeneVector, client_id: &str, nonce: &[u8], payload: &[u8], mac_hex: &str) -> PyResult<bool> {
    let tag = Digest::from_hex(mac_hex).map_err(value_error)?;
    let request = MacRequest::new(client_id, to_nonce(nonce)?, payload.to_vec(), tag).map_err(value_error)?;
    Ok(mac::verify_mac(&genes.inner, &request))
}

/// Returns the rendered source text.
#[pyfunction]
#[pyo3(signature = (genes, template=codegen::DEFAULT_TEMPLATE))]
fn render_variant(genes: &PyGeneVector, template: &str) -> PyResult<String> {
    Ok(codegen::render_variant(&genes.inner, template).map_err(value_error)?.source_text)
}

/// Recovers the genes from text rendered with `template`.
#[pyfunction]
#[pyo3(signature = (source, template=codegen::DEFAULT_TEMPLATE))]
fn unrender(source: &str, template: &str) -> PyResult<PyGeneVector> {
    let template = codegen::Template::bundled(template).map_err(value_error)?;
    Ok(codegen::unrender(&template, source).map_err(value_error)?.into())
}

/// `(name, size, permissions)` per mapping line.
#[pyfunction]
fn parse_maps(text: &str) -> PyResult<Vec<(String, u64, String)>> {
    let records = guard::parse_maps(text).map_err(value_error)?;
    Ok(records.into_iter().map(|r| (r.name, r.size, r.permissions)).collect())
}

/// `(kind, name, size, expected_size)`.
type ViolationTuple = (String, String, u64, Option<u64>);

#[pyfunction]
fn integrity_check(maps_text: &str, dictionary_text: &str) -> PyResult<Vec<ViolationTuple>> {
    let records = guard::parse_maps(maps_text).map_err(value_error)?;
    let dict = SegmentDictionary::parse(dictionary_text).map_err(value_error)?;
    Ok(guard::integrity_check(&records, &dict)
        .into_iter()
        .map(|v| (v.kind.to_string(), v.segment.name, v.segment.size, v.expected_size))
        .collect())
}

/// Dictionary text recording the named segments of `maps_text`.
#[pyfunction]
fn record_dictionary(maps_text: &str) -> PyResult<String> {
    let records = guard::parse_maps(maps_text).map_err(value_error)?;
    Ok(SegmentDictionary::from_records(&records).render())
}

#[pyfunction]
fn cost_total(c0: f64, c1: f64, c2: f64, c3: f64, n: u64, mode: &str) -> PyResult<f64> {
    let mode: CostMode = mode.parse().map_err(value_error)?;
    let params = CostParameters::new(c0, c1, c2, c3, n).map_err(value_error)?;
    Ok(harness::cost_total(&params, mode))
}

type ReportTuple = (BTreeMap<String, usize>, String);

fn report_tuple(report: ExperimentReport) -> ReportTuple {
    let records = report.render_records();
    (report.summary, records)
}

/// `(summary, json_lines)`.
#[pyfunction]
#[pyo3(signature = (pairs, message=b"abc".as_slice(), seed=None))]
fn divergence_experiment(pairs: usize, message: &[u8], seed: Option<u64>) -> ReportTuple {
    report_tuple(harness::divergence_experiment(pairs, message, seed))
}

/// `(summary, json_lines)`.
#[pyfunction]
#[pyo3(signature = (clients, seed=None))]
fn replication_experiment(clients: usize, seed: Option<u64>) -> PyResult<ReportTuple> {
    Ok(report_tuple(harness::replication_experiment(clients, seed).map_err(value_error)?))
}

/// In-process server: registration and verification without HTTP.
#[pyclass(name = "Server", module = "nversion_py", frozen)]
pub struct PyServer {
    inner: server::Server,
}

#[pymethods]
impl PyServer {
    #[new]
    #[pyo3(signature = (pool_size=16, seed=None, unique=false, template=codegen::DEFAULT_TEMPLATE, replay_window=1024))]
    fn new(pool_size: usize, seed: Option<u64>, unique: bool, template: &str, replay_window: usize) -> PyResult<Self> {
        let pool = variant_pool_build(pool_size, seed, template).map_err(value_error)?;
        let options = ServerOptions { replay_window, unique_assignment: unique, db_path: None, seed };
        Ok(PyServer { inner: server::Server::new(NVersionDatabase::new(), pool, options) })
    }

    /// Returns `(variant_id, source_text)`.
    fn register(&self, client_id: &str) -> PyResult<(String, String)> {
        let reg = self.inner.register_client(client_id).map_err(value_error)?;
        Ok((reg.variant.id(), reg.variant.variant.source_text))
    }

    /// Test mode only: the genes assigned to `client_id`.
    fn genes(&self, client_id: &str) -> PyResult<PyGeneVector> {
        Ok(self.inner.lookup_genes(client_id).map_err(value_error)?.into())
    }

    /// `"accepted"` or `"rejected:<reason>"`.
    fn verify(&self, client_id: &str, nonce: &[u8], payload: &[u8], mac_hex: &str) -> PyResult<String> {
        let tag = Digest::from_hex(mac_hex).map_err(value_error)?;
        let request = MacRequest::new(client_id, to_nonce(nonce)?, payload.to_vec(), tag).map_err(value_error)?;
        Ok(match self.inner.handle_verify(&request) {
            Verdict::Accepted => "accepted".to_string(),
            Verdict::Rejected(reason) => format!("rejected:{}", reason.as_str()),
        })
    }

    /// Database text in the on-disk format.
    fn dump(&self) -> String {
        self.inner.snapshot().render()
    }

    fn __len__(&self) -> usize {
        self.inner.snapshot().len()
    }
}

#[pymodule]
mod nversion_py {
    #[pymodule_export]
    use super::{
        canonical_genes, canonicalize, compute_mac, cost_total, digest, divergence_experiment,
        functionally_equivalent, integrity_check, parse_maps, random_genes, record_dictionary,
        render_variant, replication_experiment, unrender, verify_mac, PyGeneVector, PyServer,
    };
}
