//! Sentence encoders, cosine similarity and exact top-k selection.
//!
//! The similarity kernels are generic over [`Scalar`] so that retrieval can
//! run in `f32` for large stores or `f64` where reproducibility of the
//! last bits matters. The crate root fixes `f64` for the pipeline.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Debug;
use std::time::Duration;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::RetryPolicy;

/// Floating point scalar used by embeddings: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    /// Wraps raw values without normalizing.
    pub fn from_values(values: Vec<T>) -> Self {
        Self { values }
    }

    /// L2-normalizes `values`; an all-zero input stays zero.
    pub fn normalized(mut values: Vec<T>) -> Self {
        let norm = l2_norm(&values);
        if norm > T::zero() {
            for v in &mut values {
                *v = *v / norm;
            }
        }
        Self { values }
    }

    pub fn zeros(dimension: usize) -> Self {
        Self {
            values: vec![T::zero(); dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        l2_norm(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            values: self.values.iter().map(|v| *v * factor).collect(),
        }
    }
}

fn l2_norm<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt()
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

/// `dot(u,v) / (|u| |v|)`, clamped to [-1, 1]; zero operands give 0.
pub fn cosine<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<T, DimensionMismatch> {
    if u.dimension() != v.dimension() {
        return Err(DimensionMismatch {
            left: u.dimension(),
            right: v.dimension(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu.is_zero() || nv.is_zero() {
        return Ok(T::zero());
    }
    let dot = u
        .values
        .iter()
        .zip(&v.values)
        .fold(T::zero(), |acc, (a, b)| acc + *a * *b);
    let c = dot / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Heap entry ordered so the *worst* kept candidate sits on top: lower
/// similarity is greater, and among equal similarity the larger index is
/// greater.
#[derive(Debug)]
struct Ranked<T> {
    sim: T,
    index: usize,
}

impl<T: Scalar> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Ranked<T> {}

impl<T: Scalar> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .partial_cmp(&self.sim)
            .unwrap_or(Ordering::Equal)
            .then(self.index.cmp(&other.index))
    }
}

/// Indices of the `k` most similar candidates, best first, ties broken by
/// ascending index. Candidates whose dimension differs from the query score
/// as 0. Returns every candidate when `k` exceeds the count, and nothing for
/// `k == 0`.
pub fn top_k<T: Scalar>(query: &EmbeddingVector<T>, candidates: &[EmbeddingVector<T>], k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Ranked<T>> = BinaryHeap::with_capacity(k + 1);
    for (index, cand) in candidates.iter().enumerate() {
        let sim = cosine(query, cand).unwrap_or_else(|_| T::zero());
        let entry = Ranked { sim, index };
        if heap.len() < k {
            heap.push(entry);
        } else if let Some(worst) = heap.peek() {
            if entry < *worst {
                heap.pop();
                heap.push(entry);
            }
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| r.index).collect()
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend unreachable: {0}")]
    Unreachable(String),
    #[error("embedding backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed embedding response: {0}")]
    Decode(String),
    #[error("embedding has dimension {got}, encoder expects {expected}")]
    Dimension { expected: usize, got: usize },
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Unreachable(_))
            || matches!(self, EmbedError::Status { status, .. } if *status == 429 || *status >= 500)
    }
}

/// Sentence encoder `e(.)`: text to unit vector, deterministic per process.
pub trait Encoder<T: Scalar = f64>: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError>;
}

/// Signed feature hashing over lowercase alphanumeric tokens, then L2
/// normalization. Order-insensitive and dependency-free.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dimension: usize,
    name: String,
}

impl HashingEncoder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "hashing encoder needs at least one bucket");
        Self {
            dimension,
            name: format!("hashing-{dimension}"),
        }
    }
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

/// Lowercase alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl<T: Scalar> Encoder<T> for HashingEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError> {
        let mut values = vec![T::zero(); self.dimension];
        for token in tokenize(text) {
            let h = fnv1a64(token.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            if h >> 63 == 1 {
                values[bucket] = values[bucket] - T::one();
            } else {
                values[bucket] = values[bucket] + T::one();
            }
        }
        Ok(EmbeddingVector::normalized(values))
    }
}

#[derive(Debug, Clone)]
pub struct HttpEncoderConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dimension: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Client for a hosted embeddings endpoint (`{model, input: [text]}` in,
/// `{data: [{embedding}]}` out). Returned vectors are re-normalized.
pub struct HttpEncoder {
    config: HttpEncoderConfig,
    agent: ureq::Agent,
    name: String,
}

impl HttpEncoder {
    pub fn new(config: HttpEncoderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let name = format!("http:{}", config.model);
        Self { config, agent, name }
    }

    fn request_once(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = EmbeddingsRequest {
            model: &self.config.model,
            input: vec![text],
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| EmbedError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(EmbedError::Status { status, body });
        }
        let parsed: EmbeddingsResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Decode(e.to_string()))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| EmbedError::Decode("empty data list".into()))
    }
}

impl<T: Scalar> Encoder<T> for HttpEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError> {
        if text.is_empty() {
            return Ok(EmbeddingVector::zeros(self.config.dimension));
        }
        let raw = self
            .config
            .retry
            .run(|| self.request_once(text), EmbedError::is_retryable)?;
        if raw.len() != self.config.dimension {
            return Err(EmbedError::Dimension {
                expected: self.config.dimension,
                got: raw.len(),
            });
        }
        let values = raw
            .into_iter()
            .map(|v| T::from_f64(v).ok_or_else(|| EmbedError::Decode(format!("non-finite component {v}"))))
            .collect::<Result<Vec<T>, _>>()?;
        Ok(EmbeddingVector::normalized(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn v(values: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::from_values(values.to_vec())
    }

    /// Reference bag-of-words cosine over the same tokenization, no hashing.
    fn bow_cosine(a: &str, b: &str) -> f64 {
        let count = |s: &str| {
            let mut m: HashMap<String, f64> = HashMap::new();
            for t in s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
                *m.entry(t.to_lowercase()).or_default() += 1.0;
            }
            m
        };
        let (ca, cb) = (count(a), count(b));
        let dot: f64 = ca.iter().map(|(k, x)| x * cb.get(k).copied().unwrap_or(0.0)).sum();
        let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn cosine_examples() {
        let e1 = v(&[1.0, 0.0, 0.0]);
        let e2 = v(&[0.0, 1.0, 0.0]);
        assert!((cosine(&e1, &e1).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        let a = v(&[0.6, 0.8, 0.0]);
        let b = v(&[0.8, 0.6, 0.0]);
        // 0.6*0.8 + 0.8*0.6
        assert!((cosine(&a, &b).unwrap() - 0.96).abs() < 1e-12);
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(cosine(&e1, &v(&[1.0])), Err(DimensionMismatch { left: 3, right: 1 }));
    }

    #[test]
    fn top_k_examples() {
        let q = v(&[1.0, 0.0]);
        let cands = vec![v(&[0.0, 1.0]), v(&[1.0, 0.0])];
        assert_eq!(top_k(&q, &cands, 5), vec![1, 0]);
        let ties = vec![v(&[1.0, 1.0]), v(&[1.0, 1.0]), v(&[2.0, 2.0])];
        assert_eq!(top_k(&q, &ties, 3), vec![0, 1, 2]);
        assert!(top_k(&q, &ties, 0).is_empty());
    }

    #[test]
    fn hashing_encoder_basics() {
        let enc = HashingEncoder::default();
        let z: EmbeddingVector<f64> = enc.embed("").unwrap();
        assert!(z.is_zero());
        assert_eq!(z.dimension(), 256);
        let a: EmbeddingVector<f64> = enc.embed("Clean the PAN").unwrap();
        let b: EmbeddingVector<f64> = enc.embed("clean the pan").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        let f: EmbeddingVector<f32> = enc.embed("clean the pan").unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hashing_encoder_tracks_bag_of_words_ordering() {
        // oracle: bow("clean pan","clean the pan") = 2/sqrt(6) ~ 0.816, bow(.., "heat egg") = 0
        let near = bow_cosine("clean pan", "clean the pan");
        let far = bow_cosine("clean pan", "heat egg");
        assert!((near - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert_eq!(far, 0.0);
        let enc = HashingEncoder::default();
        let e = |s: &str| -> EmbeddingVector<f64> { enc.embed(s).unwrap() };
        let hn = cosine(&e("clean pan"), &e("clean the pan")).unwrap();
        let hf = cosine(&e("clean pan"), &e("heat egg")).unwrap();
        assert!(hn > hf, "{hn} vs {hf}");
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in prop::collection::vec(-10.0f64..10.0, 8), b in prop::collection::vec(-10.0f64..10.0, 8)) {
            let (a, b) = (v(&a), v(&b));
            prop_assert_eq!(cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
        }

        #[test]
        fn top_k_scale_invariant_and_sorted(
            q in prop::collection::vec(-1.0f64..1.0, 6),
            cands in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..40),
            k in 1usize..50,
            scale in 0.01f64..100.0,
        ) {
            let q = v(&q);
            let cands: Vec<_> = cands.iter().map(|c| v(c)).collect();
            let got = top_k(&q, &cands, k);
            prop_assert_eq!(got.len(), k.min(cands.len()));
            let scaled: Vec<_> = cands.iter().map(|c| c.scaled(scale)).collect();
            prop_assert_eq!(&top_k(&q, &scaled, k), &got);
            let sims: Vec<f64> = got.iter().map(|&i| cosine(&q, &cands[i]).unwrap()).collect();
            prop_assert!(sims.windows(2).all(|w| w[0] >= w[1]));
            let mut dedup = got.clone();
            dedup.sort_unstable();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), got.len());
        }
    }
}
