//! Loopback embedding service for the HTTP provider contract tests.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use semcom_core::metrics::{sentence_similarity, EmbeddingProvider, HttpEmbedding, HttpEmbeddingConfig, MetricsError};

#[derive(Clone, Copy, Debug)]
#[allow(dead_code)]
pub enum Behavior {
    Healthy,
    /// The first `n` requests get `status`, later ones succeed.
    FailFirst(usize, u16),
    Always(u16),
    /// One vector per batch is a dimension short.
    Ragged,
    Malformed,
    /// One vector fewer than sentences.
    WrongCount,
}

pub struct MockServer {
    pub url: String,
    pub dim: usize,
    batches: Arc<Mutex<Vec<Vec<String>>>>,
    hits: Arc<AtomicUsize>,
}

/// Deterministic, strictly positive embedding of a sentence.
pub fn vector(sentence: &str, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let mut h = DefaultHasher::new();
            (sentence, i).hash(&mut h);
            0.1 + (h.finish() % 1000) as f64 / 1000.0
        })
        .collect()
}

impl MockServer {
    pub fn start(behavior: Behavior, dim: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let batches = Arc::new(Mutex::new(Vec::new()));
        let hits = Arc::new(AtomicUsize::new(0));
        let (b, h) = (batches.clone(), hits.clone());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (b, h) = (b.clone(), h.clone());
                thread::spawn(move || serve(stream, behavior, dim, &b, &h));
            }
        });
        Self { url, dim, batches, hits }
    }

    /// Sentences of every well-formed request, in arrival order.
    pub fn batches(&self) -> Vec<Vec<String>> {
        self.batches.lock().unwrap().clone()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn read_body(r: &mut BufReader<TcpStream>) -> Option<Vec<u8>> {
    let mut length = 0usize;
    let mut chunked = false;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().ok()?;
        }
        if lower.starts_with("transfer-encoding:") && lower.contains("chunked") {
            chunked = true;
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            let mut size = String::new();
            r.read_line(&mut size).ok()?;
            let n = usize::from_str_radix(size.trim().split(';').next()?, 16).ok()?;
            let mut chunk = vec![0; n + 2];
            r.read_exact(&mut chunk).ok()?;
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }
    } else {
        body.resize(length, 0);
        r.read_exact(&mut body).ok()?;
    }
    Some(body)
}

fn serve(stream: TcpStream, behavior: Behavior, dim: usize, batches: &Mutex<Vec<Vec<String>>>, hits: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone socket"));
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let Some(body) = read_body(&mut reader) else { return };
    let n = hits.fetch_add(1, Ordering::SeqCst);
    let sentences: Vec<String> = serde_json::from_slice::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| serde_json::from_value(v["sentences"].clone()).ok())
        .unwrap_or_default();
    batches.lock().unwrap().push(sentences.clone());
    let ok = |vs: Vec<Vec<f64>>| (200, serde_json::json!({ "embeddings": vs }).to_string());
    let (status, text) = match behavior {
        Behavior::Always(s) => (s, "{\"error\":\"unavailable\"}".to_string()),
        Behavior::FailFirst(k, s) if n < k => (s, "{\"error\":\"busy\"}".to_string()),
        Behavior::Malformed => (200, "{\"embeddings\": [[0.1, 0.2".to_string()),
        Behavior::WrongCount => ok(sentences.iter().skip(1).map(|s| vector(s, dim)).collect()),
        Behavior::Ragged => ok(sentences
            .iter()
            .enumerate()
            .map(|(i, s)| vector(s, if i == 0 { dim - 1 } else { dim }))
            .collect()),
        _ => ok(sentences.iter().map(|s| vector(s, dim)).collect()),
    };
    let mut out = stream;
    let _ = write!(
        out,
        "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = out.flush();
}

fn client(server: &MockServer, retries: usize) -> HttpEmbedding {
    let mut c = HttpEmbeddingConfig::new(server.url.clone());
    c.retries = retries;
    c.backoff_ms = 5;
    c.timeout_ms = 5000;
    HttpEmbedding::new(c).expect("valid config")
}

fn sentences(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("sentence number {i} of the batch")).collect()
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Behavioural contract of the HTTP provider against the mock service,
/// one named outcome per clause.
pub fn contract_checks() -> Vec<(&'static str, Result<(), String>)> {
    let mut out = Vec::new();

    let s = MockServer::start(Behavior::Healthy, 8);
    let input = sentences(150);
    let r = client(&s, 0).embed(&input);
    out.push(("batches_of_at_most_64_in_order", match r {
        Ok(v) => {
            let sizes: Vec<usize> = s.batches().iter().map(Vec::len).collect();
            let mut seen: Vec<String> = s.batches().concat();
            seen.sort();
            let mut want = input.clone();
            want.sort();
            let in_order = v.len() == input.len()
                && v.iter().zip(&input).all(|(e, t)| e.iter().zip(vector(t, 8)).all(|(a, b)| (a - b).abs() < 1e-12));
            check(
                sizes.len() == 3 && sizes.iter().all(|&n| n <= 64) && seen == want && in_order,
                format!("batch sizes {sizes:?}, order kept: {in_order}"),
            )
        }
        Err(e) => Err(e.to_string()),
    }));

    let s = MockServer::start(Behavior::Healthy, 8);
    let r = client(&s, 0).embed(&[]);
    out.push(("empty_input_sends_nothing", check(
        matches!(&r, Ok(v) if v.is_empty()) && s.hits() == 0,
        format!("{r:?}, {} requests", s.hits()),
    )));

    let s = MockServer::start(Behavior::Healthy, 8);
    let refs = sentences(10);
    let r = sentence_similarity(&client(&s, 0), &refs, &refs);
    out.push(("identical_sentences_score_one", match r {
        Ok(v) => check(v.iter().all(|&x| (x - 1.0).abs() < 1e-12), format!("{v:?}")),
        Err(e) => Err(e.to_string()),
    }));

    let s = MockServer::start(Behavior::FailFirst(2, 503), 8);
    let r = client(&s, 3).embed(&sentences(3));
    out.push(("retries_transient_5xx", check(
        r.as_ref().is_ok_and(|v| v.len() == 3) && s.hits() == 3,
        format!("{:?} after {} requests", r.map(|v| v.len()), s.hits()),
    )));

    let s = MockServer::start(Behavior::FailFirst(1, 429), 8);
    let r = client(&s, 1).embed(&sentences(3));
    out.push(("retries_rate_limit", check(
        r.is_ok() && s.hits() == 2,
        format!("{} requests", s.hits()),
    )));

    let s = MockServer::start(Behavior::Always(503), 8);
    let r = client(&s, 2).embed(&sentences(3));
    out.push(("gives_up_after_retries", check(
        matches!(r, Err(MetricsError::Status { status: 503, .. })) && s.hits() == 3,
        format!("{r:?} after {} requests", s.hits()),
    )));

    let s = MockServer::start(Behavior::Always(400), 8);
    let r = client(&s, 3).embed(&sentences(3));
    out.push(("client_errors_are_not_retried", check(
        matches!(r, Err(MetricsError::Status { status: 400, .. })) && s.hits() == 1,
        format!("{r:?} after {} requests", s.hits()),
    )));

    let s = MockServer::start(Behavior::Ragged, 8);
    let r = client(&s, 0).embed(&sentences(4));
    out.push(("dimension_mismatch_is_an_error", check(
        matches!(r, Err(MetricsError::DimensionMismatch { .. })),
        format!("{r:?}"),
    )));

    let s = MockServer::start(Behavior::Healthy, 8);
    let mut c = HttpEmbeddingConfig::new(s.url.clone());
    c.dimension = Some(16);
    let r = HttpEmbedding::new(c).and_then(|h| h.embed(&sentences(2)));
    out.push(("declared_dimension_is_enforced", check(
        matches!(r, Err(MetricsError::DimensionMismatch { expected: 16, got: 8 })),
        format!("{r:?}"),
    )));

    let s = MockServer::start(Behavior::WrongCount, 8);
    let r = client(&s, 3).embed(&sentences(4));
    out.push(("count_mismatch_is_an_error", check(
        matches!(r, Err(MetricsError::CountMismatch { expected: 4, count: 3 })) && s.hits() == 1,
        format!("{r:?}"),
    )));

    let s = MockServer::start(Behavior::Malformed, 8);
    let r = client(&s, 3).embed(&sentences(2));
    out.push(("malformed_body_is_an_error", check(
        matches!(r, Err(MetricsError::Malformed(_))) && s.hits() == 1,
        format!("{r:?}"),
    )));

    // nothing listens on the discard port
    let mut c = HttpEmbeddingConfig::new("http://127.0.0.1:9/embed");
    c.retries = 1;
    c.backoff_ms = 1;
    let r = HttpEmbedding::new(c).and_then(|h| h.embed(&sentences(1)));
    out.push(("unreachable_service_reports_attempts", check(
        matches!(r, Err(MetricsError::Transport { attempts: 2, .. })),
        format!("{r:?}"),
    )));

    let h = HttpEmbedding::new(HttpEmbeddingConfig::new("http://127.0.0.1:9/"));
    out.push(("provider_reports_declared_dimension", check(
        h.map(|h| h.dimension() == 0).unwrap_or(false),
        "undeclared dimension should read 0",
    )));
    out
}
