//! Shared test support: an independent brute-force QP oracle for the
//! one-class SVM dual, and a scriptable stub chat-completion server.

#![allow(dead_code)]

pub mod golden;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

// ---------------------------------------------------------------------------
// Brute-force oracle for: minimize (1/2) a' K a  s.t.  sum a = 1, 0 <= a <= C
//
// Projected gradient descent with an exact projection onto the capped
// simplex. Everything here is computed from scratch (own kernel code) so the
// oracle shares no path with the solver under test.
// ---------------------------------------------------------------------------

pub struct OracleSolution {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    points: Vec<Vec<f64>>,
    gamma: f64,
}

fn rbf(gamma: f64, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Projects `v` onto { a : sum a = 1, 0 <= a <= cap } by bisecting the
/// shift tau in a_i = clip(v_i - tau, 0, cap).
fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let n = v.len();
    assert!(cap * n as f64 >= 1.0 - 1e-12, "infeasible cap");
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - cap - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let total: f64 = v.iter().map(|&vi| (vi - mid).clamp(0.0, cap)).sum();
        if total > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|&vi| (vi - tau).clamp(0.0, cap)).collect()
}

/// Solves the dual by projected gradient descent and derives rho the same
/// way the contract defines it (mean gradient over margin support vectors,
/// falling back to all support vectors).
pub fn brute_force_ocsvm(points: &[Vec<f64>], nu: f64, gamma: f64) -> OracleSolution {
    let n = points.len();
    let cap = 1.0 / (nu * n as f64);
    let mut k = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = rbf(gamma, &points[i], &points[j]);
        }
    }

    let mut alphas = project_capped_simplex(&vec![1.0 / n as f64; n], cap);
    // Step size 1/L with L bounded by the trace of K (all diagonal ones).
    let step = 1.0 / n as f64;
    let mut last_obj = f64::INFINITY;
    for iter in 0..300_000 {
        let grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * alphas[j]).sum())
            .collect();
        let proposal: Vec<f64> = alphas
            .iter()
            .zip(&grad)
            .map(|(a, g)| a - step * g)
            .collect();
        alphas = project_capped_simplex(&proposal, cap);
        if iter % 500 == 0 {
            let obj = 0.5
                * (0..n)
                    .map(|i| (0..n).map(|j| alphas[i] * k[i][j] * alphas[j]).sum::<f64>())
                    .sum::<f64>();
            if (last_obj - obj).abs() < 1e-14 {
                break;
            }
            last_obj = obj;
        }
    }

    let grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k[i][j] * alphas[j]).sum())
        .collect();
    let objective = 0.5 * alphas.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    let tol = 1e-8;
    let margin: Vec<usize> = (0..n)
        .filter(|&i| alphas[i] > tol && alphas[i] < cap - tol)
        .collect();
    let support: Vec<usize> = (0..n).filter(|&i| alphas[i] > tol).collect();
    let rho_set = if margin.is_empty() { &support } else { &margin };
    let rho = rho_set.iter().map(|&i| grad[i]).sum::<f64>() / rho_set.len() as f64;

    OracleSolution {
        alphas,
        rho,
        objective,
        points: points.to_vec(),
        gamma,
    }
}

impl OracleSolution {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (alpha, p) in self.alphas.iter().zip(&self.points) {
            sum += alpha * rbf(self.gamma, p, x);
        }
        sum - self.rho
    }
}

// ---------------------------------------------------------------------------
// Stub chat-completion server
// ---------------------------------------------------------------------------

/// One scripted response; when the script runs out the last entry repeats.
#[derive(Clone)]
pub struct StubResponse {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl StubResponse {
    pub fn ok_content(content: &str) -> Self {
        StubResponse {
            status: 200,
            body: format!(
                "{{\"choices\":[{{\"message\":{{\"role\":\"assistant\",\"content\":{}}}}}]}}",
                serde_json::to_string(content).unwrap()
            ),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16, body: &str) -> Self {
        StubResponse {
            status,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

pub struct StubServer {
    pub endpoint: String,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicUsize>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    /// Starts a single-threaded HTTP/1.1 server on an ephemeral local port.
    pub fn start(script: Vec<StubResponse>) -> StubServer {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        listener.set_nonblocking(true).expect("nonblocking listener");
        let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicUsize::new(0));
        let thread_hits = hits.clone();
        let thread_stop = stop.clone();
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            loop {
                if thread_stop.load(Ordering::SeqCst) != 0 {
                    break;
                }
                match listener.accept() {
                    Ok((stream, _)) => {
                        let index = served.min(script.len() - 1);
                        served += 1;
                        thread_hits.fetch_add(1, Ordering::SeqCst);
                        let response = script[index].clone();
                        handle_connection(stream, &response);
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        });
        StubServer {
            endpoint,
            hits,
            stop,
            handle: Some(handle),
        }
    }

    /// Number of requests served.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(1, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, response: &StubResponse) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(5)));
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    let mut line = String::new();
    // Request line + headers.
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(|v| v.trim().to_string())
        {
            content_length = value.parse().unwrap_or(0);
        }
    }
    if content_length > 0 {
        let mut body = vec![0u8; content_length];
        let _ = reader.read_exact(&mut body);
    }
    if !response.delay.is_zero() {
        std::thread::sleep(response.delay);
    }
    let reason = match response.status {
        200 => "OK",
        400 => "Bad Request",
        429 => "Too Many Requests",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let payload = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        reason,
        response.body.len(),
        response.body
    );
    let _ = stream.write_all(payload.as_bytes());
    let _ = stream.flush();
}
