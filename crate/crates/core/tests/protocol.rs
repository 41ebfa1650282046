//! The NDJSON sampler protocol against in-process stub services.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::os::unix::net::UnixStream;
use std::thread;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use scenario_mpc::samplers::{ExternalSampler, GaussianArParams, GaussianArSampler, SamplerError};
use scenario_mpc::{Matrix, SamplerRequest, TrajectorySampler};

#[derive(Clone, Copy)]
enum Stub {
    Constant(f64),
    /// AR(1) `x' = c + a x + σ ε`, sampled with its own generator.
    Gaussian {
        a: f64,
        c: f64,
        sigma: f64,
    },
    /// Replies with one sample too few.
    ShortBatch,
    /// Replies to every sample request with an error object.
    Failing,
    /// Never answers sample requests.
    Silent,
}

fn respond(stub: Stub, req: &Value) -> Option<Value> {
    let m = req["m"].as_u64().unwrap() as usize;
    let h = req["h"].as_u64().unwrap() as usize;
    let seed = req["seed"].as_u64().unwrap();
    let last = req["history"]
        .as_array()
        .and_then(|r| r.last())
        .map_or(0.0, |row| row[0].as_f64().unwrap());
    let samples: Vec<Vec<Vec<f64>>> = match stub {
        Stub::Constant(v) => vec![vec![vec![v]; h]; m],
        Stub::Gaussian { a, c, sigma } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
            let noise = Normal::new(0.0, sigma).unwrap();
            (0..m)
                .map(|_| {
                    let mut x = last;
                    (0..h)
                        .map(|_| {
                            x = c + a * x + noise.sample(&mut rng);
                            vec![x]
                        })
                        .collect()
                })
                .collect()
        }
        Stub::ShortBatch => {
            let rows = vec![vec![vec![1.0]; h]; m.saturating_sub(1)];
            return Some(json!({"samples": rows, "shape": [m - 1, h, 1]}));
        }
        Stub::Failing => return Some(json!({"error": "model not loaded"})),
        Stub::Silent => return None,
    };
    Some(json!({"samples": samples, "shape": [m, h, 1]}))
}

fn serve<R: std::io::Read, W: Write>(stub: Stub, reader: R, mut writer: W) {
    for line in BufReader::new(reader).lines() {
        let Ok(line) = line else { return };
        let req: Value = serde_json::from_str(&line).unwrap();
        let reply = if req["op"] == "hello" {
            Some(json!({"name": "stub", "d": 1, "min_context": 1}))
        } else {
            respond(stub, &req)
        };
        match reply {
            Some(v) => {
                if writeln!(writer, "{v}").and_then(|_| writer.flush()).is_err() {
                    return;
                }
            }
            None => thread::sleep(Duration::from_secs(5)),
        }
    }
}

fn connect(stub: Stub, timeout: Duration) -> ExternalSampler {
    let (client, server) = UnixStream::pair().unwrap();
    let server_reader = server.try_clone().unwrap();
    thread::spawn(move || serve(stub, server_reader, server));
    ExternalSampler::from_streams(client.try_clone().unwrap(), client, timeout).unwrap()
}

fn request(m: usize, h: usize, seed: u64) -> SamplerRequest {
    SamplerRequest::new(Matrix::column(&[10.0, 12.0]), m, h, seed)
}

#[test]
fn handshake_and_constant_batch() {
    let s = connect(Stub::Constant(5.0), Duration::from_secs(10));
    assert_eq!((s.name(), s.dim(), s.min_context()), ("stub", 1, 1));
    let batch = s.sample(&request(2, 3, 0)).unwrap();
    assert_eq!(batch.shape(), (2, 3, 1));
    assert!(batch.as_slice().iter().all(|&v| v == 5.0));
}

#[test]
fn short_batch_is_a_protocol_error() {
    let s = connect(Stub::ShortBatch, Duration::from_secs(10));
    assert!(matches!(s.sample(&request(3, 2, 0)), Err(SamplerError::Protocol(_))));
}

#[test]
fn remote_error_carries_message() {
    let s = connect(Stub::Failing, Duration::from_secs(10));
    match s.sample(&request(1, 1, 0)) {
        Err(SamplerError::Remote(msg)) => assert_eq!(msg, "model not loaded"),
        other => panic!("expected remote error, got {other:?}"),
    }
}

#[test]
fn silent_remote_times_out() {
    let s = connect(Stub::Silent, Duration::from_millis(200));
    assert!(matches!(s.sample(&request(1, 1, 0)), Err(SamplerError::Timeout(_))));
    // The stream is now out of step; later requests fail fast.
    assert!(matches!(s.sample(&request(1, 1, 0)), Err(SamplerError::Protocol(_))));
}

#[test]
fn history_shorter_than_min_context_rejected_locally() {
    let s = connect(Stub::Constant(1.0), Duration::from_secs(10));
    let req = SamplerRequest::new(Matrix::zeros(0, 1), 1, 1, 0);
    assert!(s.sample(&req).is_err());
}

#[test]
fn tcp_endpoint() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        serve(Stub::Constant(2.5), stream.try_clone().unwrap(), stream);
    });
    let s = ExternalSampler::connect(addr, Duration::from_secs(10)).unwrap();
    assert_eq!(s.sample(&request(1, 4, 3)).unwrap().as_slice(), &[2.5; 4]);
}

#[test]
fn spawned_process_endpoint() {
    let script = r#"read l; echo '{"name":"sh","d":1,"min_context":0}'; while read l; do echo '{"samples":[[[7.0],[7.0]]],"shape":[1,2,1]}'; done"#;
    let s = ExternalSampler::spawn("sh", &["-c".into(), script.into()], Duration::from_secs(10)).unwrap();
    assert_eq!(s.name(), "sh");
    assert_eq!(s.sample(&request(1, 2, 0)).unwrap().as_slice(), &[7.0, 7.0]);
}

#[test]
fn gaussian_stub_agrees_with_native_sampler() {
    let (a, c, sigma) = (0.7, 6.0, 3.0);
    let m = 10_000;
    let h = 6;
    let stub = connect(Stub::Gaussian { a, c, sigma }, Duration::from_secs(60));
    let native = GaussianArSampler::new(GaussianArParams::univariate(a, c, sigma).unwrap()).unwrap();
    let remote = stub.sample(&request(m, h, 42)).unwrap();
    let local = native.sample(&request(m, h, 42)).unwrap();
    for step in 0..h {
        let col = |b: &scenario_mpc::TrajectoryBatch| -> (f64, f64) {
            let xs: Vec<f64> = (0..m).map(|i| b.get(i, step, 0)).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            (mean, var)
        };
        let ((m1, v1), (m2, v2)) = (col(&remote), col(&local));
        let se = ((v1 + v2) / m as f64).sqrt();
        assert!((m1 - m2).abs() < 4.0 * se, "step {step}: {m1} vs {m2} (se {se})");
    }
}
