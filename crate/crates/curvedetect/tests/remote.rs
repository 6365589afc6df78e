//! Remote provider clients exercised against a scripted in-process HTTP
//! server: batch splitting, retry/backoff with stable idempotency keys,
//! and response-contract enforcement.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use curvedetect::error::ProviderError;
use curvedetect::providers::{
    Perturber, RemotePerturber, RemoteScorer, RemoteSimilarity, Scorer, SimilarityProvider,
};
use curvedetect::types::TextSample;

#[derive(Debug, Clone)]
struct CapturedRequest {
    path: String,
    idempotency_key: String,
    body: serde_json::Value,
}

/// Serves one scripted (status, body) response per incoming request, in
/// order, then repeats the last one. Captures every request.
fn spawn_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<CapturedRequest>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let captured = Arc::new(Mutex::new(Vec::new()));
    let captured_clone = Arc::clone(&captured);
    thread::spawn(move || {
        let mut served = 0usize;
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let (path, key, body) = loop {
                match stream.read(&mut chunk) {
                    Ok(0) => return,
                    Ok(n) => buf.extend_from_slice(&chunk[..n]),
                    Err(_) => return,
                }
                if let Some(parsed) = try_parse_request(&buf) {
                    break parsed;
                }
            };
            captured_clone.lock().unwrap().push(CapturedRequest {
                path,
                idempotency_key: key,
                body,
            });
            let (status, payload) = responses
                .get(served.min(responses.len() - 1))
                .cloned()
                .unwrap();
            served += 1;
            let reason = if status == 200 { "OK" } else { "ERR" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (addr, captured)
}

fn try_parse_request(buf: &[u8]) -> Option<(String, String, serde_json::Value)> {
    let text = String::from_utf8_lossy(buf);
    let header_end = text.find("\r\n\r\n")?;
    let headers = &text[..header_end];
    let mut path = String::new();
    let mut key = String::new();
    let mut content_length = 0usize;
    for (i, line) in headers.lines().enumerate() {
        if i == 0 {
            path = line.split_whitespace().nth(1).unwrap_or("").to_string();
        } else if let Some((name, value)) = line.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "idempotency-key" => key = value.trim().to_string(),
                "content-length" => content_length = value.trim().parse().unwrap_or(0),
                _ => {}
            }
        }
    }
    let body_bytes = &buf[header_end + 4..];
    if body_bytes.len() < content_length {
        return None;
    }
    let body = serde_json::from_slice(&body_bytes[..content_length]).ok()?;
    Some((path, key, body))
}

fn texts(n: usize) -> Vec<TextSample> {
    (0..n)
        .map(|i| TextSample::from_text(format!("t{i}"), format!("text number {i}")))
        .collect()
}

#[test]
fn scorer_splits_batches_and_preserves_order() {
    let (addr, captured) = spawn_server(vec![
        (200, r#"{"log_probs": [-1.0, -2.0]}"#.into()),
        (200, r#"{"log_probs": [-3.0, -4.0]}"#.into()),
        (200, r#"{"log_probs": [-5.0]}"#.into()),
    ]);
    let scorer = RemoteScorer::new(&addr, "m1", 5, 2, 0);
    let scores = scorer.score_batch(&texts(5)).unwrap();
    assert_eq!(scores, vec![-1.0, -2.0, -3.0, -4.0, -5.0]);

    let reqs = captured.lock().unwrap();
    assert_eq!(reqs.len(), 3);
    let sizes: Vec<usize> = reqs
        .iter()
        .map(|r| r.body["texts"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, vec![2, 2, 1]);
    for r in reqs.iter() {
        assert_eq!(r.path, "/v1/logprob");
        assert_eq!(r.body["model"], "m1");
    }
}

#[test]
fn scorer_rejects_wrong_length_response() {
    let (addr, _) = spawn_server(vec![(200, r#"{"log_probs": [-1.0]}"#.into())]);
    let scorer = RemoteScorer::new(&addr, "m1", 5, 8, 0);
    match scorer.score_batch(&texts(3)) {
        Err(ProviderError::MalformedResponse { detail, .. }) => {
            assert!(detail.contains("expected 3"), "{detail}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn scorer_retries_5xx_with_stable_idempotency_key() {
    let (addr, captured) = spawn_server(vec![
        (500, r#"{"error": "transient"}"#.into()),
        (200, r#"{"log_probs": [-7.5]}"#.into()),
    ]);
    let scorer = RemoteScorer::new(&addr, "m1", 5, 8, 2);
    let scores = scorer.score_batch(&texts(1)).unwrap();
    assert_eq!(scores, vec![-7.5]);

    let reqs = captured.lock().unwrap();
    assert_eq!(reqs.len(), 2);
    assert!(!reqs[0].idempotency_key.is_empty());
    assert_eq!(reqs[0].idempotency_key, reqs[1].idempotency_key);
}

#[test]
fn scorer_surfaces_persistent_5xx() {
    let (addr, captured) = spawn_server(vec![(500, r#"{"error": "down"}"#.into())]);
    let scorer = RemoteScorer::new(&addr, "m1", 5, 8, 1);
    match scorer.score_batch(&texts(1)) {
        Err(ProviderError::HttpStatus { code, .. }) => assert_eq!(code, 500),
        other => panic!("unexpected {other:?}"),
    }
    // initial attempt plus one retry
    assert_eq!(captured.lock().unwrap().len(), 2);
}

#[test]
fn scorer_maps_4xx_without_retry() {
    let (addr, captured) = spawn_server(vec![(403, r#"{"error": "denied"}"#.into())]);
    let scorer = RemoteScorer::new(&addr, "m1", 5, 8, 3);
    match scorer.score_batch(&texts(1)) {
        Err(ProviderError::HttpStatus { code, .. }) => assert_eq!(code, 403),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(captured.lock().unwrap().len(), 1);
}

#[test]
fn perturber_round_trip_carries_parameters() {
    let (addr, captured) = spawn_server(vec![(
        200,
        r#"{"perturbations": ["alpha beta", "gamma delta", "epsilon zeta"]}"#.into(),
    )]);
    let perturber = RemotePerturber::new(&addr, 0.15, 2, 5, 0);
    let parent = TextSample::from_text("c", "the original passage");
    let out = perturber.perturb_batch(&parent, 3, 99).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].text.as_deref(), Some("alpha beta"));
    assert!(out.iter().all(|s| s.id.starts_with("c-p")));

    let reqs = captured.lock().unwrap();
    assert_eq!(reqs[0].path, "/v1/perturb");
    assert_eq!(reqs[0].body["n"], 3);
    assert_eq!(reqs[0].body["mask_fraction"], 0.15);
    assert_eq!(reqs[0].body["span_length"], 2);
    assert_eq!(reqs[0].body["seed"], 99);
}

#[test]
fn similarity_rejects_non_square_matrix() {
    let (addr, _) = spawn_server(vec![(
        200,
        r#"{"matrix": [[1.0, 0.5], [0.5, 1.0], [0.1, 0.2]]}"#.into(),
    )]);
    let sim = RemoteSimilarity::new(&addr, 5, 0);
    assert!(matches!(
        sim.similarity_batch(&texts(3)),
        Err(ProviderError::MalformedResponse { .. })
    ));
}

#[test]
fn similarity_happy_path() {
    let (addr, captured) = spawn_server(vec![(
        200,
        r#"{"matrix": [[1.0, 0.6], [0.6, 1.0]]}"#.into(),
    )]);
    let sim = RemoteSimilarity::new(&addr, 5, 0);
    let m = sim.similarity_batch(&texts(2)).unwrap();
    assert_eq!(m[(0, 1)], 0.6);
    assert_eq!(captured.lock().unwrap()[0].path, "/v1/similarity");
}

#[test]
fn connection_refused_maps_to_provider_error() {
    // a port with nothing listening: bind, learn the port, drop the listener
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let scorer = RemoteScorer::new(&format!("http://127.0.0.1:{port}"), "m1", 1, 8, 0);
    assert!(scorer.score_batch(&texts(1)).is_err());
}
