//! The HTTP backends against a real socket: a tiny canned-response server
//! captures each request so tests can assert on paths, auth headers, bodies,
//! retry counts, and batch splitting.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use gradus::clients::{HttpAnnotator, HttpClientConfig, HttpDocGen, HttpJudge};
use gradus::corpus::{DocstringGenerator, FunctionUnit};
use gradus::refine::PreferenceJudge;
use gradus::synth::SimilarityAnnotator;

#[derive(Debug, Clone)]
struct Captured {
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serve one canned `(status, body)` per incoming connection, in order,
/// recording what each request carried. The serving thread is detached; it
/// blocks on `accept` only until the listener is dropped at process exit.
fn canned_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let endpoint = format!("http://{}/", listener.local_addr().unwrap());
    let captured = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&captured);
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            if reader.read_line(&mut line).is_err() {
                continue;
            }
            let mut auth = None;
            let mut content_length = 0usize;
            loop {
                let mut header = String::new();
                if reader.read_line(&mut header).is_err() || header == "\r\n" || header.is_empty()
                {
                    break;
                }
                let lower = header.to_ascii_lowercase();
                if let Some(rest) = lower.strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap_or(0);
                }
                if lower.starts_with("authorization:") {
                    auth = Some(header["authorization:".len()..].trim().to_string());
                }
            }
            let mut raw = vec![0u8; content_length];
            if reader.read_exact(&mut raw).is_err() {
                continue;
            }
            let body_json =
                serde_json::from_slice(&raw).unwrap_or(serde_json::Value::Null);
            log.lock().unwrap().push(Captured { auth, body: body_json });
            let reason = if status == 200 { "OK" } else { "Internal Server Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\n\
                 content-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            let _ = stream.write_all(response.as_bytes());
            let _ = stream.flush();
        }
    });
    (endpoint, captured)
}

fn dummy_unit() -> FunctionUnit {
    FunctionUnit {
        func_id: "r0/f0".into(),
        repo_id: "r0".into(),
        name: "loadmatrix".into(),
        source: "fn loadmatrix(input) { return input }".into(),
        callers: Vec::new(),
        callees: Vec::new(),
        docstring: None,
    }
}

#[test]
fn docgen_retries_after_server_error_and_sends_bearer_token() {
    let (endpoint, captured) = canned_server(vec![
        (500, r#"{"error":"transient"}"#.to_string()),
        (200, r#"{"text":"Load a matrix from the given input."}"#.to_string()),
    ]);
    let var = "GRADUS_TEST_DOCGEN_TOKEN";
    std::env::set_var(var, "sekrit-generator");
    let gen = HttpDocGen { cfg: HttpClientConfig::new(endpoint, var, 2) };
    let text = gen.generate(&dummy_unit(), "describe: loadmatrix").unwrap();
    assert_eq!(text, "Load a matrix from the given input.");

    let reqs = captured.lock().unwrap();
    assert_eq!(reqs.len(), 2, "one failed attempt plus one retry");
    for r in reqs.iter() {
        assert_eq!(r.auth.as_deref(), Some("Bearer sekrit-generator"));
        assert_eq!(r.body["prompt"], "describe: loadmatrix");
    }
}

#[test]
fn docgen_gives_up_after_retry_budget() {
    let (endpoint, captured) = canned_server(vec![
        (500, "{}".to_string()),
        (500, "{}".to_string()),
    ]);
    let gen = HttpDocGen {
        cfg: HttpClientConfig::new(endpoint, "GRADUS_TEST_UNSET_TOKEN", 1),
    };
    let err = gen.generate(&dummy_unit(), "prompt").unwrap_err();
    assert_eq!(err.code(), "backend");
    assert!(err.to_string().contains("2 attempts"), "got: {err}");
    assert_eq!(captured.lock().unwrap().len(), 2);
}

#[test]
fn docgen_rejects_blank_text() {
    let (endpoint, _) = canned_server(vec![(200, r#"{"text":"   "}"#.to_string())]);
    let gen = HttpDocGen {
        cfg: HttpClientConfig::new(endpoint, "GRADUS_TEST_UNSET_TOKEN", 0),
    };
    let err = gen.generate(&dummy_unit(), "prompt").unwrap_err();
    assert_eq!(err.code(), "backend");
}

#[test]
fn annotator_splits_texts_into_batches_and_reassembles() {
    let vecs = |rows: &[[f64; 3]]| {
        serde_json::json!({ "vectors": rows }).to_string()
    };
    let (endpoint, captured) = canned_server(vec![
        (200, vecs(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])),
        (200, vecs(&[[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]])),
        (200, vecs(&[[0.2, 0.3, 0.4]])),
    ]);
    let annotator = HttpAnnotator {
        cfg: HttpClientConfig::new(endpoint, "GRADUS_TEST_UNSET_TOKEN", 0),
        batch_size: 2,
    };
    let texts: Vec<String> = (0..5).map(|i| format!("text {i}")).collect();
    let out = annotator.embed_batch(&texts).unwrap();
    assert_eq!(out.len(), 5);
    assert_eq!(out[0], vec![1.0, 0.0, 0.0]);
    assert_eq!(out[4], vec![0.2, 0.3, 0.4]);

    let reqs = captured.lock().unwrap();
    assert_eq!(reqs.len(), 3, "five texts at batch size two need three calls");
    assert_eq!(reqs[0].body["texts"], serde_json::json!(["text 0", "text 1"]));
    assert_eq!(reqs[2].body["texts"], serde_json::json!(["text 4"]));
    assert!(reqs.iter().all(|r| r.auth.is_none()), "no env token, no header");
}

#[test]
fn annotator_rejects_count_mismatch() {
    let (endpoint, _) = canned_server(vec![(
        200,
        serde_json::json!({ "vectors": [[1.0, 0.0]] }).to_string(),
    )]);
    let annotator = HttpAnnotator {
        cfg: HttpClientConfig::new(endpoint, "GRADUS_TEST_UNSET_TOKEN", 0),
        batch_size: 8,
    };
    let err = annotator
        .embed_batch(&["a".to_string(), "b".to_string()])
        .unwrap_err();
    assert_eq!(err.code(), "backend");
    assert!(err.to_string().contains("1 vectors for 2 texts"), "got: {err}");
}

#[test]
fn annotator_rejects_ragged_dimensions() {
    let (endpoint, _) = canned_server(vec![(
        200,
        serde_json::json!({ "vectors": [[1.0, 0.0], [1.0]] }).to_string(),
    )]);
    let annotator = HttpAnnotator {
        cfg: HttpClientConfig::new(endpoint, "GRADUS_TEST_UNSET_TOKEN", 0),
        batch_size: 8,
    };
    let err = annotator
        .embed_batch(&["a".to_string(), "b".to_string()])
        .unwrap_err();
    assert_eq!(err.code(), "backend");
}

#[test]
fn judge_maps_choices_to_verdicts() {
    let choice = |c: &str| format!(r#"{{"choice":"{c}"}}"#);
    let (endpoint, captured) = canned_server(vec![
        (200, choice("a")),
        (200, choice("b")),
        (200, choice("both")),
        (200, choice("neither")),
    ]);
    std::env::set_var("GRADUS_TEST_JUDGE_TOKEN", "sekrit-judge");
    let judge = HttpJudge {
        cfg: HttpClientConfig::new(endpoint, "GRADUS_TEST_JUDGE_TOKEN", 0),
    };
    assert!(!judge.candidate_satisfies("doc", "pos", "cand").unwrap());
    assert!(judge.candidate_satisfies("doc", "pos", "cand").unwrap());
    assert!(judge.candidate_satisfies("doc", "pos", "cand").unwrap());
    let err = judge.candidate_satisfies("doc", "pos", "cand").unwrap_err();
    assert_eq!(err.code(), "backend");
    assert!(err.to_string().contains("neither"), "got: {err}");

    let reqs = captured.lock().unwrap();
    assert_eq!(reqs.len(), 4);
    assert_eq!(reqs[0].body["docstring"], "doc");
    assert_eq!(reqs[0].body["code_a"], "pos");
    assert_eq!(reqs[0].body["code_b"], "cand");
    assert_eq!(reqs[0].auth.as_deref(), Some("Bearer sekrit-judge"));
}

#[test]
fn malformed_response_body_is_retried_then_reported() {
    let (endpoint, captured) = canned_server(vec![
        (200, "not json at all".to_string()),
        (200, r#"{"wrong_key": 1}"#.to_string()),
    ]);
    let gen = HttpDocGen {
        cfg: HttpClientConfig::new(endpoint, "GRADUS_TEST_UNSET_TOKEN", 1),
    };
    let err = gen.generate(&dummy_unit(), "prompt").unwrap_err();
    assert_eq!(err.code(), "backend");
    assert!(err.to_string().contains("bad response body"), "got: {err}");
    assert_eq!(captured.lock().unwrap().len(), 2);
}
