//! HTTP backend tests against a minimal in-process chat-completions server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use seqconf::generator::http::{HttpConfig, HttpGenerator};
use seqconf::generator::{GenerationConfig, GeneratorError, TextGenerator};
use seqconf::types::FinishReason;

/// Serve canned HTTP responses; one response per incoming request, in order.
fn spawn_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind localhost");
    let port = listener.local_addr().unwrap().port();
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_clone = Arc::clone(&hits);
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().expect("accept");
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            reader.read_line(&mut request_line).expect("request line");
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).expect("header");
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    break;
                }
                if let Some(value) = trimmed.to_ascii_lowercase().strip_prefix("content-length:")
                {
                    content_length = value.trim().parse().unwrap_or(0);
                }
            }
            let mut body_bytes = vec![0u8; content_length];
            reader.read_exact(&mut body_bytes).expect("body");
            bodies.push(String::from_utf8_lossy(&body_bytes).into_owned());
            hits_clone.fetch_add(1, Ordering::SeqCst);

            let reason = if status == 200 { "OK" } else { "Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            stream.write_all(response.as_bytes()).expect("respond");
        }
        bodies
    });
    (format!("http://127.0.0.1:{port}/v1/chat/completions"), hits, handle)
}

fn two_choice_body() -> String {
    r#"{
        "choices": [
            {"message": {"content": "The answer is 42."}, "finish_reason": "stop",
             "logprobs": {"content": [
                {"token": "The", "logprob": -0.1, "top_logprobs": [{"token": "The", "logprob": -0.1}, {"token": "A", "logprob": -2.4}]},
                {"token": " answer", "logprob": -0.2, "top_logprobs": [{"token": " answer", "logprob": -0.2}, {"token": " result", "logprob": -1.8}]}
             ]}},
            {"message": {"content": "It is 41."}, "finish_reason": "length"}
        ],
        "usage": {"prompt_tokens": 9, "completion_tokens": 11}
    }"#
    .to_owned()
}

fn generator_for(url: &str, retries: u32) -> HttpGenerator {
    let config = HttpConfig {
        max_retries: retries,
        initial_backoff_ms: 10,
        ..HttpConfig::new(url, "test-model")
    };
    HttpGenerator::new(config).expect("generator constructs")
}

#[test]
fn generates_and_accounts_from_usage() {
    let (url, hits, handle) = spawn_server(vec![(200, two_choice_body())]);
    let gen = generator_for(&url, 3);
    let config = GenerationConfig {
        n: 2,
        request_logprobs: true,
        top_logprobs_k: 2,
        ..Default::default()
    };
    let completions = gen.generate("Compute the value.", &config).unwrap();
    assert_eq!(completions.len(), 2);
    assert_eq!(completions[0].text, "The answer is 42.");
    assert_eq!(completions[0].tokens.len(), 2);
    assert_eq!(completions[0].finish_reason, FinishReason::Stop);
    assert_eq!(completions[1].finish_reason, FinishReason::Length);

    let snap = gen.ledger().snapshot();
    assert_eq!(snap.inference_count, 2);
    assert_eq!(snap.prompt_tokens, 9);
    assert_eq!(snap.completion_tokens, 11);
    assert_eq!(hits.load(Ordering::SeqCst), 1);

    // The request carried the protocol fields.
    let bodies = handle.join().unwrap();
    let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["n"], 2);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "Compute the value.");
    assert_eq!(body["logprobs"], true);
    assert_eq!(body["top_logprobs"], 2);
}

#[test]
fn retries_transient_failures_then_succeeds() {
    let (url, hits, handle) = spawn_server(vec![
        (500, r#"{"error": "overloaded"}"#.to_owned()),
        (429, r#"{"error": "rate limited"}"#.to_owned()),
        (200, two_choice_body()),
    ]);
    let gen = generator_for(&url, 3);
    let config = GenerationConfig {
        n: 2,
        ..Default::default()
    };
    let completions = gen.generate("Compute.", &config).unwrap();
    assert_eq!(completions.len(), 2);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    handle.join().unwrap();
}

#[test]
fn exhausted_retries_report_attempts() {
    let (url, _hits, handle) = spawn_server(vec![
        (500, "{}".to_owned()),
        (500, "{}".to_owned()),
        (500, "{}".to_owned()),
    ]);
    let gen = generator_for(&url, 3);
    let err = gen
        .generate("Compute.", &GenerationConfig::default())
        .unwrap_err();
    match err {
        GeneratorError::Transport { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
    handle.join().unwrap();
}

#[test]
fn non_retriable_status_fails_fast() {
    let (url, hits, handle) = spawn_server(vec![(400, r#"{"error": "bad request"}"#.to_owned())]);
    let gen = generator_for(&url, 3);
    let err = gen
        .generate("Compute.", &GenerationConfig::default())
        .unwrap_err();
    match err {
        GeneratorError::Transport { attempts, message } => {
            assert_eq!(attempts, 1);
            assert!(message.contains("400"), "message: {message}");
        }
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    handle.join().unwrap();
}

#[test]
fn malformed_payload_is_a_decode_error() {
    let (url, _hits, handle) = spawn_server(vec![(200, "this is not json".to_owned())]);
    let gen = generator_for(&url, 1);
    let err = gen
        .generate("Compute.", &GenerationConfig::default())
        .unwrap_err();
    match err {
        GeneratorError::Decode { excerpt, .. } => assert!(excerpt.contains("not json")),
        other => panic!("expected decode error, got {other:?}"),
    }
    handle.join().unwrap();
}

#[test]
fn wrong_choice_count_is_a_decode_error() {
    let (url, _hits, handle) = spawn_server(vec![(
        200,
        r#"{"choices": [{"message": {"content": "only one"}}]}"#.to_owned(),
    )]);
    let gen = generator_for(&url, 1);
    let err = gen
        .generate(
            "Compute.",
            &GenerationConfig {
                n: 3,
                ..Default::default()
            },
        )
        .unwrap_err();
    assert!(matches!(err, GeneratorError::Decode { .. }));
    handle.join().unwrap();
}
