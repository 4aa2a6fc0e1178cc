//! Chat and embedding clients against a local single-threaded HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use h2r::embedding::{EmbedError, Encoder, HttpEncoder, HttpEncoderConfig};
use h2r::llm::{BackendError, ChatBackend, ChatBackendConfig, CompletionRequest, LanguageModel, RoleTag};
use h2r::retry::RetryPolicy;

#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves `replies` (status, body) in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap_or((line, ""));
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Seen {
                authorization,
                body: serde_json::from_slice(&raw).unwrap(),
            });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn chat(endpoint: String, retries: u32) -> ChatBackend {
    ChatBackend::new(ChatBackendConfig {
        endpoint,
        model: "stub-model".into(),
        api_key: Some("sekret".into()),
        timeout: Duration::from_secs(5),
        retry: RetryPolicy::no_delay(retries),
    })
}

fn reply(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn chat_sends_one_user_message_and_reads_the_reply() {
    let (url, seen, h) = serve(vec![(200, reply("SUBGOAL: the apple is hot"))]);
    let out = chat(url, 0).complete(&CompletionRequest::new(RoleTag::Planner, "plan this")).unwrap();
    h.join().unwrap();
    assert_eq!(out, "SUBGOAL: the apple is hot");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer sekret"));
    assert_eq!(seen[0].body["model"], "stub-model");
    assert_eq!(seen[0].body["messages"][0]["role"], "user");
    assert_eq!(seen[0].body["messages"][0]["content"], "plan this");
    assert_eq!(seen[0].body["temperature"], 0.0);
}

#[test]
fn chat_retries_transient_failures() {
    let (url, seen, h) = serve(vec![(503, "busy".into()), (429, "slow down".into()), (200, reply("DONE"))]);
    let out = chat(url, 3).complete(&CompletionRequest::new(RoleTag::Planner, "p")).unwrap();
    h.join().unwrap();
    assert_eq!(out, "DONE");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn chat_gives_up_after_the_retry_budget() {
    let (url, seen, h) = serve(vec![(500, "a".into()), (500, "b".into())]);
    let err = chat(url, 1).complete(&CompletionRequest::new(RoleTag::Planner, "p")).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, BackendError::Status { status: 500, .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn chat_does_not_retry_auth_or_malformed_replies() {
    let (url, seen, h) = serve(vec![(401, "no".into())]);
    let err = chat(url, 3).complete(&CompletionRequest::new(RoleTag::Executor, "p")).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, BackendError::Auth(401)));
    assert_eq!(seen.lock().unwrap().len(), 1);

    let (url, _, h) = serve(vec![(200, "{\"choices\": []}".into())]);
    let err = chat(url, 3).complete(&CompletionRequest::new(RoleTag::Executor, "p")).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, BackendError::Decode(_)));
}

#[test]
fn chat_rejects_empty_prompt_without_a_request() {
    let err = chat("http://127.0.0.1:9/none".into(), 0)
        .complete(&CompletionRequest::new(RoleTag::Planner, ""))
        .unwrap_err();
    assert!(matches!(err, BackendError::EmptyPrompt(RoleTag::Planner)));
}

#[test]
fn unreachable_chat_endpoint_is_transient() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/x", listener.local_addr().unwrap());
    drop(listener);
    let err = chat(url, 1).complete(&CompletionRequest::new(RoleTag::Planner, "p")).unwrap_err();
    assert!(matches!(err, BackendError::Unreachable(_)));
    assert!(err.is_transient());
}

fn encoder(endpoint: String, dimension: usize) -> HttpEncoder {
    HttpEncoder::new(HttpEncoderConfig {
        endpoint,
        model: "embed-stub".into(),
        api_key: None,
        dimension,
        timeout: Duration::from_secs(5),
        retry: RetryPolicy::no_delay(2),
    })
}

fn vector(v: &[f64]) -> String {
    serde_json::json!({"data": [{"embedding": v}]}).to_string()
}

#[test]
fn embeddings_are_requested_and_normalized() {
    let (url, seen, h) = serve(vec![(502, "".into()), (200, vector(&[3.0, 0.0, 4.0]))]);
    let enc = encoder(url, 3);
    let v: h2r::Embedding = enc.embed("heat the apple").unwrap();
    h.join().unwrap();
    assert_eq!(v.values(), &[0.6, 0.0, 0.8]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[1].body["model"], "embed-stub");
    assert_eq!(seen[1].body["input"][0], "heat the apple");
    assert!(seen[1].authorization.is_none());
    assert_eq!(Encoder::<f64>::name(&enc), "http:embed-stub");
}

#[test]
fn embedding_dimension_and_client_errors() {
    let (url, _, h) = serve(vec![(200, vector(&[1.0, 2.0]))]);
    let err = Encoder::<f32>::embed(&encoder(url, 3), "x").unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, EmbedError::Dimension { expected: 3, got: 2 }));

    let (url, seen, h) = serve(vec![(400, "bad".into())]);
    let err = Encoder::<f64>::embed(&encoder(url, 3), "x").unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, EmbedError::Status { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);

    // empty text never leaves the process
    let v = Encoder::<f64>::embed(&encoder("http://127.0.0.1:9/none".into(), 4), "").unwrap();
    assert!(v.is_zero());
}
