//! The live backend against a local one-shot HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use chatabl::kb::KnowledgeBase;
use chatabl::llm::{build_cdp, cassette_digest, Backend, ChatError, ChatRequest, LiveBackend, RequestConfig};

struct Seen {
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves the given (status, body) responses in order, one per
/// connection, reporting each request it receives.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    match k.to_ascii_lowercase().as_str() {
                        "content-length" => length = v.trim().parse().unwrap(),
                        "authorization" => authorization = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let body_json = serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null);
            tx.send(Seen {
                authorization,
                body: body_json,
            })
            .unwrap();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, rx)
}

fn completion(content: &str) -> String {
    serde_json::json!({
        "id": "x",
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }]
    })
    .to_string()
}

#[test]
fn sends_chat_request_and_reads_first_choice() {
    let (url, seen) = serve(vec![(200, completion("VERDICT: CONSISTENT"))]);
    let backend = LiveBackend::new(url, "test-key", RequestConfig::default());
    let prompt = build_cdp(&KnowledgeBase::default(), "1+1=10", 0).unwrap();
    assert_eq!(backend.chat(&prompt).unwrap(), "VERDICT: CONSISTENT");

    let req = seen.recv_timeout(Duration::from_secs(5)).unwrap();
    assert_eq!(req.authorization.as_deref(), Some("Bearer test-key"));
    assert_eq!(req.body["model"], "gpt-4");
    assert_eq!(req.body["temperature"], 0.0);
    assert_eq!(req.body["messages"][0]["role"], "system");
    assert_eq!(req.body["messages"][1]["role"], "user");
    assert_eq!(req.body["messages"][1]["content"], prompt.messages[1].content);
    let sent: ChatRequest = serde_json::from_value(req.body).unwrap();
    assert_eq!(
        cassette_digest(&sent),
        cassette_digest(&ChatRequest::new(&RequestConfig::default(), &prompt))
    );
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, seen) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, completion("VERDICT: INCONSISTENT")),
    ]);
    let backend = LiveBackend::new(url, "k", RequestConfig::default()).with_retries(3, Duration::from_millis(1));
    let prompt = build_cdp(&KnowledgeBase::default(), "1+1=11", 0).unwrap();
    assert_eq!(backend.chat(&prompt).unwrap(), "VERDICT: INCONSISTENT");
    assert_eq!(seen.try_iter().count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let backend = LiveBackend::new(url, "k", RequestConfig::default()).with_retries(3, Duration::from_millis(1));
    let prompt = build_cdp(&KnowledgeBase::default(), "1+1=10", 0).unwrap();
    match backend.chat(&prompt) {
        Err(ChatError::Status { status, body }) => {
            assert_eq!(status, 401);
            assert!(body.contains("bad key"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.try_iter().count(), 1);
}

#[test]
fn gives_up_after_bounded_retries() {
    let (url, _seen) = serve(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let backend = LiveBackend::new(url, "k", RequestConfig::default()).with_retries(2, Duration::from_millis(1));
    let prompt = build_cdp(&KnowledgeBase::default(), "1+1=10", 0).unwrap();
    assert!(matches!(backend.chat(&prompt), Err(ChatError::Status { status: 503, .. })));
}

#[test]
fn malformed_completion_is_an_error() {
    let (url, _seen) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    let backend = LiveBackend::new(url, "k", RequestConfig::default());
    let prompt = build_cdp(&KnowledgeBase::default(), "1+1=10", 0).unwrap();
    assert!(matches!(backend.chat(&prompt), Err(ChatError::MalformedResponse)));
}
