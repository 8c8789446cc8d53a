//! Live-backend behavior against a local stub server: success, retry,
//! truncation, caching, request coalescing, and key handling.
//!
//! Every test that touches the `P2T_API_KEY` environment variable holds a
//! process-wide lock, because environment mutation is global.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;

use p2t_core::{BackendConfig, BackendKind, CompletionCache, CompletionClient, Error};

fn env_lock() -> &'static Mutex<()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
}

/// Read one HTTP request (headers + content-length body) off the stream.
fn read_request(stream: &mut TcpStream) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    loop {
        let n = stream.read(&mut chunk).unwrap_or(0);
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(header_end) = find_header_end(&buf) {
            let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
            let content_length = headers
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse::<usize>().ok())?
                })
                .unwrap_or(0);
            if buf.len() >= header_end + 4 + content_length {
                break;
            }
        }
    }
    String::from_utf8_lossy(&buf).to_string()
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn write_response(stream: &mut TcpStream, status: &str, body: &str) {
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

fn chat_body(content: &str, finish_reason: &str) -> String {
    serde_json::json!({
        "choices": [{
            "message": {"role": "assistant", "content": content},
            "finish_reason": finish_reason
        }]
    })
    .to_string()
}

/// Spawn a stub server answering `responses` in order; returns its base URL,
/// a connection counter, and captured request bodies.
fn stub_server(
    responses: Vec<(String, String)>,
) -> (String, Arc<AtomicUsize>, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let requests = Arc::new(Mutex::new(Vec::new()));
    let (hits_bg, requests_bg) = (Arc::clone(&hits), Arc::clone(&requests));
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let request = read_request(&mut stream);
            requests_bg.lock().unwrap().push(request);
            hits_bg.fetch_add(1, Ordering::SeqCst);
            write_response(&mut stream, &status, &body);
        }
    });
    (format!("http://{addr}/v1/chat/completions"), hits, requests)
}

fn live_config(base_url: &str) -> BackendConfig {
    BackendConfig {
        backend_kind: BackendKind::HttpChat,
        base_url: base_url.to_string(),
        retries: 2,
        ..BackendConfig::default()
    }
}

#[test]
fn success_then_cache_hit_without_second_request() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let (url, hits, requests) =
        stub_server(vec![("200 OK".into(), chat_body("class2", "stop"))]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());

    let first = client.complete("Question: test. Answer:").unwrap();
    assert_eq!(first.text, "class2");
    assert!(!first.truncated);
    assert!(!first.from_cache);
    assert_eq!(client.network_call_count(), 1);

    let second = client.complete("Question: test. Answer:").unwrap();
    assert_eq!(second.text, "class2");
    assert!(second.from_cache);
    assert_eq!(client.network_call_count(), 1);
    assert_eq!(hits.load(Ordering::SeqCst), 1);

    // The request carried the key, the model, and the prompt as one user turn.
    let sent = requests.lock().unwrap().join("");
    assert!(sent.contains("Bearer test-key"));
    assert!(sent.contains("\"gpt-3.5-turbo\""));
    assert!(sent.contains("\"user\""));
    assert!(sent.contains("Question: test. Answer:"));
}

#[test]
fn transient_server_error_is_retried() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let (url, hits, _) = stub_server(vec![
        ("500 Internal Server Error".into(), "{}".into()),
        ("200 OK".into(), chat_body("ok after retry", "stop")),
    ]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());
    let completion = client.complete("retry probe").unwrap();
    assert_eq!(completion.text, "ok after retry");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn rate_limit_is_retried() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let (url, hits, _) = stub_server(vec![
        ("429 Too Many Requests".into(), "{}".into()),
        ("200 OK".into(), chat_body("after backoff", "stop")),
    ]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());
    assert_eq!(client.complete("rate limit probe").unwrap().text, "after backoff");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn client_error_fails_without_retry() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let (url, hits, _) = stub_server(vec![
        ("400 Bad Request".into(), "{\"error\":\"bad\"}".into()),
        ("200 OK".into(), chat_body("never reached", "stop")),
    ]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());
    let err = client.complete("bad request probe").unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1, "4xx must not be retried");
}

#[test]
fn exhausted_retries_surface_attempt_count() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let (url, hits, _) = stub_server(vec![
        ("500 Internal Server Error".into(), "{}".into()),
        ("500 Internal Server Error".into(), "{}".into()),
        ("500 Internal Server Error".into(), "{}".into()),
    ]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());
    match client.complete("always failing") {
        Err(Error::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected BackendUnavailable, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn length_finish_reason_marks_truncation() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let (url, _, _) = stub_server(vec![("200 OK".into(), chat_body("cut off mid", "length"))]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());
    let completion = client.complete("truncation probe").unwrap();
    assert!(completion.truncated);
    // The truncation flag survives the cache round trip.
    let again = client.complete("truncation probe").unwrap();
    assert!(again.from_cache);
    assert!(again.truncated);
}

#[test]
fn malformed_payload_is_not_retried() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let (url, hits, _) = stub_server(vec![
        ("200 OK".into(), "{\"choices\":[]}".into()),
        ("200 OK".into(), chat_body("never reached", "stop")),
    ]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());
    let err = client.complete("malformed probe").unwrap_err();
    assert!(matches!(err, Error::MalformedResponse(_)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn concurrent_identical_prompts_coalesce_into_one_request() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    // A single scripted response: if coalescing failed, the second request
    // would hang on the closed listener and the test would fail.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_bg = Arc::clone(&hits);
    thread::spawn(move || {
        let Ok((mut stream, _)) = listener.accept() else { return };
        let _ = read_request(&mut stream);
        // Hold the leader long enough for the followers to queue up.
        thread::sleep(std::time::Duration::from_millis(150));
        hits_bg.fetch_add(1, Ordering::SeqCst);
        write_response(&mut stream, "200 OK", &chat_body("shared answer", "stop"));
    });
    let url = format!("http://{addr}/v1/chat/completions");
    let client =
        Arc::new(CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory()));

    let workers: Vec<_> = (0..4)
        .map(|_| {
            let client = Arc::clone(&client);
            thread::spawn(move || client.complete("shared prompt").unwrap().text)
        })
        .collect();
    for worker in workers {
        assert_eq!(worker.join().unwrap(), "shared answer");
    }
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    assert_eq!(client.network_call_count(), 1);
}

#[test]
fn missing_api_key_is_a_config_error_before_any_request() {
    let _guard = env_lock().lock().unwrap();
    std::env::remove_var("P2T_API_KEY");
    let (url, hits, _) = stub_server(vec![("200 OK".into(), chat_body("unused", "stop"))]);
    let client = CompletionClient::with_cache(live_config(&url), CompletionCache::in_memory());
    let err = client.complete("keyless probe").unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 0);
    std::env::set_var("P2T_API_KEY", "test-key");
}

#[test]
fn replay_client_never_opens_a_connection() {
    // No env interaction: replay never constructs an HTTP client.
    let cache = CompletionCache::in_memory();
    let client = CompletionClient::replay(cache);
    match client.complete("uncached prompt") {
        Err(Error::ReplayMiss { key }) => assert_eq!(key.len(), 64),
        other => panic!("expected ReplayMiss, got {other:?}"),
    }
    assert_eq!(client.network_call_count(), 0);
}

#[test]
fn persistent_cache_survives_for_a_later_replay_run() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var("P2T_API_KEY", "test-key");
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let (url, _, _) = stub_server(vec![("200 OK".into(), chat_body("persisted", "stop"))]);
    {
        let cache = CompletionCache::open(&cache_path).unwrap();
        let client = CompletionClient::with_cache(live_config(&url), cache);
        assert_eq!(client.complete("persist me").unwrap().text, "persisted");
    }
    let replay = CompletionClient::replay(CompletionCache::open(&cache_path).unwrap());
    let completion = replay.complete("persist me").unwrap();
    assert_eq!(completion.text, "persisted");
    assert!(completion.from_cache);
    assert_eq!(replay.network_call_count(), 0);
}
