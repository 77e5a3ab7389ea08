mod common;

use amdd_core::codegen::{assemble_prompt, GenerationConfig};
use amdd_core::llm::{generate_llm, LlmClient, LlmEndpointConfig, LlmError};

use common::mock_llm::{chat_reply, MockEndpoint};
use common::uvf;

const SECRET: &str = "sk-test-9f8e7d6c5b4a";

fn client(base_url: &str, max_retries: u32) -> LlmClient {
    let cfg = LlmEndpointConfig {
        base_url: base_url.into(),
        max_retries,
        backoff_ms: 1,
        timeout_secs: 5,
        ..Default::default()
    };
    LlmClient::with_token(cfg, SECRET)
}

fn bundle() -> amdd_core::codegen::PromptBundle {
    let u = uvf();
    assemble_prompt(&u.model, &u.bound, Some(&u.reg), &GenerationConfig::default()).unwrap()
}

const TWO_FILES: &str = "Here are the agents.\n\n// file: OperatorAgent.java\n```java\npublic class OperatorAgent {}\n```\n\n```java\n// file: MCCAgent.java\npublic class MCCAgent {}\n```\n";

#[test]
fn two_fenced_files_become_two_units() {
    let mock = MockEndpoint::start(vec![(200, chat_reply(TWO_FILES))]);
    let res = generate_llm(&bundle(), &client(&mock.base_url, 0)).unwrap();
    let requests = mock.join();
    let units = res.source_units.unwrap();
    let names: Vec<&str> = units.iter().map(|u| u.filename.as_str()).collect();
    assert_eq!(names, ["MCCAgent.java", "OperatorAgent.java"]);
    assert!(res.programs.is_empty());

    // The token travels in the header only, never in the log.
    assert_eq!(requests.len(), 1);
    assert!(requests[0]
        .to_ascii_lowercase()
        .contains(&format!("authorization: bearer {}", SECRET.to_ascii_lowercase())));
    assert!(requests[0].contains("\"messages\""));
    assert!(!res.backend_log.contains(SECRET));
}

#[test]
fn unnamed_blocks_take_class_names() {
    let reply = "```java\nclass A {}\n```\n```java\nclass B {}\n```\n";
    let mock = MockEndpoint::start(vec![(200, chat_reply(reply))]);
    let res = generate_llm(&bundle(), &client(&mock.base_url, 0)).unwrap();
    mock.join();
    let names: Vec<String> = res.source_units.unwrap().into_iter().map(|u| u.filename).collect();
    assert_eq!(names, ["agent_MCC.java", "agent_Operator.java"]);
}

#[test]
fn retries_server_errors_then_succeeds() {
    let mock = MockEndpoint::start(vec![
        (500, "{\"error\":\"busy\"}".into()),
        (503, "{}".into()),
        (200, chat_reply(TWO_FILES)),
    ]);
    let res = generate_llm(&bundle(), &client(&mock.base_url, 2)).unwrap();
    assert_eq!(mock.join().len(), 3);
    assert_eq!(res.backend_log.matches("retrying in").count(), 2);
}

#[test]
fn gives_up_after_limit() {
    let limit = 2;
    let mock = MockEndpoint::start(vec![(500, "{}".into()); limit as usize + 1]);
    let err = generate_llm(&bundle(), &client(&mock.base_url, limit)).unwrap_err();
    assert_eq!(mock.join().len(), limit as usize + 1);
    match &err {
        LlmError::Transport { attempts, .. } => assert_eq!(*attempts, limit + 1),
        other => panic!("{other:?}"),
    }
    assert!(!err.transcript().contains(SECRET));
}

#[test]
fn client_errors_are_not_retried() {
    let mock = MockEndpoint::start(vec![(401, format!("{{\"error\":\"bad key {SECRET}\"}}"))]);
    let err = generate_llm(&bundle(), &client(&mock.base_url, 3)).unwrap_err();
    assert_eq!(mock.join().len(), 1);
    assert!(matches!(err, LlmError::Http { status: 401, .. }));
    // even an endpoint echoing the key does not leak it into the log
    assert!(!err.transcript().contains(SECRET));
}

#[test]
fn reply_without_fences_is_an_extraction_error() {
    let mock = MockEndpoint::start(vec![(200, chat_reply("I cannot help with that."))]);
    let err = generate_llm(&bundle(), &client(&mock.base_url, 0)).unwrap_err();
    mock.join();
    match err {
        LlmError::Extraction { raw, transcript, .. } => {
            assert_eq!(raw, "I cannot help with that.");
            assert!(transcript.contains("I cannot help with that."));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = generate_llm(&bundle(), &client(&format!("http://127.0.0.1:{port}/v1"), 1)).unwrap_err();
    assert!(matches!(err, LlmError::Transport { attempts: 2, .. }), "{err:?}");
}
