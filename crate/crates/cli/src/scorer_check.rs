use std::net::SocketAddr;

use anyhow::{bail, Context, Result};
use curiosity::qa_scorer::{serve_stub, QaScorer, RemoteConfig, RemoteScorer, StubScorer};

const CASES: &[(&str, &str)] = &[
    (
        "what was the name of his father?",
        "His father, Milutin Tesla, was an Eastern Orthodox priest. His mother was Duka Mandic.",
    ),
    (
        "where was tesla born?",
        "Tesla was born on 10 July 1856 in the village of Smiljan.",
    ),
    (
        "who won the race?",
        "The weather was pleasant and the crowd was large.",
    ),
    (
        "are there any other interesting aspects about this article?",
        "Tesla moved to Graz in 1875.",
    ),
];

/// Serve the stub forever, or check that a server's `/score` and
/// `/score_batch` answers match the in-process stub exactly.
pub fn run(url: Option<&str>, serve: Option<&str>) -> Result<()> {
    if let Some(addr) = serve {
        let addr: SocketAddr = addr
            .parse()
            .with_context(|| format!("invalid address `{addr}`"))?;
        let server = serve_stub(addr, None).with_context(|| format!("binding {addr}"))?;
        eprintln!("stub scorer listening on {}", server.url());
        server.wait();
        return Ok(());
    }
    let local;
    let endpoint = match url {
        Some(u) => u.to_string(),
        None => {
            local = serve_stub("127.0.0.1:0".parse()?, None).context("starting loopback stub")?;
            local.url()
        }
    };
    let remote = RemoteScorer::new(RemoteConfig {
        endpoint: endpoint.clone(),
        ..RemoteConfig::default()
    })?;
    let mut failures = 0;
    let requests: Vec<(String, String)> = CASES
        .iter()
        .map(|(q, c)| (q.to_string(), c.to_string()))
        .collect();
    let batch = remote.score_batch(&requests)?;
    for ((q, c), batched) in CASES.iter().zip(batch) {
        let expected = StubScorer.score(q, c)?;
        let single = remote.score(q, c)?;
        let batched = batched?;
        let ok = single == expected && batched == expected;
        if !ok {
            failures += 1;
        }
        println!(
            "{} p={:.6} {q:?}",
            if ok { "ok      " } else { "MISMATCH" },
            expected.probability
        );
    }
    if failures > 0 {
        bail!(
            "{failures} of {} cases disagree with the stub at {endpoint}",
            CASES.len()
        );
    }
    println!(
        "{} cases agree via /score and /score_batch at {endpoint}",
        CASES.len()
    );
    Ok(())
}
