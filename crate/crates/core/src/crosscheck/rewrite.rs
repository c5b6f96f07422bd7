use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ConsistencyVerdict, CrossCheckError, EliminationResult, Eliminator};
use crate::corpus::InstructionSample;
use crate::sgparse::{extract_chunks, AnswerChunk, ChunkIdentity, ChunkKind};

/// Something that rewrites a passage without the given phrases.
pub trait Rewriter: Send + Sync {
    fn rewrite(&self, passage: &str, phrases: &[String]) -> Result<String, String>;
}

#[derive(Serialize)]
struct RewriteRequest<'a> {
    passage: &'a str,
    hallucination_phrases: &'a [String],
}

#[derive(Deserialize)]
struct RewriteResponse {
    passage: String,
}

/// Client for `POST <endpoint>/v1/rewrite`.
#[derive(Debug, Clone)]
pub struct HttpRewriter {
    url: String,
    agent: ureq::Agent,
}

impl HttpRewriter {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        HttpRewriter {
            url: format!("{}/v1/rewrite", endpoint.trim_end_matches('/')),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Rewriter for HttpRewriter {
    fn rewrite(&self, passage: &str, phrases: &[String]) -> Result<String, String> {
        let resp = self
            .agent
            .post(&self.url)
            .send_json(RewriteRequest { passage, hallucination_phrases: phrases })
            .map_err(|e| e.to_string())?;
        let body: RewriteResponse = resp.into_json().map_err(|e| e.to_string())?;
        Ok(body.passage)
    }
}

/// Ask the rewriter for every turn with flagged chunks and accept the result
/// only if a re-parse shows the flagged chunks gone and every other chunk
/// (except those attached to a removed object) intact. Otherwise, or on any
/// wire error, fall back to [`Eliminator::eliminate`].
pub fn rewrite_external(
    eliminator: &Eliminator,
    rewriter: &dyn Rewriter,
    sample: &InstructionSample,
    chunks: &[AnswerChunk],
    verdicts: &[ConsistencyVerdict],
) -> Result<EliminationResult, CrossCheckError> {
    let flagged = eliminator.flagged(sample, chunks, verdicts)?;
    if flagged.is_empty() {
        return eliminator.eliminate(sample, chunks, verdicts);
    }
    let flagged_ids: HashSet<&str> = flagged.iter().map(|c| c.chunk_id.as_str()).collect();
    let mut turns: Vec<usize> = flagged.iter().map(|c| c.span.turn_index).collect();
    turns.sort_unstable();
    turns.dedup();

    let mut rewritten = sample.conversations.clone();
    let mut cascaded = Vec::new();
    for &t in &turns {
        let in_turn: Vec<&AnswerChunk> = chunks.iter().filter(|c| c.span.turn_index == t).collect();
        let dead: HashSet<&str> = in_turn
            .iter()
            .filter(|c| flagged_ids.contains(c.chunk_id.as_str()) && c.kind == ChunkKind::Object)
            .map(|c| c.head.as_str())
            .collect();
        let mut phrases: Vec<String> =
            in_turn.iter().filter(|c| flagged_ids.contains(c.chunk_id.as_str())).map(|c| c.surface.clone()).collect();
        phrases.dedup();
        let passage = match rewriter.rewrite(&sample.conversations[t].value, &phrases) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{}: rewriter failed ({e}); using deterministic elimination", sample.id);
                return eliminator.eliminate(sample, chunks, verdicts);
            }
        };
        rewritten[t].value = passage;

        let must_go: HashSet<ChunkIdentity> =
            in_turn.iter().filter(|c| flagged_ids.contains(c.chunk_id.as_str())).map(|c| c.identity()).collect();
        let mut must_stay = HashSet::new();
        for c in in_turn.iter().filter(|c| !flagged_ids.contains(c.chunk_id.as_str())) {
            let attached = c.kind != ChunkKind::Object
                && [c.subject.as_deref(), c.object.as_deref()].into_iter().flatten().any(|o| dead.contains(o));
            if attached {
                cascaded.push(c.chunk_id.clone());
            } else {
                must_stay.insert(c.identity());
            }
        }
        let probe = InstructionSample { conversations: rewritten.clone(), ..sample.clone() };
        let after: HashSet<ChunkIdentity> = extract_chunks(&probe, eliminator.lexicon())
            .into_iter()
            .filter(|c| c.span.turn_index == t)
            .map(|c| c.identity())
            .collect();
        if !must_go.is_disjoint(&after) || !must_stay.is_subset(&after) {
            log::warn!("{}: rewrite of turn {t} failed the re-parse check; using deterministic elimination", sample.id);
            return eliminator.eliminate(sample, chunks, verdicts);
        }
    }
    Ok(EliminationResult {
        sample_id: sample.id.clone(),
        rewritten_turns: rewritten,
        removed_chunk_ids: flagged.iter().map(|c| c.chunk_id.clone()).collect(),
        cascaded_chunk_ids: cascaded,
        dropped_sentences: Vec::new(),
        fallback_sentences: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;
    use crate::sgparse::Lexicon;

    struct Fixed(Result<String, String>);

    impl Rewriter for Fixed {
        fn rewrite(&self, _: &str, _: &[String]) -> Result<String, String> {
            self.0.clone()
        }
    }

    fn setup() -> (Eliminator, InstructionSample, Vec<AnswerChunk>, Vec<ConsistencyVerdict>) {
        let lex = Lexicon::builtin();
        let s = InstructionSample::new(
            "s",
            "im",
            vec![Turn::human("Describe."), Turn::assistant("A dog and a kite on the grass.")],
        );
        let chunks = extract_chunks(&s, &lex);
        let verdicts = chunks
            .iter()
            .map(|c| {
                let bad = c.kind == ChunkKind::Object && c.head == "kite";
                ConsistencyVerdict {
                    chunk_id: c.chunk_id.clone(),
                    sample_id: "s".into(),
                    kind: c.kind,
                    head: c.head.clone(),
                    per_expert: vec![],
                    failed_experts: vec![],
                    conscore: Some(if bad { 0.0 } else { 1.0 }),
                    is_hallucination: bad,
                    unverifiable: false,
                }
            })
            .collect();
        (Eliminator::new(lex), s, chunks, verdicts)
    }

    #[test]
    fn valid_rewrite_is_adopted_verbatim() {
        let (e, s, c, v) = setup();
        let r = rewrite_external(&e, &Fixed(Ok("A dog rests, and there is grass.".into())), &s, &c, &v).unwrap();
        assert_eq!(r.rewritten_turns[1].value, "A dog rests, and there is grass.");
        assert_eq!(r.removed_chunk_ids.len(), 1);
    }

    #[test]
    fn rewrite_keeping_flagged_surface_is_rejected() {
        let (e, s, c, v) = setup();
        let fallback = e.eliminate(&s, &c, &v).unwrap();
        let r = rewrite_external(&e, &Fixed(Ok("A dog and a kite.".into())), &s, &c, &v).unwrap();
        assert_eq!(r, fallback);
        // losing an unflagged chunk is rejected too
        let r = rewrite_external(&e, &Fixed(Ok("Nothing here.".into())), &s, &c, &v).unwrap();
        assert_eq!(r, fallback);
    }

    #[test]
    fn unreachable_rewriter_falls_back() {
        let (e, s, c, v) = setup();
        let http = HttpRewriter::new("http://127.0.0.1:9", Duration::from_millis(200));
        assert_eq!(rewrite_external(&e, &http, &s, &c, &v).unwrap(), e.eliminate(&s, &c, &v).unwrap());
        assert!(rewrite_external(&e, &Fixed(Err("down".into())), &s, &c, &v).unwrap().rewritten_turns[1]
            .value
            .contains("dog"));
    }

    #[test]
    fn http_rewriter_wire_format() {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let addr = server.server_addr().to_ip().unwrap();
        let h = std::thread::spawn(move || {
            let mut req = server.recv().unwrap();
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let v: serde_json::Value = serde_json::from_str(&body).unwrap();
            assert_eq!(req.url(), "/v1/rewrite");
            assert_eq!(v["hallucination_phrases"][0], "kite");
            req.respond(tiny_http::Response::from_string(r#"{"passage": "A dog on the grass."}"#)).unwrap();
        });
        let rw = HttpRewriter::new(&format!("http://{addr}"), Duration::from_secs(2));
        assert_eq!(rw.rewrite("A dog and a kite.", &["kite".into()]).unwrap(), "A dog on the grass.");
        h.join().unwrap();
    }
}
