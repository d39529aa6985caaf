//! On-disk record of an evolution run.
//!
//! ```text
//! <dir>/candidates/NNN.src        candidate source
//! <dir>/candidates/NNN.meta.json  fitness, origin, parents, epoch, contract
//! <dir>/reflections.jsonl         one reflection per line
//! <dir>/elitist.src               best candidate (absent if none scored)
//! <dir>/history.json              full history plus its digest
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use contractlab_core::evolution::engine::Fitness;
use contractlab_core::evolution::{EvolutionOutcome, Origin, SolverCandidate};
use serde::Serialize;

#[derive(Serialize)]
struct CandidateMeta<'a> {
    id: usize,
    origin: Origin,
    parent_ids: &'a [usize],
    epoch: usize,
    /// Numeric fitness; `null` for failed candidates.
    fitness: Option<f64>,
    failure: Option<String>,
    low_confidence: bool,
    contract: Option<&'a [f64]>,
}

impl<'a> From<&'a SolverCandidate> for CandidateMeta<'a> {
    fn from(c: &'a SolverCandidate) -> Self {
        let failure = match &c.fitness {
            Fitness::Failed(f) => Some(f.to_string()),
            _ => None,
        };
        Self {
            id: c.id,
            origin: c.origin,
            parent_ids: &c.parent_ids,
            epoch: c.epoch,
            fitness: c.fitness.score(),
            failure,
            low_confidence: c.low_confidence,
            contract: c.contract.as_ref().map(|r| r.payments()),
        }
    }
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    digest: String,
    elitist_id: Option<usize>,
    history: &'a contractlab_core::evolution::History,
}

pub fn write_run_artifacts(dir: &Path, outcome: &EvolutionOutcome) -> Result<()> {
    let cand_dir = dir.join("candidates");
    fs::create_dir_all(&cand_dir).with_context(|| format!("creating {}", cand_dir.display()))?;
    for c in &outcome.history.candidates {
        fs::write(cand_dir.join(format!("{:03}.src", c.id)), &c.source_text)?;
        let meta = serde_json::to_string_pretty(&CandidateMeta::from(c))?;
        fs::write(cand_dir.join(format!("{:03}.meta.json", c.id)), meta + "\n")?;
    }

    let mut refl = fs::File::create(dir.join("reflections.jsonl"))?;
    for r in &outcome.history.reflections {
        writeln!(refl, "{}", serde_json::to_string(r)?)?;
    }

    let elitist_path = dir.join("elitist.src");
    match &outcome.elitist {
        Some(e) => fs::write(&elitist_path, &e.source_text)?,
        None if elitist_path.exists() => fs::remove_file(&elitist_path)?,
        None => {}
    }

    let file = HistoryFile {
        digest: outcome.history.digest(),
        elitist_id: outcome.elitist.as_ref().map(|e| e.id),
        history: &outcome.history,
    };
    fs::write(dir.join("history.json"), serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}
