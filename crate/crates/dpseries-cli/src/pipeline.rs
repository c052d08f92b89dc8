//! Per-point classification pipeline, proof-script replay and kernel runs,
//! with results kept in the cache.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use dpseries::branch::{
    check_irreducible, replay, KernelRequest, ReplayReport, RuleLibrary, SaturationOptions,
    SaturationOutcome, Script,
};
use dpseries::charlat::{q_to_string, DpsPoint};
use dpseries::classify::{
    enumerate_special_points, is_regular, regular_reducibility, tadic_test, Evidence, PointVerdict,
    Regularity, TadicOutcome, Verdict,
};
use dpseries::error::{Error, Result};
use dpseries::hecke::{
    kernel_dimension, module_rows, FactorOrder, GroupTable, KernelOptions, KernelReport,
    SpillConfig,
};
use dpseries::rootsys::{build_root_datum, format_word, RootDatum};
use serde::Serialize;

use crate::cache::{entry_name, Cache};
use crate::config::RunConfig;
use crate::data::{
    parse_candidates, parse_references, parse_script, read_or, Candidate, ReferenceVerdict,
    BUNDLED_SCRIPTS, CANDIDATES_JSON, REFERENCES_JSON,
};

/// Bumped whenever cached results would change meaning.
const CACHE_VERSION: &str = "v1";

pub struct Engine {
    pub cfg: RunConfig,
    pub d: RootDatum,
    pub lib: RuleLibrary,
    pub cache: Cache,
    candidates: Vec<Candidate>,
    references: Vec<ReferenceVerdict>,
    scripts: Vec<Script>,
    fingerprint: String,
}

/// A scripted kernel request together with the computed report.
#[derive(Debug, Clone, Serialize)]
pub struct KernelCheck {
    pub request: KernelRequest,
    pub report: KernelReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayOutcome {
    pub report: ReplayReport,
    pub kernels: Vec<KernelCheck>,
    /// Kernel requests that were not run.
    pub skipped_kernels: usize,
}

fn load_scripts(cfg: &RunConfig, datum: &str) -> Result<Vec<Script>> {
    let mut out: Vec<Script> = Vec::new();
    if let Some(dir) = &cfg.scripts_dir {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::Config(format!("cannot read scripts_dir {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let text = fs::read_to_string(&p)?;
            out.push(parse_script(&text, &p.display().to_string())?);
        }
    }
    for (name, text) in BUNDLED_SCRIPTS {
        if !out.iter().any(|s| s.name == name) {
            out.push(parse_script(text, name)?);
        }
    }
    out.retain(|s| s.datum == datum);
    Ok(out)
}

impl Engine {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let d = build_root_datum(&cfg.datum)?;
        let label = d.label.to_string();
        let cache = Cache::open(&cfg.cache_dir)?;
        let cand_text = read_or(cfg.candidates.as_deref(), CANDIDATES_JSON)?;
        let (cand_datum, mut candidates) = parse_candidates(&cand_text)?;
        if cand_datum != label {
            if cfg.candidates.is_some() {
                return Err(Error::Config(format!(
                    "candidate table is for {cand_datum}, not {label}"
                )));
            }
            candidates.clear();
        }
        let ref_text = read_or(cfg.references.as_deref(), REFERENCES_JSON)?;
        let (ref_datum, mut references) = parse_references(&ref_text)?;
        if ref_datum != label {
            if cfg.references.is_some() {
                return Err(Error::Config(format!(
                    "reference verdicts are for {ref_datum}, not {label}"
                )));
            }
            references.clear();
        }
        let scripts = load_scripts(&cfg, &label)?;
        let mut h = DefaultHasher::new();
        (CACHE_VERSION, &label, &cand_text, &ref_text).hash(&mut h);
        for s in &scripts {
            serde_json::to_string(s)
                .map_err(|e| Error::Format(e.to_string()))?
                .hash(&mut h);
        }
        let fingerprint = format!("{:016x}", h.finish());
        let lib = RuleLibrary::builtin(&d);
        Ok(Engine {
            cfg,
            d,
            lib,
            cache,
            candidates,
            references,
            scripts,
            fingerprint,
        })
    }

    pub fn candidate(&self, p: &DpsPoint) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.point == *p)
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn reference(&self, p: &DpsPoint) -> Option<&ReferenceVerdict> {
        self.references.iter().find(|r| r.point() == *p)
    }

    pub fn scripts(&self) -> &[Script] {
        &self.scripts
    }

    /// Looks a script up by name, or reads it from a path.
    pub fn script(&self, name: &str) -> Result<Script> {
        let path = Path::new(name);
        if name.ends_with(".json") || path.components().count() > 1 {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read script {}: {e}", path.display()))
            })?;
            return parse_script(&text, name);
        }
        self.scripts
            .iter()
            .find(|s| s.name == name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no proof script named {name:?}")))
    }

    fn kernel_entry(&self, p: &DpsPoint, word: &[u8], q: i64) -> String {
        entry_name(&[
            "kernel",
            CACHE_VERSION,
            &self.d.label.to_string(),
            &p.i.to_string(),
            &q_to_string(&p.s),
            &p.k.to_string(),
            &format_word(word),
            &q.to_string(),
            &self.cfg.prime_seed.to_string(),
        ])
    }

    pub fn cached_kernel(&self, p: &DpsPoint, word: &[u8], q: i64) -> Result<Option<KernelReport>> {
        match self.cache.get(&self.kernel_entry(p, word, q))? {
            Some(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| Error::Format(format!("corrupt cached kernel report: {e}"))),
            None => Ok(None),
        }
    }

    /// Kernel of `n_w(λ₀)` on the Iwahori-fixed vectors, from the cache when
    /// present. Spills rows under the cache directory when configured.
    pub fn kernel(&self, p: &DpsPoint, word: &[u8], q: i64) -> Result<KernelReport> {
        if let Some(r) = self.cached_kernel(p, word, q)? {
            return Ok(r);
        }
        let name = self.kernel_entry(p, word, q);
        let table = GroupTable::build(&self.d)?;
        let rows = module_rows(&self.d, &table, p, word, q, FactorOrder::Composition)?;
        let spill = self.cfg.spill.then(|| SpillConfig {
            dir: self.cache.spill_dir(&name),
            max_bytes: self.cfg.spill_limit,
        });
        let opts = KernelOptions {
            block_rows: self.cfg.block_rows,
            workers: self.cfg.workers,
            spill,
            seed: self.cfg.prime_seed,
        };
        let report = kernel_dimension(&rows, &opts)?;
        let text =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
        self.cache.put(&name, &text)?;
        Ok(report)
    }

    /// Replays a script and, unless `run_kernels` is false, computes its
    /// kernel requests. Any mismatch is an assertion error.
    pub fn replay(&self, script: &Script, run_kernels: bool) -> Result<ReplayOutcome> {
        let report = replay(&self.d, &self.lib, script)?;
        let p = report.point;
        let mut kernels = Vec::new();
        let mut skipped = 0;
        for req in &report.kernel_requests {
            let r = if run_kernels {
                Some(self.kernel(&p, &req.word, req.q)?)
            } else {
                self.cached_kernel(&p, &req.word, req.q)?
            };
            let Some(r) = r else {
                skipped += 1;
                continue;
            };
            if (r.rank, r.kernel_dim) != (req.rank, req.kernel) {
                return Err(Error::Assertion(format!(
                    "step {}: kernel of {} has rank {} and dimension {}, expected {} and {}",
                    req.step,
                    format_word(&req.word),
                    r.rank,
                    r.kernel_dim,
                    req.rank,
                    req.kernel
                )));
            }
            if !matches!(
                r.certification,
                dpseries::hecke::Certification::Exact
                    | dpseries::hecke::Certification::ModularUpperBoundExactNullvectors
            ) {
                return Err(Error::Assertion(format!(
                    "step {}: kernel of {} is not certified: {:?}",
                    req.step,
                    format_word(&req.word),
                    r.certification
                )));
            }
            kernels.push(KernelCheck {
                request: req.clone(),
                report: r,
            });
        }
        Ok(ReplayOutcome {
            report,
            kernels,
            skipped_kernels: skipped,
        })
    }

    /// At `s = 0` the representation is unitary, hence semisimple, so a
    /// unique irreducible subrepresentation makes it irreducible. Scripts
    /// reach that either by a `conclude` step or by an injective intertwiner
    /// on the Iwahori-fixed vectors.
    fn scripted_verdict(&self, p: &DpsPoint) -> Result<Option<Evidence>> {
        if *p.s.numer() != 0 {
            return Ok(None);
        }
        for script in self
            .scripts
            .iter()
            .filter(|s| s.dps_point().ok() == Some(*p))
        {
            let has_kernels = script
                .steps
                .iter()
                .any(|s| matches!(s, dpseries::branch::ScriptStep::Kernel { .. }));
            if !has_kernels {
                let r = replay(&self.d, &self.lib, script)?;
                if r.unique_subrep {
                    return Ok(Some(Evidence::Script {
                        name: script.name.clone(),
                        steps: r.rows.len(),
                    }));
                }
                continue;
            }
            let out = self.replay(script, self.cfg.run_kernels)?;
            if out.skipped_kernels > 0 || out.kernels.is_empty() {
                continue;
            }
            if out.kernels.iter().all(|k| k.report.kernel_dim == 0) {
                let k = &out.kernels[0];
                let cert = serde_json::to_value(&k.report.certification)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_else(|| format!("{:?}", k.report.certification));
                return Ok(Some(Evidence::Kernel {
                    word: format_word(&k.request.word),
                    q: k.request.q as u64,
                    rank: k.report.rank,
                    kernel_dim: k.report.kernel_dim,
                    certification: cert,
                }));
            }
        }
        Ok(None)
    }

    /// Classifies one point: regularity first, then Tadić's test against the
    /// configured candidate, saturation, proof scripts and finally reference
    /// verdicts.
    pub fn classify_point(&self, p: &DpsPoint) -> Result<PointVerdict> {
        p.validate(&self.d)?;
        let verdict = |regularity, verdict, evidence| PointVerdict {
            i: p.i,
            s: p.s,
            k: p.k,
            regularity,
            verdict,
            evidence,
        };
        if is_regular(&self.d, p)? {
            return Ok(match regular_reducibility(&self.d, p)? {
                Some(w) => verdict(
                    Regularity::Regular,
                    Verdict::ReducibleRegular,
                    Evidence::RegularUnitPairing {
                        root: self.d.coroot_coeffs[w.root].clone(),
                        pairing: q_to_string(&w.pairing),
                    },
                ),
                None => verdict(
                    Regularity::Regular,
                    Verdict::Irreducible,
                    Evidence::RegularNoUnitPairing,
                ),
            });
        }
        let nr = Regularity::NonRegular;
        if let Some(c) = self.candidate(p) {
            let r = tadic_test(&self.d, p, &c.spec)?;
            if r.outcome == TadicOutcome::ReducibleConfirmed {
                if let Some(ev) = r.evidence(&c.spec) {
                    return Ok(verdict(nr, Verdict::Reducible, ev));
                }
            }
        }
        let sat = check_irreducible(&self.d, &self.lib, p, SaturationOptions::default())?;
        if sat.outcome == SaturationOutcome::Irreducible {
            return Ok(verdict(
                nr,
                Verdict::Irreducible,
                Evidence::Saturation {
                    seeds: vec![(sat.seed, 1)],
                    steps: sat.steps as usize,
                    mass: sat.mass,
                },
            ));
        }
        if let Some(ev) = self.scripted_verdict(p)? {
            return Ok(verdict(nr, Verdict::Irreducible, ev));
        }
        if let Some(r) = self.reference(p) {
            return Ok(verdict(
                nr,
                r.verdict,
                Evidence::Reference {
                    citation: r.citation.clone(),
                },
            ));
        }
        let note = match self.candidate(p) {
            Some(c) => format!(
                "Tadić's test against {} is inconclusive and saturation stops short",
                c.spec
            ),
            None => "no candidate configured and saturation stops short".to_string(),
        };
        Ok(verdict(
            nr,
            Verdict::Inconclusive,
            Evidence::NoMethod { note },
        ))
    }

    /// Cache state of the kernels scripted for points of `(i, k)`, so that a
    /// newly computed kernel invalidates older classification results.
    fn kernel_state(&self, i: usize, k: u32) -> Result<String> {
        let mut state = String::new();
        for s in &self.scripts {
            let Ok(p) = s.dps_point() else { continue };
            if p.i != i || p.k != k {
                continue;
            }
            for step in &s.steps {
                if let dpseries::branch::ScriptStep::Kernel { word, q, .. } = step {
                    let w = dpseries::rootsys::parse_word(word, self.d.rank())?;
                    let have = self.cfg.run_kernels || self.cached_kernel(&p, &w, *q)?.is_some();
                    state.push(if have { '1' } else { '0' });
                }
            }
        }
        Ok(state)
    }

    /// Verdicts for every special point of `(i, k)`, sorted by `s`.
    pub fn run_classification(&self, i: usize, k: u32) -> Result<Vec<PointVerdict>> {
        let kstate = self.kernel_state(i, k)?;
        let name = entry_name(&[
            "classify",
            &self.d.label.to_string(),
            &i.to_string(),
            &k.to_string(),
            &self.fingerprint,
            &kstate,
        ]);
        if let Some(text) = self.cache.get(&name)? {
            if let Ok(v) = serde_json::from_str(&text) {
                return Ok(v);
            }
        }
        let mut out = Vec::new();
        for sp in enumerate_special_points(&self.d, i, k)? {
            out.push(self.classify_point(&DpsPoint::new(i, sp.s, k))?);
        }
        let text = serde_json::to_string(&out).map_err(|e| Error::Format(e.to_string()))?;
        self.cache.put(&name, &text)?;
        Ok(out)
    }
}
