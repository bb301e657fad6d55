//! Repository ingestion: function extraction, call-graph resolution, and
//! docstring generation for natural-language queries.
//!
//! A corpus is a set of repositories on disk. Each repository is walked in
//! sorted path order, functions are sliced out by an [`AstProvider`], and a
//! name-based call graph links them. Docstrings come from a pluggable
//! [`DocstringGenerator`]; the built-in one is deterministic and offline.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ast::{self, AstProvider};
use crate::error::{Error, Result};
use crate::text::whitespace_tokens;

/// A repository root on disk plus its identity in the corpus.
#[derive(Debug, Clone)]
pub struct Repository {
    pub repo_id: String,
    pub root_path: PathBuf,
    pub language_tag: String,
}

/// One extracted function with its neighborhood in the call graph.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionUnit {
    pub func_id: String,
    pub repo_id: String,
    pub name: String,
    pub source: String,
    pub callers: Vec<String>,
    pub callees: Vec<String>,
    pub docstring: Option<String>,
}

/// A natural-language query tied to the function it was generated from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DocQuery {
    pub query_id: String,
    pub func_id: String,
    pub text: String,
}

impl DocQuery {
    /// The query id used for a function's generated docstring.
    pub fn id_for(func_id: &str) -> String {
        format!("q:{func_id}")
    }
}

/// Extract every function from every file under the repository root.
///
/// Files are visited in sorted relative-path order and functions in source
/// order, so ids and output order are deterministic for a given tree.
/// Unreadable files are skipped with a warning.
pub fn extract_functions(repo: &Repository, provider: &dyn AstProvider) -> Result<Vec<FunctionUnit>> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(&repo.root_path)
        .follow_links(false)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let mut out = Vec::new();
    for path in files {
        let source = match std::fs::read_to_string(&path) {
            Ok(s) => s,
            Err(err) => {
                log::warn!("skipping unreadable file {}: {err}", path.display());
                continue;
            }
        };
        let rel = path
            .strip_prefix(&repo.root_path)
            .unwrap_or(&path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let funcs = provider.functions(&source)?;
        for f in funcs {
            let func_id = format!("{}:{}:{}:{}", repo.repo_id, rel, f.start_byte, f.name);
            out.push(FunctionUnit {
                func_id,
                repo_id: repo.repo_id.clone(),
                name: f.name.clone(),
                source: source[f.start_byte..f.end_byte].to_string(),
                callers: Vec::new(),
                callees: Vec::new(),
                docstring: None,
            });
        }
    }
    Ok(out)
}

/// Fill in `callers` / `callees` for a single repository's functions.
///
/// Call sites are matched to definitions by name. A call site whose name has
/// several definitions links to all of them (logged once per name); a
/// function never lists itself. Both lists are sorted and de-duplicated.
pub fn resolve_call_graph(mut units: Vec<FunctionUnit>) -> Vec<FunctionUnit> {
    let mut by_name: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, u) in units.iter().enumerate() {
        by_name.entry(u.name.as_str()).or_default().push(i);
    }
    for (name, ids) in &by_name {
        if ids.len() > 1 {
            log::warn!("ambiguous function name `{name}`: {} definitions; call sites link to all", ids.len());
        }
    }

    let mut callees: Vec<Vec<String>> = vec![Vec::new(); units.len()];
    let mut callers: Vec<Vec<String>> = vec![Vec::new(); units.len()];
    for (i, u) in units.iter().enumerate() {
        for name in ast::call_site_names(&u.source) {
            if let Some(targets) = by_name.get(name.as_str()) {
                for &t in targets {
                    if units[t].func_id != u.func_id {
                        callees[i].push(units[t].func_id.clone());
                        callers[t].push(u.func_id.clone());
                    }
                }
            }
        }
    }
    for (i, u) in units.iter_mut().enumerate() {
        let mut ce = std::mem::take(&mut callees[i]);
        ce.sort();
        ce.dedup();
        let mut cr = std::mem::take(&mut callers[i]);
        cr.sort();
        cr.dedup();
        u.callees = ce;
        u.callers = cr;
    }
    units
}

/// A docstring-generation prompt plus the number of whitespace tokens of
/// embedded code (the quantity the budget applies to).
#[derive(Debug, Clone)]
pub struct Prompt {
    pub text: String,
    pub code_tokens: usize,
}

/// Build the docstring prompt for one function.
///
/// The prompt always contains the full function source. Caller sections come
/// first, then callee sections, in stored order; when the whitespace-token
/// count of all embedded code would exceed `budget`, sections are dropped
/// from the end (callees first, last-listed first) until it fits. The
/// template framing does not count against the budget. Errors if the
/// function source alone exceeds the budget.
pub fn build_docgen_prompt(
    unit: &FunctionUnit,
    units: &HashMap<String, FunctionUnit>,
    budget: usize,
) -> Result<Prompt> {
    let src_tokens = whitespace_tokens(&unit.source);
    if budget < src_tokens {
        return Err(Error::BudgetTooSmall { budget, required: src_tokens });
    }

    enum Kind {
        Caller,
        Callee,
    }
    let mut sections: Vec<(Kind, &FunctionUnit)> = Vec::new();
    for id in &unit.callers {
        match units.get(id) {
            Some(n) => sections.push((Kind::Caller, n)),
            None => log::warn!("caller {id} of {} not in corpus; skipped", unit.func_id),
        }
    }
    for id in &unit.callees {
        match units.get(id) {
            Some(n) => sections.push((Kind::Callee, n)),
            None => log::warn!("callee {id} of {} not in corpus; skipped", unit.func_id),
        }
    }

    let mut code_tokens = src_tokens;
    let mut kept = 0usize;
    for (_, n) in &sections {
        let t = whitespace_tokens(&n.source);
        if code_tokens + t > budget {
            break;
        }
        code_tokens += t;
        kept += 1;
    }

    let mut text = String::new();
    text.push_str("Write a concise one-sentence docstring for the target function.\n\n");
    text.push_str("### Target function\n");
    text.push_str(&unit.source);
    text.push('\n');
    for (kind, n) in sections.iter().take(kept) {
        match kind {
            Kind::Caller => text.push_str(&format!("\n### Caller: {}\n", n.name)),
            Kind::Callee => text.push_str(&format!("\n### Callee: {}\n", n.name)),
        }
        text.push_str(&n.source);
        text.push('\n');
    }
    Ok(Prompt { text, code_tokens })
}

/// Produces a docstring for a function given its context prompt.
pub trait DocstringGenerator: Send + Sync {
    fn generate(&self, unit: &FunctionUnit, prompt: &str) -> Result<String>;
}

/// Deterministic offline docstring generator.
///
/// Describes the function by its name words and its most frequent
/// identifiers; output is a single sentence and depends only on the unit.
#[derive(Debug, Default, Clone, Copy)]
pub struct TemplateDocGen;

impl DocstringGenerator for TemplateDocGen {
    fn generate(&self, unit: &FunctionUnit, _prompt: &str) -> Result<String> {
        let name_words = crate::text::tokenize(&unit.name).join(" ");
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for ident in ast::identifier_tokens(&unit.source) {
            let low = ident.to_lowercase();
            if low == unit.name.to_lowercase() {
                continue;
            }
            if !counts.contains_key(&low) {
                order.push(low.clone());
            }
            *counts.entry(low).or_insert(0) += 1;
        }
        let mut ranked: Vec<&String> = order.iter().collect();
        ranked.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then_with(|| a.cmp(b)));
        ranked.truncate(6);
        let subject = if name_words.is_empty() { unit.name.clone() } else { name_words };
        let doc = if ranked.is_empty() {
            format!("Performs the {subject} operation.")
        } else {
            let items = ranked.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
            format!("Performs the {subject} operation over {items}.")
        };
        Ok(doc)
    }
}

/// Generate one query per function.
///
/// Prompt construction or generator failure for a unit logs a warning and
/// leaves that unit without a query (it is excluded downstream) rather than
/// failing the whole corpus.
pub fn generate_docstrings(
    units: &[FunctionUnit],
    gen: &dyn DocstringGenerator,
    budget: usize,
    max_in_flight: usize,
) -> Vec<DocQuery> {
    let lookup: HashMap<String, FunctionUnit> =
        units.iter().map(|u| (u.func_id.clone(), u.clone())).collect();
    let results = crate::clients::map_bounded(units, max_in_flight, |unit| {
        let prompt = build_docgen_prompt(unit, &lookup, budget)?;
        let text = gen.generate(unit, &prompt.text)?;
        Ok::<_, Error>(DocQuery {
            query_id: DocQuery::id_for(&unit.func_id),
            func_id: unit.func_id.clone(),
            text,
        })
    });
    let mut out = Vec::new();
    for (unit, res) in units.iter().zip(results) {
        match res {
            Ok(q) => out.push(q),
            Err(err) => {
                log::warn!("no docstring for {}: {err}; unit excluded downstream", unit.func_id)
            }
        }
    }
    out
}
