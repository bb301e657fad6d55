//! Language-agnostic structural parsing.
//!
//! The pipeline never depends on a real grammar: a pluggable [`AstProvider`]
//! turns source text into an ordered labeled tree and locates function
//! definitions. The built-in [`NestingParser`] approximates structure from
//! indentation and bracket nesting, which is enough for structural distance
//! comparisons and for slicing function bodies out of files. A grammar-backed
//! provider can be swapped in without touching anything downstream.

use crate::error::Result;

/// One node of an ordered labeled tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub label: String,
    pub children: Vec<usize>,
}

/// Ordered labeled tree stored as an arena. The root always exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstTree {
    nodes: Vec<AstNode>,
    root: usize,
}

impl AstTree {
    pub fn new(root_label: impl Into<String>) -> Self {
        AstTree { nodes: vec![AstNode { label: root_label.into(), children: Vec::new() }], root: 0 }
    }

    /// Append a child under `parent` and return its id.
    pub fn add_node(&mut self, parent: usize, label: impl Into<String>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(AstNode { label: label.into(), children: Vec::new() });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node ids in postorder (children left to right, then the node).
    pub fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        // Iterative traversal: (node, next child index to visit).
        let mut stack = vec![(self.root, 0usize)];
        while let Some(&mut (id, ref mut next)) = stack.last_mut() {
            if *next < self.nodes[id].children.len() {
                let child = self.nodes[id].children[*next];
                *next += 1;
                stack.push((child, 0));
            } else {
                out.push(id);
                stack.pop();
            }
        }
        out
    }

    /// Parse a compact textual tree: `label(child child(grand) ...)`.
    ///
    /// Labels may contain alphanumerics, `_`, `:`, `.`, `-`. Intended for
    /// fixtures and tools, not for source code.
    pub fn from_compact(s: &str) -> Option<AstTree> {
        fn label_char(c: char) -> bool {
            c.is_alphanumeric() || matches!(c, '_' | ':' | '.' | '-')
        }
        let chars: Vec<char> = s.chars().collect();
        let mut pos = 0usize;

        fn skip_ws(chars: &[char], pos: &mut usize) {
            while *pos < chars.len() && chars[*pos].is_whitespace() {
                *pos += 1;
            }
        }

        fn parse_node(
            chars: &[char],
            pos: &mut usize,
            tree: &mut AstTree,
            parent: Option<usize>,
        ) -> Option<usize> {
            skip_ws(chars, pos);
            let start = *pos;
            while *pos < chars.len() && label_char(chars[*pos]) {
                *pos += 1;
            }
            if *pos == start {
                return None;
            }
            let label: String = chars[start..*pos].iter().collect();
            let id = match parent {
                Some(p) => tree.add_node(p, label),
                None => {
                    tree.nodes[0].label = label;
                    0
                }
            };
            skip_ws(chars, pos);
            if *pos < chars.len() && chars[*pos] == '(' {
                *pos += 1;
                loop {
                    skip_ws(chars, pos);
                    if *pos < chars.len() && chars[*pos] == ')' {
                        *pos += 1;
                        break;
                    }
                    parse_node(chars, pos, tree, Some(id))?;
                }
            }
            Some(id)
        }

        let mut tree = AstTree::new("");
        parse_node(&chars, &mut pos, &mut tree, None)?;
        skip_ws(&chars, &mut pos);
        if pos == chars.len() {
            Some(tree)
        } else {
            None
        }
    }
}

/// A function located inside a source file, as byte offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFunction {
    pub name: String,
    pub start_byte: usize,
    pub end_byte: usize,
}

/// Structural front end: parse source into a tree and locate functions.
pub trait AstProvider: Send + Sync {
    /// Whether this provider handles sources tagged with `language_tag`.
    fn supports(&self, language_tag: &str) -> bool;

    /// Parse source text into an ordered labeled tree.
    fn parse(&self, source: &str) -> Result<AstTree>;

    /// Locate function definitions in a source file.
    fn functions(&self, source: &str) -> Result<Vec<RawFunction>>;
}

/// Built-in fallback provider based on indentation and bracket nesting.
///
/// Recognizes `def` / `fn` / `function` / `func` definitions with either
/// indented (`:`) or braced (`{ }`) bodies. Leaves are labeled by token
/// class (`kw:<word>`, `id`, `num`, `str`, `op:<char>`), so renaming
/// identifiers does not change the tree.
#[derive(Debug, Default, Clone, Copy)]
pub struct NestingParser;

impl AstProvider for NestingParser {
    fn supports(&self, _language_tag: &str) -> bool {
        true
    }

    fn parse(&self, source: &str) -> Result<AstTree> {
        Ok(build_tree(&lex(source)))
    }

    fn functions(&self, source: &str) -> Result<Vec<RawFunction>> {
        Ok(find_functions(source, &lex(source)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Keyword,
    Ident,
    Number,
    Str,
    Punct,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    text: String,
    start: usize,
    end: usize,
    line: usize,
}

struct Lexed {
    tokens: Vec<Token>,
    /// Byte range of each line, end exclusive of the newline.
    line_span: Vec<(usize, usize)>,
    /// Leading-whitespace width per line (tab = 4); `None` for blank or
    /// comment-only lines.
    line_indent: Vec<Option<usize>>,
    /// Open-bracket depth at the start of each line.
    line_depth: Vec<usize>,
}

const KEYWORDS: &[&str] = &[
    "and", "as", "assert", "async", "await", "break", "case", "class", "const", "continue",
    "def", "del", "do", "elif", "else", "enum", "except", "false", "finally", "fn", "for",
    "from", "func", "function", "global", "if", "impl", "import", "in", "is", "lambda", "let",
    "loop", "match", "mod", "mut", "new", "none", "nonlocal", "not", "null", "or", "pass",
    "pub", "raise", "return", "static", "struct", "switch", "trait", "true", "try", "type",
    "use", "var", "where", "while", "with", "yield",
];

fn is_keyword(word: &str) -> bool {
    let lower = word.to_lowercase();
    KEYWORDS.binary_search(&lower.as_str()).is_ok()
}

fn lex(source: &str) -> Lexed {
    let bytes = source.as_bytes();
    let mut line_span = Vec::new();
    let mut line_indent = Vec::new();
    {
        let mut start = 0usize;
        for (i, &b) in bytes.iter().enumerate() {
            if b == b'\n' {
                line_span.push((start, i));
                start = i + 1;
            }
        }
        line_span.push((start, bytes.len()));
        for &(s, e) in &line_span {
            let line = &source[s..e];
            let mut width = 0usize;
            let mut rest = "";
            let mut blank = true;
            for (j, c) in line.char_indices() {
                match c {
                    ' ' => width += 1,
                    '\t' => width += 4,
                    _ => {
                        blank = false;
                        rest = &line[j..];
                        break;
                    }
                }
            }
            if blank || rest.starts_with('#') || rest.starts_with("//") {
                line_indent.push(None);
            } else {
                line_indent.push(Some(width));
            }
        }
    }

    let mut tokens = Vec::new();
    let mut line_depth = vec![0usize; line_span.len()];
    let mut depth = 0usize;
    let mut line = 0usize;
    let mut chars = source.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        // Keep the line counter in sync before consuming anything.
        while line + 1 < line_span.len() && i > line_span[line].1 {
            line += 1;
            line_depth[line] = depth;
        }
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            while let Some(&(_, c2)) = chars.peek() {
                if c2 == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        if c == '/' {
            let mut ahead = chars.clone();
            ahead.next();
            if matches!(ahead.peek(), Some(&(_, '/'))) {
                while let Some(&(_, c2)) = chars.peek() {
                    if c2 == '\n' {
                        break;
                    }
                    chars.next();
                }
                continue;
            }
        }
        if c == '"' || c == '\'' {
            let quote = c;
            chars.next();
            let mut end = i + c.len_utf8();
            while let Some(&(j, c2)) = chars.peek() {
                if c2 == '\n' {
                    break;
                }
                chars.next();
                end = j + c2.len_utf8();
                if c2 == '\\' {
                    if let Some(&(k, c3)) = chars.peek() {
                        if c3 != '\n' {
                            chars.next();
                            end = k + c3.len_utf8();
                        }
                    }
                    continue;
                }
                if c2 == quote {
                    break;
                }
            }
            tokens.push(Token {
                kind: TokKind::Str,
                text: source[i..end].to_string(),
                start: i,
                end,
                line,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut end = i;
            while let Some(&(j, c2)) = chars.peek() {
                if c2.is_alphanumeric() || c2 == '.' || c2 == '_' {
                    chars.next();
                    end = j + c2.len_utf8();
                } else {
                    break;
                }
            }
            tokens.push(Token {
                kind: TokKind::Number,
                text: source[start..end.max(start + c.len_utf8())].to_string(),
                start,
                end: end.max(start + c.len_utf8()),
                line,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            let mut end = i + c.len_utf8();
            chars.next();
            while let Some(&(j, c2)) = chars.peek() {
                if c2.is_alphanumeric() || c2 == '_' {
                    chars.next();
                    end = j + c2.len_utf8();
                } else {
                    break;
                }
            }
            let text = source[start..end].to_string();
            let kind = if is_keyword(&text) { TokKind::Keyword } else { TokKind::Ident };
            tokens.push(Token { kind, text, start, end, line });
            continue;
        }
        // Single-character punctuation.
        chars.next();
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.saturating_sub(1),
            _ => {}
        }
        tokens.push(Token {
            kind: TokKind::Punct,
            text: c.to_string(),
            start: i,
            end: i + c.len_utf8(),
            line,
        });
    }

    Lexed { tokens, line_span, line_indent, line_depth }
}

fn leaf_label(tok: &Token) -> String {
    match tok.kind {
        TokKind::Keyword => format!("kw:{}", tok.text.to_lowercase()),
        TokKind::Ident => "id".to_string(),
        TokKind::Number => "num".to_string(),
        TokKind::Str => "str".to_string(),
        TokKind::Punct => format!("op:{}", tok.text),
    }
}

fn build_tree(lexed: &Lexed) -> AstTree {
    let mut tree = AstTree::new("module");
    // (indent that opened the block, node id)
    let mut indent_stack: Vec<(usize, usize)> = vec![(0, tree.root())];
    // (opening bracket, node id)
    let mut bracket_stack: Vec<(char, usize)> = Vec::new();

    let mut idx = 0usize;
    while idx < lexed.tokens.len() {
        let line = lexed.tokens[idx].line;
        let line_end = {
            let mut j = idx;
            while j < lexed.tokens.len() && lexed.tokens[j].line == line {
                j += 1;
            }
            j
        };
        if bracket_stack.is_empty() {
            if let Some(indent) = lexed.line_indent[line] {
                while indent_stack.len() > 1 && indent < indent_stack.last().unwrap().0 {
                    indent_stack.pop();
                }
                let (top_indent, top_node) = *indent_stack.last().unwrap();
                if indent > top_indent {
                    let block = tree.add_node(top_node, "block");
                    indent_stack.push((indent, block));
                }
            }
        }
        for tok in &lexed.tokens[idx..line_end] {
            let parent = bracket_stack
                .last()
                .map(|&(_, n)| n)
                .unwrap_or_else(|| indent_stack.last().unwrap().1);
            if tok.kind == TokKind::Punct {
                let c = tok.text.chars().next().unwrap();
                match c {
                    '(' | '[' | '{' => {
                        let label = match c {
                            '(' => "paren",
                            '[' => "bracket",
                            _ => "brace",
                        };
                        let node = tree.add_node(parent, label);
                        bracket_stack.push((c, node));
                        continue;
                    }
                    ')' | ']' | '}' => {
                        // Tolerant of mismatched closers.
                        bracket_stack.pop();
                        continue;
                    }
                    _ => {}
                }
            }
            tree.add_node(parent, leaf_label(tok));
        }
        idx = line_end;
    }
    tree
}

const DEF_KEYWORDS: &[&str] = &["def", "fn", "func", "function"];

fn find_functions(source: &str, lexed: &Lexed) -> Vec<RawFunction> {
    let toks = &lexed.tokens;
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if toks[i].kind != TokKind::Keyword {
            continue;
        }
        let low = toks[i].text.to_lowercase();
        if !DEF_KEYWORDS.contains(&low.as_str()) {
            continue;
        }
        let Some(name_tok) = toks.get(i + 1) else { continue };
        if name_tok.kind != TokKind::Ident {
            continue;
        }

        // Scan forward for the start of the body: the first `{` or `:` that
        // sits outside the signature's own brackets.
        enum Style {
            Brace(usize),
            Indent(usize),
        }
        let mut style = None;
        let mut depth = 0i32;
        for (j, tok) in toks.iter().enumerate().skip(i + 2).take(400) {
            if tok.kind != TokKind::Punct {
                continue;
            }
            match tok.text.as_str() {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                "{" if depth == 0 => {
                    style = Some(Style::Brace(j));
                    break;
                }
                "{" => depth += 1,
                "}" => depth -= 1,
                ":" if depth == 0 => {
                    style = Some(Style::Indent(j));
                    break;
                }
                _ => {}
            }
        }
        let Some(style) = style else { continue };

        let start_byte = toks[i].start;
        let end_byte = match style {
            Style::Brace(j) => {
                let mut depth = 1i32;
                let mut end = None;
                for tok in toks.iter().skip(j + 1) {
                    if tok.kind == TokKind::Punct {
                        match tok.text.as_str() {
                            "{" => depth += 1,
                            "}" => {
                                depth -= 1;
                                if depth == 0 {
                                    end = Some(tok.end);
                                    break;
                                }
                            }
                            _ => {}
                        }
                    }
                }
                match end {
                    Some(e) => e,
                    None => continue, // unterminated body
                }
            }
            Style::Indent(j) => {
                let def_line = toks[i].line;
                let def_indent = lexed.line_indent[def_line].unwrap_or(0);
                let colon_line = toks[j].line;
                let base_depth = lexed.line_depth[def_line];
                let mut last_code = colon_line;
                for line in colon_line + 1..lexed.line_span.len() {
                    match lexed.line_indent[line] {
                        None => continue, // blank or comment; may still be inside the body
                        Some(ind) => {
                            if lexed.line_depth[line] > base_depth || ind > def_indent {
                                last_code = line;
                            } else {
                                break;
                            }
                        }
                    }
                }
                if last_code == colon_line {
                    toks[j].end
                } else {
                    lexed.line_span[last_code].1
                }
            }
        };
        let end_byte = start_byte + source[start_byte..end_byte].trim_end().len();
        out.push(RawFunction { name: name_tok.text.clone(), start_byte, end_byte });
    }
    out
}

/// Identifier tokens of `source` in order of appearance (original spelling).
pub(crate) fn identifier_tokens(source: &str) -> Vec<String> {
    lex(source)
        .tokens
        .into_iter()
        .filter(|t| t.kind == TokKind::Ident)
        .map(|t| t.text)
        .collect()
}

/// Identifiers that look like call sites: an identifier directly followed by
/// `(`, excluding the name position of a definition.
pub(crate) fn call_site_names(source: &str) -> Vec<String> {
    let lexed = lex(source);
    let toks = &lexed.tokens;
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if toks[i].kind != TokKind::Ident {
            continue;
        }
        if i > 0
            && toks[i - 1].kind == TokKind::Keyword
            && DEF_KEYWORDS.contains(&toks[i - 1].text.to_lowercase().as_str())
        {
            continue;
        }
        if let Some(next) = toks.get(i + 1) {
            if next.kind == TokKind::Punct && next.text == "(" {
                out.push(toks[i].text.clone());
            }
        }
    }
    out
}
