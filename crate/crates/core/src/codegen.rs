//! Source emission for child variants.
//!
//! A template file has a few `@@` directives followed by two sections:
//!
//! ```text
//! @@lang rust          target language, selects the build command
//! @@ext rs             file extension for emitted sources
//! @@f0 <expr>          round-function bodies, one per function id
//! @@round              per-round body with {{I}}, {{F}} and {{K}} holes
//! @@body               whole program with a single {{ROUNDS}} hole
//! ```
//!
//! Rendering writes the 80 rounds straight-line, each with its function body
//! and constant inlined. The output holds no gene table. [`unrender`] is the
//! exact inverse on rendered text and backs the toolchain-free
//! [`SpecializedVariant`] path.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use thiserror::Error;

use crate::engine::{self, Digest, GeneVector, KOptionId, RoundFunctionId, ROUNDS};
use crate::genome;

pub const DEFAULT_TEMPLATE: &str = "rust";

const BUNDLED: &[(&str, &str)] =
    &[("rust", include_str!("../templates/rust.tmpl")), ("c", include_str!("../templates/c.tmpl"))];

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` is malformed: {reason}")]
    BadTemplate { template: String, reason: String },
    #[error("source does not match template `{template}`: {reason}")]
    Unrecognized { template: String, reason: String },
    #[error("infrastructure error: {0}")]
    Infrastructure(String),
}

fn bad_template(id: &str, reason: impl Into<String>) -> CodegenError {
    CodegenError::BadTemplate { template: id.to_string(), reason: reason.into() }
}

fn unrecognized(id: &str, reason: impl Into<String>) -> CodegenError {
    CodegenError::Unrecognized { template: id.to_string(), reason: reason.into() }
}

/// Target language of a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Language {
    Rust,
    C,
}

impl Language {
    fn compiler(self) -> &'static str {
        match self {
            Language::Rust => "rustc",
            Language::C => "cc",
        }
    }

    fn build_command(self, source: &Path, output: &Path) -> Command {
        let mut cmd = Command::new(self.compiler());
        match self {
            Language::Rust => {
                cmd.args(["--edition", "2021", "-O", "-o"]).arg(output).arg(source);
            }
            Language::C => {
                cmd.args(["-O2", "-std=c99", "-o"]).arg(output).arg(source);
            }
        }
        cmd
    }
}

/// A parsed template.
#[derive(Debug, Clone)]
pub struct Template {
    pub id: String,
    pub language: Language,
    pub extension: String,
    functions: [String; 4],
    round: String,
    body_prefix: String,
    body_suffix: String,
}

impl Template {
    /// One of the templates shipped in `templates/`.
    pub fn bundled(id: &str) -> Result<Template, CodegenError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(name, _)| *name == id)
            .ok_or_else(|| CodegenError::UnknownTemplate(id.to_string()))?;
        Template::parse(id, text)
    }

    pub fn bundled_ids() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(name, _)| *name)
    }

    /// Bundled template whose emitted files use `extension`.
    pub fn for_extension(extension: &str) -> Option<Template> {
        Self::bundled_ids().filter_map(|id| Template::bundled(id).ok()).find(|t| t.extension == extension)
    }

    pub fn parse(id: &str, text: &str) -> Result<Template, CodegenError> {
        let mut directives = BTreeMap::new();
        let mut section: Option<&str> = None;
        let mut round = String::new();
        let mut body = String::new();

        for line in text.split_inclusive('\n') {
            let bare = line.trim_end_matches(['\n', '\r']);
            if let Some(directive) = bare.strip_prefix("@@") {
                match directive {
                    "round" | "body" => section = Some(if directive == "round" { "round" } else { "body" }),
                    _ => {
                        let (key, value) = directive.split_once(' ').unwrap_or((directive, ""));
                        directives.insert(key.to_string(), value.trim().to_string());
                    }
                }
                continue;
            }
            match section {
                Some("round") => round.push_str(line),
                Some(_) => body.push_str(line),
                None if bare.trim().is_empty() => {}
                None => return Err(bad_template(id, format!("text outside a section: {bare:?}"))),
            }
        }

        let language = match directives.get("lang").map(String::as_str) {
            Some("rust") => Language::Rust,
            Some("c") => Language::C,
            other => return Err(bad_template(id, format!("unsupported language {other:?}"))),
        };
        let extension = directives.get("ext").cloned().ok_or_else(|| bad_template(id, "missing @@ext"))?;
        let mut functions: [String; 4] = Default::default();
        for (n, slot) in functions.iter_mut().enumerate() {
            *slot = directives
                .get(&format!("f{n}"))
                .cloned()
                .ok_or_else(|| bad_template(id, format!("missing @@f{n}")))?;
        }
        for hole in ["{{I}}", "{{F}}", "{{K}}"] {
            if !round.contains(hole) {
                return Err(bad_template(id, format!("round section lacks {hole}")));
            }
        }
        let mut parts = body.split("{{ROUNDS}}");
        let (Some(body_prefix), Some(body_suffix), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad_template(id, "body needs exactly one {{ROUNDS}}"));
        };

        Ok(Template {
            id: id.to_string(),
            language,
            extension,
            functions,
            round,
            body_prefix: body_prefix.to_string(),
            body_suffix: body_suffix.to_string(),
        })
    }

    fn expression(&self, f: RoundFunctionId) -> &str {
        &self.functions[f.code() as usize]
    }

    fn render_round(&self, i: usize, f: RoundFunctionId, k: KOptionId) -> String {
        self.round
            .replace("{{I}}", &i.to_string())
            .replace("{{F}}", self.expression(f))
            .replace("{{K}}", &format_constant(k.constant()))
    }

    pub fn render(&self, genes: &GeneVector) -> String {
        let mut out = String::with_capacity(self.body_prefix.len() + self.body_suffix.len() + 80 * 300);
        out.push_str(&self.body_prefix);
        for i in 0..ROUNDS {
            out.push_str(&self.render_round(i, genes.fp[i], genes.k[i]));
        }
        out.push_str(&self.body_suffix);
        out
    }
}

fn format_constant(k: u32) -> String {
    format!("0x{k:08X}")
}

/// Rendered source of one child variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSource {
    pub source_text: String,
    /// SHA-1 of the encoded chromosome pair (`fp` bytes then `k` bytes).
    pub genes_fingerprint: Digest,
    pub template_id: String,
}

impl VariantSource {
    pub fn template(&self) -> Result<Template, CodegenError> {
        Template::bundled(&self.template_id)
    }

    /// Writes the source text to `path`.
    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, &self.source_text)
    }
}

pub fn fingerprint(genes: &GeneVector) -> Digest {
    engine::digest(&engine::canonical_genes(), &genome::encode(genes).to_bytes())
}

pub fn render_variant(genes: &GeneVector, template_id: &str) -> Result<VariantSource, CodegenError> {
    let template = Template::bundled(template_id)?;
    Ok(VariantSource {
        source_text: template.render(genes),
        genes_fingerprint: fingerprint(genes),
        template_id: template.id,
    })
}

/// Recovers the round sequence from rendered source.
///
/// F1 and F3 render to the same text, so both come back as F1; the result
/// is functionally equivalent to the rendered genes.
pub fn unrender(template: &Template, source: &str) -> Result<GeneVector, CodegenError> {
    let id = template.id.as_str();
    let mut rest = source
        .strip_prefix(template.body_prefix.as_str())
        .ok_or_else(|| unrecognized(id, "program prologue differs"))?;

    let pattern = RoundPattern::compile(&template.round);
    let mut fp = [RoundFunctionId::F0; ROUNDS];
    let mut k = [KOptionId::K0; ROUNDS];
    for i in 0..ROUNDS {
        let (captures, tail) =
            pattern.match_prefix(rest).ok_or_else(|| unrecognized(id, format!("round {i} is not well formed")))?;
        rest = tail;
        for (hole, text) in captures {
            match hole {
                Hole::Index => {
                    if text != i.to_string() {
                        return Err(unrecognized(id, format!("round {i} carries index {text:?}")));
                    }
                }
                Hole::Function => {
                    fp[i] = RoundFunctionId::ALL
                        .into_iter()
                        .find(|f| template.expression(*f) == text)
                        .ok_or_else(|| unrecognized(id, format!("round {i} has unknown function {text:?}")))?;
                }
                Hole::Constant => {
                    k[i] = KOptionId::ALL
                        .into_iter()
                        .find(|opt| format_constant(opt.constant()) == text)
                        .ok_or_else(|| unrecognized(id, format!("round {i} has unknown constant {text:?}")))?;
                }
            }
        }
    }
    if rest != template.body_suffix {
        return Err(unrecognized(id, "program epilogue differs"));
    }
    Ok(GeneVector { fp, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hole {
    Index,
    Function,
    Constant,
}

/// Round template split into literal text and holes.
struct RoundPattern {
    lead: String,
    parts: Vec<(Hole, String)>,
}

impl RoundPattern {
    fn compile(round: &str) -> RoundPattern {
        let mut parts = Vec::new();
        let mut rest = round;
        let mut lead = None;
        loop {
            let next = [("{{I}}", Hole::Index), ("{{F}}", Hole::Function), ("{{K}}", Hole::Constant)]
                .into_iter()
                .filter_map(|(marker, hole)| rest.find(marker).map(|pos| (pos, marker, hole)))
                .min_by_key(|(pos, _, _)| *pos);
            let Some((pos, marker, hole)) = next else {
                match parts.last_mut() {
                    Some((_, literal)) => *literal = rest.to_string(),
                    None => lead = Some(rest.to_string()),
                }
                break;
            };
            match parts.last_mut() {
                Some((_, literal)) => *literal = rest[..pos].to_string(),
                None => lead = Some(rest[..pos].to_string()),
            }
            parts.push((hole, String::new()));
            rest = &rest[pos + marker.len()..];
        }
        RoundPattern { lead: lead.unwrap_or_default(), parts }
    }

    /// Each hole extends up to the first occurrence of the literal that
    /// follows it; a hole at the very end takes the rest of the line.
    fn match_prefix<'a>(&self, text: &'a str) -> Option<(Vec<(Hole, &'a str)>, &'a str)> {
        let mut rest = text.strip_prefix(self.lead.as_str())?;
        let mut captures = Vec::with_capacity(self.parts.len());
        for (hole, literal) in &self.parts {
            let end = if literal.is_empty() { rest.find('\n').unwrap_or(rest.len()) } else { rest.find(literal.as_str())? };
            let captured = &rest[..end];
            if captured.contains('\n') {
                return None;
            }
            captures.push((*hole, captured));
            rest = &rest[end + literal.len()..];
        }
        Some((captures, rest))
    }
}

/// Straight-line evaluator over a fixed round table.
///
/// Built either from genes or by parsing rendered source, it is the
/// gene-specialized counterpart of [`engine::digest`]: the function and
/// constant of every round are resolved once up front.
type BooleanFn = fn(u32, u32, u32) -> u32;

#[derive(Clone)]
pub struct SpecializedVariant {
    rounds: Box<[(BooleanFn, u32); ROUNDS]>,
}

fn choose(b: u32, c: u32, d: u32) -> u32 {
    d ^ (b & (c ^ d))
}

fn parity(b: u32, c: u32, d: u32) -> u32 {
    b ^ c ^ d
}

fn majority(b: u32, c: u32, d: u32) -> u32 {
    (b & c) ^ (b & d) ^ (c & d)
}

impl SpecializedVariant {
    pub fn from_genes(genes: &GeneVector) -> Self {
        let rounds = std::array::from_fn(|i| {
            let f: BooleanFn = match genes.fp[i] {
                RoundFunctionId::F0 => choose,
                RoundFunctionId::F1 | RoundFunctionId::F3 => parity,
                RoundFunctionId::F2 => majority,
            };
            (f, genes.k[i].constant())
        });
        SpecializedVariant { rounds: Box::new(rounds) }
    }

    /// Parses rendered source back into a round table.
    pub fn from_source(variant: &VariantSource) -> Result<Self, CodegenError> {
        Self::from_text(&variant.template_id, &variant.source_text)
    }

    /// Parses source text rendered with the bundled template `template_id`.
    pub fn from_text(template_id: &str, text: &str) -> Result<Self, CodegenError> {
        let template = Template::bundled(template_id)?;
        Ok(Self::from_genes(&unrender(&template, text)?))
    }

    pub fn digest(&self, message: &[u8]) -> Digest {
        let mut h = engine::INITIAL_STATE;
        for block in engine::pad_message(message) {
            let w = engine::expand_schedule(&block);
            let [mut a, mut b, mut c, mut d, mut e] = h;
            for ((f, k), w) in self.rounds.iter().zip(w) {
                let t = a.rotate_left(5).wrapping_add(f(b, c, d)).wrapping_add(e).wrapping_add(*k).wrapping_add(w);
                e = d;
                d = c;
                c = b.rotate_left(30);
                b = a;
                a = t;
            }
            for (word, r) in h.iter_mut().zip([a, b, c, d, e]) {
                *word = word.wrapping_add(r);
            }
        }
        Digest::from_state(&engine::HashState(h))
    }
}

impl fmt::Debug for SpecializedVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpecializedVariant").finish_non_exhaustive()
    }
}

/// Whether the compiler for `language` can be invoked.
pub fn toolchain_available(language: Language) -> bool {
    Command::new(language.compiler())
        .arg("--version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

/// Compiles `variant` into an executable at `output`.
pub fn build_variant(variant: &VariantSource, output: &Path) -> Result<PathBuf, CodegenError> {
    let template = variant.template()?;
    let dir = tempfile::tempdir().map_err(|e| CodegenError::Infrastructure(format!("scratch dir: {e}")))?;
    let source = dir.path().join(format!("variant.{}", template.extension));
    variant.write_to(&source).map_err(|e| CodegenError::Infrastructure(format!("writing source: {e}")))?;

    let result = template
        .language
        .build_command(&source, output)
        .output()
        .map_err(|e| CodegenError::Infrastructure(format!("running {}: {e}", template.language.compiler())))?;
    if !result.status.success() {
        return Err(CodegenError::Infrastructure(format!(
            "build failed: {}",
            String::from_utf8_lossy(&result.stderr).trim()
        )));
    }
    Ok(output.to_path_buf())
}

/// Runs a built variant on one message and parses its digest.
pub fn run_variant(executable: &Path, message: &[u8]) -> Result<Digest, CodegenError> {
    let mut child = Command::new(executable)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| CodegenError::Infrastructure(format!("spawning {}: {e}", executable.display())))?;
    {
        let mut stdin = child.stdin.take().expect("piped stdin");
        stdin
            .write_all(message)
            .map_err(|e| CodegenError::Infrastructure(format!("writing to variant: {e}")))?;
    }
    let output = child.wait_with_output().map_err(|e| CodegenError::Infrastructure(format!("waiting: {e}")))?;
    if !output.status.success() {
        return Err(CodegenError::Infrastructure(format!("variant exited with {}", output.status)));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    Digest::from_hex(text.trim())
        .map_err(|e| CodegenError::Infrastructure(format!("variant printed {:?}: {e}", text.trim())))
}

/// Per-message outcome of [`verify_generated`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageCheck {
    pub index: usize,
    pub expected: Digest,
    pub actual: Digest,
}

impl MessageCheck {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerificationReport {
    pub checks: Vec<MessageCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(MessageCheck::passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed()).count()
    }
}

impl fmt::Display for VerificationReport {
    /// One `<index> PASS|FAIL` line per message.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            writeln!(f, "{} {}", check.index, if check.passed() { "PASS" } else { "FAIL" })?;
        }
        Ok(())
    }
}

/// Builds `variant`, runs it on every sample, and compares each output with
/// the parent engine under `genes`.
///
/// Toolchain and build problems come back as
/// [`CodegenError::Infrastructure`]; mismatches are reported per message.
pub fn verify_generated(
    variant: &VariantSource,
    genes: &GeneVector,
    samples: &[Vec<u8>],
) -> Result<VerificationReport, CodegenError> {
    let template = variant.template()?;
    if !toolchain_available(template.language) {
        return Err(CodegenError::Infrastructure(format!("`{}` not found", template.language.compiler())));
    }
    let dir = tempfile::tempdir().map_err(|e| CodegenError::Infrastructure(format!("scratch dir: {e}")))?;
    let exe = build_variant(variant, &dir.path().join("variant"))?;

    let mut report = VerificationReport::default();
    for (index, message) in samples.iter().enumerate() {
        report.checks.push(MessageCheck {
            index,
            expected: engine::digest(genes, message),
            actual: run_variant(&exe, message)?,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::canonical_genes;
    use crate::genome::random_genes;

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn bundled_templates_parse() {
        for id in Template::bundled_ids() {
            Template::bundled(id).unwrap();
        }
        assert!(matches!(Template::bundled("fortran"), Err(CodegenError::UnknownTemplate(_))));
        assert!(matches!(render_variant(&canonical_genes(), "fortran"), Err(CodegenError::UnknownTemplate(_))));
    }

    #[test]
    fn canonical_constant_counts() {
        for id in Template::bundled_ids() {
            let v = render_variant(&canonical_genes(), id).unwrap();
            for k in KOptionId::CONSTANTS {
                assert_eq!(count(&v.source_text, &format_constant(k)), 20, "template {id}");
            }
        }
    }

    #[test]
    fn canonical_rounds_carry_phase_constants() {
        let template = Template::bundled("rust").unwrap();
        let g = canonical_genes();
        for i in 0..20 {
            assert!(template.render_round(i, g.fp[i], g.k[i]).contains("0x5A827999"));
        }
        for i in 60..80 {
            assert!(template.render_round(i, g.fp[i], g.k[i]).contains("0xCA62C1D6"));
        }
        let text = render_variant(&g, "rust").unwrap().source_text;
        assert_eq!(count(&text, "// round "), 80);
    }

    #[test]
    fn all_k3_only_uses_last_constant() {
        let g = GeneVector::uniform(RoundFunctionId::F2, KOptionId::K3);
        let text = render_variant(&g, "rust").unwrap().source_text;
        for k in &KOptionId::CONSTANTS[..3] {
            assert_eq!(count(&text, &format_constant(*k)), 0);
        }
        assert_eq!(count(&text, "0xCA62C1D6"), 80);
    }

    #[test]
    fn rendering_is_deterministic_and_gene_free() {
        let g = random_genes(Some(3));
        let a = render_variant(&g, "rust").unwrap();
        let b = render_variant(&g, "rust").unwrap();
        assert_eq!(a, b);
        let pair = genome::encode(&g);
        assert!(!a.source_text.contains(&pair.fp.to_hex()));
        assert!(!a.source_text.contains(&pair.k.to_hex()));
        assert!(!a.source_text.contains("fp["));
        assert!(!a.source_text.contains(&a.genes_fingerprint.to_hex()));
    }

    #[test]
    fn unrender_inverts_render() {
        for id in Template::bundled_ids() {
            let template = Template::bundled(id).unwrap();
            for seed in 0..8 {
                let g = random_genes(Some(seed));
                let back = unrender(&template, &template.render(&g)).unwrap();
                assert!(engine::functionally_equivalent(&g, &back));
                assert_eq!(back.k, g.k);
            }
        }
    }

    #[test]
    fn unrender_rejects_edits() {
        let template = Template::bundled("rust").unwrap();
        let text = template.render(&canonical_genes());

        let patched = text.replacen("0x5A827999", "0x5A827998", 1);
        assert!(matches!(unrender(&template, &patched), Err(CodegenError::Unrecognized { .. })));

        let truncated = &text[..text.len() - 10];
        assert!(unrender(&template, truncated).is_err());

        let renumbered = text.replacen("// round 7\n", "// round 8\n", 1);
        assert!(unrender(&template, &renumbered).is_err());
    }

    #[test]
    fn specialized_matches_parent() {
        for seed in 0..16 {
            let g = random_genes(Some(seed));
            let from_genes = SpecializedVariant::from_genes(&g);
            let from_source = SpecializedVariant::from_source(&render_variant(&g, "c").unwrap()).unwrap();
            for msg in [&b""[..], b"abc", &[0x5Au8; 200][..]] {
                let expected = engine::digest(&g, msg);
                assert_eq!(from_genes.digest(msg), expected);
                assert_eq!(from_source.digest(msg), expected);
            }
        }
    }

    #[test]
    fn report_rendering() {
        let d = engine::digest(&canonical_genes(), b"");
        let other = engine::digest(&canonical_genes(), b"x");
        let report = VerificationReport {
            checks: vec![
                MessageCheck { index: 0, expected: d, actual: d },
                MessageCheck { index: 1, expected: d, actual: other },
            ],
        };
        assert_eq!(report.to_string(), "0 PASS\n1 FAIL\n");
        assert!(!report.passed());
        assert_eq!(report.failures(), 1);
    }

    #[test]
    fn template_validation() {
        assert!(Template::parse("x", "@@lang cobol\n@@ext x\n").is_err());
        let missing_hole = "@@lang c\n@@ext c\n@@f0 a\n@@f1 a\n@@f2 a\n@@f3 a\n@@round\n{{I}} {{F}}\n@@body\n{{ROUNDS}}\n";
        assert!(matches!(Template::parse("x", missing_hole), Err(CodegenError::BadTemplate { .. })));
    }
}
