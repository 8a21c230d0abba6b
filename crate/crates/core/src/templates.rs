//! Prompt templates.
//!
//! Every prompt the crate sends is rendered from a plain-text template with
//! `{name}` placeholders. Defaults are compiled in from `assets/templates/`;
//! a directory holding files of the same names overrides them one by one.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

/// Version tag of the compiled-in template set. Bumped whenever any default
/// template text changes.
pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub verify: String,
    pub refine_sentence: String,
    pub refine_full: String,
    pub falsify: String,
    pub paraphrase: String,
    pub generate_closed: String,
    pub generate_open: String,
    pub generate_fewshot: String,
    pub continuation: String,
}

fn asset(text: &str) -> String {
    text.trim_end_matches(['\n', '\r']).to_string()
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            verify: asset(include_str!("../assets/templates/verify.v1.txt")),
            refine_sentence: asset(include_str!("../assets/templates/refine_sentence.v1.txt")),
            refine_full: asset(include_str!("../assets/templates/refine_full.v1.txt")),
            falsify: asset(include_str!("../assets/templates/falsify.v1.txt")),
            paraphrase: asset(include_str!("../assets/templates/paraphrase.v1.txt")),
            generate_closed: asset(include_str!("../assets/templates/generate_closed.v1.txt")),
            generate_open: asset(include_str!("../assets/templates/generate_open.v1.txt")),
            generate_fewshot: asset(include_str!("../assets/templates/generate_fewshot.v1.txt")),
            continuation: asset(include_str!("../assets/templates/continue.v1.txt")),
        }
    }
}

impl Templates {
    /// Loads the defaults, then replaces each template for which
    /// `<dir>/<name>.v1.txt` exists.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut templates = Self::default();
        let slots: [(&str, &mut String); 9] = [
            ("verify", &mut templates.verify),
            ("refine_sentence", &mut templates.refine_sentence),
            ("refine_full", &mut templates.refine_full),
            ("falsify", &mut templates.falsify),
            ("paraphrase", &mut templates.paraphrase),
            ("generate_closed", &mut templates.generate_closed),
            ("generate_open", &mut templates.generate_open),
            ("generate_fewshot", &mut templates.generate_fewshot),
            ("continue", &mut templates.continuation),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.{TEMPLATE_VERSION}.txt"));
            match fs::read_to_string(&path) {
                Ok(text) => *slot = asset(&text),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(templates)
    }
}

/// Substitutes `{name}` placeholders in a single pass.
///
/// Substituted values are never rescanned, so a value that itself contains
/// `{name}` is inserted literally. Unknown placeholders are left untouched.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let lookup: BTreeMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                let name = &after[..close];
                match lookup.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_single_pass() {
        let out = render("Q: {question}\nS: {sentence}", &[("question", "{sentence}"), ("sentence", "s")]);
        assert_eq!(out, "Q: {sentence}\nS: s");
    }

    #[test]
    fn render_keeps_unknown_and_stray_braces() {
        assert_eq!(render("{a} {b} {", &[("a", "1")]), "1 {b} {");
        assert_eq!(render("set {x y}", &[]), "set {x y}");
    }

    #[test]
    fn falsify_template_layout() {
        let t = Templates::default();
        let out = render(&t.falsify, &[("question", "q"), ("answer", "a"), ("sentence", "s")]);
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines.contains(&"Q: q"));
        assert!(lines.contains(&"A: a"));
        assert!(lines.contains(&"S: s"));
        assert!(out.ends_with("Just return only the modified sentence (S) itself."));
    }

    #[test]
    fn load_dir_overrides_present_files_only() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("verify.v1.txt"), "custom {input}\n").unwrap();
        let t = Templates::load_dir(dir.path()).unwrap();
        assert_eq!(t.verify, "custom {input}");
        assert_eq!(t.falsify, Templates::default().falsify);
    }
}
