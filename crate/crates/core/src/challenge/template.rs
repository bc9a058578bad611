//! Double-brace templating for challenge files.
//!
//! A small subset of Go's text/template syntax:
//!
//! * `{{ .name }}` / `{{ name }}` interpolate a variable from the variables file;
//! * `{{ range $item := .list }} ... {{ end }}` repeats its body per element.
//!   Inside the body `$item` and `.` are the element, `$index` the 1-based
//!   position and `$index0` the 0-based one. `{{ range $i, $item := .list }}`
//!   binds `$i` to the 0-based position as in Go;
//! * `{{ generate_levels .list "lvl2{i}" }}` or `{{ .list | generate_levels "lvl2{i}" }}`
//!   apply a filter; piped values become the last argument;
//! * `{{-` and `-}}` trim whitespace around an action, `{{/* ... */}}` is a comment.
//!
//! Lists render as `['a', 'b']`, which the `next:` grammar accepts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Scalar(String),
    List(Vec<String>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(s) => f.write_str(s),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "'{item}'")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateErrorKind {
    UndefinedVariable(String),
    UnknownFilter(String),
    Malformed(String),
    Filter { name: String, message: String },
    Variables(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct TemplateError {
    /// 1-based line of the offending placeholder; 0 for variables-file errors.
    pub line: usize,
    pub kind: TemplateErrorKind,
}

impl fmt::Display for TemplateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TemplateErrorKind::UndefinedVariable(v) => {
                write!(f, "line {}: undefined variable `{v}`", self.line)
            }
            TemplateErrorKind::UnknownFilter(name) => {
                write!(f, "line {}: unknown filter `{name}`", self.line)
            }
            TemplateErrorKind::Malformed(msg) => write!(f, "line {}: {msg}", self.line),
            TemplateErrorKind::Filter { name, message } => {
                write!(f, "line {}: filter `{name}` failed: {message}", self.line)
            }
            TemplateErrorKind::Variables(msg) => write!(f, "variables file: {msg}"),
        }
    }
}

/// Variable bindings, usually read from a YAML mapping of scalars and flat lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateVariables {
    pub bindings: BTreeMap<String, Value>,
}

impl TemplateVariables {
    pub fn from_yaml(text: &str) -> Result<Self, TemplateError> {
        let err = |msg: String| TemplateError {
            line: 0,
            kind: TemplateErrorKind::Variables(msg),
        };
        let doc: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| err(e.to_string()))?;
        let mapping = match doc {
            serde_yaml::Value::Null => return Ok(Self::default()),
            serde_yaml::Value::Mapping(m) => m,
            _ => return Err(err("top level must be a mapping".into())),
        };
        let mut bindings = BTreeMap::new();
        for (k, v) in mapping {
            let key = scalar_to_string(&k).ok_or_else(|| err("keys must be scalars".into()))?;
            let value = match &v {
                serde_yaml::Value::Sequence(items) => Value::List(
                    items
                        .iter()
                        .map(|i| {
                            scalar_to_string(i)
                                .ok_or_else(|| err(format!("`{key}`: nested values are not supported")))
                        })
                        .collect::<Result<_, _>>()?,
                ),
                other => Value::Scalar(
                    scalar_to_string(other)
                        .ok_or_else(|| err(format!("`{key}`: nested values are not supported")))?,
                ),
            };
            bindings.insert(key, value);
        }
        Ok(Self { bindings })
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.bindings.insert(name.into(), value);
    }
}

fn scalar_to_string(v: &serde_yaml::Value) -> Option<String> {
    match v {
        serde_yaml::Value::Null => Some(String::new()),
        serde_yaml::Value::Bool(b) => Some(b.to_string()),
        serde_yaml::Value::Number(n) => Some(n.to_string()),
        serde_yaml::Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("generate_levels needs a non-empty list")]
    EmptyItems,
    #[error("name format `{0}` must contain exactly one `{{i}}` or `{{v}}` slot")]
    BadFormat(String),
}

/// Expands `name_format` once per item. `{i}` is replaced by the 1-based
/// position, `{v}` by the item itself.
pub fn generate_levels<S: AsRef<str>>(items: &[S], name_format: &str) -> Result<Vec<String>, GenerateError> {
    if items.is_empty() {
        return Err(GenerateError::EmptyItems);
    }
    let slots = name_format.matches("{i}").count() + name_format.matches("{v}").count();
    if slots != 1 {
        return Err(GenerateError::BadFormat(name_format.to_string()));
    }
    Ok(items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            name_format
                .replace("{i}", &(i + 1).to_string())
                .replace("{v}", item.as_ref())
        })
        .collect())
}

pub type Filter = Arc<dyn Fn(&[Value]) -> Result<Value, String> + Send + Sync>;

/// Named filters available to templates.
#[derive(Clone)]
pub struct FilterRegistry {
    filters: HashMap<String, Filter>,
}

impl fmt::Debug for FilterRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.filters.keys().collect();
        names.sort();
        f.debug_struct("FilterRegistry").field("filters", &names).finish()
    }
}

impl Default for FilterRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("generate_levels", |args: &[Value]| {
            // Accept (list, format) as well as the piped (format, list) order.
            let (items, format) = match args {
                [Value::List(items), Value::Scalar(fmt)] | [Value::Scalar(fmt), Value::List(items)] => {
                    (items, fmt)
                }
                _ => return Err("expected a list and a name format".into()),
            };
            generate_levels(items, format)
                .map(Value::List)
                .map_err(|e| e.to_string())
        });
        reg
    }
}

impl FilterRegistry {
    pub fn empty() -> Self {
        Self {
            filters: HashMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, filter: F)
    where
        F: Fn(&[Value]) -> Result<Value, String> + Send + Sync + 'static,
    {
        self.filters.insert(name.to_string(), Arc::new(filter));
    }

    pub fn get(&self, name: &str) -> Option<&Filter> {
        self.filters.get(name)
    }
}

/// Expands a template with the default filter set.
pub fn expand_template(template: &str, vars: &TemplateVariables) -> Result<String, TemplateError> {
    expand_with(template, vars, &FilterRegistry::default())
}

pub fn expand_with(
    template: &str,
    vars: &TemplateVariables,
    filters: &FilterRegistry,
) -> Result<String, TemplateError> {
    let tokens = lex(template)?;
    let mut pos = 0;
    let nodes = parse_nodes(&tokens, &mut pos, false)?;
    let mut out = String::with_capacity(template.len());
    let ctx = Context { vars, filters };
    ctx.render(&nodes, &mut Vec::new(), None, &mut out)?;
    Ok(out)
}

// ---- lexing ----

#[derive(Debug)]
enum Token {
    Text(String),
    Action { body: String, line: usize },
}

fn malformed(line: usize, msg: impl Into<String>) -> TemplateError {
    TemplateError {
        line,
        kind: TemplateErrorKind::Malformed(msg.into()),
    }
}

fn lex(src: &str) -> Result<Vec<Token>, TemplateError> {
    let mut tokens = Vec::new();
    let mut rest = src;
    let mut line = 1;
    let mut trim_next = false;
    loop {
        let Some(open) = rest.find("{{") else {
            let mut text = rest.to_string();
            if trim_next {
                text = text.trim_start().to_string();
            }
            if let Some(close) = text.find("}}") {
                let l = line + text[..close].matches('\n').count();
                return Err(malformed(l, "`}}` without matching `{{`"));
            }
            tokens.push(Token::Text(text));
            break;
        };
        let mut text = rest[..open].to_string();
        if let Some(close) = text.find("}}") {
            let l = line + text[..close].matches('\n').count();
            return Err(malformed(l, "`}}` without matching `{{`"));
        }
        line += text.matches('\n').count();
        if trim_next {
            text = text.trim_start().to_string();
        }
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            return Err(malformed(line, "unclosed `{{`"));
        };
        let mut inner = &after[..close];
        if inner.contains("{{") {
            return Err(malformed(line, "nested `{{` inside a placeholder"));
        }
        let trim_left = inner.starts_with("- ") || inner.starts_with("-\n") || inner == "-";
        if trim_left {
            inner = &inner[1..];
            text = text.trim_end().to_string();
        }
        trim_next = inner.ends_with(" -") || inner.ends_with("\n-");
        if trim_next {
            inner = &inner[..inner.len() - 1];
        }
        tokens.push(Token::Text(text));
        tokens.push(Token::Action {
            body: inner.trim().to_string(),
            line,
        });
        line += inner.matches('\n').count();
        rest = &after[close + 2..];
    }
    Ok(tokens)
}

// ---- parsing ----

#[derive(Debug, Clone)]
enum Arg {
    Field(String),
    Dot,
    Var(String),
    Ident(String),
    Literal(String),
}

type Command = Vec<Arg>;

#[derive(Debug)]
enum Node {
    Text(String),
    Output { pipeline: Vec<Command>, line: usize },
    Range {
        index_var: Option<String>,
        elem_var: Option<String>,
        pipeline: Vec<Command>,
        body: Vec<Node>,
        line: usize,
    },
}

fn parse_nodes(tokens: &[Token], pos: &mut usize, in_range: bool) -> Result<Vec<Node>, TemplateError> {
    let mut nodes = Vec::new();
    while *pos < tokens.len() {
        let token = &tokens[*pos];
        *pos += 1;
        match token {
            Token::Text(t) => {
                if !t.is_empty() {
                    nodes.push(Node::Text(t.clone()));
                }
            }
            Token::Action { body, line } => {
                let line = *line;
                if body.starts_with("/*") {
                    if !body.ends_with("*/") {
                        return Err(malformed(line, "unterminated comment"));
                    }
                    continue;
                }
                let keyword = body.split_whitespace().next().unwrap_or("");
                match keyword {
                    "" => return Err(malformed(line, "empty placeholder")),
                    "end" if body == "end" => {
                        if in_range {
                            return Ok(nodes);
                        }
                        return Err(malformed(line, "`end` without `range`"));
                    }
                    "range" => {
                        let header = body["range".len()..].trim();
                        let (index_var, elem_var, pipe_src) = parse_range_header(header, line)?;
                        let pipeline = parse_pipeline(pipe_src, line)?;
                        let body = parse_nodes(tokens, pos, true)?;
                        nodes.push(Node::Range {
                            index_var,
                            elem_var,
                            pipeline,
                            body,
                            line,
                        });
                    }
                    "if" | "else" | "with" | "define" | "template" | "block" => {
                        return Err(malformed(line, format!("`{keyword}` is not supported")));
                    }
                    _ => nodes.push(Node::Output {
                        pipeline: parse_pipeline(body, line)?,
                        line,
                    }),
                }
            }
        }
    }
    if in_range {
        return Err(malformed(
            tokens
                .iter()
                .rev()
                .find_map(|t| match t {
                    Token::Action { line, .. } => Some(*line),
                    _ => None,
                })
                .unwrap_or(1),
            "`range` without matching `end`",
        ));
    }
    Ok(nodes)
}

type RangeHeader<'a> = (Option<String>, Option<String>, &'a str);

fn parse_range_header(header: &str, line: usize) -> Result<RangeHeader<'_>, TemplateError> {
    let Some(assign) = header.find(":=") else {
        return Ok((None, None, header));
    };
    let vars: Vec<&str> = header[..assign].split(',').map(str::trim).collect();
    let pipe = header[assign + 2..].trim();
    let var_name = |v: &str| -> Result<String, TemplateError> {
        match v.strip_prefix('$') {
            Some(n) if !n.is_empty() && n.chars().all(|c| c.is_alphanumeric() || c == '_') => Ok(n.to_string()),
            _ => Err(malformed(line, format!("bad range variable `{v}`"))),
        }
    };
    match vars.as_slice() {
        [elem] => Ok((None, Some(var_name(elem)?), pipe)),
        [idx, elem] => Ok((Some(var_name(idx)?), Some(var_name(elem)?), pipe)),
        _ => Err(malformed(line, "range declares too many variables")),
    }
}

fn parse_pipeline(src: &str, line: usize) -> Result<Vec<Command>, TemplateError> {
    let mut commands: Vec<Command> = vec![Vec::new()];
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '|' {
            if commands.last().unwrap().is_empty() {
                return Err(malformed(line, "empty command in pipeline"));
            }
            commands.push(Vec::new());
            i += 1;
            continue;
        }
        if c == '"' || c == '`' || c == '\'' {
            let mut lit = String::new();
            i += 1;
            let mut closed = false;
            while i < chars.len() {
                let d = chars[i];
                if d == c {
                    closed = true;
                    i += 1;
                    break;
                }
                if d == '\\' && c == '"' && i + 1 < chars.len() {
                    i += 1;
                    lit.push(match chars[i] {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                } else {
                    lit.push(d);
                }
                i += 1;
            }
            if !closed {
                return Err(malformed(line, "unterminated string literal"));
            }
            commands.last_mut().unwrap().push(Arg::Literal(lit));
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '|' {
            i += 1;
        }
        let word: String = chars[start..i].iter().collect();
        let ident_ok = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_');
        let arg = if word == "." {
            Arg::Dot
        } else if let Some(field) = word.strip_prefix('.') {
            if !ident_ok(field) {
                return Err(malformed(line, format!("bad field reference `{word}`")));
            }
            Arg::Field(field.to_string())
        } else if let Some(var) = word.strip_prefix('$') {
            if !ident_ok(var) {
                return Err(malformed(line, format!("bad variable `{word}`")));
            }
            Arg::Var(var.to_string())
        } else if word.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-') {
            if word.parse::<f64>().is_err() {
                return Err(malformed(line, format!("bad number `{word}`")));
            }
            Arg::Literal(word)
        } else if ident_ok(&word) {
            Arg::Ident(word)
        } else {
            return Err(malformed(line, format!("unexpected `{word}`")));
        };
        commands.last_mut().unwrap().push(arg);
    }
    if commands.last().unwrap().is_empty() {
        return Err(malformed(line, "empty command in pipeline"));
    }
    Ok(commands)
}

// ---- evaluation ----

struct Context<'a> {
    vars: &'a TemplateVariables,
    filters: &'a FilterRegistry,
}

type Scope = Vec<HashMap<String, Value>>;

impl Context<'_> {
    fn render(
        &self,
        nodes: &[Node],
        scope: &mut Scope,
        dot: Option<&Value>,
        out: &mut String,
    ) -> Result<(), TemplateError> {
        for node in nodes {
            match node {
                Node::Text(t) => out.push_str(t),
                Node::Output { pipeline, line } => {
                    let v = self.eval_pipeline(pipeline, scope, dot, *line)?;
                    out.push_str(&v.to_string());
                }
                Node::Range {
                    index_var,
                    elem_var,
                    pipeline,
                    body,
                    line,
                } => {
                    let items = match self.eval_pipeline(pipeline, scope, dot, *line)? {
                        Value::List(items) => items,
                        Value::Scalar(_) => return Err(malformed(*line, "range needs a list")),
                    };
                    for (i, item) in items.iter().enumerate() {
                        let elem = Value::Scalar(item.clone());
                        let mut frame = HashMap::new();
                        frame.insert("index".to_string(), Value::Scalar((i + 1).to_string()));
                        frame.insert("index0".to_string(), Value::Scalar(i.to_string()));
                        if let Some(iv) = index_var {
                            frame.insert(iv.clone(), Value::Scalar(i.to_string()));
                        }
                        if let Some(ev) = elem_var {
                            frame.insert(ev.clone(), elem.clone());
                        }
                        scope.push(frame);
                        let result = self.render(body, scope, Some(&elem), out);
                        scope.pop();
                        result?;
                    }
                }
            }
        }
        Ok(())
    }

    fn eval_pipeline(
        &self,
        pipeline: &[Command],
        scope: &Scope,
        dot: Option<&Value>,
        line: usize,
    ) -> Result<Value, TemplateError> {
        let mut piped: Option<Value> = None;
        for cmd in pipeline {
            piped = Some(self.eval_command(cmd, piped, scope, dot, line)?);
        }
        Ok(piped.expect("pipelines are never empty"))
    }

    fn eval_command(
        &self,
        cmd: &Command,
        piped: Option<Value>,
        scope: &Scope,
        dot: Option<&Value>,
        line: usize,
    ) -> Result<Value, TemplateError> {
        if let Arg::Ident(name) = &cmd[0] {
            if let Some(filter) = self.filters.get(name) {
                let mut args = cmd[1..]
                    .iter()
                    .map(|a| self.eval_arg(a, scope, dot, line))
                    .collect::<Result<Vec<_>, _>>()?;
                args.extend(piped);
                return filter(&args).map_err(|message| TemplateError {
                    line,
                    kind: TemplateErrorKind::Filter {
                        name: name.clone(),
                        message,
                    },
                });
            }
            if cmd.len() > 1 || piped.is_some() {
                return Err(TemplateError {
                    line,
                    kind: TemplateErrorKind::UnknownFilter(name.clone()),
                });
            }
        }
        if cmd.len() > 1 || piped.is_some() {
            return Err(malformed(line, "only filters take arguments"));
        }
        self.eval_arg(&cmd[0], scope, dot, line)
    }

    fn eval_arg(&self, arg: &Arg, scope: &Scope, dot: Option<&Value>, line: usize) -> Result<Value, TemplateError> {
        let undefined = |name: String| TemplateError {
            line,
            kind: TemplateErrorKind::UndefinedVariable(name),
        };
        match arg {
            Arg::Literal(s) => Ok(Value::Scalar(s.clone())),
            Arg::Dot => dot
                .cloned()
                .ok_or_else(|| malformed(line, "`.` is only meaningful inside range")),
            Arg::Field(name) | Arg::Ident(name) => self
                .vars
                .bindings
                .get(name)
                .cloned()
                .ok_or_else(|| undefined(name.clone())),
            Arg::Var(name) => scope
                .iter()
                .rev()
                .find_map(|frame| frame.get(name))
                .cloned()
                .ok_or_else(|| undefined(format!("${name}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::challenge::parse_challenge;

    const TEMPLATE: &str = include_str!("../../assets/sample_challenge_template.tpl");
    const VARS: &str = include_str!("../../assets/template_variables.yaml");

    #[test]
    fn generate_levels_examples() {
        assert_eq!(
            generate_levels(&["a", "b", "c"], "lvl2{i}").unwrap(),
            ["lvl21", "lvl22", "lvl23"]
        );
        assert_eq!(generate_levels(&["q"], "x{i}").unwrap(), ["x1"]);
        assert_eq!(
            generate_levels(&["a", "b", "c", "d"], "node-{i}").unwrap(),
            ["node-1", "node-2", "node-3", "node-4"]
        );
        assert_eq!(generate_levels(&["tmp", "var"], "go-{v}").unwrap(), ["go-tmp", "go-var"]);
        assert_eq!(generate_levels::<&str>(&[], "x{i}"), Err(GenerateError::EmptyItems));
        assert!(matches!(generate_levels(&["a"], "plain"), Err(GenerateError::BadFormat(_))));
        assert!(matches!(generate_levels(&["a"], "{i}{v}"), Err(GenerateError::BadFormat(_))));
    }

    #[test]
    fn filter_renders_python_style_list() {
        let vars = TemplateVariables::from_yaml(VARS).unwrap();
        let out = expand_template("next: {{ generate_levels .folders \"lvl2{i}\" }}", &vars).unwrap();
        assert_eq!(out, "next: ['lvl21', 'lvl22', 'lvl23']");
        let piped = expand_template("{{ .folders | generate_levels \"lvl2{i}\" }}", &vars).unwrap();
        assert_eq!(piped, "['lvl21', 'lvl22', 'lvl23']");
    }

    #[test]
    fn sample_template_has_three_lvl2_variants() {
        let vars = TemplateVariables::from_yaml(VARS).unwrap();
        let text = expand_template(TEMPLATE, &vars).unwrap();
        let spec = parse_challenge("templated", &text).unwrap();
        let lvl2: Vec<_> = spec
            .levels()
            .iter()
            .filter(|l| l.name.starts_with("lvl2"))
            .map(|l| l.name.as_str())
            .collect();
        assert_eq!(lvl2, ["lvl21", "lvl22", "lvl23"]);
        assert_eq!(spec.entry_level().next, ["lvl21", "lvl22", "lvl23"]);
        let folders = ["/var", "/usr", "/etc"];
        for (name, folder) in lvl2.iter().zip(folders) {
            let level = spec.level(name).unwrap();
            assert!(level.test.contains(folder), "{}", level.test);
            assert!(level.body.contains(folder));
        }
    }

    #[test]
    fn identity_without_placeholders() {
        let src = "name: a\ntest: true\n\nplain { braces } here\n";
        assert_eq!(expand_template(src, &TemplateVariables::default()).unwrap(), src);
    }

    #[test]
    fn undefined_variable() {
        let err = expand_template("x\n{{ missing }}", &TemplateVariables::default()).unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, TemplateErrorKind::UndefinedVariable("missing".into()));
        let err = expand_template("{{ $nope }}", &TemplateVariables::default()).unwrap_err();
        assert_eq!(err.kind, TemplateErrorKind::UndefinedVariable("$nope".into()));
    }

    #[test]
    fn unknown_filter() {
        let mut vars = TemplateVariables::default();
        vars.insert("x", Value::Scalar("1".into()));
        let err = expand_template("{{ .x | shout }}", &vars).unwrap_err();
        assert_eq!(err.kind, TemplateErrorKind::UnknownFilter("shout".into()));
        let err = expand_template("{{ shout .x }}", &vars).unwrap_err();
        assert_eq!(err.kind, TemplateErrorKind::UnknownFilter("shout".into()));
    }

    #[test]
    fn malformed_placeholders() {
        let vars = TemplateVariables::default();
        for src in ["{{ .x", "a }} b", "{{ }}", "{{ range .x }}no end", "{{ end }}", "{{ if .x }}{{ end }}", "{{ \"open }}"] {
            let err = expand_template(src, &vars).unwrap_err();
            assert!(matches!(err.kind, TemplateErrorKind::Malformed(_)), "{src}: {err:?}");
        }
    }

    #[test]
    fn range_bindings_and_trim() {
        let mut vars = TemplateVariables::default();
        vars.insert("xs", Value::List(vec!["a".into(), "b".into()]));
        let out = expand_template(
            "{{- range $i, $x := .xs }}\n{{ $i }}{{ $index }}{{ $x }}{{ . }}\n{{- end }}",
            &vars,
        )
        .unwrap();
        assert_eq!(out, "\n01aa\n12bb");
    }

    #[test]
    fn custom_filter_registration() {
        let mut filters = FilterRegistry::default();
        filters.register("upper", |args: &[Value]| match args {
            [Value::Scalar(s)] => Ok(Value::Scalar(s.to_uppercase())),
            _ => Err("one scalar".into()),
        });
        let mut vars = TemplateVariables::default();
        vars.insert("x", Value::Scalar("hi".into()));
        assert_eq!(expand_with("{{ .x | upper }}", &vars, &filters).unwrap(), "HI");
        let err = expand_with("{{ upper .x .x }}", &vars, &filters).unwrap_err();
        assert!(matches!(err.kind, TemplateErrorKind::Filter { .. }));
    }

    #[test]
    fn variables_file_shapes() {
        let vars = TemplateVariables::from_yaml("a: 1\nb: [x, 2]\nc: true\n").unwrap();
        assert_eq!(vars.bindings["a"], Value::Scalar("1".into()));
        assert_eq!(vars.bindings["b"], Value::List(vec!["x".into(), "2".into()]));
        assert!(TemplateVariables::from_yaml("a: {b: 1}").is_err());
        assert!(TemplateVariables::from_yaml("- a").is_err());
    }
}
