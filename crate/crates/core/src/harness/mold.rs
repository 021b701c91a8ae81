//! Code molds: script and launcher templates with `#P<k>` placeholders,
//! where `k` is the parameter's position in the space.

use thiserror::Error;

use crate::space::{Configuration, ParameterSpace, Violation};

#[derive(Debug, Error, PartialEq)]
pub enum MoldError {
    #[error("placeholder `{0}` does not name a parameter in the space")]
    UnknownPlaceholder(String),
    #[error("placeholder `{0}` survived rendering")]
    Unresolved(String),
    #[error("configuration is invalid: {0}")]
    InvalidConfiguration(#[from] Violation),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CodeMold {
    pub template_text: String,
    pub launcher_template: String,
    /// Program the launcher arguments are meant for (e.g. `srun`); only
    /// used when printing the launch line.
    pub launcher_program: String,
    /// Optional build step run in the evaluation directory before the script.
    pub pre_command: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedMold {
    pub script_text: String,
    pub launcher_args: String,
    pub pre_command: Option<String>,
}

impl CodeMold {
    /// The OpenMC run script and srun options.
    pub fn openmc() -> Self {
        CodeMold {
            template_text: OPENMC_SCRIPT.to_string(),
            launcher_template: "-c #P4 --ntasks-per-gpu=#P5 --cpu-bind=#P6".to_string(),
            launcher_program: "srun".to_string(),
            pre_command: None,
        }
    }

    /// Checks that every placeholder in every template names a parameter.
    pub fn check(&self, space: &ParameterSpace) -> Result<(), MoldError> {
        for text in self.texts() {
            scan(text, space.len(), |_, _| {})?;
        }
        Ok(())
    }

    fn texts(&self) -> impl Iterator<Item = &str> {
        [self.template_text.as_str(), self.launcher_template.as_str()]
            .into_iter()
            .chain(self.pre_command.as_deref())
    }

    pub fn render(&self, space: &ParameterSpace, cfg: &Configuration) -> Result<RenderedMold, MoldError> {
        space.validate(cfg)?;
        Ok(RenderedMold {
            script_text: render_template(&self.template_text, space, cfg)?,
            launcher_args: render_template(&self.launcher_template, space, cfg)?,
            pre_command: self
                .pre_command
                .as_deref()
                .map(|t| render_template(t, space, cfg))
                .transpose()?,
        })
    }

    /// The full launcher line, as it would be submitted on a cluster.
    pub fn launch_line(&self, rendered: &RenderedMold, script_path: &str) -> String {
        [self.launcher_program.as_str(), rendered.launcher_args.as_str(), script_path]
            .iter()
            .filter(|s| !s.is_empty())
            .copied()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

const OPENMC_SCRIPT: &str = r##"#!/bin/bash
pp0="#P0"
pp="openmc"
if [ "$pp0" = "$pp" ]
then
        openmc  --event -i #P1 -b #P2 -m #P3
else
        openmc-queueless --event -i #P1 -b #P2
fi
"##;

/// Replaces every `#P<k>` in `text` by the rendering of parameter `k`
/// (`nan` when inactive). Digits are matched greedily against the parameter
/// count, so `#P10` is parameter 10 whenever the space has one.
pub fn render_template(
    text: &str,
    space: &ParameterSpace,
    cfg: &Configuration,
) -> Result<String, MoldError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    scan(text, space.len(), |range, index| {
        out.push_str(&text[last..range.start]);
        out.push_str(&space.render_value(index, cfg));
        last = range.end;
    })?;
    out.push_str(&text[last..]);
    if let Some(left) = find_placeholder(&out) {
        return Err(MoldError::Unresolved(left));
    }
    Ok(out)
}

/// Parameter indices referenced by `text`, in order of appearance.
pub fn placeholders(text: &str, n_params: usize) -> Result<Vec<usize>, MoldError> {
    let mut found = Vec::new();
    scan(text, n_params, |_, i| found.push(i))?;
    Ok(found)
}

fn scan(
    text: &str,
    n_params: usize,
    mut on_match: impl FnMut(std::ops::Range<usize>, usize),
) -> Result<(), MoldError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(off) = text[i..].find("#P") {
        let start = i + off;
        let digits_start = start + 2;
        let digits_end = bytes[digits_start..]
            .iter()
            .position(|b| !b.is_ascii_digit())
            .map_or(bytes.len(), |p| digits_start + p);
        if digits_end == digits_start {
            i = digits_start;
            continue;
        }
        // Longest canonical decimal prefix naming an existing parameter.
        let resolved = (digits_start + 1..=digits_end).rev().find_map(|end| {
            let digits = &text[digits_start..end];
            if digits.len() > 1 && digits.starts_with('0') {
                return None;
            }
            digits
                .parse::<usize>()
                .ok()
                .filter(|&k| k < n_params)
                .map(|k| (end, k))
        });
        match resolved {
            Some((end, k)) => {
                on_match(start..end, k);
                i = end;
            }
            None => {
                return Err(MoldError::UnknownPlaceholder(
                    text[start..digits_end].to_string(),
                ))
            }
        }
    }
    Ok(())
}

fn find_placeholder(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    text.match_indices("#P").find_map(|(at, _)| {
        let rest = &bytes[at + 2..];
        let n = rest.iter().take_while(|b| b.is_ascii_digit()).count();
        (n > 0).then(|| text[at..at + 2 + n].to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParameterSpec, Value};
    use crate::synthbench::openmc_space;

    #[test]
    fn openmc_defaults_render() {
        let space = openmc_space();
        let cfg = space.default_configuration();
        let out = render_template("openmc --event -i #P1 -b #P2 -m #P3", &space, &cfg).unwrap();
        assert_eq!(out, "openmc --event -i 1000000 -b 4000 -m 20000");
        let rendered = CodeMold::openmc().render(&space, &cfg).unwrap();
        assert_eq!(rendered.launcher_args, "-c 8 --ntasks-per-gpu=1 --cpu-bind=threads");
        assert!(rendered.script_text.contains("pp0=\"openmc\""));
        assert!(rendered
            .script_text
            .contains("openmc  --event -i 1000000 -b 4000 -m 20000"));
    }

    #[test]
    fn inactive_renders_nan() {
        let space = openmc_space();
        let mut values = space.default_configuration().values().to_vec();
        values[0] = Some(Value::Choice(1));
        values[3] = None;
        let cfg = Configuration::new(values);
        let out = render_template("-m #P3 mode=#P0", &space, &cfg).unwrap();
        assert_eq!(out, "-m nan mode=openmc-queueless");
    }

    #[test]
    fn identity_without_placeholders() {
        let space = openmc_space();
        let cfg = space.default_configuration();
        let text = "echo hello # Plain comment #P";
        assert_eq!(render_template(text, &space, &cfg).unwrap(), text);
    }

    #[test]
    fn two_digit_indices_are_not_split() {
        let params = (0..12)
            .map(|i| ParameterSpec::uniform_int(&format!("x{i}"), 0, 100, 1, i).unwrap())
            .collect();
        let space = ParameterSpace::new(params, vec![]).unwrap();
        let cfg = space.default_configuration();
        let out = render_template("#P1,#P10,#P11,#P1x", &space, &cfg).unwrap();
        assert_eq!(out, "1,10,11,1x");
        // With fewer parameters, the longest existing index wins.
        let small = openmc_space();
        let out = render_template("#P10", &small, &small.default_configuration()).unwrap();
        assert_eq!(out, "10000000");
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        let space = openmc_space();
        let cfg = space.default_configuration();
        assert_eq!(
            render_template("-x #P9", &space, &cfg),
            Err(MoldError::UnknownPlaceholder("#P9".into()))
        );
        let mold = CodeMold {
            launcher_template: "-c #P77".into(),
            ..CodeMold::openmc()
        };
        assert!(mold.check(&space).is_err());
        assert!(CodeMold::openmc().check(&space).is_ok());
    }

    #[test]
    fn placeholder_introduced_by_a_value_is_unresolved() {
        let p = ParameterSpec::categorical("c", &["#P0"], "#P0").unwrap();
        let space = ParameterSpace::new(vec![p], vec![]).unwrap();
        let cfg = space.default_configuration();
        assert_eq!(
            render_template("#P0", &space, &cfg),
            Err(MoldError::Unresolved("#P0".into()))
        );
    }

    #[test]
    fn launch_line_joins_parts() {
        let space = openmc_space();
        let mold = CodeMold::openmc();
        let r = mold.render(&space, &space.default_configuration()).unwrap();
        assert_eq!(
            mold.launch_line(&r, "evals/0/script"),
            "srun -c 8 --ntasks-per-gpu=1 --cpu-bind=threads evals/0/script"
        );
    }

    #[test]
    fn placeholders_listed_in_order() {
        assert_eq!(placeholders("#P2 #P0 #P2", 3).unwrap(), vec![2, 0, 2]);
    }
}
