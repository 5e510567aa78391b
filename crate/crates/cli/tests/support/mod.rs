#![allow(dead_code)]

use std::path::{Path, PathBuf};

use persona_survey_cli::run;

pub fn mini(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/mini").join(file)
}

pub fn cli(args: &[&str]) -> i32 {
    let argv: Vec<&str> = std::iter::once("persona-survey").chain(args.iter().copied()).collect();
    run(argv)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Files written by one pipeline run.
pub struct Run {
    pub dataset: PathBuf,
    pub generations: Vec<PathBuf>,
    pub eval: PathBuf,
    pub report: PathBuf,
}

/// build-dataset, generate (two models), evaluate and report into `dir`.
pub fn pipeline(dir: &Path, endpoint: &str) -> Run {
    let dataset = dir.join("dataset.jsonl");
    let code = cli(&[
        "build-dataset",
        "--personas",
        s(&mini("personas.jsonl")),
        "--responses",
        s(&mini("responses.jsonl")),
        "--out",
        s(&dataset),
    ]);
    assert_eq!(code, 0, "build-dataset");
    let mut generations = Vec::new();
    for model in ["mock-alpha", "mock-beta"] {
        let out = dir.join(format!("{model}.gen.jsonl"));
        let code = cli(&[
            "generate",
            "--in",
            s(&dataset),
            "--endpoint",
            endpoint,
            "--model",
            model,
            "--max-in-flight",
            "4",
            "--seed",
            "3",
            "--out",
            s(&out),
        ]);
        assert_eq!(code, 0, "generate {model}");
        generations.push(out);
    }
    let eval = dir.join("eval.jsonl");
    let mut args = vec!["evaluate", "--in", s(&dataset), "--out", s(&eval)];
    for g in &generations {
        args.extend(["--generations", s(g)]);
    }
    assert_eq!(cli(&args), 0, "evaluate");
    let report = dir.join("report.md");
    let code = cli(&["report", "--in", s(&eval), "--group", "model,domain", "--out", s(&report)]);
    assert_eq!(code, 0, "report");
    Run { dataset, generations, eval, report }
}

/// Checks every metric cell in a markdown report holds a number.
pub fn all_cells_numeric(report: &str) -> Result<usize, String> {
    let mut rows = 0;
    for line in report.lines().skip(2).filter(|l| l.starts_with('|')) {
        let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
        if cells.len() != 12 {
            return Err(format!("expected 12 cells: {line}"));
        }
        for c in &cells[3..] {
            c.parse::<f64>().map_err(|_| format!("non-numeric cell `{c}` in {line}"))?;
        }
        rows += 1;
    }
    Ok(rows)
}
