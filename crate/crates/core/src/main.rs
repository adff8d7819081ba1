use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use capstr::charset::Alphabet;
use capstr::oracle;
use capstr::smtlib::{parse_script, ExecError, Options, Session};
use clap::Parser;

/// Solve string constraints with capture groups, lazy quantifiers and
/// replace/replaceAll, given as an SMT-LIB script.
#[derive(Parser, Debug)]
#[command(name = "capstr", version)]
struct Cli {
    /// Script to run; reads stdin when omitted or "-".
    input: Option<PathBuf>,

    /// Character universe: `ascii`, `byte`, or a file whose characters
    /// (line breaks excluded) form the alphabet.
    #[arg(long, default_value = "ascii")]
    alphabet: String,

    /// Print the proof tree after each check-sat, as `;` comments.
    #[arg(long)]
    dump_proof: bool,

    /// Print the model after each satisfiable check-sat.
    #[arg(long)]
    dump_model: bool,

    /// Per check-sat time budget in milliseconds.
    #[arg(long, value_name = "N")]
    timeout_ms: Option<u64>,

    /// Write a JavaScript validation corpus (manifest.json and one
    /// program per case) into this directory, then exit.
    #[arg(long, value_name = "PATH")]
    oracle_dir: Option<PathBuf>,

    /// Seed for the generated oracle inputs.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn alphabet(spec: &str) -> anyhow::Result<Alphabet> {
    Ok(match spec {
        "ascii" => Alphabet::ascii(),
        "byte" | "bytes" => Alphabet::bytes(),
        path => {
            let text = std::fs::read_to_string(path)?;
            let chars: String = text.chars().filter(|c| *c != '\n' && *c != '\r').collect();
            anyhow::ensure!(!chars.is_empty(), "alphabet file {path} is empty");
            Alphabet::from_str_chars(&chars)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(&cli, &mut io::stdin(), &mut io::stdout().lock(), &mut io::stderr());
    ExitCode::from(code)
}

/// Exit code 0 on a clean run, 1 on a solver error, 2 on a parse error.
fn run(cli: &Cli, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    if let Some(dir) = &cli.oracle_dir {
        let m = oracle::manifest(cli.seed);
        return match oracle::write_dir(dir, &m) {
            Ok(path) => {
                let _ = writeln!(out, "wrote {} cases to {}", m.cases.len(), path.display());
                0
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                1
            }
        };
    }

    let sigma = match alphabet(&cli.alphabet) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: alphabet: {e}");
            return 2;
        }
    };

    let (name, text) = match &cli.input {
        Some(p) if p.as_os_str() != "-" => match std::fs::read_to_string(p) {
            Ok(t) => (p.display().to_string(), t),
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", p.display());
                return 2;
            }
        },
        _ => {
            let mut t = String::new();
            if let Err(e) = stdin.read_to_string(&mut t) {
                let _ = writeln!(err, "error: stdin: {e}");
                return 2;
            }
            ("<stdin>".to_string(), t)
        }
    };

    let script = match parse_script(&text, &sigma) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{name}:{e}");
            return 2;
        }
    };

    let opts = Options {
        timeout: cli.timeout_ms.map(Duration::from_millis),
        dump_proof: cli.dump_proof,
        dump_model: cli.dump_model,
    };
    let mut session = Session::new(sigma, opts);
    for cmd in &script.commands {
        match session.run(cmd) {
            Ok(lines) => {
                for l in lines {
                    let _ = writeln!(out, "{l}");
                }
            }
            // Like other SMT solvers, a get-model with nothing to show is
            // reported in-band and the script continues.
            Err(e @ ExecError::NoModel) => {
                let _ = writeln!(out, "(error \"{e}\")");
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return 1;
            }
        }
        let _ = out.flush();
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;
    use capstr::smtlib::{parse_model, Command as ScriptCommand};

    fn data(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
    }

    struct Output {
        code: u8,
        stdout: String,
        stderr: String,
    }

    impl Output {
        fn success(&self) -> bool {
            self.code == 0
        }
    }

    fn capstr(args: &[&str], stdin: Option<&str>) -> Output {
        let cli = Cli::try_parse_from(std::iter::once("capstr").chain(args.iter().copied())).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(&cli, &mut stdin.unwrap_or("").as_bytes(), &mut out, &mut err);
        Output { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
    }

    fn stdout(o: &Output) -> String {
        o.stdout.clone()
    }

    fn verdicts(text: &str) -> Vec<&str> {
        text.lines().filter(|l| ["sat", "unsat", "unknown"].contains(l)).collect()
    }

    /// The `(model ...)` blocks of the output, in order.
    fn models(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur: Option<String> = None;
        for l in text.lines() {
            if l == "(model" {
                cur = Some(String::new());
            }
            if let Some(c) = &mut cur {
                c.push_str(l);
                c.push('\n');
                if l == ")" {
                    out.push(cur.take().unwrap());
                }
            }
        }
        out
    }

    /// Replays the script and checks each printed model against the assertions
    /// in scope at the check-sat that produced it.
    fn assert_models_hold(script: &str, printed: &str) {
        let sigma = Alphabet::ascii();
        let s = parse_script(script, &sigma).unwrap();
        let lines: Vec<&str> = verdicts(printed);
        let mut models = models(printed).into_iter();
        let mut session = Session::new(sigma, Options::default());
        let mut k = 0;
        for c in &s.commands {
            if matches!(c, ScriptCommand::CheckSat) {
                if lines[k] == "sat" {
                    let m = parse_model(&models.next().unwrap()).unwrap();
                    assert!(session.satisfied_by(&m).unwrap(), "query {k}: model {m:?} fails");
                }
                k += 1;
            } else if !matches!(c, ScriptCommand::GetModel) {
                session.run(c).unwrap();
            }
        }
    }

    #[test]
    fn replace_harness_answers_three_queries() {
        let o = capstr(&[data("replace_harness.smt2").to_str().unwrap()], None);
        assert!(o.success());
        let out = stdout(&o);
        assert_eq!(verdicts(&out), ["sat", "unsat", "sat"]);
        assert!(out.contains("(error \"get-model without a preceding satisfiable check-sat\")"));
        assert_models_hold(&std::fs::read_to_string(data("replace_harness.smt2")).unwrap(), &out);
    }

    #[test]
    fn match_harness_prints_four_verdicts() {
        let o = capstr(&[data("match_harness.smt2").to_str().unwrap()], None);
        assert!(o.success());
        let out = stdout(&o);
        assert_eq!(verdicts(&out), ["sat", "sat", "unsat", "unsat"]);
        assert_models_hold(&std::fs::read_to_string(data("match_harness.smt2")).unwrap(), &out);
    }

    #[test]
    fn dump_model_prints_a_verifying_model() {
        let text = std::fs::read_to_string(data("name_swap.smt2")).unwrap().replace("(get-model)", "");
        let o = capstr(&["--dump-model"], Some(&text));
        assert!(o.success());
        let out = stdout(&o);
        assert_eq!(verdicts(&out), ["sat"]);
        let m = parse_model(&models(&out)[0]).unwrap();
        assert_eq!(m["v"].as_deref(), Some("Don Knuth; Alan Turing"));
        assert_models_hold(&text, &out);
    }

    #[test]
    fn normalize_path_is_unsat_with_proof() {
        let o = capstr(&["--dump-proof", data("normalize.smt2").to_str().unwrap()], None);
        assert!(o.success());
        let out = stdout(&o);
        assert_eq!(verdicts(&out), ["unsat"]);
        assert!(out.lines().skip(1).all(|l| l.starts_with(';')));
        assert!(out.contains("[Bwd-Prop]") && out.contains("[Close]"));
    }

    #[test]
    fn timeout_gives_unknown() {
        let o = capstr(&["--timeout-ms", "1", data("author_list.smt2").to_str().unwrap()], None);
        assert!(o.success());
        let out = stdout(&o);
        assert_eq!(verdicts(&out), ["unknown"]);
        assert!(out.contains("; reason: timeout"));
    }

    #[test]
    fn stdin_and_dash_read_the_script() {
        let script = "(declare-fun x () String)(assert (str.in.re x re.all))(check-sat)(get-model)";
        for args in [&[][..], &["-"][..]] {
            let o = capstr(args, Some(script));
            assert!(o.success());
            let out = stdout(&o);
            assert_eq!(verdicts(&out), ["sat"]);
            assert_eq!(parse_model(&models(&out)[0]).unwrap()["x"].as_deref(), Some(""));
        }
    }

    #[test]
    fn parse_errors_exit_with_two() {
        let o = capstr(&[], Some("(declare-fun x () String)\n(assert (str.in.re x (re.+ (str.to.re \"ab\")))\n(check-sat"));
        assert_eq!(o.code, 2);
        let err = &o.stderr;
        assert!(err.starts_with("<stdin>:3:1:"), "{err}");

        let o = capstr(&["/nonexistent/script.smt2"], None);
        assert_eq!(o.code, 2);
    }

    #[test]
    fn custom_alphabet_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sigma.txt");
        std::fs::write(&path, "ab\n").unwrap();
        let sigma = path.to_str().unwrap();
        let o = capstr(&["--alphabet", sigma], Some("(declare-fun x () String)(assert (str.in.re x (str.to.re \"c\")))(check-sat)"));
        assert_eq!(o.code, 2);
        let o = capstr(
            &["--alphabet", sigma],
            Some("(declare-fun x () String)(assert (not (str.in.re x (re.* (str.to.re \"a\")))))(check-sat)(get-model)"),
        );
        assert!(o.success());
        let out = stdout(&o);
        assert_eq!(parse_model(&models(&out)[0]).unwrap()["x"].as_deref(), Some("b"));

        let o = capstr(&["--alphabet", dir.path().join("missing").to_str().unwrap()], Some(""));
        assert_eq!(o.code, 2);
    }

    #[test]
    fn byte_alphabet_accepts_non_ascii() {
        let o = capstr(&["--alphabet", "byte"], Some("(declare-fun x () String)(assert (str.in.re x (str.to.re \"\u{e9}\")))(check-sat)"));
        assert!(o.success());
        assert_eq!(verdicts(&stdout(&o)), ["sat"]);
        let o = capstr(&[], Some("(declare-fun x () String)(assert (str.in.re x (str.to.re \"\u{e9}\")))(check-sat)"));
        assert_eq!(o.code, 2);
    }

    #[test]
    fn oracle_dir_writes_manifest_and_programs() {
        let dir = tempfile::tempdir().unwrap();
        let o = capstr(&["--oracle-dir", dir.path().to_str().unwrap()], None);
        assert!(o.success());
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        let cases = manifest["cases"].as_array().unwrap();
        assert_eq!(cases.len(), 115);
        for c in cases {
            for key in ["id", "kind", "regex", "input", "expected"] {
                assert!(c.get(key).is_some(), "{c} lacks {key}");
            }
            let kind = c["kind"].as_str().unwrap();
            assert!(["match-group-1", "replace", "replace-all"].contains(&kind), "{kind}");
            assert_eq!(c.get("replacement").is_some_and(|r| !r.is_null()), kind != "match-group-1");
            let id = c["id"].as_str().unwrap();
            assert!(dir.path().join("cases").join(format!("{id}.js")).is_file());
        }
        let swap = cases.iter().find(|c| c["id"] == "name-swap").unwrap();
        assert_eq!(swap["expected"], "Knuth Don; Turing Alan");

        // Same seed, same corpus.
        let again = tempfile::tempdir().unwrap();
        capstr(&["--oracle-dir", again.path().to_str().unwrap()], None);
        assert_eq!(
            std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
            std::fs::read_to_string(again.path().join("manifest.json")).unwrap()
        );
    }

    #[test]
    fn unwritable_oracle_dir_is_a_solver_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("file");
        std::fs::write(&file, "").unwrap();
        let o = capstr(&["--oracle-dir", file.to_str().unwrap()], None);
        assert_eq!(o.code, 1);
    }
}
