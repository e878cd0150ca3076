from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from bpdflow.cli import main
from bpdflow.document import serialize_definition
from bpdflow.fixtures import FIXTURES, fixture_text, script_text
from builders import chain, end, flow, gw, process, start, task


def cli(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def corpus(tmp_path):
    for name in FIXTURES:
        (tmp_path / f"{name}.bpd").write_text(fixture_text(name))
        (tmp_path / f"{name}.jsonl").write_text(script_text(name))
    (tmp_path / "msg-b.jsonl").write_text(script_text("msg-b"))
    return tmp_path


def write(tmp_path, name, definition) -> str:
    path = tmp_path / name
    path.write_text(serialize_definition(definition))
    return str(path)


def test_validate_clean_fixture_is_silent(corpus):
    assert cli("validate", str(corpus / "and-fork.bpd")) == (0, "", "")


def test_validate_reports_errors(tmp_path):
    path = write(tmp_path, "bad.bpd", process("p", [start("s"), end("e")], [flow("f1", "s", "e"), flow("f2", "e", "s")]))
    code, out, _ = cli("validate", path)
    assert code == 1
    lines = out.splitlines()
    assert lines
    for line in lines:
        code_, subject, message = line.split(" ", 2)
        assert code_[0] in "EW" and subject and message


def test_validate_warnings_only_exit_zero(tmp_path):
    path = write(tmp_path, "w.bpd", process("p", [start("s"), end("e"), task("lonely")], chain("f", "s", "e")))
    code, out, _ = cli("validate", path)
    assert code == 0
    assert out.startswith("W001 lonely ")


def test_run_xor_event_with_message_b(corpus):
    code, out, err = cli("run", str(corpus / "xor-event.bpd"), "--events", str(corpus / "msg-b.jsonl"))
    assert code == 0
    subjects = [json.loads(line)["subject"] for line in out.splitlines()]
    assert "msg_b" in subjects and "task_b" in subjects
    assert "msg_a" not in subjects and "task_a" not in subjects and "timeout" not in subjects
    assert err.startswith("completed")


def test_run_writes_trace_file(corpus, tmp_path):
    target = tmp_path / "trace.jsonl"
    code, out, _ = cli("run", str(corpus / "and-fork.bpd"), "--trace", str(target))
    assert code == 0 and out == ""
    assert target.read_text().count("\n") > 0


def test_run_exit_codes(tmp_path, corpus):
    faulted = process("p", [start("s"), gw("x", "exclusiveData"), end("e")],
                      [flow("f1", "s", "x"), flow("f2", "x", "e", "false")])
    assert cli("run", write(tmp_path, "faulted.bpd", faulted))[0] == 2
    failed = process("p", [start("s"), end("boom", "error", error="x")], chain("f", "s", "boom"))
    assert cli("run", write(tmp_path, "failed.bpd", failed))[0] == 2
    waiting = process("p", [start("s"), task("t", "external"), end("e")], chain("f", "s", "t", "e"))
    code, _, err = cli("run", write(tmp_path, "waiting.bpd", waiting))
    assert code == 3 and err.startswith("quiescent")
    code, _, err = cli("run", str(corpus / "bad-join.bpd"), "--events", str(corpus / "bad-join.jsonl"))
    assert code == 3 and err.startswith("deadlock")
    loop = process("p", [start("s"), gw("m", "exclusiveData"), task("t"), gw("x", "exclusiveData", default="out"), end("e")], [
        flow("f1", "s", "m"), flow("f2", "m", "t"), flow("f3", "t", "x"),
        flow("back", "x", "m", "true"), flow("out", "x", "e", default=True),
    ])
    code, out, err = cli("run", write(tmp_path, "loop.bpd", loop), "--max-steps", "7")
    assert code == 2 and out.count("\n") == 7 and err.startswith("budget exceeded")
    terminated = process("p", [start("s"), end("t", "terminate")], chain("f", "s", "t"))
    assert cli("run", write(tmp_path, "t.bpd", terminated))[0] == 0


def test_run_data_flag(corpus):
    low = cli("run", str(corpus / "xor-data.bpd"), "--data", '{"amount": 5}')
    high = cli("run", str(corpus / "xor-data.bpd"), "--data", '{"amount": 5000}')
    assert low[0] == high[0] == 0
    assert low[1] != high[1]
    assert cli("run", str(corpus / "xor-data.bpd"), "--data", "[1]")[0] == 1
    assert cli("run", str(corpus / "xor-data.bpd"), "--data", "{")[0] == 1
    assert cli("run", str(corpus / "xor-data.bpd"), "--data", '{"amount": true}')[0] == 1


def test_explore_exit_codes(corpus, tmp_path):
    code, out, err = cli("explore", str(corpus / "diamond.bpd"))
    assert code == 0
    assert json.loads(out)["optionToComplete"] is True
    assert err.startswith("sound: 7 states")
    code, out, _ = cli("explore", str(corpus / "bad-join.bpd"))
    assert code == 3
    assert json.loads(out)["deadlocks"]
    code, out, _ = cli("explore", str(corpus / "or-split.bpd"), "--max-states", "3")
    assert code == 2
    assert json.loads(out)["bounded"] is True
    report = tmp_path / "r.json"
    assert cli("explore", str(corpus / "diamond.bpd"), "--report", str(report))[1] == ""
    assert json.loads(report.read_text())["bounded"] is False


def test_patterns_lists_and_emits():
    code, out, _ = cli("patterns")
    assert code == 0
    names = [line.split("\t")[0] for line in out.splitlines()]
    assert names[:12] == ["xor-data", "xor-event", "xor-merge", "or-split", "or-merge", "complex-split",
                          "complex-merge", "and-fork", "and-join", "exception", "transaction", "compensation"]
    for name in FIXTURES:
        assert cli("patterns", "--emit", name) == (0, fixture_text(name), "")
    assert cli("patterns", "--emit-script", "msg-b")[1] == script_text("msg-b")
    assert cli("patterns", "--emit", "nope")[0] == 64


def test_usage_errors(corpus):
    for argv in ([], ["frobnicate"], ["run"], ["explore", "x", "--max-states", "0"],
                 ["run", "x", "--max-steps", "many"], ["patterns", "--emit", "a", "--emit-script", "b"]):
        code, out, err = cli(*argv)
        assert code == 64, argv
        assert out == ""
        assert "usage:" in err


def test_help_exits_zero():
    assert cli("--help")[0] == 0


def test_input_errors(tmp_path, corpus):
    assert cli("validate", str(tmp_path / "missing.bpd"))[0] == 1
    (tmp_path / "junk.bpd").write_text("{not json")
    code, _, err = cli("run", str(tmp_path / "junk.bpd"))
    assert code == 1 and err.startswith("error:")
    (tmp_path / "bad.jsonl").write_text('{"after": -1, "event": {}}\n')
    assert cli("run", str(corpus / "and-fork.bpd"), "--events", str(tmp_path / "bad.jsonl"))[0] == 1
    invalid = write(tmp_path, "invalid.bpd", process("p", [start("s"), end("e")], [flow("f1", "s", "e"), flow("f2", "e", "s")]))
    assert cli("run", invalid)[0] == 1
    assert cli("explore", invalid)[0] == 1


def test_stdout_is_byte_deterministic(corpus):
    for name in FIXTURES:
        first = cli("run", str(corpus / f"{name}.bpd"), "--events", str(corpus / f"{name}.jsonl"))
        second = cli("run", str(corpus / f"{name}.bpd"), "--events", str(corpus / f"{name}.jsonl"))
        assert first == second
        assert cli("explore", str(corpus / f"{name}.bpd")) == cli("explore", str(corpus / f"{name}.bpd"))


def test_module_entry_point(corpus):
    proc = subprocess.run([sys.executable, "-m", "bpdflow", "explore", str(corpus / "bad-join.bpd")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 3
    assert json.loads(proc.stdout)["deadlocks"]
