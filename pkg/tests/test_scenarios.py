"""Headless execution of the scenario scripts.

Each scenario is a sequence of CLI invocations with expected stdout
blocks; `*` wildcards match unpredictable ids.  A trailing `[exit N]`
line pins the expected exit code (default 0).  Every scenario's final
assertions read back state through the download path, so the scripts
double as end-to-end oracle checks.
"""

import glob
import os
import re
import shlex

import pytest

from peershare import cli


def wildcard_match(actual: str, pattern: str) -> bool:
    """Only `*` is special; everything else (including brackets) is literal."""
    regex = "".join(".*" if ch == "*" else re.escape(ch) for ch in pattern)
    return re.fullmatch(regex, actual) is not None

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")


def parse_scenario(path):
    steps = []
    with open(path, encoding="utf-8") as fh:
        current = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#") or not line.strip():
                continue
            if line.startswith("$ "):
                if current:
                    steps.append(current)
                current = {"argv": shlex.split(line[2:]), "expect": [], "exit": 0}
            elif line.startswith("[exit "):
                current["exit"] = int(line[len("[exit "):-1])
            else:
                current["expect"].append(line)
        if current:
            steps.append(current)
    return steps


def scenario_files():
    return sorted(glob.glob(os.path.join(SCENARIO_DIR, "*.txt")))


def test_scenario_directory_is_not_empty():
    assert scenario_files()


@pytest.mark.parametrize("path", scenario_files(), ids=lambda p: os.path.basename(p))
def test_scenario(path, tmp_path, capsys):
    world = str(tmp_path / "world")
    for index, step in enumerate(parse_scenario(path)):
        argv = ["--world", world] + step["argv"]
        code = cli.main(argv)
        out = capsys.readouterr().out
        got = [line for line in out.splitlines() if line]
        label = f"{os.path.basename(path)} step {index + 1}: $ {' '.join(step['argv'])}"
        assert code == step["exit"], f"{label}\nexit {code} != {step['exit']}\noutput: {out}"
        assert len(got) == len(step["expect"]), (
            f"{label}\nexpected {len(step['expect'])} lines, got {len(got)}:\n{out}"
        )
        for expected, actual in zip(step["expect"], got):
            assert wildcard_match(actual, expected), (
                f"{label}\nline {actual!r} does not match {expected!r}"
            )
