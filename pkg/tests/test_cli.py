import subprocess
import sys

import pytest

from breakable_machine.cli import _parse_reveal, build_parser
from breakable_machine.nn import load_model


def run_cli(*args, **kwargs):
    return subprocess.run(
        [sys.executable, "-m", "breakable_machine.cli", *args],
        capture_output=True, text=True, timeout=60, **kwargs,
    )


def test_missing_model_fails_with_path_in_message(tmp_path):
    result = run_cli("serve", "--model", str(tmp_path / "nope.bmn"), "--port", "0",
                     "--log-file", str(tmp_path / "log"))
    assert result.returncode == 2
    assert "nope.bmn" in result.stderr


def test_unreadable_dataset_fails(tmp_path):
    model_path = tmp_path / "m.bmn"
    run_cli("make-model", "--labels", "a,b", "--out", str(model_path))
    result = run_cli("serve", "--model", str(model_path),
                     "--dataset", str(tmp_path / "missing-dir"), "--port", "0",
                     "--log-file", str(tmp_path / "log"))
    assert result.returncode == 2
    assert "missing-dir" in result.stderr


def test_make_model_writes_loadable_file(tmp_path):
    out = tmp_path / "net.bmn"
    result = run_cli("make-model", "--labels", "cat, dog ,owl", "--out", str(out), "--seed", "4")
    assert result.returncode == 0
    model = load_model(out.read_bytes())
    assert model.labels == ["cat", "dog", "owl"]
    assert model.feature_size == 7
    # same seed, same bytes
    out2 = tmp_path / "net2.bmn"
    run_cli("make-model", "--labels", "cat, dog ,owl", "--out", str(out2), "--seed", "4")
    assert out.read_bytes() == out2.read_bytes()


def test_make_model_requires_labels(tmp_path):
    result = run_cli("make-model", "--labels", " , ", "--out", str(tmp_path / "x.bmn"))
    assert result.returncode == 2


def test_reveal_argument_parsing():
    assert _parse_reveal("hidden") == "hidden"
    assert _parse_reveal("0") == 0
    assert _parse_reveal("3") == 3
    import argparse
    with pytest.raises(argparse.ArgumentTypeError):
        _parse_reveal("-1")
    with pytest.raises(argparse.ArgumentTypeError):
        _parse_reveal("many")


def test_parser_surface():
    parser = build_parser()
    ns = parser.parse_args([
        "serve", "--model", "m.bmn", "--dataset", "d", "--port", "0",
        "--bind", "127.0.0.1", "--reveal", "2", "--max-players", "10",
    ])
    assert ns.command == "serve"
    assert ns.reveal == 2
    assert ns.max_players == 10
