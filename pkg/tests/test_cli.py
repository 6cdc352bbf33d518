"""Command-line build, ingest, decode and bench."""

import csv
import io
import json

import numpy as np
import pytest

from conftest import EXAMPLE_X
from detsketch.cli import (
    EXIT_FORMAT,
    EXIT_OK,
    EXIT_PARAM,
    EXIT_VERIFY,
    build_scheme,
    load_descriptor,
    main,
    read_state,
)
from detsketch.core import apply, format_signal
from detsketch.planted import planted_signal, signal_to_stream
from detsketch.recover_l1 import build_l1_scheme
from detsketch.strict import split_tree_rows


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write_stream(path, updates):
    path.write_text("".join(f"{u.index} {u.delta!r}\n" for u in updates))
    return path


@pytest.fixture
def l1_desc(tmp_path, capsys):
    p = tmp_path / "l1.json"
    assert run(capsys, "build", "--scheme", "general_l1l1", "--n", 4096, "--k", 4, "--seed", 3, "--out", p)[0] == 0
    return p


def test_build_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        run(capsys, "build", "--scheme", "general_linf", "--n", 4096, "--k", 2, "--seed", 9, "--out", p)
    assert a.read_bytes() == b.read_bytes()


def test_strict_descriptor_has_no_seed_and_formula_rows(tmp_path, capsys):
    code, out, _ = run(capsys, "build", "--scheme", "strict", "--n", 4096, "--k", 2)
    desc = json.loads(out)
    assert code == 0 and "seed" not in desc
    assert desc["m"] == split_tree_rows(4096, 2)


def test_l1_descriptor_rows_and_eps(capsys):
    code, out, _ = run(capsys, "build", "--scheme", "general_l1l1", "--n", 4096, "--eps", 0.25, "--seed", 1)
    desc = json.loads(out)
    assert code == 0 and desc["k"] == 4 and desc["eps"] == 0.25
    assert desc["m"] == build_l1_scheme(4096, 4, 0.25, 1).m_total


def test_parameter_errors(capsys):
    assert run(capsys, "build", "--scheme", "strict", "--n", 4096, "--k", 2, "--eps", 0.5)[0] == EXIT_PARAM
    assert run(capsys, "build", "--scheme", "strict", "--n", 4096)[0] == EXIT_PARAM
    assert run(capsys, "build", "--scheme", "general_linf", "--n", 64, "--k", 4)[0] == EXIT_PARAM


def test_empty_stream_gives_zero_state(tmp_path, capsys, l1_desc):
    s = tmp_path / "s.bin"
    (tmp_path / "empty.txt").write_text("")
    assert run(capsys, "ingest", "--descriptor", l1_desc, "--in", tmp_path / "empty.txt", "--out", s)[0] == 0
    desc, raw = load_descriptor(l1_desc)
    assert not read_state(s, raw).any()
    code, out, _ = run(capsys, "decode", "--descriptor", l1_desc, "--state", s)
    assert code == 0 and json.loads(out)["recovered"] == []


def test_split_stream_is_linear(tmp_path, capsys, l1_desc):
    x = planted_signal(4096, 4, 1)
    ups = signal_to_stream(x, seed=2)
    half = len(ups) // 2
    f1 = write_stream(tmp_path / "a.txt", ups[:half])
    f2 = write_stream(tmp_path / "b.txt", ups[half:])
    fall = write_stream(tmp_path / "all.txt", ups)
    _, raw = load_descriptor(l1_desc)
    for name, src in (("s1", f1), ("s2", f2), ("all", fall)):
        run(capsys, "ingest", "--descriptor", l1_desc, "--in", src, "--out", tmp_path / name)
    run(capsys, "ingest", "--descriptor", l1_desc, "--in", f2, "--state", tmp_path / "s1", "--out", tmp_path / "chain")
    s1, s2, full, chain = (read_state(tmp_path / n, raw) for n in ("s1", "s2", "all", "chain"))
    assert np.allclose(s1 + s2, full, atol=1e-9)
    assert np.allclose(chain, full, atol=1e-9)
    sch = build_scheme("general_l1l1", 4096, 4, 3, None)
    assert np.allclose(full, apply(sch.matrix, x).values, atol=1e-9)


def test_decode_verify_and_formats(tmp_path, capsys, l1_desc):
    x = planted_signal(4096, 4, 5)
    write_stream(tmp_path / "x.txt", signal_to_stream(x, seed=1))
    (tmp_path / "truth.txt").write_text(format_signal(x))
    run(capsys, "ingest", "--descriptor", l1_desc, "--in", tmp_path / "x.txt", "--out", tmp_path / "s")
    base = ["decode", "--descriptor", l1_desc, "--state", tmp_path / "s", "--verify", tmp_path / "truth.txt"]
    code, out, _ = run(capsys, *base, "--strict-check")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["verification"]["guarantee_satisfied"]
    assert set(rep["verification"]) >= {"linf_error", "tail_norm_k", "tail_norm_k2", "l1_error"}
    assert rep["m_rows"] > 0 and rep["candidate_evaluations"] is None
    mags = [(-abs(v), i) for i, v in rep["recovered"]]
    assert mags == sorted(mags)
    _, out_csv, _ = run(capsys, *base, "--format", "csv")
    rows = list(csv.reader(io.StringIO(out_csv)))
    assert rows[0] == ["index", "estimate"]
    assert {(int(i), float(v)) for i, v in rows[1:]} == {(i, v) for i, v in rep["recovered"]}


def test_verification_failure_exit_code(tmp_path, capsys, l1_desc):
    # ground truth disagreeing with the sketch fails the guarantee
    x = np.zeros(4096)
    x[10] = 5.0
    write_stream(tmp_path / "x.txt", signal_to_stream(x, seed=0))
    y = np.zeros(4096)
    y[11] = 5.0
    (tmp_path / "truth.txt").write_text(format_signal(y))
    run(capsys, "ingest", "--descriptor", l1_desc, "--in", tmp_path / "x.txt", "--out", tmp_path / "s")
    args = ["decode", "--descriptor", l1_desc, "--state", tmp_path / "s", "--verify", tmp_path / "truth.txt"]
    assert run(capsys, *args)[0] == EXIT_OK
    assert run(capsys, *args, "--strict-check")[0] == EXIT_VERIFY


def test_format_errors(tmp_path, capsys, l1_desc):
    (tmp_path / "bad.txt").write_text("1 2.0\n3 x\n")
    code, _, err = run(capsys, "ingest", "--descriptor", l1_desc, "--in", tmp_path / "bad.txt", "--out", tmp_path / "s")
    assert code == EXIT_FORMAT and "line 2" in err
    (tmp_path / "junk").write_bytes(b"not a state")
    assert run(capsys, "decode", "--descriptor", l1_desc, "--state", tmp_path / "junk")[0] == EXIT_FORMAT


def test_state_from_other_descriptor_is_rejected(tmp_path, capsys, l1_desc):
    other = tmp_path / "other.json"
    run(capsys, "build", "--scheme", "general_l1l1", "--n", 4096, "--k", 4, "--seed", 4, "--out", other)
    (tmp_path / "e.txt").write_text("")
    run(capsys, "ingest", "--descriptor", other, "--in", tmp_path / "e.txt", "--out", tmp_path / "s")
    assert run(capsys, "decode", "--descriptor", l1_desc, "--state", tmp_path / "s")[0] == EXIT_FORMAT


def test_strict_pipeline_and_violation(tmp_path, capsys):
    d = tmp_path / "strict.json"
    run(capsys, "build", "--scheme", "strict", "--n", 4096, "--k", 2, "--out", d)
    x = planted_signal(4096, 2, 7, nonneg=True)
    write_stream(tmp_path / "x.txt", signal_to_stream(x, seed=3, strict=True))
    (tmp_path / "truth.txt").write_text(format_signal(x))
    assert run(capsys, "ingest", "--descriptor", d, "--in", tmp_path / "x.txt", "--out", tmp_path / "s")[0] == 0
    code, out, _ = run(capsys, "decode", "--descriptor", d, "--state", tmp_path / "s", "--verify", tmp_path / "truth.txt")
    rep = json.loads(out)
    assert code == 0 and rep["verification"]["guarantee_satisfied"]
    assert 0 < rep["candidate_evaluations"] < 4096
    (tmp_path / "neg.txt").write_text("5 1.0\n5 -2.0\n")
    code, _, err = run(capsys, "ingest", "--descriptor", d, "--in", tmp_path / "neg.txt", "--out", tmp_path / "t")
    assert code == EXIT_FORMAT and "negative" in err


def test_worked_example_example_through_cli(tmp_path, capsys):
    d = tmp_path / "a.json"
    run(capsys, "build", "--scheme", "worked_example", "--n", 8, "--out", d)
    (tmp_path / "x.txt").write_text("".join(f"{i} {v}\n" for i, v in enumerate(EXAMPLE_X)))
    code, out, _ = run(capsys, "ingest", "--descriptor", d, "--in", tmp_path / "x.txt", "--out", tmp_path / "s", "--print")
    assert code == 0
    y = [float(t) for t in out.split()]
    assert np.allclose(y, [0.5, 10.2, 0.1, 10.6, -0.1, -9.7, -10.0, 0.2], rtol=0, atol=1e-12)
    code, out, _ = run(capsys, "decode", "--descriptor", d, "--state", tmp_path / "s")
    assert json.loads(out)["message"] == [1, 1, 1, 0]


def test_end_to_end_determinism(tmp_path, capsys, l1_desc):
    x = planted_signal(4096, 4, 8)
    write_stream(tmp_path / "x.txt", signal_to_stream(x, seed=4))
    reports = []
    for name in ("s1", "s2"):
        run(capsys, "ingest", "--descriptor", l1_desc, "--in", tmp_path / "x.txt", "--out", tmp_path / name)
        _, out, _ = run(capsys, "decode", "--descriptor", l1_desc, "--state", tmp_path / name)
        rep = json.loads(out)
        rep.pop("decode_wall_time")
        reports.append(rep)
    assert reports[0] == reports[1]
    assert (tmp_path / "s1").read_bytes() == (tmp_path / "s2").read_bytes()


def test_bench_reports_backend(capsys):
    code, out, _ = run(capsys, "bench", "--scheme", "general_l1l1", "--n", 1024, "--k", 2, "--trials", 2)
    rep = json.loads(out)
    assert code == 0 and rep["trials"] == 2 and rep["backend"] in ("python", "cython")
