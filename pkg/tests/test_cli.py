import subprocess
import sys

import numpy as np
import pytest

from mmnoise.cli import main
from mmnoise.iq import load_iq, write_iq
from mmnoise.ldpc import load_code
from mmnoise.profile_io import load_profile, parse_kv

N_SYNTH = 600_000


@pytest.fixture(scope="module")
def synth_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    out = d / "noise.f32le"
    assert main(["synth", "--profile", "ev-reference", "--n", str(N_SYNTH), "--seed", "3", "--out", str(out)]) == 0
    return out


def _files(d):
    return sorted(p.name for p in d.rglob("*") if p.is_file())


# ---------------------------------------------------------------- usage


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_format_is_usage_error(tmp_path, capsys):
    assert main(["estimate", "--in", str(tmp_path / "x.f32le")]) == 2
    assert "--format" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["synth", "--profile", "ev-reference", "--n", "0", "--seed", "1", "--out", "x"],
        ["synth", "--profile", "ev-reference", "--n", "10", "--seed", "-1", "--out", "x"],
        ["ber", "--profile", "ev-reference", "--code", "peg:96", "--snr", "a,b", "--seed", "1", "--out", "x"],
        ["analyze", "--in", "x", "--format", "f32le", "--alpha", "-2"],
        ["estimate", "--in", "x", "--format", "f32le", "--refine-iters", "-1"],
    ],
)
def test_bad_argument_values(argv):
    assert main(argv) == 2


def test_conflicting_state_counts(synth_file):
    assert main(["estimate", "--in", str(synth_file), "--format", "f32le", "--k", "3", "--M", "5"]) == 2


def test_missing_input_is_runtime_error(tmp_path, capsys):
    assert main(["analyze", "--in", str(tmp_path / "nope.f32le"), "--format", "f32le"]) == 1
    assert "error" in capsys.readouterr().err


def test_console_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "mmnoise.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("mmnoise ")


# ---------------------------------------------------------------- synth


def test_synth_outputs(synth_file):
    rec = load_iq(synth_file, "f32le")
    assert len(rec) == N_SYNTH
    meta = parse_kv(synth_file.with_name(synth_file.name + ".meta.txt").read_text())
    assert meta["seed"][1] == "3" and meta["kind"][1] == "synth"


def test_synth_from_profile_file_with_extras(tmp_path):
    prof = tmp_path / "p.txt"
    prof.write_text("kind = middleton\nA = 0.5\nGamma = 0.01\nsigma2 = 2\nM = 3\nr = 0.9\n")
    out = tmp_path / "z.csv"
    argv = ["synth", "--profile", str(prof), "--n", "500", "--seed", "1", "--out", str(out),
            "--format", "csv", "--mode", "real", "--states-out", str(tmp_path / "s.csv"),
            "--plotdata", str(tmp_path / "plots"), "--plot-samples", "100"]
    assert main(argv) == 0
    assert np.all(load_iq(out, "csv").samples.imag == 0)
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 8 + 1 + 500
    lines = (tmp_path / "plots" / "fig5_noise.csv").read_text().splitlines()
    assert "time_s,i,q,state" in lines and len(lines) == 8 + 1 + 100


# ---------------------------------------------------------------- analyze / estimate


def test_analyze_outputs(synth_file, tmp_path):
    out = tmp_path / "a.txt"
    argv = ["analyze", "--in", str(synth_file), "--format", "f32le", "--synthetic",
            "--out", str(out), "--bursts-csv", str(tmp_path / "b.csv"), "--plotdata", str(tmp_path / "plots")]
    assert main(argv) == 0
    entries = parse_kv(out.read_text())
    assert int(entries["burst_count"][1]) > 100
    for comp in ("i", "q"):
        assert abs(float(entries[f"background.kurtosis_{comp}"][1])) < 0.3
    assert _files(tmp_path) == ["a.txt", "b.csv", "fig3_background_hist.csv", "fig4_burst_power.csv"]


def test_estimate_round_trip(synth_file, tmp_path, ev_profile):
    report = tmp_path / "r.txt"
    argv = ["estimate", "--in", str(synth_file), "--format", "f32le", "--synthetic",
            "--out", str(report), "--bursts-csv", str(tmp_path / "b.csv"),
            "--profile-out", str(tmp_path / "p.txt")]
    assert main(argv) == 0
    prof = load_profile(tmp_path / "p.txt")
    np.testing.assert_allclose(prof.state_probs, ev_profile.state_probs, atol=0.03)
    np.testing.assert_allclose(prof.state_sigmas, ev_profile.state_sigmas, rtol=0.1)
    assert abs(prof.r - ev_profile.r) < 0.01
    entries = parse_kv(report.read_text())
    assert entries["kind"][1] == "estimate"
    assert entries["config.M"][1] == "4" and "config.alpha" in entries
    assert load_profile(report).r == prof.r


def test_estimate_default_outputs_next_to_input(synth_file, tmp_path):
    local = tmp_path / "copy.f32le"
    local.write_bytes(synth_file.read_bytes())
    assert main(["estimate", "--in", str(local), "--format", "f32le", "--synthetic", "--refine-iters", "0"]) == 0
    assert _files(tmp_path) == ["copy.f32le", "copy.f32le.bursts.csv", "copy.f32le.report.txt"]


def test_failed_estimate_leaves_no_outputs(tmp_path, rng):
    src = tmp_path / "gauss.f32le"
    write_iq(rng.standard_normal(200_000) + 1j * rng.standard_normal(200_000), src, "f32le")
    argv = ["estimate", "--in", str(src), "--format", "f32le", "--synthetic",
            "--profile-out", str(tmp_path / "p.txt"), "--plotdata", str(tmp_path / "plots")]
    assert main(argv) == 1
    assert _files(tmp_path) == ["gauss.f32le"]


# ---------------------------------------------------------------- ber / code-gen


def test_code_gen(tmp_path):
    assert main(["code-gen", "--n", "96", "--seed", "2", "--out", str(tmp_path / "c.alist")]) == 0
    code = load_code(tmp_path / "c.alist")
    assert (code.n, code.k) == (96, 48)


def test_ber_outputs(tmp_path):
    out = tmp_path / "ber.csv"
    argv = ["ber", "--profile", "ev-reference", "--code", "peg:96:1", "--snr", "2,8", "--seed", "4",
            "--max-codewords", "60", "--target-errors", "20", "--out", str(out), "--plotdata", str(tmp_path / "plots")]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    assert "# seed = 4" in lines and "# profile = ev-reference" in lines
    rows = [ln for ln in lines if not ln.startswith("#")]
    assert rows[0].startswith("snr_db,convention,detector,ber")
    assert len(rows) == 1 + 4
    fig = (tmp_path / "plots" / "fig6_ber.csv").read_text().splitlines()
    assert "snr_db,ber_bcjr,ber_awgn" in fig


def test_ber_bad_code_is_runtime_error(tmp_path):
    argv = ["ber", "--profile", "ev-reference", "--code", str(tmp_path / "none.alist"), "--snr", "2",
            "--seed", "1", "--out", str(tmp_path / "b.csv")]
    assert main(argv) == 1
    assert _files(tmp_path) == []


# ---------------------------------------------------------------- determinism


def _run_twice(tmp_path, argv_for):
    outs = []
    for tag, workers in (("serial", "1"), ("parallel", "3")):
        d = tmp_path / tag
        d.mkdir()
        assert main(argv_for(d, workers)) == 0
        outs.append({name: (d / name).read_bytes() for name in _files(d)})
    return outs


def test_synth_parallel_byte_identical(tmp_path):
    a, b = _run_twice(tmp_path, lambda d, w: [
        "synth", "--profile", "ev-reference", "--n", "200000", "--seed", "9", "--block-len", "30000",
        "--workers", w, "--out", str(d / "z.f32le")])
    assert a == b


def test_estimate_parallel_byte_identical(synth_file, tmp_path):
    a, b = _run_twice(tmp_path, lambda d, w: [
        "estimate", "--in", str(synth_file), "--format", "f32le", "--synthetic", "--workers", w,
        "--out", str(d / "r.txt"), "--bursts-csv", str(d / "b.csv")])
    assert a == b


def test_ber_parallel_byte_identical(tmp_path):
    a, b = _run_twice(tmp_path, lambda d, w: [
        "ber", "--profile", "ev-reference", "--code", "peg:96:1", "--snr", "1,3", "--seed", "2",
        "--max-codewords", "300", "--target-errors", "40", "--batch-size", "8", "--workers", w,
        "--out", str(d / "ber.csv")])
    assert a == b
