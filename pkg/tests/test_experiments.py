import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parasplit.errors import ConfigError, DivergenceError
from parasplit.experiments import ExperimentConfig, cli, runners, svg
from parasplit.experiments.runners import (build_case, curve_rows, run_error_curve,
                                           run_fine_accuracy, run_robustness,
                                           run_s_sensitivity, run_speedup, speedup_config)

SMALL = dict(h=1 / 32, Nc=8, s=5)


# -- config -----------------------------------------------------------------

configs = st.builds(
    ExperimentConfig,
    preset=st.just("A"),
    c=st.floats(0, 5, allow_nan=False),
    T=st.floats(0.1, 4),
    h=st.sampled_from([1 / 16, 1 / 32, 1 / 64, 1 / 100, 1 / 128]),
    splitting=st.sampled_from(["dimensional", "domain-decomposition"]),
    q=st.integers(1, 4),
    beta=st.sampled_from([1 / 64, 1 / 32]),
    pair=st.sampled_from(["FIE-FIE", "FIE-DR", "IE-IE"]),
    Nc=st.integers(1, 64),
    s=st.integers(1, 1000),
    rule=st.sampled_from(["reference", "increment"]),
    eps=st.floats(1e-14, 1e-2),
    threads=st.integers(1, 16),
    seed=st.integers(0, 2**31),
)


@settings(max_examples=60)
@given(configs)
def test_config_round_trips_losslessly(cfg):
    cfg = cfg.validate()
    assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("changes,field", [
    (dict(preset="C"), "preset"),
    (dict(h=1 / 30.5), "h"),
    (dict(h=1 / 256), "h"),
    (dict(preset="B", splitting="dimensional"), "splitting"),
    (dict(q=2, beta=0.3), "beta"),
    (dict(coarse_q=4, coarse_beta=0.2), "coarse_beta"),
    (dict(pair="DR-DR"), "pair"),
    (dict(Nc=0), "Nc"),
    (dict(rule="fixed"), "max_iterations"),
    (dict(eps=0.0), "eps"),
    (dict(threads=0), "threads"),
])
def test_validation_names_the_field(changes, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig().replace(**changes)
    assert info.value.field == field


def test_large_mesh_needs_explicit_flag():
    cfg = ExperimentConfig().replace(h=1 / 1000, allow_large_mesh=True)
    assert cfg.n == 999


def test_ini_accepts_fractions_and_overrides():
    text = "[problem]\nh = 1/32\n[time]\nNc = 8 ; coarse steps\n"
    cfg = ExperimentConfig.from_ini(text, {"time.s": "4", "pair": "FIE-DR"})
    assert (cfg.h, cfg.Nc, cfg.s, cfg.pair) == (1 / 32, 8, 4, "FIE-DR")
    assert cfg.dT == 1 / 8 and cfg.dt == 1 / 32


@pytest.mark.parametrize("text", ["[problem]\ncolour = red\n", "[time]\nNc = many\n", "garbage"])
def test_bad_ini_rejected(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini(text)


# -- runners ----------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_curves():
    return run_error_curve(ExperimentConfig())


def test_all_curves_reach_tolerance(desk_curves):
    assert len(desk_curves) == 5
    for c in desk_curves:
        assert c.converged and c.errors[-1] < 1e-6 and c.iterations <= 20


def test_dimensional_curve_at_or_below_dd(desk_curves):
    # the stated ordering at every k, including k = 0 and k = 1
    dim = next(c for c in desk_curves if c.label == "FIE-FIE (Dim)")
    dd = next(c for c in desk_curves if c.label == "FIE-FIE (DD)")
    n = min(len(dim.errors), len(dd.errors))
    assert all(a <= b for a, b in zip(dim.errors[:n], dd.errors[:n]))


def test_dimensional_curve_below_dd_after_two_iterations(desk_curves):
    dim = next(c for c in desk_curves if c.label == "FIE-FIE (Dim)")
    dd = next(c for c in desk_curves if c.label == "FIE-FIE (DD)")
    assert all(a <= b for a, b in zip(dim.errors[2:], dd.errors[2:]))


def test_shared_coarse_scheme_shares_initial_guess():
    cfg = ExperimentConfig(**SMALL)
    a = runners.run_solve(cfg, "FIE-FIE")
    b = runners.run_solve(cfg, "FIE-DR")
    assert a.history[0].error_vs_exact == b.history[0].error_vs_exact


def test_curve_rows_flatten():
    c = runners.Curve("FIE-FIE", "dimensional", [1.0, 0.1], 1, True)
    assert curve_rows([c]) == [("FIE-FIE", "dimensional", 0, 1.0), ("FIE-FIE", "dimensional", 1, 0.1)]


def test_s_sensitivity_directions():
    curves = run_s_sensitivity(ExperimentConfig(), (2, 20))
    it = {(c.pair, c.s): c.iterations for c in curves}
    assert it[("FIE-DR", 20)] <= it[("FIE-DR", 2)]
    assert it[("FIE-FIE", 20)] >= it[("FIE-FIE", 2)]


def test_s_one_same_scheme_converges_at_once():
    cfg = ExperimentConfig(**{**SMALL, "s": 1})
    assert runners.run_solve(cfg, "FIE-FIE").iterations <= 1


def test_preset_b_s_insensitivity():
    cfg = ExperimentConfig(preset="B", h=1 / 16)
    counts = [c.iterations for c in run_s_sensitivity(cfg, (4, 8, 20), ("FIE-DR",))]
    assert max(counts) - min(counts) <= 1


def test_single_value_sweep_single_row():
    rows = run_robustness(ExperimentConfig(**SMALL), "beta", [1 / 16])
    assert len(rows) == 1 and rows[0].value == 1 / 16


def test_beta_degradation():
    cfg = ExperimentConfig()
    for pair in ("FIE-FIE", "FIE-DR"):
        its = [r.iterations for r in run_robustness(cfg, "beta", [1 / 8, 1 / 16, 1 / 32, 1 / 64], [pair])]
        assert all(b >= a for a, b in zip(its, its[1:]))


def test_robust_in_h():
    rows = run_robustness(ExperimentConfig(), "h", [1 / 32, 1 / 64, 1 / 128], ["FIE-FIE"],
                          ["dimensional"])
    its = [r.iterations for r in rows]
    assert max(its) - min(its) <= 2


def test_robust_in_q():
    cfg = ExperimentConfig(beta=1 / 64)
    for pair in ("FIE-FIE", "FIE-DR"):
        its = [r.iterations for r in run_robustness(cfg, "q", [2, 4, 8], [pair])]
        assert max(its) - min(its) <= 2


def test_bad_sweep_axis():
    with pytest.raises(ValueError):
        run_robustness(ExperimentConfig(**SMALL), "colour", [1])
    with pytest.raises(ValueError):
        run_robustness(ExperimentConfig(**SMALL), "dT", [0.3])


def test_fine_accuracy_vanishes_as_t_shrinks():
    errs = [run_fine_accuracy(ExperimentConfig(h=1 / 32, Nc=4, s=4, T=T)) for T in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2 * errs[0]


def test_speedup_baseline_and_blocks():
    cfg = speedup_config(h=1 / 32, Nc=4, s=4)
    rep = run_speedup(cfg, (1, 2), repeats=3)
    assert rep.record(1).speedup == 1.0
    assert rep.iterations == 5 or rep.iterations == cfg.Nc
    for q in (2, 4, 8):
        r = run_speedup(speedup_config(h=1 / 32, Nc=2, s=2, coarse_q=q, coarse_beta=1 / 64),
                        (1,), repeats=3)
        assert r.coarse_blocks == [q, q]
    assert rep.fine_blocks == [2, 2]


def test_speedup_needs_fixed_rule():
    with pytest.raises(ValueError):
        run_speedup(ExperimentConfig(**SMALL))


def test_speedup_warns_below_timer_resolution(monkeypatch):
    monkeypatch.setattr(runners, "parareal_solve", lambda *a, **k: _Stub())
    monkeypatch.setattr(runners, "error_norm", lambda *a: 0.0)
    with pytest.warns(RuntimeWarning, match="timer resolution"):
        rep = run_speedup(speedup_config(h=1 / 16, Nc=2, s=2), (1,), repeats=3)
    assert len(rep.record(1).samples) == 30


class _Stub:
    iterations = 0
    trajectory = [np.zeros(1)]


# -- svg --------------------------------------------------------------------

def test_line_plot_is_valid_xml():
    doc = svg.line_plot({"a": ([0, 1, 2], [1.0, 0.1, 0.01])}, title="t", logy=True)
    root = ET.fromstring(doc)
    assert root.tag.endswith("svg")


def test_heatmap_greys_out_divergent_cells():
    K = np.array([[0.2, math.inf], [1.5, 0.0]])
    doc = svg.heatmap(np.array([-1.0, -0.5]), np.array([-1.0, 1.0]), K, {"K = 1": []})
    ET.fromstring(doc)
    assert doc.count('fill="#f0f0f0"') == 2


# -- CLI --------------------------------------------------------------------

def _small_args(tmp_path, *extra):
    return ["--h", "1/32", "--nc", "8", "--s", "5", "--output", str(tmp_path), *extra]


def test_cli_solve_writes_outputs(tmp_path):
    assert cli.run(["solve", *_small_args(tmp_path)]) == cli.EXIT_OK
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "solve" and manifest["config"]["Nc"] == 8
    assert {"python", "numpy", "scipy"} <= set(manifest["versions"])
    lines = (tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == "# parasplit csv v1"
    ET.fromstring((tmp_path / "history.svg").read_text())


def test_cli_missing_config_exits_2(tmp_path, capsys):
    assert cli.run(["solve", "--config", str(tmp_path / "nope.ini")]) == cli.EXIT_CONFIG
    assert "not found" in capsys.readouterr().err


def test_cli_bad_value_exits_2(tmp_path, capsys):
    code = cli.run(["solve", *_small_args(tmp_path), "--preset", "B", "--splitting", "dimensional"])
    assert code == cli.EXIT_CONFIG
    assert "splitting.kind" in capsys.readouterr().err
    assert cli.run(["robustness", *_small_args(tmp_path), "--values", "1/8,0.9"]) == cli.EXIT_CONFIG
    assert not (tmp_path / "manifest.json").exists()


def test_cli_divergence_exits_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise DivergenceError("iterate 2 is not finite")

    monkeypatch.setattr(runners, "run_solve", boom)
    assert cli.run(["solve", *_small_args(tmp_path)]) == cli.EXIT_DIVERGENCE


def test_cli_certify_prints_verdicts(tmp_path, capsys):
    code = cli.run(["certify", "--output", str(tmp_path), "--points-m2", "200",
                    "--points-m3", "30"])
    out = capsys.readouterr().out
    assert code == cli.EXIT_OK
    assert "FIE-FIE M=2: max K" in out and "FIE-DR M=3: max K" in out
    assert out.strip().endswith("ALL PASS")


def test_cli_scan_region_default_rectangles(tmp_path):
    code = cli.run(["scan-region", "--output", str(tmp_path), "--resolution", "4",
                    "--pairs", "FIE-FIE"])
    assert code == cli.EXIT_OK
    for name in ("small", "large"):
        rows = (tmp_path / f"scan_FIE-FIE_{name}_s20.csv").read_text().splitlines()[2:]
        re = sorted({float(r.split(",")[0]) for r in rows})
        im = sorted({float(r.split(",")[1]) for r in rows})
        r0, r1, i0, i1 = cli.RECTS[name]
        dre, dim = (r1 - r0) / 4, (i1 - i0) / 4
        assert re[0] - dre / 2 == pytest.approx(r0) and re[-1] + dre / 2 == pytest.approx(r1)
        assert im[0] - dim / 2 == pytest.approx(i0) and im[-1] + dim / 2 == pytest.approx(i1)


def test_cli_replay_is_bitwise(tmp_path):
    first = tmp_path / "a"
    assert cli.run(["error-curve", *_small_args(first), "--preset", "B"]) == cli.EXIT_OK
    second = tmp_path / "b"
    assert cli.run(["replay", str(first / "manifest.json"), "--output", str(second)]) == cli.EXIT_OK
    m1 = json.loads((first / "manifest.json").read_text())
    m2 = json.loads((second / "manifest.json").read_text())
    assert m1["outputs"] == m2["outputs"] and m1["outputs"]
    for name in m1["outputs"]:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_cli_config_file_and_set(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(ExperimentConfig(**SMALL, output=str(tmp_path / "o")).to_ini())
    assert cli.run(["fine-accuracy", "--config", str(ini), "--set", "time.s=2"]) == cli.EXIT_OK
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["s"] == 2


def test_cli_threads_flag_beats_env(tmp_path, monkeypatch):
    from parasplit import parallel
    monkeypatch.setattr(parallel, "_budget", 3)
    assert cli.run(["fine-accuracy", *_small_args(tmp_path)]) == cli.EXIT_OK
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["threads"] == 3
    assert cli.run(["fine-accuracy", *_small_args(tmp_path), "--threads", "2"]) == cli.EXIT_OK
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["threads"] == 2


def test_build_case_uses_coarse_geometry():
    case = build_case(ExperimentConfig(**SMALL, coarse_q=4, coarse_beta=1 / 32))
    assert case.coarse.block_counts() == [4, 4]
    assert case.fine.block_counts() == [2, 2]
