"""End-to-end acceptance checks, one per criterion, at their stated tolerances.

Each test records its outcome in ``conftest.ACCEPTANCE`` so the terminal
summary prints one PASS/FAIL line per criterion. Full-size parts are
marked ``paper`` and only run with RABICAT_PAPER=1.
"""

import math
import os

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter1d

from conftest import ACCEPTANCE
from rabicat import semiclassical, toy
from rabicat.config import preset_config
from rabicat.quantum import gs_indicators
from rabicat.runner import run
from rabicat.semiclassical import ModelParams, critical_set, g_star
from rabicat.spectral import lz_rate_log10

GS = g_star(0.5)


def record(n, ok, detail):
    prev = ACCEPTANCE.get(n)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[n] = (bool(ok), detail)
    return ok


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = os.environ.get("RABICAT_CACHE_DIR") or str(root / "cache")
    return root, cache


def run_preset(workdir, experiment, preset="desk"):
    root, cache = workdir
    cfg = preset_config(experiment, preset, {"run.output_dir": str(root / preset),
                                             "run.cache_dir": cache})
    return run(cfg)["summary"]


# -- 1 -----------------------------------------------------------------------

def test_criterion_01_toy_critical_points():
    bc = toy.critical_coupling(0.8)
    cases = {0.0: [(-0.585, -0.351)],
             bc: [(-0.928, -1.114), (0.464, 0.139)],
             -3.0: [(-1.287, -3.255), (1.152, -1.298), (0.135, 0.054)]}
    worst = 0.0
    for b, expected in cases.items():
        pts = toy.critical_points(toy.ToyParams(b, 0.8))
        for x, v in expected:
            near = min(pts, key=lambda s: abs(s.x - x))
            worst = max(worst, abs(near.x - x), abs(near.v - v))
    ok = record(1, worst <= 2e-3, f"max |delta| = {worst:.2e} (bound 2e-3)")
    assert ok


# -- 2 -----------------------------------------------------------------------

def test_criterion_02_alpha_zero_reference():
    worst = 0.0
    for g in np.concatenate([np.linspace(0.1, 1.0, 10), np.linspace(1.05, 3.0, 40)]):
        ref = -1.0 if g <= 1 else -(1 + g**4) / (2 * g**2)
        worst = max(worst, abs(critical_set(ModelParams(80.0, g, 0.0)).eps_gs - ref))
    ok_gs = worst <= 1e-10
    cfg = preset_config("gs-indicators", "desk")
    p = cfg.params
    g = np.linspace(p["g_min"], p["g_max"], p["n_g"])
    t = gs_indicators(0.0, g, cfg.model["omega0"], p["n_ph"])
    sel = (g > 1) & np.isfinite(t["d2eps_gs"])
    dev = np.abs(t["d2eps_gs"][sel] - (2 + 3 * (-1 - g[sel] ** 4) / g[sel] ** 4))
    ok_d2 = float(dev.max()) <= 1e-3
    first_ok = g[sel][np.argmax(np.maximum.accumulate(dev[::-1])[::-1] <= 1e-3)]
    ok = record(2, ok_gs and ok_d2,
                f"eps_GS max dev {worst:.1e} (1e-10); d2 eps_GS max dev over g>1 at omega0=80 "
                f"{dev.max():.3g} (1e-3), within bound for g >= {first_ok:.2f}")
    assert ok


# -- 3 -----------------------------------------------------------------------

def test_criterion_03_g_star():
    ok = record(3, abs(GS - 1.7872) <= 1e-3, f"g* = {GS:.7f}")
    assert ok


# -- 4 -----------------------------------------------------------------------

def test_criterion_04_density_singularities():
    expected = [(1.0, -0.8620, "log"), (2.0, -4.1596, "jump"), (2.0, -0.9784, "log")]
    parts, ok = [], True
    for r, e_ref, kind_ref in expected:
        p = ModelParams(300.0, r * GS, 0.5)
        found = semiclassical.locate_singularities(p, e_ref - 0.1, e_ref + 0.1, 0.001)
        if not found:
            ok = False
            parts.append(f"g={r}g*: none found near {e_ref}")
            continue
        e, _ = min(found, key=lambda f: abs(f[0] - e_ref))
        kind = semiclassical.classify_singularity(e, p)
        exact = min((c for c in (critical_set(p).eps_c1, critical_set(p).eps_c2)), key=lambda c: abs(c - e))
        kind_exact = semiclassical.classify_singularity(exact, p)
        good = abs(e - e_ref) <= 2e-3 and kind_exact == kind_ref
        ok &= good
        parts.append(f"g={r:g}g*: {e:.4f} {kind_exact} (scan-point class {kind})")
    ok = record(4, ok, ", ".join(parts))
    assert ok


# -- 5 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_05_ebk_desk(workdir):
    s = run_preset(workdir, "ebk")
    ok = (s["max_abs_deviation"] <= 5e-3 and s["n_closest_approaches"] > 0
          and s["n_bracketed"] == s["n_closest_approaches"])
    ok = record(5, ok, f"desk omega0=80: max |eps_EBK - eps_exact| = {s['max_abs_deviation']:.2e} (5e-3), "
                       f"{s['n_bracketed']}/{s['n_closest_approaches']} closest approaches bracketed")
    assert ok


@pytest.mark.paper
def test_criterion_05_ebk_paper(workdir):
    s = run_preset(workdir, "ebk", "paper")
    ok = s["max_abs_deviation"] <= 5e-3 and s["n_bracketed"] == s["n_closest_approaches"] > 0
    ok = record(5, ok, f"paper omega0=300: {s['max_abs_deviation']:.2e}")
    assert ok


# -- 6 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_06_transient_scaling(workdir):
    s = run_preset(workdir, "transient")
    z = s.get("z", math.nan)
    ok = record(6, abs(z - 1.0) <= 0.15, f"z = {z:.3f} from {s.get('n_fit', 0)} omega0 values (1 +/- 0.15)")
    assert ok


# -- 7 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_07_crossing_gaps(workdir):
    s = run_preset(workdir, "crossing")
    fam = s["families"]
    deep, shallow = fam["-4"], fam["-2"]
    gap10 = 10 ** deep["log10_gap"][deep["omega0"].index(10.0)]
    ok_gap = 1e-15 <= gap10 <= 1e-12
    ok_fit = all(f.get("delta", 0) > 0 and f["monotone_decrease"] for f in (deep, shallow))
    ok_order = shallow["delta"] < deep["delta"]
    ok_loose = abs(deep["delta"] - 1.19) <= 0.5 * 1.19 and abs(shallow["delta"] - 0.34) <= 0.5 * 0.34
    ok = record(7, ok_gap and ok_fit and ok_order and ok_loose,
                f"gap(omega0=10, eps~-4) = {gap10:.3e}; delta(-4) = {deep['delta']:.3f}, "
                f"delta(-2) = {shallow['delta']:.3f}; monotone {deep['monotone_decrease']}/"
                f"{shallow['monotone_decrease']}")
    assert ok


# -- 8 -----------------------------------------------------------------------

def test_criterion_08_landau_zener_rates():
    # Delta E ~ 10^(-delta omega0) at omega0 = 100, diabatic slope ~ omega0, P = 1/2
    r1 = lz_rate_log10(-0.34 * 100, 100.0, 0.5)
    r2 = lz_rate_log10(-1.19 * 100, 100.0, 0.5)
    ok = record(8, abs(r1 + 70) <= 1 and abs(r2 + 240) <= 1,
                f"log10 dg/dt = {r1:.2f} and {r2:.2f} (targets -70, -240, +/-1)")
    assert ok


# -- 9 -----------------------------------------------------------------------

def _modes(eps, weights, bandwidth=0.15):
    """Peaks of a Gaussian-smoothed P(eps) carrying at least 5% of the maximum."""
    grid = np.arange(eps.min() - 1, eps.max() + 1, 0.01)
    hist, _ = np.histogram(eps, bins=np.append(grid, grid[-1] + 0.01), weights=weights)
    smooth = gaussian_filter1d(hist, bandwidth / 0.01)
    peaks = [i for i in range(1, len(smooth) - 1)
             if smooth[i] > smooth[i - 1] and smooth[i] >= smooth[i + 1] and smooth[i] > 0.05 * smooth.max()]
    return grid[peaks]


def quench_checks(s, check_value):
    snaps = s["snapshots"]
    first, last = snaps[0], snaps[-1]
    msgs, ok = [], True
    n_first = len(_modes(np.array(first["eps"]), np.array(first["weights"])))
    n_last = len(_modes(np.array(last["eps"]), np.array(last["weights"])))
    ok &= n_first == 1 and n_last >= 2
    msgs.append(f"modes {n_first} -> {n_last}")
    late = [x for x in snaps if x["partial"]["minus"] > 0.05 and x["partial"]["plus"] > 0.05
            and x["g_over_gstar"] >= 1.7]
    ordered = all(x["mode_eps"]["minus"] < x["mode_eps"]["plus"] for x in late)
    crosses = any(x["mode_eps"]["minus"] < x["eps_c1"] for x in late)
    plus_above = all(x["mode_eps"]["plus"] > x["eps_c1"] for x in late)
    ok &= bool(late) and ordered and crosses and plus_above
    msgs.append(f"minus<plus {ordered}, minus crosses eps_c1 {crosses}, plus above eps_c1 {plus_above}")
    pl = s["plateau"]
    ok &= bool(pl["plateau"])
    if check_value:
        # the plateau height depends on omega0 and the step size, so only
        # the full-size protocol is held to the reference plateau value
        ok &= abs(pl["plateau_value"] + 0.2) <= 0.1
    msgs.append(f"<C> plateau from {pl['onset_g_over_gstar']:.3f} g*, variation {pl['max_variation']:.4f} "
                f"(0.02), value {pl['plateau_value']:.3f} "
                + ("(-0.2 +/- 0.1)" if check_value else "(value checked at full size only)"))
    msgs.append(f"max leakage {s['max_norm_leakage']:.1e}")
    return ok, "; ".join(msgs)


def _quench_summary(workdir, preset):
    root, _ = workdir
    s = run_preset(workdir, "quench", preset)
    snaps = []
    out = root / preset / "quench"
    for x in s["snapshots"]:
        tag = f"{x['g_over_gstar']:.4f}".replace(".", "p")
        data = np.genfromtxt(out / f"energy_g{tag}.csv", delimiter=",", names=True, dtype=None,
                             encoding=None)
        snaps.append({**x, "eps": data["eps"], "weights": data["weight"]})
    return {**s, "snapshots": snaps}


@pytest.fixture(scope="session")
def quench_desk(workdir):
    return _quench_summary(workdir, "desk")


@pytest.mark.slow
def test_criterion_09_quench_desk(quench_desk):
    ok, detail = quench_checks(quench_desk, check_value=False)
    ok = record(9, ok, "desk omega0=40: " + detail)
    assert ok


@pytest.mark.paper
def test_criterion_09_quench_paper(workdir):
    ok, detail = quench_checks(_quench_summary(workdir, "paper"), check_value=True)
    ok = record(9, ok, "paper omega0=100: " + detail)
    assert ok


# -- 10 ----------------------------------------------------------------------

def thermo_checks(snaps):
    worst_sum = worst_c = 0.0
    mod_ok, micro_bad, msgs = True, False, []
    labeled = 0
    for x in snaps:
        if "error" in x or x.get("p_plus") is None:
            continue
        labeled += 1
        worst_sum = max(worst_sum, abs(x["p_plus"] + x["p_minus"] - 1))
        obs = x["observables"]
        worst_c = max(worst_c, abs(obs["c_op"]["modified"] - obs["c_op"]["diagonal"]))
        for name, o in obs.items():
            bound = 0.05 * o["range"]
            if abs(o["modified"] - o["diagonal"]) > bound:
                mod_ok = False
                msgs.append(f"ME2 off for {name} at {x['g_over_gstar']:.2f} g*")
            if x["g_over_gstar"] >= 1.4 and abs(o["micro"] - o["diagonal"]) > bound:
                micro_bad = True
    ok = labeled > 0 and worst_sum <= 1e-12 and worst_c <= 1e-12 and mod_ok and micro_bad
    msgs.insert(0, f"{labeled} labeled snapshots, |p+ + p- - 1| {worst_sum:.1e}, "
                   f"|C_ME2 - C_diag| {worst_c:.1e}, ME2 within 5% {mod_ok}, standard micro fails {micro_bad}")
    return ok, "; ".join(msgs)


@pytest.mark.slow
def test_criterion_10_ensembles_desk(workdir, quench_desk):
    s = run_preset(workdir, "thermo")
    ok, detail = thermo_checks(s["snapshots"])
    ok = record(10, ok, "desk: " + detail)
    assert ok


@pytest.mark.paper
def test_criterion_10_ensembles_paper(workdir):
    s = run_preset(workdir, "thermo", "paper")
    ok, detail = thermo_checks(s["snapshots"])
    last = [x for x in s["snapshots"] if x.get("p_plus") is not None][-1]
    ok &= abs(last["p_plus"] - 0.3984) <= 0.01 and abs(last["p_minus"] - 0.6016) <= 0.01
    ok = record(10, ok, f"paper: {detail}; p+ = {last['p_plus']:.4f}")
    assert ok


# -- 11 ----------------------------------------------------------------------

def test_criterion_11_property_suite_standalone():
    import subprocess
    import sys
    import time

    here = os.path.dirname(__file__)
    t0 = time.time()
    res = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                          os.path.join(here, "test_properties.py")], capture_output=True, text=True)
    dt = time.time() - t0
    tail = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr[-200:]
    ok = record(11, res.returncode == 0 and dt < 300, f"{tail} in {dt:.0f} s (< 300 s)")
    assert ok
