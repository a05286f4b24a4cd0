"""Experiment dispatch, artifact writing and run manifests."""

import hashlib
import io
import json
import logging
import math
import time
from importlib import metadata
from pathlib import Path

import mpmath
import numpy as np
from scipy import linalg

from . import dynamics, quantum, semiclassical, spectral, thermo, toy
from .config import preset_config
from .cache import ArrayCache, atomic_write_bytes, atomic_write_text, cached_spectrum, key_for
from .errors import (InsufficientLevels, NumericalError, TransientNotBracketed,
                     UndefinedEnsemble, WindowOutOfRange)
from .parallel import pmap

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, mpmath.mpf):
        return mpmath.nstr(x, 17, min_fixed=-4, max_fixed=4)
    return str(x)


def csv_bytes(header, rows):
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for r in rows:
        out.write(",".join(_fmt(v) for v in r) + "\n")
    return out.getvalue().encode()


def _model(cfg, g=0.0, omega0=None):
    m = cfg.model
    return semiclassical.ModelParams(omega0 if omega0 is not None else m.get("omega0", 1.0), g,
                                     m.get("alpha", 0.5), m.get("omega", 1.0))


def _gstar(cfg):
    return semiclassical.g_star(cfg.model.get("alpha", 0.5), cfg.model.get("omega", 1.0))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, mpmath.mpf):
        return mpmath.nstr(x, 17)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# -- experiments -------------------------------------------------------------

def exp_toy(cfg, ctx):
    p = cfg.params
    rows = toy.scan_b(p["b"], p["c"])
    summary = {"b_c": toy.critical_coupling(abs(p["c"])), "n_points": len(rows)}
    return {"toy.csv": (("b", "c", "x", "V", "kind"), rows)}, summary


def exp_phase_diagram(cfg, ctx):
    p = cfg.params
    gs = _gstar(cfg)
    rows = []
    for r in np.linspace(p["g_min_over_gstar"], p["g_max_over_gstar"], p["n_g"]):
        c = semiclassical.critical_set(_model(cfg, r * gs))
        rows.append((r * gs, r, c.eps_gs, c.eps_c1 if c.eps_c1 is not None else math.nan,
                     c.eps_c2 if c.eps_c2 is not None else math.nan,
                     c.q_c if c.q_c is not None else math.nan))
    return ({"phase_diagram.csv": (("g", "g_over_gstar", "eps_gs", "eps_c1", "eps_c2", "q_c"), rows)},
            {"g_star": gs})


def exp_density(cfg, ctx):
    p = cfg.params
    gs = _gstar(cfg)
    eps = np.linspace(p["eps_min"], p["eps_max"], p["n_eps"])
    rows, sing_rows, found = [], [], {}
    for r in p["g_over_gstar"]:
        params = _model(cfg, r * gs)
        rho = semiclassical.density_curve(params, eps)
        rows.extend((r, e, v) for e, v in zip(eps, rho))
        located = semiclassical.locate_singularities(params, p["eps_min"], p["eps_max"], p["scan_step"])
        crit = semiclassical.critical_set(params)
        out = []
        for e, kind_scan in located:
            exact = min((c for c in (crit.eps_c1, crit.eps_c2) if c is not None),
                        key=lambda c: abs(c - e), default=None)
            kind = semiclassical.classify_singularity(exact, params) if exact is not None else kind_scan
            sing_rows.append((r, e, kind_scan, exact if exact is not None else math.nan, kind))
            out.append({"eps": e, "scan_kind": kind_scan, "eps_exact": exact, "kind": kind})
        found[f"{r:g}"] = out
    return ({"density.csv": (("g_over_gstar", "eps", "rho"), rows),
             "singularities.csv": (("g_over_gstar", "eps_located", "scan_kind", "eps_c", "kind"), sing_rows)},
            {"g_star": gs, "singularities": found})


def exp_contour(cfg, ctx):
    p = cfg.params
    gs = _gstar(cfg)
    params = _model(cfg, p["g_over_gstar"] * gs)
    crit = semiclassical.critical_set(params)
    rows = []
    for e in p["eps"]:
        ivs = semiclassical._intervals(e, params, crit)
        for iv in ivs:
            br = semiclassical.momentum_branch(e, params, iv.well, n_grid=p["n_grid"])
            rows.extend((e, br.well, q, pv) for q, pv in zip(br.q_grid, br.p_values))
            rows.extend((e, br.well, q, -pv) for q, pv in zip(br.q_grid[::-1], br.p_values[::-1]))
    return ({"contour.csv": (("eps", "well", "q", "p"), rows)},
            {"g": params.g, "eps_c1": crit.eps_c1, "eps_c2": crit.eps_c2, "q_c": crit.q_c})


def _ebk_point(args):
    params, n_ph, margin = args
    crit = semiclassical.critical_set(params)
    lo, hi = crit.eps_c1, crit.eps_c2 - margin
    # ladders run a little past the window so edge levels still find their partner
    pad = 0.5 * margin
    left = dict(semiclassical.ebk_ladder(params, "left", hi + pad, lo - pad, with_n=True))
    right = dict(semiclassical.ebk_ladder(params, "right", hi + pad, lo - pad, with_n=True))
    ab = quantum.banded_upper(params, quantum.FockBasis(n_ph))
    # one extra level on each side keeps closest-approach detection at the window edges
    w = linalg.eigvals_banded(ab, select="v", select_range=(-np.inf, (hi + 0.05) * params.omega0 / 2))
    exact = 2 * w / params.omega0
    return params.g, exact, left, right, lo, hi


def ebk_compare(cfg, ctx):
    p = cfg.params
    gs = _gstar(cfg)
    omega0 = cfg.model["omega0"]
    g = np.linspace(p["g_min_over_gstar"], p["g_max_over_gstar"], p["n_g"]) * gs
    pts = pmap(_ebk_point, [(_model(cfg, gi), p["n_ph"], p["eps_margin"]) for gi in g], ctx["jobs"])
    rows, exact_rows, dev = [], [], 0.0
    lo_all = max(pt[4] for pt in pts)
    hi_all = min(pt[5] for pt in pts)
    for gi, exact, left, right, lo, hi in pts:
        ebk = np.sort(np.array(list(left.values()) + list(right.values())))
        inside = exact[(exact >= lo_all) & (exact <= hi_all)]
        if len(inside) and len(ebk):
            dev = max(dev, float(np.max(np.min(np.abs(inside[:, None] - ebk[None, :]), axis=1))))
        first = int(np.searchsorted(exact, lo))
        exact_rows.extend((gi, gi / gs, first + k, e) for k, e in enumerate(exact[first:]))
        rows.extend((gi, gi / gs, n, "minus", e) for n, e in sorted(left.items()))
        rows.extend((gi, gi / gs, n, "plus", e) for n, e in sorted(right.items()))
    # ladder crossings on the grid versus exact closest approaches
    n = min(len(pt[1]) for pt in pts)
    ex = np.array([pt[1][:n] for pt in pts])
    gaps = np.diff(ex, axis=1)
    approaches = []
    for k in range(n - 1):
        for i in range(1, len(g) - 1):
            e = 0.5 * (ex[i, k] + ex[i, k + 1])
            if gaps[i, k] < gaps[i - 1, k] and gaps[i, k] <= gaps[i + 1, k] and lo_all <= e <= hi_all:
                approaches.append((i, k, e, gaps[i, k]))
    crossings = []
    for i in range(len(g) - 1):
        l0, r0, l1, r1 = pts[i][2], pts[i][3], pts[i + 1][2], pts[i + 1][3]
        for a in sorted(set(l0) & set(l1)):
            for b in sorted(set(r0) & set(r1)):
                s0, s1 = l0[a] - r0[b], l1[a] - r1[b]
                if s0 * s1 < 0:
                    t = s0 / (s0 - s1)
                    crossings.append((g[i] + t * (g[i + 1] - g[i]), l0[a] + t * (l1[a] - l0[a])))
    crossing_rows = [(gc, gc / gs, e) for gc, e in crossings]
    bracketed = 0
    for i, k, e, gap in approaches:
        ok = any(g[i - 1] <= gc <= g[i + 1] and abs(ec - e) < 5 * gap + 2.0 / omega0
                 for gc, ec in crossings)
        bracketed += ok
    summary = {"max_abs_deviation": dev, "window": [lo_all, hi_all], "tolerance": p["tolerance"],
               "passed": dev <= p["tolerance"], "n_closest_approaches": len(approaches),
               "n_bracketed": bracketed, "n_ladder_crossings": len(crossings)}
    return ({"ebk.csv": (("g", "g_over_gstar", "n", "well", "eps_n"), rows),
             "exact_levels.csv": (("g", "g_over_gstar", "level", "eps"), exact_rows),
             "ebk_crossings.csv": (("g", "g_over_gstar", "eps"), crossing_rows)}, summary)


def exp_flow(cfg, ctx):
    p = cfg.params
    gs = _gstar(cfg)
    g = np.linspace(p["g_min_over_gstar"], p["g_max_over_gstar"], p["n_g"]) * gs
    cache = ctx["cache"]
    rows = []
    for gi in g:
        params = _model(cfg, gi)
        spec = cached_spectrum(cache, params, p["n_ph"])
        eps = spec.reduced
        keep = np.nonzero((eps >= p["eps_min"]) & (eps <= p["eps_max"]))[0]
        for n in keep:
            c = spec.c_diag[n] if spec.c_diag is not None else math.nan
            lab = int(spec.labels[n]) if spec.labels is not None else 0
            rows.append((gi, gi / gs, int(n), eps[n], c, dynamics.LABEL_NAMES[lab]))
    return {"flow.csv": (("g", "g_over_gstar", "level", "eps", "c", "label"), rows)}, {"g_star": gs}


def _transient_job(args):
    omega0, alpha, omega, lo, hi, n_g, n_ph, anchor = args
    try:
        tr = spectral.transient_scan(omega0, alpha, lo, hi, n_g, n_ph, anchor, omega)
    except TransientNotBracketed:
        tr = spectral.track_pair(semiclassical.ModelParams(omega0, lo, alpha, omega), anchor,
                                 np.linspace(lo, hi, n_g), n_ph)
        tr["width"] = math.nan
        tr["omega0"] = omega0
    return tr


def exp_transient(cfg, ctx):
    p = cfg.params
    gs = _gstar(cfg)
    m = cfg.model
    jobs = [(w0, m.get("alpha", 0.5), m.get("omega", 1.0), p["g_min_over_gstar"] * gs,
             p["g_max_over_gstar"] * gs, p["n_g"], int(math.ceil(p["n_ph_per_omega0"] * w0)),
             p["eps_anchor"]) for w0 in p["omega0_values"]]
    traces = pmap(_transient_job, jobs, ctx["jobs"])
    rows, wrows = [], []
    for tr in traces:
        rows.extend((tr["omega0"], g, g / gs, ep, cp, cm)
                    for g, ep, cp, cm in zip(tr["g"], tr["eps_p"], tr["c_p"], tr["c_pm1"]))
        wrows.append((tr["omega0"], tr["index"], tr["width"], tr["width"] / gs))
    ok = [(w, d) for w, _, d, _ in wrows if math.isfinite(d) and d > 0]
    summary = {"g_star": gs}
    if len(ok) >= 2:
        z, amp, resid = spectral.power_law_fit([w for w, _ in ok], [d for _, d in ok])
        summary.update(z=z, amplitude=amp, log10_rms=resid, n_fit=len(ok))
    return ({"transient_traces.csv": (("omega0", "g", "g_over_gstar", "eps_p", "c_p", "c_pm1"), rows),
             "transient_widths.csv": (("omega0", "index", "width", "width_over_gstar"), wrows)},
            summary)


def _crossing_job(args):
    params, n_ph, lo, hi, anchor, n_scan, bits = args
    found = spectral.find_crossings(params, n_ph, lo, hi, anchor - 0.5, anchor + 0.5, n_scan)
    if not found:
        return None
    c = min(found, key=lambda r: abs(r["eps"] - anchor))
    rep = spectral.crossing_zoom(params, c["g_lo"], c["g_hi"], anchor, bits, n_ph,
                                 level_index=c["index"])
    return rep


def exp_crossing(cfg, ctx):
    p = cfg.params
    gs = _gstar(cfg)
    bits = cfg.precision_bits
    jobs, keys = [], []
    for anchor, wlo, whi in zip(p["eps_anchors"], p["window_lo_over_gstar"], p["window_hi_over_gstar"]):
        for w0 in p["omega0_values"]:
            params = _model(cfg, wlo * gs, omega0=w0)
            jobs.append((params, int(math.ceil(p["n_ph_per_omega0"] * w0)), wlo * gs, whi * gs,
                         anchor, p["n_scan"], bits))
            keys.append((anchor, w0))
    reports = pmap(_crossing_job, jobs, ctx["jobs"])
    rows, trows, fam = [], [], {}
    for (anchor, w0), rep in zip(keys, reports):
        if rep is None:
            rows.append((anchor, w0, -1, math.nan, math.nan, "nan", math.nan, 0, math.nan))
            continue
        lg = float(mpmath.log10(rep.gap))
        rows.append((anchor, w0, rep.level_index, rep.g_at_min, rep.eps, rep.gap, lg,
                     len(rep.zoom_trace), rep.slope))
        trows.extend((anchor, w0, i, h, gp) for i, (h, gp) in enumerate(rep.zoom_trace))
        fam.setdefault(anchor, []).append((w0, rep.gap, rep.slope))
    summary = {"precision_bits": bits, "families": {}}
    lz_w0, p_nd = p["lz_omega0"], p["lz_p_nd"]
    for anchor, pts in fam.items():
        entry = {"omega0": [w for w, _, _ in pts], "log10_gap": [float(mpmath.log10(gp)) for _, gp, _ in pts]}
        gaps = [gp for _, gp, _ in pts]
        entry["monotone_decrease"] = all(a > b for a, b in zip(gaps, gaps[1:]))
        if len(pts) >= 4:
            delta, icpt, resid = spectral.gap_scaling([w for w, _, _ in pts], gaps)
            entry.update(delta=delta, intercept=icpt, log10_rms=resid)
            # LZ estimate at lz_omega0 with the fitted gap and the diabatic slope ~ omega0
            entry["lz_log10_rate_fit"] = spectral.lz_rate_log10(icpt - delta * lz_w0, lz_w0, p_nd)
        summary["families"][f"{anchor:g}"] = entry
    summary["lz_log10_rate_paper_inputs"] = {
        f"{d:g}": spectral.lz_rate_log10(-d * lz_w0, lz_w0, p_nd) for d in (0.34, 1.19)}
    return ({"crossing_gaps.csv": (("eps_anchor", "omega0", "level_index", "g_at_min", "eps",
                                    "gap_reduced", "log10_gap", "iterations", "slope"), rows),
             "crossing_zoom.csv": (("eps_anchor", "omega0", "iteration", "dg", "gap_reduced"), trows)},
            summary)


def exp_gs_indicators(cfg, ctx):
    p = cfg.params
    m = cfg.model
    g = np.linspace(p["g_min"], p["g_max"], p["n_g"])
    t = quantum.gs_indicators(m.get("alpha", 0.0), g, m["omega0"], p["n_ph"], m.get("omega", 1.0))
    ref = np.full(len(g), math.nan)
    if m.get("alpha", 0.0) == 0.0:
        ref = np.where(g > 1, 2 + 3 * (-1 - g**4) / g**4, 0.0)
    rows = list(zip(t["g"], t["eps_gs"], t["d2eps_gs"], ref, t["n_gs"], t["dn_gs"]))
    return ({"gs_indicators.csv": (("g", "eps_gs", "d2eps_gs", "d2eps_gs_reference", "n_gs", "dn_gs"), rows)},
            {"n_points": len(rows)})


def _protocol_arrays(cfg, ctx):
    """Run (or replay from cache) the stepped protocol as flat arrays."""
    p = cfg.params
    gs = _gstar(cfg)
    params = _model(cfg, p["g_ini_over_gstar"] * gs)
    key = key_for(kind="protocol", model=cfg.model, params=p)

    def compute():
        snaps, trace = dynamics.stepped_protocol(
            params, p["n_ph"], g_ini=p["g_ini_over_gstar"] * gs, g_fin=p["g_fin_over_gstar"] * gs,
            delta_g=p["delta_g"], tau=p["tau"], snapshots=p["snapshots"],
            eps_cut=p.get("eps_cut"), progress=ctx.get("progress"))
        out = {f"trace_{k}": v for k, v in trace.items()}
        for i, s in enumerate(snaps):
            e = s.energy
            out.update({f"s{i}_g": np.array(s.g), f"s{i}_eps": e.eps_n, f"s{i}_weights": e.weights,
                        f"s{i}_labels": e.labels, f"s{i}_c": s.diagonals["c_op"],
                        f"s{i}_number": s.diagonals["number"],
                        f"s{i}_displacement": s.diagonals["displacement"],
                        f"s{i}_q": s.position.q_n, f"s{i}_pq": s.position.probs,
                        f"s{i}_mean_c": np.array(s.mean_c),
                        f"s{i}_crit": np.array([s.eps_c1 if s.eps_c1 is not None else np.nan,
                                                s.eps_c2 if s.eps_c2 is not None else np.nan])})
        out["n_snapshots"] = np.array(len(snaps))
        return out

    arrays, hit = ctx["cache"].get_or_compute(key, compute)
    return arrays, gs, hit


def snapshots_from_arrays(arrays):
    out = []
    for i in range(int(arrays["n_snapshots"])):
        crit = arrays[f"s{i}_crit"]
        out.append({"g": float(arrays[f"s{i}_g"]), "eps": arrays[f"s{i}_eps"],
                    "weights": arrays[f"s{i}_weights"], "labels": arrays[f"s{i}_labels"],
                    "c": arrays[f"s{i}_c"], "number": arrays[f"s{i}_number"],
                    "displacement": arrays[f"s{i}_displacement"], "q": arrays[f"s{i}_q"],
                    "pq": arrays[f"s{i}_pq"], "mean_c": float(arrays[f"s{i}_mean_c"]),
                    "eps_c1": None if np.isnan(crit[0]) else float(crit[0]),
                    "eps_c2": None if np.isnan(crit[1]) else float(crit[1])})
    return out


def plateau_analysis(trace, gs, eps_c2_of, window=0.1, tol=0.02, budget=0.01):
    """Largest change of <C> over any g/g* span of ``window`` past the plateau onset.

    The onset is the first step whose mean energy lies below eps_c2 with at
    most ``budget`` of the weight left on unlabeled levels (the distribution
    sits fully below the separatrix).
    """
    g = trace["g"]
    c = trace["mean_C"]
    eps = trace["mean_eps"]
    un = trace.get("unassigned", np.zeros(len(g)))
    below = np.array([np.isfinite(ci) and e < eps_c2_of(gi) and u <= budget
                      for gi, e, ci, u in zip(g, eps, c, un)])
    if not below.any():
        return {"onset_g_over_gstar": None, "max_variation": None, "plateau": False}
    start = int(np.argmax(below))
    x = g[start:] / gs
    y = c[start:]
    worst = 0.0
    j = 0
    for i in range(len(x)):
        while x[i] - x[j] > window + 1e-12:
            j += 1
        seg = y[j:i + 1]
        worst = max(worst, float(seg.max() - seg.min()))
    return {"onset_g_over_gstar": float(x[0]), "max_variation": worst,
            "plateau": worst < tol, "plateau_value": float(y[-1])}


def _eps_c2_fn(cfg):
    def f(g):
        c = semiclassical.critical_set(_model(cfg, g))
        return c.eps_c2 if c.eps_c2 is not None else -math.inf
    return f


def exp_quench(cfg, ctx):
    arrays, gs, hit = _protocol_arrays(cfg, ctx)
    snaps = snapshots_from_arrays(arrays)
    files = {}
    snap_summary = []
    for s in snaps:
        tag = f"{s['g'] / gs:.4f}".replace(".", "p")
        lab = [dynamics.LABEL_NAMES[int(k)] for k in s["labels"]]
        keep = s["weights"] > 0
        files[f"energy_g{tag}.csv"] = (("eps", "weight", "label"),
                                       [(e, w, l) for e, w, l, k in zip(s["eps"], s["weights"], lab, keep) if k])
        files[f"position_g{tag}.csv"] = (("q", "prob"), list(zip(s["q"], s["pq"])))
        w = s["weights"]
        parts = {name: float(w[s["labels"] == k].sum()) for k, name in dynamics.LABEL_NAMES.items()}
        means = {}
        for k, name in ((-1, "minus"), (1, "plus")):
            sel = s["labels"] == k
            means[name] = float(w[sel] @ s["eps"][sel] / w[sel].sum()) if w[sel].sum() > 0 else None
        snap_summary.append({"g_over_gstar": s["g"] / gs, "mean_eps": float(w @ s["eps"]),
                             "mean_c": s["mean_c"], "partial": parts, "mode_eps": means,
                             "eps_c1": s["eps_c1"], "eps_c2": s["eps_c2"]})
    trace = {k[6:]: arrays[k] for k in arrays if k.startswith("trace_")}
    files["trace.csv"] = (("g", "mean_eps", "mean_C", "unassigned", "norm_leakage"),
                          list(zip(trace["g"], trace["mean_eps"], trace["mean_C"], trace["unassigned"],
                                   trace["norm_leakage"])))
    ctx["extra_bytes"]["snapshots.npz"] = _npz_bytes(arrays)
    summary = {"g_star": gs, "snapshots": snap_summary, "cache_hit": hit,
               "plateau": plateau_analysis(trace, gs, _eps_c2_fn(cfg)),
               "max_norm_leakage": float(np.max(trace["norm_leakage"]))}
    summary.pop("cache_hit")
    return files, summary


def _npz_bytes(arrays):
    buf = io.BytesIO()
    np.savez(buf, **{k: arrays[k] for k in sorted(arrays)})
    return buf.getvalue()


def thermo_rows(snaps, gs, omega0, half_window=30, half_window_mod=15, smoothing_spacings=10.0):
    rows, summ = [], []
    for s in snaps:
        diag = {"c_op": s["c"], "number": s["number"], "displacement": s["displacement"]}
        entry = {"g_over_gstar": s["g"] / gs}
        try:
            reports, sp = thermo.ensemble_table(s["eps"], diag, s["weights"], s["labels"], s["c"],
                                                s["eps_c2"], half_window, half_window_mod)
        except (WindowOutOfRange, UndefinedEnsemble) as exc:
            entry["error"] = str(exc)
            summ.append(entry)
            continue
        t_plus = t_minus = math.nan
        if sp is not None and sp.p_plus > 0 and sp.p_minus > 0:
            e_abs = 0.5 * omega0 * np.asarray(s["eps"])
            ep, em = sp.mean_energy(omega0)
            try:
                t_plus, t_minus = thermo.two_temperatures(e_abs, s["labels"], ep, em,
                                                          spacings=smoothing_spacings)
            except InsufficientLevels as exc:
                entry["temperature_error"] = str(exc)
        for r in reports:
            rows.append((s["g"], s["g"] / gs, r.observable, r.diagonal, r.microcanonical,
                         r.modified if r.modified is not None else math.nan,
                         sp.p_plus if sp else math.nan, sp.p_minus if sp else math.nan,
                         t_plus, t_minus, r.window_range))
        entry.update(p_plus=sp.p_plus if sp else None, p_minus=sp.p_minus if sp else None,
                     T_plus=t_plus, T_minus=t_minus,
                     observables={r.observable: {"diagonal": r.diagonal, "micro": r.microcanonical,
                                                 "modified": r.modified, "range": r.window_range}
                                  for r in reports})
        summ.append(entry)
    return rows, summ


def exp_thermo(cfg, ctx):
    p = cfg.params
    src = p.get("source", "")
    if src:
        with np.load(Path(src) / "snapshots.npz") as z:
            arrays = {k: z[k] for k in z.files}
        gs = _gstar(cfg)
    else:
        qcfg = preset_config("quench", cfg.preset)
        qcfg.model = dict(cfg.model)
        arrays, gs, _ = _protocol_arrays(qcfg, ctx)
    snaps = snapshots_from_arrays(arrays)
    rows, summ = thermo_rows(snaps, gs, cfg.model["omega0"], p["half_window"], p["half_window_mod"],
                             p["smoothing_spacings"])
    header = ("g", "g_over_gstar", "observable", "diagonal", "micro", "modified", "p_plus", "p_minus",
              "T_plus", "T_minus", "window_range")
    return {"thermo.csv": (header, rows)}, {"snapshots": summ}


EXPERIMENTS = {
    "toy": exp_toy, "phase-diagram": exp_phase_diagram, "density": exp_density,
    "contour": exp_contour, "ebk": ebk_compare, "flow": exp_flow, "transient": exp_transient,
    "crossing": exp_crossing, "quench": exp_quench, "thermo": exp_thermo,
    "gs-indicators": exp_gs_indicators,
}


# -- planning ----------------------------------------------------------------

def plan(cfg):
    """Diagonalization count and peak dense-matrix memory estimate (bytes)."""
    p, e = cfg.params, cfg.experiment
    count, dim = 0, 0
    if e in ("flow", "ebk"):
        count, dim = p["n_g"], 2 * (p["n_ph"] + 1)
    elif e == "gs-indicators":
        count, dim = p["n_g"], 2 * (p["n_ph"] + 1)
    elif e == "transient":
        count = p["n_g"] * len(p["omega0_values"]) + len(p["omega0_values"])
        dim = 2 * (int(math.ceil(p["n_ph_per_omega0"] * max(p["omega0_values"]))) + 1)
    elif e == "crossing":
        per = p["n_scan"] + 20 * 21
        count = per * len(p["omega0_values"]) * len(p["eps_anchors"])
        dim = 2 * (int(math.ceil(p["n_ph_per_omega0"] * max(p["omega0_values"]))) + 1)
    elif e in ("quench", "thermo"):
        q = p if e == "quench" else preset_config("quench", cfg.preset).params
        gs = _gstar(cfg)
        span = (max(q["snapshots"]) - q["g_fin_over_gstar"]) * gs
        count = int(math.ceil(span / q["delta_g"])) + 2
        dim = 2 * (q["n_ph"] + 1)
    banded = e in ("ebk", "gs-indicators", "transient", "crossing")
    memory = (16 * dim * 8 if banded else 3 * dim * dim * 8)
    return {"experiment": e, "diagonalizations": count, "dimension": dim,
            "estimated_memory_bytes": memory}


# -- run ---------------------------------------------------------------------

def run(cfg, progress=None):
    """Execute ``cfg`` and write CSV/JSON artifacts plus ``manifest.json``."""
    t0 = time.time()
    out_dir = Path(cfg.output_dir) / cfg.experiment
    ctx = {"cache": ArrayCache(cfg.cache_dir), "jobs": cfg.jobs, "progress": progress,
           "extra_bytes": {}}
    try:
        tables, summary = EXPERIMENTS[cfg.experiment](cfg, ctx)
    except NumericalError as exc:
        raise type(exc)(f"[{cfg.experiment}] {exc}") from exc
    files = []
    for name, (header, rows) in sorted(tables.items()):
        data = csv_bytes(header, rows)
        atomic_write_bytes(out_dir / name, data)
        files.append({"name": name, "rows": len(rows), "sha256": hashlib.sha256(data).hexdigest()})
    for name, data in sorted(ctx["extra_bytes"].items()):
        atomic_write_bytes(out_dir / name, data)
        files.append({"name": name, "rows": None, "sha256": hashlib.sha256(data).hexdigest()})
    doc = {"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment, "preset": cfg.preset,
           "config": cfg.canonical(), "config_hash": cfg.hash(), "results": summary}
    data = (json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n").encode()
    atomic_write_bytes(out_dir / "summary.json", data)
    files.append({"name": "summary.json", "rows": None, "sha256": hashlib.sha256(data).hexdigest()})
    manifest = {"schema_version": SCHEMA_VERSION, "config_hash": cfg.hash(), "files": files,
                "wall_time_s": round(time.time() - t0, 3), "version": _version()}
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    manifest["summary"] = summary
    return manifest
