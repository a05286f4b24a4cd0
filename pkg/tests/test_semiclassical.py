import math

import numpy as np
import pytest
from scipy import integrate

from rabicat.errors import EmptyBranch, SingularEnergy, WellCeiling
from rabicat.semiclassical import (ModelParams, classical_energy, classify_singularity, critical_set,
                                   ebk_action, ebk_ladder, ebk_levels, g_star, level_density,
                                   locate_singularities, momentum_branch, phase_space_area)

GS = g_star(0.5)


def P(g_over, omega0=300.0, alpha=0.5):
    return ModelParams(omega0, g_over * GS if alpha else g_over, alpha)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(0.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(1.0, 1.0, omega=-1.0)


def test_classical_energy_origin_and_minima():
    assert classical_energy(0.0, 0.0, ModelParams(50.0, 1.3, 0.5)) == -1.0
    # g = 0: minimum at q = -alpha sqrt(omega0)/omega with eps = -1 - alpha^2/omega
    p = ModelParams(300.0, 0.0, 0.5)
    assert critical_set(p).eps_gs == pytest.approx(-1.25, abs=1e-12)
    assert classical_energy(0.0, -0.5 * math.sqrt(300.0), p) == pytest.approx(-1.25, abs=1e-14)
    assert critical_set(ModelParams(300.0, 2.0, 0.0)).eps_gs == pytest.approx(-2.125, abs=1e-12)


def test_alpha_zero_closed_forms():
    for g in np.linspace(1.1, 3.0, 12):
        c = critical_set(ModelParams(100.0, g, 0.0))
        assert c.eps_gs == pytest.approx(-(1 + g**4) / (2 * g * g), abs=1e-10)
        assert c.eps_c2 == pytest.approx(-1.0, abs=1e-10)
    c = critical_set(ModelParams(100.0, 0.5, 0.0))
    assert len(c.points) == 1 and c.eps_gs == pytest.approx(-1.0, abs=1e-12)
    assert not c.has_esqpt


def test_critical_energies_match_density_figure():
    c = critical_set(P(2.0))
    assert c.eps_c1 == pytest.approx(-4.1596, abs=2e-4)
    assert c.eps_c2 == pytest.approx(-0.9784, abs=2e-4)
    assert c.eps_gs <= c.eps_c1 <= c.eps_c2
    at = critical_set(P(1.0))
    assert at.eps_c1 == pytest.approx(at.eps_c2, abs=1e-9)
    assert at.eps_c2 == pytest.approx(-0.8620, abs=2e-4)


def test_g_star_values_and_uniqueness():
    assert g_star(0.0) == 1.0
    assert GS == pytest.approx(1.7872, abs=1e-3)
    with pytest.raises(ValueError):
        g_star(-0.1)
    assert critical_set(ModelParams(300.0, GS - 1e-6, 0.5)).eps_c2 is None
    assert critical_set(ModelParams(300.0, GS + 1e-6, 0.5)).eps_c2 is not None
    counts = [critical_set(P(r)).eps_c2 is not None for r in (0.3, 0.7, 0.99, 1.01, 1.5, 2.5)]
    assert counts == [False, False, False, True, True, True]


def test_momentum_branch_energy_consistency():
    p = P(2.0)
    for eps, well in ((-3.0, "left"), (-3.0, "right"), (-0.5, None), (-4.5, None)):
        br = momentum_branch(eps, p, well)
        e = classical_energy(br.p_values, br.q_grid, p)
        assert np.max(np.abs(e - eps)) < 1e-10
        assert np.all(br.p_values >= 0)


def test_momentum_branch_topology():
    p = P(2.0)
    c = critical_set(p)
    left = momentum_branch(-2.0, p, "left")
    right = momentum_branch(-2.0, p, "right")
    assert left.turning_points[1] <= c.q_c + 1e-9 <= right.turning_points[0] + 2e-9
    assert momentum_branch(-0.5, p).well == "joined"
    with pytest.raises(EmptyBranch):
        momentum_branch(-4.5, p, "right")
    gs = momentum_branch(c.eps_gs, p)
    assert gs.turning_points[0] == pytest.approx(gs.turning_points[1], abs=1e-9)
    with pytest.raises(EmptyBranch):
        momentum_branch(c.eps_gs - 0.1, p)


def test_level_density_free_value_and_singular_points():
    p = ModelParams(100.0, 0.0, 0.0)
    for eps in (-0.9, -0.2, 0.7):
        assert level_density(eps, p) == pytest.approx(0.5, rel=1e-9)
    q = P(2.0)
    c = critical_set(q)
    with pytest.raises(SingularEnergy):
        level_density(c.eps_c1, q)
    with pytest.raises(SingularEnergy):
        level_density(c.eps_c2, q)
    assert level_density(c.eps_gs - 1.0, q) == 0.0


def test_integrated_density_equals_phase_space_area():
    p = P(2.0, omega0=40.0)
    c = critical_set(p)
    for top in (-4.5, -2.0, 0.5):
        brk = [e for e in (c.eps_c1, c.eps_c2) if c.eps_gs < e < top]
        val, _ = integrate.quad(lambda e: level_density(e, p), c.eps_gs, top, points=brk or None,
                                epsabs=1e-12, epsrel=1e-10, limit=200)
        area = phase_space_area(top, p)
        assert val == pytest.approx(area / (2 * math.pi) * p.omega / p.omega0, rel=1e-6)


def test_phase_space_area_monte_carlo_oracle():
    p = P(2.0, omega0=40.0)
    eps = -2.0
    rng = np.random.default_rng(3)
    # bounding box from the turning points and the largest momentum
    ql = momentum_branch(eps, p, "left")
    qr = momentum_branch(eps, p, "right")
    q0, q1 = ql.turning_points[0], qr.turning_points[1]
    pm = max(ql.p_values.max(), qr.p_values.max()) * 1.01
    n = 10_000_000
    hits = 0
    for _ in range(10):
        q = rng.uniform(q0, q1, n // 10)
        pp = rng.uniform(-pm, pm, n // 10)
        hits += np.count_nonzero(classical_energy(pp, q, p) <= eps)
    frac = hits / n
    box = (q1 - q0) * 2 * pm
    sigma = box * math.sqrt(frac * (1 - frac) / n)
    assert abs(frac * box - phase_space_area(eps, p)) < 5 * sigma


def test_weyl_staircase_within_one_level():
    p = P(2.0, omega0=80.0)
    c = critical_set(p)
    left = ebk_ladder(p, "left")
    right = ebk_ladder(p, "right")
    shift = p.omega / p.omega0
    for eps in np.linspace(c.eps_gs + 0.2, c.eps_c2 - 0.05, 20):
        count = sum(e < eps for e in left) + sum(e < eps for e in right)
        weyl = phase_space_area(eps + shift, p) / (2 * math.pi)
        assert abs(count - weyl) <= 1.0 + 1e-9


def test_action_vanishes_at_bottom_and_grows():
    p = P(2.0)
    c = critical_set(p)
    assert ebk_action(c.eps_gs + 1e-9, p, "left") < 1e-2
    a = [ebk_action(e, p, "right") for e in np.linspace(c.eps_c1 + 0.01, c.eps_c2 - 0.01, 8)]
    assert np.all(np.diff(a) > 0)


def test_ebk_free_oscillator_ladder():
    p = ModelParams(50.0, 0.0, 0.0)
    lv = ebk_levels(p, "joined", 6)
    assert lv == pytest.approx([2 * n / 50.0 - 1 for n in range(7)], abs=1e-9)


def test_ebk_well_ceiling():
    p = P(2.0, omega0=20.0)
    n_fit = len(ebk_ladder(p, "right"))
    with pytest.raises(WellCeiling):
        ebk_levels(p, "right", n_fit + 3)
    with pytest.raises(EmptyBranch):
        ebk_levels(P(0.5), "left", 2)


def test_left_ladder_moves_faster_than_right():
    a, b = P(1.995, 300.0), P(2.010, 300.0)
    slope = {}
    for well in ("left", "right"):
        la = dict(ebk_ladder(a, well, -1.5, -3.0, with_n=True))
        lb = dict(ebk_ladder(b, well, -1.5, -3.0, with_n=True))
        common = sorted(set(la) & set(lb))
        slope[well] = np.mean([abs(lb[n] - la[n]) for n in common])
    assert slope["left"] > slope["right"]


def test_ladders_cross_in_figure_window():
    a, b = P(1.995, 300.0), P(2.010, 300.0)
    la = dict(ebk_ladder(a, "left", -1.5, -2.5, with_n=True))
    lb = dict(ebk_ladder(b, "left", -1.5, -2.5, with_n=True))
    ra = dict(ebk_ladder(a, "right", -1.5, -2.5, with_n=True))
    rb = dict(ebk_ladder(b, "right", -1.5, -2.5, with_n=True))
    flips = [(n, m) for n in set(la) & set(lb) for m in set(ra) & set(rb)
             if (la[n] - ra[m]) * (lb[n] - rb[m]) < 0]
    assert len(flips) > 0


def test_singularity_types_at_g_star_and_twice():
    p1 = P(1.0)
    assert classify_singularity(critical_set(p1).eps_c2, p1) == "log"
    p2 = P(2.0)
    c = critical_set(p2)
    assert classify_singularity(c.eps_c1, p2) == "jump"
    assert classify_singularity(c.eps_c2, p2) == "log"
    found = locate_singularities(p2, -4.4, -3.9, 0.002)
    assert [k for _, k in found] == ["jump"]
    assert found[0][0] == pytest.approx(-4.1596, abs=2e-3)


def test_quartic_minimum_at_the_critical_coupling():
    cs = critical_set(ModelParams(80.0, 1.0, 0.0))
    assert [p.kind for p in cs.points] == ["global_min"]
    assert abs(cs.eps_gs + 1.0) < 1e-12
