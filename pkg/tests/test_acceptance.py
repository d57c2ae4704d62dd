"""Acceptance suite at reference problem sizes.

Each test runs one named verification suite with its default (reference)
arguments, records a one-line verdict for the terminal summary and then
asserts it. Wall-clock budgets are reported for every criterion; they are
only asserted on machines with at least four cores, the hardware they were
set for.
"""

import os
import time

import pytest

from medflow import suites

ENFORCE_BUDGET = (os.cpu_count() or 1) >= 4


def _fmt_rows(rows):
    return "; ".join(f"{r.parameter}: {r.measured:.5g} vs {r.predicted:.5g}"
                     f"{'' if r.passed else ' (fail)'}" for r in rows)


def _check(acceptance, number, name, func, budget=None, **kwargs):
    t0 = time.perf_counter()
    rows = func(**kwargs)
    elapsed = time.perf_counter() - t0
    passed = all(r.passed for r in rows)
    timing = f"{elapsed:.1f}s" + (f" (budget {budget:g}s)" if budget else "")
    acceptance((f"ACCEPTANCE {number:2d} {name:<12}", passed, f"[{timing}] {_fmt_rows(rows)}"))
    assert passed, _fmt_rows(rows)
    if budget is not None and ENFORCE_BUDGET:
        assert elapsed < budget, f"{name} took {elapsed:.1f}s, budget {budget:g}s"
    return rows


def test_criterion_01_consistency(acceptance):
    _check(acceptance, 1, "consistency", suites.consistency, budget=60)


def test_criterion_02_oberman(acceptance):
    _check(acceptance, 2, "oberman", suites.oberman, budget=30)


def test_criterion_03_circle_tracking(acceptance):
    _check(acceptance, 3, "tracking", suites.circle_tracking, budget=300)


def test_criterion_04_identities(acceptance):
    _check(acceptance, 4, "identities", suites.identities)


def test_criterion_05_median_oracles(acceptance):
    _check(acceptance, 5, "medians", suites.median_oracles)


def test_criterion_06_dkw(acceptance):
    _check(acceptance, 6, "dkw", suites.dkw, budget=30)


def test_criterion_07_dirichlet(acceptance):
    _check(acceptance, 7, "dirichlet", suites.dirichlet_limit, budget=180)


def test_criterion_08_heat_decay(acceptance):
    _check(acceptance, 8, "heat", suites.heat_decay, budget=300)


def test_criterion_09_tv_limit(acceptance):
    _check(acceptance, 9, "tv", suites.tv_limit, budget=120)


def test_criterion_10_young_angle(acceptance):
    _check(acceptance, 10, "young", suites.young_angle, budget=3 * 300)


def test_criterion_11_tl2(acceptance):
    _check(acceptance, 11, "tl2", suites.tl2_exactness)


def test_criterion_12_singular_pair(acceptance):
    _check(acceptance, 12, "singular", suites.singular_probe)


def test_singular_ball_isotropic_field(acceptance):
    # Supplement: at the minimum of |x|**2 the ball median leaves c_A * F.
    rows = suites.singular_probe(field="|x|^2")
    ball = rows[0]
    acceptance(("ACCEPTANCE 12+ singular |x|^2 ball", ball.passed, _fmt_rows([ball])))
    assert ball.passed
