"""Acceptance criteria at the reference configuration (d=1, L=2 pi, N=64,
129 t-nodes, T=12).  Each test prints one PASS/FAIL line; the session
summary repeats them."""

import math
import subprocess
import sys

import numpy as np
import pytest

from graphhelmholtz.geometry import GraphDomainSpec, build_coefficients
from graphhelmholtz.grid import make_grid
from graphhelmholtz.operators import build_bundle
from graphhelmholtz.pipeline import (
    SweepSpec,
    decompose,
    idempotence_check,
    make_solver,
    stability_sweep,
    weak_divergence_residual,
)
from graphhelmholtz.samples import RandomField, curl_field, gradient_field, potential_battery, random_trig_vectors
from graphhelmholtz.semigroup import SemigroupEvaluator
from graphhelmholtz.verification import (
    _refined_grid,
    closed_form_errors,
    coercivity_constants,
    coercivity_floor,
    cross_method_error,
    maximal_regularity,
    semigroup_ratios,
)

L = 2 * math.pi


def _dom(kind, **kw):
    lip = kw.pop("lip", None)
    d = kw.pop("d", 1)
    return GraphDomainSpec(kind, kw, L=L, lip=lip, d=d)


def _bundle(dom, grid):
    return build_bundle(build_coefficients(dom, grid))


def _DtD(B):
    return np.einsum("jnk,jnm->km", B.D, B.D)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


FLAT = _dom("flat")
SINE = _dom("sine", alpha=0.5)
LIP2 = _dom("sine", lip=2.0)
LIP5 = _dom("sine", lip=5.0)


def _samples_domain():
    x = np.arange(64) * L / 64
    vals = 0.3 * np.sin(x) + 0.2 * np.cos(2 * x) - 0.1 * np.sin(3 * x + 0.4)
    return GraphDomainSpec("samples", {"values": vals.tolist()}, L=L)


CATALOG = {
    "flat": FLAT,
    "slope 0.5": _dom("slope", c=0.5),
    "slope 2": _dom("slope", c=2.0),
    "slope 5": _dom("slope", c=5.0),
    "sine alpha 0.5": SINE,
    "sine lip 2": LIP2,
    "sine lip 5": LIP5,
    "samples": _samples_domain(),
}


@pytest.fixture(scope="module")
def refined_grid(ref_grid):
    return _refined_grid(ref_grid)


# ------------------------------------------------------------------ 1


def test_criterion_01_flat_spectral_oracle(criterion, ref_grid):
    with criterion(1, "flat boundary spectral oracle") as c:
        g = ref_grid
        B = _bundle(FLAT, g)
        ks = np.arange(1, g.N // 2)
        expected = np.sort(np.concatenate([2 * np.pi * ks / L] * 2))
        ev = np.linalg.eigvalsh(B.Lambda)
        # two zero eigenvalues: the constant mode and the dropped Nyquist mode
        c.check("|zero eigenvalues| / ||Lambda||", np.abs(ev[:2]).max() / np.abs(ev).max(), 1e-10)
        c.check("eigenvalues vs |2 pi k / L|, relative", np.max(np.abs(ev[2:] - expected) / expected), 1e-10)
        worst = 0.0
        for k in ks:
            xi = 2 * np.pi * k / L
            for v in (np.cos(xi * g.axis), np.sin(xi * g.axis)):
                worst = max(worst, np.linalg.norm(B.Lambda @ v - xi * v) / (xi * np.linalg.norm(v)))
        c.check("per-mode Lambda multiplier error", worst, 1e-10)
        c.check("||P - Lambda|| / ||Lambda||", _rel(B.P, B.Lambda), 1e-10)


# ------------------------------------------------------------------ 2


def test_criterion_02_constant_slope_oracle(criterion, ref_grid):
    with criterion(2, "constant-slope symbol oracle") as c:
        g = ref_grid
        for slope in (0.5, 2.0, 5.0):
            B = _bundle(_dom("slope", c=slope), g)
            el = ep = 0.0
            for k in range(1, g.N // 2):
                for xi in (2 * np.pi * k / L, -2 * np.pi * k / L):
                    e = np.exp(1j * xi * g.axis)
                    lam = abs(xi)
                    mu = (abs(xi) - 1j * slope * xi) / (1 + slope**2)
                    el = max(el, np.linalg.norm(B.Lambda @ e - lam * e) / (lam * np.linalg.norm(e)))
                    ep = max(ep, np.linalg.norm(B.P @ e - mu * e) / (abs(mu) * np.linalg.norm(e)))
            c.check(f"c={slope:g}: Lambda multiplier vs |xi|", el, 1e-8)
            c.check(f"c={slope:g}: P multiplier vs (|xi| - i c xi)/(1+c^2)", ep, 1e-8)


# ------------------------------------------------------------------ 3


def test_criterion_03_exact_factorization(criterion, ref_grid):
    with criterion(3, "exact discrete factorization identities") as c:
        for name, dom in (("0.5 sin", SINE), ("lip 2", LIP2)):
            B = _bundle(dom, ref_grid)
            Mb, Ma = np.diag(B.b), np.diag(B.a[0])
            D = B.D[0]
            P, Q, Lam = B.P, B.Q, B.Lambda
            DtD = D.T @ D
            c.check(f"{name}: Lambda = M_b P - M_a D", _rel(Mb @ P - Ma @ D, Lam), 1e-8)
            c.check(f"{name}: Q = M_1/b P^T M_b", _rel(np.diag(1 / B.b) @ P.T @ Mb, Q), 1e-8)
            c.check(f"{name}: M_b Q P = D^T D", _rel(Mb @ Q @ P, DtD), 1e-8)
            c.check(f"{name}: M_b (P - Q) = M_a D + D M_a", _rel(Mb @ (P - Q), Ma @ D + D @ Ma), 1e-8)


# ------------------------------------------------------------------ 4


def test_criterion_04_rellich(criterion, ref_grid):
    with criterion(4, "Rellich identity over the catalog") as c:
        cases = dict(CATALOG)
        for name, dom in cases.items():
            B = _bundle(dom, ref_grid)
            DtD = _DtD(B)
            c.check(f"{name}: ||P^T M_b P - D^T D|| / ||D^T D||", _rel(B.P.T @ (B.b[:, None] * B.P), DtD), 1e-8)
        g2 = make_grid(2, 12, L, 6.0, 17, 1.05)
        B = _bundle(_dom("sine", alpha=0.3, d=2), g2)
        c.check("d=2 sine: ||P^T M_b P - D^T D|| / ||D^T D||", _rel(B.P.T @ (B.b[:, None] * B.P), _DtD(B)), 1e-8)


# ------------------------------------------------------------------ 5


def test_criterion_05_coercivity(criterion, ref_grid):
    with criterion(5, "coercivity bounds") as c:
        g2 = make_grid(1, 128, L, ref_grid.T, ref_grid.nt, 1.03)
        for name in ("flat", "sine alpha 0.5", "sine lip 2", "sine lip 5", "slope 2"):
            dom = CATALOG[name]
            B = _bundle(dom, ref_grid)
            V = random_trig_vectors(ref_grid, 100, seed=0)
            nD = np.sum(B.gradient(V) ** 2, axis=(0, 1))
            LV = B.Lambda @ V
            ratio = np.sum(LV**2 / B.b[:, None], axis=0) / nD
            c.check(f"{name}: max ||M_1/sqrt(b) Lambda phi||^2 / ||D phi||^2 over 100 vectors", ratio.max(), 2 * (1 + 1e-8))
            c1, _ = coercivity_constants(B)
            c1_fine, _ = coercivity_constants(_bundle(dom, g2))
            sampled = np.sqrt(np.min(np.sum(LV**2, axis=0) / nD))
            c.check(f"{name}: C1 (exact, N=64)", c1, 1e-12, ">=")
            c.check(f"{name}: C1 over the ellipticity floor {coercivity_floor(dom.lip):.4g}", c1 / coercivity_floor(dom.lip), 1 - 1e-10, ">=")
            c.check(f"{name}: sampled min ratio not below exact C1", sampled - c1, -1e-12, ">=")
            c.check(f"{name}: C1 drift under N-doubling", abs(c1_fine - c1) / c1, 0.05)


# ------------------------------------------------------------------ 6


def test_criterion_06_semigroup_bounds(criterion, ref_grid, refined_grid):
    with criterion(6, "semigroup bounds") as c:
        for name, dom in (("flat", FLAT), ("0.5 sin", SINE), ("lip 2", LIP2)):
            r = semigroup_ratios(_bundle(dom, ref_grid))
            rf = semigroup_ratios(_bundle(dom, refined_grid), kmax=ref_grid.N // 6)
            c.check(f"{name}: e^-t Lambda L2 ratio", r["l2"], 1 + 1e-10)
            c.check(f"{name}: e^-t Lambda L4 ratio", r["l4"], 1.05)
            c.check(f"{name}: e^-t Lambda Linf ratio", r["linf"], 1.05)
            c.check(f"{name}: e^-t P max principle ratio", r["pmax"], 1.05)
            for key, label in (("l4", "L4"), ("linf", "Linf"), ("pmax", "max principle")):
                ec, ef = r[key] - 1, rf[key] - 1
                c.check(f"{name}: {label} refined excess minus half the coarse excess", ef - 0.5 * max(ec, 0.0), 1e-10)
            c.check(f"{name}: analyticity constant sup t||P e^-tP phi||/||phi||", r["analyticity"], 1e6)
            drift = abs(rf["analyticity"] - r["analyticity"]) / r["analyticity"]
            c.check(f"{name}: analyticity constant drift under refinement", drift, 0.05)
            c.check(f"{name}: semigroup property", r["semigroup_property"], 1e-8)


# ------------------------------------------------------------------ 7


def test_criterion_07_maximal_regularity(criterion, ref_grid, refined_grid):
    with criterion(7, "maximal regularity") as c:
        B = _bundle(FLAT, ref_grid)
        evP = SemigroupEvaluator(B.P)
        rP, rQ = maximal_regularity(B, evP, SemigroupEvaluator.adjoint_of(evP, B.b), 2.0)
        c.check("flat: ||P Psi_P[phi]|| / ||phi|| in L2L2", rP, 1 + 1e-6)
        c.check("flat: ||Q Psi_Q[phi]|| / ||phi|| in L2L2", rQ, 1 + 1e-6)
        for name, dom in (("0.5 sin", SINE), ("lip 2", LIP2), ("lip 5", LIP5)):
            B, B2 = _bundle(dom, ref_grid), _bundle(dom, refined_grid)
            ev, ev2 = SemigroupEvaluator(B.P), SemigroupEvaluator(B2.P)
            evQ, evQ2 = SemigroupEvaluator.adjoint_of(ev, B.b), SemigroupEvaluator.adjoint_of(ev2, B2.b)
            for q in (4.0 / 3.0, 2.0, 4.0):
                p1, q1 = maximal_regularity(B, ev, evQ, q)
                p2, q2 = maximal_regularity(B2, ev2, evQ2, q)
                c.check(f"{name} q={q:.4g}: P ratio finite", p1, 1e6)
                c.check(f"{name} q={q:.4g}: P ratio drift", abs(p2 - p1) / p1, 0.05)
                c.check(f"{name} q={q:.4g}: Q ratio finite", q1, 1e6)
                c.check(f"{name} q={q:.4g}: Q ratio drift", abs(q2 - q1) / q1, 0.05)


# ------------------------------------------------------------------ 8


def test_criterion_08_mild_solution(criterion, ref_grid, refined_grid):
    with criterion(8, "mild-solution formula") as c:
        for g, label in ((ref_grid, "count 129"), (make_grid(1, 64, L, 12.0, 257, math.sqrt(1.03)), "count 257")):
            for m, (ew, eg) in closed_form_errors(g).items():
                c.check(f"closed form, {m} solver, {label}: w error", ew, 1e-3)
                c.check(f"closed form, {m} solver, {label}: gradient error", eg, 1e-3)
        e1 = cross_method_error(SINE, ref_grid)
        e2 = cross_method_error(SINE, refined_grid)
        c.check("0.5 sin: formula vs direct gradient error", e1, 1e-2)
        c.check("0.5 sin: refinement gain of the gap", e1 / e2, 2.0, ">=")


# ------------------------------------------------------------------ 9


def test_criterion_09_helmholtz_decomposition(criterion, ref_grid, refined_grid):
    with criterion(9, "Helmholtz decomposition certificates") as c:
        sup = (0.0625 * ref_grid.T, 0.4375 * ref_grid.T)
        for name, dom in (("flat", FLAT), ("0.5 sin", SINE), ("lip 2", LIP2)):
            solver = make_solver(dom, ref_grid)
            for seed in (0, 1):
                r = decompose(dom, gradient_field(dom, ref_grid, seed=seed), 2.0, solver, battery=[])
                c.check(f"{name} seed {seed}: gradient input ||u|| / ||f||", r.normU / r.normF, 1e-2)
                r = decompose(dom, curl_field(dom, ref_grid, seed=seed), 2.0, solver, battery=[])
                c.check(f"{name} seed {seed}: curl input ||grad p|| / ||f||", r.normGradP / r.normF, 1e-2)
            f = RandomField.draw(0, 1, 4, L, 2, sup).on_domain(dom, ref_grid)
            res = decompose(dom, f, 2.0, solver, battery=potential_battery(ref_grid))
            c.check(f"{name}: Pythagoras defect at q=2", res.pythagorasDefect, 1e-6)
            c.check(f"{name}: weak-divergence residual", res.divResidual, 1e-2)
            f2 = RandomField.draw(0, 1, 4, L, 2, sup).on_domain(dom, refined_grid)
            res2 = decompose(dom, f2, 2.0, make_solver(dom, refined_grid), battery=potential_battery(refined_grid))
            c.check(f"{name}: weak-divergence residual refined / reference", res2.divResidual / res.divResidual, 1.0)
            idem = idempotence_check(dom, f, 2.0, solver)
            c.check(f"{name}: idempotence, gradient part of u", idem["u_gradient_part"], 2e-2)
            c.check(f"{name}: idempotence, solenoidal part of grad p", idem["gradp_solenoidal_part"], 2e-2)
            c.check(f"{name}: battery detects a gradient field", weak_divergence_residual(
                gradient_field(dom, ref_grid, seed=3), potential_battery(ref_grid)), 0.1, ">=")


# ------------------------------------------------------------------ 10


def test_criterion_10_stability_sweep(criterion):
    with criterion(10, "stability sweep") as c:
        rows = stability_sweep(SweepSpec())
        c.note(f"{'lip':>5} {'q':>6} {'ratio_max':>10} {'spread':>8} {'drift':>9}")
        for r in rows:
            c.note(f"{r['lip']:5g} {r['q']:6.4g} {r['ratio_max']:10.6f} {r['spread']:8.4f} {r['refine_drift']:9.2e}")
        assert len(rows) == 12
        for r in rows:
            cell = f"lip {r['lip']:g} q {r['q']:.4g}"
            c.check(f"{cell}: ratio finite", r["ratio_max"], 1e6)
            c.check(f"{cell}: spread across 8 seeds", r["spread"], 0.2)
            c.check(f"{cell}: refinement drift", r["refine_drift"], 0.05)


# ------------------------------------------------------------------ 11


def _cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "graphhelmholtz.cli", *args], cwd=cwd, capture_output=True, text=True, check=False
    )


def test_criterion_11_determinism(criterion, tmp_path):
    with criterion(11, "byte-identical reports for identical config and seed") as c:
        cfg = tmp_path / "run.toml"
        cfg.write_text(
            '[eta]\nkind = "sine"\nparams = {alpha = 0.5}\n\n[verify]\nrefine = false\n\n'
            "[sweep]\nlips = [2.0]\nqs = [2.0]\nrefine = false\n\n[ensemble]\nsize = 2\n"
        )
        files = {
            "verify": ("report.json", "summary.txt"),
            "decompose": ("summary.json", "u.csv", "gradp.csv"),
            "sweep": ("sweep.csv", "sweep.json"),
            "oracle-compare": ("compare.csv",),
        }
        for cmd, outs in files.items():
            extra = ["--example", "ensemble"] if cmd == "decompose" else []
            blobs = []
            for run in ("a", "b"):
                out = tmp_path / f"{cmd}-{run}"
                p = _cli([cmd, "--config", str(cfg), "--seed", "12345", "--out", str(out), *extra], tmp_path)
                c.check(f"{cmd} run {run}: exit status", p.returncode, 0)
                blobs.append([(out / f).read_bytes() for f in outs])
            for f, x, y in zip(outs, *blobs):
                c.check(f"{cmd}: {f} differing bytes", 0 if x == y else 1, 0)


# ------------------------------------------------------------ known limit


@pytest.mark.xfail(strict=True, reason="second-order exponential integrator: O(h^2) error ~3e-4 at 129 nodes")
def test_duhamel_resonant_scalar_to_1e8(ref_grid):
    t = ref_grid.t
    ev = SemigroupEvaluator(np.array([[1.0]]))
    got = ev.duhamel(np.exp(-t)[:, None], t)[:, 0]
    exact = t * np.exp(-t)
    assert np.max(np.abs(got - exact)) / np.max(np.abs(exact)) <= 1e-8
