"""Command-line front end: ``verify``, ``decompose``, ``sweep`` and
``oracle-compare``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .geometry import GraphDomainSpec, OmegaVectorField, build_coefficients
from .grid import HalfSpaceField, read_field_csv, trig_basis, write_field_csv
from .operators import build_bundle, default_strip_step, dtn_via_strip, fourier_symbol_oracle
from .pipeline import SweepSpec, decompose, make_solver, stability_sweep
from .samples import RandomField, curl_field, gradient_field
from .verification import _clean, closed_form_errors, cross_method_error, run_suite

__all__ = ["main", "build_parser"]

log = logging.getLogger("graphhelmholtz")

EXAMPLES = ("zero", "gradient", "curl", "ensemble")


def _write_json(path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _common(p):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")


def build_parser():
    parser = argparse.ArgumentParser(prog="graphhelmholtz", description=__doc__)
    _common(parser)
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser("verify", help="run the verification suite; writes report.json")
    _common(p)
    p = sub.add_parser("decompose", help="decompose a field CSV; writes u.csv, gradp.csv, summary.json")
    _common(p)
    p.add_argument("field", nargs="?", help="input field CSV on the configured grid")
    p.add_argument("--example", choices=EXAMPLES, help="generate a seeded input field instead (also written as field.csv)")
    p = sub.add_parser("sweep", help="stability sweep; writes sweep.csv and sweep.json")
    _common(p)
    p = sub.add_parser("oracle-compare", help="operator and solver oracle errors; writes compare.csv")
    _common(p)
    return parser


def _config(args):
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    return load_config(args.config, over)


def _context(cfg):
    return {"seed": cfg.seed, "grid": cfg.grid.spec(), "eta": cfg.domain.describe()}


# ---------------------------------------------------------------- commands


def cmd_verify(cfg, out):
    rep = run_suite(cfg.domain, cfg.grid, cfg.seed, refine=bool(cfg.data["verify"]["refine"]))
    (out / "report.json").write_text(rep.to_json() + "\n")
    text = rep.summary_text()
    (out / "summary.txt").write_text(text + "\n")
    print(text)
    return 0 if rep.all_passed else 1


def _example_field(cfg, kind):
    dom, g = cfg.domain, cfg.grid
    seed = cfg.ensemble_seeds()[0]
    if kind == "zero":
        return OmegaVectorField.zeros(dom, g)
    if kind == "gradient":
        return gradient_field(dom, g, seed=seed)
    if kind == "curl":
        return curl_field(dom, g, seed=seed)
    sup = (0.0625 * g.T, 0.4375 * g.T)
    return RandomField.draw(seed, g.d, int(cfg.data["ensemble"]["kmax"]), g.L, 2, sup).on_domain(dom, g)


def cmd_decompose(cfg, out, field_path=None, example=None):
    dom, g = cfg.domain, cfg.grid
    if (field_path is None) == (example is None):
        raise ConfigError("decompose needs exactly one of FIELD or --example")
    if example is not None:
        f = _example_field(cfg, example)
        write_field_csv(out / "field.csv", HalfSpaceField(g, f.values))
    else:
        try:
            F = read_field_csv(field_path, g, ncomp=g.d + 1)
        except OSError as exc:
            raise ConfigError(f"cannot read field: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"field does not match the configured grid: {exc}") from None
        f = OmegaVectorField(dom, g, F.values)
    s = cfg.data["solver"]
    solver = make_solver(dom, g, s["method"])
    res = decompose(dom, f, float(s["q"]), solver, float(s["taper_width"]))
    write_field_csv(out / "u.csv", HalfSpaceField(g, res.u.values))
    write_field_csv(out / "gradp.csv", HalfSpaceField(g, res.gradp.values))
    summ = res.summary()
    nf = res.normF
    summ["u_over_f"] = res.normU / nf if nf > 0 else 0.0
    summ["gradp_over_f"] = res.normGradP / nf if nf > 0 else 0.0
    summ["input"] = example if example is not None else "file"
    summ["method"] = s["method"]
    summ.update(_context(cfg))
    _write_json(out / "summary.json", summ)
    print(f"stabilityRatio {res.stabilityRatio:.6g}  |u|/|f| {summ['u_over_f']:.3e}  |grad p|/|f| {summ['gradp_over_f']:.3e}")
    return 0


SWEEP_COLUMNS = ("lip", "q", "N", "count", "ratio_max", "refine_drift", "spread", "ratio_min", "ratio_max_refined")


def cmd_sweep(cfg, out):
    g = cfg.grid
    sw = cfg.data["sweep"]
    spec = SweepSpec(
        lips=tuple(float(v) for v in sw["lips"]),
        qs=tuple(float(v) for v in sw["qs"]),
        seeds=tuple(cfg.ensemble_seeds()),
        d=g.d,
        N=g.N,
        L=g.L,
        T=g.T,
        count=g.nt,
        ratio=cfg.data["grid"]["ratio"],
        kmax=int(cfg.data["ensemble"]["kmax"]),
        refine=bool(sw["refine"]),
        rs=tuple(float(v) for v in cfg.data["solver"]["r"]),
    )
    rows = stability_sweep(spec)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([f"{_clean(r[c])!r}" if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])
    extra = [
        {"lip": r["lip"], "q": r["q"], "r": rx, "ratio_max": v}
        for r in rows
        for rx, v in r.pop("ratio_max_r", {}).items()
    ]
    doc = {"rows": rows, "seeds": list(spec.seeds)} | _context(cfg)
    if extra:
        doc["exploratory_r"] = extra
    _write_json(out / "sweep.json", doc)
    for r in rows:
        print(f"lip {r['lip']:g} q {r['q']:.4g}: ratio_max {r['ratio_max']:.6g} drift {r['refine_drift']:.2e} spread {r['spread']:.2e}")
    return 0


def _mode_vectors(grid, k):
    x = grid.axis
    kk = 2 * np.pi * k / grid.L
    return np.cos(kk * x), np.sin(kk * x), np.exp(1j * kk * x)


def _symbol_rows(grid, c):
    dom = GraphDomainSpec("flat", {}, L=grid.L) if c == 0 else GraphDomainSpec("slope", {"c": float(c)}, L=grid.L)
    B = build_bundle(build_coefficients(dom, grid))
    case = "flat" if c == 0 else f"slope_{c:g}"
    rows = []
    for k in range(1, grid.N // 2):
        xi = 2 * np.pi * k / grid.L
        mu, lam = fourier_symbol_oracle(c, xi)
        cs, sn, e = _mode_vectors(grid, k)
        el = max(np.linalg.norm(B.Lambda @ v - lam * v) for v in (cs, sn)) / (lam * np.linalg.norm(cs))
        ep = np.linalg.norm(B.P @ e - mu * e) / (abs(mu) * np.linalg.norm(e))
        rows.append((case, "lambda_symbol_error", k, el))
        rows.append((case, "poisson_symbol_error", k, ep))
    return rows


def cmd_oracle_compare(cfg, out):
    g = cfg.grid
    rows = []
    if g.d == 1:
        rows += _symbol_rows(g, 0.0)
        rows += _symbol_rows(g, float(cfg.data["oracle"]["slope"]))
    c = build_coefficients(cfg.domain, g)
    B = build_bundle(c)
    R = trig_basis(g, g.N // 4)
    ref = R.T @ B.Lambda @ R
    h0 = default_strip_step(g)
    gaps = []
    for level in range(int(cfg.data["oracle"]["strip_step_halvings"]) + 1):
        S = dtn_via_strip(c, strip_step=h0 / 2**level)
        gap = np.linalg.norm(R.T @ S @ R - ref, 2) / np.linalg.norm(ref, 2)
        gaps.append(gap)
        rows.append(("strip", "pencil_strip_gap", level, gap))
    for level in range(1, len(gaps)):
        rows.append(("strip", "gap_reduction", level, gaps[level - 1] / gaps[level]))
    if g.d == 1 and np.isclose(g.L, 2 * np.pi):
        for m, (ew, eg) in closed_form_errors(g).items():
            rows.append(("closed_form", f"{m}_w_error", 0, ew))
            rows.append(("closed_form", f"{m}_gradient_error", 0, eg))
    rows.append(("solver", "cross_method_gradient", 0, cross_method_error(cfg.domain, g, bundle=B)))
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("case", "quantity", "index", "value"))
        for case, q, i, v in rows:
            w.writerow((case, q, i, repr(_clean(float(v)))))
    worst = {}
    for case, q, _, v in rows:
        worst[(case, q)] = max(worst.get((case, q), 0.0), float(v))
    for (case, q), v in worst.items():
        print(f"{case:12s} {q:24s} max {v:.3e}")
    return 0


# -------------------------------------------------------------------- main


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.print_config:
            sys.stdout.write(cfg.to_toml())
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("error: a command is required", file=sys.stderr)
            return 2
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        if args.command == "decompose":
            return cmd_decompose(cfg, out, args.field, args.example)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        return cmd_oracle_compare(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
