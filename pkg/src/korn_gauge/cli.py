"""``korn-gauge`` command-line interface.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 numerical
failure. ``KORN_GAUGE_THREADS`` caps the number of worker threads used by
studies; results are always assembled in case order.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import constants as C
from . import fem, meshkit, polyfield, tensorcalc
from .errors import InvalidInput, KornGaugeError, MeshError, NumericalFailure

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidInput(message)


def _real(text: str) -> float:
    try:
        val = float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return val


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated integer list: {text!r}") from None


def _workers() -> int:
    raw = os.environ.get("KORN_GAUGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInput(f"KORN_GAUGE_THREADS must be an integer, got {raw!r}") from None


def _map_ordered(fn, cases):
    n = _workers()
    if n == 1 or len(cases) < 2:
        return [fn(c) for c in cases]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, cases))


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _dumps(doc) -> str:
    return json.dumps(C._jsonable(doc), sort_keys=True, indent=2)


def _write_csv(rows: list[dict], path: str | None, append: bool = False):
    if not rows:
        return
    fields = list(rows[0])
    if path is None:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(C._jsonable(rows))
        sys.stdout.write(buf.getvalue())
        return
    exists = append and os.path.exists(path) and os.path.getsize(path) > 0
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        if not exists:
            w.writeheader()
        w.writerows(C._jsonable(rows))


def _apply_bc(mesh, bc: str):
    if bc.startswith("mixed:"):
        return meshkit.label_boundary(mesh, bc.split(":", 1)[1])
    if bc not in ("normal", "tangential", "dirichlet", "keep"):
        raise InvalidInput(f"unknown boundary condition {bc!r}")
    return mesh if bc == "keep" else meshkit.label_boundary(mesh, bc)


def _load_mesh(args):
    if getattr(args, "mesh", None):
        return meshkit.load_json(args.mesh)
    if getattr(args, "shape", None):
        return meshkit.generate(args.shape, args.h)
    raise InvalidInput("give either --mesh FILE or --shape NAME")


# --- mesh ---------------------------------------------------------------------


def cmd_mesh(args) -> int:
    if args.mesh_cmd == "gen":
        mesh = meshkit.generate(args.shape, args.h)
        for _ in range(args.refine):
            mesh = meshkit.refine(mesh)
    else:
        tag_map = {}
        for item in args.tag or []:
            key, _, lab = item.partition("=")
            if not lab:
                raise InvalidInput(f"--tag expects TAG=LABEL, got {item!r}")
            tag_map[int(key) if key.isdigit() else key] = lab
        mesh = meshkit.import_gmsh22(args.file, tag_map)
    if args.labels:
        mesh = meshkit.label_boundary(mesh, args.labels)
    mesh.validate()
    meshkit.save_json(mesh, args.output)
    print(_dumps(mesh.summary()))
    return EXIT_OK


# --- constants ----------------------------------------------------------------


def _constant_reports(mesh, which: str, order: int, normal_mode: str, bc: str | None) -> list:
    disc = C.Discretization(mesh, order, normal_mode, bc)
    out = []
    if which in ("korn", "all"):
        out.append(C.korn_constant(disc))
    if which in ("korn-nobc", "all"):
        out.append(C.korn_constant_no_bc(mesh, order))
    if which in ("gaffney", "all"):
        out.extend(C.gaffney_ratios(disc))
    if which in ("grad-number", "all"):
        out.append(C.grad_number(mesh, order).report)
    return out


def cmd_constants(args) -> int:
    mesh = _apply_bc(_load_mesh(args), args.bc)
    order = {"p1": 1, "p2": 2}[args.space]
    reps = _constant_reports(mesh, args.which, order, args.normal_mode,
                            None if args.bc == "keep" else args.bc)
    docs = [r.to_dict(timings=not args.no_timings) for r in reps]
    _emit(_dumps(docs[0] if len(docs) == 1 else docs), args.output)
    if args.csv:
        _write_csv([r.csv_row() for r in reps], args.csv, append=True)
    return EXIT_OK


# --- studies ------------------------------------------------------------------


def _study_blowup(args):
    def case(c):
        n, mode = c
        mesh = meshkit.label_boundary(meshkit.ngon(n, args.h), "normal")
        r = C.korn_constant(mesh, 1, mode)
        return {"n": n, "normal_mode": mode, "value_sq": r.value_sq,
                "infinite": r.is_infinite,
                "bound_ok": (r.value_sq <= 2.0 + C.KORN_BOUND_SLACK) if mode == "facet" else None,
                "witness_rigid_distance": r.residuals.get("witness_rigid_distance")}
    cases = [(n, m) for n in args.ngons for m in ("facet", "exact-circle")]
    rows = _map_ordered(case, cases)
    ok = all((r["bound_ok"] if r["normal_mode"] == "facet" else r["infinite"]) for r in rows)
    return rows, {"all_facet_bounded": ok}


def _study_convex(args):
    rng = np.random.default_rng(args.seed)
    polys = [meshkit.random_convex_polygon(rng) for _ in range(args.count)]
    order = {"p1": 1, "p2": 2}[args.space]

    def case(c):
        k, P = c
        g = C.grad_number(meshkit.convex_polygon(P, args.h), order)
        return {"case": k, "n_vertices": len(P), "c_g": g.value,
                "deviation": abs(g.value - 0.5),
                "residual_rel": g.report.residuals["least_squares_rel"]}
    rows = _map_ordered(case, list(enumerate(polys)))
    return rows, {"mean_deviation": float(np.mean([r["deviation"] for r in rows]))}


def _study_refine(args):
    order = {"p1": 1, "p2": 2}[args.space]
    mesh = meshkit.label_boundary(meshkit.generate(args.shape, args.h), args.bc)
    meshes = [mesh]
    for _ in range(args.levels - 1):
        meshes.append(meshkit.refine(meshes[-1]))

    def case(m):
        r = C.korn_constant(m, order)
        return {"h": m.meta.get("h"), "n_red": r.n_red, "value_sq": r.value_sq}
    rows = _map_ordered(case, meshes)
    vals = [r["value_sq"] for r in rows]
    return rows, {"monotone": bool(all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))),
                  "bounded": bool(max(vals) <= 2.0 + C.KORN_BOUND_SLACK)}


def _verify_cases():
    meshes = [("square", 0.25), ("lshape", 0.25), ("ngon:12", 1 / 3), ("annulus", 0.125),
              ("cube", 0.5)]
    return [(s, h, lab, o) for s, h in meshes
            for lab in ("normal", "tangential", "west-t-east-n") for o in (1, 2)]


def _study_forms(args):
    def case(c):
        s, h, lab, o = c
        d = C.Discretization(meshkit.label_boundary(meshkit.generate(s, h), lab), o)
        defects = C.form_identity_defects(d)
        return {"shape": s, "h": h, "bc": lab, "space": f"p{o}", "n_red": defects["n_red"],
                "gaffney_defect": defects["gaffney"], "devsym_defect": defects["devsym"]}
    rows = _map_ordered(case, _verify_cases())
    worst = max(max(r["gaffney_defect"], r["devsym_defect"]) for r in rows)
    return rows, {"max_defect": worst, "ok": bool(worst <= 1e-10)}


def _study_identities(args):
    res = _verification_suite(args.trials, args.seed, False)
    rows = [{"check": k, "max_residual": v["max_residual"], "ok": v["ok"]}
            for k, v in res["checks"].items()]
    return rows, {"ok": res["ok"]}


def _study_dv(args):
    order = {"p1": 1, "p2": 2}[args.space]
    mesh = meshkit.label_boundary(meshkit.generate(args.shape, args.h), "normal")
    disc = C.Discretization(mesh, order)
    kn = C.korn_constant(disc)
    k = C.korn_constant_no_bc(mesh, order)
    sup, _ = C.gaffney_ratios(disc)
    g = C.grad_number(mesh, order)
    b = C.dv_bound_check(kn, k, sup, g, mesh.dim)
    row = {"c_kn_sq": kn.value_sq, "c_k_sq": k.value_sq, "c_mn_sq_proxy": sup.value_sq,
           "c_g": g.value, **{k_: v for k_, v in b.to_dict().items()}}
    return [row], {"holds": b.holds}


_STUDIES = {
    "blowup": _study_blowup,
    "convex-sweep": _study_convex,
    "refine-convergence": _study_refine,
    "verify-forms": _study_forms,
    "verify-identities": _study_identities,
    "dv-bound": _study_dv,
}


def cmd_study(args) -> int:
    rows, summary = _STUDIES[args.kind](args)
    spec = {k: v for k, v in vars(args).items()
            if k not in ("func", "command", "out_csv", "out_json")}
    _write_csv(rows, args.out_csv)
    if args.out_json:
        _emit(_dumps({"study": spec, "rows": rows, "summary": summary}), args.out_json)
    print(_dumps(summary), file=sys.stderr if args.out_csv is None else sys.stdout)
    return EXIT_OK


# --- verification -------------------------------------------------------------


def _check(name, residuals, tol, out):
    r = float(np.max(residuals)) if len(residuals) else 0.0
    out[name] = {"max_residual": r, "tolerance": tol, "ok": bool(r <= tol)}


def _verification_suite(trials: int, seed: int, inject_fault: bool) -> dict:
    """Run the pointwise, polynomial and matrix identity checks.

    Every residual is relative. ``inject_fault`` perturbs the assembled
    gradient form, which must make the matrix checks fail.
    """
    rng = np.random.default_rng(seed)
    checks: dict = {}
    pw = []
    for t in range(trials):
        n = (2, 3, 4)[t % 3]
        r = tensorcalc.check_pointwise_identities(rng.standard_normal((n, n)))
        pw.append(r.max_abs / r.scale)
    _check("pointwise", pw, 1e-12, checks)

    gris, gaff = [], []
    n_poly = max(1, min(trials, 20))
    squares = {"square": meshkit.square(1.0), "cube": meshkit.cube(1.0)}
    for t in range(n_poly):
        shape = ("square", "cube")[t % 2]
        mesh = squares[shape]
        v = polyfield.PolyVecField.random(mesh.dim, 3, rng)
        g = polyfield.verify_grisvard(v, mesh)
        gris.append(g.max_abs / g.scale)
        bc = ("normal", "tangential")[(t // 2) % 2]
        w = polyfield.bc_field_family(shape, bc, int(rng.integers(2 ** 31)), degree=4)
        e = polyfield.energy_integrals(w, mesh)
        gaff.append(abs(e.grad2 - e.rot2 - e.div2) / (1.0 + e.grad2))
    _check("integration_by_parts", gris, 1e-10, checks)
    _check("gaffney_polynomial", gaff, 1e-10, checks)

    mat, red = [], []
    for shape, h, lab in (("square", 0.25, "normal"), ("lshape", 0.25, "west-t-east-n"),
                          ("cube", 0.5, "tangential")):
        mesh = meshkit.label_boundary(meshkit.generate(shape, h), lab)
        for order in (1, 2):
            disc = C.Discretization(mesh, order)
            GG = disc.form("GradGrad")
            if inject_fault:
                k = GG.matrix.shape[0] // 2
                pert = GG.matrix.tolil()
                pert[k, k] = pert[k, k] * (1.0 + 1e-6) + 1e-6
                disc._forms["GradGrad"] = fem.FormMatrix("GradGrad", pert.tocsr(), disc.space)
                GG = disc._forms["GradGrad"]
            SS, RR, DS, DD = (disc.form(k).matrix for k in ("SymSym", "RotRot", "DevSymDevSym", "DivDiv"))
            scale = abs(GG.matrix).max()
            n = mesh.dim
            mat.append(abs(GG.matrix - SS - 0.5 * RR).max() / scale)
            mat.append(abs(SS - DS - DD / n).max() / scale)
            d = C.form_identity_defects(disc)
            red.append(max(d["gaffney"], d["devsym"]))
    _check("matrix_identities", mat, 1e-12, checks)
    _check("reduced_identities", red, 1e-10, checks)
    failures = [k for k, v in checks.items() if not v["ok"]]
    return {"ok": not failures, "failures": failures, "checks": checks,
            "trials": trials, "seed": seed, "inject_fault": inject_fault}


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise InvalidInput("--trials must be positive")
    res = _verification_suite(args.trials, args.seed, args.inject_fault)
    _emit(_dumps(res), args.json)
    worst = max(v["max_residual"] for v in res["checks"].values())
    status = "PASS" if res["ok"] else "FAIL"
    print(f"{status} max relative residual {worst:.3e}", file=sys.stderr)
    return EXIT_OK if res["ok"] else EXIT_VERIFY


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="korn-gauge", description="Korn and Gaffney constants by finite elements.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    pm = sub.add_parser("mesh", help="generate or import meshes")
    msub = pm.add_subparsers(dest="mesh_cmd", parser_class=_Parser)
    msub.required = True
    g = msub.add_parser("gen", help="generate a mesh")
    g.add_argument("--shape", required=True)
    g.add_argument("--h", type=_real, default=0.25)
    g.add_argument("--refine", type=int, default=0)
    g.add_argument("--labels", help="boundary labeling rule")
    g.add_argument("-o", "--output", required=True)
    im = msub.add_parser("import-gmsh", help="import a Gmsh 2.2 ASCII file")
    im.add_argument("file")
    im.add_argument("--tag", action="append", help="PHYSICAL=LABEL, repeatable")
    im.add_argument("--labels", help="boundary labeling rule applied after import")
    im.add_argument("-o", "--output", required=True)
    pm.set_defaults(func=cmd_mesh)

    pc = sub.add_parser("constants", help="compute constants")
    pc.add_argument("--mesh")
    pc.add_argument("--shape")
    pc.add_argument("--h", type=_real, default=0.25)
    pc.add_argument("--bc", default="normal",
                    help="normal | tangential | dirichlet | keep | mixed:<rule>")
    pc.add_argument("--space", choices=("p1", "p2"), default="p1")
    pc.add_argument("--normal-mode", choices=fem.NORMAL_MODES, default="facet")
    pc.add_argument("--which", choices=("korn", "korn-nobc", "gaffney", "grad-number", "all"),
                    default="korn")
    pc.add_argument("-o", "--output")
    pc.add_argument("--csv", help="append one summary row per report")
    pc.add_argument("--no-timings", action="store_true")
    pc.set_defaults(func=cmd_constants)

    ps = sub.add_parser("study", help="run a parameter study")
    ps.add_argument("kind", choices=sorted(_STUDIES))
    ps.add_argument("--ngons", type=_int_list, default=[8, 12, 16, 24, 32, 48, 64])
    ps.add_argument("--h", type=_real, default=None)
    ps.add_argument("--shape", default="square")
    ps.add_argument("--bc", default="normal")
    ps.add_argument("--space", choices=("p1", "p2"), default=None)
    ps.add_argument("--levels", type=int, default=4)
    ps.add_argument("--count", type=int, default=10)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--trials", type=int, default=100)
    ps.add_argument("--out-csv")
    ps.add_argument("--out-json")
    ps.set_defaults(func=cmd_study)

    pv = sub.add_parser("verify", help="run the identity verification suite")
    pv.add_argument("--trials", type=int, default=100)
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--inject-fault", action="store_true")
    pv.add_argument("--json", help="write the machine-readable report here")
    pv.set_defaults(func=cmd_verify)
    return p


_STUDY_DEFAULTS = {
    "blowup": {"h": 0.25, "space": "p1"},
    "convex-sweep": {"h": 1 / 32, "space": "p2"},
    "refine-convergence": {"h": 0.5, "space": "p1"},
    "dv-bound": {"h": 0.25, "space": "p2"},
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "study":
            for key, val in _STUDY_DEFAULTS.get(args.kind, {}).items():
                if getattr(args, key) is None:
                    setattr(args, key, val)
            if args.h is None:
                args.h = 0.25
            if args.space is None:
                args.space = "p1"
        return args.func(args)
    except NumericalFailure as exc:
        print(f"korn-gauge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KornGaugeError, OSError) as exc:
        kind = "mesh error" if isinstance(exc, MeshError) else "invalid input"
        print(f"korn-gauge: {kind}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
