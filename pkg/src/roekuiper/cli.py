"""Command line entry point ``roekuiper``.

Subcommands::

    space gen | validate
    op gen | check | retract
    classify ciubb | piubs | folner | paradoxical
    contract
    obstruct index | winding | trace | loop

Exit codes: 0 ok, 1 violation, 2 inconclusive (or IO error), 64 usage.
Reports are canonical JSON, written to ``--out``, else to ``$REPORT_DIR``,
else to standard output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from fractions import Fraction

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import (
    BoundaryClipped,
    DisplacementExceeded,
    LemmaViolated,
    NotBijective,
    NotCiubb,
    PropagationBoundViolated,
    RoeError,
    StageFailed,
)
from .metric_space import SpaceSpec, Window, label_to_json, realize_window, validate_metric
from .report import make_report, write_atomic, dump
from .roe_operator import (
    SparseOperator,
    compose,
    random_band,
    random_block_unitary,
    shift_operator,
    unitary_retraction,
)

EXIT = {"ok": 0, "violation": 1, "inconclusive": 2}
USAGE = 64

# commands whose output is an input file format rather than a report
RAW_OUTPUT = ("space gen", "op gen", "obstruct loop")

# errors meaning "the checked property fails"; every other RoeError is inconclusive
VIOLATIONS = (NotCiubb, LemmaViolated, PropagationBoundViolated, DisplacementExceeded,
              NotBijective)

KIND_ALIASES = {
    "explicit": "ExplicitFinite", "bounded": "BoundedInfinite", "z-line": "IntegerLine",
    "line": "IntegerLine", "lattice": "IntegerLattice", "z2": "IntegerLattice",
    "expblocks": "ExponentialBlocks", "fibered": "FiberedLine", "disjoint": "DisjointPower",
    "sparse": "SparseAugmented",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE)


# ---------------------------------------------------------------------------
# argument helpers

def _kind(name: str) -> str:
    kind = KIND_ALIASES.get(name.lower(), name)
    if kind not in KIND_ALIASES.values():
        raise UsageError(f"unknown space kind {name!r}")
    return kind


def build_space(args) -> Window:
    """Window from ``space gen`` style flags."""
    kind = _kind(args.spec)
    n = args.n
    if kind == "ExplicitFinite":
        raise UsageError("ExplicitFinite windows are read from JSON, not generated")
    if kind == "BoundedInfinite":
        return realize_window(SpaceSpec.bounded_infinite(Fraction(args.diameter)),
                              {"n": n if n is not None else 16})
    if kind == "IntegerLine":
        return realize_window(SpaceSpec.integer_line(), {"n": n if n is not None else 32})
    if kind == "IntegerLattice":
        return realize_window(SpaceSpec.integer_lattice(args.dim),
                              {"n": n if n is not None else 5})
    if kind == "ExponentialBlocks":
        return realize_window(SpaceSpec.exponential_blocks(),
                              {"blocks": args.blocks if args.blocks is not None else 4})
    if kind == "FiberedLine":
        return realize_window(SpaceSpec.fibered_line(),
                              {"n": n if n is not None else 12,
                               "fibers": args.fibers if args.fibers is not None else 11})
    base = SpaceSpec.integer_line()
    bext = {"n": n if n is not None else 8}
    if kind == "DisjointPower":
        return realize_window(SpaceSpec.disjoint_power(base, args.copies), {"base": bext})
    return realize_window(SpaceSpec.sparse_augmented(base, Fraction(args.spacing)),
                          {"base": bext, "tail": args.tail})


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_window(path: str) -> Window:
    obj = _load_json(path)
    if "spec" not in obj and "kind" in obj:
        return realize_window(SpaceSpec.from_json(obj), {})
    return Window.from_json(obj)


def _load_op(path: str, window: Window | None = None) -> SparseOperator:
    return SparseOperator.from_json(_load_json(path), window)


def _tolerances(args) -> Tolerances:
    kw = {}
    for f in fields(Tolerances):
        v = getattr(args, f"tol_{f.name}", None)
        if v is not None:
            kw[f.name] = v
    return DEFAULT.override(**kw)


def _window_ref(w: Window) -> dict:
    return {"spec": w.spec.to_json(), "extent": w.extent}


# ---------------------------------------------------------------------------
# command implementations: each returns (verdict, result, witnesses)

def cmd_space_gen(args, tol):
    w = build_space(args)
    return "ok", w.to_json(), None


def cmd_space_validate(args, tol):
    w = _load_window(args.file)
    rep = validate_metric(w)
    res = {"points": w.n, "kind": w.spec.kind, "ok": rep.ok}
    if rep.ok:
        return "ok", res, None
    return "violation", res, {"violations": [[str(x) for x in v] for v in rep.violations]}


def cmd_op_gen(args, tol):
    w = _load_window(args.space)
    rng = np.random.default_rng(args.seed)
    p = Fraction(args.prop)
    if args.kind == "shift":
        op = shift_operator(w, int(p) if p >= 1 else 1)
    elif args.kind == "band-random":
        op = random_band(w, p, rng, diag_shift=args.diag_shift)
    else:
        op = random_block_unitary(w, p, rng, layers=args.layers)
    return "ok", op.to_json(_window_ref(w)), None


def cmd_op_check(args, tol):
    F = _load_op(args.op)
    G = _load_op(args.other, F.window) if args.other else F
    res = {"propagation": F.propagation, "nnz": F.nnz}
    bad = []
    if args.subadditivity:
        pairs = [(F, G)]
        rng = np.random.default_rng(args.seed)
        for _ in range(args.trials):
            p1, p2 = (Fraction(int(x)) for x in rng.integers(0, 4, size=2))
            pairs.append((random_band(F.window, p1, rng), random_band(F.window, p2, rng)))
        for k, (A, B) in enumerate(pairs):
            try:
                C = compose(A, B)
                res.setdefault("products", []).append([A.propagation, B.propagation,
                                                       C.propagation])
            except PropagationBoundViolated as exc:
                bad.append({"pair": k, "witness": str(exc.witness)})
        res["pairs"] = len(pairs)
    if bad:
        return "violation", res, {"subadditivity": bad}
    return "ok", res, None


def cmd_op_retract(args, tol):
    F = _load_op(args.op)
    U = unitary_retraction(F, args.t, tol)
    m = U.matrix
    res = {"t": args.t, "unitarity_residual": float(np.abs(m @ m.conj().T - np.eye(F.n)).max()),
           "operator": U.to_json(_window_ref(F.window))}
    return "ok", res, None


def cmd_classify(args, tol):
    from .partition import (ciubb_to_piubs, find_ciubb, folner_search, paradoxical_check,
                            verify_piubs)
    w = _load_window(args.space)
    if args.target == "ciubb":
        cover = find_ciubb(w, Fraction(args.r))
        return "ok", cover.to_json(), None
    if args.target == "piubs":
        part = ciubb_to_piubs(find_ciubb(w, Fraction(args.r)))
        cert = verify_piubs(part)
        res = {"partition": part.to_json(), "certificate": cert.to_json()}
        if cert.ok:
            return "ok", res, None
        return "violation", res, {"violations": cert.violations}
    if args.target == "folner":
        rep = folner_search(w, Fraction(args.R), Fraction(args.eps), args.budget, args.mode)
        res = rep.to_json()
        verdict = {"folner-evidence": "ok", "antifolner-evidence": "violation"}.get(
            rep.verdict, "inconclusive")
        wit = None if verdict == "ok" else {"best": res.get("best"), "bound": res.get("bound"),
                                            "reason": rep.verdict}
        return verdict, res, wit
    rep = paradoxical_check(w)
    res = rep.to_json()
    if rep.ok:
        return "ok", res, None
    return "violation", res, {"fiber_sizes": {str(k): v for k, v in rep.fiber_sizes.items()},
                              "max_displacement": rep.max_displacement}


def _load_family(path: str, window: Window):
    from .homotopy import VertexFamily
    obj = _load_json(path)
    if isinstance(obj, list):
        obj = {"vertices": obj}
    verts = [SparseOperator.from_json(v, window) for v in obj["vertices"]]
    return VertexFamily(verts, tuple(tuple(s) for s in obj.get("simplices", ())),
                        obj.get("resolution", 8))


def cmd_contract(args, tol):
    from .homotopy import ContractConfig, contract
    from .partition import ciubb_to_piubs, find_ciubb, natural_partition, verify_piubs
    w = _load_window(args.space)
    fam = _load_family(args.vertices, w)
    if args.partition == "natural":
        part = natural_partition(w)
        if part.r != Fraction(args.r):
            raise UsageError(f"natural partition has r = {part.r}, not {args.r}; "
                             "use --partition induced")
    else:
        part = ciubb_to_piubs(find_ciubb(w, Fraction(args.r)))
    cert = verify_piubs(part)
    if not cert.ok:
        return "violation", {"partition": cert.to_json()}, {"violations": cert.violations}
    cfg = ContractConfig(L=args.length, M=args.layers, samples=args.samples,
                         refine=args.refine, tol=tol)
    res = contract(fam, part, cfg)
    out = res.to_json()
    out["config"] = cfg.to_json()
    if res.verdict == "ok":
        return "ok", out, None
    bad = [s.to_json() for s in res.certificate.stages if not s.ok]
    return "violation", out, {"failed_stages": bad, "bounds": out["bounds"],
                              "interior_residual": res.interior_residual}


def _alpha(spec: str):
    from .obstruction import integer_shift
    s = spec.replace(" ", "")
    if s in ("identity", "id", "shift+0", "shift0"):
        return integer_shift(0), 1
    if s.startswith("shift"):
        k = int(s[5:] or "1")
        return integer_shift(k), abs(k) + 1
    raise UsageError(f"unknown alpha {spec!r} (use shift+k, shift-k or identity)")


def cmd_obstruct(args, tol):
    from . import obstruction as ob
    if args.target == "index":
        kind = _kind(args.space)
        if kind != "IntegerLine":
            raise UsageError("obstruct index supports the integer line")
        if args.split != "nonneg":
            raise UsageError("only the split 'nonneg' is available")
        alpha, C = _alpha(args.alpha)
        sizes = [int(x) for x in args.windows.split(",")]
        spec = SpaceSpec.integer_line()
        windows = [realize_window(spec, {"n": n}) for n in sizes]
        rep = ob.corner_index(lambda w: ob.shift_from_bijection(w, alpha, C).V, windows,
                              lambda w: [x for x in w.labels if x >= 0], tol)
        split = ob.split_decomposition(windows[0], "nonneg")
        res = rep.to_json()
        res["condition_a"] = [[str(R), [label_to_json(x) for x in S], v]
                              for R, S, v in split.ledger]
        res["convention"] = "dim ker - dim coker"
        return "ok", res, None
    if args.target == "winding":
        obj = _load_json(args.loop)
        mats = [np.array(m, dtype=float).view(complex)[..., 0] for m in obj["matrices"]]
        rep = ob.det_winding(mats, tol)
        res = rep.to_json()
        return rep.verdict, res, None if rep.verdict == "ok" else rep.witnesses
    if args.target == "loop":
        rng = np.random.default_rng(args.seed)
        mats = ob.phase_loop(args.dim, args.k, args.samples, rng)
        return "ok", {"matrices": [np.stack([m.real, m.imag], axis=-1) for m in mats]}, None
    # trace
    T = _load_op(args.op)
    fam = _folner_family(T.window, args.folner, args.R)
    seq = ob.trace_sequence(T, [F for _, F in fam])
    from .partition import folner_ratio
    res = seq.to_json()
    res["family"] = args.folner
    res["ratios"] = [folner_ratio(T.window, F, Fraction(args.R)) for _, F in fam]
    res["descriptions"] = [d for d, _ in fam]
    return "ok", res, None


def _folner_family(window: Window, name: str, R):
    """Nested centered boxes (intervals on the line) clear of the window edge."""
    if name != "boxes":
        raise UsageError(f"unknown Folner family {name!r}")
    kind = window.spec.kind
    if kind not in ("IntegerLine", "IntegerLattice"):
        raise UsageError("box families need an integer line or lattice window")
    inner = set(window.labels[i] for i in window.interior(Fraction(R) + 1))
    out = []
    for h in range(1, 10 ** 6):
        if kind == "IntegerLine":
            F = [x for x in range(-h, h + 1)]
        else:
            F = [x for x in window.labels if max(abs(c) for c in x) <= h]
        if not all(x in inner for x in F):
            break
        out.append((f"box h={h}", F))
    if not out:
        raise UsageError("window too small for a box family")
    return out


# ---------------------------------------------------------------------------
# parser

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--out", help="report path (default: $REPORT_DIR/<command>.json or stdout)")
    for f in fields(Tolerances):
        p.add_argument(f"--tol-{f.name.replace('_', '-')}", dest=f"tol_{f.name}",
                       type=type(f.default), default=None, help=f"default {f.default}")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    root = _Parser(prog="roekuiper", description="Finite-window uniform Roe algebra workbench")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("space").add_subparsers(dest="action", required=True,
                                                parser_class=_Parser)
    g = sp.add_parser("gen", parents=[common])
    g.add_argument("--spec", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--fibers", type=int)
    g.add_argument("--copies", type=int, default=2)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--blocks", type=int)
    g.add_argument("--tail", type=int, default=4)
    g.add_argument("--spacing", default="10")
    g.add_argument("--diameter", default="1")
    g.set_defaults(func=cmd_space_gen)
    v = sp.add_parser("validate", parents=[common])
    v.add_argument("file")
    v.set_defaults(func=cmd_space_validate)

    op = sub.add_parser("op").add_subparsers(dest="action", required=True, parser_class=_Parser)
    g = op.add_parser("gen", parents=[common])
    g.add_argument("--space", required=True)
    g.add_argument("--kind", choices=("shift", "band-random", "unitary-band"), required=True)
    g.add_argument("--prop", default="1")
    g.add_argument("--layers", type=int, default=1)
    g.add_argument("--diag-shift", type=float, default=0.0)
    g.set_defaults(func=cmd_op_gen)
    c = op.add_parser("check", parents=[common])
    c.add_argument("--op", required=True)
    c.add_argument("--other")
    c.add_argument("--subadditivity", action="store_true")
    c.add_argument("--trials", type=int, default=0)
    c.set_defaults(func=cmd_op_check)
    r = op.add_parser("retract", parents=[common])
    r.add_argument("--op", required=True)
    r.add_argument("--t", type=float, default=1.0)
    r.set_defaults(func=cmd_op_retract)

    cl = sub.add_parser("classify").add_subparsers(dest="target", required=True,
                                                   parser_class=_Parser)
    for name in ("ciubb", "piubs"):
        q = cl.add_parser(name, parents=[common])
        q.add_argument("--space", required=True)
        q.add_argument("--r", required=True)
        q.set_defaults(func=cmd_classify)
    q = cl.add_parser("folner", parents=[common])
    q.add_argument("--space", required=True)
    q.add_argument("--R", required=True)
    q.add_argument("--eps", required=True)
    q.add_argument("--budget", type=int, default=10_000)
    q.add_argument("--mode", choices=("inner", "closed", "strict"), default="inner")
    q.set_defaults(func=cmd_classify)
    q = cl.add_parser("paradoxical", parents=[common])
    q.add_argument("--space", required=True)
    q.set_defaults(func=cmd_classify)

    k = sub.add_parser("contract", parents=[common])
    k.add_argument("--space", required=True)
    k.add_argument("--vertices", required=True)
    k.add_argument("--r", default="1")
    k.add_argument("--layers", type=int, default=2)
    k.add_argument("--length", type=int, default=24)
    k.add_argument("--samples", type=int, default=11)
    k.add_argument("--refine", action="store_true")
    k.add_argument("--partition", choices=("natural", "induced"), default="natural")
    k.set_defaults(func=cmd_contract, command="contract")

    ob = sub.add_parser("obstruct").add_subparsers(dest="target", required=True,
                                                   parser_class=_Parser)
    i = ob.add_parser("index", parents=[common])
    i.add_argument("--space", default="z-line")
    i.add_argument("--split", default="nonneg")
    i.add_argument("--alpha", default="shift+1")
    i.add_argument("--windows", default="64,128")
    i.set_defaults(func=cmd_obstruct)
    w = ob.add_parser("winding", parents=[common])
    w.add_argument("--loop", required=True)
    w.set_defaults(func=cmd_obstruct)
    lp = ob.add_parser("loop", parents=[common], help="write a sample loop with winding k")
    lp.add_argument("--k", type=int, default=1)
    lp.add_argument("--dim", type=int, default=4)
    lp.add_argument("--samples", type=int, default=64)
    lp.set_defaults(func=cmd_obstruct)
    t = ob.add_parser("trace", parents=[common])
    t.add_argument("--op", required=True)
    t.add_argument("--folner", default="boxes")
    t.add_argument("--R", default="1")
    t.set_defaults(func=cmd_obstruct)
    return root


def _inputs(args) -> dict:
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and v is not None and not k.startswith("tol_")} | {
        "tolerances": {k[4:]: v for k, v in vars(args).items()
                       if k.startswith("tol_") and v is not None}}


def _name(args) -> str:
    parts = [args.command] + [getattr(args, a) for a in ("action", "target")
                              if getattr(args, a, None)]
    return " ".join(parts)


def run(argv=None) -> int:
    """Run one command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE
    try:
        tol = _tolerances(args)
        verdict, result, wit = args.func(args, tol)
    except UsageError as exc:
        sys.stderr.write(f"roekuiper: error: {exc}\n")
        return USAGE
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"roekuiper: {exc}\n")
        return EXIT["inconclusive"]
    except RoeError as exc:
        cause = exc.cause if isinstance(exc, StageFailed) else exc
        verdict = "violation" if isinstance(cause, VIOLATIONS) else "inconclusive"
        if isinstance(cause, BoundaryClipped):
            verdict = "inconclusive"
        result = None
        wit = {"error": type(cause).__name__, "message": str(cause),
               "witness": _plain(cause.witness)}
        if isinstance(exc, StageFailed):
            wit["stage"] = exc.stage
    name = _name(args)
    if name in RAW_OUTPUT and verdict == "ok":
        report = result           # the file format itself
    else:
        report = make_report(name, _inputs(args), verdict, result, wit)
    out = args.out
    if out is None and os.environ.get("REPORT_DIR"):
        out = os.path.join(os.environ["REPORT_DIR"], name.replace(" ", "-") + ".json")
    try:
        if out is None:
            dump(report, sys.stdout)
        else:
            write_atomic(report, out)
    except OSError as exc:
        sys.stderr.write(f"roekuiper: cannot write report: {exc}\n")
        return EXIT["inconclusive"]
    return EXIT[verdict]


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        return [_plain(v) for v in (sorted(x, key=repr) if isinstance(x, (set, frozenset))
                                    else x)]
    if isinstance(x, (str, int, float, bool, Fraction)) or x is None:
        return x
    return repr(x)


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
