"""Command-line front end.

Exit codes: 0 pass, 1 verification failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, sweep_grid
from .discrete import (
    dirichlet_resolvent,
    dtn_discrete,
    plim_sequence,
)
from .errors import DegenerateElimination, DomainError, KreinLabError, ShiftError
from .interval import IntervalConfig, dirichlet_apply_exact, dtn_exact
from .krein import (
    build_extension,
    classify_extension,
    extend_to_boundary,
    krein_resolvent,
    resolvent_condition,
    theta_report,
    wentzell_residual,
)
from .markov import BoundaryForm, brute_force_markov
from .plotting import field_plot, line_plot
from .semigroup import Semigroup, markov_verify, sandwich_check, yosida_form

__all__ = ["main", "CHECKS", "fmt", "decreasing_to_floor"]

CHECKS = ("agreement", "resolvent", "markov", "classifier", "conservative", "sandwich", "plim", "yosida", "wentzell")
YOSIDA_LAMBDAS = (1.0, 10.0, 100.0, 1000.0)
ROUNDOFF_FLOOR = 1e-11


def fmt(x) -> str:
    """CSV cell: floats with 17 significant digits, everything else as text."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x) + 0.0, ".17g")
    if x is None:
        return ""
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _table(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    cells = [list(map(str, header))] + [[fmt(v) if not isinstance(v, float) else f"{v + 0.0:.6g}" for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# classify -------------------------------------------------------------------


def cmd_classify(cfg: ExperimentConfig, out: Path, **_) -> int:
    disc = cfg.domain.build()
    bf = cfg.boundary.build(disc)
    cls = classify_extension(disc, bf)
    report = {
        "name": cfg.name,
        "boundary": cfg.boundary.kind,
        "markovian": cls.markovian,
        "recurrent": cls.conservative_recurrent,
        "transient": cls.transient,
        "description": cls.description,
        "reasons": list(cls.reasons),
        "theta_B": theta_report(disc, bf),
    }
    write_json(out / "classify.json", report)
    rows = [(k, report[k]) for k in ("boundary", "markovian", "recurrent", "transient", "description")]
    rows += [("reason", r) for r in cls.reasons]
    print(_table(rows, ("field", "value")))
    return 0


# verify ---------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    status: str
    value: float
    threshold: float
    detail: str = ""

    @property
    def margin(self) -> float:
        return self.threshold - self.value


def _result(name, ok, value, threshold, detail=""):
    return CheckResult(name, "pass" if ok else "fail", float(value), float(threshold), detail)


def _skip(name, detail):
    return CheckResult(name, "skip", float("nan"), float("nan"), detail)


def _check_agreement(ctx):
    cfg, disc, bf = ctx["cfg"], ctx["disc"], ctx["bf"]
    tol = cfg.tol("agreement")
    try:
        op = build_extension(disc, bf, via="both")
    except DegenerateElimination as exc:
        return _skip("agreement", str(exc))
    return _result("agreement", op.agreement <= tol, op.agreement, tol, "relative generator gap / cond")


def _check_resolvent(ctx):
    cfg, disc, bf, A = ctx["cfg"], ctx["disc"], ctx["bf"], ctx["A"]
    tol = cfg.tol("resolvent")
    worst = 0.0
    Rs = []
    for lam in cfg.lambdas:
        R = krein_resolvent(disc, bf, lam)
        ref = np.linalg.inv(-A + lam * np.eye(disc.ni))
        cond = resolvent_condition(A, disc.mass, lam)
        worst = max(worst, np.linalg.norm(R - ref) / (cond * max(1.0, np.linalg.norm(ref))))
        Rs.append(R)
    for (l1, R1), (l2, R2) in zip(zip(cfg.lambdas, Rs), zip(cfg.lambdas[1:], Rs[1:])):
        gap = np.abs(R1 - R2 - (l2 - l1) * R1 @ R2).max() / max(1.0, np.abs(R1).max())
        worst = max(worst, gap)
    return _result("resolvent", worst <= tol, worst, tol, f"Krein vs direct and resolvent identity at {cfg.lambdas}")


def _check_markov(ctx):
    rep = ctx["report"]
    w = rep.positivity_witness or rep.sub_markov_witness
    detail = "" if w is None else f"witness t={w['t']:g} node={w['entry']} value={w['value']:.6g}"
    viol = 0.0 if w is None else (-w["value"] if w is rep.positivity_witness else w["value"] - 1.0)
    return _result("markov", rep.markovian, viol, ctx["cfg"].tol("brute_force"), detail)


def _check_classifier(ctx):
    cls, bfv = ctx["cls"], ctx["brute"]
    ok = cls.markovian == bfv.ok
    return _result("classifier", ok, 0.0 if ok else 1.0, 0.5, f"classifier={cls.markovian} brute_force={bfv.ok}")


def _check_conservative(ctx):
    rep, cls = ctx["report"], ctx["cls"]
    if not rep.markovian:
        return _skip("conservative", "semigroup not Markovian")
    tol = ctx["cfg"].tol("conservative")
    dev = rep.conservative_deviation
    if cls.conservative_recurrent:
        return _result("conservative", dev <= tol, dev, tol, "recurrent: exp(tA)1 = 1")
    return _result("conservative", dev > tol, -dev, -tol, "transient: exp(tA)1 < 1 somewhere")


def _check_sandwich(ctx):
    if not ctx["cls"].markovian:
        return _skip("sandwich", "only claimed for Markovian extensions")
    try:
        v = sandwich_check(ctx["disc"], ctx["bf"], slack=ctx["cfg"].tol("sandwich"))
    except DegenerateElimination as exc:
        return _skip("sandwich", str(exc))
    worst = min(v.worst_lower, v.worst_upper)
    side = "lower" if v.worst_lower <= v.worst_upper else "upper"
    return _result("sandwich", v.ok, -worst, v.slack, f"worst {side} side")


def decreasing_to_floor(errs, floor: float = ROUNDOFF_FLOOR) -> bool:
    """Strict decrease of successive errors until both sit below ``floor``."""
    return all(b < a or (a <= floor and b <= floor) for a, b in zip(errs, errs[1:]))


def _check_plim(ctx):
    disc = ctx["disc"]
    if disc.dim != 1:
        return _skip("plim", "defined for the two-point boundary")
    h = np.array([1.0, 0.0])
    target = float(h @ (disc.weights * (dtn_discrete(disc, 0.0) @ h)))
    seq = plim_sequence(disc, h)
    err = np.abs(seq - target)
    tol = ctx["cfg"].tol("plim")
    ok = decreasing_to_floor(err) and err[-1] <= tol
    return _result("plim", ok, err[-1], tol, "errors " + " ".join(f"{e:.3g}" for e in err))


def _check_yosida(ctx):
    cfg, disc, A, cls = ctx["cfg"], ctx["disc"], ctx["A"], ctx["cls"]
    tol = cfg.tol("yosida")
    rng = np.random.default_rng(cfg.seed)
    U = rng.standard_normal((disc.ni, cfg.n_samples))
    forms = [yosida_form(A, disc.mass, lam) for lam in YOSIDA_LAMBDAS]
    vals = np.array([np.einsum("ik,ij,jk->k", U, f.matrix, U) for f in forms])
    scale = max(1.0, np.abs(vals).max())
    slack = float(np.diff(vals, axis=0).min() / scale)
    split = [f.split_ok for f in forms]
    split_ok = all(s == cls.markovian for s in split)
    dens_ok = all(f.killing_density.min() >= -tol for f in forms if f.split_ok)
    ok = slack >= -tol and split_ok and dens_ok
    return _result("yosida", ok, -slack, tol, f"split={split} markovian={cls.markovian}")


def _check_wentzell(ctx):
    cfg, disc, bf, op = ctx["cfg"], ctx["disc"], ctx["bf"], ctx["op"]
    if op is None:
        return _skip("wentzell", "no elimination map (degenerate direct construction)")
    tol = cfg.tol("wentzell")
    s = np.sqrt(disc.mass)
    S = -(s[:, None] * op.generator / s[None, :])
    _, V = np.linalg.eigh(0.5 * (S + S.T))
    worst = 0.0
    for k in range(V.shape[1]):
        u_int = V[:, k] / s
        u = disc.embed(u_int, extend_to_boundary(op, u_int))
        res, scales = wentzell_residual(disc, bf, u, return_scale=True)
        worst = max(worst, res / max(max(scales), 1e-300))
    return _result("wentzell", worst <= tol, worst, tol, "max residual / flux scale over eigenvectors")


_VERIFY = {
    "agreement": _check_agreement,
    "resolvent": _check_resolvent,
    "markov": _check_markov,
    "classifier": _check_classifier,
    "conservative": _check_conservative,
    "sandwich": _check_sandwich,
    "plim": _check_plim,
    "yosida": _check_yosida,
    "wentzell": _check_wentzell,
}


def _verify_context(cfg):
    disc = cfg.domain.build()
    bf = cfg.boundary.build(disc)
    cls = classify_extension(disc, bf)
    try:
        op = build_extension(disc, bf)
        A = op.generator
    except DegenerateElimination:
        op = build_extension(disc, bf, via="krein")
        A = op.generator
        op = None
    report = markov_verify(A, disc.mass, times=cfg.times, n_samples=cfg.n_samples, seed=cfg.seed,
                           tol=cfg.tol("brute_force"), conservative_tol=cfg.tol("conservative"),
                           recurrent=cls.conservative_recurrent if cls.markovian else None)
    brute = brute_force_markov(-A, times=tuple(cfg.times), n_samples=cfg.n_samples,
                               tol=cfg.tol("brute_force"), seed=cfg.seed, mass=disc.mass)
    return {"cfg": cfg, "disc": disc, "bf": bf, "cls": cls, "op": op, "A": A, "report": report, "brute": brute}


def cmd_verify(cfg: ExperimentConfig, out: Path, expect_fail: Sequence[str] = (), **_) -> int:
    ctx = _verify_context(cfg)
    results = []
    for name in CHECKS:
        try:
            r = _VERIFY[name](ctx)
        except (ShiftError, KreinLabError, np.linalg.LinAlgError) as exc:
            r = CheckResult(name, "fail", float("nan"), float("nan"), f"{type(exc).__name__}: {exc}")
        if name in expect_fail and r.status != "skip":
            r.status = "xfail" if r.status == "fail" else "xpass"
        results.append(r)
    failed = [r.name for r in results if r.status in ("fail", "xpass")]
    rows = [(r.name, r.status, r.value, r.threshold, r.margin, r.detail) for r in results]
    header = ("check", "status", "value", "threshold", "margin", "detail")
    write_csv(out / "verify.csv", header, rows)
    write_json(out / "verify.json", {
        "name": cfg.name,
        "passed": not failed,
        "failed": failed,
        "expect_fail": list(expect_fail),
        "semigroup": ctx["report"].to_dict(),
        "checks": [dict(zip(header, r)) for r in rows],
    })
    print(_table([(r.name, r.status, r.margin, r.detail) for r in results], ("check", "status", "margin", "detail")))
    if failed:
        print("verification failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


# convergence ----------------------------------------------------------------


def _periodic_reference(kind, ell):
    refs = {"periodic": (2 * np.pi / ell) ** 2, "neumann": (np.pi / ell) ** 2, "dirichlet": (np.pi / ell) ** 2}
    if kind not in refs:
        raise ConfigError(f"no eigenvalue reference for boundary kind {kind!r}; use periodic, neumann or dirichlet")
    return refs[kind]


def _convergence_error(cfg, study, n, lam):
    dom = ExperimentConfig.from_dict({**cfg.to_dict(), "domain": {**cfg.to_dict()["domain"], "n": n}}).domain
    disc = dom.build()
    icfg = IntervalConfig(ell=cfg.domain.ell)
    if study == "dtn":
        return float(np.abs(dtn_discrete(disc, lam) - dtn_exact(lam, icfg)).max())
    if study == "resolvent":
        x = disc.interior_coords[:, 0]
        f = lambda y: 1.0 + y * (cfg.domain.ell - y)
        num = dirichlet_resolvent(disc, lam) @ f(x)
        return float(np.abs(num - dirichlet_apply_exact(lam, f, x, icfg)).max())
    bf = cfg.boundary.build(disc)
    A = build_extension(disc, bf).generator
    ev = np.sort(-Semigroup(A, disc.mass).eigenvalues)
    ev = ev[ev > 1e-8 * max(1.0, ev.max())]
    return float(abs(ev[0] - _periodic_reference(cfg.boundary.kind, cfg.domain.ell)))


def cmd_convergence(cfg: ExperimentConfig, out: Path, **_) -> int:
    if cfg.domain.dim != 1 or cfg.domain.a not in ("constant", 1, 1.0):
        raise ConfigError("convergence studies need a 1D domain with constant coefficient")
    conv = cfg.convergence or {}
    study = conv.get("study", "dtn")
    study = {"krein": "eigen", "periodic": "eigen"}.get(study, study)
    ns = conv.get("ns", [25, 50, 100, 200, 400])
    lam = float(conv.get("lam", 1.0))
    errs = [_convergence_error(cfg, study, n, lam) for n in ns]
    orders = [float("nan")] + [float(np.log(e0 / e1) / np.log(n1 / n0)) if e0 > 0 and e1 > 0 else float("nan")
                               for e0, e1, n0, n1 in zip(errs, errs[1:], ns, ns[1:])]
    roundoff = max(errs) <= ROUNDOFF_FLOOR
    monotone = decreasing_to_floor(errs)
    rows = [(n, cfg.domain.ell / n, e, o) for n, e, o in zip(ns, errs, orders)]
    write_csv(out / "convergence.csv", ("n", "h", "error", "order"), rows)
    write_json(out / "convergence.json", {"study": study, "lam": lam, "ns": ns, "errors": errs, "orders": orders,
                                          "monotone": monotone, "exact_to_roundoff": roundoff})
    if not roundoff:
        line_plot(out / "convergence.svg", ns, {study: errs}, "n", "max error", f"{study} convergence", True, True)
    print(_table(rows, ("n", "h", "error", "order")))
    if not (monotone or roundoff):
        print("convergence failed: errors do not decrease monotonically", file=sys.stderr)
        return 1
    return 0


# sweep ----------------------------------------------------------------------


def _sweep_point(cfg, disc, params):
    point = cfg.with_params(**params)
    bf = point.boundary.build(disc)
    cls = classify_extension(disc, bf)
    try:
        A = build_extension(disc, bf).generator
    except (DegenerateElimination, ShiftError):
        return cls, None
    bfv = brute_force_markov(-A, times=tuple(cfg.times), n_samples=cfg.n_samples,
                             tol=cfg.tol("brute_force"), seed=cfg.seed, mass=disc.mass)
    return cls, bfv.ok


def cmd_sweep(cfg: ExperimentConfig, out: Path, jobs: int = 1, **_) -> int:
    grid = sweep_grid(cfg.sweep)
    keys = list(cfg.sweep)
    header = keys + ["markovian", "recurrent", "description", "brute_force", "agree"]
    disc = cfg.domain.build()
    for params in grid[:1]:
        cfg.with_params(**params).boundary.validate()
    work = lambda p: _sweep_point(cfg, disc, p)
    if jobs > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, grid))
    else:
        results = [work(p) for p in grid]
    rows = []
    disagree = 0
    for params, (cls, brute) in zip(grid, results):
        agree = None if brute is None else brute == cls.markovian
        disagree += agree is False
        rows.append([params[k] for k in keys] + [cls.markovian, cls.conservative_recurrent, cls.description, brute, agree])
    write_csv(out / "sweep.csv", header, rows)
    print(f"{len(rows)} sweep points, {disagree} classifier/brute-force disagreements")
    return 1 if disagree else 0


# spectrum / evolve ----------------------------------------------------------


def _generator(disc, bf):
    try:
        return build_extension(disc, bf).generator
    except DegenerateElimination:
        return build_extension(disc, bf, via="krein").generator


def cmd_spectrum(cfg: ExperimentConfig, out: Path, **_) -> int:
    disc = cfg.domain.build()
    bf = cfg.boundary.build(disc)
    count = int((cfg.spectrum or {}).get("count", 10))
    if count < 1:
        raise ConfigError("spectrum.count must be positive")
    spectra = {}
    for label, form in (("extension", bf), ("dirichlet", BoundaryForm.zero(disc.nb, disc.weights)),
                        ("neumann", BoundaryForm.full(np.zeros((disc.nb, disc.nb)), disc.weights))):
        ev = np.sort(-Semigroup(_generator(disc, form), disc.mass).eigenvalues)
        spectra[label] = ev[: min(count, ev.size)]
    k = np.arange(len(spectra["extension"]))
    rows = [(int(i), *(spectra[s][i] for s in spectra)) for i in k]
    write_csv(out / "spectrum.csv", ("k", *spectra), rows)
    line_plot(out / "spectrum.svg", k, spectra, "k", "eigenvalue of -A", cfg.name)
    print(_table(rows, ("k", *spectra)))
    return 0


def cmd_evolve(cfg: ExperimentConfig, out: Path, **_) -> int:
    disc = cfg.domain.build()
    bf = cfg.boundary.build(disc)
    sg = Semigroup(_generator(disc, bf), disc.mass)
    ev = cfg.evolve or {}
    times = ev.get("times", list(cfg.times))
    x = disc.interior_coords
    src = ev.get("source")
    if src is None:
        centre = x.mean(axis=0)
        src = int(np.argmin(((x - centre) ** 2).sum(axis=1)))
    if isinstance(src, bool) or not isinstance(src, int) or not 0 <= src < disc.ni:
        raise ConfigError(f"evolve.source must be an interior index in [0, {disc.ni})")
    cols = ["t", "node"] + (["x"] if disc.dim == 1 else ["x", "y"]) + ["kappa"]
    rows, series = [], {}
    for t in times:
        kap = sg.kernel(float(t))[:, src]
        series[f"t={t:g}"] = kap
        rows.extend([float(t), i, *x[i], kap[i]] for i in range(disc.ni))
        if disc.dim == 2:
            field_plot(out / f"evolve_t{len(series) - 1}.svg", x, kap, f"kernel at t={t:g}", "kappa")
    write_csv(out / "evolve.csv", cols, rows)
    if disc.dim == 1:
        line_plot(out / "evolve.svg", x[:, 0], series, "x", "kappa(t, x, source)", cfg.name)
    print(f"{len(times)} kernel snapshots from source node {src} written to {out}")
    return 0


COMMANDS: Dict[str, Callable[..., int]] = {
    "classify": cmd_classify,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
}


COMMAND_HELP = {
    "classify": "Markov/conservative verdict for the configured boundary datum",
    "verify": "run every numerical check and write per-check margins",
    "convergence": "grid refinement study on the interval (dtn, resolvent, krein, periodic)",
    "sweep": "classify and brute-force every point of a parameter grid",
    "spectrum": "lowest eigenvalues of the extension next to Neumann and Dirichlet",
    "evolve": "heat kernel from one source node at the configured times",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="override the configuration seed")
    common.add_argument("--out", type=Path, default=Path("kreinlab_out"), help="output directory")
    common.add_argument("--expect-fail", action="append", default=[], metavar="CHECK",
                        help=f"check expected to fail (repeatable): {', '.join(CHECKS)}")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
    parser = argparse.ArgumentParser(prog="kreinlab", description="Markovian extensions of elliptic operators")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMAND_HELP[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        unknown = [c for c in args.expect_fail if c not in CHECKS]
        if unknown:
            raise ConfigError(f"unknown check(s) {unknown}; known: {list(CHECKS)}")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, expect_fail=tuple(args.expect_fail), jobs=args.jobs)
    except (ConfigError, DomainError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
