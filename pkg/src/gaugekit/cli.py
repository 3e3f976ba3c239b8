"""Command line front end: ``gaugekit solve | verify | generate``.

Exit codes: 0 success, 1 numeric failure (bound not met, verification
failed, solver error), 2 usage or spec error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .caratheodory import certify_bound
from .core import EQUALITY, FAMILY_TAGS, SQUARED_L2, TRUNCATED_QUADRATIC, DataFit, GaugeError, Problem
from .families import build_family
from .solver import SolverConfig, solve, solve_tiny_nonconvex
from .suites import DEFAULT_COUNTS, SUITES, run_instance
from .tvgrad import atom_mask, read_pgm, write_pgm

__all__ = [
    "SpecError",
    "PROBLEM_SCHEMA",
    "load_spec",
    "validate_spec",
    "resolve_spec",
    "build_problem",
    "generate_data",
    "quantize_midrise",
    "label_str",
    "run_spec",
    "bound_from_table",
    "main",
]

log = logging.getLogger("gaugekit")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
REPORT_VERSION = 1

_NUM = {"type": "number"}
_SEED = {"type": "integer", "minimum": 0}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["family", "phi", "fit"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": _SEED,
        "family": {
            "type": "object",
            "required": ["tag"],
            "additionalProperties": False,
            "properties": {
                "tag": {"enum": list(FAMILY_TAGS)},
                "params": {"type": "object"},
            },
        },
        "phi": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["dense", "gaussian", "point_samples"]},
                "rows": {"type": "array", "minItems": 1, "items": {"type": "array", "items": _NUM}},
                "m": {"type": "integer", "minimum": 1},
                "seed": _SEED,
                "indices": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
            },
        },
        "fit": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [SQUARED_L2, EQUALITY, TRUNCATED_QUADRATIC]},
                "y": {"type": "array", "minItems": 1, "items": _NUM},
                "cap": {"type": "number", "exclusiveMinimum": 0},
                "y_gen": {
                    "type": "object",
                    "required": ["ground_truth"],
                    "additionalProperties": False,
                    "properties": {
                        "ground_truth": {
                            "type": "object",
                            "required": ["kind"],
                            "properties": {
                                "kind": {"enum": ["coords", "random_sparse", "image"]},
                                "values": {"type": "array", "items": _NUM},
                                "k": {"type": "integer", "minimum": 0},
                                "path": {"type": "string"},
                            },
                        },
                        "noise": {
                            "type": "object",
                            "required": ["kind"],
                            "properties": {
                                "kind": {"enum": ["none", "gaussian", "quantize"]},
                                "sigma": {"type": "number", "minimum": 0},
                                "levels": {"type": "integer", "minimum": 2},
                                "step": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                        "seed": _SEED,
                    },
                },
            },
        },
        "reg_weight": {"type": "number", "exclusiveMinimum": 0},
        "sparsify": {"type": "boolean"},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "dual_gap_tol": {"type": "number", "exclusiveMinimum": 0},
                "conic_radius": {"type": "number", "exclusiveMinimum": 0},
                "grid_points": {"type": "integer", "minimum": 2},
                "grid_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


class SpecError(ValueError):
    """Invalid problem spec; the message starts with the offending field."""


def _field(path):
    return ".".join(str(p) for p in path) or "<root>"


def load_spec(path):
    """Read a spec (or a run report embedding one) from a JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(data, dict) and "spec" in data and "report_version" in data:
        data = data["spec"]
    validate_spec(data)
    return _absolutize(data, path.parent)


def _absolutize(spec, base):
    gt = spec["fit"].get("y_gen", {}).get("ground_truth", {})
    if gt.get("kind") == "image" and "path" in gt and not os.path.isabs(gt["path"]):
        spec = copy.deepcopy(spec)
        spec["fit"]["y_gen"]["ground_truth"]["path"] = str((base / gt["path"]).resolve())
    return spec


def validate_spec(spec):
    """Schema and consistency checks; raises SpecError naming the field."""
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(spec))
    if error is not None:
        raise SpecError(f"{_field(error.absolute_path)}: {error.message}")
    phi, fit = spec["phi"], spec["fit"]
    need = {"dense": "rows", "gaussian": "m", "point_samples": "indices"}[phi["kind"]]
    if need not in phi:
        raise SpecError(f"phi.{need}: required for phi kind {phi['kind']!r}")
    if phi["kind"] == "dense" and len({len(r) for r in phi["rows"]}) != 1:
        raise SpecError("phi.rows: rows have different lengths")
    if ("y" in fit) == ("y_gen" in fit):
        raise SpecError("fit.y: missing 'y' (or 'y_gen'); give exactly one of them")
    if fit["kind"] == TRUNCATED_QUADRATIC and "cap" not in fit:
        raise SpecError("fit.cap: required for TruncatedQuadratic")
    if "y_gen" in fit:
        gt = fit["y_gen"]["ground_truth"]
        need = {"coords": "values", "random_sparse": "k", "image": "path"}[gt["kind"]]
        if need not in gt:
            raise SpecError(f"fit.y_gen.ground_truth.{need}: required for kind {gt['kind']!r}")
        noise = fit["y_gen"].get("noise", {"kind": "none"})
        if noise["kind"] == "gaussian" and "sigma" not in noise:
            raise SpecError("fit.y_gen.noise.sigma: required for gaussian noise")
        if noise["kind"] == "quantize" and "levels" not in noise:
            raise SpecError("fit.y_gen.noise.levels: required for quantize")
    try:
        _family(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"family.params: {exc}") from None
    return spec


def resolve_spec(spec, seed=0):
    """Fill every unset seed from ``seed`` so the spec is self-contained."""
    spec = copy.deepcopy(spec)
    base = int(spec.setdefault("seed", seed))
    if spec["phi"]["kind"] == "gaussian":
        spec["phi"].setdefault("seed", base)
    if "y_gen" in spec["fit"]:
        spec["fit"]["y_gen"].setdefault("seed", base + 1)
        spec["fit"]["y_gen"].setdefault("noise", {"kind": "none"})
    spec.setdefault("reg_weight", 1.0)
    spec.setdefault("sparsify", True)
    return spec


def _family(spec):
    return build_family(spec["family"]["tag"], **spec["family"].get("params", {}))


def _phi(spec, gauge):
    phi = spec["phi"]
    n = gauge.ambient_dim
    if phi["kind"] == "dense":
        mat = np.array(phi["rows"], dtype=float)
    elif phi["kind"] == "gaussian":
        m = phi["m"]
        rng = np.random.default_rng(phi["seed"])
        if gauge.family_tag == "PsdCone":
            p = gauge.metadata["p"]
            A = rng.standard_normal((m, p, p))
            mat = (0.5 * (A + A.transpose(0, 2, 1))).reshape(m, n) / np.sqrt(m)
        else:
            mat = rng.standard_normal((m, n)) / np.sqrt(m)
    else:
        idx = np.array(phi["indices"])
        if idx.max() >= n:
            raise SpecError(f"phi.indices: index {idx.max()} out of range for dimension {n}")
        mat = np.eye(n)[idx]
    if mat.shape[1] != n:
        raise SpecError(f"phi.rows: {mat.shape[1]} columns, family dimension is {n}")
    return mat


def quantize_midrise(x, levels, step=1.0):
    """Uniform midrise quantizer with ``levels`` output levels:
    ``step * (clip(floor(x / step), -levels/2, levels/2 - 1) + 1/2)``.

    >>> quantize_midrise([0.3, -0.7], 2)
    array([ 0.5, -0.5])
    """
    x = np.asarray(x, dtype=float)
    k = np.clip(np.floor(x / step), -(levels // 2), levels - levels // 2 - 1)
    return step * (k + 0.5)


def _random_sparse(gauge, k, rng):
    n = gauge.ambient_dim
    tag = gauge.family_tag
    mags = rng.uniform(0.5, 1.5, size=k)
    signs = rng.choice([-1.0, 1.0], size=k)
    if tag in ("L1Ball", "MeasureMass", "NonnegOrthant"):
        u = np.zeros(n)
        idx = rng.choice(n, size=min(k, n), replace=False)
        u[idx] = mags[: idx.size] * (1.0 if tag == "NonnegOrthant" else signs[: idx.size])
        return u
    if tag == "PsdCone":
        p = gauge.metadata["p"]
        V = rng.standard_normal((p, k)) / np.sqrt(p)
        return (V @ V.T).ravel()
    if tag == "GeneralizedTV1D":
        jumps = rng.choice(np.arange(1, n), size=min(k, n - 1), replace=False)
        u = np.full(n, rng.standard_normal())
        for j, h in zip(jumps, mags * signs):
            u[j:] += h
        return u
    H, W = gauge.metadata["H"], gauge.metadata["W"]
    img = np.zeros((H, W))
    for h in mags * signs:
        r0, r1 = np.sort(rng.choice(H + 1, size=2, replace=False))
        c0, c1 = np.sort(rng.choice(W + 1, size=2, replace=False))
        img[r0:r1, c0:c1] += h
    return img.ravel()


def generate_data(y_gen, gauge, Phi):
    """Synthesize ``u_true`` and ``y = P(Phi u_true)``.

    Returns ``(y, u_true, y_clean)``.  The ground truth and the noise draw
    from independent streams spawned from ``y_gen["seed"]``.
    """
    gt = y_gen["ground_truth"]
    gt_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(y_gen.get("seed", 0)).spawn(2))
    n = gauge.ambient_dim
    if gt["kind"] == "coords":
        u_true = np.array(gt["values"], dtype=float)
        if u_true.shape != (n,):
            raise SpecError(f"fit.y_gen.ground_truth.values: expected {n} entries, got {u_true.size}")
    elif gt["kind"] == "random_sparse":
        u_true = _random_sparse(gauge, int(gt["k"]), gt_rng)
    else:
        try:
            img, maxval = read_pgm(gt["path"])
        except (OSError, GaugeError) as exc:
            raise SpecError(f"fit.y_gen.ground_truth.path: {exc}") from None
        if img.size != n:
            raise SpecError(f"fit.y_gen.ground_truth.path: image has {img.size} pixels, expected {n}")
        u_true = img.ravel() / maxval
    y_clean = Phi @ u_true
    noise = y_gen.get("noise", {"kind": "none"})
    if noise["kind"] == "none":
        y = y_clean.copy()
    elif noise["kind"] == "gaussian":
        y = y_clean + noise["sigma"] * noise_rng.standard_normal(y_clean.shape)
    else:
        y = quantize_midrise(y_clean, noise["levels"], noise.get("step", 1.0))
    return y, u_true, y_clean


def build_problem(spec):
    """Turn a resolved spec into ``(Problem, extras)`` where extras holds the
    generated ground truth, if any."""
    gauge = _family(spec)
    Phi = _phi(spec, gauge)
    fit = spec["fit"]
    extras = {}
    if "y" in fit:
        y = np.array(fit["y"], dtype=float)
    else:
        y, u_true, y_clean = generate_data(fit["y_gen"], gauge, Phi)
        extras = {"u_true": u_true, "y_clean": y_clean}
    if y.shape[0] != Phi.shape[0]:
        raise SpecError(f"fit.y: length {y.shape[0]} does not match {Phi.shape[0]} measurements")
    if fit["kind"] == SQUARED_L2:
        data_fit = DataFit.squared_l2(y)
    elif fit["kind"] == EQUALITY:
        data_fit = DataFit.equality(y)
    else:
        data_fit = DataFit.truncated_quadratic(y, fit["cap"])
    return Problem(gauge, Phi, data_fit, float(spec.get("reg_weight", 1.0))), extras


def label_str(label):
    """Stable text form of an atom label, e.g. ``e:3:-1``."""

    def part(x):
        if isinstance(x, (tuple, list)):
            return ",".join(part(v) for v in x)
        if isinstance(x, (float, np.floating)):
            return format(float(x), ".12g")
        return str(x)

    return ":".join(part(x) for x in label)


def _atom_rows(rep):
    return [
        {"label": label_str(a.label), "alpha": float(alpha), "cost": float(a.cost), "kind": a.kind}
        for alpha, a in rep.terms
    ]


def bound_from_table(m, d, delta, rows):
    """Atom-count bound recomputed from an atom table."""
    rays_only = bool(rows) and all(row["kind"] == "ray_direction" for row in rows)
    return m - d + delta - (1 if rays_only else 0)


def run_spec(spec):
    """Solve a resolved spec; returns ``(report, rep, problem)``."""
    problem, extras = build_problem(spec)
    overrides = dict(spec.get("solver", {}))
    grid = {"points": overrides.pop("grid_points", 31), "radius": overrides.pop("grid_radius", None)}
    config = SolverConfig(**overrides)
    t0 = time.perf_counter()
    if problem.fit.kind == TRUNCATED_QUADRATIC:
        result = solve_tiny_nonconvex(problem, grid, config)
    else:
        result = solve(problem, config)
    t1 = time.perf_counter()
    if spec.get("sparsify", True):
        rep, sp = certify_bound(result)
    else:
        rep, sp = result.rep, None
    t2 = time.perf_counter()
    rows = _atom_rows(rep)
    u = rep.assemble()
    report = {
        "report_version": REPORT_VERSION,
        "gaugekit_version": __version__,
        "spec": spec,
        "seeds": {
            "base": spec.get("seed"),
            "phi": spec["phi"].get("seed"),
            "y_gen": spec["fit"].get("y_gen", {}).get("seed"),
        },
        "family": problem.gauge.family_tag,
        "m": problem.m,
        "n": problem.n,
        "objective": float(result.objective),
        "dual_gap": float(result.dual_gap),
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "t_star": float(result.t_star),
        "delta": int(result.delta),
        "d": int(result.d),
        "r_before": result.rep.r,
        "r_after": rep.r,
        "bound": sp.bound if sp else bound_from_table(problem.m, result.d, result.delta, rows),
        "bound_met": sp.bound_met if sp else rep.r <= bound_from_table(problem.m, result.d, result.delta, rows),
        "phi_residual": sp.phi_residual if sp else 0.0,
        "objective_change": sp.objective_change if sp else 0.0,
        "atoms": rows,
        "u_K": rep.u_K.tolist(),
        "u": u.tolist(),
        "pivot_log": [p.to_dict() for p in sp.pivot_log] if sp else [],
        "diagnostics": sp.diagnostics if sp else [],
        "timings": {"solve_s": t1 - t0, "sparsify_s": t2 - t1},
    }
    if extras:
        report["y"] = problem.fit.y.tolist()
        report["u_true"] = extras["u_true"].tolist()
        report["error_l2"] = float(np.linalg.norm(u - extras["u_true"]))
    return report, rep, problem


def _atomic_write(path, data, binary=False):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "wb" if binary else "w") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["label", "alpha", "cost", "kind"], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "alpha": repr(row["alpha"]), "cost": repr(row["cost"])})
    return buf.getvalue()


def _write_images(out, rep, problem, report):
    H, W = problem.gauge.metadata["H"], problem.gauge.metadata["W"]
    img = rep.assemble().reshape(H, W)
    lo, hi = float(img.min()), float(img.max())
    scaled = (img - lo) / (hi - lo) * 255 if hi > lo else np.zeros_like(img)
    write_pgm(out / "reconstruction.pgm", scaled)
    report["image_range"] = [lo, hi]
    for i, atom in enumerate(rep.atoms):
        write_pgm(out / f"atom_{i:03d}.pgm", atom_mask(atom) * 255)


def _find_spec(name):
    path = Path(name)
    if path.exists():
        return path
    fixture = resources.files("gaugekit") / "fixtures" / f"{name.removesuffix('.json')}.json"
    if fixture.is_file():
        return Path(str(fixture))
    return path


def cmd_solve(args):
    spec = resolve_spec(load_spec(_find_spec(args.spec)), args.seed)
    report, rep, problem = run_spec(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if problem.gauge.family_tag == "TVGradient2D":
        _write_images(out, rep, problem, report)
    _atomic_write(out / "atoms.csv", _write_csv(report["atoms"]))
    _atomic_write(out / "report.json", _dump_json(report))
    print(
        f"objective {report['objective']:.10g}  atoms {report['r_before']} -> {report['r_after']}"
        f"  bound {report['bound']}  bound_met {report['bound_met']}"
    )
    for msg in report["diagnostics"]:
        print(f"warning: {msg}", file=sys.stderr)
    return EXIT_OK if report["bound_met"] else EXIT_NUMERIC


def cmd_generate(args):
    spec = resolve_spec(load_spec(_find_spec(args.spec)), args.seed)
    problem, extras = build_problem(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solved = copy.deepcopy(spec)
    solved["fit"]["y"] = problem.fit.y.tolist()
    provenance = solved["fit"].pop("y_gen", None)
    _atomic_write(out / "problem.json", _dump_json(solved))
    data = {"spec": spec, "y": problem.fit.y.tolist(), "y_gen": provenance}
    if extras:
        data["u_true"] = extras["u_true"].tolist()
        data["y_clean"] = extras["y_clean"].tolist()
        if problem.gauge.family_tag == "TVGradient2D":
            H, W = problem.gauge.metadata["H"], problem.gauge.metadata["W"]
            img = extras["u_true"].reshape(H, W)
            lo, hi = float(img.min()), float(img.max())
            write_pgm(out / "ground_truth.pgm", (img - lo) / (hi - lo) * 255 if hi > lo else img * 0)
    _atomic_write(out / "data.json", _dump_json(data))
    print(f"wrote {out / 'problem.json'} ({problem.m} measurements)")
    return EXIT_OK


def _threads(value):
    if value is None:
        env = os.environ.get("GAUGEKIT_THREADS")
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise SpecError(f"GAUGEKIT_THREADS: not an integer: {env!r}") from None
    if value < 1:
        raise SpecError("--threads must be at least 1")
    return value


def cmd_verify(args):
    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_USAGE
    count = args.count if args.count is not None else DEFAULT_COUNTS[args.suite]
    threads = _threads(args.threads)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    def task(i):
        res = run_instance(args.suite, args.seed, i)
        if out:
            _atomic_write(out / f"{args.suite}_{i:05d}.json", _dump_json(res))
        return res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(count)))
    else:
        results = [task(i) for i in range(count)]
    results.sort(key=lambda r: r["index"])
    failed = [r for r in results if not r["passed"]]
    for r in failed:
        print(f"FAIL {args.suite}[{r['index']}] rng seed {r['seed']}: {json.dumps(r['detail'], default=str)}")
    print(f"{args.suite}: {count - len(failed)}/{count} passed (base seed {args.seed}, instance i uses default_rng([{args.seed}, i]))")
    return EXIT_OK if not failed else EXIT_NUMERIC


def build_parser():
    parser = argparse.ArgumentParser(prog="gaugekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gaugekit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem spec and certify the atom bound")
    p.add_argument("--spec", required=True, help="spec or report JSON, or a shipped fixture name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="base seed for unset seeds")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run a randomized oracle suite")
    p.add_argument("--suite", required=True, help=f"one of {', '.join(SUITES)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $GAUGEKIT_THREADS or 1)")
    p.add_argument("--out", default=None, help="write one JSON result per instance here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="synthesize measurements from a spec's y_gen")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GaugeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
