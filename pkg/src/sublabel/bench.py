"""
Experiment harness: solver x refinement x label-count matrices to CSV.

Matrix files are flat ``key = value`` text; ``#`` starts a comment and
list values are comma-separated. Recognized keys (defaults in brackets):

    labels      label counts            [5,10,15,20,30,40,50,100,150,200,256]
    methods     gco, exact, gco+lm, gco+qm, gco+ql, exact+ql   [all six]
    seeds       noise seeds, one row per seed                  [0]
    image       benchmark | synthetic | path to a PGM          [benchmark]
    size        side length for ``image = synthetic``          [32]
    noise_sigma Gaussian noise level                           [0.05]
    sp_prob     salt-and-pepper probability                    [0.25]
    prior       tv | trunc-l1 | trunc-l2                       [tv]
    lambda      prior weight                                   [prior default]
    trunc       prior truncation                               [prior default]
    beta, nu    data term parameters                           [25, 0.025]
    budget_nl   largest N*L the exact solver may take          [32768]
    timings     on | off; off writes empty timing fields       [on]
    max_iters   PDHG iteration budget                          [100000]
    tol         PDHG residual tolerance                        [1e-7]
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from . import pgm
from .core import PairwiseKind, PairwiseModel
from .cvxsolve import ConvergenceError, SolveOptions
from .denoise import (
    DenoiseConfig,
    Image,
    NoiseSpec,
    add_noise,
    benchmark_image,
    default_prior,
    run_pipeline,
    synthetic_image,
)
from .discrete import DiscreteSolverKind
from .refine import RefineKind

TABLE_LABELS = (5, 10, 15, 20, 30, 40, 50, 100, 150, 200, 256)
METHODS = ("gco", "exact", "gco+lm", "gco+qm", "gco+ql", "exact+ql")
COLUMNS = (
    "method", "L", "seed", "E_sub", "E_disc_round", "E_init", "improve_pct",
    "t_discrete_ms", "t_refine_ms", "psnr_db", "E_fit", "z_vars", "status", "out_hash",
)
OOM = "OOM"


class MatrixConfigError(ValueError):
    pass


def parse_method(name: str):
    """``"gco+ql"`` -> ``(DiscreteSolverKind, RefineKind)``."""
    solver, _, refine = name.strip().lower().partition("+")
    try:
        return DiscreteSolverKind(solver), RefineKind(refine or "none")
    except ValueError:
        raise MatrixConfigError(f"unknown method {name!r}") from None


@dataclass(frozen=True)
class ExperimentMatrix:
    labels: tuple = TABLE_LABELS
    methods: tuple = METHODS
    seeds: tuple = (0,)
    image: str = "benchmark"
    size: int = 32
    noise: NoiseSpec = NoiseSpec()
    prior: PairwiseModel = field(default_factory=lambda: default_prior(PairwiseKind.L1TV))
    beta: float = 25.0
    nu: float = 0.025
    budget_nl: int = 32768
    timings: bool = True
    solve_options: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if not self.labels or not self.methods or not self.seeds:
            raise MatrixConfigError("labels, methods and seeds must be nonempty")
        if any(int(L) < 2 for L in self.labels):
            raise MatrixConfigError("all label counts must be >= 2")
        for m in self.methods:
            parse_method(m)
        if self.budget_nl < 0:
            raise MatrixConfigError("budget_nl must be nonnegative")

    def clean_image(self) -> Image:
        if self.image == "benchmark":
            return benchmark_image()
        if self.image == "synthetic":
            return synthetic_image(self.size)
        return Image.read(self.image)

    def cells(self):
        return [(m, int(L), int(s)) for m in self.methods for L in self.labels for s in self.seeds]


@dataclass(frozen=True)
class ResultRow:
    method: str
    L: int
    seed: int
    E_sub: float
    E_disc_round: float
    E_init: float
    improve_pct: float
    t_discrete_ms: Optional[float]
    t_refine_ms: Optional[float]
    psnr_db: Optional[float]
    E_fit: float
    z_vars: int
    status: str
    out_hash: str

    def values(self):
        return [getattr(self, c) for c in COLUMNS]


def _failed(method, L, seed, status) -> ResultRow:
    nan = math.nan
    return ResultRow(method, L, seed, nan, nan, nan, nan, None, None, None, nan, 0, status, "")


def image_hash(img: Image) -> str:
    return hashlib.sha256(pgm.to_bytes(img.pixels).tobytes()).hexdigest()[:16]


def run_cell(m: ExperimentMatrix, method: str, L: int, seed: int, clean: Optional[Image] = None) -> ResultRow:
    """One (method, L, seed) cell. Failures become a status string."""
    solver, refine = parse_method(method)
    if clean is None:
        clean = m.clean_image()
    if solver is DiscreteSolverKind.EXACT_CONVEX and clean.pixels.size * L > m.budget_nl:
        return _failed(method, L, seed, OOM)
    noisy = add_noise(clean, replace(m.noise, seed=seed))
    cfg = DenoiseConfig(
        labels=L, beta=m.beta, nu=m.nu, prior=m.prior,
        solver=solver, refine=refine, solve_options=m.solve_options,
    )
    try:
        out, rep = run_pipeline(noisy, cfg, clean=clean)
    except ConvergenceError as exc:
        return _failed(method, L, seed, f"not-converged (residual {exc.residual:.3g})")
    except Exception as exc:  # recorded in-row, the matrix keeps going
        return _failed(method, L, seed, f"error: {type(exc).__name__}: {exc}")
    return ResultRow(
        method=method,
        L=L,
        seed=seed,
        E_sub=rep.sublabel_energy,
        E_disc_round=rep.discretized_energy,
        E_init=rep.discrete_energy,
        improve_pct=rep.improvement_pct,
        t_discrete_ms=1e3 * rep.t_discrete if m.timings else None,
        t_refine_ms=1e3 * rep.t_refine if m.timings else None,
        psnr_db=rep.psnr,
        E_fit=rep.fitted_objective,
        z_vars=rep.num_vars,
        status="ok",
        out_hash=image_hash(out),
    )


def _cell_job(args):
    return run_cell(*args)


def run_matrix(m: ExperimentMatrix, jobs: int = 1) -> list:
    """Run every cell; rows come back sorted by (method, L, seed)."""
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    cells = m.cells()
    if jobs == 1:
        clean = m.clean_image()
        rows = [run_cell(m, *c, clean=clean) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_cell_job, [(m, *c) for c in cells]))
    return sorted(rows, key=lambda r: (r.method, r.L, r.seed))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def emit_csv(rows, path) -> None:
    """Write rows with a header; floats are written round-trip exact."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    rows.sort(key=lambda r: (r.method, r.L, r.seed))
    tmp = f"{os.fspath(path)}.tmp"
    try:
        with open(tmp, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(COLUMNS)
            for r in rows:
                w.writerow([_fmt(v) for v in r.values()])
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def read_csv(path) -> list:
    """Parse a file written by ``emit_csv`` back into rows."""
    def num(s, conv=float):
        return None if s == "" else conv(s)

    with open(path, newline="", encoding="ascii") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != COLUMNS:
            raise ValueError("unexpected CSV header")
        return [
            ResultRow(
                method=d["method"], L=int(d["L"]), seed=int(d["seed"]),
                E_sub=float(d["E_sub"]), E_disc_round=float(d["E_disc_round"]),
                E_init=float(d["E_init"]), improve_pct=float(d["improve_pct"]),
                t_discrete_ms=num(d["t_discrete_ms"]), t_refine_ms=num(d["t_refine_ms"]),
                psnr_db=num(d["psnr_db"]), E_fit=float(d["E_fit"]), z_vars=int(d["z_vars"]),
                status=d["status"], out_hash=d["out_hash"],
            )
            for d in rd
        ]


def _list(v, conv):
    return tuple(conv(t) for t in v.split(",") if t.strip())


def parse_matrix(text: str) -> ExperimentMatrix:
    """Parse the ``key = value`` matrix format (see module docstring)."""
    kv = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise MatrixConfigError(f"line {lineno}: expected key = value")
        kv[key.strip().lower()] = val.strip()

    known = {"labels", "methods", "seeds", "image", "size", "noise_sigma", "sp_prob",
             "prior", "lambda", "trunc", "beta", "nu", "budget_nl", "timings",
             "max_iters", "tol"}
    unknown = sorted(set(kv) - known)
    if unknown:
        raise MatrixConfigError(f"unknown keys: {', '.join(unknown)}")

    try:
        args = {}
        if "labels" in kv:
            args["labels"] = _list(kv["labels"], int)
        if "methods" in kv:
            args["methods"] = _list(kv["methods"], lambda s: s.strip().lower())
        if "seeds" in kv:
            args["seeds"] = _list(kv["seeds"], int)
        if "image" in kv:
            args["image"] = kv["image"]
        if "size" in kv:
            args["size"] = int(kv["size"])
        args["noise"] = NoiseSpec(float(kv.get("noise_sigma", 0.05)), float(kv.get("sp_prob", 0.25)))
        base = default_prior(PairwiseKind(kv.get("prior", "tv")))
        lam = float(kv.get("lambda", base.weight))
        trunc = float(kv.get("trunc", base.truncation))
        args["prior"] = PairwiseModel(base.kind, lam, trunc if base.kind is not PairwiseKind.L1TV else math.inf)
        for k in ("beta", "nu"):
            if k in kv:
                args[k] = float(kv[k])
        if "budget_nl" in kv:
            args["budget_nl"] = int(kv["budget_nl"])
        if "timings" in kv:
            t = kv["timings"].lower()
            if t not in ("on", "off"):
                raise MatrixConfigError("timings must be on or off")
            args["timings"] = t == "on"
        args["solve_options"] = SolveOptions(
            max_iters=int(kv.get("max_iters", 100000)), tol=float(kv.get("tol", 1e-7))
        )
    except MatrixConfigError:
        raise
    except ValueError as exc:
        raise MatrixConfigError(str(exc)) from None
    return ExperimentMatrix(**args)


def load_matrix(path) -> ExperimentMatrix:
    with open(path, encoding="utf-8") as fh:
        return parse_matrix(fh.read())


def summarize(rows) -> str:
    """Plain-text table of the rows, for terminal output."""
    head = f"{'method':<10}{'L':>5}{'seed':>6}{'E_sub':>12}{'E_round':>12}{'E_init':>12}{'impr%':>8}{'psnr':>8}  status"
    out = [head]
    for r in rows:
        ps = "" if r.psnr_db is None else f"{r.psnr_db:.2f}"
        out.append(
            f"{r.method:<10}{r.L:>5}{r.seed:>6}{r.E_sub:>12.3f}{r.E_disc_round:>12.3f}"
            f"{r.E_init:>12.3f}{r.improve_pct:>8.2f}{ps:>8}  {r.status}"
        )
    return "\n".join(out)
