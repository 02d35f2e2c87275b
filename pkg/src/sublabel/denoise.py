"""
Robust image denoising on top of the discrete + refinement pipeline.

The data term is the truncated quadratic ``beta/2 * min((u - f)^2, nu)`` of
the observed intensity ``f``; the prior is L1TV or a truncated distance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import pgm
from .core import (
    ContinuousLabeling,
    DiscreteLabeling,
    GridGraph,
    LabelSpace,
    MrfProblem,
    PairwiseKind,
    PairwiseModel,
    UnsupportedPriorError,
    continuous_energy,
    discrete_energy,
    psnr,
)
from .cvxsolve import SolveOptions
from .discrete import DiscreteSolverKind, alpha_expansion, exact_convex
from .refine import (
    RefineKind,
    fit_data,
    fit_kappa,
    refine_lm,
    refine_qm,
    refine_ql,
    round_to_discrete,
    select_ranges,
    variable_count,
)

BENCHMARK_FILE = "benchmark32.pgm"


@dataclass(frozen=True)
class Image:
    pixels: np.ndarray

    def __post_init__(self):
        pix = np.array(self.pixels, dtype=float)
        if pix.ndim != 2 or pix.size == 0:
            raise ValueError("image must be a nonempty 2-D array")
        if np.any(pix < 0) or np.any(pix > 1) or not np.all(np.isfinite(pix)):
            raise ValueError("pixel values must lie in [0, 1]")
        pix.setflags(write=False)
        object.__setattr__(self, "pixels", pix)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def ravel(self) -> np.ndarray:
        return self.pixels.ravel()

    @classmethod
    def read(cls, path) -> "Image":
        return cls(pgm.read_pgm(path))

    def write(self, path) -> None:
        pgm.write_pgm(path, self.pixels)


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_sigma: float = 0.05
    salt_pepper_p: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be nonnegative")
        if not 0.0 <= self.salt_pepper_p <= 1.0:
            raise ValueError("salt_pepper_p must lie in [0, 1]")


def add_noise(img: Image, spec: NoiseSpec) -> Image:
    """
    Gaussian noise, then salt-and-pepper replacement, then clamping.

    Draws come from a Philox counter-based generator keyed by ``spec.seed``;
    pixel ``i`` (row-major) consumes the ``i``-th element of each of three
    streams (Gaussian, replace?, salt-or-pepper), so results are
    platform-stable.
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(spec.seed % 2**64)))
    n = img.pixels.size
    gauss = rng.standard_normal(n)
    hit = rng.random(n)
    coin = rng.random(n)
    x = img.ravel() + spec.gaussian_sigma * gauss
    replace = hit < spec.salt_pepper_p
    x = np.where(replace, np.where(coin < 0.5, 0.0, 1.0), x)
    return Image(np.clip(x, 0.0, 1.0).reshape(img.pixels.shape))


def synthetic_image(size: int = 32, seed: Optional[int] = None) -> Image:
    """
    Piecewise-constant test pattern with four regions.

    ``seed=None`` gives the fixed benchmark layout (background, bar, disk,
    triangle); an integer seed draws region intensities and geometry.
    Intensities are quantized to ``k / 255``.
    """
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    if seed is None:
        vals = (0.2, 0.55, 0.85, 0.4)
        bar = (0.1, 0.9, 0.6, 0.8)
        disk = (0.35, 0.35, 0.22)
        tri = 1.25
    else:
        rng = np.random.default_rng(seed)
        vals = tuple(rng.uniform(0.05, 0.95, 4))
        t0, t1 = sorted(rng.uniform(0.0, 1.0, 2))
        bar = (0.05, 0.95, min(t0, 0.8), min(t0, 0.8) + 0.2)
        disk = (*rng.uniform(0.25, 0.6, 2), rng.uniform(0.15, 0.3))
        tri = 1.0 + t1 * 0.5
    img = np.full((size, size), vals[0])
    img[(xx >= bar[0]) & (xx <= bar[1]) & (yy >= bar[2]) & (yy <= bar[3])] = vals[1]
    img[(xx - disk[0]) ** 2 + (yy - disk[1]) ** 2 <= disk[2] ** 2] = vals[2]
    img[xx + yy >= tri] = vals[3]
    return Image(np.round(img * 255.0) / 255.0)


def benchmark_image() -> Image:
    """The committed 32 x 32 benchmark pattern."""
    with resources.files("sublabel.data").joinpath(BENCHMARK_FILE).open("rb") as fh:
        return Image(pgm.decode_pgm(fh.read()).astype(float) / 255.0)


def default_prior(kind: PairwiseKind) -> PairwiseModel:
    if kind is PairwiseKind.L1TV:
        return PairwiseModel.l1tv(0.6)
    if kind is PairwiseKind.TRUNCATED_LINEAR:
        return PairwiseModel.truncated_linear(0.6, 0.6)
    return PairwiseModel.truncated_quadratic(3.0, 0.7)


@dataclass(frozen=True)
class DenoiseConfig:
    labels: int = 10
    beta: float = 25.0
    nu: float = 0.025
    prior: PairwiseModel = field(default_factory=lambda: default_prior(PairwiseKind.L1TV))
    solver: DiscreteSolverKind = DiscreteSolverKind.ALPHA_EXPANSION
    refine: RefineKind = RefineKind.QL
    solve_options: SolveOptions = field(default_factory=SolveOptions)
    max_cycles: int = 100

    def __post_init__(self):
        if self.labels < 2:
            raise ValueError("need at least two labels")
        if self.beta <= 0 or self.nu <= 0:
            raise ValueError("beta and nu must be positive")


@dataclass(frozen=True)
class TruncatedQuadraticData:
    """Analytic data term ``beta/2 * min((u - f)^2, nu)``, vectorized over nodes."""

    observed: np.ndarray
    beta: float
    nu: float

    def __call__(self, u):
        d = np.asarray(u, dtype=float) - self.observed
        return 0.5 * self.beta * np.minimum(d * d, self.nu)


def build_problem(noisy: Image, cfg: DenoiseConfig) -> MrfProblem:
    f = noisy.ravel()
    labels = LabelSpace(0.0, 1.0, cfg.labels)
    data = TruncatedQuadraticData(f.copy(), cfg.beta, cfg.nu)
    d = labels.levels[None, :] - f[:, None]
    unary = 0.5 * cfg.beta * np.minimum(d * d, cfg.nu)
    return MrfProblem(
        grid=GridGraph(noisy.height, noisy.width),
        labels=labels,
        unary=unary,
        pairwise=cfg.prior,
        unary_fn=data,
    )


@dataclass
class PipelineReport:
    """
    Energies and timings of one pipeline run.

    ``sublabel_energy`` is the energy of the continuous output under the
    original model (analytic data term); ``fitted_objective`` is the optimum
    of the refinement program, i.e. the energy under the fitted convex model.
    ``discretized_energy`` is the discrete energy of the output rounded to
    the nearest labels.
    """

    labels: int
    solver: str
    refinement: str
    discrete_energy: float
    sublabel_energy: float
    discretized_energy: float
    fitted_objective: float
    psnr: Optional[float]
    t_discrete: float
    t_refine: float
    num_vars: int
    discrete_labeling: DiscreteLabeling = field(repr=False)
    labeling: ContinuousLabeling = field(repr=False)

    @property
    def improvement_pct(self) -> float:
        if self.discretized_energy == 0.0:
            return 0.0
        return 100.0 * (self.discretized_energy - self.sublabel_energy) / self.discretized_energy


def refine_labeling(p: MrfProblem, u_d: DiscreteLabeling, kind: RefineKind, opts: SolveOptions = SolveOptions()):
    """Refinement stage. Returns ``(labeling, objective, variable count)``."""
    if kind is RefineKind.NONE:
        return (
            ContinuousLabeling(p.labels.levels[np.asarray(u_d.idx)]),
            discrete_energy(p, u_d),
            0,
        )
    r = select_ranges(p, u_d)
    if kind is RefineKind.LM:
        x, obj = refine_lm(p, r, opts)
    else:
        f = fit_data(p, r)
        if kind is RefineKind.QM:
            x, obj = refine_qm(p, r, f, opts)
        else:
            x, obj = refine_ql(p, r, f, fit_kappa(p, r), opts)
    return x, obj, variable_count(p, r, kind)


def run_pipeline(noisy: Image, cfg: DenoiseConfig, clean: Optional[Image] = None):
    """Discrete solve, then refinement. Returns ``(Image, PipelineReport)``."""
    if cfg.solver is DiscreteSolverKind.EXACT_CONVEX and cfg.prior.kind is not PairwiseKind.L1TV:
        raise UnsupportedPriorError("the exact solver needs the L1TV prior")
    p = build_problem(noisy, cfg)

    t0 = time.perf_counter()
    if cfg.solver is DiscreteSolverKind.EXACT_CONVEX:
        disc = exact_convex(p)
    else:
        disc = alpha_expansion(p, max_cycles=cfg.max_cycles)
    t1 = time.perf_counter()
    x, obj, z = refine_labeling(p, disc.labeling, cfg.refine, cfg.solve_options)
    t2 = time.perf_counter()

    out = Image(np.clip(x.x, 0.0, 1.0).reshape(noisy.pixels.shape))
    quality = None
    if clean is not None:
        quality = psnr(ContinuousLabeling(clean.ravel()), ContinuousLabeling(out.ravel()))
    report = PipelineReport(
        labels=cfg.labels,
        solver=cfg.solver.value,
        refinement=cfg.refine.value,
        discrete_energy=disc.energy,
        sublabel_energy=continuous_energy(p, x),
        discretized_energy=discrete_energy(p, round_to_discrete(p, x)),
        fitted_objective=float(obj),
        psnr=quality,
        t_discrete=t1 - t0,
        t_refine=t2 - t1,
        num_vars=z,
        discrete_labeling=disc.labeling,
        labeling=x,
    )
    return out, report
