"""Monte Carlo estimation of linear-statistic fluctuations and their covariances.

For each replica one GOE path is drawn and ``L_f(t) = sum_j f(Phi_j(Y(t)))`` is
recorded for every test function ``f`` and grid time ``t``.  Fluctuations are
centered by the cross-replica mean; covariances use the ``M - 1`` denominator
and are compared against :func:`goe_fluct.kernel.limiting_cov_series`.

Replicas draw from their own counter-based streams and write disjoint rows of
the result arrays, so the output does not depend on the number of threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from goe_fluct import _backend
from goe_fluct.covariance import (
    CovarianceError,
    CovarianceModel,
    TimeGrid,
    gram_factor,
    model_from_dict,
)
from goe_fluct.ensemble import sample_goe_path, standard_normals
from goe_fluct.kernel import Variant, limiting_cov_series
from goe_fluct.spectral import eigenvalues, parse_test_function

__all__ = [
    "ConfigError",
    "InsufficientSamplesError",
    "ExperimentConfig",
    "ExperimentReport",
    "NormalityDiagnostics",
    "ConvergenceRow",
    "ConvergenceStudy",
    "resolve_threads",
    "simulate",
    "run_fluctuation_experiment",
    "normality_diagnostics",
    "kolmogorov_distance",
    "covariance_with_se",
    "convergence_study",
    "LILLIEFORS_1PCT",
    "MIN_DIAGNOSTIC_SAMPLES",
]

MIN_DIAGNOSTIC_SAMPLES = 100
# large-sample 1% critical value of the Kolmogorov statistic with estimated
# mean and variance (Lilliefors): D_crit ~ 1.031 / sqrt(M)
LILLIEFORS_1PCT = 1.031
BOOTSTRAP_DRAWS = 200
BOOTSTRAP_SEED = 20240917
CHUNK = 32


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


class InsufficientSamplesError(ValueError):
    pass


_KEYS = {"model", "n", "grid", "functions", "replicas", "seed", "variants", "output_dir", "n_list"}
_REQUIRED = {"model", "n", "grid", "functions", "replicas", "seed"}


def _int_field(d, key, lo, hi=None):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"'{key}' must be an integer, got {v!r}")
    if v < lo or (hi is not None and v > hi):
        raise ConfigError(f"'{key}' = {v} out of range")
    return v


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: CovarianceModel
    n: int
    grid: TimeGrid
    functions: tuple
    replicas: int
    seed: int
    variants: tuple = (Variant.R_CORRECTED, Variant.PAPER_LITERAL)
    output_dir: str | None = None
    n_list: tuple | None = None

    def __post_init__(self):
        if self.replicas < 2:
            raise ConfigError(f"need at least 2 replicas, got {self.replicas}")
        if self.n < 1:
            raise ConfigError("matrix dimension must be at least 1")
        if not self.functions:
            raise ConfigError("at least one test function is required")
        for t in self.grid.times:
            if self.model.sigma(t) == 0.0:
                raise ConfigError(
                    f"degenerate time t={t}: sigma(t) = 0 for {self.model.kind}; remove it from the grid"
                )
        if self.n_list is not None:
            nl = list(self.n_list)
            if len(nl) < 3 or any(b <= a for a, b in zip(nl, nl[1:])) or nl[0] < 1:
                raise ConfigError("n_list must be strictly ascending with at least 3 entries")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = _REQUIRED - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        try:
            model = model_from_dict(d["model"])
            grid = TimeGrid(d["grid"])
        except (CovarianceError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        funcs = d["functions"]
        if not isinstance(funcs, list):
            raise ConfigError("'functions' must be a list of strings")
        try:
            functions = tuple(parse_test_function(f) for f in funcs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        try:
            variants = tuple(Variant(v) for v in d.get("variants", ["r_corrected", "paper_literal"]))
        except (ValueError, TypeError):
            raise ConfigError(f"bad variants {d.get('variants')!r}") from None
        n_list = d.get("n_list")
        if n_list is not None:
            if not isinstance(n_list, list) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in n_list
            ):
                raise ConfigError("'n_list' must be a list of integers")
            n_list = tuple(n_list)
        out = d.get("output_dir")
        if out is not None and not isinstance(out, str):
            raise ConfigError("'output_dir' must be a string")
        return cls(
            model=model,
            n=_int_field(d, "n", 1),
            grid=grid,
            functions=functions,
            replicas=_int_field(d, "replicas", 0),
            seed=_int_field(d, "seed", 0, 2**64 - 1),
            variants=variants,
            output_dir=out,
            n_list=n_list,
        )

    def to_dict(self) -> dict:
        out = {
            "model": self.model.to_dict(),
            "n": self.n,
            "grid": self.grid.times.tolist(),
            "functions": [f.label for f in self.functions],
            "replicas": self.replicas,
            "seed": self.seed,
            "variants": [v.value for v in self.variants],
        }
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        if self.n_list is not None:
            out["n_list"] = list(self.n_list)
        return out

    def with_n(self, n: int, seed: int | None = None, replicas: int | None = None):
        return ExperimentConfig(
            self.model,
            n,
            self.grid,
            self.functions,
            self.replicas if replicas is None else replicas,
            self.seed if seed is None else seed,
            self.variants,
            self.output_dir,
            None,
        )

    def column_labels(self) -> list[str]:
        return [f"{f.label}@t={t!r}" for f in self.functions for t in self.grid.times.tolist()]


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``GOE_FLUCT_THREADS``, else the CPU count."""
    if threads is None:
        raw = os.environ.get("GOE_FLUCT_THREADS")
        if raw is None or raw == "":
            return os.cpu_count() or 1
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"GOE_FLUCT_THREADS must be a positive integer, got {raw!r}") from None
    if threads < 1:
        raise ValueError(f"thread count must be positive, got {threads}")
    return threads


@dataclass(frozen=True, eq=False)
class SimulationResult:
    statistics: np.ndarray  # (M, r, K) uncentered linear statistics
    entry11: np.ndarray  # (M, K) unscaled X_{1,1}(t)
    eigenvalues: np.ndarray | None  # (M, K, n) when requested


def simulate(config: ExperimentConfig, threads: int | None = None, keep_eigenvalues=False):
    """Raw per-replica linear statistics (and optionally eigenvalues)."""
    threads = resolve_threads(threads)
    factor = gram_factor(config.model, config.grid)
    M, K, n = config.replicas, len(config.grid), config.n
    r = len(config.functions)
    stats = np.empty((M, r, K))
    entry = np.empty((M, K))
    eigs = np.empty((M, K, n)) if keep_eigenvalues else None
    root_n = math.sqrt(n)

    def work(lo, hi):
        for rep in range(lo, hi):
            path = sample_goe_path(config.model, n, config.grid, config.seed, rep, factor)
            entry[rep] = path.coeffs[:, 0] * root_n
            for k in range(K):
                ev = eigenvalues(path.at(k))
                if eigs is not None:
                    eigs[rep, k] = ev
                for i, f in enumerate(config.functions):
                    stats[rep, i, k] = np.sum(f(ev))

    chunks = [(lo, min(lo + CHUNK, M)) for lo in range(0, M, CHUNK)]
    if threads == 1 or len(chunks) == 1:
        for lo, hi in chunks:
            work(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for fut in [pool.submit(work, lo, hi) for lo, hi in chunks]:
                fut.result()
    if not np.all(np.isfinite(stats)):
        raise ArithmeticError("non-finite linear statistic encountered")
    return SimulationResult(stats, entry, eigs)


def covariance_with_se(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Unbiased sample covariance and the standard error of that estimate.

    The SE is ``sqrt(Var(p) / M)`` with ``p_m = (a_m - mean a)(b_m - mean b)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    M = a.size
    if M < 2:
        raise InsufficientSamplesError("need at least 2 samples")
    p = (a - a.mean()) * (b - b.mean())
    cov = float(p.sum() / (M - 1))
    se = float(np.std(p, ddof=1) / math.sqrt(M))
    return cov, se


def _cov_matrices(z):
    M, c = z.shape
    cov = np.empty((c, c))
    se = np.empty((c, c))
    for i in range(c):
        for j in range(i, c):
            cov[i, j], se[i, j] = covariance_with_se(z[:, i], z[:, j])
            cov[j, i], se[j, i] = cov[i, j], se[i, j]
    return cov, se


# ---------------------------------------------------------------- diagnostics

_erf = np.vectorize(math.erf, otypes=[float])


def kolmogorov_distance(samples) -> float:
    """``sup_x |F_M(x) - Phi((x - mean) / sd)|`` with the fitted normal (``ddof=1``)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    M = x.size
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise InsufficientSamplesError("samples have zero variance")
    cdf = 0.5 * (1.0 + _erf((x - x.mean()) / (sd * math.sqrt(2.0))))
    i = np.arange(1, M + 1)
    return float(max(np.max(i / M - cdf), np.max(cdf - (i - 1) / M)))


def _kolmogorov_bootstrap_se(x, draws=BOOTSTRAP_DRAWS, seed=BOOTSTRAP_SEED):
    rng = np.random.default_rng(seed)
    vals = np.array([kolmogorov_distance(rng.choice(x, size=x.size, replace=True)) for _ in range(draws)])
    return float(np.std(vals, ddof=1))


def _jackknife_moments(y):
    """Leave-one-out skewness and excess kurtosis (biased moment estimators)."""
    M = y.size
    y = y - y.mean()
    s1, s2, s3, s4 = (np.sum(y**k) for k in (1, 2, 3, 4))
    k = M - 1
    t1 = (s1 - y) / k
    t2 = (s2 - y**2) / k
    t3 = (s3 - y**3) / k
    t4 = (s4 - y**4) / k
    m2 = t2 - t1**2
    m3 = t3 - 3 * t1 * t2 + 2 * t1**3
    m4 = t4 - 4 * t1 * t3 + 6 * t1**2 * t2 - 3 * t1**4
    return m3 / m2**1.5, m4 / m2**2 - 3.0


def _jackknife_se(values):
    M = values.size
    return float(math.sqrt((M - 1) / M * np.sum((values - values.mean()) ** 2)))


@dataclass(frozen=True)
class NormalityDiagnostics:
    samples: int
    mean: float
    variance: float
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    kurtosis_se: float
    kolmogorov: float
    kolmogorov_se: float | None
    lilliefors_1pct: float

    def to_dict(self):
        return dict(self.__dict__)


def normality_diagnostics(samples, bootstrap: int = BOOTSTRAP_DRAWS) -> NormalityDiagnostics:
    """Skewness and excess kurtosis with jackknife SEs, and the Kolmogorov
    distance to the fitted normal (a proxy for total variation, which is not
    estimable from samples) with a bootstrap SE when ``bootstrap > 0``."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    M = x.size
    if M < MIN_DIAGNOSTIC_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_DIAGNOSTIC_SAMPLES} samples, got {M}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    y = x - x.mean()
    m2 = float(np.mean(y**2))
    if not m2 > 0:
        raise InsufficientSamplesError("samples have zero variance")
    skew = float(np.mean(y**3) / m2**1.5)
    kurt = float(np.mean(y**4) / m2**2 - 3.0)
    jk_skew, jk_kurt = _jackknife_moments(x)
    ks = kolmogorov_distance(x)
    ks_se = _kolmogorov_bootstrap_se(x, bootstrap) if bootstrap > 0 else None
    return NormalityDiagnostics(
        samples=M,
        mean=float(x.mean()),
        variance=float(np.var(x, ddof=1)),
        skewness=skew,
        skewness_se=_jackknife_se(jk_skew),
        excess_kurtosis=kurt,
        kurtosis_se=_jackknife_se(jk_kurt),
        kolmogorov=ks,
        kolmogorov_se=ks_se,
        lilliefors_1pct=LILLIEFORS_1PCT / math.sqrt(M),
    )


# ---------------------------------------------------------------- report


@dataclass(eq=False)
class ExperimentReport:
    config: ExperimentConfig
    columns: list  # (function label, t) per column, function-major
    means: np.ndarray  # sample means of the uncentered statistics
    z: np.ndarray  # (M, columns) centered fluctuations
    covariance: np.ndarray
    covariance_se: np.ndarray
    theory: dict  # variant value -> matrix
    diagnostics: list  # NormalityDiagnostics or None per column
    entry_covariance: np.ndarray  # Cov(Z_col, X_11(t_col))
    entry_covariance_se: np.ndarray
    backend: str = field(default_factory=lambda: _backend.NAME)

    @property
    def replicas(self) -> int:
        return self.z.shape[0]

    @property
    def seed(self) -> int:
        return self.config.seed

    def index(self, label: str, t: float) -> int:
        for c, (lab, tc) in enumerate(self.columns):
            if lab == label and tc == t:
                return c
        raise KeyError((label, t))

    def z_scores(self, variant: Variant) -> np.ndarray:
        return (self.covariance - self.theory[Variant(variant).value]) / self.covariance_se

    def theory_table(self) -> list[dict]:
        rows = []
        c = len(self.columns)
        for i in range(c):
            for j in range(i, c):
                row = {
                    "a": {"function": self.columns[i][0], "t": self.columns[i][1]},
                    "b": {"function": self.columns[j][0], "t": self.columns[j][1]},
                    "mc": float(self.covariance[i, j]),
                    "se": float(self.covariance_se[i, j]),
                }
                for key, mat in self.theory.items():
                    row[key] = float(mat[i, j])
                    row[f"z_{key}"] = float((self.covariance[i, j] - mat[i, j]) / self.covariance_se[i, j])
                rows.append(row)
        return rows

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "replicas": self.replicas,
            "seed": self.seed,
            "backend": self.backend,
            "columns": [{"function": lab, "t": t} for lab, t in self.columns],
            "means": self.means.tolist(),
            "covariance": self.covariance.tolist(),
            "covariance_se": self.covariance_se.tolist(),
            "theory": {k: v.tolist() for k, v in self.theory.items()},
            "theory_vs_mc": self.theory_table(),
            "diagnostics": [d.to_dict() if d is not None else None for d in self.diagnostics],
            "entry_covariance": self.entry_covariance.tolist(),
            "entry_covariance_se": self.entry_covariance_se.tolist(),
        }

    def replicas_csv(self) -> str:
        head = ["replica"] + [f"{lab}@t={t!r}" for lab, t in self.columns]
        lines = [",".join(_csv_field(h) for h in head)]
        for m, row in enumerate(self.z):
            lines.append(",".join([str(m)] + [format(v, ".17g") for v in row]))
        return "\n".join(lines) + "\n"


def _csv_field(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def theory_matrix(config: ExperimentConfig, variant: Variant) -> np.ndarray:
    times = config.grid.times.tolist()
    cols = [(f, t) for f in config.functions for t in times]
    c = len(cols)
    out = np.empty((c, c))
    for i in range(c):
        for j in range(i, c):
            (f, s), (g, t) = cols[i], cols[j]
            out[i, j] = out[j, i] = limiting_cov_series(f, g, config.model, s, t, variant=variant)
    return out


def run_fluctuation_experiment(
    config: ExperimentConfig, threads: int | None = None, bootstrap: int = BOOTSTRAP_DRAWS
) -> ExperimentReport:
    sim = simulate(config, threads)
    M, r, K = sim.statistics.shape
    flat = sim.statistics.reshape(M, r * K)
    means = flat.mean(axis=0)
    z = flat - means
    cov, se = _cov_matrices(z)
    theory = {v.value: theory_matrix(config, v) for v in config.variants}
    diags = [
        normality_diagnostics(z[:, c], bootstrap) if M >= MIN_DIAGNOSTIC_SAMPLES else None
        for c in range(r * K)
    ]
    ecov = np.empty(r * K)
    ese = np.empty(r * K)
    for c in range(r * K):
        ecov[c], ese[c] = covariance_with_se(z[:, c], sim.entry11[:, c % K])
    columns = [(f.label, t) for f in config.functions for t in config.grid.times.tolist()]
    return ExperimentReport(config, columns, means, z, cov, se, theory, diags, ecov, ese)


# ---------------------------------------------------------------- convergence


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    variance: float
    variance_se: float
    theory: float
    abs_error: float
    kolmogorov: float
    kolmogorov_se: float
    lilliefors_1pct: float

    @property
    def indistinguishable_from_gaussian(self) -> bool:
        return self.kolmogorov <= self.lilliefors_1pct


@dataclass(frozen=True)
class ConvergenceStudy:
    rows: tuple
    function: str
    t: float

    @property
    def monotone_within_slack(self) -> bool:
        """Kolmogorov distances non-increasing up to ``2 sqrt(se_k^2 + se_{k+1}^2)``."""
        for a, b in zip(self.rows, self.rows[1:]):
            slack = 2.0 * math.hypot(a.kolmogorov_se, b.kolmogorov_se)
            if b.kolmogorov > a.kolmogorov + slack:
                return False
        return True

    def to_dict(self):
        return {
            "function": self.function,
            "t": self.t,
            "monotone_within_slack": self.monotone_within_slack,
            "rows": [dict(r.__dict__, indistinguishable_from_gaussian=r.indistinguishable_from_gaussian) for r in self.rows],
        }


def convergence_study(
    config: ExperimentConfig,
    n_list,
    replicas: int | None = None,
    function_index: int = 0,
    time_index: int = 0,
    threads: int | None = None,
) -> ConvergenceStudy:
    """Variance error and Kolmogorov distance of one fluctuation across ``n_list``.

    Every ``n`` uses the same replica budget and a seed derived from
    ``(config.seed, n)``.
    """
    n_list = [int(v) for v in n_list]
    if len(n_list) < 3:
        raise ConfigError("convergence study needs at least 3 values of n")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n_list must be strictly ascending")
    f = config.functions[function_index]
    t = float(config.grid.times[time_index])
    theory = float(limiting_cov_series(f, f, config.model, t, t))
    rows = []
    for n in n_list:
        seed = _backend.mix64((config.seed + n) & (2**64 - 1))
        sim = simulate(config.with_n(n, seed=seed, replicas=replicas), threads)
        x = sim.statistics[:, function_index, time_index]
        var, var_se = covariance_with_se(x, x)
        ks = kolmogorov_distance(x)
        rows.append(
            ConvergenceRow(
                n=n,
                variance=var,
                variance_se=var_se,
                theory=theory,
                abs_error=float(abs(var - theory)),
                kolmogorov=ks,
                kolmogorov_se=_kolmogorov_bootstrap_se(x),
                lilliefors_1pct=LILLIEFORS_1PCT / math.sqrt(x.size),
            )
        )
    return ConvergenceStudy(tuple(rows), f.label, t)


def rng_self_test_normals(count: int, seed: int = 0) -> np.ndarray:
    """``count`` normals from one stream of the package generator (tag 3)."""
    return standard_normals(seed, 0, 3, 1, count)[0]
