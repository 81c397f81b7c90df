"""Config-driven bound-verification and rate experiments with CSV output."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds
from .lattice import CovarianceModel, An_is_degenerate, AN_FLOOR, block_cov_exact, compute_An
from .metrics import (bootstrap_stderr, default_battery, smooth_metric_report,
                      standardize_block_sums, wasserstein_to_std_normal)
from .samplers import FIELD_KINDS, CertificateError, FieldSpec, derive_seed, sample_block_sums

log = logging.getLogger(__name__)

CSV_HEADER = ("n", "d", "replicates", "empirical_d1", "mc_stderr", "A_n", "kappa1",
              "bound", "valid", "rate_only", "seed")
CONFIG_KEYS = {"mode", "field.kind", "field.d", "field.c", "field.lambda", "field.K",
               "n_list", "replicates", "p", "anchors", "seed", "output"}
OPTIONAL_KEYS = {"field.c", "field.lambda", "field.K", "p", "anchors", "output", "field.params"}
MODES = ("univariate", "multivariate", "rate")
DEFAULT_REPLICATES = {"univariate": 10_000, "rate": 10_000, "multivariate": 2_000}


class ConfigError(ValueError):
    pass


class PreconditionError(ValueError):
    """A hypothesis of the bound being checked fails for this configuration."""


@dataclass
class ExperimentConfig:
    mode: str
    field: FieldSpec
    n_list: list[int]
    replicates: int
    seed: int = 0
    p: int = 1
    anchors: list[tuple[int, ...]] | None = None
    output: str | None = None
    bootstrap: int = 200
    workers: int = 1
    an_floor: float = AN_FLOOR
    model: CovarianceModel | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError("n_list must hold positive integers")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError("n_list must be strictly increasing")
        if self.replicates < 2:
            raise ConfigError("need at least 2 replicates")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.anchors is not None:
            self.anchors = [tuple(int(v) for v in k) for k in self.anchors]
            if len(self.anchors) != self.p or any(len(k) != self.field.d for k in self.anchors):
                raise ConfigError("anchors must be p lattice vectors of dimension d")

    @property
    def covariance_model(self) -> CovarianceModel | None:
        return self.model if self.model is not None else self.field.analytic_model

    def anchors_for(self, n: int) -> list[tuple[int, ...]]:
        if self.anchors is not None:
            return self.anchors
        d = self.field.d
        return [((q * n),) + (0,) * (d - 1) for q in range(self.p)]


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key == "field":
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config(source: str | Path | dict) -> ExperimentConfig:
    """Parse a JSON config; ``field`` may be nested or given as dotted keys."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    flat = _flatten(doc)
    unknown = set(flat) - CONFIG_KEYS - {"field.params"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = CONFIG_KEYS - OPTIONAL_KEYS - set(flat)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    try:
        spec = FieldSpec(
            kind=str(flat["field.kind"]),
            d=int(flat["field.d"]),
            c=float(flat.get("field.c", 0.0)),
            lam=float(flat.get("field.lambda", 1.0)),
            K=None if flat.get("field.K") is None else float(flat["field.K"]),
            params=flat.get("field.params") or {},
        )
        mode = str(flat["mode"])
        return ExperimentConfig(
            mode=mode,
            field=spec,
            n_list=[int(n) for n in flat["n_list"]],
            replicates=int(flat["replicates"] if flat["replicates"] is not None
                           else DEFAULT_REPLICATES.get(mode, 10_000)),
            seed=int(flat["seed"]),
            p=int(flat.get("p") or 1),
            anchors=flat.get("anchors"),
            output=flat.get("output"),
        )
    except ConfigError:
        raise
    except CertificateError as exc:
        raise PreconditionError(str(exc)) from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class ExperimentRow:
    n: int
    d: int
    replicates: int
    empirical_d1: float
    mc_stderr: float
    A_n: float
    kappa1: float
    bound: float
    valid: bool
    rate_only: bool
    seed: int

    @property
    def passed(self) -> bool:
        """Empirical distance within the bound up to 3 Monte Carlo standard errors."""
        if not self.valid or self.rate_only:
            return True
        return self.empirical_d1 <= self.bound + 3 * self.mc_stderr


# --- univariate ----------------------------------------------------------------

def _model_and_An(config: ExperimentConfig, n: int) -> tuple[CovarianceModel, float]:
    model = config.covariance_model
    if model is None:
        raise PreconditionError(f"no analytic covariance model for {config.field.kind}")
    An = compute_An(model, n)
    if An_is_degenerate(An, config.an_floor):
        raise PreconditionError(f"A_n = {An:.3g} at n={n} is below the floor {config.an_floor:g}")
    return model, An


def univariate_bound(spec: FieldSpec, model: CovarianceModel, n: int, An: float) -> bounds.BoundReport:
    """Bound on d1 of the standardized block sum of side ``n``.

    Independent fields use the NA bound with zero covariance sum, which is
    ``5 K / sqrt(n^d A_n)``; dependent fields use the exponential-decay bound.
    """
    K, d = spec.bound, spec.d
    if spec.kind == "iid_rademacher":
        return bounds.univariate_na_bound(K / math.sqrt(n ** d * An), 0.0)
    return bounds.field_bound_univariate(d, K, model.lam, model.kappa0, An, n)


def row_kappa1(spec: FieldSpec, model: CovarianceModel, An: float) -> float:
    if spec.kind == "iid_rademacher":
        return 5 * spec.bound / math.sqrt(An)
    return bounds.field_kappa1(spec.d, spec.bound, model.lam, model.kappa0, An)


def recompute_bound(row: ExperimentRow, spec: FieldSpec, model: CovarianceModel | None = None) -> float:
    model = model if model is not None else spec.analytic_model
    return univariate_bound(spec, model, row.n, row.A_n).value


def run_univariate_experiment(config: ExperimentConfig) -> list[ExperimentRow]:
    spec = config.field
    if config.mode not in ("univariate", "rate"):
        raise ConfigError("univariate experiment needs mode univariate or rate")
    if spec.kind not in FIELD_KINDS:
        raise ConfigError(f"{spec.kind} is not a field kind")
    if not math.isfinite(spec.bound):
        raise PreconditionError("the field is not almost surely bounded")
    d = spec.d
    plan = [(n,) + _model_and_An(config, n) for n in config.n_list]  # refuse before simulating
    rows = []
    for n, model, An in plan:
        stream = derive_seed(config.seed, n)
        S = sample_block_sums(spec, [(0,) * d], n, config.replicates, stream, config.workers)[:, 0]
        W = standardize_block_sums(S, n, d, An).values
        emp = wasserstein_to_std_normal(W)
        se = bootstrap_stderr(W, wasserstein_to_std_normal, config.bootstrap, seed=stream)
        rep = univariate_bound(spec, model, n, An)
        rows.append(ExperimentRow(n, d, config.replicates, emp, se, An, row_kappa1(spec, model, An),
                                  rep.value, rep.valid, rep.rate_only, config.seed))
        log.info("n=%d d1=%.5f se=%.5f bound=%.5f valid=%s", n, emp, se, rep.value, rep.valid)
    return rows


# --- multivariate ------------------------------------------------------------------

@dataclass
class MultivariateCheck:
    n: int
    A_n: float
    Sigma: np.ndarray
    threshold: float
    gershgorin_valid: bool
    gershgorin_bound: float
    max_abs_inverse: float
    gershgorin_ok: bool
    separated_bound: float
    max_neg_offdiag: float
    separated_ok: bool
    psi_n: float
    sigma_inv_half_inf: float
    rate: bounds.BoundReport | None = None
    notes: list[str] = field(default_factory=list)


def check_separation(anchors: Sequence[Sequence[int]], n: int) -> None:
    for i, a in enumerate(anchors):
        for b in anchors[i + 1:]:
            if max(abs(x - y) for x, y in zip(a, b)) < n:
                raise PreconditionError(
                    f"anchors {tuple(a)} and {tuple(b)} are closer than n={n} in sup-norm; "
                    "blocks must be disjoint")


def block_covariance_matrix(model: CovarianceModel, anchors, n: int) -> np.ndarray:
    p = len(anchors)
    S = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            S[i, j] = S[j, i] = block_cov_exact(model, anchors[i], anchors[j], n)
    return S


def multivariate_check(config: ExperimentConfig, n: int) -> MultivariateCheck:
    """Exact covariance, Gershgorin and separated-covariance checks at one ``n``."""
    p, d = config.p, config.field.d
    anchors = config.anchors_for(n)
    check_separation(anchors, n)
    model, An = _model_and_An(config, n)
    consts = bounds.decay_constants(model.lam, d)
    Sigma = block_covariance_matrix(model, anchors, n)
    gersh = bounds.sigma_inv_infty_bound(p, d, n, An, model.kappa0, consts)
    sep = bounds.separated_block_cov_bound(consts, model.kappa0, n)
    off = -Sigma[~np.eye(p, dtype=bool)]
    max_neg = float(off.max()) if off.size else 0.0
    notes = []
    try:
        psi, s = bounds.psi_n_from_sigma(Sigma, n, d)
        max_inv = float(np.abs(np.linalg.inv(Sigma)).max())
    except ValueError as exc:
        notes.append(str(exc))
        psi = s = max_inv = math.nan
    gersh_ok = (not gersh.valid) or max_inv <= gersh.value * (1 + 1e-9)
    rate = None
    if math.isfinite(psi):
        rate = bounds.field_bound_multivariate(d, p, model.lam, model.kappa0, An, n, psi)
    return MultivariateCheck(n, An, Sigma, gersh.details["threshold"], gersh.valid, gersh.value,
                             max_inv, gersh_ok, sep, max_neg, max_neg <= sep * (1 + 1e-12),
                             psi, s, rate, notes)


def multivariate_checks(config: ExperimentConfig) -> list[MultivariateCheck]:
    return [multivariate_check(config, n) for n in config.n_list]


def run_multivariate_experiment(config: ExperimentConfig,
                                checks: list[MultivariateCheck] | None = None) -> list[ExperimentRow]:
    """Rate-only rows for ``p`` separated block sums.

    ``empirical_d1`` holds the smooth-metric lower bound from the default
    battery.  Analytic checks for each ``n`` are appended to ``checks`` when a
    list is supplied.  An ``n`` whose covariance is not positive definite is
    skipped with a warning.
    """
    spec, p, d = config.field, config.p, config.field.d
    if config.mode != "multivariate":
        raise ConfigError("multivariate experiment needs mode multivariate")
    if spec.kind not in FIELD_KINDS:
        raise ConfigError(f"{spec.kind} is not a field kind")
    for n in config.n_list:
        check_separation(config.anchors_for(n), n)
    battery = default_battery(p)
    rows = []
    for n in config.n_list:
        chk = multivariate_check(config, n)
        if checks is not None:
            checks.append(chk)
        if chk.rate is None:
            log.warning("n=%d skipped: %s", n, "; ".join(chk.notes))
            continue
        stream = derive_seed(config.seed, n)
        S = sample_block_sums(spec, config.anchors_for(n), n, config.replicates, stream, config.workers)
        W = S @ bounds.inv_sqrt_spd(chk.Sigma)
        rep = smooth_metric_report(W, battery, seed=stream)
        rows.append(ExperimentRow(n, d, config.replicates, rep.value, rep.stderr, chk.A_n, math.nan,
                                  chk.rate.value, chk.rate.valid and chk.gershgorin_valid, True,
                                  config.seed))
    return rows


# --- post-processing -----------------------------------------------------------------

def fit_rate(rows: Sequence[ExperimentRow], column: str = "bound") -> tuple[float, float]:
    """Least-squares slope and intercept of ``log(column)`` against ``log(n)`` over valid rows."""
    pts = [(r.n, getattr(r, column)) for r in rows if r.valid]
    pts = [(n, v) for n, v in pts if v > 0 and math.isfinite(v)]
    if len(pts) < 3:
        raise ValueError("need at least 3 valid rows to fit a rate")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def rows_to_csv(rows: Sequence[ExperimentRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


def emit_csv(rows: Sequence[ExperimentRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(rows_to_csv(rows).encode("utf-8"))
    return path


def read_csv(path: str | Path) -> list[ExperimentRow]:
    casts = {f.name: f.type for f in fields(ExperimentRow)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for k, v in rec.items():
                t = casts[k]
                if t == "bool":
                    vals[k] = v == "true"
                elif t == "int":
                    vals[k] = int(v)
                else:
                    vals[k] = float(v)
            out.append(ExperimentRow(**vals))
    return out
