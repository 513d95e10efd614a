"""Parametric working models: logistic and linear regression on feature maps.

Fitting is maximum likelihood (IRLS / damped Newton for logistic, rank-revealing
least squares for linear). Discrete designs are collapsed to their unique rows
with summed weights before fitting, which leaves the MLE, the score and the
information matrix unchanged while keeping memory flat in ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import MaxIterations, Separation, ShapeMismatch, Singular
from .terms import design, parse_term, product_terms, term_columns


@dataclass(frozen=True)
class FeatureMap:
    """Ordered list of design terms (see :mod:`pathpolicy.terms`).

    The design vector has ``len(terms)`` entries, one per term, in this order.
    """

    terms: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            parse_term(t)

    def __len__(self):
        return len(self.terms)

    @property
    def columns(self) -> tuple[str, ...]:
        return term_columns(self.terms)

    @property
    def has_intercept(self) -> bool:
        return "1" in self.terms

    def design(self, columns: Mapping[str, np.ndarray], n: int | None = None) -> np.ndarray:
        return design(self.terms, columns, n)

    def to_dict(self):
        return {"terms": list(self.terms)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["terms"]))

    # builders ------------------------------------------------------------
    @classmethod
    def saturated(cls, columns: Sequence[str], cards: Mapping[str, int] | None = None) -> "FeatureMap":
        """One parameter per cell of the columns' joint support.

        Binary columns enter as themselves, columns with more than two levels
        as indicators of levels 1..card-1.
        """
        cards = dict(cards or {})
        groups = []
        for c in columns:
            k = cards.get(c, 2)
            if k == 2:
                groups.append(("1", c))
            else:
                groups.append(("1", *(f"[{c}={lv}]" for lv in range(1, k))))
        return cls(tuple(product_terms(groups)))

    @classmethod
    def main_effects(cls, columns: Sequence[str], treatment: str | None = None,
                     interact: Sequence[str] | None = None, intercept: bool = True) -> "FeatureMap":
        """Intercept, main effects, and ``treatment × column`` interactions.

        ``interact`` defaults to every other column when a treatment is named.
        """
        cols = [c for c in columns if c != treatment]
        terms = ["1"] if intercept else []
        terms += cols
        if treatment is not None:
            terms.append(treatment)
            inter = cols if interact is None else [c for c in interact if c != treatment]
            terms += [f"{treatment}*{c}" for c in inter]
        return cls(tuple(terms))


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 100
    tol: float = 1e-8
    ridge: float = 0.0
    separation_norm: float = 30.0


@dataclass(frozen=True, eq=False)
class FittedModel:
    kind: str  # "logistic", "linear" or "categorical"
    coef: np.ndarray
    feature_map: FeatureMap | None = None
    iterations: int = 0
    grad_norm: float = 0.0
    sigma: float | None = None
    cov: np.ndarray | None = field(default=None, repr=False)
    n: float = 0.0
    ridge: float = 0.0

    @property
    def se(self) -> np.ndarray | None:
        return None if self.cov is None else np.sqrt(np.clip(np.diag(self.cov), 0, None))

    def predict_design(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != len(self.coef):
            raise ShapeMismatch(f"design has {x.shape[-1]} columns, model has {len(self.coef)} coefficients")
        eta = x @ self.coef
        return expit(eta) if self.kind == "logistic" else eta

    def predict_columns(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """Predict on raw columns; evaluates the design once per distinct row."""
        if self.kind == "categorical":
            raise ValueError("categorical models have no regression design")
        fmap = self.feature_map
        cols = fmap.columns
        if not cols:
            n = len(next(iter(columns.values()))) if columns else 1
            return np.full(n, float(self.predict_design(np.ones((1, len(fmap))))[0]))
        uniq, inv = unique_rows([columns[c] for c in cols])
        x = fmap.design(dict(zip(cols, uniq)), len(uniq[0]))
        return self.predict_design(x)[inv]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "coefficients": [float(c) for c in self.coef],
             "iterations": self.iterations, "grad_norm": self.grad_norm, "n": self.n}
        if self.feature_map is not None:
            d["feature_map"] = self.feature_map.to_dict()
        if self.sigma is not None:
            d["sigma"] = self.sigma
        if self.ridge:
            d["ridge"] = self.ridge
        if self.cov is not None:
            d["se"] = [float(s) for s in self.se]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "FittedModel":
        fm = FeatureMap.from_dict(d["feature_map"]) if "feature_map" in d else None
        se = d.get("se")
        cov = np.diag(np.square(se)) if se is not None else None
        return cls(d["kind"], np.asarray(d["coefficients"], dtype=float), fm, int(d.get("iterations", 0)),
                   float(d.get("grad_norm", 0.0)), d.get("sigma"), cov, float(d.get("n", 0.0)),
                   float(d.get("ridge", 0.0)))


def predict(model: FittedModel, x) -> float | np.ndarray:
    """Prediction for one design vector (or a matrix of them)."""
    x = np.asarray(x, dtype=float)
    out = model.predict_design(np.atleast_2d(x))
    return float(out[0]) if x.ndim == 1 else out


# logistic --------------------------------------------------------------------

def logistic_loglik(coef, x, y, w=None) -> float:
    eta = x @ coef
    w = np.ones(len(y)) if w is None else w
    # y*eta - log(1+exp(eta))
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def logistic_score(coef, x, y, w=None) -> np.ndarray:
    w = np.ones(len(y)) if w is None else w
    return x.T @ (w * (y - expit(x @ coef)))


def _check_rank(x, w):
    xs = x[w > 0]
    if xs.shape[0] < x.shape[1] or np.linalg.matrix_rank(xs) < x.shape[1]:
        raise Singular(f"design of rank {np.linalg.matrix_rank(xs) if len(xs) else 0} < {x.shape[1]} parameters")


def fit_logistic(features, labels, config: FitConfig | None = None, weights=None,
                 feature_map: FeatureMap | None = None) -> FittedModel:
    """Logistic MLE by Newton-Raphson with step halving.

    ``labels`` may be fractional in [0, 1] when rows carry aggregated
    ``weights`` (binomial counts). Raises :class:`Separation` when the
    coefficient norm exceeds ``config.separation_norm``.
    """
    cfg = config or FitConfig()
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ShapeMismatch("features and labels disagree in length")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("labels must lie in [0, 1]")
    p = x.shape[1]
    if cfg.ridge <= 0:
        _check_rank(x, w)

    def objective(b):
        return logistic_loglik(b, x, y, w) - 0.5 * cfg.ridge * float(b @ b)

    beta = np.zeros(p)
    ll = objective(beta)
    for it in range(1, cfg.max_iter + 1):
        mu = expit(x @ beta)
        score = x.T @ (w * (y - mu)) - cfg.ridge * beta
        gnorm = float(np.max(np.abs(score))) if p else 0.0
        if gnorm <= cfg.tol:
            return _logistic_result(x, w, beta, feature_map, it - 1, gnorm, cfg)
        info = (x * (w * mu * (1 - mu))[:, None]).T @ x + cfg.ridge * np.eye(p)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise Singular("information matrix is singular") from None
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            ll_new = objective(cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        beta, ll = cand, ll_new
        if float(np.linalg.norm(beta)) > cfg.separation_norm:
            raise Separation(f"coefficient norm {np.linalg.norm(beta):.1f} exceeds {cfg.separation_norm}")
        if np.max(np.abs(t * step)) < 1e-15 * max(1.0, float(np.max(np.abs(beta)))):
            # no representable progress left: accept if the score is at rounding level
            mu = expit(x @ beta)
            score = x.T @ (w * (y - mu)) - cfg.ridge * beta
            gnorm = float(np.max(np.abs(score)))
            if gnorm <= max(cfg.tol, 1e-12 * float(np.sum(w))):
                return _logistic_result(x, w, beta, feature_map, it, gnorm, cfg)
    raise MaxIterations(f"logistic fit did not converge in {cfg.max_iter} iterations (score {gnorm:.2e})")


def _logistic_result(x, w, beta, fmap, iterations, gnorm, cfg):
    mu = expit(x @ beta)
    info = (x * (w * mu * (1 - mu))[:, None]).T @ x + cfg.ridge * np.eye(len(beta))
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = None
    return FittedModel("logistic", beta, fmap, iterations, gnorm, None, cov, float(np.sum(w)), cfg.ridge)


# linear ------------------------------------------------------------------------

def fit_linear(features, targets, config: FitConfig | None = None, weights=None,
               feature_map: FeatureMap | None = None, rss_extra: float = 0.0,
               n_eff: float | None = None) -> FittedModel:
    """(Weighted) least squares via SVD; :class:`Singular` on rank deficiency.

    ``rss_extra`` / ``n_eff`` let callers that pre-aggregated rows pass the
    within-group sum of squares and true sample size for the residual scale.
    """
    cfg = config or FitConfig()
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ShapeMismatch("features and targets disagree in length")
    p = x.shape[1]
    sw = np.sqrt(w)
    xw, yw = x * sw[:, None], y * sw
    if cfg.ridge > 0:
        xw = np.vstack([xw, math.sqrt(cfg.ridge) * np.eye(p)])
        yw = np.concatenate([yw, np.zeros(p)])
    beta, _, rank, _ = np.linalg.lstsq(xw, yw, rcond=None)
    if rank < p:
        raise Singular(f"design of rank {rank} < {p} parameters")
    resid = y - x @ beta
    n = float(np.sum(w)) if n_eff is None else n_eff
    rss = float(np.sum(w * resid ** 2)) + rss_extra
    dof = max(n - p, 1.0)
    sigma = math.sqrt(rss / dof)
    xtwx = (x * w[:, None]).T @ x + cfg.ridge * np.eye(p)
    try:
        cov = sigma ** 2 * np.linalg.inv(xtwx)
    except np.linalg.LinAlgError:
        cov = None
    grad = x.T @ (w * resid) - cfg.ridge * beta
    return FittedModel("linear", beta, feature_map, 1, float(np.max(np.abs(grad))) if p else 0.0,
                       sigma, cov, n, cfg.ridge)


# column-level fitting with row aggregation --------------------------------------------

def unique_rows(arrays):
    """Distinct rows across parallel 1-D arrays: ``(list of unique columns, inverse)``.

    Each column is coded by its own sorted levels and the codes are combined
    in mixed radix, which is much faster than a lexicographic row sort.
    """
    codes = np.zeros(len(arrays[0]), dtype=np.int64)
    levels = []
    radix = 1
    for a in arrays:
        a = np.asarray(a)
        if a.dtype.kind in "iub" and len(a):
            lo, hi = int(a.min()), int(a.max())
            lv, c = np.arange(lo, hi + 1), a.astype(np.int64) - lo
        else:
            lv, c = np.unique(a, return_inverse=True)
        levels.append(lv)
        radix *= len(lv)
        if radix > (1 << 62):
            raise OverflowError("too many distinct rows to code")
        codes = codes * len(lv) + c.reshape(-1)
    if radix <= (1 << 22):
        present = np.bincount(codes, minlength=radix) > 0
        ucodes = np.flatnonzero(present)
        lookup = np.cumsum(present) - 1
        inv = lookup[codes]
    else:
        ucodes, inv = np.unique(codes, return_inverse=True)
    cols = []
    rem = ucodes
    for lv in reversed(levels):
        cols.append(lv[rem % len(lv)])
        rem = rem // len(lv)
    return cols[::-1], inv.reshape(-1)


def _groups(fmap: FeatureMap, columns: Mapping[str, np.ndarray], n: int):
    cols = fmap.columns
    if not cols:
        return np.ones((1, len(fmap))), np.zeros(n, dtype=np.int64), 1
    uniq, inv = unique_rows([columns[c] for c in cols])
    x = fmap.design(dict(zip(cols, uniq)), len(uniq[0]))
    return x, inv, len(uniq[0])


def fit_columns(kind: str, fmap: FeatureMap, columns: Mapping[str, np.ndarray], target,
                weights=None, config: FitConfig | None = None) -> FittedModel:
    """Fit ``target ~ fmap`` on raw columns, collapsing duplicate design rows."""
    y = np.asarray(target, dtype=float)
    n = len(y)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    x, inv, g = _groups(fmap, columns, n)
    wg = np.bincount(inv, weights=w, minlength=g)
    sy = np.bincount(inv, weights=w * y, minlength=g)
    keep = wg > 0
    ybar = np.where(keep, sy / np.where(keep, wg, 1.0), 0.0)
    if kind == "logistic":
        if np.any((y != 0) & (y != 1)):
            raise ValueError("logistic target must be 0/1")
        return fit_logistic(x[keep], ybar[keep], config, wg[keep], fmap)
    if kind == "linear":
        syy = np.bincount(inv, weights=w * y * y, minlength=g)
        within = float(np.sum(syy[keep] - sy[keep] ** 2 / wg[keep]))
        return fit_linear(x[keep], ybar[keep], config, wg[keep], fmap, rss_extra=max(within, 0.0),
                          n_eff=float(np.sum(w)))
    raise ValueError(f"unknown model kind {kind!r}")


def fit_categorical(values, card: int, weights=None) -> FittedModel:
    v = np.asarray(values, dtype=np.int64)
    w = np.ones(len(v)) if weights is None else np.asarray(weights, dtype=float)
    counts = np.bincount(v, weights=w, minlength=card)[:card]
    return FittedModel("categorical", counts / counts.sum(), None, 0, 0.0, None, None, float(w.sum()))
