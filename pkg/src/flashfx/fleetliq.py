"""Fleeting Liquidity labelling and the logit model linking it to crash traits."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classify import CrashClassification
from .detect import CrashEvent, Direction
from .errors import EmptyInput, InsufficientQuoteHistory, Separation, Singular
from .nbbo import NbboHistory

logger = logging.getLogger(__name__)

REGRESSORS = ("Time", "PctPriceChange", "Exch", "Vol", "UpDown", "NoTrades", "Type")
COEF_NAMES = ("Intercept",) + REGRESSORS

Z_1PCT = 2.576
Z_5PCT = 1.960


def detect_fleeting_liquidity(crash: CrashEvent, history: NbboHistory) -> bool:
    """True when no crash trade touched the SIP's best quote on the crash side.

    A trade hits the quote when, for a down crash, it prints at or above the
    national best bid in force just before it (mirror for up crashes).
    """
    if len(history) == 0:
        raise InsufficientQuoteHistory(f"no quotes for {crash.symbol}")
    down = crash.direction is Direction.DOWN
    for t in crash.trades:
        i = history.index_before_seq(t.seq)
        if i < 0:
            continue
        if down:
            if history.nbb_size[i] > 0 and t.price >= history.nbb[i]:
                return False
        elif history.nbo_size[i] > 0 and t.price <= history.nbo[i]:
            return False
    return True


@dataclass(frozen=True)
class FeatureVector:
    time: float
    pct_price_change: float
    exch: int
    vol: float
    up_down: int
    no_trades: int
    type: int
    fleet_liq: int

    def regressors(self) -> tuple:
        return (self.time, self.pct_price_change, self.exch, self.vol, self.up_down,
                self.no_trades, self.type)


def build_feature_rows(crashes: Sequence[CrashEvent], classifications: Sequence[CrashClassification],
                       labels: Sequence[bool]) -> list[FeatureVector]:
    """One regression row per crash.  Venue and type enter as their integer codes."""
    if not len(crashes) == len(classifications) == len(labels):
        raise ValueError("crashes, classifications and labels must align")
    return [
        FeatureVector(
            time=float(c.duration_ms),
            pct_price_change=abs(c.pct_change),
            exch=int(c.exchange),
            vol=float(c.total_volume),
            up_down=int(c.direction is Direction.UP),
            no_trades=c.n_trades,
            type=int(k.kind),
            fleet_liq=int(bool(y)),
        )
        for c, k, y in zip(crashes, classifications, labels)
    ]


def design_matrix(rows: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([(1.0,) + r.regressors() for r in rows], dtype=float).reshape(len(rows), 8)
    y = np.array([r.fleet_liq for r in rows], dtype=float)
    return X, y


def sigmoid(f):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(f, dtype=float)))


def log_likelihood(alpha, X, y) -> float:
    eta = X @ alpha
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score(alpha, X, y) -> np.ndarray:
    """Gradient of the log-likelihood."""
    return X.T @ (y - sigmoid(X @ alpha))


def information(alpha, X) -> np.ndarray:
    p = sigmoid(X @ alpha)
    return (X * (p * (1 - p))[:, None]).T @ X


def significance(z: float) -> str:
    if abs(z) > Z_1PCT:
        return "**"
    if abs(z) > Z_5PCT:
        return "*"
    return ""


@dataclass
class LogitModel:
    coef: np.ndarray
    std_err: np.ndarray
    z: np.ndarray
    log_likelihood: float
    converged: bool
    n_iter: int
    kept: np.ndarray
    names: tuple = COEF_NAMES
    precision: float | None = None
    n_obs: int = 0
    dropped: list = field(default_factory=list)

    def stars(self) -> list[str]:
        return [significance(z) if np.isfinite(z) else "" for z in self.z]


def _irls(Xs, y, tol, max_iter, ridge):
    p = Xs.shape[1]
    beta = np.zeros(p)
    norms = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = score(beta, Xs, y)
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        info = information(beta, Xs)
        try:
            step = np.linalg.solve(info, g)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(info + ridge * np.eye(p), g)
        beta = beta + step
        norms.append(float(np.linalg.norm(beta)))
        ll = log_likelihood(beta, Xs, y)
        if -2.0 * ll < 1e-6 * len(y):
            raise Separation("labels are perfectly separated; likelihood has no maximum")
    else:
        g = score(beta, Xs, y)
        converged = bool(np.max(np.abs(g)) < tol)
    if not converged and len(norms) > 5 and all(b > a for a, b in zip(norms[-6:], norms[-5:])):
        raise Separation("coefficients diverge; labels are (quasi-)separated")
    return beta, converged, it


def fit_logit(rows_or_X, y=None, tol: float = 1e-8, max_iter: int = 100, ridge: float = 1e-8) -> LogitModel:
    """Maximum-likelihood logit by iteratively reweighted least squares.

    Accepts FeatureVector rows or a design matrix whose first column is the
    intercept.  Regressors are rescaled internally for conditioning and the
    estimates mapped back to raw units.  Constant regressors are dropped
    with a warning and reported as NaN.
    """
    if y is None:
        X, y = design_matrix(rows_or_X)
    else:
        X, y = np.asarray(rows_or_X, float), np.asarray(y, float)
    n, p = X.shape
    if n == 0:
        raise EmptyInput("no rows to fit")
    if len(np.unique(y)) < 2:
        raise ValueError("need both label values to fit a logit")

    kept = np.ones(p, bool)
    dropped = []
    for j in range(1, p):
        if np.ptp(X[:, j]) == 0:
            kept[j] = False
            name = COEF_NAMES[j] if p == len(COEF_NAMES) else f"x{j}"
            dropped.append(name)
            warnings.warn(f"dropping constant regressor {name}", stacklevel=2)
    Xk = X[:, kept]
    scale = np.max(np.abs(Xk), axis=0)
    scale[scale == 0] = 1.0
    Xs = Xk / scale

    beta_s, converged, n_iter = _irls(Xs, y, tol, max_iter, ridge)
    info = information(beta_s, Xs)
    if np.linalg.matrix_rank(info) < info.shape[0]:
        raise Singular("information matrix is not invertible")
    cov_s = np.linalg.inv(info)

    coef = np.full(p, np.nan)
    se = np.full(p, np.nan)
    coef[kept] = beta_s / scale
    se[kept] = np.sqrt(np.diag(cov_s)) / scale
    with np.errstate(invalid="ignore", divide="ignore"):
        z = coef / se
    if not converged:
        logger.warning("logit did not converge in %d iterations", max_iter)
    model = LogitModel(coef, se, z, log_likelihood(beta_s, Xs, y), converged, n_iter, kept,
                       COEF_NAMES if p == len(COEF_NAMES) else tuple(f"x{j}" for j in range(p)),
                       n_obs=n, dropped=dropped)
    model.precision = classification_precision(model, X, y)
    return model


def _linear(model: LogitModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    return X[:, model.kept] @ model.coef[model.kept]


def predict(model: LogitModel, row) -> float | np.ndarray:
    """Fitted probability for a FeatureVector, a regressor tuple or a design matrix."""
    if isinstance(row, FeatureVector):
        x = np.array((1.0,) + row.regressors())
        return float(sigmoid(_linear(model, x))[0])
    X = np.asarray(row, float)
    if X.ndim == 1 and X.shape[0] == len(model.coef) - 1:
        X = np.concatenate([[1.0], X])
    p = sigmoid(_linear(model, X))
    return float(p[0]) if np.asarray(row).ndim == 1 else p


def classification_precision(model: LogitModel, rows_or_X, y=None) -> float:
    """Share of rows whose thresholded prediction (p > 0.5) equals the label."""
    if y is None:
        if len(rows_or_X) == 0:
            raise EmptyInput("no rows to score")
        X, y = design_matrix(rows_or_X)
    else:
        X, y = np.asarray(rows_or_X, float), np.asarray(y, float)
        if len(y) == 0:
            raise EmptyInput("no rows to score")
    pred = (sigmoid(_linear(model, X)) > 0.5).astype(float)
    return float(np.mean(pred == y))


def format_table2(model: LogitModel | None, monthly: dict[str, tuple[int, int]], reason: str = "") -> str:
    """Text report: Fleeting Liquidity counts per month and the logit fit.

    ``monthly`` maps a month label to (fleeting count, crash count).
    """
    lines = []
    months = sorted(monthly)
    tot_f = sum(f for f, _ in monthly.values())
    tot_n = sum(n for _, n in monthly.values())
    header = ["", *months, "Total"]
    lines.append("\t".join(header))
    lines.append("\t".join(["Total Crashes", *[str(monthly[m][1]) for m in months], str(tot_n)]))
    cells = []
    for f, n in [monthly[m] for m in months] + [(tot_f, tot_n)]:
        cells.append(f"{f} ({100.0 * f / n:.2f}%)" if n else "0 (n/a)")
    lines.append("\t".join(["Fleeting Liquidity", *cells]))
    lines.append("")
    if model is None:
        lines.append(f"logit: not estimated ({reason})" if reason else "logit: not estimated")
        return "\n".join(lines) + "\n"
    lines.append("\tFleetLiq")
    for name, c, z, s in zip(model.names, model.coef, model.z, model.stars()):
        if np.isnan(c):
            lines.append(f"{name}\t(dropped)")
            continue
        lines.append(f"{name}\t{c:.6g}{s}")
        lines.append(f"\t({z:.4f})")
    lines.append(f"Classification Precision\t{100.0 * model.precision:.2f}%")
    lines.append(f"Observations\t{model.n_obs}")
    lines.append(f"Converged\t{model.converged}")
    lines.append("** significant at 1% level; * significant at 5% level")
    return "\n".join(lines) + "\n"
