"""Ordinary least squares via QR, with textbook inference statistics."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from ..errors import CollinearityError, InvalidValueError, NumericalError, SchemaError
from .design import TERM_NAMES, design_row

COEF_HEADER = ("term", "estimate", "std_error", "t_value", "significance")


@dataclass
class OlsFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    names: tuple
    s2: float = float("nan")
    r2: float = float("nan")
    adj_r2: float = float("nan")
    n: int = 0
    dof: int = 0
    fitted: np.ndarray = field(default=None, repr=False)
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def significance(self) -> list[str]:
        return [significance_mark(p) for p in self.p_values]

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def significance_mark(p: float) -> str:
    if not np.isfinite(p):
        return ""
    if p <= 0.01:
        return "**"
    if p <= 0.05:
        return "*"
    return ""


def ols_fit(X, y, names=None) -> OlsFit:
    """Least-squares coefficients, standard errors, t-values, p-values and R^2.

    ``R^2`` uses the centered total sum of squares and the adjusted value is
    ``1 - (1 - R^2)(n - 1)/(n - k)`` for ``k`` columns including the intercept.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, k = X.shape
    names = tuple(names) if names is not None else (TERM_NAMES if k == len(TERM_NAMES)
                                                     else tuple(f"x{j}" for j in range(k)))
    if y.shape[0] != n:
        raise InvalidValueError(f"{n} design rows but {y.shape[0]} responses")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericalError("non-finite values in regression inputs")
    if n <= k:
        raise NumericalError(f"underdetermined system: {n} rows for {k} coefficients")

    q, r = np.linalg.qr(X, mode="reduced")
    col_norms = np.linalg.norm(X, axis=0)
    dependent = [names[j] for j in range(k)
                 if col_norms[j] == 0 or abs(r[j, j]) <= 1e-9 * col_norms[j]]
    if dependent:
        raise CollinearityError(dependent)

    qty = q.T @ y
    beta = linalg.solve_triangular(r, qty)
    fitted = q @ qty
    resid = y - fitted
    dof = n - k
    rss = float(resid @ resid)
    s2 = rss / dof
    r_inv = linalg.solve_triangular(r, np.eye(k))
    xtx_inv_diag = np.sum(r_inv ** 2, axis=1)
    se = np.sqrt(s2 * xtx_inv_diag)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.nan)
    p = 2.0 * stats.t.sf(np.abs(t), dof)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    return OlsFit(beta, se, t, p, names, s2, r2, adj, n, dof, fitted, resid)


def predict(fit: OlsFit, factors) -> float:
    """Expected response for four encoded factor values."""
    if len(fit.coefficients) != len(TERM_NAMES):
        raise InvalidValueError("predict needs a 16-term factorial fit")
    x = np.asarray(factors, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidValueError("non-finite factor value")
    return float(design_row(x) @ fit.coefficients)


def coefficient_report(fit: OlsFit) -> str:
    """Plain-text table in term order; estimates tailed by * (p<=.05) or ** (p<=.01)."""
    lines = [f"{'term':<7}{'estimate':>12}{'std. error':>12}{'t-value':>10}"]
    for name, b, se, t, mark in zip(fit.names, fit.coefficients, fit.std_errors, fit.t_values,
                                    fit.significance):
        lines.append(f"{name:<7}{f'{b:.4g}{mark}':>12}{se:>12.4g}{t:>10.3f}")
    lines.append(f"R2={fit.r2:.4f} adjR2={fit.adj_r2:.4f} n={fit.n} dof={fit.dof}")
    return "\n".join(lines)


def save_coefficients(fit: OlsFit, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COEF_HEADER)
        for row in zip(fit.names, fit.coefficients, fit.std_errors, fit.t_values, fit.significance):
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), row[4]])
        fh.write(f"# r2={fit.r2!r} adj_r2={fit.adj_r2!r} n={fit.n} dof={fit.dof}\n")


_SUMMARY = re.compile(r"(\w+)=(\S+)")


def load_coefficients(path) -> OlsFit:
    names, est, se, tv, marks = [], [], [], [], []
    summary = {}
    with open(path, newline="") as fh:
        rows = [line for line in fh.read().splitlines() if line.strip()]
    if not rows or tuple(rows[0].split(",")) != COEF_HEADER:
        raise SchemaError(f"{path}: expected header {','.join(COEF_HEADER)}")
    for line in rows[1:]:
        if line.startswith("#"):
            summary.update(_SUMMARY.findall(line))
            continue
        parts = next(csv.reader([line]))
        if len(parts) != len(COEF_HEADER):
            raise SchemaError(f"{path}: malformed row {line!r}")
        try:
            names.append(parts[0])
            est.append(float(parts[1]))
            se.append(float(parts[2]))
            tv.append(float(parts[3]))
        except ValueError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
        marks.append(parts[4])
    dof = int(summary.get("dof", 0))
    t = np.array(tv)
    p = 2.0 * stats.t.sf(np.abs(t), dof) if dof > 0 else \
        np.array([0.001 if m == "**" else 0.03 if m == "*" else 0.5 for m in marks])
    return OlsFit(np.array(est), np.array(se), t, p, tuple(names),
                  r2=float(summary.get("r2", "nan")), adj_r2=float(summary.get("adj_r2", "nan")),
                  n=int(summary.get("n", 0)), dof=dof)
