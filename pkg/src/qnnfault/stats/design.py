"""Full 2^4 factorial design over the four campaign factors.

Factor encodings: X1 is the bit width (1 or 2), X2 the fault mode (SEU=0,
MBU=1), X3 the fault domain (weight=0, activation=1) for the across-network
model or the layer number (1-9) for the in-layer model, X4 the fault count.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..campaign import ResultsTable
from ..errors import InvalidValueError, SchemaError

TERMS = tuple(c for r in range(5) for c in itertools.combinations((1, 2, 3, 4), r))
TERM_NAMES = tuple("b" + ("".join(map(str, t)) or "0") for t in TERMS)

MODE_CODES = {"SEU": 0, "MBU": 1}
DOMAIN_CODES = {"weight": 0, "activation": 1}
KINDS = ("across", "in-layer")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "across"
    max_layer: int = 9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")

    @property
    def terms(self):
        return TERMS

    @property
    def names(self):
        return TERM_NAMES

    def encode(self, wbits, mode, scope, n_faults) -> tuple[float, float, float, float]:
        """Encode raw factor levels; ``scope`` is a domain name or a layer number."""
        if wbits not in (1, 2):
            raise InvalidValueError(f"bit width {wbits!r} outside {{1, 2}}")
        m = str(mode).upper()
        if m not in MODE_CODES:
            raise InvalidValueError(f"unknown fault mode {mode!r}")
        if self.kind == "across":
            if scope not in DOMAIN_CODES:
                raise InvalidValueError(f"unknown fault domain {scope!r}")
            x3 = DOMAIN_CODES[scope]
        else:
            if not (isinstance(scope, (int, np.integer)) and 1 <= scope <= self.max_layer):
                raise InvalidValueError(f"layer {scope!r} outside 1..{self.max_layer}")
            x3 = int(scope)
        if n_faults < 0:
            raise InvalidValueError("fault count must be non-negative")
        return float(wbits), float(MODE_CODES[m]), float(x3), float(n_faults)


def design_row(factors) -> np.ndarray:
    """Intercept, mains and all interactions of four encoded factors, in term order."""
    x = np.asarray(factors, dtype=np.float64)
    if x.shape[-1] != 4:
        raise InvalidValueError("expected four encoded factors")
    cols = [np.prod(x[..., [i - 1 for i in t]], axis=-1) if t else np.ones(x.shape[:-1]) for t in TERMS]
    return np.stack(cols, axis=-1)


def build_design_matrix(table: ResultsTable, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    if len(table) == 0:
        raise SchemaError("cannot build a design matrix from an empty table")
    layers = table.column("layer")
    if spec.kind == "across" and np.any(layers != 0):
        raise SchemaError("across-network model needs whole-network rows only (layer == 0)")
    if spec.kind == "in-layer" and np.any((layers < 1) | (layers > spec.max_layer)):
        raise SchemaError(f"in-layer model needs rows with layer in 1..{spec.max_layer}")
    enc = np.array([spec.encode(r.wbits, r.fault_mode, r.domain if spec.kind == "across" else r.layer,
                                r.n_faults) for r in table.records])
    return design_row(enc), table.column("faulty_acc").astype(np.float64)
