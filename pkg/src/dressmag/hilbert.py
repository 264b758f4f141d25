"""Truncated tensor-product spaces and the elementary operators built on them.

Basis ordering
--------------
Factors are ordered qubit, magnon, cavity (cavity only when present). The
qubit factor is stored as ``(|e>, |g>)`` so that ``sigma_z = diag(+1, -1)``.
A composite basis state ``|q, n_m, n_c>`` has linear index::

    (q * (N_m + 1) + n_m) * (N_c + 1) + n_c

with ``q = 0`` for ``|e>`` and ``q = 1`` for ``|g>``. Downstream code should go
through :meth:`SpaceSpec.index` / :meth:`SpaceSpec.labels` rather than doing
this arithmetic by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

QUBIT_LABELS = ("e", "g")
HERMITIAN_RTOL = 1e-12


class SpaceError(ValueError):
    """Invalid space specification or a factor missing from it."""


class HermiticityError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceSpec:
    """Qubit (x) magnon Fock (x) optional cavity Fock.

    ``magnon_cutoff`` is the highest kept Fock number, so the magnon factor
    has ``magnon_cutoff + 1`` levels. Same for ``cavity_cutoff``.
    """

    magnon_cutoff: int
    cavity_cutoff: int | None = None
    qubit_levels: int = 2

    def __post_init__(self):
        if self.qubit_levels != 2:
            raise SpaceError("qubit_levels is fixed at 2")
        if int(self.magnon_cutoff) != self.magnon_cutoff or self.magnon_cutoff < 1:
            raise SpaceError(f"magnon_cutoff must be an integer >= 1, got {self.magnon_cutoff!r}")
        if self.cavity_cutoff is not None and (
            int(self.cavity_cutoff) != self.cavity_cutoff or self.cavity_cutoff < 1
        ):
            raise SpaceError(f"cavity_cutoff must be an integer >= 1, got {self.cavity_cutoff!r}")

    @property
    def has_cavity(self) -> bool:
        return self.cavity_cutoff is not None

    @property
    def factor_dims(self) -> tuple[int, ...]:
        dims = (2, self.magnon_cutoff + 1)
        if self.has_cavity:
            dims += (self.cavity_cutoff + 1,)
        return dims

    @property
    def dim(self) -> int:
        return int(np.prod(self.factor_dims))

    def index(self, qubit: str, n_magnon: int, n_cavity: int = 0) -> int:
        if qubit not in QUBIT_LABELS:
            raise SpaceError(f"qubit label must be 'e' or 'g', got {qubit!r}")
        if not 0 <= n_magnon <= self.magnon_cutoff:
            raise SpaceError(f"magnon number {n_magnon} outside 0..{self.magnon_cutoff}")
        nc_dim = self.cavity_cutoff + 1 if self.has_cavity else 1
        if not 0 <= n_cavity < nc_dim:
            raise SpaceError(f"cavity number {n_cavity} outside 0..{nc_dim - 1}")
        q = QUBIT_LABELS.index(qubit)
        return (q * (self.magnon_cutoff + 1) + n_magnon) * nc_dim + n_cavity

    def labels(self, i: int) -> tuple:
        """Inverse of :meth:`index`: ``(qubit, n_magnon)`` or ``(qubit, n_magnon, n_cavity)``."""
        if not 0 <= i < self.dim:
            raise SpaceError(f"index {i} outside 0..{self.dim - 1}")
        multi = np.unravel_index(i, self.factor_dims)
        out = (QUBIT_LABELS[int(multi[0])],) + tuple(int(m) for m in multi[1:])
        return out

    def basis_state(self, qubit: str, n_magnon: int, n_cavity: int = 0) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(qubit, n_magnon, n_cavity)] = 1.0
        return psi


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex matrix on a :class:`SpaceSpec`.

    ``hermitian`` records what the builder promised; Hermitian builders run
    :func:`check_hermitian` before returning.
    """

    matrix: np.ndarray
    space: SpaceSpec
    hermitian: bool = True
    name: str = field(default="", compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise SpaceError(f"matrix shape {m.shape} does not match space dim {self.space.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.space.dim

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.space, self.hermitian, self.name + "^dag")

    def _coerce(self, other):
        if isinstance(other, Operator):
            if other.space != self.space:
                raise SpaceError("operators live on different spaces")
            return other.matrix
        return other

    def __add__(self, other: "Operator") -> "Operator":
        return Operator(self.matrix + self._coerce(other), self.space, False)

    def __sub__(self, other: "Operator") -> "Operator":
        return Operator(self.matrix - self._coerce(other), self.space, False)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.matrix * scalar, self.space, False)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.matrix, self.space, self.hermitian, "-" + self.name)

    def __matmul__(self, other: "Operator") -> "Operator":
        return Operator(self.matrix @ self._coerce(other), self.space, False)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def as_hermitian(self, name: str = "") -> "Operator":
        """Re-tag as Hermitian after verifying it."""
        op = Operator(self.matrix, self.space, True, name or self.name)
        check_hermitian(op)
        return op


def check_hermitian(op: Operator) -> Operator:
    scale = float(np.max(np.abs(op.matrix), initial=0.0))
    defect = op.hermiticity_defect()
    if defect > HERMITIAN_RTOL * scale:
        raise HermiticityError(
            f"operator {op.name or '<unnamed>'} not Hermitian: max|H - H^dag| = {defect:.3e}"
        )
    return op


# -- single-factor matrices ---------------------------------------------------

def _qubit_matrix(which: str) -> np.ndarray:
    # basis (|e>, |g>)
    if which == "z":
        return np.diag([1.0, -1.0]).astype(complex)
    if which == "plus":
        return np.array([[0, 1], [0, 0]], dtype=complex)
    if which == "minus":
        return np.array([[0, 0], [1, 0]], dtype=complex)
    if which == "x":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if which == "y":
        return np.array([[0, -1j], [1j, 0]], dtype=complex)
    if which == "identity":
        return np.eye(2, dtype=complex)
    raise ValueError(f"unknown qubit operator {which!r}")


def ladder_matrix(which: str, cutoff: int) -> np.ndarray:
    """Truncated bosonic operator on Fock states ``|0>..|cutoff>``."""
    n = cutoff + 1
    if which == "annihilate":
        return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)
    if which == "create":
        return np.diag(np.sqrt(np.arange(1, n)), -1).astype(complex)
    if which == "number":
        return np.diag(np.arange(n)).astype(complex)
    if which == "identity":
        return np.eye(n, dtype=complex)
    raise ValueError(f"unknown boson operator {which!r}")


def embed_product(ops: Sequence[np.ndarray], space: SpaceSpec | None = None,
                  hermitian: bool | None = None, name: str = "") -> Operator:
    """Kronecker product of one matrix per factor, in the space's factor order.

    When ``space`` is omitted it is inferred from the factor shapes
    (qubit, magnon[, cavity]).
    """
    if space is None:
        shapes = [np.shape(m)[0] for m in ops]
        if len(shapes) not in (2, 3):
            raise SpaceError(f"cannot infer a space from {len(shapes)} factors")
        space = SpaceSpec(shapes[1] - 1, shapes[2] - 1 if len(shapes) == 3 else None)
    dims = space.factor_dims
    if len(ops) != len(dims):
        raise SpaceError(f"expected {len(dims)} factor operators, got {len(ops)}")
    for k, (m, d) in enumerate(zip(ops, dims)):
        if np.shape(m) != (d, d):
            raise SpaceError(f"factor {k}: shape {np.shape(m)} does not match dimension {d}")
    mat = reduce(np.kron, [np.asarray(m, dtype=complex) for m in ops])
    if hermitian is None:
        hermitian = all(np.allclose(m, np.conj(np.transpose(m)), atol=0.0) for m in ops)
    return Operator(mat, space, hermitian, name)


def _identities(space: SpaceSpec) -> list[np.ndarray]:
    return [np.eye(d, dtype=complex) for d in space.factor_dims]


def pauli(which: str, space: SpaceSpec) -> Operator:
    """Qubit operator ``which`` in {'z', 'x', 'y', 'plus', 'minus'} embedded in ``space``.

    ``plus``/``minus`` are the raising/lowering operators sigma_+ = |e><g| and
    sigma_- = |g><e|; they come back flagged ``hermitian=False``.
    """
    if not isinstance(space, SpaceSpec):
        raise SpaceError("pauli() needs a SpaceSpec")
    factors = _identities(space)
    factors[0] = _qubit_matrix(which)
    herm = which in ("z", "x", "y")
    return embed_product(factors, space, hermitian=herm, name=f"sigma_{which}")


def boson(which: str, factor: str, space: SpaceSpec) -> Operator:
    """Truncated ladder/number operator for the ``'magnon'`` or ``'cavity'`` factor.

    Under truncation b^dag|N_max> = 0, so [b, b^dag] = 1 except on the
    |N_max><N_max| corner where it equals -N_max.
    """
    if factor == "magnon":
        pos, cutoff = 1, space.magnon_cutoff
    elif factor == "cavity":
        if not space.has_cavity:
            raise SpaceError("space has no cavity factor")
        pos, cutoff = 2, space.cavity_cutoff
    else:
        raise SpaceError(f"unknown bosonic factor {factor!r}")
    factors = _identities(space)
    factors[pos] = ladder_matrix(which, cutoff)
    return embed_product(factors, space, hermitian=(which == "number"), name=f"{factor}_{which}")


def identity(space: SpaceSpec) -> Operator:
    return Operator(np.eye(space.dim), space, True, "identity")


def excitation_number(space: SpaceSpec) -> Operator:
    """sigma_+ sigma_- + b^dag b (+ c^dag c): the conserved quantity of the RWA couplings."""
    op = pauli("plus", space) @ pauli("minus", space) + boson("number", "magnon", space)
    if space.has_cavity:
        op = op + boson("number", "cavity", space)
    return op.as_hermitian("excitation_number")
