"""Named nonlinearities that spec files may refer to.

Every entry is a polynomial coordinate map: a sum of monomials
``coeff * prod_j x_j**e_j`` per output coordinate, each of total degree at
least two, so ``f(0) = 0`` and the Lipschitz modulus vanishes at the origin.
Maps are plain picklable objects so experiments can run in worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PolynomialMap", "RegistryError", "available", "build_nonlinearity"]


class RegistryError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass(frozen=True)
class Term:
    out: int
    coeff: complex
    exponents: tuple[int, ...]


class PolynomialMap:
    """Vectorised polynomial map on arrays of shape ``(..., d)``."""

    def __init__(self, dim: int, terms: list[Term], label: str = "polynomial"):
        self.dim = dim
        self.terms = list(terms)
        self.label = label
        for t in self.terms:
            if not 0 <= t.out < dim:
                raise ValueError(f"term output index {t.out} outside 0..{dim - 1}")
            if len(t.exponents) != dim or any(e < 0 for e in t.exponents):
                raise ValueError(f"term exponents must be {dim} nonnegative integers")
            if sum(t.exponents) < 2:
                raise ValueError("every term needs total degree >= 2 so that f(0)=0 and "
                                 "the Lipschitz modulus vanishes at 0")
        self._exp = np.array([t.exponents for t in self.terms], dtype=float).reshape(-1, dim)
        self._scatter = np.zeros((len(self.terms), dim), dtype=complex)
        for k, t in enumerate(self.terms):
            self._scatter[k, t.out] = t.coeff

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        if not self.terms:
            return np.zeros_like(x)
        # 0**0 == 1, so absent variables drop out of each monomial
        mono = np.prod(x[..., None, :] ** self._exp, axis=-1)
        return mono @ self._scatter

    def __repr__(self):
        return f"PolynomialMap(dim={self.dim}, label={self.label!r}, terms={len(self.terms)})"


def _coeff(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError("complex coefficients are written [re, im]")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def _power_map(dim, params, power, label):
    coeff = _coeff(params.get("coeff", 1.0))
    coords = params.get("coords", list(range(dim)))
    terms = []
    for i in coords:
        e = [0] * dim
        e[int(i)] = power
        terms.append(Term(int(i), coeff, tuple(e)))
    return PolynomialMap(dim, terms, label)


def _zero(dim, params):
    return PolynomialMap(dim, [], "zero")


def _square(dim, params):
    return _power_map(dim, params, 2, "square")


def _cube(dim, params):
    return _power_map(dim, params, 3, "cube")


def _polynomial(dim, params):
    raw = params.get("terms")
    if not raw:
        raise ValueError("polynomial nonlinearity needs a non-empty 'terms' list")
    terms = []
    for k, t in enumerate(raw):
        try:
            terms.append(Term(int(t["out"]), _coeff(t["coeff"]), tuple(int(e) for e in t["exponents"])))
        except KeyError as exc:
            raise ValueError(f"terms[{k}] is missing key {exc.args[0]!r}") from None
    return PolynomialMap(dim, terms, "polynomial")


_REGISTRY = {
    "zero": _zero,
    "square": _square,
    "cube": _cube,
    "polynomial": _polynomial,
}


def available() -> list[str]:
    return sorted(_REGISTRY)


def build_nonlinearity(name: str, dim: int, params: dict | None = None) -> PolynomialMap:
    """Instantiate a registered nonlinearity.

    ``square`` and ``cube`` take ``coeff`` (number or ``[re, im]``) and an
    optional ``coords`` list; ``polynomial`` takes ``terms``, each a table
    with ``out``, ``coeff`` and ``exponents``.
    """
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise RegistryError(f"unknown nonlinearity {name!r}; available: {', '.join(available())}") from None
    return factory(dim, dict(params or {}))
