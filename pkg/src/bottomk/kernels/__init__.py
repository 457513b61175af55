"""Hot loops with a compiled (numba) and a pure-numpy implementation.

The compiled path is used unless ``BOTTOMK_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``, or numba cannot be imported.  Both paths
take pre-drawn random variates and agree to rounding.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy

_NAMES = ("sumexp_roots", "lex_roots", "sc_markov", "subset_f_table", "sc_exact",
          "sc_exact_rows", "prefix_adjusted", "prefix_rows")


def _numba_wanted() -> bool:
    flag = os.environ.get("BOTTOMK_DISABLE_NUMBA", "")
    return flag in ("", "0")


BACKEND = "numpy"
_impl = _numpy
if _numba_wanted():
    try:
        from . import _numba as _impl  # noqa: F811
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - depends on the environment
        _impl = _numpy


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sumexp_roots(s, E, tau):
    return _impl.sumexp_roots(_f64(s), _f64(np.atleast_2d(E)), float(tau))


def lex_roots(sJ, sO, EJ, EO, W, delta):
    return _impl.lex_roots(_f64(sJ), _f64(sO), _f64(np.atleast_2d(EJ)),
                           _f64(np.atleast_2d(EO)), float(W), float(delta))


def sc_markov(w, W, Er, U):
    return _impl.sc_markov(_f64(w), float(W), _f64(Er), _f64(U))


def subset_f_table(w, ell):
    return _impl.subset_f_table(_f64(w), float(ell))


def sc_exact(w, W):
    return _impl.sc_exact(_f64(w), float(W))


def sc_exact_rows(wrows, W):
    return _impl.sc_exact_rows(_f64(np.atleast_2d(wrows)), float(W))


def prefix_adjusted(w, W):
    return _impl.prefix_adjusted(_f64(w), float(W))


def prefix_rows(wrows, W):
    return _impl.prefix_rows(_f64(np.atleast_2d(wrows)), float(W))


__all__ = ["BACKEND", *_NAMES]
