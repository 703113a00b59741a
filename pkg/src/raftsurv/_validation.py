"""Input validation helpers built on :mod:`sklearn.utils.validation`."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_ages(ages, n=None, positive=True):
    ages = check_array(np.asarray(ages, dtype=float).reshape(-1, 1), ensure_min_samples=0).ravel()
    if n is not None and ages.size != n:
        raise ValueError(f"expected {n} ages, got {ages.size}")
    if positive and np.any(ages <= 0):
        raise ValueError("ages must be positive")
    return ages


def check_covariate_matrix(values, n_rows=None, n_cols=None):
    """2-D finite float matrix; a 1-D input is read as a single column."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    values = check_array(values, ensure_min_samples=0, ensure_min_features=0)
    if n_rows is not None and values.shape[0] != n_rows:
        raise ValueError(f"expected {n_rows} rows, got {values.shape[0]}")
    if n_cols is not None and values.shape[1] != n_cols:
        raise ValueError(f"expected {n_cols} columns, got {values.shape[1]}")
    return values


def check_survival_data(entry, exit, event, X):
    """Validate aligned survival arrays; returns float arrays and a bool event vector."""
    exit = np.asarray(exit, dtype=float).ravel()
    n = exit.size
    entry = np.zeros(n) if entry is None else np.asarray(entry, dtype=float).ravel()
    event = np.asarray(event).ravel()
    if entry.size != n or event.size != n:
        raise ValueError("entry, exit and event must have the same length")
    if not np.all(np.isin(event, (0, 1, True, False))):
        raise ValueError("event must be boolean or 0/1")
    event = event.astype(bool)
    if not (np.all(np.isfinite(entry)) and np.all(np.isfinite(exit))):
        raise ValueError("entry and exit times must be finite")
    if np.any(entry < 0):
        raise ValueError("entry times must be non-negative")
    if np.any(exit <= entry):
        bad = int(np.flatnonzero(exit <= entry)[0])
        raise ValueError(f"exit must exceed entry (first offending row {bad})")
    X = check_covariate_matrix(np.empty((n, 0)) if X is None else X, n_rows=n)
    return entry, exit, event, X

