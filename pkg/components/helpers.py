"""
Shared helpers: seeded random streams, parallel map, file digests and
result writers used by the engines and the command line.
"""
import csv
import hashlib
import io
import json
import os
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
from joblib import Parallel, delayed

T = TypeVar('T')
R = TypeVar('R')


def make_generator(seed: int, *keys: int) -> np.random.Generator:
    """
    Build a counter-based (Philox) generator for the stream (seed, *keys).

    Streams derived from distinct key tuples are independent, so a draw's
    randomness depends only on its position, never on scheduling.

    Args:
        seed: Run seed (unsigned 64-bit)
        keys: Stream coordinates such as (network, chunk)

    Returns:
        A numpy Generator
    """
    # The key count is mixed in so (s, 0) and (s, 0, 0) stay distinct streams
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, len(keys)] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def chunk_bounds(n_items: int, chunk_size: int) -> List[range]:
    """Split range(n_items) into consecutive chunks of at most chunk_size."""
    if chunk_size <= 0:
        raise ValueError('chunk_size must be positive')
    return [range(start, min(start + chunk_size, n_items)) for start in range(0, n_items, chunk_size)]


def parallel_map(func: Callable[[T], R], items: Iterable[T], n_jobs: int = 1) -> List[R]:
    """
    Map func over items, in order, optionally with joblib workers.

    Args:
        func: Pure function of one item
        items: Inputs
        n_jobs: 1 runs inline; anything else is passed to joblib

    Returns:
        Results in input order
    """
    items = list(items)
    if n_jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=n_jobs)(delayed(func)(item) for item in items)


def file_digest(path: str) -> str:
    """SHA-256 hex digest of a file."""
    sha = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            sha.update(block)
    return sha.hexdigest()


def to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return to_jsonable(float(value))
    if isinstance(value, float):
        if np.isnan(value):
            return None
        if np.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def to_json_string(payload: Dict[str, Any]) -> str:
    """Deterministic JSON rendering (sorted keys, numpy values converted)."""
    return json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + '\n'


def write_json(path: str, payload: Dict[str, Any]) -> None:
    ensure_parent(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(to_json_string(payload))


def table_to_csv_string(data: Dict[str, Sequence]) -> str:
    """
    Render a {'headers': [...], 'rows': [[...], ...]} table as CSV text.

    Args:
        data: Table dictionary

    Returns:
        CSV content as string
    """
    output = io.StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(data['headers'])
    for row in data['rows']:
        writer.writerow([_format_cell(cell) for cell in row])
    return output.getvalue()


def write_table(path: str, data: Dict[str, Sequence]) -> None:
    ensure_parent(path)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(table_to_csv_string(data))


def _format_cell(cell: Any) -> Any:
    if isinstance(cell, (np.floating, float)):
        return repr(float(cell))
    if isinstance(cell, np.integer):
        return int(cell)
    return cell


def ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)


def weighted_quantiles(values: np.ndarray, weights: Optional[np.ndarray], probs: Sequence[float]) -> np.ndarray:
    """
    Per-column weighted quantiles by inverting the weighted empirical CDF.

    Args:
        values: (S, d) draws
        weights: (S,) nonnegative weights, or None for equal weights
        probs: Quantile levels in [0, 1]

    Returns:
        (len(probs), d) array
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if weights is None:
        return np.quantile(values, probs, axis=0, method='inverted_cdf')
    weights = np.asarray(weights, dtype=float)
    out = np.empty((len(probs), values.shape[1]))
    for col in range(values.shape[1]):
        order = np.argsort(values[:, col], kind='stable')
        cdf = np.cumsum(weights[order])
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, probs, side='left')
        out[:, col] = values[order, col][np.minimum(idx, len(order) - 1)]
    return out
