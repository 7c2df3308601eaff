from typing import Any, Dict, List, Mapping, Sequence

import numpy as np

from components.logger import get_logger

logger = get_logger(__name__)


def table_records(table: Dict[str, Sequence]) -> List[Dict[str, Any]]:
    """
    Turn a {'headers', 'rows'} table into one dict per row for JSON responses.
    Numpy scalars become plain Python values.
    """
    headers = list(table['headers'])
    records = []
    for row in table['rows']:
        records.append({h: (cell.item() if isinstance(cell, np.generic) else cell) for h, cell in zip(headers, row)})
    return records


def stack_tables(tables: Mapping[str, Dict[str, Sequence]], key: str) -> Dict[str, list]:
    """
    Concatenate tables sharing headers, prefixing each row with its label.

    Args:
        tables: Label -> table, e.g. scenario name -> welfare table
        key: Header of the label column

    Returns:
        Combined table
    """
    headers = None
    rows = []
    for label, table in tables.items():
        if headers is None:
            headers = list(table['headers'])
        elif list(table['headers']) != headers:
            raise ValueError(f'table {label!r} has headers {list(table["headers"])}, expected {headers}')
        rows.extend([label] + list(row) for row in table['rows'])
    logger.debug(f'Stacked {len(tables)} tables into {len(rows)} rows')
    return {'headers': [key] + (headers or []), 'rows': rows}


def matrix_table(matrix: np.ndarray, names: Sequence[str], corner: str = 'coefficient') -> Dict[str, list]:
    """Square matrix (e.g. a posterior covariance) with row and column labels."""
    matrix = np.asarray(matrix)
    return {'headers': [corner] + list(names),
            'rows': [[name] + list(matrix[i]) for i, name in enumerate(names)]}
