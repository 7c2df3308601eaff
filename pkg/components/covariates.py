"""
Pair covariates from student attributes.
"""
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import config
from components.errors import ConfigurationError
from components.model import CovariateSet


def attribute_columns(agents: pd.DataFrame) -> List[str]:
    """Attribute columns of an agent table, in file order."""
    return [col for col in agents.columns if col not in config.RESERVED_COLUMNS]


def pair_distance(values: np.ndarray, categorical: bool) -> np.ndarray:
    """(N, N) absolute difference, or mismatch indicator for categorical values."""
    if categorical:
        return (values[:, None] != values[None, :]).astype(float)
    numeric = values.astype(float)
    return np.abs(numeric[:, None] - numeric[None, :])


def class_list_distance(positions: np.ndarray) -> np.ndarray:
    """Distance between class-list ranks; ties share the lower rank."""
    ranks = pd.Series(positions).rank(method='min').to_numpy()
    return np.abs(ranks[:, None] - ranks[None, :])


def build_covariates(agents: pd.DataFrame,
                     attributes: Optional[Sequence[str]] = None,
                     categorical: Optional[Iterable[str]] = None,
                     ordering_column: Optional[str] = None) -> CovariateSet:
    """
    Build the covariate set of one classroom from its agent table.

    Args:
        agents: One row per student, in agent order
        attributes: Attribute columns to use (default: every non-reserved column)
        categorical: Attributes compared by mismatch instead of absolute difference
        ordering_column: Column ranking students on the class list

    Returns:
        CovariateSet keeping a copy of the agent table
    """
    attributes = attribute_columns(agents) if attributes is None else list(attributes)
    categorical = config.CATEGORICAL_ATTRIBUTES if categorical is None else set(categorical)
    ordering_column = config.ORDERING_COLUMN if ordering_column is None else ordering_column
    missing = [col for col in attributes if col not in agents.columns]
    if missing:
        raise ConfigurationError(f'agent table lacks attribute columns {missing}')
    n = len(agents)

    layers = []
    for col in attributes:
        values = agents[col].to_numpy()
        if pd.isna(values).any():
            raise ConfigurationError(f'attribute {col} has missing values')
        is_categorical = col in categorical or not pd.api.types.is_numeric_dtype(agents[col])
        layers.append(pair_distance(values, is_categorical))
    W = np.stack(layers, axis=2) if layers else np.zeros((n, n, 0))

    if ordering_column in agents.columns:
        Z = class_list_distance(agents[ordering_column].to_numpy())
    else:
        Z = class_list_distance(np.arange(n))
    return CovariateSet(W, Z, tuple(attributes), agents.reset_index(drop=True).copy())
