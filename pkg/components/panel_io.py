"""
Panel files: an edge list per classroom and period, and an agent table.

networks.csv has columns classroom_id, period, sender, receiver and lists
present links. A row with empty sender and receiver declares a period, so a
classroom whose network is empty in some period is still representable.

covariates.csv has one row per student: classroom_id, agent_id, optional
school, grade and class_list_position, then attribute columns. Agents keep
their file order within a classroom.
"""
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import config
from components.covariates import build_covariates
from components.errors import ConfigurationError, PanelParseError
from components.helpers import ensure_parent
from components.logger import get_logger
from components.model import Network
from components.panel import NetworkObservation, NetworkPanel

logger = get_logger(__name__)

NETWORK_COLUMNS = ['classroom_id', 'period', 'sender', 'receiver']
ID_COLUMNS = ['classroom_id', 'agent_id']


def _read_csv(path: str, **kwargs) -> pd.DataFrame:
    if not os.path.exists(path):
        raise PanelParseError('file does not exist', path)
    try:
        return pd.read_csv(path, **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise PanelParseError(f'cannot parse CSV: {e}', path) from e


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], path: str) -> None:
    missing = [col for col in columns if col not in frame.columns]
    if missing:
        raise PanelParseError(f'missing columns {missing}', path, 1)


def _line(index: int) -> int:
    # Header is line 1
    return int(index) + 2


def read_agents(path: str) -> Dict[str, pd.DataFrame]:
    """Agent tables per classroom, in order of first appearance."""
    frame = _read_csv(path, dtype={'classroom_id': str, 'agent_id': str, 'school': str, 'grade': str})
    _require_columns(frame, ID_COLUMNS, path)
    for idx, row in frame[ID_COLUMNS].iterrows():
        if pd.isna(row['classroom_id']) or pd.isna(row['agent_id']):
            raise PanelParseError('classroom_id and agent_id are required', path, _line(idx))
    duplicated = frame.duplicated(ID_COLUMNS)
    if duplicated.any():
        idx = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise PanelParseError(f'duplicate agent {frame.loc[idx, "agent_id"]} in classroom '
                              f'{frame.loc[idx, "classroom_id"]}', path, _line(idx))
    return {room: table.reset_index(drop=True) for room, table in frame.groupby('classroom_id', sort=False)}


def read_edges(path: str, agents: Dict[str, pd.DataFrame]) -> Dict[Tuple[str, str], np.ndarray]:
    """Adjacency matrices per (classroom, period) for every declared period."""
    frame = _read_csv(path, dtype=str, keep_default_na=False).fillna('')
    _require_columns(frame, NETWORK_COLUMNS, path)
    positions = {room: {agent: pos for pos, agent in enumerate(table['agent_id'])} for room, table in agents.items()}
    networks: Dict[Tuple[str, str], np.ndarray] = {}

    for idx, row in frame.iterrows():
        line = _line(idx)
        room, period = row['classroom_id'].strip(), row['period'].strip()
        sender, receiver = row['sender'].strip(), row['receiver'].strip()
        if room not in positions:
            raise PanelParseError(f'classroom {room!r} has no agents in the covariates file', path, line)
        if period not in config.PERIODS:
            raise PanelParseError(f'period {period!r} is not one of {list(config.PERIODS)}', path, line)
        key = (room, period)
        if key not in networks:
            n = len(positions[room])
            networks[key] = np.zeros((n, n), dtype=np.int8)
        if not sender and not receiver:
            continue
        if not sender or not receiver:
            raise PanelParseError('an edge needs both a sender and a receiver', path, line)
        for agent in (sender, receiver):
            if agent not in positions[room]:
                raise PanelParseError(f'unknown agent {agent!r} in classroom {room!r}', path, line)
        i, j = positions[room][sender], positions[room][receiver]
        if i == j:
            raise PanelParseError(f'self-link of agent {sender!r}', path, line)
        if networks[key][i, j]:
            raise PanelParseError(f'duplicate edge {sender} -> {receiver} in classroom {room!r} period {period}',
                                  path, line)
        networks[key][i, j] = 1
    return networks


def load_panel(networks_path: str, covariates_path: str,
               attributes: Optional[Sequence[str]] = None,
               categorical: Optional[Sequence[str]] = None) -> NetworkPanel:
    """
    Read and validate a panel.

    Args:
        networks_path: Edge-list CSV
        covariates_path: Agent-table CSV
        attributes: Attribute columns used as pair covariates (default: all)
        categorical: Attributes compared by mismatch

    Returns:
        NetworkPanel, classrooms in order of the covariates file

    Raises:
        PanelParseError: with the offending file and line
    """
    agents = read_agents(covariates_path)
    networks = read_edges(networks_path, agents)
    baseline_period, followup_period = config.PERIODS

    observations = []
    for room, table in agents.items():
        for period in config.PERIODS:
            if (room, period) not in networks:
                raise PanelParseError(f'classroom {room!r} has no rows for period {period}', networks_path)
        try:
            covariates = build_covariates(table, attributes, categorical)
        except ConfigurationError as e:
            raise PanelParseError(f'classroom {room!r}: {e}', covariates_path) from e
        school = _group_label(table, 'school')
        grade = _group_label(table, 'grade')
        observations.append(NetworkObservation(
            room, Network(networks[(room, baseline_period)]), Network(networks[(room, followup_period)]),
            covariates, school, grade))

    panel = NetworkPanel(observations)
    logger.info(f'Loaded {len(panel)} classrooms with {panel.n_students} students '
                f'and covariates {list(panel.covariate_names)}')
    return panel


def panel_edge_rows(panel: NetworkPanel) -> List[List[str]]:
    """Edge-list rows, each classroom opening with one declaration row per period."""
    rows = []
    for obs in panel:
        labels = _agent_labels(obs)
        for period, net in zip(config.PERIODS, (obs.baseline, obs.followup)):
            rows.append([obs.network_id, period, '', ''])
            for i, j in zip(*np.nonzero(net.edges)):
                rows.append([obs.network_id, period, labels[i], labels[j]])
    return rows


def _agent_labels(obs: NetworkObservation) -> List[str]:
    agents = obs.covariates.agents
    if agents is not None and 'agent_id' in agents.columns:
        return agents['agent_id'].astype(str).tolist()
    return [str(i + 1) for i in range(obs.n_agents)]


def save_panel(panel: NetworkPanel, networks_path: str, covariates_path: str) -> List[str]:
    """
    Write a panel in the format load_panel reads.

    Raises:
        ConfigurationError: when a classroom has no agent table
    """
    tables = []
    for obs in panel:
        agents = obs.covariates.agents
        if agents is None:
            raise ConfigurationError(f'network {obs.network_id} has no agent table to write')
        table = agents.copy()
        table['classroom_id'] = obs.network_id
        if 'agent_id' not in table.columns:
            table['agent_id'] = _agent_labels(obs)
        ordered = ID_COLUMNS + [col for col in table.columns if col not in ID_COLUMNS]
        tables.append(table[ordered])

    ensure_parent(networks_path)
    ensure_parent(covariates_path)
    edges = pd.DataFrame(panel_edge_rows(panel), columns=NETWORK_COLUMNS)
    edges.to_csv(networks_path, index=False, lineterminator='\n')
    pd.concat(tables, ignore_index=True).to_csv(covariates_path, index=False, lineterminator='\n')
    logger.info(f'Wrote panel of {len(panel)} classrooms to {networks_path} and {covariates_path}')
    return [networks_path, covariates_path]


def _group_label(table: pd.DataFrame, column: str) -> Optional[str]:
    if column not in table.columns or pd.isna(table[column].iloc[0]):
        return None
    return str(table[column].iloc[0])
