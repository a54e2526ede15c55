"""
Result tables.

Every metric the CLI reports is flattened into ``method, metric, value`` rows
and rendered twice: an aligned text table for the terminal and a CSV for the
run directory. Both come from the same DataFrame, so they always agree.
"""

from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd

REPORT_COLUMNS = ["method", "metric", "value"]


def to_csv(frame: pd.DataFrame) -> str:
    """CSV text with ``\\n`` line endings and no index."""
    return frame.to_csv(index=False, lineterminator="\n")


def report_table(results: Iterable[Union[Dict[str, Any], Sequence[Any]]]) -> Tuple[str, str]:
    """
    Render ``results`` as (aligned text, CSV).

    Each result is a mapping with ``method``, ``metric`` and ``value`` keys or
    a 3-tuple in that order. The column order is fixed.
    """
    rows = [dict(r) if isinstance(r, dict) else dict(zip(REPORT_COLUMNS, r)) for r in results]
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    return frame.to_string(index=False), to_csv(frame)


def write_rows(rows: List[Dict[str, Any]], path: Union[str, Path],
               columns: Optional[Sequence[str]] = None) -> Path:
    """Write ``rows`` to ``path`` as CSV; ``columns`` fixes the order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows, columns=list(columns) if columns is not None else None)
    path.write_text(to_csv(frame), encoding="utf-8")
    return path
