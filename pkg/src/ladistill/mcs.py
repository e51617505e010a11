"""MCS table (3GPP TS 38.214 Table 5.1.3.1-2, 256-QAM) and derived thresholds."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

N_MCS = 28
DEFAULT_GAP_DB = 2.0


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation_order: int
    rate_x1024: float
    spectral_efficiency: float

    @property
    def code_rate(self) -> float:
        return self.rate_x1024 / 1024.0


# (modulation order, target code rate x 1024, spectral efficiency)
_TABLE_ROWS = (
    (2, 120, 0.2344),
    (2, 193, 0.3770),
    (2, 308, 0.6016),
    (2, 449, 0.8770),
    (2, 602, 1.1758),
    (4, 378, 1.4766),
    (4, 434, 1.6953),
    (4, 490, 1.9141),
    (4, 553, 2.1602),
    (4, 616, 2.4063),
    (4, 658, 2.5703),
    (6, 466, 2.7305),
    (6, 517, 3.0293),
    (6, 567, 3.3223),
    (6, 616, 3.6094),
    (6, 666, 3.9023),
    (6, 719, 4.2129),
    (6, 772, 4.5234),
    (6, 822, 4.8164),
    (6, 873, 5.1152),
    (8, 682.5, 5.3320),
    (8, 711, 5.5547),
    (8, 754, 5.8906),
    (8, 797, 6.2266),
    (8, 841, 6.5703),
    (8, 885, 6.9141),
    (8, 916.5, 7.1602),
    (8, 948, 7.4063),
)

_TABLE = tuple(
    McsEntry(i, order, float(rate), se) for i, (order, rate, se) in enumerate(_TABLE_ROWS)
)

SPECTRAL_EFFICIENCY = np.array([e.spectral_efficiency for e in _TABLE])
SPECTRAL_EFFICIENCY.setflags(write=False)
SE_MAX = float(SPECTRAL_EFFICIENCY[-1])


def mcs_table() -> tuple[McsEntry, ...]:
    """Return the canonical 28-entry table (immutable, shared)."""
    return _TABLE


def _check_index(m) -> int:
    if isinstance(m, (bool, np.bool_)) or not isinstance(m, (int, np.integer)):
        raise TypeError(f"MCS index must be an integer, got {m!r}")
    if not 0 <= m < N_MCS:
        raise ValueError(f"MCS index {m} outside 0..{N_MCS - 1}")
    return int(m)


def required_sinr_db(m: int, gap_db: float = DEFAULT_GAP_DB) -> float:
    """SINR (dB) at which MCS ``m`` decodes with 50% BLER under a Shannon-gap model."""
    m = _check_index(m)
    if gap_db < 0:
        raise ValueError("gap_db must be non-negative")
    se = _TABLE[m].spectral_efficiency
    return 10.0 * math.log10(2.0**se - 1.0) + gap_db


def required_sinr_table(gap_db: float = DEFAULT_GAP_DB) -> np.ndarray:
    """Vector of :func:`required_sinr_db` over all 28 indices."""
    if gap_db < 0:
        raise ValueError("gap_db must be non-negative")
    return 10.0 * np.log10(2.0**SPECTRAL_EFFICIENCY - 1.0) + gap_db


def table_csv() -> str:
    """Render the table as CSV with columns ``index,order,rate_x1024,se``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "order", "rate_x1024", "se"])
    for e in _TABLE:
        rate = int(e.rate_x1024) if e.rate_x1024.is_integer() else e.rate_x1024
        writer.writerow([e.index, e.modulation_order, rate, f"{e.spectral_efficiency:.4f}"])
    return buf.getvalue()


def write_table_csv(path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(table_csv())
