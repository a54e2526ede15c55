"""
Per-run state handed to every workflow. A workflow takes a ``RunContext`` and
returns a stats dict; the CLI stores it in the run manifest.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

from rconvmk.config import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    cfg: ExperimentConfig
    out_dir: Path
    seed: int = 0
    workers: int = 1
    progress: bool = True
    warnings: List[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        """Log ``message`` and keep it for the manifest."""
        logger.warning(message)
        self.warnings.append(message)

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name
