import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, final

from ...checksum import file_checksum
from ..dataio.formats import write_f32
from ..numkit.tensor import Tensor
from ..segmodel.checkpoint import save_checkpoint

logger = logging.getLogger("dale.trainer.logbook")

COLUMNS: tuple[str, ...] = (
    "t",
    "phase",
    "loss",
    "Dice",
    "mIoU",
    "HD95",
    "ASD",
    "mean_omega_clean",
    "mean_omega_noisy",
    "L_W",
    "steps",
    "theta_in",
    "theta_out",
    "Dice_noisy",
    "noise_precision",
    "noise_base_rate",
)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".12g")
    return str(value)


@final
class RunLog:
    """Writes ``metrics.csv``, confidence maps, calibration dumps and checkpoints of one run directory."""

    def __init__(self, out_dir: Path, append: bool = False):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        path = self.out_dir / "metrics.csv"
        resume = append and path.is_file()
        self._file = path.open("a" if resume else "w", newline="")
        self._writer = csv.DictWriter(self._file, fieldnames=COLUMNS, lineterminator="\n")
        if not resume:
            self._writer.writeheader()
            self._file.flush()

    def append(self, row: dict[str, object]) -> None:
        self._writer.writerow({column: format_value(row.get(column, float("nan"))) for column in COLUMNS})
        self._file.flush()

    def write_omega(self, t: int, index: int, omega: Tensor) -> Path:
        path = self.out_dir / "omega" / f"t{t:04d}_img{index:04d}.dlf1"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_f32(path, omega)
        return path

    def write_calib(self, t: int, data: dict[str, Any]) -> Path:
        path = self.out_dir / "calib" / f"t{t:04d}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        return path

    def write_checkpoint(self, t: int, tensors: dict[str, Tensor], meta: dict[str, Any]) -> Path:
        path = self.out_dir / "checkpoints" / f"t{t:04d}.ckpt"
        save_checkpoint(path, tensors, meta)
        logger.info("checkpoint t=%d path=%s sha256=%s", t, path, file_checksum(path))
        return path

    def close(self) -> None:
        self._file.close()
