import csv
import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

from attack.types import AttackConfig, StepKind, StepRule
from denoiser.arch import ArchConfig

from .exceptions import InvalidTrainConfigError

logger = logging.getLogger(__name__)


class TrainingMode(str, enum.Enum):
    NT = "nt"
    VAT = "vat"
    HAT = "hat"


@dataclass(frozen=True)
class TrainConfig:
    """Settings of one training run.

    ``rho_per_pixel`` and ``attack_iters`` configure the training-time attack;
    its absolute budget is ``rho_per_pixel * sqrt(m)`` for m-element patches.
    """
    mode: TrainingMode = TrainingMode.NT
    eps: float = 25 / 255
    alpha: float = 1.0
    rho_per_pixel: float = 5 / 255
    attack_iters: int = 1
    step_rule: StepRule = field(default_factory=StepRule)
    epochs: int = 30
    batch_size: int = 4
    learning_rate: float = 1e-3
    seed: int = 0
    arch: ArchConfig = field(default_factory=ArchConfig)
    val_fraction: float = 1 / 8
    val_sigma: float = 15 / 255
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", TrainingMode(self.mode))
        checks = [
            (self.alpha >= 0 and math.isfinite(self.alpha), f"alpha must be >= 0, got {self.alpha}"),
            (0.0 <= self.eps <= 1.0, f"eps must lie in [0, 1], got {self.eps}"),
            (self.rho_per_pixel >= 0, f"rho_per_pixel must be >= 0, got {self.rho_per_pixel}"),
            (self.attack_iters >= 1, f"attack_iters must be >= 1, got {self.attack_iters}"),
            (self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (self.learning_rate > 0, f"learning_rate must be > 0, got {self.learning_rate}"),
            (0.0 <= self.val_fraction < 1.0, f"val_fraction must lie in [0, 1), got {self.val_fraction}"),
            (self.val_sigma >= 0, f"val_sigma must be >= 0, got {self.val_sigma}"),
            (self.threads >= 1, f"threads must be >= 1, got {self.threads}"),
            (0 <= self.seed < 2 ** 64, f"seed must be an unsigned 64-bit integer, got {self.seed}"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidTrainConfigError(message)

    def attack_config(self, m: int) -> AttackConfig:
        return AttackConfig.per_pixel(self.rho_per_pixel, m, iters=self.attack_iters, step_rule=self.step_rule)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mode"] = self.mode.value
        data["step_rule"] = {"kind": self.step_rule.kind.value, "eta": self.step_rule.eta}
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        data = dict(data)
        if isinstance(data.get("arch"), dict):
            data["arch"] = ArchConfig.from_dict(data["arch"])
        if isinstance(data.get("step_rule"), dict):
            data["step_rule"] = StepRule(StepKind(data["step_rule"]["kind"]), data["step_rule"]["eta"])
        return cls(**data)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    psnr_val: float
    seconds: float


@dataclass
class TrainLog:
    """One row per finished epoch."""
    rows: List[EpochRecord] = field(default_factory=list)

    FIELDS = ("epoch", "loss", "psnr_val", "seconds")

    def append(self, record: EpochRecord) -> None:
        self.rows.append(record)

    def deterministic_rows(self) -> List[tuple]:
        """Rows without wall time, which is the only non-reproducible field."""
        return [(r.epoch, r.loss, r.psnr_val) for r in self.rows]

    def to_dicts(self) -> List[Dict[str, Any]]:
        return [asdict(r) for r in self.rows]

    @classmethod
    def from_dicts(cls, rows: List[Dict[str, Any]]) -> "TrainLog":
        return cls([EpochRecord(**row) for row in rows])

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.FIELDS)
            for r in self.rows:
                writer.writerow([r.epoch, repr(r.loss), repr(r.psnr_val), f"{r.seconds:.3f}"])
        logger.info(f"Wrote training log {path} ({len(self.rows)} epochs)")
        return path
