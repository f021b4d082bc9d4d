import enum
import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from attack.types import StepKind, StepRule
from dataset.noise import NoiseLevel, parse_noise_level

from .exceptions import InvalidProtocolError

ATK_PATTERN = re.compile(r"^atk-(\d+(?:\.\d+)?)$")


class ColumnKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    ATTACK = "atk"


@dataclass(frozen=True)
class Column:
    """One report column: ``gaussian``, ``uniform`` or ``atk-R`` with R = (rho/sqrt(m)) * 255."""
    kind: ColumnKind
    numerator: float = 0.0
    label: str = ""

    @classmethod
    def parse(cls, text: Union[str, "Column"]) -> "Column":
        if isinstance(text, Column):
            return text
        label = str(text).strip().lower()
        if label in (ColumnKind.GAUSSIAN.value, ColumnKind.UNIFORM.value):
            return cls(ColumnKind(label), 0.0, label)
        match = ATK_PATTERN.match(label)
        if not match:
            raise InvalidProtocolError(f"Unknown column {text!r}; expected gaussian, uniform or atk-R")
        return cls(ColumnKind.ATTACK, float(match.group(1)), label)

    @property
    def share(self) -> float:
        """Per-pixel adversarial budget rho/sqrt(m)."""
        return self.numerator / 255.0

    @property
    def is_attack(self) -> bool:
        return self.kind is ColumnKind.ATTACK


def parse_columns(columns: Union[str, Iterable]) -> Tuple[Column, ...]:
    if isinstance(columns, str):
        columns = [c for c in columns.split(",") if c.strip()]
    return tuple(Column.parse(c) for c in columns)


def parse_levels(levels: Union[str, Iterable]) -> Tuple[NoiseLevel, ...]:
    if isinstance(levels, str):
        levels = [s for s in levels.split(",") if s.strip()]
    elif isinstance(levels, (NoiseLevel, int, float)):
        levels = [levels]
    return tuple(parse_noise_level(level) for level in levels)


@dataclass(frozen=True)
class EvalProtocol:
    """Noise levels, report columns and attack settings of one evaluation.

    Every column is corrupted at total energy level ``eps_hat``: Gaussian
    noise with sigma = eps_hat, uniform noise of variance eps_hat^2, or
    Gaussian base noise at eps_hat - R/255 followed by the attack with
    per-pixel budget R/255.
    """
    eps_hats: Tuple[NoiseLevel, ...] = field(default_factory=lambda: parse_levels("15/255"))
    columns: Tuple[Column, ...] = field(default_factory=lambda: parse_columns("gaussian,atk-5,atk-7"))
    attack_iters: int = 5
    step_rule: StepRule = field(default_factory=StepRule)
    p_min: float = 0.0
    p_max: float = 1.0
    repeats: int = 3
    cap_energy: bool = True
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "eps_hats", parse_levels(self.eps_hats))
        object.__setattr__(self, "columns", parse_columns(self.columns))
        if not self.eps_hats:
            raise InvalidProtocolError("Protocol needs at least one noise level")
        if not self.columns:
            raise InvalidProtocolError("Protocol needs at least one column")
        labels = [c.label for c in self.columns]
        if len(set(labels)) != len(labels):
            raise InvalidProtocolError(f"Duplicate columns in {labels}")
        if self.repeats < 1:
            raise InvalidProtocolError(f"repeats must be >= 1, got {self.repeats}")
        if self.attack_iters < 1:
            raise InvalidProtocolError(f"attack_iters must be >= 1, got {self.attack_iters}")
        if self.threads < 1:
            raise InvalidProtocolError(f"threads must be >= 1, got {self.threads}")
        if not self.p_min < self.p_max:
            raise InvalidProtocolError(f"Pixel range must satisfy p_min < p_max, got [{self.p_min}, {self.p_max}]")
        for column in self.columns:
            for level in self.eps_hats:
                if column.is_attack and column.share > level.value:
                    raise InvalidProtocolError(
                        f"Column {column.label} needs rho/sqrt(m) = {column.share:.6g} <= eps_hat, "
                        f"but eps_hat = {level.label}"
                    )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eps_hats": [level.label for level in self.eps_hats],
            "columns": [column.label for column in self.columns],
            "attack_iters": self.attack_iters,
            "step_rule": {"kind": self.step_rule.kind.value, "eta": self.step_rule.eta},
            "p_min": self.p_min,
            "p_max": self.p_max,
            "repeats": self.repeats,
            "cap_energy": self.cap_energy,
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalProtocol":
        data = dict(data)
        if isinstance(data.get("step_rule"), dict):
            data["step_rule"] = StepRule(StepKind(data["step_rule"]["kind"]), data["step_rule"]["eta"])
        return cls(**data)


@dataclass(frozen=True)
class EvalRow:
    corpus: str
    eps_hat: str
    column: str
    psnr_mean: float
    psnr_std: float
    section: Optional[str] = None

    @property
    def exact(self) -> bool:
        """Whether the reconstruction was exact (infinite PSNR)."""
        return math.isinf(self.psnr_mean)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "corpus": self.corpus,
            "eps_hat": self.eps_hat,
            "column": self.column,
            "psnr_mean": self.psnr_mean,
            "psnr_std": self.psnr_std,
            "section": self.section,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalRow":
        return cls(**data)


@dataclass
class EvalReport:
    """Rows in protocol order, optionally grouped into named sections."""
    rows: List[EvalRow] = field(default_factory=list)

    def extend(self, rows: Iterable[EvalRow]) -> "EvalReport":
        self.rows.extend(rows)
        return self

    @property
    def sections(self) -> List[Optional[str]]:
        seen: List[Optional[str]] = []
        for row in self.rows:
            if row.section not in seen:
                seen.append(row.section)
        return seen

    def cell(self, eps_hat: str, column: str, section: Optional[str] = None) -> EvalRow:
        for row in self.rows:
            if row.eps_hat == eps_hat and row.column == column and row.section == section:
                return row
        raise KeyError((eps_hat, column, section))

    def to_dicts(self) -> List[Dict[str, Any]]:
        return [row.to_dict() for row in self.rows]

    @classmethod
    def from_dicts(cls, rows: Sequence[Dict[str, Any]]) -> "EvalReport":
        return cls([EvalRow.from_dict(row) for row in rows])
