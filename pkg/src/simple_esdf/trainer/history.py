from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Tuple

from simple_esdf.constants.system import SystemConstants
from simple_esdf.objectives.base import TERM_NAMES, LossBreakdown
from simple_esdf.utils.artifact import ArtifactHeader, read_header, write_header
from simple_esdf.utils.errors import DataError

HISTORY_COLUMNS = [
    "epoch", "n_samples", "total", *TERM_NAMES, "mean_weight", "eval_auc", "eval_log_loss",
]


@dataclass
class EpochEntry:
    epoch: int
    n_samples: int
    loss: LossBreakdown
    mean_weight: float | None = None  # I01 样本的平均 E 步权重，仅 ESDF
    eval_auc: float | None = None
    eval_log_loss: float | None = None
    wall_clock: float = field(default=0.0, compare=False)

    def to_row(self) -> List[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [
            str(self.epoch),
            str(self.n_samples),
            repr(self.loss.total),
            *(repr(self.loss.terms[name]) for name in TERM_NAMES),
            fmt(self.mean_weight),
            fmt(self.eval_auc),
            fmt(self.eval_log_loss),
        ]

    @classmethod
    def from_row(cls, cols: List[str]) -> "EpochEntry":
        def opt(text: str):
            return float(text) if text else None

        terms = {name: float(cols[3 + i]) for i, name in enumerate(TERM_NAMES)}
        loss = LossBreakdown(total=float(cols[2]), terms=terms)
        k = 3 + len(TERM_NAMES)
        return cls(
            epoch=int(cols[0]),
            n_samples=int(cols[1]),
            loss=loss,
            mean_weight=opt(cols[k]),
            eval_auc=opt(cols[k + 1]),
            eval_log_loss=opt(cols[k + 2]),
        )


@dataclass
class TrainHistory:
    """
    只追加：每完成一个 epoch 追加一条.
    """

    entries: List[EpochEntry] = field(default_factory=list)

    def append(self, entry: EpochEntry) -> None:
        if entry.epoch != len(self.entries) + 1:
            raise ValueError(f"epoch 编号应为 {len(self.entries) + 1}，实际 {entry.epoch}")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[EpochEntry]:
        return iter(self.entries)

    def __getitem__(self, i) -> EpochEntry:
        return self.entries[i]


def write_history(path: Path, history: TrainHistory, config: Dict[str, Any]) -> None:
    header = ArtifactHeader(magic=SystemConstants.HISTORY_MAGIC, config=config, columns=HISTORY_COLUMNS)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, header)
        for entry in history:
            fh.write("\t".join(entry.to_row()) + "\n")


def read_history(path: Path) -> Tuple[TrainHistory, Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"训练历史不存在: {path}")
    history = TrainHistory()
    with path.open("r", encoding="utf-8") as fh:
        lines = iter(fh)
        header, _ = read_header(lines, SystemConstants.HISTORY_MAGIC)
        if header.columns != HISTORY_COLUMNS:
            raise DataError(f"训练历史列名不符: {header.columns}")
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            try:
                history.append(EpochEntry.from_row(line.split("\t")))
            except (IndexError, ValueError) as e:
                raise DataError(f"{path} 第 {lineno} 行无法解析: {e}") from e
    return history, header.config
