"""Label schema and the small enumerations used throughout the toolkit.

The six segmented structures keep fixed numeric ids (background is 0):
1=LCusp, 2=NCusp, 3=RCusp, 4=RootWall, 5=LVO, 6=STJ.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

BACKGROUND = 0
LCUSP = 1
NCUSP = 2
RCUSP = 3
ROOT_WALL = 4
LVO = 5
STJ = 6

# The three leaflets, and the four labels reported with overlap/distance
# metrics (the two demarcation bands are assessed via outflow orientation).
CUSP_IDS = (LCUSP, NCUSP, RCUSP)
DISTANCE_METRIC_IDS = (LCUSP, NCUSP, RCUSP, ROOT_WALL)

STRUCTURE_NAMES = {
    LCUSP: "LCusp",
    NCUSP: "NCusp",
    RCUSP: "RCusp",
    ROOT_WALL: "RootWall",
    LVO: "LVO",
    STJ: "STJ",
}

_VALID_NAMES = frozenset(STRUCTURE_NAMES.values())


class PhaseTag(str, enum.Enum):
    DIASTOLE = "diastole"
    SYSTOLE = "systole"

    @classmethod
    def parse(cls, value: "str | PhaseTag") -> "PhaseTag":
        if isinstance(value, PhaseTag):
            return value
        text = str(value).strip().lower()
        if text in ("d", "dia", "diastole", "diastolic"):
            return cls.DIASTOLE
        if text in ("s", "sys", "systole", "systolic"):
            return cls.SYSTOLE
        raise ValueError(f"unknown cardiac phase {value!r}")


class FusionType(str, enum.Enum):
    """Which pair of cusps is fused (bicuspid) or none (tricuspid)."""

    LR_FUSED = "LR-fused"
    RN_FUSED = "RN-fused"
    LN_FUSED = "LN-fused"
    TRICUSPID = "Tricuspid"

    @classmethod
    def parse(cls, value: "str | FusionType") -> "FusionType":
        if isinstance(value, FusionType):
            return value
        for member in cls:
            if str(value).strip().lower() == member.value.lower():
                return member
        raise ValueError(f"unknown fusion type {value!r}")

    @property
    def fused_pair(self) -> tuple[int, int] | None:
        return {
            FusionType.LR_FUSED: (LCUSP, RCUSP),
            FusionType.RN_FUSED: (RCUSP, NCUSP),
            FusionType.LN_FUSED: (LCUSP, NCUSP),
            FusionType.TRICUSPID: None,
        }[self]

    @property
    def non_fused_cusp(self) -> int | None:
        """Label id of the lone non-fused cusp; None for tricuspid valves."""
        pair = self.fused_pair
        if pair is None:
            return None
        (remaining,) = set(CUSP_IDS) - set(pair)
        return remaining


@dataclass(frozen=True)
class LabelSchema:
    """Mapping between structure names and stable nonzero label ids."""

    entries: tuple[tuple[int, str], ...] = field(
        default_factory=lambda: tuple(sorted(STRUCTURE_NAMES.items()))
    )

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        names = [n for _, n in self.entries]
        if len(self.entries) != 6:
            raise ValueError("schema must have exactly six structure entries")
        if any(i <= 0 for i in ids):
            raise ValueError("structure ids must be nonzero positive integers")
        if len(set(ids)) != len(ids) or len(set(names)) != len(names):
            raise ValueError("structure ids and names must be distinct")
        if set(names) != _VALID_NAMES:
            raise ValueError(f"structure names must be exactly {sorted(_VALID_NAMES)}")

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    @property
    def valid_ids(self) -> frozenset[int]:
        return frozenset((BACKGROUND, *self.ids))

    def name_of(self, label_id: int) -> str:
        if label_id == BACKGROUND:
            return "Background"
        for i, name in self.entries:
            if i == label_id:
                return name
        raise KeyError(f"label id {label_id} not in schema")

    def id_of(self, name: str) -> int:
        if name == "Background":
            return BACKGROUND
        for i, n in self.entries:
            if n == name:
                return i
        raise KeyError(f"structure name {name!r} not in schema")


DEFAULT_SCHEMA = LabelSchema()
