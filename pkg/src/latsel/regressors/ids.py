from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..params import ParamSetVariant


class Family(str, Enum):
    LR = "LR"
    MLP = "MLP"
    RF = "RF"
    MEDN = "MEDN"


class MednVariant(str, Enum):
    FULL = "FULL"
    DIRECT = "DIRECT"
    NO_INFER = "NO_INFER"
    NO_MEASURE = "NO_MEASURE"
    RAW = "RAW"


_MEDN_PARAMS = {
    MednVariant.FULL: ParamSetVariant.FULL,
    MednVariant.DIRECT: ParamSetVariant.FULL,
    MednVariant.NO_INFER: ParamSetVariant.NO_INFER,
    MednVariant.NO_MEASURE: ParamSetVariant.NO_MEASURE,
    MednVariant.RAW: ParamSetVariant.RAW,
}
_PARAM_SUFFIX = {
    ParamSetVariant.NO_INFER: "XI",
    ParamSetVariant.NO_MEASURE: "XM",
    ParamSetVariant.RAW: "R",
}
_SUFFIX_PARAM = {v: k for k, v in _PARAM_SUFFIX.items()}


@dataclass(frozen=True, order=False)
class RegressorId:
    family: Family
    variant: MednVariant | None = None
    param_set: ParamSetVariant = ParamSetVariant.FULL

    def __post_init__(self):
        if self.family is Family.MEDN:
            if self.variant is None:
                object.__setattr__(self, "variant", MednVariant.FULL)
            if self.param_set is not _MEDN_PARAMS[self.variant]:
                object.__setattr__(self, "param_set", _MEDN_PARAMS[self.variant])
        elif self.variant is not None:
            raise ValueError(f"{self.family.value} has no variants")

    @property
    def label(self) -> str:
        if self.family is Family.MEDN and self.variant is MednVariant.DIRECT:
            return "MEDN-D"
        suffix = _PARAM_SUFFIX.get(self.param_set)
        return f"{self.family.value}-{suffix}" if suffix else self.family.value

    def __str__(self) -> str:
        return self.label

    def __lt__(self, other: "RegressorId") -> bool:
        return self.label < other.label

    @classmethod
    def parse(cls, label: str) -> "RegressorId":
        text = label.strip().upper()
        family_s, _, suffix = text.partition("-")
        try:
            family = Family(family_s)
        except ValueError:
            raise ValueError(f"unknown regressor {label!r}") from None
        if family is Family.MEDN:
            if suffix == "D":
                return cls(family, MednVariant.DIRECT)
            if not suffix:
                return cls(family, MednVariant.FULL)
            if suffix not in _SUFFIX_PARAM:
                raise ValueError(f"unknown MEDN variant {label!r}")
            return cls(family, MednVariant(_SUFFIX_PARAM[suffix].value))
        if not suffix:
            return cls(family)
        if suffix not in _SUFFIX_PARAM:
            raise ValueError(f"unknown parameter set suffix in {label!r}")
        return cls(family, None, _SUFFIX_PARAM[suffix])

    @property
    def is_deep(self) -> bool:
        return self.family in (Family.MLP, Family.MEDN)


MEDN_ABLATIONS = tuple(RegressorId(Family.MEDN, v) for v in MednVariant)
DEFAULT_ROSTER = (
    RegressorId(Family.MEDN),
    RegressorId(Family.RF),
    RegressorId(Family.MLP),
    RegressorId(Family.LR),
)
