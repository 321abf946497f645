from __future__ import annotations

from enum import Enum


class ModuleKind(str, Enum):
    AVGPOOL = "avgpool"
    BN = "bn"
    BN_RELU = "bn_relu"
    CONV = "conv"
    CONV_BN = "conv_bn"
    CONV_BN_RELU = "conv_bn_relu"
    CONV_RELU = "conv_relu"
    LINEAR = "linear"
    MAXPOOL = "maxpool"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "ModuleKind":
        # accept the "bn+relu" spelling used in result tables
        key = text.strip().lower().replace("+", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown module kind {text!r}") from None

    @property
    def is_conv(self) -> bool:
        return self.value.startswith("conv")

    @property
    def is_pool(self) -> bool:
        return self in (ModuleKind.AVGPOOL, ModuleKind.MAXPOOL)

    @property
    def has_bn(self) -> bool:
        return "bn" in self.value.split("_")

    @property
    def has_relu(self) -> bool:
        return self.value.endswith("relu")

    @property
    def base(self) -> "ModuleKind":
        """The constituent whose parameter row a composite kind inherits."""
        if self.is_conv:
            return ModuleKind.CONV
        if self.has_bn:
            return ModuleKind.BN
        return self


ALL_KINDS: tuple[ModuleKind, ...] = tuple(ModuleKind)
