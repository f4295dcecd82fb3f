"""System-level constants shared by every stage of the pipeline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

SPEED_OF_LIGHT = 299_792_458.0


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SystemConfig:
    """Carrier, array and OFDM grid parameters.

    ``delta_f`` defaults to 100 kHz so that the 64 retained delay bins cover
    about 187 m of excess path (a 2.93 m bin), which matches a 100 m scene.
    """

    f0: float = 28e9
    delta_f: float = 100e3
    n_c: int = 1024
    n_t: int = 64
    d_over_lambda: float = 0.5
    c: float = SPEED_OF_LIGHT
    n_c_trunc: int = 64

    def __post_init__(self) -> None:
        for name in ("n_c", "n_t", "n_c_trunc"):
            if not _is_pow2(int(getattr(self, name))):
                raise ValueError(f"{name} must be a power of two, got {getattr(self, name)}")
        if self.n_c_trunc > self.n_c:
            raise ValueError("n_c_trunc must not exceed n_c")
        if self.d_over_lambda != 0.5:
            raise ValueError("only half-wavelength arrays are supported (d_over_lambda=0.5)")
        if not (self.delta_f > 0 and self.f0 > 0 and self.c > 0):
            raise ValueError("f0, delta_f and c must be positive")

    @classmethod
    def printed_table(cls) -> "SystemConfig":
        """The 100 MHz subcarrier spacing as printed in the original parameter table.

        With this spacing the retained delay window spans only ~0.19 m of
        excess path, so random 100 m scenes cannot be generated from it.
        """
        return cls(delta_f=100e6)

    @property
    def delay_bin_s(self) -> float:
        """Width of one delay bin in seconds."""
        return 1.0 / (self.delta_f * self.n_c)

    @property
    def delay_bin_m(self) -> float:
        """Width of one delay bin as excess path length in meters."""
        return self.c * self.delay_bin_s

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SystemConfig fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SystemConfig":
        return cls.from_dict(json.loads(text))

    def with_(self, **kw: Any) -> "SystemConfig":
        return replace(self, **kw)
