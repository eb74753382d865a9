"""Idealized physical layer: delivered power tracks the command.

The inverter control loops are not modelled. ``ideal`` delivers the command
minus a fixed loss fraction; ``first_order`` adds a per-DG lag of time
constant ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_LOSS = 0.05


@dataclass(frozen=True)
class PlantConfig:
    mode: str = "ideal"
    tau: float | None = None
    loss_fraction: float = 0.0

    def __post_init__(self):
        if self.mode not in ("ideal", "first_order"):
            raise ValueError(f"unknown plant mode {self.mode!r}")
        if self.mode == "first_order" and not (self.tau is not None and self.tau > 0):
            raise ValueError("first_order plant needs tau > 0")
        if not 0 <= self.loss_fraction <= MAX_LOSS:
            raise ValueError(f"loss fraction must lie in [0, {MAX_LOSS}]")

    def check_step(self, dt: float) -> None:
        if self.mode == "first_order" and not dt < self.tau / 2:
            raise ValueError(f"dt={dt} must be below tau/2={self.tau / 2}")


def deliver(p_cmd, cfg: PlantConfig, prev_delivered, dt: float) -> np.ndarray:
    """Delivered powers for one step; ``p_cmd`` is a command vector or PowerCommand."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    p_cmd = np.asarray(getattr(p_cmd, "p", p_cmd), dtype=float)
    target = (1.0 - cfg.loss_fraction) * p_cmd
    if cfg.mode == "ideal":
        return target
    prev = np.asarray(prev_delivered, dtype=float)
    return prev + (dt / cfg.tau) * (target - prev)
