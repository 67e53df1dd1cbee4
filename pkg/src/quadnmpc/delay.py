"""Round-trip-time compensation: input buffering and forward state prediction.

The control loop sees three lumped latencies: receiving measurements
(``tau1``), sending inputs to the actuators (``tau2``), and computing
the control itself (``tauc``). Their sum is the round-trip time. A
measurement taken at ``t`` therefore produces an input that acts at
``t + round_trip``; predicting the state forward over the round trip
with the inputs known to be in flight makes the controller's model
nominally delay-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn


@dataclass
class DelayConfig:
    """Latency split [s] and compensation settings.

    ``predictor_steps`` is the number of ERK4 substeps used by the
    forward prediction; one single step over the whole round trip is
    the default, deliberately coarse.
    """

    tau1: float = 0.0
    tau2: float = 0.0
    tauc: float = 0.0
    compensate: bool = False
    predictor_steps: int = 1

    def __post_init__(self):
        if self.tau1 < 0 or self.tau2 < 0 or self.tauc < 0:
            raise ValueError("delays must be nonnegative")
        if self.predictor_steps < 1:
            raise ValueError("predictor needs at least one integration step")

    @property
    def round_trip(self) -> float:
        return self.tau1 + self.tau2 + self.tauc

    @classmethod
    def from_cycle_multiple(cls, lam: int, sampling_time: float, **kwargs) -> "DelayConfig":
        """Round trip of ``lam`` control cycles, lumped into the measurement path.

        Where the latency sits inside the loop is immaterial as long as
        the round trip is unchanged, so studies place all of it on the
        measurement side.
        """
        if lam < 0:
            raise ValueError("cycle multiple must be nonnegative")
        return cls(tau1=lam * sampling_time, tau2=0.0, tauc=0.0, **kwargs)


class InputBuffer:
    """Time-stamped record of commanded rotor speeds, strictly increasing in time."""

    def __init__(self):
        self._times: list[float] = []
        self._inputs: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._times)

    def push(self, t: float, u: np.ndarray) -> None:
        if self._times and t <= self._times[-1]:
            raise ValueError("buffer timestamps must be strictly increasing")
        self._times.append(float(t))
        self._inputs.append(np.asarray(u, dtype=float).copy())

    def at(self, t: float) -> np.ndarray | None:
        """Input active at time ``t`` (sample-and-hold); None if empty.

        Before the first entry the first input is returned, past the
        last entry the last one. A nanosecond of slack absorbs the
        floating-point wobble of accumulated grid times.
        """
        if not self._times:
            return None
        idx = np.searchsorted(self._times, t + 1e-9, side="right") - 1
        return self._inputs[max(idx, 0)]

    def latest(self) -> np.ndarray | None:
        """Most recently issued command; None if empty."""
        return self._inputs[-1] if self._inputs else None

    def trim(self, t_keep: float) -> None:
        """Drop entries no longer needed to reconstruct inputs after ``t_keep``."""
        while len(self._times) > 1 and self._times[1] <= t_keep:
            self._times.pop(0)
            self._inputs.pop(0)


class StateHistory:
    """Time-stamped ground-truth states for delayed measurement lookup."""

    def __init__(self):
        self._times: list[float] = []
        self._states: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._times)

    def push(self, t: float, xi: np.ndarray) -> None:
        if self._times and t <= self._times[-1]:
            raise ValueError("history timestamps must be strictly increasing")
        self._times.append(float(t))
        self._states.append(np.asarray(xi, dtype=float).copy())

    def at(self, t: float) -> np.ndarray:
        if not self._times:
            raise ValueError("empty state history")
        idx = np.searchsorted(self._times, t + 1e-9, side="right") - 1
        return self._states[max(idx, 0)]


def delayed_measurement(history: StateHistory, t: float, tau1: float) -> np.ndarray:
    """State the controller sees at time ``t``: the plant state at ``t - tau1``."""
    return history.at(t - tau1)


def delayed_actuation(buffer: InputBuffer, t: float, tau2: float) -> np.ndarray | None:
    """Input reaching the rotors at time ``t``: the command issued at ``t - tau2``."""
    return buffer.at(t - tau2)


def predict(
    xi_meas: np.ndarray,
    t_meas: float,
    buffer: InputBuffer,
    tau_r: float,
    params: dyn.QuadrotorParams,
    steps: int = 1,
    mode: str = "replay",
) -> np.ndarray:
    """Propagate a measured state over the round trip using buffered inputs.

    The window ``[t_meas, t_meas + tau_r)`` is split into ``steps`` ERK4
    substeps. In ``replay`` mode each substep applies the buffered input
    active at its midpoint, reproducing the actually-sent
    piecewise-constant command sequence (all of it is known to the
    sender); ``latest`` mode holds the most recently issued command over
    the whole window, which discards information and is kept for
    comparison. With the buffer empty, hover input is assumed (the
    caller is expected to flag that). The quaternion is renormalized at
    the end.
    """
    if tau_r < 0:
        raise ValueError("round trip must be nonnegative")
    if mode not in ("replay", "latest"):
        raise ValueError(f"unknown predictor mode {mode!r}")
    xi = np.asarray(xi_meas, dtype=float).copy()
    if tau_r == 0.0:
        return xi
    h = tau_r / steps
    latest = buffer.latest() if mode == "latest" else None
    for j in range(steps):
        u = latest if mode == "latest" else buffer.at(t_meas + (j + 0.5) * h)
        if u is None:
            u = params.hover_input()
        xi = dyn.erk4_step(lambda s: dyn.ode_rhs(s, u, params), xi, h)
    xi[dyn.QUAT] = dyn.quat_normalize(xi[dyn.QUAT])
    return xi
