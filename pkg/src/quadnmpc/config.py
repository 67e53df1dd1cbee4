"""Sectioned key-value configuration with complete defaults.

Every runtime knob lives in one flat INI-style document; unknown
sections or keys are rejected so stale configs fail loudly. Values are
coerced to the type of their default. ``section.key=value`` override
strings (the CLI's ``--set``) go through the same validation.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .delay import DelayConfig
from .dynamics import QuadrotorParams
from .ocp import DEFAULT_INPUT_WEIGHT, DEFAULT_STATE_WEIGHT, OcpConfig
from .lqr import DEFAULT_LQR_Q, DEFAULT_LQR_R
from .sim import NoiseConfig, SimConfig, VelocityFilterConfig


class ConfigError(Exception):
    """Bad configuration: unknown key, wrong type, or inconsistent values."""


def _fmt_vec(values) -> str:
    return ",".join(f"{v:.12g}" for v in values)


DEFAULTS: dict[str, dict[str, object]] = {
    "model": {
        "m": 0.033,
        "g": 9.8066,
        "l": 0.0325,
        "Jxx": 1.395e-5,
        "Jyy": 1.395e-5,
        "Jzz": 2.173e-5,
        "CT": 3.25e-4,
        "CD": 7.9379e-6,
    },
    "nmpc": {
        "N": 50,
        "dt": 0.015,
        "W": _fmt_vec(np.concatenate([DEFAULT_STATE_WEIGHT, DEFAULT_INPUT_WEIGHT])),
        "WN": _fmt_vec(50.0 * DEFAULT_STATE_WEIGHT),
        "u_min": 0.0,
        "u_max": 22.0,
    },
    "qp": {"solver": "riccati", "block_size": 5, "tol": 1e-8, "max_iters": 50},
    "rti": {"split": True},
    "delay": {
        "tau1": 0.0,
        "tau2": 0.0,
        "tauc": 0.0,
        "lambda": -1,  # cycles of round trip; -1 means use the tau values
        "compensate": False,
        "predictor_steps": 1,
    },
    "lqr": {"Q": _fmt_vec(DEFAULT_LQR_Q), "R": _fmt_vec(DEFAULT_LQR_R)},
    "sim": {
        "duration": 7.5,
        "micro_step": 1e-3,
        "controller": "nmpc",
        "scenario": "step",
        "reference_csv": "",
        "seed": 0,
        "envelope": 20.0,
        "noise": False,
        "noise_pos": 1e-3,
        "noise_att_deg": 0.2,
        "noise_gyro": 0.01,
        "vel_filter": False,
        "vel_filter_cutoff": 10.0,
    },
    "traj": {
        "kind": "smooth_step",
        "start": "0,0,0.4",
        "target": "1,-1,1",
        "T": 6.0,
        "N": 400,
        "r": 0.3,
        "h0": 0.38,
        "dh": 0.002,
        "tf": 15.0,
        "m": 1000,
        "omega": 2.0 * math.pi * (2.0 / 15.0),
    },
}


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc


@dataclass
class RunConfig:
    """A fully resolved configuration document."""

    values: dict = field(default_factory=lambda: {s: dict(v) for s, v in DEFAULTS.items()})

    def get(self, section: str, key: str):
        try:
            return self.values[section][key]
        except KeyError as exc:
            raise ConfigError(f"unknown configuration key {section}.{key}") from exc

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"unknown configuration key {section}.{key}")
        self.values[section][key] = _coerce(section, key, raw, DEFAULTS[section][key])

    def vector(self, section: str, key: str, n: int) -> np.ndarray:
        raw = str(self.get(section, key))
        try:
            vec = np.array([float(v) for v in raw.replace(";", ",").split(",") if v.strip()])
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: cannot parse vector {raw!r}") from exc
        if vec.shape != (n,):
            raise ConfigError(f"{section}.{key}: expected {n} entries, got {vec.size}")
        return vec

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        rc = cls()
        if path is not None:
            parser = configparser.ConfigParser()
            parser.optionxform = str  # keys are case-sensitive (N, W, Jxx, ...)
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from exc
            except configparser.Error as exc:
                raise ConfigError(f"malformed config file {path}: {exc}") from exc
            for section in parser.sections():
                if section not in DEFAULTS:
                    raise ConfigError(f"unknown configuration section [{section}]")
                for key, raw in parser.items(section):
                    rc.set(section, key, raw)
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value, got {item!r}")
            dotted, raw = item.split("=", 1)
            section, key = dotted.split(".", 1)
            rc.set(section.strip(), key.strip(), raw.strip())
        rc.validate()
        return rc

    def validate(self) -> None:
        self.make_params()
        self.make_ocp()
        self.make_delay()
        self.vector("lqr", "Q", 12)
        self.vector("lqr", "R", 4)
        if self.get("qp", "solver") not in ("riccati", "dense"):
            raise ConfigError("qp.solver must be riccati or dense")
        if self.get("sim", "controller") not in ("nmpc", "lqr"):
            raise ConfigError("sim.controller must be nmpc or lqr")
        known = ("hover", "step", "zstep", "smooth_step", "helix", "file")
        if self.get("sim", "scenario") not in known:
            raise ConfigError(f"sim.scenario must be one of {known}")
        if self.get("sim", "scenario") == "file" and not self.get("sim", "reference_csv"):
            raise ConfigError("sim.reference_csv is required for the file scenario")
        if self.get("traj", "kind") not in ("smooth_step", "helix"):
            raise ConfigError("traj.kind must be smooth_step or helix")

    # ---- builders -------------------------------------------------------

    def make_params(self) -> QuadrotorParams:
        m = self.values["model"]
        try:
            return QuadrotorParams(
                m=m["m"], g=m["g"], l=m["l"],
                Jxx=m["Jxx"], Jyy=m["Jyy"], Jzz=m["Jzz"],
                CT=m["CT"], CD=m["CD"],
            )
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def make_ocp(self) -> OcpConfig:
        W = self.vector("nmpc", "W", 17)
        WN = self.vector("nmpc", "WN", 13)
        try:
            return OcpConfig(
                N=self.get("nmpc", "N"),
                dt=self.get("nmpc", "dt"),
                W=W,
                W_N=WN,
                u_lower=np.full(4, float(self.get("nmpc", "u_min"))),
                u_upper=np.full(4, float(self.get("nmpc", "u_max"))),
                params=self.make_params(),
            )
        except ValueError as exc:
            raise ConfigError(f"nmpc: {exc}") from exc

    def make_delay(self) -> DelayConfig:
        lam = self.get("delay", "lambda")
        taus = [self.get("delay", k) for k in ("tau1", "tau2", "tauc")]
        try:
            if lam >= 0:
                if any(t != 0.0 for t in taus):
                    raise ConfigError("delay.lambda is exclusive with delay.tau1/tau2/tauc")
                return DelayConfig.from_cycle_multiple(
                    lam,
                    self.get("nmpc", "dt"),
                    compensate=self.get("delay", "compensate"),
                    predictor_steps=self.get("delay", "predictor_steps"),
                )
            return DelayConfig(
                tau1=taus[0],
                tau2=taus[1],
                tauc=taus[2],
                compensate=self.get("delay", "compensate"),
                predictor_steps=self.get("delay", "predictor_steps"),
            )
        except ValueError as exc:
            raise ConfigError(f"delay: {exc}") from exc

    def make_scenario(self):
        from . import sim as simmod

        params = self.make_params()
        name = self.get("sim", "scenario")
        if name == "hover":
            return simmod.hover_scenario(params)
        if name == "step":
            return simmod.step_scenario(params)
        if name == "zstep":
            return simmod.zstep_scenario(params)
        if name == "helix":
            return simmod.gen_helix(
                params,
                radius=self.get("traj", "r"),
                h0=self.get("traj", "h0"),
                dh=self.get("traj", "dh"),
                t_f=self.get("traj", "tf"),
                m=self.get("traj", "m"),
                omega=self.get("traj", "omega"),
            )
        if name == "smooth_step":
            source, _ = simmod.gen_smooth_step(
                params,
                target=self.vector("traj", "target", 3),
                start=self.vector("traj", "start", 3),
                T=self.get("traj", "T"),
                N=self.get("traj", "N"),
            )
            return source
        if name == "file":
            return simmod.read_reference_csv(self.get("sim", "reference_csv"))
        raise ConfigError(f"unknown scenario {name!r}")

    def make_sim(self) -> SimConfig:
        try:
            return SimConfig(
                scenario=self.make_scenario(),
                ocp=self.make_ocp(),
                duration=self.get("sim", "duration"),
                micro_step=self.get("sim", "micro_step"),
                controller=self.get("sim", "controller"),
                solver=self.get("qp", "solver"),
                block_size=self.get("qp", "block_size"),
                qp_tol=self.get("qp", "tol"),
                qp_max_iters=self.get("qp", "max_iters"),
                rti_split=self.get("rti", "split"),
                delay=self.make_delay(),
                noise=NoiseConfig(
                    enabled=self.get("sim", "noise"),
                    sigma_pos=self.get("sim", "noise_pos"),
                    sigma_att_deg=self.get("sim", "noise_att_deg"),
                    sigma_gyro=self.get("sim", "noise_gyro"),
                ),
                vel_filter=VelocityFilterConfig(
                    enabled=self.get("sim", "vel_filter"),
                    cutoff_hz=self.get("sim", "vel_filter_cutoff"),
                ),
                seed=self.get("sim", "seed"),
                envelope_m=self.get("sim", "envelope"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def make_lqr_weights(self):
        return self.vector("lqr", "Q", 12), self.vector("lqr", "R", 4)

    def dump(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            for key, val in keys.items():
                lines.append(f"{key} = {val}")
            lines.append("")
        return "\n".join(lines)
