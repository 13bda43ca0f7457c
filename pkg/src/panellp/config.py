"""TOML loading for study specs and simulation configs.

Keys match the dataclass field names one to one; unknown keys are rejected
so typos fail loudly, and missing required keys are reported by name.
"""

from __future__ import annotations

import sys
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .driver import LPSpec
from .errors import ValidationError
from .simulate import SimConfig

_LP_REQUIRED = ("response", "shock", "horizons")
_LP_OPTIONAL = (
    "response_transform", "response_scale", "shock_lags", "response_lags",
    "extra_controls", "fixed_effects", "cluster", "estimators", "irf_scale",
)
_SIM_REQUIRED = ("dgp", "beta0", "rho", "n_units", "n_periods")
_SIM_OPTIONAL = (
    "horizons", "replications", "seed", "estimators", "tau", "kappa",
    "burn_in", "init", "fe_x_scale", "shock_fe_sd", "trend_linear", "trend_quad",
)


def _read_toml(path: str) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: not valid TOML: {exc}") from exc


def _check_keys(raw: dict[str, Any], required: tuple[str, ...], optional: tuple[str, ...], path: str) -> None:
    for key in required:
        if key not in raw:
            raise ValidationError(f"{path}: missing required key {key!r}")
    unknown = sorted(set(raw) - set(required) - set(optional))
    if unknown:
        raise ValidationError(f"{path}: unknown keys: {', '.join(unknown)}")


def _horizon_pair(value: Any, path: str) -> tuple[int, int]:
    if isinstance(value, int):
        return (0, value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, int) for v in value):
        return (value[0], value[1])
    raise ValidationError(f"{path}: 'horizons' must be an [h_min, h_max] pair of integers")


def load_lp_spec(path: str) -> LPSpec:
    raw = _read_toml(path)
    _check_keys(raw, _LP_REQUIRED, _LP_OPTIONAL, path)

    controls: list[tuple[str, tuple[int, ...]]] = []
    for item in raw.get("extra_controls", []):
        if not isinstance(item, dict) or "variable" not in item or "lags" not in item:
            raise ValidationError(
                f"{path}: each extra_controls entry needs 'variable' and 'lags'"
            )
        controls.append((str(item["variable"]), tuple(int(j) for j in item["lags"])))

    spec = LPSpec(
        response=str(raw["response"]),
        shock=str(raw["shock"]),
        horizons=_horizon_pair(raw["horizons"], path),
        response_transform=str(raw.get("response_transform", "level")),
        response_scale=float(raw.get("response_scale", 1.0)),
        shock_lags=int(raw.get("shock_lags", 0)),
        response_lags=tuple(int(k) for k in raw.get("response_lags", [])),
        extra_controls=tuple(controls),
        fixed_effects=str(raw.get("fixed_effects", "unit")),
        cluster=str(raw.get("cluster", "unit")),
        estimators=tuple(str(e) for e in raw.get("estimators", ["FE"])),
        irf_scale=float(raw.get("irf_scale", 1.0)),
    )
    spec.validate()
    return spec


def load_sim_config(path: str) -> SimConfig:
    raw = _read_toml(path)
    _check_keys(raw, _SIM_REQUIRED, _SIM_OPTIONAL, path)
    cfg = SimConfig(
        dgp=str(raw["dgp"]),
        beta0=float(raw["beta0"]),
        rho=float(raw["rho"]),
        n_units=int(raw["n_units"]),
        n_periods=int(raw["n_periods"]),
        horizons=_horizon_pair(raw.get("horizons", [0, 10]), path),
        replications=int(raw.get("replications", 1000)),
        seed=int(raw.get("seed", 0)),
        estimators=tuple(str(e) for e in raw.get("estimators", ["FE", "SPJ"])),
        tau=float(raw.get("tau", 0.5)),
        kappa=float(raw.get("kappa", -0.5)),
        burn_in=int(raw.get("burn_in", 200)),
        init=str(raw.get("init", "burn-in")),
        fe_x_scale=float(raw.get("fe_x_scale", 0.2)),
        shock_fe_sd=float(raw.get("shock_fe_sd", 0.0)),
        trend_linear=float(raw.get("trend_linear", 0.025)),
        trend_quad=float(raw.get("trend_quad", 0.001)),
    )
    cfg.validate()
    return cfg
