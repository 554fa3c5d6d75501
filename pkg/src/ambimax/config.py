"""JSON configuration ingestion for the command-line interface.

Structural validation runs against a JSON Schema (exit code 2 territory);
domain invariants are re-checked while building the typed objects, with
errors naming the offending agent or state (exit code 1 territory).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from .equilibrium import Market
from .errors import AmbimaxError, DomainError
from .scenario import Agent, AmbiguitySpec, ReferencePrior, Scenario, UtilitySpec


class SchemaError(AmbimaxError):
    """The config document does not match the schema (exit code 2)."""


_GRID_SCHEMA = {
    "type": "object",
    "properties": {
        "lo": {"type": "number"},
        "hi": {"type": "number"},
        "n": {"type": "integer", "minimum": 2},
    },
    "required": ["lo", "hi", "n"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "scenario": {
            "type": "object",
            "properties": {
                "states": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                "payoffs": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}},
                    "minItems": 1,
                },
                "prices": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "required": ["states", "payoffs", "prices"],
            "additionalProperties": False,
        },
        "agents": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "utility": {
                        "type": "object",
                        "properties": {
                            "kind": {
                                "enum": ["power", "log", "exponential", "quadratic_quasilinear"]
                            },
                            "gamma": {"type": "number"},
                        },
                        "required": ["kind"],
                        "additionalProperties": False,
                    },
                    "w0": {"type": "number"},
                    "prior": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                    "c": {"type": "number"},
                    "alpha": {"type": "number"},
                    "endowment": {"type": "array", "items": {"type": "number"}},
                },
                "required": ["utility", "w0", "prior", "c", "alpha"],
                "additionalProperties": False,
            },
        },
        "supply": {"type": "number"},
        "price_grid": _GRID_SCHEMA,
        "theta_grid": _GRID_SCHEMA,
        "sweep": {
            "type": "object",
            "properties": {
                "param": {"enum": ["p0", "alpha", "c"]},
                "agent": {"type": "integer", "minimum": 0},
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "n": {"type": "integer", "minimum": 2},
            },
            "required": ["param", "agent", "lo", "hi", "n"],
            "additionalProperties": False,
        },
        "riskshare": {
            "type": "object",
            "properties": {
                "theta1": {"type": "number"},
                "theta2": {"type": "number"},
                "deltas": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
            "required": ["theta1", "theta2"],
            "additionalProperties": False,
        },
    },
    "required": ["scenario", "agents"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    n: int

    def points(self):
        import numpy as np

        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class SweepSpec:
    param: str
    agent: int
    lo: float
    hi: float
    n: int


@dataclass(frozen=True)
class ConfigDocument:
    scenario: Scenario
    agents: tuple
    supply: float = 0.0
    price_grid: Optional[GridSpec] = None
    theta_grid: Optional[GridSpec] = None
    sweep: Optional[SweepSpec] = None
    riskshare: Optional[dict] = None

    def market(self) -> Market:
        return Market(scenario=self.scenario, agents=self.agents, supply=self.supply)


def _build_agent(index: int, raw: dict, n_states: int) -> Agent:
    try:
        util = raw["utility"]
        utility = UtilitySpec(kind=util["kind"], gamma=util.get("gamma"))
        prior_list = raw["prior"]
        if len(prior_list) != n_states:
            raise DomainError(
                f"prior has {len(prior_list)} entries but the scenario has {n_states} states"
            )
        prior = ReferencePrior(prior_list)
        ambiguity = AmbiguitySpec(c=raw["c"], alpha=raw["alpha"])
        endowment = raw.get("endowment")
        if endowment is not None and len(endowment) != n_states:
            raise DomainError(
                f"endowment has {len(endowment)} entries but the scenario has {n_states} states"
            )
        return Agent(utility=utility, w0=raw["w0"], prior=prior,
                     ambiguity=ambiguity, endowment=endowment)
    except AmbimaxError as exc:
        raise DomainError(f"agents[{index}]: {exc}") from exc


def parse_config(raw: dict) -> ConfigDocument:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p!r}]" for p in exc.absolute_path)
        raise SchemaError(f"{path}: {exc.message}") from exc
    sc_raw = raw["scenario"]
    try:
        scenario = Scenario(
            states=tuple(sc_raw["states"]),
            payoffs=sc_raw["payoffs"],
            prices=sc_raw["prices"],
        )
    except AmbimaxError as exc:
        raise DomainError(f"scenario: {exc}") from exc
    agents = tuple(
        _build_agent(i, entry, scenario.n_states) for i, entry in enumerate(raw["agents"])
    )
    grids = {}
    for key in ("price_grid", "theta_grid"):
        if key in raw:
            g = raw[key]
            if g["hi"] <= g["lo"]:
                raise DomainError(f"{key}: hi must exceed lo")
            grids[key] = GridSpec(lo=g["lo"], hi=g["hi"], n=g["n"])
    sweep = None
    if "sweep" in raw:
        s = raw["sweep"]
        if s["agent"] >= len(agents):
            raise DomainError(f"sweep: agent index {s['agent']} out of range")
        sweep = SweepSpec(param=s["param"], agent=s["agent"], lo=s["lo"], hi=s["hi"], n=s["n"])
    return ConfigDocument(
        scenario=scenario,
        agents=agents,
        supply=float(raw.get("supply", 0.0)),
        price_grid=grids.get("price_grid"),
        theta_grid=grids.get("theta_grid"),
        sweep=sweep,
        riskshare=raw.get("riskshare"),
    )


def load_config(path) -> ConfigDocument:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("top-level document must be a JSON object")
    return parse_config(raw)
