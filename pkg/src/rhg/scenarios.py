"""Built-in case studies and the JSON scenario format.

Three builtins are provided: the two-agent illustrative game in a stable
and a destabilising weighting, and a three-consumer battery-charging game
whose ranged parameters are drawn from a seeded generator.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .game import (Agent, AgentDynamics, ConstraintSpec, GameError, GameSpec, StageCost,
                   aggregative_cost)
from .simulator import ParameterSchedule

BUILTINS = ("illustrative_unstable", "illustrative_stable", "battery_charging")
DEFAULT_SEED = 2024


class ScenarioError(ValueError):
    """Invalid scenario; ``problems`` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: GameSpec
    x0: np.ndarray
    T: int
    seed: int = DEFAULT_SEED
    delta: float = 1e-6
    budget: int = 50_000
    schedule: Optional[ParameterSchedule] = None
    battery: Optional["BatteryParameters"] = None

    @property
    def system(self):
        """What the simulator should roll out: the schedule if there is one."""
        return self.schedule if self.schedule is not None else self.spec


# -- illustrative two-agent game ----------------------------------------------

ILLUSTRATIVE_A = (np.array([[0.6, 0.3], [0.3, 0.7]]), np.array([[0.6, 0.1], [0.8, 0.1]]))
ILLUSTRATIVE_B = (np.array([[10.0, 5.5], [11.0, 4.0]]), np.array([[13.0, 19.0], [6.5, 10.0]]))
ILLUSTRATIVE_R = (np.diag([10.0, 0.01]), np.diag([0.01, 20.0]))
ILLUSTRATIVE_X0 = np.array([5.0, -5.0, -5.0, 5.0])


def illustrative_spec(weight: float, horizon: int = 10, terminal_cost: bool = True) -> GameSpec:
    """Two decoupled 2-state agents with aggregative input costs.

    Agent 1 weighs its first state by ``weight``, agent 2 its second; the
    other state gets 0.05. The last predicted state is penalised by default.
    """
    Ws = (np.diag([weight, 0.05]), np.diag([0.05, weight]))
    agents = []
    for v in range(2):
        Q_self, Q_cross = aggregative_cost(ILLUSTRATIVE_R[v], v, 2)
        agents.append(Agent(AgentDynamics(ILLUSTRATIVE_A[v], ILLUSTRATIVE_B[v]),
                            StageCost(Ws[v], np.zeros(2), Q_self, Q_cross)))
    return GameSpec(tuple(agents), horizon, mode="decoupled", terminal_cost=terminal_cost)


# -- battery charging game -----------------------------------------------------

@dataclass(frozen=True)
class BatteryParameters:
    """Per-consumer values (arrays of length M) plus shared limits; energies in kWh."""

    A: np.ndarray
    B: np.ndarray
    x_ref: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray
    demand: np.ndarray          # nominal demand, shape (hours, M)
    u_max: float = 7.0
    l_max: float = 6.0
    L_max: float = 10.0
    horizon: int = 2
    shock_start: int = 21
    shock_stop: int = 25        # exclusive
    shock_factor: float = 2.0
    x0: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return len(self.A)

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BatteryParameters":
        d = dict(d)
        for k in ("A", "B", "x_ref", "gamma1", "gamma2", "gamma3", "demand", "x0"):
            if d.get(k) is not None:
                d[k] = np.asarray(d[k], dtype=float)
        return cls(**d)


def demand_profile(hours: int, scale: float = 1.0) -> np.ndarray:
    """Smooth residential profile in kW with a morning and a larger evening peak."""
    h = np.arange(hours) % 24
    base = 0.6 + 0.5 * np.exp(-0.5 * ((h - 7.5) / 1.5) ** 2) + 0.9 * np.exp(-0.5 * ((h - 19.0) / 2.0) ** 2)
    return scale * base


def draw_battery_parameters(seed: int = DEFAULT_SEED, M: int = 3, hours: int = 48, horizon: int = 2) -> BatteryParameters:
    rng = np.random.default_rng(seed)
    u = lambda lo, hi: rng.uniform(lo, hi, size=M)
    A, B, x_ref = u(0.955, 0.98), u(0.7, 0.9), u(15.0, 20.0)
    g1, g2, g3 = u(0.03, 0.05), u(0.01, 0.2), u(0.01, 0.02)
    scales = u(0.8, 1.2)
    demand = np.column_stack([demand_profile(hours + horizon, s) for s in scales])
    x0 = u(5.0, 10.0)
    return BatteryParameters(A, B, x_ref, g1, g2, g3, demand, horizon=horizon, x0=x0)


def actual_demand(p: BatteryParameters, t: int) -> np.ndarray:
    d = p.demand[t].copy()
    if p.shock_start <= t < p.shock_stop:
        d *= p.shock_factor
    return d


def battery_spec(p: BatteryParameters, stage_demand: np.ndarray) -> GameSpec:
    """Game for a given demand forecast of shape (K, M)."""
    K, M = p.horizon, p.M
    d = np.asarray(stage_demand, dtype=float).reshape(K, M)
    total = d.sum(axis=1)
    agents, lower, upper = [], [], []
    for v in range(M):
        q = (p.gamma1[v] * (total + d[:, v]) + p.gamma2[v]).reshape(K, 1)
        cost = StageCost(W=[[p.gamma3[v]]], w=[-2.0 * p.gamma3[v] * p.x_ref[v]],
                         Q_self=[[2.0 * p.gamma1[v]]],
                         Q_cross={j: [[p.gamma1[v]]] for j in range(M) if j != v}, q=q)
        agents.append(Agent(AgentDynamics([[p.A[v]]], [[p.B[v]]]), cost))
        lower.append(np.maximum(-p.u_max, -d[:, v]).reshape(K, 1))
        upper.append(np.minimum(p.u_max, p.l_max - d[:, v]).reshape(K, 1))
    C = np.vstack([-np.ones(M), np.ones(M)])
    c = np.column_stack([total, p.L_max - total])
    return GameSpec(tuple(agents), K, ConstraintSpec(tuple(lower), tuple(upper), C, c), mode="decoupled")


def battery_schedule(p: BatteryParameters, shock: bool = True) -> ParameterSchedule:
    """Stage 0 sees the realised demand, later stages the nominal forecast (no preview of shocks)."""
    n = p.demand.shape[0] - p.horizon + 1
    cache = {}

    def spec_at(t: int) -> GameSpec:
        if t not in cache:
            d = p.demand[t:t + p.horizon].copy()
            d[0] = actual_demand(p, t) if shock else p.demand[t]
            cache.clear()
            cache[t] = battery_spec(p, d)
        return cache[t]

    return ParameterSchedule(spec_at, battery_nominal_spec(p), n)


def battery_nominal_spec(p: BatteryParameters) -> GameSpec:
    """Frozen game at the average demand, used for certificates and the steady state."""
    mean = p.demand.mean(axis=0)
    return battery_spec(p, np.tile(mean, (p.horizon, 1)))


# -- builtins -----------------------------------------------------------------

def builtin(name: str, seed: Optional[int] = None) -> Scenario:
    if name == "illustrative_unstable":
        return Scenario(name, illustrative_spec(20.0), ILLUSTRATIVE_X0.copy(), 200)
    if name == "illustrative_stable":
        return Scenario(name, illustrative_spec(1.0), ILLUSTRATIVE_X0.copy(), 100)
    if name == "battery_charging":
        s = DEFAULT_SEED if seed is None else int(seed)
        p = draw_battery_parameters(s)
        return Scenario(name, battery_nominal_spec(p), p.x0.copy(), 48, seed=s,
                        schedule=battery_schedule(p), battery=p)
    raise ScenarioError([f"unknown builtin {name!r}; choose one of {', '.join(BUILTINS)}"])


# -- JSON ---------------------------------------------------------------------

_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_VECTOR = {"type": "array", "items": {"type": "number"}}
_VEC_OR_MAT = {"oneOf": [_VECTOR, _MATRIX]}
_BOUND = {"oneOf": [{"type": "null"}, _VECTOR, _MATRIX]}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["agents", "horizon"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "horizon": {"type": "integer", "minimum": 2},
        "mode": {"enum": ["coupled", "decoupled"]},
        "terminal_cost": {"type": "boolean"},
        "agents": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["A", "B", "W"],
                "additionalProperties": False,
                "properties": {
                    "A": _MATRIX, "B": _MATRIX, "W": _MATRIX, "w": _VECTOR,
                    "cost": {
                        "oneOf": [
                            {"type": "object", "additionalProperties": False, "required": ["form", "Q_self"],
                             "properties": {"form": {"const": "quadratic"}, "Q_self": _MATRIX,
                                            "Q_cross": {"type": "object", "additionalProperties": _MATRIX},
                                            "q": _VEC_OR_MAT}},
                            {"type": "object", "additionalProperties": False, "required": ["form", "R"],
                             "properties": {"form": {"const": "aggregative"}, "R": _MATRIX, "q": _VEC_OR_MAT}},
                        ]
                    },
                },
            },
        },
        "constraints": {
            "type": "object", "additionalProperties": False,
            "properties": {"lower": {"type": "array", "items": _BOUND},
                           "upper": {"type": "array", "items": _BOUND},
                           "C": _MATRIX, "c": _VEC_OR_MAT},
        },
        "schedule": {
            "type": "object", "additionalProperties": False, "required": ["kind", "parameters"],
            "properties": {"kind": {"const": "battery"}, "shock": {"type": "boolean"},
                           "parameters": {"type": "object"}},
        },
        "simulation": {
            "type": "object", "additionalProperties": False,
            "properties": {"x0": _VECTOR, "T": {"type": "integer", "minimum": 1},
                           "seed": {"type": "integer", "minimum": 0}},
        },
        "certificate": {
            "type": "object", "additionalProperties": False,
            "properties": {"delta": {"type": "number", "exclusiveMinimum": 0},
                           "budget": {"type": "integer", "minimum": 1}},
        },
    },
}


def _path(err) -> str:
    out = ""
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _matrix_problems(field_name, M):
    rows = [len(r) for r in M]
    bad = [i for i, n in enumerate(rows) if n != rows[0]]
    return [f"{field_name}: row {i} has length {rows[i]}, row 0 has {rows[0]}" for i in bad]


def _dimension_problems(doc) -> list:
    problems = []
    for v, ag in enumerate(doc["agents"]):
        pre = f"agents[{v}]"
        for key in ("A", "B", "W"):
            problems += _matrix_problems(f"{pre}.{key}", ag[key])
        cost = ag.get("cost", {})
        for key in ("Q_self", "R"):
            if key in cost:
                problems += _matrix_problems(f"{pre}.cost.{key}", cost[key])
        if problems:
            continue
        n, m = len(ag["A"]), len(ag["B"][0])
        if len(ag["A"][0]) != n:
            problems.append(f"{pre}.A: must be square, got {n}x{len(ag['A'][0])}")
        if len(ag["B"]) != n:
            problems.append(f"{pre}.B: has {len(ag['B'])} rows, A has {n}")
        if len(ag["W"]) != n or len(ag["W"][0]) != n:
            problems.append(f"{pre}.W: must be {n}x{n}")
        if "w" in ag and len(ag["w"]) != n:
            problems.append(f"{pre}.w: has length {len(ag['w'])}, expected {n}")
        for key in ("Q_self", "R"):
            if key in cost and (len(cost[key]) != m or len(cost[key][0]) != m):
                problems.append(f"{pre}.cost.{key}: must be {m}x{m}")
    return problems


def _to_spec(doc) -> GameSpec:
    agents = []
    M = len(doc["agents"])
    for v, ag in enumerate(doc["agents"]):
        cost = ag.get("cost", {"form": "quadratic", "Q_self": np.eye(len(ag["B"][0])).tolist()})
        q = None if cost.get("q") is None else np.asarray(cost["q"], dtype=float)
        if cost["form"] == "aggregative":
            Q_self, Q_cross = aggregative_cost(np.asarray(cost["R"], dtype=float), v, M)
        else:
            Q_self = cost["Q_self"]
            Q_cross = {int(j): C for j, C in cost.get("Q_cross", {}).items()}
        w = ag.get("w", [0.0] * len(ag["A"]))
        agents.append(Agent(AgentDynamics(ag["A"], ag["B"]), StageCost(ag["W"], w, Q_self, Q_cross, q)))
    cs = doc.get("constraints", {})
    constraints = ConstraintSpec(tuple(cs.get("lower", ())), tuple(cs.get("upper", ())), cs.get("C"), cs.get("c"))
    return GameSpec(tuple(agents), doc["horizon"], constraints, doc.get("mode", "coupled"),
                    doc.get("terminal_cost", False))


def scenario_from_dict(doc: dict, seed: Optional[int] = None) -> Scenario:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError(f"{_path(e)}: {e.message}" for e in errors)
    problems = _dimension_problems(doc)
    if problems:
        raise ScenarioError(problems)
    try:
        spec = _to_spec(doc)
    except (GameError, ValueError) as exc:
        raise ScenarioError([str(exc)]) from exc
    sim = doc.get("simulation", {})
    cert = doc.get("certificate", {})
    x0 = np.asarray(sim.get("x0", np.zeros(spec.n_x)), dtype=float)
    if x0.shape != (spec.n_x,):
        raise ScenarioError([f"simulation.x0: has length {x0.size}, state has {spec.n_x}"])
    schedule = battery = None
    if "schedule" in doc:
        try:
            battery = BatteryParameters.from_dict(doc["schedule"]["parameters"])
        except (TypeError, ValueError) as exc:
            raise ScenarioError([f"schedule.parameters: {exc}"]) from exc
        schedule = battery_schedule(battery, doc["schedule"].get("shock", True))
    return Scenario(doc.get("name", "custom"), spec, x0, sim.get("T", 100),
                    sim.get("seed", DEFAULT_SEED) if seed is None else seed,
                    cert.get("delta", 1e-6), cert.get("budget", 50_000), schedule, battery)


def _as_list(a):
    return None if a is None else np.asarray(a).tolist()


def spec_to_dict(spec: GameSpec) -> dict:
    agents = []
    for ag in spec.agents:
        c = ag.cost
        agents.append({
            "A": ag.dynamics.A.tolist(), "B": ag.dynamics.B.tolist(), "W": c.W.tolist(), "w": c.w.tolist(),
            "cost": {"form": "quadratic", "Q_self": c.Q_self.tolist(),
                     "Q_cross": {str(j): Q.tolist() for j, Q in c.Q_cross.items()}, "q": c.q.tolist()},
        })
    doc = {"horizon": spec.K, "mode": spec.mode, "terminal_cost": spec.terminal_cost, "agents": agents}
    cs = spec.constraints
    cons = {}
    if cs.lower:
        cons["lower"] = [_as_list(b) for b in cs.lower]
    if cs.upper:
        cons["upper"] = [_as_list(b) for b in cs.upper]
    if cs.C is not None:
        cons["C"], cons["c"] = cs.C.tolist(), cs.c.tolist()
    if cons:
        doc["constraints"] = cons
    return doc


def scenario_to_dict(sc: Scenario) -> dict:
    doc = {"name": sc.name, **spec_to_dict(sc.spec),
           "simulation": {"x0": sc.x0.tolist(), "T": sc.T, "seed": sc.seed},
           "certificate": {"delta": sc.delta, "budget": sc.budget}}
    if sc.battery is not None:
        doc["schedule"] = {"kind": "battery", "shock": True, "parameters": sc.battery.to_dict()}
    return doc


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2))


def load_scenario(source: str, seed: Optional[int] = None) -> Scenario:
    """A builtin name or a path to a JSON scenario file."""
    if source in BUILTINS:
        return builtin(source, seed)
    path = Path(source)
    if not path.exists():
        raise ScenarioError([f"{source!r} is neither a file nor a builtin ({', '.join(BUILTINS)})"])
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    return scenario_from_dict(doc, seed)


def specs_equal(a: GameSpec, b: GameSpec) -> bool:
    """Structural equality of two game specifications (array fields compared exactly)."""
    return spec_to_dict(a) == spec_to_dict(b)
