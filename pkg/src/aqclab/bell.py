"""Bell scenarios, behaviors, functionals and local (classical) bounds.

A behavior table is stored as an array of shape ``(*outputs, *inputs)`` so that
``table[a1, ..., an, x1, ..., xn] = P(a1 ... an | x1 ... xn)``.  Functional
coefficients use the same layout.  All indices are 0-based in memory; the text
formats in :mod:`aqclab.fileio` are 1-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9
NEGATIVITY_TOL = 1e-12
NO_SIGNALING_TOL = 1e-9
ENUMERATION_LIMIT = 10**7


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    def __post_init__(self):
        inputs = tuple(int(m) for m in self.inputs)
        outputs = tuple(int(d) for d in self.outputs)
        if len(inputs) != len(outputs) or not inputs:
            raise ValueError("inputs and outputs must be non-empty and of equal length")
        if any(m < 1 for m in inputs) or any(d < 1 for d in outputs):
            raise ValueError("input and output cardinalities must be >= 1")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @classmethod
    def uniform(cls, n: int, m: int, d: int) -> "Scenario":
        return cls((m,) * n, (d,) * n)

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.outputs + self.inputs

    def input_tuples(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(m) for m in self.inputs))

    def output_tuples(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(d) for d in self.outputs))

    def cells(self) -> Iterable[tuple[tuple[int, ...], tuple[int, ...]]]:
        for x in self.input_tuples():
            for a in self.output_tuples():
                yield a, x

    def strategy_count(self) -> int:
        return int(np.prod([d**m for d, m in zip(self.outputs, self.inputs)], dtype=object))


@dataclass(frozen=True, eq=False)
class Behavior:
    scenario: Scenario
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.shape != self.scenario.shape:
            raise ScenarioMismatch(
                f"table shape {table.shape} does not match scenario shape {self.scenario.shape}"
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def __call__(self, outcomes: Sequence[int], inputs: Sequence[int]) -> float:
        return float(self.table[tuple(outcomes) + tuple(inputs)])


@dataclass(frozen=True, eq=False)
class BellFunctional:
    scenario: Scenario
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != self.scenario.shape:
            raise ScenarioMismatch(
                f"coefficient shape {c.shape} does not match scenario shape {self.scenario.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def from_cells(
        cls, scenario: Scenario, cells: Mapping[tuple[tuple[int, ...], tuple[int, ...]], float]
    ) -> "BellFunctional":
        c = np.zeros(scenario.shape)
        for (a, x), value in cells.items():
            idx = tuple(a) + tuple(x)
            if len(idx) != 2 * scenario.n or any(
                not 0 <= i < s for i, s in zip(idx, scenario.shape)
            ):
                raise ScenarioMismatch(f"cell {(a, x)} is not valid for {scenario}")
            c[idx] += value
        return cls(scenario, c)

    def nonzero_cells(self) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
        n = self.scenario.n
        out = []
        for idx in zip(*np.nonzero(self.coefficients)):
            idx = tuple(int(i) for i in idx)
            out.append((idx[:n], idx[n:], float(self.coefficients[idx])))
        return out

    def __add__(self, other: "BellFunctional") -> "BellFunctional":
        _same_scenario(self.scenario, other.scenario)
        return BellFunctional(self.scenario, self.coefficients + other.coefficients)

    def scaled(self, factor: float) -> "BellFunctional":
        return BellFunctional(self.scenario, factor * self.coefficients)


class Violation(NamedTuple):
    kind: str
    cell: tuple
    value: float


def _same_scenario(s: Scenario, t: Scenario) -> None:
    if s != t:
        raise ScenarioMismatch(f"scenario mismatch: {s} vs {t}")


def validate_behavior(
    b: Behavior, neg_tol: float = NEGATIVITY_TOL, norm_tol: float = NORMALIZATION_TOL
) -> list[Violation]:
    """List nonnegativity and normalization violations; empty means valid."""
    s = b.scenario
    report = []
    for idx in zip(*np.nonzero(b.table < -neg_tol)):
        idx = tuple(int(i) for i in idx)
        report.append(Violation("negative", (idx[: s.n], idx[s.n :]), float(b.table[idx])))
    sums = b.table.sum(axis=tuple(range(s.n)))
    for x in s.input_tuples():
        if abs(sums[x] - 1.0) > norm_tol:
            report.append(Violation("normalization", x, float(sums[x])))
    return report


def marginal(b: Behavior, kept: Sequence[int], inputs_of_dropped: Mapping[int, int] | Sequence[int] | None = None) -> np.ndarray:
    """Sum out dropped parties' outcomes at fixed dropped inputs.

    Returns an array of shape ``(*outputs_kept, *inputs_kept)``.  ``inputs_of_dropped``
    maps dropped party -> input (a sequence is read in increasing party order);
    missing entries default to input 0.
    """
    s = b.scenario
    kept = sorted(set(int(k) for k in kept))
    if not kept or any(not 0 <= k < s.n for k in kept) or len(kept) != len(set(kept)):
        raise ValueError(f"invalid kept party subset {kept} for {s.n} parties")
    dropped = [i for i in range(s.n) if i not in kept]
    if inputs_of_dropped is None:
        fixed = {}
    elif isinstance(inputs_of_dropped, Mapping):
        fixed = dict(inputs_of_dropped)
    else:
        fixed = dict(zip(dropped, inputs_of_dropped))
    index: list = [slice(None)] * (2 * s.n)
    for i in dropped:
        xi = int(fixed.get(i, 0))
        if not 0 <= xi < s.inputs[i]:
            raise ValueError(f"input {xi} out of range for party {i}")
        index[s.n + i] = xi
    t = b.table[tuple(index)]
    # after integer indexing the input axes of dropped parties are gone; outcome axes remain
    return t.sum(axis=tuple(dropped))


def check_no_signaling(b: Behavior) -> float:
    """Largest change of any marginal under a change of the dropped parties' inputs."""
    s = b.scenario
    worst = 0.0
    for r in range(1, s.n):
        for kept in itertools.combinations(range(s.n), r):
            dropped = [i for i in range(s.n) if i not in kept]
            summed = b.table.sum(axis=tuple(dropped))
            # remaining axes: kept outcomes, then all inputs
            in_axes = tuple(len(kept) + i for i in dropped)
            spread = summed.max(axis=in_axes) - summed.min(axis=in_axes)
            worst = max(worst, float(spread.max(initial=0.0)))
    return worst


def evaluate_functional(f: BellFunctional, b: Behavior) -> float:
    _same_scenario(f.scenario, b.scenario)
    return float(np.sum(f.coefficients * b.table))


def _strategy_table(d: int, m: int) -> np.ndarray:
    """One-hot array ``D[s, a, x] = [s(x) == a]`` over all ``d**m`` response functions."""
    strategies = np.array(list(itertools.product(range(d), repeat=m)), dtype=int).reshape(-1, m)
    table = np.zeros((len(strategies), d, m))
    for x in range(m):
        table[np.arange(len(strategies)), strategies[:, x], x] = 1.0
    return table


def classical_bound(f: BellFunctional, limit: int = ENUMERATION_LIMIT) -> float:
    """Exact maximum of ``f`` over deterministic local strategies.

    Strategies of all parties but the last are enumerated; the last party's
    response is optimized input by input, which is exact.
    """
    s = f.scenario
    size = s.strategy_count()
    if size > limit:
        raise ValueError(f"enumeration needs {size} strategies, above the limit {limit}")
    n = s.n
    # axes: (strategies-so-far, a_i.., x_i..)
    acc = f.coefficients[np.newaxis]
    for i in range(n - 1):
        rest = n - i
        # move a_i and x_i next to the strategy axis
        acc = np.moveaxis(acc, (1, 1 + rest), (1, 2))
        shape_rest = acc.shape[3:]
        acc = acc.reshape(acc.shape[0], acc.shape[1], acc.shape[2], -1)
        acc = np.einsum("pamr,sam->psr", acc, _strategy_table(s.outputs[i], s.inputs[i]))
        acc = acc.reshape((-1,) + shape_rest)
    # acc: (strategies, a_last, x_last)
    values = acc.max(axis=1).sum(axis=1)
    return float(values.max())


def correlator_functional(scenario: Scenario, terms: Mapping[tuple[int, ...], float]) -> BellFunctional:
    """Expand full-correlator terms ``coeff * <A_x1 B_x2 ...>`` into probability coefficients.

    Outcome ``a`` (0-based) carries the value ``(-1)**a``; only binary outputs are expanded.
    """
    if any(d != 2 for d in scenario.outputs):
        raise ValueError("correlator expansion is only defined for binary outputs")
    c = np.zeros(scenario.shape)
    for x, coeff in terms.items():
        x = tuple(x)
        for a in scenario.output_tuples():
            c[a + x] += coeff * (-1) ** sum(a)
    return BellFunctional(scenario, c)


def chsh() -> BellFunctional:
    s = Scenario.uniform(2, 2, 2)
    return correlator_functional(s, {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1})


def mermin() -> BellFunctional:
    s = Scenario.uniform(3, 2, 2)
    return correlator_functional(
        s, {(0, 0, 1): 1, (0, 1, 0): 1, (1, 0, 0): 1, (1, 1, 1): -1}
    )


def i3322() -> BellFunctional:
    """The I3322 inequality in Collins-Gisin form (local bound 0).

    ``P(A_x)`` abbreviates ``P(a=0|x)``; single-party marginals are read with the
    other party at input 0.
    """
    s = Scenario.uniform(2, 3, 2)
    c = np.zeros(s.shape)
    joint = {(0, 0): 1, (0, 1): 1, (0, 2): 1, (1, 0): 1, (1, 1): 1, (1, 2): -1, (2, 0): 1, (2, 1): -1}
    for (x, y), v in joint.items():
        c[0, 0, x, y] += v
    # -P_A(0|0) - 2 P_B(0|0) - P_B(0|1)
    c[0, :, 0, 0] += -1
    c[:, 0, 0, 0] += -2
    c[:, 0, 0, 1] += -1
    return BellFunctional(s, c)


CANONICAL = {"chsh": chsh, "mermin": mermin, "i3322": i3322}


def canonical_functional(name: str) -> BellFunctional:
    try:
        return CANONICAL[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown functional {name!r}; known: {sorted(CANONICAL)}") from None


def uniform_behavior(scenario: Scenario) -> Behavior:
    return Behavior(scenario, np.full(scenario.shape, 1.0 / np.prod(scenario.outputs)))


def pr_box() -> Behavior:
    s = Scenario.uniform(2, 2, 2)
    t = np.zeros(s.shape)
    for a, b, x, y in itertools.product(range(2), repeat=4):
        if (a ^ b) == (x * y):
            t[a, b, x, y] = 0.5
    return Behavior(s, t)


def deterministic_behavior(scenario: Scenario, responses: Sequence[Sequence[int]]) -> Behavior:
    """Local deterministic behavior; ``responses[i][x]`` is party i's outcome on input x."""
    t = np.zeros(scenario.shape)
    for x in scenario.input_tuples():
        a = tuple(responses[i][xi] for i, xi in enumerate(x))
        t[a + x] = 1.0
    return Behavior(scenario, t)


def product_behavior(local_tables: Sequence[np.ndarray]) -> Behavior:
    """Behavior of independent parties; ``local_tables[i]`` has shape ``(d_i, m_i)``."""
    local_tables = [np.asarray(t, dtype=float) for t in local_tables]
    scenario = Scenario(tuple(t.shape[1] for t in local_tables), tuple(t.shape[0] for t in local_tables))
    n = scenario.n
    t = np.ones(scenario.shape)
    for i, lt in enumerate(local_tables):
        shape = [1] * (2 * n)
        shape[i] = lt.shape[0]
        shape[n + i] = lt.shape[1]
        t = t * lt.reshape(shape)
    return Behavior(scenario, t)
