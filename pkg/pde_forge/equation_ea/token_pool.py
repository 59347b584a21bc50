import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from pde_forge import constants
from pde_forge.differentiation import TokenCache, token_key
from pde_forge.errors import ArgumentError, ConfigurationError

logger = logging.getLogger(__name__)

DERIVATIVE = "derivative"
PARAMETRIC = "parametric"

# Parametric token functions: coordinates along the factor's axis, parameters -> values
PARAMETRIC_FUNCTIONS = {
    "trig": lambda coords, params: np.sin(params["frequency"] * coords),
}


class ParamSpec(NamedTuple):
    name: str
    lower: float
    upper: float
    is_integer: bool

    @property
    def span(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class TokenFamily:
    """
    A class of tokens sharing one evaluation rule, e.g. all derivatives of `u`.

    For derivative families `order_limits[axis]` is the highest order allowed along
    that axis; 0 removes the axis from the pool.
    """
    family_name: str
    kind: str
    param_schema: tuple[ParamSpec, ...]
    variable: str | None = None
    axis_names: tuple[str, ...] = ()
    order_limits: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "param_schema", tuple(ParamSpec(*p) for p in self.param_schema))
        for p in self.param_schema:
            if not p.lower <= p.upper:
                raise ConfigurationError(f"{self.family_name}: bounds of '{p.name}' are not ordered")
        names = {p.name for p in self.param_schema}
        if self.kind == DERIVATIVE:
            if names != {"axis", "order", "power"} or self.variable is None:
                raise ConfigurationError(f"{self.family_name}: derivative families need a variable and params axis, order, power")
            if len(self.order_limits) != len(self.axis_names):
                raise ConfigurationError(f"{self.family_name}: one order limit per axis is required")
            if max(self.order_limits, default=0) > self.spec("order").upper:
                raise ConfigurationError(f"{self.family_name}: order limit above the order bound")
        elif self.kind == PARAMETRIC:
            if self.family_name not in PARAMETRIC_FUNCTIONS:
                raise ConfigurationError(f"unknown parametric family '{self.family_name}'")
            if not {"axis", "power"} <= names:
                raise ConfigurationError(f"{self.family_name}: parametric families need axis and power params")
        else:
            raise ConfigurationError(f"unknown token kind '{self.kind}'")

    def spec(self, name: str) -> ParamSpec:
        for p in self.param_schema:
            if p.name == name:
                return p
        raise ArgumentError(f"{self.family_name} has no parameter '{name}'")

    @property
    def allowed_axes(self) -> tuple[int, ...]:
        if self.kind == DERIVATIVE:
            return tuple(a for a, limit in enumerate(self.order_limits) if limit > 0)
        axis = self.spec("axis")
        return tuple(range(int(axis.lower), int(axis.upper) + 1))

    def sample(self, rng: np.random.Generator) -> dict[str, float]:
        """ Uniform draw of every parameter within its bounds """
        params = {}
        for p in self.param_schema:
            if p.name == "axis" and self.kind == DERIVATIVE:
                continue
            if p.name == "order":
                continue
            if p.is_integer:
                params[p.name] = int(rng.integers(int(p.lower), int(p.upper) + 1))
            else:
                params[p.name] = float(rng.uniform(p.lower, p.upper))
        if self.kind == DERIVATIVE:
            axes = self.allowed_axes
            axis = axes[int(rng.integers(len(axes)))] if axes else 0
            limit = self.order_limits[axis] if axes else 0
            params["axis"] = axis
            params["order"] = int(rng.integers(0, limit + 1))
        return self.clamp(params)

    def clamp(self, params: dict[str, float]) -> dict[str, float]:
        """ Round integer params and pull every value back inside the schema """
        out = {}
        for p in self.param_schema:
            if p.name not in params:
                raise ArgumentError(f"{self.family_name}: parameter '{p.name}' is missing")
            value = min(max(float(params[p.name]), p.lower), p.upper)
            out[p.name] = int(round(value)) if p.is_integer else value
        if self.kind == DERIVATIVE:
            if out["order"] == 0:
                # The raw field does not depend on the axis
                out["axis"] = 0
            else:
                axes = self.allowed_axes
                if not axes:
                    out["order"], out["axis"] = 0, 0
                else:
                    if out["axis"] not in axes:
                        out["axis"] = min(axes, key=lambda a: (abs(a - out["axis"]), a))
                    out["order"] = min(out["order"], self.order_limits[out["axis"]])
        elif self.kind == PARAMETRIC:
            axes = self.allowed_axes
            if out["axis"] not in axes:
                out["axis"] = min(axes, key=lambda a: (abs(a - out["axis"]), a))
        return out


def derivative_family(
        variable: str,
        axis_names: Sequence[str],
        max_order: int = constants.DIFF_MAX_ORDER,
        max_power: int = constants.MAX_POWER,
        order_limits: Sequence[int] | None = None
) -> TokenFamily:
    """
    Family of a dependent variable and its pure derivatives.

    Args:
        variable (str): Dependent variable name.
        axis_names (Sequence[str]): Grid axes.
        max_order (int): Highest derivative order.
        max_power (int): Highest power a factor may be raised to.
        order_limits (Sequence[int] | None): Per-axis highest order, defaults to max_order everywhere.

    Returns:
        TokenFamily: The derivative family.
    """
    axis_names = tuple(axis_names)
    limits = tuple(order_limits) if order_limits is not None else (max_order,) * len(axis_names)
    return TokenFamily(
        family_name=variable,
        kind=DERIVATIVE,
        variable=variable,
        axis_names=axis_names,
        order_limits=tuple(int(min(limit, max_order)) for limit in limits),
        param_schema=(
            ParamSpec("axis", 0, len(axis_names) - 1, True),
            ParamSpec("order", 0, max_order, True),
            ParamSpec("power", 1, max_power, True),
        ),
    )


def trig_family(
        axis_names: Sequence[str],
        frequency_bounds: tuple[float, float],
        max_power: int = constants.MAX_POWER,
        axis: int | None = None
) -> TokenFamily:
    """ Sine family sin(frequency * x_axis)^power along one axis, or any axis when `axis` is None """
    axis_names = tuple(axis_names)
    lo, hi = (axis, axis) if axis is not None else (0, len(axis_names) - 1)
    return TokenFamily(
        family_name="trig",
        kind=PARAMETRIC,
        axis_names=axis_names,
        param_schema=(
            ParamSpec("axis", lo, hi, True),
            ParamSpec("frequency", float(frequency_bounds[0]), float(frequency_bounds[1]), False),
            ParamSpec("power", 1, max_power, True),
        ),
    )


@dataclass(frozen=True)
class Factor:
    """ A token with fixed parameters; values follow the family's schema order """
    family: TokenFamily
    values: tuple[float, ...]

    @classmethod
    def create(cls, family: TokenFamily, **params) -> "Factor":
        clamped = family.clamp(params)
        return cls(family, tuple(clamped[p.name] for p in family.param_schema))

    @cached_property
    def params(self) -> dict[str, float]:
        return {p.name: v for p, v in zip(self.family.param_schema, self.values)}

    @property
    def power(self) -> int:
        return int(self.params["power"])

    @property
    def variable(self) -> str | None:
        return self.family.variable

    @property
    def base_key(self) -> tuple:
        """ Identity of the factor ignoring its power """
        return (self.family, tuple(v for p, v in zip(self.family.param_schema, self.values) if p.name != "power"))

    @property
    def cache_key(self) -> str:
        """ Token signature at power 1 for derivative factors """
        params = self.params
        axis = int(params["axis"])
        return token_key(self.family.variable, self.family.axis_names[axis], int(params["order"]))

    def with_params(self, **updates) -> "Factor":
        return Factor.create(self.family, **{**self.params, **updates})

    @cached_property
    def signature(self) -> str:
        return factor_signature(self)


def _format_param(spec: ParamSpec, value: float, family: TokenFamily) -> str:
    if spec.name == "axis" and family.axis_names:
        return family.axis_names[int(value)]
    if spec.is_integer:
        return str(int(value))
    return repr(float(value))


def factor_signature(factor: Factor) -> str:
    """
    Canonical string of a factor; equal iff family and parameters are equal.

    Args:
        factor (Factor): The factor.

    Returns:
        str: e.g. `d2u/dx2`, `u^2` or `trig(axis=x,frequency=1.5)`.
    """
    family = factor.family
    power = factor.power
    suffix = f"^{power}" if power != 1 else ""
    if family.kind == DERIVATIVE:
        return factor.cache_key + suffix
    body = ",".join(
        f"{p.name}={_format_param(p, v, family)}"
        for p, v in zip(family.param_schema, factor.values) if p.name != "power"
    )
    return f"{family.family_name}({body}){suffix}"


@dataclass(frozen=True)
class Term:
    """ Product of factors, canonically ordered by signature """
    factors: tuple[Factor, ...]

    def __post_init__(self):
        if len(self.factors) == 0:
            raise ArgumentError("a term needs at least one factor")
        keys = [f.base_key for f in self.factors]
        if len(set(keys)) != len(keys):
            raise ArgumentError("a term cannot repeat a factor; merge powers instead")

    @classmethod
    def build(cls, factors: Sequence[Factor]) -> "Term":
        """ Merge repeated factors into powers and order the result """
        merged: dict[tuple, Factor] = {}
        for factor in factors:
            key = factor.base_key
            if key in merged:
                previous = merged[key]
                merged[key] = previous.with_params(power=previous.power + factor.power)
            else:
                merged[key] = factor
        return cls(tuple(sorted(merged.values(), key=lambda f: f.signature)))

    @cached_property
    def signature(self) -> str:
        return " * ".join(f.signature for f in self.factors)

    @property
    def family_names(self) -> tuple[str, ...]:
        return tuple(sorted(f.family.family_name for f in self.factors))

    @property
    def variables(self) -> set[str]:
        return {f.variable for f in self.factors if f.variable is not None}


@dataclass(frozen=True)
class StructureConfig:
    """ Size limits of candidate equations """
    max_factors: int = constants.MAX_FACTORS_PER_TERM
    n_terms_min: int = constants.N_TERMS_MIN
    n_terms_max: int = constants.N_TERMS_MAX

    def __post_init__(self):
        if self.max_factors < 1:
            raise ConfigurationError(f"max_factors must be >= 1, got {self.max_factors}")
        if not 2 <= self.n_terms_min <= self.n_terms_max:
            raise ConfigurationError(f"need 2 <= n_terms_min <= n_terms_max, got {self.n_terms_min}, {self.n_terms_max}")


@dataclass(frozen=True)
class Chromosome:
    """ Candidate equation structure: a list of distinct terms """
    terms: tuple[Term, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        signatures = [t.signature for t in self.terms]
        if len(set(signatures)) != len(signatures):
            raise ArgumentError(f"duplicate terms in chromosome: {signatures}")

    @property
    def signature(self) -> tuple[str, ...]:
        return tuple(t.signature for t in self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def is_valid(self, cfg: StructureConfig) -> bool:
        return (cfg.n_terms_min <= len(self.terms) <= cfg.n_terms_max
                and all(len(t.factors) <= cfg.max_factors for t in self.terms))


def evaluate_factor(factor: Factor, cache: TokenCache) -> np.ndarray:
    family = factor.family
    if family.kind == DERIVATIVE:
        base = cache[factor.cache_key]
    else:
        params = factor.params
        coords = cache.grid.coordinates(int(params["axis"]))
        base = PARAMETRIC_FUNCTIONS[family.family_name](coords, params)
    return base if factor.power == 1 else base ** factor.power


def evaluate_term(term: Term, cache: TokenCache) -> np.ndarray:
    """
    Pointwise product of the term's factors over the grid.

    Args:
        term (Term): The term.
        cache (TokenCache): Evaluated tokens.

    Returns:
        np.ndarray: Flat array of length M.
    """
    result = np.ones(cache.grid.size)
    for factor in term.factors:
        result = result * evaluate_factor(factor, cache)
    return result


def random_term(rng: np.random.Generator, pool: Sequence[TokenFamily], max_factors: int) -> Term:
    """ 1..max_factors random factors, families and parameters drawn uniformly """
    if not pool:
        raise ArgumentError("token pool is empty")
    n_factors = int(rng.integers(1, max_factors + 1))
    factors = []
    for _ in range(n_factors):
        family = pool[int(rng.integers(len(pool)))]
        factors.append(Factor.create(family, **family.sample(rng)))
    return Term.build(factors)


def random_chromosome(rng: np.random.Generator, pool: Sequence[TokenFamily], cfg: StructureConfig) -> Chromosome:
    """
    Random candidate equation with distinct term signatures.

    Args:
        rng (np.random.Generator): Generator owned by the caller.
        pool (Sequence[TokenFamily]): Token families to draw from.
        cfg (StructureConfig): Term count and factor limits.

    Returns:
        Chromosome: A chromosome with n_terms_min..n_terms_max terms.
    """
    n_terms = int(rng.integers(cfg.n_terms_min, cfg.n_terms_max + 1))
    terms: dict[str, Term] = {}
    attempts = 0
    while len(terms) < n_terms and attempts < constants.STRUCTURE_RETRIES * n_terms:
        term = random_term(rng, pool, cfg.max_factors)
        terms.setdefault(term.signature, term)
        attempts += 1
    if len(terms) < cfg.n_terms_min:
        raise ConfigurationError(f"token pool too small to build {cfg.n_terms_min} distinct terms")
    return Chromosome(tuple(terms.values()))
