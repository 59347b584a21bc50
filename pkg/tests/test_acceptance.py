""" Recovery runs on synthetic data; the acceptance-scale ones need --runslow """
from dataclasses import replace

import numpy as np
import pytest

from pde_forge import constants, synthetic
from pde_forge.differentiation import build_token_cache
from pde_forge.equation_ea.equation_ea import EAConfig, run_equation_ea
from pde_forge.equation_ea.system_builder import default_pool
from pde_forge.equation_ea.token_pool import StructureConfig
from pde_forge.main import main
from pde_forge.moeadd.moeadd import MOEADDConfig, aggregate_frontier, run_moeadd
from pde_forge.moeadd.moeadd_utils import dominates

HEAT_LAMBDA = 1e-4
# {u, u_x, u_xx, u_xxx, u_t}, one token per term
HEAT_STRUCTURE = StructureConfig(max_factors=1, n_terms_min=2, n_terms_max=5)
TG_STRUCTURE = StructureConfig(max_factors=2, n_terms_min=2, n_terms_max=5)
# target = c * feature on a single mode sin(2x) with alpha = 1
SINGLE_MODE_RELATIONS = {
    ("d1u/dt1", "d2u/dx2"): 1.0,
    ("d1u/dt1", "u"): -4.0,
    ("d2u/dx2", "u"): -4.0,
    ("d3u/dx3", "d1u/dx1"): -4.0,
}


@pytest.fixture(scope="module")
def two_mode_heat():
    return synthetic.default_spec("heat1d", alpha=1.0, k=2.0, a2=0.5, k2=3.0)


def heat_equation(cache, seed):
    pool = default_pool(cache.grid, ("u",), max_order=3, max_power=1, orders={"t": 1, "x": 3})
    cfg = EAConfig(population_size=32, epochs=50, rng_seed=seed, structure=HEAT_STRUCTURE)
    return run_equation_ea(cfg, pool, HEAT_LAMBDA, cache)


def heat_recovery(cache, seed):
    equation = heat_equation(cache, seed)
    structure = {equation.target_term.signature} | {term.signature for _, term in equation.active_terms}
    if structure != {"d1u/dt1", "d2u/dx2"}:
        return structure, None
    coefficient = equation.active_terms[0][0]
    # u_t = alpha * u_xx, read from whichever side holds u_t
    alpha = coefficient if equation.target_term.signature == "d1u/dt1" else 1.0 / coefficient
    return structure, alpha


def single_mode_relation(equation):
    """ (recovered, expected) coefficient of a known two-term relation, or None """
    if len(equation.active_terms) != 1:
        return None
    (coefficient, feature), = equation.active_terms
    pair = (equation.target_term.signature, feature.signature)
    if pair in SINGLE_MODE_RELATIONS:
        return coefficient, SINGLE_MODE_RELATIONS[pair]
    if pair[::-1] in SINGLE_MODE_RELATIONS:
        return coefficient, 1.0 / SINGLE_MODE_RELATIONS[pair[::-1]]
    return None


@pytest.mark.slow
def test_single_mode_heat_recovery(heat_spec, heat_cache):
    assert heat_spec.params["alpha"] == 1.0 and heat_spec.params["k"] == 2.0
    hits = 0
    for seed in range(5):
        relation = single_mode_relation(heat_equation(heat_cache, seed))
        if relation is not None:
            recovered, expected = relation
            hits += abs(recovered - expected) < 0.05 * abs(expected)
    assert hits >= 4


@pytest.mark.slow
def test_heat_recovery_on_exact_derivatives(two_mode_heat):
    cache = synthetic.analytic_derivatives(two_mode_heat)
    recovered = [heat_recovery(cache, seed)[1] for seed in range(5)]
    hits = [a for a in recovered if a is not None and abs(a - 1.0) < 0.05]
    assert len(hits) >= 4


@pytest.mark.slow
def test_heat_recovery_on_numeric_derivatives(two_mode_heat):
    cache = build_token_cache(synthetic.generate(two_mode_heat))
    exact = synthetic.analytic_derivatives(two_mode_heat)
    grid = cache.grid
    for key in ("d1u/dt1", "d1u/dx1"):
        error = (cache[key] - exact[key]).reshape(grid.shape)[4:-4, 4:-4]
        assert np.max(np.abs(error)) < 1e-3

    recovered = [heat_recovery(cache, seed)[1] for seed in range(5)]
    hits = [a for a in recovered if a is not None and abs(a - 1.0) < 0.15]
    assert len(hits) >= 3


def equation_terms(equation_text: str) -> set[str]:
    lhs, rhs = equation_text.split(" = ")
    terms = {part.split(" * ", 1)[1] for part in lhs.replace(" - ", " + ").split(" + ") if " * " in part}
    terms.add(rhs.split(" + const(")[0])
    return terms


def is_momentum(terms: set[str], velocity: str) -> bool:
    return (f"d1{velocity}/dt1" in terms
            and bool(terms & {f"d2{velocity}/dx2", f"d2{velocity}/dy2"})
            and bool(terms & {"d1p/dx1", "d1p/dy1"}))


def taylor_green_run(spec, moeadd_cfg, ea_cfg):
    """ Run the meta-optimizer on analytic derivatives and check the frontier properties every run must have """
    cache = synthetic.analytic_derivatives(spec, max_order=2)
    pool = default_pool(cache.grid, cache.variables, max_order=2, max_power=1)
    snapshots = []
    archive = run_moeadd(None, moeadd_cfg, ea_cfg, pool=pool, cache=cache,
                         on_epoch=lambda epoch, snapshot: snapshots.append(snapshot))
    assert len(snapshots) == moeadd_cfg.epochs + 1

    # Mutual non-dominance at every epoch, zero tolerance
    for snapshot in snapshots:
        points = snapshot.objectives
        for i, a in enumerate(points):
            assert not any(dominates(b, a) for j, b in enumerate(points) if j != i)

    rows = aggregate_frontier(archive)
    front = [row for row in rows if not row.dominated]
    errors = [row.total_error for row in front]
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
    complexities = [row.total_complexity for row in front]
    assert all(later > earlier for earlier, later in zip(complexities, complexities[1:]))
    return rows


def test_small_taylor_green_frontier():
    spec = synthetic.default_spec("taylor_green")
    n_space = 16
    spec = replace(spec, shape=(8, n_space, n_space),
                   steps=(constants.TIME_STEP, constants.TWO_PI / n_space, constants.TWO_PI / n_space))
    rows = taylor_green_run(
        spec,
        MOEADDConfig(divisions=1, n_neighbors=2, epochs=2, pilot_epochs=1, rng_seed=0),
        EAConfig(population_size=6, epochs=2, tournament_size=2, rng_seed=0, structure=TG_STRUCTURE),
    )
    assert rows
    assert all(len(row.complexity) == 3 for row in rows)


@pytest.mark.slow
def test_taylor_green_frontier_structure():
    spec = synthetic.default_spec("taylor_green")
    moeadd_cfg = MOEADDConfig(epochs=15)
    # 56 weight vectors for three equations
    assert moeadd_cfg.divisions == constants.DIVISIONS == 3
    ea_cfg = EAConfig(population_size=16, epochs=10, n_workers=4, structure=TG_STRUCTURE)

    passed = 0
    for seed in range(3):
        rows = taylor_green_run(spec, replace(moeadd_cfg, rng_seed=seed), replace(ea_cfg, rng_seed=seed))
        simplest = rows[0]
        trivial = any(c == 1 for c in simplest.complexity)
        momentum = any(
            any(is_momentum(equation_terms(text), "u") for text in row.equations)
            and any(is_momentum(equation_terms(text), "v") for text in row.equations)
            for row in rows
        )
        passed += trivial and momentum
    assert passed >= 2


@pytest.mark.slow
def test_static_pressure_gives_a_trivial_equation(two_mode_heat):
    dataset = synthetic.with_static_field(synthetic.generate(two_mode_heat), "p", 1.0)
    cache = build_token_cache(dataset)
    pool = default_pool(dataset.grid, dataset.variable_names, max_order=2, max_power=1)
    archive = run_moeadd(None, MOEADDConfig(divisions=3, epochs=3, rng_seed=1),
                         EAConfig(population_size=12, epochs=6, rng_seed=1), pool=pool, cache=cache)
    simplest = aggregate_frontier(archive)[0]
    assert any(c == 1 for c in simplest.complexity)


@pytest.mark.slow
def test_cli_runs_are_byte_identical(tmp_path):
    data = tmp_path / "tg.grid"
    assert main(["synth", "taylor_green", "--out", str(data)]) == constants.EXIT_OK
    (tmp_path / "run.ini").write_text(
        "[data]\npath = tg.grid\n\n[pool]\nmax_order = 2\nmax_power = 1\n\n"
        "[ea]\npopulation_size = 8\nepochs = 4\ntournament_size = 3\nworkers = 4\n\n"
        "[moeadd]\ndivisions = 1\nepochs = 2\npilot_epochs = 1\n\n"
        "[run]\nseed = 11\nlambdas = 0.01, 0.01, 0.01\n"
    )
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        for command in ("discover", "pareto"):
            assert main([command, "--config", str(tmp_path / "run.ini"), "--out", str(out), "--deterministic"]) == 0
        outputs.append([(out / name).read_bytes() for name in ("report.txt", "frontier.json", "frontier.csv")])
    assert outputs[0] == outputs[1]
