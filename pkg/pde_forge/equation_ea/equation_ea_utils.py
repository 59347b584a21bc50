import logging
from typing import Sequence

import numpy as np

from pde_forge import constants
from pde_forge.equation_ea.token_pool import (
    DERIVATIVE, Chromosome, Factor, Term, TokenFamily, random_term,
)

logger = logging.getLogger(__name__)


def tournament_select(fitness: Sequence[float], rng: np.random.Generator, size: int) -> int:
    """
    Index of the fittest of `size` individuals drawn without replacement.

    Args:
        fitness (Sequence[float]): Fitness of every individual in the population.
        rng (np.random.Generator): Random generator.
        size (int): Tournament size.

    Returns:
        int: Index of the winner; ties go to the lowest index.
    """
    contenders = rng.choice(len(fitness), size=min(size, len(fitness)), replace=False)
    return int(min(contenders, key=lambda i: (-fitness[i], i)))


def _paired_factors(term: Term) -> list[Factor]:
    return sorted(term.factors, key=lambda f: (f.family.family_name, f.signature))


def blend_terms(term_a: Term, term_b: Term, rng: np.random.Generator) -> tuple[Term, Term]:
    """ Offspring terms whose parameters are convex combinations of the parents', one alpha per parameter """
    new_a, new_b = [], []
    for fa, fb in zip(_paired_factors(term_a), _paired_factors(term_b)):
        params_a, params_b = {}, {}
        for spec in fa.family.param_schema:
            alpha = rng.random()
            va, vb = fa.params[spec.name], fb.params[spec.name]
            params_a[spec.name] = alpha * va + (1.0 - alpha) * vb
            params_b[spec.name] = alpha * vb + (1.0 - alpha) * va
        new_a.append(Factor.create(fa.family, **params_a))
        new_b.append(Factor.create(fb.family, **params_b))
    return Term.build(new_a), Term.build(new_b)


def _repair(terms: list[Term], parent: Chromosome, max_factors: int) -> Chromosome:
    """ Put parent terms back where the offspring repeats a signature or grew too large """
    terms = [t if len(t.factors) <= max_factors else parent.terms[i] for i, t in enumerate(terms)]
    seen = set()
    for i, term in enumerate(terms):
        if term.signature in seen:
            terms[i] = parent.terms[i]
        seen.add(terms[i].signature)
    signatures = [t.signature for t in terms]
    if len(set(signatures)) != len(signatures):
        return parent
    return Chromosome(tuple(terms))


def crossover(parent_a: Chromosome, parent_b: Chromosome, rng: np.random.Generator, cfg) -> tuple[Chromosome, Chromosome]:
    """
    Recombine two chromosomes term group by term group.

    Terms present in both parents are copied, terms built from the same families with
    different parameters exchange blended parameters, and the remaining unique terms are
    swapped pairwise with probability cfg.p_factor_swap.

    Args:
        parent_a (Chromosome): First parent.
        parent_b (Chromosome): Second parent.
        rng (np.random.Generator): Random generator.
        cfg (EAConfig): Operator probabilities and structure limits.

    Returns:
        tuple[Chromosome, Chromosome]: Two offspring, positionally aligned with their parents.
    """
    terms_a, terms_b = list(parent_a.terms), list(parent_b.terms)
    shared = set(parent_a.signature) & set(parent_b.signature)
    child_a, child_b = list(terms_a), list(terms_b)

    rest_a = [i for i, t in enumerate(terms_a) if t.signature not in shared]
    rest_b = [j for j, t in enumerate(terms_b) if t.signature not in shared]

    # Same families, different parameters
    unique_a = []
    for i in rest_a:
        match = next((j for j in rest_b if terms_b[j].family_names == terms_a[i].family_names), None)
        if match is None:
            unique_a.append(i)
            continue
        rest_b.remove(match)
        child_a[i], child_b[match] = blend_terms(terms_a[i], terms_b[match], rng)

    # Unique terms
    for i, j in zip(unique_a, rest_b):
        if rng.random() < cfg.p_factor_swap:
            child_a[i], child_b[j] = terms_b[j], terms_a[i]

    max_factors = cfg.structure.max_factors
    return _repair(child_a, parent_a, max_factors), _repair(child_b, parent_b, max_factors)


def perturb_term(term: Term, rng: np.random.Generator, cfg, pool: Sequence[TokenFamily]) -> Term:
    """ Alter one factor's parameters, its axis/order, its variable, or insert a new factor """
    factors = list(term.factors)
    idx = int(rng.integers(len(factors)))
    factor = factors[idx]
    family = factor.family

    continuous = [p for p in family.param_schema if not p.is_integer]
    siblings = [f for f in pool if f.kind == DERIVATIVE and f != family and f.axis_names == family.axis_names]
    actions = ["retarget"]
    if continuous:
        actions.append("shift")
    if family.kind == DERIVATIVE and siblings:
        actions.append("revariable")
    if len(factors) < cfg.structure.max_factors:
        actions.append("insert")

    match actions[int(rng.integers(len(actions)))]:
        case "shift":
            spec = continuous[int(rng.integers(len(continuous)))]
            delta = rng.normal(0.0, cfg.sigma_param * spec.span)
            factors[idx] = factor.with_params(**{spec.name: factor.params[spec.name] + delta})
        case "retarget":
            drawn = family.sample(rng)
            updates = {"axis": drawn["axis"]}
            if family.kind == DERIVATIVE:
                updates["order"] = drawn["order"]
            factors[idx] = factor.with_params(**updates)
        case "revariable":
            other = siblings[int(rng.integers(len(siblings)))]
            factors[idx] = Factor.create(other, **factor.params)
        case "insert":
            other = pool[int(rng.integers(len(pool)))]
            factors.append(Factor.create(other, **other.sample(rng)))
    return Term.build(factors)


def mutate(chromosome: Chromosome, rng: np.random.Generator, cfg, pool: Sequence[TokenFamily]) -> Chromosome:
    """
    Term replacement with probability cfg.p_term_mutation, otherwise a factor perturbation
    with probability cfg.p_param_mutation, independently per term.

    Args:
        chromosome (Chromosome): Individual to mutate.
        rng (np.random.Generator): Random generator.
        cfg (EAConfig): Mutation probabilities and structure limits.
        pool (Sequence[TokenFamily]): Token families for new terms and factors.

    Returns:
        Chromosome: The mutated individual; the input is left untouched.
    """
    terms = list(chromosome.terms)
    original = set(chromosome.signature)
    for idx in range(len(terms)):
        if rng.random() < cfg.p_term_mutation:
            forbidden = original | {t.signature for t in terms}
            for _ in range(constants.STRUCTURE_RETRIES):
                candidate = random_term(rng, pool, cfg.structure.max_factors)
                if candidate.signature not in forbidden:
                    terms[idx] = candidate
                    break
        elif rng.random() < cfg.p_param_mutation:
            candidate = perturb_term(terms[idx], rng, cfg, pool)
            others = {t.signature for k, t in enumerate(terms) if k != idx}
            if candidate.signature not in others and len(candidate.factors) <= cfg.structure.max_factors:
                terms[idx] = candidate
    return Chromosome(tuple(terms))
