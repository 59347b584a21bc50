import argparse
import configparser
import io
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from pde_forge import constants, synthetic, utils
from pde_forge.differentiation import DiffConfig, build_token_cache
from pde_forge.equation_ea.equation_ea import EAConfig
from pde_forge.equation_ea.system_builder import SparsityVector, build_system, default_pool
from pde_forge.equation_ea.token_pool import StructureConfig, TokenFamily, trig_family
from pde_forge.errors import (
    ArgumentError, ConfigurationError, FormatError, MissingTokenError, PDEForgeError, ShapeError,
)
from pde_forge.grid_core import Dataset, Grid, load_dataset, save_dataset
from pde_forge.moeadd.moeadd import MOEADDConfig, aggregate_frontier, run_moeadd

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigurationError, FormatError, ShapeError, ArgumentError, MissingTokenError)


@dataclass(frozen=True)
class TrigConfig:
    axis: str
    frequency_min: float
    frequency_max: float
    max_power: int = 1


@dataclass(frozen=True)
class RunConfig:
    """ Everything one `discover` or `pareto` run needs, resolved from the INI file and flags """
    data_path: Path
    variables: tuple[str, ...] | None = None
    max_order: int = constants.DIFF_MAX_ORDER
    max_power: int = constants.MAX_POWER
    orders: dict[str, int] | None = None
    trig: TrigConfig | None = None
    diff: DiffConfig = field(default_factory=DiffConfig)
    ea: EAConfig = field(default_factory=EAConfig)
    moeadd: MOEADDConfig = field(default_factory=MOEADDConfig)
    out_dir: Path = Path(".")
    seed: int = 0
    lambdas: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 1 <= self.max_order <= self.diff.max_order:
            raise ConfigurationError(f"pool max_order must lie in [1, {self.diff.max_order}], got {self.max_order}")
        if self.max_power < 1:
            raise ConfigurationError(f"max_power must be >= 1, got {self.max_power}")

    def sections(self) -> dict[str, dict[str, str]]:
        """ The resolved configuration as INI sections, output directory excluded """
        ea, mo = self.ea, self.moeadd
        sections = {
            "data": {"path": str(self.data_path)},
            "pool": {
                "variables": ", ".join(self.variables) if self.variables else "",
                "max_order": str(self.max_order),
                "max_power": str(self.max_power),
                "orders": ", ".join(f"{k}:{v}" for k, v in self.orders.items()) if self.orders else "",
            },
            "diff": {"window": str(self.diff.window), "degree": str(self.diff.degree), "max_order": str(self.diff.max_order)},
            "ea": {
                "population_size": str(ea.population_size), "epochs": str(ea.epochs),
                "tournament_size": str(ea.tournament_size), "p_term_mutation": repr(ea.p_term_mutation),
                "p_param_mutation": repr(ea.p_param_mutation), "p_factor_swap": repr(ea.p_factor_swap),
                "sigma_param": repr(ea.sigma_param), "eps_fit": repr(ea.eps_fit),
                "max_factors": str(ea.structure.max_factors), "n_terms_min": str(ea.structure.n_terms_min),
                "n_terms_max": str(ea.structure.n_terms_max), "lasso_tol": repr(ea.lasso_tol),
                "lasso_max_iter": str(ea.lasso_max_iter), "workers": str(ea.n_workers),
            },
            "moeadd": {
                "divisions": str(mo.divisions), "neighbors": str(mo.n_neighbors), "epochs": str(mo.epochs),
                "p_mut": repr(mo.p_mut), "p_xover": repr(mo.p_xover), "sigma_mut": repr(mo.sigma_mut),
                "p_local": repr(mo.p_local), "lambda_min": repr(mo.lambda_bounds[0]),
                "lambda_max": repr(mo.lambda_bounds[1]), "pbi_theta": repr(mo.pbi_theta),
                "pilot_epochs": str(mo.pilot_epochs),
            },
            "run": {"seed": str(self.seed), "lambdas": ", ".join(repr(lam) for lam in self.lambdas or ())},
        }
        if self.trig is not None:
            sections["trig"] = {
                "axis": self.trig.axis, "frequency_min": repr(self.trig.frequency_min),
                "frequency_max": repr(self.trig.frequency_max), "max_power": str(self.trig.max_power),
            }
        return sections

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        parser.read_dict(self.sections())
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()


def _split_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def parse_orders(text: str) -> dict[str, int]:
    """ 't:1, x:3' -> {'t': 1, 'x': 3} """
    orders = {}
    for item in _split_list(text):
        axis, sep, order = item.partition(":")
        if not sep:
            raise ConfigurationError(f"order limit '{item}' must read '<axis>:<order>'")
        try:
            orders[axis.strip()] = int(order)
        except ValueError:
            raise ConfigurationError(f"order limit '{item}' needs an integer order") from None
    return orders


def parse_lambdas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(item) for item in _split_list(text))
    except ValueError:
        raise ArgumentError(f"lambdas must be comma separated reals, got '{text}'") from None


def thread_cap(workers: int, deterministic: bool) -> int:
    """ Worker count after --deterministic and the thread environment variable """
    if deterministic:
        return 1
    env = os.environ.get(constants.THREADS_ENV)
    if env is None:
        return workers
    try:
        cap = int(env)
    except ValueError:
        raise ConfigurationError(f"{constants.THREADS_ENV} must be an integer, got '{env}'") from None
    if cap < 1:
        raise ConfigurationError(f"{constants.THREADS_ENV} must be positive, got {cap}")
    return min(workers, cap)


def load_run_config(
        path: str | Path,
        seed: int | None = None,
        out: str | Path | None = None,
        deterministic: bool = False
) -> RunConfig:
    """
    Read an INI run configuration and apply command-line overrides.

    Args:
        path (str | Path): INI file; [data] path is resolved relative to it.
        seed (int | None): Overrides [run] seed.
        out (str | Path | None): Overrides [output] dir.
        deterministic (bool): Forces single-threaded evaluation.

    Returns:
        RunConfig: The resolved configuration.
    """
    path = Path(path)
    parser = configparser.ConfigParser()
    try:
        with path.open(encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc

    try:
        if not parser.has_option("data", "path"):
            raise ConfigurationError(f"{path}: [data] path is required")
        data_path = path.parent / parser.get("data", "path")

        pool = parser["pool"] if parser.has_section("pool") else {}
        diff = DiffConfig(
            window=parser.getint("diff", "window", fallback=constants.DIFF_WINDOW),
            degree=parser.getint("diff", "degree", fallback=constants.DIFF_DEGREE),
            max_order=parser.getint("diff", "max_order", fallback=constants.DIFF_MAX_ORDER),
        )

        trig = None
        if parser.has_section("trig"):
            trig = TrigConfig(
                axis=parser.get("trig", "axis"),
                frequency_min=parser.getfloat("trig", "frequency_min"),
                frequency_max=parser.getfloat("trig", "frequency_max"),
                max_power=parser.getint("trig", "max_power", fallback=1),
            )

        run_seed = seed if seed is not None else parser.getint("run", "seed", fallback=0)
        structure = StructureConfig(
            max_factors=parser.getint("ea", "max_factors", fallback=constants.MAX_FACTORS_PER_TERM),
            n_terms_min=parser.getint("ea", "n_terms_min", fallback=constants.N_TERMS_MIN),
            n_terms_max=parser.getint("ea", "n_terms_max", fallback=constants.N_TERMS_MAX),
        )
        ea = EAConfig(
            population_size=parser.getint("ea", "population_size", fallback=constants.POPULATION_SIZE),
            epochs=parser.getint("ea", "epochs", fallback=constants.EPOCHS),
            tournament_size=parser.getint("ea", "tournament_size", fallback=constants.TOURNAMENT_SIZE),
            p_term_mutation=parser.getfloat("ea", "p_term_mutation", fallback=constants.P_TERM_MUTATION),
            p_param_mutation=parser.getfloat("ea", "p_param_mutation", fallback=constants.P_PARAM_MUTATION),
            p_factor_swap=parser.getfloat("ea", "p_factor_swap", fallback=constants.P_FACTOR_SWAP),
            sigma_param=parser.getfloat("ea", "sigma_param", fallback=constants.SIGMA_PARAM),
            eps_fit=parser.getfloat("ea", "eps_fit", fallback=constants.EPS_FIT),
            rng_seed=run_seed,
            structure=structure,
            lasso_tol=parser.getfloat("ea", "lasso_tol", fallback=constants.LASSO_TOL),
            lasso_max_iter=parser.getint("ea", "lasso_max_iter", fallback=constants.LASSO_MAX_ITER),
            n_workers=thread_cap(parser.getint("ea", "workers", fallback=1), deterministic),
        )
        moeadd = MOEADDConfig(
            divisions=parser.getint("moeadd", "divisions", fallback=constants.DIVISIONS),
            n_neighbors=parser.getint("moeadd", "neighbors", fallback=constants.NEIGHBORS),
            epochs=parser.getint("moeadd", "epochs", fallback=constants.MOEADD_EPOCHS),
            p_mut=parser.getfloat("moeadd", "p_mut", fallback=constants.P_MUT),
            p_xover=parser.getfloat("moeadd", "p_xover", fallback=constants.P_XOVER),
            sigma_mut=parser.getfloat("moeadd", "sigma_mut", fallback=constants.SIGMA_MUT),
            p_local=parser.getfloat("moeadd", "p_local", fallback=constants.P_LOCAL),
            lambda_bounds=(
                parser.getfloat("moeadd", "lambda_min", fallback=constants.LAMBDA_BOUNDS[0]),
                parser.getfloat("moeadd", "lambda_max", fallback=constants.LAMBDA_BOUNDS[1]),
            ),
            pbi_theta=parser.getfloat("moeadd", "pbi_theta", fallback=constants.PBI_THETA),
            rng_seed=run_seed,
            pilot_epochs=parser.getint("moeadd", "pilot_epochs", fallback=5),
        )

        out_dir = Path(out) if out is not None else path.parent / parser.get("output", "dir", fallback=".")
        lambdas_text = parser.get("run", "lambdas", fallback="")
        return RunConfig(
            data_path=data_path,
            variables=tuple(_split_list(pool.get("variables", ""))) or None,
            max_order=int(pool.get("max_order", diff.max_order)),
            max_power=int(pool.get("max_power", constants.MAX_POWER)),
            orders=parse_orders(pool["orders"]) if pool.get("orders", "").strip() else None,
            trig=trig,
            diff=diff,
            ea=ea,
            moeadd=moeadd,
            out_dir=out_dir,
            seed=run_seed,
            lambdas=parse_lambdas(lambdas_text) if lambdas_text.strip() else None,
        )
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, ArgumentError):
            raise
        raise ConfigurationError(f"{path}: {exc}") from exc


def build_pool(cfg: RunConfig, dataset: Dataset) -> list[TokenFamily]:
    """ Derivative families of the configured variables plus the optional sine family """
    variables = cfg.variables or dataset.variable_names
    unknown = set(variables) - set(dataset.variable_names)
    if unknown:
        raise ConfigurationError(f"pool variables {sorted(unknown)} are not in the dataset {dataset.variable_names}")
    pool = default_pool(dataset.grid, variables, cfg.max_order, cfg.max_power, cfg.orders)
    if cfg.trig is not None:
        grid: Grid = dataset.grid
        pool.append(trig_family(
            grid.dim_names,
            (cfg.trig.frequency_min, cfg.trig.frequency_max),
            cfg.trig.max_power,
            axis=grid.axis_index(cfg.trig.axis),
        ))
    return pool


def _prepare_output(out_dir: Path) -> Path:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out_dir}: {exc}") from exc
    return out_dir


def cmd_synth(args: argparse.Namespace) -> int:
    params = {name: getattr(args, name) for name in ("alpha", "k", "a2", "k2", "c", "nu", "rho") if getattr(args, name) is not None}
    spec = synthetic.default_spec(args.kind, noise_std=args.noise, **params)
    dataset = synthetic.generate(spec, np.random.default_rng(args.seed))
    comments = [f"synthetic {spec.kind} {', '.join(f'{k}={v:g}' for k, v in sorted(spec.params.items()))}"]
    comments += [f"ground truth: {line}" for line in synthetic.ground_truth(spec)]
    save_dataset(dataset, args.out, comments)
    print(args.out)
    return constants.EXIT_OK


def cmd_diff(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data)
    cache = build_token_cache(dataset, DiffConfig(args.window, args.degree, args.max_order))
    save_dataset(cache.to_dataset(), args.out, [f"token cache of {args.data}, window {args.window}, degree {args.degree}"])
    print(args.out)
    return constants.EXIT_OK


def cmd_discover(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, args.seed, args.out, args.deterministic)
    lambdas = parse_lambdas(args.lambdas) if args.lambdas is not None else cfg.lambdas
    if lambdas is None:
        raise ArgumentError("no sparsity constants: pass --lambdas or set [run] lambdas")
    cfg = replace(cfg, lambdas=lambdas)

    dataset = load_dataset(cfg.data_path)
    pool = build_pool(cfg, dataset)
    cache = build_token_cache(dataset, cfg.diff)
    result = build_system(cache, pool, SparsityVector(lambdas), cfg.ea, cfg.diff)

    out_dir = _prepare_output(cfg.out_dir)
    report = out_dir / "report.txt"
    report.write_text(utils.format_report(result.system, cfg.to_ini()), encoding="utf-8")
    print(report)
    if args.dump_residuals:
        residuals = Dataset.from_arrays(dataset.grid, {f"residual{i}": r for i, r in enumerate(result.residuals, start=1)})
        path = out_dir / "residuals.grid"
        save_dataset(residuals, path, [utils.render_equation(eq) for eq in result.system.equations])
        print(path)
    return constants.EXIT_OK


def cmd_pareto(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, args.seed, args.out, args.deterministic)
    dataset = load_dataset(cfg.data_path)
    pool = build_pool(cfg, dataset)
    archive = run_moeadd(dataset, cfg.moeadd, cfg.ea, cfg.diff, pool=pool)
    rows = aggregate_frontier(archive)

    out_dir = _prepare_output(cfg.out_dir)
    json_path, csv_path = out_dir / "frontier.json", out_dir / "frontier.csv"
    json_path.write_text(utils.frontier_to_json(rows, archive.ideal_point, cfg.sections()), encoding="utf-8")
    csv_path.write_text(utils.frontier_to_csv(rows), encoding="utf-8")
    print(utils.frontier_table(rows))
    print(json_path)
    print(csv_path)
    return constants.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pde_forge", description="Discover systems of PDEs from gridded data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-evaluation detail")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="write a synthetic dataset with a known system")
    synth.add_argument("kind", choices=sorted(synthetic.SOLUTIONS))
    synth.add_argument("--out", required=True, help="EPDE-GRID file to write")
    synth.add_argument("--alpha", type=float, help="heat1d diffusivity")
    synth.add_argument("--k", type=float, help="heat1d / advection1d wavenumber")
    synth.add_argument("--a2", type=float, help="heat1d amplitude of the second mode")
    synth.add_argument("--k2", type=float, help="heat1d wavenumber of the second mode")
    synth.add_argument("--c", type=float, help="advection1d speed")
    synth.add_argument("--nu", type=float, help="taylor_green viscosity")
    synth.add_argument("--rho", type=float, help="taylor_green density")
    synth.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise level")
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(handler=cmd_synth)

    diff = commands.add_parser("diff", help="write the token cache of a dataset")
    diff.add_argument("data", help="EPDE-GRID file to differentiate")
    diff.add_argument("--out", required=True, help="EPDE-GRID file to write")
    diff.add_argument("--window", type=int, default=constants.DIFF_WINDOW)
    diff.add_argument("--degree", type=int, default=constants.DIFF_DEGREE)
    diff.add_argument("--max-order", type=int, default=constants.DIFF_MAX_ORDER)
    diff.set_defaults(handler=cmd_diff)

    for name, handler, text in (
            ("discover", cmd_discover, "discover one system for fixed sparsity constants"),
            ("pareto", cmd_pareto, "build the quality / complexity frontier of systems"),
    ):
        sub = commands.add_parser(name, help=text)
        sub.add_argument("--config", required=True, help="INI run configuration")
        sub.add_argument("--out", help="output directory, overrides [output] dir")
        sub.add_argument("--seed", type=int, help="overrides [run] seed")
        sub.add_argument("--deterministic", action="store_true", help="evaluate sequentially")
        sub.set_defaults(handler=handler)
        if name == "discover":
            sub.add_argument("--lambdas", help="comma separated sparsity constants, one per variable")
            sub.add_argument("--dump-residuals", action="store_true", help="write residual fields as EPDE-GRID")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return constants.EXIT_OK if exc.code in (0, None) else constants.EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except USAGE_ERRORS as exc:
        print(f"pde_forge {args.command}: {exc}", file=sys.stderr)
        return constants.EXIT_USAGE
    except PDEForgeError as exc:
        print(f"pde_forge {args.command}: {exc}", file=sys.stderr)
        return constants.EXIT_RUNTIME
    except Exception as exc:
        logger.debug("unexpected failure", exc_info=True)
        print(f"pde_forge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return constants.EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
