"""
Command-line front end.

    python -m app.cli psi --measure kingman --q 2
    python -m app.cli simulate --measure beta:1.5 --n 100 --gamma 1 --seed 7 --export g.json
    python -m app.cli families --import g.json
    python -m app.cli ewens --n 5 --gamma 0.5
    python -m app.cli experiment --experiment-file spec.json --theorem T3_family_counts

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 unsupported measure.
Errors are reported as one JSON line on stderr.
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from typing import Dict, List, Optional

from pydantic import ValidationError

from .core import config
from .core.errors import CoalescentError, ConfigError
from .crud import crud
from .database.database import session_for
from .schemas.schemas import CliConfig, MeasureDescription
from .services import experiments, export
from .services.ewens import ewens_distribution, total_variation
from .services.genealogy import export_genealogy, import_genealogy
from .services.measures import (
    PsiEvaluator,
    complete_monotonicity_check,
    regularity_integral,
    validate_measure,
)
from .services.simulator import parse_stop, simulate
from .services.speed import SpeedSolver, comes_down_check, one_star
from .services.statistics import allele_types, decompose, trajectories

logger = logging.getLogger(__name__)

MEASURE_ALIASES = {"bs": "bolthausen_sznitman", "bolthausen-sznitman": "bolthausen_sznitman"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with CliConfig keys; flags override it")
    common.add_argument("--measure", help="kingman | bs | beta:ALPHA | inline JSON measure description")
    common.add_argument("--measure-file", dest="measure_file")
    common.add_argument("--n", type=int, nargs="+")
    common.add_argument("--gamma", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--replicates", type=int)
    common.add_argument("--stop", help="tau | tau-star | time=T | blocks=B")
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "structured-text"))
    common.add_argument("--log-level", dest="log_level")

    parser = _Parser(prog="coalescent", description="Xi / Lambda coalescent genealogies with mutations")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("psi", parents=[common], help="psi / psi-bar table")
    p.add_argument("--q", type=float, nargs="+")
    p.add_argument("--variant", choices=("standard", "bar"))

    p = sub.add_parser("speed", parents=[common], help="v^n(t), ell(n), ell_t(n)")
    p.add_argument("--t", type=float, nargs="+")

    p = sub.add_parser("simulate", parents=[common], help="one marked genealogy")
    p.add_argument("--export")

    p = sub.add_parser("families", parents=[common], help="sites / alleles families and spectra")
    p.add_argument("--import", dest="import_path")
    p.add_argument("--partition", action="store_true", default=None)

    sub.add_parser("ewens", parents=[common], help="exact Ewens sampling formula")

    p = sub.add_parser("experiment", parents=[common], help="Monte Carlo experiments and theorem checks")
    p.add_argument("--experiment-file", dest="experiment_file")
    p.add_argument("--statistic")
    p.add_argument("--theorem", choices=experiments.THEOREMS)
    p.add_argument("--martingale-t", dest="martingale_t", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--db")
    p.add_argument("--r-max", dest="r_max", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--t-grid", dest="t_grid", type=float, nargs="+")

    sub.add_parser("check", parents=[common], help="validate a measure and classify it")
    return parser


def _validation_message(e: ValidationError) -> str:
    err = e.errors()[0]
    loc = ".".join(str(p) for p in err.get("loc", ()))
    if err.get("type") == "extra_forbidden":
        return f"unknown key '{loc}'"
    return f"{loc}: {err.get('msg')}"


def resolve_config(args: argparse.Namespace) -> CliConfig:
    merged: Dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                merged = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(merged, dict):
            raise ConfigError("config file must hold a JSON object")
    for key in CliConfig.model_fields:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    try:
        return CliConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(_validation_message(e)) from e


def parse_measure_text(text: str) -> Dict:
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad inline measure: {e}") from e
    name, sep, value = text.replace("=", ":").partition(":")
    name = MEASURE_ALIASES.get(name.lower(), name.lower())
    if name == "beta":
        if not sep:
            raise ConfigError("beta measure needs an alpha, e.g. beta:1.5")
        try:
            return {"family": "beta", "alpha": float(value)}
        except ValueError as e:
            raise ConfigError(f"bad beta alpha '{value}'") from e
    if sep:
        raise ConfigError(f"measure '{name}' takes no parameter")
    return {"family": name}


def load_measure(cfg: CliConfig):
    if cfg.measure_file:
        try:
            with open(cfg.measure_file, encoding="utf-8") as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read measure file {cfg.measure_file}: {e}") from e
    elif isinstance(cfg.measure, MeasureDescription):
        raw = cfg.measure
    elif cfg.measure:
        raw = parse_measure_text(cfg.measure)
    else:
        raise ConfigError("missing required field 'measure'")
    return validate_measure(raw)


def _require(value, name: str):
    if value is None:
        raise ConfigError(f"missing required field '{name}'")
    return value


def _single_n(cfg: CliConfig) -> int:
    ns = _require(cfg.n, "n")
    if len(ns) != 1:
        raise ConfigError(f"this subcommand takes a single --n, got {ns}")
    return ns[0]


def _configuration_label(a) -> str:
    return "(" + ", ".join(str(x) for x in a) + ")"


# ---------------------------------------------------------------------------
# subcommands: each returns {table name: rows}
# ---------------------------------------------------------------------------

def cmd_psi(cfg: CliConfig):
    ev = PsiEvaluator(load_measure(cfg))
    qs = _require(cfg.q, "q")
    return {"psi": [{"q": q, "psi": ev(q, cfg.variant)} for q in qs]}


def cmd_speed(cfg: CliConfig):
    psi = PsiEvaluator(load_measure(cfg))
    curve, lengths = [], []
    for n in _require(cfg.n, "n"):
        solver = SpeedSolver(psi, n)
        lengths.append({"n": n, "ell": solver.ell(), "horizon": solver.horizon()})
        for t in cfg.t or []:
            curve.append({"n": n, "t": t, "v": solver.v_of_t(t), "ell_t": solver.ell(t)})
    tables = {"length": lengths}
    if curve:
        tables["speed"] = curve
    return tables


def _simulate_from(cfg: CliConfig):
    m = load_measure(cfg)
    return simulate(m, _single_n(cfg), cfg.gamma or 0.0, cfg.seed or 0, parse_stop(cfg.stop))


def cmd_simulate(cfg: CliConfig):
    g = _simulate_from(cfg)
    if cfg.export:
        with open(cfg.export, "w", encoding="utf-8") as f:
            f.write(export_genealogy(g))
        logger.info(f"genealogy exported to {cfg.export}")
    traj = trajectories(g)
    summary = [{
        "n": g.n,
        "seed": g.seed,
        "tau": g.tau,
        "tau_star": g.tau_star,
        "end_time": g.end_time,
        "events": len(g.events),
        "mutations": traj.at("M", g.end_time),
        "open_mutations": traj.at("M_open", g.end_time),
        "tree_length": traj.L(g.end_time),
    }]
    return {"genealogy": summary, "trajectory": traj.rows()}


def cmd_families(cfg: CliConfig):
    if cfg.import_path:
        try:
            with open(cfg.import_path, encoding="utf-8") as f:
                g = import_genealogy(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read genealogy {cfg.import_path}: {e}") from e
    else:
        g = _simulate_from(cfg)
    fam = decompose(g)
    sites = [
        {"mutation_id": f.mutation_id, "size": f.size, "open": f.open, "leaves": " ".join(map(str, f.leaves))}
        for f in fam.sites_families
    ]
    sizes = sorted(set(fam.spectrum_sites) | set(fam.spectrum_alleles))
    spectrum = [
        {"r": r, "sites_count": fam.spectrum_sites.get(r, 0), "alleles_count": fam.spectrum_alleles.get(r, 0)}
        for r in sizes
    ]
    tables = {"sites": sites, "spectrum": spectrum}
    if cfg.partition:
        types = allele_types(g)
        block_of = {}
        for block_id, block in enumerate(fam.alleles_partition, start=1):
            for leaf in block:
                block_of[leaf] = block_id
        tables["partition"] = [{"leaf": leaf, "block": block_of[leaf], "type": types[leaf]} for leaf in range(1, g.n + 1)]
    return tables


def cmd_ewens(cfg: CliConfig):
    dist = ewens_distribution(_single_n(cfg), _require(cfg.gamma, "gamma"))
    return {
        "pmf": [{"configuration": _configuration_label(c.a), "probability": float(p)}
                for c, p in zip(dist.configurations, dist.probabilities)],
        "k_marginal": [{"k": k, "probability": p} for k, p in dist.k_marginal.items()],
    }


def _experiment_spec(cfg: CliConfig) -> experiments.ExperimentSpec:
    if cfg.experiment_file:
        try:
            with open(cfg.experiment_file, encoding="utf-8") as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read experiment file {cfg.experiment_file}: {e}") from e
        return experiments.ExperimentSpec.from_document(raw)
    spec = experiments.ExperimentSpec(
        measure=load_measure(cfg),
        n_grid=tuple(_require(cfg.n, "n")),
        gamma=_require(cfg.gamma, "gamma"),
        replicates=_require(cfg.replicates, "replicates"),
        master_seed=cfg.seed or 0,
        statistic=cfg.statistic or "mutations",
        stop=parse_stop(cfg.stop),
        r_max=cfg.r_max or 2,
        beta=cfg.beta,
        t_grid=tuple(cfg.t_grid) if cfg.t_grid else experiments.ExperimentSpec.t_grid,
    )
    return spec.validate()


def cmd_experiment(cfg: CliConfig):
    spec = _experiment_spec(cfg)
    if cfg.martingale_t is not None:
        res = experiments.martingale_diagnostic(
            spec.measure, spec.n_grid[0], cfg.martingale_t, spec.replicates, spec.master_seed, workers=cfg.workers
        )
        return {"martingale": [{"n": spec.n_grid[0], "t": cfg.martingale_t, "form": res.form, "mean": res.mean,
                                "stderr": res.stderr, "replicates": res.replicates}]}
    if cfg.theorem:
        verdict = experiments.theorem_check(spec, cfg.theorem, workers=cfg.workers)
        report = [{"check": c.name, "value": c.value, "bound": c.bound, "passed": c.passed} for c in verdict.checks]
        report.append({"check": f"{verdict.which} overall", "value": None, "bound": None, "passed": verdict.passed})
        return {"verdict": report, "estimates": [_flatten(row) for row in verdict.estimates]}

    result = experiments.run_experiment(spec, workers=cfg.workers)
    tables = {
        "summary": [asdict(row) for row in result.summary()],
        "replicates": result.replicate_rows(),
    }
    if spec.statistic == "allele_partition_histogram" and spec.measure.family == "kingman":
        tables["ewens_tv"] = [
            {"n": n, "tv": total_variation(result.histogram(n), ewens_distribution(n, spec.gamma))}
            for n in spec.n_grid if n <= 30
        ]
    if cfg.db:
        db = session_for(cfg.db)
        try:
            run = crud.save_experiment(db, spec, result)
            logger.info(f"experiment stored as run {run.id}")
        finally:
            db.close()
    return tables


def _flatten(row: Dict, prefix: str = "") -> Dict:
    out = {}
    for key, value in row.items():
        if isinstance(value, dict):
            out.update(_flatten(value, f"{prefix}{key} "))
        else:
            out[f"{prefix}{key}"] = value
    return out


def cmd_check(cfg: CliConfig):
    m = load_measure(cfg)
    reg = regularity_integral(m)
    cdi = comes_down_check(m)
    rows = [
        {"property": "family", "value": m.family},
        {"property": "kingman_mass", "value": m.kingman_mass},
        {"property": "regularity_integral", "value": "inf" if reg.infinite else reg.value},
        {"property": "cdi", "value": cdi.cdi},
        {"property": "cdi_basis", "value": cdi.basis},
    ]
    if cdi.asymptotic_exponent is not None:
        rows.append({"property": "psi_tail_exponent", "value": cdi.asymptotic_exponent})
    psi = PsiEvaluator(m)
    if cdi.cdi == "yes":
        rows.append({"property": "one_star", "value": one_star(psi)})
    for k, ok in complete_monotonicity_check(psi).items():
        rows.append({"property": f"psi_prime_bernstein_order_{k}", "value": ok})
    return {"check": rows}


COMMANDS = {
    "psi": cmd_psi,
    "speed": cmd_speed,
    "simulate": cmd_simulate,
    "families": cmd_families,
    "ewens": cmd_ewens,
    "experiment": cmd_experiment,
    "check": cmd_check,
}


def run_cli(argv: Optional[List[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        config.setup_logging(args.log_level, stderr)
        cfg = resolve_config(args)
        tables = COMMANDS[args.subcommand](cfg)
        resolved = {"subcommand": args.subcommand, **cfg.model_dump(exclude_none=True, mode="json")}
        export.write_output(export.render(tables, resolved, cfg.format), cfg.out, stdout)
        return 0
    except CoalescentError as e:
        logger.error(f"{type(e).__name__}: {e}")
        stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return e.exit_code


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
