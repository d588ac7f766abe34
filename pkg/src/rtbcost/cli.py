"""Command-line entry point: ``rtbcost <command>``.

Exit codes: 0 success, 1 data error, 2 configuration or usage error.
Flags override config-file values, which override built-in defaults.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

import click

from . import __version__
from .config import Config, ConfigError, load_config
from .costs import ModelRequired, OutOfWindow, TimeShiftCoefficient, UserCostReport, Window, cohort_stats
from .costs import extrapolate_arpu, write_cohort_csvs
from .ingest import IngestStats, MalformedRecord, iter_records, parse_timestamp, read_log
from .model.binning import DegenerateDistribution, InsufficientSamples, NonPositivePrice
from .model.evaluation import InsufficientClassSupport, evaluate
from .model.forest import ForestParams, SingleClassData
from .model.io import CorruptModel, VersionMismatch, export_model, import_model
from .model.train import train_price_model
from .nurl import RuleError

log = logging.getLogger("rtbcost")

DATA_ERRORS = (OSError, MalformedRecord, ModelRequired, OutOfWindow, CorruptModel, VersionMismatch,
               DegenerateDistribution, InsufficientSamples, NonPositivePrice, SingleClassData,
               InsufficientClassSupport, json.JSONDecodeError, KeyError)


class DataError(click.ClickException):
    exit_code = 1


class ConfigProblem(click.ClickException):
    exit_code = 2


def _run(fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except (ConfigError, RuleError) as e:
        raise ConfigProblem(str(e)) from None
    except DATA_ERRORS as e:
        raise DataError(f"{type(e).__name__}: {e}") from None
    except ValueError as e:
        raise DataError(f"{type(e).__name__}: {e}") from None


def _config(ctx: click.Context) -> Config:
    return ctx.obj["config"]


def _write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _forest(cfg: Config, n_trees, max_depth, min_leaf, features_per_split) -> ForestParams:
    f = cfg.forest
    return ForestParams(
        n_trees=n_trees if n_trees is not None else f.n_trees,
        max_depth=max_depth if max_depth is not None else f.max_depth,
        min_leaf=min_leaf if min_leaf is not None else f.min_leaf,
        features_per_split=features_per_split if features_per_split is not None else f.features_per_split,
    )


def forest_options(fn):
    for opt in reversed([
        click.option("--n-trees", type=int, help="Trees in the forest (config: forest.n_trees, default 100)."),
        click.option("--max-depth", type=int, help="Maximum tree depth (config: forest.max_depth, default unbounded)."),
        click.option("--min-leaf", type=int, help="Minimum samples per leaf (config: forest.min_leaf, default 5)."),
        click.option("--features-per-split", type=int,
                     help="Features tried per split (config: forest.features_per_split, default sqrt of encoded dims)."),
    ]):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """Estimate what advertisers pay for a user's RTB ad impressions."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = load_config(config_path)
    except ConfigError as e:
        raise ConfigProblem(str(e)) from None


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=int, help="Simulation seed (config: simulation.seed, default 7).")
@click.option("--users", "n_users", type=int, help="Number of simulated users (default 300).")
@click.option("--days", type=int, help="Simulated days (default 7).")
@click.option("--ads-per-day", type=float, help="Mean impressions per user per day (default 10).")
@click.option("--sigma", type=float, help="Lognormal noise of the price law (default 0.3).")
@click.option("--cleartext-only", is_flag=True, default=None, help="Make every ADX notify in cleartext.")
@click.option("--zero-noise", is_flag=True, default=None,
              help="Noise-free law over interaction and OS only (four price levels).")
@click.pass_context
def simulate(ctx, out, **flags):
    """Run the synthetic marketplace and write weblog, sealed ledger and reference tables."""
    from .sim import SimConfig, simulate as run_sim, write_outputs

    def go():
        settings = dict(_config(ctx).simulation)
        settings.update({k: v for k, v in flags.items() if v is not None})
        cfg = SimConfig().with_overrides(**settings)
        result = run_sim(cfg)
        paths = write_outputs(result, out)
        paths["config"] = Path(out) / "analysis_config.json"
        _write_json(paths["config"], {"paths": {"blacklist": "blacklist.csv", "geo": "geo.csv",
                                                "iab_map": "iab_map.csv"}})
        click.echo(json.dumps({"records": len(result.records), "impressions": len(result.impressions),
                               "encrypted": len(result.ledger.entries),
                               "files": {k: str(v) for k, v in paths.items()}}, sort_keys=True))
    _run(go)


def _window(cfg: Config, start, end) -> Window:
    w = cfg.window or Window.unbounded()
    return Window(parse_timestamp(start) if start is not None else w.start,
                  parse_timestamp(end) if end is not None else w.end)


@main.command()
@click.option("--input", "inputs", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Weblog file(s): .jsonl, .csv, optionally .gz. Repeatable.")
@click.option("--stdin", "use_stdin", is_flag=True, help="Read JSONL records from stdin in arrival order.")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), help="Model file (config: paths.model).")
@click.option("--blacklist", type=click.Path(exists=True, dir_okay=False),
              help="Domain blacklist CSV (config: paths.blacklist).")
@click.option("--geo", type=click.Path(exists=True, dir_okay=False), help="CIDR to city CSV (config: paths.geo).")
@click.option("--iab-map", type=click.Path(exists=True, dir_okay=False),
              help="Domain to IAB category CSV (config: paths.iab_map).")
@click.option("--rules", type=click.Path(exists=True, dir_okay=False),
              help="nURL macro rules JSON (config: paths.macro_rules, default bundled).")
@click.option("--ledger-oracle", type=click.Path(exists=True, dir_okay=False),
              help="Testing only: price encrypted notifications from a simulator sealed ledger.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--window-start", help="Window start, epoch ms or RFC 3339 (config: window.start).")
@click.option("--window-end", help="Window end, inclusive (config: window.end).")
@click.option("--time-shift", type=float, help="Cleartext time-shift ratio (config: time_shift.ratio).")
@click.option("--time-shift-encrypted", is_flag=True, default=None,
              help="Also scale encrypted estimates (config: time_shift.include_encrypted).")
@click.option("--tally-every", type=int, default=0, show_default=True,
              help="With --stdin, print running totals to stderr every N notifications.")
@click.pass_context
def analyze(ctx, inputs, use_stdin, model, blacklist, geo, iab_map, rules, ledger_oracle, out, window_start, window_end, time_shift,
            time_shift_encrypted, tally_every):
    """Ingest weblogs, detect price notifications, estimate and aggregate per-user costs."""
    from .pipeline import Analyzer, analyze_records, shift_ledgers, write_reports

    cfg = _config(ctx)
    if not inputs and not use_stdin:
        raise ConfigProblem("give --input or --stdin")
    overrides = {"blacklist": blacklist, "geo": geo, "iab_map": iab_map, "macro_rules": rules}
    cfg = replace(cfg, paths=replace(cfg.paths, **{k: Path(v) for k, v in overrides.items() if v}))

    def go():
        refs, rule_set = cfg.references(), cfg.rules()
        estimator = None
        if ledger_oracle:
            from .sim import LedgerOracle, SealedLedger
            estimator = LedgerOracle(SealedLedger.load(ledger_oracle))
        elif model or cfg.paths.model:
            estimator = import_model(model or cfg.paths.model)
        window = _window(cfg, window_start, window_end)
        stats = IngestStats()
        if use_stdin:
            an = Analyzer(refs, rule_set, estimator, window)
            for rec in iter_records(sys.stdin, "json_lines", stats):
                if an.observe(rec) and tally_every and an.notifications % tally_every == 0:
                    reps = an.reports()
                    click.echo(f"notifications={an.notifications} users={len(reps)} "
                               f"V_total_micros={sum(r.v_micros for r in reps)}", err=True)
        else:
            recs = [r for path in inputs for r in read_log(path, stats)]
            log.info("read %d records from %d file(s)", len(recs), len(inputs))
            an = analyze_records(recs, refs, rule_set, estimator, window)
        coeff = TimeShiftCoefficient(time_shift) if time_shift is not None else cfg.time_shift
        include_enc = time_shift_encrypted if time_shift_encrypted is not None else cfg.time_shift_encrypted
        ledgers = shift_ledgers(an.ledgers(), coeff, include_enc)
        reps, summary = write_reports(ledgers, out)
        meta = {"lines": stats.lines, "parsed": stats.parsed, "malformed": stats.malformed,
                "notifications": an.notifications, "duplicates": an.duplicates, "users": len(reps)}
        _write_json(Path(out) / "analysis_meta.json", meta)
        click.echo(json.dumps(meta, sort_keys=True))
    _run(go)


def _training_rows(paths: tuple[str, ...]):
    from .pipeline import contribution_rows

    rows = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            rows.extend(contribution_rows(fh))
    if not rows:
        raise ValueError("no cleartext training rows in input")
    return rows


@main.command()
@click.option("--input", "inputs", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Contribution JSONL (features + cleartext price). Default: paths.contributions.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory (writes model.json).")
@click.option("--k", type=int, help="Number of price classes (config: binning.k, default 4).")
@click.option("--seed", type=int, help="Training seed (config: seed, default 0).")
@forest_options
@click.pass_context
def train(ctx, inputs, out, k, seed, n_trees, max_depth, min_leaf, features_per_split):
    """Fit price classes and the random forest; export the model file."""
    cfg = _config(ctx)

    def go():
        paths = inputs or ((str(cfg.paths.contributions),) if cfg.paths.contributions else ())
        if not paths:
            raise ConfigProblem("give --input or set paths.contributions")
        rows = _training_rows(paths)
        log.info("training on %d cleartext rows", len(rows))
        params = _forest(cfg, n_trees, max_depth, min_leaf, features_per_split)
        pm = train_price_model(rows, k=k or cfg.binning_k, params=params,
                               seed=seed if seed is not None else cfg.seed)
        dest = Path(out) / "model.json"
        dest.parent.mkdir(parents=True, exist_ok=True)
        export_model(pm, path=dest)
        click.echo(json.dumps({"model": str(dest), "samples": len(rows), "binning": pm.binning.to_dict(),
                               "oob_error": pm.forest.oob_error}, sort_keys=True))
    _run(go)


@main.command("evaluate")
@click.option("--input", "inputs", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Contribution JSONL. Default: paths.contributions.")
@click.option("--out", type=click.Path(file_okay=False), help="Also write evaluation.json here.")
@click.option("--folds", type=int, help="Cross-validation folds (config: evaluation.folds, default 10).")
@click.option("--runs", type=int, help="Repetitions (config: evaluation.runs, default 10).")
@click.option("--k", type=int, help="Number of price classes (config: binning.k, default 4).")
@click.option("--seed", type=int, help="Seed (config: evaluation.seed, default 0).")
@click.option("--permute-labels", is_flag=True, help="Shuffle labels first (chance baseline).")
@forest_options
@click.pass_context
def evaluate_cmd(ctx, inputs, out, folds, runs, k, seed, permute_labels, n_trees, max_depth, min_leaf,
                 features_per_split):
    """Repeated stratified cross-validation; prints metrics JSON."""
    import numpy as np

    from .model.binning import fit_binning, log_normalize

    cfg = _config(ctx)

    def go():
        paths = inputs or ((str(cfg.paths.contributions),) if cfg.paths.contributions else ())
        if not paths:
            raise ConfigProblem("give --input or set paths.contributions")
        rows = _training_rows(paths)
        prices = [float(p) for _, p in rows]
        binning = fit_binning(log_normalize(prices), k=k or cfg.binning_k)
        labels = binning.classes_of(prices)
        ev_seed = seed if seed is not None else cfg.evaluation.seed
        if permute_labels:
            labels = np.random.default_rng(ev_seed).permutation(labels)
        m = evaluate([(f, int(c)) for (f, _), c in zip(rows, labels)],
                     _forest(cfg, n_trees, max_depth, min_leaf, features_per_split),
                     folds=folds or cfg.evaluation.folds, runs=runs or cfg.evaluation.runs, seed=ev_seed)
        d = m.to_dict() | {"binning": binning.to_dict()}
        if out:
            _write_json(Path(out) / "evaluation.json", d)
        click.echo(json.dumps(d, sort_keys=True))
    _run(go)


@main.command()
@click.option("--out", type=click.Path(file_okay=False), help="Also write plan.json here.")
@click.option("--paper-144", "paper_144", is_flag=True,
              help="Cross city, interaction, time of day, day of week and ad format (144 setups).")
@click.option("--strategy", type=click.Choice(["full_cross", "paper_144"]),
              help="Enumeration strategy (config: campaign.strategy).")
@click.option("--std", type=float, help="Price standard deviation in CPM (config: campaign.std).")
@click.option("--alpha", type=float, help="Significance level (config: campaign.alpha, default 0.05).")
@click.option("--margin", "d", type=float, help="Target margin of error in CPM (config: campaign.d).")
@click.option("--impressions", type=int, help="Impressions per setup (default: required sample size).")
@click.option("--max-bid", "max_bid_cpm", type=float, help="Maximum bid CPM (config: campaign.max_bid_cpm).")
@click.pass_context
def plan(ctx, out, paper_144, strategy, std, alpha, d, impressions, max_bid_cpm):
    """Enumerate probing-campaign setups with sample size and budget."""
    from .planner import DEFAULT_DIMENSIONS, build_plan, dimensions_from_config

    c = _config(ctx).campaign

    def go():
        dims = dimensions_from_config(c.dimensions) if c.dimensions else list(DEFAULT_DIMENSIONS)
        strat = "paper_144" if paper_144 else (strategy or c.strategy)
        p = build_plan(dims, strat, std if std is not None else c.std, alpha if alpha is not None else c.alpha,
                       d if d is not None else c.d, impressions if impressions is not None else c.impressions,
                       max_bid_cpm if max_bid_cpm is not None else c.max_bid_cpm)
        if out:
            _write_json(Path(out) / "plan.json", p)
        click.echo(json.dumps(p, sort_keys=True))
    _run(go)


@main.command()
@click.option("--reports", "reports_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="user_reports.jsonl produced by analyze.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--annualize", type=float, default=1.0, show_default=True,
              help="Multiplier turning the window's CPM totals into yearly totals.")
@click.pass_context
def report(ctx, reports_path, out, annualize):
    """Cohort percentiles, CDF points and ARPU extrapolation from per-user reports."""
    cfg = _config(ctx)

    def go():
        with open(reports_path, encoding="utf-8") as fh:
            reps = [UserCostReport.from_dict(json.loads(line)) for line in fh if line.strip()]
        summary = cohort_stats(reps)
        write_cohort_csvs(summary, out)
        pct = summary.percentiles.get("V_u", {})
        arpu = {k: extrapolate_arpu(v * annualize, cfg.arpu) for k, v in pct.items()}
        res = {"users": summary.users, "V_u_percentiles": pct, "arpu_usd": arpu,
               "arpu_factor_product": cfg.arpu.product}
        _write_json(Path(out) / "arpu.json", res)
        click.echo(json.dumps(res, sort_keys=True))
    _run(go)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Model file to publish.")
@click.option("--registry", type=click.Path(file_okay=False), help="Registry directory (config: paths.registry).")
@click.pass_context
def publish(ctx, model_path, registry):
    """Validate a model file and publish it as the next registry version."""
    from .service import ModelRegistry

    cfg = _config(ctx)

    def go():
        reg_dir = registry or cfg.paths.registry
        if reg_dir is None:
            raise ConfigProblem("give --registry or set paths.registry")
        data = Path(model_path).read_bytes()
        pm = import_model(data)
        entry = ModelRegistry(reg_dir).publish(data, {"seed": pm.forest.seed, **pm.forest.meta})
        click.echo(json.dumps(entry, sort_keys=True))
    _run(go)


@main.command()
@click.option("--host", help="Listen address (config: service.host, default 127.0.0.1).")
@click.option("--port", type=int, help="Listen port (config: service.port, default 8080).")
@click.option("--registry", type=click.Path(file_okay=False), help="Registry directory (config: paths.registry).")
@click.option("--store", type=click.Path(dir_okay=False),
              help="Contribution store JSONL (config: paths.contributions).")
@click.pass_context
def serve(ctx, host, port, registry, store):
    """Serve published models and accept contributions over HTTP."""
    import uvicorn

    from .service import ContributionStore, ModelRegistry, create_app

    cfg = _config(ctx)
    reg_dir = registry or cfg.paths.registry
    store_path = store or cfg.paths.contributions
    if reg_dir is None or store_path is None:
        raise ConfigProblem("a registry directory and contribution store path are required")
    app = create_app(ModelRegistry(reg_dir), ContributionStore(store_path))
    uvicorn.run(app, host=host or cfg.service.host, port=port or cfg.service.port)


if __name__ == "__main__":
    main()
