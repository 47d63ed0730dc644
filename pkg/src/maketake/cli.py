"""Batch entry point: parse a flat key=value config, dispatch the solver /
contract / simulator workflows, and emit CSV artifacts plus a manifest that
reproduces the run bit-exactly.

Exit codes: 0 success, 1 parameter validation failure, 2 numerical guard.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .contract import (
    benchmark_policy,
    contracted_policy,
    first_best,
    indifference_y0,
    nash_policy,
    risk_neutral_policy,
    taker_fee_heuristic,
    write_policy_csv,
)
from .params import ModelParams, ValidationError, load_params, validate
from .selfcheck import run_selfcheck
from .simulator import run_experiment, trading_cost_experiment, write_experiment_csv
from .solver import (
    SolverError,
    solve_log_ratios,
    solve_matrix_exp,
    write_grid_csv,
    write_log_ratio_csv,
)

SIM_REGIMES = ("contracted", "benchmark", "risk_neutral", "nash")


@dataclass
class RunConfig:
    """Everything one run depends on; echoed verbatim into the manifest."""

    command: str
    params: ModelParams
    n_paths: int = 5000
    master_seed: int = 20080516
    output_dir: Path = Path("maketake_out")
    n_jobs: int = 1
    regime: str = "exchange"
    dt: float = 0.01
    n_list: tuple = (1, 2, 4, 8)
    reservation: float = -1.0
    target_spread: float = 1.0
    sigma_sweep: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    config_path: str | None = None
    written: list = field(default_factory=list)

    def out(self, name: str) -> Path:
        path = self.output_dir / name
        self.written.append(path)
        return path


def _write_manifest(cfg: RunConfig) -> None:
    lines = [
        f"artifact_version={__version__}",
        f"command={cfg.command}",
        f"master_seed={cfg.master_seed}",
        f"n_paths={cfg.n_paths}",
        f"n_jobs={cfg.n_jobs}",
        f"regime={cfg.regime}",
        f"dt={cfg.dt}",
        f"n_list={','.join(str(n) for n in cfg.n_list)}",
        f"reservation={cfg.reservation!r}",
        f"target_spread={cfg.target_spread!r}",
        f"sigma_sweep={','.join(repr(s) for s in cfg.sigma_sweep)}",
        f"config_file={cfg.config_path or ''}",
    ]
    p = cfg.params
    for name in ("sigma", "A", "k", "c", "gamma", "eta", "T", "q_bar",
                 "delta_inf", "tick", "n_exchanges"):
        lines.append(f"param.{name}={getattr(p, name)!r}")
    with open(cfg.out("manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _policies(vp, which=("contracted", "benchmark")):
    out = {}
    for name in which:
        if name == "contracted":
            grid = solve_matrix_exp(vp, "exchange")
            bench = solve_matrix_exp(vp, "benchmark")
            out[name] = contracted_policy(grid, vp, y0=indifference_y0(bench, vp))
        elif name == "benchmark":
            out[name] = benchmark_policy(solve_matrix_exp(vp, "benchmark"), vp)
        elif name == "risk_neutral":
            out[name] = risk_neutral_policy(vp)
        elif name == "nash":
            out[name] = nash_policy(solve_matrix_exp(vp, "nash"), vp)
        else:
            raise ValidationError([f"unknown simulation regime {name!r}"])
    return out


def _cmd_solve(cfg: RunConfig, vp) -> None:
    grid = solve_matrix_exp(vp, cfg.regime)
    write_grid_csv(grid, cfg.out(f"value_grid_{cfg.regime}.csv"))
    ratios = solve_log_ratios(vp, cfg.regime, dt=cfg.dt)
    write_log_ratio_csv(ratios, cfg.out(f"log_ratios_{cfg.regime}.csv"))


def _cmd_spreads(cfg: RunConfig, vp) -> None:
    bench_grid = solve_matrix_exp(vp, "benchmark")
    pb = benchmark_policy(bench_grid, vp)
    pc = contracted_policy(solve_matrix_exp(vp, "exchange"), vp,
                           y0=indifference_y0(bench_grid, vp))
    write_policy_csv(pc, cfg.out("policy_contracted.csv"))
    write_policy_csv(pb, cfg.out("policy_benchmark.csv"))
    qs = np.arange(-vp.q_bar, vp.q_bar + 1)
    with open(cfg.out("spreads_initial.csv"), "w") as fh:
        fh.write("q,contracted_ask,contracted_bid,contracted_total,"
                 "benchmark_ask,benchmark_bid,benchmark_total\n")
        for j, q in enumerate(qs):
            ca, cb = pc.ask_lattice[0, j], pc.bid_lattice[0, j]
            ba, bb = pb.ask_lattice[0, j], pb.bid_lattice[0, j]
            cells = [str(q)] + [
                "" if np.isnan(x) else repr(float(x))
                for x in (ca, cb, ca + cb, ba, bb, ba + bb)
            ]
            fh.write(",".join(cells) + "\n")


def _cmd_simulate(cfg: RunConfig, vp) -> None:
    if cfg.regime not in SIM_REGIMES:
        raise ValidationError(
            [f"simulate regime must be one of {SIM_REGIMES}, got {cfg.regime!r}"]
        )
    policies = _policies(vp, (cfg.regime,))
    stats = run_experiment(policies, vp, cfg.n_paths, cfg.master_seed, n_jobs=cfg.n_jobs)
    write_experiment_csv(stats, cfg.regime, cfg.out(f"simulate_{cfg.regime}.csv"))


def _cmd_compare(cfg: RunConfig, vp) -> None:
    policies = _policies(vp, ("contracted", "benchmark"))
    stats = run_experiment(policies, vp, cfg.n_paths, cfg.master_seed, n_jobs=cfg.n_jobs)
    for label in policies:
        write_experiment_csv(stats, label, cfg.out(f"compare_{label}.csv"))

    # initial spread difference against volatility
    with open(cfg.out("spread_vs_sigma.csv"), "w") as fh:
        fh.write("sigma,contracted_total,benchmark_total,difference\n")
        for sg in cfg.sigma_sweep:
            vps = validate(replace(cfg.params, sigma=sg, delta_inf=None))
            gb = solve_matrix_exp(vps, "benchmark")
            pcs = contracted_policy(solve_matrix_exp(vps, "exchange"), vps)
            pbs = benchmark_policy(gb, vps)
            mid = vps.q_bar
            ct = float(pcs.ask_lattice[0, mid] + pcs.bid_lattice[0, mid])
            bt = float(pbs.ask_lattice[0, mid] + pbs.bid_lattice[0, mid])
            fh.write(f"{sg!r},{ct!r},{bt!r},{bt - ct!r}\n")

    res = trading_cost_experiment(
        vp, n_paths=cfg.n_paths, master_seed=cfg.master_seed, n_jobs=cfg.n_jobs
    )
    for label in ("contracted", "benchmark"):
        write_experiment_csv(res.stats, label, cfg.out(f"tradingcost_{label}.csv"))
    with open(cfg.out("tradingcost_summary.txt"), "w") as fh:
        fh.write(
            f"calibrated_A={res.calibrated_A!r}\ntarget_flow={res.target_flow!r}\n"
            f"iterations={res.iterations}\n"
        )


def _cmd_nash(cfg: RunConfig, vp) -> None:
    rows = []
    for n in cfg.n_list:
        vpn = validate(replace(cfg.params, n_exchanges=int(n), delta_inf=None))
        pol = nash_policy(solve_matrix_exp(vpn, "nash"), vpn)
        write_policy_csv(pol, cfg.out(f"nash_policy_N{n}.csv"))
        mid = vpn.q_bar
        total0 = float(pol.ask_lattice[0, mid] + pol.bid_lattice[0, mid])
        skew = float(pol.ask_lattice[0, mid + min(20, vpn.q_bar)] - pol.ask_lattice[0, mid])
        rows.append((int(n), total0, skew, float(pol.zs_coef)))
    with open(cfg.out("nash_summary.csv"), "w") as fh:
        fh.write("n_exchanges,total_spread_q0,ask_skew_q20,aggregate_zs_coef\n")
        for row in rows:
            fh.write(",".join(repr(x) for x in row) + "\n")


def _cmd_firstbest(cfg: RunConfig, vp) -> None:
    sol = first_best(vp, R=cfg.reservation)
    write_grid_csv(sol.grid, cfg.out("firstbest_grid.csv"))
    write_policy_csv(sol.policy, cfg.out("firstbest_policy.csv"))
    with open(cfg.out("firstbest_summary.csv"), "w") as fh:
        fh.write("gamma_fb,log_neg_v0,log_lambda_star,reservation\n")
        fh.write(
            f"{sol.gamma_fb!r},{sol.log_neg_v0!r},{sol.log_lambda_star!r},"
            f"{cfg.reservation!r}\n"
        )


def _cmd_fees(cfg: RunConfig, vp) -> int:
    fee = taker_fee_heuristic(vp, cfg.target_spread)
    print(f"suggested taker fee (approximation): {fee.approx}")
    print(f"suggested taker fee (exact form):    {fee.exact}")
    return 0


def _cmd_selfcheck(cfg: RunConfig, vp) -> int:
    results = run_selfcheck(cfg.params, seed=cfg.master_seed)
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed} check(s) failed")
        return 2
    print(f"all {len(results)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maketake",
        description="Make-take fee contract solver and market simulator",
    )
    parser.add_argument("command", choices=(
        "solve", "spreads", "simulate", "compare", "nash", "firstbest", "fees", "selfcheck"
    ))
    parser.add_argument("--config", help="flat key=value parameter file")
    parser.add_argument("--paths", type=int, default=5000, help="simulated paths per regime")
    parser.add_argument("--seed", type=int, default=20080516, help="master seed")
    parser.add_argument("--out", default="maketake_out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for paths")
    parser.add_argument("--regime", default="exchange",
                        help="solve: exchange|benchmark|nash|first_best; "
                             "simulate: contracted|benchmark|risk_neutral|nash")
    parser.add_argument("--dt", type=float, default=0.01, help="log-ratio time step")
    parser.add_argument("--n-list", default="1,2,4,8", help="exchange counts for nash")
    parser.add_argument("--reservation", type=float, default=-1.0,
                        help="reservation utility for firstbest (< 0)")
    parser.add_argument("--target-spread", type=float, default=1.0,
                        help="total spread target for fees")
    return parser


def run(cfg: RunConfig) -> int:
    """Execute one command; artifacts are removed again if a stage fails."""
    try:
        vp = validate(cfg.params)
        if cfg.command == "fees":
            return _cmd_fees(cfg, vp)
        if cfg.command == "selfcheck":
            return _cmd_selfcheck(cfg, vp)

        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        _write_manifest(cfg)
        dispatch = {
            "solve": _cmd_solve,
            "spreads": _cmd_spreads,
            "simulate": _cmd_simulate,
            "compare": _cmd_compare,
            "nash": _cmd_nash,
            "firstbest": _cmd_firstbest,
        }
        dispatch[cfg.command](cfg, vp)
        return 0
    except (ValidationError, OSError) as exc:
        _cleanup(cfg)
        print(f"parameter validation failed [{cfg.command}]: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        _cleanup(cfg)
        print(f"numerical guard tripped [{cfg.command}]: {exc}", file=sys.stderr)
        return 2


def _cleanup(cfg: RunConfig) -> None:
    for path in cfg.written:
        try:
            path.unlink(missing_ok=True)
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        params = load_params(args.config) if args.config else ModelParams()
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        n_list = tuple(int(x) for x in args.n_list.split(",") if x.strip())
    except ValueError:
        print(f"cannot parse --n-list {args.n_list!r}", file=sys.stderr)
        return 1
    cfg = RunConfig(
        command=args.command,
        params=params,
        n_paths=args.paths,
        master_seed=args.seed,
        output_dir=Path(args.out),
        n_jobs=args.jobs,
        regime=args.regime,
        dt=args.dt,
        n_list=n_list,
        reservation=args.reservation,
        target_spread=args.target_spread,
        config_path=args.config,
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
