"""Command line entry point.

Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 numerical
error, 4 threshold-structure violation.

CSV output uses RFC-4180 quoting, ``\\n`` line endings and 12 significant
digits for real numbers (``format(x, ".12g")``); missing thresholds are
written as ``none``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from encsched.config import load_config
from encsched.errors import ConfigError, NumericalError, StructureViolation
from encsched.evaluation import (
    Strategy,
    compare_strategies,
    evaluate_policy_exact,
    simulate,
    solve_strategies,
)
from encsched.mdp_full_info import backward_induction, certify_thresholds
from encsched.pomdp_belief import certify_belief_thresholds, enumerate_belief_tree, pomdp_backward_induction

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_STRUCTURE = 4

STRATEGY_NAMES = ("never", "always", "optimal-known", "optimal-unknown")


def fmt(x) -> str:
    if x is None:
        return "none"
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as f:
        f.write(csv_text(header, rows))


def read_csv(path):
    """Inverse of :func:`write_csv`: header plus rows of strings."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def _path_str(path):
    return "".join(str(a) for a in path) or "-"


# --- solve -------------------------------------------------------------------


def _solve_known(p, ladder, out: Path):
    vt, pol = backward_induction(p, ladder)
    D = ladder.depth
    header = ["n"] + [f"ne_{j}" for j in range(D + 1)]
    for k in range(1, p.horizon + 1):
        write_csv(out / f"value_k{k}.csv", header, ([n, *vt.at(k)[n]] for n in range(D + 1)))
        write_csv(out / f"policy_k{k}.csv", header, ([n, *pol.at(k)[n]] for n in range(D + 1)))
    m, m_e = certify_thresholds(pol)
    write_csv(out / "thresholds.csv", ["k", "n_e", "m"], ([k, j, v] for (k, j), v in sorted(m.items())))
    write_csv(out / "thresholds_me.csv", ["k", "n", "m_e"], ([k, j, v] for (k, j), v in sorted(m_e.items())))


def _solve_unknown(p, ladder, out: Path):
    D = ladder.depth
    tree = enumerate_belief_tree(p.ch, p.horizon, D)
    values, pol = pomdp_backward_induction(p, ladder, tree)
    header = ["node", "path"] + [f"n_{j}" for j in range(D + 1)]
    for k in range(1, p.horizon + 1):
        nodes = tree.nodes_at(k - 1)
        write_csv(out / f"value_k{k}.csv", header,
                  ([node, _path_str(tree.path(node)), *values[k - 1][i]] for i, node in enumerate(nodes)))
        write_csv(out / f"policy_k{k}.csv", header,
                  ([node, _path_str(tree.path(node)), *pol.at(k)[i]] for i, node in enumerate(nodes)))
    m = certify_belief_thresholds(pol)
    write_csv(out / "thresholds.csv", ["k", "node", "m"], ([k, node, v] for (k, node), v in sorted(m.items())))
    write_csv(
        out / "beliefs.csv",
        ["node", "depth", "path"] + [f"p_{j}" for j in range(D + 1)],
        ([i, tree.depths[i], _path_str(tree.path(i)), *tree.beliefs[i]] for i in range(tree.size)),
    )


def cmd_solve(cfg, mode: str, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.problem()
    ladder = cfg.ladder(p)
    try:
        (_solve_known if mode == "known" else _solve_unknown)(p, ladder, out)
    except StructureViolation as exc:
        (out / "counterexample.json").write_text(json.dumps({"error": str(exc), **exc.context}, indent=2) + "\n")
        raise


# --- grid --------------------------------------------------------------------


def _ascii(rows, col_labels):
    lines = ["     " + "".join(str(c % 10) for c in col_labels)]
    for n, row in enumerate(rows):
        lines.append(f"{n:>4} " + "".join("#" if v else "." for v in row))
    return "\n".join(lines)


def cmd_grid(cfg, k: int, mode: str, node=None) -> str:
    """ASCII policy grid followed by the same grid as CSV."""
    p = cfg.problem()
    if not 1 <= k <= p.horizon:
        raise ConfigError(f"k must lie in 1..{p.horizon}, got {k}")
    ladder = cfg.ladder(p)
    N = p.horizon
    if mode == "known":
        if node is not None:
            raise ConfigError("--node only applies to --mode unknown")
        _, pol = backward_induction(p, ladder)
        grid = pol.at(k)[: N + 1, : N + 1]
        cols = list(range(N + 1))
        title = (f"optimal action at k={k} (eavesdropper state known); '#' = encrypt, '.' = plain\n"
                 f"rows: P_(k-1) = h^n(P*), n = 0..{N} downward; columns: P_(e,k-1) = h^n_e(P*), n_e = 0..{N} rightward")
        header = ["n"] + [f"ne_{j}" for j in cols]
    else:
        tree = enumerate_belief_tree(p.ch, N, ladder.depth)
        _, pol = pomdp_backward_induction(p, ladder, tree)
        nodes = list(tree.nodes_at(k - 1))
        if node is not None:
            if node not in nodes:
                raise ConfigError(f"node {node} is not a belief node at depth {k - 1} (valid: {nodes[0]}..{nodes[-1]})")
            nodes = [node]
        offset = 2 ** (k - 1) - 1
        grid = pol.at(k)[[v - offset for v in nodes], : N + 1].T
        cols = nodes
        title = (f"optimal action at k={k} (eavesdropper state unknown); '#' = encrypt, '.' = plain\n"
                 f"rows: P_(k-1) = h^n(P*), n = 0..{N} downward; columns: belief nodes {nodes[0]}..{nodes[-1]}")
        header = ["n"] + [f"node_{v}" for v in cols]
    text = title + "\n" + _ascii(grid, cols) + "\n\n"
    text += csv_text(header, ([n, *grid[n]] for n in range(grid.shape[0])))
    return text


# --- compare / simulate / ladder --------------------------------------------

COMPARE_HEADER = [
    "strategy", "sum_tr_P", "sum_tr_Pe", "sum_a", "J_mc", "J_exact",
    "se_sum_tr_P", "se_sum_tr_Pe", "se_sum_a", "se_J",
    "sum_tr_P_exact", "sum_tr_Pe_exact", "sum_a_exact", "trials", "seed",
]


def _trials_seed(cfg, trials, seed):
    trials = cfg.trials if trials is None else trials
    seed = cfg.seed if seed is None else seed
    if trials is None or seed is None:
        raise ConfigError("trials and seed must be given on the command line or in the config")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}")
    return trials, seed


def cmd_compare(cfg, trials, seed, out) -> Path:
    trials, seed = _trials_seed(cfg, trials, seed)
    p = cfg.problem()
    rows = compare_strategies(p, cfg.ladder(p), trials, seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "compare.csv"
    write_csv(path, COMPARE_HEADER, (
        [r.label, r.mc.sum_remote_trace, r.mc.sum_eve_trace, r.mc.enc_uses, r.mc.total_cost, r.exact.total_cost,
         r.mc.se_remote, r.mc.se_eve, r.mc.se_enc, r.mc.se_cost,
         r.exact.sum_remote_trace, r.exact.sum_eve_trace, r.exact.enc_uses, r.mc.trials, r.mc.seed]
        for r in rows
    ))
    return path


def cmd_simulate(cfg, strategy: str, trials, seed) -> str:
    trials, seed = _trials_seed(cfg, trials, seed)
    p = cfg.problem()
    ladder = cfg.ladder(p)
    if strategy in ("never", "always"):
        s = Strategy(strategy)
    else:
        s = solve_strategies(p, ladder)[2 if strategy == "optimal-known" else 3]
    mc = simulate(s, p, ladder, trials, seed)
    exact = evaluate_policy_exact(s, p, ladder)
    return csv_text(COMPARE_HEADER, [[
        s.label, mc.sum_remote_trace, mc.sum_eve_trace, mc.enc_uses, mc.total_cost, exact.total_cost,
        mc.se_remote, mc.se_eve, mc.se_enc, mc.se_cost,
        exact.sum_remote_trace, exact.sum_eve_trace, exact.enc_uses, mc.trials, mc.seed,
    ]])


def cmd_ladder(cfg, depth=None) -> str:
    p = cfg.problem()
    ladder = cfg.ladder(p, depth=depth)
    n = p.model.n
    header = ["index", "trace"] + [f"P_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    return csv_text(header, ([i, ladder.traces[i], *ladder.rungs[i].ravel()] for i in range(ladder.depth + 1)))


# --- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="encsched", description="Optimal encryption schedules for remote state estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve the scheduling problem and write value/policy/threshold CSVs")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=("known", "unknown"), required=True)
    s.add_argument("--out", required=True)

    g = sub.add_parser("grid", help="print the optimal policy at one time step")
    g.add_argument("--config", required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--mode", choices=("known", "unknown"), default="known")
    g.add_argument("--node", type=int)

    c = sub.add_parser("compare", help="compare the four strategies (exact and Monte Carlo)")
    c.add_argument("--config", required=True)
    c.add_argument("--trials", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", required=True)

    m = sub.add_parser("simulate", help="Monte Carlo evaluation of one strategy")
    m.add_argument("--config", required=True)
    m.add_argument("--strategy", choices=STRATEGY_NAMES, required=True)
    m.add_argument("--trials", type=int)
    m.add_argument("--seed", type=int)

    lad = sub.add_parser("ladder", help="print the covariance ladder")
    lad.add_argument("--config", required=True)
    lad.add_argument("--depth", type=int)
    return parser


def run(args) -> None:
    cfg = load_config(args.config)
    if args.command == "solve":
        cmd_solve(cfg, args.mode, args.out)
    elif args.command == "grid":
        sys.stdout.write(cmd_grid(cfg, args.k, args.mode, args.node))
    elif args.command == "compare":
        path = cmd_compare(cfg, args.trials, args.seed, args.out)
        sys.stdout.write(path.read_text())
    elif args.command == "simulate":
        sys.stdout.write(cmd_simulate(cfg, args.strategy, args.trials, args.seed))
    elif args.command == "ladder":
        if args.depth is not None and args.depth < 0:
            raise ConfigError("--depth must be >= 0")
        sys.stdout.write(cmd_ladder(cfg, args.depth))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        extra = "" if exc.residual is None else f" (last residual {exc.residual:.3g})"
        print(f"numerical error: {exc}{extra}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StructureViolation as exc:
        print(f"threshold structure violated: {exc}", file=sys.stderr)
        print(json.dumps(exc.context), file=sys.stderr)
        return EXIT_STRUCTURE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
