"""Command-line interface.

Exit codes: 0 success, 2 infeasible design, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .design import InfeasibleDesign, design_modulation, load_design, save_design, verify_exact_feasibility
from .functions import EnumerationLimitError, NonSymmetricFunction, enumerate_multiset_classes, load_value_table, make_function
from .harness import ConfigError, ExperimentConfig, preset, run_design_batch, run_monte_carlo, write_points_csv
from .modem import Quantizer, build_decoder_table

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 2, 3


def _spec(function: str, K: int, q: int, lo: float | None, hi: float | None):
    if function.endswith(".json"):
        spec = load_value_table(function)
        if spec.q != q or spec.K != K:
            raise ConfigError(f"value table has K={spec.K}, q={spec.q}")
        return spec
    levels = None if lo is None else Quantizer(lo, hi, q).levels
    return make_function(function, K, q, level_values=levels)


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2))


def cmd_design(args) -> int:
    spec = _spec(args.function, args.K, args.q, args.lo, args.hi)
    classes = enumerate_multiset_classes(spec)
    design = design_modulation(classes, P=args.P, n_rand=args.n_rand, seed=args.seed)
    save_design(design, args.out)
    print(f"{spec.name} K={args.K} q={args.q}: margin={design.margin:.6g} "
          f"exact_feasible={design.exact_feasible} ({design.provenance}) -> {args.out}")
    return EXIT_OK if design.exact_feasible else EXIT_INFEASIBLE


def cmd_verify(args) -> int:
    design = load_design(args.design)
    spec = _spec(args.function, args.K, design.q, args.lo, args.hi)
    report = verify_exact_feasibility(design.x, enumerate_multiset_classes(spec), args.epsilon)
    print(f"passed={report.passed} min_distance={report.min_distance:.6g} threshold={report.threshold:.6g}")
    for v in report.violations[:20]:
        print(f"  collision {v['levels_i']} (f={v['value_i']:g}) vs {v['levels_j']} (f={v['value_j']:g}) "
              f"distance={v['distance']:.3g}")
    if len(report.violations) > 20:
        print(f"  ... {len(report.violations) - 20} more")
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def _emit(report, out) -> None:
    out = Path(out)
    report.write_csv(out)
    report.write_json(out.with_suffix(".json"))
    print(f"wrote {out} and {out.with_suffix('.json')}")


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    _emit(run_monte_carlo(cfg), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = preset(args.preset)
    cfg.master_seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.preset == "fig4":
        outdir = Path(args.out).with_suffix("")
        links = run_design_batch(cfg, outdir)
        rows = ["function,q,margin,exact_feasible,provenance,table_points"]
        for key, link in links.items():
            d = link.design
            rows.append(f"{key.rsplit('-q', 1)[0]},{d.q},{d.margin!r},{d.exact_feasible},{d.provenance},{len(link.table)}")
        Path(args.out).write_text("\n".join(rows) + "\n")
        print(f"wrote {args.out} and designs under {outdir}/")
        ok = all(link.design.exact_feasible for link in links.values())
        return EXIT_OK if ok else EXIT_INFEASIBLE
    _emit(run_monte_carlo(cfg), args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    design = load_design(args.design)
    if args.function:
        spec = _spec(args.function, args.K, design.q, args.lo, args.hi)
        table = build_decoder_table(design.x, enumerate_multiset_classes(spec))
        write_points_csv(table, args.out)
    else:
        # modulation symbols only
        with open(args.out, "w") as fh:
            fh.write("index,re,im\n")
            for k, v in enumerate(np.asarray(design.x)):
                fh.write(f"{k},{float(v.real)!r},{float(v.imag)!r}\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="channelcomp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def function_args(sp, need_k=True):
        sp.add_argument("--function", required=True, help="sum | product | max | quadratic | table.json")
        sp.add_argument("--K", type=int, required=need_k, default=None)
        sp.add_argument("--lo", type=float, default=None, help="quantizer range; levels are 0..q-1 if omitted")
        sp.add_argument("--hi", type=float, default=None)

    d = sub.add_parser("design", help="solve for a modulation vector")
    function_args(d)
    d.add_argument("--q", type=int, required=True)
    d.add_argument("--P", type=float, default=None)
    d.add_argument("--n-rand", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    v = sub.add_parser("verify", help="check a design for colliding points")
    function_args(v)
    v.add_argument("--design", required=True)
    v.add_argument("--epsilon", type=float, default=1e-6)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="Monte-Carlo NMSE from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="run a figure preset")
    b.add_argument("--preset", required=True, choices=["fig4", "fig5", "fig6"])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--trials", type=int, default=None)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export-constellation", help="write symbols, or received points with --function")
    e.add_argument("--design", required=True)
    e.add_argument("--function", default=None)
    e.add_argument("--K", type=int, default=None)
    e.add_argument("--lo", type=float, default=None)
    e.add_argument("--hi", type=float, default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "lo", None) is not None and getattr(args, "hi", None) is None:
        print("error: --lo needs --hi", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "export-constellation" and args.function and args.K is None:
        print("error: --function needs --K", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except InfeasibleDesign as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, NonSymmetricFunction, EnumerationLimitError, OSError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
