"""Command-line interface: ``hmmglasso {fit,prune,simulate,eval,bench}``.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure,
4 state collapse.
"""
import argparse
import sys

import numpy as np

from .baselines import kmeans_init
from .core import forward_backward
from .em import STATE_COLLAPSED, FitConfig, Initialization, fit_hmmglasso
from .errors import DataFormatError, HmmGlassoError
from .glasso import PENALTY_KINDS
from .io import (ModelDocument, dumps, load_document, prune_trace_to_dict,
                 read_matrix, serialize, write_matrix, write_records)
from .pruning import backward_prune
from .selection import CRITERIA
from .simbench import (EXPERIMENT_1_METHODS, EXPERIMENT_2_METHODS, SimSpec,
                       build_truth, generate, run_experiment_1, run_experiment_2)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_COLLAPSE = 4


class UsageError(Exception):
    pass


class CollapseError(Exception):
    pass


# -- argument types --------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _lambda(text):
    if text == "uni":
        return None
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"lambda must be 'uni' or >= 0, got {text}")
    return value


def _probability(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _delimiter(text):
    return "\t" if text in ("tab", "\\t") else text


# -- parser ----------------------------------------------------------------------------

def _add_data_args(p):
    p.add_argument("--data", required=True, help="CSV/TSV matrix, one observation per row")
    p.add_argument("--delimiter", type=_delimiter, default=",",
                   help="field separator; 'tab' for TSV (default ',')")
    p.add_argument("--header", action="store_true", help="skip the first line")


def _add_fit_args(p):
    p.add_argument("--lambda", dest="lam", type=_lambda, default=None,
                   help="penalty level or 'uni' for sqrt(2 n log p)/2 (default uni)")
    p.add_argument("--penalty", choices=PENALTY_KINDS, default="parcor")
    p.add_argument("--eps", type=_positive_float, default=1e-3,
                   help="relative covariance change that counts as converged")
    p.add_argument("--pi-min", type=_probability, default=None,
                   help="smallest admissible state share (default 5/n)")
    p.add_argument("--max-iter", type=_positive_int, default=500)
    p.add_argument("--init", choices=("kmeans", "file"), default="kmeans")
    p.add_argument("--init-file",
                   help="with --init file: n x K responsibilities or one column of 0-based labels")
    p.add_argument("--restarts", type=_positive_int, default=100,
                   help="K-means restarts for --init kmeans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1,
                   help="parallelism bound (fits currently run in one thread)")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hmmglasso",
        description="Hidden Markov models with sparse state-specific precision matrices.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a K-state model")
    _add_data_args(p)
    p.add_argument("--k", type=_positive_int, required=True)
    _add_fit_args(p)

    p = sub.add_parser("prune", help="backward pruning from --kmax to --kmin states")
    _add_data_args(p)
    p.add_argument("--kmin", type=_positive_int, default=1)
    p.add_argument("--kmax", type=_positive_int, required=True)
    p.add_argument("--criterion", choices=CRITERIA, default="mmdl")
    p.add_argument("--kl-mean-term", choices=("standard", "printed"), default="standard")
    _add_fit_args(p)

    p = sub.add_parser("simulate", help="sample from a benchmark model")
    p.add_argument("--model", type=int, choices=(1, 2, 3, 4), default=1)
    p.add_argument("--k", type=_positive_int, default=2)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--p", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--uneven-blocks", action="store_true",
                   help="allow p not divisible by K (mean blocks of floor(p/K))")
    p.add_argument("--out-prefix", required=True,
                   help="writes PREFIX_data.csv, PREFIX_labels.csv, PREFIX_truth.json")

    p = sub.add_parser("eval", help="log-likelihood of a data set under a saved model")
    _add_data_args(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--out", default="-")

    p = sub.add_parser("bench", help="run a simulation experiment")
    p.add_argument("--experiment", type=int, choices=(1, 2), default=1)
    p.add_argument("--model", type=int, nargs="+", choices=(1, 2, 3, 4), default=[1])
    p.add_argument("--k", type=_positive_int, nargs="+", default=[2])
    p.add_argument("--alpha", type=float, nargs="+", default=[2.0])
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--p", type=_positive_int, default=None)
    p.add_argument("--uneven-blocks", action="store_true",
                   help="allow p not divisible by K (mean blocks of floor(p/K))")
    p.add_argument("--methods", nargs="+", default=None)
    p.add_argument("--criteria", nargs="+", choices=CRITERIA, default=list(CRITERIA))
    p.add_argument("--replicates", type=_positive_int, default=1)
    p.add_argument("--kmax", type=_positive_int, default=15)
    p.add_argument("--restarts", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1,
                   help="worker processes for replicates")
    p.add_argument("--timing", action="store_true",
                   help="record runtimes (makes output non-deterministic)")
    p.add_argument("--out", default="-")
    return parser


# -- helpers ---------------------------------------------------------------------

def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w"), True


def _write_text(path, text):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _config(args):
    return FitConfig(lam=args.lam, penalty_kind=args.penalty, eps=args.eps,
                     pi_min=args.pi_min, max_iter=args.max_iter)


def _initialization(args, data, K):
    if args.init == "kmeans":
        return kmeans_init(data, K, restarts=args.restarts, seed=args.seed)
    table = read_matrix(args.init_file, delimiter=args.delimiter)
    if table.shape[0] != data.shape[0]:
        raise UsageError(f"--init-file has {table.shape[0]} rows, data has {data.shape[0]}")
    if table.shape[1] == 1:
        labels = table[:, 0]
        if np.any(labels != np.round(labels)) or labels.min() < 0 or labels.max() >= K:
            raise UsageError(f"labels in --init-file must be integers in [0, {K})")
        u = np.zeros((len(labels), K))
        u[np.arange(len(labels)), labels.astype(int)] = 1.0
    elif table.shape[1] == K:
        u = table
    else:
        raise UsageError(f"--init-file must have 1 or {K} columns")
    try:
        return Initialization.from_responsibilities(u)
    except ValueError as exc:
        raise UsageError(f"--init-file: {exc}") from None


def _check_init_flags(args):
    if args.init == "kmeans" and args.init_file:
        raise UsageError("--init-file requires --init file")
    if args.init == "file" and not args.init_file:
        raise UsageError("--init file requires --init-file")


# -- commands ------------------------------------------------------------------

def cmd_fit(args):
    _check_init_flags(args)
    config = _config(args)
    data = read_matrix(args.data, args.delimiter, args.header)
    if args.k > data.shape[0]:
        raise UsageError("--k exceeds the number of observations")
    fit = fit_hmmglasso(data, args.k, config, _initialization(args, data, args.k))
    if fit.termination == STATE_COLLAPSED:
        raise CollapseError(
            f"state {fit.collapsed_state} fell below pi_min = {fit.config.pi_min:.6g} "
            f"at iteration {fit.iterations}; try a smaller --k or --pi-min")
    _write_text(args.out, serialize(ModelDocument.from_fit(fit)))


def cmd_prune(args):
    _check_init_flags(args)
    if not args.kmin < args.kmax:
        raise UsageError("--kmin must be smaller than --kmax")
    config = _config(args)
    data = read_matrix(args.data, args.delimiter, args.header)
    if args.kmax > data.shape[0]:
        raise UsageError("--kmax exceeds the number of observations")
    trace = backward_prune(data, args.kmin, args.kmax, config, args.criterion,
                           init=_initialization(args, data, args.kmax),
                           mean_term=args.kl_mean_term)
    _write_text(args.out, dumps(prune_trace_to_dict(trace)))


def cmd_simulate(args):
    try:
        spec = SimSpec(model_id=args.model, K_true=args.k, n=args.n, p=args.p,
                       alpha=args.alpha, seed=args.seed, uneven_blocks=args.uneven_blocks)
        data, labels, truth = generate(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    prefix = args.out_prefix
    write_matrix(f"{prefix}_data.csv", data)
    write_matrix(f"{prefix}_labels.csv", labels.reshape(-1, 1))
    doc = ModelDocument(n=spec.n, p=spec.p, model=truth)
    _write_text(f"{prefix}_truth.json", serialize(doc))


def cmd_eval(args):
    doc = load_document(args.model_file)
    data = read_matrix(args.data, args.delimiter, args.header)
    if data.shape[1] != doc.p:
        raise UsageError(f"data has {data.shape[1]} columns, model expects {doc.p}")
    resp = forward_backward(data, doc.model, keep_pairwise=False)
    ll = float(resp.log_likelihood)
    if not np.isfinite(ll):
        raise HmmGlassoError("log-likelihood is not finite")
    record = {"n": int(data.shape[0]), "p": int(data.shape[1]),
              "K": doc.model.num_states, "log_likelihood": ll,
              "per_observation": ll / data.shape[0]}
    fh, close = _open_out(args.out)
    try:
        write_records([record], fh)
    finally:
        if close:
            fh.close()


def cmd_bench(args):
    allowed = EXPERIMENT_1_METHODS if args.experiment == 1 else EXPERIMENT_2_METHODS
    methods = tuple(args.methods) if args.methods else allowed
    unknown = [m for m in methods if m not in allowed]
    if unknown:
        raise UsageError(f"unknown methods for experiment {args.experiment}: {unknown}")
    try:
        specs = [SimSpec(model_id=m, K_true=k, n=args.n, p=args.p, alpha=a,
                         uneven_blocks=args.uneven_blocks)
                 for m in args.model for k in args.k for a in args.alpha]
        for spec in specs:
            build_truth(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    common = dict(replicates=args.replicates, seed=args.seed, k_max=args.kmax,
                  restarts=args.restarts, n_jobs=args.threads, timing=args.timing)
    if args.experiment == 1:
        records = run_experiment_1(specs, methods, tuple(args.criteria), **common)
    else:
        records = run_experiment_2(specs, methods, **common)
    fh, close = _open_out(args.out)
    try:
        write_records(records, fh)
    finally:
        if close:
            fh.close()


COMMANDS = {"fit": cmd_fit, "prune": cmd_prune, "simulate": cmd_simulate,
            "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (UsageError, DataFormatError, FileNotFoundError) as exc:
        print(f"hmmglasso {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CollapseError as exc:
        print(f"hmmglasso {args.command}: state collapse: {exc}", file=sys.stderr)
        return EXIT_COLLAPSE
    except (HmmGlassoError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"hmmglasso {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
