"""Command-line front end.

Every artifact embeds the arguments that produced it under ``run_config``;
``kashin replay ARTIFACT`` reruns them and compares bytes.  Exit codes:
0 pass, 1 fail, 2 usage or I/O error, 3 budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checks, lab
from .certifier import (ANDERSON_BUDGET, DELTA_BUDGET, BudgetExceeded, Certificate, certify_split,
                        verify_certificate)
from .matrices import (SplitSystem, apply_row, dumps_json, lp_norm, matrix_from_dict, random_sign_matrix,
                       walsh_bad_vector, walsh_matrix, write_matrix)
from .oracle import mc_ascent, section_oracle

EXIT_PASS, EXIT_FAIL, EXIT_IO, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    args: dict

    def to_dict(self) -> dict:
        return {"command": self.command, "args": self.args}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        return cls(doc["command"], dict(doc["args"]))

    def get(self, name, default=None):
        return self.args.get(name, default)


def _emit(text: str, dest: str | None) -> None:
    if dest is None or dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _load_system(cfg: RunConfig) -> SplitSystem:
    path = cfg.get("input")
    if not path:
        raise UsageError("--in is required")
    doc = _load_json(path)
    sys_ = matrix_from_dict(doc)
    if cfg.get("variant") and cfg.get("variant") != sys_.variant:
        sys_ = SplitSystem(sys_.b, cfg.get("variant"))
    return sys_


def _budget(cfg: RunConfig, method: str) -> int:
    b = cfg.get("budget_subsets")
    if b is not None:
        return int(b)
    return DELTA_BUDGET if method == "delta" else ANDERSON_BUDGET


def _workers(cfg: RunConfig) -> int:
    return max(1, int(cfg.get("threads") or 1))


def _strip_ms(obj):
    if isinstance(obj, dict):
        return {k: (None if k == "ms" else _strip_ms(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_strip_ms(v) for v in obj]
    return obj


# --- commands --------------------------------------------------------------

def cmd_gen(cfg: RunConfig, dest):
    k = cfg.get("k")
    if k is None or k < 1:
        raise UsageError("--k must be a positive integer")
    sys_ = SplitSystem(random_sign_matrix(k, cfg.get("seed")), cfg.get("variant") or "exact-sqrt")
    if dest is None:
        doc = {"k": sys_.k, "variant": sys_.variant, "rows": sys_.b.rows, "run_config": cfg.to_dict()}
        _emit(dumps_json(doc), None)
    else:
        write_matrix(dest, sys_, cfg.to_dict())
    return EXIT_PASS


def cmd_certify(cfg: RunConfig, dest):
    sys_ = _load_system(cfg)
    method = cfg.get("method") or "anderson"
    threshold = cfg.get("threshold")
    if threshold is None:
        raise UsageError("--threshold is required")
    cert, ok = certify_split(sys_, threshold, method, sys_.variant, max_subsets=_budget(cfg, method),
                             workers=_workers(cfg), budget_ms=cfg.get("budget_ms"), timing=cfg.get("timing"))
    doc = {"run_config": cfg.to_dict(), "certificate": cert.to_dict(), "threshold": threshold, "pass": ok}
    _emit(dumps_json(doc), dest)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_verify(cfg: RunConfig, dest):
    sys_ = _load_system(cfg)
    path = cfg.get("cert")
    if not path:
        raise UsageError("--cert is required")
    doc = _load_json(path)
    cert = Certificate.from_dict(doc.get("certificate", doc))
    problems = verify_certificate(cert, sys_)
    out = {"run_config": cfg.to_dict(), "valid": not problems, "problems": problems,
           "constant": cert.constant, "method": cert.method,
           "note": "the witness proves the constant is attained; maximality needs the full enumeration"}
    _emit(dumps_json(out), dest)
    return EXIT_PASS if not problems else EXIT_FAIL


def cmd_oracle(cfg: RunConfig, dest):
    sys_ = _load_system(cfg)
    sides = ("E", "Eperp") if cfg.get("side") == "both" else (cfg.get("side"),)
    reports = {}
    for side in sides:
        if cfg.get("method") == "mc":
            r = mc_ascent(side, sys_, cfg.get("samples") or 100, cfg.get("seed"))
        else:
            r = section_oracle(side, sys_, _budget(cfg, "anderson"), _workers(cfg))
        reports[side] = r.to_dict()
    out = {"run_config": cfg.to_dict(), "reports": reports}
    _emit(dumps_json(out), dest)
    return EXIT_PASS


def _mc_paths(dest: str) -> tuple[Path, Path]:
    p = Path(dest)
    return p, p.with_suffix(".header.json")


def cmd_mc(cfg: RunConfig, dest):
    ks = cfg.get("k_list")
    if not ks:
        raise UsageError("--k-list is required")
    if cfg.get("threshold") is None:
        raise UsageError("--threshold is required")
    method = cfg.get("method") or "anderson"
    summaries, records = lab.mc_success_experiment(
        ks, cfg.get("samples") or 200, cfg.get("threshold"), cfg.get("seed"), method,
        cfg.get("variant") or "exact-sqrt", cfg.get("budget_subsets"), _workers(cfg), cfg.get("timing"))
    header = {"run_config": cfg.to_dict(), "columns": list(lab.CSV_COLUMNS),
              "summaries": [s.to_dict() for s in summaries], "eta_fit": lab.eta_fit(records).to_dict()}
    if (cfg.get("format") or "csv") == "json":
        header["records"] = [dict(zip(lab.CSV_COLUMNS, r.row())) for r in records]
        _emit(dumps_json(header), dest)
    elif dest is None:
        _emit(lab.records_csv(records), None)
    else:
        csv_path, head_path = _mc_paths(dest)
        csv_path.write_text(lab.records_csv(records))
        head_path.write_text(dumps_json(header))
    return EXIT_PASS if all(s.skipped is None for s in summaries) else EXIT_BUDGET


def cmd_search(cfg: RunConfig, dest):
    k = cfg.get("k")
    if k is None or k < 1:
        raise UsageError("--k must be a positive integer")
    method = cfg.get("method") or "anderson"
    st = lab.local_search(k, cfg.get("seed"), cfg.get("steps") or 0, method, cfg.get("mode"),
                          cfg.get("variant") or "exact-sqrt", cfg.get("budget_subsets"))
    out = {"run_config": cfg.to_dict(), "best": {"k": k, "variant": st.best_cert.variant, "rows": st.best.rows},
           "best_certificate": st.best_cert.to_dict(), "best_history": [f"{v:.15g}" for v in st.best_history],
           "steps": st.step, "accepted": st.accepted, "visited": st.visited}
    _emit(dumps_json(out), dest)
    return EXIT_PASS


def cmd_walsh(cfg: RunConfig, dest):
    t = cfg.get("t")
    if t is None or t < 2 or t % 2:
        raise UsageError("--t must be a positive even integer")
    b = walsh_matrix(t)
    sys_ = SplitSystem(b)
    k = b.k
    a = walsh_bad_vector(t)
    ab = a @ b.entries.astype(np.float64)
    x = apply_row(a, "A", sys_)
    ratio = lp_norm(x, 2) / lp_norm(x, 1)
    out = {"run_config": cfg.to_dict(), "t": t, "k": k, "bad_vector_support": int(a.sum()),
           "ratio": f"{ratio:.15g}", "k_quarter": f"{k ** 0.25:.15g}",
           "L1_sqrt_k_a": f"{lp_norm(math.sqrt(k) * a, 1):.15g}", "L1_aB": f"{lp_norm(ab, 1):.15g}",
           "L2_sqrt_k_a": f"{lp_norm(math.sqrt(k) * a, 2):.15g}", "L2_aB": f"{lp_norm(ab, 2):.15g}"}
    thr = cfg.get("threshold")
    if thr is not None:
        cert, ok = certify_split(b, thr, cfg.get("method") or "anderson",
                                 max_subsets=_budget(cfg, cfg.get("method") or "anderson"),
                                 workers=_workers(cfg))
        out["certificate"] = cert.to_dict()
        out["pass"] = ok
    _emit(dumps_json(out), dest)
    return EXIT_FAIL if out.get("pass") is False else EXIT_PASS


def cmd_checks(cfg: RunConfig, dest):
    name = cfg.get("check")
    seed = cfg.get("seed")
    samples = cfg.get("samples")
    if name == "tail-rearrangement":
        rep = checks.rearrangement_sweep(cfg.get("sweep") or 10_000, seed)
    elif name == "khinchine":
        rep = checks.khinchine_sweep(cfg.get("sweep") or 1000, seed)
    elif name == "concentration":
        ks = cfg.get("k_list") or [16, 64, 256]
        c = cfg.get("c") if cfg.get("c") is not None else 0.5
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        tails = {}
        for which in ("L1-form", "L2-form"):
            tails[which] = [checks.concentration_tail(checks.random_unit(k, rng), c, samples or 10_000,
                                                      lab.sample_seed(seed, k, 0), which).to_dict()
                            for k in ks]
        dec = {w: all(x["tail"] > y["tail"] for x, y in zip(v, v[1:])) for w, v in tails.items()}
        rep = checks.CheckReport("concentration", {"k_list": ks, "c": c, "trials": samples or 10_000}, seed,
                                 all(dec.values()), {"tails": tails, "strictly_decreasing": dec})
    elif name == "cover":
        g, e, k = cfg.get("gamma"), cfg.get("eps"), cfg.get("k")
        if None in (g, e, k):
            raise UsageError("cover needs --gamma, --eps and --k")
        r = checks.cover_construct(g, e, k, samples or 10_000, seed)
        rep = checks.CheckReport("cover", {"gamma": g, "eps": e, "k": k, "validation_sample": samples or 10_000},
                                 seed, r.valid and r.within_bound, r.to_dict())
    elif name == "gauge":
        sys_ = _load_system(cfg) if cfg.get("input") else SplitSystem(random_sign_matrix(cfg.get("k") or 16, seed))
        g = checks.gauge_check(sys_.b, samples or 10_000, seed)
        rep = checks.CheckReport("gauge", {"k": sys_.k, "samples": samples or 10_000,
                                           "matrix_hash": sys_.b.digest()}, seed, g.min_gauge > 0,
                                 g.to_dict())
    elif name == "restriction":
        lam, n = cfg.get("lam"), cfg.get("n")
        if lam is None or n is None:
            raise UsageError("restriction needs --lambda and --n")
        r = lab.restriction_experiment(lam, n, samples or 50, seed)
        rep = checks.CheckReport("restriction", {"lambda": lam, "n": n, "samples": samples or 50}, seed,
                                 min(r.constants) >= 1.0, {**r.summary(), "constants": r.constants})
    else:
        raise UsageError(f"unknown check {name!r}")
    out = {"run_config": cfg.to_dict(), **rep.to_dict()}
    _emit(dumps_json(out), dest)
    return EXIT_FAIL if cfg.get("strict") and not rep.passed else EXIT_PASS


COMMANDS = {"gen": cmd_gen, "certify": cmd_certify, "verify": cmd_verify, "oracle": cmd_oracle, "mc": cmd_mc,
            "search": cmd_search, "walsh": cmd_walsh, "checks": cmd_checks}


def _artifact_bytes(cfg: RunConfig, dest: str) -> list[bytes]:
    if cfg.command == "mc" and (cfg.get("format") or "csv") == "csv":
        return [p.read_bytes() for p in _mc_paths(dest)]
    return [Path(dest).read_bytes()]


def cmd_replay(path: str) -> int:
    """Rerun the configuration embedded in an artifact and compare bytes."""
    doc = _load_json(path)
    if "run_config" not in doc:
        raise UsageError(f"{path} has no embedded run_config")
    cfg = RunConfig.from_dict(doc["run_config"])
    if cfg.command not in COMMANDS:
        raise UsageError(f"cannot replay command {cfg.command!r}")
    original = Path(path)
    with tempfile.TemporaryDirectory() as tmp:
        if cfg.command == "mc" and (cfg.get("format") or "csv") == "csv":
            if not cfg.get("out"):
                raise UsageError("mc output written to stdout cannot be replayed")
            old = [p.read_bytes() for p in _mc_paths(cfg.get("out"))]
            dest = str(Path(tmp) / Path(cfg.get("out")).name)
        else:
            old = [original.read_bytes()]
            dest = str(Path(tmp) / "artifact.json")
        _run(cfg, dest)
        new = _artifact_bytes(cfg, dest)
    if cfg.get("timing"):
        # wall-clock fields cannot repeat; compare everything else
        old, new = [_without_ms(b) for b in old], [_without_ms(b) for b in new]
    same = old == new
    sys.stderr.write("replay: identical\n" if same else "replay: artifacts differ\n")
    return EXIT_PASS if same else EXIT_FAIL


def _without_ms(b: bytes) -> bytes:
    if b.lstrip().startswith(b"{"):
        return dumps_json(_strip_ms(json.loads(b))).encode()
    return b"\n".join(line.rsplit(b",", 1)[0] for line in b.split(b"\n"))


def _run(cfg: RunConfig, dest):
    return COMMANDS[cfg.command](cfg, dest)


def _k_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--threads", type=_positive, default=1, help="cap on worker processes")
    common.add_argument("--variant", choices=("exact-sqrt", "floor-sqrt"), default=None)
    common.add_argument("--budget-subsets", type=_positive, default=None)
    common.add_argument("--budget-ms", type=float, default=None)
    common.add_argument("--timing", action="store_true", help="record wall-clock ms (breaks byte replay)")

    p = argparse.ArgumentParser(prog="kashin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="random sign matrix file")
    g.add_argument("--k", type=_positive, required=True)

    for name, hlp in (("certify", "exact splitting constant against a threshold"),
                      ("verify", "recompute a certificate from its witness"),
                      ("oracle", "geometric estimate of the distortion of each side")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--in", dest="input", required=True)
        if name == "certify":
            s.add_argument("--method", choices=("delta", "anderson"), default="anderson")
            s.add_argument("--threshold", type=float, required=True)
        elif name == "verify":
            s.add_argument("--cert", required=True)
        else:
            s.add_argument("--side", choices=("E", "Eperp", "both"), default="both")
            s.add_argument("--method", choices=("section", "mc"), default="section")
            s.add_argument("--samples", type=_positive, default=100)

    m = sub.add_parser("mc", parents=[common], help="success fraction of random sign matrices")
    m.add_argument("--k-list", type=_k_list, required=True)
    m.add_argument("--samples", type=_positive, default=200)
    m.add_argument("--threshold", type=float, required=True)
    m.add_argument("--method", choices=("delta", "anderson"), default="anderson")
    m.add_argument("--format", choices=("csv", "json"), default="csv")

    s = sub.add_parser("search", parents=[common], help="local search over single sign flips")
    s.add_argument("--k", type=_positive, required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--method", choices=("delta", "anderson"), default="anderson")
    s.add_argument("--mode", choices=("first-improve", "anneal"), default="first-improve")

    w = sub.add_parser("walsh", parents=[common], help="Walsh matrix and its bad coefficient vector")
    w.add_argument("--t", type=int, required=True)
    w.add_argument("--threshold", type=float, default=None, help="also certify the Walsh matrix")
    w.add_argument("--method", choices=("delta", "anderson"), default="anderson")

    c = sub.add_parser("checks", parents=[common], help="numerical checks of the supporting inequalities")
    c.add_argument("check", choices=("khinchine", "tail-rearrangement", "concentration", "cover", "gauge",
                                     "restriction"))
    c.add_argument("--sweep", type=_positive, default=None)
    c.add_argument("--samples", type=_positive, default=None)
    c.add_argument("--k", type=_positive, default=None)
    c.add_argument("--k-list", type=_k_list, default=None)
    c.add_argument("--c", type=float, default=None)
    c.add_argument("--gamma", type=float, default=None)
    c.add_argument("--eps", type=float, default=None)
    c.add_argument("--lambda", dest="lam", type=float, default=None)
    c.add_argument("--n", type=_positive, default=None)
    c.add_argument("--in", dest="input", default=None)
    c.add_argument("--strict", action="store_true", help="exit 1 when a check fails")

    r = sub.add_parser("replay", help="rerun an artifact's embedded configuration and compare bytes")
    r.add_argument("artifact")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "replay":
            return cmd_replay(ns.artifact)
        args = {k: v for k, v in sorted(vars(ns).items()) if k != "command"}
        cfg = RunConfig(ns.command, args)
        return _run(cfg, ns.out)
    except BudgetExceeded as exc:
        sys.stderr.write(f"budget exceeded: {exc}\n")
        return EXIT_BUDGET
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_IO
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    except (ValueError, MemoryError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
