"""End-to-end experiment runner.

Subcommands: ``reconstruct`` (simulate + reconstruct + report),
``settings-table`` (count settings needed to cover observable budgets),
``noise-study`` (fidelity prediction vs true preparation fidelity under a
noise sweep), and ``dump-state`` (write a DMAT v1 file).

Configuration comes from flat ``key=value`` files (``#`` comments) and/or
flags; flags override the file. Identical configuration and seed produce
byte-identical CSV output: per-trial wall time lands in the ``seconds``
column only when ``--timing`` is given, otherwise the field stays empty.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .amp import AmpConfig, AmpTrace, run_amp
from .errors import DivergenceError
from .measure import (
    NoiseModel,
    apply_composite,
    apply_coherent,
    apply_depolarizing,
    build_measurements,
    overrotation_unitary,
)
from .mifgd import MifgdConfig, run_mifgd
from .pauli import MeasurementPlan, sample_observables, sample_settings_until
from .states import (
    make_named_state,
    make_random_state,
    nmse,
    project_to_density,
    pure_density,
    state_fidelity,
    write_density,
)

RESULT_COLUMNS = ["trial", "state", "n", "M", "T", "N", "algorithm", "nmse",
                  "fidelity_truth", "fidelity_target", "iters", "seconds"]

# role tags for deriving independent per-trial RNG streams
_ROLE_STATE, _ROLE_PLAN, _ROLE_MEAS, _ROLE_ALGO = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    state: str = "ghz"
    qubits: int = 3
    rank: int = 1
    seed: int = 0
    observables: int | None = None
    fraction: float | None = None
    settings_target: int | None = None
    shots: int | None = 1024
    algorithm: str = "amp"
    alpha: float = 2.0
    damping: float = 0.01
    damping_enabled: bool = True
    max_iter: int | None = None
    denoiser: str = "psvt"
    normalize: bool = True
    eta: float = 0.001
    mu: float | None = None
    rank_budget: int = 5
    rel_tol: float = 1e-4
    noise: NoiseModel | None = None
    trials: int = 1
    out: str | None = None
    trace: str | None = None
    workers: int = 1
    timing: bool = False

    def validate(self) -> None:
        d2 = 4 ** self.qubits
        if self.qubits < 1:
            raise ValueError("qubits must be at least 1")
        if self.state not in ("ghz", "hadamard", "w", "random"):
            raise ValueError(f"unknown state {self.state!r}")
        if self.state != "random" and self.rank != 1:
            raise ValueError("rank applies only to random states")
        modes = [self.observables is not None, self.fraction is not None,
                 self.settings_target is not None]
        if sum(modes) != 1:
            raise ValueError("choose exactly one of --observables, --fraction, "
                             "--settings-target")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        if self.observables is not None and not 1 <= self.observables <= d2:
            raise ValueError(f"observables must lie in [1, {d2}]")
        if self.settings_target is not None and not 1 <= self.settings_target <= d2:
            raise ValueError(f"settings target must lie in [1, {d2}]")
        if self.algorithm not in ("amp", "mifgd"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def plan_mode(self) -> str:
        return "observables" if self.observables is not None else "settings"

    def settings_budget(self) -> int:
        if self.settings_target is not None:
            return self.settings_target
        return max(1, round(self.fraction * 4 ** self.qubits))

    def solver_max_iter(self) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 2000 if self.algorithm == "amp" else 1000


@dataclass
class TrialResult:
    trial: int
    M: int
    T: int
    nmse: float
    fidelity_truth: float
    fidelity_target: float
    fidelity_prep: float
    iters: int
    seconds: float
    trace: AmpTrace | None = None


def _rng_for(cfg: ExperimentConfig, trial: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.seed, trial, role)))


def _seed_int(cfg: ExperimentConfig, trial: int, role: int) -> int:
    return int(np.random.SeedSequence((cfg.seed, trial, role)).generate_state(1)[0])


def build_target_state(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    if cfg.state == "random":
        return make_random_state(cfg.qubits, cfg.rank,
                                 _rng_for(cfg, trial, _ROLE_STATE))
    return pure_density(make_named_state(cfg.state, cfg.qubits))


def prepare_state(cfg: ExperimentConfig, target: np.ndarray) -> np.ndarray:
    """Apply the state-level part of the noise model to the target."""
    rho = target
    if cfg.noise is None:
        return rho
    if cfg.noise.coherent_theta:
        rho = apply_coherent(rho, overrotation_unitary(cfg.qubits,
                                                       cfg.noise.coherent_theta))
    if cfg.noise.depolarizing_eps:
        rho = apply_depolarizing(rho, cfg.noise.depolarizing_eps)
    if cfg.noise.photonic is not None:
        rho = apply_composite(rho, cfg.noise.photonic)
    return rho


def build_plan(cfg: ExperimentConfig, trial: int) -> tuple[MeasurementPlan, int]:
    """Per-trial measurement plan and the circuit count T."""
    n = cfg.qubits
    rng = _rng_for(cfg, trial, _ROLE_PLAN)
    if cfg.plan_mode == "observables":
        paulis = sample_observables(n, cfg.observables, rng)
        plan = MeasurementPlan(n=n, mode="observables",
                               words=tuple(p.letters for p in paulis))
        return plan, len(paulis)
    settings, _, T = sample_settings_until(n, cfg.settings_budget(), rng)
    return MeasurementPlan(n=n, mode="settings", words=tuple(settings)), T


def run_trial(cfg: ExperimentConfig, trial: int,
              want_trace: bool = False) -> TrialResult:
    start = time.perf_counter()
    target = build_target_state(cfg, trial)
    rho_star = prepare_state(cfg, target)
    plan, T = build_plan(cfg, trial)
    smap, y = build_measurements(rho_star, plan, cfg.shots, cfg.noise,
                                 seed=(cfg.seed, trial, _ROLE_MEAS))

    trace = None
    failed = False
    if cfg.algorithm == "amp":
        acfg = AmpConfig(alpha=cfg.alpha, damping=cfg.damping,
                         damping_enabled=cfg.damping_enabled,
                         max_iter=cfg.solver_max_iter(), denoiser=cfg.denoiser,
                         normalize=cfg.normalize,
                         seed=_seed_int(cfg, trial, _ROLE_ALGO))
        try:
            rho_hat, trace = run_amp(smap, y, acfg,
                                     ground_truth=rho_star if want_trace else None)
        except DivergenceError as err:
            failed = True
            rho_hat = err.iterate
            trace = err.trace
        iters = len(trace)
    else:
        mcfg = MifgdConfig(eta=cfg.eta, mu=cfg.mu, rank_budget=cfg.rank_budget,
                           max_iter=cfg.solver_max_iter(), rel_tol=cfg.rel_tol,
                           seed=_seed_int(cfg, trial, _ROLE_ALGO))
        try:
            rho_hat, iters = run_mifgd(smap, y, mcfg)
        except DivergenceError as err:
            failed = True
            rho_hat = err.iterate
            iters = cfg.solver_max_iter()

    if failed:
        # failed recovery reports a state infidelity of 1.0
        fid_truth = 0.0
        fid_target = 0.0
        err_nmse = nmse(rho_star, project_to_density(rho_hat)) \
            if rho_hat is not None and np.isfinite(rho_hat).all() else float("inf")
    else:
        fid_truth = state_fidelity(rho_star, rho_hat)
        fid_target = state_fidelity(target, rho_hat)
        err_nmse = nmse(rho_star, rho_hat)
    fid_prep = state_fidelity(target, rho_star)
    seconds = time.perf_counter() - start
    return TrialResult(trial=trial, M=smap.M, T=T, nmse=err_nmse,
                       fidelity_truth=fid_truth, fidelity_target=fid_target,
                       fidelity_prep=fid_prep, iters=iters, seconds=seconds,
                       trace=trace if want_trace else None)


def _run_trials(cfg: ExperimentConfig, want_trace: bool) -> list[TrialResult]:
    if cfg.workers == 1:
        return [run_trial(cfg, t, want_trace) for t in range(cfg.trials)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(run_trial, cfg, t, want_trace)
                   for t in range(cfg.trials)]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_results_csv(path, cfg: ExperimentConfig,
                      results: list[TrialResult]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow([
                r.trial, cfg.state, cfg.qubits, r.M, r.T,
                "inf" if cfg.shots is None else cfg.shots, cfg.algorithm,
                _fmt(r.nmse), _fmt(r.fidelity_truth), _fmt(r.fidelity_target),
                r.iters, f"{r.seconds:.3f}" if cfg.timing else "",
            ])


def _summary(results: list[TrialResult]) -> str:
    fid = np.array([r.fidelity_truth for r in results])
    err = np.array([r.nmse for r in results])
    return (f"trials={len(results)}  "
            f"fidelity min/mean/max = {fid.min():.6f}/{fid.mean():.6f}/{fid.max():.6f}  "
            f"nmse min/mean/max = {err.min():.3g}/{err.mean():.3g}/{err.max():.3g}")


def cmd_reconstruct(cfg: ExperimentConfig) -> list[TrialResult]:
    cfg.validate()
    results = _run_trials(cfg, want_trace=cfg.trace is not None)
    if cfg.out:
        write_results_csv(cfg.out, cfg, results)
    if cfg.trace:
        for r in results:
            if r.trace is None:
                continue
            path = cfg.trace if cfg.trials == 1 \
                else _suffixed(cfg.trace, f".trial{r.trial}")
            r.trace.to_csv(path)
    print(_summary(results))
    return results


def _suffixed(path: str, suffix: str) -> str:
    stem, dot, ext = path.rpartition(".")
    return f"{stem}{suffix}.{ext}" if dot else path + suffix


# ---------------------------------------------------------------------------
# Settings table
# ---------------------------------------------------------------------------

def cmd_settings_table(n_values, fractions, trials: int, seed: int,
                       out: str | None = None) -> list[dict]:
    """Mean number of settings needed per (n, fraction of d^2) cell."""
    rows = []
    for n in n_values:
        if n > 10:
            raise ValueError("settings table supports n <= 10")
        d2 = 4 ** n
        for fi, frac in enumerate(fractions):
            target = max(1, round(frac * d2))
            counts = []
            for t in range(trials):
                rng = np.random.default_rng(np.random.SeedSequence((seed, n, fi, t)))
                _, _, T = sample_settings_until(n, target, rng)
                counts.append(T)
            mean_T = float(np.mean(counts))
            rows.append({"n": n, "fraction": frac, "M": target,
                         "mean_T": mean_T,
                         "t_over_m_pct": 100.0 * mean_T / target})
    if out:
        with open(out, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "fraction", "M", "mean_T", "t_over_m_pct"])
            for r in rows:
                writer.writerow([r["n"], _fmt(r["fraction"]), r["M"],
                                 _fmt(r["mean_T"]), _fmt(r["t_over_m_pct"])])
    print(f"{'n':>3} {'M':>8} {'mean T':>10} {'T/M %':>8}")
    for r in rows:
        print(f"{r['n']:>3} {r['M']:>8} {r['mean_T']:>10.2f} "
              f"{r['t_over_m_pct']:>8.1f}")
    return rows


# ---------------------------------------------------------------------------
# Noise study
# ---------------------------------------------------------------------------

_NOISE_CHANNELS = ("depolarizing", "readout", "coherent")
_DEFAULT_LEVELS = {
    "depolarizing": (0.0, 1e-3, 5e-3, 1e-2),
    "readout": (0.0, 0.01, 0.03, 0.05),
    "coherent": (0.0, 0.02, 0.05, 0.1),
}


def _noise_for(channel: str, level: float) -> NoiseModel | None:
    if level == 0.0:
        return None
    if channel == "depolarizing":
        return NoiseModel(depolarizing_eps=level)
    if channel == "readout":
        return NoiseModel(readout_q=level)
    return NoiseModel(coherent_theta=level)


def cmd_noise_study(cfg: ExperimentConfig, channel: str, levels,
                    out: str | None = None,
                    gnuplot: str | None = None) -> list[dict]:
    """Sweep one noise channel; report estimated vs true preparation fidelity."""
    if channel not in _NOISE_CHANNELS:
        raise ValueError(f"unknown noise channel {channel!r}")
    if cfg.plan_mode == "observables" and channel in ("readout", "coherent"):
        raise ValueError(f"{channel} noise needs a settings-mode plan "
                         "(--fraction or --settings-target)")
    rows = []
    for level in levels:
        level_cfg = replace(cfg, noise=_noise_for(channel, level))
        level_cfg.validate()
        results = _run_trials(level_cfg, want_trace=False)
        for r in results:
            rows.append({"channel": channel, "level": level, "trial": r.trial,
                         "fidelity_estimate": r.fidelity_target,
                         "fidelity_true": r.fidelity_prep})
        est = np.array([r.fidelity_target for r in results])
        true = np.array([r.fidelity_prep for r in results])
        print(f"{channel} level={level:g}: estimate mean={est.mean():.6f} "
              f"[{est.min():.6f}, {est.max():.6f}]  true={true.mean():.6f}")
    if out:
        with open(out, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["channel", "level", "trial",
                             "fidelity_estimate", "fidelity_true"])
            for r in rows:
                writer.writerow([r["channel"], _fmt(r["level"]), r["trial"],
                                 _fmt(r["fidelity_estimate"]),
                                 _fmt(r["fidelity_true"])])
        if gnuplot:
            _write_gnuplot(gnuplot, out, channel)
    return rows


def _write_gnuplot(path: str, csv_path: str, channel: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            "set datafile separator ','\n"
            f"set title 'fidelity prediction under {channel} noise'\n"
            "set xlabel 'noise level'\nset ylabel 'fidelity'\nset key left bottom\n"
            f"plot '{csv_path}' every ::1 using 2:4 with points title 'estimated', \\\n"
            f"     '{csv_path}' every ::1 using 2:5 with points title 'true'\n")


# ---------------------------------------------------------------------------
# Configuration parsing
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "state": str, "qubits": int, "rank": int, "seed": int,
    "observables": int, "fraction": float, "settings_target": int,
    "shots": str, "algorithm": str, "alpha": float, "damping": float,
    "damping_enabled": bool, "max_iter": int, "denoiser": str,
    "normalize": bool, "eta": float, "mu": float, "rank_budget": int,
    "rel_tol": float, "noise": str, "trials": int, "out": str,
    "trace": str, "workers": int, "timing": bool,
}


def load_config_file(path: str) -> dict:
    """Parse a flat key=value configuration file with # comments."""
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            key = key.strip().replace("-", "_")
            val = val.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            caster = _CONFIG_KEYS[key]
            try:
                if caster is bool:
                    if val.lower() not in ("true", "false"):
                        raise ValueError
                    values[key] = val.lower() == "true"
                else:
                    values[key] = caster(val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value {val!r} for {key}")
    return values


def parse_shots(text) -> int | None:
    if text is None:
        return None
    s = str(text).strip().lower()
    if s in ("inf", "infinite", "infinity"):
        return None
    shots = int(s)
    if shots < 1:
        raise ValueError("shots must be positive or 'inf'")
    return shots


def parse_noise(text: str | None) -> NoiseModel | None:
    if text is None or not text.strip():
        return None
    kwargs = {}
    for item in text.split(","):
        key, _, val = item.strip().partition("=")
        key = key.strip().lower()
        if not val:
            raise ValueError(f"noise item {item!r} is not key=val")
        names = {"depolarizing": "depolarizing_eps", "readout": "readout_q",
                 "coherent": "coherent_theta"}
        if key not in names:
            raise ValueError(f"unknown noise key {key!r}")
        kwargs[names[key]] = float(val)
    return NoiseModel(**kwargs)


def _experiment_from(args, file_values: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()

    def pick(name, convert=None):
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            return convert(cli_val) if convert else cli_val
        if name in file_values:
            v = file_values[name]
            return convert(v) if convert else v
        return getattr(cfg, name)

    cfg.state = str(pick("state")).lower()
    cfg.qubits = pick("qubits")
    cfg.rank = pick("rank")
    cfg.seed = pick("seed")
    cfg.observables = pick("observables")
    cfg.fraction = pick("fraction")
    cfg.settings_target = pick("settings_target")
    cfg.shots = pick("shots", parse_shots) if (
        getattr(args, "shots", None) is not None or "shots" in file_values
    ) else cfg.shots
    cfg.algorithm = str(pick("algorithm")).lower()
    cfg.alpha = pick("alpha")
    cfg.damping = pick("damping")
    cfg.damping_enabled = pick("damping_enabled")
    cfg.max_iter = pick("max_iter")
    cfg.denoiser = str(pick("denoiser")).lower()
    cfg.normalize = pick("normalize")
    cfg.eta = pick("eta")
    cfg.mu = pick("mu")
    cfg.rank_budget = pick("rank_budget")
    cfg.rel_tol = pick("rel_tol")
    noise_text = getattr(args, "noise", None)
    if noise_text is None:
        noise_text = file_values.get("noise")
    cfg.noise = parse_noise(noise_text)
    cfg.trials = pick("trials")
    cfg.out = pick("out")
    cfg.trace = pick("trace")
    cfg.workers = pick("workers")
    cfg.timing = pick("timing")
    return cfg


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--state", choices=["ghz", "hadamard", "w", "random"])
    p.add_argument("--qubits", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--observables", type=int,
                   help="sample this many Pauli observables directly")
    p.add_argument("--fraction", type=float,
                   help="settings mode: cover this fraction of the d^2 observables")
    p.add_argument("--settings-target", type=int, dest="settings_target",
                   help="settings mode: cover this many observables")
    p.add_argument("--shots", help="shots per circuit (integer or 'inf')")
    p.add_argument("--algorithm", choices=["amp", "mifgd"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--damping", type=float)
    p.add_argument("--no-damping", dest="damping_enabled",
                   action="store_const", const=False)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--denoiser", choices=["svt", "psvt"])
    p.add_argument("--no-normalize", dest="normalize",
                   action="store_const", const=False)
    p.add_argument("--eta", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--rank-budget", type=int, dest="rank_budget")
    p.add_argument("--rel-tol", type=float, dest="rel_tol")
    p.add_argument("--noise", help="e.g. depolarizing=0.01,readout=0.02")
    p.add_argument("--trials", type=int)
    p.add_argument("--out", help="results CSV path")
    p.add_argument("--trace", help="per-iteration trace CSV path (amp only)")
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_const", const=True,
                   help="record wall time (breaks byte-identical output)")


def _parse_int_list(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part and not part.startswith("-"):
            lo, _, hi = part.partition("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _parse_float_list(text: str) -> list:
    return [float(p) for p in text.split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ampqst",
        description="Low-rank quantum state tomography with damped projected-SVT AMP")
    sub = parser.add_subparsers(dest="command", required=True)

    p_rec = sub.add_parser("reconstruct", help="simulate and reconstruct a state")
    _add_experiment_flags(p_rec)

    p_tab = sub.add_parser("settings-table",
                           help="settings needed per observable budget")
    p_tab.add_argument("--qubits", default="3-8",
                       help="comma list or range, e.g. 3-8 or 3,5")
    p_tab.add_argument("--fractions", default="0.25,0.5,0.75,1.0")
    p_tab.add_argument("--trials", type=int, default=100)
    p_tab.add_argument("--seed", type=int, default=0)
    p_tab.add_argument("--out")

    p_noise = sub.add_parser("noise-study",
                             help="fidelity prediction under channel noise")
    _add_experiment_flags(p_noise)
    p_noise.add_argument("--channel", required=True, choices=_NOISE_CHANNELS)
    p_noise.add_argument("--levels", help="comma-separated noise levels")
    p_noise.add_argument("--gnuplot", help="also write a gnuplot script")

    p_dump = sub.add_parser("dump-state", help="write a state as DMAT v1")
    p_dump.add_argument("--state", required=True,
                        choices=["ghz", "hadamard", "w", "random"])
    p_dump.add_argument("--qubits", type=int, required=True)
    p_dump.add_argument("--rank", type=int, default=1)
    p_dump.add_argument("--seed", type=int, default=0)
    p_dump.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "settings-table":
            cmd_settings_table(_parse_int_list(args.qubits),
                               _parse_float_list(args.fractions),
                               args.trials, args.seed, args.out)
            return 0
        if args.command == "dump-state":
            if args.state == "random":
                rho = make_random_state(args.qubits, args.rank, args.seed)
            else:
                rho = pure_density(make_named_state(args.state, args.qubits))
            write_density(args.out, rho)
            return 0
        file_values = load_config_file(args.config) if args.config else {}
        cfg = _experiment_from(args, file_values)
        if args.command == "reconstruct":
            cmd_reconstruct(cfg)
            return 0
        if args.command == "noise-study":
            levels = _parse_float_list(args.levels) if args.levels \
                else list(_DEFAULT_LEVELS[args.channel])
            cmd_noise_study(cfg, args.channel, levels, out=cfg.out,
                            gnuplot=args.gnuplot)
            return 0
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
