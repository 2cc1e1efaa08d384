"""Command-line experiment runner.

Subcommands
-----------
run          execute a preset or custom configuration and write all outputs
preset-list  show the built-in experiment presets
analyze      recompute statistics and overlays from a finished run directory

Every run writes to its output directory: ``trajectory.csv`` (per-iteration
statistics), ``y_samples.txt`` / ``s_samples.txt`` (terminal sample sets, one
value per line), ``y_hist.csv`` / ``s_hist.csv``, optional analytic overlay
tabulations (two-column CSV), ``config.txt`` (the fully resolved key=value
configuration, reusable via --config), and ``summary.txt`` (key=value report).
All randomness is controlled by --seed; two runs with identical flags produce
identical files.

Exit codes: 0 success, 1 configuration error, 2 numerical-invariant failure.
Errors are printed to stderr with the machine-readable prefix
``ERROR:<category>:``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erfinv

from . import fokker_planck as fp
from . import stats
from .model import (
    ConfigurationError,
    InvariantViolation,
    ModelParams,
    NumericsError,
    ValueFunctionSpec,
)
from .simulation import SimConfig, Trajectory, run

__all__ = ["ExperimentConfig", "preset", "preset_names", "classify_regime",
           "main", "entry"]

REGIMES = ("boom", "crash", "damped_to_SF", "oscillatory", "stationary", "none")

# The three test3 variants share everything but the interaction weights.
_TEST3_COMMON = dict(
    sigma2_opinion=5e-4, beta=6.0, zeta2_price=2.5e-3, t_C=0.02, gamma_f=0.1,
    S_F=20.0, dividend=0.004, k_discount=0.75, mu_freq=0.2, sigma_switch=0.8,
    herding_a=0.0, herding_b=1.0, gamma_diff=1.0,
    L=1.0, R0=0.0, r_exp=0.5, l_exp=0.25,
    N=50000, N_s=50000, dt=1.0, n_iters=2000, enable_switching=True,
    S0=20.0, rho_C0=0.5, chartist_init="symmetric_uniform", pin_mean=False,
    overlay_chartist=False, overlay_lognormal=False, overlay_pareto=False,
    hill_k_frac=0.05, bins_y=100, bins_s=100,
)

PRESETS: dict[str, dict] = {
    # pure chartists relaxing to the bimodal opinion equilibrium around a
    # constant price; the unstable Y=0 point is held by mean re-centering
    "test1": dict(
        alpha1=0.01, alpha2=0.01, sigma2_opinion=0.02, beta=0.1,
        zeta2_price=5e-4, t_C=1.0, gamma_f=1.3, S_F=20.0, dividend=0.0,
        k_discount=0.75, mu_freq=0.2, sigma_switch=0.8,
        herding_a=1.0, herding_b=0.0, gamma_diff=1.0,
        L=1.0, R0=0.0, r_exp=0.5, l_exp=0.25,
        N=50000, N_s=50000, dt=1.0, n_iters=1500, enable_switching=False,
        S0=10.0, rho_C0=1.0, chartist_init="symmetric_uniform", pin_mean=True,
        overlay_chartist=True, overlay_lognormal=True, overlay_pareto=False,
        hill_k_frac=0.05, bins_y=100, bins_s=100,
    ),
    # balanced fixed populations around the fundamental price: the price law
    # relaxes to the fat-tailed steady state
    "test2": dict(
        alpha1=0.01, alpha2=0.01, sigma2_opinion=0.02, beta=0.1,
        zeta2_price=0.13, t_C=1.0, gamma_f=1.3, S_F=20.0, dividend=0.0,
        k_discount=0.75, mu_freq=0.2, sigma_switch=0.8,
        herding_a=1.0, herding_b=0.0, gamma_diff=1.0,
        L=1.0, R0=0.0, r_exp=0.5, l_exp=0.25,
        N=50000, N_s=50000, dt=1.0, n_iters=1000, enable_switching=False,
        S0=20.0, rho_C0=0.5, chartist_init="equilibrium", pin_mean=True,
        overlay_chartist=False, overlay_lognormal=False, overlay_pareto=True,
        hill_k_frac=0.05, bins_y=100, bins_s=200,
    ),
    "test3a": dict(_TEST3_COMMON, alpha1=0.2, alpha2=0.55),
    "test3b": dict(_TEST3_COMMON, alpha1=0.2, alpha2=0.7),
    "test3c": dict(_TEST3_COMMON, alpha1=0.5, alpha2=0.4),
}

_PARAM_KEYS = ("alpha1", "alpha2", "sigma2_opinion", "beta", "zeta2_price",
               "t_C", "gamma_f", "S_F", "dividend", "k_discount", "mu_freq",
               "sigma_switch", "herding_a", "herding_b", "gamma_diff")
_VALUE_KEYS = ("L", "R0", "r_exp", "l_exp")
_FLOAT_KEYS = _PARAM_KEYS + _VALUE_KEYS + ("dt", "S0", "rho_C0", "hill_k_frac")
_INT_KEYS = ("N", "N_s", "n_iters", "seed", "bins_y", "bins_s", "n_streams")
_BOOL_KEYS = ("enable_switching", "pin_mean", "overlay_chartist",
              "overlay_lognormal", "overlay_pareto")
REQUIRED_KEYS = _FLOAT_KEYS \
    + tuple(k for k in _INT_KEYS if k not in ("seed", "n_streams")) \
    + _BOOL_KEYS + ("chartist_init",)


@dataclass
class ExperimentConfig:
    """Fully resolved experiment: simulation config plus analysis settings."""

    preset: str
    seed: int
    out_dir: Path | None
    sim: SimConfig
    overlay_chartist: bool
    overlay_lognormal: bool
    overlay_pareto: bool
    hill_k_frac: float
    bins_y: int
    bins_s: int


def preset_names() -> list[str]:
    return list(PRESETS) + ["custom"]


def preset(name: str, overrides: dict | None = None, seed: int = 0,
           out_dir=None) -> ExperimentConfig:
    """Build a complete experiment configuration from a named preset.

    ``custom`` starts from an empty table and therefore requires every field
    in ``overrides`` (typically loaded from a config file); named presets
    accept partial overrides.
    """
    if name in PRESETS:
        table = dict(PRESETS[name])
    elif name == "custom":
        table = {}
    else:
        raise ConfigurationError(
            f"unknown preset {name!r}; known: {', '.join(preset_names())}"
        )
    table.update(overrides or {})
    missing = [k for k in REQUIRED_KEYS if k not in table]
    if missing:
        raise ConfigurationError(
            f"preset {name!r} is missing required fields: {', '.join(sorted(missing))}"
        )
    params = ModelParams(**{k: table[k] for k in _PARAM_KEYS})
    value_spec = ValueFunctionSpec(L=table["L"], R0=table["R0"],
                                   r_exp=table["r_exp"], l_exp=table["l_exp"])
    init = table["chartist_init"]
    if init == "equilibrium":
        kappa = params.sigma2_opinion / (params.alpha1 + params.alpha2)
        eq = fp.ChartistEquilibrium(0.0, kappa)
        init = _EquilibriumInit(eq)
    sim = SimConfig(
        params=params, value_spec=value_spec, N=table["N"], N_s=table["N_s"],
        dt=table["dt"], n_iters=table["n_iters"], seed=int(table.get("seed", seed)),
        enable_switching=table["enable_switching"], S0=table["S0"],
        rho_C0=table["rho_C0"], chartist_init=init, pin_mean=table["pin_mean"],
        n_streams=int(table.get("n_streams", 1)),
    )
    return ExperimentConfig(
        preset=name, seed=sim.seed, out_dir=Path(out_dir) if out_dir else None,
        sim=sim,
        overlay_chartist=table["overlay_chartist"],
        overlay_lognormal=table["overlay_lognormal"],
        overlay_pareto=table["overlay_pareto"],
        hill_k_frac=table["hill_k_frac"],
        bins_y=table["bins_y"], bins_s=table["bins_s"],
    )


class _EquilibriumInit:
    """Draws initial propensities from the symmetric opinion equilibrium."""

    def __init__(self, eq: fp.ChartistEquilibrium):
        self.eq = eq

    def __call__(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.eq.sample(rng, n)

    def __str__(self) -> str:  # round-trips through config files
        return "equilibrium"


def classify_regime(traj: Trajectory, S_F: float) -> str:
    """Tag a trajectory as boom/crash/damped_to_SF/oscillatory/stationary.

    Tie-breaking follows the listed order; trajectories matching none of the
    patterns (e.g. slow drifts) are tagged 'none'.  Requires at least 200
    recorded iterations.
    """
    S = np.asarray(traj.S, dtype=float)
    n = S.size
    if n < 200:
        raise ValueError(f"trajectory too short to classify ({n} records < 200)")
    last_quarter = S[-(n // 4):]
    slope = np.polyfit(np.arange(last_quarter.size), last_quarter, 1)[0]
    if S[-1] < 0.05 * S_F and slope <= 0.0:
        return "crash"
    if S[-1] > 3.0 * S_F and slope >= 0.0:
        return "boom"
    signs = np.sign(S - S_F)
    signs = signs[signs != 0]
    crossings_all = int(np.count_nonzero(signs[1:] != signs[:-1]))
    last_decile = S[-(n // 10):]
    if crossings_all >= 1 and np.max(np.abs(last_decile - S_F)) / S_F < 0.02:
        return "damped_to_SF"
    half = S[n // 2:]
    signs_half = np.sign(half - S_F)
    signs_half = signs_half[signs_half != 0]
    crossings_half = int(np.count_nonzero(signs_half[1:] != signs_half[:-1]))
    if crossings_half >= 4 and np.max(np.abs(half - S_F)) >= 0.05 * S_F:
        return "oscillatory"
    if np.max(np.abs(S - S[0])) / S[0] < 0.01:
        return "stationary"
    return "none"


# --------------------------------------------------------------------------
# run outputs
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _write_keyvalues(path: Path, table: dict) -> None:
    with open(path, "w") as fh:
        for k, v in table.items():
            fh.write(f"{k}={_fmt(v)}\n")


def _config_table(config: ExperimentConfig) -> dict:
    p, v, s = config.sim.params, config.sim.value_spec, config.sim
    table = {k: getattr(p, k) for k in _PARAM_KEYS}
    table.update(L=v.L, R0=v.R0, r_exp=v.r_exp, l_exp=v.l_exp)
    table.update(N=s.N, N_s=s.N_s, dt=s.dt, n_iters=s.n_iters, seed=s.seed,
                 enable_switching=s.enable_switching, S0=s.S0, rho_C0=s.rho_C0,
                 chartist_init=str(s.chartist_init), pin_mean=s.pin_mean,
                 n_streams=s.n_streams, preset=config.preset,
                 overlay_chartist=config.overlay_chartist,
                 overlay_lognormal=config.overlay_lognormal,
                 overlay_pareto=config.overlay_pareto,
                 hill_k_frac=config.hill_k_frac,
                 bins_y=config.bins_y, bins_s=config.bins_s)
    return table


def _write_overlay(path: Path, x: np.ndarray, density: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("x,density\n")
        for a, b in zip(x, density):
            fh.write(f"{a:.17g},{b:.17g}\n")


def _analyze_outputs(config: ExperimentConfig, traj: Trajectory,
                     out: Path) -> dict:
    """Histograms, overlays and the summary table for a finished run."""
    p = config.sim.params
    summary: dict = {
        "preset": config.preset,
        "seed": config.sim.seed,
        "N": config.sim.N,
        "N_s": config.sim.N_s,
        "n_iters": config.sim.n_iters,
        "dt": config.sim.dt,
        "terminal_S": float(traj.S[-1]),
        "terminal_Y": float(traj.Y[-1]),
        "terminal_rho_C": float(traj.rho_C[-1]),
        "terminal_rho_F": float(traj.rho_F[-1]),
        "terminal_E": float(traj.E[-1]),
        "interaction_rejections": traj.n_rejected,
        "switches_to_fundamentalist": traj.n_switches_cf,
        "switches_to_chartist": traj.n_switches_fc,
        "min_price_terminal": float(traj.s_final.min()) if traj.s_final.size else 0.0,
        "max_abs_y_terminal": float(np.abs(traj.y_final).max()) if traj.y_final.size else 0.0,
        "rho_sum_exact": bool(np.all(traj.rho_C + traj.rho_F == 1.0)),
        "n_agents_constant": bool(np.all((traj.n_chartists >= 0)
                                         & (traj.n_chartists <= traj.N))),
    }

    if traj.y_final.size:
        y_hist = stats.Histogram.from_samples(traj.y_final, bins=config.bins_y,
                                              range=(-1.0, 1.0))
        y_hist.to_csv(out / "y_hist.csv")
    else:
        y_hist = None
    s_hist = stats.Histogram.from_samples(traj.s_final, bins=config.bins_s)
    s_hist.to_csv(out / "s_hist.csv")

    if len(traj) >= 200:
        summary["regime"] = classify_regime(traj, p.S_F)

    if config.overlay_chartist and y_hist is not None:
        kappa = p.sigma2_opinion / (p.alpha1 + p.alpha2)
        eq = fp.ChartistEquilibrium(0.0, kappa)
        grid = np.linspace(-1.0, 1.0, 801)
        _write_overlay(out / "chartist_fp.csv", grid, eq(grid))
        summary["kappa"] = kappa
        summary["l1_chartist"] = stats.l1_density_distance(y_hist, eq)

    if config.overlay_lognormal:
        E_T = float(traj.E[-1])
        S_ref = config.sim.S0
        if E_T > S_ref * S_ref:
            qs = np.linspace(1e-4, 1.0 - 1e-4, 801)
            m, v = fp.lognormal_log_params(S_ref, E_T)
            grid = np.exp(m + np.sqrt(2.0 * v) * erfinv(2.0 * qs - 1.0))
            _write_overlay(out / "lognormal_fp.csv", grid,
                           fp.lognormal_price_density(grid, S_ref, E_T))
            summary["lognormal_S_ref"] = S_ref
            summary["lognormal_E"] = E_T
            summary["ks_lognormal"] = stats.ks_statistic(
                traj.s_final, lambda s: fp.lognormal_price_cdf(s, S_ref, E_T))
            fit_m, fit_v = stats.lognormal_fit(traj.s_final)
            summary["log_mean_fit"] = fit_m
            summary["log_var_fit"] = fit_v

    if config.overlay_pareto:
        fpp = fp.FokkerPlanckParams.from_model(p, config.sim.dt)
        rho_F_term = float(traj.rho_F[-1])
        if fpp.nu > 0.0 and rho_F_term > 0.0:
            state = fp.pareto_steady_state(fpp, rho_F_term, p.gamma_f, p.S_F)
            grid = np.geomspace(max(1e-3, float(np.quantile(traj.s_final, 1e-3))),
                                float(traj.s_final.max()), 801)
            _write_overlay(out / "pareto_fp.csv", grid, state.pdf(grid))
            summary["mu_exp"] = state.mu_exp
            # diagnostic plateau scan over k in [1%, 10%] of the sample size
            scan = stats.hill_plateau(traj.s_final)
            with open(out / "hill_scan.csv", "w") as fh:
                fh.write("k,estimate\n")
                for k, est in zip(scan.k_values, scan.estimates):
                    fh.write(f"{int(k)},{est:.17g}\n")
            summary["hill_plateau_found"] = scan.plateau_found
            summary["hill_plateau_mean"] = float(scan.estimates.mean())
            k_default = int(config.hill_k_frac * traj.s_final.size)
            summary["hill_k"] = k_default
            summary["hill_estimate"] = stats.hill_tail_index(traj.s_final, k_default)
            summary["price_mean"] = float(traj.s_final.mean())
            summary["price_mean_rel_err"] = abs(summary["price_mean"] - p.S_F) / p.S_F

    _write_keyvalues(out / "summary.txt", summary)
    return summary


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute a configured experiment, write all outputs, return the summary."""
    out = config.out_dir
    if out is None:
        raise ConfigurationError("an output directory is required (--out)")
    out.mkdir(parents=True, exist_ok=True)
    _write_keyvalues(out / "config.txt", _config_table(config))
    traj = run(config.sim)
    traj.to_csv(out / "trajectory.csv")
    traj.write_samples(out / "y_samples.txt", out / "s_samples.txt")
    return _analyze_outputs(config, traj, out)


# --------------------------------------------------------------------------
# config files and argument parsing
# --------------------------------------------------------------------------

def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "on", "yes"):
            return True
        if raw.lower() in ("false", "0", "off", "no"):
            return False
        raise ConfigurationError(f"cannot parse boolean {key}={raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def load_config_file(path) -> dict:
    """Read a flat key=value config file (# starts a comment)."""
    table: dict = {}
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    for ln, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{p}:{ln}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key == "preset" or key == "out":
            continue
        table[key] = _parse_value(key, raw)
    return table


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; remap to the configuration
    # error code and keep the machine-readable prefix
    def error(self, message):
        print(f"ERROR:config:{message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="kinmarket",
                     description="Kinetic Monte Carlo market experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run a preset or custom configuration")
    runp.add_argument("--preset", default="custom",
                      help=f"one of: {', '.join(preset_names())}")
    runp.add_argument("--seed", type=int, default=0, help="RNG seed")
    runp.add_argument("--out", required=True, help="output directory")
    runp.add_argument("--config", help="key=value config file (overrides preset)")
    runp.add_argument("--iters", type=int, help="override iteration count")
    runp.add_argument("--n-agents", type=int, help="override agent count N")
    runp.add_argument("--n-price-samples", type=int, help="override price sample count")
    runp.add_argument("--zeta2", type=float, help="override price-noise variance")
    runp.add_argument("--pin-mean", choices=["on", "off"],
                      help="override mean re-centering")
    runp.add_argument("--parallel", type=int, metavar="N_STREAMS",
                      help="use N_STREAMS per-worker RNG streams")

    sub.add_parser("preset-list", help="list available presets")

    ana = sub.add_parser("analyze", help="recompute statistics for a run directory")
    ana.add_argument("--out", required=True, help="directory of a finished run")
    return parser


def _cmd_run(args) -> int:
    overrides: dict = {}
    if args.config:
        overrides.update(load_config_file(args.config))
    if args.iters is not None:
        overrides["n_iters"] = args.iters
    if args.n_agents is not None:
        overrides["N"] = args.n_agents
    if args.n_price_samples is not None:
        overrides["N_s"] = args.n_price_samples
    if args.zeta2 is not None:
        overrides["zeta2_price"] = args.zeta2
    if args.pin_mean is not None:
        overrides["pin_mean"] = args.pin_mean == "on"
    if args.parallel is not None:
        overrides["n_streams"] = args.parallel
    overrides["seed"] = args.seed
    config = preset(args.preset, overrides, seed=args.seed, out_dir=args.out)
    summary = run_experiment(config)
    for k, v in summary.items():
        print(f"{k}={_fmt(v)}")
    return 0


def _cmd_preset_list() -> int:
    header = f"{'name':<8} {'N':>6} {'iters':>6} {'switching':>9}  key parameters"
    print(header)
    for name, tab in PRESETS.items():
        keys = (f"alpha1={tab['alpha1']} alpha2={tab['alpha2']} "
                f"beta={tab['beta']} zeta2={tab['zeta2_price']} "
                f"rho_C0={tab['rho_C0']}")
        print(f"{name:<8} {tab['N']:>6} {tab['n_iters']:>6} "
              f"{str(tab['enable_switching']):>9}  {keys}")
    print("custom   (requires a full --config file)")
    return 0


def _cmd_analyze(args) -> int:
    out = Path(args.out)
    cfg_path = out / "config.txt"
    if not cfg_path.exists():
        raise ConfigurationError(f"{out} does not contain a config.txt")
    table = load_config_file(cfg_path)
    raw = dict(
        (ln.split("=", 1) for ln in cfg_path.read_text().splitlines() if "=" in ln)
    )
    config = preset(raw.get("preset", "custom"), table,
                    seed=int(table.get("seed", 0)), out_dir=out)
    y = np.loadtxt(out / "y_samples.txt", ndmin=1)
    s = np.loadtxt(out / "s_samples.txt", ndmin=1)
    rows = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1, ndmin=2)
    n = rows.shape[0]
    traj = Trajectory(
        t=rows[:, 1], S=rows[:, 2], Y=rows[:, 3], rho_C=rows[:, 4],
        rho_F=rows[:, 5], E=rows[:, 6],
        n_chartists=np.round(rows[:, 4] * config.sim.N).astype(np.int64),
        max_abs_y=np.full(n, float(np.abs(y).max()) if y.size else 0.0),
        min_price=np.full(n, float(s.min()) if s.size else 0.0),
        N=config.sim.N, dt=config.sim.dt, y_final=y, s_final=s,
    )
    summary = _analyze_outputs(config, traj, out)
    for k, v in summary.items():
        print(f"{k}={_fmt(v)}")
    return 0


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "preset-list":
            return _cmd_preset_list()
        if args.command == "analyze":
            return _cmd_analyze(args)
        return 1
    except SystemExit as exc:  # argparse errors already printed with prefix
        code = exc.code if isinstance(exc.code, int) else 0
        return code
    except (ConfigurationError, ValueError) as exc:
        print(f"ERROR:config:{exc}", file=sys.stderr)
        return 1
    except (InvariantViolation, NumericsError, fp.PriceCollapse) as exc:
        print(f"ERROR:numerical:{exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
