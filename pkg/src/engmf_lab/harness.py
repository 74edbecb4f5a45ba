"""Twin-experiment orchestration: truth/observation generation, filter runs,
RMSE aggregation over seeds and particle counts, config parsing, CSV output.

The whole pipeline is a pure function of (config, seeds): per-run RNG streams
are derived from (seed, method, particle count), so adding methods or particle
counts to a sweep never perturbs existing rows.  The environment variable
``ENGMF_LAB_SEED_OFFSET`` shifts all seeds for independent replications.
"""

import configparser
import csv
import hashlib
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adapt import EMConfig, aengmf_step, default_theta
from .baselines import enkf_step, sir_step
from .covparam import (assemble_kernel, bandwidth_family, cyclic_distance_matrix,
                       empirical_covariance, localization_weights, localized_family,
                       rblw_shrinkage, shrinkage_family, silverman_bandwidth,
                       theta_from_physical, physical_parameters)
from .dynamics import (l63_distance_observation, l96_pointwise_observation,
                       lorenz63_critical_point, lorenz63_model, lorenz96_model,
                       rk4_integrate)
from .engmf import engmf_analysis, gmm_resample, posterior_mean
from .errors import (ConfigError, DegenerateLikelihoodError, DivergenceError,
                     ObservationDegeneracyError, SingularKernelError)
from .gmm import Ensemble, categorical_draw

SEED_OFFSET_ENV = "ENGMF_LAB_SEED_OFFSET"
_TRUTH_STREAM = 0x7E57ED
_FILTER_STREAM = 0xF117E6

METHODS = ("engmf", "aengmf", "enkf", "lenkf", "sir")
FAMILIES = ("bandwidth", "shrinkage", "localized")


@dataclass(frozen=True)
class FilterSpec:
    """One named filter configuration (a column of the aggregate table)."""

    method: str
    family: Optional[str] = None
    silverman_scale: float = 1.0
    radius: float = 4.0
    gamma0: float = 0.5
    rejuvenation: float = 0.2

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError("unknown method %r" % self.method)
        if self.method in ("engmf", "aengmf"):
            if self.family not in FAMILIES:
                raise ConfigError("method %r needs family in %s" % (self.method, (FAMILIES,)))
        elif self.family is not None:
            raise ConfigError("method %r takes no family" % self.method)
        if self.silverman_scale <= 0 or self.radius <= 0 or not (0 < self.gamma0 < 1):
            raise ConfigError("filter parameters out of range")
        if self.rejuvenation < 0:
            raise ConfigError("rejuvenation bandwidth cannot be negative")


@dataclass(frozen=True)
class EMSettings:
    """Raw [em] values; batch = 0 means match the ensemble size."""

    outer: int = 5
    inner: int = 1
    batch: int = 0
    alpha: float = 1.0
    clip: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """A full twin-experiment description (plain data; safely picklable)."""

    model_name: str
    assimilation_interval: float
    obs_name: str
    obs_variance: float
    steps: int
    spinup: int
    seeds: tuple
    particles: tuple
    filters: dict
    model_params: dict = field(default_factory=dict)
    internal_step: float = 0.01
    omega: int = 5
    em: Optional[EMSettings] = None
    workers: int = 1

    def __post_init__(self):
        if self.spinup >= self.steps or self.spinup < 0:
            raise ConfigError("need 0 <= spinup < steps")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be distinct and nonempty")
        if not self.particles or any(n < 2 for n in self.particles):
            raise ConfigError("particle counts must be >= 2")
        if not self.filters:
            raise ConfigError("at least one [filter.NAME] section is required")
        if self.em is None and any(f.method == "aengmf" for f in self.filters.values()):
            raise ConfigError("[em] section is required when an aengmf filter is configured")


@dataclass
class RunRecord:
    """Outcome of one (method, N, seed) cell."""

    method: str
    n_particles: int
    seed: int
    rmse: Optional[float]
    theta_summary: dict
    wall_time: float
    diverged: bool


# ---------------------------------------------------------------------------
# config file parsing

_SECTION_KEYS = {
    "model": {"name", "dt", "internal_step", "sigma", "rho", "beta", "size", "forcing"},
    "observation": {"name", "variance", "omega"},
    "experiment": {"steps", "spinup", "seeds", "particles", "workers"},
    "em": {"outer", "inner", "batch", "alpha", "clip"},
}
_FILTER_KEYS = {"method", "family", "silverman_scale", "radius", "gamma0", "rejuvenation"}


def parse_config(path):
    """Parse and validate a `key = value` / `[section]` experiment file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise ConfigError("cannot read config file %r" % str(path))

    for section in parser.sections():
        if section.startswith("filter."):
            allowed = _FILTER_KEYS
        elif section in _SECTION_KEYS:
            allowed = _SECTION_KEYS[section]
        else:
            raise ConfigError("unknown section [%s]" % section)
        unknown = set(parser[section]) - allowed
        if unknown:
            raise ConfigError("unknown keys %s in [%s]" % (sorted(unknown), section))

    try:
        model = parser["model"]
        observation = parser["observation"]
        experiment = parser["experiment"]
    except KeyError as exc:
        raise ConfigError("missing required section %s" % exc) from exc

    model_name = _require(model, "name", "model")
    if model_name not in ("lorenz63", "lorenz96"):
        raise ConfigError("unknown model %r" % model_name)
    model_params = {}
    for key in ("sigma", "rho", "beta", "forcing"):
        if key in model:
            model_params[key] = float(model[key])
    if "size" in model:
        model_params["size"] = int(model["size"])

    obs_name = _require(observation, "name", "observation")
    if obs_name not in ("l63_distance", "l96_pointwise"):
        raise ConfigError("unknown observation %r" % obs_name)

    filters = {}
    for section in parser.sections():
        if not section.startswith("filter."):
            continue
        name = section[len("filter."):]
        if not name:
            raise ConfigError("empty filter name in [%s]" % section)
        body = parser[section]
        try:
            filters[name] = FilterSpec(
                method=_require(body, "method", section),
                family=body.get("family") or None,
                silverman_scale=float(body.get("silverman_scale", 1.0)),
                radius=float(body.get("radius", 4.0)),
                gamma0=float(body.get("gamma0", 0.5)),
                rejuvenation=float(body.get("rejuvenation", 0.2)),
            )
        except ValueError as exc:
            raise ConfigError("bad value in [%s]: %s" % (section, exc)) from exc

    em = None
    if "em" in parser:
        body = parser["em"]
        em = EMSettings(outer=int(body.get("outer", 5)), inner=int(body.get("inner", 1)),
                        batch=int(body.get("batch", 0)), alpha=float(body.get("alpha", 1.0)),
                        clip=float(body.get("clip", 1.0)))

    try:
        return ExperimentConfig(
            model_name=model_name,
            assimilation_interval=float(_require(model, "dt", "model")),
            obs_name=obs_name,
            obs_variance=float(_require(observation, "variance", "observation")),
            steps=int(_require(experiment, "steps", "experiment")),
            spinup=int(_require(experiment, "spinup", "experiment")),
            seeds=tuple(int(s) for s in _require(experiment, "seeds", "experiment").split()),
            particles=tuple(int(s) for s in _require(experiment, "particles", "experiment").split()),
            filters=filters,
            model_params=model_params,
            internal_step=float(model.get("internal_step", 0.01)),
            omega=int(observation.get("omega", 5)),
            em=em,
            workers=int(experiment.get("workers", 1)),
        )
    except ValueError as exc:
        raise ConfigError("bad config value: %s" % exc) from exc


def _require(section, key, name):
    if key not in section:
        raise ConfigError("missing key %r in [%s]" % (key, name))
    return section[key]


# ---------------------------------------------------------------------------
# model / observation construction

def build_model(cfg):
    p = cfg.model_params
    if cfg.model_name == "lorenz63":
        return lorenz63_model(sigma=p.get("sigma", 10.0), rho=p.get("rho", 28.0),
                              beta=p.get("beta", 8.0 / 3.0),
                              assimilation_interval=cfg.assimilation_interval,
                              internal_step=cfg.internal_step)
    return lorenz96_model(size=p.get("size", 40), forcing=p.get("forcing", 8.0),
                          assimilation_interval=cfg.assimilation_interval,
                          internal_step=cfg.internal_step)


def build_observation(cfg, model):
    if cfg.obs_name == "l63_distance":
        p = model.params
        return l63_distance_observation(variance=cfg.obs_variance, sigma=p["sigma"],
                                        rho=p["rho"], beta=p["beta"])
    return l96_pointwise_observation(size=model.dimension, omega=cfg.omega,
                                     variance=cfg.obs_variance)


def seed_offset():
    raw = os.environ.get(SEED_OFFSET_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError("%s must be an integer, got %r" % (SEED_OFFSET_ENV, raw)) from exc


def _method_digest(name):
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")


def truth_stream(seed):
    return np.random.default_rng(np.random.SeedSequence([_TRUTH_STREAM, seed]))


def filter_stream(seed, method_name, n_particles):
    entropy = [_FILTER_STREAM, seed, n_particles, _method_digest(method_name)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


# ---------------------------------------------------------------------------
# twin data and metrics

def _initial_truth(model, rng):
    if "sigma" in model.params:
        return lorenz63_critical_point(model.params["sigma"], model.params["rho"],
                                       model.params["beta"]) + rng.standard_normal(3)
    if "forcing" in model.params:
        x = np.full(model.dimension, model.params["forcing"])
        x[0] += 0.01 * rng.standard_normal()
        return x
    return rng.standard_normal(model.dimension)


def _draw_obs_noise(obs, rng):
    k = int(categorical_draw(np.log(obs.noise_weights), rng, 1)[0])
    z = np.linalg.cholesky(obs.noise_covariances[k]) @ rng.standard_normal(obs.obs_dimension)
    return obs.noise_offsets[:, k] + z


def generate_twin_data(model, obs, steps, rng, burn_in_steps=500):
    """Simulate a truth trajectory and noisy observations of it.

    The initial condition is integrated for ``burn_in_steps`` assimilation
    intervals before recording; a divergent burn-in is retried with a fresh
    initial draw (up to 5 attempts).  Returns (truth n x T, observations
    T x m, initial_state), where the initial state is the post-burn-in truth
    from which the first propagation starts.
    """
    for attempt in range(5):
        try:
            x = rk4_integrate(model, _initial_truth(model, rng),
                              burn_in_steps * model.assimilation_interval)
            break
        except DivergenceError:
            if attempt == 4:
                raise
    initial_state = x.copy()
    truth = np.empty((model.dimension, steps))
    observations = np.empty((steps, obs.obs_dimension))
    for i in range(steps):
        x = rk4_integrate(model, x, model.assimilation_interval)
        truth[:, i] = x
        observations[i] = np.asarray(obs.operator(x)) + _draw_obs_noise(obs, rng)
    return truth, observations, initial_state


def spatiotemporal_rmse(means, truth, spinup):
    """Root mean square error over states and post-spinup times."""
    means = np.asarray(means, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if means.shape != truth.shape:
        raise ValueError("means and truth shapes differ")
    if not 0 <= spinup < truth.shape[1]:
        raise ValueError("need 0 <= spinup < steps")
    window = means[:, spinup:] - truth[:, spinup:]
    if not np.all(np.isfinite(window)):
        raise DivergenceError("non-finite state estimates in the scoring window")
    return float(np.sqrt(np.mean(window**2)))


# ---------------------------------------------------------------------------
# single runs and sweeps

def _kernel_family(spec, dimension):
    if spec.family == "bandwidth":
        return bandwidth_family()
    if spec.family == "shrinkage":
        return shrinkage_family()
    return localized_family(cyclic_distance_matrix(dimension))


def _fixed_theta(spec, family, ens):
    """Per-step theta for the non-adaptive EnGMF variants."""
    beta2 = spec.silverman_scale * silverman_bandwidth(ens.size, ens.dimension)
    if spec.family == "bandwidth":
        return theta_from_physical(family, beta2)
    if spec.family == "shrinkage":
        p = empirical_covariance(ens)
        gamma = rblw_shrinkage(p, np.diag(np.diag(p)), ens.size)
        gamma = min(max(gamma, 1e-6), 1.0 - 1e-6)
        return theta_from_physical(family, beta2, gamma=gamma)
    return theta_from_physical(family, beta2, radius=spec.radius)


def run_filter_trajectory(cfg, method_name, n_particles, seed):
    """Run one filter over one twin experiment and score it.

    Any filtering failure (divergence, singular kernel, degenerate
    likelihood) produces a flagged record rather than an exception.
    """
    if method_name not in cfg.filters:
        raise ConfigError("no [filter.%s] section in config" % method_name)
    spec = cfg.filters[method_name]
    model = build_model(cfg)
    obs = build_observation(cfg, model)
    eff_seed = seed + seed_offset()

    truth, observations, initial_state = generate_twin_data(
        model, obs, cfg.steps, truth_stream(eff_seed))
    rng = filter_stream(eff_seed, method_name, n_particles)

    started = time.perf_counter()
    ens = Ensemble.uniform(initial_state[:, None]
                           + rng.standard_normal((model.dimension, n_particles)))
    family = theta = em_cfg = taper = None
    if spec.method in ("engmf", "aengmf"):
        family = _kernel_family(spec, model.dimension)
    if spec.method == "aengmf":
        beta2 = spec.silverman_scale * silverman_bandwidth(n_particles, model.dimension)
        theta = theta_from_physical(family, beta2, gamma=spec.gamma0, radius=spec.radius)
        batch = cfg.em.batch if cfg.em.batch > 0 else n_particles
        em_cfg = EMConfig(cfg.em.outer, cfg.em.inner, batch, cfg.em.alpha, cfg.em.clip)
    if spec.method == "lenkf":
        taper = localization_weights(cyclic_distance_matrix(model.dimension), spec.radius)

    means = np.empty((model.dimension, cfg.steps))
    theta_track = []
    diverged = False
    try:
        for i in range(cfg.steps):
            particles = rk4_integrate(model, ens.particles, model.assimilation_interval)
            ens = Ensemble(particles, ens.log_weights, i + 1)
            y = observations[i]
            if spec.method == "engmf":
                step_theta = _fixed_theta(spec, family, ens)
                analysis = engmf_analysis(ens, assemble_kernel(family, step_theta, ens), obs, y)
                means[:, i] = posterior_mean(analysis)
                ens = gmm_resample(analysis, rng, n_particles, time_index=i + 1)
                theta_track.append(physical_parameters(family, step_theta))
            elif spec.method == "aengmf":
                ens, theta, analysis, _ = aengmf_step(ens, obs, y, family, theta, em_cfg, rng)
                means[:, i] = posterior_mean(analysis)
                theta_track.append(physical_parameters(family, theta))
            elif spec.method in ("enkf", "lenkf"):
                ens = enkf_step(ens, obs, y, rng, localization=taper)
                means[:, i] = ens.particles.mean(axis=1)
            else:
                ens = sir_step(ens, obs, y, rng, rejuvenation=spec.rejuvenation)
                means[:, i] = ens.particles.mean(axis=1)
        rmse = spatiotemporal_rmse(means, truth, cfg.spinup)
    except (DivergenceError, SingularKernelError, ObservationDegeneracyError,
            DegenerateLikelihoodError):
        diverged = True
        rmse = None

    summary = {}
    if theta_track:
        for key in theta_track[0]:
            summary[key] = float(np.mean([t[key] for t in theta_track]))
    return RunRecord(method_name, n_particles, seed, rmse, summary,
                     time.perf_counter() - started, diverged)


def _run_cell(args):
    return run_filter_trajectory(*args)


def sweep_cells(cfg):
    """Deterministic (method, N, seed) execution order of a sweep."""
    return [(name, n, seed) for name in cfg.filters
            for n in cfg.particles for seed in cfg.seeds]


def run_sweep(cfg, out_dir, workers=None):
    """Run the full methods x particles x seeds grid and write both CSVs.

    Returns (long_csv_path, aggregate_csv_path).  Diverged cells appear in
    the long CSV with an empty rmse and are excluded from aggregate means.
    """
    cells = sweep_cells(cfg)
    n_workers = workers if workers is not None else cfg.workers
    jobs = [(cfg, name, n, seed) for name, n, seed in cells]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(_run_cell, jobs))
    else:
        records = [_run_cell(job) for job in jobs]

    os.makedirs(out_dir, exist_ok=True)
    runs_path = os.path.join(out_dir, "runs.csv")
    agg_path = os.path.join(out_dir, "aggregate.csv")
    write_runs_csv(runs_path, records)
    write_aggregate_csv(agg_path, aggregate_records(records, cfg))
    return runs_path, agg_path


def write_runs_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["method", "N", "seed", "rmse", "diverged"])
        for rec in records:
            writer.writerow([rec.method, rec.n_particles, rec.seed,
                             "" if rec.rmse is None else repr(rec.rmse),
                             "true" if rec.diverged else "false"])


def aggregate_records(records, cfg=None, methods=None, particles=None):
    """Mean RMSE over seeds per (method, N); header row first.

    Column order follows the config's filter order when a config is given.
    """
    if cfg is not None:
        methods = list(cfg.filters)
        particles = list(cfg.particles)
    if methods is None:
        methods = sorted({r.method for r in records})
    if particles is None:
        particles = sorted({r.n_particles for r in records})
    table = [["N"] + list(methods)]
    for n in particles:
        row = [str(n)]
        for method in methods:
            values = [r.rmse for r in records
                      if r.method == method and r.n_particles == n and not r.diverged]
            row.append(repr(float(np.mean(values))) if values else "")
        table.append(row)
    return table


def write_aggregate_csv(path, table):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerows(table)


def read_runs_csv(path):
    """Load a long-format runs.csv back into RunRecord objects."""
    records = []
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            diverged = row["diverged"] == "true"
            rmse = None if row["rmse"] == "" else float(row["rmse"])
            records.append(RunRecord(row["method"], int(row["N"]), int(row["seed"]),
                                     rmse, {}, 0.0, diverged))
    return records
