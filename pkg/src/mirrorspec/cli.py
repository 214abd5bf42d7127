"""Command-line surface: reproducible pipelines over frame stacks.

Every command reads a :class:`~mirrorspec.config.RunConfig` (named profile or
JSON path), writes its outputs under ``--out`` with the config hash embedded
in filenames, and drops a machine-readable run log (parameters, library
versions, wall time).  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import json
import platform
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .evaluate import ModelSpec, build_pipeline, run_comparison
from .galerkin import DiffusivityField, VelocityField
from .grid import Field, flip_field
from .gridstack import GridStack, StackError, load_stack, render_heatmap, save_stack
from .kalman import (
    FilterError,
    NoiseParams,
    default_init,
    estimate_variances,
    kf_filter,
    kf_forecast,
)
from .motion import diffusivity_from_velocity, estimate_velocity
from .preprocess import reflectivity_to_rain
from .simulate import simulate_advection, synthetic_storm_stack

NUMERICAL_ERRORS = (FilterError, np.linalg.LinAlgError, FloatingPointError)


class _Run:
    """Collects outputs and writes the run log on success."""

    def __init__(self, command: str, config: RunConfig, out: str):
        self.command = command
        self.config = config
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.started = time.time()

    def path(self, stem: str, suffix: str = "") -> Path:
        p = self.out / f"{stem}-{self.config.hash}{suffix}"
        self.outputs.append(str(p))
        return p

    def finish(self, **extra):
        log = {
            "command": self.command,
            "config_hash": self.config.hash,
            "config": self.config.data,
            "outputs": self.outputs,
            "wall_time_s": round(time.time() - self.started, 3),
            "versions": {
                "mirrorspec": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
            **extra,
        }
        path = self.out / f"runlog-{self.command}-{self.config.hash}.json"
        path.write_text(json.dumps(log, indent=2, default=str) + "\n")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _exits_on_config_error(fn):
    """Map configuration problems raised anywhere in a command to exit 2."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, StackError) as exc:
            _fail(2, str(exc))

    return wrapper


def _load_config(source: str) -> RunConfig:
    try:
        return RunConfig.load(source)
    except ConfigError as exc:
        _fail(2, str(exc))


def _load_input_stack(path: str) -> GridStack:
    try:
        return load_stack(path)
    except (StackError, ValueError) as exc:
        _fail(2, str(exc))


def _generate_dataset(cfg: RunConfig, seed=None, steps=None) -> GridStack:
    if cfg.data["dataset"] == "storm":
        storm = cfg.data.get("storm", {})
        frames = synthetic_storm_stack(
            cfg.grid(),
            steps=steps or storm.get("steps", 10),
            seed=seed if seed is not None else cfg.data["seed"],
            n_blobs=storm.get("n_blobs", 3),
            peak_dbz=storm.get("peak_dbz", 42.0),
        )
        delta = 1.0
    else:
        sim = simulate_advection(cfg.simulation(seed=seed, steps=steps))
        frames, delta = sim.fields, sim.config.delta
    return GridStack.from_fields(
        frames, delta=delta, units=cfg.data["units"], config_hash=cfg.hash
    )


def _velocity_for(cfg: RunConfig, stack: GridStack) -> VelocityField:
    mode = cfg.data["velocity"]["mode"]
    if mode == "constant":
        vx, vy = cfg.data["velocity"]["value"]
        return VelocityField.constant(stack.grid, vx, vy)
    if mode == "estimate":
        if stack.steps < 2:
            _fail(2, "velocity estimation needs at least 2 frames")
        return estimate_velocity(stack.frames[0], stack.frames[1], cfg.motion())
    _fail(2, f"config.velocity.mode must be 'constant' or 'estimate', got {mode!r}")


def _model_spec_from_flags(cfg: RunConfig, k, flip, window) -> ModelSpec:
    k = k if k is not None else cfg.data["truncation"]["k"]
    label = f"{'window-' if window else ''}{'flip' if flip else 'direct'}{k}"
    return ModelSpec(label=label, k=k, flip=flip, window=window)


def _filter_pipeline(cfg: RunConfig, stack: GridStack, spec: ModelSpec, train_steps=None):
    vel = _velocity_for(cfg, stack)
    dif = None
    if cfg.data["velocity"]["mode"] == "estimate":
        stride = cfg.motion().stride
        dif = diffusivity_from_velocity(vel, stride / stack.grid.n1, stride / stack.grid.n2)
    pipeline = build_pipeline(
        stack.grid, spec, velocity=vel, diffusivity=dif, delta=stack.delta,
        variant=cfg.flip_variant(),
        k_star_factor=cfg.data["truncation"]["k_star_factor"],
    )
    train = train_steps if train_steps is not None else stack.steps
    obs = pipeline.observations(stack.frames[:train])
    fit_cfg = cfg.data["fit"]
    configured = cfg.noise()
    if configured is not None or not fit_cfg["enabled"]:
        noise = configured if configured is not None else NoiseParams(1e-3, 1e-3)
        fit = None
    else:
        fit = estimate_variances(
            pipeline.factory, obs,
            grid_alpha=tuple(fit_cfg["grid"]), grid_beta=tuple(fit_cfg["grid"]),
            max_evaluations=fit_cfg["budget"],
        )
        noise = fit.params
    model = pipeline.factory(noise)
    mean0, cov0 = default_init(obs[0], noise)
    result = kf_filter(model, obs, mean0, cov0, store_covariances=False)
    return pipeline, model, result, noise, fit


@click.group()
@click.version_option(__version__)
def main():
    """Spectral spatio-temporal modeling with mirror-extension Gibbs suppression."""


@main.command()
@click.option("--config", default="advection", help="profile name or JSON path")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.option("--steps", type=int, default=None, help="override the number of steps")
@_exits_on_config_error
def simulate(config, out, seed, steps):
    """Generate a synthetic dataset and save it as a frame stack."""
    cfg = _load_config(config)
    run = _Run("simulate", cfg, out)
    try:
        stack = _generate_dataset(cfg, seed=seed, steps=steps)
        save_stack(stack, run.path("stack-simulated"))
    except NUMERICAL_ERRORS as exc:
        _fail(3, f"simulation failed: {exc}")
    run.finish(steps=stack.steps)
    click.echo(f"wrote {stack.steps} frames under {run.outputs[0]}")


@main.command()
@click.argument("stack_path", type=click.Path(exists=True))
@click.option("--config", default="advection")
@click.option("--out", required=True, type=click.Path())
@_exits_on_config_error
def flip(stack_path, config, out):
    """Mirror-extend every frame of a stack onto the doubled grid."""
    cfg = _load_config(config)
    stack = _load_input_stack(stack_path)
    run = _Run("flip", cfg, out)
    variant = cfg.flip_variant()
    flipped = GridStack.from_fields(
        [flip_field(f, variant) for f in stack.frames],
        delta=stack.delta, units=stack.units, config_hash=cfg.hash,
    )
    save_stack(flipped, run.path("stack-flipped"))
    run.finish()
    click.echo(f"wrote flipped stack under {run.outputs[0]}")


@main.command()
@click.argument("stack_path", type=click.Path(exists=True))
@click.option("--config", default="storm")
@click.option("--out", required=True, type=click.Path())
@_exits_on_config_error
def velocity(stack_path, config, out):
    """Estimate motion between consecutive frames; write velocity and
    diffusivity stacks."""
    cfg = _load_config(config)
    stack = _load_input_stack(stack_path)
    if stack.steps < 2:
        _fail(2, "velocity estimation needs at least 2 frames")
    run = _Run("velocity", cfg, out)
    mcfg = cfg.motion()
    try:
        vels = [
            estimate_velocity(a, b, mcfg)
            for a, b in zip(stack.frames[:-1], stack.frames[1:])
        ]
        stride = mcfg.stride
        difs = [
            diffusivity_from_velocity(v, stride / stack.grid.n1, stride / stack.grid.n2)
            for v in vels
        ]
    except NUMERICAL_ERRORS as exc:
        _fail(3, f"motion estimation failed: {exc}")
    meta = dict(delta=stack.delta, config_hash=cfg.hash)
    save_stack(GridStack.from_fields(
        [Field(stack.grid, v.vx) for v in vels], units="domain/step", **meta),
        run.path("stack-velocity-x"))
    save_stack(GridStack.from_fields(
        [Field(stack.grid, v.vy) for v in vels], units="domain/step", **meta),
        run.path("stack-velocity-y"))
    save_stack(GridStack.from_fields(
        [Field(stack.grid, d.dxx) for d in difs], units="domain^2/step", **meta),
        run.path("stack-diffusivity"))
    run.finish(max_speed=max(float(v.speed().max()) for v in vels))
    click.echo(f"wrote velocity/diffusivity stacks under {out}")


@main.command()
@click.argument("stack_path", type=click.Path(exists=True))
@click.option("--config", default="advection")
@click.option("--out", required=True, type=click.Path())
@click.option("--k", type=int, default=None)
@click.option("--flip", "use_flip", type=click.BOOL, default=False, show_default=True)
@click.option("--window", type=click.BOOL, default=False, show_default=True)
@click.option("--steps", type=int, default=None, help="training steps (default: all)")
@_exits_on_config_error
def fit(stack_path, config, out, k, use_flip, window, steps):
    """Maximum-likelihood noise variances for one model variant."""
    cfg = _load_config(config)
    stack = _load_input_stack(stack_path)
    run = _Run("fit", cfg, out)
    spec = _model_spec_from_flags(cfg, k, use_flip, window)
    try:
        pipeline = build_pipeline(
            stack.grid, spec, velocity=_velocity_for(cfg, stack), delta=stack.delta,
            variant=cfg.flip_variant(),
            k_star_factor=cfg.data["truncation"]["k_star_factor"],
        )
        obs = pipeline.observations(stack.frames[: steps or stack.steps])
        fit_cfg = cfg.data["fit"]
        result = estimate_variances(
            pipeline.factory, obs,
            grid_alpha=tuple(fit_cfg["grid"]), grid_beta=tuple(fit_cfg["grid"]),
            max_evaluations=fit_cfg["budget"],
        )
    except NUMERICAL_ERRORS as exc:
        _fail(3, f"variance estimation failed: {exc}")
    payload = {
        "model": spec.label,
        "sigma2_alpha": result.params.sigma2_alpha,
        "sigma2_beta": result.params.sigma2_beta,
        "sigma2_obs": result.params.sigma2_obs,
        "loglik": result.loglik,
        "converged": result.converged,
        "n_evaluations": result.n_evaluations,
    }
    run.path("noise", ".json").write_text(json.dumps(payload, indent=2) + "\n")
    run.finish(**payload)
    click.echo(json.dumps(payload, indent=2))


def _write_filtered(run, cfg, stack, pipeline, result, label):
    k = pipeline.ordering.k
    fields = [pipeline.reconstruct(m[:k]) for m in result.means_array]
    out_stack = GridStack.from_fields(
        fields, delta=stack.delta, units=stack.units, config_hash=cfg.hash
    )
    save_stack(out_stack, run.path(f"stack-filtered-{label}"))
    return out_stack


@main.command(name="filter")
@click.argument("stack_path", type=click.Path(exists=True))
@click.option("--config", default="advection")
@click.option("--out", required=True, type=click.Path())
@click.option("--k", type=int, default=None)
@click.option("--flip", "use_flip", type=click.BOOL, default=False, show_default=True)
@click.option("--window", type=click.BOOL, default=False, show_default=True)
@click.option("--steps", type=int, default=None, help="training steps (default: all)")
@_exits_on_config_error
def filter_cmd(stack_path, config, out, k, use_flip, window, steps):
    """Kalman-filter a stack and write the reconstructed frames."""
    cfg = _load_config(config)
    stack = _load_input_stack(stack_path)
    run = _Run("filter", cfg, out)
    spec = _model_spec_from_flags(cfg, k, use_flip, window)
    try:
        pipeline, model, result, noise, _ = _filter_pipeline(cfg, stack, spec, steps)
        _write_filtered(run, cfg, stack, pipeline, result, spec.label)
    except NUMERICAL_ERRORS as exc:
        _fail(3, f"filtering failed: {exc}")
    run.finish(model=spec.label, loglik=result.loglik,
               sigma2_alpha=noise.sigma2_alpha, sigma2_beta=noise.sigma2_beta)
    click.echo(f"filtered {stack.steps} frames as model {spec.label}")


@main.command()
@click.argument("stack_path", type=click.Path(exists=True))
@click.option("--config", default="advection")
@click.option("--out", required=True, type=click.Path())
@click.option("--k", type=int, default=None)
@click.option("--flip", "use_flip", type=click.BOOL, default=False, show_default=True)
@click.option("--window", type=click.BOOL, default=False, show_default=True)
@click.option("--steps", type=int, default=None, help="training steps (default: all)")
@click.option("--horizon", type=int, default=3, show_default=True)
@_exits_on_config_error
def predict(stack_path, config, out, k, use_flip, window, steps, horizon):
    """Filter a stack, then forecast ``--horizon`` steps past the data."""
    cfg = _load_config(config)
    stack = _load_input_stack(stack_path)
    run = _Run("predict", cfg, out)
    spec = _model_spec_from_flags(cfg, k, use_flip, window)
    try:
        pipeline, model, result, noise, _ = _filter_pipeline(cfg, stack, spec, steps)
        means, _ = kf_forecast(model, result.means_array[-1], result.final_cov, horizon)
        kk = pipeline.ordering.k
        fields = [pipeline.reconstruct(m[:kk]) for m in means]
    except NUMERICAL_ERRORS as exc:
        _fail(3, f"forecasting failed: {exc}")
    out_stack = GridStack.from_fields(
        fields, delta=stack.delta, units=stack.units, config_hash=cfg.hash
    )
    save_stack(out_stack, run.path(f"stack-predicted-{spec.label}"))
    run.finish(model=spec.label, horizon=horizon)
    click.echo(f"wrote {horizon} forecast frames for model {spec.label}")


@main.command()
@click.argument("stack_path", type=click.Path(exists=True), required=False)
@click.option("--config", default="gibbs-strip")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--region", default=None, help="extra region as x0,x1,y0,y1")
@_exits_on_config_error
def evaluate(stack_path, config, out, seed, region):
    """Run the multi-model comparison and write the MAE report CSV."""
    cfg = _load_config(config)
    run = _Run("evaluate", cfg, out)
    try:
        specs = cfg.model_specs()
        regions = cfg.regions()
    except ConfigError as exc:
        _fail(2, str(exc))
    if region is not None:
        try:
            x0, x1, y0, y1 = (float(v) for v in region.split(","))
            from .evaluate import Region

            regions["cli"] = Region((x0, x1), (y0, y1))
        except ValueError as exc:
            _fail(2, f"--region must be x0,x1,y0,y1 within [0,1): {exc}")
    stack = (
        _load_input_stack(stack_path)
        if stack_path
        else _generate_dataset(cfg, seed=seed)
    )
    comp = cfg.data["comparison"]
    try:
        dif = None
        vel = _velocity_for(cfg, stack)
        if cfg.data["velocity"]["mode"] == "estimate":
            stride = cfg.motion().stride
            dif = diffusivity_from_velocity(
                vel, stride / stack.grid.n1, stride / stack.grid.n2
            )
        report = run_comparison(
            stack.frames, specs,
            train_steps=comp["train_steps"],
            eval_times=list(comp["eval_times"]),
            regions=regions,
            velocity=vel,
            diffusivity=dif,
            delta=stack.delta,
            variant=cfg.flip_variant(),
            noise=cfg.noise(),
            fit_variances=cfg.data["fit"]["enabled"] and cfg.noise() is None,
            fit_budget=cfg.data["fit"]["budget"],
            fit_grid=tuple(cfg.data["fit"]["grid"]),
            k_star_factor=cfg.data["truncation"]["k_star_factor"],
        )
    except NUMERICAL_ERRORS as exc:
        _fail(3, f"comparison failed: {exc}")
    run.path("report", ".csv").write_text(report.to_csv())
    run.path("summary", ".txt").write_text(report.summary() + "\n")
    run.finish(models=[s.label for s in specs])
    click.echo(report.summary())


@main.command()
@click.argument("stack_path", type=click.Path(exists=True))
@click.option("--config", default="advection")
@click.option("--out", required=True, type=click.Path())
@click.option("--frame", type=int, default=0, show_default=True)
@click.option("--scale", default=None, help="min,max (default: config or auto)")
@_exits_on_config_error
def render(stack_path, config, out, frame, scale):
    """Render one frame as a portable graymap with a scale sidecar."""
    cfg = _load_config(config)
    stack = _load_input_stack(stack_path)
    if not 0 <= frame < stack.steps:
        _fail(2, f"frame {frame} out of range [0, {stack.steps})")
    run = _Run("render", cfg, out)
    if scale is not None:
        try:
            lo, hi = (float(v) for v in scale.split(","))
        except ValueError:
            _fail(2, "--scale must be min,max")
        bounds = (lo, hi)
    else:
        cfg_scale = cfg.data["render"]["scale"]
        bounds = None if cfg_scale == "auto" else (cfg_scale[0], cfg_scale[1])
    render_heatmap(stack.frames[frame], run.path(f"frame-{frame:04d}", ".pgm"), bounds)
    run.finish(frame=frame)
    click.echo(f"rendered frame {frame} to {run.outputs[0]}")


@main.command(name="convert-rain")
@click.argument("stack_path", type=click.Path(exists=True))
@click.option("--config", default="storm")
@click.option("--out", required=True, type=click.Path())
@_exits_on_config_error
def convert_rain(stack_path, config, out):
    """Convert a reflectivity (dBZ) stack to rain rate (mm/hr)."""
    cfg = _load_config(config)
    stack = _load_input_stack(stack_path)
    if stack.units != "dBZ":
        _fail(2, f"expected a dBZ stack, manifest says units={stack.units!r}")
    run = _Run("convert-rain", cfg, out)
    rain = GridStack.from_fields(
        [reflectivity_to_rain(f) for f in stack.frames],
        delta=stack.delta, units="mm/hr", config_hash=cfg.hash,
    )
    save_stack(rain, run.path("stack-rain"))
    run.finish()
    click.echo(f"wrote rain-rate stack under {run.outputs[0]}")


if __name__ == "__main__":
    main()
