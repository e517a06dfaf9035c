"""
gaussvgd CLI - Command-line interface for Gaussian-SVGD experiments

Runs single flows and algorithms from YAML experiment files, the
eight-algorithm sweep, and the rate, propagation-of-chaos and step-size
studies. Every command writes CSV files plus a JSON manifest.
"""

import sys
from pathlib import Path
from typing import List, Optional

import click

from .algorithms import ALGORITHM_ORDER, OVER_TIME_STEPS, PRESET_STEPS, AlgoConfig, run_algorithm
from .cli_config import create_example_config, load_config
from .cli_logging import RunLogger, setup_logging
from .config import VERSION, settings
from .experiments import STUDIES, StudyResult
from .meanfield import AigfState, integrate
from .records import TrajectoryRecord, write_manifest


@click.group()
@click.version_option(version=VERSION, prog_name="gaussvgd")
def cli():
    """
    gaussvgd - Gaussian Stein variational gradient descent experiments

    Integrates the mean-field flows of Gaussian-SVGD, runs the density- and
    particle-based algorithms, and checks the convergence results numerically.
    Outputs are CSV files with a JSON manifest (config echo, git hash, seed).
    """
    pass


def _outdir(outdir: Optional[str], name: str) -> Path:
    path = Path(outdir) if outdir else settings.output_path(name)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_records(records: List[TrajectoryRecord], outdir: Path, run_logger: RunLogger) -> List[str]:
    written = []
    for record in records:
        path = record.to_csv(str(outdir / f"{record.label.replace(':', '_')}.csv"))
        run_logger.log_trajectory(record)
        written.append(str(path))
    return written


def _finish_study(result: StudyResult, outdir: Path, config: dict, seed: Optional[int],
                  run_logger: RunLogger) -> None:
    written = [str(p) for p in result.write(str(outdir))]
    manifest = write_manifest(str(outdir / "manifest.json"), config, seed, outputs=written)
    if result.passed is not None:
        run_logger.log_verdict(result.name, result.name, result.passed, result.metrics)
    status = {True: "PASS", False: "FAIL", None: "REPORT"}[result.passed]
    click.echo(f"{result.name}: {status}")
    for key, value in result.metrics.items():
        click.echo(f"  {key}: {value}")
    click.echo(f"Wrote {len(written)} files and {manifest}")


@cli.command()
@click.option('--config', '-f', default='config.yaml',
              help='Path to experiment file (default: config.yaml)')
@click.option('--outdir', '-o', help='Output directory (default: <output_dir>/<experiment name>)')
@click.option('--verbose', '-v', is_flag=True, help='Log every trajectory row instead of a sample')
@click.option('--logfile', '-l', help='Path to JSON-lines log file (default: stdout)')
def run(config: str, outdir: Optional[str], verbose: bool, logfile: Optional[str]):
    """
    Run the algorithm and/or flow of an experiment file.

    Examples:
    gaussvgd run -f config.yaml
    gaussvgd run -f logistic.yaml -o runs/logistic --logfile run.jsonl
    """
    run_logger = setup_logging(logfile=logfile, verbose=verbose)
    try:
        experiment = load_config(config)
        target = experiment.build_target()
        initial = experiment.build_initial(target.dim)
        echo = experiment.model_dump(mode="json")
        seed = experiment.algorithm.seed if experiment.algorithm else None
        run_logger.log_run_start(experiment.name, echo, seed)

        records = []
        if experiment.algorithm is not None:
            records.append(run_algorithm(experiment.algorithm, target, initial=initial))
        if experiment.flow is not None:
            spec = experiment.flow
            flow = spec.flow_kind
            start = AigfState.initial(initial.cov) if flow.accelerated else initial
            records.append(integrate(flow, start, target, spec.dt, spec.T, record_every=spec.record_every,
                                     diagnostic_samples=spec.diagnostic_samples,
                                     seed=seed if seed is not None else settings.default_seed))

        out = _outdir(outdir, experiment.name)
        written = _write_records(records, out, run_logger)
        manifest = write_manifest(str(out / "manifest.json"), echo, seed, outputs=written)
        for record in records:
            final = record.final
            click.echo(f"{record.label}: t={final.t:g} kl={final.kl} free_energy={final.free_energy}")
        click.echo(f"Wrote {len(written)} files and {manifest}")

    except Exception as e:
        run_logger.log_error(None, str(e))
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)
    finally:
        run_logger.close()


@cli.command()
@click.option('--config', '-f', default='config.yaml',
              help='Path to experiment file providing the target and initial Gaussian')
@click.option('--study', type=click.Choice(sorted(PRESET_STEPS)), default='logistic',
              help='Preset step-size table (default: logistic)')
@click.option('--over-time', is_flag=True, help='Use the common over-time step size for every algorithm')
@click.option('--iters', type=int, default=500, help='Iterations per algorithm (default: 500)')
@click.option('--n', 'n_samples', type=int, default=100, help='Samples or particles (default: 100)')
@click.option('--seed', type=int, help='Seed (default: settings.default_seed)')
@click.option('--outdir', '-o', help='Output directory (default: <output_dir>/sweep)')
@click.option('--verbose', '-v', is_flag=True, help='Log every trajectory row instead of a sample')
@click.option('--logfile', '-l', help='Path to JSON-lines log file (default: stdout)')
def sweep(config: str, study: str, over_time: bool, iters: int, n_samples: int, seed: Optional[int],
          outdir: Optional[str], verbose: bool, logfile: Optional[str]):
    """
    Run the eight algorithms on the target of an experiment file.

    Divergent runs are stopped and marked in the manifest instead of aborting the sweep.
    """
    run_logger = setup_logging(logfile=logfile, verbose=verbose)
    try:
        experiment = load_config(config)
        target = experiment.build_target()
        initial = experiment.build_initial(target.dim)
        seed = settings.default_seed if seed is None else seed
        echo = {"target": experiment.target.model_dump(mode="json"), "study": study, "over_time": over_time,
                "iters": iters, "n": n_samples}
        run_logger.log_run_start("sweep", echo, seed)

        records = []
        for name in ALGORITHM_ORDER:
            overrides = {"n": n_samples, "iters": iters, "seed": seed}
            if over_time:
                overrides["step"] = OVER_TIME_STEPS[study]
            cfg = AlgoConfig.preset(name, study, **overrides)
            record = run_algorithm(cfg, target, initial=initial, raise_on_divergence=False)
            records.append(record)
            diverged = record.metadata.get("diverged_at")
            suffix = f" (diverged at {diverged})" if diverged is not None else ""
            click.echo(f"{name:5s} step={cfg.step:<6g} free_energy={record.final.free_energy}{suffix}")

        out = _outdir(outdir, "sweep")
        written = _write_records(records, out, run_logger)
        manifest = write_manifest(str(out / "manifest.json"), echo, seed, outputs=written)
        click.echo(f"Wrote {len(written)} files and {manifest}")

    except Exception as e:
        run_logger.log_error("sweep", str(e))
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)
    finally:
        run_logger.close()


def _run_study(name: str, outdir: Optional[str], logfile: Optional[str], verbose: bool, **kwargs) -> None:
    run_logger = setup_logging(logfile=logfile, verbose=verbose)
    try:
        run_logger.log_run_start(name, kwargs, kwargs.get("seed"))
        result = STUDIES[name](**kwargs)
        _finish_study(result, _outdir(outdir, name), {"study": name, **kwargs}, kwargs.get("seed"), run_logger)
        if result.passed is False:
            sys.exit(2)
    except Exception as e:
        run_logger.log_error(name, str(e))
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)
    finally:
        run_logger.close()


@cli.command()
@click.option('--dt', type=float, help='RK4 step (default: settings.default_dt)')
@click.option('--outdir', '-o', help='Output directory (default: <output_dir>/rates)')
@click.option('--verbose', '-v', is_flag=True, help='Log every trajectory row instead of a sample')
@click.option('--logfile', '-l', help='Path to JSON-lines log file (default: stdout)')
def rates(dt: Optional[float], outdir: Optional[str], verbose: bool, logfile: Optional[str]):
    """
    Fit covariance convergence rates of the centered flows and compare them to theory.

    Exits with status 2 when a fitted rate is off by more than 5%.
    """
    _run_study("rates", outdir, logfile, verbose, dt=dt)


@cli.command()
@click.option('--dim', type=int, default=3, help='Dimension (default: 3)')
@click.option('--seeds', 'n_seeds', type=int, default=50, help='Repetitions per N (default: 50)')
@click.option('--n', 'n_values', type=int, multiple=True, help='Particle counts (default: 32 64 128 256)')
@click.option('--dt', type=float, default=1e-2, help='RK4 step (default: 1e-2)')
@click.option('--seed', type=int, default=5, help='Root seed (default: 5)')
@click.option('--outdir', '-o', help='Output directory (default: <output_dir>/chaos)')
@click.option('--verbose', '-v', is_flag=True, help='Log every trajectory row instead of a sample')
@click.option('--logfile', '-l', help='Path to JSON-lines log file (default: stdout)')
def chaos(dim: int, n_seeds: int, n_values: tuple, dt: float, seed: int, outdir: Optional[str],
          verbose: bool, logfile: Optional[str]):
    """
    Average squared W2 between the particle cloud and the mean-field law as N grows.

    Set GAUSSVGD_MAX_WORKERS to run repetitions in parallel.
    """
    kwargs = {"dim": dim, "n_seeds": n_seeds, "dt": dt, "seed": seed}
    if n_values:
        kwargs["n_values"] = tuple(sorted(n_values))
    _run_study("chaos", outdir, logfile, verbose, **kwargs)


@cli.command()
@click.option('--eps', type=float, default=0.1, help='Step size in (0, 0.5) (default: 0.1)')
@click.option('--dim', type=int, default=3, help='Dimension (default: 3)')
@click.option('--steps', 'T', type=int, default=200, help='Iterations (default: 200)')
@click.option('--seed', type=int, default=4, help='Seed (default: 4)')
@click.option('--outdir', '-o', help='Output directory (default: <output_dir>/stepsize)')
@click.option('--verbose', '-v', is_flag=True, help='Log every trajectory row instead of a sample')
@click.option('--logfile', '-l', help='Path to JSON-lines log file (default: stdout)')
def stepsize(eps: float, dim: int, T: int, seed: int, outdir: Optional[str], verbose: bool,
             logfile: Optional[str]):
    """
    Discrete K1 particle runs inside and outside the guaranteed step-size interval.
    """
    _run_study("stepsize", outdir, logfile, verbose, eps=eps, dim=dim, T=T, seed=seed)


@cli.command()
@click.argument('name', type=click.Choice(sorted(STUDIES)))
@click.option('--outdir', '-o', help='Output directory (default: <output_dir>/<name>)')
@click.option('--verbose', '-v', is_flag=True, help='Log every trajectory row instead of a sample')
@click.option('--logfile', '-l', help='Path to JSON-lines log file (default: stdout)')
def study(name: str, outdir: Optional[str], verbose: bool, logfile: Optional[str]):
    """
    Run a named study with its default parameters.

    Examples:
    gaussvgd study riccati
    gaussvgd study mixture -o runs/mixture
    """
    _run_study(name, outdir, logfile, verbose)


@cli.command()
def list_presets():
    """
    List the named algorithms and their preset step sizes.
    """
    header = "".join(f"{study:>10s}" for study in sorted(PRESET_STEPS))
    click.echo(f"{'name':6s}{header}")
    for name in ALGORITHM_ORDER:
        steps = "".join(f"{PRESET_STEPS[study][name]:>10g}" for study in sorted(PRESET_STEPS))
        click.echo(f"{name:6s}{steps}")
    click.echo("Over-time step: " + ", ".join(f"{k} {v:g}" for k, v in OVER_TIME_STEPS.items()))


@cli.command()
@click.option('--output', '-o', default='config.yaml', help='Where to write the example (default: config.yaml)')
@click.option('--force', is_flag=True, help='Overwrite an existing file')
def init_config(output: str, force: bool):
    """
    Write an example experiment file.
    """
    try:
        path = Path(output)
        if path.exists() and not force:
            raise click.ClickException(f"{output} exists; use --force to overwrite")
        path.write_text(create_example_config() + "\n", encoding="utf-8")
        click.echo(f"Wrote {output}")
    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


def main():
    """
    Main entry point for the CLI application.
    """
    cli()


if __name__ == '__main__':
    main()
