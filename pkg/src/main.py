"""Main CLI entrypoint for the explicit data-driven predictive control toolkit."""
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import typer

from config import Config
from control.models import DDPCSpec, RunConfig, TrajectoryData
from data.trajectory import load_trajectory, save_trajectory
from errors import ConfigError, exit_code_for
from services.benchmark_service import DEFAULT_RHO_GRID, BenchmarkService, CVProtocol, controller_target
from services.controller_service import ControllerService, load_spec, parse_overrides
from services.equivalence_service import EquivalenceService, data_windows
from services.plants import BuiltinPlant, builtin_names, builtin_system
from services.simulation_service import generate_dataset, measured_snr
from solvers.explicit_mpqp import evaluate
from solvers.qp_oracle import implicit_control
from solvers.region_graph import build_region_graph, continuity_gap, graph_summary
from storage.law_repository import LawRepository
from storage.results import ResultWriter

# Configure logging
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

app = typer.Typer(help="Explicit data-driven predictive control CLI")


def _fail(action: str, error: Exception) -> None:
    logger.error(f"{action} failed: {error}")
    typer.echo(f"Error: {error}", err=True)
    sys.exit(exit_code_for(error))


def _resolve_seed(seed: Optional[int]) -> int:
    return Config.SEED if seed is None else seed


def _load_problem(
    config: str,
    overrides: Optional[List[str]],
    data_path: Optional[str],
    inputs: Optional[int],
    outputs: Optional[int],
    seed: int,
) -> Tuple[DDPCSpec, Optional[BuiltinPlant], TrajectoryData]:
    """Spec plus trajectory; a builtin config without --data gets a freshly generated record."""
    spec, plant = load_spec(config, parse_overrides(overrides))
    if data_path is None:
        if plant is None:
            raise ConfigError("--data is required unless --config names a builtin system")
        low, high = plant.excitation
        data = generate_dataset(
            plant.system, plant.N, low, high, seed,
            snr_db=plant.snr_db, process_noise=plant.process_noise_in_data,
        ).data
        return spec, plant, data
    m = inputs if inputs is not None else (plant.system.m if plant else None)
    p = outputs if outputs is not None else (plant.system.p if plant else None)
    if m is None or p is None:
        raise ConfigError("--inputs and --outputs are required for a trajectory without a builtin config")
    return spec, plant, load_trajectory(data_path, m, p)


@app.command()
def generate(
    system: str = typer.Argument(..., help=f"Builtin system: {', '.join(builtin_names())}"),
    n_samples: Optional[int] = typer.Option(None, "--N", help="Record length (default: the system's training length)"),
    low: Optional[float] = typer.Option(None, "--low", help="Lower excitation bound"),
    high: Optional[float] = typer.Option(None, "--high", help="Upper excitation bound"),
    snr: Optional[float] = typer.Option(None, "--snr", help="Measurement SNR in dB (default: the system's setting)"),
    noiseless: bool = typer.Option(False, "--noiseless", help="Switch process and measurement noise off"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    out: str = typer.Option(Config.OUTPUT_DIR, "--out", "-o", help="Output directory"),
):
    """Simulate a builtin plant under uniform random excitation and write the trajectory CSV."""
    seed = _resolve_seed(seed)
    try:
        plant = builtin_system(system)
        options = {
            "N": n_samples or plant.N,
            "low": plant.excitation[0] if low is None else low,
            "high": plant.excitation[1] if high is None else high,
            "snr": plant.snr_db if snr is None else snr,
            "noiseless": noiseless,
        }
        dataset = generate_dataset(
            plant.system, options["N"], options["low"], options["high"], seed,
            snr_db=options["snr"], noisy=not noiseless, process_noise=plant.process_noise_in_data,
        )
        writer = ResultWriter(out)
        path = save_trajectory(dataset.data, writer.path("trajectory.csv"))
        writer.written.append(path.name)
        extra = {"options": options}
        if np.any(dataset.Upsilon):
            extra["measured_snr_db"] = measured_snr(dataset.clean_y, dataset.data.y)
        writer.write_manifest(
            RunConfig(subcommand="generate", config_path=system, seed=seed, output_dir=out), extra
        )
        typer.echo(f"✓ Wrote {dataset.data.N} samples ({dataset.data.m} in, {dataset.data.p} out) to {path}")
    except Exception as e:
        _fail("Generation", e)


@app.command()
def synthesize(
    config: str = typer.Option(..., "--config", "-c", help="Problem JSON file or builtin system name"),
    data: Optional[str] = typer.Option(None, "--data", "-d", help="Trajectory CSV"),
    inputs: Optional[int] = typer.Option(None, "--inputs", help="Input columns in the CSV"),
    outputs: Optional[int] = typer.Option(None, "--outputs", help="Output columns in the CSV"),
    max_active: Optional[int] = typer.Option(None, "--max-active", help="Cap on enumerated active-set size"),
    overrides: Optional[List[str]] = typer.Option(None, "--set", help="Override a spec key (key=value)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed for generated data"),
    out: str = typer.Option(Config.OUTPUT_DIR, "--out", "-o", help="Output directory"),
):
    """Build the QP from data, enumerate its explicit law and write law.json with a report."""
    seed = _resolve_seed(seed)
    try:
        Config.validate()
        spec, _, trajectory = _load_problem(config, overrides, data, inputs, outputs, seed)
        outcome = ControllerService(spec).synthesize(trajectory, max_active=max_active)
        law, stats = outcome.law, outcome.law.stats

        writer = ResultWriter(out)
        law_path = LawRepository().export_law(law, writer.path("law.json"))
        writer.written.append(law_path.name)

        graph = build_region_graph(law)
        summary = graph_summary(graph)
        lines = [
            f"variant: {law.variant}",
            f"qp: n_d={outcome.qp.n_d} n_eq={outcome.qp.n_eq} n_in={outcome.qp.n_in} n_chi={outcome.qp.n_chi}",
            f"regions: {len(law.regions)}",
            f"candidates: {stats.candidates}",
            f"licq skips: {stats.licq_failures}",
            f"empty pruned: {stats.empty_pruned}",
            f"duplicates removed: {stats.duplicates_removed}",
            f"dropped equality rows: {stats.dropped_equalities}",
            f"region graph: {summary['nodes']} nodes, {summary['edges']} edges, {summary['components']} components",
            f"continuity gap: {continuity_gap(law, graph):.3e}",
            f"synthesis time: {stats.seconds:.3f}s",
            f"qp fingerprint: {law.qp_fingerprint}",
        ]
        writer.write_report(lines, "synthesis_report.txt")
        writer.write_manifest(
            RunConfig(
                subcommand="synthesize", config_path=config, data_path=data, seed=seed,
                output_dir=out, overrides=parse_overrides(overrides),
            ),
            {
                "version": Config.VERSION,
                "options": {"inputs": trajectory.m, "outputs": trajectory.p, "max_active": max_active},
                "spec": outcome.spec.model_dump(),
            },
        )
        typer.echo(f"✓ Explicit law with {len(law.regions)} region(s) saved to {law_path}")
        for line in lines[1:9]:
            typer.echo(f"  {line}")
    except Exception as e:
        _fail("Synthesis", e)


@app.command()
def verify(
    config: str = typer.Option(..., "--config", "-c", help="Problem JSON file or builtin system name"),
    data: Optional[str] = typer.Option(None, "--data", "-d", help="Trajectory CSV"),
    inputs: Optional[int] = typer.Option(None, "--inputs", help="Input columns in the CSV"),
    outputs: Optional[int] = typer.Option(None, "--outputs", help="Output columns in the CSV"),
    law_file: Optional[str] = typer.Option(None, "--law", help="Law file to check against the rebuilt QP"),
    samples: int = typer.Option(20, "--samples", help="Parameter samples per check"),
    overrides: Optional[List[str]] = typer.Option(None, "--set", help="Override a spec key (key=value)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    out: str = typer.Option(Config.OUTPUT_DIR, "--out", "-o", help="Output directory"),
):
    """Run the equivalence checks (and, with --law, the explicit/implicit sweep) and write a report."""
    seed = _resolve_seed(seed)
    try:
        spec, _, trajectory = _load_problem(config, overrides, data, inputs, outputs, seed)
        service = EquivalenceService(spec, trajectory)
        report = service.run(n_samples=samples, seed=seed)
        lines = [
            f"case: {report.kind}",
            f"noiseless data: {report.noiseless}",
            f"predictor rank: {report.predictor_rank}",
            f"predictor residual: {report.predictor_residual:.3e}",
            f"model equivalence residual: {report.model_residual:.3e}",
        ]
        if report.initial_state_residual is not None:
            lines.append(f"initial-state residual: {report.initial_state_residual:.3e}")
        lines += [
            f"cost identity gap: {report.cost_identity_gap:.3e}",
            f"lifted sets agree: {report.lifted_sets_agree}",
            f"problem equivalence discrepancy (rho_alpha={report.rho_alpha:g}): {report.problem_discrepancy:.3e}",
        ]

        if law_file:
            _, _, qp = ControllerService(spec).build_qp(trajectory)
            law = LawRepository().import_law(law_file, expected_qp=qp)
            worst = 0.0
            chis = data_windows(trajectory, spec.n, samples, seed)
            target = controller_target(spec, trajectory.m, trajectory.p)
            reference = np.concatenate([target.u_r, target.y_r]) if target else np.zeros(0)
            for chi0 in chis:
                chi = np.concatenate([chi0, reference])
                u_explicit, _ = evaluate(law, chi)
                worst = max(worst, float(np.max(np.abs(u_explicit - implicit_control(qp, chi)))))
            lines.append(f"explicit vs implicit discrepancy: {worst:.3e} over {len(chis)} windows")

        writer = ResultWriter(out)
        writer.write_report(lines, "verify_report.txt")
        writer.write_manifest(
            RunConfig(
                subcommand="verify", config_path=config, data_path=data, seed=seed,
                output_dir=out, overrides=parse_overrides(overrides),
            ),
            {
                "version": Config.VERSION,
                "options": {"inputs": trajectory.m, "outputs": trajectory.p, "law": law_file, "samples": samples},
                "report": report.model_dump(),
            },
        )
        for line in lines:
            typer.echo(f"  {line}")
        if report.noiseless:
            service.check(report)
            typer.echo("✓ All equivalence checks passed")
        else:
            logger.warning("Data are noisy: residuals reported, not checked")
            typer.echo("Residuals reported without checks (noisy data)")
    except Exception as e:
        _fail("Verification", e)


def _parse_levels(levels: str) -> List[Optional[float]]:
    parsed: List[Optional[float]] = []
    for item in levels.split(","):
        item = item.strip().lower()
        if not item:
            continue
        try:
            parsed.append(None if item in ("none", "inf", "noiseless") else float(item))
        except ValueError:
            raise ConfigError(f"noise level '{item}' is not a number") from None
    if not parsed:
        raise ConfigError("--levels needs at least one value")
    return parsed


@app.command()
def benchmark(
    name: str = typer.Argument(..., help="siso, four_tank, timing or montecarlo"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Builtin system for timing/montecarlo"),
    runs: Optional[int] = typer.Option(None, "--runs", help="Runs (four_tank) or runs per level (montecarlo)"),
    samples: Optional[int] = typer.Option(
        None, "--samples", help="Parameter samples for timing (default 10000) and oracle checks (default 1000)"
    ),
    levels: str = typer.Option("40,30,20,10", "--levels", help="Comma-separated SNR levels in dB ('none' = noiseless)"),
    skip_cv: bool = typer.Option(False, "--skip-cv", help="Use the spec's rho_alpha instead of cross-validation"),
    overrides: Optional[List[str]] = typer.Option(None, "--set", help="Override a spec key (key=value)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    out: str = typer.Option(Config.OUTPUT_DIR, "--out", "-o", help="Output directory"),
):
    """Run one of the benchmark studies and write its tables and trajectories."""
    seed = _resolve_seed(seed)
    try:
        Config.validate()
        system = config or ("four_tank" if name == "four_tank" else "siso")
        if name in ("siso", "four_tank"):
            system = name
        elif name not in ("timing", "montecarlo"):
            raise ConfigError(f"unknown benchmark '{name}' (siso, four_tank, timing, montecarlo)")
        spec, plant = load_spec(system, parse_overrides(overrides))
        plant = plant.model_copy(update={"spec": spec})
        service = BenchmarkService(plant, seed=seed, grid=DEFAULT_RHO_GRID, protocol=CVProtocol())
        writer = ResultWriter(out)
        options = {"runs": runs or 30, "samples": samples, "levels": levels, "skip_cv": skip_cv}

        if name == "siso":
            options["samples"] = samples or 1000
            report = service.siso_study(n_samples=options["samples"], skip_cv=skip_cv)
            writer.write_table([report.summary()], "siso_summary", title="SISO benchmark")
            if report.cross_validation:
                writer.write_table(
                    [s.model_dump() for s in report.cross_validation.scores], "cross_validation",
                    title="Cross-validation scores",
                )
            writer.write_trajectory(report.closed_loop, "siso_closed_loop.csv")
            writer.write_trajectory(report.oracle_loop, "siso_oracle_loop.csv")
            summary = report.summary()
        elif name == "four_tank":
            options["samples"] = samples or 10_000
            report = service.four_tank_study(runs=options["runs"], n_timing=options["samples"])
            writer.write_table([report.summary()], "four_tank_summary", title="Four-tank benchmark")
            writer.write_table([report.timing.model_dump()], "timing", title="Explicit vs implicit timing")
            writer.write_trajectory(report.closed_loop, "four_tank_convergence.csv")
            writer.write_trajectory(report.implicit_loop, "four_tank_implicit.csv")
            summary = report.summary()
        elif name == "timing":
            options["samples"] = samples or 10_000
            timing = service.timing_study(n_samples=options["samples"])
            writer.write_table([timing.model_dump()], "timing", title=f"Explicit vs implicit timing ({system})")
            summary = timing.model_dump()
        else:
            rows = service.monte_carlo_study(_parse_levels(levels), options["runs"])
            writer.write_table([row.model_dump() for row in rows], "monte_carlo", title="SNR vs rho_alpha and RMSE_O")
            summary = {"levels": [row.model_dump() for row in rows]}

        writer.write_manifest(
            RunConfig(
                subcommand=f"benchmark {name}", config_path=system, seed=seed,
                output_dir=out, overrides=parse_overrides(overrides),
            ),
            {"version": Config.VERSION, "options": options, "summary": summary},
        )
        typer.echo(f"✓ Benchmark {name} finished; results in {Path(out)}")
        for key, value in summary.items():
            if not isinstance(value, list):
                typer.echo(f"  {key}: {value}")
    except Exception as e:
        _fail("Benchmark", e)


if __name__ == "__main__":
    app()
