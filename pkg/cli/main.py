"""
Lab Command Line
run / convergence / verify entry points
"""
import sys
from pathlib import Path
from typing import List, Optional

import typer
from loguru import logger
from rich.console import Console

from cli.config import ExperimentConfig, load_config
from cli.pipeline import EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, convergence_study, run_experiment
from cli.verify import SuiteSizes, verify as run_verify
from core.errors import ConfigError
from lab_config import LAB_CONFIG

app = typer.Typer(help="Alt-Phillips free-boundary numerical lab")
console = Console()


def configure_logging(log_file: Optional[Path] = None) -> None:
    logger.remove()
    logger.add(sys.stderr, level=LAB_CONFIG.LOG_LEVEL)
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        logger.add(log_file, level="DEBUG", mode="w")


def _load(config: Path) -> Optional[ExperimentConfig]:
    try:
        return load_config(config)
    except ConfigError as e:
        console.print(f"[red]Invalid config {config}: {e}[/red]")
        logger.error(f"Config rejected: {e}")
        return None


def _out_dir(cfg: ExperimentConfig, out: Optional[Path]) -> Path:
    if out is not None:
        return out
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(LAB_CONFIG.OUTPUT_DIR) / cfg.name


@app.command()
def run(
    config: Path = typer.Argument(..., help="Experiment JSON file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    threads: int = typer.Option(LAB_CONFIG.THREADS, "--threads", "-t", min=1),
    seed: int = typer.Option(0, "--seed", help="Seed for randomised checks"),
):
    """
    Solve one experiment and write its artifacts.

    Example:
        python lab.py run configs/bump_2d.json --out runs/bump
    """
    configure_logging()
    cfg = _load(config)
    if cfg is None:
        raise typer.Exit(EXIT_CONFIG)
    out_dir = _out_dir(cfg, out)
    configure_logging(out_dir / "run.log")

    outcome = run_experiment(cfg, out_dir, seed=seed, threads=threads)
    res = outcome.result
    if outcome.exit_code == EXIT_OK:
        console.print(f"[green]✓ {cfg.name}: converged in {res.iterations} iterations "
                      f"(residual {res.residual:.3e})[/green]")
    else:
        console.print(f"[red]✗ {cfg.name}: no convergence after {res.iterations} iterations "
                      f"(residual {res.residual:.3e})[/red]")
    console.print(f"Artifacts written to {out_dir}")
    raise typer.Exit(outcome.exit_code)


@app.command()
def convergence(
    config: Path = typer.Argument(..., help="Experiment JSON file"),
    levels: int = typer.Option(3, "--levels", "-k", help="Number of nested refinements"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    threads: int = typer.Option(LAB_CONFIG.THREADS, "--threads", "-t", min=1),
):
    """Grid refinement study n_k = (n - 1) 2^k + 1."""
    configure_logging()
    cfg = _load(config)
    if cfg is None:
        raise typer.Exit(EXIT_CONFIG)
    if levels < 2:
        console.print(f"[red]--levels must be at least 2 (got {levels})[/red]")
        raise typer.Exit(EXIT_CONFIG)
    if cfg.n % 2 == 0:
        console.print(f"[red]nested refinement needs odd n (got {cfg.n})[/red]")
        raise typer.Exit(EXIT_CONFIG)
    out_dir = _out_dir(cfg, out)
    configure_logging(out_dir / "run.log")

    outcome = convergence_study(cfg, levels, out_dir, threads=threads)
    if outcome.exit_code == EXIT_NOT_CONVERGED:
        console.print("[red]✗ at least one level did not converge[/red]")
    console.print(f"convergence.csv written to {out_dir}")
    raise typer.Exit(outcome.exit_code)


@app.command()
def verify(
    out: Path = typer.Option(Path(LAB_CONFIG.OUTPUT_DIR) / "verify", "--out", "-o"),
    item: Optional[List[str]] = typer.Option(None, "--item", "-i", help="Run only the named items"),
    threads: int = typer.Option(LAB_CONFIG.THREADS, "--threads", "-t", min=1),
    seed: int = typer.Option(0, "--seed", help="Seed for randomised checks"),
    reduced: bool = typer.Option(False, "--reduced", help="Small grids for a quick smoke run"),
):
    """Run the acceptance suite and write verify_summary.json."""
    configure_logging(out / "run.log")
    sizes = SuiteSizes.reduced() if reduced else SuiteSizes()
    raise typer.Exit(run_verify(out, only=item, seed=seed, threads=threads, sizes=sizes))


if __name__ == "__main__":
    app()
