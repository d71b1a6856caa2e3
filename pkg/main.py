#!/usr/bin/env python3

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from src.models.experiment import ExperimentConfig, Scenario
from src.models.results import RunSummary
from src.processors.runner import ScenarioRunner
from src.utils.console import configure_logging, console
from src.utils.errors import ConfigError, StablePerturbError

#### cli interface section ##################################################

def main():
    parser = argparse.ArgumentParser(
        description="Stable-dominated Levy generators with state-dependent jump perturbations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py density --alpha 1 --atoms '[{"dir": 1, "w": 0.5}, {"dir": -1, "w": 0.5}]' --t 1 --N 16384 --L 64
  python main.py neumann --config configs/05_flagship_neumann.json
  python main.py simulate --alpha 1.5 --atoms '[{"dir": 1, "w": 1}, {"dir": -1, "w": 1}]' --paths 10000 --dt 0.01
  python main.py accept configs/
        """
    )
    parser.add_argument('--verbose', action='store_true', help='Log guard diagnostics')
    parser.add_argument('--output', help='Output directory (default: ./outputs)')
    sub = parser.add_subparsers(dest='command', required=True)

    density = sub.add_parser('density', help='Invert the density of a Levy triple on a lattice')
    _add_triple_args(density)
    _add_grid_args(density)
    density.add_argument('--t', type=float, default=1.0, help='Time')
    density.add_argument('--delta', type=float, default=0.0, help='Also emit |d|^delta p_t')
    density.add_argument('--r', type=float, default=1.0, help='Norm index reported with the fractional field')
    density.add_argument('--oracle', choices=['cauchy'], help='Compare with a closed-form density')

    res = sub.add_parser('resolvent', help='Resolvent contract and Holder moduli')
    _add_triple_args(res)
    _add_grid_args(res)
    res.add_argument('--lambda', dest='lambdas', type=float, nargs='+', default=[2.0, 4.0, 8.0, 16.0])
    res.add_argument('--delta', type=float, default=0.0, help='Holder order (default min(alpha, 1)/2)')

    neumann = sub.add_parser('neumann', help='Contraction search and Neumann series')
    _add_triple_args(neumann)
    _add_grid_args(neumann)
    _add_kernel_args(neumann)
    neumann.add_argument('--lambda', dest='lambdas', type=float, nargs='+', default=[], help='Series lambda (default 2 lambda0)')
    neumann.add_argument('--moduli', choices=['measured', 'gamma-ceiling'], default='measured')

    mollify = sub.add_parser('mollify', help='Mollification error sweep')
    _add_triple_args(mollify)
    _add_grid_args(mollify)
    _add_kernel_args(mollify)
    mollify.add_argument('--n', dest='n_list', type=int, nargs='+', default=[4, 8, 16, 32])

    for name, text in (('simulate', 'Monte Carlo paths and resolvent functionals'),
                       ('verify', 'Monte Carlo against the Neumann series')):
        mc = sub.add_parser(name, help=text)
        _add_triple_args(mc)
        _add_grid_args(mc)
        _add_kernel_args(mc)
        _add_mc_args(mc)

    accept = sub.add_parser('accept', help='Run every config in a directory')
    accept.add_argument('directory', help='Directory of JSON/YAML experiment configs')

    args = parser.parse_args()
    configure_logging(args.verbose)
    output_dir = Path(args.output) if args.output else None

    try:
        if args.command == 'accept':
            summaries = run_directory(Path(args.directory), output_dir)
            print_acceptance_table(summaries)
            passed = all(s.passed for s in summaries)
        else:
            config = build_config(args)
            summary = run_experiment(config, output_dir)
            passed = summary.passed
    except (StablePerturbError, ValueError) as e:
        console.print(f"[red]Error: {str(e)}[/red]")
        sys.exit(1)

    if not passed:
        console.print("[red]✗ One or more checks failed[/red]")
        sys.exit(1)

#### argument groups section ################################################

def _add_triple_args(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='Experiment config file (JSON or YAML); overrides the flags')
    parser.add_argument('--alpha', type=float, help='Stability index in (0, 2)')
    parser.add_argument('--atoms', help='Spectral atoms as JSON, e.g. [{"dir": [1], "w": 0.5}]')
    parser.add_argument('--a', help='Diffusion matrix as JSON (a scalar in d=1)')
    parser.add_argument('--b', help='Drift vector as JSON')
    parser.add_argument('--extra', help='Extra jump atoms as JSON, e.g. [{"y": [2], "rate": 0.3}]')
    parser.add_argument('--seed', type=int, default=0)


def _add_grid_args(parser: argparse.ArgumentParser):
    parser.add_argument('--N', type=int, default=1024, help='Lattice points per axis (power of two)')
    parser.add_argument('--L', type=float, default=32.0, help='Lattice half extent')


def _add_kernel_args(parser: argparse.ArgumentParser):
    parser.add_argument('--beta', type=float, help='Kernel moment index')
    parser.add_argument('--beta-prime', type=float, default=0.0, help='Small-jump index beta\'')
    parser.add_argument('--kappa-sup', help='Small-jump modulator: number or JSON {"base", "terms"}')
    parser.add_argument('--eta-sup', help='Big-jump modulator: number or JSON')
    parser.add_argument('--pi-atoms', help='Big-jump atoms as JSON, e.g. [{"y": [1.5], "w": 0.2}]')


def _add_mc_args(parser: argparse.ArgumentParser):
    parser.add_argument('--paths', type=int, default=10000)
    parser.add_argument('--dt', type=float, default=0.01)
    parser.add_argument('--eps', type=float, help='Stable jump cutoff (default dt^(1/(2-alpha)))')
    parser.add_argument('--delta-cut', type=float, help='Kernel truncation radius')
    parser.add_argument('--lambda', dest='lambdas', type=float, nargs='+', default=[])
    parser.add_argument('--T', type=float, default=1.0, help='Horizon')
    parser.add_argument('--oracle', choices=['gaussian', 'cauchy', 'stable-lattice'])

#### config functions section ###############################################

def _parse(raw: Optional[str], what: str) -> Any:
    if raw is None:
        return None
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse --{what}: {str(e)}")


def _triple_spec(args) -> Dict[str, Any]:
    if args.alpha is None or args.atoms is None:
        raise ConfigError("--alpha and --atoms are required without --config")
    spec: Dict[str, Any] = {"alpha": args.alpha, "atoms": _parse(args.atoms, 'atoms')}
    a = _parse(args.a, 'a')
    if a is not None:
        spec["a"] = [[float(a)]] if isinstance(a, (int, float)) else a
    b = _parse(args.b, 'b')
    if b is not None:
        spec["b"] = b
    extra = _parse(args.extra, 'extra')
    if extra:
        spec["extra"] = extra
    return spec


def _kernel_spec(args) -> Optional[Dict[str, Any]]:
    if args.beta is None:
        return None
    spec: Dict[str, Any] = {"beta": args.beta, "beta_prime": args.beta_prime}
    spec["kappa"] = _parse(args.kappa_sup, 'kappa-sup') or 0.0
    spec["eta"] = _parse(args.eta_sup, 'eta-sup') or 0.0
    atoms = _parse(args.pi_atoms, 'pi-atoms')
    if atoms:
        spec["Pi_atoms"] = atoms
    return spec


def build_config(args) -> ExperimentConfig:
    """Experiment from --config, or a single scenario assembled from the flags"""
    if args.config:
        return ExperimentConfig.from_file(Path(args.config))
    levy = _triple_spec(args)
    dim = len(levy["atoms"][0]["dir"]) if isinstance(levy["atoms"][0]["dir"], list) else 1
    scenario: Dict[str, Any] = {
        "name": args.command,
        "kind": args.command,
        "levy": levy,
        "grid": {"dim": dim, "N": args.N, "L": args.L},
        "mc": {"seed": args.seed},
    }
    if args.command == 'density':
        scenario.update(t=args.t, delta=args.delta, r=args.r, oracle=args.oracle)
    elif args.command == 'resolvent':
        scenario.update(lambdas=args.lambdas, delta=args.delta)
    else:
        scenario["kernel"] = _kernel_spec(args)
    if args.command == 'neumann':
        scenario.update(lambdas=args.lambdas, moduli=args.moduli)
    elif args.command == 'mollify':
        scenario["n_list"] = args.n_list
    elif args.command in ('simulate', 'verify'):
        scenario["mc"] = {
            "paths": args.paths, "dt": args.dt, "eps": args.eps, "delta_cut": args.delta_cut,
            "seed": args.seed, "T": args.T, "x": [0.0] * dim,
        }
        scenario.update(lambdas=args.lambdas, oracle=args.oracle)
    return ExperimentConfig.from_dict({"name": args.command, "scenarios": [scenario]})

#### processing functions section ###########################################

def run_experiment(config: ExperimentConfig, output_dir: Optional[Path] = None) -> RunSummary:
    """Run one experiment with a spinner per scenario and print its summary"""
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        transient=True
    ) as progress:
        current = {}

        def on_start(scenario: Scenario):
            if "task" in current:
                progress.remove_task(current["task"])
            current["task"] = progress.add_task(f"Running {scenario.kind} scenario '{scenario.name}'...", total=None)

        summary = ScenarioRunner(config, output_dir, on_start=on_start).run()
        if "task" in current:
            progress.remove_task(current["task"])

    failed = [o for o in summary.outcomes if not o.passed]
    status = "[green]All checks passed[/green]" if summary.passed else f"[red]{len(failed)} check(s) failed[/red]"
    lines = [
        status,
        "",
        f"🧪 Experiment: {config.name}",
        f"📋 Scenarios: {len(config.scenarios)}, checks: {len(summary.outcomes)}",
        f"📁 Files written: {len(summary.files)}",
    ]
    for outcome in failed:
        lines.append(f"[red]✗ {outcome.scenario}: {outcome.check} = {outcome.value:.4g} (bound {outcome.bound:.4g})[/red]")
        if outcome.detail:
            lines.append(f"   {outcome.detail}")
    console.print(Panel.fit("\n".join(lines), title="Results"))
    return summary


def run_directory(directory: Path, output_dir: Optional[Path] = None) -> List[RunSummary]:
    """Acceptance suite: every config file in the directory, in name order"""
    if not directory.is_dir():
        raise ConfigError(f"Not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix in ('.json', '.yaml', '.yml'))
    console.print(f"[blue]ℹ Found {len(files)} experiment configs[/blue]")
    return [run_experiment(ExperimentConfig.from_file(path), output_dir) for path in files]

#### output functions section ###############################################

def print_acceptance_table(summaries: List[RunSummary]):
    table = Table(title="Acceptance")
    table.add_column("Experiment")
    table.add_column("Scenario")
    table.add_column("Check")
    table.add_column("Value", justify="right")
    table.add_column("Bound", justify="right")
    table.add_column("Status")
    for summary in summaries:
        for o in summary.outcomes:
            status = "[green]pass[/green]" if o.passed else "[red]FAIL[/red]"
            table.add_row(summary.name, o.scenario, o.check, f"{o.value:.4g}", f"{o.bound:.4g}", status)
    console.print(table)

if __name__ == '__main__':
    main()
