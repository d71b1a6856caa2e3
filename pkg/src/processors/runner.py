from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats

from ..core import approx, density, perturb, resolvent
from ..core.lattice import LatticeField, SpaceTimeFunction
from ..core.symbol import triple_symbol
from ..models.experiment import ExperimentConfig, Scenario
from ..models.kernel import JumpKernelModel
from ..models.results import CheckOutcome, ConstantsLedger, RunSummary
from ..utils.console import get_logger
from ..utils.errors import ContractionError, GridExhaustedError
from ..utils.output import write_record, write_table
from . import simulate

logger = get_logger(__name__)

#### helpers section #########################################################

def _check(scenario: Scenario, check: str, value: float, bound: float, passed: Optional[bool] = None,
           detail: str = "") -> CheckOutcome:
    ok = bool(value <= bound) if passed is None else bool(passed)
    return CheckOutcome(scenario=scenario.name, check=check, value=float(value), bound=float(bound), passed=ok, detail=detail)


def _scheme(scenario: Scenario, lam: float) -> resolvent.QuadratureScheme:
    q = scenario.quadrature
    return resolvent.QuadratureScheme.build(lam, tol=q.tol, order=q.order, first_cell=q.first_cell)


def _kernel(scenario: Scenario, delta_cut: Optional[float] = None) -> JumpKernelModel:
    model = scenario.kernel_model()
    if scenario.mollify_n:
        model = approx.mollify_kernel(model, scenario.mollify_n)
    if delta_cut:
        model = approx.truncate_kernel(model, delta_cut)
    return model

#### runner section ##########################################################

class ScenarioRunner:
    """Runs the scenarios of an experiment and collects checks, files and the constants ledger"""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Path] = None,
                 on_start: Optional[Callable[[Scenario], None]] = None):
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir) / config.name
        self.on_start = on_start
        self.ledger = ConstantsLedger()
        self.files: List[str] = []

    def run(self) -> RunSummary:
        outcomes: List[CheckOutcome] = []
        handlers = {
            "density": self._density,
            "scaling": self._scaling,
            "decay": self._decay,
            "komatsu": self._komatsu,
            "resolvent": self._resolvent,
            "neumann": self._neumann,
            "mollify": self._mollify,
            "truncate": self._truncate,
            "simulate": self._simulate,
            "verify": self._verify,
        }
        for scenario in self.config.scenarios:
            if self.on_start:
                self.on_start(scenario)
            logger.debug(f"running scenario {scenario.name} ({scenario.kind})")
            outcomes.extend(handlers[scenario.kind](scenario))
        if self.config.scenarios:
            self._write_table(self.ledger.rows(), "ledger.csv")
        return RunSummary(name=self.config.name, outcomes=outcomes, files=self.files, ledger=self.ledger)

    def _write_table(self, rows, filename: str) -> None:
        if rows is None or len(rows) == 0:
            return
        self.files.append(str(write_table(rows, self.output_dir / filename)))

    def _write_record(self, record, filename: str) -> None:
        self.files.append(str(write_record(record, self.output_dir / filename)))

    #### lattice scenarios ####

    def _density(self, scenario: Scenario) -> List[CheckOutcome]:
        triple = scenario.triple()
        grid = scenario.grid.build()
        tol = scenario.tolerances
        field, diagnostics = density.DensityInverter(mass_tol=tol.mass).invert(triple_symbol(triple), scenario.t, grid)
        coords = grid.coordinates().reshape(-1, grid.dim)
        rows: Dict[str, np.ndarray] = {f"x{i}" if grid.dim > 1 else "x": coords[:, i] for i in range(grid.dim)}
        rows["value"] = field.values.ravel()
        reported = field
        if scenario.delta > 0:
            reported = density.fractional_apply(triple_symbol(triple), scenario.delta, scenario.t, grid)
            rows["fractional"] = reported.values.ravel()
        self.ledger.record("lr_norm", density.lr_norm(reported, scenario.r), "measured",
                           t=scenario.t, delta=scenario.delta, r=scenario.r)
        checks = [_check(scenario, "mass", abs(diagnostics.mass - 1.0), tol.mass)]
        if scenario.oracle == "cauchy":
            scale = triple.stable.mu.weights[0] * np.pi * scenario.t
            oracle = density.periodized_cauchy(coords[:, 0], scale, grid.half_extent)
            rows["oracle"] = oracle
            window = np.abs(coords[:, 0]) <= tol.oracle_window
            error = float(np.max(np.abs(field.values.ravel() - oracle)[window]))
            checks.append(_check(scenario, "cauchy-oracle", error, tol.oracle))
        self._write_table(rows, f"{scenario.name}_density.csv")
        self._write_record(diagnostics, f"{scenario.name}_diagnostics.json")
        return checks

    def _scaling(self, scenario: Scenario) -> List[CheckOutcome]:
        stable = scenario.triple().stable
        grid = scenario.grid.build()
        rows = []
        for t in scenario.t_list:
            rows.append({"t": t, "residual": density.scaling_check(stable, t, grid), "bound": scenario.tolerances.scaling})
        self._write_table(rows, f"{scenario.name}_scaling.csv")
        return [_check(scenario, f"scaling t={r['t']}", r["residual"], r["bound"]) for r in rows]

    def _decay(self, scenario: Scenario) -> List[CheckOutcome]:
        stable = scenario.triple().stable
        grid = scenario.grid.build()
        fit = density.decay_exponent_fit(stable, scenario.delta, scenario.r, scenario.t_list, grid, axis=scenario.axis)
        name = "c4" if scenario.axis is None else "c5"
        self.ledger.record(name, fit.constant, "measured", note="from decay fit", delta=scenario.delta, r=scenario.r)
        rows = [{"t": t, "norm": n, "fitted_slope": fit.slope, "expected_slope": fit.expected_slope}
                for t, n in zip(fit.t_list, fit.norms)]
        self._write_table(rows, f"{scenario.name}_decay.csv")
        return [_check(scenario, "decay-slope", fit.relative_error, scenario.tolerances.decay,
                       detail=f"slope {fit.slope:.5f} vs {fit.expected_slope:.5f}")]

    def _komatsu(self, scenario: Scenario) -> List[CheckOutcome]:
        report = resolvent.komatsu_check(scenario.delta, scenario.grid.dim, scenario.z_list)
        self.ledger.record("c6", float(np.mean(report.c6_values)), "measured", delta=scenario.delta, d=report.dim)
        rows = [{"z": z, "integral": i, "c6": c, "closed_form": report.closed_form if report.closed_form else np.nan}
                for z, i, c in zip(report.z_values, report.integrals, report.c6_values)]
        self._write_table(rows, f"{scenario.name}_komatsu.csv")
        return [_check(scenario, "komatsu-spread", report.spread, scenario.tolerances.komatsu)]

    #### resolvent scenarios ####

    def _c4(self, scenario: Scenario, delta: float, r: float, gradient: bool = False) -> float:
        name = "c5" if gradient else "c4"
        if self.ledger.has(name, delta=delta, r=r):
            return self.ledger.get(name, delta=delta, r=r)
        stable = scenario.triple().stable
        grid = scenario.constants_lattice()
        value = density.measure_c5(stable, delta, r, grid) if gradient else density.measure_c4(stable, delta, r, grid)
        self.ledger.record(name, value, "measured", delta=delta, r=r)
        return value

    def _modulus(self, scenario: Scenario, prop: resolvent.Propagator, lam: float, delta: float,
                 sources, provenance: str) -> float:
        """C_lambda (alpha <= 1) or C^_lambda (alpha > 1) at lam, recorded in the ledger"""
        alpha = scenario.triple().alpha
        gradient = alpha > 1.0
        name = "C_hat_lambda" if gradient else "C_lambda"
        if self.ledger.has(name, provenance, lam=lam, delta=delta):
            return self.ledger.get(name, provenance, lam=lam, delta=delta)
        c = self._c4(scenario, delta, 1.0, gradient)
        res = resolvent.Resolvent(prop, lam, _scheme(scenario, lam))
        report = resolvent.holder_modulus(res, alpha, delta, sources, [0.0], c, gradient=gradient)
        # the ceiling already carries the Komatsu and sqrt(d) factors; strip sqrt(d) for k_lambda
        ceiling = report.ceiling / (np.sqrt(prop.grid.dim) if gradient else 1.0)
        measured = report.measured / (np.sqrt(prop.grid.dim) if gradient else 1.0)
        self.ledger.record(name, measured, "measured", lam=lam, delta=delta)
        self.ledger.record(name, ceiling, "gamma-ceiling", lam=lam, delta=delta)
        return measured if provenance == "measured" else ceiling

    def _resolvent(self, scenario: Scenario) -> List[CheckOutcome]:
        triple = scenario.triple()
        grid = scenario.grid.build()
        tol = scenario.tolerances
        prop = resolvent.Propagator.for_triple(triple, grid)
        sources = resolvent.random_ensemble(grid, scenario.ensemble_size, seed=scenario.mc.seed)
        g = scenario.source.build(grid)
        smooth = resolvent.random_ensemble(grid, scenario.ensemble_size, seed=scenario.mc.seed, square_waves=False)
        one = scenario.source.model_copy(update={"kind": "constant", "value": 1.0}).build(grid)
        checks, rows = [], []
        delta = scenario.delta if scenario.delta > 0 else 0.5 * min(triple.alpha, 1.0)
        for lam in scenario.lambdas:
            res = resolvent.Resolvent(prop, lam, _scheme(scenario, lam))
            constant_error = float(np.max(np.abs(res.apply(one, 0.0).values - 1.0 / lam)))
            checks.append(_check(scenario, f"R1=1/lambda lam={lam}", constant_error, tol.resolvent))
            excess = max(res.apply(p, 0.0).sup_norm() - p.sup_norm() / lam for p in smooth)
            checks.append(_check(scenario, f"sup-bound lam={lam}", excess, tol.resolvent))
            identity = res.identity_residual(g, [0.0, 0.5, 1.0])
            checks.append(_check(scenario, f"resolvent-identity lam={lam}", identity, tol.identity))
            c4 = self._c4(scenario, delta, 1.0)
            report = resolvent.holder_modulus(res, triple.alpha, delta, sources, [0.0], c4)
            self.ledger.record("C_lambda", report.measured, "measured", lam=lam, delta=delta)
            self.ledger.record("C_lambda", report.ceiling, "gamma-ceiling", lam=lam, delta=delta)
            checks.append(_check(scenario, f"holder<=ceiling lam={lam}", report.measured, report.ceiling))
            fractional = resolvent.fractional_modulus(res, triple.alpha, delta, smooth, [0.0], c4)
            self.ledger.record("fractional_modulus", fractional.measured, "measured", lam=lam, delta=delta)
            self.ledger.record("fractional_modulus", fractional.ceiling, "gamma-ceiling", lam=lam, delta=delta)
            checks.append(_check(scenario, f"fractional<=ceiling lam={lam}", fractional.measured, fractional.ceiling))
            rows.append({"lambda": lam, "delta": delta, "C_lambda_measured": report.measured,
                         "C_lambda_ceiling": report.ceiling, "fractional_measured": fractional.measured,
                         "fractional_ceiling": fractional.ceiling, "R1_error": constant_error,
                         "identity_residual": identity})
        measured = [r["C_lambda_measured"] for r in rows]
        if len(measured) > 1:
            decreasing = all(b < a for a, b in zip(measured, measured[1:]))
            checks.append(_check(scenario, "holder-decreasing", float(not decreasing), 0.0, passed=decreasing))
        self._write_table(rows, f"{scenario.name}_resolvent.csv")
        return checks

    #### perturbation scenarios ####

    def _contraction(self, scenario: Scenario, model: JumpKernelModel, prop: resolvent.Propagator, sources):
        """lambda0 search, then (lam, delta, k_lambda) at the requested or doubled lambda"""
        alpha = scenario.triple().alpha
        delta = perturb.contraction_delta(alpha, model.beta)
        modulus = lambda lam: self._modulus(scenario, prop, lam, delta, sources, scenario.moduli)
        result = perturb.find_lambda0(model, alpha, modulus, scenario.lambda_grid, provenance=scenario.moduli,
                                      ledger=self.ledger)
        rows = [{"lambda": lam, "k_lambda": k} for lam, k in zip(result.grid, result.k_values)]
        self._write_table(rows, f"{scenario.name}_lambda0.csv")
        lam = scenario.lambdas[0] if scenario.lambdas else 2.0 * result.lambda0
        modulus(lam)
        k = perturb.k_lambda(model, lam, delta, alpha, self.ledger, scenario.moduli)
        return result, lam, delta, k

    def _neumann(self, scenario: Scenario) -> List[CheckOutcome]:
        triple = scenario.triple()
        grid = scenario.grid.build()
        tol = scenario.tolerances
        model = _kernel(scenario, scenario.mc.delta_cut)
        prop = resolvent.Propagator.for_triple(triple, grid)
        sources = resolvent.random_ensemble(grid, scenario.ensemble_size, seed=scenario.mc.seed)
        g = scenario.source.build(grid)
        times = None if g.time_frozen else list(np.linspace(0.0, scenario.mc.T, 33))
        try:
            result, lam, delta, k = self._contraction(scenario, model, prop, sources)
            res = resolvent.Resolvent(prop, lam, _scheme(scenario, lam))
            kernel = perturb.KernelOperator(model, triple.alpha, grid)
            series = perturb.neumann_G(res, g, kernel, k, times=times)
        except (ContractionError, GridExhaustedError) as e:
            return [_check(scenario, "contraction", 1.0, 0.0, passed=False, detail=str(e))]

        checks = [_check(scenario, "lambda0-monotone", float(not result.monotone), 0.0, passed=result.monotone)]
        worst = max(perturb.apply_KR(res, p, kernel, 0.0).sup_norm() / p.sup_norm() for p in sources)
        checks.append(_check(scenario, "||KR g||/||g||<=k", worst, k + tol.operator))
        one = scenario.source.model_copy(update={"kind": "constant", "value": 1.0}).build(grid)
        checks.append(_check(scenario, "KR(const)=0", perturb.apply_KR(res, one, kernel, 0.0).sup_norm(), tol.operator))

        report = series.report
        trace = report.trace
        ratios = [row["iterate_ratio"] for row in trace[1:]]
        if ratios:
            checks.append(_check(scenario, "iterate-ratio", max(ratios), k + tol.ratio_slack))
        checks.append(_check(scenario, "||G g||<=2||g||/lam", report.sup_norm, 2.0 * report.g_norm / lam + tol.operator))
        if g.time_frozen and kernel.time_independent:
            residual = perturb.perturbed_identity_residual(series, kernel, g, [0.0])
            checks.append(_check(scenario, "perturbed-identity", residual, tol.perturbed_identity + report.truncation_bound))
        self._write_table(trace, f"{scenario.name}_trace.csv")
        self._write_record(report, f"{scenario.name}_neumann.json")

        if scenario.p is not None and scenario.q is not None:
            checks.extend(self._krylov_constants(scenario, model, res, kernel, k))
        return checks

    def _krylov_constants(self, scenario: Scenario, model: JumpKernelModel, res: resolvent.Resolvent,
                          kernel: perturb.KernelOperator, k: float) -> List[CheckOutcome]:
        """l_lambda at lam, 2 lam, 4 lam, and the L^q L^p bound on a time-limited bump"""
        triple = scenario.triple()
        alpha, beta, d, p, q = triple.alpha, model.beta, triple.dim, scenario.p, scenario.q
        lam = res.lam
        inputs = perturb.krylov_inputs(alpha, beta, d, p, q)
        r = inputs["r"]
        self._c4(scenario, 0.0, r)
        if alpha <= 1.0:
            self._c4(scenario, beta, r)
        else:
            self._c4(scenario, inputs["c5@delta"], r, gradient=True)
        b_m = model.beta_moment_bound()
        rows = []
        for scale in (1.0, 2.0, 4.0):
            value = perturb.krylov_constant(scale * lam, p, q, alpha, beta, d, b_m, self.ledger)
            rows.append({"lambda": scale * lam, "l_lambda": value})
        values = [row["l_lambda"] for row in rows]
        ok = all(b <= a for a, b in zip(values, values[1:]))
        checks = [_check(scenario, "l_lambda-nonincreasing", float(not ok), 0.0, passed=ok)]

        # unit bump on [0, T] x R^d, zero afterwards
        grid = res.grid
        horizon = scenario.mc.T
        times = np.linspace(0.0, horizon, 9)
        bump = np.exp(-np.sum(grid.coordinates() ** 2, axis=-1))
        g = SpaceTimeFunction.from_samples(grid, times, np.broadcast_to(bump, (len(times),) + grid.shape).copy())
        norm = resolvent.lq_lp_norm(g, p, q, horizon)
        c_lam = self.ledger.get("c_lambda", lam=lam, p=p, q=q)
        r_sup = res.apply(g, 0.0).sup_norm()
        g_sup = perturb.neumann_G(res, g, kernel, k, times=times).value(0.0).sup_norm()
        rows[0].update({"lq_lp_norm": norm, "c_lambda": c_lam, "R_sup": r_sup, "G_sup": g_sup})
        checks.append(_check(scenario, "||R g||<=c_lambda||g||_LqLp", r_sup, c_lam * norm))
        checks.append(_check(scenario, "||G g||<=l_lambda||g||_LqLp", g_sup, values[0] * norm))
        self._write_table(rows, f"{scenario.name}_krylov_constant.csv")
        return checks

    def _mollify(self, scenario: Scenario) -> List[CheckOutcome]:
        triple = scenario.triple()
        grid = scenario.grid.build()
        model = scenario.kernel_model()
        f = approx.TrigTestFunction(amplitudes=scenario.source.amplitudes, wavevectors=scenario.source.wavevectors,
                                    phases=scenario.source.phases)
        rows, slope = approx.mollify_sweep(f, model, triple.alpha, scenario.n_list, grid)
        checks = []
        for row in rows:
            b_mn = approx.mollify_kernel(model, row["n"]).beta_moment_bound()
            row["B_M_n"] = b_mn
            row["B_M"] = model.beta_moment_bound()
            checks.append(_check(scenario, f"mollify n={row['n']}", row["measured_sup"], row["bound"]))
            checks.append(_check(scenario, f"B_Mn<=B_M n={row['n']}", b_mn, row["B_M"] * (1.0 + 1e-12)))
        checks.append(_check(scenario, "mollify-slope", slope, scenario.tolerances.mollify_slope))
        self._write_table(rows, f"{scenario.name}_mollify.csv")
        return checks

    def _truncate(self, scenario: Scenario) -> List[CheckOutcome]:
        triple = scenario.triple()
        grid = scenario.grid.build()
        model = scenario.kernel_model().model_copy(update={"cutoff": None})
        f = approx.TrigTestFunction(amplitudes=scenario.source.amplitudes, wavevectors=scenario.source.wavevectors,
                                    phases=scenario.source.phases)
        rows, exponent = approx.truncation_sweep(f, model, triple.alpha, scenario.delta_cuts, grid)
        checks = [_check(scenario, f"truncate delta={r['delta_cut']}", r["measured_sup"], r["bound"]) for r in rows]
        for row in rows:
            cut = approx.truncate_kernel(model, row["delta_cut"])
            row["compensator_lipschitz"] = approx.compensator_lipschitz(cut, triple.alpha)
        # the measured gap decays at least as fast as the certified rate
        rate = triple.alpha - model.beta
        checks.append(_check(scenario, "truncation-exponent", -exponent, -0.85 * rate,
                             detail=f"fitted {exponent:.3f}, certified rate {rate:.3f}"))
        self._write_table(rows, f"{scenario.name}_truncate.csv")
        return checks

    #### monte carlo scenarios ####

    def _sampler(self, scenario: Scenario, model: Optional[JumpKernelModel]) -> simulate.PathSampler:
        mc = scenario.mc
        settings = simulate.SamplerSettings(dt=mc.dt, eps=mc.eps, small_jump_gaussian=mc.small_jump_gaussian,
                                            include_stable=mc.include_stable, block_size=mc.block)
        return simulate.PathSampler(scenario.triple(), settings, model)

    def _simulate(self, scenario: Scenario) -> List[CheckOutcome]:
        mc, tol = scenario.mc, scenario.tolerances
        model = _kernel(scenario, mc.delta_cut) if scenario.kernel is not None else None
        sampler = self._sampler(scenario, model)
        ensemble = simulate.sample_ensemble(sampler, mc.s, mc.x, mc.T, mc.paths, mc.seed)
        grid = scenario.grid.build()
        g = scenario.source.build(grid)
        checks, rows = [], []
        for lam in scenario.lambdas or [1.0]:
            est = simulate.estimate_V(ensemble, simulate.spacetime_observable(g), lam, g.sup_norm())
            rows.append({"lambda": lam, **est.model_dump()})
        self._write_table(rows, f"{scenario.name}_estimates.csv")

        first = simulate.sample_path(sampler, mc.s, mc.x, mc.T, mc.seed)
        again = simulate.sample_path(sampler, mc.s, mc.x, mc.T, mc.seed)
        same = bool(np.array_equal(first.states, again.states))
        checks.append(_check(scenario, "seed-determinism", float(not same), 0.0, passed=same))

        span = mc.T - mc.s
        cdf = None
        if scenario.oracle == "gaussian":
            variance = 2.0 * scenario.triple().diffusion[0, 0] * span
            cdf = stats.norm(scale=np.sqrt(variance)).cdf
        elif scenario.oracle == "cauchy":
            scale = scenario.triple().stable.mu.weights[0] * np.pi * span
            cdf = stats.cauchy(scale=scale).cdf
        elif scenario.oracle == "stable-lattice":
            field = density.invert_density(triple_symbol(scenario.triple()), span, grid)
            cdf = simulate.lattice_cdf(field)
        if cdf is not None:
            statistic, pvalue = simulate.ks_marginal_test(ensemble, cdf)
            self._write_table([{"statistic": statistic, "pvalue": pvalue, "paths": ensemble.paths}], f"{scenario.name}_ks.csv")
            checks.append(_check(scenario, "ks-marginal", pvalue, tol.ks_pvalue, passed=pvalue > tol.ks_pvalue))
        return checks

    def _verify(self, scenario: Scenario) -> List[CheckOutcome]:
        triple = scenario.triple()
        grid = scenario.grid.build()
        mc, tol = scenario.mc, scenario.tolerances
        model = _kernel(scenario, mc.delta_cut)
        prop = resolvent.Propagator.for_triple(triple, grid)
        sources = resolvent.random_ensemble(grid, scenario.ensemble_size, seed=mc.seed)
        try:
            _, lam, _, k = self._contraction(scenario, model, prop, sources)
            res = resolvent.Resolvent(prop, lam, _scheme(scenario, lam))
            kernel = perturb.KernelOperator(model, triple.alpha, grid)
            solver = perturb.NeumannSolver(res, kernel, k)
        except (ContractionError, GridExhaustedError) as e:
            return [_check(scenario, "contraction", 1.0, 0.0, passed=False, detail=str(e))]

        sampler = self._sampler(scenario, model)
        g = scenario.source.build(grid)
        times = None if g.time_frozen else list(np.linspace(0.0, mc.T, 33))
        record, _ = simulate.mc_vs_neumann(sampler, solver, g, mc.s, mc.x, mc.T, mc.paths, mc.seed, times)
        self._write_record(record, f"{scenario.name}_comparison.json")
        checks = [_check(scenario, "mc-vs-neumann", abs(record.mc_mean - record.neumann_value), record.allowance)]

        ensemble = simulate.sample_ensemble(sampler, mc.s, mc.x, mc.T, mc.paths, mc.seed + 1)
        rows = []
        base = np.pi / grid.half_extent
        # discount with e^{-lam (T-s)} <= e^{-8} so the horizon tail stays negligible
        discount = max(lam, 8.0 / (mc.T - mc.s))
        for i, target in enumerate((1.0, 2.0, 3.0)):
            # lattice-periodic cosines near the target frequencies
            freq = base * max(1, round(target / base))
            f = LatticeField(grid=grid, values=np.cos(freq * grid.coordinates()[..., 0] + 0.3 * i))
            report = simulate.dynkin_residual(ensemble, f, prop, kernel, mc.s, mc.T, sampler)
            rows.append({"frequency": freq, "form": "path", "lambda": 0.0, **report.model_dump()})
            checks.append(_check(scenario, f"dynkin f{i}", report.residual, 3.0 * report.stderr + report.allowance,
                                 passed=report.passed))
            report = simulate.resolvent_dynkin_residual(ensemble, f, discount, prop, kernel, sampler)
            rows.append({"frequency": freq, "form": "resolvent", "lambda": discount, **report.model_dump()})
            checks.append(_check(scenario, f"resolvent-dynkin f{i}", report.residual,
                                 3.0 * report.stderr + report.allowance, passed=report.passed))
        self._write_table(rows, f"{scenario.name}_dynkin.csv")

        if scenario.p is not None:
            checks.extend(self._krylov_mc(scenario, model))
        return checks

    def _krylov_mc(self, scenario: Scenario, model: JumpKernelModel) -> List[CheckOutcome]:
        mc, tol = scenario.mc, scenario.tolerances
        triple = scenario.triple()
        raw = scenario.kernel_model()
        rows, checks = [], []
        baseline = None
        for n in scenario.n_list:
            smooth = approx.mollify_kernel(raw, n)
            if mc.delta_cut:
                smooth = approx.truncate_kernel(smooth, mc.delta_cut)
            ensemble = simulate.sample_ensemble(self._sampler(scenario, smooth), mc.s, mc.x, mc.T, mc.paths, mc.seed + 2)
            report = simulate.krylov_mc_check(ensemble, scenario.widths, scenario.p, triple.alpha, model.beta, mc.x)
            baseline = baseline or report.baseline
            for row in report.rows:
                rows.append({"n": n, **row})
            checks.append(_check(scenario, f"krylov n={n}", report.max_ratio, tol.krylov_factor * baseline))
        self._write_table(rows, f"{scenario.name}_krylov_mc.csv")
        return checks


def run(config: ExperimentConfig, output_dir: Optional[Path] = None,
        on_start: Optional[Callable[[Scenario], None]] = None) -> RunSummary:
    return ScenarioRunner(config, output_dir, on_start).run()
