"""
Batch driver: config → solve → geometry → checks → reports.

Instances run in worker threads (asyncio.to_thread, bounded by a semaphore);
the RunReport is assembled afterwards in config order so the aggregate is
byte-identical for identical config and seed.
"""
import asyncio
import io
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import aiofiles
import numpy as np
from pydantic import BaseModel, Field

from app.core.config import settings
from app.core.stencils import CHECK_MARGIN, interior_region, make_grid, region_max
from app.models.grid import Grid, ScalarField
from app.models.ledger import ConstantLedger
from app.models.phase import PhaseField
from app.models.potential import PotentialField, SolveConfig
from app.models.run_config import ConfigError, InstanceConfig, RunConfig
from app.schemas.report import (
    TABLE_HEADER,
    ConvergenceRow,
    EstimateReport,
    InstanceReport,
    RunReport,
    SolveSummary,
)
from app.services.cutoff_service import CutoffBoundError, cutoff_service
from app.services.estimates_service import DEFAULT_TILT, estimates_service
from app.services.geometry_service import geometry_service
from app.services.identities_service import identities_service
from app.services.phase_service import phase_service
from app.services.solver_service import SolverConvergenceError, solver_service

logger = logging.getLogger(__name__)

ORDER_TARGET = 2.0
ORDER_WINDOW = 0.3
LEDGER_FAMILY = 100
CONVERGENCE_HEADER = ["instance_id", "h", "error", "observed_order"]
FIELD_NAMES = ("u", "theta", "V", "b", "jacobi")


class FieldDump(BaseModel):
    """Node arrays of the finest solved grid of one instance, for plain-text dumps."""

    instance_id: str
    grid: Grid
    fields: Dict[str, Any] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True


class InstanceOutcome(BaseModel):
    report: InstanceReport
    dump: Optional[FieldDump] = None
    doubling: List[EstimateReport] = Field(default_factory=list)
    gradient: List[EstimateReport] = Field(default_factory=list)


class RunService:
    # ------------------------------------------------------------------
    # Per-instance pipeline
    # ------------------------------------------------------------------
    def _problem(self, inst: InstanceConfig, grid: Grid) -> Tuple[PhaseField, ScalarField]:
        try:
            if inst.mode == "manufactured":
                return solver_service.manufactured_problem(inst.boundary, grid)
            phase = phase_service.build_phase_signed(grid, inst.phase)
            boundary = solver_service.potential_from_analytic(inst.boundary, grid).u
            return phase, boundary
        except ValueError as e:
            raise ConfigError(f"instance {inst.id!r} on n={grid.n}: {e}") from e

    @staticmethod
    def _guarded(name: str, inst_id: str, n: int, fn: Callable[[], EstimateReport]) -> EstimateReport:
        """Run a check; a raised ValueError becomes a failing row instead of aborting the run."""
        try:
            report = fn()
        except ValueError as e:
            logger.error(f"✗ {inst_id}@n{n} {name}: {e}")
            return EstimateReport(name=name, lhs=float("nan"), rhs=float("nan"), defect=-math.inf,
                                  instance_id=inst_id, grid_n=n, details={"error": str(e)})
        return report.model_copy(update={"instance_id": inst_id, "grid_n": n})

    def _reflection_report(self, u: PotentialField, phase: PhaseField) -> EstimateReport:
        """Jacobi defect of (u, Θ) against that of (−u, −Θ) on the 3h interior."""
        region = interior_region(u.grid, CHECK_MARGIN)
        direct = estimates_service.jacobi_defect_field(u, phase).values
        mirrored = estimates_service.jacobi_defect_field(u.negated(), phase.negated()).values
        worst, loc = region_max(np.abs(direct - mirrored), region)
        scale = max(1.0, float(np.max(np.abs(direct[region.mask]))))
        return EstimateReport(
            name="jacobi_reflection",
            lhs=float(direct[loc]),
            rhs=float(mirrored[loc]),
            defect=-worst,
            location=u.grid.node_xy(loc),
            tolerance=1e-12 * scale,
        )

    def _grid_checks(
        self, inst: InstanceConfig, config: RunConfig, u: PotentialField, phase: PhaseField
    ) -> List[EstimateReport]:
        toggles, tol = config.checks, config.tolerances
        c, n = inst.ball_center(), u.grid.n
        region = interior_region(u.grid, CHECK_MARGIN)
        plan: List[Tuple[str, bool, Callable[[], EstimateReport]]] = [
            ("jacobi", toggles.jacobi, lambda: estimates_service.jacobi_report(
                u, phase, max_residual=tol.max_solved_residual, slope=tol.jacobi_slope)),
            ("jacobi_reflection", toggles.reflection, lambda: self._reflection_report(u, phase)),
            ("doubling", toggles.doubling, lambda: estimates_service.doubling_report(u, phase, c, inst.r)),
            ("test_function_interior_max", toggles.test_function, lambda: self._test_function(inst, u, phase)),
            ("gradient_estimate", toggles.gradient, lambda: estimates_service.gradient_estimate_report(
                u, phase, inst.R, center=c, ratio_bound=tol.gradient_ratio_bound)),
            ("gradient_tilt", toggles.gradient, lambda: estimates_service.gradient_tilt_report(
                u, phase, inst.R, center=c, ratio_bound=tol.gradient_ratio_bound)),
            ("volume_bound", toggles.volume, lambda: estimates_service.volume_bound_report(
                u, phase, inst.R, center=c, margin=tol.quadrature_margin)),
            ("volume_identity", toggles.volume_identity, lambda: estimates_service.volume_identity_check(
                u, phase, max_residual=tol.max_solved_residual)),
            ("tan_form", toggles.tan_form, lambda: estimates_service.tan_form_check(
                u, phase, max_residual=tol.max_solved_residual)),
            ("sigma2_divergence", toggles.sigma2, lambda: estimates_service.sigma2_divergence_check(u)),
        ]
        reports = [self._guarded(name, inst.id, n, fn) for name, enabled, fn in plan if enabled]
        if toggles.interpolation:
            reports.append(self._guarded("interpolation_pos", inst.id, n,
                                         lambda: phase_service.check_phase_interpolation(phase, region, 1)))
            reports.append(self._guarded("interpolation_neg", inst.id, n,
                                         lambda: phase_service.check_phase_interpolation(phase, region, -1)))
            reports.append(self._guarded("interpolation_weighted", inst.id, n,
                                         lambda: phase_service.check_interpolation_weighted(phase, c, inst.r)))
        return reports

    def _test_function(self, inst: InstanceConfig, u: PotentialField, phase: PhaseField) -> EstimateReport:
        c = inst.ball_center()
        ledger = estimates_service.choose_constants(inst.gamma, estimates_service.gamma_for(u, c, inst.r))
        result = estimates_service.test_function_P(u, phase, ledger, c, inst.r)
        return estimates_service.test_function_report(u, result)

    def _dump(self, inst: InstanceConfig, u: PotentialField, phase: PhaseField) -> FieldDump:
        return FieldDump(
            instance_id=inst.id,
            grid=u.grid,
            fields={
                "u": u.values,
                "theta": phase.values,
                "V": geometry_service.volume_field(u).values,
                "b": geometry_service.b_field(u).values,
                "jacobi": estimates_service.jacobi_defect_field(u, phase).values,
            },
        )

    def _convergence(self, inst: InstanceConfig, solves: List[SolveSummary]) -> Tuple[List[ConvergenceRow], List[EstimateReport]]:
        rows: List[ConvergenceRow] = []
        checks: List[EstimateReport] = []
        done = [s for s in solves if s.converged and s.max_error is not None]
        for k, s in enumerate(done):
            order = None
            if k > 0:
                prev = done[k - 1]
                if s.max_error > 0 and prev.max_error > 0:
                    order = math.log(prev.max_error / s.max_error) / math.log(prev.h / s.h)
            rows.append(ConvergenceRow(instance_id=inst.id, h=s.h, error=s.max_error, observed_order=order))
        if inst.convergence:
            for row in rows[1:]:
                order = row.observed_order
                checks.append(EstimateReport(
                    name="convergence_order",
                    lhs=float("nan") if order is None else order,
                    rhs=ORDER_TARGET,
                    defect=-math.inf if order is None else ORDER_WINDOW - abs(order - ORDER_TARGET),
                    instance_id=inst.id,
                    details={"h": row.h, "error": row.error},
                ))
        return rows, checks

    def run_instance(self, inst: InstanceConfig, config: RunConfig) -> InstanceOutcome:
        tol = config.tolerances
        solve_cfg = SolveConfig(newton_tol=tol.newton_tol, max_newton=tol.max_newton, krylov_rtol=tol.krylov_rtol)
        report = InstanceReport(instance_id=inst.id)
        per_grid: Dict[int, Dict[str, EstimateReport]] = {}
        dump: Optional[FieldDump] = None

        logger.info(f"▶ Instance {inst.id} ({inst.mode}), grids {config.grid_sizes}")
        for n in config.grid_sizes:
            grid = make_grid(inst.origin, inst.extent, n)
            phase, boundary = self._problem(inst, grid)
            if config.checks.zero_set:
                report.checks.append(self._guarded("zero_set_witness", inst.id, n,
                                                   lambda: phase_service.zero_set_witness(phase)))
            try:
                result = solver_service.solve_dirichlet(phase, boundary, grid, solve_cfg)
            except SolverConvergenceError as e:
                logger.error(f"✗ {inst.id}@n{n}: {e}")
                report.solves.append(SolveSummary(
                    instance_id=inst.id, grid_n=n, h=grid.h,
                    residual_sup=e.residual_history[-1] if e.residual_history else math.inf,
                    iterations=max(len(e.residual_history) - 1, 0), path=e.path, converged=False,
                    residual_history=e.residual_history, message=str(e),
                ))
                continue

            max_error = None
            if inst.exact or inst.mode == "manufactured":
                exact = solver_service.potential_from_analytic(inst.boundary, grid).values
                max_error = float(np.max(np.abs(result.u.values - exact)))
            report.solves.append(SolveSummary(
                instance_id=inst.id, grid_n=n, h=grid.h, residual_sup=result.residual_sup,
                iterations=result.iterations, path=result.path, max_error=max_error,
                residual_history=result.residual_history,
            ))
            checks = self._grid_checks(inst, config, result.u, phase)
            report.checks.extend(checks)
            per_grid[n] = {c.name: c for c in checks}
            dump = self._dump(inst, result.u, phase)

        rows, order_checks = self._convergence(inst, report.solves)
        report.convergence = rows
        report.checks.extend(order_checks)
        report.checks.extend(self._refinement_checks(inst, config, per_grid))

        doubling = [per_grid[n]["doubling"] for n in sorted(per_grid) if "doubling" in per_grid[n]]
        failed = [c.name for c in report.checks if not c.passed]
        mark = "✓" if not failed and all(s.converged for s in report.solves) else "✗"
        logger.info(f"{mark} Instance {inst.id}: {len(report.checks)} checks, failing {failed or 'none'}")
        gradient = [per_grid[n]["gradient_estimate"] for n in sorted(per_grid) if "gradient_estimate" in per_grid[n]]
        return InstanceOutcome(
            report=report,
            dump=dump,
            doubling=[d for d in doubling if np.isfinite(d.defect)],
            gradient=[g for g in gradient if "error" not in g.details],
        )

    def _refinement_checks(
        self, inst: InstanceConfig, config: RunConfig, per_grid: Dict[int, Dict[str, EstimateReport]]
    ) -> List[EstimateReport]:
        out: List[EstimateReport] = []
        sizes = sorted(per_grid)
        pairs = list(zip(sizes[:-1], sizes[1:]))

        def usable(n: int, name: str) -> Optional[EstimateReport]:
            r = per_grid[n].get(name)
            return r if r is not None and "error" not in r.details else None

        jac = [r for r in (usable(n, "jacobi") for n in sizes) if r is not None]
        if config.checks.jacobi and len(jac) >= 2:
            out.append(estimates_service.jacobi_refinement(jac))
        for coarse_n, fine_n in pairs:
            if config.checks.doubling:
                coarse, fine = usable(coarse_n, "doubling"), usable(fine_n, "doubling")
                if coarse and fine:
                    out.append(estimates_service.doubling_stability(coarse, fine)
                               .model_copy(update={"grid_n": fine_n}))
            if config.checks.sigma2 and inst.convergence:
                coarse, fine = usable(coarse_n, "sigma2_divergence"), usable(fine_n, "sigma2_divergence")
                if coarse and fine:
                    out.append(estimates_service.sigma2_refinement(coarse, fine)
                               .model_copy(update={"grid_n": fine_n}))
        return out

    # ------------------------------------------------------------------
    # Global checks
    # ------------------------------------------------------------------
    def ledger_family(self, seed: int, count: int = LEDGER_FAMILY) -> List[EstimateReport]:
        """choose_constants over seeded (γ, Γ) pairs plus the above-threshold rejection row."""
        rng = np.random.default_rng(seed)
        gammas = rng.uniform(0.05, 0.95, count)
        Gammas = rng.uniform(1.0, 10.0, count)
        worst: Optional[EstimateReport] = None
        valid = 0
        for g, G in zip(gammas, Gammas):
            try:
                row = estimates_service.ledger_report(estimates_service.choose_constants(float(g), float(G)))
            except ValueError as e:
                row = EstimateReport(name="constant_ledger", lhs=0.0, rhs=8.0, defect=-8.0, details={"error": str(e)})
            valid += row.passed
            if worst is None or row.defect < worst.defect:
                worst = row
        family = EstimateReport(
            name="constant_ledger_family",
            lhs=float(valid),
            rhs=float(count),
            defect=float(valid - count),
            details={"seed": seed, "pairs": count, "worst": worst.details},
        )

        g, G = float(gammas[0]), float(Gammas[0])
        alpha = 2.0 * ConstantLedger.alpha_threshold(g, G)
        lo, hi = ConstantLedger.beta_window(alpha, g, G)
        # β at the geometric mean of the empty window; the feasibility pair must fail there
        trial_beta = float(np.sqrt(lo * hi))
        failing = [
            k for k, ok in ConstantLedger(alpha=alpha, beta=trial_beta, gamma=g, Gamma=G).inequalities().items()
            if not ok
        ]
        gap = (lo - hi) / hi
        rejection = EstimateReport(
            name="ledger_rejection",
            lhs=lo,
            rhs=hi,
            defect=gap if "feasibility_pair" in failing else -abs(gap) - 1.0,
            details={"alpha": alpha, "gamma": g, "Gamma": G, "beta": trial_beta, "failing_families": failing},
        )
        return [family, rejection]

    def global_checks(
        self,
        config: RunConfig,
        doubling: List[EstimateReport],
        gradient: Optional[List[EstimateReport]] = None,
    ) -> List[EstimateReport]:
        toggles = config.checks
        reports: List[EstimateReport] = []
        if toggles.cutoffs:
            logger.info("Cutoffs: building ρ1..ρ5 and χ")
            try:
                cutoffs = cutoff_service.build_cutoffs()
                reports.append(cutoff_service.cutoff_report(cutoffs))
                reports.append(cutoff_service.sec_csc_check(cutoffs))
            except CutoffBoundError as e:
                logger.error(f"✗ Cutoff construction failed: {e}")
                reports.append(EstimateReport(name="cutoffs", lhs=float("nan"), rhs=float("nan"),
                                              defect=-math.inf, details={"error": str(e)}))
        if toggles.ledger:
            reports.extend(self.ledger_family(config.seed))
        if toggles.doubling and doubling:
            reports.append(estimates_service.doubling_constant(doubling))
        if toggles.gradient:
            if gradient:
                reports.append(estimates_service.gradient_ratio_family(gradient, config.tolerances.gradient_ratio_bound))
            presets = [inst.boundary for inst in config.instances]
            presets += [p.tilted(*DEFAULT_TILT) for p in presets]
            if presets:
                reports.append(estimates_service.gradient_scaling_report(presets))
        if toggles.identities:
            reports.extend(identities_service.identity_suite(config.identity_samples, config.seed))
        return reports

    # ------------------------------------------------------------------
    # Orchestration
    # ------------------------------------------------------------------
    async def execute(self, config: RunConfig) -> Tuple[RunReport, List[FieldDump]]:
        workers = settings.max_workers or max(1, min(len(config.instances), 4))
        gate = asyncio.Semaphore(workers)

        async def one(inst: InstanceConfig) -> InstanceOutcome:
            async with gate:
                return await asyncio.to_thread(self.run_instance, inst, config)

        logger.info("=" * 60)
        logger.info(f"Run '{config.name}': {len(config.instances)} instances, {workers} workers, seed {config.seed}")
        logger.info("=" * 60)
        outcomes = await asyncio.gather(*(one(inst) for inst in config.instances))

        doubling = [d for o in outcomes for d in o.doubling]
        gradient = [g for o in outcomes for g in o.gradient]
        global_reports = await asyncio.to_thread(self.global_checks, config, doubling, gradient)
        report = RunReport(
            app_version=settings.app_version,
            seed=config.seed,
            config_name=config.name,
            instances=[o.report for o in outcomes],
            global_checks=global_reports,
        ).refresh_status()
        return report, [o.dump for o in outcomes if o.dump is not None]

    @staticmethod
    def _table(header: List[str], rows: List[List[str]]) -> str:
        return "\n".join("\t".join(r) for r in [header, *rows]) + "\n"

    @staticmethod
    def _field_text(grid: Grid, values: np.ndarray) -> str:
        buf = io.StringIO()
        header = f"{grid.n} {grid.n} {grid.h!r} {grid.origin[0]!r} {grid.origin[1]!r}"
        np.savetxt(buf, values, fmt="%.17g", header=header)
        return buf.getvalue()

    async def emit_reports(self, report: RunReport, out_dir: str, dumps: Optional[List[FieldDump]] = None) -> List[Path]:
        """checks.tsv, convergence.tsv, report.json and fields/<id>_<name>.txt under out_dir."""
        out = Path(out_dir)
        (out / "fields").mkdir(parents=True, exist_ok=True)
        files: Dict[Path, str] = {
            out / "checks.tsv": self._table(TABLE_HEADER, [c.to_row() for c in report.all_checks()]),
            out / "convergence.tsv": self._table(CONVERGENCE_HEADER, [
                [r.instance_id, repr(r.h), repr(r.error), "" if r.observed_order is None else repr(r.observed_order)]
                for r in report.convergence_table()
            ]),
            out / "report.json": report.model_dump_json(indent=2) + "\n",
        }
        for dump in dumps or []:
            for name in FIELD_NAMES:
                files[out / "fields" / f"{dump.instance_id}_{name}.txt"] = self._field_text(dump.grid, dump.fields[name])

        for path, text in files.items():
            async with aiofiles.open(path, "w", encoding="utf-8") as f:
                await f.write(text)
        logger.info(f"✓ Wrote {len(files)} files to {out}")
        return list(files)

    def run(
        self,
        config_path: str,
        seed: Optional[int] = None,
        out: Optional[str] = None,
        only: Optional[str] = None,
    ) -> int:
        """Exit status: 0 pass, 1 config/IO, 2 solver, 3 checker."""
        try:
            config = RunConfig.from_toml(config_path)
            update: Dict[str, Any] = {}
            if seed is not None:
                update["seed"] = seed
            if out is not None:
                update["output_dir"] = out
            if only is not None:
                update["checks"] = config.checks.only(only)
            config = config.model_copy(update=update)
        except ConfigError as e:
            logger.error(f"✗ Config error: {e}")
            return 1

        try:
            report, dumps = asyncio.run(self.execute(config))
        except ConfigError as e:
            logger.error(f"✗ Config error: {e}")
            return 1

        try:
            asyncio.run(self.emit_reports(report, config.output_dir, dumps))
        except OSError as e:
            logger.error(f"✗ Cannot write reports to {config.output_dir}: {e}")
            return 1

        logger.info("=" * 60)
        if report.passed:
            logger.info(f"✓ PASS: {len(report.all_checks())} checks, {len(report.all_solves())} solves")
        else:
            failing = [f"{c.instance_id}:{c.name}" for c in report.all_checks() if not c.passed]
            logger.error(f"✗ FAIL at stage '{report.failed_stage}' (exit {report.exit_code}); failing {failing[:10]}")
        logger.info("=" * 60)
        return report.exit_code


run_service = RunService()
