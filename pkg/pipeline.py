"""pipeline.py

Orchestration behind the CLI commands.

One ``Pipeline`` owns a run: the parsed config, the spectral cache and the
single ``ArtifactWriter`` every file goes through. Leaves are built once per
(L, beta) point and shared between stages of the same run.

Output layout under the run directory:

    foliation/summary.json
    leaf/<tag>/{leaf.json,h_rho.qmat,states.qmat}
    diagnostics/<tag>/<observable>.{csv,json}, diagnostics/<tag>/shells.json
    diagnostics/benchmark_commuting/L<L>/..., diagnostics/benchmark_integrable/L<L>/...
    evolution/<tag>/<observable>.csv, evolution/<tag>/summary.json
    figures/fig1_points.csv, figures/fig1_curves.csv
    report.pdf
    manifest.json
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional

import config
import figures
import qmat
import report_pdf
from dynamics import CSV_HEADER as EVOLUTION_HEADER
from dynamics import band_coverage, compare_evolutions, time_grid
from errors import InvalidParameter
from experiment_config import ExperimentConfig
from foliation import (
    Leaf,
    average_variance,
    commuting_leaf,
    decomposition_variance_oracle,
    leaf_entropy,
    leaf_gap,
    optimal_ensemble,
    qfi,
    save_leaf,
)
from operator_core import DensityMatrix, HermitianOperator, SpectralDecomposition, boltzmann_state
from run_manifest import ArtifactWriter, RunManifest, format_float, rounded
from spectral_cache import SpectralCache
from spinchain import ObservableCatalog, identity_observable, local_observables, main_observables
from typicality import CSV_HEADER as DIAGNOSTICS_HEADER
from typicality import DiagnosticsCurve, ShellReport, build_shell_report, default_shell_size, diagnostics, incoherence_ratio

logger = logging.getLogger(__name__)

COMMANDS = ("foliate", "diagnostics", "evolve", "figure")


@dataclass(frozen=True)
class RunOptions:
    threads: int = config.THREADS
    use_cache: bool = True
    cache_dir: Optional[str] = None


@dataclass(frozen=True, eq=False)
class Problem:
    """One (L, beta) point: the foliating Hamiltonian and the state to foliate."""

    L: int
    beta: Optional[float]
    tag: str
    H: HermitianOperator
    H_spec: SpectralDecomposition
    rho: DensityMatrix
    H0: Optional[HermitianOperator] = None
    H0_spec: Optional[SpectralDecomposition] = None


@dataclass
class RunResult:
    out_dir: str
    manifest_path: str
    summary: list[dict]


def observable_filename(label: str) -> str:
    return label.replace("@", "_").replace(",", "-")


class Pipeline:
    def __init__(self, cfg: ExperimentConfig, command: str, options: RunOptions | None = None):
        self.cfg = cfg
        self.command = command
        self.options = options or RunOptions()
        self.cache = SpectralCache(self.options.cache_dir, enabled=self.options.use_cache and not config.CACHE_DISABLED)
        self.manifest = RunManifest(config_hash=cfg.config_hash(), command=command, config=cfg.document)
        self.writer = ArtifactWriter(cfg.out_dir, self.manifest)
        self._problems: dict[tuple, Problem] = {}
        self._leaves: dict[str, Leaf] = {}
        self._summary: dict[str, dict] = {}

    # problems and leaves

    def points(self) -> list[tuple[int, Optional[float]]]:
        return [(L, beta) for L in self.cfg.sweep_L for beta in self.cfg.sweep_beta]

    def problem(self, L: int, beta: Optional[float]) -> Problem:
        key = (L, beta)
        if key in self._problems:
            return self._problems[key]
        cfg = self.cfg
        kind = cfg.state.kind
        with self.writer.stage(f"hamiltonians L={L}"):
            H, s = self.cache.hamiltonian(cfg.model_at(L))
            if kind == "uniform":
                problem = Problem(L, None, f"L{L}_uniform", H, s, DensityMatrix.maximally_mixed(H.dim))
            elif kind == "file":
                rho = qmat.read_density(cfg.state.file)
                if rho.dim != H.dim:
                    raise InvalidParameter(f"state file has d={rho.dim}, model has d={H.dim}")
                problem = Problem(L, None, f"L{L}_file", H, s, rho)
            else:
                H0, s0 = self.cache.hamiltonian(cfg.h0_at(L))
                tag = f"L{L}_beta{format_float(beta)}"
                if cfg.swap_roles:
                    # thermal state of the chaotic model, foliated by the integrable H0
                    rho = boltzmann_state(H, beta, spectral=s)
                    problem = Problem(L, beta, tag, H0, s0, rho, H, s)
                else:
                    rho = boltzmann_state(H0, beta, spectral=s0)
                    problem = Problem(L, beta, tag, H, s, rho, H0, s0)
        self._problems[key] = problem
        return problem

    def leaf(self, problem: Problem) -> Leaf:
        if problem.tag in self._leaves:
            return self._leaves[problem.tag]
        fol = self.cfg.foliation
        with self.writer.stage(f"foliate {problem.tag}"):
            leaf = optimal_ensemble(
                problem.rho,
                problem.H,
                gap_tol=fol.gap_tol,
                rank_floor=fol.rank_floor,
                allow_degenerate=fol.allow_degenerate,
            )
            row = {
                "tag": problem.tag,
                "L": problem.L,
                "beta": problem.beta,
                "dim": leaf.dim,
                "incoherence_ratio": rounded(incoherence_ratio(leaf)),
                "qfi": rounded(qfi(problem.rho, problem.H)),
                "leaf_entropy": rounded(leaf_entropy(leaf)),
                "gap": rounded(leaf_gap(leaf)),
                "source_energy": rounded(leaf.source_energy),
                "unique": leaf.unique,
                "masked": leaf.mask_count,
                "oracle_margin": self._oracle_margin(problem, leaf),
            }
        logger.info(
            "%s: incoherence/log d = %.4f, QFI = %.6g, S_H = %.4f",
            problem.tag, row["incoherence_ratio"], row["qfi"], row["leaf_entropy"],
        )
        self._leaves[problem.tag] = leaf
        self._summary[problem.tag] = row
        return leaf

    def _oracle_margin(self, problem: Problem, leaf: Leaf) -> Optional[float]:
        """Best sampled decomposition minus the leaf's average variance; >= 0 when the leaf is optimal."""
        samples = self.cfg.foliation.oracle_samples
        if samples == 0:
            return None
        if leaf.dim > config.ORACLE_MAX_DIM:
            logger.warning("%s: d=%d too large for the decomposition check, skipped", problem.tag, leaf.dim)
            return None
        best = decomposition_variance_oracle(problem.rho, problem.H, samples, self.cfg.seed)
        return rounded(best - average_variance(leaf, problem.H))

    def catalog(self, L: int, which: str) -> ObservableCatalog:
        site = self.cfg.diagnostics.site
        return main_observables(L, site) if which == "main" else local_observables(L, site)

    # stages

    def foliate(self) -> None:
        for L, beta in self.points():
            problem = self.problem(L, beta)
            leaf = self.leaf(problem)
            if self.cfg.wants("leaf"):
                for path in save_leaf(leaf, os.path.join(self.cfg.out_dir, "leaf", problem.tag)):
                    self.writer.record(path)
        self._write_summary()

    def _write_curves(self, base: str, report: ShellReport, curves: list[DiagnosticsCurve]) -> None:
        for curve in curves:
            name = observable_filename(curve.observable_label)
            self.writer.write_csv(f"{base}/{name}.csv", DIAGNOSTICS_HEADER, curve.rows())
            sidecar = curve.sidecar()
            sidecar["incoherence_ratio"] = rounded(sidecar["incoherence_ratio"])
            self.writer.write_json(f"{base}/{name}.json", sidecar)
        self.writer.write_json(
            f"{base}/shells.json",
            {
                "shell_bounds": [list(b) for b in report.shell_bounds],
                "shell_mean_energy": [rounded(e) for e in report.shell_mean_energy],
                "f": {label: [rounded(v) for v in report.per_observable[label].f] for label in report.labels},
                "mask_count": report.mask_count,
            },
        )

    def diagnostics(self) -> None:
        cfg = self.cfg
        opts = cfg.diagnostics
        for L, beta in self.points():
            problem = self.problem(L, beta)
            leaf = self.leaf(problem)
            catalog = self.catalog(L, opts.observables)
            with self.writer.stage(f"diagnostics {problem.tag}"):
                report, curves = diagnostics(
                    leaf,
                    catalog,
                    opts.shell_size,
                    delta_points=opts.delta_points,
                    L=L,
                    beta=beta,
                    threads=self.options.threads,
                )
            if cfg.wants("diagnostics"):
                self._write_curves(f"diagnostics/{problem.tag}", report, curves)
        if opts.benchmarks and cfg.state.kind == "thermal":
            self._benchmarks()
        self._write_summary()

    def _benchmarks(self) -> None:
        opts = self.cfg.diagnostics
        for L in self.cfg.sweep_L:
            problem = self.problem(L, self.cfg.sweep_beta[0])
            targets = [("benchmark_commuting", problem.H, problem.H_spec)]
            if not self.cfg.swap_roles:
                targets.append(("benchmark_integrable", problem.H0, problem.H0_spec))
            for name, H, spec in targets:
                with self.writer.stage(f"{name} L={L}"):
                    leaf = commuting_leaf(H, spec)
                    report, curves = diagnostics(
                        leaf,
                        self.catalog(L, opts.observables),
                        opts.shell_size,
                        delta_points=opts.delta_points,
                        L=L,
                        beta=0.0,
                        threads=self.options.threads,
                    )
                if self.cfg.wants("diagnostics"):
                    self._write_curves(f"diagnostics/{name}/L{L}", report, curves)

    def evolve(self) -> None:
        cfg = self.cfg
        times = time_grid(cfg.evolve.t_max, cfg.evolve.dt)
        for L, beta in self.points():
            problem = self.problem(L, beta)
            leaf = self.leaf(problem)
            catalog = self.catalog(L, cfg.evolve.observables).extended(identity_observable(L))
            size = cfg.diagnostics.shell_size or default_shell_size(leaf.dim)
            with self.writer.stage(f"evolve {problem.tag}"):
                shells = build_shell_report(leaf, catalog, size, threads=self.options.threads)
                comparisons = compare_evolutions(
                    leaf, problem.rho, problem.H, catalog, times, shells,
                    H_spec=problem.H_spec, threads=self.options.threads,
                )
            if not cfg.wants("evolution"):
                continue
            base = f"evolution/{problem.tag}"
            for comp in comparisons:
                name = observable_filename(comp.observable_label)
                self.writer.write_csv(f"{base}/{name}.csv", EVOLUTION_HEADER, comp.rows())
            first = comparisons[0]
            self.writer.write_json(
                f"{base}/summary.json",
                {
                    "representative_index": first.representative_index,
                    "representative_energy": rounded(first.representative_energy),
                    "source_energy": rounded(leaf.source_energy),
                    "band_coverage": {c.observable_label: rounded(band_coverage(c)) for c in comparisons},
                },
            )
        self._write_summary()

    def fig1(self) -> None:
        f1 = self.cfg.fig1
        fol = self.cfg.foliation
        with self.writer.stage("fig1"):
            points, leaves = figures.fig1_points(f1.grid_step, gap_tol=fol.gap_tol, rank_floor=fol.rank_floor)
            ids = figures.curve_leaf_ids(leaves, f1.curve_leaves)
            curves = figures.fig1_curves(leaves, ids, figures.beta_grid(f1.beta_max, f1.beta_points))
        logger.info("fig1: %d points on %d leaves, %d curves", len(points), len(leaves), len(ids))
        if self.cfg.wants("figures"):
            self.writer.write_csv("figures/fig1_points.csv", figures.POINTS_HEADER, [p.row() for p in points])
            self.writer.write_csv("figures/fig1_curves.csv", figures.CURVES_HEADER, curves)

    def _write_summary(self) -> None:
        if self._summary:
            self.writer.write_json("foliation/summary.json", {"points": self.summary()})

    def summary(self) -> list[dict]:
        return [self._summary[tag] for tag in sorted(self._summary)]

    def finish(self) -> RunResult:
        if self.cfg.wants("report"):
            pdf = report_pdf.build_summary_pdf(
                self.summary(),
                command=self.command,
                config_hash=self.manifest.config_hash,
                tool_version=self.manifest.tool_version,
            )
            self.writer.write_bytes("report.pdf", pdf)
        path = self.writer.finalize()
        logger.info("Cache: %d hits, %d misses", self.cache.hits, self.cache.misses)
        return RunResult(self.cfg.out_dir, path, self.summary())


def cmd_foliate(cfg: ExperimentConfig, options: RunOptions | None = None) -> RunResult:
    run = Pipeline(cfg, "foliate", options)
    run.foliate()
    return run.finish()


def cmd_diagnostics(cfg: ExperimentConfig, options: RunOptions | None = None) -> RunResult:
    run = Pipeline(cfg, "diagnostics", options)
    run.diagnostics()
    return run.finish()


def cmd_evolve(cfg: ExperimentConfig, options: RunOptions | None = None) -> RunResult:
    run = Pipeline(cfg, "evolve", options)
    run.evolve()
    return run.finish()


def cmd_figure(name: str, cfg: ExperimentConfig, options: RunOptions | None = None) -> RunResult:
    """``cfg`` is the figure preset with any user overrides already merged in."""
    _, commands = figures.preset(name)
    run = Pipeline(cfg, f"figure {name}", options)
    for command in commands:
        if command == "fig1":
            run.fig1()
        elif command == "diagnostics":
            run.diagnostics()
        elif command == "evolve":
            run.evolve()
    if name in figures.EXPECTED_RATIOS:
        for row in run.summary():
            if row["L"] == 12:
                logger.info(
                    "%s %s: incoherence/log d = %.3f (quoted %.2f)",
                    name, row["tag"], row["incoherence_ratio"], figures.EXPECTED_RATIOS[name],
                )
    return run.finish()
