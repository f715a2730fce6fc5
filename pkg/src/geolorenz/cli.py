"""Batch front-end: validate -> cones -> leaf -> millefeuille -> spectrum -> pressure -> classify.

Every stage writes its files into the output directory together with a
cache record ``.cache/<stage>.json`` holding the config hash.  Downstream
stages only read upstream files whose record matches the current hash.

Exit codes:

    0  success
    1  bad command line or config
    2  validate failed
    3  cones failed
    4  leaf failed
    5  millefeuille failed
    6  spectrum failed
    7  pressure failed
    8  classify failed
    9  compare failed
    10 missing upstream artifact
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import cones, io, leaves, symbolic, thermo
from . import lorenz_map as lm
from . import millefeuille as mfm
from ._accel import backend_name, set_threads
from .errors import GeoLorenzError

log = logging.getLogger("geolorenz")

STAGES = ("validate", "cones", "leaf", "millefeuille", "spectrum", "pressure", "classify")
COMMANDS = STAGES + ("compare", "run")
EXIT_CODES = {"config": 1, "validate": 2, "cones": 3, "leaf": 4, "millefeuille": 5,
              "spectrum": 6, "pressure": 7, "classify": 8, "compare": 9, "missing": 10}
UPSTREAM = {"cones": "validate", "leaf": "validate", "millefeuille": "validate",
            "spectrum": "millefeuille", "pressure": "spectrum", "classify": "pressure",
            "compare": "millefeuille"}


class StageError(GeoLorenzError):
    def __init__(self, stage, message):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class MissingArtifact(GeoLorenzError):
    pass


class Runner:
    """Runs stages for one config into one output directory."""

    def __init__(self, cfg: io.RunConfig, out):
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / ".cache").mkdir(exist_ok=True)
        self.hash = cfg.config_hash
        self.tols = cfg.tolerances.as_dict()

    # ------------------------------------------------------------ cache

    def _record(self, stage, files):
        rec = {"stage": stage, "config_hash": self.hash, "files": sorted(files)}
        (self.out / ".cache" / f"{stage}.json").write_text(io.json_text(rec))

    def _require(self, stage):
        path = self.out / ".cache" / f"{stage}.json"
        hint = f"run `geolorenz {stage}` with this config first"
        if not path.exists():
            raise MissingArtifact(f"missing upstream artifact from stage {stage!r} in {self.out}; {hint}")
        rec = json.loads(path.read_text())
        if rec.get("config_hash") != self.hash:
            raise MissingArtifact(f"artifact from stage {stage!r} was made with config "
                                  f"{rec.get('config_hash')}, not {self.hash}; {hint}")
        for name in rec["files"]:
            if not (self.out / name).exists():
                raise MissingArtifact(f"missing upstream artifact {name!r}; {hint}")
        return rec

    def _csv(self, name, kind, columns, rows, meta=None):
        io.write_csv(self.out / name, kind, columns, rows, self.hash, self.tols, meta)
        return name

    # ------------------------------------------------------------ stages

    def validate(self):
        rep = lm.validate_params(self.cfg.params)
        head = f"# geolorenz validation v{io.FORMAT_VERSION}\n# config_hash = {self.hash}\n"
        (self.out / "validation.txt").write_text(head + rep.to_text())
        if not rep.ok:
            raise StageError("validate", "failed checks: " + ", ".join(rep.failures()))
        self._record("validate", ["validation.txt"])
        return rep

    def cones(self):
        self._require(UPSTREAM["cones"])
        c, p = self.cfg, self.cfg.params
        n_alpha = cones.N_alpha(p)
        max_gap, max_ratio, first = 0, 0.0, None
        lyap = []
        for i, (pt, back, _) in enumerate(cones.random_backward_orbits(
                c.cone_orbits, c.cone_depth, p, c.seed)):
            rec = cones.hyperbolic_jump_sequence(back, p)
            max_gap = max([max_gap] + list(rec.gaps))
            _, hist = cones.propagate_cone(back, c.cone_depth, p, record=True)
            for a, b in zip(hist[5:-1], hist[6:]):
                if a.half_width > 0:
                    max_ratio = max(max_ratio, b.half_width / a.half_width)
            if first is None:
                first = hist
            pts = np.vstack([back[::-1], [pt]])
            ly = cones.lyapunov_exponents(pts, params=p)
            lyap.append((i, ly.lambda_s, ly.lambda_u))
        bound = 1.05 / (2.0 * math.sqrt(2.0))
        meta = {"orbits": c.cone_orbits, "depth": c.cone_depth, "N_alpha": n_alpha,
                "max_jump_gap": max_gap, "max_width_ratio_after_5": max_ratio,
                "width_ratio_bound": bound, "rows_from_orbit": 0}
        files = [self._csv("cones.csv", "cone_widths", io.CONE_COLUMNS, io.cone_rows(first), meta),
                 self._csv("lyapunov.csv", "lyapunov", io.LYAPUNOV_COLUMNS, lyap)]
        if max_gap > n_alpha:
            raise StageError("cones", f"hyperbolic jump gap {max_gap} exceeds N(alpha) = {n_alpha}")
        if max_ratio > bound:
            raise StageError("cones", f"cone width ratio {max_ratio:.4g} above {bound:.4g}")
        self._record("cones", files)
        return meta

    def leaf(self):
        self._require(UPSTREAM["leaf"])
        c, p = self.cfg, self.cfg.params
        depth = c.leaf_export_depth
        pt, back, _ = next(cones.random_backward_orbits(1, depth, p, c.seed))
        word = "".join(lm.side_of(x) for x in back[:, 0])
        try:
            leaf = leaves.local_unstable_leaf(pt, word, depth, p, backward=back)
        except GeoLorenzError as exc:
            raise StageError("leaf", str(exc)) from None
        cls = leaves.beak_detect(leaf, tol=c.tolerances.beak)
        meta = {"point_x": pt[0], "point_y": pt[1], "word": word, **io.leaf_meta(leaf, cls)}
        tab = symbolic.postcritical_table(1000, p)
        files = [self._csv("leaf.csv", "unstable_leaf", io.LEAF_COLUMNS,
                           list(zip(leaf.xs, leaf.ys)), meta),
                 self._csv("postcritical.csv", "postcritical", io.POSTCRITICAL_COLUMNS,
                           list(tab.rows()), {"depth": tab.depth})]
        self._record("leaf", files)
        return leaf

    def _band(self, delta_hat, skip):
        c = self.cfg
        try:
            seed = symbolic.delta_dense_periodic_orbit(delta_hat, c.max_period, c.params, skip=skip)
        except ValueError as exc:
            raise GeoLorenzError(str(exc)) from None
        return mfm.Band.from_seed(seed)

    def millefeuille(self):
        self._require(UPSTREAM["millefeuille"])
        c = self.cfg
        try:
            band = self._band(c.delta_hat, c.band_skip)
            mf = mfm.build_millefeuille(band, c.N_max, c.leaf_depth, c.params,
                                        markov_leaves=c.markov_leaves)
        except GeoLorenzError as exc:
            raise StageError("millefeuille", str(exc)) from None
        summ = mf.summary()
        files = [self._csv("orbit.csv", "periodic_orbit", io.ORBIT_COLUMNS,
                           io.orbit_rows(band.periodic_orbit),
                           {"period": band.periodic_orbit.period,
                            "gap_bound": band.periodic_orbit.gap_bound}),
                 self._csv("branches.csv", "return_branches", io.BRANCH_COLUMNS,
                           io.branch_rows(mf.branches), summ)]
        lines = [f"# geolorenz millefeuille_summary v{io.FORMAT_VERSION}",
                 f"# config_hash = {self.hash}"]
        lines += [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in summ.items()]
        lines += [f"branches_n{n} = {m}" for n, m in mf.counts_by_time().items()]
        (self.out / "millefeuille.txt").write_text("\n".join(lines) + "\n")
        files.append("millefeuille.txt")
        cache = {"config_hash": self.hash, "P_l": band.P_l, "P_r": band.P_r,
                 "word": band.periodic_orbit.word, "delta_hat": band.delta_hat,
                 "seed_index": mf.seed_index, "N_max": mf.N_max,
                 "branches": [[b.word, b.K_left, b.K_right, b.markov_ok] for b in mf.branches]}
        (self.out / ".cache" / "branches.json").write_text(io.json_text(cache))
        files.append(".cache/branches.json")
        self._record("millefeuille", files)
        if c.markov_leaves and not all(b.markov_ok for b in mf.branches):
            bad = [b.index for b in mf.branches if not b.markov_ok]
            raise StageError("millefeuille", f"Markov check failed on branches {bad[:10]}")
        return mf

    def load_millefeuille(self):
        self._require("millefeuille")
        d = json.loads((self.out / ".cache" / "branches.json").read_text())
        orbit = symbolic.periodic_orbit(d["word"], self.cfg.params)
        band = mfm.Band(d["P_l"], d["P_r"], orbit, d["delta_hat"])
        branches = [mfm.ReturnBranch(i, w, len(w), a, b, markov_ok=ok)
                    for i, (w, a, b, ok) in enumerate(d["branches"])]
        log.info("reusing cached branch table (%d branches)", len(branches))
        return mfm.restore_millefeuille(band, branches, d["N_max"], d["seed_index"],
                                        self.cfg.leaf_depth, self.cfg.params)

    def _table(self, mf):
        c = self.cfg
        table = thermo.induced_potential_table(mf, c.potential, c.grid_size, c.tolerances.omega)
        thermo.holder_constants_estimate(table, seed=c.seed)
        return table

    def spectrum(self):
        mf = self.load_millefeuille()
        c = self.cfg
        try:
            table = self._table(mf)
            zc = thermo.Zc_estimate(table)
            op = thermo.TransferOperator(table)
            z0 = zc.Zc_hat + 0.01
            Zs = np.linspace(z0, z0 + c.curve_span, c.curve_points)
            curve = thermo.pressure_curve(op, Zs, zc)
        except GeoLorenzError as exc:
            raise StageError("spectrum", str(exc)) from None
        np.savez(self.out / ".cache" / "table.npz", grid=table.grid, A=table.A, xi=table.xi,
                 lengths=table.lengths, periodic_x=table.periodic_x,
                 A_periodic=table.A_periodic, metric_orbits=table.metric_orbits,
                 scalars=np.array([table.truncation_tol, table.omega_terms, table.delta_hat,
                                   table.C_A, table.gamma]))
        meta = {"Zc_hat": zc.Zc_hat, "C_A": table.C_A, "gamma": table.gamma,
                "grid_size": c.grid_size, "N_max": table.N_max, "branches": table.n_branches,
                "potential": c.potential.describe()}
        files = [self._csv("pressure_curve.csv", "pressure_curve", io.CURVE_COLUMNS,
                           io.curve_rows(curve), meta),
                 ".cache/table.npz"]
        self._record("spectrum", files)
        return curve

    def load_table(self):
        self._require("spectrum")
        with np.load(self.out / ".cache" / "table.npz") as z:
            tol, terms, dh, C_A, gamma = z["scalars"]
            return thermo.InducedPotentialTable(
                z["grid"], z["A"], z["xi"], z["lengths"], z["periodic_x"], z["A_periodic"],
                self.cfg.potential, float(tol), int(terms), float(dh), float(C_A), float(gamma),
                z["metric_orbits"])

    def pressure(self):
        table = self.load_table()
        c = self.cfg
        try:
            op = thermo.TransferOperator(table)
            pr = thermo.pressure_root(op, table, c.Z_bracket, residual_tol=c.tolerances.residual,
                                      xtol=c.tolerances.root_xtol)
        except GeoLorenzError as exc:
            raise StageError("pressure", str(exc)) from None
        doc = {"kind": "pressure_root", "config_hash": self.hash, "Zc_hat": pr.zc.Zc_hat,
               **pr.to_dict()}
        (self.out / "pressure.json").write_text(io.json_text(doc))
        self._record("pressure", ["pressure.json"])
        return pr

    def classify(self):
        self._require("pressure")
        table = self.load_table()
        c = self.cfg
        d = json.loads((self.out / "pressure.json").read_text())
        try:
            op = thermo.TransferOperator(table)
            solve = thermo.SpectralCache(op, c.tolerances.residual)
            zc = thermo.Zc_estimate(table)
            root = float(d["pressure_root"])
            sd = solve(root)
            kac = thermo.kac_integrals(root, sd, op, zc)
            pr = thermo.PressureRoot(root, sd, kac, tuple(d["bracket"]),
                                     float(d["root_truncation_tolerance"]), zc)
            rep = thermo.classify_root(pr, op, table, solve)
        except GeoLorenzError as exc:
            raise StageError("classify", str(exc)) from None
        (self.out / "case_report.json").write_text(io.case_report_json(rep, c))
        self._record("classify", ["case_report.json"])
        return rep

    def compare(self):
        mfA = self.load_millefeuille()
        c = self.cfg
        try:
            bandB = self._band(c.compare_delta_hat, c.compare_band_skip)
            mfB = mfm.build_millefeuille(bandB, c.N_max, c.leaf_depth, c.params)
            cr = thermo.cross_millefeuille_pressure(mfA, mfB, c.potential, c.grid_size,
                                                    c.tolerances.omega)
        except GeoLorenzError as exc:
            raise StageError("compare", str(exc)) from None
        doc = {"kind": "cross_millefeuille", "config_hash": self.hash,
               "root_A": cr.root_A, "root_B": cr.root_B, "gap": cr.gap,
               "tolerance": cr.tolerance, "agree": cr.agree,
               "band_A": [mfA.band.P_l, mfA.band.P_r], "band_B": [bandB.P_l, bandB.P_r],
               "report_A": cr.report_A.to_dict(), "report_B": cr.report_B.to_dict()}
        (self.out / "compare.json").write_text(io.json_text(doc))
        self._record("compare", ["compare.json"])
        return cr

    def run(self, stage: str = "classify"):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        for name in STAGES[:STAGES.index(stage) + 1]:
            self.stage(name)

    def stage(self, name: str):
        log.info("stage %s", name)
        try:
            return getattr(self, name)()
        except (StageError, MissingArtifact):
            raise
        except GeoLorenzError as exc:
            raise StageError(name, str(exc)) from exc


def build_parser():
    ap = argparse.ArgumentParser(prog="geolorenz", description=__doc__.split("\n")[0],
                                 epilog="Exit codes: " + ", ".join(
                                     f"{v} {k}" for k, v in EXIT_CODES.items()))
    ap.add_argument("command", nargs="?", default="run", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH", help="key = value config file")
    ap.add_argument("--out", metavar="DIR", default="geolorenz_out")
    ap.add_argument("--stage", metavar="NAME", default="classify",
                    help="last stage for `run` (default classify)")
    ap.add_argument("--threads", metavar="N", type=int, default=0)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else EXIT_CODES["config"]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        set_threads(args.threads)
    try:
        cfg = io.load_config(args.config) if args.config else io.RunConfig()
    except (OSError, io.ConfigError) as exc:
        print(f"geolorenz: config error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    runner = Runner(cfg, args.out)
    log.info("config %s, backend %s", cfg.config_hash, backend_name())
    try:
        if args.command == "run":
            if args.stage not in STAGES:
                print(f"geolorenz: unknown stage {args.stage!r}", file=sys.stderr)
                return EXIT_CODES["config"]
            runner.run(args.stage)
        else:
            runner.stage(args.command)
    except MissingArtifact as exc:
        print(f"geolorenz: {exc}", file=sys.stderr)
        return EXIT_CODES["missing"]
    except StageError as exc:
        print(f"geolorenz: stage {exc.stage} failed: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.stage]
    return 0


if __name__ == "__main__":
    sys.exit(main())
