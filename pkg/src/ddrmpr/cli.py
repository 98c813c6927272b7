"""Command-line driver.

One executable with a ``--task`` switch: simulate, hio, ddrm-pr,
ddrm-pr-general, evaluate, gridsearch, selftest. Every flag mirrors a config
key one-to-one; ``--config`` loads a flat ``key = value`` file or a
previously written run manifest, and explicit flags override it. Each run
writes a manifest.json from which it can be reproduced bit-for-bit.

Exit codes: 0 ok, 1 selftest failure, 2 input error, 3 denoiser transport
failure, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dprt, reports
from .alternating import ConstraintSet, DivergenceError, RandomInitParams, random_init, residual
from .ddrm import SamplerConfig, run_manifest, schedule_linear_vp
from .denoisers import DenoiseRequest, as_sampler_fn, denoise, make_denoiser
from .fields import RealImage, ShapeError, corner_support
from .forward import load_measurement, save_measurement, simulate
from .linops import ConvergenceError, make_fourier_operator, make_random_transmission_operator
from .metrics import align_ambiguities, cap_psnr, psnr, ssim
from .pipeline import GridSpec, PrPipelineConfig, ddrm_pr_general_reconstruct, ddrm_pr_reconstruct, grid_search
from .protocol import ProtocolError, RemoteDenoiseError, TransportError
from .selftest import run_selftest

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_INPUT = 2
EXIT_TRANSPORT = 3
EXIT_DIVERGED = 4

TASKS = ("simulate", "hio", "ddrm-pr", "ddrm-pr-general", "evaluate", "gridsearch", "selftest")

DEFAULTS = {
    "task": None,
    "input": [],
    "out": "out",
    "gt": None,
    "alpha": 0.0,
    "factor": 2,
    "operator": "fourier",
    "eta": 1.0,
    "eta_b": 0.2,
    "steps": 15,
    "t_init": 300,
    "n_avg": 1,
    "seed": 0,
    "denoiser": None,
    "jobs": 0,
    "beta": 0.9,
    "inner_iters": 100,
    "num_inits": 50,
    "short_iters": 50,
    "final_iters": 1000,
    "sigma_max": 100.0,
    "schedule_t": 1000,
    "grid": None,
    "method": None,
}

_INT_KEYS = {"factor", "steps", "t_init", "n_avg", "seed", "jobs", "inner_iters",
             "num_inits", "short_iters", "final_iters", "schedule_t"}
_FLOAT_KEYS = {"alpha", "eta", "eta_b", "beta", "sigma_max"}


class InputError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddrmpr", description=__doc__.splitlines()[0])
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--input", nargs="+", help="input files or directories")
    p.add_argument("--out", help="output directory")
    p.add_argument("--gt", help="ground-truth file or directory (evaluate, gridsearch)")
    p.add_argument("--config", help="flat key=value config file or a run manifest JSON")
    p.add_argument("--alpha", type=float, help="measurement noise scale")
    p.add_argument("--factor", type=int, help="oversampling factor per axis")
    p.add_argument("--operator", help="fourier | transmission:<m>:<seed>")
    p.add_argument("--eta", type=float)
    p.add_argument("--eta-b", dest="eta_b", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--t-init", dest="t_init", type=int)
    p.add_argument("--n-avg", dest="n_avg", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--denoiser", help="builtin id, host:port, or stdio:CMD")
    p.add_argument("--jobs", type=int, help="worker pool size (0 = logical cores)")
    p.add_argument("--beta", type=float, help="HIO relaxation")
    p.add_argument("--inner-iters", dest="inner_iters", type=int)
    p.add_argument("--num-inits", dest="num_inits", type=int)
    p.add_argument("--short-iters", dest="short_iters", type=int)
    p.add_argument("--final-iters", dest="final_iters", type=int)
    p.add_argument("--sigma-max", dest="sigma_max", type=float)
    p.add_argument("--schedule-t", dest="schedule_t", type=int)
    p.add_argument("--grid", help="grid axes file for gridsearch")
    p.add_argument("--method", help="method label for evaluate rows")
    return p


def parse_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        data = json.loads(text)
        cfg = data.get("config", data)
        return {k: v for k, v in cfg.items() if k in DEFAULTS}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def _coerce(key: str, val: str):
    if key == "input":
        return [v.strip() for v in val.split(",") if v.strip()]
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    return val


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None and val != []:
            cfg[key] = val
    if cfg["denoiser"] is None:
        cfg["denoiser"] = os.environ.get("DDRMPR_DENOISER", "shrinkage")
    if isinstance(cfg["input"], str):
        cfg["input"] = [cfg["input"]]
    return cfg


def _atomic_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_json(path: Path, obj) -> None:
    _atomic_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _atomic_file(path: Path, writer) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    writer(tmp)
    os.replace(tmp, path)


def _expand_inputs(patterns: list, suffixes: tuple[str, ...]) -> list[Path]:
    out: list[Path] = []
    for pat in patterns:
        p = Path(pat)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in suffixes))
        elif p.exists():
            out.append(p)
        else:
            raise InputError(f"input not found: {p}")
    if not out:
        raise InputError("no inputs matched")
    return out


def _stem_hash(stem: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(stem.encode()).digest()[:4], "little")


def _jobs(cfg: dict) -> int:
    return cfg["jobs"] if cfg["jobs"] > 0 else (os.cpu_count() or 1)


def _run_pool(cfg: dict, work, items):
    with ThreadPoolExecutor(max_workers=min(_jobs(cfg), max(len(items), 1))) as pool:
        return list(pool.map(work, items))


# ---------------------------------------------------------------- simulate


def cmd_simulate(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    images = _expand_inputs(cfg["input"], (".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg"))

    def work(path: Path):
        arr = reports.load_raster(path)
        if arr.shape[0] != arr.shape[1]:
            raise InputError(f"{path}: images must be square, got {arr.shape[:2]}")
        side = arr.shape[0]
        op = _build_operator(cfg, side)
        written = []
        for c in range(arr.shape[2]):
            chan = RealImage(arr[:, :, c : c + 1])
            seed_key = [cfg["seed"], _stem_hash(path.stem), c]
            mset = simulate(chan, op, cfg["alpha"], seed=np.random.SeedSequence(seed_key))
            prefix = out_dir / f"{path.stem}.c{c}.meas"
            tpath, spath = save_measurement(
                prefix,
                mset,
                seed=seed_key,
                extra={"image_id": path.stem, "channel": c, "source": str(path)},
            )
            written.extend([tpath.name, spath.name])
        m_side = math.isqrt(mset.y.size)
        if m_side * m_side == mset.y.size:
            _atomic_file(
                out_dir / f"{path.stem}.spectrum.png",
                lambda t, m=mset, ms=m_side: reports.spectrum_figure(t, m.y.reshape(ms, ms)),
            )
        return {"image": str(path), "files": written, "clamped_fraction": mset.clamped_fraction}

    results = _run_pool(cfg, work, images)
    _atomic_json(out_dir / "manifest.json", {"task": "simulate", "config": cfg, "results": results})
    print(f"simulated {len(results)} image(s) -> {out_dir}")
    return EXIT_OK


def _build_operator(cfg: dict, side: int):
    spec = cfg["operator"]
    if spec == "fourier":
        return make_fourier_operator(side, cfg["factor"])
    if spec.startswith("transmission:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise InputError("transmission operator spec is transmission:<m>:<seed>")
        m, seed = int(parts[1]), int(parts[2])
        return make_random_transmission_operator(m, side * side, seed=seed)
    raise InputError(f"unknown operator spec {spec!r}")


# ------------------------------------------------------------- reconstruct


def _load_groups(cfg: dict) -> dict[str, list]:
    sidecars = [
        p
        for p in _expand_inputs(cfg["input"], (".json",))
        if not p.name.endswith("manifest.json") and p.name != "best.json"
    ]
    if not sidecars:
        raise InputError("no measurement sidecars found among the inputs")
    groups: dict[str, list] = {}
    for path in sidecars:
        try:
            mset, meta = load_measurement(path)
        except KeyError as err:
            raise InputError(f"{path} is not a measurement sidecar (missing {err})") from err
        image_id = meta.get("image_id", path.stem.split(".")[0])
        groups.setdefault(image_id, []).append((meta.get("channel") or 0, mset, path))
    for image_id in groups:
        groups[image_id].sort(key=lambda t: t[0])
    return groups


def _pipeline_config(cfg: dict) -> PrPipelineConfig:
    return PrPipelineConfig(
        sampler=SamplerConfig(
            eta=cfg["eta"], eta_b=cfg["eta_b"], steps=cfg["steps"],
            t_init=cfg["t_init"], n_avg=cfg["n_avg"], seed=cfg["seed"],
        ),
        hio_inner_iters=cfg["inner_iters"],
        random_init=RandomInitParams(
            num_inits=cfg["num_inits"], short_iters=cfg["short_iters"],
            final_iters=cfg["final_iters"], seed=cfg["seed"],
        ),
        beta=cfg["beta"],
    )


def _denoiser_fn_for(cfg: dict, shape: tuple[int, int, int]):
    handle = make_denoiser(cfg["denoiser"])
    if handle.kind == "remote":
        info = handle.params["client"].info()
        geom = info.get("geometry")
        if geom and int(geom[2]) == 3 and shape[2] == 1:
            return _gray_via_rgb(handle, shape), handle
    return as_sampler_fn(handle, shape), handle


def _gray_via_rgb(handle, shape):
    """Feed a grayscale channel to an RGB denoiser: replicate, denoise, average."""

    def fn(x_vp, t_index, sigma_t, alpha_t):
        img = np.asarray(x_vp).reshape(shape[:2])
        rgb = np.repeat(img[:, :, None], 3, axis=2)
        out = denoise(handle, DenoiseRequest(rgb, t_index, sigma_t, alpha_t))
        return out.mean(axis=2).reshape(np.asarray(x_vp).shape)

    return fn


def cmd_reconstruct(cfg: dict) -> int:
    task = cfg["task"]
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = _load_groups(cfg)
    schedule = schedule_linear_vp(cfg["schedule_t"], sigma_max=cfg["sigma_max"])
    pipe_cfg = _pipeline_config(cfg)

    def work(item):
        image_id, entries = item
        msets = [m for _, m, _ in entries]
        geom = msets[0].geometry
        collect: dict = {}
        if task == "hio":
            recon, infos = _hio_only(msets, pipe_cfg, collect)
            denoiser_id = "none"
        else:
            side = int(geom.get("n_side") or math.isqrt(msets[0].geometry.get("n", 0)))
            fn, handle = _denoiser_fn_for(cfg, (side, side, 1))
            denoiser_id = handle.id
            try:
                if task == "ddrm-pr-general" and geom.get("kind") == "general":
                    op = _rebuild_operator(msets[0])
                    recon = ddrm_pr_general_reconstruct(
                        msets[0].y, op, (side, side), pipe_cfg, schedule, fn, collect=collect
                    )
                else:
                    recon = ddrm_pr_reconstruct(msets, pipe_cfg, schedule, fn, collect=collect)
            finally:
                handle.close()
        base = out_dir / image_id
        _atomic_file(Path(f"{base}.recon.png"), lambda t: reports.save_raster(t, recon.data))
        _atomic_bytes(Path(f"{base}.recon.dprt"), dprt.dump_bytes(recon.data))
        traces = {
            f"init ch{i}": tr for i, tr in enumerate(collect.get("init_trace", []))
        }
        if traces:
            rows = [
                {"iter": k + 1, "residual": float(v)}
                for tr in collect.get("init_trace", [])
                for k, v in enumerate(tr)
            ]
            _atomic_file(
                Path(f"{base}.trace.csv"),
                lambda t: reports.write_csv(t, rows, ["iter", "residual"]),
            )
            _atomic_file(Path(f"{base}.trace.png"), lambda t: reports.residual_trace_figure(t, traces))
        panels = {"reconstruction": recon.data}
        if collect.get("init_unit"):
            panels = {"AP init": np.stack(collect["init_unit"], axis=2), **panels}
        _atomic_file(Path(f"{base}.compare.png"), lambda t: reports.comparison_figure(t, panels))
        manifest = {
            "task": task,
            "image_id": image_id,
            "config": cfg,
            "inputs": [str(p) for _, _, p in entries],
            "alpha": msets[0].alpha,
            "geometry": geom,
            "sampler": run_manifest(schedule, pipe_cfg.sampler, mode="ddrm-pr", denoiser_id=denoiser_id)
            if task != "hio"
            else None,
            "residuals": {
                "init": [float(r) for r in collect.get("init_residual", [])],
                "final": [float(r) for r in collect.get("residual", [])],
                "y_norm": [float(np.linalg.norm(m.y)) for m in msets],
            },
            "outputs": [f"{image_id}.recon.png", f"{image_id}.recon.dprt"],
        }
        _atomic_json(Path(f"{base}.manifest.json"), manifest)
        return image_id

    done = _run_pool(cfg, work, sorted(groups.items()))
    print(f"{task}: reconstructed {len(done)} image(s) -> {out_dir}")
    return EXIT_OK


def _hio_only(msets, pipe_cfg: PrPipelineConfig, collect: dict):
    chans = []
    infos = []
    for c, mset in enumerate(msets):
        geom = mset.geometry
        if geom.get("kind") != "fourier":
            raise InputError("hio task expects Fourier measurements; use ddrm-pr-general")
        n_side, factor = int(geom["n_side"]), int(geom["factor"])
        m_side = n_side * factor
        y2d = mset.y.reshape(m_side, m_side)
        cons = ConstraintSet(support=corner_support((n_side, n_side), (m_side, m_side)))
        full, trace = random_init(
            y2d, pipe_cfg.random_init, cons, beta=pipe_cfg.beta, return_trace=True
        )
        chans.append(full[:n_side, :n_side])
        collect.setdefault("init_trace", []).append(trace)
        collect.setdefault("init_unit", []).append(chans[-1])
        res = residual(y2d, full)
        collect.setdefault("init_residual", []).append(res)
        collect.setdefault("residual", []).append(res)
        infos.append({"channel": c, "residual": float(res)})
    return RealImage(np.stack(chans, axis=2)), infos


def _rebuild_operator(mset):
    op_id = mset.operator_id
    if op_id.startswith("transmission:"):
        _, dims, seed = op_id.split(":")
        m, n = (int(v) for v in dims.split("x"))
        return make_random_transmission_operator(m, n, seed=int(seed.removeprefix("seed")))
    if op_id.startswith("fourier:"):
        side = int(op_id.split(":")[1].split("x")[0])
        factor = int(op_id.split(":")[2].removeprefix("factor"))
        return make_fourier_operator(side, factor)
    raise InputError(f"cannot rebuild operator {op_id!r}")


# ---------------------------------------------------------------- evaluate


def _find_gt(gt_spec: str, image_id: str) -> Path:
    p = Path(gt_spec)
    if p.is_file():
        return p
    for suffix in (".png", ".dprt", ".bmp", ".tif"):
        cand = p / f"{image_id}{suffix}"
        if cand.exists():
            return cand
    raise InputError(f"no ground truth for {image_id} under {gt_spec}")


def _load_float_image(path: Path) -> np.ndarray:
    if path.suffix == ".dprt":
        arr = dprt.load(path)
        return arr[:, :, None] if arr.ndim == 2 else arr
    return reports.load_raster(path)


def cmd_evaluate(cfg: dict) -> int:
    if not cfg["gt"]:
        raise InputError("evaluate needs --gt")
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    recon_paths = [
        p
        for p in _expand_inputs(cfg["input"], (".png", ".dprt"))
        if not p.name.endswith((".compare.png", ".trace.png", ".spectrum.png"))
    ]
    if any(".recon." in p.name for p in recon_paths):
        recon_paths = [p for p in recon_paths if ".recon." in p.name]
    # prefer the f32 tensor over the 8-bit raster when both are present
    by_id: dict[str, Path] = {}
    for p in recon_paths:
        image_id = p.name.split(".")[0]
        if image_id not in by_id or p.suffix == ".dprt":
            by_id[image_id] = p
    rows = []
    for image_id, rpath in sorted(by_id.items()):
        recon = _load_float_image(rpath)
        gt = _load_float_image(_find_gt(cfg["gt"], image_id))
        if recon.shape != gt.shape:
            raise InputError(f"{image_id}: recon shape {recon.shape} != gt {gt.shape}")
        aligned, al = align_ambiguities(recon, gt)
        method = cfg["method"] or _method_from_manifest(rpath) or "unknown"
        rows.append(
            {
                "image_id": image_id,
                "method": method,
                "alpha": _alpha_from_manifest(rpath),
                "psnr": round(cap_psnr(psnr(aligned, gt)), 6),
                "ssim": round(ssim(aligned, gt), 6),
                "flipped": al.flipped,
                "dy": al.shift[0],
                "dx": al.shift[1],
            }
        )
    mean_row = {
        "image_id": "mean",
        "method": rows[0]["method"] if rows else "",
        "alpha": rows[0]["alpha"] if rows else "",
        "psnr": round(float(np.mean([r["psnr"] for r in rows])), 6),
        "ssim": round(float(np.mean([r["ssim"] for r in rows])), 6),
        "flipped": "",
        "dy": "",
        "dx": "",
    }
    columns = ["image_id", "method", "alpha", "psnr", "ssim", "flipped", "dy", "dx"]
    _atomic_file(out_dir / "metrics.csv", lambda t: reports.write_csv(t, rows + [mean_row], columns))
    _atomic_file(out_dir / "metrics.png", lambda t: reports.metrics_figure(t, rows))
    _atomic_json(out_dir / "manifest.json", {"task": "evaluate", "config": cfg, "rows": len(rows)})
    print(f"evaluate: {len(rows)} image(s), mean psnr {mean_row['psnr']}, mean ssim {mean_row['ssim']}")
    return EXIT_OK


def _method_from_manifest(recon_path: Path):
    man = recon_path.parent / (recon_path.name.split(".")[0] + ".manifest.json")
    if man.exists():
        return json.loads(man.read_text()).get("task")
    return None


def _alpha_from_manifest(recon_path: Path):
    man = recon_path.parent / (recon_path.name.split(".")[0] + ".manifest.json")
    if man.exists():
        return json.loads(man.read_text()).get("alpha", "")
    return ""


# --------------------------------------------------------------- gridsearch


def _parse_grid_file(path: str | Path) -> GridSpec:
    axes: dict[str, list] = {}
    objective = "psnr"
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "objective":
            objective = val
            continue
        caster = int if key in ("steps", "t_init", "n_avg") else float
        axes[key] = [caster(v) for v in val.split(",") if v.strip()]
    return GridSpec(axes=axes, objective=objective)


def cmd_gridsearch(cfg: dict) -> int:
    if not cfg["grid"]:
        raise InputError("gridsearch needs --grid")
    if not cfg["gt"]:
        raise InputError("gridsearch needs --gt")
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = _parse_grid_file(cfg["grid"])
    groups = _load_groups(cfg)
    schedule = schedule_linear_vp(cfg["schedule_t"], sigma_max=cfg["sigma_max"])
    val_set = []
    denoiser_fns = {}
    for image_id, entries in sorted(groups.items()):
        msets = [m for _, m, _ in entries]
        gt = _load_float_image(_find_gt(cfg["gt"], image_id))
        side = int(msets[0].geometry["n_side"])
        if side not in denoiser_fns:
            denoiser_fns[side], _ = _denoiser_fn_for(cfg, (side, side, 1))
        val_set.append((gt, msets))
    fn = denoiser_fns[next(iter(denoiser_fns))] if len(denoiser_fns) == 1 else None
    if fn is None:
        raise InputError("gridsearch needs a single image geometry")
    best_cfg, rows = grid_search(grid, val_set, _pipeline_config(cfg), schedule, fn)
    columns = list(grid.axes.keys()) + ["mean_psnr", "mean_ssim", "status", "seconds"]
    _atomic_file(out_dir / "scores.csv", lambda t: reports.write_csv(t, rows, columns))
    _atomic_file(out_dir / "scores.png", lambda t: reports.grid_scores_figure(t, [r for r in rows if r["status"] == "ok"], grid.objective))
    best_flat = dict(cfg)
    best_flat.update(
        {
            "eta": best_cfg.sampler.eta,
            "eta_b": best_cfg.sampler.eta_b,
            "steps": best_cfg.sampler.steps,
            "t_init": best_cfg.sampler.t_init,
            "n_avg": best_cfg.sampler.n_avg,
            "task": "ddrm-pr",
        }
    )
    _atomic_json(out_dir / "best.json", {"task": "gridsearch", "config": best_flat})
    _atomic_json(out_dir / "manifest.json", {"task": "gridsearch", "config": cfg, "cells": len(rows)})
    print(f"gridsearch: {len(rows)} cells; best -> {out_dir / 'best.json'}")
    return EXIT_OK


# ----------------------------------------------------------------- selftest


def cmd_selftest(cfg: dict) -> int:
    results = run_selftest(seed=cfg["seed"])
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if failed:
        print(f"selftest failed: {', '.join(failed)}")
        return EXIT_SELFTEST
    print("selftest: all properties hold")
    return EXIT_OK


# --------------------------------------------------------------------- main


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        task = cfg["task"]
        if task is None:
            raise InputError("--task is required (directly or via --config)")
        if task == "simulate":
            return cmd_simulate(cfg)
        if task in ("hio", "ddrm-pr", "ddrm-pr-general"):
            return cmd_reconstruct(cfg)
        if task == "evaluate":
            return cmd_evaluate(cfg)
        if task == "gridsearch":
            return cmd_gridsearch(cfg)
        if task == "selftest":
            return cmd_selftest(cfg)
        raise InputError(f"unknown task {task!r}")
    except (TransportError, ProtocolError, RemoteDenoiseError) as err:
        print(f"denoiser transport error: {err}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (DivergenceError, ConvergenceError) as err:
        print(f"numerical divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InputError, ShapeError, ValueError, FileNotFoundError, json.JSONDecodeError, dprt.DprtError) as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
