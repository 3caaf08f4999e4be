"""Command-line front end: gen, calibrate, reconstruct, simulate, ablate, report.

Every command reads a plain-text INI config, takes all randomness from the
config seed (or --seed), and writes CSV / key-value text / container files
whose bytes depend only on (config, seed). Nothing here consults the clock or
the environment beyond AHCQ_OUT.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen, hwsim, tensor
from .calibration import HluqSearchSpace, hluq_grid_objectives, hluq_search, minmax_init
from .errors import AhcqError, ConfigError
from .grouping import MilestoneSchedule, progressive_cag
from .quantizers import ParamSet, QuantParams, paramset_to_text, quantize_tensor
from .reconstruction import ReconConfig, ReconEngine, ToyBlock

DEFAULT_OUT = "ahcq_out"

_KNOWN_SECTIONS = {
    "fixture": {"kind", "rows", "channels", "seed", "scale_min", "scale_max",
                "mean", "std"},
    "quant": {"k_w", "k_a"},
    "cag": {"groups", "milestones"},
    "hluq": {"alphas", "betas"},
    "reconstruct": {"iters", "lr", "seed", "batches", "hidden", "input_mode",
                    "act_mode", "weight_mode"},
    "simulate": {"n", "k_inner", "m", "lanes", "pe_width", "seed"},
}


def fmt(x) -> str:
    """Shortest round-trip decimal form; storage format for every float."""
    return repr(float(x))


class Config:
    """Validated view over the INI file."""

    def __init__(self, path: str):
        self.path = path
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path)
        for section in parser.sections():
            if section not in _KNOWN_SECTIONS:
                raise ConfigError(f"unknown config section [{section}] in {path}")
            for key in parser[section]:
                if key not in _KNOWN_SECTIONS[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}] of {path}"
                    )
        self.parser = parser

    def get(self, section: str, key: str, cast, default=None):
        if not self.parser.has_option(section, key):
            if default is None:
                raise ConfigError(f"missing key {key!r} in section [{section}]")
            return default
        raw = self.parser.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc

    def k_bits(self) -> tuple[int, int]:
        k_w = self.get("quant", "k_w", int, 4)
        k_a = self.get("quant", "k_a", int, 4)
        for k in (k_w, k_a):
            if not (2 <= k <= 8):
                raise ConfigError(f"bit-width {k} outside 2..8 (keys k_w/k_a)")
        return k_w, k_a

    def fixture_spec(self, seed_override=None) -> datagen.FixtureSpec:
        kind = self.get("fixture", "kind", str)
        rows = self.get("fixture", "rows", int)
        channels = self.get("fixture", "channels", int)
        seed = seed_override if seed_override is not None \
            else self.get("fixture", "seed", int)
        return datagen.FixtureSpec(
            kind=kind, dims=(rows, channels), seed=seed,
            scale_min=self.get("fixture", "scale_min", float, 0.1),
            scale_max=self.get("fixture", "scale_max", float, 50.0),
            mean=self.get("fixture", "mean", float, 0.0),
            std=self.get("fixture", "std", float, 1.0),
        )

    def search_space(self) -> HluqSearchSpace:
        if not self.parser.has_section("hluq"):
            return HluqSearchSpace()
        alphas = tuple(float(a) for a in
                       self.get("hluq", "alphas", str, "0.1,0.3,0.5").split(","))
        betas = tuple(float(b) for b in
                      self.get("hluq", "betas", str, "0.5,0.25,0.125").split(","))
        return HluqSearchSpace(alphas=alphas, betas=betas)

    def recon_config(self, seed_override=None) -> ReconConfig:
        k_w, k_a = self.k_bits()
        seed = seed_override if seed_override is not None \
            else self.get("reconstruct", "seed", int, 0)
        return ReconConfig(
            k_w=k_w,
            k_a=k_a,
            input_mode=self.get("reconstruct", "input_mode", str, "per_group"),
            act_mode=self.get("reconstruct", "act_mode", str, "hluq"),
            weight_mode=self.get("reconstruct", "weight_mode", str, "per_channel"),
            iters=self.get("reconstruct", "iters", int, 2000),
            lr=self.get("reconstruct", "lr", float, 5e-3),
            seed=seed,
            search_space=self.search_space(),
        )

    def milestones(self, channels: int, groups: int,
                   iters: int) -> MilestoneSchedule:
        raw = self.get("cag", "milestones", str, "default")
        if raw == "default":
            return MilestoneSchedule.default(channels, groups, iters)
        pairs = []
        for item in raw.split(","):
            t, g = item.split(":")
            pairs.append((int(t), int(g)))
        return MilestoneSchedule(total_iters=iters, milestones=tuple(pairs))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(text)


def _calib_batches(cfg: Config, seed_override=None) -> tuple:
    """Fixture split into equally sized calibration batches."""
    spec = cfg.fixture_spec(seed_override)
    data = datagen.gen(spec)
    n_batches = cfg.get("reconstruct", "batches", int, 4)
    rows = spec.dims[0]
    if rows % n_batches:
        raise ConfigError(f"fixture rows {rows} not divisible by batches {n_batches}")
    per = rows // n_batches
    arr = data.array()
    return spec, [tensor.Tensor.from_array(arr[i * per:(i + 1) * per], channel_axis=1)
                  for i in range(n_batches)]


def _toy_block(cfg: Config, channels: int, seed_override=None) -> ToyBlock:
    seed = seed_override if seed_override is not None \
        else cfg.get("reconstruct", "seed", int, 0)
    hidden = cfg.get("reconstruct", "hidden", int, 64)
    w1, b1, w2, b2 = datagen.gen_toy_block(seed + 1, channels, hidden)
    return ToyBlock(w1=w1, b1=b1, w2=w2, b2=b2)


def cmd_gen(cfg: Config, out: Path, seed_override=None) -> int:
    spec = cfg.fixture_spec(seed_override)
    t = datagen.gen(spec)
    stem = spec.file_stem()
    tensor.save(t, out / f"{stem}.ahct")
    _write(out / f"{stem}.txt", spec.header_text())
    print(f"wrote {out / (stem + '.ahct')}")
    return 0


def cmd_calibrate(cfg: Config, out: Path, seed_override=None) -> int:
    spec = cfg.fixture_spec(seed_override)
    path = out / f"{spec.file_stem()}.ahct"
    if not path.exists():
        raise ConfigError(f"fixture not found (run gen first): {path}")
    t = tensor.load(path)
    _, k_a = cfg.k_bits()
    for gran in ("per_tensor", "per_channel"):
        pset = minmax_init(t, k_a, gran)
        _write(out / f"params_{gran}.txt", paramset_to_text(pset))
    space = cfg.search_space()
    rows = hluq_grid_objectives(t, None, k_a, space)
    best = hluq_search(t, None, k_a, space)
    lines = ["layer = fixture"]
    for alpha, beta, obj in rows:
        lines.append(f"objective[alpha={fmt(alpha)},beta={fmt(beta)}] = {fmt(obj)}")
    lines.append(f"chosen_alpha = {fmt(best.s1 / (best.full_range))}")
    lines.append(f"chosen_b_hat = {best.b_hat}")
    _write(out / "hluq_grid.txt", "\n".join(lines) + "\n")
    hluq_pset = ParamSet("per_tensor", (QuantParams("hluq", k_a, hluq=best),))
    _write(out / "params_hluq.txt", paramset_to_text(hluq_pset))
    print(f"calibrated {path.name}: params_per_tensor/per_channel/hluq + grid table")
    return 0


def _run_recon(cfg: Config, out: Path, seed_override, tag: str,
               recon_cfg: ReconConfig):
    spec, batches = _calib_batches(cfg, seed_override)
    block = _toy_block(cfg, spec.dims[1], seed_override)
    engine = ReconEngine(block, batches, recon_cfg)
    if recon_cfg.input_mode == "per_group":
        groups = cfg.get("cag", "groups", int, 4)
        schedule = cfg.milestones(spec.dims[1], groups, recon_cfg.iters)
        assignment, state = progressive_cag(engine, schedule,
                                            seed=recon_cfg.seed)
        _write(out / f"grouping_{tag}.txt", assignment.to_text())
    else:
        state = engine.run()
    csv_lines = ["iteration,loss"]
    csv_lines += [f"{i + 1},{fmt(loss)}"
                  for i, loss in enumerate(state.loss_history)]
    _write(out / f"loss_{tag}.csv", "\n".join(csv_lines) + "\n")
    return state


def cmd_reconstruct(cfg: Config, out: Path, seed_override=None) -> int:
    recon_cfg = cfg.recon_config(seed_override)
    state = _run_recon(cfg, out, seed_override, "main", recon_cfg)
    summary = [
        f"initial_loss = {fmt(state.initial_loss)}",
        f"final_loss = {fmt(state.final_loss)}",
        f"iterations = {state.iteration}",
    ]
    _write(out / "reconstruct_summary.txt", "\n".join(summary) + "\n")
    site = state.sites["input"]
    if hasattr(site, "to_paramset"):
        _write(out / "params_input_site.txt", paramset_to_text(site.to_paramset()))
    print(f"reconstruction: initial {fmt(state.initial_loss)} -> "
          f"final {fmt(state.final_loss)}")
    return 0


def cmd_simulate(cfg: Config, out: Path, seed_override=None) -> int:
    k_w, k_a = cfg.k_bits()
    seed = seed_override if seed_override is not None \
        else cfg.get("simulate", "seed", int, 3)
    n = cfg.get("simulate", "n", int, 16)
    k_inner = cfg.get("simulate", "k_inner", int, 32)
    m = cfg.get("simulate", "m", int, 8)
    x = datagen.gen(datagen.FixtureSpec(kind="post_gelu", dims=(n, k_inner),
                                        seed=seed))
    w = datagen.gen(datagen.FixtureSpec(kind="gaussian", dims=(k_inner, m),
                                        seed=seed + 1, std=0.5))
    w = tensor.Tensor.from_array(w.array(), channel_axis=1)
    hcfg = hluq_search(x, None, k_a)
    x_pset = ParamSet("per_tensor", (QuantParams("hluq", k_a, hluq=hcfg),))
    w_pset = minmax_init(w, k_w, "per_channel")
    codes_x, _ = quantize_tensor(x, x_pset)
    codes_w, _ = quantize_tensor(w, w_pset)
    pe = hwsim.PeConfig(lanes=cfg.get("simulate", "lanes", int, 64),
                        pe_width=cfg.get("simulate", "pe_width", int, 8))
    y, report = hwsim.simulate_matmul(codes_x, codes_w, x_pset, w_pset, pe)
    tensor.save(y, out / "sim_output.ahct")
    _write(out / "sim_report.txt", report.to_text())
    csv = ["op,count"]
    csv += [f"{key},{report.counts[key]}" for key in sorted(report.counts)]
    csv += [f"routed_log2,{report.routed_log2}",
            f"routed_uniform,{report.routed_uniform}",
            f"cycles,{report.cycles}"]
    _write(out / "sim_report.csv", "\n".join(csv) + "\n")
    print(f"simulated [{n},{k_inner}]x[{k_inner},{m}]: "
          f"{report.routed_log2} log2 / {report.routed_uniform} uniform elements")
    return 0


_ABLATION_GRID = (
    ("neither", "per_tensor", "uniform"),
    ("hluq_only", "per_tensor", "hluq"),
    ("cag_only", "per_group", "uniform"),
    ("cag_hluq", "per_group", "hluq"),
)


def cmd_ablate(cfg: Config, out: Path, seed_override=None) -> int:
    from dataclasses import replace

    base = cfg.recon_config(seed_override)
    rows = ["name,cag,hluq,groups,initial_loss,final_loss"]
    for name, input_mode, act_mode in _ABLATION_GRID:
        rc = replace(base, input_mode=input_mode, act_mode=act_mode)
        state = _run_recon(cfg, out, seed_override, name, rc)
        groups = cfg.get("cag", "groups", int, 4) if input_mode == "per_group" else 0
        rows.append(
            f"{name},{int(input_mode == 'per_group')},{int(act_mode == 'hluq')},"
            f"{groups},{fmt(state.initial_loss)},{fmt(state.final_loss)}"
        )
    for label, mode, groups in (
        ("group_2", "per_group", 2), ("group_4", "per_group", 4),
        ("group_8", "per_group", 8), ("group_16", "per_group", 16),
        ("group_32", "per_group", 32),
        ("per_tensor", "per_tensor", 0), ("per_channel", "per_channel", 0),
    ):
        rc = replace(base, input_mode=mode)
        spec, batches = _calib_batches(cfg, seed_override)
        block = _toy_block(cfg, spec.dims[1], seed_override)
        engine = ReconEngine(block, batches, rc)
        if mode == "per_group":
            schedule = cfg.milestones(spec.dims[1], groups, rc.iters)
            _, state = progressive_cag(engine, schedule, seed=rc.seed)
        else:
            state = engine.run()
        rows.append(
            f"{label},{int(mode == 'per_group')},{int(rc.act_mode == 'hluq')},"
            f"{groups},{fmt(state.initial_loss)},{fmt(state.final_loss)}"
        )
    _write(out / "ablation.csv", "\n".join(rows) + "\n")
    print(f"ablation grid written: {len(rows) - 1} rows")
    return 0


def cmd_report(cfg: Config, out: Path, seed_override=None) -> int:
    pieces = []
    for name in ("reconstruct_summary.txt", "hluq_grid.txt", "sim_report.txt"):
        path = out / name
        if path.exists():
            pieces.append(f"== {name} ==")
            pieces.append(path.read_text().rstrip())
    abl = out / "ablation.csv"
    if abl.exists():
        pieces.append("== ablation.csv ==")
        lines = abl.read_text().strip().splitlines()
        header = lines[0].split(",")
        for line in lines[1:]:
            vals = dict(zip(header, line.split(",")))
            pieces.append(
                f"{vals['name']}: final_loss={vals['final_loss']} "
                f"(cag={vals['cag']}, hluq={vals['hluq']}, groups={vals['groups']})"
            )
    if not pieces:
        print(f"no artifacts found under {out}", file=sys.stderr)
        return 1
    digest = "\n".join(pieces) + "\n"
    _write(out / "digest.txt", digest)
    print(digest, end="")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "calibrate": cmd_calibrate,
    "reconstruct": cmd_reconstruct,
    "simulate": cmd_simulate,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ahcq",
        description="quantization toolkit: fixtures, calibration, block "
                    "reconstruction, datapath simulation, ablations",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="plain-text INI config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override every seed in the config")
    parser.add_argument("--out", default=None,
                        help="output directory (default: $AHCQ_OUT or ./ahcq_out)")
    args = parser.parse_args(argv)

    out = Path(args.out or os.environ.get("AHCQ_OUT", DEFAULT_OUT))
    try:
        cfg = Config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.seed)
    except AhcqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
