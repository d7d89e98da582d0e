"""Command-line front end.

Subcommands: ``run`` (functional graph execution), ``simulate`` (cycle-level
array simulation per conv layer), ``model`` (analytical latency/resource
evaluation), ``explore`` (design-space search), ``verify`` (oracle
cross-check of every conv layer at reduced spatial size).
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

from ._util import ceil_div
from .config import AcceleratorConfig, make_config
from .engine import conv_layer, make_conv_layer, run_graph
from .errors import WinoshareError
from .modelfile import parse_config, parse_model
from .perf import dsp_usage, bram_usage, explore, model_report
from .reference import direct_conv
from .report import layer_table, render
from .systolic import simulate_layer
from .tensors import Tensor, random_tensor, random_weights
from .tensorio import load_tensor, write_tensor, write_text_tensor

DATA_DIR = Path(__file__).parent / "data"


def _model_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    bundled = DATA_DIR / arg
    if bundled.exists():
        return bundled
    raise WinoshareError(f"model file not found: {arg}")


def _load_config(args) -> AcceleratorConfig:
    if args.config:
        cfg = parse_config(_model_path(args.config))
    else:
        cfg = make_config(args.omega or 4, 2, 1, 4, 4096, 1024)
    overrides = {}
    if args.omega and args.omega != cfg.omega:
        cfg = make_config(args.omega, cfg.rows, cfg.cols, cfg.q,
                          cfg.d_in, cfg.d_out, cfg.freq_hz, cfg.bandwidth,
                          cfg.dsp_budget, cfg.bram_budget)
    if args.freq:
        overrides["freq_hz"] = args.freq
    if args.bw:
        overrides["bandwidth"] = args.bw
    if args.dsp:
        overrides["dsp_budget"] = args.dsp
    if args.bram:
        overrides["bram_budget"] = args.bram
    return cfg.with_overrides(**overrides) if overrides else cfg


def _shrink_conv(layer, s: int):
    if s <= 1:
        return layer
    ih = max(ceil_div(layer.in_height, s), layer.kernel_h)
    iw = max(ceil_div(layer.in_width, s), layer.kernel_w)
    return make_conv_layer(
        layer.name, layer.in_channels, ih, iw, layer.out_channels,
        layer.kernel_h, layer.kernel_w, padding=layer.padding,
        batch=layer.batch, apply_relu=layer.apply_relu, mode=layer.mode)


def _conv_layers(layers, shrink: int):
    return [_shrink_conv(l, shrink) for l in layers if l.kind == "conv"]


def _emit(doc: dict, args) -> None:
    print(render(doc, args.report))


def cmd_run(args) -> int:
    layers = parse_model(_model_path(args.model), omega=args.omega or 4)
    x = load_tensor(args.input)
    if not isinstance(x, Tensor):
        raise WinoshareError("--input must be a feature tensor, not weights")
    rng = random.Random(args.seed)
    weights = {}
    for layer in layers:
        if layer.kind == "conv":
            path = args.weights and Path(args.weights) / f"{layer.name}.bin"
            if path and path.exists():
                weights[layer.name] = load_tensor(path)
            else:
                weights[layer.name] = random_weights(
                    rng, layer.in_channels, layer.out_channels,
                    layer.kernel_h, layer.kernel_w, lo=-4, hi=3)
        elif layer.kind == "fully-connected":
            n_in = layer.in_channels * layer.in_height * layer.in_width
            weights[layer.name] = [
                [rng.randint(-2, 2) for _ in range(n_in)]
                for _ in range(layer.out_channels)
            ]
    out = run_graph(layers, x, weights)
    if args.output:
        if args.output.endswith(".txt"):
            write_text_tensor(args.output, out)
        else:
            write_tensor(args.output, out)
        print(f"wrote {out.channels}x{out.height}x{out.width} to {args.output}")
    else:
        write_text_tensor(sys.stdout, out) if False else print(
            f"output: {out.channels}x{out.height}x{out.width}; "
            f"first values: {out.data[:8]}"
        )
    return 0


def cmd_model(args) -> int:
    cfg = _load_config(args)
    layers = parse_model(_model_path(args.model), omega=cfg.omega)
    report = model_report(layers, cfg)
    doc = report.to_dict()
    if args.report == "json":
        _emit(doc, args)
    else:
        cols = ["name", "rs", "iterations", "splits", "t_pre_s", "t_comm_s",
                "t_comp_s", "t_loop_s", "t_post_s", "t_total_s", "bound"]
        print(layer_table(doc["layers"], cols))
        print()
        print(f"dsp_use: {doc['dsp_use']}   bram_total: {doc['bram_total']} "
              f"(in {doc['bram_input']} / w {doc['bram_weight']} / "
              f"out {doc['bram_output']})")
        print(f"t_total: {doc['t_total_s']:.6g} s")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    layers = parse_model(_model_path(args.model), omega=cfg.omega)
    convs = _conv_layers(layers, args.shrink)
    rng = random.Random(args.seed)
    trace_lines: list[str] = []
    rows = []
    for layer in convs:
        images = tuple(
            random_tensor(rng, layer.in_channels, layer.in_height,
                          layer.in_width, lo=-4, hi=3)
            for _ in range(cfg.batch)
        )
        w = random_weights(rng, layer.in_channels, layer.out_channels,
                           layer.kernel_h, layer.kernel_w, lo=-4, hi=3)
        outs, rep = simulate_layer(layer, cfg, images, w, l_pipe=args.l_pipe)
        ref = conv_layer(layer, images, w)
        exact = all(a == b for a, b in zip(outs, ref))
        entry = rep.to_dict()
        entry["name"] = layer.name
        entry["output_exact"] = exact
        rows.append(entry)
        if args.trace:
            from .membank import FetchTrace
            tr = FetchTrace()
            simulate_layer(layer, cfg, images, w, l_pipe=args.l_pipe,
                           memory_trace=tr)
            trace_lines.append(f"# layer {layer.name}")
            trace_lines.extend(tr.format_lines())
        if not exact:
            print(f"{layer.name}: simulator output diverged", file=sys.stderr)
            return 1
    if args.trace:
        Path(args.trace).write_text("\n".join(trace_lines) + "\n")
    if args.report == "json":
        _emit({"kind": "simulation", "layers": rows}, args)
    else:
        cols = ["name", "beats", "preload_cycles", "loop_cycles",
                "flush_cycles", "total_cycles", "stall_cycles", "output_exact"]
        print(layer_table(rows, cols))
    return 0


def cmd_explore(args) -> int:
    omega = args.omega or 4
    layers = parse_model(_model_path(args.model), omega=omega)
    if not args.dsp or not args.bram:
        raise WinoshareError("explore requires --dsp and --bram budgets")
    result = explore(layers, args.dsp, args.bram, omega,
                     freq_hz=args.freq or 250_000_000,
                     bandwidth=args.bw or 10_664_000_000)
    cfg = result.config
    doc = {
        "kind": "exploration",
        "chosen": {"m": cfg.rows, "n": cfg.cols, "q": cfg.q,
                   "d_in": cfg.d_in, "d_out": cfg.d_out},
        "objective_s": float(result.objective),
        "dsp_use": dsp_usage(cfg),
        "bram_use": bram_usage(cfg).total,
        "feasible_points": result.feasible,
        "evaluated_points": result.evaluated,
    }
    if args.report == "json":
        _emit(doc, args)
    else:
        print(f"chosen: M={cfg.rows} N={cfg.cols} Q={cfg.q} "
              f"D_in={cfg.d_in} D_out={cfg.d_out}")
        print(f"objective: {doc['objective_s']:.6g} s over "
              f"{result.feasible} feasible of {result.evaluated} points")
        print(f"dsp_use: {doc['dsp_use']}   bram_use: {doc['bram_use']}")
    return 0


def cmd_verify(args) -> int:
    layers = parse_model(_model_path(args.model), omega=args.omega or 4)
    convs = _conv_layers(layers, args.shrink)
    rng = random.Random(args.seed)
    failures = 0
    for layer in convs:
        x = random_tensor(rng, layer.in_channels, layer.in_height,
                          layer.in_width, lo=-4, hi=3)
        w = random_weights(rng, layer.in_channels, layer.out_channels,
                           layer.kernel_h, layer.kernel_w, lo=-4, hi=3)
        got = conv_layer(layer, x, w)
        want = direct_conv(x, w, layer.padding)
        ok = got == want
        failures += not ok
        shape = f"{layer.in_channels}x{layer.in_height}x{layer.in_width}"
        print(f"{layer.name}: {'PASS' if ok else 'FAIL'} "
              f"({shape}, kernel {layer.kernel_h}x{layer.kernel_w}, "
              f"mode {layer.mode})")
    if failures:
        print(f"{failures} layer(s) diverged from the direct oracle",
              file=sys.stderr)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="winoshare",
        description="Kernel-sharing Winograd accelerator model and simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, shrink_default=1):
        sp.add_argument("model", help="model file (path or bundled name)")
        sp.add_argument("--config", help="accelerator config file")
        sp.add_argument("--omega", type=int, choices=(4, 6))
        sp.add_argument("--dsp", type=int, help="DSP budget")
        sp.add_argument("--bram", type=int, help="BRAM block budget")
        sp.add_argument("--bw", type=int, help="external bandwidth, bytes/s")
        sp.add_argument("--freq", type=int, help="clock frequency, Hz")
        sp.add_argument("--shrink", type=int, default=shrink_default,
                        help="divide spatial dims by S (channels preserved)")
        sp.add_argument("--report", choices=("text", "json"), default="text")
        sp.add_argument("--trace", help="memory access trace output path")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("run", help="execute the functional graph")
    common(sp)
    sp.add_argument("--input", required=True, help="input tensor file")
    sp.add_argument("--weights", help="directory of per-layer weight files")
    sp.add_argument("--output", help="output tensor path (.txt for text)")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("simulate", help="cycle-level simulation per conv layer")
    common(sp, shrink_default=8)
    sp.add_argument("--l-pipe", type=int, default=4,
                    help="modeled output-transform pipeline depth")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("model", help="evaluate the analytical models")
    common(sp)
    sp.set_defaults(fn=cmd_model)

    sp = sub.add_parser("explore", help="design-space exploration")
    common(sp)
    sp.set_defaults(fn=cmd_explore)

    sp = sub.add_parser("verify", help="oracle cross-check per conv layer")
    common(sp, shrink_default=8)
    sp.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except WinoshareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
