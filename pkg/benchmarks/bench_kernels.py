"""Compare the compiled kernel core against the NumPy fallback.

Times the three convolution kernels and connected-component labeling on
shapes the reference net actually hits, then a whole forward pass and one
training step with each backend wired in. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from foodrec import backend, refnet, synth


def best_of(fn, repeats, warmup=3):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def conv_cases(rng):
    shapes = [
        ("conv fwd stem 3->8 s2 64px", (1, 3, 64, 64), 8, 2),
        ("conv fwd mid 32->32 8px", (1, 32, 8, 8), 32, 1),
        ("conv fwd deep 64->64 4px", (1, 64, 4, 4), 64, 1),
        ("conv fwd batch16 16->16 16px", (16, 16, 16, 16), 16, 1),
    ]
    for name, xshape, out_ch, stride in shapes:
        x = rng.normal(size=xshape).astype(np.float32)
        w = rng.normal(size=(out_ch, xshape[1], 3, 3)).astype(np.float32)
        yield name, x, w, stride


def kernel_rows(mods, repeats):
    rng = np.random.default_rng(0)
    rows = []
    for name, x, w, stride in conv_cases(rng):
        rows.append((name, {tag: best_of(
            lambda m=mod: m.conv2d_forward(x, w, stride, 1), repeats)
            for tag, mod in mods.items()}))

    x = rng.normal(size=(4, 32, 8, 8)).astype(np.float32)
    w = rng.normal(size=(32, 32, 3, 3)).astype(np.float32)
    dy = np.ascontiguousarray(
        rng.normal(size=(4, 32, 8, 8)).astype(np.float32))
    rows.append(("conv grad weights 32->32", {tag: best_of(
        lambda m=mod: m.conv2d_backward_weights(x, dy, w.shape, 1, 1),
        repeats) for tag, mod in mods.items()}))
    rows.append(("conv grad input 32->32", {tag: best_of(
        lambda m=mod: m.conv2d_backward_input(dy, w, x.shape, 1, 1),
        repeats) for tag, mod in mods.items()}))

    for size in (120, 512):
        mask = rng.random((size, size)) < 0.55
        rows.append((f"label components {size}px", {tag: best_of(
            lambda m=mod: m.label_components(mask), repeats)
            for tag, mod in mods.items()}))
    return rows


def _wire(mod):
    backend.conv2d_forward = mod.conv2d_forward
    backend.conv2d_backward_input = mod.conv2d_backward_input
    backend.conv2d_backward_weights = mod.conv2d_backward_weights
    backend.label_components = mod.label_components


def model_rows(mods, repeats):
    """Forward pass and one training step through the reference net."""
    model = refnet.build_reference_model(synth.shape_class_names(), seed=0)
    img = synth.shape_sample("red-square", np.random.default_rng(1))
    x = refnet.preprocess(img, model.input_size)
    batch = synth.shape_dataset(2, seed=2)[:16]
    cfg = refnet.TrainConfig(epochs=1, batch_size=16, learning_rate=0.01,
                             seed=0)

    fwd = {}
    step = {}
    for tag, mod in mods.items():
        _wire(mod)
        fwd[tag] = best_of(lambda: refnet.forward(model, x), repeats)
        step[tag] = best_of(lambda: refnet.train(model, batch, cfg),
                            max(2, repeats // 4), warmup=1)
    _wire(backend.available_backends()[backend.ACTIVE])
    return [("model forward 64px", fwd),
            ("train epoch, 16 images", step)]


def print_table(rows, tags):
    name_w = max(len(r[0]) for r in rows) + 2
    header = "case".ljust(name_w) + "".join(f"{t:>12}" for t in tags)
    if len(tags) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, times in rows:
        line = name.ljust(name_w)
        for t in tags:
            line += f"{times[t] * 1e6:>10.0f}us"
        if len(tags) == 2:
            line += f"{times[tags[0]] / times[tags[1]]:>9.2f}x"
        print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30,
                        help="timed repetitions per case (best is kept)")
    args = parser.parse_args()

    mods = backend.available_backends()
    tags = ["numpy"] + [t for t in mods if t != "numpy"]
    if len(mods) == 1:
        print("note: compiled core not built, timing the fallback only")
    print(f"active backend: {backend.ACTIVE}")
    print()
    rows = kernel_rows(mods, args.repeats) + model_rows(mods, args.repeats)
    print_table(rows, tags)


if __name__ == "__main__":
    main()
