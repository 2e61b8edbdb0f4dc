"""Throwaway check of flattening equivalence across random graphs."""
import sys
sys.path.insert(0, "src")
import numpy as np

from causalsched.workload import LayerKind, LayerSpec, TensorShape, WorkloadGraph, validate_graph, infer_shapes
from causalsched.transform import ExecutionMode, flatten
from causalsched import oracle


def random_graph(rng, allow_temporal_pad=True, allow_residual=True):
    x = int(rng.integers(1, 5))
    c = int(rng.integers(1, 4))
    depth = int(rng.integers(1, 7))
    layers = []
    i = 0
    while len(layers) < depth:
        kind = rng.choice(["conv", "conv", "pool", "add"])
        if kind == "add" and (not allow_residual or len(layers) < 2):
            kind = "conv"
        if kind == "add":
            # residual over the previous two layers; shapes must match, so use
            # the same-shape trick: add(prev, prev_prev) only if shapes equal —
            # build instead: conv same-shape then add with its input
            a, b = layers[-1].id, layers[-2].id
            layers.append(LayerSpec(id=i, kind=LayerKind.ADD, predecessors=(a, b)))
        else:
            sy = int(rng.choice([1, 1, 2, 4]))
            dy = int(rng.choice([1, 1, 2]))
            fy = int(rng.integers(1, 4))
            fx = int(rng.integers(1, 4))
            pt = int(rng.integers(0, 2)) if allow_temporal_pad else 0
            pb = int(rng.integers(0, 2)) if allow_temporal_pad else 0
            pl = int(rng.integers(0, 2))
            pr = int(rng.integers(0, 2))
            kw = dict(kernel=(fx, fy), stride=(1, sy), dilation=(1, dy),
                      padding=(pl, pr, pt, pb))
            if kind == "conv":
                layers.append(LayerSpec(id=i, kind=LayerKind.CONV, k=int(rng.integers(1, 4)),
                                        predecessors=(i - 1,) if i else (), **kw))
            else:
                layers.append(LayerSpec(id=i, kind=LayerKind.POOL,
                                        predecessors=(i - 1,) if i else (), **kw))
        i += 1
    y = int(rng.integers(8, 33))
    g = WorkloadGraph(TensorShape(x, y, c), tuple(layers))
    if validate_graph(g):
        return None
    return g


def residual_graph(rng):
    # conv -> (conv same-shape) -> add(join) chain with optional strided tail
    x = int(rng.integers(1, 4)); c = int(rng.integers(1, 3))
    y = int(rng.integers(10, 33))
    k1 = int(rng.integers(1, 4))
    layers = [
        LayerSpec(id=0, kind=LayerKind.CONV, k=k1, kernel=(1, 2), stride=(1, int(rng.choice([1, 2]))),
                  padding=(0, 0, 0, 0), predecessors=()),
        LayerSpec(id=1, kind=LayerKind.CONV, k=k1, kernel=(3, 3), stride=(1, 1),
                  padding=(1, 1, 1, 1), predecessors=(0,)),
        LayerSpec(id=2, kind=LayerKind.ADD, predecessors=(0, 1)),
        LayerSpec(id=3, kind=LayerKind.POOL, kernel=(1, 2), stride=(1, 2), predecessors=(2,)),
        LayerSpec(id=4, kind=LayerKind.CONV, k=2, kernel=(1, 3), stride=(1, 1), predecessors=(3,)),
    ]
    g = WorkloadGraph(TensorShape(x, y, c), tuple(layers))
    return None if validate_graph(g) else g


def check(g, rng, T):
    ish = g.input_shape
    weights = oracle.random_weights(g, rng)
    stream = rng.integers(-8, 8, size=(ish.x, ish.y + T - 1, ish.c)).astype(np.int64)
    frames = [stream[:, t:t + ish.y, :] for t in range(T)]
    refs = oracle.execute_reference(g, frames, weights)
    try:
        flat = flatten(g, ExecutionMode.BATCH, frames=T)
    except Exception as e:
        return f"flatten-fail: {e}"
    out = oracle.execute_flattened(flat, frames, weights)
    rows = oracle.corresponding_rows(g, T)
    if not rows:
        return "no-corresponding-rows"
    for (t, j, m) in rows:
        if m >= out.shape.y:
            return f"m-out-of-range t={t} j={j} m={m} ext={out.shape.y}"
        if not np.array_equal(out.values[:, m, :], refs[t].values[:, j, :]):
            return f"MISMATCH t={t} j={j} m={m}"
    return f"ok ({len(rows)} rows)"


def main():
    rng = np.random.default_rng(1234)
    stats = {}
    n_ok = 0
    for trial in range(300):
        g = random_graph(rng) if trial % 3 else residual_graph(rng)
        if g is None:
            stats["invalid-graph"] = stats.get("invalid-graph", 0) + 1
            continue
        T = int(rng.integers(2, 6))
        res = check(g, rng, T)
        key = res.split(" ")[0] if not res.startswith("ok") else "ok"
        stats[key] = stats.get(key, 0) + 1
        if res.startswith("MISMATCH") or res.startswith("m-out-of-range"):
            print(trial, res)
            for l in g.layers:
                print("   ", l)
            print("    input", g.input_shape)
            if stats.get("MISMATCH", 0) + stats.get("m-out-of-range", 0) > 3:
                break
    print(stats)


if __name__ == "__main__":
    main()
