"""Central finite-difference gradient check shared by unit and acceptance tests."""
import numpy as np

from v2xbeam.predict.vdban import VdbanModel, VdbanSpec

TOY_SPEC = VdbanSpec(G=6, n_out=5, dims=(8, 8), key_dims=(4, 4), heads=2, ff_dim=8, head=(16, 16))


def toy_problem(seed=0, batch=4):
    rng = np.random.default_rng(seed)
    model = VdbanModel.init(TOY_SPEC, seed, np.float64, (1.0, -2.0), (2.0, 3.0))
    for k in model.params:  # nonzero biases exercise every gradient path
        model.params[k] = np.asarray(model.params[k] + 0.1 * rng.normal(size=model.params[k].shape))
    vdf = rng.uniform(0, 1, (batch, TOY_SPEC.G, 4))
    vdf[..., 3] = rng.uniform(-np.pi, np.pi, (batch, TOY_SPEC.G))
    loc = rng.normal(size=(batch, 2)) * 3
    labels = rng.integers(0, TOY_SPEC.n_out, batch)
    return model, vdf, loc, labels


def max_relative_error(model, vdf, loc, labels, h=1e-5):
    _, grads = model.loss_and_grads(vdf, loc, labels)
    worst = 0.0
    for name, p in model.params.items():
        flat = p.reshape(-1)
        g = np.asarray(grads[name]).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = model.loss(vdf, loc, labels)
            flat[i] = old - h
            down = model.loss(vdf, loc, labels)
            flat[i] = old
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - g[i]) / max(abs(num) + abs(g[i]), 1e-6))
    return worst
