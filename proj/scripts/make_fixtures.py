#!/usr/bin/env python3
"""Regenerate the committed policy fixtures.

Each policy is a ReLU MLP fitted (in float64) to a hand-written stochastic
controller for one benchmark, then exported in the network JSON schema with
three probe points whose logits come from the torch forward pass.
"""

import argparse
import json
import math
from pathlib import Path

import torch

torch.set_default_dtype(torch.float64)


def ball_logits(s):
    p, v = s[:, 0], s[:, 1]
    reach = torch.minimum(p - 4.0, 9.0 - p)
    slow = 1.5 - v.abs()
    score = torch.clamp(torch.minimum(reach, slow), -1.5, 1.5)
    return torch.stack([torch.zeros_like(p), 3.0 * score], dim=1)


def cruise_logits(s):
    x, v = s[:, 0], s[:, 1]
    d = 1.5 * (28.0 + 0.5 * (x - 5.0) - v)
    return torch.stack([0.5 * d, -0.5 * d], dim=1)


def pendulum_logits(s):
    theta, omega = s[:, 0], s[:, 1]
    lean = 8.0 * (theta + 0.2 * omega)
    return torch.stack([torch.zeros_like(theta), lean, -lean], dim=1)


POLICIES = {
    "bouncing_ball_policy": dict(target=ball_logits, hidden=(32, 32), lo=(0.0, -15.0), hi=(10.0, 15.0),
                                 focus=((3.0, -3.0), (10.0, 3.0)), probes=[(7.0, -0.05), (5.5, -0.1), (2.0, 3.0)]),
    "cruise_control_policy": dict(target=cruise_logits, hidden=(64, 64), lo=(-2.0, 22.0), hi=(14.0, 36.0),
                                  probes=[(6.5, 29.0), (3.0, 32.0), (10.0, 26.0)]),
    "pendulum_policy": dict(target=pendulum_logits, hidden=(64, 64), lo=(-0.8, -3.0), hi=(0.8, 3.0),
                            probes=[(0.0, 0.0), (0.05, -0.05), (-0.3, 1.0)]),
}


def build(hidden, inputs, actions):
    layers, width = [], inputs
    for h in hidden:
        layers += [torch.nn.Linear(width, h), torch.nn.ReLU()]
        width = h
    layers.append(torch.nn.Linear(width, actions))
    return torch.nn.Sequential(*layers)


def fit(spec, seed, steps):
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    lo, hi = torch.tensor(spec["lo"]), torch.tensor(spec["hi"])
    x = lo + (hi - lo) * torch.rand(8000, 2, generator=gen)
    if "focus" in spec:
        flo, fhi = (torch.tensor(b) for b in spec["focus"])
        x = torch.cat([x, flo + (fhi - flo) * torch.rand(8000, 2, generator=gen)])
    y = spec["target"](x)
    # Normalisation is folded into the first layer after training.
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    net = build(spec["hidden"], 2, y.shape[1])
    opt = torch.optim.Adam(net.parameters(), lr=3e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps)
    for _ in range(steps):
        opt.zero_grad()
        loss = torch.mean((net((x - mid) / half) - y) ** 2)
        loss.backward()
        opt.step()
        sched.step()
    with torch.no_grad():
        first = net[0]
        first.bias -= first.weight @ (mid / half)
        first.weight /= half
    return net, loss.item()


def export(net, spec, inputs):
    linear = [m for m in net if isinstance(m, torch.nn.Linear)]
    layers = []
    for i, m in enumerate(linear):
        layers.append({
            "weights": m.weight.detach().tolist(),
            "bias": m.bias.detach().tolist(),
            "activation": "linear" if i + 1 == len(linear) else "relu",
        })
    probes = []
    with torch.no_grad():
        for p in spec["probes"]:
            logits = net(torch.tensor([p]))[0].tolist()
            probes.append({"input": list(p), "logits": logits})
    return {"inputs": inputs, "actions": linear[-1].out_features, "layers": layers, "probes": probes}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures" / "networks"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--steps", type=int, default=3000)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, spec in POLICIES.items():
        net, loss = fit(spec, args.seed, args.steps)
        doc = export(net, spec, 2)
        (out / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(f"{name}: mse {loss:.3e}")


if __name__ == "__main__":
    main()
