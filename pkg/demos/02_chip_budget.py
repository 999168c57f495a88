"""Efficiency budget of the default chip and the squeezing it predicts."""

import math

from cvchip import chip, config
from cvchip import gaussian as gs

net = config.netlist_from_dict(config.load_config())

for arm in chip.ARMS:
    b = chip.efficiency_budget(net, arm)
    print(f"arm {arm}")
    print(b.table())
    print(f"estimated (no excess loss) {b.estimated:.4f}")
    print(f"path length implied by the estimate: {chip.implied_path_length(net, arm, b.estimated):.2f} cm")
    print()

# DC1 parked at 16 V sends waveguide 1 straight to HD1
state = chip.output_state(net, chip.ControlSetting({"DC1": 16.0}, (154.0, 0.0)))

for label, th in (("squeezed", 0.0), ("anti-squeezed", math.pi / 2)):
    v = gs.quadrature_variance(state, 0, th)
    print(f"{label:14s} {10 * math.log10(v):+.3f} dB")

ref = net.pp_waveguides[0]
for eta in (0.87, 1.0):
    print(f"4 cm, 500 mW, eta {eta}: {chip.project_squeezing(500, 4.0, eta, ref):+.2f} dB")
