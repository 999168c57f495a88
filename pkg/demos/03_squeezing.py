"""Simulated pump-power sweep with LO scans, then the joint (mu, eta) fit."""

from cvchip import chip, config
from cvchip import experiments as ex

doc = config.load_config()
net = config.experiment_netlist(doc, "squeeze")
sec = config.experiment_section(doc, "squeeze")
acq = config.acquisition_preset(doc, sec["acquisition"])
schedule = config.schedule_from_dict(sec["schedule"], net)

sweep = ex.squeeze_sweep(net, schedule, acq, sec["powers"], waveguide=1, seed=0)
for s in sweep.scans:
    print(f"{s.power:6.1f} mW  V- {s.fit.v_minus_db:+.3f} dB  V+ {s.fit.v_plus_db:+.3f} dB")

fit = sweep.power_fit
print(f"mu  = {fit.mu:.5f} mW^-1/2  95% CI [{fit.mu_ci[0]:.5f}, {fit.mu_ci[1]:.5f}]")
print(f"eta = {fit.eta:.4f}          95% CI [{fit.eta_ci[0]:.4f}, {fit.eta_ci[1]:.4f}]")
print(f"chip values: mu {net.pp_waveguides[0].mu}, "
      f"eta {chip.efficiency_budget(net, 1).total:.4f}")
