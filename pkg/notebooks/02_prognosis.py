# %% [markdown]
# # Remaining useful life
#
# From a posterior sample to a predictive band on crack length and to RUL
# distributions at a few inspection checkpoints.

# %%
import numpy as np

from rulsmc.bayes import TemperedPosterior
from rulsmc.damage import GrowthLaw, ModelParams, failure_cycle
from rulsmc.data import synth_data
from rulsmc.rul import default_horizon, predictive_band, rul_series, rul_table
from rulsmc.smc import SmcConfig, run_smc

truth = ModelParams(-4.0, 1.3, 0.2)
law = GrowthLaw(a0=1.0, a_fail=20.0)
obs = synth_data(truth, law, n_points=20, cycle_span=(0, 15000), seed=1)
post = run_smc(SmcConfig(n_particles=1024, n_mcmc=5, seed=0), TemperedPosterior(obs, law=law))

# %%
grid = np.linspace(0, 22000, 12)
band = predictive_band(post, law, grid, seed=0)
print(f"{'cycle':>8s} {'2.5%':>8s} {'median':>8s} {'97.5%':>8s}")
for row in band.as_table():
    print("{:8.0f} {:8.3f} {:8.3f} {:8.3f}".format(*row))

# %% [markdown]
# The band should cover about 95% of the observations it was fitted on.

# %%
at_obs = predictive_band(post, law, obs.cycles, seed=1)
print("in-sample coverage:", np.mean(at_obs.contains(obs.cycles, obs.lengths)))

# %%
horizon = default_horizon(obs, law)
series = rul_series(post, law, [0, 5000, 10000, 15000, 19000], horizon=horizon)
# columns: checkpoint, RUL quantiles, censored fraction
print(rul_table(series))
print("true failure cycle:", failure_cycle(truth, law))

# %% [markdown]
# Near the end of life the RUL distribution narrows and some draws have
# already failed (RUL 0).

# %%
last = series[-1]
print("P(rul == 0) at", last.current_cycle, "=", np.mean(last.rul_samples == 0))
print("censored fraction:", last.censored_fraction)
