"""
Normal or Cauchy noise?
=======================

Review counts come in bursts, and a Normal likelihood lets a handful of
extreme weeks pull the fit around. Here we corrupt 5% of a clean synthetic
series with large shocks and compare where each likelihood puts the change
point, then look at how wide the two predictive bands are on clean data.
"""

import numpy as np

from bayescp import (HmcConfig, SynthSpec, derive_priors, generate, predictive_band,
                     run_chains, summarize)

spec = SynthSpec(0.004, -0.006, 0.5, 4.5, 0.75, 0.3, 400, "normal", seed=42)
clean = generate(spec)

# %%
# Shift 20 randomly chosen weeks by 3 to 6 log-units in either direction.
rng = np.random.Generator(np.random.PCG64(7))
idx = np.sort(rng.choice(clean.T, 20, replace=False))
y = clean.target.copy()
y[idx] += rng.choice([-1, 1], idx.size) * rng.uniform(3, 6, idx.size)
dirty = clean.with_target(y)

config = HmcConfig(num_samples=300, warmup_steps=300, seed=0)

# %%
fits = {}
for kind in ("normal", "cauchy"):
    fits[kind] = run_chains(dirty, derive_priors(dirty), kind, 20.0, config)
    d = summarize(fits[kind])
    print(f"{kind:>6}: tau = {d['tau'].mean:.4f} (error {abs(d['tau'].mean - spec.tau_true):.4f}),"
          f" sigma = {d['sigma'].mean:.3f}, max r_hat = {max(p.r_hat for p in d.params):.3f}")

# %%
# On the clean series the Cauchy band is much wider: its scale is
# comparable to the Normal sigma but the tails are heavy, so the 5% and 95%
# quantiles sit further out.
widths = {}
for kind in ("normal", "cauchy"):
    cs = run_chains(clean, derive_priors(clean), kind, 20.0, config)
    band = predictive_band(cs, clean, kind, 20.0, rng_seed=0)
    widths[kind] = band.hi - band.lo
    print(f"{kind:>6} 90% band: mean width {widths[kind].mean():.3f}")
print("cauchy band wider at every week:", bool(np.all(widths["cauchy"] > widths["normal"])))
