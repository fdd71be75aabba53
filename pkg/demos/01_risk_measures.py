# %% Gaussian CVaR, two ways
# The critic predicts a mean and a variance for the return.  The actor is
# trained on a lower-tail summary of that Gaussian.  Two coefficients are on
# offer: the one the training code uses by default and the textbook tail mean.
import numpy as np

from wcpg.risk import GaussianReturn, cvar_coefficient, cvar_gaussian, cvar_gaussian_standard, w2_gaussian

alphas = np.array([0.02, 0.05, 0.1, 0.25, 0.5, 1.0])
print("alpha   C_default  C_textbook")
for a in alphas:
    print(f"{a:5.2f}   {cvar_coefficient(a):9.5f}  {cvar_coefficient(a, kind='standard'):9.5f}")

# %% check the textbook version against a sorted sample
z = GaussianReturn(2.0, 4.0)
x = np.sort(np.random.default_rng(0).normal(z.mean, np.sqrt(z.variance), 2_000_000))
for a in (0.05, 0.25, 1.0):
    tail = x[: int(a * x.size)].mean()
    print(f"alpha {a:4.2f}: closed form {cvar_gaussian_standard(z, a):8.4f}  sample {tail:8.4f}")

# the default coefficient is much flatter in alpha
print("default at 0.05 / 1.0:", cvar_gaussian(z, 0.05), cvar_gaussian(z, 1.0))

# %% the critic loss is a squared 2-Wasserstein distance between Gaussians
print(w2_gaussian(GaussianReturn(0.0, 1.0), GaussianReturn(3.0, 1.0)))  # 9, means only
print(w2_gaussian(GaussianReturn(0.0, 1.0), GaussianReturn(0.0, 4.0)))  # 1, (1 - 2)^2
