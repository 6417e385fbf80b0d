import sys

from epsistools.chain import ModelParams, derived
from epsistools.cli import run
from epsistools.exact import mixing_time, spectral_gap, stationary_distribution
from epsistools.simulate import GoodSet, simulate_coupled, simulate_path, sup_deviation


def main(argv=None):
    """Console entry point: ``epsistools <subcommand> [options]``."""
    sys.exit(run(argv))


if __name__ == "__main__":
    # ~~~~~~~~~~~~ Closed forms ~~~~~~~~~~~~
    params = ModelParams(lam=1.0, mu=2.0, epsilon=0.5, N=1000)
    d = derived(params)
    # J = 2.0616, x_star = 0.2808, t_N = 1.6754

    # ~~~~~~~~~~~~ Exact analysis ~~~~~~~~~~~~
    small = params.with_population(200)
    pi = stationary_distribution(small)
    t_mix = mixing_time(small, 0.25)
    gap, relaxation_time = spectral_gap(small)

    # ~~~~~~~~~~~~ Simulation ~~~~~~~~~~~~
    path = simulate_path(params, x0=0, t_max=d.t_N, seed=1)
    deviation = sup_deviation(path, params)
    trace = simulate_coupled(
        params, w0=0, z0=params.N, t_max=d.t_N + 4.0, good_set=GoodSet.default(params), seed=1
    )
