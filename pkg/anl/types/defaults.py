class Defaults:
    format_version = 1

    # quantile levels between 2.5% and 97.5%
    levels = (0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5,
              0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.975)

    # OGD step sizes combined by BOA: 10^i, -8 <= i <= 0
    step_sizes = tuple(10.0 ** i for i in range(-8, 1))

    # gam
    n_knots = 10
    gcv_log10_grid = tuple(range(-4, 7))
    gcv_sweeps = 2
    rows_per_coefficient = 10

    # kalman
    sigma2_log10_grid = tuple(range(-6, 3))
    q_ratio_log10_grid = tuple(range(-10, -1))
    dynamic_patience = 3
    dynamic_min_rows = 200
    dynamic_min_gain = 1e-6
    # log-likelihood gain required to switch a state-noise variance on
    dynamic_activation_gain = 3.0
    dynamic_refine_levels = 3

    # quantile regression
    qr_max_iter = 500
    qr_polish_steps = 200
    qr_tolerance = 1e-10
    qr_rows_per_covariate = 10

    # dataset
    max_interpolated_gap = 3
    delimiter = ','
    trend_origin = '2000-01-01'

    # evaluation
    reliability_min_count = 30
    band_z = 1.959963984540054

    checkpoint_format = 'json'
