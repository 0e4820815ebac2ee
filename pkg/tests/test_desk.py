def test_loss_falls_by_epoch_20(desk_results):
    for seed, run in desk_results["runs"]["rein/full"].items():
        losses = run["epoch_losses"]
        assert losses[19] < losses[0], seed


def test_baselines_share_the_budget(desk_results):
    runs = desk_results["runs"]
    budget = runs["rein/full"]["0"]["n_params"]
    for key in ("lstm", "gtgraph", "rein/upward", "rein/downward", "rein/p_random"):
        n = runs[key]["0"]["n_params"]
        assert 0.9 * budget <= n <= budget, (key, n, budget)
