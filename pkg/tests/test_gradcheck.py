import numpy as np

from uniembed.gradcheck import (
    analytic_gradients,
    compare_gradients,
    grad_check,
    make_problem,
    numeric_gradients,
    seeded_random_net,
)
from uniembed.netcore import NetConfig, forward


def test_linear_net_distill_is_tight():
    cfg = NetConfig(input_dim=6, hidden_dims=(5,), embedding_dim=3, activation="identity", normalize_output=False, seed=3)
    report = grad_check(seeded_random_net(cfg), "distill", tol=1e-6)
    assert report.passed and report.max_error < 1e-6


def test_corrupted_weight_reported_on_its_layer():
    cfg = NetConfig(input_dim=5, hidden_dims=(4, 4), embedding_dim=3, seed=1)
    net = seeded_random_net(cfg)
    x, lg = make_problem(net, "distill", batch_size=8)
    analytic = analytic_gradients(net, x, lg)
    numeric = numeric_gradients(net, lambda m: lg(forward(m, x)[0])[0])
    analytic.layers[1].weight[0, 0] += 0.1
    report = compare_gradients(analytic, numeric, 1e-4, "distill")
    assert report.failing_layers == [1]


def test_relu_nets_pass_both_losses():
    for seed in range(3):
        net = seeded_random_net(NetConfig(input_dim=6, hidden_dims=(8, 5), embedding_dim=4, seed=seed))
        for kind in ("triplet", "distill"):
            report = grad_check(net, kind, tol=1e-4, seed=seed)
            assert report.passed, (seed, kind, report.layer_errors)


def test_grad_check_leaves_net_untouched():
    net = seeded_random_net(NetConfig(input_dim=4, hidden_dims=(3,), embedding_dim=2))
    before = net.copy()
    grad_check(net, "triplet")
    assert net.same_parameters(before)
    assert np.isfinite(before.layers[0].weight).all()
