#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "caal/net.hpp"
#include "caal/optim.hpp"
#include "gradient_oracle.hpp"

using namespace caal;
using Catch::Approx;

namespace {

HeteroNet small_net(std::uint64_t seed, std::size_t input_dim = 3) {
  NetConfig cfg;
  cfg.input_dim = input_dim;
  cfg.trunk_widths = {8, 8};
  return init_hetero_net(cfg, seed);
}

void zero_params(HeteroNet& net) {
  net.visit_params([](std::vector<double>& p) { std::fill(p.begin(), p.end(), 0.0); });
}

}  // namespace

TEST_CASE("forward on a zero-weight net returns the head biases", "[net]") {
  HeteroNet net = small_net(1);
  zero_params(net);
  net.mean_head.back().bias[0] = 0.75;
  net.var_head.back().bias[0] = -0.25;
  ForwardTrace t = forward(net, std::vector<double>{1.0, -2.0, 3.0});
  REQUIRE(t.mu == Approx(0.75).margin(1e-15));
  REQUIRE(t.r == Approx(-0.25).margin(1e-15));
  REQUIRE(t.sigma2 == Approx(softplus(-0.25) + 1e-6).margin(1e-15));
}

TEST_CASE("variance logit mapping", "[net]") {
  HeteroNet net = small_net(2);
  zero_params(net);
  SECTION("r = 0 gives ln 2 plus the floor") {
    ForwardTrace t = forward(net, std::vector<double>{0.0, 0.0, 0.0});
    REQUIRE(t.r == 0.0);
    REQUIRE(t.sigma2 == Approx(0.6931481805599453).epsilon(1e-12));
  }
  SECTION("large negative r underflows softplus but keeps the floor") {
    net.var_head.back().bias[0] = -40.0;
    ForwardTrace t = forward(net, std::vector<double>{0.0, 0.0, 0.0});
    REQUIRE(t.sigma2 == Approx(1e-6).epsilon(1e-6));
    REQUIRE(t.sigma2 >= 1e-6);
  }
}

TEST_CASE("forward input validation", "[net]") {
  HeteroNet net = small_net(3);
  REQUIRE_THROWS_AS(forward(net, std::vector<double>{1.0}), DataError);
  SECTION("non-finite activations are reported with the layer") {
    net.trunk[1].weights[0] = std::numeric_limits<double>::infinity();
    try {
      forward(net, std::vector<double>{1.0, 1.0, 1.0});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      REQUIRE(std::string(e.what()).find("trunk layer 1") != std::string::npos);
    }
  }
}

TEST_CASE("softplus floor holds for any parameters", "[net][property]") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    HeteroNet net = small_net(rng.raw());
    // random parameter scale blow-up included
    net.visit_params([&](std::vector<double>& p) {
      for (double& v : p) v *= rng.uniform(-20.0, 20.0);
    });
    for (int i = 0; i < 10; ++i) {
      std::vector<double> x = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
      REQUIRE(forward(net, x).sigma2 > 1e-6 * 0.99);
    }
  }
}

TEST_CASE("natural parameter head mapping keeps eta2 negative", "[net][property]") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    HeteroNet net = small_net(rng.raw());
    std::vector<double> x = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    ForwardTrace t = forward(net, x, HeadMapping::NaturalParams);
    REQUIRE(t.eta2 < 0.0);
    REQUIRE(t.sigma2 > 0.0);
    REQUIRE(t.mu == Approx(-t.eta1 / (2.0 * t.eta2)).margin(1e-12));
  }
}

TEST_CASE("analytic gradients match the finite-difference oracle", "[net][gradcheck]") {
  Rng rng(1234);
  const ObjectiveKind kinds[] = {
      {ObjectiveId::Nll, 0.1, 0.5},
      {ObjectiveId::DecoupledMseSgNll, 0.1, 0.5},
      {ObjectiveId::BetaNll, 0.1, 0.5},
      {ObjectiveId::Faithful, 0.1, 0.5},
      {ObjectiveId::NaturalGaussian, 0.1, 0.5},
  };
  for (const ObjectiveKind& k : kinds) {
    for (int rep = 0; rep < 3; ++rep) {
      HeteroNet net = small_net(rng.raw());
      std::vector<Sample> batch;
      for (int i = 0; i < 4; ++i) {
        batch.push_back({{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)},
                         rng.uniform(-2, 2)});
      }
      const auto res = gradient_oracle::check_gradients(net, batch, k);
      INFO(objective_name(k.id) << " max rel err " << res.max_rel_err);
      REQUIRE(res.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("stop-gradient routing produces exact zeros", "[net][routing]") {
  Rng rng(55);
  HeteroNet net = small_net(rng.raw());
  std::vector<Sample> batch;
  for (int i = 0; i < 5; ++i) {
    batch.push_back({{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}, rng.uniform(-2, 2)});
  }

  SECTION("decoupled: variance component sends exactly zero to the mean head") {
    BackwardResult bw = backward(net, batch, {ObjectiveId::DecoupledMseSgNll, 0.1, 0.5},
                                 LossComponent::VarOnly);
    for (const LayerGrads& lg : bw.grads.mean_head) {
      for (double g : lg.d_weights) REQUIRE(g == 0.0);
      for (double g : lg.d_bias) REQUIRE(g == 0.0);
    }
    // ... while the trunk still receives variance-branch gradient
    double trunk_norm = 0.0;
    for (const LayerGrads& lg : bw.grads.trunk) {
      for (double g : lg.d_weights) trunk_norm += g * g;
    }
    REQUIRE(trunk_norm > 0.0);
  }

  SECTION("faithful: variance component sends exactly zero to trunk and mean head") {
    BackwardResult bw = backward(net, batch, {ObjectiveId::Faithful, 0.1, 0.5}, LossComponent::VarOnly);
    for (const LayerGrads& lg : bw.grads.trunk) {
      for (double g : lg.d_weights) REQUIRE(g == 0.0);
      for (double g : lg.d_bias) REQUIRE(g == 0.0);
    }
    for (const LayerGrads& lg : bw.grads.mean_head) {
      for (double g : lg.d_weights) REQUIRE(g == 0.0);
      for (double g : lg.d_bias) REQUIRE(g == 0.0);
    }
    double var_norm = 0.0;
    for (const LayerGrads& lg : bw.grads.var_head) {
      for (double g : lg.d_weights) var_norm += g * g;
    }
    REQUIRE(var_norm > 0.0);
  }

  SECTION("perturbing the mean head changes the variance loss value, not its mean-head gradient") {
    const ObjectiveKind k{ObjectiveId::DecoupledMseSgNll, 0.1, 0.5};
    const double before = backward(net, batch, k, LossComponent::VarOnly).mean_loss;
    HeteroNet bumped = net;
    bumped.mean_head.back().bias[0] += 0.5;
    BackwardResult bw = backward(bumped, batch, k, LossComponent::VarOnly);
    REQUIRE(bw.mean_loss != Approx(before).margin(1e-12));
    for (const LayerGrads& lg : bw.grads.mean_head) {
      for (double g : lg.d_weights) REQUIRE(g == 0.0);
      for (double g : lg.d_bias) REQUIRE(g == 0.0);
    }
  }
}

TEST_CASE("backward rejects empty batches", "[net]") {
  HeteroNet net = small_net(5);
  std::vector<Sample> empty;
  REQUIRE_THROWS_AS(backward(net, empty, {ObjectiveId::Nll, 0.1, 0.5}), ConfigError);
}

TEST_CASE("adam update algebra", "[optim]") {
  SECTION("zero gradients and zero decay leave parameters unchanged") {
    std::vector<double> p = {1.0, -2.0}, g = {0.0, 0.0}, m = {0.0, 0.0}, v = {0.0, 0.0};
    adam_update(p, g, m, v, 1, 1e-3, 0.0, 0.9, 0.999, 1e-8);
    REQUIRE(p[0] == 1.0);
    REQUIRE(p[1] == -2.0);
  }
  SECTION("first step with unit gradient moves by about -lr") {
    std::vector<double> p = {0.0}, g = {1.0}, m = {0.0}, v = {0.0};
    const double lr = 1e-2;
    adam_update(p, g, m, v, 1, lr, 0.0, 0.9, 0.999, 1e-8);
    REQUIRE(p[0] == Approx(-lr).epsilon(1e-7));
  }
  SECTION("pure weight decay is the decoupled additive term") {
    std::vector<double> p = {1.0}, g = {0.0}, m = {0.0}, v = {0.0};
    adam_update(p, g, m, v, 1, 1e-4, 1e-4, 0.9, 0.999, 1e-8);
    REQUIRE(p[0] == Approx(1.0 - 1e-8).epsilon(1e-15));
  }
  SECTION("non-finite gradient rejected") {
    std::vector<double> p = {0.0}, g = {std::numeric_limits<double>::quiet_NaN()}, m = {0.0}, v = {0.0};
    REQUIRE_THROWS_AS(adam_update(p, g, m, v, 1, 1e-3, 0.0, 0.9, 0.999, 1e-8), NumericError);
  }
}

TEST_CASE("train_member behaviour", "[optim]") {
  const ObjectiveKind obj{ObjectiveId::DecoupledMseSgNll, 0.1, 0.5};

  SECTION("max_epochs = 0 returns the initial net unchanged with empty history") {
    NetConfig cfg;
    cfg.input_dim = 1;
    cfg.trunk_widths = {8};
    HeteroNet net = init_hetero_net(cfg, 3);
    std::vector<Sample> train = {{{0.0}, 1.0}};
    std::vector<Sample> val = {{{0.5}, 1.0}};
    TrainSchedule sched;
    sched.max_epochs = 0;
    TrainResult res = train_member(net, train, val, obj, sched);
    REQUIRE(res.history.epochs.empty());
    bool identical = true;
    std::vector<const std::vector<double>*> a, b;
    net.visit_params([&](const std::vector<double>& p) { a.push_back(&p); });
    res.net.visit_params([&](const std::vector<double>& p) { b.push_back(&p); });
    for (std::size_t i = 0; i < a.size(); ++i) identical = identical && (*a[i] == *b[i]);
    REQUIRE(identical);
  }

  SECTION("constant target is fit to within 1e-2") {
    NetConfig cfg;
    cfg.input_dim = 1;
    cfg.trunk_widths = {16};
    const double c = 0.7;
    TrainSchedule sched;
    sched.max_epochs = 400;
    sched.batch_size = 16;
    sched.lr0 = 2e-3;
    sched.early_stop_patience = 400;
    sched.plateau_patience = 150;
    sched.min_lr = 1e-5;
    sched.weight_decay = 0.0;
    sched.seed = 17;

    SECTION("pure mean branch (lambda = 0)") {
      HeteroNet net = init_hetero_net(cfg, 11);
      Rng rng(4);
      std::vector<Sample> train, val;
      for (int i = 0; i < 64; ++i) train.push_back({{rng.uniform(-1, 1)}, c});
      for (int i = 0; i < 32; ++i) val.push_back({{rng.uniform(-1, 1)}, c});
      TrainResult res =
          train_member(net, train, val, {ObjectiveId::DecoupledMseSgNll, 0.0, 0.5}, sched);
      for (const Sample& s : train) {
        REQUIRE(forward(res.net, s.x).mu == Approx(c).margin(1e-2));
      }
    }

    SECTION("with the variance branch engaged (lambda = 0.1)") {
      // a small noise floor keeps the variance target bounded; the mean still
      // converges to the constant
      HeteroNet net = init_hetero_net(cfg, 14);
      Rng rng(4);
      std::vector<Sample> train, val;
      for (int i = 0; i < 64; ++i) train.push_back({{rng.uniform(-1, 1)}, c + 0.005 * rng.normal()});
      for (int i = 0; i < 128; ++i) val.push_back({{rng.uniform(-1, 1)}, c + 0.005 * rng.normal()});
      TrainResult res = train_member(net, train, val, obj, sched);
      for (const Sample& s : train) {
        REQUIRE(forward(res.net, s.x).mu == Approx(c).margin(1e-2));
      }
    }
  }

  SECTION("non-improving validation stops after exactly early_stop_patience + 1 epochs") {
    NetConfig cfg;
    cfg.input_dim = 1;
    cfg.trunk_widths = {8};
    HeteroNet net = init_hetero_net(cfg, 21);
    // Training pulls the prediction at x=1 toward +1; the validation label
    // sits at -1, so every epoch after the first evaluates strictly worse.
    std::vector<Sample> train = {{{1.0}, 1.0}};
    std::vector<Sample> val = {{{1.0}, -1.0}};
    TrainSchedule sched;
    sched.max_epochs = 100;
    sched.batch_size = 1;
    sched.lr0 = 1e-2;
    sched.weight_decay = 0.0;
    sched.early_stop_patience = 5;
    sched.plateau_patience = 50;  // keep the LR out of the picture
    sched.seed = 1;
    ObjectiveKind mse_only{ObjectiveId::DecoupledMseSgNll, 0.0, 0.5};
    TrainResult res = train_member(net, train, val, mse_only, sched);
    REQUIRE(res.history.epochs.size() == 6);  // patience + 1
    REQUIRE(res.history.best_epoch == 1);
    for (std::size_t e = 1; e < res.history.epochs.size(); ++e) {
      REQUIRE(res.history.epochs[e].val_loss > res.history.epochs[e - 1].val_loss);
    }
  }

  SECTION("plateau halves the learning rate down to min_lr") {
    NetConfig cfg;
    cfg.input_dim = 1;
    cfg.trunk_widths = {8};
    HeteroNet net = init_hetero_net(cfg, 21);
    std::vector<Sample> train = {{{1.0}, 1.0}};
    std::vector<Sample> val = {{{1.0}, -1.0}};
    TrainSchedule sched;
    sched.max_epochs = 100;
    sched.batch_size = 1;
    sched.lr0 = 1e-2;
    sched.weight_decay = 0.0;
    sched.early_stop_patience = 9;
    sched.plateau_patience = 3;
    sched.min_lr = 4e-3;
    sched.seed = 1;
    ObjectiveKind mse_only{ObjectiveId::DecoupledMseSgNll, 0.0, 0.5};
    TrainResult res = train_member(net, train, val, mse_only, sched);
    REQUIRE(res.history.epochs.size() == 10);
    // epochs 1..4 at lr0; reduction after epoch 4 (3 bad epochs); floor at min_lr
    REQUIRE(res.history.epochs[3].lr == Approx(1e-2));
    REQUIRE(res.history.epochs[4].lr == Approx(5e-3));
    REQUIRE(res.history.epochs[7].lr == Approx(4e-3));  // 2.5e-3 floored
  }

  SECTION("training is bit-reproducible for a fixed seed") {
    NetConfig cfg;
    cfg.input_dim = 1;
    cfg.trunk_widths = {8, 8};
    HeteroNet net = init_hetero_net(cfg, 31);
    Rng rng(8);
    std::vector<Sample> train, val;
    for (int i = 0; i < 40; ++i) train.push_back({{rng.uniform(-1, 1)}, rng.uniform(-1, 1)});
    for (int i = 0; i < 10; ++i) val.push_back({{rng.uniform(-1, 1)}, rng.uniform(-1, 1)});
    TrainSchedule sched;
    sched.max_epochs = 15;
    sched.batch_size = 16;
    sched.lr0 = 1e-3;
    sched.seed = 77;
    TrainResult a = train_member(net, train, val, obj, sched);
    TrainResult b = train_member(net, train, val, obj, sched);
    std::vector<double> flat_a, flat_b;
    a.net.visit_params([&](const std::vector<double>& p) { flat_a.insert(flat_a.end(), p.begin(), p.end()); });
    b.net.visit_params([&](const std::vector<double>& p) { flat_b.insert(flat_b.end(), p.begin(), p.end()); });
    REQUIRE(flat_a == flat_b);
  }

  SECTION("empty sets rejected") {
    HeteroNet net = small_net(1, 1);
    std::vector<Sample> data = {{{0.0}, 0.0}};
    std::vector<Sample> empty;
    REQUIRE_THROWS_AS(train_member(net, empty, data, obj, TrainSchedule{}), ConfigError);
    REQUIRE_THROWS_AS(train_member(net, data, empty, obj, TrainSchedule{}), ConfigError);
  }
}

TEST_CASE("schedule validation", "[optim]") {
  TrainSchedule s;
  s.lr_factor = 1.0;
  REQUIRE_THROWS_AS(validate_schedule(s), ConfigError);
  s = TrainSchedule{};
  s.min_lr = 1.0;
  REQUIRE_THROWS_AS(validate_schedule(s), ConfigError);
  s = TrainSchedule{};
  s.plateau_patience = 0;
  REQUIRE_THROWS_AS(validate_schedule(s), ConfigError);
}
