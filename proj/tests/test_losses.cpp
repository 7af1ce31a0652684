// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "support/oracles.hpp"
#include "tsd/losses.hpp"
#include "tsd/model.hpp"

using namespace tsd;

namespace {

PooledBundle zero_pooled(std::size_t b, std::size_t d) {
  PooledBundle p;
  for (int m = 0; m < 3; ++m) {
    p.common[m] = Tensor::zeros({b, d});
    p.priv[m] = Tensor::zeros({b, d});
  }
  for (int i = 0; i < 3; ++i) {
    p.pair_first[i] = Tensor::zeros({b, d});
    p.pair_second[i] = Tensor::zeros({b, d});
  }
  return p;
}

std::vector<std::vector<double>> to_rows(const Tensor& t) {
  const std::size_t n = t.extent(0), d = t.extent(1);
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) rows[i][j] = t.at({i, j});
  return rows;
}

}  // namespace

TEST_CASE("common_consistency hand values") {
  PooledBundle p = zero_pooled(1, 2);
  CHECK(common_consistency(p).item() == 0.0);

  p.common[0] = Tensor::from_data({1, 2}, {1, 0});  // c_l
  CHECK(common_consistency(p).item() == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  // relabeling modalities leaves the value unchanged (pair symmetry)
  PooledBundle q = zero_pooled(1, 2);
  q.common[2] = Tensor::from_data({1, 2}, {1, 0});  // the same vector on c_a
  CHECK(common_consistency(q).item() == doctest::Approx(common_consistency(p).item()));
}

TEST_CASE("common_consistency is zero iff pooled common embeddings coincide") {
  Rng rng(1);
  PooledBundle p = zero_pooled(3, 4);
  Tensor c = Tensor::randn({3, 4}, rng);
  for (int m = 0; m < 3; ++m) p.common[m] = c;
  CHECK(common_consistency(p).item() == 0.0);
  // perturb one embedding -> strictly positive
  std::vector<double> v = c.values();
  v[0] += 1e-3;
  p.common[1] = Tensor::from_data({3, 4}, v);
  CHECK(common_consistency(p).item() > 0.0);
}

TEST_CASE("common_consistency invariant under joint orthogonal transform") {
  Rng rng(2);
  PooledBundle p = zero_pooled(2, 2);
  for (int m = 0; m < 3; ++m) p.common[m] = Tensor::randn({2, 2}, rng);
  const double base = common_consistency(p).item();
  // rotate every embedding by the same 2x2 rotation
  const double th = 0.7;
  Tensor rot = Tensor::from_data({2, 2}, {std::cos(th), -std::sin(th), std::sin(th), std::cos(th)});
  PooledBundle q = p;
  for (int m = 0; m < 3; ++m) q.common[m] = matmul(p.common[m], rot);
  CHECK(common_consistency(q).item() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("pairwise_collab hand values") {
  PooledBundle p = zero_pooled(1, 1);
  CHECK(pairwise_collab(p).item() == 0.0);
  p.pair_first[0] = Tensor::from_data({1, 1}, {0.8});
  p.pair_second[0] = Tensor::from_data({1, 1}, {0.2});
  CHECK(pairwise_collab(p).item() == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(pairwise_collab(p).item() >= 0.0);
}

TEST_CASE("hsic hand case n=2, p1=p2=[[1],[-1]] gives 4") {
  Tensor p = Tensor::from_data({2, 1}, {1, -1});
  CHECK(hsic(p, p).item() == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(tsd_oracle::hsic_bruteforce({{1}, {-1}}, {{1}, {-1}}) == doctest::Approx(4.0));
}

TEST_CASE("hsic of a constant feature set is zero") {
  Rng rng(3);
  Tensor p1 = Tensor::randn({5, 3}, rng);
  Tensor p2 = Tensor::from_data({5, 2}, std::vector<double>(10, 2.5));
  CHECK(std::abs(hsic(p1, p2).item()) < 1e-12);
}

TEST_CASE("hsic symmetry and batch precondition") {
  Rng rng(4);
  Tensor p1 = Tensor::randn({6, 3}, rng);
  Tensor p2 = Tensor::randn({6, 2}, rng);
  CHECK(hsic(p1, p2).item() == doctest::Approx(hsic(p2, p1).item()).epsilon(1e-12));
  CHECK_THROWS_AS(hsic(Tensor::randn({1, 3}, rng), Tensor::randn({1, 3}, rng)), contract_error);
}

TEST_CASE("hsic matches the brute-force oracle for n in 2..8, d in 1..4") {
  Rng rng(5);
  for (std::size_t n = 2; n <= 8; ++n) {
    for (std::size_t d = 1; d <= 4; ++d) {
      for (int rep = 0; rep < 10; ++rep) {
        Tensor p1 = Tensor::randn({n, d}, rng);
        Tensor p2 = Tensor::randn({n, d}, rng);
        const double ours = hsic(p1, p2).item();
        const double ref = tsd_oracle::hsic_bruteforce(to_rows(p1), to_rows(p2));
        CAPTURE(n);
        CAPTURE(d);
        CHECK(std::abs(ours - ref) < 1e-10);
        CHECK(ours > -1e-10);  // PSD trace product
      }
    }
  }
}

TEST_CASE("hsic gradient check") {
  Rng rng(6);
  Tensor p1 = Tensor::randn({4, 3}, rng);
  Tensor p2 = Tensor::randn({4, 3}, rng);
  auto f = [&](const Tensor& t) { return hsic(t, p2); };
  CHECK(finite_diff_check(f, p1, 1e-5, 1e-4).pass);
}

TEST_CASE("private_disparity aggregates hsic over private pairs") {
  Rng rng(7);
  PooledBundle p = zero_pooled(4, 2);
  Tensor shared = Tensor::randn({4, 2}, rng);
  for (int m = 0; m < 3; ++m) p.priv[m] = shared;
  const double self_dep = hsic(shared, shared).item();
  CHECK(private_disparity(p).item() == doctest::Approx(self_dep).epsilon(1e-12));
  CHECK(self_dep > 0.0);  // non-constant features are self-dependent
}

TEST_CASE("private_disparity near zero for independent random features") {
  // Monte-Carlo: independent draws at n=256, d=4 give a small value after
  // normalizing by feature scale.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed * 31 + 1);
    PooledBundle p = zero_pooled(256, 4);
    for (int m = 0; m < 3; ++m) p.priv[m] = Tensor::randn({256, 4}, rng);
    double scale = 0.0;
    for (int m = 0; m < 3; ++m) {
      double n2 = 0.0;
      for (double v : p.priv[m].values()) n2 += v * v;
      scale += n2 / 256.0;
    }
    scale /= 3.0;  // average squared row norm ~ d
    const double val = private_disparity(p).item() / (scale * scale);
    CAPTURE(seed);
    CHECK(val < 0.05);
  }
}

TEST_CASE("orthogonality hand case and zero cases") {
  SubspaceBundle b;
  // T=1, d_c=1: C_l=[2], P_l=[3]; everything else zero
  b.common[0] = Tensor::from_data({1, 1, 1}, {2});
  b.priv[0] = Tensor::from_data({1, 1, 1}, {3});
  for (int m = 1; m < 3; ++m) {
    b.common[m] = Tensor::zeros({1, 1, 1});
    b.priv[m] = Tensor::zeros({1, 1, 1});
  }
  for (int p = 0; p < 3; ++p) {
    const auto& pr = modality_pairs()[p];
    (void)pr;
    b.pair_first[p] = Tensor::zeros({1, 1, 1});
    b.pair_second[p] = Tensor::zeros({1, 1, 1});
    b.pair_concat[p] = Tensor::zeros({1, 2, 1});
  }
  // |C^T P|_F^2 = 36 for modality l only; averaged over M=3
  CHECK(orthogonality(b).item() == doctest::Approx(36.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("orthogonality vanishes on disjoint column supports") {
  // Columns of C and P live in R^T; C supported on time steps 0..1 and P on
  // 2..3 makes the column spaces orthogonal, so C^T P = 0.
  std::vector<double> cvals(4 * 4, 0.0), pvals(4 * 4, 0.0);
  Rng rng(8);
  for (int j = 0; j < 4; ++j) {
    cvals[0 * 4 + j] = rng.normal();
    cvals[1 * 4 + j] = rng.normal();
    pvals[2 * 4 + j] = rng.normal();
    pvals[3 * 4 + j] = rng.normal();
  }
  SubspaceBundle b;
  for (int m = 0; m < 3; ++m) {
    b.common[m] = Tensor::from_data({1, 4, 4}, cvals);
    b.priv[m] = Tensor::from_data({1, 4, 4}, pvals);
  }
  for (int p = 0; p < 3; ++p) {
    b.pair_first[p] = Tensor::zeros({1, 4, 4});
    b.pair_second[p] = Tensor::zeros({1, 4, 4});
    b.pair_concat[p] = Tensor::zeros({1, 8, 4});
  }
  CHECK(orthogonality(b).item() == doctest::Approx(0.0));
}

TEST_CASE("orthogonality scales as alpha^4") {
  Rng rng(9);
  SubspaceBundle b;
  for (int m = 0; m < 3; ++m) {
    b.common[m] = Tensor::randn({2, 3, 4}, rng);
    b.priv[m] = Tensor::randn({2, 3, 4}, rng);
  }
  for (int p = 0; p < 3; ++p) {
    b.pair_first[p] = Tensor::randn({2, 3, 4}, rng);
    b.pair_second[p] = Tensor::randn({2, 3, 4}, rng);
    b.pair_concat[p] = concat({b.pair_first[p], b.pair_second[p]}, 1);
  }
  const double base = orthogonality(b).item();
  const double alpha = 1.7;
  SubspaceBundle sb;
  for (int m = 0; m < 3; ++m) {
    sb.common[m] = mul(b.common[m], alpha);
    sb.priv[m] = mul(b.priv[m], alpha);
  }
  for (int p = 0; p < 3; ++p) {
    sb.pair_first[p] = mul(b.pair_first[p], alpha);
    sb.pair_second[p] = mul(b.pair_second[p], alpha);
    sb.pair_concat[p] = mul(b.pair_concat[p], alpha);
  }
  CHECK(orthogonality(sb).item() ==
        doctest::Approx(base * std::pow(alpha, 4.0)).epsilon(1e-10));
}

namespace {

PooledBundle onehot_pooled(std::size_t b) {
  // d_c = 3; every embedding one-hot encodes its own source kind
  PooledBundle p;
  auto block = [&](int hot) {
    std::vector<double> v(b * 3, 0.0);
    for (std::size_t i = 0; i < b; ++i) v[i * 3 + hot] = 1.0;
    return Tensor::from_data({b, 3}, v);
  };
  for (int m = 0; m < 3; ++m) {
    p.common[m] = block(0);
    p.priv[m] = block(2);
  }
  for (int i = 0; i < 3; ++i) {
    p.pair_first[i] = block(1);
    p.pair_second[i] = block(1);
  }
  return p;
}

SupervisorNet scaled_identity_supervisor(double scale) {
  // fc1 = scale * I (3x3), fc2 = I: logits = gelu(scale * onehot) which puts
  // a large logit on the true class when scale is large.
  SupervisorNet net;
  std::vector<double> w1(9, 0.0), w2(9, 0.0);
  for (int i = 0; i < 3; ++i) {
    w1[i * 3 + i] = scale;
    w2[i * 3 + i] = 1.0;
  }
  net.fc1.weight = Tensor::from_data({3, 3}, w1, true);
  net.fc1.bias = Tensor::zeros({3}, true);
  net.fc2.weight = Tensor::from_data({3, 3}, w2, true);
  net.fc2.bias = Tensor::zeros({3}, true);
  return net;
}

}  // namespace

TEST_CASE("supervisor_loss: uniform supervisor gives 4 log 3") {
  Rng rng(10);
  SupervisorNet net = SupervisorNet::init(3, 3, rng);
  net.fc2.weight.update_data(std::vector<double>(9, 0.0));
  net.fc2.bias.update_data({0, 0, 0});
  PooledBundle p = onehot_pooled(4);
  const double loss = supervisor_loss(p, net).item();
  CHECK(loss == doctest::Approx(4.0 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("supervisor_loss: perfect supervisor gives 0") {
  SupervisorNet net = scaled_identity_supervisor(500.0);
  PooledBundle p = onehot_pooled(3);
  CHECK(supervisor_loss(p, net).item() == doctest::Approx(0.0));
}

TEST_CASE("supervisor_loss decreases as the supervisor grows more confident") {
  PooledBundle p = onehot_pooled(2);
  const double weak = supervisor_loss(p, scaled_identity_supervisor(1.0)).item();
  const double strong = supervisor_loss(p, scaled_identity_supervisor(3.0)).item();
  CHECK(strong < weak);
}

TEST_CASE("supervisor_loss equals a direct cross-entropy oracle") {
  Rng rng(11);
  SupervisorNet net = SupervisorNet::init(5, 5, rng);
  PooledBundle p = zero_pooled(3, 5);
  for (int m = 0; m < 3; ++m) {
    p.common[m] = Tensor::randn({3, 5}, rng);
    p.priv[m] = Tensor::randn({3, 5}, rng);
  }
  for (int i = 0; i < 3; ++i) {
    p.pair_first[i] = Tensor::randn({3, 5}, rng);
    p.pair_second[i] = Tensor::randn({3, 5}, rng);
  }
  const double ours = supervisor_loss(p, net).item();

  // direct: per Eq.-7 structure, -(1/M) sum_m [mean_b log D_com(c_m) +
  // sum_{n != m} mean_b log D_sub(s_mn^(m)) + mean_b log D_pri(p_m)]
  auto mean_log = [&](const Tensor& emb, int kind) {
    Tensor probs = supervisor_forward(net, emb);
    double acc = 0.0;
    for (std::size_t i = 0; i < emb.extent(0); ++i)
      acc += std::log(std::max(probs.at({i, static_cast<std::size_t>(kind)}), 1e-12));
    return acc / static_cast<double>(emb.extent(0));
  };
  double total = 0.0;
  for (int m = 0; m < 3; ++m) {
    double bracket = mean_log(p.common[m], 0);
    for (int pi = 0; pi < 3; ++pi) {
      if (!pair_contains(pi, static_cast<Modality>(m))) continue;
      bracket += mean_log(p.directional(pi, static_cast<Modality>(m)), 1);
    }
    bracket += mean_log(p.priv[m], 2);
    total += bracket;
  }
  const double reference = -total / 3.0;
  CHECK(ours == doctest::Approx(reference).epsilon(1e-12));
}

TEST_CASE("supervisor_loss is invariant under batch mixing") {
  Rng rng(12);
  SupervisorNet net = SupervisorNet::init(4, 4, rng);
  PooledBundle p = zero_pooled(2, 4);
  for (int m = 0; m < 3; ++m) {
    p.common[m] = Tensor::randn({2, 4}, rng);
    p.priv[m] = Tensor::randn({2, 4}, rng);
  }
  for (int i = 0; i < 3; ++i) {
    p.pair_first[i] = Tensor::randn({2, 4}, rng);
    p.pair_second[i] = Tensor::randn({2, 4}, rng);
  }
  const double plain = supervisor_loss(p, net).item();

  SupervisorLossOptions opts;
  std::vector<std::size_t> perm(24);
  for (std::size_t i = 0; i < 24; ++i) perm[i] = i;
  Rng shuffle_rng(99);
  shuffle_rng.shuffle(perm);
  opts.mix_perm = perm;
  const double mixed = supervisor_loss(p, net, opts).item();
  CHECK(mixed == doctest::Approx(plain).epsilon(1e-12));

  SupervisorLossOptions bad;
  bad.mix_perm = std::vector<std::size_t>{0, 1, 2};
  CHECK_THROWS_AS(supervisor_loss(p, net, bad), contract_error);
}

TEST_CASE("adversarial flag reverses encoder-side gradients only") {
  Rng rng(13);
  SupervisorNet net = SupervisorNet::init(4, 4, rng);
  PooledBundle build = zero_pooled(2, 4);
  Tensor emb = Tensor::randn({2, 4}, rng, true);
  for (int m = 0; m < 3; ++m) {
    build.common[m] = emb;
    build.priv[m] = emb;
  }
  for (int i = 0; i < 3; ++i) {
    build.pair_first[i] = emb;
    build.pair_second[i] = emb;
  }
  backward(supervisor_loss(build, net));
  std::vector<double> coop = emb.grad();
  emb.zero_grad();
  SupervisorLossOptions opts;
  opts.adversarial = true;
  backward(supervisor_loss(build, net, opts));
  for (std::size_t i = 0; i < coop.size(); ++i)
    CHECK(emb.grad()[i] == doctest::Approx(-coop[i]).epsilon(1e-12));
}

TEST_CASE("task_loss regression and classification") {
  Tensor label = Tensor::from_data({3}, {0.5, -1.0, 2.0});
  CHECK(task_loss(label, label, TaskMode::regression).item() == 0.0);

  Tensor pred = Tensor::from_data({1}, {0.0});
  Tensor lab = Tensor::from_data({1}, {2.0});
  CHECK(task_loss(pred, lab, TaskMode::regression).item() == doctest::Approx(4.0));

  // uniform logits over 20 classes -> log 20
  Tensor logits = Tensor::zeros({4, 20});
  Tensor classes = Tensor::from_data({4}, {0, 5, 19, 7});
  CHECK(task_loss(logits, classes, TaskMode::classification).item() ==
        doctest::Approx(std::log(20.0)).epsilon(1e-12));

  Tensor bad = Tensor::from_data({1}, {25.0});
  CHECK_THROWS_AS(task_loss(Tensor::zeros({1, 20}), bad, TaskMode::classification),
                  contract_error);
}

TEST_CASE("tri_subspace_loss and total_loss arithmetic") {
  LossWeights w;
  w.lambda1 = w.lambda2 = w.lambda3 = w.lambda4 = 0.0;
  Tensor com = Tensor::scalar(0.37);
  Tensor one = Tensor::scalar(1.0);
  CHECK(tri_subspace_loss(com, one, one, one, one, w).item() == 0.37);

  LossWeights unit;
  unit.lambda1 = unit.lambda2 = unit.lambda3 = unit.lambda4 = 1.0;
  Tensor ts = tri_subspace_loss(Tensor::scalar(1), Tensor::scalar(2), Tensor::scalar(3),
                                Tensor::scalar(4), Tensor::scalar(5), unit);
  CHECK(ts.item() == 15.0);

  CHECK(total_loss(Tensor::scalar(0), Tensor::scalar(0)).item() == 0.0);
  CHECK(total_loss(Tensor::scalar(1.5), Tensor::scalar(0.25)).item() == 1.75);

  LossWeights bad;
  bad.lambda2 = -0.5;
  CHECK_THROWS_AS(tri_subspace_loss(com, one, one, one, one, bad), config_error);
}

TEST_CASE("the exact l_ts identity holds as computed") {
  Rng rng(14);
  LossWeights w;
  w.lambda1 = 0.3;
  w.lambda2 = 0.07;
  w.lambda3 = 1.3;
  w.lambda4 = 0.11;
  for (int rep = 0; rep < 20; ++rep) {
    const double c = rng.normal(), p1 = rng.normal(), p2 = rng.normal(), p3 = rng.normal(),
                 p4 = rng.normal();
    Tensor ts = tri_subspace_loss(Tensor::scalar(c), Tensor::scalar(p1), Tensor::scalar(p2),
                                  Tensor::scalar(p3), Tensor::scalar(p4), w);
    const double expect = ((((c * 1.0) + w.lambda1 * p1) + w.lambda2 * p2) + w.lambda3 * p3) +
                          w.lambda4 * p4;
    CHECK(ts.item() == expect);  // bit-exact
  }
}

TEST_CASE("every loss is differentiable through a small network") {
  Rng rng(15);
  nn::LinearLayer l1 = nn::LinearLayer::init(3, 4, rng);
  nn::LinearLayer l2 = nn::LinearLayer::init(4, 4, rng);
  SupervisorNet net = SupervisorNet::init(4, 4, rng);
  Tensor x0 = Tensor::randn({2, 6, 3}, rng);

  auto bundle_from = [&](const Tensor& x) {
    Tensor h = nn::gelu(nn::linear_forward(l1, x));
    Tensor z = nn::linear_forward(l2, h);  // [2 x 6 x 4]
    SubspaceBundle b;
    for (int m = 0; m < 3; ++m) {
      b.common[m] = slice(z, 1, 0, 2);
      b.priv[m] = nn::sigmoid(slice(z, 1, 2, 2));
    }
    for (int p = 0; p < 3; ++p) {
      // directional members share the time extent of their source modality
      b.pair_first[p] = nn::sigmoid(slice(z, 1, 2, 2));
      b.pair_second[p] = nn::sigmoid(slice(z, 1, 4, 2));
      b.pair_concat[p] = concat({b.pair_first[p], b.pair_second[p]}, 1);
    }
    return b;
  };
  auto pooled_from = [&](const SubspaceBundle& b) {
    PooledBundle p;
    for (int m = 0; m < 3; ++m) {
      p.common[m] = pool(b.common[m]);
      p.priv[m] = pool(b.priv[m]);
    }
    for (int i = 0; i < 3; ++i) {
      p.pair_first[i] = pool(b.pair_first[i]);
      p.pair_second[i] = pool(b.pair_second[i]);
    }
    return p;
  };

  auto f_com = [&](const Tensor& x) { return common_consistency(pooled_from(bundle_from(x))); };
  CHECK(finite_diff_check(f_com, x0, 1e-5, 1e-4).pass);
  auto f_pair = [&](const Tensor& x) { return pairwise_collab(pooled_from(bundle_from(x))); };
  CHECK(finite_diff_check(f_pair, x0, 1e-5, 1e-4).pass);
  auto f_pri = [&](const Tensor& x) { return private_disparity(pooled_from(bundle_from(x))); };
  CHECK(finite_diff_check(f_pri, x0, 1e-5, 1e-4).pass);
  auto f_ort = [&](const Tensor& x) { return orthogonality(bundle_from(x)); };
  CHECK(finite_diff_check(f_ort, x0, 1e-5, 1e-4).pass);
  auto f_sup = [&](const Tensor& x) {
    return supervisor_loss(pooled_from(bundle_from(x)), net);
  };
  CHECK(finite_diff_check(f_sup, x0, 1e-5, 1e-4).pass);
}
