// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "tsd/datagen.hpp"

using namespace tsd;

namespace {

// Test-side ordinary least squares R^2 (normal equations + Gaussian
// elimination), independent of the library's ridge implementation.
double ols_r2(const std::vector<double>& x, std::size_t n, std::size_t p,
              const std::vector<double>& y) {
  std::vector<double> xc(x), yc(y);
  for (std::size_t j = 0; j < p; ++j) {
    double mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += xc[i * p + j];
    mu /= n;
    for (std::size_t i = 0; i < n; ++i) xc[i * p + j] -= mu;
  }
  double ymu = 0;
  for (double v : yc) ymu += v;
  ymu /= n;
  double sst = 0;
  for (double& v : yc) {
    v -= ymu;
    sst += v * v;
  }
  std::vector<double> a(p * p, 0.0), b(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) a[j * p + k] += xc[i * p + j] * xc[i * p + k];
      b[j] += xc[i * p + j] * yc[i];
    }
  for (std::size_t j = 0; j < p; ++j) a[j * p + j] += 1e-9;
  // Gaussian elimination
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(a[r * p + col]) > std::abs(a[piv * p + col])) piv = r;
    for (std::size_t c2 = 0; c2 < p; ++c2) std::swap(a[col * p + c2], a[piv * p + c2]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < p; ++r) {
      const double f = a[r * p + col] / a[col * p + col];
      for (std::size_t c2 = col; c2 < p; ++c2) a[r * p + c2] -= f * a[col * p + c2];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t col = p; col-- > 0;) {
    for (std::size_t c2 = col + 1; c2 < p; ++c2) b[col] -= a[col * p + c2] * b[c2];
    b[col] /= a[col * p + col];
  }
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0;
    for (std::size_t j = 0; j < p; ++j) pred += xc[i * p + j] * b[j];
    sse += (yc[i] - pred) * (yc[i] - pred);
  }
  return 1.0 - sse / sst;
}

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.n_samples = 50;
  s.t = {3, 4, 5};
  s.d_raw = {6, 6, 6};
  s.dim_g = 2;
  s.dim_u = {2, 2, 2};
  s.dim_r = {2, 2, 2};
  s.noise_sigma = 0.1;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("noise-free g-only labels are recoverable from any single modality") {
  SyntheticSpec spec = tiny_spec();
  spec.n_samples = 400;
  // recovery needs the mixing maps injective: d_raw >= per-modality latent
  // width (g + two pair groups + private = 8 here)
  spec.d_raw = {8, 8, 8};
  spec.noise_sigma = 0.0;
  spec.w_g = 0.4;  // small weight keeps labels inside [-3, 3], no clipping
  spec.w_u = {0, 0, 0};
  spec.w_r = {0, 0, 0};
  SyntheticData synth = generate(spec);

  for (int m = 0; m < 3; ++m) {
    // time-mean features per sample
    const std::size_t dm = spec.d_raw[m], tm = spec.t[m];
    std::vector<double> feats(spec.n_samples * dm, 0.0);
    for (std::size_t i = 0; i < spec.n_samples; ++i)
      for (std::size_t tt = 0; tt < tm; ++tt)
        for (std::size_t j = 0; j < dm; ++j)
          feats[i * dm + j] += synth.dataset.payload[m][(i * tm + tt) * dm + j] / tm;
    const double r2 = ols_r2(feats, spec.n_samples, dm, synth.dataset.labels_reg);
    CAPTURE(m);
    CHECK(r2 > 0.99);
  }
}

TEST_CASE("u_lv-only labels are independent of r_a") {
  SyntheticSpec spec = tiny_spec();
  spec.n_samples = 1000;
  spec.w_g = 0.0;
  spec.w_u = {0.5, 0.0, 0.0};
  spec.w_r = {0, 0, 0};
  SyntheticData synth = generate(spec);
  const LatentLayout& lay = synth.layout;
  for (std::size_t j = 0; j < lay.r_dim[2]; ++j) {
    double sy = 0, sr = 0, syy = 0, srr = 0, syr = 0;
    const std::size_t n = spec.n_samples;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = synth.dataset.labels_reg[i];
      const double r = synth.latents[i * lay.total + lay.r_off[2] + j];
      sy += y;
      sr += r;
      syy += y * y;
      srr += r * r;
      syr += y * r;
    }
    const double cov = syr / n - (sy / n) * (sr / n);
    const double corr = cov / std::sqrt((syy / n - (sy / n) * (sy / n)) *
                                        (srr / n - (sr / n) * (sr / n)));
    CHECK(std::abs(corr) < 0.1);
  }
}

TEST_CASE("generation is bit-deterministic given the seed") {
  SyntheticSpec spec = tiny_spec();
  SyntheticData a = generate(spec);
  SyntheticData b = generate(spec);
  CHECK(a.dataset == b.dataset);
  CHECK(a.latents == b.latents);

  spec.seed += 1;
  SyntheticData c = generate(spec);
  CHECK(a.dataset.payload[0] != c.dataset.payload[0]);
}

TEST_CASE("labels stay within [-3, 3] and ground truth is linear when unclipped") {
  SyntheticSpec spec = tiny_spec();
  spec.n_samples = 300;
  SyntheticData synth = generate(spec);
  const LatentLayout& lay = synth.layout;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const double y = synth.dataset.labels_reg[i];
    CHECK(y >= -3.0);
    CHECK(y <= 3.0);
    double expect = 0.0;
    for (std::size_t k = 0; k < lay.total; ++k) expect += synth.latents[i * lay.total + k];
    expect = std::clamp(expect, -3.0, 3.0);
    CHECK(y == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("noise-free linear probe on the true latents is exact") {
  SyntheticSpec spec = tiny_spec();
  spec.n_samples = 200;
  spec.noise_sigma = 0.0;
  spec.label_noise = 0.0;
  spec.w_g = 0.2;
  spec.w_u = {0.1, 0.05, 0.0};
  spec.w_r = {0.05, 0.0, 0.1};
  SyntheticData synth = generate(spec);
  // MSE of the exact weighted sum against labels (clip rarely active at
  // these weights; skip clipped rows)
  const LatentLayout& lay = latent_layout(spec);
  double mse = 0.0;
  std::size_t used = 0;
  std::vector<double> w(lay.total, 0.0);
  for (std::size_t i = 0; i < lay.g_dim; ++i) w[lay.g_off + i] = spec.w_g;
  for (int p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < lay.u_dim[p]; ++i) w[lay.u_off[p] + i] = spec.w_u[p];
  for (int m = 0; m < 3; ++m)
    for (std::size_t i = 0; i < lay.r_dim[m]; ++i) w[lay.r_off[m] + i] = spec.w_r[m];
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    double pred = 0.0;
    for (std::size_t k = 0; k < lay.total; ++k) pred += w[k] * synth.latents[i * lay.total + k];
    if (pred <= -3.0 || pred >= 3.0) continue;
    const double diff = pred - synth.dataset.labels_reg[i];
    mse += diff * diff;
    ++used;
  }
  CHECK(used > 100);
  CHECK(mse / used < 1e-10);
}

TEST_CASE("class7 and intent label modes") {
  SyntheticSpec spec = tiny_spec();
  spec.label_kind = LabelKind::class7;
  SyntheticData synth = generate(spec);
  CHECK(synth.dataset.label_mode == TaskMode::classification);
  CHECK(synth.dataset.n_classes == 7);
  for (std::uint32_t c : synth.dataset.labels_cls) CHECK(c <= 6);

  spec.label_kind = LabelKind::intent;
  spec.n_classes = 5;
  SyntheticData intent = generate(spec);
  CHECK(intent.dataset.n_classes == 5);
  std::set<std::uint32_t> seen(intent.dataset.labels_cls.begin(),
                               intent.dataset.labels_cls.end());
  CHECK(seen.size() > 1);
  for (std::uint32_t c : intent.dataset.labels_cls) CHECK(c < 5);
}

TEST_CASE("dataset file round-trips bitwise") {
  SyntheticSpec spec = tiny_spec();
  SyntheticData synth = generate(spec);
  const std::string path = "/tmp/tsd_test_roundtrip.tsd1";
  write_dataset(path, synth.dataset);
  Dataset back = read_dataset(path);
  CHECK(back == synth.dataset);

  // byte-identical rewrite
  write_dataset(path + ".b", back);
  std::ifstream f1(path, std::ios::binary), f2(path + ".b", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove((path + ".b").c_str());
}

TEST_CASE("corrupted magic and truncation are format errors") {
  SyntheticSpec spec = tiny_spec();
  spec.n_samples = 4;
  SyntheticData synth = generate(spec);
  const std::string path = "/tmp/tsd_test_corrupt.tsd1";
  write_dataset(path, synth.dataset);

  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(1);
    f.put('X');
  }
  CHECK_THROWS_AS(read_dataset(path), format_error);

  write_dataset(path, synth.dataset);
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(all.data(), static_cast<std::streamsize>(all.size() - 5));
  }
  CHECK_THROWS_AS(read_dataset(path), format_error);
  std::remove(path.c_str());
}

TEST_CASE("empty dataset file is valid") {
  Dataset empty;
  empty.t = {3, 4, 5};
  empty.d = {2, 2, 2};
  const std::string path = "/tmp/tsd_test_empty.tsd1";
  write_dataset(path, empty);
  Dataset back = read_dataset(path);
  CHECK(back.n_samples == 0);
  CHECK(back == empty);
  std::remove(path.c_str());
}

TEST_CASE("make_splits sizes, determinism, coverage") {
  Split s = make_splits(10, {0.6, 0.2, 0.2}, 5);
  CHECK(s.train.size() == 6);
  CHECK(s.validation.size() == 2);
  CHECK(s.test.size() == 2);

  Split s2 = make_splits(10, {0.6, 0.2, 0.2}, 5);
  CHECK(s.train == s2.train);
  CHECK(s.validation == s2.validation);
  CHECK(s.test == s2.test);

  std::set<std::size_t> all;
  for (auto& part : {s.train, s.validation, s.test})
    for (std::size_t i : part) CHECK(all.insert(i).second);  // disjoint
  CHECK(all.size() == 10);                                    // covering

  CHECK_THROWS_AS(make_splits(10, {0.5, 0.2, 0.2}, 1), contract_error);
  CHECK_THROWS_AS(make_splits(2, {0.6, 0.2, 0.2}, 1), contract_error);
}

TEST_CASE("epoch_batches drops only sub-2 tails and reshuffles per epoch") {
  std::vector<std::size_t> idx(33);
  for (std::size_t i = 0; i < 33; ++i) idx[i] = i;

  auto batches = epoch_batches(idx, 16, 1, 0);
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].size() == 16);
  CHECK(batches[1].size() == 16);

  // 34 samples: the tail of 2 is kept
  idx.push_back(33);
  auto batches2 = epoch_batches(idx, 16, 1, 0);
  REQUIRE(batches2.size() == 3);
  CHECK(batches2[2].size() == 2);

  // multiset of emitted indices equals the split when nothing is dropped
  std::multiset<std::size_t> emitted;
  for (const auto& b : batches2)
    for (std::size_t i : b) emitted.insert(i);
  CHECK(emitted == std::multiset<std::size_t>(idx.begin(), idx.end()));

  // two epochs: same content, different order
  auto e1 = epoch_batches(idx, 16, 1, 1);
  auto e2 = epoch_batches(idx, 16, 1, 2);
  std::vector<std::size_t> flat1, flat2;
  for (const auto& b : e1) flat1.insert(flat1.end(), b.begin(), b.end());
  for (const auto& b : e2) flat2.insert(flat2.end(), b.begin(), b.end());
  CHECK(flat1 != flat2);
  std::sort(flat1.begin(), flat1.end());
  std::sort(flat2.begin(), flat2.end());
  CHECK(flat1 == flat2);

  CHECK_THROWS_AS(epoch_batches(idx, 1, 1, 0), contract_error);
}

TEST_CASE("assemble_batch shapes and labels") {
  SyntheticSpec spec = tiny_spec();
  SyntheticData synth = generate(spec);
  ModalityBatch batch = assemble_batch(synth.dataset, {0, 3, 7});
  CHECK(batch.x[0].shape() == Shape{3, 3, 6});
  CHECK(batch.x[1].shape() == Shape{3, 4, 6});
  CHECK(batch.x[2].shape() == Shape{3, 5, 6});
  CHECK(batch.labels.values()[1] == synth.dataset.labels_reg[3]);
  CHECK(batch.x[2].at({2, 4, 5}) ==
        synth.dataset.payload[2][(7 * 5 + 4) * 6 + 5]);
}
