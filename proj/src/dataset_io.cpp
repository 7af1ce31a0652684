// SPDX-License-Identifier: Apache-2.0
#include "tsd/dataset_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace tsd {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  std::uint32_t u32(const char* what) {
    if (pos + 4 > buf.size()) {
      throw format_error(std::string("dataset: truncated while reading ") + what +
                         " at offset " + std::to_string(pos));
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }

  double f64(const char* what) {
    if (pos + 8 > buf.size()) {
      throw format_error(std::string("dataset: truncated while reading ") + what +
                         " at offset " + std::to_string(pos));
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
};

}  // namespace

void write_dataset(const std::string& path, const Dataset& data) {
  std::string out;
  out.reserve(24 + data.n_samples * 64);
  out += "TSD1";
  put_u32(out, Dataset::kVersion);
  put_u32(out, static_cast<std::uint32_t>(data.n_samples));
  put_u32(out, data.label_mode == TaskMode::regression ? 0u : 1u);
  put_u32(out, data.n_classes);
  for (int m = 0; m < 3; ++m) {
    put_u32(out, data.t[m]);
    put_u32(out, data.d[m]);
  }
  for (std::size_t i = 0; i < data.n_samples; ++i) {
    for (int m = 0; m < 3; ++m) {
      const std::size_t block = static_cast<std::size_t>(data.t[m]) * data.d[m];
      for (std::size_t k = 0; k < block; ++k) put_f64(out, data.payload[m][i * block + k]);
    }
    if (data.label_mode == TaskMode::regression) {
      put_f64(out, data.labels_reg[i]);
    } else {
      put_u32(out, data.labels_cls[i]);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw format_error("dataset: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw format_error("dataset: short write to '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("dataset: cannot open '" + path + "' for reading");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || buf.compare(0, 4, "TSD1") != 0) {
    throw format_error("dataset: bad magic at offset 0 in '" + path + "' (expected \"TSD1\")");
  }
  Reader r{buf, 4};
  const std::uint32_t version = r.u32("version");
  if (version != Dataset::kVersion) {
    throw format_error("dataset: unsupported version " + std::to_string(version));
  }
  Dataset out;
  out.n_samples = r.u32("n_samples");
  const std::uint32_t mode = r.u32("label_mode");
  if (mode > 1) throw format_error("dataset: invalid label_mode " + std::to_string(mode));
  out.label_mode = mode == 0 ? TaskMode::regression : TaskMode::classification;
  out.n_classes = r.u32("n_classes");
  std::size_t sample_bytes = 0;
  for (int m = 0; m < 3; ++m) {
    out.t[m] = r.u32("T");
    out.d[m] = r.u32("d");
    sample_bytes += static_cast<std::size_t>(out.t[m]) * out.d[m] * 8;
  }
  sample_bytes += out.label_mode == TaskMode::regression ? 8 : 4;

  const std::size_t expected = r.pos + sample_bytes * out.n_samples;
  if (buf.size() != expected) {
    throw format_error("dataset: length mismatch in '" + path + "': header implies " +
                       std::to_string(expected) + " bytes, file has " +
                       std::to_string(buf.size()));
  }

  for (int m = 0; m < 3; ++m) {
    out.payload[m].reserve(out.n_samples * static_cast<std::size_t>(out.t[m]) * out.d[m]);
  }
  if (out.label_mode == TaskMode::regression) {
    out.labels_reg.reserve(out.n_samples);
  } else {
    out.labels_cls.reserve(out.n_samples);
  }
  for (std::size_t i = 0; i < out.n_samples; ++i) {
    for (int m = 0; m < 3; ++m) {
      const std::size_t block = static_cast<std::size_t>(out.t[m]) * out.d[m];
      for (std::size_t k = 0; k < block; ++k) out.payload[m].push_back(r.f64("payload"));
    }
    if (out.label_mode == TaskMode::regression) {
      out.labels_reg.push_back(r.f64("label"));
    } else {
      out.labels_cls.push_back(r.u32("label"));
    }
  }
  return out;
}

Split make_splits(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r <= 0.0) throw contract_error("make_splits: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw contract_error("make_splits: ratios must sum to 1, got " + std::to_string(sum));
  }
  if (n < 3) throw contract_error("make_splits: need at least one sample per split");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).derive(hash_name("splits"));
  rng.shuffle(order);

  const auto boundary = [&](double cum) {
    return static_cast<std::size_t>(std::llround(cum * static_cast<double>(n)));
  };
  const std::size_t b1 = boundary(ratios[0]);
  const std::size_t b2 = boundary(ratios[0] + ratios[1]);

  Split s;
  s.train.assign(order.begin(), order.begin() + b1);
  s.validation.assign(order.begin() + b1, order.begin() + b2);
  s.test.assign(order.begin() + b2, order.end());
  if (s.train.empty() || s.validation.empty() || s.test.empty()) {
    throw contract_error("make_splits: a split came out empty; adjust ratios or n");
  }
  return s;
}

std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& indices,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch) {
  if (batch_size < 2) throw contract_error("epoch_batches: batch_size must be >= 2");
  std::vector<std::size_t> order = indices;
  Rng rng = Rng(shuffle_seed).derive(hash_name("batches")).derive(epoch);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    if (len < 2) break;  // a singleton tail would break the HSIC contract
    out.emplace_back(order.begin() + start, order.begin() + start + len);
  }
  return out;
}

std::vector<std::vector<std::size_t>> eval_batches(const std::vector<std::size_t>& indices,
                                                   std::size_t batch_size) {
  if (batch_size < 1) throw contract_error("eval_batches: batch_size must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, indices.size() - start);
    out.emplace_back(indices.begin() + start, indices.begin() + start + len);
  }
  return out;
}

ModalityBatch assemble_batch(const Dataset& data, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw contract_error("assemble_batch: empty index list");
  ModalityBatch batch;
  const std::size_t b = idx.size();
  for (int m = 0; m < 3; ++m) {
    const std::size_t block = static_cast<std::size_t>(data.t[m]) * data.d[m];
    std::vector<double> vals(b * block);
    for (std::size_t i = 0; i < b; ++i) {
      if (idx[i] >= data.n_samples) throw contract_error("assemble_batch: index out of range");
      std::copy(data.payload[m].begin() + static_cast<std::ptrdiff_t>(idx[i] * block),
                data.payload[m].begin() + static_cast<std::ptrdiff_t>((idx[i] + 1) * block),
                vals.begin() + static_cast<std::ptrdiff_t>(i * block));
    }
    batch.x[m] = Tensor::from_data({b, data.t[m], data.d[m]}, std::move(vals));
  }
  std::vector<double> labels(b);
  for (std::size_t i = 0; i < b; ++i) {
    labels[i] = data.label_mode == TaskMode::regression
                    ? data.labels_reg[idx[i]]
                    : static_cast<double>(data.labels_cls[idx[i]]);
  }
  batch.labels = Tensor::from_data({b}, std::move(labels));
  return batch;
}

}  // namespace tsd
