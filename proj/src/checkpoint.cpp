// SPDX-License-Identifier: Apache-2.0
#include "tsd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace tsd {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
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
      throw format_error(std::string("checkpoint: truncated reading ") + what + " at offset " +
                         std::to_string(pos));
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }

  double f64(const char* what) {
    if (pos + 8 > buf.size()) {
      throw format_error(std::string("checkpoint: truncated reading ") + what + " at offset " +
                         std::to_string(pos));
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw format_error(std::string("checkpoint: truncated reading ") + what + " at offset " +
                         std::to_string(pos));
    }
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<ParamSnapshot> snapshot_params(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  std::vector<ParamSnapshot> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back({name, t.shape(), t.values()});
  return out;
}

void write_checkpoint(const std::string& path, const std::vector<ParamSnapshot>& params) {
  std::string out = "TSDC";
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t e : p.shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : p.data) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw format_error("checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw format_error("checkpoint: short write to '" + path + "'");
}

std::vector<ParamSnapshot> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("checkpoint: cannot open '" + path + "' for reading");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || buf.compare(0, 4, "TSDC") != 0) {
    throw format_error("checkpoint: bad magic at offset 0 in '" + path + "'");
  }
  Reader r{buf, 4};
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw format_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32("n_params");
  std::vector<ParamSnapshot> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ParamSnapshot p;
    const std::uint32_t name_len = r.u32("name_len");
    p.name = r.bytes(name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      p.shape.push_back(r.u32("dim"));
      count *= p.shape.back();
    }
    p.data.reserve(count);
    for (std::size_t k = 0; k < count; ++k) p.data.push_back(r.f64("payload"));
    out.push_back(std::move(p));
  }
  if (r.pos != buf.size()) {
    throw format_error("checkpoint: trailing bytes after payload in '" + path + "'");
  }
  return out;
}

void restore_params(const std::vector<std::pair<std::string, Tensor>>& params,
                    const std::vector<ParamSnapshot>& snapshot) {
  std::map<std::string, const ParamSnapshot*> by_name;
  for (const auto& p : snapshot) by_name[p.name] = &p;
  for (const auto& [name, tensor] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw format_error("checkpoint: missing parameter '" + name + "'");
    }
    if (it->second->shape != tensor.shape()) {
      throw format_error("checkpoint: shape mismatch for '" + name + "': file has " +
                         shape_str(it->second->shape) + ", model has " +
                         shape_str(tensor.shape()));
    }
    const_cast<Tensor&>(tensor).update_data(it->second->data);
  }
}

}  // namespace tsd
